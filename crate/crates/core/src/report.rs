//! Machine-readable output: a versioned TOML document or flat CSV rows.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::montecarlo::{DecompositionReport, EstimatedVarianceSummary, RegimeReport, Table1Report};

pub const FORMAT_NAME: &str = "vif-ancova-report";
pub const FORMAT_VERSION: u32 = 1;
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats `x` with 12 significant digits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0.0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let exponent: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..12).contains(&exponent) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exponent).max(1) as usize;
        format!("{:.*}", decimals, x)
    } else {
        sci
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Builder for the text report. Emits TOML, so it can be parsed back.
#[derive(Debug, Clone)]
pub struct TextDocument {
    buf: String,
}

impl TextDocument {
    pub fn new(kind: &str) -> Self {
        let mut doc = Self { buf: String::new() };
        doc.text("format", FORMAT_NAME);
        doc.integer("version", FORMAT_VERSION as i64);
        doc.text("kind", kind);
        doc
    }

    pub fn section(&mut self, name: &str) -> &mut Self {
        let _ = write!(self.buf, "\n[{name}]\n");
        self
    }

    pub fn number(&mut self, key: &str, x: f64) -> &mut Self {
        let _ = writeln!(self.buf, "{key} = {}", format_number(x));
        self
    }

    pub fn optional(&mut self, key: &str, x: Option<f64>) -> &mut Self {
        if let Some(x) = x {
            self.number(key, x);
        }
        self
    }

    pub fn integer(&mut self, key: &str, i: i64) -> &mut Self {
        let _ = writeln!(self.buf, "{key} = {i}");
        self
    }

    pub fn text(&mut self, key: &str, s: &str) -> &mut Self {
        let _ = writeln!(self.buf, "{key} = {}", quote(s));
        self
    }

    pub fn boolean(&mut self, key: &str, b: bool) -> &mut Self {
        let _ = writeln!(self.buf, "{key} = {b}");
        self
    }

    pub fn numbers(&mut self, key: &str, xs: &[f64]) -> &mut Self {
        let items: Vec<String> = xs.iter().map(|&x| format_number(x)).collect();
        let _ = writeln!(self.buf, "{key} = [{}]", items.join(", "));
        self
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Rows of `regime,estimator,statistic,value`.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    rows: Vec<[String; 4]>,
}

impl CsvTable {
    pub const HEADER: [&'static str; 4] = ["regime", "estimator", "statistic", "value"];

    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, regime: &str, estimator: &str, statistic: &str, value: f64) {
        self.rows.push([
            regime.to_string(),
            estimator.to_string(),
            statistic.to_string(),
            format_number(value),
        ]);
    }

    pub fn rows(&self) -> &[[String; 4]] {
        &self.rows
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::HEADER)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush().map_err(|e| crate::Error::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Anything that can be rendered in both output formats.
pub trait Reportable {
    fn kind(&self) -> &'static str;
    fn write_text(&self, doc: &mut TextDocument);
    fn write_csv(&self, table: &mut CsvTable);

    fn to_text(&self) -> String {
        let mut doc = TextDocument::new(self.kind());
        self.write_text(&mut doc);
        doc.finish()
    }

    fn to_csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new();
        self.write_csv(&mut t);
        t
    }
}

fn regime_text(r: &RegimeReport, doc: &mut TextDocument, prefix: &str) {
    let base = format!("{prefix}{}", r.regime.name());
    doc.section(&base)
        .integer("replications", r.replications as i64)
        .boolean("exact", r.exact)
        .optional("mean_vif", r.mean_vif);
    match &r.payload {
        crate::montecarlo::ConditioningPayload::None => {}
        crate::montecarlo::ConditioningPayload::Assignment {
            assignment,
            imbalance,
            conditional_bias,
        } => {
            doc.text("frozen_assignment", &assignment.to_string())
                .numbers("imbalance", imbalance)
                .number("conditional_bias", *conditional_bias);
        }
        crate::montecarlo::ConditioningPayload::Errors(eps) => {
            doc.numbers("frozen_errors", eps);
        }
    }
    for s in &r.estimators {
        doc.section(&format!("{base}.estimators.{}", s.kind.name()))
            .number("mean", s.mean)
            .number("variance", s.variance)
            .number("se_mean", s.se_mean)
            .number("se_variance", s.se_variance);
        if let Some(a) = r.analytic(s.kind) {
            doc.optional("analytic_mean", a.mean)
                .optional("analytic_variance", a.variance);
        }
    }
    for g in &r.gaps {
        doc.section(&format!("{base}.gaps.{}_minus_{}", g.first.name(), g.second.name()))
            .number("difference", g.difference)
            .number("se", g.se);
    }
}

fn regime_csv(r: &RegimeReport, t: &mut CsvTable) {
    let regime = r.regime.name();
    for s in &r.estimators {
        let e = s.kind.name();
        t.push(regime, e, "mean", s.mean);
        t.push(regime, e, "variance", s.variance);
        t.push(regime, e, "se_mean", s.se_mean);
        t.push(regime, e, "se_variance", s.se_variance);
        if let Some(a) = r.analytic(s.kind) {
            if let Some(m) = a.mean {
                t.push(regime, e, "analytic_mean", m);
            }
            if let Some(v) = a.variance {
                t.push(regime, e, "analytic_variance", v);
            }
        }
    }
    for g in &r.gaps {
        let pair = format!("{}_minus_{}", g.first.name(), g.second.name());
        t.push(regime, &pair, "variance_gap", g.difference);
        t.push(regime, &pair, "se_variance_gap", g.se);
    }
    if let Some(v) = r.mean_vif {
        t.push(regime, "all", "mean_vif", v);
    }
}

impl Reportable for RegimeReport {
    fn kind(&self) -> &'static str {
        "simulate"
    }

    fn write_text(&self, doc: &mut TextDocument) {
        regime_text(self, doc, "regime.");
    }

    fn write_csv(&self, table: &mut CsvTable) {
        regime_csv(self, table);
    }
}

impl Reportable for DecompositionReport {
    fn kind(&self) -> &'static str {
        "decomposition"
    }

    fn write_text(&self, doc: &mut TextDocument) {
        doc.section(&format!("decomposition.{}.{}", self.conditioning.name(), self.estimator.name()))
            .integer("outer_replications", self.outer_replications as i64)
            .integer("inner_replications", self.inner_replications as i64)
            .number("outer_variance", self.outer_variance)
            .number("se_outer_variance", self.se_outer_variance)
            .number("mean_inner_variance", self.mean_inner_variance)
            .number("se_mean_inner_variance", self.se_mean_inner_variance)
            .number("variance_of_inner_mean", self.variance_of_inner_mean)
            .number("se_variance_of_inner_mean", self.se_variance_of_inner_mean)
            .number("gap", self.gap)
            .number("se_gap", self.se_gap)
            .optional("analytic_variance_of_inner_mean", self.analytic_variance_of_inner_mean)
            .boolean("gap_within_band", self.gap_within_band());
    }

    fn write_csv(&self, t: &mut CsvTable) {
        let regime = format!("decomposition_{}", self.conditioning.name());
        let e = self.estimator.name();
        t.push(&regime, e, "outer_variance", self.outer_variance);
        t.push(&regime, e, "se_outer_variance", self.se_outer_variance);
        t.push(&regime, e, "mean_inner_variance", self.mean_inner_variance);
        t.push(&regime, e, "variance_of_inner_mean", self.variance_of_inner_mean);
        t.push(&regime, e, "gap", self.gap);
        t.push(&regime, e, "se_gap", self.se_gap);
    }
}

impl Reportable for EstimatedVarianceSummary {
    fn kind(&self) -> &'static str {
        "estimated_variance"
    }

    fn write_text(&self, doc: &mut TextDocument) {
        doc.section("estimated_variance_ratio")
            .integer("replications", self.replications as i64)
            .number("mean", self.mean)
            .number("median", self.median)
            .number("lower_quartile", self.lower_quartile)
            .number("upper_quartile", self.upper_quartile)
            .number("fraction_below_one", self.fraction_below_one);
    }

    fn write_csv(&self, t: &mut CsvTable) {
        let (r, e) = ("estimated_variance", "ancova_over_unadjusted");
        t.push(r, e, "mean", self.mean);
        t.push(r, e, "median", self.median);
        t.push(r, e, "lower_quartile", self.lower_quartile);
        t.push(r, e, "upper_quartile", self.upper_quartile);
        t.push(r, e, "fraction_below_one", self.fraction_below_one);
    }
}

impl Reportable for Table1Report {
    fn kind(&self) -> &'static str {
        "table1"
    }

    fn write_text(&self, doc: &mut TextDocument) {
        doc.section("summary")
            .integer("replications", self.replications as i64)
            .number("covariate_signal", self.covariate_signal)
            .boolean("degenerate", self.degenerate)
            .integer("cells_passed", self.passed() as i64)
            .boolean("all_pass", self.all_pass())
            .integer("frozen_candidate_index", self.frozen.candidate_index as i64);
        for c in &self.cells {
            doc.section(&format!("cells.{}.{}", c.regime.name(), c.column.name()))
                .text("claim", c.claim)
                .number("observed", c.observed)
                .number("reference", c.reference)
                .number("tolerance", c.tolerance)
                .boolean("pass", c.pass);
        }
        for r in [&self.unconditional, &self.conditional_on_z, &self.conditional_on_eps] {
            regime_text(r, doc, "regime.");
        }
    }

    fn write_csv(&self, t: &mut CsvTable) {
        for c in &self.cells {
            let regime = format!("table1_{}", c.regime.name());
            let col = c.column.name();
            t.push(&regime, col, "observed", c.observed);
            t.push(&regime, col, "reference", c.reference);
            t.push(&regime, col, "tolerance", c.tolerance);
            t.push(&regime, col, "pass", if c.pass { 1.0 } else { 0.0 });
        }
        for r in [&self.unconditional, &self.conditional_on_z, &self.conditional_on_eps] {
            regime_csv(r, t);
        }
    }
}
