use std::fs;
use std::path::Path;
use std::sync::Arc;

use vif_ancova::designs::DesignKind;
use vif_ancova::dgp::read_observed_csv;
use vif_ancova::montecarlo::{
    run_conditional_on_eps, run_conditional_on_z, run_unconditional, select_imbalanced_assignment,
    table1_report, total_variance_decomposition, Conditioning, Enumeration,
};
use vif_ancova::ols::{estimated_variance_adjusted, estimated_variance_unadjusted, r_squared_z_given_x, vif};
use vif_ancova::report::{CsvTable, Reportable, TextDocument};
use vif_ancova::{Assignment, DgpSpec, RngStream};

use crate::config::read_column;
use crate::{CliError, Outcome, ScenarioConfig};

fn document(kind: &str, config: &ScenarioConfig) -> TextDocument {
    let mut doc = TextDocument::new(kind);
    if let Some(seed) = config.seed {
        doc.integer("seed", seed as i64);
    }
    // The destination is left out so reports do not depend on where they are written.
    let mut echoed = config.clone();
    echoed.output.dir = None;
    doc.text("resolved_config", &echoed.to_toml());
    doc
}

pub fn table1(config: &ScenarioConfig) -> Result<Outcome, CliError> {
    let seed = config.seed()?;
    let spec = config.dgp_spec()?;
    let report = table1_report(&spec, config.replications.r, RngStream::new(seed))?;
    let mut text = document("table1", config);
    if report.degenerate {
        text.text("note", "degenerate: no covariate signal");
    }
    report.write_text(&mut text);
    let mut notes: Vec<String> = report
        .cells
        .iter()
        .map(|c| {
            format!(
                "{} {:<20} {:<20} observed={:.6e} reference={:.6e} tolerance={:.3e}  {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.regime.name(),
                c.column.name(),
                c.observed,
                c.reference,
                c.tolerance,
                c.claim
            )
        })
        .collect();
    if report.degenerate {
        notes.push("degenerate: no covariate signal".into());
    }
    notes.push(format!("{}/{} cells pass", report.passed(), report.cells.len()));
    Ok(Outcome {
        command: "table1",
        text,
        csv: report.to_csv_table(),
        passed: report.all_pass(),
        notes,
    })
}

pub fn vif_report(config: &ScenarioConfig) -> Result<Outcome, CliError> {
    let path = config
        .vif
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("vif needs a data file: pass --data PATH or set vif.data".into()))?;
    let file = fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let data = read_observed_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let v = vif(&data.z, &data.x)?;
    let r2 = r_squared_z_given_x(&data.z, &data.x)?;
    let adjusted = estimated_variance_adjusted(&data.y, &data.z, &data.x)?;
    let unadjusted = estimated_variance_unadjusted(&data.y, &data.z)?;

    let mut text = document("vif", config);
    text.section("vif")
        .integer("n", data.y.len() as i64)
        .integer("covariates", data.x.ncols() as i64)
        .number("vif", v)
        .number("r_squared_z_given_x", r2)
        .number("estimated_variance_adjusted", adjusted)
        .number("estimated_variance_unadjusted", unadjusted)
        .number("ratio", adjusted / unadjusted);
    let mut csv = CsvTable::new();
    csv.push("data", "all", "vif", v);
    csv.push("data", "all", "r_squared_z_given_x", r2);
    csv.push("data", "ancova", "estimated_variance", adjusted);
    csv.push("data", "unadjusted", "estimated_variance", unadjusted);
    Ok(Outcome {
        command: "vif",
        text,
        csv,
        passed: true,
        notes: vec![format!("vif = {v:.6}  r_squared = {r2:.6}")],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeChoice {
    Unconditional,
    ConditionalZ,
    ConditionalEps,
    DecompositionZ,
    DecompositionEps,
}

impl RegimeChoice {
    pub const NAMES: [&'static str; 5] = [
        "unconditional",
        "conditional-z",
        "conditional-eps",
        "decomposition-z",
        "decomposition-eps",
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('_', "-").as_str() {
            "unconditional" => Some(Self::Unconditional),
            "conditional-z" | "conditional-on-z" => Some(Self::ConditionalZ),
            "conditional-eps" | "conditional-on-eps" => Some(Self::ConditionalEps),
            "decomposition-z" | "decomposition-on-z" => Some(Self::DecompositionZ),
            "decomposition-eps" | "decomposition-on-eps" => Some(Self::DecompositionEps),
            _ => None,
        }
    }
}

/// Where the frozen assignment or error vector comes from.
#[derive(Debug, Clone, PartialEq)]
enum FreezeSource {
    Candidates(usize),
    Draw,
    File(String),
}

fn parse_freeze(s: &str) -> Result<FreezeSource, CliError> {
    if s == "draw" {
        return Ok(FreezeSource::Draw);
    }
    if let Some(n) = s.strip_prefix("candidates:") {
        return n
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(FreezeSource::Candidates)
            .ok_or_else(|| CliError::Config(format!("simulate.freeze_from: invalid candidate count '{n}'")));
    }
    if let Some(p) = s.strip_prefix("file:") {
        return Ok(FreezeSource::File(p.to_string()));
    }
    Err(CliError::Config(format!(
        "simulate.freeze_from: '{s}' (expected candidates:N, draw or file:PATH)"
    )))
}

/// Fills in defaults that depend on the regime so the echoed config is complete.
pub fn resolve_simulate(config: &mut ScenarioConfig) -> Result<RegimeChoice, CliError> {
    let name = config.simulate.regime.clone().ok_or_else(|| {
        CliError::Usage(format!(
            "simulate needs a regime: --regime {{{}}}",
            RegimeChoice::NAMES.join(",")
        ))
    })?;
    let regime = RegimeChoice::parse(&name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown regime '{name}': expected one of {}",
            RegimeChoice::NAMES.join(", ")
        ))
    })?;
    match regime {
        RegimeChoice::ConditionalZ => {
            if config.simulate.freeze_from.is_none() {
                config.simulate.freeze_from = Some(format!("candidates:{}", config.replications.candidates));
            }
        }
        RegimeChoice::ConditionalEps => {
            if config.simulate.freeze_from.is_none() {
                config.simulate.freeze_from = Some("draw".into());
            }
        }
        _ => {
            if config.simulate.freeze_from.is_some() {
                return Err(CliError::Config(format!(
                    "simulate.freeze_from: only applies to conditional regimes, not '{name}'"
                )));
            }
        }
    }
    if config.simulate.enumerate && regime != RegimeChoice::ConditionalEps {
        return Err(CliError::Config("simulate.enumerate: only applies to --regime conditional-eps".into()));
    }
    Ok(regime)
}

fn frozen_assignment(
    spec: &Arc<DgpSpec>,
    source: FreezeSource,
    stream: RngStream,
    text: &mut TextDocument,
) -> Result<Assignment, CliError> {
    match source {
        FreezeSource::Candidates(c) => {
            let chosen = select_imbalanced_assignment(spec, c, stream)?;
            text.section("frozen")
                .text("source", "imbalance heuristic")
                .integer("candidates", c as i64)
                .integer("candidate_index", chosen.candidate_index as i64);
            Ok(chosen.assignment)
        }
        FreezeSource::Draw => {
            let a = spec.sampler().draw(&mut stream.rng())?.assignment;
            text.section("frozen").text("source", "single draw");
            Ok(a)
        }
        FreezeSource::File(p) => {
            let z = read_column(Path::new(&p), "z")?;
            if z.len() != spec.n() {
                return Err(CliError::Config(format!("{p}: {} rows but dgp.n = {}", z.len(), spec.n())));
            }
            text.section("frozen").text("source", &format!("file:{p}"));
            Ok(Assignment::from_indicator(&z)?)
        }
    }
}

fn frozen_errors(
    spec: &Arc<DgpSpec>,
    source: FreezeSource,
    stream: RngStream,
    text: &mut TextDocument,
) -> Result<Vec<f64>, CliError> {
    match source {
        FreezeSource::Draw => {
            text.section("frozen").text("source", "single draw");
            Ok(spec.draw_errors(&mut stream.rng()))
        }
        FreezeSource::File(p) => {
            let e = read_column(Path::new(&p), "epsilon")?;
            if e.len() != spec.n() {
                return Err(CliError::Config(format!("{p}: {} rows but dgp.n = {}", e.len(), spec.n())));
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config(format!("{p}: non-finite epsilon")));
            }
            text.section("frozen").text("source", &format!("file:{p}"));
            Ok(e)
        }
        FreezeSource::Candidates(_) => Err(CliError::Config(
            "simulate.freeze_from: candidates:N selects an assignment; use draw or file:PATH for errors".into(),
        )),
    }
}

/// `config` must already have passed through [`resolve_simulate`].
pub fn simulate(config: &ScenarioConfig, regime: RegimeChoice) -> Result<Outcome, CliError> {
    let seed = config.seed()?;
    let spec = config.dgp_spec()?;
    let kinds = config.estimators()?;
    let root = RngStream::new(seed);
    let r = &config.replications;
    let mut text = document("simulate", config);
    let mut csv = CsvTable::new();
    let mut notes = Vec::new();
    let freeze = || parse_freeze(config.simulate.freeze_from.as_deref().unwrap_or("draw"));

    match regime {
        RegimeChoice::Unconditional => {
            let rep = run_unconditional(&spec, &kinds, r.r, root.substream(0))?;
            rep.write_text(&mut text);
            rep.write_csv(&mut csv);
        }
        RegimeChoice::ConditionalZ => {
            let z = frozen_assignment(&spec, freeze()?, root.substream(1), &mut text)?;
            let rep = run_conditional_on_z(&spec, &z, &kinds, r.r, root.substream(2))?;
            if let vif_ancova::montecarlo::ConditioningPayload::Assignment {
                imbalance,
                conditional_bias,
                ..
            } = &rep.payload
            {
                notes.push(format!("frozen Z = {z}"));
                notes.push(format!("imbalance = {imbalance:?}, conditional bias = {conditional_bias:.6}"));
            }
            rep.write_text(&mut text);
            rep.write_csv(&mut csv);
        }
        RegimeChoice::ConditionalEps => {
            let eps = frozen_errors(&spec, freeze()?, root.substream(3), &mut text)?;
            let mode = if config.simulate.enumerate {
                Enumeration::Require
            } else {
                Enumeration::Auto
            };
            let rep = run_conditional_on_eps(&spec, &eps, &kinds, r.r, mode, root.substream(4))?;
            if rep.exact {
                notes.push(format!("exact enumeration over {} assignments", rep.replications));
            }
            rep.write_text(&mut text);
            rep.write_csv(&mut csv);
        }
        RegimeChoice::DecompositionZ | RegimeChoice::DecompositionEps => {
            let conditioning = if regime == RegimeChoice::DecompositionZ {
                Conditioning::OnZ
            } else {
                Conditioning::OnEps
            };
            for (j, &k) in kinds.iter().enumerate() {
                let d = total_variance_decomposition(
                    &spec,
                    k,
                    r.r_outer,
                    r.r_inner,
                    conditioning,
                    root.substream(5).substream(j as u64),
                )?;
                notes.push(format!(
                    "{k}: gap = {:.3e} (se {:.3e}), {}",
                    d.gap,
                    d.se_gap,
                    if d.gap_within_band() { "within band" } else { "outside band" }
                ));
                d.write_text(&mut text);
                d.write_csv(&mut csv);
            }
        }
    }
    Ok(Outcome {
        command: "simulate",
        text,
        csv,
        passed: true,
        notes,
    })
}

pub fn rerand(config: &ScenarioConfig) -> Result<Outcome, CliError> {
    let seed = config.seed()?;
    let spec = config.dgp_spec()?;
    let DesignKind::Rerandomized { n1, threshold_a, .. } = spec.design().kind else {
        return Err(CliError::Config(format!(
            "design.kind = '{}': rerand needs a rerandomized design",
            config.design.kind
        )));
    };
    let root = RngStream::new(seed);
    let draw = spec.sampler().draw(&mut root.substream(0).rng())?;
    let metric = spec.sampler().metric().expect("rerandomized designs carry a metric");
    let balance = draw.balance.expect("rerandomized draws report their balance");

    let m = config.rerand.rate_draws;
    let mut rate_rng = root.substream(1).rng();
    let mut accepted = 0usize;
    for _ in 0..m {
        let a = vif_ancova::designs::complete_randomization(spec.n(), n1, &mut rate_rng)?;
        if metric.balance(&a)? <= threshold_a {
            accepted += 1;
        }
    }
    let rate = if m > 0 { accepted as f64 / m as f64 } else { f64::NAN };
    let imbalance = vif_ancova::estimators::covariate_imbalance(spec.x(), &draw.assignment)?;

    let mut text = document("rerand", config);
    text.section("rerand")
        .text("assignment", &draw.assignment.to_string())
        .number("balance", balance)
        .number("threshold_a", threshold_a)
        .integer("attempts_used", draw.attempts as i64)
        .numbers("imbalance", &imbalance)
        .integer("rate_draws", m as i64)
        .number("acceptance_rate", rate);
    let mut csv = CsvTable::new();
    csv.push("rerandomized", "assignment", "balance", balance);
    csv.push("rerandomized", "assignment", "attempts_used", draw.attempts as f64);
    csv.push("rerandomized", "design", "acceptance_rate", rate);
    Ok(Outcome {
        command: "rerand",
        text,
        csv,
        passed: true,
        notes: vec![format!(
            "accepted Z = {} with M = {balance:.6} after {} attempts; acceptance rate ~ {rate:.4}",
            draw.assignment, draw.attempts
        )],
    })
}
