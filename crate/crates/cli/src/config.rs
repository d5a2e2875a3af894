//! Scenario configuration: TOML in, validated library objects out.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use vif_ancova::dgp::standard_covariates;
use vif_ancova::{DesignMatrix, DesignSpec, DgpSpec, ErrorDist, EstimatorKind};

use crate::CliError;

pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub dgp: DgpConfig,
    pub design: DesignConfig,
    #[serde(default)]
    pub replications: ReplicationConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub rerand: RerandConfig,
    #[serde(default)]
    pub vif: VifConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "one")]
    pub tau: f64,
    pub beta: Vec<f64>,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "normal")]
    pub errors: String,
    /// Covariate columns given inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
    /// CSV whose `x_*` columns are the covariates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default = "complete")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_attempts: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicationConfig {
    pub r: usize,
    pub r_outer: usize,
    pub r_inner: usize,
    pub candidates: usize,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            r: 10_000,
            r_outer: 300,
            r_inner: 300,
            candidates: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<String>,
    #[serde(default)]
    pub enumerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_from: Option<String>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            regime: None,
            estimators: default_estimators(),
            enumerate: false,
            freeze_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerandConfig {
    pub rate_draws: usize,
}

impl Default for RerandConfig {
    fn default() -> Self {
        Self { rate_draws: 10_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VifConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "text")]
    pub format: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            format: text(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn normal() -> String {
    "normal".into()
}

fn complete() -> String {
    "complete".into()
}

fn text() -> String {
    "text".into()
}

fn default_estimators() -> Vec<String> {
    vec!["unadjusted".into(), "ancova".into()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {}", e.message())))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Self::parse(DEFAULT_CONFIG),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("seed: missing; set `seed` in the config or pass --seed".into()))
    }

    pub fn format(&self) -> Result<Format, CliError> {
        match self.output.format.as_str() {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            other => Err(CliError::Config(format!(
                "output.format: unknown format '{other}' (expected text or csv)"
            ))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn estimators(&self) -> Result<Vec<EstimatorKind>, CliError> {
        if self.simulate.estimators.is_empty() {
            return Err(CliError::Config("simulate.estimators: at least one estimator is required".into()));
        }
        self.simulate
            .estimators
            .iter()
            .map(|s| {
                s.parse::<EstimatorKind>()
                    .map_err(|_| CliError::Config(format!("simulate.estimators: unknown estimator '{s}'")))
            })
            .collect()
    }

    fn covariates(&self) -> Result<DesignMatrix, CliError> {
        let n = self.dgp.n;
        let k = self.dgp.beta.len();
        match (&self.dgp.x, &self.dgp.x_file) {
            (Some(_), Some(_)) => Err(CliError::Config("dgp.x and dgp.x_file are mutually exclusive".into())),
            (Some(cols), None) => {
                if cols.len() != k {
                    return Err(CliError::Config(format!(
                        "dgp.x: {} columns but dgp.beta has {k} entries",
                        cols.len()
                    )));
                }
                if let Some(c) = cols.iter().find(|c| c.len() != n) {
                    return Err(CliError::Config(format!("dgp.x: column of length {} but dgp.n = {n}", c.len())));
                }
                DesignMatrix::from_columns(cols).map_err(|e| CliError::Config(format!("dgp.x: {e}")))
            }
            (None, Some(path)) => {
                let file = fs::File::open(path)
                    .map_err(|e| CliError::Config(format!("dgp.x_file {}: {e}", path.display())))?;
                let x = read_x_columns(file).map_err(|e| CliError::Config(format!("dgp.x_file: {e}")))?;
                if x.nrows() != n || x.ncols() != k {
                    return Err(CliError::Config(format!(
                        "dgp.x_file: {}x{} covariates but dgp.n = {n} and dgp.beta has {k} entries",
                        x.nrows(),
                        x.ncols()
                    )));
                }
                Ok(x)
            }
            (None, None) => {
                if n < k + 2 {
                    return Err(CliError::Config(format!("dgp.n = {n}: need at least {} units", k + 2)));
                }
                standard_covariates(n, k).map_err(CliError::from)
            }
        }
    }

    pub fn design_spec(&self) -> Result<DesignSpec, CliError> {
        let n = self.dgp.n;
        let n1 = |d: &DesignConfig| -> Result<usize, CliError> {
            let n1 = d.n1.ok_or_else(|| CliError::Config("design.n1: required for this design".into()))?;
            if n1 == 0 || n1 >= n {
                return Err(CliError::Config(format!(
                    "design.n1 = {n1} is invalid: need 1 <= n1 <= n - 1 = {}",
                    n.saturating_sub(1)
                )));
            }
            Ok(n1)
        };
        let d = &self.design;
        match d.kind.as_str() {
            "complete" => DesignSpec::complete(n, n1(d)?).map_err(|e| CliError::Config(format!("design: {e}"))),
            "bernoulli" => {
                let p = d.p.ok_or_else(|| CliError::Config("design.p: required for a bernoulli design".into()))?;
                if !(p > 0.0 && p < 1.0) {
                    return Err(CliError::Config(format!("design.p = {p} is invalid: need 0 < p < 1")));
                }
                DesignSpec::bernoulli(n, p).map_err(|e| CliError::Config(format!("design: {e}")))
            }
            "rerandomized" => {
                let a = d
                    .threshold_a
                    .ok_or_else(|| CliError::Config("design.threshold_a: required for a rerandomized design".into()))?;
                if !(a > 0.0) {
                    return Err(CliError::Config(format!("design.threshold_a = {a} is invalid: need a > 0")));
                }
                let max = d.max_attempts.unwrap_or(vif_ancova::designs::DEFAULT_MAX_ATTEMPTS);
                if max == 0 {
                    return Err(CliError::Config("design.max_attempts = 0 is invalid: need at least 1".into()));
                }
                DesignSpec::rerandomized(n, n1(d)?, a, max).map_err(|e| CliError::Config(format!("design: {e}")))
            }
            other => Err(CliError::Config(format!(
                "design.kind: unknown design '{other}' (expected complete, bernoulli or rerandomized)"
            ))),
        }
    }

    pub fn dgp_spec(&self) -> Result<Arc<DgpSpec>, CliError> {
        let g = &self.dgp;
        if !(g.sigma > 0.0) || !g.sigma.is_finite() {
            return Err(CliError::Config(format!("dgp.sigma = {} is invalid: need sigma > 0", g.sigma)));
        }
        let dist: ErrorDist = g
            .errors
            .parse()
            .map_err(|_| CliError::Config(format!("dgp.errors: unknown distribution '{}'", g.errors)))?;
        let design = self.design_spec()?;
        let x = self.covariates()?;
        let spec = DgpSpec::new(&x, g.alpha, g.tau, g.beta.clone(), g.sigma, dist, design)?;
        Ok(Arc::new(spec))
    }
}

/// Reads every `x_*` column of a headed CSV.
pub fn read_x_columns<R: std::io::Read>(r: R) -> Result<DesignMatrix, String> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let idx: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.trim().starts_with("x_"))
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err("no x_* columns".into());
    }
    let mut cols = vec![Vec::new(); idx.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        for (c, &i) in cols.iter_mut().zip(&idx) {
            let field = rec.get(i).unwrap_or("").trim();
            c.push(
                field
                    .parse::<f64>()
                    .map_err(|_| format!("row {}: cannot parse '{field}'", row + 2))?,
            );
        }
    }
    let labels = idx.iter().map(|&i| headers[i].trim().to_string()).collect();
    DesignMatrix::from_labelled_columns(&cols, labels).map_err(|e| e.to_string())
}

/// Reads one named numeric column of a headed CSV.
pub fn read_column(path: &Path, name: &str) -> Result<Vec<f64>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .clone();
    let i = headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::Config(format!("{}: missing column '{name}'", path.display())))?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let field = rec.get(i).unwrap_or("").trim();
        out.push(field.parse::<f64>().map_err(|_| {
            CliError::Config(format!("{}: row {}: cannot parse '{field}'", path.display(), row + 2))
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_resolves() {
        let c = ScenarioConfig::load(None).unwrap();
        assert!(c.seed.is_some());
        let spec = c.dgp_spec().unwrap();
        assert_eq!(spec.n(), 100);
        assert!((spec.covariate_signal() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn echo_round_trips() {
        let c = ScenarioConfig::load(None).unwrap();
        assert_eq!(ScenarioConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invalid_counts_name_the_field() {
        let mut c = ScenarioConfig::load(None).unwrap();
        c.design.n1 = Some(0);
        match c.dgp_spec() {
            Err(CliError::Config(m)) => assert!(m.contains("design.n1"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{DEFAULT_CONFIG}\n[extra]\nkey = 1\n");
        assert!(matches!(ScenarioConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_seed_is_an_error() {
        let mut c = ScenarioConfig::load(None).unwrap();
        c.seed = None;
        assert!(matches!(c.seed(), Err(CliError::Config(_))));
    }
}
