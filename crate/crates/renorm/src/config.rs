//! Run configuration: the JSON schema the pipeline and the command line
//! consume, with validation of parameter ranges and stage dependencies.

use crate::linalg::Mat;
use crate::space::NormKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Atlas,
    Polyhedral,
    Smooth,
    Lur,
    Verify,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
}

fn default_eps0() -> f64 {
    0.05
}

impl Default for BaseSpec {
    fn default() -> Self {
        BaseSpec { kind: "euclidean".into(), p: None, weights: None, eps0: default_eps0() }
    }
}

impl BaseSpec {
    pub fn norm_kind(&self, d: usize) -> Result<NormKind, ConfigError> {
        match self.kind.as_str() {
            "euclidean" => Ok(NormKind::Euclidean),
            "p" => {
                let p = self.p.ok_or_else(|| ConfigError::Invalid("p kind needs `p`".into()))?;
                if !(p > 1.0 && p.is_finite()) {
                    return Err(ConfigError::Invalid(format!("p must exceed 1, got {p}")));
                }
                Ok(NormKind::P { p })
            }
            "weighted" => {
                let w = self
                    .weights
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("weighted kind needs `weights`".into()))?;
                if w.len() != d {
                    return Err(ConfigError::Invalid(format!(
                        "weights length {} does not match d = {d}",
                        w.len()
                    )));
                }
                if w.iter().any(|x| !(*x > 0.0)) {
                    return Err(ConfigError::Invalid("weights must be positive".into()));
                }
                Ok(NormKind::Weighted { weights: w })
            }
            other => Err(ConfigError::Invalid(format!("unknown base norm kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LurSpec {
    #[serde(default = "default_lur_eps")]
    pub eps: f64,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    /// "smooth" composes over the smooth gauge; "base" over the working norm.
    #[serde(default = "default_ambient")]
    pub ambient: String,
}

fn default_lur_eps() -> f64 {
    0.1
}
fn default_truncation() -> usize {
    8
}
fn default_ambient() -> String {
    "smooth".into()
}

impl Default for LurSpec {
    fn default() -> Self {
        LurSpec { eps: default_lur_eps(), truncation: default_truncation(), ambient: default_ambient() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub d: usize,
    /// Basis columns in an external frame; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "E")]
    pub e: Option<Vec<Vec<f64>>>,
    /// Functional rows; inverse pairing of `E` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "Phi")]
    pub phi: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub base: BaseSpec,
    #[serde(default = "default_eps_global")]
    pub eps_global: f64,
    #[serde(default = "default_mesh_h")]
    pub mesh_h: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub lur: LurSpec,
    #[serde(default = "default_mesh_budget")]
    pub mesh_budget: usize,
    #[serde(default = "default_true")]
    pub budget_floor: bool,
    #[serde(default)]
    pub allow_random_mesh: bool,
    #[serde(default = "default_d_max")]
    pub d_max: usize,
    #[serde(default = "default_tolerance_scale")]
    pub tolerance_scale: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_eps_global() -> f64 {
    0.2
}
fn default_mesh_h() -> f64 {
    0.1
}
fn default_stages() -> Vec<Stage> {
    vec![Stage::Atlas, Stage::Polyhedral, Stage::Smooth, Stage::Lur, Stage::Verify]
}
fn default_mesh_budget() -> usize {
    4_000_000
}
fn default_true() -> bool {
    true
}
fn default_d_max() -> usize {
    4
}
fn default_tolerance_scale() -> f64 {
    1.0
}
fn default_out_dir() -> String {
    "out".into()
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{\"d\": 2}").expect("defaults parse")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.d == 0 || self.d > self.d_max {
            return Err(ConfigError::Invalid(format!(
                "d = {} outside [1, d_max = {}]",
                self.d, self.d_max
            )));
        }
        if !(self.eps_global > 0.0 && self.eps_global < 1.0) {
            return Err(ConfigError::Invalid("eps_global must lie in (0, 1)".into()));
        }
        if !(self.mesh_h > 0.0) {
            return Err(ConfigError::Invalid("mesh_h must be positive".into()));
        }
        if !(self.tolerance_scale > 0.0) {
            return Err(ConfigError::Invalid("tolerance_scale must be positive".into()));
        }
        if !(self.lur.eps > 0.0 && self.lur.eps < 1.0) {
            return Err(ConfigError::Invalid("lur.eps must lie in (0, 1)".into()));
        }
        self.base.norm_kind(self.d)?;
        if let Some(e) = &self.e {
            if e.len() != self.d || e.iter().any(|r| r.len() != self.d) {
                return Err(ConfigError::Invalid("E must be a d-by-d matrix".into()));
            }
        }
        if let Some(p) = &self.phi {
            if p.len() != self.d || p.iter().any(|r| r.len() != self.d) {
                return Err(ConfigError::Invalid("Phi must be a d-by-d matrix".into()));
            }
            if self.e.is_none() {
                return Err(ConfigError::Invalid("Phi given without E".into()));
            }
        }
        match self.lur.ambient.as_str() {
            "smooth" | "base" => {}
            other => {
                return Err(ConfigError::Invalid(format!("lur.ambient must be smooth|base, got {other:?}")))
            }
        }
        // stage dependencies
        let has = |s: &Stage| self.stages.contains(s);
        if (has(&Stage::Polyhedral) || has(&Stage::Smooth)) && !has(&Stage::Atlas) {
            return Err(ConfigError::Invalid("polyhedral/smooth stages need the atlas stage".into()));
        }
        if has(&Stage::Lur) && self.lur.ambient == "smooth" && !has(&Stage::Smooth) {
            return Err(ConfigError::Invalid(
                "lur with the smooth ambient needs the smooth stage (or set lur.ambient = \"base\")".into(),
            ));
        }
        Ok(())
    }

    pub fn e_matrix(&self) -> Option<Mat> {
        self.e.as_ref().map(|rows| Mat::from_rows(rows))
    }

    pub fn phi_matrix(&self) -> Option<Mat> {
        self.phi.as_ref().map(|rows| Mat::from_rows(rows))
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.d, 2);
        cfg.validate().unwrap();
        assert_eq!(cfg.stages.len(), 5);
    }

    #[test]
    fn p_must_exceed_one() {
        let err = RunConfig::from_json(r#"{"d": 2, "base": {"kind": "p", "p": 1.0}}"#);
        assert!(err.is_err());
        RunConfig::from_json(r#"{"d": 2, "base": {"kind": "p", "p": 4.0, "eps0": 0.05}}"#).unwrap();
    }

    #[test]
    fn stage_dependencies_are_enforced() {
        let err = RunConfig::from_json(r#"{"d": 2, "stages": ["smooth"]}"#);
        assert!(err.is_err());
        let err = RunConfig::from_json(r#"{"d": 2, "stages": ["atlas", "lur"]}"#);
        assert!(err.is_err());
        RunConfig::from_json(
            r#"{"d": 2, "stages": ["atlas", "lur"], "lur": {"ambient": "base"}}"#,
        )
        .unwrap();
        RunConfig::from_json(r#"{"d": 2, "stages": ["atlas"]}"#).unwrap();
    }

    #[test]
    fn skewed_system_matrices_validate_shape() {
        let cfg = RunConfig::from_json(
            r#"{"d": 2, "E": [[1.0, 1.0], [0.0, 1.0]], "base": {"kind": "euclidean", "eps0": 0.0}}"#,
        )
        .unwrap();
        assert!(cfg.e_matrix().is_some());
        assert!(RunConfig::from_json(r#"{"d": 2, "E": [[1.0]]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"d": 2, "Phi": [[1.0, 0.0], [0.0, 1.0]]}"#).is_err());
    }
}
