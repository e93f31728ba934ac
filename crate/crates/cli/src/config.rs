//! Experiment configuration: schema, overrides and hashing.

use std::path::{Path, PathBuf};

use nldp_core::operator::QuadratureSpec;
use nldp_core::params::{
    CoefficientField, CoefficientKind, Exponents, Frame, KernelField, KernelKind, Point, ProblemParams, SourceField,
    SourceKind,
};
use nldp_core::solver::SolveConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA: &str = "nldp-config/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must equal `SCHEMA`.
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub constants: ConstantsSection,
    #[serde(default)]
    pub reglab: ReglabSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub inequalities: InequalitySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub exponents: Exponents,
    /// Shape of both kernels unless `kernel_tq` is given.
    #[serde(default = "gagliardo")]
    pub kernel: KernelKind,
    #[serde(default)]
    pub kernel_tq: Option<KernelKind>,
    #[serde(default = "unit_coefficient")]
    pub coefficient: CoefficientKind,
    #[serde(default = "one")]
    pub c_hat: f64,
    #[serde(default = "zero_source")]
    pub source: SourceKind,
    #[serde(default)]
    pub homogeneous: bool,
}

fn gagliardo() -> KernelKind {
    KernelKind::Gagliardo
}

fn unit_coefficient() -> CoefficientKind {
    CoefficientKind::Constant { value: 1.0 }
}

fn zero_source() -> SourceKind {
    SourceKind::Constant { value: 0.0 }
}

fn one() -> f64 {
    1.0
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ProblemParams, CliError> {
        let e = self.exponents;
        if !(e.n == 1 || e.n == 2) {
            return Err(CliError::Config(format!("dimension must be 1 or 2, got {}", e.n)));
        }
        let mut p = ProblemParams::model(e);
        p.kernel_sp = KernelField::with_kind(e.n, e.s, e.p, self.kernel.clone());
        p.kernel_tq = KernelField::with_kind(e.n, e.t, e.q, self.kernel_tq.clone().unwrap_or_else(|| self.kernel.clone()));
        p.coefficient = CoefficientField::new(self.coefficient.clone());
        p.c_hat = self.c_hat;
        p.source = SourceField { kind: self.source.clone(), frame: Frame::IDENTITY, factor: 1.0 };
        p.homogeneous = self.homogeneous;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    /// Defaults to `|B_1| / 2`.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReglabSection {
    pub center: Point,
    pub levels: usize,
    pub i_min: usize,
    /// Defaults to the finest resolvable level.
    pub i_max: Option<usize>,
    /// Grid-function sidecar to analyse instead of a fresh solve.
    pub input: Option<PathBuf>,
    pub resample_nodes: usize,
}

impl Default for ReglabSection {
    fn default() -> Self {
        Self { center: [0.0, 0.0], levels: 8, i_min: 0, i_max: None, input: None, resample_nodes: 1024 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Points as `[x]` or `[x, y]`.
    pub points: Vec<Vec<f64>>,
    /// Grid-function sidecar; the barrier times `amplitude` otherwise.
    pub input: Option<PathBuf>,
    pub amplitude: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { points: vec![vec![-0.5], vec![0.0], vec![0.5]], input: None, amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    /// `(lambda, mu)` pairs.
    pub contexts: Vec<[f64; 2]>,
    pub x0: Point,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self { contexts: vec![[2.0, 0.5], [0.5, 2.0], [1.0, 1.0]], x0: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalitySection {
    pub draws: u64,
    pub c2_draws: u64,
    /// Base points of the integrability checks (first coordinate).
    pub points: Vec<f64>,
}

impl Default for InequalitySection {
    fn default() -> Self {
        Self { draws: 1_000_000, c2_draws: 10_000, points: vec![0.0, 0.3, -0.55] }
    }
}

impl ExperimentConfig {
    /// Reads `path`, applies `key=value` overrides and validates the result.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut v: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(v).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.schema != SCHEMA {
            return Err(CliError::Config(format!("schema `{}` is not `{SCHEMA}`", cfg.schema)));
        }
        // relative input paths are taken from the config's directory
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.reglab.input, &mut cfg.eval.input].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(CliError::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON of everything but `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let v = serde_json::to_value(&c).expect("config serialises");
        let digest = Sha256::digest(nldp_core::io::to_string_fixed(&v).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sets a dotted `key` to `value`, read as JSON when it parses and as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("empty segment in override key `{key}`")));
        }
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(CliError::Config(format!("override `{key}`: `{part}` is not inside an object")));
            }
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_and_replace() {
        let mut v = json!({"problem": {"c_hat": 1.0}});
        apply_override(&mut v, "problem.c_hat=2.5").unwrap();
        apply_override(&mut v, "solve.nodes=64").unwrap();
        apply_override(&mut v, "solve.exterior={\"kind\":\"constant\",\"value\":0.3}").unwrap();
        apply_override(&mut v, "schema=nldp-config/1").unwrap();
        assert_eq!(v["problem"]["c_hat"], json!(2.5));
        assert_eq!(v["solve"]["nodes"], json!(64));
        assert_eq!(v["solve"]["exterior"]["value"], json!(0.3));
        assert_eq!(v["schema"], json!("nldp-config/1"));
        assert!(apply_override(&mut v, "novalue").is_err());
        assert!(apply_override(&mut v, "problem.c_hat.x=1").is_err());
    }
}
