//! TOML run configuration: schema, parsing and resolution into the types the
//! simulation modules consume.
//!
//! Every block except `coefficients` and `initial` is optional. A minimal
//! document:
//!
//! ```toml
//! [coefficients]
//! lambda = 0.5
//! mu1 = 0.1
//! mu2 = 0.1
//! mu3 = 0.1
//! mu4 = 0.1
//! alpha = 0.8
//! beta = 0.2
//! gamma = 0.3
//! sigma = "0.4 + 0.1*cos(pi*x)"
//!
//! [initial]
//! s = 0.8
//! e = 0.05
//! i = 0.1
//! r = 0.05
//! ```

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::integrator::{ClampPolicy, PicardConfig, SchemeConfig, Study};
use crate::model::{CoefficientSet, State};
use crate::noise::NoiseSpec;
use crate::spectral::{DomainGrid, Field, SpectralBasis};

/// A configuration error tagged with the dotted path of the offending key.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Ensemble,
    Thresholds,
    Convergence,
    Picard,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Simulate, Mode::Ensemble, Mode::Thresholds, Mode::Convergence, Mode::Picard];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Ensemble => "ensemble",
            Mode::Thresholds => "thresholds",
            Mode::Convergence => "convergence",
            Mode::Picard => "picard",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// A constant or an expression in `x` (and `y` in 2D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Expression(String),
}

impl FieldSpec {
    /// Samples the field on the grid, rejecting non-finite or negative values.
    pub fn sample(&self, grid: &DomainGrid, path: &str) -> Result<Field, ConfigError> {
        let values: Vec<f64> = match self {
            FieldSpec::Constant(c) => vec![*c; grid.num_nodes()],
            FieldSpec::Expression(text) => {
                let expr = Expr::parse(text).map_err(|e| ConfigError::new(path, e.to_string()))?;
                if expr.uses_y() && grid.dimension() == 1 {
                    return Err(ConfigError::new(path, "`y` is only available in two dimensions"));
                }
                (0..grid.num_nodes())
                    .map(|j| {
                        let (x, y) = grid.node(j);
                        expr.eval(x, y)
                    })
                    .collect()
            }
        };
        for (node, &v) in values.iter().enumerate() {
            let (x, y) = grid.node(node);
            let at = if grid.dimension() == 1 {
                format!("node {node} (x = {x})")
            } else {
                format!("node {node} (x = {x}, y = {y})")
            };
            if !v.is_finite() {
                return Err(ConfigError::new(path, format!("non-finite value at {at}")));
            }
            if v < 0.0 {
                return Err(ConfigError::new(path, format!("negative value {v} at {at}")));
            }
        }
        Ok(Field::from_raw(values))
    }
}

fn default_dimension() -> usize {
    1
}

fn default_points() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            dimension: default_dimension(),
            points: default_points(),
        }
    }
}

fn default_diffusivity() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub lambda: FieldSpec,
    pub mu1: FieldSpec,
    pub mu2: FieldSpec,
    pub mu3: FieldSpec,
    pub mu4: FieldSpec,
    pub alpha: FieldSpec,
    pub beta: FieldSpec,
    pub gamma: FieldSpec,
    pub sigma: FieldSpec,
    #[serde(default = "default_diffusivity")]
    pub k1: f64,
    #[serde(default = "default_diffusivity")]
    pub k2: f64,
    #[serde(default = "default_diffusivity")]
    pub k3: f64,
    #[serde(default = "default_diffusivity")]
    pub k4: f64,
}

/// Per-compartment noise weights `a_k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightRule {
    #[default]
    Zero,
    /// Explicit `a_0, a_1, ..`, padded with zeros up to `modes`.
    List { values: Vec<f64> },
    /// `a_k = first * ratio^k`.
    Geometric { first: f64, ratio: f64 },
}

fn default_modes() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub s: WeightRule,
    #[serde(default)]
    pub e: WeightRule,
    #[serde(default)]
    pub i: WeightRule,
    #[serde(default)]
    pub r: WeightRule,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            modes: default_modes(),
            s: WeightRule::Zero,
            e: WeightRule::Zero,
            i: WeightRule::Zero,
            r: WeightRule::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampKind {
    #[default]
    Hard,
    Smooth,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_final() -> f64 {
    1.0
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeBlock {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default)]
    pub clamp: ClampKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

impl Default for SchemeBlock {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_final: default_t_final(),
            clamp: ClampKind::Hard,
            epsilon: None,
            record_every: default_record_every(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub s: FieldSpec,
    pub e: FieldSpec,
    pub i: FieldSpec,
    pub r: FieldSpec,
}

fn default_paths() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            mode: None,
            paths: default_paths(),
            seed: 0,
            output: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Dt,
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceBlock {
    pub study: StudyKind,
    /// Step sizes, coarsest first (`study = "dt"`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dt_levels: Vec<f64>,
    /// Truncation levels, smallest first (`study = "n"`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_levels: Vec<usize>,
}

fn default_horizon() -> f64 {
    0.1
}

fn default_substeps() -> usize {
    20
}

fn default_max_iterations() -> usize {
    50
}

fn default_tolerance() -> f64 {
    1e-12
}

fn default_reference_dt() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardBlock {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Step of the cross-check stepper; must divide `horizon / substeps`.
    #[serde(default = "default_reference_dt")]
    pub reference_dt: f64,
}

impl Default for PicardBlock {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            substeps: default_substeps(),
            max_iterations: default_max_iterations(),
            tolerance: default_tolerance(),
            reference_dt: default_reference_dt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: DomainConfig,
    pub coefficients: CoefficientsConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub scheme: SchemeBlock,
    pub initial: InitialConfig,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard: Option<PicardBlock>,
}

/// Parses a TOML document. Errors carry the path of the offending key.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("<document>", e.to_string()))?;
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::new(if path == "." { "<document>".to_string() } else { path }, inner.message().to_string())
    })?;
    config.resolve()?;
    Ok(config)
}

/// Module-level inputs built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: DomainGrid,
    pub basis: SpectralBasis,
    pub coeffs: CoefficientSet,
    pub noise: NoiseSpec,
    pub scheme: SchemeConfig,
    pub initial: State,
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serialises")
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let d = &self.domain;
        if d.dimension != 1 && d.dimension != 2 {
            return Err(ConfigError::new("domain.dimension", format!("must be 1 or 2, got {}", d.dimension)));
        }
        let grid = DomainGrid::new(d.dimension, d.points).map_err(|e| ConfigError::new("domain.points", e.to_string()))?;
        let basis = SpectralBasis::complete(&grid);

        let c = &self.coefficients;
        let field = |spec: &FieldSpec, name: &str| spec.sample(&grid, &format!("coefficients.{name}"));
        let mut diffusivity = [0.0; 4];
        for (k, value) in [c.k1, c.k2, c.k3, c.k4].into_iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ConfigError::new(
                    format!("coefficients.k{}", k + 1),
                    format!("diffusivity must be positive, got {value}"),
                ));
            }
            diffusivity[k] = value;
        }
        let coeffs = CoefficientSet {
            lambda: field(&c.lambda, "lambda")?,
            mu: [field(&c.mu1, "mu1")?, field(&c.mu2, "mu2")?, field(&c.mu3, "mu3")?, field(&c.mu4, "mu4")?],
            alpha: field(&c.alpha, "alpha")?,
            beta: field(&c.beta, "beta")?,
            gamma: field(&c.gamma, "gamma")?,
            sigma: field(&c.sigma, "sigma")?,
            diffusivity,
        };

        let n = &self.noise;
        if n.modes == 0 || n.modes > basis.num_modes() {
            return Err(ConfigError::new(
                "noise.modes",
                format!("must be between 1 and {}, got {}", basis.num_modes(), n.modes),
            ));
        }
        let mut weights: [Vec<f64>; 4] = Default::default();
        for (k, (name, rule)) in [("s", &n.s), ("e", &n.e), ("i", &n.i), ("r", &n.r)].into_iter().enumerate() {
            let path = format!("noise.{name}");
            let w = match rule {
                WeightRule::Zero => vec![0.0; n.modes],
                WeightRule::List { values } => {
                    if values.len() > n.modes {
                        return Err(ConfigError::new(
                            path,
                            format!("{} weights exceed the {} noise modes", values.len(), n.modes),
                        ));
                    }
                    let mut v = values.clone();
                    v.resize(n.modes, 0.0);
                    v
                }
                WeightRule::Geometric { first, ratio } => {
                    if !(*ratio >= 0.0) || !ratio.is_finite() {
                        return Err(ConfigError::new(path, format!("ratio must be nonnegative, got {ratio}")));
                    }
                    (0..n.modes).map(|k| first * ratio.powi(k as i32)).collect()
                }
            };
            if let Some((k, a)) = w.iter().enumerate().find(|(_, a)| !(**a >= 0.0) || !a.is_finite()) {
                return Err(ConfigError::new(path, format!("weight a_{k} = {a} must be finite and nonnegative")));
            }
            weights[k] = w;
        }
        let noise = NoiseSpec::new(weights).map_err(|e| ConfigError::new("noise", e.to_string()))?;

        let s = &self.scheme;
        let clamp = match (s.clamp, s.epsilon) {
            (ClampKind::Hard, None) => ClampPolicy::Hard,
            (ClampKind::Hard, Some(_)) => {
                return Err(ConfigError::new("scheme.epsilon", "only meaningful with clamp = \"smooth\""));
            }
            (ClampKind::Smooth, Some(epsilon)) if epsilon > 0.0 && epsilon.is_finite() => ClampPolicy::Smooth { epsilon },
            (ClampKind::Smooth, Some(epsilon)) => {
                return Err(ConfigError::new("scheme.epsilon", format!("must be positive, got {epsilon}")));
            }
            (ClampKind::Smooth, None) => {
                return Err(ConfigError::new("scheme.epsilon", "required with clamp = \"smooth\""));
            }
        };
        let scheme = SchemeConfig {
            dt: s.dt,
            t_final: s.t_final,
            clamp,
            record_every: s.record_every,
        };
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return Err(ConfigError::new("scheme.dt", format!("must be positive, got {}", s.dt)));
        }
        if !(s.t_final >= 0.0) || !s.t_final.is_finite() {
            return Err(ConfigError::new("scheme.t_final", format!("must be nonnegative, got {}", s.t_final)));
        }
        if s.record_every == 0 {
            return Err(ConfigError::new("scheme.record_every", "must be at least 1"));
        }

        let i = &self.initial;
        let initial = State::new(
            &grid,
            [
                i.s.sample(&grid, "initial.s")?,
                i.e.sample(&grid, "initial.e")?,
                i.i.sample(&grid, "initial.i")?,
                i.r.sample(&grid, "initial.r")?,
            ],
        )
        .map_err(|e| ConfigError::new("initial", e.to_string()))?;

        if self.run.paths == 0 {
            return Err(ConfigError::new("run.paths", "must be at least 1"));
        }
        if let Some(block) = &self.convergence {
            block.study()?;
        }
        if let Some(p) = &self.picard {
            p.picard_config()?;
        }

        Ok(Resolved {
            grid,
            basis,
            coeffs,
            noise,
            scheme,
            initial,
        })
    }
}

impl ConvergenceBlock {
    pub fn study(&self) -> Result<Study, ConfigError> {
        match self.study {
            StudyKind::Dt => {
                if !self.n_levels.is_empty() {
                    return Err(ConfigError::new("convergence.n_levels", "not used by a dt study"));
                }
                if self.dt_levels.len() < 2 {
                    return Err(ConfigError::new("convergence.dt_levels", "at least two levels are required"));
                }
                Ok(Study::TimeStep(self.dt_levels.clone()))
            }
            StudyKind::N => {
                if !self.dt_levels.is_empty() {
                    return Err(ConfigError::new("convergence.dt_levels", "not used by an n study"));
                }
                if self.n_levels.len() < 2 {
                    return Err(ConfigError::new("convergence.n_levels", "at least two levels are required"));
                }
                Ok(Study::Truncation(self.n_levels.clone()))
            }
        }
    }
}

impl PicardBlock {
    pub fn picard_config(&self) -> Result<PicardConfig, ConfigError> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(ConfigError::new("picard.horizon", format!("must be positive, got {}", self.horizon)));
        }
        if self.substeps == 0 {
            return Err(ConfigError::new("picard.substeps", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(ConfigError::new("picard.tolerance", format!("must be positive, got {}", self.tolerance)));
        }
        self.refinement()?;
        Ok(PicardConfig {
            horizon: self.horizon,
            substeps: self.substeps,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
        })
    }

    /// Number of reference steps per Picard substep.
    pub fn refinement(&self) -> Result<u64, ConfigError> {
        let coarse = self.horizon / self.substeps as f64;
        let r = (coarse / self.reference_dt).round();
        if !(self.reference_dt > 0.0) || r < 1.0 || (r * self.reference_dt - coarse).abs() > 1e-9 * coarse {
            return Err(ConfigError::new(
                "picard.reference_dt",
                format!("must divide the substep {coarse}, got {}", self.reference_dt),
            ));
        }
        Ok(r as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[coefficients]
lambda = 0.5
mu1 = 0.1
mu2 = 0.1
mu3 = 0.1
mu4 = 0.1
alpha = 0.8
beta = 0.2
gamma = 0.3
sigma = 0.4

[initial]
s = 0.8
e = 0.05
i = 0.1
r = 0.05
"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.scheme.dt, 1e-3);
        assert_eq!(cfg.noise.modes, 16);
        assert_eq!(cfg.domain.points, 64);
        assert_eq!(cfg.domain.dimension, 1);
        let r = cfg.resolve().unwrap();
        assert!(r.noise.is_zero());
        assert_eq!(r.coeffs.diffusivity, [0.01; 4]);
    }

    #[test]
    fn expression_coefficients() {
        let text = MINIMAL.replace("mu2 = 0.1", "mu2 = \"0.2 + 0.1*cos(pi*x)\"");
        let r = parse_config(&text).unwrap().resolve().unwrap();
        let mu2 = &r.coeffs.mu[1];
        assert!((mu2.min() - 0.1).abs() < 1e-15);
        assert!((mu2.values()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn negative_coefficient_names_path_and_node() {
        let text = MINIMAL.replace("mu2 = 0.1", "mu2 = -0.1");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.path, "coefficients.mu2");
        assert!(err.message.contains("node 0"), "{err}");
        let text = MINIMAL.replace("mu2 = 0.1", "mu2 = \"0.1 - x\"");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.path, "coefficients.mu2");
        assert!(err.message.contains("negative"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(&format!("{MINIMAL}\n[scheme]\ndtt = 0.1\n")).unwrap_err();
        assert!(err.path.starts_with("scheme"), "{err}");
        assert!(err.message.contains("dtt"), "{err}");
        let err = parse_config(&format!("{MINIMAL}\n[extra]\nx = 1\n")).unwrap_err();
        assert!(err.message.contains("extra"), "{err}");
        let err = parse_config(&format!("{MINIMAL}\n[noise]\ne = {{ kind = \"geometric\", first = 0.1, ratio = 0.5, bogus = 1 }}\n"))
            .unwrap_err();
        assert!(err.path.starts_with("noise.e"), "{err}");
    }

    #[test]
    fn noise_rules() {
        let text = format!(
            "{MINIMAL}\n[noise]\nmodes = 4\ns = {{ kind = \"list\", values = [0.1, 0.2] }}\ni = {{ kind = \"geometric\", first = 0.4, ratio = 0.5 }}\n"
        );
        let r = parse_config(&text).unwrap().resolve().unwrap();
        assert_eq!(r.noise.weights(0), &[0.1, 0.2, 0.0, 0.0]);
        assert_eq!(r.noise.weights(1), &[0.0; 4]);
        assert_eq!(r.noise.weights(2), &[0.4, 0.2, 0.1, 0.05]);
        let bad = format!("{MINIMAL}\n[noise]\nmodes = 1\ns = {{ kind = \"list\", values = [0.1, 0.2] }}\n");
        assert_eq!(parse_config(&bad).unwrap_err().path, "noise.s");
    }

    #[test]
    fn scheme_and_mode_validation() {
        let smooth = format!("{MINIMAL}\n[scheme]\nclamp = \"smooth\"\n");
        assert_eq!(parse_config(&smooth).unwrap_err().path, "scheme.epsilon");
        let ok = format!("{MINIMAL}\n[scheme]\nclamp = \"smooth\"\nepsilon = 0.01\n");
        assert_eq!(parse_config(&ok).unwrap().resolve().unwrap().scheme.clamp, ClampPolicy::Smooth { epsilon: 0.01 });
        let bad = format!("{MINIMAL}\n[run]\nmode = \"explode\"\n");
        assert!(parse_config(&bad).unwrap_err().path.starts_with("run.mode"));
        let y_in_1d = MINIMAL.replace("alpha = 0.8", "alpha = \"y\"");
        assert_eq!(parse_config(&y_in_1d).unwrap_err().path, "coefficients.alpha");
        let two_d = format!("{}\n[domain]\ndimension = 2\npoints = 8\n", MINIMAL.replace("alpha = 0.8", "alpha = \"x*y\""));
        assert_eq!(parse_config(&two_d).unwrap().resolve().unwrap().grid.num_nodes(), 64);
        let picard = format!("{MINIMAL}\n[picard]\nreference_dt = 0.003\n");
        assert_eq!(parse_config(&picard).unwrap_err().path, "picard.reference_dt");
    }

    #[test]
    fn toml_round_trip() {
        let text = format!(
            "{}\n[noise]\ne = {{ kind = \"geometric\", first = 0.1, ratio = 0.5 }}\n[run]\nmode = \"ensemble\"\npaths = 4\nseed = 7\n[convergence]\nstudy = \"dt\"\ndt_levels = [0.1, 0.05]\n",
            MINIMAL.replace("sigma = 0.4", "sigma = \"0.4 + 0.1*x\"")
        );
        let cfg = parse_config(&text).unwrap();
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }
}
