//! SEIRS state, coefficient fields, reaction drift, and the permanence and
//! extinction thresholds.

use thiserror::Error;

use crate::noise::NoiseSpec;
use crate::spectral::{DomainGrid, Field};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} has {got} values but the grid has {expected} nodes")]
    LengthMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("{name} is negative ({value}) at node {node}")]
    Negative { name: String, node: usize, value: f64 },
    #[error("{name} is not finite at node {node}")]
    NonFinite { name: String, node: usize },
    #[error("diffusivity k{index} must be positive, got {value}")]
    Diffusivity { index: usize, value: f64 },
}

/// The four compartments, in the order used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Compartment {
    Susceptible,
    Exposed,
    Infected,
    Recovered,
}

impl Compartment {
    pub const ALL: [Compartment; 4] = [
        Compartment::Susceptible,
        Compartment::Exposed,
        Compartment::Infected,
        Compartment::Recovered,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        ["S", "E", "I", "R"][self as usize]
    }
}

fn check_field(name: &str, field: &Field, nodes: usize) -> Result<(), ModelError> {
    if field.len() != nodes {
        return Err(ModelError::LengthMismatch {
            name: name.to_string(),
            expected: nodes,
            got: field.len(),
        });
    }
    for (node, &value) in field.values().iter().enumerate() {
        if !value.is_finite() {
            return Err(ModelError::NonFinite {
                name: name.to_string(),
                node,
            });
        }
        if value < 0.0 {
            return Err(ModelError::Negative {
                name: name.to_string(),
                node,
                value,
            });
        }
    }
    Ok(())
}

/// Population densities `(S, E, I, R)` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    fields: [Field; 4],
}

impl State {
    pub fn new(grid: &DomainGrid, fields: [Field; 4]) -> Result<Self, ModelError> {
        for (c, f) in Compartment::ALL.iter().zip(&fields) {
            check_field(c.symbol(), f, grid.num_nodes())?;
        }
        Ok(Self { fields })
    }

    pub fn constant(grid: &DomainGrid, values: [f64; 4]) -> Result<Self, ModelError> {
        Self::new(grid, values.map(|v| Field::constant(grid, v)))
    }

    pub(crate) fn from_fields_unchecked(fields: [Field; 4]) -> Self {
        Self { fields }
    }

    pub fn get(&self, c: Compartment) -> &Field {
        &self.fields[c.index()]
    }

    pub fn fields(&self) -> &[Field; 4] {
        &self.fields
    }

    pub(crate) fn fields_mut(&mut self) -> &mut [Field; 4] {
        &mut self.fields
    }

    pub fn into_fields(self) -> [Field; 4] {
        self.fields
    }

    pub fn num_nodes(&self) -> usize {
        self.fields[0].len()
    }

    /// Values of all four compartments at one node.
    pub fn at(&self, node: usize) -> [f64; 4] {
        [0, 1, 2, 3].map(|c| self.fields[c].values()[node])
    }

    pub fn min(&self) -> f64 {
        self.fields.iter().map(Field::min).fold(f64::INFINITY, f64::min)
    }

    /// Largest pointwise difference over all compartments and nodes.
    pub fn sup_distance(&self, other: &State) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .flat_map(|(a, b)| a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Spatially constant coefficients, expanded to fields by
/// [`CoefficientSet::homogeneous`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub lambda: f64,
    pub mu: [f64; 4],
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub diffusivity: [f64; 4],
}

impl Rates {
    /// All rates zero, unit-free diffusivities of 0.01.
    pub fn zero() -> Self {
        Self {
            lambda: 0.0,
            mu: [0.0; 4],
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            sigma: 0.0,
            diffusivity: [0.01; 4],
        }
    }
}

/// Coefficient fields `Lambda, mu1..mu4, alpha, beta, gamma, sigma` and the
/// diffusivities `k1..k4`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub lambda: Field,
    pub mu: [Field; 4],
    pub alpha: Field,
    pub beta: Field,
    pub gamma: Field,
    pub sigma: Field,
    pub diffusivity: [f64; 4],
}

impl CoefficientSet {
    pub fn homogeneous(grid: &DomainGrid, rates: &Rates) -> Result<Self, ModelError> {
        let c = |v: f64| Field::constant(grid, v);
        let set = Self {
            lambda: c(rates.lambda),
            mu: rates.mu.map(c),
            alpha: c(rates.alpha),
            beta: c(rates.beta),
            gamma: c(rates.gamma),
            sigma: c(rates.sigma),
            diffusivity: rates.diffusivity,
        };
        set.validate(grid)?;
        Ok(set)
    }

    pub fn named_fields(&self) -> [(&'static str, &Field); 9] {
        [
            ("lambda", &self.lambda),
            ("mu1", &self.mu[0]),
            ("mu2", &self.mu[1]),
            ("mu3", &self.mu[2]),
            ("mu4", &self.mu[3]),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("sigma", &self.sigma),
        ]
    }

    pub fn validate(&self, grid: &DomainGrid) -> Result<(), ModelError> {
        for (name, f) in self.named_fields() {
            check_field(name, f, grid.num_nodes())?;
        }
        for (index, &value) in self.diffusivity.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::Diffusivity {
                    index: index + 1,
                    value,
                });
            }
        }
        Ok(())
    }

    /// `mu_* = min_x min_i mu_i(x)`.
    pub fn mu_inf(&self) -> f64 {
        self.mu.iter().map(Field::min).fold(f64::INFINITY, f64::min)
    }
}

/// Standard incidence `alpha S I / (S + E + I + R)`, defined as zero whenever
/// `S = 0` or `I = 0`.
pub fn incidence(s: f64, e: f64, i: f64, r: f64, alpha: f64) -> f64 {
    if s == 0.0 || i == 0.0 {
        return 0.0;
    }
    alpha * s * i / (s + e + i + r)
}

/// Pointwise reaction terms `G(V)` at one node.
#[inline]
pub(crate) fn drift_at(v: [f64; 4], coeffs: &CoefficientSet, node: usize) -> [f64; 4] {
    let [s, e, i, r] = v;
    let at = |f: &Field| f.values()[node];
    let inc = incidence(s, e, i, r, at(&coeffs.alpha));
    let (beta, gamma, sigma) = (at(&coeffs.beta), at(&coeffs.gamma), at(&coeffs.sigma));
    [
        at(&coeffs.lambda) - at(&coeffs.mu[0]) * s - inc + beta * r,
        -at(&coeffs.mu[1]) * e + inc - sigma * e,
        -at(&coeffs.mu[2]) * i + sigma * e - gamma * i,
        -at(&coeffs.mu[3]) * r + gamma * i - beta * r,
    ]
}

/// Reaction drift `G(V)` as four signed fields.
pub fn reaction_drift(state: &State, coeffs: &CoefficientSet) -> Result<[Field; 4], ModelError> {
    let nodes = state.num_nodes();
    for (c, f) in Compartment::ALL.iter().zip(state.fields()) {
        check_field(c.symbol(), f, nodes)?;
    }
    for (name, f) in coeffs.named_fields() {
        if f.len() != nodes {
            return Err(ModelError::LengthMismatch {
                name: name.to_string(),
                expected: nodes,
                got: f.len(),
            });
        }
    }
    let mut out = [(); 4].map(|_| Vec::with_capacity(nodes));
    for node in 0..nodes {
        let g = drift_at(state.at(node), coeffs, node);
        for (o, v) in out.iter_mut().zip(g) {
            o.push(v);
        }
    }
    Ok(out.map(Field::from_raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictedRegime {
    PermanenceCandidate,
    Extinction,
    Indeterminate,
}

impl PredictedRegime {
    pub fn label(self) -> &'static str {
        match self {
            Self::PermanenceCandidate => "permanence-candidate",
            Self::Extinction => "extinction",
            Self::Indeterminate => "indeterminate",
        }
    }
}

/// Threshold quantities of the longtime-behaviour conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// `inf Lambda`.
    pub lambda_inf: f64,
    /// `int (alpha/2 - (mu2 + mu3 + gamma)) dx - a_tilde/2`.
    pub r_hat: f64,
    /// `max(a_2, a_3)`: the larger noise trace on E and I.
    pub a_tilde: f64,
    /// `inf (mu3 + gamma - alpha)`.
    pub infected_margin_inf: f64,
    /// `inf mu2`.
    pub mu2_inf: f64,
    /// `min(infected_margin_inf, mu2_inf)`, the guaranteed decay rate.
    pub extinction_rate: f64,
    /// Whether `alpha - gamma >= 0` at every node.
    pub alpha_dominates_gamma: bool,
    pub regime: PredictedRegime,
}

impl ThresholdReport {
    /// `(name, value)` rows in a fixed order, numbers rounded to 12
    /// significant digits so quadrature rounding does not show.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let num = |v: f64| {
            let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
            rounded.to_string()
        };
        vec![
            ("Lambda_inf", num(self.lambda_inf)),
            ("R_hat", num(self.r_hat)),
            ("a_tilde", num(self.a_tilde)),
            ("mu3_plus_gamma_minus_alpha_inf", num(self.infected_margin_inf)),
            ("mu2_inf", num(self.mu2_inf)),
            ("m", num(self.extinction_rate)),
            ("alpha_minus_gamma_nonnegative", self.alpha_dominates_gamma.to_string()),
            ("predicted_regime", self.regime.label().to_string()),
        ]
    }
}

/// Infima are minima over grid nodes; the integral uses the grid quadrature.
pub fn compute_thresholds(coeffs: &CoefficientSet, noise: &NoiseSpec, grid: &DomainGrid) -> ThresholdReport {
    let nodes = grid.num_nodes();
    let v = |f: &Field, j: usize| f.values()[j];
    let integrand: Vec<f64> = (0..nodes)
        .map(|j| v(&coeffs.alpha, j) / 2.0 - (v(&coeffs.mu[1], j) + v(&coeffs.mu[2], j) + v(&coeffs.gamma, j)))
        .collect();
    let a_tilde = noise.trace(1).max(noise.trace(2));
    let r_hat = grid.integrate(&integrand) - a_tilde / 2.0;
    let lambda_inf = coeffs.lambda.min();
    let infected_margin_inf = (0..nodes)
        .map(|j| v(&coeffs.mu[2], j) + v(&coeffs.gamma, j) - v(&coeffs.alpha, j))
        .fold(f64::INFINITY, f64::min);
    let mu2_inf = coeffs.mu[1].min();
    let alpha_dominates_gamma = (0..nodes).all(|j| v(&coeffs.alpha, j) - v(&coeffs.gamma, j) >= 0.0);
    let regime = if infected_margin_inf > 0.0 && mu2_inf > 0.0 {
        PredictedRegime::Extinction
    } else if lambda_inf > 0.0 && r_hat > 0.0 && alpha_dominates_gamma {
        PredictedRegime::PermanenceCandidate
    } else {
        PredictedRegime::Indeterminate
    };
    ThresholdReport {
        lambda_inf,
        r_hat,
        a_tilde,
        infected_margin_inf,
        mu2_inf,
        extinction_rate: infected_margin_inf.min(mu2_inf),
        alpha_dominates_gamma,
        regime,
    }
}

/// Measure fractions for one pointwise condition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConditionCheck {
    /// Fraction of the domain where the condition is defined and fails.
    pub violated: f64,
    /// Fraction of the domain where the condition is undefined.
    pub undefined: f64,
}

/// Pointwise running conditions for permanence at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HypothesisCheck {
    /// `alpha - gamma >= 0`.
    pub alpha_ge_gamma: ConditionCheck,
    /// `(S + R)/(I + E) <= (S + R + I + E)/2`, defined where `I + E > 0`.
    pub ratio: ConditionCheck,
    /// `S/(S + E + I + R) > gamma/alpha`, defined where the population is
    /// positive and not both `alpha` and `gamma` vanish.
    pub susceptible_share: ConditionCheck,
    /// Fraction of the domain where all three conditions are defined and hold.
    pub all_hold: f64,
}

pub fn check_permanence_hypotheses(
    state: &State,
    coeffs: &CoefficientSet,
    grid: &DomainGrid,
) -> HypothesisCheck {
    let mut out = HypothesisCheck::default();
    for (j, &w) in grid.weights().iter().enumerate() {
        let [s, e, i, r] = state.at(j);
        let alpha = coeffs.alpha.values()[j];
        let gamma = coeffs.gamma.values()[j];

        let c1 = alpha - gamma >= 0.0;
        if !c1 {
            out.alpha_ge_gamma.violated += w;
        }

        let infected = i + e;
        let c2 = if infected > 0.0 {
            let ok = (s + r) / infected <= (s + r + infected) / 2.0;
            if !ok {
                out.ratio.violated += w;
            }
            Some(ok)
        } else {
            out.ratio.undefined += w;
            None
        };

        let total = s + e + i + r;
        // S/N > gamma/alpha, cross-multiplied so alpha = 0 is handled.
        let c3 = if total > 0.0 && !(alpha == 0.0 && gamma == 0.0) {
            let ok = s * alpha > gamma * total;
            if !ok {
                out.susceptible_share.violated += w;
            }
            Some(ok)
        } else {
            out.susceptible_share.undefined += w;
            None
        };

        if c1 && c2 == Some(true) && c3 == Some(true) {
            out.all_hold += w;
        }
    }
    out
}
