//! Truncated Q-Wiener increments with counter-based randomness.
//!
//! Component `i` is driven by `W_i(t) = sum_{k<n} sqrt(a_{k,i}) B_{k,i}(t) e_k`
//! with independent standard Brownian motions `B_{k,i}`. Every normal draw is
//! a pure function of `(seed, path, base step, component, mode)`, so a path
//! can be replayed in any order and two runs that share a seed share their
//! Brownian motions mode by mode.

use std::f64::consts::PI;

use thiserror::Error;

use crate::spectral::{Field, SpectralBasis, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("noise weight a[{mode}] of component {component} is invalid ({value})")]
    InvalidWeight { component: usize, mode: usize, value: f64 },
    #[error("noise components have different truncation lengths {0:?}")]
    RaggedTruncation([usize; 4]),
    #[error("noise uses {requested} modes but the basis has only {available}")]
    TooManyModes { requested: usize, available: usize },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("refinement factor must be at least 1")]
    ZeroRefinement,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Variance weights `a_{k,i}` for the four components, truncated at `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    weights: [Vec<f64>; 4],
}

impl NoiseSpec {
    pub fn new(weights: [Vec<f64>; 4]) -> Result<Self, NoiseError> {
        let lens = [0, 1, 2, 3].map(|i| weights[i].len());
        if lens.iter().any(|&l| l != lens[0]) {
            return Err(NoiseError::RaggedTruncation(lens));
        }
        for (component, w) in weights.iter().enumerate() {
            for (mode, &value) in w.iter().enumerate() {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(NoiseError::InvalidWeight { component, mode, value });
                }
            }
        }
        Ok(Self { weights })
    }

    /// Deterministic dynamics (`n = 0`).
    pub fn zero() -> Self {
        Self {
            weights: [vec![], vec![], vec![], vec![]],
        }
    }

    /// `a_{k,i} = first[i] * ratio^k` for `k < n`.
    pub fn geometric(n: usize, first: [f64; 4], ratio: f64) -> Result<Self, NoiseError> {
        Self::new(first.map(|a0| (0..n).map(|k| a0 * ratio.powi(k as i32)).collect()))
    }

    pub fn truncation(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self, component: usize) -> &[f64] {
        &self.weights[component]
    }

    /// `a_i = sum_k a_{k,i}`.
    pub fn trace(&self, component: usize) -> f64 {
        self.weights[component].iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&a| a == 0.0))
    }

    /// Keeps the first `n` modes, padding with zero weights if `n` is larger.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            weights: [0, 1, 2, 3].map(|i| {
                let mut w: Vec<f64> = self.weights[i].iter().copied().take(n).collect();
                w.resize(n, 0.0);
                w
            }),
        }
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, x: u64) -> u64 {
    mix64(h.wrapping_add(GOLDEN) ^ x)
}

/// Uniform in `(0, 1]` from the top 53 bits.
#[inline]
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Randomness for one ensemble member.
///
/// `step` counts increments drawn so far. With `refinement = r` each
/// increment is the sum of `r` consecutive base-level increments, so a path
/// at step `r * dt` consumes exactly the Brownian motion of a path at `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    path: u64,
    step: u64,
    refinement: u64,
}

impl RngStream {
    pub fn new(seed: u64, path: u64) -> Self {
        Self {
            seed,
            path,
            step: 0,
            refinement: 1,
        }
    }

    pub fn with_refinement(self, refinement: u64) -> Result<Self, NoiseError> {
        if refinement == 0 {
            return Err(NoiseError::ZeroRefinement);
        }
        Ok(Self { refinement, ..self })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> u64 {
        self.path
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn refinement(&self) -> u64 {
        self.refinement
    }

    /// Standard normal keyed by base-level step, component and mode.
    pub fn normal(&self, base_step: u64, component: usize, mode: usize) -> f64 {
        let mut h = mix64(self.seed ^ GOLDEN);
        h = absorb(h, self.path);
        h = absorb(h, base_step);
        h = absorb(h, ((component as u64) << 32) | mode as u64);
        let u1 = unit_open(absorb(h, 1));
        let u2 = unit_open(absorb(h, 2));
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// `B_{k,i}` increment over the next step of length `dt`, without advancing.
    pub fn brownian_increment(&self, component: usize, mode: usize, dt: f64) -> f64 {
        let r = self.refinement;
        let start = self.step * r;
        let sum: f64 = (start..start + r).map(|b| self.normal(b, component, mode)).sum();
        sum * (dt / r as f64).sqrt()
    }

    /// `B_{k,i}(steps * dt)` accumulated from base-level draws of length
    /// `dt / refinement`, independent of the current position.
    pub fn brownian_value(&self, component: usize, mode: usize, steps: u64, dt: f64) -> f64 {
        let r = self.refinement;
        let sum: f64 = (0..steps * r).map(|b| self.normal(b, component, mode)).sum();
        sum * (dt / r as f64).sqrt()
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }
}

/// Precomputed mode table for repeated sampling on one basis.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    spec: NoiseSpec,
    /// Row `k`: `e_k` sampled on the grid.
    modes: Vec<Vec<f64>>,
    sqrt_weights: [Vec<f64>; 4],
}

impl NoiseSampler {
    pub fn new(spec: &NoiseSpec, basis: &SpectralBasis) -> Result<Self, NoiseError> {
        let n = spec.truncation();
        if n > basis.num_modes() {
            return Err(NoiseError::TooManyModes {
                requested: n,
                available: basis.num_modes(),
            });
        }
        Ok(Self {
            spec: spec.clone(),
            modes: (0..n).map(|k| basis.mode_field(k).into_values()).collect(),
            sqrt_weights: [0, 1, 2, 3].map(|i| spec.weights(i).iter().map(|a| a.sqrt()).collect()),
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    /// Writes the four increments for the stream's current step into `out`
    /// and advances the stream.
    pub fn sample_into(&self, dt: f64, stream: &mut RngStream, out: &mut [Vec<f64>; 4]) {
        for (i, dw) in out.iter_mut().enumerate() {
            dw.iter_mut().for_each(|v| *v = 0.0);
            for (k, &sa) in self.sqrt_weights[i].iter().enumerate() {
                if sa == 0.0 {
                    continue;
                }
                let c = sa * stream.brownian_increment(i, k, dt);
                for (v, e) in dw.iter_mut().zip(&self.modes[k]) {
                    *v += c * e;
                }
            }
        }
        stream.advance();
    }

    pub fn sample(&self, dt: f64, stream: &mut RngStream, nodes: usize) -> Result<[Field; 4], NoiseError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(NoiseError::NonPositiveStep(dt));
        }
        let mut out = [(); 4].map(|_| vec![0.0; nodes]);
        self.sample_into(dt, stream, &mut out);
        Ok(out.map(Field::from_raw))
    }
}

/// Draws `(dW_1, .., dW_4)` over one step of length `dt` and advances `stream`.
pub fn sample_increment(
    spec: &NoiseSpec,
    basis: &SpectralBasis,
    dt: f64,
    stream: &mut RngStream,
) -> Result<[Field; 4], NoiseError> {
    NoiseSampler::new(spec, basis)?.sample(dt, stream, basis.grid().num_nodes())
}

/// Pointwise product `u(x) dW(x)`: the multiplicative noise term on the grid.
pub fn multiplicative_apply(field: &Field, increment: &Field) -> Result<Field, NoiseError> {
    if field.len() != increment.len() {
        return Err(SpectralError::LengthMismatch {
            expected: field.len(),
            got: increment.len(),
        }
        .into());
    }
    Ok(Field::from_raw(
        field.values().iter().zip(increment.values()).map(|(u, w)| u * w).collect(),
    ))
}
