//! Exponential Euler stepping of the mild formulation, the Picard iteration
//! of the clamped mild map, and convergence studies.
//!
//! One step of length `dt` computes, per compartment `i`,
//!
//! ```text
//! V_i <- e^{dt A_i} [ V_i + G_i(c(V)) dt + c(V_i) dW_i ],   then V_i <- V_i v 0
//! ```
//!
//! where `c` is the clamp policy: `u v 0` (hard) or `eps Phi(u / eps)`
//! (smooth). The semigroup is applied exactly in the complete cosine basis,
//! so diffusion imposes no step-size restriction.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{drift_at, CoefficientSet, Compartment, ModelError, State};
use crate::noise::{NoiseError, NoiseSampler, NoiseSpec, RngStream};
use crate::spectral::{DomainGrid, Field, Propagator, SpectralBasis, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("invalid scheme configuration: {0}")]
    Config(String),
    #[error("non-finite value in compartment {} at t = {time}", component.symbol())]
    Divergence { component: Compartment, time: f64 },
    #[error("Picard iteration is not contracting (ratios {ratios:?})")]
    ContractionFailure { ratios: Vec<f64> },
    #[error("a convergence study needs at least two levels")]
    TooFewLevels,
    #[error("invalid study level: {0}")]
    Level(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClampPolicy {
    /// `u v 0`.
    Hard,
    /// `eps Phi(u / eps)` with the quintic `C^2` cutoff `Phi`.
    Smooth { epsilon: f64 },
}

/// `Phi(xi)`: 0 below 0, `3 xi^5 - 8 xi^4 + 6 xi^3` on `(0, 1)`, `xi` above 1.
pub fn smooth_cutoff(xi: f64) -> f64 {
    if xi <= 0.0 {
        0.0
    } else if xi < 1.0 {
        xi * xi * xi * (6.0 + xi * (-8.0 + 3.0 * xi))
    } else {
        xi
    }
}

#[inline]
pub fn clamp_value(u: f64, policy: ClampPolicy) -> f64 {
    match policy {
        ClampPolicy::Hard => u.max(0.0),
        ClampPolicy::Smooth { epsilon } => epsilon * smooth_cutoff(u / epsilon),
    }
}

pub fn clamp(field: &Field, policy: ClampPolicy) -> Field {
    field.map(|u| clamp_value(u, policy))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    pub t_final: f64,
    pub clamp: ClampPolicy,
    pub record_every: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            clamp: ClampPolicy::Hard,
            record_every: 1,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(IntegratorError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(IntegratorError::Config(format!(
                "final time must be nonnegative, got {}",
                self.t_final
            )));
        }
        if let ClampPolicy::Smooth { epsilon } = self.clamp {
            if !(epsilon > 0.0) {
                return Err(IntegratorError::Config(format!(
                    "smoothing scale must be positive, got {epsilon}"
                )));
            }
        }
        if self.record_every == 0 {
            return Err(IntegratorError::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// `ceil(T / dt)`; a final partial step lands exactly on `T`.
    pub fn num_steps(&self) -> usize {
        if self.t_final == 0.0 {
            return 0;
        }
        (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Time after `steps` steps.
    pub fn time_at(&self, steps: usize) -> f64 {
        if steps >= self.num_steps() {
            self.t_final
        } else {
            steps as f64 * self.dt
        }
    }
}

/// What the final clamp of one step changed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClampStats {
    /// Fraction of (node, compartment) pairs that were modified.
    pub fraction: f64,
    /// Mass added, summed over compartments (quadrature integral).
    pub mass: f64,
}

/// Exponential Euler stepper with propagators cached for one `dt`.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: DomainGrid,
    coeffs: CoefficientSet,
    propagators: Vec<Propagator>,
    dt: f64,
    policy: ClampPolicy,
    pre: [Vec<f64>; 4],
    post: Vec<f64>,
}

impl Stepper {
    pub fn new(
        basis: &SpectralBasis,
        coeffs: &CoefficientSet,
        dt: f64,
        policy: ClampPolicy,
    ) -> Result<Self, IntegratorError> {
        let grid = basis.grid().clone();
        coeffs.validate(&grid)?;
        let propagators = coeffs
            .diffusivity
            .iter()
            .map(|&k| Propagator::new(basis, k, dt))
            .collect::<Result<Vec<_>, _>>()?;
        let nodes = grid.num_nodes();
        Ok(Self {
            grid,
            coeffs: coeffs.clone(),
            propagators,
            dt,
            policy,
            pre: [(); 4].map(|_| vec![0.0; nodes]),
            post: vec![0.0; nodes],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `state` in place by one step. `time` is only used to label a
    /// divergence.
    pub fn step(
        &mut self,
        state: &mut State,
        increment: &[Vec<f64>; 4],
        time: f64,
    ) -> Result<ClampStats, IntegratorError> {
        let nodes = self.grid.num_nodes();
        let dt = self.dt;
        for j in 0..nodes {
            let raw = state.at(j);
            let v = raw.map(|u| clamp_value(u, self.policy));
            let g = drift_at(v, &self.coeffs, j);
            for c in 0..4 {
                self.pre[c][j] = raw[c].max(0.0) + g[c] * dt + v[c] * increment[c][j];
            }
        }
        let weights = self.grid.weights();
        let mut stats = ClampStats::default();
        let mut clamped = 0usize;
        for (c, field) in state.fields_mut().iter_mut().enumerate() {
            self.propagators[c].apply_into(&self.pre[c], &mut self.post);
            let out = field.values_mut();
            for j in 0..nodes {
                let u = self.post[j];
                if !u.is_finite() {
                    return Err(IntegratorError::Divergence {
                        component: Compartment::ALL[c],
                        time,
                    });
                }
                if u < 0.0 {
                    clamped += 1;
                    stats.mass -= weights[j] * u;
                    out[j] = 0.0;
                } else {
                    out[j] = u;
                }
            }
        }
        stats.fraction = clamped as f64 / (4 * nodes) as f64;
        Ok(stats)
    }
}

/// One exponential Euler step with a freshly built stepper.
pub fn step_exponential_euler(
    state: &State,
    coeffs: &CoefficientSet,
    increment: &[Field; 4],
    dt: f64,
    basis: &SpectralBasis,
    policy: ClampPolicy,
) -> Result<(State, ClampStats), IntegratorError> {
    let mut stepper = Stepper::new(basis, coeffs, dt, policy)?;
    let inc = [0, 1, 2, 3].map(|c| increment[c].values().to_vec());
    if inc.iter().any(|v| v.len() != basis.grid().num_nodes()) {
        return Err(SpectralError::LengthMismatch {
            expected: basis.grid().num_nodes(),
            got: inc.iter().map(Vec::len).find(|&l| l != basis.grid().num_nodes()).unwrap_or(0),
        }
        .into());
    }
    let mut next = state.clone();
    let stats = stepper.step(&mut next, &inc, dt)?;
    Ok((next, stats))
}

/// Per-step notification passed to observers of [`simulate_observed`].
#[derive(Debug)]
pub struct StepEvent<'a> {
    /// Number of steps taken (0 for the initial state).
    pub step: usize,
    pub time: f64,
    pub state: &'a State,
    /// Statistics of the step just taken (default for the initial state).
    pub clamp: ClampStats,
    /// Whether this step falls on the recording stride (always true for the
    /// initial and final states).
    pub record: bool,
}

/// Recorded output of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// One entry per step taken.
    pub clamp: Vec<ClampStats>,
    /// Filled by [`crate::analysis::record_functionals`].
    pub functionals: Vec<crate::analysis::FunctionalSeries>,
}

/// Runs one path, calling `observer` after every step.
pub fn simulate_observed(
    initial: &State,
    coeffs: &CoefficientSet,
    noise: &NoiseSpec,
    config: &SchemeConfig,
    basis: &SpectralBasis,
    stream: RngStream,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<(), IntegratorError> {
    config.validate()?;
    let grid = basis.grid();
    // validates lengths and sign
    let mut state = State::new(grid, initial.fields().clone())?;
    let sampler = NoiseSampler::new(noise, basis)?;
    let mut stream = stream;
    let steps = config.num_steps();
    observer(&StepEvent {
        step: 0,
        time: 0.0,
        state: &state,
        clamp: ClampStats::default(),
        record: true,
    });
    if steps == 0 {
        return Ok(());
    }
    let mut stepper = Stepper::new(basis, coeffs, config.dt, config.clamp)?;
    let last_dt = config.t_final - (steps - 1) as f64 * config.dt;
    let mut last_stepper = if (last_dt - config.dt).abs() > 1e-12 * config.dt {
        Some(Stepper::new(basis, coeffs, last_dt, config.clamp)?)
    } else {
        None
    };
    let nodes = grid.num_nodes();
    let mut dw = [(); 4].map(|_| vec![0.0; nodes]);
    for s in 1..=steps {
        let time = config.time_at(s);
        let active = match (&mut last_stepper, s == steps) {
            (Some(last), true) => last,
            _ => &mut stepper,
        };
        sampler.sample_into(active.dt(), &mut stream, &mut dw);
        let clamp = active.step(&mut state, &dw, time)?;
        observer(&StepEvent {
            step: s,
            time,
            state: &state,
            clamp,
            record: s % config.record_every == 0 || s == steps,
        });
    }
    Ok(())
}

pub fn simulate_path(
    initial: &State,
    coeffs: &CoefficientSet,
    noise: &NoiseSpec,
    config: &SchemeConfig,
    basis: &SpectralBasis,
    stream: RngStream,
) -> Result<Trajectory, IntegratorError> {
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        clamp: Vec::new(),
        functionals: Vec::new(),
    };
    simulate_observed(initial, coeffs, noise, config, basis, stream, &mut |ev| {
        if ev.step > 0 {
            traj.clamp.push(ev.clamp);
        }
        if ev.record {
            traj.times.push(ev.time);
            traj.states.push(ev.state.clone());
        }
    })?;
    Ok(traj)
}

/// Final state of one path.
pub fn simulate_final(
    initial: &State,
    coeffs: &CoefficientSet,
    noise: &NoiseSpec,
    config: &SchemeConfig,
    basis: &SpectralBasis,
    stream: RngStream,
) -> Result<State, IntegratorError> {
    let mut last = None;
    let quiet = SchemeConfig {
        record_every: usize::MAX,
        ..*config
    };
    simulate_observed(initial, coeffs, noise, &quiet, basis, stream, &mut |ev| {
        if ev.step == quiet.num_steps() {
            last = Some(ev.state.clone());
        }
    })?;
    Ok(last.expect("final step is always observed"))
}

/// Draws `steps` consecutive increments of length `dt` from `stream`.
pub fn frozen_increments(
    noise: &NoiseSpec,
    basis: &SpectralBasis,
    dt: f64,
    steps: usize,
    stream: &mut RngStream,
) -> Result<Vec<[Field; 4]>, IntegratorError> {
    let sampler = NoiseSampler::new(noise, basis)?;
    (0..steps)
        .map(|_| Ok(sampler.sample(dt, stream, basis.grid().num_nodes())?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    /// Horizon `T0`.
    pub horizon: f64,
    /// Time steps discretising `[0, T0]`.
    pub substeps: usize,
    pub max_iterations: usize,
    /// Stop once the sup-norm difference of successive iterates is below this.
    pub tolerance: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            horizon: 0.1,
            substeps: 20,
            max_iterations: 50,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub times: Vec<f64>,
    /// Final iterate at every time in `times`.
    pub states: Vec<State>,
    /// `d_m = sup_{t, x, i} |u^{m+1} - u^m|`.
    pub differences: Vec<f64>,
    /// `d_{m+1} / d_m` while both are positive.
    pub ratios: Vec<f64>,
    pub converged: bool,
}

/// Fixed-point iteration of the clamped mild map
///
/// ```text
/// u -> e^{tA} V0 + int_0^t e^{(t-s)A} G(c(u(s))) ds + int_0^t e^{(t-s)A} c(u(s)) dW(s)
/// ```
///
/// on the grid `t_j = j T0 / substeps`, with left-endpoint sums against the
/// frozen increments (one per substep). The iteration starts from
/// `e^{tA} V0`.
pub fn picard_solve(
    initial: &State,
    coeffs: &CoefficientSet,
    increments: &[[Field; 4]],
    config: &PicardConfig,
    basis: &SpectralBasis,
    policy: ClampPolicy,
) -> Result<PicardOutcome, IntegratorError> {
    if !(config.horizon > 0.0) || !(config.tolerance > 0.0) || config.substeps == 0 {
        return Err(IntegratorError::Config(format!("invalid Picard configuration {config:?}")));
    }
    if increments.len() != config.substeps {
        return Err(IntegratorError::Config(format!(
            "{} noise increments for {} substeps",
            increments.len(),
            config.substeps
        )));
    }
    let grid = basis.grid();
    let initial = State::new(grid, initial.fields().clone())?;
    coeffs.validate(grid)?;
    let nodes = grid.num_nodes();
    let dt = config.horizon / config.substeps as f64;
    let props = coeffs
        .diffusivity
        .iter()
        .map(|&k| Propagator::new(basis, k, dt))
        .collect::<Result<Vec<_>, _>>()?;
    let propagate = |fields: &[Vec<f64>; 4]| -> [Vec<f64>; 4] {
        [0, 1, 2, 3].map(|c| {
            let mut out = vec![0.0; nodes];
            props[c].apply_into(&fields[c], &mut out);
            out
        })
    };
    let as_raw = |s: &State| [0, 1, 2, 3].map(|c| s.fields()[c].values().to_vec());

    let mut current: Vec<[Vec<f64>; 4]> = Vec::with_capacity(config.substeps + 1);
    current.push(as_raw(&initial));
    for j in 0..config.substeps {
        let next = propagate(&current[j]);
        current.push(next);
    }

    let mut differences = Vec::new();
    let mut ratios = Vec::new();
    let mut converged = false;
    let mut streak = 0;
    for _ in 0..config.max_iterations {
        let mut next: Vec<[Vec<f64>; 4]> = Vec::with_capacity(config.substeps + 1);
        next.push(as_raw(&initial));
        for j in 0..config.substeps {
            let u = &current[j];
            let inc = &increments[j];
            let mut pre = next[j].clone();
            for n in 0..nodes {
                let v = [0, 1, 2, 3].map(|c| clamp_value(u[c][n], policy));
                let g = drift_at(v, coeffs, n);
                for c in 0..4 {
                    pre[c][n] += g[c] * dt + v[c] * inc[c].values()[n];
                }
            }
            let w = propagate(&pre);
            for (c, f) in w.iter().enumerate() {
                if let Some(_) = f.iter().find(|v| !v.is_finite()) {
                    return Err(IntegratorError::Divergence {
                        component: Compartment::ALL[c],
                        time: (j + 1) as f64 * dt,
                    });
                }
            }
            next.push(w);
        }
        let d = current
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())))
            .fold(0.0, f64::max);
        if let Some(&prev) = differences.last() {
            if prev > 0.0 && d > 0.0 {
                let r = d / prev;
                ratios.push(r);
                streak = if r >= 1.0 { streak + 1 } else { 0 };
                if streak >= 3 {
                    return Err(IntegratorError::ContractionFailure { ratios });
                }
            }
        }
        differences.push(d);
        current = next;
        if d <= config.tolerance {
            converged = true;
            break;
        }
    }
    let times = (0..=config.substeps).map(|j| j as f64 * dt).collect();
    let states = current
        .into_iter()
        .map(|f| State::from_fields_unchecked(f.map(Field::from_raw)))
        .collect();
    Ok(PicardOutcome {
        times,
        states,
        differences,
        ratios,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardCrossCheck {
    pub outcome: PicardOutcome,
    pub reference_dt: f64,
    /// Sup-norm distance between the final iterate and the fine stepper over
    /// all Picard grid times.
    pub stepper_distance: f64,
}

/// Runs [`picard_solve`] against the increments of `stream` over each
/// substep and compares the result with the stepper at
/// `horizon / (substeps * refinement)` driven by the same Brownian path.
#[allow(clippy::too_many_arguments)]
pub fn picard_cross_check(
    initial: &State,
    coeffs: &CoefficientSet,
    noise: &NoiseSpec,
    config: &PicardConfig,
    refinement: u64,
    basis: &SpectralBasis,
    policy: ClampPolicy,
    stream: RngStream,
) -> Result<PicardCrossCheck, IntegratorError> {
    let coarse = config.horizon / config.substeps as f64;
    let mut frozen = stream.with_refinement(refinement)?;
    let increments = frozen_increments(noise, basis, coarse, config.substeps, &mut frozen)?;
    let outcome = picard_solve(initial, coeffs, &increments, config, basis, policy)?;
    let reference_dt = coarse / refinement as f64;
    let scheme = SchemeConfig {
        dt: reference_dt,
        t_final: config.horizon,
        clamp: policy,
        record_every: refinement as usize,
    };
    let fine = simulate_path(initial, coeffs, noise, &scheme, basis, stream)?;
    let stepper_distance = fine
        .states
        .iter()
        .zip(&outcome.states)
        .map(|(a, b)| a.sup_distance(b))
        .fold(0.0, f64::max);
    Ok(PicardCrossCheck {
        outcome,
        reference_dt,
        stepper_distance,
    })
}

/// Problem definition shared by the levels of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceProblem {
    pub initial: State,
    pub coeffs: CoefficientSet,
    pub noise: NoiseSpec,
    /// `t_final` and the clamp policy are used; `dt` is used by truncation
    /// studies only.
    pub scheme: SchemeConfig,
    pub basis: SpectralBasis,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Study {
    /// Step sizes, coarsest first; each must be an integer multiple of the finest.
    TimeStep(Vec<f64>),
    /// Noise truncation levels, smallest first; the largest is the reference.
    Truncation(Vec<usize>),
}

/// Closed-form reference: receives the path's base-level stream, the finest
/// step and the number of finest steps to `T`.
pub type ExactReference<'a> = &'a (dyn Fn(&RngStream, f64, u64) -> State + Sync);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    /// `dt` or `n`.
    pub parameter: f64,
    /// Time-step studies: root-mean-square sup-norm error at `T`.
    /// Truncation studies: mean squared L2 distance at `T`.
    pub error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log dt` (time-step studies).
    pub observed_order: Option<f64>,
    pub reference_parameter: f64,
    pub paths: usize,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub(crate) fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn l2_distance_squared(grid: &DomainGrid, a: &State, b: &State) -> f64 {
    a.fields()
        .iter()
        .zip(b.fields())
        .map(|(x, y)| {
            let d2: Vec<f64> = x.values().iter().zip(y.values()).map(|(p, q)| (p - q).powi(2)).collect();
            grid.integrate(&d2)
        })
        .sum()
}

/// Strong-error study in `dt` or in the noise truncation `n`, with common
/// random numbers across levels. Without an exact reference the finest level
/// serves as reference and gets no row.
pub fn convergence_study(
    problem: &ConvergenceProblem,
    study: &Study,
    paths: usize,
    seed: u64,
    exact: Option<ExactReference<'_>>,
) -> Result<ConvergenceTable, IntegratorError> {
    if paths == 0 {
        return Err(IntegratorError::Level("at least one path is required".into()));
    }
    match study {
        Study::TimeStep(dts) => {
            if dts.len() < 2 {
                return Err(IntegratorError::TooFewLevels);
            }
            if dts.windows(2).any(|w| !(w[0] > w[1])) {
                return Err(IntegratorError::Level("step sizes must be strictly decreasing".into()));
            }
            let finest = *dts.last().unwrap();
            let t_final = problem.scheme.t_final;
            let base_steps = (t_final / finest).round();
            if (base_steps * finest - t_final).abs() > 1e-9 * t_final.max(1.0) || base_steps < 1.0 {
                return Err(IntegratorError::Level(format!("T = {t_final} is not a multiple of dt = {finest}")));
            }
            let ratios: Vec<u64> = dts
                .iter()
                .map(|dt| {
                    let r = (dt / finest).round();
                    if (r * finest - dt).abs() > 1e-9 * dt {
                        Err(IntegratorError::Level(format!("dt = {dt} is not a multiple of {finest}")))
                    } else {
                        Ok(r as u64)
                    }
                })
                .collect::<Result<_, _>>()?;
            let levels: Vec<usize> = match exact {
                Some(_) => (0..dts.len()).collect(),
                None => (0..dts.len() - 1).collect(),
            };
            let per_path: Vec<Vec<f64>> = (0..paths as u64)
                .into_par_iter()
                .map(|p| -> Result<Vec<f64>, IntegratorError> {
                    let base = RngStream::new(seed, p);
                    let run = |level: usize| {
                        let scheme = SchemeConfig {
                            dt: dts[level],
                            ..problem.scheme
                        };
                        simulate_final(
                            &problem.initial,
                            &problem.coeffs,
                            &problem.noise,
                            &scheme,
                            &problem.basis,
                            base.with_refinement(ratios[level])?,
                        )
                    };
                    let reference = match exact {
                        Some(f) => f(&base, finest, base_steps as u64),
                        None => run(dts.len() - 1)?,
                    };
                    levels
                        .iter()
                        .map(|&l| Ok(run(l)?.sup_distance(&reference).powi(2)))
                        .collect()
                })
                .collect::<Result<_, _>>()?;
            let mut rows = Vec::new();
            for (col, &l) in levels.iter().enumerate() {
                let sq: Vec<f64> = per_path.iter().map(|v| v[col]).collect();
                let (ms, se_ms) = mean_and_se(&sq);
                let rms = ms.sqrt();
                let se = if rms > 0.0 { se_ms / (2.0 * rms) } else { 0.0 };
                rows.push(ConvergenceRow {
                    parameter: dts[l],
                    error: rms,
                    std_error: se,
                });
            }
            let usable: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.error > 0.0).collect();
            let observed_order = (usable.len() >= 2).then(|| {
                log_log_slope(
                    &usable.iter().map(|r| r.parameter).collect::<Vec<_>>(),
                    &usable.iter().map(|r| r.error).collect::<Vec<_>>(),
                )
            });
            Ok(ConvergenceTable {
                rows,
                observed_order,
                reference_parameter: finest,
                paths,
            })
        }
        Study::Truncation(ns) => {
            if ns.len() < 2 {
                return Err(IntegratorError::TooFewLevels);
            }
            if ns.windows(2).any(|w| w[0] >= w[1]) {
                return Err(IntegratorError::Level("truncation levels must be strictly increasing".into()));
            }
            let finest = *ns.last().unwrap();
            if finest > problem.basis.num_modes() {
                return Err(NoiseError::TooManyModes {
                    requested: finest,
                    available: problem.basis.num_modes(),
                }
                .into());
            }
            let grid = problem.basis.grid();
            let per_path: Vec<Vec<f64>> = (0..paths as u64)
                .into_par_iter()
                .map(|p| -> Result<Vec<f64>, IntegratorError> {
                    let stream = RngStream::new(seed, p);
                    let run = |n: usize| {
                        simulate_final(
                            &problem.initial,
                            &problem.coeffs,
                            &problem.noise.truncated(n),
                            &problem.scheme,
                            &problem.basis,
                            stream,
                        )
                    };
                    let reference = run(finest)?;
                    ns[..ns.len() - 1]
                        .iter()
                        .map(|&n| Ok(l2_distance_squared(grid, &run(n)?, &reference)))
                        .collect()
                })
                .collect::<Result<_, _>>()?;
            let rows = ns[..ns.len() - 1]
                .iter()
                .enumerate()
                .map(|(col, &n)| {
                    let xs: Vec<f64> = per_path.iter().map(|v| v[col]).collect();
                    let (error, std_error) = mean_and_se(&xs);
                    ConvergenceRow {
                        parameter: n as f64,
                        error,
                        std_error,
                    }
                })
                .collect();
            Ok(ConvergenceTable {
                rows,
                observed_order: None,
                reference_parameter: finest as f64,
                paths,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rates;
    use crate::spectral::apply_semigroup;
    use approx::assert_abs_diff_eq;

    fn setup(points: usize) -> (DomainGrid, SpectralBasis) {
        let g = DomainGrid::interval(points).unwrap();
        let b = SpectralBasis::complete(&g);
        (g, b)
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_value(-0.5, ClampPolicy::Hard), 0.0);
        assert_abs_diff_eq!(
            clamp_value(0.5, ClampPolicy::Smooth { epsilon: 1.0 }),
            0.34375,
            epsilon = 1e-15
        );
        assert_eq!(clamp_value(2.0, ClampPolicy::Smooth { epsilon: 1.0 }), 2.0);
        assert_eq!(clamp_value(0.3, ClampPolicy::Hard), 0.3);
        assert_eq!(clamp_value(-1.0, ClampPolicy::Smooth { epsilon: 0.1 }), 0.0);
        assert_eq!(clamp_value(0.25, ClampPolicy::Smooth { epsilon: 0.1 }), 0.25);
    }

    #[test]
    fn cutoff_is_c2_at_the_joins() {
        let h = 1e-6;
        // first derivative: 0 at 0, 1 at 1
        assert_abs_diff_eq!((smooth_cutoff(h) - smooth_cutoff(0.0)) / h, 0.0, epsilon = 1e-5);
        assert_abs_diff_eq!((smooth_cutoff(1.0) - smooth_cutoff(1.0 - h)) / h, 1.0, epsilon = 1e-5);
        // second derivative of the polynomial vanishes at 1
        let d2 = (smooth_cutoff(1.0) - 2.0 * smooth_cutoff(1.0 - h) + smooth_cutoff(1.0 - 2.0 * h)) / (h * h);
        assert!(d2.abs() < 1e-2, "{d2}");
    }

    #[test]
    fn scheme_validation() {
        let bad = SchemeConfig {
            dt: 0.0,
            ..SchemeConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SchemeConfig {
            clamp: ClampPolicy::Smooth { epsilon: 0.0 },
            ..SchemeConfig::default()
        };
        assert!(bad.validate().is_err());
        let cfg = SchemeConfig {
            dt: 0.3,
            t_final: 1.0,
            ..SchemeConfig::default()
        };
        assert_eq!(cfg.num_steps(), 4);
        assert_eq!(cfg.time_at(4), 1.0);
        let cfg = SchemeConfig {
            dt: 0.1,
            t_final: 1.0,
            ..SchemeConfig::default()
        };
        assert_eq!(cfg.num_steps(), 10);
    }

    #[test]
    fn pure_semigroup_step() {
        let (g, b) = setup(32);
        let coeffs = CoefficientSet::homogeneous(&g, &Rates { diffusivity: [0.1, 0.2, 0.3, 0.4], ..Rates::zero() }).unwrap();
        let init = State::new(&g, [0, 1, 2, 3].map(|c| Field::from_fn(&g, |x, _| 1.0 + (c as f64 + 1.0) * x * x))).unwrap();
        let zero = [(); 4].map(|_| Field::zeros(&g));
        let (next, stats) = step_exponential_euler(&init, &coeffs, &zero, 0.05, &b, ClampPolicy::Hard).unwrap();
        assert_eq!(stats, ClampStats::default());
        for c in 0..4 {
            let want = apply_semigroup(&init.fields()[c], coeffs.diffusivity[c], 0.05, &b).unwrap();
            for (a, z) in next.fields()[c].values().iter().zip(want.values()) {
                assert_abs_diff_eq!(a, z, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn zero_time_and_zero_data() {
        let (g, b) = setup(16);
        let coeffs = CoefficientSet::homogeneous(&g, &Rates { mu: [0.1; 4], alpha: 1.0, ..Rates::zero() }).unwrap();
        let init = State::constant(&g, [0.0; 4]).unwrap();
        let noise = NoiseSpec::geometric(4, [0.1; 4], 0.5).unwrap();
        let cfg = SchemeConfig {
            dt: 0.01,
            t_final: 0.0,
            ..SchemeConfig::default()
        };
        let traj = simulate_path(&init, &coeffs, &noise, &cfg, &b, RngStream::new(1, 0)).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        let cfg = SchemeConfig { t_final: 1.0, ..cfg };
        let traj = simulate_path(&init, &coeffs, &noise, &cfg, &b, RngStream::new(1, 0)).unwrap();
        assert_eq!(traj.times.len(), 101);
        assert!(traj.states.iter().all(|s| s.sup_distance(&init) == 0.0));
    }

    #[test]
    fn recruitment_relaxation() {
        let (g, b) = setup(16);
        let coeffs = CoefficientSet::homogeneous(&g, &Rates { lambda: 1.0, mu: [1.0, 0.0, 0.0, 0.0], ..Rates::zero() }).unwrap();
        let init = State::constant(&g, [0.0; 4]).unwrap();
        let cfg = SchemeConfig {
            dt: 1e-3,
            t_final: 5.0,
            record_every: 1000,
            ..SchemeConfig::default()
        };
        let traj = simulate_path(&init, &coeffs, &NoiseSpec::zero(), &cfg, &b, RngStream::new(0, 0)).unwrap();
        let s = traj.states.last().unwrap().get(Compartment::Susceptible);
        let want = 1.0 - (-5.0f64).exp();
        assert!(s.values().iter().all(|v| (v - want).abs() < 1e-3));
        assert!(s.max() - s.min() < 1e-12);
        assert_eq!(*traj.times.last().unwrap(), 5.0);
    }

    #[test]
    fn determinism_and_nonnegativity_under_strong_noise() {
        let (g, b) = setup(32);
        let coeffs = CoefficientSet::homogeneous(
            &g,
            &Rates {
                lambda: 0.5,
                mu: [0.1; 4],
                alpha: 0.8,
                beta: 0.2,
                gamma: 0.3,
                sigma: 0.4,
                diffusivity: [0.01; 4],
            },
        )
        .unwrap();
        let init = State::constant(&g, [0.8, 0.05, 0.1, 0.05]).unwrap();
        let noise = NoiseSpec::geometric(8, [4.0; 4], 0.7).unwrap();
        let cfg = SchemeConfig {
            dt: 0.05,
            t_final: 2.0,
            ..SchemeConfig::default()
        };
        let a = simulate_path(&init, &coeffs, &noise, &cfg, &b, RngStream::new(3, 1)).unwrap();
        let z = simulate_path(&init, &coeffs, &noise, &cfg, &b, RngStream::new(3, 1)).unwrap();
        assert_eq!(a, z);
        assert!(a.states.iter().all(|s| s.min() >= 0.0));
        assert!(a.clamp.iter().any(|c| c.fraction > 0.0), "strong noise should trigger the clamp");
    }

    #[test]
    fn picard_trivial_mapping() {
        let (g, b) = setup(16);
        let coeffs = CoefficientSet::homogeneous(&g, &Rates::zero()).unwrap();
        let init = State::new(&g, [0, 1, 2, 3].map(|_| Field::from_fn(&g, |x, _| 1.0 + x))).unwrap();
        let inc = vec![[(); 4].map(|_| Field::zeros(&g)); 10];
        let cfg = PicardConfig {
            substeps: 10,
            ..PicardConfig::default()
        };
        let out = picard_solve(&init, &coeffs, &inc, &cfg, &b, ClampPolicy::Hard).unwrap();
        assert!(out.converged);
        assert_eq!(out.differences.len(), 1);
        let want = apply_semigroup(&init.fields()[0], 0.01, 0.1, &b).unwrap();
        for (a, z) in out.states.last().unwrap().fields()[0].values().iter().zip(want.values()) {
            assert_abs_diff_eq!(a, z, epsilon = 1e-13);
        }
    }

    #[test]
    fn study_validation() {
        let (g, b) = setup(8);
        let problem = ConvergenceProblem {
            initial: State::constant(&g, [1.0; 4]).unwrap(),
            coeffs: CoefficientSet::homogeneous(&g, &Rates::zero()).unwrap(),
            noise: NoiseSpec::zero(),
            scheme: SchemeConfig::default(),
            basis: b,
        };
        assert_eq!(
            convergence_study(&problem, &Study::TimeStep(vec![0.1]), 1, 0, None),
            Err(IntegratorError::TooFewLevels)
        );
        assert!(convergence_study(&problem, &Study::TimeStep(vec![0.1, 0.03]), 1, 0, None).is_err());
        assert!(convergence_study(&problem, &Study::Truncation(vec![4, 2]), 1, 0, None).is_err());
    }
}
