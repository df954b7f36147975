//! Diagnostic functionals, running averages, rate fits, the mass envelope and
//! Monte Carlo ensembles with regime classification.

use rayon::prelude::*;
use thiserror::Error;

use crate::integrator::{simulate_observed, IntegratorError, SchemeConfig, Trajectory};
use crate::model::{check_permanence_hypotheses, compute_thresholds, CoefficientSet, Compartment, PredictedRegime, State, ThresholdReport};
use crate::noise::{NoiseSpec, RngStream};
use crate::spectral::{DomainGrid, SpectralBasis};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("series is empty")]
    EmptySeries,
    #[error("series has {times} times but {values} values")]
    RaggedSeries { times: usize, values: usize },
    #[error("fit window [{0}, {1}] holds fewer than two positive samples")]
    InsufficientData(f64, f64),
    #[error("exponent must be positive, got {0}")]
    Exponent(f64),
    #[error("an ensemble needs at least one path")]
    NoPaths,
    #[error("all {0} paths aborted")]
    AllAborted(usize),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

pub const TOTAL_MASS: &str = "total_mass";
pub const INFECTED_MASS: &str = "infected_mass";
pub const PERMANENCE_INNER: &str = "permanence_inner";

/// Names of the functionals evaluated on every recorded snapshot, in order.
pub const FUNCTIONAL_NAMES: [&str; 7] = [
    TOTAL_MASS,
    INFECTED_MASS,
    PERMANENCE_INNER,
    "mass_S",
    "mass_E",
    "mass_I",
    "mass_R",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl FunctionalSeries {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self, AnalysisError> {
        if times.len() != values.len() {
            return Err(AnalysisError::RaggedSeries {
                times: times.len(),
                values: values.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            times,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value at the first recorded time `>= t`.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.times.iter().position(|&s| s >= t - 1e-12).map(|k| self.values[k])
    }
}

fn integrate_pointwise(state: &State, grid: &DomainGrid, f: impl Fn([f64; 4]) -> f64) -> f64 {
    let values: Vec<f64> = (0..grid.num_nodes()).map(|j| f(state.at(j))).collect();
    grid.integrate(&values)
}

/// `int (S + E + I + R) dx`.
pub fn total_mass(state: &State, grid: &DomainGrid) -> f64 {
    integrate_pointwise(state, grid, |v| v.iter().sum())
}

/// `int (I + E) dx`.
pub fn infected_mass(state: &State, grid: &DomainGrid) -> f64 {
    integrate_pointwise(state, grid, |[_, e, i, _]| i + e)
}

/// `int ((I + E)^2 ^ 1) dx`, the inner integral of the permanence statistic.
pub fn permanence_inner(state: &State, grid: &DomainGrid) -> f64 {
    integrate_pointwise(state, grid, |[_, e, i, _]| ((i + e) * (i + e)).min(1.0))
}

pub fn compartment_mass(state: &State, grid: &DomainGrid, c: Compartment) -> f64 {
    grid.integrate(state.get(c).values())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseMoment {
    /// `int (S + R)^{-p} dx`, or `f64::INFINITY` when `S + R` vanishes somewhere.
    pub value: f64,
    pub zero_nodes: bool,
}

pub fn inverse_moment(state: &State, grid: &DomainGrid, p: f64) -> Result<InverseMoment, AnalysisError> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(AnalysisError::Exponent(p));
    }
    let zero_nodes = (0..grid.num_nodes()).any(|j| {
        let [s, _, _, r] = state.at(j);
        s + r <= 0.0
    });
    if zero_nodes {
        return Ok(InverseMoment {
            value: f64::INFINITY,
            zero_nodes,
        });
    }
    Ok(InverseMoment {
        value: integrate_pointwise(state, grid, |[s, _, _, r]| (s + r).powf(-p)),
        zero_nodes,
    })
}

/// The values of [`FUNCTIONAL_NAMES`] on one snapshot.
pub fn evaluate_functionals(state: &State, grid: &DomainGrid) -> [f64; 7] {
    [
        total_mass(state, grid),
        infected_mass(state, grid),
        permanence_inner(state, grid),
        compartment_mass(state, grid, Compartment::Susceptible),
        compartment_mass(state, grid, Compartment::Exposed),
        compartment_mass(state, grid, Compartment::Infected),
        compartment_mass(state, grid, Compartment::Recovered),
    ]
}

/// Fills `trajectory.functionals` with one series per entry of [`FUNCTIONAL_NAMES`].
pub fn record_functionals(trajectory: &mut Trajectory, grid: &DomainGrid) {
    let rows: Vec<[f64; 7]> = trajectory.states.iter().map(|s| evaluate_functionals(s, grid)).collect();
    trajectory.functionals = FUNCTIONAL_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| FunctionalSeries {
            name: name.to_string(),
            times: trajectory.times.clone(),
            values: rows.iter().map(|r| r[k]).collect(),
        })
        .collect();
}

/// Running averages `(1/(t - t_0)) int_{t_0}^t f` by the trapezoidal rule.
/// The first entry is the average over the first interval.
pub fn time_average(series: &FunctionalSeries) -> Result<FunctionalSeries, AnalysisError> {
    if series.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    if series.times.len() != series.values.len() {
        return Err(AnalysisError::RaggedSeries {
            times: series.times.len(),
            values: series.values.len(),
        });
    }
    let (t, v) = (&series.times, &series.values);
    let mut out = Vec::with_capacity(t.len());
    let mut integral = 0.0;
    for k in 0..t.len() {
        if k > 0 {
            integral += 0.5 * (v[k] + v[k - 1]) * (t[k] - t[k - 1]);
            out.push(integral / (t[k] - t[0]));
        } else if t.len() > 1 {
            out.push(0.5 * (v[0] + v[1]));
        } else {
            out.push(v[0]);
        }
    }
    Ok(FunctionalSeries {
        name: format!("{}_time_average", series.name),
        times: t.clone(),
        values: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Negated least-squares slope of `log value` against time.
    pub rate: f64,
    /// Window actually used.
    pub window: (f64, f64),
    pub r_squared: f64,
    /// Standard error of the slope from the regression residuals.
    pub std_error: f64,
    /// Monte Carlo standard error of the rate when the series is an ensemble
    /// mean (0 otherwise).
    pub mc_std_error: f64,
    pub points: usize,
    /// The requested window was cut at the first nonpositive value.
    pub shrunk: bool,
}

impl RateFit {
    /// Residual and Monte Carlo errors combined in quadrature.
    pub fn total_std_error(&self) -> f64 {
        self.std_error.hypot(self.mc_std_error)
    }
}

/// Rate fit of the mean of `samples` (one row per path) with a delta-method
/// Monte Carlo standard error for the fitted rate.
pub fn fit_ensemble_rate(times: &[f64], samples: &[Vec<f64>], window: (f64, f64)) -> Result<RateFit, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::NoPaths);
    }
    let m = samples.len() as f64;
    let mean: Vec<f64> = (0..times.len()).map(|k| samples.iter().map(|p| p[k]).sum::<f64>() / m).collect();
    let mut fit = fit_exponential_rate(&FunctionalSeries::new("mean", times.to_vec(), mean.clone())?, window)?;
    if samples.len() < 2 {
        return Ok(fit);
    }
    let first = times.iter().position(|&t| t >= window.0 - 1e-12).unwrap_or(0);
    let used = first..first + fit.points;
    let tbar = times[used.clone()].iter().sum::<f64>() / fit.points as f64;
    let sxx: f64 = times[used.clone()].iter().map(|t| (t - tbar).powi(2)).sum();
    let influence: Vec<f64> = samples
        .iter()
        .map(|p| used.clone().map(|k| (times[k] - tbar) / sxx * (p[k] / mean[k] - 1.0)).sum())
        .collect();
    let var = influence.iter().map(|x| x * x).sum::<f64>() / (m - 1.0);
    fit.mc_std_error = (var / m).sqrt();
    Ok(fit)
}

pub fn fit_exponential_rate(series: &FunctionalSeries, window: (f64, f64)) -> Result<RateFit, AnalysisError> {
    let (ta, tb) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut shrunk = false;
    for (&t, &v) in series.times.iter().zip(&series.values) {
        if t < ta - 1e-12 || t > tb + 1e-12 {
            continue;
        }
        if !(v > 0.0) {
            shrunk = true;
            break;
        }
        xs.push(t);
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < 2 {
        return Err(AnalysisError::InsufficientData(ta, tb));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum::<f64>()
        .max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let std_error = if n > 2 { (ss_res / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(RateFit {
        rate: -slope,
        window: (xs[0], xs[n - 1]),
        r_squared,
        std_error,
        mc_std_error: 0.0,
        points: n,
        shrunk,
    })
}

/// Per-time Monte Carlo summary of one functional.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalStats {
    pub name: String,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// 2.5% empirical quantile.
    pub lower: Vec<f64>,
    /// 97.5% empirical quantile.
    pub upper: Vec<f64>,
}

impl FunctionalStats {
    fn from_samples(name: &str, samples: &[Vec<f64>]) -> Self {
        let times = samples.first().map_or(0, Vec::len);
        let mut stats = Self {
            name: name.to_string(),
            mean: Vec::with_capacity(times),
            std_error: Vec::with_capacity(times),
            lower: Vec::with_capacity(times),
            upper: Vec::with_capacity(times),
        };
        let m = samples.len() as f64;
        let mut column = Vec::with_capacity(samples.len());
        for k in 0..times {
            column.clear();
            column.extend(samples.iter().map(|p| p[k]));
            let mean = column.iter().sum::<f64>() / m;
            let se = if samples.len() > 1 {
                (column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
            } else {
                0.0
            };
            column.sort_by(f64::total_cmp);
            stats.mean.push(mean);
            stats.std_error.push(se);
            stats.lower.push(quantile(&column, 0.025));
            stats.upper.push(quantile(&column, 0.975));
        }
        stats
    }

    pub fn series(&self, times: &[f64]) -> FunctionalSeries {
        FunctionalSeries {
            name: self.name.clone(),
            times: times.to_vec(),
            values: self.mean.clone(),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassBoundRow {
    pub time: f64,
    pub mean: f64,
    pub std_error: f64,
    /// `M(0) e^{-mu_* t} + sup Lambda (1 - e^{-mu_* t}) / mu_*`.
    pub envelope: f64,
    /// `M(0) + (sup Lambda / mu_*) e^{mu_* t}`.
    pub printed_bound: f64,
}

impl MassBoundRow {
    pub fn slack(&self) -> f64 {
        self.envelope - self.mean
    }

    pub fn printed_slack(&self) -> f64 {
        self.printed_bound - self.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MassBoundReport {
    Skipped { reason: String },
    Checked { mu_inf: f64, rows: Vec<MassBoundRow> },
}

impl MassBoundReport {
    /// Both bounds hold at every time within `k` standard errors.
    pub fn holds_within(&self, k: f64) -> Option<bool> {
        match self {
            Self::Skipped { .. } => None,
            Self::Checked { rows, .. } => Some(
                rows.iter()
                    .all(|r| r.slack() >= -k * r.std_error && r.printed_slack() >= -k * r.std_error),
            ),
        }
    }
}

/// Compares the mean total mass with the bounded Gronwall envelope and with
/// the growing bound `M(0) + (sup Lambda / mu_*) e^{mu_* t}`.
pub fn check_mass_bound(total_mass: &FunctionalStats, times: &[f64], coeffs: &CoefficientSet) -> MassBoundReport {
    let mu = coeffs.mu_inf();
    if !(mu > 0.0) {
        return MassBoundReport::Skipped {
            reason: format!("mu_* = {mu} is not positive"),
        };
    }
    let Some(&m0) = total_mass.mean.first() else {
        return MassBoundReport::Skipped {
            reason: "empty series".into(),
        };
    };
    let lambda_sup = coeffs.lambda.max();
    let rows = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let decay = (-mu * t).exp();
            MassBoundRow {
                time: t,
                mean: total_mass.mean[k],
                std_error: total_mass.std_error[k],
                envelope: m0 * decay + lambda_sup * (1.0 - decay) / mu,
                printed_bound: m0 + lambda_sup / mu * (mu * t).exp(),
            }
        })
        .collect();
    MassBoundReport::Checked { mu_inf: mu, rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservedRegime {
    Permanent,
    Extinct,
    Indeterminate,
}

impl ObservedRegime {
    pub fn label(self) -> &'static str {
        match self {
            Self::Permanent => "observed-permanent",
            Self::Extinct => "observed-extinct",
            Self::Indeterminate => "observed-indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions {
    /// Lower bound on the liminf proxy for a permanent verdict.
    pub permanence_floor: f64,
    /// Record the space-time fraction where the permanence hypotheses hold.
    pub monitor_hypotheses: bool,
    /// Time and exponent of the monitored inverse moment.
    pub inverse_moment: Option<(f64, f64)>,
    /// Required R^2 of the extinction fit.
    pub min_r_squared: f64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            permanence_floor: 1e-3,
            monitor_hypotheses: true,
            inverse_moment: Some((4.0, 2.0)),
            min_r_squared: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseMomentSummary {
    pub time: f64,
    pub p: f64,
    /// Mean over paths with `S + R > 0` everywhere.
    pub mean: f64,
    pub std_error: f64,
    /// Paths where `S + R` vanished at some node.
    pub infinite_paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    /// Completed paths.
    pub paths: usize,
    pub aborted: usize,
    pub times: Vec<f64>,
    /// One entry per name in [`FUNCTIONAL_NAMES`].
    pub functionals: Vec<FunctionalStats>,
    /// Mean over paths of the clamped fraction of the step ending at each time.
    pub clamp_fraction: Vec<f64>,
    /// Mean over paths of the mass added by clamping over the whole run.
    pub clamp_mass: f64,
    /// Mean over paths and recorded times of the fraction of the domain where
    /// all permanence hypotheses hold.
    pub hypothesis_fraction: Option<f64>,
    pub inverse_moment: Option<InverseMomentSummary>,
}

impl EnsembleStats {
    pub fn functional(&self, name: &str) -> Option<&FunctionalStats> {
        self.functionals.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub observed: ObservedRegime,
    pub predicted: PredictedRegime,
    /// The prediction made a claim that the simulation did not reproduce.
    pub mismatch: bool,
    /// Running time average of `(E int ((I+E)^2 ^ 1))^{1/2}`.
    pub permanence_average: FunctionalSeries,
    /// Standard error of `permanence_average`, propagated conservatively.
    pub permanence_std_error: Vec<f64>,
    /// Minimum of `permanence_average` over `t >= T/2`.
    pub liminf_proxy: f64,
    pub liminf_proxy_std_error: f64,
    /// `permanence_average` did not decrease over the last quarter horizon
    /// (within two standard errors).
    pub tail_nondecreasing: bool,
    pub rate_fit: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub stats: EnsembleStats,
    pub thresholds: ThresholdReport,
    pub verdict: Verdict,
}

struct PathRecord {
    times: Vec<f64>,
    functionals: Vec<[f64; 7]>,
    clamp_fraction: Vec<f64>,
    clamp_mass: f64,
    hypothesis: f64,
    inverse_moment: Option<f64>,
}

fn run_one(
    initial: &State,
    coeffs: &CoefficientSet,
    noise: &NoiseSpec,
    scheme: &SchemeConfig,
    basis: &SpectralBasis,
    stream: RngStream,
    options: &EnsembleOptions,
) -> Result<PathRecord, IntegratorError> {
    let grid = basis.grid();
    let mut rec = PathRecord {
        times: Vec::new(),
        functionals: Vec::new(),
        clamp_fraction: Vec::new(),
        clamp_mass: 0.0,
        hypothesis: 0.0,
        inverse_moment: None,
    };
    let mut exponent_error = None;
    simulate_observed(initial, coeffs, noise, scheme, basis, stream, &mut |ev| {
        rec.clamp_mass += ev.clamp.mass;
        if let Some((t, p)) = options.inverse_moment {
            if rec.inverse_moment.is_none() && ev.time >= t - 1e-9 {
                match inverse_moment(ev.state, grid, p) {
                    Ok(m) => rec.inverse_moment = Some(m.value),
                    Err(e) => exponent_error = Some(e),
                }
            }
        }
        if ev.record {
            rec.times.push(ev.time);
            rec.functionals.push(evaluate_functionals(ev.state, grid));
            rec.clamp_fraction.push(ev.clamp.fraction);
            if options.monitor_hypotheses {
                rec.hypothesis += check_permanence_hypotheses(ev.state, coeffs, grid).all_hold;
            }
        }
    })?;
    if let Some(AnalysisError::Exponent(p)) = exponent_error {
        return Err(IntegratorError::Config(format!("inverse moment exponent must be positive, got {p}")));
    }
    rec.hypothesis /= rec.times.len() as f64;
    Ok(rec)
}

/// Runs `paths` independent paths (path `p` uses `RngStream::new(seed, p)`),
/// aggregates the functionals and classifies the observed regime.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    initial: &State,
    coeffs: &CoefficientSet,
    noise: &NoiseSpec,
    scheme: &SchemeConfig,
    basis: &SpectralBasis,
    paths: usize,
    seed: u64,
    options: &EnsembleOptions,
) -> Result<EnsembleResult, AnalysisError> {
    if paths == 0 {
        return Err(AnalysisError::NoPaths);
    }
    scheme.validate()?;
    let outcomes: Vec<Result<PathRecord, IntegratorError>> = (0..paths as u64)
        .into_par_iter()
        .map(|p| run_one(initial, coeffs, noise, scheme, basis, RngStream::new(seed, p), options))
        .collect();
    let mut records = Vec::with_capacity(paths);
    let mut aborted = 0;
    for outcome in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(IntegratorError::Divergence { .. }) => aborted += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if records.is_empty() {
        return Err(AnalysisError::AllAborted(aborted));
    }
    let m = records.len() as f64;
    let times = records[0].times.clone();
    let functionals = FUNCTIONAL_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let samples: Vec<Vec<f64>> = records.iter().map(|r| r.functionals.iter().map(|f| f[k]).collect()).collect();
            FunctionalStats::from_samples(name, &samples)
        })
        .collect();
    let clamp_fraction = (0..times.len())
        .map(|k| records.iter().map(|r| r.clamp_fraction[k]).sum::<f64>() / m)
        .collect();
    let clamp_mass = records.iter().map(|r| r.clamp_mass).sum::<f64>() / m;
    let hypothesis_fraction = options
        .monitor_hypotheses
        .then(|| records.iter().map(|r| r.hypothesis).sum::<f64>() / m);
    let inverse_moment = options.inverse_moment.and_then(|(time, p)| {
        let all: Vec<f64> = records.iter().filter_map(|r| r.inverse_moment).collect();
        if all.is_empty() {
            return None;
        }
        let finite: Vec<f64> = all.iter().copied().filter(|v| v.is_finite()).collect();
        let n = finite.len() as f64;
        let mean = if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / n };
        let std_error = if finite.len() > 1 {
            (finite.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Some(InverseMomentSummary {
            time,
            p,
            mean,
            std_error,
            infinite_paths: all.len() - finite.len(),
        })
    });
    let stats = EnsembleStats {
        paths: records.len(),
        aborted,
        times,
        functionals,
        clamp_fraction,
        clamp_mass,
        hypothesis_fraction,
        inverse_moment,
    };
    let thresholds = compute_thresholds(coeffs, noise, basis.grid());
    let infected: Vec<Vec<f64>> = records.iter().map(|r| r.functionals.iter().map(|f| f[1]).collect()).collect();
    let rate_fit = fit_ensemble_rate(&stats.times, &infected, extinction_window(&stats.times)).ok();
    let verdict = classify(&stats, &thresholds, options, rate_fit)?;
    Ok(EnsembleResult {
        stats,
        thresholds,
        verdict,
    })
}

/// Applies the verdict rules to aggregated statistics.
/// `[min(1, T/4), T]`.
pub fn extinction_window(times: &[f64]) -> (f64, f64) {
    let horizon = times.last().copied().unwrap_or(0.0);
    (1.0f64.min(horizon / 4.0), horizon)
}

/// Applies the verdict rules to aggregated statistics. Without `rate_fit`
/// the mean infected mass is fitted over [`extinction_window`].
pub fn classify(
    stats: &EnsembleStats,
    thresholds: &ThresholdReport,
    options: &EnsembleOptions,
    rate_fit: Option<RateFit>,
) -> Result<Verdict, AnalysisError> {
    let times = &stats.times;
    let horizon = *times.last().ok_or(AnalysisError::EmptySeries)?;
    let inner = stats.functional(PERMANENCE_INNER).expect("permanence inner integral is always recorded");
    let root: Vec<f64> = inner.mean.iter().map(|m| m.max(0.0).sqrt()).collect();
    let root_se: Vec<f64> = inner
        .mean
        .iter()
        .zip(&inner.std_error)
        .map(|(m, se)| if *m > 0.0 { se / (2.0 * m.sqrt()) } else { 0.0 })
        .collect();
    let permanence_average = time_average(&FunctionalSeries {
        name: "permanence_statistic".into(),
        times: times.clone(),
        values: root,
    })?;
    let permanence_std_error = time_average(&FunctionalSeries {
        name: "permanence_statistic_se".into(),
        times: times.clone(),
        values: root_se,
    })?
    .values;

    let (liminf_proxy, liminf_proxy_std_error) = times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= horizon / 2.0 - 1e-12)
        .map(|(k, _)| (permanence_average.values[k], permanence_std_error[k]))
        .fold((f64::INFINITY, 0.0), |acc, x| if x.0 < acc.0 { x } else { acc });
    let quarter = times.iter().position(|&t| t >= 0.75 * horizon - 1e-12).unwrap_or(0);
    let last = times.len() - 1;
    let tail_nondecreasing = permanence_average.values[last] + 2.0 * permanence_std_error[last]
        >= permanence_average.values[quarter];

    let rate_fit = rate_fit.or_else(|| {
        let infected = stats.functional(INFECTED_MASS).expect("infected mass is always recorded");
        fit_exponential_rate(&infected.series(times), extinction_window(times)).ok()
    });

    let extinct = rate_fit.is_some_and(|f| {
        f.rate > 0.0
            && f.r_squared >= options.min_r_squared
            && f.rate >= thresholds.extinction_rate - 2.0 * f.total_std_error()
    });
    let observed = if extinct {
        ObservedRegime::Extinct
    } else if horizon > 0.0 && liminf_proxy >= options.permanence_floor && tail_nondecreasing {
        ObservedRegime::Permanent
    } else {
        ObservedRegime::Indeterminate
    };
    let mismatch = match thresholds.regime {
        PredictedRegime::Extinction => observed != ObservedRegime::Extinct,
        PredictedRegime::PermanenceCandidate => observed != ObservedRegime::Permanent,
        PredictedRegime::Indeterminate => false,
    };
    Ok(Verdict {
        observed,
        predicted: thresholds.regime,
        mismatch,
        permanence_average,
        permanence_std_error,
        liminf_proxy,
        liminf_proxy_std_error,
        tail_nondecreasing,
        rate_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{simulate_path, ClampPolicy};
    use crate::model::Rates;
    use crate::spectral::Field;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid() -> DomainGrid {
        DomainGrid::interval(33).unwrap()
    }

    fn series(times: Vec<f64>, f: impl Fn(f64) -> f64) -> FunctionalSeries {
        let values = times.iter().map(|&t| f(t)).collect();
        FunctionalSeries::new("f", times, values).unwrap()
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn functional_examples() {
        let g = grid();
        let zero = State::constant(&g, [0.0; 4]).unwrap();
        assert_eq!(total_mass(&zero, &g), 0.0);
        assert_eq!(infected_mass(&zero, &g), 0.0);
        assert_eq!(permanence_inner(&zero, &g), 0.0);
        let capped = State::constant(&g, [0.0, 1.0, 2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(permanence_inner(&capped, &g), 1.0, epsilon = 1e-12);
        let s = State::constant(&g, [2.0, 0.0, 0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(inverse_moment(&s, &g, 2.0).unwrap().value, 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_moment_sentinel() {
        let g = grid();
        let mut fields = [(); 4].map(|_| Field::constant(&g, 1.0));
        fields[0] = Field::from_fn(&g, |x, _| if x > 0.5 { 0.0 } else { 1.0 });
        fields[3] = Field::zeros(&g);
        let st = State::new(&g, fields).unwrap();
        let m = inverse_moment(&st, &g, 1.0).unwrap();
        assert!(m.zero_nodes && m.value.is_infinite());
        assert!(inverse_moment(&st, &g, 0.0).is_err());
    }

    #[test]
    fn time_average_examples() {
        let c = time_average(&series(linspace(0.0, 5.0, 51), |_| 3.0)).unwrap();
        assert!(c.values.iter().all(|v| (v - 3.0).abs() < 1e-14));
        let lin = time_average(&series(linspace(0.0, 10.0, 1001), |t| t)).unwrap();
        for (t, v) in lin.times.iter().zip(&lin.values).skip(1) {
            assert_abs_diff_eq!(*v, t / 2.0, epsilon = 1e-6);
        }
        // oracle: fraction of samples in the "on" half-periods
        let times: Vec<f64> = (0..=100_000).map(|k| k as f64 * 1e-3).collect();
        let wave = series(times, |t| if (t % 2.0) >= 1.0 { 1.0 } else { 0.0 });
        let avg = time_average(&wave).unwrap();
        let on = wave.values.iter().filter(|&&v| v == 1.0).count() as f64 / wave.len() as f64;
        assert!((avg.values.last().unwrap() - 0.5).abs() < 0.05);
        assert!((on - 0.5).abs() < 0.05);
        assert!(time_average(&series(vec![], |t| t)).is_err());
    }

    #[test]
    fn rate_fit_examples() {
        let t = linspace(0.0, 20.0, 201);
        let exact = fit_exponential_rate(&series(t.clone(), |t| 5.0 * (-0.3 * t).exp()), (0.0, 20.0)).unwrap();
        assert_abs_diff_eq!(exact.rate, 0.3, epsilon = 1e-6);
        assert!(exact.r_squared > 1.0 - 1e-12);
        let wobble = fit_exponential_rate(
            &series(t.clone(), |t| (-0.3 * t).exp() * (1.0 + 0.01 * t.sin())),
            (0.0, 20.0),
        )
        .unwrap();
        assert_abs_diff_eq!(wobble.rate, 0.3, epsilon = 1e-2);
        let flat = fit_exponential_rate(&series(t.clone(), |_| 2.0), (0.0, 20.0)).unwrap();
        assert!(flat.rate.abs() < 1e-9);
        let cut = fit_exponential_rate(&series(t, |t| if t > 10.0 { 0.0 } else { (-t).exp() }), (0.0, 20.0)).unwrap();
        assert!(cut.shrunk);
        assert!(cut.window.1 <= 10.0);
        assert_abs_diff_eq!(cut.rate, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mass_bound_at_time_zero_and_skip() {
        let g = grid();
        let coeffs = CoefficientSet::homogeneous(&g, &Rates { lambda: 1.0, mu: [0.5; 4], ..Rates::zero() }).unwrap();
        let stats = FunctionalStats {
            name: TOTAL_MASS.into(),
            mean: vec![2.0, 1.5],
            std_error: vec![0.0, 0.0],
            lower: vec![2.0, 1.5],
            upper: vec![2.0, 1.5],
        };
        let MassBoundReport::Checked { rows, .. } = check_mass_bound(&stats, &[0.0, 1.0], &coeffs) else {
            panic!("expected a checked report");
        };
        assert_eq!(rows[0].slack(), 0.0);
        assert_eq!(rows[0].envelope, 2.0);
        let free = CoefficientSet::homogeneous(&g, &Rates { mu: [0.0, 1.0, 1.0, 1.0], ..Rates::zero() }).unwrap();
        assert!(matches!(check_mass_bound(&stats, &[0.0, 1.0], &free), MassBoundReport::Skipped { .. }));
    }

    #[test]
    fn degenerate_ensemble_matches_single_path() {
        let g = grid();
        let basis = SpectralBasis::complete(&g);
        let coeffs = CoefficientSet::homogeneous(&g, &Rates { lambda: 0.5, mu: [0.1; 4], alpha: 0.8, beta: 0.2, gamma: 0.3, sigma: 0.4, diffusivity: [0.01; 4] }).unwrap();
        let init = State::new(&g, [0.8, 0.05, 0.1, 0.05].map(|c| Field::from_fn(&g, |x, _| c * (1.0 + 0.5 * x)))).unwrap();
        let scheme = SchemeConfig { dt: 0.01, t_final: 2.0, clamp: ClampPolicy::Hard, record_every: 10 };
        let res = run_ensemble(&init, &coeffs, &NoiseSpec::zero(), &scheme, &basis, 1, 9, &EnsembleOptions::default()).unwrap();
        let mut traj = simulate_path(&init, &coeffs, &NoiseSpec::zero(), &scheme, &basis, RngStream::new(9, 0)).unwrap();
        record_functionals(&mut traj, &g);
        assert_eq!(res.stats.times, traj.times);
        for (stats, series) in res.stats.functionals.iter().zip(&traj.functionals) {
            assert_eq!(stats.name, series.name);
            assert_eq!(stats.mean, series.values);
            assert!(stats.std_error.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn no_inflow_gives_extinction() {
        let g = grid();
        let basis = SpectralBasis::complete(&g);
        let coeffs = CoefficientSet::homogeneous(&g, &Rates { lambda: 0.5, mu: [0.1, 0.3, 0.2, 0.1], gamma: 0.1, beta: 0.2, ..Rates::zero() }).unwrap();
        let init = State::constant(&g, [0.8, 0.1, 0.1, 0.0]).unwrap();
        let noise = NoiseSpec::geometric(8, [0.05; 4], 0.5).unwrap();
        let scheme = SchemeConfig { dt: 0.01, t_final: 10.0, clamp: ClampPolicy::Hard, record_every: 10 };
        let res = run_ensemble(&init, &coeffs, &noise, &scheme, &basis, 16, 1, &EnsembleOptions::default()).unwrap();
        assert_eq!(res.verdict.observed, ObservedRegime::Extinct, "{:?}", res.verdict.rate_fit);
        assert_eq!(res.verdict.predicted, PredictedRegime::Extinction);
        assert!(!res.verdict.mismatch);
        assert_eq!(res.stats.aborted, 0);
        for f in &res.stats.functionals {
            for k in 0..f.mean.len() {
                assert!(f.lower[k] <= f.upper[k]);
            }
        }
    }

    #[test]
    fn ensemble_rejects_zero_paths() {
        let g = grid();
        let basis = SpectralBasis::complete(&g);
        let coeffs = CoefficientSet::homogeneous(&g, &Rates::zero()).unwrap();
        let init = State::constant(&g, [1.0; 4]).unwrap();
        let err = run_ensemble(&init, &coeffs, &NoiseSpec::zero(), &SchemeConfig::default(), &basis, 0, 0, &EnsembleOptions::default());
        assert_eq!(err.unwrap_err(), AnalysisError::NoPaths);
    }

    proptest! {
        #[test]
        fn constant_states_integrate_to_point_values(s in 0.0..5.0f64, e in 0.0..5.0f64, i in 0.0..5.0f64, r in 0.0..5.0f64) {
            let g = grid();
            let st = State::constant(&g, [s, e, i, r]).unwrap();
            prop_assert!((total_mass(&st, &g) - (s + e + i + r)).abs() < 1e-12);
            prop_assert!((infected_mass(&st, &g) - (i + e)).abs() < 1e-12);
            prop_assert!((permanence_inner(&st, &g) - ((i + e) * (i + e)).min(1.0)).abs() < 1e-12);
        }

        #[test]
        fn permanence_inner_in_unit_interval(vals in proptest::collection::vec(0.0..10.0f64, 33 * 4)) {
            let g = grid();
            let fields = [0, 1, 2, 3].map(|c| Field::from_values(&g, vals[c * 33..(c + 1) * 33].to_vec()).unwrap());
            let st = State::new(&g, fields).unwrap();
            let p = permanence_inner(&st, &g);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
        }
    }
}
