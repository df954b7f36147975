//! Mode execution, CSV output and the run manifest.
//!
//! | mode          | files                                                              |
//! |---------------|--------------------------------------------------------------------|
//! | `simulate`    | `trajectory.csv`                                                   |
//! | `ensemble`    | `ensemble_stats.csv`, `verdict.csv`, `mass_bound.csv`               |
//! | `thresholds`  | `thresholds.csv`                                                   |
//! | `convergence` | `convergence.csv`, `convergence_summary.csv`                       |
//! | `picard`      | `picard.csv`, `picard_summary.csv`                                 |
//!
//! Every run also writes `manifest.json`. Numbers are written in full
//! precision scientific notation (`1.5e-1`).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    check_mass_bound, evaluate_functionals, run_ensemble, AnalysisError, EnsembleOptions, MassBoundReport, FUNCTIONAL_NAMES,
    TOTAL_MASS,
};
use crate::config::{parse_config, ConfigError, Mode, PicardBlock, Resolved, RunConfig};
use crate::integrator::{
    convergence_study, picard_cross_check, simulate_observed, ClampStats, ConvergenceProblem, IntegratorError, Study,
};
use crate::model::{compute_thresholds, Compartment};
use crate::noise::RngStream;

/// Environment variable overriding the output directory of the config file.
pub const OUTPUT_ENV: &str = "SEIRS_SPDE_OUT";

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("configuration error at {0}")]
    Config(#[from] ConfigError),
    #[error("no mode given on the command line or in run.mode")]
    NoMode,
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
}

/// Command-line overrides applied on top of a configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Output directory: `--out`, then [`OUTPUT_ENV`], then `run.output`, then `out`.
pub fn output_dir(cli: Option<&Path>, env: Option<&str>, config: Option<&Path>) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Applies overrides and returns the fully resolved configuration that the
/// manifest echoes.
pub fn apply_overrides(mut config: RunConfig, overrides: &Overrides, env_out: Option<&str>) -> Result<RunConfig, RunError> {
    if let Some(mode) = overrides.mode {
        config.run.mode = Some(mode);
    }
    if config.run.mode.is_none() {
        return Err(RunError::NoMode);
    }
    if let Some(seed) = overrides.seed {
        config.run.seed = seed;
    }
    config.run.output = Some(output_dir(overrides.out.as_deref(), env_out, config.run.output.as_deref()));
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputChecksum {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub mode: Mode,
    pub seed: u64,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    /// `ok`, or the error that ended the run.
    pub status: String,
    pub outputs: Vec<OutputChecksum>,
    pub config: RunConfig,
    /// The same configuration as a TOML document accepted by `--config`.
    pub config_toml: String,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, RunError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Result of one run: the files written and a human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    /// Lines that deserve attention, such as a regime mismatch.
    pub warnings: Vec<String>,
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn key_value(&mut self, name: &str, rows: Vec<(String, String)>) -> Result<(), RunError> {
        let header = ["key".to_string(), "value".to_string()];
        self.csv(name, &header, rows.into_iter().map(|(k, v)| vec![k, v]))
    }
}

/// Executes the configured mode and writes all outputs into
/// `config.run.output`. Files written before a failure are kept and listed
/// in the manifest, whose status records the error.
pub fn execute(config: &RunConfig, threads: usize) -> Result<RunReport, RunError> {
    let mode = config.run.mode.ok_or(RunError::NoMode)?;
    let dir = config.run.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    let resolved = config.resolve()?;
    let start = Instant::now();
    let mut out = Outputs {
        dir: dir.clone(),
        files: Vec::new(),
    };
    let mut summary = Vec::new();
    let mut warnings = Vec::new();
    let result = match mode {
        Mode::Simulate => simulate_mode(config, &resolved, &mut out, &mut summary),
        Mode::Ensemble => ensemble_mode(config, &resolved, &mut out, &mut summary, &mut warnings),
        Mode::Thresholds => thresholds_mode(&resolved, &mut out, &mut summary),
        Mode::Convergence => convergence_mode(config, &resolved, &mut out, &mut summary),
        Mode::Picard => picard_mode(config, &resolved, &mut out, &mut summary),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    };
    let outputs = out
        .files
        .iter()
        .map(|p| -> Result<OutputChecksum, RunError> {
            Ok(OutputChecksum {
                file: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                sha256: hex::encode(Sha256::digest(fs::read(p)?)),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode,
        seed: config.run.seed,
        threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        status,
        outputs,
        config: config.clone(),
        config_toml: config.to_toml(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    result?;
    let mut files = out.files;
    files.push(manifest_path);
    Ok(RunReport {
        mode,
        out_dir: dir,
        files,
        summary,
        warnings,
    })
}

/// Column names of `trajectory.csv`.
pub fn trajectory_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for c in Compartment::ALL {
        for stat in ["min", "max", "mean"] {
            h.push(format!("{}_{stat}", c.symbol()));
        }
    }
    h.extend(FUNCTIONAL_NAMES.iter().map(|s| s.to_string()));
    h.push("clamped_fraction".into());
    h.push("clamped_mass".into());
    h
}

fn simulate_mode(config: &RunConfig, r: &Resolved, out: &mut Outputs, summary: &mut Vec<String>) -> Result<(), RunError> {
    let mut rows = Vec::new();
    let mut pending = (0.0, 0.0, 0usize);
    let outcome = simulate_observed(
        &r.initial,
        &r.coeffs,
        &r.noise,
        &r.scheme,
        &r.basis,
        RngStream::new(config.run.seed, 0),
        &mut |ev| {
            if ev.step > 0 {
                pending.0 += ev.clamp.fraction;
                pending.1 += ev.clamp.mass;
                pending.2 += 1;
            }
            if !ev.record {
                return;
            }
            let clamp = if pending.2 > 0 {
                ClampStats {
                    fraction: pending.0 / pending.2 as f64,
                    mass: pending.1,
                }
            } else {
                ClampStats::default()
            };
            pending = (0.0, 0.0, 0);
            let mut row = vec![num(ev.time)];
            for f in ev.state.fields() {
                row.push(num(f.min()));
                row.push(num(f.max()));
                row.push(num(r.grid.integrate(f.values())));
            }
            row.extend(evaluate_functionals(ev.state, &r.grid).map(num));
            row.push(num(clamp.fraction));
            row.push(num(clamp.mass));
            rows.push(row);
        },
    );
    let recorded = rows.len();
    out.csv("trajectory.csv", &trajectory_header(), rows)?;
    summary.push(format!("recorded {recorded} snapshots up to t = {}", r.scheme.t_final));
    Ok(outcome?)
}

/// Column names of `ensemble_stats.csv`.
pub fn ensemble_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for name in FUNCTIONAL_NAMES {
        for stat in ["mean", "se", "lo", "hi"] {
            h.push(format!("{name}_{stat}"));
        }
    }
    h.extend(["clamped_fraction_mean", "permanence_average", "permanence_average_se"].map(String::from));
    h
}

pub const MASS_BOUND_HEADER: [&str; 7] = ["t", "mean", "se", "envelope", "printed_bound", "slack", "printed_slack"];

fn ensemble_mode(
    config: &RunConfig,
    r: &Resolved,
    out: &mut Outputs,
    summary: &mut Vec<String>,
    warnings: &mut Vec<String>,
) -> Result<(), RunError> {
    let options = EnsembleOptions::default();
    let res = run_ensemble(&r.initial, &r.coeffs, &r.noise, &r.scheme, &r.basis, config.run.paths, config.run.seed, &options)?;
    let s = &res.stats;
    let v = &res.verdict;
    let rows = (0..s.times.len()).map(|k| {
        let mut row = vec![num(s.times[k])];
        for f in &s.functionals {
            row.extend([num(f.mean[k]), num(f.std_error[k]), num(f.lower[k]), num(f.upper[k])]);
        }
        row.extend([num(s.clamp_fraction[k]), num(v.permanence_average.values[k]), num(v.permanence_std_error[k])]);
        row
    });
    out.csv("ensemble_stats.csv", &ensemble_header(), rows)?;

    let total = s.functional(TOTAL_MASS).expect("total mass is always recorded");
    let bound = check_mass_bound(total, &s.times, &r.coeffs);
    let mass_bound_holds = match &bound {
        MassBoundReport::Checked { rows, .. } => {
            let header = MASS_BOUND_HEADER.map(String::from);
            out.csv(
                "mass_bound.csv",
                &header,
                rows.iter().map(|m| {
                    vec![
                        num(m.time),
                        num(m.mean),
                        num(m.std_error),
                        num(m.envelope),
                        num(m.printed_bound),
                        num(m.slack()),
                        num(m.printed_slack()),
                    ]
                }),
            )?;
            bound.holds_within(2.0).unwrap_or(false).to_string()
        }
        MassBoundReport::Skipped { reason } => format!("skipped ({reason})"),
    };

    let fit = v.rate_fit;
    let opt = |x: Option<f64>| x.map(num).unwrap_or_else(|| "NA".into());
    let mut rows: Vec<(String, String)> = vec![
        ("paths_completed".into(), s.paths.to_string()),
        ("paths_aborted".into(), s.aborted.to_string()),
        ("predicted_regime".into(), v.predicted.label().into()),
        ("observed_regime".into(), v.observed.label().into()),
        ("mismatch".into(), v.mismatch.to_string()),
        ("m".into(), num(res.thresholds.extinction_rate)),
        ("fitted_rate".into(), opt(fit.map(|f| f.rate))),
        ("fitted_rate_se".into(), opt(fit.map(|f| f.total_std_error()))),
        ("fit_r_squared".into(), opt(fit.map(|f| f.r_squared))),
        ("fit_t_start".into(), opt(fit.map(|f| f.window.0))),
        ("fit_t_end".into(), opt(fit.map(|f| f.window.1))),
        ("liminf_proxy".into(), num(v.liminf_proxy)),
        ("liminf_proxy_se".into(), num(v.liminf_proxy_std_error)),
        ("tail_nondecreasing".into(), v.tail_nondecreasing.to_string()),
        ("hypothesis_fraction".into(), opt(s.hypothesis_fraction)),
        ("clamped_mass_mean".into(), num(s.clamp_mass)),
        ("mass_bound_holds".into(), mass_bound_holds),
    ];
    if let Some(im) = &s.inverse_moment {
        rows.push(("inverse_moment_t".into(), num(im.time)));
        rows.push(("inverse_moment_p".into(), num(im.p)));
        rows.push(("inverse_moment_mean".into(), num(im.mean)));
        rows.push(("inverse_moment_se".into(), num(im.std_error)));
        rows.push(("inverse_moment_infinite_paths".into(), im.infinite_paths.to_string()));
    }
    summary.extend(rows.iter().map(|(k, v)| format!("{k}: {v}")));
    out.key_value("verdict.csv", rows)?;
    if v.mismatch {
        warnings.push(format!(
            "REGIME MISMATCH: predicted {} but {}",
            v.predicted.label(),
            v.observed.label()
        ));
    }
    if s.aborted > 0 {
        warnings.push(format!("{} of {} paths aborted on divergence", s.aborted, s.aborted + s.paths));
    }
    Ok(())
}

fn thresholds_mode(r: &Resolved, out: &mut Outputs, summary: &mut Vec<String>) -> Result<(), RunError> {
    let report = compute_thresholds(&r.coeffs, &r.noise, &r.grid);
    let rows: Vec<(String, String)> = report.rows().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    summary.extend(rows.iter().map(|(k, v)| format!("{k}: {v}")));
    out.key_value("thresholds.csv", rows)
}

pub const CONVERGENCE_HEADER: [&str; 3] = ["level", "error", "std_error"];

fn convergence_mode(config: &RunConfig, r: &Resolved, out: &mut Outputs, summary: &mut Vec<String>) -> Result<(), RunError> {
    let block = config.convergence.as_ref().ok_or_else(|| ConfigError {
        path: "convergence".into(),
        message: "convergence mode needs a [convergence] block".into(),
    })?;
    let study = block.study()?;
    let problem = ConvergenceProblem {
        initial: r.initial.clone(),
        coeffs: r.coeffs.clone(),
        noise: r.noise.clone(),
        scheme: r.scheme,
        basis: r.basis.clone(),
    };
    let table = convergence_study(&problem, &study, config.run.paths, config.run.seed, None)?;
    let header = CONVERGENCE_HEADER.map(String::from);
    out.csv(
        "convergence.csv",
        &header,
        table.rows.iter().map(|row| vec![num(row.parameter), num(row.error), num(row.std_error)]),
    )?;
    let kind = match study {
        Study::TimeStep(_) => "dt",
        Study::Truncation(_) => "n",
    };
    let rows: Vec<(String, String)> = vec![
        ("study".into(), kind.into()),
        ("paths".into(), table.paths.to_string()),
        ("reference_level".into(), num(table.reference_parameter)),
        ("observed_order".into(), table.observed_order.map(num).unwrap_or_else(|| "NA".into())),
    ];
    summary.extend(rows.iter().map(|(k, v)| format!("{k}: {v}")));
    out.key_value("convergence_summary.csv", rows)
}

pub const PICARD_HEADER: [&str; 3] = ["iteration", "difference", "ratio"];

fn picard_mode(config: &RunConfig, r: &Resolved, out: &mut Outputs, summary: &mut Vec<String>) -> Result<(), RunError> {
    let block = config.picard.clone().unwrap_or_else(PicardBlock::default);
    let pc = block.picard_config()?;
    let refinement = block.refinement()?;
    let header = PICARD_HEADER.map(String::from);
    let check = match picard_cross_check(
        &r.initial,
        &r.coeffs,
        &r.noise,
        &pc,
        refinement,
        &r.basis,
        r.scheme.clamp,
        RngStream::new(config.run.seed, 0),
    ) {
        Ok(c) => c,
        Err(IntegratorError::ContractionFailure { ratios }) => {
            let rows = ratios
                .iter()
                .enumerate()
                .map(|(m, q)| vec![(m + 1).to_string(), "NA".into(), num(*q)])
                .collect::<Vec<_>>();
            out.csv("picard.csv", &header, rows)?;
            return Err(IntegratorError::ContractionFailure { ratios }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let o = &check.outcome;
    let rows = o.differences.iter().enumerate().map(|(m, d)| {
        let ratio = if m > 0 && o.differences[m - 1] > 0.0 && *d > 0.0 {
            num(d / o.differences[m - 1])
        } else {
            "NA".into()
        };
        vec![m.to_string(), num(*d), ratio]
    });
    out.csv("picard.csv", &header, rows)?;
    let max_ratio = o.ratios.iter().copied().fold(f64::NAN, f64::max);
    let rows: Vec<(String, String)> = vec![
        ("horizon".into(), num(pc.horizon)),
        ("substeps".into(), pc.substeps.to_string()),
        ("iterations".into(), o.differences.len().to_string()),
        ("converged".into(), o.converged.to_string()),
        ("max_ratio".into(), if max_ratio.is_nan() { "NA".into() } else { num(max_ratio) }),
        ("reference_dt".into(), num(check.reference_dt)),
        ("stepper_distance".into(), num(check.stepper_distance)),
    ];
    summary.extend(rows.iter().map(|(k, v)| format!("{k}: {v}")));
    out.key_value("picard_summary.csv", rows)
}
