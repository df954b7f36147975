//! Monte Carlo ensemble in the extinction regime: the mean infected mass
//! decays at least at the predicted rate.
//!
//! ```text
//! cargo run --release --example extinction_ensemble
//! ```

use seirs_spde::analysis::{run_ensemble, EnsembleOptions, INFECTED_MASS};
use seirs_spde::integrator::{ClampPolicy, SchemeConfig};
use seirs_spde::model::{CoefficientSet, Rates, State};
use seirs_spde::noise::NoiseSpec;
use seirs_spde::spectral::{DomainGrid, SpectralBasis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DomainGrid::interval(32)?;
    let basis = SpectralBasis::complete(&grid);
    let coeffs = CoefficientSet::homogeneous(
        &grid,
        &Rates {
            lambda: 0.5,
            mu: [0.1, 0.3, 0.4, 0.1],
            alpha: 0.2,
            beta: 0.2,
            gamma: 0.3,
            sigma: 0.4,
            diffusivity: [0.01; 4],
        },
    )?;
    let noise = NoiseSpec::geometric(16, [0.05; 4], 0.5)?;
    let scheme = SchemeConfig {
        dt: 0.01,
        t_final: 30.0,
        clamp: ClampPolicy::Hard,
        record_every: 100,
    };
    let initial = State::constant(&grid, [0.8, 0.05, 0.1, 0.05])?;
    let res = run_ensemble(&initial, &coeffs, &noise, &scheme, &basis, 100, 2024, &EnsembleOptions::default())?;

    let infected = res.stats.functional(INFECTED_MASS).unwrap();
    for (k, t) in res.stats.times.iter().enumerate().step_by(5) {
        println!("t = {t:>4.1}  E[I+E mass] = {:.3e} +- {:.1e}", infected.mean[k], infected.std_error[k]);
    }
    let fit = res.verdict.rate_fit.as_ref().unwrap();
    println!(
        "fitted rate {:.4} +- {:.4} (R^2 {:.4}); guaranteed rate m = {}",
        fit.rate,
        fit.total_std_error(),
        fit.r_squared,
        res.thresholds.extinction_rate
    );
    println!(
        "predicted {}, observed {}, mismatch {}",
        res.verdict.predicted.label(),
        res.verdict.observed.label(),
        res.verdict.mismatch
    );
    Ok(())
}
