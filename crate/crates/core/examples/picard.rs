//! Picard iteration of the clamped mild-solution map on a short horizon,
//! cross-checked against the time stepper on a finer grid.
//!
//! ```text
//! cargo run --release --example picard
//! ```

use seirs_spde::integrator::{picard_cross_check, ClampPolicy, PicardConfig};
use seirs_spde::model::{CoefficientSet, Rates, State};
use seirs_spde::noise::{NoiseSpec, RngStream};
use seirs_spde::spectral::{DomainGrid, Field, SpectralBasis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DomainGrid::interval(64)?;
    let basis = SpectralBasis::complete(&grid);
    let coeffs = CoefficientSet::homogeneous(
        &grid,
        &Rates {
            lambda: 0.5,
            mu: [0.1; 4],
            alpha: 0.8,
            beta: 0.2,
            gamma: 0.3,
            sigma: 0.4,
            diffusivity: [0.01; 4],
        },
    )?;
    let initial = State::new(
        &grid,
        [0.8, 0.05, 0.1, 0.05].map(|c| Field::from_fn(&grid, |x, _| c * (1.0 + 0.5 * (std::f64::consts::PI * x).cos()))),
    )?;
    let noise = NoiseSpec::geometric(16, [0.005; 4], 0.5)?;

    for horizon in [0.1, 0.2, 0.4, 0.8] {
        let config = PicardConfig {
            horizon,
            substeps: (horizon / 0.005).round() as usize,
            ..PicardConfig::default()
        };
        let check = picard_cross_check(&initial, &coeffs, &noise, &config, 50, &basis, ClampPolicy::Hard, RngStream::new(1, 0))?;
        let o = &check.outcome;
        let ratios: Vec<String> = o.ratios.iter().take(5).map(|r| format!("{r:.3}")).collect();
        println!(
            "T0 = {horizon}: {} iterations, ratios [{}], distance to dt = {:.0e} stepper {:.2e}",
            o.differences.len(),
            ratios.join(", "),
            check.reference_dt,
            check.stepper_distance
        );
    }
    Ok(())
}
