//! Strong convergence in the time step and in the noise truncation, both
//! under common random numbers.
//!
//! ```text
//! cargo run --release --example convergence_study
//! ```

use seirs_spde::integrator::{convergence_study, ClampPolicy, ConvergenceProblem, SchemeConfig, Study};
use seirs_spde::model::{CoefficientSet, Rates, State};
use seirs_spde::noise::NoiseSpec;
use seirs_spde::spectral::{DomainGrid, SpectralBasis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DomainGrid::interval(32)?;
    let problem = ConvergenceProblem {
        initial: State::constant(&grid, [0.8, 0.05, 0.1, 0.05])?,
        coeffs: CoefficientSet::homogeneous(
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
        )?,
        noise: NoiseSpec::geometric(16, [0.5; 4], 0.5)?,
        scheme: SchemeConfig {
            dt: 1e-3,
            t_final: 1.0,
            clamp: ClampPolicy::Hard,
            record_every: 1,
        },
        basis: SpectralBasis::complete(&grid),
    };

    let dts = vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 512.0];
    let table = convergence_study(&problem, &Study::TimeStep(dts), 100, 5, None)?;
    println!("time-step study against dt = {}:", table.reference_parameter);
    for row in &table.rows {
        println!("  dt = {:<9} RMS sup error {:.3e} +- {:.1e}", row.parameter, row.error, row.std_error);
    }
    println!("  observed order {:.3}", table.observed_order.unwrap_or(f64::NAN));

    let table = convergence_study(&problem, &Study::Truncation(vec![2, 4, 8, 16]), 100, 5, None)?;
    println!("truncation study against n = {}:", table.reference_parameter);
    for row in &table.rows {
        println!("  n = {:<3} mean squared L2 distance {:.3e} +- {:.1e}", row.parameter, row.error, row.std_error);
    }
    Ok(())
}
