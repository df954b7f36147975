//! One sample path with spatially varying coefficients, reporting the
//! recorded functionals and how often the positivity clamp acted.
//!
//! ```text
//! cargo run --release --example simulate_path
//! ```

use seirs_spde::analysis::{record_functionals, TOTAL_MASS, INFECTED_MASS};
use seirs_spde::config::FieldSpec;
use seirs_spde::integrator::{simulate_path, ClampPolicy, SchemeConfig};
use seirs_spde::model::{CoefficientSet, Rates, State};
use seirs_spde::noise::{NoiseSpec, RngStream};
use seirs_spde::spectral::{DomainGrid, Field, SpectralBasis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DomainGrid::interval(64)?;
    let basis = SpectralBasis::complete(&grid);
    let mut coeffs = CoefficientSet::homogeneous(
        &grid,
        &Rates {
            lambda: 0.5,
            mu: [0.1; 4],
            alpha: 0.8,
            beta: 0.2,
            gamma: 0.3,
            sigma: 0.4,
            diffusivity: [0.01, 0.01, 0.005, 0.01],
        },
    )?;
    coeffs.alpha = FieldSpec::Expression("1.2 + 0.8*cos(pi*x)".into()).sample(&grid, "alpha")?;

    let initial = State::new(
        &grid,
        [0.8, 0.05, 0.1, 0.05].map(|c| Field::from_fn(&grid, |x, _| c * 2.0 * (1.0 - x))),
    )?;
    let noise = NoiseSpec::geometric(16, [0.1, 0.3, 0.3, 0.1], 0.5)?;
    let scheme = SchemeConfig {
        dt: 1e-3,
        t_final: 10.0,
        clamp: ClampPolicy::Hard,
        record_every: 1000,
    };
    let mut traj = simulate_path(&initial, &coeffs, &noise, &scheme, &basis, RngStream::new(1, 0))?;
    record_functionals(&mut traj, &grid);

    let total = traj.functionals.iter().find(|f| f.name == TOTAL_MASS).unwrap();
    let infected = traj.functionals.iter().find(|f| f.name == INFECTED_MASS).unwrap();
    println!("{:>5} {:>10} {:>10} {:>10}", "t", "mass", "infected", "min node");
    for (k, t) in traj.times.iter().enumerate() {
        println!("{t:>5.1} {:>10.5} {:>10.5} {:>10.2e}", total.values[k], infected.values[k], traj.states[k].min());
    }
    let clamped = traj.clamp.iter().filter(|c| c.fraction > 0.0).count();
    println!("clamp acted on {clamped} of {} steps", traj.clamp.len());
    Ok(())
}
