//! Q-Wiener increments from a truncated eigen-expansion, and the
//! common-random-number coupling between step sizes.
//!
//! ```text
//! cargo run --example noise_sampling
//! ```

use seirs_spde::noise::{NoiseSampler, NoiseSpec, RngStream};
use seirs_spde::spectral::{DomainGrid, SpectralBasis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DomainGrid::interval(32)?;
    let basis = SpectralBasis::complete(&grid);
    let spec = NoiseSpec::geometric(16, [0.0, 0.05, 0.05, 0.0], 0.5)?;
    println!("truncation n = {}, trace of Q_I = {:.6}", spec.truncation(), spec.trace(2));

    let sampler = NoiseSampler::new(&spec, &basis)?;
    let mut stream = RngStream::new(7, 0);
    let dw = sampler.sample(0.01, &mut stream, grid.num_nodes())?;
    println!("dW_I at x = 0, 0.5, 1: {:.5} {:.5} {:.5}", dw[2].values()[0], dw[2].values()[16], dw[2].values()[31]);

    // a coarse step of refinement 4 consumes the same draws as four fine steps
    let fine_dt = 0.0025;
    let fine = RngStream::new(7, 0);
    let coarse = RngStream::new(7, 0).with_refinement(4)?;
    println!(
        "B(0.01) on the fine grid {:.6}, on the coarse grid {:.6}",
        fine.brownian_value(2, 0, 4, fine_dt),
        coarse.brownian_increment(2, 0, 4.0 * fine_dt)
    );
    Ok(())
}
