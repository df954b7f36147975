//! Threshold quantities and predicted long-time regime for two parameter sets.
//!
//! ```text
//! cargo run --example thresholds
//! ```

use seirs_spde::model::{check_permanence_hypotheses, compute_thresholds, CoefficientSet, Rates, State};
use seirs_spde::noise::NoiseSpec;
use seirs_spde::spectral::DomainGrid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DomainGrid::interval(64)?;
    let cases = [
        (
            "permanence",
            Rates {
                lambda: 1.0,
                mu: [0.2; 4],
                alpha: 2.0,
                beta: 0.2,
                gamma: 0.2,
                sigma: 0.4,
                diffusivity: [0.01; 4],
            },
            NoiseSpec::new([vec![0.0], vec![0.2], vec![0.2], vec![0.0]])?,
        ),
        (
            "extinction",
            Rates {
                lambda: 0.5,
                mu: [0.1, 0.3, 0.4, 0.1],
                alpha: 0.2,
                beta: 0.2,
                gamma: 0.3,
                sigma: 0.4,
                diffusivity: [0.01; 4],
            },
            NoiseSpec::geometric(16, [0.05; 4], 0.5)?,
        ),
    ];
    for (name, rates, noise) in cases {
        let coeffs = CoefficientSet::homogeneous(&grid, &rates)?;
        let report = compute_thresholds(&coeffs, &noise, &grid);
        println!("{name}:");
        for (key, value) in report.rows() {
            println!("  {key:<32} {value}");
        }
        let state = State::constant(&grid, [0.8, 0.05, 0.1, 0.05])?;
        let hyp = check_permanence_hypotheses(&state, &coeffs, &grid);
        println!("  pointwise hypotheses hold on {:.0}% of the domain", 100.0 * hyp.all_hold);
    }
    Ok(())
}
