//! Neumann cosine basis on the unit interval: orthonormality, transforms and
//! the exact heat semigroup.
//!
//! ```text
//! cargo run --example spectral_basis
//! ```

use seirs_spde::spectral::{apply_semigroup, DomainGrid, Field, SpectralBasis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DomainGrid::interval(64)?;
    let basis = SpectralBasis::build(&grid, 8)?;
    println!("grid: {} nodes, spacing {:.5}", grid.num_nodes(), grid.spacing());
    println!("eigenvalues: {:?}", &basis.eigenvalues()[..4]);
    println!("sup |e_k| = {:.5}", basis.sup_bound());

    let e3 = basis.mode_field(3);
    let coeffs = basis.forward_transform(&e3)?;
    println!("transform of e_3: {:?}", coeffs.iter().map(|c| format!("{c:.1e}")).collect::<Vec<_>>());

    let bump = Field::from_fn(&grid, |x, _| 1.0 + (std::f64::consts::PI * x).cos());
    let complete = SpectralBasis::complete(&grid);
    for t in [0.0, 0.5, 1.0, 2.0] {
        let u = apply_semigroup(&bump, 0.1, t, &complete)?;
        println!(
            "t = {t:>3}: mass {:.12}, max {:.6}, mode-1 coefficient {:.6}",
            grid.integrate(u.values()),
            u.max(),
            complete.forward_transform(&u)?[1]
        );
    }
    Ok(())
}
