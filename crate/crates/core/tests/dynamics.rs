use seirs_spde::analysis::{
    check_mass_bound, evaluate_functionals, run_ensemble, EnsembleOptions, MassBoundReport, FUNCTIONAL_NAMES,
    INFECTED_MASS, TOTAL_MASS,
};
use seirs_spde::integrator::{
    convergence_study, frozen_increments, picard_solve, simulate_path, ClampPolicy, ConvergenceProblem,
    IntegratorError, PicardConfig, SchemeConfig, Study,
};
use seirs_spde::model::{CoefficientSet, Rates, State};
use seirs_spde::noise::{NoiseSpec, RngStream};
use seirs_spde::spectral::{DomainGrid, Field, SpectralBasis};

fn standard() -> Rates {
    Rates {
        lambda: 0.5,
        mu: [0.1; 4],
        alpha: 0.8,
        beta: 0.2,
        gamma: 0.3,
        sigma: 0.4,
        diffusivity: [0.01; 4],
    }
}

/// Homogeneous SEIRS right-hand side.
fn rhs(r: &Rates, v: [f64; 4]) -> [f64; 4] {
    let [s, e, i, q] = v;
    let inc = if s == 0.0 || i == 0.0 { 0.0 } else { r.alpha * s * i / (s + e + i + q) };
    [
        r.lambda - r.mu[0] * s - inc + r.beta * q,
        -r.mu[1] * e + inc - r.sigma * e,
        -r.mu[2] * i + r.sigma * e - r.gamma * i,
        -r.mu[3] * q + r.gamma * i - r.beta * q,
    ]
}

fn rk4(r: &Rates, mut v: [f64; 4], t: f64, steps: usize) -> [f64; 4] {
    let h = t / steps as f64;
    let add = |a: [f64; 4], b: [f64; 4], c: f64| [0, 1, 2, 3].map(|k| a[k] + c * b[k]);
    for _ in 0..steps {
        let k1 = rhs(r, v);
        let k2 = rhs(r, add(v, k1, h / 2.0));
        let k3 = rhs(r, add(v, k2, h / 2.0));
        let k4 = rhs(r, add(v, k3, h));
        v = [0, 1, 2, 3].map(|k| v[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]));
    }
    v
}

#[test]
fn deterministic_problem_converges_at_first_order() {
    let grid = DomainGrid::interval(16).unwrap();
    let v0 = [0.8, 0.05, 0.1, 0.05];
    let rates = standard();
    let problem = ConvergenceProblem {
        initial: State::constant(&grid, v0).unwrap(),
        coeffs: CoefficientSet::homogeneous(&grid, &rates).unwrap(),
        noise: NoiseSpec::zero(),
        scheme: SchemeConfig {
            dt: 0.1,
            t_final: 5.0,
            ..SchemeConfig::default()
        },
        basis: SpectralBasis::complete(&grid),
    };
    let target = rk4(&rates, v0, 5.0, 50_000);
    let g = grid.clone();
    let exact = move |_: &RngStream, _: f64, _: u64| State::constant(&g, target).unwrap();
    let table = convergence_study(&problem, &Study::TimeStep(vec![0.1, 0.05, 0.025, 0.0125]), 1, 0, Some(&exact)).unwrap();
    let order = table.observed_order.unwrap();
    assert!(order >= 0.9, "observed order {order}");
    assert!(table.rows.windows(2).all(|w| w[1].error < w[0].error));
}

#[test]
fn ode_limit_matches_reference_at_t10() {
    let grid = DomainGrid::interval(32).unwrap();
    let rates = Rates {
        diffusivity: [0.3, 0.01, 0.1, 0.05],
        ..standard()
    };
    let v0 = [0.8, 0.05, 0.1, 0.05];
    let scheme = SchemeConfig {
        dt: 1e-3,
        t_final: 10.0,
        record_every: 10_000,
        ..SchemeConfig::default()
    };
    let traj = simulate_path(
        &State::constant(&grid, v0).unwrap(),
        &CoefficientSet::homogeneous(&grid, &rates).unwrap(),
        &NoiseSpec::zero(),
        &scheme,
        &SpectralBasis::complete(&grid),
        RngStream::new(0, 0),
    )
    .unwrap();
    let want = rk4(&rates, v0, 10.0, 100_000);
    let last = traj.states.last().unwrap();
    for (c, f) in last.fields().iter().enumerate() {
        for v in f.values() {
            assert!((v - want[c]).abs() <= 1e-4, "compartment {c}: {v} vs {}", want[c]);
        }
    }
}

/// Geometric mean of the successive-difference ratios, or 1 when the
/// iteration stops contracting.
fn mean_ratio(horizon: f64) -> f64 {
    let grid = DomainGrid::interval(32).unwrap();
    let basis = SpectralBasis::complete(&grid);
    let coeffs = CoefficientSet::homogeneous(&grid, &standard()).unwrap();
    let initial = State::new(
        &grid,
        [0.8, 0.05, 0.1, 0.05].map(|c| Field::from_fn(&grid, |x, _| c * (1.0 + 0.5 * (std::f64::consts::PI * x).cos()))),
    )
    .unwrap();
    let substeps = (horizon / 0.005).round() as usize;
    let noise = NoiseSpec::geometric(8, [1.0; 4], 0.5).unwrap();
    let increments = frozen_increments(&noise, &basis, horizon / substeps as f64, substeps, &mut RngStream::new(3, 0)).unwrap();
    let config = PicardConfig {
        horizon,
        substeps,
        max_iterations: 60,
        tolerance: 1e-11,
    };
    match picard_solve(&initial, &coeffs, &increments, &config, &basis, ClampPolicy::Hard) {
        Ok(o) => {
            let r: Vec<f64> = o.ratios.iter().copied().filter(|r| *r > 0.0).take(4).collect();
            (r.iter().map(|x| x.ln()).sum::<f64>() / r.len() as f64).exp()
        }
        Err(IntegratorError::ContractionFailure { .. }) => 1.0,
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn contraction_weakens_as_the_horizon_grows() {
    let ratios: Vec<f64> = [0.1, 0.2, 0.4, 0.8, 1.6].iter().map(|&h| mean_ratio(h)).collect();
    assert!(ratios[0] < 1.0, "{ratios:?}");
    assert!(ratios[4] > ratios[0], "{ratios:?}");
    assert!(ratios[4] > 2.0 * ratios[0], "{ratios:?}");
}

#[test]
fn pure_decay_follows_the_envelope() {
    let grid = DomainGrid::interval(16).unwrap();
    let basis = SpectralBasis::complete(&grid);
    let coeffs = CoefficientSet::homogeneous(
        &grid,
        &Rates {
            mu: [1.0; 4],
            ..Rates::zero()
        },
    )
    .unwrap();
    let scheme = SchemeConfig {
        dt: 1e-3,
        t_final: 1.0,
        record_every: 100,
        ..SchemeConfig::default()
    };
    let initial = State::constant(&grid, [4.0, 0.0, 0.0, 0.0]).unwrap();
    let res = run_ensemble(&initial, &coeffs, &NoiseSpec::zero(), &scheme, &basis, 4, 0, &EnsembleOptions::default()).unwrap();
    let total = res.stats.functional(TOTAL_MASS).unwrap();
    let last = *total.mean.last().unwrap();
    assert!((last - 4.0 * (-1.0f64).exp()).abs() <= 1e-3, "{last}");
    match check_mass_bound(total, &res.stats.times, &coeffs) {
        MassBoundReport::Checked { rows, .. } => {
            assert_eq!(rows[0].slack(), 0.0);
            assert!((rows.last().unwrap().envelope - 4.0 * (-1.0f64).exp()).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn recruitment_relaxes_to_the_envelope_within_monte_carlo_error() {
    let grid = DomainGrid::interval(16).unwrap();
    let basis = SpectralBasis::complete(&grid);
    let coeffs = CoefficientSet::homogeneous(
        &grid,
        &Rates {
            lambda: 1.0,
            mu: [1.0; 4],
            ..Rates::zero()
        },
    )
    .unwrap();
    let noise = NoiseSpec::geometric(4, [0.2, 0.0, 0.0, 0.0], 0.5).unwrap();
    let scheme = SchemeConfig {
        dt: 1e-3,
        t_final: 3.0,
        record_every: 250,
        ..SchemeConfig::default()
    };
    let initial = State::constant(&grid, [0.0; 4]).unwrap();
    let res = run_ensemble(&initial, &coeffs, &noise, &scheme, &basis, 200, 1, &EnsembleOptions::default()).unwrap();
    let total = res.stats.functional(TOTAL_MASS).unwrap();
    for (k, &t) in res.stats.times.iter().enumerate() {
        let envelope = 1.0 - (-t).exp();
        let tol = 2.0 * total.std_error[k] + 1e-3;
        assert!((total.mean[k] - envelope).abs() <= tol, "t = {t}: {} vs {envelope}", total.mean[k]);
    }
}

#[test]
fn ensemble_means_do_not_depend_on_path_order() {
    let grid = DomainGrid::interval(16).unwrap();
    let basis = SpectralBasis::complete(&grid);
    let coeffs = CoefficientSet::homogeneous(&grid, &standard()).unwrap();
    let noise = NoiseSpec::geometric(8, [0.3; 4], 0.5).unwrap();
    let scheme = SchemeConfig {
        dt: 0.01,
        t_final: 1.0,
        record_every: 20,
        ..SchemeConfig::default()
    };
    let initial = State::constant(&grid, [0.8, 0.05, 0.1, 0.05]).unwrap();
    let paths = 12;
    let opts = EnsembleOptions::default();
    let a = run_ensemble(&initial, &coeffs, &noise, &scheme, &basis, paths, 21, &opts).unwrap();
    let b = run_ensemble(&initial, &coeffs, &noise, &scheme, &basis, paths, 21, &opts).unwrap();
    assert_eq!(a.stats, b.stats);

    let mut sums = vec![[0.0; 7]; a.stats.times.len()];
    for p in (0..paths as u64).rev() {
        let traj = simulate_path(&initial, &coeffs, &noise, &scheme, &basis, RngStream::new(21, p)).unwrap();
        for (acc, s) in sums.iter_mut().zip(&traj.states) {
            for (x, v) in acc.iter_mut().zip(evaluate_functionals(s, &grid)) {
                *x += v;
            }
        }
    }
    for (f, name) in FUNCTIONAL_NAMES.iter().enumerate() {
        let stats = a.stats.functional(name).unwrap();
        for (k, acc) in sums.iter().enumerate() {
            let reversed = acc[f] / paths as f64;
            assert!((stats.mean[k] - reversed).abs() <= 1e-12 * (1.0 + reversed.abs()), "{name} at {k}");
        }
    }
}

#[test]
fn infected_mass_decreases_after_the_transient_in_the_extinction_regime() {
    let grid = DomainGrid::interval(32).unwrap();
    let basis = SpectralBasis::complete(&grid);
    let coeffs = CoefficientSet::homogeneous(
        &grid,
        &Rates {
            mu: [0.1, 0.3, 0.4, 0.1],
            alpha: 0.2,
            ..standard()
        },
    )
    .unwrap();
    let noise = NoiseSpec::geometric(16, [0.05; 4], 0.5).unwrap();
    let scheme = SchemeConfig {
        dt: 0.01,
        t_final: 30.0,
        record_every: 50,
        ..SchemeConfig::default()
    };
    let initial = State::constant(&grid, [0.8, 0.05, 0.1, 0.05]).unwrap();
    let res = run_ensemble(&initial, &coeffs, &noise, &scheme, &basis, 500, 9, &EnsembleOptions::default()).unwrap();
    let inf = res.stats.functional(INFECTED_MASS).unwrap();
    let times = &res.stats.times;
    for k in 0..times.len() - 1 {
        if times[k] < 1.0 {
            continue;
        }
        let tol = 2.0 * inf.std_error[k].hypot(inf.std_error[k + 1]);
        assert!(inf.mean[k + 1] <= inf.mean[k] + tol, "t = {}: {} -> {}", times[k], inf.mean[k], inf.mean[k + 1]);
    }
}
