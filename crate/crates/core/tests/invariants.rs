use rfsurf::disorder::{sample_iid_field, Distribution, SeedSpec};
use rfsurf::elliptic::green_column;
use rfsurf::groundstate::solve_real_ground_state;
use rfsurf::ivgff::{metropolis_sample, IvSpec, MetropolisConfig};
use rfsurf::langevin::{default_dt, relaxation_time, sample_observables, GibbsEstimate};
use rfsurf::potentials::Potential;
use rfsurf::{Field, Lattice};

fn gaussian(lat: &Lattice, seed: u64) -> Field {
    sample_iid_field(lat, Distribution::StandardGaussian, SeedSpec::new(seed))
}

#[test]
fn low_temperature_mean_is_the_ground_state() {
    let lat = Lattice::build_box(1, 8).unwrap();
    let eta = gaussian(&lat, 4);
    let beta = 64.0;
    for pot in [Potential::quadratic(1.0).unwrap(), Potential::quad_plus_sqrt(0.5).unwrap()] {
        let (gs, _) = solve_real_ground_state(&lat, &pot, &eta, 1.0, 1e-12).unwrap();
        let tau = relaxation_time(&lat, &pot, beta);
        let dt = default_dt(&lat, &pot, beta);
        let n = lat.n_interior();
        let names: Vec<String> = (0..n).map(|i| format!("phi{i}")).collect();
        let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let est = sample_observables(
            &lat, &pot, &eta, 1.0, beta, dt, 10.0 * tau, 60.0 * tau, 20, SeedSpec::new(9), &names,
            |phi, out| out.copy_from_slice(&phi[..n]),
        )
        .unwrap();
        for (i, e) in est.iter().enumerate() {
            let gap = (e.mean - gs.get(i)).abs();
            assert!(gap <= 3.0 * e.stderr + 0.05, "{pot} site {i}: {} vs {}", e.mean, gs.get(i));
        }
    }
}

/// `Σ_y V'(φ(x) - φ(y))`, the elastic part of `∂H/∂φ(x)`.
fn elastic_force(lat: &Lattice, pot: &Potential, phi: &[f64], x: usize) -> f64 {
    lat.neighbors(x).iter().map(|&y| pot.derivative(phi[x] - phi[y])).sum()
}

#[test]
fn stationary_integration_by_parts_identities() {
    let lat = Lattice::build_box(1, 4).unwrap();
    let eta = gaussian(&lat, 21);
    let lambda = 0.8;
    for pot in [Potential::quadratic(1.0).unwrap(), Potential::quad_plus_sqrt(1.0).unwrap()] {
        let dt = default_dt(&lat, &pot, 1.0);
        let tau = relaxation_time(&lat, &pot, 1.0);
        let n = lat.n_interior();
        let names: Vec<String> = (0..n).flat_map(|i| [format!("first{i}"), format!("second{i}")]).collect();
        let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let est: Vec<GibbsEstimate> = sample_observables(
            &lat, &pot, &eta, lambda, 1.0, dt, 10.0 * tau, 3000.0, 10, SeedSpec::new(5), &names,
            |phi, out| {
                for x in 0..n {
                    let le = lambda * eta.get(x);
                    let g = elastic_force(&lat, &pot, phi, x);
                    out[2 * x] = g - le;
                    // The Euler chain's stationary law shifts the second
                    // identity by dt/2·E[(∂H)²]; subtract it exactly.
                    out[2 * x + 1] = phi[x] * g - 1.0 - le * phi[x] - 0.5 * dt * (g - le).powi(2);
                }
            },
        )
        .unwrap();
        for e in &est {
            assert!(e.mean.abs() <= 4.0 * e.stderr, "{pot} {}: {} ± {}", e.observable, e.mean, e.stderr);
        }
    }
}

#[test]
fn three_dimensional_green_function_decays_like_inverse_distance() {
    let lat = Lattice::build_box(3, 16).unwrap();
    let g = green_column(&lat, &[0, 0, 0], 1e-12).unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..lat.n_interior() {
        let y = lat.site(i);
        if lat.linf_norm(i) > 4 {
            continue;
        }
        let r = y.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
        let scaled = g.get(i) * r.max(1.0);
        assert!(scaled > 0.0);
        lo = lo.min(scaled);
        hi = hi.max(scaled);
    }
    assert!(lo > 0.05 && hi < 0.3, "window [{lo}, {hi}]");
}

#[test]
fn integer_gradient_fluctuations_do_not_grow_with_the_box() {
    let reps = 16u64;
    let mut means = Vec::new();
    for side in [4usize, 6, 8] {
        let lat = Lattice::build_box(3, side).unwrap();
        let values: Vec<f64> = (0..reps)
            .map(|r| {
                let eta = sample_iid_field(&lat, Distribution::StandardGaussian, SeedSpec::new(30).with_realization(r));
                let spec = IvSpec::with_default_band(&lat, &eta, 4.0, 0.5).unwrap();
                let cfg = MetropolisConfig::new(&lat, 400);
                let run = metropolis_sample(&spec, &cfg, SeedSpec::new(31).with_realization(r)).unwrap();
                run.estimate("grad_sq_avg").mean
            })
            .collect();
        // Spread across realizations covers both thermal and disorder noise.
        let k = reps as f64;
        let m = values.iter().sum::<f64>() / k;
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0);
        means.push((m, (var / k).sqrt()));
    }
    let (lo, hi) = means
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(m, _)| (lo.min(m), hi.max(m)));
    let slack = 3.0 * means.iter().map(|&(_, s)| s).fold(0.0, f64::max);
    assert!(hi - lo <= 0.15 * lo + slack, "{means:?}");
}
