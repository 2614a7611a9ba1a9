//! Langevin dynamics for the gradient model,
//! `dφ(y) = β(Σ_{e∋y} V'(∇φ(e)) + λη(y)) dt + √2 dB(y)`, discretised by
//! Euler–Maruyama, and the coupling of two such dynamics through shared
//! noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::disorder::{Purpose, SeedSpec};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::lattice::Lattice;
use crate::potentials::Potential;
use crate::stats::{batch_means, variance, Estimate};

/// Largest admissible step, `0.1 / (2d·β·c_+)`.
pub fn max_stable_dt(lattice: &Lattice, potential: &Potential, beta: f64) -> f64 {
    0.1 / (2.0 * lattice.dim() as f64 * beta * potential.c_plus())
}

/// Default step, half the stability bound.
pub fn default_dt(lattice: &Lattice, potential: &Potential, beta: f64) -> f64 {
    0.5 * max_stable_dt(lattice, potential, beta)
}

/// Default burn-in `10 L²`.
pub fn default_burn_in(lattice: &Lattice) -> f64 {
    10.0 * (lattice.side().max(1) as f64).powi(2)
}

/// `1/(β c_- λ_min)` with `λ_min` the smallest Dirichlet eigenvalue: the
/// slowest decay time of the linearised dynamics.
pub fn relaxation_time(lattice: &Lattice, potential: &Potential, beta: f64) -> f64 {
    let w = lattice.width() as f64 + 1.0;
    let lambda_min = lattice.dim() as f64 * 2.0 * (1.0 - (std::f64::consts::PI / w).cos());
    1.0 / (beta * potential.c_minus() * lambda_min)
}

fn check_dt(lattice: &Lattice, potential: &Potential, beta: f64, dt: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::config("beta", "inverse temperature must be positive"));
    }
    let bound = max_stable_dt(lattice, potential, beta);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::UnstableTimeStep { dt, bound });
    }
    Ok(())
}

/// Adds `Σ_{e∋y} V'(∇φ(e))` to `force` at every interior `y`.
fn add_elastic_force(lattice: &Lattice, potential: &Potential, phi: &[f64], force: &mut [f64]) {
    let n = lattice.n_interior();
    for e in lattice.edges() {
        let f = potential.derivative(phi[e.head] - phi[e.tail]);
        if e.tail < n {
            force[e.tail] += f;
        }
        if e.head < n {
            force[e.head] -= f;
        }
    }
}

/// A single Euler–Maruyama chain. The state lives on `Λ^+` and is zero on
/// the boundary at all times.
pub struct Langevin<'a> {
    lattice: &'a Lattice,
    potential: &'a Potential,
    source: Vec<f64>,
    beta: f64,
    dt: f64,
    phi: Vec<f64>,
    force: Vec<f64>,
    rng: ChaCha8Rng,
    steps: u64,
}

impl<'a> Langevin<'a> {
    pub fn new(
        lattice: &'a Lattice,
        potential: &'a Potential,
        eta: &Field,
        lambda: f64,
        beta: f64,
        dt: f64,
        seed: SeedSpec,
    ) -> Result<Self> {
        eta.check(lattice)?;
        check_dt(lattice, potential, beta, dt)?;
        Ok(Langevin {
            lattice,
            potential,
            source: eta.interior(lattice).iter().map(|e| lambda * e).collect(),
            beta,
            dt,
            phi: vec![0.0; lattice.n_sites()],
            force: vec![0.0; lattice.n_interior()],
            rng: seed.with_purpose(Purpose::Langevin).rng(),
            steps: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &[f64] {
        &self.phi
    }

    /// Restarts the chain from `phi`, which must vanish on the boundary.
    pub fn set_state(&mut self, phi: &Field) -> Result<()> {
        phi.check(self.lattice)?;
        if !phi.boundary_is_zero(self.lattice) {
            return Err(Error::config("phi", "initial surface must vanish on the boundary"));
        }
        self.phi.copy_from_slice(phi.values());
        Ok(())
    }

    pub fn step(&mut self) {
        self.force.copy_from_slice(&self.source);
        add_elastic_force(self.lattice, self.potential, &self.phi, &mut self.force);
        let noise = (2.0 * self.dt).sqrt();
        let drift = self.beta * self.dt;
        for (p, f) in self.phi.iter_mut().zip(&self.force) {
            let xi: f64 = self.rng.sample(StandardNormal);
            *p += drift * f + noise * xi;
        }
        self.steps += 1;
    }

    /// Advances by `duration`, calling `observe` every `every` steps.
    pub fn run(&mut self, duration: f64, every: usize, mut observe: impl FnMut(f64, &[f64])) {
        let n_steps = (duration / self.dt).round() as u64;
        let every = every.max(1) as u64;
        for k in 1..=n_steps {
            self.step();
            if k % every == 0 {
                observe(self.time(), &self.phi);
            }
        }
    }
}

/// Thinned snapshots of a chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub seed: SeedSpec,
}

/// Runs the chain from the zero surface up to `t_max`, keeping every
/// `thin`-th state.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    lattice: &Lattice,
    potential: &Potential,
    eta: &Field,
    lambda: f64,
    dt: f64,
    t_max: f64,
    thin: usize,
    seed: SeedSpec,
) -> Result<Trajectory> {
    if !(t_max > 0.0) {
        return Err(Error::config("t_max", "must be positive"));
    }
    let mut chain = Langevin::new(lattice, potential, eta, lambda, 1.0, dt, seed)?;
    let mut times = vec![0.0];
    let mut states = vec![Field::zeros(lattice)];
    chain.run(t_max, thin, |t, phi| {
        times.push(t);
        states.push(Field::from_values(lattice, phi.to_vec()).expect("same lattice"));
    });
    Ok(Trajectory {
        dt,
        times,
        states,
        seed,
    })
}

/// A time average with its batch-means error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsEstimate {
    pub observable: String,
    pub mean: f64,
    pub stderr: f64,
    /// Number of samples divided by the estimated integrated
    /// autocorrelation time.
    pub n_effective: usize,
    pub burn_in: f64,
}

impl GibbsEstimate {
    pub fn from_series(observable: impl Into<String>, series: &[f64], burn_in: f64) -> Result<Self> {
        let n_batches = if series.len() >= 640 { 32 } else { 20 };
        let e = batch_means(series, n_batches)?;
        let iid = variance(series) / series.len() as f64;
        let n_effective = if e.stderr > 0.0 {
            ((iid / (e.stderr * e.stderr)) * series.len() as f64).round() as usize
        } else {
            series.len()
        };
        Ok(GibbsEstimate {
            observable: observable.into(),
            mean: e.mean,
            stderr: e.stderr,
            n_effective: n_effective.min(series.len()),
            burn_in,
        })
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean,
            stderr: self.stderr,
            n: self.n_effective,
        }
    }
}

/// Per-site time averages of `φ` after `burn_in`.
pub fn estimate_thermal_mean(lattice: &Lattice, trajectory: &Trajectory, burn_in: f64) -> Result<Vec<GibbsEstimate>> {
    let kept: Vec<&Field> = trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .filter(|(t, _)| **t > burn_in)
        .map(|(_, s)| s)
        .collect();
    if kept.len() < 20 {
        return Err(Error::TooFewSamples {
            got: kept.len(),
            need: 20,
        });
    }
    (0..lattice.n_sites())
        .map(|i| {
            let series: Vec<f64> = kept.iter().map(|s| s.get(i)).collect();
            let site = lattice.site(i);
            GibbsEstimate::from_series(format!("phi{site:?}"), &series, burn_in)
        })
        .collect()
}

/// Runs a chain and returns time averages of the given observables. Each
/// observable maps the current state to one number; samples are taken every
/// `every` steps after `burn_in`.
#[allow(clippy::too_many_arguments)]
pub fn sample_observables(
    lattice: &Lattice,
    potential: &Potential,
    eta: &Field,
    lambda: f64,
    beta: f64,
    dt: f64,
    burn_in: f64,
    duration: f64,
    every: usize,
    seed: SeedSpec,
    names: &[&str],
    observe: impl Fn(&[f64], &mut [f64]),
) -> Result<Vec<GibbsEstimate>> {
    let mut chain = Langevin::new(lattice, potential, eta, lambda, beta, dt, seed)?;
    chain.run(burn_in, usize::MAX, |_, _| {});
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut buf = vec![0.0; names.len()];
    chain.run(duration, every, |_, phi| {
        observe(phi, &mut buf);
        for (s, v) in series.iter_mut().zip(&buf) {
            s.push(*v);
        }
    });
    names
        .iter()
        .zip(&series)
        .map(|(name, s)| GibbsEstimate::from_series(*name, s, burn_in))
        .collect()
}

/// `2·a_{dt/2} - a_{dt}`: removes the leading `O(dt)` bias.
pub fn richardson(at_dt: f64, at_half_dt: f64) -> f64 {
    2.0 * at_half_dt - at_dt
}

/// Conductances `a(t, e)` recorded along a coupled run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeEnvironment {
    pub c_minus: f64,
    pub c_plus: f64,
    /// Time step of the run that produced the record.
    pub dt: f64,
    pub times: Vec<f64>,
    /// One vector of per-edge values per recorded time.
    pub values: Vec<Vec<f64>>,
}

impl TimeEnvironment {
    pub fn is_elliptic(&self) -> bool {
        self.values
            .iter()
            .flatten()
            .all(|&a| a >= self.c_minus && a <= self.c_plus)
    }
}

/// `∫_0^1 V''(s g1 + (1-s) g2) ds`, written as a difference quotient of
/// `V'` and clamped to the ellipticity window against rounding. For nearly
/// equal arguments the midpoint curvature is used instead.
pub fn environment_value(potential: &Potential, g1: f64, g2: f64) -> f64 {
    let d = g1 - g2;
    let a = if d.abs() > 1e-7 * (1.0 + g1.abs().max(g2.abs())) {
        (potential.derivative(g1) - potential.derivative(g2)) / d
    } else {
        potential.second_derivative(0.5 * (g1 + g2))
    };
    a.clamp(potential.c_minus(), potential.c_plus())
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

/// Gauss–Legendre estimate of `∫_0^1 V''(s g1 + (1-s) g2) ds`.
pub fn environment_integral_quadrature(potential: &Potential, g1: f64, g2: f64, n_nodes: usize) -> Result<f64> {
    if n_nodes < 2 {
        return Err(Error::config("n_nodes", "need at least two nodes"));
    }
    Ok(gauss_legendre(n_nodes)
        .into_iter()
        .map(|(s, w)| w * potential.second_derivative(s * g1 + (1.0 - s) * g2))
        .sum())
}

/// Output of [`simulate_coupled`]. All records share the epochs `times`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupledRun {
    pub first: Trajectory,
    pub second: Trajectory,
    /// `w = φ - φ̄` at each recorded epoch.
    pub difference: Trajectory,
    pub environment: TimeEnvironment,
    /// Largest deviation, over all steps and sites, between `w` and the
    /// discrete parabolic update `w + dt(∇·a∇w + λ(η - η̄))`.
    pub max_update_defect: f64,
}

/// Two chains driven by the same noise, with fields `η` and `η̄`. The
/// difference `w` solves `∂_t w = ∇·a∇w + λ(η - η̄)` with the recorded
/// environment `a`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled(
    lattice: &Lattice,
    potential: &Potential,
    eta: &Field,
    eta_bar: &Field,
    lambda: f64,
    dt: f64,
    t_max: f64,
    thin: usize,
    seed: SeedSpec,
) -> Result<CoupledRun> {
    eta.check(lattice)?;
    eta_bar.check(lattice)?;
    check_dt(lattice, potential, 1.0, dt)?;
    if !(t_max > 0.0) {
        return Err(Error::config("t_max", "must be positive"));
    }
    let n = lattice.n_interior();
    let edges = lattice.edges();
    let src: Vec<f64> = eta.interior(lattice).iter().map(|e| lambda * e).collect();
    let src_bar: Vec<f64> = eta_bar.interior(lattice).iter().map(|e| lambda * e).collect();
    let mut phi = vec![0.0; lattice.n_sites()];
    let mut phi_bar = vec![0.0; lattice.n_sites()];
    let mut force = vec![0.0; n];
    let mut force_bar = vec![0.0; n];
    let mut noise = vec![0.0; n];
    let mut env = vec![0.0; edges.len()];
    let mut rng = seed.with_purpose(Purpose::Langevin).rng();
    let sd = (2.0 * dt).sqrt();
    let thin = thin.max(1) as u64;
    let n_steps = (t_max / dt).round() as u64;

    let snapshot = |v: &[f64]| Field::from_values(lattice, v.to_vec()).expect("same lattice");
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let mut times = vec![0.0];
    let mut first = vec![snapshot(&phi)];
    let mut second = vec![snapshot(&phi_bar)];
    let mut difference = vec![snapshot(&diff(&phi, &phi_bar))];
    let mut env_times = Vec::new();
    let mut env_values = Vec::new();
    let mut max_defect: f64 = 0.0;

    for k in 1..=n_steps {
        force.copy_from_slice(&src);
        force_bar.copy_from_slice(&src_bar);
        add_elastic_force(lattice, potential, &phi, &mut force);
        add_elastic_force(lattice, potential, &phi_bar, &mut force_bar);
        for (e, a) in edges.iter().zip(env.iter_mut()) {
            let g1 = phi[e.head] - phi[e.tail];
            let g2 = phi_bar[e.head] - phi_bar[e.tail];
            *a = environment_value(potential, g1, g2);
        }
        // the parabolic update predicted from the current difference
        let w: Vec<f64> = diff(&phi, &phi_bar);
        let mut predicted: Vec<f64> = (0..n).map(|i| w[i] + dt * (src[i] - src_bar[i])).collect();
        for (e, a) in edges.iter().zip(&env) {
            let flux = dt * a * (w[e.head] - w[e.tail]);
            if e.tail < n {
                predicted[e.tail] += flux;
            }
            if e.head < n {
                predicted[e.head] -= flux;
            }
        }
        if k % thin == 0 || k == 1 {
            env_times.push((k - 1) as f64 * dt);
            env_values.push(env.clone());
        }
        for z in noise.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        for i in 0..n {
            phi[i] += dt * force[i] + sd * noise[i];
            phi_bar[i] += dt * force_bar[i] + sd * noise[i];
        }
        let scale = phi[..n].iter().chain(&phi_bar[..n]).fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            let defect = ((phi[i] - phi_bar[i]) - predicted[i]).abs() / scale;
            max_defect = max_defect.max(defect);
        }
        if k % thin == 0 {
            let t = k as f64 * dt;
            times.push(t);
            first.push(snapshot(&phi));
            second.push(snapshot(&phi_bar));
            difference.push(snapshot(&diff(&phi, &phi_bar)));
        }
    }
    let traj = |states| Trajectory {
        dt,
        times: times.clone(),
        states,
        seed,
    };
    Ok(CoupledRun {
        first: traj(first),
        second: traj(second),
        difference: traj(difference),
        environment: TimeEnvironment {
            c_minus: potential.c_minus(),
            c_plus: potential.c_plus(),
            dt,
            times: env_times,
            values: env_values,
        },
        max_update_defect: max_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{resample_at, sample_iid_field, Distribution};
    use crate::elliptic::solve_dirichlet;

    #[test]
    fn rejects_unstable_step() {
        let lat = Lattice::build_box(1, 2).unwrap();
        let pot = Potential::quadratic(1.0).unwrap();
        let eta = Field::zeros(&lat);
        let r = simulate(&lat, &pot, &eta, 1.0, 10.0, 1.0, 1, SeedSpec::new(0));
        assert!(matches!(r, Err(Error::UnstableTimeStep { .. })));
    }

    #[test]
    fn boundary_stays_pinned() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let pot = Potential::quad_plus_sqrt(0.5).unwrap();
        let eta = sample_iid_field(&lat, Distribution::StandardGaussian, SeedSpec::new(1));
        let dt = default_dt(&lat, &pot, 1.0);
        let traj = simulate(&lat, &pot, &eta, 1.0, dt, 5.0, 10, SeedSpec::new(2)).unwrap();
        assert!(traj.states.iter().all(|s| s.boundary_is_zero(&lat)));
    }

    #[test]
    fn free_chain_variance_matches_green() {
        let lat = Lattice::build_box(1, 1).unwrap();
        let pot = Potential::quadratic(1.0).unwrap();
        let eta = Field::zeros(&lat);
        let dt = default_dt(&lat, &pot, 1.0);
        let o = lat.origin();
        let est = sample_observables(
            &lat, &pot, &eta, 0.0, 1.0, dt, 20.0, 20_000.0, 10, SeedSpec::new(3),
            &["phi0", "phi0_sq"],
            |phi, out| {
                out[0] = phi[o];
                out[1] = phi[o] * phi[o];
            },
        )
        .unwrap();
        // G(0,0) = 1; Euler bias on the variance is about dt·λ_max/2 relative
        assert!(est[0].estimate().agrees_with(0.0, 3.0, 0.0), "{:?}", est[0]);
        assert!(est[1].estimate().agrees_with(1.0, 3.0, 0.02), "{:?}", est[1]);
    }

    #[test]
    fn gaussian_mean_matches_green_solve() {
        let lat = Lattice::build_box(1, 2).unwrap();
        let pot = Potential::quadratic(1.0).unwrap();
        let eta = sample_iid_field(&lat, Distribution::StandardGaussian, SeedSpec::new(5));
        let (u, _) = solve_dirichlet(&lat, &eta, 1e-12).unwrap();
        let lambda = 1.5;
        let dt = default_dt(&lat, &pot, 1.0);
        let traj = simulate(&lat, &pot, &eta, lambda, dt, 10_000.0, 20, SeedSpec::new(6)).unwrap();
        let est = estimate_thermal_mean(&lat, &traj, 50.0).unwrap();
        let o = lat.origin();
        assert!(est[o].estimate().agrees_with(lambda * u.get(o), 3.0, 0.01), "{:?}", est[o]);
        assert!(est.iter().all(|e| e.stderr >= 0.0));
    }

    #[test]
    fn constant_trajectory_estimate() {
        let lat = Lattice::build_box(1, 1).unwrap();
        let f = Field::from_interior(&lat, &[1.0, 2.0, 3.0]).unwrap();
        let traj = Trajectory {
            dt: 0.1,
            times: (0..100).map(|i| i as f64).collect(),
            states: vec![f; 100],
            seed: SeedSpec::new(0),
        };
        let est = estimate_thermal_mean(&lat, &traj, 10.0).unwrap();
        assert_eq!(est[1].mean, 2.0);
        assert_eq!(est[1].stderr, 0.0);
        assert!(estimate_thermal_mean(&lat, &traj, 95.0).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let q = Potential::quadratic(1.0).unwrap();
        assert!((environment_integral_quadrature(&q, 0.3, -2.0, 4).unwrap() - 1.0).abs() < 1e-15);
        let s = Potential::quad_plus_sqrt(0.5).unwrap();
        let g = 0.7;
        assert!((environment_integral_quadrature(&s, g, g, 5).unwrap() - s.second_derivative(g)).abs() < 1e-14);
        // trapezoid oracle with 10^4 panels
        let m = 10_000;
        let h = 1.0 / m as f64;
        let trap: f64 = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                w * s.second_derivative(i as f64 * h)
            })
            .sum::<f64>()
            * h;
        let gl = environment_integral_quadrature(&s, 0.0, 1.0, 20).unwrap();
        assert!((gl - trap).abs() < 1e-8, "{gl} vs {trap}");
        assert!((environment_value(&s, 0.0, 1.0) - gl).abs() < 1e-12);
        assert!(environment_integral_quadrature(&s, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn equal_fields_give_zero_difference() {
        let lat = Lattice::build_box(1, 4).unwrap();
        let pot = Potential::quad_plus_sqrt(0.5).unwrap();
        let eta = sample_iid_field(&lat, Distribution::StandardGaussian, SeedSpec::new(1));
        let dt = default_dt(&lat, &pot, 1.0);
        let run = simulate_coupled(&lat, &pot, &eta, &eta, 1.0, dt, 10.0, 5, SeedSpec::new(2)).unwrap();
        assert!(run.difference.states.iter().all(|w| w.max_abs() == 0.0));
        assert!(run.environment.is_elliptic());
    }

    #[test]
    fn quadratic_difference_is_deterministic() {
        let lat = Lattice::build_box(1, 4).unwrap();
        let pot = Potential::quadratic(1.0).unwrap();
        let eta = sample_iid_field(&lat, Distribution::StandardGaussian, SeedSpec::new(1));
        let x = [2];
        let eta_bar = resample_at(&lat, &eta, &x, Distribution::StandardGaussian, SeedSpec::new(1).with_purpose(Purpose::Resample)).unwrap();
        let dt = default_dt(&lat, &pot, 1.0);
        let a = simulate_coupled(&lat, &pot, &eta, &eta_bar, 1.0, dt, 20.0, 10, SeedSpec::new(2)).unwrap();
        let b = simulate_coupled(&lat, &pot, &eta, &eta_bar, 1.0, dt, 20.0, 10, SeedSpec::new(99)).unwrap();
        // explicit Euler for ∂w = Δw + λ(η - η̄)
        let n = lat.n_interior();
        let mut w = vec![0.0; lat.n_sites()];
        let f: Vec<f64> = (0..n).map(|i| eta.get(i) - eta_bar.get(i)).collect();
        let mut k = 0;
        for (step, t) in a.difference.times.iter().enumerate() {
            while (k as f64 * dt) < t - 1e-9 {
                let lap = crate::elliptic::apply_laplacian(&lat, &Field::from_values(&lat, w.clone()).unwrap()).unwrap();
                for i in 0..n {
                    w[i] += dt * (lap.get(i) + f[i]);
                }
                k += 1;
            }
            for (i, wi) in w.iter().enumerate().take(n) {
                assert!((a.difference.states[step].get(i) - wi).abs() < 1e-10);
                assert!((b.difference.states[step].get(i) - wi).abs() < 1e-10);
            }
        }
        assert!(a.max_update_defect < 1e-12);
    }

    #[test]
    fn nonlinear_difference_solves_parabolic_update() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let pot = Potential::quad_plus_sqrt(0.5).unwrap();
        let eta = sample_iid_field(&lat, Distribution::StandardGaussian, SeedSpec::new(4));
        let mut eta_bar = eta.clone();
        let o = lat.origin();
        eta_bar.values_mut()[o] -= 1.0;
        let dt = default_dt(&lat, &pot, 1.0);
        let run = simulate_coupled(&lat, &pot, &eta, &eta_bar, 1.0, dt, 50.0, 50, SeedSpec::new(3)).unwrap();
        assert!(run.max_update_defect < 1e-12, "{}", run.max_update_defect);
        assert!(run.environment.is_elliptic());
        assert!(run.difference.states[1..].iter().all(|w| w.get(o) > 0.0));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 2..8 {
            let nodes = gauss_legendre(n);
            let sum_w: f64 = nodes.iter().map(|(_, w)| w).sum();
            assert!((sum_w - 1.0).abs() < 1e-14);
            let deg = 2 * n - 1;
            let integral: f64 = nodes.iter().map(|(s, w)| w * s.powi(deg as i32)).sum();
            assert!((integral - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13);
        }
    }
}
