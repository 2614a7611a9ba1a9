//! Heat kernels of `∂_t P = ∇·a∇P` with Dirichlet boundary conditions in a
//! time-dependent environment, Duhamel responses and Nash–Aronson envelope
//! fits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::disorder::{Purpose, SeedSpec};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::lattice::{linf_distance, Lattice, Site};
use crate::langevin::TimeEnvironment;

/// Conductances that are piecewise constant in time. `piece(t)` names the
/// piece in force at time `t`; `fill` writes its per-edge values.
pub trait Environment {
    fn c_minus(&self) -> f64;
    fn c_plus(&self) -> f64;
    fn piece(&self, t: f64) -> u64;
    fn fill(&self, piece: u64, out: &mut [f64]);
}

/// The same value on every edge at all times.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEnvironment(pub f64);

impl Environment for ConstantEnvironment {
    fn c_minus(&self) -> f64 {
        self.0
    }
    fn c_plus(&self) -> f64 {
        self.0
    }
    fn piece(&self, _t: f64) -> u64 {
        0
    }
    fn fill(&self, _piece: u64, out: &mut [f64]) {
        out.fill(self.0);
    }
}

/// Independent uniform conductances in `[c_-, c_+]`, redrawn every
/// `period` time units.
#[derive(Debug, Clone, Copy)]
pub struct RandomEnvironment {
    pub c_minus: f64,
    pub c_plus: f64,
    pub period: f64,
    pub seed: SeedSpec,
}

impl Environment for RandomEnvironment {
    fn c_minus(&self) -> f64 {
        self.c_minus
    }
    fn c_plus(&self) -> f64 {
        self.c_plus
    }
    fn piece(&self, t: f64) -> u64 {
        (t / self.period).floor().max(0.0) as u64
    }
    fn fill(&self, piece: u64, out: &mut [f64]) {
        let mut rng = self
            .seed
            .with_purpose(Purpose::Environment)
            .with_realization(piece)
            .rng();
        for a in out.iter_mut() {
            *a = if self.c_plus > self.c_minus {
                rng.random_range(self.c_minus..=self.c_plus)
            } else {
                self.c_minus
            };
        }
    }
}

/// A recorded environment, constant between recorded epochs.
impl Environment for TimeEnvironment {
    fn c_minus(&self) -> f64 {
        self.c_minus
    }
    fn c_plus(&self) -> f64 {
        self.c_plus
    }
    fn piece(&self, t: f64) -> u64 {
        let k = self.times.partition_point(|&s| s <= t + 1e-12);
        k.saturating_sub(1) as u64
    }
    fn fill(&self, piece: u64, out: &mut [f64]) {
        out.copy_from_slice(&self.values[piece as usize]);
    }
}

/// Largest admissible step `0.1/(2d·c_+)`.
pub fn max_stable_dt(lattice: &Lattice, c_plus: f64) -> f64 {
    0.1 / (2.0 * lattice.dim() as f64 * c_plus)
}

fn check_dt(lattice: &Lattice, env: &dyn Environment, dt: f64) -> Result<()> {
    let bound = max_stable_dt(lattice, env.c_plus());
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::UnstableTimeStep { dt, bound });
    }
    Ok(())
}

/// Explicit Euler propagation of interior data.
struct Stepper<'a> {
    lattice: &'a Lattice,
    env: &'a dyn Environment,
    dt: f64,
    weights: Vec<f64>,
    current: Option<u64>,
    scratch: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(lattice: &'a Lattice, env: &'a dyn Environment, dt: f64) -> Result<Self> {
        check_dt(lattice, env, dt)?;
        Ok(Stepper {
            lattice,
            env,
            dt,
            weights: vec![0.0; lattice.edges().len()],
            current: None,
            scratch: vec![0.0; lattice.n_interior()],
        })
    }

    /// `p ← p + dt ∇·a(t)∇p` on interior values.
    fn step(&mut self, t: f64, p: &mut [f64]) {
        let piece = self.env.piece(t);
        if self.current != Some(piece) {
            self.env.fill(piece, &mut self.weights);
            self.current = Some(piece);
        }
        let n = self.lattice.n_interior();
        self.scratch.fill(0.0);
        for (e, a) in self.lattice.edges().iter().zip(&self.weights) {
            let ph = if e.head < n { p[e.head] } else { 0.0 };
            let pt = if e.tail < n { p[e.tail] } else { 0.0 };
            let flux = a * (ph - pt);
            if e.tail < n {
                self.scratch[e.tail] += flux;
            }
            if e.head < n {
                self.scratch[e.head] -= flux;
            }
        }
        for (pi, li) in p.iter_mut().zip(&self.scratch) {
            *pi += self.dt * li;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatKernelFrame {
    pub t: f64,
    pub s: f64,
    pub source: Site,
    pub values: Field,
}

impl HeatKernelFrame {
    pub fn mass(&self) -> f64 {
        self.values.values().iter().sum()
    }
}

/// `P_a(t, ·; s, y)` for `t = s, s + k·every·dt, ...` up to `s + duration`.
pub fn evolve_heat_kernel(
    lattice: &Lattice,
    env: &dyn Environment,
    s: f64,
    y: &[i32],
    duration: f64,
    dt: f64,
    every: usize,
) -> Result<Vec<HeatKernelFrame>> {
    let idx = lattice
        .interior_index(y)
        .ok_or_else(|| Error::NotInterior(y.to_vec()))?;
    let mut start = Field::zeros(lattice);
    start.values_mut()[idx] = 1.0;
    let frames = evolve_field(lattice, env, s, &start, duration, dt, every)?;
    Ok(frames
        .into_iter()
        .map(|(t, values)| HeatKernelFrame {
            t,
            s,
            source: y.to_vec(),
            values,
        })
        .collect())
}

/// Evolves arbitrary initial data from time `s`, returning `(t, field)` at
/// `t = s` and every `every` steps.
pub fn evolve_field(
    lattice: &Lattice,
    env: &dyn Environment,
    s: f64,
    initial: &Field,
    duration: f64,
    dt: f64,
    every: usize,
) -> Result<Vec<(f64, Field)>> {
    initial.check(lattice)?;
    let mut stepper = Stepper::new(lattice, env, dt)?;
    let n_steps = (duration / dt).round() as u64;
    let every = every.max(1) as u64;
    let mut p = initial.interior(lattice).to_vec();
    let mut out = vec![(s, Field::from_interior(lattice, &p)?)];
    for k in 0..n_steps {
        stepper.step(s + k as f64 * dt, &mut p);
        if (k + 1) % every == 0 {
            out.push((s + (k + 1) as f64 * dt, Field::from_interior(lattice, &p)?));
        }
    }
    Ok(out)
}

/// `w_t(o)` for `∂_t w = ∇·a∇w + amount·δ_x`, `w_0 = 0`, computed from
/// heat kernels through Duhamel's formula
/// `w_t(o) = amount ∫_0^t P_a(t, o; s, x) ds` (left Riemann sum on the step
/// grid). Returns `(t, w_t(o))` every `every` steps.
#[allow(clippy::too_many_arguments)]
pub fn duhamel_response(
    lattice: &Lattice,
    env: &dyn Environment,
    observe: &[i32],
    x: &[i32],
    amount: f64,
    duration: f64,
    dt: f64,
    every: usize,
    time_dependent: bool,
) -> Result<Vec<(f64, f64)>> {
    let o = lattice
        .interior_index(observe)
        .ok_or_else(|| Error::NotInterior(observe.to_vec()))?;
    let xi = lattice
        .interior_index(x)
        .ok_or_else(|| Error::NotInterior(x.to_vec()))?;
    let n_steps = (duration / dt).round() as u64;
    let every = every.max(1) as u64;
    let mut out = vec![(0.0, 0.0)];
    if !time_dependent {
        // P depends on t - s only: accumulate one forward kernel.
        let mut stepper = Stepper::new(lattice, env, dt)?;
        let mut p = vec![0.0; lattice.n_interior()];
        p[xi] = 1.0;
        let mut acc = 0.0;
        for k in 0..n_steps {
            acc += dt * amount * p[o];
            stepper.step(k as f64 * dt, &mut p);
            if (k + 1) % every == 0 {
                out.push(((k + 1) as f64 * dt, acc));
            }
        }
        return Ok(out);
    }
    // One backward (adjoint) pass per output epoch.
    let mut stepper = Stepper::new(lattice, env, dt)?;
    for n in (every..=n_steps).step_by(every as usize) {
        let mut v = vec![0.0; lattice.n_interior()];
        v[o] = 1.0;
        let mut acc = 0.0;
        for k in (0..n).rev() {
            acc += dt * amount * v[xi];
            // the step matrix is symmetric, so its transpose is itself
            stepper.step(k as f64 * dt, &mut v);
        }
        out.push((n as f64 * dt, acc));
    }
    Ok(out)
}

/// Direct explicit Euler solution of `∂_t w = ∇·a∇w + amount·δ_x`,
/// returning `(t, w_t(o))` every `every` steps.
#[allow(clippy::too_many_arguments)]
pub fn direct_response(
    lattice: &Lattice,
    env: &dyn Environment,
    observe: &[i32],
    x: &[i32],
    amount: f64,
    duration: f64,
    dt: f64,
    every: usize,
) -> Result<Vec<(f64, f64)>> {
    let o = lattice
        .interior_index(observe)
        .ok_or_else(|| Error::NotInterior(observe.to_vec()))?;
    let xi = lattice
        .interior_index(x)
        .ok_or_else(|| Error::NotInterior(x.to_vec()))?;
    let mut stepper = Stepper::new(lattice, env, dt)?;
    let n_steps = (duration / dt).round() as u64;
    let every = every.max(1) as u64;
    let mut w = vec![0.0; lattice.n_interior()];
    let mut out = vec![(0.0, 0.0)];
    for k in 0..n_steps {
        stepper.step(k as f64 * dt, &mut w);
        w[xi] += dt * amount;
        if (k + 1) % every == 0 {
            out.push(((k + 1) as f64 * dt, w[o]));
        }
    }
    Ok(out)
}

/// Constants of the two-sided heat kernel bounds fitted to a set of frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NashAronsonReport {
    /// Prefactor of the upper envelope; the smallest value that makes the
    /// envelope dominate every frame for the fitted `c0`.
    pub big_c0: f64,
    /// Decay rate of the upper envelope, from a log-space least-squares fit.
    pub c0: f64,
    /// Lower-bound constant for the chosen `c1`.
    pub c0_prime: f64,
    pub c1: f64,
    /// `(c1, c0')` for every tried window.
    pub lower_table: Vec<(f64, f64)>,
    pub n_upper: usize,
    pub n_lower: usize,
}

fn one_or(x: f64) -> f64 {
    x.max(1.0)
}

/// Fits the Nash–Aronson envelopes
/// `P ≤ C0 / (1∨c_-τ)^{d/2} · exp(-c0 |x-y| / (1∨c_-τ)^{1/2}) · exp(-c0 c_- τ / L²)` and
/// `P ≥ c0' / (1∨c_-τ)^{d/2}` for `|x-y| ≤ √(c_-τ) ≤ c1 L`, `y ∈ Λ_{L/2}`,
/// with `τ = t - s`. Frames with `t = s` are skipped.
pub fn check_nash_aronson(lattice: &Lattice, frames: &[HeatKernelFrame], c_minus: f64) -> Result<NashAronsonReport> {
    let d = lattice.dim() as f64;
    let l = lattice.side().max(1) as f64;
    // (log P + (d/2) log(1∨c_-τ), z)
    let mut upper: Vec<(f64, f64)> = Vec::new();
    // (√(c_-τ), P·(1∨c_-τ)^{d/2})
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for f in frames {
        let tau = f.t - f.s;
        if tau <= 0.0 {
            continue;
        }
        let ct = c_minus * tau;
        let scale = one_or(ct).powf(d / 2.0);
        let root = ct.sqrt();
        let y_inside = f.source.iter().all(|&c| (c.unsigned_abs() as f64) <= l / 2.0);
        for (i, x) in lattice.interior_sites().enumerate() {
            let p = f.values.get(i);
            let r = linf_distance(x, &f.source) as f64;
            if p > 1e-30 {
                let z = r / one_or(ct).sqrt() + ct / (l * l);
                upper.push(((p * scale).ln(), z));
            }
            if y_inside && r <= root {
                lower.push((root, p * scale));
            }
        }
    }
    if upper.len() < 2 {
        return Err(Error::TooFewSamples {
            got: upper.len(),
            need: 2,
        });
    }
    // least squares for log P̃ = a - c0 z
    let n = upper.len() as f64;
    let mz = upper.iter().map(|u| u.1).sum::<f64>() / n;
    let my = upper.iter().map(|u| u.0).sum::<f64>() / n;
    let szz: f64 = upper.iter().map(|u| (u.1 - mz).powi(2)).sum();
    let szy: f64 = upper.iter().map(|u| (u.1 - mz) * (u.0 - my)).sum();
    let c0 = if szz > 0.0 { -szy / szz } else { 0.0 };
    let big_c0 = upper
        .iter()
        .map(|(y, z)| (y + c0 * z).exp())
        .fold(0.0f64, f64::max);
    let grid = [0.125, 0.25, 0.5, 1.0];
    let lower_table: Vec<(f64, f64)> = grid
        .iter()
        .filter_map(|&c1| {
            let vals: Vec<f64> = lower
                .iter()
                .filter(|(root, _)| *root <= c1 * l)
                .map(|(_, v)| *v)
                .collect();
            (!vals.is_empty()).then(|| (c1, vals.iter().copied().fold(f64::INFINITY, f64::min)))
        })
        .collect();
    let (c1, c0_prime) = match lower_table.first() {
        None => (0.0, 0.0),
        Some(&(_, best)) => lower_table
            .iter()
            .rev()
            .find(|(_, v)| *v >= best / std::f64::consts::E)
            .copied()
            .unwrap_or(lower_table[0]),
    };
    Ok(NashAronsonReport {
        big_c0,
        c0,
        c0_prime,
        c1,
        lower_table,
        n_upper: upper.len(),
        n_lower: lower.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense_step(lattice: &Lattice, dt: f64) -> DMatrix<f64> {
        let a = crate::elliptic::dense::laplacian(lattice);
        DMatrix::identity(a.nrows(), a.ncols()) - a * dt
    }

    #[test]
    fn initial_frame_is_indicator() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let env = ConstantEnvironment(1.0);
        let frames = evolve_heat_kernel(&lat, &env, 0.0, &[1, 0], 1.0, 0.02, 10).unwrap();
        let idx = lat.index_of(&[1, 0]).unwrap();
        for i in 0..lat.n_sites() {
            assert_eq!(frames[0].values.get(i), if i == idx { 1.0 } else { 0.0 });
        }
        assert!(frames.iter().all(|f| f.values.boundary_is_zero(&lat)));
    }

    #[test]
    fn matches_discrete_propagator_and_exponential() {
        let lat = Lattice::build_box(1, 8).unwrap();
        let dt = 0.01;
        let env = ConstantEnvironment(1.0);
        let frames = evolve_heat_kernel(&lat, &env, 0.0, &[0], 16.0, dt, 100).unwrap();
        let m = dense_step(&lat, dt);
        let a = crate::elliptic::dense::laplacian(&lat);
        let o = lat.origin();
        for t in [1.0, 4.0, 16.0] {
            let f = frames.iter().find(|f| (f.t - t).abs() < 1e-9).unwrap();
            let steps = (t / dt).round() as u32;
            let prop = m.pow(steps);
            let exact = (-&a * t).exp();
            for i in 0..lat.n_interior() {
                assert!((f.values.get(i) - prop[(i, o)]).abs() < 1e-8);
                // first-order splitting error
                assert!((f.values.get(i) - exact[(i, o)]).abs() < 2e-3);
            }
        }
    }

    #[test]
    fn random_environment_mass_decreases() {
        let lat = Lattice::build_box(2, 4).unwrap();
        let env = RandomEnvironment {
            c_minus: 1.0,
            c_plus: 2.0,
            period: 1.0,
            seed: SeedSpec::new(7),
        };
        let dt = max_stable_dt(&lat, 2.0);
        let frames = evolve_heat_kernel(&lat, &env, 0.0, &[0, 0], 20.0, dt, 1).unwrap();
        let mut prev = 1.0 + 1e-12;
        for f in &frames[1..] {
            let m = f.mass();
            assert!(m <= prev + 1e-15);
            assert!(f.values.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
            prev = m;
        }
        assert!(prev < 0.5);
    }

    #[test]
    fn chapman_kolmogorov() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let env = RandomEnvironment {
            c_minus: 1.0,
            c_plus: 2.0,
            period: 0.5,
            seed: SeedSpec::new(1),
        };
        let dt = 0.0125;
        let direct = evolve_heat_kernel(&lat, &env, 0.0, &[0, 0], 4.0, dt, 320).unwrap();
        let mid = evolve_heat_kernel(&lat, &env, 0.0, &[0, 0], 1.5, dt, 120).unwrap();
        let rest = evolve_field(&lat, &env, 1.5, &mid.last().unwrap().values, 2.5, dt, 200).unwrap();
        let a = &direct.last().unwrap().values;
        let b = &rest.last().unwrap().1;
        for i in 0..lat.n_sites() {
            assert!((a.get(i) - b.get(i)).abs() < 1e-10);
        }
    }

    #[test]
    fn duhamel_equals_direct_euler() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let env = RandomEnvironment {
            c_minus: 1.0,
            c_plus: 2.0,
            period: 0.7,
            seed: SeedSpec::new(2),
        };
        let dt = 0.0125;
        let a = duhamel_response(&lat, &env, &[0, 0], &[1, 1], 1.5, 5.0, dt, 40, true).unwrap();
        let b = direct_response(&lat, &env, &[0, 0], &[1, 1], 1.5, 5.0, dt, 40).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p.1 - q.1).abs() < 1e-12);
        }
        let c = ConstantEnvironment(1.0);
        let a = duhamel_response(&lat, &c, &[0, 0], &[1, 1], 1.5, 5.0, dt, 40, false).unwrap();
        let b = direct_response(&lat, &c, &[0, 0], &[1, 1], 1.5, 5.0, dt, 40).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p.1 - q.1).abs() < 1e-12);
        }
        let zero = duhamel_response(&lat, &c, &[0, 0], &[1, 1], 0.0, 1.0, dt, 10, false).unwrap();
        assert!(zero.iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn duhamel_limit_is_green_function() {
        let lat = Lattice::build_box(1, 4).unwrap();
        let env = ConstantEnvironment(1.0);
        let dt = 0.05;
        let w = duhamel_response(&lat, &env, &[0], &[2], 1.0, 400.0, dt, 100, false).unwrap();
        let g = crate::elliptic::green_column(&lat, &[2], 1e-12).unwrap().at(&lat, &[0]);
        assert!((w.last().unwrap().1 - g).abs() < 1e-6);
        let same = duhamel_response(&lat, &env, &[0], &[0], 1.0, 50.0, dt, 1, false).unwrap();
        assert!(same.windows(2).all(|p| p[1].1 >= p[0].1));
    }

    #[test]
    fn envelope_fit_on_a_chain() {
        let lat = Lattice::build_box(1, 32).unwrap();
        let env = ConstantEnvironment(1.0);
        let dt = max_stable_dt(&lat, 1.0);
        let frames = evolve_heat_kernel(&lat, &env, 0.0, &[0], 2000.0, dt, 200).unwrap();
        let r = check_nash_aronson(&lat, &frames, 1.0).unwrap();
        assert!(r.big_c0.is_finite() && r.c0 > 0.0 && r.c0_prime > 0.0, "{r:?}");
    }

    #[test]
    fn recorded_environment_pieces() {
        let env = TimeEnvironment {
            c_minus: 1.0,
            c_plus: 2.0,
            dt: 0.1,
            times: vec![0.0, 1.0, 2.0],
            values: vec![vec![1.0], vec![1.5], vec![2.0]],
        };
        assert_eq!(env.piece(0.5), 0);
        assert_eq!(env.piece(1.0), 1);
        assert_eq!(env.piece(7.0), 2);
    }
}
