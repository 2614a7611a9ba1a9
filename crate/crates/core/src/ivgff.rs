//! The integer-valued Gaussian free field in a random field: a single-site
//! Metropolis sampler, exact enumeration on tiny boxes, connected-set
//! enumeration for Peierls arguments, pyramid test functions and the shift
//! inequality.

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::disorder::{Purpose, SeedSpec};
use crate::elliptic::{apply_laplacian, solve_dirichlet};
use crate::error::{Error, Result};
use crate::field::{Field, IntField};
use crate::groundstate::integer_energy;
use crate::langevin::GibbsEstimate;
use crate::lattice::{Lattice, Site};
use crate::stats::Estimate;

/// Band-edge rejection rate above which a sample set is flagged.
pub const BAND_THRESHOLD: f64 = 1e-3;

/// Largest state space the exact enumerator accepts.
pub const MAX_STATES: f64 = 1e8;

/// Largest connected sets the enumerator accepts.
pub const MAX_SET_SITES: usize = 14;

/// The law `exp(-β H) / Z` on integer surfaces with heights in `[-K, K]`,
/// where `H(φ) = ½Σ_e (∇φ(e))² - λ Σ_x η(x)φ(x)`.
#[derive(Debug, Clone, Copy)]
pub struct IvSpec<'a> {
    pub lattice: &'a Lattice,
    pub eta: &'a Field,
    pub beta: f64,
    pub lambda: f64,
    pub band: i64,
}

impl<'a> IvSpec<'a> {
    pub fn new(lattice: &'a Lattice, eta: &'a Field, beta: f64, lambda: f64, band: i64) -> Result<Self> {
        eta.check(lattice)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::config("beta", "inverse temperature must be positive"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda", "disorder strength must be nonnegative"));
        }
        if band < 1 {
            return Err(Error::config("band", "K must be at least 1"));
        }
        Ok(IvSpec {
            lattice,
            eta,
            beta,
            lambda,
            band,
        })
    }

    /// Same as [`IvSpec::new`] with the band from [`default_band`].
    pub fn with_default_band(lattice: &'a Lattice, eta: &'a Field, beta: f64, lambda: f64) -> Result<Self> {
        let band = default_band(lattice, eta, beta, lambda)?;
        Self::new(lattice, eta, beta, lambda, band)
    }

    pub fn energy(&self, phi: &IntField) -> f64 {
        integer_energy(self.lattice, self.eta, self.lambda, phi).total
    }

    /// `β (H(φ + s·δ_x) - H(φ))` for an interior `x`.
    fn delta(&self, phi: &[i64], x: usize, s: i64) -> f64 {
        let p = phi[x];
        let nb: i64 = self.lattice.neighbors(x).iter().map(|&y| p - phi[y]).sum();
        let deg = self.lattice.neighbors(x).len() as f64;
        let s = s as f64;
        self.beta * (s * nb as f64 + 0.5 * deg - self.lambda * self.eta.get(x) * s)
    }
}

/// `K = ⌈2λ·max|u| + 6/√β⌉` with `u` the Gaussian ground state for unit
/// disorder strength.
pub fn default_band(lattice: &Lattice, eta: &Field, beta: f64, lambda: f64) -> Result<i64> {
    let (u, _) = solve_dirichlet(lattice, eta, 1e-10)?;
    Ok((2.0 * lambda * u.max_abs() + 6.0 / beta.sqrt()).ceil().max(1.0) as i64)
}

/// `φ` rounded from `λu` and clamped to the band.
fn rounded_start(spec: &IvSpec) -> Result<Vec<i64>> {
    let lat = spec.lattice;
    let mut phi = vec![0i64; lat.n_sites()];
    if spec.lambda > 0.0 {
        let (u, _) = solve_dirichlet(lat, spec.eta, 1e-10)?;
        for (p, v) in phi.iter_mut().zip(u.interior(lat)) {
            *p = ((spec.lambda * v).round() as i64).clamp(-spec.band, spec.band);
        }
    }
    Ok(phi)
}

/// Monte Carlo settings. One sweep is `|Λ|` single-site proposals at
/// uniformly chosen sites.
#[derive(Debug, Clone)]
pub struct MetropolisConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Interior index of the observed site `v`.
    pub site: usize,
    /// Test functions `w` whose shift margins are recorded.
    pub shifts: Vec<IntField>,
    /// Starting surface; by default `λu` rounded.
    pub initial: Option<IntField>,
}

impl MetropolisConfig {
    pub fn new(lattice: &Lattice, sweeps: usize) -> Self {
        MetropolisConfig {
            sweeps,
            burn_in: (sweeps / 10).max(100),
            thin: 1,
            site: lattice.origin(),
            shifts: Vec::new(),
            initial: None,
        }
    }
}

/// Observables recorded by [`metropolis_sample`], in order.
pub const IV_OBSERVABLES: [&str; 6] = ["phi", "phi_sq", "zero", "grad_sq_avg", "d_plus", "d_minus"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetropolisRun {
    /// One entry per name in [`IV_OBSERVABLES`], then `shift0`, `shift1`, ...
    pub estimates: Vec<GibbsEstimate>,
    /// Time averages of `φ(x)` and `φ(x)²` at every site.
    pub site_means: Field,
    pub site_second_moments: Field,
    pub acceptance: f64,
    /// Fraction of proposals rejected because they left the band.
    pub band_fraction: f64,
    pub saturated: bool,
    pub n_samples: usize,
    pub final_state: IntField,
}

impl MetropolisRun {
    pub fn get(&self, name: &str) -> Option<&GibbsEstimate> {
        self.estimates.iter().find(|e| e.observable == name)
    }

    /// The estimate for `name`; panics if it was not recorded.
    pub fn estimate(&self, name: &str) -> Estimate {
        self.get(name)
            .unwrap_or_else(|| panic!("no observable {name}"))
            .estimate()
    }

    /// Errors with [`Error::BandSaturated`] if the band was hit too often.
    pub fn check_band(&self) -> Result<()> {
        if self.saturated {
            return Err(Error::BandSaturated {
                fraction: self.band_fraction,
            });
        }
        Ok(())
    }
}

/// `-Δw` on interior sites.
fn minus_laplacian(lattice: &Lattice, w: &IntField) -> Result<Vec<f64>> {
    let lap = apply_laplacian(lattice, &w.to_real())?;
    Ok(lap.interior(lattice).iter().map(|v| -v).collect())
}

/// Random-scan single-site Metropolis chain with `±1` proposals. Proposals
/// leaving `[-K, K]` are rejected, so the chain is reversible for the
/// banded law.
pub fn metropolis_sample(spec: &IvSpec, config: &MetropolisConfig, seed: SeedSpec) -> Result<MetropolisRun> {
    let lat = spec.lattice;
    let n = lat.n_interior();
    if config.site >= n {
        return Err(Error::config("site", "observed site must be interior"));
    }
    if config.sweeps == 0 {
        return Err(Error::config("sweeps", "must be positive"));
    }
    let mut phi = match &config.initial {
        Some(init) => {
            init.check(lat)?;
            if init.max_abs() > spec.band {
                return Err(Error::config("initial", "starting surface leaves the band"));
            }
            init.values().to_vec()
        }
        None => rounded_start(spec)?,
    };
    let shift_ops: Vec<(Vec<f64>, f64)> = config
        .shifts
        .iter()
        .map(|w| {
            w.check(lat)?;
            let lw = minus_laplacian(lat, w)?;
            let coupling: f64 = spec
                .eta
                .interior(lat)
                .iter()
                .zip(w.interior(lat))
                .map(|(e, &x)| e * x as f64)
                .sum();
            let constant = w.gradient_sq_sum(lat) as f64 - 2.0 * spec.lambda * coupling;
            Ok((lw, constant))
        })
        .collect::<Result<_>>()?;

    let mut rng = seed.with_purpose(Purpose::Metropolis).rng();
    let thin = config.thin.max(1);
    let n_series = IV_OBSERVABLES.len() + shift_ops.len();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); n_series];
    let mut sums = vec![0.0; n];
    let mut sums_sq = vec![0.0; n];
    let (mut accepted, mut proposed, mut band_hits) = (0u64, 0u64, 0u64);
    let volume = n as f64;
    let v = config.site;

    for sweep in 0..config.burn_in + config.sweeps {
        for _ in 0..n {
            let x = rng.random_range(0..n);
            let s: i64 = if rng.random::<bool>() { 1 } else { -1 };
            proposed += 1;
            if (phi[x] + s).abs() > spec.band {
                band_hits += 1;
                continue;
            }
            let d = spec.delta(&phi, x, s);
            if d <= 0.0 || rng.random::<f64>() < (-d).exp() {
                phi[x] += s;
                accepted += 1;
            }
        }
        if sweep < config.burn_in || !(sweep - config.burn_in + 1).is_multiple_of(thin) {
            continue;
        }
        let grad: i64 = lat
            .edges()
            .iter()
            .map(|e| (phi[e.head] - phi[e.tail]).pow(2))
            .sum();
        let pv = phi[v] as f64;
        let obs = [
            pv,
            pv * pv,
            (phi[v] == 0) as u8 as f64,
            grad as f64 / volume,
            (phi[v] >= 1) as u8 as f64,
            (phi[v] <= -1) as u8 as f64,
        ];
        for (s, o) in series.iter_mut().zip(obs) {
            s.push(o);
        }
        for (k, (lw, c)) in shift_ops.iter().enumerate() {
            let dot: f64 = lw.iter().zip(&phi).map(|(a, &p)| a * p as f64).sum();
            series[IV_OBSERVABLES.len() + k].push(2.0 * dot + c);
        }
        for ((s, q), &p) in sums.iter_mut().zip(sums_sq.iter_mut()).zip(&phi) {
            *s += p as f64;
            *q += (p * p) as f64;
        }
    }

    let n_samples = series[0].len();
    let burn_in = config.burn_in as f64;
    let mut estimates = Vec::with_capacity(n_series);
    for (k, s) in series.iter().enumerate() {
        let name = match IV_OBSERVABLES.get(k) {
            Some(name) => name.to_string(),
            None => format!("shift{}", k - IV_OBSERVABLES.len()),
        };
        estimates.push(GibbsEstimate::from_series(name, s, burn_in)?);
    }
    let means: Vec<f64> = sums.iter().map(|s| s / n_samples as f64).collect();
    let second: Vec<f64> = sums_sq.iter().map(|s| s / n_samples as f64).collect();
    let band_fraction = band_hits as f64 / proposed as f64;
    Ok(MetropolisRun {
        estimates,
        site_means: Field::from_interior(lat, &means)?,
        site_second_moments: Field::from_interior(lat, &second)?,
        acceptance: accepted as f64 / proposed as f64,
        band_fraction,
        saturated: band_fraction > BAND_THRESHOLD,
        n_samples,
        final_state: IntField::from_values(lat, phi)?,
    })
}

/// Everything the exact enumerator computes about the banded law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactEnumeration {
    pub n_states: u64,
    pub log_z: f64,
    pub mean: Field,
    pub second_moment: Field,
    /// `P(φ(x) = 0)`, `P(φ(x) ≥ 1)` and `P(φ(x) ≤ -1)` per site.
    pub zero_prob: Field,
    pub plus_prob: Field,
    pub minus_prob: Field,
    /// `⟨Σ_e (∇φ(e))²⟩ / |Λ|`.
    pub grad_sq_avg: f64,
    /// `log⟨exp((β/8)‖∇φ - λ∇u‖²)⟩`.
    pub log_exp_moment: f64,
    /// `log_exp_moment / ((1 + β)|Λ^+|)`.
    pub moment_constant: f64,
    /// A most likely configuration (the first one met in enumeration order).
    pub mode: IntField,
    /// Probability that some height equals `±K`.
    pub band_mass: f64,
}

fn state_count(spec: &IvSpec) -> Result<u64> {
    let count = ((2 * spec.band + 1) as f64).powi(spec.lattice.n_interior() as i32);
    if count > MAX_STATES {
        return Err(Error::StateSpaceTooLarge(count));
    }
    Ok(count as u64)
}

/// Visits every banded configuration with its energy. Interior values are
/// advanced as an odometer with the last site fastest.
fn for_each_state(spec: &IvSpec, mut visit: impl FnMut(&[i64], f64)) -> Result<u64> {
    let count = state_count(spec)?;
    let lat = spec.lattice;
    let n = lat.n_interior();
    let k = spec.band;
    let mut phi = vec![0i64; lat.n_sites()];
    phi[..n].iter_mut().for_each(|p| *p = -k);
    let eta = spec.eta.interior(lat);
    for _ in 0..count {
        let elastic: i64 = lat
            .edges()
            .iter()
            .map(|e| (phi[e.head] - phi[e.tail]).pow(2))
            .sum();
        let coupling: f64 = eta.iter().zip(&phi).map(|(e, &p)| e * p as f64).sum();
        visit(&phi, 0.5 * elastic as f64 - spec.lambda * coupling);
        for i in (0..n).rev() {
            if phi[i] < k {
                phi[i] += 1;
                break;
            }
            phi[i] = -k;
        }
    }
    Ok(count)
}

/// Lower bound for the energy, the minimum of the real-valued Hamiltonian
/// `-½λ² Σ η u`. Used as the reference point for Boltzmann weights.
fn energy_floor(spec: &IvSpec) -> Result<(f64, Field)> {
    let (u, _) = solve_dirichlet(spec.lattice, spec.eta, 1e-13)?;
    Ok((-0.5 * spec.lambda * spec.lambda * spec.eta.dot(&u), u))
}

/// Sums over all `(2K+1)^{|Λ|}` banded configurations.
pub fn exact_enumerate(spec: &IvSpec) -> Result<ExactEnumeration> {
    let lat = spec.lattice;
    let n = lat.n_interior();
    let (h0, u) = energy_floor(spec)?;
    let lu: Vec<f64> = u.values().iter().map(|x| spec.lambda * x).collect();
    let edges = lat.edges();
    let mut z = 0.0;
    let mut mean = vec![0.0; n];
    let mut second = vec![0.0; n];
    let mut zero = vec![0.0; n];
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut grad = 0.0;
    let mut band_mass = 0.0;
    // The exponential moment can be huge relative to Z; keep it in log form.
    let mut moment_terms: Vec<f64> = Vec::new();
    let mut best = (f64::INFINITY, vec![0i64; lat.n_sites()]);
    let n_states = for_each_state(spec, |phi, h| {
        let w = (-spec.beta * (h - h0)).exp();
        z += w;
        for i in 0..n {
            let p = phi[i] as f64;
            mean[i] += w * p;
            second[i] += w * p * p;
            zero[i] += w * (phi[i] == 0) as u8 as f64;
            plus[i] += w * (phi[i] >= 1) as u8 as f64;
            minus[i] += w * (phi[i] <= -1) as u8 as f64;
        }
        let mut g = 0.0;
        let mut dev = 0.0;
        for e in edges {
            let d = (phi[e.head] - phi[e.tail]) as f64;
            g += d * d;
            dev += (d - (lu[e.head] - lu[e.tail])).powi(2);
        }
        grad += w * g;
        if phi[..n].iter().any(|p| p.abs() == spec.band) {
            band_mass += w;
        }
        moment_terms.push(-spec.beta * (h - h0) + spec.beta / 8.0 * dev);
        if h < best.0 - 1e-12 {
            best = (h, phi.to_vec());
        }
    })?;
    let top = moment_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_moment_sum = top + moment_terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
    let log_exp_moment = log_moment_sum - z.ln();
    let scale = |v: Vec<f64>| Field::from_interior(lat, &v.iter().map(|x| x / z).collect::<Vec<_>>());
    Ok(ExactEnumeration {
        n_states,
        log_z: z.ln() - spec.beta * h0,
        mean: scale(mean)?,
        second_moment: scale(second)?,
        zero_prob: scale(zero)?,
        plus_prob: scale(plus)?,
        minus_prob: scale(minus)?,
        grad_sq_avg: grad / z / n as f64,
        log_exp_moment,
        moment_constant: log_exp_moment / ((1.0 + spec.beta) * lat.n_sites() as f64),
        mode: IntField::from_values(lat, best.1)?,
        band_mass: band_mass / z,
    })
}

/// Worst violations of detailed balance and of stationarity for the
/// random-scan Metropolis kernel against the enumerated law,
/// `(max |π(a)K(a,b) - π(b)K(b,a)|, max |(πK)(b) - π(b)|)`.
pub fn metropolis_balance_defects(spec: &IvSpec) -> Result<(f64, f64)> {
    let lat = spec.lattice;
    let n = lat.n_interior();
    let (h0, _) = energy_floor(spec)?;
    let mut weights = Vec::new();
    for_each_state(spec, |_, h| weights.push((-spec.beta * (h - h0)).exp()))?;
    let z: f64 = weights.iter().sum();
    let pi: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let radix = (2 * spec.band + 1) as usize;
    // Stride of site i in the odometer encoding (last site fastest).
    let strides: Vec<usize> = (0..n).map(|i| radix.pow((n - 1 - i) as u32)).collect();
    let mut flow = vec![0.0; pi.len()];
    let mut balance: f64 = 0.0;
    let mut phi = vec![0i64; lat.n_sites()];
    for (a, &pa) in pi.iter().enumerate() {
        for i in 0..n {
            phi[i] = ((a / strides[i]) % radix) as i64 - spec.band;
        }
        let mut stay = 1.0;
        for x in 0..n {
            for s in [-1i64, 1] {
                if (phi[x] + s).abs() > spec.band {
                    continue;
                }
                let p = 0.5 / n as f64 * (-spec.delta(&phi, x, s)).exp().min(1.0);
                let b = if s > 0 { a + strides[x] } else { a - strides[x] };
                stay -= p;
                flow[b] += pa * p;
                phi[x] += s;
                let back = 0.5 / n as f64 * (-spec.delta(&phi, x, -s)).exp().min(1.0);
                phi[x] -= s;
                balance = balance.max((pa * p - pi[b] * back).abs());
            }
        }
        flow[a] += pa * stay;
    }
    let stationarity = flow
        .iter()
        .zip(&pi)
        .map(|(f, p)| (f - p).abs())
        .fold(0.0, f64::max);
    Ok((balance, stationarity))
}

/// Both sides of the change of variables `φ → φ + ⌊λu⌋`, in log form:
/// `log Z - ½βλ²‖∇u‖²`, `log Σ_φ exp(-½β‖∇φ - λ∇u‖²)` and the same sum
/// after the shift, `log Σ_ψ exp(-½β‖∇ψ - ∇{λu}‖²)` with `{·}` the
/// fractional part. All three sums run over the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorShiftCheck {
    pub lhs: f64,
    pub completed_square: f64,
    pub shifted: f64,
}

impl FloorShiftCheck {
    pub fn max_relative_gap(&self) -> f64 {
        let a = (self.lhs - self.completed_square).abs();
        let b = (self.lhs - self.shifted).abs();
        a.max(b) / self.lhs.abs().max(1.0)
    }
}

pub fn floor_shift_identity(spec: &IvSpec) -> Result<FloorShiftCheck> {
    let lat = spec.lattice;
    let exact = exact_enumerate(spec)?;
    let (_, u) = energy_floor(spec)?;
    let lu: Vec<f64> = u.values().iter().map(|x| spec.lambda * x).collect();
    let frac: Vec<f64> = lu.iter().map(|x| x - x.floor()).collect();
    let grad_u: f64 = lat
        .edges()
        .iter()
        .map(|e| (lu[e.head] - lu[e.tail]).powi(2))
        .sum();
    let log_sum = |target: &[f64]| -> Result<f64> {
        let mut terms = Vec::new();
        for_each_state(spec, |phi, _| {
            let dev: f64 = lat
                .edges()
                .iter()
                .map(|e| ((phi[e.head] - phi[e.tail]) as f64 - (target[e.head] - target[e.tail])).powi(2))
                .sum();
            terms.push(-0.5 * spec.beta * dev);
        })?;
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln())
    };
    Ok(FloorShiftCheck {
        lhs: exact.log_z - 0.5 * spec.beta * grad_u,
        completed_square: log_sum(&lu)?,
        shifted: log_sum(&frac)?,
    })
}

/// `2Σ_e ⟨∇φ(e)⟩∇w(e) - 2λΣ_x η(x)w(x) + ‖∇w‖²` given the thermal means
/// `⟨φ(x)⟩`. This is `2⟨H(φ + w) - H(φ)⟩`, nonnegative by invariance of the
/// unbanded sum under integer shifts and Jensen's inequality.
pub fn shift_margin(lattice: &Lattice, eta: &Field, lambda: f64, mean: &Field, w: &IntField) -> Result<f64> {
    mean.check(lattice)?;
    w.check(lattice)?;
    let lw = minus_laplacian(lattice, w)?;
    let dot: f64 = lw.iter().zip(mean.values()).map(|(a, m)| a * m).sum();
    let coupling: f64 = eta.values().iter().zip(w.values()).map(|(e, &x)| e * x as f64).sum();
    Ok(2.0 * (dot - lambda * coupling) + w.gradient_sq_sum(lattice) as f64)
}

/// Outcome of the shift inequality for one test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftCheck {
    pub margin: f64,
    pub stderr: f64,
    pub holds: bool,
}

/// Accepts a Monte Carlo margin if it is at least `-4σ`, an exact one if it
/// is nonnegative up to rounding.
pub fn check_shift_inequality(margin: Estimate) -> ShiftCheck {
    let slack = if margin.stderr > 0.0 {
        4.0 * margin.stderr
    } else {
        1e-9 * margin.mean.abs().max(1.0)
    };
    ShiftCheck {
        margin: margin.mean,
        stderr: margin.stderr,
        holds: margin.mean >= -slack,
    }
}

/// `P_{L,y}(x) = ⌊L^{1-d/2}⌋ · max(0, ⌊L/4⌋ - |x - y|_∞)`.
pub fn pyramid(lattice: &Lattice, y: &[i32]) -> Result<IntField> {
    let l = lattice.side();
    let d = lattice.dim();
    let half = (l / 2) as i32;
    if y.len() != d || y.iter().any(|c| c.abs() > half) {
        return Err(Error::config("y", format!("pyramid centre must lie in the box of side {half}")));
    }
    let height = (l as f64).powf(1.0 - d as f64 / 2.0).floor() as i64;
    let quarter = (l / 4) as i64;
    let values: Vec<i64> = (0..lattice.n_sites())
        .map(|i| {
            if !lattice.is_interior(i) {
                return 0;
            }
            let r = crate::lattice::linf_distance(lattice.site(i), y) as i64;
            height * (quarter - r).max(0)
        })
        .collect();
    IntField::from_values(lattice, values)
}

/// The connected component of `v` in `{x : sign·φ(x) ≥ 1}`, as interior
/// indices; empty when `sign·φ(v) ≤ 0`.
pub fn excursion_component(lattice: &Lattice, phi: &IntField, v: usize, sign: i64) -> Vec<usize> {
    let values = phi.values();
    let inside = |i: usize| i < lattice.n_interior() && sign * values[i] >= 1;
    if !inside(v) {
        return Vec::new();
    }
    let mut seen = HashSet::from([v]);
    let mut queue = VecDeque::from([v]);
    let mut out = Vec::new();
    while let Some(x) = queue.pop_front() {
        out.push(x);
        for &y in lattice.neighbors(x) {
            if inside(y) && seen.insert(y) {
                queue.push_back(y);
            }
        }
    }
    out.sort_unstable();
    out
}

/// External vertex boundary size of a set of interior sites.
pub fn vertex_boundary(lattice: &Lattice, set: &[usize]) -> usize {
    let members: HashSet<usize> = set.iter().copied().collect();
    let outside: HashSet<usize> = set
        .iter()
        .flat_map(|&x| lattice.neighbors(x).iter().copied())
        .filter(|y| !members.contains(y))
        .collect();
    outside.len()
}

/// Fractions of zero heights and of nonempty `D_±` at `v` over a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeierlsReport {
    pub zero: Estimate,
    pub d_plus: Estimate,
    pub d_minus: Estimate,
    /// `1 - ⟨1{φ(v)=0}⟩ ≤ ⟨1{D_+≠∅}⟩ + ⟨1{D_-≠∅}⟩` (up to rounding).
    pub union_bound_holds: bool,
    /// Mean `|∂D_±|` over samples where the component is nonempty.
    pub mean_boundary: f64,
}

impl PeierlsReport {
    fn assemble(zero: Estimate, d_plus: Estimate, d_minus: Estimate, mean_boundary: f64) -> Self {
        PeierlsReport {
            zero,
            d_plus,
            d_minus,
            union_bound_holds: 1.0 - zero.mean <= d_plus.mean + d_minus.mean + 1e-12,
            mean_boundary,
        }
    }

    /// From a list of samples.
    pub fn from_samples(lattice: &Lattice, samples: &[IntField], v: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooFewSamples { got: 0, need: 1 });
        }
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        let (mut boundary, mut nonempty) = (0usize, 0usize);
        for s in samples {
            s.check(lattice)?;
            let p = excursion_component(lattice, s, v, 1);
            let m = excursion_component(lattice, s, v, -1);
            for c in [&p, &m] {
                if !c.is_empty() {
                    boundary += vertex_boundary(lattice, c);
                    nonempty += 1;
                }
            }
            cols[0].push((s.get(v) == 0) as u8 as f64);
            cols[1].push(!p.is_empty() as u8 as f64);
            cols[2].push(!m.is_empty() as u8 as f64);
        }
        let est = |c: &[f64]| crate::stats::mean_estimate(c);
        let mean_boundary = if nonempty > 0 {
            boundary as f64 / nonempty as f64
        } else {
            0.0
        };
        Ok(Self::assemble(est(&cols[0])?, est(&cols[1])?, est(&cols[2])?, mean_boundary))
    }

    /// From a Metropolis run.
    pub fn from_run(run: &MetropolisRun) -> Self {
        Self::assemble(run.estimate("zero"), run.estimate("d_plus"), run.estimate("d_minus"), f64::NAN)
    }

    /// From exact enumeration at interior site `v`.
    pub fn from_exact(exact: &ExactEnumeration, v: usize) -> Self {
        Self::assemble(
            Estimate::exact(exact.zero_prob.get(v)),
            Estimate::exact(exact.plus_prob.get(v)),
            Estimate::exact(exact.minus_prob.get(v)),
            f64::NAN,
        )
    }
}

/// A connected set of interior sites containing the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectedSetRecord {
    pub sites: Vec<Site>,
    pub boundary: usize,
    pub field_sum: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectedSets {
    pub root: Site,
    pub max_sites: usize,
    pub max_boundary: usize,
    /// Sets with `|∂Λ| ≤ max_boundary` and at most `max_sites` sites.
    pub records: Vec<ConnectedSetRecord>,
    /// `|A_{N,v}|` restricted to sets of at most `max_sites` sites.
    pub counts_by_boundary: BTreeMap<usize, u64>,
    /// Number of connected sets per size, regardless of boundary.
    pub counts_by_size: BTreeMap<usize, u64>,
    /// Sets with `λ|Σ_Λ η| > |∂Λ|`, for the `λ` passed in.
    pub event_violations: usize,
}

impl ConnectedSets {
    /// `ln|A_N| / N` for every boundary size with at least one set.
    pub fn growth_rates(&self) -> Vec<(usize, f64)> {
        self.counts_by_boundary
            .iter()
            .map(|(&n, &c)| (n, (c as f64).ln() / n as f64))
            .collect()
    }

    /// Rows `size,boundary,field_sum,sites` with sites written as
    /// `x0;x1;..` joined by `|`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["size", "boundary", "field_sum", "sites"])
            .map_err(|e| Error::Format(e.to_string()))?;
        for r in &self.records {
            let sites: Vec<String> = r
                .sites
                .iter()
                .map(|s| s.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"))
                .collect();
            w.write_record([
                r.sites.len().to_string(),
                r.boundary.to_string(),
                format!("{}", r.field_sum),
                sites.join("|"),
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every connected set of interior sites containing `v` with at most
/// `max_sites` sites (rooted Redelmeier search). Each set is produced once.
pub fn for_each_connected_set(
    lattice: &Lattice,
    v: usize,
    max_sites: usize,
    mut visit: impl FnMut(&[usize]),
) -> Result<()> {
    if v >= lattice.n_interior() {
        return Err(Error::NotInterior(lattice.site(v).to_vec()));
    }
    if max_sites > MAX_SET_SITES {
        return Err(Error::CapExceeded(format!(
            "connected sets of {max_sites} sites (limit {MAX_SET_SITES})"
        )));
    }
    if max_sites == 0 {
        return Ok(());
    }
    fn grow(
        lattice: &Lattice,
        current: &mut Vec<usize>,
        untried: Vec<usize>,
        seen: &mut HashSet<usize>,
        max_sites: usize,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        let mut untried = untried;
        while let Some(u) = untried.pop() {
            current.push(u);
            visit(current);
            if current.len() < max_sites {
                let mut fresh = Vec::new();
                for &y in lattice.neighbors(u) {
                    if y < lattice.n_interior() && seen.insert(y) {
                        fresh.push(y);
                    }
                }
                let mut next = untried.clone();
                next.extend_from_slice(&fresh);
                grow(lattice, current, next, seen, max_sites, visit);
                for y in fresh {
                    seen.remove(&y);
                }
            }
            current.pop();
        }
    }
    let mut seen = HashSet::from([v]);
    let mut current = Vec::with_capacity(max_sites);
    grow(lattice, &mut current, vec![v], &mut seen, max_sites, &mut visit);
    Ok(())
}

/// Enumerates connected sets containing `v` and records those with
/// `|∂Λ| ≤ max_boundary`, together with the event `λ|Σ_Λ η| ≤ |∂Λ|`.
pub fn enumerate_connected_sets(
    lattice: &Lattice,
    v: &[i32],
    max_sites: usize,
    max_boundary: usize,
    eta: &Field,
    lambda: f64,
) -> Result<ConnectedSets> {
    eta.check(lattice)?;
    let root = lattice
        .interior_index(v)
        .ok_or_else(|| Error::NotInterior(v.to_vec()))?;
    let mut out = ConnectedSets {
        root: v.to_vec(),
        max_sites,
        max_boundary,
        records: Vec::new(),
        counts_by_boundary: BTreeMap::new(),
        counts_by_size: BTreeMap::new(),
        event_violations: 0,
    };
    for_each_connected_set(lattice, root, max_sites, |set| {
        *out.counts_by_size.entry(set.len()).or_default() += 1;
        let boundary = vertex_boundary(lattice, set);
        if boundary > max_boundary {
            return;
        }
        *out.counts_by_boundary.entry(boundary).or_default() += 1;
        let field_sum: f64 = set.iter().map(|&i| eta.get(i)).sum();
        if lambda * field_sum.abs() > boundary as f64 {
            out.event_violations += 1;
        }
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        out.records.push(ConnectedSetRecord {
            sites: sorted.iter().map(|&i| lattice.site(i).to_vec()).collect(),
            boundary,
            field_sum,
        });
    })?;
    Ok(out)
}
