//! Disorder averages and finite-size scaling: Efron–Stein estimates, the
//! variance of thermal means, the law of total variance, scaling sweeps and
//! exponent fits.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{one_dependent_with, resample_at, sample_iid_field, Distribution, Purpose, SeedSpec};
use crate::elliptic::{
    apply_laplacian, green_column, membrane_height_variance, solve_dirichlet, DirichletSpectrum, MembraneStencil,
};
use crate::error::{Error, Result};
use crate::field::{Field, IntField};
use crate::groundstate::{default_band as chain_band, solve_integer_ground_state_chain, solve_real_ground_state};
use crate::ivgff::{metropolis_sample, IvSpec, MetropolisConfig};
use crate::langevin::{default_burn_in, default_dt, relaxation_time, sample_observables, GibbsEstimate, Langevin};
use crate::lattice::Lattice;
use crate::potentials::Potential;
use crate::stats::{jackknife_variance, mean, mean_estimate, variance, Estimate};

/// Law of the quenched field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DisorderLaw {
    Iid(Distribution),
    /// `η = -Δζ` with `ζ` a Dirichlet free field.
    OneDependent,
}

impl DisorderLaw {
    pub fn sample(&self, lattice: &Lattice, seed: SeedSpec) -> Field {
        let seed = seed.with_purpose(Purpose::Disorder);
        match self {
            DisorderLaw::Iid(d) => sample_iid_field(lattice, *d, seed),
            DisorderLaw::OneDependent => one_dependent_with(lattice, &DirichletSpectrum::new(lattice), seed),
        }
    }
}

impl fmt::Display for DisorderLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DisorderLaw::Iid(d) => write!(f, "{d}"),
            DisorderLaw::OneDependent => write!(f, "one-dependent"),
        }
    }
}

impl FromStr for DisorderLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "one-dependent" {
            return Ok(DisorderLaw::OneDependent);
        }
        s.parse().map(DisorderLaw::Iid)
    }
}

/// `Σ_y G(x,y)²` for i.i.d. unit-variance disorder; `G(x,x)` for the
/// one-dependent field, whose covariance is `-Δ`. Both are `Var[u(x)]`.
pub fn gaussian_height_variance(lattice: &Lattice, law: DisorderLaw, x: &[i32], tol: f64) -> Result<f64> {
    let col = green_column(lattice, x, tol)?;
    Ok(match law {
        DisorderLaw::Iid(_) => col.dot(&col),
        DisorderLaw::OneDependent => -apply_laplacian(lattice, &col)?.dot(&col),
    })
}

/// `E[‖∇u‖²] / |Λ^+|`, i.e. `tr(G)/|Λ^+|` for i.i.d. disorder and
/// `|Λ|/|Λ^+|` for the one-dependent field.
pub fn gaussian_gradient_average(lattice: &Lattice, law: DisorderLaw) -> f64 {
    let total = match law {
        DisorderLaw::Iid(_) => DirichletSpectrum::new(lattice).trace(|l| 1.0 / l),
        DisorderLaw::OneDependent => lattice.n_interior() as f64,
    };
    total / lattice.n_sites() as f64
}

/// Both sides of the Efron–Stein inequality, with their errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfronSteinReport {
    /// `½ Σ_x E[(f(η) - f(η^x))²]`.
    pub bound: Estimate,
    /// `Var[f(η)]`.
    pub variance: Estimate,
}

impl EfronSteinReport {
    /// `Var ≤ bound` up to `k` combined standard errors.
    pub fn holds(&self, k: f64) -> bool {
        let sigma = self.bound.stderr.hypot(self.variance.stderr);
        self.variance.mean - self.bound.mean <= k * sigma + 1e-12 * self.bound.mean.abs()
    }
}

/// Closed forms for `f(η) = u(x)`: the variance `Σ_y G(x,y)²` from the
/// spectral decomposition and the Efron–Stein sum `½ Σ_y G(x,y)²·E[(η-η')²]`
/// from a conjugate-gradient Green column. The two agree exactly for
/// unit-variance coordinates.
pub fn efron_stein_linear(lattice: &Lattice, x: &[i32]) -> Result<EfronSteinReport> {
    let idx = lattice
        .interior_index(x)
        .ok_or_else(|| Error::NotInterior(x.to_vec()))?;
    let spectrum = DirichletSpectrum::new(lattice);
    let offsets: Vec<usize> = x.iter().map(|&c| (c + lattice.side() as i32) as usize).collect();
    let variance = spectrum.diagonal(&offsets, |l| 1.0 / (l * l));
    let col = green_column(lattice, lattice.site(idx), 1e-14)?;
    let bound = 0.5 * col.values().iter().map(|g| g * g * 2.0).sum::<f64>();
    Ok(EfronSteinReport {
        bound: Estimate::exact(bound),
        variance: Estimate::exact(variance),
    })
}

/// Monte Carlo Efron–Stein for an arbitrary estimator of i.i.d. disorder.
/// Each outer sample resamples `n_sites` interior sites (all if `None`)
/// chosen in index order with a stride, and rescales the partial sum.
pub fn efron_stein_mc<F>(
    lattice: &Lattice,
    distribution: Distribution,
    n_outer: usize,
    n_sites: Option<usize>,
    seed: SeedSpec,
    f: F,
) -> Result<EfronSteinReport>
where
    F: Fn(&Field) -> Result<f64> + Sync,
{
    if n_outer < 3 {
        return Err(Error::TooFewSamples { got: n_outer, need: 3 });
    }
    let n = lattice.n_interior();
    let m = n_sites.unwrap_or(n).clamp(1, n);
    let rows = (0..n_outer as u64)
        .into_par_iter()
        .map(|r| {
            let s = seed.with_realization(r);
            let eta = sample_iid_field(lattice, distribution, s.with_purpose(Purpose::Disorder));
            let base = f(&eta)?;
            // Rotate the site subset between outer samples.
            let offset = (r as usize * 7919) % n;
            let mut sum = 0.0;
            for k in 0..m {
                let x = (offset + k * n / m) % n;
                let fresh = resample_at(lattice, &eta, lattice.site(x), distribution, s.with_purpose(Purpose::Resample))?;
                sum += (base - f(&fresh)?).powi(2);
            }
            Ok((base, 0.5 * sum * n as f64 / m as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let bounds: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(EfronSteinReport {
        bound: mean_estimate(&bounds)?,
        variance: jackknife_variance(&values)?,
    })
}

/// How thermal expectations are obtained for one disorder realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sampler {
    /// Quadratic potential only: `⟨φ⟩ = λu/κ` and the thermal covariance is
    /// `G/(βκ)` exactly.
    ExactGaussian,
    Langevin {
        dt: f64,
        burn_in: f64,
        duration: f64,
        every: usize,
    },
}

impl Sampler {
    /// Langevin with the default step and burn-in and `duration` time units
    /// of sampling.
    pub fn langevin(lattice: &Lattice, potential: &Potential, beta: f64, duration: f64) -> Self {
        let dt = default_dt(lattice, potential, beta);
        Sampler::Langevin {
            dt,
            burn_in: default_burn_in(lattice),
            duration,
            every: ((0.05 / dt).round() as usize).max(1),
        }
    }
}

/// One real-valued thermal experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermalConfig {
    pub dim: usize,
    pub side: usize,
    pub lambda: f64,
    pub beta: f64,
    pub potential: Potential,
    pub disorder: DisorderLaw,
    pub sampler: Sampler,
    pub seed: u64,
}

/// `⟨φ(0)⟩` and `⟨φ(0)²⟩` for one realization, with the Monte Carlo error
/// of the first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalMoments {
    pub first: f64,
    pub second: f64,
    pub first_stderr: f64,
}

pub fn thermal_moments(config: &ThermalConfig, lattice: &Lattice, realization: u64) -> Result<ThermalMoments> {
    let seed = SeedSpec::new(config.seed).with_realization(realization);
    let eta = config.disorder.sample(lattice, seed);
    let o = lattice.origin();
    match config.sampler {
        Sampler::ExactGaussian => {
            let kappa = quadratic_kappa(&config.potential)?;
            let g00 = green_column(lattice, lattice.site(o), 1e-12)?.get(o);
            let first = if config.lambda == 0.0 {
                0.0
            } else {
                config.lambda / kappa * solve_dirichlet(lattice, &eta, 1e-12)?.0.get(o)
            };
            Ok(ThermalMoments {
                first,
                second: first * first + g00 / (config.beta * kappa),
                first_stderr: 0.0,
            })
        }
        Sampler::Langevin {
            dt,
            burn_in,
            duration,
            every,
        } => {
            let est = sample_observables(
                lattice,
                &config.potential,
                &eta,
                config.lambda,
                config.beta,
                dt,
                burn_in,
                duration,
                every,
                seed,
                &["phi", "phi_sq"],
                |phi, out| {
                    out[0] = phi[o];
                    out[1] = phi[o] * phi[o];
                },
            )?;
            Ok(ThermalMoments {
                first: est[0].mean,
                second: est[1].mean,
                first_stderr: est[0].stderr,
            })
        }
    }
}

fn quadratic_kappa(potential: &Potential) -> Result<f64> {
    match potential {
        Potential::Quadratic { kappa } => Ok(*kappa),
        _ => Err(Error::config("sampler", "the exact Gaussian sampler needs a quadratic potential")),
    }
}

fn realizations(config: &ThermalConfig, lattice: &Lattice, n: usize) -> Result<Vec<ThermalMoments>> {
    (0..n as u64)
        .into_par_iter()
        .map(|r| thermal_moments(config, lattice, r))
        .collect()
}

/// `Var[⟨φ(0)⟩]` over disorder. The exact Gaussian sampler returns the
/// closed form `(λ/κ)² Var[u(0)]`; the Langevin sampler returns the
/// jackknifed sample variance of the time averages minus their mean squared
/// Monte Carlo error.
pub fn variance_of_thermal_mean(config: &ThermalConfig, n_realizations: usize) -> Result<ScalingRow> {
    let lattice = Lattice::build_box(config.dim, config.side)?;
    let mut row = ScalingRow {
        d: config.dim,
        l: config.side,
        lambda: config.lambda,
        beta: Some(config.beta),
        observable: "var_thermal_mean".into(),
        estimate: 0.0,
        stderr: 0.0,
        n: n_realizations,
        seed: config.seed,
    };
    match config.sampler {
        Sampler::ExactGaussian => {
            let kappa = quadratic_kappa(&config.potential)?;
            let v = gaussian_height_variance(&lattice, config.disorder, &vec![0; config.dim], 1e-12)?;
            row.estimate = (config.lambda / kappa).powi(2) * v;
            row.n = 0;
        }
        Sampler::Langevin { .. } => {
            let rows = realizations(config, &lattice, n_realizations)?;
            let means: Vec<f64> = rows.iter().map(|r| r.first).collect();
            let noise = mean(&rows.iter().map(|r| r.first_stderr.powi(2)).collect::<Vec<_>>());
            let jk = jackknife_variance(&means)?;
            row.estimate = jk.mean - noise;
            row.stderr = jk.stderr;
        }
    }
    Ok(row)
}

/// `Var[φ(0)] = E[⟨φ²⟩ - ⟨φ⟩²] + (E[⟨φ⟩²] - E[⟨φ⟩]²)`, with all averages
/// over realizations normalised by `1/n` so the identity is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub thermal: f64,
    pub disorder: f64,
    pub total: f64,
    pub n: usize,
}

impl VarianceDecomposition {
    pub fn from_moments(rows: &[ThermalMoments]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::TooFewSamples { got: 0, need: 1 });
        }
        let first: Vec<f64> = rows.iter().map(|r| r.first).collect();
        let m1 = mean(&first);
        let m2 = mean(&rows.iter().map(|r| r.second).collect::<Vec<_>>());
        let sq = mean(&first.iter().map(|x| x * x).collect::<Vec<_>>());
        Ok(VarianceDecomposition {
            thermal: m2 - sq,
            disorder: sq - m1 * m1,
            total: m2 - m1 * m1,
            n: rows.len(),
        })
    }

    /// `|thermal + disorder - total|`.
    pub fn defect(&self) -> f64 {
        (self.thermal + self.disorder - self.total).abs()
    }
}

pub fn total_variance_decomposition(config: &ThermalConfig, n_realizations: usize) -> Result<VarianceDecomposition> {
    let lattice = Lattice::build_box(config.dim, config.side)?;
    VarianceDecomposition::from_moments(&realizations(config, &lattice, n_realizations)?)
}

/// The two-sided bound `(λ/c_+)‖∇u‖ ≤ ‖∇φ‖_{L²(μ)} ≤ (2λ/c_-)‖∇u‖ +
/// √(2|Λ|/c_-)` with `‖∇φ‖_{L²(μ)}² = Σ_e ⟨(∇φ(e))²⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub lower: f64,
    pub upper: f64,
    pub norm: Estimate,
}

impl SandwichReport {
    /// Both inequalities up to `k` standard errors plus `slack`.
    pub fn holds(&self, k: f64, slack: f64) -> bool {
        let margin = k * self.norm.stderr + slack;
        self.norm.mean + margin >= self.lower && self.norm.mean - margin <= self.upper
    }
}

/// Langevin settings for [`quenched_sandwich`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub dt: f64,
    pub burn_in: f64,
    pub duration: f64,
    pub every: usize,
}

impl ChainSettings {
    /// Default step, a burn-in of five relaxation times and samples every
    /// 0.05 time units.
    pub fn quick(lattice: &Lattice, potential: &Potential, duration: f64) -> Self {
        let dt = default_dt(lattice, potential, 1.0);
        ChainSettings {
            dt,
            burn_in: 5.0 * relaxation_time(lattice, potential, 1.0),
            duration,
            every: ((0.05 / dt).round() as usize).max(1),
        }
    }
}

/// Estimates `‖∇φ‖_{L²(μ)}` at `β = 1` with a chain started from the real
/// ground state, and evaluates both bounds.
pub fn quenched_sandwich(
    lattice: &Lattice,
    potential: &Potential,
    eta: &Field,
    lambda: f64,
    chain: ChainSettings,
    seed: SeedSpec,
) -> Result<SandwichReport> {
    let (u, _) = solve_dirichlet(lattice, eta, 1e-12)?;
    let grad_u = u.gradient_sq_sum(lattice).sqrt();
    let (start, _) = solve_real_ground_state(lattice, potential, eta, lambda, 1e-10)?;
    let mut sampler = Langevin::new(lattice, potential, eta, lambda, 1.0, chain.dt, seed)?;
    sampler.set_state(&start)?;
    sampler.run(chain.burn_in, usize::MAX, |_, _| {});
    let edges = lattice.edges();
    let mut series = Vec::new();
    sampler.run(chain.duration, chain.every, |_, phi| {
        series.push(edges.iter().map(|e| (phi[e.head] - phi[e.tail]).powi(2)).sum::<f64>());
    });
    let energy = GibbsEstimate::from_series("grad_sq", &series, chain.burn_in)?;
    let norm = energy.mean.max(0.0).sqrt();
    let (cm, cp) = (potential.c_minus(), potential.c_plus());
    Ok(SandwichReport {
        lower: lambda / cp * grad_u,
        upper: 2.0 * lambda / cm * grad_u + (2.0 * lattice.n_interior() as f64 / cm).sqrt(),
        norm: Estimate {
            mean: norm,
            stderr: if norm > 0.0 { energy.stderr / (2.0 * norm) } else { 0.0 },
            n: energy.n_effective,
        },
    })
}

/// Quantities tracked by [`scaling_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    /// `E[‖∇v‖²] / |Λ^+|` for the real ground state.
    GradNormReal,
    /// `Var[v(0)]` for the real ground state.
    HeightVarReal,
    /// `E[‖∇φ‖²] / |Λ|` for the integer field.
    GradNormIv,
    /// `E[Σ_x φ(x)²] / |Λ|` for the integer field.
    HeightNormIv,
    /// `Var[v(0)]` for the membrane ground state.
    MembraneHeightVar,
}

impl Observable {
    pub const ALL: [Observable; 5] = [
        Observable::GradNormReal,
        Observable::HeightVarReal,
        Observable::GradNormIv,
        Observable::HeightNormIv,
        Observable::MembraneHeightVar,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Observable::GradNormReal => "grad_norm_real",
            Observable::HeightVarReal => "height_var_real",
            Observable::GradNormIv => "grad_norm_iv",
            Observable::HeightNormIv => "height_norm_iv",
            Observable::MembraneHeightVar => "membrane_height_var",
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Observable::ALL
            .into_iter()
            .find(|o| o.tag() == s)
            .ok_or_else(|| Error::config("observable", format!("unknown observable {s:?}")))
    }
}

/// One row of a scaling table. `beta = None` stands for zero temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub lambda: f64,
    #[serde(with = "beta_column")]
    pub beta: Option<f64>,
    pub observable: String,
    pub estimate: f64,
    pub stderr: f64,
    /// Number of disorder realizations; 0 for closed-form rows.
    pub n: usize,
    pub seed: u64,
}

mod beta_column {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(beta: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match beta {
            Some(b) => s.serialize_f64(*b),
            None => s.serialize_str("inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" {
            return Ok(None);
        }
        s.parse().map(Some).map_err(serde::de::Error::custom)
    }
}

/// Header of the scaling CSV.
pub const SCALING_HEADER: &str = "d,L,lambda,beta,observable,estimate,stderr,n,seed";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    pub fn new(mut rows: Vec<ScalingRow>) -> Self {
        rows.sort_by_key(|r| r.l);
        ScalingTable { rows }
    }

    pub fn push(&mut self, row: ScalingRow) {
        let at = self.rows.partition_point(|r| r.l <= row.l);
        self.rows.insert(at, row);
    }

    /// `(L, estimate, stderr)` triples.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.l as f64, r.estimate, r.stderr))
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        if self.rows.is_empty() {
            w.write_record(SCALING_HEADER.split(','))
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(|e| Error::Format(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>().join(",") != SCALING_HEADER {
            return Err(Error::Format(format!("unexpected scaling header {headers:?}")));
        }
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ScalingRow>, _>>()
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(ScalingTable::new(rows))
    }
}

/// Template for a finite-size sweep. `exact` selects closed forms (Gaussian
/// and membrane observables); otherwise disorder is sampled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub observable: Observable,
    pub dim: usize,
    pub lambda: f64,
    /// `None` is zero temperature.
    pub beta: Option<f64>,
    pub potential: Potential,
    pub disorder: DisorderLaw,
    pub exact: bool,
    pub n_realizations: usize,
    pub seed: u64,
    pub stencil: MembraneStencil,
    /// Metropolis sweeps per realization for integer observables at
    /// positive temperature.
    pub sweeps: usize,
}

impl SweepConfig {
    pub fn new(observable: Observable, dim: usize) -> Self {
        SweepConfig {
            observable,
            dim,
            lambda: 1.0,
            beta: None,
            potential: Potential::Quadratic { kappa: 1.0 },
            disorder: DisorderLaw::Iid(Distribution::StandardGaussian),
            exact: true,
            n_realizations: 100,
            seed: 0,
            stencil: MembraneStencil::Variational,
            sweeps: 10_000,
        }
    }
}

/// A sweep's rows plus the sides whose row failed.
#[derive(Debug)]
pub struct SweepOutcome {
    pub table: ScalingTable,
    pub failures: Vec<(usize, Error)>,
}

/// One row per side length. Rows are computed independently; a failing row
/// is reported in `failures` and left out of the table.
pub fn scaling_sweep(config: &SweepConfig, sides: &[usize]) -> Result<SweepOutcome> {
    if sides.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("L", "side lengths must be strictly increasing"));
    }
    let results: Vec<(usize, Result<ScalingRow>)> = sides
        .par_iter()
        .map(|&l| (l, scaling_row(config, l)))
        .collect();
    let mut table = ScalingTable::default();
    let mut failures = Vec::new();
    for (l, r) in results {
        match r {
            Ok(row) => table.push(row),
            Err(Error::InvalidConfig { field, reason }) => return Err(Error::InvalidConfig { field, reason }),
            Err(e) => failures.push((l, e)),
        }
    }
    Ok(SweepOutcome { table, failures })
}

/// A single row of [`scaling_sweep`].
pub fn scaling_row(config: &SweepConfig, side: usize) -> Result<ScalingRow> {
    let lattice = Lattice::build_box(config.dim, side)?;
    let origin = vec![0; config.dim];
    let mut row = ScalingRow {
        d: config.dim,
        l: side,
        lambda: config.lambda,
        beta: config.beta,
        observable: config.observable.tag().into(),
        estimate: 0.0,
        stderr: 0.0,
        n: if config.exact { 0 } else { config.n_realizations },
        seed: config.seed,
    };
    let lambda = config.lambda;
    let est = match (config.observable, config.exact) {
        (Observable::GradNormReal | Observable::HeightVarReal, true) => {
            let kappa = quadratic_kappa(&config.potential)?;
            let scale = (lambda / kappa).powi(2);
            let v = if config.observable == Observable::GradNormReal {
                gaussian_gradient_average(&lattice, config.disorder)
            } else {
                gaussian_height_variance(&lattice, config.disorder, &origin, 1e-12)?
            };
            Estimate::exact(scale * v)
        }
        (Observable::MembraneHeightVar, true) => {
            if !matches!(config.disorder, DisorderLaw::Iid(_)) {
                return Err(Error::config("disorder", "the membrane closed form assumes i.i.d. disorder"));
            }
            Estimate::exact(lambda * lambda * membrane_height_variance(&lattice, &origin, 1e-12, config.stencil)?)
        }
        (Observable::GradNormReal | Observable::HeightVarReal, false) => {
            let o = lattice.origin();
            let values = per_realization(config, &lattice, |eta| {
                let (v, _) = solve_real_ground_state(&lattice, &config.potential, eta, lambda, 1e-10)?;
                Ok(if config.observable == Observable::GradNormReal {
                    v.gradient_sq_sum(&lattice) / lattice.n_sites() as f64
                } else {
                    v.get(o)
                })
            })?;
            if config.observable == Observable::GradNormReal {
                mean_estimate(&values)?
            } else {
                jackknife_variance(&values)?
            }
        }
        (Observable::GradNormIv | Observable::HeightNormIv, false) => {
            let volume = lattice.n_interior() as f64;
            let values = per_realization(config, &lattice, |eta| {
                let field = integer_surface_average(config, &lattice, eta)?;
                Ok(match config.observable {
                    Observable::GradNormIv => field.0 / volume,
                    _ => field.1 / volume,
                })
            })?;
            mean_estimate(&values)?
        }
        (Observable::GradNormIv | Observable::HeightNormIv, true) => {
            return Err(Error::config("exact", "integer observables have no closed form; sample disorder instead"));
        }
        (Observable::MembraneHeightVar, false) => {
            return Err(Error::config("exact", "the membrane observable is computed in closed form only"));
        }
    };
    row.estimate = est.mean;
    row.stderr = est.stderr;
    Ok(row)
}

fn per_realization(
    config: &SweepConfig,
    lattice: &Lattice,
    f: impl Fn(&Field) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    if config.n_realizations < 3 {
        return Err(Error::config("n_realizations", "need at least 3 realizations"));
    }
    (0..config.n_realizations as u64)
        .into_par_iter()
        .map(|r| {
            let eta = config
                .disorder
                .sample(lattice, SeedSpec::new(config.seed).with_realization(r));
            f(&eta)
        })
        .collect()
}

/// `(Σ_e (∇φ)², Σ_x φ²)` for the integer field: the exact ground state of a
/// chain at zero temperature, a Metropolis time average otherwise.
fn integer_surface_average(config: &SweepConfig, lattice: &Lattice, eta: &Field) -> Result<(f64, f64)> {
    match config.beta {
        None => {
            let band = chain_band(lattice, eta, config.lambda)?;
            let gs = solve_integer_ground_state_chain(lattice, eta, config.lambda, band)?;
            if gs.touches_band {
                return Err(Error::BandSaturated { fraction: 1.0 });
            }
            let phi: &IntField = &gs.field;
            let sq: i64 = phi.values().iter().map(|p| p * p).sum();
            Ok((phi.gradient_sq_sum(lattice) as f64, sq as f64))
        }
        Some(beta) => {
            let spec = IvSpec::with_default_band(lattice, eta, beta, config.lambda)?;
            let run = metropolis_sample(&spec, &MetropolisConfig::new(lattice, config.sweeps), SeedSpec::new(config.seed))?;
            run.check_band()?;
            let volume = lattice.n_interior() as f64;
            let grad = run.estimate("grad_sq_avg").mean * volume;
            let sq: f64 = run.site_second_moments.values().iter().sum();
            Ok((grad, sq))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `y = A L^p`.
    Power,
    /// `y = a ln L + b`.
    LogLinear,
    /// `y = c`.
    Constant,
}

impl FromStr for FitModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(FitModel::Power),
            "log-linear" => Ok(FitModel::LogLinear),
            "constant" => Ok(FitModel::Constant),
            _ => Err(Error::config("model", format!("unknown fit model {s:?}"))),
        }
    }
}

/// Result of [`fit_exponent`]. For the power model `exponent` is `p`, for
/// the log-linear model it is the slope `a`, and for the constant model the
/// fitted value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub stderr: f64,
    pub r2: f64,
    pub model: FitModel,
    /// `A` for the power model, `b` for the log-linear model.
    #[serde(skip)]
    pub prefactor: f64,
    /// Root mean square of `(ŷ - y)/y` over the rows.
    #[serde(skip)]
    pub residual: f64,
}

impl ExponentFit {
    pub fn predict(&self, l: f64) -> f64 {
        match self.model {
            FitModel::Power => self.prefactor * l.powf(self.exponent),
            FitModel::LogLinear => self.exponent * l.ln() + self.prefactor,
            FitModel::Constant => self.exponent,
        }
    }
}

/// Weighted least squares of `y` on `x` with weights `w`:
/// `(slope, intercept, slope stderr, R²)`. The slope error uses the
/// residual variance, so an exact fit has zero error.
fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - xm) * (c - ym)).sum();
    let syy: f64 = y.iter().zip(w).map(|(c, b)| b * (c - ym).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (c - intercept - slope * a).powi(2))
        .sum();
    let n = x.len() as f64;
    let stderr = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r2 = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 1.0 };
    (slope, intercept, stderr, r2)
}

/// Fits a growth law to `(L, estimate, stderr)` rows. Rows are weighted by
/// their inverse variance when every row has a positive error, uniformly
/// otherwise.
pub fn fit_exponent(table: &ScalingTable, model: FitModel) -> Result<ExponentFit> {
    fit_points(&table.points(), model)
}

pub fn fit_points(points: &[(f64, f64, f64)], model: FitModel) -> Result<ExponentFit> {
    if points.len() < 4 {
        return Err(Error::TooFewSamples {
            got: points.len(),
            need: 4,
        });
    }
    let weighted = points.iter().all(|p| p.2 > 0.0);
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut fit = match model {
        FitModel::Power => {
            if points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
                return Err(Error::config("estimate", "power fits need positive sides and estimates"));
            }
            let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
            let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
            let w: Vec<f64> = points
                .iter()
                .map(|p| if weighted { (p.1 / p.2).powi(2) } else { 1.0 })
                .collect();
            let (slope, intercept, stderr, r2) = weighted_line(&x, &y, &w);
            ExponentFit {
                exponent: slope,
                stderr,
                r2,
                model,
                prefactor: intercept.exp(),
                residual: 0.0,
            }
        }
        FitModel::LogLinear => {
            if points.iter().any(|p| !(p.0 > 0.0)) {
                return Err(Error::config("L", "log-linear fits need positive sides"));
            }
            let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
            let w: Vec<f64> = points
                .iter()
                .map(|p| if weighted { p.2.powi(-2) } else { 1.0 })
                .collect();
            let (slope, intercept, stderr, r2) = weighted_line(&x, &ys, &w);
            ExponentFit {
                exponent: slope,
                stderr,
                r2,
                model,
                prefactor: intercept,
                residual: 0.0,
            }
        }
        FitModel::Constant => {
            let w: Vec<f64> = points
                .iter()
                .map(|p| if weighted { p.2.powi(-2) } else { 1.0 })
                .collect();
            let sw: f64 = w.iter().sum();
            let c = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
            let spread = variance(&ys);
            ExponentFit {
                exponent: c,
                stderr: (spread / ys.len() as f64).sqrt(),
                r2: if spread == 0.0 { 1.0 } else { 0.0 },
                model,
                prefactor: c,
                residual: 0.0,
            }
        }
    };
    let rel: Vec<f64> = points
        .iter()
        .map(|p| ((fit.predict(p.0) - p.1) / p.1).powi(2))
        .collect();
    fit.residual = mean(&rel).sqrt();
    Ok(fit)
}
