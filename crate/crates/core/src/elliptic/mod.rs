//! Discrete Laplacian, Dirichlet solves, Green function columns, the
//! Gaussian ground state and the biharmonic (membrane) solver.

pub mod spectral;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{sample_iid_field, Distribution, SeedSpec};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::lattice::{Lattice, Site};
use crate::stats::{mean_estimate, Estimate};
pub use spectral::DirichletSpectrum;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolveReport {
    pub iterations: usize,
    /// Relative 2-norm of the final residual.
    pub residual: f64,
    pub converged: bool,
}

/// A symmetric positive definite operator on interior vectors.
pub trait LinearOperator: Sync {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

/// `-Δ` with zero Dirichlet data on `∂Λ_L`.
pub struct DirichletLaplacian<'a> {
    lattice: &'a Lattice,
}

impl<'a> DirichletLaplacian<'a> {
    pub fn new(lattice: &'a Lattice) -> Self {
        DirichletLaplacian { lattice }
    }
}

impl LinearOperator for DirichletLaplacian<'_> {
    fn size(&self) -> usize {
        self.lattice.n_interior()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let lat = self.lattice;
        let n = lat.n_interior();
        let deg = 2.0 * lat.dim() as f64;
        y.par_iter_mut()
            .with_min_len(4096)
            .enumerate()
            .for_each(|(i, yi)| {
                let mut s = deg * x[i];
                for &nb in lat.neighbors(i) {
                    if nb < n {
                        s -= x[nb];
                    }
                }
                *yi = s;
            });
    }

    fn diagonal(&self) -> Vec<f64> {
        vec![2.0 * self.lattice.dim() as f64; self.size()]
    }
}

/// `-∇·a∇` with conductances `a(e)` on the edges of `Λ_L^+` and zero
/// Dirichlet data.
pub struct WeightedLaplacian<'a> {
    lattice: &'a Lattice,
    weights: &'a [f64],
}

impl<'a> WeightedLaplacian<'a> {
    pub fn new(lattice: &'a Lattice, weights: &'a [f64]) -> Result<Self> {
        if weights.len() != lattice.edges().len() {
            return Err(Error::Format(format!(
                "expected {} edge weights, got {}",
                lattice.edges().len(),
                weights.len()
            )));
        }
        Ok(WeightedLaplacian { lattice, weights })
    }
}

impl LinearOperator for WeightedLaplacian<'_> {
    fn size(&self) -> usize {
        self.lattice.n_interior()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.lattice.n_interior();
        y.fill(0.0);
        for (e, &w) in self.lattice.edges().iter().zip(self.weights) {
            let xt = if e.tail < n { x[e.tail] } else { 0.0 };
            let xh = if e.head < n { x[e.head] } else { 0.0 };
            let flux = w * (xh - xt);
            if e.tail < n {
                y[e.tail] -= flux;
            }
            if e.head < n {
                y[e.head] += flux;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let n = self.lattice.n_interior();
        let mut d = vec![0.0; n];
        for (e, &w) in self.lattice.edges().iter().zip(self.weights) {
            if e.tail < n {
                d[e.tail] += w;
            }
            if e.head < n {
                d[e.head] += w;
            }
        }
        d
    }
}

/// `B^T B` where `B v = Δv` evaluated on all of `Λ_L^+`, with `v = 0`
/// outside `Λ_L`. On a boundary site `Δv` is the value at its interior
/// neighbour, so `B^T B = (-Δ)^2 + m` with `m(x)` the number of boundary
/// neighbours of `x`.
struct ClampedBiharmonic<'a> {
    lap: DirichletLaplacian<'a>,
    extra: Vec<f64>,
}

impl<'a> ClampedBiharmonic<'a> {
    fn new(lattice: &'a Lattice) -> Self {
        let n = lattice.n_interior();
        let extra = (0..n)
            .map(|i| lattice.neighbors(i).iter().filter(|&&nb| nb >= n).count() as f64)
            .collect();
        ClampedBiharmonic {
            lap: DirichletLaplacian::new(lattice),
            extra,
        }
    }
}

impl LinearOperator for ClampedBiharmonic<'_> {
    fn size(&self) -> usize {
        self.lap.size()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; x.len()];
        self.lap.apply(x, &mut tmp);
        self.lap.apply(&tmp, y);
        for ((yi, xi), m) in y.iter_mut().zip(x).zip(&self.extra) {
            *yi += m * xi;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let lat = self.lap.lattice;
        let n = lat.n_interior();
        let deg = 2.0 * lat.dim() as f64;
        (0..n)
            .map(|i| {
                let interior_nbs = lat.neighbors(i).iter().filter(|&&nb| nb < n).count() as f64;
                deg * deg + interior_nbs + self.extra[i]
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() > 1 << 15 {
        a.par_iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

/// Default iteration cap for a system of `n` unknowns.
pub fn default_max_iter(n: usize) -> usize {
    (4 * n).clamp(1000, 200_000)
}

/// Jacobi-preconditioned conjugate gradients. Stops when the true relative
/// residual `‖b - Ax‖/‖b‖` is at most `tol`.
pub fn pcg<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, LinearSolveReport) {
    let n = op.size();
    assert_eq!(b.len(), n);
    let b_norm = dot(b, b).sqrt();
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    if b_norm == 0.0 {
        return (
            vec![0.0; n],
            LinearSolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        );
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut ax = vec![0.0; n];
    let mut iterations = 0;
    // Restart from the true residual if rounding made the recursive one lie.
    loop {
        op.apply(&x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let mut rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= tol || iterations >= max_iter {
            return (
                x,
                LinearSolveReport {
                    iterations,
                    residual: rel,
                    converged: rel <= tol,
                },
            );
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let start = iterations;
        while iterations < max_iter {
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
            iterations += 1;
            rel = dot(&r, &r).sqrt() / b_norm;
            if rel <= 0.5 * tol {
                break;
            }
            z.iter_mut()
                .zip(r.iter().zip(&inv_diag))
                .for_each(|(zi, (ri, di))| *zi = ri * di);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        }
        if iterations == start {
            // No progress possible; report what we have.
            op.apply(&x, &mut ax);
            let r2: f64 = b
                .iter()
                .zip(&ax)
                .map(|(bi, ai)| (bi - ai).powi(2))
                .sum();
            let rel = r2.sqrt() / b_norm;
            return (
                x,
                LinearSolveReport {
                    iterations,
                    residual: rel,
                    converged: rel <= tol,
                },
            );
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::config("tol", "tolerance must be positive"));
    }
    Ok(())
}

fn require_converged(solver: &'static str, report: LinearSolveReport) -> Result<()> {
    if report.converged {
        Ok(())
    } else {
        Err(Error::NotConverged {
            solver,
            iterations: report.iterations,
            residual: report.residual,
        })
    }
}

/// Solves `A x = b` on interior vectors, failing if CG does not converge.
pub fn solve_interior<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    solver: &'static str,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    check_tol(tol)?;
    let (x, report) = pcg(op, b, x0, tol, default_max_iter(op.size()));
    require_converged(solver, report)?;
    Ok((x, report))
}

/// `(Δf)(x) = Σ_{y~x} (f(y) - f(x))` for interior `x`; zero on the boundary.
pub fn apply_laplacian(lattice: &Lattice, f: &Field) -> Result<Field> {
    f.check(lattice)?;
    let n = lattice.n_interior();
    let v = f.values();
    let deg = 2.0 * lattice.dim() as f64;
    let mut out = vec![0.0; lattice.n_sites()];
    out[..n].par_iter_mut().with_min_len(4096).enumerate().for_each(|(i, o)| {
        let s: f64 = lattice.neighbors(i).iter().map(|&nb| v[nb]).sum();
        *o = s - deg * v[i];
    });
    Field::from_values(lattice, out)
}

/// `(∇·a∇f)(x) = Σ_{e∋x} a(e)(f(y) - f(x))` for interior `x`, with `a` given
/// per edge in the lattice's edge order.
pub fn divergence_form(lattice: &Lattice, a: &[f64], f: &Field) -> Result<Field> {
    f.check(lattice)?;
    if a.len() != lattice.edges().len() {
        return Err(Error::Format("one conductance per edge required".into()));
    }
    let v = f.values();
    let n = lattice.n_interior();
    let mut out = vec![0.0; lattice.n_sites()];
    for (e, w) in lattice.edges().iter().zip(a) {
        let flux = w * (v[e.head] - v[e.tail]);
        out[e.tail] += flux;
        out[e.head] -= flux;
    }
    out[n..].fill(0.0);
    Field::from_values(lattice, out)
}

/// The Dirichlet problem `-Δu = rhs` in `Λ_L`, `u = 0` on `∂Λ_L`. Boundary
/// values of `rhs` are ignored.
pub fn solve_dirichlet(
    lattice: &Lattice,
    rhs: &Field,
    tol: f64,
) -> Result<(Field, LinearSolveReport)> {
    rhs.check(lattice)?;
    let op = DirichletLaplacian::new(lattice);
    let (u, report) = solve_interior(&op, rhs.interior(lattice), None, tol, "dirichlet cg")?;
    Ok((Field::from_interior(lattice, &u)?, report))
}

/// `G_Λ(·, y)`: the Dirichlet solve with a unit source at `y`.
pub fn green_column(lattice: &Lattice, y: &[i32], tol: f64) -> Result<Field> {
    let idx = lattice
        .interior_index(y)
        .ok_or_else(|| Error::NotInterior(y.to_vec()))?;
    let mut rhs = Field::zeros(lattice);
    rhs.values_mut()[idx] = 1.0;
    Ok(solve_dirichlet(lattice, &rhs, tol)?.0)
}

/// `Σ_y G_Λ(x, y)^2`, the variance of `u_{Λ,η}(x)` for unit-variance
/// disorder.
pub fn height_variance_exact(lattice: &Lattice, x: &[i32], tol: f64) -> Result<f64> {
    let col = green_column(lattice, x, tol)?;
    Ok(col.values().iter().map(|g| g * g).sum())
}

/// `(1/|Λ^+|) Σ_y G_Λ(y, y)`, the expected averaged squared gradient of
/// `u_{Λ,η}` for unit-variance disorder.
pub fn gradient_average_exact(lattice: &Lattice) -> f64 {
    let spec = DirichletSpectrum::new(lattice);
    spec.trace(|l| 1.0 / l) / lattice.n_sites() as f64
}

#[derive(Debug, Clone, Copy)]
pub enum StatsMode {
    Exact,
    MonteCarlo {
        n_realizations: usize,
        distribution: Distribution,
        seed: SeedSpec,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundStateStats {
    pub sites: Vec<Site>,
    /// `E[u(x)^2]` for each requested site.
    pub height_sq: Vec<Estimate>,
    /// `E[‖∇u‖^2 / |Λ^+|]`.
    pub grad_sq_avg: Estimate,
}

/// Disorder averages of the Gaussian ground state `u_{Λ,η}`.
pub fn gaussian_ground_state_stats(
    lattice: &Lattice,
    sites: &[Site],
    mode: StatsMode,
    tol: f64,
) -> Result<GroundStateStats> {
    check_tol(tol)?;
    let idx: Vec<usize> = sites
        .iter()
        .map(|s| lattice.interior_index(s).ok_or_else(|| Error::NotInterior(s.clone())))
        .collect::<Result<_>>()?;
    match mode {
        StatsMode::Exact => {
            let height_sq = sites
                .par_iter()
                .map(|s| height_variance_exact(lattice, s, tol).map(Estimate::exact))
                .collect::<Result<Vec<_>>>()?;
            Ok(GroundStateStats {
                sites: sites.to_vec(),
                height_sq,
                grad_sq_avg: Estimate::exact(gradient_average_exact(lattice)),
            })
        }
        StatsMode::MonteCarlo {
            n_realizations,
            distribution,
            seed,
        } => {
            let rows = (0..n_realizations as u64)
                .into_par_iter()
                .map(|r| {
                    let eta = sample_iid_field(lattice, distribution, seed.with_realization(r));
                    let (u, _) = solve_dirichlet(lattice, &eta, tol)?;
                    let heights: Vec<f64> = idx.iter().map(|&i| u.get(i).powi(2)).collect();
                    let grad = u.gradient_sq_sum(lattice) / lattice.n_sites() as f64;
                    Ok((heights, grad))
                })
                .collect::<Result<Vec<_>>>()?;
            let height_sq = (0..idx.len())
                .map(|k| mean_estimate(&rows.iter().map(|r| r.0[k]).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()?;
            let grads: Vec<f64> = rows.iter().map(|r| r.1).collect();
            Ok(GroundStateStats {
                sites: sites.to_vec(),
                height_sq,
                grad_sq_avg: mean_estimate(&grads)?,
            })
        }
    }
}

/// How `Δ²` is closed at the edge of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MembraneStencil {
    /// `(-Δ_Λ)^2` with the Dirichlet Laplacian of the box, so that
    /// `v = G(Gη)`.
    #[default]
    Variational,
    /// The full `Δ(Δv)` with `v = 0` on a two-site layer outside `Λ_L`.
    Clamped,
}

/// Solves the biharmonic equation `Δ²v = rhs` in `Λ_L`, `v = 0` outside.
pub fn solve_membrane(
    lattice: &Lattice,
    rhs: &Field,
    tol: f64,
    stencil: MembraneStencil,
) -> Result<(Field, LinearSolveReport)> {
    rhs.check(lattice)?;
    check_tol(tol)?;
    let b = rhs.interior(lattice);
    match stencil {
        MembraneStencil::Clamped => {
            let op = ClampedBiharmonic::new(lattice);
            let (v, report) = solve_interior(&op, b, None, tol, "membrane cg")?;
            Ok((Field::from_interior(lattice, &v)?, report))
        }
        MembraneStencil::Variational => {
            let lap = DirichletLaplacian::new(lattice);
            let n = lattice.n_interior();
            let b_norm = dot(b, b).sqrt();
            let mut v = vec![0.0; n];
            let mut r = b.to_vec();
            let mut iterations = 0;
            let mut residual = if b_norm == 0.0 { 0.0 } else { 1.0 };
            let mut tmp = vec![0.0; n];
            let mut tmp2 = vec![0.0; n];
            // Two Dirichlet solves per pass, refined on the biharmonic residual.
            for _ in 0..8 {
                if residual <= tol {
                    break;
                }
                let inner = (tol * 1e-2).max(1e-15);
                let max_iter = default_max_iter(n);
                let (w, r1) = pcg(&lap, &r, None, inner, max_iter);
                let (dv, r2) = pcg(&lap, &w, None, inner, max_iter);
                iterations += r1.iterations + r2.iterations;
                v.iter_mut().zip(&dv).for_each(|(a, d)| *a += d);
                lap.apply(&v, &mut tmp);
                lap.apply(&tmp, &mut tmp2);
                r.iter_mut()
                    .zip(b.iter().zip(&tmp2))
                    .for_each(|(ri, (bi, ai))| *ri = bi - ai);
                residual = dot(&r, &r).sqrt() / b_norm;
            }
            let report = LinearSolveReport {
                iterations,
                residual,
                converged: residual <= tol,
            };
            require_converged("membrane cg", report)?;
            Ok((Field::from_interior(lattice, &v)?, report))
        }
    }
}

/// `Var[v(x)] = Σ_y K(x, y)^2` with `K` the inverse of the biharmonic
/// operator, for unit-variance disorder.
pub fn membrane_height_variance(
    lattice: &Lattice,
    x: &[i32],
    tol: f64,
    stencil: MembraneStencil,
) -> Result<f64> {
    let idx = lattice
        .interior_index(x)
        .ok_or_else(|| Error::NotInterior(x.to_vec()))?;
    if stencil == MembraneStencil::Variational {
        // K = G², so Σ_y K(x,y)² = Σ_k ψ_k(x)² / λ_k⁴.
        check_tol(tol)?;
        let offsets: Vec<usize> = x.iter().map(|&c| (c + lattice.side() as i32) as usize).collect();
        return Ok(DirichletSpectrum::new(lattice).diagonal(&offsets, |l| l.powi(-4)));
    }
    let mut rhs = Field::zeros(lattice);
    rhs.values_mut()[idx] = 1.0;
    let (col, _) = solve_membrane(lattice, &rhs, tol, stencil)?;
    Ok(col.values().iter().map(|v| v * v).sum())
}
