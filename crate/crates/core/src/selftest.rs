//! A quick suite of closed-form checks, run by `rfsurf selftest`.

use serde::Serialize;

use crate::disorder::{sample_iid_field, Distribution, SeedSpec};
use crate::elliptic::{apply_laplacian, height_variance_exact, solve_dirichlet};
use crate::error::Result;
use crate::experiments::{efron_stein_linear, fit_points, FitModel};
use crate::field::Field;
use crate::groundstate::solve_integer_ground_state_chain;
use crate::io::{read_field_binary, write_field_binary, FieldHeader};
use crate::ivgff::{
    enumerate_connected_sets, exact_enumerate, metropolis_balance_defects, pyramid, IvSpec,
};
use crate::langevin::Langevin;
use crate::lattice::Lattice;
use crate::parabolic::{evolve_heat_kernel, max_stable_dt, ConstantEnvironment};
use crate::potentials::Potential;

#[derive(Debug, Clone, Serialize)]
pub struct SelfTestCase {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type Check = fn() -> Result<(bool, String)>;

fn box_counts() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, l, interior, boundary, edges) in [(1, 1, 3, 2, 4), (2, 0, 1, 4, 4), (1, 128, 257, 2, 258)] {
        let lat = Lattice::build_box(d, l)?;
        let got = (lat.n_interior(), lat.n_boundary(), lat.edges().len());
        ok &= got == (interior, boundary, edges);
        parts.push(format!("(d={d},L={l}) -> {got:?}"));
    }
    Ok((ok, parts.join(", ")))
}

fn laplacian_stencil() -> Result<(bool, String)> {
    let lat = Lattice::build_box(1, 1)?;
    let f = Field::from_interior(&lat, &[1.0, 1.0, 1.0])?;
    let lap = apply_laplacian(&lat, &f)?;
    let got = lap.interior(&lat).to_vec();
    Ok((got == [-1.0, 0.0, -1.0], format!("Δ(1,1,1) = {got:?}")))
}

fn height_variance_small_box() -> Result<(bool, String)> {
    let lat = Lattice::build_box(1, 1)?;
    let v = height_variance_exact(&lat, &[0], 1e-14)?;
    let es = efron_stein_linear(&lat, &[0])?;
    let ok = (v - 1.5).abs() < 1e-12 && (es.bound.mean - es.variance.mean).abs() < 1e-12;
    Ok((ok, format!("Σ_y G(0,y)² = {v:.12}, Efron–Stein gap {:.1e}", es.bound.mean - es.variance.mean)))
}

fn energy_identity() -> Result<(bool, String)> {
    let lat = Lattice::build_box(2, 5)?;
    let eta = sample_iid_field(&lat, Distribution::StandardGaussian, SeedSpec::new(1));
    let (u, _) = solve_dirichlet(&lat, &eta, 1e-12)?;
    let lhs = u.gradient_sq_sum(&lat);
    let rhs = u.dot(&eta);
    let rel = (lhs - rhs).abs() / rhs.abs();
    Ok((rel < 1e-8, format!("Σ(∇u)² vs Σuη relative gap {rel:.1e}")))
}

fn unstable_step_rejected() -> Result<(bool, String)> {
    let lat = Lattice::build_box(1, 4)?;
    let pot = Potential::quadratic(1.0)?;
    let eta = Field::zeros(&lat);
    let r = Langevin::new(&lat, &pot, &eta, 1.0, 1.0, 10.0, SeedSpec::new(0));
    Ok((r.is_err(), "dt = 10 rejected".into()))
}

fn heat_kernel_mass() -> Result<(bool, String)> {
    let lat = Lattice::build_box(2, 4)?;
    let dt = max_stable_dt(&lat, 1.0);
    let frames = evolve_heat_kernel(&lat, &ConstantEnvironment(1.0), 0.0, &[0, 0], 10.0, dt, 20)?;
    let masses: Vec<f64> = frames.iter().map(|f| f.mass()).collect();
    let ok = masses.windows(2).all(|w| w[1] <= w[0] + 1e-15) && masses[0] == 1.0;
    Ok((ok, format!("mass 1 -> {:.4}", masses.last().copied().unwrap_or(1.0))))
}

fn chain_ground_state() -> Result<(bool, String)> {
    let lat = Lattice::build_box(1, 1)?;
    let eta = Field::from_interior(&lat, &[0.0, 10.0, 0.0])?;
    let gs = solve_integer_ground_state_chain(&lat, &eta, 1.0, 20)?;
    let got = gs.field.interior(&lat).to_vec();
    Ok((got == [5, 10, 5], format!("λη = (0,10,0) -> {got:?}")))
}

fn symmetric_enumeration() -> Result<(bool, String)> {
    let lat = Lattice::build_box(1, 1)?;
    let eta = Field::zeros(&lat);
    let spec = IvSpec::new(&lat, &eta, 1.0, 0.0, 6)?;
    let ex = exact_enumerate(&spec)?;
    let m = ex.mean.max_abs();
    let (balance, stationarity) = metropolis_balance_defects(&spec)?;
    let ok = m < 1e-12 && balance < 1e-12 && stationarity < 1e-10;
    Ok((ok, format!("max |⟨φ⟩| {m:.1e}, balance {balance:.1e}, stationarity {stationarity:.1e}")))
}

fn connected_set_counts() -> Result<(bool, String)> {
    let lat = Lattice::build_box(2, 4)?;
    let sets = enumerate_connected_sets(&lat, &[0, 0], 3, usize::MAX, &Field::zeros(&lat), 1.0)?;
    let counts: Vec<u64> = sets.counts_by_size.values().copied().collect();
    Ok((counts == [1, 4, 18], format!("sizes 1..3 -> {counts:?}")))
}

fn pyramid_peak() -> Result<(bool, String)> {
    let lat = Lattice::build_box(1, 8)?;
    let p = pyramid(&lat, &[0])?;
    let peak = p.max_abs();
    Ok((peak == 4, format!("d=1, L=8 peak {peak}")))
}

fn synthetic_fit() -> Result<(bool, String)> {
    let pts: Vec<(f64, f64, f64)> = [4.0f64, 8.0, 16.0, 32.0]
        .iter()
        .map(|&l| (l, 2.0 * l.powi(3), 0.0))
        .collect();
    let fit = fit_points(&pts, FitModel::Power)?;
    Ok(((fit.exponent - 3.0).abs() < 1e-12 && fit.r2 > 1.0 - 1e-12, format!("y = 2L³ -> exponent {:.6}", fit.exponent)))
}

fn field_round_trip() -> Result<(bool, String)> {
    let lat = Lattice::build_box(2, 2)?;
    let eta = sample_iid_field(&lat, Distribution::Rademacher, SeedSpec::new(3));
    let header = FieldHeader::new(&lat, "rademacher", 3);
    let mut buf = Vec::new();
    write_field_binary(&mut buf, &header, &eta)?;
    let (h, f) = read_field_binary(buf.as_slice())?;
    Ok((h == header && f.values() == eta.values(), format!("{} bytes", buf.len())))
}

const CHECKS: [(&str, Check); 12] = [
    ("box counts", box_counts),
    ("laplacian stencil", laplacian_stencil),
    ("height variance d=1 L=1", height_variance_small_box),
    ("energy identity", energy_identity),
    ("unstable step rejected", unstable_step_rejected),
    ("heat kernel mass", heat_kernel_mass),
    ("chain ground state", chain_ground_state),
    ("symmetric enumeration", symmetric_enumeration),
    ("connected set counts", connected_set_counts),
    ("pyramid peak", pyramid_peak),
    ("synthetic power fit", synthetic_fit),
    ("field file round trip", field_round_trip),
];

/// Runs every check; an error inside a check counts as a failure.
pub fn run_selftest() -> Vec<SelfTestCase> {
    CHECKS
        .iter()
        .map(|&(name, check)| match check() {
            Ok((pass, detail)) => SelfTestCase { name, pass, detail },
            Err(e) => SelfTestCase {
                name,
                pass: false,
                detail: e.to_string(),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for case in run_selftest() {
            assert!(case.pass, "{}: {}", case.name, case.detail);
        }
    }
}
