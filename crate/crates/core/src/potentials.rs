//! Even, uniformly convex nearest-neighbour potentials.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    /// `V(x) = κx²/2`.
    Quadratic { kappa: f64 },
    /// `V(x) = x²/2 + κ√(1+x²)`, with `1 ∧ (1+κ) ≤ V'' ≤ 1 ∨ (1+κ)`.
    QuadPlusSqrt { kappa: f64 },
    /// `V'` tabulated at knots `0 = x_0 < x_1 < ...`, interpolated linearly,
    /// extended oddly to negative `x` and linearly past the last knot.
    Table(TablePotential),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePotential {
    knots: Vec<f64>,
    slopes: Vec<f64>,
    /// `V` at each knot.
    values: Vec<f64>,
    c_minus: f64,
    c_plus: f64,
}

impl TablePotential {
    /// `derivative[i]` is `V'(knots[i])`; `derivative[0]` must be 0 and
    /// `knots[0]` must be 0. The declared ellipticity window is not checked
    /// here; use [`check_ellipticity`].
    pub fn new(knots: Vec<f64>, derivative: Vec<f64>, c_minus: f64, c_plus: f64) -> Result<Self> {
        if knots.len() < 2 || knots.len() != derivative.len() {
            return Err(Error::config("potential", "table needs matching knots and values"));
        }
        if knots[0] != 0.0 || derivative[0] != 0.0 {
            return Err(Error::config("potential", "table must start at x=0 with V'(0)=0"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("potential", "knots must be increasing"));
        }
        if !(c_minus > 0.0 && c_plus >= c_minus) {
            return Err(Error::config("potential", "need 0 < c_minus <= c_plus"));
        }
        let mut values = vec![0.0; knots.len()];
        for i in 1..knots.len() {
            let h = knots[i] - knots[i - 1];
            values[i] = values[i - 1] + 0.5 * h * (derivative[i] + derivative[i - 1]);
        }
        Ok(TablePotential {
            knots,
            slopes: derivative,
            values,
            c_minus,
            c_plus,
        })
    }

    fn eval_nonneg(&self, x: f64) -> (f64, f64, f64) {
        let k = &self.knots;
        let last = k.len() - 1;
        let seg = match k.iter().position(|&t| t > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => last - 1,
        };
        let (x0, x1) = (k[seg], k[seg + 1]);
        let (d0, d1) = (self.slopes[seg], self.slopes[seg + 1]);
        let curvature = (d1 - d0) / (x1 - x0);
        let t = x - x0;
        let dv = d0 + curvature * t;
        let v = self.values[seg] + d0 * t + 0.5 * curvature * t * t;
        (v, dv, curvature)
    }
}

impl Potential {
    pub fn quadratic(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::config("potential", "quadratic stiffness must be positive"));
        }
        Ok(Potential::Quadratic { kappa })
    }

    pub fn quad_plus_sqrt(kappa: f64) -> Result<Self> {
        if !(kappa > -1.0 && kappa.is_finite()) {
            return Err(Error::config("potential", "qsqrt parameter must exceed -1"));
        }
        Ok(Potential::QuadPlusSqrt { kappa })
    }

    /// `(V(x), V'(x), V''(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self {
            Potential::Quadratic { kappa } => (0.5 * kappa * x * x, kappa * x, *kappa),
            Potential::QuadPlusSqrt { kappa } => {
                let s = (1.0 + x * x).sqrt();
                (
                    0.5 * x * x + kappa * s,
                    x + kappa * x / s,
                    1.0 + kappa / (s * s * s),
                )
            }
            Potential::Table(t) => {
                let (v, dv, ddv) = t.eval_nonneg(x.abs());
                (v, dv.copysign(x), ddv)
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic { kappa } => kappa * x,
            Potential::QuadPlusSqrt { kappa } => x + kappa * x / (1.0 + x * x).sqrt(),
            Potential::Table(_) => self.eval(x).1,
        }
    }

    #[inline]
    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic { kappa } => *kappa,
            Potential::QuadPlusSqrt { kappa } => {
                let s2 = 1.0 + x * x;
                1.0 + kappa / (s2 * s2.sqrt())
            }
            Potential::Table(_) => self.eval(x).2,
        }
    }

    pub fn c_minus(&self) -> f64 {
        match self {
            Potential::Quadratic { kappa } => *kappa,
            Potential::QuadPlusSqrt { kappa } => 1.0f64.min(1.0 + kappa),
            Potential::Table(t) => t.c_minus,
        }
    }

    pub fn c_plus(&self) -> f64 {
        match self {
            Potential::Quadratic { kappa } => *kappa,
            Potential::QuadPlusSqrt { kappa } => 1.0f64.max(1.0 + kappa),
            Potential::Table(t) => t.c_plus,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, Potential::Quadratic { .. })
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Quadratic { kappa } => write!(f, "quadratic:{kappa}"),
            Potential::QuadPlusSqrt { kappa } => write!(f, "qsqrt:{kappa}"),
            Potential::Table(t) => write!(f, "table[{} knots]", t.knots.len()),
        }
    }
}

impl FromStr for Potential {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, "1"));
        let kappa: f64 = arg
            .parse()
            .map_err(|_| Error::config("potential", format!("bad parameter `{arg}`")))?;
        match name {
            "quadratic" => Potential::quadratic(kappa),
            "qsqrt" | "quad_plus_sqrt" => Potential::quad_plus_sqrt(kappa),
            _ => Err(Error::config("potential", format!("unknown potential `{name}`"))),
        }
    }
}

/// Worst margins of the ellipticity inequalities on a grid. A negative
/// margin is a violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    /// `min (V'(x)x - c_- x²)`.
    pub lower_product: f64,
    /// `min (c_+ x² - V'(x)x)`.
    pub upper_product: f64,
    /// `min (V''(x) - c_-)`.
    pub lower_curvature: f64,
    /// `min (c_+ - V''(x))`.
    pub upper_curvature: f64,
}

impl EllipticityReport {
    /// The product inequalities, which is all the gradient estimates need.
    pub fn products_hold(&self, tol: f64) -> bool {
        self.lower_product >= -tol && self.upper_product >= -tol
    }

    pub fn curvature_holds(&self, tol: f64) -> bool {
        self.lower_curvature >= -tol && self.upper_curvature >= -tol
    }
}

pub fn check_ellipticity(potential: &Potential, grid: &[f64]) -> Result<EllipticityReport> {
    if grid.is_empty() {
        return Err(Error::config("grid", "empty grid"));
    }
    let (cm, cp) = (potential.c_minus(), potential.c_plus());
    let mut r = EllipticityReport {
        lower_product: f64::INFINITY,
        upper_product: f64::INFINITY,
        lower_curvature: f64::INFINITY,
        upper_curvature: f64::INFINITY,
    };
    for &x in grid {
        let (_, dv, ddv) = potential.eval(x);
        r.lower_product = r.lower_product.min(dv * x - cm * x * x);
        r.upper_product = r.upper_product.min(cp * x * x - dv * x);
        r.lower_curvature = r.lower_curvature.min(ddv - cm);
        r.upper_curvature = r.upper_curvature.min(cp - ddv);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Vec<f64> {
        (-1000..=1000).map(|i| i as f64 / 100.0).collect()
    }

    #[test]
    fn closed_forms() {
        let q = Potential::quadratic(1.0).unwrap();
        assert_eq!(q.eval(2.0), (2.0, 2.0, 1.0));
        let s = Potential::quad_plus_sqrt(0.5).unwrap();
        assert_eq!(s.eval(0.0), (0.5, 0.0, 1.5));
        assert_eq!((s.c_minus(), s.c_plus()), (1.0, 1.5));
    }

    #[test]
    fn ellipticity_reports() {
        let q = Potential::quadratic(1.0).unwrap();
        let r = check_ellipticity(&q, &grid()).unwrap();
        assert_eq!(
            (r.lower_product, r.upper_product, r.lower_curvature, r.upper_curvature),
            (0.0, 0.0, 0.0, 0.0)
        );
        let s = Potential::quad_plus_sqrt(0.5).unwrap();
        let r = check_ellipticity(&s, &grid()).unwrap();
        assert!(r.products_hold(1e-12) && r.curvature_holds(1e-12));
        assert!(r.upper_curvature.abs() < 1e-12);
        assert!(check_ellipticity(&s, &[]).is_err());
    }

    #[test]
    fn non_convex_table_is_flagged() {
        // V' rises to 2 at x=1 then falls to 1.2 at x=2
        let t = TablePotential::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 2.0, 1.2, 3.0], 1.0, 2.0)
            .unwrap();
        let p = Potential::Table(t);
        let r = check_ellipticity(&p, &grid()).unwrap();
        assert!(!r.curvature_holds(1e-12));
        assert!(r.lower_curvature < -0.5);
        // V'(2)/2 = 0.6 < c_-, so the product form fails too
        assert!(!r.products_hold(1e-12));
    }

    #[test]
    fn mildly_non_convex_table_passes_products() {
        // V'(x)/x stays within [1, 2] although V'' dips to 0.5
        let t = TablePotential::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.0, 1.5, 2.0, 3.5],
            1.0,
            2.0,
        )
        .unwrap();
        let r = check_ellipticity(&Potential::Table(t), &grid()).unwrap();
        assert!(r.products_hold(1e-12));
        assert!(!r.curvature_holds(1e-12));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["quadratic:2", "qsqrt:0.5"] {
            let p: Potential = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("quartic:1".parse::<Potential>().is_err());
        assert!("quadratic:-1".parse::<Potential>().is_err());
        assert!("qsqrt:x".parse::<Potential>().is_err());
    }

    fn potentials() -> impl Strategy<Value = Potential> {
        prop_oneof![
            (0.1f64..5.0).prop_map(|k| Potential::quadratic(k).unwrap()),
            (-0.9f64..3.0).prop_map(|k| Potential::quad_plus_sqrt(k).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn even_with_odd_derivative(p in potentials(), x in -10.0f64..10.0) {
            let (v1, d1, s1) = p.eval(x);
            let (v2, d2, s2) = p.eval(-x);
            prop_assert_eq!(v1, v2);
            prop_assert_eq!(d1, -d2);
            prop_assert_eq!(s1, s2);
            prop_assert_eq!(p.eval(0.0).1, 0.0);
            prop_assert!(s1 >= p.c_minus() - 1e-12 && s1 <= p.c_plus() + 1e-12);
        }

        #[test]
        fn derivatives_match_finite_differences(p in potentials(), x in -10.0f64..10.0) {
            let h = 1e-5;
            let fd1 = (p.value(x + h) - p.value(x - h)) / (2.0 * h);
            let fd2 = (p.derivative(x + h) - p.derivative(x - h)) / (2.0 * h);
            let (_, d, s) = p.eval(x);
            prop_assert!((fd1 - d).abs() <= 1e-6 * d.abs().max(1.0));
            prop_assert!((fd2 - s).abs() <= 1e-6 * s.abs().max(1.0));
            prop_assert_eq!(p.derivative(x), d);
            prop_assert!((p.second_derivative(x) - s).abs() < 1e-14);
        }
    }
}
