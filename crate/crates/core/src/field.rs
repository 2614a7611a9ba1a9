//! Real- and integer-valued functions on `Λ_L^+`, stored in the lattice's
//! dense site order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// A real function on `Λ_L^+`. External fields, surfaces and ground states
/// all use this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    dim: usize,
    side: usize,
    values: Vec<f64>,
}

/// An integer-valued surface on `Λ_L^+`, zero on the boundary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntField {
    dim: usize,
    side: usize,
    values: Vec<i64>,
}

macro_rules! shared_impl {
    ($ty:ident, $elem:ty) => {
        impl $ty {
            pub fn zeros(lattice: &Lattice) -> Self {
                $ty {
                    dim: lattice.dim(),
                    side: lattice.side(),
                    values: vec![<$elem>::default(); lattice.n_sites()],
                }
            }

            pub fn from_values(lattice: &Lattice, values: Vec<$elem>) -> Result<Self> {
                lattice.check_len(values.len())?;
                Ok($ty {
                    dim: lattice.dim(),
                    side: lattice.side(),
                    values,
                })
            }

            /// Builds a field from interior values; the boundary is set to zero.
            pub fn from_interior(lattice: &Lattice, interior: &[$elem]) -> Result<Self> {
                if interior.len() != lattice.n_interior() {
                    return Err(Error::Format(format!(
                        "expected {} interior values, got {}",
                        lattice.n_interior(),
                        interior.len()
                    )));
                }
                let mut values = vec![<$elem>::default(); lattice.n_sites()];
                values[..interior.len()].copy_from_slice(interior);
                Ok($ty {
                    dim: lattice.dim(),
                    side: lattice.side(),
                    values,
                })
            }

            pub fn dim(&self) -> usize {
                self.dim
            }

            pub fn side(&self) -> usize {
                self.side
            }

            pub fn values(&self) -> &[$elem] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [$elem] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<$elem> {
                self.values
            }

            pub fn interior<'a>(&'a self, lattice: &Lattice) -> &'a [$elem] {
                &self.values[..lattice.n_interior()]
            }

            pub fn get(&self, idx: usize) -> $elem {
                self.values[idx]
            }

            /// Value at a site given by coordinates; zero outside `Λ_L^+`.
            pub fn at(&self, lattice: &Lattice, site: &[i32]) -> $elem {
                lattice
                    .index_of(site)
                    .map(|i| self.values[i])
                    .unwrap_or_default()
            }

            /// Fails unless the field was built on a box with the same `(d, L)`.
            pub fn check(&self, lattice: &Lattice) -> Result<()> {
                if self.dim != lattice.dim()
                    || self.side != lattice.side()
                    || self.values.len() != lattice.n_sites()
                {
                    return Err(Error::LatticeMismatch {
                        expected_d: lattice.dim(),
                        expected_l: lattice.side(),
                        got_d: self.dim,
                        got_l: self.side,
                    });
                }
                Ok(())
            }

            pub fn boundary_is_zero(&self, lattice: &Lattice) -> bool {
                self.values[lattice.n_interior()..]
                    .iter()
                    .all(|v| *v == <$elem>::default())
            }
        }
    };
}

shared_impl!(Field, f64);
shared_impl!(IntField, i64);

impl Field {
    /// `Σ_{e ∈ E(Λ^+)} (∇f(e))^2`.
    pub fn gradient_sq_sum(&self, lattice: &Lattice) -> f64 {
        lattice
            .edges()
            .iter()
            .map(|e| {
                let g = self.values[e.head] - self.values[e.tail];
                g * g
            })
            .sum()
    }

    /// `∇f(e)` for every edge in the lattice's edge order.
    pub fn gradient(&self, lattice: &Lattice) -> Vec<f64> {
        lattice
            .edges()
            .iter()
            .map(|e| self.values[e.head] - self.values[e.tail])
            .collect()
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl IntField {
    pub fn gradient_sq_sum(&self, lattice: &Lattice) -> i64 {
        lattice
            .edges()
            .iter()
            .map(|e| {
                let g = self.values[e.head] - self.values[e.tail];
                g * g
            })
            .sum()
    }

    pub fn to_real(&self) -> Field {
        Field {
            dim: self.dim,
            side: self.side,
            values: self.values.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn max_abs(&self) -> i64 {
        self.values.iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}
