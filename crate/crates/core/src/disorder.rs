//! Quenched external fields and the seeding scheme used by every sampler.
//!
//! Random numbers never come from a shared generator. Each consumer derives
//! a ChaCha stream from `(base_seed, purpose, realization, site)`, so results
//! do not depend on scheduling or on how many threads are used.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::elliptic::{apply_laplacian, spectral::DirichletSpectrum};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::lattice::Lattice;

/// What a random stream is used for. Streams with different purposes are
/// independent even when all other coordinates agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Disorder,
    Resample,
    Langevin,
    Metropolis,
    FreeField,
    Environment,
    Custom(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Disorder => 1,
            Purpose::Resample => 2,
            Purpose::Langevin => 3,
            Purpose::Metropolis => 4,
            Purpose::FreeField => 5,
            Purpose::Environment => 6,
            Purpose::Custom(c) => 0x1_0000_0000 | c as u64,
        }
    }
}

/// Coordinates of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub realization: u64,
    pub site: u32,
    pub purpose: Purpose,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(base_seed: u64) -> Self {
        SeedSpec {
            base_seed,
            realization: 0,
            site: 0,
            purpose: Purpose::Disorder,
        }
    }

    pub fn with_realization(self, realization: u64) -> Self {
        SeedSpec {
            realization,
            ..self
        }
    }

    pub fn with_site(self, site: u32) -> Self {
        SeedSpec { site, ..self }
    }

    pub fn with_purpose(self, purpose: Purpose) -> Self {
        SeedSpec { purpose, ..self }
    }

    /// The generator for this stream. The key depends on the base seed, the
    /// purpose and the high half of the realization index; the 64-bit ChaCha
    /// stream id holds the low half of the realization and the site.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.base_seed;
        let mut key = [0u8; 32];
        let mix = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ self.purpose.tag(),
            splitmix64(&mut state) ^ (self.realization >> 32),
            splitmix64(&mut state),
        ];
        let mut state2 = mix[0] ^ mix[1].rotate_left(17) ^ mix[2].rotate_left(41);
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word = splitmix64(&mut state2) ^ mix[i];
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(((self.realization & 0xFFFF_FFFF) << 32) | self.site as u64);
        rng
    }
}

/// Single-site law of the disorder. All laws are centred with unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    StandardGaussian,
    Rademacher,
    /// Uniform on `[-w, w]`, rescaled to unit variance.
    UniformCentered(f64),
}

impl Distribution {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::StandardGaussian => rng.sample(StandardNormal),
            Distribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Distribution::UniformCentered(w) => {
                let u: f64 = rng.random_range(-w..w);
                u * 3f64.sqrt() / w
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Distribution::UniformCentered(w) if !(w.is_finite() && w > 0.0) => {
                Err(Error::config("distribution", "uniform width must be positive"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::StandardGaussian => write!(f, "gaussian"),
            Distribution::Rademacher => write!(f, "rademacher"),
            Distribution::UniformCentered(w) => write!(f, "uniform:{w}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let d = match s {
            "gaussian" | "standard_gaussian" => Distribution::StandardGaussian,
            "rademacher" => Distribution::Rademacher,
            _ => {
                let w = s
                    .strip_prefix("uniform:")
                    .or_else(|| s.strip_prefix("uniform_centered:"))
                    .ok_or_else(|| {
                        Error::config("distribution", format!("unknown distribution `{s}`"))
                    })?;
                let w: f64 = w
                    .parse()
                    .map_err(|_| Error::config("distribution", format!("bad width `{w}`")))?;
                Distribution::UniformCentered(w)
            }
        };
        d.validate()?;
        Ok(d)
    }
}

/// Independent values at every interior site, zero on the boundary. The
/// value at site `i` comes from the stream `seed.with_site(i)`.
pub fn sample_iid_field(lattice: &Lattice, distribution: Distribution, seed: SeedSpec) -> Field {
    let interior: Vec<f64> = (0..lattice.n_interior())
        .map(|i| distribution.draw(&mut seed.with_site(i as u32).rng()))
        .collect();
    Field::from_interior(lattice, &interior).expect("interior length matches")
}

/// Replaces the value at interior site `x` by a fresh draw from the stream
/// `seed.with_site(index of x)`.
pub fn resample_at(
    lattice: &Lattice,
    field: &Field,
    x: &[i32],
    distribution: Distribution,
    seed: SeedSpec,
) -> Result<Field> {
    field.check(lattice)?;
    let idx = lattice
        .interior_index(x)
        .ok_or_else(|| Error::NotInterior(x.to_vec()))?;
    let mut out = field.clone();
    out.values_mut()[idx] = distribution.draw(&mut seed.with_site(idx as u32).rng());
    Ok(out)
}

/// `η = -Δζ` for an exactly sampled Dirichlet free field `ζ` on the box.
/// The resulting field has covariance `2d·1{x=y} - 1{x~y}` in the interior.
pub fn sample_one_dependent_field(lattice: &Lattice, seed: SeedSpec) -> Field {
    let spectrum = DirichletSpectrum::new(lattice);
    one_dependent_with(lattice, &spectrum, seed)
}

/// Same as [`sample_one_dependent_field`] with a precomputed spectrum.
pub fn one_dependent_with(lattice: &Lattice, spectrum: &DirichletSpectrum, seed: SeedSpec) -> Field {
    let mut rng = seed.with_purpose(Purpose::FreeField).rng();
    let zeta = spectrum.sample_free_field(&mut rng);
    let zeta = Field::from_interior(lattice, &zeta).expect("interior length matches");
    apply_laplacian(lattice, &zeta)
        .expect("same lattice")
        .scaled(-1.0)
}
