//! Geometry of the box `Λ_L = {-L, ..., L}^d`, its external vertex boundary
//! and the edge set of the augmented box `Λ_L^+`.
//!
//! Every site of `Λ_L^+` gets a dense index. Interior sites come first in
//! lexicographic coordinate order, followed by the boundary sites, also in
//! lexicographic order. Fields over the box are plain `Vec<f64>` in that
//! order, so index `i < n_interior()` is always an interior site.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A lattice site as integer coordinates.
pub type Site = Vec<i32>;

/// Undirected nearest-neighbour edge, stored with the orientation
/// `head = tail + e_axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub axis: usize,
}

/// Largest number of sites of `Λ_L^+` we are willing to index.
const MAX_SITES: usize = u32::MAX as usize;

#[derive(Debug, Clone)]
pub struct Lattice {
    dim: usize,
    side: usize,
    width: usize,
    n_interior: usize,
    coords: Vec<i32>,
    edges: Vec<Edge>,
    /// `2d` entries per interior site, ordered `(-e_0, +e_0, -e_1, +e_1, ...)`.
    neighbors: Vec<usize>,
    /// For each boundary site, its unique neighbour inside `Λ_L`.
    inner: Vec<usize>,
}

impl Lattice {
    /// Builds `Λ_L ⊂ Z^d` together with `∂Λ_L` and `E(Λ_L^+)`.
    pub fn build_box(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("d", "dimension must be at least 1"));
        }
        let width = side
            .checked_mul(2)
            .and_then(|w| w.checked_add(1))
            .ok_or_else(|| Error::config("L", "side length overflows"))?;
        let n_interior = checked_pow(width, dim)
            .ok_or_else(|| Error::config("L", "site count overflows the index type"))?;
        let n_boundary = checked_pow(width, dim - 1)
            .and_then(|f| f.checked_mul(2 * dim))
            .ok_or_else(|| Error::config("L", "site count overflows the index type"))?;
        let total = n_interior
            .checked_add(n_boundary)
            .filter(|&t| t <= MAX_SITES)
            .ok_or_else(|| Error::config("L", "site count overflows the index type"))?;
        let span = side as i32;

        let mut coords = Vec::with_capacity(total * dim);
        let mut odometer = vec![-span; dim];
        for _ in 0..n_interior {
            coords.extend_from_slice(&odometer);
            advance(&mut odometer, -span, span);
        }

        // Boundary sites: exactly one coordinate at ±(L+1), the rest in [-L, L].
        let mut boundary: Vec<Site> = Vec::with_capacity(n_boundary);
        let face = n_boundary / (2 * dim);
        for axis in 0..dim {
            for sign in [-1, 1] {
                let mut rest = vec![-span; dim - 1];
                for _ in 0..face {
                    let mut site = Vec::with_capacity(dim);
                    site.extend_from_slice(&rest[..axis]);
                    site.push(sign * (span + 1));
                    site.extend_from_slice(&rest[axis..]);
                    boundary.push(site);
                    if dim > 1 {
                        advance(&mut rest, -span, span);
                    }
                }
            }
        }
        boundary.sort();
        for site in &boundary {
            coords.extend_from_slice(site);
        }

        let mut lattice = Lattice {
            dim,
            side,
            width,
            n_interior,
            coords,
            edges: Vec::new(),
            neighbors: Vec::with_capacity(n_interior * 2 * dim),
            inner: Vec::with_capacity(n_boundary),
        };

        let mut probe = vec![0i32; dim];
        for idx in 0..n_interior {
            for axis in 0..dim {
                for step in [-1, 1] {
                    probe.copy_from_slice(lattice.site(idx));
                    probe[axis] += step;
                    let nb = lattice
                        .index_of(&probe)
                        .expect("neighbour of an interior site lies in the augmented box");
                    lattice.neighbors.push(nb);
                }
            }
        }

        // Edges: from every interior site along +e_i, plus the edges whose
        // lower endpoint is a boundary site.
        let mut edges = Vec::with_capacity(n_interior * dim + n_boundary / 2);
        for idx in 0..n_interior {
            for axis in 0..dim {
                let minus = lattice.neighbors[idx * 2 * dim + 2 * axis];
                let plus = lattice.neighbors[idx * 2 * dim + 2 * axis + 1];
                if minus >= n_interior {
                    edges.push(Edge {
                        tail: minus,
                        head: idx,
                        axis,
                    });
                }
                edges.push(Edge {
                    tail: idx,
                    head: plus,
                    axis,
                });
            }
        }
        lattice.edges = edges;

        for b in n_interior..total {
            probe.copy_from_slice(lattice.site(b));
            let axis = probe
                .iter()
                .position(|c| c.unsigned_abs() as usize == side + 1)
                .expect("boundary site has one extreme coordinate");
            probe[axis] -= probe[axis].signum();
            let inner = lattice
                .interior_index(&probe)
                .expect("inner neighbour of a boundary site is interior");
            lattice.inner.push(inner);
        }

        Ok(lattice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The side parameter `L`.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of sites along one axis of `Λ_L`, i.e. `2L + 1`.
    pub fn width(&self) -> usize {
        self.width
    }

    /// `|Λ_L| = (2L+1)^d`.
    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.coords.len() / self.dim - self.n_interior
    }

    /// `|Λ_L^+|`.
    pub fn n_sites(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn site(&self, idx: usize) -> &[i32] {
        &self.coords[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        idx < self.n_interior
    }

    pub fn interior_sites(&self) -> impl Iterator<Item = &[i32]> + '_ {
        (0..self.n_interior).map(move |i| self.site(i))
    }

    pub fn boundary_sites(&self) -> impl Iterator<Item = &[i32]> + '_ {
        (self.n_interior..self.n_sites()).map(move |i| self.site(i))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// The `2d` neighbours of an interior site, as `(-e_0, +e_0, -e_1, ...)`.
    pub fn neighbors(&self, interior_idx: usize) -> &[usize] {
        let k = 2 * self.dim;
        &self.neighbors[interior_idx * k..(interior_idx + 1) * k]
    }

    /// The unique interior neighbour of a boundary site.
    pub fn inner_neighbor(&self, boundary_idx: usize) -> usize {
        self.inner[boundary_idx - self.n_interior]
    }

    /// Index of the origin.
    pub fn origin(&self) -> usize {
        self.n_interior / 2
    }

    /// Dense index of an interior site, computed arithmetically.
    pub fn interior_index(&self, site: &[i32]) -> Option<usize> {
        if site.len() != self.dim {
            return None;
        }
        let span = self.side as i32;
        let mut idx = 0usize;
        for &c in site {
            if c < -span || c > span {
                return None;
            }
            idx = idx * self.width + (c + span) as usize;
        }
        Some(idx)
    }

    /// Dense index of any site of `Λ_L^+`.
    pub fn index_of(&self, site: &[i32]) -> Option<usize> {
        if let Some(i) = self.interior_index(site) {
            return Some(i);
        }
        if site.len() != self.dim {
            return None;
        }
        let (mut lo, mut hi) = (self.n_interior, self.n_sites());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.site(mid).cmp(site) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// `|x|_∞` of the site with the given index.
    pub fn linf_norm(&self, idx: usize) -> u32 {
        self.site(idx)
            .iter()
            .map(|c| c.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// The directed edges `(x, y)` out of an interior site `x`.
    pub fn directed_star(&self, x: &[i32]) -> Result<Vec<(Site, Site)>> {
        let idx = self
            .interior_index(x)
            .ok_or_else(|| Error::NotInterior(x.to_vec()))?;
        Ok(self
            .neighbors(idx)
            .iter()
            .map(|&nb| (x.to_vec(), self.site(nb).to_vec()))
            .collect())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_sites() {
            return Err(Error::Format(format!(
                "field has {len} values, lattice (d={}, L={}) has {} sites",
                self.dim,
                self.side,
                self.n_sites()
            )));
        }
        Ok(())
    }
}

/// `ℓ^∞` distance between two sites.
pub fn linf_distance(x: &[i32], y: &[i32]) -> u32 {
    assert_eq!(x.len(), y.len(), "sites of different dimension");
    x.iter()
        .zip(y)
        .map(|(a, b)| a.abs_diff(*b))
        .max()
        .unwrap_or(0)
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

fn advance(odometer: &mut [i32], lo: i32, hi: i32) {
    for c in odometer.iter_mut().rev() {
        if *c < hi {
            *c += 1;
            return;
        }
        *c = lo;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn small_boxes() {
        let lat = Lattice::build_box(1, 1).unwrap();
        let interior: Vec<_> = lat.interior_sites().map(|s| s[0]).collect();
        let boundary: Vec<_> = lat.boundary_sites().map(|s| s[0]).collect();
        assert_eq!(interior, vec![-1, 0, 1]);
        assert_eq!(boundary, vec![-2, 2]);
        assert_eq!(lat.edges().len(), 4);

        let lat = Lattice::build_box(2, 0).unwrap();
        assert_eq!(lat.n_interior(), 1);
        assert_eq!(lat.n_boundary(), 4);
        assert_eq!(lat.edges().len(), 4);

        let lat = Lattice::build_box(1, 128).unwrap();
        assert_eq!(lat.n_interior(), 257);
        assert_eq!(lat.edges().len(), 258);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Lattice::build_box(0, 3).is_err());
        assert!(Lattice::build_box(40, 1000).is_err());
    }

    #[test]
    fn linf() {
        assert_eq!(linf_distance(&[0, 0], &[3, -2]), 3);
        assert_eq!(linf_distance(&[4, -1], &[4, -1]), 0);
        assert_eq!(linf_distance(&[1, 1, 1], &[0, 0, 0]), 1);
    }

    #[test]
    fn stars() {
        let lat = Lattice::build_box(2, 2).unwrap();
        assert_eq!(lat.directed_star(&[0, 0]).unwrap().len(), 4);
        let lat = Lattice::build_box(1, 1).unwrap();
        let star = lat.directed_star(&[1]).unwrap();
        assert_eq!(star, vec![(vec![1], vec![0]), (vec![1], vec![2])]);
        assert!(lat.directed_star(&[2]).is_err());
        let lat = Lattice::build_box(3, 2).unwrap();
        for x in lat.interior_sites() {
            assert_eq!(lat.directed_star(x).unwrap().len(), 6);
        }
    }

    fn adjacent(a: &[i32], b: &[i32]) -> bool {
        a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum::<u32>() == 1
    }

    /// Brute force over the enclosing cube.
    #[test]
    fn invariants_by_brute_force() {
        for d in 1..=3 {
            for l in 0..=4usize {
                if d == 3 && l > 3 {
                    continue;
                }
                let lat = Lattice::build_box(d, l).unwrap();
                let span = l as i32;
                let in_box = |s: &[i32]| s.iter().all(|c| c.abs() <= span);

                let mut cube = vec![vec![]];
                for _ in 0..d {
                    cube = cube
                        .into_iter()
                        .flat_map(|p: Vec<i32>| {
                            (-span - 1..=span + 1).map(move |c| {
                                let mut q = p.clone();
                                q.push(c);
                                q
                            })
                        })
                        .collect();
                }
                let interior: Vec<_> = cube.iter().filter(|s| in_box(s)).cloned().collect();
                let boundary: Vec<_> = cube
                    .iter()
                    .filter(|s| !in_box(s) && interior.iter().any(|y| adjacent(s, y)))
                    .cloned()
                    .collect();
                assert_eq!(lat.n_interior(), (2 * l + 1).pow(d as u32));
                assert_eq!(
                    lat.interior_sites().map(<[i32]>::to_vec).collect::<Vec<_>>(),
                    interior
                );
                assert_eq!(
                    lat.boundary_sites().map(<[i32]>::to_vec).collect::<Vec<_>>(),
                    boundary
                );

                // site_index is a bijection on Λ^+
                for i in 0..lat.n_sites() {
                    assert_eq!(lat.index_of(lat.site(i)), Some(i));
                }

                // Edges: exactly the adjacent pairs with at least one interior end.
                let plus: Vec<_> = interior.iter().chain(&boundary).cloned().collect();
                let mut expected = HashSet::new();
                for a in &plus {
                    for b in &plus {
                        if a < b && adjacent(a, b) && (in_box(a) || in_box(b)) {
                            expected.insert((a.clone(), b.clone()));
                        }
                    }
                }
                let got: HashSet<_> = lat
                    .edges()
                    .iter()
                    .map(|e| {
                        let (a, b) = (lat.site(e.tail).to_vec(), lat.site(e.head).to_vec());
                        assert!(adjacent(&a, &b));
                        assert!(lat.is_interior(e.tail) || lat.is_interior(e.head));
                        if a < b {
                            (a, b)
                        } else {
                            (b, a)
                        }
                    })
                    .collect();
                assert_eq!(got.len(), lat.edges().len());
                assert_eq!(got, expected);

                // Star counting: each edge once or twice, twice iff both ends interior.
                let mut seen = std::collections::HashMap::new();
                for x in lat.interior_sites() {
                    for (a, b) in lat.directed_star(x).unwrap() {
                        let key = if a < b { (a, b) } else { (b, a) };
                        *seen.entry(key).or_insert(0) += 1;
                    }
                }
                for (key, count) in seen {
                    let both = in_box(&key.0) && in_box(&key.1);
                    assert_eq!(count, if both { 2 } else { 1 });
                }
            }
        }
    }

    #[test]
    fn enumeration_is_deterministic() {
        let a = Lattice::build_box(3, 2).unwrap();
        let b = Lattice::build_box(3, 2).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.coords, b.coords);
    }

    #[test]
    fn inner_neighbors() {
        let lat = Lattice::build_box(2, 2).unwrap();
        for b in lat.n_interior()..lat.n_sites() {
            let inner = lat.inner_neighbor(b);
            assert!(lat.is_interior(inner));
            assert!(adjacent(lat.site(b), lat.site(inner)));
        }
        assert_eq!(lat.site(lat.origin()), &[0, 0]);
    }
}
