//! Model definition: the on-site polynomial potential, the periodic box and the
//! parameter bundle shared by the oracle, the sampler and the observables.
//!
//! Units: inverse temperature and Planck's constant are both fixed to one.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Anharmonic part `V0(x) = sum_{j=2..K} c_j x^j` plus an external field `h`.
///
/// The full on-site potential seen by a particle is `V(x) = V0(x) - h x`.
/// An all-zero coefficient list is accepted and describes the purely harmonic
/// crystal; any other list must end in a positive coefficient of even degree
/// `K >= 4`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialSpec {
    coeffs: Vec<f64>,
    h: f64,
}

impl PotentialSpec {
    /// `coeffs[i]` is the coefficient of `x^(i + 2)`. Trailing zeros are dropped.
    pub fn new(coeffs: Vec<f64>, h: f64) -> Result<Self> {
        if !h.is_finite() {
            return Err(Error::InvalidPotential("field h must be finite".into()));
        }
        if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidPotential(format!("non-finite coefficient {c}")));
        }
        let mut coeffs = coeffs;
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if !coeffs.is_empty() {
            let degree = coeffs.len() + 1;
            if degree < 4 {
                return Err(Error::InvalidPotential(format!(
                    "degree {degree} is below the minimum 4"
                )));
            }
            if degree % 2 != 0 {
                return Err(Error::InvalidPotential(format!("degree {degree} is odd")));
            }
            if coeffs[coeffs.len() - 1] <= 0.0 {
                return Err(Error::InvalidPotential(
                    "leading coefficient must be positive".into(),
                ));
            }
        }
        Ok(Self { coeffs, h })
    }

    /// `V0 = 0` with field `h`.
    pub fn harmonic(h: f64) -> Self {
        Self {
            coeffs: Vec::new(),
            h,
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn with_field(&self, h: f64) -> Self {
        Self {
            coeffs: self.coeffs.clone(),
            h,
        }
    }

    pub fn is_harmonic(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Polynomial degree K, or 0 for the harmonic case.
    pub fn degree(&self) -> usize {
        if self.coeffs.is_empty() {
            0
        } else {
            self.coeffs.len() + 1
        }
    }

    /// True when `V0` has no odd-degree terms.
    pub fn is_even(&self) -> bool {
        self.coeffs
            .iter()
            .enumerate()
            .all(|(i, &c)| (i + 2) % 2 == 0 || c == 0.0)
    }

    pub fn eval_v0(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc * x * x
    }

    pub fn eval_v(&self, x: f64) -> f64 {
        self.eval_v0(x) - self.h * x
    }

    /// Witness `(A_V, B_V)` of the growth bound `A_V x^K + B_V <= V0(x)` with
    /// `A_V = c_K / 2`.
    pub fn lower_bound_witness(&self) -> Result<(f64, f64)> {
        if self.coeffs.is_empty() {
            return Err(Error::InvalidPotential(
                "harmonic V0 = 0 has no positive growth witness".into(),
            ));
        }
        let k = self.degree() as i32;
        let lead = *self.coeffs.last().unwrap();
        let a_v = 0.5 * lead;
        let lower: f64 = self.coeffs[..self.coeffs.len() - 1]
            .iter()
            .map(|c| c.abs())
            .sum();
        // For |x| >= max(1, lower / a_v) the remainder is nonnegative:
        // V0 - a_v x^K >= |x|^(K-1) (a_v |x| - lower) >= 0 >= B_V.
        let total: f64 = self.coeffs.iter().map(|c| c.abs()).sum();
        let radius = (10.0 * (1.0 + total)).max(lower / a_v + 1.0);
        let g = |x: f64| self.eval_v0(x) - a_v * x.powi(k);

        const POINTS: usize = 100_000;
        let dx = 2.0 * radius / (POINTS - 1) as f64;
        let values: Vec<f64> = (0..POINTS).map(|i| g(-radius + i as f64 * dx)).collect();
        let mut best = values.iter().cloned().fold(f64::INFINITY, f64::min);
        for i in 1..POINTS - 1 {
            if values[i] <= values[i - 1] && values[i] <= values[i + 1] {
                let x = -radius + i as f64 * dx;
                best = best.min(golden_min(&g, x - dx, x + dx));
            }
        }
        Ok((a_v, best.min(0.0)))
    }
}

fn golden_min(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    f1.min(f2).min(f(lo)).min(f(hi))
}

/// The periodic box `(-L, L]^d` viewed as a torus with `(2L)^d` sites.
///
/// Sites are addressed by a linear index. Internally a site stores the
/// coordinates `u_j = l_j + L - 1 in 0..2L`, with axis 0 varying fastest.
/// Offsets between sites use the same encoding, so an offset class is itself
/// a site index (the offset of a site from the origin-class site 0).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatticeBox {
    dim: usize,
    half_side: usize,
    n_sites: usize,
    neighbors: Vec<usize>,
}

impl LatticeBox {
    pub fn new(dim: usize, half_side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("d", "lattice dimension must be at least 1"));
        }
        if half_side == 0 {
            return Err(invalid("L", "box half-side must be at least 1"));
        }
        let side = 2 * half_side;
        let n_sites = side
            .checked_pow(dim as u32)
            .filter(|&n| n <= 1 << 24)
            .ok_or_else(|| invalid("L", "box too large"))?;
        let mut lattice = Self {
            dim,
            half_side,
            n_sites,
            neighbors: Vec::with_capacity(n_sites * 2 * dim),
        };
        for site in 0..n_sites {
            for axis in 0..dim {
                for step in [side - 1, 1] {
                    let mut u = lattice.raw_coords(site);
                    u[axis] = (u[axis] + step) % side;
                    let n = lattice.raw_index(&u);
                    lattice.neighbors.push(n);
                }
            }
        }
        Ok(lattice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_side(&self) -> usize {
        self.half_side
    }

    pub fn side(&self) -> usize {
        2 * self.half_side
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// `L = 1` boxes have doubled bonds along every axis.
    pub fn has_double_bonds(&self) -> bool {
        self.half_side == 1
    }

    fn raw_coords(&self, site: usize) -> Vec<usize> {
        let side = self.side();
        let mut rest = site;
        (0..self.dim)
            .map(|_| {
                let u = rest % side;
                rest /= side;
                u
            })
            .collect()
    }

    fn raw_index(&self, u: &[usize]) -> usize {
        u.iter().rev().fold(0, |acc, &x| acc * self.side() + x)
    }

    /// Coordinates `l_j in {-L+1, ..., L}`.
    pub fn coords(&self, site: usize) -> Vec<i64> {
        let shift = self.half_side as i64 - 1;
        self.raw_coords(site)
            .into_iter()
            .map(|u| u as i64 - shift)
            .collect()
    }

    /// Inverse of [`coords`](Self::coords); coordinates are reduced modulo `2L`.
    pub fn index(&self, coords: &[i64]) -> usize {
        assert_eq!(coords.len(), self.dim, "coordinate length must equal d");
        let side = self.side() as i64;
        let shift = self.half_side as i64 - 1;
        let u: Vec<usize> = coords
            .iter()
            .map(|&l| (l + shift).rem_euclid(side) as usize)
            .collect();
        self.raw_index(&u)
    }

    /// The `2d` nearest neighbors, axis-major, minus before plus.
    pub fn neighbors(&self, site: usize) -> &[usize] {
        let k = 2 * self.dim;
        &self.neighbors[site * k..(site + 1) * k]
    }

    /// Flat neighbor table, `2d` entries per site.
    pub fn neighbor_table(&self) -> &[usize] {
        &self.neighbors
    }

    /// Periodic l1 distance on the torus.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let side = self.side();
        self.raw_coords(a)
            .into_iter()
            .zip(self.raw_coords(b))
            .map(|(x, y)| {
                let diff = x.abs_diff(y);
                diff.min(side - diff)
            })
            .sum()
    }

    /// Offset class of `b - a`, encoded as a site index.
    pub fn offset(&self, a: usize, b: usize) -> usize {
        let side = self.side();
        let u: Vec<usize> = self
            .raw_coords(a)
            .into_iter()
            .zip(self.raw_coords(b))
            .map(|(x, y)| (y + side - x) % side)
            .collect();
        self.raw_index(&u)
    }

    /// Signed offset vector of an offset class, each component reduced into
    /// `(-L, L]`.
    pub fn offset_vector(&self, offset: usize) -> Vec<i64> {
        let side = self.side() as i64;
        let half = self.half_side as i64;
        self.raw_coords(offset)
            .into_iter()
            .map(|u| {
                let u = u as i64;
                if u > half {
                    u - side
                } else {
                    u
                }
            })
            .collect()
    }

    /// Offset class of `-o`.
    pub fn negate_offset(&self, offset: usize) -> usize {
        let side = self.side();
        let u: Vec<usize> = self
            .raw_coords(offset)
            .into_iter()
            .map(|x| (side - x) % side)
            .collect();
        self.raw_index(&u)
    }
}

/// Everything that defines the periodic Gibbs state being simulated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub mass: f64,
    pub rigidity: f64,
    pub coupling: f64,
    pub potential: PotentialSpec,
    pub lattice: LatticeBox,
    pub slices: usize,
}

impl ModelParams {
    pub fn new(
        mass: f64,
        rigidity: f64,
        coupling: f64,
        potential: PotentialSpec,
        lattice: LatticeBox,
        slices: usize,
    ) -> Result<Self> {
        let params = Self {
            mass,
            rigidity,
            coupling,
            potential,
            lattice,
            slices,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid("m", "mass must be positive and finite"));
        }
        if !(self.rigidity > 0.0 && self.rigidity.is_finite()) {
            return Err(invalid("a", "rigidity must be positive and finite"));
        }
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(invalid("J", "coupling must be nonnegative and finite"));
        }
        if self.slices < 2 {
            return Err(invalid("P", "need at least 2 imaginary-time slices"));
        }
        if self.potential.is_harmonic()
            && self.rigidity <= 2.0 * self.coupling * self.lattice.dim() as f64
        {
            return Err(invalid(
                "J",
                "harmonic crystal is unstable unless a > 2 d J",
            ));
        }
        Ok(())
    }

    /// On-site term `(a/2) x^2 + V0(x) - h x`.
    #[inline]
    pub fn on_site(&self, x: f64) -> f64 {
        0.5 * self.rigidity * x * x + self.potential.eval_v(x)
    }

    pub fn with_field(&self, h: f64) -> Self {
        Self {
            potential: self.potential.with_field(h),
            ..self.clone()
        }
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self {
            coupling,
            ..self.clone()
        }
    }

    pub fn with_slices(&self, slices: usize) -> Self {
        Self {
            slices,
            ..self.clone()
        }
    }

    /// Harmonic frequency `sqrt(a / m)`.
    pub fn omega(&self) -> f64 {
        (self.rigidity / self.mass).sqrt()
    }
}
