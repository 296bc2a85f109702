//! Exact single-site reference: the isolated oscillator `p^2/2m + a q^2/2 +
//! V0(q) - h q` diagonalized in a truncated harmonic-oscillator basis.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::PotentialSpec;

/// Default basis size.
pub const DEFAULT_BASIS: usize = 64;
/// Relative change tolerated between basis sizes `N` and `2N`.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Largest basis the convergence loop will try.
pub const MAX_BASIS: usize = 1024;

const DEGENERATE_GAP: f64 = 1e-12;

/// Spectrum and position matrix of the single-site Hamiltonian.
#[derive(Clone, Debug)]
pub struct SpectralOracle {
    energies: Vec<f64>,
    /// Row-major `N x N` matrix of `<i|q|j>` in the eigenbasis.
    q_matrix: Vec<f64>,
    /// Boltzmann weights `exp(-(E_k - E_0))`.
    weights: Vec<f64>,
    weight_sum: f64,
}

/// The thermal quantities compared across basis sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleSummary {
    pub basis: usize,
    pub log_z: f64,
    pub z: f64,
    pub mean_q: f64,
    pub mean_q2: f64,
    pub duhamel: f64,
}

impl SpectralOracle {
    /// Builds the oracle in an `n`-state basis of the harmonic oscillator with
    /// mass `mass` and frequency `sqrt(rigidity / mass)`.
    pub fn build(mass: f64, rigidity: f64, potential: &PotentialSpec, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(invalid("N", "basis size must be at least 8"));
        }
        if !(mass > 0.0 && rigidity > 0.0) {
            return Err(invalid("m", "mass and rigidity must be positive"));
        }
        let omega = (rigidity / mass).sqrt();
        let degree = potential.degree();
        let padded = n + degree.max(2);
        let scale = (2.0 * mass * omega).sqrt().recip();

        let mut x = DMatrix::<f64>::zeros(padded, padded);
        for i in 0..padded - 1 {
            let v = scale * ((i + 1) as f64).sqrt();
            x[(i, i + 1)] = v;
            x[(i + 1, i)] = v;
        }

        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = omega * (i as f64 + 0.5);
        }
        // Powers of the position operator are formed in the padded basis so
        // that the retained N x N block is exact.
        let mut power = x.clone();
        for j in 2..=degree {
            power = &power * &x;
            let c = potential.coeffs()[j - 2];
            if c != 0.0 {
                h += power.view((0, 0), (n, n)) * c;
            }
        }
        for i in 0..n {
            if i + 1 < n {
                let v = potential.h() * x[(i, i + 1)];
                h[(i, i + 1)] -= v;
                h[(i + 1, i)] -= v;
            }
        }

        let eig = SymmetricEigen::try_new(h, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Diagonalization(format!("no convergence at N = {n}")))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let energies: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::Diagonalization("non-finite eigenvalue".into()));
        }
        let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let xn = x.view((0, 0), (n, n)).into_owned();
        let q = vecs.transpose() * xn * &vecs;

        let mut q_matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                q_matrix[i * n + j] = 0.5 * (q[(i, j)] + q[(j, i)]);
            }
        }
        let e0 = energies[0];
        let weights: Vec<f64> = energies.iter().map(|e| (-(e - e0)).exp()).collect();
        let weight_sum = weights.iter().sum();
        Ok(Self {
            energies,
            q_matrix,
            weights,
            weight_sum,
        })
    }

    /// Doubles the basis from `start` until every summary quantity moves by
    /// less than `tol` relative (absolute below magnitude one). Returns the
    /// oracle at the smaller basis of the converged pair.
    pub fn build_converged(
        mass: f64,
        rigidity: f64,
        potential: &PotentialSpec,
        start: usize,
        tol: f64,
    ) -> Result<Self> {
        let mut n = start.max(8);
        let mut current = Self::build(mass, rigidity, potential, n)?;
        let mut last_change = f64::INFINITY;
        while 2 * n <= MAX_BASIS {
            let next = Self::build(mass, rigidity, potential, 2 * n)?;
            last_change = current.summary().max_change(&next.summary());
            if last_change < tol {
                return Ok(current);
            }
            current = next;
            n *= 2;
        }
        Err(Error::NotConverged {
            max_basis: n,
            last_change,
        })
    }

    pub fn basis_size(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `<i|q|j>` in the eigenbasis.
    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q_matrix[i * self.energies.len() + j]
    }

    pub fn log_partition_function(&self) -> f64 {
        self.weight_sum.ln() - self.energies[0]
    }

    /// `Z = sum_k exp(-E_k)`.
    pub fn partition_function(&self) -> f64 {
        self.log_partition_function().exp()
    }

    /// `(<q>, <q^2>)` in the thermal state.
    pub fn moments(&self) -> (f64, f64) {
        let n = self.energies.len();
        let mut mean = 0.0;
        let mut second = 0.0;
        for k in 0..n {
            let w = self.weights[k];
            mean += w * self.q(k, k);
            let row = &self.q_matrix[k * n..(k + 1) * n];
            second += w * row.iter().map(|v| v * v).sum::<f64>();
        }
        (mean / self.weight_sum, second / self.weight_sum)
    }

    /// Single-site imaginary-time correlation `Gamma(0, tau)` for `tau` in `[0, 1]`.
    pub fn gamma(&self, tau: f64) -> f64 {
        let n = self.energies.len();
        let e0 = self.energies[0];
        let mut acc = 0.0;
        for k in 0..n {
            let ek = self.energies[k] - e0;
            for j in 0..n {
                let ej = self.energies[j] - e0;
                let q = self.q(k, j);
                acc += (-(1.0 - tau) * ek - tau * ej).exp() * q * q;
            }
        }
        acc / self.weight_sum
    }

    /// Duhamel function `D = int_0^1 Gamma(0, tau) dtau` in closed form.
    pub fn duhamel(&self) -> f64 {
        let n = self.energies.len();
        let mut acc = 0.0;
        for k in 0..n {
            for j in 0..n {
                let q = self.q(k, j);
                let gap = (self.energies[j] - self.energies[k]).abs();
                // (e^{-E_k} - e^{-E_j}) / (E_j - E_k) with the larger weight
                // factored out, so neither cancellation nor overflow occurs.
                let w = self.weights[k].max(self.weights[j]);
                let factor = if gap < DEGENERATE_GAP {
                    w
                } else {
                    w * (-(-gap).exp_m1()) / gap
                };
                acc += q * q * factor;
            }
        }
        acc / self.weight_sum
    }

    pub fn summary(&self) -> OracleSummary {
        let (mean_q, mean_q2) = self.moments();
        OracleSummary {
            basis: self.basis_size(),
            log_z: self.log_partition_function(),
            z: self.partition_function(),
            mean_q,
            mean_q2,
            duhamel: self.duhamel(),
        }
    }
}

impl OracleSummary {
    /// Largest change against `other`, relative for magnitudes above one.
    pub fn max_change(&self, other: &OracleSummary) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        [
            rel(self.z, other.z),
            rel(self.mean_q, other.mean_q),
            rel(self.mean_q2, other.mean_q2),
            rel(self.duhamel, other.duhamel),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}
