use std::f64::consts::PI;

use crate::model::LatticeBox;

/// Momentum grid dual to the torus: `p_j = -π + (π / L) s_j`, `s_j = 1..2L`.
///
/// Momenta are listed with axis 0 varying fastest, matching the site order.
#[derive(Clone, Debug, PartialEq)]
pub struct BrillouinZone {
    dim: usize,
    half_side: usize,
    momenta: Vec<Vec<f64>>,
}

impl BrillouinZone {
    pub fn new(lattice: &LatticeBox) -> Self {
        let dim = lattice.dim();
        let l = lattice.half_side();
        let side = 2 * l;
        let momenta = (0..lattice.n_sites())
            .map(|k| {
                let mut rest = k;
                (0..dim)
                    .map(|_| {
                        let s = rest % side + 1;
                        rest /= side;
                        -PI + PI * s as f64 / l as f64
                    })
                    .collect()
            })
            .collect();
        Self {
            dim,
            half_side: l,
            momenta,
        }
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn momentum(&self, k: usize) -> &[f64] {
        &self.momenta[k]
    }

    pub fn momenta(&self) -> &[Vec<f64>] {
        &self.momenta
    }

    /// Index of `p = 0`.
    pub fn zero_index(&self) -> usize {
        let side = 2 * self.half_side;
        // s_j = L on every axis.
        (0..self.dim).fold(0, |acc, _| acc * side + (self.half_side - 1))
    }

    /// Position of momentum `k` in the output of a forward FFT over the box
    /// (frequency `s` on an axis of length `2L` is `π s / L`).
    pub fn fft_index(&self, k: usize) -> usize {
        let side = 2 * self.half_side;
        let mut rest = k;
        let mut index = 0;
        let mut scale = 1;
        for _ in 0..self.dim {
            let s = rest % side + 1;
            rest /= side;
            let f = (s + side - self.half_side) % side;
            index += f * scale;
            scale *= side;
        }
        index
    }

    /// Index of `-p` (reduced modulo 2π).
    pub fn negate(&self, k: usize) -> usize {
        let side = 2 * self.half_side;
        let mut rest = k;
        let mut index = 0;
        let mut scale = 1;
        for _ in 0..self.dim {
            let s = rest % side + 1;
            rest /= side;
            // -p_j = -π + (π / L)(2L - s_j) maps to s' = 2L - s (0 means 2L).
            let neg = (side - s + side - 1) % side;
            index += neg * scale;
            scale *= side;
        }
        index
    }
}
