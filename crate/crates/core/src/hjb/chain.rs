//! Markov-chain approximation of the controlled generator by upwind finite
//! differences on the box grid.

use crate::elimination::{ControlPoint, DriftForm};

use super::banded::BandedMatrix;
use super::grid::Grid;

/// Jump rates of a policy-driven chain: `up[c * dim + d]` is the rate from cell
/// `c` to its `+h` neighbour in dimension `d`, `down` likewise for `-h`.
#[derive(Debug, Clone)]
pub struct Chain {
    pub grid: Grid,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

/// Rates from a single cell under drift `b`: diffusion `sigma_d^2 / (2 h^2)` to
/// both sides plus `b_d^+ / h` up and `b_d^- / h` down. Jumps leaving the box
/// are dropped, which reflects the chain at the boundary.
pub fn cell_rates(grid: &Grid, c: usize, b: &[f64], sigma: &[f64], up: &mut [f64], down: &mut [f64]) {
    let h = grid.h();
    for d in 0..grid.dim() {
        let diff = 0.5 * sigma[d] * sigma[d] / (h * h);
        up[d] = if grid.neighbor(c, d, true).is_some() { diff + b[d].max(0.0) / h } else { 0.0 };
        down[d] = if grid.neighbor(c, d, false).is_some() { diff + (-b[d]).max(0.0) / h } else { 0.0 };
    }
}

impl Chain {
    /// Builds the chain for `policy` (one control per cell); boundary cells
    /// use `fallback` regardless of the policy.
    pub fn build(form: &DriftForm, grid: &Grid, policy: &[ControlPoint], fallback: &ControlPoint) -> Self {
        let dim = grid.dim();
        let n = grid.len();
        let mut up = vec![0.0; n * dim];
        let mut down = vec![0.0; n * dim];
        let mut x = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        for c in 0..n {
            grid.point_into(c, &mut x);
            let u = if grid.is_boundary(c) { fallback } else { &policy[c] };
            form.eval_into(&x, u, &mut b);
            cell_rates(grid, c, &b, &form.sigma, &mut up[c * dim..(c + 1) * dim], &mut down[c * dim..(c + 1) * dim]);
        }
        Self { grid: grid.clone(), up, down }
    }

    pub fn exit_rate(&self, c: usize) -> f64 {
        let dim = self.grid.dim();
        self.up[c * dim..(c + 1) * dim].iter().sum::<f64>() + self.down[c * dim..(c + 1) * dim].iter().sum::<f64>()
    }

    /// `(L f)(c)`.
    pub fn apply(&self, f: &[f64], c: usize) -> f64 {
        let dim = self.grid.dim();
        let mut s = 0.0;
        for d in 0..dim {
            if let Some(n) = self.grid.neighbor(c, d, true) {
                s += self.up[c * dim + d] * (f[n] - f[c]);
            }
            if let Some(n) = self.grid.neighbor(c, d, false) {
                s += self.down[c * dim + d] * (f[n] - f[c]);
            }
        }
        s
    }

    /// Generator row sums; zero for a conservative chain.
    pub fn row_sums(&self) -> Vec<f64> {
        let dense = self.banded(0.0, None);
        let ones = vec![1.0; self.grid.len()];
        dense.mul_vec(&ones).iter().map(|v| -v).collect()
    }

    /// `shift I - L`, optionally with row `pin` replaced by the unit row.
    pub fn banded(&self, shift: f64, pin: Option<usize>) -> BandedMatrix {
        let dim = self.grid.dim();
        let n = self.grid.len();
        let mut m = BandedMatrix::zeros(n, self.grid.bandwidth());
        for c in 0..n {
            m.set(c, c, shift + self.exit_rate(c));
            for d in 0..dim {
                if let Some(nb) = self.grid.neighbor(c, d, true) {
                    m.add(c, nb, -self.up[c * dim + d]);
                }
                if let Some(nb) = self.grid.neighbor(c, d, false) {
                    m.add(c, nb, -self.down[c * dim + d]);
                }
            }
        }
        if let Some(o) = pin {
            m.set_unit_row(o);
        }
        m
    }

    /// Off-diagonal minimum over all rates; nonnegative for a monotone scheme.
    pub fn min_rate(&self) -> f64 {
        self.up.iter().chain(&self.down).cloned().fold(f64::INFINITY, f64::min)
    }
}
