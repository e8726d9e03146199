use serde::{Deserialize, Serialize};

use crate::elimination::ControlPoint;

use super::HjbError;

/// Hard cap on the number of grid cells.
pub const MAX_CELLS: usize = 50_000_000;
pub const MAX_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub radius: f64,
    pub h: f64,
    /// Control used on the boundary ring and outside the box.
    pub fallback: ControlPoint,
}

/// Uniform box grid `[-R, R]^d` with an odd number of nodes per dimension,
/// first coordinate varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    half: usize,
    h: f64,
    n: usize,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(dim: usize, radius: f64, h: f64) -> Result<Self, HjbError> {
        if !(radius > 0.0 && h > 0.0 && h <= radius) {
            return Err(HjbError::InvalidGrid(format!("radius {radius} and mesh {h}")));
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(HjbError::DimensionTooLarge { dim, cells: 0 });
        }
        let half = (radius / h).round() as usize;
        let n = 2 * half + 1;
        let len = (n as f64).powi(dim as i32);
        if len > MAX_CELLS as f64 {
            return Err(HjbError::DimensionTooLarge { dim, cells: len as usize });
        }
        let strides: Vec<usize> = (0..dim).map(|d| n.pow(d as u32)).collect();
        Ok(Self {
            dim,
            half,
            h,
            n,
            strides,
            len: len as usize,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Nodes per dimension.
    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn radius(&self) -> f64 {
        self.half as f64 * self.h
    }

    pub fn stride(&self, d: usize) -> usize {
        self.strides[d]
    }

    /// Largest index offset between neighbours.
    pub fn bandwidth(&self) -> usize {
        self.strides[self.dim - 1]
    }

    pub fn multi_index(&self, mut c: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            out.push(c % self.n);
            c /= self.n;
        }
        out
    }

    pub fn coord_of(&self, k: usize) -> f64 {
        (k as f64 - self.half as f64) * self.h
    }

    pub fn point(&self, c: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.point_into(c, &mut x);
        x
    }

    pub fn point_into(&self, mut c: usize, x: &mut [f64]) {
        for xd in x.iter_mut() {
            *xd = self.coord_of(c % self.n);
            c /= self.n;
        }
    }

    pub fn origin(&self) -> usize {
        self.strides.iter().map(|s| s * self.half).sum()
    }

    pub fn is_boundary(&self, c: usize) -> bool {
        let mut c = c;
        for _ in 0..self.dim {
            let k = c % self.n;
            if k == 0 || k == self.n - 1 {
                return true;
            }
            c /= self.n;
        }
        false
    }

    /// Neighbour in dimension `d` (`up` selects +h), if inside the box.
    pub fn neighbor(&self, c: usize, d: usize, up: bool) -> Option<usize> {
        let k = (c / self.strides[d]) % self.n;
        if up {
            (k + 1 < self.n).then(|| c + self.strides[d])
        } else {
            (k > 0).then(|| c - self.strides[d])
        }
    }

    /// Nearest node, or `None` outside the box (beyond half a cell).
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        let mut c = 0;
        for (d, &xd) in x.iter().enumerate() {
            let k = (xd / self.h).round() + self.half as f64;
            if !(k >= 0.0 && k <= (self.n - 1) as f64) {
                return None;
            }
            c += k as usize * self.strides[d];
        }
        Some(c)
    }
}

/// A stationary Markov control tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPolicy {
    pub grid: Grid,
    pub controls: Vec<ControlPoint>,
    pub fallback: ControlPoint,
}

impl GridPolicy {
    pub fn lookup(&self, x: &[f64]) -> &ControlPoint {
        match self.grid.nearest(x) {
            Some(c) => &self.controls[c],
            None => &self.fallback,
        }
    }
}
