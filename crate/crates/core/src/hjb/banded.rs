//! Banded LU without pivoting, for nonsingular M-matrices.

use super::HjbError;

/// Square matrix with equal lower and upper bandwidth `bw`.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(r.abs_diff(c) <= self.bw);
        r * (2 * self.bw + 1) + c + self.bw - r
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r.abs_diff(c) > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let k = self.idx(r, c);
        self.data[k] = v;
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    /// Replaces row `r` by the unit row `e_r`.
    pub fn set_unit_row(&mut self, r: usize) {
        let lo = r.saturating_sub(self.bw);
        let hi = (r + self.bw).min(self.n - 1);
        for c in lo..=hi {
            self.set(r, c, if c == r { 1.0 } else { 0.0 });
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.bw);
                let hi = (r + self.bw).min(self.n - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    /// In-place LU factorization (unit lower `L`, upper `U`).
    pub fn factor(mut self) -> Result<BandedLu, HjbError> {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for k in 0..n {
            let pivot = self.data[k * w + bw];
            if !(pivot.abs() > 1e-300) || !pivot.is_finite() {
                return Err(HjbError::SingularEvaluation(format!("zero pivot at row {k}")));
            }
            let kmax = (k + bw).min(n - 1);
            let (head, tail) = self.data.split_at_mut((k + 1) * w);
            let krow = &head[k * w..];
            for i in k + 1..=kmax {
                let base = (i - k - 1) * w;
                let ik = base + k + bw - i;
                let l = tail[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                tail[ik] = l;
                // row i, columns k+1..=kmax
                let src = &krow[bw + 1..bw + 1 + (kmax - k)];
                let dst_start = base + k + 1 + bw - i;
                let dst = &mut tail[dst_start..dst_start + (kmax - k)];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        Ok(BandedLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandedMatrix,
}

impl BandedLu {
    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.m.n, self.m.bw);
        let w = 2 * bw + 1;
        let d = &self.m.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            let row = i * w + bw - i;
            for k in lo..i {
                s -= d[row + k] * b[k];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let row = i * w + bw - i;
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= d[row + j] * b[j];
            }
            b[i] = s / d[row + i];
        }
    }

    /// Solves `A^T x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let (n, bw) = (self.m.n, self.m.bw);
        let w = 2 * bw + 1;
        let d = &self.m.data;
        // U^T z = b: forward, pushing each finished entry into later rows
        for k in 0..n {
            let row = k * w + bw - k;
            b[k] /= d[row + k];
            let zk = b[k];
            let hi = (k + bw).min(n - 1);
            for j in k + 1..=hi {
                b[j] -= d[row + j] * zk;
            }
        }
        // L^T x = z: backward
        for k in (0..n).rev() {
            let xk = b[k];
            let row = k * w + bw - k;
            let lo = k.saturating_sub(bw);
            for j in lo..k {
                b[j] -= d[row + j] * xk;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, bw: usize) -> BandedMatrix {
        let mut m = BandedMatrix::zeros(n, bw);
        for r in 0..n {
            let mut off = 0.0;
            for c in r.saturating_sub(bw)..=(r + bw).min(n - 1) {
                if c != r {
                    let v = -(((r * 7 + c * 3) % 5) as f64 + 0.5) / 10.0;
                    m.set(r, c, v);
                    off -= v;
                }
            }
            m.set(r, r, off + 1.0);
        }
        m
    }

    fn dense_solve(m: &BandedMatrix, b: &[f64], transpose: bool) -> Vec<f64> {
        let n = m.n();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| if transpose { m.get(c, r) } else { m.get(r, c) })
                    .chain(std::iter::once(b[r]))
                    .collect()
            })
            .collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..=n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (a[i][n] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn matches_dense_elimination() {
        for (n, bw) in [(1, 0), (6, 1), (9, 3), (12, 11)] {
            let m = sample(n, bw);
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
            let lu = m.clone().factor().unwrap();
            let mut x = b.clone();
            lu.solve(&mut x);
            let y = dense_solve(&m, &b, false);
            let mut xt = b.clone();
            lu.solve_transpose(&mut xt);
            let yt = dense_solve(&m, &b, true);
            for i in 0..n {
                assert!((x[i] - y[i]).abs() < 1e-12, "n={n} bw={bw}");
                assert!((xt[i] - yt[i]).abs() < 1e-12, "n={n} bw={bw} transpose");
            }
        }
    }

    #[test]
    fn zero_pivot_is_an_error() {
        let m = BandedMatrix::zeros(3, 1);
        assert!(matches!(m.factor(), Err(HjbError::SingularEvaluation(_))));
    }
}
