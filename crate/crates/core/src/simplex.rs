//! Small dense two-phase simplex with Bland's rule.
//!
//! Solves `min c.x  s.t.  A x = b, x >= 0`. Intended for the tiny LPs of static
//! planning, where determinism matters more than speed.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("LP is infeasible (phase-one objective {0:e})")]
    Infeasible(f64),
    #[error("LP is unbounded")]
    Unbounded,
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
    #[error("LP dimensions do not match: {0}")]
    Shape(String),
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

const EPS: f64 = 1e-11;

struct Tableau {
    rows: usize,
    cols: usize,
    // rows x (cols + 1); last column is the right-hand side.
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.at(pr, pc);
        for c in 0..w {
            self.a[pr * w + c] /= p;
        }
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f != 0.0 {
                for c in 0..w {
                    self.a[r * w + c] -= f * self.a[pr * w + c];
                }
            }
        }
        self.basis[pr] = pc;
    }

    /// Reduced costs for objective `cost` (length `cols`) under the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (c, dc) in d.iter_mut().enumerate() {
                    *dc -= cb * self.at(r, c);
                }
            }
        }
        d
    }

    /// Runs Bland-rule pivots on `cost`, restricted to columns `allowed`.
    fn optimize(
        &mut self,
        cost: &[f64],
        allowed: &dyn Fn(usize) -> bool,
        pivots: &mut usize,
        max_pivots: usize,
    ) -> Result<(), LpError> {
        loop {
            let d = self.reduced_costs(cost);
            let Some(enter) = (0..self.cols).find(|&c| allowed(c) && d[c] < -EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let coef = self.at(r, enter);
                if coef > EPS {
                    let ratio = self.rhs(r) / coef;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - EPS
                                || ((ratio - lratio).abs() <= EPS && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, enter);
            *pivots += 1;
            if *pivots > max_pivots {
                return Err(LpError::IterationLimit(max_pivots));
            }
        }
    }
}

/// Solves `min c.x  s.t.  A x = b, x >= 0` where `a` is row-major `m x n`.
pub fn solve_standard_form(a: &[f64], b: &[f64], c: &[f64]) -> Result<LpSolution, LpError> {
    let m = b.len();
    let n = c.len();
    if a.len() != m * n {
        return Err(LpError::Shape(format!("A has {} entries, expected {}x{}", a.len(), m, n)));
    }
    let cols = n + m;
    let w = cols + 1;
    let mut t = Tableau {
        rows: m,
        cols,
        a: vec![0.0; m * w],
        basis: (n..n + m).collect(),
    };
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for col in 0..n {
            t.a[r * w + col] = sign * a[r * n + col];
        }
        t.a[r * w + n + r] = 1.0;
        t.a[r * w + cols] = sign * b[r];
    }

    let max_pivots = 50 * (cols + m).max(10);
    let mut pivots = 0;

    // Phase one: minimize the sum of artificials.
    let mut phase1 = vec![0.0; cols];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    t.optimize(&phase1, &|_| true, &mut pivots, max_pivots)?;
    let infeas: f64 = (0..m).filter(|&r| t.basis[r] >= n).map(|r| t.rhs(r)).sum();
    let scale = b.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    if infeas > 1e-9 * scale {
        return Err(LpError::Infeasible(infeas));
    }

    // Drive remaining (zero-level) artificials out of the basis.
    let mut redundant = Vec::new();
    for r in 0..m {
        if t.basis[r] >= n {
            match (0..n).find(|&col| t.at(r, col).abs() > 1e-9) {
                Some(col) => {
                    t.pivot(r, col);
                    pivots += 1;
                }
                None => redundant.push(r),
            }
        }
    }

    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(c);
    t.optimize(&phase2, &|col| col < n, &mut pivots, max_pivots)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if redundant.contains(&r) {
            continue;
        }
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r);
        }
    }
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Ok(LpSolution { x, objective, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  (optimum 36 at (2, 6))
        let a = [
            1.0, 0.0, 1.0, 0.0, 0.0, //
            0.0, 2.0, 0.0, 1.0, 0.0, //
            3.0, 2.0, 0.0, 0.0, 1.0,
        ];
        let b = [4.0, 12.0, 18.0];
        let c = [-3.0, -5.0, 0.0, 0.0, 0.0];
        let sol = solve_standard_form(&a, &b, &c).unwrap();
        assert!((sol.objective + 36.0).abs() < 1e-10);
        assert!((sol.x[0] - 2.0).abs() < 1e-10);
        assert!((sol.x[1] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn infeasible_detected() {
        // x + y = -1 with x, y >= 0.
        let err = solve_standard_form(&[1.0, 1.0], &[-1.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, LpError::Infeasible(_)));
    }

    #[test]
    fn unbounded_detected() {
        // min -x s.t. x - y = 0.
        let err = solve_standard_form(&[1.0, -1.0], &[0.0], &[-1.0, 0.0]).unwrap_err();
        assert_eq!(err, LpError::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // x + y = 1 twice.
        let sol = solve_standard_form(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }
}
