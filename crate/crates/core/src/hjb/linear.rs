//! Linear solves for policy evaluation: stationary law and Poisson equation.

use super::chain::Chain;
use super::HjbError;

/// Banded elimination is used while `cells * bandwidth^2` stays below this.
const BANDED_WORK_LIMIT: f64 = 2e10;
const GS_TOL: f64 = 1e-12;
const GS_MAX_SWEEPS: usize = 200_000;

fn use_banded(chain: &Chain) -> bool {
    let bw = chain.grid.bandwidth() as f64;
    (chain.grid.len() as f64) * bw * bw <= BANDED_WORK_LIMIT
}

/// Stationary distribution `pi` and the relative value `V` with `V(o) = 0`
/// solving `L V + cost = rho`, where `rho = pi . cost`.
pub(crate) fn average_cost(chain: &Chain, cost: &[f64]) -> Result<(Vec<f64>, f64, Vec<f64>), HjbError> {
    let o = chain.grid.origin();
    let (pi, v);
    if use_banded(chain) {
        let lu = chain.banded(0.0, Some(o)).factor()?;
        let mut y = vec![0.0; chain.grid.len()];
        let dim = chain.grid.dim();
        for d in 0..dim {
            if let Some(nb) = chain.grid.neighbor(o, d, true) {
                y[nb] += chain.up[o * dim + d];
            }
            if let Some(nb) = chain.grid.neighbor(o, d, false) {
                y[nb] += chain.down[o * dim + d];
            }
        }
        y[o] = 1.0 - chain.exit_rate(o);
        lu.solve_transpose(&mut y);
        pi = normalize(y)?;
        let rho: f64 = pi.iter().zip(cost).map(|(p, c)| p * c).sum();
        let mut rhs: Vec<f64> = cost.iter().map(|c| c - rho).collect();
        rhs[o] = 0.0;
        lu.solve(&mut rhs);
        v = rhs;
        Ok((v, rho, pi))
    } else {
        pi = normalize(stationary_gs(chain, o)?)?;
        let rho: f64 = pi.iter().zip(cost).map(|(p, c)| p * c).sum();
        let rhs: Vec<f64> = cost.iter().map(|c| c - rho).collect();
        v = poisson_gs(chain, &rhs, 0.0, Some(o))?;
        Ok((v, rho, pi))
    }
}

/// Solves `(alpha I - L) V = cost`.
pub(crate) fn discounted(chain: &Chain, cost: &[f64], alpha: f64) -> Result<Vec<f64>, HjbError> {
    if use_banded(chain) {
        let lu = chain.banded(alpha, None).factor()?;
        let mut v = cost.to_vec();
        lu.solve(&mut v);
        Ok(v)
    } else {
        poisson_gs(chain, cost, alpha, None)
    }
}

fn normalize(mut y: Vec<f64>) -> Result<Vec<f64>, HjbError> {
    let s: f64 = y.iter().sum();
    let min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = y.iter().cloned().fold(0.0, f64::max);
    if !(s > 0.0) || !s.is_finite() || min < -1e-9 * max {
        return Err(HjbError::SingularEvaluation(
            "stationary distribution is not a probability vector; the chain may not communicate".into(),
        ));
    }
    for v in y.iter_mut() {
        *v = (*v / s).max(0.0);
    }
    Ok(y)
}

/// Gauss–Seidel for `(shift + q_c) V_c - sum rate V_nb = rhs_c`, with `V(pin) = 0`.
fn poisson_gs(chain: &Chain, rhs: &[f64], shift: f64, pin: Option<usize>) -> Result<Vec<f64>, HjbError> {
    let grid = &chain.grid;
    let dim = grid.dim();
    let n = grid.len();
    let mut v = vec![0.0; n];
    let scale = rhs.iter().fold(1e-300_f64, |m, r| m.max(r.abs()));
    for _ in 0..GS_MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for c in 0..n {
            if Some(c) == pin {
                continue;
            }
            let mut s = rhs[c];
            for d in 0..dim {
                if let Some(nb) = grid.neighbor(c, d, true) {
                    s += chain.up[c * dim + d] * v[nb];
                }
                if let Some(nb) = grid.neighbor(c, d, false) {
                    s += chain.down[c * dim + d] * v[nb];
                }
            }
            let new = s / (shift + chain.exit_rate(c));
            delta = delta.max((new - v[c]).abs());
            v[c] = new;
        }
        let vmax = v.iter().fold(scale, |m, x| m.max(x.abs()));
        if delta <= GS_TOL * vmax {
            return Ok(v);
        }
    }
    Err(HjbError::SingularEvaluation("Gauss-Seidel did not converge".into()))
}

/// Gauss–Seidel on the balance equations with `pi(pin) = 1`.
fn stationary_gs(chain: &Chain, pin: usize) -> Result<Vec<f64>, HjbError> {
    let grid = &chain.grid;
    let dim = grid.dim();
    let n = grid.len();
    let mut p = vec![1.0; n];
    for _ in 0..GS_MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for c in 0..n {
            if c == pin {
                continue;
            }
            let mut inflow = 0.0;
            for d in 0..dim {
                // the lower neighbour reaches c by moving up, and vice versa
                if let Some(nb) = grid.neighbor(c, d, false) {
                    inflow += p[nb] * chain.up[nb * dim + d];
                }
                if let Some(nb) = grid.neighbor(c, d, true) {
                    inflow += p[nb] * chain.down[nb * dim + d];
                }
            }
            let new = inflow / chain.exit_rate(c);
            delta = delta.max((new - p[c]).abs() / new.max(1e-300));
            p[c] = new;
        }
        if delta <= GS_TOL {
            return Ok(p);
        }
    }
    Err(HjbError::SingularEvaluation("stationary iteration did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elimination::{ControlPoint, DriftForm};
    use crate::hjb::grid::Grid;

    fn chain_2d() -> Chain {
        let form = DriftForm {
            b1: vec![vec![1.0, 0.0], vec![0.5, 2.0]],
            b2: vec![vec![0.3], vec![0.0]],
            gamma: vec![0.5, 1.0],
            ell: vec![0.1, -0.2],
            sigma: vec![1.0, 1.5],
            perm: vec![0, 1],
        };
        let grid = Grid::new(2, 2.0, 0.5).unwrap();
        let u = ControlPoint::vertex(2, 1, 1, 0);
        Chain::build(&form, &grid, &vec![u.clone(); grid.len()], &u)
    }

    #[test]
    fn banded_and_iterative_agree() {
        let chain = chain_2d();
        let cost: Vec<f64> = (0..chain.grid.len())
            .map(|c| chain.grid.point(c).iter().map(|x| x.abs()).sum())
            .collect();
        let (v, rho, pi) = average_cost(&chain, &cost).unwrap();
        let o = chain.grid.origin();
        let pi2 = normalize(stationary_gs(&chain, o).unwrap()).unwrap();
        let rhs: Vec<f64> = cost.iter().map(|c| c - rho).collect();
        let v2 = poisson_gs(&chain, &rhs, 0.0, Some(o)).unwrap();
        for c in 0..chain.grid.len() {
            assert!((pi[c] - pi2[c]).abs() < 1e-9);
            assert!((v[c] - v2[c]).abs() < 1e-7);
            // dropping the pinned equation loses nothing: the system is consistent
            assert!((chain.apply(&v, c) + cost[c] - rho).abs() < 1e-9);
        }
        assert_eq!(v[o], 0.0);
        let d1 = discounted(&chain, &cost, 0.3).unwrap();
        let d2 = poisson_gs(&chain, &cost, 0.3, None).unwrap();
        for c in 0..chain.grid.len() {
            assert!((d1[c] - d2[c]).abs() < 1e-8);
        }
    }
}
