//! Fluid-scale static planning: the allocation LP, complete resource pooling and
//! the drift offset of the diffusion limit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Network;
use crate::simplex::{solve_standard_form, LpError};

/// Allocations at or below this value count as zero.
pub const POSITIVITY_TOL: f64 = 1e-9;
/// Tree solve and simplex must agree to this accuracy.
pub const CROSS_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("complete resource pooling violated: xi*[{class},{pool}] = {value:e}")]
    PoolingViolated { class: usize, pool: usize, value: f64 },
    #[error("network is not critically loaded: {0}")]
    NotCriticallyLoaded(String),
    #[error("planning system is singular: {0}")]
    Singular(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPlan {
    /// I x J allocation proportions; zero off the edge set.
    pub xi_star: Vec<Vec<f64>>,
    pub rho_star: f64,
    pub x_star: Vec<f64>,
    /// I x J fluid service matrix.
    pub z_star: Vec<Vec<f64>>,
    pub ell: Vec<f64>,
}

/// Solves the balance system on the tree with the utilization pinned at one.
///
/// Leaves are peeled one at a time: a pool leaf hands its whole capacity to its
/// only class, a class leaf sends its whole remaining demand to its only pool.
/// The final edge sees two equations for one unknown, which is where the single
/// redundancy of the system is checked.
pub fn tree_solve(net: &Network) -> Result<Vec<Vec<f64>>, PlanError> {
    let (ni, nj) = (net.num_classes(), net.num_pools());
    let mut demand = net.lambda().to_vec();
    let mut capacity = vec![1.0; nj];
    let mut alive: Vec<bool> = vec![true; net.edges().len()];
    let mut class_deg: Vec<usize> = (0..ni).map(|i| net.pools_of(i).count()).collect();
    let mut pool_deg: Vec<usize> = (0..nj).map(|j| net.classes_of(j).count()).collect();
    let mut xi = vec![vec![0.0; nj]; ni];
    let mut remaining = net.edges().len();

    let live_edge_of_class = |alive: &[bool], i: usize| {
        net.edges()
            .iter()
            .enumerate()
            .find(|(k, e)| alive[*k] && e.class == i)
            .map(|(k, e)| (k, e.pool))
    };
    let live_edge_of_pool = |alive: &[bool], j: usize| {
        net.edges()
            .iter()
            .enumerate()
            .find(|(k, e)| alive[*k] && e.pool == j)
            .map(|(k, e)| (k, e.class))
    };

    while remaining > 1 {
        if let Some(j) = (0..nj).find(|&j| pool_deg[j] == 1) {
            let (k, i) = live_edge_of_pool(&alive, j).expect("pool leaf has an edge");
            let rate = net.mu(i, j) * net.nu()[j];
            xi[i][j] = capacity[j];
            demand[i] -= rate * capacity[j];
            capacity[j] = 0.0;
            alive[k] = false;
            pool_deg[j] -= 1;
            class_deg[i] -= 1;
        } else if let Some(i) = (0..ni).find(|&i| class_deg[i] == 1) {
            let (k, j) = live_edge_of_class(&alive, i).expect("class leaf has an edge");
            let rate = net.mu(i, j) * net.nu()[j];
            if rate <= 0.0 || !rate.is_finite() {
                return Err(PlanError::Singular(format!(
                    "edge ({}, {}) has zero effective rate",
                    i + 1,
                    j + 1
                )));
            }
            let v = demand[i] / rate;
            xi[i][j] = v;
            capacity[j] -= v;
            demand[i] = 0.0;
            alive[k] = false;
            pool_deg[j] -= 1;
            class_deg[i] -= 1;
        } else {
            return Err(PlanError::Singular("no leaf found in a non-trivial tree".into()));
        }
        remaining -= 1;
    }

    let last = net
        .edges()
        .iter()
        .enumerate()
        .find(|(k, _)| alive[*k])
        .map(|(_, e)| *e)
        .expect("one edge remains");
    let (i, j) = (last.class, last.pool);
    let rate = net.mu(i, j) * net.nu()[j];
    let from_class = demand[i] / rate;
    let from_pool = capacity[j];
    let scale = from_class.abs().max(from_pool.abs()).max(1.0);
    if (from_class - from_pool).abs() > 1e-10 * scale {
        return Err(PlanError::NotCriticallyLoaded(format!(
            "last activity ({}, {}) needs {from_class} from the class balance but {from_pool} from the pool balance",
            i + 1,
            j + 1
        )));
    }
    xi[i][j] = 0.5 * (from_class + from_pool);
    Ok(xi)
}

/// Solves the static planning LP with the dense simplex. Returns `(xi, rho)`.
pub fn simplex_solve(net: &Network) -> Result<(Vec<Vec<f64>>, f64), LpError> {
    let (ni, nj) = (net.num_classes(), net.num_pools());
    let edges = net.edges();
    let ne = edges.len();
    // Variables: xi_e (ne), rho, slack_j (nj).
    let nvar = ne + 1 + nj;
    let nrow = ni + nj;
    let mut a = vec![0.0; nrow * nvar];
    let mut b = vec![0.0; nrow];
    for (k, e) in edges.iter().enumerate() {
        a[e.class * nvar + k] = net.mu(e.class, e.pool) * net.nu()[e.pool];
        a[(ni + e.pool) * nvar + k] = 1.0;
    }
    for (i, bi) in b.iter_mut().enumerate().take(ni) {
        *bi = net.lambda()[i];
    }
    for j in 0..nj {
        a[(ni + j) * nvar + ne] = -1.0;
        a[(ni + j) * nvar + ne + 1 + j] = 1.0;
    }
    let mut c = vec![0.0; nvar];
    c[ne] = 1.0;
    let sol = solve_standard_form(&a, &b, &c)?;
    let mut xi = vec![vec![0.0; nj]; ni];
    for (k, e) in edges.iter().enumerate() {
        xi[e.class][e.pool] = sol.x[k];
    }
    Ok((xi, sol.x[ne]))
}

/// Drift offset of the limiting diffusion.
pub fn compute_ell(net: &Network, plan: &StaticPlan) -> Vec<f64> {
    (0..net.num_classes())
        .map(|i| {
            net.lambda_hat()[i]
                - net
                    .pools_of(i)
                    .map(|j| net.mu_hat(i, j) * plan.z_star[i][j])
                    .sum::<f64>()
        })
        .collect()
}

pub fn solve_static_plan(net: &Network) -> Result<StaticPlan, PlanError> {
    let xi = tree_solve(net)?;
    for e in net.edges() {
        let v = xi[e.class][e.pool];
        if v <= POSITIVITY_TOL {
            return Err(PlanError::PoolingViolated {
                class: e.class + 1,
                pool: e.pool + 1,
                value: v,
            });
        }
    }

    let (lp_xi, lp_rho) = simplex_solve(net).map_err(|e| match e {
        LpError::Infeasible(_) => PlanError::NotCriticallyLoaded(format!("static LP: {e}")),
        other => PlanError::Singular(format!("static LP: {other}")),
    })?;
    if lp_rho < 1.0 - CROSS_CHECK_TOL {
        return Err(PlanError::NotCriticallyLoaded(format!(
            "static LP attains utilization {lp_rho} < 1"
        )));
    }
    for e in net.edges() {
        let d = (lp_xi[e.class][e.pool] - xi[e.class][e.pool]).abs();
        if d > CROSS_CHECK_TOL {
            return Err(PlanError::Singular(format!(
                "static LP optimum is not unique: tree solve and simplex differ by {d:e} on ({}, {})",
                e.class + 1,
                e.pool + 1
            )));
        }
    }

    let nu = net.nu();
    let z_star: Vec<Vec<f64>> = xi
        .iter()
        .map(|row| row.iter().zip(nu).map(|(x, n)| x * n).collect())
        .collect();
    let x_star = z_star.iter().map(|row| row.iter().sum()).collect();
    let mut plan = StaticPlan {
        xi_star: xi,
        rho_star: 1.0,
        x_star,
        z_star,
        ell: Vec::new(),
    };
    plan.ell = compute_ell(net, &plan);
    Ok(plan)
}
