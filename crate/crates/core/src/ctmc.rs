//! Event-driven simulation of the n-th pre-limit system under a policy induced
//! by a Markov control of the diffusion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostSpec;
use crate::elimination::{ControlPoint, GMap};
use crate::network::Network;
use crate::plan::StaticPlan;
use crate::sim::{batch_means, Estimate, MarkovControl};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtmcError {
    #[error("scale parameter must be at least 1, got {0}")]
    InvalidScale(f64),
    #[error("invalid scaled system: {0}")]
    InvalidSystem(String),
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NthSystem {
    pub n: f64,
    pub lambda_n: Vec<f64>,
    /// I x J; zero off the edge set.
    pub mu_n: Vec<Vec<f64>>,
    pub gamma_n: Vec<f64>,
    pub pools_n: Vec<u64>,
    /// `round(n nu_j) - n nu_j`.
    pub rounding: Vec<f64>,
}

pub fn build_nth_system(net: &Network, n: f64) -> Result<NthSystem, CtmcError> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(CtmcError::InvalidScale(n));
    }
    let rn = n.sqrt();
    let lambda_n: Vec<f64> = net
        .lambda()
        .iter()
        .zip(net.lambda_hat())
        .map(|(l, lh)| n * l + rn * lh)
        .collect();
    if let Some(i) = lambda_n.iter().position(|&l| !(l > 0.0)) {
        return Err(CtmcError::InvalidSystem(format!("arrival rate of class {} is not positive", i + 1)));
    }
    let mut mu_n = vec![vec![0.0; net.num_pools()]; net.num_classes()];
    for e in net.edges() {
        let m = net.mu(e.class, e.pool) + net.mu_hat(e.class, e.pool) / rn;
        if !(m > 0.0) {
            return Err(CtmcError::InvalidSystem(format!(
                "service rate of activity ({}, {}) is not positive",
                e.class + 1,
                e.pool + 1
            )));
        }
        mu_n[e.class][e.pool] = m;
    }
    let pools_n: Vec<u64> = net.nu().iter().map(|v| (n * v).round().max(0.0) as u64).collect();
    if let Some(j) = pools_n.iter().position(|&c| c == 0) {
        return Err(CtmcError::InvalidSystem(format!("pool {} has no servers", j + 1)));
    }
    let rounding = pools_n.iter().zip(net.nu()).map(|(&c, v)| c as f64 - n * v).collect();
    Ok(NthSystem {
        n,
        lambda_n,
        mu_n,
        gamma_n: net.gamma().to_vec(),
        pools_n,
        rounding,
    })
}

/// Headcounts, queues, idle servers and the in-service matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtmcState {
    pub x: Vec<u64>,
    pub q: Vec<u64>,
    pub y: Vec<u64>,
    pub z: Vec<Vec<u64>>,
}

impl CtmcState {
    pub fn check_balance(&self, pools: &[u64]) -> bool {
        let classes_ok = (0..self.x.len()).all(|i| self.x[i] == self.q[i] + self.z[i].iter().sum::<u64>());
        let pools_ok = (0..pools.len()).all(|j| pools[j] == self.y[j] + self.z.iter().map(|r| r[j]).sum::<u64>());
        classes_ok && pools_ok
    }
}

/// Splits `total` into integer parts proportional to `weights` by largest
/// remainders; ties go to the lower index.
pub fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if total == 0 || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take((total - assigned.min(total)) as usize) {
        parts[k] += 1;
    }
    parts
}

/// Maps states of the n-th system to server assignments.
#[derive(Debug, Clone)]
pub struct PrelimitPolicy {
    gmap: GMap,
    edges: Vec<(usize, usize)>,
    /// Classes in elimination order, for the fallback fill.
    class_order: Vec<usize>,
    x_star: Vec<f64>,
    pools_n: Vec<u64>,
    n: f64,
}

impl PrelimitPolicy {
    pub fn new(net: &Network, plan: &StaticPlan, sys: &NthSystem) -> Self {
        let gmap = GMap::new(net);
        let class_order = gmap.elimination().order.clone();
        Self {
            edges: net.edges().iter().map(|e| (e.class, e.pool)).collect(),
            gmap,
            class_order,
            x_star: plan.x_star.clone(),
            pools_n: sys.pools_n.clone(),
            n: sys.n,
        }
    }

    pub fn scaled(&self, x: &[u64]) -> Vec<f64> {
        let rn = self.n.sqrt();
        x.iter().zip(&self.x_star).map(|(&xi, s)| (xi as f64 - self.n * s) / rn).collect()
    }

    /// Returns the state and whether the static priority fallback was used.
    pub fn assign(&self, x: &[u64], u: &ControlPoint) -> (CtmcState, bool) {
        let total_x: u64 = x.iter().sum();
        let total_n: u64 = self.pools_n.iter().sum();
        let q = apportion(total_x.saturating_sub(total_n), &u.uc);
        let y = apportion(total_n.saturating_sub(total_x), &u.us);
        let fits = q.iter().zip(x).all(|(qi, xi)| qi <= xi) && y.iter().zip(&self.pools_n).all(|(yj, nj)| yj <= nj);
        if fits {
            let alpha: Vec<f64> = x.iter().zip(&q).map(|(xi, qi)| (xi - qi) as f64).collect();
            let beta: Vec<f64> = self.pools_n.iter().zip(&y).map(|(nj, yj)| (nj - yj) as f64).collect();
            let mut vals = vec![0.0; self.edges.len()];
            self.gmap.edge_values(&alpha, &beta, &mut vals);
            if vals.iter().all(|&v| v >= 0.0) {
                let mut z = vec![vec![0; self.pools_n.len()]; x.len()];
                for (&(i, j), v) in self.edges.iter().zip(&vals) {
                    z[i][j] = v.round() as u64;
                }
                return (CtmcState { x: x.to_vec(), q, y, z }, false);
            }
        }
        (self.greedy(x), true)
    }

    /// Static priority: classes in elimination order, pools ascending.
    fn greedy(&self, x: &[u64]) -> CtmcState {
        let mut free = self.pools_n.clone();
        let mut z = vec![vec![0; free.len()]; x.len()];
        let mut q = x.to_vec();
        for &i in &self.class_order {
            for &(ci, j) in &self.edges {
                if ci != i {
                    continue;
                }
                let take = q[i].min(free[j]);
                z[i][j] += take;
                q[i] -= take;
                free[j] -= take;
            }
        }
        CtmcState { x: x.to_vec(), q, y: free, z }
    }
}

/// `policy_from_control` for a single state.
pub fn policy_from_control(
    net: &Network,
    plan: &StaticPlan,
    sys: &NthSystem,
    ctrl: &MarkovControl,
    x: &[u64],
) -> CtmcState {
    let p = PrelimitPolicy::new(net, plan, sys);
    let xh = p.scaled(x);
    p.assign(x, ctrl.at(&xh)).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtmcConfig {
    pub horizon: f64,
    pub burn_in: f64,
    pub batches: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl CtmcConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self {
            horizon,
            burn_in: 0.1 * horizon,
            batches: 30,
            seed,
            stream: 0,
        }
    }

    fn validate(&self) -> Result<(), CtmcError> {
        if !(self.horizon > 0.0) || !(self.burn_in >= 0.0) || self.burn_in >= self.horizon {
            return Err(CtmcError::InvalidConfig("need 0 <= burn_in < horizon".into()));
        }
        if self.batches < 2 {
            return Err(CtmcError::InvalidConfig("need at least two batches".into()));
        }
        Ok(())
    }
}

/// Diffusion-scaled time averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtmcEstimate {
    pub n: f64,
    /// Running cost of the scaled queues and idleness.
    pub cost: Estimate,
    pub queue: Vec<Estimate>,
    pub idle: Vec<Estimate>,
    /// Scaled headcount `(X - n x*) / sqrt(n)`.
    pub state: Vec<Estimate>,
    pub events: u64,
    /// Fraction of post-burn-in time spent under the fallback assignment.
    pub fallback_time: f64,
}

fn scaled_cost(spec: &CostSpec, s: &CtmcState, rn: f64) -> f64 {
    let q: f64 = s.q.iter().zip(&spec.q_weights).map(|(&v, w)| w * (v as f64 / rn).powf(spec.m)).sum();
    let y: f64 = s.y.iter().zip(&spec.i_weights).map(|(&v, w)| w * (v as f64 / rn).powf(spec.m)).sum();
    q + y
}

pub fn simulate_ctmc(
    net: &Network,
    plan: &StaticPlan,
    sys: &NthSystem,
    ctrl: &MarkovControl,
    spec: &CostSpec,
    cfg: &CtmcConfig,
) -> Result<CtmcEstimate, CtmcError> {
    cfg.validate()?;
    spec.validate(net.num_classes(), net.num_pools())
        .map_err(|e| CtmcError::InvalidConfig(e.to_string()))?;
    let (ni, nj) = (net.num_classes(), net.num_pools());
    let policy = PrelimitPolicy::new(net, plan, sys);
    let rn = sys.n.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream);

    let x0: Vec<u64> = plan.x_star.iter().map(|s| (sys.n * s).round() as u64).collect();
    let assign = |x: &[u64]| {
        let xh = policy.scaled(x);
        policy.assign(x, ctrl.at(&xh))
    };
    let (mut state, mut fell_back) = assign(&x0);

    // columns: cost, queues, idle, scaled state
    let width = 1 + ni + nj + ni;
    let batch_len = (cfg.horizon - cfg.burn_in) / cfg.batches as f64;
    let mut sums = vec![vec![0.0; width]; cfg.batches];
    let mut fallback_time = 0.0;
    let mut row = vec![0.0; width];
    let mut t = 0.0;
    let mut events = 0u64;
    let lambda_total: f64 = sys.lambda_n.iter().sum();

    loop {
        debug_assert!(state.check_balance(&sys.pools_n));
        let mut rate = lambda_total;
        for i in 0..ni {
            rate += sys.gamma_n[i] * state.q[i] as f64;
            for j in 0..nj {
                rate += sys.mu_n[i][j] * state.z[i][j] as f64;
            }
        }
        let e: f64 = Exp1.sample(&mut rng);
        let t_next = (t + e / rate).min(cfg.horizon);

        // accumulate the current state's contribution over [t, t_next)
        row[0] = scaled_cost(spec, &state, rn);
        for i in 0..ni {
            row[1 + i] = state.q[i] as f64 / rn;
            row[1 + ni + nj + i] = (state.x[i] as f64 - sys.n * plan.x_star[i]) / rn;
        }
        for j in 0..nj {
            row[1 + ni + j] = state.y[j] as f64 / rn;
        }
        let mut a = t.max(cfg.burn_in);
        while a < t_next {
            let k = (((a - cfg.burn_in) / batch_len) as usize).min(cfg.batches - 1);
            let end = (cfg.burn_in + (k + 1) as f64 * batch_len).min(t_next);
            let dt = end - a;
            for (s, v) in sums[k].iter_mut().zip(&row) {
                *s += v * dt;
            }
            if fell_back {
                fallback_time += dt;
            }
            a = end;
        }
        if t_next >= cfg.horizon {
            break;
        }
        t = t_next;
        events += 1;

        // pick the event
        let mut pick = rng.random::<f64>() * rate;
        let mut x = state.x.clone();
        let mut done = false;
        for i in 0..ni {
            if pick < sys.lambda_n[i] {
                x[i] += 1;
                done = true;
                break;
            }
            pick -= sys.lambda_n[i];
        }
        if !done {
            'outer: for i in 0..ni {
                let ab = sys.gamma_n[i] * state.q[i] as f64;
                if pick < ab {
                    x[i] -= 1;
                    done = true;
                    break;
                }
                pick -= ab;
                for j in 0..nj {
                    let sv = sys.mu_n[i][j] * state.z[i][j] as f64;
                    if pick < sv {
                        x[i] -= 1;
                        done = true;
                        break 'outer;
                    }
                    pick -= sv;
                }
            }
        }
        if !done {
            // round-off at the top of the cumulative sum: take the last positive rate
            if let Some(i) = (0..ni).rev().find(|&i| state.x[i] > 0) {
                x[i] -= 1;
            }
        }
        (state, fell_back) = assign(&x);
    }

    let col = |c: usize| -> Estimate {
        let v: Vec<f64> = sums.iter().map(|r| r[c] / batch_len).collect();
        batch_means(&v)
    };
    Ok(CtmcEstimate {
        n: sys.n,
        cost: col(0),
        queue: (0..ni).map(|i| col(1 + i)).collect(),
        idle: (0..nj).map(|j| col(1 + ni + j)).collect(),
        state: (0..ni).map(|i| col(1 + ni + nj + i)).collect(),
        events,
        fallback_time: fallback_time / (cfg.horizon - cfg.burn_in),
    })
}
