//! Euler–Maruyama simulation of the limiting diffusion with batch-means
//! estimates of ergodic costs.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cost::{idleness_cost, running_cost, ConstraintSpec, CostSpec};
use crate::elimination::{ControlPoint, DriftForm};
use crate::hjb::grid::GridPolicy;

pub const BLOWUP: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state left the ball of radius 1e9 at step {step}")]
    NumericalBlowup { step: u64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone)]
pub enum MarkovControl {
    Constant(ControlPoint),
    Grid(Arc<GridPolicy>),
}

impl MarkovControl {
    pub fn at(&self, x: &[f64]) -> &ControlPoint {
        match self {
            Self::Constant(u) => u,
            Self::Grid(p) => p.lookup(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub batches: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    /// Independent stream index (replication number).
    #[serde(default)]
    pub stream: u64,
}

impl SimConfig {
    /// Defaults: 30 batches and a burn-in of 10% of the horizon.
    pub fn new(dt: f64, horizon: f64, seed: u64, x0: Vec<f64>) -> Self {
        Self {
            dt,
            horizon,
            burn_in: 0.1 * horizon,
            batches: 30,
            seed,
            x0,
            stream: 0,
        }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self { stream, ..self.clone() }
    }

    pub fn validate(&self, dim: usize) -> Result<(), SimError> {
        if !(self.dt > 0.0) {
            return Err(SimError::InvalidConfig("dt must be positive".into()));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon) {
            return Err(SimError::InvalidConfig("burn-in must lie in [0, horizon)".into()));
        }
        if self.batches < 10 {
            return Err(SimError::InvalidConfig("at least 10 batches are required".into()));
        }
        if self.x0.len() != dim {
            return Err(SimError::InvalidConfig(format!("x0 must have {dim} entries")));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    pub fn burn_steps(&self) -> u64 {
        (self.burn_in / self.dt).round() as u64
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Mean and 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicEstimate {
    pub mean: f64,
    pub half_width: f64,
    /// Long-run average of each pool's idleness cost.
    pub per_constraint: Vec<Estimate>,
    /// Long-run average of the state.
    pub state_mean: Vec<Estimate>,
    pub samples: u64,
}

/// Batch-means estimate over equally sized consecutive batches.
pub fn batch_means(batch_values: &[f64]) -> Estimate {
    let b = batch_values.len();
    let mean = batch_values.iter().sum::<f64>() / b as f64;
    if b < 2 {
        return Estimate { mean, half_width: f64::INFINITY };
    }
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (b - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.975);
    Estimate {
        mean,
        half_width: t * (var / b as f64).sqrt(),
    }
}

/// Euler–Maruyama path driver. `observe(step, x, u)` is called for the initial
/// state and after every step.
pub fn run_path(
    form: &DriftForm,
    ctrl: &MarkovControl,
    cfg: &SimConfig,
    mut observe: impl FnMut(u64, &[f64], &ControlPoint),
) -> Result<(), SimError> {
    let dim = form.num_classes();
    cfg.validate(dim)?;
    let mut rng = cfg.rng();
    let mut x = cfg.x0.clone();
    let mut b = vec![0.0; dim];
    let sq = cfg.dt.sqrt();
    let noise: Vec<f64> = form.sigma.iter().map(|s| s * sq).collect();
    let steps = cfg.steps();
    observe(0, &x, ctrl.at(&x));
    for step in 1..=steps {
        form.eval_into(&x, ctrl.at(&x), &mut b);
        for i in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[i] += b[i] * cfg.dt + noise[i] * z;
        }
        if x.iter().any(|v| !(v.abs() <= BLOWUP)) {
            return Err(SimError::NumericalBlowup { step });
        }
        observe(step, &x, ctrl.at(&x));
    }
    Ok(())
}

/// A decimated path: rows of `(t, x_1..x_I, cost)`.
pub fn simulate_path(
    form: &DriftForm,
    ctrl: &MarkovControl,
    spec: &CostSpec,
    cfg: &SimConfig,
    stride: u64,
) -> Result<Vec<Vec<f64>>, SimError> {
    let stride = stride.max(1);
    let mut rows = Vec::new();
    run_path(form, ctrl, cfg, |step, x, u| {
        if step % stride == 0 {
            let mut row = Vec::with_capacity(x.len() + 2);
            row.push(step as f64 * cfg.dt);
            row.extend_from_slice(x);
            row.push(running_cost(spec, x, u));
            rows.push(row);
        }
    })?;
    Ok(rows)
}

/// Time averages of the running cost, idleness costs and state after burn-in,
/// with batch-means confidence intervals.
pub fn estimate_ergodic_cost(
    form: &DriftForm,
    ctrl: &MarkovControl,
    spec: &CostSpec,
    cons: Option<&ConstraintSpec>,
    cfg: &SimConfig,
) -> Result<ErgodicEstimate, SimError> {
    let dim = form.num_classes();
    let pools = form.num_pools();
    let burn = cfg.burn_steps();
    let total = cfg.steps().saturating_sub(burn);
    let nb = cfg.batches as u64;
    if total < nb {
        return Err(SimError::InvalidConfig("fewer post-burn-in steps than batches".into()));
    }
    let per_batch = total / nb;
    // columns: cost, idleness per pool, state per class
    let width = 1 + pools + dim;
    let mut sums = vec![vec![0.0; width]; cfg.batches];
    let n_con = if cons.is_some() { pools } else { 0 };
    run_path(form, ctrl, cfg, |step, x, u| {
        // left-point rule: the value at step k stands for [k dt, (k+1) dt)
        if step < burn || step >= burn + per_batch * nb {
            return;
        }
        let k = ((step - burn) / per_batch) as usize;
        let row = &mut sums[k];
        row[0] += running_cost(spec, x, u);
        for j in 0..pools {
            row[1 + j] += idleness_cost(j, spec.m, x, u);
        }
        for i in 0..dim {
            row[1 + pools + i] += x[i];
        }
    })?;
    let col = |c: usize| -> Estimate {
        let v: Vec<f64> = sums.iter().map(|r| r[c] / per_batch as f64).collect();
        batch_means(&v)
    };
    let cost = col(0);
    Ok(ErgodicEstimate {
        mean: cost.mean,
        half_width: cost.half_width,
        per_constraint: (0..n_con).map(|j| col(1 + j)).collect(),
        state_mean: (0..dim).map(|i| col(1 + pools + i)).collect(),
        samples: per_batch * nb,
    })
}

/// Runs `f` for replications `0..reps`, in parallel when enabled.
pub fn replicate<T: Send>(reps: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    crate::par_map(reps as usize, |r| f(r as u64))
}

/// States at the requested times for each replication; `times` must be
/// increasing and the run stops at the last one.
pub fn states_at(
    form: &DriftForm,
    ctrl: &MarkovControl,
    cfg: &SimConfig,
    times: &[f64],
    reps: u64,
) -> Result<Vec<Vec<Vec<f64>>>, SimError> {
    let marks: Vec<u64> = times.iter().map(|t| (t / cfg.dt).round() as u64).collect();
    let last = *times.last().unwrap_or(&0.0);
    let runs = replicate(reps, |r| {
        let mut c = cfg.with_stream(r);
        c.horizon = last.max(cfg.dt);
        c.burn_in = 0.0;
        let mut out = Vec::with_capacity(marks.len());
        run_path(form, ctrl, &c, |step, x, _| {
            for &m in &marks {
                if m == step {
                    out.push(x.to_vec());
                }
            }
        })
        .map(|_| out)
    });
    runs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_1d(sigma: f64) -> DriftForm {
        DriftForm {
            b1: vec![vec![1.0]],
            b2: vec![vec![0.0]],
            gamma: vec![1.0],
            ell: vec![0.0],
            sigma: vec![sigma],
            perm: vec![0],
        }
    }

    fn constant() -> MarkovControl {
        MarkovControl::Constant(ControlPoint::vertex(1, 1, 0, 0))
    }

    #[test]
    fn deterministic_recursion() {
        let cfg = SimConfig::new(0.1, 1.0, 1, vec![1.0]);
        let mut xs = Vec::new();
        run_path(&linear_1d(0.0), &constant(), &cfg, |_, x, _| xs.push(x[0])).unwrap();
        for (k, v) in xs.iter().enumerate() {
            assert!((v - 0.9f64.powi(k as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn reproducible_per_seed() {
        let cfg = SimConfig::new(0.01, 5.0, 42, vec![0.3]);
        let spec = CostSpec { q_weights: vec![1.0], i_weights: vec![1.0], m: 1.0 };
        let a = simulate_path(&linear_1d(1.0), &constant(), &spec, &cfg, 1).unwrap();
        let b = simulate_path(&linear_1d(1.0), &constant(), &spec, &cfg, 1).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&linear_1d(1.0), &constant(), &spec, &cfg.with_stream(1), 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blowup_is_reported() {
        let mut form = linear_1d(0.0);
        form.b1 = vec![vec![-100.0]];
        form.gamma = vec![-100.0];
        let cfg = SimConfig::new(0.1, 100.0, 0, vec![1.0]);
        assert!(matches!(
            run_path(&form, &constant(), &cfg, |_, _, _| {}),
            Err(SimError::NumericalBlowup { .. })
        ));
    }

    #[test]
    fn pinned_idle_state_has_no_queue_cost() {
        let form = DriftForm {
            b1: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            b2: vec![vec![0.0], vec![0.0]],
            gamma: vec![0.0, 0.0],
            ell: vec![0.0, 0.0],
            sigma: vec![0.0, 0.0],
            perm: vec![0, 1],
        };
        let spec = CostSpec { q_weights: vec![1.0, 1.0], i_weights: vec![0.0], m: 1.0 };
        let cfg = SimConfig::new(0.1, 10.0, 0, vec![-1.0, 0.5]);
        let ctrl = MarkovControl::Constant(ControlPoint::vertex(2, 1, 0, 0));
        let est = estimate_ergodic_cost(&form, &ctrl, &spec, None, &cfg).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = SimConfig::new(0.1, 1.0, 0, vec![0.0]);
        cfg.batches = 5;
        assert!(cfg.validate(1).is_err());
        let cfg = SimConfig::new(-0.1, 1.0, 0, vec![0.0]);
        assert!(cfg.validate(1).is_err());
    }

    #[test]
    fn batch_means_of_constant() {
        let e = batch_means(&[2.0; 30]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.half_width, 0.0);
    }
}
