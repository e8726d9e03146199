//! Running costs of the ergodic problems and the Lagrangian of the
//! idleness-constrained problem.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elimination::ControlPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
    #[error("cost exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    /// Queue weights `xi`, strictly positive.
    pub q_weights: Vec<f64>,
    /// Idleness weights `zeta`, nonnegative.
    pub i_weights: Vec<f64>,
    pub m: f64,
}

impl CostSpec {
    pub fn validate(&self, num_classes: usize, num_pools: usize) -> Result<(), CostError> {
        if self.q_weights.len() != num_classes || self.i_weights.len() != num_pools {
            return Err(CostError::InvalidWeights(format!(
                "expected {num_classes} queue and {num_pools} idleness weights"
            )));
        }
        if self.q_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(CostError::InvalidWeights("queue weights must be positive".into()));
        }
        if self.i_weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(CostError::InvalidWeights("idleness weights must be nonnegative".into()));
        }
        if !(self.m >= 1.0) {
            return Err(CostError::InvalidExponent(self.m));
        }
        Ok(())
    }

    /// Same queue weights and exponent with idleness weights set to zero.
    pub fn without_idleness(&self) -> Self {
        Self {
            i_weights: vec![0.0; self.i_weights.len()],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    /// Idleness budgets, one per pool.
    pub delta: Vec<f64>,
    /// Target idleness shares for fair allocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

impl ConstraintSpec {
    pub fn validate(&self, num_pools: usize) -> Result<(), CostError> {
        if self.delta.len() != num_pools {
            return Err(CostError::InvalidConstraint(format!("expected {num_pools} budgets")));
        }
        if self.delta.iter().any(|&d| !(d > 0.0)) {
            return Err(CostError::InvalidConstraint("budgets must be positive".into()));
        }
        if let Some(theta) = &self.theta {
            validate_theta(theta, num_pools)?;
        }
        Ok(())
    }
}

/// `theta` must lie in the interior of the simplex.
pub fn validate_theta(theta: &[f64], num_pools: usize) -> Result<(), CostError> {
    if theta.len() != num_pools {
        return Err(CostError::InvalidConstraint(format!("theta must have {num_pools} entries")));
    }
    if theta.iter().any(|&t| !(t > 0.0)) {
        return Err(CostError::InvalidConstraint("theta must be strictly positive".into()));
    }
    let s: f64 = theta.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(CostError::InvalidConstraint(format!("theta sums to {s}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub lam: Vec<f64>,
}

fn split(x: &[f64]) -> (f64, f64) {
    let s: f64 = x.iter().sum();
    (s.max(0.0), (-s).max(0.0))
}

/// `[(e.x)^+]^m sum_i xi_i (u^c_i)^m + [(e.x)^-]^m sum_j zeta_j (u^s_j)^m`.
pub fn running_cost(spec: &CostSpec, x: &[f64], u: &ControlPoint) -> f64 {
    let (sp, sm) = split(x);
    let m = spec.m;
    if sp > 0.0 {
        let w: f64 = spec.q_weights.iter().zip(&u.uc).map(|(xi, v)| xi * v.powf(m)).sum();
        sp.powf(m) * w
    } else if sm > 0.0 {
        let w: f64 = spec.i_weights.iter().zip(&u.us).map(|(z, v)| z * v.powf(m)).sum();
        sm.powf(m) * w
    } else {
        0.0
    }
}

/// `[(e.x)^- u^s_j]^m`.
pub fn idleness_cost(j: usize, m: f64, x: &[f64], u: &ControlPoint) -> f64 {
    let (_, sm) = split(x);
    if sm == 0.0 {
        return 0.0;
    }
    (sm * u.us[j]).powf(m)
}

/// `r_0 + sum_j lambda_j (r_j - delta_j)`.
pub fn lagrangian(spec: &CostSpec, cons: &ConstraintSpec, mult: &Multipliers, x: &[f64], u: &ControlPoint) -> f64 {
    let r0 = running_cost(spec, x, u);
    r0 + mult
        .lam
        .iter()
        .zip(&cons.delta)
        .enumerate()
        .map(|(j, (l, d))| l * (idleness_cost(j, spec.m, x, u) - d))
        .sum::<f64>()
}

/// `r_0 + sum_{j < J} lambda_j (r_j - theta_j sum_k r_k)`; the multipliers are
/// sign-unrestricted and there is one fewer than pools.
pub fn fair_lagrangian(spec: &CostSpec, theta: &[f64], mult: &Multipliers, x: &[f64], u: &ControlPoint) -> f64 {
    let r0 = running_cost(spec, x, u);
    let r: Vec<f64> = (0..theta.len()).map(|j| idleness_cost(j, spec.m, x, u)).collect();
    let total: f64 = r.iter().sum();
    r0 + mult
        .lam
        .iter()
        .enumerate()
        .map(|(j, l)| l * (r[j] - theta[j] * total))
        .sum::<f64>()
}
