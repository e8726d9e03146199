//! Grid solvers for the ergodic, discounted, constrained and fair HJB problems.
//!
//! The generator is replaced by a monotone Markov-chain approximation on a box;
//! the boundary ring is pinned to a stabilizing fallback control.

pub mod banded;
pub mod chain;
mod constrained;
mod ergodic;
pub mod grid;
mod linear;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{fair_lagrangian, lagrangian, running_cost, ConstraintSpec, CostError, CostSpec, Multipliers};
use crate::elimination::ControlPoint;

pub use constrained::{solve_constrained, solve_fair, DualOptions};
pub use ergodic::{
    evaluate_policy, greedy_policy, solve_discounted, solve_ergodic, solve_ergodic_with, DiscountedSolution,
    Evaluation, HjbOptions, Initial,
};
pub use grid::{Grid, GridPolicy, GridSpec};

#[derive(Debug, Error, Clone)]
pub enum HjbError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid solver supports at most 4 dimensions and 5e7 cells (dimension {dim}, {cells} cells); use simulation-based policy search instead")]
    DimensionTooLarge { dim: usize, cells: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Option<Box<HjbSolution>>,
    },
    #[error("policy evaluation failed: {0}")]
    SingularEvaluation(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Running cost minimized by the solver.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Cost(CostSpec),
    Constrained {
        spec: CostSpec,
        cons: ConstraintSpec,
        mult: Multipliers,
    },
    Fair {
        spec: CostSpec,
        theta: Vec<f64>,
        mult: Multipliers,
    },
}

impl Objective {
    pub fn spec(&self) -> &CostSpec {
        match self {
            Self::Cost(s) => s,
            Self::Constrained { spec, .. } | Self::Fair { spec, .. } => spec,
        }
    }

    pub fn eval(&self, x: &[f64], u: &ControlPoint) -> f64 {
        match self {
            Self::Cost(s) => running_cost(s, x, u),
            Self::Constrained { spec, cons, mult } => lagrangian(spec, cons, mult, x, u),
            Self::Fair { spec, theta, mult } => fair_lagrangian(spec, theta, mult, x, u),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbSolution {
    pub radius: f64,
    pub h: f64,
    pub nodes_per_dim: usize,
    /// Relative value function with `V(0) = 0`, first coordinate fastest.
    pub v: Vec<f64>,
    /// Optimal average cost; for constrained and fair problems the average of
    /// the unconstrained running cost under the returned policy.
    pub rho: f64,
    pub policy: Vec<ControlPoint>,
    pub fallback: ControlPoint,
    pub multipliers: Option<Multipliers>,
    /// Average of the Lagrangian running cost, when one was used.
    pub dual_value: Option<f64>,
    /// Stationary averages of each pool's idleness cost under the policy.
    pub idleness: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub rho_history: Vec<f64>,
}

impl HjbSolution {
    pub fn grid(&self) -> Grid {
        Grid::new(self.policy_dim(), self.radius, self.h).expect("grid was valid when solved")
    }

    fn policy_dim(&self) -> usize {
        self.fallback.uc.len()
    }

    pub fn grid_policy(&self) -> GridPolicy {
        GridPolicy {
            grid: self.grid(),
            controls: self.policy.clone(),
            fallback: self.fallback.clone(),
        }
    }

    /// Value at the node nearest `x`.
    pub fn value_at(&self, x: &[f64]) -> Option<f64> {
        self.grid().nearest(x).map(|c| self.v[c])
    }
}
