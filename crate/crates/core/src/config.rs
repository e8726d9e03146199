//! The JSON model file: network plus optional cost, constraint and grid settings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{ConstraintSpec, CostSpec};
use crate::network::{validate_network, ClassSpec, EdgeSpec, Network, NetworkError, NetworkSpec, PoolSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("bad override '{0}': {1}")]
    Override(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDefaults {
    pub radius: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub classes: Vec<ClassSpec>,
    pub pools: Vec<PoolSpec>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDefaults>,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            classes: self.classes.clone(),
            pools: self.pools.clone(),
            edges: self.edges.clone(),
        }
    }

    pub fn network(&self) -> Result<Network, NetworkError> {
        validate_network(&self.network_spec())
    }

    /// The cost block, or unit queue weights with no idleness penalty and `m = 1`.
    pub fn cost_or_default(&self) -> CostSpec {
        self.cost.clone().unwrap_or_else(|| CostSpec {
            q_weights: vec![1.0; self.classes.len()],
            i_weights: vec![0.0; self.pools.len()],
            m: 1.0,
        })
    }
}

fn index(parts: &[&str], k: usize, len: usize) -> Result<usize, String> {
    let raw = parts.get(k).ok_or("missing index")?;
    let i: usize = raw.parse().map_err(|_| format!("index '{raw}' is not a number"))?;
    if i == 0 || i > len {
        return Err(format!("index {i} out of range 1..={len}"));
    }
    Ok(i - 1)
}

impl ModelSpec {
    /// Applies a `key=value` override. Indices are 1-based: `lambda.2=1.5`,
    /// `mu.1.2=3`, `xi.1`, `zeta.2`, `delta.1`, `theta.2`, plus the scalars
    /// `m`, `radius` and `h`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let fail = |msg: String| ConfigError::Override(assignment.to_string(), msg);
        let (key, value) = assignment.split_once('=').ok_or_else(|| fail("expected key=value".into()))?;
        let v: f64 = value.trim().parse().map_err(|_| fail(format!("'{value}' is not a number")))?;
        let parts: Vec<&str> = key.trim().split('.').collect();
        let (ni, nj) = (self.classes.len(), self.pools.len());
        let slot: &mut f64 = match parts[0] {
            "lambda" => &mut self.classes[index(&parts, 1, ni).map_err(fail)?].lambda,
            "lambda_hat" => &mut self.classes[index(&parts, 1, ni).map_err(fail)?].lambda_hat,
            "gamma" => &mut self.classes[index(&parts, 1, ni).map_err(fail)?].gamma,
            "nu" => &mut self.pools[index(&parts, 1, nj).map_err(fail)?].nu,
            "mu" | "mu_hat" => {
                let i = index(&parts, 1, ni).map_err(fail)? + 1;
                let j = index(&parts, 2, nj).map_err(fail)? + 1;
                let e = self
                    .edges
                    .iter_mut()
                    .find(|e| e.class == i && e.pool == j)
                    .ok_or_else(|| fail(format!("no activity ({i},{j})")))?;
                if parts[0] == "mu" {
                    &mut e.mu
                } else {
                    &mut e.mu_hat
                }
            }
            "xi" | "zeta" | "m" => {
                let default = self.cost_or_default();
                let cost = self.cost.get_or_insert(default);
                match parts[0] {
                    "xi" => &mut cost.q_weights[index(&parts, 1, ni).map_err(fail)?],
                    "zeta" => &mut cost.i_weights[index(&parts, 1, nj).map_err(fail)?],
                    _ => &mut cost.m,
                }
            }
            "delta" | "theta" => {
                let cons = self
                    .constraints
                    .get_or_insert_with(|| ConstraintSpec { delta: vec![f64::MAX; nj], theta: None });
                let j = index(&parts, 1, nj).map_err(fail)?;
                if parts[0] == "delta" {
                    &mut cons.delta[j]
                } else {
                    &mut cons.theta.get_or_insert_with(|| vec![1.0 / nj as f64; nj])[j]
                }
            }
            "radius" | "h" => {
                let grid = self.grid.get_or_insert(GridDefaults { radius: 8.0, h: 0.25 });
                if parts[0] == "radius" {
                    &mut grid.radius
                } else {
                    &mut grid.h
                }
            }
            other => return Err(fail(format!("unknown key '{other}'"))),
        };
        *slot = v;
        Ok(())
    }
}
