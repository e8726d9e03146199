//! Policy iteration for the ergodic and discounted problems.

use serde::{Deserialize, Serialize};

use crate::elimination::{ControlPoint, DriftForm};

use super::chain::{cell_rates, Chain};
use super::grid::{Grid, GridSpec};
use super::linear::{average_cost, discounted};
use super::{HjbError, HjbSolution, Objective};

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// Start from the fallback control in every cell.
    Fallback,
    /// Start from the greedy policy for this value array.
    Value(Vec<f64>),
    Policy(Vec<ControlPoint>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjbOptions {
    pub max_iter: usize,
    /// Relative tolerance on the Bellman residual and on changes of `rho`.
    pub tol: f64,
    pub initial: Initial,
}

impl Default for HjbOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-8,
            initial: Initial::Fallback,
        }
    }
}

/// Result of evaluating a fixed policy on the grid chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub v: Vec<f64>,
    /// Average of the objective.
    pub rho: f64,
    pub stationary: Vec<f64>,
    /// Average of the unconstrained running cost.
    pub cost: f64,
    /// Average idleness cost per pool.
    pub idleness: Vec<f64>,
}

pub(crate) struct Problem<'a> {
    pub form: &'a DriftForm,
    pub grid: Grid,
    pub fallback: &'a ControlPoint,
    pub objective: &'a Objective,
    pub points: Vec<Vec<f64>>,
}

impl<'a> Problem<'a> {
    pub fn new(form: &'a DriftForm, spec: &'a GridSpec, objective: &'a Objective) -> Result<Self, HjbError> {
        let dim = form.num_classes();
        if spec.fallback.uc.len() != dim || spec.fallback.us.len() != form.num_pools() {
            return Err(HjbError::InvalidInput("fallback control has the wrong shape".into()));
        }
        spec.fallback
            .check(1e-9)
            .map_err(|e| HjbError::InvalidInput(e.to_string()))?;
        let s = objective.spec();
        s.validate(dim, form.num_pools())?;
        let grid = Grid::new(dim, spec.radius, spec.h)?;
        let points = (0..grid.len()).map(|c| grid.point(c)).collect();
        Ok(Self {
            form,
            grid,
            fallback: &spec.fallback,
            objective,
            points,
        })
    }

    fn control<'p>(&'p self, policy: &'p [ControlPoint], c: usize) -> &'p ControlPoint {
        if self.grid.is_boundary(c) {
            self.fallback
        } else {
            &policy[c]
        }
    }

    pub fn evaluate(&self, policy: &[ControlPoint]) -> Result<Evaluation, HjbError> {
        let chain = Chain::build(self.form, &self.grid, policy, self.fallback);
        let cost: Vec<f64> = (0..self.grid.len())
            .map(|c| self.objective.eval(&self.points[c], self.control(policy, c)))
            .collect();
        let (v, rho, pi) = average_cost(&chain, &cost)?;
        let spec = self.objective.spec();
        let pools = self.form.num_pools();
        let mut base = 0.0;
        let mut idle = vec![0.0; pools];
        for c in 0..self.grid.len() {
            if pi[c] == 0.0 {
                continue;
            }
            let u = self.control(policy, c);
            let x = &self.points[c];
            base += pi[c] * crate::cost::running_cost(spec, x, u);
            for (j, slot) in idle.iter_mut().enumerate() {
                *slot += pi[c] * crate::cost::idleness_cost(j, spec.m, x, u);
            }
        }
        Ok(Evaluation {
            v,
            rho,
            stationary: pi,
            cost: base,
            idleness: idle,
        })
    }

    /// `b(x,u) . grad_h V + r(x,u)` with upwind differences.
    fn hamiltonian(&self, c: usize, v: &[f64], u: &ControlPoint, b: &mut [f64]) -> f64 {
        let x = &self.points[c];
        self.form.eval_into(x, u, b);
        let h = self.grid.h();
        let mut s = self.objective.eval(x, u);
        for (d, &bd) in b.iter().enumerate() {
            if bd > 0.0 {
                if let Some(nb) = self.grid.neighbor(c, d, true) {
                    s += bd * (v[nb] - v[c]) / h;
                }
            } else if bd < 0.0 {
                if let Some(nb) = self.grid.neighbor(c, d, false) {
                    s -= bd * (v[nb] - v[c]) / h;
                }
            }
        }
        s
    }

    fn candidates(&self) -> Vec<ControlPoint> {
        let (ni, nj) = (self.form.num_classes(), self.form.num_pools());
        let mut out = Vec::with_capacity(ni * nj);
        for i in 0..ni {
            for j in 0..nj {
                out.push(ControlPoint::vertex(ni, nj, i, j));
            }
        }
        out
    }

    /// Greedy update; keeps the current control unless another is strictly
    /// better. Returns the number of cells that changed.
    pub fn improve(&self, v: &[f64], policy: &mut [ControlPoint]) -> usize {
        let cands = self.candidates();
        let dim = self.grid.dim();
        let m = self.objective.spec().m;
        let updates: Vec<Option<ControlPoint>> = crate::par_map(self.grid.len(), |c| {
            if self.grid.is_boundary(c) {
                return None;
            }
            let mut b = vec![0.0; dim];
            let cur = self.hamiltonian(c, v, &policy[c], &mut b);
            let mut best = f64::INFINITY;
            let mut arg: Option<ControlPoint> = None;
            for u in &cands {
                let val = self.hamiltonian(c, v, u, &mut b);
                if val < best {
                    best = val;
                    arg = Some(u.clone());
                }
            }
            if m > 1.0 {
                if let Some(u) = self.projected_descent(c, v, &policy[c]) {
                    let val = self.hamiltonian(c, v, &u, &mut b);
                    if val < best {
                        best = val;
                        arg = Some(u);
                    }
                }
            }
            let eps = 1e-12 * (1.0 + best.abs() + cur.abs());
            if cur - best > eps {
                arg
            } else {
                None
            }
        });
        let mut changed = 0;
        for (c, up) in updates.into_iter().enumerate() {
            if let Some(u) = up {
                policy[c] = u;
                changed += 1;
            }
        }
        changed
    }

    /// Projected gradient on whichever simplex affects the cell (the class
    /// simplex above `e.x = 0`, the pool simplex below), 50 steps.
    fn projected_descent(&self, c: usize, v: &[f64], start: &ControlPoint) -> Option<ControlPoint> {
        let s: f64 = self.points[c].iter().sum();
        if s == 0.0 {
            return None;
        }
        let class_side = s > 0.0;
        let mut u = start.clone();
        let mut b = vec![0.0; self.grid.dim()];
        let n = if class_side { u.uc.len() } else { u.us.len() };
        let fd = 1e-7;
        let f0 = self.hamiltonian(c, v, &u, &mut b);
        let mut fcur = f0;
        let mut step = 0.1;
        for _ in 0..50 {
            let mut grad = vec![0.0; n];
            for (k, g) in grad.iter_mut().enumerate() {
                let mut w = u.clone();
                let comp = if class_side { &mut w.uc } else { &mut w.us };
                comp[k] += fd;
                *g = (self.hamiltonian(c, v, &w, &mut b) - fcur) / fd;
            }
            let comp = if class_side { &u.uc } else { &u.us };
            let trial: Vec<f64> = comp.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let proj = project_simplex(&trial);
            let mut w = u.clone();
            if class_side {
                w.uc = proj;
            } else {
                w.us = proj;
            }
            let fw = self.hamiltonian(c, v, &w, &mut b);
            if fw < fcur {
                u = w;
                fcur = fw;
                step *= 1.2;
            } else {
                step *= 0.5;
            }
        }
        (fcur < f0).then_some(u)
    }

    pub fn residual(&self, v: &[f64], rho: f64, policy: &[ControlPoint]) -> f64 {
        let dim = self.grid.dim();
        let mut up = vec![0.0; dim];
        let mut down = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        let mut worst: f64 = 0.0;
        for c in 0..self.grid.len() {
            let u = self.control(policy, c);
            let x = &self.points[c];
            self.form.eval_into(x, u, &mut b);
            cell_rates(&self.grid, c, &b, &self.form.sigma, &mut up, &mut down);
            let mut lv = 0.0;
            for d in 0..dim {
                if let Some(nb) = self.grid.neighbor(c, d, true) {
                    lv += up[d] * (v[nb] - v[c]);
                }
                if let Some(nb) = self.grid.neighbor(c, d, false) {
                    lv += down[d] * (v[nb] - v[c]);
                }
            }
            worst = worst.max((lv + self.objective.eval(x, u) - rho).abs());
        }
        worst
    }

    pub fn initial_policy(&self, init: &Initial) -> Result<Vec<ControlPoint>, HjbError> {
        let n = self.grid.len();
        match init {
            Initial::Fallback => Ok(vec![self.fallback.clone(); n]),
            Initial::Policy(p) => {
                if p.len() != n {
                    return Err(HjbError::InvalidInput("initial policy has the wrong length".into()));
                }
                Ok(p.clone())
            }
            Initial::Value(v) => {
                if v.len() != n {
                    return Err(HjbError::InvalidInput("initial value has the wrong length".into()));
                }
                let mut p = vec![self.fallback.clone(); n];
                self.improve(v, &mut p);
                Ok(p)
            }
        }
    }

    pub fn solution(&self, ev: Evaluation, policy: Vec<ControlPoint>, iterations: usize, history: Vec<f64>) -> HjbSolution {
        let residual = self.residual(&ev.v, ev.rho, &policy);
        let policy = (0..policy.len()).map(|c| self.control(&policy, c).clone()).collect();
        HjbSolution {
            radius: self.grid.radius(),
            h: self.grid.h(),
            nodes_per_dim: self.grid.nodes(),
            v: ev.v,
            rho: ev.rho,
            policy,
            fallback: self.fallback.clone(),
            multipliers: None,
            dual_value: None,
            idleness: ev.idleness,
            residual,
            iterations,
            rho_history: history,
        }
    }

    /// Policy iteration; returns the final evaluation alongside the solution.
    pub fn policy_iteration(&self, opts: &HjbOptions) -> Result<(HjbSolution, Evaluation), HjbError> {
        let mut policy = self.initial_policy(&opts.initial)?;
        let mut history = Vec::new();
        let mut ev = self.evaluate(&policy)?;
        history.push(ev.rho);
        for it in 1..=opts.max_iter {
            let changed = self.improve(&ev.v, &mut policy);
            if changed == 0 {
                let sol = self.solution(ev.clone(), policy, it, history);
                return Ok((sol, ev));
            }
            let next = self.evaluate(&policy)?;
            let drho = (next.rho - ev.rho).abs();
            history.push(next.rho);
            ev = next;
            let scale = 1.0 + ev.rho.abs();
            // continuous-action improvements stop once they no longer move rho
            if self.objective.spec().m > 1.0 && drho <= opts.tol * scale {
                let sol = self.solution(ev.clone(), policy, it, history);
                return Ok((sol, ev));
            }
        }
        let residual = self.residual(&ev.v, ev.rho, &policy);
        let best = self.solution(ev, policy, opts.max_iter, history);
        Err(HjbError::NoConvergence {
            iterations: opts.max_iter,
            residual,
            best: Some(Box::new(best)),
        })
    }
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

pub fn solve_ergodic(form: &DriftForm, objective: &Objective, grid: &GridSpec) -> Result<HjbSolution, HjbError> {
    solve_ergodic_with(form, objective, grid, &HjbOptions::default())
}

pub fn solve_ergodic_with(
    form: &DriftForm,
    objective: &Objective,
    grid: &GridSpec,
    opts: &HjbOptions,
) -> Result<HjbSolution, HjbError> {
    let p = Problem::new(form, grid, objective)?;
    p.policy_iteration(opts).map(|(s, _)| s)
}

/// Average cost of a fixed policy (one control per cell; boundary cells use the fallback).
pub fn evaluate_policy(
    form: &DriftForm,
    objective: &Objective,
    grid: &GridSpec,
    policy: &[ControlPoint],
) -> Result<Evaluation, HjbError> {
    let p = Problem::new(form, grid, objective)?;
    if policy.len() != p.grid.len() {
        return Err(HjbError::InvalidInput("policy has the wrong length".into()));
    }
    p.evaluate(policy)
}

/// Greedy policy with respect to `v`.
pub fn greedy_policy(
    form: &DriftForm,
    objective: &Objective,
    grid: &GridSpec,
    v: &[f64],
) -> Result<Vec<ControlPoint>, HjbError> {
    let p = Problem::new(form, grid, objective)?;
    p.initial_policy(&Initial::Value(v.to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountedSolution {
    pub alpha: f64,
    pub v: Vec<f64>,
    pub policy: Vec<ControlPoint>,
    pub iterations: usize,
}

impl DiscountedSolution {
    pub fn value_at_origin(&self, grid: &GridSpec) -> f64 {
        let g = Grid::new(self.policy[0].uc.len(), grid.radius, grid.h).expect("valid grid");
        self.v[g.origin()]
    }
}

/// Policy iteration for `alpha V = min_u (L^u V + r)`.
pub fn solve_discounted(
    form: &DriftForm,
    objective: &Objective,
    grid: &GridSpec,
    alpha: f64,
) -> Result<DiscountedSolution, HjbError> {
    if !(alpha > 0.0) {
        return Err(HjbError::InvalidInput(format!("discount rate must be positive, got {alpha}")));
    }
    let p = Problem::new(form, grid, objective)?;
    let n = p.grid.len();
    let mut policy = vec![p.fallback.clone(); n];
    let max_iter = 200;
    for it in 1..=max_iter {
        let chain = Chain::build(form, &p.grid, &policy, p.fallback);
        let cost: Vec<f64> = (0..n).map(|c| objective.eval(&p.points[c], p.control(&policy, c))).collect();
        let v = discounted(&chain, &cost, alpha)?;
        if p.improve(&v, &mut policy) == 0 {
            let policy = (0..n).map(|c| p.control(&policy, c).clone()).collect();
            return Ok(DiscountedSolution {
                alpha,
                v,
                policy,
                iterations: it,
            });
        }
    }
    Err(HjbError::NoConvergence {
        iterations: max_iter,
        residual: f64::NAN,
        best: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostSpec;

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.3, 0.3, 0.9]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    fn ou_form() -> DriftForm {
        DriftForm {
            b1: vec![vec![1.0]],
            b2: vec![vec![0.0, 1.0]],
            gamma: vec![1.0],
            ell: vec![0.0],
            sigma: vec![2f64.sqrt()],
            perm: vec![0],
        }
    }

    #[test]
    fn constant_cost_discounted_identity() {
        let grid = Grid::new(1, 2.0, 0.1).unwrap();
        let u = ControlPoint::vertex(1, 2, 0, 0);
        let chain = Chain::build(&ou_form(), &grid, &vec![u.clone(); grid.len()], &u);
        let v = discounted(&chain, &vec![3.0; grid.len()], 0.5).unwrap();
        assert!(v.iter().all(|x| (x - 6.0).abs() < 1e-10));
    }

    #[test]
    fn zero_cost_gives_zero_value() {
        let spec = CostSpec { q_weights: vec![1e-300], i_weights: vec![0.0, 0.0], m: 1.0 };
        let grid = GridSpec { radius: 2.0, h: 0.1, fallback: ControlPoint::vertex(1, 2, 0, 0) };
        let sol = solve_ergodic(&ou_form(), &Objective::Cost(spec), &grid).unwrap();
        assert!(sol.rho.abs() < 1e-250);
        assert!(sol.v.iter().all(|v| v.abs() < 1e-250));
    }
}
