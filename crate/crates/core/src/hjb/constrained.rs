//! Lagrangian dual iterations for idleness budgets and fair idleness shares.
//!
//! The dual function of the discretized problem is piecewise linear, so plain
//! subgradient ascent stalls next to a kink. After a short subgradient phase
//! each multiplier is bracketed and bisected, and the primal solution is
//! recovered by mixing the policies on both sides of the bracket.

use crate::cost::{validate_theta, ConstraintSpec, CostSpec, Multipliers};
use crate::elimination::{ControlPoint, DriftForm};
use crate::stability::scan_cones;

use super::ergodic::{Evaluation, HjbOptions, Initial, Problem};
use super::grid::GridSpec;
use super::{HjbError, HjbSolution, Objective};

#[derive(Debug, Clone, PartialEq)]
pub struct DualOptions {
    pub hjb: HjbOptions,
    /// Relative tolerance on constraint violation.
    pub tol: f64,
    pub subgradient_steps: usize,
    pub bisection_steps: usize,
    pub sweeps: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            hjb: HjbOptions::default(),
            tol: 0.005,
            subgradient_steps: 10,
            bisection_steps: 60,
            sweeps: 4,
        }
    }
}

type Solved = (HjbSolution, Evaluation, Vec<ControlPoint>);

fn solve_with(form: &DriftForm, grid: &GridSpec, objective: Objective, opts: &HjbOptions, warm: Option<&[ControlPoint]>) -> Result<Solved, HjbError> {
    let p = Problem::new(form, grid, &objective)?;
    let mut o = opts.clone();
    if let Some(w) = warm {
        o.initial = Initial::Policy(w.to_vec());
    }
    let (sol, ev) = p.policy_iteration(&o)?;
    let pol = sol.policy.clone();
    Ok((sol, ev, pol))
}

fn mix(a: &[ControlPoint], b: &[ControlPoint], t: f64) -> Vec<ControlPoint> {
    a.iter().zip(b).map(|(x, y)| x.lerp(y, t)).collect()
}

fn check_zero_idleness_weights(spec: &CostSpec) -> Result<(), HjbError> {
    if spec.i_weights.iter().any(|&z| z != 0.0) {
        return Err(HjbError::InvalidInput("constrained problems require zero idleness weights".into()));
    }
    Ok(())
}

/// Finds `t` in `[0, 1]` with `g(mix(lo, hi, t)) = 0`, given `g(lo) > 0 > g(hi)`.
fn mix_bisect(
    p: &Problem<'_>,
    lo: &[ControlPoint],
    hi: &[ControlPoint],
    g: impl Fn(&Evaluation) -> f64,
    steps: usize,
    tol: f64,
) -> Result<(Vec<ControlPoint>, Evaluation), HjbError> {
    let (mut a, mut b) = (0.0, 1.0);
    let mut best: Option<(Vec<ControlPoint>, Evaluation, f64)> = None;
    for _ in 0..steps {
        let t = 0.5 * (a + b);
        let pol = mix(lo, hi, t);
        let ev = p.evaluate(&pol)?;
        let gv = g(&ev);
        if best.as_ref().is_none_or(|(_, _, bg)| gv.abs() < bg.abs()) {
            best = Some((pol, ev, gv));
        }
        if gv.abs() <= tol {
            break;
        }
        if gv > 0.0 {
            a = t;
        } else {
            b = t;
        }
    }
    let (pol, ev, _) = best.expect("at least one bisection step");
    Ok((pol, ev))
}

fn finish(p: &Problem<'_>, ev: Evaluation, policy: Vec<ControlPoint>, mult: Vec<f64>, iterations: usize, history: Vec<f64>) -> HjbSolution {
    let dual = ev.rho;
    let cost = ev.cost;
    let mut sol = p.solution(ev, policy, iterations, history);
    sol.rho = cost;
    sol.dual_value = Some(dual);
    sol.multipliers = Some(Multipliers { lam: mult });
    sol
}

/// Ergodic control under idleness budgets `pi(r_j) <= delta_j`.
pub fn solve_constrained(
    form: &DriftForm,
    spec: &CostSpec,
    cons: &ConstraintSpec,
    grid: &GridSpec,
    opts: &DualOptions,
) -> Result<HjbSolution, HjbError> {
    let (ni, nj) = (form.num_classes(), form.num_pools());
    spec.validate(ni, nj)?;
    check_zero_idleness_weights(spec)?;
    cons.validate(nj)?;
    let delta = &cons.delta;
    let objective = |lam: &[f64]| Objective::Constrained {
        spec: spec.clone(),
        cons: cons.clone(),
        mult: Multipliers { lam: lam.to_vec() },
    };

    // feasibility probe over constant vertex controls
    let base = objective(&vec![0.0; nj]);
    let probe = Problem::new(form, grid, &base)?;
    let n = probe.grid.len();
    let mut feasible = false;
    for i in 0..ni {
        for j in 0..nj {
            let u = ControlPoint::vertex(ni, nj, i, j);
            let ev = probe.evaluate(&vec![u; n])?;
            if ev.idleness.iter().zip(delta).all(|(r, d)| r < d) {
                feasible = true;
            }
        }
    }
    if !feasible {
        return Err(HjbError::Infeasible("no constant vertex control meets the idleness budgets".into()));
    }

    let violation = |ev: &Evaluation, j: usize| ev.idleness[j] - delta[j];
    let satisfied = |ev: &Evaluation, lam: &[f64]| {
        (0..nj).all(|j| {
            let v = violation(ev, j);
            v <= opts.tol * delta[j] && (lam[j] == 0.0 || v >= -opts.tol * delta[j])
        })
    };

    let mut lam = vec![0.0; nj];
    let mut history = Vec::new();
    let mut iterations = 0;
    let (mut sol, mut ev, mut pol) = solve_with(form, grid, objective(&lam), &opts.hjb, None)?;
    iterations += sol.iterations;
    history.push(ev.cost);
    if satisfied(&ev, &lam) {
        let obj = objective(&lam);
        let p = Problem::new(form, grid, &obj)?;
        return Ok(finish(&p, ev, pol, lam, iterations, history));
    }

    // projected subgradient warm-up
    let scale = ev.cost.abs().max(1.0) / delta.iter().cloned().fold(f64::INFINITY, f64::min);
    for k in 1..=opts.subgradient_steps {
        let step = scale / (k as f64).sqrt();
        for j in 0..nj {
            lam[j] = (lam[j] + step * violation(&ev, j) / delta[j]).max(0.0);
        }
        (sol, ev, pol) = solve_with(form, grid, objective(&lam), &opts.hjb, Some(&pol))?;
        iterations += sol.iterations;
        history.push(ev.cost);
        if satisfied(&ev, &lam) {
            let obj = objective(&lam);
        let p = Problem::new(form, grid, &obj)?;
            return Ok(finish(&p, ev, pol, lam, iterations, history));
        }
    }

    // coordinate bisection with policy mixing
    let mut bracket: Option<(usize, Vec<ControlPoint>, Vec<ControlPoint>)> = None;
    for _ in 0..opts.sweeps {
        for j in 0..nj {
            let f = violation(&ev, j);
            let ok = f.abs() <= opts.tol * delta[j] || (f < 0.0 && lam[j] == 0.0);
            if ok {
                continue;
            }
            let eval_at = |l: f64, warm: &[ControlPoint]| -> Result<Solved, HjbError> {
                let mut trial = lam.clone();
                trial[j] = l;
                solve_with(form, grid, objective(&trial), &opts.hjb, Some(warm))
            };
            let (mut lo, mut hi);
            let (mut lo_s, mut hi_s);
            if f > 0.0 {
                lo = lam[j];
                lo_s = (sol.clone(), ev.clone(), pol.clone());
                hi = (2.0 * lam[j]).max(scale);
                hi_s = eval_at(hi, &pol)?;
                let mut guard = 0;
                while violation(&hi_s.1, j) > 0.0 {
                    lo = hi;
                    lo_s = hi_s;
                    hi *= 2.0;
                    hi_s = eval_at(hi, &lo_s.2)?;
                    guard += 1;
                    if guard > 60 {
                        return Err(HjbError::Infeasible(format!("budget of pool {} cannot be met", j + 1)));
                    }
                }
            } else {
                hi = lam[j];
                hi_s = (sol.clone(), ev.clone(), pol.clone());
                lo = 0.0;
                lo_s = eval_at(0.0, &pol)?;
                if violation(&lo_s.1, j) <= 0.0 {
                    lam[j] = 0.0;
                    (sol, ev, pol) = lo_s;
                    continue;
                }
            }
            for _ in 0..opts.bisection_steps {
                let mid = 0.5 * (lo + hi);
                let s = eval_at(mid, &hi_s.2)?;
                iterations += s.0.iterations;
                let v = violation(&s.1, j);
                if v > 0.0 {
                    lo = mid;
                    lo_s = s;
                } else {
                    hi = mid;
                    hi_s = s;
                }
                if v.abs() <= opts.tol * delta[j] || hi - lo <= 1e-12 * hi.max(1.0) {
                    break;
                }
            }
            lam[j] = hi;
            bracket = Some((j, lo_s.2.clone(), hi_s.2.clone()));
            (sol, ev, pol) = hi_s;
            history.push(ev.cost);
        }
        if satisfied(&ev, &lam) {
            break;
        }
    }

    let obj = objective(&lam);
        let p = Problem::new(form, grid, &obj)?;
    if let Some((j, lo_pol, hi_pol)) = bracket {
        let f = violation(&ev, j);
        if f < -opts.tol * delta[j] && lam[j] > 0.0 {
            let (mixed, mev) = mix_bisect(&p, &lo_pol, &hi_pol, |e| e.idleness[j] - delta[j], opts.bisection_steps, 1e-6 * delta[j])?;
            pol = mixed;
            ev = mev;
            history.push(ev.cost);
        }
    }
    if !satisfied(&ev, &lam) {
        let residual = (0..nj).map(|j| violation(&ev, j).max(0.0) / delta[j]).fold(0.0, f64::max);
        let best = finish(&p, ev, pol, lam, iterations, history);
        return Err(HjbError::NoConvergence {
            iterations,
            residual,
            best: Some(Box::new(best)),
        });
    }
    Ok(finish(&p, ev, pol, lam, iterations, history))
}

/// Ergodic control with idleness shares `pi(r_j) = theta_j sum_k pi(r_k)`.
pub fn solve_fair(
    form: &DriftForm,
    spec: &CostSpec,
    theta: &[f64],
    grid: &GridSpec,
    opts: &DualOptions,
) -> Result<HjbSolution, HjbError> {
    let (ni, nj) = (form.num_classes(), form.num_pools());
    spec.validate(ni, nj)?;
    check_zero_idleness_weights(spec)?;
    validate_theta(theta, nj)?;
    if nj < 2 {
        return Err(HjbError::InvalidInput("fair allocation needs at least two pools".into()));
    }
    scan_cones(form, false, spec.m, 256)
        .map_err(|e| HjbError::Infeasible(format!("one-sided cone check failed: {e}")))?;

    let objective = |lam: &[f64]| Objective::Fair {
        spec: spec.clone(),
        theta: theta.to_vec(),
        mult: Multipliers { lam: lam.to_vec() },
    };
    let gap = |ev: &Evaluation, j: usize| {
        let total: f64 = ev.idleness.iter().sum();
        ev.idleness[j] - theta[j] * total
    };
    let tol_of = |ev: &Evaluation| opts.tol * ev.idleness.iter().sum::<f64>().max(1e-300);
    let satisfied = |ev: &Evaluation| (0..nj - 1).all(|j| gap(ev, j).abs() <= tol_of(ev));

    let mut lam = vec![0.0; nj - 1];
    let mut iterations = 0;
    let mut history = Vec::new();
    let (mut sol, mut ev, mut pol) = solve_with(form, grid, objective(&lam), &opts.hjb, None)?;
    iterations += sol.iterations;
    history.push(ev.cost);
    if ev.idleness.iter().sum::<f64>() <= 0.0 {
        return Err(HjbError::Infeasible("the policy never idles any pool".into()));
    }
    let scale = ev.cost.abs().max(1.0) / ev.idleness.iter().sum::<f64>();

    let mut bracket: Option<(usize, Vec<ControlPoint>, Vec<ControlPoint>)> = None;
    for _ in 0..opts.sweeps {
        if satisfied(&ev) {
            break;
        }
        for j in 0..nj - 1 {
            let f = gap(&ev, j);
            if f.abs() <= tol_of(&ev) {
                continue;
            }
            let eval_at = |l: f64, warm: &[ControlPoint]| -> Result<Solved, HjbError> {
                let mut trial = lam.clone();
                trial[j] = l;
                solve_with(form, grid, objective(&trial), &opts.hjb, Some(warm))
            };
            // the gap decreases in lambda_j: raising it penalizes pool j idleness
            let (mut lo, mut hi) = (lam[j], lam[j]);
            let (mut lo_s, mut hi_s) = ((sol.clone(), ev.clone(), pol.clone()), (sol.clone(), ev.clone(), pol.clone()));
            let mut width = scale;
            let mut guard = 0;
            if f > 0.0 {
                loop {
                    hi = lam[j] + width;
                    hi_s = eval_at(hi, &pol)?;
                    if gap(&hi_s.1, j) <= 0.0 {
                        break;
                    }
                    lo = hi;
                    lo_s = hi_s.clone();
                    width *= 2.0;
                    guard += 1;
                    if guard > 60 {
                        return Err(HjbError::Infeasible(format!("share of pool {} cannot be lowered to theta", j + 1)));
                    }
                }
            } else {
                loop {
                    lo = lam[j] - width;
                    lo_s = eval_at(lo, &pol)?;
                    if gap(&lo_s.1, j) >= 0.0 {
                        break;
                    }
                    hi = lo;
                    hi_s = lo_s.clone();
                    width *= 2.0;
                    guard += 1;
                    if guard > 60 {
                        return Err(HjbError::Infeasible(format!("share of pool {} cannot be raised to theta", j + 1)));
                    }
                }
            }
            for _ in 0..opts.bisection_steps {
                let mid = 0.5 * (lo + hi);
                let s = eval_at(mid, &hi_s.2)?;
                iterations += s.0.iterations;
                let g = gap(&s.1, j);
                if g > 0.0 {
                    lo = mid;
                    lo_s = s;
                } else {
                    hi = mid;
                    hi_s = s;
                }
                if g.abs() <= tol_of(&hi_s.1) || hi - lo <= 1e-12 * hi.abs().max(1.0) {
                    break;
                }
            }
            let use_hi = gap(&hi_s.1, j).abs() <= gap(&lo_s.1, j).abs();
            lam[j] = if use_hi { hi } else { lo };
            bracket = Some((j, lo_s.2.clone(), hi_s.2.clone()));
            (sol, ev, pol) = if use_hi { hi_s } else { lo_s };
            history.push(ev.cost);
        }
    }

    let obj = objective(&lam);
        let p = Problem::new(form, grid, &obj)?;
    if !satisfied(&ev) {
        if let Some((j, lo_pol, hi_pol)) = bracket {
            let (mixed, mev) = mix_bisect(&p, &lo_pol, &hi_pol, |e| gap(e, j), opts.bisection_steps, 1e-6 * tol_of(&ev) / opts.tol)?;
            pol = mixed;
            ev = mev;
            history.push(ev.cost);
        }
    }
    let _ = sol;
    if !satisfied(&ev) {
        let total: f64 = ev.idleness.iter().sum();
        let residual = (0..nj - 1).map(|j| gap(&ev, j).abs() / total).fold(0.0, f64::max);
        let best = finish(&p, ev, pol, lam, iterations, history);
        return Err(HjbError::NoConvergence {
            iterations,
            residual,
            best: Some(Box::new(best)),
        });
    }
    Ok(finish(&p, ev, pol, lam, iterations, history))
}
