//! Browser bindings: analyse a model, solve its ergodic control problem on a
//! small grid, and simulate a diffusion path. Every call takes and returns
//! JSON text so the page needs no glue beyond `JSON.parse`.

use hwctrl::config::ModelSpec;
use hwctrl::elimination::{extract_drift_form, ControlPoint, GMap};
use hwctrl::hjb::{solve_ergodic, GridSpec, Objective};
use hwctrl::network::Network;
use hwctrl::plan::{solve_static_plan, StaticPlan};
use hwctrl::sim::{estimate_ergodic_cost, simulate_path, MarkovControl, SimConfig};
use hwctrl::stability::{scan_cones, stability_certificate, stabilizing_control};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest grid the page will solve; keeps the tab responsive.
pub const MAX_CELLS: usize = 40_000;
const PATH_ROWS: u64 = 2_000;

fn load(spec: &str) -> Result<(ModelSpec, Network, StaticPlan), String> {
    let model = ModelSpec::from_json(spec).map_err(|e| e.to_string())?;
    let net = model.network().map_err(|e| e.to_string())?;
    let plan = solve_static_plan(&net).map_err(|e| e.to_string())?;
    Ok((model, net, plan))
}

fn to_text<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data")
}

pub fn analyze_json(spec: &str) -> Result<String, String> {
    let (model, net, plan) = load(spec)?;
    let form = extract_drift_form(&net, &plan).map_err(|e| e.to_string())?;
    let g = GMap::new(&net);
    let psi: Vec<String> = net
        .edges()
        .iter()
        .zip(&g.elimination().psi)
        .map(|(e, f)| format!("Psi[{},{}] = {f}", e.class + 1, e.pool + 1))
        .collect();
    let m = model.cost_or_default().m;
    let cert = stability_certificate(&net, &plan, m).map_err(|e| e.to_string());
    let cone = |two| scan_cones(&form, two, m, 256).map(|_| true).unwrap_or(false);
    Ok(to_text(&json!({
        "classes": net.num_classes(),
        "pools": net.num_pools(),
        "x_star": plan.x_star,
        "z_star": plan.z_star,
        "ell": plan.ell,
        "psi": psi,
        "b1": form.b1,
        "b2": form.b2,
        "gamma": form.gamma,
        "certificate": cert.as_ref().ok(),
        "certificate_error": cert.as_ref().err(),
        "cone_two_sided": cone(true),
        "cone_one_sided": cone(false),
    })))
}

pub fn solve_json(spec: &str, radius: f64, h: f64) -> Result<String, String> {
    let (model, net, plan) = load(spec)?;
    let dim = net.num_classes();
    if dim > 2 {
        return Err("the browser demo solves one- and two-class models only".into());
    }
    if !(h > 0.0) || !(radius > h) {
        return Err("need 0 < mesh < radius".into());
    }
    let cells = ((2.0 * radius / h).round() as usize + 1).pow(dim as u32);
    if cells > MAX_CELLS {
        return Err(format!("{cells} grid cells; the page allows {MAX_CELLS}, use the CLI for finer grids"));
    }
    let form = extract_drift_form(&net, &plan).map_err(|e| e.to_string())?;
    let fallback = stabilizing_control(&net).map_err(|e| e.to_string())?;
    let g = GridSpec { radius, h, fallback };
    let sol = solve_ergodic(&form, &Objective::Cost(model.cost_or_default()), &g).map_err(|e| e.to_string())?;
    // one label per cell: the class that queues and the pool that idles
    let label = |u: &ControlPoint| {
        let arg = |v: &[f64]| v.iter().enumerate().fold(0, |b, (k, &x)| if x > v[b] { k } else { b });
        (arg(&u.uc) + 1, arg(&u.us) + 1)
    };
    Ok(to_text(&json!({
        "rho": sol.rho,
        "dim": dim,
        "nodes": sol.nodes_per_dim,
        "radius": radius,
        "h": h,
        "v": sol.v,
        "queue_class": sol.policy.iter().map(|u| label(u).0).collect::<Vec<_>>(),
        "idle_pool": sol.policy.iter().map(|u| label(u).1).collect::<Vec<_>>(),
        "iterations": sol.iterations,
        "rho_history": sol.rho_history,
    })))
}

pub fn simulate_json(spec: &str, horizon: f64, dt: f64, seed: u64) -> Result<String, String> {
    let (model, net, plan) = load(spec)?;
    let form = extract_drift_form(&net, &plan).map_err(|e| e.to_string())?;
    let ctrl = MarkovControl::Constant(stabilizing_control(&net).map_err(|e| e.to_string())?);
    let cost = model.cost_or_default();
    let cfg = SimConfig::new(dt, horizon, seed, vec![0.0; net.num_classes()]);
    let est = estimate_ergodic_cost(&form, &ctrl, &cost, None, &cfg).map_err(|e| e.to_string())?;
    let stride = (cfg.steps() / PATH_ROWS).max(1);
    let path = simulate_path(&form, &ctrl, &cost, &cfg, stride).map_err(|e| e.to_string())?;
    Ok(to_text(&json!({ "cost": est.mean, "half_width": est.half_width, "path": path })))
}

/// Plan, drift matrices, symbolic `Psi`, stability certificate and cone checks.
#[wasm_bindgen]
pub fn analyze(spec: &str) -> Result<String, JsError> {
    analyze_json(spec).map_err(|e| JsError::new(&e))
}

/// Ergodic HJB solution on the box `[-radius, radius]^I` with spacing `h`.
#[wasm_bindgen]
pub fn solve(spec: &str, radius: f64, h: f64) -> Result<String, JsError> {
    solve_json(spec, radius, h).map_err(|e| JsError::new(&e))
}

/// Euler–Maruyama path under the stabilizing control, with its average cost.
#[wasm_bindgen]
pub fn simulate(spec: &str, horizon: f64, dt: f64, seed: u32) -> Result<String, JsError> {
    simulate_json(spec, horizon, dt, seed as u64).map_err(|e| JsError::new(&e))
}
