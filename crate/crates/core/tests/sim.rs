mod common;

use common::{inverted_v_drift, model, Density1d};
use hwctrl::cost::CostSpec;
use hwctrl::elimination::{ControlPoint, DriftForm};
use hwctrl::sim::{estimate_ergodic_cost, replicate, run_path, MarkovControl, SimConfig};
use hwctrl::stability::stabilizing_control;

fn ou_form(lambda: f64, gamma: f64) -> DriftForm {
    DriftForm {
        b1: vec![vec![gamma]],
        b2: vec![vec![0.0]],
        gamma: vec![gamma],
        ell: vec![0.0],
        sigma: vec![(2.0 * lambda).sqrt()],
        perm: vec![0],
    }
}

#[test]
fn ornstein_uhlenbeck_positive_part() {
    let (lambda, gamma) = (1.0, 2.0);
    let form = ou_form(lambda, gamma);
    let spec = CostSpec { q_weights: vec![1.0], i_weights: vec![0.0], m: 1.0 };
    let ctrl = MarkovControl::Constant(ControlPoint::vertex(1, 1, 0, 0));
    let est = estimate_ergodic_cost(&form, &ctrl, &spec, None, &SimConfig::new(0.005, 20_000.0, 4, vec![0.0])).unwrap();
    // stationary law N(0, lambda / gamma)
    let exact = (lambda / gamma).sqrt() / (2.0 * std::f64::consts::PI).sqrt();
    assert!((est.mean - exact).abs() <= est.half_width + 0.005 * exact, "{} ± {} vs {exact}", est.mean, est.half_width);
}

#[test]
fn inverted_v_stationary_law_matches_quadrature() {
    let m = model("inverted_v.json");
    let us = [0.3, 0.7];
    let u = ControlPoint::new(vec![1.0], us.to_vec()).unwrap();
    let density = Density1d::new(inverted_v_drift(1.0, &[1.0, 2.0], &us, 0.0), 2f64.sqrt(), 12.0, 24_000);
    let cfg = SimConfig::new(0.005, 50_000.0, 8, vec![0.0]);
    let mut samples = Vec::new();
    let burn = cfg.burn_steps();
    run_path(&m.form, &MarkovControl::Constant(u), &cfg, |step, x, _| {
        if step >= burn && step % 9 == 0 {
            samples.push(x[0]);
        }
    })
    .unwrap();
    assert!(samples.len() >= 1_000_000);
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let ks = samples
        .iter()
        .enumerate()
        .step_by(97)
        .map(|(k, &x)| {
            let f = density.cdf(x);
            (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS distance {ks}");
}

#[test]
fn confidence_interval_shrinks_with_horizon() {
    let m = model("inverted_v.json");
    let spec = m.spec.cost.clone().unwrap();
    let ctrl = MarkovControl::Constant(ControlPoint::vertex(1, 2, 0, 0));
    let width = |horizon: f64| {
        let w = replicate(8, |r| {
            let cfg = SimConfig::new(0.01, horizon, 100, vec![0.0]).with_stream(r);
            estimate_ergodic_cost(&m.form, &ctrl, &spec, None, &cfg).unwrap().half_width
        });
        w.iter().sum::<f64>() / w.len() as f64
    };
    let ratio = width(8_000.0) / width(4_000.0);
    let target = 1.0 / 2f64.sqrt();
    assert!((ratio - target).abs() <= 0.3 * target, "ratio {ratio}");
}

#[test]
fn halving_the_step_keeps_the_mean_within_the_interval() {
    let m = model("inverted_v.json");
    let spec = m.spec.cost.clone().unwrap();
    let ctrl = MarkovControl::Constant(ControlPoint::vertex(1, 2, 0, 0));
    let a = estimate_ergodic_cost(&m.form, &ctrl, &spec, None, &SimConfig::new(0.01, 20_000.0, 5, vec![0.0])).unwrap();
    let b = estimate_ergodic_cost(&m.form, &ctrl, &spec, None, &SimConfig::new(0.005, 20_000.0, 5, vec![0.0])).unwrap();
    let d = (a.state_mean[0].mean - b.state_mean[0].mean).abs();
    assert!(d < a.state_mean[0].half_width.max(b.state_mean[0].half_width), "{d}");
}

#[test]
fn running_maximum_grows_sublinearly_under_the_stabilizing_control() {
    let m = model("n_model.json");
    let ctrl = MarkovControl::Constant(stabilizing_control(&m.net).unwrap());
    let run_max = |horizon: f64, seed: u64| {
        let cfg = SimConfig::new(0.01, horizon, seed, vec![0.0, 0.0]);
        let burn = cfg.burn_steps();
        let mut top: f64 = 0.0;
        run_path(&m.form, &ctrl, &cfg, |step, x, _| {
            if step >= burn {
                top = top.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        })
        .unwrap();
        top
    };
    for seed in 0..4 {
        let short = run_max(500.0, seed);
        let long = run_max(5_000.0, seed);
        assert!(long < 3.0 * short, "seed {seed}: {short} -> {long}");
    }
}
