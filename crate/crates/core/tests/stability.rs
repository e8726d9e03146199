mod common;

use common::model;
use hwctrl::elimination::random_control;
use hwctrl::sim::{states_at, MarkovControl, SimConfig};
use hwctrl::stability::{
    lyapunov_margin, scan_cones, stability_certificate, verify_geometric_drift, Lyapunov, DEFAULT_RADII,
    DEFAULT_SAMPLES,
};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: [&str; 4] = ["n_model.json", "w_model.json", "m_model.json", "example4.json"];

#[test]
fn certificates_verify_on_golden_networks() {
    for f in GOLDEN {
        let m = model(f);
        for exp in [1.0, 2.0] {
            let cert = stability_certificate(&m.net, &m.plan, exp).unwrap();
            assert!(cert.c_min > 0.0, "{f}");
            let rep = verify_geometric_drift(&m.form, &cert, &DEFAULT_RADII, DEFAULT_SAMPLES).unwrap();
            assert!(rep.violations.is_empty(), "{f}");
            assert!(rep.kappa1 > 0.0);
        }
    }
}

#[test]
fn margin_matches_an_independent_eigen_solver() {
    for f in GOLDEN {
        let m = model(f);
        let cert = stability_certificate(&m.net, &m.plan, 2.0).unwrap();
        let (plus, minus) = m.form.region_matrices(&cert.u_bar);
        for a in [plus, minus] {
            let n = a.len();
            let sym = DMatrix::from_fn(n, n, |r, c| cert.q[r] * a[r][c] + a[c][r] * cert.q[c]);
            // the real Schur form of a symmetric matrix is diagonal
            let eig = sym.schur().eigenvalues().unwrap();
            let oracle = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((lyapunov_margin(&cert.q, &a) - oracle).abs() < 1e-9, "{f}");
        }
    }
}

#[test]
fn quadratic_generator_is_homogeneous() {
    let m = model("w_model.json");
    let cert = stability_certificate(&m.net, &m.plan, 2.0).unwrap();
    let lyap = Lyapunov::new(cert.q.clone(), 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let u = random_control(&mut rng, 3, 2);
        let x: Vec<f64> = (0..3).map(|k| [1.3, -0.4, 0.8][k] * (1.0 + rand::Rng::random::<f64>(&mut rng))).collect();
        let zero = vec![0.0; 3];
        let ell = m.form.eval(&zero, &u);
        let b = m.form.eval(&x, &u);
        let quad: f64 = (0..3).map(|i| 2.0 * cert.q[i] * x[i] * (b[i] - ell[i])).sum();
        let f = |c: f64| {
            let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
            lyap.generator(&cx, &m.form.eval(&cx, &u), &m.form.sigma) - c * c * quad
        };
        let (f1, f2, f4) = (f(1.0), f(2.0), f(4.0));
        // affine in c: equal slopes on [1,2] and [2,4]
        assert!(((f2 - f1) - (f4 - f2) / 2.0).abs() < 1e-9 * (1.0 + f4.abs()));
    }
}

#[test]
fn simulated_moments_respect_the_geometric_bound() {
    let m = model("n_model.json");
    let cert = stability_certificate(&m.net, &m.plan, 2.0).unwrap();
    let lyap = Lyapunov::new(cert.q.clone(), cert.m).unwrap();
    let x0 = vec![3.0, -1.0];
    let cfg = SimConfig::new(0.005, 20.0, 17, x0.clone());
    let times = [1.0, 5.0, 20.0];
    let reps = 100;
    let runs = states_at(&m.form, &MarkovControl::Constant(cert.u_bar.clone()), &cfg, &times, reps).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let vals: Vec<f64> = runs.iter().map(|r| lyap.value(&r[k])).collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let bound = cert.kappa0 / cert.kappa1 + lyap.value(&x0) * (-cert.kappa1 * t).exp();
        assert!(mean <= bound + 3.0 * sd / (reps as f64).sqrt(), "t={t}: {mean} > {bound}");
    }
}

#[test]
fn cone_diagnostics() {
    for f in GOLDEN {
        let m = model(f);
        assert!(scan_cones(&m.form, true, 1.0, 512).is_ok(), "{f} two-sided");
        assert!(scan_cones(&m.form, false, 1.0, 512).is_ok(), "{f} one-sided");
    }
    let sep = model("m_model_separated.json");
    assert!(scan_cones(&sep.form, false, 1.0, 512).is_err());
}
