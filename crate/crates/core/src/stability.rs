//! Stabilizing controls, diagonal Lyapunov certificates and sampled checks of
//! the geometric drift condition and of the cone hypothesis.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elimination::{eliminate, eliminate_with_last, extract_drift_form, ControlPoint, DriftError, DriftForm};
use crate::network::Network;
use crate::plan::StaticPlan;
use crate::quasi::QuasiNormal;

/// Target for the smallest eigenvalue of `Q B + B^T Q` after rescaling.
pub const C_MIN_TARGET: f64 = 8.0;
pub const DEFAULT_RADII: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
pub const DEFAULT_SAMPLES: usize = 1024;
pub const DELTA_GRID: [f64; 6] = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01];
const SLACK: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("no class has a positive abandonment rate")]
    NoAbandonment,
    #[error("matrix is not lower triangular in the given order: {0}")]
    NotTriangular(String),
    #[error("diagonal entry {index} is {value}, expected > 0")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("drift inequality violated at x = {x:?} (generator {generator:e})")]
    DriftViolated { x: Vec<f64>, generator: f64 },
    #[error("no positive outer constant found for cone opening {delta}")]
    ConeTooNarrow { delta: f64 },
    #[error("cone opening {delta} must lie in (0, {max})")]
    InvalidCone { delta: f64, max: f64 },
    #[error("moment exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error(transparent)]
    Drift(#[from] DriftError),
}

/// `K_delta = {|e.x| > delta |x|}` when two-sided, else `{e.x > delta |x|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub delta: f64,
    pub two_sided: bool,
}

impl ConeSpec {
    pub fn new(delta: f64, two_sided: bool, dim: usize) -> Result<Self, StabilityError> {
        let max = (dim as f64).sqrt();
        if !(delta > 0.0 && delta < max) {
            return Err(StabilityError::InvalidCone { delta, max });
        }
        Ok(Self { delta, two_sided })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let s: f64 = x.iter().sum();
        let r = norm(x);
        if self.two_sided {
            s.abs() > self.delta * r
        } else {
            s > self.delta * r
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub u_bar: ControlPoint,
    /// Diagonal of `Q`.
    pub q: Vec<f64>,
    pub m: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub c_min: f64,
}

/// `V(x) = phi(x^T Q x)` with `phi(w) = w^{m/2}` for `m >= 2` and the smooth
/// surrogate `phi(w) = w (1 + w)^{m/2 - 1}` for `1 <= m < 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lyapunov {
    pub q: Vec<f64>,
    pub m: f64,
}

impl Lyapunov {
    pub fn new(q: Vec<f64>, m: f64) -> Result<Self, StabilityError> {
        if !(m >= 1.0) {
            return Err(StabilityError::InvalidExponent(m));
        }
        Ok(Self { q, m })
    }

    fn quad(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.q).map(|(xi, qi)| qi * xi * xi).sum()
    }

    /// `(phi, phi', phi'')` at `w`.
    fn phi(&self, w: f64) -> (f64, f64, f64) {
        let h = self.m / 2.0;
        if self.m >= 2.0 {
            if w == 0.0 {
                let d1 = if h == 1.0 { 1.0 } else { 0.0 };
                let d2 = if h == 2.0 { 2.0 } else { 0.0 };
                return (0.0, d1, d2);
            }
            (w.powf(h), h * w.powf(h - 1.0), h * (h - 1.0) * w.powf(h - 2.0))
        } else {
            let p = h - 1.0;
            let a = 1.0 + w;
            (
                w * a.powf(p),
                a.powf(p) + p * w * a.powf(p - 1.0),
                2.0 * p * a.powf(p - 1.0) + p * (p - 1.0) * w * a.powf(p - 2.0),
            )
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.phi(self.quad(x)).0
    }

    /// `b . grad V + 1/2 sum_i sigma_i^2 d_ii V`.
    pub fn generator(&self, x: &[f64], b: &[f64], sigma: &[f64]) -> f64 {
        let (_, d1, d2) = self.phi(self.quad(x));
        let mut out = 0.0;
        for i in 0..x.len() {
            let qx = self.q[i] * x[i];
            out += d1 * 2.0 * qx * b[i];
            out += 0.5 * sigma[i] * sigma[i] * (d2 * 4.0 * qx * qx + d1 * 2.0 * self.q[i]);
        }
        out
    }

    /// Lower bound on the asymptotic decay rate `-LV / V` given
    /// `lambda_min(Q A + A^T Q) >= c_min` for every region matrix `A`.
    pub fn decay_bound(&self, c_min: f64) -> f64 {
        let qmax = self.q.iter().cloned().fold(0.0, f64::max);
        self.m * c_min / (2.0 * qmax)
    }
}

/// The constant control that serves only the final edge of an elimination
/// ending at the first class with abandonment.
pub fn stabilizing_control(net: &Network) -> Result<ControlPoint, StabilityError> {
    let i_hat = net
        .gamma()
        .iter()
        .position(|&g| g > 0.0)
        .ok_or(StabilityError::NoAbandonment)?;
    let elim = eliminate_with_last(net, i_hat);
    Ok(ControlPoint::vertex(net.num_classes(), net.num_pools(), i_hat, elim.j_of[i_hat]))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min_sym(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let m = DMatrix::from_fn(n, n, |r, c| a[r][c]);
    SymmetricEigen::new(m).eigenvalues.min()
}

fn symmetrized(q: &[f64], a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = q.len();
    (0..n)
        .map(|r| (0..n).map(|c| q[r] * a[r][c] + a[c][r] * q[c]).collect())
        .collect()
}

/// `lambda_min(Q A + A^T Q)` for diagonal `Q`.
pub fn lyapunov_margin(q: &[f64], a: &[Vec<f64>]) -> f64 {
    lambda_min_sym(&symmetrized(q, a))
}

fn check_triangular(a: &[Vec<f64>], perm: &[usize]) -> Result<(), StabilityError> {
    let n = perm.len();
    let scale = a.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
    for r in 0..n {
        let d = a[perm[r]][perm[r]];
        if !(d > 0.0) {
            return Err(StabilityError::NonPositiveDiagonal { index: perm[r], value: d });
        }
        for c in r + 1..n {
            let v = a[perm[r]][perm[c]];
            if v.abs() > 1e-10 * scale {
                return Err(StabilityError::NotTriangular(format!(
                    "entry ({}, {}) = {v}",
                    perm[r] + 1,
                    perm[c] + 1
                )));
            }
        }
    }
    Ok(())
}

/// Diagonal `Q` with `lambda_min(Q B + B^T Q) = 8` for a lower-triangular `B`.
pub fn find_lyapunov_q(b1: &[Vec<f64>], perm: &[usize]) -> Result<(Vec<f64>, f64), StabilityError> {
    find_common_lyapunov_q(&[b1.to_vec()], perm)
}

/// A single diagonal `Q` serving every matrix in `mats`, each lower triangular
/// with positive diagonal in the order `perm`.
///
/// Works back to front: with the trailing block already positive definite, the
/// next diagonal entry is made large enough for the Schur complement of the
/// coupling column to stay positive. Returns `Q` rescaled so the smallest
/// margin over all matrices equals 8, together with that margin.
pub fn find_common_lyapunov_q(mats: &[Vec<Vec<f64>>], perm: &[usize]) -> Result<(Vec<f64>, f64), StabilityError> {
    for a in mats {
        check_triangular(a, perm)?;
    }
    let n = perm.len();
    let mut q = vec![0.0; n];
    for k in (0..n).rev() {
        let row = perm[k];
        let mut need: f64 = 0.0;
        for a in mats {
            let diag = a[row][row];
            let trailing: Vec<usize> = perm[k + 1..].to_vec();
            let t = trailing.len();
            let mut schur = 0.0;
            if t > 0 {
                // symmetric part restricted to the trailing block and the coupling column
                let sym = symmetrized(&q, a);
                let block = DMatrix::from_fn(t, t, |r, c| sym[trailing[r]][trailing[c]]);
                let v = nalgebra::DVector::from_fn(t, |r, _| q[trailing[r]] * a[trailing[r]][row]);
                let sol = block
                    .cholesky()
                    .ok_or_else(|| StabilityError::NotTriangular("trailing block lost definiteness".into()))?
                    .solve(&v);
                schur = v.dot(&sol);
            }
            need = need.max((1.0 / diag).max((1.0 + schur) / (2.0 * diag)));
        }
        q[row] = need;
    }
    let margin = mats.iter().map(|a| lyapunov_margin(&q, a)).fold(f64::INFINITY, f64::min);
    if !(margin > 0.0) {
        return Err(StabilityError::NotTriangular(format!("margin {margin} is not positive")));
    }
    let s = C_MIN_TARGET / margin;
    let q: Vec<f64> = q.iter().map(|v| v * s).collect();
    let c_min = mats.iter().map(|a| lyapunov_margin(&q, a)).fold(f64::INFINITY, f64::min);
    Ok((q, c_min))
}

/// Region matrices of the drift under `u` in a common triangular order.
fn region_certificate(form: &DriftForm, u: &ControlPoint, perm: &[usize]) -> Result<(Vec<f64>, f64), StabilityError> {
    let (plus, minus) = form.region_matrices(u);
    find_common_lyapunov_q(&[minus, plus], perm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub kappa0: f64,
    pub kappa1: f64,
    pub samples: usize,
    pub violations: Vec<Vec<f64>>,
    /// Largest value of `LV + kappa1 V` at each radius.
    pub max_by_radius: Vec<(f64, f64)>,
}

/// Points on the sphere of radius `r`: half uniform directions, half
/// concentrated near the switching hyperplane `e.x = 0`.
pub fn sphere_points(dim: usize, r: f64, n: usize, band: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut gen = QuasiNormal::new(dim, seed);
    let mut out = Vec::with_capacity(n);
    let ehat: Vec<f64> = vec![1.0 / (dim as f64).sqrt(); dim];
    for k in 0..n {
        let mut g = gen.next_vec();
        if k % 2 == 1 && dim > 1 {
            // component orthogonal to e, tilted by a small angle
            let proj: f64 = g.iter().zip(&ehat).map(|(a, b)| a * b).sum();
            for (gi, ei) in g.iter_mut().zip(&ehat) {
                *gi -= proj * ei;
            }
            let nn = norm(&g);
            if nn == 0.0 {
                continue;
            }
            let t = band * (2.0 * ((k / 2) as f64 + 0.5) / (n / 2).max(1) as f64 - 1.0);
            let s = t.clamp(-1.0, 1.0);
            let c = (1.0 - s * s).sqrt();
            for (gi, ei) in g.iter_mut().zip(&ehat) {
                *gi = c * *gi / nn + s * ei;
            }
        }
        let nn = norm(&g);
        if nn == 0.0 {
            continue;
        }
        out.push(g.iter().map(|v| r * v / nn).collect());
    }
    out
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Samples `L^u V` on spheres and fits `L^u V <= kappa0 - kappa1 V`.
///
/// `kappa1` is half the certified asymptotic decay rate; `kappa0` is the
/// largest `L V + kappa1 V` seen (including the origin). A sample on the
/// outermost sphere whose linear part does not decay is reported as a violation.
pub fn verify_geometric_drift(
    form: &DriftForm,
    cert: &StabilityCertificate,
    radii: &[f64],
    samples_per_radius: usize,
) -> Result<DriftReport, StabilityError> {
    let lyap = Lyapunov::new(cert.q.clone(), cert.m)?;
    let kappa1 = 0.5 * lyap.decay_bound(cert.c_min);
    let dim = form.num_classes();
    let (plus, minus) = form.region_matrices(&cert.u_bar);
    let origin = vec![0.0; dim];
    let lv0 = lyap.generator(&origin, &form.eval(&origin, &cert.u_bar), &form.sigma);
    let mut kappa0 = lv0;
    let mut violations = Vec::new();
    let mut max_by_radius = Vec::new();
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let mut count = 1;
    for (ri, &r) in radii.iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        for x in sphere_points(dim, r, samples_per_radius, 0.5, ri as u64) {
            let b = form.eval(&x, &cert.u_bar);
            let lv = lyap.generator(&x, &b, &form.sigma);
            let v = lyap.value(&x);
            worst = worst.max(lv + kappa1 * v);
            count += 1;
            if r == rmax {
                let a = if x.iter().sum::<f64>() >= 0.0 { &plus } else { &minus };
                let decay: f64 = (0..dim)
                    .map(|i| cert.q[i] * x[i] * (0..dim).map(|k| a[i][k] * x[k]).sum::<f64>())
                    .sum();
                if decay <= SLACK * lyap.quad(&x) {
                    violations.push(x.clone());
                }
            }
        }
        kappa0 = kappa0.max(worst);
        max_by_radius.push((r, worst));
    }
    if let Some(x) = violations.first() {
        let b = form.eval(x, &cert.u_bar);
        return Err(StabilityError::DriftViolated {
            x: x.clone(),
            generator: lyap.generator(x, &b, &form.sigma),
        });
    }
    Ok(DriftReport {
        kappa0: kappa0.max(0.0) * (1.0 + SLACK) + SLACK,
        kappa1,
        samples: count,
        violations,
        max_by_radius,
    })
}

/// Builds the full certificate for the stabilizing control with exponent `m`.
pub fn stability_certificate(net: &Network, plan: &StaticPlan, m: f64) -> Result<StabilityCertificate, StabilityError> {
    if !(m >= 1.0) {
        return Err(StabilityError::InvalidExponent(m));
    }
    let u_bar = stabilizing_control(net)?;
    let form = extract_drift_form(net, plan)?;
    let i_hat = u_bar.uc.iter().position(|&v| v == 1.0).expect("vertex control");
    let perm = eliminate_with_last(net, i_hat).order;
    let (q, c_min) = region_certificate(&form, &u_bar, &perm)?;
    let mut cert = StabilityCertificate {
        u_bar,
        q,
        m,
        kappa0: 0.0,
        kappa1: 0.0,
        c_min,
    };
    let report = verify_geometric_drift(&form, &cert, &DEFAULT_RADII, DEFAULT_SAMPLES)?;
    cert.kappa0 = report.kappa0;
    cert.kappa1 = report.kappa1;
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub cone: ConeSpec,
    pub m: f64,
    pub q: Vec<f64>,
    /// Largest `C4` with `LV <= 1 - C4 |x|^m` outside the cone; `None` if no sample fell outside.
    pub c4: Option<f64>,
    /// Smallest `C5 >= 0` with `LV <= 1 + C5 |e.x|^m` inside the cone.
    pub c5: f64,
    pub samples: usize,
}

const HYP_RADII: [f64; 3] = [10.0, 100.0, 1000.0];

fn vertex_controls(ni: usize, nj: usize) -> Vec<ControlPoint> {
    let mut out = Vec::with_capacity(ni * nj + 1);
    for i in 0..ni {
        for j in 0..nj {
            out.push(ControlPoint::vertex(ni, nj, i, j));
        }
    }
    out.push(ControlPoint::barycenter(ni, nj));
    out
}

/// Worst-case homogeneous decay `min_{x,u} x^T Q A(x,u) x / |x|^2` over
/// unit samples outside the cone; controls range over vertices, which suffices
/// because the drift is affine in `u`.
fn outer_decay(form: &DriftForm, cone: &ConeSpec, q: &[f64], points: &[Vec<f64>], controls: &[ControlPoint]) -> Option<f64> {
    let dim = q.len();
    let zero = vec![0.0; dim];
    let mut best: Option<f64> = None;
    for u in controls {
        let ell = form.eval(&zero, u);
        for x in points {
            if cone.contains(x) {
                continue;
            }
            let b = form.eval(x, u);
            let d: f64 = (0..dim).map(|i| -q[i] * x[i] * (b[i] - ell[i])).sum();
            best = Some(best.map_or(d, |v: f64| v.min(d)));
        }
    }
    best
}

/// Samples the cone hypothesis for `V = (x^T Q x)^{m/2}` on large spheres.
///
/// `Q` is taken from the drift's `B1`; for one-sided cones a small grid of
/// diagonal rescalings is also searched, since the lower half-space then lies
/// outside the cone and the control-dependent part of the drift must be
/// dominated there too.
pub fn verify_hypothesis_a(
    net: &Network,
    plan: &StaticPlan,
    cone: ConeSpec,
    m: f64,
    samples: usize,
) -> Result<HypothesisReport, StabilityError> {
    let form = extract_drift_form(net, plan)?;
    verify_hypothesis_a_form(&form, cone, m, samples)
}

pub fn verify_hypothesis_a_form(
    form: &DriftForm,
    cone: ConeSpec,
    m: f64,
    samples: usize,
) -> Result<HypothesisReport, StabilityError> {
    let (ni, nj) = (form.num_classes(), form.num_pools());
    ConeSpec::new(cone.delta, cone.two_sided, ni)?;
    let band = (cone.delta / (ni as f64).sqrt()).min(1.0);
    let unit = sphere_points(ni, 1.0, samples, band, 7);
    let controls = vertex_controls(ni, nj);
    let (q0, _) = find_lyapunov_q(&form.b1, &form.perm)?;

    let mut q = q0.clone();
    let mut best = outer_decay(form, &cone, &q, &unit, &controls);
    if !cone.two_sided && best.is_some_and(|d| d <= 0.0) && ni <= 4 {
        let factors = [1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0, 4.0, 16.0, 64.0];
        let coarse = sphere_points(ni, 1.0, samples.min(256), band, 11);
        let combos = factors.len().pow(ni as u32);
        for code in 0..combos {
            let mut c = code;
            let cand: Vec<f64> = q0
                .iter()
                .map(|v| {
                    let f = factors[c % factors.len()];
                    c /= factors.len();
                    v * f
                })
                .collect();
            let d = outer_decay(form, &cone, &cand, &coarse, &controls);
            if d.is_some_and(|d| d > best.unwrap_or(f64::NEG_INFINITY)) {
                let full = outer_decay(form, &cone, &cand, &unit, &controls);
                if full > best {
                    best = full;
                    q = cand;
                }
            }
        }
    }

    let lyap = Lyapunov::new(q.clone(), m)?;
    let mut c4: Option<f64> = None;
    let mut c5: f64 = 0.0;
    let mut count = 0;
    for (ri, &r) in HYP_RADII.iter().enumerate() {
        let pts = sphere_points(ni, r, samples, band, 100 + ri as u64);
        for u in &controls {
            for x in &pts {
                let lv = lyap.generator(x, &form.eval(x, u), &form.sigma);
                count += 1;
                if cone.contains(x) {
                    let s = x.iter().sum::<f64>().abs();
                    c5 = c5.max((lv - 1.0) / s.powf(m));
                } else {
                    let v = (1.0 - lv) / norm(x).powf(m);
                    c4 = Some(c4.map_or(v, |c: f64| c.min(v)));
                }
            }
        }
    }
    if c4.is_some_and(|c| c <= 0.0) {
        return Err(StabilityError::ConeTooNarrow { delta: cone.delta });
    }
    Ok(HypothesisReport {
        cone,
        m,
        q,
        c4,
        c5,
        samples: count,
    })
}

/// Tries the cone openings of [`DELTA_GRID`] from widest to narrowest and
/// returns the first that verifies.
pub fn scan_cones(form: &DriftForm, two_sided: bool, m: f64, samples: usize) -> Result<HypothesisReport, StabilityError> {
    let dim = form.num_classes();
    let mut last = None;
    for &delta in DELTA_GRID.iter() {
        let Ok(cone) = ConeSpec::new(delta, two_sided, dim) else { continue };
        match verify_hypothesis_a_form(form, cone, m, samples) {
            Ok(r) => return Ok(r),
            Err(e @ StabilityError::ConeTooNarrow { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(StabilityError::ConeTooNarrow { delta: DELTA_GRID[DELTA_GRID.len() - 1] }))
}

/// Elimination order of the default form; exposed for reports.
pub fn default_order(net: &Network) -> Vec<usize> {
    eliminate(net).order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{validate_network, ClassSpec, EdgeSpec, NetworkSpec, PoolSpec};
    use crate::plan::solve_static_plan;

    fn n_model(gamma: [f64; 2]) -> Network {
        validate_network(&NetworkSpec {
            classes: gamma
                .iter()
                .zip([1.5, 0.5])
                .map(|(&g, lambda)| ClassSpec { lambda, lambda_hat: 0.0, gamma: g })
                .collect(),
            pools: vec![PoolSpec { nu: 1.0 }; 2],
            edges: [(1, 1), (1, 2), (2, 2)]
                .iter()
                .map(|&(class, pool)| EdgeSpec { class, pool, mu: 1.0, mu_hat: 0.0 })
                .collect(),
        })
        .unwrap()
    }

    #[test]
    fn stabilizing_control_examples() {
        let u = stabilizing_control(&n_model([0.0, 1.0])).unwrap();
        assert_eq!(u, ControlPoint::vertex(2, 2, 1, 1));
        let u = stabilizing_control(&n_model([1.0, 0.0])).unwrap();
        assert_eq!(u, ControlPoint::vertex(2, 2, 0, 1));
        assert_eq!(stabilizing_control(&n_model([0.0, 0.0])), Err(StabilityError::NoAbandonment));
    }

    #[test]
    fn identity_gives_four() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let (q, c) = find_lyapunov_q(&id, &[0, 1]).unwrap();
        assert!((q[0] - 4.0).abs() < 1e-12 && (q[1] - 4.0).abs() < 1e-12);
        assert!((c - 8.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_scaling() {
        let b = vec![vec![2.0, 0.0], vec![0.0, 3.0]];
        let (q, c) = find_lyapunov_q(&b, &[0, 1]).unwrap();
        assert!((q[0] - 2.0).abs() < 1e-12);
        assert!((q[1] - 4.0 / 3.0).abs() < 1e-12);
        assert!((c - 8.0).abs() < 1e-12);
    }

    #[test]
    fn coupled_margin_example() {
        let b = vec![vec![1.0, 0.0, 0.0], vec![2.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let m = lyapunov_margin(&[2.0, 1.0, 1.0], &b);
        assert!((m - (3.0 - 5f64.sqrt())).abs() < 1e-12);
        let (q, c) = find_lyapunov_q(&b, &[0, 1, 2]).unwrap();
        assert!(q.iter().all(|&v| v > 0.0));
        assert!((c - 8.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_upper_entries() {
        let b = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        assert!(matches!(find_lyapunov_q(&b, &[0, 1]), Err(StabilityError::NotTriangular(_))));
        let b = vec![vec![1.0, 0.0], vec![0.0, -1.0]];
        assert!(matches!(
            find_lyapunov_q(&b, &[0, 1]),
            Err(StabilityError::NonPositiveDiagonal { index: 1, .. })
        ));
    }

    #[test]
    fn quadratic_generator_at_origin() {
        let l = Lyapunov::new(vec![3.0, 5.0], 2.0).unwrap();
        let sigma = [2f64.sqrt(), 4f64.sqrt()];
        let g = l.generator(&[0.0, 0.0], &[0.7, -0.2], &sigma);
        assert!((g - (2.0 * 1.0 * 3.0 + 2.0 * 2.0 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn smoothed_derivatives_match_finite_differences() {
        for m in [1.0, 1.5, 2.0, 3.0] {
            let l = Lyapunov::new(vec![1.0], m).unwrap();
            let w = 2.3;
            let (f, d1, d2) = l.phi(w);
            let h = 1e-4;
            let (fp, _, _) = l.phi(w + h);
            let (fm, _, _) = l.phi(w - h);
            assert!(((fp - fm) / (2.0 * h) - d1).abs() < 1e-6, "m={m}");
            assert!(((fp - 2.0 * f + fm) / (h * h) - d2).abs() < 1e-4, "m={m}");
        }
    }

    #[test]
    fn n_model_certificate() {
        let net = n_model([0.0, 1.0]);
        let plan = solve_static_plan(&net).unwrap();
        let cert = stability_certificate(&net, &plan, 2.0).unwrap();
        assert!(cert.kappa1 > 0.0 && cert.c_min > 0.0);
    }

    #[test]
    fn cone_membership() {
        let c = ConeSpec::new(0.1, true, 2).unwrap();
        assert!(c.contains(&[1.0, 0.0]));
        assert!(!c.contains(&[1.0, -1.0]));
        let c = ConeSpec::new(0.1, false, 2).unwrap();
        assert!(!c.contains(&[-1.0, 0.0]));
        assert!(ConeSpec::new(1.2, true, 2).is_ok());
        assert!(ConeSpec::new(1.2, true, 1).is_err());
    }
}
