//! Leaf elimination on the activity tree.
//!
//! The map `G(alpha, beta)` returns the unique matrix supported on the edges of
//! the tree with row sums `alpha` and column sums `beta`. Eliminating leaves one
//! at a time expresses every entry as an integer combination of the labels, and
//! that representation drives the affine drift form of the diffusion limit.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Network;
use crate::plan::StaticPlan;

/// Tolerance for membership in the domain of `G`.
pub const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriftError {
    #[error("(alpha, beta) is not in the domain of G: e.alpha - e.beta = {0:e}")]
    NotInDomainDG(f64),
    #[error("inconsistent affine drift form: {0}")]
    InconsistentAffineForm(String),
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// A point `(u^c, u^s)` of the product of the class and pool simplices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub uc: Vec<f64>,
    pub us: Vec<f64>,
}

impl ControlPoint {
    pub fn new(uc: Vec<f64>, us: Vec<f64>) -> Result<Self, DriftError> {
        let u = Self { uc, us };
        u.check(1e-9)?;
        Ok(u)
    }

    /// The vertex `(e_i, e_j)`.
    pub fn vertex(num_classes: usize, num_pools: usize, class: usize, pool: usize) -> Self {
        let mut uc = vec![0.0; num_classes];
        let mut us = vec![0.0; num_pools];
        uc[class] = 1.0;
        us[pool] = 1.0;
        Self { uc, us }
    }

    /// Uniform weights on both simplices.
    pub fn barycenter(num_classes: usize, num_pools: usize) -> Self {
        Self {
            uc: vec![1.0 / num_classes as f64; num_classes],
            us: vec![1.0 / num_pools as f64; num_pools],
        }
    }

    pub fn check(&self, tol: f64) -> Result<(), DriftError> {
        for (name, v) in [("u^c", &self.uc), ("u^s", &self.us)] {
            if v.is_empty() {
                return Err(DriftError::InvalidControl(format!("{name} is empty")));
            }
            if v.iter().any(|&x| !(x >= -tol)) {
                return Err(DriftError::InvalidControl(format!("{name} has a negative entry")));
            }
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(DriftError::InvalidControl(format!("{name} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Convex combination `(1 - t) self + t other`.
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
        Self {
            uc: mix(&self.uc, &other.uc),
            us: mix(&self.us, &other.us),
        }
    }
}

/// Integer combination `sum_k a_k alpha_k + sum_l b_l beta_l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearForm {
    pub alpha: Vec<i64>,
    pub beta: Vec<i64>,
}

impl LinearForm {
    fn zero(ni: usize, nj: usize) -> Self {
        Self {
            alpha: vec![0; ni],
            beta: vec![0; nj],
        }
    }

    fn unit_alpha(ni: usize, nj: usize, k: usize) -> Self {
        let mut f = Self::zero(ni, nj);
        f.alpha[k] = 1;
        f
    }

    fn unit_beta(ni: usize, nj: usize, l: usize) -> Self {
        let mut f = Self::zero(ni, nj);
        f.beta[l] = 1;
        f
    }

    fn sub_assign(&mut self, other: &Self) {
        for (a, b) in self.alpha.iter_mut().zip(&other.alpha) {
            *a -= b;
        }
        for (a, b) in self.beta.iter_mut().zip(&other.beta) {
            *a -= b;
        }
    }

    pub fn eval(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let a: f64 = self.alpha.iter().zip(alpha).map(|(&c, &v)| c as f64 * v).sum();
        let b: f64 = self.beta.iter().zip(beta).map(|(&c, &v)| c as f64 * v).sum();
        a + b
    }
}

impl fmt::Display for LinearForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms = self
            .alpha
            .iter()
            .enumerate()
            .map(|(k, &c)| (c, format!("a{}", k + 1)))
            .chain(self.beta.iter().enumerate().map(|(l, &c)| (c, format!("b{}", l + 1))))
            .filter(|(c, _)| *c != 0);
        let mut first = true;
        for (c, name) in terms {
            let sign = if c < 0 { "-" } else if first { "" } else { "+" };
            let mag = if c.abs() == 1 { String::new() } else { format!("{}*", c.abs()) };
            if first {
                write!(f, "{sign}{mag}{name}")?;
            } else {
                write!(f, " {sign} {mag}{name}")?;
            }
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// How eligible leaves are picked when the algorithm has a free choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LeafOrder {
    /// Smallest class index first; pool leaves ascending.
    #[default]
    Smallest,
    /// Largest class index first; pool leaves descending.
    Largest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationResult {
    /// `pi[i]` is the (0-based) customer step at which class `i` was eliminated.
    pub pi: Vec<usize>,
    /// `order[k]` is the class eliminated at step `k`; the inverse of `pi`.
    pub order: Vec<usize>,
    /// Pool each class was attached to when it was eliminated.
    pub j_of: Vec<usize>,
    /// Coefficients of each edge entry, indexed like [`Network::edges`].
    pub psi: Vec<LinearForm>,
}

impl EliminationResult {
    pub fn last_class(&self) -> usize {
        *self.order.last().expect("at least one class")
    }

    pub fn last_pool(&self) -> usize {
        self.j_of[self.last_class()]
    }
}

pub fn eliminate(net: &Network) -> EliminationResult {
    eliminate_ordered(net, LeafOrder::Smallest)
}

pub fn eliminate_ordered(net: &Network, order: LeafOrder) -> EliminationResult {
    eliminate_with(net, order, |cands| match order {
        LeafOrder::Smallest => cands[0],
        LeafOrder::Largest => *cands.last().unwrap(),
    })
}

/// Eliminates so that `last` is the final class removed.
pub fn eliminate_with_last(net: &Network, last: usize) -> EliminationResult {
    eliminate_with(net, LeafOrder::Smallest, |cands| {
        cands.iter().copied().find(|&i| i != last).unwrap_or(cands[0])
    })
}

/// Runs the algorithm, starting with server-leaf elimination and alternating
/// single customer-leaf steps. `choose` picks from the ascending list of class
/// leaves.
///
/// A pool leaf whose class is also a leaf is the final edge; it is left for the
/// customer step so the last entry is expressed through `alpha`.
pub fn eliminate_with(
    net: &Network,
    pool_order: LeafOrder,
    mut choose: impl FnMut(&[usize]) -> usize,
) -> EliminationResult {
    let (ni, nj) = (net.num_classes(), net.num_pools());
    let pools: Vec<usize> = match pool_order {
        LeafOrder::Smallest => (0..nj).collect(),
        LeafOrder::Largest => (0..nj).rev().collect(),
    };
    let mut st = Peeling {
        edges: net.edges().iter().map(|e| (e.class, e.pool)).collect(),
        alive: vec![true; net.edges().len()],
        class_deg: (0..ni).map(|i| net.pools_of(i).count()).collect(),
        pool_deg: (0..nj).map(|j| net.classes_of(j).count()).collect(),
        alpha_label: (0..ni).map(|i| LinearForm::unit_alpha(ni, nj, i)).collect(),
        beta_label: (0..nj).map(|j| LinearForm::unit_beta(ni, nj, j)).collect(),
        psi: vec![None; net.edges().len()],
    };
    let mut pi = vec![usize::MAX; ni];
    let mut order = Vec::with_capacity(ni);
    let mut j_of = vec![usize::MAX; ni];

    st.server_phase(&pools);
    for step in 0..ni {
        let cands: Vec<usize> = (0..ni)
            .filter(|&i| pi[i] == usize::MAX && st.class_deg[i] == 1)
            .collect();
        assert!(!cands.is_empty(), "a tree always has a class leaf to eliminate");
        let i = choose(&cands);
        let (k, _, j) = st.live_edge(|c, _| c == i);
        let form = st.alpha_label[i].clone();
        st.beta_label[j].sub_assign(&form);
        st.remove(k, form);
        pi[i] = step;
        order.push(i);
        j_of[i] = j;
        st.server_phase(&pools);
    }

    EliminationResult {
        pi,
        order,
        j_of,
        psi: st
            .psi
            .into_iter()
            .map(|p| p.expect("every edge receives a form"))
            .collect(),
    }
}

struct Peeling {
    edges: Vec<(usize, usize)>,
    alive: Vec<bool>,
    class_deg: Vec<usize>,
    pool_deg: Vec<usize>,
    alpha_label: Vec<LinearForm>,
    beta_label: Vec<LinearForm>,
    psi: Vec<Option<LinearForm>>,
}

impl Peeling {
    fn live_edge(&self, pred: impl Fn(usize, usize) -> bool) -> (usize, usize, usize) {
        self.edges
            .iter()
            .enumerate()
            .find(|&(k, &(i, j))| self.alive[k] && pred(i, j))
            .map(|(k, &(i, j))| (k, i, j))
            .expect("leaf has a live edge")
    }

    fn remove(&mut self, k: usize, form: LinearForm) {
        let (i, j) = self.edges[k];
        self.psi[k] = Some(form);
        self.alive[k] = false;
        self.class_deg[i] -= 1;
        self.pool_deg[j] -= 1;
    }

    fn server_phase(&mut self, pools: &[usize]) {
        for &j in pools {
            if self.pool_deg[j] != 1 {
                continue;
            }
            let (k, i, _) = self.live_edge(|_, p| p == j);
            if self.class_deg[i] == 1 {
                continue;
            }
            let form = self.beta_label[j].clone();
            self.alpha_label[i].sub_assign(&form);
            self.remove(k, form);
        }
    }
}

/// The linear map `G`, backed by a fixed elimination.
#[derive(Debug, Clone)]
pub struct GMap {
    num_classes: usize,
    num_pools: usize,
    edges: Vec<(usize, usize)>,
    elimination: EliminationResult,
}

impl GMap {
    pub fn new(net: &Network) -> Self {
        Self::from_elimination(net, eliminate(net))
    }

    pub fn from_elimination(net: &Network, elimination: EliminationResult) -> Self {
        Self {
            num_classes: net.num_classes(),
            num_pools: net.num_pools(),
            edges: net.edges().iter().map(|e| (e.class, e.pool)).collect(),
            elimination,
        }
    }

    pub fn elimination(&self) -> &EliminationResult {
        &self.elimination
    }

    /// Writes the edge entries of `G(alpha, beta)` into `out` without the domain check.
    pub fn edge_values(&self, alpha: &[f64], beta: &[f64], out: &mut [f64]) {
        for (o, form) in out.iter_mut().zip(&self.elimination.psi) {
            *o = form.eval(alpha, beta);
        }
    }

    /// `G(alpha, beta)` as a row-major I x J matrix.
    pub fn apply(&self, alpha: &[f64], beta: &[f64]) -> Result<Vec<Vec<f64>>, DriftError> {
        if alpha.len() != self.num_classes || beta.len() != self.num_pools {
            return Err(DriftError::Dimension(format!(
                "expected alpha of length {} and beta of length {}",
                self.num_classes, self.num_pools
            )));
        }
        let gap = alpha.iter().sum::<f64>() - beta.iter().sum::<f64>();
        let scale = alpha
            .iter()
            .chain(beta)
            .fold(1.0_f64, |m, v| m.max(v.abs()));
        if gap.abs() > DOMAIN_TOL * scale {
            return Err(DriftError::NotInDomainDG(gap));
        }
        Ok(self.apply_unchecked(alpha, beta))
    }

    fn apply_unchecked(&self, alpha: &[f64], beta: &[f64]) -> Vec<Vec<f64>> {
        let mut psi = vec![vec![0.0; self.num_pools]; self.num_classes];
        for (&(i, j), form) in self.edges.iter().zip(&self.elimination.psi) {
            psi[i][j] = form.eval(alpha, beta);
        }
        psi
    }

    /// `G(x - (e.x)^+ u^c, -(e.x)^- u^s)`.
    pub fn ghat(&self, x: &[f64], u: &ControlPoint) -> Vec<Vec<f64>> {
        let (alpha, beta) = ghat_arguments(x, u);
        self.apply_unchecked(&alpha, &beta)
    }
}

fn ghat_arguments(x: &[f64], u: &ControlPoint) -> (Vec<f64>, Vec<f64>) {
    let s: f64 = x.iter().sum();
    let (sp, sm) = (s.max(0.0), (-s).max(0.0));
    let alpha = x.iter().zip(&u.uc).map(|(xi, ui)| xi - sp * ui).collect();
    let beta = u.us.iter().map(|uj| -sm * uj).collect();
    (alpha, beta)
}

pub fn solve_gmap(net: &Network, alpha: &[f64], beta: &[f64]) -> Result<Vec<Vec<f64>>, DriftError> {
    GMap::new(net).apply(alpha, beta)
}

pub fn ghat(net: &Network, x: &[f64], u: &ControlPoint) -> Result<Vec<Vec<f64>>, DriftError> {
    check_control(net, u)?;
    Ok(GMap::new(net).ghat(x, u))
}

fn check_control(net: &Network, u: &ControlPoint) -> Result<(), DriftError> {
    if u.uc.len() != net.num_classes() || u.us.len() != net.num_pools() {
        return Err(DriftError::Dimension(format!(
            "control has shape ({}, {}), network has I={}, J={}",
            u.uc.len(),
            u.us.len(),
            net.num_classes(),
            net.num_pools()
        )));
    }
    u.check(1e-9)
}

/// Evaluates the drift directly from the network rates and `G`.
pub struct DriftEvaluator<'a> {
    net: &'a Network,
    ell: &'a [f64],
    gmap: GMap,
}

impl<'a> DriftEvaluator<'a> {
    pub fn new(net: &'a Network, plan: &'a StaticPlan) -> Self {
        Self {
            net,
            ell: &plan.ell,
            gmap: GMap::new(net),
        }
    }

    pub fn eval(&self, x: &[f64], u: &ControlPoint) -> Vec<f64> {
        let g = self.gmap.ghat(x, u);
        let sp = x.iter().sum::<f64>().max(0.0);
        (0..self.net.num_classes())
            .map(|i| {
                let service: f64 = self.net.pools_of(i).map(|j| self.net.mu(i, j) * g[i][j]).sum();
                -service - self.net.gamma()[i] * sp * u.uc[i] + self.ell[i]
            })
            .collect()
    }
}

pub fn drift(net: &Network, plan: &StaticPlan, x: &[f64], u: &ControlPoint) -> Result<Vec<f64>, DriftError> {
    check_control(net, u)?;
    if x.len() != net.num_classes() {
        return Err(DriftError::Dimension(format!("state has length {}", x.len())));
    }
    Ok(DriftEvaluator::new(net, plan).eval(x, u))
}

/// The drift as `b(x,u) = -B1 (x - (e.x)^+ u^c) + (e.x)^- B2 u^s - (e.x)^+ Gamma u^c + ell`,
/// together with the diffusion coefficients `sigma_i = sqrt(2 lambda_i)`.
///
/// `b1` is lower triangular once rows and columns are permuted by `perm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftForm {
    pub b1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub ell: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Classes in elimination order (0-based).
    pub perm: Vec<usize>,
}

impl DriftForm {
    pub fn num_classes(&self) -> usize {
        self.gamma.len()
    }

    pub fn num_pools(&self) -> usize {
        self.b2.first().map_or(0, Vec::len)
    }

    /// Writes `b(x, u)` into `out`.
    pub fn eval_into(&self, x: &[f64], u: &ControlPoint, out: &mut [f64]) {
        let s: f64 = x.iter().sum();
        let (sp, sm) = (s.max(0.0), (-s).max(0.0));
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.ell[i] - self.gamma[i] * sp * u.uc[i];
            for (k, &bik) in self.b1[i].iter().enumerate() {
                v -= bik * (x[k] - sp * u.uc[k]);
            }
            if sm > 0.0 {
                for (l, &b2il) in self.b2[i].iter().enumerate() {
                    v += sm * b2il * u.us[l];
                }
            }
            *o = v;
        }
    }

    pub fn eval(&self, x: &[f64], u: &ControlPoint) -> Vec<f64> {
        let mut out = vec![0.0; self.num_classes()];
        self.eval_into(x, u, &mut out);
        out
    }

    /// `b1` with rows and columns in elimination order.
    pub fn b1_permuted(&self) -> Vec<Vec<f64>> {
        self.perm
            .iter()
            .map(|&r| self.perm.iter().map(|&c| self.b1[r][c]).collect())
            .collect()
    }

    /// The linear maps of `b(., u)` on the half-spaces `e.x > 0` and `e.x < 0`,
    /// i.e. `b(x,u) = -A x + ell` there. Returned as `(A_plus, A_minus)`.
    pub fn region_matrices(&self, u: &ControlPoint) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.num_classes();
        let mut plus = self.b1.clone();
        let mut minus = self.b1.clone();
        for i in 0..n {
            // (e.x)^+ terms: +B1 u^c (e.x) - Gamma u^c (e.x)
            let bu: f64 = (0..n).map(|k| self.b1[i][k] * u.uc[k]).sum();
            let coef_plus = bu - self.gamma[i] * u.uc[i];
            // (e.x)^- terms: (e.x)^- = -(e.x) on e.x < 0
            let coef_minus: f64 = self.b2[i].iter().zip(&u.us).map(|(b, w)| b * w).sum();
            for k in 0..n {
                plus[i][k] -= coef_plus;
                minus[i][k] += coef_minus;
            }
        }
        (plus, minus)
    }
}

/// `B1` and `B2` assembled directly from the elimination coefficients.
pub fn coefficient_matrices(net: &Network, elim: &EliminationResult) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (ni, nj) = (net.num_classes(), net.num_pools());
    let mut b1 = vec![vec![0.0; ni]; ni];
    let mut b2 = vec![vec![0.0; nj]; ni];
    for (e, form) in net.edges().iter().zip(&elim.psi) {
        let mu = net.mu(e.class, e.pool);
        for (k, &c) in form.alpha.iter().enumerate() {
            b1[e.class][k] += mu * c as f64;
        }
        for (l, &c) in form.beta.iter().enumerate() {
            b2[e.class][l] += mu * c as f64;
        }
    }
    (b1, b2)
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Recovers `(B1, B2, Gamma, ell)` by probing the drift on each linear region,
/// cross-checks them against the elimination coefficients and validates the
/// reconstruction on random points.
pub fn extract_drift_form(net: &Network, plan: &StaticPlan) -> Result<DriftForm, DriftError> {
    let (ni, nj) = (net.num_classes(), net.num_pools());
    let evaluator = DriftEvaluator::new(net, plan);
    let elim = evaluator.gmap.elimination().clone();
    let last_pool = elim.last_pool();

    let zero = vec![0.0; ni];
    let any_u = ControlPoint::vertex(ni, nj, 0, 0);
    let ell = evaluator.eval(&zero, &any_u);

    // On e.x < 0 with u^s = e_j the drift is -(B1 + B2 e_j e^T) x + ell.
    let region_minus = |j: usize| -> Vec<Vec<f64>> {
        let u = ControlPoint::vertex(ni, nj, 0, j);
        let mut a = vec![vec![0.0; ni]; ni];
        for k in 0..ni {
            let mut x = vec![0.0; ni];
            x[k] = -1.0;
            let b = evaluator.eval(&x, &u);
            for i in 0..ni {
                a[i][k] = b[i] - ell[i];
            }
        }
        a
    };
    let base = region_minus(last_pool);
    let mut b2_probe = vec![vec![0.0; nj]; ni];
    for j in 0..nj {
        if j == last_pool {
            continue;
        }
        let aj = region_minus(j);
        for i in 0..ni {
            b2_probe[i][j] = aj[i][0] - base[i][0];
        }
    }
    let b1_probe = base;

    let mut gamma_probe = vec![0.0; ni];
    for k in 0..ni {
        let mut x = vec![0.0; ni];
        x[k] = 1.0;
        let b = evaluator.eval(&x, &ControlPoint::vertex(ni, nj, k, 0));
        gamma_probe[k] = ell[k] - b[k];
    }

    let (b1_coef, b2_coef) = coefficient_matrices(net, &elim);
    let scale = net.edges().iter().fold(1.0_f64, |m, e| m.max(net.mu(e.class, e.pool)));
    let d1 = max_abs_diff(&b1_probe, &b1_coef);
    let d2 = max_abs_diff(&b2_probe, &b2_coef);
    if d1 > 1e-9 * scale || d2 > 1e-9 * scale {
        return Err(DriftError::InconsistentAffineForm(format!(
            "probed and assembled matrices differ (B1 by {d1:e}, B2 by {d2:e})"
        )));
    }
    let dg = gamma_probe
        .iter()
        .zip(net.gamma())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if dg > 1e-9 * scale {
        return Err(DriftError::InconsistentAffineForm(format!("abandonment rates differ by {dg:e}")));
    }

    let form = DriftForm {
        b1: b1_coef,
        b2: b2_coef,
        gamma: net.gamma().to_vec(),
        ell,
        sigma: net.lambda().iter().map(|l| (2.0 * l).sqrt()).collect(),
        perm: elim.order.clone(),
    };

    let p = form.b1_permuted();
    for r in 0..ni {
        if !(p[r][r] > 0.0) {
            return Err(DriftError::InconsistentAffineForm(format!(
                "diagonal entry {r} of the permuted B1 is {}",
                p[r][r]
            )));
        }
        for c in r + 1..ni {
            if p[r][c] != 0.0 {
                return Err(DriftError::InconsistentAffineForm(format!(
                    "permuted B1 has a nonzero entry above the diagonal at ({r}, {c})"
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..64 {
        let x: Vec<f64> = (0..ni).map(|_| rng.random_range(-5.0..5.0)).collect();
        let u = random_control(&mut rng, ni, nj);
        let direct = evaluator.eval(&x, &u);
        let affine = form.eval(&x, &u);
        let err = direct
            .iter()
            .zip(&affine)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if err > 1e-8 * scale.max(1.0) * 10.0 {
            return Err(DriftError::InconsistentAffineForm(format!(
                "reconstruction residual {err:e} at x = {x:?}"
            )));
        }
    }
    Ok(form)
}

/// A control drawn uniformly from the product of simplices.
pub fn random_control<R: Rng + ?Sized>(rng: &mut R, ni: usize, nj: usize) -> ControlPoint {
    let mut draw = |n: usize| {
        let v: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let uc = draw(ni);
    let us = draw(nj);
    ControlPoint { uc, us }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{validate_network, ClassSpec, EdgeSpec, NetworkSpec, PoolSpec};

    fn net(ni: usize, nj: usize, edges: &[(usize, usize, f64)], gamma: &[f64]) -> Network {
        validate_network(&NetworkSpec {
            classes: (0..ni)
                .map(|i| ClassSpec {
                    lambda: 1.0,
                    lambda_hat: 0.0,
                    gamma: gamma[i],
                })
                .collect(),
            pools: vec![PoolSpec { nu: 1.0 }; nj],
            edges: edges
                .iter()
                .map(|&(class, pool, mu)| EdgeSpec { class, pool, mu, mu_hat: 0.0 })
                .collect(),
        })
        .unwrap()
    }

    fn forms(n: &Network, e: &EliminationResult) -> Vec<(usize, usize, String)> {
        n.edges()
            .iter()
            .zip(&e.psi)
            .map(|(ed, f)| (ed.class + 1, ed.pool + 1, f.to_string()))
            .collect()
    }

    #[test]
    fn n_model_forms() {
        let n = net(2, 2, &[(1, 1, 1.0), (1, 2, 1.0), (2, 2, 1.0)], &[1.0, 1.0]);
        let e = eliminate(&n);
        assert_eq!(
            forms(&n, &e),
            vec![(1, 1, "b1".into()), (1, 2, "a1 - b1".into()), (2, 2, "a2".into())]
        );
        assert_eq!(e.order, vec![0, 1]);
    }

    #[test]
    fn w_model_forms() {
        let n = net(3, 2, &[(1, 1, 1.0), (2, 1, 1.0), (2, 2, 1.0), (3, 2, 1.0)], &[1.0; 3]);
        let e = eliminate(&n);
        assert_eq!(
            forms(&n, &e),
            vec![
                (1, 1, "a1".into()),
                (2, 1, "-a1 + b1".into()),
                (2, 2, "a1 + a2 - b1".into()),
                (3, 2, "a3".into())
            ]
        );
        assert_eq!(e.order, vec![0, 1, 2]);
    }

    #[test]
    fn single_class_star() {
        let n = net(1, 3, &[(1, 1, 1.0), (1, 2, 2.0), (1, 3, 3.0)], &[1.0]);
        let e = eliminate(&n);
        assert_eq!(
            forms(&n, &e),
            vec![(1, 1, "b1".into()), (1, 2, "b2".into()), (1, 3, "a1 - b1 - b2".into())]
        );
        assert_eq!(e.last_pool(), 2);
    }

    #[test]
    fn gmap_examples() {
        let n = net(2, 2, &[(1, 1, 1.0), (1, 2, 1.0), (2, 2, 1.0)], &[1.0, 1.0]);
        let psi = solve_gmap(&n, &[3.0, 1.0], &[2.0, 2.0]).unwrap();
        assert_eq!(psi, vec![vec![2.0, 1.0], vec![0.0, 1.0]]);
        let zero = solve_gmap(&n, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(zero.iter().flatten().all(|&v| v == 0.0));
        assert!(matches!(
            solve_gmap(&n, &[1.0, 0.0], &[0.0, 0.0]),
            Err(DriftError::NotInDomainDG(_))
        ));

        let m = net(2, 3, &[(1, 1, 1.0), (1, 2, 1.0), (2, 2, 1.0), (2, 3, 1.0)], &[1.0, 1.0]);
        let psi = solve_gmap(&m, &[2.0, 3.0], &[1.0, 2.0, 2.0]).unwrap();
        assert_eq!(psi, vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 2.0]]);
    }

    #[test]
    fn ghat_examples() {
        let n = net(2, 2, &[(1, 1, 1.0), (1, 2, 2.0), (2, 2, 3.0)], &[0.5, 0.5]);
        let u = ControlPoint::vertex(2, 2, 0, 0);
        let g = ghat(&n, &[1.0, 1.0], &u).unwrap();
        assert_eq!(g, vec![vec![0.0, -1.0], vec![0.0, 1.0]]);
        let g0 = ghat(&n, &[0.0, 0.0], &ControlPoint::barycenter(2, 2)).unwrap();
        assert!(g0.iter().flatten().all(|&v| v == 0.0));
        let x = [0.7, -0.7];
        let g = ghat(&n, &x, &ControlPoint::barycenter(2, 2)).unwrap();
        assert_eq!(g, solve_gmap(&n, &x, &[0.0, 0.0]).unwrap());
    }

    #[test]
    fn invalid_control_rejected() {
        let n = net(2, 2, &[(1, 1, 1.0), (1, 2, 1.0), (2, 2, 1.0)], &[1.0, 1.0]);
        let bad = ControlPoint { uc: vec![0.5, 0.6], us: vec![1.0, 0.0] };
        assert!(matches!(ghat(&n, &[1.0, 0.0], &bad), Err(DriftError::InvalidControl(_))));
    }

    #[test]
    fn linear_form_display() {
        let f = LinearForm { alpha: vec![2, 0], beta: vec![-1, 1] };
        assert_eq!(f.to_string(), "2*a1 - b1 + b2");
        assert_eq!(LinearForm::zero(1, 1).to_string(), "0");
    }

    fn plan_for(n: &Network) -> StaticPlan {
        StaticPlan {
            xi_star: vec![vec![0.0; n.num_pools()]; n.num_classes()],
            rho_star: 1.0,
            x_star: vec![0.0; n.num_classes()],
            z_star: vec![vec![0.0; n.num_pools()]; n.num_classes()],
            ell: vec![0.0; n.num_classes()],
        }
    }

    fn assert_close(a: &[Vec<f64>], b: &[Vec<f64>]) {
        assert!(max_abs_diff(a, b) < 1e-12, "{a:?} != {b:?}");
    }

    #[test]
    fn n_model_drift_form() {
        let (m11, m12, m22) = (1.3, 2.1, 0.7);
        let n = net(2, 2, &[(1, 1, m11), (1, 2, m12), (2, 2, m22)], &[0.5, 0.5]);
        let f = extract_drift_form(&n, &plan_for(&n)).unwrap();
        assert_close(&f.b1, &[vec![m12, 0.0], vec![0.0, m22]]);
        assert_close(&f.b2, &[vec![m11 - m12, 0.0], vec![0.0, 0.0]]);
        assert_eq!(f.perm, vec![0, 1]);
    }

    #[test]
    fn w_model_drift_form() {
        let (m11, m21, m22, m32) = (1.1, 1.7, 0.6, 2.3);
        let n = net(3, 2, &[(1, 1, m11), (2, 1, m21), (2, 2, m22), (3, 2, m32)], &[1.0; 3]);
        let f = extract_drift_form(&n, &plan_for(&n)).unwrap();
        assert_close(
            &f.b1,
            &[vec![m11, 0.0, 0.0], vec![m22 - m21, m22, 0.0], vec![0.0, 0.0, m32]],
        );
        assert_close(&f.b2, &[vec![0.0, 0.0], vec![m21 - m22, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn w_model_unit_rates_give_identity_b1() {
        let n = net(3, 2, &[(1, 1, 1.0), (2, 1, 1.0), (2, 2, 1.0), (3, 2, 1.0)], &[1.0; 3]);
        let f = extract_drift_form(&n, &plan_for(&n)).unwrap();
        let id: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|k| f64::from(u8::from(i == k))).collect()).collect();
        assert_close(&f.b1, &id);
    }

    #[test]
    fn m_model_drift_form() {
        let (m11, m12, m22, m23) = (1.5, 0.5, 2.5, 3.5);
        let n = net(2, 3, &[(1, 1, m11), (1, 2, m12), (2, 2, m22), (2, 3, m23)], &[1.0, 1.0]);
        let f = extract_drift_form(&n, &plan_for(&n)).unwrap();
        assert_close(&f.b1, &[vec![m12, 0.0], vec![0.0, m22]]);
        assert_close(&f.b2, &[vec![m11 - m12, 0.0, 0.0], vec![0.0, 0.0, m23 - m22]]);
    }

    #[test]
    fn example_four_forms() {
        let n = net(
            4,
            3,
            &[(1, 1, 1.0), (2, 1, 1.0), (2, 2, 1.0), (2, 3, 1.0), (3, 3, 1.0), (4, 3, 1.0)],
            &[1.0; 4],
        );
        let e = eliminate(&n);
        assert_eq!(
            forms(&n, &e),
            vec![
                (1, 1, "a1".into()),
                (2, 1, "-a1 + b1".into()),
                (2, 2, "b2".into()),
                (2, 3, "a1 + a2 - b1 - b2".into()),
                (3, 3, "a3".into()),
                (4, 3, "a4".into())
            ]
        );
    }

    #[test]
    fn inverted_v_drift() {
        let mu = [1.0, 2.0, 4.0];
        let n = net(1, 3, &[(1, 1, mu[0]), (1, 2, mu[1]), (1, 3, mu[2])], &[0.8]);
        let plan = plan_for(&n);
        let u = ControlPoint::new(vec![1.0], vec![0.2, 0.3, 0.5]).unwrap();
        let rate: f64 = mu.iter().zip(&u.us).map(|(m, w)| m * w).sum();
        for x in [-3.0, -0.5, 0.0, 0.5, 3.0] {
            let b = drift(&n, &plan, &[x], &u).unwrap()[0];
            let expect = (-x).max(0.0) * rate - 0.8 * x.max(0.0);
            assert!((b - expect).abs() < 1e-12, "x={x}: {b} vs {expect}");
        }
    }

    #[test]
    fn n_model_drift_example() {
        let n = net(2, 2, &[(1, 1, 1.0), (1, 2, 2.0), (2, 2, 3.0)], &[0.5, 0.5]);
        let b = drift(&n, &plan_for(&n), &[1.0, 1.0], &ControlPoint::vertex(2, 2, 0, 0)).unwrap();
        assert_eq!(b, vec![1.0, -3.0]);
    }
}
