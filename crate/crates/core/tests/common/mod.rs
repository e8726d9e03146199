//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use hwctrl::config::ModelSpec;
use hwctrl::elimination::{extract_drift_form, DriftForm};
use hwctrl::network::Network;
use hwctrl::plan::{solve_static_plan, StaticPlan};

pub struct Model {
    pub spec: ModelSpec,
    pub net: Network,
    pub plan: StaticPlan,
    pub form: DriftForm,
}

pub fn model(file: &str) -> Model {
    let path = format!("{}/../../specs/{file}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    let spec = ModelSpec::from_json(&text).unwrap();
    let net = spec.network().unwrap();
    let plan = solve_static_plan(&net).unwrap();
    let form = extract_drift_form(&net, &plan).unwrap();
    Model { spec, net, plan, form }
}

/// Stationary law of the one-dimensional diffusion `dX = b(X) dt + sigma dW`,
/// tabulated by trapezoidal quadrature of `p(x) ∝ exp(2/sigma^2 ∫_0^x b)`.
pub struct Density1d {
    pub xs: Vec<f64>,
    pub p: Vec<f64>,
    pub dx: f64,
}

impl Density1d {
    pub fn new(b: impl Fn(f64) -> f64, sigma: f64, radius: f64, n: usize) -> Self {
        let dx = 2.0 * radius / n as f64;
        let xs: Vec<f64> = (0..=n).map(|k| -radius + k as f64 * dx).collect();
        let mid = n / 2;
        let mut logp = vec![0.0; n + 1];
        let k2 = 2.0 / (sigma * sigma);
        // integrate outward from the origin with Simpson's rule on each cell
        for k in mid + 1..=n {
            let (a, c) = (xs[k - 1], xs[k]);
            logp[k] = logp[k - 1] + k2 * (b(a) + 4.0 * b(0.5 * (a + c)) + b(c)) * dx / 6.0;
        }
        for k in (0..mid).rev() {
            let (a, c) = (xs[k], xs[k + 1]);
            logp[k] = logp[k + 1] - k2 * (b(a) + 4.0 * b(0.5 * (a + c)) + b(c)) * dx / 6.0;
        }
        let top = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logp.iter().map(|l| (l - top).exp()).collect();
        let z = trapezoid(&p, dx);
        for v in p.iter_mut() {
            *v /= z;
        }
        Self { xs, p, dx }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self.xs.iter().zip(&self.p).map(|(&x, &p)| f(x) * p).collect();
        trapezoid(&vals, self.dx)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.xs.len() {
            if self.xs[k] > x {
                let t = (x - self.xs[k - 1]) / self.dx;
                return acc + 0.5 * t * self.dx * (self.p[k - 1] + self.p[k - 1] + t * (self.p[k] - self.p[k - 1]));
            }
            acc += 0.5 * self.dx * (self.p[k - 1] + self.p[k]);
        }
        acc
    }
}

fn trapezoid(v: &[f64], dx: f64) -> f64 {
    let n = v.len();
    dx * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

/// Inverted-V drift under a constant pool split `us`: `-gamma x` above zero,
/// `-sum_j mu_j us_j x` below, plus `ell`.
pub fn inverted_v_drift(gamma: f64, mu: &[f64], us: &[f64], ell: f64) -> impl Fn(f64) -> f64 {
    let rate: f64 = mu.iter().zip(us).map(|(m, u)| m * u).sum();
    move |x| if x > 0.0 { -gamma * x + ell } else { -rate * x + ell }
}

/// Ergodic cost of a constant control on the one-class network by quadrature.
pub fn inverted_v_cost(gamma: f64, lambda: f64, mu: &[f64], us: &[f64], xi: f64, zeta: &[f64]) -> (f64, Vec<f64>) {
    let d = Density1d::new(inverted_v_drift(gamma, mu, us, 0.0), (2.0 * lambda).sqrt(), 12.0, 24_000);
    let pos = d.expect(|x| x.max(0.0));
    let neg = d.expect(|x| (-x).max(0.0));
    let idle: Vec<f64> = us.iter().map(|u| u * neg).collect();
    let cost = xi * pos + zeta.iter().zip(&idle).map(|(z, r)| z * r).sum::<f64>();
    (cost, idle)
}

/// Exact stationary law of the Erlang-A birth–death chain, truncated where
/// the tail mass is negligible. Returns `P(X = k)`.
pub fn erlang_a(lambda: f64, mu: f64, servers: usize, gamma: f64) -> Vec<f64> {
    let mut p = vec![1.0_f64];
    let mut k = 0usize;
    loop {
        let death = (k + 1).min(servers) as f64 * mu + (k + 1).saturating_sub(servers) as f64 * gamma;
        let next = p[k] * lambda / death;
        p.push(next);
        k += 1;
        if k > servers && next < 1e-18 * p.iter().cloned().fold(0.0, f64::max) {
            break;
        }
    }
    let z: f64 = p.iter().sum();
    p.iter().map(|v| v / z).collect()
}

use hwctrl::network::{ClassSpec, EdgeSpec, NetworkSpec, PoolSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random critically loaded bipartite tree with `ni` classes and `nj` pools.
/// The fluid service matrix is drawn first and the arrival rates are derived
/// from it, so the returned `z` is the exact static plan.
pub fn random_tree(seed: u64, ni: usize, nj: usize) -> (NetworkSpec, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // node k < ni is class k, otherwise pool k - ni
    let mut nodes: Vec<usize> = (0..ni + nj).collect();
    nodes.shuffle(&mut rng);
    let mut placed: Vec<usize> = Vec::new();
    let mut pending = nodes;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    placed.push(pending.remove(0));
    while !pending.is_empty() {
        let pos = pending
            .iter()
            .position(|&v| placed.iter().any(|&p| (p < ni) != (v < ni)))
            .expect("both node kinds are present");
        let v = pending.remove(pos);
        let partners: Vec<usize> = placed.iter().copied().filter(|&p| (p < ni) != (v < ni)).collect();
        let p = partners[rng.random_range(0..partners.len())];
        let (c, pl) = if v < ni { (v, p - ni) } else { (p, v - ni) };
        edges.push((c, pl));
        placed.push(v);
    }
    let nu: Vec<f64> = (0..nj).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut z = vec![vec![0.0; nj]; ni];
    for j in 0..nj {
        let members: Vec<usize> = edges.iter().filter(|e| e.1 == j).map(|e| e.0).collect();
        let w: Vec<f64> = members.iter().map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = w.iter().sum();
        for (&i, wi) in members.iter().zip(&w) {
            z[i][j] = nu[j] * wi / s;
        }
    }
    let mu: Vec<f64> = edges.iter().map(|_| rng.random_range(0.5..3.0)).collect();
    let lambda: Vec<f64> = (0..ni)
        .map(|i| edges.iter().zip(&mu).filter(|(e, _)| e.0 == i).map(|(e, m)| m * z[i][e.1]).sum())
        .collect();
    let spec = NetworkSpec {
        classes: lambda
            .iter()
            .map(|&l| ClassSpec { lambda: l, lambda_hat: rng.random_range(-1.0..1.0), gamma: rng.random_range(0.2..2.0) })
            .collect(),
        pools: nu.iter().map(|&v| PoolSpec { nu: v }).collect(),
        edges: edges
            .iter()
            .zip(&mu)
            .map(|(&(c, p), &m)| EdgeSpec { class: c + 1, pool: p + 1, mu: m, mu_hat: rng.random_range(-0.5..0.5) })
            .collect(),
    };
    (spec, z)
}

/// A random point of the domain `e.alpha = e.beta`.
pub fn random_domain_point<R: Rng>(rng: &mut R, ni: usize, nj: usize) -> (Vec<f64>, Vec<f64>) {
    let alpha: Vec<f64> = (0..ni).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut beta: Vec<f64> = (0..nj).map(|_| rng.random_range(-5.0..5.0)).collect();
    let gap: f64 = alpha.iter().sum::<f64>() - beta.iter().sum::<f64>();
    beta[nj - 1] += gap;
    (alpha, beta)
}

/// Dense oracle for `G`: the unique edge-supported matrix with row sums
/// `alpha` and column sums `beta`, from the normal equations of the full
/// (consistent, overdetermined) system.
pub fn dense_gmap(net: &Network, alpha: &[f64], beta: &[f64]) -> Vec<Vec<f64>> {
    use nalgebra::{DMatrix, DVector};
    let (ni, nj) = (net.num_classes(), net.num_pools());
    let edges = net.edges();
    let mut a = DMatrix::<f64>::zeros(ni + nj, edges.len());
    for (k, e) in edges.iter().enumerate() {
        a[(e.class, k)] = 1.0;
        a[(ni + e.pool, k)] = 1.0;
    }
    let rhs = DVector::from_iterator(ni + nj, alpha.iter().chain(beta).copied());
    let svd = a.svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).expect("svd solve");
    let mut psi = vec![vec![0.0; nj]; ni];
    for (k, e) in edges.iter().enumerate() {
        psi[e.class][e.pool] = sol[k];
    }
    psi
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs())).fold(0.0, f64::max)
}
