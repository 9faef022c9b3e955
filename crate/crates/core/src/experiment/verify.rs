//! Property suites run by `sparse-ia verify`.
//!
//! Each suite checks one invariant on randomly generated or exhaustively
//! enumerated instances and reports the worst observed margin.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregation::{
    chain_aggregate, cl_sia_step, re_sia_step, sia_step, Algorithm, AlgorithmParams, NodeState, PartialAggregate,
};
use crate::cost::{lambda_nnz_upper_bound, mc_expected_lambda_nnz, WireParams};
use crate::error::Result;
use crate::experiment::config::BoundCase;
use crate::sparse::{Mask, SparseVector};

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyReport {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_owned(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub trials: usize,
    /// Replaces the default Monte-Carlo cases when set.
    pub bound_case: Option<BoundCase>,
    /// Drops one node's error feedback so the conservation suite must fail.
    pub inject_bug: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 100_000,
            bound_case: None,
            inject_bug: false,
        }
    }
}

pub const DEFAULT_BOUND_CASES: [BoundCase; 3] = [(10, 0, 2, 3), (100, 10, 5, 8), (7850, 70, 8, 28)];

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<PropertyReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    Ok(vec![
        top_q_optimality(&mut rng),
        re_sia_dominance(&mut rng, 1000)?,
        cl_optimality(&mut rng)?,
        lambda_bound(opts)?,
        lambda_exhaustive(6, 0, 2, 2)?,
        conservation(&mut rng, opts.inject_bug)?,
        sandwich(&mut rng)?,
        constant_length(&mut rng)?,
        full_budget_degeneracy(&mut rng)?,
    ])
}

/// Integer-valued vector with many zeros and ties.
fn small_int_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-3i32..=3) as f64).collect()
}

fn gaussian_like(rng: &mut impl Rng, dim: usize, density: f64) -> SparseVector {
    let dense: Vec<f64> = (0..dim)
        .map(|_| {
            if rng.random_bool(density) {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    SparseVector::from_dense(&dense)
}

/// Smallest `||v - w||^2` over all `w` supported on at most `q` indices.
pub fn brute_force_min_error(v: &[f64], q: usize) -> f64 {
    let d = v.len();
    let total: f64 = v.iter().map(|x| x * x).sum();
    (0u32..1 << d)
        .filter(|s| s.count_ones() as usize <= q)
        .map(|s| {
            let kept: f64 = (0..d).filter(|i| s >> i & 1 == 1).map(|i| v[i] * v[i]).sum();
            total - kept
        })
        .fold(f64::INFINITY, f64::min)
}

fn sq_dist(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    Ok(a.sub(b)?.sq_norm())
}

fn top_q_optimality(rng: &mut ChaCha8Rng) -> PropertyReport {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for dim in 1..=8 {
        for _ in 0..200 {
            let v = small_int_vector(rng, dim);
            let sv = SparseVector::from_dense(&v);
            for q in 0..=dim {
                let err = sv.sub(&sv.top_q(q)).map(|r| r.sq_norm()).unwrap_or(f64::INFINITY);
                worst = worst.max(err - brute_force_min_error(&v, q));
                cases += 1;
            }
        }
    }
    PropertyReport::new(
        "top-q optimality",
        worst <= 1e-12,
        format!("{cases} cases, worst excess error {worst:.3e}"),
    )
}

fn re_sia_dominance(rng: &mut ChaCha8Rng, instances: usize) -> Result<PropertyReport> {
    let (dim, q) = (32, 4);
    let (mut violations, mut strict_cases, mut min_gap) = (0, 0, f64::INFINITY);
    for _ in 0..instances {
        let g = gaussian_like(rng, dim, 0.7);
        let density = rng.random_range(0.0..0.5);
        let incoming = gaussian_like(rng, dim, density);
        let mut a = NodeState::new(1, 1, dim);
        let mut b = NodeState::new(1, 1, dim);
        sia_step(&mut a, &g, &incoming, q)?;
        re_sia_step(&mut b, &g, &incoming, q)?;
        let (e_sia, e_re) = (a.error().sq_norm(), b.error().sq_norm());
        let top = g.top_q_mask(q);
        let strict = incoming
            .support()
            .difference(&top)?
            .indices()
            .iter()
            .any(|&i| g.get(i) != 0.0);
        let ok = if strict { e_re < e_sia } else { e_re <= e_sia };
        if strict {
            strict_cases += 1;
            min_gap = min_gap.min(e_sia - e_re);
        }
        if !ok {
            violations += 1;
        }
    }
    Ok(PropertyReport::new(
        "re-sia error dominance",
        violations == 0,
        format!("{instances} instances, {strict_cases} strict, {violations} violations, min strict gap {min_gap:.3e}"),
    ))
}

fn cl_optimality(rng: &mut ChaCha8Rng) -> Result<PropertyReport> {
    let (mut worst, mut cases) = (0.0f64, 0);
    for dim in 1..=8 {
        for _ in 0..100 {
            let g = SparseVector::from_dense(&small_int_vector(rng, dim));
            let incoming = SparseVector::from_dense(&small_int_vector(rng, dim));
            let summed = g.add(&incoming)?;
            for q in 0..=dim {
                let mut s = NodeState::new(1, 1, dim);
                let out = cl_sia_step(&mut s, &g, &incoming, q)?;
                let err = sq_dist(&summed, &out)?;
                worst = worst.max(err - brute_force_min_error(&summed.to_dense(), q));
                cases += 1;
            }
        }
    }
    Ok(PropertyReport::new(
        "cl-sia optimality",
        worst <= 1e-12,
        format!("{cases} cases, worst excess error {worst:.3e}"),
    ))
}

fn lambda_bound(opts: &VerifyOptions) -> Result<PropertyReport> {
    let cases: Vec<BoundCase> = match opts.bound_case {
        Some(c) => vec![c],
        None => DEFAULT_BOUND_CASES.to_vec(),
    };
    let mut passed = true;
    let mut parts = Vec::new();
    for (i, &(d, q_g, q_l, k)) in cases.iter().enumerate() {
        let bound = lambda_nnz_upper_bound(k, d, q_g, q_l)?;
        let mc = mc_expected_lambda_nnz(k, d, q_g, q_l, opts.trials, opts.seed.wrapping_add(i as u64))?;
        // margin in standard errors; negative means the mean exceeds the bound
        let margin = if mc.std_err > 0.0 {
            (bound - mc.mean) / mc.std_err
        } else if mc.mean <= bound + 1e-9 * bound.abs().max(1.0) {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        passed &= margin >= -3.0;
        parts.push(format!(
            "(d={d},qg={q_g},ql={q_l},k={k}) mc {:.4} +- {:.4} vs bound {bound:.4}, margin {margin:.2} se",
            mc.mean, mc.std_err
        ));
    }
    Ok(PropertyReport::new("local support bound", passed, parts.join("; ")))
}

/// Exact `E[sum_k |S_k|]` by enumerating every sequence of `K` subsets.
pub fn exhaustive_lambda_nnz(clients: usize, dim: usize, q_g: usize, q_l: usize) -> f64 {
    let free = dim - q_g;
    let subsets: Vec<u64> = (0u64..1 << free).filter(|s| s.count_ones() as usize == q_l).collect();
    fn walk(subsets: &[u64], depth: usize, union: u64, acc: f64) -> (f64, f64) {
        if depth == 0 {
            return (acc, 1.0);
        }
        subsets.iter().fold((0.0, 0.0), |(sum, n), s| {
            let u = union | s;
            let (x, m) = walk(subsets, depth - 1, u, acc + u.count_ones() as f64);
            (sum + x, n + m)
        })
    }
    let (sum, n) = walk(&subsets, clients, 0, 0.0);
    sum / n
}

fn lambda_exhaustive(dim: usize, q_g: usize, q_l: usize, k: usize) -> Result<PropertyReport> {
    let exact = exhaustive_lambda_nnz(k, dim, q_g, q_l);
    let bound = lambda_nnz_upper_bound(k, dim, q_g, q_l)?;
    Ok(PropertyReport::new(
        "local support bound (exhaustive)",
        exact <= bound + 1e-12,
        format!("(d={dim},qg={q_g},ql={q_l},k={k}) exact {exact:.6} vs bound {bound:.6}"),
    ))
}

fn params_for(alg: Algorithm, dim: usize) -> AlgorithmParams {
    if alg.time_correlated() {
        AlgorithmParams::time_correlated(alg, dim / 4, 2)
    } else {
        AlgorithmParams::plain(alg, 3)
    }
}

fn random_mask(rng: &mut ChaCha8Rng, dim: usize, size: usize) -> Mask {
    let idx = rand::seq::index::sample(rng, dim, size).into_vec();
    Mask::from_unsorted(dim, idx).expect("indices below dim")
}

/// `γ_1 + sum e_k^t = sum (D_k g_k^t + e_k^{t-1})` over several rounds.
fn conservation(rng: &mut ChaCha8Rng, inject_bug: bool) -> Result<PropertyReport> {
    let (dim, k, rounds) = (24, 5, 6);
    let wire = WireParams::new(32, dim)?;
    let mut worst = 0.0f64;
    for alg in Algorithm::ALL {
        let params = params_for(alg, dim);
        let mut nodes: Vec<NodeState> = (1..=k).map(|i| NodeState::new(i, i as u64 + 1, dim)).collect();
        for t in 0..rounds {
            let gradients: Vec<SparseVector> = (0..k).map(|_| gaussian_like(rng, dim, 0.8)).collect();
            let mask = alg.time_correlated().then(|| random_mask(rng, dim, params.q_g));
            let mut expected = vec![0.0; dim];
            for (n, g) in nodes.iter().zip(&gradients) {
                for (i, x) in g.iter() {
                    expected[i] += n.samples() as f64 * x;
                }
                for (i, x) in n.error().iter() {
                    expected[i] += x;
                }
            }
            let (agg, _) = chain_aggregate(&mut nodes, &gradients, &params, mask.as_ref(), &wire, t)?;
            if inject_bug {
                nodes[0].reset();
            }
            let mut got = agg.to_dense();
            for n in &nodes {
                for (i, x) in n.error().iter() {
                    got[i] += x;
                }
            }
            let scale = expected.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let err = got.iter().zip(&expected).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(err / scale);
        }
    }
    Ok(PropertyReport::new(
        "mass conservation",
        worst <= 1e-9,
        format!("5 algorithms x {rounds} rounds, worst relative deviation {worst:.3e}"),
    ))
}

/// `max(min(Q, nnz g~), nnz γ_in) <= nnz γ_out <= min(Q, nnz g~) + nnz γ_in`
/// at every hop of SIA and RE-SIA chains.
fn sandwich(rng: &mut ChaCha8Rng) -> Result<PropertyReport> {
    let (dim, k, q) = (40, 8, 4);
    let (mut hops, mut violations) = (0, 0);
    let mut slack_low = usize::MAX;
    for alg in [Algorithm::Sia, Algorithm::ReSia] {
        for _ in 0..50 {
            let mut nodes: Vec<NodeState> = (1..=k).map(|i| NodeState::new(i, 1, dim)).collect();
            for _ in 0..3 {
                let mut incoming = SparseVector::zeros(dim);
                for node in nodes.iter_mut().rev() {
                    let g = gaussian_like(rng, dim, 0.5);
                    let own = node.error().add(&g)?.nnz().min(q);
                    let out = match alg {
                        Algorithm::Sia => sia_step(node, &g, &incoming, q)?,
                        _ => re_sia_step(node, &g, &incoming, q)?,
                    };
                    let low = own.max(incoming.nnz());
                    let high = own + incoming.nnz();
                    if out.nnz() < low || out.nnz() > high {
                        violations += 1;
                    }
                    slack_low = slack_low.min(out.nnz().saturating_sub(low));
                    hops += 1;
                    incoming = out;
                }
            }
        }
    }
    Ok(PropertyReport::new(
        "sandwich bound",
        violations == 0,
        format!("{hops} hops, {violations} violations, min slack above lower bound {slack_low}"),
    ))
}

/// Per-hop length limits of the constant-length variants and Γ/Λ
/// disjointness of both time-correlated variants.
fn constant_length(rng: &mut ChaCha8Rng) -> Result<PropertyReport> {
    let (dim, k) = (30, 6);
    let mut violations = 0;
    let mut hops = 0;
    for alg in [Algorithm::ClSia, Algorithm::TcSia, Algorithm::ClTcSia] {
        let params = params_for(alg, dim);
        let mut nodes: Vec<NodeState> = (1..=k).map(|i| NodeState::new(i, 2, dim)).collect();
        for _ in 0..20 {
            let mask = alg.time_correlated().then(|| random_mask(rng, dim, params.q_g));
            let mut agg = PartialAggregate::initial(&params, dim, mask.as_ref())?;
            for node in nodes.iter_mut().rev() {
                let g = gaussian_like(rng, dim, 0.6);
                agg = crate::aggregation::node_step(node, &g, &agg, &params)?;
                hops += 1;
                let ok = match &agg {
                    PartialAggregate::Plain(v) => v.nnz() <= params.q,
                    PartialAggregate::Mixed(m) => {
                        let disjoint = m.lambda().support().is_disjoint(m.mask());
                        let sized = m.gamma().len() == params.q_g;
                        let short = alg != Algorithm::ClTcSia || m.lambda().nnz() <= params.q_l;
                        let err_off = alg != Algorithm::ClTcSia || node.error().support().is_disjoint(m.mask());
                        disjoint && sized && short && err_off
                    }
                };
                if !ok {
                    violations += 1;
                }
            }
        }
    }
    Ok(PropertyReport::new(
        "constant length and disjointness",
        violations == 0,
        format!("{hops} hops, {violations} violations"),
    ))
}

/// With a full budget every algorithm forwards exactly `sum D_k g_k`.
fn full_budget_degeneracy(rng: &mut ChaCha8Rng) -> Result<PropertyReport> {
    let (dim, k) = (16, 5);
    let wire = WireParams::new(32, dim)?;
    let gradients: Vec<SparseVector> = (0..k).map(|_| gaussian_like(rng, dim, 0.7)).collect();
    let mut expected = vec![0.0; dim];
    for (i, g) in gradients.iter().enumerate() {
        for (j, x) in g.iter() {
            expected[j] += (i + 1) as f64 * x;
        }
    }
    let mut worst = 0.0f64;
    for alg in Algorithm::ALL {
        let params = if alg.time_correlated() {
            AlgorithmParams::time_correlated(alg, dim / 2, dim - dim / 2)
        } else {
            AlgorithmParams::plain(alg, dim)
        };
        let mut nodes: Vec<NodeState> = (1..=k).map(|i| NodeState::new(i, i as u64, dim)).collect();
        let mask = alg.time_correlated().then(|| random_mask(rng, dim, params.q_g));
        let (agg, _) = chain_aggregate(&mut nodes, &gradients, &params, mask.as_ref(), &wire, 0)?;
        let scale = expected.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let err = agg
            .to_dense()
            .iter()
            .zip(&expected)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / scale);
        if nodes.iter().any(|n| !n.error().is_zero()) {
            worst = f64::INFINITY;
        }
    }
    Ok(PropertyReport::new(
        "full-budget degeneracy",
        worst <= 1e-9,
        format!("5 algorithms, worst relative deviation {worst:.3e}"),
    ))
}
