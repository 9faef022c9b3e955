//! Per-node sparse incremental aggregation and chain execution.
//!
//! Nodes are arranged in a chain `K -> K-1 -> ... -> 1 -> PS`. Node `k`
//! receives the partial aggregate of node `k+1`, folds in its own
//! error-compensated, sample-weighted gradient `D_k g_k + e_k` and forwards
//! the result. Five step variants are provided:
//!
//! | algorithm   | sparsifies                          | outgoing format |
//! |-------------|-------------------------------------|-----------------|
//! | `Sia`       | own gradient, Top-Q                 | plain           |
//! | `ReSia`     | own gradient, Top-Q ∪ incoming supp | plain           |
//! | `ClSia`     | sum with incoming, Top-Q            | plain           |
//! | `TcSia`     | global ∪ local Top-Q_L ∪ incoming   | mixed           |
//! | `ClTcSia`   | off-mask part of the sum, Top-Q_L   | mixed           |
//!
//! Every step maintains `γ_out + e_new = γ_in + D_k g_k + e_old` exactly, up
//! to floating-point rounding.

use std::fmt;
use std::str::FromStr;

use crate::cost::{CommLedger, HopRecord, WireParams};
use crate::error::{check_dim, contract, Error, Result};
use crate::sparse::{top_q_mask_dense, Mask, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Sia,
    ReSia,
    ClSia,
    TcSia,
    ClTcSia,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Sia,
        Algorithm::ReSia,
        Algorithm::ClSia,
        Algorithm::TcSia,
        Algorithm::ClTcSia,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sia => "sia",
            Algorithm::ReSia => "re-sia",
            Algorithm::ClSia => "cl-sia",
            Algorithm::TcSia => "tc-sia",
            Algorithm::ClTcSia => "cl-tc-sia",
        }
    }

    /// Whether the algorithm needs a shared global mask and emits mixed aggregates.
    pub fn time_correlated(self) -> bool {
        matches!(self, Algorithm::TcSia | Algorithm::ClTcSia)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| contract(format!("unknown algorithm '{s}'")))
    }
}

/// Sparsification budgets. `q` is used by the plain variants, `q_g`/`q_l`
/// by the time-correlated ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgorithmParams {
    pub algorithm: Algorithm,
    pub q: usize,
    pub q_g: usize,
    pub q_l: usize,
}

impl AlgorithmParams {
    pub fn plain(algorithm: Algorithm, q: usize) -> Self {
        Self {
            algorithm,
            q,
            q_g: 0,
            q_l: 0,
        }
    }

    pub fn time_correlated(algorithm: Algorithm, q_g: usize, q_l: usize) -> Self {
        Self {
            algorithm,
            q: q_g + q_l,
            q_g,
            q_l,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.algorithm.time_correlated() && self.q_g + self.q_l > dim {
            return Err(contract(format!(
                "q_g + q_l = {} exceeds model dimension {dim}",
                self.q_g + self.q_l
            )));
        }
        Ok(())
    }
}

/// Persistent per-client state: id, local sample count and error-feedback memory.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    id: usize,
    samples: u64,
    error: SparseVector,
}

impl NodeState {
    pub fn new(id: usize, samples: u64, dim: usize) -> Self {
        Self {
            id,
            samples,
            error: SparseVector::zeros(dim),
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn error(&self) -> &SparseVector {
        &self.error
    }

    pub fn set_error(&mut self, error: SparseVector) -> Result<()> {
        check_dim(self.error.dim(), error.dim())?;
        self.error = error;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.error = SparseVector::zeros(self.error.dim());
    }

    /// `D_k g_k + e_k`.
    fn compensated(&self, gradient: &SparseVector) -> Result<SparseVector> {
        check_dim(self.error.dim(), gradient.dim())?;
        gradient.scale(self.samples as f64).add(&self.error)
    }
}

/// Mixed-format aggregate: values on the shared global mask (no indices)
/// plus a sparse remainder living strictly off the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedAggregate {
    mask: Mask,
    gamma: Vec<f64>,
    lambda: SparseVector,
}

impl MixedAggregate {
    pub fn new(mask: Mask, gamma: Vec<f64>, lambda: SparseVector) -> Result<Self> {
        check_dim(mask.dim(), lambda.dim())?;
        if gamma.len() != mask.len() {
            return Err(contract(format!(
                "global block has {} values for a mask of {} indices",
                gamma.len(),
                mask.len()
            )));
        }
        if !lambda.support().is_disjoint(&mask) {
            return Err(contract("local block overlaps the global mask"));
        }
        Ok(Self { mask, gamma, lambda })
    }

    pub fn empty(mask: Mask) -> Self {
        let dim = mask.dim();
        Self {
            gamma: vec![0.0; mask.len()],
            mask,
            lambda: SparseVector::zeros(dim),
        }
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Global-mask values aligned to ascending mask indices.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn lambda(&self) -> &SparseVector {
        &self.lambda
    }

    pub fn dim(&self) -> usize {
        self.mask.dim()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = self.lambda.to_dense();
        for (&i, &v) in self.mask.indices().iter().zip(&self.gamma) {
            out[i] = v;
        }
        out
    }
}

/// The unit forwarded hop-to-hop.
#[derive(Debug, Clone, PartialEq)]
pub enum PartialAggregate {
    Plain(SparseVector),
    Mixed(MixedAggregate),
}

impl PartialAggregate {
    /// The aggregate entering node `K`.
    pub fn initial(params: &AlgorithmParams, dim: usize, global_mask: Option<&Mask>) -> Result<Self> {
        if params.algorithm.time_correlated() {
            let mask = global_mask.ok_or_else(|| contract(format!("{} requires a global mask", params.algorithm)))?;
            check_dim(dim, mask.dim())?;
            Ok(Self::Mixed(MixedAggregate::empty(mask.clone())))
        } else {
            Ok(Self::Plain(SparseVector::zeros(dim)))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Plain(v) => v.dim(),
            Self::Mixed(m) => m.dim(),
        }
    }

    /// Transmitted entries: `nnz(γ)` or `|Γ| + nnz(Λ)`.
    pub fn nnz(&self) -> usize {
        match self {
            Self::Plain(v) => v.nnz(),
            Self::Mixed(m) => m.gamma.len() + m.lambda.nnz(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            Self::Plain(v) => v.to_dense(),
            Self::Mixed(m) => m.to_dense(),
        }
    }
}

/// Top-Q sparsification of the own gradient, then incremental aggregation.
pub fn sia_step(
    state: &mut NodeState,
    gradient: &SparseVector,
    incoming: &SparseVector,
    q: usize,
) -> Result<SparseVector> {
    check_dim(gradient.dim(), incoming.dim())?;
    let compensated = state.compensated(gradient)?;
    let sparse = compensated.top_q(q);
    state.error = compensated.sub(&sparse)?;
    sparse.add(incoming)
}

/// Like [`sia_step`], but additionally sends every own entry that falls on
/// the incoming support, which costs no extra indices.
pub fn re_sia_step(
    state: &mut NodeState,
    gradient: &SparseVector,
    incoming: &SparseVector,
    q: usize,
) -> Result<SparseVector> {
    check_dim(gradient.dim(), incoming.dim())?;
    let compensated = state.compensated(gradient)?;
    let send = compensated.top_q_mask(q).union(&incoming.support())?;
    let sparse = compensated.masked(&send)?;
    state.error = compensated.sub(&sparse)?;
    sparse.add(incoming)
}

/// Aggregates first, then keeps the Q largest entries of the sum, so the
/// outgoing vector never exceeds the budget.
pub fn cl_sia_step(
    state: &mut NodeState,
    gradient: &SparseVector,
    incoming: &SparseVector,
    q: usize,
) -> Result<SparseVector> {
    check_dim(gradient.dim(), incoming.dim())?;
    let summed = state.compensated(gradient)?.add(incoming)?;
    let out = summed.top_q(q);
    state.error = summed.sub(&out)?;
    Ok(out)
}

/// Top-`q_g` mask of the global model movement `w_t - w_prev`. When the
/// movement has fewer than `q_g` nonzeros, the lowest unused indices fill the
/// remaining slots so the mask always has exactly `q_g` entries.
pub fn compute_global_mask(current: &[f64], previous: &[f64], q_g: usize) -> Result<Mask> {
    check_dim(current.len(), previous.len())?;
    let dim = current.len();
    if q_g > dim {
        return Err(contract(format!("q_g = {q_g} exceeds model dimension {dim}")));
    }
    let diff: Vec<f64> = current.iter().zip(previous).map(|(a, b)| a - b).collect();
    let top = top_q_mask_dense(&diff, q_g);
    if top.len() == q_g {
        return Ok(top);
    }
    let missing = q_g - top.len();
    let filler: Vec<usize> = (0..dim).filter(|i| !top.contains(*i)).take(missing).collect();
    top.union(&Mask::new(dim, filler)?)
}

fn check_mixed_input(incoming: &MixedAggregate, global_mask: &Mask) -> Result<()> {
    check_dim(global_mask.dim(), incoming.dim())?;
    if incoming.gamma.len() != global_mask.len() {
        return Err(contract(format!(
            "incoming global block has {} values but the global mask has {} indices",
            incoming.gamma.len(),
            global_mask.len()
        )));
    }
    if !incoming.lambda.support().is_disjoint(global_mask) {
        return Err(contract("incoming local block overlaps the global mask"));
    }
    Ok(())
}

/// Γ += values of `v` on the mask.
fn accumulate_on_mask(gamma: &mut [f64], mask: &Mask, v: &SparseVector) {
    for (i, x) in v.iter() {
        if let Some(pos) = mask.rank_of(i) {
            gamma[pos] += x;
        }
    }
}

/// Time-correlated step: sends the own gradient on the global mask, its
/// Top-`q_l` off-mask entries and anything on the incoming local support.
pub fn tc_sia_step(
    state: &mut NodeState,
    gradient: &SparseVector,
    incoming: &MixedAggregate,
    global_mask: &Mask,
    q_l: usize,
) -> Result<MixedAggregate> {
    check_mixed_input(incoming, global_mask)?;
    let compensated = state.compensated(gradient)?;
    let local = compensated.masked_complement(global_mask)?.top_q_mask(q_l);
    let send = global_mask.union(&local)?.union(&incoming.lambda.support())?;
    let sparse = compensated.masked(&send)?;
    state.error = compensated.sub(&sparse)?;

    let mut gamma = incoming.gamma.clone();
    accumulate_on_mask(&mut gamma, global_mask, &sparse);
    let lambda = incoming.lambda.add(&sparse.masked_complement(global_mask)?)?;
    Ok(MixedAggregate {
        mask: global_mask.clone(),
        gamma,
        lambda,
    })
}

/// Constant-length time-correlated step: the global block is aggregated
/// densely, the off-mask sum is cut to its Top-`q_l` entries.
pub fn cl_tc_sia_step(
    state: &mut NodeState,
    gradient: &SparseVector,
    incoming: &MixedAggregate,
    global_mask: &Mask,
    q_l: usize,
) -> Result<MixedAggregate> {
    check_mixed_input(incoming, global_mask)?;
    let compensated = state.compensated(gradient)?;

    let mut gamma = incoming.gamma.clone();
    accumulate_on_mask(&mut gamma, global_mask, &compensated);
    let summed = incoming.lambda.add(&compensated.masked_complement(global_mask)?)?;
    let lambda = summed.top_q(q_l);
    state.error = summed.sub(&lambda)?;
    Ok(MixedAggregate {
        mask: global_mask.clone(),
        gamma,
        lambda,
    })
}

/// Runs the step selected by `params` at one node.
pub fn node_step(
    state: &mut NodeState,
    gradient: &SparseVector,
    incoming: &PartialAggregate,
    params: &AlgorithmParams,
) -> Result<PartialAggregate> {
    match (params.algorithm, incoming) {
        (Algorithm::Sia, PartialAggregate::Plain(v)) => {
            sia_step(state, gradient, v, params.q).map(PartialAggregate::Plain)
        }
        (Algorithm::ReSia, PartialAggregate::Plain(v)) => {
            re_sia_step(state, gradient, v, params.q).map(PartialAggregate::Plain)
        }
        (Algorithm::ClSia, PartialAggregate::Plain(v)) => {
            cl_sia_step(state, gradient, v, params.q).map(PartialAggregate::Plain)
        }
        (Algorithm::TcSia, PartialAggregate::Mixed(m)) => {
            tc_sia_step(state, gradient, m, m.mask(), params.q_l).map(PartialAggregate::Mixed)
        }
        (Algorithm::ClTcSia, PartialAggregate::Mixed(m)) => {
            cl_tc_sia_step(state, gradient, m, m.mask(), params.q_l).map(PartialAggregate::Mixed)
        }
        (alg, _) => Err(contract(format!("{alg} received an aggregate of the wrong format"))),
    }
}

/// Runs one aggregation round along the chain. `nodes[i]` and
/// `gradients[i]` belong to client `i + 1`; execution goes from the last
/// node to the first. Returns `γ_1` and the per-hop ledger for `round`.
pub fn chain_aggregate(
    nodes: &mut [NodeState],
    gradients: &[SparseVector],
    params: &AlgorithmParams,
    global_mask: Option<&Mask>,
    wire: &WireParams,
    round: usize,
) -> Result<(PartialAggregate, CommLedger)> {
    if nodes.is_empty() {
        return Err(contract("chain needs at least one node"));
    }
    if nodes.len() != gradients.len() {
        return Err(contract(format!(
            "{} nodes but {} gradients",
            nodes.len(),
            gradients.len()
        )));
    }
    let dim = wire.dim();
    params.validate(dim)?;
    if params.algorithm.time_correlated() {
        if let Some(mask) = global_mask {
            if mask.len() != params.q_g {
                return Err(contract(format!(
                    "global mask has {} indices, expected q_g = {}",
                    mask.len(),
                    params.q_g
                )));
            }
        }
    }
    let mut aggregate = PartialAggregate::initial(params, dim, global_mask)?;
    let mut hops = Vec::with_capacity(nodes.len());
    for (node, gradient) in nodes.iter_mut().zip(gradients).rev() {
        aggregate = node_step(node, gradient, &aggregate, params)?;
        hops.push(HopRecord::from_aggregate(node.id(), &aggregate, wire)?);
    }
    let mut ledger = CommLedger::new();
    ledger.record_round(round, hops);
    Ok((aggregate, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(values: &[f64]) -> SparseVector {
        SparseVector::from_dense(values)
    }

    fn node(dim: usize) -> NodeState {
        NodeState::new(1, 1, dim)
    }

    #[test]
    fn sia_example() {
        let mut s = node(4);
        let out = sia_step(&mut s, &sv(&[3.0, -5.0, 1.0, 0.5]), &sv(&[0.0, 0.0, 2.0, 0.0]), 2).unwrap();
        assert_eq!(out.to_dense(), vec![3.0, -5.0, 2.0, 0.0]);
        assert_eq!(s.error().to_dense(), vec![0.0, 0.0, 1.0, 0.5]);
    }

    #[test]
    fn sia_without_sparsification() {
        let mut s = NodeState::new(1, 3, 4);
        s.set_error(sv(&[0.0, 1.0, 0.0, 0.0])).unwrap();
        let out = sia_step(&mut s, &sv(&[1.0, 0.0, 2.0, 0.0]), &sv(&[0.0, 0.0, 0.0, 4.0]), 4).unwrap();
        assert_eq!(out.to_dense(), vec![3.0, 1.0, 6.0, 4.0]);
        assert!(s.error().is_zero());

        let mut s = node(4);
        let incoming = sv(&[1.0, 0.0, 0.0, 2.0]);
        let out = sia_step(&mut s, &SparseVector::zeros(4), &incoming, 2).unwrap();
        assert_eq!(out, incoming);
        assert!(s.error().is_zero());
    }

    #[test]
    fn re_sia_example() {
        let mut s = node(4);
        let out = re_sia_step(&mut s, &sv(&[3.0, -5.0, 1.0, 0.5]), &sv(&[0.0, 0.0, 2.0, 0.0]), 2).unwrap();
        assert_eq!(out.to_dense(), vec![3.0, -5.0, 3.0, 0.0]);
        assert_eq!(s.error().to_dense(), vec![0.0, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn re_sia_matches_sia_on_empty_incoming() {
        let g = sv(&[0.3, -2.0, 1.0, 0.5, 4.0]);
        let (mut a, mut b) = (node(5), node(5));
        let zero = SparseVector::zeros(5);
        let x = sia_step(&mut a, &g, &zero, 2).unwrap();
        let y = re_sia_step(&mut b, &g, &zero, 2).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.error(), b.error());
    }

    #[test]
    fn re_sia_covered_support_has_no_error() {
        let mut s = node(4);
        re_sia_step(&mut s, &sv(&[1.0, 2.0, 0.0, 0.0]), &sv(&[1.0, 1.0, 1.0, 0.0]), 1).unwrap();
        assert!(s.error().is_zero());
    }

    #[test]
    fn cl_sia_example() {
        let mut s = node(4);
        let out = cl_sia_step(&mut s, &sv(&[3.0, -5.0, 1.0, 0.5]), &sv(&[0.0, 0.0, 2.0, 0.0]), 2).unwrap();
        assert_eq!(out.to_dense(), vec![3.0, -5.0, 0.0, 0.0]);
        assert_eq!(s.error().to_dense(), vec![0.0, 0.0, 3.0, 0.5]);

        let mut s = node(4);
        let out = cl_sia_step(&mut s, &sv(&[1.0, 0.0, 0.0, 0.0]), &sv(&[0.0, 1.0, 0.0, 0.0]), 3).unwrap();
        assert_eq!(out.nnz(), 2);
        assert!(s.error().is_zero());
    }

    #[test]
    fn global_mask_examples() {
        let prev = vec![0.0; 4];
        let mask = compute_global_mask(&[0.5, -2.0, 0.0, 1.0], &prev, 2).unwrap();
        assert_eq!(mask.indices(), &[1, 3]);
        assert_eq!(compute_global_mask(&prev, &prev, 2).unwrap().indices(), &[0, 1]);
        assert!(compute_global_mask(&prev, &prev, 0).unwrap().is_empty());
        // one moving coordinate, filled with the lowest unused index
        let mask = compute_global_mask(&[0.0, 0.0, 3.0, 0.0], &prev, 2).unwrap();
        assert_eq!(mask.indices(), &[0, 2]);
        assert!(compute_global_mask(&prev, &prev, 5).is_err());
    }

    fn tc_fixture() -> (Mask, MixedAggregate, SparseVector) {
        let mask = Mask::new(4, vec![0]).unwrap();
        let incoming = MixedAggregate::new(mask.clone(), vec![2.0], sv(&[0.0, 0.0, 5.0, 0.0])).unwrap();
        (mask, incoming, sv(&[1.0, 4.0, -3.0, 0.2]))
    }

    #[test]
    fn tc_sia_example() {
        let (mask, incoming, g) = tc_fixture();
        let mut s = node(4);
        let out = tc_sia_step(&mut s, &g, &incoming, &mask, 1).unwrap();
        assert_eq!(out.gamma(), &[3.0]);
        assert_eq!(out.lambda().to_dense(), vec![0.0, 4.0, 2.0, 0.0]);
        assert_eq!(s.error().to_dense(), vec![0.0, 0.0, 0.0, 0.2]);
    }

    #[test]
    fn tc_sia_with_empty_mask_is_re_sia() {
        let g = sv(&[0.3, -2.0, 1.0, 0.5, 4.0]);
        let incoming = sv(&[0.0, 0.0, 0.0, 1.0, 0.0]);
        let empty = Mask::empty(5);
        let mixed = MixedAggregate::new(empty.clone(), vec![], incoming.clone()).unwrap();
        let (mut a, mut b) = (node(5), node(5));
        let tc = tc_sia_step(&mut a, &g, &mixed, &empty, 2).unwrap();
        let re = re_sia_step(&mut b, &g, &incoming, 2).unwrap();
        assert_eq!(tc.lambda(), &re);
        assert_eq!(a.error(), b.error());
    }

    #[test]
    fn tc_sia_global_only() {
        let mask = Mask::new(4, vec![1, 2]).unwrap();
        let mut s = node(4);
        let out = tc_sia_step(
            &mut s,
            &sv(&[9.0, 1.0, 2.0, 7.0]),
            &MixedAggregate::empty(mask.clone()),
            &mask,
            0,
        )
        .unwrap();
        assert!(out.lambda().is_zero());
        assert_eq!(out.gamma(), &[1.0, 2.0]);
        assert_eq!(s.error().to_dense(), vec![9.0, 0.0, 0.0, 7.0]);
    }

    #[test]
    fn tc_steps_reject_overlap() {
        let (_, incoming, g) = tc_fixture();
        // a different mask of the same size that covers the incoming local entry
        let other = Mask::new(4, vec![2]).unwrap();
        let mut s = node(4);
        assert!(matches!(
            tc_sia_step(&mut s, &g, &incoming, &other, 1),
            Err(Error::Contract(_))
        ));
        assert!(cl_tc_sia_step(&mut s, &g, &incoming, &other, 1).is_err());
        assert!(MixedAggregate::new(other, vec![1.0], sv(&[0.0, 0.0, 1.0, 0.0])).is_err());
    }

    #[test]
    fn cl_tc_sia_example() {
        let (mask, incoming, g) = tc_fixture();
        let mut s = node(4);
        let out = cl_tc_sia_step(&mut s, &g, &incoming, &mask, 1).unwrap();
        assert_eq!(out.gamma(), &[3.0]);
        assert_eq!(out.lambda().to_dense(), vec![0.0, 4.0, 0.0, 0.0]);
        assert_eq!(s.error().to_dense(), vec![0.0, 0.0, 2.0, 0.2]);

        let mut s = node(4);
        let out = cl_tc_sia_step(&mut s, &g, &incoming, &mask, 3).unwrap();
        assert_eq!(out.lambda().nnz(), 3);
        assert!(s.error().is_zero());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert_eq!("CL_TC_SIA".parse::<Algorithm>().unwrap(), Algorithm::ClTcSia);
        assert!("topk".parse::<Algorithm>().is_err());
    }

    #[test]
    fn chain_single_node_without_sparsification() {
        let wire = WireParams::new(32, 3).unwrap();
        for alg in Algorithm::ALL {
            let params = if alg.time_correlated() {
                AlgorithmParams::time_correlated(alg, 1, 2)
            } else {
                AlgorithmParams::plain(alg, 3)
            };
            let mask = Mask::new(3, vec![1]).unwrap();
            let mut nodes = vec![NodeState::new(1, 2, 3)];
            nodes[0].set_error(sv(&[0.0, 0.0, 1.0])).unwrap();
            let (agg, ledger) =
                chain_aggregate(&mut nodes, &[sv(&[1.0, -1.0, 0.5])], &params, Some(&mask), &wire, 0).unwrap();
            assert_eq!(agg.to_dense(), vec![2.0, -2.0, 2.0], "{alg}");
            assert_eq!(ledger.rounds().len(), 1);
        }
    }

    #[test]
    fn chain_rejects_bad_input() {
        let wire = WireParams::new(32, 3).unwrap();
        let params = AlgorithmParams::plain(Algorithm::Sia, 1);
        assert!(chain_aggregate(&mut [], &[], &params, None, &wire, 0).is_err());
        let mut nodes = vec![NodeState::new(1, 1, 3)];
        assert!(chain_aggregate(&mut nodes, &[], &params, None, &wire, 0).is_err());
        let tc = AlgorithmParams::time_correlated(Algorithm::TcSia, 1, 1);
        let g = [SparseVector::zeros(3)];
        assert!(chain_aggregate(&mut nodes, &g, &tc, None, &wire, 0).is_err());
        let wrong_len = Mask::new(3, vec![0, 1]).unwrap();
        assert!(chain_aggregate(&mut nodes, &g, &tc, Some(&wrong_len), &wire, 0).is_err());
        let big = AlgorithmParams::time_correlated(Algorithm::TcSia, 2, 2);
        assert!(chain_aggregate(&mut nodes, &g, &big, Some(&wrong_len), &wire, 0).is_err());
    }

    #[test]
    fn chain_runs_last_node_first() {
        let wire = WireParams::new(32, 4).unwrap();
        let params = AlgorithmParams::plain(Algorithm::ClSia, 1);
        let mut nodes: Vec<_> = (1..=3).map(|k| NodeState::new(k, 1, 4)).collect();
        let grads = vec![
            sv(&[1.0, 0.0, 0.0, 0.0]),
            sv(&[0.0, 2.0, 0.0, 0.0]),
            sv(&[0.0, 0.0, 3.0, 0.0]),
        ];
        let (agg, ledger) = chain_aggregate(&mut nodes, &grads, &params, None, &wire, 7).unwrap();
        let hops = &ledger.round(7).unwrap().hops;
        assert_eq!(hops.iter().map(|h| h.node).collect::<Vec<_>>(), vec![3, 2, 1]);
        // node 3 keeps 3, node 2 keeps 3 (drops its own 2), node 1 keeps 3
        assert_eq!(agg.to_dense(), vec![0.0, 0.0, 3.0, 0.0]);
        assert_eq!(nodes[0].error().to_dense(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(nodes[1].error().to_dense(), vec![0.0, 2.0, 0.0, 0.0]);
    }
}
