//! Communication cost as a function of the number of clients.
//!
//! Every sweep point trains each of the five algorithms with evaluation
//! switched off and averages the ledger over the run. Baselines and the
//! expected-support bounds are computed in closed form.

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::{Algorithm, AlgorithmParams};
use crate::cost::{
    dense_ia_cost, dense_unit_bits, lambda_nnz_upper_bound, mixed_unit_bits, plain_unit_bits, unicast_routing_cost,
    WireParams,
};
use crate::error::{Error, Result};
use crate::experiment::config::ExperimentPlan;
use crate::sim::{Dataset, LogisticRegression, Simulation, TrainConfig};

/// One `(K, Q)` point. `*_bits` are mean bits per round; `*_norm` divide by
/// the size of a single transmission in the respective format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub q: usize,
    pub q_g: usize,
    pub q_l: usize,
    pub sia_bits: f64,
    pub re_sia_bits: f64,
    pub cl_sia_bits: f64,
    pub tc_sia_bits: f64,
    pub cl_tc_sia_bits: f64,
    pub unicast_bits: f64,
    pub dense_ia_bits: f64,
    pub sia_bound_bits: f64,
    pub tc_sia_bound_bits: f64,
    pub sia_norm: f64,
    pub re_sia_norm: f64,
    pub cl_sia_norm: f64,
    pub tc_sia_norm: f64,
    pub cl_tc_sia_norm: f64,
    pub unicast_norm: f64,
    pub dense_ia_norm: f64,
}

impl SweepRow {
    pub fn bits(&self, algorithm: Algorithm) -> f64 {
        match algorithm {
            Algorithm::Sia => self.sia_bits,
            Algorithm::ReSia => self.re_sia_bits,
            Algorithm::ClSia => self.cl_sia_bits,
            Algorithm::TcSia => self.tc_sia_bits,
            Algorithm::ClTcSia => self.cl_tc_sia_bits,
        }
    }
}

/// Mean bits per round of a training run with `cfg`, evaluation disabled.
pub fn measured_bits(cfg: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<f64> {
    let mut cfg = cfg.clone();
    cfg.eval_every = 0;
    let mut sim = Simulation::new(cfg.clone(), train, test)?;
    for _ in 0..cfg.rounds {
        sim.step()?;
    }
    Ok(sim.ledger().mean_bits_per_round())
}

fn point_config(base: &TrainConfig, k: usize, params: AlgorithmParams) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.clients = k;
    cfg.params = params;
    cfg
}

/// Runs the sweep over `plan.k_list x plan.q_list`.
pub fn cost_sweep(plan: &ExperimentPlan, train: &Dataset, test: &Dataset) -> Result<Vec<SweepRow>> {
    if plan.train.rounds == 0 {
        return Err(Error::Config("cost sweep needs at least one round".into()));
    }
    let dim = LogisticRegression::for_dataset(train).dim();
    let wire = WireParams::new(plan.train.omega, dim)?;
    let points: Vec<(usize, usize)> = plan
        .k_list
        .iter()
        .flat_map(|&k| plan.q_list.iter().map(move |&q| (k, q)))
        .collect();

    let jobs: Vec<(usize, usize, Algorithm)> = points
        .iter()
        .flat_map(|&(k, q)| Algorithm::ALL.iter().map(move |&a| (k, q, a)))
        .collect();
    let measured: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, q, alg)| {
            let (q_g, q_l) = plan.budgets_for(q);
            let params = if alg.time_correlated() {
                AlgorithmParams::time_correlated(alg, q_g, q_l)
            } else {
                AlgorithmParams::plain(alg, q)
            };
            measured_bits(&point_config(&plan.train, k, params), train, test)
        })
        .collect::<Result<_>>()?;

    points
        .iter()
        .zip(measured.chunks(Algorithm::ALL.len()))
        .map(|(&(k, q), bits)| {
            let (q_g, q_l) = plan.budgets_for(q);
            let [sia, re_sia, cl_sia, tc_sia, cl_tc_sia] = [bits[0], bits[1], bits[2], bits[3], bits[4]];
            let plain_unit = plain_unit_bits(q, &wire) as f64;
            let mixed_unit = mixed_unit_bits(q_g, q_l, &wire) as f64;
            let dense_unit = dense_unit_bits(&wire) as f64;
            let entry = wire.sparse_entry_bits() as f64;
            let unicast = unicast_routing_cost(k, plain_unit_bits(q, &wire)) as f64;
            let dense = dense_ia_cost(k, &wire) as f64;
            let sia_bound = entry * lambda_nnz_upper_bound(k, dim, 0, q.min(dim))?;
            let tc_bound =
                (k * q_g) as f64 * wire.value_bits() as f64 + entry * lambda_nnz_upper_bound(k, dim, q_g, q_l)?;
            let norm = |bits: f64, unit: f64| if unit > 0.0 { bits / unit } else { 0.0 };
            Ok(SweepRow {
                k,
                q,
                q_g,
                q_l,
                sia_bits: sia,
                re_sia_bits: re_sia,
                cl_sia_bits: cl_sia,
                tc_sia_bits: tc_sia,
                cl_tc_sia_bits: cl_tc_sia,
                unicast_bits: unicast,
                dense_ia_bits: dense,
                sia_bound_bits: sia_bound,
                tc_sia_bound_bits: tc_bound,
                sia_norm: norm(sia, plain_unit),
                re_sia_norm: norm(re_sia, plain_unit),
                cl_sia_norm: norm(cl_sia, plain_unit),
                tc_sia_norm: norm(tc_sia, mixed_unit),
                cl_tc_sia_norm: norm(cl_tc_sia, mixed_unit),
                unicast_norm: norm(unicast, plain_unit),
                dense_ia_norm: norm(dense, dense_unit),
            })
        })
        .collect()
}

/// Serializes sweep rows as CSV with a header and LF line endings.
pub fn write_sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
