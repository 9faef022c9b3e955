//! Communication accounting for sparse incremental aggregation.
//!
//! Every transmitted entry costs `omega` bits for its value. Entries whose
//! position is not implied by a shared global mask additionally carry an
//! absolute `ceil(log2 d)`-bit index. Global-mask values are sent as a bare
//! array of exactly `|mask|` words, even when some of them are zero.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aggregation::PartialAggregate;
use crate::error::{check_dim, contract, Result};

pub const DEFAULT_OMEGA: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireParams {
    omega: u32,
    dim: usize,
}

impl WireParams {
    pub fn new(omega: u32, dim: usize) -> Result<Self> {
        if omega == 0 {
            return Err(contract("omega must be positive"));
        }
        if dim == 0 {
            return Err(contract("model dimension must be positive"));
        }
        Ok(Self { omega, dim })
    }

    pub fn omega(&self) -> u32 {
        self.omega
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ceil(log2 d)`.
    pub fn index_bits(&self) -> u32 {
        if self.dim <= 1 {
            0
        } else {
            usize::BITS - (self.dim - 1).leading_zeros()
        }
    }

    /// Cost of one `(index, value)` pair.
    pub fn sparse_entry_bits(&self) -> u64 {
        u64::from(self.omega) + u64::from(self.index_bits())
    }

    /// Cost of one value whose position is known to the receiver.
    pub fn value_bits(&self) -> u64 {
        u64::from(self.omega)
    }
}

/// One transmission from node `node` to node `node - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HopRecord {
    pub node: usize,
    /// Words sent without indices (`|Γ|`); zero for plain aggregates.
    pub global_words: usize,
    /// Entries sent as `(index, value)` pairs.
    pub indexed_nnz: usize,
    pub bits: u64,
}

impl HopRecord {
    pub fn from_aggregate(node: usize, agg: &PartialAggregate, wire: &WireParams) -> Result<Self> {
        let (global_words, indexed_nnz) = match agg {
            PartialAggregate::Plain(v) => (0, v.nnz()),
            PartialAggregate::Mixed(m) => (m.gamma().len(), m.lambda().nnz()),
        };
        Ok(Self {
            node,
            global_words,
            indexed_nnz,
            bits: transmission_bits(agg, wire)?,
        })
    }

    /// Total transmitted entries, `|Γ| + nnz(Λ)` or `nnz(γ)`.
    pub fn nnz(&self) -> usize {
        self.global_words + self.indexed_nnz
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: usize,
    pub hops: Vec<HopRecord>,
}

impl RoundRecord {
    pub fn total_bits(&self) -> u64 {
        self.hops.iter().map(|h| h.bits).sum()
    }

    pub fn max_hop_nnz(&self) -> usize {
        self.hops.iter().map(HopRecord::nnz).max().unwrap_or(0)
    }
}

/// Append-only per-round, per-hop transmission log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    rounds: Vec<RoundRecord>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_round(&mut self, round: usize, hops: Vec<HopRecord>) {
        self.rounds.push(RoundRecord { round, hops });
    }

    pub fn append(&mut self, other: CommLedger) {
        self.rounds.extend(other.rounds);
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn round(&self, round: usize) -> Option<&RoundRecord> {
        self.rounds.iter().find(|r| r.round == round)
    }

    pub fn total_bits(&self) -> u64 {
        self.rounds.iter().map(RoundRecord::total_bits).sum()
    }

    /// Mean bits per recorded round; zero for an empty ledger.
    pub fn mean_bits_per_round(&self) -> f64 {
        if self.rounds.is_empty() {
            0.0
        } else {
            self.total_bits() as f64 / self.rounds.len() as f64
        }
    }
}

pub fn transmission_bits(agg: &PartialAggregate, wire: &WireParams) -> Result<u64> {
    check_dim(wire.dim(), agg.dim())?;
    Ok(match agg {
        PartialAggregate::Plain(v) => wire.sparse_entry_bits() * v.nnz() as u64,
        PartialAggregate::Mixed(m) => {
            wire.value_bits() * m.gamma().len() as u64 + wire.sparse_entry_bits() * m.lambda().nnz() as u64
        }
    })
}

/// `K Q (omega + ceil(log2 d))`.
pub fn cl_sia_cost(clients: usize, q: usize, wire: &WireParams) -> u64 {
    (clients * q) as u64 * wire.sparse_entry_bits()
}

/// `K omega Q_G + (omega + ceil(log2 d)) K Q_L`.
pub fn cl_tc_sia_cost(clients: usize, q_g: usize, q_l: usize, wire: &WireParams) -> u64 {
    (clients * q_g) as u64 * wire.value_bits() + (clients * q_l) as u64 * wire.sparse_entry_bits()
}

/// Conventional routing: node `k` relays `k` separate gradients, `(K^2+K)/2`
/// transmissions in total.
pub fn unicast_routing_cost(clients: usize, per_gradient_bits: u64) -> u64 {
    ((clients * clients + clients) / 2) as u64 * per_gradient_bits
}

/// Dense incremental aggregation: `K` dense vectors, no indices.
pub fn dense_ia_cost(clients: usize, wire: &WireParams) -> u64 {
    (clients * wire.dim()) as u64 * wire.value_bits()
}

/// Single-transmission size of a plain sparse vector with `q` entries.
pub fn plain_unit_bits(q: usize, wire: &WireParams) -> u64 {
    q as u64 * wire.sparse_entry_bits()
}

/// Single-transmission size of a mixed aggregate with `q_g` global and `q_l` local entries.
pub fn mixed_unit_bits(q_g: usize, q_l: usize, wire: &WireParams) -> u64 {
    q_g as u64 * wire.value_bits() + q_l as u64 * wire.sparse_entry_bits()
}

pub fn dense_unit_bits(wire: &WireParams) -> u64 {
    wire.dim() as u64 * wire.value_bits()
}

pub fn normalized_cost(total_bits: f64, unit_bits: f64) -> f64 {
    total_bits / unit_bits
}

/// Upper bound on `sum_k E[nnz(Λ_k)]` over `K` hops when each hop adds
/// `Q_L` local entries drawn from the `d - Q_G` off-mask positions.
pub fn lambda_nnz_upper_bound(clients: usize, dim: usize, q_g: usize, q_l: usize) -> Result<f64> {
    if q_g > dim || q_l > dim - q_g {
        return Err(contract(format!("need q_g + q_l <= d (q_g={q_g}, q_l={q_l}, d={dim})")));
    }
    if q_l == 0 {
        return Ok(0.0);
    }
    let free = (dim - q_g) as f64;
    let keep = 1.0 - q_l as f64 / free;
    let k1 = clients as f64 + 1.0;
    Ok(free * (k1 - free / q_l as f64 * (1.0 - keep.powi(clients as i32 + 1))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub std_err: f64,
    pub trials: usize,
}

/// Monte-Carlo estimate of `sum_k |S_k|`, where `S_k` is the union of `k`
/// independent uniformly random `Q_L`-subsets of the `d - Q_G` off-mask slots.
pub fn mc_expected_lambda_nnz(
    clients: usize,
    dim: usize,
    q_g: usize,
    q_l: usize,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(contract("trials must be at least 1"));
    }
    if q_g > dim || q_l > dim - q_g {
        return Err(contract(format!("need q_g + q_l <= d (q_g={q_g}, q_l={q_l}, d={dim})")));
    }
    let free = dim - q_g;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stamp[i] == trial + 1 marks slot i as occupied in the current trial
    let mut stamp = vec![0usize; free];
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for trial in 1..=trials {
        let mut occupied = 0usize;
        let mut total = 0usize;
        for _ in 0..clients {
            if q_l > 0 {
                for slot in sample(&mut rng, free, q_l) {
                    if stamp[slot] != trial {
                        stamp[slot] = trial;
                        occupied += 1;
                    }
                }
            }
            total += occupied;
        }
        let x = total as f64;
        sum += x;
        sum_sq += x * x;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = if trials > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_err: (var / n).sqrt(),
        trials,
    })
}
