//! Flat `key=value` configuration and its resolution into an [`ExperimentPlan`].
//!
//! Config files hold one `key=value` per line; `#` starts a comment. Keys
//! use the long command-line flag names without dashes (`local-steps`,
//! `mnist-dir`, ...). Values given on the command line replace file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::aggregation::{Algorithm, AlgorithmParams};
use crate::cost::DEFAULT_OMEGA;
use crate::error::{Error, Result};
use crate::sim::{PartitionScheme, TrainConfig};

pub const MNIST_DIR_ENV: &str = "SPARSEIA_MNIST_DIR";

pub const KEYS: &[&str] = &[
    "alg",
    "k",
    "q",
    "qg",
    "ql",
    "rounds",
    "batch",
    "lr",
    "local-steps",
    "seed",
    "omega",
    "mnist-dir",
    "synthetic",
    "synthetic-train",
    "synthetic-test",
    "out",
    "trials",
    "k-list",
    "q-list",
    "d",
    "eval-every",
    "partition",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim()
        .trim_start_matches("--")
        .to_ascii_lowercase()
        .replace('_', "-")
}

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{raw}'", lineno + 1)))?;
            map.set(key, value.trim())?;
        }
        Ok(map)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = normalize_key(key);
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.entries.insert(key, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    /// Entries of `overrides` replace entries of `self`.
    pub fn overlay(&mut self, overrides: &ConfigMap) {
        for (k, v) in &overrides.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.get(key)
            .map(|v| {
                let items: Result<Vec<usize>> = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::Config(format!("invalid entry '{s}' in '{key}'")))
                    })
                    .collect();
                let items = items?;
                if items.is_empty() {
                    return Err(Error::Config(format!("'{key}' must not be empty")));
                }
                Ok(items)
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "" | "1" | "true" | "yes" | "on" => Ok(true),
                "0" | "false" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!("invalid boolean '{v}' for '{key}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Mnist(PathBuf),
    Synthetic {
        train: usize,
        test: usize,
    },
    /// MNIST requested but no directory configured.
    MissingMnist,
}

/// Local share of a combined budget: 10 % of `q`, rounded to nearest.
pub fn default_local_budget(q: usize) -> usize {
    (q + 5) / 10
}

/// Local-support growth case `(d, q_g, q_l, K)` for the bound check.
pub type BoundCase = (usize, usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub train: TrainConfig,
    pub data: DataSource,
    pub out_dir: PathBuf,
    pub q: usize,
    pub q_g: usize,
    pub q_l: usize,
    pub k_list: Vec<usize>,
    pub q_list: Vec<usize>,
    pub trials: usize,
    /// Explicit Monte-Carlo case for `verify`, when `d`, `ql` or `k` was given.
    pub bound_case: Option<BoundCase>,
    pub resolved: ConfigMap,
}

impl ExperimentPlan {
    /// Resolves `map` (file values overlaid with flags) against defaults.
    /// `env_mnist_dir` is consulted only when `mnist-dir` is absent.
    pub fn from_map(map: &ConfigMap, env_mnist_dir: Option<String>) -> Result<Self> {
        let algorithm = match map.get("alg") {
            Some(a) => Algorithm::from_str(a).map_err(|e| Error::Config(e.to_string()))?,
            None => Algorithm::Sia,
        };
        let clients = map.parsed("k")?.unwrap_or(28usize);
        let q = map.parsed("q")?.unwrap_or(78usize);
        let q_l = map.parsed("ql")?.unwrap_or_else(|| default_local_budget(q));
        let q_g = match map.parsed::<usize>("qg")? {
            Some(v) => v,
            None => q
                .checked_sub(q_l)
                .ok_or_else(|| Error::Config(format!("ql = {q_l} exceeds q = {q}")))?,
        };
        let params = if algorithm.time_correlated() {
            AlgorithmParams::time_correlated(algorithm, q_g, q_l)
        } else {
            AlgorithmParams::plain(algorithm, q)
        };

        let mut train = TrainConfig::new(clients, params);
        train.rounds = map.parsed("rounds")?.unwrap_or(200);
        train.batch_size = map.parsed("batch")?.unwrap_or(20);
        train.learning_rate = map.parsed("lr")?.unwrap_or(0.1);
        train.local_steps = map.parsed("local-steps")?.unwrap_or(1);
        train.seed = map.parsed("seed")?.unwrap_or(1);
        train.omega = map.parsed("omega")?.unwrap_or(DEFAULT_OMEGA);
        train.eval_every = map.parsed("eval-every")?.unwrap_or(1);
        train.partition = match map.get("partition") {
            None | Some("iid") => PartitionScheme::Iid,
            Some("label-sorted") => PartitionScheme::LabelSorted,
            Some(other) => return Err(Error::Config(format!("unknown partition '{other}'"))),
        };
        if train.clients == 0 || train.batch_size == 0 || train.local_steps == 0 || train.omega == 0 {
            return Err(Error::Config("k, batch, local-steps and omega must be positive".into()));
        }
        if !(train.learning_rate.is_finite() && train.learning_rate >= 0.0) {
            return Err(Error::Config("lr must be finite and non-negative".into()));
        }

        let data = if map.flag("synthetic")? {
            DataSource::Synthetic {
                train: map.parsed("synthetic-train")?.unwrap_or(6000),
                test: map.parsed("synthetic-test")?.unwrap_or(1000),
            }
        } else {
            match map.get("mnist-dir").map(str::to_owned).or(env_mnist_dir) {
                Some(dir) => DataSource::Mnist(PathBuf::from(dir)),
                None => DataSource::MissingMnist,
            }
        };

        let trials = map.parsed("trials")?.unwrap_or(100_000);
        if trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let bound_case = if ["d", "ql", "k", "qg"].iter().any(|k| map.get(k).is_some()) {
            Some((
                map.parsed("d")?.unwrap_or(7850),
                map.parsed("qg")?.unwrap_or(0),
                q_l,
                clients,
            ))
        } else {
            None
        };

        Ok(Self {
            train,
            data,
            out_dir: PathBuf::from(map.get("out").unwrap_or(".")),
            q,
            q_g,
            q_l,
            k_list: map.list("k-list")?.unwrap_or_else(|| (1..=7).map(|i| 4 * i).collect()),
            q_list: map.list("q-list")?.unwrap_or_else(|| vec![q]),
            trials,
            bound_case,
            resolved: map.clone(),
        })
    }

    /// Budgets `(q_g, q_l)` for a sweep point: the configured split for the
    /// configured `q`, the 90/10 split otherwise.
    pub fn budgets_for(&self, q: usize) -> (usize, usize) {
        if q == self.q {
            (self.q_g, self.q_l)
        } else {
            let q_l = default_local_budget(q);
            (q - q_l, q_l)
        }
    }
}
