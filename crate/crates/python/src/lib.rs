//! Python module `sparseia`: sparse vectors, the node-level aggregation
//! steps, chain aggregation, the cost model and the training simulator.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use sparse_ia::aggregation::{self, Algorithm, AlgorithmParams};
use sparse_ia::cost;
use sparse_ia::sim::{self, Split, TrainConfig, MNIST_CLASSES, MNIST_FEATURES};
use sparse_ia::Error;

fn py_err(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Idx(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn wire(omega: u32, dim: usize) -> PyResult<cost::WireParams> {
    cost::WireParams::new(omega, dim).map_err(py_err)
}

#[pyclass(name = "SparseVector", module = "sparseia", from_py_object)]
#[derive(Clone)]
struct PySparseVector(sparse_ia::SparseVector);

#[pymethods]
impl PySparseVector {
    #[new]
    fn new(values: Vec<f64>) -> Self {
        Self(sparse_ia::SparseVector::from_dense(&values))
    }

    #[staticmethod]
    fn from_pairs(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> PyResult<Self> {
        if indices.len() != values.len() {
            return Err(PyValueError::new_err("indices and values differ in length"));
        }
        sparse_ia::SparseVector::from_pairs(dim, indices.into_iter().zip(values))
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn zeros(dim: usize) -> Self {
        Self(sparse_ia::SparseVector::zeros(dim))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.0.nnz()
    }

    #[getter]
    fn indices(&self) -> Vec<usize> {
        self.0.indices().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn to_dense(&self) -> Vec<f64> {
        self.0.to_dense()
    }

    fn support(&self) -> PyMask {
        PyMask(self.0.support())
    }

    fn top_q(&self, q: usize) -> Self {
        Self(self.0.top_q(q))
    }

    fn top_q_mask(&self, q: usize) -> PyMask {
        PyMask(self.0.top_q_mask(q))
    }

    fn masked(&self, mask: &PyMask) -> PyResult<Self> {
        self.0.masked(&mask.0).map(Self).map_err(py_err)
    }

    fn masked_complement(&self, mask: &PyMask) -> PyResult<Self> {
        self.0.masked_complement(&mask.0).map(Self).map_err(py_err)
    }

    fn sq_norm(&self) -> f64 {
        self.0.sq_norm()
    }

    fn scale(&self, factor: f64) -> Self {
        Self(self.0.scale(factor))
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        self.0.add(&other.0).map(Self).map_err(py_err)
    }

    fn __sub__(&self, other: &Self) -> PyResult<Self> {
        self.0.sub(&other.0).map(Self).map_err(py_err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __len__(&self) -> usize {
        self.0.dim()
    }

    fn __repr__(&self) -> String {
        format!("SparseVector(dim={}, nnz={})", self.0.dim(), self.0.nnz())
    }
}

#[pyclass(name = "Mask", module = "sparseia", from_py_object)]
#[derive(Clone)]
struct PyMask(sparse_ia::Mask);

#[pymethods]
impl PyMask {
    #[new]
    fn new(dim: usize, indices: Vec<usize>) -> PyResult<Self> {
        sparse_ia::Mask::from_unsorted(dim, indices).map(Self).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn indices(&self) -> Vec<usize> {
        self.0.indices().to_vec()
    }

    fn union(&self, other: &Self) -> PyResult<Self> {
        self.0.union(&other.0).map(Self).map_err(py_err)
    }

    fn difference(&self, other: &Self) -> PyResult<Self> {
        self.0.difference(&other.0).map(Self).map_err(py_err)
    }

    fn __contains__(&self, index: usize) -> bool {
        self.0.contains(index)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Mask(dim={}, indices={:?})", self.0.dim(), self.0.indices())
    }
}

#[pyclass(name = "MixedAggregate", module = "sparseia", from_py_object)]
#[derive(Clone)]
struct PyMixedAggregate(aggregation::MixedAggregate);

#[pymethods]
impl PyMixedAggregate {
    #[new]
    fn new(mask: &PyMask, gamma: Vec<f64>, lambda_: &PySparseVector) -> PyResult<Self> {
        aggregation::MixedAggregate::new(mask.0.clone(), gamma, lambda_.0.clone())
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn empty(mask: &PyMask) -> Self {
        Self(aggregation::MixedAggregate::empty(mask.0.clone()))
    }

    #[getter]
    fn mask(&self) -> PyMask {
        PyMask(self.0.mask().clone())
    }

    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.0.gamma().to_vec()
    }

    #[getter]
    fn lambda_(&self) -> PySparseVector {
        PySparseVector(self.0.lambda().clone())
    }

    fn to_dense(&self) -> Vec<f64> {
        self.0.to_dense()
    }
}

#[pyclass(name = "NodeState", module = "sparseia", from_py_object)]
#[derive(Clone)]
struct PyNodeState(aggregation::NodeState);

#[pymethods]
impl PyNodeState {
    #[new]
    fn new(id: usize, samples: u64, dim: usize) -> Self {
        Self(aggregation::NodeState::new(id, samples, dim))
    }

    #[getter]
    fn id(&self) -> usize {
        self.0.id()
    }

    #[getter]
    fn samples(&self) -> u64 {
        self.0.samples()
    }

    #[getter]
    fn error(&self) -> PySparseVector {
        PySparseVector(self.0.error().clone())
    }

    #[setter]
    fn set_error(&mut self, error: &PySparseVector) -> PyResult<()> {
        self.0.set_error(error.0.clone()).map_err(py_err)
    }

    fn reset(&mut self) {
        self.0.reset();
    }
}

fn parse_algorithm(name: &str) -> PyResult<Algorithm> {
    name.parse().map_err(|e: Error| PyValueError::new_err(e.to_string()))
}

fn params(algorithm: &str, q: usize, q_g: usize, q_l: usize) -> PyResult<AlgorithmParams> {
    let alg = parse_algorithm(algorithm)?;
    Ok(if alg.time_correlated() {
        AlgorithmParams::time_correlated(alg, q_g, q_l)
    } else {
        AlgorithmParams::plain(alg, q)
    })
}

#[pyfunction]
fn sia_step(
    state: &mut PyNodeState,
    gradient: &PySparseVector,
    incoming: &PySparseVector,
    q: usize,
) -> PyResult<PySparseVector> {
    aggregation::sia_step(&mut state.0, &gradient.0, &incoming.0, q)
        .map(PySparseVector)
        .map_err(py_err)
}

#[pyfunction]
fn re_sia_step(
    state: &mut PyNodeState,
    gradient: &PySparseVector,
    incoming: &PySparseVector,
    q: usize,
) -> PyResult<PySparseVector> {
    aggregation::re_sia_step(&mut state.0, &gradient.0, &incoming.0, q)
        .map(PySparseVector)
        .map_err(py_err)
}

#[pyfunction]
fn cl_sia_step(
    state: &mut PyNodeState,
    gradient: &PySparseVector,
    incoming: &PySparseVector,
    q: usize,
) -> PyResult<PySparseVector> {
    aggregation::cl_sia_step(&mut state.0, &gradient.0, &incoming.0, q)
        .map(PySparseVector)
        .map_err(py_err)
}

#[pyfunction]
fn tc_sia_step(
    state: &mut PyNodeState,
    gradient: &PySparseVector,
    incoming: &PyMixedAggregate,
    global_mask: &PyMask,
    q_l: usize,
) -> PyResult<PyMixedAggregate> {
    aggregation::tc_sia_step(&mut state.0, &gradient.0, &incoming.0, &global_mask.0, q_l)
        .map(PyMixedAggregate)
        .map_err(py_err)
}

#[pyfunction]
fn cl_tc_sia_step(
    state: &mut PyNodeState,
    gradient: &PySparseVector,
    incoming: &PyMixedAggregate,
    global_mask: &PyMask,
    q_l: usize,
) -> PyResult<PyMixedAggregate> {
    aggregation::cl_tc_sia_step(&mut state.0, &gradient.0, &incoming.0, &global_mask.0, q_l)
        .map(PyMixedAggregate)
        .map_err(py_err)
}

#[pyfunction]
fn compute_global_mask(current: Vec<f64>, previous: Vec<f64>, q_g: usize) -> PyResult<PyMask> {
    aggregation::compute_global_mask(&current, &previous, q_g)
        .map(PyMask)
        .map_err(py_err)
}

/// Runs one round along the chain, updating the node states in place.
/// Returns the dense `γ_1` and the bits sent on each hop (node K first).
#[pyfunction]
#[pyo3(signature = (nodes, gradients, algorithm, q=0, q_g=0, q_l=0, global_mask=None, omega=32))]
#[allow(clippy::too_many_arguments)]
fn chain_aggregate(
    nodes: Vec<Bound<'_, PyNodeState>>,
    gradients: Vec<PySparseVector>,
    algorithm: &str,
    q: usize,
    q_g: usize,
    q_l: usize,
    global_mask: Option<PyMask>,
    omega: u32,
) -> PyResult<(Vec<f64>, Vec<u64>)> {
    let params = params(algorithm, q, q_g, q_l)?;
    let dim = gradients.first().map(|g| g.0.dim()).unwrap_or(1);
    let mut states: Vec<aggregation::NodeState> = nodes.iter().map(|n| n.borrow().0.clone()).collect();
    let grads: Vec<sparse_ia::SparseVector> = gradients.into_iter().map(|g| g.0).collect();
    let (agg, ledger) = aggregation::chain_aggregate(
        &mut states,
        &grads,
        &params,
        global_mask.as_ref().map(|m| &m.0),
        &wire(omega, dim)?,
        0,
    )
    .map_err(py_err)?;
    for (node, state) in nodes.iter().zip(states) {
        node.borrow_mut().0 = state;
    }
    let bits = ledger.rounds()[0].hops.iter().map(|h| h.bits).collect();
    Ok((agg.to_dense(), bits))
}

#[pyfunction]
#[pyo3(signature = (clients, q, dim=7850, omega=32))]
fn cl_sia_cost(clients: usize, q: usize, dim: usize, omega: u32) -> PyResult<u64> {
    Ok(cost::cl_sia_cost(clients, q, &wire(omega, dim)?))
}

#[pyfunction]
#[pyo3(signature = (clients, q_g, q_l, dim=7850, omega=32))]
fn cl_tc_sia_cost(clients: usize, q_g: usize, q_l: usize, dim: usize, omega: u32) -> PyResult<u64> {
    Ok(cost::cl_tc_sia_cost(clients, q_g, q_l, &wire(omega, dim)?))
}

#[pyfunction]
fn unicast_routing_cost(clients: usize, per_gradient_bits: u64) -> u64 {
    cost::unicast_routing_cost(clients, per_gradient_bits)
}

#[pyfunction]
#[pyo3(signature = (clients, dim=7850, omega=32))]
fn dense_ia_cost(clients: usize, dim: usize, omega: u32) -> PyResult<u64> {
    Ok(cost::dense_ia_cost(clients, &wire(omega, dim)?))
}

#[pyfunction]
fn lambda_nnz_upper_bound(clients: usize, dim: usize, q_g: usize, q_l: usize) -> PyResult<f64> {
    cost::lambda_nnz_upper_bound(clients, dim, q_g, q_l).map_err(py_err)
}

/// Returns `(mean, standard_error)`.
#[pyfunction]
#[pyo3(signature = (clients, dim, q_g, q_l, trials=100_000, seed=1))]
fn mc_expected_lambda_nnz(
    clients: usize,
    dim: usize,
    q_g: usize,
    q_l: usize,
    trials: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    cost::mc_expected_lambda_nnz(clients, dim, q_g, q_l, trials, seed)
        .map(|e| (e.mean, e.std_err))
        .map_err(py_err)
}

/// `(round, accuracy, loss, total_bits, max_hop_nnz)`.
type RoundRow = (usize, Option<f64>, f64, u64, usize);

/// Trains on Gaussian blobs (or MNIST when `mnist_dir` is given) and returns
/// one `(round, accuracy, loss, total_bits, max_hop_nnz)` tuple per round;
/// `accuracy` is `None` on rounds without evaluation.
#[pyfunction]
#[pyo3(signature = (
    algorithm, clients, q=78, q_g=70, q_l=8, rounds=20, seed=1, batch_size=20,
    learning_rate=0.1, local_steps=1, eval_every=1, mnist_dir=None,
    synthetic_train=6000, synthetic_test=1000,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    algorithm: &str,
    clients: usize,
    q: usize,
    q_g: usize,
    q_l: usize,
    rounds: usize,
    seed: u64,
    batch_size: usize,
    learning_rate: f64,
    local_steps: usize,
    eval_every: usize,
    mnist_dir: Option<String>,
    synthetic_train: usize,
    synthetic_test: usize,
) -> PyResult<Vec<RoundRow>> {
    let mut cfg = TrainConfig::new(clients, params(algorithm, q, q_g, q_l)?);
    cfg.rounds = rounds;
    cfg.seed = seed;
    cfg.batch_size = batch_size;
    cfg.learning_rate = learning_rate;
    cfg.local_steps = local_steps;
    cfg.eval_every = eval_every;
    let metrics = py
        .detach(|| {
            let (train, test) = match &mnist_dir {
                Some(dir) => (
                    sim::load_mnist_dir(dir, Split::Train)?,
                    sim::load_mnist_dir(dir, Split::Test)?,
                ),
                None => sim::synthetic_split(synthetic_train, synthetic_test, MNIST_FEATURES, MNIST_CLASSES, seed)?,
            };
            sim::run_training(&cfg, &train, &test)
        })
        .map_err(py_err)?;
    Ok(metrics
        .iter()
        .map(|m| (m.round, m.accuracy, m.loss, m.total_bits, m.max_hop_nnz()))
        .collect())
}

#[pymodule]
fn sparseia(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySparseVector>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyMixedAggregate>()?;
    m.add_class::<PyNodeState>()?;
    m.add_function(wrap_pyfunction!(sia_step, m)?)?;
    m.add_function(wrap_pyfunction!(re_sia_step, m)?)?;
    m.add_function(wrap_pyfunction!(cl_sia_step, m)?)?;
    m.add_function(wrap_pyfunction!(tc_sia_step, m)?)?;
    m.add_function(wrap_pyfunction!(cl_tc_sia_step, m)?)?;
    m.add_function(wrap_pyfunction!(compute_global_mask, m)?)?;
    m.add_function(wrap_pyfunction!(chain_aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(cl_sia_cost, m)?)?;
    m.add_function(wrap_pyfunction!(cl_tc_sia_cost, m)?)?;
    m.add_function(wrap_pyfunction!(unicast_routing_cost, m)?)?;
    m.add_function(wrap_pyfunction!(dense_ia_cost, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_nnz_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(mc_expected_lambda_nnz, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
