//! `sparse-ia`: train, sweep communication cost, and verify properties.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O or data error,
//! 3 property-verification failure.

use std::path::Path;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparse_ia::experiment::{
    cost_sweep, run_all, write_atomic, write_sweep_csv, ConfigMap, DataSource, ExperimentPlan, VerifyOptions,
    MNIST_DIR_ENV,
};
use sparse_ia::sim::{
    load_mnist_dir, run_training, synthetic_split, write_metrics_csv, Dataset, Split, MNIST_CLASSES, MNIST_FEATURES,
};
use sparse_ia::Error;

#[derive(Parser)]
#[command(name = "sparse-ia", version, about = "Sparse incremental aggregation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train logistic regression over a chain of clients and write per-round metrics.
    Train(CommonArgs),
    /// Measure bits per round for every algorithm across client counts.
    CostSweep(CommonArgs),
    /// Run the property suites; exits with 3 if any fails.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, hide = true)]
        inject_bug: bool,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// key=value file; flags given here override it.
    #[arg(long)]
    config: Option<String>,
    /// sia, re-sia, cl-sia, tc-sia or cl-tc-sia.
    #[arg(long)]
    alg: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    qg: Option<String>,
    #[arg(long)]
    ql: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    local_steps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    omega: Option<String>,
    /// Directory with the four MNIST IDX files (falls back to SPARSEIA_MNIST_DIR).
    #[arg(long)]
    mnist_dir: Option<String>,
    /// Use Gaussian-blob data instead of MNIST.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    synthetic_train: Option<String>,
    #[arg(long)]
    synthetic_test: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Comma-separated client counts for cost-sweep.
    #[arg(long)]
    k_list: Option<String>,
    /// Comma-separated budgets for cost-sweep.
    #[arg(long)]
    q_list: Option<String>,
    /// Model dimension for the verify bound case.
    #[arg(long)]
    d: Option<String>,
    /// Evaluate every N rounds (and after the last); 0 disables evaluation.
    #[arg(long)]
    eval_every: Option<String>,
    /// iid or label-sorted.
    #[arg(long)]
    partition: Option<String>,
}

impl CommonArgs {
    fn to_map(&self) -> Result<ConfigMap, Error> {
        let mut map = match &self.config {
            Some(path) => ConfigMap::parse(&std::fs::read_to_string(path)?)?,
            None => ConfigMap::new(),
        };
        let mut flags = ConfigMap::new();
        let pairs = [
            ("alg", &self.alg),
            ("k", &self.k),
            ("q", &self.q),
            ("qg", &self.qg),
            ("ql", &self.ql),
            ("rounds", &self.rounds),
            ("batch", &self.batch),
            ("lr", &self.lr),
            ("local-steps", &self.local_steps),
            ("seed", &self.seed),
            ("omega", &self.omega),
            ("mnist-dir", &self.mnist_dir),
            ("synthetic-train", &self.synthetic_train),
            ("synthetic-test", &self.synthetic_test),
            ("out", &self.out),
            ("trials", &self.trials),
            ("k-list", &self.k_list),
            ("q-list", &self.q_list),
            ("d", &self.d),
            ("eval-every", &self.eval_every),
            ("partition", &self.partition),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                flags.set(key, v.as_str())?;
            }
        }
        if self.synthetic {
            flags.set("synthetic", "true")?;
        }
        map.overlay(&flags);
        Ok(map)
    }

    fn plan(&self) -> Result<ExperimentPlan, Error> {
        ExperimentPlan::from_map(&self.to_map()?, std::env::var(MNIST_DIR_ENV).ok())
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Idx(_) | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn load_data(plan: &ExperimentPlan) -> Result<(Dataset, Dataset), Error> {
    match &plan.data {
        DataSource::Mnist(dir) => Ok((load_mnist_dir(dir, Split::Train)?, load_mnist_dir(dir, Split::Test)?)),
        DataSource::Synthetic { train, test } => {
            synthetic_split(*train, *test, MNIST_FEATURES, MNIST_CLASSES, plan.train.seed)
        }
        DataSource::MissingMnist => Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no MNIST directory: pass --mnist-dir, set {MNIST_DIR_ENV}, or use --synthetic"),
        ))),
    }
}

fn write_resolved(plan: &ExperimentPlan) -> Result<(), Error> {
    write_atomic(plan.out_dir.join("config.resolved"), plan.resolved.to_text().as_bytes())
}

fn cmd_train(args: &CommonArgs) -> Result<(), Error> {
    let plan = args.plan()?;
    let (train, test) = load_data(&plan)?;
    let metrics = run_training(&plan.train, &train, &test)?;
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &metrics)?;
    let name = format!("train_{}.csv", plan.train.params.algorithm);
    let path = plan.out_dir.join(&name);
    write_atomic(&path, &csv)?;
    write_resolved(&plan)?;

    let accuracy = metrics.iter().rev().find_map(|m| m.accuracy);
    let bits: u64 = metrics.iter().map(|m| m.total_bits).sum();
    match accuracy {
        Some(a) => println!("final accuracy: {a:.4}"),
        None => println!("final accuracy: n/a"),
    }
    println!("total transmitted bits: {bits}");
    println!("metrics: {}", display(&path));
    Ok(())
}

fn cmd_cost_sweep(args: &CommonArgs) -> Result<(), Error> {
    let plan = args.plan()?;
    let (train, test) = load_data(&plan)?;
    let rows = cost_sweep(&plan, &train, &test)?;
    let path = plan.out_dir.join("cost_sweep.csv");
    write_atomic(&path, &write_sweep_csv(&rows)?)?;
    write_resolved(&plan)?;
    println!(
        "{:>4} {:>5} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "k", "q", "sia", "re-sia", "cl-sia", "tc-sia", "cl-tc-sia"
    );
    for r in &rows {
        println!(
            "{:>4} {:>5} {:>12.0} {:>12.0} {:>12.0} {:>12.0} {:>12.0}",
            r.k, r.q, r.sia_bits, r.re_sia_bits, r.cl_sia_bits, r.tc_sia_bits, r.cl_tc_sia_bits
        );
    }
    println!("cost sweep: {}", display(&path));
    Ok(())
}

fn cmd_verify(args: &CommonArgs, inject_bug: bool) -> Result<bool, Error> {
    let plan = args.plan()?;
    let opts = VerifyOptions {
        seed: plan.train.seed,
        trials: plan.trials,
        bound_case: plan.bound_case,
        inject_bug,
    };
    let reports = run_all(&opts)?;
    for r in &reports {
        println!("{r}");
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args).map(|_| true),
        Command::CostSweep(args) => cmd_cost_sweep(args).map(|_| true),
        Command::Verify { common, inject_bug } => cmd_verify(common, *inject_bug),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
