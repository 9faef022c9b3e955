//! End-to-end runs of the `sparse-ia` binary.

use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-ia"))
        .args(args)
        .env_remove("SPARSEIA_MNIST_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn train_writes_metrics_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "train",
        "--alg",
        "cl-sia",
        "--k",
        "4",
        "--q",
        "20",
        "--rounds",
        "5",
        "--synthetic",
        "--synthetic-train",
        "400",
        "--synthetic-test",
        "50",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("train_cl-sia.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "round,accuracy,loss,total_bits,max_hop_nnz");
    assert_eq!(lines.len(), 6);
    // 4 hops of 20 entries at 32 + 13 bits
    assert!(lines[1..].iter().all(|l| l.split(',').nth(3) == Some("3600")));
    let text = stdout(&o);
    assert!(text.contains("final accuracy: "));
    assert!(text.contains("total transmitted bits: 18000"));
    let resolved = fs::read_to_string(dir.path().join("config.resolved")).unwrap();
    assert!(resolved.contains("alg=cl-sia\n") && resolved.contains("rounds=5\n"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small run\nalg=sia\nk=3\nq=10\nrounds=9\nsynthetic=true\nsynthetic-train=300\nsynthetic-test=30\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--rounds",
        "2",
        "--alg",
        "re-sia",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("train_re-sia.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("rounds=2\n") && resolved.contains("k=3\n") && resolved.contains("alg=re-sia\n"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["train", "--alg", "topk", "--synthetic"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--q", "many", "--synthetic"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(1));
    let o = run(&["train", "--rounds", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("MNIST"));
    assert_eq!(
        run(&["train", "--mnist-dir", "/nonexistent/mnist"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["train", "--config", "/nonexistent.cfg"]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_detects_injected_bug() {
    let o = run(&["verify", "--trials", "5000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().count() >= 9);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));

    let o = run(&["verify", "--trials", "2000", "--inject-bug"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL mass conservation"));
}

#[test]
fn verify_bound_case_from_flags() {
    let o = run(&["verify", "--trials", "100000", "--d", "10", "--ql", "2", "--k", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let line = text.lines().find(|l| l.contains("local support bound:")).unwrap();
    let mean: f64 = line
        .split("mc ")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    let se: f64 = line
        .split("+- ")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(line.contains("bound 10.4800"), "{line}");
    assert!(mean <= 10.48 + 3.0 * se, "{line}");
}

#[test]
fn cost_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "cost-sweep",
        "--k-list",
        "2,3",
        "--q",
        "30",
        "--rounds",
        "2",
        "--synthetic",
        "--synthetic-train",
        "200",
        "--synthetic-test",
        "10",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("cost_sweep.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let k: f64 = r[col("k")].parse().unwrap();
        assert_eq!(r[col("cl_sia_bits")].parse::<f64>().unwrap(), k * 30.0 * 45.0);
        assert_eq!(r[col("unicast_norm")].parse::<f64>().unwrap(), (k * k + k) / 2.0);
    }
    assert!(dir.path().join("config.resolved").exists());
}
