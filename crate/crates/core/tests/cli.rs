use std::fs;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasispecies"))
        .args(args)
        .output()
        .expect("spawn quasispecies")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn fixed_points_json() {
    let o = bin(&["fixed-points", "--fitness", "5,2,4", "--a", "1.0"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let bs: Vec<u64> = doc["fixed_points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["b"].as_u64().unwrap())
        .collect();
    assert_eq!(bs, [0, 2, 3]);
    for f in doc["fixed_points"].as_array().unwrap() {
        assert!(f["residual"].as_f64().unwrap() <= 1e-10);
    }

    let o = bin(&["fixed-points", "--fitness", "10", "--a", "3"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["fixed_points"].as_array().unwrap().len(), 1);
    assert_eq!(doc["fixed_points"][0]["b"], 1);
}

#[test]
fn invalid_input_exits_2() {
    let o = bin(&["fixed-points", "--fitness", "5,2,5", "--a", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("must exceed"));

    let o = bin(&["fixed-points", "--a", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--fitness"));

    let o = bin(&[
        "phase-diagram",
        "--fitness",
        "4",
        "--a-range",
        "2:1:0.1",
        "--alpha-range",
        "1:2:1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn guards_exit_3() {
    let o = bin(&["quasipotential", "--fitness", "9,8,7,6,5,4", "--a", "0.1"]);
    assert_eq!(o.status.code(), Some(3));
    let o = bin(&["quasipotential", "--fitness", "4", "--a", "2"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn lumping_check_and_matrix_export() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let o = bin(&[
        "lumping-check",
        "--ell",
        "6",
        "--kappa",
        "2",
        "--q",
        "0.1",
        "--matrix-csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("max abs diff < 1e-10"));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("k,l,prob\n"));
    assert_eq!(text.lines().count(), 1 + 7 * 7);
}

#[test]
fn phase_diagram_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("phase.csv");
    let o = bin(&[
        "phase-diagram",
        "--fitness",
        "4",
        "--a-range",
        "0.1:2.0:0.05",
        "--alpha-range",
        "1:10:1",
        "--kappa",
        "2",
        "--resolution",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a,alpha,psi,ln_kappa_over_alpha,phase"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 39 * 10);
    for r in &rows {
        let a: f64 = r[0].parse().unwrap();
        let psi: f64 = r[2].parse().unwrap();
        if a >= 4f64.ln() {
            assert_eq!(psi, 0.0);
            assert_eq!(r[4], "subcritical");
        }
    }
}

#[test]
fn quasipotential_json() {
    let o = bin(&[
        "quasipotential",
        "--fitness",
        "4",
        "--a",
        "0.6931471805599453",
        "--resolution",
        "400",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let v = doc["value"].as_f64().unwrap();
    assert!(v > 0.0 && v <= 1.5f64.ln());
    assert_eq!(doc["resolution"], 400);
    let path = doc["path"].as_array().unwrap();
    assert_eq!(path.last().unwrap()[0].as_f64(), Some(0.0));
}

#[test]
fn iterate_reports_the_basin() {
    let o = bin(&[
        "iterate",
        "--fitness",
        "5,2,4",
        "--a",
        "1",
        "--start",
        "0,0.5,0.1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["fixed_point"], 2);
    let o = bin(&[
        "iterate",
        "--fitness",
        "5,2,4",
        "--a",
        "1",
        "--start",
        "0,0.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_and_hitting_time_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "ell = 40\nkappa = 2\nq = 0.01\nm = 100\nfitness = [4.0, 2.0]\nhorizon = 300\nburn_in = 50\nreplicas = 3\nstart = \"fixed-point:0\"\n",
    )
    .unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = bin(&[
            "--seed",
            seed,
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).starts_with("simulate:"));
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.json", "5"), run("b.json", "5"));
    assert_ne!(run("a.json", "5"), run("c.json", "6"));

    let times = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = bin(&[
            "--threads",
            threads,
            "hitting-time",
            "--config",
            cfg.to_str().unwrap(),
            "--kind",
            "tau0",
            "--replicas",
            "20",
            "--cap",
            "1e4",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        fs::read_to_string(out).unwrap()
    };
    let one = times("t1.csv", "1");
    assert_eq!(one, times("t2.csv", "2"));
    assert!(one.starts_with("replica,seed,value,censored\n"));
    assert_eq!(one.lines().count(), 21);
}

#[test]
fn simulate_rejects_empty_window() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "ell = 10\nq = 0.01\nm = 10\nfitness = [4.0]\nhorizon = 5\nburn_in = 5\n",
    )
    .unwrap();
    let o = bin(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("burn_in"));
}
