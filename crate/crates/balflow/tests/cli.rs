use std::process::Command;

use balflow::bench::{self, parse_csv, CellStatus, ExperimentSpec, GraphKind, CSV_HEADER};
use balflow::io;

fn balflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_balflow"))
}

#[test]
fn run_prints_one_csv_row() {
    let out = balflow()
        .args(["run", "--n", "10", "--graph", "circle", "--eps", "0.1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = parse_csv(&text, "stdout").unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].n, 10);
    assert_eq!(rows[0].graph, GraphKind::Circle);
    assert_eq!(rows[0].status, CellStatus::Converged);
}

#[test]
fn saved_instance_and_graph_reproduce_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.txt");
    let graph = dir.path().join("graph.txt");
    let traj = dir.path().join("traj.csv");
    let first = balflow()
        .args(["run", "--n", "8", "--graph", "random", "--save-instance"])
        .arg(&inst)
        .arg("--save-graph")
        .arg(&graph)
        .arg("--trajectory")
        .arg(&traj)
        .output()
        .unwrap();
    assert!(first.status.success());
    let second = balflow()
        .args(["run", "--graph", "random", "--instance"])
        .arg(&inst)
        .arg("--graph-file")
        .arg(&graph)
        .output()
        .unwrap();
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    let a = parse_csv(&String::from_utf8(first.stdout).unwrap(), "a").unwrap();
    let b = parse_csv(&String::from_utf8(second.stdout).unwrap(), "b").unwrap();
    assert_eq!(a[0].t_ter, b[0].t_ter);
    assert_eq!(a[0].e_rel_pct, b[0].e_rel_pct);
    let dump = std::fs::read_to_string(&traj).unwrap();
    assert!(dump.starts_with("t,zdot_norm,lyapunov,g\n"));
    assert!(dump.lines().count() > 2);
}

#[test]
fn mismatched_graph_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("graph.txt");
    std::fs::write(&graph, "nodes 3\n1 0 1\n2 1 1\n0 2 1\n").unwrap();
    let out = balflow()
        .args(["run", "--n", "5", "--graph-file"])
        .arg(&graph)
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn grid_csv_round_trips_and_marks_baseline_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.txt");
    let csv = dir.path().join("out.csv");
    std::fs::write(&spec, format!("n = 10\ngraphs = circle\neps = 0.1\nout = {}\n", csv.display())).unwrap();
    let out = balflow().args(["grid", "--spec"]).arg(&spec).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    let rows = parse_csv(&text, "out.csv").unwrap();
    assert_eq!(rows.len(), 2);
    let base = rows.iter().find(|r| r.algo == bench::Algo::Baseline).unwrap();
    assert_eq!(base.status, CellStatus::Diverged);
    assert!(base.e_rel_pct.is_none());
    let mut buf = Vec::new();
    bench::write_csv(&mut buf, &rows).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), text);
}

#[test]
fn check_subcommand_passes() {
    let out = balflow().args(["check", "--samples", "200"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.contains("PASS")));
}

#[test]
fn spec_rejects_oversized_grids_without_opt_in() {
    assert!(io::parse_spec("n = 500\n", "mem").is_err());
    let spec = io::parse_spec("n = 500\nallow_large = true\n", "mem").unwrap();
    assert_eq!(spec.ns, vec![500]);
    assert_eq!(ExperimentSpec::default().seed, bench::DEFAULT_SEED);
}
