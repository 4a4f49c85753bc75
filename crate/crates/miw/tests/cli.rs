//! End-to-end runs of the `miw` binary.

use std::path::Path;
use std::process::{Command, Output};

use miw::io::read_positions;
use miw_core::density::{build_step_density, empirical_mass, BoundaryTerm};
use miw_core::energy::{average_hamiltonian, EnergyReport};
use miw_core::solver::solve_configuration;
use miw_core::SolverConfig;

fn miw(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miw"))
        .args(args)
        .env("MIW_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_single_world() {
    let dir = tempfile::tempdir().unwrap();
    let o = miw(&["solve", "--n", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let text = std::fs::read_to_string(dir.path().join("positions_N1.csv")).unwrap();
    assert_eq!(
        text.lines().collect::<Vec<_>>(),
        vec!["n,x_n", "1,1.0000000000000000e0"]
    );
    assert!(dir.path().join("positions_N1.manifest.json").exists());
}

#[test]
fn solve_n11_mass() {
    let dir = tempfile::tempdir().unwrap();
    let o = miw(&["solve", "--n", "11", "--format", "csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let cfg = read_positions(&dir.path().join("positions_N11.csv")).unwrap();
    assert_eq!(cfg.n_worlds(), 11);
    let mass = empirical_mass(&build_step_density(&cfg).unwrap(), BoundaryTerm::Exclude);
    assert!((mass - 0.54).abs() < 0.005);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--n", "0"][..],
        &["sweep", "--n", ""],
        &["energy"],
        &["energy", "--n", "3", "--config", "x.csv"],
        &["energy", "--config", "positions.txt"],
        &["solve", "--n", "3", "--precision", "quad"],
        &["solve", "--n", "3", "--tol", "0"],
        &["density", "--n", "3", "--format", "xml"],
    ] {
        let o = miw(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {o:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn computation_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "n,x_n\n1,1.0\n2,2.0\n").unwrap();
    let o = miw(&["energy", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    let missing = dir.path().join("missing.json");
    let o = miw(&["density", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    // One refinement step cannot reach the residual tolerance.
    let o = miw(&["solve", "--n", "50", "--max-iterations", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_validation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // A loose solve leaves residuals above a strict check tolerance.
    let o = miw(
        &["solve", "--n", "21", "--tol", "1e-3", "--check-tol", "1e-15"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{o:?}");
}

fn energy_json(args: &[&str], out: &Path) -> EnergyReport {
    let o = miw(args, out);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn energy_examples() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(energy_json(&["energy", "--n", "1"], dir.path()).h_n, -0.25);
    let r = energy_json(&["energy", "--n", "21"], dir.path());
    assert!((r.h_n + 21.0 / 44.0).abs() < 1e-9);
    let r = energy_json(&["energy", "--n", "1000", "--precision", "extended"], dir.path());
    assert!((r.h_n + 0.5).abs() < 5e-4);
}

#[test]
fn round_trip_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let direct = solve_configuration(21, &SolverConfig::default()).unwrap();
    let expected = average_hamiltonian(&direct).unwrap();
    for format in ["csv", "json"] {
        let o = miw(&["solve", "--n", "21", "--format", format], dir.path());
        assert_eq!(o.status.code(), Some(0));
        let file = dir.path().join(format!("positions_N21.{format}"));
        let r = energy_json(&["energy", "--config", file.to_str().unwrap()], dir.path());
        assert_eq!(r, expected, "{format}");

        let sub = dir.path().join(format!("density_{format}"));
        let o = miw(
            &[
                "density",
                "--config",
                file.to_str().unwrap(),
                "--out",
                sub.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        let masses: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sub.join("density_N21.masses.json")).unwrap()).unwrap();
        let mass = empirical_mass(&build_step_density(&direct).unwrap(), BoundaryTerm::Exclude);
        assert_eq!(masses["mass_no_boundary"].as_f64().unwrap(), mass);
    }
}

#[test]
fn density_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = miw(&["density", "--n", "11"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("density_N11.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,p_empirical,p_target"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.iter().all(|r| r[0] >= 0.0));
    let x1 = read_back_x1(dir.path(), 11);
    let max_x = rows.iter().map(|r| r[0]).fold(0.0, f64::max);
    assert!((max_x - 1.2 * x1).abs() < 1e-12);

    let o = miw(&["density", "--n", "11", "--full-line", "--format", "json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let samples: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("density_N11.json")).unwrap()).unwrap();
    let xs: Vec<f64> = samples.iter().map(|s| s["x"].as_f64().unwrap()).collect();
    let n = xs.len();
    assert!(n % 2 == 1);
    for i in 0..n / 2 {
        assert_eq!(xs[i], -xs[n - 1 - i]);
    }
}

fn read_back_x1(dir: &Path, n: usize) -> f64 {
    let o = miw(&["solve", "--n", &n.to_string()], dir);
    assert_eq!(o.status.code(), Some(0));
    read_positions(&dir.join(format!("positions_N{n}.csv"))).unwrap().x1()
}

#[test]
fn sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = miw(&["sweep", "--n", "1..40", "--jobs", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let rows = miw::io::read_sweep(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(rows
        .iter()
        .enumerate()
        .all(|(i, r)| r.n_worlds == i + 1 && r.error.is_none()));
    let d11 = rows[10].record.as_ref().unwrap().mass_deficit;
    let d21 = rows[20].record.as_ref().unwrap().mass_deficit;
    assert!((d11 - 0.04).abs() < 0.002 && (d21 - 0.026).abs() < 0.002);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep_summary.json")).unwrap()).unwrap();
    let a = summary["scaling_fit"]["exponent_a"].as_f64().unwrap();
    assert!(a > 2.0 && a < 3.0);
    assert_eq!(summary["sandwich"]["lower_holds"], true);
    assert_eq!(summary["sandwich"]["upper_holds"], true);
    assert!(dir.path().join("sweep.manifest.json").exists());
}

#[test]
fn sweep_json_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(miw(&["sweep", "--n", "5,9,2"], dir.path()).status.code(), Some(0));
    assert_eq!(
        miw(&["sweep", "--n", "2,5,9", "--format", "json"], dir.path())
            .status
            .code(),
        Some(0)
    );
    let csv = miw::io::read_sweep(&dir.path().join("sweep.csv")).unwrap();
    let json = miw::io::read_sweep(&dir.path().join("sweep.json")).unwrap();
    assert_eq!(csv.len(), 3);
    for (a, b) in csv.iter().zip(&json) {
        assert!(a.record.as_ref().unwrap().same_numbers(b.record.as_ref().unwrap()));
    }
}

#[test]
fn manifest_contents() {
    let dir = tempfile::tempdir().unwrap();
    let o = miw(&["solve", "--n", "5", "--precision", "extended"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let m: miw::manifest::RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("positions_N5.manifest.json")).unwrap()).unwrap();
    assert_eq!(m.command, "solve");
    assert_eq!(m.precision, "extended");
    assert_eq!(m.parameters["n_worlds"], 5);
    assert_eq!(m.outputs, vec![dir.path().join("positions_N5.csv")]);
    assert!(m.argv.iter().any(|a| a == "extended"));
}
