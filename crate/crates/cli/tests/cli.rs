use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn stswe(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stswe"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const HEADER: &str =
    "refine_step,n_elements,n_dofs,estimate,err_L2_zeta,err_L2_u,err_L2_sigma,err_U,newton_iters";

#[test]
fn converge_without_refinement_writes_one_row() {
    let tmp = TempDir::new().unwrap();
    let out = stswe(
        &["converge", "--refinements", "0", "--out", "o"],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(&tmp.path().join("o"), "record.csv");
    assert!(csv.starts_with("# schema = run-record/1\n"));
    assert!(csv.lines().any(|l| l == HEADER));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "2");
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("converge: 1 level,"));
}

#[test]
fn converge_reports_rates() {
    let tmp = TempDir::new().unwrap();
    let out = stswe(
        &["converge", "--refinements", "3", "--out", "o"],
        tmp.path(),
    );
    assert!(out.status.success());
    let csv = read(&tmp.path().join("o"), "record.csv");
    let rate: f64 = csv
        .lines()
        .find_map(|l| l.strip_prefix("# rate_L2_zeta = "))
        .expect("rate in metadata")
        .parse()
        .unwrap();
    assert!((rate - 3.0).abs() < 0.25, "{rate}");
    assert_eq!(
        data_rows(&read(&tmp.path().join("o"), "series_convergence.csv")).len(),
        4
    );
    assert!(read(&tmp.path().join("o"), "mesh_final.vtk").contains("CELLS 128 512"));
}

#[test]
fn lake_stays_at_rest() {
    let tmp = TempDir::new().unwrap();
    let out = stswe(&["lake", "--out", "o"], tmp.path());
    assert!(out.status.success());
    let dir = tmp.path().join("o");
    let row = &data_rows(&read(&dir, "record.csv"))[0];
    for col in [4, 5] {
        let e: f64 = row[col].parse().unwrap();
        assert!(e <= 1e-10, "column {col}: {e}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("lake: L2(zeta) "));
    let series = read(&dir, "series_final_time.csv");
    assert_eq!(series.lines().next(), Some("x,zeta,u"));
    assert_eq!(series.lines().count(), 513);
    assert!(read(&dir, "mesh_lake.vtk").contains("SCALARS eta double 1"));
}

#[test]
fn tidal_series_covers_the_week() {
    let tmp = TempDir::new().unwrap();
    let out = stswe(&["tidal", "--mesh", "4x60", "--out", "o"], tmp.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = data_rows(&read(&tmp.path().join("o"), "series_x800.csv"));
    assert_eq!(rows.len(), 512);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[511][0].parse::<f64>().unwrap(), 604800.0);
}

#[test]
fn adaptive_records_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        assert!(
            stswe(&["adapt", "--refinements", "2", "--out", dir], tmp.path())
                .status
                .success()
        );
    }
    let (a, b) = (
        read(&tmp.path().join("a"), "record.csv"),
        read(&tmp.path().join("b"), "record.csv"),
    );
    assert_eq!(a, b);
    assert_eq!(data_rows(&a).len(), 3);

    // The echoed settings reproduce the run.
    let out = stswe(
        &["adapt", "--config", "a/run.toml", "--out", "c"],
        tmp.path(),
    );
    assert!(out.status.success());
    assert_eq!(read(&tmp.path().join("c"), "record.csv"), a);
}

#[test]
fn slices_compare_writes_per_slice_records() {
    let tmp = TempDir::new().unwrap();
    let args = [
        "slices-compare",
        "--slices",
        "3",
        "--refinements",
        "1",
        "--mesh",
        "2x2",
        "--out",
        "o",
    ];
    let out = stswe(&args, tmp.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = tmp.path().join("o");
    for i in 0..3 {
        let rec = read(&dir, &format!("record_slice_{i}.csv"));
        assert!(rec.contains(&format!("# slice = {i}\n")));
        assert!(dir.join(format!("mesh_slice_{i}.vtk")).exists());
    }
    assert_eq!(data_rows(&read(&dir, "series_timeline.csv")).len(), 3);
    let cmp = data_rows(&read(&dir, "series_comparison.csv"));
    assert_eq!(cmp.iter().filter(|r| r[0] == "full").count(), 2);
    assert_eq!(cmp.iter().filter(|r| r[0] == "slices").count(), 2);
}

#[test]
fn config_file_sections_apply() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "[space]\np = 1\n[mesh]\nnx = 2\nnt = 3\n[adapt]\nrefinements = 0\n[output]\ndir = \"fromfile\"\n",
    )
    .unwrap();
    let out = stswe(&["converge", "--config", "run.toml"], tmp.path());
    assert!(out.status.success());
    let csv = read(&tmp.path().join("fromfile"), "record.csv");
    assert!(csv.contains("# trial_degree = 1\n"));
    assert!(csv.contains("# mesh = 2x3\n"));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[space]\ndegree = 2\n").unwrap();
    for args in [
        vec!["bogus"],
        vec!["tidal", "--mesh", "3"],
        vec!["lake", "--slices", "2"],
        vec!["converge", "--paper-mesh"],
        vec!["dambreak", "--paper-mesh", "--mesh", "4x4"],
        vec!["converge", "--theta", "0.5"],
        vec!["adapt", "--theta", "1.5"],
        vec!["converge", "--config", "bad.toml"],
        vec!["converge", "--p", "9"],
    ] {
        let out = stswe(&args, tmp.path());
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn solver_failure_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.toml"), "[newton]\nmax_iter = 1\n").unwrap();
    let out = stswe(
        &["converge", "--refinements", "0", "--config", "run.toml"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));

    let missing = stswe(&["lake", "--config", "missing.toml"], tmp.path());
    assert_eq!(missing.status.code(), Some(1));
}
