//! End-to-end runs of the `qed2x` binary.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn qed2x(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qed2x"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two emitters at the mirror nodes, small grid, a few time units.
fn small_config() -> Value {
    json!({
        "schema_version": 1,
        "name": "small",
        "emitters": [
            {"position": 0.5, "omega": 10.0, "dipole": 0.224},
            {"position": 1.0, "omega": 10.0, "dipole": 0.224}
        ],
        "environment": {"kind": "mirrored-waveguide"},
        "grid": {"rule": "gauss-legendre", "q": 24, "half_width": 2.0},
        "initial_state": {"kind": "pair-excited", "pair": [1, 2]},
        "time": {"t_end": 4.0, "dt": 0.02},
        "outputs": {"max_samples": 101, "field_map": true},
        "field_grid": {"x_min": 0.0, "x_max": 1.5, "points": 16, "every": 10}
    })
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let o = qed2x(&["run", "--config", s(&dir.path().join("nope.json")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 3);
}

#[test]
fn malformed_and_invalid_configs_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&qed2x(&["run", "--config", s(&bad), "--out", s(dir.path())])), 1);

    let mut dup = small_config();
    dup["emitters"][1]["position"] = json!(0.5);
    let p = write(dir.path(), "dup.json", &dup);
    let o = qed2x(&["run", "--config", s(&p), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate emitter position"));

    let mut zero = small_config();
    zero["time"]["dt"] = json!(0.0);
    let p = write(dir.path(), "zero.json", &zero);
    assert_eq!(code(&qed2x(&["run", "--config", s(&p), "--out", s(&dir.path().join("o"))])), 1);
}

#[test]
fn oversized_step_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg["time"]["dt"] = json!(10.0 / 12.0);
    let p = write(dir.path(), "big.json", &cfg);
    assert_eq!(code(&qed2x(&["run", "--config", s(&p), "--out", s(&dir.path().join("o"))])), 1);
}

#[test]
fn run_writes_csvs_and_manifest() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "small.json", &small_config());
    let out = dir.path().join("out");
    let o = qed2x(&["run", "--config", s(&p), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let (h, rows) = read_csv(&out.join("populations.csv"));
    assert_eq!(h, ["t", "P_C", "P_B", "P_D", "P_tot", "P_1", "P_2"]);
    assert_eq!(rows[0][..5], [0.0, 1.0, 0.0, 0.0, 1.0]);
    assert_eq!(rows.last().unwrap()[0], 4.0);
    for r in &rows {
        assert!((r[1] + r[2] + r[3] - r[4]).abs() < 1e-12);
        assert!((r[4] - 1.0).abs() < 1e-8);
    }

    let (h, rows) = read_csv(&out.join("density_matrix.csv"));
    assert_eq!(
        h,
        ["t", "P_ee", "P_eg", "P_ge", "P_gg", "Re_Z12", "Im_Z12", "concurrence", "F_plus", "F_minus"]
    );
    for r in &rows {
        assert!((r[1] + r[2] + r[3] + r[4] - 1.0).abs() < 1e-8);
    }

    let (h, rows) = read_csv(&out.join("field_map.csv"));
    assert_eq!(h, ["t", "x", "intensity"]);
    assert!(rows.iter().all(|r| r[2] >= 0.0));
    assert!(rows.iter().filter(|r| r[0] == 0.0).all(|r| r[2] == 0.0));

    let text = std::fs::read_to_string(out.join("populations.csv")).unwrap();
    assert!(!text.contains('\r'));

    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let eff = &m["effective_config"];
    assert_eq!(eff["time"]["dt"], json!(0.02));
    assert_eq!(eff["grid"]["omega_min"], json!(8.0));
    assert_eq!(m["grid"]["q"], json!(24));
    assert_eq!(m["normalization"]["scale"], json!(1.0));
    assert!(m["gamma0"].as_f64().unwrap() > 0.0);

    // the manifest's effective config reproduces the run bit for bit
    let again = write(dir.path(), "again.json", eff);
    let out2 = dir.path().join("out2");
    assert_eq!(code(&qed2x(&["run", "--config", s(&again), "--out", s(&out2)])), 0);
    for f in ["populations.csv", "density_matrix.csv", "field_map.csv"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(out2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exchange_symmetric_pair_keeps_equal_populations() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg["environment"] = json!({"kind": "free-space-1d"});
    cfg["emitters"][0]["position"] = json!(1.0);
    cfg["emitters"][1]["position"] = json!(1.3);
    cfg["outputs"]["field_map"] = json!(false);
    let p = write(dir.path(), "free.json", &cfg);
    let out = dir.path().join("out");
    assert_eq!(code(&qed2x(&["run", "--config", s(&p), "--out", s(&out)])), 0);
    let (_, rows) = read_csv(&out.join("density_matrix.csv"));
    assert!(rows.last().unwrap()[4] > 0.01);
    for r in &rows {
        assert!((r[2] - r[3]).abs() < 1e-10, "t = {}: {} vs {}", r[0], r[2], r[3]);
    }
}

#[test]
fn json_format_writes_series() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "small.json", &small_config());
    let out = dir.path().join("out");
    assert_eq!(code(&qed2x(&["run", "--config", s(&p), "--out", s(&out), "--format", "json"])), 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("series.json")).unwrap()).unwrap();
    assert_eq!(v["samples"].as_array().unwrap().len(), 101);
    assert_eq!(v["field"].as_array().unwrap().len(), 11);
    assert_eq!(v["field_points"].as_array().unwrap().len(), 16);
}

fn populations(dir: &Path, cfg: &Path, dt: f64) -> Vec<Vec<f64>> {
    let out = dir.join(format!("dt{dt}"));
    let o = qed2x(&["run", "--config", s(cfg), "--out", s(&out), "--dt", &dt.to_string()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    read_csv(&out.join("populations.csv")).1
}

#[test]
fn halving_the_step_shows_fourth_order_convergence() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg["outputs"]["max_samples"] = json!(21);
    cfg["time"]["t_end"] = json!(8.0);
    let p = write(dir.path(), "c.json", &cfg);
    let runs: Vec<_> = [0.02, 0.01, 0.005].iter().map(|&dt| populations(dir.path(), &p, dt)).collect();
    let diff = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| {
                assert_eq!(x[0], y[0]);
                (1..4).map(move |c| (x[c] - y[c]).abs())
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (diff(&runs[0], &runs[1]), diff(&runs[1], &runs[2]));
    let ratio = e1 / e2;
    assert!(e1 < 1e-4, "coarse difference {e1:e}");
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} ({e1:e} / {e2:e})");
}

fn sweep_spec(q: usize) -> Value {
    let mut base = small_config();
    base["emitters"] = json!([
        {"position": 1.0, "omega": 10.0, "dipole": 0.224},
        {"position": 1.0, "omega": 10.0, "dipole": 0.224},
        {"position": 1.0, "omega": 10.0, "dipole": 0.224}
    ]);
    base["initial_state"] = json!({"kind": "dicke-wbar"});
    base["grid"]["q"] = json!(q);
    base["time"] = json!({"t_end": 3.0, "dt": 0.02});
    json!({
        "schema_version": 1,
        "name": "tiny",
        "base": base,
        "spacing": {"min": 0.2, "max": 0.4, "steps": 2},
        "thickness": {"min": 0.25, "max": 0.5, "steps": 2}
    })
}

#[test]
fn sweep_rows_are_ordered_and_parallelism_independent() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "sweep.json", &sweep_spec(12));
    let mut outputs = Vec::new();
    for par in ["1", "4"] {
        let out = dir.path().join(format!("sweep{par}.csv"));
        let o = qed2x(&["sweep", "--config", s(&p), "--out", s(&out), "--parallelism", par]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(&out).unwrap());
        let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("sweep{par}.csv.manifest.json"))).unwrap()).unwrap();
        assert_eq!(m["t_end"], json!(3.0));
    }
    assert_eq!(outputs[0], outputs[1]);
    let (h, rows) = read_csv(&dir.path().join("sweep1.csv"));
    assert_eq!(h, ["d", "L", "metric"]);
    let keys: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(keys, [(0.2, 0.25), (0.2, 0.5), (0.4, 0.25), (0.4, 0.5)]);
    assert!(rows.iter().all(|r| r[2].is_finite() && r[2] >= 0.0));
}

#[test]
fn invalid_sweep_spec_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut spec = sweep_spec(8);
    spec["spacing"]["steps"] = json!(1);
    let p = write(dir.path(), "sweep.json", &spec);
    assert_eq!(code(&qed2x(&["sweep", "--config", s(&p), "--out", s(&dir.path().join("x.csv"))])), 1);
}

fn read_table(path: &Path) -> Vec<(f64, usize, usize, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["omega", "i", "j", "im_g"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[1].parse().unwrap(), rec[2].parse().unwrap(), rec[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn spectrum_of_mirror_matches_closed_form_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg["emitters"][0]["position"] = json!(0.37);
    cfg["emitters"][1]["position"] = json!(1.21);
    let p = write(dir.path(), "mirror.json", &cfg);
    let out = dir.path().join("spec");
    assert_eq!(code(&qed2x(&["spectrum", "--config", s(&p), "--out", s(&out)])), 0);
    let lam = 2.0 * PI / 10.0;
    let xs = [0.37 * lam, 1.21 * lam];
    let table = read_table(&out.join("greens_table.csv"));
    assert_eq!(table.len(), 24 * 4);
    for &(w, i, j, g) in &table {
        let (a, b) = (xs[i - 1].min(xs[j - 1]), xs[i - 1].max(xs[j - 1]));
        let want = (w * a).sin() * (w * b).sin() / w;
        assert!((g - want).abs() <= 1e-10, "omega {w} ({i},{j}): {g} vs {want}");
    }
    assert!(out.join("gamma_spectra.csv").exists());

    // reload the exported table and export again
    let mut tab = cfg.clone();
    tab["outputs"]["field_map"] = json!(false);
    tab["field_grid"] = Value::Null;
    tab["environment"] = json!({"kind": "tabulated", "path": "spec/greens_table.csv"});
    let p2 = write(dir.path(), "tab.json", &tab);
    let out2 = dir.path().join("again");
    let o = qed2x(&["spectrum", "--config", s(&p2), "--out", s(&out2)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["greens_table.csv", "gamma_spectra.csv"] {
        assert_eq!(
            std::fs::read_to_string(out.join(f)).unwrap(),
            std::fs::read_to_string(out2.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn tabulated_table_with_short_range_is_rejected() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "mirror.json", &small_config());
    assert_eq!(code(&qed2x(&["spectrum", "--config", s(&p), "--out", s(&dir.path().join("spec"))])), 0);
    let mut tab = small_config();
    tab["outputs"]["field_map"] = json!(false);
    tab["field_grid"] = Value::Null;
    tab["environment"] = json!({"kind": "tabulated", "path": "spec/greens_table.csv"});
    tab["grid"]["half_width"] = json!(3.0);
    let p2 = write(dir.path(), "tab.json", &tab);
    assert_eq!(code(&qed2x(&["spectrum", "--config", s(&p2), "--out", s(&dir.path().join("x"))])), 1);
}

#[test]
fn slab_loss_changes_the_spectrum() {
    let dir = TempDir::new().unwrap();
    let mut spectra = Vec::new();
    for eps_im in [0.0, 0.05] {
        let mut cfg = small_config();
        cfg["emitters"][0]["position"] = json!(1.25);
        cfg["emitters"][1]["position"] = json!(3.0);
        cfg["environment"] = json!({"kind": "mirrored-waveguide", "slabs": [{"x1": 1.5, "x2": 2.5, "eps_re": 12.0, "eps_im": eps_im}]});
        let p = write(dir.path(), &format!("slab{eps_im}.json"), &cfg);
        let out = dir.path().join(format!("slab{eps_im}"));
        assert_eq!(code(&qed2x(&["spectrum", "--config", s(&p), "--out", s(&out)])), 0);
        spectra.push(read_table(&out.join("greens_table.csv")));
    }
    let rel = spectra[0]
        .iter()
        .zip(&spectra[1])
        .map(|(a, b)| (a.3 - b.3).abs() / a.3.abs().max(b.3.abs()).max(1e-12))
        .fold(0.0, f64::max);
    assert!(rel > 0.05, "largest relative change {rel}");
}

#[test]
fn validate_quick_passes() {
    let o = qed2x(&["validate", "quick"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    for name in ["greens-wronskian", "oracle-equivalence", "single-emitter-decay", "hierarchy-norm"] {
        assert!(text.lines().any(|l| l.starts_with(name) && l.ends_with("pass")), "{name} missing:\n{text}");
    }
    assert!(!text.contains("dicke-free-leakage"));
}
