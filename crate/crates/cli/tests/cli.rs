use std::path::Path;
use std::process::{Command, Output};

fn qheom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qheom")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

const SB: [&str; 6] = ["-m", "spin-boson", "--set", "t_max=2", "--set", "grid_step=0.5"];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn marcus_rates() {
    let v = stdout_json(&qheom(&["rates", "--method", "marcus"]));
    let bent = v[0]["fit"]["rate"].as_f64().unwrap();
    let linear = v[1]["fit"]["rate"].as_f64().unwrap();
    assert_eq!(format!("{bent:.2e}"), "1.19e11");
    assert_eq!(format!("{linear:.2e}"), "1.13e12");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&qheom(&["run", "--set", "K=zero"])), 2);
    assert_eq!(code(&qheom(&["run", "--set", "colour=blue"])), 2);
    assert_eq!(code(&qheom(&["run", "-m", "benzene"])), 2);
    assert_eq!(code(&qheom(&["frobnicate"])), 2);
    assert_eq!(code(&qheom(&["run", "--config", "/definitely/not/here.ini"])), 4);
    let o = qheom(&[
        "run",
        "-m",
        "spin-boson",
        "--set",
        "sb_e0=100",
        "--set",
        "dt=0.1",
        "--set",
        "grid_step=1",
        "--set",
        "t_max=50",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&qheom(&["--help"])), 0);
}

#[test]
fn config_error_names_key() {
    let o = qheom(&["run", "--set", "shots=-3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`shots`"));
}

#[test]
fn run_compare_plot() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.csv");
    let c = dir.path().join("c.csv");
    let sub = ["--set", "subspace=DD,DA,AD,AA"];
    assert_eq!(
        code(&qheom(&with(&with(&["run"], &SB), &with(&sub, &["-o", h.to_str().unwrap()])))),
        0
    );
    assert_eq!(
        code(&qheom(&with(
            &with(&["run", "--method", "circuit"], &SB),
            &with(&sub, &["-o", c.to_str().unwrap()])
        ))),
        0
    );
    assert!(Path::new(&dir.path().join("c.json")).exists());
    let text = std::fs::read_to_string(&h).unwrap();
    assert!(text.starts_with("time_fs,P_DD,RE_DA,IM_DA,RE_AD,IM_AD,P_AA\n"));

    let v = stdout_json(&qheom(&["compare", h.to_str().unwrap(), c.to_str().unwrap()]));
    for d in v["deviations"].as_array().unwrap() {
        assert!(d["max"].as_f64().unwrap() < 1e-8, "{d}");
    }
    let v = stdout_json(&qheom(&["compare", h.to_str().unwrap(), h.to_str().unwrap()]));
    assert!(v["deviations"].as_array().unwrap().iter().all(|d| d["max"] == 0.0));

    let svg = dir.path().join("plots/h.svg");
    assert_eq!(
        code(&qheom(&[
            "plot",
            h.to_str().unwrap(),
            "-o",
            svg.to_str().unwrap(),
            "--columns",
            "P_DD,P_AA"
        ])),
        0
    );
    assert_eq!(std::fs::read_to_string(&svg).unwrap().matches("<polyline").count(), 2);
    assert_eq!(
        code(&qheom(&[
            "plot",
            h.to_str().unwrap(),
            "-o",
            svg.to_str().unwrap(),
            "--columns",
            "P_ZZ"
        ])),
        2
    );
}

#[test]
fn grid_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(code(&qheom(&with(&with(&["run"], &SB), &["-o", a.to_str().unwrap()]))), 0);
    assert_eq!(
        code(&qheom(&with(
            &with(&["run"], &SB),
            &["--set", "t_max=1", "-o", b.to_str().unwrap()]
        ))),
        0
    );
    let o = qheom(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid mismatch"));
}

#[test]
fn series_compile_sample_qasm() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("series.json");
    let sub = ["--set", "subspace=DD,DA,AD,AA"];
    assert_eq!(
        code(&qheom(&with(
            &with(&["propagator"], &SB),
            &with(&sub, &["-o", s.to_str().unwrap()])
        ))),
        0
    );
    let src = with(&with(&SB, &sub), &["--series", s.to_str().unwrap(), "-i", "3"]);

    let v = stdout_json(&qheom(&with(&["compile", "--all"], &src)));
    assert_eq!(v.as_array().unwrap().len(), 5);
    for row in v.as_array().unwrap() {
        assert!(row["stats"]["two_qubit_count"].as_u64().unwrap() <= 13);
        assert_eq!(row["stats"]["dense_count"], 0);
    }

    let a = qheom(&with(&["sample", "--shots", "5000", "--seed", "11"], &src));
    let b = qheom(&with(&["sample", "--shots", "5000", "--seed", "11"], &src));
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    let total: u64 = v["counts"].as_object().unwrap().values().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 5000);
    let est = v["estimates"][0].as_f64().unwrap();
    let exact = v["statevector"][0].as_f64().unwrap();
    assert!((est - exact).abs() < 0.02, "{est} vs {exact}");

    let q = dir.path().join("g.qasm");
    assert_eq!(code(&qheom(&with(&["export-qasm", "-o", q.to_str().unwrap()], &src))), 0);
    let qasm = std::fs::read_to_string(&q).unwrap();
    assert!(qasm.starts_with("OPENQASM 2.0;"));
    assert!(qasm.contains("qreg q[3];"));
    assert_eq!(
        code(&qheom(&with(
            &["export-qasm", "-i", "99"],
            &with(&SB, &["--series", s.to_str().unwrap()])
        ))),
        2
    );
}

#[test]
fn sweep_and_decompose() {
    let v = stdout_json(&qheom(&[
        "sweep",
        "-m",
        "spin-boson",
        "--set",
        "t_max=2",
        "--set",
        "sb_eta=0",
        "--param",
        "D_h",
        "--values",
        "1,2,3",
    ]));
    assert_eq!(v["param"], "D_h");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|r| r["deviation"] == 0.0));
    assert_eq!(
        code(&qheom(&["sweep", "-m", "spin-boson", "--param", "D_h", "--values", "3,1,2"])),
        2
    );

    let v = stdout_json(&qheom(&["decompose", "-m", "spin-boson", "-K", "4", "--check", "0.5,2"]));
    assert_eq!(v["modes"].as_array().unwrap().len(), 4);
    for row in v["check"].as_array().unwrap() {
        assert!(row["abs_diff"].as_f64().unwrap() < 0.05);
    }
}
