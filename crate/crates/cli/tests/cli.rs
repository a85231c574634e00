use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_runtumble");

fn runtumble(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("RUNTUMBLE_OUT")
        .output()
        .expect("spawn runtumble")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_MODEL: &str = "[model]\nhalf_width = 10.0\nn_x = 200\nn_v = 8\n";

fn small_simulate(dir: &Path) -> String {
    write_config(
        dir,
        "sim.toml",
        &format!("pipeline = \"simulate\"\n{SMALL_MODEL}\n[run]\nhorizon = 5.0\nrecord_every = 0.5\ncheck = \"mass\"\n\n[[initial]]\nshape = \"gaussian_blob\"\nskew = 0.3\n"),
    )
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_exits_2_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = runtumble(&[
        "run",
        "--config",
        "/definitely/not/here.toml",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn schema_violations_exit_2_with_field_message() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        ("[model]\nchii = 0.5\n", "chii"),
        ("[model]\nchi = 1.5\n", "chi"),
        ("[model]\nn_x = \"many\"\n", "n_x"),
        ("[kernel]\nvariant = \"surgical\"\nr = 5.0\n", "delta1"),
        ("[run]\nhorizon = 5.0\nrecord_every = 0.3\n", "record_every"),
        (
            "[run]\ntag = \"B1\"\ncheck = \"b1_dissipation\"\n",
            "radius",
        ),
    ];
    for (body, field) in cases {
        let cfg = write_config(
            tmp.path(),
            "bad.toml",
            &format!("pipeline = \"simulate\"\n{body}"),
        );
        let o = runtumble(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{body}: {}", stderr(&o));
        assert!(!out.exists(), "{body}: output written on a config error");
    }
}

#[test]
fn drift_check_prints_certificate() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("drift");
    let o = runtumble(&[
        "drift-check",
        "--chi",
        "0.5",
        "--gamma",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    assert!((value("beta =") - 0.1 * 0.5 / 1.5).abs() < 1e-15);
    assert!((value("alpha =") - 4.1666666666666666e-4).abs() < 1e-12);
    assert!(value("A =") > 0.0);
    assert!(text.contains("PASS"));
}

#[test]
fn gamma_beyond_certificate_is_a_runtime_failure() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("drift");
    let o = runtumble(&[
        "drift-check",
        "--gamma",
        "0.2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("too large"));
}

#[test]
fn outputs_carry_the_scenario_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_simulate(tmp.path());
    let out = tmp.path().join("run");
    let o = runtumble(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["scenario_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(manifest["pipeline"], "simulate");
    assert_eq!(manifest["scenario"]["model"]["n_x"], 200);
    let outputs = manifest["outputs"].as_object().unwrap();
    assert!(!outputs.is_empty());
    for name in outputs.keys() {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert!(text.contains(hash), "{name} lacks the scenario hash");
        assert!(!text.contains('\r'));
        if name.ends_with(".csv") {
            let mut lines = text.lines();
            assert_eq!(lines.next().unwrap(), format!("# scenario_hash={hash}"));
            assert_eq!(lines.next().unwrap(), "t,value");
            for line in lines {
                let (t, v) = line.split_once(',').unwrap();
                t.parse::<f64>().unwrap();
                v.parse::<f64>().unwrap();
            }
        }
    }
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report_mass.json")).unwrap()).unwrap();
    assert_eq!(report["scenario_hash"], hash);
    assert_eq!(report["verdict"], "PASS");
    let keys: Vec<&String> = report.as_object().unwrap().keys().collect();
    assert_eq!(
        keys,
        ["parameters", "probe", "scenario_hash", "values", "verdict"]
    );
}

#[test]
fn mass_series_uses_printf_style_floats() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_simulate(tmp.path());
    let out = tmp.path().join("run");
    assert_eq!(
        runtumble(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let text = fs::read_to_string(out.join("simulate_0_mass.csv")).unwrap();
    let times: Vec<&str> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(&times[..4], ["0", "0.5", "1", "1.5"]);
}

#[test]
fn env_out_overrides_flag() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_simulate(tmp.path());
    let flag = tmp.path().join("flag");
    let env = tmp.path().join("env");
    let o = Command::new(BIN)
        .args(["run", "--config", &cfg, "--out", flag.to_str().unwrap()])
        .env("RUNTUMBLE_OUT", &env)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env.join("manifest.json").exists());
    assert!(!flag.exists());
}

#[test]
fn failing_probe_exits_1() {
    let tmp = TempDir::new().unwrap();
    // a narrow box leaks mass through the boundary
    let cfg = write_config(
        tmp.path(),
        "leak.toml",
        "pipeline = \"simulate\"\n[model]\nhalf_width = 2.0\nn_x = 80\nn_v = 8\n[run]\nhorizon = 10.0\ncheck = \"mass\"\n",
    );
    let out = tmp.path().join("leak");
    let o = runtumble(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn reproduce_detects_tampering() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_simulate(tmp.path());
    let out = tmp.path().join("run");
    assert_eq!(
        runtumble(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let manifest_path = out.join("manifest.json");
    let o = runtumble(&["reproduce", manifest_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let original = fs::read_to_string(&manifest_path).unwrap();
    let mut m: Value = serde_json::from_str(&original).unwrap();
    m["scenario"]["model"]["chi"] = Value::from(0.4);
    fs::write(&manifest_path, serde_json::to_string(&m).unwrap()).unwrap();
    let o = runtumble(&["reproduce", manifest_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hash"), "{}", stderr(&o));

    fs::write(&manifest_path, &original).unwrap();
    let csv = out.join("simulate_0_mass.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[5] = "2,0.5".into();
    fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let o = runtumble(&["reproduce", manifest_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("simulate_0_mass.csv"), "{}", stderr(&o));
}

#[test]
fn particle_runs_are_thread_independent() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "p.toml",
        &format!("pipeline = \"particles\"\nseed = 5\n{SMALL_MODEL}\n[particles]\nn = 20000\nhorizon = 3.0\ncompare = false\nexport = true\n"),
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(
        runtumble(&[
            "--threads",
            "1",
            "run",
            "--config",
            &cfg,
            "--out",
            a.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        runtumble(&[
            "--threads",
            "3",
            "run",
            "--config",
            &cfg,
            "--out",
            b.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    let digests = |d: &Path| -> Value {
        let m: Value =
            serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        m["outputs"].clone()
    };
    assert_eq!(digests(&a), digests(&b));
    assert!(digests(&a)
        .as_object()
        .unwrap()
        .keys()
        .any(|k| k.ends_with(".bin")));
    let o = runtumble(&["reproduce", a.join("manifest.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let c = tmp.path().join("c");
    assert_eq!(
        runtumble(&[
            "run",
            "--config",
            &cfg,
            "--seed",
            "6",
            "--out",
            c.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    assert_ne!(
        fs::read(a.join("particles_density.csv")).unwrap(),
        fs::read(c.join("particles_density.csv")).unwrap()
    );
}

#[test]
fn fit_decay_reads_series() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("# scenario_hash=external\nt,value\n");
    for k in 0..=40 {
        let t = 0.25 * k as f64;
        csv.push_str(&format!("{t},{}\n", 3.0 * (-0.3 * t).exp()));
    }
    fs::write(tmp.path().join("series.csv"), csv).unwrap();
    let cfg = write_config(
        tmp.path(),
        "fit.toml",
        "pipeline = \"fit-decay\"\n[fit]\ninput = \"series.csv\"\nwindow = [1.0, 9.0]\nmode = \"exponential\"\n",
    );
    let out = tmp.path().join("fit");
    let o = runtumble(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report_fit.json")).unwrap()).unwrap();
    assert!((report["values"]["slope"].as_f64().unwrap() + 0.3).abs() < 1e-10);
    assert!(report["values"]["r_squared"].as_f64().unwrap() > 0.999999);
}

#[test]
fn steady_two_velocity_reports_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.toml",
        "pipeline = \"steady\"\n[model]\nvelocities = \"two_velocity\"\nn_v = 2\nn_x = 300\n[steady]\ntol = 1e-9\nrefine = false\ncross_check = true\n",
    );
    let out = tmp.path().join("s");
    let o = runtumble(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(
        matches!(o.status.code(), Some(0) | Some(1)),
        "{}",
        stderr(&o)
    );
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report_steady.json")).unwrap()).unwrap();
    let err = report["values"]["error"].as_f64().unwrap();
    assert!(err > 0.0 && err < 0.2, "{err}");
    assert_eq!(report["values"]["cross_check"]["verdict"], "PASS");
    let text = fs::read_to_string(out.join("steady_density.csv")).unwrap();
    assert_eq!(text.lines().nth(1), Some("x,value"));
}
