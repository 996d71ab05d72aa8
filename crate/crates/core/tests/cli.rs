use std::path::Path;
use std::process::{Command, Output};

fn hybrid_doa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybrid-doa"))
        .args(args)
        .env_remove("HYBRID_DOA_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn crlb_single_row() {
    let o = hybrid_doa(&[
        "crlb",
        "--n",
        "32",
        "--k",
        "16",
        "--snr-db",
        "0",
        "--theta-deg",
        "41.177",
        "--snapshots",
        "32",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# hybrid-doa crlb v1");
    assert!(lines[1].starts_with("x,n,k,m,"));
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("0,32,16,2,"));
}

#[test]
fn stepsize_sweep_has_four_method_rows_per_point() {
    let o = hybrid_doa(&[
        "sweep-stepsize",
        "--n",
        "32",
        "--k",
        "16",
        "--snr-db",
        "0",
        "--values",
        "1,0.5",
        "--trials",
        "20",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# hybrid-doa sweep-stepsize v1"));
    assert_eq!(
        lines.next(),
        Some("x,method,rmse_deg,trials,failures,crlb_hybrid_deg,crlb_digital_deg,seed")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    let methods: Vec<&str> = rows[..4].iter().map(|r| r[1]).collect();
    assert_eq!(methods, ["apa", "hadpa", "hdapa", "rm-hdapa"]);
    assert!(rows.iter().all(|r| r.len() == 8 && r[3] == "20" && r[7] == "1"));
    // Both bounds are identical across the rows of one point.
    assert!(rows[..4].iter().all(|r| r[5] == rows[0][5] && r[6] == rows[0][6]));
}

#[test]
fn unknown_flag_and_bad_values_exit_2() {
    assert_eq!(hybrid_doa(&["crlb", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(hybrid_doa(&["sweep-snr", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(
        hybrid_doa(&["sweep-n", "--n", "32", "--k", "16", "--values", "33"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        hybrid_doa(&["estimate", "--n", "32", "--k", "1", "--methods", "rm-hdapa"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(hybrid_doa(&["estimate", "--theta-deg", "95"]).status.code(), Some(2));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[scenario]\nn = 32\nk = 16\n\n[run]\ntrials = \"many\"\n",
    );
    let o = hybrid_doa(&["sweep-snr", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bad.toml:6:"), "{err}");

    let cfg = write(dir.path(), "geom.toml", "[scenario]\nn = 32\nk = 5\n");
    let o = hybrid_doa(&["crlb", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("geom.toml:3:"));
}

#[test]
fn config_values_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "[scenario]\nn = 16\nm = 4\n\n[run]\nseed = 5\ntrials = 3\nmethods = [\"apa\", \"hdapa\"]\n\n[sweep-snr]\nvalues = [-5.0, 5.0]\n",
    );
    let rows_of = |o: &Output| -> Vec<Vec<String>> {
        stdout(o)
            .lines()
            .skip(2)
            .map(|l| l.split(',').map(String::from).collect())
            .collect()
    };
    let o = hybrid_doa(&["sweep-snr", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let rows = rows_of(&o);
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(keys, [("-5", "apa"), ("-5", "hdapa"), ("5", "apa"), ("5", "hdapa")]);
    assert!(rows.iter().all(|r| r[3] == "3" && r[7] == "5"));

    let o = hybrid_doa(&[
        "sweep-snr",
        "--config",
        &cfg,
        "--seed",
        "8",
        "--trials",
        "2",
        "--values",
        "0",
    ]);
    let rows = rows_of(&o);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[0] == "0" && r[3] == "2" && r[7] == "8"));
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_hybrid-doa"));
        c.args([
            "sweep-snr",
            "--n",
            "16",
            "--k",
            "4",
            "--trials",
            "4",
            "--methods",
            "rm-hdapa",
        ])
        .args(args);
        match env {
            Some(v) => c.env("HYBRID_DOA_SEED", v),
            None => c.env_remove("HYBRID_DOA_SEED"),
        };
        c.output().unwrap()
    };
    let from_env = stdout(&run(Some("42"), &[]));
    let from_flag = stdout(&run(None, &["--seed", "42"]));
    assert_eq!(from_env, from_flag);
    assert!(from_env.trim_end().ends_with(",42"));
    let flag_wins = stdout(&run(Some("42"), &["--seed", "7"]));
    assert!(flag_wins.trim_end().ends_with(",7"));
    assert_eq!(run(Some("not-a-seed"), &[]).status.code(), Some(2));
}

#[test]
fn json_output_is_versioned_and_parses() {
    let o = hybrid_doa(&[
        "complexity",
        "--n",
        "128",
        "--k",
        "16",
        "--values",
        "1,0.125",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["format"], "hybrid-doa complexity v1");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[4]["flops"], 5_902_336u64);
}

#[test]
fn estimate_reports_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("est.json");
    let o = hybrid_doa(&[
        "estimate",
        "--snr-db",
        "10",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    assert_eq!(reports[3]["blocks_consumed"], 3);
    for r in reports {
        let deg = r["theta_hat"].as_f64().unwrap().to_degrees();
        assert!((deg - 41.177).abs() < 1.0, "{r}");
    }
}
