use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stwave(config: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stwave"))
        .arg("--config")
        .arg(config)
        .args(extra)
        .env_remove("STWAVE_OUT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn constants_command_writes_soliton_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "command = \"constants\"\n[constants]\ndim = 1\nexponents = [3.0, 5.0]\n");
    let out = tmp.path().join("out");
    let res = stwave(&cfg, &["--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("constants.csv")).unwrap();
    let masses: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert!((masses[0] - 4.0).abs() < 1e-6, "{csv}");
    assert!((masses[1] - 2.7207).abs() < 1e-4, "{csv}");
    assert!(fs::read_to_string(out.join("thresholds.csv")).unwrap().starts_with("kind,N,exponent"));
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["conventions"]["bound_tau"], 0.1);
    assert!(m["conventions"]["riesz_kernel"].is_string());
    assert!(m["conventions"]["reg_eps"].is_number());
}

#[test]
fn check_command_reports_combined_margin() {
    let tmp = tempfile::tempdir().unwrap();
    // critical Choquard and power parts together in one dimension
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "command = \"check\"\n[problem]\nnonlinearity = \"mixed(q=3.5,beta=0.5,p=5)\"\nrho = 0.5\n",
    );
    let out = tmp.path().join("out");
    let res = stwave(&cfg, &["--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
    let combined = v["verdicts"].as_array().unwrap().iter().find(|x| x["case_id"] == 4).expect("combined case");
    assert!(combined["margin"].is_number());
    assert_eq!(combined["applies"].as_bool().unwrap(), combined["margin"].as_f64().unwrap() > 0.0);
}

#[test]
fn ground_state_binaries_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "g.toml", "[problem]\npoints = 128\nnonlinearity = \"power(p=3)\"\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let res = stwave(&cfg, &["--out", dir.to_str().unwrap(), "--workers", "1"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let fa = fs::read(a.join("ground_state.bin")).unwrap();
    assert!(!fa.is_empty());
    assert_eq!(fa, fs::read(b.join("ground_state.bin")).unwrap());
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
}

#[test]
fn invalid_exponent_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[problem]\nnonlinearity = \"power(p=0.5)\"\n");
    let res = stwave(&cfg, &["--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("p=0.5") && err.contains("1 < p"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn refusals_have_distinct_codes_and_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("sup.toml", "[problem]\nnonlinearity = \"power(p=6)\"\n", 3, "refused_supercritical"),
        ("above.toml", "[problem]\nnonlinearity = \"power(p=5)\"\nrho = 3.0\n", 4, "refused_above_threshold"),
        ("slow.toml", "[problem]\npoints = 128\n[solver]\nmax_iters = 2\n", 5, "nonconvergence"),
    ];
    for (name, body, code, status) in cases {
        let cfg = write_config(tmp.path(), name, body);
        let out = tmp.path().join(name.trim_end_matches(".toml"));
        let res = stwave(&cfg, &["--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(code), "{name}: {}", String::from_utf8_lossy(&res.stderr));
        let m = manifest(&out);
        assert_eq!(m["status"], status);
        assert_eq!(m["partial"], true);
    }
    let m = manifest(&tmp.path().join("slow"));
    let field = m["outputs"].as_array().unwrap().iter().find(|o| o["path"] == "ground_state.bin").unwrap();
    assert_eq!(field["partial"], true);
}

#[test]
fn seed_list_and_environment_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.toml",
        "command = \"stability\"\nseeds = [9]\n[problem]\npoints = 128\n[stability]\ndeltas = [0.0, 0.01]\nhorizon = 0.5\ndt = 0.001\n",
    );
    let root = tmp.path().join("root");
    let res = Command::new(env!("CARGO_BIN_EXE_stwave"))
        .args(["--config", cfg.to_str().unwrap(), "--seed-list", "4,5"])
        .env("STWAVE_OUT", &root)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let out = root.join("stability");
    let m = manifest(&out);
    assert_eq!(m["seeds"], serde_json::json!([4, 5]));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stability.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 4);
    assert!(report["sup_dist"][0].as_f64().unwrap() <= 1e-4);
}

#[test]
fn printed_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "e.toml", "command = \"evolve\"\n[evolve]\ninit = \"sech\"\nt_final = 0.1\n");
    let res = stwave(&cfg, &["--print-config"]);
    assert!(res.status.success());
    let echoed = String::from_utf8(res.stdout).unwrap();
    assert!(echoed.contains("init = \"sech\"") && echoed.contains("[solver]"));
    let again = stwave_cli::parse_config(&echoed).unwrap();
    assert_eq!(again, stwave_cli::parse_config(&fs::read_to_string(&cfg).unwrap()).unwrap());

    let out = tmp.path().join("evolve");
    let res = stwave(&cfg, &["--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,mass,energy,gradnorm,dist\n"));
    assert!(out.join("final_field.bin").exists());
}
