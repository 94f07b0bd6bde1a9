use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn lyap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyap")).args(args).output().unwrap()
}

fn scenario(name: &str) -> String {
    scenarios().join(name).to_string_lossy().into_owned()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn primer3_spectrum() {
    let v = json(&lyap(&["spectrum", "--config", &scenario("primer3.toml")]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "spectrum");
    let ex: Vec<f64> = serde_json::from_value(v["result"]["exponents"].clone()).unwrap();
    assert!(ex[0].abs() < 1e-3 && (ex[1] - 2f64.ln()).abs() < 1e-3, "{ex:?}");
    // resolved defaults are echoed
    assert_eq!(v["parameters"]["horizon"], 10_000);
    assert_eq!(v["parameters"]["scan"]["gamma_grid"].as_array().unwrap().len(), 8);
    assert_eq!(v["parameters"]["scan"]["rule"]["tail_fraction"], 0.5);
}

#[test]
fn identity_spectrum_is_zero() {
    let v = json(&lyap(&["spectrum", "--config", &scenario("identity.toml")]));
    let ex: Vec<f64> = serde_json::from_value(v["result"]["exponents"].clone()).unwrap();
    assert_eq!(ex, vec![0.0; 3]);
    assert_eq!(v["result"]["groups"][0]["multiplicity"], 3);
}

#[test]
fn horizon_and_seed_overrides() {
    let v = json(&lyap(&["spectrum", "--config", &scenario("primer3.toml"), "--horizon", "500", "--seed", "9"]));
    assert_eq!(v["parameters"]["horizon"], 500);
    assert_eq!(v["parameters"]["seed"], 9);
}

#[test]
fn splitness_verdicts() {
    let v = json(&lyap(&["splitness", "--config", &scenario("primer3.toml")]));
    assert_eq!(v["result"]["splitted"], "yes");
    let v = json(&lyap(&["splitness", "--config", &scenario("primer3_nonnormal.toml")]));
    for s in v["result"]["verdicts"].as_array().unwrap() {
        assert_eq!(s["verdict"], "no");
    }
    let v = json(&lyap(&["splitness", "--config", &scenario("ex2.toml")]));
    assert_eq!(v["result"]["splitted"], "yes");
    assert!(v["result"]["verdicts"][0]["rho_hat"].as_f64().unwrap() >= 0.19);
    assert!(!v["result"]["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn perturb_primer3() {
    let v = json(&lyap(&["perturb", "--config", &scenario("primer3.toml")]));
    let out = &v["result"]["outcome"];
    let p: Vec<f64> = serde_json::from_value(out["perturbed_exponents"].clone()).unwrap();
    assert!((p[0] - 0.01).abs() < 1e-3 && (p[1] - (2f64.ln() - 0.01)).abs() < 1e-3);
    assert_eq!(out["closed_form_ok"], true);
    let dev = out["norm"]["sup_deviation"].as_f64().unwrap();
    assert!((dev - (0.01f64.exp() - 1.0)).abs() < 1e-12);
}

#[test]
fn ex2_experiments() {
    let v = json(&lyap(&["perturb", "--config", &scenario("ex2.toml")]));
    assert_eq!(v["result"]["outcome"]["closed_form_ok"], true);
    let v = json(&lyap(&["instability", "--config", &scenario("ex2.toml")]));
    assert_eq!(v["result"]["witness"], serde_json::json!([1.0, -1.0]));
    for row in v["result"]["rows"].as_array().unwrap() {
        assert_eq!(row["success"], true, "{row}");
    }
}

#[test]
fn assign_primer3() {
    let v = json(&lyap(&["assign", "--config", &scenario("primer3.toml")]));
    assert_eq!(v["result"]["success"], true);
}

#[test]
fn csv_files_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let d = dir.path().to_string_lossy().into_owned();
        for cmd in ["spectrum", "splitness", "perturb"] {
            let out = lyap(&[cmd, "--config", &scenario("primer3.toml"), "--format", "csv", "--out-dir", &d]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let listed: Vec<String> = names.iter().map(|n| n.to_string_lossy().into_owned()).collect();
    for want in ["primer3.spectrum.json", "primer3.spectrum.spectrum.csv", "primer3.splitness.angles.csv"] {
        assert!(listed.iter().any(|n| n == want), "{listed:?}");
    }
    for n in &names {
        assert_eq!(fs::read_to_string(a.path().join(n)).unwrap(), fs::read_to_string(b.path().join(n)).unwrap(), "{n:?}");
    }
    let csv = fs::read_to_string(a.path().join("primer3.spectrum.spectrum.csv")).unwrap();
    assert!(csv.starts_with("exponent,multiplicity,realizing_count\n"));
}

#[test]
fn sinln_and_selftest() {
    let v = json(&lyap(&["sinln", "--max-n", "10"]));
    assert!(v["result"]["max"].as_f64().unwrap() <= 1.0);
    let v = json(&lyap(&["sinln"]));
    assert_eq!(v["result"]["argmax"], 2576);
    let v = json(&lyap(&["selftest"]));
    assert_eq!(v["result"]["passed"], true);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| lyap(args).status.code().unwrap();

    assert_eq!(code(&["spectrum", "--config", "/no/such/file.toml"]), 2);
    assert_eq!(code(&["spectrum"]), 2);
    assert_eq!(code(&["sinln", "--max-n", "9"]), 2);
    let cfg = write_config(dir.path(), "schema_version = 7\nhorizon = 10\n[system]\nspec = \"identity 2\"\n");
    assert_eq!(code(&["spectrum", "--config", &cfg]), 2);
    let cfg = write_config(dir.path(), "schema_version = 1\nhorizon = 10\n[system]\nfile = \"missing.toml\"\n");
    assert_eq!(code(&["spectrum", "--config", &cfg]), 2);

    let cfg = write_config(dir.path(), "schema_version = 1\nhorizon = 50\n[system]\nspec = \"diag(0, 1)\"\n");
    assert_eq!(code(&["spectrum", "--config", &cfg]), 3);

    let cfg = write_config(
        dir.path(),
        "schema_version = 1\nhorizon = 100\n[system]\nspec = \"diag(1, 2)\"\n[perturb]\nxi = [0.5, 0.0]\n",
    );
    let out = lyap(&["perturb", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    let cfg = write_config(
        dir.path(),
        "schema_version = 1\nhorizon = 1000\n[system]\nspec = \"diag(1, 2)\"\n[instability]\nepsilon = [0.01]\n",
    );
    assert_eq!(code(&["instability", "--config", &cfg]), 4);
}
