use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use virtmap::cone::MapCircuit;
use virtmap::pauli::{xx_hamiltonian, Observable};

fn virtmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_virtmap")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sample(dir: &Path, name: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = virtmap(&["--seed", seed, "--out", path_str(&out), "sample", "--zero", "--N", "3", "--S", "200", "--perturb", "0.05"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn sampling_is_deterministic_in_the_seed() {
    let dir = TempDir::new().unwrap();
    let a = fs::read_to_string(sample(dir.path(), "a.csv", "7")).unwrap();
    let b = fs::read_to_string(sample(dir.path(), "b.csv", "7")).unwrap();
    let c = fs::read_to_string(sample(dir.path(), "c.csv", "8")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.starts_with("# povm="));
}

#[test]
fn identity_observable_estimates_one_with_zero_sigma() {
    let dir = TempDir::new().unwrap();
    let batch = sample(dir.path(), "batch.csv", "1");
    let o = virtmap(&["estimate", "--batch", path_str(&batch), "--circuit", "identity", "--observable", "identity"]);
    assert!(o.status.success());
    let line: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((line["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(line["sigma"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(line["S"].as_u64(), Some(200));
}

#[test]
fn estimate_grid_has_one_row_per_pair() {
    let dir = TempDir::new().unwrap();
    let batch = sample(dir.path(), "batch.csv", "2");
    let mut circuits = vec!["identity".to_string()];
    for (i, layers) in [1, 2].iter().enumerate() {
        let p = dir.path().join(format!("c{i}.json"));
        fs::write(&p, MapCircuit::brickwork(3, *layers, None).unwrap().to_json()).unwrap();
        circuits.push(p.to_string_lossy().into_owned());
    }
    let mut observables = Vec::new();
    let list: [Observable; 3] = [
        xx_hamiltonian(3, 1.0, 0.5, true).unwrap(),
        Observable::from_real_terms(3, &[(1.0, "ZZI")]).unwrap(),
        Observable::identity(3),
    ];
    for (i, obs) in list.iter().enumerate() {
        let p = dir.path().join(format!("o{i}.json"));
        fs::write(&p, obs.to_json()).unwrap();
        observables.push(p.to_string_lossy().into_owned());
    }
    let mut args = vec!["estimate", "--csv", "--batch", path_str(&batch), "--circuit"];
    args.extend(circuits.iter().map(String::as_str));
    args.push("--observable");
    args.extend(observables.iter().map(String::as_str));
    let o = virtmap(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "observable,map,value,sigma,exact");
    assert_eq!(lines.len(), 10);
    // the identity observable is 1 under every trace-preserving circuit
    for row in lines.iter().filter(|l| l.starts_with("o2,")) {
        let value: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((value - 1.0).abs() < 1e-10, "{row}");
    }
}

#[test]
fn oracle_refuses_large_systems() {
    let o = virtmap(&["oracle-check", "--N", "7", "--instances", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle limited to N ≤ 6"));
}

#[test]
fn oracle_check_passes_small_systems() {
    let o = virtmap(&["oracle-check", "--N", "3", "--instances", "10"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn corrupted_batch_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let batch = sample(dir.path(), "batch.csv", "3");
    let mut text = fs::read_to_string(&batch).unwrap();
    text.push_str("0,1,9\n");
    fs::write(&batch, text).unwrap();
    let o = virtmap(&["estimate", "--batch", path_str(&batch), "--circuit", "identity", "--observable", "identity"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("batch.csv"));
}

#[test]
fn unknown_flag_is_a_validation_error() {
    assert_eq!(virtmap(&["sample", "--bogus"]).status.code(), Some(2));
}

#[test]
fn ansatz_writes_report_and_circuit() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.csv");
    let circuit = dir.path().join("circuit.json");
    let o = virtmap(&[
        "--out", path_str(&report), "ansatz", "--N", "4", "--B", "0.5", "--rounds", "3",
        "--circuit-out", path_str(&circuit),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("# final_energy="));
    assert!(text.contains("# ground_energy="));
    assert_eq!(MapCircuit::from_json(&fs::read_to_string(&circuit).unwrap()).unwrap().num_qubits(), 4);
}

#[test]
fn optimize_on_exact_state_lowers_energy() {
    let dir = TempDir::new().unwrap();
    let state = dir.path().join("state.json");
    fs::write(&state, r#"{"num_qubits": 3, "initial": "mixed", "ops": []}"#).unwrap();
    let circuit = dir.path().join("circuit.json");
    fs::write(&circuit, MapCircuit::staircase(3, 1, None).unwrap().to_json()).unwrap();
    let obs = dir.path().join("obs.json");
    fs::write(&obs, Observable::from_real_terms(3, &[(1.0, "ZII"), (1.0, "IZI")]).unwrap().to_json()).unwrap();
    let o = virtmap(&[
        "optimize", "--circuit", path_str(&circuit), "--observable", path_str(&obs), "--exact-state", path_str(&state),
        "--rounds", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let last = text.lines().find_map(|l| l.strip_prefix("# final_energy=")).unwrap();
    // resetting both qubits to |1⟩ reaches −2
    assert!((last.trim().parse::<f64>().unwrap() + 2.0).abs() < 1e-6, "{text}");
}
