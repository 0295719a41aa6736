use std::process::Command;

fn gnflow(args: &[&str], dir: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gnflow")).args(args).current_dir(dir).output().expect("binary runs")
}

#[test]
fn invalid_blocking_factor_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnflow(&["verify", "10", "--set", "L=1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`L`") && err.contains("at least 2"), "{err}");
}

#[test]
fn table_is_reused_across_commands() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(gnflow(&["coeffs", "--N", "4", "--out", "table.csv"], p).status.success());
    let table = std::fs::read(p.join("table.csv")).unwrap();
    let flow = gnflow(&["flow", "quad", "--N", "4", "--table", "table.csv", "--out", "traj.csv"], p);
    assert!(flow.status.success(), "{}", String::from_utf8_lossy(&flow.stderr));
    let solve = gnflow(&["solve", "--N", "4", "--table", "table.csv", "--model", "sat", "--out", "solution.csv"], p);
    assert!(solve.status.success(), "{}", String::from_utf8_lossy(&solve.stderr));
    assert_eq!(std::fs::read(p.join("table.csv")).unwrap(), table);
    assert!(!p.join("coeffs.csv").exists());
    let header = std::fs::read_to_string(p.join("solution.csv")).unwrap();
    assert!(header.starts_with("k,e,g,z,p,v,eps"));
    let traj = std::fs::read_to_string(p.join("traj.csv")).unwrap();
    assert!(traj.starts_with("k,gbar,zbar,lower_candy,upper_candy"));
    let wrong = gnflow(&["flow", "quad", "--N", "5", "--table", "table.csv"], p);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn artifacts_are_deterministic_and_carry_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for d in ["a", "b"] {
        assert!(gnflow(&["polymer", "mayer", "--seed", "5", "--out", d], p).status.success());
    }
    let read = |d: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(p.join(d).join("mayer.json")).unwrap()).unwrap()
    };
    let (a, b) = (read("a"), read("b"));
    assert_eq!(a["result"], b["result"]);
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["config"]["seed"], 5);
}

#[test]
fn gamma_of_an_l_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnflow(&["polymer", "gamma", "--X", "0,0; 1,0; 1,1", "--json"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["theta"], 1.0);
    assert_eq!(v["result"]["gamma"], 4096.0);
}

#[test]
fn kernel_json_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnflow(&["kernels", "--kind", "C", "--x", "0.5,0.25", "--json"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["kind", "x", "matrix_re", "matrix_im", "truncation_radius"] {
        assert!(!v["result"][key].is_null(), "{key}");
    }
}
