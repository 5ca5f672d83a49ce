use std::path::Path;
use std::process::{Command, Output};

fn soc_uq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soc-uq"))
        .args(args)
        .output()
        .expect("spawn soc-uq")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn defaults_run_out_of_the_box() {
    let out = soc_uq(&["simulate", "--experiment", "rest"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("t,i_true,i_meas,v_meas,soc_true,soc_hat,soc_tilde,u,delta,bias,ci_lo,ci_hi"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3001);
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.cfg", "no_such_key = 3\n");
    assert_eq!(soc_uq(&["simulate", "--config", &bad]).status.code(), Some(1));
    assert_eq!(soc_uq(&["simulate", "--config", "/missing.cfg"]).status.code(), Some(1));
    assert_eq!(soc_uq(&["simulate", "--seed", "x"]).status.code(), Some(1));
    assert_eq!(soc_uq(&["rest-sweep", "--experiment", "rest"]).status.code(), Some(1));
    let out = soc_uq(&["simulate", "--config", &bad]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn numerical_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let drain = write_config(dir.path(), "drain.cfg", "soc0 = 0.2\n");
    let out = soc_uq(&["simulate", "--config", &drain]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn help_exits_0() {
    assert_eq!(soc_uq(&["--help"]).status.code(), Some(0));
}

#[test]
fn hash_changes_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.cfg", "");
    let b = write_config(dir.path(), "b.cfg", "beta = 2e-4\n");
    let first_line = |cfg: &str, seed: &str| {
        let out = soc_uq(&["gen-profile", "--config", cfg, "--seed", seed]);
        String::from_utf8(out.stdout).unwrap().lines().next().unwrap().to_string()
    };
    assert!(first_line(&a, "1").starts_with("# config_hash = "));
    assert_ne!(first_line(&a, "1"), first_line(&b, "1"));
    assert_ne!(first_line(&a, "1"), first_line(&a, "2"));
    assert_eq!(first_line(&a, "1"), first_line(&a, "1"));
}

#[test]
fn outputs_reload_as_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "fit.cfg", "hppc_socs = 0.3, 0.7\nga_generations = 40\n");
    let ecm = d.join("ecm.csv");
    let prof = d.join("profile.csv");
    let st = soc_uq(&["fit-params", "--config", &cfg, "--out", ecm.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(0));
    let st = soc_uq(&["gen-profile", "--out", prof.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(0));
    let replay = write_config(
        d,
        "replay.cfg",
        &format!("ecm_csv = {}\nprofile_csv = {}\n", ecm.display(), prof.display()),
    );
    assert_eq!(soc_uq(&["simulate", "--config", &replay]).status.code(), Some(0));
}
