use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn msp_power(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msp-power"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        "[network]\nnum_aps = 4\nantennas_per_ap = 2\nnum_users = 3\nsamples = 24\nseed = 5\n\
         [solver]\ntolerance = 1e-7\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn simulate_then_compare_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let cache = dir.path().join("s.pcss");
    let out = dir.path().join("out");
    let (cache, out) = (cache.to_str().unwrap(), out.to_str().unwrap());

    let sim = msp_power(&["simulate", "--config", &config, "--cache", cache]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    assert!(String::from_utf8_lossy(&sim.stdout).contains("wrote 24 samples (3 users, 8 antennas)"));

    let cmp = msp_power(&["compare", "--config", &config, "--cache", cache, "--out-dir", out]);
    assert!(cmp.status.success(), "{}", String::from_utf8_lossy(&cmp.stderr));
    let out = Path::new(out);
    assert_eq!(
        header(&out.join("rates.csv")),
        "user,weight,oer_rate_at_oer_solution,oer_rate_at_uatf_solution"
    );
    assert_eq!(header(&out.join("powers.csv")), "user,oer_power_mw,uatf_power_mw");
    assert_eq!(header(&out.join("convergence.csv")), "iteration,bound,objective_bits_per_symbol,thompson_step");
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 4);

    // cache and fresh simulation give the same numbers
    let fresh = dir.path().join("fresh");
    let again = msp_power(&["compare", "--config", &config, "--out-dir", fresh.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(fs::read(fresh.join("rates.csv")).unwrap(), rates.into_bytes());
}

#[test]
fn solve_reports_objective() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = msp_power(&[
        "solve", "--config", &config, "--bound", "uatf", "--norm", "l2", "--raw-rates", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("uatf max-min objective"), "{stdout}");
    assert!(stdout.contains("nats"), "{stdout}");
}

#[test]
fn check_passes_on_small_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = msp_power(&["check", "--config", &config]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");
    assert!(stdout.contains("PASS bound ordering"), "{stdout}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = msp_power(&["solve", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[network]\ntau_p = 0\n").unwrap();
    let out = msp_power(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let junk = dir.path().join("junk.pcss");
    fs::write(&junk, b"not a cache").unwrap();
    let out = msp_power(&["solve", "--cache", junk.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
