use std::process::Command;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stars-bench"))
}

fn tmp(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("stars-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn selftest_writes_checks() {
    let out = tmp("selftest");
    let st = bench().args(["selftest", "--out"]).arg(&out).status().unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(out.join("selftest.csv")).unwrap();
    assert!(text.starts_with("check,value,threshold,status\n"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",PASS")));
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn bad_inputs_fail_with_diagnostic() {
    let out = tmp("bad");
    let r = bench().args(["sweep-power", "--preset", "nope", "--out"]).arg(&out).output().unwrap();
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("unknown preset"));

    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("x.toml");
    std::fs::write(&cfg, "name = \"x\"\nkind = \"sweep\"\n[run]\ntrials = 1\nmystery = 3\n").unwrap();
    let r = bench().args(["sweep-power", "--config"]).arg(&cfg).output().unwrap();
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("mystery"));

    // Kind must match the subcommand.
    let r = bench().args(["rmse", "--preset", "solve"]).output().unwrap();
    assert!(!r.status.success());

    let r = bench().args(["solve", "--trials", "0"]).output().unwrap();
    assert!(!r.status.success());
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn preset_dump_round_trips_through_config() {
    let out = tmp("dump");
    std::fs::create_dir_all(&out).unwrap();
    let r = bench().args(["preset", "solve"]).output().unwrap();
    assert!(r.status.success());
    let cfg = out.join("solve.toml");
    std::fs::write(&cfg, &r.stdout).unwrap();
    let st = bench().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(st.success());
    assert!(out.join("solve_solution.csv").exists() && out.join("solve_trace.csv").exists());
    let _ = std::fs::remove_dir_all(&out);
}
