use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ucc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_then_verify_metrics_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = ucc(&["run", "--scenario", "honest", "--out", "a"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("violations 0"));
    for f in [
        "ledger.tlch",
        "genesis.json",
        "delivery_trace.csv",
        "audits.csv",
    ] {
        assert!(dir.join("a").join(f).is_file(), "{f}");
    }

    let o = ucc(&["verify", "--out", "a"], dir);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("ok: "));

    let o = ucc(&["metrics", "--out", "a", "--check"], dir);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("match").count(), 4);

    let audits = fs::read_to_string(dir.join("a/audits.csv")).unwrap();
    let rtm = audits
        .lines()
        .skip(1)
        .find(|l| l.split(',').nth(1) == Some("rtm"))
        .expect("an RTM complaint");
    let id = rtm.split(',').next().unwrap();
    let o = ucc(&["replay", id, "--out", "a"], dir);
    assert_eq!(code(&o), 0);
    let verdict: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(verdict["complaint_id"], id);
    assert_eq!(verdict["class"], "rtm");
    assert_eq!(
        verdict["verdict"].as_str(),
        rtm.split(',').nth(2),
        "replay agrees with the run's own audit"
    );
}

#[test]
fn tampering_is_an_integrity_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(
        code(&ucc(&["run", "--scenario", "honest", "--out", "a"], dir)),
        0
    );
    let dump = dir.join("a/ledger.tlch");
    let mut bytes = fs::read(&dump).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    fs::write(dir.join("bad.tlch"), &bytes).unwrap();
    let o = ucc(&["verify", "--out", "bad.tlch"], dir);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).starts_with("tampered at height "));

    let cpm = dir.join("a/metrics/complaints_per_million.csv");
    let mut text = fs::read_to_string(&cpm).unwrap();
    text.push_str("999,1000,1,1,0,1000000,0\n");
    fs::write(&cpm, text).unwrap();
    let o = ucc(&["metrics", "--out", "a", "--check"], dir);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("differs  complaints_per_million.csv"));

    assert_eq!(code(&ucc(&["metrics", "--out", "a"], dir)), 0);
    assert_eq!(code(&ucc(&["metrics", "--out", "a", "--check"], dir)), 0);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&ucc(&["run", "--scenario", "no-such"], dir)), 2);
    fs::write(dir.join("partial.json"), r#"{"seed": 1}"#).unwrap();
    assert_eq!(code(&ucc(&["run", "--scenario", "partial.json"], dir)), 2);
    assert_eq!(code(&ucc(&["verify", "--out", "missing"], dir)), 2);
    assert_eq!(code(&ucc(&["run"], dir)), 2);
    assert!(!dir.join("out").exists());
}

#[test]
fn seed_flag_controls_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for (out, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let args = [
            "run",
            "--scenario",
            "worked-example",
            "--seed",
            seed,
            "--out",
            out,
        ];
        assert_eq!(code(&ucc(&args, dir)), 0);
    }
    let dump = |d: &str| fs::read(dir.join(d).join("ledger.tlch")).unwrap();
    assert_eq!(dump("a"), dump("b"));
    assert_ne!(dump("a"), dump("c"));
}
