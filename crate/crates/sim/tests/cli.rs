use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ftt_sim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftt-sim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn both_schemes_give_two_artifact_sets_and_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftt_sim(
        &[
            "run",
            "--scenario",
            "reconfig",
            "--scheme",
            "both",
            "--seed",
            "1",
            "--duration",
            "3",
            "--out",
            "a",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 26);
    assert_eq!(names.iter().filter(|n| n.starts_with("tt-")).count(), 13);
    assert_eq!(names.iter().filter(|n| n.starts_with("ftt-")).count(), 13);
    let out = stdout(&o);
    assert!(out.contains("IAE") && out.contains("mean_DMR") && out.contains("diverged"));
    // Header, then one line per loop per scheme.
    let rows = out
        .lines()
        .filter(|l| l.starts_with("tt ") || l.starts_with("ftt "))
        .count();
    assert!(rows >= 8, "{out}");
}

#[test]
fn sweep_writes_one_set_per_seed_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftt_sim(
        &[
            "run",
            "--scenario",
            "interference-slight",
            "--scheme",
            "tt",
            "--seed",
            "4",
            "--sweep",
            "3",
            "--duration",
            "1",
            "--out",
            "s",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    for seed in 4..=6 {
        assert!(dir
            .path()
            .join(format!("s/tt-interference-slight-seed{seed}-summary.json"))
            .is_file());
    }
    let out = stdout(&o);
    assert!(
        out.contains("mean") && out.contains("min") && out.contains("max"),
        "{out}"
    );
}

#[test]
fn severe_interference_flags_fixed_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftt_sim(
        &[
            "run",
            "--scenario",
            "interference-severe",
            "--scheme",
            "tt",
            "--out",
            "v",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let text = fs::read_to_string(
        dir.path()
            .join("v/tt-interference-severe-seed1-loop1-dmr.csv"),
    )
    .unwrap();
    let during: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|f| f.parse::<f64>().unwrap())
                .collect::<Vec<_>>()
        })
        .filter(|row| row[0] > 6.0 && row[0] <= 12.0)
        .map(|row| row[1])
        .collect();
    let mean = during.iter().sum::<f64>() / during.len() as f64;
    assert!(mean > 0.5, "{mean}");
}

#[test]
fn scenario_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let shown = ftt_sim(&["show", "--scenario", "interference-slight"], dir.path());
    assert!(shown.status.success());
    fs::write(dir.path().join("mine.json"), &shown.stdout).unwrap();
    let o = ftt_sim(
        &[
            "run",
            "--scenario",
            "mine.json",
            "--duration",
            "0.5",
            "--out",
            "f",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftt_sim(&["run", "--scenario", "no-such-thing"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("reconfig"));

    fs::write(
        dir.path().join("bad.json"),
        r#"{"loops": [{"sampler": {"lambda": 2.0}}]}"#,
    )
    .unwrap();
    let o = ftt_sim(&["run", "--scenario", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("loops[0].sampler.lambda"));

    let o = ftt_sim(
        &["run", "--scenario", "reconfig", "--duration", "-1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));

    let o = ftt_sim(
        &["run", "--scenario", "reconfig", "--scheme", "fast"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("taken"), "").unwrap();
    let o = ftt_sim(
        &[
            "run",
            "--scenario",
            "reconfig",
            "--duration",
            "0.2",
            "--out",
            "taken/x",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("taken"));
}
