use std::fs;
use std::path::Path;

use ftt_sim::ftt_core::scenario::{builtin, ScenarioSpec};
use ftt_sim::ftt_core::Scheme;
use proptest::prelude::*;

fn spec(name: &str, duration: f64) -> ScenarioSpec {
    let mut s = builtin(name).unwrap();
    s.duration = duration;
    s
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn four_loop_run_writes_twelve_traces_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let r = ftt_sim::run(&spec("reconfig", 2.0)).unwrap();
    let written = ftt_sim::export(&r, dir.path(), "x").unwrap();
    assert_eq!(written.len(), 13);
    let names = listing(dir.path());
    assert_eq!(names.iter().filter(|n| n.ends_with(".csv")).count(), 12);
    assert!(names.contains(&"x-summary.json".to_string()));
    for k in 1..=4 {
        for kind in ["output", "period", "dmr"] {
            assert!(
                names.contains(&format!("x-loop{k}-{kind}.csv")),
                "{names:?}"
            );
        }
    }
}

#[test]
fn headers_are_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let r = ftt_sim::run(&spec("interference-slight", 1.0)).unwrap();
    ftt_sim::export(&r, dir.path(), "p").unwrap();
    let first = |f: &str| {
        fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(first("p-loop1-output.csv"), "t,r,y,u");
    assert_eq!(first("p-loop1-period.csv"), "t,h");
    assert_eq!(first("p-loop2-dmr.csv"), "t,rho,rho_filtered");
}

#[test]
fn never_active_loop_gets_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    // Loops 3 and 4 would join at 6 s.
    let r = ftt_sim::run(&spec("reconfig", 3.0)).unwrap();
    ftt_sim::export(&r, dir.path(), "e").unwrap();
    for kind in ["output", "period", "dmr"] {
        let text = fs::read_to_string(dir.path().join(format!("e-loop3-{kind}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 1, "{kind}: {text}");
    }
}

#[test]
fn summary_mirrors_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let r = ftt_sim::run(&spec("reconfig", 2.0)).unwrap();
    ftt_sim::export(&r, dir.path(), "s").unwrap();
    let text = fs::read_to_string(dir.path().join("s-summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["scenario"], "reconfig");
    assert_eq!(v["scheme"], "ftt");
    assert_eq!(v["loops"].as_array().unwrap().len(), 4);
    assert_eq!(
        v["loops"][0]["iae"].as_f64().unwrap(),
        r.summary.loops[0].iae
    );
    assert_eq!(
        v["channel"]["offered"].as_u64().unwrap(),
        r.summary.channel.offered
    );
    for key in [
        "busy_fraction",
        "delivered",
        "collision",
        "access_failure",
        "random_loss",
    ] {
        assert!(v["channel"].get(key).is_some(), "{key}");
    }
}

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let s = spec("interference-severe", 8.0);
    for dir in [&a, &b] {
        let r = ftt_sim::run(&s).unwrap();
        ftt_sim::export(&r, dir.path(), "d").unwrap();
    }
    let names = listing(a.path());
    assert_eq!(names, listing(b.path()));
    for n in names {
        assert_eq!(
            fs::read(a.path().join(&n)).unwrap(),
            fs::read(b.path().join(&n)).unwrap(),
            "{n}"
        );
    }
}

#[test]
fn unwritable_directory_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let target = blocker.join("sub");
    let r = ftt_sim::run(&spec("interference-slight", 0.5)).unwrap();
    let err = ftt_sim::export(&r, &target, "z").unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("file"), "{err}");
}

#[test]
fn batch_runs_keep_input_order() {
    let base = spec("interference-slight", 1.0);
    let specs = ftt_sim::expand(&base, &[Scheme::Tt, Scheme::Ftt], &[1, 2, 3]);
    let out = ftt_sim::run_batch(&specs, None).unwrap();
    let seen: Vec<_> = out
        .iter()
        .map(|o| (o.result.summary.scheme.clone(), o.result.summary.seed))
        .collect();
    let want: Vec<_> = specs
        .iter()
        .map(|s| (s.scheme.label().to_string(), s.seed))
        .collect();
    assert_eq!(seen, want);
    let solo = ftt_sim::run(&specs[4]).unwrap();
    assert_eq!(solo.digest, out[4].result.digest);
}

#[test]
fn builtins_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ftt_sim::ftt_core::scenario::BUILTIN_NAMES {
        let s = builtin(name).unwrap();
        let path = dir.path().join(format!("{name}.json"));
        ftt_sim::write_scenario(&path, &s).unwrap();
        assert_eq!(ftt_sim::read_scenario(&path).unwrap(), s);
        assert_eq!(ftt_sim::load_scenario(path.to_str().unwrap()).unwrap(), s);
    }
}

#[test]
fn empty_document_takes_defaults_but_needs_a_loop() {
    let err = ftt_sim::parse_scenario("{}", Path::new("e.json")).unwrap_err();
    assert!(err.to_string().contains("loops"), "{err}");
    let s = ftt_sim::parse_scenario(r#"{"loops": [{}]}"#, Path::new("e.json")).unwrap();
    assert_eq!(s.loops[0].initial_h, 0.01);
    assert_eq!(s.channel.bitrate, 250_000.0);
}

fn arb_spec() -> impl Strategy<Value = ScenarioSpec> {
    (
        any::<u64>(),
        prop_oneof![Just(Scheme::Tt), Just(Scheme::Ftt)],
        1u32..5,
        0.002f64..0.03,
        0.0f64..1.0,
        0.5f64..30.0,
        proptest::option::of(1u32..8),
    )
        .prop_map(|(seed, scheme, n, h, loss, duration, qlim)| {
            let mut s = builtin("reconfig").unwrap();
            s.seed = seed;
            s.scheme = scheme;
            s.duration = duration;
            s.channel.loss_prob = loss;
            s.channel.queue_limit = qlim;
            s.loops.truncate(n as usize);
            for l in &mut s.loops {
                l.initial_h = h;
                l.reference.amplitude_low = -loss;
            }
            s
        })
}

proptest! {
    #[test]
    fn json_round_trip(s in arb_spec()) {
        let text = serde_json::to_string(&s).unwrap();
        let back = ftt_sim::parse_scenario(&text, Path::new("p.json")).unwrap();
        prop_assert_eq!(back, s);
    }
}
