//! End-to-end scenario runs: replay identity, checkpoint/resume and config
//! handling.

use std::path::Path;

use axiswalk::harness::{run_scenario, ExperimentConfig, PhaseSize, Scenario, Session, Verdict, CSV_HEADER};
use axiswalk::Error;

fn small_lln(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new("lln-Nn", seed);
    c.replicas = Some(128);
    c.horizons = Some(vec![1_000, 10_000, 100_000]);
    c.secondary = Some(PhaseSize {
        replicas: 128,
        horizons: vec![100, 1_000],
    });
    c
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new("eta-tail", 5);
    cfg.replicas = Some(200_000);
    let mut outs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        cfg.output = Some(out.clone());
        run_scenario(&cfg).unwrap();
        outs.push(out);
    }
    for f in ["eta-tail.csv", "eta-tail.json"] {
        assert_eq!(read(&outs[0].join(f)), read(&outs[1].join(f)), "{f}");
    }
    assert!(outs[0].join("eta-tail.timing.json").exists());
    let csv = String::from_utf8(read(&outs[0].join("eta-tail.csv"))).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
}

#[test]
fn seeds_change_results() {
    let mut a = ExperimentConfig::new("eta-tail", 1);
    a.replicas = Some(100_000);
    let mut b = a.clone();
    b.seed = 2;
    assert_ne!(run_scenario(&a).unwrap().to_csv(), run_scenario(&b).unwrap().to_csv());
}

#[test]
fn interrupted_runs_resume_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let reference = run_scenario(&small_lln(9)).unwrap();

    let mut cfg = small_lln(9);
    let ck = dir.path().join("lln.ckpt");
    cfg.checkpoint = Some(ck.clone());
    cfg.stop_after_blocks = Some(64);
    let mut interrupts = 0;
    let report = loop {
        match run_scenario(&cfg) {
            Ok(r) => break r,
            Err(Error::Interrupted { .. }) => {
                interrupts += 1;
                assert!(ck.exists());
                assert!(interrupts < 10);
            }
            Err(e) => panic!("{e}"),
        }
    };
    // two phases of 128 blocks, stopped every 64
    assert!(interrupts >= 2, "{interrupts}");
    assert_eq!(report.to_csv(), reference.to_csv());
    assert_eq!(report.to_json(), reference.to_json());

    // a finished checkpoint replays without sampling
    cfg.stop_after_blocks = Some(1);
    assert_eq!(run_scenario(&cfg).unwrap().to_json(), reference.to_json());
}

#[test]
fn checkpoint_for_another_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("c.ckpt");
    let mut cfg = small_lln(3);
    cfg.checkpoint = Some(ck.clone());
    cfg.stop_after_blocks = Some(64);
    assert!(matches!(run_scenario(&cfg), Err(Error::Interrupted { .. })));
    cfg.seed = 4;
    match run_scenario(&cfg) {
        Err(Error::Checkpoint(m)) => assert!(m.contains("config"), "{m}"),
        other => panic!("expected refusal, got {other:?}"),
    }
    // run-control fields may change freely
    cfg.seed = 3;
    cfg.stop_after_blocks = None;
    cfg.checkpoint_interval_secs = 0.0;
    run_scenario(&cfg).unwrap();
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("d.ckpt");
    let mut cfg = small_lln(6);
    cfg.checkpoint = Some(ck.clone());
    cfg.stop_after_blocks = Some(64);
    assert!(matches!(run_scenario(&cfg), Err(Error::Interrupted { .. })));
    let good = std::fs::read_to_string(&ck).unwrap();

    let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
    v["body"]["current"]["next_block"] = serde_json::json!(1);
    std::fs::write(&ck, v.to_string()).unwrap();
    match run_scenario(&cfg) {
        Err(Error::Checkpoint(m)) => assert!(m.contains("corrupt"), "{m}"),
        other => panic!("{other:?}"),
    }

    let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
    v["version"] = serde_json::json!(99);
    std::fs::write(&ck, v.to_string()).unwrap();
    match run_scenario(&cfg) {
        Err(Error::Checkpoint(m)) => assert!(m.contains("version"), "{m}"),
        other => panic!("{other:?}"),
    }

    std::fs::write(&ck, "not json").unwrap();
    assert!(matches!(run_scenario(&cfg), Err(Error::Checkpoint(_))));

    // a missing file is a fresh start
    std::fs::remove_file(&ck).unwrap();
    cfg.stop_after_blocks = None;
    let r = run_scenario(&cfg).unwrap();
    cfg.checkpoint = None;
    assert_eq!(r.to_json(), run_scenario(&cfg).unwrap().to_json());
}

#[test]
fn session_shares_phases_between_scenarios() {
    let mut s = Session::new();
    let mut a = ExperimentConfig::new("theorem1", 2);
    a.replicas = Some(4);
    a.horizons = Some(vec![1_000, 10_000, 100_000]);
    let mut b = a.clone();
    b.scenario = "axis-negligible".into();
    let ra = s.run(&a).unwrap();
    let rb = s.run(&b).unwrap();
    assert_eq!(ra.rng.phases[0].key, rb.rng.phases[0].key);
    assert_eq!(rb.to_json(), run_scenario(&b).unwrap().to_json());
}

#[test]
fn config_json_and_validation() {
    let c = ExperimentConfig::from_json(r#"{"scenario": "axis-rho", "seed": 7, "replicas": 1000}"#).unwrap();
    assert_eq!(c.kind().unwrap(), Scenario::AxisRho);
    let m = c.materialized().unwrap();
    assert_eq!(m.replicas, Some(1000));
    assert!(m.horizons.is_some());
    assert!(ExperimentConfig::from_json(r#"{"scenario": "axis-rho", "seed": 7, "bogus": 1}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"scenario": "axis-rho"}"#).is_err());
    match run_scenario(&ExperimentConfig::new("no-such", 1)) {
        Err(Error::UnknownScenario(_)) => {}
        other => panic!("{other:?}"),
    }
    let mut low = ExperimentConfig::new("lln-Nn", 1);
    low.alpha = 1.0;
    assert!(matches!(run_scenario(&low), Err(Error::TheoremRegime { .. })));
    // cone-only scenarios run at any alpha
    let mut e = ExperimentConfig::new("eta-tail", 1);
    e.alpha = 1.0;
    e.replicas = Some(1000);
    run_scenario(&e).unwrap();
}

#[test]
fn oracle_crosscheck_passes_its_gates() {
    let mut cfg = ExperimentConfig::new("oracle-crosscheck", 17);
    cfg.replicas = Some(200_000);
    let r = run_scenario(&cfg).unwrap();
    for m in ["crosscheck-cone-exit-p", "crosscheck-axis-entry-p", "crosscheck-walk-law-p"] {
        let row = r.row(m).unwrap();
        assert_eq!(row.verdict, Verdict::Pass, "{m}: {}", row.estimate);
    }
    assert!(r.hard_gates_pass());
    assert_eq!(r.exit_code(), 0);
}
