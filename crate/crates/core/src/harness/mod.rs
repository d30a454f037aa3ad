//! Scenario catalogue, run configuration, reports and checkpointing.
//!
//! A scenario is a list of *phases* (random sweeps with a fixed block layout)
//! plus deterministic oracle and limit-law computations. Phases are the only
//! state a checkpoint has to carry: each is identified by a key, folds its
//! blocks in index order, and can be resumed at any chunk boundary.

mod config;
mod phases;
mod report;
mod scenarios;

pub use config::{ExperimentConfig, Grids, PhaseSize, Probes, Scenario, Thresholds};
pub use report::{
    distance_interval, within_rel, LedgerEntry, PhaseRecord, ReportRow, RngProvenance, RowSink, ScenarioReport,
    Verdict, CSV_HEADER,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::engine::{sweep_blocks, SweepControl, SweepPlan, SweepState};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::oracle::{entry_kernel, invariant_fixed_point, InvariantLaw, MassLedger};
use crate::rng::StreamRng;
use crate::stats::AccumulatorSet;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Stationary entrance law together with the kernel's truncation record.
#[derive(Clone, Debug)]
pub struct OracleBundle {
    pub law: InvariantLaw,
    pub kernel_ledger: MassLedger,
    pub sojourn_tail: f64,
}

/// Results shared by consecutive runs in one process: finished phases and
/// oracle fixed points, keyed by everything they depend on.
#[derive(Default)]
pub struct Session {
    phases: BTreeMap<String, AccumulatorSet>,
    oracles: BTreeMap<String, Arc<OracleBundle>>,
}

/// Run one scenario from scratch.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioReport> {
    Session::new().run(cfg)
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn run(&mut self, cfg: &ExperimentConfig) -> Result<ScenarioReport> {
        let t0 = Instant::now();
        let cfg = cfg.materialized()?;
        cfg.validate()?;
        let kind = cfg.kind()?;
        let params = ModelParams::new(cfg.alpha)?;
        if kind.needs_theorem_regime() && !params.theorem_regime() {
            return Err(Error::TheoremRegime {
                scenario: kind.name().to_string(),
                alpha: cfg.alpha,
            });
        }
        let hash = cfg.hash();
        let checkpoint = match &cfg.checkpoint {
            Some(path) => {
                let body = load_checkpoint(path, &hash)?.unwrap_or_else(|| CheckpointBody {
                    config_hash: hash.clone(),
                    scenario: cfg.scenario.clone(),
                    completed: Vec::new(),
                    current: None,
                });
                Some(CheckpointState {
                    path: path.clone(),
                    interval: Duration::from_secs_f64(cfg.checkpoint_interval_secs.max(0.0)),
                    last_save: Instant::now(),
                    body,
                })
            }
            None => None,
        };
        let mut ctx = Ctx {
            cfg: &cfg,
            params,
            session: self,
            checkpoint,
            phases: Vec::new(),
            blocks_run: 0,
        };
        let mut out = scenarios::Out::new(kind.name());
        scenarios::run(kind, &mut ctx, &mut out)?;
        let phases = ctx.phases;
        let report = ScenarioReport {
            config: cfg.result_relevant(),
            config_hash: hash,
            rows: out.sink.rows,
            ledgers: out.ledgers,
            rng: RngProvenance {
                generator: "ChaCha8, one stream per block".into(),
                seed: cfg.seed,
                phases,
            },
            wall_clock_secs: t0.elapsed().as_secs_f64(),
        };
        if let Some(dir) = &cfg.output {
            report.write(dir)?;
        }
        Ok(report)
    }

    fn oracle(&mut self, params: &ModelParams, cfg: &ExperimentConfig) -> Result<Arc<OracleBundle>> {
        let key = serde_json::to_string(&(params.alpha(), &cfg.truncation, &cfg.fixed_point))?;
        if let Some(b) = self.oracles.get(&key) {
            return Ok(b.clone());
        }
        let kernel = entry_kernel(params, cfg.truncation)?;
        let law = invariant_fixed_point(&kernel, cfg.fixed_point)?;
        let b = Arc::new(OracleBundle {
            law,
            kernel_ledger: kernel.ledger.clone(),
            sojourn_tail: kernel.sojourn_tail,
        });
        self.oracles.insert(key, b.clone());
        Ok(b)
    }
}

/// Everything a scenario needs while it runs.
pub(crate) struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub params: ModelParams,
    session: &'a mut Session,
    checkpoint: Option<CheckpointState>,
    phases: Vec<PhaseRecord>,
    blocks_run: u64,
}

impl Ctx<'_> {
    pub fn oracle(&mut self) -> Result<Arc<OracleBundle>> {
        let cfg = self.cfg;
        let params = self.params;
        self.session.oracle(&params, cfg)
    }

    /// Run (or restore) one sweep.
    pub fn phase<I, F>(&mut self, key: &str, plan: SweepPlan, init: I, fill: F) -> Result<AccumulatorSet>
    where
        I: Fn() -> AccumulatorSet + Sync,
        F: Fn(&mut StreamRng, Range<u64>, &mut AccumulatorSet) + Sync,
    {
        let key = format!(
            "{key};seed={};stream={};items={};block={}",
            plan.base.seed, plan.base.stream_id, plan.items, plan.items_per_block
        );
        self.phases.push(PhaseRecord {
            key: key.clone(),
            stream_base: plan.base,
            items: plan.items,
            blocks: plan.blocks(),
        });
        if let Some(acc) = self.session.phases.get(&key) {
            return Ok(acc.clone());
        }
        let mut state = SweepState {
            acc: init(),
            next_block: 0,
            complete: false,
        };
        if let Some(ck) = &self.checkpoint {
            if let Some(done) = ck.body.completed.iter().find(|p| p.key == key) {
                let acc = AccumulatorSet::from_snapshot(&done.acc)?;
                self.session.phases.insert(key, acc.clone());
                return Ok(acc);
            }
            if let Some(cur) = ck.body.current.as_ref().filter(|c| c.key == key) {
                state.acc = AccumulatorSet::from_snapshot(&cur.acc)?;
                state.next_block = cur.next_block;
            }
        }
        let mut control = Control {
            key: &key,
            checkpoint: self.checkpoint.as_mut(),
            blocks_run: &mut self.blocks_run,
            stop_after: self.cfg.stop_after_blocks,
            last_block: state.next_block,
        };
        let state = sweep_blocks(&plan, state, &init, fill, &mut control)?;
        if !state.complete {
            let path = self
                .checkpoint
                .as_ref()
                .map(|c| c.path.display().to_string())
                .unwrap_or_else(|| "<no checkpoint>".into());
            return Err(Error::Interrupted {
                blocks: self.blocks_run,
                path,
            });
        }
        if let Some(ck) = self.checkpoint.as_mut() {
            ck.body.current = None;
            ck.body.completed.push(SavedPhase {
                key: key.clone(),
                acc: state.acc.to_snapshot(),
            });
            ck.save()?;
        }
        self.session.phases.insert(key, state.acc.clone());
        Ok(state.acc)
    }
}

struct Control<'c> {
    key: &'c str,
    checkpoint: Option<&'c mut CheckpointState>,
    blocks_run: &'c mut u64,
    stop_after: Option<u64>,
    last_block: u64,
}

impl SweepControl<AccumulatorSet> for Control<'_> {
    fn after_chunk(&mut self, next_block: u64, acc: &AccumulatorSet) -> Result<bool> {
        *self.blocks_run += next_block - self.last_block;
        self.last_block = next_block;
        let stop = self.stop_after.is_some_and(|s| *self.blocks_run >= s);
        if let Some(ck) = self.checkpoint.as_deref_mut() {
            if stop || ck.last_save.elapsed() >= ck.interval {
                ck.body.current = Some(InProgress {
                    key: self.key.to_string(),
                    next_block,
                    acc: acc.to_snapshot(),
                });
                ck.save()?;
            }
        }
        Ok(!stop)
    }
}

// ---------------------------------------------------------------------------
// checkpoint file

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SavedPhase {
    key: String,
    acc: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct InProgress {
    key: String,
    /// Blocks below this index are folded into `acc`; block `b` always
    /// draws from stream `base + b`, so this is the full RNG position.
    next_block: u64,
    acc: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointBody {
    config_hash: String,
    scenario: String,
    completed: Vec<SavedPhase>,
    current: Option<InProgress>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    checksum: String,
    body: serde_json::Value,
}

struct CheckpointState {
    path: PathBuf,
    interval: Duration,
    last_save: Instant,
    body: CheckpointBody,
}

impl CheckpointState {
    fn save(&mut self) -> Result<()> {
        save_checkpoint(&self.path, &self.body)?;
        self.last_save = Instant::now();
        Ok(())
    }
}

fn checksum(body: &serde_json::Value) -> String {
    let text = serde_json::to_string(body).expect("json value serializes");
    config::hex(&Sha256::digest(text.as_bytes()))
}

fn save_checkpoint(path: &Path, body: &CheckpointBody) -> Result<()> {
    let body = serde_json::to_value(body)?;
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        checksum: checksum(&body),
        body,
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string(&file)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// `Ok(None)` when there is no file to resume from.
fn load_checkpoint(path: &Path, config_hash: &str) -> Result<Option<CheckpointBody>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("unreadable file: {e}")))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version {} does not match {CHECKPOINT_VERSION}",
            file.version
        )));
    }
    if checksum(&file.body) != file.checksum {
        return Err(Error::Checkpoint("checksum mismatch, file is corrupt".into()));
    }
    let body: CheckpointBody =
        serde_json::from_value(file.body).map_err(|e| Error::Checkpoint(format!("bad body: {e}")))?;
    if body.config_hash != config_hash {
        return Err(Error::Checkpoint("config differs from the one that wrote the checkpoint".into()));
    }
    Ok(Some(body))
}
