//! The random sweeps behind the scenarios.

use crate::engine::{sample_axis_absorption, sample_cone_exit, AxisKernel, ConeExit, ExcursionRecord, SweepPlan, WalkObserver, Walker};
use crate::error::Result;
use crate::model::LatticePoint;
use crate::rng::{RngStreamSpec, StreamRng};
use crate::stats::{Accumulator, AccumulatorSet, MomentAccumulator, OccupationCounter, SampleLog};

use super::Ctx;

/// Stream families; phase `k` starts at stream `k << 40`.
pub(crate) mod stream {
    pub const CONE: u64 = 1;
    pub const AXIS: u64 = 2;
    pub const LADDER: u64 = 3;
    pub const ENTRANCES: u64 = 4;
    pub const EXCURSIONS: u64 = 5;
    pub const CHECK_CONE: u64 = 6;
    pub const CHECK_AXIS: u64 = 7;
    pub const CHECK_WALK: u64 = 8;
    pub const DUAL_ROUTE: u64 = 9;
}

pub(crate) fn base(seed: u64, family: u64) -> RngStreamSpec {
    RngStreamSpec::new(seed, family << 40)
}

/// Items per block for cheap samplers.
pub(crate) const SAMPLE_BLOCK: u64 = 1 << 14;

/// Capped cone exits from `start`; `record` sees every sample.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cone_exits<I, R>(
    ctx: &mut Ctx,
    key: &str,
    family: u64,
    start: LatticePoint,
    replicas: u64,
    cap: u64,
    probes: &[u64],
    init: I,
    record: R,
) -> Result<AccumulatorSet>
where
    I: Fn() -> AccumulatorSet + Sync,
    R: Fn(&ConeExit, &mut AccumulatorSet) + Sync,
{
    let plan = SweepPlan::new(base(ctx.cfg.seed, family), replicas, SAMPLE_BLOCK);
    let key = format!("cone-exits;{key};start={start};cap={cap};probes={probes:?}");
    ctx.phase(&key, plan, init, |rng, items, acc| {
        for _ in items {
            let e = sample_cone_exit(start, rng, cap, probes).expect("start checked by config validation");
            record(&e, acc);
        }
    })
}

/// Capped axis absorptions; `start_of(i)` gives the start of sample `i`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn axis_exits<S, I, R>(
    ctx: &mut Ctx,
    key: &str,
    family: u64,
    replicas: u64,
    cap: u64,
    start_of: S,
    init: I,
    record: R,
) -> Result<AccumulatorSet>
where
    S: Fn(u64) -> LatticePoint + Sync,
    I: Fn() -> AccumulatorSet + Sync,
    R: Fn(LatticePoint, Option<u64>, Option<LatticePoint>, &mut AccumulatorSet) + Sync,
{
    let kernel = AxisKernel::new(ctx.params);
    let plan = SweepPlan::new(base(ctx.cfg.seed, family), replicas, SAMPLE_BLOCK);
    let key = format!("axis-exits;{key};alpha={};cap={cap}", ctx.params.alpha());
    ctx.phase(&key, plan, init, |rng, items, acc| {
        for i in items {
            let z = start_of(i);
            let e = sample_axis_absorption(&kernel, z, rng, cap).expect("axis start");
            record(z, e.rho, e.entry_point, acc);
        }
    })
}

/// Rows `[n, N_n, rho_{N_n}, x1, x2]`, one per replica and mark.
pub(crate) fn time_ladder(ctx: &mut Ctx, start: LatticePoint, replicas: u64, marks: &[u64]) -> Result<SampleLog> {
    let kernel = AxisKernel::new(ctx.params);
    let plan = SweepPlan::new(base(ctx.cfg.seed, stream::LADDER), replicas, 1);
    let key = format!("time-ladder;alpha={};start={start};marks={marks:?}", ctx.params.alpha());
    let acc = ctx.phase(
        &key,
        plan,
        || AccumulatorSet::new().with("rows", Accumulator::Samples(SampleLog::new(5))),
        |_, items, acc| {
            let log = acc.samples_mut("rows").expect("rows");
            for r in items {
                let mut w = Walker::new(&kernel, start, StreamRng::new(plan.base.nth(r)));
                for &n in marks {
                    w.advance(n, &mut ());
                    let s = w.snapshot();
                    log.observe(vec![
                        n as f64,
                        s.entrances as f64,
                        s.rho_last as f64,
                        s.position.x1 as f64,
                        s.position.x2 as f64,
                    ]);
                }
            }
        },
    )?;
    Ok(acc.samples("rows").expect("rows").clone())
}

struct EntranceMarks<'m> {
    marks: &'m [u64],
    next: usize,
    max_entry: u64,
    max_exit: u64,
    rows: Vec<Vec<f64>>,
}

impl WalkObserver for EntranceMarks<'_> {
    fn on_entrance(&mut self, rec: &ExcursionRecord) {
        self.max_entry = self.max_entry.max(rec.entry_point.sup_norm());
        self.max_exit = self.max_exit.max(rec.exit_point.sup_norm());
        if self.next < self.marks.len() && rec.index == self.marks[self.next] {
            self.rows.push(vec![
                rec.index as f64,
                rec.rho as f64,
                self.max_entry as f64,
                self.max_exit as f64,
            ]);
            self.next += 1;
        }
    }

    fn done(&self) -> bool {
        self.next >= self.marks.len()
    }
}

/// Rows `[m, rho_m, max_{i<=m} X̄_{rho_i}, max_{i<=m} X̄_{eta_i}]`, one per
/// replica and entrance mark.
pub(crate) fn entrance_ladder(ctx: &mut Ctx, start: LatticePoint, replicas: u64, marks: &[u64]) -> Result<SampleLog> {
    let kernel = AxisKernel::new(ctx.params);
    let plan = SweepPlan::new(base(ctx.cfg.seed, stream::ENTRANCES), replicas, 1);
    let key = format!("entrance-ladder;alpha={};start={start};marks={marks:?}", ctx.params.alpha());
    let acc = ctx.phase(
        &key,
        plan,
        || AccumulatorSet::new().with("rows", Accumulator::Samples(SampleLog::new(4))),
        |_, items, acc| {
            let log = acc.samples_mut("rows").expect("rows");
            for r in items {
                let mut w = Walker::new(&kernel, start, StreamRng::new(plan.base.nth(r)));
                let mut obs = EntranceMarks {
                    marks,
                    next: 0,
                    max_entry: 0,
                    max_exit: 0,
                    rows: Vec::new(),
                };
                w.advance(u64::MAX, &mut obs);
                for row in obs.rows {
                    log.observe(row);
                }
            }
        },
    )?;
    Ok(acc.samples("rows").expect("rows").clone())
}

struct ExcursionStats {
    target: u64,
    seen: u64,
    entry_norm: MomentAccumulator,
    sojourn: MomentAccumulator,
    entries: OccupationCounter,
}

impl WalkObserver for ExcursionStats {
    fn on_entrance(&mut self, rec: &ExcursionRecord) {
        self.seen += 1;
        self.entry_norm.observe(rec.entry_point.sup_norm() as f64);
        self.sojourn.observe((rec.rho - rec.eta) as f64);
        self.entries.observe(rec.entry_point);
    }

    fn done(&self) -> bool {
        self.seen >= self.target
    }
}

/// `per_replica` consecutive excursions in each replica: moments of X̄ at
/// entrance and of the axis sojourn, and the entrance occupation.
pub(crate) fn excursions(ctx: &mut Ctx, start: LatticePoint, replicas: u64, per_replica: u64) -> Result<AccumulatorSet> {
    let kernel = AxisKernel::new(ctx.params);
    let plan = SweepPlan::new(base(ctx.cfg.seed, stream::EXCURSIONS), replicas, 1);
    let key = format!("excursions;alpha={};start={start};per_replica={per_replica}", ctx.params.alpha());
    ctx.phase(
        &key,
        plan,
        || {
            AccumulatorSet::new()
                .with("entry_norm", Accumulator::Moments(MomentAccumulator::default()))
                .with("sojourn", Accumulator::Moments(MomentAccumulator::default()))
                .with("entries", Accumulator::Occupation(OccupationCounter::default()))
        },
        |_, items, acc| {
            for r in items {
                let mut w = Walker::new(&kernel, start, StreamRng::new(plan.base.nth(r)));
                let mut obs = ExcursionStats {
                    target: per_replica,
                    seen: 0,
                    entry_norm: MomentAccumulator::default(),
                    sojourn: MomentAccumulator::default(),
                    entries: OccupationCounter::default(),
                };
                w.advance(u64::MAX, &mut obs);
                acc.moments_mut("entry_norm").expect("entry_norm").merge(&obs.entry_norm);
                acc.moments_mut("sojourn").expect("sojourn").merge(&obs.sojourn);
                acc.occupation_mut("entries").expect("entries").merge(&obs.entries);
            }
        },
    )
}
