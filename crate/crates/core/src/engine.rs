//! Trajectory simulation with online excursion extraction.
//!
//! Inside the cone a step code is two random bits, which is the same as
//! picking the quarter cell of `[0,1)` that holds a uniform's top two bits.
//! Far from the axes the walker consumes whole words of codes at once using
//! popcounts; the result is identical to stepping one code at a time.
//! Axis and origin steps use one full 53-bit uniform each.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{
    classify, transition_distribution, Direction, LatticePoint, ModelParams, RegionClass,
    StepDistribution,
};
use crate::rng::{RngStreamSpec, StreamRng};

/// Default start of every walk.
pub const DEFAULT_START: LatticePoint = LatticePoint::new(1, 1);

/// One step from `p` driven by a uniform `u` in `[0,1)`, partitioned in the
/// order `+e1, -e1, +e2, -e2`.
pub fn step(params: &ModelParams, p: LatticePoint, u: f64) -> LatticePoint {
    p.offset(transition_distribution(params, p).select(u))
}

/// Closed-form axis escape probabilities, memoized for small distances.
#[derive(Clone, Debug)]
pub struct AxisKernel {
    params: ModelParams,
    escape: Vec<f64>,
}

impl AxisKernel {
    const CACHED: usize = 1024;

    pub fn new(params: ModelParams) -> Self {
        let escape = (0..Self::CACHED as u64)
            .map(|i| if i == 0 { 0.25 } else { params.axis_escape_probability(i) })
            .collect();
        Self { params, escape }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    #[inline]
    fn escape(&self, i: u64) -> f64 {
        match self.escape.get(i as usize) {
            Some(&p) => p,
            None => self.params.axis_escape_probability(i),
        }
    }

    /// Same values as [`transition_distribution`] for off-cone points.
    #[inline]
    fn distribution(&self, p: LatticePoint) -> StepDistribution {
        if p.x1 == 0 && p.x2 == 0 {
            return StepDistribution::UNIFORM;
        }
        let coord = if p.x2 == 0 { p.x1 } else { p.x2 };
        let out = self.escape(coord.unsigned_abs());
        let inward = match (p.x2 == 0, coord > 0) {
            (true, true) => Direction::MinusE1,
            (true, false) => Direction::PlusE1,
            (false, true) => Direction::MinusE2,
            (false, false) => Direction::PlusE2,
        };
        let mut probs = [out; 4];
        probs[inward.index()] = 1.0 - 3.0 * out;
        StepDistribution { probs }
    }

    #[inline]
    fn step(&self, p: LatticePoint, u: f64) -> LatticePoint {
        p.offset(self.distribution(p).select(u))
    }
}

#[inline]
fn code_direction(code: u32) -> Direction {
    Direction::ALL[code as usize]
}

const EVEN_BITS: u64 = 0x5555_5555_5555_5555;

/// Net displacement of `count` packed step codes.
#[inline]
fn packed_displacement(word: u64, count: u32) -> (i64, i64) {
    let mask = if count == 32 {
        EVEN_BITS
    } else {
        EVEN_BITS & ((1u64 << (2 * count)) - 1)
    };
    let lo = word & mask;
    let hi = (word >> 1) & mask;
    let n2 = hi.count_ones() as i64;
    let n1 = count as i64 - n2;
    let neg1 = (lo & !hi & mask).count_ones() as i64;
    let neg2 = (lo & hi).count_ones() as i64;
    (n1 - 2 * neg1, n2 - 2 * neg2)
}

/// Advance `k` simple-random-walk steps that cannot reach an axis.
#[inline]
fn free_steps(pos: &mut LatticePoint, mut k: u64, rng: &mut StreamRng) {
    while k > 0 {
        let (word, took) = rng.pairs(k.min(32) as u32);
        let (d1, d2) = packed_displacement(word, took);
        pos.x1 += d1;
        pos.x2 += d2;
        k -= took as u64;
    }
}

#[inline]
fn distance_to_axes(p: LatticePoint) -> u64 {
    p.x1.unsigned_abs().min(p.x2.unsigned_abs())
}

/// One completed excursion: exit into the axes at `eta`, re-entrance into
/// the cone at `rho`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcursionRecord {
    pub index: u64,
    pub eta: u64,
    pub rho: u64,
    pub exit_point: LatticePoint,
    pub entry_point: LatticePoint,
}

/// State of a walk at an observation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkSnapshot {
    pub t: u64,
    pub position: LatticePoint,
    /// Completed entrances so far (`N_t`).
    pub entrances: u64,
    /// Time of the last entrance, 0 when there was none.
    pub rho_last: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkOutcome {
    pub n: u64,
    pub final_position: LatticePoint,
    pub entrances: u64,
    pub rho_last: u64,
    pub exits: u64,
}

/// Callbacks from a running walk. All are optional.
pub trait WalkObserver {
    /// Sorted times at which [`on_mark`](Self::on_mark) fires.
    fn marks(&self) -> &[u64] {
        &[]
    }
    fn on_exit(&mut self, _index: u64, _eta: u64, _at: LatticePoint) {}
    fn on_entrance(&mut self, _rec: &ExcursionRecord) {}
    fn on_mark(&mut self, _snap: &WalkSnapshot) {}
    /// Checked after every entrance; `true` ends the walk early.
    fn done(&self) -> bool {
        false
    }
}

impl WalkObserver for () {}

/// Collects every excursion record.
#[derive(Clone, Debug, Default)]
pub struct RecordAll {
    pub records: Vec<ExcursionRecord>,
}

impl WalkObserver for RecordAll {
    fn on_entrance(&mut self, rec: &ExcursionRecord) {
        self.records.push(*rec);
    }
}

/// The walk with its excursion bookkeeping.
pub struct Walker<'k> {
    kernel: &'k AxisKernel,
    rng: StreamRng,
    pos: LatticePoint,
    t: u64,
    entrances: u64,
    exits: u64,
    rho_last: u64,
    pending_exit: Option<(u64, LatticePoint)>,
}

impl<'k> Walker<'k> {
    /// A walk started at `start`. A start off the cone counts as an exit at
    /// time 0.
    pub fn new(kernel: &'k AxisKernel, start: LatticePoint, rng: StreamRng) -> Self {
        let off = classify(start).off_cone();
        Self {
            kernel,
            rng,
            pos: start,
            t: 0,
            entrances: 0,
            exits: off as u64,
            rho_last: 0,
            pending_exit: off.then_some((0, start)),
        }
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn position(&self) -> LatticePoint {
        self.pos
    }

    pub fn snapshot(&self) -> WalkSnapshot {
        WalkSnapshot {
            t: self.t,
            position: self.pos,
            entrances: self.entrances,
            rho_last: self.rho_last,
        }
    }

    /// Run until time `t_stop` or until the observer reports done.
    /// Returns `false` when stopped by the observer.
    pub fn advance<O: WalkObserver>(&mut self, t_stop: u64, obs: &mut O) -> bool {
        while self.t < t_stop {
            if self.pending_exit.is_none() {
                let d = distance_to_axes(self.pos);
                if d >= 2 {
                    let k = (d - 1).min(t_stop - self.t);
                    free_steps(&mut self.pos, k, &mut self.rng);
                    self.t += k;
                    continue;
                }
                let dir = code_direction(self.rng.pair());
                self.pos = self.pos.offset(dir);
                self.t += 1;
                if classify(self.pos).off_cone() {
                    self.exits += 1;
                    self.pending_exit = Some((self.t, self.pos));
                    obs.on_exit(self.entrances + 1, self.t, self.pos);
                }
            } else {
                let u = self.rng.uniform();
                self.pos = self.kernel.step(self.pos, u);
                self.t += 1;
                if classify(self.pos) == RegionClass::Cone {
                    let (eta, exit_point) = self.pending_exit.take().expect("pending exit");
                    self.entrances += 1;
                    self.rho_last = self.t;
                    let rec = ExcursionRecord {
                        index: self.entrances,
                        eta,
                        rho: self.t,
                        exit_point,
                        entry_point: self.pos,
                    };
                    obs.on_entrance(&rec);
                    if obs.done() {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn outcome(&self, n: u64) -> WalkOutcome {
        WalkOutcome {
            n,
            final_position: self.pos,
            entrances: self.entrances,
            rho_last: self.rho_last,
            exits: self.exits,
        }
    }
}

/// Simulates exactly `n` steps (or fewer if the observer stops it) and
/// reports marks in order.
pub fn run_walk<O: WalkObserver>(
    kernel: &AxisKernel,
    n: u64,
    start: LatticePoint,
    rng: RngStreamSpec,
    obs: &mut O,
) -> WalkOutcome {
    let mut walker = Walker::new(kernel, start, StreamRng::new(rng));
    let marks: Vec<u64> = obs.marks().iter().copied().filter(|&m| m <= n).collect();
    for m in marks {
        if !walker.advance(m, obs) {
            return walker.outcome(walker.t);
        }
        obs.on_mark(&walker.snapshot());
    }
    walker.advance(n, obs);
    walker.outcome(walker.t)
}

/// Step-by-step replay of [`run_walk`] that keeps every position. Debug aid.
pub fn trace_walk(
    kernel: &AxisKernel,
    n: u64,
    start: LatticePoint,
    rng: RngStreamSpec,
) -> Vec<LatticePoint> {
    let mut rng = StreamRng::new(rng);
    let mut path = Vec::with_capacity(n as usize + 1);
    let mut pos = start;
    path.push(pos);
    for _ in 0..n {
        pos = if classify(pos) == RegionClass::Cone {
            pos.offset(code_direction(rng.pair()))
        } else {
            kernel.step(pos, rng.uniform())
        };
        path.push(pos);
    }
    path
}

/// Recompute excursion records from a stored trajectory.
pub fn excursions_from_trajectory(path: &[LatticePoint]) -> Vec<ExcursionRecord> {
    let mut out = Vec::new();
    let mut pending = classify(path[0]).off_cone().then_some((0u64, path[0]));
    for t in 1..path.len() {
        let was = classify(path[t - 1]);
        let now = classify(path[t]);
        if was == RegionClass::Cone && now.off_cone() {
            pending = Some((t as u64, path[t]));
        } else if was.off_cone() && now == RegionClass::Cone {
            let (eta, exit_point) = pending.take().expect("entrance without exit");
            out.push(ExcursionRecord {
                index: out.len() as u64 + 1,
                eta,
                rho: t as u64,
                exit_point,
                entry_point: path[t],
            });
        }
    }
    out
}

/// `N_n = max{i : rho_i <= n}` from a record list.
pub fn entrances_by(records: &[ExcursionRecord], n: u64) -> u64 {
    records.iter().filter(|r| r.rho <= n).count() as u64
}

/// Result of a capped cone-exit sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeExit {
    /// `None` when the walk was still in the cone at the cap.
    pub eta: Option<u64>,
    pub exit_point: Option<LatticePoint>,
    /// Position at each requested probe time, `None` once the walk has left.
    pub probes: Vec<Option<LatticePoint>>,
}

/// Simple random walk from `x` in the cone until it first hits the axes or
/// `cap` steps have elapsed.
pub fn sample_cone_exit(
    x: LatticePoint,
    rng: &mut StreamRng,
    cap: u64,
    probe_times: &[u64],
) -> Result<ConeExit> {
    if classify(x) != RegionClass::Cone {
        return Err(Error::WrongRegion(x, "cone"));
    }
    if cap == 0 {
        return Err(Error::InvalidParameter("cap must be >= 1".into()));
    }
    let mut pos = x;
    let mut t = 0u64;
    let mut probes = vec![None; probe_times.len()];
    let mut next_probe = 0usize;
    let mut order: Vec<usize> = (0..probe_times.len()).collect();
    order.sort_by_key(|&i| probe_times[i]);
    loop {
        while next_probe < order.len() && probe_times[order[next_probe]] == t {
            probes[order[next_probe]] = Some(pos);
            next_probe += 1;
        }
        if t >= cap {
            return Ok(ConeExit {
                eta: None,
                exit_point: None,
                probes,
            });
        }
        let stop = order
            .get(next_probe)
            .map(|&i| probe_times[i].min(cap))
            .unwrap_or(cap);
        let d = distance_to_axes(pos);
        if d >= 2 {
            let k = (d - 1).min(stop - t);
            free_steps(&mut pos, k, rng);
            t += k;
            continue;
        }
        pos = pos.offset(code_direction(rng.pair()));
        t += 1;
        if classify(pos).off_cone() {
            while next_probe < order.len() && probe_times[order[next_probe]] == t {
                next_probe += 1;
            }
            return Ok(ConeExit {
                eta: Some(t),
                exit_point: Some(pos),
                probes,
            });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisExit {
    pub rho: Option<u64>,
    pub entry_point: Option<LatticePoint>,
}

/// Axis dynamics from `z` until the first step into the cone, or `cap`.
pub fn sample_axis_absorption(
    kernel: &AxisKernel,
    z: LatticePoint,
    rng: &mut StreamRng,
    cap: u64,
) -> Result<AxisExit> {
    if classify(z) == RegionClass::Cone {
        return Err(Error::WrongRegion(z, "axes"));
    }
    if cap == 0 {
        return Err(Error::InvalidParameter("cap must be >= 1".into()));
    }
    let mut pos = z;
    for t in 1..=cap {
        pos = kernel.step(pos, rng.uniform());
        if classify(pos) == RegionClass::Cone {
            return Ok(AxisExit {
                rho: Some(t),
                entry_point: Some(pos),
            });
        }
    }
    Ok(AxisExit {
        rho: None,
        entry_point: None,
    })
}

// ---------------------------------------------------------------------------
// sweeps

/// Anything that can be folded after a sweep.
pub trait Mergeable: Send {
    fn merge_from(&mut self, other: &Self) -> Result<()>;
}

impl Mergeable for crate::stats::AccumulatorSet {
    fn merge_from(&mut self, other: &Self) -> Result<()> {
        self.merge(other)
    }
}

/// Layout of a sweep: `items` work items split into blocks of
/// `items_per_block`, block `b` drawing from stream `base.stream_id + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub base: RngStreamSpec,
    pub items: u64,
    pub items_per_block: u64,
}

impl SweepPlan {
    pub fn new(base: RngStreamSpec, items: u64, items_per_block: u64) -> Self {
        assert!(items_per_block >= 1);
        Self {
            base,
            items,
            items_per_block,
        }
    }

    pub fn blocks(&self) -> u64 {
        self.items.div_ceil(self.items_per_block)
    }

    pub fn block_items(&self, b: u64) -> Range<u64> {
        let lo = b * self.items_per_block;
        lo..(lo + self.items_per_block).min(self.items)
    }
}

/// Blocks handed to the thread pool at once; also the checkpoint grain.
pub const SWEEP_CHUNK: u64 = 64;

/// Hook between chunks of a sweep.
pub trait SweepControl<A> {
    /// Called with the next unprocessed block and the fold so far.
    /// Returning `false` interrupts the sweep.
    fn after_chunk(&mut self, next_block: u64, acc: &A) -> Result<bool>;
}

pub struct NoControl;

impl<A> SweepControl<A> for NoControl {
    fn after_chunk(&mut self, _next_block: u64, _acc: &A) -> Result<bool> {
        Ok(true)
    }
}

/// Outcome of a possibly interrupted sweep.
pub struct SweepState<A> {
    pub acc: A,
    pub next_block: u64,
    pub complete: bool,
}

/// Fill one accumulator per block in parallel, then fold blocks in index
/// order. The fold order never depends on scheduling, so the result is the
/// same for any pool size and across interrupt/resume.
pub fn sweep_blocks<A, I, F, C>(
    plan: &SweepPlan,
    mut state: SweepState<A>,
    init: I,
    fill: F,
    control: &mut C,
) -> Result<SweepState<A>>
where
    A: Mergeable,
    I: Fn() -> A + Sync,
    F: Fn(&mut StreamRng, Range<u64>, &mut A) + Sync,
    C: SweepControl<A>,
{
    let total = plan.blocks();
    while state.next_block < total {
        let lo = state.next_block;
        let hi = (lo + SWEEP_CHUNK).min(total);
        let parts: Vec<A> = (lo..hi)
            .into_par_iter()
            .map(|b| {
                let mut acc = init();
                let mut rng = StreamRng::new(plan.base.nth(b));
                fill(&mut rng, plan.block_items(b), &mut acc);
                acc
            })
            .collect();
        for p in &parts {
            state.acc.merge_from(p)?;
        }
        state.next_block = hi;
        if !control.after_chunk(hi, &state.acc)? {
            state.complete = state.next_block >= total;
            return Ok(state);
        }
    }
    state.complete = true;
    Ok(state)
}

/// Convenience wrapper: a whole sweep from scratch.
pub fn sweep<A, I, F>(plan: &SweepPlan, init: I, fill: F) -> Result<A>
where
    A: Mergeable,
    I: Fn() -> A + Sync,
    F: Fn(&mut StreamRng, Range<u64>, &mut A) + Sync,
{
    let state = SweepState {
        acc: init(),
        next_block: 0,
        complete: false,
    };
    Ok(sweep_blocks(plan, state, &init, fill, &mut NoControl)?.acc)
}

/// What a replica sweep records from each walk.
pub trait WalkProbe: Sync {
    type Observer: WalkObserver;
    fn accumulators(&self) -> crate::stats::AccumulatorSet;
    fn observer(&self) -> Self::Observer;
    fn record(
        &self,
        outcome: &WalkOutcome,
        observer: Self::Observer,
        acc: &mut crate::stats::AccumulatorSet,
    );
}

/// `replicas` independent walks of `n` steps from `start`, replica `r`
/// drawing from stream `base.stream_id + r`.
pub fn replica_sweep<P: WalkProbe>(
    kernel: &AxisKernel,
    n: u64,
    start: LatticePoint,
    replicas: u64,
    base: RngStreamSpec,
    probe: &P,
) -> Result<crate::stats::AccumulatorSet> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be >= 1".into()));
    }
    let plan = SweepPlan::new(base, replicas, 1);
    sweep(&plan, || probe.accumulators(), |_, items, acc| {
        for r in items {
            let mut obs = probe.observer();
            let out = run_walk(kernel, n, start, base.nth(r), &mut obs);
            probe.record(&out, obs, acc);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(alpha: f64) -> AxisKernel {
        AxisKernel::new(ModelParams::new(alpha).unwrap())
    }

    #[test]
    fn step_examples() {
        let p4 = ModelParams::new(4.0).unwrap();
        // cells at (2,0): +e1 [0,1/64), -e1 [1/64,62/64), +e2 [62/64,63/64), -e2 [63/64,1)
        assert_eq!(step(&p4, LatticePoint::new(2, 0), 0.99), LatticePoint::new(2, -1));
        assert_eq!(step(&p4, LatticePoint::new(2, 0), 0.5), LatticePoint::new(1, 0));
        assert_eq!(step(&p4, LatticePoint::new(5, 5), 0.10), LatticePoint::new(6, 5));
        assert_eq!(step(&p4, LatticePoint::ORIGIN, 0.30), LatticePoint::new(-1, 0));
        assert_eq!(step(&p4, LatticePoint::new(2, 0), 0.01), LatticePoint::new(3, 0));
        assert_eq!(step(&p4, LatticePoint::new(2, 0), 0.97), LatticePoint::new(2, 1));
        assert_eq!(step(&p4, LatticePoint::new(2, 0), 0.999), LatticePoint::new(2, -1));
    }

    #[test]
    fn kernel_cache_matches_closed_form() {
        let k = kernel(4.3);
        for p in [
            LatticePoint::new(3, 0),
            LatticePoint::new(-700, 0),
            LatticePoint::new(0, 5000),
            LatticePoint::new(0, -2),
            LatticePoint::ORIGIN,
        ] {
            assert_eq!(k.distribution(p), transition_distribution(k.params(), p));
        }
    }

    #[test]
    fn packed_displacement_matches_codes() {
        let mut rng = StreamRng::new(RngStreamSpec::new(3, 9));
        for _ in 0..200 {
            let word = rng.next_u64();
            for count in [1u32, 2, 7, 31, 32] {
                let mut d = (0i64, 0i64);
                for k in 0..count {
                    let (a, b) = code_direction(((word >> (2 * k)) & 3) as u32).delta();
                    d.0 += a;
                    d.1 += b;
                }
                let masked = if count == 32 { word } else { word & ((1u64 << (2 * count)) - 1) };
                assert_eq!(packed_displacement(masked, count), d);
            }
        }
    }

    #[test]
    fn batched_walk_equals_trace() {
        let k = kernel(4.0);
        for s in 0..20 {
            let spec = RngStreamSpec::new(42, s);
            let n = 5_000;
            let path = trace_walk(&k, n, DEFAULT_START, spec);
            let mut rec = RecordAll::default();
            let out = run_walk(&k, n, DEFAULT_START, spec, &mut rec);
            assert_eq!(out.final_position, *path.last().unwrap());
            let recomputed = excursions_from_trajectory(&path);
            assert_eq!(rec.records, recomputed);
            assert_eq!(out.entrances, entrances_by(&recomputed, n));
        }
    }

    #[test]
    fn one_step_walk() {
        let k = kernel(4.0);
        let mut on_axis = 0;
        for s in 0..400 {
            let out = run_walk(&k, 1, DEFAULT_START, RngStreamSpec::new(1, s), &mut ());
            assert_eq!(out.entrances, 0);
            on_axis += classify(out.final_position).off_cone() as u32;
        }
        // two of the four neighbours of (1,1) are on the axes
        assert!((150..250).contains(&on_axis), "{on_axis}");
    }

    #[test]
    fn replay_is_bit_identical() {
        let k = kernel(4.0);
        let spec = RngStreamSpec::new(5, 77);
        let a = run_walk(&k, 100_000, DEFAULT_START, spec, &mut ());
        let b = run_walk(&k, 100_000, DEFAULT_START, spec, &mut ());
        assert_eq!(a, b);
    }

    #[test]
    fn cone_exit_rejects_axis_start() {
        let mut rng = StreamRng::new(RngStreamSpec::new(0, 0));
        assert!(sample_cone_exit(LatticePoint::new(3, 0), &mut rng, 10, &[]).is_err());
        assert!(sample_cone_exit(LatticePoint::new(3, 1), &mut rng, 0, &[]).is_err());
        let k = kernel(4.0);
        assert!(sample_axis_absorption(&k, LatticePoint::new(3, 1), &mut rng, 10).is_err());
    }

    #[test]
    fn cone_exit_probes_follow_the_walk() {
        let mut a = StreamRng::new(RngStreamSpec::new(8, 1));
        let mut b = StreamRng::new(RngStreamSpec::new(8, 1));
        let x = LatticePoint::new(30, 40);
        let with = sample_cone_exit(x, &mut a, 2_000, &[10, 1_000, 0]).unwrap();
        let without = sample_cone_exit(x, &mut b, 2_000, &[]).unwrap();
        assert_eq!(with.eta, without.eta);
        assert_eq!(with.probes[2], Some(x));
        let p10 = with.probes[0].unwrap();
        assert!(((p10.x1 - 30).abs() + (p10.x2 - 40).abs()) <= 10);
    }

    #[test]
    fn axis_absorption_lands_on_entrance_boundary() {
        let k = kernel(4.0);
        let mut rng = StreamRng::new(RngStreamSpec::new(2, 2));
        for _ in 0..1000 {
            let r = sample_axis_absorption(&k, LatticePoint::new(7, 0), &mut rng, 10_000).unwrap();
            assert!(crate::model::is_entrance_boundary(r.entry_point.unwrap()));
            assert!(r.rho.unwrap() >= 1);
        }
    }
}
