//! The fifteen catalogue entries.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::config::Scenario;
use super::phases::{self, stream};
use super::report::{distance_interval, within_rel, LedgerEntry, RowSink, Verdict};
use super::Ctx;
use crate::engine::{AxisKernel, SweepPlan, Walker};
use crate::error::{Error, Result};
use crate::limits::{
    bn_squared, dual_route_check, eta_tail_constant, exit_local_constant, invert_mu, local_exit_law, log_grid,
    meander_tail, near_exit_constant, s1, theorem1_tail, theorem2_tail, InvertedLaw, StableLawSpec,
};
use crate::model::{classify, LatticePoint, RegionClass};
use crate::oracle::{
    axis_absorption_solve, axis_survival, boundary_states, least_squares_slope, quadrant_exit_dp, walk_law_dp_from,
    LimitConstants,
};
use crate::rng::StreamRng;
use crate::stats::{
    discrepancy, trend_ok, wilson_interval, Accumulator, AccumulatorSet, CellCounter,
    ConfidenceInterval, IntervalMethod, MomentAccumulator, OccupationCounter, SampleLog, TailCounter,
};

pub(crate) struct Out {
    pub sink: RowSink,
    pub ledgers: Vec<LedgerEntry>,
}

impl Out {
    pub fn new(scenario: &str) -> Self {
        Self {
            sink: RowSink::new(scenario),
            ledgers: Vec::new(),
        }
    }

    fn ledger(&mut self, label: &str, ledger: crate::oracle::MassLedger) {
        self.ledgers.push(LedgerEntry {
            label: label.to_string(),
            ledger,
        });
    }

    /// A trend row over `points` (distances to the target, or frequencies
    /// expected to shrink), reporting the last point.
    fn trend(&mut self, metric: &str, points: &[ConfidenceInterval], tag: &str) {
        let ok = trend_ok(points, true);
        let last = points.last().copied().unwrap_or(ConfidenceInterval::point(f64::NAN));
        self.sink.push(metric, None, &last, Some(0.0), Verdict::trend(ok), tag);
    }
}

pub(crate) fn run(kind: Scenario, ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    match kind {
        Scenario::EtaTail => eta_tail(ctx, out),
        Scenario::EtaTruncMean => eta_truncmean(ctx, out),
        Scenario::ExitPosition => exit_position(ctx, out),
        Scenario::ExitJoint => exit_joint(ctx, out),
        Scenario::Meander => meander(ctx, out),
        Scenario::AxisRho => axis_rho(ctx, out),
        Scenario::EntryLaw => entry_law(ctx, out),
        Scenario::LlnNn => lln(ctx, out),
        Scenario::RhoSecondOrder => rho_second_order(ctx, out),
        Scenario::Theorem2 => theorem2(ctx, out),
        Scenario::Theorem1 => theorem1(ctx, out),
        Scenario::AxisNegligible => axis_negligible(ctx, out),
        Scenario::ScaleBounds => scale_bounds(ctx, out),
        Scenario::OracleCrosscheck => crosscheck(ctx, out),
        Scenario::Constants => constants(ctx, out),
    }
}

struct Common {
    start: LatticePoint,
    xbar: f64,
    replicas: u64,
    horizons: Vec<u64>,
    cap: u64,
    level: f64,
}

fn common(ctx: &Ctx) -> Common {
    let c = ctx.cfg;
    let start = c.start.expect("materialized");
    Common {
        start,
        xbar: start.sup_norm() as f64,
        replicas: c.replicas.expect("materialized"),
        horizons: c.horizons.clone().expect("materialized"),
        cap: c.cap.unwrap_or(1),
        level: c.thresholds.level,
    }
}

fn eta_value(eta: Option<u64>) -> f64 {
    eta.map_or(f64::INFINITY, |t| t as f64)
}

fn moment_interval(m: &MomentAccumulator, level: f64) -> Result<ConfidenceInterval> {
    if m.count() < 2 {
        return Ok(ConfidenceInterval::point(m.mean()));
    }
    m.interval(level)
}

fn mean_interval(values: impl IntoIterator<Item = f64>, level: f64) -> Result<ConfidenceInterval> {
    let mut m = MomentAccumulator::default();
    values.into_iter().for_each(|v| m.observe(v));
    if m.count() == 0 {
        return Err(Error::Empty("no samples at this horizon"));
    }
    moment_interval(&m, level)
}

fn rows_at(log: &SampleLog, mark: u64) -> impl Iterator<Item = &Vec<f64>> {
    log.rows().iter().filter(move |r| r[0] == mark as f64)
}

/// Simultaneous band half-width for an empirical law from `n` samples.
fn dkw_half_width(n: u64, level: f64) -> f64 {
    ((2.0 / (1.0 - level)).ln() / (2.0 * n as f64)).sqrt()
}

fn band(d: f64, half: f64, level: f64) -> ConfidenceInterval {
    ConfidenceInterval {
        estimate: d,
        lo: (d - half).max(0.0),
        hi: d + half,
        level,
        method: IntervalMethod::Exact,
    }
}

// ---------------------------------------------------------------------------
// cone exits

fn eta_tail(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let mut thresholds = Vec::new();
    for &k in &c.horizons {
        thresholds.extend([k as f64, (k / 2) as f64 - 1.0, k as f64 - 1.0]);
    }
    let acc = phases::cone_exits(
        ctx,
        "eta-tail",
        stream::CONE,
        c.start,
        c.replicas,
        c.cap,
        &[],
        || AccumulatorSet::new().with("eta", Accumulator::Tail(TailCounter::new(thresholds.clone()))),
        |e, acc| acc.tail_mut("eta").expect("eta").observe(eta_value(e.eta)),
    )?;
    let tail = acc.tail("eta").expect("eta");
    let n = tail.total();
    let target = eta_tail_constant();
    let rel = ctx.cfg.thresholds.eta_tail_rel;
    for &k in &c.horizons {
        let ci = wilson_interval(tail.count(k as f64)?, n, c.level).scaled(k as f64 / c.xbar);
        let v = Verdict::hard(within_rel(ci.estimate, target, rel));
        out.sink.push("eta-tail-scaled", Some(k), &ci, Some(target), v, "exit-time tail k P(eta > k)");
        // pmf on [k/2, k), normalized by the sum of 1/j^2 over the bin
        let (lo, hi) = (k / 2, k);
        let hits = tail.count(lo as f64 - 1.0)? - tail.count(hi as f64 - 1.0)?;
        let inv_sq: f64 = (lo.max(1)..hi).map(|j| 1.0 / (j as f64 * j as f64)).sum();
        let ci = wilson_interval(hits, n, c.level).scaled(1.0 / (inv_sq * c.xbar));
        let v = Verdict::hard(within_rel(ci.estimate, target, rel));
        out.sink.push("eta-pmf-binned", Some(k), &ci, Some(target), v, "exit-time law k^2 P(eta = k)");
    }
    Ok(())
}

fn eta_truncmean(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let hs = c.horizons.clone();
    let names: Vec<String> = hs.iter().map(|m| format!("trunc-{m}")).collect();
    let acc = phases::cone_exits(
        ctx,
        "eta-truncmean",
        stream::CONE,
        c.start,
        c.replicas,
        c.cap,
        &[],
        || {
            let mut a = AccumulatorSet::new();
            for name in &names {
                a.insert(name.clone(), Accumulator::Moments(MomentAccumulator::default()));
            }
            a
        },
        |e, acc| {
            for (m, name) in hs.iter().zip(&names) {
                let v = match e.eta {
                    Some(t) if t <= *m => t as f64,
                    _ => 0.0,
                };
                acc.moments_mut(name).expect("trunc").observe(v);
            }
        },
    )?;
    let target = eta_tail_constant();
    let mut dist = Vec::new();
    for (i, &m) in c.horizons.iter().enumerate() {
        let mom = acc.moments(&format!("trunc-{m}")).expect("trunc");
        let ci = moment_interval(mom, c.level)?.scaled(1.0 / (c.xbar * (m as f64).ln()));
        let v = if i + 1 == c.horizons.len() {
            Verdict::hard(within_rel(ci.estimate, target, ctx.cfg.thresholds.truncmean_rel))
        } else {
            Verdict::Info
        };
        out.sink
            .push("eta-truncmean-scaled", Some(m), &ci, Some(target), v, "truncated exit-time mean / log m");
        dist.push(distance_interval(&ci, target));
    }
    out.trend("eta-truncmean-trend", &dist, "truncated exit-time mean / log m");
    Ok(())
}

fn exit_position(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let probes = ctx.cfg.probes.clone();
    let y = LatticePoint::new(probes.target_y as i64, 0);
    let levels: Vec<f64> = probes.tail_levels.iter().map(|&l| l as f64).collect();
    let acc = phases::cone_exits(
        ctx,
        &format!("exit-position;y={y};levels={levels:?}"),
        stream::CONE,
        c.start,
        c.replicas,
        c.cap,
        &[],
        || {
            AccumulatorSet::new()
                .with("hits", Accumulator::Cells(CellCounter::default()))
                .with("distance", Accumulator::Tail(TailCounter::new(levels.clone())))
        },
        |e, acc| {
            let cells = acc.cells_mut("hits").expect("hits");
            if e.exit_point == Some(y) {
                cells.observe("target");
            } else {
                cells.trial();
            }
            let d = e.exit_point.map_or(f64::INFINITY, |p| p.sup_norm() as f64);
            acc.tail_mut("distance").expect("distance").observe(d);
        },
    )?;
    let cells = acc.cells("hits").expect("hits");
    let n = cells.total();
    let ybar = probes.target_y as f64;
    let target = exit_local_constant();
    let ci = wilson_interval(cells.count("target"), n, c.level).scaled(ybar.powi(3) / c.xbar);
    let v = Verdict::hard(within_rel(ci.estimate, target, ctx.cfg.thresholds.exit_local_rel));
    out.sink
        .push("exit-local-scaled", Some(probes.target_y), &ci, Some(target), v, "exit-position local limit");
    let tail = acc.tail("distance").expect("distance");
    let mut pts = Vec::new();
    for &l in &probes.tail_levels {
        let k = tail.count(l as f64)?;
        let ci = wilson_interval(k, n, c.level);
        if ci.estimate > 0.0 {
            pts.push(((l as f64).ln(), ci.estimate.ln()));
        }
        let ci = ci.scaled((l as f64).powi(2) / c.xbar);
        out.sink
            .push("exit-distance-tail-scaled", Some(l), &ci, None, Verdict::Info, "exit-distance tail bound");
    }
    let slope = if pts.len() >= 2 { least_squares_slope(&pts) } else { f64::NAN };
    let ok = slope <= -2.0 + ctx.cfg.thresholds.bound_slope_slack;
    out.sink
        .value("exit-distance-tail-slope", None, slope, Some(-2.0), Verdict::hard(ok), "exit-distance tail bound");
    Ok(())
}

fn exit_joint(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let probes = ctx.cfg.probes.clone();
    let ms = c.horizons.clone();
    let split = probes.split_ybar;
    let joint_points = probes.joint_points.clone();
    let joint_bins = probes.joint_bins.clone();
    let acc = phases::cone_exits(
        ctx,
        &format!("exit-joint;points={joint_points:?};bins={joint_bins:?};m={ms:?};split={split}"),
        stream::CONE,
        c.start,
        c.replicas,
        c.cap,
        &[],
        || AccumulatorSet::new().with("cells", Accumulator::Cells(CellCounter::default())),
        |e, acc| {
            let cells = acc.cells_mut("cells").expect("cells");
            cells.trial();
            if let (Some(t), Some(p)) = (e.eta, e.exit_point) {
                for &yb in &joint_points {
                    if p == LatticePoint::new(yb as i64, 0) {
                        for b in &joint_bins {
                            if t >= b[0] && t < b[1] {
                                cells.mark(format!("joint|{}|{yb}", b[0]));
                            }
                        }
                    }
                }
            }
            let far = e.exit_point.is_none_or(|p| p.sup_norm() >= split);
            for &m in &ms {
                if e.eta.is_none_or(|t| t > m) {
                    cells.mark(format!("{}|{m}", if far { "far" } else { "near" }));
                }
            }
        },
    )?;
    let cells = acc.cells("cells").expect("cells");
    let n = cells.total();
    let rel = ctx.cfg.thresholds.exit_joint_rel;
    for &yb in &probes.joint_points {
        for b in &probes.joint_bins {
            let width = (b[1] - b[0]) as f64;
            let target = (b[0]..b[1]).map(|k| local_exit_law(k as f64, c.xbar, yb as f64)).sum::<f64>() / width;
            let ci = wilson_interval(cells.count(&format!("joint|{}|{yb}", b[0])), n, c.level).scaled(1.0 / width);
            let v = Verdict::hard(within_rel(ci.estimate, target, rel));
            out.sink.push(
                &format!("exit-joint-local-y{yb}"),
                Some(b[0]),
                &ci,
                Some(target),
                v,
                "joint local law of exit time and position",
            );
        }
    }
    let sb = split as f64;
    for &m in &c.horizons {
        let mf = m as f64;
        let ci = wilson_interval(cells.count(&format!("far|{m}")), n, c.level).scaled(mf / c.xbar);
        let t = eta_tail_constant();
        let v = Verdict::hard(within_rel(ci.estimate, t, rel));
        out.sink.push("exit-far-tail-scaled", Some(m), &ci, Some(t), v, "exit tail split at a small level");
        let ci = wilson_interval(cells.count(&format!("near|{m}")), n, c.level).scaled(mf * mf / (c.xbar * sb * sb));
        let t = near_exit_constant();
        let v = Verdict::hard(within_rel(ci.estimate, t, rel));
        out.sink.push("exit-near-tail-scaled", Some(m), &ci, Some(t), v, "exit tail split at a small level");
    }
    Ok(())
}

fn meander(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let p = ctx.cfg.probes.clone();
    let m = *c.horizons.last().expect("horizon");
    let t = c.cap;
    let root = (m as f64).sqrt();
    let (l1, l2) = (p.meander_a[0] * root, p.meander_a[1] * root);
    let acc = phases::cone_exits(
        ctx,
        &format!("meander;m={m};levels=({l1},{l2})"),
        stream::CONE,
        c.start,
        c.replicas,
        t,
        &[t],
        || AccumulatorSet::new().with("cells", Accumulator::Cells(CellCounter::default())),
        |e, acc| {
            let cells = acc.cells_mut("cells").expect("cells");
            cells.trial();
            if e.eta.is_none() {
                cells.mark("survived");
                if let Some(Some(q)) = e.probes.first() {
                    if q.x1 as f64 >= l1 && q.x2 as f64 >= l2 {
                        cells.mark("above");
                    }
                }
            }
        },
    )?;
    let cells = acc.cells("cells").expect("cells");
    let n = cells.total();
    let mf = m as f64;
    let target = meander_tail(p.meander_s, p.meander_a[0], p.meander_a[1])?;
    let ci = wilson_interval(cells.count("above"), n, c.level).scaled(PI * mf / (16.0 * c.xbar));
    let v = Verdict::hard(within_rel(ci.estimate, target, ctx.cfg.thresholds.meander_rel));
    out.sink.push("meander-ratio", Some(m), &ci, Some(target), v, "conditioned position tail at a fixed time");
    let ci = wilson_interval(cells.count("survived"), n, c.level).scaled(mf / c.xbar);
    out.sink
        .push("meander-survival-scaled", Some(m), &ci, None, Verdict::Info, "conditioned position tail at a fixed time");
    Ok(())
}

// ---------------------------------------------------------------------------
// axis

fn axis_rho(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let cfg = ctx.cfg;
    let p = cfg.probes.clone();
    let th = cfg.thresholds.clone();
    let len = cfg.truncation.axis_len;
    let axis = axis_absorption_solve(&ctx.params, len)?;
    let mut dist = Vec::new();
    for &zb in &p.axis_levels {
        if zb > len {
            return Err(Error::Config(format!("axis level {zb} exceeds the axis truncation {len}")));
        }
        let z = LatticePoint::new(zb as i64, 0);
        let ratio = axis.expected_rho(z) / zb as f64;
        let v = if zb == p.axis_gate_level {
            out.ledger(&format!("axis solve from {z}"), axis.ledger(z));
            Verdict::hard(within_rel(ratio, 1.0, th.axis_mean_rel))
        } else {
            Verdict::Info
        };
        out.sink.value("axis-mean-ratio", Some(zb), ratio, Some(1.0), v, "mean axis sojourn / distance");
        dist.push(ConfidenceInterval::point((ratio - 1.0).abs()));
    }
    out.trend("axis-mean-ratio-trend", &dist, "mean axis sojourn / distance");

    let z = c.start;
    let marks: Vec<f64> = c.horizons.iter().map(|&m| m as f64).collect();
    let acc = phases::axis_exits(
        ctx,
        &format!("axis-rho;start={z};marks={marks:?}"),
        stream::AXIS,
        c.replicas,
        c.cap,
        |_| z,
        || {
            AccumulatorSet::new()
                .with("rho", Accumulator::Moments(MomentAccumulator::default()))
                .with("tail", Accumulator::Tail(TailCounter::new(marks.clone())))
                .with("entries", Accumulator::Occupation(OccupationCounter::default()))
        },
        |_, rho, entry, acc| {
            acc.moments_mut("rho").expect("rho").observe(rho.unwrap_or(c.cap) as f64);
            acc.tail_mut("tail").expect("tail").observe(eta_value(rho));
            if let Some(y) = entry {
                acc.occupation_mut("entries").expect("entries").observe(y);
            }
        },
    )?;
    let exact = axis.expected_rho(z);
    let ci = moment_interval(acc.moments("rho").expect("rho"), 1.0 - th.p_value)?;
    out.sink
        .push("axis-mean-mc", Some(z.sup_norm()), &ci, Some(exact), Verdict::hard(ci.contains(exact)), "mean axis sojourn / distance");
    let states = boundary_states(cfg.truncation.radius);
    let law: BTreeMap<LatticePoint, f64> = states.iter().map(|&y| (y, axis.entry_probability(z, y))).collect();
    let occ = acc.occupation("entries").expect("entries");
    let d = discrepancy(occ.counts(), occ.total(), &law, th.min_expected)?;
    out.sink.value(
        "axis-entry-chi2-p",
        Some(z.sup_norm()),
        d.p_value,
        Some(th.p_value),
        Verdict::hard(d.p_value > th.p_value),
        "axis entry law",
    );
    let tail = acc.tail("tail").expect("tail");
    let mut scaled = Vec::new();
    for &m in &c.horizons {
        let ci = wilson_interval(tail.count(m as f64)?, tail.total(), c.level).scaled((m as f64).powf(p.censor_power));
        scaled.push(ci.estimate);
        out.sink.push("axis-censor-scaled", Some(m), &ci, None, Verdict::Info, "axis sojourn tail decay");
    }
    let ok = scaled.len() >= 2 && scaled.windows(2).all(|w| w[1] <= w[0]);
    let last = *scaled.last().unwrap_or(&f64::NAN);
    out.sink.value("axis-censor-decay", None, last, Some(0.0), Verdict::hard(ok), "axis sojourn tail decay");
    let surv = axis_survival(&ctx.params, z, &c.horizons, len)?;
    let logs: Vec<f64> = surv.iter().map(|&(m, lp)| lp + p.censor_power * (m as f64).ln()).collect();
    for (&(m, _), &l) in surv.iter().zip(&logs) {
        out.sink.value("axis-censor-exact-log", Some(m), l, None, Verdict::Info, "axis sojourn tail decay");
    }
    let ok = logs.len() >= 2 && logs.windows(2).all(|w| w[1] < w[0]);
    out.sink.value(
        "axis-censor-exact-decay",
        None,
        *logs.last().unwrap_or(&f64::NAN),
        None,
        Verdict::hard(ok),
        "axis sojourn tail decay",
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// entrance chain and constants

fn entry_law(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let bundle = ctx.oracle()?;
    out.ledger("entrance kernel", bundle.kernel_ledger.clone());
    let [lo, hi] = ctx.cfg.probes.exponent_range;
    let e = bundle.law.tail_exponent(lo, hi);
    let alpha = ctx.params.alpha();
    let ok = (e - alpha).abs() <= ctx.cfg.thresholds.exponent_abs;
    out.sink.value("entry-law-exponent", None, e, Some(alpha), Verdict::hard(ok), "stationary entry law tail");
    out.sink
        .value("entry-law-weighted-loss", None, bundle.law.weighted_loss, None, Verdict::Info, "plumbing");
    let per = *c.horizons.last().expect("horizon");
    let acc = phases::excursions(ctx, c.start, c.replicas, per)?;
    let occ = acc.occupation("entries").expect("entries");
    let table = bundle.law.table();
    let n = occ.total() as f64;
    let mut tv = 0.0;
    for (y, &p) in &table {
        tv += (occ.counts().get(y).copied().unwrap_or(0) as f64 / n - p).abs();
    }
    for (y, &k) in occ.counts() {
        if !table.contains_key(y) {
            tv += k as f64 / n;
        }
    }
    out.sink
        .value("entry-law-mc-tv", Some(per), 0.5 * tv, Some(0.0), Verdict::Info, "stationary entry law tail");
    Ok(())
}

fn constants(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let bundle = ctx.oracle()?;
    let k = &bundle.law.constants;
    out.ledger("entrance kernel", bundle.kernel_ledger.clone());
    out.sink.value("oracle-c1", None, k.c1, None, Verdict::Info, "renewal constant");
    out.sink.value("oracle-kappa", None, k.kappa, None, Verdict::Info, "stationary axis sojourn");
    out.sink.value("oracle-mean-entry", None, k.mean_pi_dagger, None, Verdict::Info, "renewal constant");
    out.sink.value("oracle-kappa-tail", None, bundle.sojourn_tail, None, Verdict::Info, "plumbing");
    let per = *c.horizons.last().expect("horizon");
    let acc = phases::excursions(ctx, c.start, c.replicas, per)?;
    let mean = moment_interval(acc.moments("entry_norm").expect("entry_norm"), c.level)?;
    let c1 = ConfidenceInterval {
        estimate: PI / 8.0 / mean.estimate,
        lo: PI / 8.0 / mean.hi,
        hi: PI / 8.0 / mean.lo,
        ..mean
    };
    let v = Verdict::hard(within_rel(c1.estimate, k.c1, ctx.cfg.thresholds.constants_rel));
    out.sink.push("c1-mc-vs-oracle", Some(per), &c1, Some(k.c1), v, "renewal constant");
    out.sink
        .push("mean-entry-mc", Some(per), &mean, Some(k.mean_pi_dagger), Verdict::Info, "renewal constant");
    let kappa = moment_interval(acc.moments("sojourn").expect("sojourn"), c.level)?;
    out.sink
        .push("kappa-mc-vs-oracle", Some(per), &kappa, Some(k.kappa), Verdict::Info, "stationary axis sojourn");
    Ok(())
}

fn lln(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let c1 = ctx.oracle()?.law.constants.c1;
    let rel = ctx.cfg.thresholds.lln_rel;
    let log = phases::time_ladder(ctx, c.start, c.replicas, &c.horizons)?;
    let mut dist = Vec::new();
    for (i, &n) in c.horizons.iter().enumerate() {
        let nf = n as f64;
        let ci = mean_interval(rows_at(&log, n).map(|r| nf.ln() / nf * r[1]), c.level)?;
        let v = if i + 1 == c.horizons.len() {
            Verdict::hard(within_rel(ci.estimate, c1, rel))
        } else {
            Verdict::Info
        };
        out.sink.push("lln-scaled-count", Some(n), &ci, Some(c1), v, "law of large numbers for N_n");
        dist.push(distance_interval(&ci, c1));
    }
    out.trend("lln-scaled-count-trend", &dist, "law of large numbers for N_n");
    let sec = ctx.cfg.secondary.clone().expect("materialized");
    let log = phases::entrance_ladder(ctx, c.start, sec.replicas, &sec.horizons)?;
    let target = 1.0 / c1;
    let mut dist = Vec::new();
    for (i, &m) in sec.horizons.iter().enumerate() {
        let mf = m as f64;
        let ci = mean_interval(rows_at(&log, m).map(|r| r[1] / (mf * mf.ln())), c.level)?;
        let v = if i + 1 == sec.horizons.len() {
            Verdict::hard(within_rel(ci.estimate, target, rel))
        } else {
            Verdict::Info
        };
        out.sink.push("rho-scaled", Some(m), &ci, Some(target), v, "law of large numbers for N_n");
        dist.push(distance_interval(&ci, target));
    }
    out.trend("rho-scaled-trend", &dist, "law of large numbers for N_n");
    Ok(())
}

fn rho_second_order(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let k: LimitConstants = ctx.oracle()?.law.constants.clone();
    let log = phases::entrance_ladder(ctx, c.start, c.replicas, &c.horizons)?;
    for &lambda in &ctx.cfg.grids.lambda.clone() {
        let target = s1(lambda, &k)?.exp();
        let mut dist = Vec::new();
        for &m in &c.horizons {
            let mf = m as f64;
            let am = crate::limits::a_m(mf, &k)?;
            let ci = mean_interval(rows_at(&log, m).map(|r| (-lambda * (r[1] - am) / mf).exp()), c.level)?;
            out.sink.push(
                &format!("rho-laplace-l{lambda}"),
                Some(m),
                &ci,
                Some(target),
                Verdict::Info,
                "second-order law of rho_m",
            );
            dist.push(distance_interval(&ci, target));
        }
        out.trend(&format!("rho-laplace-l{lambda}-trend"), &dist, "second-order law of rho_m");
    }
    Ok(())
}

fn scale_bounds(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let eps = ctx.cfg.epsilon;
    let log = phases::entrance_ladder(ctx, c.start, c.replicas, &c.horizons)?;
    let mut freq = Vec::new();
    for &m in &c.horizons {
        let mf = m as f64;
        let (lo, hi) = (mf.powf(0.5 - eps), mf.powf(0.5 + eps));
        let rows: Vec<_> = rows_at(&log, m).collect();
        let hits = rows.iter().filter(|r| r[2] > lo || r[3] > hi).count() as u64;
        let ci = wilson_interval(hits, rows.len() as u64, c.level);
        out.sink.push("scale-bound-frequency", Some(m), &ci, Some(0.0), Verdict::Info, "excursion scale bounds");
        freq.push(ci);
    }
    out.trend("scale-bound-trend", &freq, "excursion scale bounds");
    Ok(())
}

// ---------------------------------------------------------------------------
// time ladder

fn inverted(ctx: &mut Ctx, h: f64) -> Result<InvertedLaw> {
    let k = ctx.oracle()?.law.constants.clone();
    let g = &ctx.cfg.grids;
    invert_mu(&StableLawSpec::new(k, h)?, &log_grid(g.s_lo, g.s_hi, g.s_points))
}

fn theorem2(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let th = ctx.cfg.thresholds.clone();
    let grids = ctx.cfg.grids.clone();
    let c1 = ctx.oracle()?.law.constants.c1;
    let law0 = inverted(ctx, 0.0)?;
    out.sink.value(
        "inversion-roundtrip",
        None,
        law0.roundtrip_residual,
        Some(th.roundtrip),
        Verdict::hard(law0.roundtrip_residual < th.roundtrip),
        "limit measure of the second-order law",
    );
    let dual = dual_route_check(&law0, grids.dual_route_samples, phases::base(ctx.cfg.seed, stream::DUAL_ROUTE))?;
    out.sink.value(
        "dual-route-ks",
        Some(dual.samples),
        dual.kolmogorov,
        Some(th.dual_route_ks),
        Verdict::hard(dual.kolmogorov < th.dual_route_ks),
        "limit measure of the second-order law",
    );
    let mut targets = Vec::new();
    for &h in &grids.h {
        let law = if h == 0.0 { law0.clone() } else { inverted(ctx, h)? };
        for &a in &grids.a {
            targets.push((h, a, theorem2_tail(a, &law)?));
        }
    }
    let log = phases::time_ladder(ctx, c.start, c.replicas, &c.horizons)?;
    let mut ks = Vec::new();
    for &n in &c.horizons {
        let nf = n as f64;
        let l = nf.ln();
        let uv: Vec<(f64, f64)> = rows_at(&log, n)
            .map(|r| (l * l / nf * (r[1] - c1 * nf / l), l / nf * (nf - r[2])))
            .collect();
        let total = uv.len() as f64;
        let mut d = 0.0f64;
        for &(h, a, t) in &targets {
            let p = uv.iter().filter(|&&(u, v)| u >= h && v >= a).count() as f64 / total;
            out.sink.value(
                &format!("theorem2-tail-h{h}-a{a}"),
                Some(n),
                p,
                Some(t),
                Verdict::Info,
                "second-order joint law of N_n and the age",
            );
            d = d.max((p - t).abs());
        }
        let ci = band(d, dkw_half_width(uv.len() as u64, c.level), c.level);
        out.sink
            .push("theorem2-ks", Some(n), &ci, Some(0.0), Verdict::Info, "second-order joint law of N_n and the age");
        ks.push(ci);
    }
    out.trend("theorem2-ks-trend", &ks, "second-order joint law of N_n and the age");
    Ok(())
}

fn theorem1(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let th = ctx.cfg.thresholds.clone();
    let levels = ctx.cfg.grids.position_a.clone();
    let law0 = inverted(ctx, 0.0)?;
    let targets: Vec<(f64, f64)> = levels
        .iter()
        .map(|&a| theorem1_tail(a, a, &law0).map(|t| (a, t)))
        .collect::<Result<_>>()?;
    let log = phases::time_ladder(ctx, c.start, c.replicas, &c.horizons)?;
    let mut ks = Vec::new();
    let uniform: BTreeMap<usize, f64> = (0..4).map(|q| (q, 0.25)).collect();
    for &n in &c.horizons {
        let nf = n as f64;
        let scale = (nf.ln() / nf).sqrt();
        let pts: Vec<LatticePoint> = rows_at(&log, n).map(|r| LatticePoint::new(r[3] as i64, r[4] as i64)).collect();
        let total = pts.len() as f64;
        let mut d = 0.0f64;
        for &(a, t) in &targets {
            let p = pts
                .iter()
                .filter(|q| scale * q.x1.unsigned_abs() as f64 >= a && scale * q.x2.unsigned_abs() as f64 >= a)
                .count() as f64
                / total;
            out.sink
                .value(&format!("theorem1-tail-a{a}"), Some(n), p, Some(t), Verdict::Info, "scaled position law");
            d = d.max((p - t).abs());
        }
        let ci = band(d, dkw_half_width(pts.len() as u64, c.level), c.level);
        out.sink.push("theorem1-ks", Some(n), &ci, Some(0.0), Verdict::Info, "scaled position law");
        ks.push(ci);
        let mut quads: BTreeMap<usize, u64> = BTreeMap::new();
        for q in pts.iter().filter_map(|q| q.quadrant()) {
            *quads.entry(q).or_insert(0) += 1;
        }
        let in_cone: u64 = quads.values().sum();
        let p = if in_cone == 0 {
            1.0
        } else {
            discrepancy(&quads, in_cone, &uniform, 0.0)?.p_value
        };
        out.sink
            .value("quadrant-symmetry-p", Some(n), p, Some(th.p_value), Verdict::hard(p > th.p_value), "scaled position law");
    }
    out.trend("theorem1-ks-trend", &ks, "scaled position law");
    Ok(())
}

fn axis_negligible(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let log = phases::time_ladder(ctx, c.start, c.replicas, &c.horizons)?;
    let mut freq = Vec::new();
    for &n in &c.horizons {
        let b = bn_squared(n as f64)?.sqrt();
        let rows: Vec<_> = rows_at(&log, n).collect();
        let hits = rows
            .iter()
            .filter(|r| {
                let p = LatticePoint::new(r[3] as i64, r[4] as i64);
                p.sup_norm() as f64 >= b && classify(p) != RegionClass::Cone
            })
            .count() as u64;
        let ci = wilson_interval(hits, rows.len() as u64, c.level);
        out.sink
            .push("far-on-axis-frequency", Some(n), &ci, Some(0.0), Verdict::Info, "far from the origin on the axes");
        freq.push(ci);
    }
    out.trend("far-on-axis-trend", &freq, "far from the origin on the axes");
    Ok(())
}

// ---------------------------------------------------------------------------
// crosscheck

fn crosscheck(ctx: &mut Ctx, out: &mut Out) -> Result<()> {
    let c = common(ctx);
    let th = ctx.cfg.thresholds.clone();
    let p = ctx.cfg.probes.clone();
    let params = ctx.params;
    let gate = |out: &mut Out, metric: &str, d: &crate::stats::Discrepancy, tag: &str| {
        out.sink
            .value(metric, None, d.p_value, Some(th.p_value), Verdict::hard(d.p_value > th.p_value), tag);
        out.sink.value(&format!("{metric}-tv"), None, d.total_variation, Some(0.0), Verdict::Info, tag);
    };

    // cone exits up to k
    let x = c.start;
    let k = p.cone_k;
    let table = quadrant_exit_dp(x, k)?;
    out.ledger(&format!("cone exit DP from {x}, k <= {k}"), table.ledger.clone());
    let exact: BTreeMap<String, f64> = table.iter().map(|(t, y, q)| (format!("{t}|{y}"), q)).collect();
    let acc = phases::cone_exits(
        ctx,
        "crosscheck-cone",
        stream::CHECK_CONE,
        x,
        c.replicas,
        k,
        &[],
        || AccumulatorSet::new().with("cells", Accumulator::Cells(CellCounter::default())),
        |e, acc| {
            let cell = match (e.eta, e.exit_point) {
                (Some(t), Some(y)) => format!("{t}|{y}"),
                _ => "censored".into(),
            };
            acc.cells_mut("cells").expect("cells").observe(cell);
        },
    )?;
    let cells = acc.cells("cells").expect("cells");
    let d = discrepancy(cells.counts(), cells.total(), &exact, th.min_expected)?;
    gate(out, "crosscheck-cone-exit-p", &d, "exact cone exit law");

    // axis absorption from (j, 0), j = 1..=axis_max
    let axis = axis_absorption_solve(&params, ctx.cfg.truncation.axis_len)?;
    let zmax = p.axis_max.max(1);
    let starts: Vec<LatticePoint> = (1..=zmax as i64).map(|j| LatticePoint::new(j, 0)).collect();
    let states = boundary_states(ctx.cfg.truncation.radius);
    let mut exact = BTreeMap::new();
    for &z in &starts {
        out.ledger(&format!("axis solve from {z}"), axis.ledger(z));
        for &y in &states {
            let q = axis.entry_probability(z, y) / zmax as f64;
            if q > 0.0 {
                exact.insert(format!("{z}|{y}"), q);
            }
        }
    }
    let acc = phases::axis_exits(
        ctx,
        &format!("crosscheck-axis;zmax={zmax}"),
        stream::CHECK_AXIS,
        c.replicas,
        1 << 20,
        |i| starts[(i % zmax) as usize],
        || AccumulatorSet::new().with("cells", Accumulator::Cells(CellCounter::default())),
        |z, _, y, acc| {
            let cell = y.map_or_else(|| "censored".to_string(), |y| format!("{z}|{y}"));
            acc.cells_mut("cells").expect("cells").observe(cell);
        },
    )?;
    let cells = acc.cells("cells").expect("cells");
    let d = discrepancy(cells.counts(), cells.total(), &exact, th.min_expected)?;
    gate(out, "crosscheck-axis-entry-p", &d, "exact axis entry law");

    // full walk law after walk_n steps
    let n = p.walk_n;
    let law = walk_law_dp_from(&params, n, n + 1, x)?;
    out.ledger(&format!("walk law DP from {x}, n = {n}"), law.ledger.clone());
    let exact: BTreeMap<LatticePoint, f64> = law.support().into_iter().collect();
    let kernel = AxisKernel::new(params);
    let walk_base = phases::base(ctx.cfg.seed, stream::CHECK_WALK);
    let plan = SweepPlan::new(walk_base, c.replicas, 1 << 12);
    let acc = ctx.phase(
        &format!("crosscheck-walk;alpha={};start={x};n={n}", params.alpha()),
        plan,
        || AccumulatorSet::new().with("final", Accumulator::Occupation(OccupationCounter::default())),
        |_: &mut StreamRng, items, acc| {
            let occ = acc.occupation_mut("final").expect("final");
            for i in items {
                let mut w = Walker::new(&kernel, x, StreamRng::new(walk_base.nth(i)));
                w.advance(n, &mut ());
                occ.observe(w.position());
            }
        },
    )?;
    let occ = acc.occupation("final").expect("final");
    let d = discrepancy(occ.counts(), occ.total(), &exact, th.min_expected)?;
    gate(out, "crosscheck-walk-law-p", &d, "exact full-walk law");
    Ok(())
}
