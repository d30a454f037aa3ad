//! Mergeable single-pass estimators and the interval and discrepancy
//! routines that turn them into verdicts.
//!
//! All accumulators merge associatively and commutatively. Counters are
//! exact integers; floating sums are carried as double-double pairs so that
//! merge order changes a reported mean by at most one ulp.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::LatticePoint;

/// Snapshot format version written with every serialized accumulator set.
pub const SNAPSHOT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// compensated summation

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Double-double running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    hi: f64,
    lo: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = fast_two_sum(s, e + self.lo);
        self.hi = hi;
        self.lo = lo;
    }

    #[inline]
    pub fn merge(&mut self, other: &CompensatedSum) {
        let (s, e) = two_sum(self.hi, other.hi);
        let (hi, lo) = fast_two_sum(s, e + (self.lo + other.lo));
        self.hi = hi;
        self.lo = lo;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

// ---------------------------------------------------------------------------
// confidence intervals

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum IntervalMethod {
    Wilson,
    Normal,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl ConfidenceInterval {
    pub fn point(estimate: f64) -> Self {
        Self {
            estimate,
            lo: estimate,
            hi: estimate,
            level: 1.0,
            method: IntervalMethod::Exact,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &ConfidenceInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Interval of `scale * X` for a positive scale.
    pub fn scaled(&self, scale: f64) -> Self {
        debug_assert!(scale >= 0.0);
        Self {
            estimate: self.estimate * scale,
            lo: self.lo * scale,
            hi: self.hi * scale,
            ..*self
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Two-sided standard normal quantile for a confidence level.
pub fn z_for_level(level: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(0.5 + 0.5 * level)
}

pub fn wilson_interval(successes: u64, trials: u64, level: f64) -> ConfidenceInterval {
    assert!(trials > 0, "Wilson interval needs at least one trial");
    assert!(successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = z_for_level(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0).min(p) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0).max(p) };
    ConfidenceInterval {
        estimate: p,
        lo,
        hi,
        level,
        method: IntervalMethod::Wilson,
    }
}

pub fn normal_interval(mean: f64, std_err: f64, level: f64) -> ConfidenceInterval {
    let z = z_for_level(level);
    let half = if std_err.is_finite() { z * std_err } else { f64::INFINITY };
    ConfidenceInterval {
        estimate: mean,
        lo: mean - half,
        hi: mean + half,
        level,
        method: IntervalMethod::Normal,
    }
}

// ---------------------------------------------------------------------------
// accumulators

/// Counts of `value > threshold` (or `>=` when inclusive) on a fixed list of
/// thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCounter {
    thresholds: Vec<f64>,
    inclusive: bool,
    exceed: Vec<u64>,
    total: u64,
}

impl TailCounter {
    pub fn new(mut thresholds: Vec<f64>) -> Self {
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        let k = thresholds.len();
        Self {
            thresholds,
            inclusive: false,
            exceed: vec![0; k],
            total: 0,
        }
    }

    /// Counter of `value >= threshold`.
    pub fn inclusive(thresholds: Vec<f64>) -> Self {
        Self {
            inclusive: true,
            ..Self::new(thresholds)
        }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    #[inline]
    pub fn observe(&mut self, value: f64) {
        self.total += 1;
        // thresholds are sorted, so exceedances form a prefix
        let k = if self.inclusive {
            self.thresholds.partition_point(|&t| t <= value)
        } else {
            self.thresholds.partition_point(|&t| t < value)
        };
        for c in &mut self.exceed[..k] {
            *c += 1;
        }
    }

    pub fn count(&self, threshold: f64) -> Result<u64> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.exceed[i])
            .ok_or(Error::UnknownThreshold(threshold))
    }

    pub fn merge(&mut self, other: &TailCounter) -> Result<()> {
        if self.thresholds != other.thresholds || self.inclusive != other.inclusive {
            return Err(Error::Incompatible("tail counter thresholds differ".into()));
        }
        for (a, b) in self.exceed.iter_mut().zip(&other.exceed) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }
}

/// Log-spaced histogram. Edges are fixed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    min: f64,
    bins_per_decade: u32,
    counts: Vec<u64>,
    underflow: u64,
    overflow: u64,
}

impl Histogram {
    pub const DEFAULT_BINS_PER_DECADE: u32 = 32;

    pub fn log_spaced(min: f64, max: f64, bins_per_decade: u32) -> Self {
        assert!(min > 0.0 && max > min && bins_per_decade > 0);
        let nbins = ((max / min).log10() * bins_per_decade as f64).ceil() as usize;
        Self {
            min,
            bins_per_decade,
            counts: vec![0; nbins.max(1)],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.min * 10f64.powf(k as f64 / self.bins_per_decade as f64)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn underflow(&self) -> u64 {
        self.underflow
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn bin_of(&self, value: f64) -> Option<usize> {
        if !(value >= self.min) {
            return None;
        }
        let mut k = ((value / self.min).log10() * self.bins_per_decade as f64).floor() as usize;
        // guard rounding at the edges
        while k > 0 && value < self.edge(k) {
            k -= 1;
        }
        while k + 1 <= self.counts.len() && value >= self.edge(k + 1) {
            k += 1;
        }
        (k < self.counts.len()).then_some(k)
    }

    pub fn observe(&mut self, value: f64) {
        if !(value >= self.min) {
            self.underflow += 1;
            return;
        }
        match self.bin_of(value) {
            Some(k) => self.counts[k] += 1,
            None => self.overflow += 1,
        }
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.min != other.min
            || self.bins_per_decade != other.bins_per_decade
            || self.counts.len() != other.counts.len()
        {
            return Err(Error::Incompatible("histogram edges differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }
}

/// Count, mean and second moment with compensated sums.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    count: u64,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl MomentAccumulator {
    #[inline]
    pub fn observe(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.sum.value() / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let m = self.mean();
        ((self.sum_sq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// The M2 aggregate `sum (x - mean)^2`.
    pub fn m2(&self) -> f64 {
        let n = self.count as f64;
        let m = self.mean();
        (self.sum_sq.value() - n * m * m).max(0.0)
    }

    pub fn std_err(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    pub fn interval(&self, level: f64) -> Result<ConfidenceInterval> {
        if self.count == 0 {
            return Err(Error::Empty("moment accumulator"));
        }
        Ok(normal_interval(self.mean(), self.std_err(), level))
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }
}

/// Running means of `exp(-lambda * value)` on a fixed lambda grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceAccumulator {
    lambdas: Vec<f64>,
    count: u64,
    sums: Vec<CompensatedSum>,
    sums_sq: Vec<CompensatedSum>,
}

impl LaplaceAccumulator {
    pub fn new(lambdas: Vec<f64>) -> Self {
        let k = lambdas.len();
        Self {
            lambdas,
            count: 0,
            sums: vec![CompensatedSum::default(); k],
            sums_sq: vec![CompensatedSum::default(); k],
        }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn observe(&mut self, value: f64) {
        self.count += 1;
        for (i, &l) in self.lambdas.iter().enumerate() {
            let e = (-l * value).exp();
            self.sums[i].add(e);
            self.sums_sq[i].add(e * e);
        }
    }

    pub fn merge(&mut self, other: &LaplaceAccumulator) -> Result<()> {
        if self.lambdas != other.lambdas {
            return Err(Error::Incompatible("laplace grids differ".into()));
        }
        self.count += other.count;
        for i in 0..self.sums.len() {
            self.sums[i].merge(&other.sums[i]);
            self.sums_sq[i].merge(&other.sums_sq[i]);
        }
        Ok(())
    }
}

/// Visit counts per lattice point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OccupationCounter {
    #[serde(with = "point_map")]
    counts: BTreeMap<LatticePoint, u64>,
    total: u64,
}

mod point_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<LatticePoint, u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(m.iter().map(|(p, c)| (p.x1, p.x2, *c)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<LatticePoint, u64>, D::Error> {
        let v: Vec<(i64, i64, u64)> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|(a, b, c)| (LatticePoint::new(a, b), c)).collect())
    }
}

impl OccupationCounter {
    #[inline]
    pub fn observe(&mut self, p: LatticePoint) {
        *self.counts.entry(p).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<LatticePoint, u64> {
        &self.counts
    }

    pub fn merge(&mut self, other: &OccupationCounter) {
        for (p, c) in &other.counts {
            *self.counts.entry(*p).or_insert(0) += c;
        }
        self.total += other.total;
    }
}

/// Generic exact counter of arbitrary discrete cells, keyed by string.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellCounter {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl CellCounter {
    pub fn observe(&mut self, cell: impl Into<String>) {
        *self.counts.entry(cell.into()).or_insert(0) += 1;
        self.total += 1;
    }

    /// Count `cell` without starting a new trial.
    pub fn mark(&mut self, cell: impl Into<String>) {
        *self.counts.entry(cell.into()).or_insert(0) += 1;
    }

    /// One trial that hit no cell.
    pub fn trial(&mut self) {
        self.total += 1;
    }

    pub fn count(&self, cell: &str) -> u64 {
        self.counts.get(cell).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn merge(&mut self, other: &CellCounter) {
        for (k, c) in &other.counts {
            *self.counts.entry(k.clone()).or_insert(0) += c;
        }
        self.total += other.total;
    }
}

/// Multiset of fixed-width sample rows. Rows are kept sorted, so the
/// result of merging never depends on the order of the parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleLog {
    width: usize,
    rows: Vec<Vec<f64>>,
}

fn row_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

impl SampleLog {
    pub fn new(width: usize) -> Self {
        Self { width, rows: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn observe(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.width, "sample row width");
        let at = self.rows.partition_point(|r| row_cmp(r, &row).is_le());
        self.rows.insert(at, row);
    }

    pub fn merge(&mut self, other: &SampleLog) -> Result<()> {
        if self.width != other.width {
            return Err(Error::Incompatible("sample log widths differ".into()));
        }
        let mut out = Vec::with_capacity(self.rows.len() + other.rows.len());
        let (mut i, mut j) = (0, 0);
        while i < self.rows.len() && j < other.rows.len() {
            if row_cmp(&other.rows[j], &self.rows[i]).is_lt() {
                out.push(other.rows[j].clone());
                j += 1;
            } else {
                out.push(std::mem::take(&mut self.rows[i]));
                i += 1;
            }
        }
        out.extend(self.rows.drain(i..));
        out.extend(other.rows[j..].iter().cloned());
        self.rows = out;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Accumulator {
    Tail(TailCounter),
    Histogram(Histogram),
    Moments(MomentAccumulator),
    Laplace(LaplaceAccumulator),
    Occupation(OccupationCounter),
    Cells(CellCounter),
    Samples(SampleLog),
}

impl Accumulator {
    pub fn merge(&mut self, other: &Accumulator) -> Result<()> {
        match (self, other) {
            (Accumulator::Tail(a), Accumulator::Tail(b)) => a.merge(b),
            (Accumulator::Histogram(a), Accumulator::Histogram(b)) => a.merge(b),
            (Accumulator::Moments(a), Accumulator::Moments(b)) => {
                a.merge(b);
                Ok(())
            }
            (Accumulator::Laplace(a), Accumulator::Laplace(b)) => a.merge(b),
            (Accumulator::Occupation(a), Accumulator::Occupation(b)) => {
                a.merge(b);
                Ok(())
            }
            (Accumulator::Cells(a), Accumulator::Cells(b)) => {
                a.merge(b);
                Ok(())
            }
            (Accumulator::Samples(a), Accumulator::Samples(b)) => a.merge(b),
            _ => Err(Error::Incompatible("accumulator kinds differ".into())),
        }
    }
}

/// Named collection of accumulators; the unit that sweeps fill and merge.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorSet {
    entries: BTreeMap<String, Accumulator>,
}

macro_rules! typed_access {
    ($get:ident, $get_mut:ident, $variant:ident, $ty:ty) => {
        pub fn $get(&self, name: &str) -> Option<&$ty> {
            match self.entries.get(name) {
                Some(Accumulator::$variant(a)) => Some(a),
                _ => None,
            }
        }

        pub fn $get_mut(&mut self, name: &str) -> Option<&mut $ty> {
            match self.entries.get_mut(name) {
                Some(Accumulator::$variant(a)) => Some(a),
                _ => None,
            }
        }
    };
}

impl AccumulatorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, acc: Accumulator) -> Self {
        self.entries.insert(name.into(), acc);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, acc: Accumulator) {
        self.entries.insert(name.into(), acc);
    }

    pub fn get(&self, name: &str) -> Option<&Accumulator> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    typed_access!(tail, tail_mut, Tail, TailCounter);
    typed_access!(histogram, histogram_mut, Histogram, Histogram);
    typed_access!(moments, moments_mut, Moments, MomentAccumulator);
    typed_access!(laplace, laplace_mut, Laplace, LaplaceAccumulator);
    typed_access!(occupation, occupation_mut, Occupation, OccupationCounter);
    typed_access!(cells, cells_mut, Cells, CellCounter);
    typed_access!(samples, samples_mut, Samples, SampleLog);

    pub fn merge(&mut self, other: &AccumulatorSet) -> Result<()> {
        if self.entries.len() != other.entries.len()
            || !self.entries.keys().eq(other.entries.keys())
        {
            return Err(Error::Incompatible("accumulator names differ".into()));
        }
        for (k, v) in self.entries.iter_mut() {
            v.merge(&other.entries[k])?;
        }
        Ok(())
    }

    pub fn to_snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "version": SNAPSHOT_VERSION,
            "accumulators": self,
        })
    }

    pub fn from_snapshot(v: &serde_json::Value) -> Result<Self> {
        let version = v.get("version").and_then(|x| x.as_u64());
        if version != Some(SNAPSHOT_VERSION as u64) {
            return Err(Error::Checkpoint(format!(
                "accumulator snapshot version {version:?}, expected {SNAPSHOT_VERSION}"
            )));
        }
        let acc = v
            .get("accumulators")
            .ok_or_else(|| Error::Checkpoint("snapshot has no accumulators".into()))?;
        Ok(serde_json::from_value(acc.clone())?)
    }
}

// ---------------------------------------------------------------------------
// estimators

pub fn empirical_tail(acc: &TailCounter, threshold: f64, level: f64) -> Result<ConfidenceInterval> {
    let k = acc.count(threshold)?;
    if acc.total == 0 {
        return Err(Error::Empty("tail counter"));
    }
    Ok(wilson_interval(k, acc.total, level))
}

pub fn empirical_laplace(acc: &LaplaceAccumulator, lambda: f64, level: f64) -> Result<ConfidenceInterval> {
    if acc.count == 0 {
        return Err(Error::Empty("laplace accumulator"));
    }
    let i = acc
        .lambdas
        .iter()
        .position(|&l| l == lambda)
        .ok_or(Error::UnknownLambda(lambda))?;
    if lambda == 0.0 {
        return Ok(ConfidenceInterval::point(1.0));
    }
    let n = acc.count as f64;
    let mean = acc.sums[i].value() / n;
    let var = if acc.count > 1 {
        ((acc.sums_sq[i].value() - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(normal_interval(mean, (var / n).sqrt(), level))
}

/// Conditional mean of `eta * 1{eta <= m}` over samples whose entrance point
/// is `y`. A censored `eta` (`None`) is known to exceed the cap and so
/// contributes zero whenever the cutoff does not exceed that cap.
pub fn truncated_conditional_mean<I>(
    samples: I,
    m: Option<u64>,
    y: LatticePoint,
    level: f64,
) -> Result<ConfidenceInterval>
where
    I: IntoIterator<Item = (Option<u64>, LatticePoint)>,
{
    let mut acc = MomentAccumulator::default();
    for (eta, entry) in samples {
        if entry != y {
            continue;
        }
        let v = match (eta, m) {
            (Some(e), Some(m)) if e <= m => e as f64,
            (Some(_), Some(_)) => 0.0,
            (Some(e), None) => e as f64,
            (None, _) => 0.0,
        };
        acc.observe(v);
    }
    if acc.count == 0 {
        return Err(Error::Empty("no samples with the conditioning entrance point"));
    }
    if acc.count == 1 {
        return Ok(ConfidenceInterval::point(acc.mean()));
    }
    acc.interval(level)
}

/// Normalized frequencies with a per-point Wilson interval.
pub fn occupation_measure(
    acc: &OccupationCounter,
    level: f64,
) -> Result<BTreeMap<LatticePoint, ConfidenceInterval>> {
    if acc.total == 0 {
        return Err(Error::Empty("occupation counter"));
    }
    Ok(acc
        .counts
        .iter()
        .map(|(p, &c)| (*p, wilson_interval(c, acc.total, level)))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub chi_square: f64,
    pub dof: u64,
    pub p_value: f64,
    pub total_variation: f64,
    pub cells: usize,
    pub pooled_cells: usize,
}

/// Pearson chi-square and total variation between observed counts and an
/// exact law.
///
/// Missing exact mass (`1 - sum exact`) becomes an explicit remainder cell
/// that also receives every observation outside the exact support. Cells
/// with expected count below `min_expected` are pooled together; an
/// undersized pool is folded into the smallest regular cell.
pub fn discrepancy<K: Ord + Clone>(
    observed: &BTreeMap<K, u64>,
    total_observed: u64,
    exact: &BTreeMap<K, f64>,
    min_expected: f64,
) -> Result<Discrepancy> {
    if total_observed == 0 {
        return Err(Error::Empty("observed counts"));
    }
    let overlap = exact
        .iter()
        .any(|(k, &p)| p > 0.0 && observed.get(k).copied().unwrap_or(0) > 0);
    if !overlap {
        return Err(Error::NoOverlap);
    }
    let n = total_observed as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut pool = (0.0, 0.0);
    let mut pooled_cells = 0usize;
    let mut seen = 0u64;
    let mut exact_mass = 0.0;
    for (k, &p) in exact {
        let o = observed.get(k).copied().unwrap_or(0);
        seen += o;
        exact_mass += p;
        let e = p * n;
        if e >= min_expected {
            cells.push((o as f64, e));
        } else {
            pool.0 += o as f64;
            pool.1 += e;
            pooled_cells += 1;
        }
    }
    let rest_obs = (total_observed - seen) as f64;
    let rest_exp = ((1.0 - exact_mass).max(0.0)) * n;
    if rest_exp >= min_expected {
        cells.push((rest_obs, rest_exp));
    } else {
        pool.0 += rest_obs;
        pool.1 += rest_exp;
    }
    if pool.1 >= min_expected {
        cells.push(pool);
    } else if pool.1 > 0.0 || pool.0 > 0.0 {
        match cells
            .iter_mut()
            .min_by(|a, b| a.1.total_cmp(&b.1))
        {
            Some(c) => {
                c.0 += pool.0;
                c.1 += pool.1;
            }
            None => cells.push(pool),
        }
    }
    let mut chi = 0.0;
    let mut tv = 0.0;
    for &(o, e) in &cells {
        if e > 0.0 {
            chi += (o - e) * (o - e) / e;
        } else if o > 0.0 {
            chi = f64::INFINITY;
        }
        tv += (o / n - e / n).abs();
    }
    let dof = cells.len().saturating_sub(1) as u64;
    let p_value = if dof == 0 {
        1.0
    } else if chi.is_finite() {
        1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(chi)
    } else {
        0.0
    };
    Ok(Discrepancy {
        chi_square: chi,
        dof,
        p_value,
        total_variation: 0.5 * tv,
        cells: cells.len(),
        pooled_cells,
    })
}

/// Largest absolute difference between two functions sampled on one grid.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Empirical CDF of sorted samples, evaluated at `x`.
pub fn ecdf_sorted(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// Trend verdict over a ladder of estimates: passes when every adjacent pair
/// moves in the required direction or their intervals overlap.
pub fn trend_ok(points: &[ConfidenceInterval], nonincreasing: bool) -> bool {
    if points.len() < 3 {
        return false;
    }
    points.windows(2).all(|w| {
        let ordered = if nonincreasing {
            w[1].estimate <= w[0].estimate
        } else {
            w[1].estimate >= w[0].estimate
        };
        ordered || w[0].overlaps(&w[1])
    })
}
