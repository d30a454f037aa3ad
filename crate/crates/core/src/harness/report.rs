//! Report rows, CSV/JSON output and verdict helpers.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::oracle::MassLedger;
use crate::rng::RngStreamSpec;
use crate::stats::ConfidenceInterval;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    TrendPass,
    TrendFail,
    Info,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::TrendPass => "trend-pass",
            Verdict::TrendFail => "trend-fail",
            Verdict::Info => "info",
        }
    }

    pub fn hard(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn trend(ok: bool) -> Self {
        if ok {
            Verdict::TrendPass
        } else {
            Verdict::TrendFail
        }
    }

    pub fn is_hard(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::Fail)
    }

    pub fn is_trend(self) -> bool {
        matches!(self, Verdict::TrendPass | Verdict::TrendFail)
    }

    pub fn passed(self) -> bool {
        !matches!(self, Verdict::Fail | Verdict::TrendFail)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub metric: String,
    pub n_or_m: Option<u64>,
    pub estimate: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub target: Option<f64>,
    pub verdict: Verdict,
    pub paper_tag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub ledger: MassLedger,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub key: String,
    pub stream_base: RngStreamSpec,
    pub items: u64,
    pub blocks: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngProvenance {
    pub generator: String,
    pub seed: u64,
    pub phases: Vec<PhaseRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
    pub ledgers: Vec<LedgerEntry>,
    pub rng: RngProvenance,
    /// Kept out of the JSON report so that replays compare byte for byte;
    /// written to a separate timing file instead.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

pub const CSV_HEADER: &str = "scenario,metric,n_or_m,estimate,ci_lo,ci_hi,target,verdict,paper_tag";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ScenarioReport {
    pub fn row(&self, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn rows_named<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn hard_gates_pass(&self) -> bool {
        self.rows.iter().filter(|r| r.verdict.is_hard()).all(|r| r.verdict.passed())
    }

    pub fn trends_pass(&self) -> bool {
        self.rows.iter().filter(|r| r.verdict.is_trend()).all(|r| r.verdict.passed())
    }

    /// 0 when every hard gate passes (and every trend, if trends are fatal).
    pub fn exit_code(&self) -> i32 {
        let trends = !self.config.thresholds.trends_fatal || self.trends_pass();
        if self.hard_gates_pass() && trends {
            0
        } else {
            1
        }
    }

    /// Reals use Rust's shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&r.scenario),
                csv_field(&r.metric),
                opt(r.n_or_m),
                r.estimate,
                opt(r.ci_lo),
                opt(r.ci_hi),
                opt(r.target),
                r.verdict.as_str(),
                csv_field(&r.paper_tag)
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<scenario>.csv`, `<scenario>.json` and `<scenario>.timing.json`
    /// into `dir` and returns the three paths.
    pub fn write(&self, dir: &Path) -> Result<[PathBuf; 3]> {
        std::fs::create_dir_all(dir)?;
        let stem = &self.config.scenario;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        let timing = dir.join(format!("{stem}.timing.json"));
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(&json, self.to_json())?;
        let t = serde_json::json!({
            "scenario": stem,
            "config_hash": self.config_hash,
            "wall_clock_secs": self.wall_clock_secs,
        });
        std::fs::write(&timing, serde_json::to_string_pretty(&t)?)?;
        Ok([csv, json, timing])
    }

    /// One summary line per row.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let at = r.n_or_m.map(|v| format!(" @{v}")).unwrap_or_default();
            let target = r.target.map(|t| format!(" target {t:.6}")).unwrap_or_default();
            let ci = match (r.ci_lo, r.ci_hi) {
                (Some(lo), Some(hi)) => format!(" [{lo:.6}, {hi:.6}]"),
                _ => String::new(),
            };
            let _ = writeln!(
                out,
                "{:<10} {}{}: {:.6}{}{}",
                r.verdict.as_str(),
                r.metric,
                at,
                r.estimate,
                ci,
                target
            );
        }
        out
    }
}

/// Rows under construction for one scenario.
#[derive(Debug)]
pub struct RowSink {
    scenario: String,
    pub rows: Vec<ReportRow>,
}

impl RowSink {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        metric: &str,
        n_or_m: Option<u64>,
        ci: &ConfidenceInterval,
        target: Option<f64>,
        verdict: Verdict,
        tag: &str,
    ) {
        let has_ci = ci.lo != ci.estimate || ci.hi != ci.estimate;
        self.rows.push(ReportRow {
            scenario: self.scenario.clone(),
            metric: metric.to_string(),
            n_or_m,
            estimate: ci.estimate,
            ci_lo: has_ci.then_some(ci.lo),
            ci_hi: has_ci.then_some(ci.hi),
            target,
            verdict,
            paper_tag: tag.to_string(),
        });
    }

    pub fn value(&mut self, metric: &str, n_or_m: Option<u64>, v: f64, target: Option<f64>, verdict: Verdict, tag: &str) {
        self.push(metric, n_or_m, &ConfidenceInterval::point(v), target, verdict, tag);
    }
}

/// `|estimate / target - 1| <= rel`.
pub fn within_rel(estimate: f64, target: f64, rel: f64) -> bool {
    target != 0.0 && ((estimate / target) - 1.0).abs() <= rel
}

/// Interval for `|X - target|` induced by an interval for `X`.
pub fn distance_interval(ci: &ConfidenceInterval, target: f64) -> ConfidenceInterval {
    let a = (ci.lo - target).abs();
    let b = (ci.hi - target).abs();
    let lo = if ci.contains(target) { 0.0 } else { a.min(b) };
    ConfidenceInterval {
        estimate: (ci.estimate - target).abs(),
        lo,
        hi: a.max(b),
        ..*ci
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::IntervalMethod;

    fn ci(e: f64, lo: f64, hi: f64) -> ConfidenceInterval {
        ConfidenceInterval {
            estimate: e,
            lo,
            hi,
            level: 0.95,
            method: IntervalMethod::Normal,
        }
    }

    #[test]
    fn distance_interval_cases() {
        let d = distance_interval(&ci(1.0, 0.5, 1.5), 2.0);
        assert_eq!((d.estimate, d.lo, d.hi), (1.0, 0.5, 1.5));
        let d = distance_interval(&ci(1.0, 0.5, 1.5), 1.2);
        assert_eq!(d.lo, 0.0);
        assert!((d.hi - 0.7).abs() < 1e-12);
    }

    #[test]
    fn csv_quotes_and_blanks() {
        let mut s = RowSink::new("x");
        s.value("a,b", None, 0.1, None, Verdict::Info, "plumbing");
        assert_eq!(csv_field(&s.rows[0].metric), "\"a,b\"");
        assert_eq!(opt::<u64>(None), "");
        assert_eq!(format!("{}", 0.1f64 + 0.2), "0.30000000000000004");
    }
}
