//! Declarative run configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::model::{classify, LatticePoint, ModelParams, RegionClass};
use crate::oracle::{FixedPointOptions, Truncation};

/// The scenario catalogue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    EtaTail,
    EtaTruncMean,
    ExitPosition,
    ExitJoint,
    Meander,
    AxisRho,
    EntryLaw,
    LlnNn,
    RhoSecondOrder,
    Theorem2,
    Theorem1,
    AxisNegligible,
    ScaleBounds,
    OracleCrosscheck,
    Constants,
}

impl Scenario {
    pub const ALL: [Scenario; 15] = [
        Scenario::EtaTail,
        Scenario::EtaTruncMean,
        Scenario::ExitPosition,
        Scenario::ExitJoint,
        Scenario::Meander,
        Scenario::AxisRho,
        Scenario::EntryLaw,
        Scenario::LlnNn,
        Scenario::RhoSecondOrder,
        Scenario::Theorem2,
        Scenario::Theorem1,
        Scenario::AxisNegligible,
        Scenario::ScaleBounds,
        Scenario::OracleCrosscheck,
        Scenario::Constants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::EtaTail => "eta-tail",
            Scenario::EtaTruncMean => "eta-truncmean",
            Scenario::ExitPosition => "exit-position",
            Scenario::ExitJoint => "exit-joint",
            Scenario::Meander => "meander",
            Scenario::AxisRho => "axis-rho",
            Scenario::EntryLaw => "entry-law",
            Scenario::LlnNn => "lln-Nn",
            Scenario::RhoSecondOrder => "rho-secondorder",
            Scenario::Theorem2 => "theorem2",
            Scenario::Theorem1 => "theorem1",
            Scenario::AxisNegligible => "axis-negligible",
            Scenario::ScaleBounds => "scale-bounds",
            Scenario::OracleCrosscheck => "oracle-crosscheck",
            Scenario::Constants => "constants",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::UnknownScenario(name.to_string()))
    }

    /// Scenarios whose targets only make sense for `alpha > 3`.
    pub fn needs_theorem_regime(self) -> bool {
        matches!(
            self,
            Scenario::EntryLaw
                | Scenario::LlnNn
                | Scenario::RhoSecondOrder
                | Scenario::Theorem2
                | Scenario::Theorem1
                | Scenario::AxisNegligible
                | Scenario::ScaleBounds
                | Scenario::Constants
        )
    }

    fn starts_on_axis(self) -> bool {
        self == Scenario::AxisRho
    }

    /// Scenarios where the start must be in the cone.
    fn starts_in_cone(self) -> bool {
        matches!(
            self,
            Scenario::EtaTail
                | Scenario::EtaTruncMean
                | Scenario::ExitPosition
                | Scenario::ExitJoint
                | Scenario::Meander
        )
    }
}

/// Replica count and horizon ladder of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSize {
    pub replicas: u64,
    pub horizons: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    /// Laplace arguments for the second-order law of `rho_m`.
    pub lambda: Vec<f64>,
    pub s_lo: f64,
    pub s_hi: f64,
    pub s_points: usize,
    /// Levels `a` for the joint tail and `h` offsets.
    pub a: Vec<f64>,
    pub h: Vec<f64>,
    /// Levels for the scaled-position tail, used as `(a, a)`.
    pub position_a: Vec<f64>,
    pub dual_route_samples: u64,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            lambda: vec![0.5, 1.0, 2.0, 3.0, 5.0],
            s_lo: 1e-2,
            s_hi: 1e2,
            s_points: 512,
            a: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            h: vec![0.0, 0.5, 1.0, 2.0],
            position_a: vec![0.25, 0.5, 1.0, 1.5],
            dual_route_samples: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Probes {
    /// Axis distance of the exit point in `exit-position`.
    pub target_y: u64,
    /// Levels of `X̄_η` for the exit-distance tail fit.
    pub tail_levels: Vec<u64>,
    pub meander_s: f64,
    pub meander_a: [f64; 2],
    /// `ȳ` separating near and far exits.
    pub split_ybar: u64,
    /// Axis distances and time bins `[lo, hi)` of the joint exit law.
    pub joint_points: Vec<u64>,
    pub joint_bins: Vec<[u64; 2]>,
    /// Axis distances for `E_z(rho) / z̄`.
    pub axis_levels: Vec<u64>,
    /// The level whose ratio is a hard gate.
    pub axis_gate_level: u64,
    /// Power used in the censoring decay check.
    pub censor_power: f64,
    /// `j` range of the entry-law exponent fit.
    pub exponent_range: [u64; 2],
    pub cone_k: u64,
    pub axis_max: u64,
    pub walk_n: u64,
}

impl Default for Probes {
    fn default() -> Self {
        Self {
            target_y: 64,
            tail_levels: vec![8, 16, 32, 64, 128],
            meander_s: 1.0,
            meander_a: [0.5, 0.5],
            split_ybar: 4,
            joint_points: vec![4, 16],
            joint_bins: vec![[64, 128], [256, 512], [1024, 2048]],
            axis_levels: vec![10, 30, 100, 300],
            axis_gate_level: 100,
            censor_power: 6.0,
            exponent_range: [8, 32],
            cone_k: 30,
            axis_max: 10,
            walk_n: 64,
        }
    }
}

/// Verdict policy. The walk only has asymptotics, so these are choices of
/// the harness and are echoed with every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub level: f64,
    pub eta_tail_rel: f64,
    pub exit_local_rel: f64,
    pub exit_joint_rel: f64,
    pub truncmean_rel: f64,
    pub meander_rel: f64,
    pub axis_mean_rel: f64,
    pub exponent_abs: f64,
    pub constants_rel: f64,
    pub lln_rel: f64,
    pub p_value: f64,
    pub roundtrip: f64,
    pub dual_route_ks: f64,
    pub bound_slope_slack: f64,
    pub min_expected: f64,
    pub trends_fatal: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            level: 0.95,
            eta_tail_rel: 0.05,
            exit_local_rel: 0.10,
            exit_joint_rel: 0.10,
            truncmean_rel: 0.15,
            meander_rel: 0.10,
            axis_mean_rel: 0.05,
            exponent_abs: 0.5,
            constants_rel: 0.02,
            lln_rel: 0.20,
            p_value: 1e-3,
            roundtrip: 1e-4,
            dual_route_ks: 0.01,
            bound_slope_slack: 0.25,
            min_expected: 5.0,
            trends_fatal: false,
        }
    }
}

fn default_alpha() -> f64 {
    4.0
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_interval() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub start: Option<LatticePoint>,
    #[serde(default)]
    pub replicas: Option<u64>,
    /// `k`, `m` or `n` values depending on the scenario.
    #[serde(default)]
    pub horizons: Option<Vec<u64>>,
    /// Step cap of cone-exit and axis samples.
    #[serde(default)]
    pub cap: Option<u64>,
    /// Entrance-indexed ladder used next to the time ladder in `lln-Nn`.
    #[serde(default)]
    pub secondary: Option<PhaseSize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub fixed_point: FixedPointOptions,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub probes: Probes,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Output directory; nothing is written when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "default_interval")]
    pub checkpoint_interval_secs: f64,
    /// Save and stop once this many sweep blocks have run in this process.
    #[serde(default)]
    pub stop_after_blocks: Option<u64>,
}

const N_LADDER: [u64; 4] = [100_000, 1_000_000, 10_000_000, 100_000_000];
const M_LADDER: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];

impl ExperimentConfig {
    /// A config with every optional field left to its default.
    pub fn new(scenario: &str, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            seed,
            alpha: default_alpha(),
            start: None,
            replicas: None,
            horizons: None,
            cap: None,
            secondary: None,
            epsilon: default_epsilon(),
            truncation: Truncation::default(),
            fixed_point: FixedPointOptions::default(),
            grids: Grids::default(),
            probes: Probes::default(),
            thresholds: Thresholds::default(),
            output: None,
            checkpoint: None,
            checkpoint_interval_secs: default_interval(),
            stop_after_blocks: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kind(&self) -> Result<Scenario> {
        Scenario::parse(&self.scenario)
    }

    /// Fill every scenario-dependent default so the echo is complete.
    pub fn materialized(&self) -> Result<Self> {
        let kind = self.kind()?;
        let mut c = self.clone();
        let (start, replicas, horizons): (LatticePoint, u64, Vec<u64>) = match kind {
            Scenario::EtaTail => (LatticePoint::new(1, 1), 10_000_000, vec![4096]),
            Scenario::EtaTruncMean => (LatticePoint::new(1, 1), 10_000_000, vec![10_000, 100_000, 1_000_000]),
            Scenario::ExitPosition => (LatticePoint::new(1, 1), 100_000_000, vec![]),
            Scenario::ExitJoint => (LatticePoint::new(1, 1), 10_000_000, vec![256, 1024]),
            Scenario::Meander => (LatticePoint::new(1, 1), 10_000_000, vec![10_000]),
            Scenario::AxisRho => (LatticePoint::new(10, 0), 1_000_000, vec![100, 1_000, 10_000]),
            Scenario::EntryLaw | Scenario::Constants => (LatticePoint::new(1, 1), 16, vec![100_000]),
            Scenario::LlnNn | Scenario::Theorem2 | Scenario::Theorem1 | Scenario::AxisNegligible => {
                (LatticePoint::new(1, 1), 100, N_LADDER.to_vec())
            }
            Scenario::RhoSecondOrder | Scenario::ScaleBounds => (LatticePoint::new(1, 1), 200, M_LADDER.to_vec()),
            Scenario::OracleCrosscheck => (LatticePoint::new(1, 1), 1_000_000, vec![]),
        };
        c.start.get_or_insert(start);
        c.replicas.get_or_insert(replicas);
        c.horizons.get_or_insert(horizons);
        let top = c.horizons.as_ref().and_then(|h| h.last().copied());
        let cap = match kind {
            Scenario::EtaTail | Scenario::EtaTruncMean => top,
            Scenario::ExitPosition | Scenario::ExitJoint => Some(1 << 20),
            Scenario::Meander => top.map(|m| (c.probes.meander_s * m as f64).floor() as u64),
            Scenario::AxisRho => top.map(|m| m + 1),
            _ => None,
        };
        if c.cap.is_none() {
            c.cap = cap;
        }
        if kind == Scenario::LlnNn && c.secondary.is_none() {
            c.secondary = Some(PhaseSize {
                replicas: 200,
                horizons: M_LADDER.to_vec(),
            });
        }
        Ok(c)
    }

    /// Check a materialized config.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        ModelParams::new(self.alpha)?;
        let bad = |m: String| Err(Error::Config(m));
        let replicas = self.replicas.unwrap_or(1);
        if replicas == 0 {
            return bad("replicas must be >= 1".into());
        }
        check_ladder("horizons", self.horizons.as_deref().unwrap_or(&[]))?;
        if let Some(s) = &self.secondary {
            if s.replicas == 0 {
                return bad("secondary replicas must be >= 1".into());
            }
            check_ladder("secondary horizons", &s.horizons)?;
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad(format!("epsilon must lie in (0, 1/2), got {}", self.epsilon));
        }
        if let Some(0) = self.cap {
            return bad("cap must be >= 1".into());
        }
        if let Some(start) = self.start {
            let region = classify(start);
            if kind.starts_in_cone() && region != RegionClass::Cone {
                return bad(format!("{} needs a start in the cone, got {start}", kind.name()));
            }
            if kind.starts_on_axis() && region != RegionClass::Axis {
                return bad(format!("{} needs a start on an axis, got {start}", kind.name()));
            }
        }
        let needs_horizon = !matches!(kind, Scenario::ExitPosition | Scenario::OracleCrosscheck);
        if needs_horizon && self.horizons.as_ref().is_some_and(|h| h.is_empty()) {
            return bad(format!("{} needs at least one horizon", kind.name()));
        }
        if let (Some(cap), Some(top)) = (self.cap, self.horizons.as_ref().and_then(|h| h.last())) {
            if matches!(kind, Scenario::EtaTail | Scenario::EtaTruncMean) && cap < *top {
                return bad("cap must cover the largest horizon".into());
            }
        }
        if !(self.grids.s_lo > 0.0 && self.grids.s_hi > self.grids.s_lo && self.grids.s_points >= 8) {
            return bad("invalid s-grid".into());
        }
        if self.grids.lambda.iter().any(|&l| !(l > 0.0)) {
            return bad("lambda grid must be positive".into());
        }
        if !(self.thresholds.level > 0.0 && self.thresholds.level < 1.0) {
            return bad("confidence level must lie in (0, 1)".into());
        }
        Ok(())
    }

    /// The config with fields that do not affect results cleared.
    pub fn result_relevant(&self) -> Self {
        let mut c = self.clone();
        c.output = None;
        c.checkpoint = None;
        c.checkpoint_interval_secs = default_interval();
        c.stop_after_blocks = None;
        c
    }

    /// SHA-256 of the result-relevant part of the config.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.result_relevant()).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

fn check_ladder(what: &str, h: &[u64]) -> Result<()> {
    if h.iter().any(|&v| v == 0) {
        return Err(Error::Config(format!("{what} must be positive")));
    }
    if h.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("{what} must be increasing")));
    }
    Ok(())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_round_trips_names() {
        for s in Scenario::ALL {
            assert_eq!(Scenario::parse(s.name()).unwrap(), s);
        }
        assert!(matches!(Scenario::parse("nope"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn defaults_are_materialized() {
        let c = ExperimentConfig::new("eta-tail", 7).materialized().unwrap();
        assert_eq!(c.replicas, Some(10_000_000));
        assert_eq!(c.horizons, Some(vec![4096]));
        assert_eq!(c.cap, Some(4096));
        c.validate().unwrap();
        let l = ExperimentConfig::new("lln-Nn", 7).materialized().unwrap();
        assert_eq!(l.secondary.unwrap().horizons.len(), 4);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = ExperimentConfig::new("eta-truncmean", 1);
        c.horizons = Some(vec![100, 10]);
        assert!(c.materialized().unwrap().validate().is_err());
        let mut c = ExperimentConfig::new("eta-tail", 1);
        c.replicas = Some(0);
        assert!(c.materialized().unwrap().validate().is_err());
        let mut c = ExperimentConfig::new("axis-rho", 1);
        c.start = Some(LatticePoint::new(2, 3));
        assert!(c.materialized().unwrap().validate().is_err());
        let text = r#"{"scenario":"eta-tail","seed":1,"bogus":3}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn hash_ignores_output_paths_only() {
        let a = ExperimentConfig::new("eta-tail", 1);
        let mut b = a.clone();
        b.output = Some("/tmp/x".into());
        b.checkpoint_interval_secs = 5.0;
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
