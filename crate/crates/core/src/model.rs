//! Lattice geometry and the one-step kernel of the axis-driven walk.
//!
//! Off the axes the walk is simple symmetric. On a half-axis at distance
//! `i` from the origin it steps outward and to each side with probability
//! `1/(4 i^alpha)` and inward with the remaining mass. The origin is uniform.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Bias exponent of the restoring force along the axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    alpha: f64,
}

impl ModelParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The limit theorems all require `alpha > 3`.
    pub fn theorem_regime(&self) -> bool {
        self.alpha > 3.0
    }

    /// Probability of each of the three non-inward moves from an axis point
    /// at distance `i >= 1` from the origin.
    ///
    /// Returns zero once `3/(4 i^alpha)` drops below `2^-60`; the inward move
    /// is then certain.
    pub fn axis_escape_probability(&self, i: u64) -> f64 {
        debug_assert!(i >= 1);
        let p = 0.25 / (i as f64).powf(self.alpha);
        if 3.0 * p < ESCAPE_FLOOR {
            0.0
        } else {
            p
        }
    }
}

const ESCAPE_FLOOR: f64 = 1.0 / (1u64 << 60) as f64;

/// A point of the square lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub x1: i64,
    pub x2: i64,
}

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint { x1: 0, x2: 0 };

    #[inline]
    pub const fn new(x1: i64, x2: i64) -> Self {
        Self { x1, x2 }
    }

    #[inline]
    pub fn classify(self) -> RegionClass {
        classify(self)
    }

    #[inline]
    pub fn sup_norm(self) -> u64 {
        sup_norm(self)
    }

    #[inline]
    pub fn offset(self, dir: Direction) -> Self {
        let (d1, d2) = dir.delta();
        Self::new(self.x1 + d1, self.x2 + d2)
    }

    /// Componentwise absolute value.
    pub fn abs(self) -> Self {
        Self::new(self.x1.abs(), self.x2.abs())
    }

    pub fn swapped(self) -> Self {
        Self::new(self.x2, self.x1)
    }

    /// Quadrant index 0..4 counter-clockwise from the open first quadrant,
    /// `None` on the axes.
    pub fn quadrant(self) -> Option<usize> {
        match (self.x1.signum(), self.x2.signum()) {
            (1, 1) => Some(0),
            (-1, 1) => Some(1),
            (-1, -1) => Some(2),
            (1, -1) => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x1, self.x2)
    }
}

/// Cone `K` (both coordinates nonzero), the punctured axes, or the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionClass {
    Cone,
    Axis,
    Origin,
}

impl RegionClass {
    /// True on the axes including the origin, i.e. on `K^c`.
    #[inline]
    pub fn off_cone(self) -> bool {
        !matches!(self, RegionClass::Cone)
    }
}

#[inline]
pub fn classify(p: LatticePoint) -> RegionClass {
    match (p.x1 == 0, p.x2 == 0) {
        (false, false) => RegionClass::Cone,
        (true, true) => RegionClass::Origin,
        _ => RegionClass::Axis,
    }
}

#[inline]
pub fn sup_norm(p: LatticePoint) -> u64 {
    p.x1.unsigned_abs().max(p.x2.unsigned_abs())
}

/// Points of the cone one step away from the axes; the support of the
/// entrance positions.
#[inline]
pub fn is_entrance_boundary(p: LatticePoint) -> bool {
    classify(p) == RegionClass::Cone && p.x1.unsigned_abs().min(p.x2.unsigned_abs()) == 1
}

/// Unit steps in the fixed partition order used by [`StepDistribution`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    PlusE1,
    MinusE1,
    PlusE2,
    MinusE2,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::PlusE1,
        Direction::MinusE1,
        Direction::PlusE2,
        Direction::MinusE2,
    ];

    #[inline]
    pub const fn delta(self) -> (i64, i64) {
        match self {
            Direction::PlusE1 => (1, 0),
            Direction::MinusE1 => (-1, 0),
            Direction::PlusE2 => (0, 1),
            Direction::MinusE2 => (0, -1),
        }
    }

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }
}

/// Probabilities of the four unit steps, indexed in [`Direction::ALL`] order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    pub probs: [f64; 4],
}

impl StepDistribution {
    pub const UNIFORM: StepDistribution = StepDistribution { probs: [0.25; 4] };

    #[inline]
    pub fn prob(&self, dir: Direction) -> f64 {
        self.probs[dir.index()]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Pick the step whose cell of the partition of `[0,1)` contains `u`.
    #[inline]
    pub fn select(&self, u: f64) -> Direction {
        let mut acc = self.probs[0];
        if u < acc {
            return Direction::PlusE1;
        }
        acc += self.probs[1];
        if u < acc {
            return Direction::MinusE1;
        }
        acc += self.probs[2];
        if u < acc {
            return Direction::PlusE2;
        }
        Direction::MinusE2
    }
}

pub fn transition_distribution(params: &ModelParams, p: LatticePoint) -> StepDistribution {
    match classify(p) {
        RegionClass::Cone | RegionClass::Origin => StepDistribution::UNIFORM,
        RegionClass::Axis => {
            let coord = if p.x2 == 0 { p.x1 } else { p.x2 };
            let out = params.axis_escape_probability(coord.unsigned_abs());
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
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64) -> ModelParams {
        ModelParams::new(alpha).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(LatticePoint::new(0, 5)), RegionClass::Axis);
        assert_eq!(classify(LatticePoint::new(0, 0)), RegionClass::Origin);
        assert_eq!(classify(LatticePoint::new(-1, 2)), RegionClass::Cone);
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(sup_norm(LatticePoint::new(-3, 2)), 3);
        assert_eq!(sup_norm(LatticePoint::new(0, 0)), 0);
        assert_eq!(sup_norm(LatticePoint::new(7, -7)), 7);
    }

    #[test]
    fn entrance_boundary_examples() {
        assert!(is_entrance_boundary(LatticePoint::new(1, 1)));
        assert!(is_entrance_boundary(LatticePoint::new(2, 1)));
        assert!(!is_entrance_boundary(LatticePoint::new(2, 2)));
        assert!(!is_entrance_boundary(LatticePoint::new(2, 0)));
        assert!(is_entrance_boundary(LatticePoint::new(-5, -1)));
    }

    #[test]
    fn axis_kernel_at_two_alpha_four() {
        let d = transition_distribution(&params(4.0), LatticePoint::new(2, 0));
        assert_eq!(d.prob(Direction::PlusE1), 1.0 / 64.0);
        assert_eq!(d.prob(Direction::PlusE2), 1.0 / 64.0);
        assert_eq!(d.prob(Direction::MinusE2), 1.0 / 64.0);
        assert_eq!(d.prob(Direction::MinusE1), 61.0 / 64.0);
    }

    #[test]
    fn origin_and_cone_are_uniform() {
        for alpha in [0.0, 1.5, 4.0, 10.0] {
            let p = params(alpha);
            assert_eq!(transition_distribution(&p, LatticePoint::ORIGIN), StepDistribution::UNIFORM);
            assert_eq!(
                transition_distribution(&p, LatticePoint::new(3, -2)),
                StepDistribution::UNIFORM
            );
            // i = 1 is uniform whatever alpha is
            assert_eq!(
                transition_distribution(&p, LatticePoint::new(0, -1)),
                StepDistribution::UNIFORM
            );
        }
    }

    #[test]
    fn negative_half_axes_point_inward() {
        let d = transition_distribution(&params(4.0), LatticePoint::new(0, -2));
        assert_eq!(d.prob(Direction::PlusE2), 61.0 / 64.0);
        assert_eq!(d.prob(Direction::MinusE2), 1.0 / 64.0);
        let d = transition_distribution(&params(4.0), LatticePoint::new(-3, 0));
        assert_eq!(d.prob(Direction::PlusE1), 1.0 - 3.0 / 324.0);
    }

    #[test]
    fn far_axis_points_clamp_to_inward() {
        let d = transition_distribution(&params(4.0), LatticePoint::new(1 << 20, 0));
        assert_eq!(d.prob(Direction::MinusE1), 1.0);
        assert_eq!(d.prob(Direction::PlusE1), 0.0);
    }

    #[test]
    fn rejects_negative_alpha() {
        assert!(ModelParams::new(-0.1).is_err());
        assert!(ModelParams::new(f64::NAN).is_err());
        assert!(!params(3.0).theorem_regime());
        assert!(params(3.5).theorem_regime());
    }
}
