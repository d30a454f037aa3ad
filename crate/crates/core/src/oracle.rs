//! Exact computations on truncated instances.
//!
//! Cone exits come from the killed simple-random-walk transition kernel,
//! axis absorption from tridiagonal solves, and the entrance kernel and its
//! invariant law are assembled from the two. Every answer carries a
//! [`MassLedger`] with the probability lost to truncation.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{
    classify, is_entrance_boundary, transition_distribution, Direction, LatticePoint, ModelParams,
    RegionClass,
};
use crate::quad::GaussRule;
use crate::stats::CompensatedSum;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;

/// Largest horizon accepted by [`quadrant_exit_dp`].
pub const EXIT_DP_BOUND: u64 = 2048;
/// Largest horizon accepted by [`walk_law_dp`].
pub const WALK_DP_BOUND: u64 = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassLedger {
    pub retained: f64,
    pub lost_to_truncation: f64,
    pub horizon: Option<u64>,
    pub radius: Option<u64>,
    pub note: String,
}

impl MassLedger {
    pub fn from_retained(retained: f64, horizon: Option<u64>, radius: Option<u64>, note: &str) -> Self {
        Self {
            retained,
            lost_to_truncation: 1.0 - retained,
            horizon,
            radius,
            note: note.to_string(),
        }
    }

    pub fn balance_error(&self) -> f64 {
        (self.retained + self.lost_to_truncation - 1.0).abs()
    }
}

#[inline]
fn sign(v: i64) -> i64 {
    if v < 0 {
        -1
    } else {
        1
    }
}

// ---------------------------------------------------------------------------
// cone exit by dynamic programming

/// Joint law of `(eta, X_eta)` for `eta <= k_max`.
#[derive(Clone, Debug)]
pub struct ExitTable {
    pub start: LatticePoint,
    pub k_max: u64,
    exits: Vec<Vec<(LatticePoint, f64)>>,
    survival: Vec<f64>,
    pub ledger: MassLedger,
}

impl ExitTable {
    /// `P_x(eta = k, X_eta = y)`.
    pub fn prob(&self, k: u64, y: LatticePoint) -> f64 {
        if k == 0 || k > self.k_max {
            return 0.0;
        }
        self.exits[k as usize - 1]
            .iter()
            .find(|(p, _)| *p == y)
            .map_or(0.0, |e| e.1)
    }

    /// Nonzero exit masses at time `k`.
    pub fn at_time(&self, k: u64) -> &[(LatticePoint, f64)] {
        &self.exits[k as usize - 1]
    }

    /// `P_x(eta > k)` for `k <= k_max`.
    pub fn survival(&self, k: u64) -> f64 {
        self.survival[k as usize]
    }

    pub fn time_marginal(&self, k: u64) -> f64 {
        self.at_time(k).iter().map(|e| e.1).sum()
    }

    /// `P_x(X_eta = y, eta <= k_max)`.
    pub fn position_marginal(&self) -> BTreeMap<LatticePoint, f64> {
        let mut out = BTreeMap::new();
        for row in &self.exits {
            for (p, v) in row {
                *out.entry(*p).or_insert(0.0) += v;
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, LatticePoint, f64)> + '_ {
        self.exits
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().map(move |(p, v)| (k as u64 + 1, *p, *v)))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table_csv(
            out,
            self.iter().map(|(k, y, v)| (self.start.to_string(), format!("{k}:{y}"), v)),
            &self.ledger,
        )
    }
}

pub fn quadrant_exit_dp(x: LatticePoint, k_max: u64) -> Result<ExitTable> {
    quadrant_exit_dp_bounded(x, k_max, EXIT_DP_BOUND)
}

/// Pushes the simple-random-walk mass from `x`, killing it on the axes.
/// The box grows with the reachable set, so nothing is lost spatially.
pub fn quadrant_exit_dp_bounded(x: LatticePoint, k_max: u64, bound: u64) -> Result<ExitTable> {
    if classify(x) != RegionClass::Cone {
        return Err(Error::WrongRegion(x, "cone"));
    }
    if k_max == 0 || k_max > bound {
        return Err(Error::InvalidParameter(format!(
            "k_max must be in 1..={bound}, got {k_max}"
        )));
    }
    let (s1, s2) = (sign(x.x1), sign(x.x2));
    let a = x.x1.unsigned_abs() as usize;
    let b = x.x2.unsigned_abs() as usize;
    let k = k_max as usize;
    let w = a + k + 2;
    let h = b + k + 2;
    let mut cur = vec![0.0f64; w * h];
    let mut next = vec![0.0f64; w * h];
    cur[a * h + b] = 1.0;
    let mut exits = Vec::with_capacity(k);
    let mut survival = Vec::with_capacity(k + 1);
    survival.push(1.0);
    let mut exited = CompensatedSum::default();
    for step in 1..=k {
        let i_lo = a.saturating_sub(step - 1).max(1);
        let i_hi = a + step - 1;
        let j_lo = b.saturating_sub(step - 1).max(1);
        let j_hi = b + step - 1;
        let mut row = Vec::new();
        if i_lo == 1 {
            for j in j_lo..=j_hi {
                let m = cur[h + j];
                if m != 0.0 {
                    row.push((LatticePoint::new(0, s2 * j as i64), 0.25 * m));
                }
            }
        }
        if j_lo == 1 {
            for i in i_lo..=i_hi {
                let m = cur[i * h + 1];
                if m != 0.0 {
                    row.push((LatticePoint::new(s1 * i as i64, 0), 0.25 * m));
                }
            }
        }
        row.sort_by_key(|e| e.0);
        let mut alive = CompensatedSum::default();
        let (ni_lo, ni_hi) = (a.saturating_sub(step).max(1), a + step);
        let (nj_lo, nj_hi) = (b.saturating_sub(step).max(1), b + step);
        for i in ni_lo..=ni_hi {
            let base = i * h;
            for j in nj_lo..=nj_hi {
                let v = 0.25
                    * (cur[base - h + j] + cur[base + h + j] + cur[base + j - 1] + cur[base + j + 1]);
                next[base + j] = v;
                alive.add(v);
            }
        }
        // the killed layer must stay empty
        for j in 0..h {
            next[j] = 0.0;
        }
        for i in 0..w {
            next[i * h] = 0.0;
        }
        std::mem::swap(&mut cur, &mut next);
        for e in &row {
            exited.add(e.1);
        }
        exits.push(row);
        survival.push(alive.value());
    }
    let lost = survival[k];
    let ledger = MassLedger {
        retained: exited.value(),
        lost_to_truncation: lost,
        horizon: Some(k_max),
        radius: None,
        note: "lost = P(eta > k_max)".into(),
    };
    Ok(ExitTable {
        start: x,
        k_max,
        exits,
        survival,
        ledger,
    })
}

// ---------------------------------------------------------------------------
// exit-position marginals from the killed kernel

/// `P_x(X_eta = z)` for boundary points `x` with `x̄ <= radius` and axis
/// points `z` with `z̄ <= axis_len`.
///
/// Times up to `k_max` are summed exactly from the image formula for the
/// walk killed on the axes; later times use the Brownian killed heat kernel.
#[derive(Clone, Debug)]
pub struct ExitMarginals {
    pub radius: u64,
    pub axis_len: u64,
    pub k_max: u64,
    // [(j-1)*L + (z-1)]: from (j,1) to (z,0) and to (0,z)
    along_exact: Vec<f64>,
    across_exact: Vec<f64>,
    along_tail: Vec<f64>,
    across_tail: Vec<f64>,
    row_lost: Vec<f64>,
    pub ledger: MassLedger,
}

impl ExitMarginals {
    pub fn compute(radius: u64, axis_len: u64, k_max: u64) -> Result<Self> {
        Self::build(radius, axis_len, k_max, true)
    }

    /// Only the exact times `eta <= k_max`, no tail completion.
    pub fn exact_only(radius: u64, axis_len: u64, k_max: u64) -> Result<Self> {
        Self::build(radius, axis_len, k_max, false)
    }

    fn build(radius: u64, axis_len: u64, k_max: u64, complete: bool) -> Result<Self> {
        if radius < 1 || axis_len < 1 || k_max < 1 {
            return Err(Error::InvalidParameter("exit marginal truncations must be >= 1".into()));
        }
        let (r, l, kk) = (radius as usize, axis_len as usize, k_max as usize);
        let mut along = vec![0.0; r * l];
        let mut across = vec![0.0; r * l];
        // row[u + kk] = P(u-walk at u after k steps)
        let mut row = vec![0.0; 2 * kk + 5];
        let mut tmp = row.clone();
        let off = kk as i64 + 2;
        row[off as usize] = 1.0;
        for k in 0..kk {
            let bk = |u: i64| -> f64 {
                let idx = u + off;
                if idx < 0 || idx as usize >= row.len() {
                    0.0
                } else {
                    row[idx as usize]
                }
            };
            let p = |d1: i64, d2: i64| bk(d1 + d2) * bk(d1 - d2);
            for j in 1..=r {
                let ji = j as i64;
                let z_hi = l.min(j + k + 2);
                for z in 1..=z_hi {
                    let zi = z as i64;
                    if (k as i64 + ji - zi) % 2 != 0 {
                        continue;
                    }
                    let pa = p(ji - zi, 0) - p(ji + zi, 0) - p(ji - zi, 2) + p(ji + zi, 2);
                    let pc = p(ji - 1, 1 - zi) - p(ji + 1, 1 - zi) - p(ji - 1, 1 + zi)
                        + p(ji + 1, 1 + zi);
                    along[(j - 1) * l + z - 1] += 0.25 * pa;
                    across[(j - 1) * l + z - 1] += 0.25 * pc;
                }
            }
            for u in 1..row.len() - 1 {
                tmp[u] = 0.5 * (row[u - 1] + row[u + 1]);
            }
            tmp[0] = 0.0;
            let last = row.len() - 1;
            tmp[last] = 0.0;
            std::mem::swap(&mut row, &mut tmp);
        }
        let mut along_tail = vec![0.0; r * l];
        let mut across_tail = vec![0.0; r * l];
        if complete {
            let rule = GaussRule::new(16);
            for j in 1..=r {
                for z in 1..=l {
                    let (ji, zi) = (j as i64, z as i64);
                    // first later index k >= k_max with the right parity
                    let k0 = if (kk as i64 + ji - zi) % 2 == 0 { kk } else { kk + 1 };
                    let lower = (k0 - 1).max(1) as f64;
                    along_tail[(j - 1) * l + z - 1] =
                        killed_heat_tail((ji, 1), (zi, 1), lower, &rule);
                    across_tail[(j - 1) * l + z - 1] =
                        killed_heat_tail((ji, 1), (1, zi), lower, &rule);
                }
            }
        }
        let mut row_lost = Vec::with_capacity(r);
        for j in 0..r {
            let mut s = CompensatedSum::default();
            for z in 0..l {
                let i = j * l + z;
                s.add(along[i]);
                s.add(across[i]);
                s.add(along_tail[i]);
                s.add(across_tail[i]);
            }
            row_lost.push(1.0 - s.value());
        }
        let worst = row_lost.iter().copied().fold(0.0f64, f64::max);
        let ledger = MassLedger::from_retained(
            1.0 - worst,
            Some(k_max),
            Some(axis_len),
            if complete {
                "worst source row; times > k_max from the Brownian killed kernel"
            } else {
                "worst source row; times > k_max dropped"
            },
        );
        Ok(Self {
            radius,
            axis_len,
            k_max,
            along_exact: along,
            across_exact: across,
            along_tail,
            across_tail,
            row_lost,
            ledger,
        })
    }

    /// Reduce `(x, z)` to a source `(j,1)` and a slot in the along/across
    /// tables.
    fn locate(&self, x: LatticePoint, z: LatticePoint) -> Option<(bool, usize)> {
        if !is_entrance_boundary(x) || !classify(z).off_cone() || z == LatticePoint::ORIGIN {
            return None;
        }
        let (s1, s2) = (sign(x.x1), sign(x.x2));
        let xa = x.abs();
        let mut zq = LatticePoint::new(s1 * z.x1, s2 * z.x2);
        if zq.x1 < 0 || zq.x2 < 0 {
            return None;
        }
        let j = if xa.x2 == 1 {
            xa.x1
        } else {
            zq = zq.swapped();
            xa.x2
        };
        if j as u64 > self.radius {
            return None;
        }
        let (is_along, zz) = if zq.x2 == 0 { (true, zq.x1) } else { (false, zq.x2) };
        if zz as u64 > self.axis_len {
            return None;
        }
        Some((is_along, (j as usize - 1) * self.axis_len as usize + zz as usize - 1))
    }

    pub fn prob(&self, x: LatticePoint, z: LatticePoint) -> f64 {
        match self.locate(x, z) {
            Some((true, i)) => self.along_exact[i] + self.along_tail[i],
            Some((false, i)) => self.across_exact[i] + self.across_tail[i],
            None => 0.0,
        }
    }

    /// Contribution of `eta <= k_max` only.
    pub fn exact_prob(&self, x: LatticePoint, z: LatticePoint) -> f64 {
        match self.locate(x, z) {
            Some((true, i)) => self.along_exact[i],
            Some((false, i)) => self.across_exact[i],
            None => 0.0,
        }
    }

    /// Exit law from `(j,1)` onto the positive first axis, `z = 1..=L`.
    pub fn along(&self, j: u64) -> Vec<f64> {
        let l = self.axis_len as usize;
        let b = (j as usize - 1) * l;
        (0..l).map(|z| self.along_exact[b + z] + self.along_tail[b + z]).collect()
    }

    /// Exit law from `(j,1)` onto the positive second axis, `z = 1..=L`.
    pub fn across(&self, j: u64) -> Vec<f64> {
        let l = self.axis_len as usize;
        let b = (j as usize - 1) * l;
        (0..l).map(|z| self.across_exact[b + z] + self.across_tail[b + z]).collect()
    }

    /// Exit mass beyond the axis truncation (plus completion error) from
    /// boundary point `x`.
    pub fn row_lost(&self, x: LatticePoint) -> f64 {
        let a = x.abs();
        let j = if a.x2 == 1 { a.x1 } else { a.x2 };
        self.row_lost[j as usize - 1]
    }
}

/// `(1/4) sum_{k >= lower} p^Q_k(x, y)` with the lattice kernel replaced by
/// the Brownian one (variance `t/2` per coordinate), integrated in `u = 1/t`.
fn killed_heat_tail(x: (i64, i64), y: (i64, i64), lower: f64, rule: &GaussRule) -> f64 {
    let near1 = ((x.0 - y.0) * (x.0 - y.0)) as f64;
    let far1 = ((x.0 + y.0) * (x.0 + y.0)) as f64;
    let near2 = ((x.1 - y.1) * (x.1 - y.1)) as f64;
    let far2 = ((x.1 + y.1) * (x.1 + y.1)) as f64;
    let f = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let a = -(-near1 * u).exp() * (-(far1 - near1) * u).exp_m1();
        let b = -(-near2 * u).exp() * (-(far2 - near2) * u).exp_m1();
        a * b / (PI * u)
    };
    let top = 1.0 / lower;
    let panels = (((near1 + near2) * top / 3.0).ceil() as usize + 1).clamp(1, 256);
    0.25 * rule.composite(0.0, top, panels, f)
}

// ---------------------------------------------------------------------------
// axis absorption

/// Index of the half-axis holding `z` (outward direction index) and the
/// distance to the origin.
fn half_axis(z: LatticePoint) -> Option<(usize, u64)> {
    match (z.x1.signum(), z.x2.signum()) {
        (1, 0) => Some((Direction::PlusE1.index(), z.x1 as u64)),
        (-1, 0) => Some((Direction::MinusE1.index(), z.x1.unsigned_abs())),
        (0, 1) => Some((Direction::PlusE2.index(), z.x2 as u64)),
        (0, -1) => Some((Direction::MinusE2.index(), z.x2.unsigned_abs())),
        _ => None,
    }
}

/// Axis points adjacent to a boundary point.
fn hosts(y: LatticePoint) -> impl Iterator<Item = (usize, u64)> {
    let a = (y.x2.abs() == 1).then(|| half_axis(LatticePoint::new(y.x1, 0))).flatten();
    let b = (y.x1.abs() == 1).then(|| half_axis(LatticePoint::new(0, y.x2))).flatten();
    a.into_iter().chain(b)
}

/// Linear-solve results for the chain on the axes, truncated at distance
/// `L` on each half-axis, absorbed on entering the cone.
#[derive(Clone, Debug)]
pub struct AxisAbsorption {
    params: ModelParams,
    len: usize,
    out: Vec<f64>,
    inward: Vec<f64>,
    // green[(i-1)*L + (j-1)]: from (i,0), hit (j,1) before the origin
    green: Vec<f64>,
    // from (i,0), reach the origin before absorption
    w: Vec<f64>,
    // expected steps before absorption or the origin
    v: Vec<f64>,
    coupling_den: f64,
    t_origin: f64,
    lost_origin: f64,
    pub max_residual: f64,
}

pub const SOLVE_RESIDUAL_LIMIT: f64 = 1e-8;

impl AxisAbsorption {
    pub fn axis_len(&self) -> u64 {
        self.len as u64
    }

    /// Tridiagonal solve of `u(i) - p_i u(i+1) - q_i u(i-1) = s(i)` on
    /// `1..=L` with `u(0) = left`, `u(L+1) = 0`; returns the solution and
    /// its residual.
    fn solve(&self, rhs: &[f64], left: f64) -> (Vec<f64>, f64) {
        let n = self.len;
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let sub = -self.inward[i];
            let sup = if i + 1 < n { -self.out[i] } else { 0.0 };
            let mut r = rhs[i];
            if i == 0 {
                r += self.inward[0] * left;
                c[0] = sup;
                d[0] = r;
            } else {
                let m = 1.0 - sub * c[i - 1];
                c[i] = sup / m;
                d[i] = (r - sub * d[i - 1]) / m;
            }
        }
        let mut u = vec![0.0; n];
        u[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            u[i] = d[i] - c[i] * u[i + 1];
        }
        let mut res = 0.0f64;
        for i in 0..n {
            let lo = if i == 0 { left } else { u[i - 1] };
            let hi = if i + 1 < n { u[i + 1] } else { 0.0 };
            let r = u[i] - self.out[i] * hi - self.inward[i] * lo - rhs[i];
            res = res.max(r.abs());
        }
        (u, res)
    }

    fn green(&self, i: u64, j: u64) -> f64 {
        self.green[(i as usize - 1) * self.len + j as usize - 1]
    }

    /// Probability that the next entrance from the origin is through
    /// `(j,1)` on a given side, counting one host.
    fn via_origin(&self, j: u64) -> f64 {
        self.green(1, j) / self.coupling_den
    }

    /// `P_z(X_rho = y)` for `z` on the axes or the origin.
    pub fn entry_probability(&self, z: LatticePoint, y: LatticePoint) -> f64 {
        if !is_entrance_boundary(y) {
            return 0.0;
        }
        let start = half_axis(z);
        if let Some((_, i)) = start {
            if i > self.len as u64 {
                return 0.0;
            }
        }
        let mut p = 0.0;
        for (axis, j) in hosts(y) {
            if j > self.len as u64 {
                continue;
            }
            let c = self.via_origin(j);
            match start {
                None => p += c,
                Some((a, i)) => {
                    if a == axis {
                        p += self.green(i, j);
                    }
                    p += self.w[i as usize - 1] * c;
                }
            }
        }
        p
    }

    /// Entry law from `z` over the given target states.
    pub fn entry_law(&self, z: LatticePoint, targets: &[LatticePoint]) -> Vec<f64> {
        targets.iter().map(|&y| self.entry_probability(z, y)).collect()
    }

    /// Mass that leaves through the outer end of a half-axis.
    pub fn lost(&self, z: LatticePoint) -> f64 {
        let l = self.len as u64;
        match half_axis(z) {
            None => self.lost_origin,
            Some((_, i)) if i > l => 1.0,
            Some((_, i)) => self.green(i, l) + self.w[i as usize - 1] * self.lost_origin,
        }
    }

    /// `E_z(rho)`.
    pub fn expected_rho(&self, z: LatticePoint) -> f64 {
        match half_axis(z) {
            None => self.t_origin,
            Some((_, i)) => {
                let i = i as usize;
                if i > self.len {
                    return f64::NAN;
                }
                self.v[i - 1] + self.t_origin * self.w[i - 1]
            }
        }
    }

    /// `E_z(rho 1{X_rho = y})`.
    pub fn expected_rho_on(&self, z: LatticePoint, y: LatticePoint) -> Result<f64> {
        if !is_entrance_boundary(y) {
            return Ok(0.0);
        }
        let n = self.len;
        let mut total_v1 = 0.0;
        let mut own = None;
        for a in 0..4 {
            let dir = Direction::ALL[a];
            let (d1, d2) = dir.delta();
            let h: Vec<f64> = (1..=n as i64)
                .map(|i| self.entry_probability(LatticePoint::new(d1 * i, d2 * i), y))
                .collect();
            let (va, res) = self.solve(&h, 0.0);
            if res > SOLVE_RESIDUAL_LIMIT {
                return Err(Error::IllConditioned { residual: res, limit: SOLVE_RESIDUAL_LIMIT });
            }
            total_v1 += va[0];
            if let Some((za, _)) = half_axis(z) {
                if za == a {
                    own = Some(va);
                }
            }
        }
        let h_origin = self.entry_probability(LatticePoint::ORIGIN, y);
        let g_origin = (h_origin + 0.25 * total_v1) / (1.0 - self.w[0]);
        Ok(match (half_axis(z), own) {
            (Some((_, i)), Some(va)) if (i as usize) <= n => {
                va[i as usize - 1] + g_origin * self.w[i as usize - 1]
            }
            (None, _) => g_origin,
            _ => f64::NAN,
        })
    }

    pub fn ledger(&self, z: LatticePoint) -> MassLedger {
        MassLedger::from_retained(
            1.0 - self.lost(z),
            None,
            Some(self.len as u64),
            "lost = outward step past the last axis site",
        )
    }
}

pub fn axis_absorption_solve(params: &ModelParams, axis_len: u64) -> Result<AxisAbsorption> {
    if axis_len < 2 {
        return Err(Error::InvalidParameter(format!("axis length must be >= 2, got {axis_len}")));
    }
    let n = axis_len as usize;
    let out: Vec<f64> = (1..=axis_len).map(|i| params.axis_escape_probability(i)).collect();
    let inward: Vec<f64> = out.iter().map(|p| 1.0 - 3.0 * p).collect();
    let mut solver = AxisAbsorption {
        params: *params,
        len: n,
        out,
        inward,
        green: Vec::new(),
        w: Vec::new(),
        v: Vec::new(),
        coupling_den: 0.0,
        t_origin: 0.0,
        lost_origin: 0.0,
        max_residual: 0.0,
    };
    let mut worst = 0.0f64;
    let (w, r) = solver.solve(&vec![0.0; n], 1.0);
    worst = worst.max(r);
    let (v, r) = solver.solve(&vec![1.0; n], 0.0);
    worst = worst.max(r);
    let mut green = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        rhs[j] = solver.out[j];
        let (u, r) = solver.solve(&rhs, 0.0);
        worst = worst.max(r);
        rhs[j] = 0.0;
        for i in 0..n {
            green[i * n + j] = u[i];
        }
    }
    if worst > SOLVE_RESIDUAL_LIMIT {
        return Err(Error::IllConditioned { residual: worst, limit: SOLVE_RESIDUAL_LIMIT });
    }
    solver.coupling_den = 4.0 * (1.0 - w[0]);
    solver.t_origin = (1.0 + v[0]) / (1.0 - w[0]);
    solver.lost_origin = 4.0 * green[n - 1] / solver.coupling_den;
    solver.green = green;
    solver.w = w;
    solver.v = v;
    solver.max_residual = worst;
    let _ = solver.params;
    Ok(solver)
}

/// `log P_z(rho > m)` at each mark, by pushing the axis mass forward with
/// renormalization so that values far below the double range stay exact.
/// Outward steps past `box_len` are reflected, which only raises survival.
pub fn axis_survival(params: &ModelParams, z: LatticePoint, marks: &[u64], box_len: u64) -> Result<Vec<(u64, f64)>> {
    if classify(z) == RegionClass::Cone {
        return Err(Error::WrongRegion(z, "axes"));
    }
    let n = box_len as usize;
    let start = half_axis(z);
    if let Some((_, i)) = start {
        if i as usize > n {
            return Err(Error::InvalidParameter("start beyond the survival box".into()));
        }
    }
    let out: Vec<f64> = (1..=box_len).map(|i| params.axis_escape_probability(i)).collect();
    // own half-axis, the other three lumped together, and the origin
    let mut own = vec![0.0; n + 1];
    let mut rest = vec![0.0; n + 1];
    let mut origin = 0.0;
    match start {
        Some((_, i)) => own[i as usize] = 1.0,
        None => origin = 1.0,
    }
    let mut log_scale = 0.0;
    let mut marks_sorted: Vec<u64> = marks.to_vec();
    marks_sorted.sort_unstable();
    let mut result = Vec::new();
    let mut mi = 0;
    let t_end = *marks_sorted.last().unwrap_or(&0);
    let mut nown = vec![0.0; n + 1];
    let mut nrest = vec![0.0; n + 1];
    for t in 1..=t_end {
        nown.iter_mut().for_each(|v| *v = 0.0);
        nrest.iter_mut().for_each(|v| *v = 0.0);
        let mut norig = 0.0;
        for (arr, narr, share) in [(&own, &mut nown, 0.25), (&rest, &mut nrest, 0.75)] {
            narr[1] += share * origin;
            for i in 1..=n {
                let m = arr[i];
                if m == 0.0 {
                    continue;
                }
                let p = out[i - 1];
                let q = 1.0 - 3.0 * p;
                if i == 1 {
                    norig += q * m;
                } else {
                    narr[i - 1] += q * m;
                }
                if i < n {
                    narr[i + 1] += p * m;
                } else {
                    narr[i] += p * m;
                }
            }
        }
        std::mem::swap(&mut own, &mut nown);
        std::mem::swap(&mut rest, &mut nrest);
        origin = norig;
        let total: f64 = own.iter().sum::<f64>() + rest.iter().sum::<f64>() + origin;
        if total == 0.0 {
            log_scale = f64::NEG_INFINITY;
        } else {
            log_scale += total.ln();
            own.iter_mut().for_each(|v| *v /= total);
            rest.iter_mut().for_each(|v| *v /= total);
            origin /= total;
        }
        while mi < marks_sorted.len() && marks_sorted[mi] == t {
            result.push((t, log_scale));
            mi += 1;
        }
    }
    while mi < marks_sorted.len() {
        result.push((marks_sorted[mi], 0.0));
        mi += 1;
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// entrance kernel and its invariant law

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub k_max: u64,
    pub axis_len: u64,
    pub radius: u64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            k_max: 2048,
            axis_len: 512,
            radius: 64,
        }
    }
}

/// Points of the entrance boundary with `x̄ <= radius`, sorted.
pub fn boundary_states(radius: u64) -> Vec<LatticePoint> {
    let r = radius as i64;
    let mut v = Vec::new();
    for s1 in [-1i64, 1] {
        for s2 in [-1i64, 1] {
            for j in 1..=r {
                v.push(LatticePoint::new(s1 * j, s2));
                if j > 1 {
                    v.push(LatticePoint::new(s1, s2 * j));
                }
            }
        }
    }
    v.sort();
    v
}

/// The entrance-to-entrance kernel `p†` on `∂K ∩ {x̄ <= R}`.
#[derive(Clone, Debug)]
pub struct EntryKernel {
    pub params: ModelParams,
    pub trunc: Truncation,
    states: Vec<LatticePoint>,
    index: HashMap<LatticePoint, usize>,
    matrix: Vec<f64>,
    row_lost: Vec<f64>,
    // sum_z P_x(X_eta = z) E_z(rho) for each state
    sojourn: Vec<f64>,
    pub sojourn_tail: f64,
    pub exits: ExitMarginals,
    pub axis: AxisAbsorption,
    pub ledger: MassLedger,
}

impl EntryKernel {
    pub fn states(&self) -> &[LatticePoint] {
        &self.states
    }

    pub fn index_of(&self, x: LatticePoint) -> Option<usize> {
        self.index.get(&x).copied()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.states.len();
        &self.matrix[i * n..(i + 1) * n]
    }

    pub fn prob(&self, x: LatticePoint, y: LatticePoint) -> f64 {
        match (self.index_of(x), self.index_of(y)) {
            (Some(i), Some(j)) => self.row(i)[j],
            _ => 0.0,
        }
    }

    pub fn row_lost(&self, i: usize) -> f64 {
        self.row_lost[i]
    }

    /// `E_x(E_{X_eta}(rho))` for state `i`.
    pub fn sojourn(&self, i: usize) -> f64 {
        self.sojourn[i]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states.len();
        let rows = (0..n).flat_map(|i| {
            (0..n).filter_map(move |j| {
                let v = self.matrix[i * n + j];
                (v != 0.0).then(|| (self.states[i].to_string(), self.states[j].to_string(), v))
            })
        });
        write_table_csv(out, rows, &self.ledger)
    }
}

pub fn entry_kernel(params: &ModelParams, trunc: Truncation) -> Result<EntryKernel> {
    if trunc.radius < 1 || trunc.axis_len < trunc.radius.max(2) || trunc.k_max < 1 {
        return Err(Error::InvalidParameter(format!("invalid truncation {trunc:?}")));
    }
    let exits = ExitMarginals::compute(trunc.radius, trunc.axis_len, trunc.k_max)?;
    let axis = axis_absorption_solve(params, trunc.axis_len)?;
    let states = boundary_states(trunc.radius);
    let n = states.len();
    let index: HashMap<LatticePoint, usize> = states.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let swap_idx: Vec<usize> = states.iter().map(|p| index[&p.swapped()]).collect();
    let l = trunc.axis_len as usize;
    // entry laws from (i,0), i = 1..=L
    let mut from_axis = vec![0.0; l * n];
    for i in 0..l {
        let z = LatticePoint::new(i as i64 + 1, 0);
        for (k, &y) in states.iter().enumerate() {
            from_axis[i * n + k] = axis.entry_probability(z, y);
        }
    }
    let rho_axis: Vec<f64> = (1..=l as i64)
        .map(|i| axis.expected_rho(LatticePoint::new(i, 0)))
        .collect();
    // exits beyond L: P(X_eta = z) ~ A/z^3 and E_z(rho) ~ E_L(rho) + z - L
    let big_l = l as f64;
    let rho_l = rho_axis[l - 1];
    let tail_sum = |last: f64| {
        let a = last * big_l.powi(3);
        let lo = big_l + 0.5;
        a * (1.0 / lo + (rho_l - big_l) / (2.0 * lo * lo))
    };
    // rows from (j,1), j = 1..=R
    let mut base_rows = Vec::with_capacity(trunc.radius as usize);
    let mut base_sojourn = Vec::with_capacity(trunc.radius as usize);
    let mut worst_tail = 0.0f64;
    for j in 1..=trunc.radius {
        let along = exits.along(j);
        let across = exits.across(j);
        let mut row = vec![0.0; n];
        for z in 0..l {
            let (pa, pc) = (along[z], across[z]);
            let h = &from_axis[z * n..(z + 1) * n];
            for k in 0..n {
                row[k] += pa * h[k] + pc * h[swap_idx[k]];
            }
        }
        let mut soj = CompensatedSum::default();
        for z in 0..l {
            soj.add((along[z] + across[z]) * rho_axis[z]);
        }
        let tail = tail_sum(along[l - 1]) + tail_sum(across[l - 1]);
        worst_tail = worst_tail.max(tail);
        soj.add(tail);
        base_rows.push(row);
        base_sojourn.push(soj.value());
    }
    let mut matrix = vec![0.0; n * n];
    let mut row_lost = vec![0.0; n];
    let mut sojourn = vec![0.0; n];
    for (i, &x) in states.iter().enumerate() {
        let (s1, s2) = (sign(x.x1), sign(x.x2));
        let q = x.abs();
        let (j, swapped) = if q.x2 == 1 { (q.x1, false) } else { (q.x2, true) };
        let base = &base_rows[j as usize - 1];
        let mut total = CompensatedSum::default();
        for (k, &y) in states.iter().enumerate() {
            let mut yq = LatticePoint::new(s1 * y.x1, s2 * y.x2);
            if swapped {
                yq = yq.swapped();
            }
            let v = base[index[&yq]];
            matrix[i * n + k] = v;
            total.add(v);
        }
        row_lost[i] = 1.0 - total.value();
        sojourn[i] = base_sojourn[j as usize - 1];
    }
    let worst = row_lost.iter().copied().fold(0.0f64, f64::max);
    let ledger = MassLedger::from_retained(
        1.0 - worst,
        Some(trunc.k_max),
        Some(trunc.radius),
        "worst row: exits past L, entries past R, axis leakage",
    );
    Ok(EntryKernel {
        params: *params,
        trunc,
        states,
        index,
        matrix,
        row_lost,
        sojourn,
        sojourn_tail: worst_tail,
        exits,
        axis,
        ledger,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Oracle,
    MonteCarlo,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationInfo {
    pub k_max: Option<u64>,
    pub axis_len: Option<u64>,
    pub radius: Option<u64>,
    pub tol: Option<f64>,
    pub weighted_loss: Option<f64>,
    pub kappa_tail: Option<f64>,
    pub samples: Option<u64>,
}

/// Constants of the renewal structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    pub c1: f64,
    pub kappa: f64,
    pub mean_pi_dagger: f64,
    pub gamma: f64,
    pub provenance: Provenance,
    pub truncation: TruncationInfo,
}

impl LimitConstants {
    pub fn new(mean_pi_dagger: f64, kappa: f64, provenance: Provenance, truncation: TruncationInfo) -> Result<Self> {
        let c = Self {
            c1: (PI / 8.0) / mean_pi_dagger,
            kappa,
            mean_pi_dagger,
            gamma: EULER_GAMMA,
            provenance,
            truncation,
        };
        c.validate()?;
        Ok(c)
    }

    /// Constants with prescribed `c1` and `kappa`.
    pub fn toy(kappa: f64, c1: f64) -> Self {
        Self {
            c1,
            kappa,
            mean_pi_dagger: (PI / 8.0) / c1,
            gamma: EULER_GAMMA,
            provenance: Provenance::Oracle,
            truncation: TruncationInfo::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.c1) || !ok(self.mean_pi_dagger) || !ok(self.gamma) || !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid constants {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub loss_bound: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            loss_bound: 1e-4,
        }
    }
}

/// Stationary entrance law with the constants derived from it.
#[derive(Clone, Debug)]
pub struct InvariantLaw {
    pub constants: LimitConstants,
    pub states: Vec<LatticePoint>,
    pub pi: Vec<f64>,
    pub iterations: usize,
    pub change: f64,
    pub weighted_loss: f64,
}

impl InvariantLaw {
    pub fn prob(&self, x: LatticePoint) -> f64 {
        self.states
            .binary_search(&x)
            .map_or(0.0, |i| self.pi[i])
    }

    pub fn table(&self) -> BTreeMap<LatticePoint, f64> {
        self.states.iter().copied().zip(self.pi.iter().copied()).collect()
    }

    /// Least-squares slope of `-log pi(j,1)` against `log j` for
    /// `j in lo..=hi`.
    pub fn tail_exponent(&self, lo: u64, hi: u64) -> f64 {
        let pts: Vec<(f64, f64)> = (lo..=hi)
            .map(|j| ((j as f64).ln(), self.prob(LatticePoint::new(j as i64, 1))))
            .filter(|(_, p)| *p > 0.0)
            .map(|(x, p)| (x, p.ln()))
            .collect();
        -least_squares_slope(&pts)
    }

    pub fn write_csv<W: Write>(&self, out: W, ledger: &MassLedger) -> Result<()> {
        write_table_csv(
            out,
            self.states.iter().zip(&self.pi).map(|(s, v)| ("pi".to_string(), s.to_string(), *v)),
            ledger,
        )
    }
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn invariant_fixed_point(kernel: &EntryKernel, opts: FixedPointOptions) -> Result<InvariantLaw> {
    let n = kernel.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let m = pi[i];
            if m == 0.0 {
                continue;
            }
            for (nv, p) in next.iter_mut().zip(kernel.row(i)) {
                *nv += m * p;
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        change = 0.5 * pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum::<f64>();
        std::mem::swap(&mut pi, &mut next);
        iterations += 1;
        if change < opts.tol {
            break;
        }
    }
    if change >= opts.tol {
        return Err(Error::NoConvergence { iterations, change });
    }
    let weighted_loss: f64 = (0..n).map(|i| pi[i] * kernel.row_lost(i)).sum();
    if weighted_loss > opts.loss_bound {
        return Err(Error::KernelTooLossy { lost: weighted_loss, limit: opts.loss_bound });
    }
    let mean: f64 = kernel.states().iter().zip(&pi).map(|(x, p)| x.sup_norm() as f64 * p).sum();
    let kappa: f64 = (0..n).map(|i| pi[i] * kernel.sojourn(i)).sum();
    let constants = LimitConstants::new(
        mean,
        kappa,
        Provenance::Oracle,
        TruncationInfo {
            k_max: Some(kernel.trunc.k_max),
            axis_len: Some(kernel.trunc.axis_len),
            radius: Some(kernel.trunc.radius),
            tol: Some(opts.tol),
            weighted_loss: Some(weighted_loss),
            kappa_tail: Some(kernel.sojourn_tail),
            samples: None,
        },
    )?;
    Ok(InvariantLaw {
        constants,
        states: kernel.states().to_vec(),
        pi,
        iterations,
        change,
        weighted_loss,
    })
}

// ---------------------------------------------------------------------------
// full walk law

#[derive(Clone, Debug)]
pub struct WalkLaw {
    pub n: u64,
    pub radius: u64,
    probs: Vec<f64>,
    pub ledger: MassLedger,
}

impl WalkLaw {
    fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    pub fn prob(&self, p: LatticePoint) -> f64 {
        let r = self.radius as i64;
        if p.x1.abs() > r || p.x2.abs() > r {
            return 0.0;
        }
        self.probs[(p.x1 + r) as usize * self.side() + (p.x2 + r) as usize]
    }

    pub fn support(&self) -> Vec<(LatticePoint, f64)> {
        let r = self.radius as i64;
        let s = self.side();
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (LatticePoint::new((k / s) as i64 - r, (k % s) as i64 - r), *v))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table_csv(
            out,
            self.support().into_iter().map(|(p, v)| (format!("n={}", self.n), p.to_string(), v)),
            &self.ledger,
        )
    }
}

/// Law of `X_n` from `(1,1)` under the full kernel, on the box
/// `[-radius, radius]^2`.
pub fn walk_law_dp(params: &ModelParams, n: u64, radius: u64) -> Result<WalkLaw> {
    walk_law_dp_from(params, n, radius, LatticePoint::new(1, 1))
}

pub fn walk_law_dp_from(params: &ModelParams, n: u64, radius: u64, start: LatticePoint) -> Result<WalkLaw> {
    if n > WALK_DP_BOUND {
        return Err(Error::InvalidParameter(format!("n must be <= {WALK_DP_BOUND}, got {n}")));
    }
    if radius <= n {
        return Err(Error::InvalidParameter(format!("box radius {radius} must exceed n = {n}")));
    }
    if start.sup_norm() > radius {
        return Err(Error::InvalidParameter("start outside the box".into()));
    }
    let r = radius as i64;
    let side = 2 * radius as usize + 1;
    let mut cur = vec![0.0f64; side * side];
    let mut next = vec![0.0f64; side * side];
    let at = |p: LatticePoint| (p.x1 + r) as usize * side + (p.x2 + r) as usize;
    cur[at(start)] = 1.0;
    let mut lost = CompensatedSum::default();
    for k in 0..n as i64 {
        let lo1 = (start.x1 - k).max(-r);
        let hi1 = (start.x1 + k).min(r);
        let lo2 = (start.x2 - k).max(-r);
        let hi2 = (start.x2 + k).min(r);
        for x1 in (lo1 - 1).max(-r)..=(hi1 + 1).min(r) {
            for x2 in (lo2 - 1).max(-r)..=(hi2 + 1).min(r) {
                next[at(LatticePoint::new(x1, x2))] = 0.0;
            }
        }
        for x1 in lo1..=hi1 {
            for x2 in lo2..=hi2 {
                let p = LatticePoint::new(x1, x2);
                let m = cur[at(p)];
                if m == 0.0 {
                    continue;
                }
                let d = transition_distribution(params, p);
                for dir in Direction::ALL {
                    let pr = d.prob(dir);
                    if pr == 0.0 {
                        continue;
                    }
                    let q = p.offset(dir);
                    if q.x1.abs() > r || q.x2.abs() > r {
                        lost.add(m * pr);
                    } else {
                        next[at(q)] += m * pr;
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let mut kept = CompensatedSum::default();
    for v in &cur {
        kept.add(*v);
    }
    let ledger = MassLedger {
        retained: kept.value(),
        lost_to_truncation: lost.value(),
        horizon: Some(n),
        radius: Some(radius),
        note: "lost = mass stepping out of the box".into(),
    };
    Ok(WalkLaw {
        n,
        radius,
        probs: cur,
        ledger,
    })
}

// ---------------------------------------------------------------------------

/// CSV with columns `state,target,value,retained,lost_to_truncation`.
pub fn write_table_csv<W: Write, I: IntoIterator<Item = (String, String, f64)>>(
    mut out: W,
    rows: I,
    ledger: &MassLedger,
) -> Result<()> {
    writeln!(out, "state,target,value,retained,lost_to_truncation")?;
    for (s, t, v) in rows {
        writeln!(out, "\"{s}\",\"{t}\",{v:?},{:?},{:?}", ledger.retained, ledger.lost_to_truncation)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p4() -> ModelParams {
        ModelParams::new(4.0).unwrap()
    }

    #[test]
    fn exit_dp_first_steps() {
        let t = quadrant_exit_dp(LatticePoint::new(1, 1), 10).unwrap();
        assert_eq!(t.prob(1, LatticePoint::new(0, 1)), 0.25);
        assert_eq!(t.prob(1, LatticePoint::new(1, 0)), 0.25);
        assert_eq!(t.time_marginal(2), 0.125);
        assert_eq!(t.survival(1), 0.5);
    }

    #[test]
    fn exit_dp_conserves_mass() {
        for x in [LatticePoint::new(2, 3), LatticePoint::new(-2, 3), LatticePoint::new(5, -1)] {
            for k in [1, 7, 64, 300] {
                let t = quadrant_exit_dp(x, k).unwrap();
                assert!(t.ledger.balance_error() < 1e-12, "{x} {k}: {:?}", t.ledger);
            }
        }
        assert!(quadrant_exit_dp(LatticePoint::new(3, 0), 5).is_err());
        assert!(quadrant_exit_dp(LatticePoint::new(3, 1), 4096).is_err());
    }

    #[test]
    fn exit_dp_maps_quadrants() {
        let a = quadrant_exit_dp(LatticePoint::new(2, 3), 20).unwrap();
        let b = quadrant_exit_dp(LatticePoint::new(-2, -3), 20).unwrap();
        for (k, y, v) in a.iter() {
            assert_eq!(b.prob(k, LatticePoint::new(-y.x1, -y.x2)), v);
        }
    }

    #[test]
    fn image_formula_matches_dp() {
        let em = ExitMarginals::exact_only(6, 80, 150).unwrap();
        for x in [LatticePoint::new(1, 1), LatticePoint::new(4, 1), LatticePoint::new(1, 6)] {
            let dp = quadrant_exit_dp(x, 150).unwrap().position_marginal();
            for (z, v) in dp {
                assert!((em.exact_prob(x, z) - v).abs() < 1e-13, "{x} {z}");
            }
        }
    }

    #[test]
    fn completed_exit_marginal_is_nearly_stochastic() {
        let em = ExitMarginals::compute(4, 256, 512).unwrap();
        let x = LatticePoint::new(1, 1);
        let lost = em.row_lost(x);
        // exits beyond 256 carry about 1.3/256^2 of mass
        assert!(lost > 0.0 && lost < 5e-5, "{lost}");
        let swap = em.prob(x, LatticePoint::new(7, 0)) - em.prob(x, LatticePoint::new(0, 7));
        assert!(swap.abs() < 1e-15);
    }

    #[test]
    fn tail_completion_tracks_longer_exact_sums() {
        let short = ExitMarginals::compute(2, 64, 256).unwrap();
        let long = ExitMarginals::compute(2, 64, 2048).unwrap();
        let x = LatticePoint::new(2, 1);
        for z in [1i64, 4, 16, 32, 64] {
            let y = LatticePoint::new(z, 0);
            let tail = short.prob(x, y) - short.exact_prob(x, y);
            let diff = (short.prob(x, y) - long.prob(x, y)).abs();
            assert!(diff < 0.02 * tail, "{z}: diff {diff} tail {tail}");
        }
    }

    #[test]
    fn axis_solve_examples() {
        let s = axis_absorption_solve(&p4(), 400).unwrap();
        let z1 = LatticePoint::new(1, 0);
        assert!(s.entry_probability(z1, LatticePoint::new(1, 1)) >= 0.25);
        let e = s.expected_rho(LatticePoint::new(100, 0)) / 100.0;
        assert!((0.95..=1.05).contains(&e), "{e}");
        let z5 = LatticePoint::new(5, 0);
        let states = boundary_states(400);
        let total: f64 = s.entry_law(z5, &states).iter().sum::<f64>() + s.lost(z5);
        assert!((total - 1.0).abs() < 1e-10, "{total}");
        assert!(axis_absorption_solve(&p4(), 1).is_err());
    }

    #[test]
    fn axis_solve_symmetries() {
        let s = axis_absorption_solve(&p4(), 50).unwrap();
        let a = s.entry_probability(LatticePoint::new(3, 0), LatticePoint::new(2, 1));
        let b = s.entry_probability(LatticePoint::new(0, -3), LatticePoint::new(-1, -2));
        assert!((a - b).abs() < 1e-16);
        let c = s.entry_probability(LatticePoint::new(3, 0), LatticePoint::new(2, -1));
        assert!((a - c).abs() < 1e-16);
        assert_eq!(s.entry_probability(LatticePoint::new(3, 0), LatticePoint::new(2, 2)), 0.0);
    }

    #[test]
    fn split_expectations_add_up() {
        let s = axis_absorption_solve(&p4(), 40).unwrap();
        let states = boundary_states(40);
        for z in [LatticePoint::new(3, 0), LatticePoint::ORIGIN, LatticePoint::new(0, -1)] {
            let parts: f64 = states.iter().map(|&y| s.expected_rho_on(z, y).unwrap()).sum();
            assert!((parts - s.expected_rho(z)).abs() < 1e-9, "{z}: {parts} vs {}", s.expected_rho(z));
        }
    }

    #[test]
    fn axis_survival_decays() {
        let v = axis_survival(&p4(), LatticePoint::new(10, 0), &[1, 100, 1000], 128).unwrap();
        // one step from (10,0) stays on the axis unless it steps sideways
        let p = p4().axis_escape_probability(10);
        assert!((v[0].1 - (1.0 - 2.0 * p).ln()).abs() < 1e-14);
        assert!(v[1].1 < -20.0 && v[2].1 < v[1].1 * 5.0);
    }

    #[test]
    fn walk_law_small_cases() {
        let w = walk_law_dp(&p4(), 1, 3).unwrap();
        for q in [(2, 1), (0, 1), (1, 2), (1, 0)] {
            assert_eq!(w.prob(LatticePoint::new(q.0, q.1)), 0.25);
        }
        // enumerate two steps by hand-rolled recursion
        let enumerate = |target: LatticePoint| {
            let params = p4();
            let mut total = 0.0;
            let start = LatticePoint::new(1, 1);
            for a in Direction::ALL {
                let p1 = start.offset(a);
                let pa = transition_distribution(&params, start).prob(a);
                for b in Direction::ALL {
                    if p1.offset(b) == target {
                        total += pa * transition_distribution(&params, p1).prob(b);
                    }
                }
            }
            total
        };
        let w2 = walk_law_dp(&p4(), 2, 3).unwrap();
        for (p, v) in w2.support() {
            assert_eq!(v, enumerate(p));
        }
        assert_eq!(w2.prob(LatticePoint::new(1, 1)), 0.25);
        assert!(walk_law_dp(&p4(), 5, 5).is_err());
        let w = walk_law_dp(&p4(), 64, 66).unwrap();
        assert!((w.ledger.retained - 1.0).abs() < 1e-12);
        assert_eq!(w.ledger.lost_to_truncation, 0.0);
    }

    #[test]
    fn boundary_state_count() {
        assert_eq!(boundary_states(64).len(), 508);
        assert!(boundary_states(3).iter().all(|p| is_entrance_boundary(*p)));
    }
}
