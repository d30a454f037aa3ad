//! Merge associativity and commutativity of every accumulator kind, plus a
//! few structural invariants of the step law.

use axiswalk::model::{transition_distribution, Direction};
use axiswalk::stats::{
    empirical_laplace, Accumulator, AccumulatorSet, CellCounter, Histogram, LaplaceAccumulator, MomentAccumulator,
    OccupationCounter, SampleLog, TailCounter,
};
use axiswalk::{LatticePoint, ModelParams};
use proptest::prelude::*;

const CASES: u32 = 10_000;

type Obs = (f64, i64, i64, u8);

fn obs() -> impl Strategy<Value = Obs> {
    (-50.0f64..5000.0, -20i64..20, -20i64..20, 0u8..4)
}

fn filled(data: &[Obs]) -> AccumulatorSet {
    let mut set = AccumulatorSet::new()
        .with("tail", Accumulator::Tail(TailCounter::new(vec![0.0, 1.0, 10.0, 100.0, 1000.0])))
        .with("hist", Accumulator::Histogram(Histogram::log_spaced(0.1, 1e4, 8)))
        .with("moments", Accumulator::Moments(MomentAccumulator::default()))
        .with("laplace", Accumulator::Laplace(LaplaceAccumulator::new(vec![0.01, 0.1, 1.0])))
        .with("occ", Accumulator::Occupation(OccupationCounter::default()))
        .with("cells", Accumulator::Cells(CellCounter::default()))
        .with("rows", Accumulator::Samples(SampleLog::new(3)));
    for &(v, a, b, c) in data {
        set.tail_mut("tail").unwrap().observe(v);
        set.histogram_mut("hist").unwrap().observe(v);
        set.moments_mut("moments").unwrap().observe(v);
        set.laplace_mut("laplace").unwrap().observe(v.abs() / 100.0);
        set.occupation_mut("occ").unwrap().observe(LatticePoint::new(a, b));
        set.cells_mut("cells").unwrap().observe(format!("c{c}"));
        set.samples_mut("rows").unwrap().observe(vec![c as f64, v, a as f64]);
    }
    set
}

fn merged(a: &AccumulatorSet, b: &AccumulatorSet) -> AccumulatorSet {
    let mut out = a.clone();
    out.merge(b).unwrap();
    out
}

fn close(x: f64, y: f64) -> bool {
    x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)
}

/// Integer state must agree exactly; floating sums up to rounding.
fn assert_equivalent(x: &AccumulatorSet, y: &AccumulatorSet) {
    assert_eq!(x.tail("tail"), y.tail("tail"));
    assert_eq!(x.histogram("hist"), y.histogram("hist"));
    assert_eq!(x.occupation("occ"), y.occupation("occ"));
    assert_eq!(x.cells("cells"), y.cells("cells"));
    assert_eq!(x.samples("rows"), y.samples("rows"));
    let (mx, my) = (x.moments("moments").unwrap(), y.moments("moments").unwrap());
    assert_eq!(mx.count(), my.count());
    if mx.count() > 0 {
        assert!(close(mx.mean(), my.mean()), "{} vs {}", mx.mean(), my.mean());
        // second moments compared through the stored sum of squares
        let sq = |m: &MomentAccumulator| m.m2() + m.count() as f64 * m.mean() * m.mean();
        assert!(close(sq(mx), sq(my)), "{} vs {}", sq(mx), sq(my));
    }
    let (lx, ly) = (x.laplace("laplace").unwrap(), y.laplace("laplace").unwrap());
    assert_eq!(lx.count(), ly.count());
    if lx.count() > 1 {
        for &l in lx.lambdas() {
            let a = empirical_laplace(lx, l, 0.95).unwrap().estimate;
            let b = empirical_laplace(ly, l, 0.95).unwrap().estimate;
            assert!(close(a, b), "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn merge_is_associative_and_commutative(
        a in prop::collection::vec(obs(), 0..12),
        b in prop::collection::vec(obs(), 0..12),
        c in prop::collection::vec(obs(), 0..12),
    ) {
        let (fa, fb, fc) = (filled(&a), filled(&b), filled(&c));
        let left = merged(&merged(&fa, &fb), &fc);
        let right = merged(&fa, &merged(&fb, &fc));
        assert_equivalent(&left, &right);
        assert_equivalent(&merged(&fa, &fb), &merged(&fb, &fa));
        // merging the parts equals observing the concatenation
        let all: Vec<Obs> = a.iter().chain(&b).chain(&c).copied().collect();
        assert_equivalent(&left, &filled(&all));
    }

    #[test]
    fn snapshot_round_trip_is_exact(a in prop::collection::vec(obs(), 0..16)) {
        let set = filled(&a);
        let back = AccumulatorSet::from_snapshot(&set.to_snapshot()).unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn step_law_sums_to_one(alpha in 0.0f64..8.0, x1 in -300i64..300, x2 in -300i64..300) {
        let p = ModelParams::new(alpha).unwrap();
        let d = transition_distribution(&p, LatticePoint::new(x1, x2));
        prop_assert!((d.total() - 1.0).abs() < 1e-12);
        for dir in Direction::ALL {
            prop_assert!(d.prob(dir) >= 0.0);
        }
    }

    #[test]
    fn step_law_is_dihedral(alpha in 0.0f64..8.0, x1 in -300i64..300, x2 in -300i64..300) {
        let p = ModelParams::new(alpha).unwrap();
        let x = LatticePoint::new(x1, x2);
        let d = transition_distribution(&p, x);
        // swap of coordinates and both reflections
        let maps: [(fn(LatticePoint) -> LatticePoint, fn(Direction) -> Direction); 3] = [
            (|q| LatticePoint::new(q.x2, q.x1), swap_dir),
            (|q| LatticePoint::new(-q.x1, q.x2), flip1_dir),
            (|q| LatticePoint::new(q.x1, -q.x2), flip2_dir),
        ];
        for (mp, md) in maps {
            let e = transition_distribution(&p, mp(x));
            for dir in Direction::ALL {
                prop_assert_eq!(d.prob(dir), e.prob(md(dir)));
            }
        }
    }
}

fn swap_dir(d: Direction) -> Direction {
    match d {
        Direction::PlusE1 => Direction::PlusE2,
        Direction::MinusE1 => Direction::MinusE2,
        Direction::PlusE2 => Direction::PlusE1,
        Direction::MinusE2 => Direction::MinusE1,
    }
}

fn flip1_dir(d: Direction) -> Direction {
    match d {
        Direction::PlusE1 => Direction::MinusE1,
        Direction::MinusE1 => Direction::PlusE1,
        other => other,
    }
}

fn flip2_dir(d: Direction) -> Direction {
    match d {
        Direction::PlusE2 => Direction::MinusE2,
        Direction::MinusE2 => Direction::PlusE2,
        other => other,
    }
}
