use lastiter_core::analysis;
use lastiter_core::dynamics::{self, AlgorithmSpec, Family, StepsizeSchedule, Trajectory};
use lastiter_core::games::{self, HardInstanceParams};
use lastiter_core::regularizers::{self, RegularizerKind};
use lastiter_core::{Context, MatrixGame, Real, Tolerance};

fn hard(c: &Context, d: &str) -> MatrixGame {
    games::hard_instance(&HardInstanceParams::new(c.parse(d).unwrap()).unwrap())
}

fn spec(c: &Context, family: Family, kind: RegularizerKind, eta: &str) -> AlgorithmSpec {
    AlgorithmSpec::new(family, kind, StepsizeSchedule::constant(c.parse(eta).unwrap()).unwrap())
}

#[test]
fn oftrl_and_oomd_entropy_coincide() {
    let c = Context::new(64).unwrap();
    let g = hard(&c, "0.01");
    let a = dynamics::run_oftrl(&g, &spec(&c, Family::Oftrl, RegularizerKind::NegativeEntropy, "0.1"), 500).unwrap();
    let b = dynamics::run_oomd(&g, &spec(&c, Family::Oomd, RegularizerKind::NegativeEntropy, "0.1"), 500).unwrap();
    let tol = c.default_tolerance();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.t, rb.t);
        assert!(tol.close(&ra.x[0], &rb.x[0]), "t={}", ra.t);
        assert!(tol.close(&ra.y[0], &rb.y[0]), "t={}", ra.t);
        assert!(tol.close(&ra.gap, &rb.gap), "t={}", ra.t);
    }
    assert!(b.records[10].x_hat.is_some());
}

#[test]
fn oomd_zero_loss_game_stays_uniform() {
    let c = Context::new(30).unwrap();
    let g = MatrixGame::parse("2 3 1\n0.5 0.5 0.5\n0.5 0.5 0.5\n", &c).unwrap();
    for kind in [RegularizerKind::SquaredEuclidean, RegularizerKind::LogBarrier] {
        let tr = dynamics::run_oomd(&g, &spec(&c, Family::Oomd, kind, "0.4"), 5).unwrap();
        let tol = c.default_tolerance();
        assert!(tol.close(&tr.last().y[0], &c.ratio(1, 3)));
        assert!(tol.close(&tr.last().x[0], &c.ratio(1, 2)));
    }
}

/// Largest within-half spread and half-sum mismatch between a 2-action run
/// and its lifted 2n-action run.
fn lift_discrepancy(c: &Context, kind: &RegularizerKind, n: usize, iters: u64) -> (Real, Real) {
    let g = hard(c, "0.05");
    let lifted = games::duplicate_lift(&g, n, &kind.lift_alpha(c)).unwrap();
    let s = spec(c, Family::Oftrl, kind.clone(), "0.1");
    let small = dynamics::run_oftrl(&g, &s, iters).unwrap();
    let big = dynamics::run_oftrl(&lifted, &s, iters).unwrap();
    let mut spread = c.zero();
    let mut mismatch = c.zero();
    for (rs, rb) in small.records.iter().zip(&big.records) {
        for (p2, p) in [(&rs.x, &rb.x), (&rs.y, &rb.y)] {
            for (half, target) in [(&p.coords()[..n], &p2[0]), (&p.coords()[n..], &p2[1])] {
                let total = half.iter().fold(c.zero(), |a, b| a + b);
                mismatch = mismatch.max_of(&(total - target).abs());
                for v in half {
                    spread = spread.max_of(&(v - &half[0]).abs());
                }
            }
        }
    }
    (spread, mismatch)
}

#[test]
fn lift_equivalence_all_kinds() {
    let c = Context::new(40).unwrap();
    let bound = Tolerance::from_digits(&c, 20);
    for kind in [
        RegularizerKind::NegativeEntropy,
        RegularizerKind::SquaredEuclidean,
        RegularizerKind::LogBarrier,
        RegularizerKind::tsallis(c.ratio(1, 2)).unwrap(),
    ] {
        for n in [1, 3] {
            let (spread, mismatch) = lift_discrepancy(&c, &kind, n, 60);
            assert!(bound.is_negligible(&spread), "{kind} n={n} spread {spread}");
            assert!(bound.is_negligible(&mismatch), "{kind} n={n} mismatch {mismatch}");
        }
    }
}

fn max_record_difference(a: &Trajectory, b: &Trajectory, target: &Context) -> Real {
    let mut worst = target.zero();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        for (u, v) in [(&ra.x[0], &rb.x[0]), (&ra.y[0], &rb.y[0]), (&ra.gap, &rb.gap)] {
            let u = target.parse(&u.to_canonical()).unwrap();
            let v = target.parse(&v.to_canonical()).unwrap();
            worst = worst.max_of(&(u - v).abs());
        }
    }
    worst
}

#[test]
fn precision_refinement_is_stable() {
    let p = 32;
    let lo = Context::new(p).unwrap();
    let hi = Context::new(2 * p).unwrap();
    for (family, kind) in [
        (Family::Oftrl, RegularizerKind::NegativeEntropy),
        (Family::Oomd, RegularizerKind::SquaredEuclidean),
        (Family::Oftrl, RegularizerKind::LogBarrier),
    ] {
        let name = kind.to_string();
        let a = dynamics::run(&hard(&lo, "0.01"), &spec(&lo, family, kind.clone(), "0.1"), 400, &Default::default(), &mut []).unwrap();
        let kind_hi = RegularizerKind::parse(&name, &hi).unwrap();
        let b = dynamics::run(&hard(&hi, "0.01"), &spec(&hi, family, kind_hi, "0.1"), 400, &Default::default(), &mut []).unwrap();
        let diff = max_record_difference(&a, &b, &hi);
        assert!(diff <= hi.pow10(-(p as i32 - 20)), "{family} {name}: {diff}");
    }
}

#[test]
fn ogda_gap_shrinks() {
    let c = Context::new(30).unwrap();
    let g = hard(&c, "0.01");
    let tr = dynamics::run_oomd(&g, &spec(&c, Family::Oomd, RegularizerKind::SquaredEuclidean, "0.1"), 5000).unwrap();
    assert!(tr.last().gap < c.parse("0.01").unwrap());
    let fit = analysis::fit_inverse_sqrt_rate(&tr, 100, 5000).unwrap();
    assert!(fit.is_finite());
    assert!(analysis::fit_inverse_sqrt_rate(&tr, 100, 100).is_err());
}

#[test]
fn assumptions_hold_at_half_delta_prime() {
    let c = Context::new(64).unwrap();
    for kind in [
        RegularizerKind::NegativeEntropy,
        RegularizerKind::SquaredEuclidean,
        RegularizerKind::LogBarrier,
        RegularizerKind::tsallis(c.ratio(1, 2)).unwrap(),
        RegularizerKind::tsallis(c.parse("0.2").unwrap()).unwrap(),
    ] {
        let k = regularizers::constants(&kind, &c);
        let rep = analysis::verify_assumptions(&kind, &(&k.delta_prime / 2i64)).unwrap();
        assert_eq!(rep.status(), "pass", "{}", rep.to_key_value(15));
        let out = analysis::verify_assumptions(&kind, &(&k.delta_prime * 2i64)).unwrap();
        assert_eq!(out.status(), "out-of-range");
    }
    let rep = analysis::verify_assumptions(&RegularizerKind::NegativeEntropy, &c.parse("1e-7").unwrap()).unwrap();
    assert!(rep.to_key_value(10).contains("discrepancy.delta_prime"));
}
