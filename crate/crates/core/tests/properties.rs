use lastiter_core::analysis::{self, StageTracker};
use lastiter_core::dynamics::{self, AlgorithmSpec, Family, RunOptions, StepsizeSchedule};
use lastiter_core::games::{self, HardInstanceParams, SimplexPoint};
use lastiter_core::regularizers::{self, RegularizerKind};
use lastiter_core::{Context, Real};
use proptest::prelude::*;

const DIGITS: u32 = 40;

fn ctx() -> Context {
    Context::new(DIGITS).unwrap()
}

fn kinds(c: &Context) -> Vec<RegularizerKind> {
    vec![
        RegularizerKind::NegativeEntropy,
        RegularizerKind::SquaredEuclidean,
        RegularizerKind::LogBarrier,
        RegularizerKind::tsallis(c.ratio(1, 2)).unwrap(),
        RegularizerKind::tsallis(c.parse("0.8").unwrap()).unwrap(),
    ]
}

fn pair(c: &Context, p: f64) -> SimplexPoint {
    SimplexPoint::pair(c.from_f64(p)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn add_sub_round_trip(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let c = ctx();
        let (ra, rb) = (c.from_f64(a), c.from_f64(b));
        let back = &(&ra + &rb) - &rb;
        prop_assert!(c.default_tolerance().is_negligible(&(back - &ra)));
    }

    #[test]
    fn exp_ln_round_trip(e in -115.0f64..115.0) {
        let c = ctx();
        let a = c.from_f64(10f64.powf(e / 2.3));
        prop_assert!(c.default_tolerance().close(&a.ln().exp(), &a));
    }

    #[test]
    fn canonical_string_round_trip(a in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let c = ctx();
        let v = c.from_f64(a) / 7i64;
        prop_assert_eq!(c.parse(&v.to_canonical()).unwrap(), v);
    }

    #[test]
    fn gap_is_non_negative(d in 0.0001f64..0.49, p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let c = ctx();
        let g = games::hard_instance(&HardInstanceParams::new(c.from_f64(d)).unwrap());
        let gap = games::duality_gap(&g, &pair(&c, p), &pair(&c, q)).unwrap();
        prop_assert!(!gap.is_sign_negative() || c.default_tolerance().is_negligible(&gap));
    }

    #[test]
    fn loss_differences_in_range(d in 0.0001f64..0.49, p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let c = ctx();
        let delta = c.from_f64(d);
        let g = games::hard_instance(&HardInstanceParams::new(delta.clone()).unwrap());
        let (x, y) = (pair(&c, p), pair(&c, q));
        let (lx, ly) = games::loss_vectors(&g, &x, &y).unwrap();
        let ex = &lx[0] - &lx[1];
        let ey = &ly[0] - &ly[1];
        let tol = c.default_tolerance();
        let one = c.one();
        let half = c.ratio(1, 2);
        // closed forms
        prop_assert!(tol.close(&ex, &(&(&(&one + &delta) * &y[0]) - &half)));
        prop_assert!(tol.close(&ey, &(&one - &(&(&one + &delta) * &x[0]))));
        prop_assert!(ex >= -&half - &tol.abs && ex <= &half + &delta + &tol.abs);
        prop_assert!(ey >= -&delta - &tol.abs && ey <= &one + &tol.abs);
    }

    #[test]
    fn gap_lower_bound_on_region(d in 0.0001f64..0.49, eps in 0.0001f64..0.49, s in 0.0f64..1.0, r in 0.0f64..1.0) {
        // x[1] >= 1/(1+d), y[1] >= 1/2 + eps  =>  gap >= eps
        let c = ctx();
        let delta = c.from_f64(d);
        let g = games::hard_instance(&HardInstanceParams::new(delta.clone()).unwrap());
        let lo_x = (c.one() + &delta).recip();
        let x1 = &lo_x + &(&(c.one() - &lo_x) * &c.from_f64(s));
        let lo_y = c.ratio(1, 2) + &c.from_f64(eps);
        let y1 = &lo_y + &(&(c.one() - &lo_y) * &c.from_f64(r));
        let gap = games::duality_gap(&g, &SimplexPoint::pair(x1).unwrap(), &SimplexPoint::pair(y1).unwrap()).unwrap();
        prop_assert!(gap >= c.from_f64(eps) - &c.default_tolerance().abs);
    }

    #[test]
    fn lift_scales_bilinear_value(d in 0.001f64..0.49, n in 1usize..6, p in 0.0f64..1.0, q in 0.0f64..1.0, k in 0usize..4) {
        let c = ctx();
        let g = games::hard_instance(&HardInstanceParams::new(c.from_f64(d)).unwrap());
        let kind = kinds(&c)[k].clone();
        let alpha = kind.lift_alpha(&c);
        let lifted = games::duplicate_lift(&g, n, &alpha).unwrap();
        let (x, y) = (pair(&c, p), pair(&c, q));
        let dx = games::duplicate_strategy(&x, n).unwrap();
        let dy = games::duplicate_strategy(&y, n).unwrap();
        let lhs = lifted.value(&dx, &dy).unwrap();
        let rhs = g.value(&x, &y).unwrap() / &c.int(n as i64).pow(&alpha);
        prop_assert!(c.default_tolerance().close(&lhs, &rhs));
        let first: Real = dx.coords()[..n].iter().fold(c.zero(), |a, b| a + b);
        prop_assert!(c.default_tolerance().close(&first, &x[0]));
    }

    #[test]
    fn rescaling_identity(eta in 0.01f64..10.0, e in -50.0f64..50.0, k in 0usize..5) {
        let c = ctx();
        let kind = kinds(&c)[k].clone();
        let eta = c.from_f64(eta);
        let e = c.from_f64(e);
        let lhs = regularizers::f_eta(&kind, &eta, &(&e / &eta)).unwrap();
        let rhs = regularizers::f_one(&kind, &e);
        prop_assert!(c.default_tolerance().close(&lhs, &rhs), "{} {} {}", kind, lhs, rhs);
    }

    #[test]
    fn two_action_argmin_matches_f_eta(eta in 0.01f64..5.0, g1 in -20.0f64..20.0, g2 in -20.0f64..20.0, k in 0usize..5) {
        let c = ctx();
        let kind = kinds(&c)[k].clone();
        let eta = c.from_f64(eta);
        let g = [c.from_f64(g1), c.from_f64(g2)];
        let x = regularizers::ftrl_argmin(&kind, &eta, &g).unwrap();
        let p = regularizers::f_eta(&kind, &eta, &(&g[0] - &g[1])).unwrap();
        prop_assert!(c.default_tolerance().close(&x[0], &p));
    }

    #[test]
    fn general_argmin_is_kkt_point(eta in 0.05f64..3.0, g in proptest::collection::vec(-3.0f64..3.0, 3..6), k in 0usize..5) {
        // interior coordinates share the same value of eta*G_i + R'(x_i)
        let c = ctx();
        let kind = kinds(&c)[k].clone();
        let eta = c.from_f64(eta);
        let g: Vec<Real> = g.into_iter().map(|v| c.from_f64(v)).collect();
        let x = regularizers::ftrl_argmin(&kind, &eta, &g).unwrap();
        let grad = |xi: &Real| -> Real {
            match &kind {
                RegularizerKind::NegativeEntropy => xi.ln(),
                RegularizerKind::SquaredEuclidean => xi.clone(),
                RegularizerKind::LogBarrier => -xi.recip(),
                RegularizerKind::Tsallis { beta } => {
                    let kap = beta / &(c.one() - beta);
                    -(kap * &xi.pow(&(beta - &c.one())))
                }
            }
        };
        let tol = lastiter_core::Tolerance::from_digits(&c, DIGITS as i32 - 15);
        let mut level: Option<Real> = None;
        for (xi, gi) in x.coords().iter().zip(&g) {
            if !xi.is_positive() {
                continue;
            }
            let v = &(&eta * gi) + &grad(xi);
            match &level {
                None => level = Some(v),
                Some(l) => prop_assert!(tol.close(&v, l), "{} {} {}", kind, v, l),
            }
        }
    }

    #[test]
    fn fit_scales_linearly(k in 0.1f64..10.0) {
        let c = ctx();
        let gaps: Vec<Real> = (1..=40).map(|t| c.from_f64(1.0 / (t as f64).powf(0.7))).collect();
        let scaled: Vec<Real> = gaps.iter().map(|g| g * &c.from_f64(k)).collect();
        let a = analysis::inverse_sqrt_constant(gaps.iter().enumerate().map(|(i, g)| (i as u64 + 1, g))).unwrap();
        let b = analysis::inverse_sqrt_constant(scaled.iter().enumerate().map(|(i, g)| (i as u64 + 1, g))).unwrap();
        prop_assert!(c.default_tolerance().close(&b, &(a * &c.from_f64(k))));
    }
}

#[test]
fn monotone_on_dense_grid() {
    let c = ctx();
    let step = c.ratio(1, 50);
    for kind in kinds(&c) {
        let mut prev = regularizers::f_one(&kind, &c.int(-100));
        for i in -4999..=5000 {
            let cur = regularizers::f_one(&kind, &(&step * i));
            assert!(cur <= prev, "{kind} at {i}");
            prev = cur;
        }
    }
}

#[test]
fn rational_limits() {
    let c = ctx();
    let big = c.int(1_000_000);
    let milli = c.ratio(1, 1000);
    for kind in kinds(&c) {
        assert!(regularizers::f_one(&kind, &-&big) >= c.one() - &milli, "{kind}");
        assert!(regularizers::f_one(&kind, &big) <= milli, "{kind}");
    }
}

#[test]
fn lipschitz_scan() {
    let c = ctx();
    let tol = c.default_tolerance();
    let h = c.ratio(1, 100);
    for kind in kinds(&c) {
        let l = kind.lipschitz(&c);
        for i in -1000..1000 {
            let a = &h * i;
            let q = (regularizers::f_one(&kind, &a) - &regularizers::f_one(&kind, &(&a + &h))).abs() / &h;
            assert!(q <= &l + &tol.abs, "{kind} at {a}");
        }
    }
}

#[test]
fn inverse_round_trip_grid() {
    let c = ctx();
    let tol = c.default_tolerance();
    let lo = c.pow10(-6);
    let span = c.one() - &(&lo * 2i64);
    for kind in kinds(&c) {
        for i in 0..=200 {
            let x = &lo + &(&span * &c.ratio(i, 200));
            let e = regularizers::f_inverse(&kind, &x).unwrap();
            assert!(tol.close(&regularizers::f_one(&kind, &e), &x), "{kind} at {x}");
        }
    }
}

#[test]
fn nash_gap_vanishes() {
    let c = ctx();
    for d in ["0.25", "0.1", "0.01", "1e-4"] {
        let p = HardInstanceParams::new(c.parse(d).unwrap()).unwrap();
        let (x, y) = games::hard_instance_nash(&p);
        let gap = games::duality_gap(&games::hard_instance(&p), &x, &y).unwrap();
        assert!(c.default_tolerance().is_negligible(&gap), "{d}");
        assert!(c.default_tolerance().close(&(&x[0] + &x[1]), &c.one()));
    }
}

fn hard(c: &Context, d: &str) -> lastiter_core::MatrixGame {
    games::hard_instance(&HardInstanceParams::new(c.parse(d).unwrap()).unwrap())
}

fn constant(c: &Context, family: Family, kind: RegularizerKind, eta: &str) -> AlgorithmSpec {
    AlgorithmSpec::new(family, kind, StepsizeSchedule::constant(c.parse(eta).unwrap()).unwrap())
}

#[test]
fn runs_are_deterministic() {
    let c = ctx();
    let g = hard(&c, "0.05");
    for kind in kinds(&c) {
        let s = constant(&c, Family::Oftrl, kind, "0.2");
        let a = dynamics::run_oftrl(&g, &s, 60).unwrap();
        let b = dynamics::run_oftrl(&g, &s, 60).unwrap();
        let text = |t: &dynamics::Trajectory| {
            t.records.iter().map(|r| format!("{},{},{}", r.x[0], r.y[0], r.gap)).collect::<Vec<_>>()
        };
        assert_eq!(text(&a), text(&b));
    }
}

#[test]
fn trajectory_invariants_on_hard_instance() {
    let c = ctx();
    let delta = c.parse("0.05").unwrap();
    let g = hard(&c, "0.05");
    let tol = c.default_tolerance();
    for family in [Family::Oftrl, Family::Oomd] {
        for kind in kinds(&c) {
            let s = constant(&c, family, kind.clone(), "0.3");
            let tr = dynamics::run(&g, &s, 150, &RunOptions::default(), &mut []).unwrap();
            for r in &tr.records {
                let ex = r.diff_x().unwrap();
                let ey = r.diff_y().unwrap();
                assert!(ex >= c.ratio(-1, 2) - &tol.abs && ex <= c.ratio(1, 2) + &delta + &tol.abs);
                assert!(ey >= -&delta - &tol.abs && ey <= c.one() + &tol.abs);
                let gap = games::duality_gap(&g, &r.x, &r.y).unwrap();
                assert!(tol.close(&gap, &r.gap));
            }
            if family == Family::Oftrl {
                let err = dynamics::self_consistency_error(&tr).unwrap();
                assert!(tol.is_negligible(&err), "{kind}: {err}");
            }
        }
    }
}

#[test]
fn adagrad_self_consistency_uses_current_stepsize() {
    let c = ctx();
    let g = hard(&c, "0.01");
    let s = AlgorithmSpec::new(
        Family::Oftrl,
        RegularizerKind::NegativeEntropy,
        StepsizeSchedule::adagrad(c.parse("0.1").unwrap()).unwrap(),
    );
    let tr = dynamics::run_oftrl(&g, &s, 100).unwrap();
    let err = dynamics::self_consistency_error(&tr).unwrap();
    assert!(c.default_tolerance().is_negligible(&err));
    assert!(tr.records[50].eta_x < tr.records[1].eta_x);
}

#[test]
fn stage_order_and_stage_one_bound() {
    let c = ctx();
    for (kind, eta, d, iters) in [
        (RegularizerKind::NegativeEntropy, "0.1", "0.05", 3000u64),
        (RegularizerKind::SquaredEuclidean, "0.1", "0.05", 3000),
        (RegularizerKind::LogBarrier, "0.5", "0.05", 3000),
    ] {
        let g = hard(&c, d);
        let delta = c.parse(d).unwrap();
        let consts = regularizers::constants(&kind, &c);
        let s = constant(&c, Family::Oftrl, kind.clone(), eta);
        let tr = dynamics::run_oftrl(&g, &s, iters).unwrap();
        let rep = analysis::detect_stages(&tr, &delta, &consts).unwrap();
        let ts = rep.t_s.unwrap_or_else(|| panic!("{kind}: no T_s"));
        assert!(c.int(ts as i64) >= rep.predicted_ts_lb, "{kind}");
        if let (Some(t1), Some(t2)) = (rep.t1, rep.t2) {
            assert!(ts <= t1 && t1 <= t2, "{kind}");
            assert_eq!(rep.flat_len, Some(t2 - t1));
        }
    }
}

#[test]
fn best_gap_is_non_increasing_in_t() {
    let c = ctx();
    let g = hard(&c, "0.01");
    let s = constant(&c, Family::Oftrl, RegularizerKind::NegativeEntropy, "0.1");
    let tr = dynamics::run_oftrl(&g, &s, 300).unwrap();
    let mut prev: Option<Real> = None;
    for t in (1..=300).step_by(13) {
        let (best, best_t, _) = analysis::best_and_average(&tr, t).unwrap();
        assert!(best_t <= t);
        assert!(best <= tr.at(t).unwrap().gap);
        if let Some(p) = &prev {
            assert!(best <= *p);
        }
        prev = Some(best);
    }
    let (best, t, avg) = analysis::best_and_average(&tr, 1).unwrap();
    assert_eq!((best, t), (tr.records[0].gap.clone(), 1));
    assert_eq!(avg, tr.records[0].gap);
}

#[test]
fn stage_tracker_streaming_equals_replay() {
    let c = ctx();
    let d = c.parse("0.05").unwrap();
    let g = hard(&c, "0.05");
    let kind = RegularizerKind::NegativeEntropy;
    let consts = regularizers::constants(&kind, &c);
    let eta = c.parse("0.1").unwrap();
    let s = constant(&c, Family::Oftrl, kind, "0.1");
    let mut live = StageTracker::with_default_floor(&d, &consts, &eta);
    let opts = RunOptions {
        thin: 97,
        peak_floor: Some(c.ratio(1, 20)),
    };
    let tr = dynamics::run(&g, &s, 4000, &opts, &mut [&mut live]).unwrap();
    let live = live.finish();
    let replay = analysis::detect_stages(&tr, &d, &consts).unwrap();
    assert!(tr.records.len() < 4000);
    assert_eq!((live.t_s, live.t1, live.t2), (replay.t_s, replay.t1, replay.t2));
    assert_eq!(live.peaks, replay.peaks);
    assert!(live.t2.is_some());
}
