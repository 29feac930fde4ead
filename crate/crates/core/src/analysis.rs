//! Post-processing: stage detection on the hard instance, gap peaks, best
//! and average iterates, rate fits, and numeric checks of the regularizer
//! assumptions.

use std::fmt::Write as _;

use crate::dynamics::{self, AlgorithmSpec, Observer, Record, RunOptions, Trajectory};
use crate::error::{Error, Result};
use crate::games::{self, HardInstanceParams, MatrixGame, SimplexPoint};
use crate::numerics::{Context, Real};
use crate::regularizers::{self, RegularizerConstants, RegularizerKind};

/// Minimum spacing between two reported gap peaks.
pub const PEAK_SEPARATION: u64 = 10;

/// Local maxima of the gap sequence at or above a floor.
///
/// A point counts when its gap is at least the previous one and strictly
/// above the next, and all three iterations are consecutive. Peaks closer
/// than [`PEAK_SEPARATION`] to the last accepted one replace it when larger.
#[derive(Debug, Clone)]
pub struct PeakDetector {
    floor: Real,
    prev2: Option<(u64, Real)>,
    prev: Option<(u64, Real)>,
    peaks: Vec<(u64, Real)>,
}

impl PeakDetector {
    pub fn new(floor: Real) -> Self {
        Self {
            floor,
            prev2: None,
            prev: None,
            peaks: Vec::new(),
        }
    }

    pub fn push(&mut self, t: u64, gap: &Real) {
        if let (Some((t0, g0)), Some((t1, g1))) = (&self.prev2, &self.prev) {
            let adjacent = *t1 == t0 + 1 && t == t1 + 1;
            if adjacent && g1 >= g0 && g1 > gap && *g1 >= self.floor {
                self.accept(*t1, g1.clone());
            }
        }
        self.prev2 = self.prev.take();
        self.prev = Some((t, gap.clone()));
    }

    fn accept(&mut self, t: u64, gap: Real) {
        if let Some(last) = self.peaks.last_mut() {
            if t - last.0 < PEAK_SEPARATION {
                if gap > last.1 {
                    *last = (t, gap);
                }
                return;
            }
        }
        self.peaks.push((t, gap));
    }

    pub fn peaks(&self) -> &[(u64, Real)] {
        &self.peaks
    }

    pub fn into_peaks(self) -> Vec<(u64, Real)> {
        self.peaks
    }
}

impl Observer for PeakDetector {
    fn observe(&mut self, r: &Record) {
        self.push(r.t, &r.gap);
    }
}

/// Observed and predicted stage times of a run on the hard instance.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub delta: Real,
    pub iterations: u64,
    pub t_s: Option<u64>,
    pub t1: Option<u64>,
    pub t2: Option<u64>,
    pub t3_window: Option<(u64, u64)>,
    pub flat_len: Option<u64>,
    /// `1 / (2 eta L)`.
    pub predicted_ts_lb: Real,
    /// `c1 / (3 eta L delta)`.
    pub predicted_threshold: Real,
    /// `floor(c1 / (2 L eta delta))`.
    pub predicted_th: i64,
    /// Largest gap at an iteration at or after the predicted threshold.
    pub peak_gap_after_threshold: Option<Real>,
    pub peak_iteration: Option<u64>,
    pub max_x1: Option<Real>,
    pub peak_floor: Real,
    pub peaks: Vec<(u64, Real)>,
}

impl StageReport {
    /// Gap peaks strictly after `T2`.
    pub fn peaks_after_t2(&self) -> Vec<(u64, Real)> {
        match self.t2 {
            Some(t2) => self.peaks.iter().filter(|(t, _)| *t > t2).cloned().collect(),
            None => Vec::new(),
        }
    }

    /// Flat `key=value` block, one entry per line.
    pub fn to_key_value(&self, digits: usize) -> String {
        let opt = |v: Option<u64>| v.map_or_else(|| "absent".to_string(), |v| v.to_string());
        let optr = |v: &Option<Real>| v.as_ref().map_or_else(|| "absent".to_string(), |v| v.to_digits(digits));
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("delta", self.delta.to_digits(digits));
        kv("iterations", self.iterations.to_string());
        kv("T_s", opt(self.t_s));
        kv("T1", opt(self.t1));
        kv("T2", opt(self.t2));
        kv(
            "T3_window",
            self.t3_window
                .map_or_else(|| "absent".to_string(), |(a, b)| format!("{a}..{b}")),
        );
        kv("flat_len", opt(self.flat_len));
        kv("predicted_Ts_lb", self.predicted_ts_lb.to_digits(digits));
        kv("predicted_threshold", self.predicted_threshold.to_digits(digits));
        kv("predicted_Th", self.predicted_th.to_string());
        kv("peak_gap_after_threshold", optr(&self.peak_gap_after_threshold));
        kv("peak_iteration", opt(self.peak_iteration));
        kv("max_x1", optr(&self.max_x1));
        kv("peak_floor", self.peak_floor.to_digits(digits));
        kv("gap_peaks", self.peaks.len().to_string());
        kv("gap_peaks_after_T2", self.peaks_after_t2().len().to_string());
        let list: Vec<String> = self
            .peaks
            .iter()
            .map(|(t, g)| format!("{t}:{}", g.to_digits(digits.min(12))))
            .collect();
        kv("peak_list", list.join(" "));
        out
    }

    pub const CSV_HEADER: &'static str = "delta,iterations,T_s,T1,T2,flat_len,peak_gap,peak_iteration,complete";

    /// One sweep row under [`StageReport::CSV_HEADER`]. The peak columns
    /// describe the largest gap peak after `T2`.
    pub fn to_csv_row(&self, digits: usize) -> String {
        let opt = |v: Option<u64>| v.map_or_else(String::new, |v| v.to_string());
        let after = self.peaks_after_t2();
        let best = after.iter().max_by(|a, b| a.1.total_cmp(&b.1));
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.delta.to_digits(digits),
            self.iterations,
            opt(self.t_s),
            opt(self.t1),
            opt(self.t2),
            opt(self.flat_len),
            best.map_or_else(String::new, |p| p.1.to_digits(digits)),
            best.map_or_else(String::new, |p| p.0.to_string()),
            self.t2.is_some(),
        )
    }
}

/// Streaming stage detector; feed it every iterate (or the stored records of
/// a trajectory) and call [`StageTracker::finish`].
#[derive(Debug, Clone)]
pub struct StageTracker {
    delta: Real,
    c1: Real,
    l: Real,
    eta: Real,
    three_quarters: Real,
    x_level: Real,
    y_level: Real,
    predicted_threshold: Real,
    last_t: u64,
    t_s: Option<u64>,
    t1: Option<u64>,
    t2: Option<u64>,
    after_threshold: Option<(u64, Real)>,
    max_x1: Option<Real>,
    peaks: PeakDetector,
}

impl StageTracker {
    pub fn new(delta: &Real, constants: &RegularizerConstants, eta: &Real, peak_floor: Real) -> Self {
        let one_plus = delta.int_like(1) + delta;
        let predicted_threshold = &constants.c1 / &(&(eta * &constants.l) * &(delta * 3i64));
        Self {
            delta: delta.clone(),
            c1: constants.c1.clone(),
            l: constants.l.clone(),
            eta: eta.clone(),
            three_quarters: delta.ratio_like(3, 4),
            x_level: one_plus.recip(),
            y_level: (one_plus * 2i64).recip(),
            predicted_threshold,
            last_t: 0,
            t_s: None,
            t1: None,
            t2: None,
            after_threshold: None,
            max_x1: None,
            peaks: PeakDetector::new(peak_floor),
        }
    }

    /// Tracker for the default peak floor `0.05`.
    pub fn with_default_floor(delta: &Real, constants: &RegularizerConstants, eta: &Real) -> Self {
        Self::new(delta, constants, eta, delta.ratio_like(1, 20))
    }

    pub fn push(&mut self, t: u64, x1: &Real, y1: &Real, gap: &Real) {
        self.last_t = t;
        if self.t_s.is_none() && *x1 >= self.three_quarters {
            self.t_s = Some(t);
        }
        if self.t1.is_none() && *x1 >= self.x_level {
            self.t1 = Some(t);
        }
        if self.t1.is_some() && self.t2.is_none() && *y1 >= self.y_level {
            self.t2 = Some(t);
        }
        if x1.int_like(t as i64) >= self.predicted_threshold
            && self.after_threshold.as_ref().is_none_or(|(_, g)| gap > g)
        {
            self.after_threshold = Some((t, gap.clone()));
        }
        if self.max_x1.as_ref().is_none_or(|m| x1 > m) {
            self.max_x1 = Some(x1.clone());
        }
        self.peaks.push(t, gap);
    }

    pub fn finish(self) -> StageReport {
        let two_eta_l = &(&self.eta * &self.l) * 2i64;
        let predicted_ts_lb = two_eta_l.recip();
        let th = (&self.c1 / &(&two_eta_l * &self.delta)).floor_i64();
        let t3_window = self.t2.and_then(|t2| {
            let c1_th = &self.c1 * th;
            let start = t2 as i64 + (&c1_th / 20i64).ceil_i64();
            let end = t2 as i64 + (&c1_th / 10i64).floor_i64() - 2;
            (start <= end && start > 0).then_some((start as u64, end as u64))
        });
        let (peak_iteration, peak_gap_after_threshold) = match self.after_threshold {
            Some((t, g)) => (Some(t), Some(g)),
            None => (None, None),
        };
        StageReport {
            flat_len: self.t1.zip(self.t2).map(|(a, b)| b - a),
            delta: self.delta,
            iterations: self.last_t,
            t_s: self.t_s,
            t1: self.t1,
            t2: self.t2,
            t3_window,
            predicted_ts_lb,
            predicted_threshold: self.predicted_threshold,
            predicted_th: th,
            peak_gap_after_threshold,
            peak_iteration,
            max_x1: self.max_x1,
            peak_floor: self.peaks.floor.clone(),
            peaks: self.peaks.into_peaks(),
        }
    }
}

impl Observer for StageTracker {
    fn observe(&mut self, r: &Record) {
        self.push(r.t, &r.x[0], &r.y[0], &r.gap);
    }
}

/// Replays a [`StageTracker`] over the stored records of a 2-action,
/// constant-stepsize run on the hard instance.
///
/// Crossing times and gap peaks are exact under thinning because the runner
/// stores crossing iterates and peak neighbourhoods; the post-threshold
/// maximum is taken over stored records only.
pub fn detect_stages(traj: &Trajectory, delta: &Real, constants: &RegularizerConstants) -> Result<StageReport> {
    if traj.game.hard_delta().is_none() {
        return Err(Error::NotHardInstance);
    }
    let eta = traj
        .spec
        .schedule
        .constant_eta()
        .ok_or_else(|| Error::InvalidArgument("stage detection needs a constant stepsize".into()))?;
    let mut tracker = StageTracker::with_default_floor(delta, constants, eta);
    for r in &traj.records {
        tracker.observe(r);
    }
    Ok(tracker.finish())
}

/// Result of one run in a flat-region sweep.
#[derive(Debug, Clone)]
pub struct FlatEntry {
    pub delta: Real,
    pub flat_len: Option<u64>,
    /// `false` when `T2` was not reached within the horizon.
    pub complete: bool,
    pub report: StageReport,
}

/// Runs the hard instance for each `delta` (in parallel) and measures the
/// flat region `T2 - T1`.
pub fn flat_region_scaling(deltas: &[Real], spec: &AlgorithmSpec, iters: u64) -> Result<Vec<FlatEntry>> {
    let eta = spec
        .schedule
        .constant_eta()
        .ok_or_else(|| Error::InvalidArgument("flat-region sweep needs a constant stepsize".into()))?
        .clone();
    let params: Vec<HardInstanceParams> = deltas
        .iter()
        .map(|d| HardInstanceParams::new(d.clone()))
        .collect::<Result<_>>()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = params
            .iter()
            .map(|p| {
                let eta = eta.clone();
                scope.spawn(move || -> Result<FlatEntry> {
                    let game = games::hard_instance(p);
                    let consts = regularizers::constants(&spec.kind, &game.context());
                    let mut tracker = StageTracker::with_default_floor(p.delta(), &consts, &eta);
                    // only the streamed report is needed
                    let opts = RunOptions {
                        thin: iters,
                        peak_floor: None,
                    };
                    dynamics::run(&game, spec, iters, &opts, &mut [&mut tracker])?;
                    let report = tracker.finish();
                    Ok(FlatEntry {
                        delta: p.delta().clone(),
                        flat_len: report.flat_len,
                        complete: report.t2.is_some(),
                        report,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

/// Best gap so far and running sums for the average iterate.
#[derive(Debug, Clone)]
pub struct BestAverage {
    best: Option<(u64, Real)>,
    sum_x: Option<Vec<Real>>,
    sum_y: Option<Vec<Real>>,
    count: u64,
    limit: u64,
}

impl BestAverage {
    /// Accumulates iterates with `t <= limit`.
    pub fn new(limit: u64) -> Self {
        Self {
            best: None,
            sum_x: None,
            sum_y: None,
            count: 0,
            limit,
        }
    }

    fn add(acc: &mut Option<Vec<Real>>, p: &SimplexPoint) {
        match acc {
            Some(s) => {
                for (a, b) in s.iter_mut().zip(p.coords()) {
                    *a += b;
                }
            }
            None => *acc = Some(p.coords().to_vec()),
        }
    }

    /// `(best_gap, best_t, avg_iterate_gap)`.
    pub fn finish(self, game: &MatrixGame) -> Result<(Real, u64, Real)> {
        let (best_t, best) = self.best.ok_or_else(|| Error::InvalidArgument("no iterates observed".into()))?;
        let n = self.count as i64;
        let mean = |s: Vec<Real>| SimplexPoint::new(s.into_iter().map(|v| v / n).collect());
        let x = mean(self.sum_x.expect("set with best"))?;
        let y = mean(self.sum_y.expect("set with best"))?;
        Ok((best, best_t, games::duality_gap(game, &x, &y)?))
    }
}

impl Observer for BestAverage {
    fn observe(&mut self, r: &Record) {
        if r.t > self.limit {
            return;
        }
        if self.best.as_ref().is_none_or(|(_, g)| r.gap < *g) {
            self.best = Some((r.t, r.gap.clone()));
        }
        Self::add(&mut self.sum_x, &r.x);
        Self::add(&mut self.sum_y, &r.y);
        self.count += 1;
    }
}

/// Best iterate up to `T` and the gap of the average iterate, over the
/// stored records (all iterates for an unthinned trajectory).
pub fn best_and_average(traj: &Trajectory, t_max: u64) -> Result<(Real, u64, Real)> {
    if t_max < 1 || t_max > traj.horizon {
        return Err(Error::InvalidArgument(format!(
            "T must lie in [1, {}], got {t_max}",
            traj.horizon
        )));
    }
    let mut acc = BestAverage::new(t_max);
    for r in &traj.records {
        acc.observe(r);
    }
    acc.finish(&traj.game)
}

/// `max gap^t sqrt(t)` over a window of `(t, gap)` samples.
pub fn inverse_sqrt_constant<'a>(samples: impl IntoIterator<Item = (u64, &'a Real)>) -> Option<Real> {
    let mut best: Option<Real> = None;
    for (t, gap) in samples {
        let c = gap * &gap.int_like(t as i64).sqrt();
        if best.as_ref().is_none_or(|b| c > *b) {
            best = Some(c);
        }
    }
    best
}

/// Smallest `C` with `gap^t <= C / sqrt(t)` on `[t_min, t_max]`.
pub fn fit_inverse_sqrt_rate(traj: &Trajectory, t_min: u64, t_max: u64) -> Result<Real> {
    if t_min >= t_max || t_max > traj.horizon {
        return Err(Error::InvalidArgument(format!(
            "rate window [{t_min}, {t_max}] invalid for {} iterations",
            traj.horizon
        )));
    }
    let window = traj
        .records
        .iter()
        .filter(|r| r.t >= t_min && r.t <= t_max)
        .map(|r| (r.t, &r.gap));
    inverse_sqrt_constant(window).ok_or_else(|| Error::InvalidArgument("no stored iterates in the rate window".into()))
}

/// Outcome of [`verify_assumptions`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub kind: RegularizerKind,
    pub delta: Real,
    pub constants: RegularizerConstants,
    /// `delta <= delta'`.
    pub in_range: bool,
    pub unbiased_ok: bool,
    pub rational_ok: bool,
    pub lipschitz_ok: bool,
    pub item1_ok: bool,
    pub item2_ok: bool,
    pub witnesses: Vec<(String, Real)>,
    pub notes: Vec<String>,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.unbiased_ok && self.rational_ok && self.lipschitz_ok && self.item1_ok && self.item2_ok
    }

    /// `pass`, `fail` or `out-of-range`.
    pub fn status(&self) -> &'static str {
        if !self.in_range {
            "out-of-range"
        } else if self.all_ok() {
            "pass"
        } else {
            "fail"
        }
    }

    pub fn to_key_value(&self, digits: usize) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("regularizer", self.kind.to_string());
        kv("delta", self.delta.to_digits(digits));
        kv("status", self.status().to_string());
        kv("L", self.constants.l.to_digits(digits));
        kv("c1", self.constants.c1.to_digits(digits));
        kv("c2", self.constants.c2.to_digits(digits));
        kv("c3", self.constants.c3.to_digits(digits));
        kv("delta_prime", self.constants.delta_prime.to_digits(digits));
        kv("unbiased_ok", self.unbiased_ok.to_string());
        kv("rational_ok", self.rational_ok.to_string());
        kv("lipschitz_ok", self.lipschitz_ok.to_string());
        kv("item1_ok", self.item1_ok.to_string());
        kv("item2_ok", self.item2_ok.to_string());
        for (k, v) in &self.witnesses {
            kv(&format!("witness.{k}"), v.to_digits(digits));
        }
        for note in &self.notes {
            kv("note", note.clone());
        }
        out
    }

    pub const CSV_HEADER: &'static str =
        "regularizer,delta,status,L,c1,c2,c3,delta_prime,unbiased_ok,rational_ok,lipschitz_ok,item1_ok,item2_ok";

    pub fn to_csv_row(&self, digits: usize) -> String {
        let c = &self.constants;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.kind,
            self.delta.to_digits(digits),
            self.status(),
            c.l.to_digits(digits),
            c.c1.to_digits(digits),
            c.c2.to_digits(digits),
            c.c3.to_digits(digits),
            c.delta_prime.to_digits(digits),
            self.unbiased_ok,
            self.rational_ok,
            self.lipschitz_ok,
            self.item1_ok,
            self.item2_ok
        )
    }
}

/// Places where the closed-form constants disagree with their derivation.
fn constant_notes(kind: &RegularizerKind, k: &RegularizerConstants) -> Vec<String> {
    match kind {
        RegularizerKind::NegativeEntropy => {
            let stated = &k.c1.square() / &(&k.l * 480i64);
            vec![format!(
                "discrepancy.delta_prime: closed form c1^2/(480L) = {} is not attained, the derivation supports c1^2/(960L) = {}; using the latter",
                stated.to_digits(12),
                k.delta_prime.to_digits(12)
            )]
        }
        RegularizerKind::LogBarrier => {
            let a = &(&k.c3 * &k.c1.square()) / &(&k.l * 240i64);
            let closed = (a.int_like(1) / 4i64 + &a.square()).sqrt() - &a;
            vec![format!(
                "discrepancy.c2: closed form sqrt(1/4 + a^2) - a = {} is not F(-a) - 1/2; using F(-a) - 1/2 = {}",
                closed.to_digits(12),
                k.c2.to_digits(12)
            )]
        }
        _ => Vec::new(),
    }
}

/// Checks unbiasedness, rationality and Lipschitzness of `F_1` and both
/// items of the hard-instance assumption at `delta`.
///
/// The "for every E" items are evaluated at the largest qualifying `E`
/// (the inverse of the threshold); monotonicity of `F` covers the rest.
pub fn verify_assumptions(kind: &RegularizerKind, delta: &Real) -> Result<AssumptionReport> {
    let ctx = delta.context();
    if !delta.is_positive() || *delta >= ctx.ratio(1, 2) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    let k = regularizers::constants(kind, &ctx);
    let tol = ctx.default_tolerance();
    let one = ctx.one();
    let half = ctx.ratio(1, 2);
    let mut witnesses = Vec::new();

    let f0 = regularizers::f_one(kind, &ctx.zero());
    let unbiased_ok = tol.close(&f0, &half);
    witnesses.push(("F(0)".to_string(), f0));

    let big = ctx.int(1_000_000);
    let milli = ctx.ratio(1, 1000);
    let f_neg = regularizers::f_one(kind, &-&big);
    let f_pos = regularizers::f_one(kind, &big);
    let rational_ok = f_neg >= &one - &milli && f_pos <= milli;
    witnesses.push(("F(-1e6)".to_string(), f_neg));
    witnesses.push(("F(1e6)".to_string(), f_pos));

    let slope = max_difference_quotient(kind, &ctx);
    let lipschitz_ok = slope <= &k.l + &tol.abs;
    witnesses.push(("max_difference_quotient".to_string(), slope));

    let one_plus = &one + delta;
    let e0 = regularizers::f_inverse(kind, &one_plus.recip())?;
    let shift1 = &k.c1.square() / &(&(&k.l * 30i64) * delta);
    let lhs1 = regularizers::f_one(kind, &(&e0 - &shift1));
    let rhs1 = (&one + &k.c3) / &(&one + &k.c3 + delta);
    let item1_ok = lhs1 >= rhs1;
    witnesses.push(("item1.E0".to_string(), e0));
    witnesses.push(("item1.lhs".to_string(), lhs1));
    witnesses.push(("item1.rhs".to_string(), rhs1));

    let e1 = regularizers::f_inverse(kind, &(&one_plus * 2i64).recip())?;
    let shift2 = &(&k.c3 * &k.c1.square()) / &(&k.l * 120i64);
    let arg2 = &(&e1 - &shift2) + &(delta / &(&k.l * 4i64));
    let lhs2 = regularizers::f_one(kind, &arg2);
    let rhs2 = &half + &k.c2;
    let item2_ok = lhs2 >= rhs2;
    witnesses.push(("item2.E1".to_string(), e1));
    witnesses.push(("item2.lhs".to_string(), lhs2));
    witnesses.push(("item2.rhs".to_string(), rhs2));

    Ok(AssumptionReport {
        kind: kind.clone(),
        delta: delta.clone(),
        in_range: *delta <= k.delta_prime,
        notes: constant_notes(kind, &k),
        constants: k,
        unbiased_ok,
        rational_ok,
        lipschitz_ok,
        item1_ok,
        item2_ok,
        witnesses,
    })
}

/// Largest `|F(a) - F(b)| / (b - a)` over a uniform grid on `[-20, 20]`.
/// Every kind has its steepest slope at `E = 0`, well inside the grid.
fn max_difference_quotient(kind: &RegularizerKind, ctx: &Context) -> Real {
    let step = ctx.ratio(1, 20);
    let values: Vec<Real> = (-400..=400)
        .map(|i| regularizers::f_one(kind, &(&step * i)))
        .collect();
    let mut worst = ctx.zero();
    for w in values.windows(2) {
        worst = worst.max_of(&((&w[0] - &w[1]).abs() / &step));
    }
    worst
}
