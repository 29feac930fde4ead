//! OFTRL and OOMD self-play.
//!
//! Both players update simultaneously from the previous iterate's losses.
//! A run streams every iterate to the attached observers and stores a
//! (possibly thinned) trajectory.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::games::{self, MatrixGame, SimplexPoint};
use crate::numerics::{self, Context, Real};
use crate::regularizers::{self, RegularizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Oftrl,
    Oomd,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Oftrl => "oftrl",
            Family::Oomd => "oomd",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepsizeSchedule {
    Constant(Real),
    /// `eta_t = 1 / sqrt(epsilon + sum_{k<t} |l_k|^2)`, per player.
    AdaGrad { epsilon: Real },
}

impl StepsizeSchedule {
    pub fn constant(eta: Real) -> Result<Self> {
        if !eta.is_positive() {
            return Err(Error::InvalidArgument(format!("stepsize must be positive, got {eta}")));
        }
        Ok(Self::Constant(eta))
    }

    pub fn adagrad(epsilon: Real) -> Result<Self> {
        if !epsilon.is_positive() {
            return Err(Error::InvalidArgument(format!("AdaGrad epsilon must be positive, got {epsilon}")));
        }
        Ok(Self::AdaGrad { epsilon })
    }

    pub fn constant_eta(&self) -> Option<&Real> {
        match self {
            Self::Constant(eta) => Some(eta),
            Self::AdaGrad { .. } => None,
        }
    }
}

impl fmt::Display for StepsizeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(eta) => write!(f, "constant:{eta}"),
            Self::AdaGrad { epsilon } => write!(f, "adagrad:{epsilon}"),
        }
    }
}

/// Stepsize for the next round given one player's past loss vectors.
pub fn next_stepsize(schedule: &StepsizeSchedule, history: &[Vec<Real>]) -> Real {
    match schedule {
        StepsizeSchedule::Constant(eta) => eta.clone(),
        StepsizeSchedule::AdaGrad { epsilon } => {
            let mut acc = epsilon.clone();
            for loss in history {
                acc += squared_norm(loss);
            }
            acc.sqrt().recip()
        }
    }
}

fn squared_norm(v: &[Real]) -> Real {
    let mut acc = v[0].square();
    for x in &v[1..] {
        acc += x.square();
    }
    acc
}

/// Incremental form of [`next_stepsize`].
#[derive(Debug, Clone)]
struct StepsizeState {
    schedule: StepsizeSchedule,
    sum_sq: Real,
}

impl StepsizeState {
    fn new(schedule: &StepsizeSchedule, ctx: &Context) -> Self {
        Self {
            schedule: schedule.clone(),
            sum_sq: ctx.zero(),
        }
    }

    fn current(&self) -> Real {
        match &self.schedule {
            StepsizeSchedule::Constant(eta) => eta.clone(),
            StepsizeSchedule::AdaGrad { epsilon } => (epsilon + &self.sum_sq).sqrt().recip(),
        }
    }

    fn observe(&mut self, loss: &[Real]) {
        if matches!(self.schedule, StepsizeSchedule::AdaGrad { .. }) {
            self.sum_sq += squared_norm(loss);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSpec {
    pub family: Family,
    pub kind: RegularizerKind,
    pub schedule: StepsizeSchedule,
}

impl AlgorithmSpec {
    pub fn new(family: Family, kind: RegularizerKind, schedule: StepsizeSchedule) -> Self {
        Self { family, kind, schedule }
    }

    /// OOMD with the squared Euclidean regularizer.
    pub fn is_ogda(&self) -> bool {
        self.family == Family::Oomd && self.kind == RegularizerKind::SquaredEuclidean
    }

    /// Entropy regularizer under either family.
    pub fn is_omwu(&self) -> bool {
        self.kind == RegularizerKind::NegativeEntropy
    }
}

/// State of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: u64,
    pub x: SimplexPoint,
    pub y: SimplexPoint,
    /// Secondary OOMD sequence.
    pub x_hat: Option<SimplexPoint>,
    pub y_hat: Option<SimplexPoint>,
    pub loss_x: Vec<Real>,
    pub loss_y: Vec<Real>,
    /// Cumulative loss differences `E^t` (2-action players only).
    pub cum_x: Option<Real>,
    pub cum_y: Option<Real>,
    pub gap: Real,
    pub eta_x: Real,
    pub eta_y: Real,
    /// Coordinates moved off the boundary while producing this iterate.
    pub clamps: u32,
}

impl Record {
    /// `e^t_x = l^t_x[1] - l^t_x[2]`.
    pub fn diff_x(&self) -> Option<Real> {
        (self.loss_x.len() == 2).then(|| &self.loss_x[0] - &self.loss_x[1])
    }

    pub fn diff_y(&self) -> Option<Real> {
        (self.loss_y.len() == 2).then(|| &self.loss_y[0] - &self.loss_y[1])
    }
}

/// Sees every iterate of a run, including those dropped by thinning.
pub trait Observer {
    fn observe(&mut self, record: &Record);
}

impl<F: FnMut(&Record)> Observer for F {
    fn observe(&mut self, record: &Record) {
        self(record)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Store every `thin`-th iterate (plus crossings and gap peaks).
    pub thin: u64,
    /// Gap local maxima at or above this floor are stored with both neighbours.
    pub peak_floor: Option<Real>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            thin: 1,
            peak_floor: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub game: MatrixGame,
    pub spec: AlgorithmSpec,
    /// Number of iterations simulated.
    pub horizon: u64,
    pub thin: u64,
    pub records: Vec<Record>,
    pub total_clamps: u64,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("a run stores at least one record")
    }

    /// Record for iteration `t`, when stored.
    pub fn at(&self, t: u64) -> Option<&Record> {
        self.records
            .binary_search_by_key(&t, |r| r.t)
            .ok()
            .map(|i| &self.records[i])
    }
}

pub fn run_oftrl(game: &MatrixGame, spec: &AlgorithmSpec, iters: u64) -> Result<Trajectory> {
    if spec.family != Family::Oftrl {
        return Err(Error::InvalidArgument("run_oftrl needs an OFTRL spec".into()));
    }
    run(game, spec, iters, &RunOptions::default(), &mut [])
}

pub fn run_oomd(game: &MatrixGame, spec: &AlgorithmSpec, iters: u64) -> Result<Trajectory> {
    if spec.family != Family::Oomd {
        return Err(Error::InvalidArgument("run_oomd needs an OOMD spec".into()));
    }
    run(game, spec, iters, &RunOptions::default(), &mut [])
}

/// Per-player learner state.
enum Learner {
    /// 2-action OFTRL driven by the scalar cumulative difference.
    FtrlPair { cum: Real },
    FtrlVec { cum: Vec<Real> },
    Omd { anchor: SimplexPoint },
}

struct Player {
    learner: Learner,
    stepsize: StepsizeState,
    point: SimplexPoint,
    last_loss: Option<Vec<Real>>,
}

impl Player {
    fn new(dim: usize, spec: &AlgorithmSpec, ctx: &Context) -> Self {
        let start = SimplexPoint::uniform(dim, ctx);
        let learner = match spec.family {
            Family::Oftrl if dim == 2 => Learner::FtrlPair { cum: ctx.zero() },
            Family::Oftrl => Learner::FtrlVec {
                cum: vec![ctx.zero(); dim],
            },
            Family::Oomd => Learner::Omd { anchor: start.clone() },
        };
        Self {
            learner,
            stepsize: StepsizeState::new(&spec.schedule, ctx),
            point: start,
            last_loss: None,
        }
    }

    /// Produces the next iterate from the losses seen so far.
    fn step(&mut self, kind: &RegularizerKind, clamps: &mut u32) -> Result<Real> {
        let eta = self.stepsize.current();
        let loss = self.last_loss.as_ref().expect("step after first observation");
        let fix = |p: SimplexPoint, clamps: &mut u32| {
            if kind.is_legendre() {
                let (p, moved) = regularizers::clamp_interior(p);
                *clamps += moved;
                p
            } else {
                p
            }
        };
        self.point = match &mut self.learner {
            Learner::FtrlPair { cum } => {
                let arg = &*cum + &(&loss[0] - &loss[1]);
                fix(regularizers::ftrl_argmin_2d(kind, &eta, &arg)?, clamps)
            }
            Learner::FtrlVec { cum } => {
                let g: Vec<Real> = cum.iter().zip(loss).map(|(c, l)| c + l).collect();
                fix(regularizers::ftrl_argmin(kind, &eta, &g)?, clamps)
            }
            Learner::Omd { anchor } => {
                let next_anchor = fix(regularizers::bregman_prox(kind, &eta, loss, anchor)?, clamps);
                let point = fix(regularizers::bregman_prox(kind, &eta, loss, &next_anchor)?, clamps);
                *anchor = next_anchor;
                point
            }
        };
        Ok(eta)
    }

    fn observe(&mut self, loss: Vec<Real>) {
        match &mut self.learner {
            Learner::FtrlPair { cum } => *cum += &loss[0] - &loss[1],
            Learner::FtrlVec { cum } => {
                for (c, l) in cum.iter_mut().zip(&loss) {
                    *c += l;
                }
            }
            Learner::Omd { .. } => {}
        }
        self.stepsize.observe(&loss);
        self.last_loss = Some(loss);
    }

    fn cum_diff(&self) -> Option<Real> {
        match &self.learner {
            Learner::FtrlPair { cum } => Some(cum.clone()),
            _ => None,
        }
    }

    fn anchor(&self) -> Option<SimplexPoint> {
        match &self.learner {
            Learner::Omd { anchor } => Some(anchor.clone()),
            _ => None,
        }
    }
}

/// Cumulative loss differences for 2-action OOMD players, tracked alongside
/// the learner so the CSV can report `E^t` for every family.
fn pair_cum(prev: Option<Real>, loss: &[Real]) -> Option<Real> {
    (loss.len() == 2).then(|| {
        let d = &loss[0] - &loss[1];
        match prev {
            Some(p) => p + &d,
            None => d,
        }
    })
}

/// Thresholds whose upward crossings are always stored.
struct CrossingRule {
    x_levels: Vec<Real>,
    y_levels: Vec<Real>,
}

impl CrossingRule {
    fn for_game(game: &MatrixGame) -> Self {
        match game.hard_delta() {
            Some(delta) => {
                let one_plus = delta.int_like(1) + delta;
                Self {
                    x_levels: vec![delta.ratio_like(3, 4), one_plus.recip()],
                    y_levels: vec![(one_plus * 2i64).recip()],
                }
            }
            None => Self {
                x_levels: vec![],
                y_levels: vec![],
            },
        }
    }

    fn crossed(&self, prev: &Record, cur: &Record) -> bool {
        let up = |levels: &[Real], a: &Real, b: &Real| levels.iter().any(|l| a < l && b >= l);
        up(&self.x_levels, &prev.x[0], &cur.x[0]) || up(&self.y_levels, &prev.y[0], &cur.y[0])
    }
}

struct Pending {
    record: Record,
    keep: bool,
}

/// Three-record window deciding which iterates survive thinning.
struct Thinner {
    thin: u64,
    horizon: u64,
    floor: Option<Real>,
    crossings: CrossingRule,
    window: VecDeque<Pending>,
    stored: Vec<Record>,
}

impl Thinner {
    fn push(&mut self, record: Record) {
        let mut keep = record.t == 1 || record.t.is_multiple_of(self.thin) || record.t == self.horizon;
        if let Some(prev) = self.window.back() {
            keep |= self.crossings.crossed(&prev.record, &record);
        }
        self.window.push_back(Pending { record, keep });
        if self.window.len() == 3 {
            let [a, b, c] = [&self.window[0], &self.window[1], &self.window[2]];
            let is_peak = b.record.gap >= a.record.gap
                && b.record.gap > c.record.gap
                && self.floor.as_ref().is_some_and(|f| b.record.gap >= *f);
            if is_peak {
                for p in self.window.iter_mut() {
                    p.keep = true;
                }
            }
            let oldest = self.window.pop_front().expect("window is full");
            if oldest.keep {
                self.stored.push(oldest.record);
            }
        }
    }

    fn finish(mut self) -> Vec<Record> {
        while let Some(p) = self.window.pop_front() {
            if p.keep {
                self.stored.push(p.record);
            }
        }
        self.stored
    }
}

/// Simulates `iters` rounds of self-play.
pub fn run(
    game: &MatrixGame,
    spec: &AlgorithmSpec,
    iters: u64,
    opts: &RunOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    if iters < 1 {
        return Err(Error::InvalidArgument("number of iterations must be at least 1".into()));
    }
    if opts.thin < 1 {
        return Err(Error::InvalidArgument("thinning factor must be at least 1".into()));
    }
    let ctx = game.context();
    let mut px = Player::new(game.rows(), spec, &ctx);
    let mut py = Player::new(game.cols(), spec, &ctx);
    let mut thinner = Thinner {
        thin: opts.thin,
        horizon: iters,
        floor: opts.peak_floor.clone(),
        crossings: CrossingRule::for_game(game),
        window: VecDeque::with_capacity(3),
        stored: Vec::new(),
    };
    let mut cum_x: Option<Real> = None;
    let mut cum_y: Option<Real> = None;
    let mut total_clamps = 0u64;
    for t in 1..=iters {
        let mut clamps = 0u32;
        let (eta_x, eta_y) = if t == 1 {
            (px.stepsize.current(), py.stepsize.current())
        } else {
            (px.step(&spec.kind, &mut clamps)?, py.step(&spec.kind, &mut clamps)?)
        };
        let (lx, ly) = games::loss_vectors(game, &px.point, &py.point)?;
        let best_col = -numerics::argmin(&ly).1;
        let gap = best_col - numerics::argmin(&lx).1;
        cum_x = px.cum_diff().map(|c| c + &(&lx[0] - &lx[1])).or_else(|| pair_cum(cum_x, &lx));
        cum_y = py.cum_diff().map(|c| c + &(&ly[0] - &ly[1])).or_else(|| pair_cum(cum_y, &ly));
        let record = Record {
            t,
            x: px.point.clone(),
            y: py.point.clone(),
            x_hat: px.anchor(),
            y_hat: py.anchor(),
            loss_x: lx.clone(),
            loss_y: ly.clone(),
            cum_x: cum_x.clone(),
            cum_y: cum_y.clone(),
            gap,
            eta_x,
            eta_y,
            clamps,
        };
        px.observe(lx);
        py.observe(ly);
        total_clamps += u64::from(clamps);
        for obs in observers.iter_mut() {
            obs.observe(&record);
        }
        thinner.push(record);
    }
    Ok(Trajectory {
        game: game.clone(),
        spec: spec.clone(),
        horizon: iters,
        thin: opts.thin,
        records: thinner.finish(),
        total_clamps,
    })
}

/// Largest deviation of `x^t[1]` from `F_{eta_t}(E^{t-1} + e^{t-1})` over
/// consecutive stored records of a 2-action OFTRL run. `None` when the
/// trajectory is not of that shape.
pub fn self_consistency_error(traj: &Trajectory) -> Option<Real> {
    if traj.spec.family != Family::Oftrl || traj.game.rows() != 2 || traj.game.cols() != 2 {
        return None;
    }
    let mut worst = traj.game.context().zero();
    for pair in traj.records.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if cur.t != prev.t + 1 {
            continue;
        }
        for (cum, diff, eta, coord) in [
            (&prev.cum_x, prev.diff_x(), &cur.eta_x, &cur.x[0]),
            (&prev.cum_y, prev.diff_y(), &cur.eta_y, &cur.y[0]),
        ] {
            let arg = cum.as_ref()? + &diff?;
            let expect = regularizers::f_eta(&traj.spec.kind, eta, &arg).ok()?;
            worst = worst.max_of(&(coord - &expect).abs());
        }
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{hard_instance, HardInstanceParams};

    fn ctx() -> Context {
        Context::new(40).unwrap()
    }

    fn hard(c: &Context, d: &str) -> MatrixGame {
        hard_instance(&HardInstanceParams::new(c.parse(d).unwrap()).unwrap())
    }

    fn spec(c: &Context, family: Family, kind: RegularizerKind, eta: &str) -> AlgorithmSpec {
        AlgorithmSpec::new(family, kind, StepsizeSchedule::constant(c.parse(eta).unwrap()).unwrap())
    }

    #[test]
    fn stepsize_examples() {
        let c = ctx();
        let tol = c.default_tolerance();
        let eta = c.parse("0.1").unwrap();
        assert_eq!(next_stepsize(&StepsizeSchedule::Constant(eta.clone()), &[vec![c.one()]]), eta);
        let ada = StepsizeSchedule::adagrad(eta.clone()).unwrap();
        assert!(tol.close(&next_stepsize(&ada, &[]), &eta.sqrt().recip()));
        let l = vec![c.parse("0.51").unwrap(), c.parse("0.5").unwrap()];
        let expect = (eta.clone() + &l[0].square() + &l[1].square()).sqrt().recip();
        assert!(tol.close(&next_stepsize(&ada, &[l]), &expect));
        assert!(StepsizeSchedule::constant(c.zero()).is_err());
        assert!(StepsizeSchedule::adagrad(c.int(-1)).is_err());
    }

    #[test]
    fn first_iterate_is_uniform() {
        let c = ctx();
        let g = hard(&c, "0.01");
        for family in [Family::Oftrl, Family::Oomd] {
            let tr = run(&g, &spec(&c, family, RegularizerKind::LogBarrier, "0.3"), 1, &RunOptions::default(), &mut []).unwrap();
            assert_eq!(tr.records.len(), 1);
            assert_eq!(tr.records[0].x, SimplexPoint::uniform(2, &c));
            assert_eq!(tr.records[0].y, SimplexPoint::uniform(2, &c));
        }
    }

    #[test]
    fn second_oftrl_iterate_by_hand() {
        let c = ctx();
        let tol = c.default_tolerance();
        let g = hard(&c, "0.01");
        let s = spec(&c, Family::Oftrl, RegularizerKind::NegativeEntropy, "0.1");
        let tr = run_oftrl(&g, &s, 2).unwrap();
        let e1 = c.parse("0.005").unwrap();
        assert!(tol.close(&tr.records[0].diff_x().unwrap(), &e1));
        let expect = regularizers::f_eta(&RegularizerKind::NegativeEntropy, &c.parse("0.1").unwrap(), &(e1 * 2i64)).unwrap();
        assert!(tol.close(&tr.records[1].x[0], &expect));
        assert!(run_oomd(&g, &s, 2).is_err());
    }

    #[test]
    fn thinning_keeps_endpoints_and_multiples() {
        let c = ctx();
        let g = hard(&c, "0.01");
        let s = spec(&c, Family::Oftrl, RegularizerKind::SquaredEuclidean, "0.1");
        let opts = RunOptions { thin: 7, peak_floor: None };
        let tr = run(&g, &s, 50, &opts, &mut []).unwrap();
        let ts: Vec<u64> = tr.records.iter().map(|r| r.t).collect();
        assert_eq!(ts.first(), Some(&1));
        assert_eq!(ts.last(), Some(&50));
        for k in (7..=49).step_by(7) {
            assert!(ts.contains(&k));
        }
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn observers_see_every_iterate() {
        let c = ctx();
        let g = hard(&c, "0.01");
        let s = spec(&c, Family::Oftrl, RegularizerKind::NegativeEntropy, "0.1");
        let mut seen = Vec::new();
        let mut obs = |r: &Record| seen.push(r.t);
        let opts = RunOptions { thin: 10, peak_floor: None };
        run(&g, &s, 35, &opts, &mut [&mut obs]).unwrap();
        assert_eq!(seen, (1..=35).collect::<Vec<_>>());
    }

    #[test]
    fn general_dimension_oftrl_runs() {
        let c = ctx();
        let text = "3 3 1\n0 1 0.5\n0.5 0 1\n1 0.5 0\n";
        let g = MatrixGame::parse(text, &c).unwrap();
        for kind in [RegularizerKind::NegativeEntropy, RegularizerKind::SquaredEuclidean, RegularizerKind::LogBarrier] {
            let tr = run_oftrl(&g, &spec(&c, Family::Oftrl, kind, "0.2"), 20).unwrap();
            assert!(tr.last().cum_x.is_none());
            assert!(!tr.last().gap.is_sign_negative());
        }
    }
}
