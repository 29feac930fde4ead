//! Command implementations behind the `lastiter` binary.
//!
//! Each command returns the text it prints on stdout; files are written as
//! a side effect. Argument parsing lives in `main.rs`.

pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lastiter_core::analysis::{self, AssumptionReport, StageReport};
use lastiter_core::dynamics::{self, AlgorithmSpec, Family, RunOptions, StepsizeSchedule, Trajectory};
use lastiter_core::games::{self, HardInstanceParams};
use lastiter_core::io::{self, OutputPrecision};
use lastiter_core::regularizers::{self, RegularizerKind};
use lastiter_core::{Context, MatrixGame, Real, Tolerance};

/// Digits used for numbers in report blocks.
pub const REPORT_DIGITS: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lastiter_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Validation problems exit with 1.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Output of a command: stdout text and whether its check passed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub stdout: String,
    pub passed: bool,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, passed: true }
    }

    /// 0 on success, 2 when a check failed.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// `hard:<delta>`, `file:<path>` or `lift:<delta>:<n>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GameSource {
    Hard { delta: String },
    File { path: PathBuf },
    Lift { delta: String, copies: usize },
}

impl FromStr for GameSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("game must be hard:<delta>, file:<path> or lift:<delta>:<n>, got {s:?}");
        if let Some(d) = s.strip_prefix("hard:") {
            return Ok(Self::Hard { delta: d.to_string() });
        }
        if let Some(p) = s.strip_prefix("file:") {
            if p.is_empty() {
                return Err(bad());
            }
            return Ok(Self::File { path: p.into() });
        }
        if let Some(rest) = s.strip_prefix("lift:") {
            let (d, n) = rest.rsplit_once(':').ok_or_else(bad)?;
            let copies = n.parse().map_err(|_| bad())?;
            return Ok(Self::Lift {
                delta: d.to_string(),
                copies,
            });
        }
        Err(bad())
    }
}

impl std::fmt::Display for GameSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Hard { delta } => write!(f, "hard:{delta}"),
            Self::File { path } => write!(f, "file:{}", path.display()),
            Self::Lift { delta, copies } => write!(f, "lift:{delta}:{copies}"),
        }
    }
}

impl GameSource {
    /// Builds the game; lifted games use the regularizer's lift exponent.
    pub fn build(&self, kind: &RegularizerKind, ctx: &Context) -> CliResult<MatrixGame> {
        Ok(match self {
            Self::Hard { delta } => games::hard_instance(&HardInstanceParams::new(ctx.parse(delta)?)?),
            Self::File { path } => {
                let text = fs::read_to_string(path).map_err(|source| CliError::File {
                    path: path.clone(),
                    source,
                })?;
                MatrixGame::parse(&text, ctx)?
            }
            Self::Lift { delta, copies } => {
                let base = games::hard_instance(&HardInstanceParams::new(ctx.parse(delta)?)?);
                games::duplicate_lift(&base, *copies, &kind.lift_alpha(ctx))?
            }
        })
    }
}

pub fn parse_family(s: &str) -> CliResult<Family> {
    match s {
        "oftrl" => Ok(Family::Oftrl),
        "oomd" => Ok(Family::Oomd),
        other => Err(CliError::Usage(format!("algorithm must be oftrl or oomd, got {other:?}"))),
    }
}

/// Exactly one of a constant stepsize or an AdaGrad epsilon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stepsize {
    Eta(String),
    AdaGrad(String),
}

impl Stepsize {
    pub fn from_flags(eta: Option<String>, adagrad_eps: Option<String>) -> CliResult<Self> {
        match (eta, adagrad_eps) {
            (Some(e), None) => Ok(Self::Eta(e)),
            (None, Some(e)) => Ok(Self::AdaGrad(e)),
            _ => Err(CliError::Usage("give exactly one of --eta or --adagrad-eps".into())),
        }
    }

    pub fn schedule(&self, ctx: &Context) -> CliResult<StepsizeSchedule> {
        Ok(match self {
            Self::Eta(e) => StepsizeSchedule::constant(ctx.parse(e)?)?,
            Self::AdaGrad(e) => StepsizeSchedule::adagrad(ctx.parse(e)?)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algo: String,
    pub reg: String,
    pub stepsize: Stepsize,
    pub game: GameSource,
    pub iters: u64,
    pub precision: u32,
    pub out: PathBuf,
    pub thin: u64,
    pub svg: bool,
    pub log_gap: bool,
    pub full_precision: bool,
    pub digits: usize,
}

impl RunConfig {
    fn echo(&self) -> String {
        let mut s = String::new();
        let step = match &self.stepsize {
            Stepsize::Eta(e) => format!("eta={e}"),
            Stepsize::AdaGrad(e) => format!("adagrad_eps={e}"),
        };
        for line in [
            "command=run".to_string(),
            format!("algo={}", self.algo),
            format!("reg={}", self.reg),
            step,
            format!("game={}", self.game),
            format!("iters={}", self.iters),
            format!("precision={}", self.precision),
            format!("thin={}", self.thin),
            format!("output_digits={}", if self.full_precision { "full".to_string() } else { self.digits.to_string() }),
            format!("svg={}", self.svg),
            format!("log_gap={}", self.log_gap),
        ] {
            let _ = writeln!(s, "{line}");
        }
        s
    }

    fn output_precision(&self) -> OutputPrecision {
        if self.full_precision {
            OutputPrecision::Full
        } else {
            OutputPrecision::Digits(self.digits)
        }
    }
}

/// Path with `ext` appended to the file name (`t.csv` -> `t.csv.meta`) or
/// replacing the extension (`t.csv` -> `t.svg`).
fn sibling(path: &Path, ext: &str, replace: bool) -> PathBuf {
    if replace {
        path.with_extension(ext)
    } else {
        let mut s = path.as_os_str().to_owned();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    }
}

pub struct RunResult {
    pub outcome: Outcome,
    pub trajectory: Trajectory,
    pub stages: Option<StageReport>,
}

pub fn cmd_run(cfg: &RunConfig) -> CliResult<RunResult> {
    let ctx = Context::new(cfg.precision)?;
    let kind = RegularizerKind::parse(&cfg.reg, &ctx)?;
    let family = parse_family(&cfg.algo)?;
    let schedule = cfg.stepsize.schedule(&ctx)?;
    if cfg.iters < 1 {
        return Err(CliError::Usage("--iters must be at least 1".into()));
    }
    if cfg.thin < 1 {
        return Err(CliError::Usage("--thin must be at least 1".into()));
    }
    let game = cfg.game.build(&kind, &ctx)?;
    let spec = AlgorithmSpec::new(family, kind.clone(), schedule);
    let opts = RunOptions {
        thin: cfg.thin,
        peak_floor: Some(ctx.ratio(1, 20)),
    };
    let traj = dynamics::run(&game, &spec, cfg.iters, &opts, &mut [])?;

    let mut csv = Vec::new();
    io::write_trajectory_csv(&mut csv, &traj, cfg.output_precision())?;
    write_file(&cfg.out, &csv)?;
    let mut meta = cfg.echo();
    let _ = writeln!(meta, "stored_records={}", traj.records.len());
    let _ = writeln!(meta, "total_clamps={}", traj.total_clamps);
    write_file(&sibling(&cfg.out, "meta", false), meta.as_bytes())?;

    let last = traj.last();
    let mut stdout = String::new();
    let _ = writeln!(stdout, "csv={}", cfg.out.display());
    let _ = writeln!(stdout, "iterations={}", traj.horizon);
    let _ = writeln!(stdout, "stored_records={}", traj.records.len());
    let _ = writeln!(stdout, "final_gap={}", last.gap.to_digits(REPORT_DIGITS));
    let _ = writeln!(stdout, "total_clamps={}", traj.total_clamps);

    if cfg.svg {
        let points: Vec<svg::Point> = traj
            .records
            .iter()
            .map(|r| svg::Point {
                t: r.t,
                x1: r.x[0].to_f64(),
                y1: r.y[0].to_f64(),
                gap: r.gap.to_f64(),
            })
            .collect();
        let title = format!("{} {} on {} ({})", cfg.algo, cfg.reg, cfg.game, spec.schedule);
        let doc = svg::render(&points, &svg::PlotOptions { title, log_gap: cfg.log_gap });
        let path = sibling(&cfg.out, "svg", true);
        write_file(&path, doc.as_bytes())?;
        let _ = writeln!(stdout, "svg={}", path.display());
    }

    let stages = match (game.hard_delta(), spec.schedule.constant_eta()) {
        (Some(delta), Some(eta)) if game.rows() == 2 => {
            // replay the same rounded values the CSV carries, so `stages` on
            // the file reproduces this block
            let rows = io::read_trajectory_csv(&csv[..], &ctx)?;
            let consts = regularizers::constants(&kind, &ctx);
            Some(io::stages_from_rows(&rows, delta, &consts, eta))
        }
        _ => None,
    };
    if let Some(rep) = &stages {
        stdout.push_str(&rep.to_key_value(REPORT_DIGITS));
    }
    Ok(RunResult {
        outcome: Outcome::ok(stdout),
        trajectory: traj,
        stages,
    })
}

pub struct StagesConfig {
    pub csv: PathBuf,
    pub delta: String,
    pub reg: String,
    pub eta: String,
    pub precision: u32,
}

/// Stage report for a trajectory CSV. The caller's `delta` is used as given
/// even if the run was made with a different one.
pub fn cmd_stages(cfg: &StagesConfig) -> CliResult<(Outcome, StageReport)> {
    let ctx = Context::new(cfg.precision)?;
    let kind = RegularizerKind::parse(&cfg.reg, &ctx)?;
    let delta = HardInstanceParams::new(ctx.parse(&cfg.delta)?)?.delta().clone();
    let eta = StepsizeSchedule::constant(ctx.parse(&cfg.eta)?)?;
    let file = fs::File::open(&cfg.csv).map_err(|source| CliError::File {
        path: cfg.csv.clone(),
        source,
    })?;
    let rows = io::read_trajectory_csv(std::io::BufReader::new(file), &ctx)?;
    let consts = regularizers::constants(&kind, &ctx);
    let rep = io::stages_from_rows(&rows, &delta, &consts, eta.constant_eta().expect("constant"));
    Ok((Outcome::ok(rep.to_key_value(REPORT_DIGITS)), rep))
}

/// `delta` may be a decimal or `auto` (half of `delta'`).
pub fn cmd_verify(reg: &str, delta: &str, precision: u32) -> CliResult<(Outcome, AssumptionReport)> {
    let ctx = Context::new(precision)?;
    let kind = RegularizerKind::parse(reg, &ctx)?;
    let delta = if delta == "auto" {
        regularizers::constants(&kind, &ctx).delta_prime / 2i64
    } else {
        ctx.parse(delta)?
    };
    let rep = analysis::verify_assumptions(&kind, &delta)?;
    let outcome = Outcome {
        stdout: rep.to_key_value(REPORT_DIGITS),
        passed: rep.status() != "fail",
    };
    Ok((outcome, rep))
}

pub struct LiftCheckConfig {
    pub delta: String,
    pub copies: usize,
    pub reg: String,
    pub eta: String,
    pub iters: u64,
    pub precision: u32,
}

#[derive(Debug, Clone)]
pub struct LiftReport {
    pub alpha: Real,
    pub max_half_sum_error: Real,
    pub max_within_half_spread: Real,
    pub bound: Real,
}

impl LiftReport {
    pub fn passed(&self) -> bool {
        self.max_half_sum_error <= self.bound && self.max_within_half_spread <= self.bound
    }
}

/// Runs OFTRL on the 2x2 instance and on its `2n x 2n` lift side by side.
pub fn cmd_liftcheck(cfg: &LiftCheckConfig) -> CliResult<(Outcome, LiftReport)> {
    let ctx = Context::new(cfg.precision)?;
    let kind = RegularizerKind::parse(&cfg.reg, &ctx)?;
    if cfg.copies < 1 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    if cfg.iters < 1 {
        return Err(CliError::Usage("--iters must be at least 1".into()));
    }
    let base = games::hard_instance(&HardInstanceParams::new(ctx.parse(&cfg.delta)?)?);
    let alpha = kind.lift_alpha(&ctx);
    let lifted = games::duplicate_lift(&base, cfg.copies, &alpha)?;
    let spec = AlgorithmSpec::new(Family::Oftrl, kind, StepsizeSchedule::constant(ctx.parse(&cfg.eta)?)?);
    let (small, big) = std::thread::scope(|s| {
        let a = s.spawn(|| dynamics::run_oftrl(&base, &spec, cfg.iters));
        let b = s.spawn(|| dynamics::run_oftrl(&lifted, &spec, cfg.iters));
        (a.join().expect("run panicked"), b.join().expect("run panicked"))
    });
    let (small, big) = (small?, big?);
    let n = cfg.copies;
    let mut spread = ctx.zero();
    let mut mismatch = ctx.zero();
    for (rs, rb) in small.records.iter().zip(&big.records) {
        for (p2, p) in [(&rs.x, &rb.x), (&rs.y, &rb.y)] {
            for (half, target) in [(&p.coords()[..n], &p2[0]), (&p.coords()[n..], &p2[1])] {
                let total = half.iter().fold(ctx.zero(), |a, b| a + b);
                mismatch = mismatch.max_of(&(total - target).abs());
                for v in half {
                    spread = spread.max_of(&(v - &half[0]).abs());
                }
            }
        }
    }
    let report = LiftReport {
        alpha,
        max_half_sum_error: mismatch,
        max_within_half_spread: spread,
        bound: Tolerance::from_digits(&ctx, cfg.precision as i32 - 20).abs,
    };
    let mut out = String::new();
    let _ = writeln!(out, "regularizer={}", spec.kind);
    let _ = writeln!(out, "n={n}");
    let _ = writeln!(out, "alpha={}", report.alpha.to_digits(REPORT_DIGITS));
    let _ = writeln!(out, "iterations={}", cfg.iters);
    let _ = writeln!(out, "max_half_sum_error={}", report.max_half_sum_error.to_digits(6));
    let _ = writeln!(out, "max_within_half_spread={}", report.max_within_half_spread.to_digits(6));
    let _ = writeln!(out, "bound={}", report.bound.to_digits(6));
    let _ = writeln!(out, "status={}", if report.passed() { "pass" } else { "fail" });
    Ok((
        Outcome {
            stdout: out,
            passed: report.passed(),
        },
        report,
    ))
}

pub struct SweepConfig {
    pub algo: String,
    pub reg: String,
    pub eta: String,
    pub deltas: Vec<String>,
    pub iters: u64,
    pub precision: u32,
    pub out: Option<PathBuf>,
}

pub struct SweepResult {
    pub outcome: Outcome,
    pub entries: Vec<analysis::FlatEntry>,
    pub warnings: Vec<String>,
}

/// One stage-report row per distinct `delta`; repeated values are dropped
/// with a warning.
pub fn cmd_sweep(cfg: &SweepConfig) -> CliResult<SweepResult> {
    let ctx = Context::new(cfg.precision)?;
    let kind = RegularizerKind::parse(&cfg.reg, &ctx)?;
    let family = parse_family(&cfg.algo)?;
    let spec = AlgorithmSpec::new(family, kind, StepsizeSchedule::constant(ctx.parse(&cfg.eta)?)?);
    let mut deltas: Vec<Real> = Vec::new();
    let mut warnings = Vec::new();
    for d in &cfg.deltas {
        let v = HardInstanceParams::new(ctx.parse(d)?)?.delta().clone();
        if deltas.contains(&v) {
            warnings.push(format!("warning: duplicate delta {d} ignored"));
        } else {
            deltas.push(v);
        }
    }
    let entries = analysis::flat_region_scaling(&deltas, &spec, cfg.iters)?;
    let mut csv = String::new();
    let _ = writeln!(csv, "{}", StageReport::CSV_HEADER);
    for e in &entries {
        let _ = writeln!(csv, "{}", e.report.to_csv_row(REPORT_DIGITS));
    }
    if let Some(path) = &cfg.out {
        write_file(path, csv.as_bytes())?;
    }
    Ok(SweepResult {
        outcome: Outcome::ok(csv),
        entries,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn game_sources() {
        assert_eq!("hard:0.01".parse(), Ok(GameSource::Hard { delta: "0.01".into() }));
        assert_eq!(
            "lift:0.05:3".parse(),
            Ok(GameSource::Lift {
                delta: "0.05".into(),
                copies: 3
            })
        );
        assert_eq!("file:g.txt".parse(), Ok(GameSource::File { path: "g.txt".into() }));
        assert!("lift:0.05".parse::<GameSource>().is_err());
        assert!("soft:1".parse::<GameSource>().is_err());
        assert_eq!(GameSource::from_str("lift:0.05:3").unwrap().to_string(), "lift:0.05:3");
    }

    #[test]
    fn stepsize_flags() {
        assert!(Stepsize::from_flags(Some("0.1".into()), None).is_ok());
        assert!(Stepsize::from_flags(None, Some("0.1".into())).is_ok());
        assert!(Stepsize::from_flags(None, None).is_err());
        assert!(Stepsize::from_flags(Some("0.1".into()), Some("0.1".into())).is_err());
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("a/t.csv"), "meta", false), PathBuf::from("a/t.csv.meta"));
        assert_eq!(sibling(Path::new("a/t.csv"), "svg", true), PathBuf::from("a/t.svg"));
    }
}
