//! Zero-sum matrix games, strategies and the hard 2x2 family.
//!
//! Losses follow the convention that both players minimize: the row player
//! sees `A y` and the column player sees `-A^T x`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::{self, Context, Real};

/// Where a game came from. Analyses that only make sense on the hard
/// instance check this tag.
#[derive(Debug, Clone, PartialEq)]
pub enum GameFamily {
    General,
    Hard { delta: Real },
    Lifted { delta: Option<Real>, copies: usize, alpha: Real },
}

/// A `rows x cols` loss matrix with entries in `[0, entry_bound]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    rows: usize,
    cols: usize,
    entries: Vec<Real>,
    entry_bound: Real,
    family: GameFamily,
}

impl MatrixGame {
    /// Builds a game from row-major entries, checking the entry range.
    pub fn new(rows: usize, cols: usize, entries: Vec<Real>, entry_bound: Real) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("game must have at least one row and column".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        let zero = entry_bound.int_like(0);
        if let Some(bad) = entries.iter().find(|a| **a < zero || **a > entry_bound) {
            return Err(Error::InvalidArgument(format!(
                "entry {bad} outside [0, {entry_bound}]"
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
            entry_bound,
            family: GameFamily::General,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &Real {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[Real] {
        &self.entries
    }

    pub fn entry_bound(&self) -> &Real {
        &self.entry_bound
    }

    pub fn family(&self) -> &GameFamily {
        &self.family
    }

    /// The hard-instance parameter, when this game is `A_delta` itself.
    pub fn hard_delta(&self) -> Option<&Real> {
        match &self.family {
            GameFamily::Hard { delta } => Some(delta),
            _ => None,
        }
    }

    pub fn context(&self) -> Context {
        self.entry_bound.context()
    }

    /// `A y`.
    pub fn row_losses(&self, y: &SimplexPoint) -> Result<Vec<Real>> {
        check_dim(self.cols, y.dim())?;
        Ok((0..self.rows)
            .map(|i| {
                let mut acc = self.entry(i, 0) * &y[0];
                for j in 1..self.cols {
                    acc += self.entry(i, j) * &y[j];
                }
                acc
            })
            .collect())
    }

    /// `A^T x`.
    pub fn col_payoffs(&self, x: &SimplexPoint) -> Result<Vec<Real>> {
        check_dim(self.rows, x.dim())?;
        Ok((0..self.cols)
            .map(|j| {
                let mut acc = self.entry(0, j) * &x[0];
                for i in 1..self.rows {
                    acc += self.entry(i, j) * &x[i];
                }
                acc
            })
            .collect())
    }

    /// `x^T A y`.
    pub fn value(&self, x: &SimplexPoint, y: &SimplexPoint) -> Result<Real> {
        let ay = self.row_losses(y)?;
        check_dim(self.rows, x.dim())?;
        let mut acc = &x[0] * &ay[0];
        for i in 1..self.rows {
            acc += &x[i] * &ay[i];
        }
        Ok(acc)
    }

    /// Parses the plain-text game format: a header line `d1 d2 entry_bound`
    /// followed by `d1` lines of `d2` decimal numbers.
    pub fn parse(text: &str, ctx: &Context) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::GameFile("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::GameFile(format!("bad header {header:?}")));
        }
        let rows: usize = fields[0]
            .parse()
            .map_err(|_| Error::GameFile(format!("bad row count {:?}", fields[0])))?;
        let cols: usize = fields[1]
            .parse()
            .map_err(|_| Error::GameFile(format!("bad column count {:?}", fields[1])))?;
        let bound = ctx.parse(fields[2])?;
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::GameFile(format!("missing row {}", r + 1)))?;
            let row: Vec<&str> = line.split_whitespace().collect();
            if row.len() != cols {
                return Err(Error::GameFile(format!(
                    "row {} has {} entries, expected {cols}",
                    r + 1,
                    row.len()
                )));
            }
            for tok in row {
                entries.push(ctx.parse(tok)?);
            }
        }
        if lines.next().is_some() {
            return Err(Error::GameFile("trailing data after last row".into()));
        }
        Self::new(rows, cols, entries, bound)
    }

    /// Inverse of [`MatrixGame::parse`] at full precision.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.rows, self.cols, self.entry_bound.to_canonical());
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.entry(i, j).to_canonical()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// A mixed strategy: non-negative coordinates summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    coords: Vec<Real>,
}

impl SimplexPoint {
    /// Validates non-negativity and the unit sum (within the default tolerance).
    pub fn new(coords: Vec<Real>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::NotSimplex("empty vector".into()));
        }
        let ctx = coords[0].context();
        let zero = ctx.zero();
        if let Some(neg) = coords.iter().find(|c| **c < zero) {
            return Err(Error::NotSimplex(format!("negative coordinate {neg}")));
        }
        let total = numerics::sum(&coords);
        if !ctx.default_tolerance().is_negligible(&(total.clone() - 1)) {
            return Err(Error::NotSimplex(format!("coordinates sum to {total}")));
        }
        Ok(Self { coords })
    }

    /// Wraps coordinates already known to lie on the simplex, renormalizing
    /// when the sum drifted beyond the default tolerance.
    pub(crate) fn from_normalized(mut coords: Vec<Real>) -> Self {
        let ctx = coords[0].context();
        let total = numerics::sum(&coords);
        if !ctx.default_tolerance().is_negligible(&(total.clone() - 1)) {
            for c in coords.iter_mut() {
                *c /= &total;
            }
        }
        Self { coords }
    }

    pub fn uniform(dim: usize, ctx: &Context) -> Self {
        assert!(dim > 0);
        let v = ctx.ratio(1, dim as i64);
        Self {
            coords: vec![v; dim],
        }
    }

    /// Two-action strategy `[p, 1 - p]`.
    pub fn pair(p: Real) -> Result<Self> {
        let q = p.int_like(1) - &p;
        Self::new(vec![p, q])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Real] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<Real> {
        self.coords
    }

    pub fn is_interior(&self) -> bool {
        self.coords.iter().all(Real::is_positive)
    }
}

impl std::ops::Index<usize> for SimplexPoint {
    type Output = Real;
    fn index(&self, i: usize) -> &Real {
        &self.coords[i]
    }
}

/// Parameter of the hard instance, `0 < delta < 1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstanceParams {
    delta: Real,
}

impl HardInstanceParams {
    pub fn new(delta: Real) -> Result<Self> {
        let half = delta.ratio_like(1, 2);
        if !delta.is_positive() || delta >= half {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1/2), got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> &Real {
        &self.delta
    }
}

/// `A_delta = [[1/2 + delta, 1/2], [0, 1]]`.
pub fn hard_instance(params: &HardInstanceParams) -> MatrixGame {
    let d = &params.delta;
    let half = d.ratio_like(1, 2);
    let entries = vec![&half + d, half, d.int_like(0), d.int_like(1)];
    let mut game = MatrixGame::new(2, 2, entries, d.int_like(1)).expect("A_delta entries lie in [0, 1]");
    game.family = GameFamily::Hard { delta: d.clone() };
    game
}

/// Closed-form unique equilibrium of `A_delta`.
pub fn hard_instance_nash(params: &HardInstanceParams) -> (SimplexPoint, SimplexPoint) {
    let d = &params.delta;
    let one_plus = d.int_like(1) + d;
    let x = vec![one_plus.recip(), d / &one_plus];
    let two_one_plus = &one_plus * 2i64;
    let y = vec![two_one_plus.recip(), (d.int_like(1) + &(d * 2i64)) / &two_one_plus];
    (SimplexPoint::from_normalized(x), SimplexPoint::from_normalized(y))
}

/// `max_j (A^T x)[j] - min_i (A y)[i]`; best responses are pure, so vertex
/// enumeration is exact.
pub fn duality_gap(game: &MatrixGame, x: &SimplexPoint, y: &SimplexPoint) -> Result<Real> {
    let col = game.col_payoffs(x)?;
    let row = game.row_losses(y)?;
    Ok(numerics::argmax(&col).1 - numerics::argmin(&row).1)
}

/// Loss vectors `(A y, -A^T x)` seen by the two players.
pub fn loss_vectors(game: &MatrixGame, x: &SimplexPoint, y: &SimplexPoint) -> Result<(Vec<Real>, Vec<Real>)> {
    let lx = game.row_losses(y)?;
    let ly = game.col_payoffs(x)?.into_iter().map(|v| -v).collect();
    Ok((lx, ly))
}

/// Embeds a 2x2 game into `2n x 2n` by duplicating each action `n` times and
/// scaling entries by `n^-alpha`.
pub fn duplicate_lift(game: &MatrixGame, copies: usize, alpha: &Real) -> Result<MatrixGame> {
    if game.rows != 2 || game.cols != 2 {
        return Err(Error::InvalidArgument("duplication lift needs a 2x2 game".into()));
    }
    if copies < 1 {
        return Err(Error::InvalidArgument("number of copies must be at least 1".into()));
    }
    let n = alpha.int_like(copies as i64);
    let scale = n.pow(&-alpha);
    let dim = 2 * copies;
    let half = |k: usize| usize::from(k >= copies);
    let mut entries = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            entries.push(game.entry(half(i), half(j)) * &scale);
        }
    }
    let bound = game.entry_bound() * &scale;
    let mut lifted = MatrixGame::new(dim, dim, entries, bound)?;
    lifted.family = GameFamily::Lifted {
        delta: game.hard_delta().cloned(),
        copies,
        alpha: alpha.clone(),
    };
    Ok(lifted)
}

/// `Dupl: Delta^2 -> Delta^2n`, splitting each coordinate evenly over its copies.
pub fn duplicate_strategy(x: &SimplexPoint, copies: usize) -> Result<SimplexPoint> {
    check_dim(2, x.dim())?;
    if copies < 1 {
        return Err(Error::InvalidArgument("number of copies must be at least 1".into()));
    }
    let n = copies as i64;
    let first = &x[0] / n;
    let second = &x[1] / n;
    let mut coords = vec![first; copies];
    coords.extend(std::iter::repeat_n(second, copies));
    Ok(SimplexPoint { coords })
}
