//! The four simplex regularizers: the scalar map `F`, its inverse, the
//! constants used by the stage analysis, and the general-dimension FTRL
//! argmin and Bregman prox.

use std::fmt;

use crate::error::{Error, Result};
use crate::games::SimplexPoint;
use crate::numerics::{self, Context, Real};

#[derive(Debug, Clone, PartialEq)]
pub enum RegularizerKind {
    NegativeEntropy,
    SquaredEuclidean,
    LogBarrier,
    Tsallis { beta: Real },
}

impl RegularizerKind {
    /// Parses `entropy`, `euclid`, `logbar` or `tsallis:<beta>`.
    pub fn parse(name: &str, ctx: &Context) -> Result<Self> {
        match name.trim() {
            "entropy" => Ok(Self::NegativeEntropy),
            "euclid" => Ok(Self::SquaredEuclidean),
            "logbar" => Ok(Self::LogBarrier),
            other => {
                let beta = other.strip_prefix("tsallis:").ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "unknown regularizer {other:?} (expected entropy, euclid, logbar or tsallis:<beta>)"
                    ))
                })?;
                Self::tsallis(ctx.parse(beta)?)
            }
        }
    }

    pub fn tsallis(beta: Real) -> Result<Self> {
        if !beta.is_positive() || beta >= beta.int_like(1) {
            return Err(Error::InvalidArgument(format!("tsallis beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self::Tsallis { beta })
    }

    /// Entropy, log barrier and Tsallis have gradients that blow up at the
    /// boundary; their Bregman divergences need interior anchors.
    pub fn is_legendre(&self) -> bool {
        !matches!(self, Self::SquaredEuclidean)
    }

    /// Exponent `alpha` of the duplication lift that makes the lifted
    /// dynamics equivalent to the 2-action ones.
    pub fn lift_alpha(&self, ctx: &Context) -> Real {
        match self {
            Self::SquaredEuclidean => ctx.one(),
            Self::NegativeEntropy => ctx.zero(),
            Self::LogBarrier => ctx.int(-1),
            Self::Tsallis { beta } => beta - &ctx.one(),
        }
    }

    /// Lipschitz constant of `F_1` used by the constants.
    pub fn lipschitz(&self, ctx: &Context) -> Real {
        match self {
            Self::Tsallis { beta } => (beta * 2i64).recip(),
            _ => ctx.ratio(1, 2),
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NegativeEntropy => f.write_str("entropy"),
            Self::SquaredEuclidean => f.write_str("euclid"),
            Self::LogBarrier => f.write_str("logbar"),
            Self::Tsallis { beta } => write!(f, "tsallis:{beta}"),
        }
    }
}

/// `kappa = beta / (1 - beta)`.
fn kappa(beta: &Real) -> Real {
    beta / &(beta.int_like(1) - beta)
}

/// `F_{1,R}(E)`: first coordinate of the 2-action regularized best response
/// to a loss difference `E`.
pub fn f_one(kind: &RegularizerKind, e: &Real) -> Real {
    let one = e.int_like(1);
    let half = e.ratio_like(1, 2);
    match kind {
        RegularizerKind::NegativeEntropy => {
            // 1/(1+e^E) written to avoid overflow for large E
            if e.is_positive() {
                let t = (-e).exp();
                &t / &(&one + &t)
            } else {
                (&one + &e.exp()).recip()
            }
        }
        RegularizerKind::SquaredEuclidean => ((&one - e) / 2i64).clamp_to(&e.int_like(0), &one),
        RegularizerKind::LogBarrier => {
            let root = (e.square() + 4i64).sqrt();
            half - &(e / &(root * 2i64 + 4i64))
        }
        RegularizerKind::Tsallis { beta } => tsallis_forward(beta, e),
    }
}

/// Bisection on the closed-form inverse over `(eps, 1 - eps)`.
fn tsallis_forward(beta: &Real, e: &Real) -> Real {
    let ctx = e.context();
    let eps = ctx.pow10(-(ctx.digits() as i32 - 4));
    let mut lo = eps.clone();
    let mut hi = ctx.one() - &eps;
    let k = kappa(beta);
    let g = |x: &Real| tsallis_inverse_with(beta, &k, x);
    if *e >= g(&lo) {
        return lo;
    }
    if *e <= g(&hi) {
        return hi;
    }
    for _ in 0..ctx.bits() + 8 {
        let mid = (&lo + &hi) / 2i64;
        if mid == lo || mid == hi {
            break;
        }
        // g is decreasing
        if g(&mid) > *e {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + &hi) / 2i64
}

fn tsallis_inverse_with(beta: &Real, k: &Real, x: &Real) -> Real {
    let p = beta - &beta.int_like(1);
    let q = x.int_like(1) - x;
    k * &(x.pow(&p) - &q.pow(&p))
}

/// `F_{eta,R}(E) = F_{1,R}(eta E)`.
pub fn f_eta(kind: &RegularizerKind, eta: &Real, e: &Real) -> Result<Real> {
    check_eta(eta)?;
    Ok(f_one(kind, &(eta * e)))
}

fn check_eta(eta: &Real) -> Result<()> {
    if !eta.is_positive() || !eta.is_finite() {
        return Err(Error::InvalidArgument(format!("stepsize must be positive, got {eta}")));
    }
    Ok(())
}

/// Inverse of [`f_one`] on `(0, 1)`.
pub fn f_inverse(kind: &RegularizerKind, x: &Real) -> Result<Real> {
    let one = x.int_like(1);
    if !x.is_positive() || *x >= one {
        return Err(Error::InvalidArgument(format!("F inverse needs x in (0, 1), got {x}")));
    }
    let q = &one - x;
    Ok(match kind {
        RegularizerKind::NegativeEntropy => (&q / x).ln(),
        RegularizerKind::SquaredEuclidean => one - &(x * 2i64),
        RegularizerKind::LogBarrier => (x * 2i64 - 1i64) / &(x.square() - x),
        RegularizerKind::Tsallis { beta } => tsallis_inverse_with(beta, &kappa(beta), x),
    })
}

/// Constants of the hard-instance assumption for one regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerConstants {
    pub l: Real,
    pub c1: Real,
    pub c2: Real,
    pub c3: Real,
    pub delta_prime: Real,
}

pub fn constants(kind: &RegularizerKind, ctx: &Context) -> RegularizerConstants {
    let l = kind.lipschitz(ctx);
    let half = ctx.ratio(1, 2);
    let default_c1 = || &half - &f_one(kind, &(&l * 20i64).recip());
    match kind {
        RegularizerKind::SquaredEuclidean => {
            let c1 = ctx.ratio(1, 20);
            let c1sq = c1.square();
            RegularizerConstants {
                c2: &c1sq / &(&l * 960i64),
                delta_prime: &c1sq / &(&l * 480i64),
                c3: half.clone(),
                c1,
                l,
            }
        }
        RegularizerKind::NegativeEntropy => {
            let c1 = default_c1();
            let c1sq = c1.square();
            RegularizerConstants {
                c2: f_one(kind, &-(&c1sq / &(&l * 480i64))) - &half,
                delta_prime: &c1sq / &(&l * 960i64),
                c3: half.clone(),
                c1,
                l,
            }
        }
        RegularizerKind::LogBarrier => {
            let twenty_l = &l * 20i64;
            let c1 = (ctx.ratio(1, 4) + &twenty_l.square()).sqrt() - &twenty_l;
            let c1sq = c1.square();
            let c3 = &c1sq / &(&l * 60i64);
            let a = &(&c3 * &c1sq) / &(&l * 240i64);
            RegularizerConstants {
                c2: f_one(kind, &-a) - &half,
                delta_prime: &(&c3 * &c1sq) / &(&l * 2160i64),
                c3,
                c1,
                l,
            }
        }
        RegularizerKind::Tsallis { beta } => {
            let c1 = default_c1();
            let c1sq = c1.square();
            let c3 = half.clone();
            let one = ctx.one();
            let one_minus = &one - beta;
            let a = &(&c3 * &c1sq) / &(&l * 240i64);
            let d1 = (&(&c1sq * &one_minus) / &(&(&l * 120i64) * &(beta * &c3.pow(&one_minus))))
                .pow(&beta.recip());
            let d2 = &(&c3 * &c1sq) / 120i64;
            let d3 = &(&one_minus / &(beta * 8i64)) * &(&(&c3 * &c1sq) / &(&l * 480i64));
            RegularizerConstants {
                c2: f_one(kind, &-a) - &half,
                delta_prime: d1.min_of(&d2).min_of(&d3),
                c3,
                c1,
                l,
            }
        }
    }
}

/// `argmin_{x in simplex} <x, G> + R(x)/eta`.
pub fn ftrl_argmin(kind: &RegularizerKind, eta: &Real, g: &[Real]) -> Result<SimplexPoint> {
    check_eta(eta)?;
    check_finite(g)?;
    if g.len() < 2 {
        return Err(Error::InvalidArgument("argmin needs at least two actions".into()));
    }
    if g.len() == 2 {
        return ftrl_argmin_2d(kind, eta, &(&g[0] - &g[1]));
    }
    let v: Vec<Real> = g.iter().map(|gi| -(eta * gi)).collect();
    Ok(SimplexPoint::from_normalized(match kind {
        RegularizerKind::NegativeEntropy => softmax(&v),
        RegularizerKind::SquaredEuclidean => project_simplex(&v),
        _ => dual_bisection(kind, &v),
    }))
}

/// Two-action argmin from the loss difference `G[1] - G[2]`.
pub fn ftrl_argmin_2d(kind: &RegularizerKind, eta: &Real, diff: &Real) -> Result<SimplexPoint> {
    let p = f_eta(kind, eta, diff)?;
    let q = p.int_like(1) - &p;
    Ok(SimplexPoint::from_normalized(vec![p, q]))
}

/// `argmin_{x in simplex} eta <x, ell> + D_R(x, anchor)`.
pub fn bregman_prox(kind: &RegularizerKind, eta: &Real, ell: &[Real], anchor: &SimplexPoint) -> Result<SimplexPoint> {
    check_eta(eta)?;
    check_finite(ell)?;
    if ell.len() != anchor.dim() {
        return Err(Error::Dimension {
            expected: anchor.dim(),
            got: ell.len(),
        });
    }
    if kind.is_legendre() && !anchor.is_interior() {
        return Err(Error::BoundaryAnchor(kind.to_string()));
    }
    let a = anchor.coords();
    let step = |i: usize| eta * &ell[i];
    Ok(SimplexPoint::from_normalized(match kind {
        RegularizerKind::NegativeEntropy => {
            let v: Vec<Real> = (0..a.len()).map(|i| a[i].ln() - step(i)).collect();
            softmax(&v)
        }
        RegularizerKind::SquaredEuclidean => {
            let v: Vec<Real> = (0..a.len()).map(|i| &a[i] - &step(i)).collect();
            project_simplex(&v)
        }
        RegularizerKind::LogBarrier => {
            let v: Vec<Real> = (0..a.len()).map(|i| -a[i].recip() - step(i)).collect();
            dual_bisection(kind, &v)
        }
        RegularizerKind::Tsallis { beta } => {
            let k = kappa(beta);
            let p = beta - &beta.int_like(1);
            let v: Vec<Real> = (0..a.len()).map(|i| -(&k * &a[i].pow(&p)) - step(i)).collect();
            dual_bisection(kind, &v)
        }
    }))
}

fn check_finite(v: &[Real]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite loss vector".into()));
    }
    Ok(())
}

/// Normalized `exp(v)`.
fn softmax(v: &[Real]) -> Vec<Real> {
    let (_, m) = numerics::argmax(v);
    let m = m.clone();
    let w: Vec<Real> = v.iter().map(|vi| (vi - &m).exp()).collect();
    let total = numerics::sum(&w);
    w.into_iter().map(|wi| wi / &total).collect()
}

/// Euclidean projection onto the simplex by sorting and thresholding.
pub fn project_simplex(v: &[Real]) -> Vec<Real> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let zero = v[0].int_like(0);
    let mut running = zero.clone();
    let mut theta = zero.clone();
    for (j, s) in sorted.iter().enumerate() {
        running += s;
        let candidate = (&running - 1i64) / (j as i64 + 1);
        if *s > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|vi| (vi - &theta).max_of(&zero)).collect()
}

/// Inverse gradient of the separable regularizer, clipped to `(0, 1]`.
fn phi(kind: &RegularizerKind, u: &Real) -> Real {
    let one = u.int_like(1);
    match kind {
        RegularizerKind::LogBarrier => {
            if *u >= -&one {
                one
            } else {
                -u.recip()
            }
        }
        RegularizerKind::Tsallis { beta } => {
            let k = kappa(beta);
            if *u >= -&k {
                one
            } else {
                (-u / &k).pow(&(beta - &one).recip())
            }
        }
        _ => unreachable!("closed forms handle entropy and Euclidean"),
    }
}

/// Solves `sum_i phi(v_i + mu) = 1` for `mu` by bisection, then normalizes.
fn dual_bisection(kind: &RegularizerKind, v: &[Real]) -> Vec<Real> {
    let ctx = v[0].context();
    let d = v.len() as i64;
    let (_, vmax) = numerics::argmax(v);
    let vmax = vmax.clone();
    // phi(u) = 1 at the upper end for the largest coordinate, phi <= 1/d everywhere at the lower end
    let (reach_one, reach_uniform) = match kind {
        RegularizerKind::LogBarrier => (ctx.one(), ctx.int(d)),
        RegularizerKind::Tsallis { beta } => {
            let k = kappa(beta);
            let spread = ctx.int(d).pow(&(ctx.one() - beta));
            (k.clone(), k * &spread)
        }
        _ => unreachable!("closed forms handle entropy and Euclidean"),
    };
    let mut lo = -reach_uniform - &vmax;
    let mut hi = -reach_one - &vmax;
    let total = |mu: &Real| {
        let parts: Vec<Real> = v.iter().map(|vi| phi(kind, &(vi + mu))).collect();
        numerics::sum(&parts)
    };
    let width = (&hi - &lo).to_f64().max(1.0);
    let iters = ctx.bits() + 8 + width.log2().ceil() as u32;
    for _ in 0..iters {
        let mid = (&lo + &hi) / 2i64;
        if mid == lo || mid == hi {
            break;
        }
        if total(&mid) > ctx.one() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = (lo + &hi) / 2i64;
    let x: Vec<Real> = v.iter().map(|vi| phi(kind, &(vi + &mu))).collect();
    let s = numerics::sum(&x);
    x.into_iter().map(|xi| xi / &s).collect()
}

/// Moves coordinates that rounded to exactly zero inward by `10^-digits`,
/// taking the mass from the largest coordinate. Returns the number of
/// coordinates moved.
pub fn clamp_interior(point: SimplexPoint) -> (SimplexPoint, u32) {
    if point.is_interior() {
        return (point, 0);
    }
    let mut coords = point.into_coords();
    let ctx = coords[0].context();
    let nudge = ctx.pow10(-(ctx.digits() as i32));
    let mut moved = 0u32;
    for c in coords.iter_mut() {
        if c.is_zero() {
            *c = nudge.clone();
            moved += 1;
        }
    }
    let (top, _) = numerics::argmax(&coords);
    coords[top] -= &(&nudge * i64::from(moved));
    (SimplexPoint::from_normalized(coords), moved)
}
