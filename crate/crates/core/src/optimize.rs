//! One-dimensional minimization: downhill bracketing, golden-section
//! narrowing and a slope-bisection polish.
//!
//! Golden section alone stalls near `√ε` relative precision because it
//! compares function values on a flat minimum. The final stage bisects on the
//! sign of a central-difference slope instead, which keeps resolving the
//! minimizer of smooth objectives to ~1e-12.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;
const GROW: f64 = 1.618_033_988_749_894_8;
const MAX_EXPANSIONS: usize = 200;

/// Three abscissae `a < b < c` with `f(b) ≤ f(a)` and `f(b) ≤ f(c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Walks downhill from `x0` with geometrically growing steps until the
/// function turns up again.
pub fn bracket_minimum<F: Fn(f64) -> f64>(f: &F, x0: f64, step: f64) -> Result<Bracket> {
    let mut a = x0;
    let mut b = x0 + step;
    let (mut fa, mut fb) = (f(a), f(b));
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + GROW * (b - a);
    let mut fc = f(c);
    let mut n = 0;
    while fc < fb {
        n += 1;
        if n > MAX_EXPANSIONS || !c.is_finite() {
            return Err(Error::BracketFailure(n));
        }
        (a, b) = (b, c);
        fb = fc;
        c = b + GROW * (b - a);
        fc = f(c);
    }
    if !(fb.is_finite() && fa.is_finite() && fc.is_finite()) {
        return Err(Error::BracketFailure(n));
    }
    let (a, c) = if a < c { (a, c) } else { (c, a) };
    Ok(Bracket { a, b, c })
}

/// Shrinks `[a, c]` by the golden ratio until it is narrower than `xtol`.
pub fn golden_section<F: Fn(f64) -> f64>(f: &F, bracket: Bracket, xtol: f64) -> f64 {
    let (mut lo, mut hi) = (bracket.a, bracket.c);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > xtol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn slope<F: Fn(f64) -> f64>(f: &F, x: f64) -> f64 {
    let h = 1e-4 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Bisects on the sign of the numerical slope inside `[lo, hi]`, which must
/// contain the minimizer. Returns the midpoint once the interval is
/// narrower than `xtol`.
pub fn slope_bisection<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= xtol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if slope(f, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer of a smooth unimodal function, starting the search at `x0`.
pub fn minimize_scalar<F: Fn(f64) -> f64>(f: F, x0: f64, step: f64) -> Result<f64> {
    let bracket = bracket_minimum(&f, x0, step)?;
    let coarse = golden_section(&f, bracket, 1e-6 * (1.0 + bracket.b.abs()));
    let mut width = 1e-4 * (1.0 + coarse.abs());
    let (mut lo, mut hi) = (coarse - width, coarse + width);
    let mut tries = 0;
    while !(slope(&f, lo) <= 0.0 && slope(&f, hi) >= 0.0) {
        tries += 1;
        if tries > 60 {
            return Err(Error::BracketFailure(tries));
        }
        width *= 2.0;
        lo = coarse - width;
        hi = coarse + width;
    }
    Ok(slope_bisection(&f, lo, hi, 1e-13 * (1.0 + coarse.abs())))
}
