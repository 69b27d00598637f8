//! Scalar root finding: Newton with a numeric derivative, falling back to
//! bisection on a caller-supplied bracket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Tolerance on current unknowns/residuals (A).
    pub tol_i: f64,
    /// Tolerance on voltage unknowns/residuals (V).
    pub tol_v: f64,
    pub max_iter: usize,
    pub fallback_bisection: bool,
    /// Skip Newton entirely; used to cross-check the two methods.
    pub bisection_only: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_i: 1e-15,
            tol_v: 1e-7,
            max_iter: 100,
            fallback_bisection: true,
            bisection_only: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_i > 0.0) || !(self.tol_v > 0.0) {
            return Err(Error::Input("solver tolerances must be > 0".into()));
        }
        if self.max_iter < 8 {
            return Err(Error::Input("solver max_iter must be >= 8".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Problem {
    pub x0: f64,
    pub lo: f64,
    pub hi: f64,
    pub x_tol: f64,
    pub f_tol: f64,
}

/// Solve `f(x) = 0` for increasing or decreasing `f` bracketed by
/// `[lo, hi]`.
pub(crate) fn find_root<F>(f: F, pb: Problem, opts: &SolverOptions) -> Result<Root>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut used = 0;
    if !opts.bisection_only {
        match newton(&f, pb, opts.max_iter) {
            Ok(root) => return Ok(root),
            Err(n) => used = n,
        }
        if !opts.fallback_bisection {
            return Err(Error::NoConvergence(format!(
                "Newton did not converge in {} iterations",
                opts.max_iter
            )));
        }
    }
    let mut root = bisect(&f, pb, opts.max_iter)?;
    root.iterations += used;
    Ok(root)
}

fn newton<F>(f: &F, pb: Problem, max_iter: usize) -> std::result::Result<Root, usize>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut x = pb.x0.clamp(pb.lo, pb.hi);
    for k in 1..=max_iter {
        let fx = f(x).map_err(|_| k)?;
        let h = (x.abs() * 1e-6).max(pb.x_tol);
        let (xp, xm) = ((x + h).min(pb.hi), (x - h).max(pb.lo));
        let df = (f(xp).map_err(|_| k)? - f(xm).map_err(|_| k)?) / (xp - xm);
        if !fx.is_finite() || !df.is_finite() || df == 0.0 {
            return Err(k);
        }
        let dx = -fx / df;
        if fx.abs() <= pb.f_tol && dx.abs() <= pb.x_tol {
            return Ok(Root { x, residual: fx, iterations: k });
        }
        let next = x + dx;
        if !(next > pb.lo && next < pb.hi) {
            return Err(k);
        }
        x = next;
    }
    Err(max_iter)
}

fn bisect<F>(f: &F, pb: Problem, max_iter: usize) -> Result<Root>
where
    F: Fn(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = (pb.lo, pb.hi);
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoConvergence(format!(
            "root not bracketed on [{lo:e}, {hi:e}] (f = {f_lo:e}, {f_hi:e})"
        )));
    }
    // Bisection needs its own budget: log2 of the bracket/tolerance ratio
    // can exceed the Newton iteration cap.
    let budget = max_iter.max(200);
    for k in 1..=budget {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 || (hi - lo <= 2.0 * pb.x_tol && fm.abs() <= pb.f_tol) {
            return Ok(Root { x: mid, residual: fm, iterations: k });
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence(format!(
        "bisection stalled on [{lo:e}, {hi:e}] before reaching tolerance"
    )))
}
