//! Semidefiniteness of a Hermitian pencil.
//!
//! `(A, B)` is positive semidefinite when `A - λ₀B ⪰ 0` for some real `λ₀`.
//! The function `f(λ) = λ_min(A - λB)` is concave, so its maximum is located
//! by golden-section search and the set `{f ≥ 0}` is an interval whose ends
//! are found by bisection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::{c, sym_eigen, MatrixPair};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DefinitenessError {
    #[error("shift exceeded {cap:e} before the maximum of λ_min(A - λB) was bracketed")]
    BracketOverflow { cap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefinitenessOptions {
    pub psd_tol: f64,
    pub rank_tol: f64,
    pub max_iter: usize,
}

impl Default for DefinitenessOptions {
    fn default() -> Self {
        DefinitenessOptions {
            psd_tol: 1e-8,
            rank_tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Closed interval of admissible shifts; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// A representative interior shift.
    pub fn center(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (true, false) => self.lo + 1.0 + self.lo.abs(),
            (false, true) => self.hi - 1.0 - self.hi.abs(),
            (false, false) => 0.0,
        }
    }
}

/// Outcome of maximizing `λ_min(A - λB)` on one orientation of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub semidefinite: bool,
    pub interval: Option<Interval>,
    pub max_fmin: f64,
    pub argmax: f64,
    /// The search ran into the shift cap; the reported side is one-sided or
    /// the maximum sits at the cap.
    pub hit_cap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefinitenessReport {
    pub is_psd_pair: bool,
    pub psd_interval: Option<Interval>,
    pub is_nsd_pair: bool,
    pub nsd_interval: Option<Interval>,
    pub max_fmin: f64,
    pub nsd_max_fmin: f64,
    pub scale: f64,
    pub psd: SideReport,
    pub nsd: SideReport,
}

/// `λ_min(A - s B)`.
pub fn lambda_min_shift(pair: &MatrixPair, s: f64) -> f64 {
    let m = pair.a.matrix() - pair.b.matrix() * c(s);
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.symmetric_eigenvalues().min()
}

pub fn definiteness_interval(pair: &MatrixPair, opts: &DefinitenessOptions) -> DefinitenessReport {
    let scale = pair.scale();
    let psd = analyze_side(pair, opts, scale);
    let nsd = analyze_side(&pair.neg(), opts, scale);
    DefinitenessReport {
        is_psd_pair: psd.semidefinite,
        psd_interval: psd.interval,
        is_nsd_pair: nsd.semidefinite,
        nsd_interval: nsd.interval,
        max_fmin: psd.max_fmin,
        nsd_max_fmin: nsd.max_fmin,
        scale,
        psd,
        nsd,
    }
}

/// Like [`definiteness_interval`] restricted to the positive side, reporting a
/// bracket failure as an error instead of a flag.
pub fn psd_side_strict(
    pair: &MatrixPair,
    opts: &DefinitenessOptions,
) -> Result<SideReport, DefinitenessError> {
    let side = analyze_side(pair, opts, pair.scale());
    if side.hit_cap && !side.semidefinite {
        return Err(DefinitenessError::BracketOverflow {
            cap: 1.0 / opts.rank_tol,
        });
    }
    Ok(side)
}

pub(crate) fn analyze_side(
    pair: &MatrixPair,
    opts: &DefinitenessOptions,
    scale: f64,
) -> SideReport {
    let n = pair.dim();
    if n == 0 {
        return SideReport {
            semidefinite: true,
            interval: Some(Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            }),
            max_fmin: f64::INFINITY,
            argmax: 0.0,
            hit_cap: false,
        };
    }
    let f = |s: f64| lambda_min_shift(pair, s);
    let cap = 1.0 / opts.rank_tol;

    let (bvals, _) = sym_eigen(pair.b.matrix());
    let bmax = bvals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let smin = bvals
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > opts.rank_tol * bmax)
        .fold(f64::INFINITY, f64::min);
    let rho = pair.a.norm2() / smin.max(opts.rank_tol);
    let rho = if rho.is_finite() { rho.min(cap) } else { cap };

    let mut lo = -1.0 - rho;
    let mut hi = 1.0 + rho;
    let mut hit_cap = false;
    // Grow the bracket until f increases just inside the left end and
    // decreases just inside the right end.
    loop {
        let h = 1e-3 * (hi - lo);
        if f(lo) < f(lo + h) {
            break;
        }
        if lo <= -cap {
            hit_cap = true;
            break;
        }
        lo = (2.0 * lo).max(-cap);
    }
    loop {
        let h = 1e-3 * (hi - lo);
        if f(hi) < f(hi - h) {
            break;
        }
        if hi >= cap {
            hit_cap = true;
            break;
        }
        hi = (2.0 * hi).min(cap);
    }

    let (argmax, max_fmin) = golden_max(&f, lo, hi, 1e-12 * scale, opts.max_iter);
    let semidefinite = max_fmin >= -opts.psd_tol * scale;
    if !semidefinite {
        return SideReport {
            semidefinite,
            interval: None,
            max_fmin,
            argmax,
            hit_cap,
        };
    }

    // Endpoints of {f ≥ thr}. The threshold sits a few ulps below
    // min(max f, 0), so the ends land on the extreme eigenvalues rather than
    // being widened by the acceptance tolerance.
    let thr = max_fmin.min(0.0) - 16.0 * f64::EPSILON * scale;
    let left = end_of_level_set(&f, argmax, -1.0, lo, thr, cap, opts.max_iter);
    let right = end_of_level_set(&f, argmax, 1.0, hi, thr, cap, opts.max_iter);
    if left.is_infinite() || right.is_infinite() {
        hit_cap = true;
    }
    SideReport {
        semidefinite,
        interval: Some(Interval {
            lo: left,
            hi: right,
        }),
        max_fmin,
        argmax,
        hit_cap,
    }
}

fn golden_max(
    f: &dyn Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    width: f64,
    max_iter: usize,
) -> (f64, f64) {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..max_iter {
        if (b - a).abs() <= width {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
        if f1 > best.1 {
            best = (x1, f1);
        }
        if f2 > best.1 {
            best = (x2, f2);
        }
    }
    for end in [a, b] {
        let fe = f(end);
        if fe > best.1 {
            best = (end, fe);
        }
    }
    best
}

/// Walks from `start` (where `f ≥ thr`) in direction `dir` and bisects for
/// the crossing `f = thr`. Returns ±∞ if `f` stays above `thr` up to the cap.
fn end_of_level_set(
    f: &dyn Fn(f64) -> f64,
    start: f64,
    dir: f64,
    bracket_end: f64,
    thr: f64,
    cap: f64,
    max_iter: usize,
) -> f64 {
    let mut inside = start;
    let mut outside = bracket_end;
    while f(outside) >= thr {
        if outside.abs() >= cap {
            return dir * f64::INFINITY;
        }
        inside = outside;
        let step = (outside - start).abs().max(1.0);
        outside = (start + dir * 2.0 * step).clamp(-cap, cap);
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (inside + outside);
        if (outside - inside).abs() <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
        if f(mid) >= thr {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}
