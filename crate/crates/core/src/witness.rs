//! Explicit feasible families `X(t)` along which the trace tends to `-∞`.
//!
//! Every family is written in a hat frame `Ŵ` with `Ŵᴴ B̂ Ŵ = Ĵ`: the
//! constraint becomes `X̃ᴴ B X̃ = Ĵ` for `X = X̃ Ŵᴴ` and the objective
//! `trace(Λ̂ X̃ᴴ A X̃)` with `Λ̂ = Ŵᴴ Â Ŵ`. Three mechanisms are realized:
//!
//! * a 2×2 hyperbolic core: two columns of `X̃` are `C·P(σ)` where `C`
//!   spans a pair of opposite-type directions of `(A, B)` and `P(σ)` is a
//!   J-unitary boost, paired against two hat directions (or one hat
//!   direction and an unused sign of `B`);
//! * a ray along a null vector of `B` on which `A` is definite;
//! * the 2×2 coupled infinite block `(F₂, K₂(0))`, where the trace is linear
//!   in the ray parameter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hyperbolic::{sample_j_unitary, SignatureJ};
use crate::matcore::{c, signature_frame, sym_eigen, CMat, CVec, ProblemInstance, C64};
use crate::spectral::{analyze_pencil, right_singular_ascending, PencilAnalysis, SpectralError};
use crate::tracemin::{InfimumResult, Reason, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WitnessError {
    #[error("the infimum is not -∞ (verdict {0:?})")]
    NotDivergent(Verdict),
    #[error("no witness constructible for {reason:?}: {detail}")]
    NoWitnessConstructible {
        reason: Option<Reason>,
        detail: String,
    },
    #[error("certification failed: {0}")]
    CertificationFailed(String),
    #[error("threshold must be negative and finite, got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WitnessKind {
    MixedSignSlope,
    ComplexBlockSlope,
    InfiniteBlockRay,
    /// Ray through a coupled `(F₂, K₂(0))` block; the trace is linear in
    /// `σ`, so it is driven with `σ = t²`.
    CoupledInfiniteRay,
}

/// How the trace grows in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Growth {
    /// `slope·t² + offset`.
    Quadratic,
}

/// Boost parameter `σ` as a function of `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parametrization {
    /// `σ = t`.
    Direct,
    /// `σ √(1+σ²) = t²`.
    Hyperbolic,
    /// `σ = t²`.
    Squared,
}

/// What drives the divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Selected {
    Typed {
        sign: i8,
        index: usize,
        value: f64,
    },
    Complex {
        index: usize,
        re: f64,
        im: f64,
    },
    /// A sign of `B` not used by `B̂`, paired with a zero hat eigenvalue.
    Unused {
        sign: i8,
    },
    Infinite {
        sign: i8,
    },
    CoupledBlock {
        index: usize,
    },
    HatColumn {
        index: usize,
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selectors {
    pub pencil: Vec<Selected>,
    pub hat: Vec<Selected>,
}

/// `X(t) = X₀ + √(1+σ²)·E₁ + σ·E₂` with `σ = σ(t)`.
#[derive(Debug, Clone)]
pub struct WitnessFamily {
    pub kind: WitnessKind,
    pub growth: Growth,
    pub parametrization: Parametrization,
    pub slope: f64,
    pub offset: f64,
    pub selectors: Selectors,
    /// Hat frame `Ŵ` and its signature `Ĵ`.
    pub hat_frame: CMat,
    pub hat_signs: Vec<f64>,
    pub x0: CMat,
    pub e1: CMat,
    pub e2: CMat,
    problem: ProblemInstance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub kind: WitnessKind,
    pub t: f64,
    pub trace: f64,
    pub residual: f64,
    pub residual_bound: f64,
    pub threshold: f64,
    pub slope: f64,
    pub offset: f64,
}

impl WitnessFamily {
    pub fn sigma(&self, t: f64) -> f64 {
        match self.parametrization {
            Parametrization::Direct => t,
            Parametrization::Hyperbolic => {
                let t4 = t.powi(4);
                (2.0 * t4 / ((1.0 + 4.0 * t4).sqrt() + 1.0)).sqrt()
            }
            Parametrization::Squared => t * t,
        }
    }

    pub fn trend(&self, t: f64) -> f64 {
        match self.growth {
            Growth::Quadratic => self.slope * t * t + self.offset,
        }
    }

    pub fn matrix(&self, t: f64) -> CMat {
        let s = self.sigma(t);
        &self.x0 + &self.e1 * c((1.0 + s * s).sqrt()) + &self.e2 * c(s)
    }

    /// `feas_tol·(1 + ‖B̂‖‖B‖‖X‖²)`: the residual allowed at `X`.
    pub fn residual_bound(&self, x: &CMat) -> f64 {
        let p = &self.problem;
        p.tol.feas * (1.0 + p.hat.b.norm2() * p.pair.b.norm2() * x.norm_squared())
    }

    pub fn problem(&self) -> &ProblemInstance {
        &self.problem
    }
}

/// `X(t)` in original coordinates and `trace(Â X(t)ᴴ A X(t))`.
pub fn evaluate_witness(family: &WitnessFamily, t: f64) -> (CMat, f64) {
    let x = family.matrix(t.max(0.0));
    let v = family.problem.objective(&x);
    (x, v)
}

/// Finds `t <= t_max` with trace at most `threshold` and an admissible
/// feasibility residual.
pub fn certify_unbounded(
    family: &WitnessFamily,
    threshold: f64,
    t_max: f64,
) -> Result<Certification, WitnessError> {
    if !(threshold.is_finite() && threshold < 0.0) {
        return Err(WitnessError::InvalidThreshold(threshold));
    }
    let gap = threshold - family.offset;
    let mut t = if gap >= 0.0 {
        0.0
    } else {
        match family.growth {
            Growth::Quadratic => (gap / family.slope).sqrt(),
        }
    };
    let mut tries = 0;
    loop {
        if t > t_max {
            return Err(WitnessError::CertificationFailed(format!(
                "reaching {threshold:e} needs t = {t:.6e} > t_max = {t_max:e}"
            )));
        }
        let (x, trace) = evaluate_witness(family, t);
        if trace <= threshold {
            let residual = family.problem.feasibility_residual(&x);
            let bound = family.residual_bound(&x);
            if residual > bound {
                return Err(WitnessError::CertificationFailed(format!(
                    "feasibility residual {residual:.3e} exceeds {bound:.3e} at t = {t:.6e}"
                )));
            }
            return Ok(Certification {
                kind: family.kind,
                t,
                trace,
                residual,
                residual_bound: bound,
                threshold,
                slope: family.slope,
                offset: family.offset,
            });
        }
        tries += 1;
        if tries > 60 {
            return Err(WitnessError::CertificationFailed(format!(
                "trace {trace:.6e} stays above {threshold:e} at t = {t:.6e}"
            )));
        }
        t = if t == 0.0 { 1.0 } else { t * 1.05 + 1e-12 };
    }
}

/// Builds a divergent family for a problem whose infimum is `-∞`.
pub fn build_witness(
    p: &ProblemInstance,
    inf: &InfimumResult,
) -> Result<WitnessFamily, WitnessError> {
    witness_candidates(p, inf).map(|mut v| v.swap_remove(0))
}

/// Every constructible family, best first: kinds in the order suggested by
/// the diagnosis, most negative slope first within a kind.
pub fn witness_candidates(
    p: &ProblemInstance,
    inf: &InfimumResult,
) -> Result<Vec<WitnessFamily>, WitnessError> {
    if inf.verdict != Verdict::NegInfinite {
        return Err(WitnessError::NotDivergent(inf.verdict));
    }
    let an = analyze_pencil(&p.pair, &p.tol)?;
    let ah = analyze_pencil(&p.hat, &p.tol)?;
    let b = Builder {
        p,
        an: &an,
        ah: &ah,
    };
    use WitnessKind::*;
    let order: [WitnessKind; 4] = match inf.reason {
        Some(Reason::CoupledInfiniteStructure) => [
            CoupledInfiniteRay,
            InfiniteBlockRay,
            MixedSignSlope,
            ComplexBlockSlope,
        ],
        Some(Reason::InfiniteBlockSign) | Some(Reason::NotSemidefinitePair) => [
            InfiniteBlockRay,
            MixedSignSlope,
            ComplexBlockSlope,
            CoupledInfiniteRay,
        ],
        Some(Reason::ComplexEigenvalues) => [
            ComplexBlockSlope,
            MixedSignSlope,
            InfiniteBlockRay,
            CoupledInfiniteRay,
        ],
        _ => [
            MixedSignSlope,
            ComplexBlockSlope,
            InfiniteBlockRay,
            CoupledInfiniteRay,
        ],
    };
    let cores = b.core_families();
    let mut notes = Vec::new();
    let mut out = Vec::new();
    for kind in order {
        let mut found: Vec<WitnessFamily> = match kind {
            MixedSignSlope | ComplexBlockSlope => {
                cores.iter().filter(|f| f.kind == kind).cloned().collect()
            }
            InfiniteBlockRay => b.ray_families(),
            CoupledInfiniteRay => b.coupled_families().unwrap_or_else(|e| {
                notes.push(e);
                Vec::new()
            }),
        };
        found.sort_by(|a, b| a.slope.total_cmp(&b.slope));
        out.extend(found);
    }
    if !out.is_empty() {
        return Ok(out);
    }
    let mut detail = String::from("no core, ray or coupled-block direction with negative slope");
    for n in notes {
        detail.push_str("; ");
        detail.push_str(&n);
    }
    Err(WitnessError::NoWitnessConstructible {
        reason: inf.reason,
        detail,
    })
}

/// Certifies the first candidate that reaches `threshold` within `t_max`.
pub fn certify_any(
    candidates: &[WitnessFamily],
    threshold: f64,
    t_max: f64,
) -> Result<(usize, Certification), WitnessError> {
    let mut last = WitnessError::CertificationFailed("no candidate families".into());
    for (i, f) in candidates.iter().enumerate() {
        match certify_unbounded(f, threshold, t_max) {
            Ok(c) => return Ok((i, c)),
            Err(e @ WitnessError::InvalidThreshold(_)) => return Err(e),
            Err(e) => last = e,
        }
    }
    Err(last)
}

struct Builder<'a> {
    p: &'a ProblemInstance,
    an: &'a PencilAnalysis,
    ah: &'a PencilAnalysis,
}

/// Two directions of `(A, B)` with `CᴴBC = diag(1, -1)` spanning an
/// invariant pair.
struct PencilCore {
    c: CMat,
    sel: Vec<Selected>,
    complex: bool,
}

/// Hat columns for the `+` and `-` slots of the core; `None` marks an
/// unused sign of `B` carrying a zero hat eigenvalue.
struct HatCore {
    slots: [Option<CVec>; 2],
    sel: Vec<Selected>,
    complex: bool,
}

fn pair_from_complex(x: &CVec, y: &CVec) -> (CVec, CVec) {
    let s = c(std::f64::consts::FRAC_1_SQRT_2);
    ((y + x) * s, (y - x) * s)
}

fn two_columns(a: &CVec, b: &CVec) -> CMat {
    CMat::from_columns(&[a.clone(), b.clone()])
}

/// Orthonormal basis of the common kernel of the rows of `rows` (`r×n`),
/// with `r` the numerical rank.
fn kernel(rows: &CMat) -> CMat {
    let n = rows.ncols();
    let (sig, v) = right_singular_ascending(rows);
    let top = sig.iter().copied().fold(0.0_f64, f64::max);
    let rank = sig.iter().filter(|&&s| s > 1e-10 * top).count();
    v.columns(0, n - rank).into_owned()
}

/// Columns `z` of `span(K)` with `zᴴ M z = signs[i]` and `zᴴ M z' = 0`,
/// taken from the eigenvectors of `Kᴴ M K` with largest magnitude first.
fn signed_columns(k: &CMat, m: &CMat, signs: &[f64]) -> Option<CMat> {
    let n = k.nrows();
    if signs.is_empty() {
        return Some(CMat::zeros(n, 0));
    }
    let (vals, vecs) = sym_eigen(&(k.adjoint() * m * k));
    let top = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut pos: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-9 * top).collect();
    let mut neg: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] < -1e-9 * top).collect();
    pos.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    neg.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let (mut ip, mut ineg) = (pos.into_iter(), neg.into_iter());
    let mut out = CMat::zeros(n, signs.len());
    for (col, &s) in signs.iter().enumerate() {
        let i = if s > 0.0 { ip.next()? } else { ineg.next()? };
        let z = k * vecs.column(i) / c(vals[i].abs().sqrt());
        out.column_mut(col).copy_from(&z);
    }
    Some(out)
}

fn herm_form(x: &CVec, m: &CMat, y: &CVec) -> C64 {
    (x.adjoint() * m * y)[(0, 0)]
}

const PHASES: [f64; 4] = [
    0.0,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::PI,
    -std::f64::consts::FRAC_PI_2,
];

impl Builder<'_> {
    fn a(&self) -> &CMat {
        self.p.pair.a.matrix()
    }
    fn b(&self) -> &CMat {
        self.p.pair.b.matrix()
    }
    fn ahat(&self) -> &CMat {
        self.p.hat.a.matrix()
    }
    fn bhat(&self) -> &CMat {
        self.p.hat.b.matrix()
    }

    fn pencil_cores(&self) -> Vec<PencilCore> {
        let mut out = Vec::new();
        for (i, dp) in self.an.pos.iter().enumerate() {
            let Some(xp) = &dp.vector else { continue };
            for (j, dn) in self.an.neg.iter().enumerate() {
                let Some(xn) = &dn.vector else { continue };
                out.push(PencilCore {
                    c: two_columns(xp, xn),
                    sel: vec![
                        Selected::Typed {
                            sign: 1,
                            index: i,
                            value: dp.value,
                        },
                        Selected::Typed {
                            sign: -1,
                            index: j,
                            value: dn.value,
                        },
                    ],
                    complex: false,
                });
            }
        }
        for (i, z) in self.an.complex.iter().enumerate() {
            let Some((x, y)) = &z.vectors else { continue };
            let (cp, cm) = pair_from_complex(x, y);
            out.push(PencilCore {
                c: two_columns(&cp, &cm),
                sel: vec![Selected::Complex {
                    index: i,
                    re: z.value.re,
                    im: z.value.im,
                }],
                complex: true,
            });
        }
        out
    }

    fn hat_cores(&self) -> Vec<HatCore> {
        let ib = self.p.inertia_b();
        let ih = self.p.inertia_hat_b();
        let mut out = Vec::new();
        for (i, dp) in self.ah.pos.iter().enumerate() {
            let Some(xp) = &dp.vector else { continue };
            let sp = Selected::Typed {
                sign: 1,
                index: i,
                value: dp.value,
            };
            for (j, dn) in self.ah.neg.iter().enumerate() {
                let Some(xn) = &dn.vector else { continue };
                out.push(HatCore {
                    slots: [Some(xp.clone()), Some(xn.clone())],
                    sel: vec![
                        sp,
                        Selected::Typed {
                            sign: -1,
                            index: j,
                            value: dn.value,
                        },
                    ],
                    complex: false,
                });
            }
            if ih.neg < ib.neg {
                out.push(HatCore {
                    slots: [Some(xp.clone()), None],
                    sel: vec![sp, Selected::Unused { sign: -1 }],
                    complex: false,
                });
            }
        }
        if ih.pos < ib.pos {
            for (j, dn) in self.ah.neg.iter().enumerate() {
                let Some(xn) = &dn.vector else { continue };
                out.push(HatCore {
                    slots: [None, Some(xn.clone())],
                    sel: vec![
                        Selected::Unused { sign: 1 },
                        Selected::Typed {
                            sign: -1,
                            index: j,
                            value: dn.value,
                        },
                    ],
                    complex: false,
                });
            }
        }
        for (i, z) in self.ah.complex.iter().enumerate() {
            let Some((x, y)) = &z.vectors else { continue };
            let (cp, cm) = pair_from_complex(x, y);
            out.push(HatCore {
                slots: [Some(cp), Some(cm)],
                sel: vec![Selected::Complex {
                    index: i,
                    re: z.value.re,
                    im: z.value.im,
                }],
                complex: true,
            });
        }
        out
    }

    /// All core families with a usable negative slope.
    fn core_families(&self) -> Vec<WitnessFamily> {
        let pcs = self.pencil_cores();
        let hcs = self.hat_cores();
        let mut out = Vec::new();
        for hc in &hcs {
            // Hat frame: real core columns first, then a B̂-orthonormal
            // complement that is B̂- and Â-orthogonal to them.
            let used: Vec<(usize, CVec)> = hc
                .slots
                .iter()
                .enumerate()
                .filter_map(|(s, v)| v.clone().map(|v| (s, v)))
                .collect();
            let core_cols =
                CMat::from_columns(&used.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>());
            let rest_k = kernel(&(core_cols.adjoint() * self.bhat()));
            let (rest, rest_signs) = frame_of(&rest_k, self.bhat());
            if rest.ncols() + used.len() != self.p.n_hat() {
                continue;
            }
            let mut lam = CMat::zeros(2, 2);
            for (si, vi) in &used {
                for (sj, vj) in &used {
                    lam[(*si, *sj)] = herm_form(vi, self.ahat(), vj);
                }
            }
            let mut w_hat = CMat::zeros(self.p.n_hat(), self.p.n_hat());
            for (col, (_, v)) in used.iter().enumerate() {
                w_hat.column_mut(col).copy_from(v);
            }
            w_hat
                .view_mut((0, used.len()), (self.p.n_hat(), rest.ncols()))
                .copy_from(&rest);
            let mut hat_signs: Vec<f64> = used
                .iter()
                .map(|(s, _)| if *s == 0 { 1.0 } else { -1.0 })
                .collect();
            hat_signs.extend(&rest_signs);

            for pc in &pcs {
                let m = pc.c.adjoint() * self.a() * &pc.c;
                let Some((phi, psi, slope, param)) = best_phases(&m, &lam) else {
                    continue;
                };
                let kb = kernel(&(pc.c.adjoint() * self.b()));
                let Some(base) = signed_columns(&kb, self.b(), &rest_signs) else {
                    continue;
                };
                let dphi =
                    CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), C64::from_polar(1.0, phi)]));
                let dpsi =
                    CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), C64::from_polar(1.0, psi)]));
                let s = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
                let e1c = &pc.c * &dphi * &dpsi;
                let e2c = &pc.c * &dphi * s * &dpsi;
                let n = self.p.n();
                let nh = self.p.n_hat();
                let (mut x0t, mut e1t, mut e2t) =
                    (CMat::zeros(n, nh), CMat::zeros(n, nh), CMat::zeros(n, nh));
                for (col, (slot, _)) in used.iter().enumerate() {
                    e1t.column_mut(col).copy_from(&e1c.column(*slot));
                    e2t.column_mut(col).copy_from(&e2c.column(*slot));
                }
                x0t.view_mut((0, used.len()), (n, base.ncols()))
                    .copy_from(&base);
                let kind = if pc.complex || hc.complex {
                    WitnessKind::ComplexBlockSlope
                } else {
                    WitnessKind::MixedSignSlope
                };
                out.push(self.finish(
                    kind,
                    Growth::Quadratic,
                    param,
                    slope,
                    Selectors {
                        pencil: pc.sel.clone(),
                        hat: hc.sel.clone(),
                    },
                    w_hat.clone(),
                    hat_signs.clone(),
                    [x0t, e1t, e2t],
                ));
            }
        }
        out
    }

    /// Maps frame coordinates to original ones and fixes the offset.
    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        kind: WitnessKind,
        growth: Growth,
        parametrization: Parametrization,
        slope: f64,
        selectors: Selectors,
        hat_frame: CMat,
        hat_signs: Vec<f64>,
        [x0, e1, e2]: [CMat; 3],
    ) -> WitnessFamily {
        let wh = hat_frame.adjoint();
        let mut f = WitnessFamily {
            kind,
            growth,
            parametrization,
            slope,
            offset: 0.0,
            selectors,
            hat_frame,
            hat_signs,
            x0: x0 * &wh,
            e1: e1 * &wh,
            e2: e2 * &wh,
            problem: self.p.clone(),
        };
        f.offset = evaluate_witness(&f, 0.0).1;
        f
    }

    fn ray_families(&self) -> Vec<WitnessFamily> {
        let (w_hat, signs) = signature_frame(&self.p.hat.b, self.p.tol.rank);
        if w_hat.ncols() != self.p.n_hat() {
            return Vec::new();
        }
        let lam = w_hat.adjoint() * self.ahat() * &w_hat;
        let (lv, lvec) = sym_eigen(&lam);
        let top = lv.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut out = Vec::new();
        for d in &self.an.infinite {
            let v = &d.vector;
            let eta = herm_form(v, self.a(), v).re;
            if eta.abs() <= self.p.tol.rank * (1.0 + self.p.pair.a.norm2()) * v.norm_squared() {
                continue;
            }
            // Eigenvalue of Λ̂ of sign opposite to η, largest in magnitude.
            let pick = if eta > 0.0 { 0 } else { lv.len() - 1 };
            let mu = lv[pick];
            if eta * mu >= -self.p.tol.typ * (1.0 + top) * eta.abs() {
                continue;
            }
            let av = self.a() * v;
            let kb = kernel(&CMat::from_columns(&[av]).adjoint());
            let Some(base) = signed_columns(&kb, self.b(), &signs) else {
                continue;
            };
            let w = lvec.column(pick).into_owned();
            let e2 = v * w.adjoint();
            let n = self.p.n();
            let nh = self.p.n_hat();
            out.push(self.finish(
                WitnessKind::InfiniteBlockRay,
                Growth::Quadratic,
                Parametrization::Direct,
                eta * mu,
                Selectors {
                    pencil: vec![Selected::Infinite {
                        sign: eta.signum() as i8,
                    }],
                    hat: vec![Selected::HatColumn {
                        index: pick,
                        weight: mu,
                    }],
                },
                w_hat.clone(),
                signs.clone(),
                [base, CMat::zeros(n, nh), e2],
            ));
        }
        out
    }

    fn coupled_families(&self) -> Result<Vec<WitnessFamily>, String> {
        if self.an.coupled.is_empty() {
            return Ok(Vec::new());
        }
        let (w_hat, signs) = signature_frame(&self.p.hat.b, self.p.tol.rank);
        if w_hat.ncols() != self.p.n_hat() {
            return Ok(Vec::new());
        }
        let lam = w_hat.adjoint() * self.ahat() * &w_hat;
        let b_pinv = pinv_hermitian(self.b(), self.p.tol.rank);
        let n = self.p.n();
        let nh = self.p.n_hat();
        let mut out = Vec::new();
        let mut last_err = String::new();
        for (idx, u) in self.an.coupled.iter().enumerate() {
            let au = self.a() * u;
            let v = &b_pinv * &au;
            let gamma = herm_form(&au, &b_pinv, &au).re;
            let scale = au.norm_squared() * b_pinv.norm();
            if gamma.abs() <= 1e-8 * scale.max(f64::MIN_POSITIVE) {
                last_err = format!(
                    "coupled null vector {idx} belongs to an infinite block of order > 2 or a singular block"
                );
                continue;
            }
            // Normalize (u, v) to (ηF₂, ηK₂(0)) in the A and B forms.
            let delta = herm_form(&v, self.a(), &v).re;
            let v1 = &v - u * c(delta / (2.0 * gamma));
            let r = c(1.0 / gamma.abs().sqrt());
            let (u1, v1) = (u * r, v1 * r);
            let eta = gamma.signum();
            let av1 = self.a() * &v1;
            let kb = kernel(&CMat::from_columns(&[au.clone(), av1]).adjoint());
            for k in 0..nh {
                let col = lam.column(k).into_owned();
                let norm = col.norm();
                if norm <= self.p.tol.typ * (1.0 + lam.norm()) {
                    continue;
                }
                let z = &col * c(-eta / norm);
                // A hat column of sign -η keeps its base column and scales
                // it by √(1+s²); one of sign η is carried by v alone.
                let (s, base) = if signs[k] * eta < 0.0 {
                    let s: f64 = 10.0;
                    match signed_columns(&kb, self.b(), &signs) {
                        Some(mut b) => {
                            let sc = c((1.0 + s * s).sqrt());
                            let scaled = b.column(k) * sc;
                            b.column_mut(k).copy_from(&scaled);
                            (s, b)
                        }
                        None => continue,
                    }
                } else {
                    let others: Vec<f64> = signs
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != k)
                        .map(|(_, &x)| x)
                        .collect();
                    match signed_columns(&kb, self.b(), &others) {
                        Some(b) => {
                            let mut full = CMat::zeros(n, nh);
                            let mut j = 0;
                            for i in 0..nh {
                                if i != k {
                                    full.column_mut(i).copy_from(&b.column(j));
                                    j += 1;
                                }
                            }
                            (1.0, full)
                        }
                        None => continue,
                    }
                };
                let mut x0 = base;
                let vcol = x0.column(k) + &v1 * c(s);
                x0.column_mut(k).copy_from(&vcol);
                let e2 = &u1 * z.adjoint();
                out.push(self.finish(
                    WitnessKind::CoupledInfiniteRay,
                    Growth::Quadratic,
                    Parametrization::Squared,
                    -2.0 * s * norm,
                    Selectors {
                        pencil: vec![Selected::CoupledBlock { index: idx }],
                        hat: vec![Selected::HatColumn {
                            index: k,
                            weight: norm,
                        }],
                    },
                    w_hat.clone(),
                    signs.clone(),
                    [x0, CMat::zeros(n, nh), e2],
                ));
            }
        }
        out.extend(self.shear_families(&w_hat, &signs, &lam));
        if out.is_empty() && !last_err.is_empty() {
            return Err(last_err);
        }
        Ok(out)
    }

    /// `X̃₀ + σ u zᴴ` for a coupled null vector `u`: `Bu = 0` keeps every
    /// member feasible and `uᴴAu = 0` makes the trace affine in `σ`. Covers
    /// singular blocks and infinite blocks of any order.
    fn shear_families(&self, w_hat: &CMat, signs: &[f64], lam: &CMat) -> Vec<WitnessFamily> {
        let n = self.p.n();
        let nh = self.p.n_hat();
        let Some(base) = signed_columns(&CMat::identity(n, n), self.b(), signs) else {
            return Vec::new();
        };
        let np = signs.iter().filter(|&&x| x > 0.0).count();
        let Ok(jhat) = SignatureJ::new(np, nh - np) else {
            return Vec::new();
        };
        // A few fixed J-unitary mixes of the base so that X̃₀ᴴAu is not
        // annihilated by Λ̂ for structural reasons.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut starts = vec![base.clone()];
        for _ in 0..4 {
            starts.push(&base * sample_j_unitary(jhat, 0.5, &mut rng));
        }
        let floor = self.p.tol.typ * (1.0 + lam.norm()) * (1.0 + self.p.pair.a.norm2());
        let b_pinv = pinv_hermitian(self.b(), self.p.tol.rank);
        let mut out = Vec::new();
        for (idx, u) in self.an.coupled.iter().enumerate() {
            // σ gets large, so clean u of any residual component in range(B).
            let u = &(u - &b_pinv * (self.b() * u));
            let au = self.a() * u;
            let pick = starts
                .iter()
                .map(|x0| {
                    let g = lam * (x0.adjoint() * &au);
                    let score = g.norm() / (1.0 + x0.norm_squared());
                    (x0, g, score)
                })
                .max_by(|a, b| a.2.total_cmp(&b.2));
            let Some((x0, g, _)) = pick else { continue };
            let norm = g.norm();
            if norm <= floor * u.norm() {
                continue;
            }
            let z = g * c(-1.0 / norm);
            out.push(self.finish(
                WitnessKind::CoupledInfiniteRay,
                Growth::Quadratic,
                Parametrization::Squared,
                -2.0 * norm,
                Selectors {
                    pencil: vec![Selected::CoupledBlock { index: idx }],
                    hat: vec![],
                },
                w_hat.clone(),
                signs.to_vec(),
                [x0.clone(), CMat::zeros(n, nh), u * z.adjoint()],
            ));
        }
        out
    }
}

/// `B̂`-normalized eigenvectors of `Kᴴ M K` mapped back through `K`.
fn frame_of(k: &CMat, m: &CMat) -> (CMat, Vec<f64>) {
    let (vals, vecs) = sym_eigen(&(k.adjoint() * m * k));
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| {
        vals[b]
            .signum()
            .total_cmp(&vals[a].signum())
            .then(a.cmp(&b))
    });
    let top = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| vals[i].abs() > 1e-12 * top)
        .collect();
    let cols: Vec<CVec> = keep
        .iter()
        .map(|&i| k * vecs.column(i) / c(vals[i].abs().sqrt()))
        .collect();
    let mat = if cols.is_empty() {
        CMat::zeros(k.nrows(), 0)
    } else {
        CMat::from_columns(&cols)
    };
    (mat, keep.iter().map(|&i| vals[i].signum()).collect())
}

/// Moore-Penrose inverse of a Hermitian matrix with a relative rank cut.
fn pinv_hermitian(m: &CMat, rank_tol: f64) -> CMat {
    let (vals, vecs) = sym_eigen(m);
    let top = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let n = vals.len();
    let d = CMat::from_fn(n, n, |i, j| {
        if i == j && vals[i].abs() > rank_tol * top {
            c(1.0 / vals[i])
        } else {
            c(0.0)
        }
    });
    &vecs * d * vecs.adjoint()
}

/// For `f(σ) = trace(Λ̂ Pᴴ M P)` with `P = D_φ H(σ) D_ψ`, writes
/// `f = b + q σ² + h σ√(1+σ²)` and returns the phases giving the steepest
/// exact law: `q t²` when `h` vanishes, `h t²` (hyperbolic `σ`) when `q`
/// vanishes.
fn best_phases(m: &CMat, lam: &CMat) -> Option<(f64, f64, f64, Parametrization)> {
    let s = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
    let size = (1.0 + m.norm()) * (1.0 + lam.norm());
    let eps = 1e-9 * size;
    let mut best: Option<(f64, f64, f64, Parametrization)> = None;
    for &phi in &PHASES {
        for &psi in &PHASES {
            let dphi =
                CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), C64::from_polar(1.0, phi)]));
            let dpsi =
                CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), C64::from_polar(1.0, psi)]));
            let mp = dphi.adjoint() * m * &dphi;
            let lp = &dpsi * lam * dpsi.adjoint();
            let q = (&lp * &mp).trace().re + (&lp * &s * &mp * &s).trace().re;
            let h = 2.0 * (&lp * &s * &mp).trace().re;
            let cand = if h.abs() <= eps && q < -eps {
                Some((q, Parametrization::Direct))
            } else if q.abs() <= eps && h < -eps {
                Some((h, Parametrization::Hyperbolic))
            } else {
                None
            };
            if let Some((slope, par)) = cand {
                if best.is_none_or(|b| slope < b.2) {
                    best = Some((phi, psi, slope, par));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genpairs::{assemble, BlockSpec};
    use crate::matcore::{HermitianMatrix, MatrixPair, Tolerances};
    use crate::tracemin::infimum;

    fn diag_pair(a: &[f64], b: &[f64]) -> MatrixPair {
        MatrixPair::new(
            HermitianMatrix::from_real_diagonal(a),
            HermitianMatrix::from_real_diagonal(b),
        )
        .unwrap()
    }

    fn problem(pair: MatrixPair, hat: MatrixPair) -> ProblemInstance {
        ProblemInstance::new(pair, hat, Tolerances::default()).unwrap()
    }

    fn witness(p: &ProblemInstance) -> WitnessFamily {
        let r = infimum(p).unwrap();
        assert_eq!(r.verdict, Verdict::NegInfinite, "{r:?}");
        build_witness(p, &r).unwrap()
    }

    fn check_family(f: &WitnessFamily) {
        for t in [0.0, 1.0, 10.0, 100.0] {
            let (x, v) = evaluate_witness(f, t);
            let res = f.problem().feasibility_residual(&x);
            assert!(res <= 1e-6 * (1.0 + t * t), "residual {res} at {t}");
            let trend = f.trend(t);
            let scale = 1.0 + f.slope.abs() * t * t;
            assert!(
                (v - trend).abs() <= 1e-6 * scale,
                "trace {v} trend {trend} at {t}"
            );
        }
    }

    #[test]
    fn mixed_sign_slope_is_minus_nine() {
        // (A, B) positive semidefinite only, (Â, B̂) negative semidefinite only.
        let p = problem(
            diag_pair(&[1.0, 2.0], &[1.0, -1.0]),
            diag_pair(&[-1.0, -2.0], &[1.0, -1.0]),
        );
        let f = witness(&p);
        assert_eq!(f.kind, WitnessKind::MixedSignSlope);
        assert!((f.slope + 9.0).abs() < 1e-10, "{}", f.slope);
        check_family(&f);
        let (_, v) = evaluate_witness(&f, 10.0);
        assert!((v - (f.offset - 900.0)).abs() < 1e-8);
    }

    #[test]
    fn complex_blocks_on_both_sides() {
        let blk = crate::genpairs::block(&BlockSpec::Tc {
            p: 1,
            alpha: 0.0,
            beta: 1.0,
        })
        .unwrap();
        let p = problem(blk.clone(), blk);
        let f = witness(&p);
        assert_eq!(f.kind, WitnessKind::ComplexBlockSlope);
        assert!((f.slope + 4.0).abs() < 1e-9, "{}", f.slope);
        assert!((f.offset + 2.0).abs() < 1e-9, "{}", f.offset);
        check_family(&f);
        let cert = certify_unbounded(&f, -1e6, 1e4).unwrap();
        assert!(cert.t > 499.0 && cert.t < 501.0, "{}", cert.t);
    }

    #[test]
    fn ray_along_null_direction() {
        let p = problem(
            diag_pair(&[1.0, 1.0], &[1.0, 0.0]),
            diag_pair(&[-3.0], &[1.0]),
        );
        let f = witness(&p);
        assert_eq!(f.kind, WitnessKind::InfiniteBlockRay);
        assert!((f.slope + 3.0).abs() < 1e-10);
        check_family(&f);
    }

    #[test]
    fn coupled_block_of_order_two() {
        let asm = assemble(
            &[
                BlockSpec::Tinf { p: 2, eta: 1 },
                BlockSpec::Tr {
                    p: 1,
                    alpha: 1.0,
                    eta: 1,
                },
            ],
            3,
            4.0,
        )
        .unwrap();
        let p = problem(asm.pair, diag_pair(&[2.0], &[1.0]));
        let f = witness(&p);
        assert_eq!(f.kind, WitnessKind::CoupledInfiniteRay);
        check_family(&f);
        let cert = certify_unbounded(&f, -1e6, 1e4).unwrap();
        assert!(cert.residual < 1e-4, "{}", cert.residual);
    }

    #[test]
    fn singular_block_gets_a_verdict_and_a_shear() {
        let asm = assemble(
            &[
                BlockSpec::Ts { p: 1 },
                BlockSpec::Tr {
                    p: 1,
                    alpha: 0.5,
                    eta: 1,
                },
            ],
            5,
            3.0,
        )
        .unwrap();
        let p = problem(asm.pair, diag_pair(&[1.5], &[1.0]));
        let r = infimum(&p).unwrap();
        assert_eq!(r.reason, Some(Reason::CoupledInfiniteStructure));
        let fams = witness_candidates(&p, &r).unwrap();
        assert!(fams
            .iter()
            .all(|f| f.kind == WitnessKind::CoupledInfiniteRay));
        check_family(&fams[0]);
        let (_, cert) = certify_any(&fams, -1e6, 1e4).unwrap();
        assert!(cert.trace <= -1e6);
        assert!(cert.residual <= cert.residual_bound);
    }

    #[test]
    fn certification_edges() {
        let p = problem(
            diag_pair(&[1.0, 2.0], &[1.0, -1.0]),
            diag_pair(&[-1.0, -2.0], &[1.0, -1.0]),
        );
        let f = witness(&p);
        assert!(matches!(
            certify_unbounded(&f, -1e6, 0.0),
            Err(WitnessError::CertificationFailed(_))
        ));
        assert!(matches!(
            certify_unbounded(&f, 1.0, 10.0),
            Err(WitnessError::InvalidThreshold(_))
        ));
        let cert = certify_unbounded(&f, -1e6, 1e4).unwrap();
        assert!(cert.trace <= -1e6);
    }

    #[test]
    fn improper_triplet_uses_unused_sign() {
        // n₊ = n̂₊ = 1, n̂₋ = 0 < n₋ = 1, hat value -1 < 0.
        let p = problem(
            diag_pair(&[3.0, 1.0], &[1.0, -1.0]),
            diag_pair(&[-1.0], &[1.0]),
        );
        let r = infimum(&p).unwrap();
        assert_eq!(r.reason, Some(Reason::Improper));
        let f = build_witness(&p, &r).unwrap();
        assert!(f
            .selectors
            .hat
            .iter()
            .any(|s| matches!(s, Selected::Unused { sign: -1 })));
        check_family(&f);
    }

    #[test]
    fn finite_verdict_is_rejected() {
        let p = problem(
            diag_pair(&[1.0, 2.0], &[1.0, 1.0]),
            diag_pair(&[1.0], &[1.0]),
        );
        let r = infimum(&p).unwrap();
        assert!(matches!(
            build_witness(&p, &r),
            Err(WitnessError::NotDivergent(Verdict::Finite))
        ));
    }
}
