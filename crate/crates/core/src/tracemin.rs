//! Closed-form infimum of `trace(Â Xᴴ A X)` subject to `B̂ Xᴴ B X = I`.
//!
//! The infimum is finite exactly when both pencils are positive semidefinite
//! (or both negative semidefinite) and the triple `(B, Â, B̂)` is proper. It
//! is then a sum of products of typed eigenvalues paired in opposite orders,
//! generalizing the Ky Fan trace minimum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::definiteness::{definiteness_interval, DefinitenessOptions, DefinitenessReport};
use crate::matcore::{
    block_diag, c, inertia, signature_frame, sym_eigen, CMat, Feasibility, HermitianMatrix,
    Inertia, MatError, MatrixPair, ProblemInstance,
};
use crate::spectral::{
    analyze_pencil, deflate_common_nullspace, EigenDirection, InfiniteSign, PencilAnalysis,
    SpectralError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceminError {
    #[error("inertia of B̂ ({hat:?}) exceeds inertia of B ({b:?})")]
    InertiaViolation { b: Inertia, hat: Inertia },
    #[error("the feasible set is empty: {0:?}")]
    EmptyFeasibleSet(Feasibility),
    #[error("infimum is not known to be attained: {0}")]
    NotAttainable(String),
    #[error("eigenvalue lists have lengths {left} and {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("B is singular after deflating the common nullspace; padding needs a nonsingular B")]
    SingularB,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Matrix(#[from] MatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Finite,
    NegInfinite,
    ExcludedConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignCase {
    #[serde(rename = "PSD_pairs")]
    PsdPairs,
    #[serde(rename = "NSD_pairs")]
    NsdPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    NotSemidefinitePair,
    MixedSigns,
    Improper,
    CoupledInfiniteStructure,
    ComplexEigenvalues,
    /// `B` is singular and `A` on `N(B)` has a sign that `Â` does not share.
    InfiniteBlockSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attainable {
    Yes,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExcludedKind {
    HatAZero,
    AProportionalToB,
    HatAProportionalToHatB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProperCase {
    EqualInertia,
    NegativeDeficit,
    PositiveDeficit,
    BothDeficit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Properness {
    pub case: ProperCase,
    pub d_plus: usize,
    pub d_minus: usize,
}

/// One product `λ̂ · λ` of the closed form. Indices point into the ascending
/// typed lists of the (possibly mirrored) pencils.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub hat: f64,
    pub value: f64,
    pub product: f64,
    pub sign: i8,
    pub hat_index: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfimumResult {
    pub verdict: Verdict,
    /// `-∞` for [`Verdict::NegInfinite`].
    pub value: f64,
    pub sign_case: Option<SignCase>,
    pub reason: Option<Reason>,
    pub terms: Vec<Term>,
    pub attainable: Attainable,
    pub properness: Option<Properness>,
    pub excluded: Option<ExcludedKind>,
    pub inertia_b: Inertia,
    pub inertia_hat_b: Inertia,
}

/// Analyses behind an [`InfimumResult`], reused by the minimizer and the
/// witness builder.
#[derive(Debug, Clone)]
pub struct InfimumDetail {
    pub result: InfimumResult,
    pub pair: Option<PencilAnalysis>,
    pub hat: Option<PencilAnalysis>,
    pub def_pair: Option<DefinitenessReport>,
    pub def_hat: Option<DefinitenessReport>,
}

const EXCLUDED_TOL: f64 = 1e-9;

/// Sum of `λᵢ↓(l0) · λᵢ↑(l1)`: the minimum of `trace(A₀ Uᴴ A₁ U)` over
/// unitary `U` for Hermitian `A₀, A₁` with these spectra.
pub fn fan_min_product(l0: &[f64], l1: &[f64]) -> Result<f64, TraceminError> {
    if l0.len() != l1.len() {
        return Err(TraceminError::LengthMismatch {
            left: l0.len(),
            right: l1.len(),
        });
    }
    let mut d = l0.to_vec();
    let mut a = l1.to_vec();
    d.sort_by(|x, y| y.total_cmp(x));
    a.sort_by(|x, y| x.total_cmp(y));
    Ok(d.iter().zip(&a).map(|(x, y)| x * y).sum())
}

/// Sum of `λᵢ↓(l0) · λᵢ↓(l1)`, the matching maximum.
pub fn fan_max_product(l0: &[f64], l1: &[f64]) -> Result<f64, TraceminError> {
    let neg: Vec<f64> = l1.iter().map(|v| -v).collect();
    Ok(-fan_min_product(l0, &neg)?)
}

/// Cases on which the objective is constant over the feasible set.
pub fn check_excluded(p: &ProblemInstance) -> Option<(ExcludedKind, f64)> {
    let a = p.pair.a.matrix();
    let b = p.pair.b.matrix();
    let ah = p.hat.a.matrix();
    let bh = p.hat.b.matrix();
    if ah.norm() <= EXCLUDED_TOL * (1.0 + bh.norm()) {
        return Some((ExcludedKind::HatAZero, 0.0));
    }
    let bh_inv = bh.clone().try_inverse()?;
    if let Some(mu) = proportional(a, b) {
        let v = mu * (ah * &bh_inv).trace().re;
        return Some((ExcludedKind::AProportionalToB, v));
    }
    if p.n() == p.n_hat() && inertia(&p.pair.b, p.tol.rank).zero == 0 {
        if let (Some(mu), Some(b_inv)) = (proportional(ah, bh), b.clone().try_inverse()) {
            let v = mu * (b_inv * a).trace().re;
            return Some((ExcludedKind::HatAProportionalToHatB, v));
        }
    }
    None
}

/// `μ` with `M = μ N` up to a relative residual, if any.
fn proportional(m: &CMat, n: &CMat) -> Option<f64> {
    let nn = n.norm_squared();
    if nn == 0.0 {
        return if m.norm() == 0.0 { Some(0.0) } else { None };
    }
    let mu = (n.adjoint() * m).trace().re / nn;
    let res = (m - n * c(mu)).norm();
    (res <= EXCLUDED_TOL * m.norm().max(f64::MIN_POSITIVE)).then_some(mu)
}

/// Classifies `(B, Â, B̂)` given the inertia of `B`, the typed spectrum of
/// a positive semidefinite `(Â, B̂)` and the inertia of `B̂`. Returns `None`
/// when the triple is not proper.
pub fn properness(
    inertia_b: Inertia,
    hat_pos: &[f64],
    hat_neg: &[f64],
    inertia_hat: Inertia,
    zero_tol: f64,
) -> Result<Option<Properness>, TraceminError> {
    if inertia_hat.pos > inertia_b.pos || inertia_hat.neg > inertia_b.neg {
        return Err(TraceminError::InertiaViolation {
            b: inertia_b,
            hat: inertia_hat,
        });
    }
    let min_pos = hat_pos.iter().copied().fold(f64::INFINITY, f64::min);
    let max_neg = hat_neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eq_pos = inertia_hat.pos == inertia_b.pos;
    let eq_neg = inertia_hat.neg == inertia_b.neg;
    let out = match (eq_pos, eq_neg) {
        (true, true) => Some(Properness {
            case: ProperCase::EqualInertia,
            d_plus: 0,
            d_minus: 0,
        }),
        (true, false) if min_pos >= -zero_tol => Some(Properness {
            case: ProperCase::NegativeDeficit,
            d_plus: 0,
            d_minus: hat_neg.iter().filter(|&&v| v > zero_tol).count(),
        }),
        (false, true) if max_neg <= zero_tol => Some(Properness {
            case: ProperCase::PositiveDeficit,
            d_plus: hat_pos.iter().filter(|&&v| v < -zero_tol).count(),
            d_minus: 0,
        }),
        (false, false) if max_neg <= zero_tol && min_pos >= -zero_tol => Some(Properness {
            case: ProperCase::BothDeficit,
            d_plus: 0,
            d_minus: 0,
        }),
        _ => None,
    };
    Ok(out)
}

/// The closed form for positive semidefinite pairs. All lists ascending.
// Index loops mirror the pairing formula; iterators would obscure it.
#[allow(clippy::needless_range_loop)]
pub fn closed_form(
    hat_pos: &[f64],
    hat_neg: &[f64],
    pos: &[f64],
    neg: &[f64],
    prop: Properness,
) -> Result<(f64, Vec<Term>), TraceminError> {
    let (hp, hn, np, nn) = (hat_pos.len(), hat_neg.len(), pos.len(), neg.len());
    if hp > np {
        return Err(TraceminError::LengthMismatch {
            left: hp,
            right: np,
        });
    }
    if hn > nn {
        return Err(TraceminError::LengthMismatch {
            left: hn,
            right: nn,
        });
    }
    let (dp, dm) = (prop.d_plus.min(hp), prop.d_minus.min(hn));
    let mut terms = Vec::with_capacity(hp + hn);
    let mut push = |sign: i8, hi: usize, ai: usize, h: f64, a: f64| {
        terms.push(Term {
            hat: h,
            value: a,
            product: h * a,
            sign,
            hat_index: hi,
            index: ai,
        })
    };
    for i in 0..hp - dp {
        let hi = hp - 1 - i;
        push(1, hi, i, hat_pos[hi], pos[i]);
    }
    for i in 0..dp {
        let ai = np - 1 - i;
        push(1, i, ai, hat_pos[i], pos[ai]);
    }
    for j in 0..dm {
        let hi = hn - 1 - j;
        push(-1, hi, j, hat_neg[hi], neg[j]);
    }
    for j in 0..hn - dm {
        let ai = nn - 1 - j;
        push(-1, j, ai, hat_neg[j], neg[ai]);
    }
    let value = terms.iter().map(|t| t.product).sum();
    Ok((value, terms))
}

pub fn infimum(p: &ProblemInstance) -> Result<InfimumResult, TraceminError> {
    Ok(infimum_detailed(p)?.result)
}

pub fn infimum_detailed(p: &ProblemInstance) -> Result<InfimumDetail, TraceminError> {
    let ib = p.inertia_b();
    let ih = p.inertia_hat_b();
    match p.feasibility() {
        Feasibility::Feasible => {}
        f => return Err(TraceminError::EmptyFeasibleSet(f)),
    }
    let base = InfimumResult {
        verdict: Verdict::Finite,
        value: f64::NAN,
        sign_case: None,
        reason: None,
        terms: Vec::new(),
        attainable: Attainable::Unknown,
        properness: None,
        excluded: None,
        inertia_b: ib,
        inertia_hat_b: ih,
    };
    if let Some((kind, value)) = check_excluded(p) {
        return Ok(InfimumDetail {
            result: InfimumResult {
                verdict: Verdict::ExcludedConstant,
                value,
                excluded: Some(kind),
                attainable: Attainable::Yes,
                ..base
            },
            pair: None,
            hat: None,
            def_pair: None,
            def_hat: None,
        });
    }

    let an = analyze_pencil(&p.pair, &p.tol)?;
    let ah = analyze_pencil(&p.hat, &p.tol)?;
    let opts = DefinitenessOptions {
        psd_tol: p.tol.psd,
        rank_tol: p.tol.rank,
        max_iter: 200,
    };
    let dp = definiteness_interval(&p.pair, &opts);
    let dh = definiteness_interval(&p.hat, &opts);
    let neg_inf = |reason: Reason, sign_case: Option<SignCase>| InfimumResult {
        verdict: Verdict::NegInfinite,
        value: f64::NEG_INFINITY,
        reason: Some(reason),
        sign_case,
        ..base.clone()
    };

    let mut orientations = Vec::new();
    if dp.is_psd_pair && dh.is_psd_pair {
        orientations.push(SignCase::PsdPairs);
    }
    if dp.is_nsd_pair && dh.is_nsd_pair {
        orientations.push(SignCase::NsdPairs);
    }
    let detail = |result: InfimumResult| InfimumDetail {
        result,
        pair: Some(an.clone()),
        hat: Some(ah.clone()),
        def_pair: Some(dp),
        def_hat: Some(dh),
    };
    if orientations.is_empty() {
        let semidef = |d: &DefinitenessReport| d.is_psd_pair || d.is_nsd_pair;
        let reason = if an.infinite_sign == InfiniteSign::Coupled {
            Reason::CoupledInfiniteStructure
        } else if !an.complex.is_empty() || !ah.complex.is_empty() {
            Reason::ComplexEigenvalues
        } else if !semidef(&dp) || !semidef(&dh) {
            Reason::NotSemidefinitePair
        } else {
            Reason::MixedSigns
        };
        return Ok(detail(neg_inf(reason, None)));
    }

    let mut first_failure = None;
    for case in orientations {
        let (pa, ha, hat_a, ibo, iho) = match case {
            SignCase::PsdPairs => (an.clone(), ah.clone(), p.hat.a.clone(), ib, ih),
            SignCase::NsdPairs => (
                an.mirrored(),
                ah.mirrored(),
                p.hat.a.neg(),
                ib.swapped(),
                ih.swapped(),
            ),
        };
        match evaluate_oriented(p, &pa, &ha, &hat_a, ibo, iho)? {
            Ok((value, terms, prop)) => {
                let attainable = if pa.real_diagonalizable() && ha.real_diagonalizable() {
                    Attainable::Yes
                } else {
                    Attainable::Unknown
                };
                return Ok(detail(InfimumResult {
                    verdict: Verdict::Finite,
                    value,
                    sign_case: Some(case),
                    terms,
                    attainable,
                    properness: Some(prop),
                    ..base
                }));
            }
            Err(reason) => {
                if first_failure.is_none() {
                    first_failure = Some((reason, case));
                }
            }
        }
    }
    let (reason, case) = first_failure.expect("at least one orientation was tried");
    Ok(detail(neg_inf(reason, Some(case))))
}

type Oriented = Result<(f64, Vec<Term>, Properness), Reason>;

/// Gates and closed form for one orientation in which both pencils are
/// positive semidefinite.
fn evaluate_oriented(
    p: &ProblemInstance,
    pa: &PencilAnalysis,
    ha: &PencilAnalysis,
    hat_a: &HermitianMatrix,
    ib: Inertia,
    ih: Inertia,
) -> Result<Oriented, TraceminError> {
    match pa.infinite_sign {
        InfiniteSign::Coupled => return Ok(Err(Reason::CoupledInfiniteStructure)),
        InfiniteSign::Mixed | InfiniteSign::Minus => return Ok(Err(Reason::NotSemidefinitePair)),
        InfiniteSign::Plus => {
            // Directions in N(B) are unconstrained; they only stay bounded
            // when Â ⪰ 0.
            let (vals, _) = sym_eigen(hat_a.matrix());
            let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if vals
                .first()
                .is_some_and(|&v| v < -p.tol.psd * (1.0 + scale))
            {
                return Ok(Err(Reason::InfiniteBlockSign));
            }
        }
        InfiniteSign::None => {}
    }
    if !pa.complex.is_empty() || !ha.complex.is_empty() {
        return Ok(Err(Reason::ComplexEigenvalues));
    }
    let values = |v: &[EigenDirection]| v.iter().map(|d| d.value).collect::<Vec<_>>();
    let (hp, hn, ap, an) = (
        values(&ha.pos),
        values(&ha.neg),
        values(&pa.pos),
        values(&pa.neg),
    );
    let big = hp.iter().chain(&hn).fold(0.0_f64, |a, v| a.max(v.abs()));
    let zero_tol = p.tol.typ * (1.0 + big);
    let Some(prop) = properness(ib, &hp, &hn, ih, zero_tol)? else {
        return Ok(Err(Reason::Improper));
    };
    let (value, terms) = closed_form(&hp, &hn, &ap, &an, prop)?;
    Ok(Ok((value, terms, prop)))
}

/// A minimizer together with what it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimizer {
    pub x: CMat,
    pub value: f64,
    pub achieved: f64,
    pub residual: f64,
}

pub fn minimizer(p: &ProblemInstance) -> Result<Minimizer, TraceminError> {
    let d = infimum_detailed(p)?;
    let r = &d.result;
    let x = match r.verdict {
        Verdict::NegInfinite => {
            return Err(TraceminError::NotAttainable("the infimum is -∞".into()));
        }
        Verdict::ExcludedConstant => feasible_point(p)?,
        Verdict::Finite => {
            if r.attainable != Attainable::Yes {
                return Err(TraceminError::NotAttainable(
                    "a Jordan pair enters the closed form; the infimum may not be attained".into(),
                ));
            }
            let (pa, ha) = match r.sign_case {
                Some(SignCase::NsdPairs) => (
                    d.pair.as_ref().unwrap().mirrored(),
                    d.hat.as_ref().unwrap().mirrored(),
                ),
                _ => (d.pair.clone().unwrap(), d.hat.clone().unwrap()),
            };
            // X = Σ x_k x̂_kᴴ over the pairs matched by the closed form.
            let mut x = CMat::zeros(p.n(), p.n_hat());
            for t in &r.terms {
                let (a, h) = if t.sign > 0 {
                    (&pa.pos[t.index], &ha.pos[t.hat_index])
                } else {
                    (&pa.neg[t.index], &ha.neg[t.hat_index])
                };
                let (Some(xa), Some(xh)) = (&a.vector, &h.vector) else {
                    return Err(TraceminError::NotAttainable("missing eigenvector".into()));
                };
                x += xa * xh.adjoint();
            }
            x
        }
    };
    Ok(Minimizer {
        achieved: p.objective(&x),
        residual: p.feasibility_residual(&x),
        value: r.value,
        x,
    })
}

/// Some point with `B̂ Xᴴ B X = I`.
pub fn feasible_point(p: &ProblemInstance) -> Result<CMat, TraceminError> {
    let (w, s) = signature_frame(&p.pair.b, p.tol.rank);
    let (wh, sh) = signature_frame(&p.hat.b, p.tol.rank);
    if wh.ncols() != p.n_hat() {
        return Err(TraceminError::EmptyFeasibleSet(Feasibility::SingularHatB));
    }
    let mut used = vec![false; s.len()];
    let mut x = CMat::zeros(p.n(), p.n_hat());
    for (k, &sk) in sh.iter().enumerate() {
        let Some(i) = (0..s.len()).find(|&i| !used[i] && s[i] == sk) else {
            return Err(TraceminError::EmptyFeasibleSet(
                Feasibility::InertiaExceeded,
            ));
        };
        used[i] = true;
        x += w.column(i) * wh.column(k).adjoint();
    }
    Ok(x)
}

/// Square problem with the same infimum: after removing the common nullspace
/// of `(A, B)`, pads `Â` with zeros and `B̂` with `diag(I, -I)` up to the
/// inertia of `B`.
pub fn pad_problem(p: &ProblemInstance) -> Result<ProblemInstance, TraceminError> {
    let defl = deflate_common_nullspace(&p.pair, p.tol.rank);
    let pair = defl.reduced;
    let ib = inertia(&pair.b, p.tol.rank);
    if ib.zero > 0 {
        return Err(TraceminError::SingularB);
    }
    let ih = p.inertia_hat_b();
    if ih.pos > ib.pos || ih.neg > ib.neg {
        return Err(TraceminError::InertiaViolation { b: ib, hat: ih });
    }
    let extra_pos = ib.pos - ih.pos;
    let extra_neg = ib.neg - ih.neg;
    let k = extra_pos + extra_neg;
    let jc: Vec<f64> = std::iter::repeat_n(1.0, extra_pos)
        .chain(std::iter::repeat_n(-1.0, extra_neg))
        .collect();
    let jc = HermitianMatrix::from_real_diagonal(&jc);
    let hat = MatrixPair {
        a: HermitianMatrix::from_hermitian_part(&block_diag(p.hat.a.matrix(), &CMat::zeros(k, k))),
        b: HermitianMatrix::from_hermitian_part(&block_diag(p.hat.b.matrix(), jc.matrix())),
    };
    Ok(ProblemInstance::new(pair, hat, p.tol)?)
}
