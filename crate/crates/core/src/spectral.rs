//! Hermitian eigendecomposition, deflation of the common nullspace, typed
//! eigenvalues of a pencil and congruence diagonalization.
//!
//! A real eigenvalue `λ` with eigenvector `x` has positive type when
//! `xᴴBx > 0` and negative type when `xᴴBx < 0`. For a semidefinite pencil a
//! 2x2 Jordan block at `λ₀` contributes one copy of `λ₀` of each type.

use nalgebra::Schur;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::definiteness::{analyze_side, DefinitenessOptions, Interval};
use crate::matcore::{
    c, hermitian_part, inertia_of_values, sym_eigen, CMat, CVec, HermitianMatrix, MatrixPair,
    Tolerances, C64,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("eigen kernel failed: {0}")]
    KernelFailure(String),
    #[error("pencil has {count} non-real eigenvalue pair(s)")]
    NonRealSpectrum { count: usize },
    #[error("pencil is not congruent to a real diagonal pair: {0}")]
    NotDiagonalizable(String),
    #[error("congruence transform is ill-conditioned (condition estimate {cond:e})")]
    IllConditioned { cond: f64 },
}

/// Ascending eigenvalues with orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn eigh(m: &HermitianMatrix) -> Eigh {
    let (values, vectors) = sym_eigen(m.matrix());
    Eigh { values, vectors }
}

/// Result of removing `N(A) ∩ N(B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Deflation {
    /// `(Zᴴ A Z, Zᴴ B Z)` with `Z = range_basis`.
    pub reduced: MatrixPair,
    /// Orthonormal basis of the complement of the common nullspace.
    pub range_basis: CMat,
    /// Orthonormal basis of the common nullspace.
    pub null_basis: CMat,
    pub deflated_dims: usize,
}

pub fn deflate_common_nullspace(pair: &MatrixPair, rank_tol: f64) -> Deflation {
    let n = pair.dim();
    let mut stacked = CMat::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(pair.a.matrix());
    stacked.view_mut((n, 0), (n, n)).copy_from(pair.b.matrix());
    let (sig, v) = right_singular_ascending(&stacked);
    let big = sig.iter().fold(0.0_f64, |a, &s| a.max(s));
    let k = sig
        .iter()
        .filter(|&&s| big == 0.0 || s <= rank_tol * big)
        .count();
    let null_basis = v.columns(0, k).into_owned();
    let range_basis = v.columns(k, n - k).into_owned();
    Deflation {
        reduced: pair.congruence(&range_basis),
        range_basis,
        null_basis,
        deflated_dims: k,
    }
}

/// Singular values in ascending order with the matching right singular
/// vectors as columns (a full basis of the column space's domain).
pub(crate) fn right_singular_ascending(m: &CMat) -> (Vec<f64>, CMat) {
    let (r, cols) = m.shape();
    if cols == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let tall = if r >= cols {
        m.clone()
    } else {
        let mut t = CMat::zeros(cols, cols);
        t.view_mut((0, 0), (r, cols)).copy_from(m);
        t
    };
    let svd = tall.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let mut idx: Vec<usize> = (0..cols).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let sig = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let v = CMat::from_fn(cols, cols, |i, j| vt[(idx[j], i)].conj());
    (sig, v)
}

/// Orthonormal basis of `{x : M x ≈ 0}` using an absolute singular value cut.
pub(crate) fn null_space(m: &CMat, tol: f64) -> CMat {
    let (sig, v) = right_singular_ascending(m);
    let k = sig.iter().filter(|&&s| s <= tol).count();
    v.columns(0, k).into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfiniteSign {
    /// `B` is nonsingular after deflation.
    None,
    /// `A` restricted to `N(B)` is positive definite.
    Plus,
    /// `A` restricted to `N(B)` is negative definite.
    Minus,
    /// `A` restricted to `N(B)` is nonsingular and indefinite.
    Mixed,
    /// `A` restricted to `N(B)` is singular: `A` maps some null vector of
    /// `B` into the range of `B` (higher order infinite or singular blocks).
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypedEigenvalue {
    pub value: f64,
    /// `xᴴBx` for a unit eigenvector; zero for Jordan copies.
    pub b_form: f64,
    pub jordan_pair: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedSpectrum {
    /// Positive type, ascending.
    pub pos: Vec<TypedEigenvalue>,
    /// Negative type, ascending.
    pub neg: Vec<TypedEigenvalue>,
    /// Non-real eigenvalues, one entry per conjugate pair (`im > 0`).
    pub complex: Vec<ComplexValue>,
    /// Real eigenvalues whose type could not be assigned (defective blocks
    /// of a pencil that is not semidefinite).
    pub untyped: Vec<f64>,
    pub deflated_dims: usize,
    pub infinite_dims: usize,
    pub infinite_definite_sign: InfiniteSign,
}

impl TypedSpectrum {
    pub fn pos_values(&self) -> Vec<f64> {
        self.pos.iter().map(|e| e.value).collect()
    }

    pub fn neg_values(&self) -> Vec<f64> {
        self.neg.iter().map(|e| e.value).collect()
    }

    pub fn is_real(&self) -> bool {
        self.complex.is_empty()
    }

    pub fn has_jordan(&self) -> bool {
        self.pos.iter().chain(&self.neg).any(|e| e.jordan_pair)
    }
}

/// A typed real eigenvalue with its eigenvector in the original coordinates,
/// normalized so `xᴴBx = sign`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDirection {
    pub value: f64,
    pub sign: i8,
    pub vector: Option<CVec>,
    pub jordan: bool,
}

/// A non-real eigenvalue `μ` (`Im μ > 0`) with `A x = μ B x`,
/// `A y = conj(μ) B y` and `yᴴ B x = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexDirection {
    pub value: C64,
    pub vectors: Option<(CVec, CVec)>,
}

/// `B v = 0` and `vᴴ A v = sign`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteDirection {
    pub vector: CVec,
    pub sign: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypingPath {
    /// `B` restricted to the finite part is definite.
    Definite,
    /// Finite part is positive semidefinite.
    Psd,
    /// Finite part is negative semidefinite; typed through the negated pair.
    Nsd,
    /// Neither; eigenvectors computed individually.
    General,
    /// Coupled infinite structure; shift-and-invert on the whole pencil.
    Coupled,
}

/// Everything the downstream modules need about one pencil.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilAnalysis {
    pub n: usize,
    pub pos: Vec<EigenDirection>,
    pub neg: Vec<EigenDirection>,
    pub complex: Vec<ComplexDirection>,
    pub untyped: Vec<f64>,
    pub defective: bool,
    pub path: TypingPath,
    pub deflation: Deflation,
    pub infinite_sign: InfiniteSign,
    pub infinite_dims: usize,
    pub infinite: Vec<InfiniteDirection>,
    /// Null vectors of `A` restricted to `N(B)` (original coordinates).
    pub coupled: Vec<CVec>,
}

impl PencilAnalysis {
    pub fn spectrum(&self, b: &HermitianMatrix) -> TypedSpectrum {
        let typed = |d: &EigenDirection| TypedEigenvalue {
            value: d.value,
            b_form: match &d.vector {
                Some(x) => (x.adjoint() * b.matrix() * x)[(0, 0)].re / x.norm_squared(),
                None => 0.0,
            },
            jordan_pair: d.jordan,
        };
        TypedSpectrum {
            pos: self.pos.iter().map(typed).collect(),
            neg: self.neg.iter().map(typed).collect(),
            complex: self
                .complex
                .iter()
                .map(|z| ComplexValue {
                    re: z.value.re,
                    im: z.value.im,
                })
                .collect(),
            untyped: self.untyped.clone(),
            deflated_dims: self.deflation.deflated_dims,
            infinite_dims: self.infinite_dims,
            infinite_definite_sign: self.infinite_sign,
        }
    }

    pub fn has_jordan(&self) -> bool {
        self.pos.iter().chain(&self.neg).any(|d| d.jordan)
    }

    /// Congruent to a real diagonal pair.
    pub fn real_diagonalizable(&self) -> bool {
        self.complex.is_empty()
            && self.untyped.is_empty()
            && !self.defective
            && !self.has_jordan()
            && self.infinite_sign != InfiniteSign::Coupled
    }

    /// Same eigenvalues with the types exchanged: the analysis of `(-A, -B)`.
    pub fn mirrored(&self) -> PencilAnalysis {
        let flip = |v: &Vec<EigenDirection>| {
            v.iter()
                .map(|d| EigenDirection {
                    sign: -d.sign,
                    ..d.clone()
                })
                .collect::<Vec<_>>()
        };
        let sign = match self.infinite_sign {
            InfiniteSign::Plus => InfiniteSign::Minus,
            InfiniteSign::Minus => InfiniteSign::Plus,
            s => s,
        };
        PencilAnalysis {
            pos: flip(&self.neg),
            neg: flip(&self.pos),
            complex: self
                .complex
                .iter()
                .map(|z| ComplexDirection {
                    value: z.value,
                    vectors: z.vectors.as_ref().map(|(x, y)| (x.clone(), -y.clone())),
                })
                .collect(),
            infinite_sign: sign,
            infinite: self
                .infinite
                .iter()
                .map(|d| InfiniteDirection {
                    vector: d.vector.clone(),
                    sign: -d.sign,
                })
                .collect(),
            ..self.clone()
        }
    }
}

pub fn typed_spectrum(pair: &MatrixPair, tol: &Tolerances) -> Result<TypedSpectrum, SpectralError> {
    Ok(analyze_pencil(pair, tol)?.spectrum(&pair.b))
}

/// Local result of typing a pencil `(P, Q)`; vectors live in `P`'s space.
#[derive(Default)]
struct FinitePart {
    pos: Vec<EigenDirection>,
    neg: Vec<EigenDirection>,
    complex: Vec<ComplexDirection>,
    untyped: Vec<f64>,
    defective: bool,
}

impl FinitePart {
    fn push(&mut self, value: f64, sign: i8, vector: Option<CVec>, jordan: bool) {
        let d = EigenDirection {
            value,
            sign,
            vector,
            jordan,
        };
        if sign > 0 {
            self.pos.push(d)
        } else {
            self.neg.push(d)
        }
    }

    fn flip(self) -> FinitePart {
        let flip = |v: Vec<EigenDirection>| {
            v.into_iter()
                .map(|d| EigenDirection { sign: -d.sign, ..d })
                .collect::<Vec<_>>()
        };
        FinitePart {
            pos: flip(self.neg),
            neg: flip(self.pos),
            complex: self
                .complex
                .into_iter()
                .map(|z| ComplexDirection {
                    value: z.value,
                    vectors: z.vectors.map(|(x, y)| (x, -y)),
                })
                .collect(),
            untyped: self.untyped,
            defective: self.defective,
        }
    }

    fn map(self, g: &CMat) -> FinitePart {
        let m = |v: Vec<EigenDirection>| {
            v.into_iter()
                .map(|d| EigenDirection {
                    vector: d.vector.map(|y| g * y),
                    ..d
                })
                .collect::<Vec<_>>()
        };
        FinitePart {
            pos: m(self.pos),
            neg: m(self.neg),
            complex: self
                .complex
                .into_iter()
                .map(|z| ComplexDirection {
                    value: z.value,
                    vectors: z.vectors.map(|(x, y)| (g * x, g * y)),
                })
                .collect(),
            untyped: self.untyped,
            defective: self.defective,
        }
    }
}

pub fn analyze_pencil(
    pair: &MatrixPair,
    tol: &Tolerances,
) -> Result<PencilAnalysis, SpectralError> {
    let n = pair.dim();
    let deflation = deflate_common_nullspace(pair, tol.rank);
    let z = &deflation.range_basis;
    let ar = deflation.reduced.a.matrix().clone();
    let br = deflation.reduced.b.matrix().clone();
    let r0 = ar.nrows();

    let (bvals, u) = sym_eigen(&br);
    let bmax = bvals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let finite_idx: Vec<usize> = (0..r0)
        .filter(|&i| bmax > 0.0 && bvals[i].abs() > tol.rank * bmax)
        .collect();
    let null_idx: Vec<usize> = (0..r0).filter(|i| !finite_idx.contains(i)).collect();
    let uf = select_columns(&u, &finite_idx);
    let u0 = select_columns(&u, &null_idx);
    let df: Vec<f64> = finite_idx.iter().map(|&i| bvals[i]).collect();

    let mut infinite_sign = InfiniteSign::None;
    let mut infinite = Vec::new();
    let mut coupled = Vec::new();
    let mut t = uf.clone();
    if !null_idx.is_empty() {
        let a22 = hermitian_part(&(u0.adjoint() * &ar * &u0));
        let (avals, av) = sym_eigen(&a22);
        let anorm = sym_eigen(&ar).0.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let cut = tol.rank * anorm.max(f64::MIN_POSITIVE);
        let zero: Vec<usize> = (0..avals.len())
            .filter(|&i| avals[i].abs() <= cut)
            .collect();
        if !zero.is_empty() {
            infinite_sign = InfiniteSign::Coupled;
            for &i in &zero {
                coupled.push(z * (&u0 * av.column(i)));
            }
        } else {
            let npos = avals.iter().filter(|&&v| v > 0.0).count();
            infinite_sign = if npos == avals.len() {
                InfiniteSign::Plus
            } else if npos == 0 {
                InfiniteSign::Minus
            } else {
                InfiniteSign::Mixed
            };
            for (i, &val) in avals.iter().enumerate() {
                let v = z * (&u0 * av.column(i)) * c(1.0 / val.abs().sqrt());
                infinite.push(InfiniteDirection {
                    vector: v,
                    sign: if val > 0.0 { 1 } else { -1 },
                });
            }
            // x = U_f x₁ + U₀ x₂ with x₂ = -A22⁻¹ A21 x₁ eliminates the
            // infinite part; the finite eigenvalues are those of (Tᴴ A T, D).
            let a21 = u0.adjoint() * &ar * &uf;
            let a22_inv =
                &av * CMat::from_diagonal(&nalgebra::DVector::from_iterator(
                    avals.len(),
                    avals.iter().map(|v| c(1.0 / v)),
                )) * av.adjoint();
            t = &uf - &u0 * (a22_inv * a21);
        }
    }

    let (part, path) = if infinite_sign == InfiniteSign::Coupled {
        let part = coupled_path(&ar, &br, tol)?;
        (part.map(z), TypingPath::Coupled)
    } else {
        let s = hermitian_part(&(t.adjoint() * &ar * &t));
        let w: Vec<f64> = df.iter().map(|d| 1.0 / d.abs().sqrt()).collect();
        let r = w.len();
        let m = CMat::from_fn(r, r, |i, j| s[(i, j)] * (w[i] * w[j]));
        let jd: Vec<f64> = df.iter().map(|d| d.signum()).collect();
        let g = z * &t * CMat::from_fn(r, r, |i, j| if i == j { c(w[i]) } else { c(0.0) });
        let (part, path) = finite_part(&hermitian_part(&m), &jd, tol)?;
        (part.map(&g), path)
    };

    let mut pos = part.pos;
    let mut neg = part.neg;
    pos.sort_by(|a, b| a.value.total_cmp(&b.value));
    neg.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(PencilAnalysis {
        n,
        pos,
        neg,
        complex: part.complex,
        untyped: part.untyped,
        defective: part.defective,
        path,
        infinite_dims: null_idx.len(),
        deflation,
        infinite_sign,
        infinite,
        coupled,
    })
}

fn select_columns(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

fn diag_c(d: &[f64]) -> CMat {
    CMat::from_fn(
        d.len(),
        d.len(),
        |i, j| if i == j { c(d[i]) } else { c(0.0) },
    )
}

fn norm2(m: &CMat) -> f64 {
    sym_eigen(m).0.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Types the eigenvalues of `(M, J)` with `J = diag(jd)`, `jd[i] = ±1`.
fn finite_part(
    m: &CMat,
    jd: &[f64],
    tol: &Tolerances,
) -> Result<(FinitePart, TypingPath), SpectralError> {
    let r = jd.len();
    let mut part = FinitePart::default();
    if r == 0 {
        return Ok((part, TypingPath::Definite));
    }
    let npos = jd.iter().filter(|&&s| s > 0.0).count();
    if npos == r || npos == 0 {
        // B definite on the finite part: an ordinary Hermitian problem.
        let sgn = if npos == r { 1.0 } else { -1.0 };
        let (vals, vecs) = sym_eigen(&(m * c(sgn)));
        for (i, &v) in vals.iter().enumerate() {
            part.push(v, sgn as i8, Some(vecs.column(i).into_owned()), false);
        }
        return Ok((part, TypingPath::Definite));
    }
    let jm = diag_c(jd);
    let pair = MatrixPair {
        a: HermitianMatrix::from_hermitian_part(m),
        b: HermitianMatrix::from_hermitian_part(&jm),
    };
    let opts = DefinitenessOptions {
        psd_tol: tol.psd,
        rank_tol: tol.rank,
        max_iter: 200,
    };
    let scale = pair.scale();
    let side = analyze_side(&pair, &opts, scale);
    if let (true, Some(iv)) = (side.semidefinite, side.interval) {
        return Ok((psd_path(m, jd, iv, tol), TypingPath::Psd));
    }
    let neg = pair.neg();
    let side = analyze_side(&neg, &opts, scale);
    if let (true, Some(iv)) = (side.semidefinite, side.interval) {
        let flipped: Vec<f64> = jd.iter().map(|s| -s).collect();
        return Ok((psd_path(&(-m), &flipped, iv, tol).flip(), TypingPath::Nsd));
    }
    let jmm = &jm * m;
    let mus = schur_eigenvalues(&jmm)?;
    Ok((general_path(m, &jm, &mus, tol), TypingPath::General))
}

/// Typing of a positive semidefinite `(M, J)` through a shift `λ₀` inside
/// the definiteness interval. With `C = M - λ₀J ⪰ 0`, eigenvalues other than
/// `λ₀` are `λ₀ + τ` for the nonzero eigenvalues `τ` of `C^½ J C^½` on the
/// range of `C`, and `sign(τ)` is the type. Copies of `λ₀` itself are counted
/// from the inertia of `J`; those without a non-isotropic eigenvector in
/// `N(C)` are Jordan pairs.
fn psd_path(m: &CMat, jd: &[f64], iv: Interval, tol: &Tolerances) -> FinitePart {
    let r = jd.len();
    let jm = diag_c(jd);
    let lam0 = iv.center();
    let cm = hermitian_part(&(m - &jm * c(lam0)));
    let (cv, cvec) = sym_eigen(&cm);
    let scale_m = 2.0 + norm2(m);
    let tol_c = tol.rank * scale_m;
    let range_idx: Vec<usize> = (0..r).filter(|&i| cv[i] > tol_c).collect();
    let null_idx: Vec<usize> = (0..r).filter(|&i| cv[i] <= tol_c).collect();
    let rr = select_columns(&cvec, &range_idx);
    let nn = select_columns(&cvec, &null_idx);
    let sq: Vec<f64> = range_idx.iter().map(|&i| cv[i].sqrt()).collect();
    let dsq = diag_c(&sq);
    let h = hermitian_part(&(&dsq * (rr.adjoint() * &jm * &rr) * &dsq));
    let (tau, wv) = sym_eigen(&h);
    let tau_tol = tol.typ * (scale_m + lam0.abs());

    let mut part = FinitePart::default();
    let rayleigh = |y: &CVec| {
        let num = (y.adjoint() * m * y)[(0, 0)].re;
        let den = (y.adjoint() * &jm * y)[(0, 0)].re;
        num / den
    };
    let (mut got_pos, mut got_neg) = (0usize, 0usize);
    for (i, &t) in tau.iter().enumerate() {
        if t.abs() <= tau_tol {
            continue;
        }
        let zc = &dsq * wv.column(i);
        let y = &jm * (&rr * zc) * c(1.0 / t.abs().sqrt());
        let sign = if t > 0.0 { 1 } else { -1 };
        let value = rayleigh(&y);
        let value = if value.is_finite() { value } else { lam0 + t };
        if sign > 0 {
            got_pos += 1;
        } else {
            got_neg += 1;
        }
        part.push(value, sign, Some(y), false);
    }
    let npos = jd.iter().filter(|&&s| s > 0.0).count();
    let nneg = r - npos;
    let want_pos = npos.saturating_sub(got_pos);
    let want_neg = nneg.saturating_sub(got_neg);
    if got_pos > npos || got_neg > nneg {
        part.defective = true;
    }

    // Non-isotropic directions inside N(C) are semisimple copies of λ₀.
    let j22 = hermitian_part(&(nn.adjoint() * &jm * &nn));
    let (g, q) = sym_eigen(&j22);
    let tol_g = 10.0 * tol.typ;
    let (mut semi_pos, mut semi_neg) = (0usize, 0usize);
    for (i, &gi) in g.iter().enumerate() {
        if gi.abs() <= tol_g {
            continue;
        }
        let y = &nn * q.column(i) * c(1.0 / gi.abs().sqrt());
        if gi > 0.0 && semi_pos < want_pos {
            semi_pos += 1;
            part.push(rayleigh(&y), 1, Some(y), false);
        } else if gi < 0.0 && semi_neg < want_neg {
            semi_neg += 1;
            part.push(rayleigh(&y), -1, Some(y), false);
        }
    }
    let jp = want_pos - semi_pos;
    let jn = want_neg - semi_neg;
    if jp != jn {
        part.defective = true;
    }
    for _ in 0..jp {
        part.push(lam0, 1, None, true);
    }
    for _ in 0..jn {
        part.push(lam0, -1, None, true);
    }
    part
}

pub(crate) fn schur_eigenvalues(m: &CMat) -> Result<Vec<C64>, SpectralError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| SpectralError::KernelFailure("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Eigenvectors for each cluster of eigenvalue estimates `mus` of the
/// regular pencil `(P, Q)`, typed by the sign of `yᴴQy`.
fn general_path(p: &CMat, q: &CMat, mus: &[C64], tol: &Tolerances) -> FinitePart {
    let mut part = FinitePart::default();
    let scale = 1.0 + p.norm() + q.norm();
    let ctol = 1e-6;
    let mut clusters: Vec<(C64, usize)> = Vec::new();
    let mut sorted = mus.to_vec();
    sorted.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    for mu in sorted {
        match clusters
            .iter_mut()
            .find(|(mean, _)| (mu - *mean / c(1.0)).norm() <= ctol * (1.0 + mean.norm()))
        {
            Some((mean, k)) => {
                *mean = (*mean * c(*k as f64) + mu) / c(*k as f64 + 1.0);
                *k += 1;
            }
            None => clusters.push((mu, 1)),
        }
    }
    let resid_tol = 1e-6 * scale;
    let tol_g = 10.0 * tol.typ;
    for (mean, k) in clusters {
        let real = mean.im.abs() <= 10.0 * tol.typ * (1.0 + mean.norm());
        if real {
            let mu = mean.re;
            let (sig, v) = right_singular_ascending(&(p - q * c(mu)));
            if sig[k - 1] > resid_tol * (1.0 + mu.abs()) {
                part.defective = true;
                part.untyped.extend(std::iter::repeat_n(mu, k));
                continue;
            }
            let e = v.columns(0, k).into_owned();
            let (g, gv) = sym_eigen(&hermitian_part(&(e.adjoint() * q * &e)));
            for (i, &gi) in g.iter().enumerate() {
                if gi.abs() <= tol_g {
                    part.defective = true;
                    part.untyped.push(mu);
                    continue;
                }
                let y = &e * gv.column(i) * c(1.0 / gi.abs().sqrt());
                let num = (y.adjoint() * p * &y)[(0, 0)].re;
                let den = (y.adjoint() * q * &y)[(0, 0)].re;
                part.push(num / den, if gi > 0.0 { 1 } else { -1 }, Some(y), false);
            }
        } else if mean.im > 0.0 {
            let (sx, vx) = right_singular_ascending(&(p - q * mean));
            let (sy, vy) = right_singular_ascending(&(p - q * mean.conj()));
            let lim = resid_tol * (1.0 + mean.norm());
            let ex = vx.columns(0, k).into_owned();
            let ey = vy.columns(0, k).into_owned();
            let mxy = ey.adjoint() * q * &ex;
            let ok = sx[k - 1] <= lim && sy[k - 1] <= lim;
            match (ok, mxy.try_inverse()) {
                (true, Some(inv)) => {
                    let xs = ex * inv;
                    for i in 0..k {
                        part.complex.push(ComplexDirection {
                            value: mean,
                            vectors: Some((xs.column(i).into_owned(), ey.column(i).into_owned())),
                        });
                    }
                }
                _ => {
                    part.defective = true;
                    for _ in 0..k {
                        part.complex.push(ComplexDirection {
                            value: mean,
                            vectors: None,
                        });
                    }
                }
            }
        }
    }
    part
}

/// Finite eigenvalues of a pencil whose infinite part is not semisimple,
/// through shift-and-invert: `(A - sB)⁻¹ B` has eigenvalue `1/(μ - s)`.
fn coupled_path(a: &CMat, b: &CMat, tol: &Tolerances) -> Result<FinitePart, SpectralError> {
    let n = a.nrows();
    let ratio = (1.0 + a.norm()) / (1.0 + b.norm());
    for s0 in [
        0.577_215_664_9,
        -1.324_717_957_2,
        2.903_845_117_3,
        -3.377_016_624_1,
        0.0,
    ] {
        let s = s0 * ratio;
        let shifted = a - b * c(s);
        let sv = shifted.clone().svd(false, false).singular_values;
        if sv.min() <= 1e-8 * sv.max() {
            continue;
        }
        let Some(inv) = shifted.try_inverse() else {
            continue;
        };
        let nus = schur_eigenvalues(&(inv * b))?;
        let numax = nus.iter().fold(0.0_f64, |acc, v| acc.max(v.norm()));
        let mus: Vec<C64> = nus
            .iter()
            .filter(|v| v.norm() > 1e-6 * numax)
            .map(|v| c(s) + c(1.0) / v)
            .collect();
        return Ok(general_path(a, b, &mus, tol));
    }
    // det(A - sB) vanishes identically: singular (T-s) structure. No finite
    // spectrum is well defined; the coupled infinite sign carries the verdict.
    Ok(FinitePart {
        defective: n > 0,
        ..FinitePart::default()
    })
}

/// `Yᴴ J Y = B`, `Yᴴ Λ Y = A` with `J = diag(±1, 0)` and `Λ` real diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CongruentDiagonalization {
    pub y: CMat,
    /// Columns are the eigenvectors; `y⁻¹`.
    pub x: CMat,
    pub j: Vec<f64>,
    pub lambda: Vec<f64>,
    pub residual_a: f64,
    pub residual_b: f64,
    /// Positive-type, negative-type, infinite and common-null column counts.
    pub blocks: [usize; 4],
}

pub fn congruent_diagonalize(
    pair: &MatrixPair,
    tol: &Tolerances,
) -> Result<CongruentDiagonalization, SpectralError> {
    let an = analyze_pencil(pair, tol)?;
    if !an.complex.is_empty() {
        return Err(SpectralError::NonRealSpectrum {
            count: an.complex.len(),
        });
    }
    if !an.real_diagonalizable() {
        return Err(SpectralError::NotDiagonalizable(
            "Jordan, defective or coupled infinite structure present".into(),
        ));
    }
    let n = pair.dim();
    let mut cols: Vec<CVec> = Vec::with_capacity(n);
    let mut j = Vec::with_capacity(n);
    let mut lambda = Vec::with_capacity(n);
    for d in &an.pos {
        cols.push(d.vector.clone().expect("diagonalizable"));
        j.push(1.0);
        lambda.push(d.value);
    }
    for d in &an.neg {
        cols.push(d.vector.clone().expect("diagonalizable"));
        j.push(-1.0);
        lambda.push(-d.value);
    }
    for d in &an.infinite {
        cols.push(d.vector.clone());
        j.push(0.0);
        lambda.push(d.sign as f64);
    }
    for k in 0..an.deflation.deflated_dims {
        cols.push(an.deflation.null_basis.column(k).into_owned());
        j.push(0.0);
        lambda.push(0.0);
    }
    if cols.len() != n {
        return Err(SpectralError::NotDiagonalizable(format!(
            "found {} of {} independent directions",
            cols.len(),
            n
        )));
    }
    let x = CMat::from_columns(&cols);
    let y = x
        .clone()
        .try_inverse()
        .ok_or(SpectralError::IllConditioned {
            cond: f64::INFINITY,
        })?;
    let cond = x.norm() * y.norm() / n.max(1) as f64;
    if !cond.is_finite() || cond > 1.0 / tol.rank {
        return Err(SpectralError::IllConditioned { cond });
    }
    let jm = diag_c(&j);
    let lm = diag_c(&lambda);
    let residual_b = (y.adjoint() * &jm * &y - pair.b.matrix()).norm() / (1.0 + pair.b.fro());
    let residual_a = (y.adjoint() * &lm * &y - pair.a.matrix()).norm() / (1.0 + pair.a.fro());
    Ok(CongruentDiagonalization {
        y,
        x,
        j,
        lambda,
        residual_a,
        residual_b,
        blocks: [
            an.pos.len(),
            an.neg.len(),
            an.infinite.len(),
            an.deflation.deflated_dims,
        ],
    })
}

/// Inertia of `A` restricted to a subspace spanned by orthonormal columns.
#[allow(dead_code)]
pub(crate) fn restricted_inertia(a: &CMat, basis: &CMat, rank_tol: f64) -> crate::matcore::Inertia {
    let (v, _) = sym_eigen(&(basis.adjoint() * a * basis));
    inertia_of_values(&v, rank_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::random_congruence;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn diag_pair(a: &[f64], b: &[f64]) -> MatrixPair {
        MatrixPair::new(
            HermitianMatrix::from_real_diagonal(a),
            HermitianMatrix::from_real_diagonal(b),
        )
        .unwrap()
    }

    fn real_pair(a: &[f64], b: &[f64], n: usize) -> MatrixPair {
        MatrixPair::from_raw(
            CMat::from_row_slice(n, n, &a.iter().map(|&v| c(v)).collect::<Vec<_>>()),
            CMat::from_row_slice(n, n, &b.iter().map(|&v| c(v)).collect::<Vec<_>>()),
            1e-10,
        )
        .unwrap()
    }

    #[test]
    fn diagonal_definite_example() {
        let s = typed_spectrum(&diag_pair(&[1.0, 2.0], &[1.0, -1.0]), &tol()).unwrap();
        assert_eq!(s.pos.len(), 1);
        assert_eq!(s.neg.len(), 1);
        assert!((s.pos[0].value - 1.0).abs() < 1e-12);
        assert!((s.neg[0].value + 2.0).abs() < 1e-12);
        assert!((s.pos[0].b_form - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jordan_block_gives_two_copies() {
        let p = real_pair(&[0.0, 0.3, 0.3, 1.0], &[0.0, 1.0, 1.0, 0.0], 2);
        let s = typed_spectrum(&p, &tol()).unwrap();
        assert_eq!(s.pos.len(), 1);
        assert_eq!(s.neg.len(), 1);
        assert!(s.pos[0].jordan_pair && s.neg[0].jordan_pair);
        assert!((s.pos[0].value - 0.3).abs() < 1e-7);
        assert!((s.neg[0].value - 0.3).abs() < 1e-7);
    }

    #[test]
    fn complex_block_reports_pair() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 1)] = C64::new(0.0, 1.0);
        a[(1, 0)] = C64::new(0.0, -1.0);
        let b = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let p = MatrixPair::from_raw(a, b, 1e-10).unwrap();
        let an = analyze_pencil(&p, &tol()).unwrap();
        assert_eq!(an.complex.len(), 1);
        let z = an.complex[0].value;
        assert!(z.re.abs() < 1e-9 && (z.im - 1.0).abs() < 1e-9, "{z}");
        let (x, y) = an.complex[0].vectors.clone().unwrap();
        let ax = p.a.matrix() * &x - p.b.matrix() * &x * z;
        assert!(ax.norm() < 1e-9);
        let yb = (y.adjoint() * p.b.matrix() * &x)[(0, 0)];
        assert!((yb - c(1.0)).norm() < 1e-9);
        assert!(matches!(
            congruent_diagonalize(&p, &tol()),
            Err(SpectralError::NonRealSpectrum { count: 1 })
        ));
    }

    #[test]
    fn common_nullspace_is_deflated() {
        let d = deflate_common_nullspace(&diag_pair(&[1.0, 0.0], &[1.0, 0.0]), 1e-10);
        assert_eq!(d.deflated_dims, 1);
        assert_eq!(d.reduced.dim(), 1);
    }

    #[test]
    fn infinite_block_sign() {
        let an = analyze_pencil(&diag_pair(&[2.0, 1.0], &[1.0, 0.0]), &tol()).unwrap();
        assert_eq!(an.infinite_sign, InfiniteSign::Plus);
        assert_eq!(an.pos.len(), 1);
        assert!((an.pos[0].value - 2.0).abs() < 1e-12);
        let an = analyze_pencil(&diag_pair(&[2.0, 1.0, -1.0], &[1.0, 0.0, 0.0]), &tol()).unwrap();
        assert_eq!(an.infinite_sign, InfiniteSign::Mixed);
        // T-∞(2): (F₂, K₂(0))
        let p = real_pair(&[0.0, 1.0, 1.0, 0.0], &[0.0, 0.0, 0.0, 1.0], 2);
        let an = analyze_pencil(&p, &tol()).unwrap();
        assert_eq!(an.infinite_sign, InfiniteSign::Coupled);
        assert_eq!(an.coupled.len(), 1);
    }

    #[test]
    fn scrambled_pair_keeps_types() {
        let p = diag_pair(&[3.0, 1.0, -2.0, 5.0], &[1.0, 1.0, -1.0, 0.0]);
        let (s, _) = random_congruence(&p, 11, 50.0);
        let spec = typed_spectrum(&s, &tol()).unwrap();
        let pos = spec.pos_values();
        let neg = spec.neg_values();
        assert_eq!(pos.len(), 2);
        assert!(
            (pos[0] - 1.0).abs() < 1e-8 && (pos[1] - 3.0).abs() < 1e-8,
            "{pos:?}"
        );
        assert!((neg[0] - 2.0).abs() < 1e-8, "{neg:?}");
        assert_eq!(spec.infinite_definite_sign, InfiniteSign::Plus);
    }

    #[test]
    fn non_semidefinite_real_pair_is_typed() {
        // positive-type 1 and 3, negative-type 2: neither PSD nor NSD
        let p = diag_pair(&[1.0, 3.0, -2.0], &[1.0, 1.0, -1.0]);
        let (s, _) = random_congruence(&p, 5, 20.0);
        let an = analyze_pencil(&s, &tol()).unwrap();
        assert_eq!(an.path, TypingPath::General);
        let pos: Vec<f64> = an.pos.iter().map(|d| d.value).collect();
        assert!(
            (pos[0] - 1.0).abs() < 1e-8 && (pos[1] - 3.0).abs() < 1e-8,
            "{pos:?}"
        );
        assert!((an.neg[0].value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn congruent_diagonalization_reconstructs() {
        let p = diag_pair(&[1.0, 2.0, 4.0, 0.0], &[1.0, -1.0, 0.0, 0.0]);
        let (s, _) = random_congruence(&p, 9, 10.0);
        let d = congruent_diagonalize(&s, &tol()).unwrap();
        assert!(
            d.residual_a < 1e-10 && d.residual_b < 1e-10,
            "{} {}",
            d.residual_a,
            d.residual_b
        );
        assert_eq!(d.blocks, [1, 1, 1, 1]);
        let d = congruent_diagonalize(&diag_pair(&[1.0, 2.0], &[1.0, -1.0]), &tol()).unwrap();
        assert_eq!(d.lambda, vec![1.0, 2.0]);
        assert_eq!(d.j, vec![1.0, -1.0]);
    }
}
