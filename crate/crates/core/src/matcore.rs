//! Dense complex matrices, Hermitian validation, inertia and problem instances.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: residual {residual:e} exceeds {tol:e}")]
    NotHermitian { residual: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Numerical tolerances shared by every stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub herm: f64,
    pub rank: f64,
    pub psd: f64,
    pub typ: f64,
    pub feas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            herm: 1e-10,
            rank: 1e-10,
            psd: 1e-8,
            typ: 1e-7,
            feas: 1e-8,
        }
    }
}

/// A square matrix that passed the Hermitian check. The stored copy is
/// exactly Hermitian (the skew part below tolerance is discarded).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    m: CMat,
    residual: f64,
}

impl HermitianMatrix {
    pub fn new(m: CMat, herm_tol: f64) -> Result<Self, MatError> {
        validate_hermitian(&m, herm_tol)
    }

    /// Wraps a matrix by taking its Hermitian part, without checking.
    pub fn from_hermitian_part(m: &CMat) -> Self {
        HermitianMatrix {
            m: hermitian_part(m),
            residual: 0.0,
        }
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let m = CMat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(d[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        HermitianMatrix { m, residual: 0.0 }
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix {
            m: CMat::zeros(n, n),
            residual: 0.0,
        }
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix {
            m: CMat::identity(n, n),
            residual: 0.0,
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Relative size of the discarded skew-Hermitian part.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn neg(&self) -> Self {
        HermitianMatrix {
            m: -&self.m,
            residual: self.residual,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix {
            m: &self.m * C64::new(s, 0.0),
            residual: self.residual,
        }
    }

    /// `Yᴴ M Y`, symmetrized.
    pub fn congruence(&self, y: &CMat) -> Self {
        HermitianMatrix::from_hermitian_part(&(y.adjoint() * &self.m * y))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigen(&self.m).0
    }

    /// Largest absolute eigenvalue.
    pub fn norm2(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn fro(&self) -> f64 {
        self.m.norm()
    }
}

/// Relative Hermitian residual `max|m_ij - conj(m_ji)| / max(1, max|m_ij|)`.
pub fn hermitian_residual(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    let mut big = 1.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            big = big.max(m[(i, j)].norm());
        }
    }
    worst / big
}

pub fn validate_hermitian(raw: &CMat, tol: f64) -> Result<HermitianMatrix, MatError> {
    if raw.nrows() != raw.ncols() {
        return Err(MatError::NotSquare {
            rows: raw.nrows(),
            cols: raw.ncols(),
        });
    }
    if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(MatError::NotHermitian {
            residual: f64::INFINITY,
            tol,
        });
    }
    let residual = hermitian_residual(raw);
    if residual > tol {
        return Err(MatError::NotHermitian { residual, tol });
    }
    Ok(HermitianMatrix {
        m: hermitian_part(raw),
        residual,
    })
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Ascending eigenvalues and matching orthonormal eigenvectors of a Hermitian matrix.
pub(crate) fn sym_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Inertia {
    pub pos: usize,
    pub neg: usize,
    pub zero: usize,
}

impl Inertia {
    pub fn swapped(self) -> Self {
        Inertia {
            pos: self.neg,
            neg: self.pos,
            zero: self.zero,
        }
    }

    pub fn rank(self) -> usize {
        self.pos + self.neg
    }
}

/// Inertia with eigenvalues below `rank_tol * max|λ|` counted as zero.
pub fn inertia(m: &HermitianMatrix, rank_tol: f64) -> Inertia {
    inertia_of_values(&m.eigenvalues(), rank_tol)
}

pub(crate) fn inertia_of_values(vals: &[f64], rank_tol: f64) -> Inertia {
    let big = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let cut = rank_tol * big;
    let mut out = Inertia {
        pos: 0,
        neg: 0,
        zero: 0,
    };
    for &v in vals {
        if big == 0.0 || v.abs() <= cut {
            out.zero += 1;
        } else if v > 0.0 {
            out.pos += 1;
        } else {
            out.neg += 1;
        }
    }
    out
}

/// A Hermitian pencil `(A, B)` of a common order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPair {
    pub a: HermitianMatrix,
    pub b: HermitianMatrix,
}

impl MatrixPair {
    pub fn new(a: HermitianMatrix, b: HermitianMatrix) -> Result<Self, MatError> {
        if a.dim() != b.dim() {
            return Err(MatError::DimensionMismatch(format!(
                "A is {0}x{0} but B is {1}x{1}",
                a.dim(),
                b.dim()
            )));
        }
        Ok(MatrixPair { a, b })
    }

    pub fn from_raw(a: CMat, b: CMat, herm_tol: f64) -> Result<Self, MatError> {
        MatrixPair::new(
            validate_hermitian(&a, herm_tol)?,
            validate_hermitian(&b, herm_tol)?,
        )
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn neg(&self) -> Self {
        MatrixPair {
            a: self.a.neg(),
            b: self.b.neg(),
        }
    }

    pub fn congruence(&self, y: &CMat) -> Self {
        MatrixPair {
            a: self.a.congruence(y),
            b: self.b.congruence(y),
        }
    }

    /// `1 + ‖A‖₂ + ‖B‖₂`.
    pub fn scale(&self) -> f64 {
        1.0 + self.a.norm2() + self.b.norm2()
    }

    pub fn direct_sum(&self, other: &MatrixPair) -> MatrixPair {
        MatrixPair {
            a: HermitianMatrix::from_hermitian_part(&block_diag(self.a.matrix(), other.a.matrix())),
            b: HermitianMatrix::from_hermitian_part(&block_diag(self.b.matrix(), other.b.matrix())),
        }
    }
}

/// Whether `B̂ Xᴴ B X = I` has any solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feasibility {
    Feasible,
    SingularHatB,
    InertiaExceeded,
}

/// Both pencils of a trace minimization problem plus the tolerances to use.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub pair: MatrixPair,
    pub hat: MatrixPair,
    pub tol: Tolerances,
}

impl ProblemInstance {
    pub fn new(pair: MatrixPair, hat: MatrixPair, tol: Tolerances) -> Result<Self, MatError> {
        if hat.dim() > pair.dim() {
            return Err(MatError::DimensionMismatch(format!(
                "hat order {} exceeds order {}",
                hat.dim(),
                pair.dim()
            )));
        }
        Ok(ProblemInstance { pair, hat, tol })
    }

    pub fn n(&self) -> usize {
        self.pair.dim()
    }

    pub fn n_hat(&self) -> usize {
        self.hat.dim()
    }

    pub fn inertia_b(&self) -> Inertia {
        inertia(&self.pair.b, self.tol.rank)
    }

    pub fn inertia_hat_b(&self) -> Inertia {
        inertia(&self.hat.b, self.tol.rank)
    }

    pub fn feasibility(&self) -> Feasibility {
        let ib = self.inertia_b();
        let ih = self.inertia_hat_b();
        if ih.zero > 0 {
            Feasibility::SingularHatB
        } else if ih.pos > ib.pos || ih.neg > ib.neg {
            Feasibility::InertiaExceeded
        } else {
            Feasibility::Feasible
        }
    }

    /// The same problem with all four matrices negated; the objective and the
    /// constraint are unchanged.
    pub fn mirrored(&self) -> Self {
        ProblemInstance {
            pair: self.pair.neg(),
            hat: self.hat.neg(),
            tol: self.tol,
        }
    }

    /// `trace(Â Xᴴ A X)`, real part.
    pub fn objective(&self, x: &CMat) -> f64 {
        let inner = x.adjoint() * self.pair.a.matrix() * x;
        (self.hat.a.matrix() * inner).trace().re
    }

    /// `‖B̂ Xᴴ B X - I‖_F`.
    pub fn feasibility_residual(&self, x: &CMat) -> f64 {
        let g = self.hat.b.matrix() * (x.adjoint() * self.pair.b.matrix() * x);
        (g - CMat::identity(self.n_hat(), self.n_hat())).norm()
    }
}

/// `W` with `Wᴴ M W = diag(+1.., -1..)` built from eigenvectors of `M`,
/// keeping the nonzero eigenvalues only. Returns `W` and the signs.
pub fn signature_frame(m: &HermitianMatrix, rank_tol: f64) -> (CMat, Vec<f64>) {
    let (vals, vecs) = sym_eigen(m.matrix());
    let big = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut order: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i].abs() > rank_tol * big)
        .collect();
    order.sort_by(|&i, &j| {
        vals[j]
            .signum()
            .total_cmp(&vals[i].signum())
            .then(i.cmp(&j))
    });
    let w = CMat::from_fn(vals.len(), order.len(), |r, k| {
        vecs[(r, order[k])] / vals[order[k]].abs().sqrt()
    });
    let s = order.iter().map(|&i| vals[i].signum()).collect();
    (w, s)
}

pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMat::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn complex_gaussian<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    scale: f64,
) -> CMat {
    let s = scale / std::f64::consts::SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Haar-distributed unitary from the QR factors of a complex Gaussian matrix,
/// with the phases of `R`'s diagonal pushed into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let g = complex_gaussian(rng, n, n, 1.0);
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Scrambles a pair by `Y = Q diag(d)`, with `Q` Haar unitary and `d`
/// log-uniform in `[cap^-1/2, cap^1/2]`, so `cond(Y) <= cap`.
/// Returns the congruent pair `(Yᴴ A Y, Yᴴ B Y)` together with `Y`.
pub fn random_congruence(pair: &MatrixPair, seed: u64, cap: f64) -> (MatrixPair, CMat) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pair.dim();
    let q = haar_unitary(&mut rng, n);
    let half = 0.5 * cap.max(1.0).ln();
    let d: Vec<f64> = (0..n)
        .map(|_| (rng.random_range(-half..=half)).exp())
        .collect();
    let y = CMat::from_fn(n, n, |i, j| q[(i, j)] * d[j]);
    (pair.congruence(&y), y)
}
