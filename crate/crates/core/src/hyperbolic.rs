//! J-unitary matrices: hyperbolic polar form, the ChSh decomposition,
//! feasible-point sampling and J-orthonormal basis completion.
//!
//! `J = diag(I_{n₊}, -I_{n₋})` throughout. A matrix is J-unitary when
//! `Xᴴ J X = J`; the feasible set of the trace problem in a canonical frame
//! is a column selection of such matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::{
    block_diag, c, complex_gaussian, haar_unitary, signature_frame, sym_eigen, CMat,
    ProblemInstance,
};
use crate::spectral::null_space;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HyperbolicError {
    #[error("signature must have at least one sign")]
    EmptySignature,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not J-unitary: ‖XᴴJX - J‖ = {residual:.3e} > {tol:.3e}")]
    NotJUnitary { residual: f64, tol: f64 },
    #[error("target signature ({hat_plus}, {hat_minus}) does not fit in ({n_plus}, {n_minus})")]
    InertiaViolation {
        n_plus: usize,
        n_minus: usize,
        hat_plus: usize,
        hat_minus: usize,
    },
    #[error("column {column} is J-neutral (uᴴJu = {form:.3e})")]
    DegenerateInput { column: usize, form: f64 },
    #[error("columns are not J-orthonormal (residual {residual:.3e})")]
    NotJOrthonormal { residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureJ {
    pub n_plus: usize,
    pub n_minus: usize,
}

impl SignatureJ {
    pub fn new(n_plus: usize, n_minus: usize) -> Result<Self, HyperbolicError> {
        if n_plus + n_minus == 0 {
            return Err(HyperbolicError::EmptySignature);
        }
        Ok(Self { n_plus, n_minus })
    }

    pub fn n(&self) -> usize {
        self.n_plus + self.n_minus
    }

    pub fn signs(&self) -> Vec<f64> {
        std::iter::repeat_n(1.0, self.n_plus)
            .chain(std::iter::repeat_n(-1.0, self.n_minus))
            .collect()
    }

    pub fn matrix(&self) -> CMat {
        let s = self.signs();
        CMat::from_fn(
            self.n(),
            self.n(),
            |i, j| if i == j { c(s[i]) } else { c(0.0) },
        )
    }
}

/// `‖Xᴴ J X - Ĵ‖_F` for an `n×n̂` matrix.
pub fn j_residual(x: &CMat, j: SignatureJ, jhat: SignatureJ) -> f64 {
    (x.adjoint() * j.matrix() * x - jhat.matrix()).norm()
}

/// Square root and inverse square root of a Hermitian positive definite
/// matrix through its eigendecomposition.
fn hpd_sqrt(m: &CMat) -> (CMat, CMat) {
    let (vals, vecs) = sym_eigen(m);
    let n = vals.len();
    let root = CMat::from_fn(n, n, |i, j| {
        if i == j {
            c(vals[i].max(0.0).sqrt())
        } else {
            c(0.0)
        }
    });
    let inv = CMat::from_fn(n, n, |i, j| {
        if i == j {
            c(1.0 / vals[i].max(f64::MIN_POSITIVE).sqrt())
        } else {
            c(0.0)
        }
    });
    (&vecs * root * vecs.adjoint(), &vecs * inv * vecs.adjoint())
}

/// `[[(I+WWᴴ)^½, W], [Wᴴ, (I+WᴴW)^½]] · diag(V₊, V₋)`.
pub fn polar_from_w(w: &CMat, v_plus: &CMat, v_minus: &CMat) -> Result<CMat, HyperbolicError> {
    let (np, nm) = w.shape();
    if v_plus.shape() != (np, np) || v_minus.shape() != (nm, nm) {
        return Err(HyperbolicError::DimensionMismatch(format!(
            "W is {np}×{nm}, V₊ is {:?}, V₋ is {:?}",
            v_plus.shape(),
            v_minus.shape()
        )));
    }
    let (p11, _) = hpd_sqrt(&(CMat::identity(np, np) + w * w.adjoint()));
    let (p22, _) = hpd_sqrt(&(CMat::identity(nm, nm) + w.adjoint() * w));
    let mut h = CMat::zeros(np + nm, np + nm);
    h.view_mut((0, 0), (np, np)).copy_from(&p11);
    h.view_mut((0, np), (np, nm)).copy_from(w);
    h.view_mut((np, 0), (nm, np)).copy_from(&w.adjoint());
    h.view_mut((np, np), (nm, nm)).copy_from(&p22);
    Ok(h * block_diag(v_plus, v_minus))
}

/// `X = diag(U₊, U₋) · H(Σ̃) · diag(V₊, V₋)` where `H(Σ̃)` is the polar
/// factor of the rectangular diagonal `Σ̃` (`σ` on its leading diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct ChShFactors {
    pub u_plus: CMat,
    pub u_minus: CMat,
    pub v_plus: CMat,
    pub v_minus: CMat,
    /// Descending.
    pub sigma: Vec<f64>,
}

impl ChShFactors {
    pub fn sigma_tilde(&self) -> CMat {
        let (np, nm) = (self.u_plus.nrows(), self.u_minus.nrows());
        let mut s = CMat::zeros(np, nm);
        for (i, &v) in self.sigma.iter().enumerate() {
            s[(i, i)] = c(v);
        }
        s
    }

    pub fn reassemble(&self) -> CMat {
        let n_p = self.u_plus.nrows();
        let n_m = self.u_minus.nrows();
        let core = polar_from_w(
            &self.sigma_tilde(),
            &CMat::identity(n_p, n_p),
            &CMat::identity(n_m, n_m),
        )
        .expect("shapes agree by construction");
        block_diag(&self.u_plus, &self.u_minus) * core * block_diag(&self.v_plus, &self.v_minus)
    }
}

/// Extends orthonormal columns to a unitary.
fn complete_unitary(q: &CMat) -> CMat {
    let (n, m) = q.shape();
    if m == n {
        return q.clone();
    }
    let comp = if m == 0 {
        CMat::identity(n, n)
    } else {
        null_space(&q.adjoint(), 0.5)
    };
    let mut u = CMat::zeros(n, n);
    u.view_mut((0, 0), (n, m)).copy_from(q);
    u.view_mut((0, m), (n, n - m))
        .copy_from(&comp.columns(0, n - m));
    u
}

pub fn chsh_decompose(x: &CMat, j: SignatureJ, tol: f64) -> Result<ChShFactors, HyperbolicError> {
    let (np, nm) = (j.n_plus, j.n_minus);
    if x.shape() != (j.n(), j.n()) {
        return Err(HyperbolicError::DimensionMismatch(format!(
            "X is {:?}, J has order {}",
            x.shape(),
            j.n()
        )));
    }
    let residual = j_residual(x, j, j);
    let bound = tol * (1.0 + x.norm_squared());
    if residual > bound {
        return Err(HyperbolicError::NotJUnitary {
            residual,
            tol: bound,
        });
    }
    let x11 = x.view((0, 0), (np, np)).into_owned();
    let x12 = x.view((0, np), (np, nm)).into_owned();
    let x22 = x.view((np, np), (nm, nm)).into_owned();
    // X₁₁ = (I+WWᴴ)^½ V₊ and X₂₂ = (I+WᴴW)^½ V₋, so the polar factors of the
    // diagonal blocks give V±, and W = X₁₂ V₋ᴴ.
    let (_, p11_inv) = hpd_sqrt(&(&x11 * x11.adjoint()));
    let (_, p22_inv) = hpd_sqrt(&(&x22 * x22.adjoint()));
    let vp = p11_inv * &x11;
    let vm = p22_inv * &x22;
    let w = &x12 * vm.adjoint();

    let m = np.min(nm);
    let (up_thin, sigma, um_thin) = if m == 0 {
        (CMat::zeros(np, 0), Vec::new(), CMat::zeros(nm, 0))
    } else {
        let svd = w.clone().svd(true, true);
        let u = svd.u.expect("requested u");
        let vt = svd.v_t.expect("requested v_t");
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let sigma = idx.iter().map(|&i| svd.singular_values[i]).collect();
        let up = CMat::from_fn(np, m, |r, k| u[(r, idx[k])]);
        let um = CMat::from_fn(nm, m, |r, k| vt[(idx[k], r)].conj());
        (up, sigma, um)
    };
    let u_plus = complete_unitary(&up_thin);
    let u_minus = complete_unitary(&um_thin);
    // W = U₊ Σ̃ U₋ᴴ, so diag(U₊ᴴ, U₋ᴴ) H(W) diag(U₊, U₋) = H(Σ̃).
    Ok(ChShFactors {
        v_plus: u_plus.adjoint() * vp,
        v_minus: u_minus.adjoint() * vm,
        u_plus,
        u_minus,
        sigma,
    })
}

/// `W` with independent complex Gaussian entries of scale `spread` and Haar
/// `V±`, combined by [`polar_from_w`].
pub fn sample_j_unitary<R: Rng + ?Sized>(j: SignatureJ, spread: f64, rng: &mut R) -> CMat {
    let w = complex_gaussian(rng, j.n_plus, j.n_minus, spread.max(0.0));
    let vp = haar_unitary(rng, j.n_plus);
    let vm = haar_unitary(rng, j.n_minus);
    polar_from_w(&w, &vp, &vm).expect("shapes agree by construction")
}

/// An `n×n̂` matrix with `Xᴴ J X = Ĵ`: the first `n̂₊` and the first `n̂₋`
/// negative columns of a sampled J-unitary.
pub fn sample_feasible<R: Rng + ?Sized>(
    j: SignatureJ,
    jhat: SignatureJ,
    spread: f64,
    rng: &mut R,
) -> Result<CMat, HyperbolicError> {
    if jhat.n_plus > j.n_plus || jhat.n_minus > j.n_minus {
        return Err(HyperbolicError::InertiaViolation {
            n_plus: j.n_plus,
            n_minus: j.n_minus,
            hat_plus: jhat.n_plus,
            hat_minus: jhat.n_minus,
        });
    }
    let g = sample_j_unitary(j, spread, rng);
    let cols: Vec<usize> = (0..jhat.n_plus)
        .chain(j.n_plus..j.n_plus + jhat.n_minus)
        .collect();
    Ok(g.select_columns(&cols))
}

/// A random feasible point of `B̂ Xᴴ B X = I` in original coordinates:
/// `W X̃ Ŵᴴ` with `Wᴴ B W = J`, `Ŵᴴ B̂ Ŵ = Ĵ` and `X̃` from
/// [`sample_feasible`], plus a random component in `N(B)`.
pub fn sample_problem_point<R: Rng + ?Sized>(
    p: &ProblemInstance,
    spread: f64,
    rng: &mut R,
) -> Result<CMat, HyperbolicError> {
    let (w, s) = signature_frame(&p.pair.b, p.tol.rank);
    let (wh, sh) = signature_frame(&p.hat.b, p.tol.rank);
    let count = |v: &[f64]| {
        (
            v.iter().filter(|&&x| x > 0.0).count(),
            v.iter().filter(|&&x| x < 0.0).count(),
        )
    };
    let (np, nm) = count(&s);
    let (hp, hm) = count(&sh);
    let xt = sample_feasible(
        SignatureJ::new(np, nm)?,
        SignatureJ::new(hp, hm)?,
        spread,
        rng,
    )?;
    let mut x = w * xt * wh.adjoint();
    let (vals, vecs) = sym_eigen(p.pair.b.matrix());
    let top = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let null: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i].abs() <= p.tol.rank * top)
        .collect();
    if !null.is_empty() {
        let g = complex_gaussian(rng, null.len(), p.n_hat(), spread);
        x += vecs.select_columns(&null) * g;
    }
    Ok(x)
}

/// Appends columns to J-orthonormal `x_partial` until it is square. The
/// result satisfies `Xᴴ J X = diag(s)` with the input's forms leading.
pub fn complete_j_basis(
    x_partial: &CMat,
    j: SignatureJ,
    tol: f64,
) -> Result<CMat, HyperbolicError> {
    let n = j.n();
    let k = x_partial.ncols();
    if x_partial.nrows() != n || k > n {
        return Err(HyperbolicError::DimensionMismatch(format!(
            "partial basis is {:?}, J has order {n}",
            x_partial.shape()
        )));
    }
    if k == 0 {
        return Ok(CMat::identity(n, n));
    }
    let jm = j.matrix();
    let gram = x_partial.adjoint() * &jm * x_partial;
    for i in 0..k {
        let f = gram[(i, i)].re;
        if f.abs() < tol {
            return Err(HyperbolicError::DegenerateInput { column: i, form: f });
        }
    }
    let signs: Vec<f64> = (0..k).map(|i| gram[(i, i)].re.signum()).collect();
    let target = CMat::from_fn(k, k, |a, b| if a == b { c(signs[a]) } else { c(0.0) });
    let residual = (&gram - target).norm();
    if residual > tol.max(1e-8) * (1.0 + k as f64) {
        return Err(HyperbolicError::NotJOrthonormal { residual });
    }
    let pos = signs.iter().filter(|&&s| s > 0.0).count();
    if pos > j.n_plus || k - pos > j.n_minus {
        return Err(HyperbolicError::InertiaViolation {
            n_plus: j.n_plus,
            n_minus: j.n_minus,
            hat_plus: pos,
            hat_minus: k - pos,
        });
    }
    if k == n {
        return Ok(x_partial.clone());
    }
    // J-orthogonal complement, then diagonalize J restricted to it.
    let (_, v) = crate::spectral::right_singular_ascending(&(x_partial.adjoint() * &jm));
    let z = v.columns(0, n - k).into_owned();
    let (vals, vecs) = sym_eigen(&(z.adjoint() * &jm * &z));
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut out = CMat::zeros(n, n);
    out.view_mut((0, 0), (n, k)).copy_from(x_partial);
    for (col, &i) in order.iter().enumerate() {
        let scale = vals[i].abs().sqrt();
        if scale < tol {
            return Err(HyperbolicError::DegenerateInput {
                column: k + col,
                form: vals[i],
            });
        }
        let u = &z * vecs.column(i) / c(scale);
        out.column_mut(k + col).copy_from(&u);
    }
    Ok(out)
}

/// Lower and upper bounds on `trace(A₀ Xᴴ A₁ X)` for positive semidefinite
/// `A₀, A₁` of the same order from the extreme singular values of `X`.
pub fn trace_bounds(a0: &CMat, a1: &CMat, x: &CMat) -> (f64, f64) {
    let (mut l0, _) = sym_eigen(a0);
    let (l1, _) = sym_eigen(a1);
    l0.reverse();
    let sv = x.singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let lo: f64 = l0.iter().zip(&l1).map(|(a, b)| a * b).sum();
    let hi: f64 = l0.iter().zip(l1.iter().rev()).map(|(a, b)| a * b).sum();
    (lo * smin * smin, hi * smax * smax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sig(p: usize, m: usize) -> SignatureJ {
        SignatureJ::new(p, m).unwrap()
    }

    #[test]
    fn polar_2x2_is_exact() {
        let s = 0.7;
        let w = CMat::from_element(1, 1, c(s));
        let one = CMat::identity(1, 1);
        let x = polar_from_w(&w, &one, &one).unwrap();
        assert!((x[(0, 0)].re - (1.0 + s * s).sqrt()).abs() < 1e-15);
        assert_eq!(x[(0, 1)], c(s));
        assert!(j_residual(&x, sig(1, 1), sig(1, 1)) < 1e-14);
        let id = polar_from_w(&CMat::zeros(2, 1), &CMat::identity(2, 2), &one).unwrap();
        assert_eq!(id, CMat::identity(3, 3));
    }

    #[test]
    fn chsh_of_polar_recovers_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = complex_gaussian(&mut rng, 3, 2, 1.0);
        let x = polar_from_w(&w, &CMat::identity(3, 3), &CMat::identity(2, 2)).unwrap();
        let f = chsh_decompose(&x, sig(3, 2), 1e-9).unwrap();
        let mut sv: Vec<f64> = w.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in f.sigma.iter().zip(&sv) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((f.reassemble() - x).norm() < 1e-10);
    }

    #[test]
    fn chsh_of_identity_and_rejection() {
        let x = CMat::identity(3, 3);
        let f = chsh_decompose(&x, sig(1, 2), 1e-9).unwrap();
        assert_eq!(f.sigma, vec![0.0]);
        assert!((&f.u_plus * &f.v_plus - CMat::identity(1, 1)).norm() < 1e-12);
        assert!((&f.u_minus * &f.v_minus - CMat::identity(2, 2)).norm() < 1e-12);
        let err = chsh_decompose(&(x * c(2.0)), sig(1, 2), 1e-9).unwrap_err();
        assert!(matches!(err, HyperbolicError::NotJUnitary { .. }));
    }

    #[test]
    fn sampling_is_deterministic_and_feasible() {
        let j = sig(2, 3);
        let a = sample_j_unitary(j, 1.0, &mut ChaCha8Rng::seed_from_u64(42));
        let b = sample_j_unitary(j, 1.0, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        assert!(j_residual(&a, j, j) < 1e-9);
        let u = sample_j_unitary(j, 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(j_residual(&u, j, j) < 1e-12);
        assert!(u.view((0, 2), (2, 3)).norm() == 0.0);
        let x =
            sample_feasible(sig(1, 2), sig(1, 1), 1.0, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(j_residual(&x, sig(1, 2), sig(1, 1)) < 1e-9);
        let x =
            sample_feasible(sig(1, 1), sig(1, 0), 2.0, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!((x.adjoint() * sig(1, 1).matrix() * &x)[(0, 0)].re - 1.0 < 1e-12);
        assert!(matches!(
            sample_feasible(sig(1, 1), sig(2, 0), 1.0, &mut ChaCha8Rng::seed_from_u64(7)),
            Err(HyperbolicError::InertiaViolation { .. })
        ));
    }

    #[test]
    fn completion_examples() {
        let j = sig(1, 1);
        let e1 = CMat::from_column_slice(2, 1, &[c(1.0), c(0.0)]);
        let full = complete_j_basis(&e1, j, 1e-9).unwrap();
        assert!((full[(1, 1)].norm() - 1.0).abs() < 1e-12);
        assert_eq!(
            complete_j_basis(&CMat::zeros(2, 0), j, 1e-9).unwrap(),
            CMat::identity(2, 2)
        );

        let j = sig(2, 1);
        let e1 = CMat::from_column_slice(3, 1, &[c(1.0), c(0.0), c(0.0)]);
        let full = complete_j_basis(&e1, j, 1e-9).unwrap();
        let g = full.adjoint() * j.matrix() * &full;
        let d = CMat::from_fn(3, 3, |a, b| {
            if a == b {
                c([1.0, 1.0, -1.0][a])
            } else {
                c(0.0)
            }
        });
        assert!((g - d).norm() < 1e-12);

        let neutral = CMat::from_column_slice(3, 1, &[c(1.0), c(0.0), c(1.0)]);
        assert!(matches!(
            complete_j_basis(&neutral, j, 1e-9),
            Err(HyperbolicError::DegenerateInput { column: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn chsh_round_trip(seed in 0u64..1000, np in 0usize..4, nm in 0usize..4, spread in 0.0f64..3.0) {
            prop_assume!(np + nm > 0);
            let j = sig(np, nm);
            let x = sample_j_unitary(j, spread, &mut ChaCha8Rng::seed_from_u64(seed));
            let f = chsh_decompose(&x, j, 1e-9).unwrap();
            prop_assert!((f.reassemble() - &x).norm() <= 1e-8 * (1.0 + x.norm()));
            prop_assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(j_residual(&f.reassemble(), j, j) <= 1e-8 * (1.0 + x.norm_squared()));
        }

        #[test]
        fn group_property(seed in 0u64..1000, np in 1usize..4, nm in 0usize..4) {
            let j = sig(np, nm);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = sample_j_unitary(j, 1.0, &mut rng);
            let b = sample_j_unitary(j, 1.0, &mut rng);
            let p = &a * &b;
            prop_assert!(j_residual(&p, j, j) <= 1e-8 * (1.0 + p.norm_squared()));
        }

        #[test]
        fn completion_of_sampled_columns(seed in 0u64..1000, np in 1usize..4, nm in 1usize..4, kp in 0usize..4, km in 0usize..4) {
            let j = sig(np, nm);
            prop_assume!(kp.min(np) + km.min(nm) > 0);
            let jh = sig(kp.min(np), km.min(nm));
            let x = sample_feasible(j, jh, 0.8, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let full = complete_j_basis(&x, j, 1e-9).unwrap();
            let g = full.adjoint() * j.matrix() * &full;
            let diag: Vec<f64> = (0..j.n()).map(|i| g[(i, i)].re).collect();
            prop_assert_eq!(diag.iter().filter(|&&v| v > 0.0).count(), np);
            let off = &g - CMat::from_fn(j.n(), j.n(), |a, b| if a == b { g[(a, a)] } else { c(0.0) });
            prop_assert!(off.norm() < 1e-7 * (1.0 + full.norm_squared()));
            prop_assert!(diag.iter().all(|v| (v.abs() - 1.0).abs() < 1e-7 * (1.0 + full.norm_squared())));
        }
    }
}
