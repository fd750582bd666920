//! Trace minimization over pairs of Hermitian matrix pencils.
//!
//! Given Hermitian `A, B` of order `n` and `Â, B̂` of order `n̂ <= n`, the
//! crate decides whether `inf trace(Â Xᴴ A X)` over `B̂ Xᴴ B X = I` is finite,
//! evaluates it in closed form from the typed eigenvalues of both pencils,
//! builds a minimizer when one exists, and produces explicit feasible families
//! that certify divergence to `-∞` otherwise.

pub mod definiteness;
pub mod genpairs;
pub mod hyperbolic;
pub mod matcore;
pub mod spectral;
pub mod tracemin;
pub mod witness;

pub use matcore::{
    validate_hermitian, CMat, CVec, HermitianMatrix, Inertia, MatError, MatrixPair,
    ProblemInstance, Tolerances, C64,
};
