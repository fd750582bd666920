//! Ground-truth pencils built from the canonical block pairs of Hermitian
//! pencils under congruence, then scrambled by a random congruence.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::{
    block_diag, c, random_congruence, CMat, HermitianMatrix, Inertia, MatrixPair, C64,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid block spec: {0}")]
    InvalidSpec(String),
}

/// One canonical block pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BlockSpec {
    /// `(0, 0)`.
    To,
    /// Singular block of order `2p+1`.
    Ts { p: usize },
    /// `(ηF_p, ηK_p(0))`, an infinite eigenvalue.
    Tinf { p: usize, eta: i8 },
    /// Conjugate pair `α ± iβ`, order `2p`.
    Tc { p: usize, alpha: f64, beta: f64 },
    /// `(ηK_p(α), ηF_p)`, a real eigenvalue.
    Tr { p: usize, alpha: f64, eta: i8 },
}

impl BlockSpec {
    pub fn order(&self) -> usize {
        match *self {
            BlockSpec::To => 1,
            BlockSpec::Ts { p } => 2 * p + 1,
            BlockSpec::Tinf { p, .. } | BlockSpec::Tr { p, .. } => p,
            BlockSpec::Tc { p, .. } => 2 * p,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidSpec(m));
        let eta_ok = |eta: i8| eta == 1 || eta == -1;
        match *self {
            BlockSpec::To => Ok(()),
            BlockSpec::Ts { p: 0 } => bad("Ts needs p >= 1".into()),
            BlockSpec::Ts { .. } => Ok(()),
            BlockSpec::Tinf { p, eta } | BlockSpec::Tr { p, eta, .. } if p == 0 || !eta_ok(eta) => {
                bad(format!("{self:?}: p must be >= 1 and eta must be ±1"))
            }
            BlockSpec::Tr { alpha, .. } if !alpha.is_finite() => {
                bad(format!("{self:?}: alpha must be finite"))
            }
            BlockSpec::Tinf { .. } | BlockSpec::Tr { .. } => Ok(()),
            BlockSpec::Tc { p, alpha, beta } => {
                if p == 0 || !alpha.is_finite() || !beta.is_finite() || beta <= 0.0 {
                    bad(format!("{self:?}: needs p >= 1, finite alpha and beta > 0"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// The same block for the negated pair `(-A, -B)`, when it is a block
    /// of the same shape.
    fn negated(&self) -> Option<BlockSpec> {
        match *self {
            BlockSpec::To => Some(BlockSpec::To),
            BlockSpec::Tinf { p, eta } => Some(BlockSpec::Tinf { p, eta: -eta }),
            BlockSpec::Tr { p, alpha, eta } => Some(BlockSpec::Tr {
                p,
                alpha,
                eta: -eta,
            }),
            _ => None,
        }
    }
}

/// `K_p(τ)`: `τ` on the anti-diagonal and `1` just below it.
pub fn k_block(p: usize, tau: C64) -> CMat {
    let mut k = CMat::zeros(p, p);
    for i in 0..p {
        k[(i, p - 1 - i)] = tau;
        if i >= 1 {
            k[(i, p - i)] = c(1.0);
        }
    }
    k
}

/// `F_p`, the anti-identity.
pub fn f_block(p: usize) -> CMat {
    CMat::from_fn(p, p, |i, j| if i + j + 1 == p { c(1.0) } else { c(0.0) })
}

fn herm(m: CMat) -> HermitianMatrix {
    HermitianMatrix::from_hermitian_part(&m)
}

pub fn block(spec: &BlockSpec) -> Result<MatrixPair, GenError> {
    spec.validate()?;
    let (a, b) = match *spec {
        BlockSpec::To => (CMat::zeros(1, 1), CMat::zeros(1, 1)),
        BlockSpec::Ts { p } => {
            let n = 2 * p + 1;
            let mut b = CMat::zeros(n, n);
            b.view_mut((0, p + 1), (p, p)).copy_from(&f_block(p));
            b.view_mut((p + 1, 0), (p, p)).copy_from(&f_block(p));
            (k_block(n, c(0.0)), b)
        }
        BlockSpec::Tinf { p, eta } => {
            let e = c(eta as f64);
            (f_block(p) * e, k_block(p, c(0.0)) * e)
        }
        BlockSpec::Tr { p, alpha, eta } => {
            let e = c(eta as f64);
            (k_block(p, c(alpha)) * e, f_block(p) * e)
        }
        BlockSpec::Tc { p, alpha, beta } => {
            let mut a = CMat::zeros(2 * p, 2 * p);
            a.view_mut((0, p), (p, p))
                .copy_from(&k_block(p, C64::new(alpha, beta)));
            a.view_mut((p, 0), (p, p))
                .copy_from(&k_block(p, C64::new(alpha, -beta)));
            (a, f_block(2 * p))
        }
    };
    Ok(MatrixPair {
        a: herm(a),
        b: herm(b),
    })
}

/// The congruent form of a `Tc` block with `B = diag(F_p, -F_p)`.
pub fn tc_diag_b_form(p: usize, alpha: f64, beta: f64) -> Result<MatrixPair, GenError> {
    BlockSpec::Tc { p, alpha, beta }.validate()?;
    let k = k_block(p, c(alpha));
    let f = f_block(p);
    let ib = C64::new(0.0, beta);
    let mut a = CMat::zeros(2 * p, 2 * p);
    a.view_mut((0, 0), (p, p)).copy_from(&k);
    a.view_mut((0, p), (p, p)).copy_from(&(&f * -ib));
    a.view_mut((p, 0), (p, p)).copy_from(&(&f * ib));
    a.view_mut((p, p), (p, p)).copy_from(&(-k));
    let b = block_diag(&f, &(-f.clone()));
    Ok(MatrixPair {
        a: herm(a),
        b: herm(b),
    })
}

/// Typed eigenvalues implied by the blocks. A `Tr(2)` block contributes one
/// copy of `α` of each type; longer real Jordan chains are listed untyped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TypedSummary {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub untyped: Vec<f64>,
    /// `(α, β)` with multiplicity `p`.
    pub complex: Vec<(f64, f64)>,
    pub infinite_dims: usize,
    pub singular_dims: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub inertia_b: Inertia,
    pub typed_values: TypedSummary,
    pub psd: bool,
    pub nsd: bool,
    /// Only `To`, `Tr(1)`, `Tinf(1)` and `Tc(1)` blocks.
    pub diagonalizable: bool,
    /// Diagonalizable without complex eigenvalues.
    pub real_diagonalizable: bool,
    /// Set of `λ₀` with `A - λ₀B ⪰ 0` when `psd`.
    pub psd_interval: Option<(f64, f64)>,
    pub nsd_interval: Option<(f64, f64)>,
}

/// `[lo, hi]` of admissible shifts when every block is of a semidefinite
/// kind; `None` otherwise.
fn psd_shifts(specs: &[BlockSpec]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for s in specs {
        match *s {
            BlockSpec::To | BlockSpec::Tinf { p: 1, eta: 1 } => {}
            BlockSpec::Tr {
                p: 1,
                alpha,
                eta: 1,
            } => hi = hi.min(alpha),
            BlockSpec::Tr {
                p: 1,
                alpha,
                eta: -1,
            } => lo = lo.max(alpha),
            BlockSpec::Tr {
                p: 2,
                alpha,
                eta: 1,
            } => {
                lo = lo.max(alpha);
                hi = hi.min(alpha);
            }
            _ => return None,
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn anti_identity_inertia(p: usize) -> Inertia {
    Inertia {
        pos: p.div_ceil(2),
        neg: p / 2,
        zero: 0,
    }
}

fn signed(i: Inertia, eta: i8) -> Inertia {
    if eta < 0 {
        i.swapped()
    } else {
        i
    }
}

fn add(x: Inertia, y: Inertia) -> Inertia {
    Inertia {
        pos: x.pos + y.pos,
        neg: x.neg + y.neg,
        zero: x.zero + y.zero,
    }
}

pub fn ground_truth(specs: &[BlockSpec]) -> Result<GroundTruth, GenError> {
    if specs.is_empty() {
        return Err(GenError::InvalidSpec("empty block list".into()));
    }
    let mut inertia_b = Inertia::default();
    let mut tv = TypedSummary::default();
    let mut diagonalizable = true;
    let mut has_complex = false;
    for s in specs {
        s.validate()?;
        let (blk_inertia, diag) = match *s {
            BlockSpec::To => {
                tv.singular_dims += 1;
                (
                    Inertia {
                        pos: 0,
                        neg: 0,
                        zero: 1,
                    },
                    true,
                )
            }
            BlockSpec::Ts { p } => {
                tv.singular_dims += 2 * p + 1;
                (
                    Inertia {
                        pos: p,
                        neg: p,
                        zero: 1,
                    },
                    false,
                )
            }
            BlockSpec::Tinf { p, eta } => {
                tv.infinite_dims += p;
                let mut i = signed(anti_identity_inertia(p - 1), eta);
                i.zero += 1;
                (i, p == 1)
            }
            BlockSpec::Tc { p, alpha, beta } => {
                tv.complex.extend(std::iter::repeat_n((alpha, beta), p));
                has_complex = true;
                (anti_identity_inertia(2 * p), p == 1)
            }
            BlockSpec::Tr { p, alpha, eta } => {
                match p {
                    1 if eta > 0 => tv.pos.push(alpha),
                    1 => tv.neg.push(alpha),
                    2 => {
                        tv.pos.push(alpha);
                        tv.neg.push(alpha);
                    }
                    _ => tv.untyped.extend(std::iter::repeat_n(alpha, p)),
                }
                (signed(anti_identity_inertia(p), eta), p == 1)
            }
        };
        inertia_b = add(inertia_b, blk_inertia);
        diagonalizable &= diag;
    }
    tv.pos.sort_by(f64::total_cmp);
    tv.neg.sort_by(f64::total_cmp);
    tv.untyped.sort_by(f64::total_cmp);
    let psd_interval = psd_shifts(specs);
    let negated: Option<Vec<BlockSpec>> = specs.iter().map(BlockSpec::negated).collect();
    // A - λB ⪯ 0 iff (-A) - λ(-B) ⪰ 0, so the NSD shifts coincide.
    let nsd_interval = negated.and_then(|n| psd_shifts(&n));
    Ok(GroundTruth {
        inertia_b,
        typed_values: tv,
        psd: psd_interval.is_some(),
        nsd: nsd_interval.is_some(),
        diagonalizable,
        real_diagonalizable: diagonalizable && !has_complex,
        psd_interval,
        nsd_interval,
    })
}

/// A scrambled assembly with everything needed to check it.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub pair: MatrixPair,
    pub canonical: MatrixPair,
    /// `pair = Yᴴ canonical Y`.
    pub y: CMat,
    pub truth: GroundTruth,
}

pub fn assemble(
    specs: &[BlockSpec],
    scramble_seed: u64,
    conditioning_cap: f64,
) -> Result<Assembly, GenError> {
    let truth = ground_truth(specs)?;
    if !(1.0..f64::INFINITY).contains(&conditioning_cap) {
        return Err(GenError::InvalidSpec(format!(
            "conditioning cap {conditioning_cap} must be finite and >= 1"
        )));
    }
    let mut canonical = block(&specs[0])?;
    for s in &specs[1..] {
        canonical = canonical.direct_sum(&block(s)?);
    }
    let (pair, y) = random_congruence(&canonical, scramble_seed, conditioning_cap);
    Ok(Assembly {
        pair,
        canonical,
        y,
        truth,
    })
}

/// Block-spec JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub blocks: Vec<BlockSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_cap() -> f64 {
    10.0
}

/// Random block list of total order at most `max_order`. With probability
/// `semidefinite_bias` only blocks allowed in a semidefinite pencil are
/// drawn, around a common shift.
pub fn random_blocks<R: Rng + ?Sized>(
    rng: &mut R,
    max_order: usize,
    semidefinite_bias: f64,
) -> Vec<BlockSpec> {
    let target = rng.random_range(1..=max_order.max(1));
    let semidef = rng.random_bool(semidefinite_bias.clamp(0.0, 1.0));
    let shift: f64 = rng.random_range(-2.0..2.0);
    let mut out = Vec::new();
    let mut used = 0;
    let eta = |rng: &mut R| if rng.random_bool(0.5) { 1 } else { -1 };
    let mut jordan_used = false;
    while used < target {
        let room = target - used;
        let s = if semidef {
            match rng.random_range(0..10) {
                0 => BlockSpec::To,
                1 => BlockSpec::Tinf { p: 1, eta: 1 },
                2 if room >= 2 && !jordan_used => {
                    jordan_used = true;
                    BlockSpec::Tr {
                        p: 2,
                        alpha: shift,
                        eta: 1,
                    }
                }
                _ => {
                    let e = eta(rng);
                    let gap: f64 = rng.random_range(0.05..3.0);
                    BlockSpec::Tr {
                        p: 1,
                        alpha: shift + e as f64 * gap,
                        eta: e,
                    }
                }
            }
        } else {
            match rng.random_range(0..12) {
                0 => BlockSpec::To,
                1 if room >= 3 => BlockSpec::Ts { p: 1 },
                2 => BlockSpec::Tinf {
                    p: rng.random_range(1..=room.min(2)),
                    eta: eta(rng),
                },
                3 | 4 if room >= 2 => BlockSpec::Tc {
                    p: 1,
                    alpha: rng.random_range(-3.0..3.0),
                    beta: rng.random_range(0.2..2.0),
                },
                5 if room >= 2 => BlockSpec::Tr {
                    p: 2,
                    alpha: rng.random_range(-3.0..3.0),
                    eta: eta(rng),
                },
                _ => BlockSpec::Tr {
                    p: 1,
                    alpha: rng.random_range(-3.0..3.0),
                    eta: eta(rng),
                },
            }
        };
        used += s.order();
        out.push(s);
    }
    out
}
