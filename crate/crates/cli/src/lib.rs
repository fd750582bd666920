//! Library side of `pencil-tracemin`: file formats, reports and the six
//! subcommands. Every command returns an [`Outcome`] holding a JSON report
//! and a short human-readable summary; `main` only parses flags and prints.

pub mod format;
pub mod io;

use std::path::{Path, PathBuf};

use pencil_core::definiteness::{definiteness_interval, DefinitenessOptions};
use pencil_core::genpairs::{assemble, GenError, GenSpec};
use pencil_core::hyperbolic::{sample_problem_point, HyperbolicError};
use pencil_core::matcore::inertia;
use pencil_core::spectral::{typed_spectrum, SpectralError, TypedEigenvalue};
use pencil_core::tracemin::{infimum, minimizer, InfimumResult, TraceminError, Verdict};
use pencil_core::witness::{certify_any, witness_candidates, WitnessError, WitnessFamily};
use pencil_core::{MatError, ProblemInstance, Tolerances};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::format::to_json_string;
use crate::io::{read_json, read_pair, read_problem, write_json, MatrixJson, PairJson};

pub const TOOL: &str = "pencil-tracemin";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const NOT_HERMITIAN: i32 = 3;
    pub const NEG_INFINITE: i32 = 4;
    pub const EMPTY_FEASIBLE_SET: i32 = 5;
    pub const NOT_ATTAINABLE: i32 = 6;
    pub const NO_WITNESS: i32 = 7;
    pub const CERTIFICATION_FAILED: i32 = 8;
    /// A sampled feasible point fell below a finite infimum.
    pub const VERIFY_VIOLATION: i32 = 9;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0}")]
    NotHermitian(String),
    #[error("the feasible set is empty: {0}")]
    EmptyFeasibleSet(String),
    #[error("not attainable: {0}")]
    NotAttainable(String),
    #[error("no witness: {0}")]
    NoWitness(String),
    #[error("certification failed: {0}")]
    CertificationFailed(String),
    #[error("verification failed: {0}")]
    VerifyViolation(String),
    #[error("internal failure: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Invalid(_) => exit::INVALID_INPUT,
            CliError::NotHermitian(_) => exit::NOT_HERMITIAN,
            CliError::EmptyFeasibleSet(_) => exit::EMPTY_FEASIBLE_SET,
            CliError::NotAttainable(_) => exit::NOT_ATTAINABLE,
            CliError::NoWitness(_) => exit::NO_WITNESS,
            CliError::CertificationFailed(_) => exit::CERTIFICATION_FAILED,
            CliError::VerifyViolation(_) => exit::VERIFY_VIOLATION,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "Io",
            CliError::Invalid(_) => "InvalidInput",
            CliError::NotHermitian(_) => "NotHermitian",
            CliError::EmptyFeasibleSet(_) => "EmptyFeasibleSet",
            CliError::NotAttainable(_) => "NotAttainable",
            CliError::NoWitness(_) => "NoWitnessConstructible",
            CliError::CertificationFailed(_) => "CertificationFailed",
            CliError::VerifyViolation(_) => "VerifyViolation",
            CliError::Internal(_) => "Internal",
        }
    }

    pub(crate) fn matrix(what: &str, e: MatError) -> Self {
        match e {
            MatError::NotHermitian { .. } => CliError::NotHermitian(format!("{what}: {e}")),
            _ => CliError::Invalid(format!("{what}: {e}")),
        }
    }
}

impl From<TraceminError> for CliError {
    fn from(e: TraceminError) -> Self {
        match e {
            TraceminError::InertiaViolation { .. } | TraceminError::EmptyFeasibleSet(_) => {
                CliError::EmptyFeasibleSet(e.to_string())
            }
            TraceminError::NotAttainable(_) => CliError::NotAttainable(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<WitnessError> for CliError {
    fn from(e: WitnessError) -> Self {
        match e {
            WitnessError::NotDivergent(_) | WitnessError::NoWitnessConstructible { .. } => {
                CliError::NoWitness(e.to_string())
            }
            WitnessError::CertificationFailed(_) => CliError::CertificationFailed(e.to_string()),
            WitnessError::InvalidThreshold(_) => CliError::Invalid(e.to_string()),
            WitnessError::Spectral(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<HyperbolicError> for CliError {
    fn from(e: HyperbolicError) -> Self {
        match e {
            HyperbolicError::InertiaViolation { .. } => CliError::EmptyFeasibleSet(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Settings {
    pub tol: Tolerances,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
}

/// The single JSON document every command emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<String>,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub exit_code: i32,
    pub result: Option<Value>,
    pub error: Option<ErrorReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        to_json_string(self).expect("reports serialize")
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub text: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

/// What a command produced before it is wrapped into a report.
struct Done {
    result: Value,
    code: i32,
    text: Vec<String>,
    error: Option<CliError>,
}

impl Done {
    fn ok(result: Value, text: Vec<String>) -> Self {
        Done {
            result,
            code: exit::OK,
            text,
            error: None,
        }
    }
}

fn run(
    command: &str,
    inputs: &[&Path],
    s: &Settings,
    body: impl FnOnce() -> Result<Done, CliError>,
) -> Outcome {
    let (result, code, mut text, error) = match body() {
        Ok(d) => {
            let code = d.error.as_ref().map_or(d.code, CliError::exit_code);
            (Some(d.result), code, d.text, d.error)
        }
        Err(e) => (None, e.exit_code(), Vec::new(), Some(e)),
    };
    if let Some(e) = &error {
        text.push(format!("error: {e}"));
    }
    Outcome {
        report: Report {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            seed: s.seed,
            tolerances: s.tol,
            exit_code: code,
            result,
            error: error.map(|e| ErrorReport {
                kind: e.kind().into(),
                message: e.to_string(),
            }),
        },
        text,
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("core types serialize")
}

fn definiteness_options(tol: &Tolerances) -> DefinitenessOptions {
    DefinitenessOptions {
        psd_tol: tol.psd,
        rank_tol: tol.rank,
        ..DefinitenessOptions::default()
    }
}

fn list(values: &[TypedEigenvalue]) -> String {
    let parts: Vec<String> = values
        .iter()
        .map(|e| {
            if e.jordan_pair {
                format!("{} (J)", e.value)
            } else {
                e.value.to_string()
            }
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

fn interval_text(iv: Option<pencil_core::definiteness::Interval>) -> String {
    match iv {
        Some(iv) => format!("[{}, {}]", iv.lo, iv.hi),
        None => "empty".into(),
    }
}

pub fn cmd_analyze(pair_file: &Path, s: &Settings) -> Outcome {
    run("analyze", &[pair_file], s, || {
        let pair = read_pair(pair_file, &s.tol)?;
        let ia = inertia(&pair.a, s.tol.rank);
        let ib = inertia(&pair.b, s.tol.rank);
        let def = definiteness_interval(&pair, &definiteness_options(&s.tol));
        let spec = typed_spectrum(&pair, &s.tol)?;
        let text = vec![
            format!("order {}", pair.dim()),
            format!("inertia A (+{}, 0:{}, -{})", ia.pos, ia.zero, ia.neg),
            format!("inertia B (+{}, 0:{}, -{})", ib.pos, ib.zero, ib.neg),
            format!(
                "psd pair {} interval {}",
                def.is_psd_pair,
                interval_text(def.psd_interval)
            ),
            format!(
                "nsd pair {} interval {}",
                def.is_nsd_pair,
                interval_text(def.nsd_interval)
            ),
            format!("positive type {}", list(&spec.pos)),
            format!("negative type {}", list(&spec.neg)),
            format!(
                "complex {} untyped {} infinite {} ({:?}) deflated {}",
                spec.complex.len(),
                spec.untyped.len(),
                spec.infinite_dims,
                spec.infinite_definite_sign,
                spec.deflated_dims
            ),
        ];
        Ok(Done::ok(
            json!({
                "n": pair.dim(),
                "inertia_a": ia,
                "inertia_b": ib,
                "definiteness": def,
                "spectrum": spec,
            }),
            text,
        ))
    })
}

fn infimum_text(r: &InfimumResult) -> Vec<String> {
    let mut text = vec![format!("verdict {:?}", r.verdict)];
    match r.verdict {
        Verdict::NegInfinite => text.push(format!(
            "value -inf, reason {:?}",
            r.reason.expect("set for -inf")
        )),
        _ => text.push(format!("value {}", r.value)),
    }
    if let Some(k) = r.excluded {
        text.push(format!("excluded case {k:?}"));
    }
    if let Some(c) = r.sign_case {
        text.push(format!("sign case {c:?}, attainable {:?}", r.attainable));
    }
    for t in &r.terms {
        text.push(format!(
            "  {:+} x {:+} = {:+}  ({})",
            t.hat,
            t.value,
            t.product,
            if t.sign > 0 { "+" } else { "-" }
        ));
    }
    text
}

pub fn cmd_infimum(problem_file: &Path, s: &Settings) -> Outcome {
    run("infimum", &[problem_file], s, || {
        let p = read_problem(problem_file, &s.tol)?;
        let r = infimum(&p)?;
        let code = if r.verdict == Verdict::NegInfinite {
            exit::NEG_INFINITE
        } else {
            exit::OK
        };
        Ok(Done {
            result: to_value(&r),
            code,
            text: infimum_text(&r),
            error: None,
        })
    })
}

pub fn cmd_minimize(problem_file: &Path, out_file: &Path, s: &Settings) -> Outcome {
    run("minimize", &[problem_file, out_file], s, || {
        let p = read_problem(problem_file, &s.tol)?;
        let m = minimizer(&p)?;
        write_json(out_file, &MatrixJson::from_matrix(&m.x))?;
        Ok(Done::ok(
            json!({
                "value": m.value,
                "achieved": m.achieved,
                "feasibility_residual": m.residual,
                "rows": m.x.nrows(),
                "cols": m.x.ncols(),
                "output": out_file.display().to_string(),
            }),
            vec![
                format!("value {}", m.value),
                format!("achieved {}", m.achieved),
                format!("feasibility residual {:e}", m.residual),
                format!("wrote {}", out_file.display()),
            ],
        ))
    })
}

fn family_value(f: &WitnessFamily) -> Value {
    json!({
        "kind": f.kind,
        "growth": f.growth,
        "parametrization": f.parametrization,
        "slope": f.slope,
        "offset": f.offset,
        "selectors": f.selectors,
    })
}

pub fn cmd_witness(problem_file: &Path, threshold: f64, t_max: f64, s: &Settings) -> Outcome {
    run("witness", &[problem_file], s, || {
        let p = read_problem(problem_file, &s.tol)?;
        let r = infimum(&p)?;
        let fams = witness_candidates(&p, &r)?;
        let head = json!({
            "verdict": r.verdict,
            "reason": r.reason,
            "threshold": threshold,
            "t_max": t_max,
            "candidates": fams.len(),
        });
        let mut result = head;
        match certify_any(&fams, threshold, t_max) {
            Ok((i, cert)) => {
                let f = &fams[i];
                result["candidate_index"] = json!(i);
                result["family"] = family_value(f);
                result["certification"] = to_value(&cert);
                Ok(Done::ok(
                    result,
                    vec![
                        format!("reason {:?}", r.reason.expect("set for -inf")),
                        format!(
                            "family {:?}, trace ~ {} t^2 + {}",
                            f.kind, f.slope, f.offset
                        ),
                        format!(
                            "certified t = {} trace = {} residual = {:e}",
                            cert.t, cert.trace, cert.residual
                        ),
                    ],
                ))
            }
            Err(e) => {
                result["family"] = family_value(&fams[0]);
                Ok(Done {
                    result,
                    code: exit::CERTIFICATION_FAILED,
                    text: vec![format!(
                        "family {:?}, slope {}",
                        fams[0].kind, fams[0].slope
                    )],
                    error: Some(e.into()),
                })
            }
        }
    })
}

/// Sampling options for [`cmd_verify`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub spread: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 1000,
            spread: 1.0,
        }
    }
}

/// Per-sample generator: stream `index` of the ChaCha8 sequence for `seed`,
/// so any sample can be reproduced on its own.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn cmd_verify(problem_file: &Path, opts: VerifyOptions, s: &Settings) -> Outcome {
    run("verify", &[problem_file], s, || {
        if !(opts.spread.is_finite() && opts.spread >= 0.0) {
            return Err(CliError::Invalid(format!(
                "spread {} must be finite and >= 0",
                opts.spread
            )));
        }
        let p = read_problem(problem_file, &s.tol)?;
        let r = infimum(&p)?;
        let (min, argmin, mean, max, worst_residual) = sample_objective(&p, opts, s.seed)?;
        let mut result = json!({
            "verdict": r.verdict,
            "value": r.value,
            "samples": opts.samples,
            "spread": opts.spread,
            "min": min,
            "argmin": argmin,
            "mean": mean,
            "max": max,
            "max_feasibility_residual": worst_residual,
        });
        let mut text = vec![
            format!("verdict {:?}", r.verdict),
            format!(
                "{} samples at spread {}: min {min} mean {mean} max {max}",
                opts.samples, opts.spread
            ),
        ];
        let mut error = None;
        if r.verdict == Verdict::NegInfinite {
            text.push(format!("most negative sample {min} (index {argmin:?})"));
        } else if opts.samples > 0 {
            let allowance = 1e-6 * (1.0 + r.value.abs());
            let gap = min - r.value;
            result["gap"] = json!(gap);
            result["allowance"] = json!(allowance);
            result["violated"] = json!(gap < -allowance);
            text.push(format!("value {} gap {gap:e}", r.value));
            if gap < -allowance {
                error = Some(CliError::VerifyViolation(format!(
                    "sample {argmin:?} reaches {min}, below the value {} by {:e}",
                    r.value, -gap
                )));
            }
        }
        Ok(Done {
            result,
            code: exit::OK,
            text,
            error,
        })
    })
}

fn sample_objective(
    p: &ProblemInstance,
    opts: VerifyOptions,
    seed: u64,
) -> Result<(f64, Option<usize>, f64, f64, f64), CliError> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut argmin = None;
    let mut sum = 0.0;
    let mut worst = 0.0_f64;
    for i in 0..opts.samples {
        let mut rng = sample_rng(seed, i as u64);
        let x = sample_problem_point(p, opts.spread, &mut rng)?;
        let v = p.objective(&x);
        worst = worst.max(p.feasibility_residual(&x));
        sum += v;
        max = max.max(v);
        if v < min {
            min = v;
            argmin = Some(i);
        }
    }
    let mean = if opts.samples > 0 {
        sum / opts.samples as f64
    } else {
        f64::NAN
    };
    Ok((min, argmin, mean, max, worst))
}

/// `pair.json` gets its ground truth in `pair.truth.json`.
pub fn truth_path(pair_file: &Path) -> PathBuf {
    pair_file.with_extension("truth.json")
}

pub fn cmd_gen(spec_file: &Path, out_pair_file: &Path, s: &Settings) -> Outcome {
    run("gen", &[spec_file, out_pair_file], s, || {
        let spec: GenSpec = read_json(spec_file)?;
        let asm = assemble(&spec.blocks, spec.seed, spec.cap)?;
        let truth_file = truth_path(out_pair_file);
        write_json(out_pair_file, &PairJson::from_pair(&asm.pair))?;
        let sidecar = json!({
            "blocks": spec.blocks,
            "seed": spec.seed,
            "cap": spec.cap,
            "truth": asm.truth,
        });
        write_json(&truth_file, &sidecar)?;
        let t = &asm.truth;
        Ok(Done::ok(
            json!({
                "n": asm.pair.dim(),
                "pair_file": out_pair_file.display().to_string(),
                "truth_file": truth_file.display().to_string(),
                "truth": t,
            }),
            vec![
                format!("order {} from {} blocks", asm.pair.dim(), spec.blocks.len()),
                format!(
                    "psd {} nsd {} diagonalizable {} real diagonalizable {}",
                    t.psd, t.nsd, t.diagonalizable, t.real_diagonalizable
                ),
                format!(
                    "wrote {} and {}",
                    out_pair_file.display(),
                    truth_file.display()
                ),
            ],
        ))
    })
}
