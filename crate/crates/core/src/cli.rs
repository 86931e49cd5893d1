//! Command-line workflows. Every randomized command takes an explicit seed and
//! writes pretty-printed JSON, so identical invocations give identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::commutator::{extend_sets, verify_constant_commutator, verify_propositions, verify_theorem1, Proposition, ResidualReport, Theorem1Report};
use crate::error::{QnkError, Result};
use crate::family::{
    build_scheme1_family, build_scheme2_family, default_scheme2_family, index_set, keyed_family, IdentificationKey,
    OperatorFamily, Scheme, SchemeParams, Variant,
};
use crate::gates::{hadamard, t_gate, weyl_clock, weyl_shift};
use crate::json::{self, MatrixJson};
use crate::linalg::{vectorize, ComplexMatrix, DensityMatrix, TOL};
use crate::protocol::{run_keyed_session, run_mim_attack, AttackConfig, AttackerKnowledge};
use crate::random::{derived_rng, random_pure_state};
use crate::security::{
    check_indistinguishability, check_key_security, check_operator_security, cipher_average_operators,
    EnsembleMember, KeyedOperators, LocalDistribution, SecurityVerdict, DEFAULT_EPSILON,
};

/// Environment variable overriding the residual tolerance.
pub const TOL_ENV: &str = "QNKLAB_TOL";

#[derive(Debug, Parser)]
#[command(name = "qnklab", version, about = "Quantum no-key protocol simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an operator family and write it as JSON.
    GenFamily {
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        /// Message dimension (scheme 1: power of two; scheme 2: multiple of 4).
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long = "nA", default_value_t = 3)]
        n_a: usize,
        #[arg(long = "nB", default_value_t = 3)]
        n_b: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one keyed three-pass session and write the transcript.
    RunSession {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        key: u64,
        /// Transform index; defaults to the first element of I(k).
        #[arg(long)]
        i: Option<u64>,
        /// `random` or a path to a JSON density matrix.
        #[arg(long, default_value = "random")]
        message: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "plain")]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a man-in-the-middle interceptor over many sessions.
    Attack {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        key: u64,
        #[arg(long)]
        i: Option<u64>,
        #[arg(long, default_value = "none")]
        knowledge: AttackerKnowledge,
        #[arg(long, default_value_t = 50)]
        sessions: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "plain")]
        variant: Variant,
        #[arg(long, default_value_t = AttackConfig::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the commutator identities on a default family and Weyl pairs.
    VerifyIdentities {
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        #[arg(long)]
        seed: u64,
        #[arg(long = "nA", default_value_t = 3)]
        n_a: usize,
        #[arg(long = "nB", default_value_t = 3)]
        n_b: usize,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Security analysis of keyed families derived from a base family.
    Analyze {
        #[arg(long)]
        family: PathBuf,
        /// Comma-separated keys, each `k` or `k:i`.
        #[arg(long, value_delimiter = ',', required = true)]
        keys: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        eps: f64,
        #[arg(long, default_value = "plain")]
        variant: Variant,
        #[arg(long)]
        report: PathBuf,
    },
    /// Print a summary table of any artifact written by the other commands.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Also write the summary as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    let v: u8 = s.parse().map_err(|_| format!("scheme must be 1 or 2, got '{s}'"))?;
    Scheme::try_from(v)
}

/// Exit status for an error: 1 for failed verification, 2 for bad input.
pub fn exit_code(err: &QnkError) -> u8 {
    match err {
        QnkError::Verification(_) | QnkError::NotConstantCommutator { .. } => 1,
        _ => 2,
    }
}

/// Residual tolerance from the environment, defaulting to `1e-10`.
pub fn tolerance_from_env() -> Result<f64> {
    match std::env::var(TOL_ENV) {
        Err(_) => Ok(TOL),
        Ok(raw) => raw
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|t| t.is_finite() && *t > 0.0)
            .ok_or_else(|| QnkError::InvalidArgument(format!("{TOL_ENV}='{raw}' is not a positive number"))),
    }
}

/// Runs a parsed command; `Ok(false)` means a verification check reported failure.
pub fn dispatch(command: &Command, tol: f64) -> Result<bool> {
    match command {
        Command::GenFamily {
            scheme,
            dim,
            n_a,
            n_b,
            seed,
            out,
        } => {
            let family = generate_family(*scheme, *dim, *n_a, *n_b, *seed)?;
            family.validate(tol)?;
            json::write_pretty(out, &family)?;
            Ok(true)
        }
        Command::RunSession {
            family,
            key,
            i,
            message,
            seed,
            variant,
            out,
        } => {
            let base = load_family(family, tol)?;
            let (key, keyed) = keyed_for(&base, *key, *i, *variant)?;
            let rho = load_message(message, base.dim, *seed)?;
            let transcript = run_keyed_session(&keyed, &key, &rho, *seed)?;
            json::write_pretty(out, &transcript)?;
            Ok(transcript.correctness_distance < tol)
        }
        Command::Attack {
            family,
            key,
            i,
            knowledge,
            sessions,
            seed,
            variant,
            threshold,
            out,
        } => {
            let base = load_family(family, tol)?;
            let params = SchemeParams::new(base.seed, *variant);
            let key = resolve_key(&params, *key, *i)?;
            let config = AttackConfig {
                sessions: *sessions,
                seed: *seed,
                threshold: *threshold,
            };
            let report = run_mim_attack(&base, &params, &key, *knowledge, &config)?;
            json::write_pretty(out, &report)?;
            Ok(true)
        }
        Command::VerifyIdentities {
            scheme,
            seed,
            n_a,
            n_b,
            dim,
            out,
        } => {
            let report = verify_identities(*scheme, *seed, *n_a, *n_b, *dim, tol)?;
            if let Some(path) = out {
                json::write_pretty(path, &report)?;
            } else {
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Ok(report.pass)
        }
        Command::Analyze {
            family,
            keys,
            eps,
            variant,
            report,
        } => {
            let base = load_family(family, tol)?;
            let analysis = analyze(&base, keys, *eps, *variant)?;
            json::write_pretty(report, &analysis)?;
            Ok(true)
        }
        Command::Report { input, out } => {
            let value: Value = json::read(input)?;
            let summary = summarize(&value)?;
            print!("{}", render_table(&summary));
            if let Some(path) = out {
                json::write_pretty(path, &summary)?;
            }
            Ok(true)
        }
    }
}

fn generate_family(scheme: Scheme, dim: Option<usize>, n_a: usize, n_b: usize, seed: u64) -> Result<OperatorFamily> {
    match scheme {
        Scheme::One => build_scheme1_family(n_a, n_b, dim.unwrap_or(4), seed),
        Scheme::Two => match dim {
            None | Some(8) => default_scheme2_family(n_a, n_b, seed),
            Some(d) => build_scheme2_family(n_a, n_b, &hadamard(), &t_gate(), d, seed),
        },
    }
}

fn load_family(path: &Path, tol: f64) -> Result<OperatorFamily> {
    let family: OperatorFamily = json::read(path)?;
    family.validate(tol)?;
    Ok(family)
}

fn resolve_key(params: &SchemeParams, k: u64, i: Option<u64>) -> Result<IdentificationKey> {
    let i = match i {
        Some(i) => i,
        None => index_set(k, params)?[0],
    };
    Ok(IdentificationKey::new(k, i, params))
}

fn keyed_for(base: &OperatorFamily, k: u64, i: Option<u64>, variant: Variant) -> Result<(IdentificationKey, OperatorFamily)> {
    let params = SchemeParams::new(base.seed, variant);
    let key = resolve_key(&params, k, i)?;
    let (schedule, keyed) = keyed_family(key.k, key.i, &params, base)?;
    Ok((schedule.key, keyed))
}

fn load_message(spec: &str, dim: usize, seed: u64) -> Result<DensityMatrix> {
    if spec == "random" {
        return Ok(random_pure_state(dim, &mut derived_rng("qnk/message", &[seed])));
    }
    let raw: MatrixJson = json::read(Path::new(spec))?;
    let rho = DensityMatrix::new(ComplexMatrix::try_from(raw)?)?;
    if rho.dim() != dim {
        return Err(QnkError::DimensionMismatch(format!(
            "message has dim {}, family acts on dim {dim}",
            rho.dim()
        )));
    }
    Ok(rho)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtensionReport {
    pub extended_a: usize,
    pub extended_b: usize,
    pub non_identity_a: usize,
    pub non_identity_b: usize,
    pub max_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylCheck {
    pub dim: usize,
    #[serde(flatten)]
    pub report: Theorem1Report,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub dim: usize,
    pub tolerance: f64,
    pub constant_commutator: ResidualReport,
    pub propositions: Vec<ResidualReport>,
    pub extension: ExtensionReport,
    pub weyl: Vec<WeylCheck>,
    pub pass: bool,
}

/// Constant commutator, the three product identities, the extended sets and
/// the phase/trace theorem on Weyl pairs at `d = 2, 3, 5`.
pub fn verify_identities(
    scheme: Scheme,
    seed: u64,
    n_a: usize,
    n_b: usize,
    dim: Option<usize>,
    tol: f64,
) -> Result<IdentityReport> {
    let family = generate_family(scheme, dim, n_a, n_b, seed)?;
    let (s_a, s_b) = (&family.s_a, &family.s_b);
    let constant = verify_constant_commutator(s_a, s_b, tol);
    let constant_commutator = ResidualReport {
        kind: "constant commutator".into(),
        indices_checked: s_a.len() * s_b.len(),
        max_residual: match &constant {
            Ok(c) => c.max_deviation,
            Err(QnkError::NotConstantCommutator { deviation }) => *deviation,
            Err(_) => f64::INFINITY,
        },
        pass: constant.is_ok(),
    };
    let propositions = if constant.is_ok() {
        [Proposition::One, Proposition::Two, Proposition::Three]
            .into_iter()
            .map(|p| verify_propositions(s_a, s_b, p, tol))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let extension = match extend_sets(s_a, s_b, tol) {
        Ok(ext) => {
            let (na, nb) = ext.non_identity_counts();
            ExtensionReport {
                extended_a: ext.a.len(),
                extended_b: ext.b.len(),
                non_identity_a: na,
                non_identity_b: nb,
                max_residual: ext.max_residual,
                pass: true,
            }
        }
        Err(QnkError::Verification(_)) => ExtensionReport {
            extended_a: 0,
            extended_b: 0,
            non_identity_a: 0,
            non_identity_b: 0,
            max_residual: f64::INFINITY,
            pass: false,
        },
        Err(e) => return Err(e),
    };
    let weyl = [2usize, 3, 5]
        .into_iter()
        .map(|d| {
            verify_theorem1(&weyl_shift(d), &weyl_clock(d)).map(|report| WeylCheck { dim: d, report })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = constant_commutator.pass
        && propositions.iter().all(|r| r.pass)
        && extension.pass
        && weyl
            .iter()
            .all(|w| w.report.outcome == crate::commutator::Theorem1Outcome::Pass);
    Ok(IdentityReport {
        scheme,
        seed,
        dim: family.dim,
        tolerance: tol,
        constant_commutator,
        propositions,
        extension,
        weyl,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub epsilon: f64,
    pub variant: Variant,
    pub key_ids: Vec<String>,
    /// Averaged wire operators applied to `|0⟩⟨0|`, then checked pairwise and against a common reference.
    pub indistinguishability: Vec<SecurityVerdict>,
    pub operator: SecurityVerdict,
    pub sufficient: SecurityVerdict,
    pub keys: SecurityVerdict,
}

fn parse_key_spec(spec: &str) -> Result<(u64, Option<u64>)> {
    let bad = || QnkError::InvalidArgument(format!("key '{spec}' is not of the form k or k:i"));
    match spec.trim().split_once(':') {
        Some((k, i)) => Ok((k.parse().map_err(|_| bad())?, Some(i.parse().map_err(|_| bad())?))),
        None => Ok((spec.trim().parse().map_err(|_| bad())?, None)),
    }
}

/// Uniform mixture over the listed keys for the averaged-operator checks, and
/// pairwise key comparisons.
pub fn analyze(base: &OperatorFamily, keys: &[String], eps: f64, variant: Variant) -> Result<AnalysisReport> {
    if keys.is_empty() {
        return Err(QnkError::InvalidArgument("no keys given".into()));
    }
    let keyed = keys
        .iter()
        .map(|s| {
            let (k, i) = parse_key_spec(s)?;
            keyed_for(base, k, i, variant)
        })
        .collect::<Result<Vec<_>>>()?;

    let weight = 1.0 / keyed.len() as f64;
    let members: Vec<EnsembleMember> = keyed.iter().map(|(_, f)| EnsembleMember::uniform(f, weight)).collect();
    let averages = cipher_average_operators(&members)?;
    let reference = vectorize(&DensityMatrix::basis(base.dim, 0));
    let ciphers = averages
        .as_array()
        .iter()
        .map(|m| crate::linalg::unvectorize(&reference.apply(m)?))
        .collect::<Result<Vec<_>>>()?;
    let ind = check_indistinguishability(&ciphers, eps)?;
    let operator = check_operator_security(&members, eps)?;

    let labelled: Vec<KeyedOperators> = keyed
        .iter()
        .map(|(key, f)| KeyedOperators {
            label: key.key_id(),
            family: f,
            local: LocalDistribution::uniform(f),
        })
        .collect();
    let key_verdict = check_key_security(&labelled, eps)?;

    Ok(AnalysisReport {
        epsilon: eps,
        variant,
        key_ids: keyed.iter().map(|(k, _)| k.key_id()).collect(),
        indistinguishability: vec![ind.def1, ind.def2],
        operator: operator.def3,
        sufficient: operator.sufficient,
        keys: key_verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub kind: String,
    pub rows: BTreeMap<String, String>,
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| QnkError::InvalidArgument(format!("artifact lacks field '{key}'")))
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), |x| {
            if x.fract() == 0.0 && x.abs() < 1e15 {
                format!("{x:.0}")
            } else {
                format!("{x:.6e}")
            }
        }),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn verdict_rows(rows: &mut BTreeMap<String, String>, prefix: &str, v: &Value) -> Result<()> {
    rows.insert(format!("{prefix}.pass"), show(field(v, "pass")?));
    if let Some(Value::Object(m)) = v.get("measured") {
        for (name, value) in m {
            rows.insert(format!("{prefix}.{name}"), show(value));
        }
    }
    Ok(())
}

/// Recognizes the artifact kind by its fields and extracts the headline values.
pub fn summarize(v: &Value) -> Result<Summary> {
    let mut rows = BTreeMap::new();
    let kind = if v.get("cipher1").is_some() {
        for k in ["scheme", "dim", "l1", "l2", "key_id", "prediction_residual", "correctness_distance"] {
            rows.insert(k.to_string(), show(field(v, k)?));
        }
        "transcript"
    } else if v.get("knowledge").is_some() {
        for k in ["knowledge", "threshold", "mean_attacker_distance", "mean_detection", "detection_rate"] {
            rows.insert(k.to_string(), show(field(v, k)?));
        }
        let n = field(v, "sessions")?.as_array().map_or(0, Vec::len);
        rows.insert("sessions".into(), n.to_string());
        "attack"
    } else if v.get("propositions").is_some() {
        for k in ["scheme", "dim", "pass"] {
            rows.insert(k.to_string(), show(field(v, k)?));
        }
        let cc = field(v, "constant_commutator")?;
        rows.insert("constant_commutator.max_residual".into(), show(field(cc, "max_residual")?));
        for p in field(v, "propositions")?.as_array().into_iter().flatten() {
            rows.insert(format!("{}.max_residual", show(field(p, "kind")?)), show(field(p, "max_residual")?));
        }
        let ext = field(v, "extension")?;
        for k in ["non_identity_a", "non_identity_b", "max_residual"] {
            rows.insert(format!("extension.{k}"), show(field(ext, k)?));
        }
        "identities"
    } else if v.get("key_ids").is_some() {
        rows.insert("epsilon".into(), show(field(v, "epsilon")?));
        for verdict in field(v, "indistinguishability")?.as_array().into_iter().flatten() {
            let name = show(field(verdict, "criterion")?).to_lowercase();
            verdict_rows(&mut rows, &name, verdict)?;
        }
        verdict_rows(&mut rows, "operator", field(v, "operator")?)?;
        verdict_rows(&mut rows, "sufficient", field(v, "sufficient")?)?;
        verdict_rows(&mut rows, "keys", field(v, "keys")?)?;
        "analysis"
    } else if v.get("S_A").is_some() {
        for k in ["scheme", "dim", "seed"] {
            rows.insert(k.to_string(), show(field(v, k)?));
        }
        for k in ["S_A", "S_B"] {
            rows.insert(format!("|{k}|"), field(v, k)?.as_array().map_or(0, Vec::len).to_string());
        }
        "family"
    } else {
        return Err(QnkError::InvalidArgument("unrecognized artifact".into()));
    };
    Ok(Summary {
        kind: kind.into(),
        rows,
    })
}

pub fn render_table(summary: &Summary) -> String {
    let width = summary.rows.keys().map(String::len).max().unwrap_or(0).max(5);
    let mut out = format!("{}\n{}\n", summary.kind, "-".repeat(width + 20));
    for (k, v) in &summary.rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_specs_parse() {
        assert_eq!(parse_key_spec("3").unwrap(), (3, None));
        assert_eq!(parse_key_spec("3:5").unwrap(), (3, Some(5)));
        assert!(parse_key_spec("x").is_err());
        assert!(parse_key_spec("1:").is_err());
    }

    #[test]
    fn exit_codes_split_verification_from_input() {
        assert_eq!(exit_code(&QnkError::Verification("x".into())), 1);
        assert_eq!(exit_code(&QnkError::InvalidArgument("x".into())), 2);
        let bad = QnkError::InvalidFamily {
            invariant: "trace-preserving".into(),
            detail: String::new(),
        };
        assert_eq!(exit_code(&bad), 2);
    }

    #[test]
    fn default_scheme2_identities_pass() {
        let r = verify_identities(Scheme::Two, 7, 3, 3, None, TOL).unwrap();
        assert!(r.pass);
        assert_eq!(r.propositions.len(), 3);
        assert!(r.propositions.iter().all(|p| p.max_residual < 1e-10));
    }

    #[test]
    fn scheme_flag_parses() {
        assert_eq!(parse_scheme("1").unwrap(), Scheme::One);
        assert!(parse_scheme("3").is_err());
        assert!(parse_scheme("two").is_err());
    }

    #[test]
    fn summaries_recognize_families() {
        let fam = build_scheme1_family(2, 2, 2, 1).unwrap();
        let s = summarize(&serde_json::to_value(&fam).unwrap()).unwrap();
        assert_eq!(s.kind, "family");
        assert_eq!(s.rows["|S_A|"], "2");
        assert!(summarize(&serde_json::json!({"x": 1})).is_err());
    }
}
