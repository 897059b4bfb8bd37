//! Command-line driver: problem files in, reports out.
//!
//! A run reads one JSON problem file, executes one command, prints a text
//! summary to stdout and, with `--out`, writes the machine-readable report.
//! Exit codes: 0 success, 2 invalid input, 3 internal failure.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::algebra::OperatorAlgebra;
use crate::classical::{
    pca_factor_count, recover_cps, SampleSet, DEFAULT_EXACT_TOL, DEFAULT_PCA_TAU,
};
use crate::error::Error;
use crate::mps::{
    mps_report, recover_loci, separability_relation, Mps, MpsCatalog, SeparabilityMode,
};
use crate::numerics::{
    c, random_unitary, unitarity_defect, CMatrix, CVector, DimVector, Tolerance, C64, DEFAULT_EPS,
    DEFAULT_EPS_REL,
};
use crate::partitions::{pi_of_state, Partition};
use crate::states::{SearchConfig, SeparabilityOptions, State, StateSet};
use crate::tps::{bell_unitary, factorizations, svozil_partitions, TpsSpec};

pub const SCHEMA_VERSION: u32 = 1;
/// Candidates listed per report by the `classical` command.
pub const REPORTED_CANDIDATES: usize = 10;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "locus-forge",
    version,
    about = "Relative multipartite structure of states"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Problem file (JSON).
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Where to write the machine-readable report.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "eps-rel")]
    pub eps_rel: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Partitions,
    Recover,
    Tps,
    Classical,
    Check,
}

impl Command {
    fn as_str(self) -> &'static str {
        match self {
            Command::Partitions => "partitions",
            Command::Recover => "recover",
            Command::Tps => "tps",
            Command::Classical => "classical",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Pairwise,
    Multiway,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

/// Maps a library error found while building the object at `path`.
fn at(path: impl std::fmt::Display) -> impl Fn(Error) -> CliError {
    let path = path.to_string();
    move |e| match e {
        Error::Internal(m) => CliError::Internal(format!("field `{path}`: {m}")),
        other => CliError::Validation(format!("field `{path}`: {other}")),
    }
}

/// Maps a library error raised by a command after loading succeeded.
fn during(command: &'static str) -> impl Fn(Error) -> CliError {
    move |e| match e {
        Error::Internal(m) => CliError::Internal(format!("{command}: {m}")),
        other => CliError::Validation(format!("{command}: {other}")),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

type Cx = [f64; 2];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    pub ambient_dim: usize,
    #[serde(default)]
    pub states: Vec<StateRecord>,
    #[serde(default)]
    pub algebras: Vec<AlgebraRecord>,
    #[serde(default)]
    pub tps_specs: Vec<TpsRecord>,
    #[serde(default)]
    pub catalog: Vec<CatalogRecord>,
    #[serde(default)]
    pub samples: Vec<Vec<f64>>,
    #[serde(default)]
    pub options: OptionsRecord,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateRecord {
    /// `bell`, `ghz(k)`, `werner(λ)`, `basis(i)`, `maximally_mixed`.
    Named {
        #[serde(default)]
        name: Option<String>,
        value: String,
    },
    Pure {
        #[serde(default)]
        name: Option<String>,
        data: Vec<Cx>,
    },
    Density {
        #[serde(default)]
        name: Option<String>,
        data: Vec<Vec<Cx>>,
    },
    Classical {
        #[serde(default)]
        name: Option<String>,
        data: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraRecord {
    pub name: String,
    pub generators: Vec<Vec<Vec<Cx>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpsRecord {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub unitary: Option<UnitaryRecord>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum UnitaryRecord {
    /// `bell_unitary`, `identity` or `haar(seed)`.
    Named(String),
    Matrix(Vec<Vec<Cx>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogRecord {
    /// The structure induced by `tps_specs[index]`.
    Tps { index: usize },
    /// `{M_n}`.
    Trivial,
    /// Loci taken from named entries of `algebras`.
    Loci { loci: Vec<LocusRecord> },
    /// Every nontrivial factorization of the ambient dimension, untwisted
    /// and under `twists` seeded Haar-random frames.
    Family {
        twists: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocusRecord {
    pub label: String,
    pub algebra: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsRecord {
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_rel: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub exact_tol: Option<f64>,
    /// Enables the explicit decomposition search in `partitions`.
    #[serde(default)]
    pub search_budget: Option<usize>,
    /// Index into `tps_specs` used by `partitions` (default 0).
    #[serde(default)]
    pub tps: Option<usize>,
    /// State and catalog member compared by `check` (default 0, 0).
    #[serde(default)]
    pub state: Option<usize>,
    #[serde(default)]
    pub member: Option<usize>,
}

/// Effective settings after applying flags over file options over defaults.
#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub tol: Tolerance,
    pub tau: f64,
    pub seed: u64,
    pub mode: SeparabilityMode,
    pub exact_tol: f64,
}

/// A validated problem.
pub struct Problem {
    pub ambient_dim: usize,
    pub states: Vec<State>,
    pub algebras: Vec<(String, OperatorAlgebra)>,
    pub tps: Vec<TpsSpec>,
    pub catalog: MpsCatalog,
    pub samples: Option<SampleSet>,
    pub settings: Settings,
    pub options: OptionsRecord,
}

/// Parses the raw file, reporting the JSON path of the first bad field.
pub fn parse_problem(text: &str) -> Result<ProblemFile, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let location = if path == "." {
            String::new()
        } else {
            format!("field `{path}`: ")
        };
        invalid(format!("{location}{inner}"))
    })
}

fn settings(file: &OptionsRecord, cli: Option<&Cli>) -> Result<Settings, CliError> {
    let pick = |flag: Option<f64>, opt: Option<f64>, default: f64| flag.or(opt).unwrap_or(default);
    let eps = pick(cli.and_then(|c| c.eps), file.eps, DEFAULT_EPS);
    let eps_rel = pick(cli.and_then(|c| c.eps_rel), file.eps_rel, DEFAULT_EPS_REL);
    let tau = pick(cli.and_then(|c| c.tau), file.tau, DEFAULT_PCA_TAU);
    let exact_tol = file.exact_tol.unwrap_or(DEFAULT_EXACT_TOL);
    for (name, v) in [("eps", eps), ("eps_rel", eps_rel), ("exact_tol", exact_tol)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!(
                "field `options.{name}`: must be positive, got {v}"
            )));
        }
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid(format!(
            "field `options.tau`: must lie in (0, 1), got {tau}"
        )));
    }
    let mode = match cli.and_then(|c| c.mode) {
        Some(ModeArg::Pairwise) => SeparabilityMode::Pairwise,
        Some(ModeArg::Multiway) => SeparabilityMode::Multiway,
        None => match &file.mode {
            Some(m) => m
                .parse()
                .map_err(|e: Error| invalid(format!("field `options.mode`: {e}")))?,
            None => SeparabilityMode::default(),
        },
    };
    Ok(Settings {
        tol: Tolerance { eps, eps_rel },
        tau,
        seed: cli.and_then(|c| c.seed).or(file.seed).unwrap_or(0),
        mode,
        exact_tol,
    })
}

fn complex(z: &Cx) -> C64 {
    c(z[0], z[1])
}

fn matrix(rows: &[Vec<Cx>], path: &str) -> Result<CMatrix, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!(
            "field `{path}`: expected a non-empty square matrix"
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| complex(&rows[i][j])))
}

/// Splits `name(arg)` into `("name", Some("arg"))`.
fn call_syntax(s: &str) -> (&str, Option<&str>) {
    match (s.find('('), s.strip_suffix(')')) {
        (Some(open), Some(body)) => (s[..open].trim(), Some(body[open + 1..].trim())),
        _ => (s.trim(), None),
    }
}

fn named_state(value: &str, n: usize, path: &str) -> Result<State, CliError> {
    let (name, arg) = call_syntax(value);
    let bad = |what: &str| invalid(format!("field `{path}`: {what} in {value:?}"));
    let state = match (name, arg) {
        ("bell", None) => State::bell(),
        ("maximally_mixed", None) => State::maximally_mixed(n),
        ("ghz", Some(a)) => {
            let k: usize = a.parse().map_err(|_| bad("bad qubit count"))?;
            State::ghz(k).map_err(at(path))?
        }
        ("werner", Some(a)) => {
            let l: f64 = a.parse().map_err(|_| bad("bad mixing parameter"))?;
            State::werner(l).map_err(at(path))?
        }
        ("basis", Some(a)) => {
            let i: usize = a.parse().map_err(|_| bad("bad basis index"))?;
            State::basis(n, i).map_err(at(path))?
        }
        _ => return Err(bad("unknown state constructor")),
    };
    Ok(state)
}

fn named_unitary(value: &str, n: usize, path: &str) -> Result<CMatrix, CliError> {
    let (name, arg) = call_syntax(value);
    match (name, arg) {
        ("bell_unitary", None) => Ok(bell_unitary()),
        ("identity", None) => Ok(crate::numerics::identity(n)),
        ("haar", Some(a)) => {
            let seed: u64 = a
                .parse()
                .map_err(|_| invalid(format!("field `{path}`: bad seed in {value:?}")))?;
            Ok(random_unitary(n, &mut ChaCha8Rng::seed_from_u64(seed)))
        }
        _ => Err(invalid(format!(
            "field `{path}`: unknown unitary {value:?}"
        ))),
    }
}

/// Builds and validates every object in the file.
pub fn load(file: ProblemFile, cli: Option<&Cli>) -> Result<Problem, CliError> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(invalid(format!(
            "field `schema_version`: expected {SCHEMA_VERSION}, got {}",
            file.schema_version
        )));
    }
    let n = file.ambient_dim;
    if n == 0 {
        return Err(invalid("field `ambient_dim`: must be positive"));
    }
    let settings = settings(&file.options, cli)?;
    let tol = settings.tol;

    let mut states = Vec::with_capacity(file.states.len());
    for (i, rec) in file.states.iter().enumerate() {
        let path = format!("states[{i}]");
        let (name, state) = match rec {
            StateRecord::Named { name, value } => (
                name.clone().unwrap_or_else(|| value.clone()),
                named_state(value, n, &format!("{path}.value"))?,
            ),
            StateRecord::Pure { name, data } => {
                let v = CVector::from_iterator(data.len(), data.iter().map(complex));
                (
                    name.clone().unwrap_or_else(|| path.clone()),
                    State::pure(v).map_err(at(&path))?,
                )
            }
            StateRecord::Density { name, data } => {
                let m = matrix(data, &format!("{path}.data"))?;
                (
                    name.clone().unwrap_or_else(|| path.clone()),
                    State::from_density(m, tol).map_err(at(&path))?,
                )
            }
            StateRecord::Classical { name, data } => (
                name.clone().unwrap_or_else(|| path.clone()),
                State::classical(data).map_err(at(&path))?,
            ),
        };
        if state.dim() != n {
            return Err(invalid(format!(
                "field `{path}`: state has dimension {}, ambient_dim is {n}",
                state.dim()
            )));
        }
        states.push(state.with_name(name));
    }

    let mut algebras: Vec<(String, OperatorAlgebra)> = Vec::new();
    for (i, rec) in file.algebras.iter().enumerate() {
        let path = format!("algebras[{i}]");
        if algebras.iter().any(|(name, _)| name == &rec.name) {
            return Err(invalid(format!(
                "field `{path}.name`: duplicate name {:?}",
                rec.name
            )));
        }
        let gens = rec
            .generators
            .iter()
            .enumerate()
            .map(|(k, g)| matrix(g, &format!("{path}.generators[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let a = OperatorAlgebra::generate(&gens, n, tol).map_err(at(&path))?;
        algebras.push((rec.name.clone(), a.with_label(rec.name.clone())));
    }

    let mut tps = Vec::with_capacity(file.tps_specs.len());
    for (i, rec) in file.tps_specs.iter().enumerate() {
        let path = format!("tps_specs[{i}]");
        let dims = DimVector::new(rec.dims.clone()).map_err(at(format!("{path}.dims")))?;
        if dims.product() != n {
            return Err(invalid(format!(
                "field `{path}.dims`: product {} differs from ambient_dim {n}",
                dims.product()
            )));
        }
        let mut spec = TpsSpec::new(dims);
        if let Some(labels) = &rec.labels {
            spec = spec
                .with_labels(labels.clone())
                .map_err(at(format!("{path}.labels")))?;
        }
        if let Some(u) = &rec.unitary {
            let upath = format!("{path}.unitary");
            let u = match u {
                UnitaryRecord::Named(s) => named_unitary(s, n, &upath)?,
                UnitaryRecord::Matrix(rows) => matrix(rows, &upath)?,
            };
            if u.nrows() != n {
                return Err(invalid(format!("field `{upath}`: unitary is not {n}x{n}")));
            }
            spec = spec.with_unitary(u).map_err(at(&upath))?;
        }
        tps.push(spec);
    }

    let mut catalog = MpsCatalog::new(n);
    for (i, rec) in file.catalog.iter().enumerate() {
        let path = format!("catalog[{i}]");
        let members: Vec<Mps> = match rec {
            CatalogRecord::Tps { index } => {
                let spec = tps.get(*index).ok_or_else(|| {
                    invalid(format!("field `{path}.index`: no tps_specs[{index}]"))
                })?;
                vec![spec
                    .to_mps()
                    .with_provenance(format!("tps_specs[{index}] {}", spec.dims()))]
            }
            CatalogRecord::Trivial => vec![Mps::trivial(n)],
            CatalogRecord::Loci { loci } => {
                let mut picked = Vec::with_capacity(loci.len());
                for (k, l) in loci.iter().enumerate() {
                    let a = algebras
                        .iter()
                        .find(|(name, _)| name == &l.algebra)
                        .ok_or_else(|| {
                            invalid(format!(
                                "field `{path}.loci[{k}].algebra`: unknown algebra {:?}",
                                l.algebra
                            ))
                        })?;
                    picked.push((l.label.clone(), a.1.clone()));
                }
                let labels: Vec<&str> = loci.iter().map(|l| l.label.as_str()).collect();
                vec![Mps::new(n, picked, tol)
                    .map_err(at(&path))?
                    .with_provenance(format!("loci({})", labels.join(",")))]
            }
            CatalogRecord::Family { twists, seed } => {
                family(n, *twists, seed.unwrap_or(settings.seed)).map_err(at(&path))?
            }
        };
        for m in members {
            catalog.push(m, tol).map_err(at(&path))?;
        }
    }

    let samples = if file.samples.is_empty() {
        None
    } else {
        Some(SampleSet::new("samples", file.samples.clone()).map_err(at("samples"))?)
    };

    Ok(Problem {
        ambient_dim: n,
        states,
        algebras,
        tps,
        catalog,
        samples,
        settings,
        options: file.options,
    })
}

fn family(n: usize, twists: usize, seed: u64) -> crate::Result<Vec<Mps>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for dims in factorizations(n)? {
        if dims.len() < 2 {
            continue;
        }
        let base = TpsSpec::new(dims.clone());
        out.push(base.to_mps().with_provenance(format!("family {dims}")));
        for t in 0..twists {
            let u = random_unitary(n, &mut rng);
            out.push(
                base.twist(&u)?
                    .to_mps()
                    .with_provenance(format!("family {dims} twist {}", t + 1)),
            );
        }
    }
    Ok(out)
}

/// The finished machine-readable report.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub version: String,
    pub command: String,
    pub input_digest: String,
    pub results: Value,
    pub diagnostics: Vec<String>,
}

/// Text for stdout plus the JSON body.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub text: String,
    pub report: Report,
}

impl Outcome {
    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs `command` on the raw contents of a problem file.
pub fn run_on_text(command: Command, text: &str, cli: Option<&Cli>) -> Result<Outcome, CliError> {
    let file = parse_problem(text)?;
    let problem = load(file, cli)?;
    let mut diagnostics = Vec::new();
    let mut out = String::new();
    let results = match command {
        Command::Partitions => cmd_partitions(&problem, &mut out, &mut diagnostics)?,
        Command::Recover => cmd_recover(&problem, &mut out, &mut diagnostics)?,
        Command::Tps => cmd_tps(&problem, &mut out, &mut diagnostics)?,
        Command::Classical => cmd_classical(&problem, &mut out, &mut diagnostics)?,
        Command::Check => cmd_check(&problem, &mut out, &mut diagnostics)?,
    };
    for d in &diagnostics {
        let _ = writeln!(out, "warning: {d}");
    }
    Ok(Outcome {
        text: out,
        report: Report {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.as_str().to_string(),
            input_digest: digest(text.as_bytes()),
            results,
            diagnostics,
        },
    })
}

fn partition_strings<'a>(ps: impl IntoIterator<Item = &'a Partition>) -> Vec<String> {
    ps.into_iter().map(|p| p.to_string()).collect()
}

fn cmd_partitions(
    p: &Problem,
    out: &mut String,
    diag: &mut Vec<String>,
) -> Result<Value, CliError> {
    if p.states.is_empty() {
        return Err(invalid(
            "field `states`: partitions needs at least one state",
        ));
    }
    let index = p.options.tps.unwrap_or(0);
    let spec = p.tps.get(index).ok_or_else(|| {
        invalid(format!(
            "field `options.tps`: no tps_specs[{index}] (partitions needs a structure)"
        ))
    })?;
    let options = SeparabilityOptions {
        search: p.options.search_budget.map(|budget| SearchConfig {
            budget,
            seed: p.settings.seed,
        }),
    };
    let mut rows = Vec::new();
    let _ = writeln!(
        out,
        "structure: dims {} labels {}",
        spec.dims(),
        spec.labels().join(",")
    );
    for (i, rho) in p.states.iter().enumerate() {
        let pi =
            pi_of_state(rho, spec, &options, p.settings.tol).map_err(at(format!("states[{i}]")))?;
        let name = rho.name().unwrap_or("?").to_string();
        let maximal = partition_strings(pi.maximal().members());
        let separable = partition_strings(pi.separable.members());
        let undetermined = partition_strings(&pi.undetermined);
        for u in &undetermined {
            diag.push(format!("state {name}: partition {u} undetermined"));
        }
        let _ = writeln!(out, "state {name}: maximal {{{}}}", maximal.join(", "));
        let _ = writeln!(out, "  separable {{{}}}", separable.join(", "));
        if !undetermined.is_empty() {
            let _ = writeln!(out, "  undetermined {{{}}}", undetermined.join(", "));
        }
        rows.push(json!({
            "state": name,
            "separable": separable,
            "maximal": maximal,
            "undetermined": undetermined,
        }));
    }
    Ok(json!({
        "tps": { "index": index, "dims": spec.dims(), "labels": spec.labels(), "untwisted": spec.is_untwisted() },
        "states": rows,
    }))
}

fn cmd_recover(p: &Problem, out: &mut String, diag: &mut Vec<String>) -> Result<Value, CliError> {
    if p.states.is_empty() {
        return Err(invalid("field `states`: recover needs at least one state"));
    }
    if p.catalog.is_empty() {
        return Err(invalid(
            "field `catalog`: recover needs a non-empty catalog",
        ));
    }
    let set = StateSet::new("available", p.states.clone()).map_err(at("states"))?;
    let rec = recover_loci(&set, &p.catalog, p.settings.mode, p.settings.tol)
        .map_err(during("recover"))?;
    diag.extend(rec.diagnostics.iter().cloned());
    let report = mps_report(&rec.mps, p.settings.tol);
    let _ = writeln!(out, "catalog members used: {:?}", rec.members);
    if rec.fallback {
        let _ = writeln!(out, "fallback: scalar locus");
    }
    for l in &report.loci {
        let qubits = match (&l.qubits, &l.not_reconstructible) {
            (Some(q), _) => format!("qubits {q:?}"),
            (None, Some(r)) => format!("not reconstructible ({r})"),
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "locus {}: dim {} center {}{} {qubits}",
            l.label,
            l.dim,
            l.center_dim,
            if l.degenerate { " degenerate" } else { "" }
        );
    }
    let contributions: Vec<Value> = rec
        .contributions
        .iter()
        .map(|&(s, k)| {
            json!({
                "state": p.states[s].name(),
                "member": k,
                "member_provenance": p.catalog.members()[k].provenance(),
            })
        })
        .collect();
    Ok(json!({
        "mode": p.settings.mode,
        "members": rec.members,
        "contributions": contributions,
        "fallback": rec.fallback,
        "mps": report,
    }))
}

fn cmd_tps(p: &Problem, out: &mut String, _diag: &mut [String]) -> Result<Value, CliError> {
    let n = p.ambient_dim;
    let mut facts = Vec::new();
    if n >= 2 {
        for dims in factorizations(n).map_err(at("ambient_dim"))? {
            let set = svozil_partitions(&dims).map_err(at("ambient_dim"))?;
            let blocks: Vec<Vec<Vec<usize>>> =
                set.partitions.iter().map(|q| q.blocks().to_vec()).collect();
            let _ = writeln!(
                out,
                "factorization {dims}: {} basis partitions, independent {}",
                blocks.len(),
                set.is_independent()
            );
            for q in &set.partitions {
                let _ = writeln!(out, "  {}", format_blocks(q.blocks()));
            }
            facts.push(json!({
                "dims": dims,
                "basis_partitions": blocks,
                "independent": set.is_independent(),
            }));
        }
    }
    let mut structures = Vec::new();
    for (i, spec) in p.tps.iter().enumerate() {
        let report = mps_report(&spec.to_mps(), p.settings.tol);
        let _ = writeln!(
            out,
            "tps_specs[{i}]: dims {} {}",
            spec.dims(),
            if spec.is_untwisted() {
                "untwisted"
            } else {
                "twisted"
            }
        );
        structures.push(json!({
            "index": i,
            "dims": spec.dims(),
            "labels": spec.labels(),
            "untwisted": spec.is_untwisted(),
            "unitarity_defect": unitarity_defect(spec.unitary()),
            "mps": report,
        }));
    }
    Ok(json!({ "ambient_dim": n, "factorizations": facts, "structures": structures }))
}

fn format_blocks(blocks: &[Vec<usize>]) -> String {
    blocks
        .iter()
        .map(|b| {
            b.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

fn cmd_classical(p: &Problem, out: &mut String, diag: &mut Vec<String>) -> Result<Value, CliError> {
    let samples = p
        .samples
        .as_ref()
        .ok_or_else(|| invalid("field `samples`: classical needs at least one sample"))?;
    if samples.space_size() != p.ambient_dim {
        return Err(invalid(format!(
            "field `samples`: length {} differs from ambient_dim {}",
            samples.space_size(),
            p.ambient_dim
        )));
    }
    let pca = if samples.len() >= 2 {
        let r = pca_factor_count(samples, p.settings.tau).map_err(at("samples"))?;
        let _ = writeln!(
            out,
            "pca: {} principal directions above tau {}",
            r.count, p.settings.tau
        );
        Some(r)
    } else {
        diag.push("PCA skipped: fewer than 2 samples".into());
        None
    };
    let rec = recover_cps(samples, p.settings.exact_tol, p.settings.seed).map_err(at("samples"))?;
    if let Some(reason) = &rec.reason {
        let _ = writeln!(out, "no product structure candidates: {reason}");
    }
    let top: Vec<_> = rec.candidates.iter().take(REPORTED_CANDIDATES).collect();
    for (k, cand) in top.iter().enumerate() {
        let _ = writeln!(
            out,
            "#{}: dims {} violation {:.3e}{}",
            k + 1,
            cand.dims,
            cand.violation,
            if cand.exact { " exact" } else { "" }
        );
    }
    if !rec.candidates.is_empty() && !rec.candidates[0].exact {
        diag.push(format!(
            "no exact product structure; smallest violation {:.3e}",
            rec.candidates[0].violation
        ));
    }
    Ok(json!({
        "space_size": samples.space_size(),
        "sample_count": samples.len(),
        "pca": pca,
        "cps": {
            "search": rec.search,
            "reason": rec.reason,
            "total": rec.candidates.len(),
            "top": top,
        },
    }))
}

fn matrix_json(m: &CMatrix) -> Value {
    let rows: Vec<Vec<Cx>> = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect();
    json!(rows)
}

fn cmd_check(p: &Problem, out: &mut String, _diag: &mut [String]) -> Result<Value, CliError> {
    let si = p.options.state.unwrap_or(0);
    let mi = p.options.member.unwrap_or(0);
    let rho = p
        .states
        .get(si)
        .ok_or_else(|| invalid(format!("field `options.state`: no states[{si}]")))?;
    let member = p
        .catalog
        .members()
        .get(mi)
        .ok_or_else(|| invalid(format!("field `options.member`: no catalog member {mi}")))?;
    let r = separability_relation(rho, member, p.settings.mode, p.settings.tol)
        .map_err(during("check"))?;
    let name = rho.name().unwrap_or("?");
    let _ = writeln!(
        out,
        "state {name} vs {}: {} (max defect {:.3e})",
        member.provenance().unwrap_or("member"),
        if r.holds { "holds" } else { "violated" },
        r.max_defect
    );
    let witness = r.witness.as_ref().map(|w| {
        let _ = writeln!(
            out,
            "witness loci {} indices {:?}",
            w.loci.join(" / "),
            w.indices
        );
        for (l, e) in w.loci.iter().zip(&w.elements) {
            let _ = writeln!(out, "  {l}:");
            for i in 0..e.nrows() {
                let row: Vec<String> = (0..e.ncols())
                    .map(|j| format!("{:+.6}{:+.6}i", e[(i, j)].re, e[(i, j)].im))
                    .collect();
                let _ = writeln!(out, "    [{}]", row.join(" "));
            }
        }
        let _ = writeln!(
            out,
            "  rho(product) = {:.9} {:+.9}i, product of expectations = {:.9} {:+.9}i, gap {:.9}",
            w.lhs.re, w.lhs.im, w.rhs.re, w.rhs.im, w.gap
        );
        json!({
            "loci": w.loci,
            "indices": w.indices,
            "elements": w.elements.iter().map(matrix_json).collect::<Vec<_>>(),
            "lhs": [w.lhs.re, w.lhs.im],
            "rhs": [w.rhs.re, w.rhs.im],
            "gap": w.gap,
        })
    });
    Ok(json!({
        "state": name,
        "member": mi,
        "member_provenance": member.provenance(),
        "mode": p.settings.mode,
        "holds": r.holds,
        "max_defect": r.max_defect,
        "witness": witness,
    }))
}

/// Full run for the binary: returns the process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    let text = match std::fs::read_to_string(&cli.input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("invalid input: cannot read {}: {e}", cli.input.display());
            return 2;
        }
    };
    let result = std::panic::catch_unwind(|| run_on_text(cli.command, &text, Some(cli)))
        .unwrap_or_else(|_| Err(CliError::Internal("unexpected panic".into())));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.text);
            if let Some(path) = &cli.out {
                if let Err(e) = std::fs::write(path, outcome.json()) {
                    eprintln!("internal error: cannot write {}: {e}", path.display());
                    return 3;
                }
            }
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
