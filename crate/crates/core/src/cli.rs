//! Command-line front end. Every subcommand reads a representation,
//! suspension or catalog entry, runs one pipeline and writes a JSON envelope
//! (or TSV where a table makes sense) carrying the version, seed and full
//! configuration.
//!
//! Exit codes: 0 on success, 1 when a check fails and a witness is reported,
//! 2 on usage or input errors.

use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::catalog::{self, by_name, CatalogEntry};
use crate::error::{ForgeError, Result};
use crate::flagdyn::{coverage_schedule, default_base_flag, limit_set_sample};
use crate::freegroup::{finite_index_generators, parse_word, GeneratorSet, Word};
use crate::perturb::{
    compensated_path, incidence_commutator, omega_word, planted_incidence_instance, rho_k_destabilize, solve_incidence,
    unipotent_commutator, BISECTION_STEPS, THETA_TOL,
};
use crate::pingpong::{check_fabricaqi, find_power_with, qi_bound_check, Parity, DEFAULT_NET_RESOLUTION};
use crate::represent::{
    anosov_gap_profile, float_profile, qi_profile, sampled_profile, unipotent_scan, FloatRepresentation, GrowthQuantity,
    Representation,
};
use crate::suspension::{
    balance_scaling, dfb_evidence, find_balanced_word, lahn_ratio, tau_iteration, LahnVerdict, Suspension,
};

pub const TOOL: &str = "anosov-forge";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParityArg {
    Odd,
    Any,
}

impl From<ParityArg> for Parity {
    fn from(p: ParityArg) -> Parity {
        match p {
            ParityArg::Odd => Parity::Odd,
            ParityArg::Any => Parity::Any,
        }
    }
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Input JSON file, `-` for stdin, or `catalog:<name>`.
    #[arg(long, global = true)]
    pub input: Option<String>,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Maximum word length.
    #[arg(long, global = true)]
    pub max_length: Option<usize>,
    /// Numerical tolerance, where the command has one.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Net resolution for certificate verification.
    #[arg(long, global = true)]
    pub net: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Parser)]
#[command(name = "anosov-forge", version, about = "Exact and certified numerics for free-group representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Per-length minima of log s1 and their slope.
    QiProfile(ProfileArgs),
    /// Per-length minima of log s1 - log s2 and their slope.
    AnosovProfile(ProfileArgs),
    /// Unipotent, non-identity images among words up to the maximum length.
    ScanUnipotent,
    /// Lahn ratio infimum of a suspension.
    Lahn,
    /// Hyperbolicity, growth and unipotent evidence for a suspension's plane part.
    DfbEvidence,
    /// Odd-power ping-pong certificate for a pair (g, f).
    CertifyPingpong(PowerArgs),
    /// Full power search with its trace.
    FindPower(PowerArgs),
    /// Deformation path and unipotent commutator (planted instance by default).
    PerturbUnipotent(PerturbArgs),
    /// Unipotent witness for a finite-index restriction (catalog rho3 by default).
    DestabilizeRhok(DestabilizeArgs),
    /// Substitutions steering the b slot out of V and V^-1.
    TauIterate(TauArgs),
    /// tau iteration followed by the balancing scale.
    Balance(BalanceArgs),
    /// Flag-space coverage of limit-set samples.
    FlagsCoverage(CoverageArgs),
    /// Catalog entries, their checks, fixtures and the seeded search for f.
    Catalog(CatalogArgs),
    /// Free basis of the index k-1 subgroup.
    FiniteIndexGenerators(FiniteIndexArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProfileArgs {
    /// Random words per length instead of exhaustive enumeration.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PowerArgs {
    #[arg(long, value_enum, default_value_t = ParityArg::Odd)]
    pub parity: ParityArg,
    #[arg(long, default_value_t = catalog::RHO2_POWER_CAP)]
    pub n_max: u32,
    /// Generator index of the rotation-type element g.
    #[arg(long, default_value_t = 1)]
    pub g_index: usize,
    /// Generator index of the loxodromic element f.
    #[arg(long, default_value_t = 2)]
    pub f_index: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerturbArgs {
    #[arg(long, default_value_t = 1)]
    pub a: usize,
    #[arg(long, default_value_t = 2)]
    pub b: usize,
    #[arg(long, default_value_t = 1)]
    pub m: u32,
    #[arg(long, default_value_t = 1)]
    pub n: u32,
    #[arg(long, default_value_t = 1)]
    pub q: u32,
    #[arg(long, default_value_t = 0.6)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 8)]
    pub p_max: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DestabilizeArgs {
    /// Power of c3 in the witness; chosen automatically when absent.
    #[arg(long)]
    pub q: Option<u32>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TauArgs {
    #[arg(long, default_value = "1")]
    pub a: String,
    #[arg(long, default_value = "2")]
    pub b: String,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BalanceArgs {
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Target growth ratio for the balanced word search.
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    #[arg(long, default_value_t = 40)]
    pub m_max: u32,
    #[arg(long, default_value_t = 40)]
    pub n_max: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CoverageArgs {
    /// Comma-separated depths; defaults to 1..=max-length.
    #[arg(long)]
    pub lengths: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Emit the flag sample at the largest depth instead of the report.
    #[arg(long)]
    pub points: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CatalogArgs {
    /// Entry name (`barbot`, `lahn-qi`, `rho2`, `rho<k>`, `rho2-minimal`).
    pub name: Option<String>,
    #[arg(long)]
    pub list: bool,
    /// Run the entry's expected-property checks.
    #[arg(long)]
    pub check: bool,
    /// `gap,multiplier` for the barbot entry.
    #[arg(long)]
    pub barbot: Option<String>,
    /// Write every entry as `<name>.json` into this directory.
    #[arg(long)]
    pub write_fixtures: Option<PathBuf>,
    /// Rerun the seeded search for f (uses --seed).
    #[arg(long)]
    pub search: bool,
    #[arg(long, default_value_t = 500)]
    pub attempts: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FiniteIndexArgs {
    #[arg(long)]
    pub k: usize,
}

/// Everything that determines a run's output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub common: Common,
    pub options: Command,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    status: &'a str,
    result: T,
}

/// What a subcommand produced.
struct Outcome {
    witness: bool,
    json: Value,
    tsv: Option<String>,
}

impl Outcome {
    fn ok<T: Serialize>(v: &T) -> Result<Self> {
        Ok(Outcome { witness: false, json: to_value(v)?, tsv: None })
    }

    fn flagged<T: Serialize>(v: &T, witness: bool) -> Result<Self> {
        Ok(Outcome { witness, json: to_value(v)?, tsv: None })
    }

    fn with_tsv(mut self, tsv: String) -> Self {
        self.tsv = Some(tsv);
        self
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| ForgeError::Parse(e.to_string()))
}

/// Parsed input data.
enum Input {
    Entry(CatalogEntry),
    Exact(Representation),
    Float(FloatRepresentation),
    Susp(Suspension),
}

impl Input {
    fn exact(&self) -> Result<Representation> {
        match self {
            Input::Entry(e) => e.representation(),
            Input::Exact(r) => Ok(r.clone()),
            Input::Susp(s) => s.assemble(),
            Input::Float(_) => Err(ForgeError::Invalid("this command needs exact rational images".into())),
        }
    }

    fn float(&self) -> Result<FloatRepresentation> {
        match self {
            Input::Entry(e) => e.float_representation(),
            Input::Exact(r) => Ok(r.to_float()),
            Input::Susp(s) => s.assemble_float(),
            Input::Float(r) => Ok(r.clone()),
        }
    }

    fn suspension(&self) -> Result<Suspension> {
        match self {
            Input::Entry(e) => e.suspension().cloned(),
            Input::Susp(s) => Ok(s.clone()),
            _ => Err(ForgeError::Invalid("this command needs a suspension".into())),
        }
    }

    fn names(&self) -> Vec<String> {
        let rank = match self {
            Input::Entry(e) => e.float_representation().map(|r| r.rank()).unwrap_or(2),
            Input::Exact(r) => return r.generators.names.clone(),
            Input::Float(r) => r.rank(),
            Input::Susp(s) => return s.generators.names.clone(),
        };
        GeneratorSet::standard(rank.max(2)).map(|g| g.names).unwrap_or_default()
    }
}

fn parse_input(text: &str) -> Result<Input> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| ForgeError::Parse(format!("input is not JSON: {e}")))?;
    // Accept the envelope written by another subcommand.
    if v.get("tool").is_some() {
        if let Some(r) = v.get("result") {
            v = r.clone();
        }
    }
    let parse_err = |e: serde_json::Error| ForgeError::Parse(e.to_string());
    if v.get("name").is_some() && v.get("data").is_some() {
        return serde_json::from_value(v).map(Input::Entry).map_err(parse_err);
    }
    if v.get("plane_parts").is_some() {
        return serde_json::from_value(v).map(Input::Susp).map_err(parse_err);
    }
    if v.get("images").is_some() {
        let exact = v.pointer("/images/0/0/0").map_or(false, Value::is_string);
        return if exact {
            serde_json::from_value(v).map(Input::Exact).map_err(parse_err)
        } else {
            serde_json::from_value(v).map(Input::Float).map_err(parse_err)
        };
    }
    Err(ForgeError::Parse("input is not a representation, suspension or catalog entry".into()))
}

fn load_input(spec: Option<&str>, default: Option<&str>, stdin: &mut dyn Read) -> Result<Input> {
    let spec = spec.or(default);
    match spec {
        Some(s) if s.starts_with("catalog:") => Ok(Input::Entry(by_name(&s["catalog:".len()..])?)),
        Some("planted") => Ok(Input::Exact(planted_incidence_instance())),
        Some("-") | None => {
            let mut text = String::new();
            stdin.read_to_string(&mut text).map_err(|e| ForgeError::Invalid(format!("reading stdin: {e}")))?;
            parse_input(&text)
        }
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ForgeError::Invalid(format!("reading {path}: {e}")))?;
            parse_input(&text)
        }
    }
}

fn run_command(cli: &Cli, stdin: &mut dyn Read) -> Result<Outcome> {
    let c = &cli.common;
    let input = |default: Option<&str>, stdin: &mut dyn Read| load_input(c.input.as_deref(), default, stdin);
    match &cli.command {
        Command::QiProfile(a) | Command::AnosovProfile(a) => {
            let inp = input(None, stdin)?;
            let n = c.max_length.unwrap_or(6);
            let q = if matches!(cli.command, Command::QiProfile(_)) {
                GrowthQuantity::LogTopSingularValue
            } else {
                GrowthQuantity::LogSingularGap
            };
            // Float images only when no exact images exist.
            let p = match (inp.exact(), a.samples, q) {
                (Ok(rho), Some(k), _) => sampled_profile(&rho, n, q, k, c.seed)?,
                (Ok(rho), None, GrowthQuantity::LogTopSingularValue) => qi_profile(&rho, n)?,
                (Ok(rho), None, GrowthQuantity::LogSingularGap) => anosov_gap_profile(&rho, n)?,
                (Err(_), None, _) => float_profile(&inp.float()?, n, q)?,
                (Err(e), Some(_), _) => return Err(e),
            };
            Ok(Outcome::ok(&p)?.with_tsv(p.to_tsv()))
        }
        Command::ScanUnipotent => {
            let inp = input(None, stdin)?;
            let rho = inp.exact()?;
            let names = inp.names();
            let found = unipotent_scan(&rho, c.max_length.unwrap_or(4))?;
            let rows: Vec<Value> = found
                .iter()
                .map(|(w, m)| serde_json::json!({ "word": w, "text": w.format(&names), "matrix": m }))
                .collect();
            let tsv = found.iter().fold(String::from("word\ttext\n"), |mut s, (w, _)| {
                s.push_str(&format!("{:?}\t{}\n", w.letters(), w.format(&names)));
                s
            });
            Ok(Outcome::flagged(&rows, !found.is_empty())?.with_tsv(tsv))
        }
        Command::Lahn => {
            let s = input(None, stdin)?.suspension()?;
            let r = lahn_ratio(&s, c.max_length.unwrap_or(6))?;
            Outcome::flagged(&r, r.verdict == LahnVerdict::NonAnosovEvidence)
        }
        Command::DfbEvidence => {
            let s = input(None, stdin)?.suspension()?;
            let r = dfb_evidence(&s, c.max_length.unwrap_or(6))?;
            Outcome::flagged(&r, !r.consistent)
        }
        Command::CertifyPingpong(a) | Command::FindPower(a) => {
            let rho = input(None, stdin)?.exact()?;
            let pick = |i: usize| {
                rho.images()
                    .get(i.wrapping_sub(1))
                    .cloned()
                    .ok_or(ForgeError::LetterOutOfRange { index: i as i32, rank: rho.rank() })
            };
            let (g, f) = (pick(a.g_index)?, pick(a.f_index)?);
            let report = check_fabricaqi(&f, &g, 64)?;
            if !report.passed {
                return Outcome::flagged(&report, true);
            }
            let ps = find_power_with(&f, &g, a.parity.into(), a.n_max, c.net.unwrap_or(DEFAULT_NET_RESOLUTION))?;
            if matches!(cli.command, Command::FindPower(_)) {
                return Outcome::ok(&ps);
            }
            let qi = c.max_length.map(|n| qi_bound_check(&ps.certificate, n)).transpose()?;
            let violated = qi.as_ref().map_or(false, |q| !q.passed());
            let out = serde_json::json!({
                "n": ps.n,
                "certificate": ps.certificate,
                "qi_bound": qi,
            });
            Outcome::flagged(&out, violated)
        }
        Command::PerturbUnipotent(a) => {
            let inp = input(Some("planted"), stdin)?;
            let rho = inp.float()?;
            let path = compensated_path(&rho, a.a, a.b, a.m, a.n, a.q, a.amplitude)?;
            let inc = solve_incidence(&path, a.p_max, c.tol.unwrap_or(THETA_TOL))?;
            let w = unipotent_commutator(&path, &inc)?;
            let word = incidence_commutator(a.a, &omega_word(a.a, a.b, a.m, a.n), a.q, inc.exponent);
            let out = serde_json::json!({
                "incidence": inc,
                "bisection_cap": BISECTION_STEPS,
                "witness_word": word,
                "witness": w,
            });
            Outcome::ok(&out)
        }
        Command::DestabilizeRhok(a) => {
            let rho = input(Some("catalog:rho3"), stdin)?.exact()?;
            let w = rho_k_destabilize(&rho, a.q, c.max_length.unwrap_or(6))?;
            Outcome::ok(&w)
        }
        Command::TauIterate(a) => {
            let inp = input(Some("catalog:lahn-qi"), stdin)?;
            let s = inp.suspension()?;
            let names = inp.names();
            let run = tau_iteration(&s, &parse_word(&a.a, &names)?, &parse_word(&a.b, &names)?, a.max_iter)?;
            Outcome::ok(&run)
        }
        Command::Balance(a) => {
            let s = input(Some("catalog:lahn-qi"), stdin)?.suspension()?;
            let run = tau_iteration(&s, &Word::letter(1), &Word::letter(2), a.max_iter)?;
            let basis = run.basis.clone().ok_or_else(|| ForgeError::Hypothesis("no free basis after tau".into()))?;
            let bw = find_balanced_word(&s, &basis[0], &basis[1], a.c, a.m_max, a.n_max)?;
            let rep = balance_scaling(&s, &basis, bw.m, bw.n)?;
            Outcome::ok(&serde_json::json!({ "tau": run, "balanced_word": bw, "balance": rep }))
        }
        Command::FlagsCoverage(a) => {
            let rho = input(None, stdin)?.float()?;
            let lengths: Vec<usize> = match &a.lengths {
                Some(s) => s
                    .split(',')
                    .map(|t| t.trim().parse().map_err(|_| ForgeError::Parse(format!("bad length {t:?}"))))
                    .collect::<Result<_>>()?,
                None => (1..=c.max_length.unwrap_or(5)).collect(),
            };
            let base = default_base_flag(&rho);
            if a.points {
                let n = *lengths.iter().max().ok_or_else(|| ForgeError::Invalid("no lengths".into()))?;
                let sample = limit_set_sample(&rho, n, base)?;
                return Ok(Outcome::ok(&sample)?.with_tsv(sample.to_tsv()));
            }
            let r = coverage_schedule(&rho, &lengths, base, a.eta, a.delta)?;
            let tsv = r.rows.iter().fold(String::from("max_len\tsample_size\tcovered\tfraction\n"), |mut s, row| {
                s.push_str(&format!("{}\t{}\t{}\t{}\n", row.max_len, row.sample_size, row.covered, row.fraction));
                s
            });
            Ok(Outcome::ok(&r)?.with_tsv(tsv))
        }
        Command::Catalog(a) => run_catalog(a, c),
        Command::FiniteIndexGenerators(a) => {
            let b = finite_index_generators(a.k)?;
            let names = GeneratorSet::standard(2)?.names;
            let tsv = b.generators.iter().enumerate().fold(String::from("generator\tword\n"), |mut s, (i, w)| {
                s.push_str(&format!("c{}\t{}\n", i + 1, w.format(&names)));
                s
            });
            Ok(Outcome::ok(&b)?.with_tsv(tsv))
        }
    }
}

fn run_catalog(a: &CatalogArgs, c: &Common) -> Result<Outcome> {
    if a.list {
        return Outcome::ok(&catalog::NAMES);
    }
    if a.search {
        return Outcome::ok(&catalog::search_rho2_f(c.seed, a.attempts)?);
    }
    if let Some(dir) = &a.write_fixtures {
        std::fs::create_dir_all(dir).map_err(|e| ForgeError::Invalid(format!("creating {}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for name in catalog::NAMES {
            let path = dir.join(format!("{name}.json"));
            std::fs::write(&path, by_name(name)?.to_json() + "\n")
                .map_err(|e| ForgeError::Invalid(format!("writing {}: {e}", path.display())))?;
            written.push(path.display().to_string());
        }
        return Outcome::ok(&written);
    }
    let name = a.name.as_deref().ok_or_else(|| ForgeError::Invalid("catalog needs an entry name or --list".into()))?;
    let entry = match (&a.barbot, name) {
        (Some(p), "barbot") => {
            let (gap, t) = catalog::parse_barbot_params(p)?;
            catalog::barbot_anosov(&gap, &t)?
        }
        (Some(_), _) => return Err(ForgeError::Invalid("--barbot applies to the barbot entry only".into())),
        _ => by_name(name)?,
    };
    if a.check {
        let results = entry.run_checks()?;
        let failed = results.iter().any(|r| !r.passed);
        return Outcome::flagged(&serde_json::json!({ "name": entry.name, "checks": results }), failed);
    }
    Outcome::ok(&entry)
}

fn header(cfg: &RunConfig) -> String {
    let config = serde_json::to_string(cfg).unwrap_or_default();
    format!("# {TOOL} {VERSION} seed={} config={config}\n", cfg.common.seed)
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    if let Some(n) = cli.common.workers {
        if n == 0 {
            let _ = writeln!(stderr, "error: --workers must be positive");
            return 2;
        }
        // A pool may already exist when run in-process more than once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = RunConfig { common: cli.common.clone(), options: cli.command.clone() };
    let outcome = match run_command(&cli, stdin) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 2;
        }
    };
    let body = match cli.common.format {
        Format::Json => {
            let env = Envelope {
                tool: TOOL,
                version: VERSION,
                seed: cli.common.seed,
                config: &cfg,
                status: if outcome.witness { "witness" } else { "ok" },
                result: &outcome.json,
            };
            serde_json::to_string_pretty(&env).expect("values serialize") + "\n"
        }
        Format::Tsv => match &outcome.tsv {
            Some(t) => header(&cfg) + t,
            None => {
                let _ = writeln!(stderr, "error: this command has no TSV output; use --format json");
                return 2;
            }
        },
    };
    let written = match &cli.common.output {
        Some(p) => std::fs::write(p, &body).map_err(|e| e.to_string()),
        None => stdout.write_all(body.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "error: writing output: {e}");
        return 2;
    }
    if outcome.witness {
        1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str], stdin: &str) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("anosov-forge").chain(args.iter().copied());
        let code = run(argv, &mut stdin.as_bytes(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let (code, _, err) = call(&["qi-profile", "--bogus"], "");
        assert_eq!(code, 2);
        assert!(err.contains("--bogus"));
        assert_eq!(call(&["no-such-command"], "").0, 2);
    }

    #[test]
    fn catalog_pipes_into_certification() {
        let (code, entry, _) = call(&["catalog", "rho2"], "");
        assert_eq!(code, 0);
        let (code, cert, err) = call(&["certify-pingpong", "--parity", "odd"], &entry);
        assert_eq!(code, 0, "{err}");
        let v: Value = serde_json::from_str(&cert).unwrap();
        assert_eq!(v["result"]["n"], serde_json::json!(catalog::RHO2_POWER));
        assert_eq!(v["status"], "ok");
        assert_eq!(v["version"], VERSION);
    }

    #[test]
    fn unipotent_scan_reports_a_witness() {
        // a = [[1,1,0],[0,1,0],[0,0,1]] is unipotent at length 1.
        let rep = r#"{"rank":2,"names":["a","b"],"images":[
            [["1","1","0"],["0","1","0"],["0","0","1"]],
            [["2","0","0"],["0","1","0"],["0","0","1/2"]]]}"#;
        let (code, out, _) = call(&["scan-unipotent", "--max-length", "2"], rep);
        assert_eq!(code, 1);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["status"], "witness");
        assert_eq!(v["result"][0]["word"], serde_json::json!([-1]));
        assert_eq!(v["result"][1]["word"], serde_json::json!([1]));
        let (code, _, _) = call(&["scan-unipotent", "--max-length", "3", "--input", "catalog:rho2"], "");
        assert_eq!(code, 0);
    }

    #[test]
    fn output_is_deterministic_and_embeds_config() {
        let args = ["qi-profile", "--input", "catalog:rho2", "--max-length", "3", "--samples", "5", "--seed", "11"];
        let (c1, o1, _) = call(&args, "");
        let (c2, o2, _) = call(&args, "");
        assert_eq!((c1, c2), (0, 0));
        assert_eq!(o1, o2);
        let v: Value = serde_json::from_str(&o1).unwrap();
        assert_eq!(v["seed"], 11);
        assert_eq!(v["config"]["max_length"], 3);
        assert_eq!(v["config"]["options"]["command"], "qi-profile");
        let (_, tsv, _) = call(&["qi-profile", "--input", "catalog:rho2", "--max-length", "2", "--format", "tsv"], "");
        assert!(tsv.starts_with("# anosov-forge"));
    }

    #[test]
    fn lahn_and_catalog_checks_use_exit_one_for_witnesses() {
        assert_eq!(call(&["lahn", "--input", "catalog:lahn-qi", "--max-length", "3"], "").0, 1);
        assert_eq!(call(&["lahn", "--input", "catalog:barbot", "--max-length", "3"], "").0, 0);
        assert_eq!(call(&["catalog", "lahn-qi", "--check"], "").0, 0);
        assert_eq!(call(&["catalog", "barbot", "--barbot", "4,1000"], "").0, 2);
        assert_eq!(call(&["finite-index-generators", "--k", "3", "--format", "tsv"], "").0, 0);
        assert_eq!(call(&["dfb-evidence", "--input", "catalog:rho2"], "").0, 2);
    }
}
