//! `lmf`: build and audit local hidden state / hidden variable models.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lmf::catalog::{family_by_name, named_state, registry, StateFamily};
use lmf::certify::{compose_claim, verify, DEFAULT_AUDIT_TOL};
use lmf::conic::DEFAULT_TOL;
use lmf::doc::{matrix_from_doc, OperatorDoc};
use lmf::measure::{icosahedron_povm4, relabelled_povm_set, Rotation};
use lmf::protocols::{
    level_set, protocol1, protocol2, run_sequence, sweep_csv, sweep_family, LocalModelCertificate, Mode,
    SequenceConfig, SweepConfig, SweepMethod,
};
use lmf::shrink::{eta_by_bisection, inscribed_sphere_eta, BisectionOptions, ContinuousSet};
use lmf::strategies::{enumerate_all, prune_hemisphere, StrategySet, DEFAULT_PRUNE_SAMPLES, DEFAULT_STRATEGY_CAP};
use lmf::{DensityOperator, Error, MeasurementSet, ShrinkResult};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "lmf", version, about = "Local hidden state and hidden variable models for entangled states")]
struct Cli {
    /// Cap on worker threads for concurrent solves.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Protocol 1 (lhs) or Protocol 2 (lhv) and write a verified certificate.
    Run(RunArgs),
    /// Bisect the largest certified visibility over a parameter grid; CSV output.
    Sweep(SweepArgs),
    /// Shrinking factor of a finite measurement set.
    Shrink(ShrinkArgs),
    /// Audit a certificate without any solver.
    Verify(VerifyArgs),
    /// List the registered state families.
    CatalogList,
}

#[derive(Args, Clone)]
struct Common {
    /// ZYZ Euler angles of the polyhedron orientation, "alpha,beta,gamma".
    #[arg(long, value_parser = parse_rotation, default_value = "0,0,0")]
    rotation: Rotation,
    #[arg(long, default_value_t = DEFAULT_STRATEGY_CAP)]
    strategy_cap: usize,
    #[arg(long, default_value_t = DEFAULT_PRUNE_SAMPLES)]
    prune_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solver tolerance (default from LMF_SOLVER_TOL, else 1e-8).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct StateArgs {
    /// Registered family name (see catalog-list).
    #[arg(long, conflicts_with = "state_file")]
    family: Option<String>,
    /// Bipartite state as a JSON operator document.
    #[arg(long)]
    state_file: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SetName {
    Icosahedron,
    Cube,
    IcosahedronPovm4,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long, value_parser = parse_mode, default_value = "lhs")]
    mode: Mode,
    /// Polyhedron refinement level.
    #[arg(long, default_value_t = 1)]
    level: usize,
    /// Run levels 1..=N, stopping once q* = 1; writes the last certificate.
    #[arg(long)]
    sequence: Option<usize>,
    /// Named measurement set instead of a polyhedron level (LHS only).
    #[arg(long, value_enum)]
    set: Option<SetName>,
    /// Bisection precision for POVM shrinking factors.
    #[arg(long, default_value_t = 1e-3)]
    precision: f64,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "certificate.json")]
    out: PathBuf,
    /// Verification report path (default: <out>.report.json).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    family: String,
    /// Comma-separated values of the family parameter (θ or d).
    #[arg(long)]
    grid: Option<String>,
    /// Evenly spaced grid "start:end:count".
    #[arg(long)]
    grid_range: Option<String>,
    #[arg(long, value_parser = parse_mode, default_value = "lhs")]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    level: usize,
    #[arg(long, value_enum, default_value = "bisection")]
    method: MethodArg,
    #[arg(long, default_value_t = 5e-3)]
    width: f64,
    #[command(flatten)]
    common: Common,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Bisection,
    Direct,
}

#[derive(Args)]
struct ShrinkArgs {
    #[arg(long, value_enum, conflicts_with = "level")]
    set: Option<SetName>,
    #[arg(long)]
    level: Option<usize>,
    /// "projective", or "povmN" for all N-outcome POVMs.
    #[arg(long, default_value = "projective")]
    continuous: String,
    #[arg(long, default_value_t = 1e-3)]
    precision: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    certificate: PathBuf,
    #[arg(long, default_value_t = DEFAULT_AUDIT_TOL)]
    tol: f64,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_rotation(s: &str) -> Result<Rotation, String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match v[..] {
        [alpha, beta, gamma] => Ok(Rotation { alpha, beta, gamma }),
        _ => Err("expected three comma-separated angles".into()),
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
    Verify(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Solver(_) | Error::Infeasible(_)) => Failure::Solver(e),
            _ => Failure::Config(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn solver_tol(common: &Common) -> anyhow::Result<f64> {
    let tol = match common.tol {
        Some(t) => t,
        None => match std::env::var("LMF_SOLVER_TOL") {
            Ok(v) => v.parse().with_context(|| format!("LMF_SOLVER_TOL={v} is not a number"))?,
            Err(_) => DEFAULT_TOL,
        },
    };
    if !(tol > 0.0 && tol < 1e-2) {
        bail!("solver tolerance {tol} out of range");
    }
    Ok(tol)
}

fn sequence_config(common: &Common) -> anyhow::Result<SequenceConfig> {
    Ok(SequenceConfig {
        rotation: common.rotation,
        strategy_cap: common.strategy_cap,
        prune_samples: common.prune_samples,
        seed: common.seed,
        tol: solver_tol(common)?,
        ..SequenceConfig::default()
    })
}

fn load_state(args: &StateArgs) -> anyhow::Result<(DensityOperator, Option<(StateFamily, f64)>, String)> {
    if let Some(path) = &args.state_file {
        let doc: OperatorDoc = serde_json::from_str(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?;
        let rho = DensityOperator::new(matrix_from_doc(&doc.matrix)?, doc.dim_a, doc.dim_b)?;
        return Ok((rho, None, path.display().to_string()));
    }
    let name = args.family.as_deref().ok_or_else(|| anyhow!("give --family or --state-file"))?;
    let mut params = BTreeMap::new();
    for (k, v) in [("alpha", args.alpha), ("theta", args.theta), ("d", args.d), ("b", args.b)] {
        if let Some(v) = v {
            params.insert(k.to_string(), v);
        }
    }
    let (rho, label) = named_state(name, &params)?;
    let family = family_by_name(name, &params).ok().zip(args.alpha);
    Ok((rho, family, label))
}

fn named_set(name: SetName, rot: &Rotation) -> MeasurementSet {
    match name {
        SetName::Icosahedron => MeasurementSet::icosahedron(rot),
        SetName::Cube => MeasurementSet::cube(rot),
        SetName::IcosahedronPovm4 => icosahedron_povm4(rot),
    }
}

fn parse_continuous(s: &str, set: &MeasurementSet) -> anyhow::Result<ContinuousSet> {
    if s == "projective" {
        return Ok(ContinuousSet::ProjectiveQubit);
    }
    let n: usize = s
        .strip_prefix("povm")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| anyhow!("unknown continuous set {s}; use projective or povmN"))?;
    Ok(ContinuousSet::Povm { outcomes: n, dim: set.dim() })
}

fn mixed(d: usize) -> DensityOperator {
    DensityOperator::maximally_mixed(d, 1)
}

fn shrink_factor(set: &MeasurementSet, continuous: ContinuousSet, precision: f64, samples: usize, seed: u64, tol: f64) -> anyhow::Result<ShrinkResult> {
    match continuous {
        ContinuousSet::ProjectiveQubit => {
            let v = set.bloch_vertices().ok_or_else(|| anyhow!("projective shrinking needs a Bloch-vertex set"))?;
            Ok(inscribed_sphere_eta(v)?)
        }
        ContinuousSet::Povm { outcomes, .. } => {
            let set = if set.outcomes() == outcomes || set.bloch_vertices().is_none() {
                set.clone()
            } else {
                relabelled_povm_set(set, outcomes)?
            };
            let opts = BisectionOptions { samples, seed, tol };
            Ok(eta_by_bisection(&set, continuous, &mixed(set.dim()), precision, &opts)?)
        }
    }
}

fn write_report(cert: &LocalModelCertificate, path: &Path, tol: f64) -> Result<String, Failure> {
    let report = verify(cert, tol)?;
    std::fs::write(path, serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?)
        .map_err(|e| Failure::Config(e.into()))?;
    if !report.pass {
        return Err(Failure::Verify(format!("verification failed: {}", report.failed().join(", "))));
    }
    Ok(compose_claim(cert, &report)?)
}

fn strategies_for(set: &MeasurementSet, pruned: bool, common: &Common) -> anyhow::Result<StrategySet> {
    Ok(if pruned {
        prune_hemisphere(&set.directions(), common.prune_samples, common.seed)?
    } else {
        enumerate_all(set.len(), set.outcomes(), common.strategy_cap)?
    })
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let (rho, family, label) = load_state(&a.state)?;
    let tol = solver_tol(&a.common)?;
    let cfg = sequence_config(&a.common)?;
    let mut cert = if let Some(max) = a.sequence {
        if max == 0 {
            return Err(Failure::Config(anyhow!("--sequence needs at least one level")));
        }
        let reports = run_sequence(&rho, a.mode, max, &cfg)?;
        for r in &reports {
            eprintln!(
                "level {}: m = {}, η = {:.6}, strategies = {}{}, q* = {}",
                r.level,
                r.measurements,
                r.eta,
                r.strategies,
                if r.pruned { " (pruned)" } else { "" },
                r.q_star.map_or_else(|| r.error.clone().unwrap_or_default(), |q| format!("{q:.6}"))
            );
        }
        reports
            .into_iter()
            .rev()
            .find_map(|r| r.certificate)
            .ok_or_else(|| Failure::Solver(anyhow!("no level produced a certificate")))?
    } else {
        let (set, eta) = match a.set {
            Some(name) => {
                if a.mode == Mode::Lhv {
                    return Err(Failure::Config(anyhow!("named sets are supported for lhs runs only")));
                }
                let set = named_set(name, &a.common.rotation);
                let eta = shrink_factor(&set, lmf::protocols::continuous_for(&set), a.precision, 200, a.common.seed, tol)?.eta;
                (set, eta)
            }
            None => level_set(a.level, &a.common.rotation)?,
        };
        let ess = set.essential()?;
        let xi_a = mixed(rho.dim_a());
        match a.mode {
            Mode::Lhs => {
                let pruned = (ess.outcomes() as f64).powi(ess.len() as i32) > a.common.strategy_cap as f64;
                let strat = strategies_for(&ess, pruned, &a.common)?;
                protocol1(&rho, &set, eta, &xi_a, &strat, tol)?
            }
            Mode::Lhv => {
                let per = 2f64.powi(ess.len() as i32);
                let strat = strategies_for(&ess, per * per > a.common.strategy_cap as f64, &a.common)?;
                protocol2(&rho, &set, &set, eta, eta, &xi_a, &mixed(rho.dim_b()), &strat, &strat, tol)?
            }
        }
    };
    cert.set_target(family.map_or(label, |(f, al)| f.label(al)), family)?;
    cert.write(&a.out).map_err(|e| Failure::Config(e.into()))?;
    let report_path = a.report.unwrap_or_else(|| a.out.with_extension("report.json"));
    let claim = write_report(&cert, &report_path, DEFAULT_AUDIT_TOL)?;
    println!("q* = {}", cert.q_star);
    println!("{claim}");
    Ok(())
}

fn grid_values(a: &SweepArgs) -> anyhow::Result<Vec<f64>> {
    let mut out = Vec::new();
    if let Some(g) = &a.grid {
        for p in g.split(',') {
            let p = p.trim();
            if !p.is_empty() {
                out.push(p.parse::<f64>().with_context(|| format!("bad grid value {p}"))?);
            }
        }
    }
    if let Some(r) = &a.grid_range {
        let parts: Vec<&str> = r.split(':').collect();
        let [s, e, n] = parts[..] else { bail!("grid range must be start:end:count") };
        let (s, e, n): (f64, f64, usize) = (s.parse()?, e.parse()?, n.parse()?);
        for i in 0..n {
            out.push(if n == 1 { s } else { s + (e - s) * i as f64 / (n - 1) as f64 });
        }
    }
    Ok(out)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let grid = grid_values(&a)?;
    let key = match a.family.as_str() {
        "rho-alpha-theta" => Some("theta"),
        "qubit-qudit" => Some("d"),
        "werner" => None,
        other => return Err(Failure::Config(anyhow!("{other} is not a white-noise family"))),
    };
    let families: Vec<StateFamily> = match key {
        Some(k) => grid
            .iter()
            .map(|&v| family_by_name(&a.family, &BTreeMap::from([(k.to_string(), v)])))
            .collect::<lmf::Result<_>>()?,
        None if a.grid.is_some() || a.grid_range.is_some() => {
            return Err(Failure::Config(anyhow!("werner takes no grid")));
        }
        None => vec![StateFamily::Werner],
    };
    if families.is_empty() {
        return Err(Failure::Config(anyhow!("empty parameter grid")));
    }
    let cfg = SweepConfig {
        mode: a.mode,
        level: a.level,
        method: match a.method {
            MethodArg::Bisection => SweepMethod::Bisection,
            MethodArg::Direct => SweepMethod::Direct,
        },
        width: a.width,
        sequence: sequence_config(&a.common)?,
    };
    let csv = sweep_csv(&sweep_family(&families, &cfg)?);
    match &a.out {
        Some(p) => std::fs::write(p, csv).map_err(|e| Failure::Config(e.into()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_shrink(a: ShrinkArgs) -> Result<(), Failure> {
    let set = match (a.set, a.level) {
        (Some(name), _) => named_set(name, &a.common.rotation),
        (None, Some(l)) => level_set(l, &a.common.rotation)?.0,
        (None, None) => return Err(Failure::Config(anyhow!("give --set or --level"))),
    };
    let continuous = parse_continuous(&a.continuous, &set)?;
    let tol = solver_tol(&a.common)?;
    let res = shrink_factor(&set, continuous, a.precision, a.samples, a.common.seed, tol)?;
    let json = serde_json::to_string_pretty(&res).map_err(anyhow::Error::from)?;
    match &a.out {
        Some(p) => std::fs::write(p, json).map_err(|e| Failure::Config(e.into()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.certificate)
        .with_context(|| format!("reading {}", a.certificate.display()))
        .map_err(Failure::Config)?;
    let cert = LocalModelCertificate::from_json(&text).map_err(|e| Failure::Verify(format!("malformed certificate: {e}")))?;
    let report = verify(&cert, a.tol)?;
    let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    match &a.report {
        Some(p) => std::fs::write(p, json).map_err(|e| Failure::Config(e.into()))?,
        None => println!("{json}"),
    }
    if !report.pass {
        return Err(Failure::Verify(format!("verification failed: {}", report.failed().join(", "))));
    }
    println!("{}", compose_claim(&cert, &report)?);
    Ok(())
}

fn cmd_catalog() -> Result<(), Failure> {
    for f in registry() {
        println!("{:<28} {:<16} {}", f.name, f.parameters.join(","), f.description);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 || rayon_init(j).is_err() {
            eprintln!("error: invalid --jobs {j}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Shrink(a) => cmd_shrink(a),
        Command::Verify(a) => cmd_verify(a),
        Command::CatalogList => cmd_catalog(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

fn rayon_init(threads: usize) -> Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()
}
