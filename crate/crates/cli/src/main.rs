//! `varlp` — command-line surface for the variable-exponent Lebesgue
//! toolkit: norms and modulars of step-function instances, closed-form
//! constants, rearrangements, block-decomposition bounds, the auxiliary and
//! half-line transports, and the randomized certification suite with
//! bitwise-reproducible reports.
//!
//! Exit codes: 0 — success / all checks pass; 1 — an inequality violation or
//! replay mismatch was found; 2 — input or usage error.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use varlp_core::{
    aux_transform, certify_rearrangement, constant_a, constant_bp, decomposition_margins,
    modular_mo, modular_nakano, norm_mo, norm_nakano, norm_ode, permute, phi_exact_step, replay,
    run_suite, sort_by_exponent, sub_rng, verify_isometry, Check, CheckReport, DecomposeError,
    GenConfig, HalfLineInstance, HalfLineSpec, InstanceError, InstanceSpec, LuxError,
    ModularError, OdeError, Partition, PiecePermutation, PieceSet, RearrangeError, ReportFile,
    SortDirection, SuiteError, CHAIN_BOUND_NAMES, DEFAULT_TOL,
};

#[derive(Parser)]
#[command(
    name = "varlp",
    version,
    about = "Norms, modulars, and inequality certification for variable-exponent Lebesgue spaces on [0,1]"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute a norm of an instance file
    Norm(NormArgs),
    /// Evaluate the modular of f/λ at a given λ
    Modular(ModularArgs),
    /// Print the closed-form constants of the estimates
    Constants(ConstantsArgs),
    /// Permute the pieces of an instance and write the result
    Rearrange(RearrangeArgs),
    /// Check the block-decomposition chain bounds for a cut list
    Decompose(DecomposeArgs),
    /// Apply the auxiliary time change or the half-line transport
    Transform(TransformArgs),
    /// Run the randomized certification suite
    Fuzz(FuzzArgs),
    /// Recompute a failure recorded in a report, bit for bit
    Replay(ReplayArgs),
    /// Exhaustively certify one structure on one instance
    Certify(CertifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NormMethodArg {
    /// Luxemburg norm of the exponent-weighted modular
    Nakano,
    /// Luxemburg norm of the plain modular
    Mo,
    /// Piecewise closed-form accumulation norm
    Ode,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModularMethodArg {
    Nakano,
    Mo,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    /// Sort pieces by exponent, smallest first
    Inc,
    /// Sort pieces by exponent, largest first
    Dec,
    /// Seeded uniform random permutation
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// Time change t ↦ ∫₀ᵗ |f|^p/p ds on a unit-interval instance
    Aux,
    /// Map a weighted instance on [0, ∞) into [0, 1) isometrically
    Halfline,
}

#[derive(Args)]
struct NormArgs {
    #[arg(long, value_enum)]
    method: NormMethodArg,
    /// Instance file: {"pieces": [{"len", "f", "p"}, ...]}
    #[arg(long)]
    input: PathBuf,
    /// Bisection tolerance (nakano and mo only)
    #[arg(long)]
    tol: Option<f64>,
    /// Write the accumulation curve as CSV (ode only)
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct ModularArgs {
    #[arg(long, value_enum)]
    method: ModularMethodArg,
    #[arg(long)]
    input: PathBuf,
    /// Scale λ > 0 at which the modular of f/λ is evaluated
    #[arg(long)]
    lambda: f64,
}

#[derive(Args)]
struct ConstantsArgs {
    /// Also print b_p, the root of b + b^(−p) = 2, for this p
    #[arg(long)]
    bp: Option<f64>,
}

#[derive(Args)]
struct RearrangeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    order: OrderArg,
    /// Permutation seed (used by --order random)
    #[arg(long)]
    seed: u64,
    /// Output instance file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated piece indices where a new block starts, e.g. 1,2,4
    #[arg(long)]
    cuts: String,
    /// Norm used for the per-block display lines
    #[arg(long, value_enum, default_value = "nakano")]
    norm: BlockNormArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum BlockNormArg {
    Nakano,
    Ode,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    input: PathBuf,
    /// Subpieces per source piece (halfline only; default 8)
    #[arg(long)]
    refine: Option<usize>,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Comma-separated check names; all checks when omitted
    #[arg(long)]
    checks: Option<String>,
    /// Write the full JSON report here
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Report file produced by `varlp fuzz --report`
    #[arg(long)]
    report: PathBuf,
    /// Failure index, counting across checks in report order
    #[arg(long)]
    index: usize,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(subcommand)]
    what: CertifyCmd,
}

#[derive(Subcommand)]
enum CertifyCmd {
    /// Random piece permutations: monotone sandwich, two-sided factor,
    /// and invariance of the modular-based norm
    Rearrange {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    WriteFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad report file: {0}")]
    Report(#[from] serde_json::Error),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Lux(#[from] LuxError),
    #[error(transparent)]
    Modular(#[from] ModularError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Rearrange(#[from] RearrangeError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    HalfLine(#[from] varlp_core::HalfLineError),
    #[error(transparent)]
    Scalar(#[from] varlp_core::ScalarError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
}

/// 15 significant digits, the precision contract of every printed value.
fn sig(x: f64) -> String {
    format!("{x:.14e}")
}

fn read_to_string(path: &PathBuf) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::WriteFile {
        path: path.clone(),
        source,
    })
}

fn load_instance(path: &PathBuf) -> Result<InstanceSpec, CliError> {
    Ok(InstanceSpec::from_json(&read_to_string(path)?)?)
}

fn print_check(r: &CheckReport, with_stats: bool) {
    println!(
        "check {}: trials={} worst_margin={} failures={} {}",
        r.check,
        r.trials,
        sig(r.worst_margin),
        r.failures.len(),
        if r.passed() { "PASS" } else { "FAIL" }
    );
    if with_stats {
        for (key, value) in &r.stats {
            println!("stat {key}={}", sig(*value));
        }
    }
}

fn cmd_norm(args: &NormArgs) -> Result<u8, CliError> {
    let (f, p) = load_instance(&args.input)?.to_parts()?;
    match args.method {
        NormMethodArg::Nakano | NormMethodArg::Mo => {
            if args.curve.is_some() {
                return Err(CliError::Usage(
                    "--curve applies only to --method ode".into(),
                ));
            }
            let tol = args.tol.unwrap_or(DEFAULT_TOL);
            if !(tol.is_finite() && tol > 0.0) {
                return Err(CliError::Usage("--tol must be a positive number".into()));
            }
            let r = match args.method {
                NormMethodArg::Nakano => norm_nakano(&f, &p, tol)?,
                _ => norm_mo(&f, &p, tol)?,
            };
            println!("value={} iterations={}", sig(r.value), r.iterations);
        }
        NormMethodArg::Ode => {
            if args.tol.is_some() {
                return Err(CliError::Usage(
                    "--tol applies only to the bisection methods (nakano, mo)".into(),
                ));
            }
            let r = norm_ode(&f, &p);
            println!("value={} iterations={}", sig(r.value), r.iterations);
            if let Some(path) = &args.curve {
                let curve = phi_exact_step(&f, &p);
                let mut csv = String::from("t,phi\n");
                for (t, phi) in curve.breakpoints().iter().zip(curve.phi()) {
                    writeln!(csv, "{},{}", sig(*t), sig(*phi)).expect("string writes succeed");
                }
                write_file(path, &csv)?;
            }
        }
    }
    Ok(0)
}

fn cmd_modular(args: &ModularArgs) -> Result<u8, CliError> {
    let (f, p) = load_instance(&args.input)?.to_parts()?;
    let value = match args.method {
        ModularMethodArg::Nakano => modular_nakano(&f, &p, args.lambda)?,
        ModularMethodArg::Mo => modular_mo(&f, &p, args.lambda)?,
    };
    println!("value={}", sig(value));
    Ok(0)
}

fn cmd_constants(args: &ConstantsArgs) -> Result<u8, CliError> {
    let a = constant_a();
    println!("a={}", sig(a));
    println!("c1={}", sig(2.0 * (1.0 + a * std::f64::consts::E)));
    if let Some(p) = args.bp {
        println!("bp={}", sig(constant_bp(p)?));
    }
    Ok(0)
}

fn cmd_rearrange(args: &RearrangeArgs) -> Result<u8, CliError> {
    let (f, p) = load_instance(&args.input)?.to_parts()?;
    let (rf, rp) = match args.order {
        OrderArg::Inc => sort_by_exponent(&f, &p, SortDirection::Increasing),
        OrderArg::Dec => sort_by_exponent(&f, &p, SortDirection::Decreasing),
        OrderArg::Random => {
            let mut rng = sub_rng(args.seed, 0);
            let sigma = PiecePermutation::random(&mut rng, f.n_pieces());
            permute(&f, &p, &sigma)?
        }
    };
    let json = InstanceSpec::from_parts(&rf, &rp).to_json();
    match &args.out {
        Some(path) => write_file(path, &json)?,
        None => println!("{json}"),
    }
    Ok(0)
}

fn parse_cuts(raw: &str, n_pieces: usize) -> Result<Vec<usize>, CliError> {
    let mut cuts = Vec::new();
    for tok in raw.split(',') {
        let tok = tok.trim();
        let cut: usize = tok
            .parse()
            .map_err(|_| CliError::Usage(format!("--cuts entry {tok:?} is not an index")))?;
        if cut == 0 || cut >= n_pieces {
            return Err(CliError::Usage(format!(
                "cut {cut} outside the interior 1..{}",
                n_pieces - 1
            )));
        }
        if cuts.last().is_some_and(|&prev| prev >= cut) {
            return Err(CliError::Usage("--cuts must be strictly increasing".into()));
        }
        cuts.push(cut);
    }
    Ok(cuts)
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<u8, CliError> {
    let (f, p) = load_instance(&args.input)?.to_parts()?;
    let n = p.n_pieces();
    let cuts = parse_cuts(&args.cuts, n)?;
    let mut starts = vec![0];
    starts.extend(&cuts);
    let mut sets = Vec::with_capacity(starts.len());
    for (k, &start) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(n);
        sets.push(PieceSet::new(start..end));
    }
    let partition = Partition::from_sets(&p, sets)?;
    let method = match args.norm {
        BlockNormArg::Nakano => varlp_core::NormMethod::Nakano,
        BlockNormArg::Ode => varlp_core::NormMethod::Ode,
    };
    let block_norms = varlp_core::variable_block_norms(&f, &p, &partition, method)?;
    println!("blocks={}", partition.n_blocks());
    for (k, (&start, norm)) in starts.iter().zip(&block_norms).enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(n);
        println!("block {k}: pieces={start}..{end} norm={}", sig(*norm));
    }
    let dm = decomposition_margins(&f, &p, &partition);
    println!("total_nakano={}", sig(dm.total_nakano));
    println!("total_ode={}", sig(dm.total_ode));
    println!("c1={}", sig(dm.c1));
    println!("c2={}", sig(dm.c2));
    let mut all_pass = true;
    for (name, ((lhs, rhs), margin)) in CHAIN_BOUND_NAMES
        .iter()
        .zip(dm.sides.iter().zip(&dm.margins))
    {
        let pass = *margin >= 0.0;
        all_pass &= pass;
        println!(
            "bound {name}: lhs={} rhs={} margin={} {}",
            sig(*lhs),
            sig(*rhs),
            sig(*margin),
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!("RESULT: {}", if all_pass { "PASS" } else { "FAIL" });
    Ok(u8::from(!all_pass))
}

fn cmd_transform(args: &TransformArgs) -> Result<u8, CliError> {
    match args.kind {
        KindArg::Aux => {
            if args.refine.is_some() {
                return Err(CliError::Usage(
                    "--refine applies only to --kind halfline".into(),
                ));
            }
            let (f, p) = load_instance(&args.input)?.to_parts()?;
            let aux = aux_transform(&f, &p)?;
            println!("alpha={}", sig(aux.alpha));
            println!("tau,phi");
            for (tau, phi) in aux
                .curve_hat
                .breakpoints()
                .iter()
                .zip(aux.curve_hat.phi())
            {
                println!("{},{}", sig(*tau), sig(*phi));
            }
            Ok(0)
        }
        KindArg::Halfline => {
            let spec = HalfLineSpec::from_json(&read_to_string(&args.input)?)?;
            let inst = HalfLineInstance::from_spec(&spec)?;
            let report = verify_isometry(&inst, args.refine.unwrap_or(8))?;
            print_check(&report, true);
            Ok(u8::from(!report.passed()))
        }
    }
}

fn cmd_fuzz(args: &FuzzArgs) -> Result<u8, CliError> {
    let checks: Vec<Check> = match &args.checks {
        None => Check::ALL.to_vec(),
        Some(raw) => raw
            .split(',')
            .map(|tok| {
                Check::parse(tok)
                    .ok_or_else(|| CliError::Suite(SuiteError::UnknownCheck(tok.trim().into())))
            })
            .collect::<Result<_, _>>()?,
    };
    let cfg = GenConfig::new(args.seed);
    let reports = run_suite(&cfg, args.trials, &checks)?;
    let file = ReportFile::new(cfg, args.trials, reports);
    for check in &file.checks {
        print_check(check, false);
    }
    println!(
        "RESULT: {} ({} checks, {} failures)",
        if file.passed { "PASS" } else { "FAIL" },
        file.checks.len(),
        file.n_failures()
    );
    if let Some(path) = &args.report {
        write_file(path, &file.to_json())?;
    }
    Ok(u8::from(!file.passed))
}

fn cmd_replay(args: &ReplayArgs) -> Result<u8, CliError> {
    let file = ReportFile::from_json(&read_to_string(&args.report)?)?;
    let outcome = replay(&file, args.index)?;
    let ok = outcome.matches();
    println!(
        "check={} trial={} stored={} recomputed={} lhs={} rhs={} {}",
        outcome.check,
        outcome.trial,
        sig(outcome.stored_margin),
        sig(outcome.recomputed_margin),
        sig(outcome.lhs),
        sig(outcome.rhs),
        if ok { "MATCH" } else { "MISMATCH" }
    );
    Ok(u8::from(!ok))
}

fn cmd_certify(args: &CertifyArgs) -> Result<u8, CliError> {
    match &args.what {
        CertifyCmd::Rearrange {
            input,
            trials,
            seed,
        } => {
            if *trials == 0 {
                return Err(CliError::Usage("--trials must be at least 1".into()));
            }
            let (f, p) = load_instance(input)?.to_parts()?;
            let report = certify_rearrangement(&f, &p, *trials, *seed);
            print_check(&report, true);
            Ok(u8::from(!report.passed()))
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.cmd {
        Cmd::Norm(args) => cmd_norm(args),
        Cmd::Modular(args) => cmd_modular(args),
        Cmd::Constants(args) => cmd_constants(args),
        Cmd::Rearrange(args) => cmd_rearrange(args),
        Cmd::Decompose(args) => cmd_decompose(args),
        Cmd::Transform(args) => cmd_transform(args),
        Cmd::Fuzz(args) => cmd_fuzz(args),
        Cmd::Replay(args) => cmd_replay(args),
        Cmd::Certify(args) => cmd_certify(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
