use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use secprice_core::formulation::build_lp;
use secprice_core::io::load_system_with_hash;
use secprice_core::lpsolve::Tolerances;
use secprice_core::pricing::Scheme;
use secprice_core::report::{emit_section, export_lp, Section};
use secprice_core::scenario::{
    run_scenario, ModelChoice, OutputFormat, RunArchive, ScenarioConfig, ScenarioError, Timestamps,
};

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERDICT: u8 = 4;

#[derive(Parser)]
#[command(name = "secprice", version, about = "Clear, price and settle contingency-constrained energy and reserve markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check system files without solving.
    Validate {
        #[arg(long = "system", required = true)]
        systems: Vec<PathBuf>,
    },
    /// Solve, price, settle and verify; writes the full archive.
    Run(RunArgs),
    /// Print balance multipliers and price books.
    Prices(RunArgs),
    /// Print per-agent settlements.
    Settle(RunArgs),
    /// Print the optimality certificate and verdicts; exit 4 on failure.
    Verify(RunArgs),
    /// Print proposed-minus-baseline deltas.
    Compare(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Baseline,
    Proposed,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Auto,
    SingleBus,
    Network,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// System file (repeat for a batch).
    #[arg(long = "system", required = true)]
    systems: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    scheme: SchemeArg,
    /// Defaults to json for `run` and table for the other verbs.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Output file, or directory when several systems are given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    model: ModelArg,
    /// Relative duality-gap tolerance.
    #[arg(long, env = "SECPRICE_TOL_GAP")]
    tol_gap: Option<f64>,
    /// Money tolerance in $.
    #[arg(long, env = "SECPRICE_TOL_MONEY")]
    tol_money: Option<f64>,
    /// Scenarios solved concurrently in batch mode.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write each LP in CPLEX LP format to this path (file or directory).
    #[arg(long)]
    export_lp: Option<PathBuf>,
    /// Record wall-clock start and finish times in the archive.
    #[arg(long)]
    timestamp: bool,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: anyhow::Error) -> Self {
        Failure { code, error }
    }
}

fn scenario_code(e: &ScenarioError) -> u8 {
    match e {
        ScenarioError::Solve(_) => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

fn config_for(args: &RunArgs, path: &Path, default_format: OutputFormat) -> ScenarioConfig {
    let mut tolerances = Tolerances::default();
    if let Some(g) = args.tol_gap {
        tolerances.gap = g;
    }
    if let Some(m) = args.tol_money {
        tolerances.money = m;
    }
    ScenarioConfig {
        system_path: path.to_path_buf(),
        model: match args.model {
            ModelArg::Auto => ModelChoice::Auto,
            ModelArg::SingleBus => ModelChoice::SingleBus,
            ModelArg::Network => ModelChoice::Network,
        },
        schemes: match args.scheme {
            SchemeArg::Baseline => vec![Scheme::Baseline],
            SchemeArg::Proposed => vec![Scheme::Proposed],
            SchemeArg::Both => vec![Scheme::Baseline, Scheme::Proposed],
        },
        tolerances,
        format: match args.format {
            Some(FormatArg::Table) => OutputFormat::Table,
            Some(FormatArg::Json) => OutputFormat::Json,
            Some(FormatArg::Csv) => OutputFormat::Csv,
            None => default_format,
        },
        out: args.out.clone(),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn run_one(config: &ScenarioConfig, timestamp: bool) -> Result<RunArchive, Failure> {
    let started = timestamp.then(now);
    let mut archive = run_scenario(config).map_err(|e| {
        let code = scenario_code(&e);
        Failure::new(
            code,
            anyhow!(e).context(format!("scenario {}", config.system_path.display())),
        )
    })?;
    if let Some(started) = started {
        archive.timestamps = Some(Timestamps {
            started,
            finished: now(),
        });
    }
    Ok(archive)
}

fn extension(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Table => "txt",
        OutputFormat::Json => "json",
        OutputFormat::Csv => "csv",
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "system".into())
}

fn export_lps(args: &RunArgs, target: &Path) -> Result<(), Failure> {
    let many = args.systems.len() > 1 || target.is_dir();
    if many {
        std::fs::create_dir_all(target)
            .with_context(|| format!("creating {}", target.display()))
            .map_err(|e| Failure::new(EXIT_INPUT, e))?;
    }
    for path in &args.systems {
        let loaded = load_system_with_hash(path)
            .map_err(|e| Failure::new(EXIT_INPUT, anyhow!(e)))?;
        let lp = build_lp(&loaded.system).map_err(|e| Failure::new(EXIT_INPUT, anyhow!(e)))?;
        let file = if many {
            target.join(format!("{}.lp", stem(path)))
        } else {
            target.to_path_buf()
        };
        std::fs::write(&file, export_lp(&lp))
            .with_context(|| format!("writing {}", file.display()))
            .map_err(|e| Failure::new(EXIT_INPUT, e))?;
    }
    Ok(())
}

fn run_batch(args: &RunArgs, section: Section, default_format: OutputFormat) -> Result<bool, Failure> {
    if let Some(target) = &args.export_lp {
        export_lps(args, target)?;
    }
    let configs: Vec<ScenarioConfig> = args
        .systems
        .iter()
        .map(|p| config_for(args, p, default_format))
        .collect();
    let jobs = args.jobs.max(1).min(configs.len().max(1));
    let mut results: Vec<Option<Result<RunArchive, Failure>>> = (0..configs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (chunk_configs, chunk_results) in configs
            .chunks(configs.len().div_ceil(jobs).max(1))
            .zip(results.chunks_mut(configs.len().div_ceil(jobs).max(1)))
        {
            scope.spawn(move || {
                for (c, slot) in chunk_configs.iter().zip(chunk_results.iter_mut()) {
                    *slot = Some(run_one(c, args.timestamp));
                }
            });
        }
    });

    let many = configs.len() > 1;
    let mut all_passed = true;
    let mut first_failure = None;
    for (config, result) in configs.iter().zip(results) {
        let archive = match result.expect("every scenario ran") {
            Ok(a) => a,
            Err(f) => {
                eprintln!("error: {:#}", f.error);
                first_failure.get_or_insert(f.code);
                continue;
            }
        };
        all_passed &= archive.passed();
        let rendered = emit_section(&archive, section, config.format);
        match (&config.out, many) {
            (None, _) => print!("{rendered}"),
            (Some(out), false) if !out.is_dir() => write_file(out, &rendered)?,
            (Some(dir), _) => {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))
                    .map_err(|e| Failure::new(EXIT_INPUT, e))?;
                let name = format!(
                    "{}.archive.{}",
                    stem(&config.system_path),
                    extension(config.format)
                );
                write_file(&dir.join(name), &rendered)?;
            }
        }
    }
    if let Some(code) = first_failure {
        return Err(Failure::new(code, anyhow!("one or more scenarios failed")));
    }
    Ok(all_passed)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|e| Failure::new(EXIT_INPUT, e))
}

fn validate(systems: &[PathBuf]) -> Result<bool, Failure> {
    let mut ok = true;
    for path in systems {
        match load_system_with_hash(path) {
            Ok(loaded) => {
                let s = &loaded.system;
                println!(
                    "{}: ok ({} model; {} buses, {} lines, {} generators, {} loads, {} contingencies)",
                    path.display(),
                    s.model_kind(),
                    s.buses.len(),
                    s.lines.len(),
                    s.generators.len(),
                    s.loads.len(),
                    s.contingencies.len()
                );
            }
            Err(e) => {
                ok = false;
                println!("{}: {e}", path.display());
            }
        }
    }
    if ok {
        Ok(true)
    } else {
        Err(Failure::new(EXIT_INPUT, anyhow!("validation failed")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate { systems } => validate(systems),
        Command::Run(a) => run_batch(a, Section::All, OutputFormat::Json),
        Command::Prices(a) => run_batch(a, Section::Prices, OutputFormat::Table),
        Command::Settle(a) => run_batch(a, Section::Settlement, OutputFormat::Table),
        Command::Verify(a) => run_batch(a, Section::Verdicts, OutputFormat::Table),
        Command::Compare(a) => run_batch(a, Section::Comparison, OutputFormat::Table),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verdict failure");
            ExitCode::from(EXIT_VERDICT)
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
