//! `neuroco` command line: run experiments, verify invariants, inspect
//! artifacts.
//!
//! Exit codes: 0 success, 1 a hard check failed, 2 invalid config,
//! 3 numerical abort, 4 IO failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neuroco::container::Container;
use neuroco::harness::{
    check_regret_identity, execute, parse_trace, write_artifacts, ExperimentConfig, ExperimentKind,
    ExperimentResult,
};
use neuroco::Error;

#[derive(Parser)]
#[command(name = "neuroco", version, about = "Online learning with neural networks and episodic control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the experiment kind.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Run the invariant suite with the config's sizes and tolerances.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the metadata of a trace, metadata file or binary container.
    Inspect { artifact: PathBuf },
}

enum Failure {
    Error(Error),
    ChecksFailed,
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite { .. } => 3,
        Error::Io(_) | Error::Container(_) | Error::Json(_) => 4,
        _ => 2,
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    log::info!("loading config {}", path.display());
    ExperimentConfig::load(path)
}

fn report(cfg: &ExperimentConfig, result: &ExperimentResult, written: &[PathBuf]) {
    println!("experiment: {}", cfg.kind.name());
    println!("master seed: {}", cfg.seeds.master);
    if let Some(suite) = &result.suite {
        print!("{}", suite.summary_table());
        println!("suite: {}", if suite.pass() { "PASS" } else { "FAIL" });
    } else {
        println!("rounds: {}", result.trace.len());
        if let (Some(r), Some(a)) = (result.trace.final_regret(), result.trace.final_average_regret()) {
            println!("final regret: {r:.6e}");
            println!("average regret: {a:.6e}");
        }
        if let Some(c) = &result.comparator {
            println!(
                "comparator: {} ({}), total loss {:.6e}",
                c.kind.name(),
                if c.approximate { "approximate argmin" } else { "exact" },
                c.total
            );
        }
        if !result.bounds.is_empty() {
            let failed = result.bounds.iter().filter(|b| !b.pass()).count();
            println!("episode bound checks: {} of {} passed", result.bounds.len() - failed, result.bounds.len());
        }
    }
    for p in written {
        println!("wrote {}", p.display());
    }
}

fn execute_and_write(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let result = execute(cfg)?;
    let written = write_artifacts(cfg, &result, &cfg.output.dir)?;
    report(cfg, &result, &written);
    if result.checks_pass() {
        Ok(())
    } else {
        Err(Failure::ChecksFailed)
    }
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>, kind: Option<String>) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seeds.master = s;
    }
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    if let Some(k) = kind {
        cfg.kind = ExperimentKind::parse(&k)?;
    }
    execute_and_write(&cfg)
}

fn verify(config: &Path) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    cfg.kind = ExperimentKind::InvariantSuite;
    execute_and_write(&cfg)
}

fn inspect(path: &Path) -> Result<(), Failure> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "csv" => {
            // A malformed artifact is an unreadable file, not a bad config.
            let trace = parse_trace(&std::fs::read_to_string(path)?).map_err(|e| Error::Container(e.to_string()))?;
            println!("trace: {} rounds", trace.len());
            if let Some(last) = trace.last() {
                println!("cumulative loss: {:.6e}", last.cum_loss);
                println!("comparator cumulative loss: {:.6e}", last.comparator_cum_loss);
                println!("final regret: {:.6e}", last.regret);
                println!("average regret: {:.6e}", last.avg_regret);
            }
            let ok = check_regret_identity(&trace).is_ok();
            println!("regret identity: {}", if ok { "holds" } else { "VIOLATED" });
            if !ok {
                return Err(Failure::ChecksFailed);
            }
        }
        "json" => {
            let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            println!("{}", serde_json::to_string_pretty(&value)?);
        }
        _ => {
            let c = Container::load(path)?;
            println!("tag: {}", c.tag);
            for (k, v) in &c.fields {
                println!("{k}: {v}");
            }
            for (name, t) in &c.tensors {
                println!("tensor {name}: shape {:?}, norm {:.6e}", t.shape(), t.norm());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, seed, out, kind } => run(&config, seed, out, kind),
        Command::Verify { config } => verify(&config),
        Command::Inspect { artifact } => inspect(&artifact),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ChecksFailed) => {
            eprintln!("error: hard checks failed");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            match e.round() {
                Some(round) => eprintln!("error: numerical abort at round {round}: {e}"),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
