use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mockfn::config::{PolicyName, RunConfig};
use mockfn::run::{
    execute, make_runtime, metrics_bytes, read_run_log, replay, report, write_artifacts, RunError, RunManifest,
    LOG_FILE, METRICS_FILE,
};

#[derive(Parser, Debug)]
#[command(name = "mockfn", version, about = "Train and evaluate LLM-backed mock functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Extra reference material files.
    #[arg(long)]
    rag: Vec<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on the training split, then evaluate.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        context_length: Option<usize>,
        #[arg(long, value_enum)]
        policy: Option<PolicyName>,
        #[arg(long, value_enum)]
        script: Option<Toggle>,
    },
    /// Evaluate without training, optionally from saved memory and script.
    Eval {
        #[command(flatten)]
        common: Common,
        /// memory.json from an earlier run.
        #[arg(long)]
        memory: Option<PathBuf>,
        /// script.txt from an earlier run.
        #[arg(long)]
        script_file: Option<PathBuf>,
    },
    /// Print metrics and cost for a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Re-run a run directory against its logged replies and compare metrics.
    Replay {
        #[arg(long)]
        run: PathBuf,
        /// Log to replay; defaults to the run's own log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, RunError> {
    let mut config = RunConfig::load(&common.config)?;
    config.rag.extend(common.rag.iter().cloned());
    if let Some(out) = &common.output {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run_manifest(manifest: RunManifest) -> Result<(), RunError> {
    let plan = manifest.plan()?;
    let backend = manifest.config.build_backend()?;
    let runtime = make_runtime(manifest.config.runtime_kind());
    let out = execute(&plan, backend, runtime)?;
    let dir = &manifest.config.output_dir;
    write_artifacts(dir, &out)?;
    manifest.write(dir)?;
    print!("{}", report(dir)?);
    Ok(())
}

fn absolute(p: PathBuf) -> PathBuf {
    std::path::absolute(&p).unwrap_or(p)
}

fn main_inner(cli: Cli) -> Result<bool, RunError> {
    match cli.command {
        Command::Train {
            common,
            context_length,
            policy,
            script,
        } => {
            let mut config = load(&common)?;
            if let Some(l) = context_length {
                config.training.context_length = l;
            }
            if let Some(p) = policy {
                config.training.policy = p;
            }
            if let Some(s) = script {
                config.training.script = s == Toggle::On;
            }
            run_manifest(RunManifest {
                config,
                train: true,
                memory: None,
                script_file: None,
            })?;
            Ok(true)
        }
        Command::Eval {
            common,
            memory,
            script_file,
        } => {
            let config = load(&common)?;
            let manifest = RunManifest {
                config,
                train: false,
                memory: memory.map(absolute),
                script_file: script_file.map(absolute),
            };
            run_manifest(manifest)?;
            Ok(true)
        }
        Command::Report { run } => {
            print!("{}", report(&run)?);
            Ok(true)
        }
        Command::Replay { run, log, output } => {
            let manifest = RunManifest::load(&run)?;
            let records = read_run_log(&log.unwrap_or_else(|| run.join(LOG_FILE)))?;
            let out = replay(&manifest.plan()?, &records)?;
            let fresh = metrics_bytes(&out.metrics);
            if let Some(dir) = output {
                write_artifacts(&dir, &out)?;
            }
            let path = run.join(METRICS_FILE);
            let original = std::fs::read_to_string(&path).map_err(|source| RunError::Io { path, source })?;
            if original == fresh {
                println!("replay matches: metrics are byte-identical");
                Ok(true)
            } else {
                println!("replay differs\n--- recorded\n{original}--- replayed\n{fresh}");
                Ok(false)
            }
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
