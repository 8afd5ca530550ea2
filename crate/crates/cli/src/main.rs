//! `helical`: run simulations of dipole-coupled emitter helices from a JSON
//! configuration.
//!
//! Exit codes: 0 on success, 1 when the configuration is invalid, 2 when a
//! run fails numerically or cannot write its output.

mod config;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use helical_core::Execution;
use serde_json::json;

use config::{parse_and_validate, Mode, Validated, ValidationErrors};
use output::OutputDir;
use run::{Context, RunError};

#[derive(Parser, Debug)]
#[command(name = "helical", version, about = "Chiral photon transport in emitter helices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `output_dir` from the config, else
    /// `runs/<config name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "HELICAL_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Also write the `J` and `Γ` matrices of the finite array.
    #[arg(long)]
    dump_matrices: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time evolution of a single excitation.
    Dynamics(RunArgs),
    /// Complex band structure of the infinite helix.
    Bands(RunArgs),
    /// Zak phases of the band groups.
    Zak(RunArgs),
    /// Emitted intensity maps.
    Field(RunArgs),
    /// Internal consistency checks.
    Check(RunArgs),
    /// Run whichever mode the configuration names.
    Run(RunArgs),
    /// Report every problem in a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Print the normalized configuration on success.
        #[arg(long)]
        canonical: bool,
    },
}

fn load(path: &Path) -> Result<Validated, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Validation(ValidationErrors(vec![format!("cannot read {}: {e}", path.display())])))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_and_validate(&text, base).map_err(RunError::Validation)
}

fn execution(threads: Option<u16>) -> (Execution, usize) {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            // a pool may already exist when embedded; keep it in that case
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global();
        }
        let n = rayon::current_num_threads();
        if n > 1 {
            (Execution::Parallel, n)
        } else {
            (Execution::Sequential, 1)
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        (Execution::Sequential, 1)
    }
}

fn out_dir(args: &RunArgs, validated: &Validated) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    if let Some(o) = &validated.config.output_dir {
        return PathBuf::from(o);
    }
    let stem = args
        .config
        .file_stem()
        .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
    Path::new("runs").join(stem)
}

fn execute(args: &RunArgs, expected: Option<Mode>) -> Result<(), RunError> {
    let validated = load(&args.config)?;
    if let Some(m) = expected {
        if validated.config.mode != m {
            return Err(RunError::Validation(ValidationErrors(vec![format!(
                "subcommand `{m}` does not match the configured mode `{}`",
                validated.config.mode
            )])));
        }
    }
    let (exec, threads) = execution(args.threads);
    let mut out = OutputDir::create(out_dir(args, &validated))?;
    out.json("config.json", &validated.config)?;
    let ctx = Context {
        validated: &validated,
        exec,
        dump_matrices: args.dump_matrices,
    };
    let start = Instant::now();
    let result = run::run_mode(&ctx, &mut out);
    let elapsed = start.elapsed().as_secs_f64();
    let (status, failure, diagnostics) = match &result {
        Ok(r) => (
            if r.failure.is_some() { "failed" } else { "ok" },
            r.failure.clone(),
            serde_json::Value::Object(r.diagnostics.clone()),
        ),
        Err(e) => ("failed", Some(e.to_string()), json!({})),
    };
    let mut outputs = out.written().to_vec();
    outputs.push("manifest.json".into());
    let manifest = json!({
        "engine": "helical",
        "engine_version": helical_core::VERSION,
        "mode": validated.config.mode,
        "label": validated.config.label,
        "config_path": args.config.display().to_string(),
        "config_hash": format!("sha256:{}", validated.config.hash()),
        "execution": exec,
        "threads": threads,
        "wall_seconds": elapsed,
        "status": status,
        "failure": failure,
        "outputs": outputs,
        "diagnostics": diagnostics,
    });
    out.json("manifest.json", &manifest)?;
    let report = result?;
    match report.failure {
        Some(f) => Err(RunError::Numerical(f)),
        None => {
            println!("{}: wrote {} files to {}", validated.config.mode, outputs.len(), out.root().display());
            Ok(())
        }
    }
}

fn validate(path: &Path, canonical: bool) -> Result<(), RunError> {
    let validated = load(path)?;
    if canonical {
        println!("{}", validated.config.to_pretty_json());
    } else {
        println!("{}: ok ({} mode, {} emitters)", path.display(), validated.config.mode, validated.geometry.n_sites());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; help and version are not
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Dynamics(a) => execute(a, Some(Mode::Dynamics)),
        Command::Bands(a) => execute(a, Some(Mode::Bands)),
        Command::Zak(a) => execute(a, Some(Mode::Zak)),
        Command::Field(a) => execute(a, Some(Mode::Field)),
        Command::Check(a) => execute(a, Some(Mode::Check)),
        Command::Run(a) => execute(a, None),
        Command::Validate { config, canonical } => validate(config, *canonical),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                RunError::Validation(errs) => {
                    for line in &errs.0 {
                        eprintln!("error: {line}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
