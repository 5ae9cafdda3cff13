use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raman_chiral::scenario::{
    preset, run, run_preset, EvalMode, RunArtifact, RunMode, Scenario, ScenarioConfig, PRESET_NAMES,
};
use raman_chiral::Error;

/// Chiral Raman gain simulator: Λ-atom master equation, cascaded
/// waveguide propagation, spectra and fits.
#[derive(Parser)]
#[command(name = "raman-chiral", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-resolved transmission in both directions.
    Simulate(RunArgs),
    /// Quasi-steady-state transmission spectrum in both directions.
    Scan(RunArgs),
    /// Fit a measured or synthetic spectrum (CSV: delta_MHz, T[, sigma_T]).
    Fit {
        #[command(flatten)]
        args: RunArgs,
        /// Spectrum CSV; overrides io.fit_input.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run a named preset.
    Preset {
        /// Preset name (see --list).
        name: Option<String>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Scan evaluation: analytic or cascade.
        #[arg(long)]
        mode: Option<EvalMode>,
        /// List the presets and exit.
        #[arg(long)]
        list: bool,
        /// Print the preset's config(s) instead of running.
        #[arg(long)]
        emit_config: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (TOML) or a run manifest.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; overrides io.output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// simulate: dynamics or bidirectional; scan: analytic or cascade.
    #[arg(long)]
    mode: Option<String>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_OUTPUT: u8 = 1;

fn config_failure(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

/// Errors raised while running: bad inputs count as config errors.
fn run_failure(e: Error) -> Failure {
    let code = match &e {
        e if e.is_config_error() => EXIT_CONFIG,
        Error::FitInput(_) | Error::Csv(_) | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

fn output_failure(e: Error) -> Failure {
    Failure {
        code: EXIT_OUTPUT,
        message: format!("writing output: {e}"),
    }
}

fn read_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_toml_str(&src).map_err(config_failure)
}

/// Resolves `cfg`, taking a relative fit input relative to `base`.
fn resolve_at(cfg: &ScenarioConfig, base: Option<&Path>) -> Result<Scenario, Failure> {
    let mut sc = cfg.resolve().map_err(config_failure)?;
    if let (Some(input), Some(dir)) = (&sc.fit_input, base) {
        if input.is_relative() {
            sc.fit_input = Some(dir.join(input));
        }
    }
    Ok(sc)
}

fn write_artifact(art: &RunArtifact, out: &Path) -> Result<(), Failure> {
    let manifest = art.write(out).map_err(output_failure)?;
    eprintln!("wrote {} and {}", out.display(), manifest.display());
    for (k, v) in &art.manifest.manifest.results {
        println!("{k} = {v}");
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => {
            let mode = match a.mode.as_deref() {
                None => None,
                Some("dynamics") => Some(RunMode::Dynamics),
                Some("bidirectional") => Some(RunMode::Bidirectional),
                Some(other) => return Err(config_failure(format!("--mode `{other}`: expected dynamics or bidirectional"))),
            };
            let mut cfg = read_config(&a.config)?;
            cfg.run.mode = Some(match (mode, cfg.run.mode) {
                (Some(m), _) => m,
                (None, Some(RunMode::Bidirectional)) => RunMode::Bidirectional,
                _ => RunMode::Dynamics,
            });
            let sc = resolve_at(&cfg, a.config.parent())?;
            let art = run(&sc, "simulate").map_err(run_failure)?;
            write_artifact(&art, a.out.as_ref().unwrap_or(&sc.output))
        }
        Command::Scan(a) => {
            let eval = a
                .mode
                .as_deref()
                .map(|m| m.parse::<EvalMode>().map_err(|_| config_failure(format!("--mode `{m}`: expected analytic or cascade"))))
                .transpose()?;
            let mut cfg = read_config(&a.config)?;
            cfg.run.mode = Some(RunMode::Scan);
            if eval.is_some() {
                cfg.run.scan_mode = eval;
            }
            let sc = resolve_at(&cfg, a.config.parent())?;
            let art = run(&sc, "scan").map_err(run_failure)?;
            write_artifact(&art, a.out.as_ref().unwrap_or(&sc.output))
        }
        Command::Fit { args: a, input } => {
            if a.mode.is_some() {
                return Err(config_failure("--mode does not apply to fit"));
            }
            let mut cfg = read_config(&a.config)?;
            cfg.run.mode = Some(RunMode::Fit);
            if let Some(p) = &input {
                cfg.io.fit_input = Some(p.to_string_lossy().into_owned());
            }
            // a command-line input path is relative to the working directory
            let base = if input.is_some() { None } else { a.config.parent() };
            let sc = resolve_at(&cfg, base)?;
            let art = run(&sc, "fit").map_err(run_failure)?;
            write_artifact(&art, a.out.as_ref().unwrap_or(&sc.output))
        }
        Command::Preset {
            name,
            out,
            mode,
            list,
            emit_config,
        } => {
            if list {
                for n in PRESET_NAMES {
                    println!("{n}");
                }
                return Ok(());
            }
            let name = name.ok_or_else(|| config_failure("preset name required (see --list)"))?;
            if emit_config {
                for (run_name, cfg) in preset(&name).map_err(config_failure)? {
                    println!("# {run_name}\n{}", cfg.to_toml_string());
                }
                return Ok(());
            }
            let art = run_preset(&name, mode).map_err(run_failure)?;
            let written = art.write(&out).map_err(output_failure)?;
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            for (k, v) in &art.summary {
                println!("{k} = {v}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
