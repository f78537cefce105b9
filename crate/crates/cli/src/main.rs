use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bifstep_cli::commands::{cmd_bifurcation, cmd_bistability, cmd_flow_curve, cmd_stability, cmd_transient};
use bifstep_cli::{CliError, RunConfig};

/// Timestepper-based bifurcation analysis of slip flow, with CSV output.
#[derive(Parser)]
#[command(name = "bifstep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides, given as `--key value` pairs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Steady flow curve and its extrema.
    FlowCurve(Common),
    /// Leading eigenvalues at the steady state of `q`.
    Stability(Common),
    /// Time integration from the steady state of `q_init` at flow rate `q_run`.
    Transient(Common),
    /// Steady branch, Hopf points, cycle branches and the fold.
    Bifurcation(Common),
    /// Perturbations of the unstable cycle at `q_cycle` to `q_up` and `q_down`.
    Bistability(Common),
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&c.overrides)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::FlowCurve(c) => {
            let out = cmd_flow_curve(&load(&c)?)?;
            Ok(format!(
                "max (vw, q, sigma) = ({:.6}, {:.6}, {:.6}); min = ({:.6}, {:.6}, {:.6})",
                out.max.vw, out.max.q, out.max.sigma_w, out.min.vw, out.min.q, out.min.sigma_w
            ))
        }
        Command::Stability(c) => {
            let cfg = load(&c)?;
            let out = cmd_stability(&cfg)?;
            let l = out.report.leading();
            Ok(format!(
                "q = {}: leading lambda = {:.6} {:+.6}i, {}",
                cfg.q,
                l.re,
                l.im,
                if out.report.stable { "stable" } else { "unstable" }
            ))
        }
        Command::Transient(c) => {
            let out = cmd_transient(&load(&c)?)?;
            Ok(match &out.run.oscillation {
                Some(o) => format!(
                    "sustained oscillation: period {:.6}, -grad_p in [{:.6}, {:.6}]",
                    o.period,
                    o.troughs.iter().cloned().fold(f64::INFINITY, f64::min),
                    o.peaks.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                ),
                None => "no sustained oscillation".to_string(),
            })
        }
        Command::Bifurcation(c) => {
            let out = cmd_bifurcation(&load(&c)?)?;
            let mut s = String::new();
            for h in &out.hopf {
                s += &format!(
                    "hopf q = {:.6}, omega = {:.4}, -F' = {:.4}\n",
                    h.q_c, h.omega, -h.fprime_star
                );
            }
            if let Some(f) = &out.branch.fold {
                s += &format!("fold q = {:.6}", f.q_fold);
            }
            Ok(s)
        }
        Command::Bistability(c) => {
            let out = cmd_bistability(&load(&c)?)?;
            Ok(format!("up: {:?}, down: {:?}", out.up.0, out.down.0))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
