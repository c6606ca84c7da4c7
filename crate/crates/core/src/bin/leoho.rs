//! Command-line front end for the handover experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use toml::Value;

use leo_handover::expcli::{self, canonical_key, ExperimentSpec};
use leo_handover::{Error, Result};

#[derive(Parser)]
#[command(name = "leoho", version, about = "LEO satellite handover experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train (if needed) and evaluate one agent.
    Run(Common),
    /// Evaluate an agent without training; DHO needs --checkpoint.
    Eval(Common),
    /// Evaluate agents over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to sweep, e.g. rb_ratio, preamble_ratio, nu, J.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Comma-separated agents evaluated at every point.
        #[arg(long, value_delimiter = ',')]
        agents: Vec<String>,
    },
    /// Request/wait fractions of a DHO policy.
    Behavior(Common),
    /// Train one DHO agent per observation feature mask.
    Ablation(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    /// Spec file, or a preset name (case1..case4). Defaults to case1.
    #[arg(long)]
    spec: Option<String>,
    /// conventional | random | dho
    #[arg(long)]
    agent: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Training episodes.
    #[arg(long)]
    episodes: Option<u64>,
    /// Evaluation episodes.
    #[arg(long)]
    eval_episodes: Option<u64>,
    /// Output directory (default: output.dir, then $LEOHO_OUT_DIR, then ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    actors: Option<u64>,
    #[arg(long, value_enum)]
    vtrace: Option<Toggle>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    rb_ratio: Option<f64>,
    #[arg(long)]
    preamble_ratio: Option<f64>,
    /// Observation mask; a comma-separated list for `ablation`.
    #[arg(long)]
    mask: Option<String>,
    /// DHO checkpoint to load instead of training.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// sample | greedy
    #[arg(long)]
    mode: Option<String>,
}

impl Common {
    fn load(&self, ablation: bool) -> Result<ExperimentSpec> {
        let mut spec = match &self.spec {
            Some(s) => ExperimentSpec::load(s)?,
            None => ExperimentSpec::preset("case1")?,
        };
        let mut set = |key: &str, v: Value| spec.set(key, &v);
        if let Some(a) = &self.agent {
            set("agent.kind", Value::String(a.clone()))?;
        }
        if let Some(s) = self.seed {
            set("seed", Value::Integer(to_i64("seed", s)?))?;
        }
        if let Some(e) = self.episodes {
            set("train.episodes", Value::Integer(to_i64("train.episodes", e)?))?;
        }
        if let Some(e) = self.eval_episodes {
            set("eval.episodes", Value::Integer(to_i64("eval.episodes", e)?))?;
        }
        if let Some(a) = self.actors {
            set("train.actors", Value::Integer(to_i64("train.actors", a)?))?;
        }
        if let Some(t) = self.vtrace {
            set("train.vtrace", Value::Boolean(matches!(t, Toggle::On)))?;
        }
        if let Some(nu) = self.nu {
            set("scenario.nu", Value::Float(nu))?;
        }
        if let Some(r) = self.rb_ratio {
            set("scenario.rb_ratio", Value::Float(r))?;
        }
        if let Some(r) = self.preamble_ratio {
            set("scenario.preamble_ratio", Value::Float(r))?;
        }
        if let Some(m) = &self.mode {
            set("agent.mode", Value::String(m.clone()))?;
        }
        if let Some(c) = &self.checkpoint {
            set("agent.checkpoint", Value::String(c.to_string_lossy().into_owned()))?;
        }
        if let Some(m) = &self.mask {
            if ablation {
                let list = m.split(',').map(|s| Value::String(s.trim().to_string())).collect();
                set("ablation.masks", Value::Array(list))?;
            } else {
                set("scenario.mask", Value::String(m.clone()))?;
            }
        }
        Ok(spec)
    }
}

fn to_i64(field: &str, x: u64) -> Result<i64> {
    i64::try_from(x).map_err(|_| Error::config(field, "value too large"))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let spec = c.load(false)?;
            let out = spec.resolve_output_dir(c.out.as_deref());
            let rep = expcli::run(&spec, &out)?;
            print_row(&rep.row);
            println!("wrote {}", out.display());
        }
        Command::Eval(c) => {
            let spec = c.load(false)?;
            let out = spec.resolve_output_dir(c.out.as_deref());
            let rep = expcli::eval(&spec, &out)?;
            print_row(&rep.row);
            println!("wrote {}", out.display());
        }
        Command::Sweep {
            common,
            param,
            values,
            agents,
        } => {
            let mut spec = common.load(false)?;
            if let Some(p) = param {
                spec.set("sweep.parameter", &Value::String(canonical_key(&p)))?;
            }
            if !values.is_empty() {
                spec.set("sweep.values", &Value::Array(values.into_iter().map(Value::Float).collect()))?;
            }
            if !agents.is_empty() {
                spec.set("sweep.agents", &Value::Array(agents.into_iter().map(Value::String).collect()))?;
            }
            let out = spec.resolve_output_dir(common.out.as_deref());
            for row in expcli::sweep(&spec, &out)? {
                print_row(&row);
            }
            println!("wrote {}", out.join("sweep.csv").display());
        }
        Command::Behavior(c) => {
            let spec = c.load(false)?;
            let out = spec.resolve_output_dir(c.out.as_deref());
            let s = expcli::behavior(&spec, &out)?;
            println!(
                "decisions {}  request {:.4}  no-request {:.4}",
                s.decisions, s.request_fraction, s.no_request_fraction
            );
            println!("wrote {}", out.join("behavior.csv").display());
        }
        Command::Ablation(c) => {
            let spec = c.load(true)?;
            let out = spec.resolve_output_dir(c.out.as_deref());
            for r in expcli::ablation(&spec, &out)? {
                let last = r.curve.last().map_or(f64::NAN, |p| p.mean_return);
                println!(
                    "{:<20} final batch return {:>8.4}  eval return {:>8.4} ± {:.4}",
                    r.mask, last, r.summary.episode_return.mean, r.summary.episode_return.std
                );
            }
            println!("wrote {}", out.join("ablation_curves.csv").display());
        }
    }
    Ok(())
}

fn print_row(row: &expcli::SummaryRow) {
    let s = &row.summary;
    let point = match (&row.parameter, row.value) {
        (Some(p), Some(v)) => format!("{p}={v} "),
        _ => String::new(),
    };
    println!(
        "{point}{:<12} delay {:.4} ± {:.4}  collision {:.4} ± {:.4}  H {:.4}  return {:.4}{}",
        row.agent,
        s.sum_delay.mean,
        s.sum_delay.std,
        s.collision.mean,
        s.collision.std,
        s.ho_success.mean,
        s.episode_return.mean,
        if row.label.is_empty() { String::new() } else { format!("  [{}]", row.label) }
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
