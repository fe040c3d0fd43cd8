use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cmdp_core::envgen::{generate_env, EnvDocument, EnvParams};
use cmdp_core::harness::{
    emit_outputs, run_experiment, Algorithm, ExperimentConfig, ExperimentKind,
};
use cmdp_core::linear::{generate_linear_env, LinearEnvParams};
use cmdp_core::verify;

#[derive(Parser)]
#[command(
    name = "cmdp",
    version,
    about = "Regret experiments for causal MDP learners"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write regret.csv, summary.json and plot.svg.
    Run(RunArgs),
    /// Print a generated environment as JSON.
    GenEnv(GenEnvArgs),
    /// Run the invariant suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// exp1, exp2, exp3, linear or custom.
    #[arg(long)]
    experiment: Option<ExperimentKind>,
    /// TOML file with any subset of the config fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    ds: Option<usize>,
    #[arg(long = "H")]
    horizon: Option<usize>,
    #[arg(long = "K")]
    episodes: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Divide K and reps by this factor.
    #[arg(long)]
    scale: Option<usize>,
    /// Comma-separated algorithm ids.
    #[arg(long)]
    algos: Option<String>,
    #[arg(long)]
    bonus_scale: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct GenEnvArgs {
    /// Emit a causal linear environment instead of the intervention family.
    #[arg(long)]
    linear: bool,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    ds: usize,
    #[arg(long = "H", default_value_t = 5)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature dimension of a linear environment.
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long = "S", default_value_t = 6)]
    states: usize,
    #[arg(long = "A", default_value_t = 5)]
    actions: usize,
    #[arg(long = "Z", default_value_t = 3)]
    parents: usize,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Preset for the experiment, overlaid with the TOML file's keys.
fn base_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let Some(path) = &args.config else {
        return Ok(ExperimentConfig::preset(
            args.experiment.unwrap_or(ExperimentKind::Exp1),
        ));
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: toml::Table =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let kind = match (args.experiment, file.get("experiment")) {
        (Some(kind), _) => kind,
        (None, Some(value)) => value
            .as_str()
            .context("`experiment` must be a string")?
            .parse()?,
        (None, None) => ExperimentKind::Exp1,
    };
    let mut merged = toml::Table::try_from(ExperimentConfig::preset(kind))?;
    merged.extend(file);
    merged.insert("experiment".into(), kind.as_str().into());
    merged
        .try_into()
        .with_context(|| format!("invalid config in {}", path.display()))
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = base_config(args)?;
    if let Some(v) = args.m {
        cfg.m = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.ds {
        cfg.d_s = v;
    }
    if let Some(v) = args.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = args.episodes {
        cfg.episodes = v;
    }
    if let Some(v) = args.reps {
        cfg.reps = v;
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(list) = &args.algos {
        cfg.algos = Algorithm::parse_list(list)?;
    }
    if let Some(v) = args.bonus_scale {
        cfg.bonus_scale = v;
    }
    if let Some(v) = &args.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = args.jobs {
        cfg.jobs = v;
    }
    if let Some(scale) = args.scale {
        cfg = cfg.scaled(scale)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    eprintln!(
        "{}: K={} reps={} algos={}",
        cfg.experiment,
        cfg.episodes,
        cfg.reps,
        cfg.algos
            .iter()
            .map(|a| a.as_str())
            .collect::<Vec<_>>()
            .join(",")
    );
    let result = run_experiment(&cfg)?;
    let files = emit_outputs(&result, &cfg.out_dir)?;
    println!(
        "{:<10} {:>8} {:>14} {:>12}",
        "algo", "sweep", "final mean", "std"
    );
    for s in &result.series {
        let point = if s.sweep_key == "none" {
            "-".to_string()
        } else {
            format!("{}={}", s.sweep_key, s.sweep_value)
        };
        println!(
            "{:<10} {:>8} {:>14.3} {:>12.3}",
            s.algo.as_str(),
            point,
            s.final_mean,
            s.final_std
        );
    }
    println!("wrote {}", files.regret_csv.display());
    println!("wrote {}", files.summary_json.display());
    println!("wrote {}", files.plot_svg.display());
    Ok(())
}

fn gen_env(args: GenEnvArgs) -> Result<()> {
    let doc = if args.linear {
        let params = LinearEnvParams {
            dim: args.d,
            n_states: args.states,
            n_actions: args.actions,
            n_parent_vals: args.parents,
            horizon: args.horizon,
            seed: args.seed,
        };
        EnvDocument::linear(params, &generate_linear_env(&params)?)
    } else {
        let env = generate_env(&EnvParams {
            m: args.m,
            n: args.n,
            d_s: args.ds,
            horizon: args.horizon,
            seed: args.seed,
        })?;
        EnvDocument::factored(&env)
    };
    match args.out {
        Some(path) => doc.write(&path)?,
        None => {
            let mut text = doc.to_json();
            text.push('\n');
            let written = io::stdout().lock().write_all(text.as_bytes());
            match written {
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
                other => other.context("writing to stdout")?,
            }
        }
    }
    Ok(())
}

fn verify_all(seed: u64) -> Result<()> {
    let checks = verify::run_all(seed);
    for c in &checks {
        println!(
            "[{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::GenEnv(args) => gen_env(args),
        Command::Verify { seed } => verify_all(seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
