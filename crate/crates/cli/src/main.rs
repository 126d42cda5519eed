//! Command-line front end: `train`, `grid`, `verify`, `presets`.
//!
//! Exit status: 0 on success, 1 on error, 2 when a training run diverged.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use usac_core::harness::{self, presets, GridSpec, RunConfig, RunStatus, Trainer};
use usac_core::nn::Checkpoint;
use usac_core::verify;

const EXIT_DIVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "usac", version, about = "Utility soft actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single training run and write run.csv and summary.txt.
    Train(TrainArgs),
    /// Sweep (kappa_critic, kappa_actor) cells over several seeds.
    Grid(GridArgs),
    /// Run the built-in numerical self-checks.
    Verify,
    /// List shipped presets, or print one as TOML.
    Presets {
        /// Print this preset's full configuration.
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Args)]
struct Source {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset (see `usac presets`).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: Source,
    /// Override the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override total environment steps.
    #[arg(long)]
    total_steps: Option<u64>,
    /// Override the evaluation interval.
    #[arg(long)]
    eval_every: Option<u64>,
    /// Write 0 in the wall-clock column so repeated runs are byte-identical.
    #[arg(long)]
    no_wall_clock: bool,
    /// Output directory.
    #[arg(long, env = "USAC_OUT_DIR", default_value = "usac-out")]
    out_dir: PathBuf,
    /// Save a resumable run checkpoint here when the run ends.
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    /// Continue from a run checkpoint written by --checkpoint-out.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// TOML grid specification.
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Use the standard kappa grid over this preset's config and seeds.
    #[arg(long)]
    preset: Option<String>,
    /// Parallel runs.
    #[arg(long, env = "USAC_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Output directory.
    #[arg(long, env = "USAC_OUT_DIR", default_value = "usac-out")]
    out_dir: PathBuf,
}

fn load_config(source: &Source) -> anyhow::Result<RunConfig> {
    match (&source.config, &source.preset) {
        (Some(path), _) => RunConfig::load(path).with_context(|| format!("loading {}", path.display())),
        (None, Some(name)) => Ok(presets::find(name)?.config),
        (None, None) => bail!("give --config FILE or --preset NAME"),
    }
}

fn train(args: TrainArgs) -> anyhow::Result<ExitCode> {
    let mut config = load_config(&args.source)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.total_steps {
        config.total_steps = n;
    }
    if let Some(n) = args.eval_every {
        config.eval_every = n;
    }
    if args.no_wall_clock {
        config.record_wall_clock = false;
    }
    config.validate()?;

    let mut trainer = match &args.resume {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("reading {}", path.display()))?;
            Trainer::resume(config, &ck)?
        }
        None => Trainer::new(config)?,
    };
    let status = trainer.run()?;
    if let Some(path) = &args.checkpoint_out {
        trainer
            .checkpoint()
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let outcome = trainer.into_outcome(status);
    let files = harness::emit_run(&args.out_dir, &outcome)?;
    print!("{}", harness::run_summary_text(&outcome));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(match outcome.status {
        RunStatus::Completed => ExitCode::SUCCESS,
        RunStatus::Diverged { .. } => ExitCode::from(EXIT_DIVERGED),
    })
}

fn grid(args: GridArgs) -> anyhow::Result<ExitCode> {
    let spec = match (&args.spec, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            GridSpec::from_toml(&text)?
        }
        (None, Some(name)) => {
            let p = presets::find(name)?;
            GridSpec {
                seeds: p.seeds,
                base: p.config,
                ..GridSpec::default()
            }
        }
        (None, None) => bail!("give --spec FILE or --preset NAME"),
    };
    let result = harness::run_grid(&spec, args.workers)?;
    let files = harness::emit_grid(&args.out_dir, &spec, &result)?;
    print!("{}", harness::grid_summary_text(&spec, &result));
    for f in files.iter().rev().take(2) {
        println!("wrote {}", f.display());
    }
    let diverged: usize = result.cells.iter().map(|c| c.diverged).sum();
    Ok(if diverged > 0 {
        ExitCode::from(EXIT_DIVERGED)
    } else {
        ExitCode::SUCCESS
    })
}

fn run_verify() -> ExitCode {
    let reports = verify::run_all();
    let mut failed = 0;
    for r in &reports {
        println!("{} {:<28} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    println!("{} checks, {failed} failed", reports.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn list_presets(show: Option<String>) -> anyhow::Result<ExitCode> {
    match show {
        Some(name) => print!("{}", presets::find(&name)?.config.to_toml()),
        None => {
            for p in presets::all() {
                println!("{:<28} {}", p.name, p.description);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Grid(a) => grid(a),
        Command::Verify => Ok(run_verify()),
        Command::Presets { show } => list_presets(show),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
