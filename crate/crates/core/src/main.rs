use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use transdim::config::PipelineConfig;
use transdim::pipeline::{self, Stage, StageError};

#[derive(Parser)]
#[command(
    name = "transdim",
    version,
    about = "Summarize variable-dimensional posteriors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration document; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides every stage seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the reversible-jump sampler on the configured observation.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Observation CSV (one value per line) instead of the synthetic scene.
        #[arg(long)]
        y: Option<PathBuf>,
    },
    /// Fit the summary model to a sample file.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: PathBuf,
    },
    /// Component table and intensities from samples, model and allocations.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        allocations: PathBuf,
    },
    /// All stages end to end.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        y: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<PipelineConfig, StageError> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path),
        None => Ok(PipelineConfig::default()),
    }
    .map_err(|source| StageError {
        stage: Stage::Config,
        source,
    })?;
    if let Some(seed) = common.seed {
        config = config.with_seed(seed);
    }
    Ok(config)
}

fn with_y(mut config: PipelineConfig, y: &Option<PathBuf>) -> PipelineConfig {
    if let Some(path) = y {
        config.scene.y_file = Some(path.clone());
    }
    config
}

fn run(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Sample { common, y } => {
            let config = with_y(load(&common)?, &y);
            let dir = pipeline::output_dir(common.out.as_deref(), &config);
            let run = pipeline::run_sample(&config, &dir)?;
            log::info!("{} draws written to {}", run.samples.len(), dir.display());
        }
        Command::Fit { common, samples } => {
            let config = load(&common)?;
            let dir = pipeline::output_dir(common.out.as_deref(), &config);
            let result = pipeline::run_fit(&samples, &config.sem, &dir)?;
            log::info!(
                "fitted {} components, eta={}",
                result.model.n_components(),
                result.model.eta
            );
        }
        Command::Report {
            common,
            samples,
            model,
            allocations,
        } => {
            let config = load(&common)?;
            let dir = pipeline::output_dir(common.out.as_deref(), &config);
            pipeline::run_report(
                &samples,
                &model,
                &allocations,
                &config.report,
                config.sem.s_min,
                &dir,
            )?;
        }
        Command::Pipeline { common, y } => {
            let config = with_y(load(&common)?, &y);
            let dir = pipeline::output_dir(common.out.as_deref(), &config);
            let out = pipeline::run_pipeline(&config, &dir)?;
            print_table(&out.reports.table, &dir);
        }
    }
    Ok(())
}

fn print_table(rows: &[transdim::report::SummaryRow], dir: &Path) {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    println!("component      mu       s      pi  mu_bms   s_bms");
    for r in rows {
        println!(
            "{:>9} {:>7} {:>7} {:>7} {:>7} {:>7}",
            r.component
                .map(|c| c.to_string())
                .unwrap_or_else(|| "-".into()),
            f(r.mu),
            f(r.s),
            f(r.pi),
            f(r.mu_bms),
            f(r.s_bms)
        );
    }
    println!("artifacts in {}", dir.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRANSDIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
