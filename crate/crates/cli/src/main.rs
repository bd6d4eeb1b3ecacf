use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use topoconf_core::conformal::{monte_carlo_coverage, ScoreGenerator};
use topoconf_core::pipeline::{
    load_dataset, make_split, read_cache_hash_opt, run_featurize, run_predict, run_train, summarize, ExperimentConfig,
};
use topoconf_core::ARTIFACT_VERSION;

/// Exit code when the coverage check fails.
const EXIT_COVERAGE_FAIL: u8 = 6;

#[derive(Parser)]
#[command(name = "topoconf", version, about = "Topological conformal graph classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set conformal.alpha=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> topoconf_core::Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scores {
    Uniform,
    Softmax,
    Constant,
}

#[derive(Subcommand)]
enum Command {
    /// Compute persistence diagrams and images and write the feature cache.
    Featurize(ConfigArgs),
    /// Train the classifier on the cached features.
    Train(ConfigArgs),
    /// Build conformal prediction sets for the test graphs.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint to use instead of the one in the run directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Monte Carlo check of the marginal coverage guarantee.
    VerifyCoverage {
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Calibration set size.
        #[arg(short, long, default_value_t = 19)]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Scores::Uniform)]
        scores: Scores,
        /// Label count for `--scores softmax`.
        #[arg(long, default_value_t = 2)]
        classes: usize,
        /// Score value for `--scores constant`.
        #[arg(long, default_value_t = 0.5)]
        value: f64,
    },
    /// Show the resolved config, its hashes, dataset statistics and cache state.
    Info {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also print the resolved config as TOML.
        #[arg(long)]
        show_config: bool,
    },
}

fn featurize(args: &ConfigArgs) -> anyhow::Result<()> {
    let cfg = args.load()?;
    let out = run_featurize(&cfg)?;
    let verb = if out.recomputed { "wrote" } else { "up to date:" };
    println!("{verb} {} ({} graphs)", out.path.display(), out.graphs);
    Ok(())
}

fn train(args: &ConfigArgs) -> anyhow::Result<()> {
    let cfg = args.load()?;
    let out = run_train(&cfg)?;
    let best = &out.log.epochs[out.log.best_epoch];
    println!(
        "best epoch {}: valid loss {:.4}, valid acc {:.4}; train acc {:.4}",
        best.epoch, best.valid_loss, best.valid_acc, out.train_accuracy
    );
    println!("checkpoint {}", out.checkpoint.display());
    println!("log {}", out.log_path.display());
    Ok(())
}

fn predict(args: &ConfigArgs, checkpoint: Option<PathBuf>) -> anyhow::Result<()> {
    let cfg = args.load()?;
    for o in run_predict(&cfg, checkpoint.as_deref())? {
        let mode = if o.marginal { "marginal" } else { "conditional" };
        println!(
            "[{}] alpha={} mode={mode} k_nn={} coverage={:.4} avg_size={:.4}±{:.4} n_test={}",
            o.suffix,
            cfg.conformal.alpha,
            o.k_nn,
            o.metrics.coverage,
            o.metrics.avg_size,
            o.metrics.sd_size,
            o.metrics.n
        );
        println!("  results {}", o.results_path.display());
        println!("  metrics {}", o.metrics_path.display());
    }
    Ok(())
}

fn verify_coverage(alpha: f64, m: usize, trials: usize, seed: u64, generator: ScoreGenerator) -> anyhow::Result<bool> {
    let r = monte_carlo_coverage(generator, m, alpha, trials, seed)?;
    println!("alpha={} m={} trials={} seed={seed}", r.alpha, r.calib_size, r.trials);
    println!(
        "coverage={:.4} ci95=[{:.4}, {:.4}] half_width={:.4}",
        r.coverage, r.ci_low, r.ci_high, r.half_width
    );
    match r.upper_bound {
        Some(u) => println!("bounds=[{:.4}, {:.4}] avg_size={:.4}", r.lower_bound, u, r.avg_size),
        None => println!("bounds=[{:.4}, -] avg_size={:.4}", r.lower_bound, r.avg_size),
    }
    for n in &r.notes {
        println!("note: {n}");
    }
    println!("{}", if r.pass { "PASS" } else { "FAIL" });
    Ok(r.pass)
}

fn info(args: &ConfigArgs, show_config: bool) -> anyhow::Result<()> {
    let cfg = args.load()?;
    println!("version {ARTIFACT_VERSION}");
    println!("config_hash {}", cfg.config_hash());
    println!("feature_hash {}", cfg.feature_hash());
    let cache = cfg.cache_path();
    let state = match read_cache_hash_opt(&cache)? {
        Some(h) if h == cfg.feature_hash() => "present",
        Some(_) => "stale",
        None => "absent",
    };
    println!("cache {} ({state})", cache.display());
    let graphs = load_dataset(&cfg).context("loading dataset")?;
    let s = summarize(&graphs);
    println!(
        "dataset {}: {} graphs, {} classes {:?}, mean nodes {:.2}, mean edges {:.2}",
        cfg.dataset.name, s.graphs, s.classes, s.class_counts, s.mean_nodes, s.mean_edges
    );
    let split = make_split(&cfg, graphs.len())?;
    println!(
        "split train={} valid={} calib={} test={}",
        split.train.len(),
        split.valid.len(),
        split.calib.len(),
        split.test.len()
    );
    if show_config {
        print!("{}", cfg.to_toml_string()?);
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Featurize(a) => featurize(&a)?,
        Command::Train(a) => train(&a)?,
        Command::Predict { config, checkpoint } => predict(&config, checkpoint)?,
        Command::VerifyCoverage {
            alpha,
            m,
            trials,
            seed,
            scores,
            classes,
            value,
        } => {
            let generator = match scores {
                Scores::Uniform => ScoreGenerator::Uniform,
                Scores::Softmax => ScoreGenerator::Softmax { classes },
                Scores::Constant => ScoreGenerator::Constant { value },
            };
            return verify_coverage(alpha, m, trials, seed, generator);
        }
        Command::Info { config, show_config } => info(&config, show_config)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_COVERAGE_FAIL),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<topoconf_core::Error>())
                .map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
