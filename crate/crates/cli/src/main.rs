use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use srht::eval::{evaluate_to_dir, read_scores, write_scores};
use srht::io::load_samples;
use srht::methods::{Fit, Method, MethodSettings};
use srht::mp_kernel::{identity_mp_oracle, Tabulated};
use srht::rss::{load_rss, rss_experiment, RssExperimentConfig};
use srht::shrinkage::{FStarOracle, PriorMode, PriorSpec, FSTAR_GRID_POINTS};
use srht::sim::{simulate_to_dir, ExperimentConfig};
use srht::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "srht", version, about = "Shrinkage-regularized Hotelling T² detection experiments")]
struct Cli {
    /// Overrides the seed in the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trial-level parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a synthetic Monte-Carlo experiment.
    Simulate,
    /// Run the reference/test resampling experiment on an RSS series.
    Rss {
        #[arg(long)]
        data: PathBuf,
    },
    /// Write the shrinkage curve of one method for a sample CSV (rows are samples).
    Shrink {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "proposed")]
        shrinker: String,
        #[arg(long, default_value = "identity")]
        prior: String,
    },
    /// Build ROC curves and summary metrics from a scores table.
    Roc {
        #[arg(long)]
        scores: PathBuf,
    },
    /// Tabulate w, Hw, δ and f* for the identity-covariance model.
    Oracle {
        #[arg(long, default_value_t = 0.2)]
        phi: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
}

fn read_config(path: Option<&Path>) -> Result<Option<String>> {
    path.map(|p| {
        fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
    })
    .transpose()
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required for this command".into()))
}

fn simulate(cli: &Cli) -> Result<()> {
    let text = read_config(cli.config.as_deref())?
        .ok_or_else(|| Error::Config("simulate needs --config".into()))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = out_dir(cli)?;
    let records = simulate_to_dir(&cfg, out, cli.threads)?;
    info!("wrote {} scores to {}", records.len(), out.display());
    Ok(())
}

fn rss(cli: &Cli, data: &Path) -> Result<()> {
    let text = read_config(cli.config.as_deref())?
        .ok_or_else(|| Error::Config("rss needs --config".into()))?;
    let mut cfg = RssExperimentConfig::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let series = load_rss(data, cfg.channels)?;
    let out = out_dir(cli)?;
    let records = rss_experiment(&series, &cfg, cli.threads)?;
    fs::create_dir_all(out)?;
    write_scores(&records, &out.join("scores.csv"))?;
    fs::write(out.join("config_echo.toml"), cfg.to_toml()?)?;
    evaluate_to_dir(&records, out)?;
    info!("wrote {} scores to {}", records.len(), out.display());
    Ok(())
}

fn shrink(cli: &Cli, data: &Path, shrinker: &str, prior: &str) -> Result<()> {
    let method: Method = shrinker.parse()?;
    let mode: PriorMode = prior.parse()?;
    let x = load_samples(data)?;
    let fit = Fit::new(&x)?;
    let settings = MethodSettings {
        prior: PriorSpec { mode, scale: 1.0 },
        ..MethodSettings::default()
    };
    let curve = fit.shrinkage(method, &settings)?;
    let csv = curve.to_csv(fit.spectrum.eigenvalues())?;
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("shrinkage.csv"), csv)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn roc(cli: &Cli, scores: &Path) -> Result<()> {
    let records = read_scores(scores)?;
    let out = out_dir(cli)?;
    fs::create_dir_all(out)?;
    for row in evaluate_to_dir(&records, out)? {
        info!("{}: auc {}", row.method, row.auc);
    }
    Ok(())
}

fn oracle(cli: &Cli, phi: f64, points: usize) -> Result<()> {
    if points < 2 {
        return Err(Error::Config("--points must be at least 2".into()));
    }
    let oracle = identity_mp_oracle(phi)?;
    let (a, b) = oracle.support;
    let fstar = FStarOracle::new(&oracle, |_| 1.0, FSTAR_GRID_POINTS)?;
    // interior nodes only; f* is undefined at the support edges
    let grid = Tabulated::from_fn(a, b, points + 2, |_| 0.0);
    let mut csv = String::from("x,w,hw,delta,fstar\n");
    for k in 1..=points {
        let x = grid.node(k);
        let _ = writeln!(
            csv,
            "{x},{},{},{},{}",
            oracle.w(x),
            oracle.hw(x),
            oracle.delta(x),
            fstar.eval(x)?
        );
    }
    let out = out_dir(cli)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("oracle.csv"), csv)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Rss { data } => rss(cli, data),
        Command::Shrink {
            data,
            shrinker,
            prior,
        } => shrink(cli, data, shrinker, prior),
        Command::Roc { scores } => roc(cli, scores),
        Command::Oracle { phi, points } => oracle(cli, *phi, *points),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
