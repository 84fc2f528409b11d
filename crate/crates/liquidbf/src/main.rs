//! Batch front-end over the library: scenario generation, training, the two
//! sweep protocols, codebook inspection, and result aggregation.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use liquidbf::harness::{
    gen_scenario_command, report_command, run_cee_sweep, run_power_sweep, train_command,
    AntennaKind, ExperimentConfig, Method,
};

#[derive(Parser)]
#[command(name = "liquidbf", version, about = "Hybrid beamforming sweeps at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Experiment configuration file (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed every named random stream derives from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Restrict the method list, e.g. --methods lnn,gd,mrt
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Restrict the antenna list, e.g. --antennas lc,isotropic
    #[arg(long, value_delimiter = ',')]
    antennas: Option<Vec<AntennaKind>>,
    /// Parallel sweep cells (1 = sequential; results are identical either way).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write the resolved config and per-seed synthetic path sets.
    GenScenario(CommonOpts),
    /// Train all learned (method, antenna) arms and persist checkpoints.
    Train(CommonOpts),
    /// Spectral efficiency versus transmit power at fixed estimation error.
    SweepPower(CommonOpts),
    /// Spectral efficiency versus estimation error at fixed transmit power.
    SweepCee(CommonOpts),
    /// Codebook utilities.
    Codebook {
        #[command(subcommand)]
        action: CodebookAction,
    },
    /// Aggregate result CSVs into a plot-ready table and summary JSON.
    Report {
        /// Result CSV files produced by the sweep commands.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CodebookAction {
    /// Dump per-pattern gains on a 0.5° azimuth grid as CSV.
    Dump {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(opts: &CommonOpts) -> liquidbf::Result<ExperimentConfig> {
    let base = match &opts.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.with_overrides(opts.methods.clone(), opts.antennas.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn run() -> liquidbf::Result<()> {
    match Cli::parse().command {
        Command::GenScenario(opts) => {
            let cfg = load_config(&opts)?;
            let written = gen_scenario_command(&cfg, opts.seed, &opts.out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        Command::Train(opts) => {
            let cfg = load_config(&opts)?;
            let ckpts = train_command(&cfg, opts.seed, &opts.out)?;
            for path in ckpts {
                println!("checkpoint {}", path.display());
            }
        }
        Command::SweepPower(opts) => {
            let cfg = load_config(&opts)?;
            let out = run_power_sweep(&cfg, opts.seed, &opts.out, opts.jobs)?;
            println!("{} rows -> {}", out.rows.len(), out.csv_path.display());
            println!("metrics -> {}", out.metrics_path.display());
        }
        Command::SweepCee(opts) => {
            let cfg = load_config(&opts)?;
            let out = run_cee_sweep(&cfg, opts.seed, &opts.out, opts.jobs)?;
            println!("{} rows -> {}", out.rows.len(), out.csv_path.display());
            println!("metrics -> {}", out.metrics_path.display());
        }
        Command::Codebook { action } => match action {
            CodebookAction::Dump { config, out } => {
                let cfg = match config {
                    Some(path) => ExperimentConfig::load(&path)?,
                    None => ExperimentConfig::default(),
                };
                let codebook = cfg.codebook.build_lc()?;
                std::fs::create_dir_all(&out)?;
                let path = out.join("codebook.csv");
                let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
                liquidbf::codebook::dump_codebook_csv(file, &codebook)?;
                println!("wrote {}", path.display());
            }
        },
        Command::Report { inputs, out } => {
            let (agg, summary) = report_command(&inputs, &out)?;
            println!("aggregate -> {}", agg.display());
            println!("summary -> {}", summary.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
