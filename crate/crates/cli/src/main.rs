//! `lstmc`: simulate, generate data, train, run and benchmark from one config.

mod commands;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lstmc_core::config::WorkbenchConfig;
use lstmc_core::controllers::ControllerKind;
use lstmc_core::datagen::WindowMode;
use lstmc_core::lstm::{Activation, CellKind, GradcheckSpec};
use lstmc_core::Error;

use workspace::{load_config, Layout};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Numerical(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    /// 2 configuration, 3 missing or unreadable dependency, 4 numerical failure.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 4,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::Schema(_) | Error::Incompatible(_) | Error::MissingTuning(_) => 2,
                Error::MissingArtifact { .. } | Error::Corrupt(_) => 3,
                Error::Domain(_) | Error::Divergence { .. } | Error::NonFinite { .. } | Error::Controller { .. } => 4,
                Error::Io(_) => 1,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lstmc", version, about = "Batch crystallizer control workbench")]
struct Cli {
    /// Workspace root holding configs/, datasets/, models/, runs/ and reports/.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,
    /// Overrides every rng seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for corpus generation and the benchmark fan-out.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Workbench TOML, or a manifest.json to replay. Default: configs/workbench.toml.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Surrogate,
    Controller,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ControllerArg {
    Lstmc,
    Mpc,
    Pi,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CellArg {
    Lstm,
    RnnTanh,
    RnnRelu,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write configs/workbench.toml with every default spelled out.
    Init {
        #[arg(long)]
        force: bool,
    },
    /// One open-loop batch under a jacket profile; writes a trace CSV.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// CSV with one jacket temperature (°C) per sampling interval.
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the corpus and write windowed, split, normalized datasets.
    Datagen {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// 7000 operating conditions instead of the configured count.
        #[arg(long)]
        full_scale: bool,
    },
    /// Train the surrogate or the controller network.
    Train {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One closed-loop batch with the chosen controller.
    Run {
        /// Workbench config whose [scenario] section is used.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        controller: ControllerArg,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        set_point_um: Option<f64>,
        /// Measurement noise bound as a fraction, e.g. 0.1.
        #[arg(long)]
        noise: Option<f64>,
        /// Also draw the mean-size trajectory as SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Set-point × noise × controller grid plus the mis-tuned PI case.
    Benchmark {
        /// Workbench config whose [benchmark] and [scenario] sections are used.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
    /// Finite-difference check of BPTT gradients on a random small network.
    Gradcheck {
        #[arg(long, value_enum, default_value = "lstm")]
        cell: CellArg,
        #[arg(long, value_delimiter = ',', default_value = "8,8")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        window: usize,
    },
}

fn resolve(layout: &Layout, path: Option<PathBuf>, seed: Option<u64>) -> Result<WorkbenchConfig, Error> {
    let cfg = load_config(&path.unwrap_or_else(|| layout.default_config()))?;
    Ok(match seed {
        Some(s) => cfg.reseeded(s),
        None => cfg,
    })
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let layout = Layout::new(&cli.root);
    match cli.command {
        Command::Init { force } => {
            let path = commands::init(&layout, force)?;
            println!("wrote {}", path.display());
        }
        Command::Simulate { config, profile, out } => {
            let cfg = resolve(&layout, config.config, cli.seed)?;
            let out = out.unwrap_or_else(|| layout.runs().join("simulate.csv"));
            commands::simulate(&cfg, &profile, &out)?;
        }
        Command::Datagen {
            config,
            out,
            full_scale,
        } => {
            let mut cfg = resolve(&layout, config.config, cli.seed)?;
            if full_scale {
                cfg.generation.n_conditions = 7000;
            }
            commands::datagen(&cfg, &out.unwrap_or_else(|| layout.default_dataset()))?;
        }
        Command::Train {
            mode,
            data,
            config,
            out,
        } => {
            let cfg = resolve(&layout, config.config, cli.seed)?;
            let mode = match mode {
                ModeArg::Surrogate => WindowMode::Surrogate,
                ModeArg::Controller => WindowMode::Controller,
            };
            let out = out.unwrap_or_else(|| commands::model_dir(&layout.models(), mode));
            commands::train_model(&cfg, mode, &data.unwrap_or_else(|| layout.default_dataset()), &out)?;
        }
        Command::Run {
            scenario,
            controller,
            models,
            out,
            set_point_um,
            noise,
            svg,
        } => {
            let mut cfg = resolve(&layout, scenario, cli.seed)?;
            if let Some(sp) = set_point_um {
                cfg.scenario.set_point_m = sp * 1e-6;
            }
            if let Some(n) = noise {
                cfg.scenario.noise_level = n;
            }
            cfg.validate()?;
            let kind = match controller {
                ControllerArg::Lstmc => ControllerKind::Lstmc,
                ControllerArg::Mpc => ControllerKind::Mpc,
                ControllerArg::Pi => ControllerKind::Pi,
            };
            let out = out.unwrap_or_else(|| {
                layout.runs().join(format!(
                    "{}_sp{:.0}_n{:.0}",
                    format!("{kind:?}").to_lowercase(),
                    cfg.scenario.set_point_m * 1e6,
                    cfg.scenario.noise_level * 100.0
                ))
            });
            commands::run(&cfg, kind, &models.unwrap_or_else(|| layout.models()), &out, svg)?;
        }
        Command::Benchmark { grid, models, out, svg } => {
            let cfg = resolve(&layout, grid, cli.seed)?;
            commands::benchmark(
                &cfg,
                &models.unwrap_or_else(|| layout.models()),
                &out.unwrap_or_else(|| layout.reports().join("benchmark")),
                svg,
            )?;
        }
        Command::Gradcheck { cell, hidden, window } => {
            let spec = GradcheckSpec {
                cell: match cell {
                    CellArg::Lstm => CellKind::Lstm,
                    CellArg::RnnTanh => CellKind::Rnn(Activation::Tanh),
                    CellArg::RnnRelu => CellKind::Rnn(Activation::Relu),
                },
                hidden_sizes: hidden,
                window,
                seed: cli.seed.unwrap_or(0),
                ..GradcheckSpec::default()
            };
            commands::gradcheck(&spec)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
