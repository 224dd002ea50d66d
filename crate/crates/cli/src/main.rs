use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tride_cli::ablate::{ablate, AblationGrid, AblationRequest};
use tride_cli::checkpoint;
use tride_cli::config::RunConfig;
use tride_cli::dataset::{self, Dataset, Split};
use tride_cli::eval::{self, check_compatible, evaluate, GroundTruth, Predictor};
use tride_cli::gradcheck::{self, Scope};
use tride_cli::train::{train, TrainRequest};
use tride_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "tride", version, about = "Image + radar + text depth estimation on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run config; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (scene files + manifest).
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_val: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        /// Normal, rainy, night probabilities, e.g. 0.7,0.15,0.15.
        #[arg(long, value_delimiter = ',')]
        weather_mix: Option<Vec<f64>>,
        /// Render each test layout under all three weathers.
        #[arg(long)]
        paired_test: bool,
    },
    /// Train a model; writes loss.csv and best/final checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Output directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint stem (e.g. runs/x/final).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides optim.steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Train on only the first N training scenes (overfitting check).
        #[arg(long)]
        limit: Option<usize>,
        /// Stop after this many total steps; resume later with --resume.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Metrics per distance cap and weather subset, as CSV.
    Eval {
        /// Checkpoint stem; not needed with --oracle.
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "50,70,80")]
        caps: String,
        #[arg(long, default_value = "all,normal,rainy,night")]
        subsets: String,
        /// Score the ground truth against itself.
        #[arg(long)]
        oracle: bool,
        #[arg(long, value_enum, default_value_t = GroundTruth::Dense)]
        gt: GroundTruth,
        /// CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every arm of a grid under several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// JSON grid: modalities, fusion, attention, dims, seeds.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks in 64-bit.
    Gradcheck {
        #[arg(long, value_enum, default_value_t = Scope::Primitives)]
        scope: Scope,
        /// Corrupt one primitive's backward rule (checker self-test).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            common,
            out,
            n_train,
            n_val,
            n_test,
            weather_mix,
            paired_test,
        } => {
            let mut cfg = common.load()?;
            let sizes = &mut cfg.dataset;
            sizes.n_train = n_train.unwrap_or(sizes.n_train);
            sizes.n_val = n_val.unwrap_or(sizes.n_val);
            sizes.n_test = n_test.unwrap_or(sizes.n_test);
            sizes.paired_test_weather |= paired_test;
            if let Some(m) = weather_mix {
                cfg.data.weather_mix = m
                    .try_into()
                    .map_err(|_| CliError::contract("--weather-mix needs three comma-separated values"))?;
            }
            let ds = dataset::generate(&out, cfg.seed, &cfg.data, &cfg.dataset)?;
            eprintln!("wrote {} scenes to {}", ds.entries.len(), out.display());
        }
        Command::Train {
            common,
            data,
            out,
            resume,
            steps,
            limit,
            stop_after,
        } => {
            let mut cfg = common.load()?;
            if let Some(s) = steps {
                cfg.optim.steps = s;
            }
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            cfg.out_dir = out.clone();
            let ds = Dataset::open(&data)?;
            let mut train_set = ds.load(Split::Train)?;
            if let Some(n) = limit {
                train_set.truncate(n);
            }
            let val = ds.load(Split::Val).unwrap_or_default();
            let mut stderr = std::io::stderr();
            let o = train(TrainRequest {
                config: &cfg,
                train: &train_set,
                val: &val,
                out_dir: &out,
                resume: resume.as_deref(),
                stop_after,
                progress: Some(&mut stderr),
            })?;
            eprintln!(
                "trained {} steps; final loss_depth {:.4}; best val MAE {}",
                o.steps,
                o.last.depth,
                o.best_val_mae.map_or("n/a".into(), |v| format!("{v:.4}"))
            );
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            caps,
            subsets,
            oracle,
            gt,
            out,
        } => {
            let ds = Dataset::open(&data)?;
            let scenes = ds.load(split.parse()?)?;
            let caps = eval::parse_caps(&caps)?;
            let subsets = eval::parse_subsets(&subsets)?;
            let loaded;
            let predictor = if oracle {
                Predictor::Oracle
            } else {
                let stem = checkpoint.as_deref().expect("clap requires --checkpoint");
                loaded = checkpoint::load(stem)?;
                check_compatible(&loaded.model, &ds)?;
                Predictor::Model(&loaded.model)
            };
            let e = evaluate(&predictor, &scenes, &caps, &subsets, gt)?;
            match out {
                Some(p) => eval::write_csv(&e, &p)?,
                None => print!("{}", e.to_csv()),
            }
            if let Some(acc) = e.weather_accuracy {
                eprintln!("weather top-1 accuracy {:.2}%", 100.0 * acc);
            }
        }
        Command::Ablate { common, grid, data, out } => {
            let cfg = common.load()?;
            let grid = AblationGrid::load(&grid)?;
            let ds = Dataset::open(&data)?;
            let (train_set, val, test) = (ds.load(Split::Train)?, ds.load(Split::Val)?, ds.load(Split::Test)?);
            let mut stderr = std::io::stderr();
            let report = ablate(AblationRequest {
                base: &cfg,
                grid: &grid,
                train: &train_set,
                val: &val,
                test: &test,
                out_dir: &out,
                progress: Some(&mut stderr),
            })?;
            let failed = report.runs.iter().filter(|r| r.result.is_err()).count();
            eprintln!(
                "{} runs ({failed} failed); wrote {}",
                report.runs.len(),
                Path::new(&out).join("ablation.csv").display()
            );
        }
        Command::Gradcheck { scope, inject_fault } => {
            let fault = inject_fault.as_deref().map(gradcheck::parse_fault).transpose()?;
            let summary = gradcheck::run(scope, fault);
            print!("{}", summary.render());
            summary.into_result()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
