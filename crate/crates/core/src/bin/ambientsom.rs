use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ambientsom::harness::{
    final_checkpoint, load_sampler, resolve, run_pipeline, sample_generator, simulate_dataset, style_mix_grid,
    summarize_generator, summarize_truth, train_mode, Dataset, ExperimentConfig, StyleMixOptions,
};
use ambientsom::nets::checkpoint::write_atomic;
use ambientsom::training::TrainMode;
use ambientsom::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Learn stochastic object models from noisy measurements and evaluate them.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set train.max_steps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `train.max_steps`.
    #[arg(long)]
    steps: Option<u64>,
    /// Shorthand for `imaging.noise_std`.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Shorthand for `eval.samples`.
    #[arg(long)]
    samples: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.steps {
            overrides.push(format!("train.max_steps={s}"));
        }
        if let Some(s) = self.noise_std {
            overrides.push(format!("imaging.noise_std={s:?}"));
        }
        if let Some(s) = self.samples {
            overrides.push(format!("eval.samples={s}"));
        }
        ExperimentConfig::load(&self.config, &overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ambient,
    Baseline,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<TrainMode> {
        match self {
            ModeArg::Ambient => vec![TrainMode::Ambient],
            ModeArg::Baseline => vec![TrainMode::Baseline],
            ModeArg::Both => vec![TrainMode::Baseline, TrainMode::Ambient],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate objects, measurements and reconstructions into a dataset directory.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset; writes metrics and checkpoints under `<out>/<mode>`.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "ambient")]
        mode: ModeArg,
        /// Continue from this checkpoint directory (single mode only).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train every configured mode, then write the evaluation report.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw samples from a checkpoint into `samples.f32` plus `samples.json`.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slice FID of checkpoint samples against fresh ground-truth objects.
    EvalFid(EvalArgs),
    /// Hotelling SNR of checkpoint samples and of the ground-truth objects.
    EvalSnr(EvalArgs),
    /// Latents × noise-draws grid from a styled checkpoint.
    StyleMix {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        latents: usize,
        #[arg(long, default_value_t = 8)]
        noise: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        truncation: Option<f64>,
        /// Zero noise maps in every column.
        #[arg(long)]
        zero_noise: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint directories; defaults to the final checkpoints under `--run`.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    run: Option<PathBuf>,
}

impl EvalArgs {
    fn checkpoints(&self, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        if !self.checkpoint.is_empty() {
            return Ok(self.checkpoint.iter().map(|p| resolve(p)).collect());
        }
        let run = self
            .run
            .as_ref()
            .ok_or_else(|| Error::Config("give --checkpoint or --run".into()))?;
        Ok(cfg
            .eval
            .modes
            .iter()
            .map(|&m| final_checkpoint(&resolve(run), m))
            .collect())
    }
}

fn print(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn open_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<Dataset> {
    let ds = Dataset::open(&resolve(dir))?;
    ds.check_config(cfg)?;
    Ok(ds)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { cfg, out } => {
            let cfg = cfg.load()?;
            let sim = simulate_dataset(&cfg, &resolve(&out))?;
            print(&serde_json::to_value(&sim.manifest).expect("json"));
        }
        Command::Train {
            cfg,
            dataset,
            out,
            mode,
            resume,
        } => {
            let cfg = cfg.load()?;
            let ds = open_dataset(&cfg, &dataset)?;
            let modes = mode.modes();
            if resume.is_some() && modes.len() > 1 {
                return Err(Error::Config("--resume needs a single --mode".into()));
            }
            for m in modes {
                let t = train_mode(&cfg, &ds, &resolve(&out), m, resume.as_deref().map(resolve).as_deref())?;
                eprintln!("{m}: {} steps, {} images", t.state.step, t.state.images_seen);
            }
        }
        Command::Pipeline { cfg, dataset, out } => {
            let cfg = cfg.load()?;
            let report = run_pipeline(&cfg, &resolve(&dataset), &resolve(&out))?;
            print!("{}", report.table());
        }
        Command::Sample {
            checkpoint,
            count,
            seed,
            out,
        } => {
            let (ck, gs) = load_sampler(&resolve(&checkpoint))?;
            let samples = sample_generator(&gs, count, 64, seed)?;
            let out = resolve(&out);
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let raw: Vec<u8> = samples
                .iter()
                .flat_map(|f| f.values().iter())
                .flat_map(|&v| (v as f32).to_le_bytes())
                .collect();
            write_atomic(&out.join("samples.f32"), &raw)?;
            let meta = json!({
                "count": count,
                "shape": gs.output_shape(),
                "dtype": "float32",
                "endianness": "little",
                "seed": seed,
                "config_hash": ck.sidecar.config_hash,
            });
            write_atomic(&out.join("samples.json"), meta.to_string().as_bytes())?;
        }
        Command::EvalFid(args) => {
            let cfg = args.cfg.load()?;
            let ds = open_dataset(&cfg, &args.dataset)?;
            let truth = summarize_truth(&cfg, &ds)?;
            for ck in args.checkpoints(&cfg)? {
                let (_, gs) = load_sampler(&ck)?;
                let fid = summarize_generator(&cfg, &gs, &ds.manifest.signal)?.fid(&truth)?;
                print(&json!({ "checkpoint": ck, "fid": fid }));
            }
        }
        Command::EvalSnr(args) => {
            let cfg = args.cfg.load()?;
            let ds = open_dataset(&cfg, &args.dataset)?;
            let signal = &ds.manifest.signal;
            let truth_snr = summarize_truth(&cfg, &ds)?.snr()?;
            print(&json!({ "ground_truth": truth_snr, "signal": signal }));
            for ck in args.checkpoints(&cfg)? {
                let (_, gs) = load_sampler(&ck)?;
                let snr = summarize_generator(&cfg, &gs, signal)?.snr()?;
                print(&json!({ "checkpoint": ck, "snr": snr, "abs_error": (snr - truth_snr).abs() }));
            }
        }
        Command::StyleMix {
            checkpoint,
            latents,
            noise,
            seed,
            truncation,
            zero_noise,
            out,
        } => {
            let opts = StyleMixOptions {
                truncation,
                zero_noise,
                ..StyleMixOptions::new(latents, noise, seed)
            };
            let grid = style_mix_grid(&resolve(&checkpoint), &opts, &resolve(&out))?;
            print(&serde_json::to_value(&grid.meta).expect("json"));
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
