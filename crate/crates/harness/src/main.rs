use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stgcn_core::{Checkpoint, Model, Partitions};
use stgcn_harness::{
    bench, evaluate, gradcheck, predict, read_sequence_file, resolve_topology, train,
    write_sequence_file, generate_synthetic, HarnessError, Result, RunConfig, SyntheticSpec,
};

#[derive(Parser)]
#[command(name = "stgcn", about = "Skeleton graph convolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print adjacency, subset masks and normalized matrices of a skeleton.
    Graph {
        /// Built-in name (ntu25, openpose18, chainN, starN) or topology file.
        topology: String,
        #[arg(long, default_value_t = 1)]
        hop: usize,
        /// Print the inter-frame partition instead of the spatial one.
        #[arg(long)]
        temporal: bool,
    },
    /// Write a synthetic sequence file.
    Gen {
        #[arg(long, default_value = "openpose18")]
        topology: String,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 2)]
        channels: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a model from a `key = value` config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Print class probabilities, one line per sample.
    Forward {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Top-1 / top-5 accuracy and confusion matrix.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Finite-difference check of every primitive and a small model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        primitive_tolerance: f64,
        #[arg(long, default_value_t = 1e-5)]
        model_tolerance: f64,
    },
    /// Time the spatial, inter-frame and temporal kernels.
    Bench {
        #[arg(long, default_value = "ntu25")]
        topology: String,
        #[arg(long, default_value_t = 64)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        channels: usize,
        #[arg(long, default_value_t = 9)]
        kernel_size: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
    },
}

fn load_model(path: &Path) -> Result<Model> {
    Ok(Model::from_checkpoint(&Checkpoint::load(path)?)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Graph {
            topology,
            hop,
            temporal,
        } => {
            let topo = resolve_topology(&topology)?;
            let parts = Partitions::build(&topo, hop, hop)?;
            let p = if temporal { &parts.temporal } else { &parts.spatial };
            let n = topo.joint_count();
            let mut adjacency = stgcn_core::Matrix::zeros(n, n);
            for &(i, j) in topo.bones() {
                adjacency.set(i, j, 1.0);
                adjacency.set(j, i, 1.0);
            }
            println!("# joints {n} cog {}", topo.cog());
            println!("# adjacency\n{adjacency}");
            for (k, (mask, norm)) in p.masks().iter().zip(p.normalized()).enumerate() {
                println!("# mask {k}\n{mask}");
                println!("# normalized {k}\n{norm}");
            }
        }
        Command::Gen {
            topology,
            classes,
            per_class,
            frames,
            channels,
            noise,
            seed,
            out,
        } => {
            let topo = resolve_topology(&topology)?;
            let spec = SyntheticSpec {
                class_count: classes,
                samples_per_class: per_class,
                frames,
                channels,
                noise_sigma: noise,
                seed,
            };
            let data = generate_synthetic(&topo, &spec)?;
            write_sequence_file(&out, &data)?;
            eprintln!("wrote {} samples to {}", data.len(), out.display());
        }
        Command::Train {
            config,
            seed,
            data,
            checkpoint,
            history,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|e| HarnessError::Io {
                path: config.clone(),
                source: e,
            })?;
            let mut cfg = RunConfig::parse(&text)?;
            if let Some(seed) = seed {
                cfg.train.seed = seed;
            }
            let data_path = data.or(cfg.data.clone()).ok_or_else(|| HarnessError::Config {
                line: 0,
                message: "no `data` path given".into(),
            })?;
            let ckpt_path = checkpoint.or(cfg.checkpoint.clone()).unwrap_or_else(|| "model.skpt".into());
            let history_path = history.or(cfg.history.clone());
            let topo = resolve_topology(&cfg.topology)?;
            let dataset = read_sequence_file(&data_path)?;
            let model_cfg = cfg.model.model_config(dataset.channels, dataset.class_count, cfg.train.seed);
            let mut model = Model::new(model_cfg, topo)?;
            let hist = train(&mut model, &dataset, &cfg.train)?;
            model.to_checkpoint().save(&ckpt_path)?;
            if let Some(path) = history_path {
                write_text(&path, &hist.to_csv())?;
            }
            if let Some(last) = hist.epochs.last() {
                eprintln!(
                    "epoch {} loss {:.6} train accuracy {:.4}",
                    last.epoch, last.mean_loss, last.train_accuracy
                );
            }
        }
        Command::Forward { checkpoint, data } => {
            let model = load_model(&checkpoint)?;
            let dataset = read_sequence_file(&data)?;
            for probs in predict(&model, &dataset)? {
                let line: Vec<String> = probs.iter().map(|p| format!("{p:.17e}")).collect();
                println!("{}", line.join(" "));
            }
        }
        Command::Eval { checkpoint, data } => {
            let model = load_model(&checkpoint)?;
            let dataset = read_sequence_file(&data)?;
            print!("{}", evaluate(&model, &dataset)?);
        }
        Command::Gradcheck {
            seed,
            primitive_tolerance,
            model_tolerance,
        } => {
            let mut cases = gradcheck::primitive_suite(seed, gradcheck::DEFAULT_STEP, primitive_tolerance)?;
            cases.push(gradcheck::model_check(seed, gradcheck::DEFAULT_STEP, model_tolerance)?);
            let mut ok = true;
            for case in &cases {
                let passed = case.report.passed();
                ok &= passed;
                println!(
                    "{} {:<24} max relative error {:.3e}",
                    if passed { "PASS" } else { "FAIL" },
                    case.name,
                    case.report.max_relative_error()
                );
            }
            return Ok(ok);
        }
        Command::Bench {
            topology,
            frames,
            channels,
            kernel_size,
            iterations,
        } => {
            let topo = resolve_topology(&topology)?;
            for r in bench::run(&topo, frames, channels, kernel_size, iterations)? {
                println!("{:<9} {:>12.3?} per call ({} calls)", r.kernel, r.mean, r.iterations);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
