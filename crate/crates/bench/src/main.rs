use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fastnn::conv::dispatch::default_calibration_path;
use fastnn::conv::ConvBackend;
use fastnn_bench::experiment::{DESK_EPOCHS, DESK_SUBSET};
use fastnn_bench::{builtin_experiment, calibrate_heuristics, default_grid, emit_csv, run_experiment, CalibrateOptions, Model};

#[derive(Parser)]
#[command(name = "fastnn-bench", version, about = "Train the built-in networks and time them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment and report per-epoch timings.
    Run {
        name: String,
        #[arg(long, default_value_t = DESK_EPOCHS)]
        epochs: usize,
        /// Training samples to use; 0 for the whole set.
        #[arg(long, default_value_t = DESK_SUBSET)]
        subset: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Force a convolution backend (DirectValid, Im2colGemm, FftFull, PaddedValidFull).
        #[arg(long)]
        backend: Option<ConvBackend>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Published epoch count and the whole training set.
        #[arg(long, conflicts_with_all = ["epochs", "subset"])]
        full: bool,
    },
    /// Time every backend on a grid of shapes and write the dispatch table.
    Calibrate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// List the built-in experiments.
    List,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let threads = fastnn::config::init_thread_pool();
    match cli.command {
        Command::Run {
            name,
            epochs,
            subset,
            seed,
            backend,
            csv,
            full,
        } => {
            let mut cfg = builtin_experiment(&name)?;
            if !full {
                cfg.epochs = epochs;
                cfg.subset = (subset > 0).then_some(subset);
            }
            cfg.seed = seed;
            cfg.forced_backend = backend;
            #[cfg(feature = "download")]
            fetch_if_missing(cfg.dataset)?;
            eprintln!(
                "{}: {} epochs, subset {:?}, backend {}, {threads} threads",
                cfg.name(),
                cfg.epochs,
                cfg.subset,
                cfg.backend_tag()
            );
            let out = run_experiment(&cfg)?;
            for r in &out.records {
                println!(
                    "epoch {:>3}  {:>9.3}s  loss {:.5}  test accuracy {:.4}",
                    r.epoch,
                    r.seconds,
                    r.loss,
                    r.accuracy.unwrap_or(f64::NAN)
                );
            }
            if let Some(path) = csv {
                emit_csv(&out.records, &path).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Calibrate { out, reps } => {
            if reps == 0 {
                bail!("--reps must be at least 1");
            }
            let path = out.unwrap_or_else(default_calibration_path);
            let cal = calibrate_heuristics(&default_grid(), CalibrateOptions { reps, gemm: true })?;
            print!("{}", cal.winner_matrix());
            cal.write(&path).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        Command::List => {
            for m in Model::ALL {
                let c = builtin_experiment(m.name())?;
                println!(
                    "{:<12} {:?}, {} epochs, batch {}, lr {}, momentum {}",
                    m.name(),
                    c.dataset,
                    c.epochs,
                    c.batch_size,
                    c.lr,
                    c.momentum
                );
            }
        }
    }
    Ok(())
}

#[cfg(feature = "download")]
fn fetch_if_missing(kind: fastnn_bench::DatasetKind) -> anyhow::Result<()> {
    use fastnn::data::{data_dir, download, Split};
    let root = data_dir();
    match kind {
        fastnn_bench::DatasetKind::Mnist if fastnn::data::mnist_in(&root, Split::Test).is_err() => {
            download::fetch_mnist(&root)?
        }
        fastnn_bench::DatasetKind::Cifar10 if fastnn::data::cifar10_in(&root, Split::Test).is_err() => {
            download::fetch_cifar10(&root)?
        }
        _ => {}
    }
    Ok(())
}
