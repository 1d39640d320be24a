//! `ssp`: generate the synthetic benchmark, train anchors and the query model, evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use ssp_core::{LossKind, SimilarityKind};

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "ssp", version, about = "Structure-similarity preserving query alignment on PQ anchors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat JSON experiment config; CLI flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed; stages use fixed offsets from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the mixture dataset and cache gallery-model embeddings.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        num_classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        input_dim: Option<usize>,
        #[arg(long)]
        embed_dim: Option<usize>,
        #[arg(long)]
        cluster_std: Option<f64>,
        #[arg(long)]
        anchor_size: Option<usize>,
        #[arg(long)]
        train_size: Option<usize>,
    },
    /// Train the product codebook on the anchor split.
    TrainCodebook {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of subspaces M.
        #[arg(long)]
        m: Option<usize>,
        /// Centroids per subspace K.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train the query encoder against the frozen gallery embeddings.
    TrainQuery {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "run/codebook.pqc")]
        codebook: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        #[arg(long)]
        tau_g: Option<f64>,
        #[arg(long)]
        tau_q: Option<f64>,
        #[arg(long, value_enum)]
        sim: Option<SimArg>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Write the initialized encoder without training it.
        #[arg(long)]
        init_only: bool,
    },
    /// Symmetric and asymmetric mAP reports, plus PQ and memory when a codebook is given.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "run/query.sspq")]
        checkpoint: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PQ-compressed retrieval mAP and memory across subspace counts.
    PqBench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated subspace counts.
        #[arg(long, value_delimiter = ',', default_value = "2,8,32")]
        m: Vec<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LossArg {
    Ssp,
    Reg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SimArg {
    Cosine,
    L2,
}

fn base_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SSP_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| ssp_core::Error::BadConfig(format!("SSP_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(ssp_core::Error::BadConfig("SSP_THREADS must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ssp_core::Error::BadConfig(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Gen {
            common,
            out,
            num_classes,
            per_class,
            input_dim,
            embed_dim,
            cluster_std,
            anchor_size,
            train_size,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.num_classes, num_classes);
            set(&mut cfg.per_class, per_class);
            set(&mut cfg.input_dim, input_dim);
            set(&mut cfg.embed_dim, embed_dim);
            set(&mut cfg.cluster_std, cluster_std);
            set(&mut cfg.anchor_size, anchor_size);
            set(&mut cfg.train_size, train_size);
            commands::gen(&cfg, &commands::default_out(out, "data"))
        }
        Command::TrainCodebook { common, data, out, m, k } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.subspaces, m);
            set(&mut cfg.centroids, k);
            commands::train_codebook(&cfg, &data, &commands::default_out(out, "run"))
        }
        Command::TrainQuery {
            common,
            data,
            codebook,
            out,
            loss,
            tau_g,
            tau_q,
            sim,
            epochs,
            lr,
            batch_size,
            init_only,
        } => {
            let mut cfg = base_config(&common)?;
            set(
                &mut cfg.loss,
                loss.map(|l| match l {
                    LossArg::Ssp => LossKind::Ssp,
                    LossArg::Reg => LossKind::Regression,
                }),
            );
            set(
                &mut cfg.similarity,
                sim.map(|s| match s {
                    SimArg::Cosine => SimilarityKind::Cosine,
                    SimArg::L2 => SimilarityKind::NegEuclidean,
                }),
            );
            set(&mut cfg.tau_g, tau_g);
            set(&mut cfg.tau_q, tau_q);
            set(&mut cfg.epochs, epochs);
            set(&mut cfg.learning_rate, lr);
            set(&mut cfg.batch_size, batch_size);
            commands::train_query(&cfg, &data, &codebook, &commands::default_out(out, "run"), init_only)
        }
        Command::Eval { common, data, checkpoint, codebook, out } => {
            base_config(&common)?;
            commands::eval(&data, &checkpoint, codebook.as_deref(), &commands::default_out(out, "run/eval"))
        }
        Command::PqBench { common, data, checkpoint, m, k, out } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.centroids, k);
            commands::pq_bench(&cfg, &data, checkpoint.as_deref(), &m, &commands::default_out(out, "run/pq_bench"))
        }
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain().find_map(|e| e.downcast_ref::<ssp_core::Error>().map(|e| e.kind())).unwrap_or("Error")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let report = json!({ "error": error_kind(&err), "message": format!("{err:#}") });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
