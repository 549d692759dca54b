//! uqlite command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uqlite::commands::{
    self, AblateParams, BenchParams, CalibrateParams, CalibrationMethod, DecomposeParams,
    DemoParams, MetricsParams,
};
use uqlite::error::UqError;

#[derive(Parser)]
#[command(
    name = "uqlite",
    version,
    about = "Uncertainty-aware toy transformer: demo pipeline, metrics, calibrators, ablations, variance decomposition, benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Root seed; every command is deterministic given it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    vocab_size: usize,
    #[arg(long, default_value_t = 16)]
    seq_len: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// MC dropout probability.
    #[arg(long, default_value_t = 0.3)]
    dropout_p: f64,
    /// Number of MC samples M.
    #[arg(long, default_value_t = 10)]
    mc_samples: usize,
    /// Attention uncertainty-penalty strength.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Abstention threshold on normalized confidence.
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data, train the head, and score the deterministic
    /// baseline against the uncertainty pipeline.
    Demo {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 15)]
        bins: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 400)]
        n_train: usize,
        #[arg(long, default_value_t = 200)]
        n_val: usize,
        #[arg(long, default_value_t = 500)]
        n_test: usize,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 1.0)]
        lr: f64,
        /// Interpolate the test task toward a random one (0 = in-domain).
        #[arg(long, default_value_t = 0.0)]
        shift_magnitude: f64,
        /// Overlap of the last class pair (0 = separable, 1 = identical).
        #[arg(long, default_value_t = 0.0)]
        ambiguity: f64,
        /// Classes down-weighted in the training split.
        #[arg(long, value_delimiter = ',')]
        rare_classes: Vec<usize>,
    },
    /// Compute ECE/NLL/CUS/ZTI and a reliability table over a prediction log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 15)]
        bins: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.8)]
        tau: f64,
    },
    /// Fit a post-hoc calibrator on one log and apply it to another.
    Calibrate {
        /// msp | temperature | isotonic
        #[arg(long)]
        method: String,
        #[arg(long)]
        fit_log: PathBuf,
        #[arg(long)]
        apply_log: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 15)]
        bins: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.8)]
        tau: f64,
    },
    /// Sweep dropout and MC-sample grids; one metrics row per cell.
    Ablate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5")]
        dropout_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        mc_grid: Vec<usize>,
        #[arg(long, default_value = "ablation.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_train: usize,
        #[arg(long, default_value_t = 100)]
        n_test: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
    },
    /// Layer-wise variance decomposition with the law-of-total-variance check.
    Decompose {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 60)]
        n_outer: usize,
        #[arg(long, default_value_t = 60)]
        n_inner: usize,
        /// Explicit token sequence (comma-separated ids); generated if omitted.
        #[arg(long, value_delimiter = ',')]
        tokens: Vec<usize>,
    },
    /// Per-query latency across MC sample counts (single core).
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50")]
        mc_grid: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        repetitions: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
    },
}

fn run(cli: Cli) -> uqlite::Result<()> {
    match cli.command {
        Command::Demo {
            model,
            out_dir,
            bins,
            beta,
            n_train,
            n_val,
            n_test,
            epochs,
            lr,
            shift_magnitude,
            ambiguity,
            rare_classes,
        } => commands::cmd_demo(&DemoParams {
            seed: model.seed,
            out_dir,
            vocab_size: model.vocab_size,
            seq_len: model.seq_len,
            num_classes: model.classes,
            embed_dim: model.dim,
            num_layers: model.layers,
            dropout_p: model.dropout_p,
            mc_samples: model.mc_samples,
            lambda: model.lambda,
            tau: model.tau,
            bins,
            beta,
            n_train,
            n_val,
            n_test,
            epochs,
            lr,
            shift_magnitude,
            ambiguity,
            rare_classes,
        }),
        Command::Metrics {
            log,
            out_dir,
            bins,
            beta,
            tau,
        } => commands::cmd_metrics(&MetricsParams {
            log_path: log,
            out_dir,
            bins,
            beta,
            tau,
        }),
        Command::Calibrate {
            method,
            fit_log,
            apply_log,
            out_dir,
            bins,
            beta,
            tau,
        } => {
            let method: CalibrationMethod = method.parse()?;
            commands::cmd_calibrate(&CalibrateParams {
                method,
                fit_log,
                apply_log,
                out_dir,
                bins,
                beta,
                tau,
            })
        }
        Command::Ablate {
            model,
            dropout_grid,
            mc_grid,
            out,
            n_train,
            n_test,
            epochs,
        } => commands::cmd_ablate(&AblateParams {
            demo: DemoParams {
                seed: model.seed,
                vocab_size: model.vocab_size,
                seq_len: model.seq_len,
                num_classes: model.classes,
                embed_dim: model.dim,
                num_layers: model.layers,
                dropout_p: model.dropout_p,
                mc_samples: model.mc_samples,
                lambda: model.lambda,
                tau: model.tau,
                n_train,
                n_val: n_train.max(2) / 2,
                n_test,
                epochs,
                ..DemoParams::default()
            },
            dropout_grid,
            mc_grid,
            out_path: out,
        }),
        Command::Decompose {
            model,
            out_dir,
            n_outer,
            n_inner,
            tokens,
        } => commands::cmd_decompose(&DecomposeParams {
            seed: model.seed,
            out_dir,
            vocab_size: model.vocab_size,
            seq_len: model.seq_len,
            num_classes: model.classes,
            embed_dim: model.dim,
            num_layers: model.layers,
            dropout_p: model.dropout_p,
            mc_samples: model.mc_samples,
            lambda: model.lambda,
            n_outer,
            n_inner,
            tokens,
        }),
        Command::Bench {
            model,
            out,
            mc_grid,
            repetitions,
            warmup,
        } => commands::cmd_bench(&BenchParams {
            seed: model.seed,
            out_path: out,
            vocab_size: model.vocab_size,
            seq_len: model.seq_len,
            num_classes: model.classes,
            embed_dim: model.dim,
            num_layers: model.layers,
            dropout_p: model.dropout_p,
            lambda: model.lambda,
            mc_grid,
            repetitions,
            warmup,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; bad usage exits 1.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    // UQLITE_THREADS caps sampling parallelism; size the rayon pool to match.
    if let Ok(v) = std::env::var("UQLITE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2))
        }
    }
}

// Keep the binary honest about error-to-exit-code mapping.
#[allow(dead_code)]
fn exit_code_contract() {
    debug_assert_eq!(UqError::Usage(String::new()).exit_code(), 1);
    debug_assert_eq!(
        UqError::Schema {
            line: 0,
            msg: String::new()
        }
        .exit_code(),
        2
    );
    debug_assert_eq!(UqError::Invariant(String::new()).exit_code(), 3);
}
