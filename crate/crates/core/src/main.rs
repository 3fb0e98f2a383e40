use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kinest::commands::{self, Common};
use kinest::io::seqfile::SeqKind;
use kinest::Result;

const EXIT_VALIDATION: u8 = 1;
const EXIT_PROPERTY: u8 = 2;

#[derive(Parser)]
#[command(name = "kinest", version, about = "Kinematics-guided state-space pose estimation toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Run configuration (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Weight checkpoint.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Skeleton file; the bundled SMPL neutral skeleton by default.
    #[arg(long, global = true)]
    skeleton: Option<PathBuf>,
    #[arg(long, global = true)]
    fps: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// SSD chunk length.
    #[arg(long, global = true)]
    chunk: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the index, FKS and UKS joint scan orders.
    Orders,
    /// Write a smooth synthetic sequence.
    GenSynthetic {
        #[arg(long, default_value_t = 96)]
        len: usize,
        /// sparse_input or pose.
        #[arg(long, default_value = "pose")]
        kind: SeqKind,
    },
    /// Run the network over a sparse_input file and write poses.
    Infer {
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare a predicted pose file with ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Run the cross-module property suite.
    Verify {
        /// Random SSD duality instances.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Comma-separated UKS order to test instead of the built-in one.
        #[arg(long, value_delimiter = ',')]
        uks_override: Option<Vec<usize>>,
    },
    /// Fit a micro-scale model to one pose sequence with SPSA.
    TrainMicro {
        /// Target pose file.
        #[arg(long)]
        data: PathBuf,
        /// Sparse input file; derived from the pose when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        /// Per-step loss trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Time the matrix form against the chunked scan.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = kinest::bench::DEFAULT_LENGTHS)]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        trials: usize,
    },
}

fn run(cli: &Cli) -> Result<(String, bool)> {
    let g = &cli.global;
    let common = Common {
        config: g.config.as_deref(),
        weights: g.weights.as_deref(),
        skeleton: g.skeleton.as_deref(),
        fps: g.fps,
        seed: g.seed,
        chunk: g.chunk,
        out: g.out.as_deref(),
    };
    Ok(match &cli.command {
        Command::Orders => (commands::orders(), true),
        Command::GenSynthetic { len, kind } => (commands::gen_synthetic_cmd(&common, *len, *kind)?, true),
        Command::Infer { input } => (commands::infer_cmd(&common, input)?, true),
        Command::Eval { pred, gt } => (commands::eval_cmd(&common, pred, gt)?.1, true),
        Command::Verify { trials, uks_override } => {
            let (checks, text) = commands::verify_cmd(&common, *trials, uks_override.clone());
            (text, checks.iter().all(|c| c.passed))
        }
        Command::TrainMicro { data, input, iters, trace } => (
            commands::train_cmd(&common, data, input.as_deref(), *iters, trace.as_deref())?.1,
            true,
        ),
        Command::Bench { lengths, trials } => (commands::bench_cmd(&common, lengths, *trials)?.1, true),
    })
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for property failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok((text, ok)) => {
            print!("{text}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_PROPERTY)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
