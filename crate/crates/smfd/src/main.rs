//! Thin command-line dispatcher over the library's `cli` module.

use clap::{Args, Parser, Subcommand};
use smfd::cli::{self, CliError, DegradeArgs, ForwardArgs, MetricsArgs, TrainSmokeArgs};
use smfd::nets::NetKind;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "smfd",
    version,
    about = "Semantic-mask face deblurring toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply the seeded degradation pipeline to a folder of PNGs.
    Degrade(DegradeCli),
    /// Compare two images (or label masks) and print a JSON metric report.
    Metrics(MetricsCli),
    /// Network tools: summaries, forward passes, smoke training.
    #[command(subcommand)]
    Net(NetCommand),
}

#[derive(Args)]
struct DegradeCli {
    /// Directory of input PNGs.
    #[arg(long)]
    input: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    output: PathBuf,
    /// Master seed; per-image seeds derive from it and the sorted index.
    #[arg(long)]
    seed: u64,
    /// Write a JSONL manifest (one record per image) here.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated odd kernel sizes overriding the default set.
    #[arg(long, value_delimiter = ',')]
    kernel_set: Option<Vec<usize>>,
    /// Cap on blur layers per image (1..=3).
    #[arg(long)]
    max_layers: Option<usize>,
}

#[derive(Args)]
struct MetricsCli {
    /// Reference image or mask.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Image or mask under test.
    #[arg(long)]
    test: PathBuf,
    /// Treat inputs as label masks with this class count (adds Dice/Jaccard).
    #[arg(long)]
    classes: Option<usize>,
    /// Bilinear-resize the test image to the reference extents first.
    #[arg(long)]
    resize: bool,
}

#[derive(Subcommand)]
enum NetCommand {
    /// Print parameter counts (with reference comparison) and stage shapes.
    Summary {
        /// mask-generator or smfd-unet.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one inference pass and write the output PNG.
    Forward {
        /// mask-generator or smfd-unet.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Merged-label mask PNG (required by smfd-unet with a mask branch).
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train at toy scale on synthetic pairs; write trace CSV + checkpoint.
    TrainSmoke {
        /// mask-generator or smfd-unet.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        steps: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn parse_kind(kind: &str) -> Result<NetKind, CliError> {
    kind.parse::<NetKind>()
        .map_err(|e| CliError::Input(e.to_string()))
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Degrade(args) => {
            let records = cli::cmd_degrade(&DegradeArgs {
                input: args.input,
                output: args.output,
                seed: args.seed,
                manifest: args.manifest,
                kernel_set: args.kernel_set,
                max_layers: args.max_layers,
            })?;
            eprintln!("degraded {} images", records.len());
            Ok(())
        }
        Command::Metrics(args) => {
            let report = cli::cmd_metrics(&MetricsArgs {
                reference: args.reference,
                test: args.test,
                classes: args.classes,
                resize: args.resize,
            })?;
            println!("{}", report.to_json());
            Ok(())
        }
        Command::Net(net) => match net {
            NetCommand::Summary { kind, config } => {
                let text = cli::cmd_net_summary(parse_kind(&kind)?, config.as_deref())?;
                print!("{text}");
                Ok(())
            }
            NetCommand::Forward {
                kind,
                config,
                weights,
                image,
                mask,
                out,
            } => cli::cmd_net_forward(&ForwardArgs {
                kind: parse_kind(&kind)?,
                config,
                weights,
                image,
                mask,
                out,
            }),
            NetCommand::TrainSmoke {
                kind,
                config,
                steps,
                seed,
                trace,
                checkpoint,
            } => {
                let (first, last) = cli::cmd_net_train_smoke(&TrainSmokeArgs {
                    kind: parse_kind(&kind)?,
                    config,
                    steps,
                    seed,
                    trace,
                    checkpoint,
                })?;
                eprintln!("loss {first:.6} -> {last:.6}");
                Ok(())
            }
        },
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
