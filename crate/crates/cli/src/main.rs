//! `ttdf`: generate the synthetic corpus, train and evaluate the detector,
//! and dump motion diagnostics.

mod commands;
mod fail;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use fail::Failure;
use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "ttdf", version, about = "Body-forgery detection on a synthetic video corpus")]
struct Cli {
    /// Flat key = value file (one per line, # comments); flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true, env = "TTDF_THREADS", value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate real and forged videos, compress them and write a manifest.
    Gen(GenArgs),
    /// Train the detector on the Match subset of one compression level.
    Train(TrainArgs),
    /// Run the intra, cce and/or cme protocols and emit metric reports.
    Eval(EvalArgs),
    /// Write weight maps, flow pictures and motion-guided frames of a video.
    Flow(FlowArgs),
    /// Summarize metric CSVs and training logs.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Number of real-video pairs (at least 5).
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Corpus seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Frame side in pixels, a multiple of 8 [default: 64].
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Frames per video [default: 32].
    #[arg(long)]
    pub length: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// Frames per clip [default: 8].
    #[arg(long)]
    pub frames: Option<usize>,
    /// Patch side [default: 8].
    #[arg(long)]
    pub patch: Option<usize>,
    /// Token width [default: 64].
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Attention heads [default: 4].
    #[arg(long)]
    pub heads: Option<usize>,
    /// Space-time blocks [default: 2].
    #[arg(long)]
    pub st_blocks: Option<usize>,
    /// Comma-separated conv widths; the last equals embed-dim [default: 16,32,64].
    #[arg(long)]
    pub mg_channels: Option<String>,
    /// Hidden width of the motion head and feed-forward layers [default: 64].
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    /// full, st-only or mg-only [default: full].
    #[arg(long)]
    pub branches: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct OptimArgs {
    /// [default: 10]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 4]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f32>,
    /// Decoupled weight decay [default: 0].
    #[arg(long)]
    pub weight_decay: Option<f32>,
    /// Training seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validate every N steps; 0 validates at each epoch end [default: 0].
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Reweight the loss so both labels weigh the same (true/false) [default: true].
    #[arg(long)]
    pub class_balance: Option<bool>,
    /// Keep pair members adjacent within batches (true/false) [default: true].
    #[arg(long)]
    pub group_pairs: Option<bool>,
    /// Forged families to train on, comma separated [default: FAM-A,FAM-B,FAM-C].
    #[arg(long)]
    pub families: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct FlowOpts {
    /// Horn-Schunck smoothness weight [default: 1].
    #[arg(long)]
    pub alpha: Option<f32>,
    /// Horn-Schunck iterations [default: 100].
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Corpus directory (or its manifest.tsv).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory for last.ttck, best.ttck and train_log.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Compression level, c23 or c40 [default: c40].
    #[arg(long)]
    pub level: Option<String>,
    /// Clip starts per validation video [default: 4].
    #[arg(long)]
    pub eval_k: Option<usize>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub flow: FlowOpts,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Corpus directory (or its manifest.tsv).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Trained parameters; required for intra and cce.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// intra, cce, cme, a comma list, or all [default: intra].
    #[arg(long)]
    pub protocol: Option<String>,
    /// Compression level, c23 or c40 [default: c40].
    #[arg(long)]
    pub level: Option<String>,
    /// Clip starts per segment [default: 4].
    #[arg(long)]
    pub eval_k: Option<usize>,
    /// Longest test segment in frames [default: 29].
    #[arg(long)]
    pub max_segment: Option<usize>,
    /// CSV destination; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training options for cme, which trains one model per held-out family.
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub flow: FlowOpts,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    /// Video file (.ttdv).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub flow: FlowOpts,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Metric CSVs written by `eval` and/or train_log.csv files.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Gen(a) => commands::gen(&settings, a),
        Command::Train(a) => commands::train(&settings, a),
        Command::Eval(a) => commands::eval(&settings, a),
        Command::Flow(a) => commands::flow(&settings, a),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
