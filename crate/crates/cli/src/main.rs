mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "unitail", version, about = "Quad detection, text and product-matching evaluation toolkit")]
struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, env = "UNITAIL_THREADS", default_value_t = 0)]
    threads: usize,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// COCO-style mAP for quad detections, with optional cross-domain g-mAP.
    EvalDet(EvalDetArgs),
    /// Precision, recall and hmean of text-region detections.
    EvalTextDet(EvalTextDetArgs),
    /// Normalized edit distance and word accuracy of recognized text.
    EvalTextRec(EvalTextRecArgs),
    /// Match query products against a gallery.
    Match(MatchArgs),
    /// Grid-search the text threshold and weight on labelled queries.
    Tune(TuneArgs),
    /// Density, scale, aspect and angle statistics of an annotation file.
    Stats(StatsArgs),
    /// Dump training targets for every image of an annotation file.
    Assign(AssignArgs),
    /// Quad non-maximum suppression over a detection file.
    Nms(NmsArgs),
    /// Warp quads of a raw RGB image into upright crops.
    Rectify(RectifyArgs),
}

#[derive(Args, Debug)]
pub struct EvalDetArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub det: PathBuf,
    /// Cross-domain annotations; needs --cross-det.
    #[arg(long, requires = "cross_det")]
    pub cross_gt: Option<PathBuf>,
    #[arg(long, requires = "cross_gt")]
    pub cross_det: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalTextDetArgs {
    /// OCR annotation file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Predicted regions: `[{"product_id", "quad"}]`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NedNorm {
    Max,
    Gt,
}

#[derive(Args, Debug)]
pub struct EvalTextRecArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Recognitions: `[{"product_id", "region", "transcription"}]`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Snap every prediction to its closest vocabulary word first.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = NedNorm::Max)]
    pub ned_norm: NedNorm,
}

#[derive(Args, Debug)]
pub struct FeatureArgs {
    /// Gallery feature file.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Product to category map for the gallery; defaults to the product ids.
    #[arg(long)]
    pub gallery_labels: Option<PathBuf>,
    /// Query feature file.
    #[arg(long)]
    pub queries: PathBuf,
    /// Use features as stored, without adding positional encodings.
    #[arg(long)]
    pub no_pe: bool,
    /// Divide textual similarity by the shorter sequence length.
    #[arg(long)]
    pub normalize_text: bool,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Ground-truth categories of the queries; enables the accuracy field.
    #[arg(long)]
    pub query_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    #[arg(long, default_value_t = 0.0)]
    pub w: f64,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub query_labels: PathBuf,
    /// Comma-separated threshold values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub t_grid: Vec<f64>,
    /// Comma-separated weight values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub w_grid: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Args, Debug)]
pub struct AssignArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Shrink ratio toward the gravity center.
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub min_level: i32,
    #[arg(long, default_value_t = 7)]
    pub max_level: i32,
    #[arg(long, default_value_t = 5)]
    pub l_org: i32,
    #[arg(long, default_value_t = 224.0)]
    pub pretrain_size: f64,
    /// Skip ground truths flagged ignore.
    #[arg(long)]
    pub skip_ignored: bool,
}

#[derive(Args, Debug)]
pub struct NmsArgs {
    #[arg(long)]
    pub det: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

#[derive(Args, Debug)]
pub struct RectifyArgs {
    /// JSON list of 8-number quads.
    #[arg(long)]
    pub quads: PathBuf,
    /// Raw row-major RGB8 image.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub crop_width: usize,
    #[arg(long)]
    pub crop_height: usize,
    /// Directory receiving `crop_<i>.rgb` files.
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    };

    match pool.install(|| commands::run(cli.command)) {
        Ok(value) => {
            let text = match cli.format {
                Format::Json => output::to_json(value),
                Format::Table => output::to_table(value),
            };
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
