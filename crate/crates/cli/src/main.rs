//! Command-line driver for synthetic scenes, cues, pose graphs, solvers and
//! evaluation.

mod bench;
mod commands;
mod io;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::io::Usage;

#[derive(Parser)]
#[command(
    name = "panograph",
    version,
    about = "Planar multi-panorama pose estimation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene of rooms and panoramas.
    Synth(SynthArgs),
    /// Synthesize boundary, correspondence and co-visibility cues for a cluster.
    Cues(CuesArgs),
    /// Build the pose graph of a cluster, optionally with noisy relative poses.
    Graph(GraphArgs),
    /// Estimate cluster poses from a pose graph.
    Solve(SolveArgs),
    /// Align solutions to ground truth and write a metrics CSV.
    Eval(EvalArgs),
    /// Run synth, graph, both solvers and evaluation over many clusters.
    Bench(BenchArgs),
    /// Finite-difference check of the loss gradients.
    LossCheck(LossCheckArgs),
    /// Run the reference message-passing pipeline on a pose graph.
    MpDemo(MpDemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Shape {
    Convex,
    Notched,
    /// Alternate convex and notched rooms.
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Method {
    Greedy,
    Pgo,
    MpDemo,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EdgeSet {
    #[value(name = "tree+1")]
    TreePlusOne,
    All,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub rooms: usize,
    #[arg(long)]
    pub panos_per_room: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "convex")]
    pub shape: Shape,
    /// Smallest room extent, meters.
    #[arg(long, default_value_t = 3.0)]
    pub min_size: f64,
    /// Largest room extent, meters.
    #[arg(long, default_value_t = 8.0)]
    pub max_size: f64,
    /// Minimum camera distance to walls, meters.
    #[arg(long, default_value_t = 0.2)]
    pub margin: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Selects a cluster either by index into the scene's clusters or by ids.
#[derive(Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, conflicts_with = "panos")]
    pub cluster: Option<usize>,
    /// Comma-separated panorama ids.
    #[arg(long, value_delimiter = ',')]
    pub panos: Option<Vec<String>>,
    /// Index of the origin within the cluster.
    #[arg(long, default_value_t = 0)]
    pub origin: usize,
    /// Panorama width in columns.
    #[arg(long, default_value_t = panograph::cues::DEFAULT_WIDTH)]
    pub width: usize,
}

#[derive(Args)]
pub struct CuesArgs {
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// Also write the flat binary form next to each JSON file.
    #[arg(long)]
    pub binary: bool,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Clone)]
pub struct NoiseArgs {
    /// Translation noise std-dev per component, meters.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_t: f64,
    /// Yaw noise std-dev, radians.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_theta: f64,
    /// Scale the noise of the least co-visible pair by this factor.
    #[arg(long)]
    pub outlier_factor: Option<f64>,
}

#[derive(Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct MpArgs {
    #[arg(long, default_value_t = panograph::message_passing::DEFAULT_LAYERS)]
    pub layers: usize,
    /// Node feature size.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Dense row width of the decoder.
    #[arg(long, default_value_t = 64)]
    pub dense_width: usize,
}

#[derive(Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, value_enum, default_value = "all")]
    pub pgo_edges: EdgeSet,
    /// Required for mp-demo.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub mp: MpArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// One or more solution files.
    #[arg(long, num_args = 1.., required = true)]
    pub poses: Vec<PathBuf>,
    /// Method label for the CSV.
    #[arg(long, default_value = "unknown")]
    pub method: String,
    /// Pool per-cluster means instead of per-panorama errors.
    #[arg(long)]
    pub per_cluster: bool,
    /// Co-visibility score below which a pair counts as weak.
    #[arg(long, default_value_t = panograph::graph::DEFAULT_CONNECTIVITY_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = panograph::cues::DEFAULT_WIDTH)]
    pub width: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub clusters: usize,
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    pub sizes: Vec<usize>,
    #[arg(long, value_enum, default_value = "mixed")]
    pub shape: Shape,
    #[arg(long, default_value_t = 0.1)]
    pub sigma_t: f64,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_theta: f64,
    /// Multipliers applied to both noise std-devs.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub noise_scales: Vec<f64>,
    #[arg(long)]
    pub outlier_factor: Option<f64>,
    #[arg(long, default_value_t = panograph::cues::DEFAULT_WIDTH)]
    pub width: usize,
    #[arg(long, value_enum, default_value = "all")]
    pub pgo_edges: EdgeSet,
    #[arg(long)]
    pub per_cluster: bool,
    /// Metrics CSV; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Top-down render of the first clusters.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub svg_panels: usize,
}

#[derive(Args)]
pub struct LossCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Cluster size of each random instance.
    #[arg(long, default_value_t = 4)]
    pub nodes: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = panograph::losses::gradcheck::DEFAULT_STEP)]
    pub step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Args)]
pub struct MpDemoArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub mp: MpArgs,
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("PANOGRAPH_THREADS") else {
        return Ok(());
    };
    let n: usize = match value.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return io::usage(format!(
                "PANOGRAPH_THREADS must be a positive integer, got '{value}'"
            ))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.downcast_ref::<Usage>().is_some()
            || e.downcast_ref::<panograph::Error>()
                .is_some_and(panograph::Error::is_usage)
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Cues(a) => commands::cues(&a),
        Command::Graph(a) => commands::graph(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => bench::run(&a),
        Command::LossCheck(a) => commands::loss_check(&a),
        Command::MpDemo(a) => commands::mp_demo(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
