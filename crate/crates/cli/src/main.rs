//! `meshsplat`: build, train, render and serve mesh-embedded Gaussian avatars.

mod commands;
mod failure;
mod specs;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "meshsplat", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic head mesh plus rendered train/test sequences.
    Synth(SynthArgs),
    /// Train an avatar and write a bundle, a step log and metrics.
    Train(TrainArgs),
    /// Render a tracked sequence with its own cameras.
    Render(RenderArgs),
    /// Drive the avatar with another subject's sequence.
    Reenact(ReenactArgs),
    /// Render one expression from an orbit of cameras.
    NovelView(NovelViewArgs),
    /// Time the renderer on a bundle or on random scenes.
    Bench(BenchArgs),
    /// Run the live render service.
    Serve(ServeArgs),
    /// Talk to a running service.
    Remote(RemoteArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value_t = 20)]
    test_frames: usize,
    /// Frame size, WIDTHxHEIGHT.
    #[arg(long, default_value = "64x64")]
    size: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Icosphere subdivision level of the head.
    #[arg(long, default_value_t = 3)]
    subdivisions: u32,
    /// UV resolution of the ground-truth field.
    #[arg(long, default_value_t = 96)]
    gt_uv: u32,
    /// Strength of an expression-dependent displacement the mesh cannot express.
    #[arg(long, default_value_t = 0.0)]
    hidden_offset: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// TOML or JSON training config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory with mesh.json and train/sequence.jsonl (or sequence.jsonl).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resume from this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Total step count to reach; defaults to epochs x frames_per_epoch.
    #[arg(long)]
    steps: Option<u64>,
    /// Write checkpoint.bin every this many steps (0 disables).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// Use fixed-order reductions (always on; accepted for scripts).
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    /// Avatar bundle: a bundle.json or the directory containing one.
    #[arg(long, visible_alias = "bundle")]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Frame size, WIDTHxHEIGHT; defaults to the size recorded per frame, else 512x512.
    #[arg(long)]
    size: Option<String>,
    /// Also write exact float dumps (.msraw) next to the PNGs.
    #[arg(long)]
    raw: bool,
    /// Accepted for scripts; rendering is always deterministic.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[command(flatten)]
    output: OutputArgs,
    /// Tracked sequence (.jsonl).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct ReenactArgs {
    #[command(flatten)]
    output: OutputArgs,
    /// Foreign tracked sequence (.jsonl) supplying expression codes and cameras.
    #[arg(long)]
    data: PathBuf,
    /// Replace the foreign cameras: "radius,elev,azim-range,frames" (frames is ignored).
    #[arg(long)]
    orbit: Option<String>,
    #[arg(long, default_value_t = 40.0)]
    fov: f64,
}

#[derive(Args, Debug)]
struct NovelViewArgs {
    #[command(flatten)]
    output: OutputArgs,
    /// Inline JSON array, or a JSON file; zeros when omitted.
    #[arg(long)]
    psi_json: Option<String>,
    #[arg(long, default_value = "3.2,0,360,36")]
    orbit: String,
    #[arg(long, default_value_t = 40.0)]
    fov: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Bundle to time; random scenes when omitted.
    #[arg(long, visible_alias = "bundle")]
    checkpoint: Option<PathBuf>,
    /// Gaussian counts for random scenes.
    #[arg(long, value_delimiter = ',', default_value = "3348,13453,53678")]
    gaussians: Vec<usize>,
    #[arg(long, default_value = "512x512")]
    size: String,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Also time the naive reference renderer once per count.
    #[arg(long)]
    naive: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, visible_alias = "bundle", required_unless_present = "synthetic")]
    checkpoint: Option<PathBuf>,
    /// Serve the synthetic ground-truth head instead of a bundle.
    #[arg(long, conflicts_with = "checkpoint")]
    synthetic: bool,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "512x512")]
    size: String,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args, Debug)]
struct RemoteArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    url: String,
    #[command(subcommand)]
    action: RemoteAction,
}

#[derive(Subcommand, Debug)]
enum RemoteAction {
    Health,
    Layout,
    /// Render an orbit through the service into PNGs.
    Render {
        #[arg(long)]
        psi_json: Option<String>,
        #[arg(long, default_value = "3.2,0,0,1")]
        orbit: String,
        #[arg(long, default_value_t = 40.0)]
        fov: f64,
        #[arg(long)]
        size: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion)
                || matches!(e.kind(), ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand)
            {
                e.exit();
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ").to_owned();
            eprintln!("{}", Failure::usage(first).line());
            std::process::exit(2);
        }
    };
    if let Err(f) = commands::run(cli.command) {
        eprintln!("{}", f.line());
        std::process::exit(1);
    }
}
