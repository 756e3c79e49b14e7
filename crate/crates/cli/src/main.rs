use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vocaltrack_cli::commands::{eval, label, render, smooth, synth, train};
use vocaltrack_cli::config::{AudioSource, RunConfig};
use vocaltrack_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "vocaltrack", version, about = "Vocal tract keypoint tracking from real-time MRI")]
struct Cli {
    /// Overrides the seed of the run config or corpus spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run config for `train`, corpus spec for `synth`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a U-Net or fusion model.
    Train,
    /// Write a trajectory file for every clip of a manifest.
    Label {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Temporal filter sigma in frames; 0 disables smoothing.
        #[arg(long, default_value_t = 1.5)]
        smooth_sigma: f64,
        #[arg(long, value_enum, default_value_t = AudioSource::None)]
        audio: AudioSource,
        /// U-Net checkpoint feeding a fusion model.
        #[arg(long)]
        unet: Option<PathBuf>,
    },
    /// Compare predicted trajectories against references.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smooth a trajectory file or a directory of them.
    Smooth {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1.5)]
        sigma: f64,
    },
    /// Render keypoints over frames as a Y4M video.
    Render {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        a: PathBuf,
        /// Second trajectory, shown in a panel to the right.
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of clips, overriding the corpus spec.
        #[arg(long)]
        clips: Option<usize>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train => {
            let path = cli
                .config
                .ok_or_else(|| CliError::Usage("train needs --config <run.json>".into()))?;
            let mut cfg = RunConfig::load(&path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let s = train::run(&cfg, cli.workers)?;
            println!("checkpoint {}", s.checkpoint.display());
            if let Some(v) = s.final_val_loss {
                println!("final val loss {v:.6}");
            }
            if let Some(m) = &s.val_metrics {
                println!("val rmse {:.4} px", m.rmse);
            }
        }
        Command::Label {
            checkpoint,
            manifest,
            out,
            smooth_sigma,
            audio,
            unet,
        } => {
            let s = label::run(&label::LabelOptions {
                checkpoint,
                manifest,
                out_dir: out,
                smooth_sigma,
                audio,
                unet,
                workers: cli.workers,
            })?;
            let failed: Vec<String> = s
                .failures()
                .map(|c| format!("{}: {}", c.clip_id, c.error.as_deref().unwrap_or("")))
                .collect();
            println!("labeled {} frames at {:.1} frames/s", s.frames, s.frames_per_second);
            if !failed.is_empty() {
                return Err(CliError::Runtime(format!("{} clip(s) failed:\n{}", failed.len(), failed.join("\n"))));
            }
        }
        Command::Eval { pred, reference, out } => {
            let r = eval::run(&pred, &reference, out.as_deref())?;
            if out.is_some() {
                let pcc = r.corpus.pcc.map_or("n/a".to_string(), |p| format!("{p:.4}"));
                println!("rmse {:.4} l1 {:.4} pcc {pcc}", r.corpus.rmse, r.corpus.l1);
            }
        }
        Command::Smooth { input, output, sigma } => {
            let n = smooth::run(&input, &output, sigma)?;
            println!("smoothed {n} file(s)");
        }
        Command::Render { frames, a, b, out } => {
            let n = render::run(&frames, &a, b.as_deref(), &out)?;
            println!("wrote {n} frames to {}", out.display());
        }
        Command::Synth { out, clips } => {
            let mut spec = match &cli.config {
                Some(p) => synth::CorpusSpec::load(p)?,
                None => synth::CorpusSpec::default(),
            };
            if let Some(s) = cli.seed {
                spec.base_seed = s;
            }
            if let Some(n) = clips {
                spec.clips = n;
            }
            let s = synth::run(&spec, &out, cli.workers)?;
            println!("wrote {} clips, manifest {}", s.clips, s.manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
