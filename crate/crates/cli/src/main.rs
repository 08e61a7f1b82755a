use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ovtrack::config::PipelineConfig;
use ovtrack::io;
use ovtrack::metrics::{MetricsReport, SplitName};
use ovtrack::pipeline::{self, Models, SceneRole};
use ovtrack::simulator::Scene;

/// Open-vocabulary 3D multi-object tracking on simulated or recorded scenes.
#[derive(Parser)]
#[command(name = "ovtrack", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; `OVTRACK_<KEY>` environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Base/novel split: rare, urban or diverse.
    #[arg(long, global = true)]
    split: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Eval,
    Train,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes and write them as a dataset directory.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        /// Training and evaluation scenes use independent seeds.
        #[arg(long, value_enum, default_value_t = Role::Eval)]
        role: Role,
    },
    /// Fit the affinity and confidence models on base-class supervision.
    Train {
        /// Dataset directories with ground truth.
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        /// Directory for affinity.json and confidence.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Track, label and score every scene of a dataset.
    Track {
        #[arg(long)]
        data: PathBuf,
        /// Directory holding affinity.json / confidence.json, when the config uses them.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Output track file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a track file against a dataset's ground truth.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        /// Directory for metrics.json and metrics.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, train, track and evaluate in one run.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration as annotated TOML.
    Config {
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    if let Some(split) = &common.split {
        cfg.split = split.parse::<SplitName>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_data(dir: &Path) -> Result<Vec<Scene>> {
    io::read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))
}

fn require_gt(dir: &Path) -> Result<()> {
    if !dir.join(io::GT_FILE).is_file() {
        bail!("{} has no {}; ground truth is required", dir.display(), io::GT_FILE);
    }
    Ok(())
}

fn write_report(dir: &Path, report: &MetricsReport) -> Result<()> {
    io::write_json(&dir.join("metrics.json"), report)?;
    let path = dir.join("metrics.txt");
    std::fs::write(&path, report.to_table()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let pool = pipeline::thread_pool(cfg.jobs)?;
    match cli.command {
        Command::Simulate { out, scenes, role } => {
            let role = match role {
                Role::Eval => SceneRole::Eval,
                Role::Train => SceneRole::Train,
            };
            let generated = pipeline::simulate_scenes(&cfg, role, scenes, &pool)?;
            io::write_dataset(&out, &generated)?;
            for s in &generated {
                let gt: usize = s.frames.iter().map(|f| f.objects.len()).sum();
                let d3: usize = s.detections_3d.iter().map(Vec::len).sum();
                let d2: usize = s.detections_2d.iter().map(Vec::len).sum();
                println!("{}: {} frames, {gt} gt boxes, {d3} 3D detections, {d2} 2D detections", s.name, s.frames.len());
            }
        }
        Command::Train { data, out } => {
            let mut scenes = Vec::new();
            for dir in &data {
                require_gt(dir)?;
                scenes.extend(read_data(dir)?);
            }
            let trained = pipeline::train_models(&scenes, &cfg, &pool)?;
            io::write_json(&out.join(io::AFFINITY_MODEL_FILE), &trained.affinity)?;
            io::write_json(&out.join(io::CONFIDENCE_MODEL_FILE), &trained.confidence)?;
            if let Some(r) = &trained.affinity.training {
                eprintln!("affinity: {} train edges, holdout accuracy {:?}", r.n_train, r.holdout_accuracy);
            }
            if let Some(r) = &trained.confidence.training {
                eprintln!("confidence: {} train boxes, holdout mse {:?}", r.n_train, r.holdout_mse);
            }
        }
        Command::Track { data, models, out } => {
            let scenes = read_data(&data)?;
            let affinity = match (&models, cfg.affinity_model) {
                (Some(dir), ovtrack::config::AffinityKind::Learned) => Some(io::read_affinity_model(&dir.join(io::AFFINITY_MODEL_FILE))?),
                _ => None,
            };
            let confidence = match (&models, cfg.confidence_model) {
                (Some(dir), true) => Some(io::read_confidence_model(&dir.join(io::CONFIDENCE_MODEL_FILE))?),
                _ => None,
            };
            let models = Models::select(&cfg, affinity.as_ref(), confidence.as_ref())?;
            let tracks = pipeline::track_scenes(&scenes, &models, &cfg, &pool)?;
            io::write_tracks(&out, &tracks)?;
            eprintln!("{} track records from {} scenes", tracks.len(), scenes.len());
        }
        Command::Evaluate { data, tracks, out } => {
            require_gt(&data)?;
            let scenes = read_data(&data)?;
            let records = io::read_tracks(&tracks).with_context(|| format!("reading {}", tracks.display()))?;
            let report = pipeline::evaluate(&scenes, &records, &cfg, &pool)?;
            write_report(&out, &report)?;
            print!("{}", report.to_table());
        }
        Command::Pipeline { out } => {
            let result = pipeline::run_pipeline(&cfg, Some(&out))?;
            print!("{}", result.report.to_table());
        }
        Command::Config { out } => {
            let text = cfg.to_annotated_toml();
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
