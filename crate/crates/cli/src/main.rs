//! Command-line entry point: train, eval, replay, oracle, dump-spectrogram,
//! and bench subcommands over the library harness.
//!
//! Exit codes: 0 success, 1 runtime failure or oracle mismatch, 2 usage,
//! 3 malformed config, 4 checkpoint problems, 5 I/O.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use echonav::acoustics::{compute_observation_audio, SoundBank};
use echonav::config::{RunConfig, ScenarioMode, SoundSetting, TaskKind};
use echonav::grid::{generate_map, AgentPose, Cell, GridMap, Heading, MapStyle};
use echonav::harness::{self, throughput::throughput_bench, HarnessError};

#[derive(Parser)]
#[command(name = "echonav", version, about = "Audio-goal navigation benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file (flat `key = value` or JSON). Defaults apply when
    /// omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs/out")]
    out: PathBuf,
    /// Task override.
    #[arg(long, value_parser = parse_task)]
    task: Option<TaskKind>,
    /// Scenario override.
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<ScenarioMode>,
    /// Sound split override.
    #[arg(long, value_parser = parse_sounds)]
    sounds: Option<SoundSetting>,
    /// Parallel environment lanes.
    #[arg(long)]
    num_envs: Option<usize>,
    /// Fixed map file (header line `resolution=<f>` plus ASCII grid).
    #[arg(long)]
    map: Option<PathBuf>,
    /// One fixed generated map: `<style>:<w>x<h>:<seed>`.
    #[arg(long)]
    gen: Option<String>,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    match s {
        "static" => Ok(TaskKind::Static),
        "dynamic" => Ok(TaskKind::Dynamic),
        other => Err(format!("unknown task {other:?} (static|dynamic)")),
    }
}

fn parse_scenario(s: &str) -> Result<ScenarioMode, String> {
    match s {
        "clean" => Ok(ScenarioMode::Clean),
        "complex" => Ok(ScenarioMode::Complex),
        other => Err(format!("unknown scenario {other:?} (clean|complex)")),
    }
}

fn parse_sounds(s: &str) -> Result<SoundSetting, String> {
    match s {
        "heard" => Ok(SoundSetting::Heard),
        "unheard" => Ok(SoundSetting::Unheard),
        other => Err(format!("unknown sounds setting {other:?} (heard|unheard)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO and write checkpoints plus stats.
    Train(ConfigArgs),
    /// Evaluate a checkpoint; writes the trajectory log and metric report.
    Eval {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render one logged episode to SVG (agent blue, source red, informed
    /// chaser green).
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        #[arg(long, default_value = "episode.svg")]
        out: PathBuf,
    },
    /// Cross-check a trajectory log against the brute-force metric
    /// implementations; nonzero exit on any mismatch.
    Oracle {
        #[arg(long)]
        log: PathBuf,
    },
    /// Dump one binaural spectrogram as binary floats plus a PGM image.
    DumpSpectrogram {
        /// Sound class id (0..102).
        #[arg(long, default_value_t = 0)]
        class: usize,
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
        /// Absolute sample offset into the class waveform.
        #[arg(long, default_value_t = 0)]
        t0: u64,
        /// Map file; a 9x9 open map when omitted.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Source cell `x,y`.
        #[arg(long, default_value = "4,4")]
        source: String,
        /// Listener pose `x,y,heading` (heading east|north|west|south).
        #[arg(long, default_value = "1,1,east")]
        listener: String,
        /// Output path prefix; writes `<out>.bin` and `<out>.pgm`.
        #[arg(long, default_value = "spectrogram")]
        out: PathBuf,
    },
    /// Measure environment stepping throughput.
    Bench {
        #[command(flatten)]
        common: ConfigArgs,
        /// Measurement window in seconds per mode.
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// Map error chains onto the documented exit codes.
fn classify(err: &anyhow::Error) -> u8 {
    if let Some(h) = err.downcast_ref::<HarnessError>() {
        return match h {
            HarnessError::Config(_) => 3,
            HarnessError::Checkpoint(_) => 4,
            HarnessError::Io(_) | HarnessError::BadLogLine(..) | HarnessError::EmptyLog => 5,
            HarnessError::OracleMismatch(_) => 1,
            _ => 1,
        };
    }
    if err.downcast_ref::<echonav::config::ConfigError>().is_some() {
        return 3;
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 5;
    }
    1
}

fn load_config(args: &ConfigArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(task) = args.task {
        cfg.task = task;
    }
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(s) = args.sounds {
        cfg.sounds = s;
    }
    if let Some(n) = args.num_envs {
        cfg.num_envs = n;
    }
    if let Some(map) = &args.map {
        cfg.map_file = Some(map.display().to_string());
    }
    if let Some(gen) = &args.gen {
        let map = parse_gen_spec(gen)?;
        let path = args.out.join("generated_map.txt");
        std::fs::create_dir_all(&args.out)?;
        std::fs::write(&path, map.to_map_file())?;
        cfg.map_file = Some(path.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `<style>:<w>x<h>:<seed>` -> one fixed generated map.
fn parse_gen_spec(spec: &str) -> anyhow::Result<GridMap> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        anyhow::bail!("--gen expects <style>:<w>x<h>:<seed>, got {spec:?}");
    }
    let style: MapStyle = parts[0].parse().map_err(|e: String| anyhow::anyhow!(e))?;
    let (w, h) = parts[1]
        .split_once('x')
        .ok_or_else(|| anyhow::anyhow!("--gen dimensions must be <w>x<h>"))?;
    let seed: u64 = parts[2].parse()?;
    Ok(generate_map(seed, w.parse()?, h.parse()?, style)?)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let cfg = load_config(&args)?;
            let artifacts = harness::run_train(&cfg, &args.out)?;
            println!(
                "trained {} updates, {} episodes, {} low-level steps",
                cfg.num_updates, artifacts.episodes_completed, artifacts.low_level_steps
            );
            println!("checkpoint: {}", artifacts.checkpoint_path.display());
            println!("stats:      {}", artifacts.stats_path.display());
            println!("log:        {}", artifacts.log_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let artifacts = harness::run_eval(&cfg, &checkpoint, &common.out)?;
            println!("{}", artifacts.report.to_table());
            println!("log: {}", artifacts.log_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { log, episode, out } => {
            let records = harness::read_log(&log)?;
            let rec = records.get(episode).ok_or_else(|| {
                anyhow::anyhow!("log has {} episodes, asked for {episode}", records.len())
            })?;
            let svg = harness::replay::episode_svg(rec)?;
            std::fs::write(&out, svg)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { log } => {
            let records = harness::read_log(&log)?;
            let report = harness::oracle_check(&records)?;
            println!("oracle check passed over {} episodes", records.len());
            println!("{}", report.to_table());
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpSpectrogram { class, sample_rate, t0, map, source, listener, out } => {
            let map = match map {
                Some(path) => GridMap::from_map_file(&std::fs::read_to_string(path)?)?,
                None => generate_map(0, 9, 9, MapStyle::Open)?,
            };
            let source = parse_cell(&source)?;
            let listener = parse_pose(&listener)?;
            let bank = Arc::new(SoundBank::new());
            let spec = compute_observation_audio(
                &bank,
                &map,
                &[(class, source, t0)],
                listener,
                sample_rate,
            )?;
            let bin_path = out.with_extension("bin");
            let pgm_path = out.with_extension("pgm");
            let mut bin = std::io::BufWriter::new(std::fs::File::create(&bin_path)?);
            spec.write_binary(&mut bin)?;
            let mut pgm = std::io::BufWriter::new(std::fs::File::create(&pgm_path)?);
            spec.write_pgm(&mut pgm)?;
            let (f, t, c) = spec.shape();
            println!("shape ({f}, {t}, {c})");
            println!("wrote {} and {}", bin_path.display(), pgm_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { common, duration } => {
            let cfg = load_config(&common)?;
            if duration <= 0.0 {
                anyhow::bail!("--duration must be positive");
            }
            let report = throughput_bench(&cfg, Duration::from_secs_f64(duration))?;
            let csv = report.to_csv();
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("throughput.csv");
            std::fs::write(&path, &csv)?;
            print!("{csv}");
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_cell(s: &str) -> anyhow::Result<Cell> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| anyhow::anyhow!("expected x,y got {s:?}"))?;
    Ok(Cell::new(x.trim().parse()?, y.trim().parse()?))
}

fn parse_pose(s: &str) -> anyhow::Result<AgentPose> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        anyhow::bail!("expected x,y,heading got {s:?}");
    }
    let heading = match parts[2] {
        "east" => Heading::East,
        "north" => Heading::North,
        "west" => Heading::West,
        "south" => Heading::South,
        other => anyhow::bail!("unknown heading {other:?}"),
    };
    Ok(AgentPose::new(Cell::new(parts[0].parse()?, parts[1].parse()?), heading))
}
