//! `dragonfly-sim`: synthesize, localize, track and evaluate tag scenarios.

mod scenario_file;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dragonfly_core::baseline::{range_doppler_map, slow_time_localize};
use dragonfly_core::demos::{run_demo, DEMOS};
use dragonfly_core::io::{
    fmt9, read_frames, read_track_csv, read_truth_csv, write_detections_csv, write_elevation_csv,
    write_track_csv, write_truth_csv, FrameReader, FrameWriter,
};
use dragonfly_core::pipeline::{process_stream, truth_records, PipelineOutput};
use dragonfly_core::rfdesign::DesignFile;
use dragonfly_core::scenario::ModulationBand;
use dragonfly_core::synth::Synthesizer;
use dragonfly_core::tracker::error_report;
use dragonfly_core::Error;
use rayon::prelude::*;
use serde_json::json;

use scenario_file::ScenarioFile;

#[derive(Parser)]
#[command(name = "dragonfly-sim", version, about = "mmWave backscatter tag simulator and 3D localizer")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize IF frames and ground truth for a scenario.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect tags in a frame dump and write per-chirp detections.
    Localize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline on a frame dump, or on freshly synthesized frames.
    Track {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a track CSV against a truth CSV.
    Eval {
        #[arg(long)]
        track: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate lens geometry and link budget.
    Design {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Range-Doppler processing of a slow-time frame dump.
    Baseline {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Half-width of the Doppler search window around each tag (Hz).
        #[arg(long, default_value_t = 250.0)]
        window_hz: f64,
        #[arg(long, default_value_t = 10.0)]
        min_snr_db: f64,
    },
    /// Run a built-in scenario.
    Demo {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(DEMOS))]
        name: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = Result<T, Failure>;

fn report_failure(f: &Failure) {
    let msg = json!({ "error": { "kind": f.kind, "message": f.message } });
    eprintln!("{msg}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DRAGONFLY_SIM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_failure(&Failure {
                kind: "usage",
                message: e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or(""),
            });
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report_failure(&f);
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                kind: "usage",
                message: e.to_string(),
            })?;
    }
    match cli.command {
        Command::Synth { scenario, seed, out } => synth(&scenario, seed, out),
        Command::Localize { scenario, frames, out } => localize(&scenario, &frames, out),
        Command::Track {
            scenario,
            frames,
            seed,
            out,
        } => track(&scenario, frames.as_deref(), seed, out),
        Command::Eval { track, truth, out } => eval(&track, &truth, out),
        Command::Design { design, out } => design_cmd(&design, out),
        Command::Baseline {
            scenario,
            frames,
            out,
            window_hz,
            min_snr_db,
        } => baseline(&scenario, &frames, out, window_hz, min_snr_db),
        Command::Demo { name, seed, out } => demo(&name, seed, out),
    }
}

fn out_dir(flag: Option<PathBuf>, sf: Option<&ScenarioFile>) -> CliResult<PathBuf> {
    let dir = flag
        .or_else(|| sf.and_then(|s| s.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    log::info!("writing {}", path.display());
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> CliResult<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn open_frames(path: &Path) -> CliResult<FrameReader<BufReader<File>>> {
    Ok(FrameReader::new(BufReader::new(File::open(path)?))?)
}

fn synth(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<()> {
    let sf = ScenarioFile::load(path)?;
    let dir = out_dir(out, Some(&sf))?;
    let cfg = sf.radar_config();
    let seed = seed.unwrap_or(sf.seed);
    let n = sf.chirp_count();
    let synth = Synthesizer::new(&cfg, &sf.scenario, seed)?;
    let mut frames = FrameWriter::new(create(&dir, "frames.bin")?, n)?;
    let chunk = sf.pipeline.chunk.max(1) as u64;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let batch = (start..end)
            .into_par_iter()
            .map(|k| synth.chirp(k))
            .collect::<Result<Vec<_>, _>>()?;
        for f in &batch {
            frames.write(f)?;
        }
        start = end;
    }
    frames.finish()?.flush()?;
    let mut truth = create(&dir, "truth.csv")?;
    write_truth_csv(&mut truth, &truth_records(&cfg, &sf.scenario, n)?)?;
    truth.flush()?;
    log::info!("synthesized {n} chirps with seed {seed}");
    Ok(())
}

fn localize(path: &Path, frames: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let sf = ScenarioFile::load(path)?;
    let dir = out_dir(out, Some(&sf))?;
    let output = process_stream(&sf.radar_config(), &sf.scenario, open_frames(frames)?, &sf.pipeline)?;
    let mut w = create(&dir, "detections.csv")?;
    write_detections_csv(&mut w, &output.detections())?;
    w.flush()?;
    Ok(())
}

fn write_outputs(dir: &Path, output: &PipelineOutput) -> CliResult<()> {
    let mut w = create(dir, "detections.csv")?;
    write_detections_csv(&mut w, &output.detections())?;
    w.flush()?;
    let mut w = create(dir, "elevation.csv")?;
    write_elevation_csv(&mut w, &output.elevations())?;
    w.flush()?;
    let mut w = create(dir, "track.csv")?;
    write_track_csv(&mut w, &output.track())?;
    w.flush()?;
    Ok(())
}

fn track(path: &Path, frames: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<()> {
    let sf = ScenarioFile::load(path)?;
    let dir = out_dir(out, Some(&sf))?;
    let cfg = sf.radar_config();
    let output = match frames {
        Some(f) => process_stream(&cfg, &sf.scenario, open_frames(f)?, &sf.pipeline)?,
        None => {
            let seed = seed.unwrap_or(sf.seed);
            dragonfly_core::pipeline::run_synthetic(&cfg, &sf.scenario, seed, sf.chirp_count(), &sf.pipeline)?
        }
    };
    write_outputs(&dir, &output)
}

fn eval(track: &Path, truth: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let track = read_track_csv(BufReader::new(File::open(track)?))?;
    let truth = read_truth_csv(BufReader::new(File::open(truth)?))?;
    let report = serde_json::to_value(error_report(&track, &truth)?)?;
    match out {
        Some(o) => {
            std::fs::create_dir_all(&o)?;
            write_json(&o, "report.json", &report)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn design_cmd(path: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let file = DesignFile::from_json_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Failure::from(Error::InvalidConfig(e.to_string())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let report = serde_json::to_value(file.evaluate(base)?)?;
    match out {
        Some(o) => {
            std::fs::create_dir_all(&o)?;
            write_json(&o, "design.json", &report)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn baseline(path: &Path, frames: &Path, out: Option<PathBuf>, window_hz: f64, min_snr_db: f64) -> CliResult<()> {
    let sf = ScenarioFile::load(path)?;
    let dir = out_dir(out, Some(&sf))?;
    let cfg = sf.radar_config();
    let frames = read_frames(BufReader::new(File::open(frames)?))?;
    let map = range_doppler_map(&cfg, &frames, frames.len())?;

    let mut w = create(&dir, "range_doppler.csv")?;
    writeln!(w, "doppler_hz,range_m,power_db")?;
    let power = map.power_map();
    for (d, row) in power.iter().enumerate() {
        let f = fmt9(map.doppler_hz(d));
        for (r, p) in row.iter().enumerate() {
            let db = 10.0 * p.max(f64::MIN_POSITIVE).log10();
            writeln!(w, "{f},{},{}", fmt9(r as f64 * map.range_bin_m), fmt9(db))?;
        }
    }
    w.flush()?;

    let peaks: Vec<_> = sf
        .scenario
        .tags
        .iter()
        .filter(|t| t.modulation_band == ModulationBand::SlowTime)
        .map(|t| match slow_time_localize(&map, t.f_m, window_hz, min_snr_db) {
            Ok(p) => json!({ "tag_id": t.tag_id, "peak": p }),
            Err(e) => json!({ "tag_id": t.tag_id, "error": { "kind": e.kind(), "message": e.to_string() } }),
        })
        .collect();
    write_json(&dir, "peaks.json", &json!({ "peaks": peaks }))
}

fn demo(name: &str, seed: u64, out: Option<PathBuf>) -> CliResult<()> {
    let dir = out_dir(out, None)?;
    let outcome = run_demo(name, seed)?;
    write_outputs(&dir, &outcome.output)?;
    let mut w = create(&dir, "truth.csv")?;
    write_truth_csv(&mut w, &outcome.truth)?;
    w.flush()?;
    write_json(&dir, "report.json", &outcome.report)
}
