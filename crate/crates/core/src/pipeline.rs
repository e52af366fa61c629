//! End-to-end processing: frames → detections → elevation → 3D track.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chirp2d::{Detection, DetectorConfig, Localizer, TagChannel};
use crate::elevation::{ElevationConfig, ElevationEstimator, ElevationSample};
use crate::error::{Error, Result};
use crate::radar::RadarConfig;
use crate::scenario::{ModulationBand, Scenario};
use crate::synth::{IfFrame, Synthesizer, TruthRecord};
use crate::tracker::{assemble_track, channelize, TrackPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub elevation: ElevationConfig,
    /// Chirps synthesized and localized per parallel batch.
    pub chunk: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            elevation: ElevationConfig::default(),
            chunk: 256,
        }
    }
}

/// Search channels for every intra-chirp tag of `scenario`.
///
/// The half-width covers the largest beat frequency along the tag's path with
/// some margin, but never reaches past the midpoint to a neighbouring channel.
pub fn tag_channels(cfg: &RadarConfig, scenario: &Scenario) -> Result<Vec<(u32, TagChannel)>> {
    let tags: Vec<_> = scenario
        .tags
        .iter()
        .filter(|t| t.modulation_band == ModulationBand::IntraChirp)
        .collect();
    let margin = 4.0 * cfg.sample_rate / cfg.samples_per_chirp as f64;
    let mut out = Vec::with_capacity(tags.len());
    for t in &tags {
        let fb = cfg.beat_frequency(scenario.max_tag_range(t)?)?;
        let mut w = 1.25 * fb + margin;
        for o in &tags {
            if o.tag_id != t.tag_id {
                w = w.min(0.5 * (o.f_m - t.f_m).abs());
            }
        }
        w = w.min(t.f_m).min(cfg.sample_rate / 2.0 - t.f_m);
        out.push((t.tag_id, TagChannel::new(t.f_m, w)));
    }
    Ok(out)
}

/// Per-chirp detection outcome for every channel, in channel order.
#[derive(Debug)]
pub struct ChirpDetections {
    pub k: u64,
    pub results: Vec<std::result::Result<Detection, Error>>,
}

/// Localizes one frame and drops detections that the channel router flags
/// as collisions.
pub fn detect_frame(
    loc: &Localizer,
    frame: &IfFrame,
    channels: &[(u32, TagChannel)],
) -> Result<ChirpDetections> {
    let mut results = loc.localize(frame, channels)?;
    let present: Vec<usize> = (0..results.len()).filter(|&i| results[i].is_ok()).collect();
    if present.len() > 1 {
        let nominal: Vec<(u32, f64)> = channels.iter().map(|(id, c)| (*id, c.f_m)).collect();
        let centres: Vec<f64> = present
            .iter()
            .map(|&i| results[i].as_ref().expect("ok").f_center)
            .collect();
        let tol = channels.iter().map(|(_, c)| c.half_width).fold(f64::INFINITY, f64::min);
        let routing = channelize(&nominal, &centres, tol);
        for (j, &i) in present.iter().enumerate() {
            let id = channels[i].0;
            if routing.assigned.get(&id) != Some(&j) {
                results[i] = Err(Error::AmbiguousPair {
                    f_m: channels[i].1.f_m,
                });
            }
        }
    }
    Ok(ChirpDetections { k: frame.k, results })
}

/// Everything produced for one tag.
#[derive(Debug, Clone)]
pub struct TagRun {
    pub tag_id: u32,
    pub detections: Vec<Detection>,
    pub elevations: Vec<ElevationSample>,
    pub track: Vec<TrackPoint>,
    pub missed: usize,
    pub collisions: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub n_chirps: u64,
    pub tags: Vec<TagRun>,
}

impl PipelineOutput {
    pub fn collisions(&self) -> usize {
        self.tags.iter().map(|t| t.collisions).sum()
    }

    pub fn detections(&self) -> Vec<Detection> {
        let mut d: Vec<Detection> = self.tags.iter().flat_map(|t| t.detections.clone()).collect();
        d.sort_by_key(|d| (d.k, d.tag_id));
        d
    }

    pub fn elevations(&self) -> Vec<ElevationSample> {
        let mut e: Vec<ElevationSample> =
            self.tags.iter().flat_map(|t| t.elevations.clone()).collect();
        e.sort_by_key(|e| (e.k, e.tag_id));
        e
    }

    pub fn track(&self) -> Vec<TrackPoint> {
        let mut p: Vec<TrackPoint> = self.tags.iter().flat_map(|t| t.track.clone()).collect();
        p.sort_by_key(|p| (p.k, p.tag_id));
        p
    }
}

/// Runs the per-tag sequential stages on chirp-ordered detections.
pub fn finish(
    cfg: &RadarConfig,
    channels: &[(u32, TagChannel)],
    chirps: &[ChirpDetections],
    ecfg: &ElevationConfig,
) -> Result<PipelineOutput> {
    let est = ElevationEstimator::new(cfg, *ecfg)?;
    let tags = channels
        .par_iter()
        .enumerate()
        .map(|(ci, (id, _))| {
            let mut detections = Vec::new();
            let mut missed = 0;
            let mut collisions = 0;
            for c in chirps {
                match &c.results[ci] {
                    Ok(d) => detections.push(*d),
                    Err(Error::AmbiguousPair { .. }) => collisions += 1,
                    Err(_) => missed += 1,
                }
            }
            detections.sort_by_key(|d| d.k);
            let elevations = est.run(&detections)?;
            let track = assemble_track(cfg, &detections, &elevations);
            log::debug!(
                "tag {id}: {} detections, {missed} missed, {collisions} collisions, {} exceptions",
                detections.len(),
                elevations.iter().filter(|e| e.exception_flag).count()
            );
            Ok(TagRun {
                tag_id: *id,
                detections,
                elevations,
                track,
                missed,
                collisions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineOutput {
        n_chirps: chirps.len() as u64,
        tags,
    })
}

/// Localizes already-available frames (in any order).
pub fn process_frames(
    cfg: &RadarConfig,
    scenario: &Scenario,
    frames: &[IfFrame],
    pcfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let channels = tag_channels(cfg, scenario)?;
    let loc = Localizer::new(cfg, pcfg.detector);
    let mut chirps = frames
        .par_iter()
        .map(|f| detect_frame(&loc, f, &channels))
        .collect::<Result<Vec<_>>>()?;
    chirps.sort_by_key(|c| c.k);
    finish(cfg, &channels, &chirps, &pcfg.elevation)
}

/// Localizes a stream of frames in batches of `pcfg.chunk`, so a long frame
/// dump never has to be held in memory.
pub fn process_stream<I>(
    cfg: &RadarConfig,
    scenario: &Scenario,
    frames: I,
    pcfg: &PipelineConfig,
) -> Result<PipelineOutput>
where
    I: IntoIterator<Item = Result<IfFrame>>,
{
    let channels = tag_channels(cfg, scenario)?;
    let loc = Localizer::new(cfg, pcfg.detector);
    let chunk = pcfg.chunk.max(1);
    let mut chirps = Vec::new();
    let mut batch = Vec::with_capacity(chunk);
    let mut it = frames.into_iter().peekable();
    while it.peek().is_some() {
        batch.clear();
        for f in it.by_ref().take(chunk) {
            batch.push(f?);
        }
        let done = batch
            .par_iter()
            .map(|f| detect_frame(&loc, f, &channels))
            .collect::<Result<Vec<_>>>()?;
        chirps.extend(done);
    }
    chirps.sort_by_key(|c| c.k);
    finish(cfg, &channels, &chirps, &pcfg.elevation)
}

/// Synthesizes and processes `n_chirps` chirps without keeping the frames.
pub fn run_synthetic(
    cfg: &RadarConfig,
    scenario: &Scenario,
    seed: u64,
    n_chirps: u64,
    pcfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let synth = Synthesizer::new(cfg, scenario, seed)?;
    let channels = tag_channels(cfg, scenario)?;
    let loc = Localizer::new(cfg, pcfg.detector);
    let chunk = pcfg.chunk.max(1) as u64;
    let mut chirps = Vec::with_capacity(n_chirps as usize);
    let mut start = 0;
    while start < n_chirps {
        let end = (start + chunk).min(n_chirps);
        let batch = (start..end)
            .into_par_iter()
            .map(|k| detect_frame(&loc, &synth.chirp(k)?, &channels))
            .collect::<Result<Vec<_>>>()?;
        chirps.extend(batch);
        start = end;
    }
    finish(cfg, &channels, &chirps, &pcfg.elevation)
}

/// Ground truth for chirps `0..n_chirps`.
pub fn truth_records(
    cfg: &RadarConfig,
    scenario: &Scenario,
    n_chirps: u64,
) -> Result<Vec<TruthRecord>> {
    let synth = Synthesizer::new(cfg, scenario, 0)?;
    let mut out = Vec::new();
    for k in 0..n_chirps {
        out.extend(synth.truth(k)?);
    }
    Ok(out)
}
