//! 3D track assembly, channel routing and error statistics.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::chirp2d::Detection;
use crate::dsp::quantile_sorted;
use crate::elevation::ElevationSample;
use crate::error::{Error, Result};
use crate::radar::RadarConfig;
use crate::synth::TruthRecord;
use crate::trajectory::{Spherical, Vec3};

/// Channel spacing assumed when quoting the tag capacity of a band (Hz).
///
/// About one natural range-FFT bin of the reference radar (1.2 Msps / 4096
/// samples ≈ 293 Hz) plus a small guard.
pub const CAPACITY_SPACING_HZ: f64 = 1.0e6 / 3000.0;

/// One fused 3D estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub k: u64,
    pub t: f64,
    pub tag_id: u32,
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub valid: bool,
}

impl TrackPoint {
    pub fn new(k: u64, t: f64, tag_id: u32, range: f64, azimuth: f64, elevation: Option<f64>) -> Self {
        let (el, valid) = match elevation {
            Some(e) if e.is_finite() => (e, true),
            _ => (f64::NAN, false),
        };
        let p = Spherical {
            range,
            azimuth,
            elevation: el,
        }
        .to_cartesian();
        Self {
            k,
            t,
            tag_id,
            range,
            azimuth,
            elevation: el,
            x: p.x,
            y: p.y,
            z: p.z,
            valid,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

/// Joins detections with elevation estimates of the same chirp geometry.
///
/// Each elevation sample is paired with the detection at its `ref_k`; chirps
/// without an elevation are returned with `valid = false`.
pub fn assemble_track(
    cfg: &RadarConfig,
    detections: &[Detection],
    elevations: &[ElevationSample],
) -> Vec<TrackPoint> {
    let by_ref: HashMap<(u32, u64), f64> = elevations
        .iter()
        .filter_map(|e| e.elevation.map(|el| ((e.tag_id, e.ref_k), el)))
        .collect();
    let mut out: Vec<TrackPoint> = detections
        .iter()
        .map(|d| {
            TrackPoint::new(
                d.k,
                cfg.chirp_start(d.k),
                d.tag_id,
                d.range,
                d.azimuth,
                by_ref.get(&(d.tag_id, d.k)).copied(),
            )
        })
        .collect();
    out.sort_by_key(|p| (p.tag_id, p.k));
    out
}

/// Outcome of routing peak pairs to nominal channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Routing {
    /// Index of the input item assigned to each tag.
    pub assigned: BTreeMap<u32, usize>,
    pub collisions: usize,
    pub unassigned: usize,
}

/// Assigns items with apparent centre frequencies `centres` to the nearest
/// nominal channel within `tolerance`. An item close to two channels, or two
/// items landing on one channel, counts as a collision and is dropped.
pub fn channelize(channels: &[(u32, f64)], centres: &[f64], tolerance: f64) -> Routing {
    let mut r = Routing::default();
    let mut claims: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &f) in centres.iter().enumerate() {
        let near: Vec<u32> = channels
            .iter()
            .filter(|(_, fm)| (f - fm).abs() <= tolerance)
            .map(|(id, _)| *id)
            .collect();
        match near.as_slice() {
            [] => r.unassigned += 1,
            [id] => claims.entry(*id).or_default().push(i),
            _ => r.collisions += 1,
        }
    }
    for (id, items) in claims {
        if items.len() == 1 {
            r.assigned.insert(id, items[0]);
        } else {
            r.collisions += items.len();
        }
    }
    r
}

/// Number of channels of width `spacing` that fit in `[f_lo, f_hi]`.
pub fn channel_capacity(f_lo: f64, f_hi: f64, spacing: f64) -> usize {
    if !(spacing > 0.0) || !(f_hi > f_lo) {
        return 0;
    }
    ((f_hi - f_lo) / spacing + 1e-9).floor() as usize
}

/// Summary of one error population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
    /// Error value at cumulative probability 0.00, 0.01, ..., 1.00.
    pub cdf: Vec<f64>,
}

impl ErrorStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
        s.sort_by(f64::total_cmp);
        if s.is_empty() {
            return Self {
                count: 0,
                mean: f64::NAN,
                median: f64::NAN,
                p90: f64::NAN,
                max: f64::NAN,
                cdf: Vec::new(),
            };
        }
        Self {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: quantile_sorted(&s, 0.5),
            p90: quantile_sorted(&s, 0.9),
            max: s[s.len() - 1],
            cdf: (0..=100).map(|p| quantile_sorted(&s, p as f64 / 100.0)).collect(),
        }
    }

    /// Fraction of samples at or below `x`, read off the stored quantiles.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let n = self.cdf.iter().take_while(|&&v| v <= x).count();
        if n == 0 {
            0.0
        } else {
            ((n - 1) as f64 / 100.0).min(1.0)
        }
    }
}

/// Per-axis, 3D and spherical error statistics of a track against truth.
/// Lengths in metres, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n_points: usize,
    pub n_valid: usize,
    pub x: ErrorStats,
    pub y: ErrorStats,
    pub z: ErrorStats,
    pub error_3d: ErrorStats,
    pub range: ErrorStats,
    pub azimuth_deg: ErrorStats,
    pub elevation_deg: ErrorStats,
    #[serde(skip)]
    pub samples: ErrorSamples,
}

/// Raw absolute errors of the valid track points, in track order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSamples {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub error_3d: Vec<f64>,
    pub range: Vec<f64>,
    pub azimuth_deg: Vec<f64>,
    pub elevation_deg: Vec<f64>,
}

/// Truth interpolated linearly in time, per tag.
pub struct TruthTable {
    by_tag: HashMap<u32, Vec<TruthRecord>>,
}

impl TruthTable {
    pub fn new(records: &[TruthRecord]) -> Self {
        let mut by_tag: HashMap<u32, Vec<TruthRecord>> = HashMap::new();
        for r in records {
            by_tag.entry(r.tag_id).or_default().push(*r);
        }
        for v in by_tag.values_mut() {
            v.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
        Self { by_tag }
    }

    /// Cartesian truth of `tag_id` at time `t`; `None` outside the recorded span.
    pub fn position(&self, tag_id: u32, t: f64) -> Option<Vec3> {
        let v = self.by_tag.get(&tag_id)?;
        let first = v.first()?;
        let last = v.last()?;
        let eps = 1e-9;
        if t < first.t - eps || t > last.t + eps {
            return None;
        }
        let i = v.partition_point(|r| r.t <= t);
        let (a, b) = if i == 0 {
            (first, first)
        } else if i == v.len() {
            (last, last)
        } else {
            (&v[i - 1], &v[i])
        };
        let w = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
        let pa = Vec3::new(a.x, a.y, a.z);
        let pb = Vec3::new(b.x, b.y, b.z);
        Some(pa + (pb - pa) * w)
    }
}

/// Compares the valid points of `track` with `truth` interpolated to the
/// track timestamps.
pub fn error_report(track: &[TrackPoint], truth: &[TruthRecord]) -> Result<ErrorReport> {
    let table = TruthTable::new(truth);
    let mut s = ErrorSamples::default();
    for p in track.iter().filter(|p| p.valid) {
        let Some(g) = table.position(p.tag_id, p.t) else {
            continue;
        };
        let e = p.position();
        let gs = Spherical::from_cartesian(&g);
        s.x.push((e.x - g.x).abs());
        s.y.push((e.y - g.y).abs());
        s.z.push((e.z - g.z).abs());
        s.error_3d.push((e - g).norm());
        s.range.push((p.range - gs.range).abs());
        s.azimuth_deg.push((p.azimuth - gs.azimuth).abs().to_degrees());
        s.elevation_deg.push((p.elevation - gs.elevation).abs().to_degrees());
    }
    if s.error_3d.is_empty() {
        return Err(Error::Domain("no valid track points overlap the ground truth".into()));
    }
    Ok(ErrorReport {
        n_points: track.len(),
        n_valid: s.error_3d.len(),
        x: ErrorStats::from_samples(&s.x),
        y: ErrorStats::from_samples(&s.y),
        z: ErrorStats::from_samples(&s.z),
        error_3d: ErrorStats::from_samples(&s.error_3d),
        range: ErrorStats::from_samples(&s.range),
        azimuth_deg: ErrorStats::from_samples(&s.azimuth_deg),
        elevation_deg: ErrorStats::from_samples(&s.elevation_deg),
        samples: s,
    })
}
