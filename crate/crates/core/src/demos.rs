//! Built-in scenarios.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dsp::wrap_pi;
use crate::elevation::{principal_elevation_limit, ElevationConfig, ElevationEstimator, ElevationSample};
use crate::error::{Error, Result};
use crate::pipeline::{run_synthetic, truth_records, PipelineConfig, PipelineOutput};
use crate::radar::{RadarConfig, SPEED_OF_LIGHT};
use crate::scenario::{Scenario, TagScenario};
use crate::synth::TruthRecord;
use crate::tracker::{channel_capacity, error_report, ErrorReport, CAPACITY_SPACING_HZ};
use crate::trajectory::{AccelerationSegment, Spherical, Trajectory, Vec3};

/// Smooth random flight around `centre`: piecewise-constant accelerations
/// pulling back toward the centre, with speed capped at `max_speed` and
/// |acceleration| capped at `max_accel`.
pub fn drone_trajectory(
    seed: u64,
    centre: [f64; 3],
    spread: [f64; 3],
    duration: f64,
    max_speed: f64,
    max_accel: f64,
) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 0.25;
    let c = Vec3::from(centre);
    let s = Vec3::from(spread);
    let jitter = Normal::new(0.0, max_accel / 2.0).expect("finite");
    let mut p = c;
    let mut v = Vec3::zeros();
    let mut segments = Vec::new();
    let mut t = 0.0;
    while t < duration + dt {
        let mut a = Vec3::zeros();
        for i in 0..3 {
            let pull = if s[i] > 0.0 { -(p[i] - c[i]) / s[i] * max_accel * 0.6 } else { 0.0 };
            let noise = if s[i] > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
            a[i] = pull - 0.8 * v[i] + noise;
            if s[i] == 0.0 {
                a[i] = -v[i] / dt;
            }
        }
        if a.norm() > max_accel {
            a *= max_accel / a.norm();
        }
        let v_next = v + a * dt;
        if v_next.norm() > max_speed {
            a = (v_next * (max_speed / v_next.norm()) - v) / dt;
        }
        let hold = dt * rng.random_range(0.6..1.4);
        p += v * hold + a * (0.5 * hold * hold);
        v += a * hold;
        segments.push(AccelerationSegment {
            duration: hold,
            acceleration: a.into(),
        });
        t += hold;
    }
    Trajectory::ConstantAcceleration {
        start: centre,
        initial_velocity: [0.0; 3],
        segments,
    }
}

/// Names accepted by [`demo`].
pub const DEMOS: [&str; 5] = ["drone-3d", "vehicle-10mps", "ramp-4mps2", "multitag-4", "range-sweep"];

/// A runnable built-in scenario.
#[derive(Debug, Clone)]
pub struct Demo {
    pub name: &'static str,
    pub radar: RadarConfig,
    pub scenario: Scenario,
    pub n_chirps: u64,
    pub pipeline: PipelineConfig,
}

fn tag(id: u32, f_m: f64, trajectory: Trajectory) -> TagScenario {
    TagScenario::new(id, f_m, trajectory)
}

fn duration(cfg: &RadarConfig, n: u64) -> f64 {
    cfg.chirp_start(n)
}

/// The 20 dB random flight at 7 m used for accuracy statistics.
pub fn drone_scenario(cfg: &RadarConfig, seed: u64, n_chirps: u64, snr_db: Option<f64>) -> Scenario {
    let d = duration(cfg, n_chirps);
    let traj = drone_trajectory(seed, [7.0, 0.0, 0.0], [1.5, 1.5, 1.2], d, 3.0, 4.0);
    let sc = Scenario::new(d).with_tag(tag(1, 250e3, traj));
    match snr_db {
        Some(s) => sc.with_snr(s, 7.0),
        None => sc,
    }
}

pub fn demo(name: &str, seed: u64) -> Result<Demo> {
    let cfg = RadarConfig::default_radar();
    let (name, scenario, n_chirps) = match name {
        "drone-3d" => ("drone-3d", drone_scenario(&cfg, seed, 4000, Some(20.0)), 4000),
        "vehicle-10mps" => {
            let n = 200;
            let d = duration(&cfg, n);
            let traj = Trajectory::linear([3.0, 1.0, 0.4], [10.0, 0.0, 0.0], d);
            ("vehicle-10mps", Scenario::new(d).with_tag(tag(1, 250e3, traj)).with_snr(40.0, 7.0), n)
        }
        "ramp-4mps2" => {
            let n = 400;
            let d = duration(&cfg, n);
            let mut sc = Scenario::new(d);
            for (i, a) in RAMP_ACCELERATIONS.iter().enumerate() {
                let az = (-15.0 + 10.0 * i as f64).to_radians();
                let el = (-3.0 + 2.0 * i as f64).to_radians();
                let start = Spherical {
                    range: 4.0,
                    azimuth: az,
                    elevation: el,
                }
                .to_cartesian();
                let traj = Trajectory::radial_ramp(start.into(), 0.0, *a, d);
                sc = sc.with_tag(tag(i as u32 + 1, 150e3 + 100e3 * i as f64, traj));
            }
            ("ramp-4mps2", sc.with_snr(40.0, 7.0), n)
        }
        "multitag-4" => ("multitag-4", multitag_scenario(&cfg, seed, 600, Some(30.0)), 600),
        "range-sweep" => {
            let n = 300;
            let d = duration(&cfg, n);
            let mut sc = Scenario::new(d);
            for (i, r) in SWEEP_RANGES.iter().enumerate() {
                let p = Spherical {
                    range: *r,
                    azimuth: 5f64.to_radians(),
                    elevation: 2f64.to_radians(),
                }
                .to_cartesian();
                sc = sc.with_tag(tag(i as u32 + 1, 120e3 + 60e3 * i as f64, Trajectory::stationary(p.into())));
            }
            ("range-sweep", sc.with_snr(20.0, 7.0), n)
        }
        other => {
            return Err(Error::InvalidScenario(format!(
                "unknown demo '{other}', expected one of {}",
                DEMOS.join(", ")
            )))
        }
    };
    Ok(Demo {
        name,
        radar: cfg,
        scenario,
        n_chirps,
        pipeline: PipelineConfig::default(),
    })
}

const RAMP_ACCELERATIONS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const SWEEP_RANGES: [f64; 8] = [2.0, 4.0, 7.0, 10.0, 15.0, 20.0, 30.0, 40.0];
const SNR_CURVE: [f64; 5] = [10.0, 15.0, 20.0, 25.0, 30.0];

/// Four tags on 200/300/400/500 kHz flying independently.
pub fn multitag_scenario(cfg: &RadarConfig, seed: u64, n_chirps: u64, snr_db: Option<f64>) -> Scenario {
    let d = duration(cfg, n_chirps);
    let centres = [[5.0, -1.0, 0.0], [7.0, 1.0, 0.3], [9.0, 0.0, -0.3], [6.0, 0.5, 0.5]];
    let mut sc = Scenario::new(d);
    for (i, c) in centres.iter().enumerate() {
        let traj = drone_trajectory(seed.wrapping_add(i as u64), *c, [1.0, 1.0, 0.6], d, 3.0, 4.0);
        sc = sc.with_tag(tag(i as u32 + 1, 200e3 + 100e3 * i as f64, traj));
    }
    match snr_db {
        Some(s) => sc.with_snr(s, 7.0),
        None => sc,
    }
}

/// Accuracy of the drone flight at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub valid_fraction: f64,
    pub median_3d_m: f64,
    pub p90_3d_m: f64,
    pub median_elevation_deg: f64,
}

/// Median errors of the 7 m drone flight over a list of SNRs.
pub fn snr_error_curve(seed: u64, snrs: &[f64], n_chirps: u64) -> Result<Vec<SnrPoint>> {
    let cfg = RadarConfig::default_radar();
    snrs.iter()
        .map(|&snr| {
            let sc = drone_scenario(&cfg, seed, n_chirps, Some(snr));
            let out = run_synthetic(&cfg, &sc, seed, n_chirps, &PipelineConfig::default())?;
            let truth = truth_records(&cfg, &sc, n_chirps)?;
            let track = out.track();
            let r = error_report(&track, &truth)?;
            Ok(SnrPoint {
                snr_db: snr,
                valid_fraction: r.n_valid as f64 / n_chirps as f64,
                median_3d_m: r.error_3d.median,
                p90_3d_m: r.error_3d.p90,
                median_elevation_deg: r.elevation_deg.median,
            })
        })
        .collect()
}

/// Chirps whose selected β differs from the true velocity phase by more
/// than π/2 (modulo 2π).
pub fn beta_errors(cfg: &RadarConfig, ecfg: &ElevationConfig, samples: &[ElevationSample], truth: &[TruthRecord]) -> Result<usize> {
    let f_eff = ElevationEstimator::new(cfg, *ecfg)?.effective_carrier();
    let range: HashMap<(u32, u64), f64> = truth.iter().map(|t| ((t.tag_id, t.k), t.range)).collect();
    Ok(samples
        .iter()
        .filter(|s| !s.exception_flag)
        .filter_map(|s| {
            let b = s.beta_chosen?;
            let r0 = range.get(&(s.tag_id, s.k))?;
            let r2 = range.get(&(s.tag_id, s.k.checked_sub(2)?))?;
            let truth = 4.0 * PI * f_eff / SPEED_OF_LIGHT * (r0 - r2);
            Some(wrap_pi(b - truth).abs() > PI / 2.0)
        })
        .filter(|&bad| bad)
        .count())
}

#[derive(Debug, Clone, Serialize)]
struct TagSummary {
    tag_id: u32,
    f_m: f64,
    detections: usize,
    missed: usize,
    collisions: usize,
    exceptions: usize,
    handler_invocations: usize,
    beta_errors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceleration_mps2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nominal_range_m: Option<f64>,
    error: Option<ErrorReport>,
}

/// Everything a demo run produces.
#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub demo: Demo,
    pub seed: u64,
    pub output: PipelineOutput,
    pub truth: Vec<TruthRecord>,
    pub report: serde_json::Value,
}

pub fn run_demo(name: &str, seed: u64) -> Result<DemoOutcome> {
    let d = demo(name, seed)?;
    let cfg = &d.radar;
    let output = run_synthetic(cfg, &d.scenario, seed, d.n_chirps, &d.pipeline)?;
    let truth = truth_records(cfg, &d.scenario, d.n_chirps)?;
    let mut tags = Vec::new();
    for (i, t) in output.tags.iter().enumerate() {
        let tag_truth: Vec<TruthRecord> = truth.iter().filter(|r| r.tag_id == t.tag_id).copied().collect();
        let f_m = d
            .scenario
            .tags
            .iter()
            .find(|s| s.tag_id == t.tag_id)
            .map_or(f64::NAN, |s| s.f_m);
        tags.push(TagSummary {
            tag_id: t.tag_id,
            f_m,
            detections: t.detections.len(),
            missed: t.missed,
            collisions: t.collisions,
            exceptions: t.elevations.iter().filter(|e| e.exception_flag).count(),
            handler_invocations: t.elevations.iter().filter(|e| e.handler_invoked).count(),
            beta_errors: beta_errors(cfg, &d.pipeline.elevation, &t.elevations, &tag_truth)?,
            acceleration_mps2: (d.name == "ramp-4mps2").then(|| RAMP_ACCELERATIONS[i]),
            nominal_range_m: (d.name == "range-sweep").then(|| SWEEP_RANGES[i]),
            error: error_report(&t.track, &tag_truth).ok(),
        });
    }
    let mut report = json!({
        "demo": d.name,
        "seed": seed,
        "n_chirps": d.n_chirps,
        "radar": {
            "velocity_ambiguity_mps": cfg.velocity_ambiguity(),
            "max_acceleration_mps2": cfg.max_acceleration(),
            "range_resolution_m": cfg.range_resolution(),
            "principal_elevation_deg": principal_elevation_limit(cfg).to_degrees(),
        },
        "channel_capacity": {
            "band_hz": [100e3, 600e3],
            "spacing_hz": CAPACITY_SPACING_HZ,
            "tags": channel_capacity(100e3, 600e3, CAPACITY_SPACING_HZ),
        },
        "collisions": output.collisions(),
        "tags": tags,
    });
    if d.name == "drone-3d" || d.name == "multitag-4" {
        let all = error_report(&output.track(), &truth).ok();
        report["overall"] = serde_json::to_value(all)?;
    }
    if d.name == "range-sweep" {
        report["snr_curve"] = serde_json::to_value(snr_error_curve(seed, &SNR_CURVE, 400)?)?;
    }
    Ok(DemoOutcome {
        demo: d,
        seed,
        output,
        truth,
        report,
    })
}
