//! Scene description: tags, clutter, and noise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::Window;
use crate::error::{Error, Result};
use crate::radar::{db_to_linear, RadarConfig, SPEED_OF_LIGHT};
use crate::rfdesign::RcsTable;
use crate::trajectory::{Trajectory, Vec3};

/// Shape of the tag's RCS switching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationMode {
    /// Sinusoidal RCS modulation, `2·cos θ_m(t)`.
    #[default]
    Harmonic,
    /// 50% duty on/off switching.
    Square,
}

/// Where the modulation frequency sits relative to the chirp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationBand {
    /// Hundreds of kHz: the modulation appears inside one chirp's spectrum.
    #[default]
    IntraChirp,
    /// Hundreds of Hz: the modulation is only visible across chirps.
    SlowTime,
}

fn default_rcs() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagScenario {
    pub tag_id: u32,
    /// Modulation frequency (Hz).
    pub f_m: f64,
    /// Modulation phase at t = 0 (rad).
    #[serde(default)]
    pub phi_m0: f64,
    #[serde(default)]
    pub modulation_mode: ModulationMode,
    #[serde(default)]
    pub modulation_band: ModulationBand,
    /// Boresight RCS (m²).
    #[serde(default = "default_rcs")]
    pub rcs: f64,
    /// Optional relative gain (dB) against incidence angle (deg off the x axis).
    #[serde(default)]
    pub rcs_pattern: Option<Vec<(f64, f64)>>,
    pub trajectory: Trajectory,
    /// Oscillator frequency drift rate (ppm/s).
    #[serde(default)]
    pub oscillator_drift: f64,
    /// Two-way attenuation applied to this tag (dB).
    #[serde(default)]
    pub nlos_attenuation_db: f64,
    /// RMS per-chirp phase jitter (rad).
    #[serde(default)]
    pub phase_jitter_rad: f64,
}

impl TagScenario {
    /// A harmonic intra-chirp tag with default RCS.
    pub fn new(tag_id: u32, f_m: f64, trajectory: Trajectory) -> Self {
        Self {
            tag_id,
            f_m,
            phi_m0: 0.0,
            modulation_mode: ModulationMode::Harmonic,
            modulation_band: ModulationBand::IntraChirp,
            rcs: default_rcs(),
            rcs_pattern: None,
            trajectory,
            oscillator_drift: 0.0,
            nlos_attenuation_db: 0.0,
            phase_jitter_rad: 0.0,
        }
    }

    /// Effective RCS (m²) seen from the radar with the tag at `position`.
    pub fn effective_rcs(&self, position: &Vec3) -> f64 {
        match &self.rcs_pattern {
            None => self.rcs,
            Some(points) => {
                let r = position.norm();
                let incidence = (position.x / r).clamp(-1.0, 1.0).acos().to_degrees();
                // Validated at scenario load, so the table is well formed.
                let gain = RcsTable::new(points.clone()).map(|t| t.at(incidence)).unwrap_or(0.0);
                self.rcs * db_to_linear(gain)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterScatterer {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    pub rcs: f64,
    /// Co-polarized scatterers are attenuated by the radar's clutter suppression.
    #[serde(default = "default_true")]
    pub co_polarized: bool,
}

fn default_true() -> bool {
    true
}

impl ClutterScatterer {
    pub fn position_at(&self, t: f64) -> Vec3 {
        Vec3::new(
            self.position[0] + self.velocity[0] * t,
            self.position[1] + self.velocity[1] * t,
            self.position[2] + self.velocity[2] * t,
        )
    }
}

/// Noise floor chosen so that a reference tag reaches a given 2D-spectrum SNR.
///
/// The SNR is the ratio of the tag's peak power in the range-angle spectrum to
/// the mean noise power per spectrum cell, both after the fast-time window and
/// the coherent sum across Rx channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrCalibration {
    pub snr_db: f64,
    pub range_m: f64,
    #[serde(default = "default_rcs")]
    pub rcs_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub tags: Vec<TagScenario>,
    #[serde(default)]
    pub clutter: Vec<ClutterScatterer>,
    /// Per-sample noise power (dBm). Mutually exclusive with `calibrated_snr`.
    #[serde(default)]
    pub noise_floor_dbm: Option<f64>,
    #[serde(default)]
    pub calibrated_snr: Option<SnrCalibration>,
    pub duration_s: f64,
}

impl Scenario {
    pub fn new(duration_s: f64) -> Self {
        Self {
            tags: Vec::new(),
            clutter: Vec::new(),
            noise_floor_dbm: None,
            calibrated_snr: None,
            duration_s,
        }
    }

    pub fn with_tag(mut self, tag: TagScenario) -> Self {
        self.tags.push(tag);
        self
    }

    pub fn with_snr(mut self, snr_db: f64, range_m: f64) -> Self {
        self.calibrated_snr = Some(SnrCalibration {
            snr_db,
            range_m,
            rcs_m2: default_rcs(),
        });
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Largest tag range over the scenario, sampled densely along the trajectory.
    pub fn max_tag_range(&self, tag: &TagScenario) -> Result<f64> {
        let n = 512;
        let mut best: f64 = 0.0;
        for i in 0..=n {
            let t = self.duration_s * i as f64 / n as f64;
            best = best.max(tag.trajectory.position(t)?.norm());
        }
        Ok(best)
    }

    pub fn validate(&self, cfg: &RadarConfig) -> Result<()> {
        cfg.validate()?;
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return bad("duration_s must be positive".into());
        }
        if self.noise_floor_dbm.is_some() && self.calibrated_snr.is_some() {
            return bad("noise_floor_dbm and calibrated_snr are mutually exclusive".into());
        }
        if let Some(n) = self.noise_floor_dbm {
            if !n.is_finite() {
                return bad("noise_floor_dbm must be finite".into());
            }
        }
        if let Some(c) = &self.calibrated_snr {
            if !c.snr_db.is_finite() || !(c.range_m > 0.0) || !(c.rcs_m2 > 0.0) {
                return bad("calibrated_snr needs finite snr_db, positive range_m and rcs_m2".into());
            }
        }
        let nyquist = cfg.sample_rate / 2.0;
        let slow_nyquist = 1.0 / (2.0 * cfg.tx_period * cfg.n_tx as f64);
        let mut fb_max = Vec::with_capacity(self.tags.len());
        for (i, tag) in self.tags.iter().enumerate() {
            let id = tag.tag_id;
            if self.tags[..i].iter().any(|t| t.tag_id == id) {
                return bad(format!("duplicate tag_id {id}"));
            }
            if !(tag.f_m > 0.0) || !tag.f_m.is_finite() {
                return bad(format!("tag {id}: f_m must be positive"));
            }
            if !(tag.rcs > 0.0) {
                return bad(format!("tag {id}: rcs must be positive"));
            }
            for (name, v) in [
                ("phi_m0", tag.phi_m0),
                ("oscillator_drift", tag.oscillator_drift),
                ("nlos_attenuation_db", tag.nlos_attenuation_db),
                ("phase_jitter_rad", tag.phase_jitter_rad),
            ] {
                if !v.is_finite() {
                    return bad(format!("tag {id}: {name} must be finite"));
                }
            }
            if tag.phase_jitter_rad < 0.0 {
                return bad(format!("tag {id}: phase_jitter_rad must be non-negative"));
            }
            if let Some(p) = &tag.rcs_pattern {
                RcsTable::new(p.clone())
                    .map_err(|e| Error::InvalidScenario(format!("tag {id}: rcs_pattern: {e}")))?;
            }
            tag.trajectory
                .validate(self.duration_s)
                .map_err(|e| Error::InvalidScenario(format!("tag {id}: {e}")))?;
            for s in 0..=64 {
                let t = self.duration_s * s as f64 / 64.0;
                if tag.trajectory.position(t)?.norm() <= 0.0 {
                    return bad(format!("tag {id}: trajectory passes through the radar"));
                }
            }
            let r_max = self.max_tag_range(tag)?;
            let fb = cfg.beat_frequency(r_max)?;
            fb_max.push(fb);
            match tag.modulation_band {
                ModulationBand::IntraChirp => {
                    if tag.f_m - fb <= 0.0 || tag.f_m + fb >= nyquist {
                        return bad(format!(
                            "tag {id}: f_m ± f_b ({:.1} ± {:.1} Hz) leaves (0, f_S/2)",
                            tag.f_m, fb
                        ));
                    }
                }
                ModulationBand::SlowTime => {
                    if tag.f_m >= slow_nyquist {
                        return bad(format!(
                            "tag {id}: slow-time f_m {} Hz exceeds the chirp-rate Nyquist {slow_nyquist:.1} Hz",
                            tag.f_m
                        ));
                    }
                    if fb >= nyquist {
                        return bad(format!("tag {id}: range exceeds the unambiguous range"));
                    }
                }
            }
        }
        let margin = 4.0 * cfg.sample_rate / cfg.samples_per_chirp as f64;
        for i in 0..self.tags.len() {
            for j in i + 1..self.tags.len() {
                let (a, b) = (&self.tags[i], &self.tags[j]);
                if a.f_m == b.f_m {
                    return bad(format!("tags {} and {} share f_m", a.tag_id, b.tag_id));
                }
                let intra = a.modulation_band == ModulationBand::IntraChirp
                    && b.modulation_band == ModulationBand::IntraChirp;
                let guard = 2.0 * fb_max[i].max(fb_max[j]) + margin;
                if intra && (a.f_m - b.f_m).abs() <= guard {
                    return bad(format!(
                        "tags {} and {} are {:.1} Hz apart, guard spacing is {:.1} Hz",
                        a.tag_id,
                        b.tag_id,
                        (a.f_m - b.f_m).abs(),
                        guard
                    ));
                }
            }
        }
        for (i, c) in self.clutter.iter().enumerate() {
            if !(c.rcs > 0.0) {
                return bad(format!("clutter {i}: rcs must be positive"));
            }
            for s in 0..=16 {
                let r = c.position_at(self.duration_s * s as f64 / 16.0).norm();
                if !(r > 0.0) || !r.is_finite() {
                    return bad(format!("clutter {i}: range must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Received power (mW) from a point reflector of RCS `sigma` at `range`.
    pub fn received_power_mw(cfg: &RadarConfig, range: f64, sigma: f64) -> f64 {
        let lambda = SPEED_OF_LIGHT / cfg.f0;
        let pi4 = 4.0 * std::f64::consts::PI;
        db_to_linear(cfg.eirp) * db_to_linear(cfg.rx_gain_dbi) * lambda * lambda * sigma
            / (pi4 * pi4 * pi4 * range.powi(4))
    }

    /// Peak IF amplitude of a reflector, in sqrt(mW) after the IF gain.
    pub fn reflector_amplitude(cfg: &RadarConfig, range: f64, sigma: f64) -> f64 {
        (2.0 * Self::received_power_mw(cfg, range, sigma)).sqrt() * db_to_linear(cfg.if_gain_db / 2.0)
    }

    /// Per-sample noise variance of each real channel.
    pub fn noise_variance(&self, cfg: &RadarConfig) -> f64 {
        if let Some(dbm) = self.noise_floor_dbm {
            return db_to_linear(dbm) * db_to_linear(cfg.if_gain_db);
        }
        match &self.calibrated_snr {
            Some(c) => calibrated_noise_variance(cfg, c),
            None => 0.0,
        }
    }
}

/// Noise variance giving `c.snr_db` of 2D peak SNR for a harmonic tag of
/// RCS `c.rcs_m2` at `c.range_m`.
pub fn calibrated_noise_variance(cfg: &RadarConfig, c: &SnrCalibration) -> f64 {
    let a = Scenario::reflector_amplitude(cfg, c.range_m, c.rcs_m2);
    let w = Window::Hann.coefficients(cfg.samples_per_chirp);
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    a * a / 4.0 * s1 * s1 * cfg.n_rx as f64 / (db_to_linear(c.snr_db) * s2)
}

/// Expected 2D peak SNR (linear) of a harmonic component of amplitude `a`
/// under per-sample noise variance `var`.
pub fn peak_snr(cfg: &RadarConfig, a: f64, var: f64) -> f64 {
    let w = Window::Hann.coefficients(cfg.samples_per_chirp);
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    a * a / 4.0 * s1 * s1 * cfg.n_rx as f64 / (var * s2)
}
