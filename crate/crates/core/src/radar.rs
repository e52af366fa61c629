//! Radar constants and the closed-form quantities derived from them.
//!
//! All derived quantities are pure functions of a [`RadarConfig`]. The speed of
//! light is fixed at [`SPEED_OF_LIGHT`] for the whole crate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative slack allowed between `samples_per_chirp` and `chirp_time * sample_rate`.
///
/// The reference radar acquires 4096 samples at 1.2 Msps during a chirp quoted
/// as 3.4 ms (4080 samples), so the window is allowed to overrun by 1%.
pub const ACQUISITION_SLACK: f64 = 0.01;

/// Time-divided MIMO FMCW radar description.
///
/// Units: Hz, s, m, dBm, dB. `tx_period` is the time between the starts of
/// successive chirps transmitted by consecutive Tx channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfig {
    pub f0: f64,
    pub bandwidth: f64,
    pub chirp_time: f64,
    pub sample_rate: f64,
    pub samples_per_chirp: usize,
    pub n_rx: usize,
    pub d_rx: f64,
    pub n_tx: usize,
    pub d_tx: f64,
    pub tx_period: f64,
    pub range_fft_len: usize,
    pub angle_fft_len: usize,
    pub eirp: f64,
    pub clutter_suppression: f64,
    /// Rx antenna gain used by the link model (dBi).
    #[serde(default = "default_rx_gain")]
    pub rx_gain_dbi: f64,
    /// IF amplitude calibration constant (dB) applied to every synthesized term.
    #[serde(default)]
    pub if_gain_db: f64,
}

fn default_rx_gain() -> f64 {
    12.0
}

impl RadarConfig {
    /// The 24 GHz, 8 Rx / 2 Tx reference radar.
    ///
    /// 3.4 ms chirps of 4096 samples at 1.2 Msps, Rx spaced λ/2, Tx spaced 2λ,
    /// one unsampled chirp between Tx channels (13.6 ms cycle), zero-padding to
    /// 16384 range and 1024 angle bins, 29 dBm EIRP. The sweep bandwidth is not
    /// documented for this unit; 250 MHz is used.
    pub fn default_radar() -> Self {
        let f0 = 24.0e9;
        let lambda = SPEED_OF_LIGHT / f0;
        Self {
            f0,
            bandwidth: 250.0e6,
            chirp_time: 3.4e-3,
            sample_rate: 1.2e6,
            samples_per_chirp: 4096,
            n_rx: 8,
            d_rx: lambda / 2.0,
            n_tx: 2,
            d_tx: 2.0 * lambda,
            tx_period: 6.8e-3,
            range_fft_len: 16384,
            angle_fft_len: 1024,
            eirp: 29.0,
            clutter_suppression: 30.0,
            rx_gain_dbi: default_rx_gain(),
            if_gain_db: 0.0,
        }
    }

    /// A short-chirp single-Tx radar for slow-time (Doppler-space) processing.
    ///
    /// 256 µs chirps of 256 samples at 1 Msps repeated back to back, which puts
    /// the slow-time Nyquist frequency at ~1.95 kHz.
    pub fn slow_time_radar() -> Self {
        let f0 = 24.0e9;
        let lambda = SPEED_OF_LIGHT / f0;
        Self {
            f0,
            bandwidth: 250.0e6,
            chirp_time: 256.0e-6,
            sample_rate: 1.0e6,
            samples_per_chirp: 256,
            n_rx: 8,
            d_rx: lambda / 2.0,
            n_tx: 1,
            d_tx: 2.0 * lambda,
            tx_period: 256.0e-6,
            range_fft_len: 1024,
            angle_fft_len: 64,
            eirp: 29.0,
            clutter_suppression: 0.0,
            rx_gain_dbi: default_rx_gain(),
            if_gain_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let finite = [
            ("f0", self.f0),
            ("bandwidth", self.bandwidth),
            ("chirp_time", self.chirp_time),
            ("sample_rate", self.sample_rate),
            ("d_rx", self.d_rx),
            ("d_tx", self.d_tx),
            ("tx_period", self.tx_period),
            ("eirp", self.eirp),
            ("clutter_suppression", self.clutter_suppression),
            ("rx_gain_dbi", self.rx_gain_dbi),
            ("if_gain_db", self.if_gain_db),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.f0 <= 0.0 {
            return bad("f0 must be positive".into());
        }
        if self.chirp_time <= 0.0 || self.bandwidth <= 0.0 || self.sample_rate <= 0.0 {
            return bad("chirp_time, bandwidth and sample_rate must be positive".into());
        }
        if self.samples_per_chirp == 0 {
            return bad("samples_per_chirp must be positive".into());
        }
        let capacity = self.chirp_time * self.sample_rate * (1.0 + ACQUISITION_SLACK);
        if self.samples_per_chirp as f64 > capacity {
            return bad(format!(
                "samples_per_chirp {} exceeds chirp_time * sample_rate ({:.1})",
                self.samples_per_chirp,
                self.chirp_time * self.sample_rate
            ));
        }
        if self.tx_period < self.chirp_time {
            return bad("tx_period must be at least chirp_time".into());
        }
        if self.d_rx <= 0.0 || self.d_tx <= 0.0 {
            return bad("d_rx and d_tx must be positive".into());
        }
        if self.n_rx == 0 {
            return bad("n_rx must be positive".into());
        }
        match self.n_tx {
            1 | 2 => {}
            n => return bad(format!("n_tx = {n} is not supported (1 or 2 Tx channels)")),
        }
        if self.range_fft_len < self.samples_per_chirp {
            return bad("range_fft_len must be >= samples_per_chirp".into());
        }
        if self.angle_fft_len < self.n_rx {
            return bad("angle_fft_len must be >= n_rx".into());
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Wavelength at the chirp start frequency.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f0
    }

    pub fn chirp_slope(&self) -> f64 {
        self.bandwidth / self.chirp_time
    }

    pub fn beat_frequency(&self, range: f64) -> Result<f64> {
        if !(range >= 0.0) {
            return Err(Error::Domain(format!("range must be non-negative, got {range}")));
        }
        Ok(2.0 * range * self.chirp_slope() / SPEED_OF_LIGHT)
    }

    pub fn range_from_beat(&self, f_b: f64) -> f64 {
        f_b * SPEED_OF_LIGHT / (2.0 * self.chirp_slope())
    }

    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    /// Largest range whose beat frequency stays below half the ADC rate.
    pub fn max_unambiguous_range(&self) -> f64 {
        self.chirp_time * self.sample_rate * SPEED_OF_LIGHT / (4.0 * self.bandwidth)
    }

    /// Signed Doppler frequency for radial velocity `v` (positive = receding).
    pub fn doppler_frequency(&self, v: f64) -> f64 {
        2.0 * v * self.f0 / SPEED_OF_LIGHT
    }

    /// Radial-velocity modulus of a single Doppler phase estimate taken across
    /// two chirps of the same Tx channel.
    pub fn velocity_ambiguity(&self) -> f64 {
        SPEED_OF_LIGHT / (8.0 * self.f0 * self.tx_period)
    }

    /// Largest radial acceleration for which successive velocity-induced
    /// phases stay within π/2 of each other.
    pub fn max_acceleration(&self) -> f64 {
        SPEED_OF_LIGHT / (16.0 * self.f0 * self.tx_period * self.tx_period)
    }

    /// Frequency spacing of the zero-padded range FFT grid.
    pub fn range_bin_hz(&self) -> f64 {
        self.sample_rate / self.range_fft_len as f64
    }

    /// Start time of chirp `k` under the regular TDM schedule.
    pub fn chirp_start(&self, k: u64) -> f64 {
        k as f64 * self.tx_period
    }

    /// Tx channel active during chirp `k`.
    pub fn tx_channel(&self, k: u64) -> usize {
        (k % self.n_tx as u64) as usize
    }

    /// Two-way phase accrued by the Tx elevation offset, per unit `sin Φ`.
    pub fn tx_phase_per_sine(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.d_tx / self.wavelength()
    }

    /// Phase ramp across Rx channels per unit `sin Θ`.
    pub fn rx_phase_per_sine(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.d_rx / self.wavelength()
    }
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self::default_radar()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn wavelength_examples() {
        let mut cfg = RadarConfig::default_radar();
        assert!((cfg.wavelength() - 0.012_491_352).abs() < 1e-9);
        cfg.f0 = SPEED_OF_LIGHT;
        assert!((cfg.wavelength() - 1.0).abs() < 1e-15);
        cfg.f0 = 299.792458e9;
        assert!((cfg.wavelength() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn slope_examples() {
        let mut cfg = RadarConfig::default_radar();
        assert!(rel(cfg.chirp_slope(), 7.352_941_176e10) < 1e-9);
        cfg.bandwidth = 0.0;
        assert_eq!(cfg.chirp_slope(), 0.0);
        cfg.bandwidth = 1e9;
        cfg.chirp_time = 1e-3;
        assert!(rel(cfg.chirp_slope(), 1e12) < 1e-15);
    }

    #[test]
    fn beat_frequency_examples() {
        let cfg = RadarConfig::default_radar();
        let fb = cfg.beat_frequency(7.0).unwrap();
        // 2 * 7 * 7.352941e10 / c
        assert!((fb - 3433.748_04).abs() < 1e-4, "{fb}");
        assert_eq!(cfg.beat_frequency(0.0).unwrap(), 0.0);
        assert!(matches!(cfg.beat_frequency(-1.0), Err(Error::Domain(_))));
        for r in [1.0, 10.0, 50.0] {
            let back = cfg.range_from_beat(cfg.beat_frequency(r).unwrap());
            assert!(rel(back, r) < 1e-12);
        }
    }

    #[test]
    fn resolution_and_max_range() {
        let mut cfg = RadarConfig::default_radar();
        assert!((cfg.range_resolution() - 0.599_584_916).abs() < 1e-8);
        assert!((cfg.max_unambiguous_range() - 1223.154).abs() < 0.01);
        let r = cfg.max_unambiguous_range();
        cfg.bandwidth *= 2.0;
        assert!(rel(cfg.max_unambiguous_range(), r / 2.0) < 1e-15);
        assert!((cfg.range_resolution() - 0.299_792_458).abs() < 1e-12);
        cfg.chirp_time = 0.0;
        assert_eq!(cfg.max_unambiguous_range(), 0.0);
    }

    #[test]
    fn doppler_examples() {
        let cfg = RadarConfig::default_radar();
        assert!((cfg.doppler_frequency(1.0) - 160.110_766).abs() < 1e-5);
        assert_eq!(cfg.doppler_frequency(0.0), 0.0);
        assert_eq!(cfg.doppler_frequency(-1.0), -cfg.doppler_frequency(1.0));
    }

    #[test]
    fn ambiguity_and_acceleration() {
        let mut cfg = RadarConfig::default_radar();
        assert!((cfg.velocity_ambiguity() - 0.229_620).abs() < 1e-6);
        assert!(rel(cfg.max_acceleration(), 16.895) < 0.002);
        let amb = cfg.velocity_ambiguity();
        let amax = cfg.max_acceleration();
        cfg.tx_period /= 2.0;
        assert!(rel(cfg.velocity_ambiguity(), 2.0 * amb) < 1e-15);
        cfg.tx_period = 68e-3;
        assert!(rel(cfg.max_acceleration(), amax / 100.0) < 1e-12);
        assert!(rel(cfg.max_acceleration(), 0.169) < 0.002);
        cfg.tx_period = 6.8e-3;
        cfg.f0 = 12e9;
        assert!((cfg.velocity_ambiguity() - 0.459_24).abs() < 1e-4);
        cfg.f0 = 48e9;
        assert!(rel(cfg.max_acceleration(), amax / 2.0) < 1e-12);
    }

    #[test]
    fn default_radar_is_valid() {
        let cfg = RadarConfig::default_radar();
        cfg.validate().unwrap();
        assert!((2.0 * cfg.tx_period - 13.6e-3).abs() < 1e-15);
        RadarConfig::slow_time_radar().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let base = RadarConfig::default_radar();
        let mut c = base.clone();
        c.n_tx = 3;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.tx_period = 1e-3;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.range_fft_len = 1024;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.angle_fft_len = 4;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.samples_per_chirp = 8192;
        assert!(c.validate().is_err());
        let mut c = base;
        c.d_tx = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = RadarConfig::default_radar();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RadarConfig::from_json_str(&text).unwrap(), cfg);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(RadarConfig::from_json_str(&v.to_string()).is_err());
    }

    proptest! {
        #[test]
        fn scaling_laws(
            f0 in 1e9f64..100e9,
            bw in 10e6f64..4e9,
            tc in 1e-5f64..1e-2,
            fs in 1e5f64..1e8,
            scale in 0.1f64..10.0,
        ) {
            let mut cfg = RadarConfig::default_radar();
            cfg.f0 = f0;
            cfg.bandwidth = bw;
            cfg.chirp_time = tc;
            cfg.tx_period = tc;
            cfg.sample_rate = fs;
            let rmax = cfg.max_unambiguous_range();
            let dr = cfg.range_resolution();
            let amax = cfg.max_acceleration();
            let vamb = cfg.velocity_ambiguity();

            let mut s = cfg.clone();
            s.chirp_time *= scale;
            prop_assert!(rel(s.max_unambiguous_range(), rmax * scale) < 1e-12);

            let mut s = cfg.clone();
            s.bandwidth *= scale;
            prop_assert!(rel(s.range_resolution(), dr / scale) < 1e-12);

            let mut s = cfg.clone();
            s.tx_period *= scale;
            prop_assert!(rel(s.max_acceleration(), amax / (scale * scale)) < 1e-12);
            prop_assert!(rel(s.velocity_ambiguity(), vamb / scale) < 1e-12);

            let mut s = cfg.clone();
            s.f0 *= scale;
            prop_assert!(rel(s.velocity_ambiguity(), vamb / scale) < 1e-12);
        }

        #[test]
        fn beat_round_trip(r in 0.0f64..2000.0) {
            let cfg = RadarConfig::default_radar();
            let back = cfg.range_from_beat(cfg.beat_frequency(r).unwrap());
            prop_assert!((back - r).abs() <= 1e-9 * r.max(1e-300));
        }

        #[test]
        fn db_round_trip(x in -200.0f64..200.0) {
            prop_assert!((linear_to_db(db_to_linear(x)) - x).abs() < 1e-12);
            prop_assert!((watts_to_dbm(dbm_to_watts(x)) - x).abs() < 1e-12);
        }
    }
}
