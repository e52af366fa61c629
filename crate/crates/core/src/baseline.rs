//! Slow-time (Doppler-space) tag localization, used for comparison.
//!
//! The tag is found at its modulation frequency on the Doppler axis of a
//! range-Doppler map. Any radial motion adds its Doppler shift to that
//! frequency, which is exactly what makes this approach fragile.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::{median, parabolic_offset, Window};
use crate::error::{Error, Result};
use crate::radar::RadarConfig;
use crate::synth::IfFrame;

/// Range-Doppler map of one Tx channel, summed non-coherently over Rx.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub n_doppler: usize,
    pub n_range: usize,
    /// Range-FFT bin width (Hz).
    pub range_bin_hz: f64,
    /// Doppler bin width (Hz).
    pub doppler_bin_hz: f64,
    /// Range per range-FFT bin (m).
    pub range_bin_m: f64,
    pub tx_channel: usize,
    /// Complex values `[rx][doppler][range]`, Doppler axis centred on zero.
    pub values: Vec<Vec<Vec<Complex64>>>,
}

impl RangeDopplerMap {
    /// Doppler frequency of row `i` (Hz); row `n_doppler/2` is zero.
    pub fn doppler_hz(&self, i: usize) -> f64 {
        (i as f64 - (self.n_doppler / 2) as f64) * self.doppler_bin_hz
    }

    /// Row nearest to Doppler frequency `f`, clamped to the axis.
    pub fn doppler_row(&self, f: f64) -> usize {
        let i = (f / self.doppler_bin_hz).round() + (self.n_doppler / 2) as f64;
        i.clamp(0.0, (self.n_doppler - 1) as f64) as usize
    }

    pub fn power(&self, d: usize, r: usize) -> f64 {
        self.values.iter().map(|ch| ch[d][r].norm_sqr()).sum()
    }

    /// Power map `[doppler][range]`.
    pub fn power_map(&self) -> Vec<Vec<f64>> {
        (0..self.n_doppler)
            .map(|d| (0..self.n_range).map(|r| self.power(d, r)).collect())
            .collect()
    }
}

/// Builds the map from the first `n_chirps` frames, which must all come from
/// the same Tx channel and be evenly spaced in time.
pub fn range_doppler_map(cfg: &RadarConfig, frames: &[IfFrame], n_chirps: usize) -> Result<RangeDopplerMap> {
    if n_chirps < 2 || frames.len() < n_chirps {
        return Err(Error::Domain(format!(
            "need at least {} frames, got {}",
            n_chirps.max(2),
            frames.len()
        )));
    }
    let frames = &frames[..n_chirps];
    let tx = frames[0].tx_channel;
    if frames.iter().any(|f| f.tx_channel != tx) {
        return Err(Error::Domain("range-Doppler map needs frames from a single Tx channel".into()));
    }
    for f in frames {
        f.check_dims(cfg)?;
    }
    let interval = (frames[n_chirps - 1].t_start - frames[0].t_start) / (n_chirps - 1) as f64;
    if !(interval > 0.0) {
        return Err(Error::Domain("frames must be in increasing time order".into()));
    }

    let n_fft = cfg.range_fft_len;
    let n_range = n_fft / 2 + 1;
    let mut planner = FftPlanner::new();
    let rfft = planner.plan_fft_forward(n_fft);
    let dfft = planner.plan_fft_forward(n_chirps);
    let w_fast = Window::Hann.coefficients(cfg.samples_per_chirp);
    let w_slow = Window::Hann.coefficients(n_chirps);

    let mut values = Vec::with_capacity(cfg.n_rx);
    for n in 0..cfg.n_rx {
        // Range spectra per chirp, [chirp][range].
        let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(n_chirps);
        for (c, f) in frames.iter().enumerate() {
            let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
            for (j, (&x, &w)) in f.channel(n).iter().zip(&w_fast).enumerate() {
                buf[j].re = x as f64 * w * w_slow[c];
            }
            rfft.process(&mut buf);
            buf.truncate(n_range);
            rows.push(buf);
        }
        let mut map = vec![vec![Complex64::new(0.0, 0.0); n_range]; n_chirps];
        let mut col = vec![Complex64::new(0.0, 0.0); n_chirps];
        for r in 0..n_range {
            for c in 0..n_chirps {
                col[c] = rows[c][r];
            }
            dfft.process(&mut col);
            for (d, z) in col.iter().enumerate() {
                map[(d + n_chirps / 2) % n_chirps][r] = *z;
            }
        }
        values.push(map);
    }
    Ok(RangeDopplerMap {
        n_doppler: n_chirps,
        n_range,
        range_bin_hz: cfg.sample_rate / n_fft as f64,
        doppler_bin_hz: 1.0 / (n_chirps as f64 * interval),
        range_bin_m: cfg.range_from_beat(cfg.sample_rate / n_fft as f64),
        tx_channel: tx,
        values,
    })
}

/// Strongest tag response near a modulation frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowTimePeak {
    pub f_m: f64,
    pub range: f64,
    /// Doppler-axis frequency at which the tag was found (Hz).
    pub apparent_frequency: f64,
    pub power_db: f64,
    pub snr_db: f64,
}

/// Searches Doppler rows within `window_hz` of `f_m` (skipping the static
/// rows around zero Doppler) and all range bins beyond the first.
pub fn slow_time_localize(map: &RangeDopplerMap, f_m: f64, window_hz: f64, min_snr_db: f64) -> Result<SlowTimePeak> {
    let lo = map.doppler_row(f_m - window_hz);
    let hi = map.doppler_row(f_m + window_hz);
    let zero = map.n_doppler / 2;
    let mut best: Option<(usize, usize, f64)> = None;
    let mut band = Vec::new();
    for d in lo..=hi {
        if d.abs_diff(zero) <= 1 {
            continue;
        }
        for r in 1..map.n_range - 1 {
            let p = map.power(d, r);
            band.push(p);
            if best.is_none_or(|b| p > b.2) {
                best = Some((d, r, p));
            }
        }
    }
    let Some((d, r, p)) = best else {
        return Err(Error::NoTagDetected { f_m });
    };
    let noise = median(&band).max(1e-300);
    let snr_db = 10.0 * (p / noise).log10();
    if !(snr_db >= min_snr_db) {
        return Err(Error::NoTagDetected { f_m });
    }
    let lp = |x: f64| x.max(1e-300).ln();
    let dr = if r > 0 && r + 1 < map.n_range {
        parabolic_offset(lp(map.power(d, r - 1)), lp(p), lp(map.power(d, r + 1)))
    } else {
        0.0
    };
    let dd = if d > 0 && d + 1 < map.n_doppler {
        parabolic_offset(lp(map.power(d - 1, r)), lp(p), lp(map.power(d + 1, r)))
    } else {
        0.0
    };
    Ok(SlowTimePeak {
        f_m,
        range: (r as f64 + dr) * map.range_bin_m,
        apparent_frequency: map.doppler_hz(d) + dd * map.doppler_bin_hz,
        power_db: 10.0 * p.max(1e-300).log10(),
        snr_db,
    })
}

/// Doppler shift (Hz) that radial speed `v` adds to a slow-time tag.
pub fn expected_shift(cfg: &RadarConfig, v: f64) -> f64 {
    cfg.doppler_frequency(v)
}
