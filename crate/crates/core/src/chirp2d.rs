//! Intra-chirp range/azimuth localization.
//!
//! Each chirp is transformed over fast time (Hann window, zero-padded) per Rx
//! channel and then across channels. A tag shows up as a symmetric pair of
//! peaks at f_m ± f_b, the lower one at the mirrored angle. Peak positions are
//! first interpolated on the zero-padded grid and then refined on the exact
//! DTFT, because the elevation stage needs phases accurate to a few mrad.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dsp::{median, parabolic_offset, Window};
use crate::error::{Error, Result};
use crate::radar::RadarConfig;
use crate::synth::IfFrame;

/// Frequency band searched for one tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagChannel {
    pub f_m: f64,
    /// Half-width of the search band around f_m (Hz).
    pub half_width: f64,
}

impl TagChannel {
    pub fn new(f_m: f64, half_width: f64) -> Self {
        Self { f_m, half_width }
    }
}

/// Detector tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub window: Window,
    /// Minimum 2D peak SNR over the band's noise estimate (dB).
    pub snr_threshold_db: f64,
    /// Allowed offset of a pair's midpoint from f_m, in range-FFT bins.
    pub pair_tolerance_bins: f64,
    /// A disjoint competing pair within this many dB of the best is ambiguous.
    pub ambiguity_margin_db: f64,
    /// Refine peaks on the exact DTFT after grid interpolation.
    pub refine: bool,
    /// Average the azimuth of both peaks instead of using the upper one only.
    pub mirrored_azimuth: bool,
    /// At most this many local maxima are considered per band.
    pub max_candidates: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            snr_threshold_db: 10.0,
            pair_tolerance_bins: 2.0,
            ambiguity_margin_db: 6.0,
            refine: true,
            mirrored_azimuth: false,
            max_candidates: 32,
        }
    }
}

/// Per-channel range spectra of one chirp plus what is needed to evaluate
/// the 2D spectrum anywhere.
#[derive(Clone)]
pub struct RangeAzimuthSpectrum {
    pub k: u64,
    pub tx_channel: usize,
    pub n_rx: usize,
    pub n_samples: usize,
    pub range_fft_len: usize,
    pub angle_fft_len: usize,
    pub sample_rate: f64,
    /// `range[n][b]` for b in 0..=range_fft_len/2.
    pub range: Vec<Vec<Complex64>>,
    /// Windowed fast-time samples, `windowed[n][j]`.
    windowed: Vec<Vec<f64>>,
    /// The same samples sample-major, `interleaved[j·n_rx + n]`.
    interleaved: Vec<f64>,
    angle_fft: Arc<dyn Fft<f64>>,
}

impl RangeAzimuthSpectrum {
    pub fn n_range_bins(&self) -> usize {
        self.range_fft_len / 2 + 1
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate / self.range_fft_len as f64
    }

    /// Signed angular index in [-L/2, L/2) of FFT output index `i`.
    pub fn signed_angle_bin(&self, i: usize) -> f64 {
        let l = self.angle_fft_len;
        if i >= l / 2 {
            i as f64 - l as f64
        } else {
            i as f64
        }
    }

    /// Angle spectrum at range bin `b`: `Y[u] = Σ_n X_n[b]·e^{-i2πnu/L}`.
    pub fn angle_column(&self, b: usize) -> Vec<Complex64> {
        let mut col = vec![Complex64::new(0.0, 0.0); self.angle_fft_len];
        for n in 0..self.n_rx {
            col[n] = self.range[n][b];
        }
        self.angle_fft.process(&mut col);
        col
    }

    /// Full 2D spectrum, `[angle_fft_len][range_fft_len/2 + 1]`.
    pub fn dense(&self) -> Vec<Vec<Complex64>> {
        let nb = self.n_range_bins();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); nb]; self.angle_fft_len];
        for b in 0..nb {
            for (u, v) in self.angle_column(b).into_iter().enumerate() {
                out[u][b] = v;
            }
        }
        out
    }

    /// Range spectrum of channel `n` at an arbitrary frequency (exact DTFT).
    pub fn dtft_channel(&self, n: usize, f: f64) -> Complex64 {
        let step = Complex64::from_polar(1.0, -TAU * f / self.sample_rate);
        let mut rot = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &x) in self.windowed[n].iter().enumerate() {
            acc += rot * x;
            rot *= step;
            if j % 512 == 511 {
                // Re-anchor the recurrence to bound rounding drift.
                rot = Complex64::from_polar(1.0, -TAU * f * (j + 1) as f64 / self.sample_rate);
            }
        }
        acc
    }

    /// All channels at once, sharing one phasor recurrence.
    fn dtft_all(&self, f: f64) -> Vec<Complex64> {
        let step = Complex64::from_polar(1.0, -TAU * f / self.sample_rate);
        let mut rot = Complex64::new(1.0, 0.0);
        let mut re = vec![0.0; self.n_rx];
        let mut im = vec![0.0; self.n_rx];
        for (j, xs) in self.interleaved.chunks_exact(self.n_rx).enumerate() {
            for ((r, i), &x) in re.iter_mut().zip(im.iter_mut()).zip(xs) {
                *r += rot.re * x;
                *i += rot.im * x;
            }
            rot *= step;
            if j % 512 == 511 {
                rot = Complex64::from_polar(1.0, -TAU * f * (j + 1) as f64 / self.sample_rate);
            }
        }
        re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect()
    }

    /// Sum of squared magnitudes over the stored half spectrum, counting the
    /// mirrored negative-frequency bins, times the angle FFT length. Equal to
    /// the energy of the full 2D spectrum.
    pub fn energy(&self) -> f64 {
        let nb = self.n_range_bins();
        let mut e = 0.0;
        for ch in &self.range {
            for (b, z) in ch.iter().enumerate() {
                let w = if b == 0 || (b == nb - 1 && self.range_fft_len % 2 == 0) {
                    1.0
                } else {
                    2.0
                };
                e += w * z.norm_sqr();
            }
        }
        e * self.angle_fft_len as f64
    }

    /// Energy of the windowed time-domain data scaled by both FFT lengths.
    pub fn windowed_energy(&self) -> f64 {
        let e: f64 = self.windowed.iter().flatten().map(|x| x * x).sum();
        e * (self.range_fft_len * self.angle_fft_len) as f64
    }
}

/// Beamformed response at (f, u) from per-channel DTFT values.
fn beam(xs: &[Complex64], u: f64, l: usize) -> Complex64 {
    xs.iter()
        .enumerate()
        .map(|(n, x)| x * Complex64::from_polar(1.0, -TAU * n as f64 * u / l as f64))
        .sum()
}

/// Reusable FFT plans and window for one radar configuration.
pub struct SpectrumEngine {
    cfg: RadarConfig,
    window: Vec<f64>,
    range_fft: Arc<dyn RealToComplex<f64>>,
    angle_fft: Arc<dyn Fft<f64>>,
    window_kind: Window,
}

impl SpectrumEngine {
    pub fn new(cfg: &RadarConfig, window: Window) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            cfg: cfg.clone(),
            window: window.coefficients(cfg.samples_per_chirp),
            range_fft: RealFftPlanner::new().plan_fft_forward(cfg.range_fft_len),
            angle_fft: planner.plan_fft_forward(cfg.angle_fft_len),
            window_kind: window,
        }
    }

    pub fn window(&self) -> Window {
        self.window_kind
    }

    pub fn spectrum(&self, frame: &IfFrame) -> Result<RangeAzimuthSpectrum> {
        frame.check_dims(&self.cfg)?;
        let n_fft = self.cfg.range_fft_len;
        let nb = n_fft / 2 + 1;
        let mut range = Vec::with_capacity(frame.n_rx);
        let mut windowed = Vec::with_capacity(frame.n_rx);
        let mut buf = vec![0.0; n_fft];
        let mut scratch = self.range_fft.make_scratch_vec();
        for n in 0..frame.n_rx {
            let w: Vec<f64> = frame
                .channel(n)
                .iter()
                .zip(&self.window)
                .map(|(&x, &w)| x as f64 * w)
                .collect();
            buf.iter_mut().for_each(|z| *z = 0.0);
            buf[..w.len()].copy_from_slice(&w);
            let mut out = vec![Complex64::new(0.0, 0.0); nb];
            self.range_fft
                .process_with_scratch(&mut buf, &mut out, &mut scratch)
                .expect("buffer lengths match the plan");
            range.push(out);
            windowed.push(w);
        }
        Ok(RangeAzimuthSpectrum {
            k: frame.k,
            tx_channel: frame.tx_channel,
            n_rx: frame.n_rx,
            n_samples: frame.n_samples,
            range_fft_len: n_fft,
            angle_fft_len: self.cfg.angle_fft_len,
            sample_rate: self.cfg.sample_rate,
            range,
            interleaved: (0..frame.n_samples)
                .flat_map(|j| windowed.iter().map(move |w| w[j]))
                .collect(),
            windowed,
            angle_fft: self.angle_fft.clone(),
        })
    }
}

/// 2D spectrum of `frame` with the default Hann window.
pub fn range_azimuth_spectrum(cfg: &RadarConfig, frame: &IfFrame) -> Result<RangeAzimuthSpectrum> {
    SpectrumEngine::new(cfg, Window::Hann).spectrum(frame)
}

/// The two peaks of one tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPair {
    pub f_plus: f64,
    pub f_minus: f64,
    pub phi_plus: f64,
    pub phi_minus: f64,
    /// Signed interpolated angular index of the upper peak.
    pub azimuth_bin_plus: f64,
    /// Signed interpolated angular index of the lower peak.
    pub azimuth_bin_minus: f64,
    pub snr_db_plus: f64,
    pub snr_db_minus: f64,
}

/// One tag observation in one chirp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub k: u64,
    pub tx_channel: usize,
    pub tag_id: u32,
    pub f_b: f64,
    pub range: f64,
    pub azimuth: f64,
    pub phi_plus: f64,
    pub phi_minus: f64,
    pub snr_db: f64,
    /// Midpoint of the two peaks, the tag's apparent modulation frequency.
    pub f_center: f64,
    /// Inter-element phase step at the upper and lower peak (rad).
    pub mu_plus: f64,
    pub mu_minus: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    bin: usize,
    freq: f64,
    power: f64,
}

#[derive(Debug, Clone, Copy)]
struct RefinedPeak {
    f: f64,
    u: f64,
    value: Complex64,
}

fn log_power(z: Complex64) -> f64 {
    z.norm_sqr().max(1e-300).ln()
}

/// Grid-interpolated peak near range bin `b` and angular index `u0`
/// (searched within ±`span` angular bins).
fn grid_peak(s: &RangeAzimuthSpectrum, b: usize, u0: f64, span: usize) -> (f64, f64) {
    let l = s.angle_fft_len as i64;
    let col = s.angle_column(b);
    let centre = u0.round() as i64;
    let idx = |u: i64| u.rem_euclid(l) as usize;
    let mut best = centre;
    for d in -(span as i64)..=(span as i64) {
        if col[idx(centre + d)].norm_sqr() > col[idx(best)].norm_sqr() {
            best = centre + d;
        }
    }
    let du = parabolic_offset(
        log_power(col[idx(best - 1)]),
        log_power(col[idx(best)]),
        log_power(col[idx(best + 1)]),
    );
    let u = best as f64 + du;
    let at = |bb: usize| log_power(beam(&s.range.iter().map(|c| c[bb]).collect::<Vec<_>>(), u, s.angle_fft_len));
    let nb = s.n_range_bins();
    let df = if b >= 1 && b + 1 < nb {
        parabolic_offset(at(b - 1), at(b), at(b + 1))
    } else {
        0.0
    };
    ((b as f64 + df) * s.bin_hz(), u)
}

/// Maximizes |Y(f, u)| on the exact DTFT by coordinate ascent from (f, u).
fn refine_peak(s: &RangeAzimuthSpectrum, f0: f64, u0: f64) -> RefinedPeak {
    let l = s.angle_fft_len;
    let mut f = f0;
    let mut u = u0;
    let mut xs = s.dtft_all(f);
    let mut hf = 0.25 * s.bin_hz();
    let mut hu = 0.25;
    for _ in 0..4 {
        let p = |xs: &[Complex64], u: f64| log_power(beam(xs, u, l));
        let du = parabolic_offset(p(&xs, u - hu), p(&xs, u), p(&xs, u + hu));
        u += du * hu * 2.0;
        let lm = p(&s.dtft_all(f - hf), u);
        let c = p(&xs, u);
        let rp = p(&s.dtft_all(f + hf), u);
        let df = parabolic_offset(lm, c, rp);
        f += df * hf * 2.0;
        xs = s.dtft_all(f);
        hf *= 0.2;
        hu *= 0.2;
    }
    RefinedPeak {
        f,
        u,
        value: beam(&xs, u, l),
    }
}

/// Grid-only estimate: interpolated (f, u) and the exact response there.
fn grid_only(s: &RangeAzimuthSpectrum, f: f64, u: f64) -> RefinedPeak {
    let xs = s.dtft_all(f);
    RefinedPeak {
        f,
        u,
        value: beam(&xs, u, s.angle_fft_len),
    }
}

/// Finds the tag's peak pair inside `channel`.
pub fn detect_tag_peaks(
    s: &RangeAzimuthSpectrum,
    channel: &TagChannel,
    det: &DetectorConfig,
) -> Result<PeakPair> {
    let none = || Error::NoTagDetected { f_m: channel.f_m };
    let bin_hz = s.bin_hz();
    let nb = s.n_range_bins();
    let lo = (((channel.f_m - channel.half_width) / bin_hz).ceil().max(1.0)) as usize;
    let hi = (((channel.f_m + channel.half_width) / bin_hz).floor() as usize).min(nb - 2);
    if lo + 2 > hi {
        return Err(none());
    }
    let p_int: Vec<f64> = (lo..=hi)
        .map(|b| s.range.iter().map(|c| c[b].norm_sqr()).sum())
        .collect();
    let med = median(&p_int);
    let peak_int = p_int.iter().cloned().fold(0.0, f64::max);
    if !(peak_int > 0.0) {
        return Err(none());
    }
    // Median of a scaled chi-square with 2·n_rx degrees of freedom, relative to its mean.
    let dof = 2.0 * s.n_rx as f64;
    let noise = (med / (1.0 - 2.0 / (9.0 * dof / 2.0)).powi(3)).max(peak_int * 1e-30);
    let thr = 10f64.powf(det.snr_threshold_db / 10.0);

    let mut cands: Vec<Candidate> = Vec::new();
    for i in 1..p_int.len() - 1 {
        let p = p_int[i];
        if p > p_int[i - 1] && p >= p_int[i + 1] && p * s.n_rx as f64 >= thr * noise {
            let df = parabolic_offset(p_int[i - 1].ln(), p.ln(), p_int[i + 1].ln());
            cands.push(Candidate {
                bin: lo + i,
                freq: (lo + i) as f64 * bin_hz + df * bin_hz,
                power: p,
            });
        }
    }
    cands.sort_by(|a, b| b.power.total_cmp(&a.power).then(a.bin.cmp(&b.bin)));
    cands.truncate(det.max_candidates);
    // Confirm against the 2D threshold.
    let mut peaks: Vec<(Candidate, f64, f64)> = Vec::new();
    for c in cands {
        let col = s.angle_column(c.bin);
        let (iu, best) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()).then(b.0.cmp(&a.0)))
            .map(|(i, z)| (i, z.norm_sqr()))
            .expect("non-empty angle column");
        if best >= thr * noise {
            peaks.push((c, best, s.signed_angle_bin(iu)));
        }
    }
    peaks.sort_by(|a, b| a.0.freq.total_cmp(&b.0.freq));

    let tol = det.pair_tolerance_bins * bin_hz;
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..peaks.len() {
        for j in i + 1..peaks.len() {
            let mid = 0.5 * (peaks[i].0.freq + peaks[j].0.freq);
            if (mid - channel.f_m).abs() <= tol {
                pairs.push((j, i, peaks[i].1.min(peaks[j].1)));
            }
        }
    }
    if pairs.is_empty() {
        return Err(none());
    }
    pairs.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(peaks[a.1].0.freq.total_cmp(&peaks[b.1].0.freq))
            .then(peaks[a.0].0.freq.total_cmp(&peaks[b.0].0.freq))
    });
    let (ip, im, score) = pairs[0];
    let margin = 10f64.powf(-det.ambiguity_margin_db / 10.0);
    if pairs[1..]
        .iter()
        .any(|&(a, b, sc)| sc >= score * margin && a != ip && a != im && b != ip && b != im)
    {
        return Err(Error::AmbiguousPair { f_m: channel.f_m });
    }

    let (cp, _, up) = peaks[ip];
    let (cm, _, _) = peaks[im];
    let (fp, up) = grid_peak(s, cp.bin, up, 2);
    let (fm, um) = grid_peak(s, cm.bin, -up, 3);
    let (rp, rm) = if det.refine {
        (refine_peak(s, fp, up), refine_peak(s, fm, um))
    } else {
        (grid_only(s, fp, up), grid_only(s, fm, um))
    };
    let snr = |z: Complex64| 10.0 * (z.norm_sqr().max(1e-300) / noise).log10();
    Ok(PeakPair {
        f_plus: rp.f,
        f_minus: rm.f,
        phi_plus: rp.value.arg(),
        phi_minus: rm.value.arg(),
        azimuth_bin_plus: rp.u,
        azimuth_bin_minus: rm.u,
        snr_db_plus: snr(rp.value),
        snr_db_minus: snr(rm.value),
    })
}

/// Range and azimuth of a peak pair.
pub fn localize2d(cfg: &RadarConfig, pair: &PeakPair, k: u64, mirrored_azimuth: bool) -> Result<Detection> {
    let f_b = 0.5 * (pair.f_plus - pair.f_minus);
    let u = if mirrored_azimuth {
        0.5 * (pair.azimuth_bin_plus - pair.azimuth_bin_minus)
    } else {
        pair.azimuth_bin_plus
    };
    let sin_theta = cfg.wavelength() * u / (cfg.d_rx * cfg.angle_fft_len as f64);
    if !(sin_theta.abs() < 1.0) {
        return Err(Error::Domain(format!("|sin Θ| = {} is not below 1", sin_theta.abs())));
    }
    Ok(Detection {
        k,
        tx_channel: cfg.tx_channel(k),
        tag_id: 0,
        f_b,
        range: cfg.range_from_beat(f_b),
        azimuth: sin_theta.asin(),
        phi_plus: pair.phi_plus,
        phi_minus: pair.phi_minus,
        snr_db: pair.snr_db_plus.min(pair.snr_db_minus),
        f_center: 0.5 * (pair.f_plus + pair.f_minus),
        mu_plus: TAU * pair.azimuth_bin_plus / cfg.angle_fft_len as f64,
        mu_minus: TAU * pair.azimuth_bin_minus / cfg.angle_fft_len as f64,
    })
}

/// Detection stage for a fixed set of tag channels.
pub struct Localizer {
    cfg: RadarConfig,
    engine: SpectrumEngine,
    det: DetectorConfig,
}

impl Localizer {
    pub fn new(cfg: &RadarConfig, det: DetectorConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            engine: SpectrumEngine::new(cfg, det.window),
            det,
        }
    }

    pub fn config(&self) -> &RadarConfig {
        &self.cfg
    }

    pub fn detector(&self) -> &DetectorConfig {
        &self.det
    }

    pub fn spectrum(&self, frame: &IfFrame) -> Result<RangeAzimuthSpectrum> {
        self.engine.spectrum(frame)
    }

    /// Detections for each `(tag_id, channel)`, in the same order.
    pub fn localize(&self, frame: &IfFrame, channels: &[(u32, TagChannel)]) -> Result<Vec<Result<Detection>>> {
        let s = self.engine.spectrum(frame)?;
        Ok(channels
            .iter()
            .map(|(id, ch)| {
                let pair = detect_tag_peaks(&s, ch, &self.det)?;
                let mut d = localize2d(&self.cfg, &pair, frame.k, self.det.mirrored_azimuth)?;
                d.tx_channel = frame.tx_channel;
                d.tag_id = *id;
                Ok(d)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::wrap_pi;
    use crate::radar::SPEED_OF_LIGHT;
    use crate::scenario::{Scenario, TagScenario};
    use crate::synth::{synth_chirp, tag_if_phases};
    use crate::trajectory::Trajectory;

    fn small_cfg() -> RadarConfig {
        let mut c = RadarConfig::default_radar();
        c.samples_per_chirp = 256;
        c.chirp_time = 256.0 / c.sample_rate;
        c.tx_period = 2.0 * c.chirp_time;
        c.range_fft_len = 512;
        c.angle_fft_len = 16;
        c
    }

    fn tone_frame(c: &RadarConfig, f: f64, mu: f64) -> IfFrame {
        let mut fr = IfFrame::zeros(0, 0, 0.0, c.n_rx, c.samples_per_chirp);
        for n in 0..c.n_rx {
            for j in 0..c.samples_per_chirp {
                fr.samples[n * c.samples_per_chirp + j] =
                    (TAU * f * j as f64 / c.sample_rate + n as f64 * mu).cos() as f32;
            }
        }
        fr
    }

    #[test]
    fn zero_frame_zero_spectrum() {
        let c = small_cfg();
        let s = range_azimuth_spectrum(&c, &IfFrame::zeros(0, 0, 0.0, c.n_rx, c.samples_per_chirp)).unwrap();
        assert!(s.dense().iter().flatten().all(|z| z.norm() == 0.0));
        let det = detect_tag_peaks(&s, &TagChannel::new(200e3, 20e3), &DetectorConfig::default());
        assert!(matches!(det, Err(Error::NoTagDetected { .. })));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let c = small_cfg();
        let fr = IfFrame::zeros(0, 0, 0.0, 3, c.samples_per_chirp);
        assert!(matches!(range_azimuth_spectrum(&c, &fr), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn single_tone_peak_matches_brute_force() {
        let c = small_cfg();
        let f = 123_456.0;
        let mu = 0.7;
        let s = range_azimuth_spectrum(&c, &tone_frame(&c, f, mu)).unwrap();
        let dense = s.dense();
        let (mut bu, mut bb, mut bp) = (0, 0, 0.0);
        for (u, row) in dense.iter().enumerate() {
            for (b, z) in row.iter().enumerate() {
                if z.norm_sqr() > bp {
                    (bu, bb, bp) = (u, b, z.norm_sqr());
                }
            }
        }
        // Brute-force 2D DFT at the same cell.
        let w = Window::Hann.coefficients(c.samples_per_chirp);
        let fr = tone_frame(&c, f, mu);
        let mut z = Complex64::new(0.0, 0.0);
        for n in 0..c.n_rx {
            for j in 0..c.samples_per_chirp {
                let ph = -TAU * (bb as f64 * j as f64 / c.range_fft_len as f64
                    + bu as f64 * n as f64 / c.angle_fft_len as f64);
                z += Complex64::from_polar(fr.samples[n * c.samples_per_chirp + j] as f64 * w[j], ph);
            }
        }
        assert!((z - dense[bu][bb]).norm() < 1e-9 * z.norm());
        assert!((bb as f64 * s.bin_hz() - f).abs() <= s.bin_hz());
        let u_true = mu * c.angle_fft_len as f64 / TAU;
        assert!((s.signed_angle_bin(bu) - u_true).abs() <= 1.0);
    }

    #[test]
    fn parseval() {
        let c = small_cfg();
        let mut fr = tone_frame(&c, 77_000.0, -1.3);
        for (i, x) in fr.samples.iter_mut().enumerate() {
            *x += ((i * 7919) % 101) as f32 / 101.0 - 0.5;
        }
        let s = range_azimuth_spectrum(&c, &fr).unwrap();
        let dense_e: f64 = s
            .dense()
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(b, z)| if b == 0 || b == row.len() - 1 { z.norm_sqr() } else { 2.0 * z.norm_sqr() })
                    .sum::<f64>()
            })
            .sum();
        assert!((dense_e / s.windowed_energy() - 1.0).abs() < 1e-9);
        assert!((s.energy() / s.windowed_energy() - 1.0).abs() < 1e-9);
    }

    fn static_tag(p: [f64; 3]) -> TagScenario {
        TagScenario::new(1, 250e3, Trajectory::stationary(p))
    }

    #[test]
    fn static_tag_pair_and_phases() {
        let c = RadarConfig::default_radar();
        let tag = static_tag([6.8, 1.2, 0.5]);
        let sc = Scenario::new(1.0).with_tag(tag.clone());
        let k = 3;
        let fr = synth_chirp(&c, &sc, k, 0).unwrap();
        let s = range_azimuth_spectrum(&c, &fr).unwrap();
        let pair = detect_tag_peaks(&s, &TagChannel::new(250e3, 30e3), &DetectorConfig::default()).unwrap();
        let truth = tag_if_phases(&c, &tag, k).unwrap();
        assert!((pair.f_plus - (250e3 + truth.f_b)).abs() < 0.5, "{}", pair.f_plus);
        assert!((pair.f_minus - (250e3 - truth.f_b)).abs() < 0.5);
        assert!(wrap_pi(pair.phi_plus - truth.psi_plus).abs() < 1e-2);
        assert!(wrap_pi(pair.phi_minus - truth.psi_minus).abs() < 1e-2);
        assert!((pair.azimuth_bin_plus + pair.azimuth_bin_minus).abs() < 1.0);
        let d = localize2d(&c, &pair, k, false).unwrap();
        let r = (6.8f64 * 6.8 + 1.44 + 0.25).sqrt();
        assert!((d.range - r).abs() < 0.01);
        assert!((d.azimuth - 1.2f64.atan2(6.8)).abs() < 0.1f64.to_radians());
        // Sum and difference recover modulation and propagation phases mod π.
        let half_sum = 0.5 * (pair.phi_plus + pair.phi_minus);
        let half_diff = 0.5 * (pair.phi_plus - pair.phi_minus);
        assert!(crate::dsp::wrap_half_pi(half_sum - truth.phi_m).abs() < 1e-2);
        assert!(crate::dsp::wrap_half_pi(half_diff - truth.phi_geo).abs() < 1e-2);
    }

    #[test]
    fn pair_spacing_for_seven_metres() {
        let c = RadarConfig::default_radar();
        let sc = Scenario::new(1.0).with_tag(static_tag([7.0, 0.0, 0.0]));
        let fr = synth_chirp(&c, &sc, 0, 0).unwrap();
        let s = range_azimuth_spectrum(&c, &fr).unwrap();
        let pair = detect_tag_peaks(&s, &TagChannel::new(250e3, 30e3), &DetectorConfig::default()).unwrap();
        let fb = 2.0 * 7.0 * c.chirp_slope() / SPEED_OF_LIGHT;
        assert!((pair.f_plus - pair.f_minus - 2.0 * fb).abs() < 1.0);
        let d = localize2d(&c, &pair, 0, false).unwrap();
        assert!((d.range - 7.0).abs() < 1e-3);
        assert!(d.azimuth.abs() < 1e-3);
    }

    #[test]
    fn thirty_degrees_azimuth() {
        let c = RadarConfig::default_radar();
        let th = 30f64.to_radians();
        let sc = Scenario::new(1.0).with_tag(static_tag([8.0 * th.cos(), 8.0 * th.sin(), 0.0]));
        let fr = synth_chirp(&c, &sc, 0, 0).unwrap();
        let s = range_azimuth_spectrum(&c, &fr).unwrap();
        let pair = detect_tag_peaks(&s, &TagChannel::new(250e3, 30e3), &DetectorConfig::default()).unwrap();
        let d = localize2d(&c, &pair, 0, false).unwrap();
        assert!((d.azimuth - th).abs() < 0.2f64.to_radians());
        let m = localize2d(&c, &pair, 0, true).unwrap();
        assert!((m.azimuth - th).abs() < 0.2f64.to_radians());
    }

    #[test]
    fn noise_only_is_not_a_tag() {
        let c = RadarConfig::default_radar();
        let mut sc = Scenario::new(1.0);
        sc.noise_floor_dbm = Some(-90.0);
        let fr = synth_chirp(&c, &sc, 0, 5).unwrap();
        let s = range_azimuth_spectrum(&c, &fr).unwrap();
        let r = detect_tag_peaks(&s, &TagChannel::new(250e3, 30e3), &DetectorConfig::default());
        assert!(matches!(r, Err(Error::NoTagDetected { .. })), "{r:?}");
    }

    #[test]
    fn two_tags_resolved_independently() {
        let c = RadarConfig::default_radar();
        let sc = Scenario::new(1.0)
            .with_tag(TagScenario::new(1, 200e3, Trajectory::stationary([5.0, 1.0, 0.0])))
            .with_tag(TagScenario::new(2, 300e3, Trajectory::stationary([9.0, -2.0, 0.3])));
        let fr = synth_chirp(&c, &sc, 0, 0).unwrap();
        let loc = Localizer::new(&c, DetectorConfig::default());
        let out = loc
            .localize(&fr, &[(1, TagChannel::new(200e3, 40e3)), (2, TagChannel::new(300e3, 40e3))])
            .unwrap();
        let a = out[0].as_ref().unwrap();
        let b = out[1].as_ref().unwrap();
        assert!((a.range - 26f64.sqrt()).abs() < 0.01);
        assert!((b.range - (81.0f64 + 4.0 + 0.09).sqrt()).abs() < 0.01);
        assert_eq!((a.tag_id, b.tag_id), (1, 2));
    }

    #[test]
    fn colliding_tags_are_ambiguous() {
        let c = RadarConfig::default_radar();
        // Same channel, different ranges and comparable power: two plausible pairings.
        let sc = Scenario {
            tags: vec![
                TagScenario::new(1, 250e3, Trajectory::stationary([5.0, 0.0, 0.0])),
                TagScenario::new(2, 250_020.0, Trajectory::stationary([6.4, 0.5, 0.0])),
            ],
            ..Scenario::new(1.0)
        };
        // Bypass the guard-spacing check; this is a deliberate collision.
        let syn_frames: Vec<IfFrame> = sc
            .tags
            .iter()
            .map(|t| synth_chirp(&c, &Scenario::new(1.0).with_tag(t.clone()), 0, 0).unwrap())
            .collect();
        let mut fr = syn_frames[0].clone();
        for (x, y) in fr.samples.iter_mut().zip(&syn_frames[1].samples) {
            *x += *y;
        }
        let s = range_azimuth_spectrum(&c, &fr).unwrap();
        let r = detect_tag_peaks(&s, &TagChannel::new(250e3, 30e3), &DetectorConfig::default());
        assert!(matches!(r, Err(Error::AmbiguousPair { .. })), "{r:?}");
    }

    #[test]
    fn detections_are_deterministic() {
        let c = RadarConfig::default_radar();
        let sc = Scenario::new(1.0).with_tag(static_tag([6.0, -1.0, 0.2])).with_snr(20.0, 7.0);
        let fr = synth_chirp(&c, &sc, 1, 42).unwrap();
        let loc = Localizer::new(&c, DetectorConfig::default());
        let ch = [(1, TagChannel::new(250e3, 30e3))];
        let a = loc.localize(&fr, &ch).unwrap()[0].as_ref().unwrap().clone();
        let b = loc.localize(&fr, &ch).unwrap()[0].as_ref().unwrap().clone();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_range_sine_rejected() {
        let c = RadarConfig::default_radar();
        let pair = PeakPair {
            f_plus: 253e3,
            f_minus: 247e3,
            phi_plus: 0.0,
            phi_minus: 0.0,
            azimuth_bin_plus: c.angle_fft_len as f64 * 0.6,
            azimuth_bin_minus: 0.0,
            snr_db_plus: 30.0,
            snr_db_minus: 30.0,
        };
        assert!(matches!(localize2d(&c, &pair, 0, false), Err(Error::Domain(_))));
        let mut p0 = pair;
        p0.azimuth_bin_plus = 0.0;
        assert_eq!(localize2d(&c, &p0, 0, false).unwrap().azimuth, 0.0);
    }
}
