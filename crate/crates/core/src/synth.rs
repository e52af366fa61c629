//! IF signal synthesis under the TDM-MIMO schedule.
//!
//! Each chirp is simulated with the stop-and-go approximation: every
//! reflector's range and angles are frozen at the chirp start, so motion
//! enters only through the per-chirp beat frequency and phase. The tag
//! modulation runs continuously in absolute time.

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dsp::{derive_seed, wrap_2pi};
use crate::error::{Error, Result};
use crate::radar::{RadarConfig, SPEED_OF_LIGHT};
use crate::scenario::{ModulationBand, ModulationMode, Scenario, TagScenario};
use crate::trajectory::{Spherical, Vec3};

const NOISE_STREAM: u64 = 0;
const JITTER_STREAM: u64 = 1;

/// One chirp of real IF samples, channel-major: `samples[n * n_samples + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IfFrame {
    pub k: u64,
    pub tx_channel: usize,
    pub t_start: f64,
    pub n_rx: usize,
    pub n_samples: usize,
    pub samples: Vec<f32>,
}

impl IfFrame {
    pub fn zeros(k: u64, tx_channel: usize, t_start: f64, n_rx: usize, n_samples: usize) -> Self {
        Self {
            k,
            tx_channel,
            t_start,
            n_rx,
            n_samples,
            samples: vec![0.0; n_rx * n_samples],
        }
    }

    pub fn channel(&self, n: usize) -> &[f32] {
        &self.samples[n * self.n_samples..(n + 1) * self.n_samples]
    }

    pub fn check_dims(&self, cfg: &RadarConfig) -> Result<()> {
        if self.n_rx != cfg.n_rx
            || self.n_samples != cfg.samples_per_chirp
            || self.samples.len() != self.n_rx * self.n_samples
        {
            return Err(Error::DimensionMismatch {
                expected_rx: cfg.n_rx,
                expected_samples: cfg.samples_per_chirp,
                rx: self.n_rx,
                samples: if self.n_rx == 0 {
                    self.samples.len()
                } else {
                    self.samples.len() / self.n_rx
                },
            });
        }
        Ok(())
    }
}

/// Ground-truth phases of a tag's two intra-chirp components at Rx 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagPhases {
    /// Phase of the f_m + f_b component (rad, in [0, 2π)).
    pub psi_plus: f64,
    /// Phase of the f_m − f_b component (rad, in [0, 2π)).
    pub psi_minus: f64,
    pub f_b: f64,
    /// Modulation phase at the chirp start (rad, in [0, 2π)).
    pub phi_m: f64,
    /// Propagation phase incl. the Tx elevation term (rad, in [0, 2π)).
    pub phi_geo: f64,
    /// Rx-to-Rx phase step, 2π·d_rx·sinΘ/λ.
    pub mu: f64,
    pub position: Spherical,
}

/// Fractional modulation cycles elapsed at absolute time `t`.
fn modulation_cycles(tag: &TagScenario, t: f64) -> f64 {
    let d = tag.oscillator_drift * 1e-6;
    let c = tag.f_m * (t + 0.5 * d * t * t) + tag.phi_m0 / TAU;
    c - c.floor()
}

fn geometry_phase(cfg: &RadarConfig, k: u64, p: &Vec3) -> (f64, f64, f64, Spherical) {
    let sph = Spherical::from_cartesian(p);
    let lambda = cfg.wavelength();
    // 2R/λ cycles, reduced before scaling to keep precision.
    let cycles = 2.0 * sph.range / lambda;
    let range_phase = TAU * (cycles - cycles.floor());
    let tx = cfg.tx_channel(k) as f64 * cfg.tx_phase_per_sine() * sph.elevation.sin();
    let mu = cfg.rx_phase_per_sine() * sph.azimuth.sin();
    let f_b = 2.0 * sph.range * cfg.chirp_slope() / SPEED_OF_LIGHT;
    (range_phase + tx, mu, f_b, sph)
}

/// Noiseless phases of `tag`'s components during chirp `k`.
pub fn tag_if_phases(cfg: &RadarConfig, tag: &TagScenario, k: u64) -> Result<TagPhases> {
    let t = cfg.chirp_start(k);
    let p = tag.trajectory.position(t)?;
    let (geo, mu, f_b, sph) = geometry_phase(cfg, k, &p);
    let phi_m = TAU * modulation_cycles(tag, t);
    let phi_geo = wrap_2pi(geo);
    Ok(TagPhases {
        psi_plus: wrap_2pi(phi_m + phi_geo),
        psi_minus: wrap_2pi(phi_m - phi_geo),
        f_b,
        phi_m,
        phi_geo,
        mu,
        position: sph,
    })
}

/// Odd harmonics (with signed Fourier weights) of a unit 50%-duty square wave
/// whose upper sideband stays below Nyquist.
fn square_harmonics(f_m: f64, f_b: f64, nyquist: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut h = 1u32;
    while h as f64 * f_m + f_b < nyquist {
        let sign = if (h / 2) % 2 == 0 { 1.0 } else { -1.0 };
        out.push((h as f64, sign * 2.0 / (PI * h as f64)));
        h += 2;
    }
    out
}

/// Deterministic simulator bound to one radar and scenario.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    cfg: RadarConfig,
    scenario: Scenario,
    seed: u64,
    noise_sigma: f64,
}

impl Synthesizer {
    pub fn new(cfg: &RadarConfig, scenario: &Scenario, seed: u64) -> Result<Self> {
        scenario.validate(cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            scenario: scenario.clone(),
            seed,
            noise_sigma: scenario.noise_variance(cfg).sqrt(),
        })
    }

    pub fn config(&self) -> &RadarConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Number of chirps whose start lies inside the scenario duration.
    pub fn n_chirps(&self) -> u64 {
        (self.scenario.duration_s / self.cfg.tx_period + 1e-9).floor() as u64 + 1
    }

    pub fn chirp(&self, k: u64) -> Result<IfFrame> {
        let cfg = &self.cfg;
        let n_s = cfg.samples_per_chirp;
        let t0 = cfg.chirp_start(k);
        let mut acc = vec![0.0f64; cfg.n_rx * n_s];
        let dt = 1.0 / cfg.sample_rate;
        let nyquist = cfg.sample_rate / 2.0;

        for (ti, tag) in self.scenario.tags.iter().enumerate() {
            let ph = tag_if_phases(cfg, tag, k)?;
            let p = tag.trajectory.position(t0)?;
            let sigma = tag.effective_rcs(&p);
            let a = Scenario::reflector_amplitude(cfg, ph.position.range, sigma)
                * crate::radar::db_to_linear(-tag.nlos_attenuation_db / 2.0);
            let mut geo = ph.phi_geo;
            if tag.phase_jitter_rad > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    self.seed,
                    k,
                    JITTER_STREAM + ti as u64,
                ));
                let n = Normal::new(0.0, tag.phase_jitter_rad).expect("finite jitter");
                geo += n.sample(&mut rng);
            }
            let harmonics = match (tag.modulation_mode, tag.modulation_band) {
                (ModulationMode::Square, ModulationBand::IntraChirp) => {
                    square_harmonics(tag.f_m, ph.f_b, nyquist)
                }
                _ => Vec::new(),
            };
            let d = tag.oscillator_drift * 1e-6;
            let c0 = modulation_cycles(tag, t0);
            let rate = tag.f_m * (1.0 + d * t0);
            let env: Vec<f64> = (0..n_s)
                .map(|j| {
                    let t = j as f64 * dt;
                    let cyc = c0 + rate * t + 0.5 * tag.f_m * d * t * t;
                    let theta = TAU * (cyc - cyc.floor());
                    match (tag.modulation_mode, tag.modulation_band) {
                        (ModulationMode::Harmonic, _) => 2.0 * a * theta.cos(),
                        (ModulationMode::Square, ModulationBand::SlowTime) => {
                            if theta.cos() >= 0.0 {
                                2.0 * a
                            } else {
                                0.0
                            }
                        }
                        (ModulationMode::Square, ModulationBand::IntraChirp) => {
                            let s: f64 =
                                harmonics.iter().map(|&(h, w)| w * (h * theta).cos()).sum();
                            2.0 * a * (0.5 + s)
                        }
                    }
                })
                .collect();
            for n in 0..cfg.n_rx {
                let phase = geo + n as f64 * ph.mu;
                let row = &mut acc[n * n_s..(n + 1) * n_s];
                for (j, x) in row.iter_mut().enumerate() {
                    let t = j as f64 * dt;
                    *x += env[j] * (TAU * ph.f_b * t + phase).cos();
                }
            }
        }

        for c in &self.scenario.clutter {
            let p = c.position_at(t0);
            let (geo, mu, f_b, sph) = geometry_phase(cfg, k, &p);
            let mut a = Scenario::reflector_amplitude(cfg, sph.range, c.rcs);
            if c.co_polarized {
                a *= crate::radar::db_to_linear(-cfg.clutter_suppression / 2.0);
            }
            for n in 0..cfg.n_rx {
                let phase = geo + n as f64 * mu;
                let row = &mut acc[n * n_s..(n + 1) * n_s];
                for (j, x) in row.iter_mut().enumerate() {
                    *x += a * (TAU * f_b * j as f64 * dt + phase).cos();
                }
            }
        }

        if self.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, k, NOISE_STREAM));
            let n = Normal::new(0.0, self.noise_sigma).expect("finite noise");
            for x in acc.iter_mut() {
                *x += n.sample(&mut rng);
            }
        }

        Ok(IfFrame {
            k,
            tx_channel: cfg.tx_channel(k),
            t_start: t0,
            n_rx: cfg.n_rx,
            n_samples: n_s,
            samples: acc.into_iter().map(|x| x as f32).collect(),
        })
    }

    /// Chirps `range`, generated in parallel and returned in chirp order.
    pub fn chirps(&self, range: std::ops::Range<u64>) -> Result<Vec<IfFrame>> {
        range.into_par_iter().map(|k| self.chirp(k)).collect()
    }

    /// Ground truth of every tag at chirp `k`.
    pub fn truth(&self, k: u64) -> Result<Vec<TruthRecord>> {
        let t = self.cfg.chirp_start(k);
        self.scenario
            .tags
            .iter()
            .map(|tag| {
                let s = tag.trajectory.state(t)?;
                let sph = s.spherical();
                Ok(TruthRecord {
                    k,
                    t,
                    tag_id: tag.tag_id,
                    x: s.position.x,
                    y: s.position.y,
                    z: s.position.z,
                    range: sph.range,
                    azimuth: sph.azimuth,
                    elevation: sph.elevation,
                    v_r: s.radial_velocity(),
                    a_r: s.radial_acceleration(),
                })
            })
            .collect()
    }
}

/// Position and radial kinematics of one tag at one chirp start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRecord {
    pub k: u64,
    pub t: f64,
    pub tag_id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub v_r: f64,
    pub a_r: f64,
}

/// One chirp of `scenario` under master seed `seed`.
pub fn synth_chirp(cfg: &RadarConfig, scenario: &Scenario, k: u64, seed: u64) -> Result<IfFrame> {
    Synthesizer::new(cfg, scenario, seed)?.chirp(k)
}

/// Chirps `0..n_chirps`, alternating Tx channels.
pub fn synth_sequence(
    cfg: &RadarConfig,
    scenario: &Scenario,
    n_chirps: u64,
    seed: u64,
) -> Result<Vec<IfFrame>> {
    Synthesizer::new(cfg, scenario, seed)?.chirps(0..n_chirps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::wrap_pi;
    use crate::scenario::ClutterScatterer;
    use crate::trajectory::Trajectory;
    use num_complex::Complex64;

    fn cfg() -> RadarConfig {
        RadarConfig::default_radar()
    }

    fn tag_at(p: [f64; 3]) -> TagScenario {
        TagScenario::new(1, 250e3, Trajectory::stationary(p))
    }

    /// Direct DFT of one channel at frequency `f`.
    fn dft(x: &[f32], f: f64, fs: f64) -> Complex64 {
        x.iter()
            .enumerate()
            .map(|(j, &v)| Complex64::from_polar(v as f64, -TAU * f * j as f64 / fs))
            .sum()
    }

    /// Hann-windowed DFT, which keeps far-away tones from leaking in.
    fn dft_hann(x: &[f32], f: f64, fs: f64) -> Complex64 {
        let w = crate::dsp::Window::Hann.coefficients(x.len());
        x.iter()
            .zip(&w)
            .enumerate()
            .map(|(j, (&v, &wj))| Complex64::from_polar(v as f64 * wj, -TAU * f * j as f64 / fs))
            .sum()
    }

    #[test]
    fn empty_scenario_is_silent() {
        let f = synth_chirp(&cfg(), &Scenario::new(1.0), 3, 1).unwrap();
        assert_eq!(f.tx_channel, 1);
        assert!(f.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn static_phases_at_boresight() {
        let cfg = cfg();
        let tag = tag_at([7.0, 0.0, 0.0]);
        let ph = tag_if_phases(&cfg, &tag, 4).unwrap();
        let geo = (4.0 * PI * 7.0 * cfg.f0 / SPEED_OF_LIGHT).rem_euclid(TAU);
        assert!(wrap_pi(ph.psi_plus - ph.psi_minus - 2.0 * geo).abs() < 1e-6);
        assert!((ph.f_b - 3433.748).abs() < 1e-3, "{}", ph.f_b);
    }

    #[test]
    fn radial_phase_step_matches_velocity() {
        let cfg = cfg();
        let v = 0.37;
        let tag = TagScenario::new(1, 250e3, Trajectory::linear([5.0, 0.0, 0.0], [v, 0.0, 0.0], 1.0));
        for k in 2..10 {
            let a = tag_if_phases(&cfg, &tag, k).unwrap().phi_geo;
            let b = tag_if_phases(&cfg, &tag, k - 2).unwrap().phi_geo;
            let expected = 8.0 * PI * v * cfg.f0 * cfg.tx_period / SPEED_OF_LIGHT;
            assert!(wrap_pi(a - b - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn harmonic_tag_has_two_dominant_bins() {
        // Integer-bin frequencies: f_m and f_b chosen on the DFT grid.
        let mut c = cfg();
        c.samples_per_chirp = 4080;
        let bin = c.sample_rate / c.samples_per_chirp as f64;
        let f_b_target = 12.0 * bin;
        let r = f_b_target * SPEED_OF_LIGHT / (2.0 * c.chirp_slope());
        let mut tag = tag_at([r, 0.0, 0.0]);
        tag.f_m = 850.0 * bin;
        let f = synth_chirp(&c, &Scenario::new(1.0).with_tag(tag.clone()), 0, 0).unwrap();
        let x = f.channel(0);
        let plus = dft(x, tag.f_m + f_b_target, c.sample_rate).norm();
        let minus = dft(x, tag.f_m - f_b_target, c.sample_rate).norm();
        assert!((plus / minus - 1.0).abs() < 1e-3);
        for off in [-40.0, -13.0, -5.0, 0.0, 5.0, 13.0, 40.0] {
            let other = dft(x, tag.f_m + off * bin, c.sample_rate).norm();
            assert!(other < 1e-3 * plus, "bin {off}: {other} vs {plus}");
        }
    }

    #[test]
    fn square_mode_third_harmonic_ratio() {
        let mut c = cfg();
        c.samples_per_chirp = 4080;
        let bin = c.sample_rate / c.samples_per_chirp as f64;
        let f_b = 12.0 * bin;
        let r = f_b * SPEED_OF_LIGHT / (2.0 * c.chirp_slope());
        let mut tag = tag_at([r, 0.0, 0.0]);
        tag.f_m = 425.0 * bin;
        tag.modulation_mode = ModulationMode::Square;
        let f = synth_chirp(&c, &Scenario::new(1.0).with_tag(tag.clone()), 0, 0).unwrap();
        let x = f.channel(0);
        let fund = dft(x, tag.f_m + f_b, c.sample_rate).norm();
        let third = dft(x, 3.0 * tag.f_m + f_b, c.sample_rate).norm();
        assert!((third / fund - 1.0 / 3.0).abs() < 1e-3, "{}", third / fund);
        // Fifth harmonic (5·125 kHz + f_b) is above Nyquist and therefore absent.
        let fifth = dft(x, 5.0 * tag.f_m + f_b, c.sample_rate).norm();
        assert!(fifth < 1e-4 * fund);
    }

    #[test]
    fn square_and_harmonic_fundamentals_agree() {
        let c = cfg();
        let base = tag_at([6.3, 1.1, 0.4]);
        let mut sq = base.clone();
        sq.modulation_mode = ModulationMode::Square;
        let h = synth_chirp(&c, &Scenario::new(1.0).with_tag(base.clone()), 5, 0).unwrap();
        let s = synth_chirp(&c, &Scenario::new(1.0).with_tag(sq), 5, 0).unwrap();
        let ph = tag_if_phases(&c, &base, 5).unwrap();
        for f in [base.f_m + ph.f_b, base.f_m - ph.f_b] {
            let a = dft_hann(h.channel(2), f, c.sample_rate);
            let b = dft_hann(s.channel(2), f, c.sample_rate);
            assert!(wrap_pi(a.arg() - b.arg()).abs() < 1e-6);
            assert!((b.norm() / a.norm() - 2.0 / PI).abs() < 1e-4);
        }
    }

    #[test]
    fn sequence_alternates_and_is_deterministic() {
        let c = cfg();
        let s = Scenario::new(1.0).with_tag(tag_at([7.0, 0.5, 0.2])).with_snr(20.0, 7.0);
        let a = synth_sequence(&c, &s, 4, 9).unwrap();
        assert_eq!(a.iter().map(|f| f.tx_channel).collect::<Vec<_>>(), vec![0, 1, 0, 1]);
        assert_eq!(a[3].t_start, 3.0 * c.tx_period);
        let b = synth_sequence(&c, &s, 4, 9).unwrap();
        assert_eq!(a, b);
        let d = synth_sequence(&c, &s, 4, 10).unwrap();
        assert_ne!(a[0].samples, d[0].samples);
    }

    #[test]
    fn noise_power_matches_floor() {
        let c = cfg();
        let mut s = Scenario::new(1.0);
        s.noise_floor_dbm = Some(-80.0);
        let syn = Synthesizer::new(&c, &s, 3).unwrap();
        let frames = syn.chirps(0..32).unwrap();
        let n: usize = frames.iter().map(|f| f.samples.len()).sum();
        assert!(n >= 1_000_000);
        let p: f64 = frames
            .iter()
            .flat_map(|f| f.samples.iter())
            .map(|&x| (x as f64) * (x as f64))
            .sum::<f64>()
            / n as f64;
        assert!((p / 1e-8 - 1.0).abs() < 0.05, "{p}");
    }

    #[test]
    fn clutter_energy_below_50khz() {
        let c = cfg();
        let mut s = Scenario::new(1.0);
        for (i, r) in [2.0, 9.0, 23.0, 41.0, 59.0].iter().enumerate() {
            s.clutter.push(ClutterScatterer {
                position: [*r, 0.3 * i as f64, -0.2],
                velocity: [0.0; 3],
                rcs: 1.0,
                co_polarized: true,
            });
        }
        let f = synth_chirp(&c, &s, 0, 0).unwrap();
        let x: Vec<f64> = f.channel(0).iter().map(|&v| v as f64).collect();
        let w = crate::dsp::Window::Hann.coefficients(x.len());
        let mut planner = rustfft::FftPlanner::new();
        let fft = planner.plan_fft_forward(x.len());
        let mut buf: Vec<Complex64> =
            x.iter().zip(&w).map(|(a, b)| Complex64::new(a * b, 0.0)).collect();
        fft.process(&mut buf);
        let half = &buf[..x.len() / 2];
        let total: f64 = half.iter().map(|z| z.norm_sqr()).sum();
        let cut = (50e3 / c.sample_rate * x.len() as f64) as usize;
        let low: f64 = half[..cut].iter().map(|z| z.norm_sqr()).sum();
        assert!(low / total >= 0.99, "{}", low / total);
    }

    #[test]
    fn beat_frequency_tracks_motion() {
        let c = cfg();
        let tag = TagScenario::new(1, 250e3, Trajectory::linear([4.0, 1.0, 0.0], [1.5, 0.0, 0.0], 1.0));
        for k in [0u64, 7, 40] {
            let t = c.chirp_start(k);
            let r = tag.trajectory.position(t).unwrap().norm();
            let ph = tag_if_phases(&c, &tag, k).unwrap();
            assert!((ph.f_b - 2.0 * r * c.chirp_slope() / SPEED_OF_LIGHT).abs() < 1e-9);
        }
    }

    #[test]
    fn undefined_trajectory_errors() {
        let tag = TagScenario::new(1, 250e3, Trajectory::linear([4.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.01));
        assert!(matches!(tag_if_phases(&cfg(), &tag, 100), Err(Error::Domain(_))));
    }

    #[test]
    fn dimension_check() {
        let f = IfFrame::zeros(0, 0, 0.0, 4, 16);
        assert!(matches!(f.check_dims(&cfg()), Err(Error::DimensionMismatch { .. })));
    }
}
