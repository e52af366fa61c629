//! Elevation from the two alternating Tx channels.
//!
//! The radial phase of each chirp mixes the propagation phase, which moves
//! with the tag, and the Tx elevation offset, which only appears on odd
//! chirps. Differences across parity (α) carry elevation plus one chirp of
//! Doppler; differences within parity (β) carry two chirps of Doppler and are
//! known only modulo π. Picking the β candidate closest to its predecessor
//! keeps a continuous velocity-phase chain as long as the radial acceleration
//! stays below `a_max`; the remaining two-fold choice between chains is
//! settled by comparing the chain's implied displacement with the measured
//! range. The Doppler-free elevation phase is then δ = α ± β/2.
//!
//! Sign convention: with the Tx offset term on odd chirps, the parity-specific
//! α sign already makes δ = −E on both parities, where E = 2π·d_tx·sinΦ/λ.
//! Both parities therefore feed the same elevation phase e = −δ without a
//! separate inversion. Both estimates describe the geometry at chirp k − 1.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chirp2d::Detection;
use crate::dsp::{ls_slope, mod_pi, wrap_half_pi};
use crate::error::{Error, Result};
use crate::kalman::{gaussian_pdf, Kalman2};
use crate::radar::{RadarConfig, SPEED_OF_LIGHT};

/// How the chain velocity's integer ambiguity is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryPrior {
    /// Match the chain's integrated displacement to the measured range track.
    RangeRate,
    /// Pick the candidate with the smallest implied |v_R|.
    MinSpeed,
    /// Pick the candidate closest to a known radial speed.
    Expected { v_mps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElevationConfig {
    pub prior: TrajectoryPrior,
    /// Enable the Kalman-filter hypothesis test on high-acceleration chirps.
    pub exception_handler: bool,
    /// Fraction of a_max above which a chirp goes to the hypothesis test.
    pub accel_threshold: f64,
    /// Gate (in predictive standard deviations) beyond which a handled chirp is rejected.
    pub gate_sigma: f64,
    /// Consecutive rejections tolerated before the filters are re-seeded.
    pub max_rejections: usize,
    /// Remove the acceleration bias of δ using the local β slope.
    pub accel_compensation: bool,
    /// Same-parity samples used for the β slope.
    pub accel_window: usize,
    /// Chirps per block when resolving the chain ambiguity.
    pub block_len: usize,
    /// Elevation-phase acceleration bound for the elevation filter (rad/s²).
    pub elev_accel_max: f64,
    /// Floor on the per-peak phase noise (rad).
    pub phase_noise_floor: f64,
    /// Replace raw elevation phases by the forward Kalman estimate.
    pub smooth_elevation: bool,
    /// Gaps up to this many chirps keep the elevation unwrapping state.
    pub gap_bridge: u64,
    /// Reference peak phases to the middle of the chirp instead of its start.
    pub mid_chirp_phase: bool,
    /// Reference peak phases to the centre of the Rx array instead of element 0.
    pub array_centre_phase: bool,
}

impl Default for ElevationConfig {
    fn default() -> Self {
        Self {
            prior: TrajectoryPrior::RangeRate,
            exception_handler: true,
            accel_threshold: 0.9,
            gate_sigma: 5.0,
            max_rejections: 3,
            accel_compensation: true,
            accel_window: 8,
            block_len: 128,
            elev_accel_max: 40.0,
            phase_noise_floor: 2e-3,
            smooth_elevation: false,
            gap_bridge: 16,
            mid_chirp_phase: true,
            array_centre_phase: true,
        }
    }
}

/// Per-chirp output of the elevation stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElevationSample {
    pub k: u64,
    /// Chirp whose geometry the elevation describes.
    pub ref_k: u64,
    pub tag_id: u32,
    /// Radial phase in [0, π).
    pub phi_r: f64,
    pub alpha: Option<f64>,
    pub beta_candidates: Option<[f64; 2]>,
    /// Selected velocity phase, unwrapped along the track.
    pub beta_chosen: Option<f64>,
    /// Doppler-free elevation phase δ in [−π/2, π/2).
    pub delta: Option<f64>,
    /// Elevation phase e = −δ unwrapped over time.
    pub delta_unwrapped: Option<f64>,
    pub elevation: Option<f64>,
    pub v_r_est: Option<f64>,
    /// Set when the output is a filter prediction rather than a measurement.
    pub exception_flag: bool,
    pub handler_invoked: bool,
    /// The chain ambiguity was resolved with little margin.
    pub ambiguous: bool,
    /// Sign of the range change over two chirps.
    pub direction: i8,
}

/// φ_R = (φ+ − φ−)/2 reduced to [0, π).
pub fn radial_phase(det: &Detection) -> f64 {
    mod_pi(0.5 * (det.phi_plus - det.phi_minus))
}

/// Radial phase with both peak phases moved from the chirp start to `t_ref`
/// seconds into the chirp and from Rx element 0 to element position `n_ref`.
///
/// Window- and array-centred references decouple the phases from the
/// frequency and angle estimates, so the result is much less noisy than
/// [`radial_phase`]. The range term then advances as if the carrier were the
/// instantaneous chirp frequency at `t_ref`, and a slowly varying azimuth term
/// is added; both behave like range and cancel in δ.
pub fn radial_phase_at(det: &Detection, t_ref: f64, n_ref: f64) -> f64 {
    mod_pi(
        0.5 * (det.phi_plus - det.phi_minus)
            + TAU * det.f_b * t_ref
            + 0.5 * n_ref * (det.mu_plus - det.mu_minus),
    )
}

/// α for chirp `k` and the two β candidates, from radial phases at k, k−1, k−2.
pub fn alpha_beta(k: u64, phi_k: f64, phi_km1: f64, phi_km2: f64) -> (f64, [f64; 2]) {
    let alpha = if k % 2 == 1 {
        phi_km1 - phi_k
    } else {
        phi_k - phi_km1
    };
    let b = mod_pi(phi_k - phi_km2);
    (alpha, [b, b + PI])
}

/// δ from α and a chosen (unwrapped) β.
pub fn delta_from(k: u64, alpha: f64, beta: f64) -> f64 {
    if k % 2 == 1 {
        alpha + beta / 2.0
    } else {
        alpha - beta / 2.0
    }
}

/// Elevation phase obtained by ignoring the Doppler term entirely.
pub fn naive_elevation_phase(alpha: f64) -> f64 {
    wrap_half_pi(-alpha)
}

/// Φ from an unwrapped elevation phase e = 2π·d_tx·sinΦ/λ.
pub fn elevation_from_delta(cfg: &RadarConfig, e: f64, k: u64) -> Result<f64> {
    let s = e / cfg.tx_phase_per_sine();
    if !(s.abs() <= 1.0) {
        return Err(Error::TrackingLost { k });
    }
    Ok(s.asin())
}

/// Half-width of the elevation range that needs no unwrapping (rad).
pub fn principal_elevation_limit(cfg: &RadarConfig) -> f64 {
    (PI / 2.0 / cfg.tx_phase_per_sine()).min(1.0).asin()
}

/// Adds π to `phi_plus` of `round(fraction·n)` isolated detections, chosen
/// reproducibly from `seed` and kept clear of the first `skip` chirps.
/// Returns the affected chirp indices.
pub fn inject_phase_spikes(dets: &mut [Detection], fraction: f64, skip: usize, seed: u64) -> Vec<u64> {
    let n = dets.len();
    if n <= skip {
        return Vec::new();
    }
    let want = (fraction * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::new();
    let pool = n - skip;
    for idx in sample(&mut rng, pool, pool.min(want * 8).max(want)).into_iter() {
        let i = idx + skip;
        if chosen.len() == want {
            break;
        }
        if chosen.iter().all(|&c| c.abs_diff(i) >= 4) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    for &i in &chosen {
        dets[i].phi_plus = crate::dsp::wrap_pi(dets[i].phi_plus + PI);
    }
    chosen.iter().map(|&i| dets[i].k).collect()
}

#[derive(Debug, Clone, Default)]
struct Work {
    k: u64,
    range: f64,
    snr_db: f64,
    phi: f64,
    corrupt: bool,
    alpha: Option<f64>,
    cands: Option<[f64; 2]>,
    beta: Option<f64>,
    beta_measured: bool,
    e_pred: Option<f64>,
    handler: bool,
}

struct Noise {
    var_v: f64,
    var_e: f64,
}

/// Sequential elevation estimator for one tag.
pub struct ElevationEstimator {
    cfg: RadarConfig,
    ecfg: ElevationConfig,
}

impl ElevationEstimator {
    pub fn new(cfg: &RadarConfig, ecfg: ElevationConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.n_tx != 2 {
            return Err(Error::InvalidConfig(format!(
                "elevation disambiguation needs n_tx = 2, got {}",
                cfg.n_tx
            )));
        }
        Ok(Self {
            cfg: cfg.clone(),
            ecfg,
        })
    }

    /// Time within the chirp at which phases are compared.
    pub fn phase_reference(&self) -> f64 {
        if self.ecfg.mid_chirp_phase {
            (self.cfg.samples_per_chirp as f64 - 1.0) / (2.0 * self.cfg.sample_rate)
        } else {
            0.0
        }
    }

    /// Carrier frequency seen by the radial phase at the reference time.
    pub fn effective_carrier(&self) -> f64 {
        self.cfg.f0 + self.cfg.chirp_slope() * self.phase_reference()
    }

    fn v_scale(&self) -> f64 {
        SPEED_OF_LIGHT / (8.0 * PI * self.effective_carrier() * self.cfg.tx_period)
    }

    fn noise(&self, snr_db: f64) -> Noise {
        let snr = 10f64.powf(snr_db / 10.0);
        let s_psi = (1.0 / (2.0 * snr)).sqrt().max(self.ecfg.phase_noise_floor);
        let s_phi = s_psi / 2f64.sqrt();
        let s_beta = 2f64.sqrt() * s_phi;
        let s_delta = 1.5f64.sqrt() * s_phi;
        Noise {
            var_v: (s_beta * self.v_scale()).powi(2),
            var_e: s_delta * s_delta,
        }
    }

    fn radial_kf(&self, v0: f64, var_v: f64) -> Kalman2 {
        let t = self.cfg.tx_period;
        let a_max = self.cfg.max_acceleration();
        Kalman2::new([v0, 0.0], [4.0 * var_v, a_max * a_max], t, a_max * a_max * t / 9.0)
    }

    fn elev_kf(&self, e0: f64, var_e: f64) -> Kalman2 {
        let t = self.cfg.tx_period;
        let m = self.ecfg.elev_accel_max;
        Kalman2::new([e0, 0.0], [4.0 * var_e, 1.0], t, m * m * t / 9.0)
    }

    /// δ correction for the chirp-to-chirp change of the Doppler phase.
    fn compensation(&self, k: u64, slope: Option<f64>) -> f64 {
        match slope {
            Some(s) if self.ecfg.accel_compensation => {
                // dβ/dk = 2·(second difference of the range phase per chirp).
                let d2 = s / 2.0;
                if k % 2 == 1 {
                    d2 / 2.0
                } else {
                    -d2 / 2.0
                }
            }
            _ => 0.0,
        }
    }

    /// Runs the estimator over one tag's detections (any order; gaps allowed).
    pub fn run(&self, detections: &[Detection]) -> Result<Vec<ElevationSample>> {
        let mut dets: Vec<Detection> = detections.to_vec();
        dets.sort_by_key(|d| d.k);
        if dets.windows(2).any(|w| w[0].k == w[1].k) {
            return Err(Error::Domain("duplicate chirp index in detection stream".into()));
        }
        let mut out = Vec::with_capacity(dets.len());
        let mut carry: Option<(u64, f64)> = None;
        let mut start = 0;
        for i in 1..=dets.len() {
            if i == dets.len() || dets[i].k != dets[i - 1].k + 1 {
                let seg = &dets[start..i];
                let work = self.forward(seg);
                let samples = self.finish(seg, &work, &mut carry);
                out.extend(samples);
                start = i;
            }
        }
        Ok(out)
    }

    /// Causal pass: β chain, exception handling, filter predictions.
    fn forward(&self, seg: &[Detection]) -> Vec<Work> {
        let vs = self.v_scale();
        let t_ref = self.phase_reference();
        let n_ref = if self.ecfg.array_centre_phase {
            (self.cfg.n_rx as f64 - 1.0) / 2.0
        } else {
            0.0
        };
        let a_max = self.cfg.max_acceleration();
        let thr = self.ecfg.accel_threshold;
        let mut w: Vec<Work> = seg
            .iter()
            .map(|d| Work {
                k: d.k,
                range: d.range,
                snr_db: d.snr_db,
                phi: radial_phase_at(d, t_ref, n_ref),
                ..Default::default()
            })
            .collect();
        let mut kf_r: Option<Kalman2> = None;
        let mut kf_e: Option<Kalman2> = None;
        let mut r_updates = 0usize;
        let mut rejections = 0usize;
        let mut trail: [VecDeque<(f64, f64)>; 2] = [VecDeque::new(), VecDeque::new()];

        for i in 0..w.len() {
            let k = w[i].k;
            let nz = self.noise(w[i].snr_db);
            if let Some(kf) = kf_r.as_mut() {
                kf.predict();
            }
            if let Some(kf) = kf_e.as_mut() {
                kf.predict();
            }
            w[i].e_pred = kf_e.as_ref().map(|kf| kf.value());
            if i < 2 {
                continue;
            }
            let parity = (k % 2) as usize;
            let slope = |trail: &[VecDeque<(f64, f64)>; 2]| {
                let t = &trail[parity];
                if t.len() >= 3 {
                    let x: Vec<f64> = t.iter().map(|p| p.0).collect();
                    let y: Vec<f64> = t.iter().map(|p| p.1).collect();
                    ls_slope(&x, &y)
                } else {
                    None
                }
            };
            let alpha_if = |w: &[Work], i: usize| {
                (!w[i].corrupt && !w[i - 1].corrupt).then(|| {
                    alpha_beta(w[i].k, w[i].phi, w[i - 1].phi, w[i - 1].phi).0
                })
            };
            let b = (!w[i - 2].corrupt).then(|| {
                let (_, c) = alpha_beta(k, w[i].phi, w[i - 1].phi, w[i - 2].phi);
                w[i].cands = Some(c);
                c[0]
            });
            let prev = w[i - 1].beta;
            let predicted_beta = || match (&kf_r, prev) {
                (Some(kf), _) => Some(kf.value() / vs),
                (None, p) => p,
            };
            let chosen: Option<f64>;
            let mut measured = false;
            match (b, prev) {
                (Some(b), None) => {
                    chosen = Some(b);
                    measured = true;
                }
                (None, _) => chosen = predicted_beta(),
                (Some(b), Some(p)) => {
                    let c1 = b + PI * ((p - b) / PI).round();
                    let d = c1 - p;
                    let observed_accel = d.abs() * 2.0 / PI;
                    let ready = r_updates >= 4 && kf_r.is_some();
                    let kf_accel = kf_r.as_ref().map_or(0.0, |kf| kf.rate().abs() / a_max);
                    if self.ecfg.exception_handler && ready && (observed_accel > thr || kf_accel > thr) {
                        w[i].handler = true;
                        let c2 = if d >= 0.0 { c1 - PI } else { c1 + PI };
                        let kr = kf_r.as_ref().expect("ready");
                        let (vm, vv) = kr.predicted_measurement(nz.var_v);
                        let alpha = alpha_if(&w, i);
                        let comp = self.compensation(k, slope(&trail));
                        let e_stats = kf_e.as_ref().map(|kf| kf.predicted_measurement(nz.var_e));
                        let assess = |c: f64| {
                            let v = c * vs;
                            let mut score = gaussian_pdf(v, vm, vv);
                            let mut z = (v - vm).abs() / vv.sqrt();
                            if let (Some(a), Some((em, ev))) = (alpha, e_stats) {
                                let e = -(delta_from(k, a, c) + comp);
                                let eu = em + wrap_half_pi(e - em);
                                score *= gaussian_pdf(eu, em, ev);
                                z = z.max((eu - em).abs() / ev.sqrt());
                            }
                            (score, z)
                        };
                        let (s1, z1) = assess(c1);
                        let (s2, z2) = assess(c2);
                        let (best, zb) = if s2 > s1 { (c2, z2) } else { (c1, z1) };
                        if zb > self.ecfg.gate_sigma {
                            rejections += 1;
                            if rejections > self.ecfg.max_rejections {
                                // Persistent disagreement: trust the measurement and re-seed.
                                rejections = 0;
                                chosen = Some(c1);
                                measured = true;
                                kf_r = Some(self.radial_kf(c1 * vs, nz.var_v));
                                kf_e = None;
                                r_updates = 0;
                            } else {
                                w[i].corrupt = true;
                                chosen = predicted_beta();
                            }
                        } else {
                            rejections = 0;
                            chosen = Some(best);
                            measured = true;
                        }
                    } else {
                        rejections = 0;
                        chosen = Some(c1);
                        measured = true;
                    }
                }
            }
            w[i].beta = chosen;
            w[i].beta_measured = measured && !w[i].corrupt;
            w[i].alpha = alpha_if(&w, i);
            if w[i].beta_measured {
                let beta = chosen.expect("measured");
                match kf_r.as_mut() {
                    Some(kf) => {
                        kf.update(beta * vs, nz.var_v);
                        r_updates += 1;
                    }
                    None => kf_r = Some(self.radial_kf(beta * vs, nz.var_v)),
                }
                let t = &mut trail[parity];
                t.push_back((k as f64, beta));
                if t.len() > self.ecfg.accel_window {
                    t.pop_front();
                }
            }
            if let (Some(a), Some(beta), false) = (w[i].alpha, chosen, w[i].corrupt) {
                let e = -(delta_from(k, a, beta) + self.compensation(k, slope(&trail)));
                match kf_e.as_mut() {
                    Some(kf) => {
                        let em = kf.value();
                        kf.update(em + wrap_half_pi(e - em), nz.var_e);
                    }
                    None => kf_e = Some(self.elev_kf(wrap_half_pi(e), nz.var_e)),
                }
            }
        }
        w
    }

    /// Offline pass: chain ambiguity, compensation, unwrapping.
    fn finish(
        &self,
        seg: &[Detection],
        w: &[Work],
        carry: &mut Option<(u64, f64)>,
    ) -> Vec<ElevationSample> {
        let vs = self.v_scale();
        let f_eff = self.effective_carrier();
        let v_amb = SPEED_OF_LIGHT / (8.0 * f_eff * self.cfg.tx_period);
        let lambda_4pi = SPEED_OF_LIGHT / (4.0 * PI * f_eff);
        let t_step = self.cfg.tx_period;

        // Integer offset of the chain velocity, per block.
        let n = w.len();
        let mut j_of = vec![0i64; n];
        let mut amb_of = vec![false; n];
        let mut disp = 0.0;
        let mut resid: Vec<Option<f64>> = vec![None; n];
        for i in 0..n {
            if let Some(b) = w[i].beta {
                disp += b / 2.0 * lambda_4pi;
                resid[i] = Some(w[i].range - disp);
            }
        }
        let block = self.ecfg.block_len.max(8);
        let mut last: Option<(i64, bool)> = None;
        let mut pending: Vec<std::ops::Range<usize>> = Vec::new();
        let mut s = 0;
        while s < n {
            let e = (s + block).min(n);
            // Fold a short tail into the previous block.
            let e = if n - e < block / 2 { n } else { e };
            let idx: Vec<usize> = (s..e).filter(|&i| resid[i].is_some()).collect();
            let frac = if idx.len() >= 8 {
                match self.ecfg.prior {
                    TrajectoryPrior::RangeRate => {
                        let x: Vec<f64> = idx.iter().map(|&i| w[i].k as f64 * t_step).collect();
                        let y: Vec<f64> = idx.iter().map(|&i| resid[i].expect("some")).collect();
                        ls_slope(&x, &y).map(|sl| sl / v_amb)
                    }
                    TrajectoryPrior::MinSpeed | TrajectoryPrior::Expected { .. } => {
                        let target = match self.ecfg.prior {
                            TrajectoryPrior::Expected { v_mps } => v_mps,
                            _ => 0.0,
                        };
                        let mean_v = idx
                            .iter()
                            .map(|&i| w[i].beta.expect("some") * vs)
                            .sum::<f64>()
                            / idx.len() as f64;
                        Some((target - mean_v) / v_amb)
                    }
                }
            } else {
                None
            };
            match frac {
                Some(f) => {
                    let j = f.round() as i64;
                    let amb = (f - f.round()).abs() > 0.4;
                    for r in pending.drain(..) {
                        for i in r {
                            j_of[i] = j;
                            amb_of[i] = amb;
                        }
                    }
                    for i in s..e {
                        j_of[i] = j;
                        amb_of[i] = amb;
                    }
                    last = Some((j, amb));
                }
                None => match last {
                    Some((j, amb)) => {
                        for i in s..e {
                            j_of[i] = j;
                            amb_of[i] = amb;
                        }
                    }
                    None => pending.push(s..e),
                },
            }
            s = e;
        }

        // Centered same-parity β slope for the δ compensation.
        let half = self.ecfg.accel_window.max(3);
        let centred_slope = |i: usize| -> Option<f64> {
            let par = w[i].k % 2;
            let mut x = Vec::new();
            let mut y = Vec::new();
            let lo = i.saturating_sub(2 * half);
            let hi = (i + 2 * half).min(n - 1);
            for m in lo..=hi {
                if w[m].k % 2 == par && w[m].beta_measured {
                    x.push(w[m].k as f64);
                    y.push(w[m].beta.expect("measured"));
                }
            }
            if x.len() >= 3 {
                ls_slope(&x, &y)
            } else {
                None
            }
        };

        let mut out = Vec::with_capacity(n);
        let mut kf_s: Option<Kalman2> = None;
        for i in 0..n {
            let d = &seg[i];
            let k = w[i].k;
            let mut sample = ElevationSample {
                k,
                ref_k: k.saturating_sub(1),
                tag_id: d.tag_id,
                phi_r: w[i].phi,
                alpha: w[i].alpha,
                beta_candidates: w[i].cands,
                beta_chosen: None,
                delta: None,
                delta_unwrapped: None,
                elevation: None,
                v_r_est: None,
                exception_flag: false,
                handler_invoked: w[i].handler,
                ambiguous: amb_of[i],
                direction: if i >= 2 {
                    (w[i].range - w[i - 2].range).signum() as i8
                } else {
                    0
                },
            };
            let Some(beta_a) = w[i].beta else {
                out.push(sample);
                continue;
            };
            let j = j_of[i];
            sample.beta_chosen = Some(beta_a + j as f64 * PI);
            sample.v_r_est = Some(beta_a * vs + j as f64 * v_amb);
            let offset = j as f64 * PI / 2.0;
            let e_wrapped = match (w[i].alpha, w[i].corrupt) {
                (Some(a), false) => {
                    let delta_a = delta_from(k, a, beta_a) + self.compensation(k, centred_slope(i));
                    let delta = wrap_half_pi(delta_a + offset);
                    sample.delta = Some(delta);
                    Some(-delta)
                }
                _ => {
                    sample.exception_flag = true;
                    w[i].e_pred.map(|e| e - offset)
                }
            };
            let Some(e_w) = e_wrapped else {
                out.push(sample);
                continue;
            };
            let e = match *carry {
                Some((kc, prev)) if k <= kc + self.ecfg.gap_bridge => prev + wrap_half_pi(e_w - prev),
                _ => wrap_half_pi(e_w),
            };
            *carry = Some((k, e));
            let nz = self.noise(w[i].snr_db);
            let e_out = if self.ecfg.smooth_elevation {
                let kf = kf_s.get_or_insert_with(|| self.elev_kf(e, nz.var_e));
                kf.predict();
                kf.update(e, nz.var_e);
                kf.value()
            } else {
                e
            };
            sample.delta_unwrapped = Some(e_out);
            sample.elevation = elevation_from_delta(&self.cfg, e_out, k).ok();
            out.push(sample);
        }
        out
    }
}

/// Convenience wrapper around [`ElevationEstimator`].
pub fn estimate_elevation(
    cfg: &RadarConfig,
    detections: &[Detection],
    ecfg: &ElevationConfig,
) -> Result<Vec<ElevationSample>> {
    ElevationEstimator::new(cfg, *ecfg)?.run(detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::wrap_pi;

    fn cfg() -> RadarConfig {
        RadarConfig::default_radar()
    }

    fn det(k: u64, plus: f64, minus: f64) -> Detection {
        Detection {
            k,
            tx_channel: (k % 2) as usize,
            tag_id: 1,
            f_b: 0.0,
            range: 7.0,
            azimuth: 0.0,
            phi_plus: plus,
            phi_minus: minus,
            snr_db: 200.0,
            f_center: 250e3,
            mu_plus: 0.0,
            mu_minus: 0.0,
        }
    }

    #[test]
    fn radial_phase_examples() {
        assert!((radial_phase(&det(0, 1.0, 0.2)) - 0.4).abs() < 1e-15);
        let r = radial_phase(&det(0, 2.0 * PI + 0.4 - 3.0, -3.0));
        assert!((0.0..PI).contains(&r));
        assert!(wrap_pi(2.0 * r - (2.0 * PI + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn beta_candidates_are_pi_apart() {
        for (a, b, c) in [(0.1, 2.0, 3.0), (3.1, 0.0, 0.2), (1.0, 1.0, 1.0)] {
            let (_, cands) = alpha_beta(5, a, b, c);
            assert!((cands[1] - cands[0] - PI).abs() < 1e-12);
            assert!((0.0..PI).contains(&cands[0]));
        }
        let (_, c) = alpha_beta(4, 0.7, 0.3, 0.7);
        assert!(c[0].abs() < 1e-15);
    }

    #[test]
    fn elevation_from_delta_examples() {
        let c = cfg();
        assert_eq!(elevation_from_delta(&c, 0.0, 0).unwrap(), 0.0);
        let phi = elevation_from_delta(&c, PI / 2.0, 0).unwrap();
        assert!((phi.sin() - 0.125).abs() < 1e-12);
        assert!((phi.to_degrees() - 7.180_755_781).abs() < 1e-6);
        assert!(matches!(elevation_from_delta(&c, 20.0, 3), Err(Error::TrackingLost { k: 3 })));
        assert!((principal_elevation_limit(&c) - phi).abs() < 1e-12);
    }

    #[test]
    fn rejects_other_tx_counts() {
        let mut c = cfg();
        c.n_tx = 1;
        assert!(matches!(
            ElevationEstimator::new(&c, ElevationConfig::default()),
            Err(Error::InvalidConfig(_))
        ));
    }

    /// Detections synthesized straight from the phase model (no spectrum).
    fn model_dets(c: &RadarConfig, n: u64, range: impl Fn(f64) -> f64, sin_phi: f64) -> Vec<Detection> {
        (0..n)
            .map(|k| {
                let t = c.chirp_start(k);
                let r = range(t);
                let geo = 4.0 * PI * r / c.wavelength()
                    + (k % 2) as f64 * c.tx_phase_per_sine() * sin_phi;
                let mut d = det(k, wrap_pi(0.3 + geo), wrap_pi(0.3 - geo));
                d.range = r;
                d.f_b = 2.0 * r * c.chirp_slope() / SPEED_OF_LIGHT;
                d
            })
            .collect()
    }

    #[test]
    fn static_model_recovers_elevation() {
        let c = cfg();
        let phi: f64 = 5f64.to_radians();
        let dets = model_dets(&c, 40, |_| 7.0, phi.sin());
        let out = estimate_elevation(&c, &dets, &ElevationConfig::default()).unwrap();
        for s in &out[2..] {
            assert!((s.elevation.unwrap() - phi).abs() < 1e-9, "{s:?}");
            assert!(s.v_r_est.unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn constant_velocity_model() {
        let c = cfg();
        let phi: f64 = (-3f64).to_radians();
        for v in [0.1, 0.5, 1.0, 3.0, -2.2, 10.0] {
            let dets = model_dets(&c, 600, |t| 5.0 + v * t, phi.sin());
            let out = estimate_elevation(&c, &dets, &ElevationConfig::default()).unwrap();
            for s in &out[2..] {
                assert!((s.elevation.unwrap() - phi).abs() < 1e-6, "v={v} {s:?}");
                assert!((s.v_r_est.unwrap() - v).abs() < 1e-6, "v={v} {s:?}");
            }
        }
    }

    #[test]
    fn accelerating_model_with_compensation() {
        let c = cfg();
        let phi: f64 = 2f64.to_radians();
        let a = 4.0;
        let dets = model_dets(&c, 600, |t| 3.0 + 0.5 * t + 0.5 * a * t * t, phi.sin());
        let out = estimate_elevation(&c, &dets, &ElevationConfig::default()).unwrap();
        for s in &out[2..] {
            assert!((s.elevation.unwrap() - phi).abs() < 1e-4, "{s:?}");
        }
        assert!(out.iter().all(|s| !s.handler_invoked));
    }

    #[test]
    fn elevation_unwraps_beyond_principal_interval() {
        let c = cfg();
        let n = 800;
        // Elevation sweeps from 0° to 12° (beyond the ±7.18° principal range).
        let dets: Vec<Detection> = (0..n)
            .map(|k| {
                let t = c.chirp_start(k);
                let el = (12.0 * t / c.chirp_start(n)).to_radians();
                let geo = 4.0 * PI * 6.0 / c.wavelength() + (k % 2) as f64 * c.tx_phase_per_sine() * el.sin();
                det(k, wrap_pi(geo), wrap_pi(-geo))
            })
            .collect();
        let out = estimate_elevation(&c, &dets, &ElevationConfig::default()).unwrap();
        let last = out.last().unwrap();
        let t_ref = c.chirp_start(last.ref_k);
        let truth = (12.0 * t_ref / c.chirp_start(n)).to_radians();
        assert!((last.elevation.unwrap() - truth).abs() < 0.01f64.to_radians());
    }

    #[test]
    fn spikes_are_flagged_and_bridged() {
        let c = cfg();
        let phi: f64 = 4f64.to_radians();
        let mut dets = model_dets(&c, 1000, |t| 6.0 + 0.8 * t, phi.sin());
        let hit = inject_phase_spikes(&mut dets, 0.01, 32, 11);
        assert_eq!(hit.len(), 10);
        let out = estimate_elevation(&c, &dets, &ElevationConfig::default()).unwrap();
        let worst = out[2..]
            .iter()
            .map(|s| (s.elevation.unwrap() - phi).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.3f64.to_radians(), "{}", worst.to_degrees());
        for k in &hit {
            assert!(out.iter().any(|s| s.k == *k && s.exception_flag));
        }
    }

    #[test]
    fn gap_starts_new_segment() {
        let c = cfg();
        let phi: f64 = 1f64.to_radians();
        let mut dets = model_dets(&c, 60, |t| 6.0 + 0.3 * t, phi.sin());
        dets.remove(30);
        let out = estimate_elevation(&c, &dets, &ElevationConfig::default()).unwrap();
        assert_eq!(out.len(), 59);
        assert!(out.iter().filter(|s| s.elevation.is_none()).count() >= 4);
        for s in out.iter().filter(|s| s.elevation.is_some()) {
            assert!((s.elevation.unwrap() - phi).abs() < 1e-6);
        }
    }

    fn beta_errors(c: &RadarConfig, a: f64, handler: bool) -> usize {
        let r = |t: f64| 5.0 + 0.2 * t + 0.5 * a * t * t;
        let dets = model_dets(c, 400, r, 0.05);
        let ecfg = ElevationConfig {
            exception_handler: handler,
            ..Default::default()
        };
        let f_eff = ElevationEstimator::new(c, ecfg).unwrap().effective_carrier();
        let out = estimate_elevation(c, &dets, &ecfg).unwrap();
        out.iter()
            .filter_map(|s| {
                let b = s.beta_chosen?;
                let truth = 4.0 * PI * f_eff / SPEED_OF_LIGHT
                    * (r(c.chirp_start(s.k)) - r(c.chirp_start(s.k - 2)));
                Some(wrap_pi(b - truth).abs() > 1e-3)
            })
            .filter(|&bad| bad)
            .count()
    }

    #[test]
    fn proximity_rule_holds_below_a_max() {
        let c = cfg();
        for a in [0.5, 1.0, 2.0, 4.0, 0.85 * c.max_acceleration()] {
            assert_eq!(beta_errors(&c, a, true), 0, "a={a}");
            assert_eq!(beta_errors(&c, -a, false), 0, "a=-{a}");
        }
    }

    #[test]
    fn proximity_rule_fails_above_a_max() {
        let c = cfg();
        assert!(beta_errors(&c, 1.2 * c.max_acceleration(), false) > 0);
    }

    #[test]
    fn handler_inactive_matches_plain_rule() {
        let c = cfg();
        let dets = model_dets(&c, 300, |t| 4.0 + 1.3 * t, 0.02);
        let on = estimate_elevation(&c, &dets, &ElevationConfig::default()).unwrap();
        let off = estimate_elevation(
            &c,
            &dets,
            &ElevationConfig {
                exception_handler: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(on.iter().all(|s| !s.handler_invoked));
        assert_eq!(on, off);
    }

    #[test]
    fn naive_estimate_is_off_by_doppler() {
        let c = cfg();
        let v = 1.0;
        let phi: f64 = 5f64.to_radians();
        let dets = model_dets(&c, 200, |t| 6.0 + v * t, phi.sin());
        let out = estimate_elevation(&c, &dets, &ElevationConfig::default()).unwrap();
        let f_eff = ElevationEstimator::new(&c, ElevationConfig::default()).unwrap().effective_carrier();
        let doppler = 4.0 * PI * v * c.tx_period * f_eff / SPEED_OF_LIGHT;
        let e_true = c.tx_phase_per_sine() * phi.sin();
        for s in &out[2..] {
            let naive = naive_elevation_phase(s.alpha.unwrap());
            let err = wrap_half_pi(naive - e_true);
            assert!(err.abs() > 0.1);
            assert!(wrap_half_pi(err.abs() - wrap_half_pi(doppler).abs()).abs() < 1e-6, "{err}");
        }
    }
}
