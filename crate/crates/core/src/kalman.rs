//! Two-state (value, rate) Kalman filter with a scalar measurement.

use nalgebra::{Matrix2, RowVector2, Vector2};

/// Constant-rate model `x' = [[1, T], [0, 1]]·x` with white-rate-change
/// process noise of spectral density `q`, observing the first state.
#[derive(Debug, Clone, PartialEq)]
pub struct Kalman2 {
    pub x: Vector2<f64>,
    pub p: Matrix2<f64>,
    f: Matrix2<f64>,
    q: Matrix2<f64>,
    h: RowVector2<f64>,
}

impl Kalman2 {
    pub fn new(x0: [f64; 2], var0: [f64; 2], dt: f64, q: f64) -> Self {
        let t2 = dt * dt;
        Self {
            x: Vector2::new(x0[0], x0[1]),
            p: Matrix2::new(var0[0], 0.0, 0.0, var0[1]),
            f: Matrix2::new(1.0, dt, 0.0, 1.0),
            q: q * Matrix2::new(t2 * dt / 3.0, t2 / 2.0, t2 / 2.0, dt),
            h: RowVector2::new(1.0, 0.0),
        }
    }

    pub fn predict(&mut self) {
        self.x = self.f * self.x;
        self.p = self.f * self.p * self.f.transpose() + self.q;
        self.symmetrize();
    }

    /// Predicted measurement mean and variance (including measurement noise `r`).
    pub fn predicted_measurement(&self, r: f64) -> (f64, f64) {
        ((self.h * self.x)[0], (self.h * self.p * self.h.transpose())[0] + r)
    }

    /// Joseph-form update with measurement `z` of variance `r`.
    pub fn update(&mut self, z: f64, r: f64) {
        let (zp, s) = self.predicted_measurement(r);
        let k: Vector2<f64> = self.p * self.h.transpose() / s;
        self.x += k * (z - zp);
        let i_kh = Matrix2::identity() - k * self.h;
        self.p = i_kh * self.p * i_kh.transpose() + k * k.transpose() * r;
        self.symmetrize();
    }

    pub fn value(&self) -> f64 {
        self.x[0]
    }

    pub fn rate(&self) -> f64 {
        self.x[1]
    }

    /// Shifts the first state, e.g. to follow a phase re-wrap.
    pub fn shift(&mut self, d: f64) {
        self.x[0] += d;
    }

    pub fn is_positive_definite(&self) -> bool {
        let p = &self.p;
        (p[(0, 1)] - p[(1, 0)]).abs() <= 1e-12 * (p[(0, 0)].abs() + p[(1, 1)].abs())
            && p[(0, 0)] > 0.0
            && p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)] > 0.0
    }

    fn symmetrize(&mut self) {
        let off = 0.5 * (self.p[(0, 1)] + self.p[(1, 0)]);
        self.p[(0, 1)] = off;
        self.p[(1, 0)] = off;
    }
}

/// Gaussian density.
pub fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-(d * d) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn tracks_a_ramp() {
        let dt = 0.01;
        let mut kf = Kalman2::new([0.0, 0.0], [1.0, 1.0], dt, 1e-3);
        for i in 0..500 {
            kf.predict();
            kf.update(2.0 * i as f64 * dt, 1e-4);
        }
        assert!((kf.rate() - 2.0).abs() < 1e-2, "{}", kf.rate());
    }

    #[test]
    fn covariance_stays_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = Normal::new(0.0, 0.05).unwrap();
        let dt = 6.8e-3;
        let mut kf = Kalman2::new([0.0, 0.0], [1.0, 300.0], dt, 16.9f64.powi(2) * dt / 9.0);
        for i in 0..100_000 {
            kf.predict();
            let z = (i as f64 * dt).sin() + n.sample(&mut rng);
            kf.update(z, if i % 1000 == 0 { 1e-12 } else { 2.5e-3 });
            assert!(kf.is_positive_definite(), "step {i}: {:?}", kf.p);
        }
    }

    #[test]
    fn pdf_normalised_peak() {
        assert!((gaussian_pdf(0.0, 0.0, 1.0) - 0.398_942_280_4).abs() < 1e-9);
        assert!(gaussian_pdf(3.0, 0.0, 1.0) < gaussian_pdf(1.0, 0.0, 1.0));
    }
}
