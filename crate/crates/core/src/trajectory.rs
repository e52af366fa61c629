//! Time-parameterized tag kinematics relative to a radar at the origin.
//!
//! Frame convention: x is boresight, y points left, z points up. Azimuth is
//! measured in the x-y plane from x toward y; elevation is measured from the
//! x-y plane toward z.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySegment {
    pub duration: f64,
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccelerationSegment {
    pub duration: f64,
    pub acceleration: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub position: [f64; 3],
}

/// Piecewise kinematic model. Segment lists are chained end to end starting at
/// t = 0, so positions are continuous by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trajectory {
    Constant {
        position: [f64; 3],
    },
    ConstantVelocity {
        start: [f64; 3],
        segments: Vec<VelocitySegment>,
    },
    ConstantAcceleration {
        start: [f64; 3],
        initial_velocity: [f64; 3],
        segments: Vec<AccelerationSegment>,
    },
    Waypoints {
        points: Vec<Waypoint>,
    },
}

/// Position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

/// Range / azimuth / elevation of a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spherical {
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl Spherical {
    pub fn from_cartesian(p: &Vec3) -> Self {
        let range = p.norm();
        let azimuth = p.y.atan2(p.x);
        let elevation = p.z.atan2(p.x.hypot(p.y));
        Self {
            range,
            azimuth,
            elevation,
        }
    }

    pub fn to_cartesian(&self) -> Vec3 {
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        Vec3::new(
            self.range * ce * ca,
            self.range * ce * sa,
            self.range * se,
        )
    }
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl KinematicState {
    pub fn spherical(&self) -> Spherical {
        Spherical::from_cartesian(&self.position)
    }

    /// d|p|/dt.
    pub fn radial_velocity(&self) -> f64 {
        let r = self.position.norm();
        self.position.dot(&self.velocity) / r
    }

    /// d²|p|/dt².
    pub fn radial_acceleration(&self) -> f64 {
        let p = &self.position;
        let r = p.norm();
        let pv = p.dot(&self.velocity);
        (self.velocity.dot(&self.velocity) + p.dot(&self.acceleration)) / r - pv * pv / (r * r * r)
    }
}

impl Trajectory {
    pub fn stationary(position: [f64; 3]) -> Self {
        Trajectory::Constant { position }
    }

    /// Straight-line motion with a single velocity for `duration` seconds.
    pub fn linear(start: [f64; 3], velocity: [f64; 3], duration: f64) -> Self {
        Trajectory::ConstantVelocity {
            start,
            segments: vec![VelocitySegment { duration, velocity }],
        }
    }

    /// Constant acceleration along the line of sight, starting from `start`
    /// with radial speed `v0`.
    pub fn radial_ramp(start: [f64; 3], v0: f64, a: f64, duration: f64) -> Self {
        let u = v3(start).normalize();
        Trajectory::ConstantAcceleration {
            start,
            initial_velocity: (u * v0).into(),
            segments: vec![AccelerationSegment {
                duration,
                acceleration: (u * a).into(),
            }],
        }
    }

    /// Time span over which the trajectory is defined; `None` means unbounded.
    pub fn duration(&self) -> Option<f64> {
        match self {
            Trajectory::Constant { .. } => None,
            Trajectory::ConstantVelocity { segments, .. } => {
                Some(segments.iter().map(|s| s.duration).sum())
            }
            Trajectory::ConstantAcceleration { segments, .. } => {
                Some(segments.iter().map(|s| s.duration).sum())
            }
            Trajectory::Waypoints { points } => points.last().map(|p| p.t),
        }
    }

    pub fn validate(&self, scenario_duration: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        let finite3 = |a: &[f64; 3]| a.iter().all(|x| x.is_finite());
        match self {
            Trajectory::Constant { position } => {
                if !finite3(position) {
                    return bad("trajectory position must be finite".into());
                }
            }
            Trajectory::ConstantVelocity { start, segments } => {
                if !finite3(start) || segments.is_empty() {
                    return bad("constant_velocity needs a finite start and >= 1 segment".into());
                }
                if segments
                    .iter()
                    .any(|s| !(s.duration > 0.0) || !finite3(&s.velocity))
                {
                    return bad("segment durations must be positive and velocities finite".into());
                }
            }
            Trajectory::ConstantAcceleration {
                start,
                initial_velocity,
                segments,
            } => {
                if !finite3(start) || !finite3(initial_velocity) || segments.is_empty() {
                    return bad(
                        "constant_acceleration needs finite start/velocity and >= 1 segment".into(),
                    );
                }
                if segments
                    .iter()
                    .any(|s| !(s.duration > 0.0) || !finite3(&s.acceleration))
                {
                    return bad("segment durations must be positive and accelerations finite".into());
                }
            }
            Trajectory::Waypoints { points } => {
                if points.len() < 2 {
                    return bad("waypoint trajectory needs at least two points".into());
                }
                if points[0].t > 0.0 {
                    return bad("first waypoint must be at t <= 0".into());
                }
                if points.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return bad("waypoint times must be strictly increasing".into());
                }
                if points.iter().any(|p| !finite3(&p.position)) {
                    return bad("waypoint positions must be finite".into());
                }
            }
        }
        if let Some(d) = self.duration() {
            if d + 1e-12 < scenario_duration {
                return bad(format!(
                    "trajectory covers {d} s but the scenario lasts {scenario_duration} s"
                ));
            }
        }
        Ok(())
    }

    /// Kinematic state at time `t`; errors outside the defined span.
    pub fn state(&self, t: f64) -> Result<KinematicState> {
        let undefined = || Error::Domain(format!("trajectory undefined at t = {t}"));
        if !(t >= 0.0) && !matches!(self, Trajectory::Waypoints { .. }) {
            return Err(undefined());
        }
        match self {
            Trajectory::Constant { position } => Ok(KinematicState {
                position: v3(*position),
                velocity: Vec3::zeros(),
                acceleration: Vec3::zeros(),
            }),
            Trajectory::ConstantVelocity { start, segments } => {
                let mut p = v3(*start);
                let mut t0 = 0.0;
                for (i, s) in segments.iter().enumerate() {
                    let v = v3(s.velocity);
                    let last = i + 1 == segments.len();
                    if t <= t0 + s.duration || (last && t <= t0 + s.duration + 1e-12) {
                        return Ok(KinematicState {
                            position: p + v * (t - t0),
                            velocity: v,
                            acceleration: Vec3::zeros(),
                        });
                    }
                    p += v * s.duration;
                    t0 += s.duration;
                }
                Err(undefined())
            }
            Trajectory::ConstantAcceleration {
                start,
                initial_velocity,
                segments,
            } => {
                let mut p = v3(*start);
                let mut v = v3(*initial_velocity);
                let mut t0 = 0.0;
                for s in segments {
                    let a = v3(s.acceleration);
                    if t <= t0 + s.duration {
                        let dt = t - t0;
                        return Ok(KinematicState {
                            position: p + v * dt + a * (0.5 * dt * dt),
                            velocity: v + a * dt,
                            acceleration: a,
                        });
                    }
                    let dt = s.duration;
                    p += v * dt + a * (0.5 * dt * dt);
                    v += a * dt;
                    t0 += dt;
                }
                Err(undefined())
            }
            Trajectory::Waypoints { points } => {
                if t < points[0].t || t > points[points.len() - 1].t {
                    return Err(undefined());
                }
                let i = points.partition_point(|w| w.t <= t).clamp(1, points.len() - 1);
                let (a, b) = (&points[i - 1], &points[i]);
                let pa = v3(a.position);
                let pb = v3(b.position);
                let v = (pb - pa) / (b.t - a.t);
                Ok(KinematicState {
                    position: pa + v * (t - a.t),
                    velocity: v,
                    acceleration: Vec3::zeros(),
                })
            }
        }
    }

    pub fn position(&self, t: f64) -> Result<Vec3> {
        Ok(self.state(t)?.position)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_velocity_segments_chain() {
        let tr = Trajectory::ConstantVelocity {
            start: [1.0, 0.0, 0.0],
            segments: vec![
                VelocitySegment {
                    duration: 1.0,
                    velocity: [1.0, 0.0, 0.0],
                },
                VelocitySegment {
                    duration: 2.0,
                    velocity: [0.0, 1.0, 0.0],
                },
            ],
        };
        tr.validate(3.0).unwrap();
        assert!(tr.validate(3.5).is_err());
        let p = tr.position(2.0).unwrap();
        assert!((p - Vec3::new(2.0, 1.0, 0.0)).norm() < 1e-12);
        assert!(tr.position(3.1).is_err());
        assert!(tr.position(-0.1).is_err());
    }

    #[test]
    fn waypoints_interpolate() {
        let tr = Trajectory::Waypoints {
            points: vec![
                Waypoint {
                    t: 0.0,
                    position: [0.0, 0.0, 0.0],
                },
                Waypoint {
                    t: 2.0,
                    position: [2.0, 4.0, 0.0],
                },
            ],
        };
        let s = tr.state(0.5).unwrap();
        assert!((s.position - Vec3::new(0.5, 1.0, 0.0)).norm() < 1e-12);
        assert!((s.velocity - Vec3::new(1.0, 2.0, 0.0)).norm() < 1e-12);
        assert!(tr.state(2.5).is_err());
    }

    #[test]
    fn radial_ramp_kinematics() {
        let tr = Trajectory::radial_ramp([5.0, 1.0, 0.5], 0.3, 4.0, 2.0);
        for t in [0.0, 0.5, 1.7] {
            let s = tr.state(t).unwrap();
            assert!((s.radial_velocity() - (0.3 + 4.0 * t)).abs() < 1e-12);
            assert!((s.radial_acceleration() - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn spherical_examples() {
        let s = Spherical::from_cartesian(&Vec3::new(7.0, 0.0, 0.0));
        assert_eq!((s.range, s.azimuth, s.elevation), (7.0, 0.0, 0.0));
        let p = Spherical {
            range: 10.0,
            azimuth: 30f64.to_radians(),
            elevation: 0.0,
        }
        .to_cartesian();
        assert!((p - Vec3::new(8.660_254_037_844, 5.0, 0.0)).norm() < 1e-9);
    }

    fn arb_ca() -> impl Strategy<Value = Trajectory> {
        let seg = (0.1f64..2.0, -3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0).prop_map(
            |(d, ax, ay, az)| AccelerationSegment {
                duration: d,
                acceleration: [ax, ay, az],
            },
        );
        (
            (3.0f64..20.0, -5.0f64..5.0, -2.0f64..2.0),
            (-3.0f64..3.0, -3.0f64..3.0, -1.0f64..1.0),
            prop::collection::vec(seg, 1..5),
        )
            .prop_map(|((x, y, z), (vx, vy, vz), segments)| Trajectory::ConstantAcceleration {
                start: [x, y, z],
                initial_velocity: [vx, vy, vz],
                segments,
            })
    }

    proptest! {
        #[test]
        fn radial_rates_match_finite_differences(tr in arb_ca(), frac in 0.05f64..0.95) {
            let t = tr.duration().unwrap() * frac;
            let h = 1e-5;
            let (Ok(a), Ok(b), Ok(c)) = (tr.state(t - h), tr.state(t), tr.state(t + h)) else {
                return Ok(());
            };
            // Skip points too close to the origin or to a segment joint.
            prop_assume!(b.position.norm() > 0.5);
            prop_assume!((a.acceleration - c.acceleration).norm() < 1e-12);
            let r = |s: &KinematicState| s.position.norm();
            let vr_fd = (r(&c) - r(&a)) / (2.0 * h);
            let ar_fd = (r(&c) - 2.0 * r(&b) + r(&a)) / (h * h);
            prop_assert!((vr_fd - b.radial_velocity()).abs() < 1e-6);
            prop_assert!((ar_fd - b.radial_acceleration()).abs() < 1e-2);
        }

        #[test]
        fn ca_trajectory_is_continuous(tr in arb_ca(), frac in 0.0f64..1.0) {
            let t = tr.duration().unwrap() * frac;
            let h = 1e-9;
            if let (Ok(a), Ok(b)) = (tr.position((t - h).max(0.0)), tr.position(t)) {
                prop_assert!((a - b).norm() < 1e-6);
            }
        }

        #[test]
        fn spherical_round_trip(
            r in 0.5f64..100.0,
            az in -80f64..80.0,
            el in -80f64..80.0,
        ) {
            let s = Spherical { range: r, azimuth: az.to_radians(), elevation: el.to_radians() };
            let back = Spherical::from_cartesian(&s.to_cartesian());
            prop_assert!((back.range - r).abs() < 1e-9 * r);
            prop_assert!((back.azimuth - s.azimuth).abs() < 1e-9);
            prop_assert!((back.elevation - s.elevation).abs() < 1e-9);
        }
    }
}
