//! Lens and link-budget calculators for lens-backed backscatter tags.
//!
//! The lens sizing helpers relate the focal length and pixel-array extent to
//! the tag's field of view, and the focal length and dielectric permittivity
//! to the radius of each face of a biconvex lens. The link budget is the
//! monostatic radar equation, optionally evaluated per tag orientation from an
//! RCS-vs-angle table.
//!
//! Array pitch note: halving the element pitch behind the lens (7.35 mm to
//! 3.675 mm) improves the beam overlap level by only ~3 dB while needing about
//! four times as many elements; peak gain is set by the lens aperture alone.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::{db_to_linear, dbm_to_watts};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensDesign {
    /// Focal length F (m).
    pub focal_length: f64,
    /// Distance from the centre pixel to the outermost pixel, h (m).
    pub half_extent: f64,
    /// Relative permittivity of the lens material.
    pub epsilon_r: f64,
}

impl LensDesign {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > 0.0) || !(self.half_extent >= 0.0) || !(self.epsilon_r >= 1.0) {
            return Err(Error::Domain(
                "lens needs focal_length > 0, half_extent >= 0, epsilon_r >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Full angular field of view (rad).
    pub fn field_of_view(&self) -> f64 {
        2.0 * (self.half_extent / (2.0 * self.focal_length)).atan()
    }

    /// Radius of curvature of each convex face (m).
    pub fn lens_radius(&self) -> f64 {
        self.focal_length * 2.0 * (self.epsilon_r.sqrt() - 1.0)
    }
}

/// Monostatic link parameters in linear units (W, linear gains, m, m²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub p_t: f64,
    pub p_r_min: f64,
    pub g_t: f64,
    pub g_r: f64,
    pub lambda: f64,
    pub sigma: f64,
}

/// Link parameters as usually quoted: dBm, dBi, m, m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudgetDb {
    pub p_t_dbm: f64,
    pub p_r_min_dbm: f64,
    pub g_t_dbi: f64,
    pub g_r_dbi: f64,
    pub lambda_m: f64,
    pub sigma_m2: f64,
}

impl From<LinkBudgetDb> for LinkBudget {
    fn from(b: LinkBudgetDb) -> Self {
        LinkBudget {
            p_t: dbm_to_watts(b.p_t_dbm),
            p_r_min: dbm_to_watts(b.p_r_min_dbm),
            g_t: db_to_linear(b.g_t_dbi),
            g_r: db_to_linear(b.g_r_dbi),
            lambda: b.lambda_m,
            sigma: b.sigma_m2,
        }
    }
}

impl LinkBudget {
    /// The reference tag link: 10 dBm, -135 dBm, 10 dBi, 12 dBi, 0.01 m², 12.5 mm.
    pub fn reference_tag() -> Self {
        LinkBudgetDb {
            p_t_dbm: 10.0,
            p_r_min_dbm: -135.0,
            g_t_dbi: 10.0,
            g_r_dbi: 12.0,
            lambda_m: 0.0125,
            sigma_m2: 0.01,
        }
        .into()
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.p_t, self.p_r_min, self.g_t, self.g_r, self.lambda, self.sigma];
        if all.iter().all(|x| *x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain("link budget terms must be positive and finite".into()))
        }
    }

    pub fn max_range(&self) -> f64 {
        self.max_range_for_rcs(self.sigma)
    }

    pub fn max_range_for_rcs(&self, sigma: f64) -> f64 {
        let num = self.p_t * self.g_t * self.g_r * self.lambda * self.lambda * sigma;
        let den = (4.0 * PI).powi(3) * self.p_r_min;
        (num / den).powf(0.25)
    }

    /// Maximum range per table angle, with σ(angle) taken from `table`.
    pub fn range_vs_angle(&self, table: &RcsTable) -> Vec<(f64, f64)> {
        table
            .points
            .iter()
            .map(|&(deg, dbsm)| (deg, self.max_range_for_rcs(db_to_linear(dbsm))))
            .collect()
    }

    /// Range curve resampled on a regular angle grid (deg), using the table's
    /// dB-domain interpolation.
    pub fn range_vs_angle_grid(&self, table: &RcsTable, angles_deg: &[f64]) -> Vec<(f64, f64)> {
        angles_deg
            .iter()
            .map(|&a| (a, self.max_range_for_rcs(db_to_linear(table.at(a)))))
            .collect()
    }
}

/// RCS as a function of tag orientation, in dBsm, with linear interpolation
/// in the dB domain and clamping outside the tabulated span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcsTable {
    pub points: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct RcsRow {
    angle_deg: f64,
    rcs_dbsm: f64,
}

impl RcsTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("RCS table is empty".into()));
        }
        if points.iter().any(|(a, r)| !a.is_finite() || !r.is_finite()) {
            return Err(Error::Domain("RCS table entries must be finite".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Domain("RCS table has duplicate angles".into()));
        }
        Ok(Self { points })
    }

    /// Reads `angle_deg,rcs_dbsm` CSV rows (header required).
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let row: RcsRow = row?;
            points.push((row.angle_deg, row.rcs_dbsm));
        }
        Self::new(points)
    }

    pub fn from_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// RCS in dBsm at `angle_deg`.
    pub fn at(&self, angle_deg: f64) -> f64 {
        let p = &self.points;
        if angle_deg <= p[0].0 {
            return p[0].1;
        }
        if angle_deg >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let i = p.partition_point(|q| q.0 <= angle_deg);
        let (a, b) = (p[i - 1], p[i]);
        a.1 + (b.1 - a.1) * (angle_deg - a.0) / (b.0 - a.0)
    }
}

/// Width (deg) of the contiguous angular span around the curve's peak over
/// which the value stays at or above `fraction` of the peak, with linear
/// interpolation at the crossings.
pub fn coverage_span(curve: &[(f64, f64)], fraction: f64) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    let (imax, &(_, peak)) = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty");
    let level = peak * fraction;
    let crossing = |i: usize, j: usize| {
        let (a0, r0) = curve[i];
        let (a1, r1) = curve[j];
        if (r1 - r0).abs() < 1e-300 {
            a1
        } else {
            a0 + (a1 - a0) * (level - r0) / (r1 - r0)
        }
    };
    let mut lo = curve[0].0;
    for i in (0..imax).rev() {
        if curve[i].1 < level {
            lo = crossing(i + 1, i);
            break;
        }
    }
    let mut hi = curve[curve.len() - 1].0;
    for i in imax + 1..curve.len() {
        if curve[i].1 < level {
            hi = crossing(i - 1, i);
            break;
        }
    }
    hi - lo
}

/// Input of the `design` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    #[serde(default)]
    pub lens: Option<LensDesign>,
    #[serde(default)]
    pub budget: Option<LinkBudgetDb>,
    /// Named RCS tables, either inline points or a CSV path.
    #[serde(default)]
    pub rcs_tables: Vec<NamedRcsTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedRcsTable {
    pub name: String,
    #[serde(default)]
    pub points: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LensReport {
    pub focal_length_m: f64,
    pub half_extent_m: f64,
    pub epsilon_r: f64,
    pub field_of_view_deg: f64,
    pub lens_radius_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangeCurveReport {
    pub name: String,
    pub angles_deg: Vec<f64>,
    pub max_range_m: Vec<f64>,
    pub half_range_coverage_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    pub lens: Option<LensReport>,
    pub max_range_m: Option<f64>,
    pub range_vs_angle: Vec<RangeCurveReport>,
}

impl DesignFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Evaluates every derived quantity. Relative CSV paths resolve against `base_dir`.
    pub fn evaluate(&self, base_dir: &Path) -> Result<DesignReport> {
        let lens = match &self.lens {
            Some(l) => {
                l.validate()?;
                Some(LensReport {
                    focal_length_m: l.focal_length,
                    half_extent_m: l.half_extent,
                    epsilon_r: l.epsilon_r,
                    field_of_view_deg: l.field_of_view().to_degrees(),
                    lens_radius_m: l.lens_radius(),
                })
            }
            None => None,
        };
        let budget: Option<LinkBudget> = self.budget.map(Into::into);
        if let Some(b) = &budget {
            b.validate()?;
        }
        let mut curves = Vec::new();
        if !self.rcs_tables.is_empty() {
            let b = budget.ok_or_else(|| {
                Error::Domain("rcs_tables need a budget to evaluate range vs angle".into())
            })?;
            for t in &self.rcs_tables {
                let table = match (&t.points, &t.csv) {
                    (Some(p), None) => RcsTable::new(p.clone())?,
                    (None, Some(path)) => RcsTable::from_csv_file(base_dir.join(path))?,
                    _ => {
                        return Err(Error::Domain(format!(
                            "rcs table '{}' needs exactly one of points or csv",
                            t.name
                        )))
                    }
                };
                let curve = b.range_vs_angle(&table);
                curves.push(RangeCurveReport {
                    name: t.name.clone(),
                    half_range_coverage_deg: coverage_span(&curve, 0.5),
                    angles_deg: curve.iter().map(|c| c.0).collect(),
                    max_range_m: curve.iter().map(|c| c.1).collect(),
                });
            }
        }
        Ok(DesignReport {
            lens,
            max_range_m: budget.map(|b| b.max_range()),
            range_vs_angle: curves,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lens(f: f64, h: f64, e: f64) -> LensDesign {
        LensDesign {
            focal_length: f,
            half_extent: h,
            epsilon_r: e,
        }
    }

    #[test]
    fn field_of_view_examples() {
        assert_eq!(lens(0.02, 0.0, 2.1).field_of_view(), 0.0);
        // 2 atan(0.5)
        assert!((lens(0.02, 0.02, 2.1).field_of_view().to_degrees() - 53.130_102_354).abs() < 1e-8);
    }

    #[test]
    fn lens_radius_examples() {
        assert_eq!(lens(0.02, 0.01, 1.0).lens_radius(), 0.0);
        assert!((lens(0.02, 0.01, 2.1).lens_radius() - 0.017_965_507).abs() < 1e-9);
        assert!((lens(0.01, 0.01, 4.0).lens_radius() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn lens_validation() {
        assert!(lens(0.0, 0.01, 2.0).validate().is_err());
        assert!(lens(0.01, -0.01, 2.0).validate().is_err());
        assert!(lens(0.01, 0.01, 0.5).validate().is_err());
        lens(0.02, 0.02, 2.1).validate().unwrap();
    }

    #[test]
    fn reference_link_range() {
        let b = LinkBudget::reference_tag();
        let r = b.max_range();
        assert!((r - 85.0).abs() / 85.0 < 0.10, "{r}");
        // Independently evaluated in double precision from the dB values.
        assert!((r - 79.258_821).abs() < 1e-5, "{r}");
    }

    #[test]
    fn range_scaling() {
        let b = LinkBudget::reference_tag();
        let r = b.max_range();
        assert!((b.max_range_for_rcs(16.0 * b.sigma) / r - 2.0).abs() < 1e-12);
        let mut h = b;
        h.p_r_min /= 2.0;
        assert!((h.max_range() / r - 2f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn range_vs_angle_examples() {
        let b = LinkBudget::reference_tag();
        let flat = RcsTable::new(vec![(-60.0, -20.0), (0.0, -20.0), (60.0, -20.0)]).unwrap();
        let curve = b.range_vs_angle_grid(&flat, &[-50.0, 0.0, 33.0]);
        assert!(curve.iter().all(|c| (c.1 - curve[0].1).abs() < 1e-9));

        let t = RcsTable::new(vec![(0.0, -20.0), (50.0, -32.0)]).unwrap();
        let c = b.range_vs_angle(&t);
        assert!((c[1].1 / c[0].1 - 10f64.powf(-12.0 / 40.0)).abs() < 1e-12);
        assert!((10f64.powf(-12.0 / 40.0) - 0.501).abs() < 1e-3);
    }

    #[test]
    fn table_interpolates_in_db_and_clamps() {
        let t = RcsTable::new(vec![(10.0, -10.0), (-10.0, -30.0)]).unwrap();
        assert_eq!(t.at(0.0), -20.0);
        assert_eq!(t.at(-40.0), -30.0);
        assert_eq!(t.at(40.0), -10.0);
        assert!(RcsTable::new(vec![]).is_err());
        assert!(RcsTable::new(vec![(1.0, 0.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn csv_tables() {
        let text = "angle_deg,rcs_dbsm\n0,-20\n10,-22\n";
        let t = RcsTable::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(t.points, vec![(0.0, -20.0), (10.0, -22.0)]);
        assert!(RcsTable::from_csv_reader("angle_deg,rcs_dbsm\n0,x\n".as_bytes()).is_err());
    }

    #[test]
    fn coverage_of_lens_like_and_lensless_tables() {
        // Synthetic patterns: a broad lens response (< 10 dB drop over ±50°)
        // and a narrow bare-array response.
        let angles: Vec<f64> = (-70..=70).map(|a| a as f64).collect();
        let lens_t = RcsTable::new(
            angles
                .iter()
                .map(|&a| (a, -20.0 - 8.0 * (a / 50.0).powi(2)))
                .collect(),
        )
        .unwrap();
        let bare_t = RcsTable::new(
            angles
                .iter()
                .map(|&a| (a, -25.0 - 12.0 * (a / 5.0).powi(2)))
                .collect(),
        )
        .unwrap();
        let b = LinkBudget::reference_tag();
        let lens_span = coverage_span(&b.range_vs_angle(&lens_t), 0.5);
        let bare_span = coverage_span(&b.range_vs_angle(&bare_t), 0.5);
        assert!(lens_span >= 95.0, "{lens_span}");
        assert!(bare_span < 15.0, "{bare_span}");
    }

    #[test]
    fn design_file_evaluates() {
        let text = r#"{
            "lens": {"focal_length": 0.02, "half_extent": 0.02, "epsilon_r": 2.1},
            "budget": {"p_t_dbm": 10, "p_r_min_dbm": -135, "g_t_dbi": 10, "g_r_dbi": 12,
                       "lambda_m": 0.0125, "sigma_m2": 0.01},
            "rcs_tables": [{"name": "flat", "points": [[-10, -20], [10, -20]]}]
        }"#;
        let d = DesignFile::from_json_str(text).unwrap();
        let r = d.evaluate(Path::new(".")).unwrap();
        assert!((r.lens.unwrap().field_of_view_deg - 53.130_102_354).abs() < 1e-6);
        assert!((r.max_range_m.unwrap() - 79.258_821).abs() < 1e-5);
        assert_eq!(r.range_vs_angle[0].max_range_m.len(), 2);
        assert!(DesignFile::from_json_str(r#"{"lense": {}}"#).is_err());
    }

    proptest! {
        #[test]
        fn formulas_match_direct_evaluation(
            f in 1e-3f64..1.0,
            h in 0.0f64..1.0,
            e in 1.0f64..12.0,
        ) {
            let l = lens(f, h, e);
            let fov = 2.0 * (h / (2.0 * f)).atan();
            let rad = 2.0 * f * (e.sqrt() - 1.0);
            prop_assert!((l.field_of_view() - fov).abs() <= 1e-12 * fov.abs().max(1e-300));
            prop_assert!((l.lens_radius() - rad).abs() <= 1e-12 * rad.abs().max(1e-300));
        }

        #[test]
        fn fov_monotone(f in 1e-3f64..1.0, h in 0.0f64..1.0, dh in 1e-4f64..0.1) {
            prop_assert!(lens(f, h + dh, 2.0).field_of_view() > lens(f, h, 2.0).field_of_view());
            if h > 0.0 {
                prop_assert!(lens(f + dh, h, 2.0).field_of_view() < lens(f, h, 2.0).field_of_view());
            }
        }

        #[test]
        fn range_homogeneous_in_power(scale in 1e-3f64..1e3) {
            let b = LinkBudget::reference_tag();
            let mut s = b;
            s.p_t *= scale;
            s.p_r_min *= scale;
            prop_assert!((s.max_range() / b.max_range() - 1.0).abs() < 1e-12);
        }
    }
}
