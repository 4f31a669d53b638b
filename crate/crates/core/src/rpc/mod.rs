//! Rational polynomial camera model.
//!
//! Forward projection maps normalized `(lon, lat, height)` to normalized
//! `(samp, line)` through two polynomial ratios. The inverse form, when
//! present, maps normalized `(samp, line, height)` back to `(lat, lon)`.

mod fit;
mod poly;
mod text;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{fit_inverse_rpc, fit_rational, inverse_reprojection_error, GridSpec, InverseFitReport, RationalFit};
pub use poly::{eval_termwise, monomials, Poly20, MONOMIAL_EXPONENTS};
pub use text::{parse_rpc, write_rpc};

/// Denominators with smaller magnitude (in normalized space) are rejected.
pub const DENOMINATOR_EPS: f64 = 1e-12;

/// Newton iterations beyond this bound are treated as divergence.
pub const MAX_LOCALIZE_ITERATIONS: usize = 50;

/// Localization iterates further than this from the normalization cube are
/// considered outside the model domain.
const MAX_NORMALIZED_EXTENT: f64 = 10.0;

/// Geodetic ground point: degrees, degrees, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPoint {
    pub lat: f64,
    pub lon: f64,
    pub hei: f64,
}

impl GroundPoint {
    pub const fn new(lat: f64, lon: f64, hei: f64) -> Self {
        Self { lat, lon, hei }
    }
}

/// Image point in pixels: `samp` along the sensor array, `line` along track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub samp: f64,
    pub line: f64,
}

impl ImagePoint {
    pub const fn new(samp: f64, line: f64) -> Self {
        Self { samp, line }
    }

    pub fn distance(&self, other: &ImagePoint) -> f64 {
        (self.samp - other.samp).hypot(self.line - other.line)
    }
}

/// Offsets and scales of the normalized coordinate systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub line_off: f64,
    pub line_scale: f64,
    pub samp_off: f64,
    pub samp_scale: f64,
    pub lat_off: f64,
    pub lat_scale: f64,
    pub lon_off: f64,
    pub lon_scale: f64,
    pub hei_off: f64,
    pub hei_scale: f64,
}

/// Inverse polynomials in `(samp_n, line_n, hei_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseRpc {
    pub lat_num: Poly20,
    pub lat_den: Poly20,
    pub lon_num: Poly20,
    pub lon_den: Poly20,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcModel {
    pub norm: Normalization,
    pub samp_num: Poly20,
    pub samp_den: Poly20,
    pub line_num: Poly20,
    pub line_den: Poly20,
    pub inverse: Option<InverseRpc>,
    /// Explicit valid height span. `None` means `hei_off ± hei_scale`.
    pub explicit_height_range: Option<[f64; 2]>,
}

impl RpcModel {
    /// Builds a model and checks its invariants.
    pub fn new(
        norm: Normalization,
        samp_num: Poly20,
        samp_den: Poly20,
        line_num: Poly20,
        line_den: Poly20,
    ) -> Result<Self> {
        let m = Self { norm, samp_num, samp_den, line_num, line_den, inverse: None, explicit_height_range: None };
        m.validate()?;
        Ok(m)
    }

    pub fn with_inverse(mut self, inverse: InverseRpc) -> Self {
        self.inverse = Some(inverse);
        self
    }

    pub fn with_height_range(mut self, range: [f64; 2]) -> Result<Self> {
        self.explicit_height_range = Some(range);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.norm;
        let offsets = [n.line_off, n.samp_off, n.lat_off, n.lon_off, n.hei_off];
        if offsets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite offset".into()));
        }
        let scales = [
            ("LINE_SCALE", n.line_scale),
            ("SAMP_SCALE", n.samp_scale),
            ("LAT_SCALE", n.lat_scale),
            ("LONG_SCALE", n.lon_scale),
            ("HEIGHT_SCALE", n.hei_scale),
        ];
        for (name, s) in scales {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {s}")));
            }
        }
        let [h0, h1] = self.height_range();
        if !(h0 < h1) {
            return Err(Error::InvalidModel(format!("height range [{h0}, {h1}] is empty")));
        }
        // Sample the normalized cube on a 5x5x5 grid.
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    let (l, p, h) = (-1.0 + 0.5 * i as f64, -1.0 + 0.5 * j as f64, -1.0 + 0.5 * k as f64);
                    for den in [&self.samp_den, &self.line_den] {
                        let d = den.eval(l, p, h);
                        if !(d.abs() >= DENOMINATOR_EPS) {
                            return Err(Error::InvalidModel(format!(
                                "forward denominator {d:e} vanishes at normalized ({l}, {p}, {h})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Valid elevation span `[h_min, h_max]` in meters.
    pub fn height_range(&self) -> [f64; 2] {
        self.explicit_height_range
            .unwrap_or([self.norm.hei_off - self.norm.hei_scale, self.norm.hei_off + self.norm.hei_scale])
    }

    pub fn check_height(&self, hei: f64) -> Result<()> {
        let [min, max] = self.height_range();
        if hei >= min && hei <= max {
            Ok(())
        } else {
            Err(Error::HeightOutOfRange { height: hei, min, max })
        }
    }

    /// `(lat_n, lon_n, hei_n)`.
    #[inline]
    pub fn normalize_ground(&self, p: &GroundPoint) -> [f64; 3] {
        let n = &self.norm;
        [(p.lat - n.lat_off) / n.lat_scale, (p.lon - n.lon_off) / n.lon_scale, (p.hei - n.hei_off) / n.hei_scale]
    }

    #[inline]
    pub fn denormalize_ground(&self, lat_n: f64, lon_n: f64, hei_n: f64) -> GroundPoint {
        let n = &self.norm;
        GroundPoint {
            lat: lat_n * n.lat_scale + n.lat_off,
            lon: lon_n * n.lon_scale + n.lon_off,
            hei: hei_n * n.hei_scale + n.hei_off,
        }
    }

    #[inline]
    pub fn normalize_height(&self, hei: f64) -> f64 {
        (hei - self.norm.hei_off) / self.norm.hei_scale
    }

    /// `(samp_n, line_n)`.
    #[inline]
    pub fn normalize_image(&self, q: &ImagePoint) -> [f64; 2] {
        [(q.samp - self.norm.samp_off) / self.norm.samp_scale, (q.line - self.norm.line_off) / self.norm.line_scale]
    }

    #[inline]
    pub fn denormalize_image(&self, samp_n: f64, line_n: f64) -> ImagePoint {
        ImagePoint {
            samp: samp_n * self.norm.samp_scale + self.norm.samp_off,
            line: line_n * self.norm.line_scale + self.norm.line_off,
        }
    }

    /// Forward projection in normalized units: `(lat_n, lon_n, hei_n)` to
    /// `(samp_n, line_n)`.
    pub fn project_normalized(&self, lat_n: f64, lon_n: f64, hei_n: f64) -> Result<[f64; 2]> {
        let m = monomials(lon_n, lat_n, hei_n);
        let dot = |p: &Poly20| p.c.iter().zip(m.iter()).map(|(c, m)| c * m).sum::<f64>();
        let sd = dot(&self.samp_den);
        let ld = dot(&self.line_den);
        for d in [sd, ld] {
            if !(d.abs() >= DENOMINATOR_EPS) {
                return Err(Error::DegenerateProjection(d));
            }
        }
        Ok([dot(&self.samp_num) / sd, dot(&self.line_num) / ld])
    }

    /// Ground to image.
    pub fn project_forward(&self, p: &GroundPoint) -> Result<ImagePoint> {
        let [lat_n, lon_n, hei_n] = self.normalize_ground(p);
        let [s, l] = self.project_normalized(lat_n, lon_n, hei_n)?;
        Ok(self.denormalize_image(s, l))
    }

    /// Normalized image coordinates and their partials with respect to
    /// `(lat_n, lon_n)`: `[[s, ds/dlat, ds/dlon], [l, dl/dlat, dl/dlon]]`.
    fn project_with_jacobian(&self, lat_n: f64, lon_n: f64, hei_n: f64) -> Result<[[f64; 3]; 2]> {
        let ratio = |num: &Poly20, den: &Poly20| -> Result<[f64; 3]> {
            let n = num.eval_with_gradient(lon_n, lat_n, hei_n);
            let d = den.eval_with_gradient(lon_n, lat_n, hei_n);
            if !(d[0].abs() >= DENOMINATOR_EPS) {
                return Err(Error::DegenerateProjection(d[0]));
            }
            let v = n[0] / d[0];
            // gradient index 1 is L (lon), 2 is P (lat)
            let dlat = (n[2] - v * d[2]) / d[0];
            let dlon = (n[1] - v * d[1]) / d[0];
            Ok([v, dlat, dlon])
        };
        Ok([ratio(&self.samp_num, &self.samp_den)?, ratio(&self.line_num, &self.line_den)?])
    }

    /// Image point plus height to ground by damped Newton iteration on the
    /// forward model. Converges when both pixel residuals are below `tol`.
    pub fn localize_iterative(&self, q: &ImagePoint, hei: f64, tol: f64) -> Result<GroundPoint> {
        if !(q.samp.is_finite() && q.line.is_finite() && hei.is_finite()) {
            return Err(Error::LocalizationFailure("non-finite input".into()));
        }
        let [ts, tl] = self.normalize_image(q);
        let hei_n = self.normalize_height(hei);
        let (ss, ls) = (self.norm.samp_scale, self.norm.line_scale);

        let (mut lat, mut lon) = match self.inverse {
            Some(_) => match self.inverse_normalized(ts, tl, hei_n) {
                Ok([a, b]) if a.abs() < MAX_NORMALIZED_EXTENT && b.abs() < MAX_NORMALIZED_EXTENT => (a, b),
                _ => (0.0, 0.0),
            },
            None => (0.0, 0.0),
        };
        let residual = |lat: f64, lon: f64| -> Result<[f64; 2]> {
            let [s, l] = self.project_normalized(lat, lon, hei_n)?;
            Ok([(s - ts) * ss, (l - tl) * ls])
        };
        let mut r = residual(lat, lon)?;
        for _ in 0..MAX_LOCALIZE_ITERATIONS {
            if r[0].abs() < tol && r[1].abs() < tol {
                return Ok(self.denormalize_ground(lat, lon, hei_n));
            }
            let j = self.project_with_jacobian(lat, lon, hei_n)?;
            let (a, b, c, d) = (j[0][1] * ss, j[0][2] * ss, j[1][1] * ls, j[1][2] * ls);
            let det = a * d - b * c;
            if !(det.abs() > 0.0) || !det.is_finite() {
                return Err(Error::LocalizationFailure("singular forward Jacobian".into()));
            }
            let dlat = -(d * r[0] - b * r[1]) / det;
            let dlon = -(-c * r[0] + a * r[1]) / det;

            let norm0 = r[0].hypot(r[1]);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..12 {
                let (nl, no) = (lat + step * dlat, lon + step * dlon);
                if nl.abs() > MAX_NORMALIZED_EXTENT || no.abs() > MAX_NORMALIZED_EXTENT {
                    step *= 0.5;
                    continue;
                }
                if let Ok(nr) = residual(nl, no) {
                    if nr[0].hypot(nr[1]) < norm0 {
                        accepted = Some((nl, no, nr));
                        break;
                    }
                }
                step *= 0.5;
            }
            match accepted {
                Some((nl, no, nr)) => {
                    lat = nl;
                    lon = no;
                    r = nr;
                }
                None => {
                    return Err(Error::LocalizationFailure(format!("no descent step from residual {norm0:.3e} px")))
                }
            }
        }
        if r[0].abs() < tol && r[1].abs() < tol {
            return Ok(self.denormalize_ground(lat, lon, hei_n));
        }
        Err(Error::LocalizationFailure(format!(
            "no convergence after {MAX_LOCALIZE_ITERATIONS} iterations (residual {:.3e} px)",
            r[0].hypot(r[1])
        )))
    }

    /// Inverse polynomials in normalized units, `(samp_n, line_n, hei_n)` to
    /// `(lat_n, lon_n)`.
    pub fn inverse_normalized(&self, samp_n: f64, line_n: f64, hei_n: f64) -> Result<[f64; 2]> {
        let inv = self.inverse.as_ref().ok_or(Error::MissingInverse)?;
        let m = monomials(samp_n, line_n, hei_n);
        let dot = |p: &Poly20| p.c.iter().zip(m.iter()).map(|(c, m)| c * m).sum::<f64>();
        let ad = dot(&inv.lat_den);
        let od = dot(&inv.lon_den);
        for d in [ad, od] {
            if !(d.abs() >= DENOMINATOR_EPS) {
                return Err(Error::DegenerateProjection(d));
            }
        }
        Ok([dot(&inv.lat_num) / ad, dot(&inv.lon_num) / od])
    }

    /// Image point plus height to ground through the inverse polynomials.
    pub fn localize_inverse_fitted(&self, q: &ImagePoint, hei: f64) -> Result<GroundPoint> {
        let [s, l] = self.normalize_image(q);
        let hei_n = self.normalize_height(hei);
        let [lat_n, lon_n] = self.inverse_normalized(s, l, hei_n)?;
        Ok(self.denormalize_ground(lat_n, lon_n, hei_n))
    }

    /// Model of the same sensor after cropping the image at `(samp0, line0)`.
    pub fn cropped(&self, samp0: f64, line0: f64) -> Self {
        let mut m = self.clone();
        m.norm.samp_off -= samp0;
        m.norm.line_off -= line0;
        m
    }

    /// Model of the same sensor on an image downsampled by `factor` with
    /// pixel-area averaging (pixel centers at `(x + 0.5) / factor - 0.5`).
    pub fn downscaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        m.norm.samp_off = (m.norm.samp_off + 0.5) / factor - 0.5;
        m.norm.line_off = (m.norm.line_off + 0.5) / factor - 0.5;
        m.norm.samp_scale /= factor;
        m.norm.line_scale /= factor;
        m
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// samp_n = lon_n, line_n = lat_n, unit denominators.
    pub(crate) fn pass_through_model() -> RpcModel {
        RpcModel::new(
            Normalization {
                line_off: 5000.0,
                line_scale: 5000.0,
                samp_off: 4000.0,
                samp_scale: 4000.0,
                lat_off: 36.0,
                lat_scale: 0.05,
                lon_off: 114.0,
                lon_scale: 0.06,
                hei_off: 300.0,
                hei_scale: 500.0,
            },
            Poly20::monomial(1, 1.0),
            Poly20::one(),
            Poly20::monomial(2, 1.0),
            Poly20::one(),
        )
        .unwrap()
    }

    #[test]
    fn normalize_offsets_to_origin() {
        let m = pass_through_model();
        let n = m.norm;
        let p = GroundPoint::new(n.lat_off, n.lon_off, n.hei_off);
        assert_eq!(m.normalize_ground(&p), [0.0, 0.0, 0.0]);
        let p = GroundPoint::new(n.lat_off + n.lat_scale, n.lon_off + n.lon_scale, n.hei_off + n.hei_scale);
        for v in m.normalize_ground(&p) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_round_trip() {
        let m = pass_through_model();
        let p = GroundPoint::new(36.0123456, 113.98765, 712.25);
        let [a, b, c] = m.normalize_ground(&p);
        let back = m.denormalize_ground(a, b, c);
        assert!((back.lat - p.lat).abs() <= 1e-12 * p.lat.abs());
        assert!((back.lon - p.lon).abs() <= 1e-12 * p.lon.abs());
        assert!((back.hei - p.hei).abs() <= 1e-12 * p.hei.abs());
        let q = ImagePoint::new(123.25, 9876.5);
        let [s, l] = m.normalize_image(&q);
        let back = m.denormalize_image(s, l);
        assert!((back.samp - q.samp).abs() <= 1e-12 * q.samp.abs());
        assert!((back.line - q.line).abs() <= 1e-12 * q.line.abs());
    }

    #[test]
    fn pass_through_swaps_coordinates() {
        let m = pass_through_model();
        let (a, b) = (0.3, -0.6);
        let p = m.denormalize_ground(a, b, 0.2);
        let q = m.project_forward(&p).unwrap();
        let [s, l] = m.normalize_image(&q);
        assert!((s - b).abs() < 1e-12);
        assert!((l - a).abs() < 1e-12);
    }

    #[test]
    fn vanishing_denominator_is_an_error() {
        let mut m = pass_through_model();
        // den = 1 + 0.5 * L vanishes at lon_n = -2, outside the cube
        m.samp_den = Poly20::new({
            let mut c = [0.0; 20];
            c[0] = 1.0;
            c[1] = 0.5;
            c
        });
        m.validate().unwrap();
        let p = m.denormalize_ground(0.0, -2.0, 0.0);
        assert!(matches!(m.project_forward(&p), Err(Error::DegenerateProjection(_))));
    }

    #[test]
    fn invalid_scale_rejected() {
        let mut m = pass_through_model();
        m.norm.lat_scale = 0.0;
        assert!(matches!(m.validate(), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn denominator_vanishing_inside_cube_rejected() {
        let mut m = pass_through_model();
        m.line_den = Poly20::monomial(3, 1.0);
        assert!(matches!(m.validate(), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn localize_round_trip_pass_through() {
        let m = pass_through_model();
        let p = m.denormalize_ground(0.41, -0.77, 0.3);
        let q = m.project_forward(&p).unwrap();
        let g = m.localize_iterative(&q, p.hei, 1e-9).unwrap();
        assert!((g.lat - p.lat).abs() < 1e-10);
        assert!((g.lon - p.lon).abs() < 1e-10);
    }

    #[test]
    fn localize_far_outside_domain_fails() {
        let m = pass_through_model();
        let q = ImagePoint::new(1e9, -1e9);
        assert!(matches!(m.localize_iterative(&q, 300.0, 1e-6), Err(Error::LocalizationFailure(_))));
    }

    #[test]
    fn missing_inverse_is_an_error() {
        let m = pass_through_model();
        assert!(matches!(m.localize_inverse_fitted(&ImagePoint::new(1.0, 2.0), 0.0), Err(Error::MissingInverse)));
    }

    #[test]
    fn downscale_and_crop_are_consistent() {
        let m = pass_through_model();
        let p = m.denormalize_ground(0.1, 0.2, 0.3);
        let q = m.project_forward(&p).unwrap();
        let q4 = m.downscaled(4.0).project_forward(&p).unwrap();
        assert!((q4.samp - ((q.samp + 0.5) / 4.0 - 0.5)).abs() < 1e-9);
        let qc = m.cropped(100.0, 250.0).project_forward(&p).unwrap();
        assert!((qc.samp - (q.samp - 100.0)).abs() < 1e-9);
        assert!((qc.line - (q.line - 250.0)).abs() < 1e-9);
    }
}
