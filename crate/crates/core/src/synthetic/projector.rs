//! Closed-form ground-to-image projectors with exact inverses.

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::utm::{geodetic_to_utm_in, utm_to_geodetic, UtmZone};
use crate::rpc::{GroundPoint, ImagePoint};

/// Local metric frame: UTM coordinates relative to an origin, heights as is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub zone: UtmZone,
    pub origin_e: f64,
    pub origin_n: f64,
}

impl LocalFrame {
    /// Frame centered on a geodetic point, in that point's standard zone.
    pub fn centered_at(lat: f64, lon: f64) -> Result<Self> {
        let zone = UtmZone::for_point(lat, lon);
        let u = geodetic_to_utm_in(lat, lon, zone)?;
        Ok(Self { zone, origin_e: u.easting, origin_n: u.northing })
    }

    #[inline]
    pub fn to_local(&self, lat: f64, lon: f64) -> Result<(f64, f64)> {
        let u = geodetic_to_utm_in(lat, lon, self.zone)?;
        Ok((u.easting - self.origin_e, u.northing - self.origin_n))
    }

    #[inline]
    pub fn to_geodetic(&self, e: f64, n: f64) -> Result<(f64, f64)> {
        utm_to_geodetic(e + self.origin_e, n + self.origin_n, self.zone)
    }
}

/// Line-scanning camera over the local frame.
///
/// Along track (`line`) the mapping is affine in the ground northing and the
/// height (the view plane is tilted by `pitch`); across track (`samp`) it is a
/// one-dimensional central projection from the orbit altitude, optionally
/// rolled. The two coordinates therefore have different denominators, which
/// no 3×4 projective camera reproduces exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushBroomCamera {
    /// Ground sample distance at `ref_height`, meters per pixel.
    pub gsd: f64,
    /// Orbit altitude above the height datum, meters.
    pub altitude: f64,
    /// Along-track view tilt, radians.
    pub pitch: f64,
    /// Across-track view tilt, radians.
    pub roll: f64,
    pub ref_height: f64,
    /// Image position of the local origin at `ref_height`.
    pub center_samp: f64,
    pub center_line: f64,
}

impl PushBroomCamera {
    #[inline]
    fn project(&self, e: f64, n: f64, h: f64) -> (f64, f64) {
        let dh = h - self.ref_height;
        let line = self.center_line + (n + dh * self.pitch.tan()) / self.gsd;
        let samp = self.center_samp
            + (self.altitude - self.ref_height) * (e + dh * self.roll.tan()) / ((self.altitude - h) * self.gsd);
        (samp, line)
    }

    #[inline]
    fn unproject(&self, samp: f64, line: f64, h: f64) -> (f64, f64) {
        let dh = h - self.ref_height;
        let n = (line - self.center_line) * self.gsd - dh * self.pitch.tan();
        let e = (samp - self.center_samp) * self.gsd * (self.altitude - h) / (self.altitude - self.ref_height)
            - dh * self.roll.tan();
        (e, n)
    }
}

/// Projective camera `x ~ P (e, n, h, 1)` over the local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub p: Matrix3x4<f64>,
}

impl PinholeCamera {
    /// Camera at `center` (local frame) looking at `target`, with focal length
    /// `focal` pixels and principal point `(cx, cy)`. Image x follows local east
    /// as closely as the viewing direction allows.
    pub fn look_at(center: [f64; 3], target: [f64; 3], focal: f64, cx: f64, cy: f64) -> Self {
        let c = Vector3::from(center);
        let z = (Vector3::from(target) - c).normalize();
        let east = Vector3::new(1.0, 0.0, 0.0);
        let x = (east - z * z.dot(&east)).normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let k = Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0);
        let t = -(r * c);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.set_column(3, &t);
        Self { p: k * rt }
    }

    #[inline]
    fn project(&self, e: f64, n: f64, h: f64) -> (f64, f64) {
        let p = &self.p;
        let u = p[(0, 0)] * e + p[(0, 1)] * n + p[(0, 2)] * h + p[(0, 3)];
        let v = p[(1, 0)] * e + p[(1, 1)] * n + p[(1, 2)] * h + p[(1, 3)];
        let w = p[(2, 0)] * e + p[(2, 1)] * n + p[(2, 2)] * h + p[(2, 3)];
        (u / w, v / w)
    }

    #[inline]
    fn unproject(&self, x: f64, y: f64, h: f64) -> (f64, f64) {
        let p = &self.p;
        // (row0 - x row2) . X = 0 and (row1 - y row2) . X = 0 with X = (e, n, h, 1)
        let r = |i: usize, s: f64, j: usize| p[(i, j)] - s * p[(2, j)];
        let (a, b) = (r(0, x, 0), r(0, x, 1));
        let (c, d) = (r(1, y, 0), r(1, y, 1));
        let f0 = -(r(0, x, 2) * h + r(0, x, 3));
        let f1 = -(r(1, y, 2) * h + r(1, y, 3));
        let det = a * d - b * c;
        ((d * f0 - b * f1) / det, (a * f1 - c * f0) / det)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CameraKind {
    PushBroom(PushBroomCamera),
    Pinhole(PinholeCamera),
}

/// A camera bound to a local frame and an image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticProjector {
    pub frame: LocalFrame,
    pub camera: CameraKind,
    pub width: usize,
    pub height: usize,
}

impl AnalyticProjector {
    /// Local `(e, n, h)` to `(samp, line)`.
    #[inline]
    pub fn project_local(&self, e: f64, n: f64, h: f64) -> (f64, f64) {
        match &self.camera {
            CameraKind::PushBroom(c) => c.project(e, n, h),
            CameraKind::Pinhole(c) => c.project(e, n, h),
        }
    }

    /// `(samp, line)` at height `h` to local `(e, n)`.
    #[inline]
    pub fn unproject_local(&self, samp: f64, line: f64, h: f64) -> (f64, f64) {
        match &self.camera {
            CameraKind::PushBroom(c) => c.unproject(samp, line, h),
            CameraKind::Pinhole(c) => c.unproject(samp, line, h),
        }
    }

    pub fn project(&self, g: &GroundPoint) -> Result<ImagePoint> {
        let (e, n) = self.frame.to_local(g.lat, g.lon)?;
        let (s, l) = self.project_local(e, n, g.hei);
        if !(s.is_finite() && l.is_finite()) {
            return Err(Error::DegenerateGeometry("projector singular at point".into()));
        }
        Ok(ImagePoint::new(s, l))
    }

    pub fn unproject(&self, q: &ImagePoint, hei: f64) -> Result<GroundPoint> {
        let (e, n) = self.unproject_local(q.samp, q.line, hei);
        let (lat, lon) = self.frame.to_geodetic(e, n)?;
        Ok(GroundPoint::new(lat, lon, hei))
    }

    /// Image motion per meter of height at a pixel, by central difference of
    /// the exact mapping (δ = 0.5 m).
    pub fn parallax_rate(&self, q: &ImagePoint, hei: f64, other: &AnalyticProjector) -> [f64; 2] {
        let d = 0.5;
        let at = |h: f64| {
            let (e, n) = self.unproject_local(q.samp, q.line, h);
            other.project_local(e, n, h)
        };
        let (a, b) = (at(hei + d), at(hei - d));
        [(a.0 - b.0) / (2.0 * d), (a.1 - b.1) / (2.0 * d)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pushbroom() -> PushBroomCamera {
        PushBroomCamera {
            gsd: 2.5,
            altitude: 505_000.0,
            pitch: 22f64.to_radians(),
            roll: 3f64.to_radians(),
            ref_height: 200.0,
            center_samp: 511.5,
            center_line: 511.5,
        }
    }

    #[test]
    fn pushbroom_inverse_is_exact() {
        let c = pushbroom();
        for &(e, n, h) in &[(0.0, 0.0, 200.0), (1234.5, -987.25, 35.0), (-3000.0, 4000.0, 612.0)] {
            let (s, l) = c.project(e, n, h);
            let (e2, n2) = c.unproject(s, l, h);
            assert!((e2 - e).abs() < 1e-12 * e.abs().max(1.0) * 10.0);
            assert!((n2 - n).abs() < 1e-12 * n.abs().max(1.0) * 10.0);
        }
    }

    #[test]
    fn pinhole_inverse_is_exact() {
        let c = PinholeCamera::look_at([300.0, -2000.0, 20_000.0], [0.0, 0.0, 100.0], 8000.0, 512.0, 512.0);
        for &(e, n, h) in &[(0.0, 0.0, 100.0), (150.5, -220.0, 35.0), (-400.0, 300.0, 612.0)] {
            let (s, l) = c.project(e, n, h);
            let (e2, n2) = c.unproject(s, l, h);
            assert!((e2 - e).abs() < 1e-9 && (n2 - n).abs() < 1e-9);
        }
    }

    #[test]
    fn pinhole_looks_at_target() {
        let c = PinholeCamera::look_at([0.0, -500.0, 10_000.0], [0.0, 0.0, 0.0], 5000.0, 100.0, 80.0);
        let (s, l) = c.project(0.0, 0.0, 0.0);
        assert!((s - 100.0).abs() < 1e-9 && (l - 80.0).abs() < 1e-9);
    }

    #[test]
    fn local_frame_round_trip() {
        let f = LocalFrame::centered_at(36.0, 114.0).unwrap();
        let (e, n) = f.to_local(36.01, 114.02).unwrap();
        let (lat, lon) = f.to_geodetic(e, n).unwrap();
        assert!((lat - 36.01).abs() < 1e-11 && (lon - 114.02).abs() < 1e-11);
        let (e0, n0) = f.to_local(36.0, 114.0).unwrap();
        assert!(e0.abs() < 1e-6 && n0.abs() < 1e-6);
    }

    #[test]
    fn parallax_rates() {
        let frame = LocalFrame::centered_at(36.0, 114.0).unwrap();
        let nadir = AnalyticProjector {
            frame,
            camera: CameraKind::PushBroom(PushBroomCamera { pitch: 0.0, roll: 0.0, ..pushbroom() }),
            width: 1024,
            height: 1024,
        };
        let fwd =
            AnalyticProjector { camera: CameraKind::PushBroom(PushBroomCamera { roll: 0.0, ..pushbroom() }), ..nadir };
        let r = nadir.parallax_rate(&ImagePoint::new(511.5, 511.5), 200.0, &fwd);
        assert!((r[1] - 22f64.to_radians().tan() / 2.5).abs() < 1e-9);
        assert!(r[0].abs() < 1e-9);
    }
}
