//! Projective (pinhole) approximation of an RPC over an image patch and a
//! height range, its fitting error, and plane-induced homographies.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix3, Matrix3x4, SMatrix, SVector, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::utm::{geodetic_to_utm_in, UtmZone};
use crate::raster::PixelRect;
use crate::rpc::{GridSpec, GroundPoint, ImagePoint, RpcModel};

const LOCALIZE_TOL: f64 = 1e-9;
const LM_ITERATIONS: usize = 100;
const DEGENERATE_SV_RATIO: f64 = 1e-9;

/// Local Cartesian frame: UTM easting/northing and height minus an origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtmFrame {
    pub zone: UtmZone,
    pub origin: [f64; 3],
}

impl UtmFrame {
    pub fn to_local(&self, g: &GroundPoint) -> Result<Vector3<f64>> {
        let u = geodetic_to_utm_in(g.lat, g.lon, self.zone)?;
        Ok(Vector3::new(u.easting - self.origin[0], u.northing - self.origin[1], g.hei - self.origin[2]))
    }
}

/// 3×4 camera over a [`UtmFrame`], with the patch and height range it was
/// fitted for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    pub p: Matrix3x4<f64>,
    pub frame: UtmFrame,
    pub patch: PixelRect,
    pub heights: [f64; 2],
}

impl ProjectionMatrix {
    #[inline]
    pub fn project_local(&self, x: &Vector3<f64>) -> ImagePoint {
        let v = self.p * Vector4::new(x[0], x[1], x[2], 1.0);
        ImagePoint::new(v[0] / v[2], v[1] / v[2])
    }

    pub fn project(&self, g: &GroundPoint) -> Result<ImagePoint> {
        Ok(self.project_local(&self.frame.to_local(g)?))
    }

    /// Homography from the plane `height = hei` (local x, y, 1) to the image.
    pub fn plane_matrix(&self, hei: f64) -> Matrix3<f64> {
        let z = hei - self.frame.origin[2];
        let p = &self.p;
        Matrix3::from_columns(&[p.column(0).into(), p.column(1).into(), p.column(2) * z + p.column(3)])
    }
}

/// Fitting residuals over a check grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub min_err: f64,
    pub max_err: f64,
    pub mean_err: f64,
    pub rms_err: f64,
    pub patch_size: [usize; 2],
    pub grid: GridSpec,
    /// Sample positions of the error raster, pixels.
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Max error over heights per `(x, y)` cell, row-major in `ys` then `xs`.
    pub cell_max: Vec<f64>,
}

#[derive(Serialize)]
struct FitSummary<'a> {
    min_err: f64,
    max_err: f64,
    mean_err: f64,
    rms_err: f64,
    patch_size: [usize; 2],
    grid: &'a GridSpec,
}

impl FitReport {
    pub fn summary_json(&self) -> Result<String> {
        let s = FitSummary {
            min_err: self.min_err,
            max_err: self.max_err,
            mean_err: self.mean_err,
            rms_err: self.rms_err,
            patch_size: self.patch_size,
            grid: &self.grid,
        };
        Ok(serde_json::to_string_pretty(&s)? + "\n")
    }

    /// Error raster as `x,y,err` rows.
    pub fn raster_csv(&self) -> String {
        let mut s = String::from("x,y,err\n");
        for (j, y) in self.ys.iter().enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                let _ = writeln!(s, "{x},{y},{}", self.cell_max[j * self.xs.len() + i]);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeFitOptions {
    /// Levenberg–Marquardt refinement of the linear solution.
    pub refine: bool,
    pub check_grid: GridSpec,
    /// Frame to fit in; defaults to the control-point centroid in the patch
    /// center's UTM zone.
    pub frame: Option<UtmFrame>,
}

impl Default for PinholeFitOptions {
    fn default() -> Self {
        Self { refine: true, check_grid: GridSpec::new(20, 20, 20), frame: None }
    }
}

/// Image points and heights of a grid over a patch and height range.
fn patch_grid(patch: &PixelRect, heights: [f64; 2], grid: GridSpec) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let x1 = patch.x0 as f64 + patch.width as f64 - 1.0;
    let y1 = patch.y0 as f64 + patch.height as f64 - 1.0;
    (
        GridSpec::axis(grid.nx, patch.x0 as f64, x1),
        GridSpec::axis(grid.ny, patch.y0 as f64, y1),
        GridSpec::axis(grid.nz, heights[0], heights[1]),
    )
}

fn check_domain(patch: &PixelRect, heights: [f64; 2]) -> Result<()> {
    if patch.width == 0 || patch.height == 0 {
        return Err(Error::InvalidArgument("empty patch".into()));
    }
    if !(heights[0].is_finite() && heights[1].is_finite() && heights[0] <= heights[1]) {
        return Err(Error::InvalidArgument("height range must be finite and ordered".into()));
    }
    Ok(())
}

/// Fits with default options (LM refinement, 20×20×20 check grid).
pub fn fit_pinhole(
    m: &RpcModel,
    patch: PixelRect,
    heights: [f64; 2],
    grid: GridSpec,
) -> Result<(ProjectionMatrix, FitReport)> {
    fit_pinhole_with(m, patch, heights, grid, &PinholeFitOptions::default())
}

/// Virtual control points from `grid` over the patch and height range,
/// Hartley-normalized DLT, optional Levenberg–Marquardt refinement of the
/// reprojection error, then a report on the independent check grid.
pub fn fit_pinhole_with(
    m: &RpcModel,
    patch: PixelRect,
    heights: [f64; 2],
    grid: GridSpec,
    opts: &PinholeFitOptions,
) -> Result<(ProjectionMatrix, FitReport)> {
    check_domain(&patch, heights)?;
    if grid.len() < 6 {
        return Err(Error::DegenerateGeometry(format!("{} control points, need at least 6", grid.len())));
    }
    let (xs, ys, zs) = patch_grid(&patch, heights, grid);
    let mut image = Vec::with_capacity(grid.len());
    let mut ground = Vec::with_capacity(grid.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                let q = ImagePoint::new(x, y);
                ground.push(m.localize_iterative(&q, z, LOCALIZE_TOL)?);
                image.push(q);
            }
        }
    }
    let frame = match opts.frame {
        Some(f) => f,
        None => {
            let (cx, cy) = patch.center();
            let c = m.localize_iterative(&ImagePoint::new(cx, cy), 0.5 * (heights[0] + heights[1]), LOCALIZE_TOL)?;
            let zone = UtmZone::for_point(c.lat, c.lon);
            let mut sum = [0.0; 3];
            for g in &ground {
                let u = geodetic_to_utm_in(g.lat, g.lon, zone)?;
                sum[0] += u.easting;
                sum[1] += u.northing;
                sum[2] += g.hei;
            }
            let n = ground.len() as f64;
            UtmFrame { zone, origin: [sum[0] / n, sum[1] / n, sum[2] / n] }
        }
    };
    let local: Vec<Vector3<f64>> = ground.iter().map(|g| frame.to_local(g)).collect::<Result<_>>()?;

    let mut p = dlt(&local, &image)?;
    if opts.refine {
        p = refine_lm(p, &local, &image);
    }
    let p = normalize_camera(p)?;
    let cam = ProjectionMatrix { p, frame, patch, heights };
    let report = fitting_error_report(m, &cam, opts.check_grid)?;
    Ok((cam, report))
}

/// Hartley similarity for points of dimension `D`: centroid to origin, mean
/// distance `sqrt(D)`.
fn hartley<const D: usize>(pts: &[SVector<f64, D>]) -> (SVector<f64, D>, f64) {
    let n = pts.len() as f64;
    let c = pts.iter().fold(SVector::<f64, D>::zeros(), |a, p| a + p) / n;
    let mean = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean > 0.0 { (D as f64).sqrt() / mean } else { 1.0 };
    (c, s)
}

fn dlt(x3: &[Vector3<f64>], q: &[ImagePoint]) -> Result<Matrix3x4<f64>> {
    let x2: Vec<SVector<f64, 2>> = q.iter().map(|q| SVector::<f64, 2>::new(q.samp, q.line)).collect();
    let (c3, s3) = hartley(x3);
    let (c2, s2) = hartley(&x2);
    let n = x3.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for i in 0..n {
        let x = (x3[i] - c3) * s3;
        let u = (x2[i] - c2) * s2;
        let xh = [x[0], x[1], x[2], 1.0];
        for k in 0..4 {
            a[(2 * i, k)] = xh[k];
            a[(2 * i, 8 + k)] = -u[0] * xh[k];
            a[(2 * i + 1, 4 + k)] = xh[k];
            a[(2 * i + 1, 8 + k)] = -u[1] * xh[k];
        }
    }
    // the 12×12 normal matrix has the same right singular vectors
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let (l1, lmax) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[11]]);
    if !(lmax > 0.0) || l1.max(0.0).sqrt() < DEGENERATE_SV_RATIO * lmax.sqrt() {
        return Err(Error::DegenerateGeometry(
            "control points do not determine a camera (coplanar or collinear)".into(),
        ));
    }
    let v = eig.eigenvectors.column(order[0]);
    let pn = Matrix3x4::from_row_slice(v.as_slice());

    let t2 = Matrix3::new(s2, 0.0, -s2 * c2[0], 0.0, s2, -s2 * c2[1], 0.0, 0.0, 1.0);
    let mut t3 = SMatrix::<f64, 4, 4>::identity() * s3;
    t3[(3, 3)] = 1.0;
    for k in 0..3 {
        t3[(k, 3)] = -s3 * c3[k];
    }
    let t2inv = t2.try_inverse().ok_or_else(|| Error::DegenerateGeometry("image normalization".into()))?;
    Ok(t2inv * pn * t3)
}

fn reprojection(p: &Matrix3x4<f64>, x: &Vector3<f64>) -> (f64, f64, f64) {
    let v = p * Vector4::new(x[0], x[1], x[2], 1.0);
    (v[0] / v[2], v[1] / v[2], v[2])
}

/// Levenberg–Marquardt on pixel reprojection error with `P[2][3]` fixed.
fn refine_lm(p0: Matrix3x4<f64>, x3: &[Vector3<f64>], q: &[ImagePoint]) -> Matrix3x4<f64> {
    let scale = p0[(2, 3)];
    if !(scale.abs() > 0.0) {
        return p0;
    }
    let mut p = p0 / scale;
    let cost = |p: &Matrix3x4<f64>| -> f64 {
        x3.iter()
            .zip(q)
            .map(|(x, q)| {
                let (u, v, _) = reprojection(p, x);
                (u - q.samp).powi(2) + (v - q.line).powi(2)
            })
            .sum()
    };
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..LM_ITERATIONS {
        let mut jtj = SMatrix::<f64, 11, 11>::zeros();
        let mut jtr = SVector::<f64, 11>::zeros();
        for (x, q) in x3.iter().zip(q) {
            let (u, v, w) = reprojection(&p, x);
            let xh = [x[0], x[1], x[2], 1.0];
            let mut ju = SVector::<f64, 11>::zeros();
            let mut jv = SVector::<f64, 11>::zeros();
            for k in 0..4 {
                ju[k] = xh[k] / w;
                jv[4 + k] = xh[k] / w;
            }
            for k in 0..3 {
                ju[8 + k] = -u * xh[k] / w;
                jv[8 + k] = -v * xh[k] / w;
            }
            let (ru, rv) = (u - q.samp, v - q.line);
            jtj += ju * ju.transpose() + jv * jv.transpose();
            jtr += ju * ru + jv * rv;
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj;
            for k in 0..11 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(delta) = a.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for k in 0..11 {
                trial[(k / 4, k % 4)] += delta[k];
            }
            let tc = cost(&trial);
            if tc.is_finite() && tc < c {
                let rel = (c - tc) / c.max(1e-300);
                p = trial;
                c = tc;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

/// Scales so the last row of the left 3×3 block has unit norm and points in
/// front of the camera at the frame origin have positive depth.
fn normalize_camera(p: Matrix3x4<f64>) -> Result<Matrix3x4<f64>> {
    let n = p.fixed_view::<1, 3>(2, 0).norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateGeometry("camera has no finite depth row".into()));
    }
    let s = if p[(2, 3)] < 0.0 { -1.0 / n } else { 1.0 / n };
    let p = p * s;
    if p.fixed_view::<3, 3>(0, 0).determinant().abs() < 1e-300 {
        return Err(Error::DegenerateGeometry("rank-deficient camera".into()));
    }
    Ok(p)
}

/// Reprojection discrepancy between `cam` and the RPC over `check_grid`
/// spanning the camera's patch and height range.
pub fn fitting_error_report(m: &RpcModel, cam: &ProjectionMatrix, check_grid: GridSpec) -> Result<FitReport> {
    check_domain(&cam.patch, cam.heights)?;
    if check_grid.is_empty() {
        return Err(Error::InvalidArgument("empty check grid".into()));
    }
    let (xs, ys, zs) = patch_grid(&cam.patch, cam.heights, check_grid);
    let errs: Vec<Vec<f64>> = ys
        .par_iter()
        .map(|&y| {
            let mut row = Vec::with_capacity(xs.len() * zs.len());
            for &x in &xs {
                for &z in &zs {
                    let q = ImagePoint::new(x, y);
                    let g = m.localize_iterative(&q, z, LOCALIZE_TOL)?;
                    row.push(cam.project(&g)?.distance(&q));
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let nz = zs.len();
    let mut cell_max = Vec::with_capacity(xs.len() * ys.len());
    let (mut min, mut max, mut sum, mut sq) = (f64::INFINITY, 0.0_f64, 0.0, 0.0);
    for row in &errs {
        for cell in row.chunks(nz) {
            cell_max.push(cell.iter().copied().fold(0.0, f64::max));
            for &e in cell {
                min = min.min(e);
                max = max.max(e);
                sum += e;
                sq += e * e;
            }
        }
    }
    let n = check_grid.len() as f64;
    Ok(FitReport {
        min_err: min,
        max_err: max,
        mean_err: sum / n,
        rms_err: (sq / n).sqrt(),
        patch_size: [cam.patch.width, cam.patch.height],
        grid: check_grid,
        xs,
        ys,
        cell_max,
    })
}

/// Homography mapping reference pixels to source pixels through the plane
/// `height = hei`: `H_src · H_ref⁻¹` with `H = [p1 p2 (p3·z + p4)]`.
pub fn homography_for_plane(p_ref: &ProjectionMatrix, p_src: &ProjectionMatrix, hei: f64) -> Result<Matrix3<f64>> {
    if p_ref.frame != p_src.frame {
        return Err(Error::InvalidArgument("cameras are expressed in different frames".into()));
    }
    let h_ref = p_ref.plane_matrix(hei);
    let h_src = p_src.plane_matrix(hei);
    let degenerate = |h: &Matrix3<f64>| {
        let n = h.norm();
        !(n > 0.0) || h.determinant().abs() < 1e-12 * n * n * n
    };
    if degenerate(&h_ref) || degenerate(&h_src) {
        return Err(Error::DegenerateGeometry("plane passes through a camera center".into()));
    }
    let inv = h_ref.try_inverse().ok_or_else(|| Error::DegenerateGeometry("singular plane homography".into()))?;
    let h = h_src * inv;
    Ok(h / h.norm())
}

/// Applies a homography to an image point.
pub fn apply_homography(h: &Matrix3<f64>, q: &ImagePoint) -> ImagePoint {
    let v = h * Vector3::new(q.samp, q.line, 1.0);
    ImagePoint::new(v[0] / v[2], v[1] / v[2])
}
