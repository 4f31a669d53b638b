//! Image-to-image warping through a horizontal height plane, evaluated with
//! coefficient-tensor contractions.
//!
//! A pixel of the `from` view at height `hei` is localized with `from`'s
//! inverse polynomials, re-expressed in `to`'s ground normalization and
//! projected with `to`'s forward polynomials. The plane sweep gathers, so it
//! warps reference pixels into source images (`from` = reference).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{PixelRect, Raster};
use crate::rpc::{ImagePoint, Normalization, RpcModel, DENOMINATOR_EPS};
use crate::tensor::{build_coeff_tensor, contract_batch, CoeffTensor, PointTensor, WarpBatch};

const FALLBACK_TOL_PX: f64 = 1e-9;

/// Forward tensors `(samp_num, samp_den, line_num, line_den)` and inverse
/// tensors `(lat_num, lat_den, lon_num, lon_den)` of one model.
#[derive(Debug, Clone)]
pub struct ModelTensors {
    pub norm: Normalization,
    pub forward: [CoeffTensor; 4],
    pub inverse: Option<[CoeffTensor; 4]>,
}

impl ModelTensors {
    pub fn new(m: &RpcModel) -> Self {
        let forward = [
            build_coeff_tensor(&m.samp_num),
            build_coeff_tensor(&m.samp_den),
            build_coeff_tensor(&m.line_num),
            build_coeff_tensor(&m.line_den),
        ];
        let inverse = m.inverse.as_ref().map(|inv| {
            [
                build_coeff_tensor(&inv.lat_num),
                build_coeff_tensor(&inv.lat_den),
                build_coeff_tensor(&inv.lon_num),
                build_coeff_tensor(&inv.lon_den),
            ]
        });
        Self { norm: m.norm, forward, inverse }
    }
}

#[inline]
fn ratio(num: f64, den: f64) -> Option<f64> {
    if den.abs() >= DENOMINATOR_EPS {
        Some(num / den)
    } else {
        None
    }
}

/// Precomputed warp from one view into another.
#[derive(Debug, Clone)]
pub struct WarpPair {
    from_model: RpcModel,
    from: ModelTensors,
    to: ModelTensors,
}

impl WarpPair {
    pub fn new(from: &RpcModel, to: &RpcModel) -> Self {
        Self { from_model: from.clone(), from: ModelTensors::new(from), to: ModelTensors::new(to) }
    }

    pub fn has_inverse(&self) -> bool {
        self.from.inverse.is_some()
    }

    /// `X_s = (1, samp_n, line_n, hei_n)` in the `from` normalization.
    #[inline]
    fn source_tensor(&self, q: &ImagePoint, hei: f64) -> PointTensor {
        let n = &self.from.norm;
        PointTensor::new(
            (q.samp - n.samp_off) / n.samp_scale,
            (q.line - n.line_off) / n.line_scale,
            (hei - n.hei_off) / n.hei_scale,
        )
    }

    /// `X_0 = (1, lon_n, lat_n, hei_n)` in the `to` normalization, from the
    /// four inverse contraction values.
    #[inline]
    fn ground_tensor(&self, inv: &[f64], hei: f64) -> Option<PointTensor> {
        let lat_n = ratio(inv[0], inv[1])?;
        let lon_n = ratio(inv[2], inv[3])?;
        let (f, t) = (&self.from.norm, &self.to.norm);
        let lat = lat_n * f.lat_scale + f.lat_off;
        let lon = lon_n * f.lon_scale + f.lon_off;
        Some(self.ground_tensor_geodetic(lat, lon, hei, t))
    }

    #[inline]
    fn ground_tensor_geodetic(&self, lat: f64, lon: f64, hei: f64, t: &Normalization) -> PointTensor {
        PointTensor::new(
            (lon - t.lon_off) / t.lon_scale,
            (lat - t.lat_off) / t.lat_scale,
            (hei - t.hei_off) / t.hei_scale,
        )
    }

    #[inline]
    fn image_point(&self, fwd: &[f64]) -> Option<ImagePoint> {
        let s = ratio(fwd[0], fwd[1])?;
        let l = ratio(fwd[2], fwd[3])?;
        let t = &self.to.norm;
        Some(ImagePoint::new(s * t.samp_scale + t.samp_off, l * t.line_scale + t.line_off))
    }

    fn fallback_ground(&self, q: &ImagePoint, hei: f64) -> Option<PointTensor> {
        let g = self.from_model.localize_iterative(q, hei, FALLBACK_TOL_PX).ok()?;
        Some(self.ground_tensor_geodetic(g.lat, g.lon, hei, &self.to.norm))
    }

    /// Warps a single point. No height-range check.
    pub fn warp(&self, q: &ImagePoint, hei: f64) -> Result<ImagePoint> {
        let x0 = match &self.from.inverse {
            Some(inv) => {
                let xs = self.source_tensor(q, hei);
                let vals = [inv[0].contract(&xs), inv[1].contract(&xs), inv[2].contract(&xs), inv[3].contract(&xs)];
                self.ground_tensor(&vals, hei).ok_or(Error::DegenerateProjection(vals[1].abs().min(vals[3].abs())))?
            }
            None => self
                .fallback_ground(q, hei)
                .ok_or_else(|| Error::LocalizationFailure("iterative fallback failed".into()))?,
        };
        let f = &self.to.forward;
        let vals = [f[0].contract(&x0), f[1].contract(&x0), f[2].contract(&x0), f[3].contract(&x0)];
        self.image_point(&vals).ok_or(Error::DegenerateProjection(vals[1].abs().min(vals[3].abs())))
    }

    /// Warps many points (each at its own height) with two batched
    /// contractions. Points whose denominators degenerate come back `None`.
    pub fn warp_many(&self, points: &[ImagePoint], heights: &[f64]) -> Result<Vec<Option<ImagePoint>>> {
        if points.len() != heights.len() {
            return Err(Error::ShapeMismatch(format!("{} points vs {} heights", points.len(), heights.len())));
        }
        let grounds: Vec<Option<PointTensor>> = match &self.from.inverse {
            Some(inv) => {
                let xs: Vec<PointTensor> =
                    points.par_iter().zip(heights.par_iter()).map(|(q, &h)| self.source_tensor(q, h)).collect();
                let values = contract_batch(&WarpBatch { tensors: vec![inv.to_vec()], points: vec![xs] })?;
                (0..points.len()).into_par_iter().map(|m| self.ground_tensor(values.point(0, m), heights[m])).collect()
            }
            None => points.par_iter().zip(heights.par_iter()).map(|(q, &h)| self.fallback_ground(q, h)).collect(),
        };
        let valid: Vec<usize> = (0..grounds.len()).filter(|&i| grounds[i].is_some()).collect();
        let x0: Vec<PointTensor> = valid.iter().map(|&i| grounds[i].unwrap()).collect();
        let values = contract_batch(&WarpBatch { tensors: vec![self.to.forward.to_vec()], points: vec![x0] })?;
        let mut out = vec![None; points.len()];
        for (slot, &i) in valid.iter().enumerate() {
            out[i] = self.image_point(values.point(0, slot));
        }
        Ok(out)
    }

    /// Analytic `(d samp_to / d hei, d line_to / d hei)` by the quotient rule
    /// along the contraction chain. Requires inverse coefficients.
    pub fn jacobian(&self, q: &ImagePoint, hei: f64) -> Result<[f64; 2]> {
        let inv = self.from.inverse.as_ref().ok_or(Error::MissingInverse)?;
        let (f, t) = (&self.from.norm, &self.to.norm);
        let xs = self.source_tensor(q, hei);
        let g: Vec<[f64; 4]> = inv.iter().map(|c| c.contract_with_gradient(&xs)).collect();
        // d(ratio)/d(hei_n) with hei_n the last slot of X_s
        let dratio = |n: &[f64; 4], d: &[f64; 4]| -> Result<(f64, f64)> {
            let r = ratio(n[0], d[0]).ok_or(Error::DegenerateProjection(d[0]))?;
            Ok((r, (n[3] - r * d[3]) / d[0]))
        };
        let (lat_n, dlat_n) = dratio(&g[0], &g[1])?;
        let (lon_n, dlon_n) = dratio(&g[2], &g[3])?;
        let dlat = f.lat_scale * dlat_n / f.hei_scale;
        let dlon = f.lon_scale * dlon_n / f.hei_scale;
        let lat = lat_n * f.lat_scale + f.lat_off;
        let lon = lon_n * f.lon_scale + f.lon_off;

        let x0 = self.ground_tensor_geodetic(lat, lon, hei, t);
        let dx0 = [0.0, dlon / t.lon_scale, dlat / t.lat_scale, 1.0 / t.hei_scale];
        let fw: Vec<[f64; 4]> = self.to.forward.iter().map(|c| c.contract_with_gradient(&x0)).collect();
        let chain = |n: &[f64; 4], d: &[f64; 4]| -> Result<f64> {
            let r = ratio(n[0], d[0]).ok_or(Error::DegenerateProjection(d[0]))?;
            Ok((1..4).map(|a| (n[a] - r * d[a]) / d[0] * dx0[a]).sum())
        };
        Ok([chain(&fw[0], &fw[1])? * t.samp_scale, chain(&fw[2], &fw[3])? * t.line_scale])
    }
}

/// Warps a point of `src` into `dst` through the plane at `hei`.
pub fn warp_point(src: &RpcModel, dst: &RpcModel, q: &ImagePoint, hei: f64) -> Result<ImagePoint> {
    src.check_height(hei)?;
    dst.check_height(hei)?;
    WarpPair::new(src, dst).warp(q, hei)
}

/// Height derivative of [`warp_point`].
pub fn jacobian_wrt_height(src: &RpcModel, dst: &RpcModel, q: &ImagePoint, hei: f64) -> Result<[f64; 2]> {
    src.check_height(hei)?;
    dst.check_height(hei)?;
    WarpPair::new(src, dst).jacobian(q, hei)
}

/// Per-pixel positions in a source raster for each pixel of a reference
/// rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordMap {
    pub width: usize,
    pub height: usize,
    /// `(samp, line)` in source pixels, row-major.
    pub coords: Vec<[f64; 2]>,
    pub mask: Vec<bool>,
}

impl CoordMap {
    /// Identity map over a `width × height` raster.
    pub fn identity(width: usize, height: usize) -> Self {
        let coords = (0..width * height).map(|i| [(i % width) as f64, (i / width) as f64]).collect();
        Self { width, height, coords, mask: vec![true; width * height] }
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Source-raster coordinates of every pixel of `ref_rect` (reference image
/// pixels) on the plane `hei`, with out-of-source pixels masked.
pub fn warp_grid(
    src: &RpcModel,
    reference: &RpcModel,
    ref_rect: PixelRect,
    hei: f64,
    src_size: (usize, usize),
) -> Result<CoordMap> {
    src.check_height(hei)?;
    reference.check_height(hei)?;
    let pair = WarpPair::new(reference, src);
    let (w, h) = (ref_rect.width, ref_rect.height);
    let points: Vec<ImagePoint> = (0..w * h)
        .map(|i| ImagePoint::new((ref_rect.x0 + (i % w) as i64) as f64, (ref_rect.y0 + (i / w) as i64) as f64))
        .collect();
    let warped = pair.warp_many(&points, &vec![hei; points.len()])?;
    Ok(coord_map_from(w, h, &warped, src_size))
}

pub(crate) fn coord_map_from(
    width: usize,
    height: usize,
    warped: &[Option<ImagePoint>],
    src_size: (usize, usize),
) -> CoordMap {
    let (sw, sh) = (src_size.0 as f64 - 1.0, src_size.1 as f64 - 1.0);
    let mut coords = Vec::with_capacity(warped.len());
    let mut mask = Vec::with_capacity(warped.len());
    for p in warped {
        match p {
            Some(p) => {
                coords.push([p.samp, p.line]);
                mask.push(p.samp >= 0.0 && p.line >= 0.0 && p.samp <= sw && p.line <= sh);
            }
            None => {
                coords.push([f64::NAN, f64::NAN]);
                mask.push(false);
            }
        }
    }
    CoordMap { width, height, coords, mask }
}

/// Bilinear gather of every channel at the map coordinates. Output pixels are
/// masked (and zero) where the map is invalid or a support pixel is missing.
pub fn resample_bilinear(img: &Raster, map: &CoordMap) -> (Raster, Vec<bool>) {
    let mut out = Raster::new(map.width, map.height, img.channels);
    let mut mask = vec![false; map.width * map.height];
    let n = map.width * map.height;
    for c in 0..img.channels {
        let dst = &mut out.data[c * n..(c + 1) * n];
        dst.par_iter_mut().zip(mask.par_iter_mut()).enumerate().for_each(|(i, (v, m))| {
            if !map.mask[i] {
                return;
            }
            let [x, y] = map.coords[i];
            if let Some(s) = img.sample_bilinear(x, y, c) {
                *v = s;
                if c == 0 {
                    *m = true;
                }
            }
        });
    }
    (out, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rpc::{fit_inverse_rpc, tests::pass_through_model, GridSpec};

    #[test]
    fn identity_resample_is_exact() {
        let img = Raster::from_fn(9, 7, |x, y| ((x * 31 + y * 17) % 13) as f32 * 0.37);
        let (out, mask) = resample_bilinear(&img, &CoordMap::identity(9, 7));
        assert_eq!(out, img);
        assert!(mask.iter().all(|m| *m));
    }

    #[test]
    fn half_pixel_shift_on_ramp() {
        let img = Raster::from_fn(10, 4, |x, _| x as f32);
        let mut map = CoordMap::identity(10, 4);
        for c in map.coords.iter_mut() {
            c[0] += 0.5;
        }
        let (out, mask) = resample_bilinear(&img, &map);
        for y in 0..4 {
            for x in 0..9 {
                assert!(mask[y * 10 + x]);
                assert!((out.get(x, y, 0) - (x as f32 + 0.5)).abs() < 1e-6);
            }
            assert!(!mask[y * 10 + 9]);
        }
    }

    #[test]
    fn beyond_last_column_is_masked() {
        let img = Raster::from_fn(4, 4, |x, _| x as f32);
        let map = CoordMap { width: 1, height: 1, coords: vec![[4.0, 1.0]], mask: vec![true] };
        let (_, mask) = resample_bilinear(&img, &map);
        assert!(!mask[0]);
    }

    #[test]
    fn identity_pair_on_pass_through_model() {
        let (m, _) = fit_inverse_rpc(&pass_through_model(), GridSpec::default()).unwrap();
        let q = ImagePoint::new(1234.5, 6789.25);
        let w = warp_point(&m, &m, &q, 100.0).unwrap();
        assert!(w.distance(&q) < 1e-6);
        let j = jacobian_wrt_height(&m, &m, &q, 100.0).unwrap();
        assert!(j[0].abs() < 1e-6 && j[1].abs() < 1e-6);
    }

    #[test]
    fn height_out_of_range() {
        let (m, _) = fit_inverse_rpc(&pass_through_model(), GridSpec::default()).unwrap();
        let q = ImagePoint::new(10.0, 10.0);
        assert!(matches!(warp_point(&m, &m, &q, 5000.0), Err(Error::HeightOutOfRange { .. })));
        assert!(matches!(jacobian_wrt_height(&m, &m, &q, -5000.0), Err(Error::HeightOutOfRange { .. })));
    }

    #[test]
    fn iterative_fallback_without_inverse() {
        let m = pass_through_model();
        let q = ImagePoint::new(321.0, 654.0);
        let w = warp_point(&m, &m, &q, 0.0).unwrap();
        assert!(w.distance(&q) < 1e-6);
        assert!(matches!(jacobian_wrt_height(&m, &m, &q, 0.0), Err(Error::MissingInverse)));
    }
}
