use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rpc::{ImagePoint, RpcModel};
use crate::warp::{coord_map_from, resample_bilinear, WarpPair};

use super::HeightMap;

/// Cost carried by cells with fewer than the minimum number of views.
pub const INVALID_COST: f32 = f32::MAX;

/// Hypothesis heights of a cost volume.
#[derive(Debug, Clone, PartialEq)]
pub enum PlaneHeights {
    /// One height per plane, shared by all pixels.
    Shared(Vec<f64>),
    /// Plane-major per-pixel heights, `heights[d * w * h + y * w + x]`.
    PerPixel(Vec<f64>),
}

/// Matching costs of a `width × height` reference tile against `planes`
/// height hypotheses, stored plane-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub width: usize,
    pub height: usize,
    pub planes: usize,
    pub values: Vec<f32>,
    pub heights: PlaneHeights,
    /// Contributing views per cell, the reference included.
    pub valid_views: Vec<u8>,
    pub min_valid_views: usize,
}

impl CostVolume {
    #[inline]
    pub fn index(&self, x: usize, y: usize, d: usize) -> usize {
        (d * self.height + y) * self.width + x
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize, d: usize) -> f32 {
        self.values[self.index(x, y, d)]
    }

    #[inline]
    pub fn plane_height(&self, x: usize, y: usize, d: usize) -> f64 {
        match &self.heights {
            PlaneHeights::Shared(h) => h[d],
            PlaneHeights::PerPixel(h) => h[self.index(x, y, d)],
        }
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.valid_views[i] as usize >= self.min_valid_views
    }

    pub fn valid_cells(&self) -> usize {
        (0..self.values.len()).filter(|&i| self.is_valid(i)).count()
    }

    fn plane_len(&self) -> usize {
        self.width * self.height
    }
}

/// Builds the variance cost volume. `rpcs[0]` describes the reference tile
/// and `rpcs[1..]` the source tiles, each at the resolution of its features.
pub fn sweep_stage(
    ref_feats: &Raster,
    src_feats: &[Raster],
    rpcs: &[RpcModel],
    heights: PlaneHeights,
    min_valid_views: usize,
) -> Result<CostVolume> {
    if src_feats.is_empty() {
        return Err(Error::InvalidArgument("plane sweep needs at least one source view".into()));
    }
    if rpcs.len() != src_feats.len() + 1 {
        return Err(Error::ShapeMismatch(format!("{} models for {} views", rpcs.len(), src_feats.len() + 1)));
    }
    if src_feats.iter().any(|s| s.channels != ref_feats.channels) {
        return Err(Error::ShapeMismatch("feature channel counts differ".into()));
    }
    if src_feats.len() + 1 > u8::MAX as usize {
        return Err(Error::InvalidArgument("too many views".into()));
    }
    let (w, h) = (ref_feats.width, ref_feats.height);
    let n = w * h;
    let planes = match &heights {
        PlaneHeights::Shared(v) => v.len(),
        PlaneHeights::PerPixel(v) => {
            if n == 0 || v.len() % n != 0 {
                return Err(Error::ShapeMismatch("per-pixel plane heights".into()));
            }
            v.len() / n
        }
    };
    let all_heights: &[f64] = match &heights {
        PlaneHeights::Shared(v) | PlaneHeights::PerPixel(v) => v,
    };
    if planes == 0 || all_heights.iter().any(|h| !h.is_finite()) {
        return Err(Error::InvalidArgument("plane heights must be finite and non-empty".into()));
    }

    let pairs: Vec<WarpPair> = rpcs[1..].iter().map(|m| WarpPair::new(&rpcs[0], m)).collect();
    let points: Vec<ImagePoint> = (0..n).map(|i| ImagePoint::new((i % w) as f64, (i / w) as f64)).collect();
    let channels = ref_feats.channels;
    let mut values = vec![INVALID_COST; planes * n];
    let mut valid_views = vec![0u8; planes * n];
    let mut plane_h = vec![0.0; n];

    for d in 0..planes {
        match &heights {
            PlaneHeights::Shared(v) => plane_h.fill(v[d]),
            PlaneHeights::PerPixel(v) => plane_h.copy_from_slice(&v[d * n..(d + 1) * n]),
        }
        let mut warped = Vec::with_capacity(src_feats.len());
        for (pair, src) in pairs.iter().zip(src_feats) {
            let q = pair.warp_many(&points, &plane_h)?;
            let map = coord_map_from(w, h, &q, (src.width, src.height));
            warped.push(resample_bilinear(src, &map));
        }
        let out = &mut values[d * n..(d + 1) * n];
        let cnt = &mut valid_views[d * n..(d + 1) * n];
        out.par_iter_mut().zip(cnt.par_iter_mut()).enumerate().for_each(|(i, (v, c))| {
            let mut samples = [0.0f32; u8::MAX as usize];
            let views = 1 + warped.iter().filter(|(_, m)| m[i]).count();
            *c = views as u8;
            if views < min_valid_views {
                return;
            }
            let mut total = 0.0f64;
            for ch in 0..channels {
                let off = ch * n + i;
                samples[0] = ref_feats.data[off];
                let mut k = 1;
                for (img, m) in &warped {
                    if m[i] {
                        samples[k] = img.data[off];
                        k += 1;
                    }
                }
                total += variance(&mut samples[..k]);
            }
            *v = (total / channels as f64) as f32;
        });
    }
    if !valid_views.iter().any(|&c| c as usize >= min_valid_views.max(2)) {
        return Err(Error::EmptyVolume);
    }
    Ok(CostVolume { width: w, height: h, planes, values, heights, valid_views, min_valid_views })
}

/// Population variance, independent of sample order.
#[inline]
fn variance(s: &mut [f32]) -> f64 {
    s.sort_unstable_by(f32::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().map(|&v| v as f64).sum::<f64>() / n;
    s.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n
}

/// Per-plane box filter of half-width `radius` averaging the costs of the
/// valid cells in each window. Invalid cells stay invalid.
pub fn aggregate_cost(vol: &CostVolume, radius: usize) -> CostVolume {
    if radius == 0 {
        return vol.clone();
    }
    let (w, h) = (vol.width, vol.height);
    let n = vol.plane_len();
    let mut out = vol.clone();
    out.values.par_chunks_mut(n).enumerate().for_each(|(d, plane)| {
        let base = d * n;
        let valid = |i: usize| vol.is_valid(base + i);
        // horizontal pass: windowed sums of cost and valid count
        let mut hs = vec![0.0f64; n];
        let mut hc = vec![0u32; n];
        for y in 0..h {
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(w - 1));
                let (mut s, mut c) = (0.0, 0);
                for xx in x0..=x1 {
                    let i = y * w + xx;
                    if valid(i) {
                        s += vol.values[base + i] as f64;
                        c += 1;
                    }
                }
                hs[y * w + x] = s;
                hc[y * w + x] = c;
            }
        }
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(h - 1));
            for x in 0..w {
                let i = y * w + x;
                if !valid(i) {
                    continue;
                }
                let (mut s, mut c) = (0.0, 0);
                for yy in y0..=y1 {
                    s += hs[yy * w + x];
                    c += hc[yy * w + x];
                }
                plane[i] = (s / c as f64) as f32;
            }
        }
    });
    out
}

/// Per-pixel z-scores of the valid costs, so that softmax temperatures are
/// comparable across pixels and stages. Pixels whose valid costs are all
/// equal get zeros.
pub fn standardize_costs(vol: &CostVolume) -> CostVolume {
    let n = vol.plane_len();
    let mut out = vol.clone();
    let cols: Vec<Vec<(usize, f32)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let idx: Vec<usize> = (0..vol.planes).map(|d| d * n + i).filter(|&j| vol.is_valid(j)).collect();
            if idx.is_empty() {
                return Vec::new();
            }
            let m = idx.len() as f64;
            let mean = idx.iter().map(|&j| vol.values[j] as f64).sum::<f64>() / m;
            let sd = (idx.iter().map(|&j| (vol.values[j] as f64 - mean).powi(2)).sum::<f64>() / m).sqrt();
            idx.iter().map(|&j| (j, if sd > 0.0 { ((vol.values[j] as f64 - mean) / sd) as f32 } else { 0.0 })).collect()
        })
        .collect();
    for (j, v) in cols.into_iter().flatten() {
        out.values[j] = v;
    }
    out
}

/// Expected plane height under `softmax(-cost / temperature)` over the valid
/// planes of each pixel. Pixels without a valid plane are invalid.
pub fn soft_argmin(vol: &CostVolume, temperature: f64) -> Result<HeightMap> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    let n = vol.plane_len();
    let res: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % vol.width, i / vol.width);
            let mut cmin = f64::INFINITY;
            for d in 0..vol.planes {
                let j = d * n + i;
                if vol.is_valid(j) {
                    cmin = cmin.min(vol.values[j] as f64);
                }
            }
            if !cmin.is_finite() {
                return None;
            }
            let (mut sw, mut sh) = (0.0, 0.0);
            for d in 0..vol.planes {
                let j = d * n + i;
                if vol.is_valid(j) {
                    let wgt = (-(vol.values[j] as f64 - cmin) / temperature).exp();
                    sw += wgt;
                    sh += wgt * vol.plane_height(x, y, d);
                }
            }
            Some(sh / sw)
        })
        .collect();
    let valid: Vec<bool> = res.iter().map(Option::is_some).collect();
    let heights = res.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    Ok(HeightMap { width: vol.width, height: vol.height, heights, valid, scale: 1 })
}
