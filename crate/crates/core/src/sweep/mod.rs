//! Coarse-to-fine plane-sweep height estimation on RPC imagery.
//!
//! Each stage warps source feature maps onto horizontal height planes of
//! the reference view, scores the planes by the cross-view variance of the
//! features, smooths the costs with a box filter and regresses a height by
//! soft argmin. Later stages sweep a narrow band of planes around the
//! upsampled height map of the previous stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{read_pfm, write_pfm, Raster};
use crate::rpc::RpcModel;

mod features;
mod schedule;
mod volume;

pub use features::{extract_features, FEATURE_CHANNELS};
pub use schedule::{build_schedule, Centering, HeightPlaneSchedule, StageSchedule};
pub use volume::{aggregate_cost, soft_argmin, standardize_costs, sweep_stage, CostVolume, PlaneHeights, INVALID_COST};

/// Plane spacing of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interval {
    /// `(d_max - d_min) / planes`.
    Span,
    Meters(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// Image downsampling factor.
    pub factor: usize,
    pub planes: usize,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Views per sweep, reference included.
    pub view_count: usize,
    pub stages: Vec<StageConfig>,
    pub aggregation_radius: usize,
    /// Softmax temperature over per-pixel z-scored costs.
    pub temperature: f64,
    pub min_valid_views: usize,
    /// Invalidate pixels whose hypothesis set is only partly observed by the
    /// sources (typically at tile borders), instead of regressing over the
    /// observed subset.
    pub require_full_coverage: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            view_count: 3,
            stages: vec![
                StageConfig { factor: 16, planes: 64, interval: Interval::Span },
                StageConfig { factor: 4, planes: 32, interval: Interval::Meters(5.0) },
                StageConfig { factor: 1, planes: 8, interval: Interval::Meters(2.5) },
            ],
            aggregation_radius: 2,
            temperature: 0.25,
            min_valid_views: 2,
            require_full_coverage: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.view_count < 2 {
            return bad("view_count must be at least 2");
        }
        if self.stages.is_empty() {
            return bad("at least one stage is required");
        }
        if self.stages.iter().any(|s| s.planes < 2 || s.factor == 0) {
            return bad("every stage needs >= 2 planes and a positive factor");
        }
        if self.stages.iter().any(|s| matches!(s.interval, Interval::Meters(m) if !(m > 0.0))) {
            return bad("plane intervals must be positive");
        }
        if self.stages.windows(2).any(|w| w[1].factor > w[0].factor || w[0].factor % w[1].factor != 0) {
            return bad("stage factors must decrease by integer ratios");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if self.min_valid_views < 2 {
            return bad("min_valid_views must be at least 2");
        }
        Ok(())
    }

    pub fn factors(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.factor).collect()
    }
}

/// Per-pixel heights of a reference tile at downsampling factor `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub width: usize,
    pub height: usize,
    /// Meters, row-major; NaN where invalid.
    pub heights: Vec<f64>,
    pub valid: Vec<bool>,
    pub scale: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightMapInfo {
    pub width: usize,
    pub height: usize,
    pub scale: usize,
    pub valid_count: usize,
    pub valid_fraction: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub schedule: Option<HeightPlaneSchedule>,
}

impl HeightMap {
    pub fn new(width: usize, height: usize, heights: Vec<f64>, scale: usize) -> Result<Self> {
        if heights.len() != width * height {
            return Err(Error::ShapeMismatch(format!("{} heights for {width}x{height}", heights.len())));
        }
        let valid = heights.iter().map(|h| h.is_finite()).collect();
        let heights = heights.into_iter().map(|h| if h.is_finite() { h } else { f64::NAN }).collect();
        Ok(Self { width, height, heights, valid, scale })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.heights[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Bilinear height at `(x, y)` when all support pixels are valid,
    /// else the nearest pixel's height when that one is valid.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(x > -0.5 && y > -0.5 && x < w - 0.5 && y < h - 0.5) {
            return None;
        }
        let (x0, y0) = (x.floor().clamp(0.0, w - 1.0), y.floor().clamp(0.0, h - 1.0));
        let (fx, fy) = ((x - x0).clamp(0.0, 1.0), (y - y0).clamp(0.0, 1.0));
        let x1 = if fx > 0.0 { (x0 + 1.0).min(w - 1.0) } else { x0 };
        let y1 = if fy > 0.0 { (y0 + 1.0).min(h - 1.0) } else { y0 };
        let g = |a: f64, b: f64| self.get(a as usize, b as usize);
        if let (Some(a), Some(b), Some(c), Some(d)) = (g(x0, y0), g(x1, y0), g(x0, y1), g(x1, y1)) {
            let top = a + (b - a) * fx;
            let bot = c + (d - c) * fx;
            return Some(top + (bot - top) * fy);
        }
        g(x.round().clamp(0.0, w - 1.0), y.round().clamp(0.0, h - 1.0))
    }

    pub fn info(&self, schedule: Option<&HeightPlaneSchedule>) -> HeightMapInfo {
        let valid: Vec<f64> = self.heights.iter().zip(&self.valid).filter(|(_, v)| **v).map(|(h, _)| *h).collect();
        let total = self.width * self.height;
        HeightMapInfo {
            width: self.width,
            height: self.height,
            scale: self.scale,
            valid_count: valid.len(),
            valid_fraction: if total == 0 { 0.0 } else { valid.len() as f64 / total as f64 },
            min: valid.iter().copied().reduce(f64::min),
            max: valid.iter().copied().reduce(f64::max),
            schedule: schedule.cloned(),
        }
    }

    /// Writes a PFM (NaN for invalid pixels) and a `.json` sidecar.
    pub fn write(&self, path: impl AsRef<Path>, schedule: Option<&HeightPlaneSchedule>) -> Result<()> {
        let path = path.as_ref();
        let values: Vec<f32> =
            self.heights.iter().zip(&self.valid).map(|(h, v)| if *v { *h as f32 } else { f32::NAN }).collect();
        write_pfm(path, self.width, self.height, &values)?;
        let json = serde_json::to_string_pretty(&self.info(schedule)).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path.with_extension("json"), json)?;
        Ok(())
    }

    /// Reads a PFM height map; the scale comes from the sidecar when present.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (w, h, values) = read_pfm(path)?;
        let scale = match std::fs::read_to_string(path.with_extension("json")) {
            Ok(s) => serde_json::from_str::<HeightMapInfo>(&s).map_err(|e| Error::Format(e.to_string()))?.scale,
            Err(_) => 1,
        };
        Self::new(w, h, values.into_iter().map(f64::from).collect(), scale)
    }
}

/// Replaces invalid heights by the mean of valid 4-neighbours, growing
/// inwards until the map is full. An empty map is filled with `fallback`.
pub fn fill_invalid(map: &HeightMap, fallback: f64) -> Vec<f64> {
    let (w, h) = (map.width, map.height);
    let mut vals = map.heights.clone();
    let mut known = map.valid.clone();
    if !known.iter().any(|k| *k) {
        return vec![fallback; w * h];
    }
    loop {
        let mut updates = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if known[i] {
                    continue;
                }
                let mut acc = (0.0, 0);
                let mut take = |j: usize| {
                    if known[j] {
                        acc = (acc.0 + vals[j], acc.1 + 1);
                    }
                };
                if x > 0 {
                    take(i - 1);
                }
                if x + 1 < w {
                    take(i + 1);
                }
                if y > 0 {
                    take(i - w);
                }
                if y + 1 < h {
                    take(i + w);
                }
                if acc.1 > 0 {
                    updates.push((i, acc.0 / acc.1 as f64));
                }
            }
        }
        if updates.is_empty() {
            return vals;
        }
        for (i, v) in updates {
            vals[i] = v;
            known[i] = true;
        }
    }
}

/// Bilinear upsampling of a `w × h` grid by an integer `ratio` onto an
/// `out_w × out_h` grid, with area-aligned pixel centers.
pub fn upsample_bilinear(vals: &[f64], w: usize, h: usize, ratio: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let r = ratio as f64;
    let coord = |x: usize, n: usize| -> (usize, usize, f64) {
        let u = ((x as f64 + 0.5) / r - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = u.floor() as usize;
        (i0, (i0 + 1).min(n - 1), u - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, h);
        for x in 0..out_w {
            let (x0, x1, fx) = coord(x, w);
            let top = vals[y0 * w + x0] + (vals[y0 * w + x1] - vals[y0 * w + x0]) * fx;
            let bot = vals[y1 * w + x0] + (vals[y1 * w + x1] - vals[y1 * w + x0]) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    out
}

/// Output of one sweep stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub map: HeightMap,
    pub planes: usize,
    pub interval: f64,
}

/// Runs every configured stage and returns the per-stage height maps, the
/// last at the finest scale. `rpcs[0]` belongs to `ref_img`, the rest to
/// `src_imgs` in order; all are for the full-resolution images.
pub fn run_multistage_stages(
    ref_img: &Raster,
    src_imgs: &[Raster],
    rpcs: &[RpcModel],
    range: [f64; 2],
    cfg: &SweepConfig,
) -> Result<(HeightPlaneSchedule, Vec<StageResult>)> {
    let schedule = build_schedule(range[0], range[1], cfg)?;
    if rpcs.len() != src_imgs.len() + 1 {
        return Err(Error::ShapeMismatch(format!("{} models for {} views", rpcs.len(), src_imgs.len() + 1)));
    }
    let factors = cfg.factors();
    let ref_pyr = extract_features(ref_img, &factors);
    let src_pyr: Vec<Vec<Raster>> = src_imgs.iter().map(|s| extract_features(s, &factors)).collect();
    let mut results: Vec<StageResult> = Vec::with_capacity(factors.len());
    for (s, st) in schedule.stages.iter().enumerate() {
        let f = st.factor;
        let rf = &ref_pyr[s];
        let srcs: Vec<Raster> = src_pyr.iter().map(|p| p[s].clone()).collect();
        let models: Vec<RpcModel> =
            rpcs.iter().map(|m| if f == 1 { m.clone() } else { m.downscaled(f as f64) }).collect();
        let heights = match results.last() {
            None => PlaneHeights::Shared(schedule.global_planes(s)),
            Some(prev) => {
                let mid = 0.5 * (schedule.d_min + schedule.d_max);
                let filled = fill_invalid(&prev.map, mid);
                let ratio = prev.map.scale / f;
                let centers = upsample_bilinear(&filled, prev.map.width, prev.map.height, ratio, rf.width, rf.height);
                let n = rf.width * rf.height;
                let mut hs = vec![0.0; st.plane_count * n];
                let mut buf = vec![0.0; st.plane_count];
                for (i, c) in centers.iter().enumerate() {
                    schedule.fill_planes_around(s, *c, &mut buf);
                    for (d, v) in buf.iter().enumerate() {
                        hs[d * n + i] = *v;
                    }
                }
                PlaneHeights::PerPixel(hs)
            }
        };
        let vol = sweep_stage(rf, &srcs, &models, heights, cfg.min_valid_views)?;
        let mut map = estimate_heights(&vol, cfg)?;
        map.scale = f;
        results.push(StageResult { map, planes: st.plane_count, interval: st.interval });
    }
    Ok((schedule, results))
}

/// Aggregation, per-pixel cost standardization and soft argmin.
pub fn estimate_heights(vol: &CostVolume, cfg: &SweepConfig) -> Result<HeightMap> {
    let agg = aggregate_cost(vol, cfg.aggregation_radius);
    let mut map = soft_argmin(&standardize_costs(&agg), cfg.temperature)?;
    if cfg.require_full_coverage {
        let n = vol.width * vol.height;
        for i in 0..n {
            if map.valid[i] && (0..vol.planes).any(|d| !vol.is_valid(d * n + i)) {
                map.valid[i] = false;
                map.heights[i] = f64::NAN;
            }
        }
    }
    Ok(map)
}

/// Full-resolution height map of the reference view.
pub fn run_multistage(
    ref_img: &Raster,
    src_imgs: &[Raster],
    rpcs: &[RpcModel],
    range: [f64; 2],
    cfg: &SweepConfig,
) -> Result<HeightMap> {
    let (_, mut stages) = run_multistage_stages(ref_img, src_imgs, rpcs, range, cfg)?;
    Ok(stages.pop().expect("at least one stage").map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let c = SweepConfig::default();
        c.validate().unwrap();
        assert_eq!(c.factors(), vec![16, 4, 1]);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<SweepConfig>(&json).unwrap(), c);
        let partial: SweepConfig = serde_json::from_str(r#"{"temperature": 0.5}"#).unwrap();
        assert_eq!(partial.stages, c.stages);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = SweepConfig { view_count: 1, ..Default::default() };
        assert!(c.validate().is_err());
        c = SweepConfig::default();
        c.stages[1].factor = 3;
        assert!(c.validate().is_err());
        c = SweepConfig::default();
        c.stages[2].planes = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn fill_grows_from_valid_pixels() {
        let m = HeightMap::new(3, 1, vec![f64::NAN, 4.0, f64::NAN], 1).unwrap();
        assert_eq!(fill_invalid(&m, 0.0), vec![4.0, 4.0, 4.0]);
        let empty = HeightMap::new(2, 1, vec![f64::NAN; 2], 1).unwrap();
        assert_eq!(fill_invalid(&empty, 7.0), vec![7.0; 2]);
    }

    #[test]
    fn upsampling_reproduces_linear_fields() {
        let (w, h) = (6, 5);
        let f = |x: f64, y: f64| 3.0 + 0.5 * x - 2.0 * y;
        let coarse: Vec<f64> = (0..w * h).map(|i| f((i % w) as f64, (i / w) as f64)).collect();
        let fine = upsample_bilinear(&coarse, w, h, 4, 4 * w, 4 * h);
        for y in 2..4 * h - 2 {
            for x in 2..4 * w - 2 {
                let (u, v) = ((x as f64 + 0.5) / 4.0 - 0.5, (y as f64 + 0.5) / 4.0 - 0.5);
                assert!((fine[y * 4 * w + x] - f(u, v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn downsample_then_upsample_keeps_smooth_shading() {
        let (w, h) = (256, 192);
        let shade = |x: f64, y: f64| {
            let (u, v) = (x / 60.0, y / 45.0);
            0.5 + 0.3 * (u.sin() * v.cos()) + 0.1 * (0.7 * u + 0.4 * v).cos()
        };
        let img = Raster::from_fn(w, h, |x, y| shade(x as f64, y as f64) as f32);
        let small = img.downsample(4);
        let vals: Vec<f64> = small.data.iter().map(|&v| v as f64).collect();
        let up = upsample_bilinear(&vals, small.width, small.height, 4, w, h);
        let up = Raster::from_vec(w, h, 1, up.iter().map(|&v| v as f32).collect()).unwrap();
        assert!(img.correlation(&up) > 0.99, "{}", img.correlation(&up));
    }

    #[test]
    fn height_map_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.pfm");
        let m = HeightMap::new(3, 2, vec![1.5, f64::NAN, 2.0, 3.0, 4.0, -5.0], 4).unwrap();
        let s = build_schedule(0.0, 100.0, &SweepConfig::default()).unwrap();
        m.write(&p, Some(&s)).unwrap();
        let back = HeightMap::read(&p).unwrap();
        assert_eq!(back.valid, m.valid);
        assert_eq!(back.scale, 4);
        assert_eq!(back.get(0, 0), Some(1.5));
        assert_eq!(back.get(2, 1), Some(-5.0));
        let info: HeightMapInfo =
            serde_json::from_str(&std::fs::read_to_string(p.with_extension("json")).unwrap()).unwrap();
        assert_eq!(info.valid_count, 5);
        assert_eq!(info.schedule.unwrap(), s);
    }

    #[test]
    fn sample_prefers_bilinear_then_nearest() {
        let m = HeightMap::new(2, 2, vec![0.0, 2.0, 4.0, f64::NAN], 1).unwrap();
        assert_eq!(m.sample(0.5, 0.0), Some(1.0));
        assert_eq!(m.sample(0.2, 0.2), Some(0.0));
        assert_eq!(m.sample(0.9, 0.9), None);
        assert_eq!(m.sample(-0.6, 0.0), None);
    }
}
