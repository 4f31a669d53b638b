//! Seeded terrain, texture, three-line-camera style views and ground truth.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    footprint_cube, gen_rpc_from_projector, AnalyticProjector, CameraKind, GenerationReport, GroundCube, LocalFrame,
    PushBroomCamera,
};
use crate::error::{Error, Result};
use crate::geo::dsm::{Dsm, DsmGrid};
use crate::geo::GeoRect;
use crate::raster::{write_pgm16, Raster};
use crate::rpc::{write_rpc, RpcModel};

/// Terrain intersection tolerance along the height locus, meters.
pub const INTERSECTION_TOLERANCE: f64 = 1e-4;

const SCAN_STEP: f64 = 10.0;
const TEXTURE_STD: f64 = 0.12;
const TEXTURE_SEED_SALT: u64 = 0x7E57_u64 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub center_lat: f64,
    pub center_lon: f64,
    /// Square image side, pixels.
    pub image_size: usize,
    pub gsd: f64,
    pub altitude: f64,
    pub views: Vec<ViewParams>,
    pub base_height: f64,
    /// Peak-to-trough height of the bump field, meters.
    pub relief: f64,
    pub bumps: usize,
    /// Planar slope added to the terrain, meters per meter (east, north).
    pub ramp: [f64; 2],
    /// Added above and below the terrain range to form the model height span.
    pub height_margin: f64,
    pub texture_components: usize,
    pub wavelength_range: [f64; 2],
    /// Texture seed; defaults to one derived from the scene seed.
    pub texture_seed: Option<u64>,
    /// AOI side as a fraction of the image footprint.
    pub aoi_fraction: f64,
    pub dsm_cell: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            center_lat: 36.0,
            center_lon: 114.0,
            image_size: 1024,
            gsd: 2.5,
            altitude: 505_000.0,
            views: vec![
                ViewParams { pitch_deg: 22.0, roll_deg: 0.0 },
                ViewParams { pitch_deg: 0.0, roll_deg: 0.0 },
                ViewParams { pitch_deg: -22.0, roll_deg: 0.0 },
            ],
            base_height: 100.0,
            relief: 300.0,
            bumps: 7,
            ramp: [0.0, 0.0],
            height_margin: 50.0,
            texture_components: 48,
            wavelength_range: [20.0, 600.0],
            texture_seed: None,
            aoi_fraction: 0.75,
            dsm_cell: 5.0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.image_size < 64 {
            return bad("image_size must be at least 64");
        }
        if !(self.gsd > 0.0 && self.altitude > 10_000.0 && self.dsm_cell > 0.0) {
            return bad("gsd and dsm_cell must be positive, altitude above 10 km");
        }
        if self.views.is_empty() || self.views.iter().any(|v| v.pitch_deg.abs() >= 60.0 || v.roll_deg.abs() >= 60.0) {
            return bad("views need tilts below 60 degrees");
        }
        if !(self.relief >= 0.0 && self.height_margin > 0.0) {
            return bad("relief must be non-negative and height_margin positive");
        }
        let [l0, l1] = self.wavelength_range;
        if !(l0 > 0.0 && l1 >= l0) || self.texture_components == 0 {
            return bad("texture needs components and a positive wavelength range");
        }
        if !(self.aoi_fraction > 0.0 && self.aoi_fraction <= 1.0) {
            return bad("aoi_fraction must be in (0, 1]");
        }
        Ok(())
    }

    /// Half side of the image footprint at the reference height, meters.
    pub fn half_footprint(&self) -> f64 {
        0.5 * self.image_size as f64 * self.gsd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub e: f64,
    pub n: f64,
    pub sigma: f64,
    pub amp: f64,
}

/// Height field over the local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub base: f64,
    pub ramp: [f64; 2],
    pub bumps: Vec<Bump>,
}

impl Terrain {
    pub fn flat(h: f64) -> Self {
        Self { base: h, ramp: [0.0, 0.0], bumps: Vec::new() }
    }

    /// Seeded bump field with a sampled peak-to-trough range of `relief` over
    /// `[-half_extent, half_extent]²`, lowest sample at `base`, plus a ramp.
    pub fn generate(
        rng: &mut ChaCha8Rng,
        base: f64,
        relief: f64,
        bumps: usize,
        ramp: [f64; 2],
        half_extent: f64,
    ) -> Self {
        let mut t = Self { base: 0.0, ramp: [0.0, 0.0], bumps: Vec::new() };
        if relief > 0.0 && bumps > 0 {
            for _ in 0..bumps {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                t.bumps.push(Bump {
                    e: rng.gen_range(-0.8..0.8) * half_extent,
                    n: rng.gen_range(-0.8..0.8) * half_extent,
                    sigma: rng.gen_range(0.25..0.45) * half_extent,
                    amp: sign * rng.gen_range(0.3..1.0),
                });
            }
            let (lo, hi) = t.sampled_range(half_extent, 129);
            let s = relief / (hi - lo);
            for b in &mut t.bumps {
                b.amp *= s;
            }
            t.base = -lo * s;
        }
        t.base += base;
        t.ramp = ramp;
        t
    }

    #[inline]
    pub fn height_local(&self, e: f64, n: f64) -> f64 {
        let mut h = self.base + self.ramp[0] * e + self.ramp[1] * n;
        for b in &self.bumps {
            let d2 = (e - b.e) * (e - b.e) + (n - b.n) * (n - b.n);
            h += b.amp * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
        }
        h
    }

    /// Min and max over an `n × n` sample grid of the square.
    pub fn sampled_range(&self, half_extent: f64, n: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                let e = -half_extent + 2.0 * half_extent * i as f64 / (n - 1) as f64;
                let nn = -half_extent + 2.0 * half_extent * j as f64 / (n - 1) as f64;
                let h = self.height_local(e, nn);
                lo = lo.min(h);
                hi = hi.max(h);
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub k: [f64; 2],
    pub phase: f64,
    pub amp: f64,
}

/// Band-limited sum of plane waves over the local frame, clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub waves: Vec<Wave>,
}

impl Texture {
    pub fn generate(rng: &mut ChaCha8Rng, components: usize, wavelengths: [f64; 2]) -> Self {
        let (l0, l1) = (wavelengths[0].ln(), wavelengths[1].ln());
        let mut waves: Vec<Wave> = (0..components)
            .map(|_| {
                let lambda = if l1 > l0 { rng.gen_range(l0..l1).exp() } else { wavelengths[0] };
                let dir = rng.gen_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / lambda;
                Wave {
                    k: [k * dir.cos(), k * dir.sin()],
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    amp: lambda.sqrt(),
                }
            })
            .collect();
        let power: f64 = waves.iter().map(|w| 0.5 * w.amp * w.amp).sum();
        let s = TEXTURE_STD / power.sqrt();
        for w in &mut waves {
            w.amp *= s;
        }
        Self { waves }
    }

    #[inline]
    pub fn value(&self, e: f64, n: f64) -> f64 {
        let mut v = 0.5;
        for w in &self.waves {
            v += w.amp * (w.k[0] * e + w.k[1] * n + w.phase).sin();
        }
        v.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneView {
    pub params: ViewParams,
    pub projector: AnalyticProjector,
    pub rpc: RpcModel,
    pub report: GenerationReport,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub seed: u64,
    pub params: SceneParams,
    pub frame: LocalFrame,
    pub terrain: Terrain,
    pub texture: Texture,
    /// Union of the views' validity cubes.
    pub cube: GroundCube,
    pub aoi: GeoRect,
    pub views: Vec<SceneView>,
    pub gt_dsm: Dsm,
}

impl SyntheticScene {
    pub fn height_at(&self, lat: f64, lon: f64) -> Result<f64> {
        let (e, n) = self.frame.to_local(lat, lon)?;
        Ok(self.terrain.height_local(e, n))
    }

    pub fn rpcs(&self) -> Vec<RpcModel> {
        self.views.iter().map(|v| v.rpc.clone()).collect()
    }
}

/// Builds a scene: terrain and texture from the seeds, one push-broom view per
/// entry of `params.views`, their fitted RPCs, and the ground-truth DSM over
/// the AOI. Images are produced separately by [`render_views`].
pub fn gen_scene(seed: u64, params: &SceneParams) -> Result<SyntheticScene> {
    params.validate()?;
    let frame = LocalFrame::centered_at(params.center_lat, params.center_lon)?;
    let half = params.half_footprint();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terrain = Terrain::generate(&mut rng, params.base_height, params.relief, params.bumps, params.ramp, 1.1 * half);
    let mut trng = ChaCha8Rng::seed_from_u64(params.texture_seed.unwrap_or(seed ^ TEXTURE_SEED_SALT));
    let texture = Texture::generate(&mut trng, params.texture_components, params.wavelength_range);

    let (t_lo, t_hi) = terrain.sampled_range(1.3 * half, 257);
    let hei = [(t_lo - params.height_margin).floor(), (t_hi + params.height_margin).ceil()];
    let ref_height = 0.5 * (hei[0] + hei[1]);
    let c = 0.5 * (params.image_size as f64 - 1.0);

    let mut views = Vec::with_capacity(params.views.len());
    for v in &params.views {
        let projector = AnalyticProjector {
            frame,
            camera: CameraKind::PushBroom(PushBroomCamera {
                gsd: params.gsd,
                altitude: params.altitude,
                pitch: v.pitch_deg.to_radians(),
                roll: v.roll_deg.to_radians(),
                ref_height,
                center_samp: c,
                center_line: c,
            }),
            width: params.image_size,
            height: params.image_size,
        };
        let cube = footprint_cube(&projector, hei)?;
        let (rpc, report) = gen_rpc_from_projector(&projector, &cube)?;
        views.push(SceneView { params: *v, projector, rpc, report });
    }
    let mut cube = footprint_cube(&views[0].projector, hei)?;
    for v in &views[1..] {
        let c = footprint_cube(&v.projector, hei)?;
        cube.lat = [cube.lat[0].min(c.lat[0]), cube.lat[1].max(c.lat[1])];
        cube.lon = [cube.lon[0].min(c.lon[0]), cube.lon[1].max(c.lon[1])];
    }

    let a = params.aoi_fraction * half;
    let (lat_s, _) = frame.to_geodetic(0.0, -a)?;
    let (lat_n, _) = frame.to_geodetic(0.0, a)?;
    let (_, lon_w) = frame.to_geodetic(-a, 0.0)?;
    let (_, lon_e) = frame.to_geodetic(a, 0.0)?;
    let aoi = GeoRect::new(lat_s, lat_n, lon_w, lon_e);

    let gt_dsm = rasterize_truth(&frame, &terrain, &aoi, params.dsm_cell)?;
    Ok(SyntheticScene { seed, params: params.clone(), frame, terrain, texture, cube, aoi, views, gt_dsm })
}

/// Terrain sampled at the centers of a UTM grid covering the AOI; cells whose
/// centers fall outside the AOI are nodata.
fn rasterize_truth(frame: &LocalFrame, terrain: &Terrain, aoi: &GeoRect, cell: f64) -> Result<Dsm> {
    let grid = DsmGrid::covering_rect(aoi, frame.zone, cell)?;
    let mut dsm = Dsm::nodata(grid);
    let cols = grid.cols;
    dsm.values.par_chunks_mut(cols).enumerate().try_for_each(|(r, row)| -> Result<()> {
        for (c, v) in row.iter_mut().enumerate() {
            let (ue, un) = grid.cell_center(r, c);
            let (lat, lon) = crate::geo::utm::utm_to_geodetic(ue, un, grid.zone)?;
            if aoi.contains(lat, lon) {
                *v = terrain.height_local(ue - frame.origin_e, un - frame.origin_n);
            }
        }
        Ok(())
    })?;
    Ok(dsm)
}

/// A rendered view: intensities and the true surface height per pixel
/// (NaN where the pixel's locus misses the terrain inside the height span).
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: Raster,
    pub heights: Vec<f64>,
}

impl RenderedView {
    pub fn valid(&self, x: usize, y: usize) -> bool {
        self.heights[y * self.image.width + x].is_finite()
    }

    pub fn height(&self, x: usize, y: usize) -> Option<f64> {
        let h = self.heights[y * self.image.width + x];
        h.is_finite().then_some(h)
    }
}

/// Highest height in `[lo, hi]` where the pixel's locus meets the terrain.
fn intersect(proj: &AnalyticProjector, terrain: &Terrain, samp: f64, line: f64, lo: f64, hi: f64) -> Option<f64> {
    let f = |h: f64| {
        let (e, n) = proj.unproject_local(samp, line, h);
        h - terrain.height_local(e, n)
    };
    let mut upper = hi;
    let mut fu = f(upper);
    if fu < 0.0 {
        return None;
    }
    if fu == 0.0 {
        return Some(upper);
    }
    loop {
        let lower = (upper - SCAN_STEP).max(lo);
        let fl = f(lower);
        if fl <= 0.0 {
            let (mut a, mut b) = (lower, upper);
            if fl == 0.0 {
                return Some(lower);
            }
            while b - a > INTERSECTION_TOLERANCE {
                let m = 0.5 * (a + b);
                if f(m) > 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        if lower <= lo {
            return None;
        }
        upper = lower;
        fu = fl;
        debug_assert!(fu > 0.0);
    }
}

pub fn render_view(scene: &SyntheticScene, index: usize) -> Result<RenderedView> {
    let view = scene.views.get(index).ok_or_else(|| Error::InvalidArgument(format!("view {index} out of range")))?;
    let proj = &view.projector;
    let (w, h) = (proj.width, proj.height);
    let [lo, hi] = scene.cube.hei;
    let mut intensity = vec![0.0f32; w * h];
    let mut heights = vec![f64::NAN; w * h];
    intensity.par_chunks_mut(w).zip(heights.par_chunks_mut(w)).enumerate().for_each(|(y, (irow, hrow))| {
        for x in 0..w {
            if let Some(z) = intersect(proj, &scene.terrain, x as f64, y as f64, lo, hi) {
                let (e, n) = proj.unproject_local(x as f64, y as f64, z);
                irow[x] = scene.texture.value(e, n) as f32;
                hrow[x] = z;
            }
        }
    });
    Ok(RenderedView { image: Raster::from_vec(w, h, 1, intensity)?, heights })
}

pub fn render_views(scene: &SyntheticScene) -> Result<Vec<RenderedView>> {
    (0..scene.views.len()).map(|i| render_view(scene, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestView {
    pub image: String,
    pub rpc: String,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

/// Contents of `manifest.json` in a scene bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub seed: u64,
    pub params: SceneParams,
    pub aoi: GeoRect,
    pub height_range: [f64; 2],
    pub views: Vec<ManifestView>,
    pub gt_dsm: String,
}

/// Writes `view_<i>.pgm`, `view_<i>.rpc`, `gt_dsm.asc` (+ `.json`) and
/// `manifest.json` into `dir`.
pub fn write_bundle(scene: &SyntheticScene, renders: &[RenderedView], dir: impl AsRef<Path>) -> Result<SceneManifest> {
    let dir = dir.as_ref();
    if renders.len() != scene.views.len() {
        return Err(Error::ShapeMismatch(format!("{} renders for {} views", renders.len(), scene.views.len())));
    }
    fs::create_dir_all(dir)?;
    let mut views = Vec::with_capacity(renders.len());
    for (i, (v, r)) in scene.views.iter().zip(renders).enumerate() {
        let image = format!("view_{i}.pgm");
        let rpc = format!("view_{i}.rpc");
        write_pgm16(dir.join(&image), &r.image)?;
        fs::write(dir.join(&rpc), write_rpc(&v.rpc))?;
        views.push(ManifestView { image, rpc, pitch_deg: v.params.pitch_deg, roll_deg: v.params.roll_deg });
    }
    scene.gt_dsm.write(dir.join("gt_dsm.asc"))?;
    let manifest = SceneManifest {
        seed: scene.seed,
        params: scene.params.clone(),
        aoi: scene.aoi,
        height_range: scene.cube.hei,
        views,
        gt_dsm: "gt_dsm.asc".into(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<SceneManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.as_ref().join("manifest.json"))?)?)
}
