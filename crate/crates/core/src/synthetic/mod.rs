//! Ground-truth-complete synthetic scenes and RPC models fitted to analytic
//! projectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rpc::{
    fit_inverse_rpc, fit_rational, inverse_reprojection_error, GridSpec, GroundPoint, ImagePoint, InverseFitReport,
    Normalization, RpcModel,
};

pub mod projector;
pub mod scene;

pub use projector::{AnalyticProjector, CameraKind, LocalFrame, PinholeCamera, PushBroomCamera};
pub use scene::{
    gen_scene, read_manifest, render_view, render_views, write_bundle, RenderedView, SceneManifest, SceneParams,
    SyntheticScene, Terrain, Texture, ViewParams,
};

/// Largest forward residual accepted when fitting an RPC to a projector.
pub const MAX_GENERATION_RESIDUAL: f64 = 0.02;

/// Forward fit grid size.
pub const GENERATION_GRID: GridSpec = GridSpec::new(15, 15, 11);

/// Geodetic bounds of a model's validity volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundCube {
    pub lat: [f64; 2],
    pub lon: [f64; 2],
    pub hei: [f64; 2],
}

impl GroundCube {
    pub fn center(&self) -> GroundPoint {
        GroundPoint::new(
            0.5 * (self.lat[0] + self.lat[1]),
            0.5 * (self.lon[0] + self.lon[1]),
            0.5 * (self.hei[0] + self.hei[1]),
        )
    }

    /// Maps `[-1, 1]³` (lon, lat, hei order) into the cube.
    pub fn point(&self, u: &[f64; 3]) -> GroundPoint {
        let at = |r: &[f64; 2], t: f64| 0.5 * (r[0] + r[1]) + 0.5 * (r[1] - r[0]) * t;
        GroundPoint::new(at(&self.lat, u[1]), at(&self.lon, u[0]), at(&self.hei, u[2]))
    }
}

/// Residuals of a generated model against its projector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    /// Max forward residual over fit and check grids, pixels.
    pub max_forward_residual: f64,
    /// Max forward reprojection residual of the fitted inverse, pixels.
    pub max_inverse_residual: f64,
    pub inverse: InverseFitReport,
}

/// Fits a forward RPC to `proj` over `cube` and then its inverse.
///
/// Ground normalization is the cube center and half-span; image normalization
/// is the center and half-span of the projected fit samples.
pub fn gen_rpc_from_projector(proj: &AnalyticProjector, cube: &GroundCube) -> Result<(RpcModel, GenerationReport)> {
    let fail = |e: Error| Error::GenerationFailure(e.to_string());
    if !(cube.lat[1] > cube.lat[0] && cube.lon[1] > cube.lon[0] && cube.hei[1] > cube.hei[0]) {
        return Err(Error::GenerationFailure("empty cube".into()));
    }
    let inputs = GENERATION_GRID.unit_cube_points();
    let mut samp = Vec::with_capacity(inputs.len());
    let mut line = Vec::with_capacity(inputs.len());
    for u in &inputs {
        let q = proj.project(&cube.point(u)).map_err(fail)?;
        samp.push(q.samp);
        line.push(q.line);
    }
    let span = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        (0.5 * (lo + hi), (0.5 * (hi - lo)).max(1.0))
    };
    let (samp_off, samp_scale) = span(&samp);
    let (line_off, line_scale) = span(&line);
    let samp_n: Vec<f64> = samp.iter().map(|s| (s - samp_off) / samp_scale).collect();
    let line_n: Vec<f64> = line.iter().map(|l| (l - line_off) / line_scale).collect();

    let sf = fit_rational(&inputs, &samp_n).map_err(fail)?;
    let lf = fit_rational(&inputs, &line_n).map_err(fail)?;
    let half = |r: &[f64; 2]| 0.5 * (r[1] - r[0]);
    let norm = Normalization {
        line_off,
        line_scale,
        samp_off,
        samp_scale,
        lat_off: 0.5 * (cube.lat[0] + cube.lat[1]),
        lat_scale: half(&cube.lat),
        lon_off: 0.5 * (cube.lon[0] + cube.lon[1]),
        lon_scale: half(&cube.lon),
        hei_off: 0.5 * (cube.hei[0] + cube.hei[1]),
        hei_scale: half(&cube.hei),
    };
    let forward = RpcModel::new(norm, sf.num, sf.den, lf.num, lf.den).map_err(fail)?;

    let mut max_fwd = 0.0_f64;
    for u in inputs.iter().chain(GENERATION_GRID.midpoints().iter()) {
        let g = cube.point(u);
        let truth = proj.project(&g).map_err(fail)?;
        let got = forward.project_forward(&g).map_err(fail)?;
        max_fwd = max_fwd.max(got.distance(&truth));
    }
    if !(max_fwd <= MAX_GENERATION_RESIDUAL) {
        return Err(Error::GenerationFailure(format!(
            "forward residual {max_fwd:.4} px exceeds {MAX_GENERATION_RESIDUAL} px; cube too large for a cubic rational fit"
        )));
    }

    let (model, inverse) = fit_inverse_rpc(&forward, GridSpec::default()).map_err(fail)?;
    let mut max_inv = 0.0_f64;
    for u in GridSpec::default().midpoints() {
        let q = model.denormalize_image(u[0], u[1]);
        let hei = model.norm.hei_off + u[2] * model.norm.hei_scale;
        max_inv = max_inv.max(inverse_reprojection_error(&model, &q, hei).map_err(fail)?);
    }
    Ok((model, GenerationReport { max_forward_residual: max_fwd, max_inverse_residual: max_inv, inverse }))
}

/// Bounding cube of the ground seen by the full image of `proj` at the two
/// heights.
pub fn footprint_cube(proj: &AnalyticProjector, hei: [f64; 2]) -> Result<GroundCube> {
    let (w, h) = (proj.width as f64 - 0.5, proj.height as f64 - 0.5);
    let mut lat = [f64::INFINITY, f64::NEG_INFINITY];
    let mut lon = [f64::INFINITY, f64::NEG_INFINITY];
    for z in hei {
        for (s, l) in [(-0.5, -0.5), (w, -0.5), (-0.5, h), (w, h)] {
            let g = proj.unproject(&ImagePoint::new(s, l), z)?;
            lat = [lat[0].min(g.lat), lat[1].max(g.lat)];
            lon = [lon[0].min(g.lon), lon[1].max(g.lon)];
        }
    }
    Ok(GroundCube { lat, lon, hei })
}

/// Forward residual of `m` against `proj` at a point, pixels.
pub fn forward_residual(m: &RpcModel, proj: &AnalyticProjector, g: &GroundPoint) -> Result<f64> {
    Ok(m.project_forward(g)?.distance(&proj.project(g)?))
}
