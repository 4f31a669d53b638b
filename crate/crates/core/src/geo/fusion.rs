//! Cross-view consistency filtering of height maps and their fusion into a
//! gridded surface model.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::dsm::{is_valid, Dsm, DsmGrid};
use crate::geo::utm::geodetic_to_utm_in;
use crate::rpc::{GroundPoint, ImagePoint, RpcModel};
use crate::sweep::HeightMap;

const LOCALIZE_TOL_PX: f64 = 1e-6;

/// Ground point of pixel `q` at height `hei`, through the fitted inverse
/// polynomials when present.
pub fn localize(m: &RpcModel, q: &ImagePoint, hei: f64) -> Option<GroundPoint> {
    if m.inverse.is_some() {
        m.localize_inverse_fitted(q, hei).ok()
    } else {
        m.localize_iterative(q, hei, LOCALIZE_TOL_PX).ok()
    }
}

/// Keeps a reference pixel when its round trip through at least
/// `min_views` other views lands within `threshold` pixels of itself. An
/// infinite threshold disables the test.
/// Every map must be a full-resolution map of the image its model describes.
pub fn geometric_consistency_filter(
    maps: &[HeightMap],
    rpcs: &[RpcModel],
    ref_index: usize,
    threshold: f64,
    min_views: usize,
) -> Result<HeightMap> {
    if maps.len() != rpcs.len() || ref_index >= maps.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} height maps, {} models, reference {ref_index}",
            maps.len(),
            rpcs.len()
        )));
    }
    if maps.iter().any(|m| m.scale != 1) {
        return Err(Error::ShapeMismatch("consistency filtering needs full-resolution maps".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    let reference = &maps[ref_index];
    if threshold == f64::INFINITY {
        return Ok(reference.clone());
    }
    let m_ref = &rpcs[ref_index];
    let w = reference.width;
    let keep: Vec<bool> = (0..w * reference.height)
        .into_par_iter()
        .map(|i| {
            let Some(h) = reference.get(i % w, i / w) else { return false };
            let p = ImagePoint::new((i % w) as f64, (i / w) as f64);
            let Some(g) = localize(m_ref, &p, h) else { return false };
            let mut passed = 0;
            for (j, (map_j, m_j)) in maps.iter().zip(rpcs).enumerate() {
                if j == ref_index {
                    continue;
                }
                let Ok(q) = m_j.project_forward(&g) else { continue };
                let Some(h_j) = map_j.sample(q.samp, q.line) else { continue };
                let Some(g_j) = localize(m_j, &q, h_j) else { continue };
                let Ok(back) = m_ref.project_forward(&g_j) else { continue };
                if back.distance(&p) < threshold {
                    passed += 1;
                }
            }
            passed >= min_views
        })
        .collect();
    let mut out = reference.clone();
    for (i, k) in keep.iter().enumerate() {
        if !k {
            out.valid[i] = false;
            out.heights[i] = f64::NAN;
        }
    }
    Ok(out)
}

/// Ground points of the valid pixels of a height map, row-major.
pub fn ground_points(map: &HeightMap, rpc: &RpcModel) -> Vec<GroundPoint> {
    let w = map.width;
    let s = map.scale.max(1) as f64;
    (0..w * map.height)
        .into_par_iter()
        .filter_map(|i| {
            let h = map.get(i % w, i / w)?;
            // pixel center of a downsampled map in full-resolution pixels
            let q = ImagePoint::new(((i % w) as f64 + 0.5) * s - 0.5, ((i / w) as f64 + 0.5) * s - 0.5);
            localize(rpc, &q, h)
        })
        .collect()
}

/// Median height per cell of the points; cells without points are nodata.
pub fn fuse_points(points: &[GroundPoint], grid: &DsmGrid) -> Result<Dsm> {
    let binned: Vec<Option<(usize, f64)>> = points
        .par_iter()
        .map(|p| {
            let u = geodetic_to_utm_in(p.lat, p.lon, grid.zone).ok()?;
            let (r, c) = grid.cell_of(u.easting, u.northing)?;
            Some((r * grid.cols + c, p.hei))
        })
        .collect();
    let mut cells: Vec<(usize, f64)> = binned.into_iter().flatten().collect();
    cells.par_sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut dsm = Dsm::nodata(*grid);
    let mut start = 0;
    while start < cells.len() {
        let idx = cells[start].0;
        let end = start + cells[start..].partition_point(|c| c.0 == idx);
        let run: Vec<f64> = cells[start..end].iter().map(|c| c.1).collect();
        dsm.values[idx] = median_sorted(&run);
        start = end;
    }
    Ok(dsm)
}

fn median_sorted(run: &[f64]) -> f64 {
    let n = run.len();
    if n % 2 == 1 {
        run[n / 2]
    } else {
        0.5 * (run[n / 2 - 1] + run[n / 2])
    }
}

/// Fuses the valid pixels of every map into `grid`.
pub fn fuse_dsm(maps: &[HeightMap], rpcs: &[RpcModel], grid: &DsmGrid) -> Result<Dsm> {
    if maps.len() != rpcs.len() {
        return Err(Error::ShapeMismatch(format!("{} height maps for {} models", maps.len(), rpcs.len())));
    }
    let points: Vec<GroundPoint> = maps.iter().zip(rpcs).flat_map(|(m, r)| ground_points(m, r)).collect();
    fuse_points(&points, grid)
}

/// Cell-wise median of several surface models on the same grid.
pub fn mosaic(parts: &[Dsm], grid: &DsmGrid) -> Result<Dsm> {
    if parts.iter().any(|p| p.grid != *grid) {
        return Err(Error::ShapeMismatch("mosaic parts must share the grid".into()));
    }
    let mut out = Dsm::nodata(*grid);
    out.values.par_iter_mut().enumerate().for_each(|(i, v)| {
        let mut vals: Vec<f64> = parts.iter().map(|p| p.values[i]).filter(|v| is_valid(*v)).collect();
        if !vals.is_empty() {
            vals.sort_by(f64::total_cmp);
            *v = median_sorted(&vals);
        }
    });
    Ok(out)
}
