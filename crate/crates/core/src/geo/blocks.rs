//! Geographic tiling of an area of interest and per-view image crops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::dsm::Dsm;
use crate::geo::utm::{geodetic_to_utm_in, utm_to_geodetic};
use crate::geo::GeoRect;
use crate::raster::PixelRect;
use crate::rpc::{GroundPoint, RpcModel};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_E2: f64 = 6.694_379_990_141_316e-3;

/// Meters per degree of latitude and of longitude at `lat`.
pub fn meters_per_degree(lat: f64) -> (f64, f64) {
    let (s, c) = lat.to_radians().sin_cos();
    let w = 1.0 - WGS84_E2 * s * s;
    let m = WGS84_A * (1.0 - WGS84_E2) / (w * w.sqrt());
    let n = WGS84_A / w.sqrt();
    (m.to_radians(), (n * c).to_radians())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBlock {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    pub bounds: GeoRect,
    pub h_min: f64,
    pub h_max: f64,
}

/// Where per-block height bounds come from.
#[derive(Debug, Clone)]
pub enum ElevationSource {
    /// The same bounds for every block, e.g. the RPC height range.
    Range([f64; 2]),
    /// Min/max of a coarse DEM over the block, widened by `margin` meters.
    Dem { dem: Dsm, margin: f64 },
}

impl ElevationSource {
    /// Intersection of the models' height ranges.
    pub fn from_rpcs(rpcs: &[RpcModel]) -> Result<Self> {
        let mut r = [f64::NEG_INFINITY, f64::INFINITY];
        for m in rpcs {
            let [a, b] = m.height_range();
            r = [r[0].max(a), r[1].min(b)];
        }
        if !(r[0] < r[1]) {
            return Err(Error::InvalidArgument("models share no height range".into()));
        }
        Ok(Self::Range(r))
    }

    fn bounds(&self, rect: &GeoRect, dem_cells: &[(f64, f64, f64)]) -> Result<[f64; 2]> {
        match self {
            Self::Range(r) => Ok(*r),
            Self::Dem { dem, margin } => {
                let mut r = [f64::INFINITY, f64::NEG_INFINITY];
                for &(lat, lon, h) in dem_cells {
                    if rect.contains(lat, lon) {
                        r = [r[0].min(h), r[1].max(h)];
                    }
                }
                if !r[0].is_finite() {
                    // block smaller than a DEM cell: nearest cells at corners and center
                    let (clat, clon) = rect.center();
                    for (lat, lon) in rect.corners().into_iter().chain([(clat, clon)]) {
                        let u = geodetic_to_utm_in(lat, lon, dem.grid.zone)?;
                        if let Some(h) = dem.sample(u.easting, u.northing) {
                            r = [r[0].min(h), r[1].max(h)];
                        }
                    }
                }
                if !r[0].is_finite() {
                    return Err(Error::InvalidArgument("DEM does not cover the block".into()));
                }
                let out = [r[0] - margin, r[1] + margin];
                if !(out[0] < out[1]) {
                    return Err(Error::InvalidArgument("DEM height range is empty; use a positive margin".into()));
                }
                Ok(out)
            }
        }
    }
}

fn edges(min: f64, max: f64, step: f64) -> Vec<f64> {
    let count = ((max - min) / step - 1e-9).ceil().max(1.0) as usize;
    (0..=count).map(|k| if k == count { max } else { min + step * k as f64 }).collect()
}

/// Regular tiling of `aoi` into blocks of about `block_size` meters, with
/// truncated edge blocks. Blocks are ordered north to south, west to east.
pub fn block_partition(aoi: &GeoRect, block_size: f64, elevation: &ElevationSource) -> Result<Vec<GeoBlock>> {
    if aoi.is_empty() {
        return Err(Error::InvalidArgument("empty AOI".into()));
    }
    if !(block_size > 0.0) {
        return Err(Error::InvalidArgument("block size must be positive".into()));
    }
    let (m_lat, m_lon) = meters_per_degree(aoi.center().0);
    let lat_edges = edges(aoi.lat_min, aoi.lat_max, block_size / m_lat);
    let lon_edges = edges(aoi.lon_min, aoi.lon_max, block_size / m_lon);
    let dem_cells: Vec<(f64, f64, f64)> = match elevation {
        ElevationSource::Range(_) => Vec::new(),
        ElevationSource::Dem { dem, .. } => {
            let g = &dem.grid;
            let mut cells = Vec::new();
            for r in 0..g.rows {
                for c in 0..g.cols {
                    if let Some(h) = dem.get(r, c) {
                        let (e, n) = g.cell_center(r, c);
                        let (lat, lon) = utm_to_geodetic(e, n, g.zone)?;
                        cells.push((lat, lon, h));
                    }
                }
            }
            cells
        }
    };
    let rows = lat_edges.len() - 1;
    let cols = lon_edges.len() - 1;
    let mut blocks = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        let (lat_max, lat_min) = (lat_edges[rows - row], lat_edges[rows - row - 1]);
        for col in 0..cols {
            let bounds = GeoRect::new(lat_min, lat_max, lon_edges[col], lon_edges[col + 1]);
            let [h_min, h_max] = elevation.bounds(&bounds, &dem_cells)?;
            blocks.push(GeoBlock { id: blocks.len(), row, col, bounds, h_min, h_max });
        }
    }
    Ok(blocks)
}

/// Image window of one view for one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub view: usize,
    pub rect: PixelRect,
}

/// Bounding rectangle of the block corners projected at `h_min` and
/// `h_max`, grown by `pad` pixels.
pub fn compute_crop(rpc: &RpcModel, block: &GeoBlock, pad: usize) -> Result<CropSpec> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for h in [block.h_min, block.h_max] {
        for (lat, lon) in block.bounds.corners() {
            let q = rpc.project_forward(&GroundPoint::new(lat, lon, h))?;
            x0 = x0.min(q.samp);
            y0 = y0.min(q.line);
            x1 = x1.max(q.samp);
            y1 = y1.max(q.line);
        }
    }
    let pad = pad as i64;
    let (ix0, iy0) = (x0.floor() as i64 - pad, y0.floor() as i64 - pad);
    let (ix1, iy1) = (x1.ceil() as i64 + pad, y1.ceil() as i64 + pad);
    Ok(CropSpec { view: 0, rect: PixelRect::new(ix0, iy0, (ix1 - ix0 + 1) as usize, (iy1 - iy0 + 1) as usize) })
}

fn round_up(v: usize, multiple: usize) -> usize {
    v.div_ceil(multiple.max(1)) * multiple.max(1)
}

/// Crops of every view for a block, extended to a common size that is a
/// multiple of `multiple` and shifted inside each image. Views whose crop
/// misses their image come back `None`. A crop larger than its image is
/// clipped to the image.
pub fn crops_for_block(
    rpcs: &[RpcModel],
    image_sizes: &[(usize, usize)],
    block: &GeoBlock,
    pad: usize,
    multiple: usize,
) -> Result<Vec<Option<CropSpec>>> {
    if rpcs.len() != image_sizes.len() {
        return Err(Error::ShapeMismatch(format!("{} models for {} images", rpcs.len(), image_sizes.len())));
    }
    let mut raw = Vec::with_capacity(rpcs.len());
    for (v, (m, &(iw, ih))) in rpcs.iter().zip(image_sizes).enumerate() {
        let c = compute_crop(m, block, pad)?;
        let r = c.rect;
        let hits = r.x0 < iw as i64 && r.y0 < ih as i64 && r.x0 + r.width as i64 > 0 && r.y0 + r.height as i64 > 0;
        raw.push(hits.then_some(CropSpec { view: v, rect: r }));
    }
    let w = round_up(raw.iter().flatten().map(|c| c.rect.width).max().unwrap_or(0), multiple);
    let h = round_up(raw.iter().flatten().map(|c| c.rect.height).max().unwrap_or(0), multiple);
    Ok(raw
        .into_iter()
        .map(|c| {
            c.map(|c| {
                let (iw, ih) = image_sizes[c.view];
                let place = |x0: i64, len: usize, target: usize, img: usize| -> (i64, usize) {
                    let start = x0 - ((target - len) / 2) as i64;
                    if target <= img {
                        (start.clamp(0, (img - target) as i64), target)
                    } else {
                        (0, img)
                    }
                };
                let (x0, cw) = place(c.rect.x0, c.rect.width, w, iw);
                let (y0, ch) = place(c.rect.y0, c.rect.height, h, ih);
                CropSpec { view: c.view, rect: PixelRect::new(x0, y0, cw, ch) }
            })
        })
        .collect())
}
