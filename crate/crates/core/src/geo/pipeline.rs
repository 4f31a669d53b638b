//! Block-wise surface reconstruction: tiling, cropping, multi-view sweeps
//! with every view as reference, consistency filtering, fusion and mosaic.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::blocks::{block_partition, crops_for_block, CropSpec, ElevationSource, GeoBlock};
use crate::geo::dsm::{evaluate_dsm, Dsm, DsmGrid, DsmMetrics};
use crate::geo::fusion::{fuse_points, geometric_consistency_filter, ground_points, mosaic};
use crate::geo::utm::UtmZone;
use crate::geo::GeoRect;
use crate::raster::Raster;
use crate::rpc::{GroundPoint, RpcModel};
use crate::sweep::{run_multistage, HeightMap, SweepConfig};

/// An input image with its camera model.
#[derive(Debug, Clone)]
pub struct View {
    pub image: Raster,
    pub rpc: RpcModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub sweep: SweepConfig,
    /// Block side, meters.
    pub block_size: f64,
    /// Crop padding, pixels.
    pub pad: usize,
    /// Crop sizes are rounded up to a multiple of this.
    pub crop_multiple: usize,
    /// Round-trip reprojection threshold, pixels.
    pub consistency_threshold: f64,
    pub min_consistent_views: usize,
    /// DSM cell size, meters.
    pub dsm_cell: f64,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sweep: SweepConfig::default(),
            block_size: 4000.0,
            pad: 16,
            crop_multiple: 16,
            consistency_threshold: 1.0,
            min_consistent_views: 1,
            dsm_cell: 5.0,
            threads: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.block_size > 0.0 && self.dsm_cell > 0.0) {
            return bad("block_size and dsm_cell must be positive");
        }
        if !(self.consistency_threshold > 0.0) {
            return bad("consistency_threshold must be positive");
        }
        if self.crop_multiple == 0 || self.min_consistent_views == 0 {
            return bad("crop_multiple and min_consistent_views must be positive");
        }
        let coarsest = self.sweep.stages.iter().map(|s| s.factor).max().unwrap_or(1);
        if !self.crop_multiple.is_multiple_of(coarsest) {
            return bad("crop_multiple must be a multiple of every stage factor");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub block: GeoBlock,
    pub crops: Vec<CropSpec>,
    pub points: usize,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFailure {
    pub block: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub dsm: Dsm,
    pub metrics: Option<DsmMetrics>,
    pub blocks: Vec<BlockReport>,
    pub failures: Vec<BlockFailure>,
    pub runtime_s: f64,
}

/// Reconstructs a surface model of `aoi` from `views` on a grid covering the
/// AOI, evaluated against `gt` when given. Block failures are collected and
/// the remaining blocks still contribute.
pub fn run_pipeline(
    views: &[View],
    aoi: &GeoRect,
    cfg: &PipelineConfig,
    elevation: Option<&ElevationSource>,
    gt: Option<&Dsm>,
) -> Result<PipelineOutput> {
    let t0 = Instant::now();
    cfg.validate()?;
    if views.len() < 2 {
        return Err(Error::InvalidArgument("at least two views are required".into()));
    }
    let rpcs: Vec<RpcModel> = views.iter().map(|v| v.rpc.clone()).collect();
    let default_elev;
    let elevation = match elevation {
        Some(e) => e,
        None => {
            default_elev = ElevationSource::from_rpcs(&rpcs)?;
            &default_elev
        }
    };
    let (clat, clon) = aoi.center();
    let grid = match gt {
        Some(g) => g.grid,
        None => DsmGrid::covering_rect(aoi, UtmZone::for_point(clat, clon), cfg.dsm_cell)?,
    };
    let blocks = block_partition(aoi, cfg.block_size, elevation)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<(Dsm, BlockReport)>> =
        pool.install(|| blocks.par_iter().map(|b| process_block(views, b, cfg, &grid)).collect());

    let mut parts = Vec::new();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (b, r) in blocks.iter().zip(results) {
        match r {
            Ok((d, rep)) => {
                parts.push(d);
                reports.push(rep);
            }
            Err(e) => failures.push(BlockFailure { block: b.id, message: e.to_string() }),
        }
    }
    let dsm = mosaic(&parts, &grid)?;
    let metrics = match gt {
        Some(g) => match evaluate_dsm(&dsm, g) {
            Ok(m) => Some(m),
            Err(Error::NoOverlap) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    Ok(PipelineOutput { dsm, metrics, blocks: reports, failures, runtime_s: t0.elapsed().as_secs_f64() })
}

/// Height maps of every covering view of a block, each view in turn as the
/// reference, before filtering. Returns the crops, the cropped models and
/// the maps.
pub fn block_height_maps(
    views: &[View],
    block: &GeoBlock,
    cfg: &PipelineConfig,
) -> Result<(Vec<CropSpec>, Vec<RpcModel>, Vec<HeightMap>)> {
    let rpcs: Vec<RpcModel> = views.iter().map(|v| v.rpc.clone()).collect();
    let sizes: Vec<(usize, usize)> = views.iter().map(|v| (v.image.width, v.image.height)).collect();
    let crops: Vec<CropSpec> =
        crops_for_block(&rpcs, &sizes, block, cfg.pad, cfg.crop_multiple)?.into_iter().flatten().collect();
    if crops.len() < 2 {
        return Err(Error::InvalidArgument(format!("block {} is covered by {} view(s)", block.id, crops.len())));
    }
    let images: Vec<Raster> = crops
        .iter()
        .map(|c| views[c.view].image.crop(c.rect.x0, c.rect.y0, c.rect.width, c.rect.height, 0.0))
        .collect();
    let models: Vec<RpcModel> =
        crops.iter().map(|c| rpcs[c.view].cropped(c.rect.x0 as f64, c.rect.y0 as f64)).collect();
    let n_src = (cfg.sweep.view_count - 1).min(crops.len() - 1);
    let mut maps = Vec::with_capacity(crops.len());
    for r in 0..crops.len() {
        let others: Vec<usize> = (0..crops.len()).filter(|&j| j != r).take(n_src).collect();
        let srcs: Vec<Raster> = others.iter().map(|&j| images[j].clone()).collect();
        let mut ms = vec![models[r].clone()];
        ms.extend(others.iter().map(|&j| models[j].clone()));
        maps.push(run_multistage(&images[r], &srcs, &ms, [block.h_min, block.h_max], &cfg.sweep)?);
    }
    Ok((crops, models, maps))
}

fn process_block(views: &[View], block: &GeoBlock, cfg: &PipelineConfig, grid: &DsmGrid) -> Result<(Dsm, BlockReport)> {
    let (crops, models, maps) = block_height_maps(views, block, cfg)?;
    let mut points: Vec<GroundPoint> = Vec::new();
    for r in 0..maps.len() {
        let kept =
            geometric_consistency_filter(&maps, &models, r, cfg.consistency_threshold, cfg.min_consistent_views)?;
        points.extend(ground_points(&kept, &models[r]).into_iter().filter(|p| block.bounds.contains(p.lat, p.lon)));
    }
    let dsm = fuse_points(&points, grid)?;
    let report = BlockReport { block: *block, crops, points: points.len(), cells: dsm.valid_count() };
    Ok((dsm, report))
}
