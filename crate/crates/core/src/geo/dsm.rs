//! UTM-gridded surface models, ESRI ASCII grid I/O and accuracy metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::utm::{geodetic_to_utm_in, UtmZone};
use crate::geo::GeoRect;

pub const NODATA: f64 = -9999.0;

/// Grid geometry. `(origin_e, origin_n)` is the lower-left (south-west) corner;
/// row 0 is the northernmost row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsmGrid {
    pub zone: UtmZone,
    pub origin_e: f64,
    pub origin_n: f64,
    pub cell: f64,
    pub cols: usize,
    pub rows: usize,
}

impl DsmGrid {
    pub fn new(zone: UtmZone, origin_e: f64, origin_n: f64, cell: f64, cols: usize, rows: usize) -> Result<Self> {
        if !(cell > 0.0) || !origin_e.is_finite() || !origin_n.is_finite() {
            return Err(Error::InvalidArgument("grid needs cell > 0 and a finite origin".into()));
        }
        Ok(Self { zone, origin_e, origin_n, cell, cols, rows })
    }

    /// Smallest grid aligned to multiples of `cell` that covers the extent.
    pub fn covering(zone: UtmZone, e_min: f64, n_min: f64, e_max: f64, n_max: f64, cell: f64) -> Result<Self> {
        if !(e_max > e_min && n_max > n_min) {
            return Err(Error::InvalidArgument("empty grid extent".into()));
        }
        let e0 = (e_min / cell).floor() * cell;
        let n0 = (n_min / cell).floor() * cell;
        let cols = ((e_max - e0) / cell).ceil().max(1.0) as usize;
        let rows = ((n_max - n0) / cell).ceil().max(1.0) as usize;
        Self::new(zone, e0, n0, cell, cols, rows)
    }

    /// Aligned grid covering the UTM bounding box of a geographic rectangle.
    pub fn covering_rect(rect: &GeoRect, zone: UtmZone, cell: f64) -> Result<Self> {
        let mut e = [f64::INFINITY, f64::NEG_INFINITY];
        let mut n = [f64::INFINITY, f64::NEG_INFINITY];
        for (lat, lon) in rect.corners() {
            let u = geodetic_to_utm_in(lat, lon, zone)?;
            e = [e[0].min(u.easting), e[1].max(u.easting)];
            n = [n[0].min(u.northing), n[1].max(u.northing)];
        }
        Self::covering(zone, e[0], n[0], e[1], n[1], cell)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// UTM coordinates of a cell center.
    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_e + (col as f64 + 0.5) * self.cell,
            self.origin_n + (self.rows as f64 - row as f64 - 0.5) * self.cell,
        )
    }

    /// Cell containing a UTM point, if inside the grid.
    #[inline]
    pub fn cell_of(&self, e: f64, n: f64) -> Option<(usize, usize)> {
        let c = ((e - self.origin_e) / self.cell).floor();
        let r = ((self.origin_n + self.rows as f64 * self.cell - n) / self.cell).floor();
        if c >= 0.0 && r >= 0.0 && (c as usize) < self.cols && (r as usize) < self.rows {
            Some((r as usize, c as usize))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dsm {
    pub grid: DsmGrid,
    /// Row-major, north to south. Missing cells hold [`NODATA`].
    pub values: Vec<f64>,
}

impl Dsm {
    pub fn nodata(grid: DsmGrid) -> Self {
        Self { values: vec![NODATA; grid.len()], grid }
    }

    pub fn from_values(grid: DsmGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.rows,
                grid.cols
            )));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[row * self.grid.cols + col];
        is_valid(v).then_some(v)
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.grid.cols + col] = v;
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| is_valid(**v)).count()
    }

    /// `(min, max)` over valid cells.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.values.iter().copied().filter(|v| is_valid(*v)).fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Value at a UTM point by the cell containing it.
    pub fn sample(&self, e: f64, n: f64) -> Option<f64> {
        self.grid.cell_of(e, n).and_then(|(r, c)| self.get(r, c))
    }

    /// Nearest-cell resampling onto another grid in the same zone.
    pub fn align_to(&self, target: &DsmGrid) -> Result<Dsm> {
        if target.zone != self.grid.zone {
            return Err(Error::InvalidArgument("grids are in different UTM zones".into()));
        }
        let mut out = Dsm::nodata(*target);
        for r in 0..target.rows {
            for c in 0..target.cols {
                let (e, n) = target.cell_center(r, c);
                if let Some(v) = self.sample(e, n) {
                    out.set(r, c, v);
                }
            }
        }
        Ok(out)
    }

    pub fn to_ascii_grid(&self) -> String {
        let g = &self.grid;
        let mut s = String::with_capacity(g.len() * 10 + 128);
        let _ = writeln!(s, "ncols {}", g.cols);
        let _ = writeln!(s, "nrows {}", g.rows);
        let _ = writeln!(s, "xllcorner {:?}", g.origin_e);
        let _ = writeln!(s, "yllcorner {:?}", g.origin_n);
        let _ = writeln!(s, "cellsize {:?}", g.cell);
        let _ = writeln!(s, "NODATA_value {}", NODATA);
        for r in 0..g.rows {
            let row = &self.values[r * g.cols..(r + 1) * g.cols];
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    s.push(' ');
                }
                if is_valid(*v) {
                    let _ = write!(s, "{v:?}");
                } else {
                    let _ = write!(s, "{NODATA}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_ascii_grid(text: &str, zone: UtmZone) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut header = |name: &str| -> Result<f64> {
            let key = tokens.next().ok_or_else(|| Error::MissingKey(name.into()))?;
            if !key.eq_ignore_ascii_case(name) {
                return Err(Error::Format(format!("expected {name}, found {key}")));
            }
            let v = tokens.next().ok_or_else(|| Error::MissingKey(name.into()))?;
            v.parse::<f64>().map_err(|_| Error::NonNumeric { key: name.into(), value: v.into() })
        };
        let cols = header("ncols")?;
        let rows = header("nrows")?;
        let xll = header("xllcorner")?;
        let yll = header("yllcorner")?;
        let cell = header("cellsize")?;
        let nodata = header("NODATA_value")?;
        if cols < 1.0 || rows < 1.0 || cols.fract() != 0.0 || rows.fract() != 0.0 {
            return Err(Error::Format("ncols/nrows must be positive integers".into()));
        }
        let grid = DsmGrid::new(zone, xll, yll, cell, cols as usize, rows as usize)?;
        let mut values = Vec::with_capacity(grid.len());
        for t in tokens {
            let v: f64 = t.parse().map_err(|_| Error::NonNumeric { key: "value".into(), value: t.into() })?;
            values.push(if v == nodata || !v.is_finite() { NODATA } else { v });
        }
        if values.len() != grid.len() {
            return Err(Error::Format(format!("expected {} values, found {}", grid.len(), values.len())));
        }
        Ok(Self { grid, values })
    }

    /// Writes `path` (ASCII grid) and `path.json` (zone sidecar).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ascii_grid())?;
        let meta = DsmSidecar { utm_zone: self.grid.zone.zone, north: self.grid.zone.north, nodata: NODATA };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta: DsmSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let zone = UtmZone::new(meta.utm_zone, meta.north)?;
        Self::from_ascii_grid(&fs::read_to_string(path)?, zone)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DsmSidecar {
    utm_zone: u8,
    north: bool,
    nodata: f64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[inline]
pub fn is_valid(v: f64) -> bool {
    v.is_finite() && v != NODATA
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsmMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub pct_below_2_5: f64,
    pub pct_below_7_5: f64,
    pub completeness: f64,
    /// Cells valid in both grids.
    pub compared: usize,
    pub gt_valid: usize,
}

/// Compares `dsm` against `gt` on the ground-truth grid.
pub fn evaluate_dsm(dsm: &Dsm, gt: &Dsm) -> Result<DsmMetrics> {
    let aligned;
    let est = if dsm.grid == gt.grid {
        dsm
    } else {
        aligned = dsm.align_to(&gt.grid)?;
        &aligned
    };
    let (mut n, mut gt_valid) = (0usize, 0usize);
    let (mut sum_abs, mut sum_sq) = (0.0, 0.0);
    let (mut below_2_5, mut below_7_5) = (0usize, 0usize);
    for (e, g) in est.values.iter().zip(&gt.values) {
        if !is_valid(*g) {
            continue;
        }
        gt_valid += 1;
        if !is_valid(*e) {
            continue;
        }
        let d = (e - g).abs();
        n += 1;
        sum_abs += d;
        sum_sq += d * d;
        below_2_5 += (d < 2.5) as usize;
        below_7_5 += (d < 7.5) as usize;
    }
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    let nf = n as f64;
    Ok(DsmMetrics {
        mae: sum_abs / nf,
        rmse: (sum_sq / nf).sqrt(),
        pct_below_2_5: 100.0 * below_2_5 as f64 / nf,
        pct_below_7_5: 100.0 * below_7_5 as f64 / nf,
        completeness: 100.0 * nf / gt_valid as f64,
        compared: n,
        gt_valid,
    })
}
