//! Geodesy, gridded surface models and the block-wise reconstruction pipeline.

use serde::{Deserialize, Serialize};

pub mod blocks;
pub mod dsm;
pub mod fusion;
pub mod pipeline;
pub mod utm;

/// Latitude/longitude rectangle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoRect {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoRect {
    pub const fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Self {
        Self { lat_min, lat_max, lon_min, lon_max }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lat_max > self.lat_min && self.lon_max > self.lon_min)
    }

    /// Half-open containment: `[min, max)` on both axes.
    #[inline]
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat < self.lat_max && lon >= self.lon_min && lon < self.lon_max
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.lat_min + self.lat_max), 0.5 * (self.lon_min + self.lon_max))
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.lat_min, self.lon_min),
            (self.lat_min, self.lon_max),
            (self.lat_max, self.lon_min),
            (self.lat_max, self.lon_max),
        ]
    }
}
