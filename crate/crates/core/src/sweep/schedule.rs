use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Interval, SweepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    GlobalRange,
    PreviousHeightMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub plane_count: usize,
    /// Plane spacing in meters.
    pub interval: f64,
    pub centering: Centering,
    /// Image downsampling factor of the stage.
    pub factor: usize,
}

/// Height hypotheses for every stage of a coarse-to-fine sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightPlaneSchedule {
    pub d_min: f64,
    pub d_max: f64,
    pub stages: Vec<StageSchedule>,
}

impl HeightPlaneSchedule {
    /// Inclusive uniform samples of `[d_min, d_max]`.
    pub fn global_planes(&self, stage: usize) -> Vec<f64> {
        let n = self.stages[stage].plane_count;
        let span = self.d_max - self.d_min;
        (0..n).map(|k| if k + 1 == n { self.d_max } else { self.d_min + span * k as f64 / (n - 1) as f64 }).collect()
    }

    /// See [`Self::fill_planes_around`].
    pub fn planes_around(&self, stage: usize, center: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.stages[stage].plane_count];
        self.fill_planes_around(stage, center, &mut out);
        out
    }

    /// Planes at the stage interval centered on `center`, written into `out`
    /// (length `plane_count`). A window that fits inside `[d_min, d_max]` is
    /// shifted to lie within it; a wider window is clamped plane by plane.
    pub fn fill_planes_around(&self, stage: usize, center: f64, out: &mut [f64]) {
        let s = &self.stages[stage];
        let half = 0.5 * (s.plane_count - 1) as f64 * s.interval;
        let fits = 2.0 * half <= self.d_max - self.d_min;
        let c = if fits { center.clamp(self.d_min + half, self.d_max - half) } else { center };
        for (k, o) in out.iter_mut().enumerate() {
            *o = (c - half + k as f64 * s.interval).clamp(self.d_min, self.d_max);
        }
    }
}

pub fn build_schedule(d_min: f64, d_max: f64, cfg: &SweepConfig) -> Result<HeightPlaneSchedule> {
    if !(d_min.is_finite() && d_max.is_finite() && d_min < d_max) {
        return Err(Error::InvalidArgument(format!("height range [{d_min}, {d_max}] is empty")));
    }
    cfg.validate()?;
    let span = d_max - d_min;
    let stages = cfg
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| StageSchedule {
            plane_count: s.planes,
            interval: match s.interval {
                Interval::Span => span / s.planes as f64,
                Interval::Meters(m) => m,
            },
            centering: if i == 0 { Centering::GlobalRange } else { Centering::PreviousHeightMap },
            factor: s.factor,
        })
        .collect();
    Ok(HeightPlaneSchedule { d_min, d_max, stages })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_first_stage_over_two_km() {
        let s = build_schedule(0.0, 2000.0, &SweepConfig::default()).unwrap();
        assert_eq!(s.stages[0].plane_count, 64);
        assert_eq!(s.stages[0].interval, 31.25);
        assert_eq!(s.stages[0].centering, Centering::GlobalRange);
        let p = s.global_planes(0);
        assert_eq!(p.len(), 64);
        assert_eq!((p[0], p[63]), (0.0, 2000.0));
        assert!(p.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn second_stage_window_around_previous_height() {
        let s = build_schedule(0.0, 2000.0, &SweepConfig::default()).unwrap();
        assert_eq!((s.stages[1].plane_count, s.stages[1].interval), (32, 5.0));
        assert_eq!((s.stages[2].plane_count, s.stages[2].interval), (8, 2.5));
        let p = s.planes_around(1, 100.0);
        assert_eq!(p.len(), 32);
        assert!((p[0] - 22.5).abs() < 1e-12 && (p[31] - 177.5).abs() < 1e-12);
        assert!(p.windows(2).all(|w| (w[1] - w[0] - 5.0).abs() < 1e-12));
    }

    #[test]
    fn window_is_kept_inside_range() {
        let s = build_schedule(0.0, 2000.0, &SweepConfig::default()).unwrap();
        let p = s.planes_around(1, 10.0);
        assert_eq!(p[0], 0.0);
        assert!((p[31] - 155.0).abs() < 1e-12);
        let p = s.planes_around(1, 1990.0);
        assert_eq!(p[31], 2000.0);
        // a window wider than the range is clamped
        let narrow = build_schedule(0.0, 20.0, &SweepConfig::default()).unwrap();
        let p = narrow.planes_around(1, 10.0);
        assert!(p.iter().all(|h| (0.0..=20.0).contains(h)));
        assert_eq!((p[0], p[31]), (0.0, 20.0));
    }

    #[test]
    fn empty_range_is_rejected() {
        assert!(build_schedule(5.0, 5.0, &SweepConfig::default()).is_err());
        assert!(build_schedule(6.0, 5.0, &SweepConfig::default()).is_err());
    }
}
