//! Linear least-squares fitting of rational cubic polynomials.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{monomials, ImagePoint, InverseRpc, Poly20, RpcModel};
use crate::error::{Error, Result};

/// Unknowns of a rational fit with the denominator constant pinned to 1.
pub const RATIONAL_UNKNOWNS: usize = 39;

const REWEIGHT_PASSES: usize = 3;
const RCOND: f64 = 1e-12;
const NUMERATOR_RANK_TOL: f64 = 1e-10;

/// Sample counts along the three axes of a normalized cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridSpec {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evenly spaced values over `[lo, hi]`; a single sample sits at the midpoint.
    pub fn axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![0.5 * (lo + hi)],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    }

    /// Points of the grid over `[-1, 1]^3`, x fastest.
    pub fn unit_cube_points(&self) -> Vec<[f64; 3]> {
        let xs = Self::axis(self.nx, -1.0, 1.0);
        let ys = Self::axis(self.ny, -1.0, 1.0);
        let zs = Self::axis(self.nz, -1.0, 1.0);
        let mut out = Vec::with_capacity(self.len());
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }

    /// Cell midpoints of this grid, never coinciding with its nodes.
    pub fn midpoints(&self) -> Vec<[f64; 3]> {
        let mid = |n: usize| -> Vec<f64> {
            if n < 2 {
                return vec![0.0];
            }
            let a = Self::axis(n, -1.0, 1.0);
            a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        };
        let (xs, ys, zs) = (mid(self.nx), mid(self.ny), mid(self.nz));
        let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::new(11, 11, 9)
    }
}

/// Result of fitting `target ≈ num(x) / den(x)`.
#[derive(Debug, Clone, Copy)]
pub struct RationalFit {
    pub num: Poly20,
    pub den: Poly20,
    pub max_residual: f64,
    pub rms_residual: f64,
}

/// Fits a cubic rational function to samples by linearized least squares
/// (`num - t·den = 0`, `den` constant fixed to 1), re-weighting rows by the
/// previous denominator so that the final pass approximates the true ratio
/// residual. The system is solved by column-scaled truncated SVD.
pub fn fit_rational(inputs: &[[f64; 3]], targets: &[f64]) -> Result<RationalFit> {
    if inputs.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!("{} inputs vs {} targets", inputs.len(), targets.len())));
    }
    let n = inputs.len();
    if n < RATIONAL_UNKNOWNS {
        return Err(Error::FitFailure(format!("underdetermined: {n} samples for {RATIONAL_UNKNOWNS} unknowns")));
    }
    let mons: Vec<[f64; 20]> = inputs.iter().map(|x| monomials(x[0], x[1], x[2])).collect();

    let numerator_block = DMatrix::from_fn(n, 20, |r, c| mons[r][c]);
    if relative_rank_gap(numerator_block) < NUMERATOR_RANK_TOL {
        return Err(Error::FitFailure("rank-deficient design: samples do not span the cubic monomials".into()));
    }

    let mut weights = vec![1.0; n];
    let mut num = Poly20::zero();
    let mut den = Poly20::one();
    for _ in 0..REWEIGHT_PASSES {
        let a = DMatrix::from_fn(n, RATIONAL_UNKNOWNS, |r, c| {
            let w = weights[r];
            if c < 20 {
                w * mons[r][c]
            } else {
                -w * targets[r] * mons[r][c - 19]
            }
        });
        let b = DVector::from_fn(n, |r, _| weights[r] * targets[r]);
        let x = solve_scaled_lstsq(a, b)?;
        num.c.copy_from_slice(&x.as_slice()[..20]);
        den.c[0] = 1.0;
        den.c[1..].copy_from_slice(&x.as_slice()[20..]);

        for (w, m) in weights.iter_mut().zip(&mons) {
            let d: f64 = den.c.iter().zip(m.iter()).map(|(c, m)| c * m).sum();
            if !(d.abs() > 1e-12) {
                return Err(Error::FitFailure("fitted denominator vanishes at a sample".into()));
            }
            *w = 1.0 / d.abs();
        }
    }

    let mut max = 0.0_f64;
    let mut sq = 0.0;
    for (m, t) in mons.iter().zip(targets) {
        let nv: f64 = num.c.iter().zip(m.iter()).map(|(c, m)| c * m).sum();
        let dv: f64 = den.c.iter().zip(m.iter()).map(|(c, m)| c * m).sum();
        let r = (nv / dv - t).abs();
        max = max.max(r);
        sq += r * r;
    }
    if !max.is_finite() {
        return Err(Error::FitFailure("non-finite residual".into()));
    }
    Ok(RationalFit { num, den, max_residual: max, rms_residual: (sq / n as f64).sqrt() })
}

fn column_scales(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.ncols())
        .map(|c| {
            let s = a.column(c).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect()
}

fn relative_rank_gap(mut a: DMatrix<f64>) -> f64 {
    let scales = column_scales(&a);
    for (c, s) in scales.iter().enumerate() {
        a.column_mut(c).unscale_mut(*s);
    }
    let sv = a.singular_values();
    let max = sv.max();
    if max > 0.0 {
        sv.min() / max
    } else {
        0.0
    }
}

fn solve_scaled_lstsq(mut a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let scales = column_scales(&a);
    for (c, s) in scales.iter().enumerate() {
        a.column_mut(c).unscale_mut(*s);
    }
    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let x = svd.solve(&b, RCOND * max).map_err(|e| Error::FitFailure(e.to_string()))?;
    Ok(DVector::from_fn(x.len(), |r, _| x[r] / scales[r]))
}

/// Residuals of a fitted inverse on an independent check grid, in
/// normalized ground units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseFitReport {
    pub max_residual: f64,
    pub rms_residual: f64,
    pub samples: usize,
    pub check_points: usize,
}

/// Fits inverse polynomials to samples produced by iterative localization
/// over the normalized image × height cube. Residuals are measured at the
/// grid's cell midpoints.
pub fn fit_inverse_rpc(m: &RpcModel, grid: GridSpec) -> Result<(RpcModel, InverseFitReport)> {
    if grid.len() < RATIONAL_UNKNOWNS {
        return Err(Error::FitFailure(format!(
            "underdetermined: {}x{}x{} grid has fewer than {RATIONAL_UNKNOWNS} samples",
            grid.nx, grid.ny, grid.nz
        )));
    }
    let mut forward_only = m.clone();
    forward_only.inverse = None;

    let localize = |p: &[f64; 3]| -> Result<[f64; 2]> {
        let q = m.denormalize_image(p[0], p[1]);
        let hei = p[2] * m.norm.hei_scale + m.norm.hei_off;
        let g = forward_only.localize_iterative(&q, hei, 1e-9)?;
        let n = m.normalize_ground(&g);
        Ok([n[0], n[1]])
    };

    let inputs = grid.unit_cube_points();
    let mut lat = Vec::with_capacity(inputs.len());
    let mut lon = Vec::with_capacity(inputs.len());
    for p in &inputs {
        let [a, b] = localize(p).map_err(|e| Error::FitFailure(format!("sample generation: {e}")))?;
        lat.push(a);
        lon.push(b);
    }
    let lat_fit = fit_rational(&inputs, &lat)?;
    let lon_fit = fit_rational(&inputs, &lon)?;

    let mut out = m.clone();
    out.inverse =
        Some(InverseRpc { lat_num: lat_fit.num, lat_den: lat_fit.den, lon_num: lon_fit.num, lon_den: lon_fit.den });

    let check = grid.midpoints();
    let mut max = 0.0_f64;
    let mut sq = 0.0;
    for p in &check {
        let truth = localize(p)?;
        let fitted = out.inverse_normalized(p[0], p[1], p[2])?;
        for k in 0..2 {
            let r = (fitted[k] - truth[k]).abs();
            max = max.max(r);
            sq += r * r;
        }
    }
    let report = InverseFitReport {
        max_residual: max,
        rms_residual: (sq / (2 * check.len()) as f64).sqrt(),
        samples: inputs.len(),
        check_points: check.len(),
    };
    Ok((out, report))
}

/// Forward-reprojection residual in pixels of the fitted inverse at one
/// image point and height.
pub fn inverse_reprojection_error(m: &RpcModel, q: &ImagePoint, hei: f64) -> Result<f64> {
    let g = m.localize_inverse_fitted(q, hei)?;
    Ok(m.project_forward(&g)?.distance(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rpc::tests::pass_through_model;

    #[test]
    fn pass_through_inverse_is_exact() {
        let m = pass_through_model();
        let (fitted, report) = fit_inverse_rpc(&m, GridSpec::default()).unwrap();
        assert!(report.max_residual < 1e-10, "{report:?}");
        let [lat_n, lon_n] = fitted.inverse_normalized(0.3, -0.4, 0.5).unwrap();
        assert!((lat_n - -0.4).abs() < 1e-10);
        assert!((lon_n - 0.3).abs() < 1e-10);
        let q = ImagePoint::new(1234.0, 8765.0);
        assert!(inverse_reprojection_error(&fitted, &q, 100.0).unwrap() < 1e-6);
    }

    #[test]
    fn tiny_grid_is_underdetermined() {
        let m = pass_through_model();
        assert!(matches!(fit_inverse_rpc(&m, GridSpec::new(2, 2, 2)), Err(Error::FitFailure(_))));
    }

    #[test]
    fn single_height_is_rank_deficient() {
        let pts: Vec<[f64; 3]> = GridSpec::new(10, 10, 1).unit_cube_points();
        let t: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        assert!(matches!(fit_rational(&pts, &t), Err(Error::FitFailure(_))));
    }

    #[test]
    fn recovers_a_true_rational_function() {
        let pts = GridSpec::new(9, 9, 7).unit_cube_points();
        let f = |p: &[f64; 3]| (0.3 + p[0] - 0.2 * p[1] * p[2]) / (1.0 + 0.1 * p[2] - 0.05 * p[0]);
        let t: Vec<f64> = pts.iter().map(f).collect();
        let fit = fit_rational(&pts, &t).unwrap();
        assert!(fit.max_residual < 1e-10, "{}", fit.max_residual);
        for p in GridSpec::new(9, 9, 7).midpoints() {
            let m = monomials(p[0], p[1], p[2]);
            let nv: f64 = fit.num.c.iter().zip(&m).map(|(a, b)| a * b).sum();
            let dv: f64 = fit.den.c.iter().zip(&m).map(|(a, b)| a * b).sum();
            assert!((nv / dv - f(&p)).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_axes() {
        assert_eq!(GridSpec::axis(3, -1.0, 1.0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(GridSpec::axis(1, 2.0, 4.0), vec![3.0]);
        assert_eq!(GridSpec::new(3, 2, 2).midpoints().len(), 2);
    }
}
