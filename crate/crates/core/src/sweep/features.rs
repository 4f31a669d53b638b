use rayon::prelude::*;

use crate::raster::Raster;

/// Feature channels per pyramid level.
pub const FEATURE_CHANNELS: usize = 3;

/// One level per downsampling factor, each with channels
/// `{intensity, d/dx, d/dy}` normalized to zero mean and unit variance over
/// the tile. Channels with zero variance are left at zero.
pub fn extract_features(img: &Raster, factors: &[usize]) -> Vec<Raster> {
    factors.iter().map(|&f| level_features(&img.downsample(f.max(1)))).collect()
}

fn level_features(img: &Raster) -> Raster {
    let (w, h) = (img.width, img.height);
    let src = img.channel(0);
    let mut out = Raster::new(w, h, FEATURE_CHANNELS);
    out.channel_mut(0).copy_from_slice(src);
    let dx: Vec<f32> = (0..w * h).into_par_iter().map(|i| diff(src, i, i % w, w, 1)).collect();
    let dy: Vec<f32> = (0..w * h).into_par_iter().map(|i| diff(src, i, i / w, h, w)).collect();
    out.channel_mut(1).copy_from_slice(&dx);
    out.channel_mut(2).copy_from_slice(&dy);
    for c in 0..FEATURE_CHANNELS {
        normalize(out.channel_mut(c));
    }
    out
}

/// Central difference at flat index `i` along an axis where the pixel has
/// coordinate `k` of `n` and neighbours are `stride` apart; one-sided at the
/// borders.
#[inline]
fn diff(v: &[f32], i: usize, k: usize, n: usize, stride: usize) -> f32 {
    if n < 2 {
        0.0
    } else if k == 0 {
        v[i + stride] - v[i]
    } else if k + 1 == n {
        v[i] - v[i - stride]
    } else {
        0.5 * (v[i + stride] - v[i - stride])
    }
}

fn normalize(ch: &mut [f32]) {
    let n = ch.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = ch.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = ch.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        ch.fill(0.0);
        return;
    }
    for v in ch.iter_mut() {
        *v = ((*v as f64 - mean) / sd) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_gradients() {
        let img = Raster::filled(40, 24, 1, 0.7);
        for level in extract_features(&img, &[4, 1]) {
            assert!(level.data.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn full_resolution_intensity_is_normalized_input() {
        let img = Raster::from_fn(32, 20, |x, y| (x as f32 * 0.3).sin() + 0.05 * y as f32);
        let f = &extract_features(&img, &[1])[0];
        let n = img.data.len() as f64;
        let mean = img.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let sd = (img.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        for (a, b) in f.channel(0).iter().zip(&img.data) {
            assert!((*a as f64 - (*b as f64 - mean) / sd).abs() < 1e-5);
        }
        for c in 0..FEATURE_CHANNELS {
            let ch = f.channel(c);
            let m = ch.iter().map(|&v| v as f64).sum::<f64>() / n;
            let v = ch.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n;
            assert!(m.abs() < 1e-5 && (v - 1.0).abs() < 1e-4, "channel {c}: {m} {v}");
        }
    }

    #[test]
    fn gradients_of_a_ramp() {
        let img = Raster::from_fn(16, 16, |x, y| 2.0 * x as f32 + 5.0 * y as f32);
        let f = &extract_features(&img, &[1])[0];
        // constant derivatives normalize to zero
        assert!(f.channel(1).iter().all(|v| *v == 0.0));
        assert!(f.channel(2).iter().all(|v| *v == 0.0));
    }
}
