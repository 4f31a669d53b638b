//! Planar floating-point rasters and the netpbm-family file formats used for
//! images (PGM) and height maps (PFM).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle `[x0, x0 + width) × [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PixelRect {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub const fn new(x0: i64, y0: i64, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    /// Center in pixel coordinates (pixel centers at integers).
    pub fn center(&self) -> (f64, f64) {
        (self.x0 as f64 + (self.width as f64 - 1.0) / 2.0, self.y0 as f64 + (self.height as f64 - 1.0) / 2.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64
            && y >= self.y0 as f64
            && x <= (self.x0 + self.width as i64 - 1) as f64
            && y <= (self.y0 + self.height as i64 - 1) as f64
    }
}

/// Multi-channel raster stored channel-major: `data[c * w * h + y * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!("{} samples for {width}x{height}x{channels}", data.len())));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, channels: 1, data }
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[c * self.plane_len() + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        let n = self.plane_len();
        self.data[c * n + y * self.width + x] = v;
    }

    /// Sub-raster `[x0, x0 + w) × [y0, y0 + h)`; samples outside the source
    /// are filled with `fill`.
    pub fn crop(&self, x0: i64, y0: i64, w: usize, h: usize, fill: f32) -> Raster {
        let mut out = Raster::filled(w, h, self.channels, fill);
        for c in 0..self.channels {
            for y in 0..h {
                let sy = y0 + y as i64;
                if sy < 0 || sy >= self.height as i64 {
                    continue;
                }
                for x in 0..w {
                    let sx = x0 + x as i64;
                    if sx < 0 || sx >= self.width as i64 {
                        continue;
                    }
                    out.set(x, y, c, self.get(sx as usize, sy as usize, c));
                }
            }
        }
        out
    }

    /// Area-average downsampling by an integer factor. Trailing pixels that do
    /// not fill a whole block are dropped.
    pub fn downsample(&self, factor: usize) -> Raster {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Raster::new(w, h, self.channels);
        let norm = 1.0 / (factor * factor) as f64;
        for c in 0..self.channels {
            let src = self.channel(c);
            let dst = out.channel_mut(c);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f64;
                    for dy in 0..factor {
                        let row = (y * factor + dy) * self.width + x * factor;
                        for v in &src[row..row + factor] {
                            acc += *v as f64;
                        }
                    }
                    dst[y * w + x] = (acc * norm) as f32;
                }
            }
        }
        out
    }

    /// Bilinear sample of channel `c` at `(x, y)`; `None` when any of the
    /// four support pixels falls outside the raster.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> Option<f32> {
        let (x0, fx) = support(x, self.width)?;
        let (y0, fy) = support(y, self.height)?;
        let ch = self.channel(c);
        let i = y0 * self.width + x0;
        let (x1, y1) = (usize::from(fx > 0.0), if fy > 0.0 { self.width } else { 0 });
        let v00 = ch[i] as f64;
        let v01 = ch[i + x1] as f64;
        let v10 = ch[i + y1] as f64;
        let v11 = ch[i + y1 + x1] as f64;
        let top = v00 + (v01 - v00) * fx;
        let bot = v10 + (v11 - v10) * fx;
        Some((top + (bot - top) * fy) as f32)
    }

    /// Normalized cross-correlation between two single-channel rasters.
    pub fn correlation(&self, other: &Raster) -> f64 {
        let n = self.data.len().min(other.data.len()) as f64;
        let ma = self.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mb = other.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (a, b) in self.data.iter().zip(&other.data) {
            let (a, b) = (*a as f64 - ma, *b as f64 - mb);
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
        sab / (saa * sbb).sqrt()
    }
}

/// Integer base index and fractional weight for a bilinear support along an
/// axis of length `n`; the upper neighbour is only required when the weight
/// is non-zero.
#[inline]
fn support(v: f64, n: usize) -> Option<(usize, f64)> {
    if !(v >= 0.0) || n == 0 {
        return None;
    }
    let last = (n - 1) as f64;
    if v > last {
        return None;
    }
    let i = v.floor();
    let f = v - i;
    Some((i as usize, f))
}

fn read_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let b = byte[0];
        if b == b'#' && tok.is_empty() {
            let mut line = String::new();
            r.read_line(&mut line)?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b);
        if tok.len() > 64 {
            return Err(Error::Format("header token too long".into()));
        }
    }
    if tok.is_empty() {
        return Err(Error::Format("truncated header".into()));
    }
    String::from_utf8(tok).map_err(|_| Error::Format("non-ASCII header".into()))
}

fn header_usize<R: BufRead>(r: &mut R, what: &str) -> Result<usize> {
    let t = read_token(r)?;
    t.parse::<usize>().map_err(|_| Error::Format(format!("bad {what} in header: {t:?}")))
}

/// Reads a binary PGM (P5) with 8- or 16-bit samples, scaled to `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Raster> {
    let f = std::fs::File::open(path)?;
    read_pgm_from(&mut BufReader::new(f))
}

pub fn read_pgm_from<R: BufRead>(r: &mut R) -> Result<Raster> {
    let magic = read_token(r)?;
    if magic != "P5" {
        return Err(Error::Format(format!("not a binary PGM (magic {magic:?})")));
    }
    let w = header_usize(r, "width")?;
    let h = header_usize(r, "height")?;
    let maxval = header_usize(r, "maxval")?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("invalid PGM header {w}x{h} max {maxval}")));
    }
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let mut buf = vec![0u8; w * h * bytes_per];
    r.read_exact(&mut buf).map_err(|_| Error::Format("truncated PGM pixel data".into()))?;
    let scale = 1.0 / maxval as f32;
    let data = if bytes_per == 1 {
        buf.iter().map(|&v| v as f32 * scale).collect()
    } else {
        buf.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 * scale).collect()
    };
    Raster::from_vec(w, h, 1, data)
}

/// Writes channel 0 as a 16-bit binary PGM, clamping to `[0, 1]`.
pub fn write_pgm16(path: impl AsRef<Path>, img: &Raster) -> Result<()> {
    let mut out = Vec::with_capacity(img.plane_len() * 2 + 32);
    write!(out, "P5\n{} {}\n65535\n", img.width, img.height)?;
    for v in img.channel(0) {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a single-channel little-endian PFM (`Pf`, scale -1), rows stored
/// bottom-up. Invalid samples should already be NaN.
pub fn write_pfm(path: impl AsRef<Path>, width: usize, height: usize, values: &[f32]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::ShapeMismatch("PFM payload size".into()));
    }
    let mut out = Vec::with_capacity(values.len() * 4 + 32);
    write!(out, "Pf\n{width} {height}\n-1.0\n")?;
    for y in (0..height).rev() {
        for v in &values[y * width..(y + 1) * width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a single-channel PFM into top-down row order.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    let f = std::fs::File::open(path)?;
    let mut r = BufReader::new(f);
    let magic = read_token(&mut r)?;
    if magic != "Pf" {
        return Err(Error::Format(format!("not a greyscale PFM (magic {magic:?})")));
    }
    let w = header_usize(&mut r, "width")?;
    let h = header_usize(&mut r, "height")?;
    let scale: f64 = read_token(&mut r)?.parse().map_err(|_| Error::Format("bad PFM scale".into()))?;
    let little = scale < 0.0;
    let mut buf = vec![0u8; w * h * 4];
    r.read_exact(&mut buf).map_err(|_| Error::Format("truncated PFM data".into()))?;
    let mut values = vec![0.0f32; w * h];
    for (i, b) in buf.chunks_exact(4).enumerate() {
        let arr = [b[0], b[1], b[2], b[3]];
        let v = if little { f32::from_le_bytes(arr) } else { f32::from_be_bytes(arr) };
        let (row, col) = (i / w, i % w);
        values[(h - 1 - row) * w + col] = v;
    }
    Ok((w, h, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_on_linear_field_is_exact() {
        let img = Raster::from_fn(8, 6, |x, y| x as f32 + 10.0 * y as f32);
        let v = img.sample_bilinear(2.5, 3.25, 0).unwrap();
        assert!((v - (2.5 + 32.5)).abs() < 1e-5);
        assert_eq!(img.sample_bilinear(7.0, 5.0, 0), Some(57.0));
        assert_eq!(img.sample_bilinear(7.0001, 1.0, 0), None);
        assert_eq!(img.sample_bilinear(-0.0001, 1.0, 0), None);
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = Raster::from_fn(4, 4, |x, y| (x + 4 * y) as f32);
        let d = img.downsample(2);
        assert_eq!(d.data, vec![2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn pgm_round_trip_and_corrupt_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let img = Raster::from_fn(5, 3, |x, y| (x + y) as f32 / 10.0);
        write_pgm16(&p, &img).unwrap();
        let back = read_pgm(&p).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-4);
        }
        let bad = dir.path().join("b.pgm");
        std::fs::write(&bad, b"P5\nfoo 3\n255\n").unwrap();
        assert!(matches!(read_pgm(&bad), Err(Error::Format(_))));
        std::fs::write(&bad, b"P5\n4 4\n255\n\x01\x02").unwrap();
        assert!(matches!(read_pgm(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn pgm_8bit_with_comment() {
        let mut bytes = b"P5\n# comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = read_pgm_from(&mut &bytes[..]).unwrap();
        assert_eq!(img.data, vec![0.0, 1.0]);
    }

    #[test]
    fn pfm_round_trip_bottom_up() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.pfm");
        let vals = vec![1.0, 2.0, 3.0, f32::NAN, 5.0, 6.0];
        write_pfm(&p, 3, 2, &vals).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"Pf\n3 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        // first stored row is the bottom one
        assert_eq!(&bytes[header.len()..header.len() + 4], &f32::NAN.to_le_bytes());
        let (w, h, back) = read_pfm(&p).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back[..3], vals[..3]);
        assert!(back[3].is_nan());
    }
}
