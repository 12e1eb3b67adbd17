//! Float images, PNG/PPM ingestion, 16-bit PGM depth export and bilinear resizing.

use std::io::Write;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("image is empty")]
    Empty,
    #[error("decode error: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major interleaved float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self { width, height, channels, data }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        Image::from_fn(self.width, self.height, 1, |x, y, _| {
            (0..self.channels).map(|c| self.at(x, y, c)).sum::<f64>() / self.channels as f64
        })
    }

    /// Bilinear resize with half-pixel centers: destination pixel `x` samples
    /// source coordinate `(x + 0.5) * sw / dw - 0.5`, clamped to the border.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Image, ImageError> {
        if self.is_empty() || width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let coord = |d: usize, s: f64, n: usize| {
            let v = ((d as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = v.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, v - i0 as f64)
        };
        let mut out = Image::new(width, height, self.channels);
        for y in 0..height {
            let (y0, y1, fy) = coord(y, sy, self.height);
            for x in 0..width {
                let (x0, x1, fx) = coord(x, sx, self.width);
                for c in 0..self.channels {
                    let top = self.at(x0, y0, c) * (1.0 - fx) + self.at(x1, y0, c) * fx;
                    let bot = self.at(x0, y1, c) * (1.0 - fx) + self.at(x1, y1, c) * fx;
                    out.set(x, y, c, top * (1.0 - fy) + bot * fy);
                }
            }
        }
        Ok(out)
    }

    /// Reads an 8-bit PNG or PPM as RGB in `[0, 1]`.
    pub fn load_rgb(path: &Path) -> Result<Image, ImageError> {
        let img = image::open(path).map_err(|e| ImageError::Decode(e.to_string()))?.to_rgb8();
        let (w, h) = img.dimensions();
        if w == 0 || h == 0 {
            return Err(ImageError::Empty);
        }
        Ok(Image {
            width: w as usize,
            height: h as usize,
            channels: 3,
            data: img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        })
    }

    /// Quantizes `[0, 1]` values to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    /// Writes a 1- or 3-channel image as 8-bit PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let ct = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            n => return Err(ImageError::Decode(format!("cannot save {n}-channel image"))),
        };
        image::save_buffer(path, &self.to_u8(), self.width as u32, self.height as u32, ct)
            .map_err(|e| ImageError::Decode(e.to_string()))
    }

    /// Quantized 8-bit round trip, as an image would be after saving to PNG.
    pub fn quantized(&self) -> Image {
        Image {
            data: self.to_u8().into_iter().map(|v| v as f64 / 255.0).collect(),
            ..self.clone()
        }
    }
}

/// Writes a single-channel map as a 16-bit binary PGM, storing
/// `round(value * scale)`; returns `scale` (chosen so the maximum maps to 65535).
pub fn save_depth_pgm(depth: &Image, path: &Path) -> Result<f64, ImageError> {
    let max = depth.data.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 1.0 };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{} {}\n65535\n", depth.width, depth.height)?;
    for v in &depth.data {
        let q = (v.max(0.0) * scale).round().min(65535.0) as u16;
        f.write_all(&q.to_be_bytes())?;
    }
    f.flush()?;
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_constant_image_stays_constant() {
        let img = Image::from_fn(96, 96, 3, |_, _, c| 0.25 + 0.1 * c as f64);
        let r = img.resize_bilinear(48, 48).unwrap();
        for y in 0..48 {
            for x in 0..48 {
                for c in 0..3 {
                    assert!((r.at(x, y, c) - (0.25 + 0.1 * c as f64)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn checkerboard_upsample_matches_closed_form() {
        // 2x2 source [[0,1],[1,0]] upsampled to 4x4. Source coordinates of the
        // destination columns are -0.25, 0.25, 0.75, 1.25 → clamped weights
        // for the second source column: 0, 0.25, 0.75, 1.
        let src = Image::from_fn(2, 2, 1, |x, y, _| ((x + y) % 2) as f64);
        let r = src.resize_bilinear(4, 4).unwrap();
        let w = [0.0, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                let (wx, wy) = (w[x], w[y]);
                let v = (1.0 - wx) * (1.0 - wy) * 0.0 + wx * (1.0 - wy) * 1.0 + (1.0 - wx) * wy * 1.0 + wx * wy * 0.0;
                assert!((r.at(x, y, 0) - v).abs() < 1e-15, "({x},{y})");
            }
        }
    }

    #[test]
    fn empty_resize_fails() {
        assert!(Image::new(0, 4, 3).resize_bilinear(4, 4).is_err());
        assert!(Image::new(4, 4, 3).resize_bilinear(0, 4).is_err());
    }

    #[test]
    fn png_round_trip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = Image::from_fn(5, 4, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0);
        img.save_png(&p).unwrap();
        let back = Image::load_rgb(&p).unwrap();
        assert_eq!(back, img.quantized());
    }

    #[test]
    fn pgm_header_and_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pgm");
        let d = Image::from_fn(3, 2, 1, |x, _, _| x as f64);
        let s = save_depth_pgm(&d, &p).unwrap();
        assert_eq!(s, 65535.0 / 2.0);
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n65535\n"));
        assert_eq!(bytes.len(), 13 + 12);
    }
}
