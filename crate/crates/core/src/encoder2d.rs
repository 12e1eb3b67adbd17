//! Convolutional image encoder producing coarse features at 1/8 resolution
//! and fine features at 1/2 resolution.
//!
//! Four residual blocks; blocks 1 to 3 halve the resolution and block 4 keeps
//! it. The fine head taps block 1 and the coarse head taps block 4. Feature
//! rows are row-major over the downsampled grid.

use rand::Rng;

use crate::imaging::Image;
use crate::model::{ModelConfig, ModelError};
use crate::scalar::Real;
use crate::tensor::{ModelParams, Tensor};

/// Coarse patch side in pixels.
pub const PATCH: usize = 8;
/// Fine cell side in pixels.
pub const FINE_STRIDE: usize = 2;
const STRIDES: [usize; 4] = [2, 2, 2, 1];

/// Pixel center of coarse patch `index` on an image `width` pixels wide.
pub fn patch_center(index: usize, width: usize) -> [f64; 2] {
    let cols = width / PATCH;
    let (r, c) = (index / cols, index % cols);
    [(PATCH * c) as f64 + 3.5, (PATCH * r) as f64 + 3.5]
}

/// Patch containing pixel `(u, v)` (half-open cells), if inside the patch
/// grid. The partial strip of a size that is not a multiple of 8 has none.
pub fn patch_index(u: f64, v: f64, width: usize, height: usize) -> Option<usize> {
    let (gw, gh) = ((width / PATCH * PATCH) as f64, (height / PATCH * PATCH) as f64);
    if !(u >= 0.0 && v >= 0.0 && u < gw && v < gh) {
        return None;
    }
    let (c, r) = ((u / PATCH as f64).floor() as usize, (v / PATCH as f64).floor() as usize);
    Some(r * (width / PATCH) + c)
}

/// Pixel coordinate of the center of fine cell `c` along one axis.
pub fn fine_center(c: usize) -> f64 {
    (FINE_STRIDE * c) as f64 + 0.5
}

#[derive(Debug, Clone)]
pub struct ImageEncoding<T: Real> {
    /// `(H/8 * W/8) x C_c`.
    pub coarse: Tensor<T>,
    /// `(H/2 * W/2) x C_f`.
    pub fine: Tensor<T>,
    pub height: usize,
    pub width: usize,
}

impl<T: Real> ImageEncoding<T> {
    pub fn coarse_dims(&self) -> (usize, usize) {
        (self.height / PATCH, self.width / PATCH)
    }

    pub fn fine_dims(&self) -> (usize, usize) {
        (self.height / FINE_STRIDE, self.width / FINE_STRIDE)
    }
}

/// Resizes to `input_size` squared and applies per-channel mean/std normalization.
pub fn preprocess(image: &Image, cfg: &ModelConfig) -> Result<Image, ModelError> {
    if image.channels != 3 {
        return Err(ModelError::Argument(format!("expected RGB, got {} channels", image.channels)));
    }
    let mut r = image
        .resize_bilinear(cfg.input_size, cfg.input_size)
        .map_err(|e| ModelError::Argument(e.to_string()))?;
    for px in r.data.chunks_mut(3) {
        for c in 0..3 {
            px[c] = (px[c] - cfg.image_mean[c]) / cfg.image_std[c];
        }
    }
    Ok(r)
}

fn init_conv<T: Real>(
    p: &mut ModelParams<T>,
    name: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<(), ModelError> {
    let std = (2.0 / (c_in * k * k) as f64).sqrt();
    p.insert_normal(&format!("{name}.weight"), &[c_out, c_in, k, k], std, rng)?;
    p.insert_fill(&format!("{name}.bias"), &[c_out], 0.0)?;
    Ok(())
}

fn needs_skip(c_in: usize, c_out: usize, stride: usize) -> bool {
    c_in != c_out || stride != 1
}

pub fn init<T: Real>(p: &mut ModelParams<T>, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<(), ModelError> {
    let mut c_in = 3;
    for (b, (&c, &s)) in cfg.enc2d_channels.iter().zip(&STRIDES).enumerate() {
        let name = format!("enc2d.block{}", b + 1);
        init_conv(p, &format!("{name}.conv1"), c_in, c, 3, rng)?;
        init_conv(p, &format!("{name}.conv2"), c, c, 3, rng)?;
        if needs_skip(c_in, c, s) {
            init_conv(p, &format!("{name}.skip"), c_in, c, 1, rng)?;
        }
        c_in = c;
    }
    init_conv(p, "enc2d.head_fine", cfg.enc2d_channels[0], cfg.c_fine, 1, rng)?;
    init_conv(p, "enc2d.head_coarse", cfg.enc2d_channels[3], cfg.c_coarse, 1, rng)?;
    Ok(())
}

fn conv<T: Real>(x: &Tensor<T>, p: &ModelParams<T>, name: &str, stride: usize, pad: usize) -> Result<Tensor<T>, ModelError> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    Ok(x.conv2d(w, Some(b), stride, pad)?)
}

/// `[C, h, w]` to row-major `[h * w, C]`.
fn to_rows<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
    let s = x.shape().to_vec();
    Ok(x.reshape(&[s[0], s[1] * s[2]])?.transpose()?)
}

/// Encodes a preprocessed (normalized, HWC) image.
pub fn encode_image<T: Real>(image: &Image, p: &ModelParams<T>) -> Result<ImageEncoding<T>, ModelError> {
    let (h, w) = (image.height, image.width);
    if h == 0 || w == 0 || h % PATCH != 0 || w % PATCH != 0 || image.channels != 3 {
        return Err(ModelError::Argument(format!(
            "image {w}x{h}x{} must be RGB with sides divisible by {PATCH}",
            image.channels
        )));
    }
    let mut chw = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                chw[(c * h + y) * w + x] = image.at(x, y, c);
            }
        }
    }
    let mut x = Tensor::from_f64(&[3, h, w], &chw);
    let mut fine_tap = None;
    let mut c_in = 3;
    for (b, &s) in STRIDES.iter().enumerate() {
        let name = format!("enc2d.block{}", b + 1);
        let y = conv(&x, p, &format!("{name}.conv1"), s, 1)?.relu();
        let y = conv(&y, p, &format!("{name}.conv2"), 1, 1)?;
        let c_out = y.shape()[0];
        let skip = if needs_skip(c_in, c_out, s) {
            conv(&x, p, &format!("{name}.skip"), s, 0)?
        } else {
            x.clone()
        };
        x = y.add(&skip)?.relu();
        c_in = c_out;
        if b == 0 {
            fine_tap = Some(x.clone());
        }
    }
    let fine = conv(&fine_tap.expect("block 1 ran"), p, "enc2d.head_fine", 1, 0)?;
    let coarse = conv(&x, p, "enc2d.head_coarse", 1, 0)?;
    Ok(ImageEncoding {
        coarse: to_rows(&coarse)?,
        fine: to_rows(&fine)?,
        height: h,
        width: w,
    })
}
