//! Forward EWA splatting of a Gaussian scene into color, expected depth and
//! accumulated alpha.
//!
//! Conventions follow the reference 3DGS rasterizer: 0.3 px screen-space
//! dilation, a 3σ screen-space footprint, per-splat alpha clamped to 0.99 and
//! splats with alpha below 1/255 skipped. Compositing runs over the full
//! depth-sorted list without early termination, so every pixel's result
//! depends only on the splats whose footprint covers it and tiling cannot
//! change it.

use nalgebra::{Matrix2x3, Matrix3};
use rayon::prelude::*;

use crate::geometry::{CameraIntrinsics, Pose, Vec3};
use crate::imaging::Image;
use crate::scene_io::{Gaussian, GaussianScene};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Screen-space covariance dilation, pixels².
pub const DILATION: f64 = 0.3;
/// Splats nearer than this (scene units) are culled.
pub const NEAR: f64 = 0.01;
const ALPHA_MAX: f64 = 0.99;
const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const DEFAULT_TILE: usize = 16;

/// Degree-3 SH radiance in direction `dir` (unit), shifted by 0.5 and clamped to `[0, 1]`.
pub fn eval_sh(g: &Gaussian, dir: &Vec3) -> [f64; 3] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let basis = [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * xy,
        SH_C2[1] * yz,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * xz,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * xy * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ];
    std::array::from_fn(|c| {
        let v: f64 = basis.iter().enumerate().map(|(k, b)| b * g.sh_coeff(c, k)).sum();
        (v + 0.5).clamp(0.0, 1.0)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: Image,
    /// Alpha-weighted expected depth; 0 where nothing was composited.
    pub depth: Image,
    pub alpha: Image,
    /// Splats dropped for a numerically singular screen covariance.
    pub skipped_singular: usize,
}

impl RenderOutput {
    pub fn coverage(&self, floor: f64) -> f64 {
        let n = self.alpha.data.len().max(1);
        self.alpha.data.iter().filter(|&&a| a >= floor).count() as f64 / n as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Splat {
    mean: [f64; 2],
    /// Inverse screen covariance `(a, b, c)` for `[[a, b], [b, c]]`.
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    depth: f64,
    /// Inclusive pixel footprint.
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// World covariance `R diag(s)² Rᵀ`.
pub fn world_covariance(g: &Gaussian) -> Matrix3<f64> {
    let r = quat_to_matrix(g.unit_rotation());
    let s = g.scale();
    let m = r * Matrix3::from_diagonal(&Vec3::new(s[0], s[1], s[2]));
    m * m.transpose()
}

fn project_splats(scene: &GaussianScene, pose: &Pose, k: &CameraIntrinsics) -> (Vec<Splat>, usize) {
    let w = pose.rotation_matrix();
    let center = pose.center();
    let (wf, hf) = (k.width as f64, k.height as f64);
    let mut skipped = 0;
    let mut splats: Vec<(f64, usize, Splat)> = Vec::new();
    for (idx, g) in scene.gaussians.iter().enumerate() {
        let mu = Vec3::from(g.position);
        let t = pose.transform(&mu);
        if t.z <= NEAR {
            continue;
        }
        let j = Matrix2x3::new(
            k.fx / t.z,
            0.0,
            -k.fx * t.x / (t.z * t.z),
            0.0,
            k.fy / t.z,
            -k.fy * t.y / (t.z * t.z),
        );
        let jw = j * w;
        let cov = jw * world_covariance(g) * jw.transpose();
        let (a, b, c) = (cov[(0, 0)] + DILATION, cov[(0, 1)], cov[(1, 1)] + DILATION);
        let det = a * c - b * b;
        if !(det > 1e-12) || !det.is_finite() {
            skipped += 1;
            continue;
        }
        let conic = [c / det, -b / det, a / det];
        let mid = 0.5 * (a + c);
        let lambda = mid + (mid * mid - det).max(0.1).sqrt();
        let radius = (3.0 * lambda.sqrt()).ceil();
        let mean = [k.fx * t.x / t.z + k.cx, k.fy * t.y / t.z + k.cy];
        let (lx, hx) = (mean[0] - radius, mean[0] + radius);
        let (ly, hy) = (mean[1] - radius, mean[1] + radius);
        if hx < 0.0 || hy < 0.0 || lx > wf - 1.0 || ly > hf - 1.0 {
            continue;
        }
        let dir = (mu - center).normalize();
        splats.push((
            t.z,
            idx,
            Splat {
                mean,
                conic,
                opacity: g.opacity(),
                color: eval_sh(g, &dir),
                depth: t.z,
                x0: lx.max(0.0).ceil() as usize,
                x1: hx.min(wf - 1.0).floor() as usize,
                y0: ly.max(0.0).ceil() as usize,
                y1: hy.min(hf - 1.0).floor() as usize,
            },
        ));
    }
    splats.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    (splats.into_iter().map(|s| s.2).collect(), skipped)
}

struct TileResult {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    color: Vec<f64>,
    depth: Vec<f64>,
    alpha: Vec<f64>,
}

fn render_tile(splats: &[Splat], x0: usize, y0: usize, w: usize, h: usize) -> TileResult {
    let (x1, y1) = (x0 + w - 1, y0 + h - 1);
    let local: Vec<&Splat> = splats
        .iter()
        .filter(|s| s.x1 >= x0 && s.x0 <= x1 && s.y1 >= y0 && s.y0 <= y1)
        .collect();
    let mut color = vec![0.0; w * h * 3];
    let mut depth = vec![0.0; w * h];
    let mut alpha = vec![0.0; w * h];
    for py in y0..=y1 {
        for px in x0..=x1 {
            let mut t = 1.0;
            let mut rgb = [0.0; 3];
            let mut dacc = 0.0;
            let mut wacc = 0.0;
            for s in &local {
                if px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1 {
                    continue;
                }
                let dx = px as f64 - s.mean[0];
                let dy = py as f64 - s.mean[1];
                let power = -0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
                if power > 0.0 {
                    continue;
                }
                let a = (s.opacity * power.exp()).min(ALPHA_MAX);
                if a < ALPHA_MIN {
                    continue;
                }
                let wgt = a * t;
                for c in 0..3 {
                    rgb[c] += s.color[c] * wgt;
                }
                dacc += s.depth * wgt;
                wacc += wgt;
                t *= 1.0 - a;
            }
            let i = (py - y0) * w + (px - x0);
            color[i * 3..i * 3 + 3].copy_from_slice(&rgb);
            alpha[i] = 1.0 - t;
            depth[i] = if wacc > 1e-12 { dacc / wacc } else { 0.0 };
        }
    }
    TileResult {
        x0,
        y0,
        w,
        h,
        color,
        depth,
        alpha,
    }
}

/// Renders at the image size given by `k`. Background is black.
pub fn render(scene: &GaussianScene, pose: &Pose, k: &CameraIntrinsics) -> RenderOutput {
    let (splats, skipped) = project_splats(scene, pose, k);
    assemble(k, skipped, vec![render_tile(&splats, 0, 0, k.width, k.height)])
}

/// Same contract as [`render`], with square tiles rendered in parallel.
pub fn render_tiled(scene: &GaussianScene, pose: &Pose, k: &CameraIntrinsics, tile: usize) -> RenderOutput {
    let tile = tile.max(1);
    let (splats, skipped) = project_splats(scene, pose, k);
    let mut origins = Vec::new();
    for ty in (0..k.height).step_by(tile) {
        for tx in (0..k.width).step_by(tile) {
            origins.push((tx, ty));
        }
    }
    let tiles: Vec<TileResult> = origins
        .par_iter()
        .map(|&(tx, ty)| render_tile(&splats, tx, ty, tile.min(k.width - tx), tile.min(k.height - ty)))
        .collect();
    assemble(k, skipped, tiles)
}

fn assemble(k: &CameraIntrinsics, skipped: usize, tiles: Vec<TileResult>) -> RenderOutput {
    let mut color = Image::new(k.width, k.height, 3);
    let mut depth = Image::new(k.width, k.height, 1);
    let mut alpha = Image::new(k.width, k.height, 1);
    for t in tiles {
        for y in 0..t.h {
            for x in 0..t.w {
                let i = y * t.w + x;
                let (gx, gy) = (t.x0 + x, t.y0 + y);
                for c in 0..3 {
                    color.set(gx, gy, c, t.color[i * 3 + c]);
                }
                depth.set(gx, gy, 0, t.depth[i]);
                alpha.set(gx, gy, 0, t.alpha[i]);
            }
        }
    }
    RenderOutput {
        color,
        depth,
        alpha,
        skipped_singular: skipped,
    }
}
