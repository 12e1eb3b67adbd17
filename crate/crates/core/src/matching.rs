//! Coarse 3D-to-patch matching (shared-space cosine similarity, dual-softmax,
//! mutual nearest neighbors, threshold) and coarse-to-fine subpixel
//! refinement by heatmap expectation over a local fine window.

use std::io::Write;

use rand::Rng;

use crate::alignment::AlignedFeatures;
use crate::encoder2d::{fine_center, ImageEncoding, FINE_STRIDE, PATCH};
use crate::geometry::{Vec2, Vec3};
use crate::model::{ModelConfig, ModelError};
use crate::nn::{attention_block, init_attention, init_linear, linear};
use crate::pnp::Correspondence;
use crate::scalar::Real;
use crate::tensor::{ModelParams, Tensor};

pub fn init<T: Real>(p: &mut ModelParams<T>, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<(), ModelError> {
    init_linear(p, "match.proj_scene", cfg.c_coarse, cfg.c_coarse, rng)?;
    init_linear(p, "match.proj_image", cfg.c_coarse, cfg.c_coarse, rng)?;
    init_attention(p, "fine.self", cfg.c_fine, cfg.ff_mult, rng)?;
    init_linear(p, "fine.scene_proj", cfg.c_coarse, cfg.c_fine, rng)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScoreMatrix<T: Real> {
    /// `N_c x N_s` dual-softmax probabilities.
    pub s: Tensor<T>,
    /// `N_c x N_s` cosine similarities.
    pub raw: Tensor<T>,
    pub row_softmax: Tensor<T>,
    pub col_softmax: Tensor<T>,
}

impl<T: Real> ScoreMatrix<T> {
    pub fn dims(&self) -> (usize, usize) {
        (self.s.shape()[0], self.s.shape()[1])
    }
}

/// `S = softmax_row(raw / tau) * softmax_col(raw / tau)`.
pub fn dual_softmax<T: Real>(raw: &Tensor<T>, tau: f64) -> Result<ScoreMatrix<T>, ModelError> {
    let z = raw.mul_scalar(1.0 / tau);
    let row = z.softmax(1)?;
    let col = z.softmax(0)?;
    Ok(ScoreMatrix {
        s: row.mul(&col)?,
        raw: raw.clone(),
        row_softmax: row,
        col_softmax: col,
    })
}

/// Cosine similarities of the shared-space projections of both streams.
pub fn score_matrix<T: Real>(aligned: &AlignedFeatures<T>, p: &ModelParams<T>, tau: f64) -> Result<ScoreMatrix<T>, ModelError> {
    let fi = linear(&aligned.image, p, "match.proj_image")?.normalize_last()?;
    let fs = linear(&aligned.scene, p, "match.proj_scene")?.normalize_last()?;
    dual_softmax(&fi.matmul(&fs.transpose()?)?, tau)
}

/// Mutual argmax pairs `(i, j, S(i, j))` with `S(i, j) >= theta` of a
/// row-major `rows x cols` matrix. Ties resolve to the lowest index.
pub fn mutual_matches(s: &[f64], rows: usize, cols: usize, theta: f64) -> Vec<(usize, usize, f64)> {
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let mut col_best = vec![0usize; cols];
    for j in 0..cols {
        for i in 1..rows {
            if s[i * cols + j] > s[col_best[j] * cols + j] {
                col_best[j] = i;
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..rows {
        let row = &s[i * cols..(i + 1) * cols];
        let mut j = 0;
        for k in 1..cols {
            if row[k] > row[j] {
                j = k;
            }
        }
        if col_best[j] == i && row[j] >= theta {
            out.push((i, j, row[j]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMatch {
    pub patch_index: usize,
    pub scene_index: usize,
    pub score: f64,
    pub patch_center: [f64; 2],
    pub scene_point: [f64; 3],
}

pub fn coarse_match<T: Real>(
    aligned: &AlignedFeatures<T>,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<(ScoreMatrix<T>, Vec<CoarseMatch>), ModelError> {
    let sm = score_matrix(aligned, p, cfg.tau)?;
    let (rows, cols) = sm.dims();
    let matches = mutual_matches(&sm.s.to_f64_vec(), rows, cols, cfg.theta_c)
        .into_iter()
        .map(|(i, j, score)| CoarseMatch {
            patch_index: i,
            scene_index: j,
            score,
            patch_center: aligned.patch_centers[i],
            scene_point: aligned.scene_points[j],
        })
        .collect();
    Ok((sm, matches))
}

/// Flat fine-grid indices (row-major window order) and pixel centers of the
/// `w x w` window around coarse patch `index`, or `None` if it leaves the grid.
/// Patch `(r, c)` is centered on fine cell `(4r + 1, 4c + 1)`.
pub fn window_cells(index: usize, width: usize, height: usize, w: usize) -> Option<(Vec<usize>, Vec<[f64; 2]>)> {
    let ratio = PATCH / FINE_STRIDE;
    let (cols, fw, fh) = (width / PATCH, width / FINE_STRIDE, height / FINE_STRIDE);
    let (r, c) = (index / cols, index % cols);
    let (cy, cx) = ((ratio * r + 1) as isize, (ratio * c + 1) as isize);
    let half = (w / 2) as isize;
    if cy - half < 0 || cx - half < 0 || cy + half >= fh as isize || cx + half >= fw as isize {
        return None;
    }
    let mut idx = Vec::with_capacity(w * w);
    let mut px = Vec::with_capacity(w * w);
    for y in (cy - half)..=(cy + half) {
        for x in (cx - half)..=(cx + half) {
            idx.push(y as usize * fw + x as usize);
            px.push([fine_center(x as usize), fine_center(y as usize)]);
        }
    }
    Some((idx, px))
}

/// Expectation and total variance of positions under a heatmap.
pub fn expectation(heat: &[f64], cells: &[[f64; 2]]) -> ([f64; 2], f64) {
    let mut m = [0.0; 2];
    for (h, c) in heat.iter().zip(cells) {
        m[0] += h * c[0];
        m[1] += h * c[1];
    }
    let var = heat
        .iter()
        .zip(cells)
        .map(|(h, c)| h * ((c[0] - m[0]).powi(2) + (c[1] - m[1]).powi(2)))
        .sum();
    (m, var)
}

/// Differentiable fine-stage output for a batch of (patch, scene row) pairs.
#[derive(Debug, Clone)]
pub struct FineOutput<T: Real> {
    /// `B x 2` expected pixels.
    pub pixels: Tensor<T>,
    /// `B x w^2` heatmaps.
    pub heatmaps: Tensor<T>,
    /// Total variance per row, detached.
    pub variances: Vec<f64>,
    pub cells: Vec<Vec<[f64; 2]>>,
    /// Indices into the input pairs that had an in-bounds window.
    pub kept: Vec<usize>,
    pub dropped: usize,
}

/// Heatmap over each window from the scaled dot products between the
/// window tokens (after per-window self-attention) and the projected scene
/// feature, and its expectation.
pub fn fine_forward<T: Real>(
    pairs: &[(usize, usize)],
    enc: &ImageEncoding<T>,
    scene: &Tensor<T>,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<Option<FineOutput<T>>, ModelError> {
    let w2 = cfg.window * cfg.window;
    let mut kept = Vec::new();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut scene_rows = Vec::new();
    for (n, &(patch, j)) in pairs.iter().enumerate() {
        if let Some((idx, px)) = window_cells(patch, enc.width, enc.height, cfg.window) {
            kept.push(n);
            rows.extend(idx);
            cells.push(px);
            scene_rows.push(j);
        }
    }
    let dropped = pairs.len() - kept.len();
    if kept.is_empty() {
        return Ok(None);
    }
    let b = kept.len();
    let cf = cfg.c_fine;
    let win = enc.fine.gather_rows(&rows)?.reshape(&[b, w2, cf])?;
    let win = attention_block(&win, &win, p, "fine.self", cfg.heads)?;
    let sf = linear(&scene.gather_rows(&scene_rows)?, p, "fine.scene_proj")?.reshape(&[b, cf, 1])?;
    let logits = win.matmul(&sf)?.reshape(&[b, w2])?.mul_scalar(1.0 / (cf as f64).sqrt());
    let heat = logits.softmax(1)?;
    let flat: Vec<f64> = cells.iter().flatten().flat_map(|c| [c[0], c[1]]).collect();
    let pos = Tensor::from_f64(&[b, w2, 2], &flat);
    let pixels = heat.reshape(&[b, 1, w2])?.matmul(&pos)?.reshape(&[b, 2])?;
    let hv = heat.to_f64_vec();
    let variances = hv.chunks(w2).zip(&cells).map(|(h, c)| expectation(h, c).1).collect();
    Ok(Some(FineOutput {
        pixels,
        heatmaps: heat,
        variances,
        cells,
        kept,
        dropped,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineMatch {
    pub scene_index: usize,
    pub scene_point: [f64; 3],
    pub pixel: [f64; 2],
    pub variance: f64,
    pub score: f64,
    pub heatmap: Vec<f64>,
}

/// Refines coarse matches; returns the fine matches and the number dropped
/// for windows leaving the fine grid.
pub fn fine_match<T: Real>(
    coarse: &[CoarseMatch],
    enc: &ImageEncoding<T>,
    aligned: &AlignedFeatures<T>,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<(Vec<FineMatch>, usize), ModelError> {
    let pairs: Vec<(usize, usize)> = coarse.iter().map(|m| (m.patch_index, m.scene_index)).collect();
    let Some(out) = fine_forward(&pairs, enc, &aligned.scene, p, cfg)? else {
        return Ok((Vec::new(), pairs.len()));
    };
    let w2 = cfg.window * cfg.window;
    let px = out.pixels.to_f64_vec();
    let heat = out.heatmaps.to_f64_vec();
    let matches = out
        .kept
        .iter()
        .enumerate()
        .map(|(r, &n)| {
            let m = &coarse[n];
            FineMatch {
                scene_index: m.scene_index,
                scene_point: m.scene_point,
                pixel: [px[2 * r], px[2 * r + 1]],
                variance: out.variances[r],
                score: m.score,
                heatmap: heat[r * w2..(r + 1) * w2].to_vec(),
            }
        })
        .collect();
    Ok((matches, out.dropped))
}

pub fn matches_to_correspondences(fine: &[FineMatch]) -> Vec<Correspondence> {
    fine.iter()
        .map(|m| {
            Correspondence::new(
                Vec3::new(m.scene_point[0], m.scene_point[1], m.scene_point[2]),
                Vec2::new(m.pixel[0], m.pixel[1]),
            )
        })
        .collect()
}

/// CSV dump with header `j,X,Y,Z,u,v,score,var`.
pub fn write_matches_csv(out: &mut impl Write, fine: &[FineMatch]) -> std::io::Result<()> {
    writeln!(out, "j,X,Y,Z,u,v,score,var")?;
    for m in fine {
        let [x, y, z] = m.scene_point;
        writeln!(
            out,
            "{},{x},{y},{z},{},{},{},{}",
            m.scene_index, m.pixel[0], m.pixel[1], m.score, m.variance
        )?;
    }
    Ok(())
}
