//! Ground-truth matches from known poses, the coarse and fine losses, and
//! the training loop.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder2d::patch_index;
use crate::geometry::{project, CameraIntrinsics, Pose, Vec3};
use crate::imaging::Image;
use crate::matching::{fine_forward, FineOutput, ScoreMatrix};
use crate::model::{ModelConfig, ModelError};
use crate::network::{forward, PreparedScene};
use crate::scalar::Real;
use crate::tensor::{AdamConfig, ModelParams, ParamsError, Tensor};

/// Floor on the heatmap variance used as the fine-loss weight.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Floor on `S` before the logarithm.
pub const SCORE_FLOOR: f64 = 1e-12;

/// Coarse associations and fine targets of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub n_patches: usize,
    pub n_points: usize,
    /// `(patch i, point j)` for every visible point, ascending in `j`.
    pub pairs: Vec<(usize, usize)>,
    /// Exact projected pixel of each visible point.
    pub fine_targets: BTreeMap<usize, [f64; 2]>,
    pub visible: Vec<bool>,
}

impl GroundTruth {
    /// Dense row-major `n_patches x n_points` binary matrix.
    pub fn dense(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_patches * self.n_points];
        for &(i, j) in &self.pairs {
            m[i * self.n_points + j] = true;
        }
        m
    }
}

/// Projects `points` with the ground-truth pose; points behind the camera or
/// outside the image are not visible. No occlusion test.
pub fn gt_matches(points: &[[f64; 3]], pose: &Pose, k: &CameraIntrinsics) -> GroundTruth {
    let n_patches = (k.width / 8) * (k.height / 8);
    let mut pairs = Vec::new();
    let mut fine_targets = BTreeMap::new();
    let mut visible = vec![false; points.len()];
    for (j, p) in points.iter().enumerate() {
        let Some(pr) = project(&Vec3::new(p[0], p[1], p[2]), pose, k) else { continue };
        let Some(i) = patch_index(pr.pixel.x, pr.pixel.y, k.width, k.height) else { continue };
        pairs.push((i, j));
        fine_targets.insert(j, [pr.pixel.x, pr.pixel.y]);
        visible[j] = true;
    }
    GroundTruth {
        n_patches,
        n_points: points.len(),
        pairs,
        fine_targets,
        visible,
    }
}

/// `-mean log S(i, j)` over ground-truth entries; `None` when there are none.
pub fn coarse_loss<T: Real>(s: &Tensor<T>, gt: &GroundTruth) -> Result<Option<Tensor<T>>, ModelError> {
    if gt.pairs.is_empty() {
        return Ok(None);
    }
    let cols = s.shape()[1];
    let idx: Vec<usize> = gt.pairs.iter().map(|&(i, j)| i * cols + j).collect();
    Ok(Some(s.gather_flat(&idx)?.clamp_min(SCORE_FLOOR).log().mean().neg()))
}

/// `mean(|x_pred - x_gt| / max(var, floor))` with the weight held constant.
/// Rows of `pixels` (`B x 2`) pair with `targets`; `None` for an empty batch.
pub fn fine_loss<T: Real>(pixels: &Tensor<T>, variances: &[f64], targets: &[[f64; 2]]) -> Result<Option<Tensor<T>>, ModelError> {
    let b = targets.len();
    if b == 0 {
        return Ok(None);
    }
    if pixels.shape() != [b, 2] || variances.len() != b {
        return Err(ModelError::Argument(format!(
            "fine loss: {:?} predictions, {} variances, {b} targets",
            pixels.shape(),
            variances.len()
        )));
    }
    let flat: Vec<f64> = targets.iter().flat_map(|t| [t[0], t[1]]).collect();
    let dist = pixels.sub(&Tensor::from_f64(&[b, 2], &flat))?.norm_last()?;
    let w: Vec<f64> = variances.iter().map(|v| 1.0 / v.max(VARIANCE_FLOOR)).collect();
    Ok(Some(dist.mul(&Tensor::from_f64(&[b], &w))?.mean()))
}

/// Fine loss of a fine-stage batch, pairing rows with ground-truth targets by
/// scene index; rows without a target are excluded.
pub fn fine_loss_for<T: Real>(
    out: &FineOutput<T>,
    scene_index: &[usize],
    gt: &GroundTruth,
) -> Result<Option<Tensor<T>>, ModelError> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut vars = Vec::new();
    for (r, &n) in out.kept.iter().enumerate() {
        if let Some(t) = gt.fine_targets.get(&scene_index[n]) {
            rows.push(r);
            targets.push(*t);
            vars.push(out.variances[r]);
        }
    }
    if rows.is_empty() {
        return Ok(None);
    }
    fine_loss(&out.pixels.gather_rows(&rows)?, &vars, &targets)
}

/// `L_c + L_f`. A skipped coarse term skips the sample; a skipped fine term
/// leaves `L_c`.
pub fn total_loss<T: Real>(lc: Option<Tensor<T>>, lf: Option<Tensor<T>>) -> Result<Option<Tensor<T>>, ModelError> {
    Ok(match (lc, lf) {
        (None, _) => None,
        (Some(c), None) => Some(c),
        (Some(c), Some(f)) => Some(c.add(&f)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub coarse_only: bool,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: usize::MAX,
            epochs: 100,
            seed: 0,
            adam: AdamConfig::default(),
            coarse_only: false,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

/// One training image: index of its scene, preprocessed pixels, ground-truth
/// pose and intrinsics at the encoder input size.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub scene: usize,
    pub image: Image,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub sample: usize,
    /// `None` for skipped samples.
    pub loss: Option<f64>,
    pub coarse: Option<f64>,
    pub fine: Option<f64>,
    pub gt_pairs: usize,
    pub fine_rows: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("non-finite loss at step {step} (epoch {epoch}, sample {sample}): coarse {coarse:?}, fine {fine:?}")]
    NonFinite {
        step: usize,
        epoch: usize,
        sample: usize,
        coarse: Option<f64>,
        fine: Option<f64>,
    },
    #[error("no training samples")]
    Empty,
}

/// Terms of the loss of one sample, with the graph attached.
pub struct SampleLoss<T: Real> {
    pub total: Option<Tensor<T>>,
    pub coarse: Option<Tensor<T>>,
    pub fine: Option<Tensor<T>>,
    pub score: ScoreMatrix<T>,
    pub gt: GroundTruth,
    pub fine_rows: usize,
}

/// Forward pass and losses for one image. The fine stage is teacher-forced
/// on the ground-truth coarse pairs.
pub fn sample_loss<T: Real>(
    scene: &PreparedScene,
    sample: &TrainingSample,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
    coarse_only: bool,
) -> Result<SampleLoss<T>, ModelError> {
    let out = forward(scene, &sample.image, p, cfg)?;
    let score = crate::matching::score_matrix(&out.aligned, p, cfg.tau)?;
    let gt = gt_matches(&out.aligned.scene_points, &sample.pose, &sample.intrinsics);
    let coarse = coarse_loss(&score.s, &gt)?;
    let mut fine = None;
    let mut fine_rows = 0;
    if !coarse_only && !gt.pairs.is_empty() {
        let idx: Vec<usize> = gt.pairs.iter().map(|&(_, j)| j).collect();
        if let Some(fo) = fine_forward(&gt.pairs, &out.image, &out.aligned.scene, p, cfg)? {
            fine_rows = fo.kept.len();
            fine = fine_loss_for(&fo, &idx, &gt)?;
        }
    }
    let total = total_loss(coarse.clone(), fine.clone())?;
    Ok(SampleLoss {
        total,
        coarse,
        fine,
        score,
        gt,
        fine_rows,
    })
}

/// Epoch-shuffled, seeded Adam training with batch size 1. `on_step` sees
/// every log entry as it is produced.
pub fn train<T: Real>(
    scenes: &[PreparedScene],
    samples: &[TrainingSample],
    p: &mut ModelParams<T>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<Vec<StepLog>, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut log = Vec::new();
    let mut step = 0;
    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        for &n in &order {
            if step >= cfg.max_steps {
                break 'epochs;
            }
            step += 1;
            let s = &samples[n];
            let l = sample_loss(&scenes[s.scene], s, p, model_cfg, cfg.coarse_only)?;
            let item = |t: &Option<Tensor<T>>| t.as_ref().map(|t| t.item().as_f64());
            let entry = StepLog {
                step,
                epoch,
                sample: n,
                loss: item(&l.total),
                coarse: item(&l.coarse),
                fine: item(&l.fine),
                gt_pairs: l.gt.pairs.len(),
                fine_rows: l.fine_rows,
            };
            if let Some(total) = &l.total {
                if !entry.loss.is_some_and(f64::is_finite) {
                    return Err(TrainError::NonFinite {
                        step,
                        epoch,
                        sample: n,
                        coarse: entry.coarse,
                        fine: entry.fine,
                    });
                }
                p.backward(total).map_err(ModelError::from)?;
                p.adam_step(&cfg.adam)?;
            }
            on_step(&entry);
            log.push(entry);
        }
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            if let Some(dir) = &cfg.checkpoint_dir {
                p.save(&dir.join(format!("checkpoint_epoch{:04}.params", epoch + 1)))?;
            }
        }
    }
    Ok(log)
}
