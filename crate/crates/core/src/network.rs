//! Full matcher forward pass and the learned localization step.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alignment::{align, AlignedFeatures};
use crate::encoder2d::{encode_image, preprocess, ImageEncoding};
use crate::encoder3d::{encode_scene, ScenePyramid, SceneEncoding};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::imaging::Image;
use crate::matching::{coarse_match, fine_match, matches_to_correspondences, CoarseMatch, FineMatch};
use crate::model::{ModelConfig, ModelError};
use crate::pnp::{ransac_pnp, PnpError, RansacConfig, SolveResult};
use crate::scalar::Real;
use crate::scene_io::GaussianScene;
use crate::tensor::ModelParams;

/// Parameter-independent scene data: the downsampling pyramid and the
/// per-Gaussian input features.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub pyramid: ScenePyramid,
    pub input_features: Vec<f64>,
}

impl PreparedScene {
    /// `scene` should already be opacity-filtered and subsampled.
    pub fn new(scene: &GaussianScene, cfg: &ModelConfig) -> Result<Self, ModelError> {
        let input_features = scene
            .input_features()
            .map_err(|e| ModelError::Argument(e.to_string()))?;
        let pyramid = ScenePyramid::for_scene(&scene.positions(), cfg)?;
        Ok(Self { pyramid, input_features })
    }
}

pub struct ForwardOutput<T: Real> {
    pub scene: SceneEncoding<T>,
    pub image: ImageEncoding<T>,
    pub aligned: AlignedFeatures<T>,
}

/// Encoders plus alignment on a preprocessed image.
pub fn forward<T: Real>(
    scene: &PreparedScene,
    image: &Image,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<ForwardOutput<T>, ModelError> {
    let s = encode_scene(&scene.pyramid, &scene.input_features, p)?;
    let i = encode_image(image, p)?;
    let aligned = align(&s.features, &s.points, &i.coarse, i.width, i.height, p, cfg)?;
    Ok(ForwardOutput { scene: s, image: i, aligned })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub encode_ms: f64,
    pub match_ms: f64,
    pub pnp_ms: f64,
}

/// Matches and pose of one query, in the encoder input frame.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub coarse: Vec<CoarseMatch>,
    pub fine: Vec<FineMatch>,
    pub dropped_windows: usize,
    pub stage_trace: Vec<usize>,
    pub solve: Result<SolveResult, PnpError>,
    pub timings: StageTimings,
}

/// Intrinsics of the resized query seen by the encoder.
pub fn input_intrinsics(k: &CameraIntrinsics, cfg: &ModelConfig) -> CameraIntrinsics {
    k.resized(cfg.input_size, cfg.input_size)
}

/// Learned matching followed by robust PnP. Fine pixels live in the resized
/// frame, so PnP uses the resized intrinsics; the pose itself is unaffected.
pub fn estimate_pose<T: Real>(
    scene: &PreparedScene,
    query: &Image,
    k: &CameraIntrinsics,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
    ransac: &RansacConfig,
) -> Result<Estimate, ModelError> {
    let t0 = Instant::now();
    let img = preprocess(query, cfg)?;
    let out = forward(scene, &img, p, cfg)?;
    let t1 = Instant::now();
    let (_, coarse) = coarse_match(&out.aligned, p, cfg)?;
    let (fine, dropped_windows) = if coarse.is_empty() {
        (Vec::new(), 0)
    } else {
        fine_match(&coarse, &out.image, &out.aligned, p, cfg)?
    };
    let t2 = Instant::now();
    let corr = matches_to_correspondences(&fine);
    let solve = ransac_pnp(&corr, &input_intrinsics(k, cfg), ransac);
    let t3 = Instant::now();
    let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
    Ok(Estimate {
        coarse,
        fine,
        dropped_windows,
        stage_trace: out.scene.stage_trace,
        solve,
        timings: StageTimings {
            encode_ms: ms(t0, t1),
            match_ms: ms(t1, t2),
            pnp_ms: ms(t2, t3),
        },
    })
}

/// Convenience for callers holding only a pose.
pub fn estimated_pose(e: &Estimate) -> Option<Pose> {
    e.solve.as_ref().ok().map(|s| s.pose)
}
