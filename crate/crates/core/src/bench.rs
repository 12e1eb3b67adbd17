//! Synthetic Gaussian scenes with rendered, exactly posed views; dataset
//! layout on disk; toy training and evaluation reports.
//!
//! Layout of a benchmark directory:
//!
//! ```text
//! DIR/spec.json
//! DIR/scene_000/scene.ply
//! DIR/scene_000/intrinsics.txt
//! DIR/scene_000/poses.txt          training poses, one per image
//! DIR/scene_000/images/0000.png
//! DIR/scene_000/test/poses.txt
//! DIR/scene_000/test/images/0000.png
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoder2d::preprocess;
use crate::geometry::{format_poses, median_errors, parse_poses, pose_error, project, recall, CameraIntrinsics, Pose, PoseError, Vec3};
use crate::imaging::Image;
use crate::matching::FineMatch;
use crate::model::{ModelConfig, ModelError};
use crate::network::{input_intrinsics, PreparedScene};
use crate::pnp::RansacConfig;
use crate::refinement::{localize, RefinementConfig};
use crate::render::render;
use crate::scalar::Real;
use crate::scene_io::{load_ply, write_ply, Gaussian, GaussianScene, OPACITY_THRESHOLD, SUBSAMPLE_SIZE};
use crate::supervision::{train, StepLog, TrainConfig, TrainError, TrainingSample};
use crate::tensor::ModelParams;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("benchmark spec: {0}")]
    Spec(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn data_err(e: impl std::fmt::Display) -> BenchError {
    BenchError::Data(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub n_gaussians: usize,
    /// Side of the cube the positions are drawn from, centered at the origin.
    pub extent: f64,
    /// Band of per-axis standard deviations.
    pub scale_min: f64,
    pub scale_max: f64,
    /// Band of activated opacities.
    pub opacity_min: f64,
    pub opacity_max: f64,
    pub color_min: f64,
    pub color_max: f64,
    /// Std of the higher-order SH coefficients (0 keeps colors view-independent).
    pub sh_rest_std: f64,
    pub n_train_views: usize,
    pub n_test_views: usize,
    pub image_size: usize,
    pub focal: f64,
    /// Camera distance from the scene centroid, in extents.
    pub orbit_radius: f64,
    /// Relative radial jitter.
    pub orbit_jitter: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    /// Look-at target jitter, in extents.
    pub target_jitter: f64,
    pub min_coverage: f64,
    pub max_resamples: usize,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            n_gaussians: 200,
            extent: 1.0,
            scale_min: 0.04,
            scale_max: 0.09,
            opacity_min: 0.92,
            opacity_max: 0.99,
            color_min: 0.05,
            color_max: 0.95,
            sh_rest_std: 0.0,
            n_train_views: 50,
            n_test_views: 10,
            image_size: 64,
            focal: 64.0,
            orbit_radius: 1.8,
            orbit_jitter: 0.1,
            elevation_min_deg: -30.0,
            elevation_max_deg: 50.0,
            target_jitter: 0.05,
            min_coverage: 0.3,
            max_resamples: 100,
            seed: 0,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Spec(m.into()));
        if self.n_gaussians == 0 || self.n_train_views == 0 || self.n_test_views == 0 {
            return bad("counts must be at least 1");
        }
        if !(self.extent > 0.0) || !(0.0 < self.scale_min && self.scale_min <= self.scale_max) {
            return bad("extent and scale band must be positive");
        }
        if !(OPACITY_THRESHOLD <= self.opacity_min && self.opacity_min <= self.opacity_max && self.opacity_max < 1.0) {
            return bad("opacity band must lie in [0.9, 1)");
        }
        if self.image_size < 8 || self.image_size % 8 != 0 {
            return bad("image size must be a positive multiple of 8");
        }
        if !(self.focal > 0.0 && self.orbit_radius > 0.0) {
            return bad("focal and orbit radius must be positive");
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        let c = (self.image_size as f64 - 1.0) / 2.0;
        CameraIntrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: c,
            cy: c,
            width: self.image_size,
            height: self.image_size,
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }
}

/// Logit whose sigmoid is `p`.
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn make_scene(spec: &BenchmarkSpec) -> Result<GaussianScene, BenchError> {
    spec.validate()?;
    let mut rng = spec.rng(0);
    let h = spec.extent / 2.0;
    let gaussians = (0..spec.n_gaussians)
        .map(|_| {
            let mut g = Gaussian {
                position: [rng.gen_range(-h..=h), rng.gen_range(-h..=h), rng.gen_range(-h..=h)],
                ..Default::default()
            };
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            g.rotation = q.map(|v| v / n);
            g.log_scale = std::array::from_fn(|_| rng.gen_range(spec.scale_min..=spec.scale_max).ln());
            g.opacity_logit = logit(rng.gen_range(spec.opacity_min..=spec.opacity_max));
            g.set_base_color(std::array::from_fn(|_| rng.gen_range(spec.color_min..=spec.color_max)));
            if spec.sh_rest_std > 0.0 {
                for v in &mut g.sh[3..] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = spec.sh_rest_std * z;
                }
            }
            g
        })
        .collect();
    Ok(GaussianScene::new(gaussians, "synthetic"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub pose: Pose,
    /// 8-bit quantized render, as stored on disk.
    pub image: Image,
}

fn centroid(scene: &GaussianScene) -> Vec3 {
    let n = scene.len().max(1) as f64;
    scene
        .gaussians
        .iter()
        .fold(Vec3::zeros(), |a, g| a + Vec3::new(g.position[0], g.position[1], g.position[2]))
        / n
}

/// `count` views on a jittered orbit around the scene centroid. `stream`
/// separates the training and test draws.
pub fn make_views(scene: &GaussianScene, spec: &BenchmarkSpec, count: usize, stream: u64) -> Result<Vec<View>, BenchError> {
    spec.validate()?;
    let k = spec.intrinsics();
    let mut rng = spec.rng(stream);
    let c = centroid(scene);
    let up = Vec3::new(0.0, 0.0, 1.0);
    let mut views = Vec::with_capacity(count);
    for v in 0..count {
        let mut accepted = None;
        for _ in 0..=spec.max_resamples {
            let az = rng.gen_range(0.0..std::f64::consts::TAU);
            let el = rng.gen_range(spec.elevation_min_deg..=spec.elevation_max_deg).to_radians();
            let r = spec.extent * spec.orbit_radius * (1.0 + rng.gen_range(-spec.orbit_jitter..=spec.orbit_jitter));
            let eye = c + r * Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let jitter = spec.extent * spec.target_jitter;
            let target = c + Vec3::new(
                rng.gen_range(-jitter..=jitter),
                rng.gen_range(-jitter..=jitter),
                rng.gen_range(-jitter..=jitter),
            );
            let pose = Pose::look_at(&eye, &target, &up);
            let out = render(scene, &pose, &k);
            if out.coverage(0.5) >= spec.min_coverage {
                accepted = Some(View { pose, image: out.color.quantized() });
                break;
            }
        }
        match accepted {
            Some(view) => views.push(view),
            None => {
                return Err(BenchError::Spec(format!(
                    "view {v}: coverage {} unattainable after {} resamples",
                    spec.min_coverage, spec.max_resamples
                )))
            }
        }
    }
    Ok(views)
}

/// Images, poses and intrinsics of one split.
#[derive(Debug, Clone)]
pub struct Split {
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<Pose>,
    pub images: Vec<Image>,
}

pub const SCENE_DIR: &str = "scene_000";

pub fn scene_dir(root: &Path) -> PathBuf {
    root.join(SCENE_DIR)
}

fn write_split(dir: &Path, views: &[View], k: &CameraIntrinsics, with_intrinsics: bool) -> Result<(), BenchError> {
    fs::create_dir_all(dir.join("images"))?;
    let poses: Vec<Pose> = views.iter().map(|v| v.pose).collect();
    fs::write(dir.join("poses.txt"), format_poses(&poses))?;
    if with_intrinsics {
        fs::write(dir.join("intrinsics.txt"), format!("{k}\n"))?;
    }
    for (i, v) in views.iter().enumerate() {
        v.image.save_png(&dir.join("images").join(format!("{i:04}.png"))).map_err(data_err)?;
    }
    Ok(())
}

/// Generates the scene and both splits and writes them under `root`.
pub fn write_benchmark(root: &Path, spec: &BenchmarkSpec) -> Result<(), BenchError> {
    let scene = make_scene(spec)?;
    let train = make_views(&scene, spec, spec.n_train_views, 1)?;
    let test = make_views(&scene, spec, spec.n_test_views, 2)?;
    let dir = scene_dir(root);
    fs::create_dir_all(&dir)?;
    fs::write(
        root.join("spec.json"),
        serde_json::to_string_pretty(spec).map_err(data_err)?,
    )?;
    write_ply(&scene, &dir.join("scene.ply")).map_err(data_err)?;
    let k = spec.intrinsics();
    write_split(&dir, &train, &k, true)?;
    write_split(&dir.join("test"), &test, &k, false)?;
    Ok(())
}

pub fn load_spec(root: &Path) -> Result<BenchmarkSpec, BenchError> {
    serde_json::from_str(&fs::read_to_string(root.join("spec.json"))?).map_err(data_err)
}

pub fn load_scene(scene_dir: &Path) -> Result<GaussianScene, BenchError> {
    load_ply(&scene_dir.join("scene.ply")).map_err(data_err)
}

pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics, BenchError> {
    fs::read_to_string(path)?.trim().parse().map_err(data_err)
}

/// Reads `poses.txt` and `images/*.png` from `split_dir`, with intrinsics
/// from `scene_dir/intrinsics.txt`.
pub fn load_split(scene_dir: &Path, split_dir: &Path) -> Result<Split, BenchError> {
    let intrinsics = load_intrinsics(&scene_dir.join("intrinsics.txt"))?;
    let poses = parse_poses(&fs::read_to_string(split_dir.join("poses.txt"))?).map_err(data_err)?;
    let images = (0..poses.len())
        .map(|i| Image::load_rgb(&split_dir.join("images").join(format!("{i:04}.png"))).map_err(data_err))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Split { intrinsics, poses, images })
}

/// Opacity filter and subsample with the default constants.
pub fn prepare_scene(scene: &GaussianScene, seed: u64) -> Result<GaussianScene, BenchError> {
    scene.prepare(OPACITY_THRESHOLD, SUBSAMPLE_SIZE, seed).map_err(data_err)
}

/// Training samples at the encoder input size.
pub fn training_samples(split: &Split, cfg: &ModelConfig, scene: usize) -> Result<Vec<TrainingSample>, BenchError> {
    let k = input_intrinsics(&split.intrinsics, cfg);
    split
        .images
        .iter()
        .zip(&split.poses)
        .map(|(img, pose)| {
            Ok(TrainingSample {
                scene,
                image: preprocess(img, cfg)?,
                pose: *pose,
                intrinsics: k,
            })
        })
        .collect()
}

/// Trains on the training split of one benchmark scene directory.
pub fn train_scene<T: Real>(
    scene_dir: &Path,
    p: &mut ModelParams<T>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    subsample_seed: u64,
    on_step: impl FnMut(&StepLog),
) -> Result<Vec<StepLog>, BenchError> {
    let scene = prepare_scene(&load_scene(scene_dir)?, subsample_seed)?;
    let prepared = PreparedScene::new(&scene, model_cfg)?;
    let split = load_split(scene_dir, scene_dir)?;
    let samples = training_samples(&split, model_cfg, 0)?;
    Ok(train(&[prepared], &samples, p, model_cfg, cfg, on_step)?)
}

/// Camera center moved by exactly `dt` along a random direction and
/// orientation rotated by exactly `deg` about a random axis.
pub fn perturb_pose(pose: &Pose, dt: f64, deg: f64, rng: &mut impl Rng) -> Pose {
    let dir = |rng: &mut dyn rand::RngCore| loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if v.norm() > 1e-9 {
            return v.normalize();
        }
    };
    let center = pose.center() + dt * dir(rng);
    let rot = UnitQuaternion::from_axis_angle(&Unit::new_normalize(dir(rng)), deg.to_radians()) * pose.rotation;
    Pose::new(rot, -(rot * center))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ransac: RansacConfig,
    pub refinement: RefinementConfig,
    /// Translation threshold in extents.
    pub t_thresh: f64,
    pub r_thresh_deg: f64,
    /// Feed ground-truth poses as estimates.
    pub oracle: bool,
    pub overlays: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig {
                inlier_px: 2.0,
                ..RansacConfig::default()
            },
            refinement: RefinementConfig::default(),
            t_thresh: 0.05,
            r_thresh_deg: 5.0,
            oracle: false,
            overlays: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub index: usize,
    /// `None` marks a localization failure.
    pub unrefined: Option<PoseError>,
    pub refined: Option<PoseError>,
    pub fine_matches: usize,
    pub inliers: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub recall: f64,
    /// Lower medians with failures counted as infinite error; `None` when
    /// the median itself is a failure.
    pub median_translation: Option<f64>,
    pub median_rotation_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub queries: usize,
    pub t_thresh: f64,
    pub r_thresh_deg: f64,
    pub unrefined: Summary,
    pub refined: Summary,
    pub records: Vec<QueryRecord>,
}

const MISS: PoseError = PoseError {
    translation: f64::INFINITY,
    rotation_deg: f64::INFINITY,
};

pub fn summarize(errors: &[Option<PoseError>], t: f64, r: f64) -> Result<Summary, BenchError> {
    let e: Vec<PoseError> = errors.iter().map(|e| e.unwrap_or(MISS)).collect();
    let finite = |v: f64| v.is_finite().then_some(v);
    let (mt, mr) = median_errors(&e).map_err(data_err)?;
    Ok(Summary {
        recall: recall(&e, t, r).map_err(data_err)?,
        median_translation: finite(mt),
        median_rotation_deg: finite(mr),
    })
}

/// Evaluates every test query: learned localization, then refinement. With
/// `cfg.oracle` the ground-truth poses are used as estimates instead.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<T: Real>(
    scene: &GaussianScene,
    prepared: &PreparedScene,
    test: &Split,
    p: &ModelParams<T>,
    model_cfg: &ModelConfig,
    cfg: &EvalConfig,
    extent: f64,
    overlay_dir: Option<&Path>,
) -> Result<Report, BenchError> {
    let t = cfg.t_thresh * extent;
    let mut records = Vec::with_capacity(test.poses.len());
    for (index, (img, gt)) in test.images.iter().zip(&test.poses).enumerate() {
        if cfg.oracle {
            let e = pose_error(gt, gt);
            records.push(QueryRecord {
                index,
                unrefined: Some(e),
                refined: Some(e),
                fine_matches: 0,
                inliers: 0,
                failure: None,
            });
            continue;
        }
        let loc = localize(img, prepared, scene, p, model_cfg, &test.intrinsics, &cfg.ransac, &cfg.refinement)?;
        if let Some(dir) = overlay_dir.filter(|_| cfg.overlays) {
            let k = input_intrinsics(&test.intrinsics, model_cfg);
            overlay(img, &loc.fine, gt, &k, model_cfg)?
                .save_png(&dir.join(format!("query_{index:04}.png")))
                .map_err(data_err)?;
        }
        let d = &loc.diagnostics;
        records.push(QueryRecord {
            index,
            unrefined: loc.initial.map(|e| pose_error(&e, gt)),
            refined: loc.pose.map(|e| pose_error(&e, gt)),
            fine_matches: d.fine_matches,
            inliers: d.inliers,
            failure: d.failure.clone(),
        });
    }
    let un: Vec<_> = records.iter().map(|r| r.unrefined).collect();
    let re: Vec<_> = records.iter().map(|r| r.refined).collect();
    Ok(Report {
        queries: records.len(),
        t_thresh: t,
        r_thresh_deg: cfg.r_thresh_deg,
        unrefined: summarize(&un, t, cfg.r_thresh_deg)?,
        refined: summarize(&re, t, cfg.r_thresh_deg)?,
        records,
    })
}

/// Query resized to the encoder input with fine matches (green, brightness
/// by score) and the true projections of the matched points (red).
pub fn overlay(query: &Image, fine: &[FineMatch], gt: &Pose, k: &CameraIntrinsics, cfg: &ModelConfig) -> Result<Image, BenchError> {
    let mut img = query.resize_bilinear(cfg.input_size, cfg.input_size).map_err(data_err)?;
    let mut dot = |x: f64, y: f64, rgb: [f64; 3]| {
        let (x, y) = (x.round() as isize, y.round() as isize);
        if x >= 0 && y >= 0 && (x as usize) < img.width && (y as usize) < img.height {
            for (c, v) in rgb.iter().enumerate() {
                img.set(x as usize, y as usize, c, *v);
            }
        }
    };
    for m in fine {
        let w = Vec3::new(m.scene_point[0], m.scene_point[1], m.scene_point[2]);
        if let Some(pr) = project(&w, gt, k) {
            dot(pr.pixel.x, pr.pixel.y, [1.0, 0.0, 0.0]);
        }
        dot(m.pixel[0], m.pixel[1], [0.0, 0.3 + 0.7 * m.score.clamp(0.0, 1.0), 0.0]);
    }
    Ok(img)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| format!("{x:e}"))
}

/// Per-query CSV: errors in full precision, `inf` for failures.
pub fn report_csv(report: &Report) -> String {
    let mut s = String::from("index,t_unrefined,r_unrefined,t_refined,r_refined,fine_matches,inliers,failure\n");
    for r in &report.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.index,
            opt(r.unrefined.map(|e| e.translation)),
            opt(r.unrefined.map(|e| e.rotation_deg)),
            opt(r.refined.map(|e| e.translation)),
            opt(r.refined.map(|e| e.rotation_deg)),
            r.fine_matches,
            r.inliers,
            r.failure.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    s
}

pub fn write_report(dir: &Path, report: &Report) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report_csv(report))?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report).map_err(data_err)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchmarkSpec {
        BenchmarkSpec {
            n_train_views: 3,
            n_test_views: 2,
            ..Default::default()
        }
    }

    #[test]
    fn scene_is_seeded_and_in_extent() {
        let s = small();
        let a = make_scene(&s).unwrap();
        assert_eq!(a, make_scene(&s).unwrap());
        assert_ne!(a, make_scene(&BenchmarkSpec { seed: 1, ..s.clone() }).unwrap());
        assert_eq!(a.len(), 200);
        for g in &a.gaussians {
            assert!(g.position.iter().all(|v| v.abs() <= 0.5));
            assert!(g.opacity() >= 0.9);
            assert!(g.scale().iter().all(|v| (0.04 - 1e-12..=0.09 + 1e-12).contains(v)));
        }
        let bb = crate::scene_io::Aabb::of_points(a.gaussians.iter().map(|g| &g.position));
        for i in 0..3 {
            let lo = a.gaussians.iter().map(|g| g.position[i]).fold(f64::INFINITY, f64::min);
            assert_eq!(bb.min[i], lo);
            assert!(bb.max[i] - bb.min[i] > 0.9);
        }
    }

    #[test]
    fn views_pass_coverage_and_rerender_exactly() {
        let s = small();
        let scene = make_scene(&s).unwrap();
        let v = make_views(&scene, &s, 3, 1).unwrap();
        for view in &v {
            let out = render(&scene, &view.pose, &s.intrinsics());
            assert!(out.coverage(0.5) >= 0.3);
            assert_eq!(out.color.quantized(), view.image);
        }
        let w = make_views(&scene, &s, 3, 2).unwrap();
        assert_ne!(v[0].pose, w[0].pose);
    }

    #[test]
    fn unattainable_coverage_is_an_error() {
        let s = BenchmarkSpec {
            min_coverage: 1.01,
            max_resamples: 2,
            ..small()
        };
        let scene = make_scene(&s).unwrap();
        assert!(matches!(make_views(&scene, &s, 1, 1), Err(BenchError::Spec(_))));
    }

    #[test]
    fn single_gaussian_scene() {
        let s = BenchmarkSpec {
            n_gaussians: 1,
            ..small()
        };
        let scene = make_scene(&s).unwrap();
        let pose = Pose::look_at(&Vec3::new(2.0, 0.0, 0.0), &Vec3::from(scene.gaussians[0].position), &Vec3::new(0.0, 0.0, 1.0));
        let out = render(&scene, &pose, &s.intrinsics());
        let peak = out.alpha.data.iter().copied().fold(0.0, f64::max);
        assert!(peak > 0.5);
        assert!(out.coverage(0.5) < 0.2);
    }

    #[test]
    fn perturbation_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Pose::look_at(&Vec3::new(1.5, 0.3, 0.2), &Vec3::zeros(), &Vec3::new(0.0, 0.0, 1.0));
        for _ in 0..20 {
            let q = perturb_pose(&p, 0.05, 2.0, &mut rng);
            let e = pose_error(&q, &p);
            assert!((e.translation - 0.05).abs() < 1e-12);
            assert!((e.rotation_deg - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn summary_counts_failures_as_misses() {
        let ok = Some(PoseError { translation: 0.01, rotation_deg: 1.0 });
        let s = summarize(&[ok, None, ok], 0.05, 5.0).unwrap();
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.median_translation, Some(0.01));
        let s = summarize(&[ok, None, None], 0.05, 5.0).unwrap();
        assert_eq!(s.median_translation, None);
    }
}
