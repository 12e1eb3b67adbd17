//! Render-and-match pose refinement and the end-to-end localize pipeline.
//!
//! Each round renders color and depth at the current pose, matches the
//! query against the render in 2D, lifts render pixels to 3D through the
//! rendered depth and re-solves PnP with RANSAC.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alignment::align;
use crate::encoder2d::{encode_image, preprocess};
use crate::geometry::{backproject, CameraIntrinsics, Pose, Vec2};
use crate::imaging::Image;
use crate::matching::{coarse_match, fine_match};
use crate::model::{ModelConfig, ModelError};
use crate::network::{estimate_pose, PreparedScene, StageTimings};
use crate::pnp::{inliers, ransac_pnp, Correspondence, RansacConfig, MIN_POINTS};
use crate::render::render;
use crate::scalar::Real;
use crate::scene_io::GaussianScene;
use crate::tensor::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatcherKind {
    Ncc,
    Model,
}

impl std::str::FromStr for MatcherKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ncc" => Ok(Self::Ncc),
            "model" => Ok(Self::Model),
            _ => Err(format!("unknown matcher '{s}' (expected ncc or model)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NccConfig {
    /// Grid spacing in the render, pixels.
    pub stride: usize,
    /// Search radius in the query, pixels.
    pub radius: usize,
    /// Patch half-size (9x9 patches for 4).
    pub half: usize,
    pub min_score: f64,
    /// Parabolic peak refinement along each axis.
    pub subpixel: bool,
}

impl Default for NccConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            radius: 8,
            half: 4,
            min_score: 0.7,
            subpixel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub iterations: usize,
    pub matcher: MatcherKind,
    pub min_matches: usize,
    pub alpha_floor: f64,
    pub ransac: RansacConfig,
    pub ncc: NccConfig,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            matcher: MatcherKind::Ncc,
            min_matches: 8,
            alpha_floor: 0.5,
            ransac: RansacConfig {
                inlier_px: 1.0,
                ..RansacConfig::default()
            },
            ncc: NccConfig::default(),
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_matches < MIN_POINTS {
            return Err(format!("min_matches {} must be at least {MIN_POINTS}", self.min_matches));
        }
        if !(0.0..=1.0).contains(&self.alpha_floor) {
            return Err(format!("alpha_floor {} outside [0, 1]", self.alpha_floor));
        }
        if self.ncc.stride == 0 {
            return Err("ncc stride must be positive".into());
        }
        Ok(())
    }
}

/// A query pixel matched to a render pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelMatch {
    pub query: [f64; 2],
    pub render: [f64; 2],
    pub score: f64,
}

/// Dense 2D-2D matching between a query and an equally sized render.
pub trait DenseMatcher {
    fn matches(&self, query: &Image, render: &Image) -> Result<Vec<PixelMatch>, ModelError>;
}

/// Per-pixel patch statistics: channel means and centered norm.
struct PatchStats {
    half: usize,
    width: usize,
    height: usize,
    mean: Vec<[f64; 3]>,
    norm: Vec<f64>,
}

impl PatchStats {
    fn new(img: &Image, half: usize) -> Self {
        let (w, h) = (img.width, img.height);
        let mut mean = vec![[0.0; 3]; w * h];
        let mut norm = vec![0.0; w * h];
        let n = ((2 * half + 1) * (2 * half + 1)) as f64;
        for y in half..h.saturating_sub(half) {
            for x in half..w.saturating_sub(half) {
                let mut s = [0.0; 3];
                let mut sq = 0.0;
                for yy in y - half..=y + half {
                    for xx in x - half..=x + half {
                        for c in 0..3 {
                            let v = img.at(xx, yy, c);
                            s[c] += v;
                            sq += v * v;
                        }
                    }
                }
                let m = s.map(|v| v / n);
                mean[y * w + x] = m;
                norm[y * w + x] = (sq - n * m.iter().map(|v| v * v).sum::<f64>()).max(0.0).sqrt();
            }
        }
        Self { half, width: w, height: h, mean, norm }
    }

    fn valid(&self, x: isize, y: isize) -> bool {
        let h = self.half as isize;
        x >= h && y >= h && x + h < self.width as isize && y + h < self.height as isize && self.norm[y as usize * self.width + x as usize] > 1e-6
    }
}

fn ncc_at(a: &Image, sa: &PatchStats, ax: usize, ay: usize, b: &Image, sb: &PatchStats, bx: usize, by: usize) -> f64 {
    let h = sa.half;
    let mut dot = 0.0;
    for dy in 0..=2 * h {
        for dx in 0..=2 * h {
            for c in 0..3 {
                dot += a.at(ax + dx - h, ay + dy - h, c) * b.at(bx + dx - h, by + dy - h, c);
            }
        }
    }
    let n = ((2 * h + 1) * (2 * h + 1)) as f64;
    let (ma, mb) = (sa.mean[ay * sa.width + ax], sb.mean[by * sb.width + bx]);
    let cross: f64 = (0..3).map(|c| ma[c] * mb[c]).sum();
    (dot - n * cross) / (sa.norm[ay * sa.width + ax] * sb.norm[by * sb.width + bx])
}

/// Best integer match of `(x, y)` in `a` within the search radius in `b`;
/// returns the position and a `(2r+1)^2` score table (NaN where invalid).
fn search(a: &Image, sa: &PatchStats, x: usize, y: usize, b: &Image, sb: &PatchStats, r: usize) -> Option<((usize, usize), f64, Vec<f64>)> {
    let side = 2 * r + 1;
    let mut table = vec![f64::NAN; side * side];
    let mut best: Option<((usize, usize), f64)> = None;
    for dy in 0..side {
        for dx in 0..side {
            let (bx, by) = (x as isize + dx as isize - r as isize, y as isize + dy as isize - r as isize);
            if !sb.valid(bx, by) {
                continue;
            }
            let s = ncc_at(a, sa, x, y, b, sb, bx as usize, by as usize);
            table[dy * side + dx] = s;
            if best.map_or(true, |(_, bs)| s > bs) {
                best = Some(((bx as usize, by as usize), s));
            }
        }
    }
    best.map(|(p, s)| (p, s, table))
}

/// Parabolic peak offset from three samples, clamped to half a pixel.
fn parabola(l: f64, c: f64, r: f64) -> f64 {
    let den = l - 2.0 * c + r;
    if !(l.is_finite() && r.is_finite()) || den >= 0.0 {
        return 0.0;
    }
    (0.5 * (l - r) / den).clamp(-0.5, 0.5)
}

/// Zero-mean normalized cross-correlation matcher over RGB patches.
#[derive(Debug, Clone, Copy, Default)]
pub struct NccMatcher {
    pub cfg: NccConfig,
}

impl DenseMatcher for NccMatcher {
    fn matches(&self, query: &Image, render: &Image) -> Result<Vec<PixelMatch>, ModelError> {
        if (query.width, query.height) != (render.width, render.height) || query.channels != 3 || render.channels != 3 {
            return Err(ModelError::Argument(format!(
                "ncc needs equal-size RGB images, got {}x{}x{} and {}x{}x{}",
                query.width, query.height, query.channels, render.width, render.height, render.channels
            )));
        }
        let c = &self.cfg;
        let (sq, sr) = (PatchStats::new(query, c.half), PatchStats::new(render, c.half));
        let r = c.radius;
        let side = 2 * r + 1;
        let mut out = Vec::new();
        for y in (c.half..render.height.saturating_sub(c.half)).step_by(c.stride) {
            for x in (c.half..render.width.saturating_sub(c.half)).step_by(c.stride) {
                if !sr.valid(x as isize, y as isize) {
                    continue;
                }
                let Some(((qx, qy), score, table)) = search(render, &sr, x, y, query, &sq, r) else { continue };
                if score < c.min_score {
                    continue;
                }
                let Some(((bx, by), _, _)) = search(query, &sq, qx, qy, render, &sr, r) else { continue };
                if (bx, by) != (x, y) {
                    continue;
                }
                let (dx, dy) = (qx + r - x, qy + r - y);
                let at = |dx: isize, dy: isize| {
                    if dx < 0 || dy < 0 || dx >= side as isize || dy >= side as isize {
                        f64::NAN
                    } else {
                        table[dy as usize * side + dx as usize]
                    }
                };
                let (dxi, dyi) = (dx as isize, dy as isize);
                let (ox, oy) = if !c.subpixel {
                    (0.0, 0.0)
                } else {
                    (
                        parabola(at(dxi - 1, dyi), score, at(dxi + 1, dyi)),
                        parabola(at(dxi, dyi - 1), score, at(dxi, dyi + 1)),
                    )
                };
                out.push(PixelMatch {
                    query: [qx as f64 + ox, qy as f64 + oy],
                    render: [x as f64, y as f64],
                    score,
                });
            }
        }
        Ok(out)
    }
}

/// The trained coarse-to-fine matcher run image against image: render
/// patches take the place of the scene stream, positioned at their
/// normalized patch centers on a plane.
pub struct ModelMatcher<'a, T: Real> {
    pub params: &'a ModelParams<T>,
    pub cfg: &'a ModelConfig,
}

impl<T: Real> DenseMatcher for ModelMatcher<'_, T> {
    fn matches(&self, query: &Image, render: &Image) -> Result<Vec<PixelMatch>, ModelError> {
        let (p, cfg) = (self.params, self.cfg);
        let qe = encode_image(&preprocess(query, cfg)?, p)?;
        let re = encode_image(&preprocess(render, cfg)?, p)?;
        let s = cfg.input_size as f64;
        let n = re.coarse.shape()[0];
        let points: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let c = crate::encoder2d::patch_center(i, re.width);
                [c[0] / s, c[1] / s, 0.0]
            })
            .collect();
        let aligned = align(&re.coarse, &points, &qe.coarse, qe.width, qe.height, p, cfg)?;
        let (_, coarse) = coarse_match(&aligned, p, cfg)?;
        if coarse.is_empty() {
            return Ok(Vec::new());
        }
        let (fine, _) = fine_match(&coarse, &qe, &aligned, p, cfg)?;
        let (sx, sy) = (query.width as f64 / s, query.height as f64 / s);
        Ok(fine
            .iter()
            .map(|m| {
                let c = crate::encoder2d::patch_center(m.scene_index, re.width);
                PixelMatch {
                    query: [m.pixel[0] * sx, m.pixel[1] * sy],
                    render: [(c[0] * sx).round(), (c[1] * sy).round()],
                    score: m.score,
                }
            })
            .collect())
    }
}

/// Lifts render pixels with enough coverage to 3D at `pose`, paired with
/// their query pixels. Render pixels are rounded to the nearest pixel for
/// the depth lookup.
pub fn lift_matches(
    matches: &[PixelMatch],
    depth: &Image,
    alpha: &Image,
    pose: &Pose,
    k: &CameraIntrinsics,
    alpha_floor: f64,
) -> Vec<Correspondence> {
    let mut out = Vec::new();
    for m in matches {
        let (x, y) = (m.render[0].round(), m.render[1].round());
        if x < 0.0 || y < 0.0 || x >= depth.width as f64 || y >= depth.height as f64 {
            continue;
        }
        let (xi, yi) = (x as usize, y as usize);
        let (a, d) = (alpha.at(xi, yi, 0), depth.at(xi, yi, 0));
        if a < alpha_floor || d <= 0.0 {
            continue;
        }
        if let Ok(w) = backproject(&Vec2::new(m.render[0], m.render[1]), d, pose, k) {
            out.push(Correspondence::new(w, Vec2::new(m.query[0], m.query[1])));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub iteration: usize,
    pub matches: usize,
    pub lifted: usize,
    /// Inliers of the pose entering the round on this round's correspondences.
    pub previous_inliers: usize,
    pub inliers: Option<usize>,
    pub rmse: Option<f64>,
    pub adopted: bool,
    pub skip: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refined {
    #[serde(skip)]
    pub pose: Pose,
    pub rounds: Vec<RoundDiagnostics>,
    /// True when no round was adopted.
    pub skipped: bool,
}

/// `iterations` rounds of render, match, lift, solve. A round's solution is
/// adopted when it has at least four inliers and no fewer than the current
/// pose scores on the same correspondences; otherwise the pose is kept.
pub fn refine(
    query: &Image,
    pose0: &Pose,
    scene: &GaussianScene,
    k: &CameraIntrinsics,
    cfg: &RefinementConfig,
    matcher: &dyn DenseMatcher,
) -> Result<Refined, ModelError> {
    let query = if (query.width, query.height) == (k.width, k.height) {
        query.clone()
    } else {
        query
            .resize_bilinear(k.width, k.height)
            .map_err(|e| ModelError::Argument(e.to_string()))?
    };
    let mut pose = *pose0;
    let mut rounds = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let out = render(scene, &pose, k);
        let m = matcher.matches(&query, &out.color)?;
        let corr = lift_matches(&m, &out.depth, &out.alpha, &pose, k, cfg.alpha_floor);
        let (_, previous_inliers, _) = inliers(&corr, &pose, k, cfg.ransac.inlier_px);
        let mut d = RoundDiagnostics {
            iteration,
            matches: m.len(),
            lifted: corr.len(),
            previous_inliers,
            inliers: None,
            rmse: None,
            adopted: false,
            skip: None,
        };
        if corr.len() < cfg.min_matches {
            d.skip = Some(format!("{} correspondences, need {}", corr.len(), cfg.min_matches));
        } else {
            match ransac_pnp(&corr, k, &cfg.ransac) {
                Err(e) => d.skip = Some(e.to_string()),
                Ok(s) => {
                    let n = s.inlier_count();
                    d.inliers = Some(n);
                    d.rmse = Some(s.reprojection_rmse);
                    if n < MIN_POINTS {
                        d.skip = Some(format!("{n} inliers"));
                    } else if n < previous_inliers {
                        d.skip = Some(format!("{n} inliers, current pose has {previous_inliers}"));
                    } else {
                        pose = s.pose;
                        d.adopted = true;
                    }
                }
            }
        }
        rounds.push(d);
    }
    let skipped = !rounds.iter().any(|r| r.adopted);
    Ok(Refined { pose, rounds, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeDiagnostics {
    pub stage_trace: Vec<usize>,
    pub coarse_matches: usize,
    pub fine_matches: usize,
    pub dropped_windows: usize,
    pub inliers: usize,
    pub inlier_ratio: f64,
    pub initial_rmse: Option<f64>,
    pub failure: Option<String>,
    pub refinement: Option<Refined>,
    pub timings: StageTimings,
    pub refine_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Localization {
    /// Pose before refinement, if the initial solve succeeded.
    pub initial: Option<Pose>,
    /// Fine matches in the encoder input frame.
    pub fine: Vec<crate::matching::FineMatch>,
    /// Final pose; `None` is a localization failure.
    pub pose: Option<Pose>,
    pub diagnostics: LocalizeDiagnostics,
}

/// Learned matching, robust PnP, then refinement (skipped when
/// `refinement.iterations` is 0).
#[allow(clippy::too_many_arguments)]
pub fn localize<T: Real>(
    query: &Image,
    prepared: &PreparedScene,
    scene: &GaussianScene,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
    k: &CameraIntrinsics,
    ransac: &RansacConfig,
    refinement: &RefinementConfig,
) -> Result<Localization, ModelError> {
    let e = estimate_pose(prepared, query, k, p, cfg, ransac)?;
    let mut diag = LocalizeDiagnostics {
        stage_trace: e.stage_trace.clone(),
        coarse_matches: e.coarse.len(),
        fine_matches: e.fine.len(),
        dropped_windows: e.dropped_windows,
        inliers: 0,
        inlier_ratio: 0.0,
        initial_rmse: None,
        failure: None,
        refinement: None,
        timings: e.timings.clone(),
        refine_ms: 0.0,
    };
    let solve = match e.solve {
        Ok(s) => s,
        Err(err) => {
            diag.failure = Some(err.to_string());
            return Ok(Localization {
                initial: None,
                fine: e.fine,
                pose: None,
                diagnostics: diag,
            });
        }
    };
    diag.inliers = solve.inlier_count();
    diag.inlier_ratio = diag.inliers as f64 / e.fine.len().max(1) as f64;
    diag.initial_rmse = Some(solve.reprojection_rmse);
    let t = Instant::now();
    let refined = match refinement.matcher {
        MatcherKind::Ncc => refine(query, &solve.pose, scene, k, refinement, &NccMatcher { cfg: refinement.ncc })?,
        MatcherKind::Model => refine(query, &solve.pose, scene, k, refinement, &ModelMatcher { params: p, cfg })?,
    };
    diag.refine_ms = t.elapsed().as_secs_f64() * 1e3;
    let pose = refined.pose;
    diag.refinement = Some(refined);
    Ok(Localization {
        initial: Some(solve.pose),
        fine: e.fine,
        pose: Some(pose),
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, Vec3};
    use crate::scene_io::Gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn texture(w: usize, h: usize, seed: u64) -> Image {
        // smooth random texture: sum of a few sinusoids per channel
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<[f64; 4]> = (0..18)
            .map(|_| [rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9), rng.gen_range(0.0..6.3), rng.gen_range(-1.0..1.0)])
            .collect();
        Image::from_fn(w, h, 3, |x, y, c| {
            let s: f64 = waves[c * 6..c * 6 + 6]
                .iter()
                .map(|q| (q[0] * x as f64 + q[1] * y as f64 + q[2]).sin() * q[3])
                .sum();
            0.5 + 0.1 * s
        })
    }

    fn integer() -> NccMatcher {
        NccMatcher { cfg: NccConfig { subpixel: false, ..Default::default() } }
    }

    #[test]
    fn identical_images_self_match() {
        let img = texture(48, 48, 1);
        let m = integer().matches(&img, &img).unwrap();
        assert_eq!(m.len(), 100);
        for p in &m {
            assert_eq!(p.query, p.render);
            assert!((p.score - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn integer_shift_is_recovered() {
        let big = texture(60, 48, 2);
        let render = Image::from_fn(48, 48, 3, |x, y, c| big.at(x + 6, y, c));
        let query = Image::from_fn(48, 48, 3, |x, y, c| big.at(x + 3, y, c));
        let m = integer().matches(&query, &render).unwrap();
        let interior: Vec<_> = m.iter().filter(|p| p.render[0] >= 12.0 && p.render[0] <= 36.0).collect();
        assert!(interior.len() > 20);
        for p in &interior {
            assert!((p.query[0] - p.render[0] - 3.0).abs() < 1e-9, "{p:?}");
            assert_eq!(p.query[1], p.render[1]);
        }
        let sub = NccMatcher::default().matches(&query, &render).unwrap();
        for p in sub.iter().filter(|p| p.render[0] >= 12.0 && p.render[0] <= 36.0) {
            assert!((p.query[0] - p.render[0] - 3.0).abs() < 0.1, "{p:?}");
        }
    }

    #[test]
    fn subpixel_shift_is_approximated() {
        let f = texture(60, 48, 4);
        // render sampled half a pixel right of the query grid
        let render = Image::from_fn(48, 48, 3, |x, y, c| 0.5 * (f.at(x + 4, y, c) + f.at(x + 5, y, c)));
        let query = Image::from_fn(48, 48, 3, |x, y, c| f.at(x + 4, y, c));
        let m = NccMatcher::default().matches(&query, &render).unwrap();
        let errs: Vec<f64> = m.iter().map(|p| p.query[0] - p.render[0]).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(!m.is_empty());
        assert!((mean - 0.5).abs() < 0.2, "{mean}");
    }

    #[test]
    fn noise_pair_is_near_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Image::from_fn(48, 48, 3, |_, _, _| 0.0).data.iter().map(|_| rng.gen::<f64>()).collect::<Vec<_>>();
        let b = (0..a.len()).map(|_| rng.gen::<f64>()).collect::<Vec<_>>();
        let mk = |d: Vec<f64>| Image { width: 48, height: 48, channels: 3, data: d };
        let m = NccMatcher::default().matches(&mk(a), &mk(b)).unwrap();
        assert!(m.len() <= 2, "{}", m.len());
    }

    #[test]
    fn flat_images_give_nothing() {
        let img = Image::from_fn(32, 32, 3, |_, _, _| 0.3);
        assert!(NccMatcher::default().matches(&img, &img).unwrap().is_empty());
    }

    fn one_blob() -> GaussianScene {
        let mut g = Gaussian {
            position: [0.0, 0.0, 2.0],
            log_scale: [0.1f64.ln(); 3],
            opacity_logit: 8.0,
            ..Default::default()
        };
        g.set_base_color([0.9, 0.2, 0.1]);
        GaussianScene::new(vec![g], "blob")
    }

    #[test]
    fn lift_at_peak_recovers_center() {
        let k = CameraIntrinsics::new(64.0, 64.0, 32.0, 32.0, 65, 65).unwrap();
        let out = render(&one_blob(), &Pose::identity(), &k);
        let m = [PixelMatch { query: [32.0, 32.0], render: [32.0, 32.0], score: 1.0 }];
        let c = lift_matches(&m, &out.depth, &out.alpha, &Pose::identity(), &k, 0.5);
        assert_eq!(c.len(), 1);
        assert!((c[0].world - Vec3::new(0.0, 0.0, 2.0)).norm() < 0.02);
        assert!(lift_matches(&m, &out.depth, &out.alpha, &Pose::identity(), &k, 1.0).is_empty());
    }

    #[test]
    fn lift_then_project_is_identity() {
        let k = CameraIntrinsics::new(64.0, 64.0, 32.0, 32.0, 65, 65).unwrap();
        let pose = Pose::look_at(&Vec3::new(0.3, -0.2, -0.5), &Vec3::new(0.0, 0.0, 2.0), &Vec3::new(0.0, -1.0, 0.0));
        let out = render(&one_blob(), &pose, &k);
        let pk = project(&Vec3::new(0.0, 0.0, 2.0), &pose, &k).unwrap().pixel;
        let r = [pk.x.round(), pk.y.round()];
        let m = [PixelMatch { query: r, render: r, score: 1.0 }];
        let c = lift_matches(&m, &out.depth, &out.alpha, &pose, &k, 0.1);
        let back = project(&c[0].world, &pose, &k).unwrap().pixel;
        assert!((back - Vec2::new(r[0], r[1])).norm() < 1e-6);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let k = CameraIntrinsics::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap();
        let pose = Pose::look_at(&Vec3::new(0.1, 0.0, 0.0), &Vec3::new(0.0, 0.0, 2.0), &Vec3::new(0.0, -1.0, 0.0));
        let cfg = RefinementConfig { iterations: 0, ..Default::default() };
        let r = refine(&Image::new(64, 64, 3), &pose, &one_blob(), &k, &cfg, &NccMatcher::default()).unwrap();
        assert_eq!(r.pose, pose);
        assert!(r.skipped && r.rounds.is_empty());
    }

    #[test]
    fn parabola_peak() {
        // samples of -(x - 0.3)^2 at -1, 0, 1
        let f = |x: f64| -(x - 0.3) * (x - 0.3);
        assert!((parabola(f(-1.0), f(0.0), f(1.0)) - 0.3).abs() < 1e-12);
        assert_eq!(parabola(f64::NAN, 1.0, 0.5), 0.0);
    }
}
