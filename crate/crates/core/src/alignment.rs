//! Interleaved self- and cross-attention between scene features and coarse
//! image features.
//!
//! Sinusoidal positional encodings are added once before the first layer:
//! 3D for min-max normalized scene points, 2D for patch centers normalized by
//! the image size. Each layer runs, in order, scene self-attention, image
//! self-attention, scene-from-image cross-attention and image-from-scene
//! cross-attention (the latter sees the already updated scene stream).
//!
//! Blocks are pre-norm. Encoder outputs are layer-normalized before the
//! encodings are added, and both streams get a final layer norm.

use rand::Rng;

use crate::encoder2d::patch_center;
use crate::model::{ModelConfig, ModelError};
use crate::nn::{attention_block, init_attention, sinusoidal, LN_EPS};
use crate::scalar::Real;
use crate::tensor::{ModelParams, Tensor};

pub const KINDS: [&str; 4] = ["self3d", "self2d", "cross3d", "cross2d"];

#[derive(Debug, Clone)]
pub struct AlignedFeatures<T: Real> {
    /// `N_g x C_c`.
    pub scene: Tensor<T>,
    /// `N_c x C_c`.
    pub image: Tensor<T>,
    pub scene_points: Vec<[f64; 3]>,
    pub patch_centers: Vec<[f64; 2]>,
}

pub fn init<T: Real>(p: &mut ModelParams<T>, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<(), ModelError> {
    for l in 1..=cfg.align_layers {
        for kind in KINDS {
            init_attention(p, &format!("align.layer{l}.{kind}"), cfg.c_coarse, cfg.ff_mult, rng)?;
        }
    }
    Ok(())
}

/// Positional encoding of scene points after per-axis min-max normalization
/// (a degenerate axis maps to 0.5).
pub fn scene_encoding(points: &[[f64; 3]], dim: usize) -> Vec<f64> {
    let bbox = crate::scene_io::Aabb::of_points(points);
    let mut norm = Vec::with_capacity(points.len() * 3);
    for p in points {
        for a in 0..3 {
            let ext = bbox.max[a] - bbox.min[a];
            norm.push(if ext > 0.0 { (p[a] - bbox.min[a]) / ext } else { 0.5 });
        }
    }
    sinusoidal(&norm, 3, dim)
}

pub fn image_encoding(centers: &[[f64; 2]], width: usize, height: usize, dim: usize) -> Vec<f64> {
    let norm: Vec<f64> = centers
        .iter()
        .flat_map(|c| [c[0] / width as f64, c[1] / height as f64])
        .collect();
    sinusoidal(&norm, 2, dim)
}

pub fn align<T: Real>(
    scene: &Tensor<T>,
    scene_points: &[[f64; 3]],
    image: &Tensor<T>,
    width: usize,
    height: usize,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<AlignedFeatures<T>, ModelError> {
    let d = cfg.c_coarse;
    let (ns, ni) = (scene.shape()[0], image.shape()[0]);
    if scene.shape() != [scene_points.len(), d] || image.shape().get(1) != Some(&d) {
        return Err(ModelError::Argument(format!(
            "alignment expects {} x {d} scene and N x {d} image features, got {:?} and {:?}",
            scene_points.len(),
            scene.shape(),
            image.shape()
        )));
    }
    let patch_centers: Vec<[f64; 2]> = (0..ni).map(|i| patch_center(i, width)).collect();
    let mut s = scene.layer_norm(LN_EPS)?.add(&Tensor::from_f64(&[ns, d], &scene_encoding(scene_points, d)))?;
    let mut m = image.layer_norm(LN_EPS)?.add(&Tensor::from_f64(&[ni, d], &image_encoding(&patch_centers, width, height, d)))?;
    for l in 1..=cfg.align_layers {
        let name = |k: &str| format!("align.layer{l}.{k}");
        s = attention_block(&s, &s, p, &name("self3d"), cfg.heads)?;
        m = attention_block(&m, &m, p, &name("self2d"), cfg.heads)?;
        s = attention_block(&s, &m, p, &name("cross3d"), cfg.heads)?;
        m = attention_block(&m, &s, p, &name("cross2d"), cfg.heads)?;
    }
    Ok(AlignedFeatures {
        scene: s.layer_norm(LN_EPS)?,
        image: m.layer_norm(LN_EPS)?,
        scene_points: scene_points.to_vec(),
        patch_centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(ns: usize, seed: u64, d: usize) -> (Tensor<f64>, Vec<[f64; 3]>, Tensor<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..ns * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pts: Vec<[f64; 3]> = (0..ns).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let m: Vec<f64> = (0..16 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (Tensor::from_f64(&[ns, d], &s), pts, Tensor::from_f64(&[16, d], &m))
    }

    #[test]
    fn shapes_are_preserved() {
        let cfg = ModelConfig::toy();
        let p = crate::model::init_params::<f64>(&cfg, 0).unwrap();
        for ns in [1, 7, 30] {
            let (s, pts, m) = inputs(ns, ns as u64, cfg.c_coarse);
            let a = align(&s, &pts, &m, 32, 32, &p, &cfg).unwrap();
            assert_eq!(a.scene.shape(), &[ns, cfg.c_coarse]);
            assert_eq!(a.image.shape(), &[16, cfg.c_coarse]);
            assert!(a.scene.to_vec().iter().chain(a.image.to_vec().iter()).all(|v| v.is_finite()));
        }
    }

    #[test]
    fn scene_permutation_equivariance() {
        let cfg = ModelConfig::toy();
        let d = cfg.c_coarse;
        let p = crate::model::init_params::<f64>(&cfg, 1).unwrap();
        let (s, pts, m) = inputs(12, 5, d);
        let perm: Vec<usize> = vec![3, 0, 11, 7, 1, 2, 10, 4, 9, 5, 8, 6];
        let sp = s.gather_rows(&perm).unwrap();
        let ptsp: Vec<[f64; 3]> = perm.iter().map(|&i| pts[i]).collect();
        let a = align(&s, &pts, &m, 32, 32, &p, &cfg).unwrap();
        let b = align(&sp, &ptsp, &m, 32, 32, &p, &cfg).unwrap();
        let (av, bv) = (a.scene.to_vec(), b.scene.to_vec());
        for (r, &i) in perm.iter().enumerate() {
            for c in 0..d {
                assert!((bv[r * d + c] - av[i * d + c]).abs() < 1e-5);
            }
        }
        for (x, y) in a.image.to_vec().iter().zip(b.image.to_vec()) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn zeroed_cross_attention_decouples_image() {
        let cfg = ModelConfig::toy();
        let p = crate::model::init_params::<f64>(&cfg, 2).unwrap();
        for (name, t) in p.iter() {
            if name.contains(".cross2d.") && [".q.", ".k.", ".v.", ".o."].iter().any(|k| name.contains(k)) {
                t.set_data(vec![0.0; t.numel()]);
            }
        }
        let (s1, pts1, m) = inputs(9, 10, cfg.c_coarse);
        let (s2, pts2, _) = inputs(5, 11, cfg.c_coarse);
        let a = align(&s1, &pts1, &m, 32, 32, &p, &cfg).unwrap();
        let b = align(&s2, &pts2, &m, 32, 32, &p, &cfg).unwrap();
        assert_eq!(a.image.to_vec(), b.image.to_vec());
    }

    #[test]
    fn layer_norm_keeps_rms_in_band() {
        let cfg = ModelConfig::toy();
        let p = crate::model::init_params::<f64>(&cfg, 3).unwrap();
        let (s, pts, m) = inputs(20, 12, cfg.c_coarse);
        let a = align(&s, &pts, &m, 32, 32, &p, &cfg).unwrap();
        for row in a.scene.to_vec().chunks(cfg.c_coarse) {
            let rms = (row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64).sqrt();
            assert!((0.5..=2.0).contains(&rms), "{rms}");
        }
    }
}
