//! Point encoder over the filtered Gaussians: voxel-grid downsampling and
//! kernel-point convolutions in three stages.
//!
//! Each stage runs two KPConv layers on its input points with radius
//! `2.5 * cell` and influence extent `sigma = 1.25 * cell`, then mean-pools
//! onto the occupied voxels of side `cell`. The cell doubles per stage. All
//! neighborhoods and pooling weights depend only on positions and are
//! precomputed once per scene in a [`ScenePyramid`].

use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;

use crate::model::{config_err, ModelConfig, ModelError};
use crate::scalar::Real;
use crate::scene_io::INPUT_FEATURES;
use crate::tensor::{ModelParams, Tensor};

/// Unit directions of the 14 shell kernel points (minimum Coulomb energy).
pub const KERNEL_SHELL: [[f64; 3]; 14] = [
    [-0.9234135693, 0.1268582623, 0.3622352291],
    [0.5292690960, 0.6454108942, 0.5507440437],
    [0.9503837031, 0.2769191435, -0.1417272201],
    [0.0933681613, -0.9955301788, 0.0142144103],
    [-0.1940219534, -0.5113877848, -0.8371606866],
    [-0.6836643769, 0.3844358489, -0.6203322479],
    [0.1834792723, 0.9097086333, -0.3725124953],
    [-0.4286156305, 0.8615072531, 0.2722019362],
    [0.6836643769, -0.3844358489, 0.6203322479],
    [-0.3277461192, -0.6270386117, 0.7066859704],
    [-0.1097956541, 0.1934318803, 0.9749507793],
    [-0.8061168708, -0.5595891568, -0.1924462683],
    [0.3007763120, 0.2232610223, -0.9271936831],
    [0.7324332526, -0.5435513569, -0.4099920156],
];
/// Center plus shell.
pub const KERNEL_POINTS: usize = 15;
/// Convolution radius in cells.
pub const RADIUS_FACTOR: f64 = 2.5;
pub const STAGES: usize = 3;
/// Fewest encoded points the pipeline accepts (one PnP sample).
pub const MIN_ENCODED_POINTS: usize = 4;

/// Kernel point offsets for influence extent `sigma`.
pub fn kernel_points(sigma: f64) -> Vec<[f64; 3]> {
    std::iter::once([0.0; 3])
        .chain(KERNEL_SHELL.iter().map(|d| {
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.map(|v| v * sigma / n)
        }))
        .collect()
}

/// Result of one voxel-grid pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPooling {
    /// Mean position of each occupied voxel, in order of first occupancy.
    pub centroids: Vec<[f64; 3]>,
    /// Output index of every input point.
    pub assignment: Vec<usize>,
    pub counts: Vec<usize>,
}

fn voxel(p: &[f64; 3], cell: f64) -> [i64; 3] {
    p.map(|v| (v / cell).floor() as i64)
}

pub fn grid_pool(points: &[[f64; 3]], cell: f64) -> GridPooling {
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<[f64; 3]> = Vec::new();
    let mut counts = Vec::new();
    let mut assignment = Vec::with_capacity(points.len());
    for p in points {
        let o = *index.entry(voxel(p, cell)).or_insert_with(|| {
            sums.push([0.0; 3]);
            counts.push(0);
            sums.len() - 1
        });
        for a in 0..3 {
            sums[o][a] += p[a];
        }
        counts[o] += 1;
        assignment.push(o);
    }
    let centroids = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.map(|v| v / c as f64))
        .collect();
    GridPooling {
        centroids,
        assignment,
        counts,
    }
}

/// Voxel-grid downsampling of points with `c`-channel row-major features:
/// returns centroids, mean-pooled features and the input-to-output assignment.
pub fn grid_downsample(points: &[[f64; 3]], features: &[f64], c: usize, cell: f64) -> (Vec<[f64; 3]>, Vec<f64>, Vec<usize>) {
    let g = grid_pool(points, cell);
    let mut pooled = vec![0.0; g.centroids.len() * c];
    for (i, &o) in g.assignment.iter().enumerate() {
        for j in 0..c {
            pooled[o * c + j] += features[i * c + j] / g.counts[o] as f64;
        }
    }
    (g.centroids, pooled, g.assignment)
}

/// Exact radius neighbors (self included) of every point, via a voxel hash
/// with cell side `radius`. Neighbor lists are in ascending index order.
pub fn radius_neighbors(points: &[[f64; 3]], radius: f64) -> Vec<Vec<usize>> {
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(voxel(p, radius)).or_default().push(i);
    }
    let r2 = radius * radius;
    points
        .iter()
        .map(|p| {
            let v = voxel(p, radius);
            let mut out = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(b) = grid.get(&[v[0] + dx, v[1] + dy, v[2] + dz]) {
                            for &j in b {
                                let q = &points[j];
                                let d2: f64 = (0..3).map(|a| (q[a] - p[a]).powi(2)).sum();
                                if d2 <= r2 {
                                    out.push(j);
                                }
                            }
                        }
                    }
                }
            }
            out.sort_unstable();
            out
        })
        .collect()
}

/// Linear-influence correlation entries `(p * K + k, q, h)` with
/// `h = max(0, 1 - |(q - p) - kappa_k| / sigma)`, nonzero only.
pub fn kpconv_entries(points: &[[f64; 3]], radius: f64, sigma: f64) -> Vec<(u32, u32, f64)> {
    let kp = kernel_points(sigma);
    let mut out = Vec::new();
    for (p, nb) in radius_neighbors(points, radius).iter().enumerate() {
        for &q in nb {
            let d: [f64; 3] = std::array::from_fn(|a| points[q][a] - points[p][a]);
            for (k, kappa) in kp.iter().enumerate() {
                let dist = (0..3).map(|a| (d[a] - kappa[a]).powi(2)).sum::<f64>().sqrt();
                let h = 1.0 - dist / sigma;
                // rounding floor: shell points exactly sigma away contribute nothing
                if h > 1e-12 {
                    out.push(((p * KERNEL_POINTS + k) as u32, q as u32, h));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub cell: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub conv: Vec<(u32, u32, f64)>,
    /// Mean-pooling entries `(out, in, 1 / count)`.
    pub pool: Vec<(u32, u32, f64)>,
}

/// Position-only precomputation of all stages for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePyramid {
    pub stages: Vec<Stage>,
    /// Final-stage centroids: the encoded points `Q`.
    pub points: Vec<[f64; 3]>,
}

impl ScenePyramid {
    pub fn build(positions: &[[f64; 3]], base_cell: f64) -> Result<Self, ModelError> {
        if positions.is_empty() {
            return config_err("no points to encode");
        }
        if !(base_cell > 0.0 && base_cell.is_finite()) {
            return config_err(format!("base cell {base_cell} must be positive"));
        }
        let mut pts = positions.to_vec();
        let mut stages = Vec::with_capacity(STAGES);
        for s in 0..STAGES {
            let cell = base_cell * (1 << s) as f64;
            let radius = RADIUS_FACTOR * cell;
            let conv = kpconv_entries(&pts, radius, radius / 2.0);
            let g = grid_pool(&pts, cell);
            let pool = g
                .assignment
                .iter()
                .enumerate()
                .map(|(i, &o)| (o as u32, i as u32, 1.0 / g.counts[o] as f64))
                .collect();
            stages.push(Stage {
                cell,
                n_in: pts.len(),
                n_out: g.centroids.len(),
                conv,
                pool,
            });
            pts = g.centroids;
        }
        if pts.len() < MIN_ENCODED_POINTS {
            return config_err(format!(
                "scene collapses to {} points after downsampling (base cell {base_cell}); use a smaller base cell",
                pts.len()
            ));
        }
        Ok(Self { stages, points: pts })
    }

    /// Base cell from the configured fraction of the bounding-box diagonal.
    pub fn for_scene(positions: &[[f64; 3]], cfg: &ModelConfig) -> Result<Self, ModelError> {
        let bbox = crate::scene_io::Aabb::of_points(positions);
        Self::build(positions, bbox.diagonal() / cfg.base_cell_divisor)
    }

    /// Point counts: input, then after each stage.
    pub fn stage_trace(&self) -> Vec<usize> {
        std::iter::once(self.stages[0].n_in).chain(self.stages.iter().map(|s| s.n_out)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SceneEncoding<T: Real> {
    pub points: Vec<[f64; 3]>,
    /// `N_g x C_c`.
    pub features: Tensor<T>,
    pub stage_trace: Vec<usize>,
}

fn entries<T: Real>(e: &[(u32, u32, f64)]) -> Rc<Vec<(u32, u32, T)>> {
    Rc::new(e.iter().map(|&(o, i, w)| (o, i, T::lit(w))).collect())
}

pub fn init<T: Real>(p: &mut ModelParams<T>, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<(), ModelError> {
    let mut c_in = INPUT_FEATURES;
    for (s, &c_out) in cfg.enc3d_channels.iter().enumerate() {
        for l in 1..=2 {
            let name = format!("enc3d.stage{}.layer{l}", s + 1);
            p.insert_normal(&format!("{name}.weight"), &[KERNEL_POINTS, c_in, c_out], (2.0 / c_in as f64).sqrt(), rng)?;
            p.insert_fill(&format!("{name}.bias"), &[c_out], 0.0)?;
            c_in = c_out;
        }
    }
    Ok(())
}

/// One KPConv layer: aggregate neighbors per kernel point, apply the
/// `[K, C_in, C_out]` weights, add bias, ReLU.
pub fn kpconv<T: Real>(
    features: &Tensor<T>,
    conv: &[(u32, u32, f64)],
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, ModelError> {
    let n = features.shape()[0];
    let ws = weight.shape().to_vec();
    let agg = features.sparse_rows(entries(conv), n * KERNEL_POINTS)?;
    let agg = agg.reshape(&[n, ws[0] * ws[1]])?;
    let w = weight.reshape(&[ws[0] * ws[1], ws[2]])?;
    Ok(agg.matmul(&w)?.add(bias)?.relu())
}

/// Encodes the `len x 56` Gaussian features over a prebuilt pyramid.
pub fn encode_scene<T: Real>(
    pyramid: &ScenePyramid,
    input_features: &[f64],
    p: &ModelParams<T>,
) -> Result<SceneEncoding<T>, ModelError> {
    let n = pyramid.stages[0].n_in;
    if input_features.len() != n * INPUT_FEATURES {
        return Err(ModelError::Argument(format!(
            "expected {n} x {INPUT_FEATURES} input features, got {} values",
            input_features.len()
        )));
    }
    let mut x = Tensor::from_f64(&[n, INPUT_FEATURES], input_features);
    for (s, stage) in pyramid.stages.iter().enumerate() {
        for l in 1..=2 {
            let name = format!("enc3d.stage{}.layer{l}", s + 1);
            x = kpconv(&x, &stage.conv, p.get(&format!("{name}.weight"))?, p.get(&format!("{name}.bias"))?)?;
        }
        x = x.sparse_rows(entries(&stage.pool), stage.n_out)?;
    }
    Ok(SceneEncoding {
        points: pyramid.points.clone(),
        features: x,
        stage_trace: pyramid.stage_trace(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()
    }

    #[test]
    fn shell_is_unit_and_spread() {
        for d in KERNEL_SHELL {
            assert!((d.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let c: Vec<f64> = (0..3).map(|a| KERNEL_SHELL.iter().map(|d| d[a]).sum::<f64>()).collect();
        assert!(c.iter().all(|v| v.abs() < 1e-6), "{c:?}");
    }

    #[test]
    fn one_voxel_gives_mean() {
        let pts: Vec<[f64; 3]> = (0..8).map(|i| [0.1 + 0.01 * i as f64, 0.2, 0.3 + 0.02 * (i % 2) as f64]).collect();
        let g = grid_pool(&pts, 1.0);
        assert_eq!(g.centroids.len(), 1);
        let m: Vec<f64> = (0..3).map(|a| pts.iter().map(|p| p[a]).sum::<f64>() / 8.0).collect();
        for a in 0..3 {
            assert!((g.centroids[0][a] - m[a]).abs() < 1e-15);
        }
    }

    #[test]
    fn distinct_voxels_are_identity() {
        let pts = vec![[0.5, 0.5, 0.5], [1.5, 0.5, 0.5], [0.5, 2.5, -0.5]];
        let g = grid_pool(&pts, 1.0);
        assert_eq!(g.centroids, pts);
        assert_eq!(g.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn radius_neighbors_match_brute_force() {
        let pts = cloud(400, 1);
        let nb = radius_neighbors(&pts, 0.13);
        for (i, p) in pts.iter().enumerate() {
            let want: Vec<usize> = (0..pts.len())
                .filter(|&j| (0..3).map(|a| (pts[j][a] - p[a]).powi(2)).sum::<f64>() <= 0.13 * 0.13)
                .collect();
            assert_eq!(nb[i], want);
        }
    }

    #[test]
    fn single_point_identity_kernel() {
        // Only the center kernel point touches a lone point (influence 1);
        // shell points sit exactly sigma away (influence 0).
        let pts = [[0.3, -0.2, 1.0]];
        let conv = kpconv_entries(&pts, 10.0, 5.0);
        assert_eq!(conv, vec![(0, 0, 1.0)]);
        let mut w = vec![0.7; KERNEL_POINTS * 3 * 3];
        for i in 0..3 {
            for j in 0..3 {
                w[i * 3 + j] = if i == j { 1.0 } else { 0.0 };
            }
        }
        let f = Tensor::<f64>::from_f64(&[1, 3], &[0.5, -2.0, 1.5]);
        let out = kpconv(
            &f,
            &conv,
            &Tensor::from_f64(&[KERNEL_POINTS, 3, 3], &w),
            &Tensor::from_f64(&[3], &[0.1, 0.1, -2.0]),
        )
        .unwrap();
        assert_eq!(out.to_vec(), vec![0.6, 0.0, 0.0]);
    }

    #[test]
    fn kpconv_is_translation_invariant() {
        let pts = cloud(60, 2);
        let moved: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] + 3.25, p[1] - 1.5, p[2] + 0.125]).collect();
        let a = kpconv_entries(&pts, 0.3, 0.15);
        let b = kpconv_entries(&moved, 0.3, 0.15);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.0, x.1), (y.0, y.1));
            assert!((x.2 - y.2).abs() < 1e-12);
        }
    }

    #[test]
    fn stage_counts_decrease_and_shapes_hold() {
        let pts = cloud(10_000, 3);
        let cfg = ModelConfig::toy();
        let pyr = ScenePyramid::build(&pts, 0.03).unwrap();
        let t = pyr.stage_trace();
        assert!(t.windows(2).all(|w| w[1] < w[0]), "{t:?}");
        let p = crate::model::init_params::<f64>(&cfg, 0).unwrap();
        let feats: Vec<f64> = (0..pts.len() * INPUT_FEATURES).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let enc = encode_scene(&pyr, &feats, &p).unwrap();
        assert_eq!(enc.features.shape(), &[t[3], cfg.c_coarse]);
        assert!(enc.features.to_vec().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn collapsing_scene_is_rejected() {
        let pts = cloud(50, 4);
        assert!(matches!(ScenePyramid::build(&pts, 10.0), Err(ModelError::Config(_))));
    }
}
