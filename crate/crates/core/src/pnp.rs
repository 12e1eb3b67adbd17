//! Perspective-n-Point: EPnP initialization, Gauss-Newton reprojection
//! polish, and a seeded RANSAC wrapper with adaptive termination.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SymmetricEigen, UnitQuaternion, Vector6};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{project, CameraIntrinsics, Pose, Vec2, Vec3, Z_MIN};

pub const MIN_POINTS: usize = 4;
/// Gauss-Newton iterations after the closed-form estimate.
pub const GN_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PnpError {
    #[error("need at least {MIN_POINTS} correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate point configuration")]
    Degenerate,
    #[error("no consensus: best hypothesis has {0} inliers")]
    NoConsensus(usize),
}

/// A 3D world point and its observed pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub world: Vec3,
    pub pixel: Vec2,
}

impl Correspondence {
    pub fn new(world: Vec3, pixel: Vec2) -> Self {
        Self { world, pixel }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub pose: Pose,
    pub inlier_mask: Vec<bool>,
    /// Root-mean-square reprojection error over inliers, pixels.
    pub reprojection_rmse: f64,
    pub iterations_used: usize,
}

impl SolveResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RansacConfig {
    pub inlier_px: f64,
    pub max_iters: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_px: 3.0,
            max_iters: 2000,
            confidence: 0.999,
            seed: 0,
        }
    }
}

/// Reprojection error in pixels, or `None` if the point is behind the camera.
pub fn reprojection_error(c: &Correspondence, pose: &Pose, k: &CameraIntrinsics) -> Option<f64> {
    project(&c.world, pose, k).map(|p| (p.pixel - c.pixel).norm())
}

fn total_sq_error(corrs: &[Correspondence], pose: &Pose, k: &CameraIntrinsics) -> f64 {
    corrs
        .iter()
        .map(|c| reprojection_error(c, pose, k).map_or(f64::INFINITY, |e| e * e))
        .sum()
}

/// Closed-form EPnP estimate followed by Gauss-Newton on the squared
/// reprojection error.
pub fn pnp_minimal(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<Pose, PnpError> {
    if corrs.len() < MIN_POINTS {
        return Err(PnpError::TooFewPoints(corrs.len()));
    }
    if collinear(corrs) {
        return Err(PnpError::Degenerate);
    }
    let mut inits: Vec<Pose> = Vec::new();
    let epnp_res = epnp(corrs, k);
    if let Ok(p) = &epnp_res {
        inits.push(p.clone());
    }
    // Four general points leave EPnP with a four-dimensional null space; the
    // P3P roots disambiguated by the remaining points cover that case.
    if corrs.len() == MIN_POINTS || epnp_res.is_err() {
        inits.extend(p3p(&corrs[..3], k));
    }
    if inits.is_empty() {
        return Err(epnp_res.err().unwrap_or(PnpError::Degenerate));
    }
    let mut best: Option<(f64, Pose)> = None;
    for init in inits {
        if !total_sq_error(corrs, &init, k).is_finite() {
            continue;
        }
        let p = gauss_newton(corrs, k, init, GN_ITERATIONS);
        let e = total_sq_error(corrs, &p, k);
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, p));
        }
    }
    best.map(|(_, p)| p).ok_or(PnpError::Degenerate)
}

fn collinear(corrs: &[Correspondence]) -> bool {
    let n = corrs.len() as f64;
    let centroid = corrs.iter().map(|c| c.world).sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for c in corrs {
        let d = c.world - centroid;
        cov += d * d.transpose();
    }
    let mut lam: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    lam[0] <= 1e-18 || lam[1] <= 1e-12 * lam[0]
}

fn bearing(k: &CameraIntrinsics, px: &Vec2) -> Vec3 {
    let n = k.normalize(px);
    Vec3::new(n.x, n.y, 1.0).normalize()
}

/// Real roots of `c[0] x^4 + c[1] x^3 + c[2] x^2 + c[3] x + c[4]`, Newton-polished.
fn quartic_roots(c: [f64; 5]) -> Vec<f64> {
    if c[0].abs() < 1e-14 * c.iter().map(|v| v.abs()).fold(0.0, f64::max) {
        return Vec::new();
    }
    let a: Vec<f64> = c[1..].iter().map(|v| v / c[0]).collect();
    let comp = nalgebra::Matrix4::new(
        -a[0], -a[1], -a[2], -a[3], 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
    );
    let f = |x: f64| (((x + a[0]) * x + a[1]) * x + a[2]) * x + a[3];
    let df = |x: f64| ((4.0 * x + 3.0 * a[0]) * x + 2.0 * a[1]) * x + a[2];
    comp.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..4 {
                let d = df(x);
                if d == 0.0 {
                    break;
                }
                x -= f(x) / d;
            }
            x
        })
        .collect()
}

/// Grunert's three-point solutions.
fn p3p(corrs: &[Correspondence], k: &CameraIntrinsics) -> Vec<Pose> {
    let f: Vec<Vec3> = corrs.iter().map(|c| bearing(k, &c.pixel)).collect();
    let w: Vec<Vec3> = corrs.iter().map(|c| c.world).collect();
    let a2 = (w[1] - w[2]).norm_squared();
    let b2 = (w[0] - w[2]).norm_squared();
    let c2 = (w[0] - w[1]).norm_squared();
    if a2 <= 0.0 || b2 <= 0.0 || c2 <= 0.0 {
        return Vec::new();
    }
    let (ca, cb, cg) = (f[1].dot(&f[2]), f[0].dot(&f[2]), f[0].dot(&f[1]));
    let amc = (a2 - c2) / b2;
    let apc = (a2 + c2) / b2;
    let coeffs = [
        (amc - 1.0).powi(2) - 4.0 * c2 / b2 * ca * ca,
        4.0 * (amc * (1.0 - amc) * cb - (1.0 - apc) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb),
        2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cb * cb + 2.0 * (b2 - c2) / b2 * ca * ca
            - 4.0 * apc * ca * cb * cg
            + 2.0 * (b2 - a2) / b2 * cg * cg),
        4.0 * (-amc * (1.0 + amc) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - apc) * ca * cg),
        (1.0 + amc).powi(2) - 4.0 * a2 / b2 * cg * cg,
    ];
    let mut out = Vec::new();
    for v in quartic_roots(coeffs) {
        let den = 2.0 * (cg - v * ca);
        if den.abs() < 1e-12 {
            continue;
        }
        let u = ((-1.0 + amc) * v * v - 2.0 * amc * cb * v + 1.0 + amc) / den;
        let q = 1.0 + v * v - 2.0 * v * cb;
        if q <= 0.0 {
            continue;
        }
        let s1 = (b2 / q).sqrt();
        let (s2, s3) = (u * s1, v * s1);
        if s2 <= 0.0 || s3 <= 0.0 {
            continue;
        }
        let cam = [f[0] * s1, f[1] * s2, f[2] * s3];
        if let Some(p) = kabsch(&w, &cam) {
            out.push(p);
        }
    }
    out
}

fn kabsch(world: &[Vec3], cam: &[Vec3]) -> Option<Pose> {
    let n = world.len() as f64;
    let cw = world.iter().sum::<Vec3>() / n;
    let cc = cam.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (w, c) in world.iter().zip(cam) {
        h += (c - cc) * (w - cw).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    let t = cc - r * cw;
    Some(Pose::from_matrix(&r, t))
}

fn epnp(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<Pose, PnpError> {
    let n = corrs.len();
    let world: Vec<Vec3> = corrs.iter().map(|c| c.world).collect();
    let centroid = world.iter().sum::<Vec3>() / n as f64;
    let mut cov = Matrix3::zeros();
    for p in &world {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    if lam[0] <= 1e-18 || lam[1] <= 1e-12 * lam[0] {
        return Err(PnpError::Degenerate);
    }
    let planar = lam[2] <= 1e-10 * lam[0];
    let axes: Vec<Vec3> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let nc = if planar { 3 } else { 4 };
    let mut ctrl = vec![centroid];
    for a in 0..nc - 1 {
        ctrl.push(centroid + axes[a] * (lam[a] / n as f64).sqrt());
    }
    // Barycentric coordinates: offsets along the orthogonal control axes.
    let alphas: Vec<Vec<f64>> = world
        .iter()
        .map(|p| {
            let d = p - centroid;
            let mut al = vec![0.0; nc];
            for a in 0..nc - 1 {
                let ax = ctrl[a + 1] - centroid;
                al[a + 1] = d.dot(&ax) / ax.norm_squared();
            }
            al[0] = 1.0 - al[1..].iter().sum::<f64>();
            al
        })
        .collect();

    let dim = 3 * nc;
    let mut m = DMatrix::<f64>::zeros(2 * n, dim);
    for (i, c) in corrs.iter().enumerate() {
        let u = k.normalize(&c.pixel);
        for j in 0..nc {
            let a = alphas[i][j];
            m[(2 * i, 3 * j)] = a;
            m[(2 * i, 3 * j + 2)] = -a * u.x;
            m[(2 * i + 1, 3 * j + 1)] = a;
            m[(2 * i + 1, 3 * j + 2)] = -a * u.y;
        }
    }
    let mtm = m.transpose() * &m;
    let eig = SymmetricEigen::new(mtm);
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let null: Vec<DVector<f64>> = idx.iter().take(3).map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    let pairs: Vec<(usize, usize)> = (0..nc).flat_map(|a| (a + 1..nc).map(move |b| (a, b))).collect();
    let d2: Vec<f64> = pairs.iter().map(|&(a, b)| (ctrl[a] - ctrl[b]).norm_squared()).collect();
    let cp = |v: &DVector<f64>, j: usize| Vec3::new(v[3 * j], v[3 * j + 1], v[3 * j + 2]);
    let diff = |v: &DVector<f64>, a: usize, b: usize| cp(v, a) - cp(v, b);

    let mut candidates: Vec<DVector<f64>> = Vec::new();
    // One null vector: scale from control-point distances.
    {
        let v = &null[0];
        let (mut num, mut den) = (0.0, 0.0);
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let l = diff(v, a, b).norm();
            num += l * d2[p].sqrt();
            den += l * l;
        }
        if den > 0.0 {
            candidates.push(v * (num / den));
        }
    }
    // Two and three null vectors: linearized distance constraints in the beta products.
    for nv in [2usize, 3] {
        if nv == 3 && nc < 4 {
            continue;
        }
        let terms: Vec<(usize, usize)> = (0..nv).flat_map(|a| (a..nv).map(move |b| (a, b))).collect();
        let mut l = DMatrix::<f64>::zeros(pairs.len(), terms.len());
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let dv: Vec<Vec3> = null[..nv].iter().map(|v| diff(v, a, b)).collect();
            for (t, &(i, j)) in terms.iter().enumerate() {
                l[(p, t)] = if i == j { dv[i].norm_squared() } else { 2.0 * dv[i].dot(&dv[j]) };
            }
        }
        let rhs = DVector::from_vec(d2.clone());
        let Ok(sol) = l.clone().svd(true, true).solve(&rhs, 1e-12) else { continue };
        let b11 = sol[0];
        if b11 <= 0.0 {
            continue;
        }
        let b1 = b11.sqrt();
        let mut betas = vec![b1];
        for j in 1..nv {
            let t = terms.iter().position(|&x| x == (0, j)).unwrap();
            betas.push(sol[t] / b1);
        }
        let mut x = DVector::zeros(dim);
        for (b, v) in betas.iter().zip(&null) {
            x += v * *b;
        }
        candidates.push(x);
    }

    let mut best: Option<(f64, Pose)> = None;
    for mut x in candidates {
        let cam = |x: &DVector<f64>| -> Vec<Vec3> {
            alphas
                .iter()
                .map(|al| (0..nc).map(|j| cp(x, j) * al[j]).sum::<Vec3>())
                .collect()
        };
        let mut pc = cam(&x);
        if pc.iter().map(|p| p.z).sum::<f64>() < 0.0 {
            x = -x;
            pc = cam(&x);
        }
        let Some(pose) = kabsch(&world, &pc) else { continue };
        let err = total_sq_error(corrs, &pose, k);
        if err.is_finite() && best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, pose));
        }
    }
    best.map(|(_, p)| p).ok_or(PnpError::Degenerate)
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Gauss-Newton on the summed squared reprojection error with left-multiplied
/// rotation updates; a step is kept only if it lowers the cost.
pub fn gauss_newton(corrs: &[Correspondence], k: &CameraIntrinsics, init: Pose, iters: usize) -> Pose {
    let mut pose = init;
    let mut cost = total_sq_error(corrs, &pose, k);
    for _ in 0..iters {
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        let r = pose.rotation_matrix();
        for c in corrs {
            let rp = r * c.world;
            let xc = rp + pose.translation;
            if xc.z <= Z_MIN {
                continue;
            }
            let iz = 1.0 / xc.z;
            let res = Vec2::new(k.fx * xc.x * iz + k.cx - c.pixel.x, k.fy * xc.y * iz + k.cy - c.pixel.y);
            let dproj = nalgebra::Matrix2x3::new(
                k.fx * iz,
                0.0,
                -k.fx * xc.x * iz * iz,
                0.0,
                k.fy * iz,
                -k.fy * xc.y * iz * iz,
            );
            let drot = -skew(&rp);
            let mut j = nalgebra::Matrix2x6::<f64>::zeros();
            j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(dproj * drot));
            j.fixed_view_mut::<2, 3>(0, 3).copy_from(&dproj);
            jtj += j.transpose() * j;
            jtr += j.transpose() * res;
        }
        let Some(step) = jtj.cholesky().map(|ch| ch.solve(&(-jtr))) else { break };
        let dr = UnitQuaternion::from_scaled_axis(Vec3::new(step[0], step[1], step[2]));
        let mut rot = dr * pose.rotation;
        rot.renormalize();
        let cand = Pose::new(rot, pose.translation + Vec3::new(step[3], step[4], step[5]));
        let c2 = total_sq_error(corrs, &cand, k);
        if !(c2 < cost) {
            break;
        }
        let done = step.norm() < 1e-15;
        pose = cand;
        cost = c2;
        if done {
            break;
        }
    }
    pose
}

/// Inlier mask (error strictly below `thr`), count, and inlier RMSE.
pub fn inliers(corrs: &[Correspondence], pose: &Pose, k: &CameraIntrinsics, thr: f64) -> (Vec<bool>, usize, f64) {
    let mut mask = Vec::with_capacity(corrs.len());
    let (mut count, mut sq) = (0, 0.0);
    for c in corrs {
        match reprojection_error(c, pose, k) {
            Some(e) if e < thr => {
                mask.push(true);
                count += 1;
                sq += e * e;
            }
            _ => mask.push(false),
        }
    }
    let rmse = if count > 0 { (sq / count as f64).sqrt() } else { f64::INFINITY };
    (mask, count, rmse)
}

fn required_iterations(inlier_ratio: f64, confidence: f64, max_iters: usize) -> usize {
    let w4 = inlier_ratio.powi(MIN_POINTS as i32);
    if w4 >= 1.0 - 1e-15 {
        return 1;
    }
    if w4 <= 0.0 {
        return max_iters;
    }
    let n = (1.0 - confidence).ln() / (1.0 - w4).ln();
    if n.is_finite() {
        (n.ceil().max(1.0) as usize).min(max_iters)
    } else {
        max_iters
    }
}

/// RANSAC over 4-point EPnP hypotheses; the best hypothesis (most inliers,
/// then lowest inlier RMSE, then earliest) is re-solved on its inlier set.
pub fn ransac_pnp(corrs: &[Correspondence], k: &CameraIntrinsics, cfg: &RansacConfig) -> Result<SolveResult, PnpError> {
    if corrs.len() < MIN_POINTS {
        return Err(PnpError::TooFewPoints(corrs.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, f64, Pose)> = None;
    let mut needed = cfg.max_iters;
    let mut iters = 0;
    while iters < needed.min(cfg.max_iters) {
        iters += 1;
        let sample: Vec<Correspondence> = index::sample(&mut rng, corrs.len(), MIN_POINTS)
            .into_iter()
            .map(|i| corrs[i])
            .collect();
        let Ok(pose) = pnp_minimal(&sample, k) else { continue };
        let (_, count, rmse) = inliers(corrs, &pose, k, cfg.inlier_px);
        let better = match &best {
            None => count > 0,
            Some((bc, br, _)) => count > *bc || (count == *bc && rmse < *br),
        };
        if better {
            best = Some((count, rmse, pose));
            needed = required_iterations(count as f64 / corrs.len() as f64, cfg.confidence, cfg.max_iters);
        }
    }
    let (count, _, hyp) = best.ok_or(PnpError::NoConsensus(0))?;
    if count < MIN_POINTS {
        return Err(PnpError::NoConsensus(count));
    }
    let (mask, _, _) = inliers(corrs, &hyp, k, cfg.inlier_px);
    let inlier_set: Vec<Correspondence> = corrs.iter().zip(&mask).filter(|(_, &m)| m).map(|(c, _)| *c).collect();
    let pose = match pnp_minimal(&inlier_set, k) {
        Ok(p) if total_sq_error(&inlier_set, &p, k) <= total_sq_error(&inlier_set, &hyp, k) => p,
        _ => hyp,
    };
    let (mask, count, rmse) = inliers(corrs, &pose, k, cfg.inlier_px);
    if count < MIN_POINTS {
        return Err(PnpError::NoConsensus(count));
    }
    Ok(SolveResult {
        pose,
        inlier_mask: mask,
        reprojection_rmse: rmse,
        iterations_used: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose_error;
    use rand::Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(400.0, 400.0, 240.0, 240.0, 480, 480).unwrap()
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let q = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        // camera 4 units from the origin looking roughly at it
        let t = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(3.5..4.5));
        Pose::new(rot, t)
    }

    fn synth(rng: &mut impl Rng, pose: &Pose, n: usize, planar: bool) -> Vec<Correspondence> {
        let mut out = Vec::new();
        while out.len() < n {
            let z = if planar { 0.0 } else { rng.gen_range(-1.0..1.0) };
            let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), z);
            if let Some(p) = project(&x, pose, &k()) {
                if k().contains(&p.pixel) {
                    out.push(Correspondence::new(x, p.pixel));
                }
            }
        }
        out
    }

    #[test]
    fn six_exact_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let gt = random_pose(&mut rng);
            let c = synth(&mut rng, &gt, 6, false);
            let e = pose_error(&pnp_minimal(&c, &k()).unwrap(), &gt);
            assert!(e.translation < 1e-6 && e.rotation_deg < 1e-4, "{e:?}");
        }
    }

    #[test]
    fn four_general_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let gt = random_pose(&mut rng);
            let c = synth(&mut rng, &gt, 4, false);
            let e = pose_error(&pnp_minimal(&c, &k()).unwrap(), &gt);
            assert!(e.translation < 1e-5 && e.rotation_deg < 1e-3, "{e:?}");
        }
    }

    #[test]
    fn four_coplanar_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let gt = random_pose(&mut rng);
            let c = synth(&mut rng, &gt, 4, true);
            let e = pose_error(&pnp_minimal(&c, &k()).unwrap(), &gt);
            assert!(e.translation < 1e-5 && e.rotation_deg < 1e-3, "{e:?}");
        }
    }

    #[test]
    fn too_few_and_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = random_pose(&mut rng);
        let c = synth(&mut rng, &gt, 3, false);
        assert_eq!(pnp_minimal(&c, &k()), Err(PnpError::TooFewPoints(3)));
        let line: Vec<Correspondence> = (0..6)
            .map(|i| {
                let x = Vec3::new(i as f64 * 0.1, 0.0, 0.0);
                Correspondence::new(x, project(&x, &gt, &k()).unwrap().pixel)
            })
            .collect();
        assert_eq!(pnp_minimal(&line, &k()), Err(PnpError::Degenerate));
    }

    #[test]
    fn ransac_without_outliers_equals_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = random_pose(&mut rng);
        let c = synth(&mut rng, &gt, 40, false);
        let r = ransac_pnp(&c, &k(), &RansacConfig::default()).unwrap();
        let direct = pnp_minimal(&c, &k()).unwrap();
        assert!((r.pose.translation - direct.translation).norm() < 1e-9);
        assert!(r.pose.rotation.angle_to(&direct.rotation) < 1e-9);
        assert!(r.inlier_mask.iter().all(|&b| b));
        assert!(r.reprojection_rmse < 1e-6);
        assert!(r.iterations_used <= 10, "{}", r.iterations_used);
    }

    #[test]
    fn order_independence_on_exact_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = random_pose(&mut rng);
        let c = synth(&mut rng, &gt, 20, false);
        let mut rev = c.clone();
        rev.reverse();
        let (a, b) = (pnp_minimal(&c, &k()).unwrap(), pnp_minimal(&rev, &k()).unwrap());
        assert!((a.translation - b.translation).norm() < 1e-9);
        assert!(a.rotation.angle_to(&b.rotation) < 1e-9);
    }

    #[test]
    fn all_outliers_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c: Vec<Correspondence> = (0..30)
            .map(|_| {
                Correspondence::new(
                    Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    Vec2::new(rng.gen_range(0.0..480.0), rng.gen_range(0.0..480.0)),
                )
            })
            .collect();
        assert!(matches!(ransac_pnp(&c, &k(), &RansacConfig::default()), Err(PnpError::NoConsensus(_))));
    }

    #[test]
    fn iteration_formula() {
        assert_eq!(required_iterations(1.0, 0.999, 2000), 1);
        assert_eq!(required_iterations(0.0, 0.999, 2000), 2000);
        // w = 0.5: log(0.001)/log(1-1/16) = 107.03 → 108
        assert_eq!(required_iterations(0.5, 0.999, 2000), 108);
    }
}
