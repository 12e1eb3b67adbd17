//! Vanilla 3DGS scenes: binary PLY reading/writing, opacity filtering,
//! uniform subsampling and per-Gaussian encoder inputs.
//!
//! Stored fields follow the reference exporter: quaternion `rot_0..3` is
//! `(w, x, y, z)` and unnormalized, `scale_*` are log standard deviations,
//! `opacity` is a pre-sigmoid logit, `f_dc_*` and `f_rest_*` are the degree-3
//! SH coefficients with `f_rest` stored channel-major (15 per channel).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of SH coefficients per Gaussian (3 channels x 16 basis functions).
pub const SH_COEFFS: usize = 48;
/// Width of a row of [`GaussianScene::input_features`].
pub const INPUT_FEATURES: usize = 1 + SH_COEFFS + 4 + 3;
/// Default activated-opacity threshold.
pub const OPACITY_THRESHOLD: f64 = 0.9;
/// Default subsample size.
pub const SUBSAMPLE_SIZE: usize = 100_000;
/// Slack on the opacity comparison so that a logit rounded to four decimals
/// of the threshold (`2.1972` for 0.9) still passes.
pub const OPACITY_TOLERANCE: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported PLY format: {0}")]
    Unsupported(String),
    #[error("gaussian {index}: non-finite {field}")]
    Data { index: usize, field: &'static str },
    #[error("scene is empty after filtering and subsampling")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub position: [f64; 3],
    /// `(w, x, y, z)`, not necessarily unit length.
    pub rotation: [f64; 4],
    pub log_scale: [f64; 3],
    pub opacity_logit: f64,
    /// `f_dc_0..2` followed by `f_rest_0..44`.
    pub sh: [f64; SH_COEFFS],
}

impl Default for Gaussian {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: [0.0; 3],
            opacity_logit: 0.0,
            sh: [0.0; SH_COEFFS],
        }
    }
}

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scale(&self) -> [f64; 3] {
        self.log_scale.map(f64::exp)
    }

    pub fn unit_rotation(&self) -> [f64; 4] {
        let n = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            self.rotation.map(|v| v / n)
        } else {
            [1.0, 0.0, 0.0, 0.0]
        }
    }

    /// SH coefficient of `channel` (0..3) for basis function `basis` (0..16).
    pub fn sh_coeff(&self, channel: usize, basis: usize) -> f64 {
        if basis == 0 {
            self.sh[channel]
        } else {
            self.sh[3 + channel * 15 + basis - 1]
        }
    }

    /// Sets the DC term so that the rendered base color equals `rgb`.
    pub fn set_base_color(&mut self, rgb: [f64; 3]) {
        for (c, v) in rgb.iter().enumerate() {
            self.sh[c] = (v - 0.5) / crate::render::SH_C0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a [f64; 3]>) -> Self {
        let mut b = Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        };
        for p in pts {
            for a in 0..3 {
                b.min[a] = b.min[a].min(p[a]);
                b.max[a] = b.max[a].max(p[a]);
            }
        }
        b
    }

    pub fn diagonal(&self) -> f64 {
        (0..3)
            .map(|a| (self.max[a] - self.min[a]).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|a| 0.5 * (self.min[a] + self.max[a]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    pub gaussians: Vec<Gaussian>,
    pub source_path: String,
    pub bbox: Aabb,
}

impl GaussianScene {
    pub fn new(gaussians: Vec<Gaussian>, source_path: impl Into<String>) -> Self {
        let bbox = Aabb::of_points(gaussians.iter().map(|g| &g.position));
        Self {
            gaussians,
            source_path: source_path.into(),
            bbox,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Pipeline-entry check.
    pub fn ensure_nonempty(&self) -> Result<(), SceneError> {
        if self.is_empty() {
            Err(SceneError::Empty)
        } else {
            Ok(())
        }
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.gaussians.iter().map(|g| g.position).collect()
    }

    fn with_gaussians(&self, gaussians: Vec<Gaussian>) -> Self {
        Self::new(gaussians, self.source_path.clone())
    }

    /// Keeps Gaussians whose activated opacity reaches `threshold`, in order.
    pub fn filter_by_opacity(&self, threshold: f64) -> Self {
        let kept = self
            .gaussians
            .iter()
            .filter(|g| g.opacity() >= threshold - OPACITY_TOLERANCE)
            .cloned()
            .collect();
        self.with_gaussians(kept)
    }

    /// Uniform random subset of size `min(n, len)`, original order preserved.
    pub fn subsample_uniform(&self, n: usize, seed: u64) -> Self {
        if self.len() <= n {
            return self.clone();
        }
        let idx = subsample_indices(self.len(), n, seed);
        self.with_gaussians(idx.into_iter().map(|i| self.gaussians[i].clone()).collect())
    }

    /// Filter then subsample, refusing an empty result.
    pub fn prepare(&self, threshold: f64, n: usize, seed: u64) -> Result<Self, SceneError> {
        let s = self.filter_by_opacity(threshold).subsample_uniform(n, seed);
        s.ensure_nonempty()?;
        Ok(s)
    }

    /// Per-Gaussian encoder inputs, row-major `len x 56`:
    /// `[opacity, sh(48), unit quaternion(4), scale(3)]`.
    pub fn input_features(&self) -> Result<Vec<f64>, SceneError> {
        let mut out = Vec::with_capacity(self.len() * INPUT_FEATURES);
        for (index, g) in self.gaussians.iter().enumerate() {
            let bad = |field| SceneError::Data { index, field };
            if !g.position.iter().all(|v| v.is_finite()) {
                return Err(bad("position"));
            }
            if !g.opacity_logit.is_finite() {
                return Err(bad("opacity"));
            }
            if !g.sh.iter().all(|v| v.is_finite()) {
                return Err(bad("sh"));
            }
            let q = g.rotation.iter().map(|v| v * v).sum::<f64>();
            if !(q.is_finite() && q > 0.0) {
                return Err(bad("rotation"));
            }
            let s = g.scale();
            if !s.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(bad("scale"));
            }
            out.push(g.opacity());
            out.extend_from_slice(&g.sh);
            out.extend_from_slice(&g.unit_rotation());
            out.extend_from_slice(&s);
        }
        Ok(out)
    }
}

/// Sorted uniform sample of `n` distinct indices from `0..count`.
pub fn subsample_indices(count: usize, n: usize, seed: u64) -> Vec<usize> {
    if count <= n {
        return (0..count).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, count, n).into_vec();
    idx.sort_unstable();
    idx
}

/// Property names of the canonical vertex layout, in file order.
pub fn canonical_properties() -> Vec<String> {
    let mut p: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"].iter().map(|s| s.to_string()).collect();
    p.extend((0..3).map(|i| format!("f_dc_{i}")));
    p.extend((0..45).map(|i| format!("f_rest_{i}")));
    p.push("opacity".into());
    p.extend((0..3).map(|i| format!("scale_{i}")));
    p.extend((0..4).map(|i| format!("rot_{i}")));
    p
}

fn property_size(ty: &str) -> Option<usize> {
    Some(match ty {
        "char" | "uchar" | "int8" | "uint8" => 1,
        "short" | "ushort" | "int16" | "uint16" => 2,
        "int" | "uint" | "float" | "int32" | "uint32" | "float32" => 4,
        "double" | "float64" => 8,
        _ => return None,
    })
}

struct Property {
    name: String,
    ty: String,
    offset: usize,
}

/// Reads a binary little-endian 3DGS PLY.
pub fn load_ply(path: &Path) -> Result<GaussianScene, SceneError> {
    let mut reader = BufReader::new(File::open(path)?);
    let scene = read_ply(&mut reader)?;
    Ok(GaussianScene {
        source_path: path.display().to_string(),
        ..scene
    })
}

pub fn read_ply(reader: &mut impl BufRead) -> Result<GaussianScene, SceneError> {
    let fmt = |m: String| SceneError::Format(m);
    let mut line = String::new();
    let mut next_line = |reader: &mut dyn BufRead| -> Result<String, SceneError> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(SceneError::Format("unexpected end of header".into()));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(reader)? != "ply" {
        return Err(fmt("missing ply magic".into()));
    }
    let mut vertex_count: Option<usize> = None;
    let mut in_vertex = false;
    let mut props: Vec<Property> = Vec::new();
    let mut stride = 0;
    loop {
        let l = next_line(reader)?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["format", f, _] => match *f {
                "binary_little_endian" => {}
                "ascii" | "binary_big_endian" => return Err(SceneError::Unsupported(f.to_string())),
                other => return Err(fmt(format!("unknown format {other}"))),
            },
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                if vertex_count.is_some() && in_vertex {
                    // Only the vertex element is read; anything after it is ignored.
                    in_vertex = false;
                    continue;
                }
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(count.parse().map_err(|_| fmt(format!("bad vertex count {count}")))?);
                } else if vertex_count.is_none() {
                    return Err(SceneError::Unsupported(format!("element {name} before vertex")));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(SceneError::Unsupported("list property on vertex".into()));
            }
            ["property", ty, name] if in_vertex => {
                let size = property_size(ty).ok_or_else(|| fmt(format!("unknown property type {ty}")))?;
                props.push(Property {
                    name: name.to_string(),
                    ty: ty.to_string(),
                    offset: stride,
                });
                stride += size;
            }
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(fmt(format!("unexpected header line '{l}'"))),
        }
    }
    let count = vertex_count.ok_or_else(|| fmt("no vertex element".into()))?;

    let find = |name: &str| -> Result<usize, SceneError> {
        let p = props
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| SceneError::Format(format!("missing property {name}")))?;
        if p.ty != "float" && p.ty != "float32" {
            return Err(SceneError::Format(format!("property {name} must be float, found {}", p.ty)));
        }
        Ok(p.offset)
    };
    let off_pos = [find("x")?, find("y")?, find("z")?];
    let off_dc: Vec<usize> = (0..3).map(|i| find(&format!("f_dc_{i}"))).collect::<Result<_, _>>()?;
    let off_rest: Vec<usize> = (0..45).map(|i| find(&format!("f_rest_{i}"))).collect::<Result<_, _>>()?;
    let off_opacity = find("opacity")?;
    let off_scale: Vec<usize> = (0..3).map(|i| find(&format!("scale_{i}"))).collect::<Result<_, _>>()?;
    let off_rot: Vec<usize> = (0..4).map(|i| find(&format!("rot_{i}"))).collect::<Result<_, _>>()?;

    let mut buf = vec![0u8; stride];
    let mut gaussians = Vec::with_capacity(count);
    for _ in 0..count {
        reader.read_exact(&mut buf)?;
        let f = |o: usize| f32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as f64;
        let mut g = Gaussian {
            position: off_pos.map(f),
            opacity_logit: f(off_opacity),
            ..Default::default()
        };
        for a in 0..3 {
            g.log_scale[a] = f(off_scale[a]);
            g.sh[a] = f(off_dc[a]);
        }
        for (a, &o) in off_rot.iter().enumerate() {
            g.rotation[a] = f(o);
        }
        for (k, &o) in off_rest.iter().enumerate() {
            g.sh[3 + k] = f(o);
        }
        gaussians.push(g);
    }
    Ok(GaussianScene::new(gaussians, String::new()))
}

/// Writes the canonical binary layout (normals written as zero).
pub fn write_ply(scene: &GaussianScene, path: &Path) -> Result<(), SceneError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply_to(scene, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_ply_to(scene: &GaussianScene, w: &mut impl Write) -> Result<(), SceneError> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", scene.len())?;
    for p in canonical_properties() {
        writeln!(w, "property float {p}")?;
    }
    writeln!(w, "end_header")?;
    for g in &scene.gaussians {
        let mut row: Vec<f64> = g.position.to_vec();
        row.extend([0.0; 3]);
        row.extend_from_slice(&g.sh);
        row.push(g.opacity_logit);
        row.extend_from_slice(&g.log_scale);
        row.extend_from_slice(&g.rotation);
        for v in row {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    /// Independent byte-level writer: header text plus packed f32 values.
    fn raw_ply(props: &[&str], rows: &[Vec<f32>], format: &str) -> Vec<u8> {
        let mut out = format!("ply\nformat {format} 1.0\nelement vertex {}\n", rows.len()).into_bytes();
        for p in props {
            out.extend(format!("property float {p}\n").bytes());
        }
        out.extend(b"end_header\n");
        for r in rows {
            for v in r {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    fn all_props() -> Vec<String> {
        canonical_properties()
    }

    #[test]
    fn one_vertex_file() {
        let props = all_props();
        let names: Vec<&str> = props.iter().map(String::as_str).collect();
        let mut row = vec![0.0f32; props.len()];
        row[0] = 1.0;
        row[1] = 2.0;
        row[2] = 3.0;
        let op = names.iter().position(|n| *n == "opacity").unwrap();
        row[op] = 2.1972;
        let r0 = names.iter().position(|n| *n == "rot_0").unwrap();
        row[r0] = 1.0;
        let bytes = raw_ply(&names, &[row], "binary_little_endian");
        let s = read_ply(&mut Cursor::new(bytes)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.gaussians[0].position, [1.0, 2.0, 3.0]);
        let o = s.gaussians[0].opacity();
        assert!((o - 0.9).abs() < 1e-5, "{o}");
        assert!(s.bbox.contains(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn empty_vertex_block_is_valid_until_pipeline_entry() {
        let props = all_props();
        let names: Vec<&str> = props.iter().map(String::as_str).collect();
        let s = read_ply(&mut Cursor::new(raw_ply(&names, &[], "binary_little_endian"))).unwrap();
        assert!(s.is_empty());
        assert!(matches!(s.prepare(0.9, 10, 0), Err(SceneError::Empty)));
    }

    #[test]
    fn missing_opacity_is_named() {
        let props = all_props();
        let names: Vec<&str> = props.iter().map(String::as_str).filter(|n| *n != "opacity").collect();
        let err = read_ply(&mut Cursor::new(raw_ply(&names, &[], "binary_little_endian"))).unwrap_err();
        assert_eq!(err.to_string(), "format error: missing property opacity");
    }

    #[test]
    fn ascii_is_unsupported_and_truncation_is_io() {
        let props = all_props();
        let names: Vec<&str> = props.iter().map(String::as_str).collect();
        let err = read_ply(&mut Cursor::new(raw_ply(&names, &[], "ascii"))).unwrap_err();
        assert!(matches!(err, SceneError::Unsupported(_)));
        let mut bytes = raw_ply(&names, &[vec![0.0; names.len()]], "binary_little_endian");
        bytes.truncate(bytes.len() - 7);
        assert!(matches!(read_ply(&mut Cursor::new(bytes)).unwrap_err(), SceneError::Io(_)));
    }

    fn scene_with_logits(logits: &[f64]) -> GaussianScene {
        let gs = logits
            .iter()
            .enumerate()
            .map(|(i, &l)| Gaussian {
                position: [i as f64, 0.0, 0.0],
                opacity_logit: l,
                ..Default::default()
            })
            .collect();
        GaussianScene::new(gs, "mem")
    }

    #[test]
    fn opacity_filter_cases() {
        let logit95 = (0.95f64 / 0.05).ln();
        let s = scene_with_logits(&[logit95; 4]);
        assert_eq!(s.filter_by_opacity(0.9), s);
        assert!(scene_with_logits(&[0.0; 4]).filter_by_opacity(0.9).is_empty());
        let s = scene_with_logits(&[-1.0, 2.1972, 3.0]);
        let kept: Vec<f64> = s.filter_by_opacity(0.9).gaussians.iter().map(|g| g.position[0]).collect();
        assert_eq!(kept, vec![1.0, 2.0]);
    }

    #[test]
    fn filter_is_idempotent() {
        let logits: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) * 0.2).collect();
        let s = scene_with_logits(&logits);
        let once = s.filter_by_opacity(0.7);
        assert_eq!(once.filter_by_opacity(0.7), once);
    }

    #[test]
    fn subsample_identity_and_determinism() {
        let s = scene_with_logits(&vec![3.0; 500]);
        assert_eq!(s.subsample_uniform(100_000, 1), s);
        let a = s.subsample_uniform(100, 42);
        let b = s.subsample_uniform(100, 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        let xs: Vec<f64> = a.gaussians.iter().map(|g| g.position[0]).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "ordered, no duplicates");
    }

    #[test]
    fn subsample_is_uniform_over_spatial_cells() {
        use rand::Rng;
        // 1M positions, 64 cells (4x4x4); expected counts from a brute-force
        // binning of the full set.
        let count = 1_000_000;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let cell: Vec<usize> = (0..count)
            .map(|_| {
                // non-uniform spatial density so expected counts differ per cell
                let x: f64 = rng.gen::<f64>().powi(2);
                let y: f64 = rng.gen();
                let z: f64 = rng.gen::<f64>().sqrt();
                let b = |v: f64| ((v * 4.0) as usize).min(3);
                b(x) * 16 + b(y) * 4 + b(z)
            })
            .collect();
        let mut full = [0usize; 64];
        cell.iter().for_each(|&c| full[c] += 1);
        let mut got = [0usize; 64];
        for i in subsample_indices(count, n, 2024) {
            got[cell[i]] += 1;
        }
        let chi2: f64 = (0..64)
            .filter(|&c| full[c] > 0)
            .map(|c| {
                let e = n as f64 * full[c] as f64 / count as f64;
                (got[c] as f64 - e).powi(2) / e
            })
            .sum();
        // 0.999 quantile of chi-square with 63 degrees of freedom
        assert!(chi2 < 103.442, "chi2 = {chi2}");
    }

    #[test]
    fn input_features_identity_row() {
        let s = GaussianScene::new(vec![Gaussian::default()], "mem");
        let f = s.input_features().unwrap();
        let mut want = vec![0.5];
        want.extend([0.0; 48]);
        want.extend([1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(f, want);
    }

    #[test]
    fn input_features_normalize_quaternion_and_match_scalar_oracle() {
        let g = Gaussian {
            rotation: [2.0, 0.0, 0.0, 0.0],
            ..Default::default()
        };
        let f = GaussianScene::new(vec![g], "mem").input_features().unwrap();
        assert_eq!(&f[49..53], &[1.0, 0.0, 0.0, 0.0]);

        let mut g = Gaussian {
            position: [0.1, 0.2, 0.3],
            rotation: [0.3, -0.4, 1.2, 0.5],
            log_scale: [-2.0, -1.5, 0.25],
            opacity_logit: 1.3,
            ..Default::default()
        };
        for (i, v) in g.sh.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let f = GaussianScene::new(vec![g.clone()], "mem").input_features().unwrap();
        assert_eq!(f.len(), INPUT_FEATURES);
        assert!((f[0] - 1.0 / (1.0 + (-1.3f64).exp())).abs() < 1e-15);
        assert_eq!(&f[1..49], &g.sh[..]);
        let n = (0.09f64 + 0.16 + 1.44 + 0.25).sqrt();
        for (a, q) in [0.3, -0.4, 1.2, 0.5].iter().enumerate() {
            assert!((f[49 + a] - q / n).abs() < 1e-15);
        }
        for (a, l) in [-2.0f64, -1.5, 0.25].iter().enumerate() {
            assert!((f[53 + a] - l.exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn input_features_reject_non_finite() {
        let g = Gaussian {
            log_scale: [f64::NAN, 0.0, 0.0],
            ..Default::default()
        };
        let s = GaussianScene::new(vec![Gaussian::default(), g], "mem");
        assert!(matches!(s.input_features(), Err(SceneError::Data { index: 1, field: "scale" })));
    }

    #[test]
    fn writer_reproduces_vertex_payload() {
        let props = all_props();
        let names: Vec<&str> = props.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f32>> = (0..5)
            .map(|r| {
                (0..names.len())
                    .map(|c| if (3..6).contains(&c) { 0.0 } else { ((r * 71 + c) as f32 * 0.13).sin() })
                    .collect()
            })
            .collect();
        let bytes = raw_ply(&names, &rows, "binary_little_endian");
        let s = read_ply(&mut Cursor::new(bytes.clone())).unwrap();
        let mut out = Vec::new();
        write_ply_to(&s, &mut out).unwrap();
        let hdr = |b: &[u8]| b.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(&out[hdr(&out)..], &bytes[hdr(&bytes)..]);
    }
}
