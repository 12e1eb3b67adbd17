//! Layers shared by the encoders, alignment and matching heads: linear maps,
//! multi-head attention blocks and sinusoidal positional encodings.

use rand::Rng;

use crate::model::{config_err, ModelError};
use crate::scalar::Real;
use crate::tensor::{ModelParams, Tensor};

type R<T> = Result<Tensor<T>, ModelError>;

pub const LN_EPS: f64 = 1e-5;

pub fn init_linear<T: Real>(
    p: &mut ModelParams<T>,
    name: &str,
    input: usize,
    output: usize,
    rng: &mut impl Rng,
) -> Result<(), ModelError> {
    p.insert_normal(&format!("{name}.weight"), &[input, output], (1.0 / input as f64).sqrt(), rng)?;
    p.insert_fill(&format!("{name}.bias"), &[output], 0.0)?;
    Ok(())
}

/// `x W + b` over the last axis of `x`.
pub fn linear<T: Real>(x: &Tensor<T>, p: &ModelParams<T>, name: &str) -> R<T> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    Ok(x.matmul(w)?.add(b)?)
}

pub fn init_attention<T: Real>(
    p: &mut ModelParams<T>,
    name: &str,
    dim: usize,
    ff_mult: usize,
    rng: &mut impl Rng,
) -> Result<(), ModelError> {
    for part in ["q", "k", "v", "o"] {
        init_linear(p, &format!("{name}.{part}"), dim, dim, rng)?;
    }
    init_linear(p, &format!("{name}.ff1"), dim, dim * ff_mult, rng)?;
    init_linear(p, &format!("{name}.ff2"), dim * ff_mult, dim, rng)?;
    Ok(())
}

/// Multi-head scaled dot-product attention of `x` (`[.., n, d]`) over `src`
/// (`[.., m, d]`). Returns the head-merged, output-projected update and the
/// per-head attention weights (`[.., n, m]` each).
pub fn multi_head<T: Real>(
    x: &Tensor<T>,
    src: &Tensor<T>,
    p: &ModelParams<T>,
    name: &str,
    heads: usize,
) -> Result<(Tensor<T>, Vec<Tensor<T>>), ModelError> {
    let d = *x.shape().last().unwrap_or(&0);
    if heads == 0 || d % heads != 0 {
        return config_err(format!("{heads} heads do not divide dimension {d}"));
    }
    let axis = x.shape().len() - 1;
    let dh = d / heads;
    let q = linear(x, p, &format!("{name}.q"))?;
    let k = linear(src, p, &format!("{name}.k"))?;
    let v = linear(src, p, &format!("{name}.v"))?;
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.narrow(axis, h * dh, dh)?;
        let kh = k.narrow(axis, h * dh, dh)?;
        let vh = v.narrow(axis, h * dh, dh)?;
        let a = qh.matmul(&kh.transpose()?)?.mul_scalar(1.0 / (dh as f64).sqrt()).softmax(axis)?;
        outs.push(a.matmul(&vh)?);
        weights.push(a);
    }
    let merged = if heads == 1 { outs.pop().unwrap() } else { Tensor::concat(&outs, axis)? };
    Ok((linear(&merged, p, &format!("{name}.o"))?, weights))
}

/// Pre-norm transformer block: `y = x + MHA(LN(x), LN(src))`, `out = y + FF(LN(y))`.
pub fn attention_block<T: Real>(x: &Tensor<T>, src: &Tensor<T>, p: &ModelParams<T>, name: &str, heads: usize) -> R<T> {
    let xn = x.layer_norm(LN_EPS)?;
    let sn = if x.ptr_eq(src) { xn.clone() } else { src.layer_norm(LN_EPS)? };
    let (upd, _) = multi_head(&xn, &sn, p, name, heads)?;
    let y = x.add(&upd)?;
    let h = linear(&y.layer_norm(LN_EPS)?, p, &format!("{name}.ff1"))?.relu();
    let f = linear(&h, p, &format!("{name}.ff2"))?;
    Ok(y.add(&f)?)
}

/// Sinusoidal encoding of `n` points with `k` coordinates each (row-major,
/// expected in `[0, 1]`) into `dim` channels. Each axis gets `dim / (2k)`
/// geometric frequencies from `pi` to `32 pi` as sin/cos pairs; leftover
/// channels are zero.
pub fn sinusoidal(coords: &[f64], k: usize, dim: usize) -> Vec<f64> {
    let n = coords.len() / k;
    let nf = dim / (2 * k);
    let freqs: Vec<f64> = (0..nf)
        .map(|f| {
            let t = if nf > 1 { f as f64 / (nf - 1) as f64 } else { 0.0 };
            std::f64::consts::PI * 32f64.powf(t)
        })
        .collect();
    let mut out = vec![0.0; n * dim];
    for i in 0..n {
        let row = &mut out[i * dim..(i + 1) * dim];
        let mut c = 0;
        for a in 0..k {
            let x = coords[i * k + a];
            for &w in &freqs {
                row[c] = (w * x).sin();
                row[c + 1] = (w * x).cos();
                c += 2;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(d: usize) -> ModelParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ModelParams::new();
        init_attention(&mut p, "a", d, 2, &mut rng).unwrap();
        p
    }

    #[test]
    fn identical_keys_split_attention_evenly() {
        let p = params(8);
        let x = Tensor::from_f64(&[1, 8], &[0.3, -1.0, 0.2, 0.5, 0.9, -0.4, 0.1, 0.7]);
        let row = [0.1, 0.2, -0.3, 0.4, 0.0, 0.6, -0.7, 0.8];
        let src = Tensor::from_f64(&[2, 8], &[row, row].concat());
        let (_, w) = multi_head(&x, &src, &p, "a", 2).unwrap();
        for a in w {
            for v in a.to_vec() {
                assert!((v - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_dense_oracle() {
        let p = params(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::from_f64(&[4, 4], &xs);
        let (upd, _) = multi_head(&x, &x, &p, "a", 1).unwrap();
        // oracle: softmax(Q K^T / sqrt(d)) V, then the output projection
        let w = |n: &str| p.get(&format!("a.{n}.weight")).unwrap().to_vec();
        let b = |n: &str| p.get(&format!("a.{n}.bias")).unwrap().to_vec();
        let lin = |m: &[f64], n: &str| {
            let (wm, bm) = (w(n), b(n));
            let mut o = vec![0.0; 16];
            for i in 0..4 {
                for j in 0..4 {
                    o[i * 4 + j] = bm[j] + (0..4).map(|c| m[i * 4 + c] * wm[c * 4 + j]).sum::<f64>();
                }
            }
            o
        };
        let (q, k, v) = (lin(&xs, "q"), lin(&xs, "k"), lin(&xs, "v"));
        let mut att = vec![0.0; 16];
        for i in 0..4 {
            let s: Vec<f64> = (0..4).map(|j| (0..4).map(|c| q[i * 4 + c] * k[j * 4 + c]).sum::<f64>() / 2.0).collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..4 {
                att[i * 4 + c] = (0..4).map(|j| e[j] / z * v[j * 4 + c]).sum();
            }
        }
        let want = lin(&att, "o");
        for (a, b) in upd.to_vec().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_token_block_is_residual_plus_ff() {
        let p = params(4);
        let x = Tensor::from_f64(&[1, 4], &[1.0, -2.0, 0.5, 0.0]);
        // one token: attention weight 1, update = o(v(LN(x)))
        let v = linear(&x.layer_norm(LN_EPS).unwrap(), &p, "a.v").unwrap();
        let upd = linear(&v, &p, "a.o").unwrap();
        let y = x.add(&upd).unwrap();
        let h = linear(&y.layer_norm(LN_EPS).unwrap(), &p, "a.ff1").unwrap().relu();
        let f = linear(&h, &p, "a.ff2").unwrap();
        let want = y.add(&f).unwrap().to_vec();
        let got = attention_block(&x, &x, &p, "a", 2).unwrap().to_vec();
        assert_eq!(got, want);
    }

    #[test]
    fn heads_must_divide_dim() {
        let p = params(4);
        let x = Tensor::<f64>::zeros(&[1, 4]);
        assert!(matches!(multi_head(&x, &x, &p, "a", 3), Err(ModelError::Config(_))));
    }

    #[test]
    fn sinusoidal_layout() {
        let e = sinusoidal(&[0.0, 0.5], 2, 9);
        assert_eq!(e.len(), 9);
        // two frequencies per axis: pi and 32 pi
        assert_eq!(&e[..4], &[0.0, 1.0, 0.0, 1.0]);
        assert!((e[4] - (std::f64::consts::PI * 0.5).sin()).abs() < 1e-15);
        assert_eq!(e[8], 0.0);
    }
}
