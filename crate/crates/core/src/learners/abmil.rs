//! Gated-attention multiple-instance learning with an MLP head.
//!
//! For a bag `Z` of `n` patch embeddings of dimension `d`:
//!
//! ```text
//! e_i = wᵀ (tanh(V z_i) ⊙ σ(U z_i))        V, U: h×d, w: h
//! α   = softmax(e)
//! z   = Σ α_i z_i
//! p   = σ(W3 relu(W2 relu(W1 z + b1) + b2) + b3)
//! ```
//!
//! All parameters live in one flat `f64` vector so the optimiser can treat
//! them uniformly; [`Layout`] gives the offsets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, LearnError, Result};
use crate::rng::stream;

pub const DEFAULT_ATTENTION_HIDDEN: usize = 256;
pub const DEFAULT_MLP_HIDDEN: [usize; 2] = [64, 32];

/// Shapes of a MIL model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilShape {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Attention hidden size `h`.
    pub attention_hidden: usize,
    pub mlp_hidden: [usize; 2],
}

impl MilShape {
    pub fn new(dim: usize, attention_hidden: usize) -> Self {
        Self {
            dim,
            attention_hidden,
            mlp_hidden: DEFAULT_MLP_HIDDEN,
        }
    }

    pub fn layout(&self) -> Layout {
        let (d, h, [h1, h2]) = (self.dim, self.attention_hidden, self.mlp_hidden);
        let v = 0;
        let u = v + h * d;
        let w = u + h * d;
        let w1 = w + h;
        let b1 = w1 + h1 * d;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + h2;
        Layout {
            v,
            u,
            w,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            len: b3 + 1,
        }
    }
}

/// Offsets of each parameter block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub v: usize,
    pub u: usize,
    pub w: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub w3: usize,
    pub b3: usize,
    pub len: usize,
}

/// Gated-attention MIL model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilModel {
    pub shape: MilShape,
    pub params: Vec<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub alpha: Vec<f64>,
    pub pooled: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
    t: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    r1: Vec<f64>,
    a1: Vec<f64>,
    r2: Vec<f64>,
    a2: Vec<f64>,
}

/// Gradients of the bag loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    /// Same layout as [`MilModel::params`].
    pub params: Vec<f64>,
    /// `∂loss/∂z_i` for every instance.
    pub inputs: Vec<Vec<f64>>,
}

fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| m[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Instance indices sorted lexicographically by value; equal rows keep bag
/// order, which cannot change any sum they enter.
fn canonical_order(bag: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bag.len()).collect();
    order.sort_by(|&a, &b| {
        bag[a]
            .iter()
            .zip(&bag[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Mean BCE of a logit against a 0/1 target, computed stably.
pub fn bce_with_logit(logit: f64, y: f64) -> f64 {
    softplus(logit) - y * logit
}

impl MilModel {
    /// Uniform(±1/√fan_in) weights, zero biases.
    pub fn init(shape: MilShape, seed: u64) -> Self {
        let l = shape.layout();
        let (d, h, [h1, h2]) = (shape.dim, shape.attention_hidden, shape.mlp_hidden);
        let mut p = vec![0.0; l.len];
        let mut rng = stream(seed, &[0x1A]);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            for x in &mut p[range] {
                *x = rng.random_range(-b..b);
            }
        };
        fill(l.v..l.u, d);
        fill(l.u..l.w, d);
        fill(l.w..l.w1, h);
        fill(l.w1..l.b1, d);
        fill(l.w2..l.b2, h1);
        fill(l.w3..l.b3, h2);
        Self { shape, params: p }
    }

    fn check_bag(&self, bag: &[Vec<f64>]) -> Result<()> {
        if bag.is_empty() {
            return Err(LearnError::EmptyBag);
        }
        if let Some(r) = bag.iter().find(|r| r.len() != self.shape.dim) {
            return Err(LearnError::DimensionMismatch {
                expected: self.shape.dim,
                got: r.len(),
            });
        }
        Ok(())
    }

    /// Attention weights and the pooled embedding.
    pub fn attention_forward(&self, bag: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = self.forward(bag)?;
        Ok((f.alpha, f.pooled))
    }

    pub fn forward(&self, bag: &[Vec<f64>]) -> Result<Forward> {
        self.check_bag(bag)?;
        let l = self.shape.layout();
        let p = &self.params;
        let (d, h, [h1, h2]) = (self.shape.dim, self.shape.attention_hidden, self.shape.mlp_hidden);
        let mut t = Vec::with_capacity(bag.len());
        let mut g = Vec::with_capacity(bag.len());
        let mut e = Vec::with_capacity(bag.len());
        for z in bag {
            let ti: Vec<f64> = matvec(&p[l.v..l.u], h, d, z).into_iter().map(f64::tanh).collect();
            let gi: Vec<f64> = matvec(&p[l.u..l.w], h, d, z).into_iter().map(sigmoid).collect();
            e.push((0..h).map(|k| p[l.w + k] * ti[k] * gi[k]).sum::<f64>());
            t.push(ti);
            g.push(gi);
        }
        let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = e.iter().map(|&x| (x - m).exp()).collect();
        // Sums run over instances in canonical order, so the output is
        // bit-identical for any permutation of the bag.
        let order = canonical_order(bag);
        let s: f64 = order.iter().map(|&i| ex[i]).sum();
        let alpha: Vec<f64> = ex.iter().map(|x| x / s).collect();
        let mut pooled = vec![0.0; d];
        for &i in &order {
            for (o, v) in pooled.iter_mut().zip(&bag[i]) {
                *o += alpha[i] * v;
            }
        }
        let mut r1 = matvec(&p[l.w1..l.b1], h1, d, &pooled);
        r1.iter_mut().zip(&p[l.b1..l.w2]).for_each(|(r, b)| *r += b);
        let a1: Vec<f64> = r1.iter().map(|&x| x.max(0.0)).collect();
        let mut r2 = matvec(&p[l.w2..l.b2], h2, h1, &a1);
        r2.iter_mut().zip(&p[l.b2..l.w3]).for_each(|(r, b)| *r += b);
        let a2: Vec<f64> = r2.iter().map(|&x| x.max(0.0)).collect();
        let logit = p[l.b3] + p[l.w3..l.b3].iter().zip(&a2).map(|(a, b)| a * b).sum::<f64>();
        Ok(Forward {
            alpha,
            pooled,
            logit,
            prob: sigmoid(logit),
            t,
            g,
            r1,
            a1,
            r2,
            a2,
        })
    }

    /// Probability that the bag is positive.
    pub fn predict(&self, bag: &[Vec<f64>]) -> Result<f64> {
        Ok(self.forward(bag)?.prob)
    }

    /// BCE loss of the bag.
    pub fn loss(&self, bag: &[Vec<f64>], y: f64) -> Result<f64> {
        Ok(bce_with_logit(self.forward(bag)?.logit, y))
    }

    /// Exact gradients of the BCE loss with respect to every parameter and
    /// every instance embedding.
    pub fn gradients(&self, bag: &[Vec<f64>], y: f64) -> Result<Gradients> {
        let f = self.forward(bag)?;
        let l = self.shape.layout();
        let p = &self.params;
        let (d, h, [h1, h2]) = (self.shape.dim, self.shape.attention_hidden, self.shape.mlp_hidden);
        let mut gp = vec![0.0; l.len];

        // head
        let d_logit = f.prob - y;
        gp[l.b3] = d_logit;
        for k in 0..h2 {
            gp[l.w3 + k] = d_logit * f.a2[k];
        }
        let dr2: Vec<f64> = (0..h2)
            .map(|k| if f.r2[k] > 0.0 { d_logit * p[l.w3 + k] } else { 0.0 })
            .collect();
        let mut da1 = vec![0.0; h1];
        for r in 0..h2 {
            gp[l.b2 + r] = dr2[r];
            for c in 0..h1 {
                gp[l.w2 + r * h1 + c] = dr2[r] * f.a1[c];
                da1[c] += p[l.w2 + r * h1 + c] * dr2[r];
            }
        }
        let dr1: Vec<f64> = (0..h1).map(|k| if f.r1[k] > 0.0 { da1[k] } else { 0.0 }).collect();
        let mut dpooled = vec![0.0; d];
        for r in 0..h1 {
            gp[l.b1 + r] = dr1[r];
            for c in 0..d {
                gp[l.w1 + r * d + c] = dr1[r] * f.pooled[c];
                dpooled[c] += p[l.w1 + r * d + c] * dr1[r];
            }
        }

        // pooling and softmax
        let dalpha: Vec<f64> = bag
            .iter()
            .map(|z| z.iter().zip(&dpooled).map(|(a, b)| a * b).sum())
            .collect();
        let mean_dalpha: f64 = f.alpha.iter().zip(&dalpha).map(|(a, b)| a * b).sum();
        let mut inputs: Vec<Vec<f64>> = f
            .alpha
            .iter()
            .map(|&a| dpooled.iter().map(|v| a * v).collect())
            .collect();

        // gated attention
        for (i, z) in bag.iter().enumerate() {
            let de = f.alpha[i] * (dalpha[i] - mean_dalpha);
            if de == 0.0 {
                continue;
            }
            let (t, g) = (&f.t[i], &f.g[i]);
            for k in 0..h {
                let w = p[l.w + k];
                gp[l.w + k] += de * t[k] * g[k];
                let da = de * w * g[k] * (1.0 - t[k] * t[k]);
                let db = de * w * t[k] * g[k] * (1.0 - g[k]);
                let (vrow, urow) = (l.v + k * d, l.u + k * d);
                for c in 0..d {
                    gp[vrow + c] += da * z[c];
                    gp[urow + c] += db * z[c];
                    inputs[i][c] += da * p[vrow + c] + db * p[urow + c];
                }
            }
        }
        Ok(Gradients {
            loss: bce_with_logit(f.logit, y),
            params: gp,
            inputs,
        })
    }
}

/// Parameter file: a one-line JSON header followed by the parameters as
/// little-endian `f64`.
pub fn write_mil_model<H: Serialize>(model: &MilModel, header_extra: &H, path: &std::path::Path) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Header<'a, H> {
        shape: &'a MilShape,
        n_params: usize,
        extra: &'a H,
    }
    let mut buf = serde_json::to_vec(&Header {
        shape: &model.shape,
        n_params: model.params.len(),
        extra: header_extra,
    })?;
    buf.push(b'\n');
    for v in &model.params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)
}

pub fn read_mil_model(path: &std::path::Path) -> std::io::Result<MilModel> {
    #[derive(Deserialize)]
    struct Header {
        shape: MilShape,
        n_params: usize,
    }
    let invalid = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
    let buf = std::fs::read(path)?;
    let nl = buf.iter().position(|&b| b == b'\n').ok_or_else(|| invalid("missing header"))?;
    let h: Header = serde_json::from_slice(&buf[..nl])?;
    let payload = &buf[nl + 1..];
    if h.n_params != h.shape.layout().len || payload.len() != 8 * h.n_params {
        return Err(invalid("parameter payload does not match the header"));
    }
    let params = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Ok(MilModel { shape: h.shape, params })
}
