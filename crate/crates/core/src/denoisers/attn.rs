use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{embed_prompt_with_dim, CondEmbedding, DenoiseError};
use crate::diffusion::{Denoiser, LatentGrid, NoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnConfig {
    /// Width of queries, keys, values and the text embedding.
    pub dim: usize,
    /// Latent channels.
    pub channels: usize,
    /// Key/value tokens derived from one conditioning embedding.
    pub tokens: usize,
    pub seed: u64,
}

impl Default for AttnConfig {
    fn default() -> Self {
        AttnConfig { dim: 16, channels: 4, tokens: 4, seed: 0 }
    }
}

/// Weights, all row-major.
///
/// Per cell: `h = lift · x + tau(t)`, `q = W_q h`. Tokens are
/// `e_j = cond + pos_j`, with `k_j = W_k e_j` and `v_j = W_v e_j`.
/// Output is `x + head · sum_j softmax(q·k / sqrt(d))_j v_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams {
    pub dim: usize,
    pub channels: usize,
    pub tokens: usize,
    /// `dim × channels`
    pub lift: Vec<f64>,
    /// `dim × dim`
    pub w_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w_v: Vec<f64>,
    /// `tokens × dim`
    pub pos: Vec<f64>,
    /// `channels × dim`
    pub head: Vec<f64>,
}

impl AttnParams {
    pub fn init(config: AttnConfig) -> Result<Self, DenoiseError> {
        let AttnConfig { dim, channels, tokens, seed } = config;
        if dim == 0 || channels == 0 || tokens == 0 {
            return Err(DenoiseError::BadParams(format!(
                "dim {dim}, channels {channels} and tokens {tokens} must all be positive"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let s = 1.0 / (fan_in as f64).sqrt();
            (0..n)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    s * v
                })
                .collect()
        };
        Ok(AttnParams {
            dim,
            channels,
            tokens,
            lift: draw(dim * channels, channels),
            w_q: draw(dim * dim, dim),
            w_k: draw(dim * dim, dim),
            w_v: draw(dim * dim, dim),
            pos: draw(tokens * dim, dim),
            head: draw(channels * dim, dim),
        })
    }

    pub fn validate(&self) -> Result<(), DenoiseError> {
        let (d, c, m) = (self.dim, self.channels, self.tokens);
        if d == 0 || c == 0 || m == 0 {
            return Err(DenoiseError::BadParams("dimensions must be positive".into()));
        }
        for (name, len, want) in [
            ("lift", self.lift.len(), d * c),
            ("w_q", self.w_q.len(), d * d),
            ("w_k", self.w_k.len(), d * d),
            ("w_v", self.w_v.len(), d * d),
            ("pos", self.pos.len(), m * d),
            ("head", self.head.len(), c * d),
        ] {
            if len != want {
                return Err(DenoiseError::BadParams(format!("{name} has {len} entries, expected {want}")));
            }
        }
        if self.tensors().iter().any(|(_, t)| t.iter().any(|v| !v.is_finite())) {
            return Err(DenoiseError::BadParams("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn tensors(&self) -> [(&'static str, &Vec<f64>); 6] {
        [
            ("lift", &self.lift),
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("pos", &self.pos),
            ("head", &self.head),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 6] {
        [
            ("lift", &mut self.lift),
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("pos", &mut self.pos),
            ("head", &mut self.head),
        ]
    }
}

/// Gradients of `sum(upstream ⊙ output)`, shaped like [`AttnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttnGrads {
    pub lift: Vec<f64>,
    pub w_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w_v: Vec<f64>,
    pub pos: Vec<f64>,
    pub head: Vec<f64>,
    /// With respect to `z_t`, flat like the latent.
    pub input: Vec<f64>,
}

impl AttnGrads {
    pub fn tensors(&self) -> [(&'static str, &Vec<f64>); 6] {
        [
            ("lift", &self.lift),
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("pos", &self.pos),
            ("head", &self.head),
        ]
    }
}

/// Row-major `rows × cols` matrix times vector.
fn matvec(m: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..rows).map(|r| m[r * cols..(r + 1) * cols].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Transposed product `mᵀ v` for a row-major `rows × cols` matrix.
fn matvec_t(m: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c] += m[r * cols + c] * v[r];
        }
    }
    out
}

fn add_outer(acc: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (r, ar) in a.iter().enumerate() {
        for (c, bc) in b.iter().enumerate() {
            acc[r * cols + c] += ar * bc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let freq = 10000f64.powf(-((i / 2 * 2) as f64) / dim as f64);
            let angle = t as f64 * freq;
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

struct Tokens {
    embeds: Vec<Vec<f64>>,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

struct CellTrace {
    h: Vec<f64>,
    q: Vec<f64>,
    weights: Vec<f64>,
    attended: Vec<f64>,
}

/// A single cross-attention block from latent cells to text tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnDenoiser {
    params: AttnParams,
}

impl AttnDenoiser {
    pub fn new(config: AttnConfig) -> Result<Self, DenoiseError> {
        Ok(AttnDenoiser { params: AttnParams::init(config)? })
    }

    pub fn from_params(params: AttnParams) -> Result<Self, DenoiseError> {
        params.validate()?;
        Ok(AttnDenoiser { params })
    }

    pub fn params(&self) -> &AttnParams {
        &self.params
    }

    fn check(&self, z_t: &LatentGrid, cond: &CondEmbedding) -> Result<(), DenoiseError> {
        if cond.vector.len() != self.params.dim {
            return Err(DenoiseError::EmbeddingDim { expected: self.params.dim, got: cond.vector.len() });
        }
        if z_t.channels() != self.params.channels {
            return Err(DenoiseError::ChannelMismatch {
                cond: cond.id.clone(),
                defined: self.params.channels,
                latent: z_t.channels(),
            });
        }
        Ok(())
    }

    fn tokens(&self, cond: &CondEmbedding) -> Tokens {
        let p = &self.params;
        let d = p.dim;
        let embeds: Vec<Vec<f64>> = (0..p.tokens)
            .map(|j| cond.vector.iter().zip(&p.pos[j * d..(j + 1) * d]).map(|(a, b)| a + b).collect())
            .collect();
        let keys = embeds.iter().map(|e| matvec(&p.w_k, d, d, e)).collect();
        let values = embeds.iter().map(|e| matvec(&p.w_v, d, d, e)).collect();
        Tokens { embeds, keys, values }
    }

    fn cell(&self, x: &[f64], tau: &[f64], tokens: &Tokens) -> CellTrace {
        let p = &self.params;
        let d = p.dim;
        let h: Vec<f64> = matvec(&p.lift, d, p.channels, x).iter().zip(tau).map(|(a, b)| a + b).collect();
        let q = matvec(&p.w_q, d, d, &h);
        let scale = 1.0 / (d as f64).sqrt();
        let scores: Vec<f64> = tokens.keys.iter().map(|k| dot(&q, k) * scale).collect();
        let weights = softmax(&scores);
        let mut attended = vec![0.0; d];
        for (a, v) in weights.iter().zip(&tokens.values) {
            for (o, vi) in attended.iter_mut().zip(v) {
                *o += a * vi;
            }
        }
        CellTrace { h, q, weights, attended }
    }

    fn traces(
        &self,
        z_t: &LatentGrid,
        t: usize,
        cond: &CondEmbedding,
    ) -> Result<(Tokens, Vec<CellTrace>), DenoiseError> {
        self.check(z_t, cond)?;
        let tokens = self.tokens(cond);
        let tau = time_embedding(t, self.params.dim);
        let traces = z_t
            .data()
            .chunks(self.params.channels)
            .map(|cell| {
                let x: Vec<f64> = cell.iter().map(|&v| v as f64).collect();
                self.cell(&x, &tau, &tokens)
            })
            .collect();
        Ok((tokens, traces))
    }

    /// Prediction in f64, flat like the latent.
    pub fn forward(&self, z_t: &LatentGrid, t: usize, cond: &CondEmbedding) -> Result<Vec<f64>, DenoiseError> {
        let (_, traces) = self.traces(z_t, t, cond)?;
        let c = self.params.channels;
        let mut out = Vec::with_capacity(z_t.data().len());
        for (cell, tr) in z_t.data().chunks(c).zip(&traces) {
            let delta = matvec(&self.params.head, c, self.params.dim, &tr.attended);
            out.extend(cell.iter().zip(delta).map(|(&x, dx)| x as f64 + dx));
        }
        Ok(out)
    }

    /// Softmax weights over the tokens, one row per cell.
    pub fn attention_weights(
        &self,
        z_t: &LatentGrid,
        t: usize,
        cond: &CondEmbedding,
    ) -> Result<Vec<Vec<f64>>, DenoiseError> {
        Ok(self.traces(z_t, t, cond)?.1.into_iter().map(|tr| tr.weights).collect())
    }

    /// Attention output before the head, one row per cell.
    pub fn attended(&self, z_t: &LatentGrid, t: usize, cond: &CondEmbedding) -> Result<Vec<Vec<f64>>, DenoiseError> {
        Ok(self.traces(z_t, t, cond)?.1.into_iter().map(|tr| tr.attended).collect())
    }

    /// The token values `W_v (cond + pos_j)`.
    pub fn values(&self, cond: &CondEmbedding) -> Result<Vec<Vec<f64>>, DenoiseError> {
        if cond.vector.len() != self.params.dim {
            return Err(DenoiseError::EmbeddingDim { expected: self.params.dim, got: cond.vector.len() });
        }
        Ok(self.tokens(cond).values)
    }

    /// Gradients of `sum(upstream ⊙ forward(z_t))` for every weight and
    /// for the input.
    pub fn backward(
        &self,
        z_t: &LatentGrid,
        t: usize,
        cond: &CondEmbedding,
        upstream: &[f64],
    ) -> Result<AttnGrads, DenoiseError> {
        let (tokens, traces) = self.traces(z_t, t, cond)?;
        if upstream.len() != z_t.data().len() {
            return Err(DenoiseError::BadParams(format!(
                "upstream has {} entries, latent has {}",
                upstream.len(),
                z_t.data().len()
            )));
        }
        let p = &self.params;
        let (d, c, m) = (p.dim, p.channels, p.tokens);
        let scale = 1.0 / (d as f64).sqrt();
        let mut g = AttnGrads {
            lift: vec![0.0; d * c],
            w_q: vec![0.0; d * d],
            w_k: vec![0.0; d * d],
            w_v: vec![0.0; d * d],
            pos: vec![0.0; m * d],
            head: vec![0.0; c * d],
            input: Vec::with_capacity(upstream.len()),
        };
        let mut d_keys = vec![vec![0.0; d]; m];
        let mut d_values = vec![vec![0.0; d]; m];

        for ((cell, tr), d_out) in z_t.data().chunks(c).zip(&traces).zip(upstream.chunks(c)) {
            let x: Vec<f64> = cell.iter().map(|&v| v as f64).collect();
            add_outer(&mut g.head, d_out, &tr.attended);
            let d_att = matvec_t(&p.head, c, d, d_out);
            let d_weights: Vec<f64> = tokens.values.iter().map(|v| dot(&d_att, v)).collect();
            let mean = dot(&tr.weights, &d_weights);
            let mut d_q = vec![0.0; d];
            for j in 0..m {
                let a = tr.weights[j];
                for (dv, da) in d_values[j].iter_mut().zip(&d_att) {
                    *dv += a * da;
                }
                let d_score = a * (d_weights[j] - mean) * scale;
                for i in 0..d {
                    d_q[i] += d_score * tokens.keys[j][i];
                    d_keys[j][i] += d_score * tr.q[i];
                }
            }
            add_outer(&mut g.w_q, &d_q, &tr.h);
            let d_h = matvec_t(&p.w_q, d, d, &d_q);
            add_outer(&mut g.lift, &d_h, &x);
            let d_x = matvec_t(&p.lift, d, c, &d_h);
            g.input.extend(d_out.iter().zip(d_x).map(|(a, b)| a + b));
        }

        for j in 0..m {
            add_outer(&mut g.w_k, &d_keys[j], &tokens.embeds[j]);
            add_outer(&mut g.w_v, &d_values[j], &tokens.embeds[j]);
            let d_e: Vec<f64> = matvec_t(&p.w_k, d, d, &d_keys[j])
                .into_iter()
                .zip(matvec_t(&p.w_v, d, d, &d_values[j]))
                .map(|(a, b)| a + b)
                .collect();
            g.pos[j * d..(j + 1) * d].copy_from_slice(&d_e);
        }
        Ok(g)
    }
}

impl Denoiser for AttnDenoiser {
    fn predict_x0(
        &self,
        z_t: &LatentGrid,
        t: usize,
        cond: &CondEmbedding,
        _schedule: &NoiseSchedule,
    ) -> Result<LatentGrid, DenoiseError> {
        let out = self.forward(z_t, t, cond)?;
        let data = out.into_iter().map(|v| v as f32).collect();
        LatentGrid::new(z_t.shape(), data).map_err(|e| DenoiseError::BadParams(e.to_string()))
    }

    fn embed(&self, text: &str) -> Result<CondEmbedding, DenoiseError> {
        embed_prompt_with_dim(text, self.params.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::LatentShape;
    use rand_chacha::ChaCha8Rng;

    fn setup(tokens: usize) -> (AttnDenoiser, LatentGrid, CondEmbedding) {
        let den = AttnDenoiser::new(AttnConfig { dim: 8, channels: 3, tokens, seed: 7 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = LatentGrid::standard_normal(LatentShape::new(2, 3, 3), &mut rng);
        let cond = den.embed("a red fox").unwrap();
        (den, z, cond)
    }

    #[test]
    fn rows_sum_to_one() {
        let (den, z, cond) = setup(5);
        for row in den.attention_weights(&z, 10, &cond).unwrap() {
            assert_eq!(row.len(), 5);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|w| *w >= 0.0));
        }
    }

    #[test]
    fn single_token_attends_to_its_value() {
        let (den, z, cond) = setup(1);
        let v = den.values(&cond).unwrap().remove(0);
        for row in den.attended(&z, 4, &cond).unwrap() {
            assert_eq!(row, v);
        }
    }

    #[test]
    fn zero_values_give_identity() {
        let (den, z, cond) = setup(3);
        let mut params = den.params().clone();
        params.w_v.iter_mut().for_each(|w| *w = 0.0);
        let den = AttnDenoiser::from_params(params).unwrap();
        let schedule = crate::diffusion::make_schedule(10, crate::diffusion::ScheduleKind::Linear).unwrap();
        assert_eq!(den.predict_x0(&z, 5, &cond, &schedule).unwrap(), z);
    }

    #[test]
    fn rejects_wrong_dims() {
        let (den, z, _) = setup(2);
        let short = embed_prompt_with_dim("x", 4).unwrap();
        assert!(matches!(den.forward(&z, 1, &short), Err(DenoiseError::EmbeddingDim { .. })));
        let z4 = LatentGrid::zeros(LatentShape::new(1, 1, 4));
        assert!(matches!(den.forward(&z4, 1, &den.embed("x").unwrap()), Err(DenoiseError::ChannelMismatch { .. })));
        let mut p = den.params().clone();
        p.head.pop();
        assert!(AttnDenoiser::from_params(p).is_err());
    }
}
