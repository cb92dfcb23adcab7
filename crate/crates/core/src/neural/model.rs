//! The three-class window classifier: GRU over the window, attention over
//! the GRU states, genre bits appended to the attention context, then an
//! affine layer and softmax over LOW/MED/HIGH.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::attention::{self, AttentionParams};
use super::gru::{self, GruParams};
use super::matrix::{softmax, Matrix};
use super::ParamSet;
use crate::error::{Error, Result};
use crate::features::GenreVector;

pub const NUM_CLASSES: usize = 3;

/// Weights are drawn from `U(−INIT_SCALE, INIT_SCALE)`.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub genre_dim: usize,
}

impl ModelDims {
    /// Attention width defaults to the hidden size.
    pub fn new(input_dim: usize, hidden_dim: usize, genre_dim: usize) -> Self {
        ModelDims { input_dim, hidden_dim, attention_dim: hidden_dim, genre_dim }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputParams {
    /// `3 × (H + G)`, rows in LOW, MED, HIGH order.
    pub w_o: Matrix,
    pub b_o: Matrix,
}

impl ParamSet for OutputParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("w_o", &self.w_o), ("b_o", &self.b_o)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w_o, &mut self.b_o]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gru: GruParams,
    pub attention: AttentionParams,
    pub output: OutputParams,
    pub rng_seed: u64,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            gru: GruParams::zeros(dims.input_dim, dims.hidden_dim),
            attention: AttentionParams::zeros(dims.hidden_dim, dims.attention_dim),
            output: OutputParams {
                w_o: Matrix::zeros(NUM_CLASSES, dims.hidden_dim + dims.genre_dim),
                b_o: Matrix::zeros(NUM_CLASSES, 1),
            },
            rng_seed: 0,
        }
    }

    /// Uniform weights in `(−0.08, 0.08)` drawn from `seed`, zero biases.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams {
            gru: GruParams::random(dims.input_dim, dims.hidden_dim, INIT_SCALE, &mut rng),
            attention: AttentionParams::random(dims.hidden_dim, dims.attention_dim, INIT_SCALE, &mut rng),
            output: OutputParams {
                w_o: Matrix::uniform(NUM_CLASSES, dims.hidden_dim + dims.genre_dim, INIT_SCALE, &mut rng),
                b_o: Matrix::zeros(NUM_CLASSES, 1),
            },
            rng_seed: seed,
        }
    }

    /// Every tensor, biases included, uniform in `(−scale, scale)`. Used for
    /// gradient checks, where the small training init leaves some gradient
    /// entries below the resolution of finite differences.
    pub fn random(dims: ModelDims, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(dims);
        for t in m.tensors_mut() {
            *t = Matrix::uniform(t.rows(), t.cols(), scale, &mut rng);
        }
        m.rng_seed = seed;
        m
    }

    pub fn dims(&self) -> ModelDims {
        let hidden_dim = self.gru.hidden_dim();
        ModelDims {
            input_dim: self.gru.input_dim(),
            hidden_dim,
            attention_dim: self.attention.width(),
            genre_dim: self.output.w_o.cols() - hidden_dim,
        }
    }

    /// Check that every tensor agrees with the GRU's dimensions.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        let (h, a) = (d.hidden_dim, d.attention_dim);
        let expect = [
            (self.gru.w_r.shape(), (h, d.input_dim)),
            (self.gru.w_h.shape(), (h, d.input_dim)),
            (self.gru.u_z.shape(), (h, h)),
            (self.gru.u_r.shape(), (h, h)),
            (self.gru.u_h.shape(), (h, h)),
            (self.gru.b_z.shape(), (h, 1)),
            (self.gru.b_r.shape(), (h, 1)),
            (self.gru.b_h.shape(), (h, 1)),
            (self.attention.w_a.shape(), (a, h)),
            (self.attention.b_a.shape(), (a, 1)),
            (self.attention.v_a.shape(), (a, 1)),
            (self.output.w_o.shape(), (NUM_CLASSES, h + d.genre_dim)),
            (self.output.b_o.shape(), (NUM_CLASSES, 1)),
        ];
        match expect.iter().find(|(got, want)| got != want) {
            Some((got, want)) => Err(Error::Shape(format!("tensor of shape {got:?}, expected {want:?}"))),
            None => Ok(()),
        }
    }
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let gru_names =
            ["gru.w_z", "gru.w_r", "gru.w_h", "gru.u_z", "gru.u_r", "gru.u_h", "gru.b_z", "gru.b_r", "gru.b_h"];
        let att_names = ["attention.w_a", "attention.b_a", "attention.v_a"];
        let out_names = ["output.w_o", "output.b_o"];
        fn tag<'a>(ts: Vec<(&'static str, &'a Matrix)>, names: &[&'static str]) -> Vec<(&'static str, &'a Matrix)> {
            ts.into_iter().zip(names).map(|((_, m), n)| (*n, m)).collect()
        }
        let mut v = tag(self.gru.tensors(), &gru_names);
        v.extend(tag(self.attention.tensors(), &att_names));
        v.extend(tag(self.output.tensors(), &out_names));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.gru.tensors_mut();
        v.extend(self.attention.tensors_mut());
        v.extend(self.output.tensors_mut());
        v
    }
}

/// Per-unit multipliers applied to the `context ⊕ genre` vector. Entries are
/// 0 for dropped units and `1/keep` for kept ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn sample(len: usize, keep: f64, rng: &mut impl Rng) -> Self {
        DropoutMask((0..len).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect())
    }

    pub fn zeros(len: usize) -> Self {
        DropoutMask(vec![0.0; len])
    }
}

/// One training window: its slot features, the movie's genre bits and the
/// gold class index (0 = LOW, 1 = MED, 2 = HIGH).
#[derive(Debug, Clone)]
pub struct WindowExample<'a> {
    pub features: Vec<&'a [f64]>,
    pub genre: &'a GenreVector,
    pub gold: usize,
}

struct Forward {
    steps: Vec<gru::GruStep>,
    attn: attention::AttentionCache,
    /// `(context ⊕ genre) ⊙ mask`
    dropped: Vec<f64>,
    probs: Vec<f64>,
}

fn check_window(features: &[&[f64]], genre: &GenreVector, m: &ModelParams, mask: Option<&DropoutMask>) -> Result<()> {
    let d = m.dims();
    if features.is_empty() {
        return Err(Error::EmptyInput("window"));
    }
    if let Some(f) = features.iter().find(|f| f.len() != d.input_dim) {
        return Err(Error::Shape(format!("feature of length {}, model expects {}", f.len(), d.input_dim)));
    }
    if genre.len() != d.genre_dim {
        return Err(Error::Shape(format!("genre vector of length {}, model expects {}", genre.len(), d.genre_dim)));
    }
    if let Some(mask) = mask {
        if mask.0.len() != d.hidden_dim + d.genre_dim {
            return Err(Error::Shape(format!("dropout mask of length {}", mask.0.len())));
        }
    }
    Ok(())
}

fn run_forward(features: &[&[f64]], genre: &GenreVector, m: &ModelParams, mask: Option<&DropoutMask>) -> Forward {
    let steps = gru::forward(features, &m.gru);
    let hs: Vec<&[f64]> = steps.iter().map(|s| s.h.as_slice()).collect();
    let attn = attention::forward(&hs, &m.attention);
    let mut dropped = attn.context.clone();
    dropped.extend(genre.to_f64());
    if let Some(mask) = mask {
        dropped.iter_mut().zip(&mask.0).for_each(|(q, k)| *q *= k);
    }
    let mut logits = m.output.b_o.as_slice().to_vec();
    m.output.w_o.matvec_acc(&dropped, &mut logits);
    let probs = softmax(&logits);
    Forward { steps, attn, dropped, probs }
}

/// Class probabilities (LOW, MED, HIGH) for one window. Dropout is applied
/// only when a mask is given.
pub fn classify_window(
    features: &[&[f64]],
    genre: &GenreVector,
    m: &ModelParams,
    dropout_mask: Option<&DropoutMask>,
) -> Result<[f64; NUM_CLASSES]> {
    check_window(features, genre, m, dropout_mask)?;
    let f = run_forward(features, genre, m, dropout_mask);
    Ok([f.probs[0], f.probs[1], f.probs[2]])
}

/// Loss and gradient contribution of one example, scaled by `weight`.
fn example_gradients(
    ex: &WindowExample<'_>,
    m: &ModelParams,
    mask: Option<&DropoutMask>,
    weight: f64,
) -> (f64, ModelParams) {
    let f = run_forward(&ex.features, ex.genre, m, mask);
    let loss = -f.probs[ex.gold].ln() * weight;
    let mut g = m.zeros_like();

    let mut d_logits: Vec<f64> = f.probs.iter().map(|p| p * weight).collect();
    d_logits[ex.gold] -= weight;
    g.output.w_o.add_outer(&d_logits, &f.dropped);
    g.output.b_o.add_column(&d_logits);

    let mut d_dropped = vec![0.0; f.dropped.len()];
    m.output.w_o.matvec_t_acc(&d_logits, &mut d_dropped);
    let hidden = m.gru.hidden_dim();
    let mut d_context = d_dropped[..hidden].to_vec();
    if let Some(mask) = mask {
        d_context.iter_mut().zip(&mask.0).for_each(|(d, k)| *d *= k);
    }

    let hs: Vec<&[f64]> = f.steps.iter().map(|s| s.h.as_slice()).collect();
    let d_hs = attention::backward(&hs, &m.attention, &f.attn, &d_context, &mut g.attention);
    gru::backward(&ex.features, &m.gru, &f.steps, &d_hs, &mut g.gru);
    (loss, g)
}

/// Mean cross-entropy over the batch and its exact gradient.
///
/// With `dropout_keep = Some(keep)` a fresh mask is drawn from `rng` for
/// every example, in batch order, before any computation; the gradient is
/// exact for the drawn masks. Per-example gradients are computed in parallel
/// and summed in batch order.
pub fn loss_and_gradients(
    batch: &[WindowExample<'_>],
    m: &ModelParams,
    dropout_keep: Option<f64>,
    rng: &mut impl Rng,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let concat_dim = m.output.w_o.cols();
    let masks: Vec<Option<DropoutMask>> =
        batch.iter().map(|_| dropout_keep.map(|keep| DropoutMask::sample(concat_dim, keep, rng))).collect();
    for (ex, mask) in batch.iter().zip(&masks) {
        if ex.gold >= NUM_CLASSES {
            return Err(Error::InvalidGold(ex.gold));
        }
        check_window(&ex.features, ex.genre, m, mask.as_ref())?;
    }
    let weight = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, ModelParams)> = batch
        .par_iter()
        .zip(masks.par_iter())
        .map(|(ex, mask)| example_gradients(ex, m, mask.as_ref(), weight))
        .collect();
    let mut loss = 0.0;
    let mut grads = m.zeros_like();
    for (l, g) in &parts {
        loss += l;
        grads.add_assign(g);
    }
    Ok((loss, grads))
}

/// Mean cross-entropy without dropout.
pub fn batch_loss(batch: &[WindowExample<'_>], m: &ModelParams) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let mut loss = 0.0;
    for ex in batch {
        if ex.gold >= NUM_CLASSES {
            return Err(Error::InvalidGold(ex.gold));
        }
        let p = classify_window(&ex.features, ex.genre, m, None)?;
        loss -= p[ex.gold].ln();
    }
    Ok(loss / batch.len() as f64)
}
