//! Bidirectional LSTM sentence encoder.
//!
//! The encoder reads a sequence of token vectors left to right and right to
//! left with two independent LSTMs and concatenates their final hidden
//! states. It is used as a sentiment feature provider. A small softmax
//! classifier on top of the encoder can be trained here at toy scale; larger
//! pre-trained encoders are loaded from disk.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::matrix::{sigmoid, softmax, Matrix};
use super::ParamSet;
use crate::error::{Error, Result};

/// One LSTM direction. Gates: input `i`, forget `f`, output `o`, cell candidate `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_g: Matrix,
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub u_g: Matrix,
    pub b_i: Matrix,
    pub b_f: Matrix,
    pub b_o: Matrix,
    pub b_g: Matrix,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Matrix::zeros(hidden_dim, input_dim);
        let u = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || Matrix::zeros(hidden_dim, 1);
        LstmParams {
            w_i: w(),
            w_f: w(),
            w_o: w(),
            w_g: w(),
            u_i: u(),
            u_f: u(),
            u_o: u(),
            u_g: u(),
            b_i: b(),
            b_f: b(),
            b_o: b(),
            b_g: b(),
        }
    }

    pub fn random(input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for m in [&mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_g, &mut p.u_i, &mut p.u_f, &mut p.u_o, &mut p.u_g] {
            *m = Matrix::uniform(m.rows(), m.cols(), scale, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_i.rows()
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w_i", &self.w_i),
            ("w_f", &self.w_f),
            ("w_o", &self.w_o),
            ("w_g", &self.w_g),
            ("u_i", &self.u_i),
            ("u_f", &self.u_f),
            ("u_o", &self.u_o),
            ("u_g", &self.u_g),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_o", &self.b_o),
            ("b_g", &self.b_g),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.w_g,
            &mut self.u_i,
            &mut self.u_f,
            &mut self.u_o,
            &mut self.u_g,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_g,
        ]
    }
}

#[derive(Debug, Clone)]
struct LstmStep {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

fn gate(w: &Matrix, x: &[f64], u: &Matrix, h: &[f64], b: &Matrix, act: fn(f64) -> f64) -> Vec<f64> {
    let mut a = b.as_slice().to_vec();
    w.matvec_acc(x, &mut a);
    u.matvec_acc(h, &mut a);
    a.into_iter().map(act).collect()
}

fn lstm_forward<'a>(xs: impl Iterator<Item = &'a [f64]>, p: &LstmParams) -> Vec<LstmStep> {
    let n = p.hidden_dim();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut steps = Vec::new();
    for x in xs {
        let i = gate(&p.w_i, x, &p.u_i, &h, &p.b_i, sigmoid);
        let f = gate(&p.w_f, x, &p.u_f, &h, &p.b_f, sigmoid);
        let o = gate(&p.w_o, x, &p.u_o, &h, &p.b_o, sigmoid);
        let g = gate(&p.w_g, x, &p.u_g, &h, &p.b_g, f64::tanh);
        let c_new: Vec<f64> = (0..n).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let h_new: Vec<f64> = (0..n).map(|k| o[k] * c_new[k].tanh()).collect();
        steps.push(LstmStep { h_prev: h, c_prev: c, i, f, o, g, c: c_new.clone(), h: h_new.clone() });
        h = h_new;
        c = c_new;
    }
    steps
}

/// Gradients for a loss that depends only on the final hidden state.
fn lstm_backward(xs: &[&[f64]], p: &LstmParams, steps: &[LstmStep], d_final: &[f64], grads: &mut LstmParams) {
    let n = p.hidden_dim();
    let mut dh = d_final.to_vec();
    let mut dc = vec![0.0; n];
    for (s, x) in steps.iter().zip(xs).rev() {
        let tc: Vec<f64> = s.c.iter().map(|c| c.tanh()).collect();
        let dc_total: Vec<f64> = (0..n).map(|k| dc[k] + dh[k] * s.o[k] * (1.0 - tc[k] * tc[k])).collect();
        let da_o: Vec<f64> = (0..n).map(|k| dh[k] * tc[k] * s.o[k] * (1.0 - s.o[k])).collect();
        let da_i: Vec<f64> = (0..n).map(|k| dc_total[k] * s.g[k] * s.i[k] * (1.0 - s.i[k])).collect();
        let da_g: Vec<f64> = (0..n).map(|k| dc_total[k] * s.i[k] * (1.0 - s.g[k] * s.g[k])).collect();
        let da_f: Vec<f64> = (0..n).map(|k| dc_total[k] * s.c_prev[k] * s.f[k] * (1.0 - s.f[k])).collect();

        let mut dh_prev = vec![0.0; n];
        for (da, u, gw, gu, gb) in [
            (&da_i, &p.u_i, &mut grads.w_i, &mut grads.u_i, &mut grads.b_i),
            (&da_f, &p.u_f, &mut grads.w_f, &mut grads.u_f, &mut grads.b_f),
            (&da_o, &p.u_o, &mut grads.w_o, &mut grads.u_o, &mut grads.b_o),
            (&da_g, &p.u_g, &mut grads.w_g, &mut grads.u_g, &mut grads.b_g),
        ] {
            gw.add_outer(da, x);
            gu.add_outer(da, &s.h_prev);
            gb.add_column(da);
            u.matvec_t_acc(da, &mut dh_prev);
        }
        dc = (0..n).map(|k| dc_total[k] * s.f[k]).collect();
        dh = dh_prev;
    }
}

/// Forward and backward LSTMs over the same sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        BiLstmParams {
            forward: LstmParams::zeros(input_dim, hidden_dim),
            backward: LstmParams::zeros(input_dim, hidden_dim),
        }
    }

    pub fn random(input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        BiLstmParams {
            forward: LstmParams::random(input_dim, hidden_dim, scale, rng),
            backward: LstmParams::random(input_dim, hidden_dim, scale, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    /// Final forward state followed by final backward state (length `2H`).
    pub fn encode(&self, xs: &[&[f64]]) -> Result<Vec<f64>> {
        bilstm_forward(xs, self)
    }
}

impl ParamSet for BiLstmParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let names_f = [
            "fwd.w_i", "fwd.w_f", "fwd.w_o", "fwd.w_g", "fwd.u_i", "fwd.u_f", "fwd.u_o", "fwd.u_g", "fwd.b_i",
            "fwd.b_f", "fwd.b_o", "fwd.b_g",
        ];
        let names_b = [
            "bwd.w_i", "bwd.w_f", "bwd.w_o", "bwd.w_g", "bwd.u_i", "bwd.u_f", "bwd.u_o", "bwd.u_g", "bwd.b_i",
            "bwd.b_f", "bwd.b_o", "bwd.b_g",
        ];
        let f = self.forward.tensors().into_iter().zip(names_f).map(|((_, m), n)| (n, m));
        let b = self.backward.tensors().into_iter().zip(names_b).map(|((_, m), n)| (n, m));
        f.chain(b).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.forward.tensors_mut();
        v.extend(self.backward.tensors_mut());
        v
    }
}

fn check_inputs(xs: &[&[f64]], d: usize) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("bi-LSTM sequence"));
    }
    if let Some(x) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::Shape(format!("bi-LSTM expects inputs of {d}, got {}", x.len())));
    }
    Ok(())
}

pub fn bilstm_forward(xs: &[&[f64]], p: &BiLstmParams) -> Result<Vec<f64>> {
    check_inputs(xs, p.input_dim())?;
    let fwd = lstm_forward(xs.iter().copied(), &p.forward);
    let bwd = lstm_forward(xs.iter().rev().copied(), &p.backward);
    let mut out = fwd.last().map(|s| s.h.clone()).unwrap_or_default();
    out.extend_from_slice(&bwd.last().map(|s| s.h.clone()).unwrap_or_default());
    Ok(out)
}

/// Bi-LSTM encoder with a softmax layer over `classes` sentiment labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentModel {
    pub encoder: BiLstmParams,
    pub head: Matrix,
    pub bias: Matrix,
}

impl SentimentModel {
    pub fn random(input_dim: usize, hidden_dim: usize, classes: usize, rng: &mut impl Rng) -> Self {
        SentimentModel {
            encoder: BiLstmParams::random(input_dim, hidden_dim, 0.08, rng),
            head: Matrix::uniform(classes, 2 * hidden_dim, 0.08, rng),
            bias: Matrix::zeros(classes, 1),
        }
    }

    pub fn predict(&self, xs: &[&[f64]]) -> Result<Vec<f64>> {
        let enc = bilstm_forward(xs, &self.encoder)?;
        let mut logits = self.bias.as_slice().to_vec();
        self.head.matvec_acc(&enc, &mut logits);
        Ok(softmax(&logits))
    }

    /// Mean cross-entropy over `batch` and its exact gradient.
    pub fn loss_and_gradients(&self, batch: &[(Vec<&[f64]>, usize)]) -> Result<(f64, SentimentModel)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("sentiment batch"));
        }
        let classes = self.head.rows();
        let h = self.encoder.hidden_dim();
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        for (xs, gold) in batch {
            if *gold >= classes {
                return Err(Error::InvalidGold(*gold));
            }
            check_inputs(xs, self.encoder.input_dim())?;
            let fwd = lstm_forward(xs.iter().copied(), &self.encoder.forward);
            let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
            let bwd = lstm_forward(rev.iter().copied(), &self.encoder.backward);
            let mut enc = fwd.last().unwrap().h.clone();
            enc.extend_from_slice(&bwd.last().unwrap().h);

            let mut logits = self.bias.as_slice().to_vec();
            self.head.matvec_acc(&enc, &mut logits);
            let p = softmax(&logits);
            loss -= p[*gold].ln() * scale;

            let mut d_logits: Vec<f64> = p.iter().map(|v| v * scale).collect();
            d_logits[*gold] -= scale;
            grads.head.add_outer(&d_logits, &enc);
            grads.bias.add_column(&d_logits);
            let mut d_enc = vec![0.0; 2 * h];
            self.head.matvec_t_acc(&d_logits, &mut d_enc);
            lstm_backward(xs, &self.encoder.forward, &fwd, &d_enc[..h], &mut grads.encoder.forward);
            lstm_backward(&rev, &self.encoder.backward, &bwd, &d_enc[h..], &mut grads.encoder.backward);
        }
        Ok((loss, grads))
    }
}

impl ParamSet for SentimentModel {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v = self.encoder.tensors();
        v.push(("head", &self.head));
        v.push(("bias", &self.bias));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.encoder.tensors_mut();
        v.push(&mut self.head);
        v.push(&mut self.bias);
        v
    }
}

/// Train a sentiment classifier on labeled token-vector sequences with Adam
/// and mini-batches. Returns the model and the per-epoch mean loss.
pub fn train_sentiment_model(
    data: &[(Vec<Vec<f64>>, usize)],
    classes: usize,
    hidden_dim: usize,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<(SentimentModel, Vec<f64>)> {
    let first = data.first().ok_or(Error::EmptyInput("sentiment training data"))?;
    let input_dim = first.0.first().map(Vec::len).ok_or(Error::EmptyInput("sentiment sequence"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SentimentModel::random(input_dim, hidden_dim, classes, &mut rng);
    let mut adam = AdamState::new(&model, AdamConfig::default());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<(Vec<&[f64]>, usize)> =
                chunk.iter().map(|&i| (data[i].0.iter().map(Vec::as_slice).collect(), data[i].1)).collect();
            let (loss, grads) = model.loss_and_gradients(&batch)?;
            adam_step(&mut model, &grads, &mut adam)?;
            total += loss;
            batches += 1;
        }
        history.push(total / batches as f64);
    }
    Ok((model, history))
}
