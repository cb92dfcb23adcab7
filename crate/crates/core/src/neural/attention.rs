use rand::Rng;

use super::matrix::{dot, softmax, Matrix};
use super::ParamSet;
use crate::error::{Error, Result};

/// Additive attention: `score_t = v · tanh(W h_t + b)`, weights are the
/// softmax of the scores and the context is the weighted sum of states.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `A × H`
    pub w_a: Matrix,
    pub b_a: Matrix,
    pub v_a: Matrix,
}

impl AttentionParams {
    pub fn zeros(hidden_dim: usize, width: usize) -> Self {
        AttentionParams {
            w_a: Matrix::zeros(width, hidden_dim),
            b_a: Matrix::zeros(width, 1),
            v_a: Matrix::zeros(width, 1),
        }
    }

    pub fn random(hidden_dim: usize, width: usize, scale: f64, rng: &mut impl Rng) -> Self {
        AttentionParams {
            w_a: Matrix::uniform(width, hidden_dim, scale, rng),
            b_a: Matrix::zeros(width, 1),
            v_a: Matrix::uniform(width, 1, scale, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_a.cols()
    }

    pub fn width(&self) -> usize {
        self.w_a.rows()
    }
}

impl ParamSet for AttentionParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("w_a", &self.w_a), ("b_a", &self.b_a), ("v_a", &self.v_a)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w_a, &mut self.b_a, &mut self.v_a]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    /// `tanh(W h_t + b)` per step
    pub projected: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

pub(crate) fn scores(hs: &[&[f64]], p: &AttentionParams) -> (Vec<Vec<f64>>, Vec<f64>) {
    let projected: Vec<Vec<f64>> = hs
        .iter()
        .map(|h| {
            let mut a = p.b_a.as_slice().to_vec();
            p.w_a.matvec_acc(h, &mut a);
            a.into_iter().map(f64::tanh).collect()
        })
        .collect();
    let scores = projected.iter().map(|u| dot(p.v_a.as_slice(), u)).collect();
    (projected, scores)
}

pub(crate) fn forward(hs: &[&[f64]], p: &AttentionParams) -> AttentionCache {
    let (projected, scores) = scores(hs, p);
    let weights = softmax(&scores);
    let mut context = vec![0.0; p.hidden_dim()];
    for (h, &w) in hs.iter().zip(&weights) {
        context.iter_mut().zip(h.iter()).for_each(|(c, x)| *c += w * x);
    }
    AttentionCache { projected, weights, context }
}

/// Attend over `hs`, returning the context vector and the attention weights.
pub fn attention(hs: &[&[f64]], p: &AttentionParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if hs.is_empty() {
        return Err(Error::EmptyInput("attention sequence"));
    }
    if let Some(h) = hs.iter().find(|h| h.len() != p.hidden_dim()) {
        return Err(Error::Shape(format!("attention expects states of {}, got {}", p.hidden_dim(), h.len())));
    }
    let c = forward(hs, p);
    Ok((c.context, c.weights))
}

/// Given `∂L/∂context`, accumulate parameter gradients and return `∂L/∂h_t`.
pub(crate) fn backward(
    hs: &[&[f64]],
    p: &AttentionParams,
    cache: &AttentionCache,
    d_context: &[f64],
    grads: &mut AttentionParams,
) -> Vec<Vec<f64>> {
    let d_weights: Vec<f64> = hs.iter().map(|h| dot(d_context, h)).collect();
    let mean: f64 = cache.weights.iter().zip(&d_weights).map(|(a, d)| a * d).sum();
    let mut d_hs = Vec::with_capacity(hs.len());
    for (t, h) in hs.iter().enumerate() {
        let a = cache.weights[t];
        let d_score = a * (d_weights[t] - mean);
        let u = &cache.projected[t];
        let mut dh: Vec<f64> = d_context.iter().map(|d| a * d).collect();
        if d_score != 0.0 {
            grads.v_a.add_column(&u.iter().map(|x| d_score * x).collect::<Vec<_>>());
            let d_pre: Vec<f64> = u.iter().zip(p.v_a.as_slice()).map(|(x, v)| d_score * v * (1.0 - x * x)).collect();
            grads.w_a.add_outer(&d_pre, h);
            grads.b_a.add_column(&d_pre);
            p.w_a.matvec_t_acc(&d_pre, &mut dh);
        }
        d_hs.push(dh);
    }
    d_hs
}
