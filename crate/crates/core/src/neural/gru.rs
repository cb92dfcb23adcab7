use rand::Rng;

use super::matrix::{sigmoid, Matrix};
use super::ParamSet;
use crate::error::{Error, Result};

/// Single-layer GRU with update gate `z`, reset gate `r` and candidate `h̃`:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = z ⊙ h + (1 − z) ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Matrix,
    pub b_r: Matrix,
    pub b_h: Matrix,
}

impl GruParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Matrix::zeros(hidden_dim, input_dim);
        let u = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || Matrix::zeros(hidden_dim, 1);
        GruParams { w_z: w(), w_r: w(), w_h: w(), u_z: u(), u_r: u(), u_h: u(), b_z: b(), b_r: b(), b_h: b() }
    }

    /// Weights uniform in `(−scale, scale)`, biases zero.
    pub fn random(input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for m in [&mut p.w_z, &mut p.w_r, &mut p.w_h, &mut p.u_z, &mut p.u_r, &mut p.u_h] {
            *m = Matrix::uniform(m.rows(), m.cols(), scale, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }
}

impl ParamSet for GruParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GruStep {
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub candidate: Vec<f64>,
    pub h: Vec<f64>,
}

fn affine(w: &Matrix, x: &[f64], u: &Matrix, h: &[f64], b: &Matrix) -> Vec<f64> {
    let mut a = b.as_slice().to_vec();
    w.matvec_acc(x, &mut a);
    u.matvec_acc(h, &mut a);
    a
}

pub(crate) fn step_cached(x: &[f64], h: &[f64], p: &GruParams) -> GruStep {
    let z: Vec<f64> = affine(&p.w_z, x, &p.u_z, h, &p.b_z).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = affine(&p.w_r, x, &p.u_r, h, &p.b_r).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(r, h)| r * h).collect();
    let candidate: Vec<f64> = affine(&p.w_h, x, &p.u_h, &rh, &p.b_h).into_iter().map(f64::tanh).collect();
    let h_new = (0..h.len()).map(|i| z[i] * h[i] + (1.0 - z[i]) * candidate[i]).collect();
    GruStep { h_prev: h.to_vec(), z, r, candidate, h: h_new }
}

/// One recurrence step.
pub fn gru_step(x: &[f64], h: &[f64], p: &GruParams) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() || h.len() != p.hidden_dim() {
        return Err(Error::Shape(format!(
            "gru_step expects x of {} and h of {}, got {} and {}",
            p.input_dim(),
            p.hidden_dim(),
            x.len(),
            h.len()
        )));
    }
    Ok(step_cached(x, h, p).h)
}

/// Run the recurrence from a zero state.
pub(crate) fn forward(xs: &[&[f64]], p: &GruParams) -> Vec<GruStep> {
    let mut h = vec![0.0; p.hidden_dim()];
    let mut steps = Vec::with_capacity(xs.len());
    for x in xs {
        let s = step_cached(x, &h, p);
        h.clone_from(&s.h);
        steps.push(s);
    }
    steps
}

/// Backpropagate `d_hs[t] = ∂L/∂h_t` (direct contributions only) through time,
/// accumulating parameter gradients into `grads`.
pub(crate) fn backward(xs: &[&[f64]], p: &GruParams, steps: &[GruStep], d_hs: &[Vec<f64>], grads: &mut GruParams) {
    let hdim = p.hidden_dim();
    let mut carry = vec![0.0; hdim];
    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let x = xs[t];
        let dh: Vec<f64> = (0..hdim).map(|i| d_hs[t][i] + carry[i]).collect();

        let mut dh_prev: Vec<f64> = (0..hdim).map(|i| dh[i] * s.z[i]).collect();
        let da_z: Vec<f64> =
            (0..hdim).map(|i| dh[i] * (s.h_prev[i] - s.candidate[i]) * s.z[i] * (1.0 - s.z[i])).collect();
        let da_h: Vec<f64> =
            (0..hdim).map(|i| dh[i] * (1.0 - s.z[i]) * (1.0 - s.candidate[i] * s.candidate[i])).collect();

        let rh: Vec<f64> = (0..hdim).map(|i| s.r[i] * s.h_prev[i]).collect();
        let mut d_rh = vec![0.0; hdim];
        p.u_h.matvec_t_acc(&da_h, &mut d_rh);
        let da_r: Vec<f64> = (0..hdim).map(|i| d_rh[i] * s.h_prev[i] * s.r[i] * (1.0 - s.r[i])).collect();
        for i in 0..hdim {
            dh_prev[i] += d_rh[i] * s.r[i];
        }

        grads.w_h.add_outer(&da_h, x);
        grads.u_h.add_outer(&da_h, &rh);
        grads.b_h.add_column(&da_h);

        grads.w_z.add_outer(&da_z, x);
        grads.u_z.add_outer(&da_z, &s.h_prev);
        grads.b_z.add_column(&da_z);
        p.u_z.matvec_t_acc(&da_z, &mut dh_prev);

        grads.w_r.add_outer(&da_r, x);
        grads.u_r.add_outer(&da_r, &s.h_prev);
        grads.b_r.add_column(&da_r);
        p.u_r.matvec_t_acc(&da_r, &mut dh_prev);

        carry = dh_prev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_halve_the_state() {
        let p = GruParams::zeros(3, 1);
        let h = gru_step(&[0.3, -2.0, 7.0], &[0.8], &p).unwrap();
        assert!((h[0] - 0.4).abs() < 1e-15);
        assert_eq!(gru_step(&[1.0, 1.0, 1.0], &[0.0], &p).unwrap(), vec![0.0]);
    }

    #[test]
    fn shape_errors() {
        let p = GruParams::zeros(3, 2);
        assert!(matches!(gru_step(&[1.0], &[0.0, 0.0], &p), Err(Error::Shape(_))));
        assert!(matches!(gru_step(&[1.0, 2.0, 3.0], &[0.0], &p), Err(Error::Shape(_))));
    }

    /// Straight-line evaluation, one scalar at a time.
    #[allow(clippy::needless_range_loop)]
    fn scalar_oracle(x: &[f64], h: &[f64], p: &GruParams) -> Vec<f64> {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let n = h.len();
        let mut z = vec![0.0; n];
        let mut r = vec![0.0; n];
        for i in 0..n {
            let mut az = p.b_z.get(i, 0);
            let mut ar = p.b_r.get(i, 0);
            for j in 0..x.len() {
                az += p.w_z.get(i, j) * x[j];
                ar += p.w_r.get(i, j) * x[j];
            }
            for j in 0..n {
                az += p.u_z.get(i, j) * h[j];
                ar += p.u_r.get(i, j) * h[j];
            }
            z[i] = sig(az);
            r[i] = sig(ar);
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut ah = p.b_h.get(i, 0);
            for j in 0..x.len() {
                ah += p.w_h.get(i, j) * x[j];
            }
            for j in 0..n {
                ah += p.u_h.get(i, j) * r[j] * h[j];
            }
            out[i] = z[i] * h[i] + (1.0 - z[i]) * ah.tanh();
        }
        out
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mut p = GruParams::random(4, 3, 0.9, &mut rng);
            for b in [&mut p.b_z, &mut p.b_r, &mut p.b_h] {
                *b = Matrix::uniform(3, 1, 0.5, &mut rng);
            }
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = gru_step(&x, &h, &p).unwrap();
            let want = scalar_oracle(&x, &h, &p);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-14, "{g} vs {w}");
            }
        }
    }
}
