use super::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment estimates for every tensor of `P`, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<P> {
    pub step: u64,
    pub first_moment: P,
    pub second_moment: P,
    pub config: AdamConfig,
}

impl<P: ParamSet> AdamState<P> {
    pub fn new(params: &P, config: AdamConfig) -> Self {
        AdamState { step: 0, first_moment: params.zeros_like(), second_moment: params.zeros_like(), config }
    }
}

/// One bias-corrected Adam update, in place. Rejects non-finite gradients
/// without touching the parameters or the state.
pub fn adam_step<P: ParamSet>(params: &mut P, grads: &P, state: &mut AdamState<P>) -> Result<()> {
    let g_tensors = grads.tensors();
    if let Some((name, _)) = g_tensors.iter().find(|(_, g)| !g.is_finite()) {
        return Err(Error::Diverged(format!("non-finite gradient in {name}")));
    }
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let params_t = params.tensors_mut();
    let m_t = state.first_moment.tensors_mut();
    let v_t = state.second_moment.tensors_mut();
    for (((p, (_, g)), m), v) in params_t.into_iter().zip(g_tensors).zip(m_t).zip(v_t) {
        let ps = p.as_mut_slice();
        let ms = m.as_mut_slice();
        let vs = v.as_mut_slice();
        for (i, &gi) in g.as_slice().iter().enumerate() {
            ms[i] = beta1 * ms[i] + (1.0 - beta1) * gi;
            vs[i] = beta2 * vs[i] + (1.0 - beta2) * gi * gi;
            let m_hat = ms[i] / c1;
            let v_hat = vs[i] / c2;
            ps[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Matrix;

    #[derive(Debug, Clone, PartialEq)]
    struct Scalar(Matrix);

    impl ParamSet for Scalar {
        fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
            vec![("theta", &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
            vec![&mut self.0]
        }
    }

    fn scalar(v: f64) -> Scalar {
        Scalar(Matrix::column(vec![v]))
    }

    #[test]
    fn first_step_closed_form() {
        let mut theta = scalar(0.0);
        let mut state = AdamState::new(&theta, AdamConfig::default());
        adam_step(&mut theta, &scalar(2.0), &mut state).unwrap();
        // m̂ = g, v̂ = g², so θ₁ = −lr · g / (|g| + ε)
        let want = -0.001 * 2.0 / (2.0 + 1e-8);
        assert!((theta.0.get(0, 0) - want).abs() < 1e-18);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_only_advances_the_counter() {
        let mut theta = scalar(0.7);
        let mut state = AdamState::new(&theta, AdamConfig::default());
        adam_step(&mut theta, &scalar(0.0), &mut state).unwrap();
        adam_step(&mut theta, &scalar(0.0), &mut state).unwrap();
        assert_eq!(theta, scalar(0.7));
        assert_eq!(state.step, 2);
    }

    #[test]
    fn repeated_gradient_moves_against_it() {
        let mut theta = scalar(0.0);
        let mut state = AdamState::new(&theta, AdamConfig::default());
        let mut prev = 0.0;
        for _ in 0..2 {
            adam_step(&mut theta, &scalar(-3.0), &mut state).unwrap();
            let now = theta.0.get(0, 0);
            assert!(now - prev > 0.0);
            prev = now;
        }
        assert!(state.second_moment.0.get(0, 0) >= 0.0);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut theta = scalar(1.0);
        let mut state = AdamState::new(&theta, AdamConfig::default());
        let err = adam_step(&mut theta, &scalar(f64::NAN), &mut state).unwrap_err();
        assert!(matches!(err, Error::Diverged(_)));
        assert_eq!(state.step, 0);
        assert_eq!(theta, scalar(1.0));
    }
}
