use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{batch_loss, loss_and_gradients, ModelDims, ModelParams, WindowExample, NUM_CLASSES};
use super::ParamSet;
use crate::error::{Error, Result};
use crate::features::GenreVector;

/// Largest entrywise relative error between `analytic` and central
/// differences of `loss` around `params`. The denominator is
/// `max(|analytic|, |numeric|, 1e-12)`.
pub fn max_relative_error<P: ParamSet>(params: &P, analytic: &P, epsilon: f64, loss: impl Fn(&P) -> f64) -> f64 {
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (t, (_, grad)) in analytic.tensors().into_iter().enumerate() {
        for (i, &exact) in grad.as_slice().iter().enumerate() {
            let original = probe.tensors_mut()[t].as_slice()[i];
            probe.tensors_mut()[t].as_mut_slice()[i] = original + epsilon;
            let plus = loss(&probe);
            probe.tensors_mut()[t].as_mut_slice()[i] = original - epsilon;
            let minus = loss(&probe);
            probe.tensors_mut()[t].as_mut_slice()[i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let denom = exact.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max((exact - numeric).abs() / denom);
        }
    }
    worst
}

/// Compare the analytic gradient of the dropout-free batch loss with central
/// differences, returning the maximum relative error.
pub fn finite_diff_check(m: &ModelParams, batch: &[WindowExample<'_>], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    // rng is unused without dropout
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let (_, grads) = loss_and_gradients(batch, m, None, &mut rng)?;
    batch_loss(batch, m)?;
    Ok(max_relative_error(m, &grads, epsilon, |p| batch_loss(batch, p).unwrap_or(f64::NAN)))
}

/// A small random classifier with a batch of random windows, for gradient
/// checking. All parameters are drawn from `U(−0.5, 0.5)`.
/// Number of seeded cases run by the self-check.
pub const GRADCHECK_CASES: u64 = 20;
/// Step used for the seeded cases.
pub const GRADCHECK_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub model: ModelParams,
    pub windows: Vec<Vec<Vec<f64>>>,
    pub genre: GenreVector,
    pub gold: Vec<usize>,
}

impl GradCheckCase {
    /// H ∈ {2, 4}, window length 1..=5, D 1..=10, up to 3 genre bits and
    /// 1..=3 windows, all drawn from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(1..=10);
        let h = if rng.gen_bool(0.5) { 2 } else { 4 };
        let g = rng.gen_range(0..=3);
        let t = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=3);
        let model = ModelParams::random(ModelDims::new(d, h, g), 0.5, rng.gen());
        let windows =
            (0..n).map(|_| (0..t).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()).collect();
        let genre = GenreVector { bits: (0..g).map(|_| u8::from(rng.gen_bool(0.5))).collect() };
        let gold = (0..n).map(|_| rng.gen_range(0..NUM_CLASSES)).collect();
        GradCheckCase { model, windows, genre, gold }
    }

    pub fn examples(&self) -> Vec<WindowExample<'_>> {
        self.windows
            .iter()
            .zip(&self.gold)
            .map(|(w, &gold)| WindowExample {
                features: w.iter().map(Vec::as_slice).collect(),
                genre: &self.genre,
                gold,
            })
            .collect()
    }

    pub fn max_error(&self, epsilon: f64) -> Result<f64> {
        finite_diff_check(&self.model, &self.examples(), epsilon)
    }
}

/// Worst relative error over seeds `0..GRADCHECK_CASES`.
pub fn seeded_gradcheck() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for seed in 0..GRADCHECK_CASES {
        worst = worst.max(GradCheckCase::random(seed).max_error(GRADCHECK_EPSILON)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(rng: &mut impl Rng, d: usize, t: usize, n: usize) -> Vec<Vec<Vec<f64>>> {
        (0..n).map(|_| (0..t).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()).collect()
    }

    #[test]
    fn classifier_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = ModelParams::random(ModelDims::new(6, 4, 3), 0.5, 21);
        let windows = random_batch(&mut rng, 6, 3, 3);
        let genre = GenreVector { bits: vec![1, 0, 1] };
        let batch: Vec<WindowExample> = windows
            .iter()
            .enumerate()
            .map(|(i, w)| WindowExample { features: w.iter().map(Vec::as_slice).collect(), genre: &genre, gold: i % 3 })
            .collect();
        let err = finite_diff_check(&m, &batch, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn random_cases_pass() {
        for seed in 0..GRADCHECK_CASES {
            let case = GradCheckCase::random(seed);
            let err = case.max_error(GRADCHECK_EPSILON).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_model_has_finite_error() {
        let m = ModelParams::zeros(ModelDims::new(3, 2, 1));
        let w = vec![vec![0.5, -0.5, 1.0]; 2];
        let genre = GenreVector { bits: vec![1] };
        let batch = [WindowExample { features: w.iter().map(Vec::as_slice).collect(), genre: &genre, gold: 1 }];
        let err = finite_diff_check(&m, &batch, 1e-5).unwrap();
        assert!(err.is_finite() && err < 1e-4, "{err}");
    }

    #[test]
    fn epsilon_must_be_positive() {
        let m = ModelParams::zeros(ModelDims::new(1, 1, 0));
        let genre = GenreVector::zeros(0);
        let x = [1.0];
        let batch = [WindowExample { features: vec![&x], genre: &genre, gold: 0 }];
        assert!(matches!(finite_diff_check(&m, &batch, 0.0), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(finite_diff_check(&m, &batch, f64::NAN), Err(Error::InvalidEpsilon(_))));
    }
}
