//! Differentiable kernels for the window classifier and the sentiment
//! encoder, written directly against dense `f64` matrices.

mod adam;
mod attention;
mod gradcheck;
mod gru;
mod io;
mod lstm;
mod matrix;
mod model;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{attention, AttentionParams};
pub use gradcheck::{
    finite_diff_check, max_relative_error, seeded_gradcheck, GradCheckCase, GRADCHECK_CASES, GRADCHECK_EPSILON,
};
pub use gru::{gru_step, GruParams};
pub use io::{load_model, read_bilstm, read_model, save_model, write_bilstm, write_model, MODEL_FORMAT_VERSION};
pub use lstm::{bilstm_forward, train_sentiment_model, BiLstmParams, LstmParams, SentimentModel};
pub use matrix::{sigmoid, softmax, Matrix};
pub use model::{
    batch_loss, classify_window, loss_and_gradients, DropoutMask, ModelDims, ModelParams, OutputParams, WindowExample,
    INIT_SCALE, NUM_CLASSES,
};

/// A fixed, ordered collection of trainable tensors.
pub trait ParamSet: Clone {
    /// Named tensors in a stable order.
    fn tensors(&self) -> Vec<(&'static str, &Matrix)>;

    /// The same tensors, mutably, in the same order.
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.as_mut_slice().fill(0.0));
        z
    }

    fn add_assign(&mut self, other: &Self) {
        for (t, (_, o)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            t.add_assign(o);
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }
}
