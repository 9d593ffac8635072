//! A small f64 neural substrate with hand-derived gradients.
//!
//! Sequences are stored time-major as `(T, B, D)` arrays. Every layer exposes a
//! forward pass returning a cache and a backward pass that accumulates into a
//! [`Gradients`] buffer shaped like its [`ParameterStore`].

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod gru;
mod loss;
mod lstm;
mod params;
mod stack;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use dense::{Activation, Dense, DenseCache, SIGMOID_HEADROOM};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use gru::{gru_cell, GruCache, GruLayer};
pub use loss::{bce_with_logits, bce_with_logits_grad, mse, mse_grad, softmax, softmax_cross_entropy};
pub use lstm::{lstm_cell, LstmCache, LstmLayer};
pub use params::{Gradients, Param, ParamId, ParameterStore};
pub use stack::{reverse_within, CellKind, RecurrentStack, RecurrentStackConfig, SequenceNet, SequenceNetCache, StackCache, StackOutput};

/// Logistic function, evaluated so that neither branch overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_tanh_are_safe_at_extremes() {
        for x in [-1e6, -745.0, -30.0, 0.0, 30.0, 745.0, 1e6] {
            let s = sigmoid(x);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s), "{x} -> {s}");
            assert!(f64::tanh(x).is_finite());
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
