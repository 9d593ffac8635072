use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ClassifierConfig;
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, softmax_cross_entropy, Activation, AdamConfig, AdamState, CellKind, Dense, DenseCache, Gradients, ParameterStore,
    RecurrentStack, RecurrentStackConfig, StackCache,
};

/// Bidirectional LSTM over the velocity sequence, then two dense layers on
/// the concatenated final states.
#[derive(Clone, Debug)]
pub struct SequenceClassifier {
    pub stack: RecurrentStack,
    pub fc1: Dense,
    pub fc2: Dense,
    pub store: ParameterStore,
}

struct ForwardCache {
    stack: StackCache,
    fc1: DenseCache,
    fc2: DenseCache,
}

/// A labelled sequence borrowed from a trial.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub v: &'a [f64],
    pub class: usize,
}

fn pack(examples: &[Example<'_>]) -> (Array3<f64>, Vec<usize>) {
    let lengths: Vec<usize> = examples.iter().map(|e| e.v.len()).collect();
    let steps = lengths.iter().copied().max().unwrap_or(0);
    let mut x = Array3::zeros((steps, examples.len(), 1));
    for (b, e) in examples.iter().enumerate() {
        for (t, &v) in e.v.iter().enumerate() {
            x[[t, b, 0]] = v;
        }
    }
    (x, lengths)
}

impl SequenceClassifier {
    pub fn new(config: &ClassifierConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new(seed);
        let stack_cfg = RecurrentStackConfig { cell_kind: CellKind::Lstm, layers: 1, hidden: config.hidden, input_dim: 1, bidirectional: true };
        let width = stack_cfg.output_dim();
        let stack = RecurrentStack::new(&mut store, "lstm", stack_cfg, &mut rng)?;
        let fc1 = Dense::new(&mut store, "fc1", width, config.fc_hidden, Activation::Relu, &mut rng)?;
        let fc2 = Dense::new(&mut store, "fc2", config.fc_hidden, config.classes, Activation::Identity, &mut rng)?;
        Ok(SequenceClassifier { stack, fc1, fc2, store })
    }

    fn forward(&self, examples: &[Example<'_>]) -> Result<(Array2<f64>, ForwardCache)> {
        if examples.iter().any(|e| e.v.is_empty()) {
            return Err(Error::validation("cannot classify an empty sequence"));
        }
        let (x, lengths) = pack(examples);
        let (out, stack) = self.stack.forward(&self.store, x.view(), Some(&lengths))?;
        let (a1, fc1) = self.fc1.forward(&self.store, out.last.view())?;
        let (logits, fc2) = self.fc2.forward(&self.store, a1.view())?;
        Ok((logits, ForwardCache { stack, fc1, fc2 }))
    }

    /// Mean cross-entropy over the batch and its parameter gradients.
    pub fn loss_and_grad(&self, examples: &[Example<'_>]) -> Result<(f64, Gradients)> {
        let (logits, cache) = self.forward(examples)?;
        let n = examples.len() as f64;
        let mut d_logits = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (b, e) in examples.iter().enumerate() {
            let (l, g) = softmax_cross_entropy(logits.row(b).as_slice().expect("row-major"), e.class)?;
            loss += l / n;
            for (k, gk) in g.into_iter().enumerate() {
                d_logits[[b, k]] = gk / n;
            }
        }
        let mut grads = Gradients::zeros_like(&self.store);
        let d_a1 = self.fc2.backward(&self.store, &cache.fc2, d_logits.view(), &mut grads, true).expect("requested");
        let d_last = self.fc1.backward(&self.store, &cache.fc1, d_a1.view(), &mut grads, true).expect("requested");
        self.stack.backward(&self.store, &cache.stack, None, Some(d_last.view()), &mut grads, false);
        Ok((loss, grads))
    }

    /// Summed cross-entropy and the number of correct argmax predictions.
    fn score(&self, examples: &[Example<'_>]) -> Result<(f64, usize)> {
        let mut loss = 0.0;
        let mut correct = 0;
        for chunk in by_length(examples).chunks(EVAL_BATCH) {
            let (logits, _) = self.forward(chunk)?;
            for (row, e) in logits.rows().into_iter().zip(chunk) {
                loss += softmax_cross_entropy(row.as_slice().expect("row-major"), e.class)?.0;
                if argmax(row.as_slice().expect("row-major")) == e.class {
                    correct += 1;
                }
            }
        }
        Ok((loss, correct))
    }

    pub fn predict(&self, sequences: &[&[f64]]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(sequences.len());
        for chunk in sequences.chunks(EVAL_BATCH) {
            let ex: Vec<Example<'_>> = chunk.iter().map(|v| Example { v, class: 0 }).collect();
            let (logits, _) = self.forward(&ex)?;
            out.extend(logits.rows().into_iter().map(|r| argmax(r.as_slice().expect("row-major"))));
        }
        Ok(out)
    }

    pub fn accuracy(&self, examples: &[Example<'_>]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::validation("accuracy of an empty set"));
        }
        Ok(self.score(examples)?.1 as f64 / examples.len() as f64)
    }
}

const EVAL_BATCH: usize = 64;

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Evaluation order that groups similar lengths to limit padding.
fn by_length<'a>(examples: &[Example<'a>]) -> Vec<Example<'a>> {
    let mut sorted = examples.to_vec();
    sorted.sort_by_key(|e| e.v.len());
    sorted
}

/// Outcome of training one fold.
#[derive(Clone, Debug)]
pub struct FoldFit {
    pub model: SequenceClassifier,
    pub val_acc: f64,
    pub val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Trains on `train` with early stopping on the validation loss, restoring
/// the weights of the best epoch.
pub fn fit_fold(train: &[Example<'_>], val: &[Example<'_>], config: &ClassifierConfig, seed: u64) -> Result<FoldFit> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::validation("a fold needs training and validation examples"));
    }
    let mut model = SequenceClassifier::new(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let adam = AdamConfig::with_lr(config.lr);
    let mut state = AdamState::new(&model.store);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::INFINITY, model.store.clone(), 0);
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<Example<'_>> = idx.iter().map(|&i| train[i]).collect();
            let (loss, grads) = model.loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("classifier loss became {loss} in epoch {epoch}")));
            }
            adam_step(&mut model.store, &grads, &mut state, &adam)?;
        }
        epochs_run = epoch + 1;
        let (val_loss, _) = model.score(val)?;
        let val_loss = val_loss / val.len() as f64;
        if val_loss < best.0 {
            best = (val_loss, model.store.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.store = best.1;
    let val_acc = model.accuracy(val)?;
    Ok(FoldFit { model, val_acc, val_loss: best.0, best_epoch: best.2, epochs_run })
}
