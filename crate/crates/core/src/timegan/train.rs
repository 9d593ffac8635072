use ndarray::{s, Array2, Array3, ArrayD, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkSpec, Role};
use super::scaler::MinMaxScaler;
use super::{TimeGanConfig, TimeGanModel, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::ingest::PaddedBatch;
use crate::nn::{
    adam_step, bce_with_logits, bce_with_logits_grad, mse, mse_grad, Activation, AdamConfig, AdamState, CellKind, Gradients,
    RecurrentStackConfig, SequenceNetCache,
};
use crate::seed::derive_seed;

/// Variance floor inside the moment-matching standard deviations.
const MOMENT_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointLosses {
    pub discriminator: f64,
    pub generator: f64,
    pub embedder: f64,
}

/// Mean batch loss per epoch for each phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub embedding: Vec<f64>,
    pub supervised: Vec<f64>,
    pub joint: Vec<JointLosses>,
}

/// The five networks. Loss methods take time-major scaled data `x: (T, B, 1)`
/// and latent draws `z` of the same shape, and return each loss together
/// with the gradients of the networks that the corresponding phase updates.
#[derive(Clone, Debug)]
pub struct TimeGanNetworks {
    pub embedder: Network,
    pub recovery: Network,
    pub generator: Network,
    pub supervisor: Network,
    pub discriminator: Network,
    pub per_step_discriminator: bool,
}

enum DiscCache {
    Steps(SequenceNetCache),
    Last(SequenceNetCache),
}

fn bce_mean(logits: &ArrayD<f64>, target: f64) -> (f64, ArrayD<f64>) {
    let n = logits.len().max(1) as f64;
    let loss = logits.iter().map(|&l| bce_with_logits(l, target)).sum::<f64>() / n;
    (loss, logits.mapv(|l| bce_with_logits_grad(l, target) / n))
}

/// Per-step moment mismatch `mean_t |std_b(a) − std_b(b)| + mean_t |mean_b(a) − mean_b(b)|`
/// over time-major sequences, with its gradient in `a`.
pub fn moment_loss(a: ArrayView3<f64>, b: ArrayView3<f64>) -> (f64, Array3<f64>) {
    let (steps, batch_a, feats) = a.dim();
    let batch_b = b.dim().1;
    let mut grad = Array3::zeros(a.raw_dim());
    let mut loss = 0.0;
    let scale = 1.0 / (steps * feats) as f64;
    for t in 0..steps {
        for f in 0..feats {
            let col_a = a.slice(s![t, .., f]);
            let col_b = b.slice(s![t, .., f]);
            let mean_a = col_a.sum() / batch_a as f64;
            let mean_b = col_b.sum() / batch_b as f64;
            let var_a = col_a.iter().map(|v| (v - mean_a).powi(2)).sum::<f64>() / batch_a as f64;
            let var_b = col_b.iter().map(|v| (v - mean_b).powi(2)).sum::<f64>() / batch_b as f64;
            let std_a = (var_a + MOMENT_EPS).sqrt();
            let std_b = (var_b + MOMENT_EPS).sqrt();
            loss += scale * ((std_a - std_b).abs() + (mean_a - mean_b).abs());
            let sign_std = sign(std_a - std_b);
            let sign_mean = sign(mean_a - mean_b);
            for i in 0..batch_a {
                let d_std = sign_std * (col_a[i] - mean_a) / (batch_a as f64 * std_a);
                grad[[t, i, f]] = scale * (d_std + sign_mean / batch_a as f64);
            }
        }
    }
    (loss, grad)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Next-step supervision `MSE(h[1..], s[..T-1])` with gradients in `s` and `h`.
fn supervised_loss(h: &Array3<f64>, s_out: &Array3<f64>) -> (f64, Array3<f64>, Array3<f64>) {
    let steps = h.dim().0;
    let target = h.slice(s![1.., .., ..]);
    let pred = s_out.slice(s![..steps - 1, .., ..]);
    let loss = mse(pred, target);
    let g = mse_grad(pred, target);
    let mut d_s = Array3::zeros(s_out.raw_dim());
    d_s.slice_mut(s![..steps - 1, .., ..]).assign(&g);
    let mut d_h = Array3::zeros(h.raw_dim());
    d_h.slice_mut(s![1.., .., ..]).scaled_add(-1.0, &g);
    (loss, d_s, d_h)
}

fn check_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{what} loss became {value}")))
    }
}

impl TimeGanNetworks {
    /// Initialises all five networks; each gets its own seed derived from `seed`.
    pub fn new(config: &TimeGanConfig, seed: u64) -> Result<Self> {
        let stack = |input_dim| RecurrentStackConfig {
            cell_kind: CellKind::Gru,
            layers: config.layers,
            hidden: config.hidden,
            input_dim,
            bidirectional: false,
        };
        let h = config.hidden;
        let build = |role: Role, input_dim, output_dim, activation| {
            let spec = NetworkSpec { role, stack: stack(input_dim), output_dim, activation };
            Network::new(spec, derive_seed(seed, &[role.index()]))
        };
        Ok(TimeGanNetworks {
            embedder: build(Role::Embedder, FEATURE_DIM, h, Activation::Sigmoid)?,
            recovery: build(Role::Recovery, h, FEATURE_DIM, Activation::HeadroomSigmoid)?,
            generator: build(Role::Generator, FEATURE_DIM, h, Activation::Sigmoid)?,
            supervisor: build(Role::Supervisor, h, h, Activation::Sigmoid)?,
            discriminator: build(Role::Discriminator, h, 1, Activation::Identity)?,
            per_step_discriminator: config.per_step_discriminator,
        })
    }

    pub fn all(&self) -> [&Network; 5] {
        [&self.embedder, &self.recovery, &self.generator, &self.supervisor, &self.discriminator]
    }

    fn steps(net: &Network, x: ArrayView3<f64>) -> Result<(Array3<f64>, SequenceNetCache)> {
        net.net.forward_steps(&net.store, x)
    }

    fn back(net: &Network, cache: &SequenceNetCache, dy: &Array3<f64>, grads: &mut Gradients) -> Array3<f64> {
        net.net.backward_steps(&net.store, cache, dy.view(), grads, true).expect("requested")
    }

    fn back_params(net: &Network, cache: &SequenceNetCache, dy: &Array3<f64>, grads: &mut Gradients) {
        net.net.backward_steps(&net.store, cache, dy.view(), grads, false);
    }

    fn disc_forward(&self, h: ArrayView3<f64>) -> Result<(ArrayD<f64>, DiscCache)> {
        let d = &self.discriminator;
        if self.per_step_discriminator {
            let (y, c) = d.net.forward_steps(&d.store, h)?;
            Ok((y.into_dyn(), DiscCache::Steps(c)))
        } else {
            let (y, c) = d.net.forward_last(&d.store, h, None)?;
            Ok((y.into_dyn(), DiscCache::Last(c)))
        }
    }

    fn disc_backward(&self, cache: &DiscCache, dy: ArrayD<f64>, grads: &mut Gradients, need_dx: bool) -> Option<Array3<f64>> {
        let d = &self.discriminator;
        match cache {
            DiscCache::Steps(c) => {
                let dy = dy.into_dimensionality().expect("per-step logits are 3-D");
                d.net.backward_steps(&d.store, c, dy.view(), grads, need_dx)
            }
            DiscCache::Last(c) => {
                let dy = dy.into_dimensionality().expect("final-state logits are 2-D");
                d.net.backward_last(&d.store, c, dy.view(), grads, need_dx)
            }
        }
    }

    /// Reconstruction loss `MSE(x, R(E(x)))` with embedder and recovery gradients.
    pub fn embedding_loss(&self, x: ArrayView3<f64>) -> Result<(f64, Gradients, Gradients)> {
        let (e, r) = (&self.embedder, &self.recovery);
        let (h, ce) = Self::steps(e, x)?;
        let (x_tilde, cr) = Self::steps(r, h.view())?;
        let loss = mse(x_tilde.view(), x);
        let mut g_e = Gradients::zeros_like(&e.store);
        let mut g_r = Gradients::zeros_like(&r.store);
        let dh = Self::back(r, &cr, &mse_grad(x_tilde.view(), x), &mut g_r);
        Self::back_params(e, &ce, &dh, &mut g_e);
        Ok((loss, g_e, g_r))
    }

    /// Next-step supervision of the frozen embedding, with supervisor gradients.
    pub fn supervised_loss(&self, x: ArrayView3<f64>) -> Result<(f64, Gradients)> {
        let s = &self.supervisor;
        let (h, _) = Self::steps(&self.embedder, x)?;
        let (h_sup, cs) = Self::steps(s, h.view())?;
        let (loss, d_s, _) = supervised_loss(&h, &h_sup);
        let mut g_s = Gradients::zeros_like(&s.store);
        Self::back_params(s, &cs, &d_s, &mut g_s);
        Ok((loss, g_s))
    }

    /// Discriminator loss: real embeddings → 1, generated and supervised-generated → 0.
    pub fn discriminator_loss(&self, x: ArrayView3<f64>, z: ArrayView3<f64>) -> Result<(f64, Gradients)> {
        let (h, _) = Self::steps(&self.embedder, x)?;
        let (e_hat, _) = Self::steps(&self.generator, z)?;
        let (h_hat, _) = Self::steps(&self.supervisor, e_hat.view())?;
        let mut g_d = Gradients::zeros_like(&self.discriminator.store);
        let mut total = 0.0;
        for (input, target) in [(&h, 1.0), (&h_hat, 0.0), (&e_hat, 0.0)] {
            let (logits, cache) = self.disc_forward(input.view())?;
            let (loss, dy) = bce_mean(&logits, target);
            total += loss;
            self.disc_backward(&cache, dy, &mut g_d, false);
        }
        Ok((total, g_d))
    }

    /// Generator objective with generator and supervisor gradients.
    pub fn generator_loss(&self, x: ArrayView3<f64>, z: ArrayView3<f64>, gamma: f64, eta: f64) -> Result<(f64, Gradients, Gradients)> {
        let (g, s, r) = (&self.generator, &self.supervisor, &self.recovery);
        let (e_hat, cg) = Self::steps(g, z)?;
        let (h_hat, cs_fake) = Self::steps(s, e_hat.view())?;
        let (x_hat, cr) = Self::steps(r, h_hat.view())?;
        let (h, _) = Self::steps(&self.embedder, x)?;
        let (h_sup, cs_real) = Self::steps(s, h.view())?;

        let mut g_g = Gradients::zeros_like(&g.store);
        let mut g_s = Gradients::zeros_like(&s.store);
        let mut scratch_d = Gradients::zeros_like(&self.discriminator.store);
        let mut scratch_r = Gradients::zeros_like(&r.store);

        let (logits_h, cd_h) = self.disc_forward(h_hat.view())?;
        let (loss_u, dy_h) = bce_mean(&logits_h, 1.0);
        let (logits_e, cd_e) = self.disc_forward(e_hat.view())?;
        let (loss_ue, dy_e) = bce_mean(&logits_e, 1.0);
        let (loss_sup, d_sup, _) = supervised_loss(&h, &h_sup);
        let (loss_mom, d_mom) = moment_loss(x_hat.view(), x);
        let loss = loss_u + loss_ue + gamma * loss_sup + eta * loss_mom;

        let mut d_hhat = self.disc_backward(&cd_h, dy_h, &mut scratch_d, true).expect("requested");
        d_hhat += &Self::back(r, &cr, &(d_mom * eta), &mut scratch_r);
        let mut d_ehat = Self::back(s, &cs_fake, &d_hhat, &mut g_s);
        d_ehat += &self.disc_backward(&cd_e, dy_e, &mut scratch_d, true).expect("requested");
        Self::back_params(g, &cg, &d_ehat, &mut g_g);
        Self::back_params(s, &cs_real, &(d_sup * gamma), &mut g_s);
        Ok((loss, g_g, g_s))
    }

    /// Joint-phase autoencoder refresh `L_rec + w·L_sup` with embedder and recovery gradients.
    pub fn refresh_loss(&self, x: ArrayView3<f64>, sup_weight: f64) -> Result<(f64, Gradients, Gradients)> {
        let (e, r, s) = (&self.embedder, &self.recovery, &self.supervisor);
        let (h, ce) = Self::steps(e, x)?;
        let (x_tilde, cr) = Self::steps(r, h.view())?;
        let (h_sup, cs) = Self::steps(s, h.view())?;
        let rec = mse(x_tilde.view(), x);
        let (sup, d_s, d_h_direct) = supervised_loss(&h, &h_sup);
        let mut g_e = Gradients::zeros_like(&e.store);
        let mut g_r = Gradients::zeros_like(&r.store);
        let mut scratch_s = Gradients::zeros_like(&s.store);
        let mut dh = Self::back(r, &cr, &mse_grad(x_tilde.view(), x), &mut g_r);
        dh += &(Self::back(s, &cs, &d_s, &mut scratch_s) * sup_weight);
        dh.scaled_add(sup_weight, &d_h_direct);
        Self::back_params(e, &ce, &dh, &mut g_e);
        Ok((rec + sup_weight * sup, g_e, g_r))
    }

    /// Recovered sequences `R(S(G(z)))` in scaled units.
    pub fn generate_scaled(&self, z: ArrayView3<f64>) -> Result<Array3<f64>> {
        let (e_hat, _) = Self::steps(&self.generator, z)?;
        let (h_hat, _) = Self::steps(&self.supervisor, e_hat.view())?;
        Ok(Self::steps(&self.recovery, h_hat.view())?.0)
    }

    /// Runs the embedding phase on already scaled rows `(n, T)`, returning the
    /// mean batch loss of each epoch.
    pub fn train_embedding(&mut self, rows: &Array2<f64>, config: &TimeGanConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let adam = AdamConfig::with_lr(config.lr);
        let mut st_e = AdamState::new(&self.embedder.store);
        let mut st_r = AdamState::new(&self.recovery.store);
        let mut curve = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let mut sum = 0.0;
            let batches = epoch_batches(rows.nrows(), config.batch_size, rng);
            for idx in &batches {
                let x = gather(rows, idx);
                let (loss, g_e, g_r) = self.embedding_loss(x.view())?;
                sum += check_finite(loss, "reconstruction")?;
                adam_step(&mut self.embedder.store, &g_e, &mut st_e, &adam)?;
                adam_step(&mut self.recovery.store, &g_r, &mut st_r, &adam)?;
            }
            curve.push(sum / batches.len() as f64);
            log_progress("embedding", epoch, config.epochs, sum / batches.len() as f64);
        }
        Ok(curve)
    }

    pub fn train_supervised(&mut self, rows: &Array2<f64>, config: &TimeGanConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let adam = AdamConfig::with_lr(config.lr);
        let mut st_s = AdamState::new(&self.supervisor.store);
        let mut curve = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let mut sum = 0.0;
            let batches = epoch_batches(rows.nrows(), config.batch_size, rng);
            for idx in &batches {
                let x = gather(rows, idx);
                let (loss, g_s) = self.supervised_loss(x.view())?;
                sum += check_finite(loss, "supervised")?;
                adam_step(&mut self.supervisor.store, &g_s, &mut st_s, &adam)?;
            }
            curve.push(sum / batches.len() as f64);
            log_progress("supervised", epoch, config.epochs, sum / batches.len() as f64);
        }
        Ok(curve)
    }

    pub fn train_joint(&mut self, rows: &Array2<f64>, config: &TimeGanConfig, rng: &mut ChaCha8Rng) -> Result<Vec<JointLosses>> {
        let adam = AdamConfig::with_lr(config.lr);
        let mut st_d = AdamState::new(&self.discriminator.store);
        let mut st_g = AdamState::new(&self.generator.store);
        let mut st_s = AdamState::new(&self.supervisor.store);
        let mut st_e = AdamState::new(&self.embedder.store);
        let mut st_r = AdamState::new(&self.recovery.store);
        let mut curve = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let mut sum = JointLosses::default();
            let batches = epoch_batches(rows.nrows(), config.batch_size, rng);
            for idx in &batches {
                let x = gather(rows, idx);
                let z = latent(rows.ncols(), idx.len(), rng);

                let (loss_d, g_d) = self.discriminator_loss(x.view(), z.view())?;
                sum.discriminator += check_finite(loss_d, "discriminator")?;
                if loss_d > config.discriminator_threshold {
                    adam_step(&mut self.discriminator.store, &g_d, &mut st_d, &adam)?;
                }

                let k = config.generator_steps as f64;
                for step in 0..config.generator_steps {
                    let z = if step == 0 { z.clone() } else { latent(rows.ncols(), idx.len(), rng) };
                    let (loss_g, g_g, g_s) = self.generator_loss(x.view(), z.view(), config.gamma, config.eta)?;
                    sum.generator += check_finite(loss_g, "generator")? / k;
                    adam_step(&mut self.generator.store, &g_g, &mut st_g, &adam)?;
                    adam_step(&mut self.supervisor.store, &g_s, &mut st_s, &adam)?;

                    let (loss_e, g_e, g_r) = self.refresh_loss(x.view(), config.embedder_supervised_weight)?;
                    sum.embedder += check_finite(loss_e, "embedder refresh")? / k;
                    adam_step(&mut self.embedder.store, &g_e, &mut st_e, &adam)?;
                    adam_step(&mut self.recovery.store, &g_r, &mut st_r, &adam)?;
                }
            }
            let n = batches.len() as f64;
            let mean = JointLosses { discriminator: sum.discriminator / n, generator: sum.generator / n, embedder: sum.embedder / n };
            log_progress("joint", epoch, config.epochs, mean.generator);
            curve.push(mean);
        }
        Ok(curve)
    }
}

fn log_progress(phase: &str, epoch: usize, epochs: usize, loss: f64) {
    if (epoch + 1) % 50 == 0 || epoch + 1 == epochs {
        log::debug!("{phase} epoch {}/{epochs}: loss {loss:.6}", epoch + 1);
    }
}

/// A random partition of `0..n` into batches of `batch_size` (the last may be short).
fn epoch_batches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Rows `(n, T)` selected by `idx` as a time-major `(T, b, 1)` batch.
pub(crate) fn gather(rows: &Array2<f64>, idx: &[usize]) -> Array3<f64> {
    let steps = rows.ncols();
    Array3::from_shape_fn((steps, idx.len(), FEATURE_DIM), |(t, b, _)| rows[[idx[b], t]])
}

/// Uniform `[0, 1)` latent draws `(T, b, 1)`.
pub(crate) fn latent(steps: usize, batch: usize, rng: &mut impl Rng) -> Array3<f64> {
    Array3::from_shape_simple_fn((steps, batch, FEATURE_DIM), || rng.random::<f64>())
}

/// Time-major `(T, b, 1)` sequences back to rows `(b, T)`.
pub(crate) fn to_rows(x: &Array3<f64>) -> Array2<f64> {
    x.index_axis(Axis(2), 0).t().to_owned()
}

/// Trains a model on one class's padded batch through all three phases.
pub fn train(batch: &PaddedBatch, config: &TimeGanConfig) -> Result<TimeGanModel> {
    config.validate()?;
    let n = batch.rows.nrows();
    if n == 0 {
        return Err(Error::validation(format!("no trials to train the {} model on", batch.label)));
    }
    if config.batch_size > n {
        return Err(Error::validation(format!(
            "batch size {} exceeds the {} trials of {}",
            config.batch_size, n, batch.label
        )));
    }
    if batch.length < 2 {
        return Err(Error::validation("TimeGAN needs sequences of at least two samples"));
    }
    let scaler = MinMaxScaler::fit(&batch.rows)?;
    let rows = scaler.scale(&batch.rows)?;
    let mut nets = TimeGanNetworks::new(config, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[u64::from(u8::MAX)]));
    log::info!("training {} model on {n} trials of length {}", batch.label, batch.length);
    let embedding = nets.train_embedding(&rows, config, &mut rng)?;
    let supervised = nets.train_supervised(&rows, config, &mut rng)?;
    let joint = nets.train_joint(&rows, config, &mut rng)?;
    if !nets.all().iter().all(|n| n.store.all_finite()) {
        return Err(Error::NonFinite(format!("{} model parameters are not finite after training", batch.label)));
    }
    Ok(TimeGanModel {
        label: batch.label,
        config: config.clone(),
        seq_len: batch.length,
        scaler,
        networks: nets,
        history: TrainingHistory { embedding, supervised, joint },
    })
}
