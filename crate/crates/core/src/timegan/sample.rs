use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::{latent, to_rows};
use super::TimeGanModel;
use crate::error::{Error, Result};
use crate::ingest::{trim, Provenance, Trial, TrialSet, DEFAULT_RATE};

/// Redraw budget per requested trial before sampling gives up.
pub const MAX_SAMPLE_ATTEMPTS_PER_TRIAL: usize = 20;

/// Latent sequences drawn per forward pass.
const CHUNK: usize = 64;

/// Draws `n` synthetic trials. Pure in `(model, n, seed)`.
pub fn sample(model: &TimeGanModel, n: usize, seed: u64) -> Result<TrialSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n);
    let mut attempts = 0;
    let budget = n * MAX_SAMPLE_ATTEMPTS_PER_TRIAL;
    while trials.len() < n {
        if attempts >= budget {
            return Err(Error::DegenerateData(format!(
                "{} model produced only {} usable trials in {attempts} draws",
                model.label,
                trials.len()
            )));
        }
        let chunk = CHUNK.min(budget - attempts);
        attempts += chunk;
        let z = latent(model.seq_len, chunk, &mut rng);
        let scaled = to_rows(&model.networks.generate_scaled(z.view())?);
        let rows = model.scaler.inverse_scale(&scaled)?;
        for row in rows.rows() {
            if trials.len() == n {
                break;
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{} model generated a non-finite velocity", model.label)));
            }
            let v: Vec<f64> = row.iter().map(|v| v.max(0.0)).collect();
            let kept = match trim(&v) {
                Ok(k) if k.len() >= 2 => k,
                _ => continue,
            };
            let id = format!("syn-{}-{:04}", model.label, trials.len());
            trials.push(Trial::new(id, model.label, kept, DEFAULT_RATE)?);
        }
    }
    TrialSet::new(trials, Provenance::Synthetic)
}
