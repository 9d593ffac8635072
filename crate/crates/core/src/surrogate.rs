//! Parametric stand-in for the human transport dataset.
//!
//! Each trial is a smooth bell `τ^a (1−τ)^b`, scaled to a drawn peak velocity,
//! sampled between its two 5%-of-peak crossings over a drawn duration, with
//! additive clipped noise and a zero sample at each end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ClassLabel, Provenance, Trial, TrialSet, SEGMENT_RELATIVE_THRESHOLD};
use crate::seed::derive_seed;

/// Per-class distribution of trial count, duration and peak velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassStats {
    pub count: usize,
    /// Movement duration mean and std, seconds.
    pub md_mean: f64,
    pub md_std: f64,
    /// Peak amplitude mean and std, m/s.
    pub pa_mean: f64,
    pub pa_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub w1_nc: ClassStats,
    pub w2_nc: ClassStats,
    pub w1_c: ClassStats,
    pub w2_c: ClassStats,
    /// Bell shape exponents; equal values give a symmetric profile.
    pub shape_a: f64,
    pub shape_b: f64,
    /// Additive Gaussian noise std, m/s.
    pub noise_std: f64,
    pub rate: f64,
    pub seed: u64,
}

/// Heavy glasses peak this much lower than light ones in the defaults.
const HEAVY_PEAK_FACTOR: f64 = 0.93;

impl Default for SurrogateConfig {
    fn default() -> Self {
        let stats = |count, md_mean, md_std, pa_mean, pa_std| ClassStats { count, md_mean, md_std, pa_mean, pa_std };
        SurrogateConfig {
            w1_nc: stats(248, 1.44, 0.17, 1.0, 0.12),
            w2_nc: stats(251, 1.61, 0.19, 1.0 * HEAVY_PEAK_FACTOR, 0.12),
            w1_c: stats(254, 2.62, 0.63, 0.6, 0.08),
            w2_c: stats(248, 3.04, 0.69, 0.6 * HEAVY_PEAK_FACTOR, 0.08),
            shape_a: 2.0,
            shape_b: 2.0,
            noise_std: 0.02,
            rate: crate::ingest::DEFAULT_RATE,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn stats(&self, label: ClassLabel) -> &ClassStats {
        match label {
            ClassLabel::W1_NC => &self.w1_nc,
            ClassLabel::W2_NC => &self.w2_nc,
            ClassLabel::W1_C => &self.w1_c,
            _ => &self.w2_c,
        }
    }

    pub fn stats_mut(&mut self, label: ClassLabel) -> &mut ClassStats {
        match label {
            ClassLabel::W1_NC => &mut self.w1_nc,
            ClassLabel::W2_NC => &mut self.w2_nc,
            ClassLabel::W1_C => &mut self.w1_c,
            _ => &mut self.w2_c,
        }
    }

    /// Same statistics with every class resized to `count` trials.
    pub fn with_count(mut self, count: usize) -> Self {
        for l in ClassLabel::ALL {
            self.stats_mut(l).count = count;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        for label in ClassLabel::ALL {
            let s = self.stats(label);
            let ok = s.count > 0
                && s.md_mean > 0.0
                && s.pa_mean > 0.0
                && s.md_std >= 0.0
                && s.pa_std >= 0.0
                && [s.md_mean, s.md_std, s.pa_mean, s.pa_std].iter().all(|v| v.is_finite());
            if !ok {
                return Err(Error::validation(format!("surrogate statistics for {label} are invalid: {s:?}")));
            }
        }
        if !(self.shape_a > 0.0 && self.shape_b > 0.0 && self.shape_a.is_finite() && self.shape_b.is_finite()) {
            return Err(Error::validation("surrogate shape exponents must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::validation("surrogate noise std must be nonnegative"));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::validation("surrogate rate must be positive"));
        }
        Ok(())
    }
}

/// Unit-peak bell `τ^a (1−τ)^b / max`, peaking at `τ = a / (a + b)`.
#[derive(Clone, Copy, Debug)]
pub struct BellShape {
    a: f64,
    b: f64,
    norm: f64,
}

impl BellShape {
    pub fn new(a: f64, b: f64) -> Self {
        let norm = a.powf(a) * b.powf(b) / (a + b).powf(a + b);
        BellShape { a, b, norm }
    }

    pub fn mode(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn eval(&self, tau: f64) -> f64 {
        if !(0.0..=1.0).contains(&tau) {
            return 0.0;
        }
        tau.powf(self.a) * (1.0 - tau).powf(self.b) / self.norm
    }

    /// The two points where the bell crosses `level` (0 < level < 1).
    pub fn crossings(&self, level: f64) -> (f64, f64) {
        let mode = self.mode();
        let solve = |mut below: f64, mut above: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (below + above);
                if self.eval(mid) < level {
                    below = mid;
                } else {
                    above = mid;
                }
            }
            0.5 * (below + above)
        };
        (solve(0.0, mode), solve(1.0, mode))
    }
}

fn truncated_normal(mean: f64, std: f64, rng: &mut impl Rng) -> f64 {
    if std == 0.0 {
        return mean;
    }
    let lo = (mean - 3.0 * std).max(0.0);
    let hi = mean + 3.0 * std;
    let normal = Normal::new(mean, std).expect("std checked positive");
    loop {
        let x = normal.sample(rng);
        if x > lo && x <= hi {
            return x;
        }
    }
}

/// The noiseless profile for one duration and peak, without end sentinels.
pub fn bell_profile(duration: f64, peak: f64, rate: f64, shape: BellShape) -> Vec<f64> {
    let n = (duration * rate).round() as usize + 1;
    let (lo, hi) = shape.crossings(SEGMENT_RELATIVE_THRESHOLD);
    (0..n)
        .map(|i| {
            let tau = if n == 1 { shape.mode() } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
            peak * shape.eval(tau)
        })
        .collect()
}

/// Draws the surrogate dataset. Pure in `config` (the seed included).
pub fn make_surrogate(config: &SurrogateConfig) -> Result<TrialSet> {
    config.validate()?;
    let shape = BellShape::new(config.shape_a, config.shape_b);
    let noise = (config.noise_std > 0.0).then(|| Normal::new(0.0, config.noise_std).expect("std checked"));
    let mut trials = Vec::new();
    for (ci, label) in ClassLabel::ALL.into_iter().enumerate() {
        let stats = config.stats(label);
        for i in 0..stats.count {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[ci as u64, i as u64]));
            let duration = truncated_normal(stats.md_mean, stats.md_std, &mut rng);
            let peak = truncated_normal(stats.pa_mean, stats.pa_std, &mut rng);
            let mut v = Vec::with_capacity((duration * config.rate) as usize + 4);
            v.push(0.0);
            for x in bell_profile(duration, peak, config.rate, shape) {
                let e = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                v.push((x + e).max(0.0));
            }
            v.push(0.0);
            trials.push(Trial::new(format!("sur-{label}-{i:04}"), label, v, config.rate)?);
        }
    }
    TrialSet::new(trials, Provenance::Surrogate)
}
