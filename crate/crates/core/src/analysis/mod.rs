//! Kinematic features, outlier flags, class mean profiles, feature histograms
//! with Wasserstein distances, and 2-D projections of flattened profiles.

mod projection;

pub use projection::{
    calibrate_affinities, pca2, perplexity_of, tsne2, Projection2D, ProjectionMeta, ProjectionMethod, TsneConfig,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ClassLabel, Trial, TrialSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicFeatures {
    /// Movement duration, seconds.
    pub md: f64,
    /// Peak amplitude, m/s.
    pub pa: f64,
    /// Time to the first global maximum as a fraction of the duration.
    pub ad_md: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Md,
    Pa,
    AdMd,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Md, Feature::Pa, Feature::AdMd];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Md => "md",
            Feature::Pa => "pa",
            Feature::AdMd => "ad_md",
        }
    }
}

impl KinematicFeatures {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::Md => self.md,
            Feature::Pa => self.pa,
            Feature::AdMd => self.ad_md,
        }
    }
}

/// Features of a trimmed trial.
pub fn features(trial: &Trial) -> Result<KinematicFeatures> {
    let n = trial.v.len();
    if n < 2 {
        return Err(Error::validation(format!("trial {} is too short for features", trial.trial_id)));
    }
    let mut argmax = 0;
    for (i, &x) in trial.v.iter().enumerate() {
        if x > trial.v[argmax] {
            argmax = i;
        }
    }
    Ok(KinematicFeatures {
        md: (n - 1) as f64 / trial.rate,
        pa: trial.v[argmax],
        ad_md: argmax as f64 / (n - 1) as f64,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trials whose duration lies more than three standard deviations from their
/// class mean. Classes with fewer than two trials contribute nothing.
pub fn flag_outliers(set: &TrialSet) -> Result<BTreeSet<String>> {
    let mut flagged = BTreeSet::new();
    for label in ClassLabel::ALL {
        let trials = set.of_class(label);
        if trials.len() < 2 {
            continue;
        }
        let md = trials.iter().map(|t| features(t).map(|f| f.md)).collect::<Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&md);
        for (t, d) in trials.iter().zip(&md) {
            if (d - mean).abs() > 3.0 * std {
                flagged.insert(t.trial_id.clone());
            }
        }
    }
    Ok(flagged)
}

/// Pointwise mean and standard deviation of padded rows.
pub fn mean_profile(rows: &Array2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    if rows.nrows() == 0 {
        return Err(Error::validation("mean profile of an empty class"));
    }
    let mean = rows.mean_axis(Axis(0)).expect("nonempty");
    let std = rows.std_axis(Axis(0), 0.0);
    Ok((mean, std))
}

/// Exact 1-D Wasserstein-1 distance between two empirical distributions.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation("Wasserstein distance needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::validation("Wasserstein distance of non-finite values"));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = xa.iter().chain(&xb).copied().collect();
    all.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut ia, mut ib) = (0, 0);
    let mut dist = 0.0;
    for w in all.windows(2) {
        while ia < xa.len() && xa[ia] <= w[0] {
            ia += 1;
        }
        while ib < xb.len() && xb[ib] <= w[0] {
            ib += 1;
        }
        dist += (ia as f64 / na - ib as f64 / nb).abs() * (w[1] - w[0]);
    }
    Ok(dist)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const MAX_BINS: usize = 200;

/// Freedman–Diaconis bin edges over pooled values.
pub fn freedman_diaconis_edges(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::validation("histogram of no values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi <= lo {
        return Ok(vec![lo - 0.5, lo + 0.5]);
    }
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    let bins = if width > 0.0 { ((hi - lo) / width).ceil() as usize } else { 1 };
    let bins = bins.clamp(1, MAX_BINS);
    Ok((0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect())
}

/// Counts per bin; the last bin is closed on the right.
pub fn bin_counts(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for &v in values {
        let k = edges[1..].partition_point(|&e| e <= v).min(bins - 1);
        if v >= edges[0] && v <= edges[bins] {
            counts[k] += 1;
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramCell {
    pub class: ClassLabel,
    pub feature: Feature,
    pub edges: Vec<f64>,
    pub counts_real: Vec<usize>,
    pub counts_synth: Vec<usize>,
    pub wasserstein: f64,
}

pub fn class_features(set: &TrialSet, label: ClassLabel) -> Result<Vec<KinematicFeatures>> {
    set.of_class(label).into_iter().map(features).collect()
}

/// Shared-binning histograms and Wasserstein distances for every class and
/// feature. Classes missing from either set are skipped with a warning.
pub fn feature_histograms(real: &TrialSet, synthetic: &TrialSet) -> Result<Vec<HistogramCell>> {
    let mut cells = Vec::new();
    for class in ClassLabel::ALL {
        let fr = class_features(real, class)?;
        let fs = class_features(synthetic, class)?;
        if fr.is_empty() || fs.is_empty() {
            log::warn!("class {class} is missing from one source; its histogram cells are omitted");
            continue;
        }
        for feature in Feature::ALL {
            let a: Vec<f64> = fr.iter().map(|f| f.get(feature)).collect();
            let b: Vec<f64> = fs.iter().map(|f| f.get(feature)).collect();
            let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            let edges = freedman_diaconis_edges(&pooled)?;
            cells.push(HistogramCell {
                class,
                feature,
                counts_real: bin_counts(&a, &edges),
                counts_synth: bin_counts(&b, &edges),
                wasserstein: wasserstein1(&a, &b)?,
                edges,
            });
        }
    }
    Ok(cells)
}

/// `class,feature,bin_left,bin_right,count_real,count_synth` rows.
pub fn histogram_csv(cells: &[HistogramCell]) -> String {
    let mut out = String::from("class,feature,bin_left,bin_right,count_real,count_synth\n");
    for c in cells {
        for (k, w) in c.edges.windows(2).enumerate() {
            let _ = writeln!(out, "{},{},{},{},{},{}", c.class, c.feature.name(), w[0], w[1], c.counts_real[k], c.counts_synth[k]);
        }
    }
    out
}

/// Wasserstein distances keyed by class then feature.
pub fn distance_table(cells: &[HistogramCell]) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for c in cells {
        table.entry(c.class.to_string()).or_default().insert(c.feature.name().to_owned(), c.wasserstein);
    }
    table
}

/// Identity of one row in a flattened population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMeta {
    pub point_id: String,
    pub source: String,
    pub class: ClassLabel,
}

/// Co-pads every trial of every source to the global maximum length and
/// stacks them as rows.
pub fn flatten_population(sources: &[(&str, &TrialSet)]) -> Result<(Array2<f64>, Vec<PointMeta>)> {
    let trials: Vec<(&str, &Trial)> = sources.iter().flat_map(|(s, set)| set.trials.iter().map(move |t| (*s, t))).collect();
    if trials.is_empty() {
        return Err(Error::validation("no trials to flatten"));
    }
    let len = trials.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
    let mut rows = Array2::zeros((trials.len(), len));
    let mut meta = Vec::with_capacity(trials.len());
    for (i, (source, t)) in trials.iter().enumerate() {
        for (j, &v) in t.v.iter().enumerate() {
            rows[[i, j]] = v;
        }
        meta.push(PointMeta { point_id: t.trial_id.clone(), source: (*source).to_owned(), class: t.label });
    }
    Ok((rows, meta))
}

/// `point_id,source,class,dim1,dim2` rows.
pub fn projection_csv(projection: &Projection2D, meta: &[PointMeta]) -> Result<String> {
    if meta.len() != projection.points.nrows() {
        return Err(Error::shape(format!("{} labels for {} points", meta.len(), projection.points.nrows())));
    }
    let mut out = String::from("point_id,source,class,dim1,dim2\n");
    for (m, p) in meta.iter().zip(projection.points.rows()) {
        let _ = writeln!(out, "{},{},{},{},{}", m.point_id, m.source, m.class, p[0], p[1]);
    }
    Ok(out)
}
