//! Recordings to trials: velocity norms, segmentation, padding and trimming.

mod archive;
mod recording;

pub use archive::{read_archive, write_archive, ARCHIVE_HEADER};
pub use recording::{read_recording, ChannelKind, RawRecording};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capture rate of the motion-tracking system, in samples per second.
pub const DEFAULT_RATE: f64 = 22.0;

/// Samples below this velocity (m/s) are stripped from both ends by [`trim`].
pub const TRIM_THRESHOLD: f64 = 0.005;

/// Fraction of each movement's peak that marks its boundaries in [`segment`].
pub const SEGMENT_RELATIVE_THRESHOLD: f64 = 0.05;

/// Local maxima below this absolute velocity (m/s) never start a movement.
pub const SEGMENT_PEAK_FLOOR: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Weight {
    /// Light glass.
    W1,
    /// Heavy glass.
    W2,
}

impl Weight {
    /// Nominal mass of the transported glass in kilograms.
    pub fn nominal_mass_kg(self) -> f64 {
        match self {
            Weight::W1 => 0.167,
            Weight::W2 => 0.667,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Care {
    /// Not careful: the glass was empty.
    NC,
    /// Careful: the glass was full of water.
    C,
}

/// Object class of a transport movement: weight × carefulness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ClassLabel {
    pub weight: Weight,
    pub care: Care,
}

impl ClassLabel {
    pub const W1_NC: ClassLabel = ClassLabel::new(Weight::W1, Care::NC);
    pub const W2_NC: ClassLabel = ClassLabel::new(Weight::W2, Care::NC);
    pub const W1_C: ClassLabel = ClassLabel::new(Weight::W1, Care::C);
    pub const W2_C: ClassLabel = ClassLabel::new(Weight::W2, Care::C);

    /// The four classes, ordered by increasing typical movement duration.
    pub const ALL: [ClassLabel; 4] = [Self::W1_NC, Self::W2_NC, Self::W1_C, Self::W2_C];

    pub const fn new(weight: Weight, care: Care) -> Self {
        ClassLabel { weight, care }
    }

    pub fn nominal_mass_kg(self) -> f64 {
        self.weight.nominal_mass_kg()
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = match self.weight {
            Weight::W1 => "W1",
            Weight::W2 => "W2",
        };
        let c = match self.care {
            Care::NC => "NC",
            Care::C => "C",
        };
        write!(f, "{w}-{c}")
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "W1-NC" => Ok(Self::W1_NC),
            "W2-NC" => Ok(Self::W2_NC),
            "W1-C" => Ok(Self::W1_C),
            "W2-C" => Ok(Self::W2_C),
            other => Err(Error::validation(format!("unknown class label {other:?}"))),
        }
    }
}

impl From<ClassLabel> for String {
    fn from(label: ClassLabel) -> String {
        label.to_string()
    }
}

impl TryFrom<String> for ClassLabel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One segmented transport movement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    pub label: ClassLabel,
    /// Velocity norm in m/s, one value per sample.
    pub v: Vec<f64>,
    /// Samples per second.
    pub rate: f64,
}

impl Trial {
    /// Builds a trial, checking that it has at least two finite, nonnegative samples.
    pub fn new(trial_id: impl Into<String>, label: ClassLabel, v: Vec<f64>, rate: f64) -> Result<Self> {
        let trial_id = trial_id.into();
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::validation(format!("trial {trial_id}: rate must be positive")));
        }
        if v.len() < 2 {
            return Err(Error::validation(format!("trial {trial_id}: needs at least 2 samples")));
        }
        if let Some(bad) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::validation(format!("trial {trial_id}: invalid sample {bad}")));
        }
        Ok(Trial { trial_id, label, v, rate })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.v.iter().copied().fold(0.0, f64::max)
    }

    /// True when both end samples sit at or below the segmentation boundary.
    ///
    /// Segmented and surrogate trials satisfy this; trimmed or generated ones need not.
    pub fn has_segment_boundaries(&self) -> bool {
        let bound = SEGMENT_RELATIVE_THRESHOLD * self.peak();
        self.v[0] <= bound && self.v[self.v.len() - 1] <= bound
    }

    /// The same trial with sub-threshold ends removed.
    pub fn trimmed(&self) -> Result<Trial> {
        let v = trim(&self.v)
            .map_err(|_| Error::DegenerateTrial(format!("trial {} is entirely below threshold", self.trial_id)))?;
        if v.len() < 2 {
            return Err(Error::DegenerateTrial(format!(
                "trial {} trims to a single sample",
                self.trial_id
            )));
        }
        Ok(Trial { v, ..self.clone() })
    }
}

/// Where a trial set came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
    Surrogate,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
            Provenance::Surrogate => "surrogate",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Provenance::Real),
            "synthetic" => Ok(Provenance::Synthetic),
            "surrogate" => Ok(Provenance::Surrogate),
            other => Err(Error::validation(format!("unknown provenance {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    pub provenance: Provenance,
}

impl TrialSet {
    /// Builds a set, rejecting duplicate trial ids.
    pub fn new(trials: Vec<Trial>, provenance: Provenance) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in &trials {
            if !seen.insert(t.trial_id.as_str()) {
                return Err(Error::validation(format!("duplicate trial id {}", t.trial_id)));
            }
        }
        Ok(TrialSet { trials, provenance })
    }

    pub fn empty(provenance: Provenance) -> Self {
        TrialSet { trials: Vec::new(), provenance }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn of_class(&self, label: ClassLabel) -> Vec<&Trial> {
        self.trials.iter().filter(|t| t.label == label).collect()
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.trials.iter().filter(|t| t.label == label).count()
    }

    /// Concatenates sets; ids must stay unique.
    pub fn merged(sets: Vec<TrialSet>, provenance: Provenance) -> Result<TrialSet> {
        TrialSet::new(sets.into_iter().flat_map(|s| s.trials).collect(), provenance)
    }

    /// Every trial trimmed to its natural length.
    pub fn trimmed(&self) -> Result<TrialSet> {
        let trials = self.trials.iter().map(Trial::trimmed).collect::<Result<Vec<_>>>()?;
        Ok(TrialSet { trials, provenance: self.provenance })
    }
}

/// Zero-padded, equal-length rows of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    pub label: ClassLabel,
    pub length: usize,
    /// `n × length`, each row a trial followed by zeros.
    pub rows: Array2<f64>,
    pub original_lengths: Vec<usize>,
}

impl PaddedBatch {
    pub fn n(&self) -> usize {
        self.rows.nrows()
    }
}

/// Euclidean norm of the three velocity components at every sample.
pub fn velocity_norm(vx: &[f64], vy: &[f64], vz: &[f64]) -> Result<Vec<f64>> {
    if vx.len() != vy.len() || vx.len() != vz.len() {
        return Err(Error::shape(format!(
            "velocity components have lengths {}, {}, {}",
            vx.len(),
            vy.len(),
            vz.len()
        )));
    }
    vx.iter()
        .zip(vy)
        .zip(vz)
        .map(|((&x, &y), &z)| {
            if !(x.is_finite() && y.is_finite() && z.is_finite()) {
                return Err(Error::validation("non-finite velocity component"));
            }
            Ok((x * x + y * y + z * z).sqrt())
        })
        .collect()
}

/// Converts a position recording to velocities by finite differences.
///
/// Central differences inside, first-order one-sided differences at the two ends.
pub fn differentiate(rec: &RawRecording) -> Result<RawRecording> {
    if rec.kind != ChannelKind::Position {
        return Err(Error::validation(format!("{} already holds velocities", rec.recording_id)));
    }
    let n = rec.samples.len();
    if n < 3 {
        return Err(Error::validation(format!("{}: differentiation needs at least 3 samples", rec.recording_id)));
    }
    let p = &rec.samples;
    let r = rec.rate;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, scale) = match i {
            0 => (0, 1, r),
            i if i == n - 1 => (n - 2, n - 1, r),
            i => (i - 1, i + 1, 0.5 * r),
        };
        out.push([
            (p[b][0] - p[a][0]) * scale,
            (p[b][1] - p[a][1]) * scale,
            (p[b][2] - p[a][2]) * scale,
        ]);
    }
    RawRecording::new(rec.recording_id.clone(), rec.rate, ChannelKind::Velocity, out)
}

/// Inclusive sample range `[start, end]` of one movement inside a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Splits a velocity-norm stream into movements.
///
/// Every local maximum above [`SEGMENT_PEAK_FLOOR`] seeds a span that extends
/// outwards to the first sample on each side falling below
/// [`SEGMENT_RELATIVE_THRESHOLD`] of that peak (or to the stream edge).
/// Spans that overlap by more than a shared boundary sample are merged.
pub fn segment(stream: &[f64]) -> Result<Vec<Span>> {
    if let Some(bad) = stream.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::validation(format!("segment: invalid stream value {bad}")));
    }
    let n = stream.len();
    let mut spans: Vec<Span> = Vec::new();
    for i in 0..n {
        let v = stream[i];
        if v < SEGMENT_PEAK_FLOOR {
            continue;
        }
        let left_ok = i == 0 || stream[i - 1] <= v;
        let right_ok = i + 1 == n || stream[i + 1] <= v;
        if !(left_ok && right_ok) {
            continue;
        }
        let bound = SEGMENT_RELATIVE_THRESHOLD * v;
        let mut start = i;
        while start > 0 && stream[start] >= bound {
            start -= 1;
        }
        let mut end = i;
        while end + 1 < n && stream[end] >= bound {
            end += 1;
        }
        spans.push(Span { start, end });
    }
    spans.sort_by_key(|s| (s.start, s.end));
    let mut merged: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans {
        match merged.last_mut() {
            Some(last) if s.start < last.end => last.end = last.end.max(s.end),
            _ => merged.push(s),
        }
    }
    Ok(merged)
}

/// Pads every trial of one class with trailing zeros to the longest length.
pub fn pad_class(trials: &[&Trial]) -> Result<PaddedBatch> {
    let first = trials.first().ok_or_else(|| Error::validation("pad_class: no trials"))?;
    let label = first.label;
    if let Some(t) = trials.iter().find(|t| t.label != label) {
        return Err(Error::validation(format!(
            "pad_class: trial {} has class {}, expected {label}",
            t.trial_id, t.label
        )));
    }
    let original_lengths: Vec<usize> = trials.iter().map(|t| t.len()).collect();
    let length = original_lengths.iter().copied().max().unwrap_or(0);
    let mut rows = Array2::zeros((trials.len(), length));
    for (mut row, t) in rows.outer_iter_mut().zip(trials) {
        for (dst, &src) in row.iter_mut().zip(&t.v) {
            *dst = src;
        }
    }
    Ok(PaddedBatch { label, length, rows, original_lengths })
}

/// Index range that survives trimming, or `None` if every sample is below threshold.
pub fn trim_bounds(row: &[f64]) -> Option<(usize, usize)> {
    let start = row.iter().position(|&x| x >= TRIM_THRESHOLD)?;
    let end = row.iter().rposition(|&x| x >= TRIM_THRESHOLD)?;
    Some((start, end + 1))
}

/// Removes the maximal sub-threshold prefix and suffix of a profile.
pub fn trim(row: &[f64]) -> Result<Vec<f64>> {
    if row.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("trim: non-finite sample"));
    }
    let (start, end) = trim_bounds(row)
        .ok_or_else(|| Error::DegenerateTrial("every sample is below the trim threshold".into()))?;
    Ok(row[start..end].to_vec())
}
