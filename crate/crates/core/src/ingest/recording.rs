use std::io::Read;

use crate::error::{Error, Result};

/// What the three channels of a recording hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    /// x, y, z in meters.
    Position,
    /// vx, vy, vz in m/s.
    Velocity,
}

/// A continuous end-effector recording at a uniform rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecording {
    pub recording_id: String,
    pub rate: f64,
    pub kind: ChannelKind,
    pub samples: Vec<[f64; 3]>,
}

impl RawRecording {
    pub fn new(recording_id: impl Into<String>, rate: f64, kind: ChannelKind, samples: Vec<[f64; 3]>) -> Result<Self> {
        let recording_id = recording_id.into();
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::validation(format!("{recording_id}: rate must be positive")));
        }
        if samples.len() < 2 {
            return Err(Error::validation(format!("{recording_id}: needs at least 2 samples")));
        }
        if samples.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::validation(format!("{recording_id}: non-finite sample")));
        }
        Ok(RawRecording { recording_id, rate, kind, samples })
    }

    /// Velocity norm per sample; positions are differentiated first.
    pub fn speed(&self) -> Result<Vec<f64>> {
        let vel = match self.kind {
            ChannelKind::Velocity => self.clone(),
            ChannelKind::Position => super::differentiate(self)?,
        };
        let column = |k: usize| vel.samples.iter().map(|s| s[k]).collect::<Vec<_>>();
        super::velocity_norm(&column(0), &column(1), &column(2))
    }
}

/// Reads a recording CSV with header `t,x,y,z` or `t,vx,vy,vz`.
///
/// The rate is recovered from the time column, which must be uniformly spaced
/// (each step within 1% of the mean step).
pub fn read_recording(recording_id: &str, reader: impl Read) -> Result<RawRecording> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("{recording_id}: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let kind = match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["t", "x", "y", "z"] => ChannelKind::Position,
        ["t", "vx", "vy", "vz"] => ChannelKind::Velocity,
        other => {
            return Err(Error::Parse(format!(
                "{recording_id}: expected header t,x,y,z or t,vx,vy,vz, got {}",
                other.join(",")
            )))
        }
    };
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{recording_id}: {e}")))?;
        if record.len() != 4 {
            return Err(Error::Parse(format!("{recording_id}: row {} has {} fields", line + 2, record.len())));
        }
        let mut vals = [0.0; 4];
        for (dst, field) in vals.iter_mut().zip(record.iter()) {
            *dst = field
                .parse()
                .map_err(|_| Error::Parse(format!("{recording_id}: row {}: bad number {field:?}", line + 2)))?;
        }
        times.push(vals[0]);
        samples.push([vals[1], vals[2], vals[3]]);
    }
    if times.len() < 2 {
        return Err(Error::validation(format!("{recording_id}: needs at least 2 samples")));
    }
    let span = times[times.len() - 1] - times[0];
    let dt = span / (times.len() - 1) as f64;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::validation(format!("{recording_id}: time column must increase")));
    }
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 0.01 * dt) {
        return Err(Error::validation(format!("{recording_id}: time column is not uniformly spaced")));
    }
    RawRecording::new(recording_id, 1.0 / dt, kind, samples)
}
