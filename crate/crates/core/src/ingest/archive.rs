use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{ClassLabel, Provenance, Trial, TrialSet, DEFAULT_RATE};
use crate::error::{Error, Result};

pub const ARCHIVE_HEADER: &str = "trial_id,class,sample_index,v";

/// Writes a trial set in long format, one sample per line, LF endings.
///
/// Values use the shortest decimal form that parses back to the same f64.
pub fn write_archive(set: &TrialSet, mut out: impl Write) -> Result<()> {
    let mut buf = String::with_capacity(64 * set.trials.iter().map(Trial::len).sum::<usize>() + 32);
    buf.push_str(ARCHIVE_HEADER);
    buf.push('\n');
    for t in &set.trials {
        for (i, v) in t.v.iter().enumerate() {
            buf.push_str(&format!("{},{},{},{}\n", t.trial_id, t.label, i, v));
        }
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

/// Reads a long-format archive. Trials keep the order of their first row.
pub fn read_archive(reader: impl Read, provenance: Provenance) -> Result<TrialSet> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != ARCHIVE_HEADER {
        return Err(Error::Parse(format!("archive header must be {ARCHIVE_HEADER}")));
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, (ClassLabel, Vec<f64>)> = BTreeMap::new();
    for (line, record) in rdr.records().enumerate() {
        let line = line + 2;
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.len() != 4 {
            return Err(Error::Parse(format!("archive line {line}: expected 4 fields")));
        }
        let id = &record[0];
        let label: ClassLabel = record[1].parse()?;
        let index: usize = record[2]
            .parse()
            .map_err(|_| Error::Parse(format!("archive line {line}: bad sample_index")))?;
        let v: f64 = record[3]
            .parse()
            .map_err(|_| Error::Parse(format!("archive line {line}: bad value")))?;
        let entry = rows.entry(id.to_owned()).or_insert_with(|| {
            order.push(id.to_owned());
            (label, Vec::new())
        });
        if entry.0 != label {
            return Err(Error::validation(format!("trial {id} appears with two classes")));
        }
        if index != entry.1.len() {
            return Err(Error::validation(format!(
                "trial {id}: sample_index {index} out of sequence at line {line}"
            )));
        }
        entry.1.push(v);
    }
    let trials = order
        .into_iter()
        .map(|id| {
            let (label, v) = rows.remove(&id).expect("id recorded on insert");
            Trial::new(id, label, v, DEFAULT_RATE)
        })
        .collect::<Result<Vec<_>>>()?;
    TrialSet::new(trials, provenance)
}
