use std::collections::BTreeMap;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::params::ParameterStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Serialised form of one network's parameters.
///
/// Values are written with 17 significant digits so every f64 reads back
/// bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub seed: u64,
    pub parameters: BTreeMap<String, CheckpointParam>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointParam {
    pub shape: Vec<usize>,
    #[serde(serialize_with = "seventeen_digits")]
    pub values: Vec<f64>,
}

fn seventeen_digits<S: Serializer>(values: &[f64], ser: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = ser.serialize_seq(Some(values.len()))?;
    for v in values {
        let raw = RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

impl Checkpoint {
    pub fn from_store(store: &ParameterStore, config: &impl Serialize) -> Result<Self> {
        if !store.all_finite() {
            return Err(Error::NonFinite("refusing to checkpoint non-finite parameters".into()));
        }
        let parameters = store
            .params()
            .iter()
            .map(|p| (p.name.clone(), CheckpointParam { shape: p.shape.clone(), values: p.values.clone() }))
            .collect();
        Ok(Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: serde_json::to_value(config)?,
            seed: store.seed(),
            parameters,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", ck.format_version)));
        }
        Ok(ck)
    }

    /// Copies values into a store with identical names and shapes.
    pub fn restore_into(&self, store: &mut ParameterStore) -> Result<()> {
        if self.parameters.len() != store.len() {
            return Err(Error::shape(format!(
                "checkpoint has {} parameters, network has {}",
                self.parameters.len(),
                store.len()
            )));
        }
        for id in store.ids().collect::<Vec<_>>() {
            let p = store.get(id);
            let src = self
                .parameters
                .get(&p.name)
                .ok_or_else(|| Error::shape(format!("checkpoint lacks parameter {}", p.name)))?;
            if src.shape != p.shape {
                return Err(Error::shape(format!("parameter {}: shape {:?} vs {:?}", p.name, src.shape, p.shape)));
            }
            if src.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter {} is non-finite", p.name)));
            }
            store.values_mut(id).copy_from_slice(&src.values);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip_bit_exact() {
        let mut s = ParameterStore::new(99);
        let vals = vec![0.1, -1.0 / 3.0, 1e-300, 5e-324, 1.7976931348623157e308, -0.0, 2.0f64.sqrt()];
        s.insert("w", vec![vals.len()], vals.clone()).unwrap();
        let ck = Checkpoint::from_store(&s, &serde_json::json!({"k": 1})).unwrap();
        let text = ck.to_json().unwrap();
        assert!(text.contains("1.0000000000000001e-1") || text.contains("1.0000000000000000e-1"));
        let back = Checkpoint::from_json(&text).unwrap();
        let mut s2 = ParameterStore::new(99);
        s2.insert("w", vec![vals.len()], vec![0.0; vals.len()]).unwrap();
        back.restore_into(&mut s2).unwrap();
        for (a, b) in s2.get(s2.find("w").unwrap()).values.iter().zip(&vals) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.seed, 99);
    }
}
