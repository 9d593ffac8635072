use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Min-max scaling of the single velocity feature to the unit interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let s = MinMaxScaler { min, max };
        s.validate()?;
        Ok(s)
    }

    /// Fits on the training rows; a batch with no spread is rejected.
    pub fn fit(rows: &Array2<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::validation("cannot fit a scaler on an empty batch"));
        }
        let min = rows.iter().copied().fold(f64::INFINITY, f64::min);
        let max = rows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(min, max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::validation("scaler bounds must be finite"));
        }
        if self.max <= self.min {
            return Err(Error::DegenerateData(format!("scaler range is empty: min {} max {}", self.min, self.max)));
        }
        Ok(())
    }

    pub fn scale(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        self.validate()?;
        let span = self.max - self.min;
        Ok(rows.mapv(|x| (x - self.min) / span))
    }

    pub fn inverse_scale(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        self.validate()?;
        let span = self.max - self.min;
        Ok(rows.mapv(|x| x * span + self.min))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn midpoint_maps_to_half() {
        let rows = array![[0.0, 1.0], [2.0, 0.5]];
        let s = MinMaxScaler::fit(&rows).unwrap();
        assert_eq!(s, MinMaxScaler { min: 0.0, max: 2.0 });
        assert_eq!(s.scale(&rows).unwrap()[[0, 1]], 0.5);
    }

    #[test]
    fn constant_batch_is_degenerate() {
        let rows = Array2::from_elem((3, 4), 0.7);
        assert!(matches!(MinMaxScaler::fit(&rows), Err(Error::DegenerateData(_))));
    }
}
