use serde::{Deserialize, Serialize};

use super::schema::TableSchema;
use super::table::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    /// Population standard deviation, always positive.
    pub std: f64,
}

impl ColumnScale {
    /// Fit on raw values. Fails on empty or constant columns.
    pub fn fit(name: &str, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::column(name, "cannot fit scaler on empty column"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::column(name, "zero standard deviation (constant column)"));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Standard-scaler parameters for every numeric feature column, in
/// `schema.numeric_features()` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<ColumnScale>,
}

impl ScalerParams {
    pub fn fit(data: &Dataset, schema: &TableSchema) -> Result<Self> {
        let columns = schema
            .numeric_features()
            .into_iter()
            .map(|i| {
                let name = &schema.columns[i].name;
                let values = data.columns[i]
                    .as_numeric()
                    .ok_or_else(|| Error::column(name, "expected numeric data"))?;
                ColumnScale::fit(name, values)
            })
            .collect::<Result<_>>()?;
        Ok(Self { columns })
    }

    /// Scale value `x` of the `j`-th numeric feature.
    pub fn apply_scale(&self, j: usize, x: f64) -> f64 {
        self.columns[j].apply(x)
    }

    pub fn invert_scale(&self, j: usize, z: f64) -> f64 {
        self.columns[j].invert(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn population_std() {
        let s = ColumnScale::fit("x", &[1.0, 2.0, 3.0]).unwrap();
        // population std of [1, 2, 3] is sqrt(2/3)
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.std - 0.8165).abs() < 1e-4);
        let scaled: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&x| s.apply(x)).collect();
        assert!((scaled[0] + 1.2247).abs() < 1e-4);
        assert!(scaled[1].abs() < 1e-15);
        assert!((scaled[2] - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn near_constant_fits() {
        let s = ColumnScale::fit("x", &[5.0, 5.0001, 4.9999]).unwrap();
        assert!(s.std > 0.0);
        assert!(s.apply(5.0).abs() < 1e-6);
    }

    #[test]
    fn constant_column_names_column() {
        let err = ColumnScale::fit("income", &[3.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("income"));
    }

    #[test]
    fn round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..100).map(|_| rng.random_range(-1e3..1e3)).collect();
        let s = ColumnScale::fit("x", &values).unwrap();
        let max_err = values.iter().map(|&v| (s.invert(s.apply(v)) - v).abs()).fold(0.0, f64::max);
        assert!(max_err < 1e-9);
    }
}
