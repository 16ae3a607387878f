use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scaler::ScalerParams;
use super::schema::TableSchema;
use super::table::{ColumnData, Dataset, Record};
use crate::error::{Error, Result};

/// Trainable map from a record to its unified embedding `z0`.
///
/// Numeric feature `j` owns a vector `w_j` and contributes `w_j * x_j`;
/// categorical feature `j` owns a table `E_j` with one row per category.
/// The numeric block comes first, then the categorical block, each in
/// schema order. All parameters live in one flat vector so that gradients,
/// noise and optimizer state can treat them uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpace {
    pub d_e: usize,
    pub d_num: usize,
    pub vocab_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl EmbeddingSpace {
    pub fn zeros(schema: &TableSchema, d_e: usize) -> Result<Self> {
        if d_e == 0 {
            return Err(Error::InvalidArgument("embedding width must be at least 1".into()));
        }
        let d_num = schema.d_num();
        let vocab_sizes: Vec<usize> =
            schema.categorical_features().iter().map(|&i| schema.columns[i].vocab.len()).collect();
        let n = (d_num + vocab_sizes.iter().sum::<usize>()) * d_e;
        Ok(Self { d_e, d_num, vocab_sizes, params: vec![0.0; n] })
    }

    /// Draw every entry i.i.d. from `N(0, 1/d_e)`.
    pub fn init<R: Rng + ?Sized>(schema: &TableSchema, d_e: usize, rng: &mut R) -> Result<Self> {
        let mut emb = Self::zeros(schema, d_e)?;
        let normal = Normal::new(0.0, (1.0 / d_e as f64).sqrt()).expect("valid std");
        for p in emb.params.iter_mut() {
            *p = normal.sample(rng);
        }
        Ok(emb)
    }

    pub fn d_cat(&self) -> usize {
        self.vocab_sizes.len()
    }

    /// Width of `z0`.
    pub fn width(&self) -> usize {
        (self.d_num + self.d_cat()) * self.d_e
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn numeric_offset(&self, j: usize) -> usize {
        j * self.d_e
    }

    pub fn category_offset(&self, j: usize, c: usize) -> usize {
        let before: usize = self.vocab_sizes[..j].iter().sum();
        (self.d_num + before + c) * self.d_e
    }

    pub fn numeric_weight(&self, j: usize) -> &[f64] {
        let o = self.numeric_offset(j);
        &self.params[o..o + self.d_e]
    }

    pub fn numeric_weight_mut(&mut self, j: usize) -> &mut [f64] {
        let o = self.numeric_offset(j);
        &mut self.params[o..o + self.d_e]
    }

    pub fn category_vector(&self, j: usize, c: usize) -> &[f64] {
        let o = self.category_offset(j, c);
        &self.params[o..o + self.d_e]
    }

    pub fn category_vector_mut(&mut self, j: usize, c: usize) -> &mut [f64] {
        let o = self.category_offset(j, c);
        &mut self.params[o..o + self.d_e]
    }

    /// Write `z0` for one row of scaled numerics and category indices.
    pub fn encode_row(&self, num: &[f64], cat: &[usize], out: &mut [f64]) {
        let de = self.d_e;
        debug_assert_eq!(out.len(), self.width());
        for (j, &x) in num.iter().enumerate() {
            for (o, w) in out[j * de..(j + 1) * de].iter_mut().zip(self.numeric_weight(j)) {
                *o = w * x;
            }
        }
        let base = self.d_num * de;
        for (j, &c) in cat.iter().enumerate() {
            out[base + j * de..base + (j + 1) * de].copy_from_slice(self.category_vector(j, c));
        }
    }

    /// Least-squares inversion of numeric slot `j`: `w·z / w·w`.
    pub fn decode_numeric(&self, j: usize, slot: &[f64]) -> Result<f64> {
        let w = self.numeric_weight(j);
        let ww: f64 = w.iter().map(|v| v * v).sum();
        if ww == 0.0 {
            return Err(Error::InvalidArgument(format!("numeric feature {j} has a zero-norm weight vector")));
        }
        Ok(w.iter().zip(slot).map(|(a, b)| a * b).sum::<f64>() / ww)
    }

    /// Fix the scale of every slot: numeric weights get unit norm, each
    /// category table is centered and scaled to unit RMS norm. Zero weights
    /// and single-entry tables are left alone.
    pub fn normalize(&mut self) {
        let de = self.d_e;
        for j in 0..self.d_num {
            let w = self.numeric_weight_mut(j);
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                w.iter_mut().for_each(|v| *v /= norm);
            }
        }
        for j in 0..self.vocab_sizes.len() {
            let k = self.vocab_sizes[j];
            if k < 2 {
                continue;
            }
            let start = self.category_offset(j, 0);
            let table = &mut self.params[start..start + k * de];
            for d in 0..de {
                let mean = (0..k).map(|c| table[c * de + d]).sum::<f64>() / k as f64;
                (0..k).for_each(|c| table[c * de + d] -= mean);
            }
            let rms = (table.iter().map(|v| v * v).sum::<f64>() / k as f64).sqrt();
            if rms > 0.0 {
                table.iter_mut().for_each(|v| *v /= rms);
            }
        }
    }

    /// Nearest category in L2; ties go to the lowest index.
    pub fn decode_category(&self, j: usize, slot: &[f64]) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for c in 0..self.vocab_sizes[j] {
            let dist: f64 = self.category_vector(j, c).iter().zip(slot).map(|(e, z)| (e - z) * (e - z)).sum();
            if dist < best_dist {
                best = c;
                best_dist = dist;
            }
        }
        best
    }
}

/// Training-ready view of a dataset: scaled numerics and category indices
/// of the feature columns, row-major, plus optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub d_num: usize,
    pub d_cat: usize,
    pub num: Vec<f64>,
    pub cat: Vec<usize>,
    pub labels: Option<Vec<usize>>,
}

impl FeatureMatrix {
    pub fn from_dataset(data: &Dataset, schema: &TableSchema, scaler: &ScalerParams) -> Result<Self> {
        let n = data.n_rows();
        let num_idx = schema.numeric_features();
        let cat_idx = schema.categorical_features();
        let mut num = vec![0.0; n * num_idx.len()];
        let mut cat = vec![0usize; n * cat_idx.len()];
        for (j, &ci) in num_idx.iter().enumerate() {
            let col = data.columns[ci]
                .as_numeric()
                .ok_or_else(|| Error::column(&schema.columns[ci].name, "expected numeric data"))?;
            for (r, &x) in col.iter().enumerate() {
                num[r * num_idx.len() + j] = scaler.apply_scale(j, x);
            }
        }
        for (j, &ci) in cat_idx.iter().enumerate() {
            let col = data.columns[ci]
                .as_categorical()
                .ok_or_else(|| Error::column(&schema.columns[ci].name, "expected categorical data"))?;
            for (r, &c) in col.iter().enumerate() {
                cat[r * cat_idx.len() + j] = c;
            }
        }
        let labels = match schema.label_index() {
            Some(li) => Some(
                data.columns[li]
                    .as_categorical()
                    .ok_or_else(|| Error::column(&schema.columns[li].name, "expected categorical data"))?
                    .to_vec(),
            ),
            None => None,
        };
        Ok(Self { n_rows: n, d_num: num_idx.len(), d_cat: cat_idx.len(), num, cat, labels })
    }

    pub fn num_row(&self, r: usize) -> &[f64] {
        &self.num[r * self.d_num..(r + 1) * self.d_num]
    }

    pub fn cat_row(&self, r: usize) -> &[usize] {
        &self.cat[r * self.d_cat..(r + 1) * self.d_cat]
    }

    pub fn label(&self, r: usize) -> Option<usize> {
        self.labels.as_ref().map(|l| l[r])
    }
}

/// Rows of `z0` (or of generated `z`) with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub width: usize,
    pub data: Vec<f64>,
    pub labels: Option<Vec<usize>>,
}

impl EncodedBatch {
    pub fn n_rows(&self) -> usize {
        if self.width == 0 {
            self.labels.as_ref().map_or(0, Vec::len)
        } else {
            self.data.len() / self.width
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }
}

pub fn encode_features(features: &FeatureMatrix, emb: &EmbeddingSpace) -> EncodedBatch {
    let width = emb.width();
    let mut data = vec![0.0; features.n_rows * width];
    for r in 0..features.n_rows {
        emb.encode_row(features.num_row(r), features.cat_row(r), &mut data[r * width..(r + 1) * width]);
    }
    EncodedBatch { width, data, labels: features.labels.clone() }
}

/// Encode raw records. Numeric values are scaled internally.
pub fn encode(
    records: &[Record],
    schema: &TableSchema,
    scaler: &ScalerParams,
    emb: &EmbeddingSpace,
) -> Result<EncodedBatch> {
    let data = Dataset::from_records(records, schema)?;
    let features = FeatureMatrix::from_dataset(&data, schema, scaler)?;
    Ok(encode_features(&features, emb))
}

/// Decode embedding rows back into a typed dataset.
///
/// The label column, if the schema has one, is taken from `encoded.labels`.
pub fn decode(
    encoded: &EncodedBatch,
    schema: &TableSchema,
    scaler: &ScalerParams,
    emb: &EmbeddingSpace,
) -> Result<Dataset> {
    if encoded.width != emb.width() {
        return Err(Error::Shape { expected: emb.width(), actual: encoded.width });
    }
    let n = encoded.n_rows();
    let de = emb.d_e;
    let mut columns: Vec<Option<ColumnData>> = vec![None; schema.columns.len()];
    for (j, &ci) in schema.numeric_features().iter().enumerate() {
        let mut values = Vec::with_capacity(n);
        for r in 0..n {
            let slot = &encoded.row(r)[j * de..(j + 1) * de];
            values.push(scaler.invert_scale(j, emb.decode_numeric(j, slot)?));
        }
        columns[ci] = Some(ColumnData::Numeric(values));
    }
    let base = emb.d_num * de;
    for (j, &ci) in schema.categorical_features().iter().enumerate() {
        let values = (0..n)
            .map(|r| emb.decode_category(j, &encoded.row(r)[base + j * de..base + (j + 1) * de]))
            .collect();
        columns[ci] = Some(ColumnData::Categorical(values));
    }
    if let Some(li) = schema.label_index() {
        let labels = encoded
            .labels
            .as_ref()
            .ok_or_else(|| Error::Schema("schema has a label column but no labels were supplied".into()))?;
        if labels.len() != n {
            return Err(Error::Shape { expected: n, actual: labels.len() });
        }
        columns[li] = Some(ColumnData::Categorical(labels.clone()));
    }
    Ok(Dataset { columns: columns.into_iter().map(|c| c.expect("every column decoded")).collect() })
}
