use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::RawTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Sorted distinct category strings; empty for numeric columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocab: Vec<String>,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Numeric, vocab: Vec::new() }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, vocab: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            vocab: vocab.into_iter().map(Into::into).collect(),
        }
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.vocab.iter().position(|v| v == value)
    }
}

/// Which columns are numeric and which categorical, as declared by the user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeclaredKinds {
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Conditioning column. Treated as categorical even if not listed.
    #[serde(default)]
    pub label: Option<String>,
}

/// Column metadata of a mixed-type table.
///
/// The label column, when present, conditions the denoiser and is not part
/// of the diffused embedding. All other columns are "features".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub label_column: Option<String>,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSpec>, label_column: Option<String>) -> Result<Self> {
        let schema = Self { columns, label_column };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
            }
            match col.kind {
                ColumnKind::Categorical => {
                    if col.vocab.is_empty() {
                        return Err(Error::column(&col.name, "categorical column has empty vocabulary"));
                    }
                    let distinct: HashSet<_> = col.vocab.iter().collect();
                    if distinct.len() != col.vocab.len() {
                        return Err(Error::column(&col.name, "duplicate vocabulary entries"));
                    }
                }
                ColumnKind::Numeric => {
                    if !col.vocab.is_empty() {
                        return Err(Error::column(&col.name, "numeric column carries a vocabulary"));
                    }
                }
            }
        }
        if let Some(label) = &self.label_column {
            match self.column(label) {
                Some(c) if c.kind == ColumnKind::Categorical => {}
                Some(_) => return Err(Error::column(label, "label column must be categorical")),
                None => return Err(Error::Schema(format!("label column `{label}` not in schema"))),
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn label_index(&self) -> Option<usize> {
        self.label_column.as_deref().and_then(|l| self.column_index(l))
    }

    pub fn label_spec(&self) -> Option<&ColumnSpec> {
        self.label_index().map(|i| &self.columns[i])
    }

    pub fn n_classes(&self) -> usize {
        self.label_spec().map_or(0, |c| c.vocab.len())
    }

    /// Indices of numeric feature columns, in schema order.
    pub fn numeric_features(&self) -> Vec<usize> {
        self.feature_indices(ColumnKind::Numeric)
    }

    /// Indices of categorical feature columns (label excluded), in schema order.
    pub fn categorical_features(&self) -> Vec<usize> {
        self.feature_indices(ColumnKind::Categorical)
    }

    fn feature_indices(&self, kind: ColumnKind) -> Vec<usize> {
        let label = self.label_index();
        self.columns
            .iter()
            .enumerate()
            .filter(|(i, c)| c.kind == kind && Some(*i) != label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn d_num(&self) -> usize {
        self.numeric_features().len()
    }

    pub fn d_cat(&self) -> usize {
        self.categorical_features().len()
    }

    /// Width of the unified embedding, `(d_num + d_cat) * d_e`.
    pub fn encoded_width(&self, d_e: usize) -> usize {
        (self.d_num() + self.d_cat()) * d_e
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: Self = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    /// Same columns and kinds, vocabularies extended with the union of both.
    pub fn merged_vocab(&self, other: &TableSchema) -> Result<TableSchema> {
        if self.columns.len() != other.columns.len() {
            return Err(Error::Schema("schemas have different column counts".into()));
        }
        let mut columns = Vec::with_capacity(self.columns.len());
        for (a, b) in self.columns.iter().zip(&other.columns) {
            if a.name != b.name || a.kind != b.kind {
                return Err(Error::Schema(format!("column `{}` does not match `{}`", a.name, b.name)));
            }
            let vocab: BTreeSet<String> = a.vocab.iter().chain(&b.vocab).cloned().collect();
            columns.push(ColumnSpec { name: a.name.clone(), kind: a.kind, vocab: vocab.into_iter().collect() });
        }
        TableSchema::new(columns, self.label_column.clone())
    }
}

/// Infer a schema from a raw CSV table and the user's kind declarations.
///
/// Vocabularies are the sorted distinct values observed in each categorical
/// column. Every header column must be declared exactly once.
pub fn fit_schema(table: &RawTable, kinds: &DeclaredKinds) -> Result<TableSchema> {
    if table.rows.is_empty() {
        return Err(Error::Schema("table has no data rows".into()));
    }
    for name in kinds.numeric.iter().chain(&kinds.categorical).chain(kinds.label.iter()) {
        if table.column_index(name).is_none() {
            return Err(Error::Schema(format!("declared column `{name}` not in header")));
        }
    }
    if let Some(label) = &kinds.label {
        if kinds.numeric.contains(label) {
            return Err(Error::column(label, "label column declared numeric"));
        }
    }

    let mut columns = Vec::with_capacity(table.header.len());
    for (idx, name) in table.header.iter().enumerate() {
        let is_num = kinds.numeric.contains(name);
        let is_cat = kinds.categorical.contains(name) || kinds.label.as_ref() == Some(name);
        match (is_num, is_cat) {
            (true, true) => return Err(Error::column(name, "declared both numeric and categorical")),
            (false, false) => return Err(Error::column(name, "column kind not declared")),
            (true, false) => {
                for (row, cells) in table.rows.iter().enumerate() {
                    parse_numeric(&cells[idx]).ok_or_else(|| {
                        Error::column(name, format!("row {row}: cannot parse `{}` as a number", cells[idx]))
                    })?;
                }
                columns.push(ColumnSpec::numeric(name.clone()));
            }
            (false, true) => {
                let vocab: BTreeSet<&str> = table.rows.iter().map(|r| r[idx].as_str()).collect();
                columns.push(ColumnSpec::categorical(name.clone(), vocab));
            }
        }
    }
    TableSchema::new(columns, kinds.label.clone())
}

pub(crate) fn parse_numeric(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}
