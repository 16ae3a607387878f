use std::io::{Read, Write};
use std::path::Path;

use super::schema::{parse_numeric, ColumnKind, TableSchema};
use crate::error::{Error, Result};

/// Untyped CSV contents: a header and string cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::Schema("missing header row".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.header)?;
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.to_writer(std::io::BufWriter::new(f))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// A single typed cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(String),
}

pub type Record = Vec<Value>;

/// Typed values of one column. Categories are vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<usize>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[usize]> {
        match self {
            ColumnData::Categorical(v) => Some(v),
            ColumnData::Numeric(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Column-oriented table whose columns follow a [`TableSchema`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<ColumnData>,
}

impl Dataset {
    /// Parse a raw table against a schema. Header order may differ from the
    /// schema; columns are matched by name.
    pub fn from_raw(raw: &RawTable, schema: &TableSchema) -> Result<Self> {
        if raw.header.len() != schema.columns.len() {
            return Err(Error::Schema(format!(
                "header has {} columns, schema has {}",
                raw.header.len(),
                schema.columns.len()
            )));
        }
        let mut columns = Vec::with_capacity(schema.columns.len());
        for spec in &schema.columns {
            let idx = raw
                .column_index(&spec.name)
                .ok_or_else(|| Error::Schema(format!("column `{}` missing from header", spec.name)))?;
            let col = match spec.kind {
                ColumnKind::Numeric => ColumnData::Numeric(
                    raw.rows
                        .iter()
                        .enumerate()
                        .map(|(r, row)| {
                            parse_numeric(&row[idx]).ok_or_else(|| {
                                Error::column(&spec.name, format!("row {r}: cannot parse `{}`", row[idx]))
                            })
                        })
                        .collect::<Result<_>>()?,
                ),
                ColumnKind::Categorical => ColumnData::Categorical(
                    raw.rows
                        .iter()
                        .map(|row| {
                            spec.category_index(&row[idx]).ok_or_else(|| Error::UnknownCategory {
                                column: spec.name.clone(),
                                value: row[idx].clone(),
                            })
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            columns.push(col);
        }
        Ok(Self { columns })
    }

    pub fn from_records(records: &[Record], schema: &TableSchema) -> Result<Self> {
        let mut columns: Vec<ColumnData> = schema
            .columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Numeric => ColumnData::Numeric(Vec::with_capacity(records.len())),
                ColumnKind::Categorical => ColumnData::Categorical(Vec::with_capacity(records.len())),
            })
            .collect();
        for rec in records {
            if rec.len() != schema.columns.len() {
                return Err(Error::Shape { expected: schema.columns.len(), actual: rec.len() });
            }
            for ((value, col), spec) in rec.iter().zip(columns.iter_mut()).zip(&schema.columns) {
                match (value, col) {
                    (Value::Num(x), ColumnData::Numeric(v)) => v.push(*x),
                    (Value::Cat(s), ColumnData::Categorical(v)) => {
                        v.push(spec.category_index(s).ok_or_else(|| Error::UnknownCategory {
                            column: spec.name.clone(),
                            value: s.clone(),
                        })?)
                    }
                    _ => return Err(Error::column(&spec.name, "value kind does not match column kind")),
                }
            }
        }
        Ok(Self { columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, ColumnData::len)
    }

    pub fn record(&self, row: usize, schema: &TableSchema) -> Record {
        self.columns
            .iter()
            .zip(&schema.columns)
            .map(|(col, spec)| match col {
                ColumnData::Numeric(v) => Value::Num(v[row]),
                ColumnData::Categorical(v) => Value::Cat(spec.vocab[v[row]].clone()),
            })
            .collect()
    }

    pub fn records(&self, schema: &TableSchema) -> Vec<Record> {
        (0..self.n_rows()).map(|r| self.record(r, schema)).collect()
    }

    pub fn to_raw(&self, schema: &TableSchema) -> RawTable {
        let header = schema.columns.iter().map(|c| c.name.clone()).collect();
        let rows = (0..self.n_rows())
            .map(|r| {
                self.columns
                    .iter()
                    .zip(&schema.columns)
                    .map(|(col, spec)| match col {
                        ColumnData::Numeric(v) => format!("{}", v[r]),
                        ColumnData::Categorical(v) => spec.vocab[v[r]].clone(),
                    })
                    .collect()
            })
            .collect();
        RawTable { header, rows }
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset { columns: self.columns.iter().map(|c| c.select(rows)).collect() }
    }

    /// Split into `(first, rest)` at row `at`.
    pub fn split_at(&self, at: usize) -> (Dataset, Dataset) {
        let n = self.n_rows();
        let head: Vec<usize> = (0..at.min(n)).collect();
        let tail: Vec<usize> = (at.min(n)..n).collect();
        (self.select_rows(&head), self.select_rows(&tail))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::schema::ColumnSpec;

    #[test]
    fn csv_parse_and_unknown_category() {
        let schema = TableSchema::new(
            vec![ColumnSpec::numeric("x"), ColumnSpec::categorical("c", ["a", "b"])],
            None,
        )
        .unwrap();
        let raw = RawTable::from_reader("c,x\nb,1.5\na,2\n".as_bytes()).unwrap();
        let ds = Dataset::from_raw(&raw, &schema).unwrap();
        assert_eq!(ds.columns[0], ColumnData::Numeric(vec![1.5, 2.0]));
        assert_eq!(ds.columns[1], ColumnData::Categorical(vec![1, 0]));

        let raw = RawTable::from_reader("x,c\n1,z\n".as_bytes()).unwrap();
        match Dataset::from_raw(&raw, &schema) {
            Err(Error::UnknownCategory { column, value }) => assert_eq!((column.as_str(), value.as_str()), ("c", "z")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn raw_round_trip() {
        let schema = TableSchema::new(
            vec![ColumnSpec::numeric("x"), ColumnSpec::categorical("c", ["a", "b"])],
            None,
        )
        .unwrap();
        let ds = Dataset { columns: vec![ColumnData::Numeric(vec![0.1, -3.25]), ColumnData::Categorical(vec![1, 1])] };
        let mut buf = Vec::new();
        ds.to_raw(&schema).to_writer(&mut buf).unwrap();
        let back = Dataset::from_raw(&RawTable::from_reader(buf.as_slice()).unwrap(), &schema).unwrap();
        assert_eq!(back, ds);
    }
}
