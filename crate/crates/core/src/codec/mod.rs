//! Mixed-type tables: schema inference, CSV I/O, standard scaling and the
//! trainable embedding that maps records to the dense diffusion space.

mod embedding;
mod scaler;
mod schema;
mod table;

pub use embedding::{decode, encode, encode_features, EmbeddingSpace, EncodedBatch, FeatureMatrix};
pub use scaler::{ColumnScale, ScalerParams};
pub use schema::{fit_schema, ColumnKind, ColumnSpec, DeclaredKinds, TableSchema};
pub use table::{ColumnData, Dataset, RawTable, Record, Value};
