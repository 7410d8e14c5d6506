//! Samples, one-pass streams, CSV ingestion and the synthetic generator.

mod csv;
mod sample;
mod source;
mod synthetic;

pub use self::csv::{csv_header, open_csv_stream, CsvStream, CsvWriter};
pub use sample::{AttributeSchema, LabeledSample};
pub use source::{center_in_place, stream_mean, take_block, CenteredStream, CyclingStream, SampleStream, VecStream};
pub use synthetic::{PerGroup, Rotation, SyntheticSpec, SyntheticStream, MAX_DENSE_ROTATION_DIM};
