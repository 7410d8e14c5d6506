use std::fs::File;
use std::io::{self, BufReader};
use std::path::Path;

use fairstream::stream::{stream_mean, AttributeSchema, CsvStream, LabeledSample, SampleStream};
use fairstream::{Error, Result};

use crate::manifest::{HashingReader, InputDigest};

pub type DataStream = CsvStream<BufReader<HashingReader<File>>>;

/// Opens a CSV data file; bytes are hashed as the stream reads them.
pub fn open_data(path: &Path, schema: AttributeSchema) -> Result<DataStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    CsvStream::from_reader(BufReader::new(HashingReader::new(file)), schema, path)
}

/// Reads whatever the consumer left unread and returns the file digest.
pub fn finish_data(role: &str, path: &Path, stream: DataStream) -> Result<InputDigest> {
    let mut reader = stream.into_inner();
    io::copy(&mut reader, &mut io::sink()).map_err(|e| Error::io(path, e))?;
    let (sha256, bytes) = reader.into_inner().finish();
    Ok(InputDigest {
        role: role.into(),
        path: path.to_path_buf(),
        sha256,
        bytes,
    })
}

/// First pass of a centered run: the pooled mean of the whole file.
pub fn data_mean(path: &Path, schema: AttributeSchema) -> Result<(Vec<f64>, InputDigest)> {
    let mut stream = open_data(path, schema)?;
    let (mean, _) = stream_mean(&mut stream)?;
    Ok((mean, finish_data("data", path, stream)?))
}

/// A second pass must see the same bytes as the first.
pub fn check_same_file(first: &InputDigest, second: &InputDigest) -> Result<()> {
    if first.sha256 != second.sha256 {
        return Err(Error::io(
            &second.path,
            io::Error::other("file changed between the centering pass and the fitting pass"),
        ));
    }
    Ok(())
}

/// Materializes a CSV file in one pass.
pub fn load_data(path: &Path, schema: AttributeSchema) -> Result<(Vec<LabeledSample>, InputDigest)> {
    let mut stream = open_data(path, schema)?;
    let mut data = Vec::new();
    while let Some(s) = stream.next_sample()? {
        data.push(s);
    }
    Ok((data, finish_data("data", path, stream)?))
}

/// One binary attribute unless group counts are given.
pub fn schema_from(groups: Option<&[usize]>) -> Result<AttributeSchema> {
    match groups {
        None => Ok(AttributeSchema::binary()),
        Some(groups) => AttributeSchema::new(groups.to_vec()),
    }
}
