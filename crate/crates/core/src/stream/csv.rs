//! Plain CSV ingestion: header `a_1,…,a_ℓ,x_1,…,x_d`, base-10 attribute
//! columns, decimal feature columns, comma separated, no quoting, LF or
//! CRLF endings. Rows are read one at a time.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::stream::sample::{AttributeSchema, LabeledSample};
use crate::stream::source::SampleStream;

/// Header line for a schema with `attributes` attribute columns and `dim`
/// feature columns (no line terminator).
pub fn csv_header(attributes: usize, dim: usize) -> String {
    let a = (1..=attributes).map(|r| format!("a_{r}"));
    let x = (1..=dim).map(|j| format!("x_{j}"));
    a.chain(x).collect::<Vec<_>>().join(",")
}

pub struct CsvStream<R> {
    schema: AttributeSchema,
    dim: usize,
    reader: R,
    path: PathBuf,
    line_no: usize,
    buf: String,
}

/// Opens `path` and validates its header against `schema`.
pub fn open_csv_stream(
    path: impl AsRef<Path>,
    schema: AttributeSchema,
) -> Result<CsvStream<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    CsvStream::from_reader(BufReader::new(file), schema, path)
}

impl<R: BufRead> CsvStream<R> {
    pub fn from_reader(mut reader: R, schema: AttributeSchema, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut buf = String::new();
        let n = reader.read_line(&mut buf).map_err(|e| Error::io(&path, e))?;
        if n == 0 {
            return Err(Error::MalformedRow {
                line: 1,
                reason: "missing header".into(),
            });
        }
        let header = trim_eol(&buf);
        let names: Vec<&str> = header.split(',').collect();
        let ell = schema.attribute_count();
        if names.len() <= ell {
            return Err(Error::MalformedRow {
                line: 1,
                reason: format!(
                    "header has {} columns; need {ell} attribute columns and at least one feature",
                    names.len()
                ),
            });
        }
        let dim = names.len() - ell;
        for (i, name) in names.iter().enumerate() {
            let want = if i < ell {
                format!("a_{}", i + 1)
            } else {
                format!("x_{}", i - ell + 1)
            };
            if name.trim() != want {
                return Err(Error::MalformedRow {
                    line: 1,
                    reason: format!("header column {} is {name:?}, expected {want:?}", i + 1),
                });
            }
        }
        Ok(CsvStream {
            schema,
            dim,
            reader,
            path,
            line_no: 1,
            buf,
        })
    }

    fn parse_row(&self, line: &str) -> Result<LabeledSample> {
        let ell = self.schema.attribute_count();
        let malformed = |reason: String| Error::MalformedRow {
            line: self.line_no,
            reason,
        };
        let mut attributes = Vec::with_capacity(ell);
        let mut features = Vec::with_capacity(self.dim);
        let mut count = 0;
        for (i, field) in line.split(',').enumerate() {
            count += 1;
            if i < ell {
                let a: usize = field
                    .trim()
                    .parse()
                    .map_err(|_| malformed(format!("attribute column {} is not a non-negative integer: {field:?}", i + 1)))?;
                let g = self.schema.group_counts()[i];
                if a >= g {
                    return Err(malformed(format!(
                        "group index {a} out of range for attribute {} with {g} groups",
                        i + 1
                    )));
                }
                attributes.push(a);
            } else if i < ell + self.dim {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| malformed(format!("feature column {} is not a number: {field:?}", i - ell + 1)))?;
                if !v.is_finite() {
                    return Err(malformed(format!("feature column {} is not finite", i - ell + 1)));
                }
                features.push(v);
            }
        }
        if count != ell + self.dim {
            return Err(malformed(format!(
                "{count} columns, expected {}",
                ell + self.dim
            )));
        }
        Ok(LabeledSample::new(attributes, features))
    }
}

impl<R> CsvStream<R> {
    /// The underlying reader, positioned after the last row handed out.
    pub fn into_inner(self) -> R {
        self.reader
    }
}

impl<R: BufRead> SampleStream for CsvStream<R> {
    fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn next_sample(&mut self) -> Result<Option<LabeledSample>> {
        loop {
            self.buf.clear();
            let n = self
                .reader
                .read_line(&mut self.buf)
                .map_err(|e| Error::io(&self.path, e))?;
            if n == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let line = trim_eol(&self.buf);
            // Blank lines (typically a trailing newline) carry no sample.
            if line.is_empty() {
                continue;
            }
            return self.parse_row(line).map(Some);
        }
    }
}

fn trim_eol(s: &str) -> &str {
    s.trim_end_matches('\n').trim_end_matches('\r')
}

/// Writes samples in the ingestion format. Features are printed with 17
/// significant digits so that re-reading reproduces them exactly.
pub struct CsvWriter<W: Write> {
    out: W,
    attributes: usize,
    dim: usize,
    line: String,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, attributes: usize, dim: usize) -> std::io::Result<Self> {
        writeln!(out, "{}", csv_header(attributes, dim))?;
        Ok(CsvWriter {
            out,
            attributes,
            dim,
            line: String::new(),
        })
    }

    pub fn write(&mut self, sample: &LabeledSample) -> std::io::Result<()> {
        use std::fmt::Write as _;
        debug_assert_eq!(sample.attributes.len(), self.attributes);
        debug_assert_eq!(sample.features.len(), self.dim);
        self.line.clear();
        for (i, a) in sample.attributes.iter().enumerate() {
            if i > 0 {
                self.line.push(',');
            }
            let _ = write!(self.line, "{a}");
        }
        for v in &sample.features {
            let _ = write!(self.line, ",{v:.16e}");
        }
        self.line.push('\n');
        self.out.write_all(self.line.as_bytes())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
