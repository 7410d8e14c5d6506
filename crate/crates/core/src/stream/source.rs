use crate::error::{Error, Result};
use crate::stream::sample::{AttributeSchema, LabeledSample};

/// Pull-based, one-pass source of labeled samples. Every element is handed
/// out at most once; a consumer that wants to look at it again must keep
/// its own copy.
pub trait SampleStream {
    fn schema(&self) -> &AttributeSchema;

    fn dim(&self) -> usize;

    /// Next sample, or `None` at end of stream.
    fn next_sample(&mut self) -> Result<Option<LabeledSample>>;
}

impl<S: SampleStream + ?Sized> SampleStream for &mut S {
    fn schema(&self) -> &AttributeSchema {
        (**self).schema()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn next_sample(&mut self) -> Result<Option<LabeledSample>> {
        (**self).next_sample()
    }
}

impl<S: SampleStream + ?Sized> SampleStream for Box<S> {
    fn schema(&self) -> &AttributeSchema {
        (**self).schema()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn next_sample(&mut self) -> Result<Option<LabeledSample>> {
        (**self).next_sample()
    }
}

/// Pulls up to `n` samples. The flag is true iff fewer than `n` were
/// available.
pub fn take_block<S: SampleStream + ?Sized>(
    stream: &mut S,
    n: usize,
) -> Result<(Vec<LabeledSample>, bool)> {
    if n == 0 {
        return Err(Error::InvalidConfig("block size must be at least 1".into()));
    }
    let mut block = Vec::with_capacity(n.min(1 << 16));
    while block.len() < n {
        match stream.next_sample()? {
            Some(s) => block.push(s),
            None => return Ok((block, true)),
        }
    }
    Ok((block, false))
}

/// Finite stream over an owned list, validated up front.
#[derive(Debug, Clone)]
pub struct VecStream {
    schema: AttributeSchema,
    dim: usize,
    samples: std::vec::IntoIter<LabeledSample>,
}

impl VecStream {
    pub fn new(schema: AttributeSchema, samples: Vec<LabeledSample>) -> Result<Self> {
        let dim = validate(&schema, &samples)?;
        Ok(VecStream {
            schema,
            dim,
            samples: samples.into_iter(),
        })
    }
}

impl SampleStream for VecStream {
    fn schema(&self) -> &AttributeSchema {
        &self.schema
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn next_sample(&mut self) -> Result<Option<LabeledSample>> {
        Ok(self.samples.next())
    }
}

/// Endless stream that replays an in-memory dataset in order. Feeding a
/// cycle of length `n` with block size `n` makes every block the full
/// dataset (full-batch power iterations).
#[derive(Debug, Clone)]
pub struct CyclingStream {
    schema: AttributeSchema,
    dim: usize,
    samples: Vec<LabeledSample>,
    cursor: usize,
}

impl CyclingStream {
    pub fn new(schema: AttributeSchema, samples: Vec<LabeledSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData {
                needed: 1,
                available: 0,
            });
        }
        let dim = validate(&schema, &samples)?;
        Ok(CyclingStream {
            schema,
            dim,
            samples,
            cursor: 0,
        })
    }

    pub fn period(&self) -> usize {
        self.samples.len()
    }
}

impl SampleStream for CyclingStream {
    fn schema(&self) -> &AttributeSchema {
        &self.schema
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn next_sample(&mut self) -> Result<Option<LabeledSample>> {
        let s = self.samples[self.cursor].clone();
        self.cursor = (self.cursor + 1) % self.samples.len();
        Ok(Some(s))
    }
}

fn validate(schema: &AttributeSchema, samples: &[LabeledSample]) -> Result<usize> {
    let dim = samples.first().map(|s| s.dim()).unwrap_or(0);
    for (i, s) in samples.iter().enumerate() {
        schema.check(&s.attributes)?;
        if s.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "sample {i} has dimension {}, expected {dim}",
                s.dim()
            )));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotFinite(format!("features of sample {i}")));
        }
    }
    Ok(dim)
}

/// Subtracts a fixed vector from every sample of the inner stream.
pub struct CenteredStream<S> {
    inner: S,
    mean: Vec<f64>,
}

impl<S: SampleStream> CenteredStream<S> {
    pub fn new(inner: S, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != inner.dim() {
            return Err(Error::DimensionMismatch(format!(
                "centering vector has {} entries for a stream of dimension {}",
                mean.len(),
                inner.dim()
            )));
        }
        Ok(CenteredStream { inner, mean })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

impl<S: SampleStream> SampleStream for CenteredStream<S> {
    fn schema(&self) -> &AttributeSchema {
        self.inner.schema()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn next_sample(&mut self) -> Result<Option<LabeledSample>> {
        Ok(self.inner.next_sample()?.map(|mut s| {
            s.features.iter_mut().zip(&self.mean).for_each(|(x, m)| *x -= m);
            s
        }))
    }
}

/// Drains a finite stream and returns its mean and length.
pub fn stream_mean<S: SampleStream + ?Sized>(stream: &mut S) -> Result<(Vec<f64>, u64)> {
    let d = stream.dim();
    let mut sum = vec![0.0; d];
    let mut n = 0u64;
    while let Some(s) = stream.next_sample()? {
        if s.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "sample {} has dimension {}, expected {d}",
                n + 1,
                s.dim()
            )));
        }
        sum.iter_mut().zip(&s.features).for_each(|(a, x)| *a += x);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, available: 0 });
    }
    sum.iter_mut().for_each(|v| *v /= n as f64);
    Ok((sum, n))
}

/// Subtracts the mean of `data` from every sample in place and returns it.
pub fn center_in_place(data: &mut [LabeledSample]) -> Result<Vec<f64>> {
    let d = data.first().map(|s| s.dim()).unwrap_or(0);
    let mut mean = vec![0.0; d];
    for s in data.iter() {
        if s.dim() != d {
            return Err(Error::DimensionMismatch("samples of differing dimension".into()));
        }
        mean.iter_mut().zip(&s.features).for_each(|(a, x)| *a += x);
    }
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, available: 0 });
    }
    mean.iter_mut().for_each(|v| *v /= data.len() as f64);
    for s in data.iter_mut() {
        s.features.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five() -> VecStream {
        let samples = (0..5)
            .map(|i| LabeledSample::binary(i % 2, vec![i as f64]))
            .collect();
        VecStream::new(AttributeSchema::binary(), samples).unwrap()
    }

    #[test]
    fn blocks_of_two() {
        let mut s = five();
        let (b1, e1) = take_block(&mut s, 2).unwrap();
        let (b2, e2) = take_block(&mut s, 2).unwrap();
        let (b3, e3) = take_block(&mut s, 2).unwrap();
        assert_eq!((b1.len(), e1), (2, false));
        assert_eq!((b2.len(), e2), (2, false));
        assert_eq!((b3.len(), e3), (1, true));
        let seen: Vec<f64> = b1.iter().chain(&b2).chain(&b3).map(|s| s.features[0]).collect();
        assert_eq!(seen, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn empty_stream() {
        let mut s = VecStream::new(AttributeSchema::binary(), vec![]).unwrap();
        let (b, exhausted) = take_block(&mut s, 3).unwrap();
        assert!(b.is_empty() && exhausted);
        assert!(take_block(&mut s, 0).is_err());
    }

    #[test]
    fn large_block_is_filled() {
        let samples = (0..32_000)
            .map(|i| LabeledSample::binary(i % 2, vec![0.0; 3]))
            .collect();
        let mut s = CyclingStream::new(AttributeSchema::binary(), samples).unwrap();
        let (b, exhausted) = take_block(&mut s, 32_000).unwrap();
        assert_eq!(b.len(), 32_000);
        assert!(!exhausted);
    }

    #[test]
    fn vec_stream_validates() {
        let bad = vec![
            LabeledSample::binary(0, vec![1.0, 2.0]),
            LabeledSample::binary(1, vec![1.0]),
        ];
        assert!(VecStream::new(AttributeSchema::binary(), bad).is_err());
        let out_of_range = vec![LabeledSample::binary(2, vec![1.0])];
        assert!(VecStream::new(AttributeSchema::binary(), out_of_range).is_err());
    }

    #[test]
    fn centering_two_passes() {
        let (mean, n) = stream_mean(&mut five()).unwrap();
        assert_eq!((mean, n), (vec![2.0], 5));
        let mut c = CenteredStream::new(five(), vec![2.0]).unwrap();
        let mut got = Vec::new();
        while let Some(s) = c.next_sample().unwrap() {
            got.push(s.features[0]);
        }
        assert_eq!(got, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(CenteredStream::new(five(), vec![0.0, 0.0]).is_err());

        let mut data: Vec<_> = (0..5).map(|i| LabeledSample::binary(i % 2, vec![i as f64, 1.0])).collect();
        assert_eq!(center_in_place(&mut data).unwrap(), vec![2.0, 1.0]);
        assert_eq!(data[4].features, vec![2.0, 0.0]);
    }
}
