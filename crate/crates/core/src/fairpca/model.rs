use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairpca::config::{FnpmConfig, UnfairRank};
use crate::fairpca::unfair::UnfairSubspace;
use crate::linalg::{DenseMatrix, OrthonormalBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Fnpm,
    Offline,
    /// Unconstrained top-`k` eigenvectors; the unfair basis is empty.
    Vanilla,
}

/// Parameters of an exact offline solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineConfig {
    pub k: usize,
    pub m: UnfairRank,
    pub g_threshold: f64,
    /// Whether `Σ` was the centered covariance rather than the raw second
    /// moment.
    #[serde(default)]
    pub centered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Streaming(FnpmConfig),
    Offline(OfflineConfig),
}

/// A fitted loading matrix together with the subspace it avoids.
#[derive(Debug, Clone, PartialEq)]
pub struct FairPcaModel {
    /// `V`, `d × k`.
    pub loading: OrthonormalBasis,
    pub unfair: UnfairSubspace,
    pub config: ModelConfig,
    pub samples_consumed: u64,
    pub method: FitMethod,
}

/// On-disk layout; matrices are row-major flat arrays.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    k: usize,
    m_prime: usize,
    #[serde(rename = "V")]
    v: Vec<f64>,
    #[serde(rename = "U")]
    u: Vec<f64>,
    #[serde(rename = "W")]
    w: Vec<f64>,
    f_hat: Vec<f64>,
    residual_gap_norm: f64,
    mean_direction_included: bool,
    config: ModelConfig,
    samples_consumed: u64,
    method: FitMethod,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cell_f_hat: Vec<Vec<f64>>,
}

impl FairPcaModel {
    pub fn dim(&self) -> usize {
        self.loading.ambient_dim()
    }

    pub fn k(&self) -> usize {
        self.loading.rank()
    }

    /// `xᵀ V`
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.loading.columns().t_mul_vec(x)
    }

    /// `X V` for an `n × d` row matrix.
    pub fn transform_rows(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        x.matmul(self.loading.columns())
    }

    /// `V Vᵀ x`
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.loading.columns().mul_vec(&self.transform(x)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            dim: self.dim(),
            k: self.k(),
            m_prime: self.unfair.rank(),
            v: self.loading.columns().as_slice().to_vec(),
            u: self.unfair.basis.columns().as_slice().to_vec(),
            w: self.unfair.second_moment_basis.columns().as_slice().to_vec(),
            f_hat: self.unfair.mean_gap.clone(),
            residual_gap_norm: self.unfair.residual_gap_norm,
            mean_direction_included: self.unfair.mean_direction_included,
            config: self.config.clone(),
            samples_consumed: self.samples_consumed,
            method: self.method,
            cell_f_hat: self.unfair.cell_mean_gaps.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        let d = f.dim;
        if d == 0 {
            return Err(Error::DimensionMismatch("model dimension is 0".into()));
        }
        let basis = |name: &str, data: Vec<f64>, cols: Option<usize>| -> Result<OrthonormalBasis> {
            if !data.len().is_multiple_of(d) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has {} entries, not a multiple of dim {d}",
                    data.len()
                )));
            }
            let c = data.len() / d;
            if let Some(want) = cols {
                if c != want {
                    return Err(Error::DimensionMismatch(format!("{name} has {c} columns, expected {want}")));
                }
            }
            let m = if c == 0 {
                DenseMatrix::zeros(d, 0)
            } else {
                DenseMatrix::from_row_major(d, c, data)?
            };
            OrthonormalBasis::try_new(m)
        };
        if f.f_hat.len() != d {
            return Err(Error::DimensionMismatch(format!("f_hat has {} entries, dim is {d}", f.f_hat.len())));
        }
        let unfair = UnfairSubspace {
            basis: basis("U", f.u, Some(f.m_prime))?,
            second_moment_basis: basis("W", f.w, None)?,
            mean_gap: f.f_hat,
            residual_gap_norm: f.residual_gap_norm,
            mean_direction_included: f.mean_direction_included,
            cell_mean_gaps: f.cell_f_hat,
            samples_consumed: 0,
        };
        Ok(FairPcaModel {
            loading: basis("V", f.v, Some(f.k))?,
            unfair,
            config: f.config,
            samples_consumed: f.samples_consumed,
            method: f.method,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(self.to_json()?.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(file), &mut text).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FairPcaModel {
        let unfair = UnfairSubspace::from_parts(
            OrthonormalBasis::standard(3, &[2]).unwrap(),
            vec![0.1, 0.0, 1.0 / 3.0],
            1e-8,
        )
        .unwrap();
        FairPcaModel {
            loading: OrthonormalBasis::standard(3, &[0, 1]).unwrap(),
            unfair,
            config: ModelConfig::Streaming(FnpmConfig::new(2, 1, 10, 20, 3, 4).with_seed(99)),
            samples_consumed: 110,
            method: FitMethod::Fnpm,
        }
    }

    #[test]
    fn transform_examples() {
        let m = model();
        assert_eq!(m.transform(&[5.0, 7.0, 9.0]).unwrap(), vec![5.0, 7.0]);
        assert_eq!(m.transform(&[0.0; 3]).unwrap(), vec![0.0, 0.0]);
        let x = [1.0, -2.0, 3.0];
        let r = m.reconstruct(&x).unwrap();
        assert!(crate::linalg::norm2(&r) <= crate::linalg::norm2(&x));
        assert!(m.transform(&[1.0]).is_err());
        let rows = DenseMatrix::from_rows(&[[5.0, 7.0, 9.0], [1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(m.transform_rows(&rows).unwrap().as_slice(), &[5.0, 7.0, 1.0, 2.0]);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = model();
        let text = m.to_json().unwrap();
        for key in ["\"dim\"", "\"k\"", "\"m_prime\"", "\"V\"", "\"U\"", "\"f_hat\"", "\"residual_gap_norm\"",
            "\"mean_direction_included\"", "\"config\"", "\"samples_consumed\"", "\"method\": \"fnpm\""]
        {
            assert!(text.contains(key), "missing {key}");
        }
        let back = FairPcaModel::from_json(&text).unwrap();
        assert_eq!(back.unfair.mean_gap, m.unfair.mean_gap);
        assert_eq!(back.loading, m.loading);
        assert_eq!(back.config, m.config);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn offline_config_round_trip() {
        let mut m = model();
        m.method = FitMethod::Offline;
        m.config = ModelConfig::Offline(OfflineConfig {
            k: 2,
            m: UnfairRank::Single(1),
            g_threshold: 1e-8,
            centered: false,
        });
        let back = FairPcaModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.method, FitMethod::Offline);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let text = model().to_json().unwrap().replace("\"k\": 2", "\"k\": 3");
        assert!(matches!(FairPcaModel::from_json(&text), Err(Error::DimensionMismatch(_))));
        assert!(matches!(FairPcaModel::from_json("{"), Err(Error::Json(_))));
    }
}
