//! In-memory vector corpora.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::check_finite;

/// A dense, row-major `n × d` matrix of finite single-precision values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    data: Vec<f32>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::param(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        for (i, row) in data.chunks_exact(dim).enumerate() {
            check_finite(row, i)?;
        }
        Ok(Dataset {
            name: name.into(),
            dim,
            data,
        })
    }

    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyDataset)?.len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Dataset::new(name, dim, data)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false; construction rejects empty datasets.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Hex SHA-256 prefix over the dimension and raw little-endian values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        h.finalize()[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// `m` rows drawn uniformly without replacement, in sampled order.
    pub fn subsample(&self, m: usize, seed: u64) -> Result<Dataset> {
        let n = self.len();
        if m > n {
            return Err(Error::TooFew {
                requested: m,
                available: n,
            });
        }
        if m == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(m * self.dim);
        for i in index::sample(&mut rng, n, m) {
            data.extend_from_slice(self.row(i));
        }
        Ok(Dataset {
            name: format!("{}-sub{m}", self.name),
            dim: self.dim,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Uniform01,
    Gaussian,
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform01" | "uniform" => Ok(Distribution::Uniform01),
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            other => Err(Error::param(format!("unknown distribution {other:?}"))),
        }
    }
}

impl Distribution {
    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::Uniform01 => "uniform01",
            Distribution::Gaussian => "gaussian",
        }
    }
}

pub fn gen_synthetic(n: usize, d: usize, dist: Distribution, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::param("n and d must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = match dist {
        Distribution::Uniform01 => (0..n * d).map(|_| rng.gen::<f32>()).collect(),
        Distribution::Gaussian => (0..n * d).map(|_| rng.sample(StandardNormal)).collect(),
    };
    Dataset::new(format!("{}-{n}x{d}-s{seed}", dist.as_str()), d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(
            Dataset::new("x", 2, vec![]),
            Err(Error::EmptyDataset)
        ));
        assert!(Dataset::new("x", 0, vec![1.0]).is_err());
        assert!(Dataset::new("x", 2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(matches!(
            Dataset::new("x", 2, vec![1.0, 2.0, 3.0, f32::NAN]),
            Err(Error::NonFinite { row: 1, col: 1 })
        ));
        assert!(Dataset::from_rows("x", &[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn synthetic_is_reproducible() {
        let a = gen_synthetic(2000, 16, Distribution::Uniform01, 7).unwrap();
        let b = gen_synthetic(2000, 16, Distribution::Uniform01, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert!(a.as_slice().iter().all(|v| (0.0..1.0).contains(v)));
        let c = gen_synthetic(2000, 16, Distribution::Uniform01, 8).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn single_scalar() {
        let s = gen_synthetic(1, 1, Distribution::Gaussian, 0).unwrap();
        assert_eq!((s.len(), s.dim()), (1, 1));
    }

    #[test]
    fn gaussian_mean_near_zero() {
        let (n, d) = (4000, 32);
        let g = gen_synthetic(n, d, Distribution::Gaussian, 1).unwrap();
        let mean = g.as_slice().iter().map(|&v| v as f64).sum::<f64>() / (n * d) as f64;
        let bound = 5.0 / ((n * d) as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} bound {bound}");
    }

    #[test]
    fn subsample_contract() {
        let ds = gen_synthetic(50, 3, Distribution::Uniform01, 2).unwrap();
        let full = ds.subsample(50, 9).unwrap();
        let key = |r: &[f32]| r.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        let a: HashSet<_> = ds.rows().map(key).collect();
        let b: HashSet<_> = full.rows().map(key).collect();
        assert_eq!(a, b);

        let one = ds.subsample(1, 9).unwrap();
        assert_eq!(one.len(), 1);
        assert!(a.contains(&key(one.row(0))));

        assert_eq!(ds.subsample(10, 4).unwrap(), ds.subsample(10, 4).unwrap());
        assert!(matches!(ds.subsample(51, 0), Err(Error::TooFew { .. })));
    }
}
