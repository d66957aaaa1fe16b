//! Resolving dataset arguments into in-memory corpora.
//!
//! A dataset argument is one of
//!
//! * a path to an `.fvecs` or `.bvecs` file,
//! * `gaussian:N:D:SEED` or `uniform01:N:D:SEED` for synthetic data,
//! * `desk`, the default desk-scale corpus (see [`desk_corpus`]).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use uhnsw::{gen_synthetic, vecs, Dataset, Distribution};

pub const DESK_N: usize = 10_000;
pub const DESK_DIM: usize = 128;
pub const DESK_QUERIES: usize = 100;
const DESK_BASE_SEED: u64 = 42;
const DESK_QUERY_SEED: u64 = 4242;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Base,
    Queries,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    File(PathBuf),
    Synthetic {
        dist: Distribution,
        n: usize,
        dim: usize,
        seed: u64,
    },
    Desk,
}

impl std::str::FromStr for DatasetSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "desk" {
            return Ok(DatasetSpec::Desk);
        }
        let parts: Vec<&str> = s.split(':').collect();
        if let [kind @ ("gaussian" | "uniform01"), n, dim, seed] = parts[..] {
            return Ok(DatasetSpec::Synthetic {
                dist: kind.parse()?,
                n: n.parse().with_context(|| format!("bad N in {s:?}"))?,
                dim: dim.parse().with_context(|| format!("bad D in {s:?}"))?,
                seed: seed.parse().with_context(|| format!("bad SEED in {s:?}"))?,
            });
        }
        Ok(DatasetSpec::File(PathBuf::from(s)))
    }
}

impl DatasetSpec {
    /// Loads the corpus; `sample` optionally subsamples `(m, seed)` rows.
    pub fn load(&self, role: Role, sample: Option<(usize, u64)>) -> Result<Dataset> {
        let ds = match self {
            DatasetSpec::File(path) => {
                vecs::load_vectors(path).with_context(|| format!("loading {}", path.display()))?
            }
            DatasetSpec::Synthetic { dist, n, dim, seed } => gen_synthetic(*n, *dim, *dist, *seed)?,
            DatasetSpec::Desk => {
                let (base, queries) = desk_corpus(Path::new("."))?;
                match role {
                    Role::Base => base,
                    Role::Queries => queries,
                }
            }
        };
        match sample {
            Some((m, seed)) => Ok(ds.subsample(m, seed)?),
            None => Ok(ds),
        }
    }
}

/// The desk-scale corpus: a 10^4-point SIFT subsample with 100 sampled
/// queries when `data/sift/sift_{base,query}.fvecs` exist under `root`,
/// otherwise gaussian 10^4 × 128 base points and 100 gaussian queries.
pub fn desk_corpus(root: &Path) -> Result<(Dataset, Dataset)> {
    let dir = root.join("data").join("sift");
    let (base_path, query_path) = (dir.join("sift_base.fvecs"), dir.join("sift_query.fvecs"));
    if base_path.exists() && query_path.exists() {
        let base = vecs::load_fvecs(&base_path)?.subsample(DESK_N, DESK_BASE_SEED)?;
        let queries = vecs::load_fvecs(&query_path)?.subsample(DESK_QUERIES, DESK_QUERY_SEED)?;
        if base.dim() != queries.dim() {
            bail!("SIFT base and query dimensions differ");
        }
        return Ok((base.with_name("sift-10k"), queries.with_name("sift-q100")));
    }
    let base = gen_synthetic(DESK_N, DESK_DIM, Distribution::Gaussian, DESK_BASE_SEED)?;
    let queries = gen_synthetic(
        DESK_QUERIES,
        DESK_DIM,
        Distribution::Gaussian,
        DESK_QUERY_SEED,
    )?;
    Ok((
        base.with_name("gaussian-10k"),
        queries.with_name("gaussian-q100"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("desk".parse::<DatasetSpec>().unwrap(), DatasetSpec::Desk);
        assert_eq!(
            "gaussian:2000:16:7".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::Synthetic {
                dist: Distribution::Gaussian,
                n: 2000,
                dim: 16,
                seed: 7
            }
        );
        assert!("uniform01:x:16:7".parse::<DatasetSpec>().is_err());
        assert_eq!(
            "data/a.fvecs".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::File("data/a.fvecs".into())
        );
    }

    #[test]
    fn synthetic_with_subsample() {
        let spec: DatasetSpec = "uniform01:100:4:1".parse().unwrap();
        let ds = spec.load(Role::Base, Some((10, 3))).unwrap();
        assert_eq!((ds.len(), ds.dim()), (10, 4));
        assert!(spec.load(Role::Base, Some((101, 3))).is_err());
    }

    #[test]
    fn desk_fallback_is_gaussian() {
        let dir = tempfile::tempdir().unwrap();
        let (base, queries) = desk_corpus(dir.path()).unwrap();
        assert_eq!((base.len(), base.dim()), (DESK_N, DESK_DIM));
        assert_eq!(queries.len(), DESK_QUERIES);
        assert_eq!(base.name(), "gaussian-10k");
    }
}
