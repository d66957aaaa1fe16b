//! Exact k-NN ground truth and recall.
//!
//! Distances are accumulated in double precision; ties at equal distance are
//! broken by ascending id.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hnsw::ScoredId;
use crate::metrics::MetricParam;

const MAGIC: &[u8; 5] = b"UHGT1";

/// `Σ|x_i − y_i|^p` in double precision.
pub fn pth_power_f64(x: &[f32], y: &[f32], p: f64) -> f64 {
    if p == 1.0 {
        x.iter()
            .zip(y)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum()
    } else if p == 2.0 {
        x.iter()
            .zip(y)
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum()
    } else {
        x.iter()
            .zip(y)
            .map(|(a, b)| (*a as f64 - *b as f64).abs().powf(p))
            .sum()
    }
}

/// Indices of the `k` smallest `keys`, ordered by (key, index).
pub(crate) fn top_k_by(keys: &[f64], k: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..keys.len() as u32).collect();
    let cmp = |a: &u32, b: &u32| {
        keys[*a as usize]
            .total_cmp(&keys[*b as usize])
            .then(a.cmp(b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    order
}

pub fn brute_force_knn(
    data: &Dataset,
    q: &[f32],
    p: MetricParam,
    k: usize,
) -> Result<Vec<ScoredId>> {
    if q.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: q.len(),
        });
    }
    if k > data.len() {
        return Err(Error::TooFew {
            requested: k,
            available: data.len(),
        });
    }
    let keys: Vec<f64> = data.rows().map(|r| pth_power_f64(q, r, p.p())).collect();
    Ok(top_k_by(&keys, k)
        .into_iter()
        .map(|i| ScoredId::new(i, keys[i as usize].powf(1.0 / p.p()) as f32))
        .collect())
}

/// `|truth ∩ result| / K`.
pub fn recall(result: &[u32], truth: &[u32]) -> Result<f64> {
    if result.len() != truth.len() || truth.is_empty() {
        return Err(Error::param(format!(
            "recall needs equal non-empty sets, got {} results for {} truths",
            result.len(),
            truth.len()
        )));
    }
    let truth: HashSet<u32> = truth.iter().copied().collect();
    let hits = result
        .iter()
        .collect::<HashSet<_>>()
        .into_iter()
        .filter(|id| truth.contains(id))
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Exact top-K ids per query for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    p: f64,
    k: usize,
    neighbors: Vec<Vec<u32>>,
}

impl GroundTruth {
    pub fn compute(data: &Dataset, queries: &Dataset, p: MetricParam, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("K must be positive"));
        }
        if queries.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: queries.dim(),
            });
        }
        if k > data.len() {
            return Err(Error::TooFew {
                requested: k,
                available: data.len(),
            });
        }
        let neighbors = (0..queries.len())
            .into_par_iter()
            .map(|i| {
                brute_force_knn(data, queries.row(i), p, k)
                    .map(|r| r.into_iter().map(|s| s.id).collect())
            })
            .collect::<Result<Vec<Vec<u32>>>>()?;
        Ok(GroundTruth {
            p: p.p(),
            k,
            neighbors,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, query: usize) -> &[u32] {
        &self.neighbors[query]
    }

    /// Mean recall of per-query result id lists against this truth.
    pub fn mean_recall<'a>(&self, results: impl IntoIterator<Item = &'a [u32]>) -> Result<f64> {
        let mut sum = 0.0;
        let mut count = 0;
        for (i, r) in results.into_iter().enumerate() {
            sum += recall(r, self.neighbors(i))?;
            count += 1;
        }
        if count == 0 {
            return Err(Error::param("no results"));
        }
        Ok(sum / count as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + 4 * self.len() * self.k);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&self.p.to_le_bytes());
        for ids in &self.neighbors {
            for id in ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Snapshot(format!("ground truth: {m}"));
        if bytes.len() < 21 || &bytes[..5] != MAGIC {
            return Err(bad("bad header"));
        }
        let nq = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let k = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let p = f64::from_le_bytes(bytes[13..21].try_into().unwrap());
        MetricParam::new(p)?;
        let body = &bytes[21..];
        if k == 0 || body.len() != nq * k * 4 {
            return Err(bad("body length does not match header"));
        }
        let ids: Vec<u32> = body
            .chunks_exact(4)
            .map(|w| u32::from_le_bytes(w.try_into().unwrap()))
            .collect();
        Ok(GroundTruth {
            p,
            k,
            neighbors: ids.chunks_exact(k).map(<[u32]>::to_vec).collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        GroundTruth::from_bytes(&fs::read(path)?)
    }

    /// Cache file name keyed by both corpora, p and K.
    pub fn cache_path(
        dir: impl AsRef<Path>,
        data: &Dataset,
        queries: &Dataset,
        p: MetricParam,
        k: usize,
    ) -> PathBuf {
        dir.as_ref().join(format!(
            "gt-{}-{}-p{}-k{k}.uhgt",
            data.fingerprint(),
            queries.fingerprint(),
            p.p()
        ))
    }

    /// Loads a cached file if present and consistent, else computes and
    /// stores it. The flag reports a cache hit.
    pub fn cached(
        dir: impl AsRef<Path>,
        data: &Dataset,
        queries: &Dataset,
        p: MetricParam,
        k: usize,
    ) -> Result<(Self, bool)> {
        let path = Self::cache_path(&dir, data, queries, p, k);
        if let Ok(gt) = Self::load(&path) {
            if gt.k == k && gt.p == p.p() && gt.len() == queries.len() {
                return Ok((gt, true));
            }
        }
        let gt = Self::compute(data, queries, p, k)?;
        fs::create_dir_all(dir)?;
        gt.save(&path)?;
        Ok((gt, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, Distribution};

    fn mp(p: f64) -> MetricParam {
        MetricParam::new(p).unwrap()
    }

    #[test]
    fn one_dimensional_example() {
        let ds = Dataset::new("line", 1, vec![0.0, 1.0, 3.0]).unwrap();
        let r = brute_force_knn(&ds, &[2.5], mp(1.0), 1).unwrap();
        assert_eq!(r, vec![ScoredId::new(2, 0.5)]);
        let r = brute_force_knn(&ds, &[1.0], mp(0.7), 1).unwrap();
        assert_eq!(r, vec![ScoredId::new(1, 0.0)]);
        assert!(matches!(
            brute_force_knn(&ds, &[0.0], mp(1.0), 4),
            Err(Error::TooFew { .. })
        ));
    }

    #[test]
    fn ordering_depends_on_p() {
        let ds =
            Dataset::from_rows("tri", &[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.6]]).unwrap();
        let l2 = brute_force_knn(&ds, &[0.0, 0.0], mp(2.0), 3).unwrap();
        assert_eq!(l2[0].id, 2);
        assert!((l2[0].dist - 0.848_528).abs() < 1e-5);
        let half = brute_force_knn(&ds, &[0.0, 0.0], mp(0.5), 3).unwrap();
        // (1,0) and (0,1) tie at distance 1; the lower id wins.
        assert_eq!(half.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(half[0].dist, 1.0);
        assert!((half[2].dist - 4.0 * 0.6).abs() < 1e-5);
    }

    #[test]
    fn squared_surrogate_gives_identical_order() {
        let ds = gen_synthetic(300, 5, Distribution::Gaussian, 1).unwrap();
        let q = [0.1f32, -0.2, 0.3, 0.0, 0.5];
        let exact: Vec<u32> = brute_force_knn(&ds, &q, mp(2.0), 300)
            .unwrap()
            .iter()
            .map(|s| s.id)
            .collect();
        let sq: Vec<f64> = ds.rows().map(|r| pth_power_f64(&q, r, 2.0)).collect();
        assert_eq!(exact, top_k_by(&sq, 300));
    }

    #[test]
    fn recall_values() {
        let truth: Vec<u32> = (0..50).collect();
        assert_eq!(recall(&truth, &truth).unwrap(), 1.0);
        let disjoint: Vec<u32> = (50..100).collect();
        assert_eq!(recall(&disjoint, &truth).unwrap(), 0.0);
        let half: Vec<u32> = (25..75).collect();
        assert_eq!(recall(&half, &truth).unwrap(), 0.5);
        assert!(recall(&truth[..10], &truth).is_err());
        assert!(recall(&[], &[]).is_err());
    }

    #[test]
    fn ground_truth_cache_round_trip() {
        let data = gen_synthetic(400, 4, Distribution::Uniform01, 2).unwrap();
        let queries = gen_synthetic(7, 4, Distribution::Uniform01, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (gt, hit) = GroundTruth::cached(dir.path(), &data, &queries, mp(0.5), 20).unwrap();
        assert!(!hit);
        let (again, hit) = GroundTruth::cached(dir.path(), &data, &queries, mp(0.5), 20).unwrap();
        assert!(hit);
        assert_eq!(gt, again);
        assert_eq!((gt.len(), gt.k(), gt.p()), (7, 20, 0.5));
        for i in 0..7 {
            let ids = gt.neighbors(i);
            assert_eq!(ids.iter().collect::<HashSet<_>>().len(), 20);
            let direct: Vec<u32> = brute_force_knn(&data, queries.row(i), mp(0.5), 20)
                .unwrap()
                .iter()
                .map(|s| s.id)
                .collect();
            assert_eq!(ids, &direct[..]);
        }
        let bytes = gt.to_bytes();
        assert_eq!(&bytes[..5], b"UHGT1");
        assert_eq!(bytes.len(), 21 + 7 * 20 * 4);
        assert!(GroundTruth::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(GroundTruth::compute(&data, &queries, mp(1.0), 401).is_err());
    }
}
