//! Flat binary snapshot of an [`HnswIndex`].
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "UHNSW1"
//! m: u32, ef_construction: u32, seed: u64, p: f64
//! n: u32, dim: u32, dataset fingerprint: 16 ASCII hex bytes
//! max_level: u32, entry_point: u32
//! for layer in 0..=max_level:
//!     node_count: u32
//!     node_count × { id: u32, degree: u32, degree × neighbor: u32 }
//! ```
//!
//! Nodes within a layer are listed in ascending id order. The vectors
//! themselves are not stored; loading re-attaches the dataset and checks its
//! fingerprint.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use super::{HnswIndex, HnswParams, MAX_LEVEL_CAP};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::MetricParam;

const MAGIC: &[u8; 6] = b"UHNSW1";

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Snapshot(format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl HnswIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        out.extend_from_slice(MAGIC);
        u32le(&mut out, self.params.m);
        u32le(&mut out, self.params.ef_construction);
        out.extend_from_slice(&self.params.seed.to_le_bytes());
        out.extend_from_slice(&self.params.metric.p().to_le_bytes());
        u32le(&mut out, self.len());
        u32le(&mut out, self.data.dim());
        out.extend_from_slice(self.data.fingerprint().as_bytes());
        u32le(&mut out, self.max_level);
        u32le(&mut out, self.entry_point as usize);
        for layer in 0..=self.max_level {
            let nodes: Vec<usize> = (0..self.len())
                .filter(|&i| self.links[i].len() > layer)
                .collect();
            u32le(&mut out, nodes.len());
            for i in nodes {
                let adj = &self.links[i][layer];
                u32le(&mut out, i);
                u32le(&mut out, adj.len());
                for &nb in adj {
                    out.extend_from_slice(&nb.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], data: Arc<Dataset>) -> Result<HnswIndex> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let m = r.u32()? as usize;
        let ef_construction = r.u32()? as usize;
        let seed = r.u64()?;
        let metric = MetricParam::new(r.f64()?)?;
        let params = HnswParams {
            m,
            ef_construction,
            seed,
            metric,
        };
        params.validate()?;

        let n = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let fingerprint = r.take(16)?;
        if n != data.len() || dim != data.dim() {
            return Err(Error::Snapshot(format!(
                "snapshot is for {n}x{dim} data, got {}x{}",
                data.len(),
                data.dim()
            )));
        }
        if fingerprint != data.fingerprint().as_bytes() {
            return Err(Error::Snapshot("dataset fingerprint mismatch".into()));
        }
        let max_level = r.u32()? as usize;
        let entry_point = r.u32()?;
        if max_level > MAX_LEVEL_CAP || entry_point as usize >= n {
            return Err(Error::Snapshot("invalid header".into()));
        }

        let mut links: Vec<Vec<Vec<u32>>> = vec![Vec::new(); n];
        for layer in 0..=max_level {
            let count = r.u32()? as usize;
            let mut prev = None;
            for _ in 0..count {
                let id = r.u32()? as usize;
                if id >= n || prev.is_some_and(|p| p >= id) {
                    return Err(Error::Snapshot(format!(
                        "bad node id {id} on layer {layer}"
                    )));
                }
                prev = Some(id);
                if links[id].len() != layer {
                    return Err(Error::Snapshot(format!(
                        "node {id} on layer {layer} is missing from a lower layer"
                    )));
                }
                let degree = r.u32()? as usize;
                let adj = (0..degree).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                links[id].push(adj);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Snapshot("trailing bytes".into()));
        }
        if let Some(id) = links.iter().position(Vec::is_empty) {
            return Err(Error::Snapshot(format!("node {id} missing from layer 0")));
        }

        let index = HnswIndex {
            params,
            data,
            links,
            entry_point,
            max_level,
        };
        index.check_invariants()?;
        Ok(index)
    }

    /// Writes the snapshot via a temporary file and rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, data: Arc<Dataset>) -> Result<HnswIndex> {
        HnswIndex::from_bytes(&fs::read(path)?, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, Distribution};

    fn index() -> HnswIndex {
        let ds = Arc::new(gen_synthetic(200, 6, Distribution::Gaussian, 3).unwrap());
        HnswIndex::build(
            ds,
            HnswParams::new(MetricParam::new(0.5).unwrap())
                .with_m(6)
                .with_ef_construction(30)
                .with_seed(9),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let idx = index();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.uhnsw");
        idx.save(&path).unwrap();
        let back = HnswIndex::load(&path, Arc::clone(idx.dataset())).unwrap();
        assert_eq!(back.to_bytes(), idx.to_bytes());
        assert_eq!(back.params(), idx.params());
        let q = idx.dataset().row(17).to_vec();
        assert_eq!(
            back.knn_search(&q, 10, 20).unwrap(),
            idx.knn_search(&q, 10, 20).unwrap()
        );
        assert!(!path.with_extension("tmp").exists());
    }

    #[test]
    fn starts_with_magic() {
        assert_eq!(&index().to_bytes()[..6], b"UHNSW1");
    }

    #[test]
    fn rejects_wrong_dataset_and_corruption() {
        let idx = index();
        let bytes = idx.to_bytes();
        let other = Arc::new(gen_synthetic(200, 6, Distribution::Gaussian, 4).unwrap());
        assert!(HnswIndex::from_bytes(&bytes, other).is_err());

        let data = Arc::clone(idx.dataset());
        assert!(HnswIndex::from_bytes(&bytes[..bytes.len() - 2], data.clone()).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(HnswIndex::from_bytes(&bad, data.clone()).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(HnswIndex::from_bytes(&extra, data.clone()).is_err());

        // Point the first layer-0 neighbor at the node itself.
        let header = 6 + 4 + 4 + 8 + 8 + 4 + 4 + 16 + 4 + 4;
        let mut looped = bytes.clone();
        let first_id = &looped[header + 4..header + 8].to_vec();
        looped[header + 12..header + 16].copy_from_slice(first_id);
        assert!(HnswIndex::from_bytes(&looped, data).is_err());
    }
}
