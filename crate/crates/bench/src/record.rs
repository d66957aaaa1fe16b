//! CSV rows emitted by the harness.
//!
//! Every table starts with a `schema` column carrying [`SCHEMA`]; files are
//! written to a temporary sibling and renamed into place so a failed run
//! never leaves a partial CSV behind.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA: &str = "uhnsw-bench-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantTag {
    Uhnsw,
    UhnswE,
    HnswBaseline,
    Idealized,
}

impl From<uhnsw::Variant> for VariantTag {
    fn from(v: uhnsw::Variant) -> Self {
        match v {
            uhnsw::Variant::Default => VariantTag::Uhnsw,
            uhnsw::Variant::Extended => VariantTag::UhnswE,
        }
    }
}

/// One (configuration, p) cell; `p` is `"all"` on aggregate rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub schema: &'static str,
    pub variant: VariantTag,
    pub dataset: String,
    pub p: String,
    pub k: usize,
    pub t: usize,
    pub tau: f64,
    pub kappa: usize,
    pub ef_search: usize,
    pub queries: usize,
    pub recall: f64,
    pub query_ms: f64,
    pub n_base: f64,
    pub n_lp: f64,
    pub qps: f64,
}

impl BenchRecord {
    /// Columns that must reproduce exactly under fixed seeds.
    pub fn deterministic_key(&self) -> (String, usize, usize, u64, u64, u64, u64) {
        (
            self.p.clone(),
            self.k,
            self.t,
            self.tau.to_bits(),
            self.recall.to_bits(),
            self.n_base.to_bits(),
            self.n_lp.to_bits(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRecord {
    pub schema: &'static str,
    pub dataset: String,
    pub p: f64,
    pub k: usize,
    pub t: usize,
    pub tau: f64,
    pub queries: usize,
    pub recall_initial_filter: f64,
    pub recall_rerank: f64,
    pub generation_ms: f64,
    pub verification_ms: f64,
    pub verification_no_early_stop_ms: f64,
    pub n_lp: f64,
    pub n_lp_no_early_stop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistRecord {
    pub schema: &'static str,
    pub d: usize,
    pub p: f64,
    pub tier: String,
    pub reps: usize,
    pub mean_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildRecord {
    pub schema: &'static str,
    pub dataset: String,
    pub n: usize,
    pub d: usize,
    pub metric_p: f64,
    pub m: usize,
    pub ef_construction: usize,
    pub seed: u64,
    pub build_s: f64,
}

/// Serializes `rows` to `path` atomically.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = csv::Writer::from_writer(tmp.as_file());
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_schema_column_and_no_temp_leftovers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let row = DistRecord {
            schema: SCHEMA,
            d: 4,
            p: 0.5,
            tier: "sqrt-fast".into(),
            reps: 10,
            mean_ns: 1.5,
        };
        write_csv(&path, &[row]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "schema,d,p,tier,reps,mean_ns");
        assert_eq!(
            lines.next().unwrap(),
            "uhnsw-bench-v1,4,0.5,sqrt-fast,10,1.5"
        );
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn variant_tags_are_kebab_case() {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(vec![]);
        w.serialize((
            VariantTag::UhnswE,
            VariantTag::HnswBaseline,
            VariantTag::Idealized,
        ))
        .unwrap();
        let s = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(s.trim(), "uhnsw-e,hnsw-baseline,idealized");
    }
}
