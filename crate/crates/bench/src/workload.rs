//! Running query workloads and aggregating them into [`BenchRecord`]s.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use uhnsw::{oracle, Dataset, GroundTruth, MetricParam};

use crate::record::{BenchRecord, VariantTag, SCHEMA};

/// How each query's p is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum PSource {
    Fixed(f64),
    /// Drawn uniformly per query from the listed values.
    Uniform(Vec<f64>),
}

impl PSource {
    pub fn assign(&self, n_queries: usize, seed: u64) -> Vec<f64> {
        match self {
            PSource::Fixed(p) => vec![*p; n_queries],
            PSource::Uniform(set) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n_queries)
                    .map(|_| *set.choose(&mut rng).expect("non-empty p set"))
                    .collect()
            }
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = match self {
            PSource::Fixed(p) => vec![*p],
            PSource::Uniform(set) => set.clone(),
        };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

/// `{lo, lo + 0.1, …, hi}` expressed in tenths so that 1.0 and 2.0 come out
/// exact.
pub fn p_grid(lo_tenths: u32, hi_tenths: u32) -> Vec<f64> {
    (lo_tenths..=hi_tenths).map(|i| i as f64 / 10.0).collect()
}

/// Ground truth per p for one (base, queries, K).
#[derive(Debug, Default)]
pub struct Truths {
    by_p: BTreeMap<u64, GroundTruth>,
}

impl Truths {
    pub fn insert(&mut self, gt: GroundTruth) {
        self.by_p.insert(gt.p().to_bits(), gt);
    }

    pub fn get(&self, p: f64) -> Result<&GroundTruth> {
        self.by_p
            .get(&p.to_bits())
            .ok_or_else(|| anyhow!("missing ground truth for p = {p}"))
    }

    /// Loads existing cache files; a missing file is an error naming its p.
    pub fn load(
        dir: &Path,
        base: &Dataset,
        queries: &Dataset,
        ps: &[f64],
        k: usize,
    ) -> Result<Self> {
        let mut t = Truths::default();
        for &p in ps {
            let path = GroundTruth::cache_path(dir, base, queries, MetricParam::new(p)?, k);
            if !path.exists() {
                bail!(
                    "missing ground truth for p = {p} (expected {}; run `uhnsw-bench gt`)",
                    path.display()
                );
            }
            let gt = GroundTruth::load(&path)?;
            if gt.k() != k || gt.len() != queries.len() {
                bail!("ground truth for p = {p} does not match K = {k} and the query set");
            }
            t.insert(gt);
        }
        Ok(t)
    }

    /// Loads or computes-and-caches truth for every p.
    pub fn cached(
        dir: &Path,
        base: &Dataset,
        queries: &Dataset,
        ps: &[f64],
        k: usize,
    ) -> Result<Self> {
        let mut t = Truths::default();
        for &p in ps {
            let (gt, _) = GroundTruth::cached(dir, base, queries, MetricParam::new(p)?, k)?;
            t.insert(gt);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOutcome {
    pub p: f64,
    pub recall: f64,
    pub time_ms: f64,
    pub n_base: u64,
    pub n_lp: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcomes: Vec<QueryOutcome>,
    pub wall_s: f64,
}

/// Ids plus (N_b, N_p) for one query.
pub type Answer = (Vec<u32>, u64, u64);

/// Runs every query once untimed, then once timed. Results are in query
/// order regardless of `serial`.
pub fn run_queries<F>(
    queries: &Dataset,
    ps: &[f64],
    truths: &Truths,
    k: usize,
    serial: bool,
    answer: F,
) -> Result<RunResult>
where
    F: Fn(&[f32], MetricParam) -> Result<Answer> + Sync,
{
    if ps.len() != queries.len() {
        bail!("{} p values for {} queries", ps.len(), queries.len());
    }
    let metrics = ps
        .iter()
        .map(|&p| MetricParam::new(p))
        .collect::<uhnsw::Result<Vec<_>>>()?;
    for &p in ps {
        truths.get(p)?;
    }

    let one = |i: usize| -> Result<QueryOutcome> {
        let start = Instant::now();
        let (ids, n_base, n_lp) = answer(queries.row(i), metrics[i])?;
        let time_ms = start.elapsed().as_secs_f64() * 1e3;
        let truth = truths.get(ps[i])?.neighbors(i);
        if ids.len() != k {
            bail!("query {i} returned {} ids, expected {k}", ids.len());
        }
        Ok(QueryOutcome {
            p: ps[i],
            recall: oracle::recall(&ids, truth)?,
            time_ms,
            n_base,
            n_lp,
        })
    };
    let run_all = || -> Result<Vec<QueryOutcome>> {
        if serial {
            (0..queries.len()).map(one).collect()
        } else {
            (0..queries.len()).into_par_iter().map(one).collect()
        }
    };

    run_all()?;
    let start = Instant::now();
    let outcomes = run_all()?;
    Ok(RunResult {
        outcomes,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct RecordMeta {
    pub variant: VariantTag,
    pub dataset: String,
    pub k: usize,
    pub t: usize,
    pub tau: f64,
    pub kappa: usize,
    pub ef_search: usize,
}

impl RecordMeta {
    fn record(&self, p: String, outs: &[&QueryOutcome], qps: f64) -> BenchRecord {
        let n = outs.len() as f64;
        let mean = |f: &dyn Fn(&QueryOutcome) -> f64| outs.iter().map(|o| f(o)).sum::<f64>() / n;
        BenchRecord {
            schema: SCHEMA,
            variant: self.variant,
            dataset: self.dataset.clone(),
            p,
            k: self.k,
            t: self.t,
            tau: self.tau,
            kappa: self.kappa,
            ef_search: self.ef_search,
            queries: outs.len(),
            recall: mean(&|o| o.recall),
            query_ms: mean(&|o| o.time_ms),
            n_base: mean(&|o| o.n_base as f64),
            n_lp: mean(&|o| o.n_lp as f64),
            qps,
        }
    }

    /// The aggregate row over all queries; QPS is queries per wall second.
    pub fn aggregate(&self, run: &RunResult) -> BenchRecord {
        let outs: Vec<&QueryOutcome> = run.outcomes.iter().collect();
        self.record("all".into(), &outs, outs.len() as f64 / run.wall_s)
    }

    /// One row per distinct p (ascending) followed by the aggregate row.
    pub fn summarize(&self, run: &RunResult) -> Vec<BenchRecord> {
        let mut groups: BTreeMap<u64, Vec<&QueryOutcome>> = BTreeMap::new();
        for o in &run.outcomes {
            // Positive f64 bit patterns sort like the values.
            groups.entry(o.p.to_bits()).or_default().push(o);
        }
        let mut rows: Vec<BenchRecord> = groups
            .into_values()
            .map(|outs| {
                let secs: f64 = outs.iter().map(|o| o.time_ms).sum::<f64>() / 1e3;
                self.record(outs[0].p.to_string(), &outs, outs.len() as f64 / secs)
            })
            .collect();
        rows.push(self.aggregate(run));
        rows
    }
}
