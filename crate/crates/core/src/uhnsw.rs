//! Queries under a per-query L_p metric served from two base-metric indexes.
//!
//! A query `(q, p, K)` picks the low base index when `p <= cutoff_p` and the
//! high one otherwise, fetches the `t` nearest candidates under that base
//! metric, then re-ranks them by exact L_p distance in batches of `kappa`,
//! stopping as soon as a batch leaves at least a `tau` fraction of the
//! running top-K unchanged. When `p` equals a base metric the matching index
//! answers directly and no L_p re-ranking happens.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hnsw::{HnswIndex, ScoredId};
use crate::metrics::{MetricParam, Vector};
use crate::oracle::{self, pth_power_f64, GroundTruth};

/// Produces base-metric candidate lists for the re-ranking stage.
pub trait CandidateSource {
    fn metric(&self) -> MetricParam;

    fn dataset(&self) -> &Dataset;

    /// Up to `t` points ascending by base-metric distance, plus the number
    /// of base-metric distance evaluations spent finding them.
    fn candidates(&self, q: &[f32], t: usize, ef_search: usize) -> Result<(Vec<ScoredId>, u64)>;
}

impl CandidateSource for HnswIndex {
    fn metric(&self) -> MetricParam {
        HnswIndex::metric(self)
    }

    fn dataset(&self) -> &Dataset {
        HnswIndex::dataset(self)
    }

    fn candidates(&self, q: &[f32], t: usize, ef_search: usize) -> Result<(Vec<ScoredId>, u64)> {
        self.count_distance_evals(q, t, ef_search)
    }
}

impl<S: CandidateSource + ?Sized> CandidateSource for Arc<S> {
    fn metric(&self) -> MetricParam {
        (**self).metric()
    }

    fn dataset(&self) -> &Dataset {
        (**self).dataset()
    }

    fn candidates(&self, q: &[f32], t: usize, ef_search: usize) -> Result<(Vec<ScoredId>, u64)> {
        (**self).candidates(q, t, ef_search)
    }
}

/// Exact brute-force candidate generation; `ef_search` is ignored.
#[derive(Debug, Clone)]
pub struct ExactCandidates {
    data: Arc<Dataset>,
    metric: MetricParam,
}

impl ExactCandidates {
    pub fn new(data: Arc<Dataset>, metric: MetricParam) -> Self {
        ExactCandidates { data, metric }
    }
}

impl CandidateSource for ExactCandidates {
    fn metric(&self) -> MetricParam {
        self.metric
    }

    fn dataset(&self) -> &Dataset {
        &self.data
    }

    fn candidates(&self, q: &[f32], t: usize, _ef_search: usize) -> Result<(Vec<ScoredId>, u64)> {
        let t = t.min(self.data.len());
        let c = oracle::brute_force_knn(&self.data, q, self.metric, t)?;
        Ok((c, self.data.len() as u64))
    }
}

/// Which base-metric pair an instance is configured for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// L_1 / L_2 indexes, cutoff 1.4, serving p in [0.5, 2].
    Default,
    /// L_0.5 / L_1 indexes, cutoff 0.6, serving p in [0.2, 1].
    Extended,
}

impl Variant {
    pub fn base_metrics(self) -> (MetricParam, MetricParam) {
        match self {
            Variant::Default => (MetricParam::L1, MetricParam::L2),
            Variant::Extended => (MetricParam::L_HALF, MetricParam::L1),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Default => "uhnsw",
            Variant::Extended => "uhnsw-e",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UhnswParams {
    /// Candidate set size.
    pub t: usize,
    /// Early-termination threshold on the top-K overlap ratio; 1.0 verifies
    /// every candidate.
    pub tau: f64,
    /// Verification batch size; `None` means K.
    pub kappa: Option<usize>,
    pub ef_search: usize,
    /// The low index serves `p <= cutoff_p`.
    pub cutoff_p: f64,
    /// Inclusive range of p accepted at query time.
    pub p_range: (f64, f64),
}

impl UhnswParams {
    pub fn for_variant(variant: Variant) -> Self {
        let (cutoff_p, p_range) = match variant {
            Variant::Default => (1.4, (0.5, 2.0)),
            Variant::Extended => (0.6, (0.2, 1.0)),
        };
        UhnswParams {
            t: 300,
            tau: 0.92,
            kappa: None,
            ef_search: 400,
            cutoff_p,
            p_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::param("t must be positive"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::param(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if self.kappa == Some(0) {
            return Err(Error::param("kappa must be positive"));
        }
        if self.ef_search < self.t {
            return Err(Error::param(format!(
                "ef_search ({}) must be at least t ({})",
                self.ef_search, self.t
            )));
        }
        let (lo, hi) = self.p_range;
        if !(lo > 0.0 && lo <= hi && hi <= 2.0) {
            return Err(Error::param(format!("invalid p range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

impl Default for UhnswParams {
    fn default() -> Self {
        UhnswParams::for_variant(Variant::Default)
    }
}

/// One ANNS-U-L_p request.
#[derive(Debug, Clone)]
pub struct QueryTuple {
    pub q: Vector,
    pub p: MetricParam,
    pub k: usize,
}

impl QueryTuple {
    pub fn new(q: Vec<f32>, p: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("K must be positive"));
        }
        Ok(QueryTuple {
            q: Vector::new(q)?,
            p: MetricParam::new(p)?,
            k,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryStats {
    /// Base-metric distance evaluations (candidate generation).
    pub n_base: u64,
    /// Target-metric distance evaluations (verification).
    pub n_lp: u64,
    pub batches_consumed: usize,
    /// Verification stopped with candidates left unexamined.
    pub terminated_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutput {
    /// K results ascending by L_p distance.
    pub results: Vec<ScoredId>,
    pub stats: QueryStats,
    /// Base metric of the index that served the query.
    pub base: f64,
}

impl QueryOutput {
    pub fn ids(&self) -> Vec<u32> {
        self.results.iter().map(|s| s.id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyStats {
    pub n_lp: u64,
    pub batches_consumed: usize,
    pub terminated_early: bool,
}

/// Batched L_p re-ranking of a base-metric candidate list with early
/// termination. `candidates` must be ascending under the base metric and
/// hold at least `k` points. Returns the top-`k` by exact L_p distance.
///
/// `tau = 1.0` disables early termination: every candidate is verified and
/// the result is the exact L_p top-`k` of `candidates`.
pub fn verify_candidates(
    data: &Dataset,
    candidates: &[ScoredId],
    q: &[f32],
    p: MetricParam,
    k: usize,
    tau: f64,
    kappa: usize,
) -> Result<(Vec<ScoredId>, VerifyStats)> {
    if k == 0 || kappa == 0 {
        return Err(Error::param("K and kappa must be positive"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::param(format!("tau must lie in [0, 1], got {tau}")));
    }
    if candidates.len() < k {
        return Err(Error::TooFew {
            requested: k,
            available: candidates.len(),
        });
    }
    if q.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: q.len(),
        });
    }

    let score = |s: &ScoredId| (p.pth_power(q, data.row(s.id as usize)), s.id);
    let by_score = |a: &(f32, u32), b: &(f32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));

    let mut top: Vec<(f32, u32)> = candidates[..k].iter().map(score).collect();
    top.sort_unstable_by(by_score);
    let mut stats = VerifyStats {
        n_lp: k as u64,
        ..VerifyStats::default()
    };

    let mut pos = k;
    let mut merged = Vec::with_capacity(k + kappa);
    while pos < candidates.len() {
        let end = (pos + kappa).min(candidates.len());
        merged.clear();
        merged.extend_from_slice(&top);
        merged.extend(candidates[pos..end].iter().map(score));
        stats.n_lp += (end - pos) as u64;
        stats.batches_consumed += 1;
        pos = end;

        merged.sort_unstable_by(by_score);
        merged.truncate(k);
        let overlap = merged
            .iter()
            .filter(|m| top.iter().any(|t| t.1 == m.1))
            .count();
        std::mem::swap(&mut top, &mut merged);
        if tau < 1.0 && overlap as f64 / k as f64 >= tau {
            stats.terminated_early = pos < candidates.len();
            break;
        }
    }

    let out = top
        .into_iter()
        .map(|(s, id)| ScoredId::new(id, p.root(s)))
        .collect();
    Ok((out, stats))
}

/// A pair of base-metric candidate sources plus query parameters.
#[derive(Debug, Clone)]
pub struct Uhnsw<S = HnswIndex> {
    lo: S,
    hi: S,
    params: UhnswParams,
}

impl<S: CandidateSource> Uhnsw<S> {
    pub fn new(lo: S, hi: S, params: UhnswParams) -> Result<Self> {
        params.validate()?;
        if lo.metric().p() >= hi.metric().p() {
            return Err(Error::param(format!(
                "low base metric {} must be below high base metric {}",
                lo.metric(),
                hi.metric()
            )));
        }
        if !std::ptr::eq(lo.dataset(), hi.dataset()) && lo.dataset() != hi.dataset() {
            return Err(Error::param("base indexes cover different datasets"));
        }
        Ok(Uhnsw { lo, hi, params })
    }

    pub fn params(&self) -> &UhnswParams {
        &self.params
    }

    /// Replaces the query parameters, keeping the indexes.
    pub fn set_params(&mut self, params: UhnswParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn lo(&self) -> &S {
        &self.lo
    }

    pub fn hi(&self) -> &S {
        &self.hi
    }

    pub fn dataset(&self) -> &Dataset {
        self.lo.dataset()
    }

    pub fn select_base_index(&self, p: MetricParam) -> &S {
        if p.p() <= self.params.cutoff_p {
            &self.lo
        } else {
            &self.hi
        }
    }

    pub fn query(&self, qt: &QueryTuple) -> Result<QueryOutput> {
        self.query_vec(qt.q.as_slice(), qt.p, qt.k)
    }

    /// As [`query`](Self::query) for an unwrapped vector.
    pub fn query_vec(&self, q: &[f32], p: MetricParam, k: usize) -> Result<QueryOutput> {
        let (lo, hi) = self.params.p_range;
        if p.p() < lo || p.p() > hi {
            return Err(Error::UnsupportedP { p: p.p(), lo, hi });
        }
        if k == 0 {
            return Err(Error::param("K must be positive"));
        }

        for base in [&self.lo, &self.hi] {
            if base.metric() == p {
                let (results, n_base) = base.candidates(q, k, self.params.ef_search.max(k))?;
                return Ok(QueryOutput {
                    results,
                    stats: QueryStats {
                        n_base,
                        ..QueryStats::default()
                    },
                    base: p.p(),
                });
            }
        }

        if self.params.t < k {
            return Err(Error::param(format!(
                "t ({}) must be at least K ({k})",
                self.params.t
            )));
        }
        let base = self.select_base_index(p);
        let (candidates, n_base) = base.candidates(q, self.params.t, self.params.ef_search)?;
        let (results, v) = verify_candidates(
            base.dataset(),
            &candidates,
            q,
            p,
            k,
            self.params.tau,
            self.params.kappa.unwrap_or(k),
        )?;
        Ok(QueryOutput {
            results,
            stats: QueryStats {
                n_base,
                n_lp: v.n_lp,
                batches_consumed: v.batches_consumed,
                terminated_early: v.terminated_early,
            },
            base: base.metric().p(),
        })
    }
}

/// Mean recall when the candidate set is the exact top-`t` under `base`,
/// fully re-ranked under `p`.
pub fn idealized_recall(
    data: &Dataset,
    queries: &Dataset,
    p: MetricParam,
    k: usize,
    t: usize,
    base: MetricParam,
) -> Result<f64> {
    let truth = GroundTruth::compute(data, queries, p, k)?;
    idealized_recall_with_truth(data, queries, &truth, t, base)
}

/// [`idealized_recall`] against precomputed (for example cached) truth.
pub fn idealized_recall_with_truth(
    data: &Dataset,
    queries: &Dataset,
    truth: &GroundTruth,
    t: usize,
    base: MetricParam,
) -> Result<f64> {
    let k = truth.k();
    if t > data.len() {
        return Err(Error::TooFew {
            requested: t,
            available: data.len(),
        });
    }
    if t < k {
        return Err(Error::param(format!("t ({t}) must be at least K ({k})")));
    }
    if truth.len() != queries.len() {
        return Err(Error::param("ground truth does not match the query set"));
    }
    let p = truth.p();
    let per_query = (0..queries.len())
        .into_par_iter()
        .map(|i| {
            let q = queries.row(i);
            let base_keys: Vec<f64> = data.rows().map(|r| pth_power_f64(q, r, base.p())).collect();
            let cands = oracle::top_k_by(&base_keys, t);
            let lp_keys: Vec<f64> = cands
                .iter()
                .map(|&c| pth_power_f64(q, data.row(c as usize), p))
                .collect();
            let top: Vec<u32> = oracle::top_k_by(&lp_keys, k)
                .into_iter()
                .map(|j| cands[j as usize])
                .collect();
            oracle::recall(&top, truth.neighbors(i))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_query.iter().sum::<f64>() / per_query.len() as f64)
}
