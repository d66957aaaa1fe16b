//! The experiments behind each subcommand, usable without the CLI.

use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Result};
use uhnsw::{
    oracle, time_distance_kernel, uhnsw::idealized_recall_with_truth, verify_candidates,
    CandidateSource, Dataset, GroundTruth, HnswIndex, HnswParams, MetricParam, Uhnsw, UhnswParams,
    Variant,
};

use crate::record::{AblationRecord, BenchRecord, BuildRecord, DistRecord, VariantTag, SCHEMA};
use crate::workload::{run_queries, RecordMeta, RunResult, Truths};

pub fn build_index(data: Arc<Dataset>, params: HnswParams) -> Result<(HnswIndex, BuildRecord)> {
    let start = Instant::now();
    let index = HnswIndex::build(data, params)?;
    let build_s = start.elapsed().as_secs_f64();
    let ds = index.dataset();
    let rec = BuildRecord {
        schema: SCHEMA,
        dataset: ds.name().to_owned(),
        n: ds.len(),
        d: ds.dim(),
        metric_p: params.metric.p(),
        m: params.m,
        ef_construction: params.ef_construction,
        seed: params.seed,
        build_s,
    };
    Ok((index, rec))
}

/// Builds the variant's two base indexes concurrently, each single-threaded.
pub fn build_pair(
    data: Arc<Dataset>,
    variant: Variant,
    m: usize,
    ef_construction: usize,
    seed: u64,
) -> Result<[(HnswIndex, BuildRecord); 2]> {
    let (lo, hi) = variant.base_metrics();
    let params = |metric| {
        HnswParams::new(metric)
            .with_m(m)
            .with_ef_construction(ef_construction)
            .with_seed(seed)
    };
    let (a, b) = rayon::join(
        || build_index(data.clone(), params(lo)),
        || build_index(data.clone(), params(hi)),
    );
    Ok([a?, b?])
}

pub fn meta_for<S: CandidateSource>(u: &Uhnsw<S>, variant: Variant, k: usize) -> RecordMeta {
    let p = u.params();
    RecordMeta {
        variant: variant.into(),
        dataset: u.dataset().name().to_owned(),
        k,
        t: p.t,
        tau: p.tau,
        kappa: p.kappa.unwrap_or(k),
        ef_search: p.ef_search,
    }
}

pub fn run_uhnsw<S: CandidateSource + Sync>(
    u: &Uhnsw<S>,
    queries: &Dataset,
    ps: &[f64],
    truths: &Truths,
    k: usize,
    serial: bool,
) -> Result<RunResult> {
    run_queries(queries, ps, truths, k, serial, |q, p| {
        let out = u.query_vec(q, p, k)?;
        Ok((out.ids(), out.stats.n_base, out.stats.n_lp))
    })
}

/// Plain HNSW search on an index built under the query metric itself.
pub fn run_baseline(
    index: &HnswIndex,
    queries: &Dataset,
    truths: &Truths,
    k: usize,
    ef_search: usize,
    serial: bool,
) -> Result<(RecordMeta, RunResult)> {
    let p = index.metric().p();
    let ps = vec![p; queries.len()];
    let run = run_queries(queries, &ps, truths, k, serial, |q, _| {
        let (r, n_base) = index.count_distance_evals(q, k, ef_search)?;
        Ok((r.iter().map(|s| s.id).collect(), n_base, 0))
    })?;
    let meta = RecordMeta {
        variant: VariantTag::HnswBaseline,
        dataset: index.dataset().name().to_owned(),
        k,
        t: k,
        tau: 0.0,
        kappa: 0,
        ef_search,
    };
    Ok((meta, run))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    T,
    Tau,
}

/// One aggregate record per swept value. Sweeping `t` raises `ef_search` to
/// `t` where needed.
#[allow(clippy::too_many_arguments)]
pub fn sweep<S: CandidateSource + Sync>(
    u: &mut Uhnsw<S>,
    variant: Variant,
    param: SweepParam,
    values: &[f64],
    queries: &Dataset,
    ps: &[f64],
    truths: &Truths,
    k: usize,
    serial: bool,
) -> Result<Vec<BenchRecord>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let base = *u.params();
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let params = match param {
            SweepParam::T => {
                if v < 1.0 || v.fract() != 0.0 {
                    bail!("t must be a positive integer, got {v}");
                }
                let t = v as usize;
                UhnswParams {
                    t,
                    ef_search: base.ef_search.max(t),
                    ..base
                }
            }
            SweepParam::Tau => UhnswParams { tau: v, ..base },
        };
        u.set_params(params)?;
        let run = run_uhnsw(u, queries, ps, truths, k, serial)?;
        rows.push(meta_for(u, variant, k).aggregate(&run));
    }
    u.set_params(base)?;
    Ok(rows)
}

/// Candidate generation and verification measured separately, serially.
/// "No early stop" verifies the whole candidate set (tau = 1).
pub fn ablation<S: CandidateSource>(
    u: &Uhnsw<S>,
    queries: &Dataset,
    p: f64,
    truth: &GroundTruth,
    k: usize,
) -> Result<AblationRecord> {
    let metric = MetricParam::new(p)?;
    let params = *u.params();
    if [u.lo().metric(), u.hi().metric()].contains(&metric) {
        bail!("p = {p} is served directly by a base index; nothing to verify");
    }
    if truth.p() != p || truth.len() != queries.len() || truth.k() != k {
        bail!("ground truth does not match p = {p}, K = {k}");
    }
    let base = u.select_base_index(metric);
    let data = base.dataset();
    let kappa = params.kappa.unwrap_or(k);

    #[derive(Default)]
    struct Acc {
        initial: f64,
        rerank: f64,
        gen: f64,
        verify: f64,
        full: f64,
        n_lp: f64,
        n_lp_full: f64,
    }
    let pass = || -> Result<Acc> {
        let mut a = Acc::default();
        for (i, q) in queries.rows().enumerate() {
            let t0 = Instant::now();
            let (cands, _) = base.candidates(q, params.t, params.ef_search)?;
            let t1 = Instant::now();
            let (r, s) = verify_candidates(data, &cands, q, metric, k, params.tau, kappa)?;
            let t2 = Instant::now();
            let (_, s_full) = verify_candidates(data, &cands, q, metric, k, 1.0, kappa)?;
            let t3 = Instant::now();

            let initial: Vec<u32> = cands.iter().take(k).map(|c| c.id).collect();
            let ids: Vec<u32> = r.iter().map(|c| c.id).collect();
            a.initial += oracle::recall(&initial, truth.neighbors(i))?;
            a.rerank += oracle::recall(&ids, truth.neighbors(i))?;
            a.gen += (t1 - t0).as_secs_f64();
            a.verify += (t2 - t1).as_secs_f64();
            a.full += (t3 - t2).as_secs_f64();
            a.n_lp += s.n_lp as f64;
            a.n_lp_full += s_full.n_lp as f64;
        }
        Ok(a)
    };
    pass()?;
    let a = pass()?;
    let n = queries.len() as f64;
    Ok(AblationRecord {
        schema: SCHEMA,
        dataset: data.name().to_owned(),
        p,
        k,
        t: params.t,
        tau: params.tau,
        queries: queries.len(),
        recall_initial_filter: a.initial / n,
        recall_rerank: a.rerank / n,
        generation_ms: a.gen * 1e3 / n,
        verification_ms: a.verify * 1e3 / n,
        verification_no_early_stop_ms: a.full * 1e3 / n,
        n_lp: a.n_lp / n,
        n_lp_no_early_stop: a.n_lp_full / n,
    })
}

/// Idealized recall (exact top-`t` base-metric candidates, full re-rank) for
/// each `t`.
pub fn idealized_sweep(
    data: &Dataset,
    queries: &Dataset,
    truth: &GroundTruth,
    ts: &[usize],
    base: MetricParam,
) -> Result<Vec<BenchRecord>> {
    if ts.is_empty() {
        bail!("need at least one t");
    }
    ts.iter()
        .map(|&t| {
            let recall = idealized_recall_with_truth(data, queries, truth, t, base)?;
            Ok(BenchRecord {
                schema: SCHEMA,
                variant: VariantTag::Idealized,
                dataset: data.name().to_owned(),
                p: truth.p().to_string(),
                k: truth.k(),
                t,
                tau: 1.0,
                kappa: 0,
                ef_search: 0,
                queries: queries.len(),
                recall,
                query_ms: 0.0,
                n_base: data.len() as f64,
                n_lp: t as f64,
                qps: 0.0,
            })
        })
        .collect()
}

pub fn dist_bench(dims: &[usize], ps: &[f64], reps: usize) -> Result<Vec<DistRecord>> {
    if dims.is_empty() || ps.is_empty() {
        bail!("need at least one dimension and one p");
    }
    let mut rows = Vec::new();
    for &d in dims {
        for &p in ps {
            let metric = MetricParam::new(p)?;
            rows.push(DistRecord {
                schema: SCHEMA,
                d,
                p,
                tier: metric.tier().to_string(),
                reps,
                mean_ns: time_distance_kernel(d, metric, reps)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{p_grid, PSource};
    use uhnsw::{gen_synthetic, Distribution};

    struct Small {
        u: Uhnsw<Arc<HnswIndex>>,
        queries: Dataset,
        dir: tempfile::TempDir,
    }

    fn small() -> Small {
        let data = Arc::new(gen_synthetic(1500, 12, Distribution::Gaussian, 1).unwrap());
        let queries = gen_synthetic(40, 12, Distribution::Gaussian, 2).unwrap();
        let [(lo, _), (hi, _)] = build_pair(data, Variant::Default, 12, 100, 3).unwrap();
        let u = Uhnsw::new(
            Arc::new(lo),
            Arc::new(hi),
            UhnswParams {
                t: 100,
                ef_search: 150,
                ..UhnswParams::default()
            },
        )
        .unwrap();
        Small {
            u,
            queries,
            dir: tempfile::tempdir().unwrap(),
        }
    }

    #[test]
    fn workload_summary_and_sweeps() {
        let mut s = small();
        let k = 10;
        let src = PSource::Uniform(p_grid(5, 20));
        let ps = src.assign(s.queries.len(), 9);
        let truths =
            Truths::cached(s.dir.path(), s.u.dataset(), &s.queries, &src.values(), k).unwrap();

        let run = run_uhnsw(&s.u, &s.queries, &ps, &truths, k, true).unwrap();
        let rows = meta_for(&s.u, Variant::Default, k).summarize(&run);
        let distinct = src.values().iter().filter(|p| ps.contains(p)).count();
        assert_eq!(rows.len(), distinct + 1);
        assert_eq!(rows.last().unwrap().p, "all");
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.recall));
            if r.p == "1" || r.p == "2" {
                assert_eq!(r.n_lp, 0.0);
            }
        }

        let taus = sweep(
            &mut s.u,
            Variant::Default,
            SweepParam::Tau,
            &[0.75, 0.85, 0.95],
            &s.queries,
            &ps,
            &truths,
            k,
            false,
        )
        .unwrap();
        assert_eq!(taus.len(), 3);
        assert!(taus
            .windows(2)
            .all(|w| w[0].n_lp <= w[1].n_lp && w[0].recall <= w[1].recall));
        assert_eq!(s.u.params().tau, 0.92);

        let ts = sweep(
            &mut s.u,
            Variant::Default,
            SweepParam::T,
            &[50.0, 200.0],
            &s.queries,
            &ps,
            &truths,
            k,
            false,
        )
        .unwrap();
        assert_eq!((ts[0].t, ts[1].t, ts[1].ef_search), (50, 200, 200));
        assert!(sweep(
            &mut s.u,
            Variant::Default,
            SweepParam::T,
            &[],
            &s.queries,
            &ps,
            &truths,
            k,
            false
        )
        .is_err());
        assert!(sweep(
            &mut s.u,
            Variant::Default,
            SweepParam::T,
            &[2.5],
            &s.queries,
            &ps,
            &truths,
            k,
            false
        )
        .is_err());
    }

    #[test]
    fn ablation_and_idealized() {
        let s = small();
        let k = 10;
        let (truth, _) = GroundTruth::cached(
            s.dir.path(),
            s.u.dataset(),
            &s.queries,
            MetricParam::new(0.51).unwrap(),
            k,
        )
        .unwrap();
        let a = ablation(&s.u, &s.queries, 0.51, &truth, k).unwrap();
        assert!(a.recall_rerank >= a.recall_initial_filter);
        assert_eq!(a.n_lp_no_early_stop, 100.0);
        assert!(a.n_lp <= a.n_lp_no_early_stop);
        assert!(ablation(&s.u, &s.queries, 1.0, &truth, k).is_err());

        let rows = idealized_sweep(
            s.u.dataset(),
            &s.queries,
            &truth,
            &[10, 100, 1500],
            MetricParam::L1,
        )
        .unwrap();
        assert!(rows.windows(2).all(|w| w[0].recall <= w[1].recall));
        assert_eq!(rows[2].recall, 1.0);
    }

    #[test]
    fn dist_bench_rows() {
        let rows = dist_bench(&[8], &[1.3], 100).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].tier, "general");
        assert!(rows[0].mean_ns > 0.0);
        assert!(dist_bench(&[], &[1.0], 10).is_err());
    }
}
