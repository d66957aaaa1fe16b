use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use uhnsw::{
    Dataset, GroundTruth, HnswIndex, HnswParams, MetricParam, Uhnsw, UhnswParams, Variant,
};

use crate::corpus::{DatasetSpec, Role};
use crate::experiments::{self, SweepParam};
use crate::record::{write_csv, BenchRecord};
use crate::workload::{p_grid, PSource, RunResult, Truths};

#[derive(Debug, Parser)]
#[command(
    name = "uhnsw-bench",
    version,
    about = "Per-query L_p nearest-neighbor benchmark harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an HNSW index under one base metric and save a snapshot.
    Build(BuildArgs),
    /// Compute (or reuse cached) exact ground truth for each p.
    Gt(GtArgs),
    /// Run a query workload and write per-p and aggregate records.
    Query(QueryArgs),
    /// Sweep t or tau and write one aggregate record per value.
    Sweep(SweepArgs),
    /// Split candidate generation from verification, with and without early stop.
    Ablation(AblationArgs),
    /// Idealized recall (exact base-metric candidates) over a range of t.
    Idealized(IdealizedArgs),
    /// Time the distance kernels.
    DistBench(DistBenchArgs),
}

#[derive(Debug, Args)]
pub struct BaseArgs {
    /// Base corpus: a .fvecs/.bvecs path, `gaussian:N:D:SEED`, `uniform01:N:D:SEED`, or `desk`.
    #[arg(long, default_value = "desk")]
    pub base: DatasetSpec,
    /// Subsample this many base points.
    #[arg(long)]
    pub base_sample: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub sample_seed: u64,
}

impl BaseArgs {
    pub fn load(&self) -> Result<Dataset> {
        self.base
            .load(Role::Base, self.base_sample.map(|m| (m, self.sample_seed)))
    }
}

#[derive(Debug, Args)]
pub struct QuerySetArgs {
    /// Query set, same syntax as --base.
    #[arg(long, default_value = "desk")]
    pub queries: DatasetSpec,
    /// Subsample this many queries.
    #[arg(long)]
    pub query_sample: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub query_seed: u64,
}

impl QuerySetArgs {
    pub fn load(&self) -> Result<Dataset> {
        self.queries.load(
            Role::Queries,
            self.query_sample.map(|m| (m, self.query_seed)),
        )
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub data: BaseArgs,
    /// Base metric p of the index.
    #[arg(long)]
    pub metric: f64,
    #[arg(long, default_value_t = HnswParams::DEFAULT_M)]
    pub m: usize,
    #[arg(long, default_value_t = HnswParams::DEFAULT_EF_CONSTRUCTION)]
    pub ef_construction: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the build record (including build time) to this CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GtArgs {
    #[command(flatten)]
    pub data: BaseArgs,
    #[command(flatten)]
    pub queries: QuerySetArgs,
    /// Comma-separated p values.
    #[arg(long = "p", value_delimiter = ',', required = true)]
    pub ps: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Cache directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Default,
    E,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Default => Variant::Default,
            VariantArg::E => Variant::Extended,
        }
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub data: BaseArgs,
    #[command(flatten)]
    pub queries: QuerySetArgs,
    /// Snapshot of the low base-metric index (L1, or L0.5 for --variant e).
    #[arg(long)]
    pub lo: PathBuf,
    /// Snapshot of the high base-metric index (L2, or L1 for --variant e).
    #[arg(long)]
    pub hi: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Default)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 300)]
    pub t: usize,
    #[arg(long, default_value_t = 0.92)]
    pub tau: f64,
    /// Verification batch size; defaults to K.
    #[arg(long)]
    pub kappa: Option<usize>,
    #[arg(long, default_value_t = 400)]
    pub ef_search: usize,
    /// Defaults to 1.4 (default variant) or 0.6 (variant e).
    #[arg(long)]
    pub cutoff_p: Option<f64>,
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// Force single-threaded execution (reference timing mode).
    #[arg(long)]
    pub serial: bool,
}

impl PipelineArgs {
    fn params(&self) -> UhnswParams {
        let variant: Variant = self.variant.into();
        let d = UhnswParams::for_variant(variant);
        UhnswParams {
            t: self.t,
            tau: self.tau,
            kappa: self.kappa,
            ef_search: self.ef_search,
            cutoff_p: self.cutoff_p.unwrap_or(d.cutoff_p),
            p_range: d.p_range,
        }
    }

    fn open(&self) -> Result<(Uhnsw, Dataset)> {
        let variant: Variant = self.variant.into();
        let data = Arc::new(self.data.load()?);
        let queries = self.queries.load()?;
        let lo = load_index(&self.lo, data.clone())?;
        let hi = load_index(&self.hi, data)?;
        let (want_lo, want_hi) = variant.base_metrics();
        if lo.metric() != want_lo || hi.metric() != want_hi {
            bail!(
                "variant {variant:?} needs {want_lo}/{want_hi} indexes, got {}/{}",
                lo.metric(),
                hi.metric()
            );
        }
        Ok((Uhnsw::new(lo, hi, self.params())?, queries))
    }
}

#[derive(Debug, Args)]
pub struct PSourceArgs {
    /// Fixed p for every query.
    #[arg(long, conflicts_with = "p_set")]
    pub p: Option<f64>,
    /// Draw p uniformly per query from this comma-separated set
    /// (default: 0.5..2.0 step 0.1, or 0.2..1.0 for variant e).
    #[arg(long, value_delimiter = ',')]
    pub p_set: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub p_seed: u64,
}

impl PSourceArgs {
    fn source(&self, variant: Variant) -> PSource {
        match (&self.p, &self.p_set) {
            (Some(p), _) => PSource::Fixed(*p),
            (None, Some(set)) => PSource::Uniform(set.clone()),
            (None, None) => PSource::Uniform(match variant {
                Variant::Default => p_grid(5, 20),
                Variant::Extended => p_grid(2, 10),
            }),
        }
    }
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub p: PSourceArgs,
    /// Run plain HNSW on this snapshot instead (its metric must equal --p).
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-query dump (p, recall, time, counts).
    #[arg(long)]
    pub per_query: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParamArg {
    T,
    Tau,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub p: PSourceArgs,
    #[arg(long, value_enum)]
    pub param: SweepParamArg,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long = "p", value_delimiter = ',', default_value = "0.51,0.9")]
    pub ps: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IdealizedArgs {
    #[command(flatten)]
    pub data: BaseArgs,
    #[command(flatten)]
    pub queries: QuerySetArgs,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub base_metric: f64,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,200,300,500")]
    pub ts: Vec<usize>,
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistBenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "128,256,960")]
    pub dims: Vec<usize>,
    #[arg(long = "p", value_delimiter = ',', default_value = "0.5,1,1.3,1.5,2")]
    pub ps: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_index(path: &Path, data: Arc<Dataset>) -> Result<HnswIndex> {
    HnswIndex::load(path, data).with_context(|| format!("loading index {}", path.display()))
}

#[derive(Serialize)]
struct PerQueryRow {
    query: usize,
    p: f64,
    recall: f64,
    time_ms: f64,
    n_base: u64,
    n_lp: u64,
}

fn write_per_query(path: &Path, run: &RunResult) -> Result<()> {
    let rows: Vec<PerQueryRow> = run
        .outcomes
        .iter()
        .enumerate()
        .map(|(query, o)| PerQueryRow {
            query,
            p: o.p,
            recall: o.recall,
            time_ms: o.time_ms,
            n_base: o.n_base,
            n_lp: o.n_lp,
        })
        .collect();
    write_csv(path, &rows)
}

fn print_records(rows: &[BenchRecord]) {
    for r in rows {
        println!(
            "{:<14} p={:<5} K={} t={} tau={} recall={:.4} ms={:.3} N_b={:.1} N_p={:.1} qps={:.1}",
            serde_plain_tag(r),
            r.p,
            r.k,
            r.t,
            r.tau,
            r.recall,
            r.query_ms,
            r.n_base,
            r.n_lp,
            r.qps
        );
    }
}

fn serde_plain_tag(r: &BenchRecord) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(vec![]);
    let _ = w.serialize(r.variant);
    String::from_utf8(w.into_inner().unwrap_or_default())
        .unwrap_or_default()
        .trim()
        .to_owned()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Gt(a) => cmd_gt(a),
        Command::Query(a) => cmd_query(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Ablation(a) => cmd_ablation(a),
        Command::Idealized(a) => cmd_idealized(a),
        Command::DistBench(a) => cmd_dist_bench(a),
    }
}

fn cmd_build(a: BuildArgs) -> Result<()> {
    let data = Arc::new(a.data.load()?);
    let params = HnswParams::new(MetricParam::new(a.metric)?)
        .with_m(a.m)
        .with_ef_construction(a.ef_construction)
        .with_seed(a.seed);
    params.validate()?;
    let (index, rec) = experiments::build_index(data, params)?;
    index.save(&a.out)?;
    println!(
        "built {} index over {} ({}x{}) in {:.3}s -> {}",
        index.metric(),
        rec.dataset,
        rec.n,
        rec.d,
        rec.build_s,
        a.out.display()
    );
    if let Some(report) = a.report {
        write_csv(&report, &[rec])?;
    }
    Ok(())
}

fn cmd_gt(a: GtArgs) -> Result<()> {
    let data = a.data.load()?;
    let queries = a.queries.load()?;
    for &p in &a.ps {
        let start = Instant::now();
        let (gt, hit) = GroundTruth::cached(&a.out, &data, &queries, MetricParam::new(p)?, a.k)?;
        println!(
            "p={p}: {} queries x K={} ({}, {:.3}s) -> {}",
            gt.len(),
            gt.k(),
            if hit { "cached" } else { "computed" },
            start.elapsed().as_secs_f64(),
            GroundTruth::cache_path(&a.out, &data, &queries, MetricParam::new(p)?, a.k).display()
        );
    }
    Ok(())
}

fn cmd_query(a: QueryArgs) -> Result<()> {
    let pl = &a.pipeline;
    let variant: Variant = pl.variant.into();

    if let Some(path) = &a.baseline {
        let Some(p) = a.p.p else {
            bail!("--baseline needs a fixed --p");
        };
        let data = Arc::new(pl.data.load()?);
        let queries = pl.queries.load()?;
        let index = load_index(path, data.clone())?;
        if index.metric().p() != p {
            bail!(
                "baseline index metric {} does not match p = {p}",
                index.metric()
            );
        }
        let truths = Truths::load(&pl.gt_dir, &data, &queries, &[p], pl.k)?;
        let (meta, run) =
            experiments::run_baseline(&index, &queries, &truths, pl.k, pl.ef_search, pl.serial)?;
        let rows = meta.summarize(&run);
        print_records(&rows);
        if let Some(path) = &a.per_query {
            write_per_query(path, &run)?;
        }
        return write_csv(&a.out, &rows);
    }

    let (u, queries) = pl.open()?;
    let source = a.p.source(variant);
    let ps = source.assign(queries.len(), a.p.p_seed);
    let truths = Truths::load(&pl.gt_dir, u.dataset(), &queries, &source.values(), pl.k)?;
    let run = experiments::run_uhnsw(&u, &queries, &ps, &truths, pl.k, pl.serial)?;
    let rows = experiments::meta_for(&u, variant, pl.k).summarize(&run);
    print_records(&rows);
    if let Some(path) = &a.per_query {
        write_per_query(path, &run)?;
    }
    write_csv(&a.out, &rows)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let pl = &a.pipeline;
    let variant: Variant = pl.variant.into();
    if a.values.is_empty() {
        bail!("--values must not be empty");
    }
    let (mut u, queries) = pl.open()?;
    let source = a.p.source(variant);
    let ps = source.assign(queries.len(), a.p.p_seed);
    let truths = Truths::load(&pl.gt_dir, u.dataset(), &queries, &source.values(), pl.k)?;
    let param = match a.param {
        SweepParamArg::T => SweepParam::T,
        SweepParamArg::Tau => SweepParam::Tau,
    };
    let rows = experiments::sweep(
        &mut u, variant, param, &a.values, &queries, &ps, &truths, pl.k, pl.serial,
    )?;
    print_records(&rows);
    write_csv(&a.out, &rows)
}

fn cmd_ablation(a: AblationArgs) -> Result<()> {
    let pl = &a.pipeline;
    let (u, queries) = pl.open()?;
    let truths = Truths::load(&pl.gt_dir, u.dataset(), &queries, &a.ps, pl.k)?;
    let mut rows = Vec::new();
    for &p in &a.ps {
        let r = experiments::ablation(&u, &queries, p, truths.get(p)?, pl.k)?;
        println!(
            "p={p}: recall initial={:.4} rerank={:.4}  gen={:.3}ms verify={:.3}ms no-early-stop={:.3}ms  N_p={:.1}/{:.1}",
            r.recall_initial_filter,
            r.recall_rerank,
            r.generation_ms,
            r.verification_ms,
            r.verification_no_early_stop_ms,
            r.n_lp,
            r.n_lp_no_early_stop
        );
        rows.push(r);
    }
    write_csv(&a.out, &rows)
}

fn cmd_idealized(a: IdealizedArgs) -> Result<()> {
    let data = a.data.load()?;
    let queries = a.queries.load()?;
    let (truth, _) = GroundTruth::cached(&a.gt_dir, &data, &queries, MetricParam::new(a.p)?, a.k)?;
    let rows = experiments::idealized_sweep(
        &data,
        &queries,
        &truth,
        &a.ts,
        MetricParam::new(a.base_metric)?,
    )?;
    print_records(&rows);
    write_csv(&a.out, &rows)
}

fn cmd_dist_bench(a: DistBenchArgs) -> Result<()> {
    let rows = experiments::dist_bench(&a.dims, &a.ps, a.reps)?;
    for r in &rows {
        println!(
            "d={:<5} p={:<4} {:<9} {:.1} ns",
            r.d, r.p, r.tier, r.mean_ns
        );
    }
    write_csv(&a.out, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn p_source_defaults_follow_variant() {
        let cli = Cli::try_parse_from([
            "uhnsw-bench",
            "query",
            "--lo",
            "a",
            "--hi",
            "b",
            "--gt-dir",
            "g",
            "--out",
            "o.csv",
        ])
        .unwrap();
        let Command::Query(q) = cli.command else {
            panic!()
        };
        assert_eq!(
            q.p.source(Variant::Default),
            PSource::Uniform(p_grid(5, 20))
        );
        assert_eq!(
            q.p.source(Variant::Extended),
            PSource::Uniform(p_grid(2, 10))
        );
        assert_eq!(q.pipeline.params(), UhnswParams::default());
    }

    #[test]
    fn fixed_p_conflicts_with_set() {
        assert!(Cli::try_parse_from([
            "uhnsw-bench",
            "query",
            "--lo",
            "a",
            "--hi",
            "b",
            "--gt-dir",
            "g",
            "--out",
            "o",
            "--p",
            "0.7",
            "--p-set",
            "0.5,0.6",
        ])
        .is_err());
    }
}
