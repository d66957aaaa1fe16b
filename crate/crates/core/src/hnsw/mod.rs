//! Hierarchical navigable small-world graph under one fixed base metric.
//!
//! Construction is single-threaded and fully determined by the dataset
//! order and the seed. Internally all distances are p-th power sums; the
//! `1/p` root is applied only to the values handed back to callers.

mod snapshot;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{check_finite, MetricParam};

const MAX_LEVEL_CAP: usize = 31;

/// A point id paired with its distance to the current query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredId {
    pub id: u32,
    pub dist: f32,
}

impl ScoredId {
    pub fn new(id: u32, dist: f32) -> Self {
        ScoredId { id, dist }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnswParams {
    /// Max out-degree on upper layers; layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub seed: u64,
    pub metric: MetricParam,
}

impl HnswParams {
    pub const DEFAULT_M: usize = 32;
    pub const DEFAULT_EF_CONSTRUCTION: usize = 500;

    pub fn new(metric: MetricParam) -> Self {
        HnswParams {
            m: Self::DEFAULT_M,
            ef_construction: Self::DEFAULT_EF_CONSTRUCTION,
            seed: 0,
            metric,
        }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_ef_construction(mut self, ef: usize) -> Self {
        self.ef_construction = ef;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::param(format!(
                "M must be at least 2, got {}",
                self.m
            )));
        }
        if self.ef_construction < self.m {
            return Err(Error::param(format!(
                "ef_construction ({}) must be at least M ({})",
                self.ef_construction, self.m
            )));
        }
        Ok(())
    }

    fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    fn level_multiplier(&self) -> f64 {
        1.0 / (self.m as f64).ln()
    }
}

/// Heap entry ordered by (distance, id) so that ties favor the lower id.
#[derive(Debug, Clone, Copy)]
struct Cand {
    dist: f32,
    id: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

/// Epoch-stamped visited marks; clearing is O(1).
struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            marks: vec![0; n],
            epoch: 1,
        }
    }

    fn clear(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    /// Returns true if `id` was not yet visited.
    #[inline]
    fn insert(&mut self, id: u32) -> bool {
        let m = &mut self.marks[id as usize];
        if *m == self.epoch {
            false
        } else {
            *m = self.epoch;
            true
        }
    }
}

#[derive(Debug, Clone)]
pub struct HnswIndex {
    params: HnswParams,
    data: Arc<Dataset>,
    /// `links[node][layer]` for `layer <= level(node)`.
    links: Vec<Vec<Vec<u32>>>,
    entry_point: u32,
    max_level: usize,
}

impl HnswIndex {
    /// Inserts every point of `data` in order.
    pub fn build(data: Arc<Dataset>, params: HnswParams) -> Result<HnswIndex> {
        params.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = data.len();
        if n > u32::MAX as usize {
            return Err(Error::param("dataset too large for 32-bit ids"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = params.level_multiplier();
        let levels: Vec<usize> = (0..n)
            .map(|_| {
                // 1 - [0, 1) lies in (0, 1], so ln is finite.
                let u: f64 = 1.0 - rng.gen::<f64>();
                ((-u.ln() * ml).floor() as usize).min(MAX_LEVEL_CAP)
            })
            .collect();

        let mut index = HnswIndex {
            params,
            links: levels.iter().map(|&l| vec![Vec::new(); l + 1]).collect(),
            data,
            entry_point: 0,
            max_level: levels[0],
        };
        let mut visited = Visited::new(n);
        for (i, &level) in levels.iter().enumerate().skip(1) {
            index.insert(i as u32, level, &mut visited);
        }
        Ok(index)
    }

    fn insert(&mut self, id: u32, level: usize, visited: &mut Visited) {
        let data = Arc::clone(&self.data);
        let q = data.row(id as usize);
        let metric = self.params.metric;
        let mut evals = 0u64;

        let ep = self.entry_point;
        let mut entry = vec![Cand {
            dist: metric.pth_power(q, data.row(ep as usize)),
            id: ep,
        }];
        for layer in (level + 1..=self.max_level).rev() {
            entry = self.search_layer(q, &entry, 1, layer, visited, &mut evals);
        }

        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(
                q,
                &entry,
                self.params.ef_construction,
                layer,
                visited,
                &mut evals,
            );
            let chosen = self.select_neighbors(&found, self.params.m);
            self.links[id as usize][layer] = chosen.iter().map(|c| c.id).collect();

            let cap = self.params.max_degree(layer);
            for c in &chosen {
                let nb = c.id as usize;
                self.links[nb][layer].push(id);
                if self.links[nb][layer].len() > cap {
                    let base = data.row(nb);
                    let mut cands: Vec<Cand> = self.links[nb][layer]
                        .iter()
                        .map(|&o| Cand {
                            dist: metric.pth_power(base, data.row(o as usize)),
                            id: o,
                        })
                        .collect();
                    cands.sort_unstable();
                    let kept = self.select_neighbors(&cands, cap);
                    self.links[nb][layer] = kept.iter().map(|c| c.id).collect();
                }
            }
            entry = found;
        }

        if level > self.max_level {
            self.max_level = level;
            self.entry_point = id;
        }
    }

    /// Diversity heuristic: keep a candidate only if it is strictly closer to
    /// the base point than to every neighbor already kept, then top up from
    /// the rejected candidates in distance order. `cands` must be sorted.
    fn select_neighbors(&self, cands: &[Cand], m: usize) -> Vec<Cand> {
        let metric = self.params.metric;
        let mut kept: Vec<Cand> = Vec::with_capacity(m);
        let mut rejected = Vec::new();
        for &c in cands {
            if kept.len() >= m {
                break;
            }
            let v = self.data.row(c.id as usize);
            let diverse = kept
                .iter()
                .all(|s| c.dist < metric.pth_power(v, self.data.row(s.id as usize)));
            if diverse {
                kept.push(c);
            } else {
                rejected.push(c);
            }
        }
        for c in rejected {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    /// Best-first search of one layer; returns up to `ef` nodes ascending.
    fn search_layer(
        &self,
        q: &[f32],
        entry: &[Cand],
        ef: usize,
        layer: usize,
        visited: &mut Visited,
        evals: &mut u64,
    ) -> Vec<Cand> {
        let metric = self.params.metric;
        visited.clear();
        let mut frontier: BinaryHeap<Reverse<Cand>> = BinaryHeap::with_capacity(ef * 2);
        let mut best: BinaryHeap<Cand> = BinaryHeap::with_capacity(ef + 1);
        for &e in entry {
            if visited.insert(e.id) {
                frontier.push(Reverse(e));
                best.push(e);
                if best.len() > ef {
                    best.pop();
                }
            }
        }

        while let Some(Reverse(cur)) = frontier.pop() {
            if best.len() >= ef && cur > *best.peek().unwrap() {
                break;
            }
            for &nb in &self.links[cur.id as usize][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                *evals += 1;
                let c = Cand {
                    dist: metric.pth_power(q, self.data.row(nb as usize)),
                    id: nb,
                };
                if best.len() < ef || c < *best.peek().unwrap() {
                    frontier.push(Reverse(c));
                    best.push(c);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Approximate `t` nearest neighbors under the index metric, ascending.
    pub fn knn_search(&self, q: &[f32], t: usize, ef_search: usize) -> Result<Vec<ScoredId>> {
        self.count_distance_evals(q, t, ef_search).map(|(r, _)| r)
    }

    /// As [`knn_search`](Self::knn_search), also returning the number of
    /// base-metric distance evaluations performed.
    pub fn count_distance_evals(
        &self,
        q: &[f32],
        t: usize,
        ef_search: usize,
    ) -> Result<(Vec<ScoredId>, u64)> {
        if q.len() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                got: q.len(),
            });
        }
        check_finite(q, 0)?;
        if t == 0 {
            return Err(Error::param("t must be positive"));
        }
        if ef_search < t {
            return Err(Error::param(format!(
                "ef_search ({ef_search}) must be at least t ({t})"
            )));
        }

        let metric = self.params.metric;
        let mut visited = Visited::new(self.len());
        let mut evals = 1u64;
        let ep = self.entry_point;
        let mut entry = vec![Cand {
            dist: metric.pth_power(q, self.data.row(ep as usize)),
            id: ep,
        }];
        for layer in (1..=self.max_level).rev() {
            entry = self.search_layer(q, &entry, 1, layer, &mut visited, &mut evals);
        }
        let found = self.search_layer(q, &entry, ef_search, 0, &mut visited, &mut evals);
        let out = found
            .into_iter()
            .take(t)
            .map(|c| ScoredId::new(c.id, metric.root(c.dist)))
            .collect();
        Ok((out, evals))
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn metric(&self) -> MetricParam {
        self.params.metric
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn entry_point(&self) -> u32 {
        self.entry_point
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn level(&self, id: u32) -> usize {
        self.links[id as usize].len() - 1
    }

    /// Out-neighbors of `id` on `layer`; empty if the node is absent there.
    pub fn neighbors(&self, id: u32, layer: usize) -> &[u32] {
        self.links[id as usize]
            .get(layer)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Structural scan: layer nesting, degree caps, id ranges, entry point.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.len();
        let bad = |m: String| Err(Error::Snapshot(m));
        if n != self.data.len() {
            return bad(format!("{n} nodes for {} points", self.data.len()));
        }
        if self.level(self.entry_point) != self.max_level {
            return bad("entry point is not on the top layer".into());
        }
        for (id, layers) in self.links.iter().enumerate() {
            if layers.is_empty() || layers.len() - 1 > self.max_level {
                return bad(format!("node {id} has invalid level"));
            }
            for (layer, adj) in layers.iter().enumerate() {
                if adj.len() > self.params.max_degree(layer) {
                    return bad(format!("node {id} exceeds degree cap on layer {layer}"));
                }
                for &nb in adj {
                    if nb as usize == id {
                        return bad(format!("self-loop at node {id}"));
                    }
                    if nb as usize >= n {
                        return bad(format!("node {id} links to out-of-range id {nb}"));
                    }
                    if self.level(nb) < layer {
                        return bad(format!("node {id} links to {nb} absent on layer {layer}"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, Distribution};
    use crate::metrics::probe;
    use std::collections::{HashSet, VecDeque};

    fn brute(ds: &Dataset, q: &[f32], metric: MetricParam, k: usize) -> Vec<u32> {
        let mut all: Vec<(f64, u32)> = ds
            .rows()
            .enumerate()
            .map(|(i, r)| {
                let s: f64 = r
                    .iter()
                    .zip(q)
                    .map(|(a, b)| ((a - b) as f64).abs().powf(metric.p()))
                    .sum();
                (s, i as u32)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    fn uniform(n: usize, d: usize, seed: u64) -> Arc<Dataset> {
        Arc::new(gen_synthetic(n, d, Distribution::Uniform01, seed).unwrap())
    }

    #[test]
    fn params_validation() {
        assert!(HnswParams::new(MetricParam::L2)
            .with_m(1)
            .validate()
            .is_err());
        assert!(HnswParams::new(MetricParam::L2)
            .with_m(16)
            .with_ef_construction(8)
            .validate()
            .is_err());
        assert!(HnswParams::new(MetricParam::L2).validate().is_ok());
        let ds = uniform(10, 2, 0);
        assert!(HnswIndex::build(ds, HnswParams::new(MetricParam::L1).with_m(1)).is_err());
    }

    #[test]
    fn single_point() {
        let ds = uniform(1, 4, 0);
        let idx = HnswIndex::build(ds.clone(), HnswParams::new(MetricParam::L2)).unwrap();
        assert_eq!(idx.entry_point(), 0);
        assert!((0..=idx.max_level()).all(|l| idx.neighbors(0, l).is_empty()));
        let (res, nb) = idx.count_distance_evals(ds.row(0), 1, 1).unwrap();
        assert_eq!(res, vec![ScoredId::new(0, 0.0)]);
        assert_eq!(nb, 1);
    }

    #[test]
    fn small_graph_structure_and_connectivity() {
        let ds = uniform(100, 8, 1);
        let idx = HnswIndex::build(
            ds,
            HnswParams::new(MetricParam::L2)
                .with_m(8)
                .with_ef_construction(64),
        )
        .unwrap();
        idx.check_invariants().unwrap();
        assert!((0..100).all(|i| idx.neighbors(i, 0).len() <= 16));

        let mut seen = HashSet::from([idx.entry_point()]);
        let mut queue = VecDeque::from([idx.entry_point()]);
        while let Some(u) = queue.pop_front() {
            for &v in idx.neighbors(u, 0) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn build_is_deterministic() {
        let ds = uniform(300, 8, 2);
        let p = HnswParams::new(MetricParam::L1)
            .with_m(8)
            .with_ef_construction(40)
            .with_seed(5);
        let a = HnswIndex::build(ds.clone(), p).unwrap();
        let b = HnswIndex::build(ds, p).unwrap();
        assert_eq!(a.links, b.links);
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn search_argument_errors() {
        let ds = uniform(20, 3, 3);
        let idx = HnswIndex::build(
            ds,
            HnswParams::new(MetricParam::L2)
                .with_m(4)
                .with_ef_construction(8),
        )
        .unwrap();
        assert!(idx.knn_search(&[0.0; 3], 5, 4).is_err());
        assert!(matches!(
            idx.knn_search(&[0.0; 2], 1, 4),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(idx.knn_search(&[0.0, f32::NAN, 0.0], 1, 4).is_err());
    }

    #[test]
    fn self_queries_find_themselves() {
        let ds = uniform(2000, 16, 4);
        let params = HnswParams::new(MetricParam::L2)
            .with_m(16)
            .with_ef_construction(100);
        let idx = HnswIndex::build(ds.clone(), params).unwrap();
        let hits = (0..1000u32)
            .filter(|&i| {
                let r = idx.knn_search(ds.row(i as usize), 1, params.m).unwrap();
                r[0].id == i && r[0].dist == 0.0
            })
            .count();
        assert!(hits >= 990, "{hits}/1000");
    }

    #[test]
    fn exhaustive_search_matches_brute_force() {
        let ds = uniform(50, 4, 5);
        for metric in [MetricParam::L_HALF, MetricParam::L1, MetricParam::L2] {
            let idx = HnswIndex::build(
                ds.clone(),
                HnswParams::new(metric).with_m(4).with_ef_construction(16),
            )
            .unwrap();
            let q = [0.3f32, 0.6, 0.1, 0.9];
            let res = idx.knn_search(&q, 50, 50).unwrap();
            let ids: Vec<u32> = res.iter().map(|s| s.id).collect();
            assert_eq!(ids, brute(&ds, &q, metric, 50), "{metric}");
            for s in &res {
                let want = metric.distance(&q, ds.row(s.id as usize));
                assert!((s.dist - want).abs() <= 1e-5 * want.max(1.0));
            }
        }
    }

    #[test]
    fn recall_on_uniform_data_for_each_base_metric() {
        let ds = uniform(2000, 16, 6);
        let queries = gen_synthetic(100, 16, Distribution::Uniform01, 60).unwrap();
        for metric in [MetricParam::L_HALF, MetricParam::L1, MetricParam::L2] {
            let idx = HnswIndex::build(
                ds.clone(),
                HnswParams::new(metric).with_m(16).with_ef_construction(200),
            )
            .unwrap();
            let mut recall10 = 0.0;
            let mut recall50 = 0.0;
            for q in queries.rows() {
                let truth: HashSet<u32> = brute(&ds, q, metric, 50).into_iter().collect();
                let got = idx.knn_search(q, 50, 400).unwrap();
                assert!(got.windows(2).all(|w| w[0].dist <= w[1].dist));
                let ids: HashSet<u32> = got.iter().map(|s| s.id).collect();
                assert_eq!(ids.len(), 50);
                recall50 += ids.intersection(&truth).count() as f64 / 50.0;

                let truth10: HashSet<u32> = brute(&ds, q, metric, 10).into_iter().collect();
                let got10 = idx.knn_search(q, 10, 200).unwrap();
                recall10 += got10.iter().filter(|s| truth10.contains(&s.id)).count() as f64 / 10.0;
            }
            let (r10, r50) = (recall10 / 100.0, recall50 / 100.0);
            assert!(r10 >= 0.95, "{metric}: K=10 recall {r10}");
            assert!(r50 >= 0.95, "{metric}: t=50 recall {r50}");
        }
    }

    #[test]
    fn search_touches_only_the_index_metric_and_counts_every_eval() {
        let ds = uniform(500, 8, 7);
        for metric in [MetricParam::L_HALF, MetricParam::L1, MetricParam::L2] {
            let idx = HnswIndex::build(
                ds.clone(),
                HnswParams::new(metric).with_m(8).with_ef_construction(32),
            )
            .unwrap();
            probe::take();
            let (_, nb) = idx.count_distance_evals(ds.row(3), 20, 40).unwrap();
            let seen = probe::take();
            assert_eq!(seen, vec![(metric.p(), nb)]);

            let (_, again) = idx.count_distance_evals(ds.row(3), 20, 40).unwrap();
            assert_eq!(nb, again);
        }
    }

    #[test]
    fn base_metric_evals_grow_sublinearly_in_t() {
        let ds = Arc::new(gen_synthetic(100_000, 8, Distribution::Gaussian, 8).unwrap());
        let idx = HnswIndex::build(
            ds,
            HnswParams::new(MetricParam::L2)
                .with_m(16)
                .with_ef_construction(64),
        )
        .unwrap();
        let queries = gen_synthetic(50, 8, Distribution::Gaussian, 80).unwrap();
        let mean_evals = |t: usize| {
            queries
                .rows()
                .map(|q| idx.count_distance_evals(q, t, t).unwrap().1 as f64)
                .sum::<f64>()
                / queries.len() as f64
        };
        let (n100, n300) = (mean_evals(100), mean_evals(300));
        assert!(n300 / n100 < 3.0, "N_b(100) = {n100}, N_b(300) = {n300}");
    }
}
