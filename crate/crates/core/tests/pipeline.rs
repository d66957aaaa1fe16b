use std::sync::Arc;

use uhnsw::{
    brute_force_knn, gen_synthetic, recall, Distribution, HnswIndex, HnswParams, MetricParam,
    QueryTuple, Uhnsw, UhnswParams,
};

#[test]
fn snapshot_reload_answers_identically() {
    let data = Arc::new(gen_synthetic(1200, 10, Distribution::Gaussian, 11).unwrap());
    let params = |m| {
        HnswParams::new(m)
            .with_m(12)
            .with_ef_construction(100)
            .with_seed(4)
    };
    let lo = HnswIndex::build(data.clone(), params(MetricParam::L1)).unwrap();
    let hi = HnswIndex::build(data.clone(), params(MetricParam::L2)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g1.idx");
    lo.save(&path).unwrap();
    let reloaded = HnswIndex::load(&path, data.clone()).unwrap();

    let queries = gen_synthetic(30, 10, Distribution::Gaussian, 12).unwrap();
    let u = Uhnsw::new(
        lo,
        hi,
        UhnswParams {
            t: 150,
            ef_search: 200,
            ..UhnswParams::default()
        },
    )
    .unwrap();
    let hi2 = HnswIndex::build(data.clone(), params(MetricParam::L2)).unwrap();
    let u2 = Uhnsw::new(reloaded, hi2, *u.params()).unwrap();

    let mut total = 0.0;
    for q in queries.rows() {
        let qt = QueryTuple::new(q.to_vec(), 0.8, 10).unwrap();
        let a = u.query(&qt).unwrap();
        assert_eq!(a.ids(), u2.query(&qt).unwrap().ids());
        let truth: Vec<u32> = brute_force_knn(&data, q, qt.p, 10)
            .unwrap()
            .iter()
            .map(|s| s.id)
            .collect();
        total += recall(&a.ids(), &truth).unwrap();
    }
    assert!(total / 30.0 >= 0.9, "recall {}", total / 30.0);
}
