mod common;

use std::collections::HashSet;

use sbm_detect::generator::{sample_graph, PlantedPartition};
use sbm_detect::io::parse_structure_json;
use sbm_detect::{generate, ModelSpec, PartitionMode, Structure};

#[test]
fn degree_and_simplicity_at_scale() {
    let spec = ModelSpec::new(Structure::preset("fig1c").unwrap(), 30_000, 6.0, 0.2).unwrap();
    let mut total = 0.0;
    for seed in 0..10 {
        let (_, graph) = generate(&spec, PartitionMode::ExactSizes, seed).unwrap();
        let mut seen = HashSet::new();
        for &(i, j) in graph.edges() {
            assert_ne!(i, j);
            assert!(seen.insert((i.min(j), i.max(j))), "duplicate edge {i}-{j}");
        }
        total += graph.mean_degree();
    }
    let mean = total / 10.0;
    assert!((mean - 6.0).abs() < 0.06, "mean degree {mean}");
}

/// Edge counts per block pair, pooled over many seeds on a fixed partition,
/// against their binomial expectations.
#[test]
fn block_pair_counts_fit_expectation() {
    let structure = parse_structure_json(
        r#"{"q": 3, "W": [[1,0,1],[0,1,0],[1,0,0]], "gamma_planted": [0.2, 0.5, 0.3]}"#,
    )
    .unwrap();
    let spec = ModelSpec::new(structure, 600, 5.0, 0.25).unwrap();
    let labels: Vec<usize> = (0..600).map(|i| if i < 120 { 0 } else if i < 420 { 1 } else { 2 }).collect();
    let planted = PlantedPartition::new(3, labels.clone()).unwrap();
    let sizes = [120.0, 300.0, 180.0];
    let seeds = 200;
    let mut counts = [[0.0f64; 3]; 3];
    for seed in 0..seeds {
        let graph = sample_graph(&spec, &planted, seed).unwrap();
        for &(i, j) in graph.edges() {
            let (r, s) = (labels[i].min(labels[j]), labels[i].max(labels[j]));
            counts[r][s] += 1.0;
        }
    }
    let mut chi2 = 0.0;
    let mut cells = 0.0;
    for r in 0..3 {
        for s in r..3 {
            let pairs = if r == s { sizes[r] * (sizes[r] - 1.0) / 2.0 } else { sizes[r] * sizes[s] };
            let p = spec.affinity.omega(spec.w().get(r, s));
            let mean = seeds as f64 * pairs * p;
            let var = mean * (1.0 - p);
            chi2 += (counts[r][s] - mean).powi(2) / var;
            cells += 1.0;
        }
    }
    let limit = common::chi_square_quantile(cells, 3.09);
    assert!(chi2 < limit, "chi2 = {chi2} over {cells} cells, limit {limit}");
}

/// Relabeling clusters together with W and γ gives the same block-pair
/// statistics: vertex labels carry no information beyond the structure.
#[test]
fn multinomial_labels_are_exchangeable() {
    let structure = parse_structure_json(
        r#"{"q": 3, "W": [[1,0,1],[0,1,0],[1,0,0]], "gamma_planted": [0.2, 0.5, 0.3]}"#,
    )
    .unwrap();
    let spec = ModelSpec::new(structure, 600, 5.0, 0.25).unwrap();
    let gamma = [0.2, 0.5, 0.3];
    let seeds = 200u64;
    // label frequencies for a handful of fixed vertices
    let probe = [0usize, 1, 299, 300, 599];
    let mut counts = vec![[0.0f64; 3]; probe.len()];
    for seed in 0..seeds {
        let (planted, _) = generate(&spec, PartitionMode::Multinomial, seed).unwrap();
        for (k, &v) in probe.iter().enumerate() {
            counts[k][planted.labels[v]] += 1.0;
        }
    }
    let mut chi2 = 0.0;
    for row in &counts {
        for s in 0..3 {
            let e = seeds as f64 * gamma[s];
            chi2 += (row[s] - e).powi(2) / e;
        }
    }
    let df = (probe.len() * 2) as f64;
    let limit = common::chi_square_quantile(df, 3.09);
    assert!(chi2 < limit, "chi2 = {chi2}, limit {limit}");
}

#[test]
fn same_seed_same_graph() {
    let spec = ModelSpec::new(Structure::preset("demo-regular-q3").unwrap(), 3000, 5.0, 0.1).unwrap();
    let a = generate(&spec, PartitionMode::Multinomial, 17).unwrap();
    let b = generate(&spec, PartitionMode::Multinomial, 17).unwrap();
    let c = generate(&spec, PartitionMode::Multinomial, 18).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.edges(), b.1.edges());
    assert_ne!(a.1.edges(), c.1.edges());
}
