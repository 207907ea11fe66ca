//! Independent oracles shared by the integration tests and the acceptance
//! harness: brute-force posteriors, pair counting and small graph builders.
#![allow(dead_code)]

use rand::Rng;
use sbm_detect::bp::{self, BpSettings, InitMode};
use sbm_detect::em::m_step;
use sbm_detect::generator::{rng_from_seed, Graph};
use sbm_detect::model::AffinityParams;
use sbm_detect::{generate, ClusterDistribution, IndicatorMatrix, InferenceModel, ModelSpec, PartitionMode, PlantedPartition};

/// Uniform random recursive tree on `n` vertices.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> Graph {
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    Graph::new(n, edges).unwrap()
}

/// Random symmetric 0/1 matrix with at least one nonzero entry.
pub fn random_indicator(q: usize, rng: &mut impl Rng) -> IndicatorMatrix {
    loop {
        let mut rows = vec![vec![0u8; q]; q];
        for r in 0..q {
            for s in r..q {
                let v = rng.random_bool(0.5) as u8;
                rows[r][s] = v;
                rows[s][r] = v;
            }
        }
        if let Ok(w) = IndicatorMatrix::new(rows) {
            return w;
        }
    }
}

pub fn random_distribution(q: usize, rng: &mut impl Rng) -> ClusterDistribution {
    let v: Vec<f64> = (0..q).map(|_| rng.random_range(0.1..1.0)).collect();
    ClusterDistribution::normalized(v).unwrap()
}

/// Exact posterior marginals of `P(σ) ∝ Π_i γ_{σ_i} Π_{(i,j)∈E} ω_{σ_i σ_j}`
/// by enumerating all `q^n` labelings.
pub fn brute_force_marginals(graph: &Graph, model: &InferenceModel) -> Vec<f64> {
    let (n, q) = (graph.n(), model.q());
    let gamma = model.prior.as_slice();
    let mut marg = vec![0.0; n * q];
    let mut labels = vec![0usize; n];
    let total = q.pow(n as u32);
    let mut z = 0.0;
    for code in 0..total {
        let mut x = code;
        for l in labels.iter_mut() {
            *l = x % q;
            x /= q;
        }
        let mut weight: f64 = labels.iter().map(|&s| gamma[s]).product();
        for &(i, j) in graph.edges() {
            weight *= model.affinity.omega(model.w.get(labels[i], labels[j]));
        }
        z += weight;
        for (i, &s) in labels.iter().enumerate() {
            marg[i * q + s] += weight;
        }
    }
    marg.iter_mut().for_each(|m| *m /= z);
    marg
}

/// Largest deviation between BP (edge factors only) and the exact
/// posterior on one random tree instance derived from `seed`.
pub fn tree_instance_error(seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(2..=10);
    let q = rng.random_range(2..=3);
    let eps = rng.random_range(0.1..0.9);
    let graph = random_tree(n, &mut rng);
    let w = random_indicator(q, &mut rng);
    let prior = random_distribution(q, &mut rng);
    let omega_in = rng.random_range(0.05..1.0);
    let model = InferenceModel {
        w,
        prior,
        affinity: AffinityParams::from_omegas(omega_in, eps * omega_in).unwrap(),
    };
    let settings = BpSettings {
        init: InitMode::Random,
        tol: 1e-14,
        max_sweeps: 200,
        external_field: false,
        seed,
        ..BpSettings::default()
    };
    let (state, report) = bp::run(&graph, &model, &settings, None).unwrap();
    assert!(report.converged, "BP did not converge on a tree: {report:?}");
    let exact = brute_force_marginals(&graph, &model);
    state
        .marginals()
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// `(Σ_{i<j} W[σi,σj], edges with W[σi,σj] = 1)` by direct enumeration.
pub fn brute_force_pair_counts(graph: &Graph, labels: &[usize], w: &IndicatorMatrix) -> (f64, f64) {
    let n = labels.len();
    let mut pairs = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            pairs += w.value(labels[i], labels[j]);
        }
    }
    let edges = graph
        .edges()
        .iter()
        .filter(|&&(i, j)| w.get(labels[i], labels[j]))
        .count() as f64;
    (pairs, edges)
}

/// M-step with posteriors clamped to the planted labels.
pub fn clamped_m_step(spec: &ModelSpec, seed: u64) -> (Graph, PlantedPartition, sbm_detect::em::MStep) {
    let (planted, graph) = generate(spec, PartitionMode::ExactSizes, seed).unwrap();
    let settings = BpSettings {
        init: InitMode::Planted,
        noise: 0.0,
        ..BpSettings::default()
    };
    let state = sbm_detect::bp::MessageState::init(&graph, &spec.inference_model(), &settings, Some(&planted)).unwrap();
    let est = m_step(&graph, &state).unwrap();
    (graph, planted, est)
}

/// Upper `p` quantile of χ²(k), Wilson–Hilferty approximation; `z` is the
/// standard normal quantile.
pub fn chi_square_quantile(k: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + z * a.sqrt()).powi(3)
}
