//! Sampling planted partitions and sparse graphs from the block model.
//!
//! Edges are drawn block by block: for each unordered cluster pair the edge
//! count is Binomial(#pairs, ω), then that many distinct pairs are placed
//! uniformly. This has the same law as independent per-pair Bernoulli draws
//! and runs in expected `O(N + M)`.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Name of the generator recorded in output files.
pub const RNG_NAME: &str = "ChaCha8";

pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer; used to derive independent sub-seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simple undirected graph with a CSR adjacency.
///
/// Directed edge `p` is the CSR slot `p`: it runs from the vertex owning the
/// slot to its target; the reverse slot is the opposite direction. Slot
/// records are packed as `u32` so that BP touches one cache line per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    links: Vec<Link>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Link {
    source: u32,
    target: u32,
    reverse: u32,
}

impl Graph {
    /// Builds a graph from undirected pairs, rejecting self-loops, duplicates
    /// and out-of-range endpoints. Pairs are stored as `(min, max)`.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n > u32::MAX as usize {
            return Err(Error::InvalidGraph(format!("n = {n} exceeds the u32 vertex index range")));
        }
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a},{b}) has an endpoint outside [0, {n})"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({},{})", e.0, e.1)));
            }
            edges.push(e);
        }
        Self::from_simple_edges(n, edges)
    }

    fn from_simple_edges(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if 2 * edges.len() > u32::MAX as usize {
            return Err(Error::InvalidGraph(format!(
                "{} edges exceed the u32 slot index range",
                edges.len()
            )));
        }
        let mut degree = vec![0usize; n];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let m2 = offsets[n];
        let mut fill = offsets[..n].to_vec();
        let mut links = vec![Link::default(); m2];
        for &(a, b) in &edges {
            let pa = fill[a];
            let pb = fill[b];
            fill[a] += 1;
            fill[b] += 1;
            links[pa] = Link {
                source: a as u32,
                target: b as u32,
                reverse: pb as u32,
            };
            links[pb] = Link {
                source: b as u32,
                target: a as u32,
                reverse: pa as u32,
            };
        }
        Ok(Graph {
            n,
            edges,
            offsets,
            links,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_directed(&self) -> usize {
        self.links.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n as f64
    }

    /// CSR slots (directed edges) leaving `i`.
    #[inline]
    pub fn slots(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.links[self.slots(i)].iter().map(|l| l.target as usize)
    }

    #[inline]
    pub fn source(&self, p: usize) -> usize {
        self.links[p].source as usize
    }

    #[inline]
    pub fn target(&self, p: usize) -> usize {
        self.links[p].target as usize
    }

    #[inline]
    pub fn reverse(&self, p: usize) -> usize {
        self.links[p].reverse as usize
    }

    /// Hints the cache about slot `p`'s record.
    #[inline]
    pub(crate) fn prefetch_link(&self, p: usize) {
        prefetch(&self.links, p);
    }

    /// Hints the cache about the slot range of vertex `i`.
    #[inline]
    pub(crate) fn prefetch_vertex(&self, i: usize) {
        prefetch(&self.offsets, i);
    }

    /// Slot of directed edge `i → j`, if `i ~ j`.
    pub fn slot_of(&self, i: usize, j: usize) -> Option<usize> {
        self.slots(i).find(|&p| self.target(p) == j)
    }
}

/// Requests the cache line holding `data[index]`; a no-op off x86-64.
#[inline(always)]
pub(crate) fn prefetch<T>(data: &[T], index: usize) {
    #[cfg(target_arch = "x86_64")]
    if let Some(x) = data.get(index) {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        #[allow(unused_unsafe)]
        // SAFETY: prefetch never faults and the pointer is in bounds
        unsafe {
            _mm_prefetch::<_MM_HINT_T0>((x as *const T).cast::<i8>())
        };
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = (data, index);
}

/// Ground-truth cluster labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedPartition {
    pub q: usize,
    pub labels: Vec<usize>,
}

impl PlantedPartition {
    pub fn new(q: usize, labels: Vec<usize>) -> Result<Self> {
        if let Some(&label) = labels.iter().find(|&&l| l >= q) {
            return Err(Error::LabelOutOfRange { label, q });
        }
        Ok(PlantedPartition { q, labels })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.q];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Vertex lists per cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.q];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    /// Sizes `⌊γ_σ N⌋`, leftovers dealt to clusters in index order.
    ExactSizes,
    /// Each label drawn independently from the planted fractions.
    Multinomial,
}

pub fn sample_partition(spec: &ModelSpec, mode: PartitionMode, seed: u64) -> PlantedPartition {
    let q = spec.q();
    let n = spec.n;
    let gamma = spec.structure.gamma_planted.as_slice();
    let mut rng = rng_from_seed(seed);
    let labels = match mode {
        PartitionMode::ExactSizes => {
            let mut sizes: Vec<usize> = gamma.iter().map(|g| (g * n as f64).floor() as usize).collect();
            let assigned: usize = sizes.iter().sum();
            for k in 0..n.saturating_sub(assigned) {
                sizes[k % q] += 1;
            }
            let mut labels: Vec<usize> = sizes
                .iter()
                .enumerate()
                .flat_map(|(s, &size)| std::iter::repeat_n(s, size))
                .collect();
            labels.truncate(n);
            labels.shuffle(&mut rng);
            labels
        }
        PartitionMode::Multinomial => {
            let mut cumulative = Vec::with_capacity(q);
            let mut acc = 0.0;
            for g in gamma {
                acc += g;
                cumulative.push(acc);
            }
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random::<f64>() * acc;
                    cumulative.iter().position(|&c| u < c).unwrap_or(q - 1)
                })
                .collect()
        }
    };
    PlantedPartition { q, labels }
}

/// Samples edges for a given partition.
pub fn sample_graph(spec: &ModelSpec, partition: &PlantedPartition, seed: u64) -> Result<Graph> {
    let q = spec.q();
    if partition.q != q || partition.labels.len() != spec.n {
        return Err(Error::LengthMismatch(format!(
            "partition (q = {}, n = {}) does not match spec (q = {q}, n = {})",
            partition.q,
            partition.labels.len(),
            spec.n
        )));
    }
    let members = partition.members();
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::new();
    for r in 0..q {
        for s in r..q {
            let omega = spec.affinity.omega(spec.w().get(r, s));
            if omega > 1.0 {
                return Err(Error::InvalidParams(format!("omega = {omega} > 1 for block ({r},{s})")));
            }
            let (nr, ns) = (members[r].len() as u64, members[s].len() as u64);
            let pairs = if r == s { nr * nr.saturating_sub(1) / 2 } else { nr * ns };
            if pairs == 0 || omega == 0.0 {
                continue;
            }
            let count = Binomial::new(pairs, omega)
                .map_err(|e| Error::InvalidParams(e.to_string()))?
                .sample(&mut rng);
            place_block_edges(&members[r], &members[s], r == s, count, &mut rng, &mut edges)
                .map_err(|retries| Error::DenseBlock { r, s, retries })?;
        }
    }
    Graph::from_simple_edges(spec.n, edges)
}

fn place_block_edges(
    left: &[usize],
    right: &[usize],
    same: bool,
    count: u64,
    rng: &mut Rng64,
    out: &mut Vec<(usize, usize)>,
) -> std::result::Result<(), u64> {
    let max_draws = 100 * count;
    let mut draws = 0u64;
    let mut placed = HashSet::with_capacity(count as usize);
    while (placed.len() as u64) < count {
        if draws >= max_draws {
            return Err(max_draws);
        }
        draws += 1;
        let a = left[rng.random_range(0..left.len())];
        let b = right[rng.random_range(0..right.len())];
        if same && a == b {
            continue;
        }
        let e = (a.min(b), a.max(b));
        if placed.insert(e) {
            out.push(e);
        }
    }
    Ok(())
}

/// Partition and graph from one seed (sub-seeds derived with [`mix64`]).
pub fn generate(spec: &ModelSpec, mode: PartitionMode, seed: u64) -> Result<(PlantedPartition, Graph)> {
    let partition = sample_partition(spec, mode, mix64(seed));
    let graph = sample_graph(spec, &partition, mix64(seed ^ 0x5EED_0F_ED6E5))?;
    Ok((partition, graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IndicatorMatrix, Structure};

    fn community(q: usize, n: usize, c: f64, eps: f64) -> ModelSpec {
        ModelSpec::new(Structure::uniform(IndicatorMatrix::identity(q).unwrap()), n, c, eps).unwrap()
    }

    fn assert_simple(g: &Graph) {
        let mut seen = HashSet::new();
        for &(a, b) in g.edges() {
            assert!(a < b && b < g.n());
            assert!(seen.insert((a, b)));
        }
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(Graph::new(3, [(0, 0)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        let g = Graph::new(3, [(2, 0), (1, 2)]).unwrap();
        assert_eq!(g.edges(), &[(0, 2), (1, 2)]);
        assert_eq!(g.degree(2), 2);
        for p in 0..g.num_directed() {
            assert_eq!(g.reverse(g.reverse(p)), p);
            assert_eq!(g.source(g.reverse(p)), g.target(p));
        }
    }

    #[test]
    fn exact_sizes_small() {
        let spec = community(2, 4, 1.0, 1.0);
        let p = sample_partition(&spec, PartitionMode::ExactSizes, 1);
        assert_eq!(p.sizes(), vec![2, 2]);
        let spec = community(2, 5, 1.0, 1.0);
        let p = sample_partition(&spec, PartitionMode::ExactSizes, 1);
        assert_eq!(p.sizes(), vec![3, 2]);
    }

    #[test]
    fn multinomial_concentrates() {
        // 300 binomial sizes: about 0.8 are expected beyond 3σ, none beyond 4.5σ
        let spec = community(3, 30_000, 6.0, 0.5);
        let sigma = (30_000.0 * (1.0 / 3.0) * (2.0 / 3.0f64)).sqrt();
        let mut beyond_three = 0;
        let mut total = 0usize;
        for seed in 0..100 {
            let p = sample_partition(&spec, PartitionMode::Multinomial, seed);
            for size in p.sizes() {
                let z = (size as f64 - 10_000.0).abs() / sigma;
                assert!(z <= 4.5, "size {size} seed {seed}");
                beyond_three += usize::from(z > 3.0);
                total += size;
            }
        }
        assert_eq!(total, 3_000_000);
        assert!(beyond_three <= 4, "{beyond_three} sizes beyond 3 sigma");
    }

    #[test]
    fn uniform_graph_edge_count() {
        let spec = community(2, 1000, 4.0, 1.0);
        let mut total = 0usize;
        for seed in 0..50 {
            let (_, g) = generate(&spec, PartitionMode::ExactSizes, seed).unwrap();
            assert_simple(&g);
            total += g.num_edges();
        }
        let mean = total as f64 / 50.0;
        assert!((mean - 2000.0).abs() / 2000.0 < 0.02, "mean edges {mean}");
    }

    #[test]
    fn no_cross_edges_without_noise() {
        let mut spec = community(2, 2000, 5.0, 0.5);
        spec.affinity.omega_out = 0.0;
        let (p, g) = generate(&spec, PartitionMode::ExactSizes, 3).unwrap();
        assert!(g.num_edges() > 0);
        for &(a, b) in g.edges() {
            assert_eq!(p.labels[a], p.labels[b]);
        }
    }

    #[test]
    fn deterministic() {
        let spec = community(3, 3000, 6.0, 0.3);
        let a = generate(&spec, PartitionMode::ExactSizes, 99).unwrap();
        let b = generate(&spec, PartitionMode::ExactSizes, 99).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec, PartitionMode::ExactSizes, 100).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn dense_block_errors() {
        let mut spec = community(2, 40, 1.0, 1.0);
        spec.affinity.omega_in = 1.0;
        spec.affinity.omega_out = 1.0;
        // every pair present; rejection sampling cannot finish within the cap
        // for the last few pairs with high probability, or it succeeds. Either
        // way the result must be simple.
        match generate(&spec, PartitionMode::ExactSizes, 5) {
            Ok((_, g)) => {
                assert_simple(&g);
                assert_eq!(g.num_edges(), 40 * 39 / 2);
            }
            Err(Error::DenseBlock { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn fig1c_mean_degree() {
        let spec = ModelSpec::new(Structure::preset("fig1c").unwrap(), 30_000, 6.0, 0.2).unwrap();
        let mut sum = 0.0;
        for seed in 0..10 {
            let (_, g) = generate(&spec, PartitionMode::ExactSizes, seed).unwrap();
            assert_simple(&g);
            sum += g.mean_degree();
        }
        let mean = sum / 10.0;
        assert!((mean - 6.0).abs() / 6.0 < 0.01, "mean degree {mean}");
    }
}
