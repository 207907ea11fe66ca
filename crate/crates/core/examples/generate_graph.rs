//! Sample a graph from the `fig1c` structure and report block statistics.
//!
//! cargo run --release --example generate_graph -- [n] [c] [eps] [seed]

use sbm_detect::{generate, ModelSpec, PartitionMode, Structure};

fn main() -> sbm_detect::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |k: usize, d: &str| args.get(k).cloned().unwrap_or_else(|| d.to_string());
    let n: usize = arg(0, "30000").parse().expect("n");
    let c: f64 = arg(1, "6").parse().expect("c");
    let eps: f64 = arg(2, "0.2").parse().expect("eps");
    let seed: u64 = arg(3, "1").parse().expect("seed");

    let spec = ModelSpec::new(Structure::preset("fig1c")?, n, c, eps)?;
    println!(
        "omega_in = {:.4e}, omega_out = {:.4e}, expected degree {:.3}",
        spec.affinity.omega_in,
        spec.affinity.omega_out,
        spec.expected_degree()
    );
    let (planted, graph) = generate(&spec, PartitionMode::ExactSizes, seed)?;
    println!("N = {}, edges = {}, mean degree = {:.4}", graph.n(), graph.num_edges(), graph.mean_degree());
    println!("block sizes: {:?}", planted.sizes());

    let q = spec.q();
    let mut counts = vec![0usize; q * q];
    for &(i, j) in graph.edges() {
        let (r, s) = (planted.labels[i], planted.labels[j]);
        counts[r * q + s] += 1;
        if r != s {
            counts[s * q + r] += 1;
        }
    }
    println!("edges between blocks (W entry in brackets):");
    for r in 0..q {
        let row: Vec<String> = (0..q)
            .map(|s| format!("{:>7} [{}]", counts[r * q + s], spec.w().get(r, s) as u8))
            .collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
