//! Recover a planted partition with EM + belief propagation.
//!
//! cargo run --release --example infer_partition -- [eps]

use sbm_detect::eval::chance_baseline;
use sbm_detect::sweep::{run_cell, InferenceSettings};
use sbm_detect::{ModelSpec, PartitionMode, Structure};

fn main() -> sbm_detect::Result<()> {
    let eps: f64 = std::env::args().nth(1).map(|s| s.parse().expect("eps")).unwrap_or(0.15);
    let spec = ModelSpec::new(Structure::preset("fig1c")?, 20_000, 6.0, eps)?;
    let settings = InferenceSettings {
        learn_gamma: false,
        em_max_iters: 10,
        bp_max_sweeps: 300,
        ..InferenceSettings::default()
    };
    let (_, run) = run_cell(&spec, PartitionMode::ExactSizes, &settings, 7)?;

    for r in &run.outcome.history {
        println!(
            "em {:>2}: omega_in {:.4e} omega_out {:.4e} bp sweeps {:>4} converged {}",
            r.iter, r.omega_in_hat, r.omega_out_hat, r.bp_sweeps, r.bp_converged
        );
    }
    let fitted = &run.outcome.model.affinity;
    println!("true eps {eps:.3}, fitted eps {:.3}", fitted.epsilon);
    println!(
        "overlap {:.4} (chance {:.4})",
        run.overlap.unwrap(),
        chance_baseline(spec.structure.gamma_planted.as_slice())
    );
    Ok(())
}
