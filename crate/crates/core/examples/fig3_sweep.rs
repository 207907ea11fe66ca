//! Overlap versus noise on the `fig1c` structure with the prior fixed.
//! Defaults to a reduced run; pass `full` for the complete preset.
//!
//! cargo run --release --example fig3_sweep -- [full] [out.csv]

use std::path::PathBuf;

use sbm_detect::sweep::{run_sweep, write_outputs, EpsilonGrid, SweepConfig};
use sbm_detect::threshold::analyze;
use sbm_detect::Structure;

fn main() -> sbm_detect::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut config = SweepConfig::preset("fig3")?;
    if !args.iter().any(|a| a == "full") {
        config.n = 5000;
        config.samples = 3;
        config.epsilon_grid = EpsilonGrid::Linear { start: 0.1, stop: 0.7, count: 7 };
    }
    let out = args
        .iter()
        .find(|a| a.ends_with(".csv"))
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fig3.csv"));

    let eps_star = analyze(&Structure::preset("fig1c")?, 6.0)?.epsilon_star;
    println!("predicted threshold at c = 6: {eps_star:?}");
    let result = run_sweep(&config)?;
    for row in &result.summary {
        println!(
            "eps {:.3}: overlap {:.4} ± {:.4} ({} converged)",
            row.epsilon,
            row.mean_overlap.unwrap_or(f64::NAN),
            row.std_overlap.unwrap_or(f64::NAN),
            row.n_converged
        );
    }
    let files = write_outputs(&config, &result, &out)?;
    println!("wrote {}, {}, {}", files.records.display(), files.summary.display(), files.plot.display());
    Ok(())
}
