//! Enumerate regular module graphs and compare the second eigenvalue with
//! the edge-expansion (Cheeger) bounds.

use sbm_detect::threshold::{cheeger_bounds, enumerate_regular, second_eigenvalue, threshold_regular};

fn main() -> sbm_detect::Result<()> {
    for q in 2..=5 {
        let all = enumerate_regular(q);
        let mut tight = 0;
        for w in &all {
            let b = cheeger_bounds(w)?;
            assert!(b.contains(1e-9), "bounds violated for {:?}", w.rows());
            if (b.lambda2_normalized - b.upper).abs() < 1e-9 || (b.lambda2_normalized - b.lower).abs() < 1e-9 {
                tight += 1;
            }
        }
        println!("q = {q}: {} regular structures, {tight} touch a bound", all.len());
    }
    println!("\nq = 4 structures at c = 9:");
    for w in enumerate_regular(4) {
        let s = second_eigenvalue(&w)?;
        let b = cheeger_bounds(&w)?;
        let t = threshold_regular(&w, 9.0)?;
        let eps = t.epsilon_star.map_or("undetectable".to_string(), |e| format!("{e:.4}"));
        println!(
            "  a = {} |l2| = {:.3} h = {:.3} [{:.3}, {:.3}] eps* = {eps}  {:?}",
            s.a, s.lambda2_abs, b.h, b.lower, b.upper, w.rows()
        );
    }
    Ok(())
}
