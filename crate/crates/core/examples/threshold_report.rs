//! Detectability thresholds of the built-in structures over a range of
//! average degrees.
//!
//! cargo run --example threshold_report -- [structure...]

use sbm_detect::threshold::analyze;
use sbm_detect::Structure;

fn main() -> sbm_detect::Result<()> {
    let mut names: Vec<String> = std::env::args().skip(1).collect();
    if names.is_empty() {
        names = ["community:2", "community:4", "fig1c", "demo-regular-q3"]
            .map(String::from)
            .to_vec();
    }
    for name in &names {
        let structure = Structure::preset(name)?;
        println!("{name}: spectrum {:?}", analyze(&structure, 4.0)?.spectrum);
        for c in [2.0, 4.0, 6.0, 9.0, 16.0] {
            let r = analyze(&structure, c)?;
            match r.epsilon_star {
                Some(eps) => println!("  c = {c:>4}: eps* = {eps:.6} ({})", r.method),
                None => println!("  c = {c:>4}: {} ({})", r.status, r.method),
            }
        }
    }
    Ok(())
}
