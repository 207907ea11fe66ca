//! Transfer matrix at the factorized fixed point and its leading eigenvalue
//! as a function of the noise level.

use sbm_detect::threshold::{factorized_fixed_point, leading_real_eigenvalue, transfer_matrix};
use sbm_detect::Structure;

fn main() -> sbm_detect::Result<()> {
    let s = Structure::preset("fig1c")?;
    let (psi, k) = factorized_fixed_point(&s.w, &s.gamma_prior).expect("fig1c has a factorized point");
    println!("fixed point {psi:?}, psi W = {k} * 1");
    for eps in [0.05, 0.2, 0.42, 0.7] {
        let omega_bar = 1.0 / eps - 1.0;
        let t = transfer_matrix(&s.w, &psi, omega_bar);
        let nu = leading_real_eigenvalue(&t)?;
        println!("eps = {eps}: nu = {nu:.6} (closed form {:.6}), c* = 1/nu^2 = {:.4}", omega_bar / (2.0 + omega_bar), 1.0 / (nu * nu));
        for r in 0..t.q {
            let row: Vec<String> = (0..t.q).map(|c| format!("{:>9.5}", t.get(r, c))).collect();
            println!("    [{}]", row.join(" "));
        }
    }
    Ok(())
}
