//! Thresholds computed directly and in the complementary parametrization
//! (`W -> 11ᵀ - W`, `ε -> 1/ε`) agree.

use sbm_detect::threshold::{enumerate_regular, threshold_bisection, threshold_bisection_flipped, threshold_regular};
use sbm_detect::ClusterDistribution;

fn main() -> sbm_detect::Result<()> {
    let c = 9.0;
    for q in 2..=4 {
        let gamma = ClusterDistribution::uniform(q);
        for w in enumerate_regular(q) {
            if w.regular_degree() == Some(q) {
                continue;
            }
            let direct = threshold_bisection(&w, &gamma, c)?.epsilon_star;
            let flipped = threshold_bisection_flipped(&w, &gamma, c)?.epsilon_star;
            let closed = threshold_regular(&w, c)?.epsilon_star;
            println!("{:?}: direct {direct:?} flipped {flipped:?} closed form {closed:?}", w.rows());
        }
    }
    Ok(())
}
