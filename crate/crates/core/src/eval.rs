//! Comparing inferred assignments with the planted partition.

use crate::error::{Error, Result};

/// `counts[r][s]` = vertices with true label `r` assigned to `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    q: usize,
    counts: Vec<usize>,
    total: usize,
}

impl ConfusionMatrix {
    pub fn new(truth: &[usize], assigned: &[usize], q: usize) -> Result<Self> {
        if truth.len() != assigned.len() {
            return Err(Error::LengthMismatch(format!(
                "{} true labels vs {} assignments",
                truth.len(),
                assigned.len()
            )));
        }
        let mut counts = vec![0usize; q * q];
        for (&t, &a) in truth.iter().zip(assigned) {
            for label in [t, a] {
                if label >= q {
                    return Err(Error::LabelOutOfRange { label, q });
                }
            }
            counts[t * q + a] += 1;
        }
        Ok(ConfusionMatrix {
            q,
            counts,
            total: truth.len(),
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, truth: usize, assigned: usize) -> usize {
        self.counts[truth * self.q + assigned]
    }

    /// Largest `Σ_r counts[r][π(r)]` over permutations `π`.
    pub fn best_agreement(&self) -> usize {
        let weights: Vec<i64> = self.counts.iter().map(|&c| c as i64).collect();
        max_weight_assignment(&weights, self.q)
            .iter()
            .enumerate()
            .map(|(r, &s)| self.get(r, s))
            .sum()
    }
}

/// Permutation `π` maximizing `Σ_r w[r][π(r)]` for a square matrix, via the
/// O(q³) Hungarian method with potentials (run on negated weights).
pub fn max_weight_assignment(weights: &[i64], q: usize) -> Vec<usize> {
    assert_eq!(weights.len(), q * q);
    let cost = |r: usize, s: usize| -weights[r * q + s];
    // 1-based arrays; column 0 is the virtual start
    let mut u = vec![0i64; q + 1];
    let mut v = vec![0i64; q + 1];
    let mut owner = vec![0usize; q + 1];
    let mut way = vec![0usize; q + 1];
    for row in 1..=q {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut min_v = vec![i64::MAX; q + 1];
        let mut used = vec![false; q + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = i64::MAX;
            let mut col1 = 0usize;
            for col in 1..=q {
                if used[col] {
                    continue;
                }
                let reduced = cost(r0 - 1, col - 1) - u[r0] - v[col];
                if reduced < min_v[col] {
                    min_v[col] = reduced;
                    way[col] = col0;
                }
                if min_v[col] < delta {
                    delta = min_v[col];
                    col1 = col;
                }
            }
            for col in 0..=q {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_v[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; q];
    for col in 1..=q {
        perm[owner[col] - 1] = col - 1;
    }
    perm
}

/// Argmax of each marginal; ties go to the lowest label.
pub fn hard_assign(marginals: &[f64], q: usize) -> Vec<usize> {
    hard_assign_with_resolution(marginals, q, 0.0)
}

/// Argmax where components within `resolution` of the row maximum count as
/// tied, again resolved toward the lowest label. Iterative solvers leave
/// residuals of the order of their tolerance; at an uninformative fixed point
/// those residuals are all that separates the components, and reading an
/// assignment off them is reading noise.
pub fn hard_assign_with_resolution(marginals: &[f64], q: usize, resolution: f64) -> Vec<usize> {
    marginals
        .chunks_exact(q)
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter().position(|&x| x >= max - resolution).unwrap_or(0)
        })
        .collect()
}

/// Fraction of vertices labeled correctly under the best relabeling.
pub fn overlap(truth: &[usize], assigned: &[usize], q: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::LengthMismatch("empty labelings".into()));
    }
    let confusion = ConfusionMatrix::new(truth, assigned, q)?;
    Ok(confusion.best_agreement() as f64 / confusion.total() as f64)
}

/// Overlap obtained by labeling everyone with the most common true group.
pub fn chance_baseline(gamma: &[f64]) -> f64 {
    gamma.iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn permutations(q: usize) -> Vec<Vec<usize>> {
        if q == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(q - 1) {
            for pos in 0..=p.len() {
                let mut next = p.clone();
                next.insert(pos, q - 1);
                out.push(next);
            }
        }
        out
    }

    fn brute_force_overlap(truth: &[usize], assigned: &[usize], q: usize) -> f64 {
        permutations(q)
            .iter()
            .map(|perm| truth.iter().zip(assigned).filter(|&(&t, &a)| perm[t] == a).count())
            .max()
            .unwrap() as f64
            / truth.len() as f64
    }

    #[test]
    fn examples() {
        assert_eq!(overlap(&[0, 0, 1, 1], &[1, 1, 0, 0], 2).unwrap(), 1.0);
        assert_eq!(overlap(&[0, 1, 2, 0], &[0, 0, 0, 0], 3).unwrap(), 0.5);
        assert!(matches!(
            overlap(&[0, 1], &[0, 1, 1], 2),
            Err(Error::LengthMismatch(_))
        ));
        assert!(matches!(
            overlap(&[0, 3], &[0, 1], 3),
            Err(Error::LabelOutOfRange { label: 3, q: 3 })
        ));
        assert_eq!(chance_baseline(&[0.25, 0.5, 0.25]), 0.5);
        assert_eq!(hard_assign(&[0.5, 0.5, 0.2, 0.8], 2), vec![0, 1]);
        assert_eq!(hard_assign(&[0.2, 0.5, 0.3], 3), vec![1]);
        assert_eq!(hard_assign(&[1.0 / 3.0; 6], 3), vec![0, 0]);
        assert_eq!(hard_assign(&[0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3), vec![1, 2]);
        let near_uniform = [0.333_333, 0.333_334, 0.333_333];
        assert_eq!(hard_assign(&near_uniform, 3), vec![1]);
        assert_eq!(hard_assign_with_resolution(&near_uniform, 3, 1e-5), vec![0]);
        assert_eq!(hard_assign_with_resolution(&[0.2, 0.5, 0.3], 3, 1e-5), vec![1]);
    }

    #[test]
    fn hungarian_matches_brute_force_on_fixed_instances() {
        let mut state = 0x1234_5678_u64;
        let mut next = move || {
            state = crate::generator::mix64(state);
            state
        };
        for _ in 0..500 {
            let q = 2 + (next() % 4) as usize;
            let n = 1 + (next() % 40) as usize;
            let truth: Vec<usize> = (0..n).map(|_| (next() % q as u64) as usize).collect();
            let assigned: Vec<usize> = (0..n).map(|_| (next() % q as u64) as usize).collect();
            assert_eq!(
                overlap(&truth, &assigned, q).unwrap(),
                brute_force_overlap(&truth, &assigned, q)
            );
        }
    }

    proptest! {
        #[test]
        fn overlap_in_unit_interval_and_relabel_invariant(
            q in 2usize..6,
            pairs in prop::collection::vec((0usize..6, 0usize..6), 1..60),
            shift in 0usize..6,
        ) {
            let truth: Vec<usize> = pairs.iter().map(|p| p.0 % q).collect();
            let assigned: Vec<usize> = pairs.iter().map(|p| p.1 % q).collect();
            let o = overlap(&truth, &assigned, q).unwrap();
            // some cyclic relabeling matches at least n/q vertices
            prop_assert!(o >= 1.0 / q as f64 - 1e-12 && o <= 1.0);
            let relabeled: Vec<usize> = assigned.iter().map(|&a| (a + shift) % q).collect();
            prop_assert_eq!(o, overlap(&truth, &relabeled, q).unwrap());
            prop_assert_eq!(overlap(&truth, &truth, q).unwrap(), 1.0);
        }
    }
}
