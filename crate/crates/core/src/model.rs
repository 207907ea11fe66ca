//! Domain types for the restricted stochastic block model.
//!
//! The affinity matrix is two-level: `ω = (ω_in − ω_out)·W + ω_out·11ᵀ`
//! where `W` is a symmetric 0/1 [`IndicatorMatrix`]. Everything here is
//! immutable after construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted noise strength. `ε = 0` makes `ω̄ = 1/ε − 1` infinite.
pub const MIN_EPSILON: f64 = 1e-6;

const SIMPLEX_TOL: f64 = 1e-12;

/// Symmetric 0/1 matrix marking densely connected cluster pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndicatorMatrix {
    q: usize,
    entries: Vec<u8>,
}

impl IndicatorMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let q = rows.len();
        if q < 2 {
            return Err(Error::InvalidStructure(format!("need q >= 2, got {q}")));
        }
        let mut entries = Vec::with_capacity(q * q);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != q {
                return Err(Error::InvalidStructure(format!(
                    "row {r} has {} entries, expected {q}",
                    row.len()
                )));
            }
            for (s, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::InvalidStructure(format!(
                        "entry ({r},{s}) = {v} is not 0 or 1"
                    )));
                }
                entries.push(v);
            }
        }
        let w = IndicatorMatrix { q, entries };
        for r in 0..q {
            for s in (r + 1)..q {
                if w.get(r, s) != w.get(s, r) {
                    return Err(Error::InvalidStructure(format!(
                        "not symmetric at ({r},{s})"
                    )));
                }
            }
        }
        Ok(w)
    }

    /// Community structure `W = I_q`.
    pub fn identity(q: usize) -> Result<Self> {
        Self::new(
            (0..q)
                .map(|r| (0..q).map(|s| u8::from(r == s)).collect())
                .collect(),
        )
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn get(&self, r: usize, s: usize) -> bool {
        self.entries[r * self.q + s] == 1
    }

    #[inline]
    pub fn value(&self, r: usize, s: usize) -> f64 {
        f64::from(self.entries[r * self.q + s])
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.entries.chunks(self.q).map(<[u8]>::to_vec).collect()
    }

    /// Dense row-major copy as floats.
    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&v| f64::from(v)).collect()
    }

    /// The flipped matrix `11ᵀ − W`.
    pub fn flip(&self) -> Self {
        IndicatorMatrix {
            q: self.q,
            entries: self.entries.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.entries
            .chunks(self.q)
            .map(|row| row.iter().map(|&v| usize::from(v)).sum())
            .collect()
    }

    /// Common row sum `a` when the module graph is regular.
    pub fn regular_degree(&self) -> Option<usize> {
        let sums = self.row_sums();
        let a = sums[0];
        sums.iter().all(|&s| s == a).then_some(a)
    }

    /// `x W y ᵀ` by explicit double sum.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut total = 0.0;
        for r in 0..self.q {
            for s in 0..self.q {
                if self.get(r, s) {
                    total += x[r] * y[s];
                }
            }
        }
        total
    }

    /// Row-vector product `out = x W`.
    #[inline]
    pub fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        let q = self.q;
        out[..q].fill(0.0);
        for (r, &xr) in x.iter().enumerate().take(q) {
            let row = &self.entries[r * q..(r + 1) * q];
            for (o, &w) in out.iter_mut().zip(row) {
                if w == 1 {
                    *o += xr;
                }
            }
        }
    }

    /// `W` with rows and columns relabeled: entry `(perm[r], perm[s])` of the
    /// result equals entry `(r, s)` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let q = self.q;
        let mut entries = vec![0u8; q * q];
        for r in 0..q {
            for s in 0..q {
                entries[perm[r] * q + perm[s]] = self.entries[r * q + s];
            }
        }
        IndicatorMatrix { q, entries }
    }
}

impl Serialize for IndicatorMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IndicatorMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<u8>>::deserialize(deserializer)?;
        IndicatorMatrix::new(rows).map_err(serde::de::Error::custom)
    }
}

/// Probability vector over the `q` clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDistribution(Vec<f64>);

impl ClusterDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("bad weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(ClusterDistribution(weights))
    }

    /// Normalizes nonnegative weights onto the simplex.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "cannot normalize {weights:?}"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(ClusterDistribution(weights))
    }

    pub fn uniform(q: usize) -> Self {
        ClusterDistribution(vec![1.0 / q as f64; q])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.0.len() as f64;
        self.0.iter().all(|g| (g - u).abs() <= SIMPLEX_TOL)
    }
}

impl std::ops::Index<usize> for ClusterDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Serialize for ClusterDistribution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClusterDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let w = Vec::<f64>::deserialize(deserializer)?;
        ClusterDistribution::new(w).map_err(serde::de::Error::custom)
    }
}

/// Two-level connection probabilities and the derived noise coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityParams {
    pub omega_in: f64,
    pub omega_out: f64,
    pub epsilon: f64,
    /// `(ω_in − ω_out)/ω_out = 1/ε − 1`.
    pub omega_bar: f64,
}

impl AffinityParams {
    pub fn from_omegas(omega_in: f64, omega_out: f64) -> Result<Self> {
        if !(omega_in > 0.0 && omega_in <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "omega_in = {omega_in} must lie in (0, 1]"
            )));
        }
        if !(omega_out >= 0.0 && omega_out <= omega_in) {
            return Err(Error::InvalidParams(format!(
                "omega_out = {omega_out} must lie in [0, omega_in = {omega_in}]"
            )));
        }
        let epsilon = epsilon_of(omega_in, omega_out)?;
        if epsilon < MIN_EPSILON {
            return Err(Error::InvalidParams(format!(
                "epsilon = {epsilon} below the minimum {MIN_EPSILON}; epsilon must be > 0"
            )));
        }
        Ok(AffinityParams {
            omega_in,
            omega_out,
            epsilon,
            omega_bar: (omega_in - omega_out) / omega_out,
        })
    }

    /// Connection probability for a cluster pair with indicator `dense`.
    #[inline]
    pub fn omega(&self, dense: bool) -> f64 {
        if dense {
            self.omega_in
        } else {
            self.omega_out
        }
    }
}

/// `ε = ω_out / ω_in`.
pub fn epsilon_of(omega_in: f64, omega_out: f64) -> Result<f64> {
    if !(omega_in > 0.0) {
        return Err(Error::InvalidParams(format!(
            "omega_in = {omega_in} must be positive"
        )));
    }
    Ok(omega_out / omega_in)
}

/// Connection probabilities realizing average degree `c` at noise `ε`:
/// `ω_in = (c/N)·[(1 − ε)·γᵀWγ + ε]⁻¹`, `ω_out = ε·ω_in`.
pub fn affinity_from(
    c: f64,
    epsilon: f64,
    w: &IndicatorMatrix,
    gamma: &ClusterDistribution,
    n: usize,
) -> Result<AffinityParams> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParams(format!("c = {c} must be positive")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon = {epsilon} must lie in (0, 1]; epsilon = 0 is not supported"
        )));
    }
    if epsilon < MIN_EPSILON {
        return Err(Error::InvalidParams(format!(
            "epsilon = {epsilon} below the minimum {MIN_EPSILON}"
        )));
    }
    if gamma.len() != w.q() {
        return Err(Error::LengthMismatch(format!(
            "gamma has {} entries, W has q = {}",
            gamma.len(),
            w.q()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParams(format!("n = {n} must be at least 2")));
    }
    let g = gamma.as_slice();
    let dense_mass = w.bilinear(g, g);
    let denom = (1.0 - epsilon) * dense_mass + epsilon;
    let omega_in = c / n as f64 / denom;
    if omega_in > 1.0 {
        return Err(Error::InvalidParams(format!(
            "omega_in = {omega_in} exceeds 1; average degree {c} is too large for n = {n}"
        )));
    }
    let omega_out = epsilon * omega_in;
    Ok(AffinityParams {
        omega_in,
        omega_out,
        epsilon,
        omega_bar: 1.0 / epsilon - 1.0,
    })
}

/// A modular pattern with its planted fractions and inference prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub q: usize,
    #[serde(rename = "W")]
    pub w: IndicatorMatrix,
    pub gamma_planted: ClusterDistribution,
    pub gamma_prior: ClusterDistribution,
}

/// Names accepted by [`Structure::preset`].
pub const PRESETS: &[&str] = &["community:<q>", "fig1c", "demo-regular-q3"];

impl Structure {
    pub fn new(
        w: IndicatorMatrix,
        gamma_planted: ClusterDistribution,
        gamma_prior: ClusterDistribution,
    ) -> Result<Self> {
        let q = w.q();
        for (name, g) in [("gamma_planted", &gamma_planted), ("gamma_prior", &gamma_prior)] {
            if g.len() != q {
                return Err(Error::LengthMismatch(format!(
                    "{name} has {} entries, W has q = {q}",
                    g.len()
                )));
            }
        }
        Ok(Structure {
            q,
            w,
            gamma_planted,
            gamma_prior,
        })
    }

    pub fn uniform(w: IndicatorMatrix) -> Self {
        let q = w.q();
        Structure {
            q,
            w,
            gamma_planted: ClusterDistribution::uniform(q),
            gamma_prior: ClusterDistribution::uniform(q),
        }
    }

    /// Built-in structures:
    ///
    /// * `community:q`: `W = I_q`, uniform fractions.
    /// * `fig1c`: `[[1,0,1],[0,1,0],[1,0,1]]`, equal planted sizes,
    ///   inference prior `(¼, ½, ¼)` so that `γW ∝ 1ᵀ`.
    /// * `demo-regular-q3`: `[[1,1,0],[1,0,1],[0,1,1]]`, a 2-regular module
    ///   graph with spectrum `{2, 1, −1}`. This is a constructed stand-in for a
    ///   structure that is undetectable for every ε at `c = 4`.
    pub fn preset(name: &str) -> Result<Self> {
        if let Some(q) = name.strip_prefix("community:") {
            let q: usize = q
                .parse()
                .map_err(|_| Error::InvalidStructure(format!("bad cluster count in {name:?}")))?;
            return Ok(Structure::uniform(IndicatorMatrix::identity(q)?));
        }
        match name {
            "fig1c" => Structure::new(
                IndicatorMatrix::new(vec![vec![1, 0, 1], vec![0, 1, 0], vec![1, 0, 1]])?,
                ClusterDistribution::uniform(3),
                ClusterDistribution::new(vec![0.25, 0.5, 0.25])?,
            ),
            "demo-regular-q3" => Ok(Structure::uniform(IndicatorMatrix::new(vec![
                vec![1, 1, 0],
                vec![1, 0, 1],
                vec![0, 1, 1],
            ])?)),
            _ => Err(Error::InvalidStructure(format!(
                "unknown preset {name:?}; known presets: {}",
                PRESETS.join(", ")
            ))),
        }
    }
}

/// Full ensemble description for generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub structure: Structure,
    pub n: usize,
    pub c: f64,
    pub affinity: AffinityParams,
}

impl ModelSpec {
    pub fn new(structure: Structure, n: usize, c: f64, epsilon: f64) -> Result<Self> {
        let affinity = affinity_from(c, epsilon, &structure.w, &structure.gamma_planted, n)?;
        Ok(ModelSpec {
            structure,
            n,
            c,
            affinity,
        })
    }

    #[inline]
    pub fn w(&self) -> &IndicatorMatrix {
        &self.structure.w
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.structure.q
    }

    /// Expected average degree `N·γᵀωγ` under the planted fractions.
    pub fn expected_degree(&self) -> f64 {
        let g = self.structure.gamma_planted.as_slice();
        let dense = self.w().bilinear(g, g);
        let a = &self.affinity;
        self.n as f64 * ((a.omega_in - a.omega_out) * dense + a.omega_out)
    }

    /// Inference parameters at the generating truth, with the structure's prior.
    pub fn inference_model(&self) -> InferenceModel {
        InferenceModel {
            w: self.structure.w.clone(),
            prior: self.structure.gamma_prior.clone(),
            affinity: self.affinity,
        }
    }
}

/// Parameters used by belief propagation and updated by EM.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceModel {
    pub w: IndicatorMatrix,
    pub prior: ClusterDistribution,
    pub affinity: AffinityParams,
}

impl InferenceModel {
    pub fn q(&self) -> usize {
        self.w.q()
    }
}
