//! Linear stability of the trivial BP fixed point.
//!
//! Around a factorized fixed point `ψ̄` (every message equal to the prior,
//! which requires `γW ∝ 1ᵀ`), perturbations propagate through the transfer
//! matrix
//!
//! ```text
//! T_{σ'σ} = ω̄ / (1 + ω̄Ψ̄_{σ'}) · ψ̄_{σ'} · (W_{σ'σ} − Ψ̄_σ),   Ψ̄ = ψ̄W
//! ```
//!
//! and the fixed point loses stability once `c·ν² > 1`, `ν` being the leading
//! eigenvalue of `T`. The noise level where `c·ν² = 1` is the detectability
//! threshold `ε*`.
//!
//! For `ψ̄ > 0` the matrix is `D(W − k11ᵀ)` with `D` diagonal, hence similar
//! to a symmetric matrix, so its spectrum is real. The general solver is
//! still used and complex leading eigenvalues are reported as errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ClusterDistribution, IndicatorMatrix, Structure, MIN_EPSILON};

const FIXED_POINT_TOL: f64 = 1e-12;
/// Integer-spectrum comparisons (`|λ₂|√c` against `a`).
const SPECTRUM_TOL: f64 = 1e-9;
const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub q: usize,
    /// Row-major, row index `σ'`.
    pub entries: Vec<f64>,
    pub omega_bar: f64,
    pub fixed_point: Vec<f64>,
}

impl TransferMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.q + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedFormRegular,
    ClosedFormOrthogonal,
    Bisection,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ClosedFormRegular => "closed-form-regular",
            Method::ClosedFormOrthogonal => "closed-form-orthogonal",
            Method::Bisection => "bisection",
        }
    }
}

/// Detectability threshold; `epsilon_star == None` means the structure is
/// undetectable for every ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub epsilon_star: Option<f64>,
    pub nu_at_star: Option<f64>,
    pub method: Method,
}

impl ThresholdResult {
    fn undetectable(method: Method) -> Self {
        ThresholdResult {
            epsilon_star: None,
            nu_at_star: None,
            method,
        }
    }

    pub fn is_undetectable(&self) -> bool {
        self.epsilon_star.is_none()
    }
}

/// Returns `(γ, k)` when `γW = k·1ᵀ` with `k > 0`.
pub fn factorized_fixed_point(w: &IndicatorMatrix, gamma: &ClusterDistribution) -> Option<(Vec<f64>, f64)> {
    if gamma.len() != w.q() {
        return None;
    }
    let mut gw = vec![0.0; w.q()];
    w.left_mul(gamma.as_slice(), &mut gw);
    let k = gw[0];
    (k > FIXED_POINT_TOL && gw.iter().all(|x| (x - k).abs() <= FIXED_POINT_TOL))
        .then(|| (gamma.as_slice().to_vec(), k))
}

/// Transfer matrix at the point where every message equals `psi_bar`.
///
/// `omega_bar` must exceed −1; negative values arise in the flipped
/// parametrization.
pub fn transfer_matrix(w: &IndicatorMatrix, psi_bar: &[f64], omega_bar: f64) -> TransferMatrix {
    let q = w.q();
    let mut big_psi = vec![0.0; q];
    w.left_mul(psi_bar, &mut big_psi);
    let mut entries = vec![0.0; q * q];
    for row in 0..q {
        let scale = omega_bar / (1.0 + omega_bar * big_psi[row]) * psi_bar[row];
        for col in 0..q {
            entries[row * q + col] = scale * (w.value(row, col) - big_psi[col]);
        }
    }
    TransferMatrix {
        q,
        entries,
        omega_bar,
        fixed_point: psi_bar.to_vec(),
    }
}

/// Largest eigenvalue modulus of `T`.
pub fn leading_eigenvalue(t: &TransferMatrix) -> Result<f64> {
    linalg::spectral_radius(&t.entries, t.q)
}

/// Leading eigenvalue modulus, erroring if the dominant eigenvalue is complex.
pub fn leading_real_eigenvalue(t: &TransferMatrix) -> Result<f64> {
    let eig = linalg::eigenvalues(&t.entries, t.q)?;
    let lead = eig
        .iter()
        .copied()
        .max_by(|a, b| a.modulus().total_cmp(&b.modulus()))
        .ok_or(Error::EigenNoConvergence)?;
    if lead.im.abs() > 1e-9 * lead.modulus().max(1e-300) {
        return Err(Error::ComplexEigenvalue { re: lead.re, im: lead.im });
    }
    Ok(lead.modulus())
}

/// Spectrum facts for a regular indicator matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpectrum {
    /// Row sum of the regular module graph.
    pub a: usize,
    /// Eigenvalues of `W`, descending.
    pub spectrum: Vec<f64>,
    /// Eigenvalue of largest modulus on the complement of the all-ones
    /// direction (positive on ties).
    pub lambda2: f64,
    pub lambda2_abs: f64,
    /// Largest signed eigenvalue on that complement.
    pub second_largest: f64,
}

/// Eigenvalues of the symmetric indicator matrix, descending.
pub fn spectrum(w: &IndicatorMatrix) -> Vec<f64> {
    linalg::symmetric_eigen(&w.to_f64(), w.q()).0
}

/// Second eigenvalue of a regular `W`. Since `W1 = a1`, the spectrum on the
/// complement of `1` is the full spectrum with one copy of `a` removed.
pub fn second_eigenvalue(w: &IndicatorMatrix) -> Result<ModuleSpectrum> {
    let a = w.regular_degree().ok_or(Error::NotRegular)?;
    let spectrum = spectrum(w);
    let af = a as f64;
    let drop = spectrum
        .iter()
        .enumerate()
        .min_by(|x, y| (x.1 - af).abs().total_cmp(&(y.1 - af).abs()))
        .map(|(i, _)| i)
        .expect("q >= 2");
    let rest: Vec<f64> = spectrum
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != drop)
        .map(|(_, &v)| v)
        .collect();
    let lambda2_abs = rest.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lambda2 = if rest.iter().any(|&v| (v - lambda2_abs).abs() <= SPECTRUM_TOL) {
        lambda2_abs
    } else {
        -lambda2_abs
    };
    let second_largest = rest.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ModuleSpectrum {
        a,
        spectrum,
        lambda2,
        lambda2_abs,
        second_largest,
    })
}

/// `ε* = (|λ₂|√c − a) / (|λ₂|√c − a + q)` for a regular `W` with uniform
/// fractions; undetectable for every ε when `|λ₂|√c ≤ a`.
pub fn threshold_regular(w: &IndicatorMatrix, c: f64) -> Result<ThresholdResult> {
    let s = second_eigenvalue(w)?;
    let excess = s.lambda2_abs * c.sqrt() - s.a as f64;
    if excess <= SPECTRUM_TOL {
        return Ok(ThresholdResult::undetectable(Method::ClosedFormRegular));
    }
    Ok(ThresholdResult {
        epsilon_star: Some(excess / (excess + w.q() as f64)),
        nu_at_star: Some(1.0 / c.sqrt()),
        method: Method::ClosedFormRegular,
    })
}

/// Distinct nonzero columns when every pair of them is orthogonal.
pub fn orthogonal_column_count(w: &IndicatorMatrix) -> Option<usize> {
    let q = w.q();
    let columns: Vec<Vec<u8>> = (0..q)
        .map(|s| (0..q).map(|r| u8::from(w.get(r, s))).collect())
        .collect();
    let mut distinct: Vec<&Vec<u8>> = Vec::new();
    for col in &columns {
        if col.iter().all(|&x| x == 0) {
            return None;
        }
        if !distinct.contains(&col) {
            distinct.push(col);
        }
    }
    for (i, x) in distinct.iter().enumerate() {
        for y in &distinct[i + 1..] {
            if x.iter().zip(y.iter()).any(|(a, b)| a & b == 1) {
                return None;
            }
        }
    }
    Some(distinct.len())
}

/// Closed form for `W` whose linearly independent columns are mutually
/// orthogonal, at a prior with `γW ∝ 1ᵀ`.
///
/// With `m` independent columns the leading eigenvalue is `ν = ω̄/(m + ω̄)`,
/// so `ε* = (√c − 1)/(√c − 1 + m)`; for two independent columns this is
/// `(√c − 1)/(√c + 1)`.
pub fn threshold_orthogonal(
    w: &IndicatorMatrix,
    gamma: &ClusterDistribution,
    c: f64,
) -> Result<ThresholdResult> {
    let m = orthogonal_column_count(w).ok_or_else(|| {
        Error::Unsupported("independent columns of W are not mutually orthogonal; use bisection".into())
    })?;
    if factorized_fixed_point(w, gamma).is_none() {
        return Err(Error::Unsupported(
            "prior does not satisfy gamma W ∝ 1; use bisection".into(),
        ));
    }
    let excess = c.sqrt() - 1.0;
    if excess <= 0.0 {
        return Ok(ThresholdResult::undetectable(Method::ClosedFormOrthogonal));
    }
    Ok(ThresholdResult {
        epsilon_star: Some(excess / (excess + m as f64)),
        nu_at_star: Some(1.0 / c.sqrt()),
        method: Method::ClosedFormOrthogonal,
    })
}

/// `ν(ε)` at the factorized point `psi_bar`.
pub fn nu_at(w: &IndicatorMatrix, psi_bar: &[f64], epsilon: f64) -> Result<f64> {
    leading_real_eigenvalue(&transfer_matrix(w, psi_bar, 1.0 / epsilon - 1.0))
}

fn bisect(
    mut lo: f64,
    mut hi: f64,
    stop: impl Fn(f64, f64) -> bool,
    f: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    // f(lo) > 0 ≥ f(hi) on entry
    for _ in 0..400 {
        if stop(lo, hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root of `c·ν(ε)² − 1` on `[MIN_EPSILON, 1]` by bisection.
pub fn threshold_bisection(
    w: &IndicatorMatrix,
    gamma: &ClusterDistribution,
    c: f64,
) -> Result<ThresholdResult> {
    let (psi, _) = factorized_fixed_point(w, gamma).ok_or_else(|| {
        Error::Unsupported("no factorized fixed point (gamma W is not ∝ 1); the trivial fixed point is not known".into())
    })?;
    let g = |eps: f64| -> Result<f64> { Ok(c * nu_at(w, &psi, eps)?.powi(2) - 1.0) };
    if g(MIN_EPSILON)? <= 0.0 {
        return Ok(ThresholdResult::undetectable(Method::Bisection));
    }
    let eps = bisect(MIN_EPSILON, 1.0, |lo, hi| hi - lo <= BISECTION_TOL, g)?;
    Ok(ThresholdResult {
        epsilon_star: Some(eps),
        nu_at_star: Some(nu_at(w, &psi, eps)?),
        method: Method::Bisection,
    })
}

/// Threshold computed in the flipped parametrization: `W̃ = 11ᵀ − W` with
/// noise `ε̃ = 1/ε ≥ 1` (so `ω̄ = 1/ε̃ − 1` is negative). The root in `ε̃` is
/// mapped back to `ε* = 1/ε̃*`.
pub fn threshold_bisection_flipped(
    w: &IndicatorMatrix,
    gamma: &ClusterDistribution,
    c: f64,
) -> Result<ThresholdResult> {
    let flipped = w.flip();
    let (psi, _) = factorized_fixed_point(&flipped, gamma).ok_or_else(|| {
        Error::Unsupported("flipped structure has no factorized fixed point".into())
    })?;
    let g = |eps_flip: f64| -> Result<f64> {
        let t = transfer_matrix(&flipped, &psi, 1.0 / eps_flip - 1.0);
        Ok(c * leading_real_eigenvalue(&t)?.powi(2) - 1.0)
    };
    let upper = 1.0 / MIN_EPSILON;
    if g(upper)? <= 0.0 {
        return Ok(ThresholdResult::undetectable(Method::Bisection));
    }
    let eps_flip = bisect(upper, 1.0, |a, b| (1.0 / a - 1.0 / b).abs() <= BISECTION_TOL, &g)?;
    let nu = leading_real_eigenvalue(&transfer_matrix(&flipped, &psi, 1.0 / eps_flip - 1.0))?;
    Ok(ThresholdResult {
        epsilon_star: Some(1.0 / eps_flip),
        nu_at_star: Some(nu),
        method: Method::Bisection,
    })
}

/// Normalized edge expansion of the module graph:
/// `min_S |E(S, S̄)| / (a·min(|S|, |S̄|))` over nonempty proper subsets.
/// Self-loops never cross a cut.
pub fn edge_expansion(w: &IndicatorMatrix) -> Result<f64> {
    let a = w.regular_degree().ok_or(Error::NotRegular)?;
    let q = w.q();
    if a == 0 {
        return Err(Error::Unsupported("module graph has no edges".into()));
    }
    if q > 20 {
        return Err(Error::Unsupported(format!("edge expansion enumerates 2^q subsets; q = {q} > 20")));
    }
    let mut best = f64::INFINITY;
    for mask in 1u32..(1u32 << q) - 1 {
        let size = mask.count_ones() as usize;
        let mut cut = 0usize;
        for r in (0..q).filter(|r| mask >> r & 1 == 1) {
            for s in (0..q).filter(|s| mask >> s & 1 == 0) {
                cut += usize::from(w.get(r, s));
            }
        }
        let ratio = cut as f64 / (a * size.min(q - size)) as f64;
        best = best.min(ratio);
    }
    Ok(best)
}

/// Cheeger bounds `1 − 2h ≤ λ₂/a ≤ 1 − h²/2` with the normalized second
/// eigenvalue they bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheegerBounds {
    pub h: f64,
    pub lower: f64,
    pub upper: f64,
    /// Largest eigenvalue off the all-ones direction, divided by `a`.
    pub lambda2_normalized: f64,
}

impl CheegerBounds {
    pub fn contains(&self, tol: f64) -> bool {
        self.lower - tol <= self.lambda2_normalized && self.lambda2_normalized <= self.upper + tol
    }
}

pub fn cheeger_bounds(w: &IndicatorMatrix) -> Result<CheegerBounds> {
    let h = edge_expansion(w)?;
    let s = second_eigenvalue(w)?;
    Ok(CheegerBounds {
        h,
        lower: 1.0 - 2.0 * h,
        upper: 1.0 - h * h / 2.0,
        lambda2_normalized: s.second_largest / s.a as f64,
    })
}

/// Machine-readable analysis of a structure at average degree `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub c: f64,
    pub q: usize,
    pub a: Option<usize>,
    pub spectrum: Vec<f64>,
    pub lambda2_abs: Option<f64>,
    pub regular: bool,
    pub epsilon_star: Option<f64>,
    pub nu_at_star: Option<f64>,
    pub method: String,
    /// `"detectable-below-threshold"` or `"undetectable-for-all-eps"`.
    pub status: String,
    pub edge_expansion: Option<f64>,
    pub cheeger: Option<[f64; 2]>,
}

/// Picks the closed form when its preconditions hold, else bisection.
/// Structures with no factorized fixed point are unsupported.
pub fn analyze(structure: &Structure, c: f64) -> Result<ThresholdReport> {
    let w = &structure.w;
    let prior = &structure.gamma_prior;
    let regular = matches!(w.regular_degree(), Some(a) if a > 0);
    let result = if regular && prior.is_uniform() {
        threshold_regular(w, c)?
    } else if orthogonal_column_count(w).is_some() && factorized_fixed_point(w, prior).is_some() {
        threshold_orthogonal(w, prior, c)?
    } else {
        threshold_bisection(w, prior, c)?
    };
    let (a, lambda2_abs, edge, cheeger) = if regular {
        let s = second_eigenvalue(w)?;
        let b = cheeger_bounds(w)?;
        (Some(s.a), Some(s.lambda2_abs), Some(b.h), Some([b.lower, b.upper]))
    } else {
        (None, None, None, None)
    };
    Ok(ThresholdReport {
        c,
        q: w.q(),
        a,
        spectrum: spectrum(w),
        lambda2_abs,
        regular,
        epsilon_star: result.epsilon_star,
        nu_at_star: result.nu_at_star,
        method: result.method.as_str().to_string(),
        status: if result.is_undetectable() {
            "undetectable-for-all-eps".into()
        } else {
            "detectable-below-threshold".into()
        },
        edge_expansion: edge,
        cheeger,
    })
}

/// All symmetric 0/1 matrices of size `q` with constant positive row sums.
pub fn enumerate_regular(q: usize) -> Vec<IndicatorMatrix> {
    let slots: Vec<(usize, usize)> = (0..q).flat_map(|r| (r..q).map(move |s| (r, s))).collect();
    let mut out = Vec::new();
    for bits in 0u64..(1u64 << slots.len()) {
        let mut rows = vec![vec![0u8; q]; q];
        for (k, &(r, s)) in slots.iter().enumerate() {
            let v = (bits >> k & 1) as u8;
            rows[r][s] = v;
            rows[s][r] = v;
        }
        let sum0: u8 = rows[0].iter().sum();
        if sum0 > 0 && rows.iter().all(|row| row.iter().sum::<u8>() == sum0) {
            out.push(IndicatorMatrix::new(rows).expect("symmetric by construction"));
        }
    }
    out
}
