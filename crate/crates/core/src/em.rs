//! Expectation-maximization: BP as the E-step, closed-form M-step.

use serde::{Deserialize, Serialize};

use crate::bp::{BpReport, BpSettings, MessageState};
use crate::error::{Error, Result};
use crate::generator::{Graph, PlantedPartition};
use crate::model::{AffinityParams, ClusterDistribution, InferenceModel, MIN_EPSILON};

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub learn_gamma: bool,
    pub learn_omega: bool,
    pub max_iters: usize,
    /// Stop when the largest parameter change falls below this (absolute for
    /// γ, relative for ω_in and ω_out).
    pub param_tol: f64,
    pub init: InferenceModel,
}

impl EmConfig {
    pub fn new(init: InferenceModel) -> Self {
        EmConfig {
            learn_gamma: true,
            learn_omega: true,
            max_iters: 50,
            param_tol: 1e-6,
            init,
        }
    }
}

/// Raw M-step estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub gamma: ClusterDistribution,
    pub omega_in: f64,
    pub omega_out: f64,
    /// `Σ_edges ⟨W⟩`.
    pub dense_edges: f64,
    /// `Σ_{i<j} ψ^i W ψ^jᵀ`.
    pub dense_pairs: f64,
}

/// One EM iteration as emitted in run output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmRecord {
    pub iter: usize,
    pub gamma_hat: Vec<f64>,
    pub omega_in_hat: f64,
    pub omega_out_hat: f64,
    pub bp_sweeps: usize,
    pub delta: f64,
    pub bp_converged: bool,
}

#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub model: InferenceModel,
    pub state: MessageState,
    pub history: Vec<EmRecord>,
    pub converged: bool,
    pub last_bp: BpReport,
}

/// `γ̂_σ = (1/N) Σ_i ψ^i_σ` over row-major `n × q` marginals.
pub fn estimate_gamma(marginals: &[f64], q: usize) -> Result<ClusterDistribution> {
    if q == 0 || marginals.is_empty() || marginals.len() % q != 0 {
        return Err(Error::LengthMismatch(format!(
            "{} marginal entries do not split into rows of {q}",
            marginals.len()
        )));
    }
    let mut sum = vec![0.0; q];
    for m in marginals.chunks(q) {
        sum.iter_mut().zip(m).for_each(|(s, x)| *s += x);
    }
    ClusterDistribution::normalized(sum)
}

/// Posterior probability that the edge on slot `p` lies in a dense bicluster:
/// `ω_in·x / ((ω_in − ω_out)·x + ω_out)` with `x = ψ^{i→j} W ψ^{j→i}ᵀ`.
pub fn estimate_w_edge(state: &MessageState, graph: &Graph, p: usize) -> f64 {
    let a = &state.model().affinity;
    let x = state
        .model()
        .w
        .bilinear(state.message(p), state.message(graph.reverse(p)));
    a.omega_in * x / ((a.omega_in - a.omega_out) * x + a.omega_out)
}

pub fn m_step(graph: &Graph, state: &MessageState) -> Result<MStep> {
    let q = state.q();
    let w = &state.model().w;
    let n = graph.n() as f64;
    let gamma = estimate_gamma(state.marginals(), q)?;

    let mut dense_edges = 0.0;
    for p in 0..graph.num_directed() {
        if graph.source(p) < graph.target(p) {
            dense_edges += estimate_w_edge(state, graph, p);
        }
    }

    // Σ_{i<j} ψ^i W ψ^jᵀ = ½ (sWsᵀ − Σ_i ψ^i W ψ^iᵀ) with s = Σ_i ψ^i
    let mut s = vec![0.0; q];
    let mut diagonal = 0.0;
    for m in state.marginals().chunks(q) {
        s.iter_mut().zip(m).for_each(|(acc, x)| *acc += x);
        diagonal += w.bilinear(m, m);
    }
    let dense_pairs = 0.5 * (w.bilinear(&s, &s) - diagonal);
    let all_pairs = n * (n - 1.0) / 2.0;
    if !(dense_pairs > 0.0 && dense_pairs < all_pairs) {
        return Err(Error::DegeneratePosterior(format!(
            "expected dense pair count {dense_pairs} outside (0, {all_pairs})"
        )));
    }
    let m = graph.num_edges() as f64;
    Ok(MStep {
        gamma,
        omega_in: dense_edges / dense_pairs,
        omega_out: (m - dense_edges) / (all_pairs - dense_pairs),
        dense_edges,
        dense_pairs,
    })
}

/// Projects raw estimates onto `0 < ω_out ≤ ω_in ≤ 1` with `ε ≥ MIN_EPSILON`.
fn project_affinity(omega_in: f64, omega_out: f64) -> Result<AffinityParams> {
    if !(omega_in > 0.0) {
        return Err(Error::DegeneratePosterior(format!(
            "estimated omega_in = {omega_in}; no edge carries dense-bicluster weight"
        )));
    }
    let omega_in = omega_in.min(1.0);
    let omega_out = omega_out.clamp(MIN_EPSILON * omega_in, omega_in);
    AffinityParams::from_omegas(omega_in, omega_out)
}

/// Alternates BP and the M-step until the parameters settle.
///
/// BP is warm-started from the previous messages in every iteration after
/// the first.
pub fn em_run(
    graph: &Graph,
    config: &EmConfig,
    bp: &BpSettings,
    planted: Option<&PlantedPartition>,
) -> Result<EmOutcome> {
    if config.max_iters == 0 || !(config.param_tol > 0.0) {
        return Err(Error::InvalidParams("EM needs max_iters >= 1 and param_tol > 0".into()));
    }
    let mut model = config.init.clone();
    let mut state = MessageState::init(graph, &model, bp, planted)?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut last_bp;
    let mut iter = 0;
    loop {
        iter += 1;
        last_bp = state.converge(graph, bp)?;
        let estimate = match m_step(graph, &state) {
            Ok(e) => e,
            Err(source) => {
                return Err(Error::EmAborted {
                    source: Box::new(source),
                    history,
                })
            }
        };
        let mut next = model.clone();
        if config.learn_gamma {
            next.prior = estimate.gamma.clone();
        }
        if config.learn_omega {
            next.affinity = match project_affinity(estimate.omega_in, estimate.omega_out) {
                Ok(a) => a,
                Err(source) => {
                    return Err(Error::EmAborted {
                        source: Box::new(source),
                        history,
                    })
                }
            };
        }
        let change = parameter_change(&model, &next);
        history.push(EmRecord {
            iter,
            gamma_hat: next.prior.as_slice().to_vec(),
            omega_in_hat: next.affinity.omega_in,
            omega_out_hat: next.affinity.omega_out,
            bp_sweeps: last_bp.sweeps,
            delta: last_bp.final_delta,
            bp_converged: last_bp.converged,
        });
        model = next;
        if change < config.param_tol {
            converged = true;
            break;
        }
        if iter >= config.max_iters {
            break;
        }
        state.set_model(graph, &model)?;
    }
    Ok(EmOutcome {
        model,
        state,
        history,
        converged,
        last_bp,
    })
}

fn parameter_change(old: &InferenceModel, new: &InferenceModel) -> f64 {
    let gamma = old
        .prior
        .as_slice()
        .iter()
        .zip(new.prior.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
    gamma
        .max(rel(old.affinity.omega_in, new.affinity.omega_in))
        .max(rel(old.affinity.omega_out, new.affinity.omega_out))
}
