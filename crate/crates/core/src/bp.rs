//! Belief propagation for the restricted block model.
//!
//! Cavity message update for the directed edge `i → j`:
//!
//! ```text
//! ψ^{i→j} ∝ γ ∘ Π_{k∈∂i∖j} [1 + ω̄·ψ^{k→i}W] ∘ exp(−h),   h = ω̄·ω_out·Σ_ℓ ψ^ℓ W
//! ```
//!
//! Messages are updated asynchronously in a fresh random edge order every
//! sweep. After each message update the marginal of the receiving vertex is
//! recomputed and the external field `h` is shifted by the change in that
//! marginal, so the field always reflects the current marginals.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{mix64, prefetch, rng_from_seed, Graph, PlantedPartition};
use crate::model::InferenceModel;
use rand::Rng;

/// Sweeps between from-scratch recomputations of the external field.
const FIELD_REFRESH_SWEEPS: usize = 50;
const RESCALE_ABOVE: f64 = 1e100;
const PREFETCH_AHEAD: usize = 16;
/// Consecutive rising deltas that switch on damping.
const OSCILLATION_SWEEPS: usize = 10;
const AUTO_DAMPING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// `normalize(γ + noise·u)` with `u` uniform on `[0,1]^q`.
    PerturbedPrior,
    /// `normalize(u)`.
    Random,
    /// One-hot at the planted label mixed with the prior at weight `noise`.
    Planted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpSettings {
    pub init: InitMode,
    pub noise: f64,
    /// Convergence threshold on the L∞ message change of a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// `0` means undamped, with damping switched on automatically when the
    /// sweep delta keeps increasing.
    pub damping: f64,
    pub seed: u64,
    /// Include the mean-field term for non-edges. Disabling it leaves only
    /// edge factors, for which BP is exact on trees.
    pub external_field: bool,
}

impl Default for BpSettings {
    fn default() -> Self {
        BpSettings {
            init: InitMode::PerturbedPrior,
            noise: 0.1,
            tol: 1e-6,
            max_sweeps: 1000,
            damping: 0.0,
            seed: 0,
            external_field: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpReport {
    pub converged: bool,
    pub sweeps: usize,
    pub final_delta: f64,
    /// Damping in effect at the end of the run.
    pub damping: f64,
}

/// All cavity messages, vertex marginals and the external field.
#[derive(Debug, Clone)]
pub struct MessageState {
    model: InferenceModel,
    q: usize,
    w: Vec<f64>,
    field_enabled: bool,
    messages: Vec<f64>,
    /// `1 + ω̄·(ψ^{k→i} W)` stored at slot `i → k`, so that everything
    /// arriving at `i` is contiguous. Kept in step with `messages`.
    factors: Vec<f64>,
    marginals: Vec<f64>,
    marginal_sum: Vec<f64>,
    field: Vec<f64>,
    exp_neg_field: Vec<f64>,
    sweeps_done: usize,
}

impl MessageState {
    pub fn init(
        graph: &Graph,
        model: &InferenceModel,
        settings: &BpSettings,
        planted: Option<&PlantedPartition>,
    ) -> Result<Self> {
        let q = model.q();
        if model.prior.len() != q {
            return Err(Error::LengthMismatch("prior length differs from q".into()));
        }
        let noise = settings.noise;
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::InvalidParams(format!("noise = {noise} must lie in [0, 1]")));
        }
        let prior = model.prior.as_slice();
        let mut state = MessageState {
            model: model.clone(),
            q,
            w: model.w.to_f64(),
            field_enabled: settings.external_field,
            messages: vec![0.0; graph.num_directed() * q],
            factors: vec![1.0; graph.num_directed() * q],
            marginals: vec![0.0; graph.n() * q],
            marginal_sum: vec![0.0; q],
            field: vec![0.0; q],
            exp_neg_field: vec![1.0; q],
            sweeps_done: 0,
        };
        let mut rng = rng_from_seed(mix64(settings.seed ^ 0x1417_1A11));
        match settings.init {
            InitMode::PerturbedPrior | InitMode::Random => {
                for msg in state.messages.chunks_mut(q) {
                    for (m, &g) in msg.iter_mut().zip(prior) {
                        let u: f64 = rng.random();
                        *m = match settings.init {
                            InitMode::PerturbedPrior => g + noise * u,
                            _ => u,
                        };
                        // zero prior components stay pinned
                        if g == 0.0 {
                            *m = 0.0;
                        }
                    }
                    normalize(msg).ok_or_else(|| Error::ZeroNormalizer("initial message".into()))?;
                }
                state.refresh_factors(graph);
                state.marginal_pass(graph)?;
            }
            InitMode::Planted => {
                let planted = planted.ok_or_else(|| {
                    Error::InvalidParams("planted initialization needs planted labels".into())
                })?;
                if planted.labels.len() != graph.n() || planted.q != q {
                    return Err(Error::LengthMismatch("planted partition does not match graph".into()));
                }
                let clamp = |label: usize, out: &mut [f64]| {
                    for (s, o) in out.iter_mut().enumerate() {
                        *o = noise * prior[s] + if s == label { 1.0 - noise } else { 0.0 };
                    }
                };
                for p in 0..graph.num_directed() {
                    clamp(planted.labels[graph.source(p)], &mut state.messages[p * q..(p + 1) * q]);
                }
                for i in 0..graph.n() {
                    clamp(planted.labels[i], &mut state.marginals[i * q..(i + 1) * q]);
                }
                state.refresh_factors(graph);
                state.refresh_field();
            }
        }
        Ok(state)
    }

    pub fn model(&self) -> &InferenceModel {
        &self.model
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn message(&self, p: usize) -> &[f64] {
        &self.messages[p * self.q..(p + 1) * self.q]
    }

    pub fn marginal(&self, i: usize) -> &[f64] {
        &self.marginals[i * self.q..(i + 1) * self.q]
    }

    /// Row-major `n × q` marginals.
    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    pub fn field(&self) -> &[f64] {
        &self.field
    }

    pub fn field_enabled(&self) -> bool {
        self.field_enabled
    }

    /// Coefficient `ω̄·ω_out = ω_in − ω_out` of the external field.
    fn field_coefficient(&self) -> f64 {
        if self.field_enabled {
            self.model.affinity.omega_bar * self.model.affinity.omega_out
        } else {
            0.0
        }
    }

    /// `h` recomputed from the stored marginals.
    pub fn field_from_scratch(&self) -> Vec<f64> {
        let q = self.q;
        let mut sum = vec![0.0; q];
        for m in self.marginals.chunks(q) {
            sum.iter_mut().zip(m).for_each(|(s, x)| *s += x);
        }
        let mut h = vec![0.0; q];
        self.model.w.left_mul(&sum, &mut h);
        let coef = self.field_coefficient();
        h.iter_mut().for_each(|x| *x *= coef);
        h
    }

    /// Replaces the running field with a from-scratch recomputation.
    pub fn refresh_field(&mut self) {
        let q = self.q;
        self.marginal_sum.fill(0.0);
        for m in self.marginals.chunks(q) {
            self.marginal_sum.iter_mut().zip(m).for_each(|(s, x)| *s += x);
        }
        self.field = self.field_from_scratch();
        self.update_exp_field();
    }

    fn update_exp_field(&mut self) {
        for (e, h) in self.exp_neg_field.iter_mut().zip(&self.field) {
            *e = (-h).exp();
        }
    }

    /// Swaps in new parameters (EM), then recomputes marginals and field.
    pub fn set_model(&mut self, graph: &Graph, model: &InferenceModel) -> Result<()> {
        if model.q() != self.q {
            return Err(Error::LengthMismatch("model q differs from state".into()));
        }
        self.model = model.clone();
        self.w = model.w.to_f64();
        self.refresh_factors(graph);
        self.marginal_pass(graph)
    }

    fn refresh_factors(&mut self, graph: &Graph) {
        for p in 0..graph.num_directed() {
            self.update_factor(graph, p);
        }
    }

    #[inline]
    fn update_factor(&mut self, graph: &Graph, p: usize) {
        let q = self.q;
        let omega_bar = self.model.affinity.omega_bar;
        let r = graph.reverse(p);
        let msg = &self.messages[p * q..(p + 1) * q];
        let factor = &mut self.factors[r * q..(r + 1) * q];
        factor.fill(0.0);
        for (&x, row) in msg.iter().zip(self.w.chunks_exact(q)) {
            for (f, &w) in factor.iter_mut().zip(row) {
                *f += x * w;
            }
        }
        for f in factor.iter_mut() {
            *f = 1.0 + omega_bar * *f;
        }
    }

    fn marginal_pass(&mut self, graph: &Graph) -> Result<()> {
        // field from the current marginals (or zero on first use), one pass of
        // marginals under it, then the field from those marginals
        self.refresh_field();
        let q = self.q;
        let mut buf = vec![0.0; q];
        for i in 0..graph.n() {
            self.compute_into(graph, i, None, &mut buf)?;
            self.marginals[i * q..(i + 1) * q].copy_from_slice(&buf);
        }
        self.refresh_field();
        Ok(())
    }

    /// Shared kernel of the message and marginal updates: the product over
    /// `∂i`, skipping the slot `exclude` when given.
    #[inline]
    fn compute_into(&self, graph: &Graph, i: usize, exclude: Option<usize>, out: &mut [f64]) -> Result<()> {
        let q = self.q;
        let prior = self.model.prior.as_slice();
        for ((o, &g), &e) in out.iter_mut().zip(prior).zip(&self.exp_neg_field) {
            *o = g * e;
        }
        for p in graph.slots(i) {
            if Some(p) == exclude {
                continue;
            }
            let factor = &self.factors[p * q..(p + 1) * q];
            let mut z = 0.0;
            for (o, &f) in out.iter_mut().zip(factor) {
                *o *= f;
                z += *o;
            }
            // factors are >= 1, so only overflow needs guarding
            if z > RESCALE_ABOVE {
                let inv = 1.0 / z;
                out.iter_mut().for_each(|o| *o *= inv);
            }
        }
        normalize(out).ok_or_else(|| Error::ZeroNormalizer(format!("vertex {i}")))
    }

    /// New value of the cavity message on slot `p` (no state change).
    pub fn compute_message(&self, graph: &Graph, p: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.q];
        self.compute_into(graph, graph.source(p), Some(p), &mut out)?;
        Ok(out)
    }

    /// Full-neighborhood marginal of vertex `i` from the current messages.
    pub fn compute_marginal(&self, graph: &Graph, i: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.q];
        self.compute_into(graph, i, None, &mut out)?;
        Ok(out)
    }

    /// One asynchronous pass over every directed edge; returns the largest
    /// L∞ change of any message.
    pub fn sweep(&mut self, graph: &Graph, damping: f64, order_seed: u64) -> Result<f64> {
        let q = self.q;
        let mut order: Vec<usize> = (0..graph.num_directed()).collect();
        order.shuffle(&mut rng_from_seed(order_seed));

        let mut new = vec![0.0; q];
        let mut marg = vec![0.0; q];
        let mut diff = vec![0.0; q];
        let mut dh = vec![0.0; q];
        let coef = self.field_coefficient();
        let mut delta: f64 = 0.0;

        for (k, &p) in order.iter().enumerate() {
            // two-stage prefetch: slot records far ahead, then the state they point at
            if let Some(&far) = order.get(k + 2 * PREFETCH_AHEAD) {
                graph.prefetch_link(far);
            }
            if let Some(&near) = order.get(k + PREFETCH_AHEAD) {
                let (i, j, r) = (graph.source(near), graph.target(near), graph.reverse(near));
                graph.prefetch_vertex(i);
                graph.prefetch_vertex(j);
                prefetch(&self.factors, near * q);
                prefetch(&self.factors, r * q);
                prefetch(&self.messages, near * q);
                prefetch(&self.marginals, j * q);
            }
            self.compute_into(graph, graph.source(p), Some(p), &mut new)?;
            let old = &mut self.messages[p * q..(p + 1) * q];
            if damping > 0.0 {
                for (n, o) in new.iter_mut().zip(old.iter()) {
                    *n = (1.0 - damping) * *n + damping * o;
                }
                normalize(&mut new).ok_or_else(|| Error::ZeroNormalizer("damped message".into()))?;
            }
            for (n, o) in new.iter().zip(old.iter_mut()) {
                delta = delta.max((n - *o).abs());
                *o = *n;
            }
            self.update_factor(graph, p);

            let j = graph.target(p);
            self.compute_into(graph, j, None, &mut marg)?;
            let stored = &mut self.marginals[j * q..(j + 1) * q];
            for s in 0..q {
                diff[s] = marg[s] - stored[s];
                stored[s] = marg[s];
                self.marginal_sum[s] += diff[s];
            }
            if coef != 0.0 {
                self.model.w.left_mul(&diff, &mut dh);
                for ((h, e), d) in self.field.iter_mut().zip(&mut self.exp_neg_field).zip(&dh) {
                    let step = coef * d;
                    *h += step;
                    *e *= exp_neg_small(step);
                }
            }
        }

        self.sweeps_done += 1;
        if self.sweeps_done % FIELD_REFRESH_SWEEPS == 0 {
            self.refresh_field();
        }
        debug_assert!(self.on_simplex(1e-10), "state left the simplex");
        Ok(delta)
    }

    /// Sweeps until the delta drops below `tol` or `max_sweeps` is reached.
    pub fn converge(&mut self, graph: &Graph, settings: &BpSettings) -> Result<BpReport> {
        if !(settings.tol > 0.0) {
            return Err(Error::InvalidParams(format!("tol = {} must be positive", settings.tol)));
        }
        let mut damping = settings.damping;
        let mut previous = f64::INFINITY;
        let mut rising = 0usize;
        let mut delta = f64::INFINITY;
        let mut sweeps = 0usize;
        while sweeps < settings.max_sweeps.max(1) {
            let order_seed = mix64(settings.seed ^ mix64(self.sweeps_done as u64));
            delta = self.sweep(graph, damping, order_seed)?;
            sweeps += 1;
            if delta < settings.tol {
                break;
            }
            rising = if delta > previous { rising + 1 } else { 0 };
            if damping == 0.0 && rising >= OSCILLATION_SWEEPS {
                damping = AUTO_DAMPING;
            }
            previous = delta;
        }
        Ok(BpReport {
            converged: delta < settings.tol,
            sweeps,
            final_delta: delta,
            damping,
        })
    }

    /// Every message and marginal nonnegative and summing to one within `tol`.
    pub fn on_simplex(&self, tol: f64) -> bool {
        let ok = |v: &[f64]| v.iter().all(|&x| x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= tol;
        self.messages.chunks(self.q).all(ok) && self.marginals.chunks(self.q).all(ok)
    }
}

/// Initializes and runs BP to convergence.
pub fn run(
    graph: &Graph,
    model: &InferenceModel,
    settings: &BpSettings,
    planted: Option<&PlantedPartition>,
) -> Result<(MessageState, BpReport)> {
    let mut state = MessageState::init(graph, model, settings, planted)?;
    let report = state.converge(graph, settings)?;
    Ok((state, report))
}

/// `exp(−x)`; a single update moves the field by O(c/N), where four
/// Taylor terms are exact to double precision.
#[inline]
fn exp_neg_small(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * (1.0 - x * (0.5 - x * (1.0 / 6.0)))
    } else {
        (-x).exp()
    }
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let z: f64 = v.iter().sum();
    if !(z > 0.0 && z.is_finite()) {
        return None;
    }
    let inv = 1.0 / z;
    v.iter_mut().for_each(|x| *x *= inv);
    Some(())
}
