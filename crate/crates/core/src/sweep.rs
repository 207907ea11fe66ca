//! Overlap-versus-noise sweeps: every `(c, ε, sample)` cell generates a graph,
//! runs EM with BP and scores the result against the planted partition.
//!
//! Cell seeds are `seed_base ^ cell_hash(c_index, eps_index, sample_index)`
//! (see [`cell_seed`]), so any single cell can be regenerated on its own.
//! Cells run on a bounded rayon pool and rows come out in cell order
//! whatever the scheduling.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bp::{BpReport, BpSettings, InitMode};
use crate::em::{em_run, EmConfig, EmOutcome};
use crate::error::{Error, Result};
use crate::eval::{chance_baseline, hard_assign_with_resolution, overlap};
use crate::generator::{generate, mix64, Graph, PartitionMode, PlantedPartition};
use crate::io::load_structure;
use crate::model::{InferenceModel, ModelSpec, Structure};
use crate::threshold;

/// Noise values of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonGrid {
    /// `count` evenly spaced points from `start` to `stop` inclusive.
    Linear { start: f64, stop: f64, count: usize },
    Values { values: Vec<f64> },
}

impl EpsilonGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let values = match self {
            EpsilonGrid::Linear { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                _ => (0..*count)
                    .map(|k| start + (stop - start) * k as f64 / (*count - 1) as f64)
                    .collect(),
            },
            EpsilonGrid::Values { values } => values.clone(),
        };
        if values.is_empty() {
            return Err(Error::InvalidParams("epsilon grid is empty".into()));
        }
        if let Some(bad) = values.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(Error::InvalidParams(format!("epsilon {bad} outside (0, 1]")));
        }
        Ok(values)
    }
}

/// Default assignment resolution: an order of magnitude above the BP
/// message tolerance, which is how far converged marginals sit from an exact
/// fixed point.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-5;

/// EM and BP settings for one inference run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceSettings {
    pub learn_gamma: bool,
    pub learn_omega: bool,
    pub em_max_iters: usize,
    pub em_tol: f64,
    pub bp_tol: f64,
    pub bp_max_sweeps: usize,
    pub init: InitMode,
    pub noise: f64,
    pub damping: f64,
    /// Marginal differences below this count as ties when assigning labels.
    pub tie_tolerance: f64,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        let bp = BpSettings::default();
        InferenceSettings {
            learn_gamma: true,
            learn_omega: true,
            em_max_iters: 50,
            em_tol: 1e-6,
            bp_tol: bp.tol,
            bp_max_sweeps: bp.max_sweeps,
            init: bp.init,
            noise: bp.noise,
            damping: bp.damping,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
        }
    }
}

impl InferenceSettings {
    pub fn bp_settings(&self, seed: u64) -> BpSettings {
        BpSettings {
            init: self.init,
            noise: self.noise,
            tol: self.bp_tol,
            max_sweeps: self.bp_max_sweeps,
            damping: self.damping,
            seed,
            external_field: true,
        }
    }

    pub fn em_config(&self, init: InferenceModel) -> EmConfig {
        EmConfig {
            learn_gamma: self.learn_gamma,
            learn_omega: self.learn_omega,
            max_iters: self.em_max_iters,
            param_tol: self.em_tol,
            init,
        }
    }
}

/// Result of EM + BP on one graph.
#[derive(Debug, Clone)]
pub struct InferenceRun {
    pub outcome: EmOutcome,
    pub assignments: Vec<usize>,
    pub overlap: Option<f64>,
}

impl InferenceRun {
    pub fn bp_sweeps(&self) -> usize {
        self.outcome.history.iter().map(|r| r.bp_sweeps).sum()
    }

    pub fn last_bp(&self) -> BpReport {
        self.outcome.last_bp
    }

    /// EM settled and the final BP run met its tolerance.
    pub fn converged(&self) -> bool {
        self.outcome.converged && self.outcome.last_bp.converged
    }
}

/// Runs EM from `init` with BP seeded by `seed`; scores against `planted`
/// when given. Planted labels are only used for scoring unless the BP init
/// mode asks for them.
pub fn infer(
    graph: &Graph,
    init: InferenceModel,
    settings: &InferenceSettings,
    seed: u64,
    planted: Option<&PlantedPartition>,
) -> Result<InferenceRun> {
    let q = init.q();
    let config = settings.em_config(init);
    let outcome = em_run(graph, &config, &settings.bp_settings(seed), planted)?;
    let assignments = hard_assign_with_resolution(outcome.state.marginals(), q, settings.tie_tolerance);
    let overlap = planted
        .map(|p| overlap(&p.labels, &assignments, q))
        .transpose()?;
    Ok(InferenceRun {
        outcome,
        assignments,
        overlap,
    })
}

/// Generates the graph of one cell and runs inference on it, starting EM at
/// the generating parameters.
pub fn run_cell(
    spec: &ModelSpec,
    partition: PartitionMode,
    settings: &InferenceSettings,
    seed: u64,
) -> Result<(PlantedPartition, InferenceRun)> {
    let (planted, graph) = generate(spec, partition, seed)?;
    let run = infer(&graph, spec.inference_model(), settings, seed, Some(&planted))?;
    Ok((planted, run))
}

/// Stable hash of a cell position.
pub fn cell_hash(c_index: usize, eps_index: usize, sample_index: usize) -> u64 {
    mix64(mix64(mix64(c_index as u64) ^ eps_index as u64) ^ sample_index as u64)
}

pub fn cell_seed(base: u64, c_index: usize, eps_index: usize, sample_index: usize) -> u64 {
    base ^ cell_hash(c_index, eps_index, sample_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Preset name or structure file path.
    pub structure: String,
    pub n: usize,
    pub c_list: Vec<f64>,
    pub epsilon_grid: EpsilonGrid,
    pub samples: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_partition")]
    pub partition: PartitionMode,
    #[serde(default)]
    pub inference: InferenceSettings,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    /// Write measured `wall_ms`; when off the column is 0 and reruns are
    /// byte-identical.
    #[serde(default = "default_true")]
    pub record_timing: bool,
}

fn default_name() -> String {
    "sweep".into()
}

fn default_partition() -> PartitionMode {
    PartitionMode::ExactSizes
}

fn default_true() -> bool {
    true
}

/// EM iteration cap of the presets. Close to the threshold BP relaxes
/// critically slowly; these caps bound the cost of a cell without changing
/// the outcome away from it.
pub const PRESET_EM_ITERS: usize = 10;
pub const PRESET_BP_SWEEPS: usize = 200;

/// Names accepted by [`SweepConfig::preset`].
pub const SWEEP_PRESETS: &[&str] = &["fig3", "fig2-demo"];

impl SweepConfig {
    /// * `fig3`: the `fig1c` structure at N = 30000, c = 6, 19 noise values
    ///   in [0.05, 0.95], 10 samples, prior fixed at (¼, ½, ¼).
    /// * `fig2-demo`: the constructed `demo-regular-q3` stand-in at
    ///   N = 30000, c ∈ {4, 5, 6}, same grid, full EM. It checks the
    ///   predicted thresholds of a 2-regular module graph with |λ₂| = 1; it
    ///   is not any published structure.
    ///
    /// Both start EM at the generating parameters and cap it at
    /// [`PRESET_EM_ITERS`] iterations of at most [`PRESET_BP_SWEEPS`] sweeps.
    pub fn preset(name: &str) -> Result<Self> {
        let grid = EpsilonGrid::Linear {
            start: 0.05,
            stop: 0.95,
            count: 19,
        };
        let base = SweepConfig {
            name: name.to_string(),
            structure: String::new(),
            n: 30_000,
            c_list: vec![],
            epsilon_grid: grid,
            samples: 10,
            seed_base: 0,
            partition: PartitionMode::ExactSizes,
            inference: InferenceSettings {
                em_max_iters: PRESET_EM_ITERS,
                bp_max_sweeps: PRESET_BP_SWEEPS,
                ..InferenceSettings::default()
            },
            workers: 0,
            record_timing: true,
        };
        match name {
            "fig3" => Ok(SweepConfig {
                structure: "fig1c".into(),
                c_list: vec![6.0],
                inference: InferenceSettings {
                    learn_gamma: false,
                    ..base.inference
                },
                ..base
            }),
            "fig2-demo" => Ok(SweepConfig {
                structure: "demo-regular-q3".into(),
                c_list: vec![4.0, 5.0, 6.0],
                ..base
            }),
            _ => Err(Error::InvalidParams(format!(
                "unknown sweep preset {name:?}; known: {}",
                SWEEP_PRESETS.join(", ")
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<Vec<f64>> {
        if self.samples == 0 {
            return Err(Error::InvalidParams("samples must be at least 1".into()));
        }
        if self.c_list.is_empty() {
            return Err(Error::InvalidParams("c_list is empty".into()));
        }
        self.epsilon_grid.values()
    }

    pub fn num_cells(&self) -> Result<usize> {
        Ok(self.c_list.len() * self.validate()?.len() * self.samples)
    }
}

/// One CSV row. `overlap` is blank and `error` set when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub structure_id: String,
    pub n: usize,
    pub q: usize,
    pub c: f64,
    pub epsilon: f64,
    pub sample_index: usize,
    pub seed: u64,
    pub overlap: Option<f64>,
    pub chance: f64,
    pub converged: bool,
    pub bp_sweeps: usize,
    pub em_iters: usize,
    pub omega_in_hat: Option<f64>,
    pub omega_out_hat: Option<f64>,
    pub wall_ms: u64,
    pub error: String,
}

/// Mean and sample standard deviation of the successful overlaps of one
/// `(c, ε)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub c: f64,
    pub epsilon: f64,
    pub mean_overlap: Option<f64>,
    pub std_overlap: Option<f64>,
    pub n_converged: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub summary: Vec<SummaryRow>,
}

impl SweepResult {
    pub fn point(&self, c: f64, epsilon: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.c == c && (r.epsilon - epsilon).abs() < 1e-12)
    }
}

fn error_tag(e: &Error) -> String {
    // single line, no separators that need quoting in the summary tools
    e.to_string().replace(['\n', ','], " ")
}

/// Runs every cell and summarizes. Individual cell failures become error
/// rows; the whole sweep fails only when every cell does.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    let eps_values = config.validate()?;
    let structure = load_structure(&config.structure)?;
    let chance = chance_baseline(structure.gamma_planted.as_slice());
    let mut cells = Vec::new();
    for (ci, &c) in config.c_list.iter().enumerate() {
        for (ei, &eps) in eps_values.iter().enumerate() {
            for si in 0..config.samples {
                cells.push((ci, c, ei, eps, si));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    let run_one = |&(ci, c, ei, eps, si): &(usize, f64, usize, f64, usize)| -> SweepRecord {
        let seed = cell_seed(config.seed_base, ci, ei, si);
        let start = Instant::now();
        let result = ModelSpec::new(structure.clone(), config.n, c, eps)
            .and_then(|spec| run_cell(&spec, config.partition, &config.inference, seed));
        let wall_ms = if config.record_timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        let mut record = SweepRecord {
            structure_id: config.structure.clone(),
            n: config.n,
            q: structure.q,
            c,
            epsilon: eps,
            sample_index: si,
            seed,
            overlap: None,
            chance,
            converged: false,
            bp_sweeps: 0,
            em_iters: 0,
            omega_in_hat: None,
            omega_out_hat: None,
            wall_ms,
            error: String::new(),
        };
        match result {
            Ok((_, run)) => {
                record.overlap = run.overlap;
                record.converged = run.converged();
                record.bp_sweeps = run.bp_sweeps();
                record.em_iters = run.outcome.history.len();
                record.omega_in_hat = Some(run.outcome.model.affinity.omega_in);
                record.omega_out_hat = Some(run.outcome.model.affinity.omega_out);
            }
            Err(e) => {
                if let Error::EmAborted { history, .. } = &e {
                    record.em_iters = history.len();
                    record.bp_sweeps = history.iter().map(|r| r.bp_sweeps).sum();
                }
                record.error = error_tag(&e);
            }
        }
        record
    };
    let records: Vec<SweepRecord> = pool.install(|| {
        use rayon::prelude::*;
        cells.par_iter().map(run_one).collect()
    });
    if records.iter().all(|r| r.overlap.is_none()) {
        return Err(Error::InvalidParams(format!(
            "all {} sweep cells failed; first error: {}",
            records.len(),
            records[0].error
        )));
    }
    let summary = summarize(&records);
    Ok(SweepResult { records, summary })
}

/// Per-`(c, ε)` statistics in first-appearance order.
pub fn summarize(records: &[SweepRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(c, e)| c == r.c && e == r.epsilon) {
            keys.push((r.c, r.epsilon));
        }
    }
    keys.into_iter()
        .map(|(c, epsilon)| {
            let group: Vec<&SweepRecord> = records.iter().filter(|r| r.c == c && r.epsilon == epsilon).collect();
            let values: Vec<f64> = group.iter().filter_map(|r| r.overlap).collect();
            let (mean, std) = mean_std(&values);
            SummaryRow {
                c,
                epsilon,
                mean_overlap: mean,
                std_overlap: std,
                n_converged: group.iter().filter(|r| r.converged).count(),
            }
        })
        .collect()
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (Some(mean), Some(var.sqrt()))
}

pub fn records_csv(records: &[SweepRecord]) -> Result<String> {
    to_csv(records)
}

pub fn summary_csv(summary: &[SummaryRow]) -> Result<String> {
    to_csv(summary)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Parse(format!("csv: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Parse(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Gnuplot script drawing mean overlap with a ±std band per `c`, the
/// chance level and any finite predicted thresholds.
pub fn plot_script(
    config: &SweepConfig,
    structure: &Structure,
    summary_file: &str,
    image_file: &str,
) -> String {
    let chance = chance_baseline(structure.gamma_planted.as_slice());
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 800,560\n");
    s.push_str(&format!("set output '{image_file}'\n"));
    s.push_str(&format!("set title '{} (N = {})'\n", config.structure, config.n));
    s.push_str("set xlabel 'epsilon'\nset ylabel 'overlap'\nset yrange [0:1.05]\nset key bottom left\n");
    for c in &config.c_list {
        if let Ok(report) = threshold::analyze(structure, *c) {
            if let Some(eps) = report.epsilon_star {
                s.push_str(&format!(
                    "set arrow from {eps},0 to {eps},1.05 nohead dashtype 2 # threshold at c = {c}\n"
                ));
            }
        }
    }
    s.push_str(&format!("chance = {chance}\n"));
    let mut plots = Vec::new();
    for c in &config.c_list {
        let filter = format!("($1 == {c} ? $2 : 1/0)");
        plots.push(format!(
            "'{summary_file}' skip 1 using {filter}:($3-$4):($3+$4) with filledcurves fs transparent solid 0.25 notitle"
        ));
        plots.push(format!(
            "'{summary_file}' skip 1 using {filter}:3 with linespoints title 'c = {c}'"
        ));
    }
    plots.push("chance with lines dashtype 3 title 'chance'".into());
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct SweepOutputs {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

/// Writes `records_path`, `<stem>_summary.csv` and `<stem>.gp` next to it.
pub fn write_outputs(
    config: &SweepConfig,
    result: &SweepResult,
    records_path: &Path,
) -> Result<SweepOutputs> {
    let dir = records_path.parent().unwrap_or(Path::new(""));
    let stem = records_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| config.name.clone());
    let summary = dir.join(format!("{stem}_summary.csv"));
    let plot = dir.join(format!("{stem}.gp"));
    let structure = load_structure(&config.structure)?;
    std::fs::File::create(records_path)?.write_all(records_csv(&result.records)?.as_bytes())?;
    std::fs::write(&summary, summary_csv(&result.summary)?)?;
    let summary_name = summary.file_name().unwrap().to_string_lossy().into_owned();
    std::fs::write(
        &plot,
        plot_script(config, &structure, &summary_name, &format!("{stem}.png")),
    )?;
    Ok(SweepOutputs {
        records: records_path.to_path_buf(),
        summary,
        plot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SweepConfig {
        SweepConfig {
            name: "small".into(),
            structure: "community:2".into(),
            n: 300,
            c_list: vec![3.0, 6.0],
            epsilon_grid: EpsilonGrid::Values {
                values: vec![0.1, 1.0],
            },
            samples: 2,
            seed_base: 5,
            partition: PartitionMode::ExactSizes,
            inference: InferenceSettings {
                em_max_iters: 5,
                ..InferenceSettings::default()
            },
            workers: 1,
            record_timing: false,
        }
    }

    #[test]
    fn linear_grid() {
        let g = EpsilonGrid::Linear {
            start: 0.05,
            stop: 0.95,
            count: 19,
        };
        let v = g.values().unwrap();
        assert_eq!(v.len(), 19);
        assert!((v[1] - 0.1).abs() < 1e-15 && (v[18] - 0.95).abs() < 1e-15);
        assert!(EpsilonGrid::Values { values: vec![0.0] }.values().is_err());
        assert!(EpsilonGrid::Values { values: vec![1.5] }.values().is_err());
    }

    #[test]
    fn presets() {
        let fig3 = SweepConfig::preset("fig3").unwrap();
        assert_eq!(fig3.num_cells().unwrap(), 190);
        assert!(!fig3.inference.learn_gamma);
        let demo = SweepConfig::preset("fig2-demo").unwrap();
        assert_eq!(demo.num_cells().unwrap(), 570);
        assert!(SweepConfig::preset("nope").is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c = SweepConfig::from_json(
            r#"{"structure": "fig1c", "n": 100, "c_list": [6],
                "epsilon_grid": {"start": 0.1, "stop": 0.9, "count": 3}, "samples": 1}"#,
        )
        .unwrap();
        assert_eq!(c.epsilon_grid.values().unwrap().len(), 3);
        assert_eq!(c.inference, InferenceSettings::default());
        assert!(c.record_timing);
    }

    #[test]
    fn cell_seeds_differ() {
        let mut seen = std::collections::HashSet::new();
        for ci in 0..3 {
            for ei in 0..19 {
                for si in 0..10 {
                    assert!(seen.insert(cell_seed(0, ci, ei, si)));
                }
            }
        }
    }

    #[test]
    fn rows_in_cell_order_and_reproducible() {
        let config = small_config();
        let a = run_sweep(&config).unwrap();
        assert_eq!(a.records.len(), 8);
        let order: Vec<(f64, f64, usize)> = a.records.iter().map(|r| (r.c, r.epsilon, r.sample_index)).collect();
        assert_eq!(order[0], (3.0, 0.1, 0));
        assert_eq!(order[1], (3.0, 0.1, 1));
        assert_eq!(order[2], (3.0, 1.0, 0));
        assert_eq!(order[7], (6.0, 1.0, 1));
        let b = run_sweep(&SweepConfig { workers: 3, ..config }).unwrap();
        assert_eq!(records_csv(&a.records).unwrap(), records_csv(&b.records).unwrap());
        assert_eq!(a.summary.len(), 4);
        let csv = summary_csv(&a.summary).unwrap();
        assert!(csv.starts_with("c,epsilon,mean_overlap,std_overlap,n_converged\n"));
    }

    #[test]
    fn single_cell_matches_direct_inference() {
        let config = SweepConfig {
            c_list: vec![6.0],
            epsilon_grid: EpsilonGrid::Values { values: vec![0.1] },
            samples: 1,
            ..small_config()
        };
        let sweep = run_sweep(&config).unwrap();
        let seed = cell_seed(config.seed_base, 0, 0, 0);
        assert_eq!(sweep.records[0].seed, seed);
        let spec = ModelSpec::new(Structure::preset("community:2").unwrap(), 300, 6.0, 0.1).unwrap();
        let (_, run) = run_cell(&spec, PartitionMode::ExactSizes, &config.inference, seed).unwrap();
        assert_eq!(sweep.records[0].overlap, run.overlap);
        assert_eq!(sweep.records[0].bp_sweeps, run.bp_sweeps());
    }

    #[test]
    fn failures_become_rows() {
        // c far above n makes omega_in exceed one at every cell
        let config = SweepConfig {
            n: 10,
            c_list: vec![50.0],
            ..small_config()
        };
        assert!(run_sweep(&config).is_err());
        let config = SweepConfig {
            n: 10,
            c_list: vec![3.0, 50.0],
            ..small_config()
        };
        let r = run_sweep(&config).unwrap();
        let failed: Vec<&SweepRecord> = r.records.iter().filter(|x| x.c == 50.0).collect();
        assert!(failed.iter().all(|x| x.overlap.is_none() && !x.error.is_empty()));
        let csv = records_csv(&r.records).unwrap();
        assert_eq!(csv.lines().count(), r.records.len() + 1);
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[]), (None, None));
    }
}
