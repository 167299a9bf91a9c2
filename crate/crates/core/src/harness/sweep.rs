use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::{MeibError, Result};
use crate::model::{train, MeibModel, ModelSpec, MultiViewBatch, TrainHistory};
use crate::synth::{generate, SynthConfig, SynthDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Meib,
    Dnn,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Meib => "MEIB",
            Method::Dnn => "DNN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "MEIB" => Some(Method::Meib),
            "DNN" => Some(Method::Dnn),
            _ => None,
        }
    }
}

/// One trained model. Missing measurements mean the run failed.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub value1: f64,
    pub value2: Option<f64>,
    pub seed: u64,
    pub method: Method,
    pub test_error: Option<f64>,
    /// Final per-view information in bits on the training set.
    pub mi: Vec<f64>,
    pub wall_ms: u64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// ℓ₂ norm of one input column of an encoder's first layer.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightNormRow {
    pub value: f64,
    pub seed: u64,
    /// `MEIB`, `DNN`, or `INIT` for the untrained network.
    pub source: String,
    /// 1-based.
    pub view: usize,
    /// 1-based input dimension.
    pub dim: usize,
    pub norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub weight_norms: Vec<WeightNormRow>,
    /// Human-readable reasons for missing rows.
    pub failures: Vec<String>,
}

/// SplitMix64 finalizer, used to derive decorrelated seeds.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds for one repetition: data generation, parameter init and batch
/// shuffling are independent streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSeeds {
    pub data: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl RunSeeds {
    pub fn new(seed_base: u64, run: usize, train_seed: u64) -> Self {
        let data = seed_base.wrapping_add(run as u64);
        let init = mix_seed(data ^ 0x1D17_5EED);
        let shuffle = mix_seed(init ^ train_seed);
        Self { data, init, shuffle }
    }
}

pub fn model_spec(cfg: &ExperimentConfig, view_dims: Vec<usize>, classes: usize, betas: Vec<f64>) -> ModelSpec {
    let m = &cfg.model;
    ModelSpec {
        view_dims,
        encoder_layers: m.encoder_layers.clone(),
        fusion_layers: m.fusion_layers.clone(),
        classifier_hidden: m.classifier_hidden.clone(),
        num_classes: m.num_classes.unwrap_or(classes).max(classes),
        activation: m.activation,
        betas,
        kernel: m.kernel,
    }
}

/// Output of one training run.
pub struct TrainedRun {
    pub model: MeibModel,
    pub initial: MeibModel,
    pub history: TrainHistory,
    pub test_error: f64,
    pub mi: Vec<f64>,
    pub wall_ms: u64,
}

pub fn train_once(
    cfg: &ExperimentConfig,
    train_set: &MultiViewBatch,
    test_set: &MultiViewBatch,
    betas: Vec<f64>,
    seeds: RunSeeds,
) -> Result<TrainedRun> {
    let classes = train_set.num_classes().max(test_set.num_classes());
    let spec = model_spec(cfg, train_set.view_dims(), classes, betas);
    let mut model = MeibModel::new(&spec, seeds.init)?;
    let initial = model.clone();
    let tc = crate::model::TrainConfig {
        seed: seeds.shuffle,
        ..cfg.train.clone()
    };
    let start = Instant::now();
    let history = train(&mut model, train_set, &tc)?;
    let elapsed = start.elapsed().as_millis() as u64;
    let test_error = model.evaluate(test_set)?;
    let mi = model.view_information(train_set, cfg.mi_chunk())?;
    Ok(TrainedRun {
        model,
        initial,
        history,
        test_error,
        mi,
        wall_ms: if cfg.record_wall_time { elapsed } else { 0 },
    })
}

/// What one cell varies.
#[derive(Clone, Copy, Debug)]
struct Cell {
    value1: f64,
    value2: Option<f64>,
    run: usize,
}

fn data_for(cfg: &ExperimentConfig, kind: ExperimentKind, value: f64, seed: u64) -> SynthConfig {
    let mut d = cfg.data.clone();
    d.seed = seed;
    match kind {
        ExperimentKind::NoiseSweep => d.noise_factor = value,
        ExperimentKind::DimSweep => d.extra_dim = value as usize,
        ExperimentKind::SampleSweep => d.s = value as usize,
        ExperimentKind::BetaGrid | ExperimentKind::SingleTrain => {}
    }
    d
}

struct CellOutcome {
    rows: Vec<ResultRow>,
    norms: Vec<WeightNormRow>,
    failures: Vec<String>,
}

fn norm_rows(model: &MeibModel, value: f64, seed: u64, source: &str) -> Vec<WeightNormRow> {
    let mut out = Vec::new();
    for (v, norms) in model.input_weight_norms().iter().enumerate() {
        for (d, &norm) in norms.iter().enumerate() {
            out.push(WeightNormRow {
                value,
                seed,
                source: source.into(),
                view: v + 1,
                dim: d + 1,
                norm,
            });
        }
    }
    out
}

fn run_cell(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    cell: Cell,
    methods: &[(Method, Vec<f64>)],
    record_norms: bool,
) -> CellOutcome {
    let seeds = RunSeeds::new(cfg.seed_base, cell.run, cfg.train.seed);
    let mut out = CellOutcome {
        rows: Vec::new(),
        norms: Vec::new(),
        failures: Vec::new(),
    };
    let missing = |method: Method| ResultRow {
        experiment: cfg.name.clone(),
        kind,
        value1: cell.value1,
        value2: cell.value2,
        seed: seeds.data,
        method,
        test_error: None,
        mi: Vec::new(),
        wall_ms: 0,
        epochs_run: 0,
        stopped_early: false,
    };
    let data: Result<SynthDataset> = generate(&data_for(cfg, kind, cell.value1, seeds.data));
    let data = match data {
        Ok(d) => d,
        Err(e) => {
            for (m, _) in methods {
                out.rows.push(missing(*m));
                out.failures.push(format!(
                    "value {} seed {} {}: data generation failed: {e}",
                    cell.value1,
                    seeds.data,
                    m.as_str()
                ));
            }
            return out;
        }
    };
    for (i, (method, betas)) in methods.iter().enumerate() {
        match train_once(cfg, &data.train, &data.test, betas.clone(), seeds) {
            Ok(run) => {
                if record_norms {
                    if i == 0 {
                        out.norms.extend(norm_rows(&run.initial, cell.value1, seeds.data, "INIT"));
                    }
                    out.norms
                        .extend(norm_rows(&run.model, cell.value1, seeds.data, method.as_str()));
                }
                out.rows.push(ResultRow {
                    test_error: Some(run.test_error),
                    mi: run.mi,
                    wall_ms: run.wall_ms,
                    epochs_run: run.history.epochs.len(),
                    stopped_early: run.history.stopped_early,
                    ..missing(*method)
                });
            }
            Err(e) => {
                out.rows.push(missing(*method));
                out.failures.push(format!(
                    "value {} seed {} {}: {e}",
                    cell.value1,
                    seeds.data,
                    method.as_str()
                ));
            }
        }
    }
    out
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| MeibError::Config(format!("cannot start {threads} worker threads: {e}")))
}

/// A cell, the (method, betas) runs it trains and whether to record norms.
type CellPlan = (Cell, Vec<(Method, Vec<f64>)>, bool);

fn execute(cfg: &ExperimentConfig, kind: ExperimentKind, cells: Vec<CellPlan>) -> Result<SweepResult> {
    let pool = thread_pool(cfg.threads)?;
    // `collect` on an indexed parallel iterator keeps input order, so the
    // output never depends on scheduling.
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .par_iter()
            .map(|(cell, methods, norms)| run_cell(cfg, kind, *cell, methods, *norms))
            .collect()
    });
    let mut result = SweepResult::default();
    for o in outcomes {
        result.rows.extend(o.rows);
        result.weight_norms.extend(o.norms);
        result.failures.extend(o.failures);
    }
    Ok(result)
}

fn betas_or_err(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    cfg.model
        .betas
        .clone()
        .ok_or_else(|| MeibError::Config("betas must be set or tuned before running".into()))
}

/// MEIB and its β = 0 baseline for every (value, repetition).
fn paired_sweep(cfg: &ExperimentConfig, kind: ExperimentKind, norm_value: Option<f64>) -> Result<SweepResult> {
    cfg.validate()?;
    let betas = betas_or_err(cfg)?;
    let zeros = vec![0.0; betas.len()];
    let mut cells = Vec::new();
    for &value in &cfg.values()? {
        for run in 0..cfg.repeats {
            cells.push((
                Cell {
                    value1: value,
                    value2: None,
                    run,
                },
                vec![(Method::Meib, betas.clone()), (Method::Dnn, zeros.clone())],
                norm_value == Some(value),
            ));
        }
    }
    execute(cfg, kind, cells)
}

pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    paired_sweep(cfg, ExperimentKind::NoiseSweep, None)
}

/// Also records first-layer weight norms at the configured value (default:
/// the largest extra dimension).
pub fn run_dim_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let values = cfg.values()?;
    let at = cfg
        .sweep
        .weight_norm_value
        .or_else(|| values.iter().copied().reduce(f64::max));
    paired_sweep(cfg, ExperimentKind::DimSweep, at)
}

pub fn run_sample_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    paired_sweep(cfg, ExperimentKind::SampleSweep, None)
}

/// Every (β₁, β₂) pair as a MEIB cell, preceded by the β = 0 baseline and,
/// when enabled, an explicit MEIB (0, 0) cell.
pub fn run_beta_grid(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for run in 0..cfg.repeats {
        let mut methods = vec![(Method::Dnn, vec![0.0, 0.0])];
        if cfg.sweep.include_zero_cell {
            methods.insert(0, (Method::Meib, vec![0.0, 0.0]));
        }
        cells.push((
            Cell {
                value1: 0.0,
                value2: Some(0.0),
                run,
            },
            methods,
            false,
        ));
    }
    for &b1 in &cfg.values()? {
        for &b2 in &cfg.values2()? {
            for run in 0..cfg.repeats {
                cells.push((
                    Cell {
                        value1: b1,
                        value2: Some(b2),
                        run,
                    },
                    vec![(Method::Meib, vec![b1, b2])],
                    false,
                ));
            }
        }
    }
    execute(cfg, ExperimentKind::BetaGrid, cells)
}

/// Picks the (β₁, β₂) pair from the tuning grid with the lowest test error
/// on a held-out data seed; ties keep the earlier pair.
pub fn tune_betas(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let mut probe = cfg.clone();
    probe.kind = Some(ExperimentKind::BetaGrid);
    probe.repeats = 1;
    probe.seed_base = cfg.seed_base.wrapping_add(cfg.tuning.seed_offset);
    probe.sweep.values = Some(cfg.tuning.grid.clone());
    probe.sweep.values2 = Some(cfg.tuning.grid.clone());
    probe.sweep.include_zero_cell = false;
    let result = run_beta_grid(&probe)?;
    let best = result
        .rows
        .iter()
        .filter(|r| r.method == Method::Meib)
        .filter_map(|r| Some((r.test_error?, r.value1, r.value2?)))
        .fold(None::<(f64, f64, f64)>, |best, c| match best {
            Some(b) if b.0 <= c.0 => Some(b),
            _ => Some(c),
        });
    let (_, b1, b2) =
        best.ok_or_else(|| MeibError::Config("every beta tuning run failed".into()))?;
    Ok(vec![b1, b2])
}

/// Fills in tuned betas when the config leaves them unset (never for a β grid).
pub fn resolve_betas(cfg: &mut ExperimentConfig) -> Result<()> {
    if cfg.model.betas.is_none() && cfg.kind()? != ExperimentKind::BetaGrid {
        cfg.model.betas = Some(tune_betas(cfg)?);
    }
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepResult> {
    match cfg.kind()? {
        ExperimentKind::NoiseSweep => run_noise_sweep(cfg),
        ExperimentKind::DimSweep => run_dim_sweep(cfg),
        ExperimentKind::SampleSweep => run_sample_sweep(cfg),
        ExperimentKind::BetaGrid => run_beta_grid(cfg),
        ExperimentKind::SingleTrain => Err(MeibError::Config(
            "single training runs go through the train subcommand".into(),
        )),
    }
}
