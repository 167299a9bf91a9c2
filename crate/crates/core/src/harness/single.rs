//! Single training runs, evaluation of a saved model and dataset export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, ExperimentKind};
use super::emit::RESULTS_HEADER;
use super::sweep::{train_once, tune_betas, RunSeeds};
use crate::data_io::{export_batch, load_multiview_csv, stratified_split, Standardizer};
use crate::error::{MeibError, Result};
use crate::model::{MeibModel, MultiViewBatch, TrainHistory};
use crate::synth::generate;

/// Train/test data for a single run, standardized when configured.
pub struct PreparedData {
    pub train: MultiViewBatch,
    pub test: MultiViewBatch,
    pub standardizer: Option<Standardizer>,
}

/// Synthetic data uses `seed_base` as its seed; CSV data is split with it.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    match &cfg.csv {
        None => {
            let mut d = cfg.data.clone();
            d.seed = cfg.seed_base;
            let ds = generate(&d)?;
            Ok(PreparedData {
                train: ds.train,
                test: ds.test,
                standardizer: None,
            })
        }
        Some(src) => {
            let loaded = load_multiview_csv(&src.views)?;
            let (train, test) = stratified_split(&loaded.batch, src.train_fraction, cfg.seed_base)?;
            if !src.standardize {
                return Ok(PreparedData {
                    train,
                    test,
                    standardizer: None,
                });
            }
            let s = Standardizer::fit_batch(&train)?;
            Ok(PreparedData {
                train: s.apply(&train)?,
                test: s.apply(&test)?,
                standardizer: Some(s),
            })
        }
    }
}

pub struct TrainOutcome {
    pub model: MeibModel,
    pub history: TrainHistory,
    pub test_error: f64,
    pub mi: Vec<f64>,
    pub wall_ms: u64,
    pub checkpoint: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Trains once, saves the checkpoint and writes `results.csv`,
/// `history.csv`, `config.toml` and (if fitted) `standardizer.json`.
pub fn run_train(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if cfg.model.betas.is_none() {
        if cfg.csv.is_some() {
            return Err(MeibError::Config("betas must be given explicitly for csv data".into()));
        }
        cfg.model.betas = Some(tune_betas(&cfg)?);
    }
    let data = prepare_data(&cfg)?;
    let betas = cfg.model.betas.clone().expect("resolved above");
    let seeds = RunSeeds::new(cfg.seed_base, 0, cfg.train.seed);
    let run = train_once(&cfg, &data.train, &data.test, betas, seeds)?;

    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let checkpoint = cfg.checkpoint.clone().unwrap_or_else(|| dir.join("model.ckpt"));
    run.model.save(&checkpoint)?;
    files.push(checkpoint.clone());

    let results = dir.join("results.csv");
    let cell = |i: usize| run.mi.get(i).map(|v| v.to_string()).unwrap_or_default();
    fs::write(
        &results,
        format!(
            "{RESULTS_HEADER}\n{},{},0,,{},MEIB,{},{},{},{}\n",
            cfg.name,
            ExperimentKind::SingleTrain.as_str(),
            seeds.data,
            run.test_error,
            cell(0),
            cell(1),
            run.wall_ms
        ),
    )?;
    files.push(results);

    let history = dir.join("history.csv");
    let mut w = std::io::BufWriter::new(fs::File::create(&history)?);
    let views = run.model.num_views();
    let mi_cols: Vec<String> = (1..=views).map(|i| format!("mi_view{i}")).collect();
    writeln!(w, "epoch,total,ce,{},accuracy", mi_cols.join(","))?;
    for e in &run.history.epochs {
        let mi: Vec<String> = e.loss.per_view_mi.iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            e.epoch, e.loss.total, e.loss.ce, mi.join(","), e.loss.accuracy
        )?;
    }
    w.flush()?;
    files.push(history);

    if let Some(s) = &data.standardizer {
        let path = dir.join("standardizer.json");
        let text = serde_json::to_string_pretty(s).map_err(|e| MeibError::Config(e.to_string()))?;
        fs::write(&path, text)?;
        files.push(path);
    }
    let snapshot = dir.join("config.toml");
    fs::write(&snapshot, cfg.to_toml_string()?)?;
    files.push(snapshot);

    Ok(TrainOutcome {
        model: run.model,
        history: run.history,
        test_error: run.test_error,
        mi: run.mi,
        wall_ms: run.wall_ms,
        checkpoint,
        files,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub train_error: f64,
    pub test_error: f64,
    /// Per-view information on the test split.
    pub mi: Vec<f64>,
}

/// Loads the configured checkpoint and scores it on the configured data.
pub fn run_eval(cfg: &ExperimentConfig, dir: &Path) -> Result<EvalOutcome> {
    cfg.validate()?;
    let model = MeibModel::load(&cfg.checkpoint_path())?;
    let data = prepare_data(cfg)?;
    if data.test.view_dims() != model.view_dims() {
        return Err(MeibError::dim(format!(
            "checkpoint expects view dims {:?}, data has {:?}",
            model.view_dims(),
            data.test.view_dims()
        )));
    }
    let out = EvalOutcome {
        train_error: model.evaluate(&data.train)?,
        test_error: model.evaluate(&data.test)?,
        mi: model.view_information(&data.test, cfg.mi_chunk())?,
    };
    fs::create_dir_all(dir)?;
    let mi: Vec<String> = out.mi.iter().map(|v| v.to_string()).collect();
    let cols: Vec<String> = (1..=out.mi.len()).map(|i| format!("mi_view{i}")).collect();
    fs::write(
        dir.join("eval.csv"),
        format!(
            "train_error,test_error,{}\n{},{},{}\n",
            cols.join(","),
            out.train_error,
            out.test_error,
            mi.join(",")
        ),
    )?;
    Ok(out)
}

/// Writes the train and test splits as CSV files plus a config snapshot.
pub fn run_gen_data(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut d = cfg.data.clone();
    d.seed = cfg.seed_base;
    d.validate().map_err(|e| MeibError::Config(e.to_string()))?;
    let ds = generate(&d)?;
    let mut files = export_batch(&ds.train, dir, "train")?.paths;
    files.extend(export_batch(&ds.test, dir, "test")?.paths);
    let snapshot = dir.join("config.toml");
    fs::write(&snapshot, cfg.to_toml_string()?)?;
    files.push(snapshot);
    Ok(files)
}
