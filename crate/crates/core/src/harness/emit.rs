use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, ExperimentKind};
use super::sweep::{Method, ResultRow, SweepResult};
use crate::error::{MeibError, Result};

pub const RESULTS_HEADER: &str =
    "experiment,kind,value1,value2,seed,method,test_error,mi_view1,mi_view2,wall_ms";
pub const SUMMARY_HEADER: &str = "experiment,kind,value1,value2,method,n,test_error_mean,test_error_std,mi_view1_mean,mi_view2_mean";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn result_line(r: &ResultRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.experiment,
        r.kind.as_str(),
        r.value1,
        opt(r.value2),
        r.seed,
        r.method.as_str(),
        opt(r.test_error),
        opt(r.mi.first().copied()),
        opt(r.mi.get(1).copied()),
        r.wall_ms
    )
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate of the rows sharing (value1, value2, method).
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub value1: f64,
    pub value2: Option<f64>,
    pub method: Method,
    /// Rows with a measurement; failed runs are excluded.
    pub n: usize,
    pub error_mean: f64,
    pub error_std: f64,
    pub mi_means: [Option<f64>; 2],
}

/// Groups in first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(u64, Option<u64>, Method)> = Vec::new();
    let mut groups: HashMap<(u64, Option<u64>, Method), Vec<&ResultRow>> = HashMap::new();
    for r in rows {
        let key = (r.value1.to_bits(), r.value2.map(f64::to_bits), r.method);
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let members = &groups[&key];
            let done: Vec<&&ResultRow> = members.iter().filter(|r| r.test_error.is_some()).collect();
            let errors: Vec<f64> = done.iter().filter_map(|r| r.test_error).collect();
            let (error_mean, error_std) = mean_std(&errors);
            let mi_mean = |i: usize| {
                let v: Vec<f64> = done.iter().filter_map(|r| r.mi.get(i).copied()).collect();
                (!v.is_empty()).then(|| mean_std(&v).0)
            };
            let first = members[0];
            SummaryRow {
                experiment: first.experiment.clone(),
                kind: first.kind,
                value1: first.value1,
                value2: first.value2,
                method: first.method,
                n: errors.len(),
                error_mean,
                error_std,
                mi_means: [mi_mean(0), mi_mean(1)],
            }
        })
        .collect()
}

fn write_lines(path: &Path, header: &str, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn finite_or_empty(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Writes `results.csv`, `summary.csv`, `plotdata_meib.csv`,
/// `plotdata_dnn.csv`, `runs.csv`, `config.toml` and, for dimension sweeps,
/// `weight_norms.csv`. Returns the paths written.
pub fn emit_results(result: &SweepResult, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, header: &str, lines: Vec<String>| -> Result<()> {
        let path = dir.join(name);
        write_lines(&path, header, lines)?;
        written.push(path);
        Ok(())
    };

    put("results.csv", RESULTS_HEADER, result.rows.iter().map(result_line).collect())?;

    let summary = summarize(&result.rows);
    put(
        "summary.csv",
        SUMMARY_HEADER,
        summary
            .iter()
            .map(|s| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{}",
                    s.experiment,
                    s.kind.as_str(),
                    s.value1,
                    opt(s.value2),
                    s.method.as_str(),
                    s.n,
                    finite_or_empty(s.error_mean),
                    finite_or_empty(s.error_std),
                    opt(s.mi_means[0]),
                    opt(s.mi_means[1]),
                )
            })
            .collect(),
    )?;

    let grid = cfg.kind == Some(ExperimentKind::BetaGrid);
    for method in [Method::Meib, Method::Dnn] {
        let lines = summary
            .iter()
            .filter(|s| s.method == method)
            .map(|s| {
                let (m, sd) = (finite_or_empty(s.error_mean), finite_or_empty(s.error_std));
                if grid {
                    format!("{},{},{m},{sd}", s.value1, opt(s.value2))
                } else {
                    format!("{},{m},{sd}", s.value1)
                }
            })
            .collect();
        let header = if grid { "x,y,mean,std" } else { "x,mean,std" };
        put(&format!("plotdata_{}.csv", method.as_str().to_lowercase()), header, lines)?;
    }

    put(
        "runs.csv",
        "experiment,value1,value2,seed,method,epochs_run,stopped_early",
        result
            .rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{}",
                    r.experiment,
                    r.value1,
                    opt(r.value2),
                    r.seed,
                    r.method.as_str(),
                    r.epochs_run,
                    r.stopped_early
                )
            })
            .collect(),
    )?;

    if cfg.kind == Some(ExperimentKind::DimSweep) {
        put(
            "weight_norms.csv",
            "value,seed,source,view,dim,norm",
            result
                .weight_norms
                .iter()
                .map(|w| format!("{},{},{},{},{},{}", w.value, w.seed, w.source, w.view, w.dim, w.norm))
                .collect(),
        )?;
    }

    let snapshot = dir.join("config.toml");
    fs::write(&snapshot, cfg.to_toml_string()?)?;
    written.push(snapshot);
    Ok(written)
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeibError {
    MeibError::Csv {
        path: PathBuf::from("results.csv"),
        message: format!("line {line}: {}", msg.into()),
    }
}

/// Parses a `results.csv` written by [`emit_results`]. Bookkeeping fields
/// absent from the file (`epochs_run`, `stopped_early`) are zeroed.
pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULTS_HEADER => {}
        _ => return Err(parse_err(1, "unexpected header")),
    }
    let num = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| parse_err(line, format!("bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(parse_err(ln, format!("expected 10 fields, got {}", f.len())));
        }
        let kind = ExperimentKind::parse(f[1]).ok_or_else(|| parse_err(ln, "unknown kind"))?;
        let method = Method::parse(f[5]).ok_or_else(|| parse_err(ln, "unknown method"))?;
        let mut mi = Vec::new();
        for cell in [f[7], f[8]] {
            if let Some(v) = num(cell, ln)? {
                mi.push(v);
            }
        }
        rows.push(ResultRow {
            experiment: f[0].to_string(),
            kind,
            value1: num(f[2], ln)?.ok_or_else(|| parse_err(ln, "missing value1"))?,
            value2: num(f[3], ln)?,
            seed: f[4].parse().map_err(|_| parse_err(ln, "bad seed"))?,
            method,
            test_error: num(f[6], ln)?,
            mi,
            wall_ms: f[9].parse().map_err(|_| parse_err(ln, "bad wall time"))?,
            epochs_run: 0,
            stopped_early: false,
        });
    }
    Ok(rows)
}
