//! CSV ingestion and export of multi-view datasets, stratified splitting and
//! per-feature standardization.
//!
//! Views are aligned by row order: row `m` of every file is sample `m`.
//! Labels live in the first view's file. Exported numbers use 17 significant
//! digits so a write/read cycle is lossless.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeibError, Result};
use crate::linalg::DenseMatrix;
use crate::model::MultiViewBatch;

/// The ChaCha20 stream reserved for splitting, so split draws never overlap
/// generation draws made from the same seed on stream 0.
const SPLIT_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("label".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvViewSpec {
    pub paths: Vec<PathBuf>,
    /// Looked up in the first file. Other files drop a column of the same
    /// name when they have headers.
    #[serde(default)]
    pub label_column: LabelColumn,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

impl CsvViewSpec {
    pub fn new(paths: Vec<PathBuf>) -> Self {
        Self {
            paths,
            label_column: LabelColumn::default(),
            delimiter: ',',
            has_header: true,
        }
    }
}

/// A loaded dataset plus the original label strings, indexed by class id.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedCsv {
    pub batch: MultiViewBatch,
    pub class_names: Vec<String>,
}

fn csv_err(path: &Path, message: impl Into<String>) -> MeibError {
    MeibError::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn delimiter_byte(path: &Path, c: char) -> Result<u8> {
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        Err(csv_err(path, format!("delimiter {c:?} is not a single ASCII byte")))
    }
}

struct RawTable {
    header: Option<Vec<String>>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path, delimiter: char, has_header: bool) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_byte(path, delimiter)?)
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record.map_err(|e| csv_err(path, e.to_string()))?);
    }
    if rows.is_empty() {
        return Err(csv_err(path, "file is empty"));
    }
    let header = if has_header {
        Some(rows.remove(0).iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    if rows.is_empty() {
        return Err(MeibError::Empty(format!("{} has a header but no data rows", path.display())));
    }
    Ok(RawTable { header, rows })
}

fn resolve_label(path: &Path, table: &RawTable, label: &LabelColumn) -> Result<usize> {
    let width = table.rows[0].len();
    match label {
        LabelColumn::Index(i) if *i < width => Ok(*i),
        LabelColumn::Index(i) => Err(csv_err(
            path,
            format!("label column index {i} is out of range for {width} columns"),
        )),
        LabelColumn::Name(name) => table
            .header
            .as_ref()
            .ok_or_else(|| csv_err(path, format!("label column {name:?} needs a header row")))?
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_err(path, format!("missing label column {name:?}"))),
    }
}

fn parse_features(path: &Path, table: &RawTable, skip: Option<usize>) -> Result<DenseMatrix> {
    let width = table.rows[0].len();
    let cols = width - usize::from(skip.is_some());
    if cols == 0 {
        return Err(csv_err(path, "no feature columns"));
    }
    let first_data_line = 1 + usize::from(table.header.is_some());
    let mut data = Vec::with_capacity(table.rows.len() * cols);
    for (r, record) in table.rows.iter().enumerate() {
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == skip {
                continue;
            }
            let value: f64 = cell.trim().parse().map_err(|_| {
                csv_err(
                    path,
                    format!(
                        "non-numeric cell {cell:?} at line {}, column {}",
                        first_data_line + r,
                        c + 1
                    ),
                )
            })?;
            data.push(value);
        }
    }
    DenseMatrix::new(table.rows.len(), cols, data)
}

/// Loads aligned views; labels are re-encoded to `0..C` in first-seen order.
pub fn load_multiview_csv(spec: &CsvViewSpec) -> Result<LoadedCsv> {
    let (first_path, rest) = spec
        .paths
        .split_first()
        .ok_or_else(|| MeibError::Config("at least one view file is required".into()))?;
    let first = read_table(first_path, spec.delimiter, spec.has_header)?;
    let label_idx = resolve_label(first_path, &first, &spec.label_column)?;

    let mut codes: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let labels: Vec<usize> = first
        .rows
        .iter()
        .map(|row| {
            let key = row[label_idx].trim().to_string();
            *codes.entry(key.clone()).or_insert_with(|| {
                class_names.push(key);
                class_names.len() - 1
            })
        })
        .collect();

    let mut views = vec![parse_features(first_path, &first, Some(label_idx))?];
    for path in rest {
        let table = read_table(path, spec.delimiter, spec.has_header)?;
        if table.rows.len() != labels.len() {
            return Err(csv_err(
                path,
                format!(
                    "has {} rows but {} has {}",
                    table.rows.len(),
                    first_path.display(),
                    labels.len()
                ),
            ));
        }
        let skip = match (&spec.label_column, &table.header) {
            (LabelColumn::Name(name), Some(h)) => h.iter().position(|c| c == name),
            _ => None,
        };
        views.push(parse_features(path, &table, skip)?);
    }
    Ok(LoadedCsv {
        batch: MultiViewBatch::new(views, labels)?,
        class_names,
    })
}

/// Writes one view with a `f1..fd` header, optionally followed by a `label`
/// column.
pub fn write_view_csv(path: &Path, view: &DenseMatrix, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != view.rows() {
            return Err(MeibError::dim(format!(
                "{} labels for a view with {} rows",
                l.len(),
                view.rows()
            )));
        }
    }
    let mut w = std::io::BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (1..=view.cols()).map(|c| format!("f{c}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for r in 0..view.rows() {
        let mut cells: Vec<String> = view.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(l) = labels {
            cells.push(l[r].to_string());
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<prefix>_view<i>.csv` for every view (1-based), labels in the
/// first file, and returns a spec that loads them back.
pub fn export_batch(batch: &MultiViewBatch, dir: &Path, prefix: &str) -> Result<CsvViewSpec> {
    batch.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(batch.num_views());
    for (i, view) in batch.views.iter().enumerate() {
        let path = dir.join(format!("{prefix}_view{}.csv", i + 1));
        write_view_csv(&path, view, (i == 0).then_some(batch.labels.as_slice()))?;
        paths.push(path);
    }
    Ok(CsvViewSpec::new(paths))
}

/// Per-class split keeping `round(fraction · n_c)` samples of each class in
/// train (at least one on each side). Row order within each side follows the
/// original order.
pub fn stratified_split(
    batch: &MultiViewBatch,
    fraction: f64,
    seed: u64,
) -> Result<(MultiViewBatch, MultiViewBatch)> {
    batch.validate()?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(MeibError::Parameter(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in batch.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class {
        let n = members.len();
        if n < 2 {
            return Err(MeibError::Parameter(format!(
                "class {class} has {n} sample(s); splitting needs at least 2"
            )));
        }
        let keep = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..keep]);
        test.extend_from_slice(&members[keep..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((batch.select(&train), batch.select(&test)))
}

/// FNV-1a over shapes and the bit patterns of every entry.
pub fn checksum(views: &[DenseMatrix]) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |word: u64| {
        for byte in word.to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(PRIME);
        }
    };
    for v in views {
        eat(v.rows() as u64);
        eat(v.cols() as u64);
        for x in v.data() {
            eat(x.to_bits());
        }
    }
    h
}

pub const STD_FLOOR: f64 = 1e-8;

/// Per-view, per-feature affine standardization fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<Vec<f64>>,
    /// Population standard deviations, floored at [`STD_FLOOR`].
    pub stds: Vec<Vec<f64>>,
    /// [`checksum`] of the matrices the statistics were fitted on.
    pub input_checksum: u64,
}

fn column_stats(view: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = view.rows() as f64;
    let mut means = Vec::with_capacity(view.cols());
    let mut stds = Vec::with_capacity(view.cols());
    for c in 0..view.cols() {
        let col = view.column(c);
        let first = col.first().copied().unwrap_or(0.0);
        if col.iter().all(|&v| v == first) {
            means.push(first);
            stds.push(STD_FLOOR);
            continue;
        }
        let mut mean = col.iter().sum::<f64>() / n;
        mean += col.iter().map(|v| v - mean).sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        means.push(mean);
        stds.push(var.sqrt().max(STD_FLOOR));
    }
    (means, stds)
}

impl Standardizer {
    pub fn fit(views: &[DenseMatrix]) -> Result<Self> {
        if views.iter().any(|v| v.rows() == 0) {
            return Err(MeibError::Empty("standardizer training rows".into()));
        }
        let (means, stds) = views.iter().map(column_stats).unzip();
        Ok(Self {
            means,
            stds,
            input_checksum: checksum(views),
        })
    }

    pub fn fit_batch(batch: &MultiViewBatch) -> Result<Self> {
        Self::fit(&batch.views)
    }

    fn check(&self, views: &[DenseMatrix]) -> Result<()> {
        if views.len() != self.means.len() {
            return Err(MeibError::dim(format!(
                "standardizer has {} views, batch has {}",
                self.means.len(),
                views.len()
            )));
        }
        for (i, (v, m)) in views.iter().zip(&self.means).enumerate() {
            if v.cols() != m.len() {
                return Err(MeibError::dim(format!(
                    "view {i}: fitted on {} features, got {}",
                    m.len(),
                    v.cols()
                )));
            }
        }
        Ok(())
    }

    fn map_views(
        &self,
        batch: &MultiViewBatch,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<MultiViewBatch> {
        self.check(&batch.views)?;
        let views = batch
            .views
            .iter()
            .enumerate()
            .map(|(i, v)| {
                DenseMatrix::from_fn(v.rows(), v.cols(), |r, c| {
                    f(v.get(r, c), self.means[i][c], self.stds[i][c])
                })
            })
            .collect();
        MultiViewBatch::new(views, batch.labels.clone())
    }

    pub fn apply(&self, batch: &MultiViewBatch) -> Result<MultiViewBatch> {
        self.map_views(batch, |x, m, s| (x - m) / s)
    }

    pub fn inverse(&self, batch: &MultiViewBatch) -> Result<MultiViewBatch> {
        self.map_views(batch, |x, m, s| x * s + m)
    }
}
