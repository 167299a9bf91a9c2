//! C ABI over the `meib` library.
//!
//! Conventions:
//! * every fallible function returns a [`MeibStatus`]; results go through
//!   out-pointers, which are written only on success;
//! * matrices are dense, row-major `double` arrays with explicit shapes;
//! * models and datasets are opaque handles released with their `_free`
//!   function; passing NULL to a `_free` function is a no-op;
//! * after a failure, [`meib_last_error_message`] describes it until the next
//!   call on the same thread;
//! * panics never cross the boundary and are reported as
//!   `MEIB_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use meib::data_io::{load_multiview_csv, CsvViewSpec, LabelColumn};
use meib::kernel::{
    batch_mutual_information, estimate_sigma, matrix_renyi_entropy, mi_gradient_wrt_batch,
    normalized_gram, renyi_entropy, KernelConfig as CoreKernelConfig, SigmaMode,
};
use meib::model::{train, MeibModel, ModelSpec, MultiViewBatch, TrainConfig};
use meib::synth::{generate, SynthConfig as CoreSynthConfig};
use meib::{DenseMatrix, MeibError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeibStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numeric = 4,
    Io = 5,
    Parse = 6,
    Checkpoint = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// Trained or freshly initialized model.
pub struct MeibModelHandle {
    inner: MeibModel,
}

/// Aligned views plus labels.
pub struct MeibDatasetHandle {
    inner: MultiViewBatch,
}

/// Kernel settings for the entropy functions.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MeibKernelConfig {
    pub alpha: f64,
    pub k_nn: usize,
    pub sigma_floor: f64,
}

/// Synthetic two-view data settings.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MeibSynthConfig {
    pub samples_per_class: usize,
    pub latent_dim: usize,
    pub extra_dim: usize,
    pub noise_factor: f64,
    pub seed: u64,
    pub train_fraction: f64,
    /// Nonzero: the noise level is a variance. Zero: a standard deviation.
    pub noise_is_variance: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(MeibStatus, String);

impl From<MeibError> for Failure {
    fn from(e: MeibError) -> Self {
        let status = match &e {
            MeibError::Dimension(_) => MeibStatus::DimensionMismatch,
            MeibError::NonFinite(_) | MeibError::NotPsd(_) | MeibError::NoConvergence(_) => MeibStatus::Numeric,
            MeibError::Parameter(_) | MeibError::InsufficientSamples { .. } | MeibError::Empty(_) => {
                MeibStatus::InvalidArgument
            }
            MeibError::Csv { .. } | MeibError::Config(_) => MeibStatus::Parse,
            MeibError::Checkpoint(_) => MeibStatus::Checkpoint,
            MeibError::Io(_) => MeibStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: MeibStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MeibStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MeibStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            MeibStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        fail(MeibStatus::NullPointer, format!("{what} is NULL"))
    } else {
        Ok(())
    }
}

/// # Safety
/// `data` must point to `rows * cols` readable doubles.
unsafe fn matrix_from(data: *const f64, rows: usize, cols: usize, what: &str) -> Result<DenseMatrix, Failure> {
    non_null(data, what)?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(MeibStatus::InvalidArgument, format!("{what}: shape overflows")))?;
    let slice = std::slice::from_raw_parts(data, len);
    Ok(DenseMatrix::new(rows, cols, slice.to_vec())?)
}

/// # Safety
/// `s` must be NULL or a valid NUL-terminated string.
unsafe fn string_from(s: *const c_char, what: &str) -> Result<String, Failure> {
    non_null(s, what)?;
    CStr::from_ptr(s)
        .to_str()
        .map(str::to_string)
        .map_err(|_| Failure(MeibStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn kernel_from(cfg: &MeibKernelConfig) -> Result<CoreKernelConfig, Failure> {
    let k = CoreKernelConfig {
        alpha: cfg.alpha,
        k_nn: cfg.k_nn,
        sigma_floor: cfg.sigma_floor,
        sigma_mode: SigmaMode::PerBatch,
    };
    k.validate()?;
    Ok(k)
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn meib_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn meib_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// alpha = 1.01, k_nn = 10, sigma_floor = 1e-6.
#[no_mangle]
pub extern "C" fn meib_kernel_config_default() -> MeibKernelConfig {
    let d = CoreKernelConfig::default();
    MeibKernelConfig {
        alpha: d.alpha,
        k_nn: d.k_nn,
        sigma_floor: d.sigma_floor,
    }
}

/// 500 samples per class, latent 20, extra 5, no noise, seed 0, 80% train.
#[no_mangle]
pub extern "C" fn meib_synth_config_default() -> MeibSynthConfig {
    let d = CoreSynthConfig::default();
    MeibSynthConfig {
        samples_per_class: d.s,
        latent_dim: d.latent_dim,
        extra_dim: d.extra_dim,
        noise_factor: d.noise_factor,
        seed: d.seed,
        train_fraction: d.train_fraction,
        noise_is_variance: i32::from(d.noise_is_variance),
    }
}

/// Kernel width from the k-nearest-neighbour heuristic.
///
/// # Safety
/// `data` must hold `rows * cols` doubles; `out_sigma` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meib_estimate_sigma(
    data: *const f64,
    rows: usize,
    cols: usize,
    k_nn: usize,
    sigma_floor: f64,
    out_sigma: *mut f64,
) -> MeibStatus {
    guard(|| {
        non_null(out_sigma, "out_sigma")?;
        let m = matrix_from(data, rows, cols, "data")?;
        *out_sigma = estimate_sigma(&m, k_nn, sigma_floor)?;
        Ok(())
    })
}

/// Rényi entropy in bits of an `n x n` symmetric PSD matrix with unit trace.
///
/// # Safety
/// `matrix` must hold `n * n` doubles; `out_bits` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meib_matrix_entropy(
    matrix: *const f64,
    n: usize,
    alpha: f64,
    out_bits: *mut f64,
) -> MeibStatus {
    guard(|| {
        non_null(out_bits, "out_bits")?;
        let m = matrix_from(matrix, n, n, "matrix")?;
        let scale = m.data().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (m.get(i, j) - m.get(j, i)).abs() > 1e-10 * scale {
                    return fail(MeibStatus::InvalidArgument, format!("matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        if (m.trace() - 1.0).abs() > 1e-8 {
            return fail(MeibStatus::InvalidArgument, format!("matrix trace is {}, expected 1", m.trace()));
        }
        *out_bits = matrix_renyi_entropy(&m, alpha)?;
        Ok(())
    })
}

/// Entropy in bits of a sample batch under a Gaussian kernel of width
/// `sigma`, or of the heuristic width when `sigma <= 0`.
///
/// # Safety
/// `data` must hold `rows * cols` doubles; `out_bits` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meib_batch_entropy(
    data: *const f64,
    rows: usize,
    cols: usize,
    sigma: f64,
    config: MeibKernelConfig,
    out_bits: *mut f64,
) -> MeibStatus {
    guard(|| {
        non_null(out_bits, "out_bits")?;
        let k = kernel_from(&config)?;
        let m = matrix_from(data, rows, cols, "data")?;
        let width = if sigma > 0.0 {
            sigma
        } else {
            estimate_sigma(&m, k.k_nn, k.sigma_floor)?
        };
        *out_bits = renyi_entropy(&normalized_gram(&m, width)?, k.alpha)?;
        Ok(())
    })
}

/// `I(X;Z)` in bits for aligned batches `x` (`rows x x_cols`) and `z`
/// (`rows x z_cols`), widths from the heuristic.
///
/// # Safety
/// Input arrays must match their shapes; `out_bits` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meib_mutual_information(
    x: *const f64,
    x_cols: usize,
    z: *const f64,
    z_cols: usize,
    rows: usize,
    config: MeibKernelConfig,
    out_bits: *mut f64,
) -> MeibStatus {
    guard(|| {
        non_null(out_bits, "out_bits")?;
        let k = kernel_from(&config)?;
        let xm = matrix_from(x, rows, x_cols, "x")?;
        let zm = matrix_from(z, rows, z_cols, "z")?;
        *out_bits = batch_mutual_information(&xm, &zm, &k)?;
        Ok(())
    })
}

/// `∂I(X;Z)/∂z`, written row-major into `out_grad` (`rows * z_cols`).
///
/// # Safety
/// Input arrays must match their shapes; `out_grad` must hold
/// `rows * z_cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn meib_mi_gradient(
    x: *const f64,
    x_cols: usize,
    z: *const f64,
    z_cols: usize,
    rows: usize,
    config: MeibKernelConfig,
    out_grad: *mut f64,
) -> MeibStatus {
    guard(|| {
        non_null(out_grad, "out_grad")?;
        let k = kernel_from(&config)?;
        let xm = matrix_from(x, rows, x_cols, "x")?;
        let zm = matrix_from(z, rows, z_cols, "z")?;
        let g = mi_gradient_wrt_batch(&xm, &zm, &k)?;
        let src = g.d_input.data();
        std::slice::from_raw_parts_mut(out_grad, src.len()).copy_from_slice(src);
        Ok(())
    })
}

/// Generates synthetic data; both output handles must be freed.
///
/// # Safety
/// `out_train` and `out_test` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meib_synth_generate(
    config: MeibSynthConfig,
    out_train: *mut *mut MeibDatasetHandle,
    out_test: *mut *mut MeibDatasetHandle,
) -> MeibStatus {
    guard(|| {
        non_null(out_train, "out_train")?;
        non_null(out_test, "out_test")?;
        let cfg = CoreSynthConfig {
            s: config.samples_per_class,
            latent_dim: config.latent_dim,
            extra_dim: config.extra_dim,
            noise_factor: config.noise_factor,
            seed: config.seed,
            train_fraction: config.train_fraction,
            noise_is_variance: config.noise_is_variance != 0,
        };
        let ds = generate(&cfg)?;
        *out_train = Box::into_raw(Box::new(MeibDatasetHandle { inner: ds.train }));
        *out_test = Box::into_raw(Box::new(MeibDatasetHandle { inner: ds.test }));
        Ok(())
    })
}

/// Builds a dataset from `num_views` row-major arrays; view `i` has
/// `rows x view_dims[i]` entries.
///
/// # Safety
/// `views` must hold `num_views` pointers, each to a matching array;
/// `view_dims` must hold `num_views` entries; `labels` must hold `rows`.
#[no_mangle]
pub unsafe extern "C" fn meib_dataset_from_arrays(
    views: *const *const f64,
    view_dims: *const usize,
    num_views: usize,
    labels: *const usize,
    rows: usize,
    out: *mut *mut MeibDatasetHandle,
) -> MeibStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(views, "views")?;
        non_null(view_dims, "view_dims")?;
        non_null(labels, "labels")?;
        let ptrs = std::slice::from_raw_parts(views, num_views);
        let dims = std::slice::from_raw_parts(view_dims, num_views);
        let mats = ptrs
            .iter()
            .zip(dims)
            .map(|(&p, &d)| matrix_from(p, rows, d, "view"))
            .collect::<Result<Vec<_>, _>>()?;
        let labels = std::slice::from_raw_parts(labels, rows).to_vec();
        let batch = MultiViewBatch::new(mats, labels)?;
        *out = Box::into_raw(Box::new(MeibDatasetHandle { inner: batch }));
        Ok(())
    })
}

/// Loads aligned CSV views. `label_column` names the label column of the
/// first file (NULL means "label").
///
/// # Safety
/// `paths` must hold `num_paths` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn meib_dataset_load_csv(
    paths: *const *const c_char,
    num_paths: usize,
    label_column: *const c_char,
    delimiter: c_char,
    has_header: i32,
    out: *mut *mut MeibDatasetHandle,
) -> MeibStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(paths, "paths")?;
        let paths = std::slice::from_raw_parts(paths, num_paths)
            .iter()
            .map(|&p| string_from(p, "path").map(PathBuf::from))
            .collect::<Result<Vec<_>, _>>()?;
        let mut spec = CsvViewSpec::new(paths);
        if !label_column.is_null() {
            spec.label_column = LabelColumn::Name(string_from(label_column, "label_column")?);
        }
        spec.delimiter = char::from(delimiter as u8);
        spec.has_header = has_header != 0;
        let loaded = load_multiview_csv(&spec)?;
        *out = Box::into_raw(Box::new(MeibDatasetHandle { inner: loaded.batch }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn meib_dataset_free(dataset: *mut MeibDatasetHandle) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn meib_dataset_shape(
    dataset: *const MeibDatasetHandle,
    out_rows: *mut usize,
    out_views: *mut usize,
) -> MeibStatus {
    guard(|| {
        non_null(dataset, "dataset")?;
        non_null(out_rows, "out_rows")?;
        non_null(out_views, "out_views")?;
        let d = &(*dataset).inner;
        *out_rows = d.len();
        *out_views = d.num_views();
        Ok(())
    })
}

/// Copies view `view` (0-based) into `out`, which holds `capacity` doubles;
/// `out_cols` receives the view width. With `out == NULL` only the width is
/// reported.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be NULL or hold `capacity`
/// doubles; `out_cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meib_dataset_copy_view(
    dataset: *const MeibDatasetHandle,
    view: usize,
    out: *mut f64,
    capacity: usize,
    out_cols: *mut usize,
) -> MeibStatus {
    guard(|| {
        non_null(dataset, "dataset")?;
        non_null(out_cols, "out_cols")?;
        let d = &(*dataset).inner;
        let Some(m) = d.views.get(view) else {
            return fail(MeibStatus::InvalidArgument, format!("view {view} out of range"));
        };
        *out_cols = m.cols();
        if out.is_null() {
            return Ok(());
        }
        if capacity < m.data().len() {
            return fail(
                MeibStatus::BufferTooSmall,
                format!("need {} doubles, buffer holds {capacity}", m.data().len()),
            );
        }
        std::slice::from_raw_parts_mut(out, m.data().len()).copy_from_slice(m.data());
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle; `out` must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn meib_dataset_copy_labels(
    dataset: *const MeibDatasetHandle,
    out: *mut usize,
    capacity: usize,
) -> MeibStatus {
    guard(|| {
        non_null(dataset, "dataset")?;
        non_null(out, "out")?;
        let labels = &(*dataset).inner.labels;
        if capacity < labels.len() {
            return fail(MeibStatus::BufferTooSmall, format!("need {} labels", labels.len()));
        }
        std::slice::from_raw_parts_mut(out, labels.len()).copy_from_slice(labels);
        Ok(())
    })
}

/// Creates a model from a JSON model spec, e.g.
/// `{"view_dims":[25,25],"encoder_layers":[[64],[64]],"fusion_layers":[32],
///   "num_classes":2,"betas":[0.001,0.001]}`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meib_model_new(
    spec_json: *const c_char,
    seed: u64,
    out: *mut *mut MeibModelHandle,
) -> MeibStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = string_from(spec_json, "spec_json")?;
        let spec: ModelSpec = serde_json::from_str(&text)
            .map_err(|e| Failure(MeibStatus::Parse, format!("model spec: {e}")))?;
        let model = MeibModel::new(&spec, seed)?;
        *out = Box::into_raw(Box::new(MeibModelHandle { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn meib_model_free(model: *mut MeibModelHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trains in place. `train_json` is a training config such as
/// `{"learning_rate":0.01,"epochs":20,"batch_size":50}`; NULL uses defaults.
/// `out_epochs` (nullable) receives the number of epochs run and
/// `out_final_loss` (nullable) the last epoch's mean loss.
///
/// # Safety
/// Handles must be live; strings NUL-terminated; out-pointers NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn meib_model_train(
    model: *mut MeibModelHandle,
    dataset: *const MeibDatasetHandle,
    train_json: *const c_char,
    out_epochs: *mut usize,
    out_final_loss: *mut f64,
) -> MeibStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(dataset, "dataset")?;
        let cfg: TrainConfig = if train_json.is_null() {
            TrainConfig::default()
        } else {
            let text = string_from(train_json, "train_json")?;
            serde_json::from_str(&text)
                .map_err(|e| Failure(MeibStatus::Parse, format!("train config: {e}")))?
        };
        // Train a copy so a failed run leaves the caller's model untouched.
        let mut work = (*model).inner.clone();
        let history = train(&mut work, &(*dataset).inner, &cfg)?;
        (*model).inner = work;
        if !out_epochs.is_null() {
            *out_epochs = history.epochs.len();
        }
        if !out_final_loss.is_null() {
            *out_final_loss = history.final_loss().map_or(f64::NAN, |l| l.total);
        }
        Ok(())
    })
}

/// Classification error on a dataset.
///
/// # Safety
/// Handles must be live; `out_error` writable.
#[no_mangle]
pub unsafe extern "C" fn meib_model_evaluate(
    model: *const MeibModelHandle,
    dataset: *const MeibDatasetHandle,
    out_error: *mut f64,
) -> MeibStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(dataset, "dataset")?;
        non_null(out_error, "out_error")?;
        *out_error = (*model).inner.evaluate(&(*dataset).inner)?;
        Ok(())
    })
}

/// Mean per-view `I(X_i;Z_i)` in bits over chunks of `chunk` rows; writes
/// one value per view into `out` (`capacity` entries).
///
/// # Safety
/// Handles must be live; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn meib_model_view_information(
    model: *const MeibModelHandle,
    dataset: *const MeibDatasetHandle,
    chunk: usize,
    out: *mut f64,
    capacity: usize,
) -> MeibStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(dataset, "dataset")?;
        non_null(out, "out")?;
        let mi = (*model).inner.view_information(&(*dataset).inner, chunk)?;
        if capacity < mi.len() {
            return fail(MeibStatus::BufferTooSmall, format!("need {} doubles", mi.len()));
        }
        std::slice::from_raw_parts_mut(out, mi.len()).copy_from_slice(&mi);
        Ok(())
    })
}

/// ℓ₂ norms of the input columns of encoder `view`'s first layer.
/// `out_len` receives the count; with `out == NULL` only the count is set.
///
/// # Safety
/// `model` must be live; `out` NULL or holding `capacity` doubles; `out_len`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn meib_model_input_weight_norms(
    model: *const MeibModelHandle,
    view: usize,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> MeibStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out_len, "out_len")?;
        let norms = (*model).inner.input_weight_norms();
        let Some(v) = norms.get(view) else {
            return fail(MeibStatus::InvalidArgument, format!("view {view} out of range"));
        };
        *out_len = v.len();
        if out.is_null() {
            return Ok(());
        }
        if capacity < v.len() {
            return fail(MeibStatus::BufferTooSmall, format!("need {} doubles", v.len()));
        }
        std::slice::from_raw_parts_mut(out, v.len()).copy_from_slice(v);
        Ok(())
    })
}

/// # Safety
/// `model` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn meib_model_save(model: *const MeibModelHandle, path: *const c_char) -> MeibStatus {
    guard(|| {
        non_null(model, "model")?;
        let p = string_from(path, "path")?;
        (*model).inner.save(std::path::Path::new(&p))?;
        Ok(())
    })
}

/// # Safety
/// `path` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn meib_model_load(path: *const c_char, out: *mut *mut MeibModelHandle) -> MeibStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = string_from(path, "path")?;
        let model = MeibModel::load(std::path::Path::new(&p))?;
        *out = Box::into_raw(Box::new(MeibModelHandle { inner: model }));
        Ok(())
    })
}
