use std::ffi::{CStr, CString};
use std::ptr;

use meib_ffi::*;

fn last_error() -> String {
    let p = meib_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_synth() -> MeibSynthConfig {
    let mut c = meib_synth_config_default();
    c.samples_per_class = 30;
    c.latent_dim = 4;
    c.extra_dim = 3;
    c.seed = 7;
    c
}

#[test]
fn version_and_defaults() {
    let v = unsafe { CStr::from_ptr(meib_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let k = meib_kernel_config_default();
    assert_eq!((k.alpha, k.k_nn, k.sigma_floor), (1.01, 10, 1e-6));
    assert_eq!(meib_synth_config_default().samples_per_class, 500);
}

#[test]
fn uniform_matrix_entropy_is_log_n() {
    let n = 8;
    let m = vec![1.0 / n as f64; n * n];
    let mut diag = vec![0.0; n * n];
    for i in 0..n {
        diag[i * n + i] = 1.0 / n as f64;
    }
    let mut h = f64::NAN;
    assert_eq!(unsafe { meib_matrix_entropy(m.as_ptr(), n, 1.01, &mut h) }, MeibStatus::Ok);
    assert!(h.abs() < 1e-9, "rank-one matrix has zero entropy, got {h}");
    assert_eq!(unsafe { meib_matrix_entropy(diag.as_ptr(), n, 1.01, &mut h) }, MeibStatus::Ok);
    assert!((h - 3.0).abs() < 1e-9);
    assert!(meib_last_error_message().is_null());
}

#[test]
fn null_pointers_and_bad_shapes_report_errors() {
    let mut h = 0.0;
    assert_eq!(
        unsafe { meib_matrix_entropy(ptr::null(), 3, 1.01, &mut h) },
        MeibStatus::NullPointer
    );
    assert!(last_error().contains("matrix"));
    let asym = [0.5, 0.3, 0.0, 0.5];
    let s = unsafe { meib_matrix_entropy(asym.as_ptr(), 2, 1.01, &mut h) };
    assert_ne!(s, MeibStatus::Ok);
    assert_eq!(h, 0.0, "output untouched on failure");
    let mut bad = meib_kernel_config_default();
    bad.alpha = 1.0;
    let x = [0.0, 1.0, 2.0, 3.0];
    assert_eq!(
        unsafe { meib_batch_entropy(x.as_ptr(), 4, 1, 1.0, bad, &mut h) },
        MeibStatus::InvalidArgument
    );
}

#[test]
fn mutual_information_and_gradient_agree_with_library() {
    let rows = 12;
    let x: Vec<f64> = (0..rows * 2).map(|i| ((i * 37 % 11) as f64).sin()).collect();
    let z: Vec<f64> = (0..rows * 3).map(|i| ((i * 13 % 7) as f64).cos()).collect();
    let cfg = meib_kernel_config_default();
    let mut mi = 0.0;
    let s = unsafe { meib_mutual_information(x.as_ptr(), 2, z.as_ptr(), 3, rows, cfg, &mut mi) };
    assert_eq!(s, MeibStatus::Ok);
    let xm = meib::DenseMatrix::new(rows, 2, x.clone()).unwrap();
    let zm = meib::DenseMatrix::new(rows, 3, z.clone()).unwrap();
    let kc = meib::kernel::KernelConfig::default();
    assert_eq!(mi, meib::kernel::batch_mutual_information(&xm, &zm, &kc).unwrap());

    let mut g = vec![0.0; rows * 3];
    let s = unsafe { meib_mi_gradient(x.as_ptr(), 2, z.as_ptr(), 3, rows, cfg, g.as_mut_ptr()) };
    assert_eq!(s, MeibStatus::Ok);
    let expect = meib::kernel::mi_gradient_wrt_batch(&xm, &zm, &kc).unwrap();
    assert_eq!(g.as_slice(), expect.d_input.data());
}

#[test]
fn dataset_accessors_round_trip() {
    let mut train = ptr::null_mut();
    let mut test = ptr::null_mut();
    assert_eq!(
        unsafe { meib_synth_generate(small_synth(), &mut train, &mut test) },
        MeibStatus::Ok
    );
    let (mut rows, mut views) = (0, 0);
    assert_eq!(unsafe { meib_dataset_shape(train, &mut rows, &mut views) }, MeibStatus::Ok);
    assert_eq!((rows, views), (48, 2));
    let mut cols = 0;
    assert_eq!(
        unsafe { meib_dataset_copy_view(train, 0, ptr::null_mut(), 0, &mut cols) },
        MeibStatus::Ok
    );
    assert_eq!(cols, 7);
    let mut small = vec![0.0; 3];
    assert_eq!(
        unsafe { meib_dataset_copy_view(train, 0, small.as_mut_ptr(), small.len(), &mut cols) },
        MeibStatus::BufferTooSmall
    );
    let mut v0 = vec![0.0; rows * cols];
    let mut v1 = vec![0.0; rows * cols];
    let mut labels = vec![0usize; rows];
    unsafe {
        assert_eq!(meib_dataset_copy_view(train, 0, v0.as_mut_ptr(), v0.len(), &mut cols), MeibStatus::Ok);
        assert_eq!(meib_dataset_copy_view(train, 1, v1.as_mut_ptr(), v1.len(), &mut cols), MeibStatus::Ok);
        assert_eq!(meib_dataset_copy_labels(train, labels.as_mut_ptr(), rows), MeibStatus::Ok);
        assert_eq!(
            meib_dataset_copy_view(train, 2, ptr::null_mut(), 0, &mut cols),
            MeibStatus::InvalidArgument
        );
    }
    assert!(labels.iter().all(|&l| l < 2));

    let ptrs = [v0.as_ptr(), v1.as_ptr()];
    let dims = [cols, cols];
    let mut rebuilt = ptr::null_mut();
    let s = unsafe { meib_dataset_from_arrays(ptrs.as_ptr(), dims.as_ptr(), 2, labels.as_ptr(), rows, &mut rebuilt) };
    assert_eq!(s, MeibStatus::Ok);
    let mut back = vec![0.0; rows * cols];
    unsafe {
        meib_dataset_copy_view(rebuilt, 1, back.as_mut_ptr(), back.len(), &mut cols);
    }
    assert_eq!(back, v1);
    unsafe {
        meib_dataset_free(rebuilt);
        meib_dataset_free(train);
        meib_dataset_free(test);
        meib_dataset_free(ptr::null_mut());
    }
}

#[test]
fn csv_loading_reports_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("v.csv");
    std::fs::write(&good, "a,b,label\n1,2,x\n3,4,y\n5,6,x\n").unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b,label\n1,oops,x\n").unwrap();
    let p = CString::new(good.to_str().unwrap()).unwrap();
    let paths = [p.as_ptr(), p.as_ptr()];
    let mut ds = ptr::null_mut();
    let s = unsafe { meib_dataset_load_csv(paths.as_ptr(), 2, ptr::null(), b',' as _, 1, &mut ds) };
    assert_eq!(s, MeibStatus::Ok);
    let (mut rows, mut views) = (0, 0);
    unsafe { meib_dataset_shape(ds, &mut rows, &mut views) };
    assert_eq!((rows, views), (3, 2));
    unsafe { meib_dataset_free(ds) };

    let b = CString::new(bad.to_str().unwrap()).unwrap();
    let mut ds = ptr::null_mut();
    let s = unsafe { meib_dataset_load_csv(&b.as_ptr(), 1, ptr::null(), b',' as _, 1, &mut ds) };
    assert_eq!(s, MeibStatus::Parse);
    assert!(ds.is_null());
    assert!(last_error().contains("oops"));
}

#[test]
fn model_lifecycle() {
    let mut train = ptr::null_mut();
    let mut test = ptr::null_mut();
    unsafe { meib_synth_generate(small_synth(), &mut train, &mut test) };
    let spec = CString::new(
        r#"{"view_dims":[7,7],"encoder_layers":[[16],[16]],"fusion_layers":[8],"num_classes":2,"betas":[0.001,0.001]}"#,
    )
    .unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { meib_model_new(spec.as_ptr(), 3, &mut model) }, MeibStatus::Ok);

    let bad = CString::new(r#"{"view_dims":[7]"#).unwrap();
    let mut other = ptr::null_mut();
    assert_eq!(unsafe { meib_model_new(bad.as_ptr(), 3, &mut other) }, MeibStatus::Parse);

    let cfg = CString::new(r#"{"learning_rate":0.01,"epochs":15,"batch_size":16,"patience":0}"#).unwrap();
    let (mut epochs, mut loss) = (0usize, f64::NAN);
    let s = unsafe { meib_model_train(model, train, cfg.as_ptr(), &mut epochs, &mut loss) };
    assert_eq!(s, MeibStatus::Ok, "{}", last_error());
    assert_eq!(epochs, 15);
    assert!(loss.is_finite());

    let mut err = f64::NAN;
    assert_eq!(unsafe { meib_model_evaluate(model, test, &mut err) }, MeibStatus::Ok);
    assert!((0.0..=1.0).contains(&err));
    let mut mi = [0.0; 2];
    assert_eq!(
        unsafe { meib_model_view_information(model, test, 6, mi.as_mut_ptr(), 2) },
        MeibStatus::Ok
    );
    assert!(mi.iter().all(|v| v.is_finite() && *v >= -1e-8));
    let mut len = 0;
    let mut norms = vec![0.0; 7];
    unsafe {
        assert_eq!(meib_model_input_weight_norms(model, 1, norms.as_mut_ptr(), 7, &mut len), MeibStatus::Ok);
    }
    assert_eq!(len, 7);
    assert!(norms.iter().all(|&n| n > 0.0));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { meib_model_save(model, path.as_ptr()) }, MeibStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { meib_model_load(path.as_ptr(), &mut loaded) }, MeibStatus::Ok);
    let mut err2 = f64::NAN;
    unsafe { meib_model_evaluate(loaded, test, &mut err2) };
    assert_eq!(err, err2);

    let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    let s = unsafe { meib_model_load(missing.as_ptr(), &mut none) };
    assert!(matches!(s, MeibStatus::Io | MeibStatus::Checkpoint));

    unsafe {
        meib_model_free(loaded);
        meib_model_free(model);
        meib_model_free(ptr::null_mut());
        meib_dataset_free(train);
        meib_dataset_free(test);
    }
}
