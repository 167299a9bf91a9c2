use std::path::PathBuf;

use meib::data_io::{export_batch, load_multiview_csv, CsvViewSpec, LabelColumn};
use meib::synth::{generate, SynthConfig};
use meib::{DenseMatrix, MeibError};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn spec(names: &[&str]) -> CsvViewSpec {
    CsvViewSpec::new(names.iter().map(|n| fixture(n)).collect())
}

#[test]
fn loads_two_view_fixture_exactly() {
    let loaded = load_multiview_csv(&spec(&["three_rows_view1.csv", "three_rows_view2.csv"])).unwrap();
    let b = &loaded.batch;
    assert_eq!(
        b.views[0],
        DenseMatrix::from_rows(&[[1.5, -2.0], [0.0, 3.25], [-1e-3, 4.0]]).unwrap()
    );
    assert_eq!(
        b.views[1],
        DenseMatrix::from_rows(&[[7.0, 8.0, 9.0], [10.0, 11.0, 12.0], [13.0, 14.0, 15.0]]).unwrap()
    );
    assert_eq!(b.labels, vec![0, 1, 0]);
    assert_eq!(loaded.class_names, vec!["cat", "dog"]);
}

#[test]
fn label_by_index_without_header() {
    let mut s = spec(&["no_header.csv"]);
    s.has_header = false;
    s.label_column = LabelColumn::Index(2);
    let loaded = load_multiview_csv(&s).unwrap();
    assert_eq!(loaded.batch.views[0].shape(), (2, 2));
    assert_eq!(loaded.batch.labels, vec![0, 1]);
}

#[test]
fn custom_delimiter() {
    let mut s = spec(&["semicolon.csv"]);
    s.delimiter = ';';
    let loaded = load_multiview_csv(&s).unwrap();
    assert_eq!(loaded.batch.views[0].row(1), &[0.0, 3.25]);
}

#[test]
fn empty_and_header_only_files_are_rejected() {
    assert!(matches!(load_multiview_csv(&spec(&["empty.csv"])), Err(MeibError::Csv { .. })));
    assert!(matches!(load_multiview_csv(&spec(&["header_only.csv"])), Err(MeibError::Empty(_))));
}

#[test]
fn non_numeric_cell_reports_position() {
    let err = load_multiview_csv(&spec(&["bad_cell.csv"])).unwrap_err().to_string();
    assert!(err.contains("line 3") && err.contains("column 2") && err.contains("oops"), "{err}");
}

#[test]
fn row_count_mismatch_is_rejected() {
    let err = load_multiview_csv(&spec(&["three_rows_view1.csv", "two_rows.csv"])).unwrap_err();
    assert!(err.to_string().contains("rows"), "{err}");
}

#[test]
fn missing_label_column_is_rejected() {
    let mut s = spec(&["three_rows_view2.csv"]);
    s.label_column = LabelColumn::Name("class".into());
    assert!(load_multiview_csv(&s).unwrap_err().to_string().contains("missing label column"));
    s.label_column = LabelColumn::Index(9);
    assert!(load_multiview_csv(&s).is_err());
}

#[test]
fn synthetic_dataset_round_trips() {
    let data = generate(&SynthConfig {
        s: 30,
        noise_factor: 0.7,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (prefix, batch) in [("train", &data.train), ("test", &data.test)] {
        let spec = export_batch(batch, dir.path(), prefix).unwrap();
        let back = load_multiview_csv(&spec).unwrap().batch;
        assert_eq!(back.labels, batch.labels);
        for (a, b) in back.views.iter().zip(&batch.views) {
            assert!(a.sub(b).unwrap().max_abs() <= 1e-12);
        }
    }
}
