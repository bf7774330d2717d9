use std::fs;

use dflim::error::AppError;
use dflim::io::{
    load_scenario, read_csv_dir, read_mseq, save_scenario, write_csv_dir, write_mseq, CalibrationFile, MseqReader,
    Preprocessing, Provenance,
};
use dflim_core::calibration::{calibrate, CalibrationOptions};
use dflim_core::simulate::{ScenarioConfig, ShiftKind};
use dflim_core::DenseMatrix;

fn frames(n: usize, p1: usize, p2: usize) -> Vec<DenseMatrix> {
    (0..n).map(|k| DenseMatrix::from_fn(p1, p2, |i, j| (k * 31 + i * 7 + j) as f64 * 0.37 - 3.1)).collect()
}

fn parse_error(e: AppError) -> dflim::error::ParseError {
    match e {
        AppError::Parse(p) => p,
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn mseq_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mseq");
    let mut src = frames(2, 3, 4);
    src[1].data_mut()[5] = -0.0;
    src[0].data_mut()[2] = f64::MIN_POSITIVE / 3.0;
    write_mseq(&src, &path).unwrap();
    let back = read_mseq(&path).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in src.iter().zip(&back) {
        assert_eq!(a.shape(), b.shape());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(fs::metadata(&path).unwrap().len(), 21 + 2 * 3 * 4 * 8);
}

#[test]
fn mseq_layout_is_little_endian_row_major() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.mseq");
    let m = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
    write_mseq(&[m], &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..9], b"DFLIMSEQ1");
    assert_eq!(&bytes[9..21], &[2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
    assert_eq!(&bytes[21 + 8..21 + 16], &2.0f64.to_le_bytes());
}

#[test]
fn truncated_mseq_names_expected_and_actual_length() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.mseq");
    write_mseq(&frames(3, 2, 2), &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    let err = parse_error(MseqReader::open(&path).err().unwrap());
    let msg = err.to_string();
    assert!(msg.contains("expected 117 bytes") && msg.contains("file has 112"), "{msg}");
    assert_eq!(err.offset, Some(112));

    fs::write(&path, &bytes[..10]).unwrap();
    assert!(parse_error(read_mseq(&path).unwrap_err()).message.contains("header"));
}

#[test]
fn mseq_rejects_bad_magic_and_non_finite_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.mseq");
    write_mseq(&frames(1, 2, 2), &path).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, &bytes).unwrap();
    assert_eq!(parse_error(read_mseq(&path).unwrap_err()).offset, Some(0));

    bytes[0] = b'D';
    bytes[21 + 16..21 + 24].copy_from_slice(&f64::NAN.to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    assert_eq!(parse_error(read_mseq(&path).unwrap_err()).offset, Some(21 + 16));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = read_mseq(std::path::Path::new("/nonexistent/x.mseq")).unwrap_err();
    assert!(matches!(err, AppError::Io { .. }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn csv_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let src = frames(3, 4, 5);
    write_csv_dir(&src, dir.path()).unwrap();
    assert_eq!(read_csv_dir(dir.path()).unwrap(), src);
}

#[test]
fn ragged_csv_names_file_and_row() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("frame_000001.csv"), "1,2,3\n4,5,6\n").unwrap();
    fs::write(dir.path().join("frame_000002.csv"), "1,2,3\n4,5\n7,8,9\n").unwrap();
    let err = parse_error(read_csv_dir(dir.path()).unwrap_err());
    assert!(err.path.ends_with("frame_000002.csv"));
    assert_eq!(err.row, Some(2));
    assert!(err.to_string().contains("frame_000002.csv"));
}

#[test]
fn calibration_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.json");
    let sc = ScenarioConfig::baseline(40, 80).prepare().unwrap();
    let train: Vec<_> = sc.generator(9, None).with_length(120).collect();
    let opts = CalibrationOptions { m0_override: Some(sc.m0().clone()), ..CalibrationOptions::default() };
    let (model, params) = calibrate(&train, &opts).unwrap();
    let file = CalibrationFile {
        model,
        params,
        preprocessing: Preprocessing { diff: false, patch: None },
        provenance: Provenance::new(train.len(), &opts, Some(7), Some("synthetic".into())),
    };
    file.save(&path).unwrap();
    let back = CalibrationFile::load(&path).unwrap();
    assert_eq!(back.model, file.model);
    assert_eq!(back.params, file.params);
    assert_eq!(back.provenance.seed, Some(7));
    assert_eq!(back.to_json(), file.to_json());

    let text = fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"schema\": \"dflim-cal-v1\""));
    fs::write(&path, text.replace("dflim-cal-v1", "dflim-cal-v0")).unwrap();
    assert_eq!(CalibrationFile::load(&path).unwrap_err().exit_code(), 2);
}

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let cfg = ScenarioConfig { shift: ShiftKind::Ring, amplitude: 1.5, seed: 99, ..ScenarioConfig::baseline(50, 100) };
    save_scenario(&cfg, &path).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), cfg);
}

#[test]
fn preprocessing_chain() {
    let ramp: Vec<_> = (1..=4).map(|t| DenseMatrix::from_fn(4, 4, |i, j| t as f64 * (i * 4 + j) as f64)).collect();
    let out = Preprocessing { diff: true, patch: Some(2) }.apply(ramp).unwrap();
    assert_eq!(out.len(), 3);
    assert!(out.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(out[0].shape(), (4, 4));
}
