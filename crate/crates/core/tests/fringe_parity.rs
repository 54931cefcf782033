use std::path::PathBuf;

use aberrex::fringe::{FringeNet, FringeNetWeights};
use aberrex::fringe::weights::parameter_count;
use aberrex::image::read_pfm;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn random_weights_match_reference_forward() {
    let net = FringeNet::load(fixture("fringe_random.ftbw")).unwrap();
    let zc = read_pfm(fixture("fringe_zc.pfm")).unwrap().plane(0);
    let zg = read_pfm(fixture("fringe_zg.pfm")).unwrap().plane(0);
    let want = read_pfm(fixture("fringe_out.pfm")).unwrap().plane(0);
    let got = net.forward(&zc, &zg).unwrap();
    let err = got.max_abs_diff(&want);
    assert!(err < 1e-4, "max abs error {err}");
}

#[test]
fn exported_file_has_expected_parameters() {
    let w = FringeNetWeights::load(fixture("fringe_random.ftbw")).unwrap();
    let learnable: usize = w
        .tensors()
        .iter()
        .filter(|t| !t.name.ends_with(".mean") && !t.name.ends_with(".var"))
        .map(|t| t.data.len())
        .sum();
    assert_eq!(learnable, parameter_count());
}

#[test]
fn truncated_file_is_io_error() {
    let bytes = std::fs::read(fixture("fringe_random.ftbw")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.ftbw");
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = FringeNetWeights::load(&path).unwrap_err();
    assert!(err.is_io());
    assert!(err.to_string().contains("cut.ftbw"));
}
