use cgo_core::forward::{assemble_dtn, DtNMap};
use cgo_core::grid::{read_cgo2_file, sample_potential, write_cgo2_file, Grid2D, PotentialSpec};
use cgo_core::recon::{recover_pointwise, ConstantSource, RecoveryConfig};
use num_complex::Complex;

#[test]
fn field_file_round_trip_and_file_potential() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid2D::new(17, 13, [-1.0, 1.0, -0.5, 0.5]).unwrap();
    let q = sample_potential(&PotentialSpec::gaussian(1.5, [0.2, 0.0], 0.3), g).unwrap();
    let p = dir.path().join("q.cgo2");
    write_cgo2_file(&p, &q).unwrap();
    let back = read_cgo2_file::<f64>(&p).unwrap();
    assert_eq!(back, q);
    assert_eq!(sample_potential(&PotentialSpec::File(p), g).unwrap(), q);
}

#[test]
fn dtn_binary_round_trip() {
    let g = Grid2D::square(17, 1.0).unwrap();
    let q = sample_potential(&PotentialSpec::gaussian(1.0, [0.0, 0.0], 0.3), g).unwrap();
    let d = assemble_dtn(&q, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.bin");
    d.write_binary_file(&p).unwrap();
    let back = DtNMap::<f64>::read_binary(&mut std::fs::File::open(&p).unwrap()).unwrap();
    assert_eq!(back, d);
    assert!(d.to_csv().lines().next().unwrap().starts_with("# M=4"));
}

#[test]
fn recovery_file_carries_point_magic() {
    let g = Grid2D::square(33, 0.2).unwrap();
    let q = sample_potential(&PotentialSpec::gaussian(0.5, [0.0, 0.0], 0.1), g).unwrap();
    let d = assemble_dtn(&q, 8).unwrap();
    let d0 = assemble_dtn(&cgo_core::grid::ComplexField::zeros(g), 8).unwrap();
    let mut cfg = RecoveryConfig::new(vec![10.0, 20.0, 40.0], vec![Complex::new(0.0, 0.0)]);
    cfg.constant = ConstantSource::Fixed(std::f64::consts::FRAC_PI_2);
    let r = recover_pointwise(&d, &d0, &q, &cfg).unwrap();
    let mut buf = Vec::new();
    r.write_binary(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"CGO2");
    assert!(buf.windows(4).any(|w| w == b"YPT1"));
}
