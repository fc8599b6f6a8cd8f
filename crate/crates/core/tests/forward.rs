use cgo_core::forward::{assemble_dtn, manufactured_error, BoundaryBasis};
use cgo_core::grid::{mollify, sample_potential, ComplexField, Grid2D, PotentialSpec};

#[test]
fn manufactured_solution_is_second_order() {
    let errs: Vec<_> = [33, 65, 129].iter().map(|&n| manufactured_error::<f64>(n, 1.0).unwrap()).collect();
    for w in errs.windows(2) {
        let rs = w[0].solution / w[1].solution;
        let rt = w[0].trace / w[1].trace;
        assert!((3.5..=4.5).contains(&rs), "solution ratio {rs}");
        assert!((3.5..=4.5).contains(&rt), "trace ratio {rt}");
    }
}

#[test]
fn dtn_is_symmetric_for_real_potential() {
    let g = Grid2D::square(65, 1.0).unwrap();
    let q = sample_potential(&PotentialSpec::gaussian(3.0, [0.2, -0.1], 0.3), g).unwrap();
    let d = assemble_dtn(&q, 32).unwrap();
    assert!(d.relative_asymmetry().unwrap() <= 1e-6);
    let b = BoundaryBasis::new(g, 32).unwrap();
    // Individual mode pairs, including mixed ones.
    for (a, c) in [(1usize, 2usize), (3, 17), (0, 31), (8, 9)] {
        let mut ea = vec![num_complex::Complex::new(0.0f64, 0.0); 32];
        let mut ec = ea.clone();
        ea[a] = 1.0.into();
        ec[c] = 1.0.into();
        let l = b.pair_coeffs(&d.apply(&ea), &ec);
        let r = b.pair_coeffs(&ea, &d.apply(&ec));
        assert!((l - r).norm() <= 1e-6 * l.norm().max(r.norm()).max(1e-12), "{a},{c}");
    }
}

#[test]
fn dtn_sensitivity_grows_with_amplitude() {
    let g = Grid2D::square(65, 1.0).unwrap();
    let d0 = assemble_dtn(&ComplexField::zeros(g), 16).unwrap();
    let dist: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&a| {
            let q = sample_potential(&PotentialSpec::gaussian(a, [0.0, 0.0], 0.3), g).unwrap();
            assemble_dtn(&q, 16).unwrap().frobenius_distance(&d0).unwrap()
        })
        .collect();
    assert!(dist[0] > 0.0 && dist[0] < dist[1] && dist[1] < dist[2], "{dist:?}");
}

#[test]
fn equal_potentials_give_identical_maps() {
    let g = Grid2D::square(33, 1.0).unwrap();
    let q = sample_potential(&PotentialSpec::gaussian(1.0, [0.0, 0.0], 0.3), g).unwrap();
    let a = assemble_dtn(&q, 8).unwrap();
    let b = assemble_dtn(&q, 8).unwrap();
    assert_eq!(a.frobenius_distance(&b).unwrap(), 0.0);
}

#[test]
fn mollified_maps_converge() {
    let g = Grid2D::square(65, 1.0).unwrap();
    let spec = PotentialSpec::DiskIndicator { amplitude: 2.0, center: [0.1, 0.0], radius: 0.4 };
    let q = sample_potential(&spec, g).unwrap();
    let d = assemble_dtn(&q, 16).unwrap();
    let h = g.max_spacing();
    let dist: Vec<f64> = [8.0, 4.0, 2.0]
        .iter()
        .map(|&k| {
            let qe = mollify(&q, k * h).unwrap();
            assemble_dtn(&qe, 16).unwrap().frobenius_distance(&d).unwrap()
        })
        .collect();
    assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
}
