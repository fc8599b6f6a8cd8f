use cgo_core::cauchy::CauchyKernelTable;
use cgo_core::cgo::{build_u1_series, build_v_series, schrodinger_residual, NeumannSeriesConfig, PhaseFunction};
use cgo_core::grid::{sample_potential, ComplexField, Grid2D, PotentialSpec};
use num_complex::Complex;
use proptest::prelude::*;

#[test]
fn series_is_geometric_and_residual_falls_with_refinement() {
    let y = Complex::new(0.1, 0.0);
    let res: Vec<f64> = [65, 129]
        .into_iter()
        .map(|n| {
            let g = Grid2D::square(n, 1.0).unwrap();
            let q = sample_potential(&PotentialSpec::gaussian(1.0, [0.0, 0.0], 0.3), g).unwrap();
            let s = build_u1_series(&CauchyKernelTable::new(g), &q, &NeumannSeriesConfig::new(10.0), y).unwrap();
            assert!(s.is_geometric(), "{:?}", s.ratios());
            schrodinger_residual(&s, &q).unwrap()
        })
        .collect();
    assert!(res[1] < res[0], "{res:?}");
}

#[test]
fn zero_potential_gives_pure_exponentials() {
    let g = Grid2D::square(33, 1.0).unwrap();
    let k = CauchyKernelTable::new(g);
    let zero = ComplexField::zeros(g);
    let y = Complex::new(0.2, -0.1);
    for s in [build_u1_series(&k, &zero, &NeumannSeriesConfig::new(7.0), y), build_v_series(&k, &zero, &NeumannSeriesConfig::new(7.0), y)] {
        let s = s.unwrap();
        assert!(s.amplitude.values.iter().all(|v| *v == Complex::new(1.0, 0.0)));
        assert_eq!(schrodinger_residual(&s, &zero).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn weight_has_unit_modulus(x in -1.0f64..1.0, y in -1.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0, tau in 0.1f64..300.0) {
        let p = PhaseFunction::new(Complex::new(a, b));
        prop_assert!((p.weight(Complex::new(x, y), tau).norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn phase_is_holomorphic(x in -1.0f64..1.0, y in -1.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let p = PhaseFunction::new(Complex::new(a, b));
        let z = Complex::new(x, y);
        let h = 1e-5;
        let dx = (p.phi(z + h) - p.phi(z - h)) / (2.0 * h);
        let dy = (p.phi(z + Complex::new(0.0, h)) - p.phi(z - Complex::new(0.0, h))) / (2.0 * h);
        // Cauchy-Riemann: d/dy = i d/dx.
        prop_assert!((dy - dx * Complex::new(0.0, 1.0)).norm() <= 1e-7);
        prop_assert!((dx - p.dphi(z)).norm() <= 1e-7);
    }
}
