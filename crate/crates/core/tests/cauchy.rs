use cgo_core::cauchy::{dbar, dz, CauchyKernelTable, Transform};
use cgo_core::grid::{ComplexField, Grid2D};
use num_complex::Complex;
use proptest::prelude::*;

fn field(g: Grid2D<f64>, seed: &[f64]) -> ComplexField<f64> {
    let n = seed.len();
    let v = (0..g.len()).map(|k| Complex::new(seed[k % n], seed[(3 * k + 1) % n])).collect();
    ComplexField::new(g, v).unwrap()
}

fn bump(g: Grid2D<f64>, c: Complex<f64>, w: f64) -> ComplexField<f64> {
    ComplexField::from_fn(g, |z| Complex::new((-(z - c).norm_sqr() / (w * w)).exp(), 0.0))
}

#[test]
fn inverses_undo_derivatives_on_smooth_data() {
    let g = Grid2D::square(129, 1.0).unwrap();
    let k = CauchyKernelTable::new(g);
    let f = bump(g, Complex::new(0.1, -0.1), 0.25);
    let e1 = dbar(&k.dbar_inv(&f)).sub(&f).norm_l2() / f.norm_l2();
    let e2 = dz(&k.dz_inv(&f)).sub(&f).norm_l2() / f.norm_l2();
    assert!(e1 < 5e-3 && e2 < 5e-3, "{e1} {e2}");
}

#[test]
fn fast_path_matches_dense_on_rectangles() {
    let g = Grid2D::new(21, 13, [-1.0, 0.5, -0.3, 0.6]).unwrap();
    let k = CauchyKernelTable::new(g);
    let f = field(g, &[0.3, -1.2, 0.7, 2.0, -0.4]);
    for t in [Transform::DbarInv, Transform::DzInv] {
        let d = k.apply_dense(&f, t);
        assert!(k.apply(&f, t).sub(&d).max_abs() <= 1e-12 * d.max_abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transforms_are_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, s1 in prop::collection::vec(-1.0f64..1.0, 5), s2 in prop::collection::vec(-1.0f64..1.0, 7)) {
        let g = Grid2D::square(17, 1.0).unwrap();
        let k = CauchyKernelTable::new(g);
        let (f, h) = (field(g, &s1), field(g, &s2));
        let ca = Complex::new(a, 0.5 * b);
        let lhs = k.dbar_inv(&f.scale(ca).add(&h.scale(Complex::new(b, 0.0))));
        let rhs = k.dbar_inv(&f).scale(ca).add(&k.dbar_inv(&h).scale(Complex::new(b, 0.0)));
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn dz_inverse_is_conjugate_of_dbar_inverse(s in prop::collection::vec(-1.0f64..1.0, 6)) {
        let g = Grid2D::square(17, 0.7).unwrap();
        let k = CauchyKernelTable::new(g);
        let f = field(g, &s);
        let lhs = k.dz_inv(&f);
        let rhs = k.dbar_inv(&f.conj()).conj();
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * (1.0 + rhs.max_abs()));
    }
}
