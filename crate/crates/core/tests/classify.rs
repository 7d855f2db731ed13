use chinv::operator::{FamilyKind, SpecialCase};
use chinv::{Complex64, ComplexPoly, Operator, RegularityClass};
use proptest::prelude::*;

fn complex(r: std::ops::Range<f64>) -> impl Strategy<Value = Complex64> {
    (r.clone(), r).prop_map(|(a, b)| Complex64::new(a, b))
}

fn operator() -> impl Strategy<Value = Operator> {
    (
        prop::collection::vec(complex(-1.0..1.0), 1..5),
        prop::collection::vec(complex(-1.0..1.0), 1..6),
    )
        .prop_filter_map("degenerate", |(p, q)| {
            let (p, q) = (ComplexPoly::new(p), ComplexPoly::new(q));
            if p.leading()?.norm() < 0.1 || q.leading()?.norm() < 0.1 {
                return None;
            }
            Operator::build(p, q).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn classification_is_affine_invariant(
        op in operator(),
        a in complex(-2.0..2.0),
        b in complex(-2.0..2.0),
        s in complex(-2.0..2.0),
    ) {
        prop_assume!(a.norm() > 0.2 && s.norm() > 0.2);
        let base = op.classify().unwrap();
        prop_assume!(!base.boundary_sensitive);
        let moved = op.transform(a, b, s).unwrap().classify().unwrap();
        prop_assert_eq!(base.nontrivial_exists, moved.nontrivial_exists);
        prop_assert_eq!(base.compact_exists, moved.compact_exists);
        prop_assert_eq!(base.d, moved.d);
    }

    #[test]
    fn compact_implies_d_one(op in operator()) {
        let r = op.classify().unwrap();
        if r.compact_exists {
            prop_assert_eq!(r.d, Some(1));
            prop_assert!(r.nontrivial_exists);
        }
        if r.d.map(|d| d.abs() > 1).unwrap_or(false) {
            prop_assert!(!r.nontrivial_exists);
        }
    }

    #[test]
    fn real_forms_are_real(op in operator()) {
        if let Some(f) = op.detect_real_form() {
            let t = op.transform(f.a, f.b, f.s).unwrap();
            for poly in [&t.p, &t.q] {
                let scale = poly.max_abs_coeff();
                prop_assert!(poly.coeffs().iter().all(|c| c.im.abs() <= 1e-9 * scale));
            }
        }
    }

    #[test]
    fn reduced_operator_is_coprime(r in complex(-1.0..1.0), p in prop::collection::vec(complex(-1.0..1.0), 1..3), q in prop::collection::vec(complex(-1.0..1.0), 1..4)) {
        let f = ComplexPoly::linear_factor(r);
        let (p, q) = (&ComplexPoly::new(p) * &f, &ComplexPoly::new(q) * &f);
        prop_assume!(p.leading().unwrap().norm() > 0.1 && q.leading().unwrap().norm() > 0.1);
        let op = Operator::build(p, q).unwrap();
        prop_assert!(!op.common.is_empty());
        let (red, common) = op.reduce_common_factor().unwrap();
        prop_assert!(red.coprime());
        prop_assert!(common.iter().any(|c| (c.z - r).norm() < 1e-6));
    }
}

#[test]
fn documented_examples() {
    let op = Operator::from_real(&[-1.0, 1.0], &[0.0, 0.0, 1.0]).unwrap();
    let r = op.classify().unwrap();
    assert!(r.nontrivial_exists && r.compact_exists);
    assert_eq!(r.class, Some(RegularityClass::II));

    let op = Operator::from_real(&[0.0, 1.0], &[-1.0, 0.0, 1.0]).unwrap();
    let r = op.classify().unwrap();
    assert_eq!(r.class, Some(RegularityClass::Ia));
    assert_eq!(r.fully_irregular.unwrap().kind, FamilyKind::Interval);

    let op = Operator::from_real(&[1.0], &[0.0, 0.0, 0.0, 1.0]).unwrap();
    assert!(!op.classify().unwrap().nontrivial_exists);

    let op = Operator::from_real(&[1.0], &[1.0, -2.0]).unwrap();
    assert_eq!(op.classify().unwrap().special_case, SpecialCase::ScaledTranslationDegenerate);
}

#[test]
fn imaginary_axis_family() {
    let op = Operator::from_real(&[0.0, 1.0], &[1.0]).unwrap();
    let fam = op.fully_irregular_family().unwrap();
    assert_eq!(fam.kind, FamilyKind::Line);
    for y in [-3.0, 0.0, 0.5, 10.0] {
        assert!(fam.distance(Complex64::new(0.0, y)) < 1e-12);
    }
    assert!((fam.distance(Complex64::new(0.25, 1.0)) - 0.25).abs() < 1e-12);
}
