use chinv::contour::CurveTag;
use chinv::field::{classify_simple_zero, forward_orbit, inflection_curve, pole_directions, separatrices_from_pole, FlowOptions, ZeroKind};
use chinv::{Complex64, ComplexPoly, Operator, Window};
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn separatrix_directions_are_equally_spaced() {
    // A double root of P emits three separatrices.
    let op = Operator::build(ComplexPoly::from_roots(&[c(0.5, 0.5), c(0.5, 0.5)]), ComplexPoly::from_roots(&[c(-1.0, 0.0), c(2.0, 1.0)])).unwrap();
    let (z0, m, dirs) = pole_directions(&op, c(0.5, 0.5)).unwrap();
    assert_eq!(m, 2);
    assert_eq!(dirs.len(), 3);
    for k in 0..3 {
        let ratio = dirs[(k + 1) % 3] / dirs[k];
        assert!((ratio - Complex64::from_polar(1.0, 2.0 * PI / 3.0)).norm() < 1e-12);
    }
    // Leaving the pole, -R points along each direction.
    for d in &dirs {
        let z = z0 + d * 1e-5;
        let v = -op.r(z);
        assert!((v / v.norm() - d).norm() < 1e-3);
    }
    let w = Window::new(-3.0, 3.0, -3.0, 3.0).unwrap();
    let seps = separatrices_from_pole(&op, z0, 50.0, &FlowOptions::new(w)).unwrap();
    assert_eq!(seps.polylines.len(), 3);
    for p in &seps.polylines {
        assert_eq!(p.tag, CurveTag::Separatrix { start: z0 });
        assert_eq!(p.points[0], z0);
    }
}

#[test]
fn inflection_vertices_are_on_the_contour() {
    let op = Operator::from_real(&[1.0, -1.0, 0.5], &[0.0, 2.0, 0.0, 1.0]).unwrap();
    let w = Window::new(-3.0, 3.0, -3.0, 3.0).unwrap();
    let curves = inflection_curve(&op, &w, 120, 120).unwrap();
    assert!(curves.vertex_count() > 50);
    for p in &curves.polylines {
        for &z in &p.points {
            let (_, r1) = op.r_d1(z);
            assert!(r1.im.abs() <= 1e-3 * (r1.norm() + 1.0), "{z}: {r1}");
            let plus = matches!(p.tag, CurveTag::InflectionPlus);
            assert!(plus == (r1.re > 0.0) || r1.re.abs() < 1e-9);
        }
    }
}

#[test]
fn orbits_reach_the_attracting_zero() {
    let op = Operator::from_real(&[-1.0, 1.0], &[0.0, 0.0, 1.0]).unwrap();
    let w = Window::new(-2.0, 2.0, -2.0, 2.0).unwrap();
    let orbit = forward_orbit(&op, c(-0.5, 0.0), 1e4, &FlowOptions::new(w)).unwrap();
    let last = *orbit.polylines[0].points.last().unwrap();
    assert!(last.norm() < 1e-2, "{last}");
}

#[test]
fn simple_zero_types() {
    // R = z: R' = 1 so the zero attracts the reversed flow.
    let op = Operator::from_real(&[1.0], &[0.0, 1.0]).unwrap();
    let t = classify_simple_zero(&op, c(0.0, 0.0)).unwrap();
    assert_eq!(t.kind, ZeroKind::Sink);
    assert!((t.residue + 1.0).norm() < 1e-12);
    let op = Operator::build(ComplexPoly::constant(c(1.0, 0.0)), ComplexPoly::new(vec![c(0.0, 0.0), c(0.0, 1.0)])).unwrap();
    assert_eq!(classify_simple_zero(&op, c(0.0, 0.0)).unwrap().kind, ZeroKind::Center);
    let op = Operator::from_real(&[-1.0], &[0.0, 1.0]).unwrap();
    assert_eq!(classify_simple_zero(&op, c(0.0, 0.0)).unwrap().kind, ZeroKind::Source);
}
