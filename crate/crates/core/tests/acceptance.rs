//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use chinv::cpoly::{solve_trail_poly, trail_degree, TrailSolution};
use chinv::field::{inflection_curve, separatrices_from_pole, FlowOptions};
use chinv::grid::mask_distance;
use chinv::invariant::{auto_window, minimal_set_grid, oracle_set, rim_arc_agreement, MinimalSetOptions, Oracle};
use chinv::julia::{containment, inverse_orbit, SampleOptions};
use chinv::operator::FamilyKind;
use chinv::trails::{field_v, track_trail, Terminus, TrackOptions};
use chinv::{ComplexPoly, Complex64, Exec, GridMask, Operator, RegularityClass, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn win(a: f64, b: f64, c: f64, d: f64) -> Window {
    Window::new(a, b, c, d).unwrap()
}

fn cochleoid() -> Operator {
    Operator::from_real(&[-1.0, 1.0], &[0.0, 0.0, 1.0]).unwrap()
}

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1(mask_out: &mut Option<GridMask>) -> Outcome {
    let w = win(-0.25, 1.25, -0.75, 0.75);
    let opts = MinimalSetOptions {
        exec: Exec::Sequential,
        ..Default::default()
    };
    let start = Instant::now();
    let m = minimal_set_grid(&cochleoid(), w, 400, 400, &opts).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let o = oracle_set(&cochleoid(), &Oracle::Cochleoid, w, 400, 400).map_err(|e| e.to_string())?;
    let d = mask_distance(&m.mask, &o).map_err(|e| e.to_string())?;
    let h = d.hausdorff_cells.unwrap_or(usize::MAX);
    *mask_out = Some(m.mask);
    check(h <= 3 && secs <= 60.0, format!("hausdorff {h} cells, {secs:.1} s single worker"))
}

fn criterion_2() -> Outcome {
    let op = Operator::from_real(&[0.0, 1.0], &[-1.0, 0.0, 1.0]).unwrap();
    let rep = op.classify().map_err(|e| e.to_string())?;
    let fam = rep.fully_irregular.clone().ok_or("no fully irregular family")?;
    let mut ends: Vec<f64> = fam.endpoints.iter().map(|z| z.re).collect();
    ends.sort_by(f64::total_cmp);
    let family_ok = rep.class == Some(RegularityClass::Ia)
        && fam.kind == FamilyKind::Interval
        && ends.len() == 2
        && (ends[0] + 1.0).abs() < 1e-9
        && (ends[1] - 1.0).abs() < 1e-9
        && fam.endpoints.iter().all(|z| z.im.abs() < 1e-9);
    let w = win(-2.0, 2.0, -1.0, 1.0);
    let m = minimal_set_grid(&op, w, 400, 200, &MinimalSetOptions::default()).map_err(|e| e.to_string())?.mask;
    let cell = m.dx().max(m.dy());
    let worst = (0..m.cells.len())
        .filter(|&k| m.cells[k])
        .map(|k| {
            let z = m.center(k % m.nx, k / m.nx);
            let x = z.re.clamp(-1.0, 1.0);
            (z - c(x, 0.0)).norm()
        })
        .fold(0.0, f64::max);
    // Every point of the segment lies in (or next to) a marked cell.
    let covered = (0..=2000).all(|k| {
        let z = c(-1.0 + k as f64 / 1000.0, 0.0);
        let (i, j) = m.cell_of(z).unwrap();
        m.neighbors8(i, j).chain([(i, j)]).any(|(a, b)| m.get(a, b))
    });
    check(
        family_ok && worst <= 2.0 * cell && covered,
        format!(
            "class {:?}, family {:?} {:?}, farthest marked cell {:.2} cells, segment covered {covered}",
            rep.class.map(|c| c.name()),
            fam.kind.name(),
            ends,
            worst / cell
        ),
    )
}

fn criterion_3() -> Outcome {
    let op = Operator::from_real(&[0.0, 1.0], &[1.0]).unwrap();
    let traces = track_trail(&op, c(0.0, 0.0), 1e3, &TrackOptions::default()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for tr in &traces {
        for &(t, z) in &tr.samples {
            let s = t.sqrt();
            let e = (z - c(0.0, s)).norm().min((z - c(0.0, -s)).norm());
            worst = worst.max(e);
            samples += 1;
        }
    }
    let reached = traces.iter().all(|tr| (tr.last().0 - 1e3).abs() < 1e-9);
    let w = win(-2.0, 2.0, -2.0, 2.0);
    let m = minimal_set_grid(&op, w, 400, 400, &MinimalSetOptions::default()).map_err(|e| e.to_string())?.mask;
    let far = (0..m.cells.len())
        .filter(|&k| m.cells[k])
        .map(|k| m.center(k % m.nx, k / m.nx).re.abs() / m.dx())
        .fold(0.0, f64::max);
    let rows = (0..m.ny).all(|j| (0..m.nx).any(|i| m.get(i, j)));
    check(
        traces.len() == 2 && reached && worst <= 1e-9 && far <= 2.0 && rows,
        format!(
            "{} traces, {samples} samples, max error {worst:.2e}; mask within {far:.1} cells of the axis, every row hit {rows}",
            traces.len()
        ),
    )
}

/// Existence and compactness straight from the degree/leading-coefficient rules.
fn expected_booleans(dp: usize, dq: usize, lambda: Complex64) -> (bool, bool) {
    let d = dq as i64 - dp as i64;
    let neg_real = lambda.im == 0.0 && lambda.re < 0.0;
    let compact = d == 1 && ((dp >= 1 && lambda.re >= 0.0) || (dq == 1 && dp == 0 && !neg_real));
    let nontrivial = d == -1 || d == 0 || compact;
    (nontrivial, compact)
}

fn battery() -> Vec<(&'static str, Operator)> {
    let b = |p: Vec<Complex64>, q: Vec<Complex64>| Operator::build(ComplexPoly::new(p), ComplexPoly::new(q)).unwrap();
    vec![
        ("d=-2", b(vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)])),
        ("d=-1", b(vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0)])),
        ("d=0", b(vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(2.0, 0.0), c(1.0, 0.0)])),
        ("d=0 constant", b(vec![c(1.0, 0.0)], vec![c(1.0, 1.0)])),
        ("d=1 Re>0", b(vec![c(-1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])),
        ("d=1 Re=0", b(vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)])),
        ("d=1 Re<0", b(vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.5)])),
        ("d=1 degP=2", b(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0), c(1.0, 1.0)])),
        ("degQ=1 degP=0 off R-", b(vec![c(1.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 1.0)])),
        ("degQ=1 degP=0 positive", b(vec![c(2.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)])),
        ("degQ=1 degP=0 on R- (degenerate)", b(vec![c(1.0, 0.0)], vec![c(1.0, 0.0), c(-2.0, 0.0)])),
        ("d=2", b(vec![c(1.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])),
    ]
}

fn criterion_4() -> Outcome {
    let mut bad = Vec::new();
    let ops = battery();
    let mut ds = std::collections::BTreeSet::new();
    for (name, op) in &ops {
        let rep = op.classify().map_err(|e| e.to_string())?;
        let (dp, dq) = (op.deg_p().unwrap(), op.deg_q().unwrap());
        ds.insert(dq as i64 - dp as i64);
        let want = expected_booleans(dp, dq, op.lambda().unwrap());
        if (rep.nontrivial_exists, rep.compact_exists) != want {
            bad.push(format!("{name}: got {:?}, want {want:?}", (rep.nontrivial_exists, rep.compact_exists)));
        }
    }
    let covers = ds.len() == 5;
    check(
        bad.is_empty() && covers && ops.len() == 12,
        format!("{} operators, d values {ds:?}; mismatches {bad:?}", ops.len()),
    )
}

fn criterion_5(mask: &GridMask) -> Outcome {
    let opts = SampleOptions {
        chains: 8,
        ..Default::default()
    };
    let mut worst = 1.0f64;
    let mut lines = Vec::new();
    for k in 1..=10 {
        let t = 0.2 * k as f64;
        let cloud = inverse_orbit(&cochleoid(), t, c(1.0, 0.0), 100_000, 1000 + k, &opts).map_err(|e| e.to_string())?;
        let r = containment(&cloud, mask, 2);
        worst = worst.min(r.fraction);
        lines.push(format!("t={t:.1}:{:.5}", r.fraction));
    }
    check(worst >= 0.999, format!("min fraction {worst:.5} ({})", lines.join(" ")))
}

fn criterion_6() -> Outcome {
    // The sweep is run without separatrix seeding so that inclusion is a check, not a construction.
    let opts = MinimalSetOptions {
        seed_curves: false,
        ..Default::default()
    };
    let mut report = Vec::new();
    let mut ok = true;
    for (name, op) in battery() {
        let rep = op.classify().map_err(|e| e.to_string())?;
        if rep.d != Some(1) || !rep.compact_exists {
            continue;
        }
        let w = auto_window(&op).map_err(|e| e.to_string())?;
        let m = minimal_set_grid(&op, w, 200, 200, &opts).map_err(|e| e.to_string())?.mask.dilate(2);
        let (red, _) = op.reduce_common_factor().map_err(|e| e.to_string())?;
        let (mut inside, mut total) = (0usize, 0usize);
        for r in &red.zeros_p {
            let curves = separatrices_from_pole(&red, r.z, 4.0 * w.diagonal(), &FlowOptions::new(w)).map_err(|e| e.to_string())?;
            for z in curves.vertices() {
                if let Some((i, j)) = m.cell_of(z) {
                    total += 1;
                    inside += usize::from(m.get(i, j));
                }
            }
        }
        let frac = if total == 0 { 1.0 } else { inside as f64 / total as f64 };
        ok &= frac >= 0.99;
        report.push(format!("{name}: {inside}/{total}"));
    }
    check(ok && report.len() >= 4, report.join(", "))
}

/// The solution of the trail equation at `(u, t)` nearest to `z`.
fn nearest_root(op: &Operator, u: Complex64, t: f64, z: Complex64) -> Option<Complex64> {
    match solve_trail_poly(&op.p, &op.q, u, t).ok()? {
        TrailSolution::Divisor(d) => d.flatten().into_iter().min_by(|a, b| (a - z).norm().total_cmp(&(b - z).norm())),
        TrailSolution::WholePlane => None,
    }
}

fn random_poly(rng: &mut ChaCha8Rng, deg: usize) -> ComplexPoly {
    let mut co: Vec<Complex64> = (0..=deg).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    if co[deg].norm() < 0.3 {
        co[deg] = c(1.0, 0.5);
    }
    ComplexPoly::new(co)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ops = [
        cochleoid(),
        Operator::build(random_poly(&mut rng, 2), random_poly(&mut rng, 3)).unwrap(),
        Operator::build(random_poly(&mut rng, 1), random_poly(&mut rng, 1)).unwrap(),
    ];
    let (mut checked, mut worst_v, mut worst_u) = (0usize, 0.0f64, 0.0f64);
    let mut attempts = 0;
    while checked < 1000 && attempts < 20_000 {
        attempts += 1;
        let op = &ops[attempts % ops.len()];
        let u = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let t = 10f64.powf(rng.random_range(-2.0..2.0));
        let Ok(traces) = track_trail(op, u, t, &TrackOptions { base_samples: 64, ..Default::default() }) else {
            continue;
        };
        let Some(tr) = traces.get(rng.random_range(0..traces.len().max(1))) else {
            continue;
        };
        let (t_end, z) = tr.last();
        if (t_end - t).abs() > 1e-12 * t {
            continue;
        }
        let Ok(f) = field_v(op, z, t) else {
            continue;
        };
        // Away from moving poles and from collisions, where the branch is not smooth.
        if f.du.norm() > 1e3 {
            continue;
        }
        let Ok(TrailSolution::Divisor(d)) = solve_trail_poly(&op.p, &op.q, u, t) else {
            continue;
        };
        let pts = d.flatten();
        let gap = pts.iter().filter(|p| (*p - z).norm() > 1e-9).map(|p| (p - z).norm()).fold(f64::INFINITY, f64::min);
        let h = 1e-4 * t.min(1.0) * gap.min(1.0);
        let hu = 1e-4 * gap.min(1.0);
        let (Some(zp), Some(zm)) = (nearest_root(op, u, t + h, z), nearest_root(op, u, t - h, z)) else {
            continue;
        };
        let (Some(up), Some(um)) = (nearest_root(op, u + hu, t, z), nearest_root(op, u - hu, t, z)) else {
            continue;
        };
        let dv = (zp - zm) / (2.0 * h);
        let du = (up - um) / (2.0 * hu);
        worst_v = worst_v.max((dv - f.v).norm() / f.v.norm().max(1e-12));
        worst_u = worst_u.max((du - f.du).norm() / f.du.norm().max(1e-12));
        checked += 1;
    }
    check(
        checked == 1000 && worst_v <= 1e-4 && worst_u <= 1e-4,
        format!("{checked} samples, max relative error V {worst_v:.2e}, d/du {worst_u:.2e}"),
    )
}

fn example5() -> Operator {
    // P = z (z - i)(z - 1 - i), Q = (1+i) z P + 2 (z - i)(z - 1 - i) + z (z - 1 - i) + 4 z (z - i)
    let i = c(0.0, 1.0);
    let a = c(1.0, 1.0);
    let z = ComplexPoly::linear_factor(c(0.0, 0.0));
    let zi = ComplexPoly::linear_factor(i);
    let za = ComplexPoly::linear_factor(a);
    let p = &(&z * &zi) * &za;
    let q = &(&(&(&z * &p).scale(a) + &(&zi * &za).scale(c(2.0, 0.0))) + &(&z * &za)) + &(&z * &zi).scale(c(4.0, 0.0));
    Operator::build(p, q).unwrap()
}

fn dist_to_segment(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_sqr();
    if l2 == 0.0 {
        return (z - a).norm();
    }
    let s = (((z - a) * ab.conj()).re / l2).clamp(0.0, 1.0);
    (z - (a + ab * s)).norm()
}

fn criterion_8() -> Outcome {
    let op = example5();
    let (_, r1) = op.r_d1(c(1.0, -1.0));
    let value_ok = (r1.im + 4.0 / 25.0).abs() <= 1e-12;
    let w = win(-3.0, 3.0, -3.0, 3.0);
    let n = 300;
    let curves = inflection_curve(&op, &w, n, n).map_err(|e| e.to_string())?;
    let cell = w.width() / n as f64;
    let flex = |z: Complex64| op.r_d1(z).1.im;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut found, mut worst) = (0usize, 0.0f64);
    for _ in 0..20 {
        let y = rng.random_range(w.im0..w.im1);
        let m = 6000;
        let xs: Vec<f64> = (0..=m).map(|k| w.re0 + w.width() * k as f64 / m as f64).collect();
        for pair in xs.windows(2) {
            let (mut a, mut b) = (pair[0], pair[1]);
            let (fa, fb) = (flex(c(a, y)), flex(c(b, y)));
            if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
                continue;
            }
            // Skip sign changes through poles of R'.
            if fa.abs().max(fb.abs()) > 1e6 {
                continue;
            }
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if flex(c(mid, y)).signum() == fa.signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let z = c(0.5 * (a + b), y);
            if flex(z).abs() > 1e-6 * (1.0 + op.r_d1(z).1.norm()) {
                continue;
            }
            let d = curves
                .polylines
                .iter()
                .flat_map(|pl| pl.points.windows(2).map(|s| dist_to_segment(z, s[0], s[1])))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(d / cell);
            found += 1;
        }
    }
    check(
        value_ok && found > 0 && worst <= 1.0,
        format!("Im R'(1-i) = {:.15}, {found} scan-line roots, farthest {worst:.3} cells from the contour", r1.im),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ts: Vec<f64> = (0..25).map(|k| 10f64.powf(-3.0 + 9.0 * k as f64 / 24.0)).collect();
    let (mut card_bad, mut term_bad, mut traces_checked, mut escaped) = (0usize, Vec::new(), 0usize, 0usize);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let (dp, dq) = loop {
            let dp = rng.random_range(0..=6usize);
            let dq = rng.random_range(0..=6usize);
            if dp.max(dq) >= 1 {
                break (dp, dq);
            }
        };
        let op = Operator::build(random_poly(&mut rng, dp), random_poly(&mut rng, dq)).unwrap();
        let u = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let n = trail_degree(&op.p, &op.q);
        for &t in &ts {
            match solve_trail_poly(&op.p, &op.q, u, t) {
                Ok(TrailSolution::Divisor(d)) if d.total() == n => {}
                _ => card_bad += 1,
            }
        }
        let traces = track_trail(&op, u, f64::INFINITY, &TrackOptions::default()).map_err(|e| format!("op {k}: {e}"))?;
        for tr in &traces {
            match tr.terminus {
                Terminus::Escaped(_) => escaped += 1,
                Terminus::QRoot(b) => {
                    traces_checked += 1;
                    let (_, z) = tr.last();
                    let d = (z - b).norm();
                    let nearest = op.zeros_q.iter().map(|r| (r.z - b).norm()).fold(f64::INFINITY, f64::min);
                    worst = worst.max(d);
                    if d > 1e-6 || nearest > 1e-9 {
                        term_bad.push(format!("op {k}: {d:.1e}"));
                    }
                }
                other => term_bad.push(format!("op {k}: {other:?}")),
            }
        }
    }
    check(
        card_bad == 0 && term_bad.is_empty(),
        format!(
            "cardinality failures {card_bad}; {traces_checked} traces ended at Q roots (max distance {worst:.1e}), {escaped} escaped; failures {term_bad:?}"
        ),
    )
}

fn criterion_10() -> Outcome {
    let op = Operator::from_real(&[0.0, 1.0], &[1.0]).unwrap();
    let info = op.asymptotic_info().map_err(|e| e.to_string())?;
    let w = win(-4.0, 4.0, -4.0, 4.0);
    let m = minimal_set_grid(&op, w, 200, 200, &MinimalSetOptions::default()).map_err(|e| e.to_string())?.mask;
    let (inside, total) = rim_arc_agreement(&m, &info.arcs);
    let arcs_ok = total > 0 && (total - inside) as f64 <= 0.01 * total as f64;
    let predicted = info.arcs.len() == 2
        && info.arcs.iter().any(|&(a, b)| (a + PI / 2.0).abs() < 1e-9 && (b - PI / 2.0).abs() < 1e-9)
        && info.arcs.iter().any(|&(a, b)| (a - PI / 2.0).abs() < 1e-9 && (b - 3.0 * PI / 2.0).abs() < 1e-9);

    let op = Operator::from_real(&[0.0, 1.0], &[2.0, 1.0]).unwrap();
    let w = win(-40.0, 40.0, -40.0, 40.0);
    let m = minimal_set_grid(&op, w, 400, 400, &MinimalSetOptions::default()).map_err(|e| e.to_string())?.mask;
    // The cone's vertex is free: fit the smallest apex on the symmetry axis
    // whose cone of half-angle 0.2 about direction pi holds every marked cell.
    let (hx, hy) = (m.dx() / 2.0, m.dy() / 2.0);
    let slope = 0.2f64.tan();
    let (mut apex, mut far, mut origin_outside) = (f64::NEG_INFINITY, 0usize, 0usize);
    for k in 0..m.cells.len() {
        if !m.cells[k] {
            continue;
        }
        let z = m.center(k % m.nx, k / m.nx);
        apex = apex.max(z.re + hx + (z.im.abs() + hy) / slope);
        if z.norm() >= 10.0 {
            far += 1;
            let off = (z.arg() - PI).rem_euclid(2.0 * PI);
            if off.min(2.0 * PI - off) > 0.2 {
                origin_outside += 1;
            }
        }
    }
    let cone_ok = far > 0 && apex <= w.re1;
    check(
        arcs_ok && predicted && cone_ok,
        format!(
            "rim arcs {inside}/{total} inside {:?}; cone apex at {apex:.1} (window edge {}), {origin_outside} of {far} cells at radius >= 10 outside the cone with apex 0",
            info.arcs, w.re1
        ),
    )
}

fn main() {
    let mut mask = None;
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |k: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let r = f();
        let tag = if r.is_ok() { "PASS" } else { "FAIL" };
        let detail = match &r {
            Ok(s) | Err(s) => s.clone(),
        };
        println!("{tag} criterion {k:>2} {name}: {detail} [{:.1} s]", start.elapsed().as_secs_f64());
        results.push((k, name, r));
    };
    run(1, "cochleoid reproduction", &mut || criterion_1(&mut mask));
    run(2, "interval case", &mut criterion_2);
    run(3, "imaginary-axis case", &mut criterion_3);
    run(4, "decision battery", &mut criterion_4);
    run(5, "Julia containment", &mut || match &mask {
        Some(m) => criterion_5(m),
        None => Err("no cochleoid mask".into()),
    });
    run(6, "separatrix inclusion", &mut criterion_6);
    run(7, "V-field and sensitivity", &mut criterion_7);
    run(8, "inflection exactness", &mut criterion_8);
    run(9, "divisor and terminus", &mut criterion_9);
    run(10, "asymptotic arcs", &mut criterion_10);
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
