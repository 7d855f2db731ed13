//! Raster minimal invariant sets, certification of candidate sets and
//! closed-form oracle sets.
//!
//! A point `z` lies on the trail of `u` iff `u` is on the ray `z + t R(z)`, so
//! `z` belongs to the minimal set as soon as its ray meets the current set.
//! The grid version iterates this to a fixed point.

use std::f64::consts::PI;
use std::ops::ControlFlow;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{separatrices_from_pole, FlowOptions};
use crate::grid::{traverse_ray, GridMask, Window};
use crate::operator::{FamilyKind, Operator, SpecialCase};
use crate::par::Exec;
use crate::trails::{track_trail, TrackOptions};

pub use crate::grid::{mask_distance, MaskDistance};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepOrder {
    /// Every sweep reads a snapshot; cells are examined independently.
    Jacobi,
    /// In-place updates in a shuffled cell order (sequential).
    ShuffledGaussSeidel(u64),
}

#[derive(Clone, Debug)]
pub struct MinimalSetOptions {
    pub exec: Exec,
    /// Pre-seed with separatrices leaving the roots of `P`.
    pub seed_curves: bool,
    pub order: SweepOrder,
    pub max_sweeps: usize,
    /// Cast rays from four interior points of each cell besides the center.
    pub supersample: bool,
}

impl Default for MinimalSetOptions {
    fn default() -> Self {
        MinimalSetOptions {
            exec: Exec::Parallel,
            seed_curves: true,
            order: SweepOrder::Jacobi,
            max_sweeps: usize::MAX,
            supersample: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinimalSet {
    /// Cells that meet the minimal set (closed cells).
    pub mask: GridMask,
    /// Points of the set found inside each cell.
    pub witnesses: Vec<Vec<Complex64>>,
    pub sweeps: usize,
    /// Whether the sweep reached a fixed point within `max_sweeps`.
    pub converged: bool,
}

fn ray_of(op: &Operator, z: Complex64) -> Option<(Complex64, Complex64)> {
    let p = op.p.eval(z);
    if p.norm() == 0.0 {
        return None;
    }
    let r = op.q.eval(z) / p;
    (r.is_finite() && r.norm() > 0.0).then_some((z, r))
}

/// Ray origins and directions per cell. Poles and zeros of `R` cast no ray.
fn cell_rays(op: &Operator, mask: &GridMask, supersample: bool, exec: Exec) -> Vec<Vec<(Complex64, Complex64)>> {
    let (qx, qy) = (mask.dx() / 4.0, mask.dy() / 4.0);
    exec.map_range(mask.nx * mask.ny, |k| {
        let c = mask.center(k % mask.nx, k / mask.nx);
        let mut pts = vec![c];
        if supersample {
            for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                pts.push(c + Complex64::new(sx * qx, sy * qy));
            }
        }
        pts.into_iter().filter_map(|z| ray_of(op, z)).collect()
    })
}

/// The point of the trail of `w` nearest to `z`, found by Newton on
/// `z' + t R(z') = w` alternated with a projection of `z - z'` onto the trail
/// tangent to update `t >= 0`.
fn project_onto_trail(op: &Operator, z: Complex64, w: Complex64, t0: f64) -> Option<Complex64> {
    let mut t = t0.max(0.0);
    let mut zp = z;
    let tol = 1e-13 * (1.0 + w.norm());
    for _ in 0..6 {
        let mut ok = false;
        for _ in 0..12 {
            let (r, r1) = op.r_d1(zp);
            let g = zp + r * t - w;
            let d = g / (r1 * t + 1.0);
            if !d.is_finite() {
                return None;
            }
            zp -= d;
            if d.norm() <= tol * (1.0 + zp.norm()) {
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
        let (r, r1) = op.r_d1(zp);
        let v = -r / (r1 * t + 1.0);
        let v2 = v.norm_sqr();
        if v2 == 0.0 || !v2.is_finite() {
            break;
        }
        let dt = ((z - zp) * v.conj()).re / v2;
        let t_new = (t + dt).max(0.0);
        if (t_new - t).abs() <= 1e-12 * (1.0 + t) {
            break;
        }
        t = t_new;
    }
    zp.is_finite().then_some(zp)
}

/// At most this many witnesses are kept per cell.
const MAX_WITNESSES: usize = 1;

/// Points of the set found so far, bucketed by cell, each tagged with the
/// sweep that found it.
struct Witnesses {
    pts: Vec<Vec<(Complex64, usize)>>,
    sep: f64,
}

impl Witnesses {
    fn new(mask: &GridMask) -> Self {
        Witnesses { pts: vec![Vec::new(); mask.nx * mask.ny], sep: 0.25 * mask.dx().min(mask.dy()) }
    }

    /// Keeps `z` if its cell has room and no witness within a quarter cell.
    fn add(&mut self, mask: &mut GridMask, z: Complex64, sweep: usize) -> bool {
        let Some((i, j)) = mask.cell_of(z) else {
            return false;
        };
        let c = mask.idx(i, j);
        let cell = &mut self.pts[c];
        if cell.len() >= MAX_WITNESSES || cell.iter().any(|(w, _)| (w - z).norm() <= self.sep) {
            return false;
        }
        cell.push((z, sweep));
        mask.cells[c] = true;
        true
    }

    fn into_points(self) -> Vec<Vec<Complex64>> {
        self.pts.into_iter().map(|c| c.into_iter().map(|(z, _)| z).collect()).collect()
    }
}

/// Projects the sample points of cell `k` onto the trails of the witnesses met
/// along their rays. Only witnesses whose sweep tag passes `fresh` are tried.
fn find_witnesses(
    op: &Operator,
    mask: &GridMask,
    wit: &Witnesses,
    k: usize,
    rays: &[(Complex64, Complex64)],
    fresh: impl Fn(usize) -> bool,
) -> Vec<Complex64> {
    let own = (k % mask.nx, k / mask.nx);
    let mut out = Vec::new();
    for &(z, dir) in rays {
        let _ = traverse_ray(mask, z, dir, |i, j, _| {
            if (i, j) == own {
                return ControlFlow::<()>::Continue(());
            }
            for &(w, s) in &wit.pts[mask.idx(i, j)] {
                if !fresh(s) {
                    continue;
                }
                let t0 = ((w - z) * dir.conj()).re / dir.norm_sqr();
                if let Some(zp) = project_onto_trail(op, z, w, t0) {
                    if let Some((a, b)) = mask.cell_of(zp) {
                        if wit.pts[mask.idx(a, b)].len() < MAX_WITNESSES {
                            out.push(zp);
                        }
                    }
                }
            }
            ControlFlow::Continue(())
        });
    }
    out
}

/// The minimal invariant set on a grid.
///
/// Root cells are seeded with the roots themselves as witnesses. The sample
/// points of every cell are projected onto the trails of the witnesses met
/// along their rays; each projection is an exact point of the set and becomes
/// a new witness for the cell it lands in, so no rounding accumulates.
/// Repeats until no witness is added.
pub fn minimal_set_grid(op: &Operator, window: Window, nx: usize, ny: usize, opts: &MinimalSetOptions) -> Result<MinimalSet> {
    let mut mask = GridMask::new(window, nx, ny)?;
    let mut wit = Witnesses::new(&mask);
    let done = |mask: GridMask, wit: Witnesses, sweeps, converged| {
        Ok(MinimalSet { mask, witnesses: wit.into_points(), sweeps, converged })
    };
    let report = op.classify()?;
    let roots: Vec<Complex64> = op.zeros_p.iter().chain(&op.zeros_q).chain(&op.common).map(|r| r.z).collect();
    match report.special_case {
        SpecialCase::ScaledTranslationDegenerate => {
            // The trail of the root of Q is the whole plane.
            for k in 0..nx * ny {
                let c = mask.center(k % nx, k / nx);
                wit.add(&mut mask, c, 0);
            }
            return done(mask, wit, 0, true);
        }
        SpecialCase::ConstantCoefficients { .. } => return done(mask, wit, 0, true),
        SpecialCase::PZero | SpecialCase::QZero => {
            for z in roots {
                wit.add(&mut mask, z, 0);
            }
            return done(mask, wit, 0, true);
        }
        SpecialCase::None => {}
    }
    let (red, _) = op.reduce_common_factor()?;
    for &z in &roots {
        wit.add(&mut mask, z, 0);
    }
    if opts.seed_curves {
        let flow = FlowOptions::new(window);
        let step = 0.25 * mask.dx().min(mask.dy());
        for r in &red.zeros_p {
            let Ok(curves) = separatrices_from_pole(&red, r.z, 4.0 * window.diagonal(), &flow) else {
                continue;
            };
            for line in &curves.polylines {
                for seg in line.points.windows(2) {
                    let n = ((seg[1] - seg[0]).norm() / step).ceil().max(1.0) as usize;
                    for s in 0..=n {
                        wit.add(&mut mask, seg[0] + (seg[1] - seg[0]) * (s as f64 / n as f64), 0);
                    }
                }
            }
        }
    }
    let rays = cell_rays(&red, &mask, opts.supersample, opts.exec);
    // Only cells with room for a witness look along their rays; what they find
    // may land in any cell.
    let open = |wit: &Witnesses, k: usize| !rays[k].is_empty() && wit.pts[k].len() < MAX_WITNESSES;
    let mut active: Vec<usize> = (0..nx * ny).filter(|&k| open(&wit, k)).collect();
    let mut sweeps = 0;
    match opts.order {
        SweepOrder::Jacobi => {
            // Every witness is tried once, in the sweep after it was found.
            while sweeps < opts.max_sweeps {
                sweeps += 1;
                let prev = sweeps - 1;
                let (snap, ws) = (&mask, &wit);
                let found = opts.exec.map(&active, |&k| find_witnesses(&red, snap, ws, k, &rays[k], |s| s == prev));
                let mut changed = false;
                for z in found.into_iter().flatten() {
                    changed |= wit.add(&mut mask, z, sweeps);
                }
                active.retain(|&k| open(&wit, k));
                if !changed {
                    return done(mask, wit, sweeps, true);
                }
            }
        }
        SweepOrder::ShuffledGaussSeidel(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order = active.clone();
            // The sweep in which each cell last looked; later witnesses are new to it.
            let mut seen = vec![0usize; nx * ny];
            while sweeps < opts.max_sweeps {
                sweeps += 1;
                order.shuffle(&mut rng);
                let mut changed = false;
                for &k in &order {
                    if !open(&wit, k) {
                        continue;
                    }
                    let since = seen[k];
                    seen[k] = sweeps;
                    for z in find_witnesses(&red, &mask, &wit, k, &rays[k], |s| s >= since) {
                        changed |= wit.add(&mut mask, z, sweeps);
                    }
                }
                if !changed {
                    return done(mask, wit, sweeps, true);
                }
            }
        }
    }
    done(mask, wit, sweeps, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificationMethod {
    /// Rays from boundary cells must avoid the interior.
    BoundaryRays,
    /// Rays from unmarked cells must avoid the set (used when the interior is empty).
    ComplementRays,
}

impl CertificationMethod {
    pub fn name(self) -> &'static str {
        match self {
            CertificationMethod::BoundaryRays => "boundary_rays",
            CertificationMethod::ComplementRays => "complement_rays",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificationReport {
    pub passed: bool,
    /// Cell center and the ray parameter at which it entered the forbidden region.
    pub violations: Vec<(Complex64, f64)>,
    pub boundary_cells_checked: usize,
    pub zeros_inside: bool,
    pub method: CertificationMethod,
}

/// Checks the ray criterion for invariance on a grid mask.
pub fn certify_invariant(op: &Operator, mask: &GridMask, exec: Exec) -> Result<CertificationReport> {
    let (red, _) = op.reduce_common_factor()?;
    let interior = mask.interior();
    let method = if interior.count() > 0 {
        CertificationMethod::BoundaryRays
    } else {
        CertificationMethod::ComplementRays
    };
    let need = match method {
        CertificationMethod::BoundaryRays => &interior,
        CertificationMethod::ComplementRays => mask,
    };
    let zeros_inside = op
        .zeros_p
        .iter()
        .chain(&op.zeros_q)
        .all(|r| mask.cell_of(r.z).is_some_and(|(i, j)| need.get(i, j)));
    let candidates: Vec<usize> = match method {
        CertificationMethod::BoundaryRays => {
            let bd = mask.boundary();
            (0..mask.cells.len()).filter(|&k| bd.cells[k]).collect()
        }
        CertificationMethod::ComplementRays => (0..mask.cells.len()).filter(|&k| !mask.cells[k]).collect(),
    };
    let found = exec.map(&candidates, |&k| {
        let (i0, j0) = (k % mask.nx, k / mask.nx);
        let (z, dir) = ray_of(&red, mask.center(i0, j0))?;
        let mut at = None;
        let _ = traverse_ray(mask, z, dir, |i, j, s| {
            let near = i.abs_diff(i0) <= 1 && j.abs_diff(j0) <= 1;
            let bad = match method {
                CertificationMethod::BoundaryRays => !near && interior.get(i, j),
                CertificationMethod::ComplementRays => (i, j) != (i0, j0) && mask.get(i, j),
            };
            if bad {
                at = Some(s);
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        at.map(|s| (z, s))
    });
    let violations: Vec<(Complex64, f64)> = found.into_iter().flatten().collect();
    Ok(CertificationReport {
        passed: zeros_inside && violations.is_empty(),
        violations,
        boundary_cells_checked: candidates.len(),
        zeros_inside,
        method,
    })
}

/// Forward closure: rasterizes whole trails from every newly marked cell,
/// `sweeps` times. An independent cross-check of [`minimal_set_grid`].
#[allow(clippy::too_many_arguments)]
pub fn trail_closure_set(
    op: &Operator,
    window: Window,
    nx: usize,
    ny: usize,
    seeds: &[Complex64],
    sweeps: usize,
    track: &TrackOptions,
    exec: Exec,
) -> Result<GridMask> {
    if seeds.is_empty() {
        return Err(Error::InvalidGeometry("no seeds".into()));
    }
    let (red, common) = op.reduce_common_factor()?;
    let mut mask = GridMask::new(window, nx, ny)?;
    for c in &common {
        mask.mark_point(c.z);
    }
    let mut frontier: Vec<Complex64> = Vec::new();
    for &s in seeds {
        if mask.mark_point(s) || mask.cell_of(s).is_none() {
            frontier.push(s);
        }
    }
    for _ in 0..sweeps {
        if frontier.is_empty() {
            break;
        }
        let lines = exec.map(&frontier, |&u| {
            track_trail(&red, u, f64::INFINITY, track)
                .map(|trs| trs.into_iter().map(|t| t.samples.into_iter().map(|s| s.1).collect::<Vec<_>>()).collect::<Vec<_>>())
        });
        let before = mask.clone();
        for line in lines.into_iter().flat_map(|r| r.unwrap_or_default()) {
            mask.rasterize_polyline(&line);
        }
        frontier = (0..mask.cells.len())
            .filter(|&k| mask.cells[k] && !before.cells[k])
            .map(|k| mask.center(k % nx, k / nx))
            .collect();
    }
    Ok(mask)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Oracle {
    /// `r <= sin(theta)/theta`, only for `R = z^2/(z-1)`.
    Cochleoid,
    Disk { center: Complex64, radius: f64 },
    /// `Re(z e^{-i theta}) <= ell`: `theta` is the outward normal.
    HalfPlane { ell: f64, theta: f64 },
    /// Complement of the open cone `|arg(z - apex) - axis| < half_angle`.
    ConeComplement { apex: Complex64, axis: f64, half_angle: f64 },
    /// The minimal fully irregular set of a class I operator.
    Interval,
}

impl Oracle {
    pub fn name(&self) -> &'static str {
        match self {
            Oracle::Cochleoid => "cochleoid",
            Oracle::Disk { .. } => "disk",
            Oracle::HalfPlane { .. } => "halfplane",
            Oracle::ConeComplement { .. } => "cone_complement",
            Oracle::Interval => "interval",
        }
    }
}

/// Boundary point of the cochleoid at polar angle `theta` in `(-pi, pi)`.
pub fn cochleoid_boundary(theta: f64) -> Complex64 {
    let r = if theta == 0.0 { 1.0 } else { theta.sin() / theta };
    Complex64::from_polar(r, theta)
}

fn is_cochleoid(op: &Operator) -> bool {
    let (Some(1), Some(2)) = (op.deg_p(), op.deg_q()) else {
        return false;
    };
    // R = z^2/(z-1) up to rounding.
    let (p, q) = (op.p.coeffs(), op.q.coeffs());
    let k = p[1];
    let tol = 1e-12 * k.norm();
    (p[0] + k).norm() <= tol && (q[2] - k).norm() <= tol && q[1].norm() <= tol && q[0].norm() <= tol
}

pub fn oracle_set(op: &Operator, oracle: &Oracle, window: Window, nx: usize, ny: usize) -> Result<GridMask> {
    let mismatch = |reason: &str| Error::OracleMismatch {
        name: oracle.name().into(),
        reason: reason.into(),
    };
    match oracle {
        Oracle::Cochleoid => {
            if !is_cochleoid(op) {
                return Err(mismatch("defined only for P = z - 1, Q = z^2"));
            }
            GridMask::from_predicate(window, nx, ny, |z| {
                let th = z.arg();
                let r = if th == 0.0 { 1.0 } else { th.sin() / th };
                z.norm() <= r
            })
        }
        &Oracle::Disk { center, radius } => GridMask::from_predicate(window, nx, ny, |z| (z - center).norm() <= radius),
        &Oracle::HalfPlane { ell, theta } => {
            let n = Complex64::from_polar(1.0, -theta);
            GridMask::from_predicate(window, nx, ny, |z| (z * n).re <= ell)
        }
        &Oracle::ConeComplement { apex, axis, half_angle } => GridMask::from_predicate(window, nx, ny, |z| {
            let w = z - apex;
            w.norm() == 0.0 || crate::operator::wrap_angle(w.arg() - axis).abs() >= half_angle
        }),
        Oracle::Interval => {
            let fam = op.fully_irregular_family().map_err(|_| mismatch("operator is not in class I"))?;
            let mut mask = GridMask::new(window, nx, ny)?;
            let dir = fam.direction / fam.direction.norm();
            let far = 4.0 * (window.diagonal() + (window.center() - fam.anchor).norm());
            let (a, b) = match fam.kind {
                FamilyKind::Interval => (fam.endpoints[0], fam.endpoints[1]),
                FamilyKind::HalfLineRight | FamilyKind::HalfLineLeft => (fam.endpoints[0], fam.endpoints[0] + dir * far),
                FamilyKind::Line => (fam.anchor - dir * far, fam.anchor + dir * far),
            };
            mask.rasterize_segment(a, b);
            Ok(mask)
        }
    }
}

/// A window around the roots of `P Q`: their bounding box inflated four times;
/// in the compact case doubled until the inscribed disk certifies.
pub fn auto_window(op: &Operator) -> Result<Window> {
    let zs = op.zeros_pq();
    let (mut lo, mut hi) = (Complex64::new(f64::INFINITY, f64::INFINITY), Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for z in &zs {
        lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
        hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
    }
    let (center, half) = if zs.is_empty() {
        (Complex64::new(0.0, 0.0), 1.0)
    } else {
        ((lo + hi) / 2.0, ((hi.re - lo.re).max(hi.im - lo.im) / 2.0).max(0.25))
    };
    let mut w = Window::centered(center, 4.0 * half)?;
    if op.classify()?.compact_exists {
        for _ in 0..20 {
            let r = w.width().min(w.height()) / 2.0;
            let disk = oracle_set(op, &Oracle::Disk { center: w.center(), radius: r * 0.95 }, w, 96, 96)?;
            if certify_invariant(op, &disk, Exec::Parallel)?.passed {
                break;
            }
            w = w.scaled(2.0);
        }
    }
    Ok(w)
}

/// Fraction of rim cells of the complement whose argument (seen from the window
/// center) falls inside one of `arcs`.
pub fn rim_arc_agreement(mask: &GridMask, arcs: &[(f64, f64)]) -> (usize, usize) {
    let c = mask.window.center();
    let (mut inside, mut total) = (0, 0);
    for j in 0..mask.ny {
        for i in 0..mask.nx {
            let rim = i == 0 || j == 0 || i + 1 == mask.nx || j + 1 == mask.ny;
            if !rim || mask.get(i, j) {
                continue;
            }
            total += 1;
            let a = (mask.center(i, j) - c).arg();
            if arcs.iter().any(|&(lo, hi)| in_arc(a, lo, hi)) {
                inside += 1;
            }
        }
    }
    (inside, total)
}

fn in_arc(a: f64, lo: f64, hi: f64) -> bool {
    let span = hi - lo;
    if span >= 2.0 * PI {
        return true;
    }
    (a - lo).rem_euclid(2.0 * PI) <= span
}
