//! Root trails: continuation of every solution branch of
//! `t Q(z) + (z - u) P(z) = 0` over `t` in `[0, inf)`.
//!
//! Branches are stepped jointly in `s = t/(1+t)`. Internally the state is
//! `w = 1 - s = 1/(1+t)` and the equation is normalized to
//! `h(z, w) = (1 - w) Q(z) + w (z - u) P(z)`, which keeps the coefficients
//! bounded all the way to `t = inf`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::contour::{CurveSet, CurveTag, Polyline};
use crate::cpoly::{solve_trail_poly, ComplexPoly};
use crate::error::{Error, Result};
use crate::field::inflection_curve;
use crate::grid::Window;
use crate::operator::{Operator, COMMON_ROOT_TOL};
use crate::par::Exec;

/// Stand-in for `t = inf` when `t_max` is infinite.
pub const T_INF: f64 = 1e14;
/// `|t R' + 1|` below this flags a sample as close to a moving pole.
pub const MOVING_POLE_FLAG: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub z: Complex64,
    pub t: f64,
    /// Velocity `-R / (t R' + 1)`.
    pub v: Complex64,
    /// Start-point sensitivity `1 / (t R' + 1)`.
    pub du: Complex64,
    pub near_pole: bool,
}

pub fn field_v(op: &Operator, z: Complex64, t: f64) -> Result<FieldSample> {
    if op.p.eval(z) == Complex64::new(0.0, 0.0) {
        return Err(Error::PoleOfR(z));
    }
    let (r, r1) = op.r_d1(z);
    if !r.is_finite() || !r1.is_finite() {
        return Err(Error::PoleOfR(z));
    }
    let den = r1 * t + 1.0;
    if den.norm() == 0.0 {
        return Err(Error::MovingPole { z, t });
    }
    Ok(FieldSample {
        z,
        t,
        v: -r / den,
        du: den.inv(),
        near_pole: den.norm() < MOVING_POLE_FLAG,
    })
}

fn unit_roots_of(c: Complex64, k: usize) -> Vec<Complex64> {
    (0..k)
        .map(|j| Complex64::from_polar(1.0, (c.arg() + 2.0 * PI * j as f64) / k as f64))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StartDirection {
    pub point: Complex64,
    /// Unit tangent of the branch leaving `point`.
    pub direction: Complex64,
    /// The branch behaves like `point + c t^(1/order) direction`.
    pub order: usize,
}

/// Initial tangents of all branches leaving the initial divisor.
///
/// A root `z0` of `P` of order `m` with `z0 != u` emits `m` branches with
/// `w^m = -Q(z0) / ((z0 - u) G(z0))`; when `u = z0` there are `m + 1` with
/// `w^(m+1) = -Q(z0) / G(z0)`. A start point `u` off the roots of `P` emits one
/// branch along `-R(u)` (omitted when `R(u) = 0`, where it is stationary).
pub fn start_directions(op: &Operator, u: Complex64) -> Result<Vec<StartDirection>> {
    if op.p.is_zero() {
        return Err(Error::WholePlane);
    }
    let mut out = Vec::new();
    let mut u_is_root = false;
    for root in &op.zeros_p {
        let z0 = root.z;
        let m = root.multiplicity;
        let qz = op.q.eval(z0);
        if qz.norm() <= 1e-12 * op.q.eval_abs(z0.norm()).max(f64::MIN_POSITIVE) {
            return Err(Error::ReduceFirst(z0));
        }
        let g = op.p.shift(z0).coeffs()[m];
        let at_u = (z0 - u).norm() <= COMMON_ROOT_TOL * z0.norm().max(1.0);
        let (c, k) = if at_u {
            u_is_root = true;
            (-qz / g, m + 1)
        } else {
            (-qz / ((z0 - u) * g), m)
        };
        out.extend(unit_roots_of(c, k).into_iter().map(|direction| StartDirection {
            point: z0,
            direction,
            order: k,
        }));
    }
    if !u_is_root {
        let v = -op.r(u);
        if v.norm() > 0.0 {
            out.push(StartDirection {
                point: u,
                direction: v / v.norm(),
                order: 1,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Membership {
    pub on_trail: bool,
    /// The unique `t >= 0` with `z` in the divisor at `t`, when `Q(z) != 0`.
    pub t_value: Option<f64>,
}

/// Semi-algebraic test: `z` lies on the trail of `u` iff
/// `w = P(z) conj(Q(z)) (z - u)` is real and non-positive; then `t = -w/|Q|^2`.
/// Roots of `Q` belong to every trail as endpoints.
pub fn trail_membership(op: &Operator, u: Complex64, z: Complex64, tol: f64) -> Membership {
    let p = op.p.eval(z);
    let q = op.q.eval(z);
    let w = p * q.conj() * (z - u);
    let q2 = q.norm_sqr();
    if q2 == 0.0 {
        return Membership {
            on_trail: true,
            t_value: None,
        };
    }
    let scale = q2 + w.norm();
    let on_trail = w.im.abs() <= tol * scale && w.re <= tol * scale;
    Membership {
        on_trail,
        t_value: Some((-w.re / q2).max(0.0)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Complex64,
    pub direction: Complex64,
    pub degenerate: bool,
}

impl Ray {
    pub fn at(&self, t: f64) -> Complex64 {
        self.origin + self.direction * t
    }
}

/// The half-line `{z + t R(z) : t >= 0}`: `z` is on the trail of `u` exactly
/// when `u` is on this ray.
pub fn associated_ray(op: &Operator, z: Complex64) -> Result<Ray> {
    let p = op.p.eval(z);
    if p.norm() == 0.0 {
        return Err(Error::PoleOfR(z));
    }
    let direction = op.q.eval(z) / p;
    Ok(Ray {
        origin: z,
        direction,
        degenerate: direction.norm() == 0.0,
    })
}

/// Where branches can merge: the negative inflection branch (`R'` real and
/// negative), tagged `inflection_minus`, and its image under `z - R/R'`,
/// tagged `nongeneric_image`.
pub fn nongeneric_locus(op: &Operator, window: &Window, nx: usize, ny: usize) -> Result<CurveSet> {
    let infl = inflection_curve(op, window, nx, ny)?;
    let mut out = infl.with_tag(|t| *t == CurveTag::InflectionMinus);
    let cell = (window.width() / nx as f64).max(window.height() / ny as f64);
    let mut images = Vec::new();
    for line in &out.polylines {
        let mut run: Vec<Complex64> = Vec::new();
        for &z in &line.points {
            let (r, r1) = op.r_d1(z);
            let u = z - r / r1;
            let jump = run.last().is_some_and(|&l: &Complex64| (u - l).norm() > 4.0 * cell);
            if !u.is_finite() || jump {
                if run.len() > 1 {
                    images.push(std::mem::take(&mut run));
                }
                run.clear();
            }
            if u.is_finite() {
                run.push(u);
            }
        }
        if run.len() > 1 {
            images.push(run);
        }
    }
    out.polylines.extend(images.into_iter().map(|points| Polyline {
        tag: CurveTag::NongenericImage,
        points,
    }));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Origin {
    StartAtU,
    StartAtPRoot(Complex64),
    /// Enters from infinity along this argument.
    BornAtInfinity(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Terminus {
    QRoot(Complex64),
    /// Leaves every bounded set along this argument.
    Escaped(f64),
    /// The branch could not be continued past this `t`.
    Merged(f64),
    Truncated(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub u: Complex64,
    /// `(t, z)` with strictly increasing `t`.
    pub samples: Vec<(f64, Complex64)>,
    pub origin: Origin,
    pub terminus: Terminus,
    /// Values of `t` at which this branch collided with another one and was
    /// re-matched after the collision.
    pub merged_at: Vec<f64>,
    pub diagnostic: Option<String>,
}

impl Trace {
    pub fn last(&self) -> (f64, Complex64) {
        *self.samples.last().expect("traces are never empty")
    }

    /// Position at a sampled `t`, if present.
    pub fn at(&self, t: f64) -> Option<Complex64> {
        let k = self.samples.partition_point(|s| s.0 < t);
        self.samples.get(k).filter(|s| s.0 == t).map(|s| s.1)
    }
}

#[derive(Clone, Debug)]
pub struct TrackOptions {
    /// Number of base steps in `s`; steps are refined adaptively below this.
    pub base_samples: usize,
    /// Times that must appear among the samples.
    pub include_t: Vec<f64>,
    /// Step halvings tolerated before a collision is declared.
    pub max_halvings: u32,
    /// Pairs closer than this (relative to the operator scale) at a collision are both marked merged.
    pub merge_radius_rel: f64,
    /// Branches beyond this radius (relative to the scale) count as escaped.
    pub escape_radius_rel: f64,
    pub max_steps: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            base_samples: 512,
            include_t: Vec::new(),
            max_halvings: 40,
            merge_radius_rel: 1e-6,
            escape_radius_rel: 1e5,
            max_steps: 1_000_000,
        }
    }
}

pub fn traces_to_csv(traces: &[Trace]) -> String {
    let mut out = String::from("trace_id,t,re,im,status\n");
    for (k, tr) in traces.iter().enumerate() {
        let n = tr.samples.len();
        for (j, &(t, z)) in tr.samples.iter().enumerate() {
            let status = if j + 1 == n {
                match tr.terminus {
                    Terminus::Escaped(_) => "escaped",
                    Terminus::Truncated(_) => "truncated",
                    Terminus::Merged(_) => "merged",
                    Terminus::QRoot(_) => "ok",
                }
            } else if tr.merged_at.contains(&t) {
                "merged"
            } else {
                "ok"
            };
            let _ = writeln!(out, "{k},{t},{},{},{status}", z.re, z.im);
        }
    }
    out
}

/// Tracks trails for several start points; each call is independent.
pub fn track_trails(op: &Operator, us: &[Complex64], t_max: f64, opts: &TrackOptions, exec: Exec) -> Vec<Result<Vec<Trace>>> {
    exec.map(us, |&u| track_trail(op, u, t_max, opts))
}

/// Follows all `N = max(deg Q, deg P + 1)` branches from `t = 0` to `t_max`
/// (which may be infinite).
pub fn track_trail(op: &Operator, u: Complex64, t_max: f64, opts: &TrackOptions) -> Result<Vec<Trace>> {
    if !u.is_finite() {
        return Err(Error::InvalidGeometry(format!("start point {u} is not finite")));
    }
    if t_max.is_nan() || t_max < 0.0 {
        return Err(Error::InvalidGeometry(format!("t_max = {t_max}")));
    }
    if op.p.is_zero() {
        return Err(Error::WholePlane);
    }
    let t_end = if t_max.is_finite() { t_max } else { T_INF };
    let (red, common) = op.reduce_common_factor()?;
    let mut traces: Vec<Trace> = Vec::new();
    for c in &common {
        for _ in 0..c.multiplicity {
            traces.push(static_trace(u, c.z, t_end, Origin::StartAtPRoot(c.z), Terminus::QRoot(c.z)));
        }
    }
    if red.q.is_zero() {
        let ends = Terminus::Truncated(t_end);
        for r in &red.zeros_p {
            for _ in 0..r.multiplicity {
                traces.push(static_trace(u, r.z, t_end, Origin::StartAtPRoot(r.z), ends));
            }
        }
        traces.push(static_trace(u, u, t_end, Origin::StartAtU, ends));
        return Ok(traces);
    }
    if let Some(tr) = linear_through_infinity(&red, u, t_max, t_end, opts)? {
        traces.push(tr);
        return Ok(traces);
    }
    traces.extend(Tracker::new(&red, u, t_max, t_end, opts)?.run());
    Ok(traces)
}

fn static_trace(u: Complex64, z: Complex64, t_end: f64, origin: Origin, terminus: Terminus) -> Trace {
    let mut samples = vec![(0.0, z)];
    if t_end > 0.0 {
        samples.push((t_end, z));
    }
    Trace {
        u,
        samples,
        origin,
        terminus,
        merged_at: Vec::new(),
        diagnostic: None,
    }
}

/// Times on the `s`-grid plus the mandatory ones.
fn sample_times(t_end: f64, opts: &TrackOptions) -> Vec<f64> {
    let n = opts.base_samples.max(1);
    let w_end = 1.0 / (1.0 + t_end);
    let mut ts: Vec<f64> = (0..=n)
        .map(|k| {
            let w = 1.0 - (1.0 - w_end) * k as f64 / n as f64;
            if k == n { t_end } else { (1.0 - w) / w }
        })
        .collect();
    ts.extend(opts.include_t.iter().copied().filter(|&t| t > 0.0 && t < t_end));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// `P` constant and `Q` linear with `t Q + (z - u) P` losing its `z` term at one
/// `t* > 0`: the single branch passes through infinity there. Sampled in
/// closed form; `u` equal to the root of `Q` makes the equation vanish
/// identically at `t*`.
fn linear_through_infinity(op: &Operator, u: Complex64, t_max: f64, t_end: f64, opts: &TrackOptions) -> Result<Option<Trace>> {
    if op.deg_p() != Some(0) || op.deg_q() != Some(1) {
        return Ok(None);
    }
    let p0 = op.p.coeffs()[0];
    let (q0, q1) = (op.q.coeffs()[0], op.q.coeffs()[1]);
    let ts = -p0 / q1;
    if ts.im.abs() > 1e-12 * ts.norm() || ts.re <= 0.0 {
        return Ok(None);
    }
    let beta = -q0 / q1;
    if (beta - u).norm() <= 1e-12 * beta.norm().max(1.0) {
        return Err(Error::WholePlane);
    }
    let esc = opts.escape_radius_rel * u.norm().max(beta.norm()).max(1.0);
    let mut samples = Vec::new();
    for t in sample_times(t_end, opts) {
        let z = (u * p0 - q0 * t) / (q1 * t + p0);
        if z.is_finite() && z.norm() <= esc {
            samples.push((t, z));
        }
    }
    let last = samples.last().map(|s| s.1).unwrap_or(u);
    let terminus = if !t_max.is_finite() || (last - beta).norm() <= 1e-6 {
        Terminus::QRoot(beta)
    } else {
        Terminus::Truncated(t_max)
    };
    Ok(Some(Trace {
        u,
        samples,
        origin: Origin::StartAtU,
        terminus,
        merged_at: Vec::new(),
        diagnostic: Some(format!("passes through infinity at t = {}", ts.re)),
    }))
}

/// Greedy nearest assignment of `from` to `to`; returns, for each `from`, an index into `to`.
fn greedy_match(from: &[Complex64], to: &[Complex64]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(from.len() * to.len());
    for (i, a) in from.iter().enumerate() {
        for (j, b) in to.iter().enumerate() {
            pairs.push(((a - b).norm(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = vec![None; from.len()];
    let mut used = vec![false; to.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

struct Branch {
    z: Complex64,
    trace: Trace,
    active: bool,
}

struct Tracker<'a> {
    op: &'a Operator,
    u: Complex64,
    t_max: f64,
    t_end: f64,
    opts: &'a TrackOptions,
    scale: f64,
    branches: Vec<Branch>,
}

enum StepFailure {
    Retry,
}

impl<'a> Tracker<'a> {
    fn new(op: &'a Operator, u: Complex64, t_max: f64, t_end: f64, opts: &'a TrackOptions) -> Result<Self> {
        let scale = op
            .zeros_pq()
            .iter()
            .map(|z| z.norm())
            .fold(u.norm().max(1.0), f64::max);
        let mut tr = Tracker {
            op,
            u,
            t_max,
            t_end,
            opts,
            scale,
            branches: Vec::new(),
        };
        tr.seed()?;
        Ok(tr)
    }

    /// `(h, dh/dz, dh/dw)` at `(z, w)`.
    fn h(&self, z: Complex64, w: f64) -> (Complex64, Complex64, Complex64) {
        let (p, p1) = self.op.p.eval_d1(z);
        let (q, q1) = self.op.q.eval_d1(z);
        let zu = z - self.u;
        (
            q * (1.0 - w) + zu * p * w,
            q1 * (1.0 - w) + (p + zu * p1) * w,
            zu * p - q,
        )
    }

    fn newton(&self, mut z: Complex64, w: f64) -> Option<Complex64> {
        for _ in 0..16 {
            let (h, hz, _) = self.h(z, w);
            let d = h / hz;
            if !d.is_finite() {
                return None;
            }
            z -= d;
            if d.norm() <= 1e-14 * (z.norm() + self.scale) {
                let (h, hz, _) = self.h(z, w);
                let d = h / hz;
                return d.is_finite().then(|| z - d);
            }
        }
        None
    }

    fn dzdw(&self, z: Complex64, w: f64) -> Complex64 {
        let (_, hz, hw) = self.h(z, w);
        -hw / hz
    }

    fn rk4(&self, z: Complex64, w: f64, dw: f64) -> Complex64 {
        let k1 = self.dzdw(z, w);
        let k2 = self.dzdw(z + k1 * (dw / 2.0), w + dw / 2.0);
        let k3 = self.dzdw(z + k2 * (dw / 2.0), w + dw / 2.0);
        let k4 = self.dzdw(z + k3 * dw, w + dw);
        z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dw / 6.0)
    }

    fn seed(&mut self) -> Result<()> {
        let op = self.op;
        let l = op.l().unwrap_or(0);
        let p_inf = op.p_inf().unwrap_or(Complex64::new(1.0, 0.0));
        let q_inf = op.q_inf().unwrap_or(Complex64::new(1.0, 0.0));
        let mut t0: f64 = 1e-6;
        if l > 0 {
            // Births sit near |z| = (|p_inf/q_inf| / t)^(1/L); keep them far out.
            let ratio = (p_inf / q_inf).norm();
            t0 = t0.min(ratio / (1e3 * self.scale).powi(l as i32));
        }
        if self.t_end > 0.0 {
            t0 = t0.min(self.t_end / 2.0);
        }
        if let Some(first) = self.opts.include_t.iter().copied().filter(|&t| t > 0.0).reduce(f64::min) {
            t0 = t0.min(first / 2.0);
        }
        let mut slots: Vec<(Complex64, Origin)> = vec![(self.u, Origin::StartAtU)];
        for r in &op.zeros_p {
            for _ in 0..r.multiplicity {
                slots.push((r.z, Origin::StartAtPRoot(r.z)));
            }
        }
        if self.t_end == 0.0 {
            for (z, origin) in slots {
                self.push_branch(origin, vec![(0.0, z)], z);
            }
            return Ok(());
        }
        let div = solve_trail_poly(&op.p, &op.q, self.u, t0)?.divisor()?;
        let mut pts = div.flatten();
        pts.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        let births = if l > 0 { (l as usize).min(pts.len()) } else { 0 };
        let (born, rest) = pts.split_at(births);
        let target = (-p_inf / q_inf).arg();
        for &z in born {
            let arg = (0..l)
                .map(|k| wrap((target + 2.0 * PI * k as f64) / l as f64))
                .min_by(|a, b| ang_dist(*a, z.arg()).total_cmp(&ang_dist(*b, z.arg())))
                .unwrap_or(z.arg());
            let z = self.newton(z, 1.0 / (1.0 + t0)).unwrap_or(z);
            self.push_branch(Origin::BornAtInfinity(arg), vec![(t0, z)], z);
        }
        let slot_pts: Vec<Complex64> = slots.iter().map(|s| s.0).collect();
        let matched = greedy_match(rest, &slot_pts);
        for (k, &z) in rest.iter().enumerate() {
            let z = self.newton(z, 1.0 / (1.0 + t0)).unwrap_or(z);
            match matched[k] {
                Some(j) => self.push_branch(slots[j].1, vec![(0.0, slots[j].0), (t0, z)], z),
                None => self.push_branch(Origin::StartAtU, vec![(t0, z)], z),
            }
        }
        Ok(())
    }

    fn push_branch(&mut self, origin: Origin, samples: Vec<(f64, Complex64)>, z: Complex64) {
        self.branches.push(Branch {
            z,
            trace: Trace {
                u: self.u,
                samples,
                origin,
                terminus: Terminus::Truncated(self.t_end),
                merged_at: Vec::new(),
                diagnostic: None,
            },
            active: true,
        });
    }

    fn active(&self) -> Vec<usize> {
        (0..self.branches.len()).filter(|&i| self.branches[i].active).collect()
    }

    /// Attempts `w -> w_new` for all active branches.
    fn try_step(&self, act: &[usize], w: f64, w_new: f64) -> std::result::Result<Vec<Complex64>, StepFailure> {
        let old: Vec<Complex64> = act.iter().map(|&i| self.branches[i].z).collect();
        let mut new = Vec::with_capacity(old.len());
        for (k, &z) in old.iter().enumerate() {
            let pred = self.rk4(z, w, w_new - w);
            let corr = self.newton(pred, w_new).ok_or(StepFailure::Retry)?;
            let moved = (corr - z).norm();
            let slack = 1e-10 * (z.norm() + self.scale);
            if (corr - pred).norm() > 0.05 * moved + slack {
                return Err(StepFailure::Retry);
            }
            let gap = old
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, o)| (o - z).norm())
                .fold(f64::INFINITY, f64::min);
            if moved > 0.3 * gap {
                return Err(StepFailure::Retry);
            }
            new.push(corr);
        }
        Ok(new)
    }

    fn run(mut self) -> Vec<Trace> {
        let times = sample_times(self.t_end, self.opts);
        let w_of = |t: f64| 1.0 / (1.0 + t);
        let t_of = |w: f64| (1.0 - w) / w;
        let mut t_cur = self.branches.iter().filter_map(|b| b.trace.samples.last()).map(|s| s.0).fold(0.0, f64::max);
        let mut w = w_of(t_cur);
        let base = (1.0 - w_of(self.t_end)) / self.opts.base_samples.max(1) as f64;
        let min_step = base * 0.5f64.powi(self.opts.max_halvings as i32);
        let esc = self.escape_radius();
        let mut ds = base;
        let mut steps = 0usize;
        let mut next = times.iter().position(|&t| t > t_cur).unwrap_or(times.len());
        while next < times.len() {
            let act = self.active();
            if act.is_empty() {
                break;
            }
            steps += 1;
            if steps > self.opts.max_steps {
                self.truncate_all(t_cur, "step limit reached");
                return self.finish(t_cur);
            }
            let w_target = w_of(times[next]);
            let (w_new, hits) = if w - ds <= w_target { (w_target, true) } else { (w - ds, false) };
            let t_new = if hits { times[next] } else { t_of(w_new) };
            if t_new <= t_cur {
                next += 1;
                continue;
            }
            match self.try_step(&act, w, w_new) {
                Ok(new) => {
                    for (k, &i) in act.iter().enumerate() {
                        let b = &mut self.branches[i];
                        b.z = new[k];
                        b.trace.samples.push((t_new, new[k]));
                        if new[k].norm() > esc {
                            b.active = false;
                            b.trace.terminus = Terminus::Escaped(new[k].arg());
                        }
                    }
                    w = w_new;
                    t_cur = t_new;
                    if hits {
                        next += 1;
                    }
                    ds = (ds * 2.0).min(base);
                }
                Err(StepFailure::Retry) => {
                    ds /= 2.0;
                    if ds < min_step {
                        let jump = (base * 1e-6).max(min_step * 4.0);
                        let w_j = (w - jump).max(w_target);
                        let t_j = if w_j == w_target { times[next] } else { t_of(w_j) };
                        if !self.jump(&act, t_cur, t_j) {
                            self.truncate_all(t_cur, "corrector failed after collision");
                            return self.finish(t_cur);
                        }
                        w = w_j;
                        t_cur = t_j;
                        if w_j == w_target {
                            next += 1;
                        }
                        ds = base / 1024.0;
                    }
                }
            }
        }
        self.finish(t_cur)
    }

    /// Crosses a collision by re-solving globally at `t_j` and re-matching.
    fn jump(&mut self, act: &[usize], t_cur: f64, t_j: f64) -> bool {
        let Ok(Ok(div)) = solve_trail_poly(&self.op.p, &self.op.q, self.u, t_j).map(|s| s.divisor()) else {
            return false;
        };
        let roots = div.flatten();
        let old: Vec<Complex64> = act.iter().map(|&i| self.branches[i].z).collect();
        let m = greedy_match(&old, &roots);
        if m.iter().any(|x| x.is_none()) {
            return false;
        }
        // The closest pair collided; anything within the merge radius joins it.
        let mut closest = (f64::INFINITY, 0, 0);
        for a in 0..old.len() {
            for b in a + 1..old.len() {
                let d = (old[a] - old[b]).norm();
                if d < closest.0 {
                    closest = (d, a, b);
                }
            }
        }
        let radius = self.opts.merge_radius_rel * self.scale;
        for a in 0..old.len() {
            let near = old
                .iter()
                .enumerate()
                .any(|(b, o)| b != a && (o - old[a]).norm() <= radius);
            if near || a == closest.1 || a == closest.2 {
                self.branches[act[a]].trace.merged_at.push(t_cur);
            }
        }
        let esc = self.escape_radius();
        for (k, &i) in act.iter().enumerate() {
            let z = roots[m[k].expect("checked")];
            let w_j = 1.0 / (1.0 + t_j);
            let z = self.newton(z, w_j).unwrap_or(z);
            let b = &mut self.branches[i];
            b.z = z;
            b.trace.samples.push((t_j, z));
            if z.norm() > esc {
                b.active = false;
                b.trace.terminus = Terminus::Escaped(z.arg());
            }
        }
        true
    }

    /// Only branches of operators with `deg P + 1 > deg Q` can leave.
    fn escape_radius(&self) -> f64 {
        if self.op.l().is_some_and(|l| l < 0) {
            self.opts.escape_radius_rel * self.scale
        } else {
            f64::INFINITY
        }
    }

    fn truncate_all(&mut self, t: f64, why: &str) {
        for b in self.branches.iter_mut().filter(|b| b.active) {
            b.active = false;
            b.trace.terminus = Terminus::Truncated(t);
            b.trace.diagnostic = Some(why.to_string());
        }
    }

    fn finish(mut self, t_cur: f64) -> Vec<Trace> {
        let act = self.active();
        let q_slots: Vec<Complex64> = self
            .op
            .zeros_q
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.z, r.multiplicity))
            .collect();
        if !self.t_max.is_finite() {
            // Final divisor: the branches nearest the roots of Q end there, the rest escape.
            let pos: Vec<Complex64> = act.iter().map(|&i| self.branches[i].z).collect();
            let m = greedy_match(&pos, &q_slots);
            for (k, &i) in act.iter().enumerate() {
                let b = &mut self.branches[i];
                b.trace.terminus = match m[k] {
                    Some(j) => Terminus::QRoot(q_slots[j]),
                    None => Terminus::Escaped(b.z.arg()),
                };
            }
        } else {
            for &i in &act {
                let b = &mut self.branches[i];
                let near = self
                    .op
                    .zeros_q
                    .iter()
                    .map(|r| r.z)
                    .filter(|q| (q - b.z).norm() <= 1e-6)
                    .min_by(|x, y| (x - b.z).norm().total_cmp(&(y - b.z).norm()));
                b.trace.terminus = match near {
                    Some(beta) => Terminus::QRoot(beta),
                    None => Terminus::Truncated(t_cur),
                };
            }
        }
        self.branches.into_iter().map(|b| b.trace).collect()
    }
}

fn wrap(a: f64) -> f64 {
    crate::operator::wrap_angle(a)
}

fn ang_dist(a: f64, b: f64) -> f64 {
    wrap(a - b).abs()
}

/// Arguments of the solutions of `z^k = c`.
pub fn root_arguments(c: Complex64, k: usize) -> Vec<f64> {
    (0..k).map(|j| wrap((c.arg() + 2.0 * PI * j as f64) / k as f64)).collect()
}

/// Polynomial whose roots are the divisor at `t` (for cross-checks).
pub fn divisor_poly(op: &Operator, u: Complex64, t: f64) -> ComplexPoly {
    crate::cpoly::trail_poly(&op.p, &op.q, u, t)
}
