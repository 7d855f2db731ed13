//! The autonomous field `z' = -R(z)`: inflection curve, separatrices from
//! poles, forward orbits and typing of simple zeros.

use num_complex::Complex64;

use crate::contour::{marching_squares, CurveSet, CurveTag, Polyline};
use crate::error::{Error, Result};
use crate::grid::Window;
use crate::ode::{integrate, OdeOptions, OdeStop};
use crate::operator::{Operator, COMMON_ROOT_TOL};

/// Distance below which a trajectory counts as having reached a root.
pub const ROOT_STOP: f64 = 1e-6;
const CENTER_TOL: f64 = 1e-10;

fn flex_value(op: &Operator, z: Complex64) -> Option<f64> {
    let (_, r1) = op.r_d1(z);
    r1.is_finite().then_some(r1.im)
}

/// Moves `z` onto `Im R' = 0` along the gradient `(Im R'', Re R'')`.
fn polish_flex(op: &Operator, z: Complex64, max_move: f64) -> Option<Complex64> {
    let mut w = z;
    for _ in 0..8 {
        let (_, r1, r2) = op.r_d2(w);
        let f = r1.im;
        let g = Complex64::new(r2.im, r2.re);
        let g2 = g.norm_sqr();
        if !f.is_finite() || g2 == 0.0 || !g2.is_finite() {
            return None;
        }
        let step = g * (f / g2);
        w -= step;
        if (w - z).norm() > max_move {
            return None;
        }
        if step.norm() <= 1e-15 * w.norm().max(1.0) {
            break;
        }
    }
    let (_, r1) = op.r_d1(w);
    (r1.im.abs() <= 1e-3 * (r1.norm() + 1.0)).then_some(w)
}

/// Zero contour of `Im R'` split by the sign of `Re R'`.
pub fn inflection_curve(op: &Operator, window: &Window, nx: usize, ny: usize) -> Result<CurveSet> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidGeometry(format!("resolution {nx}x{ny}")));
    }
    let mut out = CurveSet::new(*window);
    if op.p.is_zero() || op.q.is_zero() {
        return Ok(out);
    }
    let cell = (window.width() / nx as f64).max(window.height() / ny as f64);
    let poles: Vec<Complex64> = op.zeros_p.iter().map(|r| r.z).collect();
    let raw = marching_squares(window, nx, ny, |z| {
        if poles.iter().any(|p| (z - p).norm() < 1.5 * cell) {
            None
        } else {
            flex_value(op, z)
        }
    });
    for line in raw {
        let mut run: Vec<Complex64> = Vec::new();
        let mut sign: Option<bool> = None;
        let flush = |run: &mut Vec<Complex64>, sign: Option<bool>, out: &mut CurveSet| {
            if let Some(plus) = sign {
                if !run.is_empty() {
                    out.polylines.push(Polyline {
                        tag: if plus { CurveTag::InflectionPlus } else { CurveTag::InflectionMinus },
                        points: std::mem::take(run),
                    });
                }
            }
            run.clear();
        };
        for z in line {
            let Some(w) = polish_flex(op, z, cell) else {
                flush(&mut run, sign, &mut out);
                sign = None;
                continue;
            };
            let plus = op.r_d1(w).1.re > 0.0;
            if sign != Some(plus) {
                flush(&mut run, sign, &mut out);
                sign = Some(plus);
            }
            run.push(w);
        }
        flush(&mut run, sign, &mut out);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub window: Window,
    /// Seed offset from the pole, relative to the window diagonal.
    pub eps_rel: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Maximum integration step, relative to the window diagonal.
    pub max_step_rel: f64,
}

impl FlowOptions {
    pub fn new(window: Window) -> Self {
        FlowOptions {
            window,
            eps_rel: 1e-4,
            rtol: 1e-9,
            atol: 1e-12,
            max_step_rel: 1.0 / 400.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum FlowStop {
    QRoot(Complex64),
    PRoot(Complex64),
    LeftWindow,
}

fn flow_event<'a>(op: &'a Operator, window: &'a Window, start: Complex64, leave: f64) -> impl FnMut(f64, Complex64) -> Option<FlowStop> + 'a {
    let scale = op.zeros_pq().iter().map(|z| z.norm()).fold(1.0, f64::max);
    move |_, z| {
        if !window.contains(z) {
            return Some(FlowStop::LeftWindow);
        }
        if let Some(r) = op.zeros_q.iter().find(|r| (z - r.z).norm() < ROOT_STOP * scale) {
            return Some(FlowStop::QRoot(r.z));
        }
        op.zeros_p
            .iter()
            .find(|r| (z - r.z).norm() < leave && (r.z - start).norm() > leave)
            .map(|r| FlowStop::PRoot(r.z))
    }
}

/// The `m + 1` unit directions `w` with `w^(m+1) = -Q(z0)/G(z0)`, where
/// `G(z0)` is the leading Taylor coefficient of `P` at a root of order `m`.
pub fn pole_directions(op: &Operator, z0: Complex64) -> Result<(Complex64, usize, Vec<Complex64>)> {
    let root = op
        .zeros_p
        .iter()
        .find(|r| (r.z - z0).norm() <= COMMON_ROOT_TOL * z0.norm().max(1.0))
        .ok_or(Error::NotARootOfP(z0))?;
    let z0 = root.z;
    let m = root.multiplicity;
    let qz = op.q.eval(z0);
    if qz.norm() <= 1e-12 * op.q.eval_abs(z0.norm()).max(f64::MIN_POSITIVE) {
        return Err(Error::ReduceFirst(z0));
    }
    let g = op.p.shift(z0).coeffs()[m];
    let c = -qz / g;
    let k = (m + 1) as f64;
    let dirs = (0..m + 1)
        .map(|j| Complex64::from_polar(1.0, (c.arg() + 2.0 * std::f64::consts::PI * j as f64) / k))
        .collect();
    Ok((z0, m, dirs))
}

/// Trajectories of `-R` leaving the pole `z0`, parametrized by arclength.
pub fn separatrices_from_pole(op: &Operator, z0: Complex64, arclength_cap: f64, opts: &FlowOptions) -> Result<CurveSet> {
    let (z0, _, dirs) = pole_directions(op, z0)?;
    let diag = opts.window.diagonal();
    let eps = opts.eps_rel * diag;
    let ode = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        h_init: eps,
        h_max: opts.max_step_rel * diag,
        h_min: 1e-14 * diag,
        ..Default::default()
    };
    let field = |_: f64, z: Complex64| {
        let r = op.r(z);
        let n = r.norm();
        (n > 0.0 && n.is_finite()).then(|| -r / n)
    };
    let mut out = CurveSet::new(opts.window);
    for dir in dirs {
        let seed = z0 + dir * eps;
        let sol = integrate(field, 0.0, seed, arclength_cap, &ode, flow_event(op, &opts.window, z0, eps / 2.0));
        let mut pts = vec![z0];
        pts.extend(sol.points.iter().map(|p| p.1));
        match sol.stop {
            OdeStop::Event(FlowStop::QRoot(b)) | OdeStop::Event(FlowStop::PRoot(b)) => pts.push(b),
            _ => {}
        }
        out.polylines.push(Polyline {
            tag: CurveTag::Separatrix { start: z0 },
            points: pts,
        });
    }
    Ok(out)
}

/// Integral curve of `z' = -R(z)` in the flow's own time.
pub fn forward_orbit(op: &Operator, z0: Complex64, t_max: f64, opts: &FlowOptions) -> Result<CurveSet> {
    if op.p.eval(z0).norm() == 0.0 || !op.r(z0).is_finite() {
        return Err(Error::PoleOfR(z0));
    }
    let diag = opts.window.diagonal();
    let ode = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        h_init: 1e-3 * opts.max_step_rel * diag,
        h_max: f64::INFINITY,
        h_min: 1e-14,
        ..Default::default()
    };
    let field = |_: f64, z: Complex64| {
        let r = op.r(z);
        r.is_finite().then_some(-r)
    };
    let sol = integrate(field, 0.0, z0, t_max, &ode, flow_event(op, &opts.window, z0, 1e-9 * diag));
    let mut pts: Vec<Complex64> = Vec::with_capacity(sol.points.len() + 1);
    // Keep consecutive vertices within one cell for rasterization.
    let cell = opts.max_step_rel * diag;
    for (_, z) in sol.points {
        if let Some(&last) = pts.last() {
            let gap = (z - last).norm();
            if gap > cell {
                let k = (gap / cell).ceil() as usize;
                for s in 1..k {
                    pts.push(last + (z - last) * (s as f64 / k as f64));
                }
            }
        }
        pts.push(z);
    }
    if let OdeStop::Event(FlowStop::QRoot(b)) = sol.stop {
        pts.push(b);
    }
    let mut out = CurveSet::new(opts.window);
    out.polylines.push(Polyline {
        tag: CurveTag::ForwardOrbit { start: z0 },
        points: pts,
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroKind {
    Sink,
    Source,
    Center,
}

impl ZeroKind {
    pub fn name(self) -> &'static str {
        match self {
            ZeroKind::Sink => "sink",
            ZeroKind::Source => "source",
            ZeroKind::Center => "center",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroType {
    pub kind: ZeroKind,
    /// Residue of `-dz/R`, i.e. `-1/R'(z*)`.
    pub residue: Complex64,
    pub boundary_sensitive: bool,
}

pub fn classify_simple_zero(op: &Operator, zstar: Complex64) -> Result<ZeroType> {
    let root = op
        .zeros_q
        .iter()
        .find(|r| (r.z - zstar).norm() <= COMMON_ROOT_TOL * zstar.norm().max(1.0))
        .ok_or(Error::NotARootOfQ(zstar))?;
    let ld = op.local_data(root.z)?;
    if ld.m != 1 {
        return Err(Error::HigherOrderZero(ld.m.max(0) as usize));
    }
    let r1 = op.r_d1(root.z).1;
    let kind = if r1.re.abs() <= CENTER_TOL * r1.norm() {
        ZeroKind::Center
    } else if r1.re > 0.0 {
        ZeroKind::Sink
    } else {
        ZeroKind::Source
    };
    Ok(ZeroType {
        kind,
        residue: -1.0 / r1,
        boundary_sensitive: r1.re.abs() <= 1e-9 * r1.norm(),
    })
}
