//! Adaptive Dormand–Prince 5(4) for a scalar complex ODE `z' = f(s, z)`.

use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: 1e-4,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 200_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdeStop<E> {
    Reached,
    Event(E),
    StepUnderflow,
    MaxSteps,
    /// The right-hand side was undefined or non-finite.
    Singular,
}

#[derive(Clone, Debug)]
pub struct OdeSolution<E> {
    pub points: Vec<(f64, Complex64)>,
    pub stop: OdeStop<E>,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates from `s0` to `s_end` (either direction). After each accepted step
/// `event(s, z)` may stop the integration; the point that triggered it is kept.
pub fn integrate<F, G, E>(f: F, s0: f64, z0: Complex64, s_end: f64, opts: &OdeOptions, mut event: G) -> OdeSolution<E>
where
    F: Fn(f64, Complex64) -> Option<Complex64>,
    G: FnMut(f64, Complex64) -> Option<E>,
{
    let mut points = vec![(s0, z0)];
    let dir = if s_end >= s0 { 1.0 } else { -1.0 };
    let (mut s, mut z) = (s0, z0);
    let mut h = opts.h_init.min(opts.h_max).min((s_end - s0).abs());
    let Some(mut k1) = f(s, z).filter(|v| v.is_finite()) else {
        return OdeSolution { points, stop: OdeStop::Singular };
    };
    for _ in 0..opts.max_steps {
        if (s_end - s).abs() <= f64::EPSILON * s.abs().max(1.0) {
            return OdeSolution { points, stop: OdeStop::Reached };
        }
        h = h.min((s_end - s).abs());
        let hs = h * dir;
        let stages = (|| {
            let k2 = f(s + C2 * hs, z + k1 * (A21 * hs))?;
            let k3 = f(s + C3 * hs, z + (k1 * A31 + k2 * A32) * hs)?;
            let k4 = f(s + C4 * hs, z + (k1 * A41 + k2 * A42 + k3 * A43) * hs)?;
            let k5 = f(s + C5 * hs, z + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * hs)?;
            let k6 = f(s + hs, z + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * hs)?;
            let z_new = z + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * hs;
            let k7 = f(s + hs, z_new)?;
            let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * hs;
            Some((z_new, k7, err))
        })();
        let ok = stages.filter(|(zn, k7, e)| zn.is_finite() && k7.is_finite() && e.is_finite());
        let Some((z_new, k7, err)) = ok else {
            h *= 0.25;
            if h < opts.h_min {
                return OdeSolution { points, stop: OdeStop::Singular };
            }
            continue;
        };
        let sc = opts.atol + opts.rtol * z.norm().max(z_new.norm());
        let e = err.norm() / sc;
        if e <= 1.0 {
            s += hs;
            z = z_new;
            k1 = k7;
            points.push((s, z));
            if let Some(ev) = event(s, z) {
                return OdeSolution { points, stop: OdeStop::Event(ev) };
            }
            let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(opts.h_max);
        } else {
            h *= (0.9 * e.powf(-0.2)).clamp(0.1, 0.9);
            if h < opts.h_min {
                return OdeSolution { points, stop: OdeStop::StepUnderflow };
            }
        }
    }
    OdeSolution { points, stop: OdeStop::MaxSteps }
}
