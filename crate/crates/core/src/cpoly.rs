//! Complex polynomials, their roots, and the trail equation `t Q(z) + (z - u) P(z) = 0`.
//!
//! Coefficients are stored in ascending degree. The zero polynomial has an empty
//! coefficient vector and no degree.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ComplexPoly {
    coeffs: Vec<Complex64>,
}

impl ComplexPoly {
    /// Builds a polynomial from ascending coefficients, dropping exact trailing zeros.
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        let mut p = ComplexPoly { coeffs };
        p.trim_exact();
        p
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        ComplexPoly { coeffs: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// `z - root`
    pub fn linear_factor(root: Complex64) -> Self {
        Self::new(vec![-root, ONE])
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        roots
            .iter()
            .fold(Self::constant(ONE), |acc, &r| &acc * &Self::linear_factor(r))
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Option<Complex64> {
        self.coeffs.last().copied()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn trim_exact(&mut self) {
        while self.coeffs.last().is_some_and(|c| *c == ZERO) {
            self.coeffs.pop();
        }
    }

    /// Drops leading coefficients whose magnitude is at most `rel * max|coeff|`.
    pub fn trimmed(&self, rel: f64) -> Self {
        let cut = rel * self.max_abs_coeff();
        let mut coeffs = self.coeffs.clone();
        while coeffs.last().is_some_and(|c| c.norm() <= cut) {
            coeffs.pop();
        }
        ComplexPoly { coeffs }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
    }

    /// Value together with first and second derivatives, by a single Horner pass.
    pub fn eval_d2(&self, z: Complex64) -> (Complex64, Complex64, Complex64) {
        let (mut p, mut d1, mut d2) = (ZERO, ZERO, ZERO);
        for &c in self.coeffs.iter().rev() {
            d2 = d2 * z + d1;
            d1 = d1 * z + p;
            p = p * z + c;
        }
        (p, d1, d2 * 2.0)
    }

    /// Value and first derivative.
    pub fn eval_d1(&self, z: Complex64) -> (Complex64, Complex64) {
        let (mut p, mut d1) = (ZERO, ZERO);
        for &c in self.coeffs.iter().rev() {
            d1 = d1 * z + p;
            p = p * z + c;
        }
        (p, d1)
    }

    /// `sum |a_k| r^k`, the modulus bound used for backward-error tests.
    pub fn eval_abs(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn conj(&self) -> Self {
        Self::new(self.coeffs.iter().map(|c| c.conj()).collect())
    }

    /// Coefficients of `p(z + a)`, i.e. the Taylor coefficients `p^(k)(a) / k!`.
    pub fn shift(&self, a: Complex64) -> Self {
        let mut c = self.coeffs.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                let hi = c[j + 1];
                c[j] += a * hi;
            }
        }
        Self::new(c)
    }

    /// `p(a w + b)` as a polynomial in `w`.
    pub fn compose_affine(&self, a: Complex64, b: Complex64) -> Self {
        let shifted = self.shift(b);
        let mut pow = ONE;
        let coeffs = shifted
            .coeffs
            .iter()
            .map(|&c| {
                let v = c * pow;
                pow *= a;
                v
            })
            .collect();
        Self::new(coeffs)
    }

    /// Synthetic division by `z - r`; returns `(quotient, remainder)`.
    pub fn deflate(&self, r: Complex64) -> (Self, Complex64) {
        if self.coeffs.len() <= 1 {
            return (Self::zero(), self.coeffs.first().copied().unwrap_or(ZERO));
        }
        let n = self.coeffs.len() - 1;
        let mut q = vec![ZERO; n];
        let mut acc = ZERO;
        for k in (0..=n).rev() {
            acc = acc * r + self.coeffs[k];
            if k > 0 {
                q[k - 1] = acc;
            }
        }
        (Self::new(q), acc)
    }

    /// Order of vanishing at `a`: the first Taylor coefficient exceeding `rel * max|taylor|`.
    pub fn order_at(&self, a: Complex64, rel: f64) -> Option<usize> {
        let t = self.shift(a);
        let cut = rel * t.max_abs_coeff();
        t.coeffs.iter().position(|c| c.norm() > cut)
    }

    /// Multiset of roots. See [`roots`].
    pub fn roots(&self) -> Result<Vec<Root>> {
        roots(self, &RootOptions::default())
    }
}

impl fmt::Display for ComplexPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(|c| format_complex(*c)).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl Add for &ComplexPoly {
    type Output = ComplexPoly;
    fn add(self, rhs: &ComplexPoly) -> ComplexPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let c = (0..n)
            .map(|k| {
                self.coeffs.get(k).copied().unwrap_or(ZERO) + rhs.coeffs.get(k).copied().unwrap_or(ZERO)
            })
            .collect();
        ComplexPoly::new(c)
    }
}

impl Neg for &ComplexPoly {
    type Output = ComplexPoly;
    fn neg(self) -> ComplexPoly {
        self.scale(-ONE)
    }
}

impl Sub for &ComplexPoly {
    type Output = ComplexPoly;
    fn sub(self, rhs: &ComplexPoly) -> ComplexPoly {
        self + &(-rhs)
    }
}

impl Mul for &ComplexPoly {
    type Output = ComplexPoly;
    fn mul(self, rhs: &ComplexPoly) -> ComplexPoly {
        if self.is_zero() || rhs.is_zero() {
            return ComplexPoly::zero();
        }
        let mut c = vec![ZERO; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        ComplexPoly::new(c)
    }
}

/// Parses a complex literal such as `1.5-0.25i`, `2i`, `-3`.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let t = s.trim();
    if t.is_empty() {
        return Err(Error::Parse("empty complex literal".into()));
    }
    t.parse::<Complex64>()
        .map_err(|_| Error::Parse(format!("malformed complex literal `{t}`")))
        .and_then(|z| {
            if z.re.is_finite() && z.im.is_finite() {
                Ok(z)
            } else {
                Err(Error::Parse(format!("non-finite complex literal `{t}`")))
            }
        })
}

/// Comma-separated ascending coefficient list, e.g. `"-1,0,1"` for `z^2 - 1`.
pub fn parse_coeffs(s: &str) -> Result<ComplexPoly> {
    let coeffs = s.split(',').map(parse_complex).collect::<Result<Vec<_>>>()?;
    Ok(ComplexPoly::new(coeffs))
}

pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else if z.im < 0.0 {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub z: Complex64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug)]
pub struct RootOptions {
    /// Relative residual bound `|p(r)| <= tol * max|coeff| * max(1,|r|)^deg`.
    pub tol: f64,
    /// Roots closer than `cluster_radius * max(1, |r|)` are merged.
    pub cluster_radius: f64,
    pub max_iterations: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            tol: 1e-12,
            cluster_radius: 1e-7,
            max_iterations: 1000,
        }
    }
}

pub fn flatten_roots(roots: &[Root]) -> Vec<Complex64> {
    roots
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.z, r.multiplicity))
        .collect()
}

/// All roots with multiplicity: Aberth–Ehrlich iteration on the normalized
/// polynomial, Newton polishing, then clustering of numerically coincident roots.
pub fn roots(p: &ComplexPoly, opts: &RootOptions) -> Result<Vec<Root>> {
    let scale = p.max_abs_coeff();
    if p.is_zero() || scale == 0.0 {
        return Err(Error::NoRootSet);
    }
    let norm = p.scale(Complex64::new(1.0 / scale, 0.0));
    let zero_mult = norm.coeffs.iter().take_while(|c| **c == ZERO).count();
    let reduced = ComplexPoly::new(norm.coeffs[zero_mult..].to_vec());
    let mut found: Vec<Complex64> = vec![ZERO; zero_mult];
    let (approx, converged) = aberth(&reduced, opts.max_iterations);
    let polished: Vec<Complex64> = approx
        .iter()
        .enumerate()
        .map(|(i, &z)| polish(&reduced, z, &approx, i))
        .collect();
    found.extend(polished);

    let deg = norm.degree().unwrap_or(0) as i32;
    let bound = |z: Complex64| opts.tol * norm.max_abs_coeff() * z.norm().max(1.0).powi(deg);
    let clustered: Vec<Root> = merge_unresolved(&norm, cluster(&found, opts.cluster_radius))
        .into_iter()
        .map(|r| refine_multiple(&norm, r, opts.cluster_radius))
        .collect();
    let ok: Vec<bool> = clustered
        .iter()
        .map(|r| {
            // A merged root of multiplicity m is accurate only to order eps^(1/m);
            // the residual test applies to its centroid, which is far better.
            norm.eval(r.z).norm() <= bound(r.z).max(residual_floor(&norm, r))
        })
        .collect();
    if !converged || ok.iter().any(|v| !v) {
        return Err(Error::NonConvergence {
            iterations: opts.max_iterations,
            partial: clustered.iter().zip(ok).map(|(r, f)| (r.z, f)).collect(),
        });
    }
    Ok(clustered)
}

// Floating-point evaluation noise at `r`, the smallest residual any method can certify.
fn residual_floor(p: &ComplexPoly, r: &Root) -> f64 {
    8.0 * f64::EPSILON * p.eval_abs(r.z.norm()) * (p.degree().unwrap_or(0) as f64 + 1.0)
}

fn cluster(roots: &[Complex64], radius: f64) -> Vec<Root> {
    let n = roots.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            let tol = radius * roots[i].norm().max(roots[j].norm()).max(1.0);
            if (roots[i] - roots[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Complex64, usize)> = Vec::new();
    for (i, &root) in roots.iter().enumerate() {
        let g = find(&mut parent, i);
        match groups.iter_mut().find(|(id, _, _)| *id == g) {
            Some(entry) => {
                entry.1 += root;
                entry.2 += 1;
            }
            None => groups.push((g, root, 1)),
        }
    }
    groups
        .into_iter()
        .map(|(_, sum, m)| Root {
            z: sum / m as f64,
            multiplicity: m,
        })
        .collect()
}

// Two clusters whose union of multiplicity m cannot be told apart from one
// m-fold root at double precision are merged. Near an m-fold root `c`,
// `|p(z)| ~ K |z - c|^m` with `K = |p^(m)(c)| / m!`, so roots closer than
// `(noise / K)^(1/m)` are inside the evaluation noise of `p`.
fn merge_unresolved(p: &ComplexPoly, mut groups: Vec<Root>) -> Vec<Root> {
    loop {
        let mut merged = None;
        'search: for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let (a, b) = (groups[i], groups[j]);
                let m = a.multiplicity + b.multiplicity;
                let c = (a.z * a.multiplicity as f64 + b.z * b.multiplicity as f64) / m as f64;
                let mut d = p.clone();
                let mut fact = 1.0;
                for k in 1..=m {
                    d = d.derivative();
                    fact *= k as f64;
                }
                let k = d.eval(c).norm() / fact;
                let noise = residual_floor(p, &Root { z: c, multiplicity: m });
                if k > 0.0 && (a.z - b.z).norm() <= 2.0 * (noise / k).powf(1.0 / m as f64) {
                    merged = Some((i, j, Root { z: c, multiplicity: m }));
                    break 'search;
                }
            }
        }
        match merged {
            Some((i, j, r)) => {
                groups.swap_remove(j);
                groups[i] = r;
            }
            None => return groups,
        }
    }
}

// A root of multiplicity m is a simple root of p^(m-1); Newton there recovers
// the digits lost by the simultaneous iteration.
fn refine_multiple(p: &ComplexPoly, r: Root, radius: f64) -> Root {
    if r.multiplicity < 2 {
        return r;
    }
    let mut d = p.clone();
    for _ in 1..r.multiplicity {
        d = d.derivative();
    }
    let dd = d.derivative();
    let reach = radius * r.z.norm().max(1.0);
    let mut z = r.z;
    for _ in 0..8 {
        let den = dd.eval(z);
        if den == ZERO {
            break;
        }
        let step = d.eval(z) / den;
        if !step.is_finite() || (z - step - r.z).norm() > reach {
            break;
        }
        z -= step;
        if step.norm() <= f64::EPSILON * z.norm().max(1.0) {
            break;
        }
    }
    Root { z, multiplicity: r.multiplicity }
}

// Newton-polygon starting points: one circle per upper-hull edge of (k, ln|a_k|).
fn initial_guesses(p: &ComplexPoly) -> Vec<Complex64> {
    let n = p.degree().unwrap_or(0);
    let pts: Vec<(usize, f64)> = p
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(k, c)| (k, c.norm().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &pt in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 as f64 - a.0 as f64) * (pt.1 - a.1) - (b.1 - a.1) * (pt.0 as f64 - a.0 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    let sigma = 0.7;
    let mut out = Vec::with_capacity(n);
    for w in hull.windows(2) {
        let (i, li) = w[0];
        let (j, lj) = w[1];
        let k = j - i;
        let r = ((li - lj) / k as f64).exp();
        for m in 0..k {
            let ang = 2.0 * std::f64::consts::PI * (m as f64 / k as f64 + i as f64 / n as f64) + sigma;
            out.push(Complex64::from_polar(r, ang));
        }
    }
    out
}

// p(z)/p'(z), switching to the reversed polynomial outside the unit disk.
fn newton_ratio(p: &ComplexPoly, z: Complex64) -> (Complex64, f64) {
    let n = p.degree().unwrap_or(0) as f64;
    if z.norm() <= 1.0 {
        let (v, d) = p.eval_d1(z);
        let err = v.norm() / (p.eval_abs(z.norm()) * 4.0 * f64::EPSILON).max(f64::MIN_POSITIVE);
        (v / d, err)
    } else {
        let y = ONE / z;
        let (mut rv, mut rd) = (ZERO, ZERO);
        for &c in p.coeffs.iter() {
            rd = rd * y + rv;
            rv = rv * y + c;
        }
        let abs_rev = p.coeffs.iter().fold(0.0, |acc, c| acc * y.norm() + c.norm());
        let err = rv.norm() / (abs_rev * 4.0 * f64::EPSILON).max(f64::MIN_POSITIVE);
        let ratio = ONE / (y * (n - y * rd / rv));
        (ratio, err)
    }
}

fn aberth(p: &ComplexPoly, max_iter: usize) -> (Vec<Complex64>, bool) {
    let n = match p.degree() {
        Some(0) | None => return (Vec::new(), true),
        Some(n) => n,
    };
    if n == 1 {
        return (vec![-p.coeffs[0] / p.coeffs[1]], true);
    }
    let mut z = initial_guesses(p);
    let mut done = vec![false; n];
    for _ in 0..max_iter {
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (ratio, err) = newton_ratio(p, z[i]);
            if err <= 1.0 {
                done[i] = true;
                continue;
            }
            let sum: Complex64 = (0..n).filter(|&j| j != i).map(|j| ONE / (z[i] - z[j])).sum();
            let w = if ratio.is_finite() {
                ratio / (ONE - ratio * sum)
            } else {
                -ONE / sum
            };
            if w.is_finite() {
                z[i] -= w;
                if w.norm() <= 2.0 * f64::EPSILON * z[i].norm() {
                    done[i] = true;
                }
            }
        }
        if done.iter().all(|d| *d) {
            return (z, true);
        }
    }
    let ok = z.iter().all(|&zi| newton_ratio(p, zi).1 <= 64.0);
    (z, ok)
}

fn polish(p: &ComplexPoly, z0: Complex64, all: &[Complex64], idx: usize) -> Complex64 {
    let sep = all
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != idx)
        .map(|(_, w)| (z0 - w).norm())
        .fold(f64::INFINITY, f64::min);
    let mut z = z0;
    let mut res = p.eval(z).norm();
    for _ in 0..3 {
        let (v, d) = p.eval_d1(z);
        if d == ZERO {
            break;
        }
        let step = v / d;
        if step.norm().is_nan() || step.norm() >= 0.1 * sep {
            break;
        }
        let cand = z - step;
        let r = p.eval(cand).norm();
        if r < res {
            z = cand;
            res = r;
        } else {
            break;
        }
    }
    z
}

/// Solutions of `t Q(z) + (z - u) P(z) = 0` at one fixed `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RootDivisor {
    pub t: f64,
    pub points: Vec<Root>,
    /// Solutions absorbed at infinity.
    pub infinity: usize,
}

impl RootDivisor {
    pub fn finite_count(&self) -> usize {
        self.points.iter().map(|r| r.multiplicity).sum()
    }

    pub fn total(&self) -> usize {
        self.finite_count() + self.infinity
    }

    pub fn flatten(&self) -> Vec<Complex64> {
        flatten_roots(&self.points)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrailSolution {
    Divisor(RootDivisor),
    /// The equation vanishes identically, so by convention every point is a root.
    WholePlane,
}

impl TrailSolution {
    pub fn divisor(self) -> Result<RootDivisor> {
        match self {
            TrailSolution::Divisor(d) => Ok(d),
            TrailSolution::WholePlane => Err(Error::WholePlane),
        }
    }
}

/// `t Q(z) + (z - u) P(z)` as a polynomial in `z`.
pub fn trail_poly(p: &ComplexPoly, q: &ComplexPoly, u: Complex64, t: f64) -> ComplexPoly {
    let zu = ComplexPoly::new(vec![-u, ONE]);
    &q.scale(Complex64::new(t, 0.0)) + &(&zu * p)
}

/// `max(deg Q, deg P + 1)`, with the zero polynomial contributing nothing.
pub fn trail_degree(p: &ComplexPoly, q: &ComplexPoly) -> usize {
    let dq = q.degree().unwrap_or(0);
    let dp1 = p.degree().map(|d| d + 1).unwrap_or(0);
    dq.max(dp1)
}

const VANISH_REL: f64 = 1e-13;

pub fn solve_trail_poly(p: &ComplexPoly, q: &ComplexPoly, u: Complex64, t: f64) -> Result<TrailSolution> {
    if p.is_zero() && q.is_zero() {
        return Err(Error::ZeroOperator);
    }
    let n = trail_degree(p, q);
    let opts = RootOptions::default();
    if t == 0.0 {
        if p.is_zero() {
            return Ok(TrailSolution::WholePlane);
        }
        let mut pts = roots(p, &opts)?;
        let tol = opts.cluster_radius * u.norm().max(1.0);
        match pts.iter_mut().find(|r| (r.z - u).norm() <= tol) {
            Some(r) => r.multiplicity += 1,
            None => pts.push(Root { z: u, multiplicity: 1 }),
        }
        let finite: usize = pts.iter().map(|r| r.multiplicity).sum();
        return Ok(TrailSolution::Divisor(RootDivisor {
            t,
            points: pts,
            infinity: n - finite,
        }));
    }
    let combined = trail_poly(p, q, u, t);
    let scale = t * q.max_abs_coeff() + (1.0 + u.norm()) * p.max_abs_coeff();
    if combined.max_abs_coeff() <= VANISH_REL * scale {
        return Ok(TrailSolution::WholePlane);
    }
    let c = combined.trimmed(1e-15 * scale / combined.max_abs_coeff().max(f64::MIN_POSITIVE));
    let pts = match c.degree() {
        Some(0) => Vec::new(),
        _ => roots(&c, &opts)?,
    };
    let finite: usize = pts.iter().map(|r| r.multiplicity).sum();
    Ok(TrailSolution::Divisor(RootDivisor {
        t,
        points: pts,
        infinity: n.saturating_sub(finite),
    }))
}
