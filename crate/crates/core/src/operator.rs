//! The operator `T = Q d/dz + P`, its rational field `R = Q/P`, and the
//! existence, compactness and regularity classification.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::cpoly::{ComplexPoly, Root};
use crate::error::{Error, Result};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Roots of `P` and `Q` closer than this (relative to `max(1,|z|)`) count as common.
pub const COMMON_ROOT_TOL: f64 = 1e-6;
const LAMBDA_TOL: f64 = 1e-12;
const BOUNDARY_TOL: f64 = 1e-9;
const REAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Operator {
    pub p: ComplexPoly,
    pub q: ComplexPoly,
    pub zeros_p: Vec<Root>,
    pub zeros_q: Vec<Root>,
    /// Common roots with multiplicity `min(mult_P, mult_Q)`.
    pub common: Vec<Root>,
}

impl Operator {
    pub fn build(p: ComplexPoly, q: ComplexPoly) -> Result<Self> {
        if p.is_zero() && q.is_zero() {
            return Err(Error::ZeroOperator);
        }
        let zeros = |f: &ComplexPoly| -> Result<Vec<Root>> {
            match f.degree() {
                None | Some(0) => Ok(Vec::new()),
                _ => f.roots(),
            }
        };
        let zeros_p = zeros(&p)?;
        let zeros_q = zeros(&q)?;
        let mut common = Vec::new();
        for rp in &zeros_p {
            let near = zeros_q
                .iter()
                .filter(|rq| (rq.z - rp.z).norm() <= COMMON_ROOT_TOL * rp.z.norm().max(1.0))
                .min_by(|a, b| (a.z - rp.z).norm().total_cmp(&(b.z - rp.z).norm()));
            if let Some(rq) = near {
                common.push(Root {
                    z: (rp.z + rq.z) / 2.0,
                    multiplicity: rp.multiplicity.min(rq.multiplicity),
                });
            }
        }
        Ok(Operator {
            p,
            q,
            zeros_p,
            zeros_q,
            common,
        })
    }

    pub fn from_real(p: &[f64], q: &[f64]) -> Result<Self> {
        Self::build(ComplexPoly::from_real(p), ComplexPoly::from_real(q))
    }

    pub fn deg_p(&self) -> Option<usize> {
        self.p.degree()
    }

    pub fn deg_q(&self) -> Option<usize> {
        self.q.degree()
    }

    pub fn p_inf(&self) -> Option<Complex64> {
        self.p.leading()
    }

    pub fn q_inf(&self) -> Option<Complex64> {
        self.q.leading()
    }

    /// `q_inf / p_inf`, defined when neither coefficient vanishes.
    pub fn lambda(&self) -> Option<Complex64> {
        Some(self.q_inf()? / self.p_inf()?)
    }

    pub fn phi_inf(&self) -> Option<f64> {
        self.lambda().map(|l| l.arg())
    }

    /// `deg Q - deg P`.
    pub fn d(&self) -> Option<i64> {
        Some(self.deg_q()? as i64 - self.deg_p()? as i64)
    }

    /// `deg Q - deg P - 1`.
    pub fn l(&self) -> Option<i64> {
        self.d().map(|d| d - 1)
    }

    /// Number of trail branches, `max(deg Q, deg P + 1)`.
    pub fn n(&self) -> usize {
        crate::cpoly::trail_degree(&self.p, &self.q)
    }

    pub fn coprime(&self) -> bool {
        self.common.is_empty()
    }

    /// Distinct finite roots of `P Q`.
    pub fn zeros_pq(&self) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = Vec::new();
        for r in self.zeros_p.iter().chain(&self.zeros_q) {
            if !out
                .iter()
                .any(|z| (z - r.z).norm() <= COMMON_ROOT_TOL * r.z.norm().max(1.0))
            {
                out.push(r.z);
            }
        }
        out
    }

    pub fn r(&self, z: Complex64) -> Complex64 {
        self.q.eval(z) / self.p.eval(z)
    }

    /// `(R, R')`.
    pub fn r_d1(&self, z: Complex64) -> (Complex64, Complex64) {
        let (p, p1) = self.p.eval_d1(z);
        let (q, q1) = self.q.eval_d1(z);
        (q / p, (q1 * p - q * p1) / (p * p))
    }

    /// `(R, R', R'')`.
    pub fn r_d2(&self, z: Complex64) -> (Complex64, Complex64, Complex64) {
        let (p, p1, p2) = self.p.eval_d2(z);
        let (q, q1, q2) = self.q.eval_d2(z);
        let r2 = (q2 * p * p - q * p * p2 - q1 * p * p1 * 2.0 + q * p1 * p1 * 2.0) / (p * p * p);
        (q / p, (q1 * p - q * p1) / (p * p), r2)
    }

    /// The conjugated operator in the coordinate `z = a w + b`, scaled by `s`:
    /// `P^(w) = s P(aw+b)`, `Q^(w) = (s/a) Q(aw+b)`.
    pub fn transform(&self, a: Complex64, b: Complex64, s: Complex64) -> Result<Operator> {
        Operator::build(
            self.p.compose_affine(a, b).scale(s),
            self.q.compose_affine(a, b).scale(s / a),
        )
    }

    pub fn local_data(&self, alpha: Complex64) -> Result<LocalData> {
        if self.p.is_zero() || self.q.is_zero() {
            return Err(Error::InvalidGeometry(
                "R has no Laurent data when P or Q vanishes identically".into(),
            ));
        }
        let tp = self.p.shift(alpha);
        let tq = self.q.shift(alpha);
        let mp = self.p.order_at(alpha, BOUNDARY_TOL).unwrap_or(0);
        let mq = self.q.order_at(alpha, BOUNDARY_TOL).unwrap_or(0);
        if mp > 0 && mq > 0 {
            return Err(Error::ReduceFirst(alpha));
        }
        Ok(LocalData {
            alpha,
            m: mq as i64 - mp as i64,
            r: tq.coeffs()[mq] / tp.coeffs()[mp],
        })
    }

    /// Deflates the common roots out of both coefficients.
    pub fn reduce_common_factor(&self) -> Result<(Operator, Vec<Root>)> {
        if self.common.is_empty() {
            return Ok((self.clone(), Vec::new()));
        }
        let (mut p, mut q) = (self.p.clone(), self.q.clone());
        for c in &self.common {
            for _ in 0..c.multiplicity {
                p = p.deflate(c.z).0;
                q = q.deflate(c.z).0;
            }
        }
        Ok((Operator::build(p, q)?, self.common.clone()))
    }

    pub fn detect_real_form(&self) -> Option<RealForm> {
        best_chart(self).map(|c| c.form)
    }

    pub fn classify(&self) -> Result<ClassificationReport> {
        classify(self)
    }

    pub fn asymptotic_info(&self) -> Result<AsymptoticInfo> {
        Ok(self.classify()?.asymptotic)
    }

    pub fn fully_irregular_family(&self) -> Result<IrregularFamily> {
        let (red, _) = self.reduce_common_factor()?;
        let report = classify_reduced(&red);
        match report.class {
            Some(RegularityClass::Ia) | Some(RegularityClass::Ib) | Some(RegularityClass::Ic) => {}
            _ => return Err(Error::NotClassI),
        }
        report.fully_irregular.ok_or(Error::NotClassI)
    }
}

/// Leading Laurent term `r (z - alpha)^m` of `R` at `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalData {
    pub alpha: Complex64,
    pub m: i64,
    pub r: Complex64,
}

/// An affine chart `z = a w + b` with scalar `s` in which `P` and `Q` are real.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealForm {
    pub a: Complex64,
    pub b: Complex64,
    pub s: Complex64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularityClass {
    Ia,
    Ib,
    Ic,
    II,
    III,
}

impl RegularityClass {
    pub fn name(self) -> &'static str {
        match self {
            RegularityClass::Ia => "Ia",
            RegularityClass::Ib => "Ib",
            RegularityClass::Ic => "Ic",
            RegularityClass::II => "II",
            RegularityClass::III => "III",
        }
    }

    pub fn is_class_one(self) -> bool {
        matches!(self, RegularityClass::Ia | RegularityClass::Ib | RegularityClass::Ic)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpecialCase {
    None,
    /// Both coefficients constant; invariant sets are those closed in direction `xi`.
    ConstantCoefficients { xi: Complex64 },
    PZero,
    QZero,
    /// `Q = alpha (z - z0)`, `P = -delta alpha` with `delta > 0`.
    ScaledTranslationDegenerate,
}

impl SpecialCase {
    pub fn name(&self) -> &'static str {
        match self {
            SpecialCase::None => "none",
            SpecialCase::ConstantCoefficients { .. } => "constant_coefficients",
            SpecialCase::PZero => "P_zero",
            SpecialCase::QZero => "Q_zero",
            SpecialCase::ScaledTranslationDegenerate => "scaled_translation_degenerate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    Interval,
    /// `(-inf, b]` in the real chart.
    HalfLineLeft,
    /// `[a, +inf)` in the real chart.
    HalfLineRight,
    Line,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Interval => "interval",
            FamilyKind::HalfLineLeft => "half_line_left",
            FamilyKind::HalfLineRight => "half_line_right",
            FamilyKind::Line => "line",
        }
    }
}

/// The minimal fully irregular invariant set, mapped back to the `z` plane.
/// `direction` is the image of the positive real direction of the chart; for a
/// half-line it points along the unbounded end.
#[derive(Clone, Debug, PartialEq)]
pub struct IrregularFamily {
    pub kind: FamilyKind,
    pub endpoints: Vec<Complex64>,
    pub direction: Complex64,
    /// A point on the carrying line.
    pub anchor: Complex64,
}

impl IrregularFamily {
    /// Distance from `z` to the minimal set.
    pub fn distance(&self, z: Complex64) -> f64 {
        let dir = self.direction / self.direction.norm();
        let rel = |o: Complex64| (z - o) * dir.conj();
        match self.kind {
            FamilyKind::Line => rel(self.anchor).im.abs(),
            FamilyKind::Interval => {
                let (a, b) = (self.endpoints[0], self.endpoints[1]);
                let w = rel(a);
                let len = ((b - a) * dir.conj()).re;
                let x = w.re.clamp(len.min(0.0), len.max(0.0));
                (w - Complex64::new(x, 0.0)).norm()
            }
            FamilyKind::HalfLineRight | FamilyKind::HalfLineLeft => {
                let w = rel(self.endpoints[0]);
                let x = if self.kind == FamilyKind::HalfLineRight {
                    w.re.max(0.0)
                } else {
                    w.re.min(0.0)
                };
                (w - Complex64::new(x, 0.0)).norm()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticInfo {
    pub components: Option<usize>,
    /// Arcs `[lo, hi]` of escape directions for the complement, in radians.
    pub arcs: Vec<(f64, f64)>,
    pub cone_axis: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ClassificationReport {
    pub deg_p: Option<usize>,
    pub deg_q: Option<usize>,
    pub d: Option<i64>,
    pub lambda: Option<Complex64>,
    pub phi_inf: Option<f64>,
    pub special_case: SpecialCase,
    pub nontrivial_exists: bool,
    pub compact_exists: bool,
    /// `None` when `P` or `Q` vanishes identically.
    pub class: Option<RegularityClass>,
    pub real_form: Option<RealForm>,
    pub fully_irregular: Option<IrregularFamily>,
    pub asymptotic: AsymptoticInfo,
    /// A decision depended on a quantity within `1e-9` of a threshold.
    pub boundary_sensitive: bool,
    pub common_roots: Vec<Root>,
}

fn cjson(z: Complex64) -> Value {
    json!({"re": z.re, "im": z.im})
}

impl ClassificationReport {
    pub fn to_json(&self) -> Value {
        let special = match self.special_case {
            SpecialCase::ConstantCoefficients { xi } => json!({"kind": self.special_case.name(), "xi": cjson(xi)}),
            _ => json!(self.special_case.name()),
        };
        json!({
            "degP": self.deg_p,
            "degQ": self.deg_q,
            "d": self.d,
            "lambda": self.lambda.map(cjson),
            "phi_inf": self.phi_inf,
            "special_case": special,
            "nontrivial_exists": self.nontrivial_exists,
            "compact_exists": self.compact_exists,
            "class": self.class.map(|c| c.name()),
            "real_form": self.real_form.map(|f| json!({"a": cjson(f.a), "b": cjson(f.b), "s": cjson(f.s)})),
            "fully_irregular": self.fully_irregular.as_ref().map(|f| json!({
                "kind": f.kind.name(),
                "endpoints": f.endpoints.iter().map(|z| cjson(*z)).collect::<Vec<_>>(),
                "direction": cjson(f.direction),
                "anchor": cjson(f.anchor),
            })),
            "asymptotic": {
                "components": self.asymptotic.components,
                "arcs": self.asymptotic.arcs.iter().map(|(a, b)| vec![*a, *b]).collect::<Vec<_>>(),
                "cone_axis": self.asymptotic.cone_axis,
            },
            "boundary_sensitive": self.boundary_sensitive,
            "common_roots": self.common_roots.iter().map(|r| json!({"z": cjson(r.z), "multiplicity": r.multiplicity})).collect::<Vec<_>>(),
        })
    }
}

pub fn classify(op: &Operator) -> Result<ClassificationReport> {
    let (red, common) = op.reduce_common_factor()?;
    let mut report = classify_reduced(&red);
    report.deg_p = op.deg_p();
    report.deg_q = op.deg_q();
    report.common_roots = common;
    Ok(report)
}

fn is_negative_real(l: Complex64) -> (bool, bool) {
    let neg = l.im.abs() <= LAMBDA_TOL * l.norm() && l.re < 0.0;
    let near = l.re < 0.0 && l.im.abs() <= BOUNDARY_TOL * l.norm();
    (neg, near != neg)
}

fn classify_reduced(op: &Operator) -> ClassificationReport {
    let mut report = ClassificationReport {
        deg_p: op.deg_p(),
        deg_q: op.deg_q(),
        d: op.d(),
        lambda: op.lambda(),
        phi_inf: op.phi_inf(),
        special_case: SpecialCase::None,
        nontrivial_exists: false,
        compact_exists: false,
        class: None,
        real_form: None,
        fully_irregular: None,
        asymptotic: AsymptoticInfo {
            components: None,
            arcs: Vec::new(),
            cone_axis: None,
        },
        boundary_sensitive: false,
        common_roots: Vec::new(),
    };
    if op.p.is_zero() || op.q.is_zero() {
        // Any closed set containing the roots of the other coefficient is invariant.
        report.special_case = if op.p.is_zero() {
            SpecialCase::PZero
        } else {
            SpecialCase::QZero
        };
        report.nontrivial_exists = true;
        report.compact_exists = true;
        return report;
    }
    let (dp, dq) = (op.deg_p().unwrap_or(0), op.deg_q().unwrap_or(0));
    let d = dq as i64 - dp as i64;
    let lambda = op.lambda().unwrap_or(ONE);
    let phi = lambda.arg();

    let re_ok = lambda.re >= -LAMBDA_TOL * lambda.norm();
    let re_near = lambda.re.abs() <= BOUNDARY_TOL * lambda.norm();
    let (neg_real, neg_near) = is_negative_real(lambda);
    let affine_line = dq == 1 && dp == 0;

    let compact_branch = d == 1 && ((dp >= 1 && re_ok) || (affine_line && !neg_real));
    report.nontrivial_exists = d == -1 || d == 0 || compact_branch;
    report.compact_exists = compact_branch;
    report.boundary_sensitive = (d == 1 && dp >= 1 && re_near) || (affine_line && neg_near);

    if dp == 0 && dq == 0 {
        report.special_case = SpecialCase::ConstantCoefficients { xi: -lambda };
    } else if affine_line && neg_real {
        report.special_case = SpecialCase::ScaledTranslationDegenerate;
    }

    report.asymptotic = if !report.nontrivial_exists {
        AsymptoticInfo {
            components: Some(0),
            arcs: Vec::new(),
            cone_axis: None,
        }
    } else if report.compact_exists {
        AsymptoticInfo {
            components: None,
            arcs: vec![(-PI, PI)],
            cone_axis: None,
        }
    } else if d == -1 {
        AsymptoticInfo {
            components: Some(2),
            arcs: vec![((phi - PI) / 2.0, (phi + PI) / 2.0), ((phi + PI) / 2.0, (phi + 3.0 * PI) / 2.0)],
            cone_axis: None,
        }
    } else {
        AsymptoticInfo {
            components: None,
            arcs: Vec::new(),
            cone_axis: Some(wrap_angle(phi + PI)),
        }
    };

    let chart = best_chart(op);
    report.real_form = chart.as_ref().map(|c| c.form);

    // R constant.
    if dp == 0 && dq == 0 {
        report.class = Some(RegularityClass::Ib);
        let dir = -lambda / lambda.norm();
        report.fully_irregular = Some(IrregularFamily {
            kind: FamilyKind::HalfLineRight,
            endpoints: Vec::new(),
            direction: dir,
            anchor: Complex64::new(0.0, 0.0),
        });
        return report;
    }
    // R = lambda (z - alpha), lambda not negative real.
    if affine_line && !neg_real {
        let alpha = -op.q.coeffs()[0] / op.q.coeffs()[1];
        report.class = Some(RegularityClass::Ic);
        let direction = chart.as_ref().map(|c| c.form.a).unwrap_or(ONE);
        report.fully_irregular = Some(IrregularFamily {
            kind: FamilyKind::Interval,
            endpoints: vec![alpha, alpha],
            direction,
            anchor: alpha,
        });
        return report;
    }
    match chart {
        Some(c) if c.ia => {
            report.class = Some(RegularityClass::Ia);
            report.fully_irregular = Some(c.family());
        }
        Some(c) if c.ii => report.class = Some(RegularityClass::II),
        _ => report.class = Some(RegularityClass::III),
    }
    report
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

struct Chart {
    form: RealForm,
    zp: Vec<f64>,
    zq: Vec<f64>,
    ia: bool,
    ii: bool,
}

impl Chart {
    fn family(&self) -> IrregularFamily {
        let map = |x: f64| self.form.a * x + self.form.b;
        let qmin = self.zq.iter().copied().fold(f64::INFINITY, f64::min);
        let qmax = self.zq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let all = self.zp.iter().chain(&self.zq).copied();
        let lo = all.clone().fold(f64::INFINITY, f64::min);
        let hi = all.fold(f64::NEG_INFINITY, f64::max);
        let lo_is_q = self.zq.contains(&lo);
        let hi_is_q = self.zq.contains(&hi);
        let (kind, endpoints) = match (lo_is_q, hi_is_q) {
            (true, true) => (FamilyKind::Interval, vec![map(qmin), map(qmax)]),
            (false, true) => (FamilyKind::HalfLineLeft, vec![map(qmax)]),
            (true, false) => (FamilyKind::HalfLineRight, vec![map(qmin)]),
            (false, false) => (FamilyKind::Line, Vec::new()),
        };
        IrregularFamily {
            kind,
            endpoints,
            direction: self.form.a,
            anchor: self.form.b,
        }
    }
}

fn max_im_rel(p: &ComplexPoly) -> f64 {
    let m = p.max_abs_coeff();
    if m == 0.0 {
        return 0.0;
    }
    p.coeffs().iter().map(|c| c.im.abs()).fold(0.0, f64::max) / m
}

fn evaluate_chart(op: &Operator, a: Complex64, b: Complex64) -> Option<Chart> {
    let p0 = op.p.compose_affine(a, b);
    let q0 = op.q.compose_affine(a, b).scale(ONE / a);
    let big = p0
        .coeffs()
        .iter()
        .copied()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))?;
    let s = Complex64::new(big.norm(), 0.0) / big;
    let (ph, qh) = (p0.scale(s), q0.scale(s));
    if max_im_rel(&ph) > REAL_TOL || max_im_rel(&qh) > REAL_TOL {
        return None;
    }
    let form = RealForm { a, b, s };
    let real_roots = |f: &ComplexPoly| -> Option<(Vec<f64>, bool)> {
        let roots = match f.degree() {
            None | Some(0) => Vec::new(),
            _ => f.roots().ok()?,
        };
        let simple = roots.iter().all(|r| r.multiplicity == 1);
        let scale = roots.iter().map(|r| r.z.norm()).fold(1.0, f64::max);
        if roots.iter().all(|r| r.z.im.abs() <= REAL_TOL * scale) {
            Some((roots.iter().map(|r| r.z.re).collect(), simple))
        } else {
            None
        }
    };
    let d = op.d().unwrap_or(0);
    let lam = qh.leading().unwrap_or(ONE) / ph.leading().unwrap_or(ONE);
    let ii = d.abs() <= 1 && (d == 0 || lam.re > 0.0);
    let (zp, zq, ia) = match (real_roots(&ph), real_roots(&qh)) {
        (Some((zp, sp)), Some((zq, sq))) => {
            let ia = sp && sq && !zp.is_empty() && interlacing(&zp, &zq) && {
                let chart_op = Operator::build(ph.clone(), qh.clone()).ok();
                chart_op.is_some_and(|o| {
                    zp.iter().all(|&x| {
                        o.local_data(Complex64::new(x, 0.0))
                            .map(|ld| ld.m == -1 && ld.r.re < 0.0 && ld.r.im.abs() <= REAL_TOL * ld.r.norm())
                            .unwrap_or(false)
                    })
                })
            };
            (zp, zq, ia)
        }
        _ => (Vec::new(), Vec::new(), false),
    };
    Some(Chart { form, zp, zq, ia, ii })
}

fn interlacing(zp: &[f64], zq: &[f64]) -> bool {
    let mut all: Vec<(f64, bool)> = zp.iter().map(|&x| (x, true)).chain(zq.iter().map(|&x| (x, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let span = (all.last().map(|x| x.0).unwrap_or(0.0) - all.first().map(|x| x.0).unwrap_or(0.0)).max(1.0);
    all.windows(2)
        .all(|w| w[0].1 != w[1].1 && w[1].0 - w[0].0 > BOUNDARY_TOL * span)
}

fn candidate_charts(op: &Operator) -> Vec<(Complex64, Complex64)> {
    let zs = op.zeros_pq();
    let mut out = vec![(ONE, Complex64::new(0.0, 0.0))];
    let i = Complex64::new(0.0, 1.0);
    let push_dir = |out: &mut Vec<(Complex64, Complex64)>, dir: Complex64, b: Complex64| {
        if dir.norm() == 0.0 || !dir.is_finite() {
            return;
        }
        let mut u = dir / dir.norm();
        for x in [&mut u.re, &mut u.im] {
            if x.abs() < 1e-14 {
                *x = 0.0;
            }
        }
        // Canonical orientation first: angle in (-pi/2, pi/2].
        if u.re < 0.0 || (u.re == 0.0 && u.im < 0.0) {
            u = -u;
        }
        out.push((u, b));
        out.push((-u, b));
    };
    if zs.len() == 1 {
        let z0 = zs[0];
        if let Ok(ld) = op.local_data(z0) {
            // R = c (z - z0)^m exactly when z0 is the only finite root.
            let c = ld.r;
            if ld.m == 1 {
                push_dir(&mut out, ONE, z0);
            } else {
                let k_count = (ld.m - 1).unsigned_abs() as usize;
                for k in 0..k_count {
                    let theta = (-c.arg() + k as f64 * PI) / (ld.m - 1) as f64;
                    push_dir(&mut out, Complex64::from_polar(1.0, theta), z0);
                }
            }
        }
    }
    for (j, &z1) in zs.iter().enumerate() {
        for &z2 in &zs[j + 1..] {
            push_dir(&mut out, z2 - z1, z1);
            push_dir(&mut out, i * (z2 - z1), (z1 + z2) / 2.0);
        }
    }
    out
}

fn best_chart(op: &Operator) -> Option<Chart> {
    if op.p.is_zero() || op.q.is_zero() {
        return None;
    }
    let charts: Vec<Chart> = candidate_charts(op)
        .into_iter()
        .filter_map(|(a, b)| evaluate_chart(op, a, b))
        .collect();
    let pick = charts
        .iter()
        .position(|c| c.ia)
        .or_else(|| charts.iter().position(|c| c.ii))
        .or(if charts.is_empty() { None } else { Some(0) })?;
    charts.into_iter().nth(pick)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn op(p: &[f64], q: &[f64]) -> Operator {
        Operator::from_real(p, q).unwrap()
    }

    #[test]
    fn build_examples() {
        let o = op(&[-1.0, 1.0], &[0.0, 0.0, 1.0]);
        assert_eq!((o.d(), o.n(), o.lambda(), o.phi_inf()), (Some(1), 2, Some(c(1.0, 0.0)), Some(0.0)));

        let fig2 = Operator::build(
            ComplexPoly::new(vec![c(0.0, 1.0), c(2.0, 0.0)]),
            &ComplexPoly::from_real(&[1.0, 1.0]) * &ComplexPoly::new(vec![c(0.0, -1.0), c(1.0, 0.0)]),
        )
        .unwrap();
        assert_eq!(fig2.lambda(), Some(c(0.5, 0.0)));
        assert_eq!(fig2.d(), Some(1));

        let o = op(&[0.0, 1.0], &[1.0]);
        assert_eq!((o.d(), o.l(), o.n()), (Some(-1), Some(-2), 2));

        assert!(matches!(
            Operator::build(ComplexPoly::zero(), ComplexPoly::zero()),
            Err(Error::ZeroOperator)
        ));
    }

    #[test]
    fn local_data_examples() {
        let o = op(&[-1.0, 1.0], &[0.0, 0.0, 1.0]);
        let ld = o.local_data(c(0.0, 0.0)).unwrap();
        assert_eq!(ld.m, 2);
        assert!((ld.r - c(-1.0, 0.0)).norm() < 1e-14);
        let ld = o.local_data(c(1.0, 0.0)).unwrap();
        assert_eq!(ld.m, -1);
        assert!((ld.r - c(1.0, 0.0)).norm() < 1e-14);
        let ld = op(&[0.0, 1.0], &[-1.0, 0.0, 1.0]).local_data(c(0.0, 0.0)).unwrap();
        assert_eq!((ld.m, ld.r), (-1, c(-1.0, 0.0)));
        assert!(matches!(
            op(&[0.0, 1.0], &[0.0, -1.0, 1.0]).local_data(c(0.0, 0.0)),
            Err(Error::ReduceFirst(_))
        ));
    }

    #[test]
    fn local_data_leading_term_on_shrinking_circles() {
        let o = op(&[-1.0, 1.0], &[0.0, 0.0, 1.0]);
        let ld = o.local_data(c(0.0, 0.0)).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..6 {
            let rho = 10f64.powi(-k);
            let z = Complex64::from_polar(rho, 0.7);
            let err = (o.r(z) - ld.r * z.powi(ld.m as i32)).norm() / rho.powi(ld.m as i32);
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn classify_examples() {
        let r = op(&[-1.0, 1.0], &[0.0, 0.0, 1.0]).classify().unwrap();
        assert!(r.nontrivial_exists && r.compact_exists);
        assert_eq!(r.class, Some(RegularityClass::II));

        let r = op(&[0.0, 1.0], &[-1.0, 0.0, 1.0]).classify().unwrap();
        assert!(r.nontrivial_exists && r.compact_exists);
        assert_eq!(r.class, Some(RegularityClass::Ia));

        let r = op(&[1.0], &[0.0, 0.0, 0.0, 1.0]).classify().unwrap();
        assert!(!r.nontrivial_exists && !r.compact_exists);
        assert_eq!(r.asymptotic.components, Some(0));
    }

    #[test]
    fn special_cases() {
        let r = op(&[2.0], &[1.0]).classify().unwrap();
        assert_eq!(r.special_case, SpecialCase::ConstantCoefficients { xi: c(-0.5, 0.0) });
        assert_eq!(r.class, Some(RegularityClass::Ib));
        let r = op(&[-2.0], &[-1.0, 1.0]).classify().unwrap();
        assert_eq!(r.special_case, SpecialCase::ScaledTranslationDegenerate);
        assert!(!r.nontrivial_exists);
        assert_eq!(r.class, Some(RegularityClass::III));
        let r = Operator::build(ComplexPoly::zero(), ComplexPoly::from_real(&[0.0, 1.0]))
            .unwrap()
            .classify()
            .unwrap();
        assert_eq!(r.special_case, SpecialCase::PZero);
        assert_eq!(r.class, None);
    }

    #[test]
    fn real_form_examples() {
        let f = op(&[0.0, 1.0], &[1.0]).detect_real_form().unwrap();
        assert!((f.a - c(0.0, 1.0)).norm() < 1e-12);
        let t = op(&[0.0, 1.0], &[1.0]).transform(f.a, f.b, f.s).unwrap();
        let ld = t.local_data(c(0.0, 0.0)).unwrap();
        assert!((ld.r - c(-1.0, 0.0)).norm() < 1e-12);

        let f = op(&[0.0, 1.0], &[-1.0, 0.0, 1.0]).detect_real_form().unwrap();
        assert_eq!((f.a, f.b), (c(1.0, 0.0), c(0.0, 0.0)));

        let o = Operator::build(ComplexPoly::from_real(&[1.0]), ComplexPoly::new(vec![c(0.0, -1.0), c(1.0, 0.0)])).unwrap();
        let f = o.detect_real_form().unwrap();
        assert!((f.b - c(0.0, 1.0)).norm() < 1e-12);
        let t = o.transform(f.a, f.b, f.s).unwrap();
        assert!((t.r(c(0.3, 0.0)) - c(0.3, 0.0)).norm() < 1e-12);
        assert_eq!(o.classify().unwrap().class, Some(RegularityClass::Ic));
    }

    #[test]
    fn no_real_form_for_generic_operator() {
        let o = Operator::build(
            ComplexPoly::new(vec![c(0.3, 0.1), c(1.0, 0.0)]),
            ComplexPoly::new(vec![c(1.0, 2.0), c(0.0, 0.0), c(1.0, 0.5)]),
        )
        .unwrap();
        assert!(o.detect_real_form().is_none());
        assert_eq!(o.classify().unwrap().class, Some(RegularityClass::III));
    }

    #[test]
    fn reduce_examples() {
        let (r, common) = op(&[0.0, 1.0], &[0.0, -1.0, 1.0]).reduce_common_factor().unwrap();
        assert_eq!(r.p, ComplexPoly::from_real(&[1.0]));
        assert!((r.q.coeffs()[0] - c(-1.0, 0.0)).norm() < 1e-12 && r.q.degree() == Some(1));
        assert_eq!(common.len(), 1);
        assert!(common[0].z.norm() < 1e-12);

        let (r, common) = op(&[1.0, -2.0, 1.0], &[0.0, -1.0, 1.0]).reduce_common_factor().unwrap();
        assert!((r.p.coeffs()[0] - c(-1.0, 0.0)).norm() < 1e-9 && r.p.degree() == Some(1));
        assert!(r.q.coeffs()[0].norm() < 1e-9 && r.q.degree() == Some(1));
        assert!((common[0].z - c(1.0, 0.0)).norm() < 1e-9);
        assert!(r.coprime());

        let o = op(&[0.0, 1.0], &[-1.0, 0.0, 1.0]);
        let (r, common) = o.reduce_common_factor().unwrap();
        assert!(common.is_empty());
        assert_eq!(r.p, o.p);
    }

    #[test]
    fn reduction_changes_compactness_on_the_affine_line() {
        // Q/P = (-1+i)(z-2)(z-1)/(z-1): reduced, deg P = 0 and lambda off the negative axis.
        let p = ComplexPoly::from_real(&[-1.0, 1.0]);
        let q = ComplexPoly::from_real(&[2.0, -3.0, 1.0]).scale(c(-1.0, 1.0));
        let r = Operator::build(p, q).unwrap().classify().unwrap();
        assert!(r.compact_exists);
        assert_eq!(r.common_roots.len(), 1);
        assert_eq!(r.deg_p, Some(1));
    }

    #[test]
    fn irregular_families() {
        let f = op(&[0.0, 1.0], &[-1.0, 0.0, 1.0]).fully_irregular_family().unwrap();
        assert_eq!(f.kind, FamilyKind::Interval);
        let mut e: Vec<f64> = f.endpoints.iter().map(|z| z.re).collect();
        e.sort_by(f64::total_cmp);
        assert!((e[0] + 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);

        let f = op(&[0.0, 1.0], &[1.0]).fully_irregular_family().unwrap();
        assert_eq!(f.kind, FamilyKind::Line);
        assert!(f.distance(c(0.0, 7.0)) < 1e-12);
        assert!((f.distance(c(0.5, 3.0)) - 0.5).abs() < 1e-12);

        let f = op(&[1.0], &[-1.0, 1.0]).fully_irregular_family().unwrap();
        assert_eq!(f.endpoints, vec![c(1.0, 0.0), c(1.0, 0.0)]);

        // P = z(z-2), Q = 1-z: extreme roots both belong to P.
        let f = op(&[0.0, -2.0, 1.0], &[1.0, -1.0]).fully_irregular_family().unwrap();
        assert_eq!(f.kind, FamilyKind::Line);

        assert!(matches!(
            op(&[-1.0, 1.0], &[0.0, 0.0, 1.0]).fully_irregular_family(),
            Err(Error::NotClassI)
        ));
    }

    #[test]
    fn half_line_family() {
        // Roots in order: P at -1, Q at 0, P at 1, Q at 2; r_alpha < 0 at both P-roots.
        let p = ComplexPoly::from_roots(&[c(-1.0, 0.0), c(1.0, 0.0)]);
        let q = ComplexPoly::from_roots(&[c(0.0, 0.0), c(2.0, 0.0)]);
        let r = Operator::build(p, q).unwrap().classify().unwrap();
        assert_eq!(r.class, Some(RegularityClass::Ia));
        let f = r.fully_irregular.unwrap();
        assert_eq!(f.kind, FamilyKind::HalfLineLeft);
        assert!((f.endpoints[0] - c(2.0, 0.0)).norm() < 1e-12);
        assert!(f.distance(c(-50.0, 0.0)) < 1e-12);
        assert!((f.distance(c(3.0, 0.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_keys_are_stable() {
        let v = op(&[-1.0, 1.0], &[0.0, 0.0, 1.0]).classify().unwrap().to_json();
        for k in [
            "degP", "degQ", "d", "lambda", "phi_inf", "special_case", "nontrivial_exists",
            "compact_exists", "class", "real_form", "fully_irregular", "asymptotic",
        ] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["class"], "II");
        assert_eq!(v["d"], 1);
    }

    #[test]
    fn asymptotic_arcs_for_d_minus_one() {
        let a = op(&[0.0, 1.0], &[1.0]).asymptotic_info().unwrap();
        assert_eq!(a.components, Some(2));
        assert!((a.arcs[0].0 + PI / 2.0).abs() < 1e-15 && (a.arcs[0].1 - PI / 2.0).abs() < 1e-15);
        let a = op(&[0.0, 1.0], &[2.0, 1.0]).asymptotic_info().unwrap();
        assert!((a.cone_axis.unwrap() - PI).abs() < 1e-15);
    }
}
