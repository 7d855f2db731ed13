mod args;

use anyhow::{anyhow, Context};
use args::{Cli, Command, Common, GridArgs, OpArgs, Order, OracleName, SampleArgs};
use chinv::contour::CurveSet;
use chinv::cpoly::format_complex;
use chinv::field::{inflection_curve, separatrices_from_pole, FlowOptions};
use chinv::invariant::{auto_window, certify_invariant, minimal_set_grid, oracle_set, MinimalSetOptions, Oracle, SweepOrder};
use chinv::julia::{chaos_game, containment, inverse_orbit, PointCloud, SampleOptions, TSampler};
use chinv::trails::{track_trail, traces_to_csv, Origin, Terminus, TrackOptions};
use chinv::{grid::mask_distance, Complex64, ComplexPoly, Error, Exec, GridMask, Operator, Window};
use clap::Parser;
use serde_json::{json, Value};
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

/// A failure with its exit code: 1 for bad input, 2 when the computation fails.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_) | Error::InvalidGeometry(_) | Error::GeometryMismatch(_) | Error::OracleMismatch { .. } | Error::Format(_) | Error::Io(_) => 1,
            _ => 2,
        };
        Failure { code, err: e.into() }
    }
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        err: anyhow!("{msg}"),
    }
}

type Res<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("reports are valid JSON");
            // A closed pipe (e.g. `| head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Res<Value> {
    let common = match &cmd {
        Command::Classify(a) => &a.common,
        Command::Trail(a) => &a.common,
        Command::MinimalSet(a) => &a.common,
        Command::Certify(a) => &a.common,
        Command::Separatrix(a) => &a.common,
        Command::Inflection(a) => &a.common,
        Command::Julia(a) => &a.common,
        Command::Chaos(a) => &a.common,
        Command::OracleCompare(a) => &a.common,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: 2, err: e.into() })?;
    }
    match cmd {
        Command::Classify(a) => {
            let op = operator(&a.op)?;
            let report = op.classify()?;
            Ok(json!({"config": config("classify", &a.common, Some(&a.op), json!({})), "report": report.to_json()}))
        }
        Command::Trail(a) => trail(a),
        Command::MinimalSet(a) => minimal_set(a),
        Command::Certify(a) => {
            let op = operator(&a.op)?;
            let mask = GridMask::read_pgm(&a.mask)?.dilate(a.dilate);
            let r = certify_invariant(&op, &mask, Exec::Parallel)?;
            Ok(json!({
                "config": config("certify", &a.common, Some(&a.op), json!({"mask": a.mask, "dilate": a.dilate})),
                "passed": r.passed,
                "method": r.method.name(),
                "zeros_inside": r.zeros_inside,
                "cells_checked": r.boundary_cells_checked,
                "violations": r.violations.len(),
                "first_violations": r.violations.iter().take(10).map(|(z, s)| json!({"z": cjson(*z), "s": s})).collect::<Vec<_>>(),
            }))
        }
        Command::Separatrix(a) => {
            let op = operator(&a.op)?;
            let w = match a.window {
                Some(w) => w,
                None => auto_window(&op)?,
            };
            let cap = a.cap.unwrap_or(20.0 * w.diagonal());
            let opts = FlowOptions::new(w);
            let poles: Vec<Complex64> = match a.pole {
                Some(z) => vec![z],
                None => op.zeros_p.iter().map(|r| r.z).collect(),
            };
            let mut curves = CurveSet::new(w);
            for z in &poles {
                curves.extend(separatrices_from_pole(&op, *z, cap, &opts)?);
            }
            write_curves(&curves, a.out.as_deref())?;
            Ok(json!({
                "config": config("separatrix", &a.common, Some(&a.op), json!({"window": w.to_vec(), "poles": poles.iter().map(|z| format_complex(*z)).collect::<Vec<_>>(), "cap": cap, "out": a.out})),
                "curves": curves.polylines.len(),
                "vertices": curves.vertex_count(),
            }))
        }
        Command::Inflection(a) => {
            let op = operator(&a.op)?;
            let (w, (nx, ny)) = grid(&op, &a.grid)?;
            let curves = inflection_curve(&op, &w, nx, ny)?;
            write_curves(&curves, a.out.as_deref())?;
            Ok(json!({
                "config": config("inflection", &a.common, Some(&a.op), json!({"window": w.to_vec(), "res": [nx, ny], "out": a.out})),
                "curves": curves.polylines.len(),
                "vertices": curves.vertex_count(),
            }))
        }
        Command::Julia(a) => {
            let op = operator(&a.op)?;
            let u0 = a.u0.or_else(|| op.zeros_q.first().map(|r| r.z)).unwrap_or_default();
            let opts = sample_options(&a.sample);
            let cloud = inverse_orbit(&op, a.t, u0, a.sample.n, a.common.seed, &opts)?;
            let extra = json!({"t": a.t, "u0": format_complex(u0)});
            finish_cloud("julia", &op, &a.op, &a.common, &a.sample, cloud, extra)
        }
        Command::Chaos(a) => {
            let op = operator(&a.op)?;
            let sampler = match a.t_max {
                Some(t_max) if t_max >= a.t_min => TSampler::Uniform { t_max },
                Some(t_max) => return Err(usage(format!("--t-max {t_max} is below --t-min {}", a.t_min))),
                None => TSampler::Harmonic,
            };
            let opts = sample_options(&a.sample);
            let cloud = chaos_game(&op, a.t_min, a.sample.n, sampler, a.common.seed, &opts)?;
            let extra = json!({"t_min": a.t_min, "t_max": a.t_max, "sampler": if a.t_max.is_some() { "uniform" } else { "harmonic" }});
            finish_cloud("chaos", &op, &a.op, &a.common, &a.sample, cloud, extra)
        }
        Command::OracleCompare(a) => oracle_compare(a),
    }
}

fn operator(a: &OpArgs) -> Res<Operator> {
    Ok(Operator::build(a.p.clone(), a.q.clone())?)
}

fn coeffs(p: &ComplexPoly) -> String {
    p.coeffs().iter().map(|c| format_complex(*c)).collect::<Vec<_>>().join(",")
}

fn cjson(z: Complex64) -> Value {
    json!({"re": z.re, "im": z.im})
}

/// The resolved configuration, echoed into every report.
fn config(command: &str, common: &Common, op: Option<&OpArgs>, extra: Value) -> Value {
    let mut c = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": common.seed,
        "threads": common.threads,
    });
    if let Some(op) = op {
        c["p"] = json!(coeffs(&op.p));
        c["q"] = json!(coeffs(&op.q));
    }
    if let (Value::Object(c), Value::Object(extra)) = (&mut c, extra) {
        c.extend(extra);
    }
    c
}

fn grid(op: &Operator, g: &GridArgs) -> Res<(Window, (usize, usize))> {
    let w = match g.window {
        Some(w) => w,
        None => auto_window(op)?,
    };
    Ok((w, g.res))
}

fn write_curves(curves: &CurveSet, out: Option<&Path>) -> Res<()> {
    let Some(path) = out else { return Ok(()) };
    let text = match path.extension().and_then(|e| e.to_str()) {
        Some("svg") => curves.to_svg(800.0),
        Some("csv") => curves.to_csv(),
        _ => return Err(usage(format!("{}: output must end in .svg or .csv", path.display()))),
    };
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|err| Failure { code: 1, err })
}

fn trail(a: args::TrailArgs) -> Res<Value> {
    let op = operator(&a.op)?;
    if a.t_max.is_nan() || a.t_max < 0.0 {
        return Err(usage(format!("--t-max {} must be non-negative", a.t_max)));
    }
    let opts = TrackOptions {
        base_samples: a.samples.max(1),
        ..Default::default()
    };
    let mut all = Vec::new();
    let mut summary = Vec::new();
    for &u in &a.u {
        let traces = track_trail(&op, u, a.t_max, &opts)?;
        for tr in &traces {
            let (t_end, z_end) = tr.last();
            let origin = match tr.origin {
                Origin::StartAtU => json!({"kind": "start_at_u"}),
                Origin::StartAtPRoot(z) => json!({"kind": "p_root", "z": cjson(z)}),
                Origin::BornAtInfinity(arg) => json!({"kind": "infinity", "arg": arg}),
            };
            let terminus = match tr.terminus {
                Terminus::QRoot(z) => json!({"kind": "q_root", "z": cjson(z)}),
                Terminus::Escaped(arg) => json!({"kind": "escaped", "arg": arg}),
                Terminus::Merged(t) => json!({"kind": "merged", "t": t}),
                Terminus::Truncated(t) => json!({"kind": "truncated", "t": t}),
            };
            summary.push(json!({
                "u": format_complex(u),
                "origin": origin,
                "terminus": terminus,
                "samples": tr.samples.len(),
                "end": {"t": t_end, "z": cjson(z_end)},
                "merged_at": tr.merged_at,
                "diagnostic": tr.diagnostic,
            }));
        }
        all.extend(traces);
    }
    if let Some(path) = &a.out {
        std::fs::write(path, traces_to_csv(&all)).map_err(|e| Failure::from(Error::Io(e)))?;
    }
    let t_max = if a.t_max.is_finite() { json!(a.t_max) } else { json!("inf") };
    Ok(json!({
        "config": config("trail", &a.common, Some(&a.op), json!({"u": a.u.iter().map(|z| format_complex(*z)).collect::<Vec<_>>(), "t_max": t_max, "samples": a.samples, "out": a.out})),
        "traces": summary,
    }))
}

fn minimal_set(a: args::MinimalSetArgs) -> Res<Value> {
    let op = operator(&a.op)?;
    let (w, (nx, ny)) = grid(&op, &a.grid)?;
    let opts = MinimalSetOptions {
        seed_curves: !a.no_seed_curves,
        order: match a.order {
            Order::Jacobi => SweepOrder::Jacobi,
            Order::GaussSeidel => SweepOrder::ShuffledGaussSeidel(a.common.seed),
        },
        max_sweeps: a.max_sweeps.unwrap_or(usize::MAX),
        exec: if a.order == Order::GaussSeidel { Exec::Sequential } else { Exec::Parallel },
        ..Default::default()
    };
    let m = minimal_set_grid(&op, w, nx, ny, &opts)?;
    if let Some(path) = &a.out {
        m.mask.write_pgm(path)?;
    }
    let order = match a.order {
        Order::Jacobi => "jacobi",
        Order::GaussSeidel => "gauss-seidel",
    };
    Ok(json!({
        "config": config("minimal-set", &a.common, Some(&a.op), json!({
            "window": w.to_vec(),
            "res": [nx, ny],
            "order": order,
            "seed_curves": opts.seed_curves,
            "max_sweeps": a.max_sweeps,
            "out": a.out,
        })),
        "marked_cells": m.mask.count(),
        "sweeps": m.sweeps,
        "converged": m.converged,
    }))
}

fn sample_options(s: &SampleArgs) -> SampleOptions {
    SampleOptions {
        burn_in: s.burn_in,
        chains: s.chains.max(1),
        exec: Exec::Parallel,
    }
}

fn finish_cloud(command: &str, op: &Operator, op_args: &OpArgs, common: &Common, s: &SampleArgs, cloud: PointCloud, extra: Value) -> Res<Value> {
    if let Some(path) = &s.out {
        cloud.write_csv(path)?;
    }
    let mut grid_cfg = json!(null);
    if let Some(path) = &s.density {
        let (w, (nx, ny)) = grid(op, &s.grid)?;
        cloud.write_density_pgm(path, w, nx, ny)?;
        grid_cfg = json!({"window": w.to_vec(), "res": [nx, ny]});
    }
    let contained = match &s.mask {
        Some(path) => Some(containment(&cloud, &GridMask::read_pgm(path)?, s.dilation)),
        None => None,
    };
    let mut cfg = config(command, common, Some(op_args), extra);
    cfg["n"] = json!(s.n);
    cfg["burn_in"] = json!(s.burn_in);
    cfg["chains"] = json!(s.chains.max(1));
    cfg["out"] = json!(s.out);
    cfg["density"] = json!(s.density);
    cfg["density_grid"] = grid_cfg;
    cfg["mask"] = json!(s.mask);
    cfg["dilation"] = json!(s.dilation);
    Ok(json!({
        "config": cfg,
        "cloud": cloud,
        "points": cloud.len(),
        "stagnated": cloud.stagnated(),
        "containment": contained,
    }))
}

fn oracle_compare(a: args::OracleArgs) -> Res<Value> {
    let mask = GridMask::read_pgm(&a.mask)?;
    let op = match (&a.p, &a.q, a.name) {
        (Some(p), Some(q), _) => Operator::build(p.clone(), q.clone())?,
        (None, None, OracleName::Cochleoid) => Operator::from_real(&[-1.0, 1.0], &[0.0, 0.0, 1.0])?,
        (None, None, OracleName::Disk | OracleName::Halfplane | OracleName::Cone) => Operator::from_real(&[1.0], &[1.0])?,
        _ => return Err(usage("give both --p and --q")),
    };
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| usage(format!("oracle needs --{flag}")));
    let oracle = match a.name {
        OracleName::Cochleoid => Oracle::Cochleoid,
        OracleName::Interval => Oracle::Interval,
        OracleName::Disk => Oracle::Disk {
            center: a.center.unwrap_or_default(),
            radius: need(a.radius, "radius")?,
        },
        OracleName::Halfplane => Oracle::HalfPlane {
            ell: need(a.ell, "ell")?,
            theta: need(a.angle, "angle")?,
        },
        OracleName::Cone => Oracle::ConeComplement {
            apex: a.center.unwrap_or_default(),
            axis: need(a.angle, "angle")?,
            half_angle: need(a.half_angle, "half-angle")?,
        },
    };
    let reference = oracle_set(&op, &oracle, mask.window, mask.nx, mask.ny)?;
    let d = mask_distance(&mask, &reference)?;
    let mut cfg = json!({
        "command": "oracle-compare",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": a.common.seed,
        "threads": a.common.threads,
        "name": oracle.name(),
        "mask": a.mask,
        "p": coeffs(&op.p),
        "q": coeffs(&op.q),
        "window": mask.window.to_vec(),
        "res": [mask.nx, mask.ny],
    });
    for (k, v) in [("center", a.center.map(format_complex).map(Value::from)), ("radius", a.radius.map(Value::from)), ("ell", a.ell.map(Value::from)), ("angle", a.angle.map(Value::from)), ("half_angle", a.half_angle.map(Value::from))] {
        if let Some(v) = v {
            cfg[k] = v;
        }
    }
    Ok(json!({
        "config": cfg,
        "hausdorff_cells": d.hausdorff_cells,
        "mask_minus_oracle_cells": d.a_minus_b_cells,
        "oracle_minus_mask_cells": d.b_minus_a_cells,
        "mask_cells": mask.count(),
        "oracle_cells": reference.count(),
    }))
}
