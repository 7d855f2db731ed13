//! Julia sets of `f_t(z) = z + t R(z)` by random backward iteration, and the
//! chaos game over `t >= t_min`.
//!
//! The preimages of `u` under `f_t` are the solutions of the trail equation
//! at `(u, t)`, so both samplers only need `solve_trail_poly`.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cpoly::{solve_trail_poly, TrailSolution};
use crate::error::{Error, Result};
use crate::grid::{write_pgm_bytes, GridMask, Window};
use crate::operator::Operator;
use crate::par::Exec;

pub const DEFAULT_BURN_IN: usize = 100;

/// Runs longer than this at one point count as stagnation.
const STAGNATION_RUN: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TParameter {
    Fixed { t: f64 },
    /// `max` may be infinite (serialized as null).
    Range { min: f64, max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointCloud {
    pub t_parameter: TParameter,
    #[serde(skip)]
    pub points: Vec<Complex64>,
    pub seed: u64,
    pub burn_in: usize,
    /// Steps (after burn-in) whose drawn preimage was the current point.
    pub repeated_steps: usize,
    /// Longest run of repeated steps; a chain started at a fixed point whose
    /// only preimage is itself never leaves it.
    pub longest_repeat: usize,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn stagnated(&self) -> bool {
        self.longest_repeat >= STAGNATION_RUN
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(24 * self.points.len() + 8);
        s.push_str("re,im\n");
        for z in &self.points {
            let _ = writeln!(s, "{},{}", z.re, z.im);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Hit counts per cell, log-scaled so the densest cell is 255 and empty cells are 0.
    pub fn density(&self, window: Window, nx: usize, ny: usize) -> Result<Vec<u8>> {
        let grid = GridMask::new(window, nx, ny)?;
        let mut counts = vec![0u64; nx * ny];
        for &z in &self.points {
            if let Some((i, j)) = grid.cell_of(z) {
                counts[grid.idx(i, j)] += 1;
            }
        }
        let top = counts.iter().copied().max().unwrap_or(0);
        if top == 0 {
            return Ok(vec![0; nx * ny]);
        }
        let norm = (1.0 + top as f64).ln();
        Ok(counts
            .iter()
            .map(|&c| (255.0 * (1.0 + c as f64).ln() / norm).round() as u8)
            .collect())
    }

    pub fn write_density_pgm(&self, path: impl AsRef<Path>, window: Window, nx: usize, ny: usize) -> Result<()> {
        write_pgm_bytes(path, window, nx, ny, &self.density(window, nx, ny)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TSampler {
    /// `t = t_min + s v / (1 - v)` with `v` uniform in `[0, 1)` and
    /// `s = t_min` (or 1 when `t_min = 0`). For `t_min > 0` this is `t_min / (1 - v)`.
    Harmonic,
    /// Uniform on `[t_min, t_max]`.
    Uniform { t_max: f64 },
}

impl TSampler {
    fn draw(self, t_min: f64, rng: &mut ChaCha8Rng) -> f64 {
        let v: f64 = rng.random();
        match self {
            TSampler::Harmonic => {
                let s = if t_min > 0.0 { t_min } else { 1.0 };
                t_min + s * v / (1.0 - v)
            }
            TSampler::Uniform { t_max } => t_min + (t_max - t_min) * v,
        }
    }

    fn upper(self) -> f64 {
        match self {
            TSampler::Harmonic => f64::INFINITY,
            TSampler::Uniform { t_max } => t_max,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SampleOptions {
    pub burn_in: usize,
    /// Independent chains, each with its own RNG stream and burn-in.
    pub chains: usize,
    pub exec: Exec,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            burn_in: DEFAULT_BURN_IN,
            chains: 1,
            exec: Exec::Parallel,
        }
    }
}

/// Finite preimages of `u` under `f_t`, with multiplicity.
pub fn preimages(op: &Operator, u: Complex64, t: f64) -> Result<Vec<Complex64>> {
    match solve_trail_poly(&op.p, &op.q, u, t)? {
        TrailSolution::Divisor(d) => Ok(d.flatten()),
        TrailSolution::WholePlane => Err(Error::WholePlane),
    }
}

fn check_degree(op: &Operator) -> Result<Operator> {
    let (red, _) = op.reduce_common_factor()?;
    let d = red.p.degree().unwrap_or(0).max(red.q.degree().unwrap_or(0));
    if d < 2 {
        return Err(Error::DegenerateJulia);
    }
    Ok(red)
}

struct Chain {
    points: Vec<Complex64>,
    repeated: usize,
    longest: usize,
}

fn run_chain(
    op: &Operator,
    start: Complex64,
    n: usize,
    burn_in: usize,
    mut rng: ChaCha8Rng,
    mut draw_t: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Result<Chain> {
    let mut chain = Chain {
        points: Vec::with_capacity(n),
        repeated: 0,
        longest: 0,
    };
    if n == 0 {
        return Ok(chain);
    }
    let mut u = start;
    let mut run = 0;
    for k in 0..burn_in + n {
        let t = draw_t(&mut rng);
        let pre = preimages(op, u, t)?;
        let next = if pre.is_empty() {
            // Every preimage is at infinity: start over.
            start
        } else {
            pre[rng.random_range(0..pre.len())]
        };
        if next == u || (next - u).norm() <= 1e-14 * (1.0 + u.norm()) {
            run += 1;
            if k >= burn_in {
                chain.repeated += 1;
            }
        } else {
            run = 0;
        }
        chain.longest = chain.longest.max(run);
        u = next;
        if k >= burn_in {
            chain.points.push(u);
        }
    }
    Ok(chain)
}

fn run_chains(
    op: &Operator,
    start: Complex64,
    n: usize,
    seed: u64,
    opts: &SampleOptions,
    draw_t: impl Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
) -> Result<(Vec<Complex64>, usize, usize)> {
    let chains = opts.chains.max(1);
    let ids: Vec<usize> = (0..chains).collect();
    let parts = opts.exec.map(&ids, |&c| {
        let len = n / chains + usize::from(c < n % chains);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        run_chain(op, start, len, opts.burn_in, rng, &draw_t)
    });
    let mut points = Vec::with_capacity(n);
    let (mut repeated, mut longest) = (0, 0);
    for p in parts {
        let p = p?;
        points.extend(p.points);
        repeated += p.repeated;
        longest = longest.max(p.longest);
    }
    Ok((points, repeated, longest))
}

/// Random backward orbit of `u0` under `f_t`: each step draws one of the
/// preimages uniformly. The first `burn_in` points of every chain are dropped.
pub fn inverse_orbit(op: &Operator, t: f64, u0: Complex64, n: usize, seed: u64, opts: &SampleOptions) -> Result<PointCloud> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidGeometry(format!("t must be positive, got {t}")));
    }
    let red = check_degree(op)?;
    let (points, repeated_steps, longest_repeat) = run_chains(&red, u0, n, seed, opts, |_| t)?;
    Ok(PointCloud {
        t_parameter: TParameter::Fixed { t },
        points,
        seed,
        burn_in: opts.burn_in,
        repeated_steps,
        longest_repeat,
    })
}

/// Chaos game for the union of the maps `f_t`, `t` drawn afresh every step.
/// Chains start at a root of `Q` (a point of the minimal set).
pub fn chaos_game(op: &Operator, t_min: f64, n: usize, sampler: TSampler, seed: u64, opts: &SampleOptions) -> Result<PointCloud> {
    if !(t_min >= 0.0 && t_min.is_finite()) {
        return Err(Error::InvalidGeometry(format!("t_min must be nonnegative, got {t_min}")));
    }
    if let TSampler::Uniform { t_max } = sampler {
        if !(t_max >= t_min && t_max.is_finite()) {
            return Err(Error::InvalidGeometry(format!("t_max = {t_max} below t_min = {t_min}")));
        }
    }
    let red = check_degree(op)?;
    let start = red.zeros_q.first().map(|r| r.z).unwrap_or_default();
    let (points, repeated_steps, longest_repeat) = run_chains(&red, start, n, seed, opts, |rng| sampler.draw(t_min, rng))?;
    Ok(PointCloud {
        t_parameter: TParameter::Range {
            min: t_min,
            max: sampler.upper(),
        },
        points,
        seed,
        burn_in: opts.burn_in,
        repeated_steps,
        longest_repeat,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Containment {
    /// `inside / in_window`, or 1 when no point falls in the window.
    pub fraction: f64,
    pub inside: usize,
    pub in_window: usize,
    pub out_of_window: usize,
}

pub fn containment(cloud: &PointCloud, mask: &GridMask, dilation_cells: usize) -> Containment {
    let m = mask.dilate(dilation_cells);
    let (mut inside, mut in_window) = (0, 0);
    for &z in &cloud.points {
        if let Some((i, j)) = m.cell_of(z) {
            in_window += 1;
            if m.get(i, j) {
                inside += 1;
            }
        }
    }
    Containment {
        fraction: if in_window == 0 { 1.0 } else { inside as f64 / in_window as f64 },
        inside,
        in_window,
        out_of_window: cloud.points.len() - in_window,
    }
}

pub fn containment_fraction(cloud: &PointCloud, mask: &GridMask, dilation_cells: usize) -> f64 {
    containment(cloud, mask, dilation_cells).fraction
}
