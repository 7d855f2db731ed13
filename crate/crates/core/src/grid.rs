//! Rectangular windows, boolean cell rasters, supercover ray traversal,
//! morphology and PGM artifacts.

use std::fs;
use std::io::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub re0: f64,
    pub re1: f64,
    pub im0: f64,
    pub im1: f64,
}

impl Window {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Result<Self> {
        let ok = [re0, re1, im0, im1].iter().all(|x| x.is_finite()) && re1 > re0 && im1 > im0;
        if !ok {
            return Err(Error::InvalidGeometry(format!(
                "empty or non-finite window [{re0},{re1}]x[{im0},{im1}]"
            )));
        }
        Ok(Window { re0, re1, im0, im1 })
    }

    /// Square window of half-width `r` about `c`.
    pub fn centered(c: Complex64, r: f64) -> Result<Self> {
        Self::new(c.re - r, c.re + r, c.im - r, c.im + r)
    }

    /// `"re0,re1,im0,im1"`.
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("window `{s}`: {e}")))?;
        if v.len() != 4 {
            return Err(Error::Parse(format!("window `{s}` needs four numbers")));
        }
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn width(&self) -> f64 {
        self.re1 - self.re0
    }

    pub fn height(&self) -> f64 {
        self.im1 - self.im0
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new((self.re0 + self.re1) / 2.0, (self.im0 + self.im1) / 2.0)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re0 && z.re <= self.re1 && z.im >= self.im0 && z.im <= self.im1
    }

    pub fn scaled(&self, k: f64) -> Self {
        let c = self.center();
        let (hw, hh) = (self.width() * k / 2.0, self.height() * k / 2.0);
        Window {
            re0: c.re - hw,
            re1: c.re + hw,
            im0: c.im - hh,
            im1: c.im + hh,
        }
    }

    pub fn to_vec(&self) -> [f64; 4] {
        [self.re0, self.re1, self.im0, self.im1]
    }
}

/// Boolean raster over a window. Cell `(i, j)` spans column `i` from the left and
/// row `j` from the bottom; storage is row-major with `j = 0` first.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMask {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<bool>,
}

impl GridMask {
    pub fn new(window: Window, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGeometry(format!("resolution {nx}x{ny}")));
        }
        Ok(GridMask {
            window,
            nx,
            ny,
            cells: vec![false; nx * ny],
        })
    }

    pub fn filled(window: Window, nx: usize, ny: usize) -> Result<Self> {
        let mut m = Self::new(window, nx, ny)?;
        m.cells.fill(true);
        Ok(m)
    }

    /// Marks every cell whose center satisfies `pred`.
    pub fn from_predicate(window: Window, nx: usize, ny: usize, pred: impl Fn(Complex64) -> bool) -> Result<Self> {
        let mut m = Self::new(window, nx, ny)?;
        for j in 0..ny {
            for i in 0..nx {
                let z = m.center(i, j);
                m.cells[j * nx + i] = pred(z);
            }
        }
        Ok(m)
    }

    pub fn dx(&self) -> f64 {
        self.window.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.window.height() / self.ny as f64
    }

    pub fn cell_size(&self) -> f64 {
        self.dx().max(self.dy())
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let k = j * self.nx + i;
        self.cells[k] = v;
    }

    pub fn center(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(
            self.window.re0 + (i as f64 + 0.5) * self.dx(),
            self.window.im0 + (j as f64 + 0.5) * self.dy(),
        )
    }

    /// Cell containing `z`; points on the far edges belong to the last cell.
    pub fn cell_of(&self, z: Complex64) -> Option<(usize, usize)> {
        if !self.window.contains(z) {
            return None;
        }
        let i = (((z.re - self.window.re0) / self.dx()) as usize).min(self.nx - 1);
        let j = (((z.im - self.window.im0) / self.dy()) as usize).min(self.ny - 1);
        Some((i, j))
    }

    pub fn mark_point(&mut self, z: Complex64) -> bool {
        match self.cell_of(z) {
            Some((i, j)) => {
                self.set(i, j, true);
                true
            }
            None => false,
        }
    }

    pub fn contains_point(&self, z: Complex64) -> bool {
        self.cell_of(z).is_some_and(|(i, j)| self.get(i, j))
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn same_geometry(&self, other: &GridMask) -> bool {
        self.window == other.window && self.nx == other.nx && self.ny == other.ny
    }

    fn check_geometry(&self, other: &GridMask) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{}x{} over {:?} vs {}x{} over {:?}",
                self.nx, self.ny, self.window, other.nx, other.ny, other.window
            )))
        }
    }

    pub fn neighbors8(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        (-1isize..=1)
            .flat_map(|dj| (-1isize..=1).map(move |di| (di, dj)))
            .filter(|&(di, dj)| di != 0 || dj != 0)
            .filter_map(move |(di, dj)| {
                let (a, b) = (i as isize + di, j as isize + dj);
                (a >= 0 && b >= 0 && a < nx && b < ny).then_some((a as usize, b as usize))
            })
    }

    /// Marked cells with at least one unmarked 8-neighbor; the window edge does not count.
    pub fn boundary(&self) -> GridMask {
        let mut out = self.clone();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let on = self.get(i, j) && self.neighbors8(i, j).any(|(a, b)| !self.get(a, b));
                out.set(i, j, on);
            }
        }
        out
    }

    /// Marked cells whose 8 neighbors (inside the window) are all marked.
    pub fn interior(&self) -> GridMask {
        let mut out = self.clone();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let on = self.get(i, j) && self.neighbors8(i, j).all(|(a, b)| self.get(a, b));
                out.set(i, j, on);
            }
        }
        out
    }

    /// Chebyshev dilation by `k` cells.
    pub fn dilate(&self, k: usize) -> GridMask {
        if k == 0 {
            return self.clone();
        }
        let d = self.chessboard_distance();
        let mut out = self.clone();
        for (c, dist) in out.cells.iter_mut().zip(d) {
            *c = dist <= k;
        }
        out
    }

    /// Chessboard distance from every cell to the nearest marked cell
    /// (`usize::MAX` when nothing is marked).
    pub fn chessboard_distance(&self) -> Vec<usize> {
        let (nx, ny) = (self.nx, self.ny);
        let inf = usize::MAX / 2;
        let mut d: Vec<usize> = self.cells.iter().map(|&c| if c { 0 } else { inf }).collect();
        for j in 0..ny {
            for i in 0..nx {
                let mut v = d[j * nx + i];
                if i > 0 {
                    v = v.min(d[j * nx + i - 1] + 1);
                }
                if j > 0 {
                    v = v.min(d[(j - 1) * nx + i] + 1);
                    if i > 0 {
                        v = v.min(d[(j - 1) * nx + i - 1] + 1);
                    }
                    if i + 1 < nx {
                        v = v.min(d[(j - 1) * nx + i + 1] + 1);
                    }
                }
                d[j * nx + i] = v;
            }
        }
        for j in (0..ny).rev() {
            for i in (0..nx).rev() {
                let mut v = d[j * nx + i];
                if i + 1 < nx {
                    v = v.min(d[j * nx + i + 1] + 1);
                }
                if j + 1 < ny {
                    v = v.min(d[(j + 1) * nx + i] + 1);
                    if i > 0 {
                        v = v.min(d[(j + 1) * nx + i - 1] + 1);
                    }
                    if i + 1 < nx {
                        v = v.min(d[(j + 1) * nx + i + 1] + 1);
                    }
                }
                d[j * nx + i] = v;
            }
        }
        for v in d.iter_mut() {
            if *v >= inf {
                *v = usize::MAX;
            }
        }
        d
    }

    pub fn union(&self, other: &GridMask) -> Result<GridMask> {
        self.check_geometry(other)?;
        let mut out = self.clone();
        for (a, b) in out.cells.iter_mut().zip(&other.cells) {
            *a |= *b;
        }
        Ok(out)
    }

    /// Marks every cell the segment `a -> b` touches.
    pub fn rasterize_segment(&mut self, a: Complex64, b: Complex64) {
        let mut hits = Vec::new();
        let _ = traverse(self, a, b - a, 1.0, |i, j, _| {
            hits.push((i, j));
            ControlFlow::Continue(())
        });
        for (i, j) in hits {
            self.set(i, j, true);
        }
    }

    pub fn rasterize_polyline(&mut self, pts: &[Complex64]) {
        match pts {
            [] => {}
            [p] => {
                self.mark_point(*p);
            }
            _ => {
                for w in pts.windows(2) {
                    self.rasterize_segment(w[0], w[1]);
                }
            }
        }
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self.cells.iter().map(|&c| if c { 255 } else { 0 }).collect();
        write_pgm_bytes(path, self.window, self.nx, self.ny, &bytes)
    }

    /// Reads a P5 file and its `.json` sidecar; any nonzero pixel is a member.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<GridMask> {
        let (window, nx, ny, bytes) = read_pgm_bytes(path)?;
        let mut m = GridMask::new(window, nx, ny)?;
        for row in 0..ny {
            let j = ny - 1 - row;
            for i in 0..nx {
                m.set(i, j, bytes[row * nx + i] != 0);
            }
        }
        Ok(m)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    window: [f64; 4],
    nx: usize,
    ny: usize,
}

/// Writes `data` (row-major, `j = 0` at the bottom) as P5 with top row first, plus the sidecar.
pub fn write_pgm_bytes(path: impl AsRef<Path>, window: Window, nx: usize, ny: usize, data: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if data.len() != nx * ny {
        return Err(Error::InvalidGeometry(format!("{} bytes for {nx}x{ny}", data.len())));
    }
    let mut out = Vec::with_capacity(data.len() + 32);
    write!(out, "P5\n{nx} {ny}\n255\n")?;
    for row in 0..ny {
        let j = ny - 1 - row;
        out.extend_from_slice(&data[j * nx..(j + 1) * nx]);
    }
    fs::write(path, out)?;
    let side = Sidecar {
        window: window.to_vec(),
        nx,
        ny,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Returns the window, size and raw bytes in file order (top row first).
pub fn read_pgm_bytes(path: impl AsRef<Path>) -> Result<(Window, usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let raw = fs::read(path)?;
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < raw.len() && raw[pos] == b'#' {
            while pos < raw.len() && raw[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&raw[start..pos]).into_owned());
    }
    pos += 1;
    if tokens[0] != "P5" {
        return Err(Error::Format(format!("expected P5, found `{}`", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM number `{s}`")));
    let (nx, ny, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("maxval {maxval}, expected 255")));
    }
    if raw.len() < pos + nx * ny {
        return Err(Error::Format("PGM pixel data truncated".into()));
    }
    let side: Sidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if side.nx != nx || side.ny != ny {
        return Err(Error::GeometryMismatch(format!(
            "sidecar {}x{} vs image {nx}x{ny}",
            side.nx, side.ny
        )));
    }
    let w = side.window;
    Ok((Window::new(w[0], w[1], w[2], w[3])?, nx, ny, raw[pos..pos + nx * ny].to_vec()))
}

/// Boundary Hausdorff distance and symmetric-difference counts between two masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskDistance {
    /// `None` when exactly one of the masks is empty.
    pub hausdorff_cells: Option<usize>,
    pub a_minus_b_cells: usize,
    pub b_minus_a_cells: usize,
}

pub fn mask_distance(a: &GridMask, b: &GridMask) -> Result<MaskDistance> {
    a.check_geometry(b)?;
    let a_minus_b = a.cells.iter().zip(&b.cells).filter(|(x, y)| **x && !**y).count();
    let b_minus_a = a.cells.iter().zip(&b.cells).filter(|(x, y)| !**x && **y).count();
    let pick = |m: &GridMask| {
        let bd = m.boundary();
        if bd.count() > 0 {
            bd
        } else {
            m.clone()
        }
    };
    let (ba, bb) = (pick(a), pick(b));
    let hausdorff_cells = match (ba.count(), bb.count()) {
        (0, 0) => Some(0),
        (0, _) | (_, 0) => None,
        _ => {
            let da = ba.chessboard_distance();
            let db = bb.chessboard_distance();
            let h1 = ba.cells.iter().zip(&db).filter(|(c, _)| **c).map(|(_, d)| *d).max();
            let h2 = bb.cells.iter().zip(&da).filter(|(c, _)| **c).map(|(_, d)| *d).max();
            h1.max(h2)
        }
    };
    Ok(MaskDistance {
        hausdorff_cells,
        a_minus_b_cells: a_minus_b,
        b_minus_a_cells: b_minus_a,
    })
}

const TIE_EPS: f64 = 1e-9;

/// Supercover traversal of `origin + s * dir`, `0 <= s <= s_max`, over closed
/// cells. Calls `visit(i, j, s)` for every cell the path touches, in order,
/// including both side cells when it passes exactly through a corner. `s` is
/// the parameter at which the cell is entered. Stops at the window edge.
pub fn traverse<F>(mask: &GridMask, origin: Complex64, dir: Complex64, s_max: f64, mut visit: F) -> ControlFlow<()>
where
    F: FnMut(usize, usize, f64) -> ControlFlow<()>,
{
    let (dx, dy) = (mask.dx(), mask.dy());
    let w = &mask.window;
    let gx = (origin.re - w.re0) / dx;
    let gy = (origin.im - w.im0) / dy;
    let (nx, ny) = (mask.nx as i64, mask.ny as i64);
    let (mut vx, mut vy) = (dir.re / dx, dir.im / dy);
    // Enter the window if the origin starts outside it.
    let mut s_in = 0.0;
    if !(0.0..=nx as f64).contains(&gx) || !(0.0..=ny as f64).contains(&gy) {
        let clip = |p: f64, v: f64, hi: f64| -> Option<(f64, f64)> {
            if v == 0.0 {
                return (0.0..=hi).contains(&p).then_some((f64::NEG_INFINITY, f64::INFINITY));
            }
            let (a, b) = ((0.0 - p) / v, (hi - p) / v);
            Some((a.min(b), a.max(b)))
        };
        let (Some((ax, bx)), Some((ay, by))) = (clip(gx, vx, nx as f64), clip(gy, vy, ny as f64)) else {
            return ControlFlow::Continue(());
        };
        let (lo, hi) = (ax.max(ay).max(0.0), bx.min(by).min(s_max));
        if lo > hi {
            return ControlFlow::Continue(());
        }
        s_in = lo;
    }
    let sx0 = gx + s_in * vx;
    let sy0 = gy + s_in * vy;
    let mut i = (sx0.floor() as i64).clamp(0, nx - 1);
    let mut j = (sy0.floor() as i64).clamp(0, ny - 1);

    // Normalize so one unit of the local parameter is at most one cell.
    let speed = vx.abs().max(vy.abs());
    if speed == 0.0 || !speed.is_finite() {
        return visit(i as usize, j as usize, 0.0);
    }
    vx /= speed;
    vy /= speed;
    let len = (s_max - s_in) * speed;
    let step_x: i64 = if vx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if vy > 0.0 { 1 } else { -1 };
    let next = |p: f64, c: i64, v: f64| -> f64 {
        if v > 0.0 {
            (c as f64 + 1.0 - p) / v
        } else if v < 0.0 {
            (c as f64 - p) / v
        } else {
            f64::INFINITY
        }
    };
    let mut t_x = next(sx0, i, vx);
    let mut t_y = next(sy0, j, vy);
    let dt_x = if vx != 0.0 { 1.0 / vx.abs() } else { f64::INFINITY };
    let dt_y = if vy != 0.0 { 1.0 / vy.abs() } else { f64::INFINITY };
    let to_s = |t: f64| s_in + t / speed;
    let inside = |a: i64, b: i64| a >= 0 && b >= 0 && a < nx && b < ny;

    visit(i as usize, j as usize, to_s(0.0))?;
    loop {
        let t = t_x.min(t_y);
        if t > len {
            return ControlFlow::Continue(());
        }
        if (t_x - t_y).abs() <= TIE_EPS {
            if inside(i + step_x, j) {
                visit((i + step_x) as usize, j as usize, to_s(t))?;
            }
            if inside(i, j + step_y) {
                visit(i as usize, (j + step_y) as usize, to_s(t))?;
            }
            i += step_x;
            j += step_y;
            t_x += dt_x;
            t_y += dt_y;
        } else if t_x < t_y {
            i += step_x;
            t_x += dt_x;
        } else {
            j += step_y;
            t_y += dt_y;
        }
        if !inside(i, j) {
            return ControlFlow::Continue(());
        }
        visit(i as usize, j as usize, to_s(t))?;
    }
}

/// Traversal of the half-line `origin + s * dir`, `s >= 0`, until it leaves the window.
pub fn traverse_ray<F>(mask: &GridMask, origin: Complex64, dir: Complex64, visit: F) -> ControlFlow<()>
where
    F: FnMut(usize, usize, f64) -> ControlFlow<()>,
{
    traverse(mask, origin, dir, f64::INFINITY, visit)
}
