//! Marching-squares zero contours and tagged polyline collections.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::grid::Window;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CurveTag {
    InflectionPlus,
    InflectionMinus,
    Separatrix { start: Complex64 },
    ForwardOrbit { start: Complex64 },
    NongenericImage,
}

impl CurveTag {
    pub fn name(&self) -> &'static str {
        match self {
            CurveTag::InflectionPlus => "inflection_plus",
            CurveTag::InflectionMinus => "inflection_minus",
            CurveTag::Separatrix { .. } => "separatrix",
            CurveTag::ForwardOrbit { .. } => "forward_orbit",
            CurveTag::NongenericImage => "nongeneric_image",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub tag: CurveTag,
    pub points: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveSet {
    pub window: Window,
    pub polylines: Vec<Polyline>,
}

impl CurveSet {
    pub fn new(window: Window) -> Self {
        CurveSet {
            window,
            polylines: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.polylines.iter().all(|p| p.points.is_empty())
    }

    pub fn vertex_count(&self) -> usize {
        self.polylines.iter().map(|p| p.points.len()).sum()
    }

    pub fn vertices(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.polylines.iter().flat_map(|p| p.points.iter().copied())
    }

    pub fn with_tag(&self, pred: impl Fn(&CurveTag) -> bool) -> CurveSet {
        CurveSet {
            window: self.window,
            polylines: self.polylines.iter().filter(|p| pred(&p.tag)).cloned().collect(),
        }
    }

    pub fn extend(&mut self, other: CurveSet) {
        self.polylines.extend(other.polylines);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("curve_id,tag,re,im\n");
        for (k, p) in self.polylines.iter().enumerate() {
            for z in &p.points {
                let _ = writeln!(out, "{k},{},{},{}", p.tag.name(), z.re, z.im);
            }
        }
        out
    }

    /// One `<path>` per polyline, `y` flipped so the imaginary axis points up.
    pub fn to_svg(&self, width_px: f64) -> String {
        let w = &self.window;
        let scale = width_px / w.width();
        let height_px = w.height() * scale;
        let map = |z: Complex64| ((z.re - w.re0) * scale, (w.im1 - z.im) * scale);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width_px:.0}" height="{height_px:.0}" viewBox="0 0 {width_px:.3} {height_px:.3}">"#
        );
        for p in &self.polylines {
            if p.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (k, z) in p.points.iter().enumerate() {
                let (x, y) = map(*z);
                let _ = write!(d, "{}{x:.3},{y:.3} ", if k == 0 { "M" } else { "L" });
            }
            let _ = writeln!(
                out,
                r#"  <path data-tag="{}" d="{}" fill="none" stroke="black" stroke-width="1"/>"#,
                p.tag.name(),
                d.trim_end()
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Zero contour of `f` sampled on the `(nx+1) x (ny+1)` cell corners of the
/// window. Corners where `f` is `None` mask out their cells. Returns raw
/// polylines (linear interpolation along cell edges).
pub fn marching_squares<F>(window: &Window, nx: usize, ny: usize, f: F) -> Vec<Vec<Complex64>>
where
    F: Fn(Complex64) -> Option<f64>,
{
    let dx = window.width() / nx as f64;
    let dy = window.height() / ny as f64;
    let node = |i: usize, j: usize| Complex64::new(window.re0 + i as f64 * dx, window.im0 + j as f64 * dy);
    let vals: Vec<Option<f64>> = (0..=ny)
        .flat_map(|j| (0..=nx).map(move |i| (i, j)))
        .map(|(i, j)| f(node(i, j)).filter(|v| v.is_finite()))
        .collect();
    let v = |i: usize, j: usize| vals[j * (nx + 1) + i];

    // Edge keys: horizontal edge (i,j)-(i+1,j) is 2*(j*(nx+1)+i), vertical (i,j)-(i,j+1) is +1.
    let hkey = |i: usize, j: usize| 2 * (j * (nx + 1) + i);
    let vkey = |i: usize, j: usize| 2 * (j * (nx + 1) + i) + 1;
    let cross = |a: Complex64, fa: f64, b: Complex64, fb: f64| {
        let t = if fa == fb { 0.5 } else { fa / (fa - fb) };
        a + (b - a) * t.clamp(0.0, 1.0)
    };

    let mut points: HashMap<usize, Complex64> = HashMap::new();
    let mut segs: Vec<(usize, usize)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (Some(f00), Some(f10), Some(f11), Some(f01)) = (v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)) else {
                continue;
            };
            let corners = [(node(i, j), f00), (node(i + 1, j), f10), (node(i + 1, j + 1), f11), (node(i, j + 1), f01)];
            // Edges in order: bottom, right, top, left.
            let keys = [hkey(i, j), vkey(i + 1, j), hkey(i, j + 1), vkey(i, j)];
            let mut hits: Vec<usize> = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, fa) = corners[e];
                let (b, fb) = corners[(e + 1) % 4];
                if (fa >= 0.0) != (fb >= 0.0) {
                    points.entry(keys[e]).or_insert_with(|| cross(a, fa, b, fb));
                    hits.push(e);
                }
            }
            match hits.len() {
                2 => segs.push((keys[hits[0]], keys[hits[1]])),
                4 => {
                    // Saddle: decide by the center value.
                    let center = (f00 + f10 + f11 + f01) / 4.0;
                    if (center >= 0.0) == (f00 >= 0.0) {
                        segs.push((keys[0], keys[1]));
                        segs.push((keys[2], keys[3]));
                    } else {
                        segs.push((keys[0], keys[3]));
                        segs.push((keys[1], keys[2]));
                    }
                }
                _ => {}
            }
        }
    }
    chain_segments(&segs, &points)
}

fn chain_segments(segs: &[(usize, usize)], points: &HashMap<usize, Complex64>) -> Vec<Vec<Complex64>> {
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, &(a, b)) in segs.iter().enumerate() {
        adj.entry(a).or_default().push(k);
        adj.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    let walk = |start_seg: usize, from: usize, used: &mut Vec<bool>| -> Vec<usize> {
        let mut keys = vec![from];
        let mut seg = start_seg;
        let mut at = from;
        loop {
            used[seg] = true;
            let (a, b) = segs[seg];
            let next = if a == at { b } else { a };
            keys.push(next);
            at = next;
            match adj[&at].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        keys
    };
    // Open chains start at degree-one edge points, then closed loops.
    let mut starts: Vec<usize> = adj.iter().filter(|(_, v)| v.len() == 1).map(|(k, _)| *k).collect();
    starts.sort_unstable();
    for key in starts {
        if let Some(&s) = adj[&key].iter().find(|&&s| !used[s]) {
            let keys = walk(s, key, &mut used);
            out.push(keys.iter().map(|k| points[k]).collect());
        }
    }
    for s in 0..segs.len() {
        if !used[s] {
            let keys = walk(s, segs[s].0, &mut used);
            out.push(keys.iter().map(|k| points[k]).collect());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_contour_is_closed_and_accurate() {
        let w = Window::new(-2.0, 2.0, -2.0, 2.0).unwrap();
        let lines = marching_squares(&w, 80, 80, |z| Some(z.norm_sqr() - 1.0));
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert_eq!(l.first(), l.last());
        for z in l {
            assert!((z.norm() - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn straight_line_is_open() {
        let w = Window::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let lines = marching_squares(&w, 10, 10, |z| Some(z.im - 0.33));
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].len(), 11);
        assert!(lines[0].iter().all(|z| (z.im - 0.33).abs() < 1e-12));
    }

    #[test]
    fn masked_corners_drop_cells() {
        let w = Window::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let lines = marching_squares(&w, 10, 10, |z| if z.re > 0.05 { None } else { Some(z.im - 0.33) });
        let n: usize = lines.iter().map(|l| l.len()).sum();
        assert!(n > 0 && n < 11);
    }

    #[test]
    fn csv_and_svg_outputs() {
        let mut cs = CurveSet::new(Window::new(0.0, 1.0, 0.0, 1.0).unwrap());
        cs.polylines.push(Polyline {
            tag: CurveTag::InflectionMinus,
            points: vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 1.0)],
        });
        let csv = cs.to_csv();
        assert!(csv.starts_with("curve_id,tag,re,im\n0,inflection_minus,0,0\n"));
        let svg = cs.to_svg(100.0);
        assert!(svg.contains(r#"data-tag="inflection_minus""#));
        assert!(svg.contains("M0.000,100.000 L100.000,0.000"));
    }
}
