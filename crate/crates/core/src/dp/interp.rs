//! Concave interpolation of a value slice over the (SoC, peak) grid.
//!
//! A slice is represented by its least concave majorant: the upper convex hull of the
//! lifted nodes (sᵢ, c_k, V_ik). It is the minimum of its facet planes, so it is jointly
//! concave for any node data, and it passes through every node when the nodes sample a
//! concave function. The hull is found with node heights jittered by a relative 1e-12 so
//! that no four lifted nodes are coplanar; facet planes use the exact heights, and facets
//! that then agree to within 1e-11 are merged. Point queries that hit a grid node return
//! the stored node value.

use std::collections::{HashSet, VecDeque};

/// Cell index and local coordinate of `x` on ascending `points` (at least two).
#[inline]
pub fn locate(points: &[f64], x: f64) -> (usize, f64) {
    let n = points.len();
    if x <= points[0] {
        return (0, 0.0);
    }
    if x >= points[n - 1] {
        return (n - 2, 1.0);
    }
    let i = points.partition_point(|&p| p <= x) - 1;
    (i, (x - points[i]) / (points[i + 1] - points[i]))
}

/// Piecewise-linear function of the peak coordinate, given by ascending nodes.
#[derive(Debug, Clone, Default)]
pub struct Profile {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Scratch for the lower envelope of (slope, intercept) lines.
    lines: Vec<(f64, f64)>,
}

impl Profile {
    pub fn clear(&mut self) {
        self.xs.clear();
        self.ys.clear();
    }

    /// Evaluates with constant extrapolation outside the node range.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 || x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let j = self.xs.partition_point(|&p| p <= x) - 1;
        let w = (x - self.xs[j]) / (self.xs[j + 1] - self.xs[j]);
        self.ys[j] + w * (self.ys[j + 1] - self.ys[j])
    }

    /// Replaces `self` by `self + weight · other` on the union of both node sets.
    pub fn add_scaled(&mut self, other: &Profile, weight: f64, buf: &mut Profile) {
        buf.clear();
        let (a, b) = (&self.xs, &other.xs);
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let x = match (a.get(i), b.get(j)) {
                (Some(&p), Some(&q)) => p.min(q),
                (Some(&p), None) => p,
                (None, Some(&q)) => q,
                (None, None) => unreachable!(),
            };
            buf.xs.push(x);
            buf.ys.push(seg_eval(&self.xs, &self.ys, i, x) + weight * seg_eval(&other.xs, &other.ys, j, x));
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
        }
        std::mem::swap(self, buf);
    }
}

/// Evaluates the profile (xs, ys) at `x`, given that xs[next - 1] ≤ x ≤ xs[next].
#[inline]
fn seg_eval(xs: &[f64], ys: &[f64], next: usize, x: f64) -> f64 {
    if next == 0 {
        return ys[0];
    }
    if next >= xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[next - 1], xs[next]);
    ys[next - 1] + (x - x0) / (x1 - x0) * (ys[next] - ys[next - 1])
}

/// Affine function ds·s + dc·c + b.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Plane {
    ds: f64,
    dc: f64,
    b: f64,
}

impl Plane {
    #[inline]
    fn at(&self, s: f64, c: f64) -> f64 {
        self.ds * s + self.dc * c + self.b
    }

    fn through(p: [(f64, f64, f64); 3]) -> Self {
        let (u1, u2, u3) = (p[1].0 - p[0].0, p[1].1 - p[0].1, p[1].2 - p[0].2);
        let (v1, v2, v3) = (p[2].0 - p[0].0, p[2].1 - p[0].1, p[2].2 - p[0].2);
        let nz = u1 * v2 - u2 * v1;
        let ds = -(u2 * v3 - u3 * v2) / nz;
        let dc = -(u3 * v1 - u1 * v3) / nz;
        Self { ds, dc, b: p[0].2 - ds * p[0].0 - dc * p[0].1 }
    }
}

/// Triangle edge crossing a SoC cell: peak and value along it, both linear in s.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    s0: f64,
    c0: f64,
    v0: f64,
    dc: f64,
    dv: f64,
}

/// Least concave majorant of one value slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveSurface {
    soc: Vec<f64>,
    peak: Vec<f64>,
    values: Vec<f64>,
    /// Facets meeting each SoC cell, sorted by descending peak slope.
    strips: Vec<Vec<Plane>>,
    /// Edges crossing each SoC cell in ascending peak order; absent if the hull triangles
    /// failed to tile the grid rectangle.
    crossings: Option<Vec<Vec<Edge>>>,
}

/// Deterministic pseudo-random number in [−½, ½) for node `j`.
fn jitter(j: usize) -> f64 {
    let mut z = (j as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

const JITTER: f64 = 1e-12;
const MERGE_TOL: f64 = 1e-11;

impl ConcaveSurface {
    /// Builds the majorant of `values` (row-major, `soc.len() × peak.len()`).
    pub fn new(values: &[f64], soc: &[f64], peak: &[f64]) -> Self {
        let (ns, nc) = (soc.len(), peak.len());
        let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let pts: Vec<(f64, f64, f64)> = (0..ns * nc)
            .map(|j| (soc[j / nc], peak[j % nc], values[j] + JITTER * scale * jitter(j)))
            .collect();
        let triangles = upper_hull(&pts, ns, nc);

        let node = |j: usize| (soc[j / nc], peak[j % nc], values[j]);
        let mut strips: Vec<Vec<Plane>> = vec![Vec::new(); ns - 1];
        for tri in &triangles {
            let plane = Plane::through(tri.map(node));
            let rows = tri.map(|j| j / nc);
            let lo = *rows.iter().min().expect("three vertices");
            let hi = *rows.iter().max().expect("three vertices");
            for strip in &mut strips[lo..hi.max(lo + 1).min(ns - 1)] {
                strip.push(plane);
            }
        }
        // Facets that differ by jitter alone are merged.
        let tol = MERGE_TOL * scale;
        for (i, strip) in strips.iter_mut().enumerate() {
            strip.sort_by(|a, b| b.dc.total_cmp(&a.dc).then(a.b.total_cmp(&b.b)));
            let corners = [(soc[i], peak[0]), (soc[i], peak[nc - 1]), (soc[i + 1], peak[0]), (soc[i + 1], peak[nc - 1])];
            let mut kept: Vec<Plane> = Vec::with_capacity(strip.len());
            for p in strip.drain(..) {
                let same = kept.iter().rev().any(|q| corners.iter().all(|&(s, c)| (p.at(s, c) - q.at(s, c)).abs() <= tol));
                if !same {
                    kept.push(p);
                }
            }
            *strip = kept;
        }
        let crossings = tiles(&triangles, &node, soc, peak).then(|| crossings(&triangles, &node, soc, nc));
        Self { soc: soc.to_vec(), peak: peak.to_vec(), values: values.to_vec(), strips, crossings }
    }

    #[inline]
    fn strip(&self, s: f64) -> &[Plane] {
        &self.strips[locate(&self.soc, s).0]
    }

    fn peak_range(&self) -> (f64, f64) {
        (self.peak[0], self.peak[self.peak.len() - 1])
    }

    /// Value at `(s, c)`; arguments outside the grid are clamped onto it. At a grid node
    /// this is the stored node value.
    #[inline]
    pub fn value(&self, s: f64, c: f64) -> f64 {
        let (c0, c1) = self.peak_range();
        let s = s.clamp(self.soc[0], self.soc[self.soc.len() - 1]);
        let c = c.clamp(c0, c1);
        let (i, u) = locate(&self.soc, s);
        let (k, v) = locate(&self.peak, c);
        if (u == 0.0 || u == 1.0) && (v == 0.0 || v == 1.0) {
            return self.values[(i + u as usize) * self.peak.len() + k + v as usize];
        }
        self.strips[i].iter().fold(f64::INFINITY, |m, p| m.min(p.at(s, c)))
    }

    /// Restriction to the line at SoC `s`, over the peak range of the grid.
    pub fn profile(&self, s: f64, out: &mut Profile) {
        out.clear();
        let s = s.clamp(self.soc[0], self.soc[self.soc.len() - 1]);
        let Some(crossings) = &self.crossings else {
            return self.envelope_profile(s, out);
        };
        let (c0, c1) = self.peak_range();
        let gap = 1e-12 * (c1 - c0);
        for e in &crossings[locate(&self.soc, s).0] {
            let x = e.c0 + e.dc * (s - e.s0);
            if out.xs.last().is_some_and(|&last| x - last <= gap) {
                continue;
            }
            out.xs.push(x);
            out.ys.push(e.v0 + e.dv * (s - e.s0));
        }
    }

    /// Profile as the lower envelope of the cell's facet planes.
    fn envelope_profile(&self, s: f64, out: &mut Profile) {
        out.clear();
        let (c0, c1) = self.peak_range();
        // Lines c ↦ dc·c + k with descending slopes; the lower envelope uses them in order.
        let mut hull = std::mem::take(&mut out.lines);
        hull.clear();
        for p in self.strip(s) {
            let line = (p.dc, p.ds * s + p.b);
            if let Some(&(dc, k)) = hull.last() {
                if dc == line.0 {
                    if k <= line.1 {
                        continue;
                    }
                    hull.pop();
                }
            }
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if cross_at(a, line) <= cross_at(a, b) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(line);
        }
        let at = |l: (f64, f64), c: f64| l.0 * c + l.1;
        let mut j = 0;
        while j + 1 < hull.len() && cross_at(hull[j], hull[j + 1]) <= c0 {
            j += 1;
        }
        out.xs.push(c0);
        out.ys.push(at(hull[j], c0));
        while j + 1 < hull.len() {
            let x = cross_at(hull[j], hull[j + 1]);
            if x >= c1 {
                break;
            }
            j += 1;
            out.xs.push(x);
            out.ys.push(at(hull[j], x));
        }
        out.xs.push(c1);
        out.ys.push(at(hull[j], c1));
        out.lines = hull;
    }
}

/// Whether the triangles cover the grid rectangle without overlap, judged by total area.
fn tiles(triangles: &[[usize; 3]], node: &impl Fn(usize) -> (f64, f64, f64), soc: &[f64], peak: &[f64]) -> bool {
    let area: f64 = triangles
        .iter()
        .map(|t| {
            let (a, b, c) = (node(t[0]), node(t[1]), node(t[2]));
            0.5 * ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0))
        })
        .sum();
    let rect = (soc[soc.len() - 1] - soc[0]) * (peak[peak.len() - 1] - peak[0]);
    (area - rect).abs() <= 1e-9 * rect
}

/// Per SoC cell, the triangle edges spanning it, ordered by peak.
fn crossings(
    triangles: &[[usize; 3]],
    node: &impl Fn(usize) -> (f64, f64, f64),
    soc: &[f64],
    nc: usize,
) -> Vec<Vec<Edge>> {
    let mut edges: Vec<(usize, usize)> = triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| if a / nc <= b / nc { (a, b) } else { (b, a) })
        .filter(|(a, b)| a / nc != b / nc)
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let mut out: Vec<Vec<Edge>> = vec![Vec::new(); soc.len() - 1];
    for (a, b) in edges {
        let (p, q) = (node(a), node(b));
        let ds = q.0 - p.0;
        let edge = Edge { s0: p.0, c0: p.1, v0: p.2, dc: (q.1 - p.1) / ds, dv: (q.2 - p.2) / ds };
        for cell in &mut out[a / nc..b / nc] {
            cell.push(edge);
        }
    }
    for (i, cell) in out.iter_mut().enumerate() {
        let mid = 0.5 * (soc[i] + soc[i + 1]);
        cell.sort_by(|x, y| (x.c0 + x.dc * (mid - x.s0)).total_cmp(&(y.c0 + y.dc * (mid - y.s0))));
    }
    out
}

/// Abscissa where two lines (slope, intercept) with different slopes meet.
#[inline]
fn cross_at(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.1 - a.1) / (a.0 - b.0)
}

/// Triangles of the upper hull of lifted grid nodes, found by gift-wrapping from the
/// boundary of the grid rectangle. Vertices are node indices in counter-clockwise order.
fn upper_hull(pts: &[(f64, f64, f64)], ns: usize, nc: usize) -> Vec<[usize; 3]> {
    let idx = |i: usize, k: usize| i * nc + k;
    let xy_scale = (pts[pts.len() - 1].0 - pts[0].0).max(pts[pts.len() - 1].1 - pts[0].1);
    let area_tol = 1e-12 * xy_scale * xy_scale;

    // Counter-clockwise boundary, then each side reduced to its upper hull.
    let sides: [Vec<usize>; 4] = [
        (0..ns).map(|i| idx(i, 0)).collect(),
        (0..nc).map(|k| idx(ns - 1, k)).collect(),
        (0..ns).rev().map(|i| idx(i, nc - 1)).collect(),
        (0..nc).rev().map(|k| idx(0, k)).collect(),
    ];
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for side in &sides {
        for w in upper_chain(pts, side).windows(2) {
            queue.push_back((w[0], w[1]));
        }
    }

    let mut done: HashSet<(usize, usize)> = HashSet::new();
    let mut triangles = Vec::new();
    while let Some((a, b)) = queue.pop_front() {
        if done.contains(&(a, b)) {
            continue;
        }
        done.insert((a, b));
        let (pa, pb) = (pts[a], pts[b]);
        let (ex, ey) = (pb.0 - pa.0, pb.1 - pa.1);
        let len2 = ex * ex + ey * ey;
        let mut best: Option<(f64, usize)> = None;
        for (j, pj) in pts.iter().enumerate() {
            let (rx, ry) = (pj.0 - pa.0, pj.1 - pa.1);
            let cross = ex * ry - ey * rx;
            if cross <= area_tol {
                continue;
            }
            let along = (ex * rx + ey * ry) / len2;
            let on_line = pa.2 + along * (pb.2 - pa.2);
            let slope = (pj.2 - on_line) * len2.sqrt() / cross;
            if best.map_or(true, |(s, _)| slope > s) {
                best = Some((slope, j));
            }
        }
        let Some((_, r)) = best else { continue };
        triangles.push([a, b, r]);
        done.insert((b, r));
        done.insert((r, a));
        for edge in [(r, b), (a, r)] {
            if !done.contains(&edge) {
                queue.push_back(edge);
            }
        }
    }
    triangles
}

/// Upper concave chain of collinear nodes given in order along their line.
fn upper_chain(pts: &[(f64, f64, f64)], line: &[usize]) -> Vec<usize> {
    let t = |j: usize| (pts[j].0 - pts[line[0]].0).abs() + (pts[j].1 - pts[line[0]].1).abs();
    let mut chain: Vec<usize> = Vec::new();
    for &j in line {
        while chain.len() >= 2 {
            let (a, b) = (chain[chain.len() - 2], chain[chain.len() - 1]);
            let lhs = (pts[b].2 - pts[a].2) * (t(j) - t(a));
            let rhs = (pts[j].2 - pts[a].2) * (t(b) - t(a));
            if lhs <= rhs {
                chain.pop();
            } else {
                break;
            }
        }
        chain.push(j);
    }
    chain
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_clamps() {
        let p = [0.0, 1.0, 3.0];
        assert_eq!(locate(&p, -1.0), (0, 0.0));
        assert_eq!(locate(&p, 5.0), (1, 1.0));
        assert_eq!(locate(&p, 2.0), (1, 0.5));
    }

    #[test]
    fn reproduces_affine_data() {
        let soc = [0.0, 0.5, 1.0, 2.0];
        let peak = [0.0, 1.0, 1.5];
        let f = |s: f64, c: f64| 0.3 * s - 0.7 * c + 2.0;
        let vals: Vec<f64> = soc.iter().flat_map(|&s| peak.iter().map(move |&c| f(s, c))).collect();
        let surf = ConcaveSurface::new(&vals, &soc, &peak);
        for &(s, c) in &[(0.0, 0.0), (0.7, 0.3), (2.0, 1.5), (1.3, 1.1)] {
            assert!((surf.value(s, c) - f(s, c)).abs() < 1e-10);
        }
    }

    #[test]
    fn profile_matches_value() {
        let soc = [0.0, 1.0, 2.0, 3.0];
        let peak = [0.0, 0.5, 1.0];
        let vals: Vec<f64> =
            soc.iter().flat_map(|&s| peak.iter().map(move |&c| -(s - 1.2f64).powi(2) - (c - 0.4f64).powi(2) - s * c)).collect();
        let surf = ConcaveSurface::new(&vals, &soc, &peak);
        let mut prof = Profile::default();
        for s in [0.0, 0.4, 1.7, 3.0] {
            surf.profile(s, &mut prof);
            for c in [0.0, 0.2, 0.55, 1.0] {
                assert!((prof.eval(c) - surf.value(s, c)).abs() < 1e-12);
            }
        }
    }

    fn concave_data(seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let soc = crate::dp::linspace(0.0, rng.gen_range(1.0..6.0), rng.gen_range(2..15));
        let peak = crate::dp::linspace(0.0, rng.gen_range(0.5..4.0), rng.gen_range(2..12));
        let (a, b, k) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), rng.gen_range(-0.5..0.5));
        let (s0, c0) = (rng.gen_range(0.0..6.0), rng.gen_range(0.0..4.0));
        let f = |s: f64, c: f64| -a * (s - s0).powi(2) - b * (c - c0).powi(2) + k * (a * b).sqrt() * (s - s0) * (c - c0);
        let vals = soc.iter().flat_map(|&s| peak.iter().map(move |&c| f(s, c))).collect();
        (vals, soc, peak)
    }

    #[test]
    fn interpolates_concave_nodes_and_stays_concave() {
        for seed in 0..40 {
            let (vals, soc, peak) = concave_data(seed);
            let surf = ConcaveSurface::new(&vals, &soc, &peak);
            assert!(surf.crossings.is_some(), "seed {seed}");
            let nc = peak.len();
            for (j, &v) in vals.iter().enumerate() {
                assert!((surf.value(soc[j / nc], peak[j % nc]) - v).abs() < 1e-9, "seed {seed} node {j}");
            }
            let (sb, cb) = (soc[soc.len() - 1], peak[nc - 1]);
            let mut prof = Profile::default();
            let mut env = Profile::default();
            for i in 0..30 {
                let s = sb * i as f64 / 29.0;
                surf.profile(s, &mut prof);
                surf.envelope_profile(s, &mut env);
                for k in 0..30 {
                    let c = cb * k as f64 / 29.0;
                    let v = surf.value(s, c);
                    assert!((prof.eval(c) - v).abs() < 1e-9, "seed {seed}");
                    assert!((env.eval(c) - v).abs() < 1e-9, "seed {seed}");
                    let (s2, c2) = (sb * (1.0 - i as f64 / 29.0), cb * ((k * 7) % 30) as f64 / 29.0);
                    let mid = surf.value(0.5 * (s + s2), 0.5 * (c + c2));
                    assert!(mid >= 0.5 * (v + surf.value(s2, c2)) - 1e-12, "seed {seed}");
                }
            }
        }
    }
}
