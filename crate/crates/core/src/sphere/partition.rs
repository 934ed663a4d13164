//! Equal-area partitions of S^m by recursive zonal subdivision.
//!
//! S^1 is cut into equal arcs. For m ≥ 2 the sphere is cut into two polar caps
//! of one cell each and a sequence of collars (colatitude bands); each collar
//! is split into cells by an equal-area partition of S^{m−1}. The number of
//! collars and their cell counts follow the ideal-region-size heuristic with
//! carried rounding, and collar boundaries are placed where the cumulative cap
//! area is an exact multiple of w_m / N, so every cell has the same measure.
//! Colatitude is measured from the last coordinate.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{cap_area_angle, cap_radius_for_area, gaussian_direction, surface_area, SpherePoint};
use crate::error::{check_dim, domain, Result};
use crate::linalg::dot;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: SpherePoint,
    /// Surface measure of the cell.
    pub measure: f64,
    /// Upper bound on the geodesic distance from the center to any cell point.
    pub radius_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    pub m: usize,
    pub cells: Vec<Cell>,
    /// True when measures and radii are Monte-Carlo estimates.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub estimated: bool,
    #[serde(skip)]
    tree: Option<Node>,
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.cells == other.cells && self.estimated == other.estimated
    }
}

#[derive(Debug, Clone)]
enum Node {
    Whole,
    Arcs(usize),
    Zones { bounds: Vec<f64>, kids: Vec<Node>, offsets: Vec<usize> },
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn centers(&self) -> Vec<SpherePoint> {
        self.cells.iter().map(|c| c.center.clone()).collect()
    }

    pub fn total_measure(&self) -> f64 {
        self.cells.iter().map(|c| c.measure).sum()
    }

    pub fn max_radius(&self) -> f64 {
        self.cells.iter().map(|c| c.radius_bound).fold(0.0, f64::max)
    }

    /// Index of the cell containing `x`. Partitions loaded from JSON (and
    /// Voronoi partitions) fall back to the nearest center.
    pub fn locate(&self, x: &SpherePoint) -> Result<usize> {
        check_dim(self.m + 1, x.coords().len())?;
        Ok(match &self.tree {
            Some(t) => locate_in(t, x.coords()),
            None => nearest(&self.cells, x.coords()),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| crate::Error::Schema(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Partition = serde_json::from_str(s).map_err(|e| crate::Error::Schema(e.to_string()))?;
        for c in &p.cells {
            check_dim(p.m + 1, c.center.coords().len())?;
        }
        Ok(p)
    }
}

/// Equal-measure partition of S^m into `n` cells with centers and radius
/// bounds. The construction is deterministic; `seed` is accepted for
/// interface symmetry with the randomised fallback and does not affect it.
pub fn equal_area_partition(m: usize, n: usize, _seed: u64) -> Result<Partition> {
    if m < 1 {
        return domain("partition requires m >= 1");
    }
    if n < 1 {
        return domain("partition requires N >= 1");
    }
    let tree = build(m, n)?;
    let w = surface_area(m)?;
    let cells = match &tree {
        Node::Zones { bounds, kids, .. } => {
            let mut out = Vec::with_capacity(n);
            for (i, kid) in kids.iter().enumerate() {
                let (t1, t2) = (bounds[i], bounds[i + 1]);
                let count = node_len(kid, m - 1);
                let measure = (cap_area_angle(m, t2)? - cap_area_angle(m, t1)?) / count as f64;
                for (center, radius_bound) in zone_cells(m, t1, t2, kid) {
                    out.push(Cell { center: SpherePoint::from_unit(center), measure, radius_bound });
                }
            }
            // the final collar boundary comes from a bisection; spread its
            // rounding evenly rather than leaving it in one cell
            let total: f64 = out.iter().map(|c| c.measure).sum();
            let scale = w / total;
            if (scale - 1.0).abs() < 1e-9 {
                out.iter_mut().for_each(|c| c.measure = w / n as f64);
            }
            out
        }
        _ => sub_cells(m, &tree)
            .into_iter()
            .map(|(center, radius_bound)| Cell {
                center: SpherePoint::from_unit(center),
                measure: w / n as f64,
                radius_bound,
            })
            .collect(),
    };
    Ok(Partition { m, cells, estimated: false, tree: Some(tree) })
}

/// Fallback partition: uniform random centers with Voronoi cells whose
/// measures and radii are estimated from `mc_samples` uniform points.
pub fn random_voronoi_partition(m: usize, n: usize, seed: u64, mc_samples: usize) -> Result<Partition> {
    if n < 1 || m < 1 {
        return domain("partition requires m >= 1 and N >= 1");
    }
    let mut r = rng::rng(rng::stage(seed, "voronoi-centers"));
    let mut cells: Vec<Cell> =
        (0..n).map(|_| Cell { center: gaussian_direction(m, &mut r), measure: 0.0, radius_bound: 0.0 }).collect();
    let _ = r.gen::<u64>();
    let pts = super::uniform_sphere_sample(m, mc_samples.max(1), rng::stage(seed, "voronoi-mc"))?;
    let hits: Vec<(usize, f64)> = pts
        .par_iter()
        .map(|p| {
            let k = nearest(&cells, p.coords());
            (k, dot(cells[k].center.coords(), p.coords()).clamp(-1.0, 1.0).acos())
        })
        .collect();
    let w = surface_area(m)?;
    let unit = w / pts.len() as f64;
    for (k, d) in hits {
        cells[k].measure += unit;
        cells[k].radius_bound = cells[k].radius_bound.max(d);
    }
    Ok(Partition { m, cells, estimated: true, tree: None })
}

fn nearest(cells: &[Cell], x: &[f64]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, c) in cells.iter().enumerate() {
        let d = dot(c.center.coords(), x);
        if d > best.0 {
            best = (d, k);
        }
    }
    best.1
}

fn build(d: usize, n: usize) -> Result<Node> {
    if n == 1 {
        return Ok(Node::Whole);
    }
    if d == 1 {
        return Ok(Node::Arcs(n));
    }
    let w = surface_area(d)?;
    let area = w / n as f64;
    let cap = cap_radius_for_area(d, area)?;
    let collars = if n == 2 {
        0
    } else {
        let ideal = area.powf(1.0 / d as f64);
        (((PI - 2.0 * cap) / ideal).round() as usize).max(1)
    };
    let mut counts = vec![1usize];
    if collars > 0 {
        let fit = (PI - 2.0 * cap) / collars as f64;
        let mut carry = 0.0;
        let mut assigned = 0usize;
        for i in 0..collars {
            let t1 = cap + i as f64 * fit;
            let t2 = if i + 1 == collars { PI - cap } else { cap + (i + 1) as f64 * fit };
            let ideal = (cap_area_angle(d, t2)? - cap_area_angle(d, t1)?) / area;
            let mut k = (ideal + carry).round().max(0.0) as usize;
            if i + 1 == collars {
                k = n - 2 - assigned;
            }
            carry += ideal - k as f64;
            assigned += k;
            if k > 0 {
                counts.push(k);
            }
        }
    }
    counts.push(1);
    let mut bounds = vec![0.0];
    let mut cum = 0usize;
    for (i, &k) in counts.iter().enumerate() {
        cum += k;
        bounds.push(if i + 1 == counts.len() { PI } else { cap_radius_for_area(d, cum as f64 * area)? });
    }
    let kids = counts.iter().map(|&k| build(d - 1, k)).collect::<Result<Vec<_>>>()?;
    let mut offsets = vec![0];
    for &k in &counts {
        offsets.push(offsets.last().unwrap() + k);
    }
    Ok(Node::Zones { bounds, kids, offsets })
}

fn node_len(node: &Node, _d: usize) -> usize {
    match node {
        Node::Whole => 1,
        Node::Arcs(n) => *n,
        Node::Zones { offsets, .. } => *offsets.last().unwrap(),
    }
}

/// (center, radius bound) of every cell of a node on S^d.
fn sub_cells(d: usize, node: &Node) -> Vec<(Vec<f64>, f64)> {
    match node {
        Node::Whole => {
            let mut c = vec![0.0; d + 1];
            c[d] = 1.0;
            vec![(c, PI)]
        }
        Node::Arcs(n) => {
            let step = 2.0 * PI / *n as f64;
            (0..*n)
                .map(|k| {
                    let phi = (k as f64 + 0.5) * step;
                    (vec![phi.cos(), phi.sin()], (step / 2.0).min(PI))
                })
                .collect()
        }
        Node::Zones { bounds, kids, .. } => {
            kids.iter().enumerate().flat_map(|(i, kid)| zone_cells(d, bounds[i], bounds[i + 1], kid)).collect()
        }
    }
}

fn zone_cells(d: usize, t1: f64, t2: f64, kid: &Node) -> Vec<(Vec<f64>, f64)> {
    if t1 == 0.0 && matches!(kid, Node::Whole) {
        let mut c = vec![0.0; d + 1];
        c[d] = 1.0;
        return vec![(c, t2)];
    }
    if t2 == PI && matches!(kid, Node::Whole) {
        let mut c = vec![0.0; d + 1];
        c[d] = -1.0;
        return vec![(c, PI - t1)];
    }
    let tm = 0.5 * (t1 + t2);
    let (s, c) = tm.sin_cos();
    let subs = match kid {
        Node::Whole => {
            let mut u = vec![0.0; d];
            u[0] = 1.0;
            vec![(u, PI)]
        }
        _ => sub_cells(d - 1, kid),
    };
    subs.into_iter()
        .map(|(u, rho)| {
            let mut x: Vec<f64> = u.iter().map(|v| v * s).collect();
            x.push(c);
            (x, collar_radius(t1, t2, tm, rho))
        })
        .collect()
}

/// Exact maximum geodesic distance from (sin θm·v, cos θm) to points
/// (sin θ·u, cos θ) with θ ∈ [t1, t2] and d(u, v) ≤ ρ.
fn collar_radius(t1: f64, t2: f64, tm: f64, rho: f64) -> f64 {
    let a = tm.sin() * rho.min(PI).cos();
    let b = tm.cos();
    let g = |t: f64| a * t.sin() + b * t.cos();
    let mut lo = g(t1).min(g(t2));
    let r = a.hypot(b);
    let t0 = a.atan2(b);
    for crit in [t0 + PI, t0 - PI] {
        if crit > t1 && crit < t2 {
            lo = -r;
        }
    }
    lo.clamp(-1.0, 1.0).acos()
}

fn locate_in(node: &Node, x: &[f64]) -> usize {
    match node {
        Node::Whole => 0,
        Node::Arcs(n) => {
            let mut phi = x[1].atan2(x[0]);
            if phi < 0.0 {
                phi += 2.0 * PI;
            }
            ((phi / (2.0 * PI / *n as f64)) as usize).min(n - 1)
        }
        Node::Zones { bounds, kids, offsets } => {
            let d = x.len() - 1;
            let rest = &x[..d];
            let rn = dot(rest, rest).sqrt();
            let theta = rn.atan2(x[d]);
            let i = (bounds.partition_point(|&b| b <= theta).max(1) - 1).min(kids.len() - 1);
            let inner = match &kids[i] {
                Node::Whole => 0,
                kid => {
                    let u: Vec<f64> = if rn > 0.0 { rest.iter().map(|v| v / rn).collect() } else { unit(d) };
                    locate_in(kid, &u)
                }
            };
            offsets[i] + inner
        }
    }
}

fn unit(d: usize) -> Vec<f64> {
    let mut u = vec![0.0; d];
    u[0] = 1.0;
    u
}
