//! Reward-landscape mapping over the parameter box, bilinear interpolation,
//! salient gradient set (SGS) extraction and funnel checks between
//! environments.
//!
//! Grids are indexed `[i][j]` with `i` along `theta0` and `j` along
//! `theta1`. Contours come from marching squares on the bilinear surface;
//! a point belongs to the SGS when its reward is strictly above the
//! threshold. Boundary polygons are closed, outer rings counter-clockwise
//! and holes clockwise in the (theta0, theta1) plane, and they follow the
//! box edge wherever the set touches it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::RobotParams;
use crate::policy::{ParameterBox, PolicyParams};
use crate::seed;
use crate::sim::{rollout, FailureKind, RolloutConfig};

/// Default SGS threshold, m/s.
pub const DEFAULT_THRESHOLD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub theta0_values: Vec<f64>,
    pub theta1_values: Vec<f64>,
    /// m/s, `reward[i][j]` at `(theta0_values[i], theta1_values[j])`.
    pub reward: Vec<Vec<f64>>,
    pub failed: Vec<Vec<bool>>,
    pub env_label: String,
    pub master_seed: u64,
}

/// Sample positions `min, min + step, ...` up to `max`, inclusive when the
/// span is a multiple of the step.
pub fn axis_values(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|k| min + k as f64 * step).collect()
}

/// Per-node failure tallies of a mapping run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MapStats {
    pub nodes: usize,
    pub failures: HashMap<FailureKind, usize>,
}

impl MapStats {
    pub fn count(&self, kind: FailureKind) -> usize {
        self.failures.get(&kind).copied().unwrap_or(0)
    }
}

/// Evaluates one rollout per grid node.
///
/// Node `(i, j)` runs with seed `derive(cfg.seed, [i, j])`, so the grid does
/// not depend on `jobs` or on scheduling. `jobs = 0` uses all cores.
pub fn map_landscape(
    env: &RobotParams,
    env_label: &str,
    bounds: &ParameterBox,
    resolution: f64,
    cfg: &RolloutConfig,
    jobs: usize,
) -> Result<(LandscapeGrid, MapStats)> {
    ensure(resolution > 0.0 && resolution.is_finite(), || format!("grid resolution must be > 0, got {resolution}"))?;
    bounds.validate()?;
    cfg.validate()?;
    env.validate()?;
    let t0 = axis_values(bounds.theta0_min, bounds.theta0_max, resolution);
    let t1 = axis_values(bounds.theta1_min, bounds.theta1_max, resolution);
    let (n0, n1) = (t0.len(), t1.len());
    let base = PolicyParams::new(0.0, 0.0);

    let eval = |k: usize| -> Result<(f64, Option<FailureKind>)> {
        let (i, j) = (k / n1, k % n1);
        let policy = PolicyParams { theta0: t0[i], theta1: t1[j], ..base };
        let node_cfg = cfg.with_seed(seed::derive(cfg.seed, &[i as u64, j as u64]));
        let r = rollout(&policy, env, &node_cfg)?;
        Ok((r.reward, r.failure))
    };
    let results = run_indexed(n0 * n1, jobs, eval)?;

    let mut grid = LandscapeGrid {
        theta0_values: t0,
        theta1_values: t1,
        reward: vec![vec![0.0; n1]; n0],
        failed: vec![vec![false; n1]; n0],
        env_label: env_label.to_string(),
        master_seed: cfg.seed,
    };
    let mut stats = MapStats { nodes: n0 * n1, ..Default::default() };
    for (k, (reward, failure)) in results.into_iter().enumerate() {
        let (i, j) = (k / n1, k % n1);
        grid.reward[i][j] = reward;
        if let Some(kind) = failure {
            grid.failed[i][j] = true;
            *stats.failures.entry(kind).or_default() += 1;
        }
    }
    Ok((grid, stats))
}

/// Maps `f` over `0..n`, keeping the output in index order.
#[cfg(feature = "parallel")]
pub(crate) fn run_indexed<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn run_indexed<T, F>(n: usize, _jobs: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

impl LandscapeGrid {
    /// Builds a grid from sampled values; `failed` defaults to all false.
    pub fn from_fn(theta0_values: Vec<f64>, theta1_values: Vec<f64>, label: &str, f: impl Fn(f64, f64) -> f64) -> Self {
        let reward = theta0_values
            .iter()
            .map(|&a| theta1_values.iter().map(|&b| f(a, b)).collect())
            .collect();
        let failed = vec![vec![false; theta1_values.len()]; theta0_values.len()];
        Self { theta0_values, theta1_values, reward, failed, env_label: label.into(), master_seed: 0 }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.theta0_values.len(), self.theta1_values.len())
    }

    pub fn bounds(&self) -> ParameterBox {
        ParameterBox {
            theta0_min: self.theta0_values[0],
            theta0_max: *self.theta0_values.last().expect("non-empty axis"),
            theta1_min: self.theta1_values[0],
            theta1_max: *self.theta1_values.last().expect("non-empty axis"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n0, n1) = self.shape();
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        let shape_ok = self.reward.len() == n0
            && self.failed.len() == n0
            && self.reward.iter().all(|r| r.len() == n1)
            && self.failed.iter().all(|r| r.len() == n1);
        if n0 < 2 || n1 < 2 || !shape_ok || !sorted(&self.theta0_values) || !sorted(&self.theta1_values) {
            return Err(Error::Format(format!("landscape `{}` is not a sorted grid of at least 2x2 nodes", self.env_label)));
        }
        Ok(())
    }

    /// Bilinear interpolation of the reward at `(theta0, theta1)`, degrees.
    pub fn interpolate(&self, theta0: f64, theta1: f64) -> Result<f64> {
        let (i, u) = locate(&self.theta0_values, theta0).ok_or(Error::Domain(theta0, theta1))?;
        let (j, v) = locate(&self.theta1_values, theta1).ok_or(Error::Domain(theta0, theta1))?;
        let r = &self.reward;
        Ok((1.0 - u) * (1.0 - v) * r[i][j] + u * (1.0 - v) * r[i + 1][j] + (1.0 - u) * v * r[i][j + 1] + u * v * r[i + 1][j + 1])
    }

    /// Mean over each node's 3x3 neighbourhood, truncated at the box edge.
    pub fn smoothed(&self) -> Self {
        let (n0, n1) = self.shape();
        let mut out = self.clone();
        for i in 0..n0 {
            for j in 0..n1 {
                let (mut sum, mut n) = (0.0, 0.0);
                for a in i.saturating_sub(1)..(i + 2).min(n0) {
                    for b in j.saturating_sub(1)..(j + 2).min(n1) {
                        sum += self.reward[a][b];
                        n += 1.0;
                    }
                }
                out.reward[i][j] = sum / n;
            }
        }
        out
    }

    /// Argmax node; ties go to the lowest theta0, then the lowest theta1.
    pub fn peak(&self) -> ((f64, f64), f64) {
        let mut best = (0, 0);
        for (i, row) in self.reward.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if r > self.reward[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        ((self.theta0_values[best.0], self.theta1_values[best.1]), self.reward[best.0][best.1])
    }
}

/// Cell index and fractional offset of `x` along a sorted axis.
fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if n < 2 || !(x >= axis[0] && x <= axis[n - 1]) {
        return None;
    }
    let i = axis.partition_point(|&a| a <= x).saturating_sub(1).min(n - 2);
    Some((i, (x - axis[i]) / (axis[i + 1] - axis[i])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgsSummary {
    /// m/s
    pub threshold: f64,
    pub area_fraction: f64,
    /// `(theta0, theta1)`, degrees.
    pub peak: [f64; 2],
    pub peak_reward: f64,
    pub components: usize,
    pub boundary: Vec<Vec<[f64; 2]>>,
    /// Parallel to `boundary`: which segments of each ring run along the
    /// box edge. `edge[k][m]` covers the segment from vertex `m` to `m + 1`.
    #[serde(skip)]
    pub on_box_edge: Vec<Vec<bool>>,
    /// Box the grid was sampled over.
    #[serde(skip)]
    pub bounds: ParameterBox,
}

/// Contour vertex identity, so shared crossings match exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Vertex {
    Node(usize, usize),
    /// Crossing on the edge from node (i, j) to (i + 1, j).
    AlongTheta0(usize, usize),
    /// Crossing on the edge from node (i, j) to (i, j + 1).
    AlongTheta1(usize, usize),
}

struct Contour<'a> {
    grid: &'a LandscapeGrid,
    threshold: f64,
}

impl Contour<'_> {
    fn value(&self, (i, j): (usize, usize)) -> f64 {
        self.grid.reward[i][j]
    }

    fn inside(&self, node: (usize, usize)) -> bool {
        self.value(node) > self.threshold
    }

    fn node_point(&self, (i, j): (usize, usize)) -> [f64; 2] {
        [self.grid.theta0_values[i], self.grid.theta1_values[j]]
    }

    /// Vertex where the level crosses the edge between adjacent nodes.
    fn crossing(&self, a: (usize, usize), b: (usize, usize)) -> Vertex {
        let (lo, _) = if (a.0, a.1) < (b.0, b.1) { (a, b) } else { (b, a) };
        if a.1 == b.1 {
            Vertex::AlongTheta0(lo.0, lo.1)
        } else {
            Vertex::AlongTheta1(lo.0, lo.1)
        }
    }

    fn point(&self, v: Vertex) -> [f64; 2] {
        let (a, b) = match v {
            Vertex::Node(i, j) => return self.node_point((i, j)),
            Vertex::AlongTheta0(i, j) => ((i, j), (i + 1, j)),
            Vertex::AlongTheta1(i, j) => ((i, j), (i, j + 1)),
        };
        let (va, vb) = (self.value(a), self.value(b));
        let t = ((self.threshold - va) / (vb - va)).clamp(0.0, 1.0);
        let (pa, pb) = (self.node_point(a), self.node_point(b));
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    }

    /// Counter-clockwise corners of cell (i, j).
    fn corners(i: usize, j: usize) -> [(usize, usize); 4] {
        [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
    }

    /// Polygon of the part of a cell above the threshold, with saddles
    /// resolved by the mean of the four corners. Each piece is returned
    /// counter-clockwise.
    fn cell_pieces(&self, i: usize, j: usize) -> Vec<Vec<Vertex>> {
        let c = Self::corners(i, j);
        let inside: Vec<bool> = c.iter().map(|&n| self.inside(n)).collect();
        let count = inside.iter().filter(|&&b| b).count();
        if count == 0 {
            return Vec::new();
        }
        let saddle = count == 2 && inside[0] == inside[2];
        let centre_in = c.iter().map(|&n| self.value(n)).sum::<f64>() / 4.0 > self.threshold;
        if saddle && !centre_in {
            // two separate corners
            return (0..4)
                .filter(|&k| inside[k])
                .map(|k| {
                    let prev = (k + 3) % 4;
                    let next = (k + 1) % 4;
                    vec![self.crossing(c[prev], c[k]), Vertex::Node(c[k].0, c[k].1), self.crossing(c[k], c[next])]
                })
                .collect();
        }
        let mut ring = Vec::with_capacity(6);
        for k in 0..4 {
            let next = (k + 1) % 4;
            if inside[k] {
                ring.push(Vertex::Node(c[k].0, c[k].1));
            }
            if inside[k] != inside[next] {
                ring.push(self.crossing(c[k], c[next]));
            }
        }
        vec![ring]
    }

    fn area(&self, ring: &[Vertex]) -> f64 {
        let pts: Vec<[f64; 2]> = ring.iter().map(|&v| self.point(v)).collect();
        shoelace(&pts)
    }
}

/// Signed polygon area, positive for counter-clockwise rings.
pub fn shoelace(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|k| {
            let (a, b) = (pts[k], pts[(k + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Salient gradient set of `grid` at `threshold`.
pub fn extract_sgs(grid: &LandscapeGrid, threshold: f64) -> Result<SgsSummary> {
    ensure(threshold >= 0.0 && threshold.is_finite(), || format!("threshold must be >= 0, got {threshold}"))?;
    grid.validate()?;
    let contour = Contour { grid, threshold };
    let (n0, n1) = grid.shape();

    let mut area = 0.0;
    // directed boundary edges, keyed by start vertex
    let mut next_of: HashMap<Vertex, (Vertex, bool)> = HashMap::new();
    for i in 0..n0 - 1 {
        for j in 0..n1 - 1 {
            for piece in contour.cell_pieces(i, j) {
                area += contour.area(&piece);
                let m = piece.len();
                for k in 0..m {
                    let (a, b) = (piece[k], piece[(k + 1) % m]);
                    if let Some(edge) = boundary_edge(a, b, n0, n1) {
                        next_of.insert(a, (b, edge));
                    }
                }
            }
        }
    }

    let mut boundary = Vec::new();
    let mut on_box_edge = Vec::new();
    let mut components = 0;
    // deterministic traversal order
    let mut starts: Vec<Vertex> = next_of.keys().copied().collect();
    starts.sort_by_key(vertex_key);
    for start in starts {
        if !next_of.contains_key(&start) {
            continue;
        }
        let mut ring = Vec::new();
        let mut edges = Vec::new();
        let mut v = start;
        while let Some((w, edge)) = next_of.remove(&v) {
            ring.push(contour.point(v));
            edges.push(edge);
            v = w;
        }
        if ring.len() >= 3 && shoelace(&ring) > 0.0 {
            components += 1;
        }
        boundary.push(ring);
        on_box_edge.push(edges);
    }

    let box_area = grid.bounds().area();
    let ((p0, p1), peak_reward) = grid.peak();
    Ok(SgsSummary {
        threshold,
        area_fraction: (area / box_area).clamp(0.0, 1.0),
        peak: [p0, p1],
        peak_reward,
        components,
        boundary,
        on_box_edge,
        bounds: grid.bounds(),
    })
}

fn vertex_key(v: &Vertex) -> (usize, usize, u8) {
    match *v {
        Vertex::Node(i, j) => (i, j, 0),
        Vertex::AlongTheta0(i, j) => (i, j, 1),
        Vertex::AlongTheta1(i, j) => (i, j, 2),
    }
}

/// `Some(on_box_edge)` when the piece edge `a -> b` is part of the set
/// boundary. Edges between two nodes lie on cell sides and only count on
/// the outer box; a node-to-crossing edge counts when it runs along the box.
fn boundary_edge(a: Vertex, b: Vertex, n0: usize, n1: usize) -> Option<bool> {
    let on_rim = |v: Vertex| -> (bool, bool) {
        match v {
            Vertex::Node(i, j) => (i == 0 || i == n0 - 1, j == 0 || j == n1 - 1),
            Vertex::AlongTheta0(_, j) => (false, j == 0 || j == n1 - 1),
            Vertex::AlongTheta1(i, _) => (i == 0 || i == n0 - 1, false),
        }
    };
    let same_side = |a: Vertex, b: Vertex| -> bool {
        let coords = |v: Vertex| -> (Option<usize>, Option<usize>) {
            match v {
                Vertex::Node(i, j) => (Some(i), Some(j)),
                Vertex::AlongTheta0(_, j) => (None, Some(j)),
                Vertex::AlongTheta1(i, _) => (Some(i), None),
            }
        };
        let ((ai, aj), (bi, bj)) = (coords(a), coords(b));
        let rim_i = |x: Option<usize>| matches!(x, Some(i) if i == 0 || i == n0 - 1);
        let rim_j = |x: Option<usize>| matches!(x, Some(j) if j == 0 || j == n1 - 1);
        (ai.is_some() && ai == bi && rim_i(ai)) || (aj.is_some() && aj == bj && rim_j(aj))
    };
    let is_node = |v: Vertex| matches!(v, Vertex::Node(..));
    match (is_node(a), is_node(b)) {
        // contour segment through the cell interior
        (false, false) => Some(false),
        _ => {
            let (ra, rb) = (on_rim(a), on_rim(b));
            let rim = (ra.0 || ra.1) && (rb.0 || rb.1);
            (rim && same_side(a, b)).then_some(true)
        }
    }
}

/// Whether the source peak sits inside the target SGS, and by how much.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub source_env: String,
    pub target_env: String,
    pub peak_contained: bool,
    /// Signed distance from the source peak to the target SGS boundary,
    /// degrees, positive inside. `-inf` (written as `null`) for an empty target.
    pub margin: f64,
}

/// Winding number of `p` about all rings; nonzero means inside.
fn winding_number(rings: &[Vec<[f64; 2]>], p: [f64; 2]) -> i32 {
    let mut wn = 0;
    for ring in rings {
        let n = ring.len();
        for k in 0..n {
            let (a, b) = (ring[k], ring[(k + 1) % n]);
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
            if a[1] <= p[1] {
                if b[1] > p[1] && cross > 0.0 {
                    wn += 1;
                }
            } else if b[1] <= p[1] && cross < 0.0 {
                wn -= 1;
            }
        }
    }
    wn
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

/// Signed distance of `p` to the SGS boundary of `target`, positive inside.
///
/// Distances are measured to the reward contour; stretches where the set
/// is cut off by the box edge only count when the set has no contour at all.
pub fn signed_margin(target: &SgsSummary, p: [f64; 2]) -> f64 {
    if target.boundary.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut best = f64::INFINITY;
    let mut best_any = f64::INFINITY;
    for (ring, edges) in target.boundary.iter().zip(&target.on_box_edge) {
        let n = ring.len();
        for k in 0..n {
            let d = segment_distance(p, ring[k], ring[(k + 1) % n]);
            best_any = best_any.min(d);
            if !edges.get(k).copied().unwrap_or(false) {
                best = best.min(d);
            }
        }
    }
    let dist = if best.is_finite() { best } else { best_any };
    // points on the box edge would sit exactly on a ring; test just inside
    let b = &target.bounds;
    let eps = 1e-9 * (b.width() + b.height());
    let q = [
        p[0].clamp(b.theta0_min + eps, b.theta0_max - eps),
        p[1].clamp(b.theta1_min + eps, b.theta1_max - eps),
    ];
    if winding_number(&target.boundary, q) != 0 {
        dist
    } else {
        -dist
    }
}

pub fn funnel_check(source_env: &str, source: &SgsSummary, target_env: &str, target: &SgsSummary) -> FunnelReport {
    let margin = signed_margin(target, source.peak);
    FunnelReport {
        source_env: source_env.into(),
        target_env: target_env.into(),
        peak_contained: margin > 0.0,
        margin,
    }
}

/// Number of 4-connected groups of nodes above `threshold`.
pub fn node_components(grid: &LandscapeGrid, threshold: f64) -> usize {
    let (n0, n1) = grid.shape();
    let mut seen = vec![vec![false; n1]; n0];
    let mut count = 0;
    for i in 0..n0 {
        for j in 0..n1 {
            if seen[i][j] || grid.reward[i][j] <= threshold {
                continue;
            }
            count += 1;
            let mut stack = vec![(i, j)];
            seen[i][j] = true;
            while let Some((a, b)) = stack.pop() {
                let mut push = |x: usize, y: usize| {
                    if !seen[x][y] && grid.reward[x][y] > threshold {
                        seen[x][y] = true;
                        stack.push((x, y));
                    }
                };
                if a > 0 {
                    push(a - 1, b);
                }
                if a + 1 < n0 {
                    push(a + 1, b);
                }
                if b > 0 {
                    push(a, b - 1);
                }
                if b + 1 < n1 {
                    push(a, b + 1);
                }
            }
        }
    }
    count
}
