//! Excursions of the height process, tree metrics coded by heights, and
//! pinched metric spaces for each component.

use serde::Serialize;

use crate::domain::{PiecewisePath, StepFunction};
use crate::error::{Error, Result};
use crate::queue_sampler::{Pinch, PinchSet, QueueTrial};

/// Distances below this are treated as zero when merging points at `eps = 0`.
pub const MERGE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Excursion {
    pub l: f64,
    pub r: f64,
    pub zeta: f64,
}

fn sort_excursions(v: &mut [Excursion]) {
    v.sort_by(|a, b| b.zeta.total_cmp(&a.zeta).then(a.l.total_cmp(&b.l)));
}

/// Maximal intervals where the height is positive, longest first (ties: earlier first).
pub fn excursions_of_height(h: &StepFunction) -> Vec<Excursion> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for (&t, &v) in h.times().iter().zip(h.values()) {
        match (start, v) {
            (None, v) if v > 0 => start = Some(t),
            (Some(l), 0) => {
                out.push(Excursion { l, r: t, zeta: t - l });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(l) = start {
        out.push(Excursion { l, r: h.horizon(), zeta: h.horizon() - l });
    }
    sort_excursions(&mut out);
    out
}

/// Maximal intervals where `Y > J` for a path with drift -1, same ordering.
pub fn excursions_of_path(path: &PiecewisePath) -> Vec<Excursion> {
    let mut out = Vec::new();
    let jumps = path.jumps();
    let mut k = 0;
    while k < jumps.len() {
        let level = path.left_at_jump(k);
        let l = jumps[k].time;
        // The excursion ends when the path returns to its starting level.
        let mut end = k;
        let mut r = l + (path.value_at_jump(k) - level) / -path.drift();
        while end + 1 < jumps.len() && jumps[end + 1].time < r {
            end += 1;
            r = jumps[end].time + (path.value_at_jump(end) - level) / -path.drift();
        }
        let r = r.min(path.horizon());
        out.push(Excursion { l, r, zeta: r - l });
        k = end + 1;
    }
    sort_excursions(&mut out);
    out
}

/// Sparse-table range minimum over a slice.
#[derive(Debug, Clone)]
pub struct SparseMin {
    levels: Vec<Vec<u32>>,
}

impl SparseMin {
    pub fn new(values: &[u32]) -> Self {
        let mut levels = vec![values.to_vec()];
        let mut width = 1;
        while 2 * width <= values.len() {
            let prev = levels.last().unwrap();
            let next = (0..=values.len() - 2 * width)
                .map(|i| prev[i].min(prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        SparseMin { levels }
    }

    /// Minimum over `i..=j`.
    pub fn min(&self, i: usize, j: usize) -> u32 {
        let (i, j) = (i.min(j), i.max(j));
        let k = (j - i + 1).ilog2() as usize;
        self.levels[k][i].min(self.levels[k][j + 1 - (1 << k)])
    }
}

/// Tree distance `d_h(s, t) = h(s) + h(t) - 2 min_{[s, t]} h` for a step height.
#[derive(Debug, Clone)]
pub struct TreeCoding {
    times: Vec<f64>,
    values: Vec<u32>,
    rmq: SparseMin,
}

impl TreeCoding {
    pub fn new(h: &StepFunction) -> Self {
        TreeCoding {
            times: h.times().to_vec(),
            values: h.values().to_vec(),
            rmq: SparseMin::new(h.values()),
        }
    }

    fn piece(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn height(&self, t: f64) -> u32 {
        self.values[self.piece(t)]
    }

    pub fn distance(&self, s: f64, t: f64) -> f64 {
        let (i, j) = (self.piece(s), self.piece(t));
        let low = self.rmq.min(i, j);
        f64::from(self.values[i] + self.values[j] - 2 * low)
    }
}

/// Shortcut metric on a finite set of points of a tree: each pinch joins two
/// points by an edge of length `eps ∧ d(a, b)`.
pub struct PinchedMetric<'a> {
    coding: &'a TreeCoding,
    /// Representative time of each point.
    points: &'a [f64],
    endpoints: Vec<usize>,
    closure: Vec<Vec<f64>>,
}

impl<'a> PinchedMetric<'a> {
    /// `pinches` are pairs of point indices.
    pub fn new(coding: &'a TreeCoding, points: &'a [f64], pinches: &[(usize, usize)], eps: f64) -> Self {
        let endpoints: Vec<usize> = pinches.iter().flat_map(|&(a, b)| [a, b]).collect();
        let m = endpoints.len();
        let base = |a: usize, b: usize| coding.distance(points[a], points[b]);
        let mut closure: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| base(endpoints[i], endpoints[j])).collect())
            .collect();
        for k in 0..pinches.len() {
            let len = eps.min(closure[2 * k][2 * k + 1]);
            closure[2 * k][2 * k + 1] = len;
            closure[2 * k + 1][2 * k] = len;
        }
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    let via = closure[i][k] + closure[k][j];
                    if via < closure[i][j] {
                        closure[i][j] = via;
                    }
                }
            }
        }
        PinchedMetric { coding, points, endpoints, closure }
    }

    pub fn tree_distance(&self, x: usize, y: usize) -> f64 {
        self.coding.distance(self.points[x], self.points[y])
    }

    pub fn distance(&self, x: usize, y: usize) -> f64 {
        let mut best = self.tree_distance(x, y);
        if self.endpoints.is_empty() {
            return best;
        }
        let from_x: Vec<f64> = self.endpoints.iter().map(|&a| self.tree_distance(x, a)).collect();
        for (b, &eb) in self.endpoints.iter().enumerate() {
            let to_y = self.tree_distance(eb, y);
            for (a, dx) in from_x.iter().enumerate() {
                best = best.min(dx + self.closure[a][b] + to_y);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteMetricSpace {
    /// Original vertex labels represented by each point (several only after merging).
    pub labels: Vec<Vec<usize>>,
    /// Index of the root point.
    pub root: usize,
    pub masses: Vec<f64>,
    /// Pinch pairs as original vertex labels.
    pub pinch_pairs: Vec<(usize, usize)>,
    /// Row-major distances, present when the space is small enough.
    pub distance_matrix: Option<Vec<Vec<f64>>>,
    pub mass: f64,
    pub excursion: Excursion,
}

impl FiniteMetricSpace {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Pinches whose `t` lies in each excursion, shifted by `-l`, sorted by `t`.
pub fn per_component_pinches(pinches: &PinchSet, excursions: &[Excursion]) -> Result<Vec<Vec<Pinch>>> {
    let mut out = vec![Vec::new(); excursions.len()];
    for p in &pinches.pinches {
        let k = excursions
            .iter()
            .position(|e| e.l <= p.t && p.t <= e.r)
            .ok_or_else(|| Error::Invariant(format!("pinch at t = {} outside every excursion", p.t)))?;
        let e = excursions[k];
        if !(e.l <= p.s && p.s <= e.r) {
            return Err(Error::Invariant(format!(
                "pinch ({}, {}) straddles excursion [{}, {}]",
                p.s, p.t, e.l, e.r
            )));
        }
        out[k].push(Pinch { s: p.s - e.l, t: p.t - e.l, ..*p });
    }
    for list in &mut out {
        list.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    Ok(out)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// The coded component of `clients` (labels sorted by arrival), with its pinches.
pub fn pinched_metric_space(
    coding: &TreeCoding,
    clients: &[usize],
    arrival: &[f64],
    weights: &[f64],
    pinches: &[Pinch],
    excursion: Excursion,
    eps: f64,
    dense_max: usize,
) -> Result<FiniteMetricSpace> {
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!("eps = {eps} < 0")));
    }
    let times: Vec<f64> = clients.iter().map(|&j| arrival[j]).collect();
    let index_of = |label: usize| {
        clients
            .iter()
            .position(|&c| c == label)
            .ok_or_else(|| Error::Invariant(format!("pinch endpoint {label} outside component")))
    };
    let pairs: Vec<(usize, usize)> = pinches
        .iter()
        .map(|p| Ok((index_of(p.served_s)?, index_of(p.served_t)?)))
        .collect::<Result<_>>()?;
    let metric = PinchedMetric::new(coding, &times, &pairs, eps);
    let m = clients.len();

    // Classes of points at distance zero, only possible when eps = 0.
    let mut parent: Vec<usize> = (0..m).collect();
    if eps < MERGE_THRESHOLD {
        for &(a, b) in &pairs {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut class_of = vec![usize::MAX; m];
    let mut reps = Vec::new();
    let mut labels: Vec<Vec<usize>> = Vec::new();
    let mut masses = Vec::new();
    for i in 0..m {
        let r = find(&mut parent, i);
        if class_of[r] == usize::MAX {
            class_of[r] = reps.len();
            reps.push(i);
            labels.push(Vec::new());
            masses.push(0.0);
        }
        let c = class_of[r];
        class_of[i] = c;
        labels[c].push(clients[i]);
        masses[c] += weights[clients[i] - 1];
    }
    let distance_matrix = (reps.len() <= dense_max).then(|| {
        reps.iter()
            .map(|&a| reps.iter().map(|&b| if a == b { 0.0 } else { metric.distance(a, b) }).collect())
            .collect()
    });
    let mass = masses.iter().sum();
    Ok(FiniteMetricSpace {
        labels,
        root: class_of[0],
        masses,
        pinch_pairs: pinches.iter().map(|p| (p.served_s, p.served_t)).collect(),
        distance_matrix,
        mass,
        excursion,
    })
}

/// One space per excursion of the trial, largest mass first.
pub fn component_spaces(
    trial: &QueueTrial,
    weights: &[f64],
    eps: f64,
    dense_max: usize,
) -> Result<Vec<FiniteMetricSpace>> {
    let excursions = excursions_of_height(&trial.height);
    let pinches = per_component_pinches(&trial.pinches, &excursions)?;
    let coding = TreeCoding::new(&trial.height);
    let arrival = &trial.tree.arrival;
    let mut by_time: Vec<usize> = (1..arrival.len()).collect();
    by_time.sort_by(|&a, &b| arrival[a].total_cmp(&arrival[b]));
    let mut out = Vec::with_capacity(excursions.len());
    for (e, pins) in excursions.iter().zip(&pinches) {
        let clients: Vec<usize> = by_time
            .iter()
            .copied()
            .filter(|&j| e.l <= arrival[j] && arrival[j] < e.r)
            .collect();
        let space = pinched_metric_space(&coding, &clients, arrival, weights, pins, *e, eps, dense_max)?;
        let scale = 1.0 + e.zeta;
        if (space.mass - e.zeta).abs() > 1e-9 * scale {
            return Err(Error::Invariant(format!(
                "component mass {} differs from excursion length {}",
                space.mass, e.zeta
            )));
        }
        out.push(space);
    }
    Ok(out)
}
