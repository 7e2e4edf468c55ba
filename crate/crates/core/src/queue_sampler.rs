//! The w-LIFO queue: arrivals, load path, exploration tree, height process,
//! surplus pinches and graph assembly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::Serialize;

use crate::domain::{Jump, PiecewisePath, StepFunction, Weights};
use crate::error::{Error, Result};

/// Arrival time of each client; `times[j - 1]` for client `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arrivals {
    pub times: Vec<f64>,
}

impl Arrivals {
    pub fn time(&self, j: usize) -> f64 {
        self.times[j - 1]
    }
}

pub fn sample_arrivals<R: Rng + ?Sized>(w: &Weights, rng: &mut R) -> Arrivals {
    let draw = |j: usize, rng: &mut R| loop {
        let e = Exp::new(w.weight(j) / w.sigma1()).expect("positive rate").sample(rng);
        if e > 0.0 {
            break e;
        }
    };
    let mut times: Vec<f64> = (1..=w.len()).map(|j| draw(j, rng)).collect();
    loop {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let clash = order.windows(2).find(|p| times[p[0]] == times[p[1]]).map(|p| (p[0], p[1]));
        match clash {
            None => break,
            Some((a, b)) => {
                warn!("arrival collision at {}, resampling clients {} and {}", times[a], a + 1, b + 1);
                times[a] = draw(a + 1, rng);
                times[b] = draw(b + 1, rng);
            }
        }
    }
    Arrivals { times }
}

/// `Y_t = -t + sum_j w_j 1{E_j <= t}`, up to the last departure.
pub fn load_path(w: &Weights, e: &Arrivals) -> Result<PiecewisePath> {
    if e.times.len() != w.len() {
        return Err(Error::InvalidArgument(format!(
            "{} arrival times for {} weights",
            e.times.len(),
            w.len()
        )));
    }
    let jumps: Vec<Jump> = e
        .times
        .iter()
        .enumerate()
        .map(|(i, &time)| Jump { time, size: w.weight(i + 1), label: i + 1 })
        .collect();
    let last = e.times.iter().copied().fold(0.0, f64::max);
    let probe = PiecewisePath::new(-1.0, jumps, last)?;
    let horizon = last + (probe.value_unchecked(last) - probe.final_infimum());
    PiecewisePath::new(-1.0, probe.jumps().to_vec(), horizon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackEntry {
    pub label: usize,
    /// Path value just before the arrival; the client leaves when the path returns here.
    pub level: f64,
    pub arrival: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueueEvent {
    /// `parent` is the client being served at the arrival (0 = idle server); `depth` is after the push.
    Arrival { time: f64, label: usize, parent: usize, depth: usize },
    Departure { time: f64, label: usize, depth: usize },
}

impl QueueEvent {
    pub fn time(&self) -> f64 {
        match *self {
            QueueEvent::Arrival { time, .. } | QueueEvent::Departure { time, .. } => time,
        }
    }

    pub fn depth(&self) -> usize {
        match *self {
            QueueEvent::Arrival { depth, .. } | QueueEvent::Departure { depth, .. } => depth,
        }
    }
}

/// Event-driven replay of the LIFO stack of a load path with negative drift.
/// Departures later than the path horizon are not reported.
pub struct LifoReplay<'a> {
    path: &'a PiecewisePath,
    next_jump: usize,
    stack: Vec<StackEntry>,
    slack: f64,
}

impl<'a> LifoReplay<'a> {
    pub fn new(path: &'a PiecewisePath) -> Self {
        assert!(path.drift() < 0.0, "LIFO replay needs a negative drift");
        let slack = 1e-12 * (1.0 + path.horizon());
        LifoReplay { path, next_jump: 0, stack: Vec::new(), slack }
    }

    pub fn stack(&self) -> &[StackEntry] {
        &self.stack
    }

    /// Client currently served (0 = idle).
    pub fn served(&self) -> usize {
        self.stack.last().map_or(0, |e| e.label)
    }

    fn top_departure(&self) -> Option<f64> {
        let top = self.stack.last()?;
        let k = self.next_jump - 1;
        let base = self.path.jumps()[k].time;
        Some(base + (self.path.value_at_jump(k) - top.level) / -self.path.drift())
    }

    /// Time of the next event, if any.
    pub fn peek_time(&self) -> Option<f64> {
        let arrival = self.path.jumps().get(self.next_jump).map(|j| j.time);
        let departure = self.top_departure().filter(|&d| d <= self.path.horizon() + self.slack);
        match (arrival, departure) {
            (Some(a), Some(d)) => Some(a.min(d)),
            (a, d) => a.or(d),
        }
    }

    pub fn next_event(&mut self) -> Result<Option<QueueEvent>> {
        let arrival = self.path.jumps().get(self.next_jump).copied();
        let departure = self.top_departure().filter(|&d| d <= self.path.horizon() + self.slack);
        match (arrival, departure) {
            (Some(a), Some(d)) if a.time == d => Err(Error::Collision(d)),
            (Some(a), Some(d)) if d < a.time => Ok(Some(self.pop(d))),
            (None, Some(d)) => Ok(Some(self.pop(d))),
            (Some(a), _) => {
                let level = self.path.left_at_jump(self.next_jump);
                let parent = self.served();
                self.stack.push(StackEntry { label: a.label, level, arrival: a.time });
                self.next_jump += 1;
                Ok(Some(QueueEvent::Arrival {
                    time: a.time,
                    label: a.label,
                    parent,
                    depth: self.stack.len(),
                }))
            }
            (None, None) => Ok(None),
        }
    }

    fn pop(&mut self, time: f64) -> QueueEvent {
        let e = self.stack.pop().expect("non-empty stack");
        QueueEvent::Departure { time, label: e.label, depth: self.stack.len() }
    }

    pub fn collect_events(mut self) -> Result<Vec<QueueEvent>> {
        let mut out = Vec::new();
        while let Some(ev) = self.next_event()? {
            out.push(ev);
        }
        Ok(out)
    }
}

/// Stack depth as a right-continuous step function.
pub fn height_from_events(events: &[QueueEvent], horizon: f64) -> Result<StepFunction> {
    let mut times = vec![0.0];
    let mut values = vec![0u32];
    for ev in events {
        let t = ev.time();
        if *times.last().unwrap() == t {
            *values.last_mut().unwrap() = ev.depth() as u32;
        } else {
            times.push(t);
            values.push(ev.depth() as u32);
        }
    }
    StepFunction::new(times, values, horizon)
}

/// Height process: number of clients in the queue.
pub fn height_process(path: &PiecewisePath) -> Result<StepFunction> {
    let events = LifoReplay::new(path).collect_events()?;
    height_from_events(&events, path.horizon())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplorationTree {
    /// `parent[0]` is `None` (the server); otherwise a label in `0..=n`.
    pub parent: Vec<Option<usize>>,
    pub height: Vec<u32>,
    pub arrival: Vec<f64>,
    pub departure: Vec<f64>,
    /// Maximal intervals during which client `j` is served.
    pub service_intervals: Vec<Vec<(f64, f64)>>,
    /// `(time, served client)` breakpoints of `V_t`, right-continuous; 0 = idle.
    pub serve_order: Vec<(f64, usize)>,
}

impl ExplorationTree {
    pub fn n(&self) -> usize {
        self.parent.len() - 1
    }

    /// Client served at time `t`.
    pub fn served_at(&self, t: f64) -> usize {
        let i = self.serve_order.partition_point(|&(s, _)| s <= t);
        if i == 0 {
            0
        } else {
            self.serve_order[i - 1].1
        }
    }

    pub fn is_ancestor(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.parent[b] {
                Some(p) => b = p,
                None => return false,
            }
        }
    }

    /// Lines `j parent height` for clients `1..=n`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for j in 1..=self.n() {
            let _ = writeln!(out, "{} {} {}", j, self.parent[j].unwrap_or(0), self.height[j]);
        }
        out
    }
}

/// Builds the tree from a labelled load path whose labels are `1..=n`.
pub fn tree_from_path(path: &PiecewisePath, n: usize) -> Result<(ExplorationTree, StepFunction)> {
    let events = LifoReplay::new(path).collect_events()?;
    let mut parent = vec![None; n + 1];
    let mut height = vec![0u32; n + 1];
    let mut arrival = vec![f64::NAN; n + 1];
    let mut departure = vec![f64::INFINITY; n + 1];
    let mut serve_order: Vec<(f64, usize)> = vec![(0.0, 0)];
    let mut stack: Vec<usize> = Vec::new();
    for ev in &events {
        match *ev {
            QueueEvent::Arrival { time, label, parent: p, depth } => {
                parent[label] = Some(p);
                height[label] = depth as u32;
                arrival[label] = time;
                stack.push(label);
                serve_order.push((time, label));
            }
            QueueEvent::Departure { time, label, .. } => {
                departure[label] = time;
                stack.pop();
                serve_order.push((time, stack.last().copied().unwrap_or(0)));
            }
        }
    }
    let mut service_intervals = vec![Vec::new(); n + 1];
    for pair in serve_order.windows(2) {
        let (a, j) = pair[0];
        let b = pair[1].0;
        if j != 0 && b > a {
            service_intervals[j].push((a, b));
        }
    }
    let h = height_from_events(&events, path.horizon())?;
    Ok((
        ExplorationTree { parent, height, arrival, departure, service_intervals, serve_order },
        h,
    ))
}

pub fn exploration_tree(w: &Weights, e: &Arrivals) -> Result<ExplorationTree> {
    let path = load_path(w, e)?;
    Ok(tree_from_path(&path, w.len())?.0)
}

/// One Poisson atom under the graph of `Y - J` and the pair it induces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pinch {
    pub t: f64,
    pub y: f64,
    pub s: f64,
    /// Client served at `s` (an ancestor of `served_t`).
    pub served_s: usize,
    /// Client served at `t`.
    pub served_t: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PinchSet {
    /// Sorted by `t`.
    pub pinches: Vec<Pinch>,
}

impl PinchSet {
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.pinches.iter().map(|p| (p.t, p.y)).collect()
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.pinches.iter().map(|p| (p.s, p.t)).collect()
    }

    pub fn len(&self) -> usize {
        self.pinches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pinches.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("t y s served_s served_t\n");
        for p in &self.pinches {
            let _ = writeln!(out, "{} {} {} {} {}", p.t, p.y, p.s, p.served_s, p.served_t);
        }
        out
    }
}

/// Linear pieces of `Y - J`: on `[start, start + len]` it equals `h0 - (u - start)`.
#[derive(Debug, Clone, Copy)]
struct AreaPiece {
    start: f64,
    h0: f64,
    len: f64,
}

impl AreaPiece {
    fn area(&self) -> f64 {
        self.len * (self.h0 - 0.5 * self.len)
    }
}

fn area_pieces(path: &PiecewisePath) -> Vec<AreaPiece> {
    let jumps = path.jumps();
    let mut out = Vec::with_capacity(jumps.len());
    for k in 0..jumps.len() {
        let start = jumps[k].time;
        let h0 = path.value_at_jump(k) - path.infimum_unchecked(start);
        let end = jumps.get(k + 1).map_or(path.horizon(), |j| j.time);
        let len = h0.min(end - start).max(0.0);
        if len > 0.0 {
            out.push(AreaPiece { start, h0, len });
        }
    }
    out
}

/// Area under `Y - J` over the horizon.
pub fn reflected_area(path: &PiecewisePath) -> f64 {
    area_pieces(path).iter().map(AreaPiece::area).sum()
}

/// Poisson atoms of intensity `dt dy / sigma1` under `Y - J`, with their pairs.
pub fn sample_pinch_points<R: Rng + ?Sized>(
    path: &PiecewisePath,
    sigma1: f64,
    rng: &mut R,
) -> Result<PinchSet> {
    let pieces = area_pieces(path);
    let mut cumulative = Vec::with_capacity(pieces.len());
    let mut total = 0.0;
    for p in &pieces {
        total += p.area();
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Ok(PinchSet::default());
    }
    let count = Poisson::new(total / sigma1)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .sample(rng) as usize;
    let mut atoms = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= u).min(pieces.len() - 1);
        let piece = pieces[k];
        let local = (u - if k == 0 { 0.0 } else { cumulative[k - 1] }).clamp(0.0, piece.area());
        // Inverse of the trapezoid CDF.
        let disc = (piece.h0 * piece.h0 - 2.0 * local).max(0.0);
        let s = (piece.h0 - disc.sqrt()).clamp(0.0, piece.len);
        let room = piece.h0 - s;
        let y = rng.random::<f64>() * room;
        if y <= 0.0 || s >= piece.len {
            continue;
        }
        atoms.push((piece.start + s, y));
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    resolve_pinches(path, &atoms)
}

/// Pairs `(s_p, t_p)` for given atoms, by bisection over the stack at each `t_p`.
pub fn resolve_pinches(path: &PiecewisePath, atoms: &[(f64, f64)]) -> Result<PinchSet> {
    let mut replay = LifoReplay::new(path);
    let mut pinches = Vec::with_capacity(atoms.len());
    for &(t, y) in atoms {
        while replay.peek_time().is_some_and(|e| e <= t) {
            replay.next_event()?;
        }
        let stack = replay.stack();
        let Some(bottom) = stack.first() else {
            return Err(Error::Invariant(format!("pinch atom at {t} while the queue is idle")));
        };
        let target = bottom.level + y;
        let i = stack.partition_point(|e| e.level <= target);
        let anchor = stack[i.max(1) - 1];
        pinches.push(Pinch {
            t,
            y,
            s: anchor.arrival,
            served_s: anchor.label,
            served_t: replay.served(),
        });
    }
    Ok(PinchSet { pinches })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum EdgeKind {
    Tree,
    Surplus,
}

impl EdgeKind {
    pub fn code(self) -> char {
        match self {
            EdgeKind::Tree => 'T',
            EdgeKind::Surplus => 'S',
        }
    }
}

/// Simple graph on `{1..n}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Graph {
    pub n: usize,
    pub edges: BTreeMap<(usize, usize), EdgeKind>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph { n, edges: BTreeMap::new() }
    }

    fn key(i: usize, j: usize) -> (usize, usize) {
        (i.min(j), i.max(j))
    }

    /// Adds `{i, j}` unless it is a loop or already present; returns whether it was added.
    pub fn add_edge(&mut self, i: usize, j: usize, kind: EdgeKind) -> bool {
        assert!((1..=self.n).contains(&i) && (1..=self.n).contains(&j), "vertex out of range");
        if i == j || self.edges.contains_key(&Self::key(i, j)) {
            return false;
        }
        self.edges.insert(Self::key(i, j), kind);
        true
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&Self::key(i, j))
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + 1];
        for &(i, j) in self.edges.keys() {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Vertex sets of connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n + 1];
        let mut out = Vec::new();
        for v in 1..=self.n {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            let mut comp = vec![v];
            let mut i = 0;
            while i < comp.len() {
                for &u in &adj[comp[i]] {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Bitmask over pairs `(1,2), (1,3), ..., (n-1,n)` in lexicographic order.
    pub fn pair_mask(&self) -> u64 {
        assert!(self.n * (self.n - 1) / 2 <= 64, "too many pairs for a mask");
        let mut mask = 0u64;
        let mut bit = 0;
        for i in 1..=self.n {
            for j in i + 1..=self.n {
                if self.has_edge(i, j) {
                    mask |= 1 << bit;
                }
                bit += 1;
            }
        }
        mask
    }

    /// Lines `i j kind`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (&(i, j), k) in &self.edges {
            let _ = writeln!(out, "{} {} {}", i, j, k.code());
        }
        out
    }
}

/// Tree edges plus one surplus edge per pinch (loops and repeats dropped).
pub fn assemble_graph(tree: &ExplorationTree, pinches: &PinchSet) -> Result<Graph> {
    let mut g = Graph::new(tree.n());
    for j in 1..=tree.n() {
        match tree.parent[j] {
            Some(0) => {}
            Some(p) => {
                g.add_edge(p, j, EdgeKind::Tree);
            }
            None => return Err(Error::Invariant(format!("client {j} never arrived"))),
        }
    }
    for p in &pinches.pinches {
        if p.served_s == 0 || !tree.is_ancestor(p.served_s, p.served_t) {
            return Err(Error::Invariant(format!(
                "pinch at t = {}: {} is not an ancestor of {}",
                p.t, p.served_s, p.served_t
            )));
        }
        g.add_edge(p.served_s, p.served_t, EdgeKind::Surplus);
    }
    Ok(g)
}

/// Everything produced by one run of the queue construction.
#[derive(Debug, Clone)]
pub struct QueueTrial {
    pub arrivals: Arrivals,
    pub path: PiecewisePath,
    pub tree: ExplorationTree,
    pub height: StepFunction,
    pub pinches: PinchSet,
    pub graph: Graph,
}

const MAX_ATTEMPTS: usize = 16;

pub fn sample_graph<R: Rng + ?Sized>(w: &Weights, rng: &mut R) -> Result<QueueTrial> {
    let mut last_err = None;
    for _ in 0..MAX_ATTEMPTS {
        let arrivals = sample_arrivals(w, rng);
        match build_trial(w, arrivals, rng) {
            Err(Error::Collision(t)) => {
                warn!("event tie at {t}, resampling the trial");
                last_err = Some(Error::Collision(t));
            }
            other => return other,
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// The construction from given arrival times.
pub fn build_trial<R: Rng + ?Sized>(w: &Weights, arrivals: Arrivals, rng: &mut R) -> Result<QueueTrial> {
    let path = load_path(w, &arrivals)?;
    let (tree, height) = tree_from_path(&path, w.len())?;
    let pinches = sample_pinch_points(&path, w.sigma1(), rng)?;
    let graph = assemble_graph(&tree, &pinches)?;
    Ok(QueueTrial { arrivals, path, tree, height, pinches, graph })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::seeding::trial_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn w(v: &[f64]) -> Weights {
        Weights::new(v.to_vec()).unwrap()
    }

    #[test]
    fn load_path_examples() {
        let p = load_path(&w(&[2.0, 1.0]), &Arrivals { times: vec![1.0, 2.0] }).unwrap();
        assert_eq!(p.value(1.0).unwrap(), 1.0);
        assert_eq!(p.value(2.0).unwrap(), 1.0);
        assert_eq!(p.value(4.0).unwrap(), -1.0);
        assert_eq!(p.value(4.0).unwrap() - p.infimum(4.0).unwrap(), 0.0);
        let p = load_path(&w(&[1.0, 1.0]), &Arrivals { times: vec![0.5, 0.6] }).unwrap();
        assert!((p.value(0.6).unwrap() - 1.4).abs() < 1e-15);
        assert!((p.horizon() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn two_client_trees() {
        let t = exploration_tree(&w(&[1.0, 1.0]), &Arrivals { times: vec![0.5, 0.6] }).unwrap();
        assert_eq!(t.parent, vec![None, Some(0), Some(1)]);
        assert_eq!(&t.height[1..], &[1, 2]);
        let t = exploration_tree(&w(&[1.0, 1.0]), &Arrivals { times: vec![0.5, 2.0] }).unwrap();
        assert_eq!(t.parent, vec![None, Some(0), Some(0)]);
        assert_eq!(&t.height[1..], &[1, 1]);
    }

    #[test]
    fn empty_pinches_give_a_forest() {
        let wt = w(&[1.0, 1.0, 1.0]);
        let path = load_path(&wt, &Arrivals { times: vec![0.2, 0.3, 0.4] }).unwrap();
        let (tree, _) = tree_from_path(&path, 3).unwrap();
        let g = assemble_graph(&tree, &PinchSet::default()).unwrap();
        assert_eq!(g.to_edge_list(), "1 2 T\n2 3 T\n");
    }

    #[test]
    fn loop_pinch_is_suppressed() {
        let wt = w(&[1.0, 1.0]);
        let path = load_path(&wt, &Arrivals { times: vec![0.5, 3.0] }).unwrap();
        let (tree, _) = tree_from_path(&path, 2).unwrap();
        let ps = resolve_pinches(&path, &[(0.7, 0.1)]).unwrap();
        assert_eq!(ps.pinches[0].served_s, 1);
        assert_eq!(ps.pinches[0].served_t, 1);
        assert!(assemble_graph(&tree, &ps).unwrap().edges.is_empty());
    }

    #[test]
    fn pinch_count_mean_matches_area() {
        let wt = w(&[1.0, 1.0]);
        let trials = 100_000;
        let (mut count, mut area) = (0.0, 0.0);
        let mut counts = Vec::with_capacity(trials);
        for i in 0..trials {
            let mut rng = trial_rng(11, i as u64);
            let t = sample_graph(&wt, &mut rng).unwrap();
            let c = t.pinches.len() as f64;
            count += c;
            counts.push(c);
            area += reflected_area(&t.path) / wt.sigma1();
        }
        let mean = count / trials as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - area / trials as f64).abs() < 3.0 * se, "{mean} vs {}", area / trials as f64);
    }

    #[test]
    fn arrival_means() {
        let wt = w(&[1.0, 1.0]);
        let mut rng = trial_rng(3, 0);
        let mean = (0..100_000).map(|_| sample_arrivals(&wt, &mut rng).times[0]).sum::<f64>() / 1e5;
        assert!((mean - 2.0).abs() < 0.02, "{mean}");
    }

    fn arb_weights() -> impl Strategy<Value = Weights> {
        prop::collection::vec(0.05f64..3.0, 2..9).prop_map(|v| Weights::from_unsorted(v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn height_matches_brute_force(wt in arb_weights(), seed in any::<u64>()) {
            let mut rng = trial_rng(seed, 0);
            let trial = sample_graph(&wt, &mut rng).unwrap();
            for _ in 0..100 {
                let t = rng.random::<f64>() * trial.path.horizon();
                prop_assert_eq!(trial.height.eval(t), oracle::brute_height(&trial.path, t).unwrap());
            }
            for j in 1..=wt.len() {
                prop_assert_eq!(trial.tree.height[j], trial.height.eval(trial.tree.arrival[j]));
                let p = trial.tree.parent[j].unwrap();
                let hp = if p == 0 { 0 } else { trial.tree.height[p] };
                prop_assert_eq!(trial.tree.height[j], hp + 1);
                let served: f64 = trial.tree.service_intervals[j].iter().map(|(a, b)| b - a).sum();
                prop_assert!((served - wt.weight(j)).abs() < 1e-9);
            }
        }

        #[test]
        fn stack_equals_record_set(wt in arb_weights(), seed in any::<u64>()) {
            let mut rng = trial_rng(seed, 1);
            let trial = sample_graph(&wt, &mut rng).unwrap();
            let mut replay = LifoReplay::new(&trial.path);
            while let Some(ev) = replay.next_event().unwrap() {
                // Probe just after the event, before the next one.
                let next = replay.peek_time().unwrap_or(trial.path.horizon());
                if next - ev.time() < 1e-9 {
                    continue;
                }
                let t = 0.5 * (ev.time() + next);
                let in_stack: Vec<usize> = replay.stack().iter().map(|e| e.label).collect();
                prop_assert_eq!(in_stack, oracle::brute_record_labels(&trial.path, t).unwrap());
            }
        }

        #[test]
        fn pinch_pairs_match_definition(wt in arb_weights(), seed in any::<u64>()) {
            let mut rng = trial_rng(seed, 2);
            let trial = sample_graph(&wt, &mut rng).unwrap();
            let atoms: Vec<(f64, f64)> = (0..20).filter_map(|_| {
                let t = rng.random::<f64>() * trial.path.horizon();
                let gap = trial.path.value(t).unwrap() - trial.path.infimum(t).unwrap();
                (gap > 1e-9).then(|| (t, rng.random::<f64>() * gap))
            }).collect();
            let mut atoms = atoms;
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let ps = resolve_pinches(&trial.path, &atoms).unwrap();
            for p in &ps.pinches {
                let s = oracle::brute_pinch_start(&trial.path, p.t, p.y).unwrap();
                prop_assert!((s - p.s).abs() < 1e-12, "{} vs {}", s, p.s);
                prop_assert!(p.s <= p.t);
                prop_assert!(trial.path.value(p.s).unwrap() - trial.path.infimum(p.s).unwrap() >= p.y);
                prop_assert_eq!(p.served_s, trial.tree.served_at(p.s));
                prop_assert_eq!(p.served_t, trial.tree.served_at(p.t));
            }
        }

        #[test]
        fn surplus_edges_stay_inside_tree_components(wt in arb_weights(), seed in any::<u64>()) {
            let mut rng = trial_rng(seed, 3);
            let trial = sample_graph(&wt, &mut rng).unwrap();
            let mut forest = Graph::new(wt.len());
            for (&(i, j), &k) in &trial.graph.edges {
                if k == EdgeKind::Tree {
                    forest.add_edge(i, j, k);
                }
            }
            prop_assert_eq!(forest.components(), trial.graph.components());
            for &(i, j) in trial.graph.edges.keys() {
                prop_assert!(i != j && i >= 1 && j <= wt.len());
            }
        }

        #[test]
        fn departures_are_lifo(wt in arb_weights(), seed in any::<u64>()) {
            let mut rng = trial_rng(seed, 4);
            let trial = sample_graph(&wt, &mut rng).unwrap();
            let tr = &trial.tree;
            for j in 1..=wt.len() {
                prop_assert!(tr.departure[j] > tr.arrival[j]);
                if let Some(p) = tr.parent[j].filter(|&p| p != 0) {
                    prop_assert!(tr.arrival[p] < tr.arrival[j] && tr.departure[j] < tr.departure[p]);
                }
            }
        }
    }
}
