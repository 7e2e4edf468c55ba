//! Slow, literal reference implementations. Favour clarity; inputs are capped.

use std::collections::VecDeque;

use rand::Rng;

use crate::domain::{PiecewisePath, Weights};
use crate::error::{Error, Result};
use crate::queue_sampler::{EdgeKind, Graph};

pub const MAX_BRUTE_JUMPS: usize = 4096;
pub const MAX_PINCHES: usize = 12;
pub const MAX_LITERAL_PINCHES: usize = 6;

/// Independent Bernoulli edges with probability `1 - exp(-w_i w_j / sigma1)`.
pub fn direct_sample<R: Rng + ?Sized>(w: &Weights, rng: &mut R) -> Graph {
    let n = w.len();
    let mut g = Graph::new(n);
    for i in 1..=n {
        for j in i + 1..=n {
            if rng.random::<f64>() < w.edge_probability(i, j) {
                g.add_edge(i, j, EdgeKind::Tree);
            }
        }
    }
    g
}

/// Unit-length shortest paths; `d[i-1][j-1]`, `INFINITY` when unreachable.
pub fn bfs_distances(g: &Graph) -> Vec<Vec<f64>> {
    let adj = g.adjacency();
    (1..=g.n)
        .map(|src| {
            let mut d = vec![f64::INFINITY; g.n + 1];
            d[src] = 0.0;
            let mut q = VecDeque::from([src]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if d[v].is_infinite() {
                        d[v] = d[u] + 1.0;
                        q.push_back(v);
                    }
                }
            }
            d[1..].to_vec()
        })
        .collect()
}

fn check_size(path: &PiecewisePath) -> Result<()> {
    if path.jumps().len() > MAX_BRUTE_JUMPS {
        return Err(Error::OracleCap(format!("{} jumps", path.jumps().len())));
    }
    Ok(())
}

/// Brute infimum of `f` over `[s, t]` for a path of the queue type, where
/// `f(u) = path(u) - offset(u)`; candidates are `s`, `t` and both sides of each jump.
fn brute_inf<F: Fn(f64, bool) -> f64>(path: &PiecewisePath, s: f64, t: f64, f: F) -> f64 {
    let mut m = f(s, false).min(f(t, false));
    for j in path.jumps() {
        if j.time > s && j.time <= t {
            m = m.min(f(j.time, true)).min(f(j.time, false));
        }
    }
    m
}

/// Jump times `s <= t` with `Y(s-) < inf_{[s,t]} Y`, as labels in time order.
pub fn brute_record_labels(path: &PiecewisePath, t: f64) -> Result<Vec<usize>> {
    check_size(path)?;
    let value = |u: f64, left: bool| {
        if left {
            path.value_left(u).unwrap()
        } else {
            path.value(u).unwrap()
        }
    };
    path.value(t)?;
    Ok(path
        .jumps()
        .iter()
        .filter(|j| j.time <= t)
        .filter(|j| value(j.time, true) < brute_inf(path, j.time, t, value))
        .map(|j| j.label)
        .collect())
}

/// Number of records: the height at `t` by the definition.
pub fn brute_height(path: &PiecewisePath, t: f64) -> Result<u32> {
    Ok(brute_record_labels(path, t)?.len() as u32)
}

/// `inf { s <= t : inf_{[s,t]} (Y - J) > y }` by scanning every jump.
pub fn brute_pinch_start(path: &PiecewisePath, t: f64, y: f64) -> Result<f64> {
    check_size(path)?;
    let gap = |u: f64, left: bool| {
        let v = if left { path.value_left(u).unwrap() } else { path.value(u).unwrap() };
        v - path.infimum(u).unwrap()
    };
    path.value(t)?;
    path.jumps()
        .iter()
        .filter(|j| j.time <= t && brute_inf(path, j.time, t, gap) > y)
        .map(|j| j.time)
        .reduce(f64::min)
        .ok_or_else(|| Error::InvalidArgument(format!("no time s <= {t} clears height {y}")))
}

fn pinch_length(d: &[Vec<f64>], a: usize, b: usize, eps: f64) -> f64 {
    eps.min(d[a][b])
}

/// Shortest `x -> y` distance using each pinch edge at most once, by dynamic
/// programming over (set of used pinches, current endpoint).
pub fn brute_pinched_distance(
    d: &[Vec<f64>],
    pinches: &[(usize, usize)],
    eps: f64,
    x: usize,
    y: usize,
) -> Result<f64> {
    let p = pinches.len();
    if p > MAX_PINCHES {
        return Err(Error::OracleCap(format!("{p} pinches")));
    }
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!("eps = {eps} < 0")));
    }
    let mut best = d[x][y];
    if p == 0 {
        return Ok(best);
    }
    // state[mask][2k + side]: at the far endpoint of pinch k after crossing it.
    let width = 2 * p;
    let mut state = vec![f64::INFINITY; (1usize << p) * width];
    let far = |k: usize, side: usize| if side == 0 { pinches[k].1 } else { pinches[k].0 };
    let near = |k: usize, side: usize| if side == 0 { pinches[k].0 } else { pinches[k].1 };
    for k in 0..p {
        for side in 0..2 {
            let len = pinch_length(d, pinches[k].0, pinches[k].1, eps);
            state[(1 << k) * width + 2 * k + side] = d[x][near(k, side)] + len;
        }
    }
    for mask in 1usize..(1 << p) {
        for slot in 0..width {
            let cur = state[mask * width + slot];
            if !cur.is_finite() {
                continue;
            }
            let here = far(slot / 2, slot % 2);
            best = best.min(cur + d[here][y]);
            for k in (0..p).filter(|k| mask & (1 << k) == 0) {
                let len = pinch_length(d, pinches[k].0, pinches[k].1, eps);
                for side in 0..2 {
                    let next = (mask | (1 << k)) * width + 2 * k + side;
                    let cand = cur + d[here][near(k, side)] + len;
                    if cand < state[next] {
                        state[next] = cand;
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Literal enumeration over ordered sequences of distinct pinches with orientations.
pub fn literal_pinched_distance(
    d: &[Vec<f64>],
    pinches: &[(usize, usize)],
    eps: f64,
    x: usize,
    y: usize,
) -> Result<f64> {
    if pinches.len() > MAX_LITERAL_PINCHES {
        return Err(Error::OracleCap(format!("{} pinches", pinches.len())));
    }
    fn go(
        d: &[Vec<f64>],
        pinches: &[(usize, usize)],
        eps: f64,
        here: usize,
        y: usize,
        used: &mut Vec<bool>,
        acc: f64,
        best: &mut f64,
    ) {
        *best = best.min(acc + d[here][y]);
        for k in 0..pinches.len() {
            if used[k] {
                continue;
            }
            used[k] = true;
            let (a, b) = pinches[k];
            let len = eps.min(d[a][b]);
            go(d, pinches, eps, b, y, used, acc + d[here][a] + len, best);
            go(d, pinches, eps, a, y, used, acc + d[here][b] + len, best);
            used[k] = false;
        }
    }
    let mut best = f64::INFINITY;
    go(d, pinches, eps, x, y, &mut vec![false; pinches.len()], 0.0, &mut best);
    Ok(best)
}
