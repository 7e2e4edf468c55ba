//! The Markovian LIFO queue, its blue/red colouring, and the embedding of the
//! w-queue into it by time changes.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::continuum::LaplaceExponent;
use crate::domain::{Jump, PiecewisePath, StepFunction, Weights};
use crate::error::{Error, Result};
use crate::queue_sampler::{height_process, LifoReplay, QueueEvent};

/// Atoms `(time, type)`; types are 1-based.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MarkedPointMeasure {
    pub atoms: Vec<(f64, usize)>,
    pub horizon: f64,
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

fn type_sampler(probs: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(probs).expect("positive type weights")
}

/// Unit-rate arrivals on `[0, horizon]` with i.i.d. types `w_j / sigma1`.
pub fn sample_marked_ppm<R: Rng + ?Sized>(w: &Weights, horizon: f64, rng: &mut R) -> MarkedPointMeasure {
    let types = type_sampler(&w.type_probabilities());
    let mut atoms = Vec::new();
    let mut t = exp1(rng);
    while t <= horizon {
        atoms.push((t, types.sample(rng) + 1));
        t += exp1(rng);
    }
    MarkedPointMeasure { atoms, horizon }
}

/// `X_t = -t + sum_k w_{J_k} 1{tau_k <= t}`; jump labels are atom indices (1-based).
pub fn markov_load(m: &MarkedPointMeasure, w: &Weights) -> Result<PiecewisePath> {
    let jumps = m
        .atoms
        .iter()
        .enumerate()
        .map(|(k, &(time, j))| Jump { time, size: w.weight(j), label: k + 1 })
        .collect();
    PiecewisePath::new(-1.0, jumps, m.horizon)
}

/// LIFO stack depth of a Markov-queue load.
pub fn markov_height(x: &PiecewisePath) -> Result<StepFunction> {
    height_process(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Colour {
    Blue,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Colouring {
    /// Per atom, in time order.
    pub colours: Vec<Colour>,
    /// Type already carried by an earlier blue client.
    pub repeat: Vec<bool>,
}

impl Colouring {
    pub fn blue_count(&self) -> usize {
        self.colours.iter().filter(|&&c| c == Colour::Blue).count()
    }
}

/// Colours the clients of a load path whose label `k` has type `types[k - 1]`.
pub fn colour_path(path: &PiecewisePath, types: &[usize], n: usize) -> Result<Colouring> {
    let m = path.jumps().len();
    let mut colours = vec![Colour::Blue; m];
    let mut repeat = vec![false; m];
    let mut blue_types = vec![false; n + 1];
    let mut replay = LifoReplay::new(path);
    while let Some(ev) = replay.next_event()? {
        if let QueueEvent::Arrival { label, parent, .. } = ev {
            let ty = types[label - 1];
            let k = label - 1;
            if blue_types[ty] {
                repeat[k] = true;
                colours[k] = Colour::Red;
            } else {
                // the idle server counts as blue
                colours[k] = if parent == 0 { Colour::Blue } else { colours[parent - 1] };
                if colours[k] == Colour::Blue {
                    blue_types[ty] = true;
                }
            }
        }
    }
    Ok(Colouring { colours, repeat })
}

pub fn colour_clients(m: &MarkedPointMeasure, w: &Weights) -> Result<Colouring> {
    let path = markov_load(m, w)?;
    let types: Vec<usize> = m.atoms.iter().map(|a| a.1).collect();
    colour_path(&path, &types, w.len())
}

/// `mu_w(k) = sum_j w_j^{k+1} e^{-w_j} / (sigma1 k!)` for `k <= kmax`, and the remaining mass.
pub fn offspring_pmf(w: &Weights, kmax: usize) -> (Vec<f64>, f64) {
    let mut pmf = vec![0.0; kmax + 1];
    for &x in w.as_slice() {
        // Poisson(x) pmf times x / sigma1, built by recursion.
        let mut term = (-x).exp() * x / w.sigma1();
        for (k, p) in pmf.iter_mut().enumerate() {
            if k > 0 {
                term *= x / k as f64;
            }
            *p += term;
        }
    }
    let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    (pmf, tail)
}

/// Offspring counts of the first `nodes` clients (in arrival order) of a
/// Markov queue started empty. The queue is simulated exactly up to the last
/// of those arrivals; clients still waiting then are finished with the
/// memoryless property: each later child's subtree ends a.s. and the parent
/// resumes with the same remaining work.
pub fn gw_children_census<R: Rng + ?Sized>(w: &Weights, nodes: usize, rng: &mut R) -> Result<Vec<u32>> {
    if w.sigma2() > w.sigma1() {
        return Err(Error::Supercritical { sigma1: w.sigma1(), sigma2: w.sigma2() });
    }
    if nodes == 0 {
        return Ok(Vec::new());
    }
    let types = type_sampler(&w.type_probabilities());
    let mut atoms = Vec::with_capacity(nodes);
    let mut t = 0.0;
    for _ in 0..nodes {
        t += exp1(rng);
        atoms.push((t, types.sample(rng) + 1));
    }
    let m = MarkedPointMeasure { atoms, horizon: t };
    let path = markov_load(&m, w)?;
    let mut children = vec![0u32; nodes + 1];
    let mut replay = LifoReplay::new(&path);
    while let Some(ev) = replay.next_event()? {
        if let QueueEvent::Arrival { parent, .. } = ev {
            children[parent] += 1;
        }
    }
    let stack = replay.stack().to_vec();
    let top_level = path.value_unchecked(t);
    for (i, e) in stack.iter().enumerate().rev() {
        let above = stack.get(i + 1).map_or(top_level, |n| n.level);
        let mut remaining = above - e.level;
        loop {
            let gap = exp1(rng);
            if gap >= remaining {
                break;
            }
            children[e.label] += 1;
            remaining -= gap;
        }
    }
    Ok(children[1..].to_vec())
}

/// `theta_t = t + gamma(A_t)` stored through the jump times of `A`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeChange {
    /// Jump times `a_1 < a_2 < ...` of `A` on the blue clock.
    pub a_times: Vec<f64>,
    /// `gammas[k] = gamma(A)` after `k` jumps; `gammas[0] = 0`; infinite from `T*` on.
    pub gammas: Vec<f64>,
    pub t_star: Option<f64>,
}

impl TimeChange {
    fn jumps_up_to(&self, t: f64) -> usize {
        self.a_times.partition_point(|&a| a <= t)
    }

    /// `theta_t`; `None` at or after `T*`.
    pub fn theta(&self, t: f64) -> Option<f64> {
        let g = self.gammas[self.jumps_up_to(t)];
        g.is_finite().then_some(t + g)
    }

    /// `theta_{t-}`.
    pub fn theta_left(&self, t: f64) -> Option<f64> {
        let g = self.gammas[self.a_times.partition_point(|&a| a < t)];
        g.is_finite().then_some(t + g)
    }

    /// Blue clock at global time `s`.
    pub fn lambda_b(&self, s: f64) -> f64 {
        // Blue stretch k starts at a_k + gamma_k (a_0 = 0).
        let start = |k: usize| if k == 0 { 0.0 } else { self.a_times[k - 1] + self.gammas[k] };
        let (mut lo, mut hi) = (0usize, self.a_times.len());
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if start(mid) <= s {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let k = lo;
        match self.a_times.get(k) {
            Some(&a) if s >= a + self.gammas[k] => a,
            _ => s - self.gammas[k],
        }
    }

    pub fn lambda_r(&self, s: f64) -> f64 {
        s - self.lambda_b(s)
    }

    /// Red stretches `[theta_{a-}, theta_a)` in global time.
    pub fn red_intervals(&self) -> Vec<(f64, f64)> {
        self.a_times
            .iter()
            .enumerate()
            .map(|(k, &a)| (a + self.gammas[k], a + self.gammas[k + 1]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// All types seen and the w-queue empty again (or `T*`).
    QueueComplete,
    /// Build `X^w` on `[0, T]`.
    GlobalTime(f64),
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub weights: Weights,
    /// Atoms of `X^b` on the blue clock.
    pub blue: MarkedPointMeasure,
    /// Atoms of `X^r` on the red clock.
    pub red: MarkedPointMeasure,
    /// `E^w_j`, infinite when type `j` was not observed.
    pub first_arrival: Vec<f64>,
    /// `Y^w`, built when every type was observed.
    pub y: Option<PiecewisePath>,
    /// Jumps `(time, size)` of `A^w`.
    pub a_jumps: Vec<(f64, f64)>,
    pub time_change: TimeChange,
    /// The mixed load `X^w`; label `k` has type `x_types[k - 1]`.
    pub x: PiecewisePath,
    pub x_types: Vec<usize>,
    pub x_from_blue: Vec<bool>,
    /// Largest root of `psi_w`.
    pub rho: f64,
}

struct RedState {
    clock: f64,
    value: f64,
}

struct RedLaws {
    plain: WeightedIndex<f64>,
    tilted: WeightedIndex<f64>,
    tilted_rate: f64,
}

fn red_until_passage<R: Rng + ?Sized>(
    w: &Weights,
    laws: &RedLaws,
    state: &mut RedState,
    target: f64,
    clock_cap: f64,
    atoms: &mut Vec<(f64, usize)>,
    rng: &mut R,
) -> bool {
    loop {
        let gap = exp1(rng) / laws.tilted_rate;
        let step = gap.min(state.value - target);
        if state.clock + step > clock_cap {
            state.value -= clock_cap - state.clock;
            state.clock = clock_cap;
            return false;
        }
        if state.value - gap <= target {
            state.clock += state.value - target;
            state.value = target;
            return true;
        }
        state.clock += gap;
        state.value -= gap;
        let j = laws.tilted.sample(rng) + 1;
        state.value += w.weight(j);
        atoms.push((state.clock, j));
    }
}

/// Untilted red path on `[clock, clock + span]` conditioned never to go below `floor`.
fn red_conditioned<R: Rng + ?Sized>(
    w: &Weights,
    laws: &RedLaws,
    rho: f64,
    state: &RedState,
    floor: f64,
    span: f64,
    rng: &mut R,
) -> Vec<(f64, usize)> {
    loop {
        let mut atoms = Vec::new();
        let (mut u, mut v) = (state.clock, state.value);
        let end = state.clock + span;
        let mut hit = false;
        loop {
            let gap = exp1(rng);
            let step = gap.min(end - u);
            if v - step <= floor {
                hit = true;
                break;
            }
            if u + gap > end {
                v -= end - u;
                break;
            }
            u += gap;
            v -= gap;
            let j = laws.plain.sample(rng) + 1;
            v += w.weight(j);
            atoms.push((u, j));
        }
        if !hit && rng.random::<f64>() < -(-rho * (v - floor)).exp_m1() {
            return atoms;
        }
    }
}

/// The blue and red queues, `Y^w`, `A^w`, the time change and `X^w`.
pub fn build_embedding<R: Rng + ?Sized>(w: &Weights, rng: &mut R, stop: Stop) -> Result<Embedding> {
    let n = w.len();
    let psi = LaplaceExponent::discrete(w);
    let rho = psi.largest_root();
    let nu = w.type_probabilities();
    let tilted: Vec<f64> = nu.iter().zip(w.as_slice()).map(|(p, x)| p * (-rho * x).exp()).collect();
    let laws = RedLaws {
        plain: type_sampler(&nu),
        tilted: type_sampler(&tilted),
        tilted_rate: tilted.iter().sum(),
    };
    let blue_types = type_sampler(&nu);

    let mut blue_atoms = Vec::new();
    let mut red_atoms = Vec::new();
    let mut first_arrival = vec![f64::INFINITY; n + 1];
    let mut seen = 0usize;
    let mut a_jumps = Vec::new();
    let mut tc = TimeChange { a_times: Vec::new(), gammas: vec![0.0], t_star: None };
    // (global time, size, type, from blue)
    let mut x_jumps: Vec<(f64, f64, usize, bool)> = Vec::new();
    let mut red = RedState { clock: 0.0, value: 0.0 };
    let mut a_level = 0.0;
    let mut t_end = f64::INFINITY;
    let mut blue_clock = 0.0;
    let mut x_horizon;

    loop {
        let tau = blue_clock + exp1(rng);
        let g = *tc.gammas.last().unwrap();
        match stop {
            Stop::QueueComplete if seen == n && tau > t_end => {
                blue_clock = t_end;
                x_horizon = if tc.t_star.is_none() { t_end + g } else { f64::NAN };
                break;
            }
            Stop::GlobalTime(t) if tc.t_star.is_none() && tau + g > t => {
                blue_clock = (t - g).max(blue_clock);
                x_horizon = t;
                break;
            }
            _ => {}
        }
        let j = blue_types.sample(rng) + 1;
        blue_atoms.push((tau, j));
        blue_clock = tau;
        let fresh = first_arrival[j].is_infinite();
        if fresh {
            first_arrival[j] = tau;
            seen += 1;
            if seen == n {
                t_end = w_queue_end(w, &first_arrival)?;
            }
        } else {
            a_jumps.push((tau, w.weight(j)));
        }
        if tc.t_star.is_some() {
            continue;
        }
        x_jumps.push((tau + g, w.weight(j), j, true));
        if fresh {
            continue;
        }
        tc.a_times.push(tau);
        let a_new = a_level + w.weight(j);
        if rng.random::<f64>() < (-rho * (a_new - a_level)).exp() {
            let from = red_atoms.len();
            // Past global time T the passage is irrelevant; critical passages have infinite mean.
            let cap = match stop {
                Stop::GlobalTime(t) => t - tau,
                Stop::QueueComplete => f64::INFINITY,
            };
            let passed = red_until_passage(w, &laws, &mut red, -a_new, cap, &mut red_atoms, rng);
            for &(u, ty) in &red_atoms[from..] {
                x_jumps.push((tau + u, w.weight(ty), ty, false));
            }
            if !passed {
                tc.gammas.push(f64::INFINITY);
                x_horizon = tau + red.clock;
                break;
            }
            tc.gammas.push(red.clock);
            a_level = a_new;
        } else {
            tc.t_star = Some(tau);
            tc.gammas.push(f64::INFINITY);
            match stop {
                Stop::GlobalTime(t) => {
                    if t > tau + g {
                        let span = t - tau - g;
                        let extra = red_conditioned(w, &laws, rho, &red, -a_new, span, rng);
                        for &(u, ty) in &extra {
                            x_jumps.push((tau + u, w.weight(ty), ty, false));
                        }
                        red_atoms.extend(extra);
                        red.clock += span;
                    }
                    x_horizon = t.max(tau + g);
                    break;
                }
                Stop::QueueComplete => {
                    // Y^w still needs every type; the blue clock keeps running.
                    x_horizon = tau + g;
                    if seen == n && tau > t_end {
                        break;
                    }
                }
            }
        }
    }
    if x_horizon.is_nan() {
        x_horizon = tc.t_star.unwrap() + tc.gammas[tc.gammas.len() - 2];
    }
    x_jumps.retain(|x| x.0 <= x_horizon);
    let mut red_horizon = red.clock;
    if let Stop::GlobalTime(t) = stop {
        red_horizon = red_horizon.min(tc.lambda_r(t));
        red_atoms.retain(|a| a.0 <= red_horizon);
    }
    let x_types: Vec<usize> = x_jumps.iter().map(|x| x.2).collect();
    let x_from_blue: Vec<bool> = x_jumps.iter().map(|x| x.3).collect();
    let jumps = x_jumps
        .iter()
        .enumerate()
        .map(|(k, x)| Jump { time: x.0, size: x.1, label: k + 1 })
        .collect();
    let x = PiecewisePath::new(-1.0, jumps, x_horizon)?;
    let y = if seen == n {
        let jumps = (1..=n)
            .map(|j| Jump { time: first_arrival[j], size: w.weight(j), label: j })
            .collect();
        Some(PiecewisePath::new(-1.0, jumps, t_end)?)
    } else {
        None
    };
    Ok(Embedding {
        weights: w.clone(),
        blue: MarkedPointMeasure { atoms: blue_atoms, horizon: blue_clock },
        red: MarkedPointMeasure { atoms: red_atoms, horizon: red_horizon },
        first_arrival: first_arrival[1..].to_vec(),
        y,
        a_jumps,
        time_change: tc,
        x,
        x_types,
        x_from_blue,
        rho,
    })
}

/// Last departure of the w-queue with the given first arrivals.
fn w_queue_end(w: &Weights, first: &[f64]) -> Result<f64> {
    let last = first[1..].iter().copied().fold(0.0, f64::max);
    let jumps = (1..=w.len())
        .map(|j| Jump { time: first[j], size: w.weight(j), label: j })
        .collect();
    let p = PiecewisePath::new(-1.0, jumps, last)?;
    Ok(last + p.value_unchecked(last) - p.final_infimum())
}

impl Embedding {
    /// Blue-clock horizon on which the identities can be checked.
    pub fn check_horizon(&self) -> f64 {
        let end = self.y.as_ref().map_or(self.blue.horizon, |y| y.horizon());
        match self.time_change.t_star {
            Some(t) => end.min(t),
            None => end,
        }
    }

    /// Rows `t, X, Y(Lambda_b), H, cal_H(Lambda_b)` at the breakpoints of `X^w`.
    pub fn to_csv(&self) -> Result<String> {
        let h = markov_height(&self.x)?;
        let y = self.y.as_ref();
        let cal_h = y.map(height_process).transpose()?;
        let mut out = String::from("t,X,Y,H,cal_H\n");
        let mut times: Vec<f64> = vec![0.0];
        times.extend(self.x.jumps().iter().map(|j| j.time));
        times.extend(h.times().iter().copied());
        times.push(self.x.horizon());
        times.sort_by(f64::total_cmp);
        times.dedup();
        for t in times {
            let b = self.time_change.lambda_b(t);
            let (yv, hv) = match (y, &cal_h) {
                (Some(y), Some(ch)) if b <= y.horizon() => {
                    (y.value_unchecked(b).to_string(), ch.eval(b).to_string())
                }
                _ => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{},{},{},{},{}", t, self.x.value_unchecked(t), yv, h.eval(t), hv);
        }
        Ok(out)
    }
}

/// Violation counts of the pathwise identities of one embedding.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EmbeddingCheck {
    pub points_checked: usize,
    pub y_vs_x: usize,
    pub height: usize,
    pub height_events: usize,
    pub a_jump: usize,
    pub colouring: usize,
    pub red_intervals: usize,
    pub inverse: usize,
    pub max_value_error: f64,
}

impl EmbeddingCheck {
    pub fn violations(&self) -> usize {
        self.y_vs_x + self.height + self.height_events + self.a_jump + self.colouring + self.red_intervals + self.inverse
    }

    pub fn merge(&mut self, o: &EmbeddingCheck) {
        self.points_checked += o.points_checked;
        self.y_vs_x += o.y_vs_x;
        self.height += o.height;
        self.height_events += o.height_events;
        self.a_jump += o.a_jump;
        self.colouring += o.colouring;
        self.red_intervals += o.red_intervals;
        self.inverse += o.inverse;
        self.max_value_error = self.max_value_error.max(o.max_value_error);
    }
}

const VALUE_TOL: f64 = 1e-9;

/// Checks `Y = X∘theta`, `cal_H = H∘theta`, the jump identity for A, colouring and
/// red-interval structure before `T*`. Needs a `QueueComplete` embedding.
pub fn check_embedding(e: &Embedding) -> Result<EmbeddingCheck> {
    let y = e
        .y
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("embedding stopped before every type arrived".into()))?;
    let tc = &e.time_change;
    let limit = e.check_horizon();
    let before = |t: f64| t <= limit && tc.t_star.is_none_or(|s| t < s);
    let mut c = EmbeddingCheck::default();

    let cal_h = height_process(y)?;
    let h = markov_height(&e.x)?;

    // Event times of Y, A and cal_H plus midpoints.
    let mut times: Vec<f64> = vec![0.0];
    times.extend(y.jumps().iter().map(|j| j.time));
    times.extend(tc.a_times.iter().copied());
    times.extend(cal_h.times().iter().copied());
    times.retain(|&t| before(t));
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mids: Vec<f64> = times.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    times.extend(mids);
    if let Some(&last) = times.iter().max_by(|a, b| a.total_cmp(b)) {
        if limit > last && before(limit) {
            times.push(0.5 * (last + limit));
        }
    }
    for &t in &times {
        let Some(th) = tc.theta(t) else { continue };
        c.points_checked += 1;
        let err = (y.value_unchecked(t) - e.x.value_unchecked(th)).abs();
        c.max_value_error = c.max_value_error.max(err);
        if err > VALUE_TOL * (1.0 + t) {
            c.y_vs_x += 1;
        }
        if (tc.lambda_b(th) - t).abs() > VALUE_TOL * (1.0 + t) {
            c.inverse += 1;
        }
    }

    // Height: compare at midpoints between merged breakpoints, and compare the
    // pulled-back jump events of H with those of cal_H.
    let mut pulled: Vec<(f64, i64)> = Vec::new();
    for k in 1..h.times().len() {
        let s = h.times()[k];
        let delta = i64::from(h.values()[k]) - i64::from(h.values()[k - 1]);
        let b = tc.lambda_b(s);
        if before(b) && s <= e.x.horizon() {
            pulled.push((b, delta));
        }
    }
    pulled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut net: Vec<(f64, i64)> = Vec::new();
    for (t, d) in pulled {
        match net.last_mut() {
            Some(last) if (t - last.0).abs() <= VALUE_TOL * (1.0 + t) => last.1 += d,
            _ => net.push((t, d)),
        }
    }
    net.retain(|x| x.1 != 0);
    let own: Vec<(f64, i64)> = (1..cal_h.times().len())
        .filter(|&k| before(cal_h.times()[k]))
        .map(|k| (cal_h.times()[k], i64::from(cal_h.values()[k]) - i64::from(cal_h.values()[k - 1])))
        .collect();
    // The horizon itself may or may not carry the final departure on each side.
    let trim = |v: &mut Vec<(f64, i64)>| {
        if v.last().is_some_and(|x| (x.0 - limit).abs() <= VALUE_TOL * (1.0 + limit)) {
            v.pop();
        }
    };
    let mut own = own;
    trim(&mut own);
    trim(&mut net);
    if own.len() != net.len()
        || own.iter().zip(&net).any(|(a, b)| a.1 != b.1 || (a.0 - b.0).abs() > VALUE_TOL * (1.0 + a.0))
    {
        c.height_events += 1;
    }
    let mut marks: Vec<f64> = own.iter().map(|x| x.0).chain(net.iter().map(|x| x.0)).collect();
    marks.push(0.0);
    marks.push(limit);
    marks.sort_by(f64::total_cmp);
    marks.dedup_by(|b, a| *b - *a <= VALUE_TOL * (1.0 + *a));
    for p in marks.windows(2) {
        let t = 0.5 * (p[0] + p[1]);
        if let Some(th) = tc.theta(t).filter(|_| before(t)) {
            if cal_h.eval(t) != h.eval(th) {
                c.height += 1;
            }
        }
    }

    // A-jumps: X^w jumps by the same amount at theta_{a-}.
    for (k, &(a, size)) in e.a_jumps.iter().enumerate() {
        if !before(a) || k >= tc.a_times.len() {
            continue;
        }
        let at = a + tc.gammas[k];
        let idx = e.x.jumps().partition_point(|j| j.time < at - VALUE_TOL);
        let ok = e.x.jumps().get(idx).is_some_and(|j| (j.time - at).abs() <= VALUE_TOL && j.size == size);
        if !ok {
            c.a_jump += 1;
        }
    }

    // Colouring of X^w versus the construction's notion of blue.
    let colouring = colour_path(&e.x, &e.x_types, e.weights.len())?;
    let mut seen = vec![false; e.weights.len() + 1];
    let mut blue_count = 0;
    for k in 0..e.x_types.len() {
        let ty = e.x_types[k];
        let already = seen[ty];
        let first = e.x_from_blue[k] && !already;
        if first {
            seen[ty] = true;
        }
        let expect = if first { Colour::Blue } else { Colour::Red };
        if colouring.colours[k] != expect || colouring.repeat[k] != already {
            c.colouring += 1;
        }
        if colouring.colours[k] == Colour::Blue {
            blue_count += 1;
        }
    }
    if tc.t_star.is_none() && blue_count != e.weights.len() {
        c.colouring += 1;
    }

    // Each red stretch opens with a repeat arrival that leaves exactly when it closes.
    let events = LifoReplay::new(&e.x).collect_events()?;
    let departure_of = |label: usize| {
        events.iter().find_map(|ev| match *ev {
            QueueEvent::Departure { time, label: l, .. } if l == label => Some(time),
            _ => None,
        })
    };
    for (k, (start, end)) in tc.red_intervals().into_iter().enumerate() {
        if tc.t_star.is_some_and(|s| tc.a_times[k] >= s) {
            continue;
        }
        let idx = e.x.jumps().partition_point(|j| j.time < start - VALUE_TOL);
        let Some(j) = e.x.jumps().get(idx) else {
            c.red_intervals += 1;
            continue;
        };
        let ok = (j.time - start).abs() <= VALUE_TOL
            && colouring.repeat[j.label - 1]
            && departure_of(j.label).is_some_and(|d| (d - end).abs() <= VALUE_TOL * (1.0 + end));
        if !ok {
            c.red_intervals += 1;
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::trial_rng;
    use proptest::prelude::*;

    fn w(v: &[f64]) -> Weights {
        Weights::new(v.to_vec()).unwrap()
    }

    #[test]
    fn colouring_rules() {
        let wt = w(&[1.0, 1.0]);
        // Type 1, then type 1 again during its service, then type 2 during the red client's service.
        let m = MarkedPointMeasure { atoms: vec![(0.1, 1), (0.3, 1), (0.5, 2)], horizon: 10.0 };
        let c = colour_clients(&m, &wt).unwrap();
        assert_eq!(c.colours, vec![Colour::Blue, Colour::Red, Colour::Red]);
        assert_eq!(c.repeat, vec![false, true, false]);
    }

    #[test]
    fn offspring_pmf_values() {
        let (pmf, tail) = offspring_pmf(&w(&[1.0, 1.0]), 30);
        let mut fact = 1.0;
        for (k, p) in pmf.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            assert!((p - (-1.0f64).exp() / fact).abs() < 1e-15);
        }
        assert!(tail < 1e-15);
        let wt = w(&[2.0, 1.0, 0.5, 0.25]);
        let (pmf, _) = offspring_pmf(&wt, 120);
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        assert!((mean - wt.sigma2() / wt.sigma1()).abs() < 1e-10);
    }

    #[test]
    fn load_moments() {
        let wt = w(&[2.0, 1.0, 0.5]);
        let t = 3.0;
        let trials = 40_000;
        let xs: Vec<f64> = (0..trials)
            .map(|i| {
                let m = sample_marked_ppm(&wt, t, &mut trial_rng(21, i));
                markov_load(&m, &wt).unwrap().value(t).unwrap()
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / trials as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean + wt.alpha() * t).abs() < 3.0 * se, "{mean}");
        let target = t * wt.sigma3() / wt.sigma1();
        // Variance of the sample variance, from the fourth moment.
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / trials as f64;
        let se_var = ((m4 - var * var) / trials as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se_var, "{var} vs {target}");
    }

    #[test]
    fn type_frequencies() {
        let wt = w(&[3.0, 2.0, 1.0]);
        let m = sample_marked_ppm(&wt, 100_000.0, &mut trial_rng(2, 0));
        let n = m.atoms.len() as f64;
        for j in 1..=3 {
            let p = wt.weight(j) / wt.sigma1();
            let f = m.atoms.iter().filter(|a| a.1 == j).count() as f64 / n;
            assert!((f - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt());
        }
    }

    #[test]
    fn census_rejects_supercritical() {
        let r = gw_children_census(&w(&[3.0, 2.0, 1.0]), 10, &mut trial_rng(0, 0));
        assert!(matches!(r, Err(Error::Supercritical { .. })));
    }

    #[test]
    fn census_mean() {
        let wt = w(&[1.0, 0.5, 0.5]);
        let counts = gw_children_census(&wt, 50_000, &mut trial_rng(4, 0)).unwrap();
        let n = counts.len() as f64;
        let mean = counts.iter().map(|&c| f64::from(c)).sum::<f64>() / n;
        let var = counts.iter().map(|&c| (f64::from(c) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - wt.sigma2() / wt.sigma1()).abs() < 3.0 * (var / n).sqrt());
    }

    #[test]
    fn blue_height_is_not_the_w_height() {
        let wt = w(&[1.0, 1.0, 1.0, 1.0]);
        let differs = (0..200).any(|i| {
            let e = build_embedding(&wt, &mut trial_rng(6, i), Stop::QueueComplete).unwrap();
            let y = e.y.as_ref().unwrap();
            let blue = markov_load(&e.blue, &wt).unwrap();
            let hb = markov_height(&blue).unwrap();
            let hy = height_process(y).unwrap();
            let t_max = y.horizon().min(blue.horizon());
            (0..400).any(|k| {
                let t = t_max * (k as f64 + 0.5) / 400.0;
                hb.eval(t) != hy.eval(t)
            })
        });
        assert!(differs);
    }

    #[test]
    fn time_change_inverse() {
        let tc = TimeChange { a_times: vec![1.0, 2.0], gammas: vec![0.0, 0.5, 1.5], t_star: None };
        assert_eq!(tc.theta(0.5), Some(0.5));
        assert_eq!(tc.theta(1.0), Some(1.5));
        assert_eq!(tc.theta_left(1.0), Some(1.0));
        assert_eq!(tc.lambda_b(1.2), 1.0);
        assert_eq!(tc.lambda_b(1.7), 1.2);
        assert_eq!(tc.lambda_b(3.0), 2.0);
        assert_eq!(tc.lambda_b(4.0), 2.5);
        assert_eq!(tc.red_intervals(), vec![(1.0, 1.5), (2.5, 3.5)]);
    }

    fn arb_weights() -> impl Strategy<Value = Weights> {
        prop::collection::vec(0.1f64..3.0, 2..10).prop_map(|v| Weights::from_unsorted(v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn embedding_identities(wt in arb_weights(), seed in any::<u64>()) {
            let e = build_embedding(&wt, &mut trial_rng(seed, 0), Stop::QueueComplete).unwrap();
            let c = check_embedding(&e).unwrap();
            prop_assert_eq!(c.violations(), 0, "{:?}", c);
        }

        #[test]
        fn lambda_is_monotone_and_lipschitz(wt in arb_weights(), seed in any::<u64>()) {
            let e = build_embedding(&wt, &mut trial_rng(seed, 1), Stop::GlobalTime(20.0)).unwrap();
            let tc = &e.time_change;
            let mut prev = (0.0, 0.0);
            for k in 1..=400 {
                let s = 20.0 * k as f64 / 400.0;
                let (b, r) = (tc.lambda_b(s), tc.lambda_r(s));
                prop_assert!(b >= prev.0 - 1e-12 && r >= prev.1 - 1e-12);
                prop_assert!(b - prev.0 <= 20.0 / 400.0 + 1e-12);
                prev = (b, r);
            }
        }
    }
}
