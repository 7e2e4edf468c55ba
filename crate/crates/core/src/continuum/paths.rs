//! Grid simulation of the blue and red processes, the time change and the
//! height process of the assembled path.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::Serialize;

use super::ContinuumParams;
use crate::error::{Error, Result};

/// Values on the grid `k * dt`, with the registered jumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPath {
    pub dt: f64,
    pub values: Vec<f64>,
    /// `(time, size)`, sorted by time.
    pub jumps: Vec<(f64, f64)>,
    /// Total jump size in `((k - 1) dt, k dt]`; zero at `k = 0`.
    cell_jumps: Vec<f64>,
    /// Minimum of the continuous part over cell `k` (jumps sit at the cell end).
    cell_mins: Vec<f64>,
}

impl GridPath {
    pub fn new(dt: f64, values: Vec<f64>, jumps: Vec<(f64, f64)>) -> Self {
        let mut cell_jumps = vec![0.0; values.len()];
        for &(t, s) in &jumps {
            let k = ((t / dt).ceil() as usize).clamp(1, values.len().max(2) - 1);
            if k < cell_jumps.len() {
                cell_jumps[k] += s;
            }
        }
        // Without finer information the path is linear inside a cell.
        let cell_mins = (0..values.len())
            .map(|k| if k == 0 { values[0] } else { values[k - 1].min(values[k] - cell_jumps[k]) })
            .collect();
        GridPath { dt, values, jumps, cell_jumps, cell_mins }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        (self.values.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn cell_jump(&self, k: usize) -> f64 {
        self.cell_jumps[k]
    }

    pub fn cell_min(&self, k: usize) -> f64 {
        self.cell_mins[k]
    }

    /// Infimum of the path over `[0, m dt]`, cell minima included.
    pub fn infimum(&self, m: usize) -> f64 {
        self.cell_mins[..=m].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Grid index of time `t` (rounded to the nearest grid point).
    pub fn index(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.values.len() - 1)
    }

    pub fn at(&self, t: f64) -> f64 {
        self.values[self.index(t)]
    }

    pub fn running_min(&self) -> Vec<f64> {
        let mut m = f64::INFINITY;
        self.values
            .iter()
            .map(|&v| {
                m = m.min(v);
                m
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", k as f64 * self.dt, v);
        }
        out
    }
}

/// Increment generator for `X^b` (or `X^r`): drift, Brownian part, head jumps.
#[derive(Debug, Clone)]
pub struct LevySampler {
    drift: f64,
    sigma: f64,
    sizes: Vec<f64>,
    rate: f64,
    pick: Option<WeightedIndex<f64>>,
    dt: f64,
}

impl LevySampler {
    pub fn new(p: &ContinuumParams) -> Result<Self> {
        p.validate()?;
        let sizes = p.head();
        let rates: Vec<f64> = sizes.iter().map(|c| p.kappa * c).collect();
        let rate: f64 = rates.iter().sum();
        let pick = if rate > 0.0 {
            Some(WeightedIndex::new(&rates).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        } else {
            None
        };
        let sigma2_head: f64 = sizes.iter().map(|c| c * c).sum();
        Ok(LevySampler { drift: -p.alpha - p.kappa * sigma2_head, sigma: p.beta.sqrt(), sizes, rate, pick, dt: p.dt })
    }

    fn jumps_in<R: Rng + ?Sized>(&self, from: f64, to: f64, rng: &mut R) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        let Some(pick) = &self.pick else { return out };
        let mut t = from;
        loop {
            let e: f64 = Exp1.sample(rng);
            t += e / self.rate;
            if t > to {
                return out;
            }
            out.push((t, pick.sample(rng)));
        }
    }

    /// Appends `steps` grid steps to `path`.
    pub fn extend<R: Rng + ?Sized>(&self, path: &mut GridPath, steps: usize, rng: &mut R) {
        let start = path.values.len() - 1;
        let t0 = start as f64 * self.dt;
        let jumps = self.jumps_in(t0, t0 + steps as f64 * self.dt, rng);
        let mut cells = vec![0.0; steps + 1];
        for &(t, j) in &jumps {
            let k = (((t - t0) / self.dt).ceil() as usize).clamp(1, steps);
            cells[k] += self.sizes[j];
            path.jumps.push((t, self.sizes[j]));
        }
        let sd = self.sigma * self.dt.sqrt();
        let mut v = path.values[start];
        for cell in cells.iter().skip(1) {
            let z: f64 = StandardNormal.sample(rng);
            let a = v;
            let b = a + self.drift * self.dt + sd * z;
            // Minimum of the Brownian bridge from a to b, sampled exactly.
            let low = if sd > 0.0 {
                let u: f64 = 1.0 - rng.random::<f64>();
                0.5 * (a + b - ((a - b).powi(2) - 2.0 * sd * sd * u.ln()).sqrt())
            } else {
                a.min(b)
            };
            v = b + cell;
            path.values.push(v);
            path.cell_jumps.push(*cell);
            path.cell_mins.push(low);
        }
    }
}

/// `X` on `[0, p.horizon]`.
pub fn simulate_levy<R: Rng + ?Sized>(p: &ContinuumParams, rng: &mut R) -> Result<GridPath> {
    let s = LevySampler::new(p)?;
    let mut path = GridPath::new(p.dt, vec![0.0], Vec::new());
    s.extend(&mut path, (p.horizon / p.dt).round() as usize, rng);
    Ok(path)
}

/// `Y`, `A` and `X^b = Y + A` on a common grid.
#[derive(Debug, Clone, Serialize)]
pub struct YPath {
    pub y: GridPath,
    pub a: GridPath,
    pub xb: GridPath,
    /// `E_j` for the head sizes; infinite when not reached.
    pub first_arrival: Vec<f64>,
}

/// Joint simulation of `(Y, A)`. Only the first jump of each size enters `Y`;
/// repeats go to `A`. The tail's `-kappa^2 sigma3(tail) t^2 / 2` mean
/// correction sits in `Y` and is returned to `A`, so `Y + A` is untouched.
pub fn simulate_y<R: Rng + ?Sized>(p: &ContinuumParams, rng: &mut R) -> Result<YPath> {
    let s = LevySampler::new(p)?;
    let steps = (p.horizon / p.dt).round() as usize;
    let jumps = s.jumps_in(0.0, steps as f64 * p.dt, rng);
    let mut first_arrival = vec![f64::INFINITY; s.sizes.len()];
    let mut y_cells = vec![0.0; steps + 1];
    let mut a_cells = vec![0.0; steps + 1];
    let (mut y_jumps, mut a_jumps, mut all) = (Vec::new(), Vec::new(), Vec::new());
    for &(t, j) in &jumps {
        let k = ((t / p.dt).ceil() as usize).clamp(1, steps);
        let c = s.sizes[j];
        all.push((t, c));
        if first_arrival[j].is_infinite() {
            first_arrival[j] = t;
            y_cells[k] += c;
            y_jumps.push((t, c));
        } else {
            a_cells[k] += c;
            a_jumps.push((t, c));
        }
    }
    let tail3 = p.tail_moment(3.0);
    let quad = 0.5 * p.kappa * (p.beta + p.kappa * tail3);
    let sd = s.sigma * p.dt.sqrt();
    let (mut y, mut a) = (vec![0.0; steps + 1], vec![0.0; steps + 1]);
    let (mut bm, mut yj, mut aj) = (0.0, 0.0, 0.0);
    for k in 1..=steps {
        let z: f64 = StandardNormal.sample(rng);
        bm += sd * z;
        yj += y_cells[k];
        aj += a_cells[k];
        let t = k as f64 * p.dt;
        let q = quad * t * t;
        y[k] = s.drift * t + bm + yj - q;
        a[k] = q + aj;
    }
    let xb: Vec<f64> = y.iter().zip(&a).map(|(u, v)| u + v).collect();
    Ok(YPath {
        y: GridPath::new(p.dt, y, y_jumps),
        a: GridPath::new(p.dt, a, a_jumps),
        xb: GridPath::new(p.dt, xb, all),
        first_arrival,
    })
}

/// `theta_k = k + g_k` in grid units, `g_k` the first passage index of `X^r` at or below `-A_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaBlue {
    pub g: Vec<usize>,
    /// First blue index with no passage (blue horizon when `None`).
    pub t_star: Option<usize>,
}

impl ThetaBlue {
    pub fn theta(&self, k: usize) -> usize {
        k + self.g[k]
    }

    /// Number of blue indices with a finite time change.
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// `Lambda^b(m) = min { k : theta_k >= m }`; `None` past the last `theta`.
    pub fn lambda_b(&self, m: usize) -> Option<usize> {
        let (mut lo, mut hi) = (0, self.g.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.theta(mid) < m {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        (lo < self.g.len()).then_some(lo)
    }
}

/// First passages of `xr` below `-a`. Errors with `ExtendAndRetry(level)` when
/// `xr` ends before a passage, unless `escaped` says the path left for good.
pub fn theta_blue(a: &GridPath, xr: &GridPath, escaped: bool) -> Result<ThetaBlue> {
    if a.values.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::InvalidArgument("A must be non-decreasing".into()));
    }
    let mut g = Vec::with_capacity(a.len());
    let mut idx = 0;
    for (k, &level) in a.values.iter().enumerate() {
        while idx < xr.len() && xr.values[idx] > -level {
            idx += 1;
        }
        if idx == xr.len() {
            if escaped {
                return Ok(ThetaBlue { g, t_star: Some(k) });
            }
            return Err(Error::ExtendAndRetry(level));
        }
        g.push(idx);
    }
    Ok(ThetaBlue { g, t_star: None })
}

/// Height-process estimators at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeightEstimates {
    pub occupation: f64,
    /// `(2 / beta) Leb{I_t^s}`; `None` when `beta = 0`.
    pub future_infima: Option<f64>,
    /// `#records / q(eps)`; `None` when `q(eps)` is too small.
    pub record_count: Option<f64>,
}

pub const MIN_Q: f64 = 1.0;

/// `q(eps) = sum_j kappa c_j (c_j - eps)_+` over the simulated sizes.
pub fn q_eps(p: &ContinuumParams, eps: f64) -> f64 {
    p.head().iter().map(|c| p.kappa * c * (c - eps).max(0.0)).sum()
}

/// The three estimators at grid index `m`, by one backward scan.
pub fn height_estimators(x: &GridPath, p: &ContinuumParams, m: usize, eps: f64) -> Result<HeightEstimates> {
    if m >= x.len() {
        return Err(Error::OutOfRange { t: m as f64 * x.dt, horizon: x.horizon() });
    }
    let mut cur = x.values[m];
    // Future infimum of the continuous path, cell minima included.
    let mut cur_cont = x.values[m];
    let (mut occ, mut leb, mut records) = (0.0, 0.0, 0usize);
    for k in (0..=m).rev() {
        cur = cur.min(x.values[k]);
        if k < m {
            cur_cont = cur_cont.min(x.cell_min(k + 1)).min(x.values[k]);
        }
        if k < m && x.values[k] - cur_cont <= eps {
            occ += x.dt;
        }
        if k > 0 {
            let jump = x.cell_jump(k);
            let pre = x.values[k] - jump;
            if jump > 0.0 && pre + eps < cur {
                records += 1;
            }
            // continuous part first, then the jump
            leb += (pre.min(cur) - x.values[k - 1]).max(0.0);
            cur = cur.min(pre);
        }
    }
    let q = q_eps(p, eps);
    Ok(HeightEstimates {
        occupation: occ / eps,
        future_infima: (p.beta > 0.0).then(|| 2.0 / p.beta * leb),
        record_count: (q >= MIN_Q).then(|| records as f64 / q),
    })
}

/// Streaming `Leb{I_t^s : s <= t}`: a stack of the disjoint intervals making
/// up the set of future infima. Within a cell the continuous move comes first,
/// then the jump.
#[derive(Debug, Clone)]
pub struct FutureInfima {
    stack: Vec<(f64, f64)>,
    total: f64,
    last: f64,
}

impl FutureInfima {
    pub fn new(x0: f64) -> Self {
        FutureInfima { stack: vec![(x0, x0)], total: 0.0, last: x0 }
    }

    /// Advances to value `x` whose cell carries jumps of total size `jump`; returns the measure.
    pub fn step(&mut self, x: f64, jump: f64) -> f64 {
        let v = x - jump;
        if v >= self.last {
            let top = self.stack.last_mut().expect("non-empty stack");
            self.total += v - top.1;
            top.1 = v;
        } else {
            while self.stack.last().is_some_and(|&(lo, _)| lo > v) {
                let (lo, hi) = self.stack.pop().unwrap();
                self.total -= hi - lo;
            }
            match self.stack.last_mut() {
                Some(top) if top.1 >= v => {
                    self.total -= top.1 - v;
                    top.1 = v;
                }
                _ => self.stack.push((v, v)),
            }
            if self.stack.len() == 1 && self.stack[0].0 == self.stack[0].1 {
                self.total = 0.0;
            }
        }
        if jump > 0.0 {
            self.stack.push((x, x));
        }
        self.last = x;
        self.total
    }

    pub fn measure(&self) -> f64 {
        self.total
    }
}

/// Height of `x` at every grid point: the future-infima estimator when
/// `beta > 0`, otherwise the record count at level `eps`.
pub fn height_path(x: &GridPath, p: &ContinuumParams, eps: f64) -> Result<Vec<f64>> {
    if p.beta > 0.0 {
        let mut fi = FutureInfima::new(x.values[0]);
        let mut out = Vec::with_capacity(x.len());
        out.push(0.0);
        for k in 1..x.len() {
            out.push(2.0 / p.beta * fi.step(x.values[k], x.cell_jump(k)));
        }
        Ok(out)
    } else {
        let q = q_eps(p, eps);
        if q < MIN_Q {
            return Err(Error::InvalidArgument(format!("q({eps}) = {q} is too small for the record estimator")));
        }
        // Pre-jump levels of the current records; increasing along the stack.
        let mut stack: Vec<f64> = Vec::new();
        let mut out = Vec::with_capacity(x.len());
        out.push(0.0);
        for k in 1..x.len() {
            let jump = x.cell_jump(k);
            let v = x.values[k] - jump;
            while stack.last().is_some_and(|&pre| pre + eps >= v) {
                stack.pop();
            }
            if jump > eps {
                stack.push(v);
            }
            out.push(stack.len() as f64 / q);
        }
        Ok(out)
    }
}

/// The blue/red assembly of one continuum path.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuumEmbedding {
    pub ya: YPath,
    pub xr: GridPath,
    pub theta: ThetaBlue,
    /// `X = X^b(Lambda^b) + X^r(Lambda^r)` on the global grid up to the last `theta`.
    pub x: GridPath,
    /// `H` of `x`.
    pub h: Vec<f64>,
    /// `cal_H_k = H(theta_k)` for blue indices before `T*`.
    pub cal_h: Vec<f64>,
}

/// Assembles `X` from the blue and red paths. At a passage point `X^r` is
/// recorded at the exact passage level: the process has no negative jumps, so
/// the grid overshoot is a discretisation artifact.
pub fn assemble(ya: &YPath, xr: &GridPath, theta: &ThetaBlue) -> GridPath {
    let xb = &ya.xb;
    let n = theta.len();
    if n == 0 {
        return GridPath::new(xb.dt, vec![0.0], Vec::new());
    }
    let last = theta.theta(n - 1);
    let mut values = Vec::with_capacity(last + 1);
    let mut cells = vec![0.0; last + 1];
    let mut k = 0;
    for m in 0..=last {
        while theta.theta(k) < m {
            k += 1;
        }
        let r = m - k;
        values.push(if r == theta.g[k] { ya.y.values[k] } else { xb.values[k] + xr.values[r] });
        if m > 0 {
            let blue_step = k > 0 && theta.theta(k - 1) == m - 1;
            cells[m] = if blue_step { xb.cell_jump(k) } else { xr.cell_jump(r) };
        }
    }
    let jumps = cells
        .iter()
        .enumerate()
        .filter(|c| *c.1 > 0.0)
        .map(|(m, &s)| (m as f64 * xb.dt, s))
        .collect();
    GridPath::new(xb.dt, values, jumps)
}

/// Simulates `(Y, A)`, extends `X^r` until every passage is resolved (or the
/// red path escapes), and builds `X`, `H` and `cal_H`.
pub fn continuum_embedding<R: Rng + ?Sized>(p: &ContinuumParams, eps: f64, rng: &mut R) -> Result<ContinuumEmbedding> {
    let ya = simulate_y(p, rng)?;
    let sampler = LevySampler::new(p)?;
    let rho = super::LaplaceExponent::new(p)?.largest_root();
    let mut xr = GridPath::new(p.dt, vec![0.0], Vec::new());
    let chunk = ya.a.len().max(16);
    let theta = loop {
        // Escape: ten mean depths above the running minimum after a long stretch.
        let escaped = rho > 0.0 && {
            let min = xr.values.iter().copied().fold(f64::INFINITY, f64::min);
            xr.values.last().unwrap() - min > 20.0 / rho && xr.len() > 4 * chunk
        };
        match theta_blue(&ya.a, &xr, escaped) {
            Ok(t) => break t,
            Err(Error::ExtendAndRetry(_)) => sampler.extend(&mut xr, chunk, rng),
            Err(e) => return Err(e),
        }
    };
    let x = assemble(&ya, &xr, &theta);
    let h = height_path(&x, p, eps)?;
    let cal_h = (0..theta.len()).map(|k| h[theta.theta(k)]).collect();
    Ok(ContinuumEmbedding { ya, xr, theta, x, h, cal_h })
}

/// Pathwise diagnostics of one continuum embedding.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ContinuumCheck {
    pub points: usize,
    pub max_y_vs_x: f64,
    pub inverse_failures: usize,
    pub zero_set_mismatches: usize,
    pub max_cal_h_increment: f64,
}

pub fn check_continuum(e: &ContinuumEmbedding) -> ContinuumCheck {
    let y = &e.ya.y.values;
    let mut c = ContinuumCheck { points: e.theta.len(), ..Default::default() };
    let mut j = f64::INFINITY;
    for k in 0..e.theta.len() {
        let m = e.theta.theta(k);
        c.max_y_vs_x = c.max_y_vs_x.max((y[k] - e.x.values[m]).abs());
        if e.theta.lambda_b(m) != Some(k) {
            c.inverse_failures += 1;
        }
        j = j.min(y[k]);
        if (y[k] == j) != (e.cal_h[k] == 0.0) {
            c.zero_set_mismatches += 1;
        }
        if k > 0 {
            c.max_cal_h_increment = c.max_cal_h_increment.max((e.cal_h[k] - e.cal_h[k - 1]).abs());
        }
    }
    c
}

/// Continuum pinch `(s, t, y)`: `s = inf { s <= t : inf_{[s,t]} (Y - J) > y }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuumPinch {
    pub s: f64,
    pub t: f64,
    pub y: f64,
}

/// Excursion intervals `[l, r]` of `Y - J` above zero, in grid indices.
pub fn grid_excursions(y: &GridPath) -> Vec<(usize, usize)> {
    let j = y.running_min();
    let mut out = Vec::new();
    let mut start = None;
    for k in 0..y.len() {
        let up = y.values[k] > j[k];
        match (up, start) {
            (true, None) => start = Some(k.saturating_sub(1)),
            (false, Some(l)) => {
                out.push((l, k));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(l) = start {
        out.push((l, y.len() - 1));
    }
    out
}

/// Poisson points of intensity `kappa 1{0 < y < Y_t - J_t} dt dy`, grouped by excursion.
pub fn sample_continuum_pinches<R: Rng + ?Sized>(
    y: &GridPath,
    kappa: f64,
    rng: &mut R,
) -> Result<Vec<Vec<ContinuumPinch>>> {
    let j = y.running_min();
    let gap: Vec<f64> = y.values.iter().zip(&j).map(|(v, m)| v - m).collect();
    let excursions = grid_excursions(y);
    let mut out = vec![Vec::new(); excursions.len()];
    let cells: Vec<f64> = gap[..gap.len().saturating_sub(1)].iter().map(|g| g * y.dt).collect();
    let area: f64 = cells.iter().sum();
    if area <= 0.0 {
        return Ok(out);
    }
    let count: f64 = Poisson::new(kappa * area).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(rng);
    let pick = WeightedIndex::new(&cells).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut pinches = Vec::with_capacity(count as usize);
    for _ in 0..count as usize {
        let k = pick.sample(rng);
        let level = rng.random::<f64>() * gap[k];
        let mut s = k;
        while s > 0 && gap[s - 1] > level {
            s -= 1;
        }
        pinches.push((s, k, level));
    }
    pinches.sort_by(|a, b| a.1.cmp(&b.1).then(a.2.total_cmp(&b.2)));
    for (s, k, level) in pinches {
        let e = excursions.partition_point(|x| x.1 <= k);
        match excursions.get(e) {
            Some(&(l, r)) if l <= s && s <= k && k < r => {
                out[e].push(ContinuumPinch { s: s as f64 * y.dt, t: k as f64 * y.dt, y: level })
            }
            _ => return Err(Error::Invariant(format!("pinch at index {k} leaves its excursion"))),
        }
    }
    Ok(out)
}
