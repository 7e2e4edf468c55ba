use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

impl Criticality {
    /// Sign of `sigma2 - sigma1`.
    pub fn from_moments(sigma1: f64, sigma2: f64) -> Self {
        match sigma2.partial_cmp(&sigma1) {
            Some(std::cmp::Ordering::Greater) => Criticality::Supercritical,
            Some(std::cmp::Ordering::Equal) => Criticality::Critical,
            _ => Criticality::Subcritical,
        }
    }

    /// Continuum version: supercritical iff `alpha < 0`.
    pub fn from_alpha(alpha: f64) -> Self {
        if alpha < 0.0 {
            Criticality::Supercritical
        } else if alpha == 0.0 {
            Criticality::Critical
        } else {
            Criticality::Subcritical
        }
    }
}

/// Non-increasing positive weights, at least two of them. Client `j` (1-based)
/// has weight `w[j - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Weights {
    w: Vec<f64>,
    sigma: [f64; 3],
}

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::InvalidWeights(format!(
                "need at least 2 weights, got {}",
                w.len()
            )));
        }
        if let Some(x) = w.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidWeights(format!(
                "weights must be finite and positive, got {x}"
            )));
        }
        if let Some(i) = w.windows(2).position(|p| p[0] < p[1]) {
            return Err(Error::InvalidWeights(format!(
                "weights must be non-increasing (w[{}] = {} < w[{}] = {})",
                i,
                w[i],
                i + 1,
                w[i + 1]
            )));
        }
        let sigma = [
            compensated_sum(w.iter().copied()),
            compensated_sum(w.iter().map(|x| x * x)),
            compensated_sum(w.iter().map(|x| x * x * x)),
        ];
        Ok(Weights { w, sigma })
    }

    /// Sorts into non-increasing order before validating.
    pub fn from_unsorted(mut w: Vec<f64>) -> Result<Self> {
        w.sort_by(|a, b| b.total_cmp(a));
        Weights::new(w)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// Weight of client `j` (1-based).
    pub fn weight(&self, j: usize) -> f64 {
        self.w[j - 1]
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma[0]
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma[1]
    }

    pub fn sigma3(&self) -> f64 {
        self.sigma[2]
    }

    pub fn sigma_r(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma_r needs r > 0, got {r}")));
        }
        Ok(match r {
            1.0 => self.sigma[0],
            2.0 => self.sigma[1],
            3.0 => self.sigma[2],
            _ => compensated_sum(self.w.iter().map(|x| x.powf(r))),
        })
    }

    pub fn classify(&self) -> Criticality {
        Criticality::from_moments(self.sigma1(), self.sigma2())
    }

    /// Drift `1 - sigma2/sigma1` of the Markovian load.
    pub fn alpha(&self) -> f64 {
        1.0 - self.sigma2() / self.sigma1()
    }

    /// Type probabilities `w_j / sigma1`.
    pub fn type_probabilities(&self) -> Vec<f64> {
        self.w.iter().map(|x| x / self.sigma1()).collect()
    }

    /// `1 - exp(-w_i w_j / sigma1)`, 1-based labels.
    pub fn edge_probability(&self, i: usize, j: usize) -> f64 {
        -(-self.weight(i) * self.weight(j) / self.sigma1()).exp_m1()
    }
}

impl std::str::FromStr for Weights {
    type Err = Error;

    /// Comma or whitespace separated list; sorted on parse.
    fn from_str(s: &str) -> Result<Self> {
        let w = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad weight {t:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Weights::from_unsorted(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
    /// Client or atom label (1-based); 0 when unused.
    pub label: usize,
}

/// Càdlàg path `start + drift * t + sum of jumps up to t` on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePath {
    drift: f64,
    jumps: Vec<Jump>,
    horizon: f64,
    /// `before[k]` = sum of jump sizes strictly before jump k; one extra entry for the total.
    before: Vec<f64>,
    /// `prefix_min[k]` = infimum over `[0, time_k]` (jump k included).
    prefix_min: Vec<f64>,
}

impl PiecewisePath {
    /// Jumps must have strictly increasing times in `[0, horizon]` and positive sizes.
    pub fn new(drift: f64, mut jumps: Vec<Jump>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) || !drift.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bad path parameters: drift {drift}, horizon {horizon}"
            )));
        }
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        for pair in jumps.windows(2) {
            if pair[0].time == pair[1].time {
                return Err(Error::Collision(pair[0].time));
            }
        }
        for j in &jumps {
            if !(j.size > 0.0 && j.size.is_finite()) {
                return Err(Error::InvalidArgument(format!("jump size {} not positive", j.size)));
            }
            if !(0.0..=horizon).contains(&j.time) {
                return Err(Error::OutOfRange { t: j.time, horizon });
            }
        }
        let mut before = Vec::with_capacity(jumps.len() + 1);
        let mut acc = 0.0;
        for j in &jumps {
            before.push(acc);
            acc += j.size;
        }
        before.push(acc);

        let mut prefix_min = Vec::with_capacity(jumps.len());
        let mut m = 0.0f64;
        let mut last_value = 0.0f64;
        for (k, j) in jumps.iter().enumerate() {
            let left = drift * j.time + before[k];
            m = m.min(last_value).min(left);
            last_value = left + j.size;
            m = m.min(last_value);
            prefix_min.push(m);
        }
        Ok(PiecewisePath { drift, jumps, horizon, before, prefix_min })
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn check(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::OutOfRange { t, horizon: self.horizon })
        }
    }

    /// Number of jumps with time `<= t`.
    pub fn jumps_up_to(&self, t: f64) -> usize {
        self.jumps.partition_point(|j| j.time <= t)
    }

    /// Number of jumps with time `< t`.
    pub fn jumps_before(&self, t: f64) -> usize {
        self.jumps.partition_point(|j| j.time < t)
    }

    /// Value right after jump `k`.
    pub fn value_at_jump(&self, k: usize) -> f64 {
        self.drift * self.jumps[k].time + self.before[k + 1]
    }

    /// Left limit at jump `k`.
    pub fn left_at_jump(&self, k: usize) -> f64 {
        self.drift * self.jumps[k].time + self.before[k]
    }

    /// Unchecked evaluation, also valid past the horizon (extends the drift).
    pub fn value_unchecked(&self, t: f64) -> f64 {
        self.drift * t + self.before[self.jumps_up_to(t)]
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.value_unchecked(t))
    }

    pub fn value_left(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.drift * t + self.before[self.jumps_before(t)])
    }

    /// Exact running infimum over `[0, t]`.
    pub fn infimum(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.infimum_unchecked(t))
    }

    pub fn infimum_unchecked(&self, t: f64) -> f64 {
        let k = self.jumps_up_to(t);
        let now = self.value_unchecked(t);
        if k == 0 {
            0.0f64.min(now)
        } else {
            // Linear since the last jump: endpoints suffice.
            self.prefix_min[k - 1].min(now)
        }
    }

    /// Infimum over the whole horizon.
    pub fn final_infimum(&self) -> f64 {
        self.infimum_unchecked(self.horizon)
    }

    /// Rows `time,value_left,value_right` at 0, each jump, and the horizon.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,value_left,value_right\n");
        let _ = writeln!(out, "0,0,{}", self.value_unchecked(0.0));
        for (k, j) in self.jumps.iter().enumerate() {
            if j.time == 0.0 {
                continue;
            }
            let _ = writeln!(out, "{},{},{}", j.time, self.left_at_jump(k), self.value_at_jump(k));
        }
        let h = self.horizon;
        let _ = writeln!(out, "{},{},{}", h, self.drift * h + self.before[self.jumps_before(h)], self.value_unchecked(h));
        out
    }
}

/// Right-continuous step function on `[0, horizon]`: `values[i]` on `[times[i], times[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction<T = u32> {
    times: Vec<f64>,
    values: Vec<T>,
    horizon: f64,
}

impl<T: Copy + PartialEq> StepFunction<T> {
    /// `times` must start at 0 and be strictly increasing; consecutive equal values are merged.
    pub fn new(times: Vec<f64>, values: Vec<T>, horizon: f64) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidArgument("step function needs matching, non-empty breakpoints".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument("first breakpoint must be 0".into()));
        }
        if times.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidArgument("breakpoints must be strictly increasing".into()));
        }
        let mut t2 = Vec::with_capacity(times.len());
        let mut v2: Vec<T> = Vec::with_capacity(values.len());
        for (t, v) in times.into_iter().zip(values) {
            if v2.last() == Some(&v) {
                continue;
            }
            t2.push(t);
            v2.push(v);
        }
        Ok(StepFunction { times: t2, values: v2, horizon })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Index of the piece containing `t`.
    pub fn piece(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> T {
        self.values[self.piece(t)]
    }

    /// Left limit at `t`.
    pub fn eval_left(&self, t: f64) -> T {
        let i = self.times.partition_point(|&s| s < t);
        self.values[i.saturating_sub(1)]
    }
}

impl<T: Copy + PartialEq + std::fmt::Display> StepFunction<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }
}
