//! Monte Carlo checks of excursion and extinction formulas on grid paths.

use serde::Serialize;

use super::{v_of_a, ContinuumParams, FutureInfima, LaplaceExponent, LevySampler};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, run_trials, TrialRng};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceCheck {
    pub lambda: f64,
    pub estimate: f64,
    pub target: f64,
    pub std_error: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceReport {
    pub depth: f64,
    pub excursions: u64,
    pub capped: u64,
    pub checks: Vec<LaplaceCheck>,
}

struct Piece {
    depth: f64,
    sums: Vec<f64>,
    excursions: u64,
    capped: u64,
}

fn laplace_piece(
    sampler: &LevySampler,
    dt: f64,
    lambdas: &[f64],
    depth: f64,
    t_cap: f64,
    rng: &mut TrialRng,
) -> Piece {
    let mut sums = vec![0.0; lambdas.len()];
    let (mut excursions, mut capped) = (0, 0);
    let cap_steps = (t_cap / dt).ceil() as usize;
    let mut path = super::GridPath::new(dt, vec![0.0], Vec::new());
    let mut inf = 0.0;
    let mut last_min = 0usize;
    let mut k = 0usize;
    let mut shift = 0.0;
    let chunk = 1 << 16;
    while -inf < depth {
        let base = path.len() - 1;
        sampler.extend(&mut path, chunk, rng);
        for i in base + 1..path.len() {
            k += 1;
            let v = path.values[i] + shift;
            if v <= inf {
                let len = k - last_min;
                if len >= 2 {
                    excursions += 1;
                    let zeta = len as f64 * dt;
                    for (s, &l) in sums.iter_mut().zip(lambdas) {
                        *s += -(-l * zeta).exp_m1();
                    }
                }
                inf = v;
                last_min = k;
                if -inf >= depth {
                    break;
                }
            } else if k - last_min >= cap_steps {
                // Long excursion: it contributes 1 - e^{-l zeta} ~ 1; restart at the infimum.
                excursions += 1;
                capped += 1;
                for (s, &l) in sums.iter_mut().zip(lambdas) {
                    *s += -(-l * t_cap).exp_m1();
                }
                shift += inf - v;
                last_min = k;
            }
        }
        // Keep memory bounded; only the last value matters.
        let last = *path.values.last().unwrap() + shift;
        shift = 0.0;
        path = super::GridPath::new(dt, vec![last], Vec::new());
    }
    Piece { depth: -inf, sums, excursions, capped }
}

/// Estimates `N[1 - e^{-l zeta}]` by `x^{-1} sum_i (1 - e^{-l zeta_i})` over the
/// excursions above the infimum until depth `x = pieces * depth`, split into
/// independent pieces. Excursions longer than `60 / min(l)` are counted as 1.
pub fn excursion_laplace_check(
    p: &ContinuumParams,
    lambdas: &[f64],
    depth: f64,
    pieces: usize,
    seed: u64,
    workers: usize,
) -> Result<LaplaceReport> {
    if p.alpha < 0.0 {
        return Err(Error::InvalidArgument("excursion check needs (sub)critical parameters".into()));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) || pieces < 2 {
        return Err(Error::InvalidArgument("need positive lambdas and at least two pieces".into()));
    }
    let psi = LaplaceExponent::new(p)?;
    let sampler = LevySampler::new(p)?;
    let t_cap = 60.0 / lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let runs = run_trials(derive_seed(seed, "excursion-laplace"), pieces, workers, |_, rng| {
        laplace_piece(&sampler, p.dt, lambdas, depth, t_cap, rng)
    });
    let total_depth: f64 = runs.iter().map(|r| r.depth).sum();
    let mut checks = Vec::new();
    for (i, &l) in lambdas.iter().enumerate() {
        let rates: Vec<f64> = runs.iter().map(|r| r.sums[i] / r.depth).collect();
        let estimate = runs.iter().map(|r| r.sums[i]).sum::<f64>() / total_depth;
        let mean = rates.iter().sum::<f64>() / pieces as f64;
        let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (pieces - 1) as f64;
        let target = psi.inverse(l)?;
        checks.push(LaplaceCheck {
            lambda: l,
            estimate,
            target,
            std_error: (var / pieces as f64).sqrt(),
            rel_error: (estimate - target).abs() / target,
        });
    }
    Ok(LaplaceReport {
        depth: total_depth,
        excursions: runs.iter().map(|r| r.excursions).sum(),
        capped: runs.iter().map(|r| r.capped).sum(),
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionCheck {
    pub x: f64,
    pub a: f64,
    pub estimate: f64,
    pub target: f64,
    pub std_error: f64,
    pub trials: u64,
}

/// Estimates `P(sup_{[0, gamma_x]} H <= a)` with `H = (2 / beta) Leb{I_t^s}` and
/// compares it with `exp(-x v(a))`.
pub fn extinction_check(
    p: &ContinuumParams,
    x: f64,
    a: f64,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<ExtinctionCheck> {
    if !(p.beta > 0.0) {
        return Err(Error::InvalidArgument("extinction check uses the beta > 0 height estimator".into()));
    }
    let v = v_of_a(p, a)?;
    let sampler = LevySampler::new(p)?;
    let dt = p.dt;
    let hits = run_trials(derive_seed(seed, "extinction"), trials as usize, workers, |_, rng| {
        let mut path = super::GridPath::new(dt, vec![0.0], Vec::new());
        let mut fi = FutureInfima::new(0.0);
        let mut inf: f64 = 0.0;
        loop {
            let base = path.len() - 1;
            sampler.extend(&mut path, 4096, rng);
            for i in base + 1..path.len() {
                let value = path.values[i];
                let h = 2.0 / p.beta * fi.step(value, path.cell_jump(i));
                if h > a {
                    return false;
                }
                inf = inf.min(value);
                if -inf >= x {
                    return true;
                }
            }
            let last = *path.values.last().unwrap();
            path = super::GridPath::new(dt, vec![last], Vec::new());
        }
    });
    let n = trials as f64;
    let estimate = hits.iter().filter(|&&h| h).count() as f64 / n;
    Ok(ExtinctionCheck {
        x,
        a,
        estimate,
        target: (-x * v).exp(),
        std_error: (estimate * (1.0 - estimate) / n).sqrt(),
        trials,
    })
}
