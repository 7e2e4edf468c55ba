//! Growth exponents of `J(x) = sum_j kappa c_j^2 (1 ∧ c_j / x)` and the dimensions they give.

use serde::Serialize;

use super::{hurwitz_tail, ContinuumParams, JumpRule};
use crate::error::Result;

/// `sum_{j=1}^{m} j^{-s}` for real `m >= 0` (floor taken).
fn partial_zeta(s: f64, m: f64) -> f64 {
    let m = m.floor();
    if m <= 1000.0 {
        return (1..=m as u64).map(|j| (j as f64).powf(-s)).sum();
    }
    let a = 50.0;
    let head: f64 = (1..50u64).map(|j| (j as f64).powf(-s)).sum();
    let f = |t: f64| t.powf(-s);
    let d1 = |t: f64| -s * t.powf(-s - 1.0);
    let d3 = |t: f64| -s * (s + 1.0) * (s + 2.0) * t.powf(-s - 3.0);
    let integral = if (s - 1.0).abs() < 1e-12 {
        (m / a).ln()
    } else {
        (m.powf(1.0 - s) - a.powf(1.0 - s)) / (1.0 - s)
    };
    head + integral + 0.5 * (f(a) + f(m)) + (d1(m) - d1(a)) / 12.0 - (d3(m) - d3(a)) / 720.0
}

/// `J(x)` over the full sequence.
pub fn j_function(p: &ContinuumParams, x: f64) -> f64 {
    match &p.c {
        JumpRule::Explicit(c) => p.kappa * c.iter().map(|&cj| cj * cj * (cj / x).min(1.0)).sum::<f64>(),
        JumpRule::PowerLaw { q, rho } => {
            // c_j >= x iff j <= (q / x)^rho
            let m = (q / x).powf(*rho).floor();
            let big = q * q * partial_zeta(2.0 / rho, m);
            let small = q.powi(3) / x * hurwitz_tail(3.0 / rho, m + 1.0);
            p.kappa * (big + small)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractalExponents {
    /// `None` when `beta > 0` (dimensions are 2 regardless).
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    /// Range of `1 - slope` over the fitted window.
    pub interval: Option<(f64, f64)>,
    pub dim_h: Option<f64>,
    pub dim_p: Option<f64>,
    /// `rho - 1` for the power-law rule.
    pub analytic: Option<f64>,
    pub converged: bool,
    /// `(x, local slope of log J)` on the geometric grid.
    pub slopes: Vec<(f64, f64)>,
}

/// Points per decade and decades of the geometric grid, and how many of the
/// smallest decades form the fitted window.
const PER_DECADE: usize = 8;
const DECADES: (i32, i32) = (-1, -10);
const WINDOW_DECADES: usize = 3;
const SPREAD_TOL: f64 = 0.02;

fn dim(g: f64) -> Option<f64> {
    (g > 1.0).then(|| g / (g - 1.0))
}

pub fn fractal_exponents(p: &ContinuumParams) -> Result<FractalExponents> {
    p.validate()?;
    let analytic = match p.c {
        JumpRule::PowerLaw { rho, .. } => Some(rho - 1.0),
        JumpRule::Explicit(_) => None,
    };
    if p.beta != 0.0 {
        return Ok(FractalExponents {
            gamma: None,
            eta: None,
            interval: None,
            dim_h: Some(2.0),
            dim_p: Some(2.0),
            analytic,
            converged: true,
            slopes: Vec::new(),
        });
    }
    let n = (DECADES.0 - DECADES.1) as usize * PER_DECADE;
    let xs: Vec<f64> = (0..=n)
        .map(|i| 10f64.powf(f64::from(DECADES.0) - i as f64 / PER_DECADE as f64))
        .collect();
    let logs: Vec<f64> = xs.iter().map(|&x| j_function(p, x).ln()).collect();
    let slopes: Vec<(f64, f64)> = (1..xs.len())
        .map(|i| {
            let s = (logs[i] - logs[i - 1]) / (xs[i].ln() - xs[i - 1].ln());
            ((xs[i] * xs[i - 1]).sqrt(), s)
        })
        .collect();
    let window = &slopes[slopes.len() - WINDOW_DECADES * PER_DECADE..];
    let lo = window.iter().map(|s| -s.1).fold(f64::INFINITY, f64::min);
    let hi = window.iter().map(|s| -s.1).fold(f64::NEG_INFINITY, f64::max);
    let (gamma, eta) = (1.0 + lo.max(0.0), 1.0 + hi.max(0.0));
    let converged = hi - lo <= SPREAD_TOL;
    Ok(FractalExponents {
        gamma: converged.then_some(gamma),
        eta: converged.then_some(eta),
        interval: Some((gamma, eta)),
        dim_h: if converged { dim(gamma) } else { None },
        dim_p: if converged { dim(eta) } else { None },
        analytic,
        converged,
        slopes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(rho: f64) -> ContinuumParams {
        ContinuumParams { beta: 0.0, c: JumpRule::PowerLaw { q: 1.0, rho }, ..Default::default() }
    }

    #[test]
    fn partial_zeta_matches_direct() {
        let direct: f64 = (1..=200_000u64).map(|j| (j as f64).powf(-0.8)).sum();
        assert!((partial_zeta(0.8, 200_000.0) - direct).abs() < 1e-8 * direct);
    }

    #[test]
    fn j_matches_brute_force() {
        let p = power(2.5);
        let x = 0.05;
        let brute: f64 = (1..5_000_000u64)
            .map(|j| {
                let c = (j as f64).powf(-0.4);
                c * c * (c / x).min(1.0)
            })
            .sum::<f64>()
            + hurwitz_tail(1.2, 5_000_000.0) / x;
        assert!((j_function(&p, x) - brute).abs() < 1e-8 * brute);
    }

    #[test]
    fn brownian_dims_are_two() {
        let e = fractal_exponents(&ContinuumParams::brownian()).unwrap();
        assert_eq!((e.dim_h, e.dim_p), (Some(2.0), Some(2.0)));
    }

    #[test]
    fn power_law_dims() {
        let e = fractal_exponents(&power(2.5)).unwrap();
        assert!(e.converged);
        assert!((e.gamma.unwrap() - 1.5).abs() < 0.05 && (e.eta.unwrap() - 1.5).abs() < 0.05);
        assert!((e.dim_h.unwrap() - 3.0).abs() < 0.15);
        let e = fractal_exponents(&power(2.9)).unwrap();
        assert!((e.dim_h.unwrap() - 1.9 / 0.9).abs() < 0.05);
        assert_eq!(e.analytic, Some(1.9));
    }

    #[test]
    fn finite_list_has_no_dimension() {
        let p = ContinuumParams { beta: 0.0, c: JumpRule::Explicit(vec![1.0, 0.5]), ..Default::default() };
        let e = fractal_exponents(&p).unwrap();
        assert!(e.dim_h.is_none());
    }
}
