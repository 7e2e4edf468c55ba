//! Continuum objects: Laplace exponent, grid simulation of the limit
//! processes, height estimators, excursion checks and fractal exponents.

mod checks;
mod exponents;
mod laplace;
mod paths;

pub use checks::*;
pub use exponents::*;
pub use laplace::*;
pub use paths::*;

use serde::Serialize;

use crate::domain::Criticality;
use crate::error::{Error, Result};

/// Jump sizes `c_1 >= c_2 >= ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum JumpRule {
    Explicit(Vec<f64>),
    /// `c_j = q * j^(-1/rho)`.
    PowerLaw { q: f64, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuumParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub c: JumpRule,
    /// Number of jump sizes simulated individually.
    pub jmax: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for ContinuumParams {
    fn default() -> Self {
        ContinuumParams {
            alpha: 0.0,
            beta: 1.0,
            kappa: 1.0,
            c: JumpRule::Explicit(Vec::new()),
            jmax: 1000,
            dt: 1e-3,
            horizon: 1.0,
            seed: 0,
        }
    }
}

impl ContinuumParams {
    pub fn brownian() -> Self {
        ContinuumParams::default()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !self.alpha.is_finite() {
            return bad(format!("alpha = {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {} must be >= 0", self.beta));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be > 0", self.kappa));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return bad(format!("dt = {} and horizon = {} must be > 0", self.dt, self.horizon));
        }
        match &self.c {
            JumpRule::Explicit(c) => {
                if c.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return bad("explicit c must be positive".into());
                }
                if c.windows(2).any(|p| p[0] < p[1]) {
                    return bad("explicit c must be non-increasing".into());
                }
            }
            JumpRule::PowerLaw { q, rho } => {
                if !(*q > 0.0) {
                    return bad(format!("power law q = {q} must be > 0"));
                }
                if !(*rho > 0.0 && *rho < 3.0) {
                    // sum of c_j^3 diverges for rho >= 3
                    return bad(format!("power law rho = {rho} must lie in (0, 3)"));
                }
            }
        }
        Ok(())
    }

    pub fn criticality(&self) -> Criticality {
        Criticality::from_alpha(self.alpha)
    }

    /// Jump sizes simulated individually.
    pub fn head(&self) -> Vec<f64> {
        match &self.c {
            JumpRule::Explicit(c) => c.iter().copied().take(self.jmax).collect(),
            JumpRule::PowerLaw { q, rho } => (1..=self.jmax).map(|j| q * (j as f64).powf(-1.0 / rho)).collect(),
        }
    }

    /// `sum_{j > jmax} c_j^r`, infinite when divergent.
    pub fn tail_moment(&self, r: f64) -> f64 {
        match &self.c {
            JumpRule::Explicit(c) => c.iter().skip(self.jmax).map(|x| x.powf(r)).sum(),
            JumpRule::PowerLaw { q, rho } => {
                let s = r / rho;
                if s <= 1.0 {
                    f64::INFINITY
                } else {
                    q.powf(r) * hurwitz_tail(s, self.jmax as f64 + 1.0)
                }
            }
        }
    }

    pub fn moment(&self, r: f64) -> f64 {
        self.head().iter().map(|x| x.powf(r)).sum::<f64>() + self.tail_moment(r)
    }

    /// Infinite variation: `beta > 0` or `sum c_j^2 = inf`.
    pub fn infinite_variation(&self) -> bool {
        self.beta > 0.0 || self.moment(2.0).is_infinite()
    }

    /// Whether `int^inf dlambda / psi(lambda)` converges.
    pub fn integrable(&self) -> bool {
        self.beta > 0.0 || matches!(self.c, JumpRule::PowerLaw { rho, .. } if rho > 2.0)
    }

    /// Parse the plain `key = value` format; `#` starts a comment.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut p = ContinuumParams::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {key}: {e}", lineno + 1)))
            };
            match key {
                "alpha" => p.alpha = num(value)?,
                "beta" => p.beta = num(value)?,
                "kappa" => p.kappa = num(value)?,
                "dt" => p.dt = num(value)?,
                "horizon" => p.horizon = num(value)?,
                "jmax" => {
                    p.jmax = value
                        .parse()
                        .map_err(|e| Error::Parse(format!("line {}: jmax: {e}", lineno + 1)))?
                }
                "seed" => {
                    p.seed = value
                        .parse()
                        .map_err(|e| Error::Parse(format!("line {}: seed: {e}", lineno + 1)))?
                }
                "c_rule" => {
                    let mut parts = value.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
                    match parts.next() {
                        Some("explicit") => {
                            let mut c = parts.map(num).collect::<Result<Vec<f64>>>()?;
                            c.sort_by(|a, b| b.total_cmp(a));
                            p.c = JumpRule::Explicit(c);
                        }
                        Some("powerlaw") => {
                            let v = parts.map(num).collect::<Result<Vec<f64>>>()?;
                            if v.len() != 2 {
                                return Err(Error::Parse(format!("line {}: powerlaw needs q and rho", lineno + 1)));
                            }
                            p.c = JumpRule::PowerLaw { q: v[0], rho: v[1] };
                        }
                        other => {
                            return Err(Error::Parse(format!("line {}: unknown c_rule {other:?}", lineno + 1)))
                        }
                    }
                }
                other => return Err(Error::Parse(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// `sum_{j >= a} j^(-s)` for integer `a >= 1`, `s > 1`: direct terms then Euler-Maclaurin.
pub fn hurwitz_tail(s: f64, a: f64) -> f64 {
    let mut sum = 0.0;
    let mut j = a;
    while j < 50.0 {
        sum += j.powf(-s);
        j += 1.0;
    }
    sum + j.powf(1.0 - s) / (s - 1.0) + 0.5 * j.powf(-s) + s * j.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * j.powf(-s - 3.0) / 720.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config() {
        let p = ContinuumParams::from_config(
            "alpha = -0.5\nbeta=0 # none\nkappa = 2\nc_rule = powerlaw 1 2.5\njmax = 50\ndt=1e-3\nhorizon = 2\nseed = 4\n",
        )
        .unwrap();
        assert_eq!(p.c, JumpRule::PowerLaw { q: 1.0, rho: 2.5 });
        assert_eq!((p.alpha, p.kappa, p.jmax, p.seed), (-0.5, 2.0, 50, 4));
        let p = ContinuumParams::from_config("c_rule = explicit 0.5, 1").unwrap();
        assert_eq!(p.c, JumpRule::Explicit(vec![1.0, 0.5]));
        assert!(ContinuumParams::from_config("bogus = 1").is_err());
        assert!(ContinuumParams::from_config("c_rule = powerlaw 1 3.5").is_err());
    }

    #[test]
    fn hurwitz_matches_direct_sum() {
        let direct: f64 = (7..2_000_000).map(|j| (j as f64).powf(-1.2)).sum::<f64>();
        let tail_after = hurwitz_tail(1.2, 2_000_000.0);
        assert!((hurwitz_tail(1.2, 7.0) - direct - tail_after).abs() < 1e-9);
        assert!((hurwitz_tail(2.0, 1.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn regimes() {
        let mut p = ContinuumParams { beta: 0.0, c: JumpRule::PowerLaw { q: 1.0, rho: 2.5 }, ..Default::default() };
        assert!(p.infinite_variation() && p.integrable());
        p.c = JumpRule::Explicit(vec![1.0, 0.5]);
        assert!(!p.infinite_variation() && !p.integrable());
        assert!(ContinuumParams::brownian().integrable());
    }
}
