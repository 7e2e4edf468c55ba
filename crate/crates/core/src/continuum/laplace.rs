use serde::Serialize;

use super::{ContinuumParams, JumpRule};
use crate::domain::Weights;
use crate::error::{Error, Result};

/// `e^{-x} - 1 + x`, accurate for small `x`.
pub fn levy_kernel(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0)
    } else {
        (-x).exp_m1() + x
    }
}

const GL_NODES: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

fn gauss5<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, w)| w * f(m + h * x)).sum::<f64>()
}

/// Adaptive Gauss-Legendre on `[a, b]`; endpoints are never evaluated.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (gauss5(f, a, m), gauss5(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= tol.max(8.0 * f64::EPSILON * (l + r).abs()) {
            l + r
        } else {
            rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
        }
    }
    let whole = gauss5(&f, a, b);
    let tol = (rel_tol * whole.abs()).max(1e-300);
    rec(&f, a, b, whole, tol, 60)
}

/// `G(U) = int_0^U u^{-rho} (e^{-u} - 1 + u) du`, for `rho < 3`.
#[derive(Debug, Clone)]
struct TailIntegral {
    rho: f64,
    /// `G` at `1 + k * STEP`.
    table: Vec<f64>,
    g60: f64,
}

impl TailIntegral {
    const SPLIT: f64 = 60.0;
    const STEP: f64 = 0.25;

    fn new(rho: f64) -> Self {
        let mut t = TailIntegral { rho, table: Vec::new(), g60: 0.0 };
        let mut g = t.series(1.0);
        let steps = ((Self::SPLIT - 1.0) / Self::STEP).round() as usize;
        t.table.push(g);
        for k in 0..steps {
            let a = 1.0 + k as f64 * Self::STEP;
            g += integrate(|u| u.powf(-rho) * levy_kernel(u), a, a + Self::STEP, 1e-14);
            t.table.push(g);
        }
        t.g60 = g;
        t
    }

    fn series(&self, u: f64) -> f64 {
        let mut sum = 0.0;
        let mut fact = 1.0;
        for k in 2..60 {
            fact *= k as f64;
            let e = k as f64 + 1.0 - self.rho;
            let term = u.powf(e) / (fact * e);
            sum += if k % 2 == 0 { term } else { -term };
            if term < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    }

    /// `int_a^b u^p du`.
    fn power(a: f64, b: f64, p: f64) -> f64 {
        if (p + 1.0).abs() < 1e-12 {
            (b / a).ln()
        } else {
            (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0)
        }
    }

    fn eval(&self, u: f64) -> f64 {
        let rho = self.rho;
        if u <= 1.0 {
            self.series(u)
        } else if u <= Self::SPLIT {
            let k = (((u - 1.0) / Self::STEP) as usize).min(self.table.len() - 1);
            let a = 1.0 + k as f64 * Self::STEP;
            self.table[k] + gauss5(&|x: f64| x.powf(-rho) * levy_kernel(x), a, u)
        } else {
            // e^{-u} is negligible past the split point
            self.g60 + Self::power(Self::SPLIT, u, 1.0 - rho) - Self::power(Self::SPLIT, u, -rho)
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PsiValue {
    pub lambda: f64,
    /// Explicitly summed part (`j <= jmax`).
    pub head: f64,
    /// Upper bound on the omitted part, `kappa lambda^2 sigma3(tail) / 2`.
    pub tail_bound: f64,
    /// Head plus an analytic approximation of the tail (power-law rule only).
    pub value: f64,
}

/// `psi(l) = alpha l + beta l^2 / 2 + sum_j kappa c_j (e^{-l c_j} - 1 + l c_j)`.
#[derive(Debug, Clone)]
pub struct LaplaceExponent {
    alpha: f64,
    beta: f64,
    kappa: f64,
    head: Vec<f64>,
    tail: Option<(f64, f64, f64, TailIntegral)>,
    tail_sigma3: f64,
}

impl LaplaceExponent {
    pub fn new(p: &ContinuumParams) -> Result<Self> {
        p.validate()?;
        let tail_sigma3 = p.tail_moment(3.0);
        let (head, tail) = match &p.c {
            // Explicit lists are summed in full.
            JumpRule::Explicit(c) => (c.clone(), None),
            JumpRule::PowerLaw { q, rho } => {
                let start = p.jmax as f64 + 0.5;
                (p.head(), Some((*q, *rho, start, TailIntegral::new(*rho))))
            }
        };
        let tail_sigma3 = if tail.is_some() { tail_sigma3 } else { 0.0 };
        Ok(LaplaceExponent { alpha: p.alpha, beta: p.beta, kappa: p.kappa, head, tail, tail_sigma3 })
    }

    /// `psi_w(l) = alpha_w l + sum_j (w_j / sigma1) (e^{-l w_j} - 1 + l w_j)`.
    pub fn discrete(w: &Weights) -> Self {
        LaplaceExponent {
            alpha: w.alpha(),
            beta: 0.0,
            kappa: 1.0 / w.sigma1(),
            head: w.as_slice().to_vec(),
            tail: None,
            tail_sigma3: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn head_sum(&self, lam: f64) -> f64 {
        self.alpha * lam
            + 0.5 * self.beta * lam * lam
            + self.kappa * self.head.iter().map(|&c| c * levy_kernel(lam * c)).sum::<f64>()
    }

    fn tail_sum(&self, lam: f64) -> f64 {
        match &self.tail {
            None => 0.0,
            Some((q, rho, start, g)) => {
                if lam == 0.0 {
                    return 0.0;
                }
                let u0 = lam * q * start.powf(-1.0 / rho);
                self.kappa * rho * q.powf(*rho) * lam.powf(rho - 1.0) * g.eval(u0)
            }
        }
    }

    pub fn eval_detail(&self, lam: f64) -> Result<PsiValue> {
        if !(lam >= 0.0) {
            return Err(Error::InvalidArgument(format!("psi needs lambda >= 0, got {lam}")));
        }
        if !self.tail_sigma3.is_finite() {
            return Err(Error::InvalidArgument("sum of c_j^3 diverges".into()));
        }
        let head = self.head_sum(lam);
        Ok(PsiValue {
            lambda: lam,
            head,
            tail_bound: 0.5 * self.kappa * lam * lam * self.tail_sigma3,
            value: head + self.tail_sum(lam),
        })
    }

    pub fn psi(&self, lam: f64) -> f64 {
        self.head_sum(lam) + self.tail_sum(lam)
    }

    /// `inf { u : psi(u) > lam }`.
    pub fn inverse(&self, lam: f64) -> Result<f64> {
        if !(lam >= 0.0) {
            return Err(Error::InvalidArgument(format!("psi inverse needs lambda >= 0, got {lam}")));
        }
        if lam == 0.0 && self.alpha >= 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.psi(hi) <= lam {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::InvalidArgument("psi does not exceed the target".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.psi(mid) > lam {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Largest root `psi^{-1}(0)`; zero unless supercritical.
    pub fn largest_root(&self) -> f64 {
        self.inverse(0.0).expect("psi grows without bound")
    }

    /// `int_v^inf dl / psi(l)` via `l = v / u`.
    pub fn inverse_integral(&self, v: f64) -> f64 {
        integrate(|u| v / (u * u * self.psi(v / u)), 0.0, 1.0, 1e-12)
    }
}

/// `v(a)`: the root of `int_{v}^inf dl / psi(l) = a`.
pub fn v_of_a(p: &ContinuumParams, a: f64) -> Result<f64> {
    if !p.integrable() {
        return Err(Error::NotIntegrable(
            "psi grows at most linearly (beta = 0 and sum of c_j^2 finite), so int dl/psi diverges".into(),
        ));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("v(a) needs a > 0, got {a}")));
    }
    let psi = LaplaceExponent::new(p)?;
    let root = psi.largest_root();
    let f = |v: f64| psi.inverse_integral(v) - a;
    let mut hi = root.max(1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = hi;
    while lo > root && f(lo) < 0.0 {
        lo = root + 0.5 * (lo - root);
        if lo - root < 1e-300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brownian() -> LaplaceExponent {
        LaplaceExponent::new(&ContinuumParams::brownian()).unwrap()
    }

    #[test]
    fn brownian_closed_forms() {
        let psi = brownian();
        assert_eq!(psi.psi(0.0), 0.0);
        assert_eq!(psi.psi(3.0), 4.5);
        for lam in [0.1, 1.0, 4.0, 50.0] {
            assert!((psi.inverse(lam).unwrap() - (2.0 * lam).sqrt()).abs() < 1e-12);
        }
        for a in [0.5, 1.0, 2.0, 7.0] {
            let v = v_of_a(&ContinuumParams::brownian(), a).unwrap();
            assert!((v - 2.0 / a).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn roots() {
        let sub = ContinuumParams { alpha: 0.5, ..Default::default() };
        assert_eq!(LaplaceExponent::new(&sub).unwrap().largest_root(), 0.0);
        let sup = ContinuumParams { alpha: -1.0, ..Default::default() };
        assert!((LaplaceExponent::new(&sup).unwrap().largest_root() - 2.0).abs() < 1e-12);
        let w = Weights::new(vec![3.0, 2.0, 1.0]).unwrap();
        let psi = LaplaceExponent::discrete(&w);
        let r = psi.largest_root();
        assert!(r > 0.0 && psi.psi(r).abs() < 1e-12);
        assert_eq!(LaplaceExponent::discrete(&Weights::new(vec![1.0, 1.0]).unwrap()).largest_root(), 0.0);
    }

    #[test]
    fn refuses_non_integrable() {
        let p = ContinuumParams { beta: 0.0, c: JumpRule::Explicit(vec![1.0, 0.5]), ..Default::default() };
        assert!(matches!(v_of_a(&p, 1.0), Err(Error::NotIntegrable(_))));
    }

    #[test]
    fn power_law_tail_matches_long_sum() {
        let p = ContinuumParams { beta: 0.0, c: JumpRule::PowerLaw { q: 1.0, rho: 2.5 }, jmax: 200, ..Default::default() };
        let psi = LaplaceExponent::new(&p).unwrap();
        let long = LaplaceExponent::new(&ContinuumParams { jmax: 400_000, ..p.clone() }).unwrap();
        for lam in [0.5, 3.0, 40.0] {
            let a = psi.psi(lam);
            let b = long.psi(lam);
            assert!((a - b).abs() < 1e-6 * b, "{lam}: {a} vs {b}");
            let d = psi.eval_detail(lam).unwrap();
            assert!(d.value - d.head <= d.tail_bound + 1e-15);
        }
        let v = v_of_a(&p, 1.0).unwrap();
        assert!((psi.inverse_integral(v) - 1.0).abs() < 1e-8);
        assert!(v_of_a(&p, 2.0).unwrap() < v);
    }

    #[test]
    fn derivative_at_zero_is_alpha() {
        let p = ContinuumParams { alpha: 0.3, beta: 0.5, c: JumpRule::Explicit(vec![1.0, 0.7]), ..Default::default() };
        let psi = LaplaceExponent::new(&p).unwrap();
        let h = 1e-7;
        assert!((psi.psi(h) / h - 0.3).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn convex_and_inverse(alpha in -1.0f64..1.0, beta in 0.0f64..2.0, c in prop::collection::vec(0.01f64..2.0, 0..5),
                              a in 0.0f64..10.0, b in 0.0f64..10.0, lam in 0.01f64..20.0) {
            let mut c = c;
            c.sort_by(|x, y| y.total_cmp(x));
            let p = ContinuumParams { alpha, beta, c: JumpRule::Explicit(c), ..Default::default() };
            let psi = LaplaceExponent::new(&p).unwrap();
            prop_assert!(psi.psi(0.5 * (a + b)) <= 0.5 * (psi.psi(a) + psi.psi(b)) + 1e-12);
            let u = psi.inverse(lam).unwrap();
            prop_assert!(u >= psi.largest_root());
            prop_assert!((psi.psi(u) - lam).abs() <= 1e-10 * lam.max(1.0));
            prop_assert!(psi.inverse(lam * 1.5).unwrap() > u);
        }
    }
}
