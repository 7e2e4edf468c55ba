//! Acceptance criteria 1-11, one line each. Statistical criteria get one retry
//! with a fresh seed before they count as failed.

use std::process::ExitCode;
use std::time::Instant;

use mulgraph::continuum::{
    excursion_laplace_check, extinction_check, fractal_exponents, height_estimators, simulate_levy, v_of_a,
    ContinuumParams, JumpRule, LaplaceExponent,
};
use mulgraph::excursions::{component_spaces, TreeCoding};
use mulgraph::oracle::{bfs_distances, brute_pinched_distance};
use mulgraph::queue_sampler::{sample_graph, EdgeKind, Graph};
use mulgraph::seeding::{derive_seed, resolve_workers, run_trials};
use mulgraph::stats::{
    embedding_test, graph_law_equivalence, mixture_law_test, offspring_test, random_weights, run_suite, Sampler,
    VerifyConfig,
};
use mulgraph::Weights;

const SEED: u64 = 20_240_601;
const ALPHA: f64 = 0.001;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn w(v: &[f64]) -> Weights {
    Weights::new(v.to_vec()).unwrap()
}

/// Edge marginals for w = (3, 2, 1).
fn c1(seed: u64, workers: usize) -> Outcome {
    let start = Instant::now();
    let wt = w(&[3.0, 2.0, 1.0]);
    let trials = 200_000usize;
    let pairs = [(1, 2), (1, 3), (2, 3)];
    let masks: Vec<[bool; 3]> = run_trials(seed, trials, workers, |_, rng| {
        let g = sample_graph(&wt, rng).unwrap().graph;
        pairs.map(|(a, b)| g.has_edge(a, b))
    });
    let elapsed = start.elapsed().as_secs_f64();
    // 1 - exp(-w_i w_j / 6)
    let expected = [1.0 - (-1.0f64).exp(), 1.0 - (-0.5f64).exp(), 1.0 - (-1.0f64 / 3.0).exp()];
    let mut zs = Vec::new();
    for (k, &p) in expected.iter().enumerate() {
        let f = masks.iter().filter(|m| m[k]).count() as f64 / trials as f64;
        zs.push((f - p) / (p * (1.0 - p) / trials as f64).sqrt());
    }
    let pass = zs.iter().all(|z| z.abs() <= 3.0) && elapsed < 60.0;
    outcome(pass, format!("z = [{:.2}, {:.2}, {:.2}], {elapsed:.1} s", zs[0], zs[1], zs[2]))
}

/// Full law on 8 labelled graphs.
fn c2(seed: u64, workers: usize) -> Outcome {
    let r = graph_law_equivalence(&w(&[3.0, 2.0, 1.0]), Sampler::Queue, 100_000, ALPHA, seed, workers).unwrap();
    outcome(r.pass, format!("chi2 = {:.2}, p = {:.4}", r.statistic, r.p_value.unwrap()))
}

/// Pathwise embedding identities over random weights.
fn c3(seed: u64, workers: usize) -> Outcome {
    let r = embedding_test(None, 10_000, seed, workers).unwrap();
    outcome(
        r.pass,
        format!("{} violations, {} trials reached T*", r.statistic, r.metadata["trials_reaching_t_star"]),
    )
}

/// Tree coding, eps = 1 metric and the enumeration oracle.
fn c4(seed: u64, workers: usize) -> Outcome {
    let counts = run_trials(seed, 1000, workers, |_, rng| {
        let wt = random_weights(12, rng);
        let trial = sample_graph(&wt, rng).unwrap();
        let n = wt.len();
        let mut bad = [0usize; 3];
        let mut oracle_components = 0usize;

        let mut tree = Graph::new(n);
        for (&(a, b), &k) in &trial.graph.edges {
            if k == EdgeKind::Tree {
                tree.add_edge(a, b, k);
            }
        }
        let dt = bfs_distances(&tree);
        let coding = TreeCoding::new(&trial.height);
        let arr = &trial.tree.arrival;
        for a in 1..=n {
            for b in 1..=n {
                if dt[a - 1][b - 1].is_finite() && coding.distance(arr[a], arr[b]) != dt[a - 1][b - 1] {
                    bad[0] += 1;
                }
            }
        }

        let dg = bfs_distances(&trial.graph);
        for s in component_spaces(&trial, wt.as_slice(), 1.0, usize::MAX).unwrap() {
            let dm = s.distance_matrix.as_ref().unwrap();
            for (i, li) in s.labels.iter().enumerate() {
                for (j, lj) in s.labels.iter().enumerate() {
                    bad[1] += usize::from(dm[i][j] != dg[li[0] - 1][lj[0] - 1]);
                }
            }
        }

        for eps in [0.5, 1.0, 2.5] {
            for s in component_spaces(&trial, wt.as_slice(), eps, usize::MAX).unwrap() {
                if s.pinch_pairs.len() > 12 {
                    continue;
                }
                oracle_components += 1;
                let labels: Vec<usize> = s.labels.iter().map(|l| l[0]).collect();
                let base: Vec<Vec<f64>> = labels
                    .iter()
                    .map(|&a| labels.iter().map(|&b| coding.distance(arr[a], arr[b])).collect())
                    .collect();
                let idx = |x: usize| labels.iter().position(|&l| l == x).unwrap();
                let pairs: Vec<(usize, usize)> = s.pinch_pairs.iter().map(|&(a, b)| (idx(a), idx(b))).collect();
                let dm = s.distance_matrix.as_ref().unwrap();
                for i in 0..labels.len() {
                    for j in 0..labels.len() {
                        let o = brute_pinched_distance(&base, &pairs, eps, i, j).unwrap();
                        bad[2] += usize::from(dm[i][j] != o);
                    }
                }
            }
        }
        (bad, oracle_components)
    });
    let mut bad = [0usize; 3];
    let mut comps = 0;
    for (b, c) in counts {
        for k in 0..3 {
            bad[k] += b[k];
        }
        comps += c;
    }
    outcome(
        bad == [0, 0, 0] && comps > 0,
        format!("mismatches tree/bfs/oracle = {bad:?}, {comps} components checked against the oracle"),
    )
}

/// Offspring law for w = (1, 1).
fn c5(seed: u64, _workers: usize) -> Outcome {
    let r = offspring_test(&w(&[1.0, 1.0]), 50_000, ALPHA, seed).unwrap();
    outcome(
        r.pass,
        format!("chi2 p = {:.4}, mean z = {:.2}", r.p_value.unwrap(), r.z_score.unwrap()),
    )
}

/// Law of the mixture against the blue Markov load, critical and supercritical.
fn c6(seed: u64, workers: usize) -> Outcome {
    let crit = mixture_law_test(&w(&[1.0, 1.0]), 2.0, 10_000, ALPHA, derive_seed(seed, "critical"), workers).unwrap();
    let sup =
        mixture_law_test(&w(&[3.0, 2.0, 1.0]), 2.0, 10_000, ALPHA, derive_seed(seed, "super"), workers).unwrap();
    outcome(
        crit.pass && sup.pass,
        format!(
            "KS p = {:.4} (w = (1,1)), {:.4} (w = (3,2,1))",
            crit.p_value.unwrap(),
            sup.p_value.unwrap()
        ),
    )
}

/// Brownian psi inverse, v(a) and the extinction probability.
fn c7(seed: u64, workers: usize) -> Outcome {
    let b = ContinuumParams::brownian();
    let psi = LaplaceExponent::new(&b).unwrap();
    let inv_err = (0..20)
        .map(|i| {
            let l = 10f64.powf(-3.0 + 6.0 * f64::from(i) / 19.0);
            (psi.inverse(l).unwrap() - (2.0 * l).sqrt()).abs()
        })
        .fold(0.0, f64::max);
    let v_err = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&a| (v_of_a(&b, a).unwrap() - 2.0 / a).abs())
        .fold(0.0, f64::max);
    let p = ContinuumParams { dt: 2e-5, ..ContinuumParams::brownian() };
    let e = extinction_check(&p, 1.0, 2.0, 10_000, seed, workers).unwrap();
    let target = (-1.0f64).exp();
    let z = (e.estimate - target) / e.std_error;
    outcome(
        inv_err < 1e-8 && v_err < 1e-6 && z.abs() <= 3.0,
        format!(
            "max |psi^-1 - sqrt(2l)| = {inv_err:.1e}, max |v - 2/a| = {v_err:.1e}, P = {:.4} vs {target:.4} (z = {z:.2})",
            e.estimate
        ),
    )
}

/// Relative error of the mean occupation estimate against the mean of
/// 2 (X_t - I_t) at t = 1, plus the mean per-path error.
fn occupation_errors(dt: f64, paths: usize, seed: u64, workers: usize) -> (f64, f64) {
    let p = ContinuumParams { dt, horizon: 1.0, ..ContinuumParams::brownian() };
    let rows = run_trials(seed, paths, workers, |_, rng| {
        let x = simulate_levy(&p, rng).unwrap();
        let m = x.len() - 1;
        let est = height_estimators(&x, &p, m, 1e-2).unwrap();
        (est.occupation, 2.0 * (x.values[m] - x.infimum(m)))
    });
    let (occ, target): (f64, f64) = rows.iter().fold((0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1));
    let positive: Vec<_> = rows.iter().filter(|r| r.1 > 0.0).collect();
    let per_path = positive.iter().map(|(o, t)| (o - t).abs() / t).sum::<f64>() / positive.len() as f64;
    ((occ - target).abs() / target, per_path)
}

/// Occupation estimator against 2 (X_t - I_t) at t = 1, dt = 1e-4, eps = 1e-2.
fn c8(seed: u64, workers: usize) -> Outcome {
    let (rel, per_path) = occupation_errors(1e-4, 100, seed, workers);
    let (fine, _) = occupation_errors(1e-5, 100, seed, workers);
    outcome(
        rel < 0.05,
        format!(
            "relative error of the mean = {:.2}% (mean per-path error {:.1}%; 100 fresh paths at dt = 1e-5: {:.2}%)",
            100.0 * rel,
            100.0 * per_path,
            100.0 * fine
        ),
    )
}

/// Excursion Laplace transform, Brownian case.
fn c9(seed: u64, workers: usize) -> Outcome {
    let p = ContinuumParams { dt: 1e-4, ..ContinuumParams::brownian() };
    let r = excursion_laplace_check(&p, &[1.0, 4.0], 100.0, 40, seed, workers).unwrap();
    let pass = r.excursions >= 10_000 && r.checks.iter().all(|c| c.rel_error < 0.05);
    let parts: Vec<String> = r
        .checks
        .iter()
        .map(|c| format!("l = {}: {:.4} vs {:.4} ({:.2}%)", c.lambda, c.estimate, c.target, 100.0 * c.rel_error))
        .collect();
    outcome(pass, format!("{} excursions over depth {:.0}; {}", r.excursions, r.depth, parts.join(", ")))
}

/// Exponent pipeline.
fn c10(_seed: u64, _workers: usize) -> Outcome {
    let b = fractal_exponents(&ContinuumParams::brownian()).unwrap();
    let p = ContinuumParams { beta: 0.0, c: JumpRule::PowerLaw { q: 1.0, rho: 2.5 }, ..ContinuumParams::brownian() };
    let e = fractal_exponents(&p).unwrap();
    let (g, h) = (e.gamma.unwrap_or(f64::NAN), e.eta.unwrap_or(f64::NAN));
    let (dh, dp) = (e.dim_h.unwrap_or(f64::NAN), e.dim_p.unwrap_or(f64::NAN));
    let pass = b.dim_h == Some(2.0)
        && b.dim_p == Some(2.0)
        && (g - 1.5).abs() <= 0.05
        && (h - 1.5).abs() <= 0.05
        && (dh - 3.0).abs() <= 0.15
        && (dp - 3.0).abs() <= 0.15;
    outcome(
        pass,
        format!("brownian dims = ({:?}, {:?}); rho = 2.5: gamma = {g:.4}, eta = {h:.4}, dims = ({dh:.3}, {dp:.3})", b.dim_h, b.dim_p),
    )
}

/// Byte-identical suite reports across worker counts.
fn c11(seed: u64, _workers: usize) -> Outcome {
    let cfg = VerifyConfig::new(w(&[1.0, 1.0, 1.0]), seed);
    let a = run_suite(&cfg, 1).unwrap().to_json();
    let b = run_suite(&cfg, 4).unwrap().to_json();
    outcome(a == b, format!("{} bytes, identical = {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let workers = resolve_workers(None);
    let criteria: [(&str, fn(u64, usize) -> Outcome, bool); 11] = [
        ("edge marginals", c1, true),
        ("graph law", c2, true),
        ("embedding identities", c3, false),
        ("metric coding", c4, false),
        ("offspring law", c5, true),
        ("law of the mixture", c6, true),
        ("continuum numerics", c7, true),
        ("height estimator", c8, true),
        ("excursion Laplace transform", c9, true),
        ("fractal exponents", c10, false),
        ("determinism", c11, false),
    ];
    let mut failed = 0;
    for (i, (name, f, retry)) in criteria.iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let seed = derive_seed(SEED, &format!("criterion-{n}"));
        let mut o = f(seed, workers);
        let mut note = "";
        if !o.pass && *retry {
            let first = o.detail;
            o = f(derive_seed(seed, "second-strike"), workers);
            o.detail = format!("{} (first attempt: {first})", o.detail);
            note = " [retried]";
        }
        failed += usize::from(!o.pass);
        println!(
            "criterion {n:>2} {} {name}{note}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
