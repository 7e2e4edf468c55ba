use mulgraph::continuum::*;
use mulgraph::seeding::trial_rng;
use rand::Rng;

#[test]
fn probe() {
    for dt in [1e-4, 1e-5] {
        let p = ContinuumParams { dt, horizon: 1.0, ..Default::default() };
        let n = if dt < 5e-5 { 400 } else { 3000 };
        let (mut se, mut st_grid, mut st_cont) = (0.0, 0.0, 0.0);
        let mut sq = 0.0;
        for i in 0..n {
            let mut rng = trial_rng(99, i);
            let x = simulate_levy(&p, &mut rng).unwrap();
            let v = &x.values;
            let m = v.len() - 1;
            // cell minima of the bridge
            let cellmin: Vec<f64> = (1..=m).map(|k| {
                let (a, b) = (v[k - 1], v[k]);
                let u: f64 = 1.0 - rng.random::<f64>();
                0.5 * (a + b - ((a - b).powi(2) - 2.0 * dt * u.ln()).sqrt())
            }).collect();
            let mut cur = v[m];
            let mut o = 0.0;
            for k in (0..m).rev() {
                cur = cur.min(cellmin[k]); // cell k+1 spans [k, k+1]
                if v[k] - cur <= 0.01 { o += dt; }
            }
            let est = o / 0.01;
            let gmin = v.iter().copied().fold(f64::INFINITY, f64::min);
            let cmin = cellmin.iter().copied().fold(gmin, f64::min);
            se += est; st_grid += 2.0 * (v[m] - gmin); st_cont += 2.0 * (v[m] - cmin);
            sq += (est - 2.0 * (v[m] - cmin)).powi(2);
        }
        let mt = st_cont / n as f64;
        eprintln!("dt={dt}: bias vs continuous target {:.4}, vs grid target {:.4}, sd(100) {:.4}", se / st_cont - 1.0, se / st_grid - 1.0, (sq / n as f64).sqrt() / mt / 10.0);
    }
}
