use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use mulgraph::continuum::{
    check_continuum, continuum_embedding, fractal_exponents, height_estimators, simulate_levy, v_of_a,
    ContinuumParams, LaplaceExponent,
};
use mulgraph::excursions::{component_spaces, excursions_of_height};
use mulgraph::markov_queue::{build_embedding, check_embedding, Stop};
use mulgraph::oracle;
use mulgraph::queue_sampler::sample_graph;
use mulgraph::seeding::{derive_seed, resolve_workers, run_trials, trial_rng};
use mulgraph::stats::{rescale_export, run_suite, Sampler, VerifyConfig};
use mulgraph::{Error, Weights};

#[derive(Parser, Debug)]
#[command(name = "mulgraph", version, about = "Sample and verify multiplicative random graphs and their continuum limits")]
struct Cli {
    /// Master seed; every output is a function of the seed and the arguments.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (MULGRAPH_WORKERS takes precedence).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct WeightArg {
    /// Comma-separated positive weights, e.g. "3,2,1".
    #[arg(long, required = true)]
    weights: String,
}

impl WeightArg {
    fn parse(&self) -> Result<Weights, Error> {
        parse_weights(&self.weights)
    }
}

fn parse_weights(s: &str) -> Result<Weights, Error> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("weight {x:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Weights::from_unsorted(v)
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample graphs through the queue construction.
    Sample {
        #[command(flatten)]
        w: WeightArg,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Write one summary file instead of per-trial files.
        #[arg(long)]
        aggregate: bool,
    },
    /// Run the statistical verification suite.
    Verify {
        #[arg(long, default_value = "1,1,1")]
        weights: String,
        #[arg(long, default_value_t = 20_000)]
        trials: u64,
        #[arg(long, default_value_t = mulgraph::stats::DEFAULT_SIGNIFICANCE)]
        significance: f64,
        /// Comma-separated subset of the tests.
        #[arg(long)]
        only: Option<String>,
        /// Replace the queue sampler by a biased one (power check).
        #[arg(long, hide = true)]
        corrupt: Option<f64>,
    },
    /// Export the Markov-queue embedding of one run.
    Embed {
        #[command(flatten)]
        w: WeightArg,
        /// Check the pathwise identities; exit 1 on a violation.
        #[arg(long)]
        check: bool,
        /// Rescaled export with constants `a,b`.
        #[arg(long)]
        rescale: Option<String>,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Components of one sample as pinched metric spaces.
    Excursions {
        #[command(flatten)]
        w: WeightArg,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        /// Largest component given a dense distance matrix.
        #[arg(long, default_value_t = 200)]
        dense_max: usize,
    },
    /// Continuum tables, exponents and estimator diagnostics from a config file.
    Continuum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: u64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long)]
        dump_paths: bool,
    },
    /// Growth exponents and dimensions from a config file.
    Dims {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare one sample against the brute-force oracles.
    Oracle {
        #[command(flatten)]
        w: WeightArg,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
    },
    /// Short end-to-end run of every component.
    Selftest,
}

enum Failure {
    Usage(String),
    Run(String),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidWeights(_) | Error::Parse(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

struct Ctx {
    seed: u64,
    workers: usize,
    out: PathBuf,
}

impl Ctx {
    fn write(&self, name: &str, body: &str) -> std::io::Result<()> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        info!("writing {}", path.display());
        fs::write(path, body)
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn workers_from_env(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    match std::env::var("MULGRAPH_WORKERS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Failure::Usage(format!("MULGRAPH_WORKERS={s:?} is not a worker count"))),
        Err(_) => Ok(flag),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = workers_from_env(cli.workers).and_then(|w| {
        let ctx = Ctx { seed: cli.seed, workers: resolve_workers(w), out: cli.out.clone() };
        run(&ctx, cli.cmd)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Checks) => ExitCode::from(1),
    }
}

fn run(ctx: &Ctx, cmd: Cmd) -> CmdResult {
    match cmd {
        Cmd::Sample { w, trials, aggregate } => cmd_sample(ctx, &w.parse()?, trials, aggregate),
        Cmd::Verify { weights, trials, significance, only, corrupt } => {
            let mut cfg = VerifyConfig::new(parse_weights(&weights)?, ctx.seed);
            cfg.trials = trials;
            cfg.significance = significance;
            cfg.only = only.map(|s| s.split(',').map(|t| t.trim().to_string()).collect());
            if let Some(b) = corrupt {
                cfg.sampler = Sampler::Corrupted(b);
            }
            cmd_verify(ctx, &cfg)
        }
        Cmd::Embed { w, check, rescale, points } => cmd_embed(ctx, &w.parse()?, check, rescale.as_deref(), points),
        Cmd::Excursions { w, eps, dense_max } => cmd_excursions(ctx, &w.parse()?, eps, dense_max),
        Cmd::Continuum { config, trials, eps, dump_paths } => {
            cmd_continuum(ctx, &read_config(&config)?, trials, eps, dump_paths)
        }
        Cmd::Dims { config } => {
            let e = fractal_exponents(&read_config(&config)?)?;
            print!("{}", pretty(&e));
            Ok(())
        }
        Cmd::Oracle { w, eps } => cmd_oracle(ctx, &w.parse()?, eps),
        Cmd::Selftest => cmd_selftest(ctx),
    }
}

fn read_config(path: &Path) -> Result<ContinuumParams, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(ContinuumParams::from_config(&text)?)
}

fn cmd_sample(ctx: &Ctx, w: &Weights, trials: u64, aggregate: bool) -> CmdResult {
    let results = run_trials(ctx.seed, trials as usize, ctx.workers, |_, rng| {
        let trial = sample_graph(w, rng)?;
        let spaces = component_spaces(&trial, w.as_slice(), 1.0, 0)?;
        Ok::<_, Error>((trial, spaces))
    });
    let n = w.len();
    let mut edge_counts = vec![vec![0u64; n]; n];
    let mut largest = Vec::new();
    let mut components = Vec::new();
    let width = trials.saturating_sub(1).to_string().len();
    // Single writer: trials come back in index order.
    for (i, r) in results.into_iter().enumerate() {
        let (trial, spaces) = r?;
        if aggregate {
            for a in 1..=n {
                for b in a + 1..=n {
                    if trial.graph.has_edge(a, b) {
                        edge_counts[a - 1][b - 1] += 1;
                    }
                }
            }
            largest.push(spaces.first().map_or(0.0, |s| s.mass));
            components.push(spaces.len());
            continue;
        }
        let tag = format!("{i:0width$}");
        ctx.write(&format!("graph_{tag}.edges"), &trial.graph.to_edge_list())?;
        ctx.write(&format!("tree_{tag}.txt"), &trial.tree.to_text())?;
        ctx.write(&format!("height_{tag}.csv"), &trial.height.to_csv())?;
        ctx.write(&format!("pinches_{tag}.txt"), &trial.pinches.to_text())?;
        let comps: Vec<Value> = spaces
            .iter()
            .map(|s| json!({"labels": s.labels.iter().flatten().collect::<Vec<_>>(), "mass": s.mass, "pinches": s.pinch_pairs}))
            .collect();
        ctx.write(&format!("components_{tag}.json"), &pretty(&comps))?;
    }
    if aggregate {
        let freq: Vec<Value> = (1..=n)
            .flat_map(|a| (a + 1..=n).map(move |b| (a, b)))
            .map(|(a, b)| {
                json!({"i": a, "j": b, "frequency": edge_counts[a - 1][b - 1] as f64 / trials as f64,
                       "expected": w.edge_probability(a, b)})
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let comps: Vec<f64> = components.iter().map(|&c| c as f64).collect();
        let summary = json!({
            "seed": ctx.seed,
            "weights": w.as_slice(),
            "trials": trials,
            "edge_frequencies": freq,
            "mean_largest_mass": mean(&largest),
            "mean_components": mean(&comps),
        });
        ctx.write("aggregate.json", &pretty(&summary))?;
    }
    Ok(())
}

fn cmd_verify(ctx: &Ctx, cfg: &VerifyConfig) -> CmdResult {
    let report = run_suite(cfg, ctx.workers)?;
    let text = report.to_json();
    ctx.write("verify.json", &text)?;
    println!("{text}");
    for r in &report.reports {
        let p = r.p_value.map_or("-".to_string(), |p| format!("{p:.3e}"));
        let verdict = if r.skipped { "SKIP" } else if r.pass { "PASS" } else { "FAIL" };
        eprintln!("{verdict} {:<10} p = {p}", r.name);
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_embed(ctx: &Ctx, w: &Weights, check: bool, rescale: Option<&str>, points: usize) -> CmdResult {
    let mut rng = trial_rng(ctx.seed, 0);
    if let Some(ab) = rescale {
        let v: Vec<f64> = ab
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::Usage(format!("--rescale: {e}")))?;
        if v.len() != 2 {
            return Err(Failure::Usage("--rescale takes two constants a,b".into()));
        }
        ctx.write("rescaled.csv", &rescale_export(w, v[0], v[1], points, &mut rng)?)?;
        return Ok(());
    }
    let e = build_embedding(w, &mut rng, Stop::QueueComplete)?;
    ctx.write("embedding.csv", &e.to_csv()?)?;
    if check {
        let c = check_embedding(&e)?;
        print!("{}", pretty(&c));
        if c.violations() > 0 {
            return Err(Failure::Checks);
        }
    }
    Ok(())
}

fn cmd_excursions(ctx: &Ctx, w: &Weights, eps: f64, dense_max: usize) -> CmdResult {
    let trial = sample_graph(w, &mut trial_rng(ctx.seed, 0))?;
    let spaces = component_spaces(&trial, w.as_slice(), eps, dense_max)?;
    ctx.write("excursions.json", &pretty(&excursions_of_height(&trial.height)))?;
    ctx.write("spaces.json", &pretty(&spaces))?;
    Ok(())
}

fn cmd_continuum(ctx: &Ctx, p: &ContinuumParams, trials: u64, eps: f64, dump: bool) -> CmdResult {
    if !p.integrable() {
        return Err(Failure::Run(
            "the height process needs int^inf dl / psi(l) < inf; this psi grows at most linearly \
             (beta = 0 and sum c_j^2 finite). Add a Brownian part or use a heavier jump rule."
                .into(),
        ));
    }
    let psi = LaplaceExponent::new(p)?;
    let mut table = String::from("lambda,psi,psi_tail_bound,psi_inverse\n");
    for i in 0..=40 {
        let l = 10f64.powf(-2.0 + 0.1 * f64::from(i));
        let d = psi.eval_detail(l)?;
        table += &format!("{l},{},{},{}\n", d.value, d.tail_bound, psi.inverse(l)?);
    }
    ctx.write("psi.csv", &table)?;
    let mut vt = String::from("a,v\n");
    for i in 1..=20 {
        let a = 0.25 * f64::from(i);
        vt += &format!("{a},{}\n", v_of_a(p, a)?);
    }
    ctx.write("v.csv", &vt)?;
    ctx.write("dims.json", &pretty(&fractal_exponents(p)?))?;

    let seed = derive_seed(ctx.seed, "continuum");
    let runs = run_trials(seed, trials as usize, ctx.workers, |_, rng| {
        let x = simulate_levy(p, rng)?;
        let est = height_estimators(&x, p, x.len() - 1, eps)?;
        let e = continuum_embedding(p, eps, rng)?;
        Ok::<_, Error>((x, est, check_continuum(&e), e))
    });
    let mut rows = Vec::new();
    for (i, r) in runs.into_iter().enumerate() {
        let (x, est, check, e) = r?;
        if dump {
            ctx.write(&format!("levy_{i}.csv"), &x.to_csv())?;
            ctx.write(&format!("assembled_{i}.csv"), &e.x.to_csv())?;
        }
        rows.push(json!({"estimators": est, "embedding": check}));
    }
    let report = json!({"seed": ctx.seed, "params": p, "eps": eps, "trials": rows});
    ctx.write("estimators.json", &pretty(&report))?;
    Ok(())
}

fn cmd_oracle(ctx: &Ctx, w: &Weights, eps: f64) -> CmdResult {
    let trial = sample_graph(w, &mut trial_rng(ctx.seed, 0))?;
    let mut height_mismatch = Value::Null;
    match trial
        .path
        .jumps()
        .iter()
        .map(|j| Ok(oracle::brute_height(&trial.path, j.time)? != trial.height.eval(j.time)))
        .collect::<Result<Vec<bool>, Error>>()
    {
        Ok(v) => height_mismatch = json!(v.iter().filter(|&&b| b).count()),
        Err(Error::OracleCap(m)) => info!("height oracle skipped: {m}"),
        Err(e) => return Err(e.into()),
    }
    let spaces = component_spaces(&trial, w.as_slice(), eps, usize::MAX)?;
    let bfs = oracle::bfs_distances(&trial.graph);
    let mut bfs_mismatch = 0usize;
    if eps == 1.0 {
        for s in &spaces {
            let dm = s.distance_matrix.as_ref().expect("dense");
            for (i, li) in s.labels.iter().enumerate() {
                for (j, lj) in s.labels.iter().enumerate() {
                    bfs_mismatch += usize::from(dm[i][j] != bfs[li[0] - 1][lj[0] - 1]);
                }
            }
        }
    }
    let direct = oracle::direct_sample(w, &mut trial_rng(ctx.seed, 1));
    let report = json!({
        "seed": ctx.seed,
        "weights": w.as_slice(),
        "eps": eps,
        "height_mismatches": height_mismatch,
        "bfs_mismatches": (eps == 1.0).then_some(bfs_mismatch),
        "queue_edges": trial.graph.to_edge_list(),
        "direct_edges": direct.to_edge_list(),
    });
    print!("{}", pretty(&report));
    Ok(())
}

fn cmd_selftest(ctx: &Ctx) -> CmdResult {
    let mut ok = true;
    let mut cfg = VerifyConfig::new(parse_weights("1,1,1")?, ctx.seed);
    cfg.trials = 2000;
    let suite = run_suite(&cfg, ctx.workers)?;
    for r in &suite.reports {
        eprintln!("{} {}", if r.pass { "ok  " } else { "FAIL" }, r.name);
    }
    ok &= suite.pass;
    let b = ContinuumParams::brownian();
    let psi = LaplaceExponent::new(&b)?;
    let inv_err = (1..=20)
        .map(|i| {
            let l = 0.5 * f64::from(i);
            psi.inverse(l).map(|v| (v - (2.0 * l).sqrt()).abs())
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let v_err = (v_of_a(&b, 1.0)? - 2.0).abs();
    let dims = fractal_exponents(&b)?;
    let cont_ok = inv_err < 1e-8 && v_err < 1e-6 && dims.dim_h == Some(2.0);
    eprintln!("{} continuum tables", if cont_ok { "ok  " } else { "FAIL" });
    ok &= cont_ok;
    if ok {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}
