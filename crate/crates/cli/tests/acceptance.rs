//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use branchquant::asymptotics::spread;
use branchquant::{
    basin_stats, brute_force_bot, compute_landscape, cost_identity_check, delone_report, density_compare,
    grid_discretize, optimize_geometry, scaling_fit, solve_bot, sweep, w1_distance, Atom, AxisBox, DensitySpec,
    DiscreteMeasure, GriddedDensity, NodeKind, OracleMode, Point, Quantizer, QuantizerConfig, SolverConfig, Topology,
    TransportNetwork,
};
use branchquant_cli::commands::sweep_cmd;
use branchquant_cli::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use walkdir::WalkDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Every network solved anywhere in the suite, for the landscape checks.
#[derive(Default)]
struct Pool(Vec<TransportNetwork>);

impl Pool {
    fn add_quantizers(&mut self, qs: &[Quantizer]) {
        for q in qs {
            self.0.extend(q.networks().iter().cloned());
        }
    }
}

fn probability(rng: &mut ChaCha8Rng, k: usize) -> DiscreteMeasure {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::new(2, raw.iter().map(|m| Atom { x: Point::xy(rng.gen(), rng.gen()), m: m / total }).collect())
        .unwrap()
}

fn oracle_equivalence(pool: &mut Pool) -> Outcome {
    let t = Instant::now();
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=4);
        let sinks = probability(&mut rng, k);
        let source = DiscreteMeasure::dirac(2, Point::xy(rng.gen(), rng.gen()), 1.0).unwrap();
        let alpha = [0.6, 0.75, 0.9][(seed % 3) as usize];
        let net = solve_bot(&source, &sinks, alpha, &cfg).unwrap();
        let oracle = brute_force_bot(&source, &sinks, alpha, OracleMode::Continuous).unwrap();
        worst = worst.max((net.cost() - oracle.cost()) / oracle.cost());
        pool.0.push(net);
        pool.0.push(oracle);
    }
    let elapsed = t.elapsed();
    outcome(worst <= 1e-6 && elapsed <= Duration::from_secs(120), format!("worst gap {worst:.2e}, {:.1}s", elapsed.as_secs_f64()))
}

fn cost_identity(pool: &Pool) -> Outcome {
    let mut worst = 0.0f64;
    for net in &pool.0 {
        let field = compute_landscape(net).unwrap();
        let r = cost_identity_check(net, &field);
        if net.cost() > 0.0 {
            worst = worst.max(r / net.cost());
        } else if r > 0.0 {
            worst = f64::INFINITY;
        }
    }
    outcome(worst <= 1e-9, format!("{} networks, worst relative residual {worst:.2e}", pool.0.len()))
}

fn landscape_bound(pool: &Pool) -> Outcome {
    let mut sinks = 0;
    let mut violations = 0;
    for net in &pool.0 {
        let field = compute_landscape(net).unwrap();
        sinks += field.sinks().len();
        violations += field.distance_violations(1e-12);
    }
    outcome(violations == 0, format!("{violations} violations over {sinks} sinks"))
}

fn homogeneity(pool: &mut Pool) -> Outcome {
    let cfg = SolverConfig { multistarts: 2, ..SolverConfig::default() };
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (ks, kt) = (rng.gen_range(1..=2), rng.gen_range(1..=6));
        let mu = probability(&mut rng, ks);
        let nu = probability(&mut rng, kt);
        let alpha = rng.gen_range(0.55..=1.0);
        let lambda = 10f64.powf(rng.gen_range(-2.0..2.0));
        let m = 10f64.powf(rng.gen_range(-2.0..2.0));
        let net = solve_bot(&mu, &nu, alpha, &cfg).unwrap();
        let c = net.cost();
        let space = net.rescaled(lambda, 1.0).unwrap().cost();
        let mass = net.rescaled(1.0, m).unwrap().cost();
        worst = worst.max((space - lambda * c).abs() / (lambda * c)).max((mass - m.powf(alpha) * c).abs() / (m.powf(alpha) * c));
        pool.0.push(net);
    }
    outcome(worst <= 1e-9, format!("100 networks, worst relative error {worst:.2e}"))
}

fn branch_angle() -> Outcome {
    let alpha = 0.5;
    let topo =
        Topology::new(vec![NodeKind::Source, NodeKind::Steiner, NodeKind::Sink, NodeKind::Sink], &[(0, 1), (1, 2), (1, 3)]).unwrap();
    let start = TransportNetwork::new(
        2,
        alpha,
        topo,
        vec![Point::ORIGIN, Point::xy(0.6, 0.1), Point::xy(1.0, 1.0), Point::xy(1.0, -1.0)],
        vec![0.0, 0.0, 0.5, 0.5],
        vec![Some(0), None, Some(0), Some(1)],
    )
    .unwrap();
    let net = optimize_geometry(&start, &SolverConfig::default()).unwrap();
    let sinks = net.topology().sinks();
    let o = net.position(net.topology().parent(sinks[0]).unwrap());
    let (u, v) = (net.position(sinks[0]) - o, net.position(sinks[1]) - o);
    let angle = ((u.0[0] * v.0[0] + u.0[1] * v.0[1]) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos().to_degrees();

    // golden-section oracle over the branch point (x, 0)
    let f = |x: f64| x + 2.0 * 0.5f64.powf(alpha) * ((1.0 - x).powi(2) + 1.0).sqrt();
    let (mut a, mut b) = (0.0, 1.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) <= f(d) {
            b = d
        } else {
            a = c
        }
    }
    let x = (a + b) / 2.0;
    let oracle = 2.0 * (1.0 / (1.0 - x)).atan().to_degrees();
    outcome(
        (angle - 90.0).abs() <= 1.0 && (oracle - 90.0).abs() <= 1.0,
        format!("solver {angle:.4}°, oracle {oracle:.4}° at x* = {x:.2e}"),
    )
}

fn w1_bound(pool: &mut Pool) -> Outcome {
    let cfg = SolverConfig { multistarts: 2, ..SolverConfig::default() };
    let mut margin = f64::INFINITY;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let ks = rng.gen_range(1..=3);
        let kt = rng.gen_range(1..=10 - ks);
        let mu = probability(&mut rng, ks);
        let nu = probability(&mut rng, kt);
        let alpha = rng.gen_range(0.55..=1.0);
        let net = solve_bot(&mu, &nu, alpha, &cfg).unwrap();
        margin = margin.min(net.cost() - w1_distance(&mu, &nu).unwrap());
        pool.0.push(net);
    }
    outcome(margin >= -1e-9, format!("100 cases, min cost − W1 = {margin:.3e}"))
}

struct SweepRun {
    alpha: f64,
    qs: Vec<Quantizer>,
    slope: f64,
    elapsed: Duration,
}

const N_LIST: [usize; 5] = [2, 4, 8, 16, 32];

fn run_sweep(alpha: f64, nu: &DiscreteMeasure) -> SweepRun {
    let t = Instant::now();
    let qs = sweep(nu, alpha, &N_LIST, &QuantizerConfig::default()).unwrap();
    let elapsed = t.elapsed();
    let pts: Vec<(usize, f64)> = qs.iter().map(|q| (q.len(), q.total_cost())).collect();
    let slope = scaling_fit(&pts, alpha, 2).unwrap().fitted_slope;
    SweepRun { alpha, qs, slope, elapsed }
}

fn scaling_law(runs: &[SweepRun]) -> Outcome {
    let targets = [-0.35, -0.5];
    let pass = runs
        .iter()
        .zip(targets)
        .all(|(r, t)| (r.slope - t).abs() <= 0.1 && r.elapsed <= Duration::from_secs(600));
    let detail = runs
        .iter()
        .zip(targets)
        .map(|(r, t)| format!("α={}: slope {:.4} (target {t}), {:.1}s", r.alpha, r.slope, r.elapsed.as_secs_f64()))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn monotone(runs: &[SweepRun]) -> Outcome {
    let pass = runs.iter().all(|r| r.qs.windows(2).all(|w| w[1].total_cost() <= w[0].total_cost() + 1e-9));
    let detail = runs
        .iter()
        .map(|r| format!("α={}: {:?}", r.alpha, r.qs.iter().map(|q| (q.total_cost() * 1e4).round() / 1e4).collect::<Vec<_>>()))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn delone(run: &SweepRun, nu: &DiscreteMeasure) -> Outcome {
    let (w, d) = delone_report(&run.qs, nu).spreads();
    outcome(w <= 3.0 && d <= 3.0, format!("spread of ω·N^(1/2) {w:.3}, of δ·N^(1/2) {d:.3}"))
}

fn voronoi(run: &SweepRun, nu: &DiscreteMeasure) -> Outcome {
    let q = run.qs.iter().find(|q| q.len() == 8).unwrap();
    let agree: f64 = nu
        .atoms()
        .iter()
        .zip(q.assignment())
        .filter(|(a, &s)| {
            let best = (0..q.len()).min_by(|&i, &j| a.x.dist(&q.sites()[i]).total_cmp(&a.x.dist(&q.sites()[j]))).unwrap();
            best == s
        })
        .map(|(a, _)| a.m)
        .sum();
    outcome(agree >= 0.95, format!("nearest-site agreement {:.2}% of mass", 100.0 * agree))
}

fn uniformity(run: &SweepRun) -> Outcome {
    let rows = basin_stats(run.qs.last().unwrap());
    let mass = spread(rows.iter().map(|r| r.mass));
    let cost = spread(rows.iter().map(|r| r.scaled_cost));
    outcome(mass <= 10.0 && cost <= 10.0, format!("N=32: mass ratio {mass:.3}, scaled-cost ratio {cost:.3}"))
}

fn density_law(pool: &mut Pool) -> Outcome {
    let g = GriddedDensity {
        region: AxisBox::unit_cube(2),
        density: DensitySpec::LinearRamp { axis: 0, intercept: 0.0, slope: 1.0 },
        resolution: 64,
    };
    let nu = g.discretize().unwrap();
    let qs = sweep(&nu, 0.85, &[4, 16, 64], &QuantizerConfig::default()).unwrap();
    let w: Vec<f64> = density_compare(&qs, Some(&g), 0.85).unwrap().rows.iter().map(|r| r.w1).collect();
    pool.add_quantizers(&qs);
    let decreasing = w.windows(2).all(|p| p[1] < p[0]);
    let drop = 1.0 - w[2] / w[0];
    outcome(decreasing && drop >= 0.3, format!("W1 {:.4} → {:.4} → {:.4}, drop {:.1}%", w[0], w[1], w[2], 100.0 * drop))
}

fn files(dir: &Path) -> Vec<PathBuf> {
    WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.path().strip_prefix(dir).unwrap().to_path_buf())
        .collect()
}

fn determinism() -> Outcome {
    let cfg = RunConfig {
        measure: GriddedDensity { region: AxisBox::unit_cube(2), density: DensitySpec::Uniform, resolution: 12 },
        n_list: vec![1, 2, 4, 8],
        seed: 11,
        ..RunConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out_a = sweep_cmd(&cfg, None, a.path()).unwrap();
    let out_b = sweep_cmd(&cfg, None, b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    let same = out_a == out_b
        && fa == fb
        && fa.iter().all(|p| std::fs::read(a.path().join(p)).unwrap() == std::fs::read(b.path().join(p)).unwrap());
    outcome(same && !fa.is_empty(), format!("{} artifacts compared", fa.len()))
}

fn main() {
    let started = Instant::now();
    let mut pool = Pool::default();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    results.push((1, "oracle equivalence", oracle_equivalence(&mut pool)));
    results.push((4, "homogeneity", homogeneity(&mut pool)));
    results.push((5, "branching angle", branch_angle()));
    results.push((6, "W1 lower bound", w1_bound(&mut pool)));

    let nu = grid_discretize(&AxisBox::unit_cube(2), &DensitySpec::Uniform, 64).unwrap();
    let runs = [run_sweep(0.85, &nu), run_sweep(1.0, &nu)];
    for r in &runs {
        pool.add_quantizers(&r.qs);
    }
    results.push((7, "scaling law", scaling_law(&runs)));
    results.push((8, "monotonicity", monotone(&runs)));
    results.push((9, "Delone stability", delone(&runs[0], &nu)));
    results.push((10, "Voronoi specialization", voronoi(&runs[1], &nu)));
    results.push((11, "basin uniformity", uniformity(&runs[0])));
    results.push((12, "density law", density_law(&mut pool)));
    results.push((13, "determinism", determinism()));
    results.push((2, "cost identity", cost_identity(&pool)));
    results.push((3, "landscape lower bound", landscape_bound(&pool)));

    results.sort_by_key(|r| r.0);
    for (k, name, o) in &results {
        println!("criterion {k:>2} {name:<24} {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("{} passed, {failed} failed in {:.1}s", results.len() - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
