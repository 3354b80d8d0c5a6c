use branchquant::{
    brute_force_bot, grid_discretize, improve_sites, mass_optimal, partition_equivalence_check, solve_quantization,
    AxisBox, DensitySpec, DiscreteMeasure, OracleMode, Point, QuantizerConfig,
};

fn pair() -> DiscreteMeasure {
    DiscreteMeasure::from_pairs(2, &[(&[-1.0, 0.0], 0.5), (&[1.0, 0.0], 0.5)]).unwrap()
}

fn uniform(res: usize) -> DiscreteMeasure {
    grid_discretize(&AxisBox::unit_cube(2), &DensitySpec::Uniform, res).unwrap()
}

#[test]
fn single_site_matches_the_oracle() {
    let nu = pair();
    for alpha in [0.6, 0.75, 0.9] {
        let q = mass_optimal(&[Point::ORIGIN], &nu, alpha, &QuantizerConfig::default()).unwrap();
        let src = DiscreteMeasure::dirac(2, Point::ORIGIN, 1.0).unwrap();
        let oracle = brute_force_bot(&src, &nu, alpha, OracleMode::Continuous).unwrap().cost();
        assert!((q.total_cost() - oracle).abs() <= 1e-9 * oracle, "alpha {alpha}: {} vs {oracle}", q.total_cost());
        assert!((oracle - 2.0 * 0.5f64.powf(alpha)).abs() < 1e-9);
    }
}

#[test]
fn symmetric_basin_site_lands_on_the_segment() {
    let nu = pair();
    let cfg = QuantizerConfig::default();
    let q = mass_optimal(&[Point::xy(0.0, 0.3)], &nu, 1.0, &cfg).unwrap();
    assert!(q.total_cost() > 1.04);
    let q = improve_sites(&q, &nu, &cfg).unwrap();
    assert!((q.total_cost() - 1.0).abs() < 1e-9, "{}", q.total_cost());
    assert!(q.sites()[0].0[1].abs() < 1e-6);
}

#[test]
fn improve_sites_is_nonincreasing_and_settles() {
    let nu = uniform(10);
    let cfg = QuantizerConfig::default();
    let sites = [Point::xy(0.1, 0.1), Point::xy(0.9, 0.2), Point::xy(0.4, 0.9)];
    let q0 = mass_optimal(&sites, &nu, 0.8, &cfg).unwrap();
    let q1 = improve_sites(&q0, &nu, &cfg).unwrap();
    let q2 = improve_sites(&q1, &nu, &cfg).unwrap();
    for (a, b) in q1.networks().iter().zip(q0.networks()) {
        assert!(a.cost() <= b.cost() + 1e-12);
    }
    assert!(q1.total_cost() < q0.total_cost());
    assert!((q1.total_cost() - q2.total_cost()).abs() < cfg.solver.geometry_tol);
    q2.check_invariants(&nu, 1e-9).unwrap();
}

#[test]
fn two_point_quantization_of_two_atoms() {
    let nu = pair();
    for alpha in [0.6, 0.8, 1.0] {
        let q = solve_quantization(&nu, 1, alpha, &QuantizerConfig::default()).unwrap();
        // scan candidate sites with the exact solver
        let mut oracle = f64::INFINITY;
        for i in 0..=20 {
            for j in 0..=10 {
                let s = Point::xy(-1.0 + 0.1 * i as f64, 0.1 * j as f64);
                let src = DiscreteMeasure::dirac(2, s, 1.0).unwrap();
                oracle = oracle.min(brute_force_bot(&src, &nu, alpha, OracleMode::Continuous).unwrap().cost());
            }
        }
        assert!(q.total_cost() <= oracle + 1e-9, "alpha {alpha}: {} vs {oracle}", q.total_cost());
        assert!((q.total_cost() - 2f64.powf(1.0 - alpha)).abs() < 1e-9);
    }
    assert_eq!(solve_quantization(&nu, 2, 0.8, &QuantizerConfig::default()).unwrap().total_cost(), 0.0);
}

#[test]
fn beats_hand_built_competitors() {
    let nu = uniform(16);
    let cfg = QuantizerConfig::default();
    let q = solve_quantization(&nu, 3, 0.9, &cfg).unwrap();
    q.check_invariants(&nu, 1e-9).unwrap();
    let competitors = [
        [Point::xy(1.0 / 6.0, 0.5), Point::xy(0.5, 0.5), Point::xy(5.0 / 6.0, 0.5)],
        [Point::xy(0.25, 0.25), Point::xy(0.75, 0.25), Point::xy(0.5, 0.75)],
        [Point::xy(0.5, 0.2), Point::xy(0.2, 0.7), Point::xy(0.8, 0.7)],
    ];
    for sites in &competitors {
        let c = mass_optimal(sites, &nu, 0.9, &cfg).unwrap();
        assert!(q.total_cost() <= c.total_cost() + 1e-9, "{} > {}", q.total_cost(), c.total_cost());
    }
}

#[test]
fn mass_optimal_never_worse_than_nearest_site() {
    let nu = uniform(12);
    let mut cfg = QuantizerConfig::default();
    let sites = [Point::xy(0.2, 0.3), Point::xy(0.7, 0.8), Point::xy(0.8, 0.2), Point::xy(0.3, 0.9)];
    cfg.reassign_rounds = 0;
    let nearest = mass_optimal(&sites, &nu, 0.75, &cfg).unwrap();
    cfg.reassign_rounds = 6;
    let swept = mass_optimal(&sites, &nu, 0.75, &cfg).unwrap();
    assert!(swept.total_cost() <= nearest.total_cost());
    swept.check_invariants(&nu, 1e-9).unwrap();
}

#[test]
fn voronoi_assignment_at_alpha_one() {
    let nu = uniform(24);
    let q = solve_quantization(&nu, 8, 1.0, &QuantizerConfig::default()).unwrap();
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
    assert!(agree >= 0.95, "agreement {agree}");
}

#[test]
fn partition_residuals() {
    let cfg = QuantizerConfig::default();
    let nu = uniform(16);
    let q = solve_quantization(&nu, 1, 0.8, &cfg).unwrap();
    assert_eq!(partition_equivalence_check(&q, &nu, &cfg).unwrap(), 0.0);
    let q = solve_quantization(&nu, 4, 0.8, &cfg).unwrap();
    let r = partition_equivalence_check(&q, &nu, &cfg).unwrap();
    assert!(r <= 1e-6 * q.total_cost(), "{r}");

    // two far clusters solved separately are the oracle
    let mut pairs = Vec::new();
    for (cx, cy) in [(0.0, 0.0), (10.0, 0.0)] {
        for k in 0..5 {
            pairs.push(([cx + 0.2 * k as f64, cy + 0.1 * (k % 2) as f64], 0.1));
        }
    }
    let refs: Vec<(&[f64], f64)> = pairs.iter().map(|(c, m)| (&c[..], *m)).collect();
    let nu = DiscreteMeasure::from_pairs(2, &refs).unwrap();
    let q = solve_quantization(&nu, 2, 1.0, &cfg).unwrap();
    assert!(partition_equivalence_check(&q, &nu, &cfg).unwrap() <= 1e-9);
    let mut separate = 0.0;
    for half in [&refs[..5], &refs[5..]] {
        let part = DiscreteMeasure::from_pairs(2, half).unwrap();
        separate += solve_quantization(&part, 1, 1.0, &cfg).unwrap().total_cost();
    }
    assert!((q.total_cost() - separate).abs() <= 1e-9, "{} vs {separate}", q.total_cost());
}

#[test]
fn errors() {
    let cfg = QuantizerConfig::default();
    let nu = pair();
    assert!(solve_quantization(&nu, 0, 0.8, &cfg).is_err());
    assert!(mass_optimal(&[], &nu, 0.8, &cfg).is_err());
    assert!(mass_optimal(&[Point::ORIGIN], &nu, 0.4, &cfg).is_err());
    assert!(serde_json::from_str::<QuantizerConfig>(r#"{"bogus": 1}"#).is_err());
}
