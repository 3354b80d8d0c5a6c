use branchquant::{
    ahlfors_constants, compute_landscape, cost_identity_check, grid_discretize, solve_bot, w1_distance, Atom, AxisBox,
    DensitySpec, DiscreteMeasure, Point, SolverConfig, TransportNetwork,
};
use proptest::prelude::*;

fn atoms() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.05..1.0f64), 1..=5)
}

fn probability(pts: &[(f64, f64, f64)]) -> DiscreteMeasure {
    let total: f64 = pts.iter().map(|p| p.2).sum();
    DiscreteMeasure::new(2, pts.iter().map(|&(x, y, m)| Atom { x: Point::xy(x, y), m: m / total }).collect()).unwrap()
}

fn solved(src: &[(f64, f64, f64)], snk: &[(f64, f64, f64)], alpha: f64) -> TransportNetwork {
    let cfg = SolverConfig { multistarts: 2, ..SolverConfig::default() };
    solve_bot(&probability(src), &probability(snk), alpha, &cfg).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn homogeneity_in_space_and_mass(
        src in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.05..1.0f64), 1..=2),
        snk in atoms(),
        alpha in 0.55..=1.0f64,
        lambda in 0.01..100.0f64,
        m in 0.01..100.0f64,
    ) {
        let net = solved(&src, &snk, alpha);
        let c = net.cost();
        prop_assume!(c > 0.0);
        prop_assert!(rel(net.rescaled(lambda, 1.0).unwrap().cost(), lambda * c) <= 1e-9);
        prop_assert!(rel(net.rescaled(1.0, m).unwrap().cost(), m.powf(alpha) * c) <= 1e-9);
        prop_assert!(rel(net.rescaled(lambda, m).unwrap().cost(), lambda * m.powf(alpha) * c) <= 1e-9);
    }

    #[test]
    fn classical_lower_bound(
        src in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.05..1.0f64), 1..=3),
        snk in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.05..1.0f64), 1..=7),
        alpha in 0.55..=1.0f64,
    ) {
        let net = solved(&src, &snk, alpha);
        let w = w1_distance(&probability(&src), &probability(&snk)).unwrap();
        prop_assert!(net.cost() >= w - 1e-9, "{} < {w}", net.cost());
    }

    #[test]
    fn solved_networks_are_consistent(snk in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.05..1.0f64), 1..=8), alpha in 0.55..=1.0f64) {
        let net = solved(&[(0.5, 0.5, 1.0)], &snk, alpha);
        net.check_invariants(1e-10).unwrap();
        let field = compute_landscape(&net).unwrap();
        prop_assert!(cost_identity_check(&net, &field) <= 1e-9 * net.cost().max(f64::MIN_POSITIVE));
        prop_assert_eq!(field.distance_violations(1e-12), 0);
        for (e, edge) in net.topology().edges().iter().enumerate() {
            if net.edge_length(e) > 0.0 {
                prop_assert!(field.z(edge.child) > field.z(edge.parent));
            }
        }
    }

    #[test]
    fn alpha_mass_is_nonincreasing_in_alpha(snk in atoms(), a in 0.55..1.0f64, b in 0.55..1.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let net = solved(&[(0.0, 0.0, 1.0)], &snk, lo);
        prop_assert!(net.with_alpha(hi).unwrap().cost() <= net.cost() + 1e-12);
        let at_one = solved(&[(0.0, 0.0, 1.0)], &snk, 1.0);
        prop_assert!(at_one.cost() <= net.with_alpha(1.0).unwrap().cost() + 1e-9);
    }

    #[test]
    fn w1_triangle_inequality(a in atoms(), b in atoms(), c in atoms()) {
        let (a, b, c) = (probability(&a), probability(&b), probability(&c));
        let ab = w1_distance(&a, &b).unwrap();
        let bc = w1_distance(&b, &c).unwrap();
        let ac = w1_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn canonicalize_is_idempotent(pts in prop::collection::vec((0..4u8, 0..4u8, 0.05..1.0f64), 1..12)) {
        let pairs: Vec<([f64; 2], f64)> = pts.iter().map(|&(x, y, m)| ([x as f64, y as f64], m)).collect();
        let refs: Vec<(&[f64], f64)> = pairs.iter().map(|(c, m)| (&c[..], *m)).collect();
        let once = DiscreteMeasure::from_pairs(2, &refs).unwrap().canonicalize();
        let twice = once.canonicalize();
        prop_assert_eq!(once.atoms(), twice.atoms());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn grid_mass_is_one(res in 2usize..24, slope in 0.0..5.0f64, r in 0.0..3.0f64) {
        let region = AxisBox::unit_cube(2);
        let specs = [
            DensitySpec::Uniform,
            DensitySpec::LinearRamp { axis: 0, intercept: 0.1, slope },
            DensitySpec::RadialRamp { center: vec![0.5, 0.5], intercept: r + 0.01, slope },
        ];
        for spec in &specs {
            let nu = grid_discretize(&region, spec, res).unwrap();
            prop_assert!((nu.total_mass() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn ahlfors_constants_scale_covariantly(lambda in 0.1..10.0f64, res in 4usize..10) {
        let nu = grid_discretize(&AxisBox::unit_cube(2), &DensitySpec::Uniform, res).unwrap();
        let a = ahlfors_constants(&nu, 6, 16, 3).unwrap();
        let b = ahlfors_constants(&nu.scaled_space(lambda), 6, 16, 3).unwrap();
        let k = lambda.powi(2);
        prop_assert!(rel(b.c_lower * k, a.c_lower) <= 1e-9);
        prop_assert!(rel(b.c_upper * k, a.c_upper) <= 1e-9);
        prop_assert!(a.c_lower <= a.c_upper);
    }
}
