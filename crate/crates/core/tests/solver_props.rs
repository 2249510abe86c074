mod common;

use proptest::prelude::*;
use tieralloc::distributed::{price_bound, run_algorithm2, write_trace_csv, DistributedOptions, DualProblem};
use tieralloc::macrocell::solve_proposed;
use tieralloc::smallcell::{
    check_feasible, objective_value, perspective_rate, solve_convex_relaxation, solve_minlp_exact,
};
use tieralloc::{ChannelGains, MacroAllocation, Scenario};

const NOISE: f64 = 1e-13;

fn instance(seed: u64) -> Option<(Scenario, ChannelGains, MacroAllocation)> {
    let (sc, g) = common::random_desk(seed);
    let m = solve_proposed(&g, &sc).ok()?;
    Some((sc, g, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perspective_is_concave(g1 in 0.01f64..1.0, p1 in 0.0f64..1.0, g2 in 0.01f64..1.0, p2 in 0.0f64..1.0, gain in 1e-11f64..1e-7, i in 0.0f64..1e-11) {
        let f = |a: f64, b: f64| perspective_rate(a, b, gain, i, NOISE).unwrap();
        let mid = f(0.5 * (g1 + g2), 0.5 * (p1 + p2));
        let avg = 0.5 * (f(g1, p1) + f(g2, p2));
        prop_assert!(mid >= avg - 1e-12 * avg.abs().max(1.0));
    }

    #[test]
    fn perspective_is_positively_homogeneous(g in 0.01f64..1.0, p in 0.0f64..1.0, t in 0.01f64..1.0, gain in 1e-11f64..1e-7) {
        let a = perspective_rate(t * g, t * p, gain, 0.0, NOISE).unwrap();
        let b = t * perspective_rate(g, p, gain, 0.0, NOISE).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn exact_is_feasible_and_bounded_by_relaxation(seed in 0u64..10_000) {
        let Some((sc, g, m)) = instance(seed) else { return Ok(()) };
        let exact = solve_minlp_exact(&m, &g, &sc).unwrap();
        prop_assert!(check_feasible(&exact, &m, &g, &sc).is_feasible());
        let relaxed = solve_convex_relaxation(&m, &g, &sc).unwrap();
        prop_assert!(check_feasible(&relaxed.allocation, &m, &g, &sc).is_feasible());
        prop_assert!(relaxed.objective >= objective_value(&exact, sc.epsilon) - 1e-8);
    }

    #[test]
    fn dual_function_is_convex_along_segments(seed in 0u64..10_000, a in prop::collection::vec(0.0f64..1.0, 3), b in prop::collection::vec(0.0f64..1.0, 3)) {
        let Some((sc, g, m)) = instance(seed) else { return Ok(()) };
        let dual = DualProblem::new(&m, &g, &sc).unwrap();
        let bound = price_bound(&sc);
        let pa: Vec<f64> = a[..dual.dim()].iter().map(|x| x * bound).collect();
        let pb: Vec<f64> = b[..dual.dim()].iter().map(|x| x * bound).collect();
        let mid: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| 0.5 * (x + y)).collect();
        let ea = dual.dual_function(&dual.expand(&pa)).unwrap();
        let eb = dual.dual_function(&dual.expand(&pb)).unwrap();
        let em = dual.dual_function(&dual.expand(&mid)).unwrap();
        // Each evaluation is inexact from below by at most its gap bound.
        prop_assert!(em.value <= 0.5 * (ea.upper + eb.upper) + 1e-9);
    }

    #[test]
    fn dual_bounds_the_relaxed_optimum(seed in 0u64..10_000, a in prop::collection::vec(0.0f64..1.0, 3)) {
        let Some((sc, g, m)) = instance(seed) else { return Ok(()) };
        let dual = DualProblem::new(&m, &g, &sc).unwrap();
        let prices: Vec<f64> = a[..dual.dim()].iter().map(|x| x * price_bound(&sc)).collect();
        let eval = dual.dual_function(&dual.expand(&prices)).unwrap();
        let relaxed = solve_convex_relaxation(&m, &g, &sc).unwrap();
        prop_assert!(eval.upper >= relaxed.objective - 1e-8);
    }
}

#[test]
fn subproblem_ignores_other_cells() {
    let mut checked = 0;
    for seed in 0..6 {
        let Some((sc, g, m)) = instance(seed) else { continue };
        let dual = DualProblem::new(&m, &g, &sc).unwrap();
        let prices = dual.expand(&vec![0.3 * price_bound(&sc); dual.dim()]);
        let before = dual.solve_subproblem(0, &prices).unwrap();

        let mut other = g.clone();
        for x in other.small_sue[1].iter_mut().flatten() {
            *x *= 7.0;
        }
        for x in other.macro_sue[1].iter_mut().flatten() {
            *x *= 0.2;
        }
        for x in other.small_mue[1].iter_mut().flatten() {
            *x *= 3.0;
        }
        let changed = DualProblem::new(&m, &other, &sc).unwrap();
        let after = changed.solve_subproblem(0, &prices).unwrap();
        assert_eq!(before.gamma, after.gamma);
        assert_eq!(before.power, after.power);
        assert_eq!(before.admit, after.admit);
        assert_eq!(before.value, after.value);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn distributed_trace_is_well_formed() {
    let (sc, g) = common::draw(&common::desk_config(), 11);
    let m = solve_proposed(&g, &sc).unwrap();
    let sol = run_algorithm2(&m, &g, &sc, &DistributedOptions::default()).unwrap();
    assert!(check_feasible(&sol.allocation, &m, &g, &sc).is_feasible());
    assert_eq!(sol.trace.len(), sol.iterations);
    for pair in sol.trace.windows(2) {
        assert!(pair[1].gap <= pair[0].gap + 1e-15);
        assert_eq!(pair[1].iteration, pair[0].iteration + 1);
    }
    assert!(sol.upper_bound >= sol.objective - 1e-9);

    let mut buf = Vec::new();
    write_trace_csv(&sol.trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,dual_upper,primal_lower,gap,max_violation_ratio"));
    assert_eq!(lines.count(), sol.trace.len());
}
