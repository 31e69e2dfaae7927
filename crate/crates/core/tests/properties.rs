use nalgebra::DMatrix;
use num_rational::Ratio;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixeq::instances::{random_instance, random_series_parallel, Instance, RandomSpec};
use mixeq::oracle::grid_gap_oracle;
use mixeq::{
    braess, columns_independent, construct_baseline_from_mixed, costs, deterioration_report, exact_baseline,
    exact_mixed, social_cost, solve_mixed, vi_gap, CostParams, SolverConfig,
};

fn instance(seed: u64, exponents: Vec<f64>) -> Instance {
    let spec = RandomSpec { exponents, ..RandomSpec::default() };
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), &spec)
}

/// Rank of a 0/1 matrix by exact Gaussian elimination over the rationals.
fn exact_rank(rows: usize, cols: usize, entries: &[bool]) -> usize {
    let mut m: Vec<Vec<Ratio<i64>>> =
        (0..rows).map(|r| (0..cols).map(|c| Ratio::from_integer(i64::from(entries[r * cols + c]))).collect()).collect();
    let mut rank = 0;
    for c in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| m[r][c] != Ratio::from_integer(0)) else {
            continue;
        };
        m.swap(rank, pivot);
        let pivot_row = m[rank].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != rank && row[c] != Ratio::from_integer(0) {
                let factor = row[c] / pivot_row[c];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        rank += 1;
    }
    rank
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_independence_matches_exact_rank(
        (rows, cols, entries) in (1usize..=6, 1usize..=6)
            .prop_flat_map(|(r, c)| (Just(r), Just(c), proptest::collection::vec(any::<bool>(), r * c)))
    ) {
        let m = DMatrix::from_fn(rows, cols, |r, c| f64::from(u8::from(entries[r * cols + c])));
        let independent = columns_independent(&m, 1e-10).unwrap();
        prop_assert_eq!(independent, exact_rank(rows, cols, &entries) == cols);
    }

    #[test]
    fn path_sums_match_link_lists(seed in any::<u64>()) {
        let inst = instance(seed, vec![1.0]);
        let b: Vec<f64> = inst.network.links().iter().map(|l| l.cost.b).collect();
        let sums = inst.delta.path_sums(&b);
        for (p, sum) in sums.iter().enumerate() {
            let direct: f64 = inst.delta.path_links(p).iter().map(|&a| b[a]).sum();
            prop_assert!((sum - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_functions_are_consistent(k in 0.1f64..10.0, b in 0.0f64..10.0, n in 1.0f64..4.0, f in 0.0f64..1.0) {
        let c = CostParams::new(k, b, n).unwrap();
        prop_assert!(c.marginal_cost(f) >= c.travel_time(f));
        prop_assert!((c.marginal_cost(f) - (c.travel_time(f) + f * c.derivative(f))).abs() < 1e-12);
        prop_assert!((c.inverse_travel_time(c.travel_time(f)) - f).abs() < 1e-9);
        prop_assert!((c.total_time(f) - f * c.travel_time(f)).abs() < 1e-12);
    }

    #[test]
    fn solver_output_is_feasible_and_certified(seed in any::<u64>(), alpha in 0.0f64..=1.0, n in prop_oneof![Just(1.0), Just(2.0), Just(4.0)]) {
        let inst = instance(seed, vec![n]);
        let r = solve_mixed(&inst.network, &inst.delta, &SolverConfig::new(alpha)).unwrap();
        prop_assert!(r.converged);
        r.flow.check_feasible(1e-9).unwrap();
        let gap = vi_gap(&inst.network, &inst.delta, &r.flow).unwrap();
        prop_assert!(gap <= 1e-8 * r.social);
        prop_assert!(r.lambda_a >= r.lambda_h - 1e-12);
    }

    #[test]
    fn social_cost_never_below_system_optimum(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let inst = instance(seed, vec![1.0]);
        let opt = exact_mixed(&inst.network, &inst.delta, 1.0).unwrap();
        let s_opt = social_cost(&inst.network, &opt.link_flows(&inst.delta)).unwrap();
        let r = exact_mixed(&inst.network, &inst.delta, alpha).unwrap();
        prop_assert!(social_cost(&inst.network, &r.link_flows(&inst.delta)).unwrap() >= s_opt - 1e-9);
    }

    #[test]
    fn baseline_dominates_on_multigraphs(seed in any::<u64>(), alpha in 0.0f64..=1.0, n in prop_oneof![Just(1.0), Just(3.0)]) {
        let spec = RandomSpec { max_paths: 12, exponents: vec![n], ..RandomSpec::default() };
        let inst = random_series_parallel(&mut ChaCha8Rng::seed_from_u64(seed), &spec);
        let cfg = SolverConfig { outer_tol: 1e-13, inner_tol: 1e-14, ..SolverConfig::new(alpha) };
        let mixed = solve_mixed(&inst.network, &inst.delta, &cfg).unwrap();
        let base = construct_baseline_from_mixed(&inst.network, &inst.delta, &mixed).unwrap();
        prop_assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (b, h) in base.iter().zip(&mixed.flow.x_h) {
            prop_assert!(*b >= h - 1e-10);
        }
    }
}

#[test]
fn exact_baseline_matches_solver_at_zero() {
    for seed in 0..40 {
        let inst = instance(seed, vec![1.0]);
        let e = exact_baseline(&inst.network, &inst.delta).unwrap();
        let cfg = SolverConfig { outer_tol: 1e-13, inner_tol: 1e-14, ..SolverConfig::new(0.0) };
        let r = solve_mixed(&inst.network, &inst.delta, &cfg).unwrap();
        let f = e.link_flows(&inst.delta);
        assert!(f.iter().zip(&r.flow.f).all(|(a, b)| (a - b).abs() < 1e-7), "seed {seed}");
        assert!((e.lambda_h - r.lambda_h).abs() < 1e-8);
    }
}

#[test]
fn constructed_social_cost_is_exact_quadratic() {
    // On [0, hint] the exact mixed equilibrium coincides with the constructed
    // one, whose social cost is S̃ + α·cond + α²·second_order.
    let mut checked = 0;
    let nets: Vec<Instance> = std::iter::once({
        let net = braess::deterioration();
        Instance::new(net.clone(), Some(braess::declared_paths(&net))).unwrap()
    })
    .chain((0..150).map(|s| instance(1000 + s, vec![1.0])))
    .collect();
    for inst in &nets {
        let base = exact_baseline(&inst.network, &inst.delta).unwrap();
        let rep = deterioration_report(&inst.network, &inst.delta, &base).unwrap();
        if !rep.hypotheses.all() {
            continue;
        }
        let hint = rep.alpha_validity_hint.unwrap();
        for frac in [0.1, 0.5, 0.9] {
            let a = hint * frac;
            let e = exact_mixed(&inst.network, &inst.delta, a).unwrap();
            let s = social_cost(&inst.network, &e.link_flows(&inst.delta)).unwrap();
            let pred = rep.predicted_social_cost(a).unwrap();
            assert!((s - pred).abs() < 1e-9 * (1.0 + s), "S {s} vs predicted {pred} at alpha {a}");
        }
        checked += 1;
    }
    assert!(checked > 5);
}

#[test]
fn grid_oracle_brackets_exact_equilibrium_on_braess() {
    let net = braess::base_network();
    let inst = Instance::new(net.clone(), Some(braess::declared_paths(&net))).unwrap();
    for alpha in [0.0, 1.0] {
        let exact = exact_mixed(&inst.network, &inst.delta, alpha).unwrap();
        let grid = grid_gap_oracle(&inst.network, &inst.delta, alpha, 40).unwrap();
        let s_exact = social_cost(&inst.network, &exact.link_flows(&inst.delta)).unwrap();
        let s_grid = social_cost(&inst.network, &grid.flow.f).unwrap();
        // best grid point sits within one grid cell of the equilibrium
        assert!((s_exact - s_grid).abs() < 0.5, "{s_exact} vs {s_grid}");
        let e_gap = vi_gap(&inst.network, &inst.delta, &exact.flow(&inst.delta).unwrap()).unwrap();
        assert!(e_gap <= grid.gap + 1e-12);
    }
}

#[test]
fn beckmann_matches_closed_form_on_random_links() {
    let inst = instance(5, vec![2.0]);
    let m = inst.network.links().len();
    let f_h: Vec<f64> = (0..m).map(|a| 0.1 * (a as f64 + 1.0) / m as f64).collect();
    let f_a: Vec<f64> = (0..m).map(|a| 0.05 * a as f64 / m as f64).collect();
    let direct: f64 = inst
        .network
        .links()
        .iter()
        .enumerate()
        .map(|(a, l)| l.cost.integral(f_h[a] + f_a[a]) - l.cost.integral(f_a[a]))
        .sum();
    assert!((costs::beckmann_human(&inst.network, &f_h, &f_a).unwrap() - direct).abs() < 1e-12);
}
