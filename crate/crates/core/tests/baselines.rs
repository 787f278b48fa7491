mod common;

use common::*;
use ncnum::baselines::*;
use ncnum::moments::{eval_utility, UtilitySpec, STEP_LIKE};
use proptest::prelude::*;

fn solve(text: &str, u: &UtilitySpec) -> ReferenceSolution {
    centralized_solve(&instance(text, u), &CentralConfig::default())
        .expect("central solver converges")
}

#[test]
fn linear_utility_fills_the_link() {
    let sol = solve(
        &line_network(10.0, 10.0),
        &utility(&[0.0, 0.0, 1.0], 0.0, 10.0),
    );
    assert!((sol.objective - 10.0).abs() < 1e-4, "{}", sol.objective);
    assert!(sol.residuals.capacity < 1e-6);
}

#[test]
fn square_root_utility_is_tight() {
    let sol = solve(
        &line_network(10.0, 10.0),
        &utility(&[0.0, 1.0, 0.0], 0.0, 10.0),
    );
    assert!(
        (sol.objective - 10f64.sqrt()).abs() < 1e-4,
        "{}",
        sol.objective
    );
}

#[test]
fn bottleneck_caps_the_rate() {
    let inst = instance(
        &line_network(10.0, 4.0),
        &utility(&[0.0, 0.0, 1.0], 0.0, 10.0),
    );
    let sol = centralized_solve(&inst, &CentralConfig::default()).unwrap();
    assert!((sol.objective - 4.0).abs() < 1e-4, "{}", sol.objective);
    assert!((inst.aggregates(&sol.x)[0] - 4.0).abs() < 1e-4);
}

#[test]
fn zero_utility_has_zero_optimum() {
    let sol = solve(
        &line_network(10.0, 10.0),
        &utility(&[0.0, 0.0, 0.0], 0.0, 10.0),
    );
    assert!(sol.objective.abs() < 1e-8);
}

#[test]
fn shared_link_is_split_evenly() {
    let inst = instance(
        &shared_link_network(1.0),
        &utility(&[0.0, 1.0, 0.0], 0.0, 10.0),
    );
    let sol = centralized_solve(&inst, &CentralConfig::default()).unwrap();
    let r = inst.aggregates(&sol.x);
    assert!(
        (r[0] - 0.5).abs() < 1e-3 && (r[1] - 0.5).abs() < 1e-3,
        "{r:?}"
    );
    assert!((sol.objective - 2.0 * 0.5f64.sqrt()).abs() < 1e-4);

    let oracle = brute_force_nonconvex(&inst, 0.25).unwrap();
    assert_eq!(oracle.rates, vec![0.5, 0.5]);
}

#[test]
fn oracle_matches_grid_argmax_on_one_link() {
    let u = UtilitySpec::new(STEP_LIKE.to_vec(), 0.0, 10.0, None).unwrap();
    let inst = instance(&line_network(10.0, 6.0), &u);
    let h = 0.05;
    let oracle = brute_force_nonconvex(&inst, h).unwrap();
    let best = (0..=120)
        .map(|i| i as f64 * h)
        .map(|r| (r, eval_utility(&u, r).unwrap()))
        .fold(
            (0.0, f64::NEG_INFINITY),
            |a, b| if b.1 > a.1 { b } else { a },
        );
    assert!(
        (oracle.rates[0] - best.0).abs() < 1e-9,
        "{} vs {}",
        oracle.rates[0],
        best.0
    );
    assert!((oracle.objective - best.1).abs() < 1e-9);
    assert_eq!(oracle.grid_step, h);
}

#[test]
fn pinned_rate_window() {
    let u = utility(&[0.0, 1.0, 0.0], 3.0, 3.0);
    let inst = instance(&line_network(10.0, 10.0), &u);
    let oracle = brute_force_nonconvex(&inst, 0.5).unwrap();
    assert_eq!(oracle.rates, vec![3.0]);
    assert!((oracle.objective - 3f64.sqrt()).abs() < 1e-12);
}

#[test]
fn oracle_rejects_bad_input() {
    let inst = toy_instance();
    assert!(matches!(
        brute_force_nonconvex(&inst, 0.0),
        Err(BaselineError::BadGridStep(_))
    ));
    assert!(matches!(
        brute_force_nonconvex(&inst, f64::NAN),
        Err(BaselineError::BadGridStep(_))
    ));
    let big = instance(TOY_NETWORK, &utility(&TOY_UTILITY, 0.0, 10.0));
    assert!(matches!(
        brute_force_nonconvex(&big, 1e-4),
        Err(BaselineError::TooLarge(_))
    ));
}

#[test]
fn toy_oracle_value_is_stable() {
    let oracle = brute_force_nonconvex(&toy_instance(), 0.25).unwrap();
    assert!(
        (oracle.objective - 4.2302).abs() < 1e-3,
        "{}",
        oracle.objective
    );
    let inst = toy_instance();
    assert!(inst.capacity_distance(&oracle.x) < 1e-9);
    assert!(inst.conservation_residual(&oracle.x) < 1e-9);
}

#[test]
fn relaxation_bounds_the_oracle() {
    let u = UtilitySpec::new(STEP_LIKE.to_vec(), 0.0, 10.0, None).unwrap();
    let inst = instance(&line_network(10.0, 6.0), &u);
    let sol = centralized_solve(&inst, &CentralConfig::default()).unwrap();
    let oracle = brute_force_nonconvex(&inst, 0.1).unwrap();
    let report = relaxation_gap(&sol, &oracle, 1e-6);
    assert!(report.upper_bound_holds, "{report:?}");
    assert_eq!(report.gap, report.relaxation - report.oracle);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // The h grid is a subset of the h/2 grid.
    #[test]
    fn halving_the_grid_never_hurts(cap in 1.0f64..10.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, h in 0.1f64..1.0) {
        let u = utility(&[0.0, c1, c2], 0.0, 10.0);
        let inst = instance(&line_network(10.0, cap), &u);
        let coarse = brute_force_nonconvex(&inst, h).unwrap();
        let fine = brute_force_nonconvex(&inst, h / 2.0).unwrap();
        prop_assert!(fine.objective >= coarse.objective - 1e-12);
        prop_assert!(fine.evaluated >= coarse.evaluated);
    }
}

/// `n` two-way splits in a row: `2^n` paths through `4n + 2` links.
fn diamond_chain(n: usize) -> String {
    let mut nodes = vec![
        r#"{ id = "s", kind = "source" }"#.to_string(),
        r#"{ id = "d", kind = "destination" }"#.to_string(),
    ];
    let mut links = vec![r#"{ id = "a", ends = ["s", "x0"], capacity = 1 }"#.to_string()];
    let mut routing = Vec::new();
    for i in 0..=n {
        nodes.push(format!(r#"{{ id = "x{i}", kind = "forwarding" }}"#));
    }
    for i in 0..n {
        let j = i + 1;
        for m in ["u", "v"] {
            nodes.push(format!(r#"{{ id = "{m}{i}", kind = "forwarding" }}"#));
            links.push(format!(
                r#"{{ id = "x{m}{i}", ends = ["x{i}", "{m}{i}"], capacity = 1 }}"#
            ));
            links.push(format!(
                r#"{{ id = "{m}x{i}", ends = ["{m}{i}", "x{j}"], capacity = 1 }}"#
            ));
            routing.push(format!(
                r#"{{ node = "{m}{i}", flow = "f", next = ["x{j}"] }}"#
            ));
        }
        routing.push(format!(
            r#"{{ node = "x{i}", flow = "f", next = ["u{i}", "v{i}"] }}"#
        ));
    }
    links.push(format!(
        r#"{{ id = "o", ends = ["x{n}", "d"], capacity = 1 }}"#
    ));
    routing.push(format!(r#"{{ node = "x{n}", flow = "f", next = ["d"] }}"#));
    format!(
        "nodes = [{}]\nlinks = [{}]\nflows = [{{ id = \"f\", source = \"s\", destination = \"d\" }}]\nrouting = [{}]\nsource_links = {{ s = [\"a\"] }}\n",
        nodes.join(", "),
        links.join(", "),
        routing.join(", ")
    )
}

#[test]
fn path_explosion_is_refused_before_enumeration() {
    let inst = instance(&diamond_chain(70), &utility(&[0.0, 1.0, 0.0], 0.0, 1.0));
    assert_eq!(inst.net.path_count(0), u64::MAX);
    match brute_force_nonconvex(&inst, 0.5) {
        Err(BaselineError::TooLarge(msg)) => assert!(msg.contains("paths"), "{msg}"),
        other => panic!("{:?}", other.map(|o| o.objective)),
    }
    let small = network(&diamond_chain(5));
    assert_eq!(small.path_count(0), 32);
    assert_eq!(small.paths(0).len(), 32);
}
