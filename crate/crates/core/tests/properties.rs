mod common;

use common::*;
use proptest::prelude::*;
use secprice_core::formulation::{build_lp, ConstraintTag, LpInstance, State};
use secprice_core::lpsolve::{solve, DualSolution, Tolerances};
use secprice_core::pricing::{
    best_response_gen, best_response_load, closed_form_gen, closed_form_load, ld_value,
    price_baseline, price_proposed, split_duals, GenSchedule, LoadSchedule,
};
use secprice_core::scenario::{run_system, InputInfo, RunArchive};
use secprice_core::pricing::Scheme;
use secprice_core::synth::{random_network, random_single_bus, Limits};
use secprice_core::system::{build_matrices, contingency_view, MarketSystem, ModelKind};

/// Multiples of 1/8 keep every product and sum exact in binary floating point.
fn dyadic(lo: i32, hi: i32) -> impl Strategy<Value = f64> {
    (lo * 8..=hi * 8).prop_map(|n| f64::from(n) / 8.0)
}

fn model() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::SingleBus), Just(ModelKind::Network)]
}

/// A dual vector for `lp` where only the balance and flow-limit rows carry
/// the given multipliers.
fn dual_from(
    lp: &LpInstance,
    pre: &[f64],
    post: &[Vec<f64>],
    flows: &[Vec<Option<f64>>],
) -> DualSolution {
    let mut rows = vec![0.0; lp.constraints.len()];
    let mut put = |tag, v| {
        if let Some(r) = lp.row(tag) {
            rows[r] = v;
        }
    };
    for (b, &v) in pre.iter().enumerate() {
        put(ConstraintTag::PreBalance(b), v);
    }
    for (k, row) in post.iter().enumerate() {
        for (bus, &v) in row.iter().enumerate() {
            put(ConstraintTag::PostBalance { bus, k }, v);
        }
    }
    for (s, row) in flows.iter().enumerate() {
        for (line, v) in row.iter().enumerate() {
            if let Some(v) = v {
                let state = State::from_index(s);
                put(ConstraintTag::FlowLower { line, state }, v.max(0.0));
                put(ConstraintTag::FlowUpper { line, state }, v.min(0.0));
            }
        }
    }
    DualSolution::from_rows(lp, rows)
}

/// Flow multipliers that cancel the angle terms: the price difference across
/// each in-service line.
fn balancing_flow_duals(s: &MarketSystem, pre: &[f64], post: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    let m = build_matrices(s);
    (0..=s.contingencies.len())
        .map(|state| {
            let prices = if state == 0 { pre } else { &post[state - 1] };
            (0..s.lines.len())
                .map(|l| {
                    let k = state.checked_sub(1);
                    s.line_in_service(l, k).then(|| {
                        (0..s.buses.len()).map(|b| m.incidence[(b, l)] * prices[b]).sum()
                    })
                })
                .collect()
        })
        .collect()
}

fn direct_objective(s: &MarketSystem, x: &secprice_core::lpsolve::PrimalSolution) -> f64 {
    let mut cost = 0.0;
    for (i, g) in s.generators.iter().enumerate() {
        cost += g.energy_offer * x.g0[i] + g.up_offer * x.r_up[i];
        if s.model_kind() == ModelKind::Network {
            cost += g.dn_offer * x.r_dn[i];
        }
    }
    if s.model_kind() == ModelKind::Network {
        for (j, d) in s.loads.iter().enumerate() {
            cost += d.up_offer * x.rd_up[j] + d.dn_offer * x.rd_dn[j] - d.utility * x.d0[j];
        }
    }
    cost
}

fn archive_of(s: &MarketSystem) -> Option<RunArchive> {
    let input = InputInfo {
        path: "generated".into(),
        sha256: String::new(),
    };
    run_system(s, input, &[Scheme::Baseline, Scheme::Proposed], &Tolerances::default()).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generator_best_response_is_closed_form(
        price in dyadic(-300, 300),
        g0 in dyadic(0, 100),
        r_up in dyadic(0, 50),
        r_dn in dyadic(0, 50),
        available in any::<bool>(),
        kind in model(),
    ) {
        let r_dn = r_dn.min(g0);
        let a = if available { 1.0 } else { 0.0 };
        let sched = GenSchedule { g0, r_up, r_dn };
        let direct = best_response_gen(price, sched, a, kind).value;
        prop_assert_eq!(direct, closed_form_gen(price, sched, a, kind));
    }

    #[test]
    fn load_best_response_is_closed_form(
        price in dyadic(-300, 300),
        d0 in dyadic(0, 100),
        r_up in dyadic(0, 50),
        r_dn in dyadic(0, 50),
    ) {
        let sched = LoadSchedule { d0, r_up: r_up.min(d0), r_dn };
        prop_assert_eq!(best_response_load(price, sched).value, closed_form_load(price, sched));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn split_duals_and_price_identities(
        pre in prop::collection::vec(-200.0..200.0f64, 2),
        post in prop::collection::vec(prop::collection::vec(-200.0..200.0f64, 2), 4),
    ) {
        let s = two_bus();
        let lp = build_lp(&s).unwrap();
        let flows = balancing_flow_duals(&s, &pre, &post);
        let dual = dual_from(&lp, &pre, &post, &flows);
        let split = split_duals(&dual);
        for k in 0..4 {
            for b in 0..2 {
                let (p, m) = (split.plus[k][b], split.minus[k][b]);
                prop_assert!(p >= 0.0 && m >= 0.0 && p * m == 0.0);
                prop_assert_eq!(p - m, post[k][b]);
            }
        }
        let base = price_baseline(&dual, ModelKind::Network);
        let prop_book = price_proposed(&dual, ModelKind::Network);
        for b in 0..2 {
            prop_assert_eq!(base.energy[b], prop_book.energy[b]);
            prop_assert!((base.security[b] - (prop_book.up[b] - prop_book.dn[b])).abs() < 1e-9);
            prop_assert!((base.energy[b] - pre[b] - base.security[b]).abs() < 1e-9);
        }
    }

    #[test]
    fn dual_function_bounds_the_optimum(
        seed in 0u64..10_000,
        draws in prop::collection::vec(prop::collection::vec(-300.0..300.0f64, 4), 6),
    ) {
        let s = random_network(seed, Limits::default());
        let lp = build_lp(&s).unwrap();
        let opt = solve(&lp).unwrap().primal.objective;
        let nb = s.buses.len();
        let pre = draws[0][..nb].to_vec();
        let post: Vec<Vec<f64>> = draws[1..=s.contingencies.len()]
            .iter()
            .map(|r| r[..nb].to_vec())
            .collect();
        let flows = balancing_flow_duals(&s, &pre, &post);
        let dual = dual_from(&lp, &pre, &post, &flows);
        let value = ld_value(&dual, &s);
        prop_assert!(value.is_finite());
        prop_assert!(value <= opt + 1e-6 * (1.0 + opt.abs()), "L(π) = {} > {}", value, opt);
    }

    #[test]
    fn single_bus_dual_function_bounds_the_optimum(
        seed in 0u64..10_000,
        pre in -200.0..200.0f64,
        post in prop::collection::vec(0.0..200.0f64, 5),
    ) {
        let s = random_single_bus(seed, Limits::default());
        let lp = build_lp(&s).unwrap();
        let Ok(sol) = solve(&lp) else { return Ok(()) };
        let nk = s.contingencies.len();
        let post: Vec<Vec<f64>> = post[..nk].iter().map(|&v| vec![v]).collect();
        let dual = dual_from(&lp, &[pre], &post, &vec![vec![]; nk + 1]);
        let opt = sol.primal.objective;
        prop_assert!(ld_value(&dual, &s) <= opt + 1e-6 * (1.0 + opt.abs()));
    }

    #[test]
    fn objective_matches_offer_sums(seed in 0u64..10_000, network in any::<bool>()) {
        let s = if network {
            random_network(seed, Limits::default())
        } else {
            random_single_bus(seed, Limits::default())
        };
        let lp = build_lp(&s).unwrap();
        let Ok(sol) = solve(&lp) else { return Ok(()) };
        let direct = direct_objective(&s, &sol.primal);
        prop_assert!((lp.objective(&sol.primal.values) - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        prop_assert!((sol.primal.objective - direct).abs() <= 1e-6 * (1.0 + direct.abs()));
    }

    #[test]
    fn network_matrix_identities(seed in 0u64..10_000) {
        let s = random_network(seed, Limits::default());
        let m = build_matrices(&s);
        for l in 0..s.lines.len() {
            prop_assert_eq!(m.incidence.column(l).sum(), 0.0);
            prop_assert!(m.branch_flow.row(l).sum().abs() < 1e-12);
        }
        for k in 0..s.contingencies.len() {
            let v = contingency_view(&s, k);
            for l in 0..s.lines.len() {
                prop_assert!(v.branch_flow.row(l).sum().abs() < 1e-12);
                if !s.line_in_service(l, Some(k)) {
                    prop_assert!(v.incidence.column(l).iter().all(|&a| a == 0.0));
                }
            }
        }
    }

    #[test]
    fn system_json_round_trip(seed in 0u64..10_000, network in any::<bool>()) {
        let s = if network {
            random_network(seed, Limits::default())
        } else {
            random_single_bus(seed, Limits::default())
        };
        let text = serde_json::to_string(&s).unwrap();
        let back: MarketSystem = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn archive_json_round_trip(seed in 0u64..10_000) {
        let s = random_network(seed, Limits::default());
        let archive = archive_of(&s).unwrap();
        let text = serde_json::to_string_pretty(&archive).unwrap();
        let back: RunArchive = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, archive);
    }

    #[test]
    fn proposed_scheme_is_neutral_and_adequate(seed in 0u64..10_000, network in any::<bool>()) {
        let s = if network {
            random_network(seed, Limits::default())
        } else {
            random_single_bus(seed, Limits::default())
        };
        let Some(archive) = archive_of(&s) else { return Ok(()) };
        prop_assert!(archive.optimality.pass, "{:?}", archive.optimality.failures);
        let r = &archive.scheme(Scheme::Proposed).unwrap().settlement;
        let tol = 1e-6 * (1.0 + r.system.consumer_payment.abs());
        prop_assert!(r.system.balance.abs() <= tol, "balance {}", r.system.balance);
        let min_profit = r
            .generators
            .iter()
            .map(|g| g.profit)
            .chain(r.consumers.iter().filter_map(|c| c.profit))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(min_profit >= -tol, "profit {}", min_profit);
    }
}
