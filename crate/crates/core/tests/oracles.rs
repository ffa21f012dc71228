//! Cross-checks of the clearing LP against an independent solver and
//! brute-force enumeration.

mod common;

use common::*;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use secprice_core::formulation::{build_lp, LpInstance, Sense, VarBound};
use secprice_core::lpsolve::{check_kkt, duality_gap, solve, LpError, Tolerances};
use secprice_core::synth::{random_network, random_single_bus, Limits};
use secprice_core::system::{Bus, Contingency, Generator, Line, Load, MarketSystem};

fn reference_objective(lp: &LpInstance) -> Option<f64> {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = lp
        .variables
        .iter()
        .map(|v| {
            let bounds = match v.bound {
                VarBound::NonNegative => (0.0, f64::INFINITY),
                VarBound::Free => (f64::NEG_INFINITY, f64::INFINITY),
            };
            p.add_var(v.cost, bounds)
        })
        .collect();
    for c in &lp.constraints {
        let expr: Vec<_> = c.coeffs.iter().map(|&(j, a)| (vars[j], a)).collect();
        let op = match c.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Eq => ComparisonOp::Eq,
        };
        p.add_constraint(expr.as_slice(), op, c.rhs);
    }
    p.solve().ok().map(|s| s.objective())
}

fn triangle() -> MarketSystem {
    let bus = |id: &str, r| Bus {
        id: id.into(),
        is_reference: r,
    };
    let line = |id: &str, f: &str, t: &str, x, cap| Line {
        id: id.into(),
        from_bus: f.into(),
        to_bus: t.into(),
        reactance: x,
        capacity: cap,
    };
    let gen = |id: &str, b: &str, g_max, ru, rd, c, cu, cd| Generator {
        id: id.into(),
        bus: b.into(),
        g_max,
        r_up_max: ru,
        r_dn_max: rd,
        energy_offer: c,
        up_offer: cu,
        dn_offer: cd,
    };
    let load = |id: &str, b: &str, d_max, u, cu, cd| Load {
        id: id.into(),
        bus: b.into(),
        d_max,
        r_up_max: 10.0,
        r_dn_max: 10.0,
        utility: u,
        up_offer: cu,
        dn_offer: cd,
        fixed_demand: None,
    };
    let cont = |id: &str, g: &[&str], l: &[&str]| Contingency {
        id: id.into(),
        outaged_generators: g.iter().map(|s| s.to_string()).collect(),
        outaged_lines: l.iter().map(|s| s.to_string()).collect(),
    };
    MarketSystem {
        buses: vec![bus("n1", true), bus("n2", false), bus("n3", false)],
        lines: vec![
            line("a", "n1", "n2", 0.5, 40.0),
            line("b", "n2", "n3", 1.0, 30.0),
            line("c", "n1", "n3", 1.0, 50.0),
        ],
        generators: vec![
            gen("g1", "n1", 90.0, 40.0, 30.0, 15.0, 3.0, 2.0),
            gen("g2", "n1", 50.0, 50.0, 20.0, 25.0, 1.0, 1.0),
            gen("g3", "n2", 60.0, 30.0, 30.0, 40.0, 5.0, 4.0),
            gen("g4", "n3", 40.0, 20.0, 10.0, 70.0, 2.0, 6.0),
        ],
        loads: vec![load("d1", "n2", 70.0, 150.0, 20.0, 10.0), load("d2", "n3", 60.0, 110.0, 30.0, 15.0)],
        contingencies: vec![
            cont("out-g1", &["g1"], &[]),
            cont("out-g3", &["g3"], &[]),
            cont("out-a", &[], &["a"]),
        ],
        base_mva: 100.0,
        period_hours: 1.0,
    }
}

#[test]
fn triangle_matches_reference_solver() {
    let s = triangle();
    let lp = build_lp(&s).unwrap();
    let ours = solve(&lp).unwrap();
    let theirs = reference_objective(&lp).unwrap();
    assert_close(ours.primal.objective, theirs, 1e-6 * (1.0 + theirs.abs()));
    let report = check_kkt(&lp, &ours.primal.values, &ours.dual, &Tolerances::default());
    assert!(report.pass, "{:?}", report.failures);
}

#[test]
fn random_instances_match_reference_solver() {
    let tol = Tolerances::default();
    let mut solved = 0;
    for seed in 0..150 {
        for s in [random_network(seed, Limits::default()), random_single_bus(seed, Limits::default())] {
            let lp = build_lp(&s).unwrap();
            let reference = reference_objective(&lp);
            match solve(&lp) {
                Ok(sol) => {
                    let r = reference.expect("reference solver finds the same instance feasible");
                    assert_close(sol.primal.objective, r, 1e-6 * (1.0 + r.abs()));
                    let gap = duality_gap(&lp, &sol.primal.values, &sol.dual);
                    assert!(gap.abs() <= tol.gap * (1.0 + r.abs()), "seed {seed}: gap {gap}");
                    solved += 1;
                }
                Err(LpError::Infeasible(_)) => assert!(reference.is_none(), "seed {seed}"),
                Err(e) => panic!("seed {seed}: {e}"),
            }
        }
    }
    assert!(solved >= 200);
}

#[test]
fn two_generator_dispatch_matches_enumeration() {
    let mut s = single_bus();
    s.generators.truncate(2);
    s.contingencies.clear();
    s.generators[0].energy_offer = 10.0;
    s.generators[0].g_max = 5.0;
    s.generators[1].energy_offer = 15.0;
    s.generators[1].g_max = 5.0;
    s.loads[0].fixed_demand = Some(2.0);
    s.loads[0].d_max = 2.0;

    // with no contingencies reserves carry only cost, so the feasible set is
    // g1 + g2 = 2 inside the capacity box
    let mut best = f64::INFINITY;
    for step in 0..=40 {
        let g1 = step as f64 * 0.125;
        let g2 = 2.0 - g1;
        if (0.0..=5.0).contains(&g1) && (0.0..=5.0).contains(&g2) {
            best = best.min(10.0 * g1 + 15.0 * g2);
        }
    }
    assert_eq!(best, 20.0);
    let sol = solve(&build_lp(&s).unwrap()).unwrap();
    assert_close(sol.primal.objective, best, 1e-9);
    assert_all_close(&sol.primal.g0, &[2.0, 0.0], 1e-9);
}

#[test]
fn permuted_columns_give_a_valid_certificate() {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for s in [two_bus(), single_bus(), triangle()] {
        let lp = build_lp(&s).unwrap();
        let base = solve(&lp).unwrap();
        let mut order: Vec<usize> = (0..lp.variables.len()).collect();
        order.shuffle(&mut rng);
        let shuffled = lp.permute_variables(&order);
        let alt = solve(&shuffled).unwrap();
        assert_close(alt.primal.objective, base.primal.objective, 1e-6);
        // rows are untouched by the permutation, so the dual carries over
        let report = check_kkt(&lp, &base.primal.values, &alt.dual, &tol);
        assert!(report.pass, "{:?}", report.failures);
    }
}

#[test]
fn suboptimal_primal_has_positive_gap() {
    let s = two_bus();
    let lp = build_lp(&s).unwrap();
    let sol = solve(&lp).unwrap();
    let mut x = two_bus_reference_primal(&lp);
    // raise g2's committed up reserve; feasible but costlier
    let j = lp.var(secprice_core::formulation::VarRole::GenUp(1)).unwrap();
    x[j] += 5.0;
    let gap = duality_gap(&lp, &x, &sol.dual);
    assert!(gap > 1.0, "gap {gap}");
    let report = check_kkt(&lp, &x, &sol.dual, &Tolerances::default());
    assert!(!report.pass);
}
