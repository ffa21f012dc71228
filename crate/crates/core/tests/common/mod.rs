#![allow(dead_code)]

use secprice_core::formulation::{LpInstance, State, VarRole};
use secprice_core::io::parse_system;
use secprice_core::system::MarketSystem;

pub const SINGLE_BUS: &str = include_str!("../../../cli/examples/single_bus.json");
pub const TWO_BUS: &str = include_str!("../../../cli/examples/two_bus.json");

pub fn single_bus() -> MarketSystem {
    parse_system(SINGLE_BUS, "single_bus.json").unwrap()
}

pub fn two_bus() -> MarketSystem {
    parse_system(TWO_BUS, "two_bus.json").unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[track_caller]
pub fn assert_close(actual: f64, expected: f64, tol: f64) {
    assert!(
        close(actual, expected, tol),
        "expected {expected}, got {actual} (tolerance {tol})"
    );
}

#[track_caller]
pub fn assert_all_close(actual: &[f64], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len(), "length mismatch");
    for (a, e) in actual.iter().zip(expected) {
        assert_close(*a, *e, tol);
    }
}

/// The reference optimal schedule of the single-bus example as an LP point.
pub fn single_bus_reference_primal(lp: &LpInstance) -> Vec<f64> {
    let mut x = vec![0.0; lp.variables.len()];
    let mut set = |role, v| x[lp.var(role).unwrap()] = v;
    let g0 = [65.0, 30.0, 25.0];
    let r = [0.0, 30.0, 35.0];
    let post = [[0.0, 60.0, 60.0], [65.0, 0.0, 55.0], [65.0, 55.0, 0.0]];
    for i in 0..3 {
        set(VarRole::GenPre(i), g0[i]);
        set(VarRole::GenUp(i), r[i]);
        for k in 0..3 {
            set(VarRole::GenPost { gen: i, k }, post[k][i]);
        }
    }
    x
}

/// The reference optimal schedule of the two-bus example as an LP point.
/// Angles follow from the reference flows with bus 1 as reference.
pub fn two_bus_reference_primal(lp: &LpInstance) -> Vec<f64> {
    let mut x = vec![0.0; lp.variables.len()];
    let mut set = |role, v| x[lp.var(role).unwrap()] = v;
    let g0 = [75.0, 30.0, 15.0];
    let rup = [0.0, 30.0, 35.0];
    let rdn = [0.0, 5.0, 0.0];
    let d0 = [80.0, 40.0];
    let rdu = [10.0, 0.0];
    let g_post = [
        [0.0, 60.0, 50.0],
        [75.0, 0.0, 45.0],
        [75.0, 45.0, 0.0],
        [75.0, 25.0, 15.0],
    ];
    let d_post = [[70.0, 40.0], [80.0, 40.0], [80.0, 40.0], [75.0, 40.0]];
    let flows = [-5.0, -70.0, -5.0, -5.0, 0.0];
    for i in 0..3 {
        set(VarRole::GenPre(i), g0[i]);
        set(VarRole::GenUp(i), rup[i]);
        set(VarRole::GenDn(i), rdn[i]);
        for k in 0..4 {
            set(VarRole::GenPost { gen: i, k }, g_post[k][i]);
        }
    }
    for j in 0..2 {
        set(VarRole::DemPre(j), d0[j]);
        set(VarRole::DemUp(j), rdu[j]);
        for k in 0..4 {
            set(VarRole::DemPost { load: j, k }, d_post[k][j]);
        }
    }
    for (s, f) in flows.iter().enumerate() {
        // flow = base · (θ1 − θ2) / x with x = 1 p.u. and base 100 MVA
        set(
            VarRole::Angle {
                bus: 1,
                state: State::from_index(s),
            },
            -f / 100.0,
        );
    }
    x
}
