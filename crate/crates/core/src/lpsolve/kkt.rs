use serde::{Deserialize, Serialize};

use super::{DualSolution, Tolerances};
use crate::formulation::{ConstraintTag, LpInstance, Sense, VarBound};
use crate::system::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Primal minus dual objective, $.
    pub duality_gap: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    /// Largest stationarity residual (reduced-cost sign or free-column residual).
    pub max_kkt_residual: f64,
    pub slackness_violation: f64,
    /// Largest |π^{f+}·π^{f−}| over lines and states.
    pub flow_dual_product: f64,
    pub sign_violations: Vec<String>,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Primal objective minus the dual objective `bᵀy`.
pub fn duality_gap(lp: &LpInstance, primal: &[f64], dual: &DualSolution) -> f64 {
    lp.objective(primal) - dual_objective(lp, &dual.rows)
}

fn dual_objective(lp: &LpInstance, y: &[f64]) -> f64 {
    lp.constraints.iter().zip(y).map(|(c, yi)| c.rhs * yi).sum()
}

pub fn check_kkt(
    lp: &LpInstance,
    primal: &[f64],
    dual: &DualSolution,
    tol: &Tolerances,
) -> OptimalityReport {
    let y = &dual.rows;
    let mut failures = Vec::new();
    let mut sign_violations = Vec::new();

    let mut primal_infeasibility = 0.0f64;
    let mut slackness = 0.0f64;
    for (i, c) in lp.constraints.iter().enumerate() {
        let act = c.activity(primal);
        let viol = match c.sense {
            Sense::Le => act - c.rhs,
            Sense::Ge => c.rhs - act,
            Sense::Eq => (act - c.rhs).abs(),
        };
        primal_infeasibility = primal_infeasibility.max(viol.max(0.0));
        let wrong_sign = match c.sense {
            Sense::Le => y[i],
            Sense::Ge => -y[i],
            Sense::Eq => 0.0,
        };
        if wrong_sign > tol.sign {
            sign_violations.push(format!("{:?} multiplier {}", c.tag, y[i]));
        }
        if c.sense != Sense::Eq {
            slackness = slackness.max((y[i] * (act - c.rhs)).abs());
        }
    }
    for (j, v) in lp.variables.iter().enumerate() {
        if v.bound == VarBound::NonNegative {
            primal_infeasibility = primal_infeasibility.max(-primal[j]);
        }
    }

    let mut reduced = lp.variables.iter().map(|v| v.cost).collect::<Vec<_>>();
    for (i, c) in lp.constraints.iter().enumerate() {
        for &(j, a) in &c.coeffs {
            reduced[j] -= a * y[i];
        }
    }
    let mut stationarity = 0.0f64;
    for (j, v) in lp.variables.iter().enumerate() {
        let r = reduced[j];
        let resid = match v.bound {
            VarBound::Free => r.abs(),
            VarBound::NonNegative => (-r).max(0.0),
        };
        stationarity = stationarity.max(resid);
        if v.bound == VarBound::NonNegative {
            slackness = slackness.max((primal[j] * r).abs());
        }
    }

    if lp.kind == ModelKind::SingleBus {
        for k in 0..lp.dims.contingencies {
            if let Some(i) = lp.row(ConstraintTag::PostBalance { bus: 0, k }) {
                if y[i] < -tol.sign {
                    sign_violations.push(format!("single-bus post-contingency price {} < 0", y[i]));
                }
            }
        }
    }

    let mut flow_product = 0.0f64;
    for (lo, up) in dual.flow_lower.iter().zip(&dual.flow_upper) {
        for (a, b) in lo.iter().zip(up) {
            if let (Some(a), Some(b)) = (a, b) {
                flow_product = flow_product.max((a * b).abs());
            }
        }
    }

    let primal_objective = lp.objective(primal);
    let dual_obj = dual_objective(lp, y);
    let gap = primal_objective - dual_obj;
    let relative_gap = gap.abs() / (1.0 + primal_objective.abs());

    if primal_infeasibility > tol.feasibility {
        failures.push(format!("primal infeasibility {primal_infeasibility:.3e}"));
    }
    if stationarity > tol.slackness {
        failures.push(format!("stationarity residual {stationarity:.3e}"));
    }
    if slackness > tol.slackness {
        failures.push(format!("complementary slackness violation {slackness:.3e}"));
    }
    if relative_gap > tol.gap {
        failures.push(format!("duality gap {gap:.3e}"));
    }
    if flow_product > tol.slackness {
        failures.push(format!("flow multiplier product {flow_product:.3e}"));
    }
    if !sign_violations.is_empty() {
        failures.push(format!("{} multiplier sign violations", sign_violations.len()));
    }

    OptimalityReport {
        primal_objective,
        dual_objective: dual_obj,
        duality_gap: gap,
        relative_gap,
        primal_infeasibility: primal_infeasibility + 0.0,
        max_kkt_residual: stationarity,
        slackness_violation: slackness,
        flow_dual_product: flow_product,
        sign_violations,
        pass: failures.is_empty(),
        failures,
    }
}
