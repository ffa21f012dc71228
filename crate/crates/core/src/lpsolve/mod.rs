//! Primal-dual LP solving and optimality certification.
//!
//! Dual sign convention, for `min cᵀx` with multipliers `y` on `Ax (sense) b`:
//! the Lagrangian is `cᵀx − yᵀ(Ax − b)`, so `≤` rows carry `y ≤ 0`, `≥` rows
//! carry `y ≥ 0` and equality rows are free. Balance-row multipliers are then
//! the nodal prices directly, a `FlowLower` multiplier is π^{f+} ≥ 0 and a
//! `FlowUpper` multiplier is π^{f−} ≤ 0.

mod kkt;
pub mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{ConstraintTag, LpInstance, Sense, State, VarBound, VarRole};
use crate::system::ModelKind;

pub use kkt::{check_kkt, duality_gap, OptimalityReport};
pub use simplex::{solve_raw, RawLp, RawRow, RawSolution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("LP is infeasible: {0}")]
    Infeasible(String),
    #[error("LP is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Primal feasibility, MW.
    pub feasibility: f64,
    /// Relative duality gap.
    pub gap: f64,
    /// Complementary slackness and stationarity residuals.
    pub slackness: f64,
    /// Money comparisons, $.
    pub money: f64,
    /// Allowed wrong-sign magnitude of an inequality multiplier.
    pub sign: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-7,
            gap: 1e-6,
            slackness: 1e-6,
            money: 1e-4,
            sign: 1e-9,
        }
    }
}

/// Optimal schedules keyed by role. For the single-bus model the demand
/// fields hold the inelastic demand in every state and reserves are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub g0: Vec<f64>,
    pub r_up: Vec<f64>,
    pub r_dn: Vec<f64>,
    /// `[k][generator]`
    pub g_post: Vec<Vec<f64>>,
    pub d0: Vec<f64>,
    pub rd_up: Vec<f64>,
    pub rd_dn: Vec<f64>,
    /// `[k][load]`
    pub d_post: Vec<Vec<f64>>,
    /// `[state][bus]`, empty for the single-bus model.
    pub angles: Vec<Vec<f64>>,
}

impl PrimalSolution {
    pub fn from_values(lp: &LpInstance, values: Vec<f64>) -> Self {
        let d = lp.dims;
        let get = |role: VarRole| lp.var(role).map_or(0.0, |j| values[j]);
        let g0 = (0..d.generators).map(|i| get(VarRole::GenPre(i))).collect();
        let r_up = (0..d.generators).map(|i| get(VarRole::GenUp(i))).collect();
        let r_dn = (0..d.generators).map(|i| get(VarRole::GenDn(i))).collect();
        let g_post = (0..d.contingencies)
            .map(|k| {
                (0..d.generators)
                    .map(|i| get(VarRole::GenPost { gen: i, k }))
                    .collect()
            })
            .collect();
        let (d0, rd_up, rd_dn, d_post, angles) = match lp.kind {
            ModelKind::SingleBus => (
                lp.fixed_demand.clone(),
                vec![0.0; d.loads],
                vec![0.0; d.loads],
                vec![lp.fixed_demand.clone(); d.contingencies],
                Vec::new(),
            ),
            ModelKind::Network => (
                (0..d.loads).map(|j| get(VarRole::DemPre(j))).collect(),
                (0..d.loads).map(|j| get(VarRole::DemUp(j))).collect(),
                (0..d.loads).map(|j| get(VarRole::DemDn(j))).collect(),
                (0..d.contingencies)
                    .map(|k| {
                        (0..d.loads)
                            .map(|j| get(VarRole::DemPost { load: j, k }))
                            .collect()
                    })
                    .collect(),
                (0..d.states())
                    .map(|s| {
                        (0..d.buses)
                            .map(|bus| {
                                get(VarRole::Angle {
                                    bus,
                                    state: State::from_index(s),
                                })
                            })
                            .collect()
                    })
                    .collect(),
            ),
        };
        let objective = lp.objective(&values);
        PrimalSolution {
            values,
            objective,
            g0,
            r_up,
            r_dn,
            g_post,
            d0,
            rd_up,
            rd_dn,
            d_post,
            angles,
        }
    }
}

/// Row multipliers with the balance and flow-limit ones broken out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub rows: Vec<f64>,
    /// π₀ per bus.
    pub pre_balance: Vec<f64>,
    /// π_k per `[k][bus]`.
    pub post_balance: Vec<Vec<f64>>,
    /// π^{f+} per `[state][line]`; `None` where the line is out of service.
    pub flow_lower: Vec<Vec<Option<f64>>>,
    /// π^{f−} per `[state][line]`.
    pub flow_upper: Vec<Vec<Option<f64>>>,
}

impl DualSolution {
    pub fn from_rows(lp: &LpInstance, rows: Vec<f64>) -> Self {
        let d = lp.dims;
        let nb = match lp.kind {
            ModelKind::SingleBus => 1,
            ModelKind::Network => d.buses,
        };
        let get = |tag: ConstraintTag| lp.row(tag).map(|i| rows[i]);
        let pre_balance = (0..nb)
            .map(|b| get(ConstraintTag::PreBalance(b)).unwrap_or(0.0))
            .collect();
        let post_balance = (0..d.contingencies)
            .map(|k| {
                (0..nb)
                    .map(|bus| get(ConstraintTag::PostBalance { bus, k }).unwrap_or(0.0))
                    .collect()
            })
            .collect();
        let per_line = |lower: bool| -> Vec<Vec<Option<f64>>> {
            (0..d.states())
                .map(|s| {
                    let state = State::from_index(s);
                    (0..d.lines)
                        .map(|line| {
                            if lower {
                                get(ConstraintTag::FlowLower { line, state })
                            } else {
                                get(ConstraintTag::FlowUpper { line, state })
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let flow_lower = per_line(true);
        let flow_upper = per_line(false);
        DualSolution {
            rows,
            pre_balance,
            post_balance,
            flow_lower,
            flow_upper,
        }
    }

    /// Combined flow multiplier π^f = π^{f+} + π^{f−} per `[state][line]`.
    pub fn flow_combined(&self) -> Vec<Vec<Option<f64>>> {
        self.flow_lower
            .iter()
            .zip(&self.flow_upper)
            .map(|(lo, up)| {
                lo.iter()
                    .zip(up)
                    .map(|(a, b)| match (a, b) {
                        (Some(a), Some(b)) => Some(a + b),
                        _ => None,
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub method: String,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub primal: PrimalSolution,
    pub dual: DualSolution,
    pub info: SolverInfo,
}

pub fn to_raw(lp: &LpInstance) -> RawLp {
    RawLp {
        costs: lp.variables.iter().map(|v| v.cost).collect(),
        free: lp
            .variables
            .iter()
            .map(|v| v.bound == VarBound::Free)
            .collect(),
        rows: lp
            .constraints
            .iter()
            .map(|c| RawRow {
                coeffs: c.coeffs.clone(),
                sense: c.sense,
                rhs: c.rhs,
            })
            .collect(),
    }
}

/// Solve to primal-dual optimality.
pub fn solve(lp: &LpInstance) -> Result<LpSolution, LpError> {
    let raw = solve_raw(&to_raw(lp))?;
    Ok(LpSolution {
        primal: PrimalSolution::from_values(lp, raw.x),
        dual: DualSolution::from_rows(lp, raw.y),
        info: SolverInfo {
            method: "dense two-phase primal simplex (Dantzig, Bland fallback)".into(),
            iterations: raw.iterations,
        },
    })
}

/// Extend a partial assignment of row multipliers to a full dual vector that
/// is sign-feasible, stationary and complementary to `primal`. Returns `None`
/// if no such completion exists.
pub fn complete_dual(
    lp: &LpInstance,
    primal: &[f64],
    fixed: &[(ConstraintTag, f64)],
    tol: &Tolerances,
) -> Option<DualSolution> {
    let m = lp.constraints.len();
    let mut pinned: Vec<Option<f64>> = vec![None; m];
    for &(tag, v) in fixed {
        pinned[lp.row(tag)?] = Some(v);
    }
    // Unknown multipliers, as nonnegative magnitudes (sign by row sense) or
    // free for equality rows.
    let mut column_of = vec![None; m];
    let mut direction = vec![0.0; m];
    let mut costs = Vec::new();
    let mut free = Vec::new();
    for (i, c) in lp.constraints.iter().enumerate() {
        if pinned[i].is_some() {
            continue;
        }
        let slack = c.activity(primal) - c.rhs;
        if c.sense != Sense::Eq && slack.abs() > tol.feasibility * (1.0 + c.rhs.abs()) {
            continue;
        }
        column_of[i] = Some(costs.len());
        direction[i] = match c.sense {
            Sense::Le => -1.0,
            Sense::Ge | Sense::Eq => 1.0,
        };
        costs.push(0.0);
        free.push(c.sense == Sense::Eq);
    }
    let mut rows = Vec::new();
    for (j, v) in lp.variables.iter().enumerate() {
        let mut coeffs = Vec::new();
        let mut rhs = v.cost;
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(jj, a) in &c.coeffs {
                if jj != j {
                    continue;
                }
                if let Some(p) = pinned[i] {
                    rhs -= a * p;
                } else if let Some(col) = column_of[i] {
                    coeffs.push((col, a * direction[i]));
                }
            }
        }
        let sense = if v.bound == VarBound::Free || primal[j] > tol.feasibility {
            Sense::Eq
        } else {
            Sense::Le
        };
        rows.push(RawRow { coeffs, sense, rhs });
    }
    let sol = solve_raw(&RawLp { costs, free, rows }).ok()?;
    let full = (0..m)
        .map(|i| match (pinned[i], column_of[i]) {
            (Some(p), _) => p,
            (None, Some(col)) => direction[i] * sol.x[col],
            (None, None) => 0.0,
        })
        .collect();
    Some(DualSolution::from_rows(lp, full))
}
