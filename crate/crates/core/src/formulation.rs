//! Tagged linear programs for the single-bus and network clearing models.
//!
//! Every row carries a [`ConstraintTag`] and every column a [`VarRole`], so
//! solver output maps straight back to schedules and multipliers.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::system::{
    build_matrices, contingency_view, island_references, ContingencyView, MarketSystem, ModelKind,
};

/// Operating state: pre-contingency or contingency `k` (position in
/// `MarketSystem::contingencies`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum State {
    Pre,
    Post(usize),
}

impl State {
    /// 0 for the pre-contingency state, `k + 1` for contingency `k`.
    pub fn index(self) -> usize {
        match self {
            State::Pre => 0,
            State::Post(k) => k + 1,
        }
    }

    pub fn from_index(s: usize) -> Self {
        if s == 0 {
            State::Pre
        } else {
            State::Post(s - 1)
        }
    }

    pub fn contingency(self) -> Option<usize> {
        match self {
            State::Pre => None,
            State::Post(k) => Some(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarRole {
    GenPre(usize),
    GenUp(usize),
    GenDn(usize),
    GenPost { gen: usize, k: usize },
    DemPre(usize),
    DemUp(usize),
    DemDn(usize),
    DemPost { load: usize, k: usize },
    Angle { bus: usize, state: State },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintTag {
    PreBalance(usize),
    PostBalance { bus: usize, k: usize },
    /// `f ≤ F`; its multiplier is π^{f−} (≤ 0).
    FlowUpper { line: usize, state: State },
    /// `f ≥ −F`; its multiplier is π^{f+} (≥ 0).
    FlowLower { line: usize, state: State },
    GenUpLink { gen: usize, k: usize },
    GenDnLink { gen: usize, k: usize },
    GenCapUp(usize),
    GenCapDn(usize),
    GenResUpCap(usize),
    GenResDnCap(usize),
    DemUpLink { load: usize, k: usize },
    DemDnLink { load: usize, k: usize },
    DemLower(usize),
    DemUpper(usize),
    DemResUpCap(usize),
    DemResDnCap(usize),
    RefAngle { bus: usize, state: State },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarBound {
    NonNegative,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub role: VarRole,
    pub bound: VarBound,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub tag: ConstraintTag,
    pub sense: Sense,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// Entity counts of the system an LP was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub buses: usize,
    pub lines: usize,
    pub generators: usize,
    pub loads: usize,
    pub contingencies: usize,
}

impl Dimensions {
    pub fn of(system: &MarketSystem) -> Self {
        Dimensions {
            buses: system.buses.len(),
            lines: system.lines.len(),
            generators: system.generators.len(),
            loads: system.loads.len(),
            contingencies: system.contingencies.len(),
        }
    }

    pub fn states(&self) -> usize {
        self.contingencies + 1
    }
}

/// A minimisation LP whose rows and columns carry semantic tags.
#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    pub kind: ModelKind,
    pub dims: Dimensions,
    /// Inelastic demand per load (single-bus model only; empty otherwise).
    pub fixed_demand: Vec<f64>,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    var_index: HashMap<VarRole, usize>,
    row_index: HashMap<ConstraintTag, usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
}

impl LpInstance {
    pub fn new(
        kind: ModelKind,
        dims: Dimensions,
        fixed_demand: Vec<f64>,
        variables: Vec<Variable>,
        constraints: Vec<Constraint>,
    ) -> Self {
        let var_index = variables
            .iter()
            .enumerate()
            .map(|(j, v)| (v.role, j))
            .collect();
        let row_index = constraints
            .iter()
            .enumerate()
            .map(|(i, c)| (c.tag, i))
            .collect();
        LpInstance {
            kind,
            dims,
            fixed_demand,
            variables,
            constraints,
            var_index,
            row_index,
        }
    }

    pub fn var(&self, role: VarRole) -> Option<usize> {
        self.var_index.get(&role).copied()
    }

    pub fn row(&self, tag: ConstraintTag) -> Option<usize> {
        self.row_index.get(&tag).copied()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .map(|(v, xi)| v.cost * xi)
            .sum()
    }

    /// Same LP with columns reordered: new column `n` is old column `order[n]`.
    pub fn permute_variables(&self, order: &[usize]) -> LpInstance {
        assert_eq!(order.len(), self.variables.len());
        let mut new_pos = vec![0; order.len()];
        for (n, &o) in order.iter().enumerate() {
            new_pos[o] = n;
        }
        let variables = order.iter().map(|&o| self.variables[o].clone()).collect();
        let constraints = self
            .constraints
            .iter()
            .map(|c| Constraint {
                coeffs: c.coeffs.iter().map(|&(j, a)| (new_pos[j], a)).collect(),
                ..c.clone()
            })
            .collect();
        LpInstance::new(
            self.kind,
            self.dims,
            self.fixed_demand.clone(),
            variables,
            constraints,
        )
    }
}

struct Builder {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    index: HashMap<VarRole, usize>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            variables: Vec::new(),
            constraints: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn var(&mut self, name: String, role: VarRole, bound: VarBound, cost: f64) -> usize {
        let j = self.variables.len();
        self.variables.push(Variable {
            name,
            role,
            bound,
            cost,
        });
        self.index.insert(role, j);
        j
    }

    fn at(&self, role: VarRole) -> usize {
        self.index[&role]
    }

    fn row(&mut self, tag: ConstraintTag, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let coeffs = coeffs.into_iter().filter(|&(_, a)| a != 0.0).collect();
        self.constraints.push(Constraint {
            tag,
            sense,
            coeffs,
            rhs,
        });
    }
}

fn state_label(system: &MarketSystem, state: State) -> String {
    match state {
        State::Pre => "pre".into(),
        State::Post(k) => system.contingencies[k].id.clone(),
    }
}

/// Pick the builder matching `system.model_kind()`.
pub fn build_lp(system: &MarketSystem) -> Result<LpInstance, FormulationError> {
    match system.model_kind() {
        ModelKind::SingleBus => build_single_bus_lp(system),
        ModelKind::Network => build_network_lp(system),
    }
}

/// Single-bus energy and up-reserve co-optimisation under generator outages.
pub fn build_single_bus_lp(system: &MarketSystem) -> Result<LpInstance, FormulationError> {
    if system.model_kind() != ModelKind::SingleBus {
        return Err(FormulationError::ModelMismatch(
            "single-bus model needs one bus, no lines and inelastic loads".into(),
        ));
    }
    if system.contingencies.iter().any(|c| !c.outaged_lines.is_empty()) {
        return Err(FormulationError::ModelMismatch(
            "single-bus contingencies may only outage generators".into(),
        ));
    }
    let ni = system.generators.len();
    let nk = system.contingencies.len();
    let demand = system.fixed_demand();
    let views: Vec<ContingencyView> = (0..nk).map(|k| contingency_view(system, k)).collect();

    let mut b = Builder::new();
    for (i, g) in system.generators.iter().enumerate() {
        b.var(format!("g0_{}", g.id), VarRole::GenPre(i), VarBound::NonNegative, g.energy_offer);
    }
    for (i, g) in system.generators.iter().enumerate() {
        b.var(format!("rup_{}", g.id), VarRole::GenUp(i), VarBound::NonNegative, g.up_offer);
    }
    for (k, c) in system.contingencies.iter().enumerate() {
        for (i, g) in system.generators.iter().enumerate() {
            b.var(
                format!("gk_{}_{}", c.id, g.id),
                VarRole::GenPost { gen: i, k },
                VarBound::NonNegative,
                0.0,
            );
        }
    }

    let pre = (0..ni).map(|i| (b.at(VarRole::GenPre(i)), 1.0)).collect();
    b.row(ConstraintTag::PreBalance(0), pre, Sense::Eq, demand);
    for k in 0..nk {
        let post = (0..ni)
            .map(|i| (b.at(VarRole::GenPost { gen: i, k }), 1.0))
            .collect();
        b.row(ConstraintTag::PostBalance { bus: 0, k }, post, Sense::Eq, demand);
    }
    for (k, view) in views.iter().enumerate() {
        for i in 0..ni {
            let a = view.a(i);
            b.row(
                ConstraintTag::GenUpLink { gen: i, k },
                vec![
                    (b.at(VarRole::GenPost { gen: i, k }), 1.0),
                    (b.at(VarRole::GenPre(i)), -a),
                    (b.at(VarRole::GenUp(i)), -a),
                ],
                Sense::Le,
                0.0,
            );
        }
    }
    for (i, g) in system.generators.iter().enumerate() {
        b.row(
            ConstraintTag::GenCapUp(i),
            vec![(b.at(VarRole::GenPre(i)), 1.0), (b.at(VarRole::GenUp(i)), 1.0)],
            Sense::Le,
            g.g_max,
        );
    }
    for (i, g) in system.generators.iter().enumerate() {
        b.row(
            ConstraintTag::GenResUpCap(i),
            vec![(b.at(VarRole::GenUp(i)), 1.0)],
            Sense::Le,
            g.r_up_max,
        );
    }
    let fixed = system
        .loads
        .iter()
        .map(|l| l.fixed_demand.unwrap_or(0.0))
        .collect();
    Ok(LpInstance::new(
        ModelKind::SingleBus,
        Dimensions::of(system),
        fixed,
        b.variables,
        b.constraints,
    ))
}

/// Network co-optimisation of energy, up/down reserves from generators and
/// loads, under generator and line outages with a DC flow model.
pub fn build_network_lp(system: &MarketSystem) -> Result<LpInstance, FormulationError> {
    if system.loads.iter().any(|l| l.fixed_demand.is_some()) {
        return Err(FormulationError::ModelMismatch(
            "network model needs elastic loads (no fixed_demand)".into(),
        ));
    }
    if system.buses.is_empty() {
        return Err(FormulationError::ModelMismatch("network model needs buses".into()));
    }
    let ni = system.generators.len();
    let nj = system.loads.len();
    let nk = system.contingencies.len();
    let nb = system.buses.len();
    let matrices = build_matrices(system);
    let views: Vec<ContingencyView> = (0..nk).map(|k| contingency_view(system, k)).collect();
    let states: Vec<State> = std::iter::once(State::Pre)
        .chain((0..nk).map(State::Post))
        .collect();

    let mut b = Builder::new();
    for (i, g) in system.generators.iter().enumerate() {
        b.var(format!("g0_{}", g.id), VarRole::GenPre(i), VarBound::NonNegative, g.energy_offer);
        b.var(format!("rup_{}", g.id), VarRole::GenUp(i), VarBound::NonNegative, g.up_offer);
        b.var(format!("rdn_{}", g.id), VarRole::GenDn(i), VarBound::NonNegative, g.dn_offer);
    }
    for (j, d) in system.loads.iter().enumerate() {
        b.var(format!("d0_{}", d.id), VarRole::DemPre(j), VarBound::NonNegative, -d.utility);
        b.var(format!("rdup_{}", d.id), VarRole::DemUp(j), VarBound::NonNegative, d.up_offer);
        b.var(format!("rddn_{}", d.id), VarRole::DemDn(j), VarBound::NonNegative, d.dn_offer);
    }
    for (k, c) in system.contingencies.iter().enumerate() {
        for (i, g) in system.generators.iter().enumerate() {
            b.var(
                format!("gk_{}_{}", c.id, g.id),
                VarRole::GenPost { gen: i, k },
                VarBound::NonNegative,
                0.0,
            );
        }
        for (j, d) in system.loads.iter().enumerate() {
            b.var(
                format!("dk_{}_{}", c.id, d.id),
                VarRole::DemPost { load: j, k },
                VarBound::NonNegative,
                0.0,
            );
        }
    }
    for &state in &states {
        for (bus, bb) in system.buses.iter().enumerate() {
            b.var(
                format!("theta_{}_{}", state_label(system, state), bb.id),
                VarRole::Angle { bus, state },
                VarBound::Free,
                0.0,
            );
        }
    }

    // Nodal balance: generation − outflow = demand, flows in MW.
    for &state in &states {
        let k = state.contingency();
        for bus in 0..nb {
            let mut coeffs = Vec::new();
            for i in (0..ni).filter(|&i| system.generator_bus(i) == bus) {
                let role = match k {
                    None => VarRole::GenPre(i),
                    Some(k) => VarRole::GenPost { gen: i, k },
                };
                coeffs.push((b.at(role), 1.0));
            }
            for j in (0..nj).filter(|&j| system.load_bus(j) == bus) {
                let role = match k {
                    None => VarRole::DemPre(j),
                    Some(k) => VarRole::DemPost { load: j, k },
                };
                coeffs.push((b.at(role), -1.0));
            }
            let (inc, flow) = match k {
                None => (&matrices.incidence, &matrices.branch_flow),
                Some(k) => (&views[k].incidence, &views[k].branch_flow),
            };
            for t in 0..nb {
                let lap: f64 = (0..system.lines.len())
                    .map(|l| inc[(bus, l)] * flow[(l, t)])
                    .sum();
                if lap != 0.0 {
                    coeffs.push((
                        b.at(VarRole::Angle { bus: t, state }),
                        -system.base_mva * lap,
                    ));
                }
            }
            let tag = match k {
                None => ConstraintTag::PreBalance(bus),
                Some(k) => ConstraintTag::PostBalance { bus, k },
            };
            b.row(tag, coeffs, Sense::Eq, 0.0);
        }
    }

    for &state in &states {
        for (l, line) in system.lines.iter().enumerate() {
            if !system.line_in_service(l, state.contingency()) {
                continue;
            }
            let coeffs: Vec<(usize, f64)> = (0..nb)
                .filter(|&t| matrices.branch_flow[(l, t)] != 0.0)
                .map(|t| {
                    (
                        b.at(VarRole::Angle { bus: t, state }),
                        system.base_mva * matrices.branch_flow[(l, t)],
                    )
                })
                .collect();
            b.row(
                ConstraintTag::FlowUpper { line: l, state },
                coeffs.clone(),
                Sense::Le,
                line.capacity,
            );
            b.row(
                ConstraintTag::FlowLower { line: l, state },
                coeffs,
                Sense::Ge,
                -line.capacity,
            );
        }
    }

    for (k, view) in views.iter().enumerate() {
        for i in 0..ni {
            let a = view.a(i);
            let gk = b.at(VarRole::GenPost { gen: i, k });
            let g0 = b.at(VarRole::GenPre(i));
            b.row(
                ConstraintTag::GenUpLink { gen: i, k },
                vec![(gk, 1.0), (g0, -a), (b.at(VarRole::GenUp(i)), -a)],
                Sense::Le,
                0.0,
            );
            b.row(
                ConstraintTag::GenDnLink { gen: i, k },
                vec![(gk, 1.0), (g0, -a), (b.at(VarRole::GenDn(i)), a)],
                Sense::Ge,
                0.0,
            );
        }
    }
    for (i, g) in system.generators.iter().enumerate() {
        let (g0, up, dn) = (
            b.at(VarRole::GenPre(i)),
            b.at(VarRole::GenUp(i)),
            b.at(VarRole::GenDn(i)),
        );
        b.row(ConstraintTag::GenCapUp(i), vec![(g0, 1.0), (up, 1.0)], Sense::Le, g.g_max);
        b.row(ConstraintTag::GenCapDn(i), vec![(g0, 1.0), (dn, -1.0)], Sense::Ge, 0.0);
        b.row(ConstraintTag::GenResUpCap(i), vec![(up, 1.0)], Sense::Le, g.r_up_max);
        b.row(ConstraintTag::GenResDnCap(i), vec![(dn, 1.0)], Sense::Le, g.r_dn_max);
    }

    for k in 0..nk {
        for j in 0..nj {
            let dk = b.at(VarRole::DemPost { load: j, k });
            let d0 = b.at(VarRole::DemPre(j));
            b.row(
                ConstraintTag::DemUpLink { load: j, k },
                vec![(dk, 1.0), (d0, -1.0), (b.at(VarRole::DemUp(j)), 1.0)],
                Sense::Ge,
                0.0,
            );
            b.row(
                ConstraintTag::DemDnLink { load: j, k },
                vec![(dk, 1.0), (d0, -1.0), (b.at(VarRole::DemDn(j)), -1.0)],
                Sense::Le,
                0.0,
            );
        }
    }
    for (j, d) in system.loads.iter().enumerate() {
        let (d0, up, dn) = (
            b.at(VarRole::DemPre(j)),
            b.at(VarRole::DemUp(j)),
            b.at(VarRole::DemDn(j)),
        );
        b.row(ConstraintTag::DemLower(j), vec![(d0, 1.0), (up, -1.0)], Sense::Ge, 0.0);
        b.row(ConstraintTag::DemUpper(j), vec![(d0, 1.0), (dn, 1.0)], Sense::Le, d.d_max);
        b.row(ConstraintTag::DemResUpCap(j), vec![(up, 1.0)], Sense::Le, d.r_up_max);
        b.row(ConstraintTag::DemResDnCap(j), vec![(dn, 1.0)], Sense::Le, d.r_dn_max);
    }

    for &state in &states {
        for bus in island_references(system, state.contingency()) {
            b.row(
                ConstraintTag::RefAngle { bus, state },
                vec![(b.at(VarRole::Angle { bus, state }), 1.0)],
                Sense::Eq,
                0.0,
            );
        }
    }

    Ok(LpInstance::new(
        ModelKind::Network,
        Dimensions::of(system),
        Vec::new(),
        b.variables,
        b.constraints,
    ))
}

/// Expected (variables, constraints) of the LP built for `system`.
pub fn expected_dimensions(system: &MarketSystem) -> (usize, usize) {
    let ni = system.generators.len();
    let nj = system.loads.len();
    let nk = system.contingencies.len();
    let nb = system.buses.len();
    match system.model_kind() {
        ModelKind::SingleBus => (2 * ni + nk * ni, 1 + nk + nk * ni + 2 * ni),
        ModelKind::Network => {
            let vars = 3 * ni + 3 * nj + nk * (ni + nj) + (nk + 1) * nb;
            let states = std::iter::once(None).chain((0..nk).map(Some));
            let (mut lines_in_service, mut islands) = (0, 0);
            for s in states {
                lines_in_service += (0..system.lines.len())
                    .filter(|&l| system.line_in_service(l, s))
                    .count();
                islands += crate::system::islands(system, s).len();
            }
            let rows = (nk + 1) * nb
                + 2 * lines_in_service
                + 2 * nk * ni
                + 4 * ni
                + 2 * nk * nj
                + 4 * nj
                + islands;
            (vars, rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Bus, Contingency, Generator, Load};

    fn single_bus() -> MarketSystem {
        let gens = [(100.0, 50.0, 20.0, 2.0), (60.0, 30.0, 50.0, 5.0), (70.0, 35.0, 100.0, 10.0)];
        MarketSystem {
            buses: vec![Bus {
                id: "1".into(),
                is_reference: true,
            }],
            lines: vec![],
            generators: gens
                .iter()
                .enumerate()
                .map(|(n, &(g, r, c, q))| Generator {
                    id: format!("{}", n + 1),
                    bus: "1".into(),
                    g_max: g,
                    r_up_max: r,
                    r_dn_max: 0.0,
                    energy_offer: c,
                    up_offer: q,
                    dn_offer: 0.0,
                })
                .collect(),
            loads: vec![Load {
                id: "d".into(),
                bus: "1".into(),
                d_max: 0.0,
                r_up_max: 0.0,
                r_dn_max: 0.0,
                utility: 0.0,
                up_offer: 0.0,
                dn_offer: 0.0,
                fixed_demand: Some(120.0),
            }],
            contingencies: (1..=3)
                .map(|n| Contingency {
                    id: format!("G{n}"),
                    outaged_generators: vec![format!("{n}")],
                    outaged_lines: vec![],
                })
                .collect(),
            base_mva: 100.0,
            period_hours: 1.0,
        }
    }

    #[test]
    fn single_bus_layout() {
        let s = single_bus();
        let lp = build_single_bus_lp(&s).unwrap();
        assert_eq!(lp.variables.len(), 3 + 3 + 9);
        let balances = lp
            .constraints
            .iter()
            .filter(|c| {
                matches!(
                    c.tag,
                    ConstraintTag::PreBalance(_) | ConstraintTag::PostBalance { .. }
                )
            })
            .count();
        assert_eq!(balances, 4);
        let links = lp
            .constraints
            .iter()
            .filter(|c| matches!(c.tag, ConstraintTag::GenUpLink { .. }))
            .count();
        assert_eq!(links, 9);
        assert_eq!(
            (lp.variables.len(), lp.constraints.len()),
            expected_dimensions(&s)
        );
        // Outaged generator: link row keeps only g_ik.
        let row = &lp.constraints[lp.row(ConstraintTag::GenUpLink { gen: 0, k: 0 }).unwrap()];
        assert_eq!(row.coeffs.len(), 1);
    }

    #[test]
    fn network_builder_rejects_fixed_demand() {
        assert!(matches!(
            build_network_lp(&single_bus()),
            Err(FormulationError::ModelMismatch(_))
        ));
    }

    #[test]
    fn tags_are_unique() {
        let lp = build_single_bus_lp(&single_bus()).unwrap();
        for (i, c) in lp.constraints.iter().enumerate() {
            assert_eq!(lp.row(c.tag), Some(i));
        }
        for (j, v) in lp.variables.iter().enumerate() {
            assert_eq!(lp.var(v.role), Some(j));
        }
    }

    #[test]
    fn permutation_preserves_objective() {
        let lp = build_single_bus_lp(&single_bus()).unwrap();
        let n = lp.variables.len();
        let order: Vec<usize> = (0..n).rev().collect();
        let p = lp.permute_variables(&order);
        let x: Vec<f64> = (0..n).map(|j| j as f64).collect();
        let px: Vec<f64> = order.iter().map(|&o| x[o]).collect();
        assert_eq!(lp.objective(&x), p.objective(&px));
        for (a, b) in lp.constraints.iter().zip(&p.constraints) {
            assert_eq!(a.activity(&x), b.activity(&px));
        }
    }
}
