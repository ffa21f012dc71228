//! Market instance types, validation, and the DC network matrices.
//!
//! A [`MarketSystem`] is either a single-bus instance (one bus, no lines,
//! inelastic loads carrying `fixed_demand`) or a network instance (elastic
//! loads, DC lines). The kind is implied by the data; see
//! [`MarketSystem::model_kind`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

fn default_base_mva() -> f64 {
    100.0
}

fn default_period_hours() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    #[serde(default)]
    pub is_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub bus: String,
    /// Installed capacity, MW.
    pub g_max: f64,
    #[serde(default)]
    pub r_up_max: f64,
    #[serde(default)]
    pub r_dn_max: f64,
    /// Energy offer, $/MWh.
    pub energy_offer: f64,
    #[serde(default)]
    pub up_offer: f64,
    #[serde(default)]
    pub dn_offer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: String,
    pub bus: String,
    #[serde(default)]
    pub d_max: f64,
    #[serde(default)]
    pub r_up_max: f64,
    #[serde(default)]
    pub r_dn_max: f64,
    /// Bid utility, $/MWh.
    #[serde(default)]
    pub utility: f64,
    #[serde(default)]
    pub up_offer: f64,
    #[serde(default)]
    pub dn_offer: f64,
    /// Inelastic demand used by the single-bus model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_demand: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    /// Series reactance in per unit on `base_mva`.
    pub reactance: f64,
    /// Thermal limit, MW.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub id: String,
    #[serde(default, rename = "generators")]
    pub outaged_generators: Vec<String>,
    #[serde(default, rename = "lines")]
    pub outaged_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSystem {
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub contingencies: Vec<Contingency>,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(default = "default_period_hours")]
    pub period_hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SingleBus,
    Network,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::SingleBus => f.write_str("single-bus"),
            ModelKind::Network => f.write_str("network"),
        }
    }
}

/// One invariant violation found by [`validate_system`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Issue {
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{kind} `{id}` references unknown {target} `{reference}`")]
    DanglingReference {
        kind: &'static str,
        id: String,
        target: &'static str,
        reference: String,
    },
    #[error("{kind} `{id}`: {field} = {value} is out of range")]
    NegativeParameter {
        kind: &'static str,
        id: String,
        field: &'static str,
        value: f64,
    },
    #[error("system has no {0}")]
    EmptySet(&'static str),
    #[error("line `{0}` connects a bus to itself")]
    SelfLoop(String),
    #[error("contingency `{0}` outages nothing")]
    EmptyContingency(String),
    #[error("more than one reference bus flagged: {0:?}")]
    MultipleReferences(Vec<String>),
    #[error("pre-contingency network is disconnected ({0} islands)")]
    DisconnectedPreContingencyNetwork(usize),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation issue(s)", self.issues.len())?;
        for issue in &self.issues {
            write!(f, "\n  - {issue}")?;
        }
        Ok(())
    }
}

impl MarketSystem {
    /// Single-bus iff there is exactly one bus, no lines, and every load is
    /// inelastic.
    pub fn model_kind(&self) -> ModelKind {
        if self.buses.len() == 1
            && self.lines.is_empty()
            && self.loads.iter().all(|l| l.fixed_demand.is_some())
        {
            ModelKind::SingleBus
        } else {
            ModelKind::Network
        }
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn generator_index(&self, id: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn generator_bus(&self, i: usize) -> usize {
        self.bus_index(&self.generators[i].bus)
            .expect("validated generator bus")
    }

    pub fn load_bus(&self, j: usize) -> usize {
        self.bus_index(&self.loads[j].bus).expect("validated load bus")
    }

    /// Total inelastic demand (single-bus model).
    pub fn fixed_demand(&self) -> f64 {
        self.loads.iter().filter_map(|l| l.fixed_demand).sum()
    }

    /// Flagged reference bus, or the first bus when none is flagged.
    pub fn reference_bus(&self) -> usize {
        self.buses.iter().position(|b| b.is_reference).unwrap_or(0)
    }

    /// Contingencies (by position) in which generator `i` is out of service.
    pub fn outage_set(&self, i: usize) -> Vec<usize> {
        let id = &self.generators[i].id;
        self.contingencies
            .iter()
            .enumerate()
            .filter(|(_, c)| c.outaged_generators.iter().any(|g| g == id))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn line_in_service(&self, l: usize, state: Option<usize>) -> bool {
        match state {
            None => true,
            Some(k) => !self.contingencies[k]
                .outaged_lines
                .iter()
                .any(|id| *id == self.lines[l].id),
        }
    }
}

fn check_unique<'a>(
    kind: &'static str,
    ids: impl Iterator<Item = &'a str>,
    issues: &mut Vec<Issue>,
) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            issues.push(Issue::DuplicateId {
                kind,
                id: id.to_string(),
            });
        }
    }
    seen
}

fn check_param(
    kind: &'static str,
    id: &str,
    field: &'static str,
    value: f64,
    strictly_positive: bool,
    issues: &mut Vec<Issue>,
) {
    let bad = !value.is_finite() || value < 0.0 || (strictly_positive && value == 0.0);
    if bad {
        issues.push(Issue::NegativeParameter {
            kind,
            id: id.to_string(),
            field,
            value,
        });
    }
}

/// Checks every invariant of the instance and returns it unchanged when all
/// hold. Every violation is reported, not just the first.
pub fn validate_system(system: MarketSystem) -> Result<MarketSystem, ValidationError> {
    let mut issues = Vec::new();

    if system.buses.is_empty() {
        issues.push(Issue::EmptySet("buses"));
    }
    if system.generators.is_empty() {
        issues.push(Issue::EmptySet("generators"));
    }

    let buses = check_unique("bus", system.buses.iter().map(|b| b.id.as_str()), &mut issues);
    let gens = check_unique(
        "generator",
        system.generators.iter().map(|g| g.id.as_str()),
        &mut issues,
    );
    check_unique("load", system.loads.iter().map(|l| l.id.as_str()), &mut issues);
    let lines = check_unique("line", system.lines.iter().map(|l| l.id.as_str()), &mut issues);
    check_unique(
        "contingency",
        system.contingencies.iter().map(|c| c.id.as_str()),
        &mut issues,
    );

    let refs: Vec<String> = system
        .buses
        .iter()
        .filter(|b| b.is_reference)
        .map(|b| b.id.clone())
        .collect();
    if refs.len() > 1 {
        issues.push(Issue::MultipleReferences(refs));
    }

    check_param("system", "-", "base_mva", system.base_mva, true, &mut issues);
    check_param("system", "-", "period_hours", system.period_hours, true, &mut issues);

    for g in &system.generators {
        if !buses.contains(g.bus.as_str()) {
            issues.push(Issue::DanglingReference {
                kind: "generator",
                id: g.id.clone(),
                target: "bus",
                reference: g.bus.clone(),
            });
        }
        for (field, value) in [
            ("g_max", g.g_max),
            ("r_up_max", g.r_up_max),
            ("r_dn_max", g.r_dn_max),
            ("energy_offer", g.energy_offer),
            ("up_offer", g.up_offer),
            ("dn_offer", g.dn_offer),
        ] {
            check_param("generator", &g.id, field, value, false, &mut issues);
        }
    }

    for l in &system.loads {
        if !buses.contains(l.bus.as_str()) {
            issues.push(Issue::DanglingReference {
                kind: "load",
                id: l.id.clone(),
                target: "bus",
                reference: l.bus.clone(),
            });
        }
        for (field, value) in [
            ("d_max", l.d_max),
            ("r_up_max", l.r_up_max),
            ("r_dn_max", l.r_dn_max),
            ("utility", l.utility),
            ("up_offer", l.up_offer),
            ("dn_offer", l.dn_offer),
        ] {
            check_param("load", &l.id, field, value, false, &mut issues);
        }
        if let Some(d) = l.fixed_demand {
            check_param("load", &l.id, "fixed_demand", d, false, &mut issues);
        }
    }

    for line in &system.lines {
        for (end, bus) in [("from_bus", &line.from_bus), ("to_bus", &line.to_bus)] {
            if !buses.contains(bus.as_str()) {
                issues.push(Issue::DanglingReference {
                    kind: "line",
                    id: format!("{} ({end})", line.id),
                    target: "bus",
                    reference: bus.clone(),
                });
            }
        }
        if line.from_bus == line.to_bus {
            issues.push(Issue::SelfLoop(line.id.clone()));
        }
        check_param("line", &line.id, "reactance", line.reactance, true, &mut issues);
        check_param("line", &line.id, "capacity", line.capacity, false, &mut issues);
    }

    for c in &system.contingencies {
        if c.outaged_generators.is_empty() && c.outaged_lines.is_empty() {
            issues.push(Issue::EmptyContingency(c.id.clone()));
        }
        for g in &c.outaged_generators {
            if !gens.contains(g.as_str()) {
                issues.push(Issue::DanglingReference {
                    kind: "contingency",
                    id: c.id.clone(),
                    target: "generator",
                    reference: g.clone(),
                });
            }
        }
        for l in &c.outaged_lines {
            if !lines.contains(l.as_str()) {
                issues.push(Issue::DanglingReference {
                    kind: "contingency",
                    id: c.id.clone(),
                    target: "line",
                    reference: l.clone(),
                });
            }
        }
    }

    let fixed = system.loads.iter().filter(|l| l.fixed_demand.is_some()).count();
    if fixed > 0 && fixed < system.loads.len() {
        issues.push(Issue::ModelMismatch(
            "mix of inelastic (fixed_demand) and elastic loads".into(),
        ));
    }
    if fixed > 0 && (system.buses.len() != 1 || !system.lines.is_empty()) {
        issues.push(Issue::ModelMismatch(
            "inelastic loads are only supported by the single-bus model".into(),
        ));
    }

    // Topology checks only make sense once references resolve.
    if issues.is_empty() {
        let islands = islands(&system, None);
        if islands.len() > 1 {
            issues.push(Issue::DisconnectedPreContingencyNetwork(islands.len()));
        }
    }

    if issues.is_empty() {
        Ok(system)
    } else {
        Err(ValidationError { issues })
    }
}

/// Connected components of the network in `state` (`None` = pre-contingency),
/// each sorted by bus position; components are ordered by their first bus.
pub fn islands(system: &MarketSystem, state: Option<usize>) -> Vec<Vec<usize>> {
    let n = system.buses.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (l, line) in system.lines.iter().enumerate() {
        if !system.line_in_service(l, state) {
            continue;
        }
        let (Some(a), Some(b)) = (system.bus_index(&line.from_bus), system.bus_index(&line.to_bus))
        else {
            continue;
        };
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for b in 0..n {
        let r = find(&mut parent, b);
        groups.entry(r).or_default().push(b);
    }
    groups.into_values().collect()
}

/// Reference bus of each island: the flagged reference bus if it lies in the
/// island, otherwise the island's first bus.
pub fn island_references(system: &MarketSystem, state: Option<usize>) -> Vec<usize> {
    let global = system.reference_bus();
    islands(system, state)
        .into_iter()
        .map(|island| {
            if island.contains(&global) {
                global
            } else {
                island[0]
            }
        })
        .collect()
}

/// Incidence, branch-flow and injection maps of the DC network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMatrices {
    /// bus × line, +1 at the from bus and −1 at the to bus.
    pub incidence: DMatrix<f64>,
    /// line × bus, row `l` = (1/x_l)(e_from − e_to)ᵀ in per unit.
    pub branch_flow: DMatrix<f64>,
    /// bus × generator.
    pub gen_map: DMatrix<f64>,
    /// bus × load.
    pub load_map: DMatrix<f64>,
}

pub fn build_matrices(system: &MarketSystem) -> NetworkMatrices {
    let nb = system.buses.len();
    let nl = system.lines.len();
    let mut incidence = DMatrix::zeros(nb, nl);
    let mut branch_flow = DMatrix::zeros(nl, nb);
    for (l, line) in system.lines.iter().enumerate() {
        let from = system.bus_index(&line.from_bus).expect("validated line");
        let to = system.bus_index(&line.to_bus).expect("validated line");
        incidence[(from, l)] = 1.0;
        incidence[(to, l)] = -1.0;
        branch_flow[(l, from)] = 1.0 / line.reactance;
        branch_flow[(l, to)] = -1.0 / line.reactance;
    }
    let mut gen_map = DMatrix::zeros(nb, system.generators.len());
    for i in 0..system.generators.len() {
        gen_map[(system.generator_bus(i), i)] = 1.0;
    }
    let mut load_map = DMatrix::zeros(nb, system.loads.len());
    for j in 0..system.loads.len() {
        load_map[(system.load_bus(j), j)] = 1.0;
    }
    NetworkMatrices {
        incidence,
        branch_flow,
        gen_map,
        load_map,
    }
}

/// Availability and network matrices of one contingency state.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyView {
    pub availability: Vec<bool>,
    pub incidence: DMatrix<f64>,
    pub branch_flow: DMatrix<f64>,
    pub islands: Vec<Vec<usize>>,
}

impl ContingencyView {
    pub fn a(&self, i: usize) -> f64 {
        if self.availability[i] {
            1.0
        } else {
            0.0
        }
    }
}

/// Outaged lines keep their slot: the column of A and row of H are zeroed.
pub fn contingency_view(system: &MarketSystem, k: usize) -> ContingencyView {
    let c = &system.contingencies[k];
    let availability = system
        .generators
        .iter()
        .map(|g| !c.outaged_generators.contains(&g.id))
        .collect();
    let NetworkMatrices {
        mut incidence,
        mut branch_flow,
        ..
    } = build_matrices(system);
    for l in 0..system.lines.len() {
        if !system.line_in_service(l, Some(k)) {
            incidence.column_mut(l).fill(0.0);
            branch_flow.row_mut(l).fill(0.0);
        }
    }
    ContingencyView {
        availability,
        incidence,
        branch_flow,
        islands: islands(system, Some(k)),
    }
}
