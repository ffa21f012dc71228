//! Price books, security charges and the per-agent best-response oracles.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lpsolve::{DualSolution, PrimalSolution};
use crate::system::{contingency_view, build_matrices, MarketSystem, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Baseline,
    Proposed,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Baseline => "baseline",
            Scheme::Proposed => "proposed",
        })
    }
}

/// Prices in $/MWh, indexed by bus and line position.
///
/// Baseline books fill `security`; proposed books fill `up`, `dn` and the
/// transmission fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBook {
    pub scheme: Scheme,
    pub model: ModelKind,
    pub energy: Vec<f64>,
    pub security: Vec<f64>,
    pub up: Vec<f64>,
    pub dn: Vec<f64>,
    pub transmission: Vec<f64>,
    /// `|π^f|` per `[line][state]`; `None` where the line is out of service.
    pub transmission_by_state: Vec<Vec<Option<f64>>>,
}

/// Positive and negative parts of the post-contingency balance multipliers,
/// both indexed `[k][bus]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDuals {
    pub plus: Vec<Vec<f64>>,
    pub minus: Vec<Vec<f64>>,
}

pub fn positive_part(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn negative_part(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        0.0
    }
}

pub fn split_duals(dual: &DualSolution) -> SplitDuals {
    let map = |f: fn(f64) -> f64| {
        dual.post_balance
            .iter()
            .map(|row| row.iter().map(|&p| f(p)).collect())
            .collect()
    };
    SplitDuals {
        plus: map(positive_part),
        minus: map(negative_part),
    }
}

fn post_sum(dual: &DualSolution, bus: usize, f: impl Fn(f64) -> f64) -> f64 {
    dual.post_balance.iter().map(|row| f(row[bus])).sum()
}

pub fn price_baseline(dual: &DualSolution, model: ModelKind) -> PriceBook {
    let nb = dual.pre_balance.len();
    let security: Vec<f64> = (0..nb).map(|b| post_sum(dual, b, |p| p)).collect();
    let energy = (0..nb).map(|b| dual.pre_balance[b] + security[b]).collect();
    PriceBook {
        scheme: Scheme::Baseline,
        model,
        energy,
        security,
        up: Vec::new(),
        dn: Vec::new(),
        transmission: Vec::new(),
        transmission_by_state: Vec::new(),
    }
}

pub fn price_proposed(dual: &DualSolution, model: ModelKind) -> PriceBook {
    let nb = dual.pre_balance.len();
    let energy = (0..nb)
        .map(|b| dual.pre_balance[b] + post_sum(dual, b, |p| p))
        .collect();
    let (up, dn) = match model {
        ModelKind::SingleBus => (
            (0..nb).map(|b| post_sum(dual, b, |p| p)).collect(),
            vec![0.0; nb],
        ),
        ModelKind::Network => (
            (0..nb).map(|b| post_sum(dual, b, positive_part)).collect(),
            (0..nb).map(|b| post_sum(dual, b, negative_part)).collect(),
        ),
    };
    let combined = dual.flow_combined();
    let nl = combined.first().map_or(0, Vec::len);
    let transmission_by_state: Vec<Vec<Option<f64>>> = (0..nl)
        .map(|l| combined.iter().map(|s| s[l].map(f64::abs)).collect())
        .collect();
    let transmission = transmission_by_state
        .iter()
        .map(|s| s.iter().flatten().sum())
        .collect();
    PriceBook {
        scheme: Scheme::Proposed,
        model,
        energy,
        security: Vec::new(),
        up,
        dn,
        transmission,
        transmission_by_state,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeItem {
    pub contingency: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityCharges {
    /// Per-generator charge in $ for one period of unit length.
    pub total: Vec<f64>,
    pub items: Vec<Vec<ChargeItem>>,
}

impl SecurityCharges {
    pub fn sum(&self) -> f64 {
        self.total.iter().sum()
    }
}

/// Charges levied on each generator for the contingencies that outage it.
pub fn security_charges(
    dual: &DualSolution,
    primal: &PrimalSolution,
    system: &MarketSystem,
) -> SecurityCharges {
    let kind = system.model_kind();
    let mut total = Vec::with_capacity(system.generators.len());
    let mut items = Vec::with_capacity(system.generators.len());
    for i in 0..system.generators.len() {
        let bus = match kind {
            ModelKind::SingleBus => 0,
            ModelKind::Network => system.generator_bus(i),
        };
        let list: Vec<ChargeItem> = system
            .outage_set(i)
            .into_iter()
            .map(|k| {
                let p = dual.post_balance[k][bus];
                let amount = match kind {
                    ModelKind::SingleBus => p * (primal.g0[i] + primal.r_up[i]),
                    ModelKind::Network => {
                        p * primal.g0[i]
                            + positive_part(p) * primal.r_up[i]
                            + negative_part(p) * primal.r_dn[i]
                    }
                };
                ChargeItem {
                    contingency: k,
                    amount,
                }
            })
            .collect();
        total.push(list.iter().map(|c| c.amount).sum());
        items.push(list);
    }
    SecurityCharges { total, items }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSchedule {
    pub g0: f64,
    pub r_up: f64,
    pub r_dn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSchedule {
    pub d0: f64,
    pub r_up: f64,
    pub r_dn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    /// Post-contingency output (generator) or consumption (load), MW.
    pub quantity: f64,
    /// Revenue (generator) or payment (load) at that quantity, $.
    pub value: f64,
}

/// Maximise `price · g` over the post-contingency range the schedule allows.
pub fn best_response_gen(
    price: f64,
    schedule: GenSchedule,
    availability: f64,
    model: ModelKind,
) -> BestResponse {
    let hi = availability * (schedule.g0 + schedule.r_up);
    let lo = match model {
        ModelKind::SingleBus => 0.0,
        ModelKind::Network => availability * (schedule.g0 - schedule.r_dn),
    };
    let quantity = if price > 0.0 {
        hi
    } else if price < 0.0 {
        lo
    } else {
        availability * schedule.g0
    };
    BestResponse {
        quantity,
        value: price * quantity,
    }
}

/// Minimise `price · d` over the post-contingency range the schedule allows.
/// Inelastic single-bus loads pass zero reserves.
pub fn best_response_load(price: f64, schedule: LoadSchedule) -> BestResponse {
    let quantity = if price > 0.0 {
        schedule.d0 - schedule.r_up
    } else if price < 0.0 {
        schedule.d0 + schedule.r_dn
    } else {
        schedule.d0
    };
    BestResponse {
        quantity,
        value: price * quantity,
    }
}

pub fn closed_form_gen(price: f64, schedule: GenSchedule, availability: f64, model: ModelKind) -> f64 {
    match model {
        ModelKind::SingleBus => positive_part(price) * availability * (schedule.g0 + schedule.r_up),
        ModelKind::Network => {
            price * availability * schedule.g0
                + positive_part(price) * availability * schedule.r_up
                + negative_part(price) * availability * schedule.r_dn
        }
    }
}

pub fn closed_form_load(price: f64, schedule: LoadSchedule) -> f64 {
    price * schedule.d0 - positive_part(price) * schedule.r_up - negative_part(price) * schedule.r_dn
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Min over g₀ + u ≤ G, g₀ − v ≥ 0, u ≤ Ru, v ≤ Rd, all ≥ 0 of a linear form.
fn min_generator_form(coef: [f64; 3], g_max: f64, ru: f64, rd: f64) -> f64 {
    let candidates = [0.0, g_max, g_max - ru, rd];
    candidates
        .iter()
        .map(|&g| {
            let g = clip(g, 0.0, g_max);
            let u = if coef[1] < 0.0 { ru.min(g_max - g) } else { 0.0 };
            let v = if coef[2] < 0.0 { rd.min(g) } else { 0.0 };
            coef[0] * g + coef[1] * u + coef[2] * v
        })
        .fold(f64::INFINITY, f64::min)
}

/// Min over d₀ − u ≥ 0, d₀ + v ≤ D, u ≤ Ru, v ≤ Rd, all ≥ 0 of a linear form.
fn min_load_form(coef: [f64; 3], d_max: f64, ru: f64, rd: f64) -> f64 {
    let candidates = [0.0, d_max, ru, d_max - rd];
    candidates
        .iter()
        .map(|&d| {
            let d = clip(d, 0.0, d_max);
            let u = if coef[1] < 0.0 { ru.min(d) } else { 0.0 };
            let v = if coef[2] < 0.0 { rd.min(d_max - d) } else { 0.0 };
            coef[0] * d + coef[1] * u + coef[2] * v
        })
        .fold(f64::INFINITY, f64::min)
}

/// Lagrangian dual function at the balance and flow-limit multipliers of
/// `dual`, with every agent best-responding. Returns `-∞` when the angle
/// terms do not vanish.
pub fn ld_value(dual: &DualSolution, system: &MarketSystem) -> f64 {
    let nk = system.contingencies.len();
    let views: Vec<_> = (0..nk).map(|k| contingency_view(system, k)).collect();
    let pi0 = &dual.pre_balance;
    let pik = &dual.post_balance;
    match system.model_kind() {
        ModelKind::SingleBus => {
            let demand = system.fixed_demand();
            let mut value = (pi0[0] + pik.iter().map(|r| r[0]).sum::<f64>()) * demand;
            for (i, g) in system.generators.iter().enumerate() {
                let collected: f64 = (0..nk).map(|k| positive_part(pik[k][0]) * views[k].a(i)).sum();
                // g₀ + r ≤ G, r ≤ R
                let cg = g.energy_offer - pi0[0] - collected;
                let cr = g.up_offer - collected;
                let best = [0.0, g.g_max - g.r_up_max, g.g_max]
                    .iter()
                    .map(|&g0| {
                        let g0 = clip(g0, 0.0, g.g_max);
                        let r = if cr < 0.0 { g.r_up_max.min(g.g_max - g0) } else { 0.0 };
                        cg * g0 + cr * r
                    })
                    .fold(f64::INFINITY, f64::min);
                value += best;
            }
            value
        }
        ModelKind::Network => {
            let m = build_matrices(system);
            let nl = system.lines.len();
            let nb = system.buses.len();
            let scale = 1.0
                + pi0
                    .iter()
                    .chain(pik.iter().flatten())
                    .fold(0.0f64, |a, v| a.max(v.abs()));
            for s in 0..=nk {
                let (inc, flow) = if s == 0 {
                    (&m.incidence, &m.branch_flow)
                } else {
                    (&views[s - 1].incidence, &views[s - 1].branch_flow)
                };
                let prices = if s == 0 { pi0 } else { &pik[s - 1] };
                for t in 0..nb {
                    let mut coef = 0.0;
                    for l in 0..nl {
                        if flow[(l, t)] == 0.0 {
                            continue;
                        }
                        let node: f64 = (0..nb).map(|b| inc[(b, l)] * prices[b]).sum();
                        let pf = dual.flow_lower[s][l].unwrap_or(0.0)
                            + dual.flow_upper[s][l].unwrap_or(0.0);
                        coef += system.base_mva * flow[(l, t)] * (node - pf);
                    }
                    if coef.abs() > 1e-9 * scale * system.base_mva {
                        return f64::NEG_INFINITY;
                    }
                }
            }
            let mut value = 0.0;
            for s in 0..=nk {
                for (l, line) in system.lines.iter().enumerate() {
                    let plus = dual.flow_lower[s][l].unwrap_or(0.0);
                    let minus = dual.flow_upper[s][l].unwrap_or(0.0);
                    value -= (plus - minus) * line.capacity;
                }
            }
            for (i, g) in system.generators.iter().enumerate() {
                let b = system.generator_bus(i);
                let mut coef = [g.energy_offer - pi0[b], g.up_offer, g.dn_offer];
                for k in 0..nk {
                    let a = views[k].a(i);
                    coef[0] -= pik[k][b] * a;
                    coef[1] -= positive_part(pik[k][b]) * a;
                    coef[2] -= negative_part(pik[k][b]) * a;
                }
                value += min_generator_form(coef, g.g_max, g.r_up_max, g.r_dn_max);
            }
            for (j, d) in system.loads.iter().enumerate() {
                let b = system.load_bus(j);
                let mut coef = [pi0[b] - d.utility, d.up_offer, d.dn_offer];
                for row in pik.iter() {
                    coef[0] += row[b];
                    coef[1] -= positive_part(row[b]);
                    coef[2] -= negative_part(row[b]);
                }
                value += min_load_form(coef, d.d_max, d.r_up_max, d.r_dn_max);
            }
            value
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dual(pre: Vec<f64>, post: Vec<Vec<f64>>) -> DualSolution {
        DualSolution {
            rows: Vec::new(),
            pre_balance: pre,
            post_balance: post,
            flow_lower: Vec::new(),
            flow_upper: Vec::new(),
        }
    }

    #[test]
    fn split_examples() {
        let d = dual(vec![20.0, 20.0], vec![vec![180.0, 85.0], vec![0.0, -5.0]]);
        let s = split_duals(&d);
        assert_eq!((s.plus[1][1], s.minus[1][1]), (0.0, 5.0));
        assert_eq!((s.plus[1][0], s.minus[1][0]), (0.0, 0.0));
        assert_eq!((s.plus[0][0], s.minus[0][0]), (180.0, 0.0));
    }

    #[test]
    fn baseline_single_bus() {
        let d = dual(vec![20.0], vec![vec![80.0], vec![0.0], vec![0.0]]);
        let p = price_baseline(&d, ModelKind::SingleBus);
        assert_eq!(p.energy, vec![100.0]);
        assert_eq!(p.security, vec![80.0]);
        let q = price_proposed(&d, ModelKind::SingleBus);
        assert_eq!(q.up, p.security);
        assert!(q.transmission.is_empty());
    }

    #[test]
    fn zero_duals_price_zero() {
        let d = dual(vec![0.0, 0.0], vec![vec![0.0, 0.0]]);
        for p in [
            price_baseline(&d, ModelKind::Network),
            price_proposed(&d, ModelKind::Network),
        ] {
            assert!(p.energy.iter().chain(&p.security).chain(&p.up).chain(&p.dn).all(|&x| x == 0.0));
        }
    }

    #[test]
    fn generator_best_response_examples() {
        let s = GenSchedule {
            g0: 30.0,
            r_up: 30.0,
            r_dn: 5.0,
        };
        let r = best_response_gen(180.0, s, 1.0, ModelKind::Network);
        assert_eq!((r.quantity, r.value), (60.0, 10_800.0));
        let r = best_response_gen(-5.0, s, 1.0, ModelKind::Network);
        assert_eq!((r.quantity, r.value), (25.0, -125.0));
        assert_eq!(best_response_gen(0.0, s, 1.0, ModelKind::Network).value, 0.0);
        assert_eq!(closed_form_gen(-5.0, s, 1.0, ModelKind::Network), -125.0);
    }

    #[test]
    fn load_best_response_examples() {
        let s = LoadSchedule {
            d0: 80.0,
            r_up: 10.0,
            r_dn: 0.0,
        };
        let r = best_response_load(180.0, s);
        assert_eq!((r.quantity, r.value), (70.0, 12_600.0));
        assert_eq!(best_response_load(0.0, s).value, 0.0);
        let s2 = LoadSchedule {
            d0: 40.0,
            r_up: 10.0,
            r_dn: 0.0,
        };
        let r = best_response_load(-5.0, s2);
        assert_eq!((r.quantity, r.value), (40.0, -200.0));
        assert_eq!(closed_form_load(-5.0, s2), -200.0);
    }
}
