//! Per-agent settlement under either pricing scheme, and the adequacy and
//! neutrality checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lpsolve::PrimalSolution;
use crate::pricing::{PriceBook, Scheme, SecurityCharges};
use crate::system::{MarketSystem, ModelKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SettlementError {
    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRow {
    pub id: String,
    pub energy_revenue: f64,
    pub up_revenue: f64,
    pub dn_revenue: f64,
    pub security_charge: f64,
    pub total_revenue: f64,
    pub energy_cost: f64,
    pub up_cost: f64,
    pub dn_cost: f64,
    pub total_cost: f64,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerRow {
    pub id: String,
    pub energy_payment: f64,
    pub up_revenue: f64,
    pub dn_revenue: f64,
    pub payment: f64,
    /// `None` for inelastic single-bus demand.
    pub utility: Option<f64>,
    pub up_cost: f64,
    pub dn_cost: f64,
    pub total_cost: f64,
    pub profit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionRow {
    pub id: String,
    pub price: f64,
    pub capacity: f64,
    pub revenue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeRow {
    pub generator: String,
    pub contingency: String,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemBalance {
    pub consumer_payment: f64,
    pub generation_revenue: f64,
    pub transmission_revenue: f64,
    pub balance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub scheme: Scheme,
    pub model: ModelKind,
    pub generators: Vec<GeneratorRow>,
    pub consumers: Vec<ConsumerRow>,
    pub transmission: Vec<TransmissionRow>,
    pub charges: Vec<ChargeRow>,
    pub system: SystemBalance,
}

impl SettlementReport {
    pub fn total_generator_profit(&self) -> f64 {
        self.generators.iter().map(|g| g.profit).sum()
    }

    pub fn total_consumer_profit(&self) -> f64 {
        self.consumers.iter().filter_map(|c| c.profit).sum()
    }
}

pub fn settle(
    primal: &PrimalSolution,
    prices: &PriceBook,
    charges: Option<&SecurityCharges>,
    system: &MarketSystem,
) -> Result<SettlementReport, SettlementError> {
    let charges = match (prices.scheme, charges) {
        (Scheme::Baseline, Some(_)) => {
            return Err(SettlementError::SchemeMismatch(
                "baseline settlement takes no security charges".into(),
            ))
        }
        (Scheme::Proposed, None) => {
            return Err(SettlementError::SchemeMismatch(
                "proposed settlement needs security charges".into(),
            ))
        }
        (_, c) => c,
    };
    let h = system.period_hours;
    let bus_of = |b: usize| match prices.model {
        ModelKind::SingleBus => 0,
        ModelKind::Network => b,
    };

    let mut generators = Vec::with_capacity(system.generators.len());
    for (i, g) in system.generators.iter().enumerate() {
        let b = bus_of(system.generator_bus(i));
        let (up_price, dn_price) = match prices.scheme {
            Scheme::Baseline => (prices.security[b], prices.security[b]),
            Scheme::Proposed => (prices.up[b], prices.dn[b]),
        };
        let energy_revenue = h * prices.energy[b] * primal.g0[i];
        let up_revenue = h * up_price * primal.r_up[i];
        let dn_revenue = h * dn_price * primal.r_dn[i];
        let security_charge = charges.map_or(0.0, |c| h * c.total[i]);
        let total_revenue = energy_revenue + up_revenue + dn_revenue - security_charge;
        let energy_cost = h * g.energy_offer * primal.g0[i];
        let up_cost = h * g.up_offer * primal.r_up[i];
        let dn_cost = h * g.dn_offer * primal.r_dn[i];
        let total_cost = energy_cost + up_cost + dn_cost;
        generators.push(GeneratorRow {
            id: g.id.clone(),
            energy_revenue,
            up_revenue,
            dn_revenue,
            security_charge,
            total_revenue,
            energy_cost,
            up_cost,
            dn_cost,
            total_cost,
            profit: total_revenue - total_cost,
        });
    }

    let mut consumers = Vec::with_capacity(system.loads.len());
    for (j, d) in system.loads.iter().enumerate() {
        let b = bus_of(system.load_bus(j));
        let energy_payment = h * prices.energy[b] * primal.d0[j];
        let row = match prices.model {
            ModelKind::SingleBus => ConsumerRow {
                id: d.id.clone(),
                energy_payment,
                up_revenue: 0.0,
                dn_revenue: 0.0,
                payment: energy_payment,
                utility: None,
                up_cost: 0.0,
                dn_cost: 0.0,
                total_cost: 0.0,
                profit: None,
            },
            ModelKind::Network => {
                let (up_price, dn_price) = match prices.scheme {
                    Scheme::Baseline => (prices.security[b], prices.security[b]),
                    Scheme::Proposed => (prices.up[b], prices.dn[b]),
                };
                let up_revenue = h * up_price * primal.rd_up[j];
                let dn_revenue = h * dn_price * primal.rd_dn[j];
                let payment = energy_payment - up_revenue - dn_revenue;
                let utility = h * d.utility * primal.d0[j];
                let up_cost = h * d.up_offer * primal.rd_up[j];
                let dn_cost = h * d.dn_offer * primal.rd_dn[j];
                let total_cost = up_cost + dn_cost;
                ConsumerRow {
                    id: d.id.clone(),
                    energy_payment,
                    up_revenue,
                    dn_revenue,
                    payment,
                    utility: Some(utility),
                    up_cost,
                    dn_cost,
                    total_cost,
                    profit: Some(utility - total_cost - payment),
                }
            }
        };
        consumers.push(row);
    }

    let transmission: Vec<TransmissionRow> = match prices.scheme {
        Scheme::Baseline => Vec::new(),
        Scheme::Proposed => system
            .lines
            .iter()
            .zip(&prices.transmission)
            .map(|(line, &price)| TransmissionRow {
                id: line.id.clone(),
                price,
                capacity: line.capacity,
                revenue: h * price * line.capacity,
            })
            .collect(),
    };

    let charge_rows = charges.map_or_else(Vec::new, |c| {
        c.items
            .iter()
            .enumerate()
            .flat_map(|(i, items)| {
                items.iter().map(move |item| ChargeRow {
                    generator: system.generators[i].id.clone(),
                    contingency: system.contingencies[item.contingency].id.clone(),
                    amount: h * item.amount,
                })
            })
            .collect()
    });

    let consumer_payment: f64 = consumers.iter().map(|c| c.payment).sum();
    let generation_revenue: f64 = generators.iter().map(|g| g.total_revenue).sum();
    let transmission_revenue: f64 = transmission.iter().map(|t| t.revenue).sum();
    Ok(SettlementReport {
        scheme: prices.scheme,
        model: prices.model,
        generators,
        consumers,
        transmission,
        charges: charge_rows,
        system: SystemBalance {
            consumer_payment,
            generation_revenue,
            transmission_revenue,
            balance: consumer_payment - (generation_revenue + transmission_revenue),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdequacyVerdict {
    pub pass: bool,
    pub min_profit: f64,
    /// Agents whose profit falls below the tolerance.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralityVerdict {
    pub pass: bool,
    pub balance: f64,
    pub tolerance: f64,
}

/// Every generator profit, and every consumer profit in the network model,
/// must be at least `-tolerance`.
pub fn verify_adequacy(report: &SettlementReport, tolerance: f64) -> AdequacyVerdict {
    let mut min_profit = f64::INFINITY;
    let mut violations = Vec::new();
    let gens = report
        .generators
        .iter()
        .map(|g| (format!("generator {}", g.id), g.profit));
    let cons = report
        .consumers
        .iter()
        .filter_map(|c| c.profit.map(|p| (format!("consumer {}", c.id), p)));
    for (name, profit) in gens.chain(cons) {
        min_profit = min_profit.min(profit);
        if profit < -tolerance {
            violations.push(format!("{name}: profit {profit}"));
        }
    }
    AdequacyVerdict {
        pass: violations.is_empty(),
        min_profit: if min_profit.is_finite() { min_profit } else { 0.0 },
        violations,
    }
}

/// Consumer payments must equal generator plus transmission revenue.
pub fn verify_neutrality(report: &SettlementReport, tolerance: f64) -> NeutralityVerdict {
    let balance = report.system.balance;
    NeutralityVerdict {
        pass: balance.abs() <= tolerance,
        balance,
        tolerance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDelta {
    pub id: String,
    pub energy_revenue: f64,
    pub up_revenue: f64,
    pub dn_revenue: f64,
    pub security_charge: f64,
    pub total_revenue: f64,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerDelta {
    pub id: String,
    pub up_revenue: f64,
    pub dn_revenue: f64,
    pub payment: f64,
    pub profit: f64,
}

/// Proposed minus baseline, per agent and in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeComparison {
    pub generators: Vec<GeneratorDelta>,
    pub consumers: Vec<ConsumerDelta>,
    pub balance_delta: f64,
    pub security_charge_total: f64,
    pub baseline_imbalance: f64,
    /// Single-bus only: whether the charges add up to the baseline imbalance.
    pub charges_cover_imbalance: Option<bool>,
}

pub fn compare_schemes(
    baseline: &SettlementReport,
    proposed: &SettlementReport,
    tolerance: f64,
) -> Result<SchemeComparison, SettlementError> {
    if baseline.generators.len() != proposed.generators.len()
        || baseline.consumers.len() != proposed.consumers.len()
        || baseline.model != proposed.model
    {
        return Err(SettlementError::SchemeMismatch(
            "reports describe different systems".into(),
        ));
    }
    let generators = baseline
        .generators
        .iter()
        .zip(&proposed.generators)
        .map(|(b, p)| GeneratorDelta {
            id: p.id.clone(),
            energy_revenue: p.energy_revenue - b.energy_revenue,
            up_revenue: p.up_revenue - b.up_revenue,
            dn_revenue: p.dn_revenue - b.dn_revenue,
            security_charge: p.security_charge - b.security_charge,
            total_revenue: p.total_revenue - b.total_revenue,
            profit: p.profit - b.profit,
        })
        .collect();
    let consumers = baseline
        .consumers
        .iter()
        .zip(&proposed.consumers)
        .map(|(b, p)| ConsumerDelta {
            id: p.id.clone(),
            up_revenue: p.up_revenue - b.up_revenue,
            dn_revenue: p.dn_revenue - b.dn_revenue,
            payment: p.payment - b.payment,
            profit: p.profit.unwrap_or(0.0) - b.profit.unwrap_or(0.0),
        })
        .collect();
    let security_charge_total: f64 = proposed.generators.iter().map(|g| g.security_charge).sum();
    let baseline_imbalance = baseline.system.balance;
    let charges_cover_imbalance = (proposed.model == ModelKind::SingleBus)
        .then(|| (security_charge_total + baseline_imbalance).abs() <= tolerance);
    Ok(SchemeComparison {
        generators,
        consumers,
        balance_delta: proposed.system.balance - baseline.system.balance,
        security_charge_total,
        baseline_imbalance,
        charges_cover_imbalance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with_profit(profit: f64) -> SettlementReport {
        SettlementReport {
            scheme: Scheme::Proposed,
            model: ModelKind::Network,
            generators: vec![GeneratorRow {
                id: "g".into(),
                energy_revenue: 0.0,
                up_revenue: 0.0,
                dn_revenue: 0.0,
                security_charge: 0.0,
                total_revenue: 0.0,
                energy_cost: -profit,
                up_cost: 0.0,
                dn_cost: 0.0,
                total_cost: -profit,
                profit,
            }],
            consumers: vec![],
            transmission: vec![],
            charges: vec![],
            system: SystemBalance {
                consumer_payment: 0.0,
                generation_revenue: 0.0,
                transmission_revenue: 0.0,
                balance: 0.0,
            },
        }
    }

    #[test]
    fn negative_profit_is_named() {
        let v = verify_adequacy(&report_with_profit(-1.0), 1e-4);
        assert!(!v.pass);
        assert_eq!(v.min_profit, -1.0);
        assert!(v.violations[0].contains("generator g"));
        assert!(verify_adequacy(&report_with_profit(0.0), 1e-4).pass);
    }

    #[test]
    fn identical_reports_have_zero_deltas() {
        let r = report_with_profit(5.0);
        let c = compare_schemes(&r, &r, 1e-4).unwrap();
        assert!(c.generators.iter().all(|g| g.profit == 0.0 && g.total_revenue == 0.0));
        assert_eq!(c.balance_delta, 0.0);
        assert_eq!(c.charges_cover_imbalance, None);
    }
}
