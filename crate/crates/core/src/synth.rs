//! Seeded random market instances for property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::system::{Bus, Contingency, Generator, Line, Load, MarketSystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub max_buses: usize,
    pub max_lines: usize,
    pub max_generators: usize,
    pub max_loads: usize,
    pub max_contingencies: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_buses: 4,
            max_lines: 4,
            max_generators: 6,
            max_loads: 3,
            max_contingencies: 5,
        }
    }
}

fn int(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> f64 {
    f64::from(rng.gen_range(lo..=hi))
}

fn generator(rng: &mut ChaCha8Rng, n: usize, bus: String) -> Generator {
    let g_max = int(rng, 10, 100);
    Generator {
        id: format!("g{n}"),
        bus,
        g_max,
        r_up_max: (g_max * rng.gen_range(0.0..=1.0f64)).round(),
        r_dn_max: (g_max * rng.gen_range(0.0..=1.0f64)).round(),
        energy_offer: int(rng, 5, 120),
        up_offer: int(rng, 0, 30),
        dn_offer: int(rng, 0, 30),
    }
}

/// Network instance with elastic loads. The all-zero schedule is always
/// feasible, so every instance has an optimum.
pub fn random_network(seed: u64, limits: Limits) -> MarketSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(1..=limits.max_buses);
    let buses: Vec<Bus> = (0..nb)
        .map(|b| Bus {
            id: format!("b{b}"),
            is_reference: b == 0,
        })
        .collect();
    let mut lines = Vec::new();
    let add_line = |rng: &mut ChaCha8Rng, from: usize, to: usize, lines: &mut Vec<Line>| {
        let n = lines.len();
        lines.push(Line {
            id: format!("l{n}"),
            from_bus: format!("b{from}"),
            to_bus: format!("b{to}"),
            reactance: *[0.25, 0.5, 1.0, 2.0].choose(rng).unwrap(),
            capacity: int(rng, 5, 80),
        });
    };
    for b in 1..nb {
        let parent = rng.gen_range(0..b);
        if rng.gen_bool(0.5) {
            add_line(&mut rng, parent, b, &mut lines);
        } else {
            add_line(&mut rng, b, parent, &mut lines);
        }
    }
    if nb > 1 {
        let extra = rng.gen_range(0..=limits.max_lines - lines.len());
        for _ in 0..extra {
            let from = rng.gen_range(0..nb);
            let mut to = rng.gen_range(0..nb - 1);
            if to >= from {
                to += 1;
            }
            add_line(&mut rng, from, to, &mut lines);
        }
    }
    let ni = rng.gen_range(1..=limits.max_generators);
    let generators: Vec<Generator> = (0..ni)
        .map(|n| {
            let bus = format!("b{}", rng.gen_range(0..nb));
            generator(&mut rng, n, bus)
        })
        .collect();
    let nj = rng.gen_range(1..=limits.max_loads);
    let loads: Vec<Load> = (0..nj)
        .map(|n| {
            let d_max = int(&mut rng, 10, 120);
            Load {
                id: format!("d{n}"),
                bus: format!("b{}", rng.gen_range(0..nb)),
                d_max,
                r_up_max: (d_max * rng.gen_range(0.0..=0.5f64)).round(),
                r_dn_max: (d_max * rng.gen_range(0.0..=0.5f64)).round(),
                utility: int(&mut rng, 40, 300),
                up_offer: int(&mut rng, 0, 200),
                dn_offer: int(&mut rng, 0, 200),
                fixed_demand: None,
            }
        })
        .collect();
    let nk = rng.gen_range(0..=limits.max_contingencies);
    let contingencies = (0..nk)
        .map(|k| {
            let outage_line = !lines.is_empty() && rng.gen_bool(0.35);
            let (gens, ls) = if outage_line {
                (vec![], vec![lines[rng.gen_range(0..lines.len())].id.clone()])
            } else {
                (vec![generators[rng.gen_range(0..ni)].id.clone()], vec![])
            };
            Contingency {
                id: format!("k{k}"),
                outaged_generators: gens,
                outaged_lines: ls,
            }
        })
        .collect();
    MarketSystem {
        buses,
        lines,
        generators,
        loads,
        contingencies,
        base_mva: 100.0,
        period_hours: 1.0,
    }
}

/// Single-bus instance with positive inelastic demand. Some draws are
/// infeasible (not enough capacity to cover an outage).
pub fn random_single_bus(seed: u64, limits: Limits) -> MarketSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ni = rng.gen_range(2..=limits.max_generators.max(2));
    let mut generators: Vec<Generator> = (0..ni).map(|n| generator(&mut rng, n, "b0".into())).collect();
    for g in &mut generators {
        g.r_dn_max = 0.0;
        g.dn_offer = 0.0;
    }
    let capacity: f64 = generators.iter().map(|g| g.g_max).sum();
    let demand = (capacity * rng.gen_range(0.1..=0.6f64)).round().max(1.0);
    let nk = rng.gen_range(0..=limits.max_contingencies);
    let contingencies = (0..nk)
        .map(|k| Contingency {
            id: format!("k{k}"),
            outaged_generators: vec![generators[rng.gen_range(0..ni)].id.clone()],
            outaged_lines: vec![],
        })
        .collect();
    MarketSystem {
        buses: vec![Bus {
            id: "b0".into(),
            is_reference: true,
        }],
        lines: vec![],
        generators,
        loads: vec![Load {
            id: "d0".into(),
            bus: "b0".into(),
            d_max: demand,
            r_up_max: 0.0,
            r_dn_max: 0.0,
            utility: 0.0,
            up_offer: 0.0,
            dn_offer: 0.0,
            fixed_demand: Some(demand),
        }],
        contingencies,
        base_mva: 100.0,
        period_hours: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{validate_system, ModelKind};

    #[test]
    fn generated_systems_validate_within_limits() {
        let lim = Limits::default();
        for seed in 0..200 {
            let s = validate_system(random_network(seed, lim)).unwrap();
            assert_eq!(s.model_kind(), ModelKind::Network);
            assert!(s.buses.len() <= 4 && s.lines.len() <= 4);
            assert!(s.generators.len() <= 6 && s.loads.len() <= 3 && s.contingencies.len() <= 5);
            let s = validate_system(random_single_bus(seed, lim)).unwrap();
            assert_eq!(s.model_kind(), ModelKind::SingleBus);
        }
    }

    #[test]
    fn same_seed_same_system() {
        assert_eq!(
            random_network(7, Limits::default()),
            random_network(7, Limits::default())
        );
    }
}
