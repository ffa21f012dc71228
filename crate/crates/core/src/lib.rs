//! Contingency-constrained energy and reserve market clearing.
//!
//! The pipeline is: [`system`] (validated instance) → [`formulation`]
//! (tagged LP) → [`lpsolve`] (primal-dual solve and KKT certificate) →
//! [`pricing`] (price books, security charges) → [`settlement`] (per-agent
//! money and verdicts). [`scenario`] and [`report`] wire it to files.

pub mod formulation;
pub mod lpsolve;
pub mod system;
pub mod io;
pub mod pricing;
pub mod report;
pub mod scenario;
pub mod settlement;
#[cfg(feature = "synth")]
pub mod synth;

pub use formulation::{build_lp, build_network_lp, build_single_bus_lp, ConstraintTag, LpInstance};
pub use io::{load_system, LoadError, ParseError};
pub use lpsolve::{check_kkt, duality_gap, solve, DualSolution, LpError, PrimalSolution, Tolerances};
pub use pricing::{PriceBook, Scheme, SecurityCharges};
pub use scenario::{run_scenario, RunArchive, ScenarioConfig};
pub use settlement::SettlementReport;
pub use system::{validate_system, MarketSystem, ModelKind};
