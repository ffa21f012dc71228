//! End-to-end runs: load, build, solve, price, settle, verify.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{build_lp, FormulationError, LpInstance};
use crate::io::{load_system_with_hash, LoadError};
use crate::lpsolve::{
    check_kkt, solve, DualSolution, LpError, OptimalityReport, PrimalSolution, SolverInfo,
    Tolerances,
};
use crate::pricing::{ld_value, price_baseline, price_proposed, security_charges, PriceBook, Scheme, SecurityCharges};
use crate::settlement::{
    compare_schemes, settle, verify_adequacy, verify_neutrality, AdequacyVerdict,
    NeutralityVerdict, SchemeComparison, SettlementError, SettlementReport,
};
use crate::system::{MarketSystem, ModelKind};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Auto,
    SingleBus,
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub system_path: PathBuf,
    pub model: ModelChoice,
    pub schemes: Vec<Scheme>,
    pub tolerances: Tolerances,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn new(system_path: impl Into<PathBuf>) -> Self {
        ScenarioConfig {
            system_path: system_path.into(),
            model: ModelChoice::Auto,
            schemes: vec![Scheme::Baseline, Scheme::Proposed],
            tolerances: Tolerances::default(),
            format: OutputFormat::Json,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schemes.is_empty() {
            return Err(ScenarioError::Config("no pricing scheme selected".into()));
        }
        if !self.system_path.exists() {
            return Err(ScenarioError::Config(format!(
                "system file {} does not exist",
                self.system_path.display()
            )));
        }
        let t = &self.tolerances;
        if [t.feasibility, t.gap, t.slackness, t.money, t.sign]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(ScenarioError::Config("tolerances must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solve(#[from] LpError),
    #[error(transparent)]
    Settlement(#[from] SettlementError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSize {
    pub variables: usize,
    pub constraints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub adequacy: AdequacyVerdict,
    pub neutrality: NeutralityVerdict,
    /// Baseline verdicts are informational and never fail a run.
    pub enforced: bool,
}

impl Verdicts {
    pub fn pass(&self) -> bool {
        self.adequacy.pass && self.neutrality.pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub prices: PriceBook,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charges: Option<SecurityCharges>,
    pub settlement: SettlementReport,
    pub verdicts: Verdicts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started: String,
    pub finished: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArchive {
    pub version: u32,
    pub input: InputInfo,
    pub model: ModelKind,
    pub bus_ids: Vec<String>,
    pub line_ids: Vec<String>,
    pub contingency_ids: Vec<String>,
    pub solver: SolverInfo,
    pub lp_size: LpSize,
    pub tolerances: Tolerances,
    pub primal: PrimalSolution,
    pub dual: DualSolution,
    pub optimality: OptimalityReport,
    /// Lagrangian dual function at the returned multipliers; `None` when it
    /// is unbounded below.
    pub dual_function_value: Option<f64>,
    pub schemes: Vec<SchemeResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<SchemeComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
}

impl RunArchive {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeResult> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }

    /// Optimality certified and every enforced verdict passes.
    pub fn passed(&self) -> bool {
        self.optimality.pass
            && self
                .schemes
                .iter()
                .filter(|s| s.verdicts.enforced)
                .all(|s| s.verdicts.pass())
    }
}

/// Everything computed for one system, before it is packaged into an archive.
#[derive(Debug, Clone)]
pub struct Clearing {
    pub lp: LpInstance,
    pub primal: PrimalSolution,
    pub dual: DualSolution,
    pub solver: SolverInfo,
    pub optimality: OptimalityReport,
}

pub fn clear_market(system: &MarketSystem, tol: &Tolerances) -> Result<Clearing, ScenarioError> {
    let lp = build_lp(system)?;
    let sol = solve(&lp)?;
    let optimality = check_kkt(&lp, &sol.primal.values, &sol.dual, tol);
    Ok(Clearing {
        lp,
        primal: sol.primal,
        dual: sol.dual,
        solver: sol.info,
        optimality,
    })
}

/// Price and settle one scheme from an optimal primal-dual pair.
pub fn run_scheme(
    system: &MarketSystem,
    primal: &PrimalSolution,
    dual: &DualSolution,
    scheme: Scheme,
    tol: &Tolerances,
) -> Result<SchemeResult, ScenarioError> {
    let kind = system.model_kind();
    let (prices, charges) = match scheme {
        Scheme::Baseline => (price_baseline(dual, kind), None),
        Scheme::Proposed => (
            price_proposed(dual, kind),
            Some(security_charges(dual, primal, system)),
        ),
    };
    let settlement = settle(primal, &prices, charges.as_ref(), system)?;
    let verdicts = Verdicts {
        adequacy: verify_adequacy(&settlement, tol.money),
        neutrality: verify_neutrality(&settlement, tol.money),
        enforced: scheme == Scheme::Proposed,
    };
    Ok(SchemeResult {
        scheme,
        prices,
        charges,
        settlement,
        verdicts,
    })
}

pub fn run_system(
    system: &MarketSystem,
    input: InputInfo,
    schemes: &[Scheme],
    tol: &Tolerances,
) -> Result<RunArchive, ScenarioError> {
    let clearing = clear_market(system, tol)?;
    let mut ordered: Vec<Scheme> = schemes.to_vec();
    ordered.sort();
    ordered.dedup();
    let results = ordered
        .iter()
        .map(|&s| run_scheme(system, &clearing.primal, &clearing.dual, s, tol))
        .collect::<Result<Vec<_>, _>>()?;
    let comparison = match (
        results.iter().find(|r| r.scheme == Scheme::Baseline),
        results.iter().find(|r| r.scheme == Scheme::Proposed),
    ) {
        (Some(b), Some(p)) => Some(compare_schemes(&b.settlement, &p.settlement, tol.money)?),
        _ => None,
    };
    Ok(RunArchive {
        version: ARCHIVE_VERSION,
        input,
        model: system.model_kind(),
        bus_ids: system.buses.iter().map(|b| b.id.clone()).collect(),
        line_ids: system.lines.iter().map(|l| l.id.clone()).collect(),
        contingency_ids: system.contingencies.iter().map(|c| c.id.clone()).collect(),
        solver: clearing.solver,
        lp_size: LpSize {
            variables: clearing.lp.variables.len(),
            constraints: clearing.lp.constraints.len(),
        },
        tolerances: *tol,
        dual_function_value: Some(ld_value(&clearing.dual, system)).filter(|v| v.is_finite()),
        primal: clearing.primal,
        dual: clearing.dual,
        optimality: clearing.optimality,
        schemes: results,
        comparison,
        timestamps: None,
    })
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunArchive, ScenarioError> {
    config.validate()?;
    let loaded = load_system_with_hash(&config.system_path)?;
    let actual = loaded.system.model_kind();
    let wanted = match config.model {
        ModelChoice::Auto => actual,
        ModelChoice::SingleBus => ModelKind::SingleBus,
        ModelChoice::Network => ModelKind::Network,
    };
    if wanted != actual {
        return Err(FormulationError::ModelMismatch(format!(
            "requested {wanted} model but the system describes a {actual} instance"
        ))
        .into());
    }
    let input = InputInfo {
        path: config.system_path.display().to_string(),
        sha256: loaded.sha256,
    };
    run_system(&loaded.system, input, &config.schemes, &config.tolerances)
}
