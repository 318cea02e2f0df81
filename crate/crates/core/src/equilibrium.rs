//! Genco objectives, best responses and the diagonalization loop.
//!
//! A Genco's profit is the energy-market value of its capacity share minus
//! investment and fixed costs:
//!
//! ```text
//! profit_j = sum_s [ value_s(K) * (K0_js + X_js) / K_s - CAPEX_js * X_js - FOM_s * (K0_js + X_js) ]
//! K_s      = sum_j (K0_js + X_js)
//! ```
//!
//! `value_s(K)` is the operational profit of slot `s` at total buildout `K`,
//! taken from an exact dispatch (benchmark) or from a trained surrogate
//! (hybrid). Share terms with `K_s = 0` are zero.

use std::io::Write;
use std::path::Path;

use crate::dispatch;
use crate::optimizer::{self, DeConfig};
use crate::scenario::{Buildout, Scenario};
use crate::seed;
use crate::surrogate::GbtModel;
use crate::{Error, Result};

/// Investment decision of one Genco, one entry per slot in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct GencoStrategy {
    pub invest: Vec<f64>,
}

impl GencoStrategy {
    pub fn zeros(n_slots: usize) -> Self {
        Self {
            invest: vec![0.0; n_slots],
        }
    }

    pub fn total(&self) -> f64 {
        self.invest.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluatorKind {
    Benchmark,
    Hybrid,
}

impl std::fmt::Display for EvaluatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Benchmark => "benchmark",
            Self::Hybrid => "hybrid",
        })
    }
}

impl std::str::FromStr for EvaluatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "benchmark" => Ok(Self::Benchmark),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(Error::InvalidInput(format!(
                "unknown evaluator `{other}` (expected benchmark or hybrid)"
            ))),
        }
    }
}

/// Source of per-slot operational profit for a total buildout.
#[derive(Debug, Clone)]
pub enum ProfitEvaluator {
    /// Exact merit-order dispatch.
    Benchmark,
    /// One surrogate per slot, in slot order.
    Hybrid { models: Vec<GbtModel> },
}

impl ProfitEvaluator {
    pub fn hybrid(scenario: &Scenario, models: Vec<GbtModel>) -> Result<Self> {
        let n = scenario.n_slots();
        if models.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: models.len(),
            });
        }
        if let Some(m) = models.iter().find(|m| m.n_features() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.n_features(),
            });
        }
        Ok(Self::Hybrid { models })
    }

    pub fn kind(&self) -> EvaluatorKind {
        match self {
            Self::Benchmark => EvaluatorKind::Benchmark,
            Self::Hybrid { .. } => EvaluatorKind::Hybrid,
        }
    }

    /// Operational profit per slot at total buildout `total`.
    pub fn slot_values(&self, scenario: &Scenario, total: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Benchmark => {
                let buildout = Buildout::new(total.to_vec())?;
                Ok(dispatch::simulate(scenario, &buildout)?.operational_profit)
            }
            Self::Hybrid { models } => {
                if total.len() != models.len() {
                    return Err(Error::DimensionMismatch {
                        expected: models.len(),
                        found: total.len(),
                    });
                }
                models.iter().map(|m| m.predict(total)).collect()
            }
        }
    }

    /// Profit of Genco `j` under the strategy profile `profile`.
    pub fn profit(&self, scenario: &Scenario, j: usize, profile: &[GencoStrategy]) -> Result<f64> {
        check_profile(scenario, profile)?;
        let total = total_capacity(scenario, profile);
        let values = self.slot_values(scenario, &total)?;
        Ok(genco_profit(scenario, j, &profile[j].invest, &total, &values))
    }
}

fn check_profile(scenario: &Scenario, profile: &[GencoStrategy]) -> Result<()> {
    if profile.len() != scenario.gencos().len() {
        return Err(Error::DimensionMismatch {
            expected: scenario.gencos().len(),
            found: profile.len(),
        });
    }
    for (g, s) in scenario.gencos().iter().zip(profile) {
        if s.invest.len() != scenario.n_slots() {
            return Err(Error::DimensionMismatch {
                expected: scenario.n_slots(),
                found: s.invest.len(),
            });
        }
        for (slot, (&x, &limit)) in s.invest.iter().zip(&g.invest_limit).enumerate() {
            if !(x >= 0.0 && x <= limit) {
                return Err(Error::InvalidInput(format!(
                    "{} invests {x} MW in {}, outside [0, {limit}]",
                    g.id,
                    scenario.slot_label(slot)
                )));
            }
        }
    }
    Ok(())
}

/// `K_s = sum_j (K0_js + X_js)`.
pub fn total_capacity(scenario: &Scenario, profile: &[GencoStrategy]) -> Vec<f64> {
    let mut total = scenario.existing_total();
    for s in profile {
        for (k, x) in total.iter_mut().zip(&s.invest) {
            *k += x;
        }
    }
    total
}

fn genco_profit(scenario: &Scenario, j: usize, invest: &[f64], total: &[f64], values: &[f64]) -> f64 {
    let genco = &scenario.gencos()[j];
    (0..scenario.n_slots())
        .map(|s| {
            let owned = genco.existing[s] + invest[s];
            let share = if total[s] > 0.0 { owned / total[s] } else { 0.0 };
            values[s] * share
                - genco.capex[s] * invest[s]
                - scenario.slot_technology(s).fom * owned
        })
        .sum()
}

/// Profit of Genco `j` with surrogate slot values.
pub fn hybrid_profit(
    scenario: &Scenario,
    models: &[GbtModel],
    j: usize,
    profile: &[GencoStrategy],
) -> Result<f64> {
    ProfitEvaluator::hybrid(scenario, models.to_vec())?.profit(scenario, j, profile)
}

/// Profit of Genco `j` with exact dispatch, slot profit split pro rata by
/// owned capacity.
pub fn exact_profit(scenario: &Scenario, j: usize, profile: &[GencoStrategy]) -> Result<f64> {
    ProfitEvaluator::Benchmark.profit(scenario, j, profile)
}

/// Settings shared by best-response searches.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    /// Template for the DE run; `bounds` is replaced per Genco.
    pub de: DeConfig,
    pub n_starts: usize,
}

impl SearchSettings {
    pub fn new(seed: u64) -> Self {
        Self {
            de: DeConfig::new(Vec::new()).with_seed(seed),
            n_starts: 3,
        }
    }

    fn config_for(&self, bounds: Vec<(f64, f64)>, seed: u64) -> DeConfig {
        let mut de = self.de.clone();
        // The template population is a floor; the default is 10 x dimension.
        de.population = de.population.max(10 * bounds.len());
        de.bounds = bounds;
        de.seed = seed;
        de
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub strategy: GencoStrategy,
    pub profit: f64,
}

/// Maximize Genco `j`'s profit over `[0, invest_limit]` with the other
/// strategies in `profile` held fixed. `profile[j]` is ignored.
pub fn best_response(
    scenario: &Scenario,
    evaluator: &ProfitEvaluator,
    j: usize,
    profile: &[GencoStrategy],
    settings: &SearchSettings,
) -> Result<BestResponse> {
    check_profile(scenario, profile)?;
    let genco = &scenario.gencos()[j];
    let mut others = total_capacity(scenario, profile);
    for (k, x) in others.iter_mut().zip(&profile[j].invest) {
        *k -= x;
    }
    let objective = |x: &[f64]| {
        let total: Vec<f64> = others.iter().zip(x).map(|(k, x)| k + x).collect();
        match evaluator.slot_values(scenario, &total) {
            Ok(values) => genco_profit(scenario, j, x, &total, &values),
            Err(_) => f64::NAN,
        }
    };
    let bounds = genco.invest_limit.iter().map(|&hi| (0.0, hi)).collect();
    let config = settings.config_for(bounds, settings.de.seed);
    let result = optimizer::maximize(objective, &config, settings.n_starts);
    Ok(BestResponse {
        strategy: GencoStrategy {
            invest: result.best_x,
        },
        profit: result.best_f,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalizeConfig {
    /// Convergence threshold on the largest per-coordinate change, MW.
    pub epsilon: f64,
    pub max_sweeps: usize,
    /// A Genco keeps its current strategy unless the best response improves
    /// its profit by more than this fraction of the current profit.
    pub keep_tolerance: f64,
    pub search: SearchSettings,
}

impl DiagonalizeConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            epsilon: 0.5,
            max_sweeps: 20,
            keep_tolerance: 0.0,
            search: SearchSettings::new(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    /// Each Genco's profit at the end of the sweep.
    pub objectives: Vec<f64>,
    pub total_mw: f64,
    /// Largest per-coordinate strategy change during the sweep.
    pub max_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub strategies: Vec<GencoStrategy>,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<SweepRecord>,
}

impl EquilibriumResult {
    /// Total installed capacity, existing plus new.
    pub fn total_mw(&self, scenario: &Scenario) -> f64 {
        total_capacity(scenario, &self.strategies).iter().sum()
    }
}

/// Seed for Genco `j`'s search in sweep `sweep` (1-based).
pub fn sweep_seed(seed: u64, sweep: usize, j: usize) -> u64 {
    seed::derive(seed::derive(seed, sweep as u64), j as u64)
}

/// Gauss-Seidel best-response iteration in Genco order.
pub fn diagonalize(
    scenario: &Scenario,
    evaluator: &ProfitEvaluator,
    initial: Vec<GencoStrategy>,
    config: &DiagonalizeConfig,
) -> Result<EquilibriumResult> {
    if config.keep_tolerance.is_nan() || config.keep_tolerance < 0.0 {
        return Err(Error::InvalidInput("keep_tolerance must be >= 0".into()));
    }
    if config.epsilon.is_nan() || config.epsilon <= 0.0 {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    if config.max_sweeps == 0 {
        return Err(Error::InvalidInput("max_sweeps must be at least 1".into()));
    }
    check_profile(scenario, &initial)?;
    let mut profile = initial;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..profile.len() {
            let mut search = config.search.clone();
            search.de.seed = sweep_seed(config.search.de.seed, sweeps, j);
            let response = best_response(scenario, evaluator, j, &profile, &search)?;
            let current = evaluator.profit(scenario, j, &profile)?;
            if response.profit <= current + config.keep_tolerance * current.abs() {
                continue;
            }
            for (old, new) in profile[j].invest.iter().zip(&response.strategy.invest) {
                max_change = max_change.max((new - old).abs());
            }
            profile[j] = response.strategy;
        }
        let total = total_capacity(scenario, &profile);
        let values = evaluator.slot_values(scenario, &total)?;
        trace.push(SweepRecord {
            sweep: sweeps,
            objectives: (0..profile.len())
                .map(|j| genco_profit(scenario, j, &profile[j].invest, &total, &values))
                .collect(),
            total_mw: total.iter().sum(),
            max_change,
        });
        if max_change < config.epsilon {
            converged = true;
            break;
        }
    }
    Ok(EquilibriumResult {
        strategies: profile,
        converged,
        iterations: sweeps,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashReport {
    pub incumbent: Vec<f64>,
    pub best_deviation: Vec<f64>,
    /// `max(0, best_deviation - incumbent)` per Genco.
    pub gains: Vec<f64>,
    /// Allowed gain per Genco: `delta * |incumbent|`.
    pub thresholds: Vec<f64>,
    pub certified: bool,
}

impl NashReport {
    pub fn max_relative_gain(&self) -> f64 {
        self.gains
            .iter()
            .zip(&self.incumbent)
            .map(|(g, p)| if *g == 0.0 { 0.0 } else { g / p.abs().max(f64::MIN_POSITIVE) })
            .fold(0.0, f64::max)
    }
}

/// Search for a profitable unilateral deviation for every Genco. `delta` is
/// relative to each Genco's incumbent profit (0.001 = 0.1%).
pub fn verify_nash(
    scenario: &Scenario,
    profile: &[GencoStrategy],
    evaluator: &ProfitEvaluator,
    delta: f64,
    settings: &SearchSettings,
) -> Result<NashReport> {
    check_profile(scenario, profile)?;
    let mut report = NashReport {
        incumbent: Vec::new(),
        best_deviation: Vec::new(),
        gains: Vec::new(),
        thresholds: Vec::new(),
        certified: true,
    };
    for j in 0..profile.len() {
        let incumbent = evaluator.profit(scenario, j, profile)?;
        let mut search = settings.clone();
        search.de.seed = seed::derive(seed::derive_named(settings.de.seed, "nash"), j as u64);
        let response = best_response(scenario, evaluator, j, profile, &search)?;
        let gain = (response.profit - incumbent).max(0.0);
        let threshold = delta * incumbent.abs();
        report.certified &= gain <= threshold;
        report.incumbent.push(incumbent);
        report.best_deviation.push(response.profit);
        report.gains.push(gain);
        report.thresholds.push(threshold);
    }
    Ok(report)
}

/// One row per (Genco, slot): `genco,region,technology,existing_mw,invest_mw,profit`.
pub fn write_equilibrium_csv<W: Write>(
    mut out: W,
    scenario: &Scenario,
    result: &EquilibriumResult,
    profits: &[f64],
) -> std::io::Result<()> {
    writeln!(out, "genco,region,technology,existing_mw,invest_mw,profit")?;
    for (j, (genco, strategy)) in scenario.gencos().iter().zip(&result.strategies).enumerate() {
        for s in 0..scenario.n_slots() {
            let (r, g) = scenario.slot_parts(s);
            writeln!(
                out,
                "{},{},{},{},{},{}",
                genco.id,
                scenario.regions()[r],
                scenario.technologies()[g].id,
                genco.existing[s],
                strategy.invest[s],
                profits[j]
            )?;
        }
    }
    Ok(())
}

/// `sweep,total_mw,max_change,objective_<genco>...`.
pub fn write_trace_csv<W: Write>(
    mut out: W,
    scenario: &Scenario,
    result: &EquilibriumResult,
) -> std::io::Result<()> {
    write!(out, "sweep,total_mw,max_change")?;
    for g in scenario.gencos() {
        write!(out, ",objective_{}", g.id)?;
    }
    writeln!(out)?;
    for row in &result.trace {
        write!(out, "{},{},{}", row.sweep, row.total_mw, row.max_change)?;
        for v in &row.objectives {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct StrategyRow {
    genco: String,
    region: String,
    technology: String,
    invest_mw: f64,
}

/// Read strategies back from a file written by [`write_equilibrium_csv`].
/// Extra columns are ignored; every (Genco, slot) pair must appear once.
pub fn read_equilibrium_csv(path: impl AsRef<Path>, scenario: &Scenario) -> Result<Vec<GencoStrategy>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_equilibrium_from(file, scenario)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn read_equilibrium_from<R: std::io::Read>(reader: R, scenario: &Scenario) -> Result<Vec<GencoStrategy>> {
    let n = scenario.n_slots();
    let mut profile: Vec<Vec<Option<f64>>> = vec![vec![None; n]; scenario.gencos().len()];
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for (i, row) in rdr.deserialize::<StrategyRow>().enumerate() {
        let row = row?;
        let at = |what: &str| Error::Schema(format!("row {}: unknown {what}", i + 1));
        let j = scenario
            .gencos()
            .iter()
            .position(|g| g.id == row.genco)
            .ok_or_else(|| at(&format!("genco `{}`", row.genco)))?;
        let r = scenario
            .regions()
            .iter()
            .position(|r| *r == row.region)
            .ok_or_else(|| at(&format!("region `{}`", row.region)))?;
        let g = scenario
            .technologies()
            .iter()
            .position(|t| t.id == row.technology)
            .ok_or_else(|| at(&format!("technology `{}`", row.technology)))?;
        let cell = &mut profile[j][scenario.slot(r, g)];
        if cell.replace(row.invest_mw).is_some() {
            return Err(Error::Schema(format!(
                "row {}: duplicate entry for {} {}_{}",
                i + 1,
                row.genco,
                row.region,
                row.technology
            )));
        }
    }
    let strategies = profile
        .into_iter()
        .enumerate()
        .map(|(j, slots)| {
            slots
                .into_iter()
                .enumerate()
                .map(|(s, v)| {
                    v.ok_or_else(|| {
                        Error::Schema(format!(
                            "missing entry for {} {}",
                            scenario.gencos()[j].id,
                            scenario.slot_label(s)
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(|invest| GencoStrategy { invest })
        })
        .collect::<Result<Vec<_>>>()?;
    check_profile(scenario, &strategies)?;
    Ok(strategies)
}

pub fn write_csv_file(
    path: impl AsRef<Path>,
    body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    body(&mut out)
        .and_then(|()| out.flush())
        .map_err(|e| Error::io(path, e))
}
