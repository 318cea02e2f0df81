//! Economic dispatch by merit order.
//!
//! Each period (and each region) is a single-balance LP: minimize
//! `sum_g C_g q_g + VoLL * unmet` subject to `sum_g q_g + unmet = D`,
//! `0 <= q_g <= capacity_g`, `unmet >= 0`. Filling technologies in ascending
//! cost order is optimal. The price is the dual of the balance row:
//!
//! * shortage, or demand exactly equal to total capacity: `VoLL` (upper end
//!   of the dual interval in the degenerate case);
//! * marginal technology has slack: its marginal cost;
//! * marginal technology exactly at its limit: cost of the next technology
//!   with headroom.
//!
//! Cost ties are broken by technology declaration order.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::scenario::{Buildout, Scenario};
use crate::{Error, Result};

/// Balance tolerance, MW.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodResult {
    /// Output per technology, in declaration order.
    pub quantities: Vec<f64>,
    pub unmet: f64,
    pub price: f64,
}

impl PeriodResult {
    /// `sum_g C_g q_g + VoLL * unmet`.
    pub fn cost(&self, costs: &[f64], voll: f64) -> f64 {
        self.quantities
            .iter()
            .zip(costs)
            .map(|(q, c)| q * c)
            .sum::<f64>()
            + voll * self.unmet
    }

    pub fn served(&self) -> f64 {
        self.quantities.iter().sum()
    }
}

/// Merit order: indices sorted by cost, ties by declaration order.
pub fn merit_order(costs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    order
}

/// Clear one period. `capacities` and `costs` are indexed by technology.
pub fn clear_period(capacities: &[f64], demand: f64, costs: &[f64], voll: f64) -> PeriodResult {
    debug_assert_eq!(capacities.len(), costs.len());
    clear_with_order(capacities, demand, costs, voll, &merit_order(costs))
}

fn clear_with_order(
    capacities: &[f64],
    demand: f64,
    costs: &[f64],
    voll: f64,
    order: &[usize],
) -> PeriodResult {
    let n = capacities.len();
    let total: f64 = capacities.iter().sum();

    if total <= demand {
        return PeriodResult {
            quantities: capacities.to_vec(),
            unmet: demand - total,
            price: voll,
        };
    }

    let mut quantities = vec![0.0; n];
    let mut remaining = demand;
    let mut price = None;
    for (pos, &g) in order.iter().enumerate() {
        let cap = capacities[g];
        if remaining <= 0.0 {
            break;
        }
        if cap <= 0.0 {
            continue;
        }
        if cap > remaining {
            quantities[g] = remaining;
            price = Some(costs[g]);
            break;
        }
        quantities[g] = cap;
        remaining -= cap;
        if remaining <= 0.0 {
            // Marginal unit is exactly at its limit: the next unit with
            // headroom would serve an increment of demand.
            price = order[pos + 1..]
                .iter()
                .find(|&&h| capacities[h] > 0.0)
                .map(|&h| costs[h]);
            break;
        }
    }
    let price = match price {
        Some(p) => p,
        // Zero demand: the cheapest unit with capacity is marginal.
        None => order
            .iter()
            .find(|&&h| capacities[h] > 0.0)
            .map_or(voll, |&h| costs[h]),
    };
    PeriodResult {
        quantities,
        unmet: 0.0,
        price,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    /// `periods[region][t]`.
    pub periods: Vec<Vec<PeriodResult>>,
    /// Per slot: `sum_t (price_t - C_g) * q_{g,t}`.
    pub operational_profit: Vec<f64>,
}

impl DispatchResult {
    /// Total market payout `sum_t price_t * served_t` over all regions.
    pub fn payout(&self) -> f64 {
        self.periods
            .iter()
            .flatten()
            .map(|p| p.price * p.served())
            .sum()
    }

    pub fn total_operational_profit(&self) -> f64 {
        self.operational_profit.iter().sum()
    }
}

/// Clear every period of every region for a system buildout.
pub fn simulate(scenario: &Scenario, buildout: &Buildout) -> Result<DispatchResult> {
    let caps = buildout.as_slice();
    if caps.len() != scenario.n_slots() {
        return Err(Error::DimensionMismatch {
            expected: scenario.n_slots(),
            found: caps.len(),
        });
    }
    let n_tech = scenario.technologies().len();
    let costs: Vec<f64> = scenario
        .technologies()
        .iter()
        .map(|t| t.marginal_cost)
        .collect();
    let order = merit_order(&costs);
    let voll = scenario.voll();

    let mut periods = Vec::with_capacity(scenario.regions().len());
    let mut profit = vec![0.0; scenario.n_slots()];
    for (r, load) in scenario.loads().iter().enumerate() {
        let region_caps = &caps[r * n_tech..(r + 1) * n_tech];
        let region: Vec<PeriodResult> = load
            .demand()
            .iter()
            .map(|&d| clear_with_order(region_caps, d, &costs, voll, &order))
            .collect();
        for p in &region {
            for (g, q) in p.quantities.iter().enumerate() {
                profit[r * n_tech + g] += (p.price - costs[g]) * q;
            }
        }
        periods.push(region);
    }
    Ok(DispatchResult {
        periods,
        operational_profit: profit,
    })
}

/// Simulate many buildouts in parallel; output order matches input order.
pub fn simulate_many(scenario: &Scenario, buildouts: &[Buildout]) -> Result<Vec<DispatchResult>> {
    buildouts
        .par_iter()
        .map(|b| simulate(scenario, b))
        .collect()
}

/// Write per-period results as CSV: `region,period,demand,price,unmet,q_<tech>...`.
pub fn write_periods_csv(
    scenario: &Scenario,
    result: &DispatchResult,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut header = String::from("region,period,demand,price,unmet");
    for t in scenario.technologies() {
        header.push_str(",q_");
        header.push_str(&t.id);
    }
    writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
    for (r, region) in result.periods.iter().enumerate() {
        let demand = scenario.loads()[r].demand();
        for (t, p) in region.iter().enumerate() {
            let mut line = format!(
                "{},{},{},{},{}",
                scenario.regions()[r],
                t + 1,
                demand[t],
                p.price,
                p.unmet
            );
            for q in &p.quantities {
                line.push_str(&format!(",{q}"));
            }
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}
