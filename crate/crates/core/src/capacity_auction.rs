//! Forward capacity auction.
//!
//! Maximizes `sum_c [A_c d_c + M_c d_c^2 / 2] - sum_u B_u m_u P_u` subject to
//! `sum_u Delta_u m_u P_u = sum_c d_c`, `0 <= d_c <= D_c`, `0 <= m_u <= 1`.
//!
//! After eliminating the balance row this is a one-dimensional concave
//! problem in the cleared quantity: supply is a step curve in derated MW with
//! step height `B_u / Delta_u`, demand is the aggregate of the linear
//! segments. Offers are walked in ascending order of `B_u / Delta_u` (ties by
//! declaration order) until the next step is worth less to demand than it
//! costs.
//!
//! The clearing price is the dual of the balance row. When it is not unique
//! (supply ends on a step boundary) the marginal demand value at the cleared
//! quantity is used, capped by the cost of the first unaccepted step.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct DemandSegment {
    /// Price at zero quantity, money/MW.
    pub price_intercept: f64,
    /// Change in marginal value per MW cleared, `<= 0`.
    pub slope: f64,
    pub max_quantity: f64,
}

impl DemandSegment {
    fn value(&self, d: f64) -> f64 {
        self.price_intercept * d + 0.5 * self.slope * d * d
    }

    /// Quantity demanded at price `p`; flat segments at exactly `p` take all.
    fn quantity_at(&self, p: f64) -> f64 {
        if self.slope < 0.0 {
            ((self.price_intercept - p) / -self.slope).clamp(0.0, self.max_quantity)
        } else if self.price_intercept >= p {
            self.max_quantity
        } else {
            0.0
        }
    }

    /// Like [`quantity_at`](Self::quantity_at) but flat segments at `p` take nothing.
    fn strict_quantity_at(&self, p: f64) -> f64 {
        if self.slope < 0.0 {
            self.quantity_at(p)
        } else if self.price_intercept > p {
            self.max_quantity
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct CapacityOffer {
    /// Offer price, money per nameplate MW.
    pub bid: f64,
    pub pmax: f64,
    /// Fraction of nameplate credited as capacity.
    pub derate: f64,
}

impl CapacityOffer {
    fn derated(&self) -> f64 {
        self.derate * self.pmax
    }

    /// Cost per derated MW.
    pub fn unit_cost(&self) -> f64 {
        if self.derate > 0.0 {
            self.bid / self.derate
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionResult {
    pub cleared_demand: Vec<f64>,
    pub cleared_fraction: Vec<f64>,
    pub clearing_price: f64,
}

impl AuctionResult {
    pub fn cleared_quantity(&self) -> f64 {
        self.cleared_demand.iter().sum()
    }

    pub fn welfare(&self, segments: &[DemandSegment], offers: &[CapacityOffer]) -> f64 {
        welfare(segments, offers, &self.cleared_demand, &self.cleared_fraction)
    }
}

/// Objective value for a given allocation.
pub fn welfare(
    segments: &[DemandSegment],
    offers: &[CapacityOffer],
    demand: &[f64],
    fraction: &[f64],
) -> f64 {
    let value: f64 = segments.iter().zip(demand).map(|(s, d)| s.value(*d)).sum();
    let cost: f64 = offers
        .iter()
        .zip(fraction)
        .map(|(o, m)| o.bid * m * o.pmax)
        .sum();
    value - cost
}

fn validate(segments: &[DemandSegment], offers: &[CapacityOffer]) -> Result<()> {
    if segments.is_empty() {
        return Err(Error::InvalidInput(
            "auction needs at least one demand segment".into(),
        ));
    }
    for (c, s) in segments.iter().enumerate() {
        if !s.price_intercept.is_finite() {
            return Err(Error::InvalidInput(format!("segment {}: price_intercept must be finite", c + 1)));
        }
        if !(s.slope.is_finite() && s.slope <= 0.0) {
            return Err(Error::InvalidInput(format!("segment {}: slope must be <= 0", c + 1)));
        }
        if !(s.max_quantity.is_finite() && s.max_quantity >= 0.0) {
            return Err(Error::InvalidInput(format!("segment {}: max_quantity must be >= 0", c + 1)));
        }
    }
    for (u, o) in offers.iter().enumerate() {
        if !(o.bid.is_finite() && o.bid >= 0.0) {
            return Err(Error::InvalidInput(format!("offer {}: bid must be >= 0", u + 1)));
        }
        if !(o.pmax.is_finite() && o.pmax > 0.0) {
            return Err(Error::InvalidInput(format!("offer {}: pmax must be > 0", u + 1)));
        }
        if !(0.0..=1.0).contains(&o.derate) {
            return Err(Error::InvalidInput(format!("offer {}: derate must lie in [0, 1]", u + 1)));
        }
    }
    Ok(())
}

/// Aggregate demand at price `p`, flat segments taking all.
fn demand_at(segments: &[DemandSegment], p: f64) -> f64 {
    segments.iter().map(|s| s.quantity_at(p)).sum()
}

/// Marginal value of the last MW when `q` MW are cleared:
/// `sup { p : demand_at(p) >= q }`.
fn marginal_value(segments: &[DemandSegment], q: f64) -> f64 {
    let mut prices: Vec<f64> = segments
        .iter()
        .filter(|s| s.max_quantity > 0.0)
        .flat_map(|s| [s.price_intercept, s.price_intercept + s.slope * s.max_quantity])
        .collect();
    prices.sort_by(|a, b| b.total_cmp(a));
    prices.dedup();
    let Some(&top) = prices.first() else {
        return 0.0;
    };
    if q <= 0.0 || demand_at(segments, top) >= q {
        return top;
    }
    let strict = |p: f64| segments.iter().map(|s| s.strict_quantity_at(p)).sum::<f64>();
    // Between consecutive breakpoints hi > lo demand is linear, running from
    // strict(hi) just below hi to strict(lo) just above lo. Flat segments at
    // lo add a jump on top of that.
    for pair in prices.windows(2) {
        let (hi, lo) = (pair[0], pair[1]);
        let (q_hi, q_lo) = (strict(hi), strict(lo));
        if q <= q_lo && q_lo > q_hi {
            let frac = ((q - q_hi) / (q_lo - q_hi)).clamp(0.0, 1.0);
            return hi + frac * (lo - hi);
        }
        if demand_at(segments, lo) >= q {
            return lo;
        }
    }
    // q exceeds total demand: the last unit is worth the lowest breakpoint.
    *prices.last().unwrap()
}

/// Split `total` MW across segments at marginal value `price`.
fn allocate_demand(segments: &[DemandSegment], price: f64, total: f64) -> Vec<f64> {
    let mut d: Vec<f64> = segments
        .iter()
        .map(|s| s.strict_quantity_at(price).min(s.max_quantity))
        .collect();
    let mut left = total - d.iter().sum::<f64>();
    // Flat segments sitting exactly at the price absorb the remainder in
    // declaration order; sloped ones only need rounding fixes.
    for (s, dc) in segments.iter().zip(d.iter_mut()) {
        if left <= 0.0 {
            break;
        }
        if s.slope == 0.0 && s.price_intercept == price {
            let add = left.min(s.max_quantity - *dc);
            *dc += add;
            left -= add;
        }
    }
    // Rounding residue goes to segments strictly inside their range first so
    // that segments at a bound stay exactly there.
    for interior_only in [true, false] {
        for (s, dc) in segments.iter().zip(d.iter_mut()) {
            if left == 0.0 {
                return d;
            }
            if interior_only && !(*dc > 0.0 && *dc < s.max_quantity) {
                continue;
            }
            let add = left.clamp(-*dc, s.max_quantity - *dc);
            *dc += add;
            left -= add;
        }
    }
    d
}

/// Clear the auction. Offers may be empty.
pub fn clear_auction(segments: &[DemandSegment], offers: &[CapacityOffer]) -> Result<AuctionResult> {
    validate(segments, offers)?;

    let mut order: Vec<usize> = (0..offers.len())
        .filter(|&u| offers[u].derated() > 0.0)
        .collect();
    order.sort_by(|&a, &b| {
        offers[a]
            .unit_cost()
            .total_cmp(&offers[b].unit_cost())
            .then(a.cmp(&b))
    });

    let mut fraction = vec![0.0; offers.len()];
    let mut cleared = 0.0;
    let mut price = None;
    let mut blocked_by = None;
    for &u in &order {
        let cost = offers[u].unit_cost();
        let width = offers[u].derated();
        let wanted = demand_at(segments, cost);
        if wanted <= cleared {
            blocked_by = Some(cost);
            break;
        }
        if wanted >= cleared + width {
            fraction[u] = 1.0;
            cleared += width;
            continue;
        }
        fraction[u] = (wanted - cleared) / width;
        cleared = wanted;
        price = Some(cost);
        break;
    }

    let price = price.unwrap_or_else(|| {
        let value = marginal_value(segments, cleared);
        match blocked_by {
            Some(cost) => value.min(cost),
            None => value,
        }
    });

    // Demand side: everything strictly above the price, topped up to match
    // the supplied quantity.
    let supplied: f64 = offers
        .iter()
        .zip(&fraction)
        .map(|(o, m)| o.derated() * m)
        .sum();
    let cleared_demand = allocate_demand(segments, price, supplied);

    Ok(AuctionResult {
        cleared_demand,
        cleared_fraction: fraction,
        clearing_price: price,
    })
}

pub fn read_segments_csv(path: impl AsRef<Path>) -> Result<Vec<DemandSegment>> {
    read_rows(path.as_ref())
}

pub fn read_offers_csv(path: impl AsRef<Path>) -> Result<Vec<CapacityOffer>> {
    read_rows(path.as_ref())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Write the result as CSV rows `item,index,cleared_mw,cleared_fraction`.
///
/// Offer rows report derated MW. The final rows carry the clearing price and
/// the total cleared quantity.
pub fn write_result_csv<W: Write>(
    mut out: W,
    offers: &[CapacityOffer],
    result: &AuctionResult,
) -> std::io::Result<()> {
    writeln!(out, "item,index,cleared_mw,cleared_fraction")?;
    for (c, d) in result.cleared_demand.iter().enumerate() {
        writeln!(out, "segment,{},{d},", c + 1)?;
    }
    for (u, (o, m)) in offers.iter().zip(&result.cleared_fraction).enumerate() {
        writeln!(out, "offer,{},{},{m}", u + 1, o.derated() * m)?;
    }
    writeln!(out, "clearing_price,,{},", result.clearing_price)?;
    writeln!(out, "total,,{},", result.cleared_quantity())?;
    Ok(())
}
