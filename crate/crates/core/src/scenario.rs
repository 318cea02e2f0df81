//! Game definition: technologies, Gencos, regions, load profiles, and the
//! TOML configuration format they are read from.
//!
//! Capacities are addressed by *slot*, the flattened `(region, technology)`
//! pair `region * n_technologies + technology`. Every capacity vector in the
//! crate (buildouts, strategies, dataset rows) uses this layout.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Region id used when a configuration does not list any.
pub const DEFAULT_REGION: &str = "R1";

#[derive(Debug, Clone, PartialEq)]
pub struct Technology {
    pub id: String,
    /// Variable production cost, money/MWh.
    pub marginal_cost: f64,
    /// Default investment cost, money/MW. Gencos may override per region.
    pub capex: f64,
    /// Fixed O&M, money/MW.
    pub fom: f64,
    /// Default per-Genco investment limit, MW.
    pub invest_limit: f64,
}

/// Per-Genco data, one entry per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Genco {
    pub id: String,
    pub existing: Vec<f64>,
    pub capex: Vec<f64>,
    pub invest_limit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    demand: Vec<f64>,
}

impl LoadProfile {
    pub fn new(demand: Vec<f64>) -> Result<Self> {
        if demand.is_empty() {
            return Err(Error::Validation(
                "load profile must have at least one period".into(),
            ));
        }
        if let Some((t, d)) = demand
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d > 0.0))
        {
            return Err(Error::Validation(format!(
                "demand must be positive in every period (period {} has {d})",
                t + 1
            )));
        }
        Ok(Self { demand })
    }

    pub fn demand(&self) -> &[f64] {
        &self.demand
    }

    pub fn periods(&self) -> usize {
        self.demand.len()
    }

    pub fn min(&self) -> f64 {
        self.demand.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Installed capacity per slot, MW.
#[derive(Debug, Clone, PartialEq)]
pub struct Buildout {
    capacity: Vec<f64>,
}

impl Buildout {
    pub fn new(capacity: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = capacity
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "buildout entry {i} must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self { capacity })
    }

    pub fn zeros(n_slots: usize) -> Self {
        Self {
            capacity: vec![0.0; n_slots],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.capacity
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.capacity.iter().sum()
    }
}

/// Elementwise sum of per-Genco capacity vectors.
pub fn total_buildout<V: AsRef<[f64]>>(parts: &[V]) -> Result<Buildout> {
    let Some(first) = parts.first() else {
        return Err(Error::InvalidInput("no capacity vectors to sum".into()));
    };
    let n = first.as_ref().len();
    let mut total = vec![0.0; n];
    for part in parts {
        let part = part.as_ref();
        if part.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: part.len(),
            });
        }
        for (acc, v) in total.iter_mut().zip(part) {
            *acc += v;
        }
    }
    Buildout::new(total)
}

/// The full game definition. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    regions: Vec<String>,
    technologies: Vec<Technology>,
    gencos: Vec<Genco>,
    loads: Vec<LoadProfile>,
    voll: f64,
    sampling_bounds: Option<Vec<(f64, f64)>>,
}

impl Scenario {
    /// Build and validate a scenario. `loads` holds one profile per region.
    pub fn new(
        regions: Vec<String>,
        technologies: Vec<Technology>,
        gencos: Vec<Genco>,
        loads: Vec<LoadProfile>,
        voll: f64,
    ) -> Result<Self> {
        let scenario = Self {
            regions,
            technologies,
            gencos,
            loads,
            voll,
            sampling_bounds: None,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Replace the default sampling bounds, one `[lo, hi]` per slot.
    pub fn with_sampling_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.n_slots() {
            return Err(Error::DimensionMismatch {
                expected: self.n_slots(),
                found: bounds.len(),
            });
        }
        for (s, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::Validation(format!(
                    "sampling bounds for {} must satisfy 0 <= lo <= hi, got [{lo}, {hi}]",
                    self.slot_label(s)
                )));
            }
        }
        self.sampling_bounds = Some(bounds);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::Validation(msg));
        if self.regions.is_empty() {
            return invalid("at least one region is required".into());
        }
        if self.technologies.is_empty() {
            return invalid("at least one technology is required".into());
        }
        if self.gencos.is_empty() {
            return invalid("genco count must be at least 1".into());
        }
        check_unique("region", self.regions.iter())?;
        check_unique("technology", self.technologies.iter().map(|t| &t.id))?;
        check_unique("genco", self.gencos.iter().map(|g| &g.id))?;

        for t in &self.technologies {
            let fields = [
                ("marginal_cost", t.marginal_cost),
                ("capex", t.capex),
                ("fom", t.fom),
            ];
            for (name, v) in fields {
                if !(v.is_finite() && v >= 0.0) {
                    return invalid(format!("technology {}: {name} must be >= 0, got {v}", t.id));
                }
            }
            if !(t.invest_limit.is_finite() && t.invest_limit > 0.0) {
                return invalid(format!(
                    "technology {}: invest_limit must be > 0, got {}",
                    t.id, t.invest_limit
                ));
            }
        }

        let max_cost = self
            .technologies
            .iter()
            .map(|t| t.marginal_cost)
            .fold(0.0, f64::max);
        if !(self.voll.is_finite() && self.voll > max_cost) {
            return invalid(format!(
                "voll ({}) must exceed the largest marginal cost ({max_cost})",
                self.voll
            ));
        }

        if self.loads.len() != self.regions.len() {
            return invalid(format!(
                "expected one load profile per region ({}), found {}",
                self.regions.len(),
                self.loads.len()
            ));
        }
        let periods = self.loads[0].periods();
        if self.loads.iter().any(|l| l.periods() != periods) {
            return invalid("all regions must have the same number of load periods".into());
        }

        let n = self.n_slots();
        for g in &self.gencos {
            for (name, values) in [
                ("existing", &g.existing),
                ("capex", &g.capex),
                ("invest_limit", &g.invest_limit),
            ] {
                if values.len() != n {
                    return invalid(format!(
                        "genco {}: {name} has {} entries, expected {n}",
                        g.id,
                        values.len()
                    ));
                }
                if let Some((s, v)) = values
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
                {
                    return invalid(format!(
                        "genco {}: {name} for {} must be >= 0, got {v}",
                        g.id,
                        self.slot_label(s)
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn technologies(&self) -> &[Technology] {
        &self.technologies
    }

    pub fn gencos(&self) -> &[Genco] {
        &self.gencos
    }

    pub fn loads(&self) -> &[LoadProfile] {
        &self.loads
    }

    pub fn voll(&self) -> f64 {
        self.voll
    }

    pub fn n_slots(&self) -> usize {
        self.regions.len() * self.technologies.len()
    }

    pub fn periods(&self) -> usize {
        self.loads[0].periods()
    }

    pub fn slot(&self, region: usize, technology: usize) -> usize {
        region * self.technologies.len() + technology
    }

    /// `(region, technology)` indices of a slot.
    pub fn slot_parts(&self, slot: usize) -> (usize, usize) {
        let n = self.technologies.len();
        (slot / n, slot % n)
    }

    pub fn slot_label(&self, slot: usize) -> String {
        let (r, g) = self.slot_parts(slot);
        format!("{}_{}", self.regions[r], self.technologies[g].id)
    }

    pub fn slot_labels(&self) -> Vec<String> {
        (0..self.n_slots()).map(|s| self.slot_label(s)).collect()
    }

    pub fn slot_technology(&self, slot: usize) -> &Technology {
        &self.technologies[self.slot_parts(slot).1]
    }

    /// Sampling interval per slot. Defaults to `[0, sum of existing + sum of limits]`.
    pub fn sampling_bounds(&self) -> Vec<(f64, f64)> {
        if let Some(b) = &self.sampling_bounds {
            return b.clone();
        }
        (0..self.n_slots())
            .map(|s| {
                let hi: f64 = self
                    .gencos
                    .iter()
                    .map(|g| g.existing[s] + g.invest_limit[s])
                    .sum();
                (0.0, hi)
            })
            .collect()
    }

    pub fn has_custom_sampling_bounds(&self) -> bool {
        self.sampling_bounds.is_some()
    }

    /// Total existing capacity across Gencos per slot.
    pub fn existing_total(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_slots()];
        for g in &self.gencos {
            for (acc, v) in total.iter_mut().zip(&g.existing) {
                *acc += v;
            }
        }
        total
    }

    /// Parse and validate a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.into_scenario()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Serialize to TOML with every per-Genco value written out explicitly.
    pub fn to_toml_string(&self) -> String {
        let raw = RawScenario::from_scenario(self);
        toml::to_string(&raw).expect("scenario serializes to TOML")
    }
}

fn check_unique<'a>(what: &str, ids: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(Error::Validation(format!("{what} id must not be empty")));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Validation(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Configuration file schema
// ---------------------------------------------------------------------------

type RegionTechMap<T> = BTreeMap<String, BTreeMap<String, T>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    voll: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    power_unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    regions: Option<Vec<String>>,
    load: RawLoad,
    technologies: Vec<RawTechnology>,
    gencos: Vec<RawGenco>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampling: Option<RawSampling>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawLoad {
    Single(Vec<f64>),
    PerRegion(BTreeMap<String, Vec<f64>>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTechnology {
    id: String,
    marginal_cost: f64,
    capex: f64,
    #[serde(default)]
    fom: f64,
    invest_limit: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenco {
    id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    existing: RegionTechMap<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    capex: RegionTechMap<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    invest_limit: RegionTechMap<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    bounds: RegionTechMap<[f64; 2]>,
}

/// MW per configured power unit.
fn power_scale(unit: Option<&str>) -> Result<f64> {
    match unit.unwrap_or("MW") {
        "kW" => Ok(1e-3),
        "MW" => Ok(1.0),
        "GW" => Ok(1e3),
        other => Err(Error::Validation(format!(
            "power_unit must be one of kW, MW, GW (got {other:?})"
        ))),
    }
}

impl RawScenario {
    fn into_scenario(self) -> Result<Scenario> {
        let scale = power_scale(self.power_unit.as_deref())?;
        let regions = self
            .regions
            .unwrap_or_else(|| vec![DEFAULT_REGION.to_string()]);
        let technologies: Vec<Technology> = self
            .technologies
            .into_iter()
            .map(|t| Technology {
                id: t.id,
                marginal_cost: t.marginal_cost / scale,
                capex: t.capex / scale,
                fom: t.fom / scale,
                invest_limit: t.invest_limit * scale,
            })
            .collect();

        let loads = match self.load {
            RawLoad::Single(d) => {
                if regions.len() != 1 {
                    return Err(Error::Validation(
                        "a bare load list is only allowed with a single region; use [load] <region> = [...]"
                            .into(),
                    ));
                }
                vec![d]
            }
            RawLoad::PerRegion(mut map) => {
                let mut out = Vec::with_capacity(regions.len());
                for r in &regions {
                    let d = map.remove(r).ok_or_else(|| {
                        Error::Validation(format!("missing load profile for region {r}"))
                    })?;
                    out.push(d);
                }
                if let Some(extra) = map.keys().next() {
                    return Err(Error::Validation(format!(
                        "load profile given for unknown region {extra}"
                    )));
                }
                out
            }
        };
        let loads = loads
            .into_iter()
            .map(|d| LoadProfile::new(d.into_iter().map(|v| v * scale).collect()))
            .collect::<Result<Vec<_>>>()?;

        let n_slots = regions.len() * technologies.len();
        let lookup = |map: &RegionTechMap<f64>, what: &str, genco: &str| -> Result<Vec<Option<f64>>> {
            let mut out = vec![None; n_slots];
            for (region, techs) in map {
                let r = regions.iter().position(|x| x == region).ok_or_else(|| {
                    Error::Validation(format!("genco {genco}: {what} names unknown region {region}"))
                })?;
                for (tech, v) in techs {
                    let g = technologies.iter().position(|t| &t.id == tech).ok_or_else(|| {
                        Error::Validation(format!(
                            "genco {genco}: {what} names unknown technology {tech}"
                        ))
                    })?;
                    out[r * technologies.len() + g] = Some(*v);
                }
            }
            Ok(out)
        };

        let mut gencos = Vec::with_capacity(self.gencos.len());
        for raw in self.gencos {
            let existing = lookup(&raw.existing, "existing", &raw.id)?;
            let capex = lookup(&raw.capex, "capex", &raw.id)?;
            let limit = lookup(&raw.invest_limit, "invest_limit", &raw.id)?;
            let tech = |s: usize| &technologies[s % technologies.len()];
            gencos.push(Genco {
                existing: (0..n_slots)
                    .map(|s| existing[s].map_or(0.0, |v| v * scale))
                    .collect(),
                capex: (0..n_slots)
                    .map(|s| capex[s].map_or(tech(s).capex, |v| v / scale))
                    .collect(),
                invest_limit: (0..n_slots)
                    .map(|s| limit[s].map_or(tech(s).invest_limit, |v| v * scale))
                    .collect(),
                id: raw.id,
            });
        }

        let bounds = match &self.sampling {
            Some(sampling) => {
                let mut out: Vec<Option<(f64, f64)>> = vec![None; n_slots];
                for (region, techs) in &sampling.bounds {
                    let r = regions.iter().position(|x| x == region).ok_or_else(|| {
                        Error::Validation(format!("sampling bounds name unknown region {region}"))
                    })?;
                    for (tech, [lo, hi]) in techs {
                        let g = technologies.iter().position(|t| &t.id == tech).ok_or_else(|| {
                            Error::Validation(format!(
                                "sampling bounds name unknown technology {tech}"
                            ))
                        })?;
                        out[r * technologies.len() + g] = Some((lo * scale, hi * scale));
                    }
                }
                Some(out)
            }
            None => None,
        };

        let scenario = Scenario::new(regions, technologies, gencos, loads, self.voll / scale)?;
        match bounds {
            None => Ok(scenario),
            Some(partial) => {
                let defaults = scenario.sampling_bounds();
                let merged = partial
                    .into_iter()
                    .zip(defaults)
                    .map(|(given, default)| given.unwrap_or(default))
                    .collect();
                scenario.with_sampling_bounds(merged)
            }
        }
    }

    fn from_scenario(s: &Scenario) -> Self {
        let per_slot = |values: &[f64]| -> RegionTechMap<f64> {
            let mut map = RegionTechMap::new();
            for (slot, v) in values.iter().enumerate() {
                let (r, g) = s.slot_parts(slot);
                map.entry(s.regions[r].clone())
                    .or_default()
                    .insert(s.technologies[g].id.clone(), *v);
            }
            map
        };
        let load = if s.regions.len() == 1 {
            RawLoad::Single(s.loads[0].demand.clone())
        } else {
            RawLoad::PerRegion(
                s.regions
                    .iter()
                    .cloned()
                    .zip(s.loads.iter().map(|l| l.demand.clone()))
                    .collect(),
            )
        };
        let sampling = s.sampling_bounds.as_ref().map(|bounds| {
            let mut map = RegionTechMap::new();
            for (slot, (lo, hi)) in bounds.iter().enumerate() {
                let (r, g) = s.slot_parts(slot);
                map.entry(s.regions[r].clone())
                    .or_insert_with(BTreeMap::new)
                    .insert(s.technologies[g].id.clone(), [*lo, *hi]);
            }
            RawSampling { bounds: map }
        });
        RawScenario {
            voll: s.voll,
            power_unit: None,
            regions: Some(s.regions.clone()),
            load,
            technologies: s
                .technologies
                .iter()
                .map(|t| RawTechnology {
                    id: t.id.clone(),
                    marginal_cost: t.marginal_cost,
                    capex: t.capex,
                    fom: t.fom,
                    invest_limit: t.invest_limit,
                })
                .collect(),
            gencos: s
                .gencos
                .iter()
                .map(|g| RawGenco {
                    id: g.id.clone(),
                    existing: per_slot(&g.existing),
                    capex: per_slot(&g.capex),
                    invest_limit: per_slot(&g.invest_limit),
                })
                .collect(),
            sampling,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const CASE_ONE: &str = include_str!("../../../configs/case1.toml");

    #[test]
    fn loads_case_one() {
        let s = Scenario::from_toml_str(CASE_ONE).unwrap();
        let techs: Vec<_> = s
            .technologies()
            .iter()
            .map(|t| (t.id.as_str(), t.marginal_cost, t.capex, t.invest_limit))
            .collect();
        assert_eq!(
            techs,
            vec![
                ("ST", 2.0, 15.0, 300.0),
                ("CT", 3.0, 9.9, 200.0),
                ("CCGT", 4.0, 10.0, 100.0)
            ]
        );
        assert_eq!(s.periods(), 12);
        assert_eq!(s.gencos().len(), 3);
        assert_eq!(s.voll(), 1000.0);
        assert_eq!(s.regions(), &["R1".to_string()]);
        assert!(s.technologies().iter().all(|t| t.fom == 0.0));
        assert_eq!(s.loads()[0].min(), 1421.0);
        assert_eq!(
            s.sampling_bounds(),
            vec![(0.0, 900.0), (0.0, 600.0), (0.0, 300.0)]
        );
    }

    #[test]
    fn voll_below_marginal_cost_is_rejected() {
        let text = CASE_ONE.replace("voll = 1000.0", "voll = 1.0");
        let err = Scenario::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        assert!(err.to_string().contains("voll"), "{err}");
    }

    #[test]
    fn minimal_scenario() {
        let text = r#"
            voll = 100.0
            load = [5.0]
            [[technologies]]
            id = "A"
            marginal_cost = 1.0
            capex = 2.0
            invest_limit = 10.0
            [[gencos]]
            id = "G1"
        "#;
        let s = Scenario::from_toml_str(text).unwrap();
        assert_eq!(s.n_slots(), 1);
        assert_eq!(s.periods(), 1);
        assert_eq!(s.gencos()[0].invest_limit, vec![10.0]);
        assert_eq!(s.gencos()[0].existing, vec![0.0]);
    }

    #[test]
    fn parse_error_reports_line() {
        let err = Scenario::from_toml_str("voll = 1000.0\nload = [1.0,\n[[x]]").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn missing_field_is_a_parse_error() {
        let text = CASE_ONE.replace("marginal_cost = 3.0", "");
        let err = Scenario::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("marginal_cost"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to, needle) in [
            ("invest_limit = 300.0", "invest_limit = 0.0", "invest_limit"),
            ("capex = 15.0", "capex = -1.0", "capex"),
            ("1493.0", "-3.0", "demand"),
        ] {
            let text = CASE_ONE.replacen(from, to, 1);
            let err = Scenario::from_toml_str(&text).unwrap_err();
            assert!(err.to_string().contains(needle), "{err}");
        }
    }

    #[test]
    fn power_unit_is_normalized_to_mw() {
        let text = r#"
            voll = 1000000.0
            power_unit = "GW"
            load = [1.5]
            [[technologies]]
            id = "A"
            marginal_cost = 2000.0
            capex = 15000.0
            invest_limit = 0.3
            [[gencos]]
            id = "G1"
        "#;
        let s = Scenario::from_toml_str(text).unwrap();
        assert_eq!(s.loads()[0].demand(), &[1500.0]);
        let t = &s.technologies()[0];
        assert_eq!((t.marginal_cost, t.capex, t.invest_limit), (2.0, 15.0, 300.0));
        assert_eq!(s.voll(), 1000.0);
    }

    #[test]
    fn multi_region_overrides() {
        let text = r#"
            voll = 500.0
            regions = ["N", "S"]
            [load]
            N = [10.0, 12.0]
            S = [7.0, 9.0]
            [[technologies]]
            id = "A"
            marginal_cost = 1.0
            capex = 2.0
            invest_limit = 10.0
            [[gencos]]
            id = "G1"
            existing = { S = { A = 4.0 } }
            capex = { N = { A = 3.5 } }
            [sampling.bounds.N]
            A = [1.0, 2.0]
        "#;
        let s = Scenario::from_toml_str(text).unwrap();
        assert_eq!(s.n_slots(), 2);
        assert_eq!(s.gencos()[0].existing, vec![0.0, 4.0]);
        assert_eq!(s.gencos()[0].capex, vec![3.5, 2.0]);
        assert_eq!(s.sampling_bounds(), vec![(1.0, 2.0), (0.0, 14.0)]);
        assert_eq!(s.slot_labels(), vec!["N_A", "S_A"]);
        let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario::from_toml_str(CASE_ONE).unwrap();
        let text = s.to_toml_string();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    }

    #[test]
    fn total_buildout_sums() {
        let total = total_buildout(&[vec![300.0, 200.0, 18.0], vec![300.0, 200.0, 100.0], vec![300.0, 3.0, 0.0]])
            .unwrap();
        assert_eq!(total.total(), 1421.0);
        let zero = total_buildout(&[vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert_eq!(zero, Buildout::zeros(3));
        let one = total_buildout(&[vec![300.0, 0.0, 0.0]]).unwrap();
        assert_eq!(one.as_slice(), &[300.0, 0.0, 0.0]);
    }

    #[test]
    fn total_buildout_rejects_mismatch() {
        let err = total_buildout(&[vec![1.0, 2.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    proptest::proptest! {
        #[test]
        fn total_buildout_is_order_independent(
            parts in proptest::collection::vec(proptest::collection::vec(0u32..1000, 3), 1..6)
        ) {
            let parts: Vec<Vec<f64>> = parts
                .into_iter()
                .map(|p| p.into_iter().map(f64::from).collect())
                .collect();
            let mut reversed = parts.clone();
            reversed.reverse();
            let a = total_buildout(&parts).unwrap();
            let b = total_buildout(&reversed).unwrap();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
