//! Surrogate training data: seeded uniform buildout sampling, dispatch
//! simulation per row, and CSV persistence.
//!
//! Row `i` draws from its own ChaCha stream (`stream = i`) under the master
//! seed, so the dataset does not depend on how rows are scheduled.

use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dispatch;
use crate::scenario::{Buildout, Scenario};
use crate::{Error, Result};

pub const FEATURE_PREFIX: &str = "k_";
pub const TARGET_PREFIX: &str = "profit_";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    /// One row per sample, installed MW per slot.
    pub inputs: Vec<Vec<f64>>,
    /// One row per sample, operational profit per slot.
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.target_names.iter().position(|n| n == name)
    }

    /// Column `j` of the target matrix.
    pub fn target_column(&self, j: usize) -> Vec<f64> {
        self.targets.iter().map(|row| row[j]).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }
}

/// Draw `n` buildouts, each coordinate uniform on its closed interval.
pub fn sample_buildouts(n: usize, bounds: &[(f64, f64)], seed: u64) -> Result<Vec<Buildout>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    for (s, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::InvalidInput(format!(
                "bounds for coordinate {s} must satisfy 0 <= lo <= hi, got [{lo}, {hi}]"
            )));
        }
    }
    (0..n)
        .map(|row| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(row as u64);
            let point = bounds
                .iter()
                .map(|&(lo, hi)| {
                    if hi > lo {
                        Uniform::new_inclusive(lo, hi).sample(&mut rng)
                    } else {
                        lo
                    }
                })
                .collect();
            Buildout::new(point)
        })
        .collect()
}

/// Simulate every buildout; one dataset row per buildout, in input order.
///
/// `workers` of 0 uses the global thread pool; 1 runs inline.
pub fn generate_dataset(
    scenario: &Scenario,
    buildouts: &[Buildout],
    workers: usize,
) -> Result<Dataset> {
    if buildouts.is_empty() {
        return Err(Error::InvalidInput("no buildouts to simulate".into()));
    }
    let simulate_row = |(row, b): (usize, &Buildout)| {
        dispatch::simulate(scenario, b)
            .map(|r| r.operational_profit)
            .map_err(|e| Error::Row {
                row,
                source: Box::new(e),
            })
    };
    let targets: Vec<Vec<f64>> = match workers {
        1 => buildouts.iter().enumerate().map(simulate_row).collect::<Result<_>>()?,
        0 => buildouts
            .par_iter()
            .enumerate()
            .map(simulate_row)
            .collect::<Result<_>>()?,
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(|| {
                buildouts
                    .par_iter()
                    .enumerate()
                    .map(simulate_row)
                    .collect::<Result<_>>()
            })?,
    };
    let labels = scenario.slot_labels();
    Ok(Dataset {
        feature_names: labels.iter().map(|l| format!("{FEATURE_PREFIX}{l}")).collect(),
        target_names: labels.iter().map(|l| format!("{TARGET_PREFIX}{l}")).collect(),
        inputs: buildouts.iter().map(|b| b.as_slice().to_vec()).collect(),
        targets,
    })
}

/// Deterministic shuffle split: returns `(train, test)` row indices.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let n_test = n_test.min(n);
    let test = idx.split_off(n - n_test);
    (idx, test)
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_dataset_to(ds, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// CSV with header `k_<region>_<tech>...,profit_<region>_<tech>...`. Values
/// use the shortest representation that parses back to the same `f64`.
pub fn write_dataset_to<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    let header: Vec<&str> = ds
        .feature_names
        .iter()
        .chain(&ds.target_names)
        .map(String::as_str)
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for (x, y) in ds.inputs.iter().zip(&ds.targets) {
        line.clear();
        for (i, v) in x.iter().chain(y).enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(file)
}

pub fn read_dataset_from<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::Schema("dataset is empty (no header)".into())),
    };
    let columns: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let n_features = columns.iter().take_while(|c| c.starts_with(FEATURE_PREFIX)).count();
    let feature_names = columns[..n_features].to_vec();
    let target_names = columns[n_features..].to_vec();
    if feature_names.is_empty() {
        return Err(Error::Schema(format!(
            "header must start with {FEATURE_PREFIX}<region>_<tech> columns"
        )));
    }
    if let Some(bad) = target_names.iter().find(|c| !c.starts_with(TARGET_PREFIX)) {
        return Err(Error::Schema(format!("unexpected column {bad:?}")));
    }
    for f in &feature_names {
        let slot = &f[FEATURE_PREFIX.len()..];
        let want = format!("{TARGET_PREFIX}{slot}");
        if !target_names.contains(&want) {
            return Err(Error::Schema(format!("missing target column {want}")));
        }
    }
    if target_names.len() != feature_names.len() {
        return Err(Error::Schema(format!(
            "expected {} target columns, found {}",
            feature_names.len(),
            target_names.len()
        )));
    }

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (line, record) in records.enumerate() {
        let record = record?;
        if record.len() != columns.len() {
            return Err(Error::Schema(format!(
                "row {} has {} fields, expected {}",
                line + 1,
                record.len(),
                columns.len()
            )));
        }
        let values = record
            .iter()
            .zip(&columns)
            .map(|(v, col)| {
                v.trim().parse::<f64>().map_err(|_| {
                    Error::Schema(format!("row {}: column {col}: not a number: {v:?}", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        targets.push(values[n_features..].to_vec());
        let mut x = values;
        x.truncate(n_features);
        inputs.push(x);
    }
    Ok(Dataset {
        feature_names,
        target_names,
        inputs,
        targets,
    })
}

/// Total market payout and operational profit along the diagonal of the
/// sampling box: for each total capacity, slots are filled in proportion to
/// their sampling upper bounds.
pub fn diagonal_buildout(scenario: &Scenario, total: f64) -> Buildout {
    let bounds = scenario.sampling_bounds();
    let span: f64 = bounds.iter().map(|b| b.1).sum();
    let mut caps: Vec<f64> = bounds
        .iter()
        .map(|b| if span > 0.0 { total * b.1 / span } else { 0.0 })
        .collect();
    // Make the rounded coordinates sum to `total` exactly so that points on
    // a load level are not nudged across it.
    if let Some(last) = caps.iter().rposition(|&c| c > 0.0) {
        for _ in 0..4 {
            let sum: f64 = caps.iter().sum();
            if sum == total {
                break;
            }
            caps[last] = (caps[last] + (total - sum)).max(0.0);
        }
    }
    Buildout::new(caps).expect("non-negative diagonal buildout")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoutPoint {
    pub total_capacity: f64,
    pub payout: f64,
    pub operational_profit: f64,
}

/// Exact-dispatch payout curve over the given total capacities.
pub fn payout_sweep(scenario: &Scenario, totals: &[f64]) -> Result<Vec<PayoutPoint>> {
    totals
        .iter()
        .map(|&k| {
            let r = dispatch::simulate(scenario, &diagonal_buildout(scenario, k))?;
            Ok(PayoutPoint {
                total_capacity: k,
                payout: r.payout(),
                operational_profit: r.total_operational_profit(),
            })
        })
        .collect()
}

pub fn write_payout_sweep(points: &[PayoutPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("total_capacity,payout,operational_profit\n");
    for p in points {
        text.push_str(&format!("{},{},{}\n", p.total_capacity, p.payout, p.operational_profit));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
