//! Machine-readable experiment reports.
//!
//! Reports serialize deterministically: maps are ordered, floats are written
//! by `serde_json`, and nothing time-dependent is stored. Non-finite numbers
//! become `null`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::hypergeom::Estimate;

/// Version of `schemas/report.schema.json`.
pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    /// How `passed` follows from `statistic` and `threshold`.
    pub rule: String,
    /// Acceptance flags decide the exit status; diagnostics do not.
    pub acceptance: bool,
}

impl Flag {
    /// Passes when `statistic <= threshold`.
    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64, rule: &str) -> Self {
        Self {
            name: name.into(),
            passed: statistic <= threshold,
            statistic,
            threshold,
            rule: rule.to_string(),
            acceptance: true,
        }
    }

    /// Passes when `statistic > threshold`.
    pub fn above(name: impl Into<String>, statistic: f64, threshold: f64, rule: &str) -> Self {
        Self {
            name: name.into(),
            passed: statistic > threshold,
            statistic,
            threshold,
            rule: rule.to_string(),
            acceptance: true,
        }
    }

    pub fn diagnostic(mut self) -> Self {
        self.acceptance = false;
        self
    }
}

/// One per-environment scalar, as written to CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub env_index: usize,
    pub seed_stream: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    pub params: BTreeMap<String, f64>,
    pub estimate: Estimate,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
    /// Raw scalars behind `estimate`; streamed to CSV, not stored in JSON.
    #[serde(skip)]
    pub samples: Vec<SampleRow>,
}

impl GridPoint {
    pub fn new(label: impl Into<String>, params: &[(&str, f64)], estimate: Estimate) -> Self {
        Self {
            label: label.into(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            estimate,
            extra: BTreeMap::new(),
            samples: Vec::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    pub fn with_samples(mut self, samples: Vec<SampleRow>) -> Self {
        self.samples = samples;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub package: String,
    pub version: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(seed: u64) -> Self {
        Self { package: env!("CARGO_PKG_NAME").to_string(), version: env!("CARGO_PKG_VERSION").to_string(), seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: String,
    pub experiment: String,
    pub seed: u64,
    /// The configuration with every default filled in.
    pub config: RunConfig,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub points: Vec<GridPoint>,
    pub flags: Vec<Flag>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn new(experiment: &str, config: RunConfig) -> Self {
        let seed = config.seed();
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            experiment: experiment.to_string(),
            seed,
            config,
            metadata: BTreeMap::new(),
            points: Vec::new(),
            flags: Vec::new(),
            provenance: Provenance::new(seed),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.metadata.insert(key.to_string(), v);
    }

    /// True when every acceptance flag passes.
    pub fn passed(&self) -> bool {
        self.flags.iter().filter(|f| f.acceptance).all(|f| f.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    /// `(file name, contents)` for every grid point with raw samples.
    pub fn csv_files(&self) -> Vec<(String, String)> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.samples.is_empty())
            .map(|(i, p)| {
                let mut body = String::from("env_index,seed_stream,value\n");
                for r in &p.samples {
                    body.push_str(&format!("{},{},{:e}\n", r.env_index, r.seed_stream, r.value));
                }
                (format!("{}_{:03}_{}.csv", self.experiment, i, sanitize(&p.label)), body)
            })
            .collect()
    }
}

fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

/// Consecutive z-scores of the increase between the last three estimates
/// (ordered by grid size).
pub fn increase_z_scores(estimates: &[Estimate]) -> Vec<f64> {
    let tail = &estimates[estimates.len().saturating_sub(3)..];
    tail.windows(2).map(|w| w[0].z_diff(&w[1])).collect()
}

/// Smallest consecutive increase z-score across the three largest grid
/// values; a monotone increase is significant at level `z` when this exceeds `z`.
pub fn weakest_increase(estimates: &[Estimate]) -> f64 {
    let zs = increase_z_scores(estimates);
    if zs.is_empty() {
        return f64::NEG_INFINITY;
    }
    zs.into_iter().fold(f64::INFINITY, f64::min)
}
