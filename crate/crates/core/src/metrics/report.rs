use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    W1Sliced,
    W1Assignment,
    RelativeEntropy,
    Chaoticity,
    Relaxation,
    SecondMoment,
    FourthMoment,
    Events,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::W1Sliced => "w1_sliced",
            MetricKind::W1Assignment => "w1_assignment",
            MetricKind::RelativeEntropy => "relative_entropy",
            MetricKind::Chaoticity => "alpha",
            MetricKind::Relaxation => "beta",
            MetricKind::SecondMoment => "m2",
            MetricKind::FourthMoment => "m4",
            MetricKind::Events => "events",
        }
    }
}

/// One estimated quantity with its error bar and the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: MetricKind,
    pub time: Option<f64>,
    pub particles: Option<usize>,
    pub order: Option<usize>,
    pub value: f64,
    pub error: f64,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub flags: Vec<String>,
}

impl MetricReport {
    pub fn new(kind: MetricKind, value: f64, error: f64, seed: u64) -> Self {
        Self {
            kind,
            time: None,
            particles: None,
            order: None,
            value,
            error,
            params: BTreeMap::new(),
            seed,
            flags: Vec::new(),
        }
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn with_particles(mut self, n: usize) -> Self {
        self.particles = Some(n);
        self
    }

    pub fn with_order(mut self, ell: usize) -> Self {
        self.order = Some(ell);
        self
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn flag(mut self, flag: &str) -> Self {
        self.flags.push(flag.to_string());
        self
    }
}
