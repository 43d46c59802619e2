//! Rate-distortion curves as exchanged between solvers and written to CSV.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Oracle,
    Nerd,
    Ba,
    BaPlugin,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Oracle => "oracle",
            Provenance::Nerd => "nerd",
            Provenance::Ba => "ba",
            Provenance::BaPlugin => "ba-plugin",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub distortion: f64,
    pub rate_bits: f64,
    pub provenance: Provenance,
    /// Number of source samples behind the point (0 for closed-form oracles).
    pub n: usize,
    pub params_digest: String,
}

/// A point a sweep could not produce, kept so callers can report it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedPoint {
    pub distortion: f64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    pub points: Vec<RdPoint>,
    #[serde(default)]
    pub failures: Vec<FailedPoint>,
}

impl RdCurve {
    pub fn new(mut points: Vec<RdPoint>) -> Self {
        points.sort_by(|a, b| a.distortion.total_cmp(&b.distortion));
        RdCurve {
            points,
            failures: Vec::new(),
        }
    }

    pub fn sort(&mut self) {
        self.points.sort_by(|a, b| a.distortion.total_cmp(&b.distortion));
        self.failures.sort_by(|a, b| a.distortion.total_cmp(&b.distortion));
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate_bits).collect()
    }

    pub fn distortions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.distortion).collect()
    }

    /// True if rates never rise by more than `slack` bits as distortion grows.
    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.points.windows(2).all(|w| w[1].rate_bits <= w[0].rate_bits + slack)
    }
}
