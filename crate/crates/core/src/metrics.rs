//! Input/output distance functions and delta thresholds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Matrix};
use crate::error::{EcsError, Result};

/// A distance on finite real vectors of equal length.
pub trait Metric {
    /// Caller guarantees equal lengths.
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    Manhattan,
    /// 0 for identical vectors, 1 otherwise.
    ExactMatch,
}

impl Metric for MetricKind {
    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            MetricKind::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            MetricKind::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            MetricKind::ExactMatch => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

impl MetricKind {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(EcsError::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        Ok(self.eval(a, b))
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::Manhattan => "manhattan",
            MetricKind::ExactMatch => "exact_match",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = EcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(MetricKind::Euclidean),
            "manhattan" => Ok(MetricKind::Manhattan),
            "exact_match" | "exact-match" | "exact" => Ok(MetricKind::ExactMatch),
            other => Err(EcsError::InvalidConfig(format!(
                "unknown metric {other:?} (valid: euclidean, manhattan, exact_match)"
            ))),
        }
    }
}

/// A threshold given either directly or as a fraction of the maximum pairwise distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum DeltaSpec {
    Absolute(f64),
    Relative(f64),
}

impl DeltaSpec {
    pub fn absolute(v: f64) -> Result<Self> {
        let d = DeltaSpec::Absolute(v);
        d.validate()?;
        Ok(d)
    }

    pub fn relative(v: f64) -> Result<Self> {
        let d = DeltaSpec::Relative(v);
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DeltaSpec::Absolute(v) if v.is_finite() && v >= 0.0 => Ok(()),
            DeltaSpec::Relative(v) if (0.0..=1.0).contains(&v) => Ok(()),
            DeltaSpec::Absolute(v) => Err(EcsError::InvalidDelta(format!(
                "absolute delta must be finite and >= 0, got {v}"
            ))),
            DeltaSpec::Relative(v) => Err(EcsError::InvalidDelta(format!(
                "relative delta must lie in [0, 1], got {v}"
            ))),
        }
    }

    pub fn resolve(&self, max_dist: f64) -> f64 {
        match *self {
            DeltaSpec::Absolute(v) => v,
            DeltaSpec::Relative(f) => f * max_dist,
        }
    }

    pub fn is_relative(&self) -> bool {
        matches!(self, DeltaSpec::Relative(_))
    }
}

impl fmt::Display for DeltaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSpec::Absolute(v) => write!(f, "abs:{v}"),
            DeltaSpec::Relative(v) => write!(f, "rel:{v}"),
        }
    }
}

/// Parses `rel:0.3` or `abs:0`.
impl FromStr for DeltaSpec {
    type Err = EcsError;

    fn from_str(s: &str) -> Result<Self> {
        let (mode, val) = s
            .split_once(':')
            .ok_or_else(|| EcsError::InvalidDelta(format!("expected rel:x or abs:x, got {s:?}")))?;
        let v: f64 = val
            .trim()
            .parse()
            .map_err(|_| EcsError::InvalidDelta(format!("not a number: {val:?}")))?;
        match mode.trim() {
            "rel" => DeltaSpec::relative(v),
            "abs" => DeltaSpec::absolute(v),
            m => Err(EcsError::InvalidDelta(format!(
                "unknown delta mode {m:?} (use rel or abs)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedDeltas {
    pub delta_in_abs: f64,
    pub delta_out_abs: f64,
    pub max_in_dist: f64,
    pub max_out_dist: f64,
}

impl ResolvedDeltas {
    pub fn new(din: DeltaSpec, dout: DeltaSpec, max_in_dist: f64, max_out_dist: f64) -> Self {
        ResolvedDeltas {
            delta_in_abs: din.resolve(max_in_dist),
            delta_out_abs: dout.resolve(max_out_dist),
            max_in_dist,
            max_out_dist,
        }
    }
}

/// Exact maximum of `kind` over all unordered row pairs.
pub fn max_pairwise_distance(side: &Matrix, kind: MetricKind) -> Result<f64> {
    let n = side.rows();
    if n < 2 {
        return Err(EcsError::TooFewRecords(n));
    }
    let mut max = 0.0f64;
    for i in 0..n {
        let a = side.row(i);
        for j in (i + 1)..n {
            max = max.max(kind.eval(a, side.row(j)));
        }
    }
    Ok(max)
}

pub fn resolve_deltas(
    ds: &Dataset,
    in_kind: MetricKind,
    out_kind: MetricKind,
    din: DeltaSpec,
    dout: DeltaSpec,
) -> Result<ResolvedDeltas> {
    din.validate()?;
    dout.validate()?;
    let max_in = max_pairwise_distance(ds.inputs(), in_kind)?;
    let max_out = max_pairwise_distance(ds.outputs(), out_kind)?;
    Ok(ResolvedDeltas::new(din, dout, max_in, max_out))
}
