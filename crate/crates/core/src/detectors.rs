//! Outlier, isolated-point and local-group detection on ECS profiles.
//!
//! * Outliers: many of the `K` nearest neighbors have a large output distance,
//!   `F_EU(K) >= t`.
//! * Isolated points: fewer than `m` neighbors lie within delta_in, i.e. a
//!   large-input rank (UE or UU) appears within the first `m` ranks.
//! * Local groups: nearly all of the `g` nearest neighbors are close in both
//!   spaces, `F_EE(g) >= g - tolerance`.

use serde::{Deserialize, Serialize};

use crate::engine::{EcsRun, PairClass};
use crate::error::{EcsError, Result};
use crate::metrics::ResolvedDeltas;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierRule {
    pub window: usize,
    pub min_eu: u32,
}

impl OutlierRule {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.min_eu == 0 {
            return Err(EcsError::InvalidRule(
                "outlier window and threshold must be positive".into(),
            ));
        }
        if self.min_eu as usize > self.window {
            return Err(EcsError::InvalidRule(format!(
                "outlier threshold {} exceeds window {}",
                self.min_eu, self.window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationRule {
    pub window: usize,
}

impl IsolationRule {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(EcsError::InvalidRule("isolation window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRule {
    pub group_size: usize,
    pub tolerance: usize,
}

impl GroupRule {
    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(EcsError::InvalidRule("group size must be at least 1".into()));
        }
        if self.tolerance >= self.group_size {
            return Err(EcsError::InvalidRule(format!(
                "tolerance {} must be below group size {}",
                self.tolerance, self.group_size
            )));
        }
        Ok(())
    }
}

/// Any detector rule; the JSON form is tagged by `detector`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "detector", rename_all = "snake_case")]
pub enum Rule {
    Outliers(OutlierRule),
    Isolated(IsolationRule),
    Groups(GroupRule),
}

impl Rule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Rule::Outliers(r) => r.validate(),
            Rule::Isolated(r) => r.validate(),
            Rule::Groups(r) => r.validate(),
        }
    }

    pub fn window(&self) -> usize {
        match self {
            Rule::Outliers(r) => r.window,
            Rule::Isolated(r) => r.window,
            Rule::Groups(r) => r.group_size,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Rule::Outliers(_) => "outliers",
            Rule::Isolated(_) => "isolated",
            Rule::Groups(_) => "groups",
        }
    }

    pub fn run(&self, run: &EcsRun) -> Result<DetectionReport> {
        match self {
            Rule::Outliers(r) => detect_outliers(run, r),
            Rule::Isolated(r) => detect_isolated(run, r),
            Rule::Groups(r) => detect_groups(run, r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: usize,
    pub score: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub onset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationLists {
    pub ue: Vec<Finding>,
    pub uu: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub n: usize,
    pub findings: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ue: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uu: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub rule: Rule,
    pub resolved: ResolvedDeltas,
    pub dataset_fingerprint: String,
    /// Sorted by descending score, then ascending id. For isolation this is
    /// the union of the UE and UU lists.
    pub findings: Vec<Finding>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub isolation: Option<IsolationLists>,
    pub counts: ReportCounts,
}

impl DetectionReport {
    pub fn ids(&self) -> Vec<usize> {
        self.findings.iter().map(|f| f.id).collect()
    }

    pub fn count(&self) -> usize {
        self.findings.len()
    }
}

fn sort_findings(f: &mut [Finding]) {
    f.sort_by(|a, b| b.score.cmp(&a.score).then(a.id.cmp(&b.id)));
}

fn report(run: &EcsRun, rule: Rule, mut findings: Vec<Finding>, isolation: Option<IsolationLists>) -> DetectionReport {
    sort_findings(&mut findings);
    DetectionReport {
        rule,
        resolved: run.resolved,
        dataset_fingerprint: run.dataset_fingerprint.clone(),
        counts: ReportCounts {
            n: run.n(),
            findings: findings.len(),
            ue: isolation.as_ref().map(|l| l.ue.len()),
            uu: isolation.as_ref().map(|l| l.uu.len()),
        },
        findings,
        isolation,
    }
}

/// Findings for all ids with `F_EU(K) >= t`; score is `F_EU(K)`.
pub fn detect_outliers(run: &EcsRun, rule: &OutlierRule) -> Result<DetectionReport> {
    rule.validate()?;
    run.check_window(rule.window)?;
    let findings = run
        .profiles()
        .filter_map(|p| {
            let v = p.value(PairClass::EU, rule.window);
            (v >= rule.min_eu).then_some(Finding {
                id: p.anchor_id,
                score: v,
                onset: None,
            })
        })
        .collect();
    Ok(report(run, Rule::Outliers(*rule), findings, None))
}

/// Ids with fewer than `m` neighbors inside delta_in.
///
/// The UE (UU) list holds the isolated ids whose window contains a UE (UU)
/// rank, with onset = first such rank. The merged list unions both with onset
/// at the first large-input rank. Score is `m` minus the number of neighbors
/// within delta_in.
pub fn detect_isolated(run: &EcsRun, rule: &IsolationRule) -> Result<DetectionReport> {
    rule.validate()?;
    run.check_window(rule.window)?;
    let m = rule.window;
    let mut merged = Vec::new();
    let mut ue = Vec::new();
    let mut uu = Vec::new();
    for p in run.profiles() {
        let close = p.input_close_prefix().min(m);
        if close >= m {
            continue;
        }
        let score = (m - close) as u32;
        let window = &p.class_at_rank[..m];
        let onset_of = |set: PairClass| window.iter().position(|&c| c == set).map(|r| r + 1);
        merged.push(Finding {
            id: p.anchor_id,
            score,
            onset: Some(close + 1),
        });
        for (set, list) in [(PairClass::UE, &mut ue), (PairClass::UU, &mut uu)] {
            if let Some(onset) = onset_of(set) {
                list.push(Finding {
                    id: p.anchor_id,
                    score,
                    onset: Some(onset),
                });
            }
        }
    }
    sort_findings(&mut ue);
    sort_findings(&mut uu);
    Ok(report(run, Rule::Isolated(*rule), merged, Some(IsolationLists { ue, uu })))
}

/// Findings for ids with `F_EE(g) >= g - tolerance`; score is `F_EE(g)`.
pub fn detect_groups(run: &EcsRun, rule: &GroupRule) -> Result<DetectionReport> {
    rule.validate()?;
    run.check_window(rule.group_size)?;
    let need = (rule.group_size - rule.tolerance) as u32;
    let findings = run
        .profiles()
        .filter_map(|p| {
            let v = p.value(PairClass::EE, rule.group_size);
            (v >= need).then_some(Finding {
                id: p.anchor_id,
                score: v,
                onset: None,
            })
        })
        .collect();
    Ok(report(run, Rule::Groups(*rule), findings, None))
}

/// Inclusive value range of a fulfillment bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: u32,
    pub hi: u32,
}

impl Bucket {
    pub fn new(lo: u32, hi: u32) -> Self {
        Bucket { lo, hi }
    }

    pub fn contains(&self, v: u32) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    /// Partition of `0..=window` at 10 / 50 / 100, highest bucket first.
    ///
    /// For `window = 200` this is 101-200, 51-100, 11-50, 0-10.
    pub fn default_partition(window: usize) -> Vec<Bucket> {
        let top = window as u32;
        let mut out = Vec::new();
        let mut lo = 0u32;
        for edge in [10u32, 50, 100, u32::MAX] {
            if lo > top {
                break;
            }
            out.push(Bucket::new(lo, edge.min(top)));
            lo = edge.saturating_add(1);
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCount {
    pub bucket: Bucket,
    pub count: usize,
}

/// Counts of `F_set(window)` over all ids, per bucket. Buckets may overlap.
pub fn fulfillment_histogram(
    run: &EcsRun,
    set: PairClass,
    window: usize,
    buckets: &[Bucket],
) -> Result<Vec<BucketCount>> {
    run.check_window(window)?;
    let values: Vec<u32> = run.profiles().map(|p| p.value(set, window)).collect();
    Ok(buckets
        .iter()
        .map(|&bucket| BucketCount {
            bucket,
            count: values.iter().filter(|&&v| bucket.contains(v)).count(),
        })
        .collect())
}
