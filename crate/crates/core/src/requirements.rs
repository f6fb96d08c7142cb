//! Declarative dataset requirements checked against detection reports.
//!
//! A requirements file is plain text, one requirement per line:
//!
//! ```text
//! # detector [parameters] comparison bound
//! outliers K=200,t=181 <= 1000
//! isolated m=200 == 0
//! isolated_ue m=200 <= 150
//! groups g=100,tol=5 >= 30000
//! outliers <= 500
//! ```
//!
//! Detectors are `outliers`, `isolated` (merged UE/UU list), `isolated_ue`,
//! `isolated_uu` and `groups`. The observed value is the number of findings.
//! Parameters are optional: without them a requirement applies to the single
//! report of that detector kind. Comparisons: `<=` `>=` `==` `<` `>` (also
//! `≤` `≥` `=`). Blank lines and `#` comments are ignored.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detectors::{DetectionReport, GroupRule, IsolationRule, OutlierRule, Rule};
use crate::error::{EcsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMetric {
    Outliers,
    Isolated,
    IsolatedUe,
    IsolatedUu,
    Groups,
}

impl CountMetric {
    fn name(self) -> &'static str {
        match self {
            CountMetric::Outliers => "outliers",
            CountMetric::Isolated => "isolated",
            CountMetric::IsolatedUe => "isolated_ue",
            CountMetric::IsolatedUu => "isolated_uu",
            CountMetric::Groups => "groups",
        }
    }

    fn detector(self) -> &'static str {
        match self {
            CountMetric::Outliers => "outliers",
            CountMetric::Isolated | CountMetric::IsolatedUe | CountMetric::IsolatedUu => "isolated",
            CountMetric::Groups => "groups",
        }
    }

    fn observe(self, r: &DetectionReport) -> usize {
        let lists = r.isolation.as_ref();
        match self {
            CountMetric::IsolatedUe => lists.map_or(0, |l| l.ue.len()),
            CountMetric::IsolatedUu => lists.map_or(0, |l| l.uu.len()),
            _ => r.findings.len(),
        }
    }
}

impl FromStr for CountMetric {
    type Err = EcsError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "outliers" => CountMetric::Outliers,
            "isolated" => CountMetric::Isolated,
            "isolated_ue" => CountMetric::IsolatedUe,
            "isolated_uu" => CountMetric::IsolatedUu,
            "groups" => CountMetric::Groups,
            other => {
                return Err(EcsError::InvalidRule(format!(
                    "unknown detector {other:?} (valid: outliers, isolated, isolated_ue, isolated_uu, groups)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl Comparison {
    pub fn holds(self, observed: usize, bound: usize) -> bool {
        match self {
            Comparison::Le => observed <= bound,
            Comparison::Ge => observed >= bound,
            Comparison::Eq => observed == bound,
            Comparison::Lt => observed < bound,
            Comparison::Gt => observed > bound,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::Le => "<=",
            Comparison::Ge => ">=",
            Comparison::Eq => "==",
            Comparison::Lt => "<",
            Comparison::Gt => ">",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "<=" | "≤" => Comparison::Le,
            ">=" | "≥" => Comparison::Ge,
            "==" | "=" => Comparison::Eq,
            "<" => Comparison::Lt,
            ">" => Comparison::Gt,
            _ => return None,
        })
    }
}

/// Builds a rule from `key=value` pairs separated by commas or whitespace.
///
/// Accepted keys: outliers `K`/`window`, `t`/`min_eu`; isolated `m`/`window`;
/// groups `g`/`group_size`, `tol`/`tau`/`tolerance` (default 5).
pub fn parse_rule(detector: &str, params: &str) -> Result<Rule> {
    let mut pairs = Vec::new();
    for tok in params.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| EcsError::InvalidRule(format!("expected key=value, got {tok:?}")))?;
        let v: usize = v
            .parse()
            .map_err(|_| EcsError::InvalidRule(format!("{k}: not a non-negative integer: {v:?}")))?;
        pairs.push((k.to_string(), v));
    }
    let take = |names: &[&str]| -> Option<usize> {
        pairs
            .iter()
            .rev()
            .find(|(k, _)| names.contains(&k.as_str()))
            .map(|(_, v)| *v)
    };
    let known: &[&str] = match detector {
        "outliers" => &["K", "k", "window", "t", "min_eu"],
        "isolated" | "isolated_ue" | "isolated_uu" => &["m", "window"],
        "groups" => &["g", "group_size", "tol", "tau", "tolerance"],
        _ => &[],
    };
    if let Some((k, _)) = pairs.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(EcsError::InvalidRule(format!("unknown parameter {k:?} for {detector}")));
    }
    let missing = |what: &str| EcsError::InvalidRule(format!("{detector}: missing parameter {what}"));
    let rule = match detector {
        "outliers" => Rule::Outliers(OutlierRule {
            window: take(&["K", "k", "window"]).ok_or_else(|| missing("K"))?,
            min_eu: take(&["t", "min_eu"]).ok_or_else(|| missing("t"))? as u32,
        }),
        "isolated" | "isolated_ue" | "isolated_uu" => Rule::Isolated(IsolationRule {
            window: take(&["m", "window"]).ok_or_else(|| missing("m"))?,
        }),
        "groups" => Rule::Groups(GroupRule {
            group_size: take(&["g", "group_size"]).ok_or_else(|| missing("g"))?,
            tolerance: take(&["tol", "tau", "tolerance"]).unwrap_or(5),
        }),
        other => return Err(EcsError::InvalidRule(format!("unknown detector {other:?}"))),
    };
    rule.validate()?;
    Ok(rule)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub metric: CountMetric,
    /// When absent, matches the only report of the metric's detector kind.
    pub rule: Option<Rule>,
    pub comparison: Comparison,
    pub bound: usize,
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.metric.name())?;
        match &self.rule {
            Some(Rule::Outliers(r)) => write!(f, " K={},t={}", r.window, r.min_eu)?,
            Some(Rule::Isolated(r)) => write!(f, " m={}", r.window)?,
            Some(Rule::Groups(r)) => write!(f, " g={},tol={}", r.group_size, r.tolerance)?,
            None => {}
        }
        write!(f, " {} {}", self.comparison.symbol(), self.bound)
    }
}

impl Requirement {
    fn parse_line(line: &str, lineno: usize) -> Result<Self> {
        let err = |message: String| EcsError::RequirementSyntax {
            line: lineno,
            message,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        let op_at = toks
            .iter()
            .position(|t| Comparison::parse(t).is_some())
            .ok_or_else(|| err("missing comparison (<=, >=, ==, <, >)".into()))?;
        if op_at == 0 {
            return Err(err("missing detector name".into()));
        }
        if op_at + 2 != toks.len() {
            return Err(err("expected a single bound after the comparison".into()));
        }
        let metric: CountMetric = toks[0].parse().map_err(|e: EcsError| err(e.to_string()))?;
        let comparison = Comparison::parse(toks[op_at]).expect("checked above");
        let bound: usize = toks[op_at + 1]
            .parse()
            .map_err(|_| err(format!("bound is not a non-negative integer: {:?}", toks[op_at + 1])))?;
        let params = toks[1..op_at].join(" ");
        let rule = if params.is_empty() {
            None
        } else {
            Some(parse_rule(toks[0], &params).map_err(|e| err(e.to_string()))?)
        };
        Ok(Requirement {
            metric,
            rule,
            comparison,
            bound,
        })
    }

    fn find_report<'r>(&self, reports: &'r [DetectionReport]) -> Result<&'r DetectionReport> {
        match &self.rule {
            Some(rule) => reports
                .iter()
                .find(|r| r.rule == *rule)
                .ok_or_else(|| EcsError::MissingReport(self.to_string())),
            None => {
                let mut it = reports.iter().filter(|r| r.rule.kind_name() == self.metric.detector());
                match (it.next(), it.next()) {
                    (Some(r), None) => Ok(r),
                    (None, _) => Err(EcsError::MissingReport(self.to_string())),
                    (Some(_), Some(_)) => Err(EcsError::InvalidRule(format!(
                        "requirement {self} matches several reports; give its parameters"
                    ))),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequirementSet {
    pub requirements: Vec<Requirement>,
}

impl RequirementSet {
    pub fn parse(text: &str) -> Result<Self> {
        let requirements = text
            .lines()
            .enumerate()
            .filter_map(|(i, raw)| {
                let line = raw.split('#').next().unwrap_or("").trim();
                (!line.is_empty()).then(|| Requirement::parse_line(line, i + 1))
            })
            .collect::<Result<_>>()?;
        Ok(RequirementSet { requirements })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EcsError::io(path, e))?;
        Self::parse(&text)
    }

    /// Rules named explicitly by requirements, in file order, deduplicated.
    pub fn explicit_rules(&self) -> Vec<Rule> {
        let mut out: Vec<Rule> = Vec::new();
        for r in self.requirements.iter().filter_map(|r| r.rule) {
            if !out.contains(&r) {
                out.push(r);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub requirement: String,
    pub observed: usize,
    pub comparison: Comparison,
    pub bound: usize,
    pub passed: bool,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} (observed {}, required {} {})",
            self.requirement,
            if self.passed { "PASS" } else { "FAIL" },
            self.observed,
            self.comparison.symbol(),
            self.bound
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Fails iff any bound is violated. An empty requirement set passes.
pub fn check_requirements(reports: &[DetectionReport], requirements: &RequirementSet) -> Result<Verdict> {
    let diagnostics = requirements
        .requirements
        .iter()
        .map(|req| {
            let report = req.find_report(reports)?;
            let observed = req.metric.observe(report);
            Ok(Diagnostic {
                requirement: req.to_string(),
                observed,
                comparison: req.comparison,
                bound: req.bound,
                passed: req.comparison.holds(observed, req.bound),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Verdict {
        passed: diagnostics.iter().all(|d| d.passed),
        diagnostics,
    })
}
