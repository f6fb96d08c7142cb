#![allow(dead_code)]

pub mod oracle;

use ecs_core::{Dataset, DeltaSpec, EcsConfig, EcsRun, Matrix, MetricKind, PairClass};
use oracle::{OracleDelta, OracleInstance, OracleMetric, OracleResult};

pub fn to_dataset(inst: &OracleInstance) -> Dataset {
    Dataset::new(
        Matrix::from_rows(&inst.inputs).unwrap(),
        Matrix::from_rows(&inst.outputs).unwrap(),
    )
    .unwrap()
}

pub fn to_config(inst: &OracleInstance) -> EcsConfig {
    let metric = |m| match m {
        OracleMetric::Euclidean => MetricKind::Euclidean,
        OracleMetric::Manhattan => MetricKind::Manhattan,
        OracleMetric::ExactMatch => MetricKind::ExactMatch,
    };
    let delta = |d| match d {
        OracleDelta::Abs(v) => DeltaSpec::Absolute(v),
        OracleDelta::Rel(v) => DeltaSpec::Relative(v),
    };
    EcsConfig {
        in_metric: metric(inst.in_metric),
        out_metric: metric(inst.out_metric),
        delta_in: delta(inst.delta_in),
        delta_out: delta(inst.delta_out),
        k_max: inst.k_max,
    }
}

/// First mismatch between a run and the oracle, if any.
pub fn compare_with_oracle(run: &EcsRun, want: &OracleResult) -> Option<String> {
    if run.resolved.delta_in_abs != want.delta_in || run.resolved.delta_out_abs != want.delta_out {
        return Some(format!(
            "deltas differ: run {:?}, oracle ({}, {})",
            run.resolved, want.delta_in, want.delta_out
        ));
    }
    if run.resolved.max_in_dist != want.max_in || run.resolved.max_out_dist != want.max_out {
        return Some("max distances differ".into());
    }
    if run.n() != want.profiles.len() {
        return Some("profile count differs".into());
    }
    for (i, w) in want.profiles.iter().enumerate() {
        let p = run.profile(i);
        let nb: Vec<usize> = p.neighbor_ids.iter().map(|&j| j as usize).collect();
        if nb != w.neighbors {
            return Some(format!("anchor {i}: neighbor order {nb:?} vs {:?}", w.neighbors));
        }
        let cls: Vec<u8> = p.class_at_rank.iter().map(|&c| c as u8).collect();
        if cls != w.classes {
            return Some(format!("anchor {i}: classes differ"));
        }
        for s in PairClass::ALL {
            if p.cumulative(s) != w.cumulative[s.index()] {
                return Some(format!("anchor {i}: cumulative {s} differs"));
            }
        }
    }
    None
}

/// Partition identity, monotone 0/1 increments and F <= k for every profile.
pub fn check_profile_invariants(run: &EcsRun) -> Option<String> {
    for p in run.profiles() {
        let cums: Vec<Vec<u32>> = PairClass::ALL.iter().map(|&s| p.cumulative(s)).collect();
        for k in 1..=p.len() {
            let total: u32 = cums.iter().map(|c| c[k - 1]).sum();
            if total as usize != k {
                return Some(format!("anchor {}: sum {total} at k = {k}", p.anchor_id));
            }
            for (s, c) in cums.iter().enumerate() {
                let prev = if k == 1 { 0 } else { c[k - 2] };
                let step = c[k - 1] - prev;
                if step > 1 || c[k - 1] as usize > k {
                    return Some(format!("anchor {}: set {s} bad step at k = {k}", p.anchor_id));
                }
            }
        }
        if p.neighbor_ids.iter().any(|&j| j as usize == p.anchor_id) {
            return Some(format!("anchor {} lists itself", p.anchor_id));
        }
    }
    None
}
