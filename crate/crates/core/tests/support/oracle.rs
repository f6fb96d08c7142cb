//! Brute-force reference for ECS profiles.
//!
//! Deliberately naive and independent of the library's engine: it builds the
//! full n x n distance matrices, sorts every row with a comparison sort and
//! accumulates the four counts directly.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMetric {
    Euclidean,
    Manhattan,
    ExactMatch,
}

pub fn oracle_distance(m: OracleMetric, a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    match m {
        OracleMetric::Euclidean => {
            let mut s = 0.0;
            for i in 0..a.len() {
                s += (a[i] - b[i]) * (a[i] - b[i]);
            }
            s.sqrt()
        }
        OracleMetric::Manhattan => {
            let mut s = 0.0;
            for i in 0..a.len() {
                s += (a[i] - b[i]).abs();
            }
            s
        }
        OracleMetric::ExactMatch => {
            if (0..a.len()).all(|i| a[i] == b[i]) {
                0.0
            } else {
                1.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleDelta {
    Abs(f64),
    Rel(f64),
}

#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub in_metric: OracleMetric,
    pub out_metric: OracleMetric,
    pub delta_in: OracleDelta,
    pub delta_out: OracleDelta,
    pub k_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleProfile {
    pub neighbors: Vec<usize>,
    /// 0 = EE, 1 = EU, 2 = UE, 3 = UU
    pub classes: Vec<u8>,
    /// cumulative[s][k - 1] = F_s(k)
    pub cumulative: [Vec<u32>; 4],
}

pub struct OracleResult {
    pub delta_in: f64,
    pub delta_out: f64,
    pub max_in: f64,
    pub max_out: f64,
    pub profiles: Vec<OracleProfile>,
}

fn matrix(rows: &[Vec<f64>], m: OracleMetric) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|a| rows.iter().map(|b| oracle_distance(m, a, b)).collect())
        .collect()
}

fn resolve(d: OracleDelta, max: f64) -> f64 {
    match d {
        OracleDelta::Abs(v) => v,
        OracleDelta::Rel(f) => f * max,
    }
}

pub fn brute_force(inst: &OracleInstance) -> OracleResult {
    let n = inst.inputs.len();
    let din = matrix(&inst.inputs, inst.in_metric);
    let dout = matrix(&inst.outputs, inst.out_metric);
    let mut max_in = 0.0f64;
    let mut max_out = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_in = max_in.max(din[i][j]);
                max_out = max_out.max(dout[i][j]);
            }
        }
    }
    let delta_in = resolve(inst.delta_in, max_in);
    let delta_out = resolve(inst.delta_out, max_out);
    let k = inst.k_max.min(n - 1);
    let profiles = (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| din[i][a].partial_cmp(&din[i][b]).unwrap().then(a.cmp(&b)));
            order.truncate(k);
            let classes: Vec<u8> = order
                .iter()
                .map(|&j| {
                    let small_in = din[i][j] <= delta_in;
                    let small_out = dout[i][j] <= delta_out;
                    match (small_in, small_out) {
                        (true, true) => 0,
                        (true, false) => 1,
                        (false, true) => 2,
                        (false, false) => 3,
                    }
                })
                .collect();
            let mut cumulative: [Vec<u32>; 4] = Default::default();
            let mut counts = [0u32; 4];
            for &c in &classes {
                counts[c as usize] += 1;
                for s in 0..4 {
                    cumulative[s].push(counts[s]);
                }
            }
            OracleProfile {
                neighbors: order,
                classes,
                cumulative,
            }
        })
        .collect();
    OracleResult {
        delta_in,
        delta_out,
        max_in,
        max_out,
        profiles,
    }
}

/// Random instance: n <= max_n, d_in <= 10, mixed metrics and deltas.
/// With `duplicates`, some records are exact copies of others and inputs are
/// drawn from a coarse lattice so distance ties are common.
pub fn random_instance(seed: u64, max_n: usize, duplicates: bool) -> OracleInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_n);
    let d_in = rng.gen_range(1..=10);
    let d_out = rng.gen_range(1..=2);
    let classes = rng.gen_range(1..=4);
    let lattice = duplicates || rng.gen_bool(0.3);
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        if duplicates && i > 0 && rng.gen_bool(0.2) {
            let src = rng.gen_range(0..i);
            inputs.push(inputs[src].clone());
            let out = if rng.gen_bool(0.5) {
                outputs[src].clone()
            } else {
                (0..d_out).map(|_| rng.gen_range(0..classes) as f64).collect()
            };
            outputs.push(out);
            continue;
        }
        inputs.push(
            (0..d_in)
                .map(|_| {
                    if lattice {
                        rng.gen_range(0..4) as f64
                    } else {
                        rng.gen_range(-10.0..10.0)
                    }
                })
                .collect(),
        );
        outputs.push((0..d_out).map(|_| rng.gen_range(0..classes) as f64).collect());
    }
    let metric = |rng: &mut ChaCha8Rng| match rng.gen_range(0..3) {
        0 => OracleMetric::Euclidean,
        1 => OracleMetric::Manhattan,
        _ => OracleMetric::ExactMatch,
    };
    let in_metric = metric(&mut rng);
    let out_metric = metric(&mut rng);
    let delta_in = if rng.gen_bool(0.7) {
        OracleDelta::Rel(rng.gen_range(0.0..=1.0))
    } else {
        OracleDelta::Abs(rng.gen_range(0.0..10.0))
    };
    let delta_out = match rng.gen_range(0..3) {
        0 => OracleDelta::Abs(0.0),
        1 => OracleDelta::Rel(rng.gen_range(0.0..=1.0)),
        _ => OracleDelta::Abs(rng.gen_range(0.0..2.0)),
    };
    OracleInstance {
        inputs,
        outputs,
        in_metric,
        out_metric,
        delta_in,
        delta_out,
        k_max: rng.gen_range(1..=n),
    }
}
