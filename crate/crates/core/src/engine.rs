//! Pair classification and per-anchor ECS profiles.
//!
//! For every anchor record all other records are ranked by ascending input
//! distance (ties broken by ascending id). The first `k_max` ranks are kept,
//! each classified into one of the four ECS sets, and the cumulative count per
//! set over rank is the anchor's profile.
//!
//! The full n x n distance matrix is never held. Anchors are processed in
//! small blocks; each block's distance rows are reduced to their `k_max`
//! nearest entries and dropped. The neighbor ordering does not depend on the
//! deltas, so a single distance pass also yields the exact maximum input
//! distance, and classification of the stored windows happens only after the
//! deltas are resolved.

use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetSource};
use crate::error::{EcsError, Result};
use crate::kernel::{RowKernel, ANCHOR_BLOCK};
use crate::metrics::{max_pairwise_distance, DeltaSpec, Metric, MetricKind, ResolvedDeltas};

/// One of the four equivalent classes sets.
///
/// First letter: input distance small (E) or large (U); second letter: output distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum PairClass {
    EE = 0,
    EU = 1,
    UE = 2,
    UU = 3,
}

impl PairClass {
    pub const ALL: [PairClass; 4] = [PairClass::EE, PairClass::EU, PairClass::UE, PairClass::UU];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Self> {
        PairClass::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PairClass::EE => "EE",
            PairClass::EU => "EU",
            PairClass::UE => "UE",
            PairClass::UU => "UU",
        }
    }

    /// Input distance within delta_in.
    pub fn input_small(self) -> bool {
        matches!(self, PairClass::EE | PairClass::EU)
    }
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PairClass {
    type Err = EcsError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let t = t.strip_prefix("ECS_").unwrap_or(&t);
        PairClass::ALL
            .into_iter()
            .find(|c| c.name() == t)
            .ok_or_else(|| EcsError::UnknownSet(s.to_string()))
    }
}

/// Small is `<=` delta, large is `>` delta, on both sides.
#[inline]
pub fn classify_pair(d_in: f64, d_out: f64, resolved: &ResolvedDeltas) -> PairClass {
    match (d_in <= resolved.delta_in_abs, d_out <= resolved.delta_out_abs) {
        (true, true) => PairClass::EE,
        (true, false) => PairClass::EU,
        (false, true) => PairClass::UE,
        (false, false) => PairClass::UU,
    }
}

pub const DEFAULT_K_MAX: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcsConfig {
    pub in_metric: MetricKind,
    pub out_metric: MetricKind,
    pub delta_in: DeltaSpec,
    pub delta_out: DeltaSpec,
    /// Neighbor window; clamped to n - 1 when a run is computed.
    pub k_max: usize,
}

impl Default for EcsConfig {
    fn default() -> Self {
        EcsConfig {
            in_metric: MetricKind::Euclidean,
            out_metric: MetricKind::ExactMatch,
            delta_in: DeltaSpec::Relative(0.3),
            delta_out: DeltaSpec::Absolute(0.0),
            k_max: DEFAULT_K_MAX,
        }
    }
}

impl EcsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(EcsError::InvalidConfig("k_max must be at least 1".into()));
        }
        self.delta_in.validate()?;
        self.delta_out.validate()
    }
}

/// Borrowed view of one anchor's profile inside an [`EcsRun`].
#[derive(Debug, Clone, Copy)]
pub struct EcsProfile<'a> {
    pub anchor_id: usize,
    pub neighbor_ids: &'a [u32],
    pub class_at_rank: &'a [PairClass],
}

impl<'a> EcsProfile<'a> {
    pub fn len(&self) -> usize {
        self.class_at_rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_at_rank.is_empty()
    }

    /// `F_set(k)` for `k` in `0..=len` (1-based ranks; `F(0) = 0`).
    pub fn value(&self, set: PairClass, k: usize) -> u32 {
        self.class_at_rank[..k].iter().filter(|&&c| c == set).count() as u32
    }

    /// All four `F(k)` at once, indexed by [`PairClass::index`].
    pub fn values_at(&self, k: usize) -> [u32; 4] {
        let mut out = [0u32; 4];
        for c in &self.class_at_rank[..k] {
            out[c.index()] += 1;
        }
        out
    }

    /// `[F_set(1), ..., F_set(len)]`.
    pub fn cumulative(&self, set: PairClass) -> Vec<u32> {
        self.class_at_rank
            .iter()
            .scan(0u32, |acc, &c| {
                *acc += u32::from(c == set);
                Some(*acc)
            })
            .collect()
    }

    /// Number of leading ranks whose input distance is within delta_in.
    ///
    /// Ranks are sorted by input distance, so small-input ranks form a prefix.
    pub fn input_close_prefix(&self) -> usize {
        self.class_at_rank
            .iter()
            .position(|c| !c.input_small())
            .unwrap_or(self.class_at_rank.len())
    }

    /// First 1-based rank classified as `set`, if any.
    pub fn onset(&self, set: PairClass) -> Option<usize> {
        self.class_at_rank.iter().position(|&c| c == set).map(|p| p + 1)
    }
}

/// Provenance stored alongside a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub source: Option<DatasetSource>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            source: None,
        }
    }
}

/// All profiles of one dataset under one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EcsRun {
    pub config: EcsConfig,
    pub resolved: ResolvedDeltas,
    pub dataset_fingerprint: String,
    pub provenance: Provenance,
    n: usize,
    k: usize,
    neighbors: Vec<u32>,
    classes: Vec<PairClass>,
}

impl EcsRun {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        config: EcsConfig,
        resolved: ResolvedDeltas,
        dataset_fingerprint: String,
        provenance: Provenance,
        n: usize,
        k: usize,
        neighbors: Vec<u32>,
        classes: Vec<PairClass>,
    ) -> Result<Self> {
        if neighbors.len() != n * k || classes.len() != n * k {
            return Err(EcsError::BadArtifact(format!(
                "expected {} entries per array, got {} neighbors / {} classes",
                n * k,
                neighbors.len(),
                classes.len()
            )));
        }
        if k == 0 || k >= n.max(1) {
            return Err(EcsError::BadArtifact(format!("window {k} invalid for n = {n}")));
        }
        for (i, row) in neighbors.chunks_exact(k).enumerate() {
            if row.iter().any(|&j| j as usize >= n || j as usize == i) {
                return Err(EcsError::BadArtifact(format!(
                    "profile {i} has an out-of-range or self neighbor"
                )));
            }
        }
        Ok(EcsRun {
            config,
            resolved,
            dataset_fingerprint,
            provenance,
            n,
            k,
            neighbors,
            classes,
        })
    }

    /// Number of records (and profiles).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Effective window length of every profile.
    pub fn k_max(&self) -> usize {
        self.k
    }

    pub fn profile(&self, id: usize) -> EcsProfile<'_> {
        let span = id * self.k..(id + 1) * self.k;
        EcsProfile {
            anchor_id: id,
            neighbor_ids: &self.neighbors[span.clone()],
            class_at_rank: &self.classes[span],
        }
    }

    pub fn profiles(&self) -> impl ExactSizeIterator<Item = EcsProfile<'_>> + '_ {
        (0..self.n).map(move |i| self.profile(i))
    }

    pub fn neighbor_table(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn class_table(&self) -> &[PairClass] {
        &self.classes
    }

    pub fn check_window(&self, window: usize) -> Result<()> {
        if window == 0 {
            return Err(EcsError::InvalidRule("window must be at least 1".into()));
        }
        if window > self.k {
            return Err(EcsError::WindowTooLarge {
                window,
                k_max: self.k,
            });
        }
        Ok(())
    }

    /// Class of the unordered pair `{i, j}`.
    ///
    /// Looked up in either endpoint's stored window, recomputed from the raw
    /// distances otherwise.
    pub fn pair_membership(&self, ds: &Dataset, i: usize, j: usize) -> Result<PairClass> {
        for id in [i, j] {
            if id >= self.n {
                return Err(EcsError::UnknownRecord { id, n: self.n });
            }
        }
        if i == j {
            return Err(EcsError::SelfComparison(i));
        }
        for (a, b) in [(i, j), (j, i)] {
            let p = self.profile(a);
            if let Some(r) = p.neighbor_ids.iter().position(|&x| x as usize == b) {
                return Ok(p.class_at_rank[r]);
            }
        }
        let d_in = self.config.in_metric.eval(ds.input(i), ds.input(j));
        let d_out = self.config.out_metric.eval(ds.output(i), ds.output(j));
        Ok(classify_pair(d_in, d_out, &self.resolved))
    }
}

/// Computes a run on the global rayon pool.
pub fn compute_run(ds: &Dataset, cfg: &EcsConfig) -> Result<EcsRun> {
    compute_run_with_workers(ds, cfg, None)
}

/// Computes a run with an explicit worker count. Results do not depend on it.
pub fn compute_run_with_workers(
    ds: &Dataset,
    cfg: &EcsConfig,
    workers: Option<usize>,
) -> Result<EcsRun> {
    match workers {
        None => compute_inner(ds, cfg),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| EcsError::ThreadPool(e.to_string()))?;
            pool.install(|| compute_inner(ds, cfg))
        }
    }
}

/// Ordering key: non-negative finite f64 bit patterns sort like the values.
type RankKey = (u64, u32);

fn select_window(row: &[f64], anchor: usize, k: usize, heap: &mut BinaryHeap<RankKey>) -> (Vec<RankKey>, f64) {
    heap.clear();
    let mut row_max = 0.0f64;
    for (j, &d) in row.iter().enumerate() {
        if j == anchor {
            continue;
        }
        row_max = row_max.max(d);
        let key = (d.to_bits(), j as u32);
        if heap.len() < k {
            heap.push(key);
        } else if let Some(mut top) = heap.peek_mut() {
            if key < *top {
                *top = key;
            }
        }
    }
    let mut window: Vec<RankKey> = heap.drain().collect();
    window.sort_unstable();
    (window, row_max)
}

fn compute_inner(ds: &Dataset, cfg: &EcsConfig) -> Result<EcsRun> {
    cfg.validate()?;
    let n = ds.len();
    if n < 2 {
        return Err(EcsError::TooFewRecords(n));
    }
    if n > u32::MAX as usize {
        return Err(EcsError::InvalidDataset("more than 2^32 records".into()));
    }
    let k = cfg.k_max.min(n - 1);
    let kernel = RowKernel::new(ds.inputs(), cfg.in_metric);

    let mut neighbors = vec![0u32; n * k];
    let mut in_dists = vec![0.0f64; n * k];
    let block_span = ANCHOR_BLOCK * k;

    let max_in = neighbors
        .par_chunks_mut(block_span)
        .zip(in_dists.par_chunks_mut(block_span))
        .enumerate()
        .map_init(
            || (Vec::new(), BinaryHeap::with_capacity(k + 1)),
            |(rows, heap), (blk, (nb, dd))| {
                let start = blk * ANCHOR_BLOCK;
                let count = nb.len() / k;
                rows.resize(count * n, 0.0);
                kernel.fill_rows(start..start + count, n, rows);
                let mut block_max = 0.0f64;
                for b in 0..count {
                    let (window, row_max) = select_window(&rows[b * n..(b + 1) * n], start + b, k, heap);
                    block_max = block_max.max(row_max);
                    for (r, (bits, j)) in window.into_iter().enumerate() {
                        nb[b * k + r] = j;
                        dd[b * k + r] = f64::from_bits(bits);
                    }
                }
                block_max
            },
        )
        .reduce(|| 0.0, f64::max);

    let max_out = max_pairwise_distance(ds.outputs(), cfg.out_metric)?;
    let resolved = ResolvedDeltas::new(cfg.delta_in, cfg.delta_out, max_in, max_out);

    let mut classes = vec![PairClass::EE; n * k];
    classes
        .par_chunks_mut(k)
        .zip(neighbors.par_chunks(k).zip(in_dists.par_chunks(k)))
        .enumerate()
        .for_each(|(i, (cls, (nb, dd)))| {
            let out_i = ds.output(i);
            for r in 0..k {
                let d_out = cfg.out_metric.eval(out_i, ds.output(nb[r] as usize));
                cls[r] = classify_pair(dd[r], d_out, &resolved);
            }
        });

    EcsRun::from_parts(
        *cfg,
        resolved,
        ds.fingerprint(),
        Provenance::default(),
        n,
        k,
        neighbors,
        classes,
    )
}
