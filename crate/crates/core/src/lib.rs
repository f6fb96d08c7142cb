//! Data-quality auditing with equivalent classes sets (ECS).
//!
//! Every pair of records is classified by whether its input distance and its
//! output distance are small or large relative to two thresholds. Per record,
//! neighbors ranked by input distance give four cumulative count functions
//! (one per set) that drive the histograms and the outlier, isolation and
//! local-group detectors.

pub mod dataset;
pub mod detectors;
pub mod engine;
pub mod error;
pub mod histogram;
mod kernel;
pub mod metrics;
pub mod requirements;
pub mod run_io;

pub use dataset::{
    generate_point_cloud, load_csv, load_mnist_idx, save_csv, ClusterSpec, ColumnSelector,
    Dataset, DatasetSource, Matrix, PointCloudSpec, RecordMeta,
};
pub use detectors::{
    detect_groups, detect_isolated, detect_outliers, fulfillment_histogram, Bucket, BucketCount,
    DetectionReport, Finding, GroupRule, IsolationRule, OutlierRule, Rule,
};
pub use engine::{
    classify_pair, compute_run, compute_run_with_workers, EcsConfig, EcsProfile, EcsRun,
    PairClass, Provenance,
};
pub use error::{EcsError, Result};
pub use histogram::{build_grid, export_grid, query_region, GridFormat, HistogramGrid, RegionMode, RegionQuery};
pub use metrics::{
    max_pairwise_distance, resolve_deltas, DeltaSpec, Metric, MetricKind, ResolvedDeltas,
};
pub use requirements::{check_requirements, Requirement, RequirementSet, Verdict};
