//! TOML run manifests and the JSON document written by `detect`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use ecs_core::histogram::DEFAULT_GAMMA;
use ecs_core::{DatasetSource, DetectionReport, EcsConfig, EcsRun, ResolvedDeltas, Rule, Verdict};

pub const RUN_FILE: &str = "run.ecsrun";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything `ecs run` needs. Relative paths resolve against the manifest's
/// directory.
///
/// ```toml
/// out = "run"
/// require = "req.txt"
///
/// [source]
/// format = "csv"
/// path = "cloud.csv"
/// inputs = ["a", "b"]
/// outputs = ["y"]
/// has_header = true
///
/// [config]
/// delta_in = { mode = "relative", value = 0.3 }
/// k_max = 200
///
/// [[detect]]
/// detector = "outliers"
/// window = 200
/// min_eu = 181
///
/// [[render]]
/// set = "EU"
/// k = 200
/// png = "eu.png"
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub source: DatasetSource,
    #[serde(default)]
    pub config: EcsConfig,
    pub out: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub detect: Vec<Rule>,
    #[serde(default)]
    pub render: Vec<GridRequest>,
    #[serde(default)]
    pub require: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRequest {
    pub set: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub png: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m: RunManifest = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = std::path::absolute(path)?
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut m.source {
            DatasetSource::Csv { path, .. } => fix(path),
            DatasetSource::MnistIdx { images, labels, .. } => {
                fix(images);
                fix(labels);
            }
            DatasetSource::Generated { .. } => {}
        }
        fix(&mut m.out);
        if let Some(r) = &mut m.require {
            fix(r);
        }
        for g in &mut m.render {
            g.png.iter_mut().chain(g.csv.iter_mut()).for_each(fix);
        }
        for r in &m.detect {
            r.validate()?;
        }
        Ok(m)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunEcho {
    pub dataset_fingerprint: String,
    pub n: usize,
    pub k_max: usize,
    pub tool_version: String,
    pub config: EcsConfig,
    pub resolved: ResolvedDeltas,
}

/// Top-level JSON written by `ecs detect`; see `docs/report.schema.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct DetectOutput {
    pub schema_version: u32,
    pub run: RunEcho,
    pub reports: Vec<DetectionReport>,
    pub verdict: Option<Verdict>,
}

impl DetectOutput {
    pub fn new(run: &EcsRun, reports: Vec<DetectionReport>, verdict: Option<Verdict>) -> Self {
        DetectOutput {
            schema_version: REPORT_SCHEMA_VERSION,
            run: RunEcho {
                dataset_fingerprint: run.dataset_fingerprint.clone(),
                n: run.n(),
                k_max: run.k_max(),
                tool_version: run.provenance.tool_version.clone(),
                config: run.config,
                resolved: run.resolved,
            },
            reports,
            verdict,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_paths_resolve_against_its_directory() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(
            &p,
            r#"
out = "run"
[source]
format = "csv"
path = "cloud.csv"
inputs = ["a", "b"]
outputs = ["y"]
has_header = true
[config]
k_max = 20
delta_in = { mode = "relative", value = 0.3 }
[[detect]]
detector = "outliers"
window = 10
min_eu = 5
[[render]]
set = "EU"
png = "eu.png"
"#,
        )
        .unwrap();
        let m = RunManifest::load(&p).unwrap();
        assert_eq!(m.out, dir.path().join("run"));
        assert_eq!(m.config.k_max, 20);
        assert_eq!(m.render[0].gamma, DEFAULT_GAMMA);
        assert_eq!(m.render[0].png.as_deref(), Some(dir.path().join("eu.png").as_path()));
        match &m.source {
            DatasetSource::Csv { path, .. } => assert_eq!(path, &dir.path().join("cloud.csv")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_rules_are_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(
            &p,
            "out = \"r\"\n[source]\nformat = \"generated\"\n[source.spec]\nseed = 1\nclusters = []\n[[detect]]\ndetector = \"outliers\"\nwindow = 10\nmin_eu = 11\n",
        )
        .unwrap();
        assert!(RunManifest::load(&p).is_err());
    }
}
