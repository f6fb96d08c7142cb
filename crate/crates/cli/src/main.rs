//! `ecs`: batch front end for ECS runs.
//!
//! Exit codes: 0 success, 1 a requirement was violated, 2 any error.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ecs_core::histogram::DEFAULT_GAMMA;
use ecs_core::requirements::parse_rule;
use ecs_core::run_io::{load_run, save_run};
use ecs_core::{
    build_grid, check_requirements, compute_run_with_workers, export_grid, ColumnSelector,
    DatasetSource, DeltaSpec, EcsConfig, EcsRun, GridFormat, MetricKind, PairClass,
    PointCloudSpec, RequirementSet, Rule,
};

use manifest::{DetectOutput, GridRequest, RunManifest, RUN_FILE};

#[derive(Parser)]
#[command(name = "ecs", version, about = "Equivalent-classes-sets data quality toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute and persist a run.
    Compute(ComputeArgs),
    /// Run detectors on a persisted run and optionally check requirements.
    Detect(DetectArgs),
    /// Export histogram grids as PNG or CSV.
    Render(RenderArgs),
    /// Execute a whole TOML manifest: compute, detect, render.
    Run {
        manifest: PathBuf,
    },
    /// Serve a run over HTTP for the exploration UI.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ComputeArgs {
    /// CSV dataset.
    #[arg(long, conflicts_with_all = ["mnist_images", "generate"])]
    csv: Option<PathBuf>,
    /// Input columns (names or 0-based indices, comma separated).
    #[arg(long, requires = "csv")]
    inputs: Option<String>,
    /// Output columns.
    #[arg(long, requires = "csv")]
    outputs: Option<String>,
    /// The CSV file has no header row.
    #[arg(long, requires = "csv")]
    no_header: bool,
    #[arg(long, requires = "mnist_labels", conflicts_with = "generate")]
    mnist_images: Option<PathBuf>,
    #[arg(long, requires = "mnist_images")]
    mnist_labels: Option<PathBuf>,
    /// Keep only the first N records.
    #[arg(long)]
    limit: Option<usize>,
    /// `reference` or a JSON point-cloud spec file.
    #[arg(long)]
    generate: Option<String>,
    /// `rel:x` (fraction of the maximum pairwise distance) or `abs:x`.
    #[arg(long, default_value = "rel:0.3")]
    delta_in: DeltaSpec,
    #[arg(long, default_value = "abs:0")]
    delta_out: DeltaSpec,
    #[arg(long, default_value = "euclidean")]
    in_metric: MetricKind,
    #[arg(long, default_value = "exact_match")]
    out_metric: MetricKind,
    /// Neighbor window k_max.
    #[arg(long, default_value_t = ecs_core::engine::DEFAULT_K_MAX)]
    k: usize,
    /// Worker cap; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Run directory or `.ecsrun` file.
    #[arg(long)]
    run: PathBuf,
    /// Outlier rule, e.g. `K=200,t=181`. Repeatable.
    #[arg(long)]
    outliers: Vec<String>,
    /// Isolation rule, e.g. `m=200`. Repeatable.
    #[arg(long)]
    isolated: Vec<String>,
    /// Group rule, e.g. `g=100,tol=5`. Repeatable.
    #[arg(long)]
    groups: Vec<String>,
    /// Requirements file; exit 1 when any bound is violated.
    #[arg(long)]
    require: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    run: PathBuf,
    /// EE, EU, UE, UU or all.
    #[arg(long)]
    set: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long)]
    png: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    run: PathBuf,
    /// `id,x,y` CSV with 2-D coordinates for the scatter view.
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Directory of UI assets served at `/`.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: std::net::SocketAddr,
}

/// Outcome of a command that did not error.
enum Outcome {
    Ok,
    RequirementsFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Compute(a) => compute(a),
        Cmd::Detect(a) => detect(a),
        Cmd::Render(a) => render(a),
        Cmd::Run { manifest } => run_manifest(&manifest),
        Cmd::Serve(a) => serve(a),
    };
    match res {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::RequirementsFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn absolute(p: &Path) -> anyhow::Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

fn source_from_args(a: &ComputeArgs) -> anyhow::Result<DatasetSource> {
    if let Some(csv) = &a.csv {
        let (Some(i), Some(o)) = (&a.inputs, &a.outputs) else {
            bail!("--csv needs --inputs and --outputs");
        };
        return Ok(DatasetSource::Csv {
            path: absolute(csv)?,
            inputs: ColumnSelector::parse(i),
            outputs: ColumnSelector::parse(o),
            has_header: !a.no_header,
        });
    }
    if let (Some(images), Some(labels)) = (&a.mnist_images, &a.mnist_labels) {
        return Ok(DatasetSource::MnistIdx {
            images: absolute(images)?,
            labels: absolute(labels)?,
            limit: a.limit,
        });
    }
    match a.generate.as_deref() {
        Some("reference") => Ok(DatasetSource::Generated {
            spec: PointCloudSpec::reference(),
        }),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            let spec = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
            Ok(DatasetSource::Generated { spec })
        }
        None => bail!("no dataset given: use --csv, --mnist-images/--mnist-labels or --generate"),
    }
}

fn compute(a: ComputeArgs) -> anyhow::Result<Outcome> {
    let source = source_from_args(&a)?;
    let config = EcsConfig {
        in_metric: a.in_metric,
        out_metric: a.out_metric,
        delta_in: a.delta_in,
        delta_out: a.delta_out,
        k_max: a.k,
    };
    compute_to_dir(&source, &config, a.threads, &a.out)?;
    Ok(Outcome::Ok)
}

fn compute_to_dir(
    source: &DatasetSource,
    config: &EcsConfig,
    threads: Option<usize>,
    out: &Path,
) -> anyhow::Result<EcsRun> {
    config.validate()?;
    let ds = source.load()?;
    if config.k_max >= ds.len() {
        eprintln!(
            "note: k_max {} clamped to {} (n - 1)",
            config.k_max,
            ds.len() - 1
        );
    }
    let mut run = compute_run_with_workers(&ds, config, threads)?;
    run.provenance.source = Some(source.clone());
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(RUN_FILE);
    save_run(&run, &path)?;
    eprintln!(
        "wrote {} (n = {}, k_max = {}, delta_in = {}, delta_out = {})",
        path.display(),
        run.n(),
        run.k_max(),
        run.resolved.delta_in_abs,
        run.resolved.delta_out_abs
    );
    Ok(run)
}

fn open_run(p: &Path) -> anyhow::Result<EcsRun> {
    let file = if p.is_dir() { p.join(RUN_FILE) } else { p.to_path_buf() };
    Ok(load_run(&file)?)
}

fn detect(a: DetectArgs) -> anyhow::Result<Outcome> {
    let run = open_run(&a.run)?;
    let mut rules = Vec::new();
    for (detector, specs) in [("outliers", &a.outliers), ("isolated", &a.isolated), ("groups", &a.groups)] {
        for s in specs {
            rules.push(parse_rule(detector, s).with_context(|| format!("--{detector} {s}"))?);
        }
    }
    let requirements = match &a.require {
        Some(p) => Some(RequirementSet::load(p)?),
        None => None,
    };
    let outcome = detect_and_report(&run, rules, requirements.as_ref(), a.out.as_deref())?;
    Ok(outcome)
}

fn detect_and_report(
    run: &EcsRun,
    mut rules: Vec<Rule>,
    requirements: Option<&RequirementSet>,
    out: Option<&Path>,
) -> anyhow::Result<Outcome> {
    if let Some(req) = requirements {
        for r in req.explicit_rules() {
            if !rules.contains(&r) {
                rules.push(r);
            }
        }
    }
    if rules.is_empty() {
        bail!("no detector requested (use --outliers, --isolated, --groups or --require)");
    }
    let reports = rules
        .iter()
        .map(|r| r.run(run))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        eprintln!("{}: {} findings", describe(&r.rule), r.count());
    }
    let verdict = requirements
        .map(|req| check_requirements(&reports, req))
        .transpose()?;
    let doc = DetectOutput::new(run, reports, verdict);
    let json = serde_json::to_string_pretty(&doc)?;
    match out {
        Some(p) => std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    match &doc.verdict {
        Some(v) => {
            for d in &v.diagnostics {
                eprintln!("{d}");
            }
            Ok(if v.passed { Outcome::Ok } else { Outcome::RequirementsFailed })
        }
        None => Ok(Outcome::Ok),
    }
}

fn describe(rule: &Rule) -> String {
    match rule {
        Rule::Outliers(r) => format!("outliers K={},t={}", r.window, r.min_eu),
        Rule::Isolated(r) => format!("isolated m={}", r.window),
        Rule::Groups(r) => format!("groups g={},tol={}", r.group_size, r.tolerance),
    }
}

const SET_NAMES: &str = "EE, EU, UE, UU, all";

fn parse_sets(s: &str) -> anyhow::Result<Vec<PairClass>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(PairClass::ALL.to_vec());
    }
    match s.parse::<PairClass>() {
        Ok(c) => Ok(vec![c]),
        Err(_) => bail!("invalid set {s:?}; valid names: {SET_NAMES}"),
    }
}

/// `eu.png` with suffix `_EE` becomes `eu_EE.png`.
fn suffixed(path: &Path, set: PairClass) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{}.{}", set.name(), ext.to_string_lossy()),
        None => format!("{stem}_{}", set.name()),
    };
    path.with_file_name(name)
}

fn render_grids(run: &EcsRun, g: &GridRequest) -> anyhow::Result<()> {
    let sets = parse_sets(&g.set)?;
    if g.png.is_none() && g.csv.is_none() {
        bail!("nothing to write: give --png and/or --csv");
    }
    let k = g.k.unwrap_or(run.k_max());
    for &set in &sets {
        let grid = build_grid(run, set, k, g.gamma)?;
        for (format, target) in [(GridFormat::Png, &g.png), (GridFormat::Csv, &g.csv)] {
            let Some(target) = target else { continue };
            let path = if sets.len() > 1 { suffixed(target, set) } else { target.clone() };
            export_grid(&grid, format, &path)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn render(a: RenderArgs) -> anyhow::Result<Outcome> {
    // reject a bad set name before touching the run
    parse_sets(&a.set)?;
    let run = open_run(&a.run)?;
    render_grids(
        &run,
        &GridRequest {
            set: a.set,
            k: a.k,
            gamma: a.gamma,
            png: a.png,
            csv: a.csv,
        },
    )?;
    Ok(Outcome::Ok)
}

fn run_manifest(path: &Path) -> anyhow::Result<Outcome> {
    let m = RunManifest::load(path)?;
    let run = compute_to_dir(&m.source, &m.config, m.threads, &m.out)?;
    for g in &m.render {
        render_grids(&run, g)?;
    }
    let requirements = match &m.require {
        Some(p) => Some(RequirementSet::load(p)?),
        None => None,
    };
    if m.detect.is_empty() && requirements.is_none() {
        return Ok(Outcome::Ok);
    }
    let report = m.out.join(manifest::REPORT_FILE);
    detect_and_report(&run, m.detect.clone(), requirements.as_ref(), Some(&report))
}

fn serve(a: ServeArgs) -> anyhow::Result<Outcome> {
    let run = open_run(&a.run)?;
    let embedding = match &a.embedding {
        Some(p) => Some(ecs_service::load_embedding(p, run.n())?),
        None => None,
    };
    let session = ecs_service::Session::from_run(run, embedding)?;
    let app = ecs_service::router(Some(session), a.static_dir);
    eprintln!("listening on http://{}", a.addr);
    ecs_service::serve_blocking(a.addr, app)?;
    Ok(Outcome::Ok)
}
