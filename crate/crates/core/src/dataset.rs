//! Datasets split into an input side and an output side.
//!
//! A [`Dataset`] is the universe over which ECS pairs are formed. Records are
//! identified by dense 0-based ids in storage order. Every constructor checks
//! the invariants (at least two records, non-empty sides, finite values), so a
//! `Dataset` held by the rest of the crate is always valid.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EcsError, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(EcsError::InvalidDataset(format!(
                "matrix buffer has {} values, expected {rows} x {cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(EcsError::InvalidDataset(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact would yield nothing for cols == 0, which validation rejects anyway
        self.data.chunks_exact(self.cols.max(1))
    }
}

/// Optional per-record payload kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordMeta {
    /// Raw grayscale image, row-major.
    Image {
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    },
    /// 1-based data row of the source file.
    SourceRow(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    outputs: Matrix,
    meta: Option<Vec<RecordMeta>>,
}

impl Dataset {
    pub fn new(inputs: Matrix, outputs: Matrix) -> Result<Self> {
        Self::with_meta(inputs, outputs, None)
    }

    pub fn with_meta(
        inputs: Matrix,
        outputs: Matrix,
        meta: Option<Vec<RecordMeta>>,
    ) -> Result<Self> {
        let n = inputs.rows();
        if outputs.rows() != n {
            return Err(EcsError::InvalidDataset(format!(
                "{n} input rows but {} output rows",
                outputs.rows()
            )));
        }
        if n < 2 {
            return Err(EcsError::TooFewRecords(n));
        }
        if inputs.cols() == 0 || outputs.cols() == 0 {
            return Err(EcsError::InvalidDataset(
                "input and output sides need at least one column each".into(),
            ));
        }
        if let Some(m) = &meta {
            if m.len() != n {
                return Err(EcsError::InvalidDataset(format!(
                    "{} meta entries for {n} records",
                    m.len()
                )));
            }
        }
        for (side, mat) in [("input", &inputs), ("output", &outputs)] {
            if let Some(pos) = mat.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(EcsError::InvalidDataset(format!(
                    "non-finite {side} value at record {}, column {}",
                    pos / mat.cols(),
                    pos % mat.cols()
                )));
            }
        }
        Ok(Dataset {
            inputs,
            outputs,
            meta,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    /// Always false: a valid dataset holds at least two records.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn d_in(&self) -> usize {
        self.inputs.cols()
    }

    pub fn d_out(&self) -> usize {
        self.outputs.cols()
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn outputs(&self) -> &Matrix {
        &self.outputs
    }

    pub fn input(&self, id: usize) -> &[f64] {
        self.inputs.row(id)
    }

    pub fn output(&self, id: usize) -> &[f64] {
        self.outputs.row(id)
    }

    pub fn ids(&self) -> std::ops::Range<usize> {
        0..self.len()
    }

    pub fn meta(&self, id: usize) -> Option<&RecordMeta> {
        self.meta.as_ref().map(|m| &m[id])
    }

    /// New dataset holding the given records in the given order (ids are reassigned).
    pub fn subset(&self, ids: &[usize]) -> Result<Dataset> {
        let pick = |m: &Matrix| -> Result<Matrix> {
            let mut data = Vec::with_capacity(ids.len() * m.cols());
            for &i in ids {
                if i >= self.len() {
                    return Err(EcsError::UnknownRecord { id: i, n: self.len() });
                }
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(ids.len(), m.cols(), data)
        };
        let meta = self
            .meta
            .as_ref()
            .map(|m| ids.iter().map(|&i| m[i].clone()).collect());
        Dataset::with_meta(pick(&self.inputs)?, pick(&self.outputs)?, meta)
    }

    /// SHA-256 over the shape and the bit patterns of every value, hex encoded.
    ///
    /// Meta payloads are not part of the fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"ecs-dataset-v1");
        for v in [self.len(), self.d_in(), self.d_out()] {
            h.update((v as u64).to_le_bytes());
        }
        for m in [&self.inputs, &self.outputs] {
            for v in m.as_slice() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Where a dataset came from; stored in run artifacts so it can be reloaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        inputs: ColumnSelector,
        outputs: ColumnSelector,
        has_header: bool,
    },
    MnistIdx {
        images: PathBuf,
        labels: PathBuf,
        /// Keep only the first `limit` records.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
    Generated {
        spec: PointCloudSpec,
    },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Csv {
                path,
                inputs,
                outputs,
                has_header,
            } => load_csv(path, inputs, outputs, *has_header),
            DatasetSource::MnistIdx {
                images,
                labels,
                limit,
            } => {
                let ds = load_mnist_idx(images, labels)?;
                match limit {
                    Some(l) if *l < ds.len() => ds.subset(&(0..*l).collect::<Vec<_>>()),
                    _ => Ok(ds),
                }
            }
            DatasetSource::Generated { spec } => generate_point_cloud(spec),
        }
    }
}

/// Selects CSV columns by header name or by 0-based index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSelector(pub Vec<String>);

impl ColumnSelector {
    /// Parses a comma-separated list such as `a,b` or `0,3`.
    pub fn parse(s: &str) -> Self {
        ColumnSelector(
            s.split(',')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect(),
        )
    }

    fn resolve(&self, header: Option<&[String]>, width: usize) -> Result<Vec<usize>> {
        if self.0.is_empty() {
            return Err(EcsError::BadSelection("empty column selector".into()));
        }
        self.0
            .iter()
            .map(|tok| {
                if let Some(pos) = header.and_then(|h| h.iter().position(|c| c == tok)) {
                    return Ok(pos);
                }
                match tok.parse::<usize>() {
                    Ok(i) if i < width => Ok(i),
                    _ => Err(EcsError::UnknownColumn(tok.clone())),
                }
            })
            .collect()
    }
}

fn csv_err(path: &Path, e: csv::Error) -> EcsError {
    EcsError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Loads a CSV file, taking the selected columns as input and output sides.
pub fn load_csv(
    path: impl AsRef<Path>,
    input_cols: &ColumnSelector,
    output_cols: &ColumnSelector,
    has_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| EcsError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .from_reader(file);

    let header: Option<Vec<String>> = if has_header {
        let h = rdr.headers().map_err(|e| csv_err(path, e))?;
        Some(h.iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };

    let mut records = rdr.records().peekable();
    let width = match (&header, records.peek()) {
        (Some(h), _) => h.len(),
        (None, Some(Ok(r))) => r.len(),
        _ => 0,
    };
    let in_idx = input_cols.resolve(header.as_deref(), width)?;
    let out_idx = output_cols.resolve(header.as_deref(), width)?;
    if let Some(dup) = in_idx.iter().find(|i| out_idx.contains(i)) {
        return Err(EcsError::BadSelection(format!(
            "column {dup} selected as both input and output"
        )));
    }
    let col_name = |i: usize| {
        header
            .as_ref()
            .map_or_else(|| i.to_string(), |h| h[i].clone())
    };

    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut rows = 0usize;
    for (r, rec) in records.enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = r + 1;
        for (idx, dst) in [(&in_idx, &mut inputs), (&out_idx, &mut outputs)] {
            for &c in idx.iter() {
                let cell = rec.get(c).unwrap_or("").trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => dst.push(v),
                    _ => {
                        return Err(EcsError::NonNumericCell {
                            row,
                            column: col_name(c),
                            value: cell.to_string(),
                        })
                    }
                }
            }
        }
        rows += 1;
    }
    if rows < 2 {
        return Err(EcsError::TooFewRecords(rows));
    }
    let meta = (1..=rows).map(RecordMeta::SourceRow).collect();
    Dataset::with_meta(
        Matrix::from_vec(rows, in_idx.len(), inputs)?,
        Matrix::from_vec(rows, out_idx.len(), outputs)?,
        Some(meta),
    )
}

/// Writes `in_0..,out_0..` columns, one row per record in id order.
///
/// Values use the shortest decimal form that parses back to the same `f64`.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| EcsError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    let header: Vec<String> = (0..ds.d_in())
        .map(|i| format!("in_{i}"))
        .chain((0..ds.d_out()).map(|i| format!("out_{i}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for id in ds.ids() {
        let row: Vec<String> = ds
            .input(id)
            .iter()
            .chain(ds.output(id))
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| EcsError::io(path, e))?;
    Ok(())
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| EcsError::io(path, e))?;
    Ok(buf)
}

fn be_u32(buf: &[u8], at: usize, path: &Path) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| EcsError::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            found: buf.len(),
        })
}

fn check_magic(buf: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(buf, 0, path)?;
    if found != expected {
        return Err(EcsError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Loads an MNIST-style IDX image/label pair (uncompressed, big-endian).
///
/// Pixels stay raw (0..=255); the label becomes the single output column.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_all(ip)?;
    let labels = read_all(lp)?;
    check_magic(&images, IDX_IMAGES_MAGIC, ip)?;
    check_magic(&labels, IDX_LABELS_MAGIC, lp)?;

    let n_img = be_u32(&images, 4, ip)? as usize;
    let height = be_u32(&images, 8, ip)? as usize;
    let width = be_u32(&images, 12, ip)? as usize;
    let n_lab = be_u32(&labels, 4, lp)? as usize;
    if n_img != n_lab {
        return Err(EcsError::CountMismatch {
            images: n_img,
            labels: n_lab,
        });
    }
    let px = width * height;
    let img_len = 16 + n_img * px;
    if images.len() < img_len {
        return Err(EcsError::Truncated {
            path: ip.to_path_buf(),
            expected: img_len,
            found: images.len(),
        });
    }
    if labels.len() < 8 + n_lab {
        return Err(EcsError::Truncated {
            path: lp.to_path_buf(),
            expected: 8 + n_lab,
            found: labels.len(),
        });
    }
    let pixels = &images[16..img_len];
    let inputs: Vec<f64> = pixels.iter().map(|&p| f64::from(p)).collect();
    let outputs: Vec<f64> = labels[8..8 + n_lab].iter().map(|&l| f64::from(l)).collect();
    let meta = pixels
        .chunks_exact(px.max(1))
        .map(|c| RecordMeta::Image {
            width,
            height,
            pixels: c.to_vec(),
        })
        .collect();
    Dataset::with_meta(
        Matrix::from_vec(n_img, px, inputs)?,
        Matrix::from_vec(n_lab, 1, outputs)?,
        Some(meta),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: Vec<f64>,
    pub stddev: f64,
    pub count: usize,
    pub label: i64,
}

/// Gaussian point-cloud recipe.
///
/// Sampling uses ChaCha8 seeded through `seed_from_u64`, uniform doubles from
/// the top 53 bits of each `u64`, and the Marsaglia polar transform with
/// `libm::log`, so the output is bit-identical on every platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudSpec {
    pub clusters: Vec<ClusterSpec>,
    pub seed: u64,
}

impl PointCloudSpec {
    /// The reference four-cluster cloud: 1000 points in 2-D, clusters of
    /// different size and spread, two of them sharing label 0.
    pub fn reference() -> Self {
        let c = |x: f64, y: f64, stddev: f64, count: usize, label: i64| ClusterSpec {
            center: vec![x, y],
            stddev,
            count,
            label,
        };
        PointCloudSpec {
            clusters: vec![
                c(0.0, 0.0, 1.0, 400, 0),
                c(5.0, 0.5, 0.8, 300, 1),
                c(0.5, 5.0, 0.6, 200, 2),
                c(5.0, 5.0, 0.45, 100, 0),
            ],
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: usize = self.clusters.iter().map(|c| c.count).sum();
        if total < 2 {
            return Err(EcsError::InvalidSpec(format!(
                "total count {total} is below 2"
            )));
        }
        let dim = self.clusters[0].center.len();
        if dim == 0 {
            return Err(EcsError::InvalidSpec("zero-dimensional centers".into()));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if c.center.len() != dim {
                return Err(EcsError::InvalidSpec(format!(
                    "cluster {i} has dimension {}, expected {dim}",
                    c.center.len()
                )));
            }
            if !(c.stddev > 0.0 && c.stddev.is_finite()) {
                return Err(EcsError::InvalidSpec(format!(
                    "cluster {i} stddev must be positive, got {}",
                    c.stddev
                )));
            }
            if c.count == 0 {
                return Err(EcsError::InvalidSpec(format!("cluster {i} is empty")));
            }
            if c.center.iter().any(|v| !v.is_finite()) {
                return Err(EcsError::InvalidSpec(format!(
                    "cluster {i} center is not finite"
                )));
            }
        }
        Ok(())
    }
}

struct StandardNormal {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl StandardNormal {
    fn new(seed: u64) -> Self {
        StandardNormal {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn uniform_pm1(&mut self) -> f64 {
        let bits = self.rng.gen::<u64>() >> 11;
        (bits as f64) * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = self.uniform_pm1();
            let v = self.uniform_pm1();
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * libm::log(s) / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

/// Samples the clusters in order; records of cluster 0 get the lowest ids.
pub fn generate_point_cloud(spec: &PointCloudSpec) -> Result<Dataset> {
    spec.validate()?;
    let dim = spec.clusters[0].center.len();
    let n: usize = spec.clusters.iter().map(|c| c.count).sum();
    let mut normal = StandardNormal::new(spec.seed);
    let mut inputs = Vec::with_capacity(n * dim);
    let mut outputs = Vec::with_capacity(n);
    for c in &spec.clusters {
        for _ in 0..c.count {
            for &mu in &c.center {
                inputs.push(mu + c.stddev * normal.sample());
            }
            outputs.push(c.label as f64);
        }
    }
    Dataset::new(
        Matrix::from_vec(n, dim, inputs)?,
        Matrix::from_vec(n, 1, outputs)?,
    )
}

/// Writes raw IDX files; used to build fixtures.
pub fn write_idx_pair(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    width: usize,
    height: usize,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, labels.len() as u32, height as u32, width as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    File::create(ip)
        .and_then(|mut f| f.write_all(&img))
        .map_err(|e| EcsError::io(ip, e))?;
    File::create(lp)
        .and_then(|mut f| f.write_all(&lab))
        .map_err(|e| EcsError::io(lp, e))?;
    Ok(())
}
