//! ECS histograms: all profile functions of one set superimposed on a grid.
//!
//! Cell `(k, v)` counts the anchors whose `F_set(k) = v`, for `k` in `1..=K`
//! and `v` in `0..=K`. Counts are exact; gamma correction only shapes the
//! derived intensity.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{EcsRun, PairClass};
use crate::error::{EcsError, Result};

pub const DEFAULT_GAMMA: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub set: PairClass,
    /// Window `K`: the grid spans `k = 1..=K` and `v = 0..=K`.
    pub k: usize,
    pub gamma: f64,
    /// Column-major: `counts[(k - 1) * (K + 1) + v]`.
    pub counts: Vec<u64>,
    /// Same layout as `counts`, `(count / max)^gamma`.
    pub intensity: Vec<f64>,
}

impl HistogramGrid {
    #[inline]
    fn index(&self, k: usize, v: usize) -> usize {
        (k - 1) * (self.k + 1) + v
    }

    pub fn count(&self, k: usize, v: usize) -> u64 {
        self.counts[self.index(k, v)]
    }

    pub fn intensity_at(&self, k: usize, v: usize) -> f64 {
        self.intensity[self.index(k, v)]
    }

    pub fn column(&self, k: usize) -> &[u64] {
        let start = self.index(k, 0);
        &self.counts[start..start + self.k + 1]
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Re-derives intensities for a different gamma.
    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        self.gamma = gamma;
        self.intensity = intensities(&self.counts, gamma);
        Ok(self)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(EcsError::InvalidGamma(gamma))
    }
}

fn intensities(counts: &[u64], gamma: f64) -> Vec<f64> {
    let max = counts.iter().copied().max().unwrap_or(0);
    counts
        .iter()
        .map(|&c| {
            if c == 0 || max == 0 {
                0.0
            } else if c == max {
                1.0
            } else {
                // libm keeps the rendering identical across platforms
                libm::pow(c as f64 / max as f64, gamma)
            }
        })
        .collect()
}

pub fn build_grid(run: &EcsRun, set: PairClass, k: usize, gamma: f64) -> Result<HistogramGrid> {
    run.check_window(k)?;
    check_gamma(gamma)?;
    let rows = k + 1;
    let mut counts = vec![0u64; k * rows];
    for p in run.profiles() {
        let mut v = 0usize;
        for (r, &c) in p.class_at_rank[..k].iter().enumerate() {
            v += usize::from(c == set);
            counts[r * rows + v] += 1;
        }
    }
    let intensity = intensities(&counts, gamma);
    Ok(HistogramGrid {
        set,
        k,
        gamma,
        counts,
        intensity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// The function takes a value inside the v-interval for some k in the k-interval.
    PassesThrough,
    /// The function's value at `k_hi` lies inside the v-interval.
    EndsIn,
}

/// Rectangle on an ECS histogram, inclusive on all edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionQuery {
    pub set: PairClass,
    pub k_lo: usize,
    pub k_hi: usize,
    pub v_lo: u32,
    pub v_hi: u32,
    pub mode: RegionMode,
}

impl RegionQuery {
    pub fn validate(&self, grid_k: usize) -> Result<()> {
        if self.k_lo == 0 || self.k_lo > self.k_hi || self.k_hi > grid_k {
            return Err(EcsError::InvalidRegion(format!(
                "k interval {}..={} outside 1..={grid_k}",
                self.k_lo, self.k_hi
            )));
        }
        if self.v_lo > self.v_hi || self.v_hi as usize > grid_k {
            return Err(EcsError::InvalidRegion(format!(
                "v interval {}..={} outside 0..={grid_k}",
                self.v_lo, self.v_hi
            )));
        }
        Ok(())
    }
}

/// Ids of the functions selected by `q`, ascending.
pub fn query_region(run: &EcsRun, grid: &HistogramGrid, q: &RegionQuery) -> Result<Vec<usize>> {
    if q.set != grid.set {
        return Err(EcsError::InvalidRegion(format!(
            "query targets {} but the grid shows {}",
            q.set, grid.set
        )));
    }
    q.validate(grid.k)?;
    let inside = |v: u32| (q.v_lo..=q.v_hi).contains(&v);
    Ok(run
        .profiles()
        .filter(|p| {
            let traj = p.cumulative(q.set);
            match q.mode {
                RegionMode::EndsIn => inside(traj[q.k_hi - 1]),
                RegionMode::PassesThrough => traj[q.k_lo - 1..q.k_hi].iter().any(|&v| inside(v)),
            }
        })
        .map(|p| p.anchor_id)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridFormat {
    Png,
    Csv,
}

impl FromStr for GridFormat {
    type Err = EcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "png" => Ok(GridFormat::Png),
            "csv" => Ok(GridFormat::Csv),
            other => Err(EcsError::InvalidConfig(format!("unknown grid format {other:?}"))),
        }
    }
}

/// 8-bit grayscale pixels, `K` wide and `K + 1` tall, origin bottom-left.
pub fn grid_pixels(grid: &HistogramGrid) -> Vec<u8> {
    let (w, h) = (grid.k, grid.k + 1);
    let mut px = vec![0u8; w * h];
    for k in 1..=w {
        for v in 0..h {
            let row = h - 1 - v;
            px[row * w + (k - 1)] = (255.0 * grid.intensity_at(k, v)).round() as u8;
        }
    }
    px
}

pub fn export_grid(grid: &HistogramGrid, format: GridFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| EcsError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e: std::io::Error| EcsError::io(path, e);
    match format {
        GridFormat::Png => {
            let mut enc = png::Encoder::new(&mut out, grid.k as u32, (grid.k + 1) as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc
                .write_header()
                .map_err(|e| io(std::io::Error::other(e)))?;
            w.write_image_data(&grid_pixels(grid))
                .map_err(|e| io(std::io::Error::other(e)))?;
            w.finish().map_err(|e| io(std::io::Error::other(e)))?;
        }
        GridFormat::Csv => {
            writeln!(out, "k,v,count,intensity").map_err(io)?;
            for k in 1..=grid.k {
                for v in 0..=grid.k {
                    writeln!(out, "{k},{v},{},{}", grid.count(k, v), grid.intensity_at(k, v))
                        .map_err(io)?;
                }
            }
        }
    }
    out.flush().map_err(io)
}
