//! Error metrics, frame statistics, heatmap export and timing.

mod heatmap;

use std::fmt::Write as _;
use std::time::Instant;

pub use heatmap::{colormap, export_heatmap, heatmap_ply, parse_heatmap};

use crate::mesh::{distance, Vec3};
use crate::{Error, Result};

/// Euclidean distance per vertex and their mean.
pub fn per_vertex_error(pred: &[Vec3], target: &[Vec3]) -> Result<(Vec<f64>, f64)> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("{} predicted rows, {} target rows", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("vertex list"));
    }
    let e: Vec<f64> = pred.iter().zip(target).map(|(a, b)| distance(*a, *b)).collect();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    Ok((e, mean))
}

/// Statistics over per-frame mean errors. `std` is the population value.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub frames: Vec<(u32, f64)>,
}

pub fn aggregate(frames: &[(u32, f64)]) -> Result<ErrorStats> {
    if frames.is_empty() {
        return Err(Error::Empty("frame errors"));
    }
    let n = frames.len() as f64;
    let mean = frames.iter().map(|f| f.1).sum::<f64>() / n;
    let var = frames.iter().map(|f| (f.1 - mean).powi(2)).sum::<f64>() / n;
    let mut sorted: Vec<f64> = frames.iter().map(|f| f.1).collect();
    sorted.sort_by(f64::total_cmp);
    let h = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[h]
    } else {
        0.5 * (sorted[h - 1] + sorted[h])
    };
    Ok(ErrorStats {
        mean,
        median,
        std: var.sqrt(),
        max: sorted[sorted.len() - 1],
        min: sorted[0],
        frames: frames.to_vec(),
    })
}

impl ErrorStats {
    /// One row per frame: `frame_id,method,mean_error`.
    pub fn frame_csv(&self, method: &str) -> String {
        let mut out = String::from("frame_id,method,mean_error\n");
        for (id, e) in &self.frames {
            let _ = writeln!(out, "{id},{method},{e}");
        }
        out
    }

    /// Summary row matching [`ErrorStats::SUMMARY_HEADER`].
    pub fn summary_row(&self, method: &str) -> String {
        format!(
            "{method},{},{},{},{},{}\n",
            self.mean, self.median, self.std, self.max, self.min
        )
    }

    pub const SUMMARY_HEADER: &'static str = "method,mean,median,std,max,min\n";
}

/// Wall-clock timing of a repeated closure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub runs: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub min_seconds: f64,
}

impl BenchReport {
    pub fn fps(&self) -> f64 {
        1.0 / self.mean_seconds
    }
}

pub const MIN_BENCH_RUNS: usize = 50;
pub const BENCH_WARMUP: usize = 5;

/// Times `runs` calls of `f` after `warmup` untimed calls.
pub fn bench<F: FnMut() -> Result<()>>(warmup: usize, runs: usize, mut f: F) -> Result<BenchReport> {
    if runs == 0 {
        return Err(Error::Empty("bench runs"));
    }
    for _ in 0..warmup {
        f()?;
    }
    let mut t = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        f()?;
        t.push(start.elapsed().as_secs_f64());
    }
    let n = runs as f64;
    let mean = t.iter().sum::<f64>() / n;
    let std = (t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(BenchReport {
        runs,
        mean_seconds: mean,
        std_seconds: std,
        min_seconds: t.iter().copied().fold(f64::INFINITY, f64::min),
    })
}
