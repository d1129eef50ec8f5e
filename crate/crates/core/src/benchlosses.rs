//! Wall-clock scaling of the losses with the number of training instances.
//!
//! Batch losses (cross-entropy, orthogonality, joint, center, Git) are timed
//! over one pass of `n` instances in mini-batches. Contrastive and triplet
//! losses are timed with full pair and triplet enumeration, which is what
//! their mining cost amounts to without a sampling heuristic.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::losses::{
    ce_loss, center_loss, contrastive_loss_all, git_loss, joint_loss, oc_loss, triplet_loss_all, LossKind, OcReduction,
};
use crate::numcore::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub batch_size: usize,
    pub embed_dim: usize,
    /// Identities in the synthetic workload; fixed so that the number of
    /// same-identity partners grows linearly with `n`.
    pub n_classes: usize,
    /// Timed repetitions per size; the median is reported.
    pub reps: usize,
    /// Inner repetitions are doubled until one timed block lasts this long.
    pub min_block_seconds: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batch_size: 128,
            embed_dim: 64,
            n_classes: 16,
            reps: 5,
            min_block_seconds: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchPoint {
    pub n: usize,
    /// Median seconds for one pass.
    pub median_seconds: f64,
    pub reps: usize,
    /// Passes per timed block.
    pub inner: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub kind: LossKind,
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of log time against log n.
    pub slope: f64,
}

impl BenchReport {
    pub fn time_at(&self, n: usize) -> Option<f64> {
        self.points.iter().find(|p| p.n == n).map(|p| p.median_seconds)
    }
}

/// Default sizes per loss family, chosen so that the cubic case stays
/// within seconds and all three families share `n = 512`.
pub fn default_sizes(kind: LossKind) -> Vec<usize> {
    match kind {
        LossKind::Contrastive => vec![128, 256, 512, 1024],
        LossKind::Triplet => vec![128, 256, 512],
        _ => vec![256, 512, 1024, 2048],
    }
}

struct Workload {
    fused: Matrix<f64>,
    other: Matrix<f64>,
    labels: Vec<usize>,
    classifier: Matrix<f64>,
    centers: Matrix<f64>,
}

impl Workload {
    fn new(n: usize, cfg: &BenchConfig, rng: &mut Rng) -> Self {
        let d = cfg.embed_dim;
        let mut labels: Vec<usize> = (0..n).map(|i| i % cfg.n_classes).collect();
        rng.shuffle(&mut labels);
        Workload {
            fused: Matrix::from_fn(n, d, |_, _| rng.normal()),
            other: Matrix::from_fn(n, d, |_, _| rng.normal()),
            labels,
            classifier: Matrix::from_fn(d, cfg.n_classes, |_, _| 0.1 * rng.normal()),
            centers: Matrix::from_fn(cfg.n_classes, d, |_, _| 0.1 * rng.normal()),
        }
    }

    /// One pass of `kind` over the workload; returns the summed loss so the
    /// work cannot be optimized away.
    fn pass(&self, kind: LossKind, batch_size: usize) -> Result<f64> {
        match kind {
            LossKind::Contrastive => Ok(contrastive_loss_all(&self.fused, &self.other, &self.labels, 0.5)?.value),
            LossKind::Triplet => Ok(triplet_loss_all(&self.fused, &self.other, &self.labels, 0.3)?.value),
            _ => {
                let n = self.labels.len();
                let mut centers = self.centers.clone();
                let mut total = 0.0;
                let mut start = 0;
                while start < n {
                    let end = (start + batch_size).min(n);
                    let rows: Vec<usize> = (start..end).collect();
                    let fused = self.fused.select_rows(&rows);
                    let labels = &self.labels[start..end];
                    total += match kind {
                        LossKind::Ce => ce_loss(&fused.matmul(&self.classifier)?, labels)?.value,
                        LossKind::Joint => {
                            joint_loss(&fused.matmul(&self.classifier)?, &fused, labels, 1.0, OcReduction::Mean)?.value
                        }
                        LossKind::Oc => oc_loss(&fused, labels, OcReduction::Mean)?.value,
                        LossKind::Center | LossKind::Git => {
                            let out = if kind == LossKind::Center {
                                center_loss(&fused, labels, &centers, 0.5)?
                            } else {
                                git_loss(&fused, labels, &centers, 0.5, 0.1)?
                            };
                            centers = out.centers;
                            out.loss.value
                        }
                        LossKind::Contrastive | LossKind::Triplet => unreachable!(),
                    };
                    start = end;
                }
                Ok(total)
            }
        }
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Times `kind` at each size in `n_values` (strictly increasing, at least
/// two sizes, each at least 2). A discarded warm-up pass precedes the
/// calibration of inner repetitions, whose blocks are discarded as well.
pub fn bench(kind: LossKind, n_values: &[usize], cfg: &BenchConfig, rng: &mut Rng) -> Result<BenchReport> {
    if n_values.len() < 2 || n_values.windows(2).any(|w| w[0] >= w[1]) || n_values[0] < 2 {
        return Err(Error::contract(
            "bench",
            format!("sizes must be strictly increasing, at least two, each >= 2; got {n_values:?}"),
        ));
    }
    if cfg.reps == 0 || cfg.batch_size < 2 || cfg.n_classes < 2 || cfg.embed_dim == 0 {
        return Err(Error::contract("bench", "reps, batch size, classes and width must be positive"));
    }
    let mut points = Vec::with_capacity(n_values.len());
    let mut sink = 0.0;
    for &n in n_values {
        let work = Workload::new(n, cfg, rng);
        sink += work.pass(kind, cfg.batch_size)?;
        let mut inner = 1usize;
        loop {
            let t0 = Instant::now();
            for _ in 0..inner {
                sink += work.pass(kind, cfg.batch_size)?;
            }
            if t0.elapsed().as_secs_f64() >= cfg.min_block_seconds || inner >= 1 << 20 {
                break;
            }
            inner *= 2;
        }
        let mut times = Vec::with_capacity(cfg.reps);
        for _ in 0..cfg.reps {
            let t0 = Instant::now();
            for _ in 0..inner {
                sink += work.pass(kind, cfg.batch_size)?;
            }
            times.push(t0.elapsed().as_secs_f64() / inner as f64);
        }
        points.push(BenchPoint {
            n,
            median_seconds: median(&mut times).max(f64::MIN_POSITIVE),
            reps: cfg.reps,
            inner,
        });
    }
    std::hint::black_box(sink);
    let slope = log_log_slope(&points.iter().map(|p| (p.n as f64, p.median_seconds)).collect::<Vec<_>>());
    Ok(BenchReport { kind, points, slope })
}

/// `loss,n,median_seconds,slope`, one row per measured size.
pub fn bench_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from("loss,n,median_seconds,slope\n");
    for r in reports {
        for p in &r.points {
            let _ = writeln!(out, "{},{},{:e},{}", r.kind, p.n, p.median_seconds, r.slope);
        }
    }
    out
}
