use crate::error::{Error, Result};

/// One sweep point: accept iff `score >= threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Threshold sweep over every distinct score plus `+inf`.
///
/// Thresholds increase along the curve, so FAR is non-increasing and FRR
/// non-decreasing; the first point is `(FAR 1, FRR 0)` and the last
/// `(FAR 0, FRR 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn counts(scored: &[(f64, bool)]) -> Result<(usize, usize)> {
    let n_pos = scored.iter().filter(|(_, same)| *same).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateTrials(format!("{n_pos} positives, {n_neg} negatives")));
    }
    if let Some((s, _)) = scored.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::DegenerateTrials(format!("non-finite score {s}")));
    }
    Ok((n_pos, n_neg))
}

impl RocCurve {
    pub fn from_scores(scored: &[(f64, bool)]) -> Result<Self> {
        let (n_pos, n_neg) = counts(scored)?;
        let mut sorted = scored.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (p, n) = (n_pos as f64, n_neg as f64);
        let mut points = Vec::new();
        // Trials strictly below the current threshold.
        let (mut pos_below, mut neg_below) = (0usize, 0usize);
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i].0;
            points.push(RocPoint {
                threshold: t,
                far: (n_neg - neg_below) as f64 / n,
                frr: pos_below as f64 / p,
            });
            while i < sorted.len() && sorted[i].0 == t {
                if sorted[i].1 {
                    pos_below += 1;
                } else {
                    neg_below += 1;
                }
                i += 1;
            }
        }
        points.push(RocPoint {
            threshold: f64::INFINITY,
            far: 0.0,
            frr: 1.0,
        });
        Ok(RocCurve { points, n_pos, n_neg })
    }

    /// `(eer, threshold)` at the FAR = FRR crossing, interpolated linearly
    /// between the two sweep points that bracket it.
    pub fn eer(&self) -> (f64, f64) {
        let pts = &self.points;
        let k = pts
            .iter()
            .position(|q| q.frr >= q.far)
            .expect("last point has FRR 1 >= FAR 0");
        if k == 0 {
            return (pts[0].far, pts[0].threshold);
        }
        let (a, b) = (pts[k - 1], pts[k]);
        let da = a.far - a.frr;
        let db = b.far - b.frr;
        let lambda = da / (da - db);
        let eer = a.far + lambda * (b.far - a.far);
        let threshold = if b.threshold.is_finite() {
            a.threshold + lambda * (b.threshold - a.threshold)
        } else {
            a.threshold
        };
        (eer, threshold)
    }

    /// Trapezoidal area under TPR against FAR.
    pub fn area(&self) -> f64 {
        // Points run from FAR 1 down to FAR 0.
        self.points
            .windows(2)
            .map(|w| (w[0].far - w[1].far) * ((1.0 - w[0].frr) + (1.0 - w[1].frr)) / 2.0)
            .sum()
    }
}

/// Equal error rate and its threshold.
pub fn eer(scored: &[(f64, bool)]) -> Result<(f64, f64)> {
    Ok(RocCurve::from_scores(scored)?.eer())
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half, via mid-ranks.
pub fn auc(scored: &[(f64, bool)]) -> Result<f64> {
    let (n_pos, n_neg) = counts(scored)?;
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean.
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * sorted[i..j].iter().filter(|(_, s)| *s).count() as f64;
        i = j;
    }
    let p = n_pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

/// Trapezoidal ROC area; agrees with [`auc`] up to rounding.
pub fn auc_trapezoid(scored: &[(f64, bool)]) -> Result<f64> {
    Ok(RocCurve::from_scores(scored)?.area())
}
