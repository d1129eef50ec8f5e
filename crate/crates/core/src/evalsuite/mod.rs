//! Verification (EER, AUC), 1:n_c matching, feature analytics and their CSV
//! forms.

mod analytics;
mod matching;
mod metrics;
mod verify;

use std::fmt::Write as _;

pub use analytics::{feature_analytics, fused_embeddings, pair_stats, FeatureStats};
pub use matching::{match_1_to_n, MatchDirection, MatchReport};
pub use metrics::{auc, auc_trapezoid, eer, RocCurve, RocPoint};
pub use verify::{score_trials, verify, PairScorer, ProjectionScorer, VerifyResult};

pub fn verification_csv(rows: &[VerifyResult]) -> String {
    let mut out = String::from("stratum,eer,auc,n_pos,n_neg\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.stratum, r.eer, r.auc, r.n_pos, r.n_neg);
    }
    out
}

pub fn matching_csv(rows: &[MatchReport]) -> String {
    let mut out = String::from("n_c,accuracy,trials\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.n_c, r.accuracy, r.trials);
    }
    out
}

pub fn analytics_csv(stats: &FeatureStats) -> String {
    format!(
        "orthogonality,same_sim,diff_sim\n{},{},{}\n",
        stats.orthogonality, stats.same_sim, stats.diff_sim
    )
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,far,frr\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.far, p.frr);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_headers() {
        assert!(matching_csv(&[]).starts_with("n_c,accuracy,trials\n"));
        let curve = RocCurve::from_scores(&[(0.5, true), (0.1, false)]).unwrap();
        let csv = roc_csv(&curve);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.ends_with("inf,0,1\n"));
    }
}
