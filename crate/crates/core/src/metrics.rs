//! Detection and recovery metrics: per-fix true/false positive rates,
//! detection delay, ROC sweeps, and recovery error statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::fusion::DetectionReport;
use crate::geo::EnuPoint;
use crate::io::AttackLabel;

/// One operating point of an ROC sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub lambda: f64,
    pub p_fp: f64,
    pub p_tp: f64,
}

/// Aggregated evaluation of one detection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Per-fix true positive rate over attacked epochs.
    pub p_tp: Option<f64>,
    /// Per-fix false positive rate over benign epochs.
    pub p_fp: Option<f64>,
    /// Mean detection delay over attack windows that were detected, seconds.
    pub delta_t_d_s: Option<f64>,
    /// Per-window delays; `None` for windows never detected.
    pub window_delays_s: Vec<Option<f64>>,
    pub roc: Vec<RocPoint>,
    pub recovery_mae: Option<f64>,
    pub recovery_median: Option<f64>,
    pub recovery_p20: Option<f64>,
    pub recovery_p80: Option<f64>,
    pub attacked_epochs: usize,
    pub benign_epochs: usize,
}

/// Epoch times labeled as attacked.
pub fn attacked_times(labels: &[AttackLabel]) -> BTreeSet<i64> {
    labels
        .iter()
        .filter(|l| l.attacked)
        .map(|l| l.time_ms)
        .collect()
}

/// Contiguous attacked spans over the report timeline:
/// maximal runs of consecutive reports whose times are attacked.
pub fn attack_windows(report_times: &[i64], attacked: &BTreeSet<i64>) -> Vec<(i64, i64)> {
    let mut windows = Vec::new();
    let mut start: Option<i64> = None;
    let mut last = 0i64;
    for &t in report_times {
        if attacked.contains(&t) {
            if start.is_none() {
                start = Some(t);
            }
            last = t;
        } else if let Some(s) = start.take() {
            windows.push((s, last));
        }
    }
    if let Some(s) = start {
        windows.push((s, last));
    }
    windows
}

/// Linear-interpolation percentile of a sorted slice, q in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

/// Error statistics for a position trace against the truth.
pub fn error_stats(errors: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    if errors.is_empty() {
        return (None, None, None, None);
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mae = sorted.iter().sum::<f64>() / sorted.len() as f64;
    (
        Some(mae),
        Some(percentile(&sorted, 0.5)),
        Some(percentile(&sorted, 0.2)),
        Some(percentile(&sorted, 0.8)),
    )
}

/// Evaluate detection reports against labels and the ground-truth trajectory.
///
/// `lambda_override` recomputes alarms from the scores at a fixed threshold
/// instead of trusting the alarms baked into the reports.
pub fn evaluate_reports(
    reports: &[DetectionReport],
    labels: &[AttackLabel],
    truth: &BTreeMap<i64, EnuPoint>,
    lambda_override: Option<f64>,
    roc_grid: &[f64],
) -> MetricsSummary {
    let attacked = attacked_times(labels);
    let alarm_of = |r: &DetectionReport| match lambda_override {
        Some(lambda) => r.score > lambda,
        None => r.alarm,
    };

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut attacked_epochs = 0usize;
    let mut benign_epochs = 0usize;
    let mut recovery_errors = Vec::new();

    for r in reports {
        let is_attacked = attacked.contains(&r.time_ms);
        if is_attacked {
            attacked_epochs += 1;
            if alarm_of(r) {
                tp += 1;
            }
            if let (Some(rec), Some(t)) = (r.recovered, truth.get(&r.time_ms)) {
                recovery_errors.push(rec.distance(*t));
            }
        } else {
            benign_epochs += 1;
            if alarm_of(r) {
                fp += 1;
            }
        }
    }

    let report_times: Vec<i64> = reports.iter().map(|r| r.time_ms).collect();
    let windows = attack_windows(&report_times, &attacked);
    let window_delays_s: Vec<Option<f64>> = windows
        .iter()
        .map(|(start, end)| {
            reports
                .iter()
                .filter(|r| r.time_ms >= *start && r.time_ms <= *end && alarm_of(r))
                .map(|r| (r.time_ms - start) as f64 / 1000.0)
                .next()
        })
        .collect();
    let detected: Vec<f64> = window_delays_s.iter().flatten().copied().collect();
    let delta_t_d_s = (!detected.is_empty())
        .then(|| detected.iter().sum::<f64>() / detected.len() as f64);

    let scored: Vec<(f64, bool)> = reports
        .iter()
        .map(|r| (r.score, attacked.contains(&r.time_ms)))
        .collect();
    let roc = roc_on_grid(&scored, roc_grid);

    let (recovery_mae, recovery_median, recovery_p20, recovery_p80) =
        error_stats(&recovery_errors);

    MetricsSummary {
        p_tp: (attacked_epochs > 0).then(|| tp as f64 / attacked_epochs as f64),
        p_fp: (benign_epochs > 0).then(|| fp as f64 / benign_epochs as f64),
        delta_t_d_s,
        window_delays_s,
        roc,
        recovery_mae,
        recovery_median,
        recovery_p20,
        recovery_p80,
        attacked_epochs,
        benign_epochs,
    }
}

/// ROC over a fixed threshold grid; duplicates are collapsed and points come
/// back sorted by threshold.
pub fn roc_on_grid(scored: &[(f64, bool)], grid: &[f64]) -> Vec<RocPoint> {
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let attacked = scored.iter().filter(|(_, a)| *a).count();
    let benign = scored.len() - attacked;
    grid.into_iter()
        .map(|lambda| {
            let tp = scored.iter().filter(|(s, a)| *a && *s > lambda).count();
            let fp = scored.iter().filter(|(s, a)| !*a && *s > lambda).count();
            RocPoint {
                lambda,
                p_fp: if benign > 0 { fp as f64 / benign as f64 } else { 0.0 },
                p_tp: if attacked > 0 { tp as f64 / attacked as f64 } else { 0.0 },
            }
        })
        .collect()
}

/// Best achievable true-positive rate with false positives held at or below
/// `fp_target`, sweeping every distinct score as a candidate threshold.
/// `None` scores (a baseline that produced no estimate) count as score zero.
pub fn tp_at_fp(scored: &[(Option<f64>, bool)], fp_target: f64) -> f64 {
    let scores: Vec<(f64, bool)> = scored
        .iter()
        .map(|(s, a)| (s.unwrap_or(0.0), *a))
        .collect();
    let attacked = scores.iter().filter(|(_, a)| *a).count();
    let benign = scores.len() - attacked;
    if attacked == 0 {
        return 0.0;
    }
    let mut thresholds: Vec<f64> = scores.iter().map(|(s, _)| *s).collect();
    thresholds.push(f64::NEG_INFINITY);
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let mut best = 0.0f64;
    for lambda in thresholds {
        let fp = scores.iter().filter(|(s, a)| !*a && *s > lambda).count();
        let p_fp = if benign > 0 { fp as f64 / benign as f64 } else { 0.0 };
        if p_fp <= fp_target {
            let tp = scores.iter().filter(|(s, a)| *a && *s > lambda).count();
            best = best.max(tp as f64 / attacked as f64);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::LbsSource;
    use crate::types::Infrastructure;

    fn report(time_ms: i64, score: f64, alarm: bool, recovered: Option<EnuPoint>) -> DetectionReport {
        DetectionReport {
            time_ms,
            score,
            alarm,
            lbs_source: LbsSource::Reported,
            preliminary_fused: EnuPoint::new(0.0, 0.0, 0.0),
            deviations: vec![],
            excluded: vec![],
            benign: BTreeMap::new(),
            recovered,
            iterations: 1,
            dropped: 0,
        }
    }

    fn label(time_ms: i64) -> AttackLabel {
        AttackLabel {
            time_ms,
            attacked: true,
            infrastructure: Infrastructure::Gnss,
            anchor_id: "G01".into(),
        }
    }

    #[test]
    fn perfect_detector() {
        let reports: Vec<DetectionReport> = (0..10)
            .map(|i| {
                let attacked = i >= 5;
                report(
                    i * 1000,
                    if attacked { 0.9 } else { 0.0 },
                    attacked,
                    Some(EnuPoint::new(0.0, 0.0, 0.0)),
                )
            })
            .collect();
        let labels: Vec<AttackLabel> = (5..10).map(|i| label(i * 1000)).collect();
        let truth: BTreeMap<i64, EnuPoint> = (0..10)
            .map(|i| (i * 1000, EnuPoint::new(0.0, 0.0, 0.0)))
            .collect();
        let m = evaluate_reports(&reports, &labels, &truth, None, &[0.5]);
        assert_eq!(m.p_tp, Some(1.0));
        assert_eq!(m.p_fp, Some(0.0));
        assert_eq!(m.delta_t_d_s, Some(0.0));
        assert_eq!(m.recovery_mae, Some(0.0));
    }

    #[test]
    fn never_alarms() {
        let reports: Vec<DetectionReport> =
            (0..4).map(|i| report(i * 1000, 0.0, false, None)).collect();
        let labels = vec![label(2000), label(3000)];
        let m = evaluate_reports(&reports, &labels, &BTreeMap::new(), None, &[0.5]);
        assert_eq!(m.p_tp, Some(0.0));
        assert_eq!(m.delta_t_d_s, None);
        assert_eq!(m.window_delays_s, vec![None]);
    }

    #[test]
    fn hand_counted_confusion_matrix() {
        // 3 attacked epochs (1 detected), 3 benign (1 false alarm).
        let reports = vec![
            report(0, 0.1, false, None),
            report(1000, 0.8, true, None),
            report(2000, 0.2, false, None),
            report(3000, 0.9, true, None),
            report(4000, 0.3, false, None),
            report(5000, 0.4, false, None),
        ];
        let labels = vec![label(1000), label(2000), label(5000)];
        let m = evaluate_reports(&reports, &labels, &BTreeMap::new(), None, &[0.5]);
        assert_eq!(m.p_tp, Some(1.0 / 3.0));
        assert_eq!(m.p_fp, Some(1.0 / 3.0));
    }

    #[test]
    fn lambda_override_matches_roc() {
        let reports = vec![
            report(0, 0.1, true, None), // baked-in alarm ignored under override
            report(1000, 0.8, false, None),
        ];
        let labels = vec![label(1000)];
        let m = evaluate_reports(&reports, &labels, &BTreeMap::new(), Some(0.5), &[0.5]);
        assert_eq!(m.p_tp, Some(1.0));
        assert_eq!(m.p_fp, Some(0.0));
        let roc_pt = m.roc.iter().find(|p| p.lambda == 0.5).unwrap();
        assert_eq!(roc_pt.p_tp, m.p_tp.unwrap());
        assert_eq!(roc_pt.p_fp, m.p_fp.unwrap());
    }

    #[test]
    fn roc_endpoints_and_dedup() {
        let scored = vec![(0.2, false), (0.4, true), (0.9, true)];
        let roc = roc_on_grid(&scored, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(roc.len(), 2);
        assert_eq!(roc[0].lambda, 0.0);
        assert!(roc[0].p_fp > 0.9); // every positive score alarms at zero
        assert_eq!(roc[1].p_fp, 0.0); // nothing exceeds one
        assert_eq!(roc[1].p_tp, 0.0);
    }

    #[test]
    fn tp_at_fp_sweep() {
        let scored = vec![
            (Some(0.1), false),
            (Some(0.2), false),
            (Some(0.9), true),
            (Some(0.05), true),
        ];
        // At zero FP the threshold must clear 0.2, catching only the 0.9.
        assert_eq!(tp_at_fp(&scored, 0.0), 0.5);
        // Catching the 0.05 attack requires letting both benign scores alarm.
        assert_eq!(tp_at_fp(&scored, 0.5), 0.5);
        assert_eq!(tp_at_fp(&scored, 1.0), 1.0);
    }

    #[test]
    fn percentile_interpolation() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((percentile(&xs, 0.0) - 1.0).abs() < 1e-12);
        assert!((percentile(&xs, 1.0) - 4.0).abs() < 1e-12);
        assert!((percentile(&xs, 0.5) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn windows_split_on_benign_gaps() {
        let times: Vec<i64> = (0..8).map(|i| i * 1000).collect();
        let attacked: BTreeSet<i64> = [1000, 2000, 5000, 6000].into_iter().collect();
        let windows = attack_windows(&times, &attacked);
        assert_eq!(windows, vec![(1000, 2000), (5000, 6000)]);
    }
}
