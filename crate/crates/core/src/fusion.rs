//! Position fusion: attack likelihood, alarm decision, subset exclusion, and
//! position recovery.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::EnuPoint;
use crate::subsets::{SubsetDiagnostics, SubsetEstimate, SubsetSpec};
use crate::types::Infrastructure;

/// A subset estimate viewed as an axis-aligned Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetDensity {
    pub mean: EnuPoint,
    /// Per-axis standard deviation, strictly positive.
    pub sigma: Vector3<f64>,
}

impl SubsetDensity {
    pub fn new(mean: EnuPoint, sigma: Vector3<f64>) -> Result<Self> {
        if sigma.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma components must be positive, got {sigma:?}"
            )));
        }
        Ok(SubsetDensity { mean, sigma })
    }

    pub fn from_estimate(e: &SubsetEstimate) -> Result<Self> {
        SubsetDensity::new(e.position, e.uncertainty_vector())
    }
}

/// Map solver diagnostics to a per-axis uncertainty in meters.
///
/// GNSS uses the spatial DOP scaled by the unit range error; weighted least
/// squares maps its dimensionless residual back to meters through the mean
/// range; fingerprinting inverts the mean similarity so that an exact match
/// lands on the floor; everything else uses the polynomial-regression
/// residual when available. All paths clamp to the floor `sigma_min`, and
/// degenerate solves are inflated rather than rejected.
pub fn subset_uncertainty(
    diagnostics: &SubsetDiagnostics,
    poly_residual_rms: Option<f64>,
    sigma_min: f64,
    sigma_range: f64,
) -> Vector3<f64> {
    const DEGENERATE_INFLATION: f64 = 10.0;
    let scalar = match diagnostics {
        SubsetDiagnostics::Gnss { spatial_dop, .. } => spatial_dop * sigma_range,
        SubsetDiagnostics::WeightedLs {
            residual,
            mean_range,
            subset_size,
            degenerate,
        } => {
            // The Eq-style residual is dimensionless; √(residual/n)·mean ρ
            // restores meters.
            let base = (residual.max(0.0) / *subset_size as f64).sqrt() * mean_range;
            base * if *degenerate { DEGENERATE_INFLATION } else { 1.0 }
        }
        SubsetDiagnostics::Geoip {
            residual,
            mean_range,
            subset_size,
            fallback,
            ..
        } => {
            let base = match poly_residual_rms {
                Some(rms) => rms,
                None => (residual.max(0.0) / *subset_size as f64).sqrt() * mean_range,
            };
            base * if *fallback { DEGENERATE_INFLATION } else { 1.0 }
        }
        SubsetDiagnostics::Fingerprint {
            scores,
            subset_size,
            d_min,
        } => {
            let mean_score = if scores.is_empty() {
                0.0
            } else {
                scores.iter().sum::<f64>() / scores.len() as f64
            };
            if mean_score <= 0.0 {
                f64::INFINITY
            } else {
                // Calibrated so an exact match (score |S|/d_min) maps to the floor.
                let c_f = sigma_min * *subset_size as f64 / d_min;
                c_f / mean_score
            }
        }
        SubsetDiagnostics::RangeLs {
            residual,
            subset_size,
            degenerate,
        } => {
            let base = (residual.max(0.0) / *subset_size as f64).sqrt();
            base * if *degenerate { DEGENERATE_INFLATION } else { 1.0 }
        }
    };
    let clamped = if scalar.is_finite() {
        scalar.max(sigma_min)
    } else {
        1e6
    };
    Vector3::new(clamped, clamped, clamped)
}

/// Peak-normalized Gaussian density of `p` under `density`, in (0, 1]:
/// `exp(−½ Σ_axes ((p − mean) / σ)²)`, accumulated in log space.
pub fn normalized_density(density: &SubsetDensity, p: EnuPoint) -> f64 {
    log_normalized_density(density, p).exp()
}

fn log_normalized_density(density: &SubsetDensity, p: EnuPoint) -> f64 {
    let d = p.to_vector() - density.mean.to_vector();
    let mut acc = 0.0;
    for axis in 0..3 {
        let z = d[axis] / density.sigma[axis];
        acc += z * z;
    }
    -0.5 * acc
}

/// Likelihood that the reported position is manipulated:
/// `f_t = 1 − (Π_m (Π_l g_{l,m})^{1/L_m})^{1/M}` over peak-normalized subset
/// densities. Infrastructures without subsets are skipped and M shrinks
/// accordingly.
pub fn attack_likelihood(
    densities: &BTreeMap<Infrastructure, Vec<SubsetDensity>>,
    p_lbs: EnuPoint,
) -> Result<f64> {
    let mut infra_logs = Vec::new();
    for (_, ds) in densities.iter() {
        if ds.is_empty() {
            continue;
        }
        let sum: f64 = ds
            .iter()
            .map(|d| log_normalized_density(d, p_lbs))
            .sum();
        infra_logs.push(sum / ds.len() as f64);
    }
    if infra_logs.is_empty() {
        return Err(Error::NoData("no subset densities for any infrastructure".into()));
    }
    let mean_log = infra_logs.iter().sum::<f64>() / infra_logs.len() as f64;
    Ok(1.0 - mean_log.exp())
}

/// Alarm iff the score strictly exceeds the calibrated threshold.
pub fn decide_alarm(score: f64, lambda_f: f64) -> bool {
    score > lambda_f
}

/// Inverse-uncertainty weighted average of the estimates, point-wise per axis.
pub fn preliminary_fuse(estimates: &[&SubsetEstimate]) -> Result<EnuPoint> {
    if estimates.is_empty() {
        return Err(Error::NoData("nothing to fuse".into()));
    }
    let mut num: Vector3<f64> = Vector3::zeros();
    let mut den: Vector3<f64> = Vector3::zeros();
    for e in estimates {
        let sigma = e.uncertainty_vector();
        let p = e.position.to_vector();
        for axis in 0..3 {
            num[axis] += p[axis] / sigma[axis];
            den[axis] += 1.0 / sigma[axis];
        }
    }
    Ok(EnuPoint::new(
        num[0] / den[0],
        num[1] / den[1],
        num[2] / den[2],
    ))
}

/// Result of the recursive exclusion.
#[derive(Debug, Clone)]
pub struct ExclusionResult {
    /// Benign subset indices per infrastructure, in estimate order.
    pub benign: BTreeMap<Infrastructure, Vec<usize>>,
    pub excluded: Vec<SubsetSpec>,
    pub iterations: usize,
    /// Deviations `d_l^m` from the first-pass preliminary fuse, aligned with
    /// the input estimates.
    pub deviations: Vec<f64>,
    /// Set when fewer than two estimates made a threshold meaningless.
    pub trivial: bool,
}

/// Recursively exclude subsets whose deviation from the preliminary fused
/// position exceeds `mean + n_Λ · std` (population std, strict inequality,
/// ties retained). Stops at a fixpoint or after 20 iterations and always
/// retains at least one subset.
pub fn exclude_inconsistent(estimates: &[SubsetEstimate], n_lambda: f64) -> Result<ExclusionResult> {
    const MAX_ITERATIONS: usize = 20;
    if estimates.is_empty() {
        return Err(Error::NoData("no estimates to validate".into()));
    }

    let refs: Vec<&SubsetEstimate> = estimates.iter().collect();
    let first_fuse = preliminary_fuse(&refs)?;
    let deviations: Vec<f64> = estimates
        .iter()
        .map(|e| e.position.distance(first_fuse))
        .collect();

    if estimates.len() == 1 {
        let mut benign = BTreeMap::new();
        benign
            .entry(estimates[0].spec.infrastructure)
            .or_insert_with(Vec::new)
            .push(0);
        return Ok(ExclusionResult {
            benign,
            excluded: Vec::new(),
            iterations: 0,
            deviations,
            trivial: true,
        });
    }

    let mut survivors: Vec<usize> = (0..estimates.len()).collect();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let current: Vec<&SubsetEstimate> = survivors.iter().map(|&i| &estimates[i]).collect();
        let fused = preliminary_fuse(&current)?;
        let ds: Vec<f64> = current
            .iter()
            .map(|e| e.position.distance(fused))
            .collect();
        let mean = ds.iter().sum::<f64>() / ds.len() as f64;
        let var = ds.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / ds.len() as f64;
        let threshold = mean + n_lambda * var.sqrt();

        let kept: Vec<usize> = survivors
            .iter()
            .zip(&ds)
            .filter(|(_, d)| **d <= threshold)
            .map(|(&i, _)| i)
            .collect();
        if kept.len() == survivors.len() {
            break;
        }
        if kept.is_empty() {
            // Deviations can never all strictly exceed their own mean, but
            // guard the survivor floor anyway.
            break;
        }
        survivors = kept;
    }

    let mut benign: BTreeMap<Infrastructure, Vec<usize>> = BTreeMap::new();
    let mut excluded = Vec::new();
    for (i, e) in estimates.iter().enumerate() {
        if survivors.contains(&i) {
            benign
                .entry(e.spec.infrastructure)
                .or_insert_with(Vec::new)
                .push(e.spec.index);
        } else {
            excluded.push(e.spec.clone());
        }
    }
    Ok(ExclusionResult {
        benign,
        excluded,
        iterations,
        deviations,
        trivial: false,
    })
}

/// Recover the platform position from the validated benign subsets.
pub fn recover_position(
    estimates: &[SubsetEstimate],
    benign: &BTreeMap<Infrastructure, Vec<usize>>,
) -> Option<EnuPoint> {
    let selected: Vec<&SubsetEstimate> = estimates
        .iter()
        .filter(|e| {
            benign
                .get(&e.spec.infrastructure)
                .is_some_and(|ls| ls.contains(&e.spec.index))
        })
        .collect();
    if selected.is_empty() {
        return None;
    }
    preliminary_fuse(&selected).ok()
}

/// Smallest threshold on a grid achieving an empirical false-positive rate at
/// or below `target` on benign scores. Falls back to 1.0 when unreachable.
pub fn calibrate_threshold(benign_scores: &[f64], target_p_fp: f64, grid: &[f64]) -> f64 {
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    for lambda in grid {
        let fp = benign_scores.iter().filter(|s| **s > lambda).count() as f64
            / benign_scores.len().max(1) as f64;
        if fp <= target_p_fp {
            return lambda;
        }
    }
    1.0
}

/// Evenly spaced threshold grid over [0, 1].
pub fn default_threshold_grid(points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Which position the likelihood was evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbsSource {
    /// The platform's own reported position.
    Reported,
    /// No reported position existed; the preliminary fused position stood in.
    PreliminaryFused,
}

/// Per-epoch detection output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub time_ms: i64,
    /// Attack likelihood `f_t` in [0, 1].
    pub score: f64,
    pub alarm: bool,
    pub lbs_source: LbsSource,
    pub preliminary_fused: EnuPoint,
    /// `(infrastructure, subset index, deviation in meters)` per estimate.
    pub deviations: Vec<(Infrastructure, usize, f64)>,
    pub excluded: Vec<SubsetSpec>,
    /// Benign subset indices per infrastructure.
    pub benign: BTreeMap<Infrastructure, Vec<usize>>,
    pub recovered: Option<EnuPoint>,
    pub iterations: usize,
    /// Subsets dropped before fusion (solver failures), by reason.
    pub dropped: usize,
}

/// Detection thresholds and exclusion parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub lambda_f: f64,
    pub n_lambda: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            lambda_f: 0.5,
            n_lambda: 3.0,
        }
    }
}

/// Run likelihood scoring, exclusion, and recovery over one epoch's estimates.
pub fn detect_epoch(
    time_ms: i64,
    estimates: &[SubsetEstimate],
    reported_lbs: Option<EnuPoint>,
    dropped: usize,
    cfg: &DetectionConfig,
) -> Result<DetectionReport> {
    if estimates.is_empty() {
        return Err(Error::NoData(format!("no subset estimates at {time_ms}")));
    }
    let mut densities: BTreeMap<Infrastructure, Vec<SubsetDensity>> = BTreeMap::new();
    for e in estimates {
        densities
            .entry(e.spec.infrastructure)
            .or_default()
            .push(SubsetDensity::from_estimate(e)?);
    }

    let refs: Vec<&SubsetEstimate> = estimates.iter().collect();
    let preliminary = preliminary_fuse(&refs)?;
    let (lbs, lbs_source) = match reported_lbs {
        Some(p) => (p, LbsSource::Reported),
        None => (preliminary, LbsSource::PreliminaryFused),
    };
    let score = attack_likelihood(&densities, lbs)?;
    let alarm = decide_alarm(score, cfg.lambda_f);

    let exclusion = exclude_inconsistent(estimates, cfg.n_lambda)?;
    let recovered = recover_position(estimates, &exclusion.benign);

    let deviations = estimates
        .iter()
        .zip(&exclusion.deviations)
        .map(|(e, d)| (e.spec.infrastructure, e.spec.index, *d))
        .collect();

    Ok(DetectionReport {
        time_ms,
        score,
        alarm,
        lbs_source,
        preliminary_fused: preliminary,
        deviations,
        excluded: exclusion.excluded,
        benign: exclusion.benign,
        recovered,
        iterations: exclusion.iterations,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subsets::SubsetSpec;

    pub(crate) fn estimate(
        infra: Infrastructure,
        index: usize,
        pos: (f64, f64, f64),
        sigma: f64,
    ) -> SubsetEstimate {
        SubsetEstimate {
            spec: SubsetSpec {
                infrastructure: infra,
                members: vec![format!("m{index}")],
                index,
            },
            position: EnuPoint::new(pos.0, pos.1, pos.2),
            uncertainty: [sigma, sigma, sigma],
            diagnostics: SubsetDiagnostics::RangeLs {
                residual: 0.0,
                subset_size: 3,
                degenerate: false,
            },
        }
    }

    #[test]
    fn density_peak_is_one() {
        let d = SubsetDensity::new(EnuPoint::new(1.0, 2.0, 3.0), Vector3::new(2.0, 2.0, 2.0))
            .unwrap();
        assert!((normalized_density(&d, EnuPoint::new(1.0, 2.0, 3.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_sigma_offset_single_axis() {
        let d = SubsetDensity::new(EnuPoint::new(0.0, 0.0, 0.0), Vector3::new(3.0, 3.0, 3.0))
            .unwrap();
        let g = normalized_density(&d, EnuPoint::new(3.0, 0.0, 0.0));
        assert!((g - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn likelihood_zero_at_consensus() {
        let mut densities = BTreeMap::new();
        densities.insert(
            Infrastructure::Gnss,
            vec![SubsetDensity::new(
                EnuPoint::new(5.0, 5.0, 0.0),
                Vector3::new(1.0, 1.0, 1.0),
            )
            .unwrap()],
        );
        let f = attack_likelihood(&densities, EnuPoint::new(5.0, 5.0, 0.0)).unwrap();
        assert!(f.abs() < 1e-15);
    }

    #[test]
    fn likelihood_closed_forms() {
        // Single subset at 1σ offset on one axis: f = 1 − e^{−1/2}.
        let mut densities = BTreeMap::new();
        densities.insert(
            Infrastructure::Gnss,
            vec![SubsetDensity::new(
                EnuPoint::new(0.0, 0.0, 0.0),
                Vector3::new(2.0, 2.0, 2.0),
            )
            .unwrap()],
        );
        let f = attack_likelihood(&densities, EnuPoint::new(2.0, 0.0, 0.0)).unwrap();
        assert!((f - (1.0 - (-0.5f64).exp())).abs() < 1e-12);

        // One perfectly consistent infrastructure plus one at g = e^{−2}:
        // f = 1 − e^{−1}.
        let mut densities = BTreeMap::new();
        densities.insert(
            Infrastructure::Gnss,
            vec![SubsetDensity::new(
                EnuPoint::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 1.0, 1.0),
            )
            .unwrap()],
        );
        densities.insert(
            Infrastructure::Wifi,
            vec![SubsetDensity::new(
                EnuPoint::new(2.0, 0.0, 0.0),
                Vector3::new(1.0, 1.0, 1.0),
            )
            .unwrap()],
        );
        let f = attack_likelihood(&densities, EnuPoint::new(0.0, 0.0, 0.0)).unwrap();
        assert!((f - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn alarm_strictness() {
        assert!(!decide_alarm(0.0, 0.3));
        assert!(decide_alarm(1.0, 0.99));
        assert!(!decide_alarm(0.42, 0.42));
    }

    #[test]
    fn fuse_weights() {
        // Two estimates with sigma ratio 1:3 put the fuse 3/4 toward the tighter.
        let a = estimate(Infrastructure::Gnss, 0, (0.0, 0.0, 0.0), 1.0);
        let b = estimate(Infrastructure::Gnss, 1, (4.0, 0.0, 0.0), 3.0);
        let fused = preliminary_fuse(&[&a, &b]).unwrap();
        assert!((fused.east - 1.0).abs() < 1e-12);

        // Equal sigmas give the midpoint.
        let c = estimate(Infrastructure::Gnss, 2, (4.0, 2.0, 0.0), 1.0);
        let fused = preliminary_fuse(&[&a, &c]).unwrap();
        assert!((fused.east - 2.0).abs() < 1e-12);
        assert!((fused.north - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exclusion_keeps_consensus_drops_far_outlier() {
        // Twelve coincident estimates and one 500 m away; n_Λ = 3 excludes
        // the outlier with margin.
        let mut estimates: Vec<SubsetEstimate> = (0..12)
            .map(|i| estimate(Infrastructure::Gnss, i, (0.0, 0.0, 0.0), 1.0))
            .collect();
        estimates.push(estimate(Infrastructure::Gnss, 12, (500.0, 0.0, 0.0), 1.0));
        let result = exclude_inconsistent(&estimates, 3.0).unwrap();
        assert_eq!(result.excluded.len(), 1);
        assert_eq!(result.excluded[0].index, 12);
        assert_eq!(result.benign[&Infrastructure::Gnss].len(), 12);
    }

    #[test]
    fn exclusion_tie_at_threshold_is_retained() {
        // Nine-vs-one at n_Λ = 3 sits exactly on the threshold boundary
        // (d_out = mean + 3·std identically); strict inequality keeps it.
        let mut estimates: Vec<SubsetEstimate> = (0..9)
            .map(|i| estimate(Infrastructure::Gnss, i, (0.0, 0.0, 0.0), 1.0))
            .collect();
        estimates.push(estimate(Infrastructure::Gnss, 9, (500.0, 0.0, 0.0), 1.0));
        let result = exclude_inconsistent(&estimates, 3.0).unwrap();
        assert!(result.excluded.is_empty());
    }

    #[test]
    fn exclusion_idealized_mode_drops_above_mean() {
        let mut estimates: Vec<SubsetEstimate> = (0..9)
            .map(|i| estimate(Infrastructure::Gnss, i, (0.0, 0.0, 0.0), 1.0))
            .collect();
        estimates.push(estimate(Infrastructure::Gnss, 9, (500.0, 0.0, 0.0), 1.0));
        let result = exclude_inconsistent(&estimates, 0.0).unwrap();
        assert_eq!(result.excluded.len(), 1);
        assert_eq!(result.excluded[0].index, 9);
    }

    #[test]
    fn coincident_estimates_exclude_nothing() {
        let estimates: Vec<SubsetEstimate> = (0..5)
            .map(|i| estimate(Infrastructure::Wifi, i, (7.0, -2.0, 0.0), 2.0))
            .collect();
        let result = exclude_inconsistent(&estimates, 3.0).unwrap();
        assert!(result.excluded.is_empty());
        assert_eq!(result.iterations, 1);
    }

    #[test]
    fn single_estimate_is_trivially_benign() {
        let estimates = vec![estimate(Infrastructure::Cell, 0, (1.0, 1.0, 0.0), 1.0)];
        let result = exclude_inconsistent(&estimates, 3.0).unwrap();
        assert!(result.trivial);
        assert_eq!(result.benign[&Infrastructure::Cell], vec![0]);
    }

    #[test]
    fn recovery_reduces_to_preliminary_with_all_benign() {
        let estimates: Vec<SubsetEstimate> = vec![
            estimate(Infrastructure::Gnss, 0, (0.0, 0.0, 0.0), 1.0),
            estimate(Infrastructure::Gnss, 1, (2.0, 0.0, 0.0), 2.0),
            estimate(Infrastructure::Wifi, 0, (1.0, 3.0, 0.0), 5.0),
        ];
        let refs: Vec<&SubsetEstimate> = estimates.iter().collect();
        let all = preliminary_fuse(&refs).unwrap();
        let mut benign = BTreeMap::new();
        benign.insert(Infrastructure::Gnss, vec![0, 1]);
        benign.insert(Infrastructure::Wifi, vec![0]);
        let rec = recover_position(&estimates, &benign).unwrap();
        assert!(rec.distance(all) < 1e-12);
    }

    #[test]
    fn recovery_single_benign_subset() {
        let estimates = vec![
            estimate(Infrastructure::Gnss, 0, (0.0, 0.0, 0.0), 1.0),
            estimate(Infrastructure::Gnss, 1, (9.0, 9.0, 9.0), 1.0),
        ];
        let mut benign = BTreeMap::new();
        benign.insert(Infrastructure::Gnss, vec![1]);
        let rec = recover_position(&estimates, &benign).unwrap();
        assert_eq!(rec, EnuPoint::new(9.0, 9.0, 9.0));
    }

    #[test]
    fn recovery_empty_benign_is_none() {
        let estimates = vec![estimate(Infrastructure::Gnss, 0, (0.0, 0.0, 0.0), 1.0)];
        let benign = BTreeMap::new();
        assert!(recover_position(&estimates, &benign).is_none());
    }

    #[test]
    fn threshold_calibration() {
        let grid = default_threshold_grid(101);
        // All-zero benign scores: the minimal grid value already achieves 0 FP.
        assert_eq!(calibrate_threshold(&[0.0, 0.0, 0.0], 0.0, &grid), 0.0);
        // Target 0 with a positive score: threshold must clear the max score.
        let lam = calibrate_threshold(&[0.0, 0.3, 0.62], 0.0, &grid);
        assert!(lam >= 0.62);
        assert!(lam <= 0.63 + 1e-12);
    }

    #[test]
    fn fingerprint_uncertainty_inversion() {
        let diag = SubsetDiagnostics::Fingerprint {
            scores: vec![10.0, 5.0, 5.0],
            subset_size: 3,
            d_min: 0.5,
        };
        let sigma = subset_uncertainty(&diag, None, 1.0, 1.0);
        // c_f = sigma_min * 3 / 0.5 = 6; mean score = 20/3; sigma = 6/(20/3) = 0.9 → floor 1.0.
        assert!((sigma.x - 1.0).abs() < 1e-12);
        let diag = SubsetDiagnostics::Fingerprint {
            scores: vec![2.0, 1.0, 1.0],
            subset_size: 3,
            d_min: 0.5,
        };
        let sigma = subset_uncertainty(&diag, None, 1.0, 1.0);
        assert!((sigma.x - 6.0 / (4.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn gnss_uncertainty_is_dop_scaled() {
        let diag = SubsetDiagnostics::Gnss {
            clock_bias: 0.0,
            residuals: vec![],
            dop: [1.0, 1.0, 1.0, 1.0],
            spatial_dop: 2.0,
        };
        let sigma = subset_uncertainty(&diag, None, 1.0, 1.0);
        assert_eq!(sigma, Vector3::new(2.0, 2.0, 2.0));
    }

    #[test]
    fn zero_residual_clamps_to_floor() {
        let diag = SubsetDiagnostics::WeightedLs {
            residual: 0.0,
            mean_range: 50.0,
            subset_size: 4,
            degenerate: false,
        };
        let sigma = subset_uncertainty(&diag, None, 1.0, 1.0);
        assert_eq!(sigma.x, 1.0);
    }
}
