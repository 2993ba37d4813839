//! Anchor subset enumeration, sampling, and per-subset evaluation.

use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::Vector3;
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::EnuPoint;
use crate::solve::{
    compute_dop, fingerprint_position, solve_geoip, solve_gnss_ls, solve_range_ls,
    solve_weighted_ls, FingerprintDb, PathLossModel, SolverConfig,
};
use crate::types::{Infrastructure, ValueKind};

/// One anchor subset of one infrastructure.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub infrastructure: Infrastructure,
    /// Member anchor ids, sorted.
    pub members: Vec<String>,
    /// Subset index within this infrastructure's enumeration.
    pub index: usize,
}

impl SubsetSpec {
    /// Stable identity across epochs: the infrastructure plus the member set.
    pub fn key(&self) -> (Infrastructure, Vec<String>) {
        (self.infrastructure, self.members.clone())
    }
}

/// Solver-specific diagnostics carried alongside a subset estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SubsetDiagnostics {
    Gnss {
        clock_bias: f64,
        residuals: Vec<f64>,
        /// (σx, σy, σz, σt) from the design-matrix covariance.
        dop: [f64; 4],
        spatial_dop: f64,
    },
    WeightedLs {
        residual: f64,
        mean_range: f64,
        subset_size: usize,
        degenerate: bool,
    },
    Geoip {
        residual: f64,
        mean_range: f64,
        subset_size: usize,
        fallback: bool,
        resolution: f64,
    },
    Fingerprint {
        scores: Vec<f64>,
        subset_size: usize,
        d_min: f64,
    },
    RangeLs {
        residual: f64,
        subset_size: usize,
        degenerate: bool,
    },
}

/// A temporary position estimate from one subset of one infrastructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetEstimate {
    pub spec: SubsetSpec,
    pub position: EnuPoint,
    /// Per-axis standard deviation in meters, strictly positive.
    pub uncertainty: [f64; 3],
    pub diagnostics: SubsetDiagnostics,
}

impl SubsetEstimate {
    pub fn uncertainty_vector(&self) -> Vector3<f64> {
        Vector3::new(
            self.uncertainty[0],
            self.uncertainty[1],
            self.uncertainty[2],
        )
    }
}

/// Minimum subset size able to produce a position fix.
pub fn min_subset_size(infra: Infrastructure) -> usize {
    match infra {
        // Position (3D) plus receiver clock.
        Infrastructure::Gnss => 4,
        // Trilateration from RSSI or RTT ranges.
        _ => 3,
    }
}

/// Number of subsets of `j` anchors: `Σ_{i=min}^{j} C(j, i)`.
pub fn subset_count(j: usize, infra: Infrastructure) -> BigUint {
    let min = min_subset_size(infra);
    let mut total = BigUint::ZERO;
    for i in min..=j {
        total += crate::theory::binomial(j as u64, i as u64);
    }
    total
}

/// Enumerate all subsets of sizes `min_subset_size(infra)..=|ids|`.
///
/// Sizes ascend; within a size, member combinations follow lexicographic
/// order of the sorted ids. Indices record that order.
pub fn enumerate_subsets(anchor_ids: &[String], infra: Infrastructure) -> Result<Vec<SubsetSpec>> {
    let mut specs = Vec::new();
    for_each_subset(anchor_ids, infra, |members, index| {
        specs.push(SubsetSpec {
            infrastructure: infra,
            members,
            index,
        });
        true
    })?;
    Ok(specs)
}

/// Visit subsets in enumeration order without materializing them; the visitor
/// returns `false` to stop early.
fn for_each_subset(
    anchor_ids: &[String],
    infra: Infrastructure,
    mut visit: impl FnMut(Vec<String>, usize) -> bool,
) -> Result<()> {
    let min = min_subset_size(infra);
    if anchor_ids.len() < min {
        return Err(Error::InsufficientData(format!(
            "{infra} needs >= {min} anchors, got {}",
            anchor_ids.len()
        )));
    }
    let mut ids: Vec<String> = anchor_ids.to_vec();
    ids.sort();
    let mut index = 0usize;
    for size in min..=ids.len() {
        for combo in ids.iter().combinations(size) {
            let members: Vec<String> = combo.into_iter().cloned().collect();
            if !visit(members, index) {
                return Ok(());
            }
            index += 1;
        }
    }
    Ok(())
}

/// Keep each subset independently with probability `rate`.
///
/// Deterministic for a fixed seed. One uniform draw is consumed per subset in
/// enumeration order, so the selection at a lower rate is a subset of the
/// selection at any higher rate under the same seed. If the draw empties the
/// list, the smallest-index subset is forced back in.
pub fn sample_uniform(specs: Vec<SubsetSpec>, rate: f64, seed: u64) -> Vec<SubsetSpec> {
    assert!(rate > 0.0, "sampling rate must be positive");
    if rate >= 1.0 || specs.is_empty() {
        return specs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = specs.first().cloned();
    let kept: Vec<SubsetSpec> = specs
        .into_iter()
        .filter(|_| rng.random::<f64>() < rate)
        .collect();
    if kept.is_empty() {
        vec![first.expect("non-empty specs")]
    } else {
        kept
    }
}

/// Sampling strategy for subset generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    Uniform,
    GreedyDop,
}

/// Subset generation controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubsetConfig {
    pub strategy: SamplingStrategy,
    /// Uniform keep probability in (0, 1].
    pub sampling_rate: f64,
    /// Hard cap on subsets per infrastructure per epoch; enumeration beyond
    /// this switches to uniform sampling at rate cap/total.
    pub max_subsets: usize,
    /// Spatial-DOP threshold for the greedy strategy.
    pub dop_threshold: f64,
    pub seed: u64,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        SubsetConfig {
            strategy: SamplingStrategy::Uniform,
            sampling_rate: 1.0,
            max_subsets: 512,
            dop_threshold: 3.0,
            seed: 0,
        }
    }
}

/// Generate the subset specs for one infrastructure at one epoch, applying
/// the sampling strategy and the hard cap.
pub fn generate_subsets(
    anchor_ids: &[String],
    infra: Infrastructure,
    gnss_anchors: Option<&BTreeMap<String, EnuPoint>>,
    reference: EnuPoint,
    cfg: &SubsetConfig,
) -> Result<Vec<SubsetSpec>> {
    if cfg.strategy == SamplingStrategy::GreedyDop && infra == Infrastructure::Gnss {
        if let Some(anchors) = gnss_anchors {
            let sats: Vec<(String, EnuPoint)> = {
                let mut ids: Vec<String> = anchor_ids.to_vec();
                ids.sort();
                ids.into_iter()
                    .filter_map(|id| anchors.get(&id).map(|p| (id, *p)))
                    .collect()
            };
            return Ok(greedy_dop_expansion(&sats, reference, cfg.dop_threshold)?.subsets);
        }
    }

    let total = subset_count(anchor_ids.len(), infra);
    let cap = BigUint::from(cfg.max_subsets.max(1));
    let mut rate = cfg.sampling_rate;
    if total > cap {
        let cap_rate = cfg.max_subsets as f64 / big_to_f64(&total);
        rate = rate.min(cap_rate);
    }

    if rate >= 1.0 {
        return enumerate_subsets(anchor_ids, infra);
    }

    // Stream the enumeration through a Bernoulli filter so a capped epoch
    // never materializes the full combination set.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut kept: Vec<SubsetSpec> = Vec::new();
    let mut first: Option<SubsetSpec> = None;
    for_each_subset(anchor_ids, infra, |members, index| {
        let spec = SubsetSpec {
            infrastructure: infra,
            members,
            index,
        };
        if first.is_none() {
            first = Some(spec.clone());
        }
        if rng.random::<f64>() < rate {
            kept.push(spec);
        }
        true
    })?;
    if kept.is_empty() {
        kept.push(first.expect("at least one subset exists"));
    }
    Ok(kept)
}

fn big_to_f64(v: &BigUint) -> f64 {
    v.to_string().parse::<f64>().unwrap_or(f64::MAX)
}

/// Result of greedy DOP partitioning.
#[derive(Debug, Clone)]
pub struct GreedyDopResult {
    pub subsets: Vec<SubsetSpec>,
    /// Set when no 4-subset met the threshold and the best one was returned
    /// anyway.
    pub best_effort: bool,
}

/// Partition satellites into subsets by greedy DOP expansion.
///
/// Each pass seeds with the 4-subset of the remaining satellites that has the
/// smallest spatial DOP (relative to `reference`), then repeatedly adds the
/// remaining satellite that keeps the spatial DOP smallest, as long as the
/// result stays at or below `threshold`. Passes repeat on the leftovers until
/// fewer than four remain. If the best seed already exceeds the threshold it
/// is returned alone with `best_effort` set.
pub fn greedy_dop_expansion(
    satellites: &[(String, EnuPoint)],
    reference: EnuPoint,
    threshold: f64,
) -> Result<GreedyDopResult> {
    if satellites.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "greedy DOP expansion needs >= 4 satellites, got {}",
            satellites.len()
        )));
    }
    let mut remaining: Vec<(String, EnuPoint)> = satellites.to_vec();
    remaining.sort_by(|a, b| a.0.cmp(&b.0));

    let mut subsets = Vec::new();
    let mut best_effort = false;
    let mut index = 0usize;

    while remaining.len() >= 4 {
        let (mut current, seed_dop) = match best_seed(&remaining, reference) {
            Some(x) => x,
            None => break, // every 4-combination was singular
        };
        if seed_dop > threshold {
            best_effort = true;
            subsets.push(make_spec(&remaining, &current, index));
            break;
        }
        loop {
            let mut best: Option<(usize, f64)> = None;
            for cand in 0..remaining.len() {
                if current.contains(&cand) {
                    continue;
                }
                let mut trial = current.clone();
                trial.push(cand);
                if let Some(d) = spatial_dop_of(&remaining, &trial, reference) {
                    if d <= threshold && best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((cand, d));
                    }
                }
            }
            match best {
                Some((cand, _)) => current.push(cand),
                None => break,
            }
        }
        subsets.push(make_spec(&remaining, &current, index));
        index += 1;
        let mut chosen: Vec<usize> = current;
        chosen.sort_unstable_by(|a, b| b.cmp(a));
        for i in chosen {
            remaining.remove(i);
        }
    }

    if subsets.is_empty() {
        return Err(Error::SingularGeometry(
            "no non-singular 4-subset available".into(),
        ));
    }
    Ok(GreedyDopResult {
        subsets,
        best_effort,
    })
}

fn make_spec(pool: &[(String, EnuPoint)], chosen: &[usize], index: usize) -> SubsetSpec {
    let mut members: Vec<String> = chosen.iter().map(|&i| pool[i].0.clone()).collect();
    members.sort();
    SubsetSpec {
        infrastructure: Infrastructure::Gnss,
        members,
        index,
    }
}

fn best_seed(pool: &[(String, EnuPoint)], reference: EnuPoint) -> Option<(Vec<usize>, f64)> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for combo in (0..pool.len()).combinations(4) {
        if let Some(d) = spatial_dop_of(pool, &combo, reference) {
            if best.as_ref().map_or(true, |(_, bd)| d < *bd) {
                best = Some((combo, d));
            }
        }
    }
    best
}

fn spatial_dop_of(pool: &[(String, EnuPoint)], chosen: &[usize], reference: EnuPoint) -> Option<f64> {
    let rows: Vec<[f64; 4]> = chosen
        .iter()
        .map(|&i| {
            let delta = reference.to_vector() - pool[i].1.to_vector();
            let unit = delta / delta.norm();
            [unit.x, unit.y, unit.z, 1.0]
        })
        .collect();
    compute_dop(&rows).ok().map(|d| d.spatial())
}

/// Why a subset produced no estimate at an epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSubset {
    pub spec: SubsetSpec,
    pub reason: String,
}

/// The measurements of one infrastructure at one epoch, resolved to anchors.
#[derive(Debug, Clone, Default)]
pub struct InfraObservations {
    /// anchor id → (anchor ENU position, measurement value, value kind).
    pub by_anchor: BTreeMap<String, (EnuPoint, f64, ValueKind)>,
}

/// Which solver terrestrial RSSI subsets go through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrestrialSolver {
    /// Inverse-range weighted least squares (geolocation-API style).
    WeightedLs,
    /// Exact range multilateration; used by the idealized recovery analysis.
    RangeLs,
}

/// Everything `evaluate_subsets` needs besides the observations.
#[derive(Debug, Clone)]
pub struct EvaluateConfig {
    pub solver: SolverConfig,
    /// Path loss per infrastructure; infrastructures not listed fall back to
    /// the model default.
    pub path_loss: BTreeMap<Infrastructure, PathLossModel>,
    /// Altitude the planar solvers fix, in ENU meters.
    pub fixed_up: f64,
    pub terrestrial_solver: TerrestrialSolver,
    /// Optional fingerprint databases per infrastructure with (K, d_min).
    pub fingerprints: BTreeMap<Infrastructure, (FingerprintDb, usize, f64)>,
    /// Uncertainty floor, meters.
    pub sigma_min: f64,
    /// GNSS unit range error multiplying the spatial DOP, meters.
    pub sigma_range: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            solver: SolverConfig::default(),
            path_loss: BTreeMap::new(),
            fixed_up: 0.0,
            terrestrial_solver: TerrestrialSolver::WeightedLs,
            fingerprints: BTreeMap::new(),
            sigma_min: 1.0,
            sigma_range: 1.0,
        }
    }
}

impl EvaluateConfig {
    pub fn path_loss_for(&self, infra: Infrastructure) -> PathLossModel {
        self.path_loss.get(&infra).copied().unwrap_or_default()
    }
}

/// Evaluate subset specs against one infrastructure's observations.
///
/// Failed solves are dropped with a reason and never abort the epoch. Each
/// estimate carries the uncertainty assigned by the fusion rules.
pub fn evaluate_subsets(
    infra: Infrastructure,
    observations: &InfraObservations,
    specs: &[SubsetSpec],
    cfg: &EvaluateConfig,
) -> (Vec<SubsetEstimate>, Vec<DroppedSubset>) {
    let mut estimates = Vec::new();
    let mut dropped = Vec::new();

    'spec: for spec in specs {
        let mut resolved: Vec<(&str, EnuPoint, f64, ValueKind)> = Vec::new();
        for id in &spec.members {
            match observations.by_anchor.get(id) {
                Some((pos, value, kind)) => resolved.push((id, *pos, *value, *kind)),
                None => {
                    dropped.push(DroppedSubset {
                        spec: spec.clone(),
                        reason: format!("missing measurement for anchor {id}"),
                    });
                    continue 'spec;
                }
            }
        }

        let outcome = solve_one(infra, spec, &resolved, cfg);
        match outcome {
            Ok(estimate) => estimates.push(estimate),
            Err(e) => dropped.push(DroppedSubset {
                spec: spec.clone(),
                reason: e.to_string(),
            }),
        }
    }
    (estimates, dropped)
}

fn solve_one(
    infra: Infrastructure,
    spec: &SubsetSpec,
    resolved: &[(&str, EnuPoint, f64, ValueKind)],
    cfg: &EvaluateConfig,
) -> Result<SubsetEstimate> {
    match infra {
        Infrastructure::Gnss => {
            let obs: Vec<(EnuPoint, f64)> =
                resolved.iter().map(|(_, p, v, _)| (*p, *v)).collect();
            let sol = solve_gnss_ls(&obs, &cfg.solver)?;
            let diagnostics = SubsetDiagnostics::Gnss {
                clock_bias: sol.clock_bias,
                residuals: sol.residuals.clone(),
                dop: [
                    sol.dop.sigma_x,
                    sol.dop.sigma_y,
                    sol.dop.sigma_z,
                    sol.dop.sigma_t,
                ],
                spatial_dop: sol.dop.spatial(),
            };
            Ok(finish_estimate(spec, sol.position, diagnostics, cfg))
        }
        Infrastructure::Geoip => {
            let circles: Vec<(EnuPoint, f64)> =
                resolved.iter().map(|(_, p, v, _)| (*p, *v)).collect();
            let mean_range =
                circles.iter().map(|(_, r)| r).sum::<f64>() / circles.len() as f64;
            let sol = solve_geoip(&circles, cfg.fixed_up, &cfg.solver)?;
            let diagnostics = SubsetDiagnostics::Geoip {
                residual: sol.residual,
                mean_range,
                subset_size: spec.members.len(),
                fallback: sol.fallback,
                resolution: sol.resolution,
            };
            Ok(finish_estimate(spec, sol.position, diagnostics, cfg))
        }
        Infrastructure::Wifi | Infrastructure::Cell | Infrastructure::Bluetooth => {
            if let Some((db, k, d_min)) = cfg.fingerprints.get(&infra) {
                let query: BTreeMap<String, f64> = resolved
                    .iter()
                    .filter(|(_, _, _, kind)| *kind == ValueKind::Rssi)
                    .map(|(id, _, v, _)| (id.to_string(), *v))
                    .collect();
                let subset = spec.members.iter().cloned().collect();
                let (position, scores) =
                    fingerprint_position(&query, &subset, db, *k, *d_min)?;
                let diagnostics = SubsetDiagnostics::Fingerprint {
                    scores,
                    subset_size: spec.members.len(),
                    d_min: *d_min,
                };
                return Ok(finish_estimate(spec, position, diagnostics, cfg));
            }

            let model = cfg.path_loss_for(infra);
            let ranges: Vec<(EnuPoint, f64)> = resolved
                .iter()
                .map(|(_, p, v, kind)| {
                    let range = match kind {
                        ValueKind::Rssi => model.rssi_to_range(*v),
                        _ => *v,
                    };
                    (*p, range)
                })
                .collect();
            let mean_range = ranges.iter().map(|(_, r)| r).sum::<f64>() / ranges.len() as f64;
            match cfg.terrestrial_solver {
                TerrestrialSolver::WeightedLs => {
                    let sol = solve_weighted_ls(&ranges, cfg.fixed_up)?;
                    let diagnostics = SubsetDiagnostics::WeightedLs {
                        residual: sol.residual,
                        mean_range,
                        subset_size: spec.members.len(),
                        degenerate: sol.degenerate,
                    };
                    Ok(finish_estimate(spec, sol.position, diagnostics, cfg))
                }
                TerrestrialSolver::RangeLs => {
                    let sol = solve_range_ls(&ranges, cfg.fixed_up, &cfg.solver)?;
                    let diagnostics = SubsetDiagnostics::RangeLs {
                        residual: sol.residual,
                        subset_size: spec.members.len(),
                        degenerate: sol.degenerate,
                    };
                    Ok(finish_estimate(spec, sol.position, diagnostics, cfg))
                }
            }
        }
    }
}

fn finish_estimate(
    spec: &SubsetSpec,
    position: EnuPoint,
    diagnostics: SubsetDiagnostics,
    cfg: &EvaluateConfig,
) -> SubsetEstimate {
    let sigma = crate::fusion::subset_uncertainty(&diagnostics, None, cfg.sigma_min, cfg.sigma_range);
    SubsetEstimate {
        spec: spec.clone(),
        position,
        uncertainty: [sigma.x, sigma.y, sigma.z],
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("a{i:02}")).collect()
    }

    #[test]
    fn min_sizes() {
        assert_eq!(min_subset_size(Infrastructure::Gnss), 4);
        assert_eq!(min_subset_size(Infrastructure::Wifi), 3);
        assert_eq!(min_subset_size(Infrastructure::Geoip), 3);
        assert_eq!(min_subset_size(Infrastructure::Cell), 3);
        assert_eq!(min_subset_size(Infrastructure::Bluetooth), 3);
    }

    #[test]
    fn boundary_enumeration() {
        let specs = enumerate_subsets(&ids(4), Infrastructure::Gnss).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].members.len(), 4);
    }

    #[test]
    fn six_gnss_anchors_give_22_subsets() {
        let specs = enumerate_subsets(&ids(6), Infrastructure::Gnss).unwrap();
        assert_eq!(specs.len(), 22);
        // Indices are consecutive in enumeration order.
        for (i, s) in specs.iter().enumerate() {
            assert_eq!(s.index, i);
        }
    }

    #[test]
    fn eight_wifi_anchors_give_219_subsets() {
        let specs = enumerate_subsets(&ids(8), Infrastructure::Wifi).unwrap();
        assert_eq!(specs.len(), 219);
        assert_eq!(
            subset_count(8, Infrastructure::Wifi),
            BigUint::from(219u32)
        );
    }

    #[test]
    fn too_few_anchors_error() {
        assert!(matches!(
            enumerate_subsets(&ids(3), Infrastructure::Gnss),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn sample_rate_one_is_identity() {
        let specs = enumerate_subsets(&ids(6), Infrastructure::Wifi).unwrap();
        let sampled = sample_uniform(specs.clone(), 1.0, 7);
        assert_eq!(sampled, specs);
    }

    #[test]
    fn sample_tiny_rate_forces_first_subset() {
        let specs = enumerate_subsets(&ids(6), Infrastructure::Wifi).unwrap();
        let first = specs[0].clone();
        let sampled = sample_uniform(specs, 1e-12, 7);
        assert_eq!(sampled, vec![first]);
    }

    #[test]
    fn sampling_is_deterministic_and_nested() {
        let specs = enumerate_subsets(&ids(8), Infrastructure::Wifi).unwrap();
        let a = sample_uniform(specs.clone(), 0.5, 42);
        let b = sample_uniform(specs.clone(), 0.5, 42);
        assert_eq!(a, b);
        let low = sample_uniform(specs.clone(), 0.25, 42);
        let high = sample_uniform(specs, 0.75, 42);
        for s in &low {
            assert!(high.contains(s), "nested sampling violated");
        }
    }

    #[test]
    fn cap_switches_to_sampling() {
        let cfg = SubsetConfig {
            max_subsets: 64,
            ..SubsetConfig::default()
        };
        let specs = generate_subsets(&ids(10), Infrastructure::Wifi, None, EnuPoint::new(0.0, 0.0, 0.0), &cfg)
            .unwrap();
        // 968 total; the cap samples down to roughly 64.
        assert!(!specs.is_empty());
        assert!(specs.len() < 200, "cap not applied: {}", specs.len());
        let full = enumerate_subsets(&ids(10), Infrastructure::Wifi).unwrap();
        for s in &specs {
            assert!(full.contains(s));
        }
    }
}
