//! Closed-form recoverability and detectability conditions, plus a
//! brute-force idealized simulation oracle that validates them.

use itertools::Itertools;
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::EnuPoint;
use crate::fusion::{exclude_inconsistent, recover_position};
use crate::solve::{solve_gnss_ls, solve_range_ls, SolverConfig};
use crate::subsets::{SubsetDiagnostics, SubsetEstimate, SubsetSpec};
use crate::types::Infrastructure;

/// Anchor counts for one infrastructure: the positioning minimum, the total,
/// and the number under adversarial control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfraCounts {
    pub n_min: u32,
    pub n_anc: u32,
    pub n_adv: u32,
}

impl InfraCounts {
    pub fn new(n_min: u32, n_anc: u32, n_adv: u32) -> Result<Self> {
        if n_min == 0 {
            return Err(Error::InvalidArgument("n_min must be >= 1".into()));
        }
        if n_adv > n_anc {
            return Err(Error::InvalidArgument(format!(
                "n_adv {n_adv} exceeds n_anc {n_anc}"
            )));
        }
        Ok(InfraCounts { n_min, n_anc, n_adv })
    }

    /// Benign redundancy slack, `N_anc − N_adv − N_min`.
    pub fn slack(&self) -> i64 {
        self.n_anc as i64 - self.n_adv as i64 - self.n_min as i64
    }
}

/// Binomial coefficient over big integers; zero for k > n.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut result = BigUint::from(1u32);
    for i in 0..k {
        result = result * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    result
}

/// Number of all-benign position estimates:
/// `Σ_{i=N_min}^{N_anc−N_adv} C(N_anc−N_adv, i)`; zero when the upper bound
/// falls below the lower.
pub fn benign_subset_count(c: &InfraCounts) -> BigUint {
    let benign_anchors = c.n_anc - c.n_adv;
    let mut total = BigUint::ZERO;
    for i in c.n_min..=benign_anchors.max(0) {
        total += binomial(benign_anchors as u64, i as u64);
    }
    total
}

/// Number of valid spoofed position estimates:
/// `Σ_{i=1}^{N_adv} C(N_adv, i) · Σ_{j=N_min−i}^{N_min−1} C(N_anc−N_adv, j)`,
/// where terms with `j` outside `[1, N_anc−N_adv]` are zero (mixtures beyond
/// `N_min−1` benign members become overdetermined and detectable).
pub fn adversarial_subset_count(c: &InfraCounts) -> BigUint {
    let benign_anchors = (c.n_anc - c.n_adv) as i64;
    let mut total = BigUint::ZERO;
    for i in 1..=c.n_adv as i64 {
        let mut partners = BigUint::ZERO;
        for j in (c.n_min as i64 - i)..=(c.n_min as i64 - 1) {
            if j < 1 || j > benign_anchors {
                continue;
            }
            partners += binomial(benign_anchors as u64, j as u64);
        }
        total += binomial(c.n_adv as u64, i as u64) * partners;
    }
    total
}

/// Recoverability from uncoordinated spoofing: `N_anc − N_adv > N_min`.
pub fn check_lemma1(c: &InfraCounts) -> bool {
    c.slack() > 0
}

/// Detectability of uncoordinated spoofing: `N_anc − N_adv ≥ N_min`.
pub fn check_detectable(c: &InfraCounts) -> bool {
    c.slack() >= 0
}

/// Maximum benign members an adversarial subset can absorb undetected.
pub fn max_benign_in_adversarial(c: &InfraCounts) -> u32 {
    c.n_min - 1
}

/// Recoverability from coordinated spoofing: more benign than valid spoofed
/// position estimates.
pub fn check_lemma2(c: &InfraCounts) -> bool {
    benign_subset_count(c) > adversarial_subset_count(c)
}

/// Multi-infrastructure uncoordinated recoverability: at least two
/// infrastructures with zero slack, or any one with positive slack.
pub fn check_theorem1(counts: &[InfraCounts]) -> bool {
    let zero_slack = counts.iter().filter(|c| c.slack() == 0).count();
    zero_slack > 1 || counts.iter().any(|c| c.slack() > 0)
}

/// Multi-infrastructure coordinated recoverability: benign estimates
/// outnumber valid spoofed estimates, summed over infrastructures.
pub fn check_theorem2(counts: &[InfraCounts]) -> bool {
    let mut benign = BigUint::ZERO;
    let mut adversarial = BigUint::ZERO;
    for c in counts {
        benign += benign_subset_count(c);
        adversarial += adversarial_subset_count(c);
    }
    benign > adversarial
}

/// Attack class for the idealized oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleAttack {
    Uncoordinated,
    Coordinated,
}

/// Zero-noise recovery experiment.
///
/// Builds a random single-epoch instance matching `counts` (random geometry,
/// a shared truth, spoofed ranging per the attack class), evaluates every
/// subset with exact solvers and uniform unit uncertainties, runs the
/// recursive exclusion with `n_Λ = 0`, and reports whether the recovered
/// position lands within 1e-6 m of the truth.
///
/// Infrastructures with `n_min == 4` are modeled as GNSS (3-D plus a common
/// clock bias); `n_min == 3` as planar range multilateration. The method
/// bias of the production RSSI solvers is a positioning error, which the
/// idealization sets to zero.
pub fn idealized_recovery_oracle(
    counts: &[InfraCounts],
    attack: OracleAttack,
    seed: u64,
) -> Result<bool> {
    if counts.is_empty() || counts.len() > Infrastructure::ALL.len() {
        return Err(Error::InvalidArgument(format!(
            "oracle supports 1..=5 infrastructures, got {}",
            counts.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = EnuPoint::new(
        rng.random_range(-200.0..200.0),
        rng.random_range(-200.0..200.0),
        0.0,
    );
    let spoof_target = {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let radius: f64 = rng.random_range(200.0..1000.0);
        EnuPoint::new(
            truth.east + radius * theta.cos(),
            truth.north + radius * theta.sin(),
            0.0,
        )
    };

    let solver = SolverConfig::default();
    let mut estimates: Vec<SubsetEstimate> = Vec::new();

    // Distinct infrastructure tags keep per-infrastructure bookkeeping separate;
    // the solver choice follows n_min, not the tag.
    let gnss_like = |c: &InfraCounts| c.n_min == 4;
    let mut tags = Infrastructure::ALL.iter();

    for c in counts {
        if c.n_min != 3 && c.n_min != 4 {
            return Err(Error::InvalidArgument(format!(
                "oracle models n_min in {{3, 4}}, got {}",
                c.n_min
            )));
        }
        let tag = *tags.next().expect("checked counts.len() above");
        if c.n_anc < c.n_min {
            continue; // cannot position at all; contributes nothing
        }

        // Geometry.
        let anchors: Vec<EnuPoint> = if gnss_like(c) {
            (0..c.n_anc)
                .map(|_| {
                    let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let el: f64 = rng.random_range(0.3..1.4);
                    let r = 2.2e7;
                    EnuPoint::new(
                        r * el.cos() * az.sin(),
                        r * el.cos() * az.cos(),
                        r * el.sin(),
                    )
                })
                .collect()
        } else {
            (0..c.n_anc)
                .map(|_| {
                    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let radius: f64 = rng.random_range(100.0..600.0);
                    EnuPoint::new(radius * theta.cos(), radius * theta.sin(), 0.0)
                })
                .collect()
        };
        let clock_bias = if gnss_like(c) {
            rng.random_range(-100.0..100.0)
        } else {
            0.0
        };

        let mut indices: Vec<usize> = (0..c.n_anc as usize).collect();
        indices.shuffle(&mut rng);
        let adversarial: Vec<usize> = indices[..c.n_adv as usize].to_vec();

        // Ranging per anchor: benign anchors observe the truth, affected
        // anchors the spoof (coordinated) or an independent offset.
        let values: Vec<f64> = anchors
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let benign_value = truth.distance(*a) + clock_bias;
                if !adversarial.contains(&j) {
                    return benign_value;
                }
                match attack {
                    OracleAttack::Coordinated => spoof_target.distance(*a) + clock_bias,
                    OracleAttack::Uncoordinated => {
                        let magnitude: f64 = rng.random_range(100.0..400.0);
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        benign_value + sign * magnitude
                    }
                }
            })
            .collect();

        // Every subset of size n_min..=n_anc, exact solvers, unit sigma.
        let mut index = 0usize;
        for size in c.n_min as usize..=c.n_anc as usize {
            for combo in (0..c.n_anc as usize).combinations(size) {
                let obs: Vec<(EnuPoint, f64)> =
                    combo.iter().map(|&j| (anchors[j], values[j])).collect();
                let solved = if gnss_like(c) {
                    solve_gnss_ls(&obs, &solver).map(|s| s.position)
                } else {
                    solve_range_ls(&obs, 0.0, &solver).map(|s| s.position)
                };
                if let Ok(position) = solved {
                    estimates.push(SubsetEstimate {
                        spec: SubsetSpec {
                            infrastructure: tag,
                            members: combo.iter().map(|j| format!("{tag}-{j}")).collect(),
                            index,
                        },
                        position,
                        uncertainty: [1.0, 1.0, 1.0],
                        diagnostics: SubsetDiagnostics::RangeLs {
                            residual: 0.0,
                            subset_size: size,
                            degenerate: false,
                        },
                    });
                }
                index += 1;
            }
        }
    }

    if estimates.is_empty() {
        return Ok(false);
    }
    let exclusion = exclude_inconsistent(&estimates, 0.0)?;
    let recovered = recover_position(&estimates, &exclusion.benign);
    Ok(recovered.is_some_and(|p| p.distance(truth) < 1e-6))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(n_min: u32, n_anc: u32, n_adv: u32) -> InfraCounts {
        InfraCounts::new(n_min, n_anc, n_adv).unwrap()
    }

    #[test]
    fn benign_counts() {
        assert_eq!(benign_subset_count(&c(4, 8, 1)), BigUint::from(64u32));
        assert_eq!(benign_subset_count(&c(4, 8, 4)), BigUint::from(1u32));
        assert_eq!(benign_subset_count(&c(4, 8, 5)), BigUint::ZERO);
    }

    #[test]
    fn adversarial_counts() {
        assert_eq!(adversarial_subset_count(&c(4, 8, 1)), BigUint::from(35u32));
        // 2·C(6,3) + 1·(C(6,2)+C(6,3)) = 40 + 35.
        assert_eq!(adversarial_subset_count(&c(4, 8, 2)), BigUint::from(75u32));
        // No benign anchors left: every partner term is empty.
        assert_eq!(adversarial_subset_count(&c(4, 4, 4)), BigUint::ZERO);
    }

    #[test]
    fn lemma1_boundaries() {
        assert!(check_lemma1(&c(4, 8, 2)));
        assert!(!check_lemma1(&c(4, 5, 1)));
        assert!(check_lemma1(&c(4, 9, 4)));
    }

    #[test]
    fn detectability_boundaries() {
        assert!(check_detectable(&c(4, 5, 1)));
        assert!(!check_detectable(&c(4, 4, 1)));
        assert!(check_detectable(&c(4, 8, 4)));
    }

    #[test]
    fn max_benign_members() {
        assert_eq!(max_benign_in_adversarial(&c(4, 8, 2)), 3);
        assert_eq!(max_benign_in_adversarial(&c(3, 10, 2)), 2);
        assert_eq!(max_benign_in_adversarial(&c(1, 5, 1)), 0);
    }

    #[test]
    fn lemma2_cases() {
        assert!(check_lemma2(&c(4, 8, 1))); // 64 > 35
        assert!(!check_lemma2(&c(4, 8, 2))); // 22 < 75
        assert!(check_lemma2(&c(4, 12, 1)));
    }

    #[test]
    fn lemma1_implies_detectable() {
        for n_anc in 4..=12u32 {
            for n_adv in 0..=n_anc {
                let counts = c(4, n_anc, n_adv);
                if check_lemma1(&counts) {
                    assert!(check_detectable(&counts));
                }
            }
        }
    }

    #[test]
    fn theorem1_cases() {
        // Two infrastructures with exactly zero slack.
        assert!(check_theorem1(&[c(4, 8, 4), c(3, 6, 3)]));
        // A single zero-slack infrastructure is not enough.
        assert!(!check_theorem1(&[c(4, 8, 4)]));
        // Any positive slack suffices.
        assert!(check_theorem1(&[c(4, 9, 4)]));
    }

    #[test]
    fn theorem2_cases() {
        assert!(!check_theorem2(&[c(4, 8, 2)]));
        // Adding an untouched Wi-Fi (968 benign subsets) flips the balance.
        assert!(check_theorem2(&[c(4, 8, 2), c(3, 10, 0)]));
        // Everything compromised: zero benign subsets.
        assert!(!check_theorem2(&[c(4, 8, 8), c(3, 6, 6)]));
    }

    #[test]
    fn binomial_large_values() {
        // C(64, 32) overflows u64; the big-integer path must not.
        let v = binomial(64, 32);
        assert_eq!(v.to_string(), "1832624140942590534");
        assert_eq!(binomial(10, 11), BigUint::ZERO);
    }

    #[test]
    fn oracle_no_attack_recovers() {
        for seed in 0..5 {
            assert!(idealized_recovery_oracle(
                &[c(4, 6, 0), c(3, 5, 0)],
                OracleAttack::Coordinated,
                seed,
            )
            .unwrap());
        }
    }

    #[test]
    fn oracle_handles_unpositionable_infrastructure() {
        // One infrastructure below its minimum contributes nothing but the
        // other still recovers.
        assert!(idealized_recovery_oracle(
            &[c(4, 3, 0), c(3, 6, 0)],
            OracleAttack::Uncoordinated,
            9,
        )
        .unwrap());
    }
}
