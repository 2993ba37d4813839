//! RSSI fingerprint positioning.
//!
//! Scores a query against a pre-surveyed database with the reciprocal
//! absolute-difference similarity, restricted to the queried subset, and
//! returns the similarity-weighted average of the top-K matches.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geo::EnuPoint;

/// One surveyed fingerprint: the RSSI vector observed at a known position.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintEntry {
    pub rssi_dbm: BTreeMap<String, f64>,
    pub position: EnuPoint,
    pub time_ms: i64,
}

/// A pre-surveyed fingerprint database.
#[derive(Debug, Clone, Default)]
pub struct FingerprintDb {
    pub entries: Vec<FingerprintEntry>,
}

impl FingerprintDb {
    pub fn new(entries: Vec<FingerprintEntry>) -> Result<Self> {
        for e in &entries {
            if e.rssi_dbm.is_empty() {
                return Err(Error::InvalidArgument(
                    "fingerprint entries need at least one RSSI".into(),
                ));
            }
            if !e.position.is_finite() {
                return Err(Error::InvalidArgument(
                    "fingerprint entry has non-finite position".into(),
                ));
            }
        }
        Ok(FingerprintDb { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Similarity of `query` (restricted to `subset`) against one entry:
/// `Σ_{j ∈ subset} 1 / max(|q_j − e_j|, d_min)`, anchors missing from the
/// entry contribute nothing.
pub fn fingerprint_score(
    query: &BTreeMap<String, f64>,
    subset: &BTreeSet<String>,
    entry: &FingerprintEntry,
    d_min: f64,
) -> f64 {
    let mut score = 0.0;
    for id in subset {
        let (Some(q), Some(e)) = (query.get(id), entry.rssi_dbm.get(id)) else {
            continue;
        };
        score += 1.0 / (q - e).abs().max(d_min);
    }
    score
}

/// Top-K fingerprint positioning.
///
/// Returns the similarity-weighted average position of the K best entries and
/// their scores (descending, ties broken by database order).
pub fn fingerprint_position(
    query: &BTreeMap<String, f64>,
    subset: &BTreeSet<String>,
    db: &FingerprintDb,
    k: usize,
    d_min: f64,
) -> Result<(EnuPoint, Vec<f64>)> {
    if db.is_empty() {
        return Err(Error::InsufficientData("empty fingerprint database".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    if d_min <= 0.0 {
        return Err(Error::InvalidArgument("d_min must be positive".into()));
    }

    let mut scored: Vec<(usize, f64)> = db
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, fingerprint_score(query, subset, e, d_min)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);

    let total: f64 = scored.iter().map(|(_, s)| s).sum();
    if total <= 0.0 {
        return Err(Error::InsufficientData(
            "no overlap between query subset and database entries".into(),
        ));
    }
    let mut east = 0.0;
    let mut north = 0.0;
    let mut up = 0.0;
    for (i, s) in &scored {
        let p = db.entries[*i].position;
        east += s * p.east;
        north += s * p.north;
        up += s * p.up;
    }
    Ok((
        EnuPoint::new(east / total, north / total, up / total),
        scored.into_iter().map(|(_, s)| s).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(rssi: &[(&str, f64)], pos: EnuPoint) -> FingerprintEntry {
        FingerprintEntry {
            rssi_dbm: rssi.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            position: pos,
            time_ms: 0,
        }
    }

    fn as_map(rssi: &[(&str, f64)]) -> BTreeMap<String, f64> {
        rssi.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn exact_match_returns_stored_position() {
        let db = FingerprintDb::new(vec![
            entry(&[("a", -40.0), ("b", -55.0), ("c", -60.0)], EnuPoint::new(1.0, 2.0, 0.0)),
            entry(&[("a", -70.0), ("b", -72.0), ("c", -80.0)], EnuPoint::new(9.0, 9.0, 0.0)),
        ])
        .unwrap();
        let query = as_map(&[("a", -40.0), ("b", -55.0), ("c", -60.0)]);
        let subset: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let d_min = 0.5;
        let (pos, scores) = fingerprint_position(&query, &subset, &db, 1, d_min).unwrap();
        assert_eq!(pos, EnuPoint::new(1.0, 2.0, 0.0));
        // Exact match: every term is 1/d_min, so the score is |subset|/d_min.
        assert!((scores[0] - 3.0 / d_min).abs() < 1e-12);
    }

    #[test]
    fn equal_scores_give_midpoint() {
        // Two entries equidistant (in RSSI) from the query.
        let db = FingerprintDb::new(vec![
            entry(&[("a", -50.0)], EnuPoint::new(0.0, 0.0, 0.0)),
            entry(&[("a", -58.0)], EnuPoint::new(10.0, 4.0, 0.0)),
        ])
        .unwrap();
        let query = as_map(&[("a", -54.0)]);
        let subset: BTreeSet<String> = ["a".to_string()].into_iter().collect();
        let (pos, scores) = fingerprint_position(&query, &subset, &db, 2, 0.1).unwrap();
        assert!((scores[0] - scores[1]).abs() < 1e-12);
        assert!((pos.east - 5.0).abs() < 1e-12);
        assert!((pos.north - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_db_is_an_error() {
        let db = FingerprintDb::default();
        let query = as_map(&[("a", -54.0)]);
        let subset: BTreeSet<String> = ["a".to_string()].into_iter().collect();
        assert!(matches!(
            fingerprint_position(&query, &subset, &db, 1, 0.1),
            Err(Error::InsufficientData(_))
        ));
    }
}
