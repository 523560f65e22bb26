//! Exact near-duplicate search over simhash fingerprints.
//!
//! Fingerprint bits are split into B bands; any pair within Hamming distance
//! k <= B-1 agrees exactly on at least one band (pigeonhole), so band-bucket
//! collisions enumerate a candidate superset. Candidates are verified by
//! exact Hamming distance, clusters are connected components of verified
//! pairs, and every cluster keeps only its minimal-order_key member.

use std::collections::{BTreeSet, HashMap};

use crate::dedup::simhash::SimHashSignature;
use crate::error::{Error, Result};

pub struct BandedIndex {
    bands: Vec<(u32, u32)>, // (shift, width) per band
    tables: Vec<HashMap<u64, Vec<usize>>>,
    radius: u32,
}

impl BandedIndex {
    pub fn new(bands: usize, radius: u32) -> Result<Self> {
        if bands == 0 || (bands as u32) < radius + 1 || bands > 64 {
            return Err(Error::InvalidBanding { bands, radius });
        }
        // Distribute 64 bits as evenly as possible across the bands.
        let base = 64 / bands as u32;
        let extra = 64 % bands as u32;
        let mut layout = Vec::with_capacity(bands);
        let mut shift = 0;
        for b in 0..bands as u32 {
            let width = base + u32::from(b < extra);
            layout.push((shift, width));
            shift += width;
        }
        Ok(Self {
            bands: layout,
            tables: vec![HashMap::new(); bands],
            radius,
        })
    }

    fn band_key(&self, fingerprint: u64, band: usize) -> u64 {
        let (shift, width) = self.bands[band];
        let mask = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
        (fingerprint >> shift) & mask
    }

    pub fn insert(&mut self, idx: usize, fingerprint: u64) {
        for band in 0..self.bands.len() {
            let key = self.band_key(fingerprint, band);
            self.tables[band].entry(key).or_default().push(idx);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Indices into the input signature slice, sorted by order_key.
    pub members: Vec<usize>,
    /// The member kept (minimal order_key).
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NearDedupResult {
    /// Indices of removed signatures.
    pub removed: BTreeSet<usize>,
    /// Non-trivial clusters (size >= 2).
    pub clusters: Vec<Cluster>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Find every pair within Hamming distance `radius` (guaranteed complete for
/// `bands >= radius + 1`) and remove all but the first member of each
/// connected component.
pub fn near_dedup(
    sigs: &[SimHashSignature],
    radius: u32,
    bands: usize,
) -> Result<NearDedupResult> {
    let mut index = BandedIndex::new(bands, radius)?;
    for (i, sig) in sigs.iter().enumerate() {
        index.insert(i, sig.fingerprint);
    }

    let mut uf = UnionFind::new(sigs.len());
    for table in &index.tables {
        for bucket in table.values() {
            for (pos, &a) in bucket.iter().enumerate() {
                for &b in &bucket[pos + 1..] {
                    if sigs[a].hamming(&sigs[b]) <= index.radius {
                        uf.union(a, b);
                    }
                }
            }
        }
    }

    let mut components: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..sigs.len() {
        let root = uf.find(i);
        components.entry(root).or_default().push(i);
    }

    let mut removed = BTreeSet::new();
    let mut clusters = Vec::new();
    let mut roots: Vec<_> = components.into_iter().collect();
    roots.sort_by_key(|(root, _)| *root);
    for (_, mut members) in roots {
        if members.len() < 2 {
            continue;
        }
        members.sort_by_key(|&i| sigs[i].order_key);
        let kept = members[0];
        for &m in &members[1..] {
            removed.insert(m);
        }
        clusters.push(Cluster { members, kept });
    }
    clusters.sort_by_key(|c| sigs[c.kept].order_key);
    Ok(NearDedupResult { removed, clusters })
}

/// O(n²) reference used by tests and the acceptance suite.
pub fn brute_force_removal(sigs: &[SimHashSignature], radius: u32) -> BTreeSet<usize> {
    let mut uf = UnionFind::new(sigs.len());
    for a in 0..sigs.len() {
        for b in a + 1..sigs.len() {
            if sigs[a].hamming(&sigs[b]) <= radius {
                uf.union(a, b);
            }
        }
    }
    let mut best: HashMap<usize, usize> = HashMap::new();
    for i in 0..sigs.len() {
        let root = uf.find(i);
        best.entry(root)
            .and_modify(|b| {
                if sigs[i].order_key < sigs[*b].order_key {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    (0..sigs.len())
        .filter(|&i| {
            let root = uf.find(i);
            best[&root] != i
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::OrderKey;
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    fn sig(id: &str, fingerprint: u64, record: u64) -> SimHashSignature {
        SimHashSignature {
            fingerprint,
            id: id.into(),
            order_key: OrderKey::new(0, record),
        }
    }

    #[test]
    fn pair_within_radius_removes_the_later_one() {
        let sigs = vec![sig("a", 0b1111, 0), sig("b", 0b1000, 1)];
        let r = near_dedup(&sigs, 3, 4).unwrap();
        assert_eq!(r.removed, BTreeSet::from([1]));
        assert_eq!(r.clusters.len(), 1);
        assert_eq!(r.clusters[0].kept, 0);
    }

    #[test]
    fn pair_just_outside_radius_is_kept() {
        let sigs = vec![sig("a", 0b1111, 0), sig("b", 0b0000, 1)];
        let r = near_dedup(&sigs, 3, 4).unwrap();
        assert!(r.removed.is_empty());
        assert!(r.clusters.is_empty());
    }

    #[test]
    fn invalid_banding_rejected() {
        let sigs = vec![sig("a", 0, 0)];
        assert!(matches!(
            near_dedup(&sigs, 4, 4),
            Err(Error::InvalidBanding { .. })
        ));
        assert!(near_dedup(&sigs, 3, 4).is_ok());
    }

    #[test]
    fn matches_brute_force_on_random_signatures() {
        let mut rng = StdRng::seed_from_u64(99);
        let sigs: Vec<_> = (0..500)
            .map(|i| sig(&format!("s{i}"), rng.random(), i))
            .collect();
        let fast = near_dedup(&sigs, 3, 4).unwrap();
        assert_eq!(fast.removed, brute_force_removal(&sigs, 3));
    }

    #[test]
    fn order_of_input_does_not_matter() {
        let mut rng = StdRng::seed_from_u64(5);
        let mut sigs: Vec<_> = (0..200)
            .map(|i| sig(&format!("s{i}"), rng.random::<u64>() & 0xFF, i))
            .collect();
        let ids = |r: &NearDedupResult, sigs: &[SimHashSignature]| -> BTreeSet<String> {
            r.removed.iter().map(|&i| sigs[i].id.clone()).collect()
        };
        let before = ids(&near_dedup(&sigs, 3, 4).unwrap(), &sigs);
        sigs.reverse();
        let after = ids(&near_dedup(&sigs, 3, 4).unwrap(), &sigs);
        assert_eq!(before, after);
    }
}
