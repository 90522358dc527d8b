//! Indicator-vector geometry and neighbor-set partitioning.
//!
//! Sensors are compared through the binary indicators of their observable
//! supports: `mutual_influence` counts shared observable dimensions, and the
//! Grassmann distance between the spanned one-dimensional subspaces is the
//! angle `arccos(<a,b> / (|a||b|))`. For bit vectors the distance is zero
//! exactly when the indicators are identical, which is what the partitioning
//! strategies exploit.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::SensorNode;
use crate::scalar::Real;
use crate::SensorId;

/// What a partition strategy needs to know about a sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub id: SensorId,
    pub indicator: Vec<bool>,
    pub obs_rank: usize,
}

impl<T: Real> SensorNode<T> {
    pub fn signature(&self) -> Signature {
        Signature {
            id: self.id,
            indicator: self.indicator().to_vec(),
            obs_rank: self.obs_rank(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Grassmann,
    GrassmannImproved,
    MinMutual,
    Random,
    BalancedCardinality,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Grassmann => "grassmann",
            Strategy::GrassmannImproved => "grassmann_improved",
            Strategy::MinMutual => "min_mutual",
            Strategy::Random => "random",
            Strategy::BalancedCardinality => "balanced_cardinality",
        }
    }
}

/// A partition of a neighbor set into disjoint subsets, with provenance.
#[derive(Debug, Clone)]
pub struct PartitionResult {
    pub strategy: Strategy,
    /// Disjoint subsets; members ascending, subsets ordered by first member.
    pub subsets: Vec<Vec<SensorId>>,
    /// Number of Grassmann-distance computations performed while building.
    pub distance_evals: u64,
}

impl PartitionResult {
    pub fn subset_count(&self) -> usize {
        self.subsets.len()
    }

    pub fn member_count(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }

    /// Map each member id to its subset index.
    pub fn membership(&self) -> BTreeMap<SensorId, usize> {
        let mut map = BTreeMap::new();
        for (g, subset) in self.subsets.iter().enumerate() {
            for &id in subset {
                map.insert(id, g);
            }
        }
        map
    }

    fn canonicalize(&mut self) {
        for subset in &mut self.subsets {
            subset.sort_unstable();
        }
        self.subsets.sort_by_key(|s| s.first().copied());
    }
}

/// Inter-subset interaction counts and intra-subset correlations.
#[derive(Debug, Clone)]
pub struct InfluenceReport {
    /// `inter[g][q]`: number of cross pairs `(a in g, b in q)` whose
    /// indicators overlap without being identical. Diagonal entries are 0 by
    /// convention (left blank in the tables).
    pub inter: Vec<Vec<u64>>,
    /// `intra[g]`: fraction of ordered pairs inside `g` (diagonal included)
    /// with identical indicator vectors.
    pub intra: Vec<f64>,
}

/// Number of dimensions observed by both sensors (AND-popcount).
pub fn mutual_influence(a: &[bool], b: &[bool]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "mutual_influence",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| **x && **y).count())
}

/// Principal angle between the lines spanned by two indicator vectors, in
/// radians. The cosine is clamped into `[0, 1]` before `arccos` so rounding
/// cannot push the angle outside `[0, pi/2]`.
pub fn grassmann_distance<T: Real>(a: &[bool], b: &[bool]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "grassmann_distance",
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.iter().filter(|&&x| x).count();
    let nb = b.iter().filter(|&&x| x).count();
    if na == 0 || nb == 0 {
        return Err(Error::UndefinedSubspace);
    }
    let dot = mutual_influence(a, b)?;
    let cos = T::of_usize(dot) / (T::of_usize(na) * T::of_usize(nb)).sqrt();
    let cos = cos.clamp(T::zero(), T::one());
    Ok(cos.acos())
}

/// Approximately equal subset sizes: the first `count mod m` subsets get one
/// extra element.
pub fn balanced_cardinality(count: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > count {
        return Err(Error::InfeasiblePartition { count, m });
    }
    let base = count / m;
    let rem = count % m;
    Ok((0..m).map(|g| base + usize::from(g < rem)).collect())
}

fn sorted_refs(sensors: &[Signature]) -> Vec<&Signature> {
    let mut refs: Vec<&Signature> = sensors.iter().collect();
    refs.sort_by_key(|s| s.id);
    refs
}

/// Grassmann partitioning pass over one group of sensors, in id order.
///
/// Each sensor's distance to every earlier sensor is computed (that is the
/// cost model the counters report); membership is decided by the distance to
/// each existing subset's first member, joining the first subset at distance
/// exactly zero.
fn grassmann_pass(sensors: &[&Signature], evals: &mut u64) -> Vec<Vec<SensorId>> {
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    let mut rep_dist: Vec<f64> = Vec::new();
    for i in 0..sensors.len() {
        rep_dist.clear();
        rep_dist.resize(subsets.len(), f64::NAN);
        for j in 0..i {
            let d: f64 = grassmann_distance(&sensors[i].indicator, &sensors[j].indicator)
                .expect("nonzero indicators checked by caller");
            *evals += 1;
            for (g, subset) in subsets.iter().enumerate() {
                if subset[0] == j {
                    rep_dist[g] = d;
                }
            }
        }
        match rep_dist.iter().position(|&d| d == 0.0) {
            Some(g) => subsets[g].push(i),
            None => subsets.push(vec![i]),
        }
    }
    subsets
        .into_iter()
        .map(|s| s.into_iter().map(|i| sensors[i].id).collect())
        .collect()
}

fn check_nonzero(sensors: &[Signature]) -> Result<()> {
    for s in sensors {
        if !s.indicator.iter().any(|&b| b) {
            return Err(Error::UndefinedSubspace);
        }
    }
    Ok(())
}

/// Partition by Grassmann distance: scan in id order, join the first subset
/// whose representative is at distance zero, otherwise open a new subset.
pub fn partition_grassmann(sensors: &[Signature]) -> Result<PartitionResult> {
    check_nonzero(sensors)?;
    let refs = sorted_refs(sensors);
    let mut evals = 0;
    let subsets = grassmann_pass(&refs, &mut evals);
    let mut result = PartitionResult {
        strategy: Strategy::Grassmann,
        subsets,
        distance_evals: evals,
    };
    result.canonicalize();
    Ok(result)
}

/// Grassmann partitioning restricted to groups of equal observable rank:
/// sensors are first keyed by `rank(Q_{j,o})` and the scan runs inside each
/// rank group, so only intra-group distances are ever computed.
pub fn partition_grassmann_improved(sensors: &[Signature]) -> Result<PartitionResult> {
    check_nonzero(sensors)?;
    let mut groups: BTreeMap<usize, Vec<&Signature>> = BTreeMap::new();
    for s in sensors {
        groups.entry(s.obs_rank).or_default().push(s);
    }
    let mut evals = 0;
    let mut subsets = Vec::new();
    for group in groups.values_mut() {
        group.sort_by_key(|s| s.id);
        subsets.extend(grassmann_pass(group, &mut evals));
    }
    let mut result = PartitionResult {
        strategy: Strategy::GrassmannImproved,
        subsets,
        distance_evals: evals,
    };
    result.canonicalize();
    Ok(result)
}

/// Connected components of the "observable spaces overlap" graph: sensors
/// with any shared observable dimension end up in the same subset, so the
/// inter-subset gain influence is zero by construction.
pub fn partition_min_mutual(sensors: &[Signature]) -> Result<PartitionResult> {
    check_nonzero(sensors)?;
    let refs = sorted_refs(sensors);
    let n = refs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if mutual_influence(&refs[i].indicator, &refs[j].indicator)? > 0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<SensorId>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(refs[i].id);
    }
    let mut result = PartitionResult {
        strategy: Strategy::MinMutual,
        subsets: components.into_values().collect(),
        distance_evals: 0,
    };
    result.canonicalize();
    Ok(result)
}

/// Uniformly random assignment into `m` subsets of balanced cardinality.
pub fn partition_random<R: Rng + ?Sized>(
    ids: &[SensorId],
    m: usize,
    rng: &mut R,
) -> Result<PartitionResult> {
    let sizes = balanced_cardinality(ids.len(), m)?;
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(rng);
    let mut subsets = Vec::with_capacity(m);
    let mut start = 0;
    for size in sizes {
        subsets.push(shuffled[start..start + size].to_vec());
        start += size;
    }
    let mut result = PartitionResult {
        strategy: Strategy::Random,
        subsets,
        distance_evals: 0,
    };
    result.canonicalize();
    Ok(result)
}

/// Contiguous id-ordered chunks of balanced cardinality.
pub fn partition_balanced(ids: &[SensorId], m: usize) -> Result<PartitionResult> {
    let sizes = balanced_cardinality(ids.len(), m)?;
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut subsets = Vec::with_capacity(m);
    let mut start = 0;
    for size in sizes {
        subsets.push(sorted[start..start + size].to_vec());
        start += size;
    }
    Ok(PartitionResult {
        strategy: Strategy::BalancedCardinality,
        subsets,
        distance_evals: 0,
    })
}

/// Inter-subset interaction (cross pairs that overlap without being
/// identical) and intra-subset correlation (fraction of ordered pairs with
/// identical indicators, diagonal included).
pub fn influence_report(
    partition: &PartitionResult,
    sensors: &[Signature],
) -> Result<InfluenceReport> {
    let by_id: BTreeMap<SensorId, &Signature> = sensors.iter().map(|s| (s.id, s)).collect();
    let m = partition.subsets.len();
    let mut groups: Vec<Vec<&Signature>> = Vec::with_capacity(m);
    for subset in &partition.subsets {
        let mut group = Vec::with_capacity(subset.len());
        for id in subset {
            group.push(*by_id.get(id).ok_or(Error::UnknownCandidate { id: *id })?);
        }
        groups.push(group);
    }

    let mut inter = vec![vec![0u64; m]; m];
    for g in 0..m {
        for q in (g + 1)..m {
            let mut count = 0u64;
            for a in &groups[g] {
                for b in &groups[q] {
                    let overlap = mutual_influence(&a.indicator, &b.indicator)?;
                    if overlap > 0 && a.indicator != b.indicator {
                        count += 1;
                    }
                }
            }
            inter[g][q] = count;
            inter[q][g] = count;
        }
    }

    let mut intra = Vec::with_capacity(m);
    for group in &groups {
        let len = group.len();
        let mut identical = 0u64;
        for a in group {
            for b in group {
                if a.indicator == b.indicator {
                    identical += 1;
                }
            }
        }
        intra.push(identical as f64 / (len * len) as f64);
    }
    Ok(InfluenceReport { inter, intra })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn sig(id: SensorId, bits: &[bool]) -> Signature {
        Signature {
            id,
            indicator: bits.to_vec(),
            obs_rank: bits.iter().filter(|&&b| b).count(),
        }
    }

    /// The four indicator patterns of the AGV scenario, with the published
    /// observable ranks (2, 2, 1, 1).
    fn star100_sigs() -> Vec<Signature> {
        let patterns: [(Vec<bool>, usize); 4] = [
            (vec![true, false, true, false], 2),
            (vec![false, true, false, true], 2),
            (vec![false, false, true, false], 1),
            (vec![false, false, false, true], 1),
        ];
        (1..=100u32)
            .map(|id| {
                let (bits, rank) = &patterns[((id - 1) / 25) as usize];
                Signature {
                    id,
                    indicator: bits.clone(),
                    obs_rank: *rank,
                }
            })
            .collect()
    }

    #[test]
    fn mutual_influence_examples() {
        let c1 = [true, false, true, false];
        let c2 = [false, true, false, true];
        let c3 = [false, false, true, false];
        assert_eq!(mutual_influence(&c1, &c3).unwrap(), 1);
        assert_eq!(mutual_influence(&c1, &c2).unwrap(), 0);
        assert_eq!(mutual_influence(&c1, &c1).unwrap(), 2);
        assert!(mutual_influence(&c1, &[true]).is_err());
    }

    #[test]
    fn grassmann_distance_examples() {
        let c1 = [true, false, true, false];
        let c3 = [false, false, true, false];
        let d0: f64 = grassmann_distance(&c1, &c1).unwrap();
        assert_eq!(d0, 0.0);
        let e1 = [true, false, false, false];
        let e2 = [false, true, false, false];
        let d_orth: f64 = grassmann_distance(&e1, &e2).unwrap();
        assert_relative_eq!(d_orth, std::f64::consts::FRAC_PI_2, max_relative = 1e-12);
        let d_mid: f64 = grassmann_distance(&c1, &c3).unwrap();
        assert_relative_eq!(d_mid, std::f64::consts::FRAC_PI_4, max_relative = 1e-12);
        assert!(matches!(
            grassmann_distance::<f64>(&[false, false], &[true, false]),
            Err(Error::UndefinedSubspace)
        ));
    }

    #[test]
    fn balanced_cardinality_examples() {
        assert_eq!(balanced_cardinality(100, 4).unwrap(), vec![25; 4]);
        assert_eq!(balanced_cardinality(10, 3).unwrap(), vec![4, 3, 3]);
        assert_eq!(balanced_cardinality(7, 7).unwrap(), vec![1; 7]);
        assert!(balanced_cardinality(3, 4).is_err());
        assert!(balanced_cardinality(3, 0).is_err());
    }

    #[test]
    fn grassmann_partition_star100() {
        let sigs = star100_sigs();
        let part = partition_grassmann(&sigs).unwrap();
        assert_eq!(part.subset_count(), 4);
        for (g, subset) in part.subsets.iter().enumerate() {
            let lo = g as u32 * 25 + 1;
            let expect: Vec<SensorId> = (lo..lo + 25).collect();
            assert_eq!(subset, &expect);
        }
        // Every ordered pair of earlier sensors is priced: C(100, 2).
        assert_eq!(part.distance_evals, 4950);
    }

    #[test]
    fn grassmann_partition_degenerate_inputs() {
        let same: Vec<Signature> = (1..=5).map(|id| sig(id, &[true, true, false])).collect();
        let part = partition_grassmann(&same).unwrap();
        assert_eq!(part.subset_count(), 1);

        let orth: Vec<Signature> = (0..3)
            .map(|i| {
                let mut bits = vec![false; 3];
                bits[i as usize] = true;
                sig(i + 1, &bits)
            })
            .collect();
        let part = partition_grassmann(&orth).unwrap();
        assert_eq!(part.subset_count(), 3);
        assert!(part.subsets.iter().all(|s| s.len() == 1));
    }

    #[test]
    fn improved_matches_plain_with_fewer_evals() {
        let sigs = star100_sigs();
        let plain = partition_grassmann(&sigs).unwrap();
        let improved = partition_grassmann_improved(&sigs).unwrap();
        assert_eq!(plain.subsets, improved.subsets);
        // Ranks are (2,2,1,1): two rank groups of 50, so 2 * C(50,2).
        assert_eq!(improved.distance_evals, 2 * (50 * 49 / 2));
        assert!(improved.distance_evals < plain.distance_evals);
    }

    #[test]
    fn improved_all_distinct_ranks_needs_no_distances() {
        let sigs = vec![
            sig(1, &[true, false, false]),
            sig(2, &[true, true, false]),
            sig(3, &[true, true, true]),
        ];
        let part = partition_grassmann_improved(&sigs).unwrap();
        assert_eq!(part.distance_evals, 0);
        assert_eq!(part.subset_count(), 3);
    }

    #[test]
    fn min_mutual_star100() {
        let sigs = star100_sigs();
        let part = partition_min_mutual(&sigs).unwrap();
        assert_eq!(part.subset_count(), 2);
        let first: Vec<SensorId> = (1..=25).chain(51..=75).collect();
        let second: Vec<SensorId> = (26..=50).chain(76..=100).collect();
        assert_eq!(part.subsets[0], first);
        assert_eq!(part.subsets[1], second);
    }

    #[test]
    fn min_mutual_degenerate_inputs() {
        let orth = vec![
            sig(1, &[true, false]),
            sig(2, &[false, true]),
        ];
        assert_eq!(partition_min_mutual(&orth).unwrap().subset_count(), 2);
        let all = vec![
            sig(1, &[true, true]),
            sig(2, &[true, false]),
            sig(3, &[false, true]),
        ];
        assert_eq!(partition_min_mutual(&all).unwrap().subset_count(), 1);
    }

    #[test]
    fn random_partition_sizes_and_seeds() {
        let ids: Vec<SensorId> = (1..=100).collect();
        let mut rng = substream(5, "partition-random");
        let part = partition_random(&ids, 4, &mut rng).unwrap();
        assert_eq!(part.subset_count(), 4);
        assert!(part.subsets.iter().all(|s| s.len() == 25));
        let mut all: Vec<SensorId> = part.subsets.concat();
        all.sort_unstable();
        assert_eq!(all, ids);

        let one = partition_random(&ids, 1, &mut rng).unwrap();
        assert_eq!(one.subsets, vec![ids.clone()]);

        let a = partition_random(&ids, 4, &mut substream(1, "p")).unwrap();
        let b = partition_random(&ids, 4, &mut substream(2, "p")).unwrap();
        assert_ne!(a.subsets, b.subsets);
    }

    #[test]
    fn influence_star100_grassmann() {
        let sigs = star100_sigs();
        let part = partition_grassmann(&sigs).unwrap();
        let report = influence_report(&part, &sigs).unwrap();
        for g in 0..4 {
            for q in 0..4 {
                let expect = match (g, q) {
                    (0, 2) | (2, 0) | (1, 3) | (3, 1) => 625,
                    _ => 0,
                };
                assert_eq!(report.inter[g][q], expect, "cell ({g},{q})");
            }
            assert_relative_eq!(report.intra[g], 1.0);
        }
    }

    #[test]
    fn influence_star100_min_mutual() {
        let sigs = star100_sigs();
        let part = partition_min_mutual(&sigs).unwrap();
        let report = influence_report(&part, &sigs).unwrap();
        assert_eq!(report.inter[0][1], 0);
        assert_relative_eq!(report.intra[0], 0.5);
        assert_relative_eq!(report.intra[1], 0.5);
    }

    #[test]
    fn influence_random_longrun_means() {
        // Cross pairs are partially correlated with probability 4/16, so the
        // expected inter entry is 625/4; intra approaches
        // (25 + 600 * 24/99) / 625 for 25-element subsets drawn without
        // replacement.
        let sigs = star100_sigs();
        let ids: Vec<SensorId> = (1..=100).collect();
        let seeds = 30;
        let mut inter_sum = 0.0;
        let mut intra_sum = 0.0;
        let mut cells = 0usize;
        let mut groups = 0usize;
        for seed in 0..seeds {
            let part = partition_random(&ids, 4, &mut substream(seed, "tbl2")).unwrap();
            let report = influence_report(&part, &sigs).unwrap();
            for g in 0..4 {
                for q in 0..4 {
                    if g != q {
                        inter_sum += report.inter[g][q] as f64;
                        cells += 1;
                    }
                }
                intra_sum += report.intra[g];
                groups += 1;
            }
        }
        let inter_mean = inter_sum / cells as f64;
        let intra_mean = intra_sum / groups as f64;
        assert!((inter_mean - 156.25).abs() < 15.0, "inter mean {inter_mean}");
        assert!((intra_mean - 0.28).abs() < 0.03, "intra mean {intra_mean}");
    }
}
