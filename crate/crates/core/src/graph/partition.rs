//! Partitions of the node set into clusters.

use std::fmt;

/// Clusters C_1..C_p as index lists. Construct through the helpers or
/// [`Partition::new`], which validates against L.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    clusters: Vec<Vec<usize>>,
}

/// Why a proposed partition is invalid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionViolations {
    /// Nodes that appear in more than one cluster.
    pub overlaps: Vec<usize>,
    /// Nodes that appear in no cluster.
    pub gaps: Vec<usize>,
    /// Ids at or above L.
    pub out_of_range: Vec<usize>,
    pub empty_clusters: usize,
}

impl fmt::Display for PartitionViolations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "overlaps at {:?}, gaps at {:?}, out of range {:?}, {} empty cluster(s)",
            self.overlaps, self.gaps, self.out_of_range, self.empty_clusters
        )
    }
}

impl std::error::Error for PartitionViolations {}

impl Partition {
    pub fn new(clusters: Vec<Vec<usize>>, l: usize) -> Result<Self, PartitionViolations> {
        validate(&clusters, l)?;
        Ok(Self { clusters })
    }

    /// The finest partition {{0}, …, {L-1}}.
    pub fn singleton(l: usize) -> Self {
        Self {
            clusters: (0..l).map(|k| vec![k]).collect(),
        }
    }

    /// The coarsest partition {{0, …, L-1}}.
    pub fn single_cluster(l: usize) -> Self {
        Self {
            clusters: vec![(0..l).collect()],
        }
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// For each node, (cluster index, position inside the cluster).
    pub fn locate(&self) -> Vec<(usize, usize)> {
        let mut at = vec![(0, 0); self.num_nodes()];
        for (c, members) in self.clusters.iter().enumerate() {
            for (pos, &k) in members.iter().enumerate() {
                at[k] = (c, pos);
            }
        }
        at
    }

    /// True when every cluster of `self` lies inside one cluster of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        let owner = coarser.locate();
        self.clusters
            .iter()
            .all(|c| c.iter().all(|&k| owner[k].0 == owner[c[0]].0))
    }
}

/// Check disjointness and coverage of {0..L-1}.
pub fn validate(clusters: &[Vec<usize>], l: usize) -> Result<(), PartitionViolations> {
    let mut seen = vec![0u32; l];
    let mut v = PartitionViolations::default();
    for c in clusters {
        if c.is_empty() {
            v.empty_clusters += 1;
        }
        for &k in c {
            if k >= l {
                v.out_of_range.push(k);
            } else {
                seen[k] += 1;
            }
        }
    }
    for (k, &n) in seen.iter().enumerate() {
        if n == 0 {
            v.gaps.push(k);
        } else if n > 1 {
            v.overlaps.push(k);
        }
    }
    if v == PartitionViolations::default() && !clusters.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}
