//! Contact networks: loading, querying, dynamic snapshots and cluster partitions.

mod partition;
mod synthetic;

pub use partition::{Partition, PartitionViolations};
pub use synthetic::preferential_attachment;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use crate::epidemic::Compartment;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("node {0} out of range")]
    NodeOutOfRange(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Undirected graph in compressed adjacency form.
///
/// Node ids are dense in `[0, L)`; `original_ids[k]` keeps the id read from file.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactNetwork {
    offsets: Vec<usize>,
    nbrs: Vec<u32>,
    sizes: Option<Vec<u32>>,
    original_ids: Vec<u64>,
    self_loops_dropped: usize,
}

impl ContactNetwork {
    /// Build from dense-index edges. Duplicates collapse and self-loops are dropped.
    pub fn from_edges(l: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); l];
        let mut loops = 0;
        for &(u, v) in edges {
            if u >= l {
                return Err(GraphError::NodeOutOfRange(u));
            }
            if v >= l {
                return Err(GraphError::NodeOutOfRange(v));
            }
            if u == v {
                loops += 1;
                continue;
            }
            adj[u].push(v as u32);
            adj[v].push(u as u32);
        }
        let mut net = Self::from_adjacency(adj);
        net.self_loops_dropped = loops;
        Ok(net)
    }

    fn from_adjacency(mut adj: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        offsets.push(0);
        let mut nbrs = Vec::new();
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            nbrs.extend_from_slice(list);
            offsets.push(nbrs.len());
        }
        let l = adj.len();
        Self {
            offsets,
            nbrs,
            sizes: None,
            original_ids: (0..l as u64).collect(),
            self_loops_dropped: 0,
        }
    }

    /// Number of nodes L.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.nbrs.len() / 2
    }

    pub fn neighbors(&self, k: usize) -> &[u32] {
        &self.nbrs[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.offsets[k + 1] - self.offsets[k]
    }

    pub fn self_loops_dropped(&self) -> usize {
        self.self_loops_dropped
    }

    /// File ids of the dense nodes, index by dense id.
    pub fn original_ids(&self) -> &[u64] {
        &self.original_ids
    }

    /// Per-node subpopulation sizes M_k (all 1 when unset).
    pub fn subpop_size(&self, k: usize) -> u32 {
        self.sizes.as_ref().map_or(1, |s| s[k])
    }

    pub fn with_subpop_sizes(mut self, sizes: Vec<u32>) -> Result<Self, GraphError> {
        if sizes.len() != self.len() || sizes.contains(&0) {
            return Err(GraphError::Invalid(
                "subpopulation sizes must be >= 1, one per node".into(),
            ));
        }
        self.sizes = Some(sizes);
        Ok(self)
    }

    /// d_k(s): number of neighbours of `k` labelled infectious.
    pub fn infectious_neighbor_count(
        &self,
        s: &[Compartment],
        k: usize,
    ) -> Result<usize, GraphError> {
        if k >= self.len() {
            return Err(GraphError::NodeOutOfRange(k));
        }
        if s.len() != self.len() {
            return Err(GraphError::Invalid(format!(
                "state has length {}, expected {}",
                s.len(),
                self.len()
            )));
        }
        Ok(self
            .neighbors(k)
            .iter()
            .filter(|&&l| s[l as usize] == Compartment::I)
            .count())
    }

    /// Hop distance from `src` to every node; `None` when unreachable.
    pub fn bfs_distances(&self, src: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.len()];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in self.neighbors(u) {
                let v = v as usize;
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Degree summary: (min, mean, max).
    pub fn degree_stats(&self) -> (usize, f64, usize) {
        let l = self.len();
        if l == 0 {
            return (0, 0.0, 0);
        }
        let degs = (0..l).map(|k| self.degree(k));
        let min = degs.clone().min().unwrap_or(0);
        let max = degs.max().unwrap_or(0);
        (min, self.nbrs.len() as f64 / l as f64, max)
    }
}

/// Parsed edge-list lines: raw id pairs plus the count of self-loops seen.
struct RawEdges {
    pairs: Vec<(u64, u64)>,
}

fn parse_edges<R: BufRead>(reader: R) -> Result<RawEdges, GraphError> {
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| GraphError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut next = || -> Result<u64, GraphError> {
            let tok = it.next().ok_or(GraphError::Parse {
                line: lineno,
                msg: "expected two node ids".into(),
            })?;
            tok.parse::<u64>().map_err(|_| GraphError::Parse {
                line: lineno,
                msg: format!("`{tok}` is not a nonnegative integer node id"),
            })
        };
        let u = next()?;
        let v = next()?;
        pairs.push((u, v));
    }
    Ok(RawEdges { pairs })
}

fn build_with_ids(
    pairs: &[(u64, u64)],
    ids: &[u64],
    index: &HashMap<u64, usize>,
) -> ContactNetwork {
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); ids.len()];
    let mut loops = 0;
    for &(u, v) in pairs {
        if u == v {
            loops += 1;
            continue;
        }
        let (a, b) = (index[&u], index[&v]);
        adj[a].push(b as u32);
        adj[b].push(a as u32);
    }
    let mut net = ContactNetwork::from_adjacency(adj);
    net.original_ids = ids.to_vec();
    net.self_loops_dropped = loops;
    net
}

fn dense_index(ids: BTreeSet<u64>) -> (Vec<u64>, HashMap<u64, usize>) {
    let ids: Vec<u64> = ids.into_iter().collect();
    let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    (ids, index)
}

/// Read a whitespace-separated edge list. Ids are remapped densely in ascending order.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<ContactNetwork, GraphError> {
    let raw = parse_edges(reader)?;
    let (ids, index) = dense_index(raw.pairs.iter().flat_map(|&(u, v)| [u, v]).collect());
    let net = build_with_ids(&raw.pairs, &ids, &index);
    if net.self_loops_dropped > 0 {
        log::warn!("dropped {} self-loop(s)", net.self_loops_dropped);
    }
    Ok(net)
}

/// Read an edge-list file.
pub fn load_edge_list_path(path: &Path) -> Result<ContactNetwork, GraphError> {
    let f = std::fs::File::open(path).map_err(|e| GraphError::Io {
        path: path.into(),
        source: e,
    })?;
    load_edge_list(std::io::BufReader::new(f))
}

/// A time-indexed sequence of edge snapshots over one vertex set.
#[derive(Debug, Clone)]
pub struct DynamicNetwork {
    snapshots: Vec<ContactNetwork>,
}

impl DynamicNetwork {
    pub fn new(snapshots: Vec<ContactNetwork>) -> Result<Self, GraphError> {
        let Some(first) = snapshots.first() else {
            return Err(GraphError::Invalid(
                "dynamic network needs at least one snapshot".into(),
            ));
        };
        if snapshots.iter().any(|s| s.len() != first.len()) {
            return Err(GraphError::Invalid(
                "all snapshots must share the node count".into(),
            ));
        }
        Ok(Self { snapshots })
    }

    /// Load a manifest listing one snapshot file per line (relative to the manifest).
    /// All snapshots share one dense index built from the union of their ids.
    pub fn load_manifest(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io {
            path: path.into(),
            source: e,
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut raws = Vec::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let p = dir.join(line);
            let f = std::fs::File::open(&p).map_err(|e| GraphError::Io {
                path: p.clone(),
                source: e,
            })?;
            raws.push(parse_edges(std::io::BufReader::new(f))?);
        }
        let ids = raws
            .iter()
            .flat_map(|r| r.pairs.iter().flat_map(|&(u, v)| [u, v]))
            .collect();
        let (ids, index) = dense_index(ids);
        Self::new(
            raws.iter()
                .map(|r| build_with_ids(&r.pairs, &ids, &index))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Snapshot for step `n`, clamped to the last one.
    pub fn snapshot_at(&self, n: usize) -> &ContactNetwork {
        &self.snapshots[n.min(self.snapshots.len() - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> ContactNetwork {
        load_edge_list(s.as_bytes()).unwrap()
    }

    #[test]
    fn reads_simple_path() {
        let g = parse("0 1\n1 2");
        assert_eq!(g.len(), 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn dedups_symmetric_duplicates() {
        let g = parse("0 1\n1 0");
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn drops_self_loops() {
        let g = parse("# comment\n0 0\n0 1\n");
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.self_loops_dropped(), 1);
    }

    #[test]
    fn remaps_sparse_ids() {
        let g = parse("100 7\n7 55");
        assert_eq!(g.original_ids(), &[7, 55, 100]);
        assert_eq!(g.neighbors(0), &[1, 2]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = load_edge_list("0 1\n# ok\n2 x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 3, .. }), "{err}");
        let err = load_edge_list("0 -1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
        let err = load_edge_list("5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
    }

    #[test]
    fn infectious_counts() {
        use Compartment::*;
        let star =
            ContactNetwork::from_edges(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap();
        let s = [S, I, I, E, I, R];
        assert_eq!(star.infectious_neighbor_count(&s, 0).unwrap(), 3);
        let iso = ContactNetwork::from_edges(2, &[]).unwrap();
        assert_eq!(iso.infectious_neighbor_count(&[I, I], 0).unwrap(), 0);
        assert!(star.infectious_neighbor_count(&s, 9).is_err());
    }

    #[test]
    fn bfs_marks_unreachable() {
        let g = ContactNetwork::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.bfs_distances(0), vec![Some(0), Some(1), Some(2), None]);
    }
}
