//! Seeded synthetic networks used as stand-ins for the public datasets in
//! tests and benchmarks.

use rand::Rng;

use super::ContactNetwork;
use crate::prob::stream;

/// Preferential-attachment graph: each new node links to `m` distinct earlier
/// nodes chosen proportionally to degree. Starts from a clique on `m + 1` nodes.
pub fn preferential_attachment(l: usize, m: usize, seed: u64) -> ContactNetwork {
    assert!(m >= 1 && l > m, "need L > m >= 1");
    let mut rng = stream(seed, &[0x6E_6574]);
    let mut edges = Vec::with_capacity(l * m);
    // Each endpoint appears once per incident edge, so uniform picks are degree-proportional.
    let mut ends: Vec<usize> = Vec::with_capacity(2 * l * m);
    for u in 0..=m {
        for v in 0..u {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    let mut picked = Vec::with_capacity(m);
    for u in (m + 1)..l {
        picked.clear();
        while picked.len() < m {
            let v = ends[rng.random_range(0..ends.len())];
            if !picked.contains(&v) {
                picked.push(v);
            }
        }
        for &v in &picked {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    ContactNetwork::from_edges(l, &edges).expect("generated ids are in range")
}
