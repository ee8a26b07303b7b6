//! Graph utilities: all-pairs shortest paths, Weisfeiler-Lehman relabeling,
//! and adjacency recovery from a dense structure matrix.

use crate::{OtError, Result};
use ndarray::Array2;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

/// All-pairs shortest paths of a weighted symmetric adjacency matrix
/// (entry 0 means no edge). Unweighted graphs (all edge weights equal) use
/// breadth-first layering, anything else runs one Dijkstra per source.
pub fn shortest_path_matrix(adjacency: &Array2<f64>) -> Result<Array2<f64>> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(OtError::ShapeMismatch(format!(
            "adjacency {}x{}",
            n,
            adjacency.ncols()
        )));
    }
    let mut weight = None;
    let mut uniform = true;
    for i in 0..n {
        for j in 0..n {
            let w = adjacency[[i, j]];
            if (w - adjacency[[j, i]]).abs() > 1e-10 {
                return Err(OtError::ShapeMismatch("adjacency must be symmetric".into()));
            }
            if w < 0.0 {
                return Err(OtError::BadParams("negative edge weight".into()));
            }
            if i != j && w > 0.0 {
                match weight {
                    None => weight = Some(w),
                    Some(prev) if (prev - w).abs() > 1e-12 => uniform = false,
                    _ => {}
                }
            }
        }
    }
    let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && adjacency[[i, j]] > 0.0)
                .map(|j| (j, adjacency[[i, j]]))
                .collect()
        })
        .collect();

    let mut out = Array2::from_elem((n, n), f64::INFINITY);
    for src in 0..n {
        if uniform {
            let step = weight.unwrap_or(1.0);
            let mut dist = vec![f64::INFINITY; n];
            dist[src] = 0.0;
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &neighbors[u] {
                    if dist[v].is_infinite() {
                        dist[v] = dist[u] + step;
                        queue.push_back(v);
                    }
                }
            }
            for (j, d) in dist.into_iter().enumerate() {
                out[[src, j]] = d;
            }
        } else {
            let mut dist = vec![f64::INFINITY; n];
            dist[src] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(HeapEntry { dist: 0.0, node: src });
            while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &(v, w) in &neighbors[u] {
                    let cand = d + w;
                    if cand < dist[v] {
                        dist[v] = cand;
                        heap.push(HeapEntry { dist: cand, node: v });
                    }
                }
            }
            for (j, d) in dist.into_iter().enumerate() {
                out[[src, j]] = d;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if out[[i, j]].is_infinite() {
                return Err(OtError::DisconnectedGraph(i, j));
            }
        }
    }
    Ok(out)
}

/// Min-heap entry keyed by distance.
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed for a min-heap on dist; ties on node for determinism.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then(other.node.cmp(&self.node))
    }
}

fn neighbor_lists(adjacency: &Array2<f64>) -> Vec<Vec<usize>> {
    let n = adjacency.nrows();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && adjacency[[i, j]] > 0.0)
                .collect()
        })
        .collect()
}

type WlSignature = (i64, Vec<i64>);

fn wl_level(codes: &[i64], neighbors: &[Vec<usize>]) -> Vec<WlSignature> {
    codes
        .iter()
        .enumerate()
        .map(|(v, &own)| {
            let mut neigh: Vec<i64> = neighbors[v].iter().map(|&u| codes[u]).collect();
            neigh.sort_unstable();
            (own, neigh)
        })
        .collect()
}

/// Weisfeiler-Lehman relabeling: column 0 holds the original labels, column
/// `k` the canonically recoded (own label, sorted neighbor multiset)
/// signature at level `k`. Recoding ranks the sorted signatures present in
/// the graph, so isomorphic graphs produce identical code multisets at every
/// level. Codes are only comparable across graphs when produced by
/// [`wl_relabel_pair`], which shares the dictionaries.
pub fn wl_relabel(labels: &[i64], adjacency: &Array2<f64>, levels: usize) -> Array2<i64> {
    let n = labels.len();
    let neighbors = neighbor_lists(adjacency);
    let mut out = Array2::zeros((n, levels + 1));
    let mut codes: Vec<i64> = labels.to_vec();
    for (v, &code) in codes.iter().enumerate() {
        out[[v, 0]] = code;
    }
    for level in 1..=levels {
        let sigs = wl_level(&codes, &neighbors);
        let mut dict: BTreeMap<&WlSignature, i64> = BTreeMap::new();
        let mut sorted: Vec<&WlSignature> = sigs.iter().collect();
        sorted.sort();
        sorted.dedup();
        for (rank, sig) in sorted.into_iter().enumerate() {
            dict.insert(sig, rank as i64);
        }
        codes = sigs.iter().map(|s| dict[s]).collect();
        for (v, &code) in codes.iter().enumerate() {
            out[[v, level]] = code;
        }
    }
    out
}

/// WL relabeling of two graphs with dictionaries shared per level, so the
/// resulting codes are comparable across the pair (as required by the
/// stacked-label hamming feature distance).
pub fn wl_relabel_pair(
    labels_a: &[i64],
    adj_a: &Array2<f64>,
    labels_b: &[i64],
    adj_b: &Array2<f64>,
    levels: usize,
) -> (Array2<i64>, Array2<i64>) {
    let (na, nb) = (labels_a.len(), labels_b.len());
    let neigh_a = neighbor_lists(adj_a);
    let neigh_b = neighbor_lists(adj_b);
    let mut out_a = Array2::zeros((na, levels + 1));
    let mut out_b = Array2::zeros((nb, levels + 1));
    let mut codes_a: Vec<i64> = labels_a.to_vec();
    let mut codes_b: Vec<i64> = labels_b.to_vec();
    for (v, &c) in codes_a.iter().enumerate() {
        out_a[[v, 0]] = c;
    }
    for (v, &c) in codes_b.iter().enumerate() {
        out_b[[v, 0]] = c;
    }
    for level in 1..=levels {
        let sigs_a = wl_level(&codes_a, &neigh_a);
        let sigs_b = wl_level(&codes_b, &neigh_b);
        let mut sorted: Vec<&WlSignature> = sigs_a.iter().chain(sigs_b.iter()).collect();
        sorted.sort();
        sorted.dedup();
        let mut dict: BTreeMap<&WlSignature, i64> = BTreeMap::new();
        for (rank, sig) in sorted.into_iter().enumerate() {
            dict.insert(sig, rank as i64);
        }
        codes_a = sigs_a.iter().map(|s| dict[s]).collect();
        codes_b = sigs_b.iter().map(|s| dict[s]).collect();
        for (v, &c) in codes_a.iter().enumerate() {
            out_a[[v, level]] = c;
        }
        for (v, &c) in codes_b.iter().enumerate() {
            out_b[[v, level]] = c;
        }
    }
    (out_a, out_b)
}

/// Result of [`adjacency_from_structure`].
#[derive(Debug, Clone)]
pub struct AdjacencyRecovery {
    pub adjacency: Array2<bool>,
    pub threshold: f64,
    pub frobenius_error: f64,
}

/// Recovers a 0/1 adjacency from a dense structure matrix by brute force
/// over thresholds: for each candidate `t` (the sorted unique positive
/// off-diagonal values of `C`), edges are `0 < C_ij <= t` and the score is
/// the Frobenius distance between `C` and the unit-weight shortest paths of
/// that graph. Ties break toward the smaller threshold (sparser graph);
/// disconnected candidates are skipped.
pub fn adjacency_from_structure(c: &Array2<f64>) -> Result<AdjacencyRecovery> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(OtError::ShapeMismatch(format!("structure {}x{}", n, c.ncols())));
    }
    let mut candidates: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if c[[i, j]] < 0.0 {
                    return Err(OtError::BadParams("structure entries must be nonnegative".into()));
                }
                if c[[i, j]] > 0.0 {
                    candidates.push(c[[i, j]]);
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);

    let mut best: Option<AdjacencyRecovery> = None;
    for &t in &candidates {
        let adj = Array2::from_shape_fn((n, n), |(i, j)| {
            if i != j && c[[i, j]] > 0.0 && c[[i, j]] <= t {
                1.0
            } else {
                0.0
            }
        });
        let sp = match shortest_path_matrix(&adj) {
            Ok(sp) => sp,
            Err(OtError::DisconnectedGraph(_, _)) => continue,
            Err(e) => return Err(e),
        };
        let err = c
            .iter()
            .zip(sp.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let better = match &best {
            None => true,
            Some(b) => err < b.frobenius_error - 1e-15,
        };
        if better {
            best = Some(AdjacencyRecovery {
                adjacency: adj.mapv(|v| v > 0.0),
                threshold: t,
                frobenius_error: err,
            });
        }
    }
    best.ok_or(OtError::NoConnectedCandidate)
}
