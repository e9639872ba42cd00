//! Graph geodesics: Dijkstra over mesh edges with Euclidean lengths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::parallel;

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by vertex index for determinism
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distances from `source` to every vertex along mesh edges.
/// Unreachable vertices get `f64::INFINITY`.
pub fn geodesic_distances(mesh: &TriMesh, source: usize) -> Result<Vec<f64>> {
    let n = mesh.num_vertices();
    if source >= n {
        return Err(Error::IndexOutOfRange {
            what: "vertices",
            index: source,
            len: n,
        });
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        vertex: source,
    });
    while let Some(HeapEntry { dist: d, vertex: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &u in mesh.stiffness.row_indices(v) {
            if u == v {
                continue;
            }
            let cand = d + (mesh.vertices[u] - mesh.vertices[v]).norm();
            if cand < dist[u] {
                dist[u] = cand;
                heap.push(HeapEntry {
                    dist: cand,
                    vertex: u,
                });
            }
        }
    }
    Ok(dist)
}

/// Distances from several roots at once; parallel over roots.
pub fn geodesic_distances_multi(mesh: &TriMesh, roots: &[usize]) -> Result<Vec<Vec<f64>>> {
    for &r in roots {
        if r >= mesh.num_vertices() {
            return Err(Error::IndexOutOfRange {
                what: "vertices",
                index: r,
                len: mesh.num_vertices(),
            });
        }
    }
    Ok(parallel::collect_indexed(roots.len(), |i| {
        geodesic_distances(mesh, roots[i]).expect("root validated above")
    }))
}

/// Sequential version of [`geodesic_distances_multi`], kept for benchmarks.
pub fn geodesic_distances_multi_seq(mesh: &TriMesh, roots: &[usize]) -> Result<Vec<Vec<f64>>> {
    roots.iter().map(|&r| geodesic_distances(mesh, r)).collect()
}
