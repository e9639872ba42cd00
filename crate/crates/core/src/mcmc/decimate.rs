//! Mesh decimation by shortest-edge half-collapse with a manifoldness
//! guard; produces the coarse surrogate meshes.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeSet};

use crate::error::Result;
use crate::mesh::{RawMesh, TriMesh};

#[derive(PartialEq)]
struct EdgeEntry {
    len: f64,
    u: usize,
    v: usize,
}

impl Eq for EdgeEntry {}

impl Ord for EdgeEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.len
            .partial_cmp(&other.len)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| self.u.cmp(&other.u))
            .then_with(|| self.v.cmp(&other.v))
    }
}

impl PartialOrd for EdgeEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Collapse shortest edges until at most `target_vertices` remain, skipping
/// collapses that would pinch the surface. Returns the rebuilt mesh
/// (re-normalized to unit area) and, per new vertex, the original vertex it
/// descends from. When the target cannot be reached the best effort is
/// returned with a warning.
pub fn decimate(mesh: &TriMesh, target_vertices: usize) -> Result<(TriMesh, Vec<usize>)> {
    let n = mesh.num_vertices();
    let target = target_vertices.max(4);
    if target >= n {
        return Ok((mesh.clone(), (0..n).collect()));
    }

    let positions = &mesh.vertices;
    let mut faces: Vec<[usize; 3]> = mesh.triangles.clone();
    let mut face_alive = vec![true; faces.len()];
    let mut vertex_alive = vec![true; n];
    let mut alive_count = n;

    // adjacency as sorted sets for deterministic iteration
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut incident: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (f, tri) in faces.iter().enumerate() {
        for c in 0..3 {
            neighbors[tri[c]].insert(tri[(c + 1) % 3]);
            neighbors[tri[c]].insert(tri[(c + 2) % 3]);
            incident[tri[c]].insert(f);
        }
    }

    let mut heap: BinaryHeap<Reverse<EdgeEntry>> = BinaryHeap::new();
    let push_edge = |heap: &mut BinaryHeap<Reverse<EdgeEntry>>, a: usize, b: usize| {
        let (u, v) = (a.min(b), a.max(b));
        let len = (positions[u] - positions[v]).norm();
        heap.push(Reverse(EdgeEntry { len, u, v }));
    };
    for u in 0..n {
        for &v in neighbors[u].iter() {
            if u < v {
                push_edge(&mut heap, u, v);
            }
        }
    }

    while alive_count > target {
        let Some(Reverse(EdgeEntry { len, u, v })) = heap.pop() else {
            eprintln!(
                "warning: decimation stalled at {alive_count} vertices (target {target})"
            );
            break;
        };
        let _ = len; // positions are immutable, so lengths never go stale
        if !vertex_alive[u] || !vertex_alive[v] || !neighbors[u].contains(&v) {
            continue;
        }

        // link condition: common neighbors must be exactly the apex
        // vertices of the faces shared by the edge
        let common: Vec<usize> = neighbors[u].intersection(&neighbors[v]).copied().collect();
        let mut apexes = BTreeSet::new();
        for &f in incident[u].intersection(&incident[v]) {
            if face_alive[f] {
                for &w in &faces[f] {
                    if w != u && w != v {
                        apexes.insert(w);
                    }
                }
            }
        }
        if apexes.is_empty() || common.iter().any(|w| !apexes.contains(w)) {
            continue; // collapsing would create a fin or pinch
        }

        // half-collapse: drop the higher index into the lower one
        let (keep, drop) = (u.min(v), u.max(v));
        let drop_faces: Vec<usize> = incident[drop].iter().copied().collect();
        for f in drop_faces {
            if !face_alive[f] {
                incident[drop].remove(&f);
                continue;
            }
            let tri = faces[f];
            if tri.contains(&keep) {
                // face spanned the edge: remove it
                face_alive[f] = false;
                for &w in &tri {
                    incident[w].remove(&f);
                }
            } else {
                let mut new_tri = tri;
                for slot in new_tri.iter_mut() {
                    if *slot == drop {
                        *slot = keep;
                    }
                }
                faces[f] = new_tri;
                incident[drop].remove(&f);
                incident[keep].insert(f);
            }
        }
        // rewire adjacency
        let drop_neighbors: Vec<usize> = neighbors[drop].iter().copied().collect();
        for w in drop_neighbors {
            neighbors[w].remove(&drop);
            if w != keep {
                neighbors[w].insert(keep);
                neighbors[keep].insert(w);
                push_edge(&mut heap, keep, w);
            }
        }
        neighbors[keep].remove(&drop);
        neighbors[drop].clear();
        vertex_alive[drop] = false;
        alive_count -= 1;
    }

    // rebuild compacted mesh; normalization happens in from_raw
    let mut kept_faces: Vec<[usize; 3]> = Vec::new();
    for (f, tri) in faces.iter().enumerate() {
        if face_alive[f] && tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
            kept_faces.push(*tri);
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut new_vertices = Vec::with_capacity(alive_count);
    let mut index_map = Vec::with_capacity(alive_count);
    for old in 0..n {
        let referenced = kept_faces.iter().any(|t| t.contains(&old));
        if vertex_alive[old] && referenced {
            remap[old] = new_vertices.len();
            new_vertices.push(positions[old]);
            index_map.push(old);
        }
    }
    let new_faces: Vec<[usize; 3]> = kept_faces
        .iter()
        .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
        .collect();
    let raw = RawMesh {
        vertices: new_vertices,
        triangles: new_faces,
    };
    let decimated = TriMesh::from_raw(raw)?;
    Ok((decimated, index_map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::laplacian::triangle_area;
    use crate::synth;

    #[test]
    fn target_at_or_above_n_returns_unchanged() {
        let mesh = synth::tetrahedron().build().unwrap();
        let (d, map) = decimate(&mesh, 4).unwrap();
        assert_eq!(d.num_vertices(), 4);
        assert_eq!(map, vec![0, 1, 2, 3]);
        let mesh2 = synth::icosphere(1).build().unwrap();
        let (d2, map2) = decimate(&mesh2, 100).unwrap();
        assert_eq!(d2.num_vertices(), 42);
        assert_eq!(map2.len(), 42);
    }

    #[test]
    fn sphere_decimates_with_area_roughly_preserved() {
        let mesh = synth::icosphere(3).build().unwrap(); // 642, unit area
        let (d, map) = decimate(&mesh, 100).unwrap();
        assert!(d.num_vertices() <= 100, "got {}", d.num_vertices());
        assert!(d.num_vertices() >= 50);
        assert_eq!(map.len(), d.num_vertices());
        // pre-normalization area of the collapsed geometry within 10%
        let raw_area: f64 = d
            .triangles
            .iter()
            .map(|t| {
                // reconstruct from original positions via the index map
                let p: Vec<_> = t.iter().map(|&i| mesh.vertices[map[i]]).collect();
                triangle_area(&p, &[0, 1, 2])
            })
            .sum();
        assert!(
            (raw_area - 1.0).abs() < 0.1,
            "coarse sphere area {raw_area} vs 1.0"
        );
        // decimated mesh itself is unit area again
        assert!((d.surface_area() - 1.0).abs() < 1e-10);
        // closed surface stays closed
        let f = d.num_triangles() as i64;
        let v = d.num_vertices() as i64;
        assert_eq!(v - 3 * f / 2 + f, 2, "Euler characteristic broke");
    }

    #[test]
    fn index_map_points_at_original_positions() {
        let mesh = synth::biped(3, synth::ArmPose::LeftForward).build().unwrap();
        let (d, map) = decimate(&mesh, 300).unwrap();
        // half-collapse keeps original positions up to the final
        // re-normalization (translate + scale)
        // so matched directions must agree after re-centering
        for (new_ix, &old_ix) in map.iter().enumerate().step_by(17) {
            let a = d.vertices[new_ix].coords.normalize();
            let b = mesh.vertices[old_ix].coords.normalize();
            assert!((a - b).norm() < 0.2, "vertex {new_ix} drifted");
        }
    }
}
