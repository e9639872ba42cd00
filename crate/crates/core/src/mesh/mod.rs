//! Triangle-mesh data model: loading, normalization, discrete operators.

pub mod geodesic;
pub mod io;
pub mod laplacian;

use std::path::Path;

use nalgebra::{Point3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub use geodesic::{geodesic_distances, geodesic_distances_multi, geodesic_distances_multi_seq};
pub use io::{MeshFormat, RawMesh};
pub use laplacian::assemble_laplacian;

/// A triangle mesh with its discrete operators assembled.
///
/// After [`TriMesh::from_raw`] the mesh is translated so its area-weighted
/// centroid sits at the origin and scaled to unit surface area; the vertex
/// masses therefore sum to one.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Lumped mass matrix diagonal (barycentric areas), all positive.
    pub vertex_masses: Vec<f64>,
    /// Cotangent stiffness matrix, symmetric PSD with zero row sums.
    pub stiffness: CsrMatrix,
    /// Unit outer normals, area-weighted over incident faces.
    pub normals: Vec<Vector3<f64>>,
    hash: u64,
}

impl TriMesh {
    pub fn from_raw(raw: RawMesh) -> Result<TriMesh> {
        Self::build(raw, true, false)
    }

    /// Build without the translate/scale normalization; used by tests that
    /// need exact coordinates and by intermediate decimation states.
    pub fn from_raw_unnormalized(raw: RawMesh) -> Result<TriMesh> {
        Self::build(raw, false, false)
    }

    /// As [`TriMesh::from_raw`] with negative cotangent weights clamped to
    /// zero, for pathological inputs.
    pub fn from_raw_clamped(raw: RawMesh) -> Result<TriMesh> {
        Self::build(raw, true, true)
    }

    fn build(raw: RawMesh, normalize: bool, clamp_negative: bool) -> Result<TriMesh> {
        if raw.triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let n_raw = raw.vertices.len();
        for tri in &raw.triangles {
            for &ix in tri {
                if ix >= n_raw {
                    return Err(Error::IndexOutOfRange {
                        what: "vertices",
                        index: ix,
                        len: n_raw,
                    });
                }
            }
        }

        // drop degenerate faces, then vertices no face references
        let total_area: f64 = raw
            .triangles
            .iter()
            .map(|t| laplacian::triangle_area(&raw.vertices, t))
            .sum();
        if !(total_area > 0.0) {
            return Err(Error::DegenerateGeometry);
        }
        let floor = 1e-12 * total_area;
        let kept: Vec<[usize; 3]> = raw
            .triangles
            .iter()
            .copied()
            .filter(|t| laplacian::triangle_area(&raw.vertices, t) > floor)
            .collect();
        if kept.is_empty() {
            return Err(Error::DegenerateGeometry);
        }
        if kept.len() < raw.triangles.len() {
            eprintln!(
                "warning: dropped {} degenerate face(s)",
                raw.triangles.len() - kept.len()
            );
        }

        // compact in original index order so untouched meshes keep their
        // vertex numbering
        let mut referenced = vec![false; n_raw];
        for tri in &kept {
            for &ix in tri {
                referenced[ix] = true;
            }
        }
        let mut remap = vec![usize::MAX; n_raw];
        let mut vertices: Vec<Point3<f64>> = Vec::with_capacity(n_raw);
        for (old, &used) in referenced.iter().enumerate() {
            if used {
                remap[old] = vertices.len();
                vertices.push(raw.vertices[old]);
            }
        }
        let triangles: Vec<[usize; 3]> = kept
            .iter()
            .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
            .collect();
        if vertices.len() < n_raw {
            eprintln!(
                "warning: dropped {} unreferenced vertex/vertices",
                n_raw - vertices.len()
            );
        }

        if normalize {
            normalize_in_place(&mut vertices, &triangles);
        }

        let (stiffness, vertex_masses) =
            assemble_laplacian(&vertices, &triangles, clamp_negative)?;
        let normals = compute_vertex_normals(&vertices, &triangles);

        let nonmanifold = count_nonmanifold_edges(vertices.len(), &triangles);
        if nonmanifold > 0 {
            eprintln!("warning: {nonmanifold} non-manifold edge(s) tolerated");
        }

        let hash = mesh_hash(&vertices, &triangles);
        Ok(TriMesh {
            vertices,
            triangles,
            vertex_masses,
            stiffness,
            normals,
            hash,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn surface_area(&self) -> f64 {
        self.vertex_masses.iter().sum()
    }

    /// Geometry hash used to key basis cache files.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    /// Vertex coordinates as an N x 3 matrix.
    pub fn coords_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.num_vertices(), 3, |i, c| self.vertices[i].coords[c])
    }

    /// One-ring neighbors of vertex `i` (from the stiffness pattern).
    pub fn one_ring(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.stiffness
            .row_indices(i)
            .iter()
            .copied()
            .filter(move |&j| j != i)
    }

    /// Cotangent weight of edge (i, j); zero when not adjacent.
    pub fn cotan_weight(&self, i: usize, j: usize) -> f64 {
        -self.stiffness.get(i, j)
    }

    /// Apply a rigid motion. The intrinsic operators (stiffness, masses) are
    /// invariant under rigid motions and are carried over unchanged.
    pub fn transformed(&self, rot: &Rotation3<f64>, translation: &Vector3<f64>) -> TriMesh {
        let vertices: Vec<Point3<f64>> =
            self.vertices.iter().map(|p| rot * p + translation).collect();
        let normals: Vec<Vector3<f64>> = self.normals.iter().map(|n| rot * n).collect();
        let hash = mesh_hash(&vertices, &self.triangles);
        TriMesh {
            vertices,
            triangles: self.triangles.clone(),
            vertex_masses: self.vertex_masses.clone(),
            stiffness: self.stiffness.clone(),
            normals,
            hash,
        }
    }
}

fn normalize_in_place(vertices: &mut [Point3<f64>], triangles: &[[usize; 3]]) {
    let n = vertices.len();
    let mut masses = vec![0.0f64; n];
    let mut area = 0.0;
    for tri in triangles {
        let a = laplacian::triangle_area(vertices, tri);
        area += a;
        for &v in tri {
            masses[v] += a / 3.0;
        }
    }
    let mut centroid = Vector3::zeros();
    for (v, &m) in vertices.iter().zip(&masses) {
        centroid += m * v.coords;
    }
    centroid /= area;
    let scale = 1.0 / area.sqrt();
    for v in vertices.iter_mut() {
        v.coords = (v.coords - centroid) * scale;
    }
}

/// Area-weighted vertex normals, normalized to unit length. Vertices whose
/// accumulated normal vanishes fall back to +z so every row stays unit.
pub fn compute_vertex_normals(
    vertices: &[Point3<f64>],
    triangles: &[[usize; 3]],
) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    for tri in triangles {
        let u = vertices[tri[1]] - vertices[tri[0]];
        let v = vertices[tri[2]] - vertices[tri[0]];
        let area_normal = u.cross(&v); // |.| = 2 * area
        for &ix in tri {
            acc[ix] += area_normal;
        }
    }
    acc.into_iter()
        .map(|v| {
            let norm = v.norm();
            if norm > 1e-300 {
                v / norm
            } else {
                Vector3::z()
            }
        })
        .collect()
}

fn count_nonmanifold_edges(n: usize, triangles: &[[usize; 3]]) -> usize {
    use std::collections::HashMap;
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in triangles {
        for c in 0..3 {
            let a = tri[c];
            let b = tri[(c + 1) % 3];
            let key = (a.min(b).min(n), a.max(b));
            *count.entry(key).or_insert(0) += 1;
        }
    }
    count.values().filter(|&&c| c > 2).count()
}

fn mesh_hash(vertices: &[Point3<f64>], triangles: &[[usize; 3]]) -> u64 {
    // FNV-1a over coordinate bit patterns and indices
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for v in vertices {
        for c in 0..3 {
            eat(&v.coords[c].to_le_bytes());
        }
    }
    for t in triangles {
        for &ix in t {
            eat(&(ix as u64).to_le_bytes());
        }
    }
    h
}

/// Load a mesh file (OFF or ASCII PLY by extension), normalize it and
/// assemble its operators.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    TriMesh::from_raw(io::read_raw(path)?)
}

pub fn load_mesh_as(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriMesh> {
    TriMesh::from_raw(io::read_raw_as(path, format)?)
}

/// Which way a point map's assignments point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    /// `assignments[m]` is the source vertex matched to target vertex `m`.
    TargetToSource,
    /// `assignments[n]` is the target vertex matched to source vertex `n`.
    SourceToTarget,
}

/// Discrete vertex-to-vertex correspondence, stored as the row-wise argmax
/// of the underlying 0/1 assignment matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointMap {
    pub assignments: Vec<usize>,
    pub direction: MapDirection,
}

impl PointMap {
    pub fn new(assignments: Vec<usize>, direction: MapDirection) -> PointMap {
        PointMap {
            assignments,
            direction,
        }
    }

    pub fn identity(n: usize, direction: MapDirection) -> PointMap {
        PointMap {
            assignments: (0..n).collect(),
            direction,
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Validate every entry against the pointed-into vertex count.
    pub fn validate(&self, num_vertices: usize) -> Result<()> {
        for (i, &a) in self.assignments.iter().enumerate() {
            if a >= num_vertices {
                return Err(Error::IndexOutOfRange {
                    what: "point map entry",
                    index: i,
                    len: num_vertices,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn tetrahedron_normalizes_to_unit_area() {
        let mesh = synth::tetrahedron().build().unwrap();
        assert_eq!(mesh.num_vertices(), 4);
        assert_eq!(mesh.num_triangles(), 4);
        assert!((mesh.surface_area() - 1.0).abs() < 1e-12);
        let mut centroid = Vector3::zeros();
        for (v, &m) in mesh.vertices.iter().zip(&mesh.vertex_masses) {
            centroid += m * v.coords;
        }
        assert!(centroid.norm() < 1e-12);
    }

    #[test]
    fn icosphere_row_sums_below_tolerance() {
        let mesh = synth::icosphere(3).build().unwrap();
        assert_eq!(mesh.num_vertices(), 642);
        let ones = vec![1.0; mesh.num_vertices()];
        let r = mesh.stiffness.mul_vec_alloc(&ones);
        let max = r.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(max < 1e-10 * mesh.stiffness.norm_inf());
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let raw = synth::icosphere(2).raw();
        let mut scaled = raw.clone();
        for v in &mut scaled.vertices {
            v.coords *= 7.3;
        }
        let a = TriMesh::from_raw(raw).unwrap();
        let b = TriMesh::from_raw(scaled).unwrap();
        for (va, vb) in a.vertices.iter().zip(&b.vertices) {
            assert!((va - vb).norm() < 1e-9);
        }
    }

    #[test]
    fn normals_are_unit_and_outward_on_sphere() {
        let mesh = synth::icosphere(2).build().unwrap();
        for (v, n) in mesh.vertices.iter().zip(&mesh.normals) {
            assert!((n.norm() - 1.0).abs() < 1e-9);
            // outward: aligned with the radial direction
            assert!(n.dot(&v.coords.normalize()) > 0.9);
        }
    }

    #[test]
    fn masses_positive_everywhere() {
        let mesh = synth::cylinder(16, 10, 0.3, 1.5, true).build().unwrap();
        assert!(mesh.vertex_masses.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn point_map_validation() {
        let pm = PointMap::new(vec![0, 2, 1], MapDirection::TargetToSource);
        assert!(pm.validate(3).is_ok());
        assert!(pm.validate(2).is_err());
    }
}
