//! Cotangent stiffness matrix and lumped (barycentric) mass vector.

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Assemble the cotangent stiffness matrix and barycentric vertex masses.
///
/// The stiffness is the positive semi-definite convention: off-diagonal
/// entries are `-w_ij` with `w_ij = (cot a_ij + cot b_ij) / 2` (one cotangent
/// on boundary edges), diagonal entries make every row sum to zero, so
/// `x^T S x = sum_ij w_ij (x_i - x_j)^2` and the pencil `(S, M)` has
/// nonnegative eigenvalues. Negative cotangent weights are kept as is;
/// `clamp_negative` replaces them with zero for pathological meshes.
///
/// Masses are one third of the incident triangle areas per vertex.
pub fn assemble_laplacian(
    vertices: &[Point3<f64>],
    triangles: &[[usize; 3]],
    clamp_negative: bool,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = vertices.len();
    let total_area: f64 = triangles
        .iter()
        .map(|t| triangle_area(vertices, t))
        .sum();
    if !(total_area > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    let area_floor = 1e-12 * total_area;

    let mut masses = vec![0.0f64; n];
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(triangles.len() * 12);
    let mut used = 0usize;
    for tri in triangles {
        let area = triangle_area(vertices, tri);
        if area <= area_floor {
            continue;
        }
        used += 1;
        for corner in 0..3 {
            let i = tri[corner];
            let j = tri[(corner + 1) % 3];
            let k = tri[(corner + 2) % 3];
            masses[i] += area / 3.0;
            // angle at i is opposite the edge (j, k)
            let u = vertices[j] - vertices[i];
            let v = vertices[k] - vertices[i];
            let cross = u.cross(&v).norm();
            let cot = if cross > 0.0 { u.dot(&v) / cross } else { 0.0 };
            let mut w = 0.5 * cot;
            if clamp_negative && w < 0.0 {
                w = 0.0;
            }
            // half-weight per incident triangle; interior edges get both halves
            triplets.push((j, k, -w));
            triplets.push((k, j, -w));
            triplets.push((j, j, w));
            triplets.push((k, k, w));
        }
    }
    if used == 0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok((CsrMatrix::from_triplets(n, &triplets), masses))
}

pub fn triangle_area(vertices: &[Point3<f64>], tri: &[usize; 3]) -> f64 {
    let u = vertices[tri[1]] - vertices[tri[0]];
    let v = vertices[tri[2]] - vertices[tri[0]];
    0.5 * u.cross(&v).norm()
}
