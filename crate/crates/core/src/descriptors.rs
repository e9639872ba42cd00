//! Pointwise feature functions for the functional-map data term: built-in
//! heat kernel signatures plus import of externally computed descriptors.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::parallel;
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Hks,
    External,
}

/// Per-vertex descriptor matrix with unit mass-weighted L2 columns.
#[derive(Debug, Clone)]
pub struct DescriptorField {
    pub values: DMatrix<f64>,
    pub kind: DescriptorKind,
    /// Diffusion times for HKS columns; empty for external fields.
    pub time_samples: Vec<f64>,
}

impl DescriptorField {
    pub fn num_vertices(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    /// Column-wise concatenation; both fields must share the vertex count.
    pub fn concat(&self, other: &DescriptorField) -> Result<DescriptorField> {
        if self.num_vertices() != other.num_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "descriptor rows {} vs {}",
                self.num_vertices(),
                other.num_vertices()
            )));
        }
        let mut values = DMatrix::zeros(self.num_vertices(), self.dims() + other.dims());
        values.columns_mut(0, self.dims()).copy_from(&self.values);
        values
            .columns_mut(self.dims(), other.dims())
            .copy_from(&other.values);
        Ok(DescriptorField {
            values,
            kind: if self.kind == other.kind {
                self.kind
            } else {
                DescriptorKind::External
            },
            time_samples: Vec::new(),
        })
    }
}

/// Heat kernel signature `h(x, t) = sum_k exp(-lambda_k t) phi_k(x)^2` at
/// `num_times` log-spaced diffusion times spanning
/// `[4 ln 10 / lambda_max, 4 ln 10 / lambda_2]`.
/// Each time column is normalized to unit mass-weighted L2 norm.
pub fn compute_hks(basis: &SpectralBasis, num_times: usize) -> Result<DescriptorField> {
    if basis.k_total() < 2 {
        return Err(Error::DegenerateSpectrum(
            "HKS needs at least two eigenpairs".to_string(),
        ));
    }
    let lambda2 = basis.eigenvalues()[1];
    let lambda_max = *basis.eigenvalues().last().unwrap();
    if lambda2 <= 1e-12 {
        return Err(Error::DegenerateSpectrum(format!(
            "lambda_2 = {lambda2:.3e}; is the mesh disconnected?"
        )));
    }
    let four_ln10 = 4.0 * 10.0f64.ln();
    let t_min = four_ln10 / lambda_max;
    let t_max = four_ln10 / lambda2;
    let times: Vec<f64> = (0..num_times)
        .map(|i| {
            let f = if num_times == 1 {
                0.0
            } else {
                i as f64 / (num_times - 1) as f64
            };
            t_min * (t_max / t_min).powf(f)
        })
        .collect();

    let n = basis.num_vertices();
    let phi = basis.phi();
    let eigenvalues = basis.eigenvalues();
    let columns: Vec<Vec<f64>> = parallel::collect_indexed(num_times, |ti| {
        let t = times[ti];
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for k in 0..basis.k_total() {
                    acc += (-eigenvalues[k] * t).exp() * phi[(i, k)] * phi[(i, k)];
                }
                acc
            })
            .collect()
    });
    let mut values = DMatrix::zeros(n, num_times);
    for (c, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[(i, c)] = v;
        }
    }
    normalize_columns(&mut values, basis.masses())?;
    Ok(DescriptorField {
        values,
        kind: DescriptorKind::Hks,
        time_samples: times,
    })
}

/// Load an ASCII matrix (one row per vertex, whitespace-separated) and
/// rescale every column to unit mass-weighted L2 norm.
pub fn load_external_descriptors(
    path: impl AsRef<Path>,
    mesh: &TriMesh,
) -> Result<DescriptorField> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in body.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = t
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(path, format!("bad number {tok:?} on line {}", ln + 1)))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(
                    path,
                    format!("row {} has {} columns, expected {}", ln + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "{} descriptor rows for {} vertices",
            rows.len(),
            mesh.num_vertices()
        )));
    }
    let d = rows.first().map_or(0, |r| r.len());
    if d == 0 {
        return Err(Error::DimensionMismatch("no descriptor columns".to_string()));
    }
    for row in &rows {
        for &v in row {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue("external descriptor".to_string()));
            }
        }
    }
    let mut values = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    normalize_columns(&mut values, &mesh.vertex_masses)?;
    Ok(DescriptorField {
        values,
        kind: DescriptorKind::External,
        time_samples: Vec::new(),
    })
}

fn normalize_columns(values: &mut DMatrix<f64>, masses: &[f64]) -> Result<()> {
    for c in 0..values.ncols() {
        let mut norm2 = 0.0;
        for i in 0..values.nrows() {
            norm2 += masses[i] * values[(i, c)] * values[(i, c)];
        }
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(Error::NonFiniteValue(format!(
                "descriptor column {c} has mass norm {norm2}"
            )));
        }
        let s = 1.0 / norm2.sqrt();
        for i in 0..values.nrows() {
            values[(i, c)] *= s;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::compute_basis;
    use crate::synth;

    fn write_tmp(name: &str, body: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("shapecorr-desc-{}-{name}", std::process::id()));
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn hks_constant_on_sphere_and_unit_columns() {
        let mesh = synth::icosphere(3).build().unwrap();
        let basis = compute_basis(&mesh, 40).unwrap();
        let hks = compute_hks(&basis, 8).unwrap();
        for c in 0..hks.dims() {
            let col = hks.values.column(c);
            let mean: f64 = col.iter().sum::<f64>() / col.len() as f64;
            for &v in col.iter() {
                assert!(
                    (v - mean).abs() < 0.02 * mean.abs(),
                    "column {c}: {v} vs mean {mean}"
                );
            }
            let norm2: f64 = (0..mesh.num_vertices())
                .map(|i| mesh.vertex_masses[i] * col[i] * col[i])
                .sum();
            assert!((norm2.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn spike_vertex_dominates_small_times() {
        let plain = synth::icosphere(2).build().unwrap();
        let spiky = synth::sphere_with_spike(2, 1.6).build().unwrap();
        let kb = 60;
        let b_spiky = compute_basis(&spiky, kb).unwrap();
        let hks = compute_hks(&b_spiky, 8).unwrap();
        // smallest time = first column; the spike carries extreme curvature
        let col = hks.values.column(0);
        let argmax = (0..spiky.num_vertices())
            .max_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, 0, "spike vertex should dominate small-t HKS");
        drop(plain);
    }

    #[test]
    fn hks_invariant_under_basis_sign_flips() {
        let mesh = synth::biped(1, synth::ArmPose::LeftForward).build().unwrap();
        let basis = compute_basis(&mesh, 12).unwrap();
        let hks = compute_hks(&basis, 4).unwrap();
        // flipping eigenvector signs leaves phi^2 untouched
        let mut phi = basis.phi().clone();
        for c in [1usize, 3, 7] {
            for i in 0..phi.nrows() {
                phi[(i, c)] = -phi[(i, c)];
            }
        }
        let flipped = crate::spectral::SpectralBasis::from_parts(
            basis.eigenvalues().to_vec(),
            phi,
            basis.masses().to_vec(),
            basis.mesh_hash(),
        );
        let hks2 = compute_hks(&flipped, 4).unwrap();
        let diff = (&hks.values - &hks2.values).abs().max();
        assert!(diff < 1e-10);
    }

    #[test]
    fn external_all_ones_loads_as_ones() {
        let mesh = synth::icosphere(1).build().unwrap();
        let body = "1.0\n".repeat(mesh.num_vertices());
        let p = write_tmp("ones.txt", &body);
        let d = load_external_descriptors(&p, &mesh).unwrap();
        assert_eq!(d.dims(), 1);
        // unit-area mesh: the unit-norm constant column is exactly 1
        for i in 0..d.num_vertices() {
            assert!((d.values[(i, 0)] - 1.0).abs() < 1e-9);
        }
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn external_scaling_is_immaterial() {
        let mesh = synth::icosphere(1).build().unwrap();
        let body_a: String = (0..mesh.num_vertices())
            .map(|i| format!("{} {}\n", (i as f64).sin() + 2.0, i as f64))
            .collect();
        let body_b: String = (0..mesh.num_vertices())
            .map(|i| format!("{} {}\n", 37.5 * ((i as f64).sin() + 2.0), 37.5 * i as f64))
            .collect();
        let pa = write_tmp("a.txt", &body_a);
        let pb = write_tmp("b.txt", &body_b);
        let da = load_external_descriptors(&pa, &mesh).unwrap();
        let db = load_external_descriptors(&pb, &mesh).unwrap();
        assert!((&da.values - &db.values).abs().max() < 1e-9);
        std::fs::remove_file(&pa).ok();
        std::fs::remove_file(&pb).ok();
    }

    #[test]
    fn row_count_mismatch_rejected() {
        let mesh = synth::icosphere(1).build().unwrap();
        let body = "1.0\n".repeat(mesh.num_vertices() - 1);
        let p = write_tmp("short.txt", &body);
        assert!(matches!(
            load_external_descriptors(&p, &mesh),
            Err(Error::DimensionMismatch(_))
        ));
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn nan_rejected() {
        let mesh = synth::tetrahedron().build().unwrap();
        let p = write_tmp("nan.txt", "1\n2\nNaN\n4\n");
        assert!(matches!(
            load_external_descriptors(&p, &mesh),
            Err(Error::NonFiniteValue(_))
        ));
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn concat_matches_combined_load() {
        let mesh = synth::tetrahedron().build().unwrap();
        let pa = write_tmp("c1.txt", "1\n2\n3\n4\n");
        let pb = write_tmp("c2.txt", "5\n6\n7\n8\n");
        let pc = write_tmp("c12.txt", "1 5\n2 6\n3 7\n4 8\n");
        let a = load_external_descriptors(&pa, &mesh).unwrap();
        let b = load_external_descriptors(&pb, &mesh).unwrap();
        let joint = load_external_descriptors(&pc, &mesh).unwrap();
        let cat = a.concat(&b).unwrap();
        assert!((&cat.values - &joint.values).abs().max() < 1e-12);
        for p in [pa, pb, pc] {
            std::fs::remove_file(&p).ok();
        }
    }
}
