//! Joint intrinsic-extrinsic product embeddings: spectral coordinates,
//! smoothed Cartesian coordinates and smoothed normals, each on its own
//! weighted channel.

use nalgebra::DMatrix;

use crate::alignment::FunctionalMap;
use crate::error::{Error, Result};
use crate::mesh::{compute_vertex_normals, TriMesh};
use crate::spectral::{smooth_at_level, ShellLevel, Smoothing, SpectralBasis};

/// Relative scaling of the three embedding channels. The spectral channel
/// is additionally damped per coordinate by `1/sqrt(1 + lambda_k)` when
/// `spectral_damping` is set, which keeps high-frequency coordinates from
/// dominating the nearest-neighbor metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelWeights {
    pub spectral: f64,
    pub coords: f64,
    pub normals: f64,
    pub spectral_damping: bool,
}

impl Default for ChannelWeights {
    fn default() -> Self {
        ChannelWeights {
            spectral: 1.0,
            coords: 1.0,
            normals: 1.0,
            spectral_damping: true,
        }
    }
}

impl ChannelWeights {
    pub fn extrinsic_only() -> Self {
        ChannelWeights {
            spectral: 0.0,
            ..Default::default()
        }
    }

    pub fn intrinsic_only() -> Self {
        ChannelWeights {
            coords: 0.0,
            normals: 0.0,
            ..Default::default()
        }
    }

    pub fn without_normals() -> Self {
        ChannelWeights {
            normals: 0.0,
            ..Default::default()
        }
    }
}

/// Per-coordinate damping shared by both shapes so their spectral channels
/// live in the same metric; the pencil spectra are averaged index-wise and
/// normalized by the first non-kernel eigenvalue, which keeps the damping
/// profile independent of the area scaling of the shapes.
pub fn damping_vector(
    weights: &ChannelWeights,
    lambda_src: &[f64],
    lambda_tgt: &[f64],
    k: usize,
) -> Vec<f64> {
    assert!(k <= lambda_src.len() && k <= lambda_tgt.len());
    let lambda_ref = if lambda_src.len() > 1 && lambda_tgt.len() > 1 {
        (0.5 * (lambda_src[1] + lambda_tgt[1])).max(1e-30)
    } else {
        1.0
    };
    // decay ~ 1/k keeps the total spectral energy bounded as K grows, so
    // fine levels stay free to refine extrinsically
    (0..k)
        .map(|i| {
            if weights.spectral_damping {
                1.0 / (1.0 + 0.5 * (lambda_src[i] + lambda_tgt[i]) / lambda_ref)
            } else {
                1.0
            }
        })
        .collect()
}

/// Per-vertex coordinates in the (K+6)-dimensional product space.
#[derive(Debug, Clone)]
pub struct ProductEmbedding {
    /// N x K weighted (and damped) spectral block.
    pub spectral: DMatrix<f64>,
    /// N x 3 weighted smoothed coordinates.
    pub coords: DMatrix<f64>,
    /// N x 3 weighted normals of the smoothed geometry (unit rows before
    /// channel weighting).
    pub normals: DMatrix<f64>,
}

impl ProductEmbedding {
    pub fn num_vertices(&self) -> usize {
        self.coords.nrows()
    }

    pub fn k(&self) -> usize {
        self.spectral.ncols()
    }

    pub fn width(&self) -> usize {
        self.k() + 6
    }

    /// Concatenated N x (K+6) matrix.
    pub fn concat(&self) -> DMatrix<f64> {
        let n = self.num_vertices();
        let mut m = DMatrix::zeros(n, self.width());
        m.columns_mut(0, self.k()).copy_from(&self.spectral);
        m.columns_mut(self.k(), 3).copy_from(&self.coords);
        m.columns_mut(self.k() + 3, 3).copy_from(&self.normals);
        m
    }

    /// Squared distance between row `i` of `self` and row `j` of `other`.
    pub fn row_distance2(&self, i: usize, other: &ProductEmbedding, j: usize) -> f64 {
        let mut acc = 0.0;
        for c in 0..self.k() {
            let d = self.spectral[(i, c)] - other.spectral[(j, c)];
            acc += d * d;
        }
        for c in 0..3 {
            let d = self.coords[(i, c)] - other.coords[(j, c)];
            acc += d * d;
            let d = self.normals[(i, c)] - other.normals[(j, c)];
            acc += d * d;
        }
        acc
    }
}

/// Embedding of the target (undeformed) shape at a smoothing level.
pub fn embed_target(
    mesh: &TriMesh,
    basis: &SpectralBasis,
    level: &ShellLevel,
    weights: &ChannelWeights,
    damping: &[f64],
    smoothing: Smoothing,
) -> ProductEmbedding {
    let k = level.spectral_dim(basis.k_total());
    assert_eq!(damping.len(), k, "damping vector must match spectral dim");
    let n = mesh.num_vertices();

    let mut spectral = DMatrix::zeros(n, k);
    for c in 0..k {
        let w = weights.spectral * damping[c];
        for i in 0..n {
            spectral[(i, c)] = w * basis.phi()[(i, c)];
        }
    }
    let smoothed = smooth_at_level(basis, &mesh.coords_matrix(), level, smoothing);
    let normals = smoothed_normals(mesh, &smoothed, weights.normals);
    ProductEmbedding {
        spectral,
        coords: weights.coords * smoothed,
        normals,
    }
}

/// Embedding of the source shape morphed by the functional map `c` (its
/// spectral block) and displacement coefficients `tau` (its coordinates).
pub fn embed_source_morphed(
    mesh: &TriMesh,
    basis: &SpectralBasis,
    level: &ShellLevel,
    c: &FunctionalMap,
    tau: &DMatrix<f64>,
    weights: &ChannelWeights,
    damping: &[f64],
    smoothing: Smoothing,
) -> Result<ProductEmbedding> {
    let k = level.spectral_dim(basis.k_total());
    if c.dim() != k || tau.nrows() != k || tau.ncols() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "level K={k} with C {}x{} and tau {}x{}",
            c.dim(),
            c.dim(),
            tau.nrows(),
            tau.ncols()
        )));
    }
    assert_eq!(damping.len(), k);
    let n = mesh.num_vertices();

    let mut damped_phi = DMatrix::zeros(n, k);
    for col in 0..k {
        for i in 0..n {
            damped_phi[(i, col)] = damping[col] * basis.phi()[(i, col)];
        }
    }
    // morphed spectral block: damped Phi_K C^dagger
    let spectral = weights.spectral * (damped_phi * c.pseudo_inverse());

    let smoothed = smooth_at_level(basis, &mesh.coords_matrix(), level, smoothing);
    let deformed = &smoothed + basis.phi().columns(0, k) * tau;
    let normals = smoothed_normals(mesh, &deformed, weights.normals);
    Ok(ProductEmbedding {
        spectral,
        coords: weights.coords * deformed,
        normals,
    })
}

/// Normals recomputed from (smoothed or deformed) positions on the original
/// connectivity, so every row stays exactly unit length.
fn smoothed_normals(mesh: &TriMesh, positions: &DMatrix<f64>, weight: f64) -> DMatrix<f64> {
    let pts: Vec<nalgebra::Point3<f64>> = (0..positions.nrows())
        .map(|i| nalgebra::Point3::new(positions[(i, 0)], positions[(i, 1)], positions[(i, 2)]))
        .collect();
    let normals = compute_vertex_normals(&pts, &mesh.triangles);
    DMatrix::from_fn(positions.nrows(), 3, |i, c| weight * normals[i][c])
}

/// Write the mesh as PLY with the first three spectral dimensions mapped to
/// vertex colors.
pub fn export_spectral_colors(
    path: impl AsRef<std::path::Path>,
    mesh: &TriMesh,
    basis: &SpectralBasis,
) -> Result<()> {
    // skip the constant kernel column when enough columns exist
    let first = usize::from(basis.k_total() > 3);
    let k = basis.k_total().saturating_sub(first).min(3);
    let mut colors = vec![[128u8; 3]; mesh.num_vertices()];
    for c in 0..k {
        let col = basis.phi().column(first + c);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in col.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = (hi - lo).max(1e-30);
        for (i, &v) in col.iter().enumerate() {
            colors[i][c] = (255.0 * (v - lo) / span).round() as u8;
        }
    }
    crate::mesh::io::write_ply_with_colors(path, &mesh.vertices, &mesh.triangles, &colors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::FunctionalMap;
    use crate::spectral::compute_basis;
    use crate::synth;

    use super::Smoothing;

    fn setup() -> (TriMesh, SpectralBasis) {
        let mesh = synth::icosphere(2).build().unwrap();
        let basis = compute_basis(&mesh, 30).unwrap();
        (mesh, basis)
    }

    #[test]
    fn identity_morph_matches_target_embedding() {
        let (mesh, basis) = setup();
        let level = ShellLevel::new(9.0, 0.5);
        let w = ChannelWeights::default();
        let d = damping_vector(&w, basis.eigenvalues(), basis.eigenvalues(), 9);
        let tgt = embed_target(&mesh, &basis, &level, &w, &d, Smoothing::Shell);
        let c = FunctionalMap::identity(9);
        let tau = DMatrix::zeros(9, 3);
        let src = embed_source_morphed(&mesh, &basis, &level, &c, &tau, &w, &d, Smoothing::Shell).unwrap();
        assert!((&src.spectral - &tgt.spectral).abs().max() < 1e-12);
        assert!((&src.coords - &tgt.coords).abs().max() < 1e-12);
        assert!((&src.normals - &tgt.normals).abs().max() < 1e-12);
    }

    #[test]
    fn coordinate_block_is_near_complete_at_high_level() {
        let (mesh, basis) = setup();
        let sigma = 0.5;
        let level = ShellLevel::new(basis.k_total() as f64 + 7.0 / sigma, sigma);
        let w = ChannelWeights::default();
        let d = damping_vector(&w, basis.eigenvalues(), basis.eigenvalues(), 30);
        let emb = embed_target(&mesh, &basis, &level, &w, &d, Smoothing::Shell);
        // full reconstruction at K_total
        let full = crate::spectral::spectral_reconstruct(&basis, &mesh.coords_matrix(), 30).unwrap();
        let rel = (&emb.coords - &full).abs().max() / full.abs().max();
        assert!(rel < 1e-3, "rel {rel}");
    }

    #[test]
    fn pure_channel_ablations_zero_blocks() {
        let (mesh, basis) = setup();
        let level = ShellLevel::new(6.0, 0.5);
        let we = ChannelWeights::extrinsic_only();
        let d = damping_vector(&we, basis.eigenvalues(), basis.eigenvalues(), 6);
        let ext = embed_target(&mesh, &basis, &level, &we, &d, Smoothing::Shell);
        assert_eq!(ext.spectral.abs().max(), 0.0);
        assert!(ext.coords.abs().max() > 0.0);

        let wi = ChannelWeights::intrinsic_only();
        let int = embed_target(&mesh, &basis, &level, &wi, &d, Smoothing::Shell);
        assert_eq!(int.coords.abs().max(), 0.0);
        assert_eq!(int.normals.abs().max(), 0.0);
        assert!(int.spectral.abs().max() > 0.0);
    }

    #[test]
    fn translation_tau_moves_coords_not_normals() {
        let (mesh, basis) = setup();
        let level = ShellLevel::new(8.0, 0.5);
        let w = ChannelWeights::default();
        let d = damping_vector(&w, basis.eigenvalues(), basis.eigenvalues(), 8);
        let c = FunctionalMap::identity(8);
        let zero = DMatrix::zeros(8, 3);
        let base = embed_source_morphed(&mesh, &basis, &level, &c, &zero, &w, &d, Smoothing::Shell).unwrap();

        // tau realizing the constant translation t: only the kernel row is
        // nonzero, with coefficient t / phi_1 (phi_1 = 1 on unit-area mesh)
        let t = nalgebra::Vector3::new(0.03, -0.02, 0.05);
        let mut tau = DMatrix::zeros(8, 3);
        for c_ix in 0..3 {
            tau[(0, c_ix)] = t[c_ix];
        }
        let shifted = embed_source_morphed(&mesh, &basis, &level, &c, &tau, &w, &d, Smoothing::Shell).unwrap();
        for i in 0..mesh.num_vertices() {
            for c_ix in 0..3 {
                let moved = shifted.coords[(i, c_ix)] - base.coords[(i, c_ix)];
                assert!((moved - t[c_ix]).abs() < 1e-9);
            }
        }
        assert!((&shifted.normals - &base.normals).abs().max() < 1e-9);
    }

    #[test]
    fn orthogonal_map_preserves_spectral_gram_without_damping() {
        let (mesh, basis) = setup();
        let level = ShellLevel::new(6.0, 0.5);
        let mut w = ChannelWeights::default();
        w.spectral_damping = false;
        let d = damping_vector(&w, basis.eigenvalues(), basis.eigenvalues(), 6);
        // a planted orthogonal map: Givens rotation in coordinates 2 and 4
        let mut q = DMatrix::<f64>::identity(6, 6);
        let (a, b) = (0.6f64, 0.8f64);
        q[(2, 2)] = a;
        q[(2, 4)] = -b;
        q[(4, 2)] = b;
        q[(4, 4)] = a;
        let c = FunctionalMap::orthogonal(q);
        let tau = DMatrix::zeros(6, 3);
        let emb = embed_source_morphed(&mesh, &basis, &level, &c, &tau, &w, &d, Smoothing::Shell).unwrap();

        let gram = |block: &DMatrix<f64>| -> DMatrix<f64> {
            let mut weighted = block.clone();
            for i in 0..weighted.nrows() {
                for col in 0..weighted.ncols() {
                    weighted[(i, col)] *= mesh.vertex_masses[i];
                }
            }
            block.tr_mul(&weighted)
        };
        let g_phi = gram(&basis.phi().columns(0, 6).into_owned());
        let g_emb = gram(&emb.spectral);
        assert!((&g_phi - &g_emb).abs().max() < 1e-8);
    }

    #[test]
    fn doubling_coordinate_weight_doubles_that_block_only() {
        let (mesh, basis) = setup();
        let level = ShellLevel::new(7.0, 0.5);
        let w1 = ChannelWeights::default();
        let mut w2 = ChannelWeights::default();
        w2.coords = 2.0;
        let d = damping_vector(&w1, basis.eigenvalues(), basis.eigenvalues(), 7);
        let a = embed_target(&mesh, &basis, &level, &w1, &d, Smoothing::Shell);
        let b = embed_target(&mesh, &basis, &level, &w2, &d, Smoothing::Shell);
        assert!((&b.coords - 2.0 * &a.coords).abs().max() < 1e-12);
        assert!((&b.spectral - &a.spectral).abs().max() < 1e-12);
        assert!((&b.normals - &a.normals).abs().max() < 1e-12);
    }

    #[test]
    fn normal_rows_unit_before_weighting() {
        let (mesh, basis) = setup();
        let level = ShellLevel::new(6.0, 0.5);
        let mut w = ChannelWeights::default();
        w.normals = 3.5;
        let d = damping_vector(&w, basis.eigenvalues(), basis.eigenvalues(), 6);
        let emb = embed_target(&mesh, &basis, &level, &w, &d, Smoothing::Shell);
        for i in 0..emb.num_vertices() {
            let norm = (0..3)
                .map(|c| emb.normals[(i, c)].powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((norm - 3.5).abs() < 1e-6 * 3.5);
        }
    }
}
