//! Spectral basis of the Laplace-Beltrami pencil, spectral reconstruction
//! and the sigmoid-weighted smoothing operator behind the coarse-to-fine
//! hierarchy.

pub mod cache;
mod eigs;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub use eigs::CONVERGENCE_TOL;

/// Which eigensolver route to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverPath {
    /// Dense below [`DENSE_LIMIT`] vertices, shift-invert Lanczos above.
    #[default]
    Auto,
    Dense,
    ShiftInvert,
}

/// Meshes up to this size take the dense eigensolver under
/// [`SolverPath::Auto`].
pub const DENSE_LIMIT: usize = 1500;

/// First `k_total` eigenpairs of the pencil (stiffness, masses),
/// mass-orthonormal, eigenvalues ascending from the kernel.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    phi: DMatrix<f64>,
    masses: Vec<f64>,
    mesh_hash: u64,
}

impl SpectralBasis {
    pub(crate) fn from_parts(
        eigenvalues: Vec<f64>,
        phi: DMatrix<f64>,
        masses: Vec<f64>,
        mesh_hash: u64,
    ) -> SpectralBasis {
        SpectralBasis {
            eigenvalues,
            phi,
            masses,
            mesh_hash,
        }
    }

    pub fn k_total(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.phi.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// N x K_total eigenvector matrix.
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mesh_hash(&self) -> u64 {
        self.mesh_hash
    }

    /// Spectral coefficients `Phi^T M x` of per-vertex data (N x D).
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.phi.nrows());
        let mut weighted = x.clone();
        for (i, &m) in self.masses.iter().enumerate() {
            for c in 0..weighted.ncols() {
                weighted[(i, c)] *= m;
            }
        }
        self.phi.tr_mul(&weighted)
    }

    /// Mass-weighted pseudoinverse applied to function columns:
    /// identical to [`SpectralBasis::project`], named for call sites that
    /// read like the functional-map algebra.
    pub fn pullback(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        self.project(f)
    }

    /// Reconstruct vertex data from coefficients (K_total x D, or fewer
    /// leading rows).
    pub fn synthesize(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        let k = coeffs.nrows();
        assert!(k <= self.k_total());
        self.phi.columns(0, k) * coeffs
    }

    /// Max deviation of `Phi^T M Phi` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.project(&self.phi);
        let mut worst = 0.0f64;
        for a in 0..gram.nrows() {
            for b in 0..gram.ncols() {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((gram[(a, b)] - target).abs());
            }
        }
        worst
    }
}

/// Compute the basis with the automatic solver route.
pub fn compute_basis(mesh: &TriMesh, k_total: usize) -> Result<SpectralBasis> {
    compute_basis_with(mesh, k_total, SolverPath::Auto)
}

pub fn compute_basis_with(
    mesh: &TriMesh,
    k_total: usize,
    path: SolverPath,
) -> Result<SpectralBasis> {
    let n = mesh.num_vertices();
    if k_total == 0 || k_total > n.saturating_sub(1) {
        return Err(Error::KTooLarge {
            requested: k_total,
            max: n.saturating_sub(1),
        });
    }
    let dense = match path {
        SolverPath::Auto => n <= DENSE_LIMIT,
        SolverPath::Dense => true,
        SolverPath::ShiftInvert => false,
    };
    let (eigenvalues, phi) = if dense {
        eigs::smallest_eigenpairs_dense(&mesh.stiffness, &mesh.vertex_masses, k_total)?
    } else {
        eigs::smallest_eigenpairs_lanczos(&mesh.stiffness, &mesh.vertex_masses, k_total)?
    };
    if eigenvalues[0] > 1e-8 {
        eprintln!(
            "warning: smallest eigenvalue {:.3e} is far from zero; mesh may be disconnected from its kernel",
            eigenvalues[0]
        );
    }
    Ok(SpectralBasis {
        eigenvalues,
        phi,
        masses: mesh.vertex_masses.clone(),
        mesh_hash: mesh.hash(),
    })
}

/// Smoothing level of the shell operator: sigmoid weights
/// `s_k = 1 / (1 + exp(sigma (k - K)))` over the 1-based eigenpair index.
/// `k` may be fractional; the hierarchy's logarithmic schedule produces
/// real-valued levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellLevel {
    pub k: f64,
    pub sigma: f64,
}

impl ShellLevel {
    pub fn new(k: f64, sigma: f64) -> ShellLevel {
        assert!(k > 0.0 && sigma > 0.0, "level and steepness must be positive");
        ShellLevel { k, sigma }
    }

    /// Weights for eigenpair indices 1..=k_total; strictly decreasing, each
    /// in (0, 1).
    pub fn weights(&self, k_total: usize) -> Vec<f64> {
        (1..=k_total)
            .map(|idx| 1.0 / (1.0 + (self.sigma * (idx as f64 - self.k)).exp()))
            .collect()
    }

    /// Number of spectral coordinates used for embeddings at this level.
    pub fn spectral_dim(&self, k_total: usize) -> usize {
        (self.k.round() as usize).clamp(1, k_total)
    }
}

/// How levels smooth geometry: the sigmoid-weighted shell operator or the
/// hard spectral truncation it generalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    Shell,
    HardTruncation,
}

/// Smooth per-vertex data at a level under either operator. Hard truncation
/// keeps the `round(K)` leading coefficients.
pub fn smooth_at_level(
    basis: &SpectralBasis,
    x: &DMatrix<f64>,
    level: &ShellLevel,
    mode: Smoothing,
) -> DMatrix<f64> {
    match mode {
        Smoothing::Shell => smooth_shell(basis, x, level),
        Smoothing::HardTruncation => {
            let k = level.spectral_dim(basis.k_total());
            spectral_reconstruct(basis, x, k).expect("spectral_dim clamps to k_total")
        }
    }
}

/// Hard-truncated reconstruction `T_K = Phi_K Phi_K^T M X`.
pub fn spectral_reconstruct(
    basis: &SpectralBasis,
    x: &DMatrix<f64>,
    k: usize,
) -> Result<DMatrix<f64>> {
    if k == 0 || k > basis.k_total() {
        return Err(Error::KTooLarge {
            requested: k,
            max: basis.k_total(),
        });
    }
    let coeffs = basis.project(x);
    Ok(basis.phi.columns(0, k) * coeffs.rows(0, k))
}

/// Sigmoid-truncated smoothing: `X_K = sum_k s_k (phi_k phi_k^T M) X`,
/// summed over the available `k_total` eigenpairs.
pub fn smooth_shell(basis: &SpectralBasis, x: &DMatrix<f64>, level: &ShellLevel) -> DMatrix<f64> {
    let mut coeffs = basis.project(x);
    let weights = level.weights(basis.k_total());
    for (row, &w) in weights.iter().enumerate() {
        for c in 0..coeffs.ncols() {
            coeffs[(row, c)] *= w;
        }
    }
    &basis.phi * coeffs
}

/// Closed-form level-to-level bound `|1 - e^{-sigma}|`.
pub fn transition_bound(sigma: f64) -> f64 {
    (1.0 - (-sigma).exp()).abs()
}

/// Ratios `||S_{K+1}(x) - S_K(x)|| / ||S_{K+1}(x)||` in the mass-weighted
/// norm for each integer `K` in `k_range`. Because the basis is
/// mass-orthonormal these norms are evaluated exactly on the coefficients.
pub fn verify_transition_bound(
    basis: &SpectralBasis,
    x: &DMatrix<f64>,
    sigma: f64,
    k_range: std::ops::RangeInclusive<usize>,
) -> Vec<f64> {
    let row_norms = coefficient_row_norms(basis, x);
    k_range
        .map(|k| {
            let wk = ShellLevel::new(k as f64, sigma).weights(basis.k_total());
            let wk1 = ShellLevel::new(k as f64 + 1.0, sigma).weights(basis.k_total());
            ratio(&row_norms, &wk, &wk1)
        })
        .collect()
}

/// Same ratios for the hard-truncation analog `T_K`; used to demonstrate
/// that indicator weights admit arbitrarily large jumps.
pub fn spectral_transition_ratios(
    basis: &SpectralBasis,
    x: &DMatrix<f64>,
    k_range: std::ops::RangeInclusive<usize>,
) -> Vec<f64> {
    let row_norms = coefficient_row_norms(basis, x);
    let k_total = basis.k_total();
    k_range
        .map(|k| {
            let wk: Vec<f64> = (1..=k_total).map(|i| if i <= k { 1.0 } else { 0.0 }).collect();
            let wk1: Vec<f64> = (1..=k_total)
                .map(|i| if i <= k + 1 { 1.0 } else { 0.0 })
                .collect();
            ratio(&row_norms, &wk, &wk1)
        })
        .collect()
}

fn coefficient_row_norms(basis: &SpectralBasis, x: &DMatrix<f64>) -> Vec<f64> {
    let coeffs = basis.project(x);
    (0..coeffs.nrows())
        .map(|r| (0..coeffs.ncols()).map(|c| coeffs[(r, c)].powi(2)).sum())
        .collect()
}

fn ratio(row_norms2: &[f64], wk: &[f64], wk1: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&n2, &a), &b) in row_norms2.iter().zip(wk).zip(wk1) {
        num += (b - a) * (b - a) * n2;
        den += b * b * n2;
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use nalgebra::DMatrix;

    fn coords(mesh: &TriMesh) -> DMatrix<f64> {
        let n = mesh.num_vertices();
        DMatrix::from_fn(n, 3, |i, c| mesh.vertices[i].coords[c])
    }

    fn mass_norm(basis: &SpectralBasis, x: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..x.nrows() {
            for c in 0..x.ncols() {
                acc += basis.masses()[i] * x[(i, c)] * x[(i, c)];
            }
        }
        acc.sqrt()
    }

    #[test]
    fn k_too_large_contract() {
        let mesh = synth::tetrahedron().build().unwrap();
        assert!(compute_basis(&mesh, 3).is_ok());
        assert!(matches!(
            compute_basis(&mesh, 4),
            Err(Error::KTooLarge { requested: 4, max: 3 })
        ));
    }

    #[test]
    fn kernel_vector_is_unit_constant() {
        let mesh = synth::icosphere(2).build().unwrap();
        let basis = compute_basis(&mesh, 1).unwrap();
        assert!(basis.eigenvalues()[0].abs() < 1e-10);
        for i in 0..mesh.num_vertices() {
            assert!((basis.phi()[(i, 0)] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn reconstruct_k1_is_mass_centroid() {
        let mesh = synth::icosphere(1).build().unwrap();
        let basis = compute_basis(&mesh, 5).unwrap();
        let x = DMatrix::from_fn(mesh.num_vertices(), 2, |i, c| {
            (i as f64 * 0.37 + c as f64).sin()
        });
        let t1 = spectral_reconstruct(&basis, &x, 1).unwrap();
        // mass-weighted centroid per column (total mass = 1)
        for c in 0..2 {
            let centroid: f64 = (0..x.nrows())
                .map(|i| mesh.vertex_masses[i] * x[(i, c)])
                .sum();
            for i in 0..x.nrows() {
                assert!((t1[(i, c)] - centroid).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reconstruct_is_idempotent_and_monotone() {
        let mesh = synth::biped(2, synth::ArmPose::LeftForward).build().unwrap();
        let basis = compute_basis(&mesh, 40).unwrap();
        let x = coords(&mesh);
        let t9 = spectral_reconstruct(&basis, &x, 9).unwrap();
        let t9_again = spectral_reconstruct(&basis, &t9, 9).unwrap();
        assert!(mass_norm(&basis, &(&t9_again - &t9)) < 1e-9);

        // monotone L2 error in K
        let mut last = f64::INFINITY;
        for k in [1usize, 4, 9, 16, 25, 40] {
            let tk = spectral_reconstruct(&basis, &x, k).unwrap();
            let err = mass_norm(&basis, &(&tk - &x));
            assert!(err <= last + 1e-12, "error grew at K={k}: {err} > {last}");
            last = err;
        }
    }

    #[test]
    fn full_span_reconstruction_is_exact() {
        let mesh = synth::icosphere(1).build().unwrap();
        let n = mesh.num_vertices();
        let basis = compute_basis(&mesh, n - 1).unwrap();
        // any field in the basis span reconstructs exactly at K = K_total
        let coeffs = DMatrix::from_fn(n - 1, 3, |i, c| ((i * 3 + c) as f64 * 0.61).cos());
        let x = basis.synthesize(&coeffs);
        let t = spectral_reconstruct(&basis, &x, n - 1).unwrap();
        assert!(mass_norm(&basis, &(&t - &x)) < 1e-6);
    }

    #[test]
    fn shell_with_steep_sigmoid_matches_truncation() {
        let mesh = synth::icosphere(2).build().unwrap();
        let basis = compute_basis(&mesh, 30).unwrap();
        let x = coords(&mesh);
        let t9 = spectral_reconstruct(&basis, &x, 9).unwrap();
        // sigma -> infinity turns the sigmoid into the indicator; K + 0.5
        // centers the cut between indices 9 and 10
        let shell = smooth_shell(&basis, &x, &ShellLevel::new(9.5, 100.0));
        let rel = mass_norm(&basis, &(&shell - &t9)) / mass_norm(&basis, &t9);
        assert!(rel < 1e-6, "rel {rel}");
    }

    #[test]
    fn shell_far_level_matches_full_reconstruction() {
        let mesh = synth::icosphere(2).build().unwrap();
        let basis = compute_basis(&mesh, 25).unwrap();
        let x = coords(&mesh);
        let sigma = 0.5;
        let full = spectral_reconstruct(&basis, &x, 25).unwrap();
        let level = ShellLevel::new(25.0 + 7.0 / sigma, sigma);
        let shell = smooth_shell(&basis, &x, &level);
        let rel = mass_norm(&basis, &(&shell - &full)) / mass_norm(&basis, &full);
        assert!(rel < 1e-3, "rel {rel}");
    }

    #[test]
    fn shell_is_linear() {
        let mesh = synth::icosphere(1).build().unwrap();
        let basis = compute_basis(&mesh, 12).unwrap();
        let level = ShellLevel::new(5.3, 0.7);
        let x = DMatrix::from_fn(42, 3, |i, c| ((i + c) as f64 * 0.21).sin());
        let z = DMatrix::from_fn(42, 3, |i, c| ((i * c + 1) as f64 * 0.13).cos());
        let lhs = smooth_shell(&basis, &(2.5 * &x + (-1.25) * &z), &level);
        let rhs = 2.5 * smooth_shell(&basis, &x, &level) - 1.25 * smooth_shell(&basis, &z, &level);
        let diff = (&lhs - &rhs).abs().max();
        assert!(diff < 1e-10);
    }

    #[test]
    fn shell_weights_strictly_decreasing() {
        let level = ShellLevel::new(7.2, 0.5);
        let w = level.weights(30);
        for pair in w.windows(2) {
            assert!(pair[1] < pair[0]);
            assert!(pair[0] > 0.0 && pair[0] < 1.0);
        }
    }

    #[test]
    fn transition_bound_holds_and_indicator_violates() {
        let mesh = synth::icosphere(2).build().unwrap();
        let basis = compute_basis(&mesh, 40).unwrap();
        let x = coords(&mesh);
        for sigma in [0.25, 0.5, 1.0, 2.0] {
            let bound = transition_bound(sigma) + 1e-9;
            let ratios = verify_transition_bound(&basis, &x, sigma, 1..=26);
            for (i, r) in ratios.iter().enumerate() {
                assert!(*r <= bound, "sigma {sigma} K {} ratio {r} > {bound}", i + 1);
            }
        }
        // sigma = 0.5: bound ~= 0.3935
        assert!((transition_bound(0.5) - 0.39346934).abs() < 1e-6);
        let spectral = spectral_transition_ratios(&basis, &x, 1..=26);
        let bound05 = transition_bound(0.5);
        assert!(
            spectral.iter().any(|r| *r > bound05),
            "indicator ratios {spectral:?} all under {bound05}"
        );
    }

    #[test]
    fn deterministic_signs() {
        let mesh = synth::biped(2, synth::ArmPose::LeftForward).build().unwrap();
        let a = compute_basis(&mesh, 10).unwrap();
        let b = compute_basis(&mesh, 10).unwrap();
        assert_eq!(a.eigenvalues(), b.eigenvalues());
        assert_eq!(a.phi(), b.phi());
    }
}
