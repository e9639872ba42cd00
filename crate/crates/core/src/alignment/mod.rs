//! The three subproblem solvers of the per-level alternation: nearest
//! neighbor assignment, orthogonal functional-map fitting, and the
//! local-global displacement solve, plus the monitored total energy.

pub mod arap;
pub mod nn;
pub mod procrustes;

use nalgebra::DMatrix;

use crate::embedding::ProductEmbedding;
use crate::mesh::PointMap;

pub use arap::{
    arap_energy, displacement_gradient, displacement_objective, fit_rotations, fit_rotations_seq,
    solve_displacement, DisplacementSolve,
};
pub use nn::{solve_point_map, solve_point_map_seq};
pub use procrustes::solve_functional_map;

/// Functional map between the (damped) spectral coordinates of two shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    pub c: DMatrix<f64>,
    pub orthogonal: bool,
}

impl FunctionalMap {
    pub fn identity(k: usize) -> FunctionalMap {
        FunctionalMap {
            c: DMatrix::identity(k, k),
            orthogonal: true,
        }
    }

    pub fn orthogonal(c: DMatrix<f64>) -> FunctionalMap {
        debug_assert_eq!(c.nrows(), c.ncols());
        FunctionalMap {
            c,
            orthogonal: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// `||C^T C - I||_F`; zero for exactly orthogonal maps.
    pub fn orthogonality_error(&self) -> f64 {
        let gram = self.c.tr_mul(&self.c);
        let k = self.dim();
        (gram - DMatrix::<f64>::identity(k, k)).norm()
    }

    /// `C^dagger`: the transpose when the orthogonality constraint is
    /// active, the SVD pseudoinverse otherwise.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        if self.orthogonal {
            self.c.transpose()
        } else {
            self.c
                .clone()
                .pseudo_inverse(1e-12)
                .unwrap_or_else(|_| self.c.transpose())
        }
    }

    /// Grow to `new_k` for the next level: the new block is identity,
    /// re-solved immediately by the next functional-map step.
    pub fn pad_identity(&self, new_k: usize) -> FunctionalMap {
        let k = self.dim();
        if new_k <= k {
            return FunctionalMap {
                c: self.c.view((0, 0), (new_k, new_k)).into_owned(),
                orthogonal: self.orthogonal,
            };
        }
        let mut c = DMatrix::identity(new_k, new_k);
        c.view_mut((0, 0), (k, k)).copy_from(&self.c);
        FunctionalMap {
            c,
            orthogonal: self.orthogonal,
        }
    }
}

/// Displacement coefficients in the source eigenbasis (K x 3).
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub tau: DMatrix<f64>,
}

impl Displacement {
    pub fn zeros(k: usize) -> Displacement {
        Displacement {
            tau: DMatrix::zeros(k, 3),
        }
    }

    pub fn from_matrix(tau: DMatrix<f64>) -> Displacement {
        assert_eq!(tau.ncols(), 3);
        Displacement { tau }
    }

    pub fn k(&self) -> usize {
        self.tau.nrows()
    }

    /// Grow (zero rows) or truncate to `new_k` rows.
    pub fn resize_rows(&self, new_k: usize) -> Displacement {
        let mut tau = DMatrix::zeros(new_k, 3);
        let keep = self.k().min(new_k);
        tau.view_mut((0, 0), (keep, 3))
            .copy_from(&self.tau.view((0, 0), (keep, 3)));
        Displacement { tau }
    }
}

/// Energy pieces of the monitored objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// `||P X* - Y||_F^2` over the full product embedding.
    pub alignment: f64,
    /// Functional-map data term in damped spectral coefficients.
    pub feature: f64,
    /// Rigidity energy of the current displacement.
    pub arap: f64,
    pub lambda_feat: f64,
    pub lambda_arap: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.alignment + self.lambda_feat * self.feature + self.lambda_arap * self.arap
    }
}

/// `sum_m || X*[p(m)] - Y[m] ||^2` over all embedding channels.
pub fn alignment_term(
    source: &ProductEmbedding,
    target: &ProductEmbedding,
    p: &PointMap,
) -> f64 {
    let mut acc = 0.0;
    for (m, &n) in p.assignments.iter().enumerate() {
        acc += source.row_distance2(n, target, m);
    }
    acc
}

/// `||C A - B||_F^2` for feature coefficient matrices A (source) and B
/// (target), both K x D.
pub fn feature_term(c: &FunctionalMap, src_coeffs: &DMatrix<f64>, tgt_coeffs: &DMatrix<f64>) -> f64 {
    if src_coeffs.ncols() == 0 {
        return 0.0;
    }
    (&c.c * src_coeffs - tgt_coeffs).norm_squared()
}
