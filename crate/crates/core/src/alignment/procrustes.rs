//! Orthogonal functional-map fitting: the joint Procrustes problem over
//! correspondence-pulled spectral coordinates and descriptor coefficients.

use nalgebra::DMatrix;

use crate::alignment::FunctionalMap;
use crate::error::{Error, Result};
use crate::mesh::PointMap;

/// Solve `argmin_{C^T C = I} ||C A - B||_F^2` where A stacks the source
/// spectral coordinates pulled back through `point_map` next to
/// `sqrt(lambda_feat)` times the source feature coefficients, and B stacks
/// the matched target coordinates and target feature coefficients.
///
/// Closed form: `C = U V^T` from the SVD of `B A^T`. Reflections are
/// legitimate functional maps (sign flips), so the determinant is not
/// corrected. A rank-deficiency warning is printed when the cross matrix
/// has near-zero singular values; the map is still returned.
///
/// `src_spectral` is N x K (damped spectral coordinates), `tgt_spectral`
/// M x K; feature coefficient matrices are K x D in the same damping.
pub fn solve_functional_map(
    src_spectral: &DMatrix<f64>,
    tgt_spectral: &DMatrix<f64>,
    point_map: &PointMap,
    features: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    lambda_feat: f64,
) -> Result<FunctionalMap> {
    let k = src_spectral.ncols();
    if tgt_spectral.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "spectral widths {} vs {}",
            k,
            tgt_spectral.ncols()
        )));
    }
    if point_map.len() != tgt_spectral.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "point map length {} vs {} target rows",
            point_map.len(),
            tgt_spectral.nrows()
        )));
    }
    point_map.validate(src_spectral.nrows())?;

    // cross = B A^T = sum_m psi_m phi_{p(m)}^T + lambda F-part
    let pulled = gather_rows(src_spectral, &point_map.assignments);
    let mut cross = tgt_spectral.tr_mul(&pulled);
    if let Some((f_src, g_tgt)) = features {
        if lambda_feat > 0.0 {
            if f_src.nrows() != k || g_tgt.nrows() != k || f_src.ncols() != g_tgt.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "feature coefficients {}x{} vs {}x{} for K={k}",
                    f_src.nrows(),
                    f_src.ncols(),
                    g_tgt.nrows(),
                    g_tgt.ncols()
                )));
            }
            cross += lambda_feat * g_tgt * f_src.transpose();
        }
    }

    let svd = cross.svd(true, true);
    let (u, v_t) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin < 1e-12 * smax {
        eprintln!(
            "warning: rank-deficient functional-map system (sigma_min/sigma_max = {:.3e})",
            if smax > 0.0 { smin / smax } else { 0.0 }
        );
    }
    Ok(FunctionalMap::orthogonal(u * v_t))
}

fn gather_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).copy_from(&m.row(src));
    }
    out
}
