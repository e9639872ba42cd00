//! Nearest-neighbor assignment in the product embedding: the exact
//! minimizer of `||P X* - Y||_F^2` over column-stochastic 0/1 matrices.
//!
//! Distances are evaluated as `||x||^2 - 2 x.y` per target row via a
//! blocked matrix product (the `||y||^2` term is constant per row and
//! dropped); ties break to the lowest source index. The parallel and
//! sequential paths share the same per-chunk kernel and return identical
//! assignments.

use nalgebra::DMatrix;

use crate::embedding::ProductEmbedding;
use crate::error::{Error, Result};
use crate::mesh::{MapDirection, PointMap};
use crate::parallel;

const CHUNK: usize = 256;

/// For each target vertex, the index of the closest source row in the
/// product embedding.
pub fn solve_point_map(
    source: &ProductEmbedding,
    target: &ProductEmbedding,
) -> Result<PointMap> {
    let (src, tgt, src_norms2) = prepare(source, target)?;
    let m = tgt.nrows();
    let chunks = m.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<usize>> = parallel::collect_indexed(chunks, |ci| {
        nn_chunk(&src, &src_norms2, &tgt, ci * CHUNK, CHUNK.min(m - ci * CHUNK))
    });
    Ok(assemble(per_chunk))
}

/// Sequential reference implementation; bitwise-identical to
/// [`solve_point_map`] and used by the benchmark suite.
pub fn solve_point_map_seq(
    source: &ProductEmbedding,
    target: &ProductEmbedding,
) -> Result<PointMap> {
    let (src, tgt, src_norms2) = prepare(source, target)?;
    let m = tgt.nrows();
    let chunks = m.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<usize>> = parallel::collect_indexed_seq(chunks, |ci| {
        nn_chunk(&src, &src_norms2, &tgt, ci * CHUNK, CHUNK.min(m - ci * CHUNK))
    });
    Ok(assemble(per_chunk))
}

fn prepare(
    source: &ProductEmbedding,
    target: &ProductEmbedding,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
    if source.width() != target.width() {
        return Err(Error::DimensionMismatch(format!(
            "embedding widths {} vs {}",
            source.width(),
            target.width()
        )));
    }
    let src = source.concat();
    let tgt = target.concat();
    let src_norms2: Vec<f64> = (0..src.nrows())
        .map(|i| src.row(i).iter().map(|v| v * v).sum())
        .collect();
    Ok((src, tgt, src_norms2))
}

fn nn_chunk(
    src: &DMatrix<f64>,
    src_norms2: &[f64],
    tgt: &DMatrix<f64>,
    start: usize,
    len: usize,
) -> Vec<usize> {
    // cross = T_chunk * S^T, (len x n)
    let cross = tgt.rows(start, len) * src.transpose();
    let n = src.nrows();
    let mut out = Vec::with_capacity(len);
    for r in 0..len {
        let mut best = 0usize;
        let mut best_score = src_norms2[0] - 2.0 * cross[(r, 0)];
        for j in 1..n {
            let score = src_norms2[j] - 2.0 * cross[(r, j)];
            if score < best_score {
                best_score = score;
                best = j;
            }
        }
        out.push(best);
    }
    out
}

fn assemble(per_chunk: Vec<Vec<usize>>) -> PointMap {
    let mut assignments = Vec::with_capacity(per_chunk.iter().map(Vec::len).sum());
    for c in per_chunk {
        assignments.extend(c);
    }
    PointMap::new(assignments, MapDirection::TargetToSource)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embedding_from(matrix: DMatrix<f64>) -> ProductEmbedding {
        // pack arbitrary test data in the coordinate block shape: K = cols-6
        let k = matrix.ncols() - 6;
        ProductEmbedding {
            spectral: matrix.columns(0, k).into_owned(),
            coords: matrix.columns(k, 3).into_owned(),
            normals: matrix.columns(k + 3, 3).into_owned(),
        }
    }

    fn random_embedding(n: usize, width: usize, seed: u64) -> ProductEmbedding {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        embedding_from(DMatrix::from_fn(n, width, |_, _| rng.gen::<f64>() - 0.5))
    }

    /// Exhaustive per-pair oracle computing distances directly from the
    /// coordinate differences — an independent route from the blocked
    /// norms-and-cross-products kernel in the implementation.
    fn brute_force(source: &ProductEmbedding, target: &ProductEmbedding) -> Vec<usize> {
        (0..target.num_vertices())
            .map(|m| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for n in 0..source.num_vertices() {
                    let d = source.row_distance2(n, target, m);
                    if d < best_d {
                        best_d = d;
                        best = n;
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn identical_embeddings_give_identity() {
        let e = random_embedding(120, 14, 7);
        let p = solve_point_map(&e, &e).unwrap();
        assert_eq!(p.assignments, (0..120).collect::<Vec<_>>());
        assert_eq!(p.direction, MapDirection::TargetToSource);
    }

    #[test]
    fn matches_brute_force_oracle() {
        for seed in 0..4u64 {
            let src = random_embedding(180, 11, seed * 2 + 1);
            let tgt = random_embedding(160, 11, seed * 2 + 2);
            let p = solve_point_map(&src, &tgt).unwrap();
            assert_eq!(p.assignments, brute_force(&src, &tgt), "seed {seed}");
        }
    }

    #[test]
    fn duplicated_source_row_ties_to_lower_index() {
        let mut m = DMatrix::from_fn(50, 10, |i, j| ((i * 31 + j * 7) as f64 * 0.11).sin());
        // duplicate row 9 at row 33, bitwise
        for j in 0..10 {
            m[(33, j)] = m[(9, j)];
        }
        let src = embedding_from(m.clone());
        // a target row equal to the duplicated source rows
        let tgt = embedding_from(m.rows(9, 1).into_owned());
        let p = solve_point_map(&src, &tgt).unwrap();
        assert_eq!(p.assignments, vec![9]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = random_embedding(10, 9, 1);
        let b = random_embedding(10, 10, 2);
        assert!(matches!(
            solve_point_map(&a, &b),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let src = random_embedding(700, 22, 5);
        let tgt = random_embedding(650, 22, 6);
        let a = solve_point_map(&src, &tgt).unwrap();
        let b = solve_point_map_seq(&src, &tgt).unwrap();
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn no_single_row_change_improves_objective() {
        // P-step optimality: sampled row swaps cannot reduce the Frobenius
        // alignment term
        let src = random_embedding(60, 12, 11);
        let tgt = random_embedding(55, 12, 12);
        let p = solve_point_map(&src, &tgt).unwrap();
        let objective = |asg: &[usize]| -> f64 {
            asg.iter()
                .enumerate()
                .map(|(m, &n)| src.row_distance2(n, &tgt, m))
                .sum()
        };
        let base = objective(&p.assignments);
        for m in (0..55).step_by(7) {
            for cand in (0..60).step_by(5) {
                let mut alt = p.assignments.clone();
                alt[m] = cand;
                assert!(objective(&alt) >= base - 1e-12);
            }
        }
    }
}
