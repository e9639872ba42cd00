//! Matching-quality metrics: graph-geodesic error against ground truth,
//! cumulative accuracy curves, conformal triangle distortion, and the
//! component-ablation harness.

use nalgebra::{Matrix2, Point3};

use crate::driver::{run_full_match, DriverConfig, RigidMode};
use crate::embedding::ChannelWeights;
use crate::error::{Error, Result};
use crate::mesh::{geodesic_distances_multi, PointMap, TriMesh};
use crate::parallel;
use crate::spectral::Smoothing;

/// Per-vertex geodesic error between predicted and ground-truth matches,
/// measured on the mesh the maps point into and normalized by the square
/// root of its area (1 after load normalization). Unreachable pairs come
/// back infinite.
pub fn geodesic_error(
    pred: &PointMap,
    gt: &PointMap,
    pointed_into: &TriMesh,
) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} entries, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let n = pointed_into.num_vertices();
    pred.validate(n)?;
    gt.validate(n)?;

    // Dijkstra once per distinct ground-truth root
    let mut roots: Vec<usize> = gt.assignments.clone();
    roots.sort_unstable();
    roots.dedup();
    let distances = geodesic_distances_multi(pointed_into, &roots)?;
    let root_ix = |v: usize| roots.binary_search(&v).unwrap();

    let sqrt_area = pointed_into.surface_area().sqrt();
    let errors: Vec<f64> = pred
        .assignments
        .iter()
        .zip(&gt.assignments)
        .map(|(&p, &g)| distances[root_ix(g)][p] / sqrt_area)
        .collect();
    if errors.iter().any(|e| !e.is_finite()) {
        eprintln!("warning: disconnected target; infinite errors reported");
    }
    Ok(errors)
}

/// Mean over finite entries; infinite errors are excluded with a warning.
pub fn mean_error(errors: &[f64]) -> f64 {
    let finite: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
    if finite.len() < errors.len() {
        eprintln!(
            "warning: {} infinite error(s) excluded from the mean",
            errors.len() - finite.len()
        );
    }
    if finite.is_empty() {
        return f64::INFINITY;
    }
    finite.iter().sum::<f64>() / finite.len() as f64
}

/// Cumulative accuracy curve: fraction of errors at or below each
/// threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

pub fn error_curve(errors: &[f64], thresholds: &[f64]) -> ErrorCurve {
    let count = errors.len().max(1) as f64;
    let fractions = thresholds
        .iter()
        .map(|&t| errors.iter().filter(|&&e| e <= t).count() as f64 / count)
        .collect();
    ErrorCurve {
        thresholds: thresholds.to_vec(),
        fractions,
    }
}

impl ErrorCurve {
    /// Evenly spaced thresholds from zero to the largest finite error.
    pub fn with_uniform_thresholds(errors: &[f64], steps: usize) -> ErrorCurve {
        let max = errors
            .iter()
            .copied()
            .filter(|e| e.is_finite())
            .fold(0.0f64, f64::max);
        let thresholds: Vec<f64> = (0..=steps)
            .map(|i| max * i as f64 / steps.max(1) as f64)
            .collect();
        error_curve(errors, &thresholds)
    }
}

/// Per-triangle conformal distortion of a vertex-mapped deformation.
#[derive(Debug, Clone)]
pub struct DistortionReport {
    /// Shifted MIPS value per triangle: 0 for angle-preserving maps,
    /// infinity for degenerate images.
    pub per_triangle: Vec<f64>,
    /// Mean with infinities capped at `cap`.
    pub mean: f64,
    pub cap: f64,
    /// (upper edge, count) histogram over [0, cap] plus an overflow bin.
    pub histogram: Vec<(f64, usize)>,
}

/// Conformal distortion of each triangle under `mapped`: singular values
/// of the in-plane Jacobian scored as `s1/s2 + s2/s1 - 2`.
pub fn conformal_distortion(
    mesh: &TriMesh,
    mapped: &[Point3<f64>],
    cap: f64,
) -> Result<DistortionReport> {
    if mapped.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "{} mapped points for {} vertices",
            mapped.len(),
            mesh.num_vertices()
        )));
    }
    let per_triangle: Vec<f64> = parallel::collect_indexed(mesh.num_triangles(), |f| {
        triangle_distortion(mesh, mapped, f)
    });
    let capped: Vec<f64> = per_triangle.iter().map(|&d| d.min(cap)).collect();
    let mean = capped.iter().sum::<f64>() / capped.len().max(1) as f64;
    let bins = 20usize;
    let mut histogram: Vec<(f64, usize)> = (1..=bins)
        .map(|i| (cap * i as f64 / bins as f64, 0usize))
        .collect();
    histogram.push((f64::INFINITY, 0));
    for &d in &per_triangle {
        let slot = if d >= cap {
            bins
        } else {
            ((d / cap) * bins as f64) as usize
        };
        histogram[slot.min(bins)].1 += 1;
    }
    Ok(DistortionReport {
        per_triangle,
        mean,
        cap,
        histogram,
    })
}

fn triangle_distortion(mesh: &TriMesh, mapped: &[Point3<f64>], f: usize) -> f64 {
    let [a, b, c] = mesh.triangles[f];
    // in-plane frames of the rest and image triangles
    let frame = |p0: &Point3<f64>, p1: &Point3<f64>, p2: &Point3<f64>| -> Option<Matrix2<f64>> {
        let u = p1 - p0;
        let v = p2 - p0;
        let e1 = u.normalize();
        let normal = u.cross(&v);
        let n2 = normal.norm();
        if !(n2 > 0.0) || !u.norm().is_finite() {
            return None;
        }
        let e2 = normal.cross(&u).normalize();
        Some(Matrix2::new(u.norm(), v.dot(&e1), 0.0, v.dot(&e2)))
    };
    let rest = frame(
        &mesh.vertices[a],
        &mesh.vertices[b],
        &mesh.vertices[c],
    );
    let image = frame(&mapped[a], &mapped[b], &mapped[c]);
    let (Some(rest), Some(image)) = (rest, image) else {
        return f64::INFINITY;
    };
    let Some(rest_inv) = rest.try_inverse() else {
        return f64::INFINITY;
    };
    let j = image * rest_inv;
    // closed-form singular values of a 2x2 matrix
    let (a11, a12, a21, a22) = (j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]);
    let e = 0.5 * (a11 + a22);
    let f_ = 0.5 * (a11 - a22);
    let g = 0.5 * (a21 + a12);
    let h = 0.5 * (a21 - a12);
    let q = (e * e + h * h).sqrt();
    let r = (f_ * f_ + g * g).sqrt();
    let s1 = q + r;
    let s2 = (q - r).abs();
    if s2 <= 0.0 || !s1.is_finite() {
        return f64::INFINITY;
    }
    s1 / s2 + s2 / s1 - 2.0
}

/// Ablation switches mirroring the component study: each disables or
/// replaces one ingredient of the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationSwitch {
    Full,
    LambdaFeatZero,
    LambdaArapZero,
    ExtrinsicOnly,
    IntrinsicOnly,
    WithoutNormals,
    WithoutMcmc,
    RandomRigid,
    SpectralReconstruction,
}

impl AblationSwitch {
    pub const ALL: [AblationSwitch; 9] = [
        AblationSwitch::Full,
        AblationSwitch::LambdaFeatZero,
        AblationSwitch::LambdaArapZero,
        AblationSwitch::ExtrinsicOnly,
        AblationSwitch::IntrinsicOnly,
        AblationSwitch::WithoutNormals,
        AblationSwitch::WithoutMcmc,
        AblationSwitch::RandomRigid,
        AblationSwitch::SpectralReconstruction,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationSwitch::Full => "full",
            AblationSwitch::LambdaFeatZero => "lambda_feat=0",
            AblationSwitch::LambdaArapZero => "lambda_arap=0",
            AblationSwitch::ExtrinsicOnly => "extrinsic_only",
            AblationSwitch::IntrinsicOnly => "intrinsic_only",
            AblationSwitch::WithoutNormals => "without_normals",
            AblationSwitch::WithoutMcmc => "without_mcmc",
            AblationSwitch::RandomRigid => "random_rigid",
            AblationSwitch::SpectralReconstruction => "spectral_reconstruction",
        }
    }

    pub fn parse(name: &str) -> Option<AblationSwitch> {
        Self::ALL.iter().copied().find(|s| s.name() == name)
    }

    /// Derive the modified driver configuration from the full method's.
    pub fn apply(&self, base: &DriverConfig) -> DriverConfig {
        let mut config = base.clone();
        match self {
            AblationSwitch::Full => {}
            AblationSwitch::LambdaFeatZero => config.params.lambda_feat = 0.0,
            AblationSwitch::LambdaArapZero => config.params.lambda_arap = 0.0,
            AblationSwitch::ExtrinsicOnly => {
                config.params.weights = ChannelWeights {
                    spectral: 0.0,
                    ..config.params.weights
                };
            }
            AblationSwitch::IntrinsicOnly => {
                config.params.weights = ChannelWeights {
                    coords: 0.0,
                    normals: 0.0,
                    ..config.params.weights
                };
            }
            AblationSwitch::WithoutNormals => {
                config.params.weights = ChannelWeights {
                    normals: 0.0,
                    ..config.params.weights
                };
            }
            AblationSwitch::WithoutMcmc => config.use_mcmc = false,
            AblationSwitch::RandomRigid => config.rigid_mode = RigidMode::Random,
            AblationSwitch::SpectralReconstruction => {
                config.params.smoothing = Smoothing::HardTruncation
            }
        }
        config
    }
}

/// A pair to evaluate: shared-connectivity pairs may declare the identity
/// ground truth.
pub struct MatchPair<'a> {
    pub name: String,
    pub source: &'a TriMesh,
    pub target: &'a TriMesh,
    /// For each source vertex, the true target vertex.
    pub gt_source_to_target: Vec<usize>,
}

impl<'a> MatchPair<'a> {
    pub fn with_identity_gt(name: impl Into<String>, source: &'a TriMesh, target: &'a TriMesh) -> Self {
        assert_eq!(source.num_vertices(), target.num_vertices());
        MatchPair {
            name: name.into(),
            source,
            target,
            gt_source_to_target: (0..source.num_vertices()).collect(),
        }
    }
}

/// One ablation table row.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub switch: AblationSwitch,
    /// Mean geodesic error over all pairs.
    pub mean_error: f64,
    /// Fraction of pairs with error above twice the full method's.
    pub failure_rate: f64,
    pub mean_distortion: f64,
    pub per_pair_error: Vec<f64>,
}

/// Run the pipeline once per switch over the pair list. The failure flag of
/// a pair compares against the full method's error on the same pair, so the
/// `Full` switch is always evaluated (and reported first).
pub fn run_ablation(
    pairs: &[MatchPair],
    base: &DriverConfig,
    switches: &[AblationSwitch],
) -> Result<Vec<AblationRow>> {
    let mut order: Vec<AblationSwitch> = Vec::new();
    order.push(AblationSwitch::Full);
    for &s in switches {
        if s != AblationSwitch::Full && !order.contains(&s) {
            order.push(s);
        }
    }

    let mut rows: Vec<AblationRow> = Vec::new();
    let mut full_errors: Vec<f64> = Vec::new();
    for &switch in &order {
        let config = switch.apply(base);
        let mut per_pair_error = Vec::with_capacity(pairs.len());
        let mut distortions = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let out = run_full_match(pair.source, pair.target, None, &config)?;
            // evaluate the source->target map against ground truth on the
            // target geometry
            let gt = PointMap::new(
                pair.gt_source_to_target.clone(),
                crate::mesh::MapDirection::SourceToTarget,
            );
            let errors = geodesic_error(&out.result.reverse_map, &gt, pair.target)?;
            per_pair_error.push(mean_error(&errors));
            let report = conformal_distortion(pair.source, &out.result.deformed_source, 100.0)?;
            distortions.push(report.mean);
        }
        if switch == AblationSwitch::Full {
            full_errors = per_pair_error.clone();
        }
        let failures = per_pair_error
            .iter()
            .zip(&full_errors)
            .filter(|(&e, &f)| e > 2.0 * f)
            .count();
        rows.push(AblationRow {
            switch,
            mean_error: per_pair_error.iter().sum::<f64>() / per_pair_error.len().max(1) as f64,
            failure_rate: failures as f64 / pairs.len().max(1) as f64,
            mean_distortion: distortions.iter().sum::<f64>() / distortions.len().max(1) as f64,
            per_pair_error,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MapDirection;
    use crate::synth;

    #[test]
    fn zero_error_for_exact_prediction() {
        let mesh = synth::icosphere(2).build().unwrap();
        let gt = PointMap::identity(mesh.num_vertices(), MapDirection::SourceToTarget);
        let errors = geodesic_error(&gt, &gt, &mesh).unwrap();
        assert!(errors.iter().all(|&e| e == 0.0));
        assert_eq!(mean_error(&errors), 0.0);
    }

    #[test]
    fn one_ring_misprediction_scores_edge_length() {
        let mesh = synth::icosphere(2).build().unwrap();
        let n = mesh.num_vertices();
        let gt = PointMap::identity(n, MapDirection::SourceToTarget);
        let mut pred = gt.clone();
        let neighbor = mesh.one_ring(0).next().unwrap();
        pred.assignments[0] = neighbor;
        let errors = geodesic_error(&pred, &gt, &mesh).unwrap();
        let edge = (mesh.vertices[0] - mesh.vertices[neighbor]).norm();
        assert!((errors[0] - edge).abs() < 1e-12);
        assert!(errors[1..].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn curve_is_a_cdf() {
        let errors = vec![0.0, 0.1, 0.0, 0.1];
        let curve = error_curve(&errors, &[0.05]);
        assert_eq!(curve.fractions, vec![0.5]);

        let errors = vec![0.0; 7];
        let curve = error_curve(&errors, &[0.0, 0.1, 0.2]);
        assert!(curve.fractions.iter().all(|&f| f == 1.0));

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let errors: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
        let curve = ErrorCurve::with_uniform_thresholds(&errors, 25);
        for w in curve.fractions.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(*curve.fractions.last().unwrap(), 1.0);
    }

    #[test]
    fn distortion_zero_under_similarity() {
        let mesh = synth::biped(1, synth::ArmPose::LeftForward).build().unwrap();
        // identity
        let report = conformal_distortion(&mesh, &mesh.vertices, 100.0).unwrap();
        assert!(report.per_triangle.iter().all(|&d| d < 1e-9));

        // uniform scale by 3 plus rotation plus translation
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, 1.1, -0.7);
        let mapped: Vec<Point3<f64>> = mesh
            .vertices
            .iter()
            .map(|v| rot * Point3::from(v.coords * 3.0) + nalgebra::Vector3::new(1.0, -2.0, 0.5))
            .collect();
        let report = conformal_distortion(&mesh, &mapped, 100.0).unwrap();
        assert!(
            report.per_triangle.iter().all(|&d| d < 1e-9),
            "max {}",
            report.per_triangle.iter().cloned().fold(0.0, f64::max)
        );
        assert!(report.mean < 1e-9);
    }

    #[test]
    fn anisotropic_stretch_scores_half() {
        let mesh = synth::unit_square().build().unwrap();
        // stretch x by 2: singular values (2, 1) -> 2/1 + 1/2 - 2 = 0.5
        let mapped: Vec<Point3<f64>> = mesh
            .vertices
            .iter()
            .map(|v| Point3::new(2.0 * v.x, v.y, v.z))
            .collect();
        let report = conformal_distortion(&mesh, &mapped, 100.0).unwrap();
        for &d in &report.per_triangle {
            assert!((d - 0.5).abs() < 1e-12, "distortion {d}");
        }
    }

    #[test]
    fn degenerate_image_is_capped_in_mean() {
        let mesh = synth::unit_square().build().unwrap();
        let mapped: Vec<Point3<f64>> = mesh.vertices.iter().map(|_| Point3::origin()).collect();
        let report = conformal_distortion(&mesh, &mapped, 50.0).unwrap();
        assert!(report.per_triangle.iter().all(|d| d.is_infinite()));
        assert_eq!(report.mean, 50.0);
        assert_eq!(report.histogram.last().unwrap().1, 2);
    }

    #[test]
    fn switch_names_round_trip() {
        for s in AblationSwitch::ALL {
            assert_eq!(AblationSwitch::parse(s.name()), Some(s));
        }
        assert_eq!(AblationSwitch::parse("bogus"), None);
    }
}
