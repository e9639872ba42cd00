//! Hierarchical matching: the coarse-to-fine alternation over a logarithmic
//! level schedule, plus result assembly and template chaining.

use nalgebra::{DMatrix, Point3};

use crate::alignment::{
    self, alignment_term, feature_term, solve_functional_map, Displacement, EnergyBreakdown,
    FunctionalMap,
};
use crate::descriptors::DescriptorField;
use crate::embedding::{self, ChannelWeights};
use crate::error::{Error, Result};
use crate::mesh::{MapDirection, PointMap, TriMesh};
use crate::spectral::{smooth_at_level, ShellLevel, Smoothing, SpectralBasis};

/// Smoothing levels, logarithmically spaced from `k_init` to `k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub levels: Vec<f64>,
}

/// `K_i = k_init (k_max / k_init)^{i/(steps-1)}`, i = 0..steps-1.
pub fn make_schedule(k_init: usize, k_max: usize, steps: usize) -> Result<Schedule> {
    if k_init < 2 || k_init >= k_max {
        return Err(Error::InvalidRange(format!(
            "need 2 <= k_init < k_max, got {k_init} and {k_max}"
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidRange(format!("need steps >= 2, got {steps}")));
    }
    let (a, b) = (k_init as f64, k_max as f64);
    let levels = (0..steps)
        .map(|i| a * (b / a).powf(i as f64 / (steps - 1) as f64))
        .collect();
    Ok(Schedule { levels })
}

/// Tuning knobs of the hierarchical matcher.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchParams {
    pub sigma: f64,
    pub k_init: usize,
    pub k_max: usize,
    pub steps: usize,
    pub weights: ChannelWeights,
    pub lambda_feat: f64,
    pub lambda_arap: f64,
    /// Alternation passes per level (one pass = P, C, tau).
    pub passes_per_level: usize,
    /// Inner local-global iterations of the displacement solve.
    pub inner_iterations: usize,
    /// Apply the descriptor term at every level (otherwise only the first).
    pub feature_every_level: bool,
    /// Level smoothing operator; hard truncation reproduces the plain
    /// spectral-reconstruction hierarchy.
    pub smoothing: Smoothing,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            sigma: 0.5,
            k_init: 6,
            k_max: 500,
            steps: 50,
            weights: ChannelWeights::default(),
            lambda_feat: 1.0,
            lambda_arap: 10.0,
            passes_per_level: 1,
            inner_iterations: 10,
            feature_every_level: true,
            smoothing: Smoothing::Shell,
        }
    }
}

impl MatchParams {
    /// Eigenpairs needed so the sigmoid tail at `k_max` is negligible.
    pub fn k_total(&self) -> usize {
        self.k_max + (7.0 / self.sigma).ceil() as usize
    }

    /// Cap the schedule for small meshes: levels cannot exceed the
    /// available eigenpairs.
    pub fn effective_k_max(&self, num_vertices_min: usize) -> usize {
        let cap = num_vertices_min.saturating_sub(1);
        if self.k_max > cap {
            eprintln!(
                "warning: k_max {} exceeds available eigenpairs; truncating schedule at {}",
                self.k_max, cap
            );
            cap
        } else {
            self.k_max
        }
    }
}

/// Per-level monitoring record.
#[derive(Debug, Clone)]
pub struct LevelTrace {
    pub level: f64,
    /// Alignment term right before and right after the point-map step (the
    /// step is its exact minimizer, so after <= before up to rounding).
    pub alignment_before_p: f64,
    pub alignment_after_p: f64,
    /// Spectral-alignment + feature objective before and after the
    /// functional-map step (that step's exact objective).
    pub c_objective_before: f64,
    pub c_objective_after: f64,
    /// Inner displacement energies, non-increasing.
    pub displacement_trace: Vec<f64>,
    /// Energy breakdown at the end of the level.
    pub energy: EnergyBreakdown,
}

/// Final correspondence and deformation between a source and target pair.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// For each target vertex, the matched source vertex.
    pub point_map: PointMap,
    /// For each source vertex, the matched target vertex.
    pub reverse_map: PointMap,
    /// Source vertices displaced at full detail: `X + Phi_K tau`.
    pub deformed_source: Vec<Point3<f64>>,
    pub functional_map: FunctionalMap,
    pub displacement: Displacement,
    pub levels: Vec<LevelTrace>,
}

impl MatchResult {
    pub fn final_energy(&self) -> f64 {
        self.levels.last().map(|l| l.energy.total()).unwrap_or(f64::INFINITY)
    }
}

/// Run the hierarchical matching loop. Bases must hold at least
/// `effective_k_max + ceil(7/sigma)` eigenpairs (capped at N-1).
#[allow(clippy::too_many_arguments)]
pub fn hierarchical_match(
    source: &TriMesh,
    target: &TriMesh,
    source_basis: &SpectralBasis,
    target_basis: &SpectralBasis,
    features: Option<(&DescriptorField, &DescriptorField)>,
    init: &Displacement,
    params: &MatchParams,
) -> Result<MatchResult> {
    let n_min = source.num_vertices().min(target.num_vertices());
    let k_max = params.effective_k_max(n_min);
    let k_total = source_basis.k_total().min(target_basis.k_total());
    if k_total < k_max {
        return Err(Error::KTooLarge {
            requested: k_max,
            max: k_total,
        });
    }
    let schedule = make_schedule(params.k_init.min(k_max.saturating_sub(1)).max(2), k_max, params.steps)?;

    // feature spectral coefficients in the shared damping, at full K
    let full_damping = embedding::damping_vector(
        &params.weights,
        source_basis.eigenvalues(),
        target_basis.eigenvalues(),
        k_total,
    );
    let feat_coeffs = features.map(|(f_src, g_tgt)| {
        (
            damped_rows(&source_basis.pullback(&f_src.values), &full_damping),
            damped_rows(&target_basis.pullback(&g_tgt.values), &full_damping),
        )
    });

    let src_coords = source.coords_matrix();
    let mut c = FunctionalMap::identity(ShellLevel::new(schedule.levels[0], params.sigma).spectral_dim(k_total));
    let mut tau = init.resize_rows(c.dim()).tau;
    let mut point_map: Option<PointMap> = None;
    let mut traces: Vec<LevelTrace> = Vec::with_capacity(schedule.levels.len());

    // Bootstrap the functional map before the first level: independent
    // eigendecompositions disagree by signs and near-degenerate mixing, so
    // an identity map would poison the first nearest-neighbor step. The
    // extrinsic channels carry the rigid pose and the proposal displacement
    // and anchor the first spectral alignment.
    {
        let level = ShellLevel::new(schedule.levels[0], params.sigma);
        let k = level.spectral_dim(k_total);
        let damping = &full_damping[..k];
        let ext = ChannelWeights {
            spectral: 0.0,
            ..params.weights
        };
        let feat_k = feat_coeffs
            .as_ref()
            .map(|(f, g)| (f.rows(0, k).into_owned(), g.rows(0, k).into_owned()));
        let have_extrinsic = ext.coords != 0.0 || ext.normals != 0.0;
        let have_features = feat_k.is_some() && params.lambda_feat > 0.0;
        if have_extrinsic || have_features {
            let boot_p = if have_extrinsic {
                let se = embedding::embed_source_morphed(
                    source,
                    source_basis,
                    &level,
                    &c,
                    &tau,
                    &ext,
                    damping,
                    params.smoothing,
                )?;
                let te = embedding::embed_target(
                    target,
                    target_basis,
                    &level,
                    &ext,
                    damping,
                    params.smoothing,
                );
                Some(alignment::solve_point_map(&se, &te)?)
            } else {
                None
            };
            let src_spec_damped = damped_cols(source_basis.phi(), damping);
            let tgt_spec_damped = damped_cols(target_basis.phi(), damping);
            // with no extrinsic anchor the descriptor block alone drives C
            let p_for_c = boot_p
                .unwrap_or_else(|| PointMap::new(Vec::new(), MapDirection::TargetToSource));
            c = solve_functional_map(
                &src_spec_damped.rows(0, src_spec_damped.nrows()).into_owned(),
                &tgt_spec_damped
                    .rows(0, if p_for_c.is_empty() { 0 } else { tgt_spec_damped.nrows() })
                    .into_owned(),
                &p_for_c,
                feat_k.as_ref().map(|(f, g)| (f, g)),
                params.lambda_feat,
            )?;
        }
    }

    for (level_ix, &level_k) in schedule.levels.iter().enumerate() {
        let level = ShellLevel::new(level_k, params.sigma);
        let k = level.spectral_dim(k_total);
        c = c.pad_identity(k);
        tau = Displacement::from_matrix(tau).resize_rows(k).tau;
        let damping = &full_damping[..k];

        let tgt_emb = embedding::embed_target(
            target,
            target_basis,
            &level,
            &params.weights,
            damping,
            params.smoothing,
        );
        let lambda_feat_here = if params.feature_every_level || level_ix == 0 {
            params.lambda_feat
        } else {
            0.0
        };

        for _pass in 0..params.passes_per_level.max(1) {
            let src_emb = embedding::embed_source_morphed(
                source,
                source_basis,
                &level,
                &c,
                &tau,
                &params.weights,
                damping,
                params.smoothing,
            )?;

            // step (b): point map, the exact alignment minimizer
            let alignment_before_p = point_map
                .as_ref()
                .map(|p| alignment_term(&src_emb, &tgt_emb, p))
                .unwrap_or(f64::INFINITY);
            let p = alignment::solve_point_map(&src_emb, &tgt_emb)?;
            let alignment_after_p = alignment_term(&src_emb, &tgt_emb, &p);

            // step (c): functional map from the current correspondences
            let src_spec_damped = damped_cols(source_basis.phi(), damping);
            let tgt_spec_damped = damped_cols(target_basis.phi(), damping);
            let feat_k = feat_coeffs
                .as_ref()
                .map(|(f, g)| (f.rows(0, k).into_owned(), g.rows(0, k).into_owned()));
            let c_objective = |cand: &FunctionalMap| -> f64 {
                // rows of (damped phi) C^T against matched rows of damped psi
                let morphed = &src_spec_damped * cand.c.transpose();
                let mut spec = 0.0;
                for (m, &n) in p.assignments.iter().enumerate() {
                    for col in 0..k {
                        let d = morphed[(n, col)] - tgt_spec_damped[(m, col)];
                        spec += d * d;
                    }
                }
                let feat = feat_k
                    .as_ref()
                    .map(|(f, g)| feature_term(cand, f, g))
                    .unwrap_or(0.0);
                spec + lambda_feat_here * feat
            };
            let c_objective_before = c_objective(&c);
            c = solve_functional_map(
                &src_spec_damped,
                &tgt_spec_damped,
                &p,
                feat_k.as_ref().map(|(f, g)| (f, g)),
                lambda_feat_here,
            )?;
            let c_objective_after = c_objective(&c);

            // step (d): displacement under the rigidity penalty
            let rest = smooth_at_level(source_basis, &src_coords, &level, params.smoothing);
            let tgt_smoothed = smooth_at_level(
                target_basis,
                &target.coords_matrix(),
                &level,
                params.smoothing,
            );
            let phi_k = source_basis.phi().columns(0, k).into_owned();
            let solve = alignment::solve_displacement(
                source,
                &phi_k,
                &rest,
                &p,
                &tgt_smoothed,
                params.lambda_arap,
                &tau,
                params.inner_iterations,
                1e-5,
            )?;
            tau = solve.tau.clone();

            // end-of-level energy with the refreshed morph
            let src_emb_after = embedding::embed_source_morphed(
                source,
                source_basis,
                &level,
                &c,
                &tau,
                &params.weights,
                damping,
                params.smoothing,
            )?;
            let deformed = &rest + &phi_k * &tau;
            let arap = alignment::arap_energy(source, &rest, &deformed, &solve.rotations);
            let feature = feat_k
                .as_ref()
                .map(|(f, g)| feature_term(&c, f, g))
                .unwrap_or(0.0);
            let energy = EnergyBreakdown {
                alignment: alignment_term(&src_emb_after, &tgt_emb, &p),
                feature,
                arap,
                lambda_feat: lambda_feat_here,
                lambda_arap: params.lambda_arap,
            };
            if !energy.total().is_finite() {
                return Err(Error::NonFiniteEnergy { level: level_k });
            }
            traces.push(LevelTrace {
                level: level_k,
                alignment_before_p,
                alignment_after_p,
                c_objective_before,
                c_objective_after,
                displacement_trace: solve.energy_trace,
                energy,
            });
            point_map = Some(p);
        }
    }

    // final maps and full-detail deformation
    let last_level = ShellLevel::new(*schedule.levels.last().unwrap(), params.sigma);
    let k_last = last_level.spectral_dim(k_total);
    let damping = &full_damping[..k_last];
    let src_emb = embedding::embed_source_morphed(
        source,
        source_basis,
        &last_level,
        &c,
        &tau,
        &params.weights,
        damping,
        params.smoothing,
    )?;
    let tgt_emb = embedding::embed_target(
        target,
        target_basis,
        &last_level,
        &params.weights,
        damping,
        params.smoothing,
    );
    let point_map = alignment::solve_point_map(&src_emb, &tgt_emb)?;
    let reverse_map = PointMap::new(
        alignment::solve_point_map(&tgt_emb, &src_emb)?.assignments,
        MapDirection::SourceToTarget,
    );

    // X* = X + Phi tau on the raw geometry, keeping original detail
    let disp = source_basis.phi().columns(0, k_last) * &tau;
    let deformed_source: Vec<Point3<f64>> = source
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| Point3::new(v.x + disp[(i, 0)], v.y + disp[(i, 1)], v.z + disp[(i, 2)]))
        .collect();
    if deformed_source
        .iter()
        .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
    {
        return Err(Error::NonFiniteEnergy {
            level: *schedule.levels.last().unwrap(),
        });
    }

    Ok(MatchResult {
        point_map,
        reverse_map,
        deformed_source,
        functional_map: c,
        displacement: Displacement::from_matrix(tau),
        levels: traces,
    })
}

/// Compose two matches against a shared template into a direct source-to-
/// source correspondence: for each vertex of A, hop through the template to
/// a vertex of B.
pub fn chain_via_template(
    match_a_to_t: &MatchResult,
    match_b_to_t: &MatchResult,
) -> Result<PointMap> {
    let t_len_a = match_a_to_t.point_map.len();
    let t_len_b = match_b_to_t.point_map.len();
    if t_len_a != t_len_b {
        return Err(Error::TemplateMismatch {
            left: t_len_a,
            right: t_len_b,
        });
    }
    // A -> T from A's reverse map, then T -> B from B's point map
    let assignments = match_a_to_t
        .reverse_map
        .assignments
        .iter()
        .map(|&t| match_b_to_t.point_map.assignments[t])
        .collect();
    Ok(PointMap::new(assignments, MapDirection::SourceToTarget))
}

fn damped_cols(m: &DMatrix<f64>, damping: &[f64]) -> DMatrix<f64> {
    let k = damping.len();
    let mut out = m.columns(0, k).into_owned();
    for (c, &d) in damping.iter().enumerate() {
        for i in 0..out.nrows() {
            out[(i, c)] *= d;
        }
    }
    out
}

fn damped_rows(m: &DMatrix<f64>, damping: &[f64]) -> DMatrix<f64> {
    let mut out = m.rows(0, damping.len()).into_owned();
    for (r, &d) in damping.iter().enumerate() {
        for c in 0..out.ncols() {
            out[(r, c)] *= d;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_shape() {
        let s = make_schedule(6, 500, 50).unwrap();
        assert_eq!(s.levels.len(), 50);
        assert!((s.levels[0] - 6.0).abs() < 1e-12);
        assert!((s.levels[49] - 500.0).abs() < 1e-9);
        for w in s.levels.windows(2) {
            assert!(w[1] > w[0]);
        }
        // log spacing: constant ratio
        let r0 = s.levels[1] / s.levels[0];
        let r1 = s.levels[30] / s.levels[29];
        assert!((r0 - r1).abs() < 1e-9);
    }

    #[test]
    fn schedule_contract_errors() {
        assert!(matches!(make_schedule(6, 6, 10), Err(Error::InvalidRange(_))));
        assert!(matches!(make_schedule(6, 500, 1), Err(Error::InvalidRange(_))));
        let s = make_schedule(6, 500, 2).unwrap();
        assert_eq!(s.levels.len(), 2);
        assert!((s.levels[0] - 6.0).abs() < 1e-12 && (s.levels[1] - 500.0).abs() < 1e-9);
    }

    #[test]
    fn chain_identity_and_permutations() {
        use crate::mesh::MapDirection::*;
        let mk = |point: Vec<usize>, rev: Vec<usize>| MatchResult {
            point_map: PointMap::new(point, TargetToSource),
            reverse_map: PointMap::new(rev, SourceToTarget),
            deformed_source: Vec::new(),
            functional_map: FunctionalMap::identity(2),
            displacement: Displacement::zeros(2),
            levels: Vec::new(),
        };
        // identity everything
        let a = mk((0..5).collect(), (0..5).collect());
        let b = mk((0..5).collect(), (0..5).collect());
        let chained = chain_via_template(&a, &b).unwrap();
        assert_eq!(chained.assignments, (0..5).collect::<Vec<_>>());

        // A->T = pi, B->T = rho: composition must be rho^{-1} . pi
        let pi = vec![2usize, 0, 1];
        let rho = vec![1usize, 2, 0];
        let rho_inv = vec![2usize, 0, 1];
        let a = mk(vec![1, 2, 0] /* pi^{-1} */, pi.clone());
        let b = mk(rho_inv.clone() /* T->B = rho^{-1} */, rho.clone());
        let chained = chain_via_template(&a, &b).unwrap();
        let expect: Vec<usize> = pi.iter().map(|&t| rho_inv[t]).collect();
        assert_eq!(chained.assignments, expect);

        // mismatched template sizes
        let a = mk((0..100).collect(), (0..100).collect());
        let b = mk((0..101).collect(), (0..101).collect());
        assert!(matches!(
            chain_via_template(&a, &b),
            Err(Error::TemplateMismatch { left: 100, right: 101 })
        ));
    }
}
