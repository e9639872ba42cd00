//! End-to-end matching flow: decimation, rigid pose search, Metropolis
//! initialization, then the full hierarchical pipeline. This is what the
//! `match` command and the ablation harness run.

use nalgebra::{Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alignment::Displacement;
use crate::descriptors::{compute_hks, DescriptorField};
use crate::error::Result;
use crate::mcmc::{
    self, mcmc_search, random_rotation, rigid_init, split_seed, McmcOutcome, RigidInit,
    SurrogateConfig, SurrogateContext,
};
use crate::mesh::TriMesh;
use crate::pipeline::{hierarchical_match, MatchParams, MatchResult};
use crate::spectral::{compute_basis_with, SolverPath, SpectralBasis, DENSE_LIMIT};

/// How the initial rigid pose is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RigidMode {
    /// Surrogate-scored search over octahedral plus random rotations.
    #[default]
    Search,
    /// A random rotation (the "random rigid" ablation).
    Random,
    /// No rotation.
    Identity,
}

/// Settings of the full flow.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverConfig {
    pub params: MatchParams,
    pub surrogate: SurrogateConfig,
    pub seed: u64,
    pub rigid_mode: RigidMode,
    /// Score displacement proposals; with `false` the pipeline starts from
    /// tau = 0 (the "w/o MCMC" ablation).
    pub use_mcmc: bool,
    /// Heat-kernel-signature time samples; 0 disables the built-in
    /// descriptor.
    pub hks_times: usize,
    /// Directory for basis cache files; `None` disables caching.
    pub cache_dir: Option<std::path::PathBuf>,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            params: MatchParams::default(),
            surrogate: SurrogateConfig::default(),
            seed: 0,
            rigid_mode: RigidMode::Search,
            use_mcmc: true,
            hks_times: 16,
            cache_dir: None,
        }
    }
}

/// Everything produced by a full match run.
pub struct DriverOutput {
    pub result: MatchResult,
    /// The rigid transform applied to the source before matching.
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    /// The transformed source the result refers to.
    pub source_posed: TriMesh,
    pub rigid: Option<RigidInit>,
    pub mcmc: Option<McmcOutcome>,
}

/// Spectral bases sized for the pipeline, solver path picked by mesh size.
pub fn pipeline_basis(mesh: &TriMesh, params: &MatchParams, other_n: usize) -> Result<SpectralBasis> {
    let n_min = mesh.num_vertices().min(other_n);
    let k_max = params.effective_k_max(n_min);
    let k_total = (k_max + (7.0 / params.sigma).ceil() as usize)
        .min(mesh.num_vertices().saturating_sub(1));
    let path = if mesh.num_vertices() <= DENSE_LIMIT {
        SolverPath::Dense
    } else {
        SolverPath::ShiftInvert
    };
    compute_basis_with(mesh, k_total, path)
}

/// Run the complete flow. External descriptor fields, when given, are
/// concatenated with the built-in ones.
pub fn run_full_match(
    source: &TriMesh,
    target: &TriMesh,
    external: Option<(&DescriptorField, &DescriptorField)>,
    config: &DriverConfig,
) -> Result<DriverOutput> {
    // surrogate context over decimated shapes, shared by every scoring run
    let needs_surrogates = config.use_mcmc || config.rigid_mode == RigidMode::Search;
    let ctx = if needs_surrogates {
        let mut surr = config.surrogate.clone();
        surr.sigma = config.params.sigma;
        surr.k_init = config.params.k_init;
        Some(SurrogateContext::new(source, target, &surr)?)
    } else {
        None
    };

    // rigid pose
    let (rotation, translation, rigid) = match config.rigid_mode {
        RigidMode::Search => {
            let init = rigid_init(ctx.as_ref().unwrap(), config.seed)?;
            (init.rotation, init.translation, Some(init))
        }
        RigidMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, "random-rigid"));
            (random_rotation(&mut rng), Vector3::zeros(), None)
        }
        RigidMode::Identity => (Rotation3::identity(), Vector3::zeros(), None),
    };
    let source_posed = source.transformed(&rotation, &translation);

    // displacement proposals on the posed surrogate pair
    let mcmc_out = if config.use_mcmc {
        let posed_ctx = ctx
            .as_ref()
            .unwrap()
            .transformed_source(&rotation, &translation);
        Some(mcmc_search(&posed_ctx, config.seed)?)
    } else {
        None
    };
    let init = mcmc_out
        .as_ref()
        .map(|m| m.best.clone())
        .unwrap_or_else(|| Displacement::zeros(config.params.k_init));

    // full-resolution bases; intrinsic, so computed on the unposed source
    let source_basis = cached_pipeline_basis(source, config, target.num_vertices())?;
    let target_basis = cached_pipeline_basis(target, config, source.num_vertices())?;

    // descriptors
    let hks_pair = if config.hks_times > 0 {
        Some((
            compute_hks(&source_basis, config.hks_times)?,
            compute_hks(&target_basis, config.hks_times)?,
        ))
    } else {
        None
    };
    let features: Option<(DescriptorField, DescriptorField)> = match (hks_pair, external) {
        (Some((hs, ht)), Some((es, et))) => Some((hs.concat(es)?, ht.concat(et)?)),
        (Some(pair), None) => Some(pair),
        (None, Some((es, et))) => Some((es.clone(), et.clone())),
        (None, None) => None,
    };

    let result = hierarchical_match(
        &source_posed,
        target,
        &source_basis,
        &target_basis,
        features.as_ref().map(|(a, b)| (a, b)),
        &init,
        &config.params,
    )?;

    Ok(DriverOutput {
        result,
        rotation,
        translation,
        source_posed,
        rigid,
        mcmc: mcmc_out,
    })
}

/// [`pipeline_basis`] backed by the on-disk cache when a cache directory is
/// configured. Cache files are keyed by mesh hash and eigenpair count.
pub fn cached_pipeline_basis(
    mesh: &TriMesh,
    config: &DriverConfig,
    other_n: usize,
) -> Result<SpectralBasis> {
    let Some(dir) = &config.cache_dir else {
        return pipeline_basis(mesh, &config.params, other_n);
    };
    let n_min = mesh.num_vertices().min(other_n);
    let k_max = config.params.effective_k_max(n_min);
    let k_total = (k_max + (7.0 / config.params.sigma).ceil() as usize)
        .min(mesh.num_vertices().saturating_sub(1));
    let path = dir.join(format!("basis-{:016x}-k{}.bin", mesh.hash(), k_total));
    if let Some(basis) = crate::spectral::cache::load_basis(&path, mesh)? {
        if basis.k_total() == k_total {
            return Ok(basis);
        }
    }
    let basis = pipeline_basis(mesh, &config.params, other_n)?;
    if let Err(e) = crate::spectral::cache::save_basis(&path, &basis) {
        eprintln!("warning: could not write basis cache: {e}");
    }
    Ok(basis)
}

/// Convenience handle used by tests: decimate and score without running the
/// full pipeline.
pub fn surrogate_context(
    source: &TriMesh,
    target: &TriMesh,
    config: &DriverConfig,
) -> Result<SurrogateContext> {
    let mut surr = config.surrogate.clone();
    surr.sigma = config.params.sigma;
    surr.k_init = config.params.k_init;
    mcmc::SurrogateContext::new(source, target, &surr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn identity_flow_without_search_matches_self() {
        let mesh = synth::icosphere(2).build().unwrap();
        let config = DriverConfig {
            params: MatchParams {
                k_max: 20,
                steps: 6,
                ..Default::default()
            },
            rigid_mode: RigidMode::Identity,
            use_mcmc: false,
            hks_times: 6,
            ..Default::default()
        };
        let out = run_full_match(&mesh, &mesh, None, &config).unwrap();
        let identity = out
            .result
            .point_map
            .assignments
            .iter()
            .enumerate()
            .filter(|(m, &s)| *m == s)
            .count();
        assert!(identity >= (0.99 * mesh.num_vertices() as f64) as usize);
    }
}
