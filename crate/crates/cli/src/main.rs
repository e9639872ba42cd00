//! Command-line front end: match a pair of meshes, smooth a mesh at a
//! chosen level, evaluate correspondences, run the ablation table, or run
//! the initialization search on its own.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use shapecorr::alignment::Displacement;
use shapecorr::driver::{run_full_match, surrogate_context, DriverOutput};
use shapecorr::error::Error;
use shapecorr::evaluation::{
    conformal_distortion, geodesic_error, mean_error, run_ablation, AblationSwitch, ErrorCurve,
    MatchPair,
};
use shapecorr::mcmc::{mcmc_search, rigid_init, McmcOutcome};
use shapecorr::mesh::{io as mesh_io, load_mesh, MapDirection, PointMap, TriMesh};
use shapecorr::spectral::{compute_basis, smooth_at_level, ShellLevel, Smoothing};

#[derive(Parser)]
#[command(name = "shapecorr", version, about = "Dense correspondence and smooth deformation between triangle meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file (sectioned key = value document).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration entry, e.g. --set pipeline.sigma=0.7
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Root random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Thread budget for internal parallelism (0 = library default).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Match a source mesh onto a target mesh end to end.
    Match {
        source: PathBuf,
        target: PathBuf,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the proposal-energy report to this path as well.
        #[arg(long)]
        mcmc_report: Option<PathBuf>,
        /// Write correspondence files with 1-based indices.
        #[arg(long)]
        one_based: bool,
        /// Externally computed descriptor matrices (source, target).
        #[arg(long, num_args = 2, value_names = ["SRC", "TGT"])]
        descriptors: Option<Vec<PathBuf>>,
    },
    /// Smooth a mesh at level K and write the result.
    Smooth {
        mesh: PathBuf,
        #[arg(long, short)]
        k: f64,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// shell (sigmoid weights) or spectral (hard truncation).
        #[arg(long, default_value = "shell")]
        mode: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate a predicted correspondence against ground truth.
    Eval {
        /// Predicted correspondence file (one target index per line).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth correspondence file, or "identity".
        #[arg(long)]
        gt: String,
        /// Mesh the correspondences point into.
        #[arg(long)]
        target: PathBuf,
        /// Mesh the correspondences originate from (enables the conformal
        /// distortion report of the snapped map).
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        one_based: bool,
        /// Number of thresholds on the accuracy curve.
        #[arg(long, default_value_t = 100)]
        curve_steps: usize,
    },
    /// Run the component-ablation table over a pair manifest.
    Ablate {
        /// Manifest: one pair per line, "name source target gt|identity".
        manifest: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Comma-separated switch names (default: all).
        #[arg(long)]
        switches: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run only the initialization search (rigid pose + proposals).
    Init {
        source: PathBuf,
        target: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for usage/input problems, 3 for numerical failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::EmptyMesh
        | Error::NonTriangleFace { .. }
        | Error::IndexOutOfRange { .. }
        | Error::KTooLarge { .. }
        | Error::DimensionMismatch(_)
        | Error::NonFiniteValue(_)
        | Error::TemplateMismatch { .. }
        | Error::InvalidRange(_)
        | Error::Io { .. }
        | Error::Config(_) => 2,
        Error::DegenerateGeometry
        | Error::SolverFailure(_)
        | Error::DegenerateSpectrum(_)
        | Error::AllSurrogatesFailed
        | Error::NonFiniteEnergy { .. } => 3,
    }
}

fn dispatch(cli: Cli) -> shapecorr::Result<()> {
    match cli.command {
        Command::Match {
            source,
            target,
            out,
            config,
            mcmc_report,
            one_based,
            descriptors,
        } => cmd_match(&source, &target, &out, config, mcmc_report, one_based, descriptors),
        Command::Smooth {
            mesh,
            k,
            sigma,
            mode,
            out,
        } => cmd_smooth(&mesh, k, sigma, &mode, &out),
        Command::Eval {
            pred,
            gt,
            target,
            source,
            out,
            one_based,
            curve_steps,
        } => cmd_eval(&pred, &gt, &target, source.as_deref(), &out, one_based, curve_steps),
        Command::Ablate {
            manifest,
            out,
            switches,
            config,
        } => cmd_ablate(&manifest, &out, switches.as_deref(), config),
        Command::Init {
            source,
            target,
            out,
            config,
        } => cmd_init(&source, &target, &out, config),
    }
}

fn build_config(args: &ConfigArgs) -> shapecorr::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &args.sets {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
        config.driver.seed = seed;
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    config.apply_env();
    if config.threads > 0 {
        init_threads(config.threads);
    }
    Ok(config)
}

fn init_threads(threads: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
    {
        eprintln!("warning: could not size thread pool: {e}");
    }
}

fn ensure_dir(dir: &Path) -> shapecorr::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, body: &str) -> shapecorr::Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_mcmc_report(path: &Path, mcmc: &McmcOutcome) -> shapecorr::Result<()> {
    let mut body = String::from("proposal,energy,accepted\n");
    for (i, r) in mcmc.records.iter().enumerate() {
        body.push_str(&format!("{},{},{}\n", i, r.energy, r.accepted as u8));
    }
    write_text(path, &body)
}

fn write_energy_trace(path: &Path, out: &DriverOutput) -> shapecorr::Result<()> {
    let mut body = String::from("level,alignment,feature,arap,total\n");
    for t in &out.result.levels {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            t.level,
            t.energy.alignment,
            t.energy.feature,
            t.energy.arap,
            t.energy.total()
        ));
    }
    write_text(path, &body)
}

#[allow(clippy::too_many_arguments)]
fn cmd_match(
    source_path: &Path,
    target_path: &Path,
    out: &Path,
    config_args: ConfigArgs,
    mcmc_report: Option<PathBuf>,
    one_based_flag: bool,
    descriptors: Option<Vec<PathBuf>>,
) -> shapecorr::Result<()> {
    let mut config = build_config(&config_args)?;
    config.one_based = config.one_based || one_based_flag;
    let source = load_mesh(source_path)?;
    let target = load_mesh(target_path)?;

    let external = match &descriptors {
        Some(paths) => Some((
            shapecorr::descriptors::load_external_descriptors(&paths[0], &source)?,
            shapecorr::descriptors::load_external_descriptors(&paths[1], &target)?,
        )),
        None => None,
    };

    let output = run_full_match(
        &source,
        &target,
        external.as_ref().map(|(a, b)| (a, b)),
        &config.driver,
    )?;

    ensure_dir(out)?;
    mesh_io::write_correspondence(
        out.join("map_target_to_source.txt"),
        &output.result.point_map.assignments,
        config.one_based,
    )?;
    mesh_io::write_correspondence(
        out.join("map_source_to_target.txt"),
        &output.result.reverse_map.assignments,
        config.one_based,
    )?;
    mesh_io::write_off(
        out.join("deformed_source.off"),
        &output.result.deformed_source,
        &output.source_posed.triangles,
    )?;
    write_energy_trace(&out.join("energy_trace.csv"), &output)?;
    if let Some(mcmc) = &output.mcmc {
        write_mcmc_report(&out.join("mcmc_report.csv"), mcmc)?;
        if let Some(extra) = &mcmc_report {
            write_mcmc_report(extra, mcmc)?;
        }
    }
    write_text(&out.join("config.snapshot"), &config.to_document())?;

    let energy = output.result.final_energy();
    println!(
        "matched {} -> {}: final energy {energy:.6e}, outputs in {}",
        source_path.display(),
        target_path.display(),
        out.display()
    );
    Ok(())
}

fn cmd_smooth(mesh_path: &Path, k: f64, sigma: f64, mode: &str, out: &Path) -> shapecorr::Result<()> {
    if !(k > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidRange(format!(
            "need k > 0 and sigma > 0, got {k} and {sigma}"
        )));
    }
    let smoothing = match mode {
        "shell" => Smoothing::Shell,
        "spectral" | "truncation" => Smoothing::HardTruncation,
        other => return Err(Error::Config(format!("unknown mode {other:?}"))),
    };
    let mesh = load_mesh(mesh_path)?;
    if (k.round() as usize) > mesh.num_vertices().saturating_sub(1) {
        return Err(Error::KTooLarge {
            requested: k.round() as usize,
            max: mesh.num_vertices().saturating_sub(1),
        });
    }
    let level = ShellLevel::new(k, sigma);
    let k_total = ((k.ceil() as usize) + (7.0 / sigma).ceil() as usize)
        .min(mesh.num_vertices().saturating_sub(1));
    let basis = compute_basis(&mesh, k_total)?;
    let smoothed = smooth_at_level(&basis, &mesh.coords_matrix(), &level, smoothing);
    let vertices: Vec<nalgebra::Point3<f64>> = (0..mesh.num_vertices())
        .map(|i| nalgebra::Point3::new(smoothed[(i, 0)], smoothed[(i, 1)], smoothed[(i, 2)]))
        .collect();
    match mesh_io::MeshFormat::from_path(out) {
        Some(mesh_io::MeshFormat::PlyAscii) => mesh_io::write_ply(out, &vertices, &mesh.triangles)?,
        _ => mesh_io::write_off(out, &vertices, &mesh.triangles)?,
    }
    println!("smoothed {} at K={k} ({mode}) -> {}", mesh_path.display(), out.display());
    Ok(())
}

fn cmd_eval(
    pred_path: &Path,
    gt_spec: &str,
    target_path: &Path,
    source_path: Option<&Path>,
    out: &Path,
    one_based: bool,
    curve_steps: usize,
) -> shapecorr::Result<()> {
    let target = load_mesh(target_path)?;
    let pred_raw = mesh_io::read_correspondence(pred_path, one_based)?;
    let gt_raw: Vec<usize> = if gt_spec == "identity" {
        (0..pred_raw.len()).collect()
    } else {
        mesh_io::read_correspondence(Path::new(gt_spec), one_based)?
    };
    if pred_raw.len() != gt_raw.len() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} entries, ground truth {}",
            pred_raw.len(),
            gt_raw.len()
        )));
    }
    let pred = PointMap::new(pred_raw, MapDirection::SourceToTarget);
    let gt = PointMap::new(gt_raw, MapDirection::SourceToTarget);
    let errors = geodesic_error(&pred, &gt, &target)?;
    let mean = mean_error(&errors);
    let curve = ErrorCurve::with_uniform_thresholds(&errors, curve_steps.max(1));

    ensure_dir(out)?;
    let mut body = String::from("threshold,fraction\n");
    for (t, f) in curve.thresholds.iter().zip(&curve.fractions) {
        body.push_str(&format!("{t},{f}\n"));
    }
    write_text(&out.join("curve.csv"), &body)?;
    let mut err_body = String::from("vertex,error\n");
    for (i, e) in errors.iter().enumerate() {
        err_body.push_str(&format!("{i},{e}\n"));
    }
    write_text(&out.join("errors.csv"), &err_body)?;

    let mut summary = format!("mean_error = {mean}\n");
    if let Some(src_path) = source_path {
        let source = load_mesh(src_path)?;
        if source.num_vertices() != pred.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} source vertices but {} prediction entries",
                source.num_vertices(),
                pred.len()
            )));
        }
        // snapped map: each source vertex lands on its matched target vertex
        let mapped: Vec<nalgebra::Point3<f64>> = pred
            .assignments
            .iter()
            .map(|&t| target.vertices[t])
            .collect();
        let report = conformal_distortion(&source, &mapped, 100.0)?;
        summary.push_str(&format!("mean_conformal_distortion = {}\n", report.mean));
        let mut hist = String::from("bin_upper,count\n");
        for (edge, count) in &report.histogram {
            hist.push_str(&format!("{edge},{count}\n"));
        }
        write_text(&out.join("distortion_histogram.csv"), &hist)?;
    }
    write_text(&out.join("summary.txt"), &summary)?;
    println!("mean error {mean:.6}; reports in {}", out.display());
    Ok(())
}

fn cmd_ablate(
    manifest_path: &Path,
    out: &Path,
    switches: Option<&str>,
    config_args: ConfigArgs,
) -> shapecorr::Result<()> {
    let config = build_config(&config_args)?;
    let body = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;

    struct PairSpec {
        name: String,
        source: TriMesh,
        target: TriMesh,
        gt: Vec<usize>,
    }
    let mut specs: Vec<PairSpec> = Vec::new();
    for (ln, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                manifest_path,
                format!("line {}: expected 'name source target gt|identity'", ln + 1),
            ));
        }
        let source = load_mesh(fields[1])?;
        let target = load_mesh(fields[2])?;
        let gt = if fields[3] == "identity" {
            if source.num_vertices() != target.num_vertices() {
                return Err(Error::DimensionMismatch(format!(
                    "pair {}: identity ground truth needs equal vertex counts",
                    fields[0]
                )));
            }
            (0..source.num_vertices()).collect()
        } else {
            mesh_io::read_correspondence(fields[3], false)?
        };
        specs.push(PairSpec {
            name: fields[0].to_string(),
            source,
            target,
            gt,
        });
    }
    if specs.is_empty() {
        return Err(Error::parse(manifest_path, "no pairs in manifest"));
    }

    let switch_list: Vec<AblationSwitch> = match switches {
        None => AblationSwitch::ALL.to_vec(),
        Some(names) => names
            .split(',')
            .map(|n| {
                AblationSwitch::parse(n.trim())
                    .ok_or_else(|| Error::Config(format!("unknown switch {n:?}")))
            })
            .collect::<shapecorr::Result<_>>()?,
    };

    let pairs: Vec<MatchPair> = specs
        .iter()
        .map(|s| MatchPair {
            name: s.name.clone(),
            source: &s.source,
            target: &s.target,
            gt_source_to_target: s.gt.clone(),
        })
        .collect();
    let rows = run_ablation(&pairs, &config.driver, &switch_list)?;

    ensure_dir(out)?;
    let mut table = String::from("switch,mean_error,failure_rate,mean_distortion\n");
    for row in &rows {
        table.push_str(&format!(
            "{},{},{},{}\n",
            row.switch.name(),
            row.mean_error,
            row.failure_rate,
            row.mean_distortion
        ));
    }
    write_text(&out.join("ablation.csv"), &table)?;
    let mut per_pair = String::from("switch,pair,error\n");
    for row in &rows {
        for (pair, err) in pairs.iter().zip(&row.per_pair_error) {
            per_pair.push_str(&format!("{},{},{}\n", row.switch.name(), pair.name, err));
        }
    }
    write_text(&out.join("ablation_per_pair.csv"), &per_pair)?;
    write_text(&out.join("config.snapshot"), &config.to_document())?;
    println!("{} switches x {} pairs -> {}", rows.len(), pairs.len(), out.display());
    Ok(())
}

fn cmd_init(
    source_path: &Path,
    target_path: &Path,
    out: &Path,
    config_args: ConfigArgs,
) -> shapecorr::Result<()> {
    let config = build_config(&config_args)?;
    let source = load_mesh(source_path)?;
    let target = load_mesh(target_path)?;
    let ctx = surrogate_context(&source, &target, &config.driver)?;
    let rigid = rigid_init(&ctx, config.seed)?;
    let posed = ctx.transformed_source(&rigid.rotation, &rigid.translation);
    let mcmc = mcmc_search(&posed, config.seed)?;

    ensure_dir(out)?;
    write_mcmc_report(&out.join("mcmc_report.csv"), &mcmc)?;
    let mut rigid_body = String::from("candidate,energy\n");
    for (i, s) in rigid.scores.iter().enumerate() {
        rigid_body.push_str(&format!("{i},{s}\n"));
    }
    write_text(&out.join("rigid_scores.csv"), &rigid_body)?;
    let m = rigid.rotation.matrix();
    let mut summary = String::new();
    summary.push_str(&format!("selected_rotation = {}\n", rigid.selected));
    summary.push_str(&format!(
        "rotation = [{} {} {}; {} {} {}; {} {} {}]\n",
        m[(0, 0)], m[(0, 1)], m[(0, 2)],
        m[(1, 0)], m[(1, 1)], m[(1, 2)],
        m[(2, 0)], m[(2, 1)], m[(2, 2)]
    ));
    summary.push_str(&format!("best_proposal_energy = {}\n", mcmc.best_energy));
    summary.push_str(&format!("baseline_energy = {}\n", mcmc.baseline_energy));
    let best: &Displacement = &mcmc.best;
    summary.push_str("tau_best =\n");
    for r in 0..best.k() {
        summary.push_str(&format!(
            "  {} {} {}\n",
            best.tau[(r, 0)],
            best.tau[(r, 1)],
            best.tau[(r, 2)]
        ));
    }
    write_text(&out.join("init_summary.txt"), &summary)?;
    write_text(&out.join("config.snapshot"), &config.to_document())?;
    println!(
        "init: rigid candidate {} selected, best proposal energy {:.6}",
        rigid.selected, mcmc.best_energy
    );
    Ok(())
}
