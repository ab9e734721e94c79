use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use semnbv::experiment::{
    compare_methods, preset, run_to_dir, summarize, write_comparison, ExperimentConfig, PlannerKind,
};
use semnbv::metrics::IgMetric;
use semnbv::raycast::SamplingMode;
use semnbv::sensor::{corrupt_labels, generate_scene, ground_truth_surface, render, Scene};
use semnbv::{CameraPose, ExecMode, Vec3};

#[derive(Parser)]
#[command(
    name = "semnbv",
    version,
    about = "Target-aware next-best-view planning simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a procedural scene (scene.json) and its ground-truth points (ground_truth.ply).
    GenerateScene(SceneArgs),
    /// Run the closed loop for every seed and write one CSV per run.
    Run(RunArgs),
    /// Run a matrix of planners, metrics and sampling modes on shared seeds.
    Compare(CompareArgs),
    /// Render one labeled depth image as a pair of PGM files.
    RenderDebug(RenderArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in starting point: default, plant or row.
    #[arg(long)]
    preset: Option<String>,
    /// Run seeds: `3`, `0,2,5` or `0..10`.
    #[arg(long)]
    seed: Option<String>,
    /// Scene seeds crossed with the run seeds, same syntax as --seed.
    #[arg(long)]
    scene_seeds: Option<String>,
    #[arg(long)]
    run_id: Option<String>,
    /// ours, frontier or predefined.
    #[arg(long)]
    planner: Option<PlannerKind>,
    /// osamcep, rs, ae, uvc, uvpc, oae or mi.
    #[arg(long)]
    metric: Option<IgMetric>,
    /// adaptive, dense (28x28) or sparse (6x6).
    #[arg(long)]
    sampling: Option<SamplingMode>,
    /// Viewpoints executed per planning round.
    #[arg(long)]
    topk: Option<usize>,
    /// Candidate sphere radius (m).
    #[arg(long, allow_negative_numbers = true)]
    radius: Option<f64>,
    #[arg(long)]
    ntheta: Option<usize>,
    #[arg(long)]
    nphi: Option<usize>,
    #[arg(long)]
    initial_scan_count: Option<usize>,
    #[arg(long)]
    viewpoints_per_plant: Option<usize>,
    /// Map resolution (m).
    #[arg(long, allow_negative_numbers = true)]
    resolution: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    max_range: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    p_gt: Option<f64>,
    /// Fruit cluster size for the ROI box (m).
    #[arg(long, allow_negative_numbers = true)]
    roi_size: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    max_dist: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    #[arg(long)]
    scene_file: Option<PathBuf>,
    #[arg(long)]
    workspace_file: Option<PathBuf>,
    /// Plants in a generated scene.
    #[arg(long)]
    plants: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    /// Write wall-clock timings into the CSVs.
    #[arg(long)]
    timings: bool,
    /// Disable multithreading.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Comma-separated planners to compare.
    #[arg(long, value_delimiter = ',')]
    planners: Vec<PlannerKind>,
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<IgMetric>,
    #[arg(long, value_delimiter = ',')]
    samplings: Vec<SamplingMode>,
    /// Noise levels to compare.
    #[arg(long, value_delimiter = ',')]
    p_gts: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SceneArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Camera position `x,y,z`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    position: Vec<f64>,
    /// Look-at point `x,y,z`; defaults to the scene center.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    target: Option<Vec<f64>>,
    /// Apply label noise at the configured p_gt.
    #[arg(long)]
    noisy: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range `{s}`");
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed `{t}`"))
        })
        .collect()
}

impl ConfigArgs {
    fn exec(&self) -> ExecMode {
        if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => bail!("--config and --preset are exclusive"),
            (Some(path), None) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_toml(&text)?
            }
            (None, Some(name)) => preset(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(s) = &self.seed {
            c.seeds = parse_seeds(s)?;
        }
        if let Some(s) = &self.scene_seeds {
            c.scene_seeds = parse_seeds(s)?;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = v; })*
            };
        }
        set!(
            run_id => run_id, planner => planner, metric => metric, sampling => sampling,
            topk => top_k, radius => radius, ntheta => n_theta, nphi => n_phi,
            initial_scan_count => initial_scan_count,
            viewpoints_per_plant => viewpoints_per_plant, resolution => resolution,
            max_range => max_range, p_gt => p_gt, roi_size => roi_size,
            max_dist => max_dist, eps => eps, min_pts => min_pts,
        );
        if let Some(p) = &self.scene_file {
            c.scene_file = Some(p.clone());
        }
        if let Some(p) = &self.workspace_file {
            c.workspace_file = Some(p.clone());
        }
        if let Some(n) = self.plants {
            c.scene.plants = n;
        }
        if let Some(n) = self.rows {
            c.scene.rows = n;
        }
        c.record_timings |= self.timings;
        c.validate()?;
        Ok(c)
    }
}

fn load_scene(c: &ExperimentConfig) -> Result<Scene> {
    Ok(match &c.scene_file {
        Some(path) => Scene::from_json(&fs::read_to_string(path)?)?,
        None => generate_scene(
            &c.scene,
            c.scene_seeds.first().copied().unwrap_or(c.seeds[0]),
        )?,
    })
}

fn generate(args: &SceneArgs) -> Result<()> {
    let c = args.cfg.resolve()?;
    let scene = load_scene(&c)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("scene.json"), scene.to_json()?)?;
    let pts = ground_truth_surface(&scene, c.gt_density, scene.seed)?;
    let mut f = fs::File::create(args.out.join("ground_truth.ply"))?;
    semnbv::map::write_ply(&mut f, &pts)?;
    println!(
        "{} primitives, {} ground-truth points -> {}",
        scene.primitives.len(),
        pts.len(),
        args.out.display()
    );
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let c = args.cfg.resolve()?;
    let logs = run_to_dir(&c, &args.out, args.cfg.exec())?;
    let s = summarize(&c, logs);
    println!(
        "{}: {} runs, final coverage {:.3} ± {:.3}, final entropy {:.1}, viewpoints to 80% {:.2}",
        s.label,
        s.runs,
        s.final_coverage_mean,
        s.final_coverage_std,
        s.final_entropy_mean,
        s.viewpoints_to_80
    );
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<()> {
    let base = args.cfg.resolve()?;
    let planners = or_base(&args.planners, base.planner);
    let metrics = or_base(&args.metrics, base.metric);
    let samplings = or_base(&args.samplings, base.sampling);
    let p_gts = or_base(&args.p_gts, base.p_gt);
    let mut cfgs = Vec::new();
    for &planner in &planners {
        for &metric in &metrics {
            for &sampling in &samplings {
                for &p_gt in &p_gts {
                    let mut c = base.clone();
                    c.planner = planner;
                    c.metric = metric;
                    c.sampling = sampling;
                    c.p_gt = p_gt;
                    let mut id = vec![planner.to_string()];
                    if planner != PlannerKind::Predefined {
                        id.push(metric.to_string());
                    }
                    if samplings.len() > 1 {
                        id.push(sampling.to_string());
                    }
                    if p_gts.len() > 1 {
                        id.push(format!("pgt{p_gt}"));
                    }
                    c.run_id = id.join("-");
                    c.validate()?;
                    cfgs.push(c);
                }
            }
        }
    }
    // Predefined ignores the metric, so duplicates collapse.
    let mut seen = std::collections::HashSet::new();
    cfgs.retain(|c| seen.insert(c.run_id.clone()));
    let summaries = compare_methods(&cfgs, args.cfg.exec())?;
    write_comparison(&args.out, &summaries)?;
    for c in &cfgs {
        fs::write(
            args.out.join(format!("{}.manifest.toml", c.run_id)),
            c.to_toml()?,
        )?;
    }
    println!(
        "{:<28} {:>9} {:>10} {:>8}",
        "method", "coverage", "entropy", "to 80%"
    );
    for s in &summaries {
        println!(
            "{:<28} {:>9.3} {:>10.1} {:>8.2}",
            s.label, s.final_coverage_mean, s.final_entropy_mean, s.viewpoints_to_80
        );
    }
    Ok(())
}

fn or_base<T: Copy>(v: &[T], base: T) -> Vec<T> {
    if v.is_empty() {
        vec![base]
    } else {
        v.to_vec()
    }
}

fn render_debug(args: &RenderArgs) -> Result<()> {
    let p = &args.position;
    if p.len() != 3 || args.target.as_ref().is_some_and(|t| t.len() != 3) {
        bail!("--position and --target take three comma-separated values");
    }
    let c = args.cfg.resolve()?;
    let scene = load_scene(&c)?;
    let (lo, hi) = scene.aabb();
    let target = match &args.target {
        Some(t) => Vec3::new(t[0], t[1], t[2]),
        None => (lo + hi) / 2.0,
    };
    let pose = CameraPose::look_at(Vec3::new(p[0], p[1], p[2]), target, Vec3::z())?;
    let mut obs = render(&scene, &c.camera, &pose);
    if args.noisy {
        obs = corrupt_labels(&obs, c.p_gt, semnbv::class::COUNT, c.seeds[0])?;
    }
    write_pgm_pair(&args.out, &obs)?;
    println!(
        "{} valid pixels -> {}",
        obs.valid_count(),
        args.out.display()
    );
    Ok(())
}

fn write_pgm_pair(out: &Path, obs: &semnbv::sensor::LabeledDepthImage) -> Result<()> {
    fs::create_dir_all(out)?;
    obs.write_depth_pgm(fs::File::create(out.join("depth.pgm"))?)?;
    obs.write_label_pgm(fs::File::create(out.join("label.pgm"))?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::GenerateScene(a) => generate(a),
        Cmd::Run(a) => run(a),
        Cmd::Compare(a) => compare(a),
        Cmd::RenderDebug(a) => render_debug(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
