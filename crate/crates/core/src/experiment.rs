//! Closed-loop active-mapping experiments and method comparisons.
//!
//! A run visits one or more stations (groups of plants). At each station it
//! executes a predefined scan, then alternates planning rounds (cluster fruit
//! voxels, sample and filter candidates, score them, pick the top k, order
//! them by TSP) with execution (render, corrupt labels, integrate, evaluate)
//! until the station's viewpoint budget is spent.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, CameraPose, Vec3};
use crate::class::{self, FRUIT};
use crate::error::{Error, Result};
use crate::eval::{fruit_boxes, fruit_coverage, total_fruit_entropy, Aabb, MetricSample};
use crate::map::{MapParams, SemanticOctree};
use crate::metrics::{mix_seed, IgContext, IgMetric};
use crate::par::{self, ExecMode};
use crate::planner::{
    cluster_targets, filter_workspace, frontier_candidates, order_viewpoints_tsp,
    predefined_scan_poses, sample_viewpoints, select_best, CandidateStatus, EvalOptions, ScanArc,
    ViewpointCandidate, WorkspaceModel,
};
use crate::raycast::{SamplingMode, DEFAULT_VISIBILITY_CUTOFF};
use crate::sensor::{
    corrupt_labels, generate_scene, ground_truth_surface, render_with, Scene, SceneSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    #[default]
    Ours,
    Frontier,
    Predefined,
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerKind::Ours => "ours",
            PlannerKind::Frontier => "frontier",
            PlannerKind::Predefined => "predefined",
        })
    }
}

impl FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ours" => Ok(PlannerKind::Ours),
            "frontier" => Ok(PlannerKind::Frontier),
            "predefined" => Ok(PlannerKind::Predefined),
            _ => Err(Error::Config(format!("unknown planner `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub seeds: Vec<u64>,
    /// Scene seeds crossed with `seeds`; empty means each run generates its
    /// scene from its own seed.
    pub scene_seeds: Vec<u64>,
    pub planner: PlannerKind,
    pub metric: IgMetric,
    pub sampling: SamplingMode,
    /// Map resolution (m).
    pub resolution: f64,
    /// Max depth range for mapping (m).
    pub max_range: f64,
    /// Probability that a segmentation mask keeps its true class.
    pub p_gt: f64,
    /// Typical fruit cluster size (m) for the ROI box.
    pub roi_size: f64,
    /// Viewpoint sampling sphere radius (m).
    pub radius: f64,
    pub n_phi: usize,
    pub n_theta: usize,
    /// Proximity gate for relevant voxels (m).
    pub max_dist: f64,
    /// DBSCAN neighborhood radius (m).
    pub eps: f64,
    pub min_pts: usize,
    pub top_k: usize,
    /// Executed views per plant, including the initial scan.
    pub viewpoints_per_plant: usize,
    /// Predefined scan views per plant before planning starts.
    pub initial_scan_count: usize,
    /// Plants visited together at one robot stop, taken column by column
    /// across rows; 0 puts the whole scene in one station.
    pub plants_per_station: usize,
    /// Extra distance between the scan cylinder and the plant (m).
    pub scan_standoff: f64,
    /// Angular span of the predefined scan arc (degrees). Arcs narrower
    /// than 360 face the aisle: even rows look from +y, odd rows from -y.
    pub scan_arc_deg: f64,
    /// Restrict the generated workspace to the aisle side of each plant.
    pub aisle_only: bool,
    pub frontier_samples: usize,
    /// Ground-truth surface sampling density (points per square meter).
    pub gt_density: f64,
    pub visibility_cutoff: f64,
    /// Workspace point file; when absent a box around each station is used.
    pub workspace_file: Option<PathBuf>,
    /// Scene file; when absent the scene is generated from `scene` and the seed.
    pub scene_file: Option<PathBuf>,
    /// Write wall-clock timings into the CSV (makes output non-reproducible).
    pub record_timings: bool,
    pub camera: CameraModel,
    pub scene: SceneSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run_id: "run".into(),
            seeds: vec![0],
            scene_seeds: Vec::new(),
            planner: PlannerKind::Ours,
            metric: IgMetric::Osamcep,
            sampling: SamplingMode::Adaptive,
            resolution: 0.015,
            max_range: 1.0,
            p_gt: 0.7,
            roi_size: 0.1,
            radius: 0.4,
            n_phi: 10,
            n_theta: 5,
            max_dist: 0.1,
            eps: 0.05,
            min_pts: 3,
            top_k: 2,
            viewpoints_per_plant: 30,
            initial_scan_count: 3,
            plants_per_station: 0,
            scan_standoff: 0.4,
            scan_arc_deg: 360.0,
            aisle_only: false,
            frontier_samples: 50,
            gt_density: 20000.0,
            visibility_cutoff: DEFAULT_VISIBILITY_CUTOFF,
            workspace_file: None,
            scene_file: None,
            record_timings: false,
            camera: CameraModel::default(),
            scene: SceneSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("resolution", self.resolution),
            ("max_range", self.max_range),
            ("roi_size", self.roi_size),
            ("radius", self.radius),
            ("max_dist", self.max_dist),
            ("eps", self.eps),
            ("scan_standoff", self.scan_standoff),
            ("scan_arc_deg", self.scan_arc_deg),
            ("gt_density", self.gt_density),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.p_gt) {
            return Err(Error::Config("p_gt must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.visibility_cutoff) {
            return Err(Error::Config("visibility_cutoff must lie in [0, 1)".into()));
        }
        let counts = [
            ("n_phi", self.n_phi),
            ("n_theta", self.n_theta),
            ("min_pts", self.min_pts),
            ("top_k", self.top_k),
            ("viewpoints_per_plant", self.viewpoints_per_plant),
            ("frontier_samples", self.frontier_samples),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.scan_arc_deg > 360.0 {
            return Err(Error::Config("scan_arc_deg must not exceed 360".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self
            .seeds
            .iter()
            .chain(&self.scene_seeds)
            .any(|s| *s > i64::MAX as u64)
        {
            return Err(Error::Config(
                "seeds must fit in a signed 64-bit integer".into(),
            ));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\', ',']) {
            return Err(Error::Config(
                "run_id must be non-empty without `/`, `\\` or `,`".into(),
            ));
        }
        self.camera
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.scene_file.is_none() {
            self.scene
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Every (scene seed, run seed) pair this configuration runs, scene
    /// seed major.
    pub fn trials(&self) -> Vec<Trial> {
        if self.scene_seeds.is_empty() {
            return self
                .seeds
                .iter()
                .map(|&s| Trial {
                    scene_seed: s,
                    seed: s,
                })
                .collect();
        }
        self.scene_seeds
            .iter()
            .flat_map(|&scene_seed| {
                self.seeds
                    .iter()
                    .map(move |&seed| Trial { scene_seed, seed })
            })
            .collect()
    }

    pub fn map_params(&self) -> MapParams {
        MapParams {
            resolution: self.resolution,
            num_classes: class::COUNT,
            target_class: FRUIT,
            max_range: self.max_range,
            ..MapParams::default()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Single plants and a free-moving camera: six plant models, ten trials
/// each, 30 views per plant.
pub fn plant_ablation() -> ExperimentConfig {
    ExperimentConfig {
        run_id: "plant".into(),
        seeds: (0..10).collect(),
        scene_seeds: (0..6).collect(),
        viewpoints_per_plant: 30,
        ..ExperimentConfig::default()
    }
}

/// Eight plants in two rows, visited pairwise from the aisle between them:
/// six scan views and six planned views per plant, ten trials.
pub fn row_scenario() -> ExperimentConfig {
    ExperimentConfig {
        run_id: "row".into(),
        seeds: (0..10).collect(),
        viewpoints_per_plant: 12,
        initial_scan_count: 6,
        plants_per_station: 2,
        scan_arc_deg: 120.0,
        aisle_only: true,
        scene: SceneSpec {
            plants: 8,
            rows: 2,
            ..SceneSpec::default()
        },
        ..ExperimentConfig::default()
    }
}

/// Looks up a preset by name (`default`, `plant` or `row`).
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "default" => Ok(ExperimentConfig::default()),
        "plant" => Ok(plant_ablation()),
        "row" => Ok(row_scenario()),
        _ => Err(Error::Config(format!("unknown preset `{name}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Trial {
    pub scene_seed: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Some station ran out of candidates before its budget was spent.
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub run_id: String,
    pub seed: u64,
    pub scene_seed: u64,
    pub planner: PlannerKind,
    pub metric: IgMetric,
    pub samples: Vec<MetricSample>,
    pub status: RunStatus,
    pub candidates_evaluated: usize,
    /// Wall-clock time spent scoring candidates (always measured).
    pub eval_ms: f64,
}

impl ExperimentLog {
    pub fn final_coverage(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.coverage)
    }

    pub fn final_entropy(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.entropy_nats)
    }

    /// 1-based count of executed views until coverage first reaches
    /// `level`, or `None` if it never does.
    pub fn viewpoints_to(&self, level: f64) -> Option<usize> {
        self.samples
            .iter()
            .position(|s| s.coverage >= level)
            .map(|i| i + 1)
    }

    pub fn eval_ms_per_candidate(&self) -> f64 {
        if self.candidates_evaluated == 0 {
            0.0
        } else {
            self.eval_ms / self.candidates_evaluated as f64
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            write!(
                line,
                "{},{},{},{},{},{:.6},{:.6},{},{:.3},{:.3}",
                self.run_id,
                self.seed,
                self.planner,
                self.metric,
                s.viewpoint_idx,
                s.entropy_nats,
                s.coverage,
                s.rays_cast,
                s.map_ms,
                s.plan_ms
            )
            .unwrap();
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str =
    "run_id,seed,planner,metric,viewpoint_idx,entropy_nats,coverage,rays_cast,map_ms,plan_ms";

#[derive(Debug, Clone)]
struct PlantRegion {
    min: Vec3,
    max: Vec3,
    row: usize,
}

impl PlantRegion {
    /// Azimuth pointing from the plant into its aisle.
    fn aisle_azimuth(&self) -> f64 {
        if self.row % 2 == 0 {
            FRAC_PI_2
        } else {
            -FRAC_PI_2
        }
    }
}

#[derive(Debug, Clone)]
struct Station {
    plants: Vec<PlantRegion>,
    min: Vec3,
    max: Vec3,
}

/// Splits the scene into plant regions (primitives go to the plant with the
/// nearest base) and groups them into stations column by column.
fn stations(scene: &Scene, per_station: usize) -> Vec<Station> {
    let empty = |row| PlantRegion {
        min: Vec3::repeat(f64::INFINITY),
        max: Vec3::repeat(f64::NEG_INFINITY),
        row,
    };
    let mut regions: Vec<PlantRegion> = if scene.plants.is_empty() {
        vec![empty(0)]
    } else {
        scene.plants.iter().map(|p| empty(p.row)).collect()
    };
    for prim in &scene.primitives {
        let (lo, hi) = prim.shape.aabb();
        let c = (lo + hi) / 2.0;
        let owner = scene
            .plants
            .iter()
            .enumerate()
            .map(|(i, pl)| (i, (pl.base.xy() - c.xy()).norm()))
            .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
            .0;
        let r = &mut regions[owner];
        r.min = r.min.inf(&lo);
        r.max = r.max.sup(&hi);
    }
    // Column-major order: plants facing each other across an aisle share a stop.
    let mut order: Vec<usize> = (0..regions.len())
        .filter(|&i| regions[i].min.x.is_finite())
        .collect();
    let rows = scene.spec.rows.max(1);
    let per_row = scene.plants.len().div_ceil(rows).max(1);
    order.sort_by_key(|&i| (i % per_row, regions[i].row, i));
    let per = if per_station == 0 {
        order.len().max(1)
    } else {
        per_station
    };
    order
        .chunks(per)
        .map(|ids| {
            let plants: Vec<PlantRegion> = ids.iter().map(|&i| regions[i].clone()).collect();
            let min = plants
                .iter()
                .fold(Vec3::repeat(f64::INFINITY), |m, p| m.inf(&p.min));
            let max = plants
                .iter()
                .fold(Vec3::repeat(f64::NEG_INFINITY), |m, p| m.sup(&p.max));
            Station { plants, min, max }
        })
        .collect()
}

fn inflate(b: &Aabb, by: f64) -> Aabb {
    (b.0.add_scalar(-by), b.1.add_scalar(by))
}

fn inside(p: &Vec3, b: &Aabb) -> bool {
    (0..3).all(|a| p[a] >= b.0[a] && p[a] <= b.1[a])
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    exec: ExecMode,
    scene: Scene,
    cam: CameraModel,
    map: SemanticOctree,
    gt_fruit: Vec<Vec3>,
    boxes: Vec<Aabb>,
    samples: Vec<MetricSample>,
    executed: Vec<Vec3>,
    rays_cast: usize,
    candidates_evaluated: usize,
    eval_ms: f64,
    plan_ms_pending: f64,
    position: Vec3,
}

impl Runner<'_> {
    fn execute(&mut self, pose: &CameraPose) -> Result<()> {
        let t0 = Instant::now();
        let view = self.samples.len() as u64;
        let mut img = render_with(&self.scene, &self.cam, pose, self.exec);
        if self.cfg.p_gt < 1.0 {
            img = corrupt_labels(
                &img,
                self.cfg.p_gt,
                class::COUNT,
                mix_seed(self.seed, 1000 + view),
            )?;
        }
        self.map
            .integrate_observation_with(pose, &img, &self.cam, self.exec)?;
        let map_ms = t0.elapsed().as_secs_f64() * 1e3;
        let entropy_nats = total_fruit_entropy(&self.map, &self.boxes);
        let coverage = if self.gt_fruit.is_empty() {
            0.0
        } else {
            fruit_coverage(&self.map, &self.gt_fruit, 0.5)?
        };
        let plan_ms = std::mem::take(&mut self.plan_ms_pending);
        let (map_ms, plan_ms) = if self.cfg.record_timings {
            (map_ms, plan_ms)
        } else {
            (0.0, 0.0)
        };
        self.samples.push(MetricSample {
            viewpoint_idx: self.samples.len(),
            entropy_nats,
            coverage,
            rays_cast: self.rays_cast,
            map_ms,
            plan_ms,
        });
        self.executed.push(pose.position);
        self.position = pose.position;
        Ok(())
    }

    fn workspace(&self, station: &Station) -> Result<WorkspaceModel> {
        let tol = 2.0 * self.cfg.resolution;
        match &self.cfg.workspace_file {
            Some(path) => {
                let f = fs::File::open(path)?;
                WorkspaceModel::read_xyz(std::io::BufReader::new(f), tol)
            }
            None => {
                let reach = self.cfg.radius * 1.1 + 0.1;
                let mut lo = Vec3::new(station.min.x - reach, station.min.y - reach, 0.05);
                let mut hi = Vec3::new(
                    station.max.x + reach,
                    station.max.y + reach,
                    station.max.z + reach,
                );
                if self.cfg.aisle_only {
                    for p in &station.plants {
                        let mid = (p.min.y + p.max.y) / 2.0;
                        if p.row % 2 == 0 {
                            lo.y = lo.y.max(mid);
                        } else {
                            hi.y = hi.y.min(mid);
                        }
                    }
                }
                WorkspaceModel::from_box(&lo, &hi, tol)
            }
        }
    }

    /// One planning round: returns the poses to execute next, in order.
    fn plan_round(
        &mut self,
        region: &Aabb,
        ws: &WorkspaceModel,
        round: u64,
        k: usize,
    ) -> Result<Vec<CameraPose>> {
        let t0 = Instant::now();
        let cfg = self.cfg;
        let targets = self.map.classified_voxels(FRUIT, 0.5);
        let mut ctx = IgContext::new(
            FRUIT,
            cfg.max_dist,
            targets.clone(),
            class::COUNT,
            cfg.p_gt.clamp(0.0, 1.0),
        )?;
        ctx.max_range = cfg.max_range;
        ctx.visibility_cutoff = cfg.visibility_cutoff;
        ctx.seed = mix_seed(self.seed, round);
        let opts = EvalOptions {
            metric: cfg.metric,
            sampling: cfg.sampling,
            camera: self.cam,
            roi_size: cfg.roi_size,
            exec: self.exec,
        };
        let near_region = inflate(region, cfg.eps);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 7_000_000 + round));
        let mut candidates: Vec<ViewpointCandidate> = Vec::new();
        for attempt in 0..4 {
            let radius = if attempt == 0 {
                cfg.radius
            } else {
                cfg.radius * (1.0 + rng.gen_range(-0.1..=0.1))
            };
            let fresh = match cfg.planner {
                PlannerKind::Frontier => frontier_candidates(
                    &self.map,
                    &ctx,
                    cfg.frontier_samples,
                    radius,
                    mix_seed(self.seed, 3_000_000 + round * 4 + attempt),
                )?,
                _ => {
                    let clusters = cluster_targets(&targets, cfg.eps, cfg.min_pts)?;
                    let mut centroids: Vec<(Option<usize>, Vec3)> = clusters
                        .iter()
                        .filter(|c| inside(&c.centroid, &near_region))
                        .map(|c| (Some(c.id), c.centroid))
                        .collect();
                    if centroids.is_empty() {
                        centroids.push((None, (region.0 + region.1) / 2.0));
                    }
                    let mut out = Vec::new();
                    for (id, c) in centroids {
                        out.extend(sample_viewpoints(&c, radius, cfg.n_theta, cfg.n_phi, id)?);
                    }
                    out
                }
            };
            let mut fresh = filter_workspace(fresh, ws);
            for c in fresh.iter_mut() {
                if c.status != CandidateStatus::Filtered
                    && self
                        .executed
                        .iter()
                        .any(|p| (p - c.position()).norm() < 0.5 * cfg.resolution)
                {
                    c.status = CandidateStatus::Executed;
                }
            }
            candidates.extend(fresh);
            let usable = candidates
                .iter()
                .filter(|c| c.status == CandidateStatus::Unevaluated)
                .count();
            if usable >= k {
                break;
            }
        }
        let t_eval = Instant::now();
        let (best, rays) = select_best(&mut candidates, &self.map, &ctx, k, &opts);
        self.eval_ms += t_eval.elapsed().as_secs_f64() * 1e3;
        self.candidates_evaluated += candidates
            .iter()
            .filter(|c| c.status == CandidateStatus::Evaluated)
            .count();
        self.rays_cast += rays;
        let positions: Vec<Vec3> = best.iter().map(|&i| candidates[i].position()).collect();
        let order = order_viewpoints_tsp(&positions, &self.position);
        self.plan_ms_pending += t0.elapsed().as_secs_f64() * 1e3;
        Ok(order
            .into_iter()
            .map(|i| candidates[best[i]].pose)
            .collect())
    }
}

/// Runs the closed loop for one seed, on the scene generated from that seed.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentLog> {
    run_trial(
        cfg,
        Trial {
            scene_seed: seed,
            seed,
        },
        ExecMode::default(),
    )
}

pub fn run_trial(cfg: &ExperimentConfig, trial: Trial, exec: ExecMode) -> Result<ExperimentLog> {
    cfg.validate()?;
    let Trial { scene_seed, seed } = trial;
    let scene = match &cfg.scene_file {
        Some(path) => Scene::from_json(&fs::read_to_string(path)?)?,
        None => generate_scene(&cfg.scene, scene_seed)?,
    };
    let gt_fruit: Vec<Vec3> =
        ground_truth_surface(&scene, cfg.gt_density, mix_seed(scene_seed, 17))?
            .into_iter()
            .filter(|(_, c)| *c == FRUIT)
            .map(|(p, _)| p)
            .collect();
    let boxes = fruit_boxes(&scene, cfg.resolution);
    let mut map = SemanticOctree::new(cfg.map_params())?;
    let (lo, hi) = scene.aabb();
    let margin = cfg.radius * 1.2 + cfg.scan_standoff + 0.2;
    map.set_bounds(&lo.add_scalar(-margin), &hi.add_scalar(margin));
    let stations = stations(&scene, cfg.plants_per_station);
    let mut runner = Runner {
        cfg,
        seed,
        exec,
        scene,
        cam: cfg.camera,
        map,
        gt_fruit,
        boxes,
        samples: Vec::new(),
        executed: Vec::new(),
        rays_cast: 0,
        candidates_evaluated: 0,
        eval_ms: 0.0,
        plan_ms_pending: 0.0,
        position: Vec3::zeros(),
    };
    let mut status = RunStatus::Completed;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 5));
    let mut round = 0u64;
    for station in &stations {
        let region: Aabb = (station.min, station.max);
        let budget = cfg.viewpoints_per_plant * station.plants.len();
        let n_scan = if cfg.planner == PlannerKind::Predefined {
            cfg.viewpoints_per_plant
        } else {
            cfg.initial_scan_count.min(cfg.viewpoints_per_plant)
        };
        let start = runner.samples.len();
        if n_scan > 0 {
            let span = cfg.scan_arc_deg.to_radians();
            let bin = span / n_scan.div_ceil(n_scan.min(3)) as f64;
            for plant in &station.plants {
                let center = plant.aisle_azimuth() + rng.gen_range(-0.5..0.5) * bin;
                let arc = ScanArc {
                    standoff: cfg.scan_standoff,
                    center,
                    span,
                };
                for pose in predefined_scan_poses(&plant.min, &plant.max, n_scan, &arc)? {
                    runner.execute(&pose)?;
                }
            }
        }
        if cfg.planner == PlannerKind::Predefined {
            continue;
        }
        let ws = runner.workspace(station)?;
        while runner.samples.len() - start < budget {
            let remaining = budget - (runner.samples.len() - start);
            let poses = runner.plan_round(&region, &ws, round, cfg.top_k.min(remaining))?;
            round += 1;
            if poses.is_empty() {
                status = RunStatus::NoCandidates;
                break;
            }
            for pose in poses.iter().take(remaining) {
                runner.execute(pose)?;
            }
        }
    }
    Ok(ExperimentLog {
        run_id: cfg.run_id.clone(),
        seed,
        scene_seed,
        planner: cfg.planner,
        metric: cfg.metric,
        samples: runner.samples,
        status,
        candidates_evaluated: runner.candidates_evaluated,
        eval_ms: runner.eval_ms,
    })
}

/// Runs every trial of `cfg`, in parallel when enabled, in trial order.
pub fn run_all(cfg: &ExperimentConfig, exec: ExecMode) -> Result<Vec<ExperimentLog>> {
    par::map_slice(exec, &cfg.trials(), |&t| run_trial(cfg, t, exec))
        .into_iter()
        .collect()
}

impl ExperimentLog {
    pub fn csv_file_name(&self) -> String {
        if self.scene_seed == self.seed {
            format!("{}_seed{}.csv", self.run_id, self.seed)
        } else {
            format!(
                "{}_scene{}_seed{}.csv",
                self.run_id, self.scene_seed, self.seed
            )
        }
    }
}

/// Runs `cfg` for all seeds and writes one CSV per seed, `manifest.toml`
/// and `status.csv` into `out`.
pub fn run_to_dir(
    cfg: &ExperimentConfig,
    out: &Path,
    exec: ExecMode,
) -> Result<Vec<ExperimentLog>> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.toml"), cfg.to_toml()?)?;
    let logs = run_all(cfg, exec)?;
    let mut status = String::from("run_id,scene_seed,seed,status,executed\n");
    for log in &logs {
        let mut buf = Vec::new();
        log.write_csv(&mut buf)?;
        fs::write(out.join(log.csv_file_name()), buf)?;
        let st = serde_json::to_string(&log.status)?;
        writeln!(
            status,
            "{},{},{},{},{}",
            log.run_id,
            log.scene_seed,
            log.seed,
            st.trim_matches('"'),
            log.samples.len()
        )
        .unwrap();
    }
    fs::write(out.join("status.csv"), status)?;
    Ok(logs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub viewpoint_idx: usize,
    pub runs: usize,
    pub entropy_mean: f64,
    pub entropy_std: f64,
    pub coverage_mean: f64,
    pub coverage_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub label: String,
    pub planner: PlannerKind,
    pub metric: IgMetric,
    pub sampling: SamplingMode,
    pub runs: usize,
    pub final_coverage_mean: f64,
    pub final_coverage_std: f64,
    pub final_entropy_mean: f64,
    pub final_entropy_std: f64,
    /// Mean views to 80% coverage; runs that never get there count as
    /// budget + 1.
    pub viewpoints_to_80: f64,
    pub reached_80: usize,
    pub eval_ms_per_candidate: f64,
    pub rays_per_candidate: f64,
    pub curve: Vec<CurvePoint>,
    pub logs: Vec<ExperimentLog>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

pub fn summarize(cfg: &ExperimentConfig, logs: Vec<ExperimentLog>) -> MethodSummary {
    let total_budget = logs.iter().map(|l| l.samples.len()).max().unwrap_or(0);
    let finals_c: Vec<f64> = logs.iter().map(ExperimentLog::final_coverage).collect();
    let finals_e: Vec<f64> = logs.iter().map(ExperimentLog::final_entropy).collect();
    let (final_coverage_mean, final_coverage_std) = mean_std(&finals_c);
    let (final_entropy_mean, final_entropy_std) = mean_std(&finals_e);
    let to80: Vec<f64> = logs
        .iter()
        .map(|l| l.viewpoints_to(0.8).unwrap_or(total_budget + 1) as f64)
        .collect();
    let reached_80 = logs
        .iter()
        .filter(|l| l.viewpoints_to(0.8).is_some())
        .count();
    let cand: usize = logs.iter().map(|l| l.candidates_evaluated).sum();
    let eval_ms: f64 = logs.iter().map(|l| l.eval_ms).sum();
    let rays: usize = logs
        .iter()
        .map(|l| l.samples.last().map_or(0, |s| s.rays_cast))
        .sum();
    let curve = (0..total_budget)
        .map(|i| {
            let e: Vec<f64> = logs
                .iter()
                .filter_map(|l| l.samples.get(i))
                .map(|s| s.entropy_nats)
                .collect();
            let c: Vec<f64> = logs
                .iter()
                .filter_map(|l| l.samples.get(i))
                .map(|s| s.coverage)
                .collect();
            let (entropy_mean, entropy_std) = mean_std(&e);
            let (coverage_mean, coverage_std) = mean_std(&c);
            CurvePoint {
                viewpoint_idx: i,
                runs: e.len(),
                entropy_mean,
                entropy_std,
                coverage_mean,
                coverage_std,
            }
        })
        .collect();
    MethodSummary {
        label: cfg.run_id.clone(),
        planner: cfg.planner,
        metric: cfg.metric,
        sampling: cfg.sampling,
        runs: logs.len(),
        final_coverage_mean,
        final_coverage_std,
        final_entropy_mean,
        final_entropy_std,
        viewpoints_to_80: mean_std(&to80).0,
        reached_80,
        eval_ms_per_candidate: if cand == 0 {
            0.0
        } else {
            eval_ms / cand as f64
        },
        rays_per_candidate: if cand == 0 {
            0.0
        } else {
            rays as f64 / cand as f64
        },
        curve,
        logs,
    }
}

/// Runs each configuration over its seeds. All configurations must share
/// the same seed list and have distinct run ids.
pub fn compare_methods(cfgs: &[ExperimentConfig], exec: ExecMode) -> Result<Vec<MethodSummary>> {
    if cfgs.len() < 2 {
        return Err(Error::Config(
            "comparison needs at least two configurations".into(),
        ));
    }
    for c in cfgs {
        c.validate()?;
        if c.trials() != cfgs[0].trials() {
            return Err(Error::Config(format!(
                "run `{}` uses a different seed set",
                c.run_id
            )));
        }
    }
    for (i, a) in cfgs.iter().enumerate() {
        if cfgs[..i].iter().any(|b| b.run_id == a.run_id) {
            return Err(Error::Config(format!("duplicate run id `{}`", a.run_id)));
        }
    }
    let jobs: Vec<(usize, Trial)> = cfgs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.trials().into_iter().map(move |t| (i, t)))
        .collect();
    let results = par::map_slice(exec, &jobs, |&(i, t)| run_trial(&cfgs[i], t, exec));
    let mut per_cfg: Vec<Vec<ExperimentLog>> = vec![Vec::new(); cfgs.len()];
    for ((i, _), r) in jobs.iter().zip(results) {
        per_cfg[*i].push(r?);
    }
    Ok(cfgs
        .iter()
        .zip(per_cfg)
        .map(|(c, logs)| summarize(c, logs))
        .collect())
}

pub fn write_summary_csv<W: std::io::Write>(mut w: W, summaries: &[MethodSummary]) -> Result<()> {
    writeln!(
        w,
        "label,planner,metric,sampling,runs,final_coverage_mean,final_coverage_std,final_entropy_mean,\
         final_entropy_std,viewpoints_to_80,reached_80,rays_per_candidate,eval_ms_per_candidate"
    )?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{:.6},{:.6},{:.4},{:.4},{:.3},{},{:.2},{:.4}",
            s.label,
            s.planner,
            s.metric,
            s.sampling,
            s.runs,
            s.final_coverage_mean,
            s.final_coverage_std,
            s.final_entropy_mean,
            s.final_entropy_std,
            s.viewpoints_to_80,
            s.reached_80,
            s.rays_per_candidate,
            s.eval_ms_per_candidate
        )?;
    }
    Ok(())
}

pub fn write_curves_csv<W: std::io::Write>(mut w: W, summaries: &[MethodSummary]) -> Result<()> {
    writeln!(
        w,
        "label,viewpoint_idx,runs,entropy_mean,entropy_std,coverage_mean,coverage_std"
    )?;
    for s in summaries {
        for p in &s.curve {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                s.label,
                p.viewpoint_idx,
                p.runs,
                p.entropy_mean,
                p.entropy_std,
                p.coverage_mean,
                p.coverage_std
            )?;
        }
    }
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Standalone SVG line chart of one curve per series.
pub fn svg_line_chart(title: &str, y_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 400.0, 60.0, 150.0, 30.0, 45.0);
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(0).max(2);
    let y_max = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let px = |i: usize| ml + (w - ml - mr) * i as f64 / (n - 1) as f64;
    let py = |y: f64| mt + (h - mt - mb) * (1.0 - y / y_max);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#,
        (w - mr + ml) / 2.0,
        title
    )
    .unwrap();
    writeln!(
        s,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb
    )
    .unwrap();
    writeln!(
        s,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        h - mb
    )
    .unwrap();
    for t in 0..=4 {
        let y = y_max * t as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            ml - 5.0,
            py(y) + 4.0,
            y
        )
        .unwrap();
    }
    for t in 0..=4 {
        let i = (n - 1) * t / 4;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(i),
            h - mb + 16.0,
            i + 1
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">viewpoints</text>"#,
        (w - mr + ml) / 2.0,
        h - 8.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        h / 2.0,
        h / 2.0,
        y_label
    )
    .unwrap();
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, y)| format!("{:.1},{:.1}", px(i), py(*y)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        let ly = mt + 18.0 * k as f64;
        writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            w - mr + 10.0,
            w - mr + 30.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            w - mr + 35.0,
            ly + 4.0,
            name
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes per-run CSVs, `summary.csv`, `curves.csv`, `entropy.svg` and
/// `coverage.svg` into `out`.
pub fn write_comparison(out: &Path, summaries: &[MethodSummary]) -> Result<()> {
    fs::create_dir_all(out)?;
    for s in summaries {
        for log in &s.logs {
            let mut buf = Vec::new();
            log.write_csv(&mut buf)?;
            fs::write(out.join(log.csv_file_name()), buf)?;
        }
    }
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, summaries)?;
    fs::write(out.join("summary.csv"), buf)?;
    let mut buf = Vec::new();
    write_curves_csv(&mut buf, summaries)?;
    fs::write(out.join("curves.csv"), buf)?;
    let series = |f: fn(&CurvePoint) -> f64| -> Vec<(String, Vec<f64>)> {
        summaries
            .iter()
            .map(|s| (s.label.clone(), s.curve.iter().map(f).collect()))
            .collect()
    };
    fs::write(
        out.join("entropy.svg"),
        svg_line_chart(
            "Fruit entropy",
            "entropy [nats]",
            &series(|p| p.entropy_mean),
        ),
    )?;
    fs::write(
        out.join("coverage.svg"),
        svg_line_chart(
            "Fruit surface coverage",
            "coverage",
            &series(|p| p.coverage_mean),
        ),
    )?;
    Ok(())
}
