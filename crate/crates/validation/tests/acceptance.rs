//! Runs every acceptance criterion and prints one PASS/FAIL line for each.
//! Exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, UnwindSafe};
use std::path::Path;
use std::time::Instant;

use semnbv::class::FRUIT;
use semnbv::experiment::{
    compare_methods, plant_ablation, row_scenario, run_to_dir, ExperimentConfig, MethodSummary,
    PlannerKind,
};
use semnbv::metrics::{IgContext, IgMetric};
use semnbv::planner::{
    cluster_targets, evaluate_candidates, predefined_scan_poses, sample_viewpoints, EvalOptions,
    ScanArc,
};
use semnbv::raycast::{generate_rays, SamplingMode};
use semnbv::sensor::{generate_scene, render};
use semnbv::{ExecMode, SemanticOctree};

#[path = "../../core/tests/oracle_checks/mod.rs"]
mod oracle_checks;

const MIN_SPEEDUP: f64 = 8.0;
const ADAPTIVE_MAX_RAYS: usize = 49;
const DENSE_RAYS: usize = 784;
const MIN_CANDIDATES: usize = 100;
const DOWNSAMPLE_TOL: f64 = 0.03;
const ROW_GAIN: f64 = 0.05;
const NOISE_DROP: f64 = 0.05;

fn report(n: u32, name: &str, pass: bool, detail: String) -> bool {
    println!(
        "{} criterion {n} ({name}): {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn variant(
    base: &ExperimentConfig,
    id: &str,
    f: impl FnOnce(&mut ExperimentConfig),
) -> ExperimentConfig {
    let mut c = base.clone();
    c.run_id = id.into();
    f(&mut c);
    c
}

fn grid(cfgs: Vec<ExperimentConfig>) -> BTreeMap<String, MethodSummary> {
    compare_methods(&cfgs, ExecMode::default())
        .expect("experiment grid runs")
        .into_iter()
        .map(|s| (s.label.clone(), s))
        .collect()
}

/// Every plant-scenario run the criteria need, executed as one batch.
fn plant_grid() -> BTreeMap<String, MethodSummary> {
    let base = plant_ablation();
    assert_eq!(base.p_gt, 0.7);
    assert_eq!(base.radius, 0.4);
    let mut cfgs = vec![base.clone()];
    cfgs[0].run_id = "osamcep".into();
    for (id, r, s) in [
        ("dense-0.4", 0.4, SamplingMode::Dense),
        ("adaptive-0.6", 0.6, SamplingMode::Adaptive),
        ("dense-0.6", 0.6, SamplingMode::Dense),
        ("sparse-0.6", 0.6, SamplingMode::Sparse),
    ] {
        cfgs.push(variant(&base, id, |c| {
            c.radius = r;
            c.sampling = s;
        }));
    }
    for m in [IgMetric::Uvc, IgMetric::Ae, IgMetric::Rs] {
        cfgs.push(variant(&base, &m.to_string(), |c| c.metric = m));
    }
    cfgs.push(variant(&base, "osamcep-clean", |c| c.p_gt = 1.0));
    cfgs.push(variant(&base, "rs-clean", |c| {
        c.p_gt = 1.0;
        c.metric = IgMetric::Rs;
    }));
    grid(cfgs)
}

fn row_grid() -> BTreeMap<String, MethodSummary> {
    let base = row_scenario();
    let mut cfgs = Vec::new();
    for (tag, p_gt) in [("clean", 1.0), ("noisy", 0.7)] {
        cfgs.push(variant(&base, &format!("ours-{tag}"), |c| c.p_gt = p_gt));
        cfgs.push(variant(&base, &format!("predefined-{tag}"), |c| {
            c.p_gt = p_gt;
            c.planner = PlannerKind::Predefined;
        }));
    }
    grid(cfgs)
}

fn ray_casting_efficiency() -> bool {
    let cfg = plant_ablation();
    let mut n = 0;
    let (mut t_adaptive, mut t_dense) = (0.0, 0.0);
    let mut max_adaptive = 0;
    let mut dense_ok = true;
    for &scene_seed in &cfg.scene_seeds {
        let scene = generate_scene(&cfg.scene, scene_seed).unwrap();
        let (lo, hi) = scene.aabb();
        let mut map = SemanticOctree::new(cfg.map_params()).unwrap();
        let arc = ScanArc::full(cfg.scan_standoff, 0.0);
        for p in predefined_scan_poses(&lo, &hi, cfg.initial_scan_count, &arc).unwrap() {
            map.integrate_observation(&p, &render(&scene, &cfg.camera, &p), &cfg.camera)
                .unwrap();
        }
        let targets = map.classified_voxels(FRUIT, 0.5);
        let clusters = cluster_targets(&targets, cfg.eps, cfg.min_pts).unwrap();
        let ctx = IgContext::new(FRUIT, cfg.max_dist, targets, 3, cfg.p_gt).unwrap();
        for (i, cl) in clusters.iter().enumerate() {
            let cands =
                sample_viewpoints(&cl.centroid, cfg.radius, cfg.n_theta, cfg.n_phi, Some(i))
                    .unwrap();
            for c in &cands {
                let a = generate_rays(
                    &cfg.camera,
                    &c.pose,
                    &c.target,
                    cfg.resolution,
                    cfg.roi_size,
                    SamplingMode::Adaptive,
                )
                .unwrap();
                let d = generate_rays(
                    &cfg.camera,
                    &c.pose,
                    &c.target,
                    cfg.resolution,
                    cfg.roi_size,
                    SamplingMode::Dense,
                )
                .unwrap();
                max_adaptive = max_adaptive.max(a.len());
                dense_ok &= d.len() == DENSE_RAYS;
            }
            let time = |sampling| {
                let opts = EvalOptions {
                    metric: IgMetric::Osamcep,
                    sampling,
                    camera: cfg.camera,
                    roi_size: cfg.roi_size,
                    exec: ExecMode::Sequential,
                };
                // Best of three to damp scheduler noise.
                (0..3)
                    .map(|_| {
                        let mut cs = cands.clone();
                        let t = Instant::now();
                        evaluate_candidates(&mut cs, &map, &ctx, &opts);
                        t.elapsed().as_secs_f64() * 1e3
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            t_adaptive += time(SamplingMode::Adaptive);
            t_dense += time(SamplingMode::Dense);
            n += cands.len();
        }
    }
    let speedup = t_dense / t_adaptive;
    report(
        1,
        "ray-casting efficiency",
        n >= MIN_CANDIDATES && speedup >= MIN_SPEEDUP && max_adaptive <= ADAPTIVE_MAX_RAYS && dense_ok,
        format!(
            "{n} candidates, adaptive {:.3} ms vs dense {:.3} ms per candidate ({speedup:.1}x, need >= {MIN_SPEEDUP}x); rays <= {max_adaptive} vs {DENSE_RAYS}",
            t_adaptive / n as f64,
            t_dense / n as f64
        ),
    )
}

fn downsampling_quality(g: &BTreeMap<String, MethodSummary>) -> bool {
    let cov = |k: &str| g[k].final_coverage_mean;
    let d4 = (cov("osamcep") - cov("dense-0.4")).abs();
    let d6 = (cov("adaptive-0.6") - cov("dense-0.6")).abs();
    let sparse_worse = cov("sparse-0.6") < cov("adaptive-0.6");
    report(
        2,
        "downsampling quality",
        d4 <= DOWNSAMPLE_TOL && d6 <= DOWNSAMPLE_TOL && sparse_worse,
        format!(
            "z=0.4 adaptive {:.3} dense {:.3} (|d| {d4:.3}); z=0.6 adaptive {:.3} dense {:.3} (|d| {d6:.3}) sparse {:.3}; tol {DOWNSAMPLE_TOL}, sparse must be below adaptive",
            cov("osamcep"),
            cov("dense-0.4"),
            cov("adaptive-0.6"),
            cov("dense-0.6"),
            cov("sparse-0.6")
        ),
    )
}

fn metric_comparison(g: &BTreeMap<String, MethodSummary>) -> bool {
    let to80 = |k: &str| g[k].viewpoints_to_80;
    let ours = to80("osamcep");
    let beats = ["uvc", "ae", "rs"].iter().all(|k| ours < to80(k));
    let clean_ok = g["osamcep-clean"].final_coverage_mean >= g["rs-clean"].final_coverage_mean;
    let row: Vec<String> = ["osamcep", "uvc", "ae", "rs"]
        .iter()
        .map(|k| format!("{k} {:.2} ({}/{})", to80(k), g[*k].reached_80, g[*k].runs))
        .collect();
    report(
        3,
        "metric comparison under noise",
        beats && clean_ok,
        format!(
            "views to 80% {}; noise-free coverage osamcep {:.3} vs rs {:.3}",
            row.join(", "),
            g["osamcep-clean"].final_coverage_mean,
            g["rs-clean"].final_coverage_mean
        ),
    )
}

fn active_vs_predefined(g: &BTreeMap<String, MethodSummary>) -> bool {
    let gain = |t: &str| {
        let (o, p) = (&g[&format!("ours-{t}")], &g[&format!("predefined-{t}")]);
        (
            o.final_coverage_mean - p.final_coverage_mean,
            o.final_entropy_mean < p.final_entropy_mean,
            o,
            p,
        )
    };
    let (dc, lower, o, p) = gain("clean");
    let (dn, lower_n, _, _) = gain("noisy");
    report(
        4,
        "active vs predefined",
        dc >= ROW_GAIN && lower,
        format!(
            "coverage {:.3} vs {:.3} (+{:.1} pp, need >= {:.0}), entropy {:.1} vs {:.1}; with label noise +{:.1} pp, entropy lower: {lower_n}",
            o.final_coverage_mean,
            p.final_coverage_mean,
            dc * 100.0,
            ROW_GAIN * 100.0,
            o.final_entropy_mean,
            p.final_entropy_mean,
            dn * 100.0
        ),
    )
}

fn noise_degradation(g: &BTreeMap<String, MethodSummary>) -> bool {
    let (noisy, clean) = (
        g["osamcep"].final_coverage_mean,
        g["osamcep-clean"].final_coverage_mean,
    );
    report(
        5,
        "noise degradation",
        clean - noisy >= NOISE_DROP,
        format!(
            "coverage p_gt=1.0 {clean:.3} vs p_gt=0.7 {noisy:.3} (drop {:.1} pp, need >= {:.0})",
            (clean - noisy) * 100.0,
            NOISE_DROP * 100.0
        ),
    )
}

fn oracle_suites() -> bool {
    let suites: [(&str, fn()); 10] = [
        (
            "log-odds clamp",
            oracle_checks::log_odds_matches_sequential_clamped_sum,
        ),
        (
            "hit closed forms",
            oracle_checks::single_and_double_hit_closed_forms,
        ),
        ("dirichlet mean", oracle_checks::dirichlet_mean_closed_form),
        ("entropy values", oracle_checks::entropy_reference_values),
        (
            "ray traversal",
            oracle_checks::traversal_matches_slab_oracle_on_random_rays,
        ),
        (
            "visibility product",
            oracle_checks::visibility_equals_explicit_product,
        ),
        ("dbscan", oracle_checks::dbscan_matches_quadratic_oracle),
        ("tsp", oracle_checks::tsp_matches_brute_force),
        ("coverage", oracle_checks::coverage_matches_all_pairs_scan),
        ("channel mi", oracle_checks::channel_mi_matches_enumeration),
    ];
    let failed: Vec<&str> = suites
        .iter()
        .filter(|(_, f)| !passes(*f))
        .map(|(n, _)| *n)
        .collect();
    report(
        6,
        "oracle suites",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} suites exact", suites.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

fn passes(f: impl FnOnce() + UnwindSafe) -> bool {
    catch_unwind(f).is_ok()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> bool {
    let mut plant = plant_ablation();
    plant.seeds = vec![0, 1];
    plant.scene_seeds = vec![0, 1];
    let mut row = row_scenario();
    row.seeds = vec![3];
    let mut files = 0;
    let mut same = true;
    for cfg in [plant, row] {
        let outs: Vec<_> = [
            ExecMode::default(),
            ExecMode::default(),
            ExecMode::Sequential,
        ]
        .into_iter()
        .map(|mode| {
            let d = tempfile::tempdir().unwrap();
            run_to_dir(&cfg, d.path(), mode).unwrap();
            dir_bytes(d.path())
        })
        .collect();
        files += outs[0].len();
        same &= outs.windows(2).all(|w| w[0] == w[1]);
    }
    report(
        7,
        "determinism",
        same,
        format!("{files} output files compared across three repeats each"),
    )
}

fn main() {
    let t0 = Instant::now();
    let mut ok = ray_casting_efficiency();
    let plant = plant_grid();
    ok &= downsampling_quality(&plant);
    ok &= metric_comparison(&plant);
    let row = row_grid();
    ok &= active_vs_predefined(&row);
    ok &= noise_degradation(&plant);
    ok &= oracle_suites();
    ok &= determinism();
    println!(
        "acceptance finished in {:.0}s: {}",
        t0.elapsed().as_secs_f64(),
        if ok {
            "all criteria pass"
        } else {
            "some criteria fail"
        }
    );
    if !ok {
        std::process::exit(1);
    }
}
