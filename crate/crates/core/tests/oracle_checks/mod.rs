use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semnbv::eval::surface_coverage;
use semnbv::map::{entropy, logit};
use semnbv::metrics::{channel_mutual_information, symmetric_confusion};
use semnbv::planner::{cluster_targets, order_viewpoints_tsp, path_length};
use semnbv::raycast::{traverse_ray, walk_segment};
use semnbv::{MapParams, SemanticOctree, Vec3, VoxelKey};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_vec(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(
        r.gen_range(lo..hi),
        r.gen_range(lo..hi),
        r.gen_range(lo..hi),
    )
}

pub fn log_odds_matches_sequential_clamped_sum() {
    let p = MapParams::default();
    let mut map = SemanticOctree::new(p).unwrap();
    let k = VoxelKey::new(1, 2, 3);
    let mut expect = 0.0f64;
    for n in 1..=12 {
        map.update_hit(k, 0).unwrap();
        expect = (expect + logit(0.85)).clamp(p.clamp_min, p.clamp_max);
        let got = map.get(&k).unwrap().occ_logodds;
        assert!((got - expect).abs() < 1e-9, "hit {n}: {got} vs {expect}");
    }
    for n in 1..=20 {
        map.update_miss(k);
        expect = (expect + logit(0.40)).clamp(p.clamp_min, p.clamp_max);
        let got = map.get(&k).unwrap().occ_logodds;
        assert!((got - expect).abs() < 1e-9, "miss {n}: {got} vs {expect}");
    }
    assert!((expect - logit(0.12)).abs() < 1e-12);
}

pub fn single_and_double_hit_closed_forms() {
    let mut map = SemanticOctree::new(MapParams::default()).unwrap();
    let k = VoxelKey::new(0, 0, 0);
    map.update_hit(k, 0).unwrap();
    assert!((map.get(&k).unwrap().occ_logodds - 1.734_601_055_388_05).abs() < 1e-9);
    assert_eq!(map.get(&k).unwrap().class_counts, vec![1.0, 0.0, 0.0]);
    map.update_hit(k, 0).unwrap();
    let l = map.get(&k).unwrap().occ_logodds;
    assert!((l - 2.0 * (0.85f64 / 0.15).ln()).abs() < 1e-9);
    assert!((map.class_distribution(&k)[0] - 0.6).abs() < 1e-9);
}

pub fn dirichlet_mean_closed_form() {
    let mut r = rng(1);
    for _ in 0..200 {
        let mut map = SemanticOctree::new(MapParams::default()).unwrap();
        let k = VoxelKey::new(0, 0, 0);
        let mut n = [0usize; 3];
        for _ in 0..r.gen_range(1..30) {
            let c = r.gen_range(0..3u8);
            n[c as usize] += 1;
            map.update_hit(k, c).unwrap();
        }
        let total: usize = n.iter().sum();
        let p = map.class_distribution(&k);
        for c in 0..3 {
            let expect = (1.0 + n[c] as f64) / (3.0 + total as f64);
            assert!((p[c] - expect).abs() < 1e-9);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

pub fn entropy_reference_values() {
    assert!((entropy(&[1.0 / 3.0; 3]) - 3f64.ln()).abs() < 1e-4);
    assert!(entropy(&[1.0, 0.0, 0.0]).abs() < 1e-4);
    assert!((entropy(&[5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0]) - 0.7963).abs() < 1e-4);
    let map = SemanticOctree::new(MapParams::default()).unwrap();
    assert!((map.voxel_entropy(&VoxelKey::new(9, 9, 9)) - 3f64.ln()).abs() < 1e-4);
}

/// Cells whose box overlaps `[0, length]` of the segment with positive
/// length, by slab intersection against every cell in the bounding range.
fn slab_cells(o: &Vec3, d: &Vec3, length: f64, res: f64) -> BTreeSet<VoxelKey> {
    let end = o + d * length;
    let lo = o.inf(&end);
    let hi = o.sup(&end);
    let a = VoxelKey::from_point(&lo, res);
    let b = VoxelKey::from_point(&hi, res);
    let mut out = BTreeSet::new();
    for ix in a.ix..=b.ix {
        for iy in a.iy..=b.iy {
            for iz in a.iz..=b.iz {
                let c = [ix, iy, iz];
                let (mut t0, mut t1) = (0.0f64, length);
                for ax in 0..3 {
                    let (bmin, bmax) = (c[ax] as f64 * res, (c[ax] + 1) as f64 * res);
                    if d[ax] == 0.0 {
                        if o[ax] < bmin || o[ax] >= bmax {
                            t1 = -1.0;
                        }
                        continue;
                    }
                    let (ta, tb) = ((bmin - o[ax]) / d[ax], (bmax - o[ax]) / d[ax]);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if t1 > t0 {
                    out.insert(VoxelKey::new(ix, iy, iz));
                }
            }
        }
    }
    out
}

pub fn traversal_matches_slab_oracle_on_random_rays() {
    let mut r = rng(2);
    let res = 0.015;
    for i in 0..1000 {
        let o = rand_vec(&mut r, -0.3, 0.3);
        let mut d = rand_vec(&mut r, -1.0, 1.0);
        if i % 10 == 0 {
            // Axis-aligned and planar rays as well.
            d[i / 10 % 3] = 0.0;
        }
        let d = d.normalize();
        let length = r.gen_range(0.001..0.5);
        let mut walked = Vec::new();
        walk_segment(&o, &d, length, res, |k, _| {
            walked.push(k);
            true
        });
        let set: BTreeSet<_> = walked.iter().copied().collect();
        assert_eq!(set.len(), walked.len(), "ray {i} revisits a cell");
        assert_eq!(set, slab_cells(&o, &d, length, res), "ray {i}");
        for w in walked.windows(2) {
            let dist =
                (w[0].ix - w[1].ix).abs() + (w[0].iy - w[1].iy).abs() + (w[0].iz - w[1].iz).abs();
            assert_eq!(dist, 1, "ray {i} is not face-connected");
        }
    }
}

pub fn visibility_equals_explicit_product() {
    let mut r = rng(3);
    let mut map = SemanticOctree::new(MapParams::default()).unwrap();
    for _ in 0..4000 {
        let k = VoxelKey::new(
            r.gen_range(-15..15),
            r.gen_range(-15..15),
            r.gen_range(-15..15),
        );
        if r.gen_bool(0.5) {
            map.update_hit(k, r.gen_range(0..3)).unwrap();
        } else {
            map.update_miss(k);
        }
    }
    for _ in 0..200 {
        let o = rand_vec(&mut r, -0.2, 0.2);
        let d = rand_vec(&mut r, -1.0, 1.0);
        let t = traverse_ray(&map, &o, &d, 0.6, 0.0).unwrap();
        for n in 0..t.steps.len() {
            let product: f64 = t.steps[..n]
                .iter()
                .map(|s| 1.0 - map.p_occ(&s.key))
                .product();
            assert!((t.steps[n].visibility - product).abs() < 1e-12);
            assert!((t.steps[n].p_occ - map.p_occ(&t.steps[n].key)).abs() < 1e-15);
        }
    }
}

fn dbscan_oracle(points: &[Vec3], eps: f64, min_pts: usize) -> Vec<BTreeSet<usize>> {
    let n = points.len();
    let nbrs: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| (points[i] - points[j]).norm() <= eps)
                .collect()
        })
        .collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut clusters = Vec::new();
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        if nbrs[i].len() < min_pts {
            continue;
        }
        let c = clusters.len();
        clusters.push(BTreeSet::new());
        label[i] = Some(c);
        clusters[c].insert(i);
        let mut queue: Vec<usize> = nbrs[i].clone();
        let mut q = 0;
        while q < queue.len() {
            let j = queue[q];
            q += 1;
            if label[j].is_none() {
                label[j] = Some(c);
                clusters[c].insert(j);
            }
            if !visited[j] {
                visited[j] = true;
                if nbrs[j].len() >= min_pts {
                    queue.extend(nbrs[j].iter().copied());
                }
            }
        }
    }
    clusters
}

pub fn dbscan_matches_quadratic_oracle() {
    let mut r = rng(4);
    for trial in 0..60 {
        let n = r.gen_range(1..=200);
        let blobs: Vec<Vec3> = (0..r.gen_range(1..6))
            .map(|_| rand_vec(&mut r, -0.3, 0.3))
            .collect();
        let points: Vec<Vec3> = (0..n)
            .map(|_| blobs[r.gen_range(0..blobs.len())] + rand_vec(&mut r, -0.06, 0.06))
            .collect();
        let min_pts = r.gen_range(1..6);
        let eps = 0.05;
        let fast: BTreeSet<BTreeSet<usize>> = cluster_targets(&points, eps, min_pts)
            .unwrap()
            .into_iter()
            .map(|c| {
                c.members
                    .iter()
                    .map(|m| points.iter().position(|p| p == m).unwrap())
                    .collect()
            })
            .collect();
        let slow: BTreeSet<BTreeSet<usize>> =
            dbscan_oracle(&points, eps, min_pts).into_iter().collect();
        assert_eq!(fast, slow, "trial {trial}, n {n}, min_pts {min_pts}");
    }
}

fn brute_force_tour(points: &[Vec3], start: &Vec3) -> f64 {
    fn rec(
        points: &[Vec3],
        start: &Vec3,
        order: &mut Vec<usize>,
        used: &mut [bool],
        best: &mut f64,
    ) {
        if order.len() == points.len() {
            *best = best.min(path_length(start, points, order));
            return;
        }
        for i in 0..points.len() {
            if !used[i] {
                used[i] = true;
                order.push(i);
                rec(points, start, order, used, best);
                order.pop();
                used[i] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(
        points,
        start,
        &mut Vec::new(),
        &mut vec![false; points.len()],
        &mut best,
    );
    best
}

pub fn tsp_matches_brute_force() {
    let mut r = rng(5);
    for n in 1..=8 {
        for _ in 0..6 {
            let pts: Vec<Vec3> = (0..n).map(|_| rand_vec(&mut r, -1.0, 1.0)).collect();
            let start = rand_vec(&mut r, -1.0, 1.0);
            let order = order_viewpoints_tsp(&pts, &start);
            let mut sorted = order.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            let got = path_length(&start, &pts, &order);
            let best = brute_force_tour(&pts, &start);
            assert!(got <= best + 1e-12, "n {n}: {got} vs {best}");
        }
    }
}

pub fn coverage_matches_all_pairs_scan() {
    let mut r = rng(6);
    for _ in 0..30 {
        let rec: Vec<Vec3> = (0..r.gen_range(0..300))
            .map(|_| rand_vec(&mut r, 0.0, 0.3))
            .collect();
        let gt: Vec<Vec3> = (0..r.gen_range(1..300))
            .map(|_| rand_vec(&mut r, 0.0, 0.3))
            .collect();
        let th = r.gen_range(0.005..0.05);
        let hits = gt
            .iter()
            .filter(|g| rec.iter().any(|p| (*g - p).norm() <= th))
            .count();
        let expect = hits as f64 / gt.len() as f64;
        assert_eq!(surface_coverage(&rec, &gt, th).unwrap(), expect);
    }
}

/// I(X; Z) from the joint table.
fn mi_enumerated(prior: &[f64], conf: &[Vec<f64>]) -> f64 {
    let k = prior.len();
    let pz: Vec<f64> = (0..k)
        .map(|z| (0..k).map(|x| prior[x] * conf[x][z]).sum())
        .collect();
    let mut mi = 0.0;
    for x in 0..k {
        for z in 0..k {
            let j = prior[x] * conf[x][z];
            if j > 0.0 {
                mi += j * (j / (prior[x] * pz[z])).ln();
            }
        }
    }
    mi
}

pub fn channel_mi_matches_enumeration() {
    let mut r = rng(7);
    for _ in 0..300 {
        let k = r.gen_range(2..5);
        let mut prior: Vec<f64> = (0..k).map(|_| r.gen_range(0.01..1.0)).collect();
        let s: f64 = prior.iter().sum();
        prior.iter_mut().for_each(|p| *p /= s);
        let conf = symmetric_confusion(k, r.gen_range(0.0..=1.0));
        let a = channel_mutual_information(&prior, &conf);
        let b = mi_enumerated(&prior, &conf);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    let u = [1.0 / 3.0; 3];
    let m = channel_mutual_information(&u, &symmetric_confusion(3, 0.7));
    assert!((m - mi_enumerated(&u, &symmetric_confusion(3, 0.7))).abs() < 1e-9);
    assert!((m - 0.279_8).abs() < 1e-4);
}
