//! Sparse probabilistic multi-class voxel map.
//!
//! Each observed voxel stores an occupancy log-odds value and per-class
//! pseudo-counts. The class distribution is the Dirichlet posterior mean
//! `(alpha + n_k) / (K alpha + sum n)`. Keys that were never touched are
//! unknown: `p_o = 0.5`, uniform classes, entropy `ln K`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, CameraPose, Vec3};
use crate::error::{invalid, Error, Result};
use crate::par::{self, ExecMode};
use crate::raycast::walk_segment;
use crate::sensor::LabeledDepthImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelKey {
    pub ix: i32,
    pub iy: i32,
    pub iz: i32,
}

impl VoxelKey {
    pub const fn new(ix: i32, iy: i32, iz: i32) -> Self {
        VoxelKey { ix, iy, iz }
    }

    pub fn from_point(p: &Vec3, resolution: f64) -> Self {
        VoxelKey {
            ix: (p.x / resolution).floor() as i32,
            iy: (p.y / resolution).floor() as i32,
            iz: (p.z / resolution).floor() as i32,
        }
    }

    pub fn center(&self, resolution: f64) -> Vec3 {
        Vec3::new(
            (self.ix as f64 + 0.5) * resolution,
            (self.iy as f64 + 0.5) * resolution,
            (self.iz as f64 + 0.5) * resolution,
        )
    }

    pub fn offset(&self, dx: i32, dy: i32, dz: i32) -> Self {
        VoxelKey::new(self.ix + dx, self.iy + dy, self.iz + dz)
    }

    pub fn neighbors6(&self) -> [VoxelKey; 6] {
        [
            self.offset(1, 0, 0),
            self.offset(-1, 0, 0),
            self.offset(0, 1, 0),
            self.offset(0, -1, 0),
            self.offset(0, 0, 1),
            self.offset(0, 0, -1),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub resolution: f64,
    pub num_classes: usize,
    pub target_class: u8,
    pub max_range: f64,
    pub p_hit: f64,
    pub p_miss: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    /// Dirichlet prior pseudo-count per class.
    pub alpha: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            resolution: 0.015,
            num_classes: 3,
            target_class: 0,
            max_range: 1.0,
            p_hit: 0.85,
            p_miss: 0.40,
            clamp_min: logit(0.12),
            clamp_max: logit(0.97),
            alpha: 1.0,
        }
    }
}

impl MapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) || !(self.max_range > 0.0) {
            return Err(invalid("resolution and max_range must be positive"));
        }
        if self.num_classes < 2 {
            return Err(invalid("need at least two classes"));
        }
        if self.target_class as usize >= self.num_classes {
            return Err(invalid("target class out of range"));
        }
        if !(self.p_hit > 0.5 && self.p_hit < 1.0 && self.p_miss > 0.0 && self.p_miss < 0.5) {
            return Err(invalid(
                "sensor model needs 0.5 < p_hit < 1 and 0 < p_miss < 0.5",
            ));
        }
        if !(self.clamp_min < 0.0 && self.clamp_max > 0.0) || !(self.alpha > 0.0) {
            return Err(invalid("bad clamping bounds or prior"));
        }
        Ok(())
    }

    pub fn log_odds_hit(&self) -> f64 {
        logit(self.p_hit)
    }

    pub fn log_odds_miss(&self) -> f64 {
        logit(self.p_miss)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Entropy in nats of a discrete distribution; zero terms contribute 0.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    entropy(&[p, 1.0 - p])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticVoxel {
    pub occ_logodds: f64,
    pub class_counts: Vec<f64>,
    pub last_update: u64,
}

impl SemanticVoxel {
    fn empty(k: usize) -> Self {
        SemanticVoxel {
            occ_logodds: 0.0,
            class_counts: vec![0.0; k],
            last_update: 0,
        }
    }

    pub fn p_occ(&self) -> f64 {
        sigmoid(self.occ_logodds)
    }

    pub fn total_count(&self) -> f64 {
        self.class_counts.iter().sum()
    }

    pub fn class_distribution(&self, alpha: f64) -> Vec<f64> {
        let k = self.class_counts.len() as f64;
        let denom = k * alpha + self.total_count();
        self.class_counts
            .iter()
            .map(|n| (alpha + n) / denom)
            .collect()
    }

    /// Argmax class (lowest index on ties), or `None` if the voxel never
    /// received a label.
    pub fn label(&self) -> Option<u8> {
        if self.total_count() <= 0.0 {
            return None;
        }
        Some(argmax(&self.class_counts) as u8)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateStats {
    pub hits: usize,
    pub misses: usize,
    pub new_voxels: usize,
}

#[derive(Debug, Clone)]
pub struct SemanticOctree {
    params: MapParams,
    voxels: FxHashMap<VoxelKey, SemanticVoxel>,
    bounds: Option<(VoxelKey, VoxelKey)>,
    seq: u64,
}

/// Per-scan accumulation before the map is touched: every voxel is updated
/// at most once per scan.
/// `free` may hold duplicates until `dedup_free` runs; `recent` is a small
/// direct-mapped filter that drops most of them early, since neighboring
/// rays share their first voxels.
#[derive(Default)]
struct ScanUpdate {
    free: Vec<VoxelKey>,
    hits: FxHashMap<VoxelKey, Vec<u32>>,
    recent: Vec<VoxelKey>,
}

const RECENT_SLOTS: usize = 1 << 12;

impl ScanUpdate {
    #[inline]
    fn push_free(&mut self, k: VoxelKey) {
        if self.recent.is_empty() {
            self.recent = vec![VoxelKey::new(i32::MIN, i32::MIN, i32::MIN); RECENT_SLOTS];
        }
        let h = (k.ix as u32).wrapping_mul(0x9E37_79B1)
            ^ (k.iy as u32).wrapping_mul(0x85EB_CA77)
            ^ (k.iz as u32).wrapping_mul(0xC2B2_AE3D);
        let slot = &mut self.recent[(h >> 20) as usize & (RECENT_SLOTS - 1)];
        if *slot != k {
            *slot = k;
            self.free.push(k);
        }
    }

    fn merge(&mut self, other: ScanUpdate) {
        self.free.extend(other.free);
        for (k, votes) in other.hits {
            let e = self.hits.entry(k).or_insert_with(|| vec![0; votes.len()]);
            for (a, b) in e.iter_mut().zip(votes) {
                *a += b;
            }
        }
    }

    /// Removes duplicate free keys and keys that were also hit, keeping
    /// first occurrences in order.
    fn dedup_free(&mut self) {
        const MAX_CELLS: i64 = 1 << 27;
        let Some(first) = self.free.first() else {
            return;
        };
        let (mut lo, mut hi) = (
            [first.ix, first.iy, first.iz],
            [first.ix, first.iy, first.iz],
        );
        for k in &self.free {
            for (a, v) in [k.ix, k.iy, k.iz].into_iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        let dims: Vec<i64> = (0..3).map(|a| (hi[a] - lo[a]) as i64 + 1).collect();
        let hits = &self.hits;
        if dims.iter().product::<i64>() > MAX_CELLS {
            let mut seen = FxHashSet::default();
            self.free
                .retain(|k| !hits.contains_key(k) && seen.insert(*k));
            return;
        }
        let mut bits = vec![0u64; (dims.iter().product::<i64>() as usize).div_ceil(64)];
        let index = |k: &VoxelKey| {
            (((k.ix - lo[0]) as i64 * dims[1] + (k.iy - lo[1]) as i64) * dims[2]
                + (k.iz - lo[2]) as i64) as usize
        };
        for k in hits.keys() {
            if (0..3).all(|a| [k.ix, k.iy, k.iz][a] >= lo[a] && [k.ix, k.iy, k.iz][a] <= hi[a]) {
                let i = index(k);
                bits[i / 64] |= 1 << (i % 64);
            }
        }
        self.free.retain(|k| {
            let i = index(k);
            let (w, b) = (i / 64, 1u64 << (i % 64));
            let fresh = bits[w] & b == 0;
            bits[w] |= b;
            fresh
        });
    }
}

impl SemanticOctree {
    pub fn new(params: MapParams) -> Result<Self> {
        params.validate()?;
        Ok(SemanticOctree {
            params,
            voxels: FxHashMap::default(),
            bounds: None,
            seq: 0,
        })
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn resolution(&self) -> f64 {
        self.params.resolution
    }

    pub fn num_classes(&self) -> usize {
        self.params.num_classes
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Restricts ray traversal to an inclusive key box (world AABB).
    pub fn set_bounds(&mut self, min: &Vec3, max: &Vec3) {
        let r = self.params.resolution;
        self.bounds = Some((VoxelKey::from_point(min, r), VoxelKey::from_point(max, r)));
    }

    pub fn in_bounds(&self, k: &VoxelKey) -> bool {
        match &self.bounds {
            None => true,
            Some((lo, hi)) => {
                (lo.ix..=hi.ix).contains(&k.ix)
                    && (lo.iy..=hi.iy).contains(&k.iy)
                    && (lo.iz..=hi.iz).contains(&k.iz)
            }
        }
    }

    pub fn key_of(&self, p: &Vec3) -> VoxelKey {
        VoxelKey::from_point(p, self.params.resolution)
    }

    pub fn center(&self, k: &VoxelKey) -> Vec3 {
        k.center(self.params.resolution)
    }

    pub fn get(&self, k: &VoxelKey) -> Option<&SemanticVoxel> {
        self.voxels.get(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VoxelKey, &SemanticVoxel)> {
        self.voxels.iter()
    }

    /// Keys in ascending order.
    pub fn sorted_keys(&self) -> Vec<VoxelKey> {
        let mut keys: Vec<VoxelKey> = self.voxels.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn p_occ(&self, k: &VoxelKey) -> f64 {
        self.voxels.get(k).map_or(0.5, SemanticVoxel::p_occ)
    }

    pub fn class_distribution(&self, k: &VoxelKey) -> Vec<f64> {
        match self.voxels.get(k) {
            Some(v) => v.class_distribution(self.params.alpha),
            None => vec![1.0 / self.params.num_classes as f64; self.params.num_classes],
        }
    }

    pub fn voxel_entropy(&self, k: &VoxelKey) -> f64 {
        match self.voxels.get(k) {
            Some(v) => self.entropy_of(v),
            None => (self.params.num_classes as f64).ln(),
        }
    }

    pub(crate) fn entropy_of(&self, v: &SemanticVoxel) -> f64 {
        entropy(&v.class_distribution(self.params.alpha))
    }

    /// Centers of voxels with `p_o >= p_o_min` whose argmax class is `class`,
    /// ordered by key.
    pub fn classified_voxels(&self, class: u8, p_o_min: f64) -> Vec<Vec3> {
        self.classified_keys(class, p_o_min)
            .iter()
            .map(|k| self.center(k))
            .collect()
    }

    pub fn classified_keys(&self, class: u8, p_o_min: f64) -> Vec<VoxelKey> {
        let l_min = logit(p_o_min.clamp(1e-12, 1.0 - 1e-12));
        let mut keys: Vec<VoxelKey> = self
            .voxels
            .iter()
            .filter(|(_, v)| v.occ_logodds >= l_min && v.label() == Some(class))
            .map(|(k, _)| *k)
            .collect();
        keys.sort_unstable();
        keys
    }

    /// Single occupancy-hit update with one label vote.
    pub fn update_hit(&mut self, k: VoxelKey, label: u8) -> Result<()> {
        let k_classes = self.params.num_classes;
        if label as usize >= k_classes {
            return Err(invalid(format!("label {label} out of range")));
        }
        let mut votes = vec![0u32; k_classes];
        votes[label as usize] = 1;
        self.seq += 1;
        self.apply_hit(k, &votes);
        Ok(())
    }

    /// Single occupancy-miss update; class counts untouched.
    pub fn update_miss(&mut self, k: VoxelKey) {
        self.seq += 1;
        self.apply_miss(k);
    }

    fn apply_hit(&mut self, k: VoxelKey, votes: &[u32]) -> bool {
        let (lo, hi, l_hit, seq) = (
            self.params.clamp_min,
            self.params.clamp_max,
            self.params.log_odds_hit(),
            self.seq,
        );
        let n = votes.len();
        let mut created = false;
        let v = self.voxels.entry(k).or_insert_with(|| {
            created = true;
            SemanticVoxel::empty(n)
        });
        v.occ_logodds = (v.occ_logodds + l_hit).clamp(lo, hi);
        for (c, &m) in v.class_counts.iter_mut().zip(votes) {
            *c += m as f64;
        }
        v.last_update = seq;
        created
    }

    fn apply_miss(&mut self, k: VoxelKey) -> bool {
        let (lo, hi, l_miss, seq, n) = (
            self.params.clamp_min,
            self.params.clamp_max,
            self.params.log_odds_miss(),
            self.seq,
            self.params.num_classes,
        );
        let mut created = false;
        let v = self.voxels.entry(k).or_insert_with(|| {
            created = true;
            SemanticVoxel::empty(n)
        });
        v.occ_logodds = (v.occ_logodds + l_miss).clamp(lo, hi);
        v.last_update = seq;
        created
    }

    /// Fuses one labeled depth image taken from `pose`.
    ///
    /// Occupancy changes at most once per voxel per call: one hit for every
    /// endpoint voxel, one miss for every other voxel crossed. Class counts
    /// grow by one per pixel whose endpoint lands in the voxel.
    pub fn integrate_observation(
        &mut self,
        pose: &CameraPose,
        obs: &LabeledDepthImage,
        cam: &CameraModel,
    ) -> Result<UpdateStats> {
        self.integrate_observation_with(pose, obs, cam, ExecMode::default())
    }

    pub fn integrate_observation_with(
        &mut self,
        pose: &CameraPose,
        obs: &LabeledDepthImage,
        cam: &CameraModel,
        mode: ExecMode,
    ) -> Result<UpdateStats> {
        pose.validate()?;
        cam.validate()?;
        if obs.width != cam.width || obs.height != cam.height {
            return Err(invalid(format!(
                "image is {}x{} but camera is {}x{}",
                obs.width, obs.height, cam.width, cam.height
            )));
        }
        let k = self.params.num_classes;
        if let Some(bad) = obs
            .label
            .iter()
            .zip(&obs.depth)
            .find(|(l, d)| d.is_finite() && **l as usize >= k)
        {
            return Err(invalid(format!("label {} out of range", bad.0)));
        }
        let rows = par::map_range(mode, obs.height, |v| self.scan_row(pose, obs, cam, v));
        let mut scan = ScanUpdate::default();
        for r in rows {
            scan.merge(r);
        }
        Ok(self.apply_scan(scan))
    }

    /// Fuses labeled 3D endpoints measured from `origin`.
    pub fn integrate_points(
        &mut self,
        origin: &Vec3,
        points: &[(Vec3, u8)],
    ) -> Result<UpdateStats> {
        let mut scan = ScanUpdate::default();
        for (p, label) in points {
            if *label as usize >= self.params.num_classes {
                return Err(invalid(format!("label {label} out of range")));
            }
            self.accumulate_ray(&mut scan, origin, p, *label);
        }
        Ok(self.apply_scan(scan))
    }

    fn scan_row(
        &self,
        pose: &CameraPose,
        obs: &LabeledDepthImage,
        cam: &CameraModel,
        v: usize,
    ) -> ScanUpdate {
        let mut scan = ScanUpdate::default();
        for u in 0..obs.width {
            let i = v * obs.width + u;
            let z = obs.depth[i];
            if !z.is_finite() || z <= 0.0 {
                continue;
            }
            let d_cam = cam.pixel_dir(u as f64, v as f64) * z;
            let end = pose.position + pose.to_world_dir(&d_cam);
            self.accumulate_ray(&mut scan, &pose.position, &end, obs.label[i]);
        }
        scan
    }

    fn accumulate_ray(&self, scan: &mut ScanUpdate, origin: &Vec3, end: &Vec3, label: u8) {
        let delta = end - origin;
        let range = delta.norm();
        if !(range > 0.0) {
            return;
        }
        let dir = delta / range;
        let res = self.params.resolution;
        if range <= self.params.max_range {
            let end_key = VoxelKey::from_point(end, res);
            walk_segment(origin, &dir, range, res, |k, _| {
                if k != end_key {
                    scan.push_free(k);
                }
                true
            });
            let votes = scan
                .hits
                .entry(end_key)
                .or_insert_with(|| vec![0; self.params.num_classes]);
            votes[label as usize] += 1;
        } else {
            walk_segment(origin, &dir, self.params.max_range, res, |k, _| {
                scan.push_free(k);
                true
            });
        }
    }

    fn apply_scan(&mut self, mut scan: ScanUpdate) -> UpdateStats {
        scan.dedup_free();
        self.seq += 1;
        let mut stats = UpdateStats::default();
        for k in &scan.free {
            stats.misses += 1;
            stats.new_voxels += self.apply_miss(*k) as usize;
        }
        for (k, votes) in &scan.hits {
            stats.hits += 1;
            stats.new_voxels += self.apply_hit(*k, votes) as usize;
        }
        stats
    }

    /// Writes the line-oriented `semmap v1` format, keys sorted.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "semmap v1 resolution={} K={}",
            self.params.resolution, self.params.num_classes
        )?;
        let mut line = String::new();
        for k in self.sorted_keys() {
            let v = &self.voxels[&k];
            line.clear();
            write!(line, "{} {} {} {}", k.ix, k.iy, k.iz, v.occ_logodds).unwrap();
            for c in &v.class_counts {
                write!(line, " {c}").unwrap();
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the `semmap v1` format. Parameters other than resolution and K
    /// come from `params`.
    pub fn read_text<R: BufRead>(r: R, mut params: MapParams) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("semmap") || parts.next() != Some("v1") {
            return Err(Error::Parse {
                line: 1,
                msg: "expected `semmap v1` header".into(),
            });
        }
        for kv in parts {
            let bad = || Error::Parse {
                line: 1,
                msg: format!("bad header field `{kv}`"),
            };
            let (key, val) = kv.split_once('=').ok_or_else(bad)?;
            match key {
                "resolution" => params.resolution = val.parse().map_err(|_| bad())?,
                "K" => params.num_classes = val.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        let mut map = SemanticOctree::new(params)?;
        let k = params.num_classes;
        for (n, line) in lines.enumerate() {
            let line = line?;
            let lineno = n + 2;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 + k {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {} fields, got {}", 4 + k, f.len()),
                });
            }
            let perr = |_| Error::Parse {
                line: lineno,
                msg: "malformed number".into(),
            };
            let key = VoxelKey::new(
                f[0].parse().map_err(perr)?,
                f[1].parse().map_err(perr)?,
                f[2].parse().map_err(perr)?,
            );
            let occ: f64 = f[3].parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: "malformed number".into(),
            })?;
            let counts = f[4..]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Parse {
                    line: lineno,
                    msg: "malformed count".into(),
                })?;
            if counts.iter().any(|c| *c < 0.0) {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "negative class count".into(),
                });
            }
            map.voxels.insert(
                key,
                SemanticVoxel {
                    occ_logodds: occ,
                    class_counts: counts,
                    last_update: 0,
                },
            );
        }
        Ok(map)
    }

    /// ASCII PLY of the classified voxels of every class (occupied ones only).
    pub fn write_classified_ply<W: Write>(&self, w: W, p_o_min: f64) -> Result<()> {
        let mut pts = Vec::new();
        for c in 0..self.params.num_classes as u8 {
            for p in self.classified_voxels(c, p_o_min) {
                pts.push((p, c));
            }
        }
        write_ply(w, &pts)
    }
}

/// ASCII PLY with a per-vertex `class` property.
pub fn write_ply<W: Write>(mut w: W, points: &[(Vec3, u8)]) -> Result<()> {
    writeln!(w, "ply\nformat ascii 1.0")?;
    writeln!(w, "element vertex {}", points.len())?;
    writeln!(
        w,
        "property float x\nproperty float y\nproperty float z\nproperty uchar class"
    )?;
    writeln!(w, "end_header")?;
    for (p, c) in points {
        writeln!(w, "{} {} {} {}", p.x, p.y, p.z, c)?;
    }
    Ok(())
}
