//! Procedural plant scenes, analytic depth+label rendering, segmentation
//! noise, and ground-truth surface sampling.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, CameraPose, Vec3};
use crate::class::{BACKGROUND, FRUIT, LEAF};
use crate::error::{invalid, Result};
use crate::par::{self, ExecMode};

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Axis-aligned ellipsoid.
    Ellipsoid {
        center: Vec3,
        radii: Vec3,
    },
    /// Two-sided flat disc.
    Disc {
        center: Vec3,
        normal: Vec3,
        radius: f64,
    },
    /// Vertical closed cylinder standing on `base`.
    Cylinder {
        base: Vec3,
        radius: f64,
        height: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub class: u8,
}

impl Shape {
    /// Smallest `t > 0` with `origin + t * dir` on the surface (`dir` unit).
    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        match *self {
            Shape::Sphere { center, radius } => {
                ray_unit_sphere(&((o - center) / radius), &(d / radius))
            }
            Shape::Ellipsoid { center, radii } => {
                let oc = (o - center).component_div(&radii);
                let dd = d.component_div(&radii);
                ray_unit_sphere(&oc, &dd)
            }
            Shape::Disc {
                center,
                normal,
                radius,
            } => {
                let denom = normal.dot(d);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = normal.dot(&(center - o)) / denom;
                if t <= HIT_EPS {
                    return None;
                }
                let p = o + d * t;
                ((p - center).norm_squared() <= radius * radius).then_some(t)
            }
            Shape::Cylinder {
                base,
                radius,
                height,
            } => {
                let mut best: Option<f64> = None;
                let mut take = |t: f64| {
                    if t > HIT_EPS && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let (ox, oy) = (o.x - base.x, o.y - base.y);
                let a = d.x * d.x + d.y * d.y;
                if a > 1e-15 {
                    let b = ox * d.x + oy * d.y;
                    let c = ox * ox + oy * oy - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        for t in [(-b - s) / a, (-b + s) / a] {
                            let z = o.z + t * d.z;
                            if z >= base.z && z <= base.z + height {
                                take(t);
                            }
                        }
                    }
                }
                if d.z.abs() > 1e-15 {
                    for zc in [base.z, base.z + height] {
                        let t = (zc - o.z) / d.z;
                        let (x, y) = (o.x + t * d.x - base.x, o.y + t * d.y - base.y);
                        if x * x + y * y <= radius * radius {
                            take(t);
                        }
                    }
                }
                best
            }
        }
    }

    /// Signed-ish distance used by tests: zero on the surface.
    pub fn surface_residual(&self, p: &Vec3) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
            Shape::Ellipsoid { center, radii } => {
                // Exact on the surface, approximate away from it.
                let q = (p - center).component_div(&radii);
                (q.norm() - 1.0).abs() * radii.min()
            }
            Shape::Disc {
                center,
                normal,
                radius,
            } => {
                let v = p - center;
                let h = normal.dot(&v);
                let radial = (v - normal * h).norm();
                h.abs() + (radial - radius).max(0.0)
            }
            Shape::Cylinder {
                base,
                radius,
                height,
            } => {
                let r = ((p.x - base.x).powi(2) + (p.y - base.y).powi(2)).sqrt();
                let z = p.z - base.z;
                let side = if (0.0..=height).contains(&z) {
                    (r - radius).abs()
                } else {
                    f64::INFINITY
                };
                let cap = |zc: f64| (z - zc).abs() + (r - radius).max(0.0);
                side.min(cap(0.0)).min(cap(height))
            }
        }
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        match *self {
            Shape::Sphere { center, radius } => {
                (center.add_scalar(-radius), center.add_scalar(radius))
            }
            Shape::Ellipsoid { center, radii } => (center - radii, center + radii),
            Shape::Disc {
                center,
                normal,
                radius,
            } => {
                let n = normal.normalize();
                let ext = Vec3::new(
                    radius * (1.0 - n.x * n.x).max(0.0).sqrt(),
                    radius * (1.0 - n.y * n.y).max(0.0).sqrt(),
                    radius * (1.0 - n.z * n.z).max(0.0).sqrt(),
                );
                (center - ext, center + ext)
            }
            Shape::Cylinder {
                base,
                radius,
                height,
            } => (
                Vec3::new(base.x - radius, base.y - radius, base.z),
                Vec3::new(base.x + radius, base.y + radius, base.z + height),
            ),
        }
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            Shape::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Shape::Ellipsoid { radii, .. } => {
                // Knud Thomsen's approximation (< 1.1% error).
                let p = 1.6075;
                let (a, b, c) = (radii.x.powf(p), radii.y.powf(p), radii.z.powf(p));
                4.0 * PI * ((a * b + a * c + b * c) / 3.0).powf(1.0 / p)
            }
            Shape::Disc { radius, .. } => PI * radius * radius,
            Shape::Cylinder { radius, height, .. } => {
                2.0 * PI * radius * height + 2.0 * PI * radius * radius
            }
        }
    }

    /// Uniform-area surface sample.
    pub fn sample_surface(&self, rng: &mut impl Rng) -> Vec3 {
        match *self {
            Shape::Sphere { center, radius } => center + unit_vector(rng) * radius,
            Shape::Ellipsoid { center, radii } => {
                // Rejection on the area element of the mapped unit sphere,
                // which is proportional to |u / radii|.
                let r_min = radii.x.min(radii.y).min(radii.z);
                loop {
                    let u = unit_vector(rng);
                    let w = u.component_div(&radii).norm() * r_min;
                    if rng.gen::<f64>() <= w {
                        return center + u.component_mul(&radii);
                    }
                }
            }
            Shape::Disc {
                center,
                normal,
                radius,
            } => {
                let (e1, e2) = basis(&normal);
                let r = radius * rng.gen::<f64>().sqrt();
                let th = rng.gen_range(0.0..2.0 * PI);
                center + e1 * (r * th.cos()) + e2 * (r * th.sin())
            }
            Shape::Cylinder {
                base,
                radius,
                height,
            } => {
                let side = 2.0 * PI * radius * height;
                let cap = PI * radius * radius;
                let pick = rng.gen::<f64>() * (side + 2.0 * cap);
                let th = rng.gen_range(0.0..2.0 * PI);
                if pick < side {
                    base + Vec3::new(
                        radius * th.cos(),
                        radius * th.sin(),
                        rng.gen_range(0.0..height),
                    )
                } else {
                    let r = radius * rng.gen::<f64>().sqrt();
                    let z = if pick < side + cap { 0.0 } else { height };
                    base + Vec3::new(r * th.cos(), r * th.sin(), z)
                }
            }
        }
    }
}

fn ray_unit_sphere(o: &Vec3, d: &Vec3) -> Option<f64> {
    let a = d.norm_squared();
    let b = o.dot(d);
    let c = o.norm_squared() - 1.0;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t0 = (-b - s) / a;
    if t0 > HIT_EPS {
        return Some(t0);
    }
    let t1 = (-b + s) / a;
    (t1 > HIT_EPS).then_some(t1)
}

fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let th = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * th.cos(), r * th.sin(), z)
}

fn basis(n: &Vec3) -> (Vec3, Vec3) {
    let n = n.normalize();
    let a = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let e1 = n.cross(&a).normalize();
    (e1, n.cross(&e1))
}

/// Parameters of the procedural plant generator. Lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub plants: usize,
    pub rows: usize,
    pub fruits_min: usize,
    pub fruits_max: usize,
    pub fruit_radius_min: f64,
    pub fruit_radius_max: f64,
    /// Fraction of fruits drawn as ellipsoids instead of spheres.
    pub ellipsoid_fraction: f64,
    pub leaves_per_plant: usize,
    pub leaf_radius_min: f64,
    pub leaf_radius_max: f64,
    /// 0 disables occluding leaves; otherwise every fruit gets one nearby
    /// leaf whose size grows with this value.
    pub occlusion: f64,
    pub plant_height: f64,
    pub stem_radius: f64,
    pub plant_spacing: f64,
    pub row_spacing: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            plants: 1,
            rows: 1,
            fruits_min: 3,
            fruits_max: 5,
            fruit_radius_min: 0.03,
            fruit_radius_max: 0.045,
            ellipsoid_fraction: 0.5,
            leaves_per_plant: 10,
            leaf_radius_min: 0.03,
            leaf_radius_max: 0.05,
            occlusion: 0.6,
            plant_height: 0.6,
            stem_radius: 0.008,
            plant_spacing: 0.5,
            row_spacing: 1.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.plants == 0 || self.rows == 0 || self.rows > self.plants {
            return Err(invalid("scene needs plants >= rows >= 1"));
        }
        if self.fruits_min > self.fruits_max {
            return Err(invalid("fruits_min exceeds fruits_max"));
        }
        let positive = [
            self.fruit_radius_min,
            self.fruit_radius_max,
            self.leaf_radius_min,
            self.leaf_radius_max,
            self.plant_height,
            self.stem_radius,
            self.plant_spacing,
            self.row_spacing,
        ];
        if positive.iter().any(|x| !(*x > 0.0)) {
            return Err(invalid("scene dimensions must be positive"));
        }
        if self.fruit_radius_min > self.fruit_radius_max
            || self.leaf_radius_min > self.leaf_radius_max
        {
            return Err(invalid("radius range is inverted"));
        }
        if !(0.0..=1.0).contains(&self.occlusion) || !(0.0..=1.0).contains(&self.ellipsoid_fraction)
        {
            return Err(invalid(
                "occlusion and ellipsoid_fraction must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    /// Stem base position.
    pub base: Vec3,
    pub height: f64,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub spec: SceneSpec,
    pub plants: Vec<Plant>,
    pub primitives: Vec<Primitive>,
}

pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_row = spec.plants.div_ceil(spec.rows);
    let mut plants = Vec::with_capacity(spec.plants);
    let mut primitives = Vec::new();
    for i in 0..spec.plants {
        let row = i / per_row;
        let base = Vec3::new(
            (i % per_row) as f64 * spec.plant_spacing,
            row as f64 * spec.row_spacing,
            0.0,
        );
        let height = spec.plant_height * rng.gen_range(0.9..1.1);
        plants.push(Plant { base, height, row });
        primitives.push(Primitive {
            shape: Shape::Cylinder {
                base,
                radius: spec.stem_radius,
                height,
            },
            class: BACKGROUND,
        });

        let n_fruits = rng.gen_range(spec.fruits_min..=spec.fruits_max);
        let mut fruits: Vec<(Vec3, f64, f64)> = Vec::new();
        for _ in 0..n_fruits {
            for _attempt in 0..50 {
                let r = rng.gen_range(spec.fruit_radius_min..=spec.fruit_radius_max);
                let az = rng.gen_range(0.0..2.0 * PI);
                let off = spec.stem_radius + r + rng.gen_range(0.005..0.03);
                let z = rng.gen_range(0.3 * height..0.9 * height);
                let c = base + Vec3::new(off * az.cos(), off * az.sin(), z);
                if fruits
                    .iter()
                    .all(|(fc, fr, _)| (fc - c).norm() > (fr + r) * 1.2 + 0.01)
                {
                    fruits.push((c, r, az));
                    break;
                }
            }
        }
        for &(c, r, _) in &fruits {
            let shape = if rng.gen::<f64>() < spec.ellipsoid_fraction {
                Shape::Ellipsoid {
                    center: c,
                    radii: Vec3::new(r, r, 1.25 * r),
                }
            } else {
                Shape::Sphere {
                    center: c,
                    radius: r,
                }
            };
            primitives.push(Primitive {
                shape,
                class: FRUIT,
            });
        }
        if spec.occlusion > 0.0 {
            for &(c, r, az) in &fruits {
                let a = az + rng.gen_range(-1.2..1.2);
                let tilt = rng.gen_range(-0.4..0.4f64);
                let d = Vec3::new(a.cos() * tilt.cos(), a.sin() * tilt.cos(), tilt.sin());
                let leaf_r = r * (0.5 + spec.occlusion) * rng.gen_range(0.9..1.1);
                primitives.push(Primitive {
                    shape: Shape::Disc {
                        center: c + d * (1.35 * r),
                        normal: d,
                        radius: leaf_r,
                    },
                    class: LEAF,
                });
            }
        }
        for _ in 0..spec.leaves_per_plant {
            for _attempt in 0..50 {
                let az = rng.gen_range(0.0..2.0 * PI);
                let lr = rng.gen_range(spec.leaf_radius_min..=spec.leaf_radius_max);
                let off = rng.gen_range(0.03..0.15);
                let z = rng.gen_range(0.15 * height..height);
                let c = base + Vec3::new(off * az.cos(), off * az.sin(), z);
                // Leaves do not pierce fruits.
                if fruits
                    .iter()
                    .all(|(fc, fr, _)| (fc - c).norm() > fr * 1.3 + lr)
                {
                    let tilt = rng.gen_range(0.3..1.3f64);
                    let n = Vec3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos());
                    primitives.push(Primitive {
                        shape: Shape::Disc {
                            center: c,
                            normal: n,
                            radius: lr,
                        },
                        class: LEAF,
                    });
                    break;
                }
            }
        }
    }
    Ok(Scene {
        seed,
        spec: spec.clone(),
        plants,
        primitives,
    })
}

impl Scene {
    pub fn fruits(&self) -> impl Iterator<Item = &Primitive> {
        self.primitives.iter().filter(|p| p.class == FRUIT)
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.primitives {
            let (a, b) = p.shape.aabb();
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        (lo, hi)
    }

    /// Nearest hit along a unit ray: `(t, class)`.
    pub fn cast(&self, o: &Vec3, d: &Vec3) -> Option<(f64, u8)> {
        let mut best: Option<(f64, u8)> = None;
        for p in &self.primitives {
            if let Some(t) = p.shape.intersect(o, d) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, p.class));
                }
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(s)?;
        for p in &scene.primitives {
            if p.class > BACKGROUND {
                return Err(invalid(format!("primitive class {} out of range", p.class)));
            }
        }
        Ok(scene)
    }
}

/// Row-major depth (z along the optical axis, NaN = invalid) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub label: Vec<u8>,
}

impl LabeledDepthImage {
    pub fn invalid(width: usize, height: usize) -> Self {
        LabeledDepthImage {
            width,
            height,
            depth: vec![f64::NAN; width * height],
            label: vec![BACKGROUND; width * height],
        }
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.depth[i].is_finite()
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }

    /// 16-bit depth PGM in millimeters (0 = invalid).
    pub fn write_depth_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.depth.len() * 2);
        for d in &self.depth {
            let mm = if d.is_finite() {
                (d * 1000.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            };
            buf.extend_from_slice(&mm.to_be_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// 8-bit label PGM; invalid pixels are 0, class `c` maps to `80 * (c + 1)`
    /// saturated at 255.
    pub fn write_label_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let buf: Vec<u8> = (0..self.label.len())
            .map(|i| {
                if self.is_valid(i) {
                    (80 * (self.label[i] as u32 + 1)).min(255) as u8
                } else {
                    0
                }
            })
            .collect();
        w.write_all(&buf)?;
        Ok(())
    }
}

/// Ground-truth labeled depth image seen from `pose`.
const TILE: usize = 16;

/// Buckets primitives into square pixel tiles by the projection of their
/// bounding boxes. Boxes wholly behind the camera are dropped; boxes
/// straddling the image plane go everywhere.
fn bin_primitives(prims: &[Primitive], cam: &CameraModel, pose: &CameraPose) -> Vec<Vec<u32>> {
    let (tx, ty) = (cam.width.div_ceil(TILE), cam.height.div_ceil(TILE));
    let mut tiles = vec![Vec::new(); tx * ty];
    for (i, p) in prims.iter().enumerate() {
        let (lo, hi) = p.shape.aabb();
        let mut u = (f64::INFINITY, f64::NEG_INFINITY);
        let mut v = (f64::INFINITY, f64::NEG_INFINITY);
        let mut behind = 0;
        for c in 0..8 {
            let corner = Vec3::new(
                if c & 1 == 0 { lo.x } else { hi.x },
                if c & 2 == 0 { lo.y } else { hi.y },
                if c & 4 == 0 { lo.z } else { hi.z },
            );
            let q = pose.to_camera(&corner);
            if q.z <= 1e-9 {
                behind += 1;
                continue;
            }
            let (pu, pv) = (cam.cx + cam.fx * q.x / q.z, cam.cy + cam.fy * q.y / q.z);
            u = (u.0.min(pu), u.1.max(pu));
            v = (v.0.min(pv), v.1.max(pv));
        }
        let range = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
            if hi < 0.0 || lo > (n * TILE) as f64 {
                return None;
            }
            let a = (lo.max(0.0).floor() as usize) / TILE;
            let b = ((hi.ceil().max(0.0) as usize) / TILE).min(n - 1);
            Some((a, b))
        };
        if behind == 8 {
            continue;
        }
        let (xs, ys) = if behind > 0 {
            ((0, tx - 1), (0, ty - 1))
        } else {
            match (range(u.0, u.1, tx), range(v.0, v.1, ty)) {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            }
        };
        for y in ys.0..=ys.1 {
            for x in xs.0..=xs.1 {
                tiles[y * tx + x].push(i as u32);
            }
        }
    }
    tiles
}

pub fn render(scene: &Scene, cam: &CameraModel, pose: &CameraPose) -> LabeledDepthImage {
    render_with(scene, cam, pose, ExecMode::default())
}

pub fn render_with(
    scene: &Scene,
    cam: &CameraModel,
    pose: &CameraPose,
    mode: ExecMode,
) -> LabeledDepthImage {
    // Cull primitives that cannot be hit within max_depth.
    let near: Vec<Primitive> = scene
        .primitives
        .iter()
        .filter(|p| {
            let (lo, hi) = p.shape.aabb();
            let closest = pose.position.sup(&lo).inf(&hi);
            (closest - pose.position).norm() <= cam.max_depth
        })
        .copied()
        .collect();
    let tiles = bin_primitives(&near, cam, pose);
    let tiles_x = cam.width.div_ceil(TILE);
    let rows = par::map_range(mode, cam.height, |v| {
        let mut depth = vec![f64::NAN; cam.width];
        let mut label = vec![BACKGROUND; cam.width];
        for u in 0..cam.width {
            let bin = &tiles[(v / TILE) * tiles_x + u / TILE];
            if bin.is_empty() {
                continue;
            }
            let d_cam = cam.pixel_dir(u as f64, v as f64);
            let n = d_cam.norm();
            let dir = pose.to_world_dir(&d_cam) / n;
            let mut best: Option<(f64, u8)> = None;
            for &i in bin {
                let p = &near[i as usize];
                if let Some(t) = p.shape.intersect(&pose.position, &dir) {
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, p.class));
                    }
                }
            }
            if let Some((t, c)) = best {
                if t <= cam.max_depth {
                    depth[u] = t / n;
                    label[u] = c;
                }
            }
        }
        (depth, label)
    });
    let mut img = LabeledDepthImage {
        width: cam.width,
        height: cam.height,
        depth: Vec::new(),
        label: Vec::new(),
    };
    img.depth.reserve(cam.pixel_count());
    img.label.reserve(cam.pixel_count());
    for (d, l) in rows {
        img.depth.extend(d);
        img.label.extend(l);
    }
    img
}

/// 4-connected components of equal label over valid pixels. Returns the
/// component id per pixel (`u32::MAX` for invalid pixels) and the count.
pub fn label_components(obs: &LabeledDepthImage) -> (Vec<u32>, usize) {
    let (w, h) = (obs.width, obs.height);
    let mut comp = vec![u32::MAX; w * h];
    let mut n = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if comp[start] != u32::MAX || !obs.is_valid(start) {
            continue;
        }
        let lab = obs.label[start];
        comp[start] = n;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (u, v) = (i % w, i / w);
            let mut visit = |j: usize| {
                if comp[j] == u32::MAX && obs.is_valid(j) && obs.label[j] == lab {
                    comp[j] = n;
                    queue.push_back(j);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w);
            }
            if v + 1 < h {
                visit(i + w);
            }
        }
        n += 1;
    }
    (comp, n as usize)
}

/// Flips each connected label component as a unit: it keeps its label with
/// probability `p_gt`, otherwise takes a class drawn uniformly from the
/// other `num_classes - 1`.
pub fn corrupt_labels(
    obs: &LabeledDepthImage,
    p_gt: f64,
    num_classes: usize,
    seed: u64,
) -> Result<LabeledDepthImage> {
    if !(0.0..=1.0).contains(&p_gt) {
        return Err(invalid("p_gt must lie in [0, 1]"));
    }
    if num_classes < 2 {
        return Err(invalid("need at least two classes"));
    }
    let mut out = obs.clone();
    if p_gt == 1.0 {
        return Ok(out);
    }
    let (comp, n) = label_components(obs);
    let mut first = vec![usize::MAX; n];
    for (i, &c) in comp.iter().enumerate() {
        if c != u32::MAX && first[c as usize] == usize::MAX {
            first[c as usize] = i;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let new_label: Vec<u8> = first
        .iter()
        .map(|&i| {
            let orig = obs.label[i];
            if rng.gen::<f64>() < p_gt {
                orig
            } else {
                let mut c = rng.gen_range(0..num_classes as u8 - 1);
                if c >= orig {
                    c += 1;
                }
                c
            }
        })
        .collect();
    for (i, &c) in comp.iter().enumerate() {
        if c != u32::MAX {
            out.label[i] = new_label[c as usize];
        }
    }
    Ok(out)
}

/// Uniform-area surface samples of every primitive, `round(area * density)`
/// points each.
pub fn ground_truth_surface(scene: &Scene, density: f64, seed: u64) -> Result<Vec<(Vec3, u8)>> {
    if !(density > 0.0) {
        return Err(invalid("density must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for p in &scene.primitives {
        let n = (p.shape.surface_area() * density).round() as usize;
        for _ in 0..n {
            out.push((p.shape.sample_surface(&mut rng), p.class));
        }
    }
    Ok(out)
}
