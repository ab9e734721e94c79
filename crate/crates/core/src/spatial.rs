//! Uniform hash-grid point index for radius and nearest-neighbor queries.

use rustc_hash::FxHashMap;

use crate::camera::Vec3;

type Cell = (i32, i32, i32);

#[derive(Debug, Clone, Default)]
pub struct PointIndex {
    points: Vec<Vec3>,
    cell: f64,
    grid: FxHashMap<Cell, Vec<u32>>,
    lo: [i32; 3],
    hi: [i32; 3],
}

impl PointIndex {
    /// Builds an index with cubic buckets of side `cell` (> 0).
    pub fn new(points: Vec<Vec3>, cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut grid: FxHashMap<Cell, Vec<u32>> = FxHashMap::default();
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p, cell);
            let ca = [c.0, c.1, c.2];
            for a in 0..3 {
                lo[a] = lo[a].min(ca[a]);
                hi[a] = hi[a].max(ca[a]);
            }
            grid.entry(c).or_default().push(i as u32);
        }
        PointIndex {
            points,
            cell,
            grid,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Indices of all points with `|p - q| <= radius`, in ascending order.
    pub fn within(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let r2 = radius * radius;
        self.visit_box(q, radius, |i, p| {
            if (p - q).norm_squared() <= r2 {
                out.push(i);
            }
            false
        });
        out.sort_unstable();
        out
    }

    /// True if some point satisfies `|p - q| < radius` (strict).
    pub fn any_closer_than(&self, q: &Vec3, radius: f64) -> bool {
        let r2 = radius * radius;
        self.visit_box(q, radius, |_, p| (p - q).norm_squared() < r2)
    }

    /// True if some point satisfies `|p - q| <= radius`.
    pub fn any_within(&self, q: &Vec3, radius: f64) -> bool {
        let r2 = radius * radius;
        self.visit_box(q, radius, |_, p| (p - q).norm_squared() <= r2)
    }

    /// Exact nearest neighbor: `(index, distance)`. Ties go to the lower index.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = cell_of(q, self.cell);
        let qc = [c.0, c.1, c.2];
        let mut max_ring = 0;
        for a in 0..3 {
            max_ring = max_ring
                .max((qc[a] - self.lo[a]).abs())
                .max((self.hi[a] - qc[a]).abs());
        }
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=max_ring {
            self.visit_ring(c, ring, |i| {
                let d2 = (self.points[i] - q).norm_squared();
                match best {
                    Some((bi, bd)) if d2 > bd || (d2 == bd && i > bi) => {}
                    _ => best = Some((i, d2)),
                }
            });
            if let Some((_, bd)) = best {
                // Anything in ring + 1 or beyond is at least `ring * cell` away.
                let bound = ring as f64 * self.cell;
                if bd < bound * bound {
                    break;
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    fn visit_box(&self, q: &Vec3, radius: f64, mut f: impl FnMut(usize, &Vec3) -> bool) -> bool {
        let lo = cell_of(&q.add_scalar(-radius), self.cell);
        let hi = cell_of(&q.add_scalar(radius), self.cell);
        for x in lo.0.max(self.lo[0])..=hi.0.min(self.hi[0]) {
            for y in lo.1.max(self.lo[1])..=hi.1.min(self.hi[1]) {
                for z in lo.2.max(self.lo[2])..=hi.2.min(self.hi[2]) {
                    if let Some(bucket) = self.grid.get(&(x, y, z)) {
                        for &i in bucket {
                            if f(i as usize, &self.points[i as usize]) {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    fn visit_ring(&self, c: Cell, ring: i32, mut f: impl FnMut(usize)) {
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                let edge = dx.abs() == ring || dy.abs() == ring;
                let mut dz = -ring;
                while dz <= ring {
                    if let Some(bucket) = self.grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        for &i in bucket {
                            f(i as usize);
                        }
                    }
                    // Interior columns only contribute their two z faces.
                    dz += if edge || dz == ring || ring == 0 {
                        1
                    } else {
                        2 * ring
                    };
                }
            }
        }
    }
}

#[inline]
fn cell_of(p: &Vec3, cell: f64) -> Cell {
    (
        (p.x / cell).floor() as i32,
        (p.y / cell).floor() as i32,
        (p.z / cell).floor() as i32,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(pts: &[Vec3], q: &Vec3) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in pts.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, best.1.sqrt())
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..0.3),
                )
            })
            .collect();
        let idx = PointIndex::new(pts.clone(), 0.07);
        for _ in 0..500 {
            let q = Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.0..1.0),
            );
            let (bi, bd) = brute_nearest(&pts, &q);
            let (i, d) = idx.nearest(&q).unwrap();
            assert_eq!(i, bi);
            assert_eq!(d, bd);
        }
    }

    #[test]
    fn within_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec3> = (0..300)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let idx = PointIndex::new(pts.clone(), 0.05);
        for _ in 0..200 {
            let q = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            let r = rng.gen_range(0.0..0.3);
            let expect: Vec<usize> = (0..pts.len())
                .filter(|&i| (pts[i] - q).norm() <= r)
                .collect();
            assert_eq!(idx.within(&q, r), expect);
            assert_eq!(idx.any_within(&q, r), !expect.is_empty());
        }
    }

    #[test]
    fn empty_index() {
        let idx = PointIndex::new(vec![], 1.0);
        assert!(idx.nearest(&Vec3::zeros()).is_none());
        assert!(!idx.any_within(&Vec3::zeros(), 10.0));
    }
}
