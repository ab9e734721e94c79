use serde::{Deserialize, Serialize};

use crate::camera::Vec3;
use crate::error::{invalid, Result};
use crate::spatial::PointIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FruitCluster {
    pub id: usize,
    pub members: Vec<Vec3>,
    pub centroid: Vec3,
    pub min: Vec3,
    pub max: Vec3,
}

impl FruitCluster {
    fn from_members(id: usize, members: Vec<Vec3>) -> Self {
        let n = members.len() as f64;
        let centroid = members.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
        let min = members
            .iter()
            .fold(Vec3::repeat(f64::INFINITY), |a, p| a.inf(p));
        let max = members
            .iter()
            .fold(Vec3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
        FruitCluster {
            id,
            members,
            centroid,
            min,
            max,
        }
    }
}

const UNSEEN: usize = usize::MAX;
const NOISE: usize = usize::MAX - 1;

/// DBSCAN over `points`. Neighborhoods are closed balls of radius `eps` and
/// include the point itself; a point is core when its neighborhood holds at
/// least `min_pts` points. Clusters are seeded and expanded in input order;
/// noise is dropped.
pub fn cluster_targets(points: &[Vec3], eps: f64, min_pts: usize) -> Result<Vec<FruitCluster>> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(invalid("DBSCAN needs eps > 0 and min_pts >= 1"));
    }
    let index = PointIndex::new(points.to_vec(), eps);
    let mut label = vec![UNSEEN; points.len()];
    let mut n_clusters = 0;
    let mut queue = Vec::new();
    for i in 0..points.len() {
        if label[i] != UNSEEN {
            continue;
        }
        let nbrs = index.within(&points[i], eps);
        if nbrs.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let c = n_clusters;
        n_clusters += 1;
        label[i] = c;
        queue.clear();
        queue.extend(nbrs);
        let mut head = 0;
        while head < queue.len() {
            let q = queue[head];
            head += 1;
            if label[q] == NOISE {
                label[q] = c;
            }
            if label[q] != UNSEEN {
                continue;
            }
            label[q] = c;
            let nq = index.within(&points[q], eps);
            if nq.len() >= min_pts {
                queue.extend(nq);
            }
        }
    }
    let mut members: Vec<Vec<Vec3>> = vec![Vec::new(); n_clusters];
    for (i, &l) in label.iter().enumerate() {
        if l < n_clusters {
            members[l].push(points[i]);
        }
    }
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(id, m)| FruitCluster::from_members(id, m))
        .collect())
}
