use crate::camera::Vec3;

const EXACT_LIMIT: usize = 12;

pub fn path_length(start: &Vec3, points: &[Vec3], order: &[usize]) -> f64 {
    let mut prev = *start;
    let mut len = 0.0;
    for &i in order {
        len += (points[i] - prev).norm();
        prev = points[i];
    }
    len
}

/// Open tour from `start` through every point. Exact (Held-Karp) up to 12
/// points, nearest neighbor followed by 2-opt beyond.
pub fn order_viewpoints_tsp(points: &[Vec3], start: &Vec3) -> Vec<usize> {
    match points.len() {
        0 => Vec::new(),
        1 => vec![0],
        n if n <= EXACT_LIMIT => held_karp(points, start),
        _ => two_opt(points, start, nearest_neighbor(points, start)),
    }
}

fn held_karp(points: &[Vec3], start: &Vec3) -> Vec<usize> {
    let n = points.len();
    let full = 1usize << n;
    let d = |i: usize, j: usize| (points[i] - points[j]).norm();
    let mut cost = vec![f64::INFINITY; full * n];
    let mut parent = vec![usize::MAX; full * n];
    for j in 0..n {
        cost[(1 << j) * n + j] = (points[j] - start).norm();
    }
    for mask in 1..full {
        for j in 0..n {
            let c = cost[mask * n + j];
            if mask & (1 << j) == 0 || !c.is_finite() {
                continue;
            }
            for k in 0..n {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let nc = c + d(j, k);
                if nc < cost[next * n + k] {
                    cost[next * n + k] = nc;
                    parent[next * n + k] = j;
                }
            }
        }
    }
    let last = full - 1;
    let mut end = 0;
    for j in 1..n {
        if cost[last * n + j] < cost[last * n + end] {
            end = j;
        }
    }
    let mut order = Vec::with_capacity(n);
    let (mut mask, mut j) = (last, end);
    while j != usize::MAX {
        order.push(j);
        let p = parent[mask * n + j];
        mask &= !(1 << j);
        j = p;
    }
    order.reverse();
    order
}

fn nearest_neighbor(points: &[Vec3], start: &Vec3) -> Vec<usize> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut order = Vec::with_capacity(points.len());
    let mut cur = *start;
    while !left.is_empty() {
        let (pos, _) = left
            .iter()
            .enumerate()
            .map(|(pos, &i)| (pos, (points[i] - cur).norm()))
            .fold(
                (0, f64::INFINITY),
                |best, x| if x.1 < best.1 { x } else { best },
            );
        let i = left.remove(pos);
        order.push(i);
        cur = points[i];
    }
    order
}

fn two_opt(points: &[Vec3], start: &Vec3, mut order: Vec<usize>) -> Vec<usize> {
    let n = order.len();
    let at = |order: &[usize], i: usize| if i == 0 { *start } else { points[order[i - 1]] };
    // Positions 0..=n in the path where 0 is the fixed start.
    let mut improved = true;
    while improved {
        improved = false;
        for i in 1..n {
            for j in i + 1..=n {
                let (a, b, c) = (at(&order, i - 1), at(&order, i), at(&order, j));
                let mut delta = (a - c).norm() - (a - b).norm();
                if j < n {
                    let e = at(&order, j + 1);
                    delta += (b - e).norm() - (c - e).norm();
                }
                if delta < -1e-12 {
                    order[i - 1..j].reverse();
                    improved = true;
                }
            }
        }
    }
    order
}
