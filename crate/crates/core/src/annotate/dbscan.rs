//! Density-based clustering with a uniform-grid neighbour index.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

pub const NOISE: i32 = -1;
const UNVISITED: i32 = -2;

/// Per-point cluster ids; `NOISE` (-1) marks outliers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub labels: Vec<i32>,
    pub cluster_count: usize,
}

impl ClusterLabeling {
    /// Indices of the members of cluster `id`, ascending.
    pub fn members(&self, id: i32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == id).then_some(i))
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Renumbers clusters in order of their smallest member index.
    pub fn canonicalize(&self) -> ClusterLabeling {
        let mut remap = vec![NOISE; self.cluster_count];
        let mut next = 0;
        for &l in &self.labels {
            if l >= 0 && remap[l as usize] == NOISE {
                remap[l as usize] = next;
                next += 1;
            }
        }
        ClusterLabeling {
            labels: self
                .labels
                .iter()
                .map(|&l| if l >= 0 { remap[l as usize] } else { NOISE })
                .collect(),
            cluster_count: self.cluster_count,
        }
    }
}

struct GridIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { points, cell, cells }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// All points within `cell` of point `i`, including `i` itself.
    fn neighbours(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let k = Self::key(p, self.cell);
        let r2 = self.cell * self.cell;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        out.extend(bucket.iter().copied().filter(|&j| (self.points[j] - p).norm_squared() <= r2));
                    }
                }
            }
        }
    }
}

/// Clusters `cloud` with radius `eps` (inclusive) and density `min_pts`
/// (the query point counts towards its own neighbourhood).
///
/// Clusters are discovered in ascending point-index order; a border point
/// reachable from several clusters belongs to the first one discovered.
pub fn dbscan(cloud: &PointCloud, eps: f64, min_pts: usize) -> Result<ClusterLabeling> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::invalid("min_pts must be at least 1"));
    }
    let points = cloud.points();
    let index = GridIndex::new(points, eps);
    let mut labels = vec![UNVISITED; points.len()];
    let mut cluster_count = 0usize;
    let mut nbrs = Vec::new();
    let mut queue = Vec::new();

    for i in 0..points.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        index.neighbours(i, &mut nbrs);
        if nbrs.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        let id = cluster_count as i32;
        cluster_count += 1;
        labels[i] = id;
        queue.clear();
        queue.extend(nbrs.iter().copied().filter(|&j| j != i));
        while let Some(j) = queue.pop() {
            match labels[j] {
                NOISE => labels[j] = id,
                UNVISITED => {
                    labels[j] = id;
                    index.neighbours(j, &mut nbrs);
                    if nbrs.len() >= min_pts {
                        queue.extend(nbrs.iter().copied().filter(|&k| labels[k] == UNVISITED || labels[k] == NOISE));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(ClusterLabeling { labels, cluster_count })
}
