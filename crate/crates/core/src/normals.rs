//! Geometric surface normals from depth and their spherical-bin consensus.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::depth::DepthImage;
use crate::error::{Error, Result};

/// Per-pixel unit normals in the camera frame.
///
/// `origin_depth` holds the depth of the pixel each normal came from (0 when
/// unknown, e.g. for externally supplied maps without a depth image).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    normals: Vec<Option<Vector3<f64>>>,
    origin_depth: Vec<f64>,
}

impl NormalMap {
    pub fn new(
        width: usize,
        height: usize,
        normals: Vec<Option<Vector3<f64>>>,
        origin_depth: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = width * height;
        if normals.len() != n {
            return Err(Error::invalid(format!(
                "normal map {width}x{height} needs {n} entries, got {}",
                normals.len()
            )));
        }
        if let Some(i) = normals
            .iter()
            .position(|m| m.is_some_and(|v| !v.iter().all(|c| c.is_finite()) || (v.norm() - 1.0).abs() > 1e-6))
        {
            return Err(Error::invalid(format!("normal at pixel {i} is not unit length")));
        }
        let origin_depth = origin_depth.unwrap_or_else(|| vec![0.0; n]);
        if origin_depth.len() != n {
            return Err(Error::invalid("origin depth length does not match normal map"));
        }
        Ok(Self {
            width,
            height,
            normals,
            origin_depth,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> Option<Vector3<f64>> {
        self.normals[v * self.width + u]
    }

    pub fn normals(&self) -> &[Option<Vector3<f64>>] {
        &self.normals
    }

    pub fn present_count(&self) -> usize {
        self.normals.iter().filter(|n| n.is_some()).count()
    }

    /// Replaces the origin depths with those of `depth` (0 where invalid).
    pub fn with_origin_depth(mut self, depth: &DepthImage) -> Result<Self> {
        if depth.width() != self.width || depth.height() != self.height {
            return Err(Error::invalid("depth image does not match normal map dimensions"));
        }
        self.origin_depth = depth
            .depths()
            .iter()
            .zip(depth.valid_mask())
            .map(|(d, ok)| if *ok { *d } else { 0.0 })
            .collect();
        Ok(self)
    }
}

/// Central-difference normals of the lifted surface, in the camera frame.
///
/// A normal is produced for every valid pixel whose four direct neighbours are
/// valid; it is flipped to face the camera. Border pixels never get one.
pub fn estimate_normals(depth: &DepthImage, camera: &CameraModel) -> Result<NormalMap> {
    depth.check_matches(camera)?;
    let (w, h) = (depth.width(), depth.height());
    let mut normals = vec![None; w * h];
    let lift = |u: usize, v: usize| depth.get(u, v).map(|d| camera.unproject(u as f64, v as f64, d));
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let (Some(c), Some(l), Some(r), Some(t), Some(b)) =
                (lift(u, v), lift(u - 1, v), lift(u + 1, v), lift(u, v - 1), lift(u, v + 1))
            else {
                continue;
            };
            let n = (r - l).cross(&(b - t));
            let len = n.norm();
            if !(len > 0.0) || !len.is_finite() {
                continue;
            }
            let mut n = n / len;
            if n.dot(&c) > 0.0 {
                n = -n;
            }
            normals[v * w + u] = Some(n);
        }
    }
    NormalMap::new(w, h, normals, None)?.with_origin_depth(depth)
}

/// Keeps only normals within `max_angle_deg` of `guess` (either sign) before
/// binning; used for iterative refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrefilter {
    pub guess: [f64; 3],
    pub max_angle_deg: f64,
}

/// Clustered dominant surface orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalConsensus {
    /// Unit normal in the camera frame, oriented towards camera -Y.
    pub n_pred: [f64; 3],
    pub support: usize,
    pub inlier_fraction: f64,
}

impl NormalConsensus {
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::from(self.n_pred)
    }
}

/// Spherical bucketing of the -Y hemisphere: a polar cap of radius
/// `bin_deg / 2` around -Y, then rings of `bin_deg` polar width centred on
/// multiples of `bin_deg`, each split into roughly square azimuth buckets.
///
/// Bucket centres sit on the camera axes: the cap on -Y, and every ring has a
/// multiple of four buckets with one centred on each of ±X and ±Z. Planes that
/// are level or square to the camera (the floor under zero roll, walls under
/// zero yaw) then fall mid-bucket instead of on a boundary where rounding
/// noise would split them in two. The last ring reaches the equator, where the
/// sign chosen by [`canonical`] is itself noise, so its azimuth is folded
/// modulo 180 degrees.
struct SphereBins {
    bin_deg: f64,
    ring_offsets: Vec<usize>,
    ring_sizes: Vec<usize>,
}

impl SphereBins {
    fn new(bin_deg: f64) -> Self {
        let rings = 1 + ((90.0 - bin_deg / 2.0) / bin_deg).ceil() as usize;
        let mut ring_offsets = Vec::with_capacity(rings);
        let mut ring_sizes = Vec::with_capacity(rings);
        let mut offset = 0;
        for r in 0..rings {
            let size = if r == 0 {
                1
            } else {
                let center = (r as f64 * bin_deg).min(90.0).to_radians();
                let quarter = (90.0 * center.sin() / bin_deg).round() as usize;
                let size = 4 * quarter.max(1);
                if r + 1 == rings {
                    size / 2
                } else {
                    size
                }
            };
            ring_offsets.push(offset);
            ring_sizes.push(size);
            offset += size;
        }
        Self {
            bin_deg,
            ring_offsets,
            ring_sizes,
        }
    }

    fn len(&self) -> usize {
        self.ring_offsets.last().unwrap() + self.ring_sizes.last().unwrap()
    }

    /// Bin of an already canonicalised normal (n.y <= 0), together with the
    /// member orientation to accumulate (flipped into the folded half on the
    /// equatorial ring).
    fn index(&self, n: &Vector3<f64>) -> (usize, Vector3<f64>) {
        let polar = (-n.y).clamp(-1.0, 1.0).acos().to_degrees();
        let last = self.ring_sizes.len() - 1;
        let ring = (((polar + self.bin_deg / 2.0) / self.bin_deg) as usize).min(last);
        let size = self.ring_sizes[ring];
        if ring == 0 {
            return (0, *n);
        }
        let span = if ring == last { 180.0 } else { 360.0 };
        let width = span / size as f64;
        let az = n.z.atan2(n.x).to_degrees();
        let shifted = (az + width / 2.0).rem_euclid(360.0);
        let (shifted, member) = if shifted >= span { (shifted - span, -n) } else { (shifted, *n) };
        let slot = ((shifted / width) as usize).min(size - 1);
        (self.ring_offsets[ring] + slot, member)
    }
}

/// Maps `n` and `-n` to the same representative in the -Y hemisphere.
fn canonical(n: Vector3<f64>) -> Vector3<f64> {
    let flip = n.y > 0.0 || (n.y == 0.0 && (n.x < 0.0 || (n.x == 0.0 && n.z < 0.0)));
    if flip {
        -n
    } else {
        n
    }
}

/// Finds the most populated orientation bin (antipodal normals merged) and
/// returns the normalised mean of its members.
///
/// Ties go to the bin with the smaller mean depth-of-origin, then the lower
/// bin index.
pub fn cluster_normals(normals: &NormalMap, bin_deg: f64, prefilter: Option<&NormalPrefilter>) -> Result<NormalConsensus> {
    if !(1.0..=45.0).contains(&bin_deg) {
        return Err(Error::invalid(format!("bin width must be in [1, 45] degrees, got {bin_deg}")));
    }
    let guess = match prefilter {
        Some(p) => {
            let g = Vector3::from(p.guess);
            let len = g.norm();
            if !(len > 0.0) {
                return Err(Error::invalid("prefilter guess must be non-zero"));
            }
            Some((g / len, p.max_angle_deg.to_radians().cos()))
        }
        None => None,
    };

    let bins = SphereBins::new(bin_deg);
    let mut count = vec![0usize; bins.len()];
    let mut sum = vec![Vector3::zeros(); bins.len()];
    let mut depth_sum = vec![0.0f64; bins.len()];
    let mut total = 0usize;
    for (n, d) in normals.normals.iter().zip(&normals.origin_depth) {
        let Some(n) = n else { continue };
        if let Some((g, cos_max)) = guess {
            if n.dot(&g).abs() < cos_max {
                continue;
            }
        }
        let (b, member) = bins.index(&canonical(*n));
        count[b] += 1;
        sum[b] += member;
        depth_sum[b] += d;
        total += 1;
    }
    if total == 0 {
        return Err(Error::NoData("no surface normals to cluster".into()));
    }

    let mut best = 0;
    for b in 1..count.len() {
        if count[b] > count[best]
            || (count[b] == count[best]
                && count[b] > 0
                && depth_sum[b] / (count[b] as f64) < depth_sum[best] / (count[best] as f64))
        {
            best = b;
        }
    }
    let mut mean = sum[best].normalize();
    if mean.y > 0.0 {
        mean = -mean;
    }
    Ok(NormalConsensus {
        n_pred: [mean.x, mean.y, mean.z],
        support: count[best],
        inlier_fraction: count[best] as f64 / total as f64,
    })
}
