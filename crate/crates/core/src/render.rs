//! Z-buffered point rendering, per-view visibility, partial-view removal and
//! viewpoint search.

use nalgebra::{Rotation3, Unit, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::cloud::PointCloud;
use crate::depth::DepthImage;
use crate::error::{Error, Result};

/// Sweep angles in degrees: -75 to 75 in 15 degree steps.
pub const SWEEP_ANGLES: [f64; 11] = [-75.0, -60.0, -45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0, 60.0, 75.0];

/// Camera orbited about the cloud centroid relative to a base pose.
///
/// `theta_h` turns about world +Z, then `theta_v` about the (turned) camera
/// right axis; both in degrees within (-180, 180].
#[derive(Debug, Clone, PartialEq)]
pub struct Viewpoint {
    theta_h: f64,
    theta_v: f64,
    base: CameraModel,
}

impl Viewpoint {
    pub fn new(theta_h: f64, theta_v: f64, base: CameraModel) -> Result<Self> {
        for (name, a) in [("theta_h", theta_h), ("theta_v", theta_v)] {
            if !(a > -180.0 && a <= 180.0) {
                return Err(Error::invalid(format!("{name} = {a} outside (-180, 180]")));
            }
        }
        Ok(Self { theta_h, theta_v, base })
    }

    pub fn base_view(base: CameraModel) -> Self {
        Self {
            theta_h: 0.0,
            theta_v: 0.0,
            base,
        }
    }

    pub fn theta_h(&self) -> f64 {
        self.theta_h
    }

    pub fn theta_v(&self) -> f64 {
        self.theta_v
    }

    pub fn base(&self) -> &CameraModel {
        &self.base
    }

    pub fn angles(&self) -> (f64, f64) {
        (self.theta_h, self.theta_v)
    }

    /// Camera for this viewpoint when orbiting about `pivot`.
    pub fn camera(&self, pivot: &Vector3<f64>) -> CameraModel {
        if self.theta_h == 0.0 && self.theta_v == 0.0 {
            return self.base.clone();
        }
        let turn_h = Rotation3::from_axis_angle(&Vector3::z_axis(), self.theta_h.to_radians());
        let right = turn_h * (self.base.rotation() * Vector3::x());
        let turn_v = Rotation3::from_axis_angle(&Unit::new_normalize(right), self.theta_v.to_radians());
        let q = (turn_v * turn_h).into_inner();
        let rotation = q * self.base.rotation();
        let translation = pivot + q * (self.base.translation() - pivot);
        self.base
            .clone()
            .with_extrinsics(rotation, translation)
            .expect("product of rotations is a rotation")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ViewpointRecord {
    pub theta_h: f64,
    pub theta_v: f64,
}

impl From<&Viewpoint> for ViewpointRecord {
    fn from(v: &Viewpoint) -> Self {
        Self {
            theta_h: v.theta_h,
            theta_v: v.theta_v,
        }
    }
}

/// Splats each point as a `splat_px`-wide square, keeping the nearest depth
/// per pixel. Uncovered pixels are invalid.
pub fn render_depth(cloud: &PointCloud, camera: &CameraModel, splat_px: usize) -> Result<DepthImage> {
    if splat_px == 0 || splat_px.is_multiple_of(2) {
        return Err(Error::invalid(format!("splat size must be odd and >= 1, got {splat_px}")));
    }
    let (w, h) = (camera.width(), camera.height());
    let half = (splat_px / 2) as i64;
    let mut zbuf = vec![f64::INFINITY; w * h];
    for p in cloud.points() {
        let Some((u, v, z)) = camera.project_point(p).in_front() else {
            continue;
        };
        let cu = (u + 0.5).floor();
        let cv = (v + 0.5).floor();
        if !(cu.is_finite() && cv.is_finite()) {
            continue;
        }
        let (cu, cv) = (cu as i64, cv as i64);
        for y in (cv - half).max(0)..=(cv + half).min(h as i64 - 1) {
            for x in (cu - half).max(0)..=(cu + half).min(w as i64 - 1) {
                let i = y as usize * w + x as usize;
                if z < zbuf[i] {
                    zbuf[i] = z;
                }
            }
        }
    }
    let valid: Vec<bool> = zbuf.iter().map(|z| z.is_finite()).collect();
    let depths = zbuf.into_iter().map(|z| if z.is_finite() { z } else { 0.0 }).collect();
    DepthImage::from_parts(w, h, depths, valid)
}

/// Partition of point indices by visibility from one viewpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VisibilityResult {
    pub visible: Vec<usize>,
    pub occluded: Vec<usize>,
    pub out_of_frame: Vec<usize>,
}

/// Visibility against a single-pixel z-buffer at the base camera resolution:
/// a point is visible iff it lands in frame in front of the camera and its
/// depth is within `depth_tol` of the nearest depth at its pixel.
pub fn visible_set(cloud: &PointCloud, view: &Viewpoint, depth_tol: f64) -> Result<VisibilityResult> {
    if !(depth_tol > 0.0) {
        return Err(Error::invalid(format!("depth tolerance must be positive, got {depth_tol}")));
    }
    let camera = view.camera(&cloud.centroid());
    let w = camera.width();
    let hits: Vec<Option<(usize, f64)>> = cloud
        .points()
        .iter()
        .map(|p| {
            let (u, v, z) = camera.project_point(p).in_front()?;
            let (pu, pv) = camera.pixel_at(u, v)?;
            Some((pv * w + pu, z))
        })
        .collect();
    let mut zbuf = vec![f64::INFINITY; w * camera.height()];
    for &(i, z) in hits.iter().flatten() {
        if z < zbuf[i] {
            zbuf[i] = z;
        }
    }
    let mut out = VisibilityResult::default();
    for (k, hit) in hits.iter().enumerate() {
        match hit {
            None => out.out_of_frame.push(k),
            Some((i, z)) if *z <= zbuf[*i] + depth_tol => out.visible.push(k),
            Some(_) => out.occluded.push(k),
        }
    }
    Ok(out)
}

/// Points visible from `view_a` but not from `view_b`, as a sub-cloud.
pub fn partial_view_removal(cloud: &PointCloud, view_a: &Viewpoint, view_b: &Viewpoint, depth_tol: f64) -> Result<PointCloud> {
    partial_view_removal_with_tolerances(cloud, view_a, view_b, depth_tol, depth_tol)
}

pub fn partial_view_removal_with_tolerances(
    cloud: &PointCloud,
    view_a: &Viewpoint,
    view_b: &Viewpoint,
    tol_a: f64,
    tol_b: f64,
) -> Result<PointCloud> {
    let seen_a = visible_set(cloud, view_a, tol_a)?.visible;
    let seen_b = visible_set(cloud, view_b, tol_b)?.visible;
    Ok(cloud.select(&difference(&seen_a, &seen_b, cloud.len())))
}

/// `a - b` for ascending index lists over `0..n`.
fn difference(a: &[usize], b: &[usize], n: usize) -> Vec<usize> {
    let mut in_b = vec![false; n];
    for &i in b {
        in_b[i] = true;
    }
    a.iter().copied().filter(|&i| !in_b[i]).collect()
}

/// The 11 x 11 grid of (theta_h, theta_v) pairs, theta_h-major.
pub fn angle_sweep() -> Vec<(f64, f64)> {
    SWEEP_ANGLES
        .iter()
        .flat_map(|&h| SWEEP_ANGLES.iter().map(move |&v| (h, v)))
        .collect()
}

/// Valid pixels over the area of their tight bounding rectangle; 0 when empty.
pub fn compactness(image: &DepthImage) -> f64 {
    let (w, h) = (image.width(), image.height());
    let mask = image.valid_mask();
    let (mut u0, mut u1, mut v0, mut v1) = (usize::MAX, 0, usize::MAX, 0);
    let mut count = 0usize;
    for v in 0..h {
        for u in 0..w {
            if mask[v * w + u] {
                count += 1;
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
        }
    }
    if count == 0 {
        return 0.0;
    }
    count as f64 / ((u1 - u0 + 1) * (v1 - v0 + 1)) as f64
}

#[derive(Debug, Clone)]
pub struct CompactView {
    pub view: Viewpoint,
    pub image: DepthImage,
    /// Compactness of every candidate, in candidate order.
    pub scores: Vec<f64>,
}

/// Renders every candidate and returns the most compact one. Ties prefer the
/// smaller `|theta_h| + |theta_v|`, then the earlier candidate.
pub fn best_compact_view(cloud: &PointCloud, candidates: &[Viewpoint], splat_px: usize) -> Result<CompactView> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate viewpoints"));
    }
    let pivot = cloud.centroid();
    let renders: Vec<(DepthImage, f64)> = candidates
        .par_iter()
        .map(|c| {
            let img = render_depth(cloud, &c.camera(&pivot), splat_px)?;
            let s = compactness(&img);
            Ok((img, s))
        })
        .collect::<Result<_>>()?;
    let magnitude = |v: &Viewpoint| v.theta_h.abs() + v.theta_v.abs();
    let mut best = 0;
    for (k, (_, s)) in renders.iter().enumerate().skip(1) {
        let bs = renders[best].1;
        if *s > bs || (*s == bs && magnitude(&candidates[k]) < magnitude(&candidates[best])) {
            best = k;
        }
    }
    for (c, (_, s)) in candidates.iter().zip(&renders) {
        tracing::debug!(theta_h = c.theta_h, theta_v = c.theta_v, compactness = s, "compact-view candidate");
    }
    let scores = renders.iter().map(|(_, s)| *s).collect();
    let image = renders.into_iter().nth(best).expect("best index in range").0;
    Ok(CompactView {
        view: candidates[best].clone(),
        image,
        scores,
    })
}

/// Sweep viewpoints around `base`.
pub fn sweep_viewpoints(base: &CameraModel) -> Vec<Viewpoint> {
    angle_sweep()
        .into_iter()
        .map(|(h, v)| Viewpoint::new(h, v, base.clone()).expect("sweep angles in range"))
        .collect()
}

/// Depth renders from every sweep viewpoint.
pub fn sweep_renders(cloud: &PointCloud, base: &CameraModel, splat_px: usize) -> Result<Vec<(Viewpoint, DepthImage)>> {
    let pivot = cloud.centroid();
    sweep_viewpoints(base)
        .into_par_iter()
        .map(|v| {
            let img = render_depth(cloud, &v.camera(&pivot), splat_px)?;
            Ok((v, img))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub depth_tol: f64,
    pub splat_px: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            depth_tol: 0.05,
            splat_px: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PartialRender {
    /// The second viewpoint whose shared points were removed.
    pub removed_view: Viewpoint,
    pub image: DepthImage,
    pub remaining_points: usize,
}

/// One base-view render per non-identity sweep pair, with the points also
/// seen from that pair removed.
pub fn make_training_renders(cloud: &PointCloud, base: &CameraModel, params: &RenderParams) -> Result<Vec<PartialRender>> {
    let base_view = Viewpoint::base_view(base.clone());
    let seen_base = visible_set(cloud, &base_view, params.depth_tol)?.visible;
    sweep_viewpoints(base)
        .into_par_iter()
        .filter(|v| v.angles() != (0.0, 0.0))
        .map(|v| {
            let seen_b = visible_set(cloud, &v, params.depth_tol)?.visible;
            let kept = cloud.select(&difference(&seen_base, &seen_b, cloud.len()));
            let image = render_depth(&kept, base, params.splat_px)?;
            Ok(PartialRender {
                removed_view: v,
                image,
                remaining_points: kept.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::intrinsics_from_fov;
    use crate::depth::lift_depth;

    fn cam() -> CameraModel {
        intrinsics_from_fov(32, 24, 55.0).unwrap()
    }

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Vector3::from(*p)).collect()).unwrap()
    }

    #[test]
    fn single_point_splat() {
        let img = render_depth(&cloud(&[[0.0, 0.0, 2.0]]), &cam(), 3).unwrap();
        assert_eq!(img.valid_count(), 9);
        for v in 11..=13 {
            for u in 15..=17 {
                assert_eq!(img.get(u, v), Some(2.0));
            }
        }
    }

    #[test]
    fn zbuffer_keeps_nearest() {
        let img = render_depth(&cloud(&[[0.0, 0.0, 3.0], [0.0, 0.0, 1.0]]), &cam(), 1).unwrap();
        assert_eq!(img.get(16, 12), Some(1.0));
        assert_eq!(img.valid_count(), 1);
    }

    #[test]
    fn empty_cloud_renders_invalid() {
        let img = render_depth(&PointCloud::empty(), &cam(), 3).unwrap();
        assert_eq!(img.valid_count(), 0);
        assert!(render_depth(&PointCloud::empty(), &cam(), 2).is_err());
    }

    #[test]
    fn lift_render_identity() {
        let mut depths = vec![0.0; 32 * 24];
        for (i, d) in depths.iter_mut().enumerate() {
            if i % 3 != 0 {
                *d = 1.0 + (i % 17) as f64 * 0.25;
            }
        }
        let img = DepthImage::from_depths(32, 24, depths).unwrap();
        let back = render_depth(&lift_depth(&img, &cam()).unwrap(), &cam(), 1).unwrap();
        assert_eq!(back.valid_mask(), img.valid_mask());
        for (a, b) in back.depths().iter().zip(img.depths()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn visibility_cases() {
        let base = Viewpoint::base_view(cam());
        let r = visible_set(&cloud(&[[0.0, 0.0, 2.0]]), &base, 0.05).unwrap();
        assert_eq!(r.visible, vec![0]);

        let r = visible_set(&cloud(&[[0.0, 0.0, 3.0], [0.0, 0.0, 2.0]]), &base, 0.05).unwrap();
        assert_eq!(r.visible, vec![1]);
        assert_eq!(r.occluded, vec![0]);

        let r = visible_set(&cloud(&[[0.0, 0.0, -1.0], [100.0, 0.0, 1.0]]), &base, 0.05).unwrap();
        assert_eq!(r.out_of_frame, vec![0, 1]);
        assert!(visible_set(&PointCloud::empty(), &base, 0.0).is_err());
    }

    #[test]
    fn same_view_removes_everything() {
        let c = cloud(&[[0.0, 0.0, 2.0], [0.1, 0.0, 2.5], [0.0, 0.0, 3.0]]);
        let a = Viewpoint::base_view(cam());
        assert!(partial_view_removal(&c, &a, &a, 0.05).unwrap().is_empty());
    }

    #[test]
    fn view_seeing_nothing_keeps_view_a() {
        let c = cloud(&[[0.0, 0.0, 2.0], [0.1, 0.0, 2.5], [0.0, 0.0, 3.0]]);
        let a = Viewpoint::base_view(cam());
        // Camera at the origin looking down -Z: every point is behind it.
        let away = cam()
            .with_extrinsics(*Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI).matrix(), Vector3::zeros())
            .unwrap();
        let b = Viewpoint::base_view(away);
        let vis_a = visible_set(&c, &a, 0.05).unwrap().visible;
        let out = partial_view_removal(&c, &a, &b, 0.05).unwrap();
        assert_eq!(out, c.select(&vis_a));
    }

    #[test]
    fn sweep_grid() {
        let s = angle_sweep();
        assert_eq!(s.len(), 121);
        assert_eq!(s[0], (-75.0, -75.0));
        assert_eq!(s[1], (-75.0, -60.0));
        assert_eq!(s[120], (75.0, 75.0));
        assert_eq!(SWEEP_ANGLES[5], 0.0);
        for (k, a) in SWEEP_ANGLES.iter().enumerate() {
            assert_eq!(*a, -75.0 + 15.0 * k as f64);
        }
        assert_eq!(angle_sweep(), s);
    }

    #[test]
    fn viewpoint_range() {
        assert!(Viewpoint::new(-180.0, 0.0, cam()).is_err());
        assert!(Viewpoint::new(180.0, 0.0, cam()).is_ok());
        assert!(Viewpoint::new(0.0, 181.0, cam()).is_err());
    }

    #[test]
    fn orbit_keeps_pivot_distance_and_looks_at_it() {
        let pivot = Vector3::new(0.0, 0.0, 3.0);
        let base = cam();
        for (h, v) in [(30.0, 0.0), (0.0, 45.0), (-75.0, 60.0)] {
            let c = Viewpoint::new(h, v, base.clone()).unwrap().camera(&pivot);
            assert!(((c.translation() - pivot).norm() - 3.0).abs() < 1e-12);
            let (u, vv, _) = c.project_point(&pivot).in_front().unwrap();
            assert!((u - base.cx()).abs() < 1e-9 && (vv - base.cy()).abs() < 1e-9);
        }
    }

    #[test]
    fn compact_single_and_ties() {
        let c = cloud(&[[0.0, 0.0, 2.0]]);
        let only = vec![Viewpoint::new(30.0, 15.0, cam()).unwrap()];
        assert_eq!(best_compact_view(&c, &only, 1).unwrap().view.angles(), (30.0, 15.0));
        // A single point always fills its 1x1 rectangle: all scores equal.
        let cands: Vec<Viewpoint> = [(45.0, 0.0), (15.0, -15.0), (0.0, 15.0)]
            .iter()
            .map(|&(h, v)| Viewpoint::new(h, v, cam()).unwrap())
            .collect();
        let best = best_compact_view(&c, &cands, 1).unwrap();
        assert_eq!(best.scores, vec![1.0; 3]);
        assert_eq!(best.view.angles(), (0.0, 15.0));
        assert!(best_compact_view(&c, &[], 1).is_err());
    }

    #[test]
    fn training_renders_subset_of_base() {
        let mut pts = vec![];
        for i in 0..20 {
            for j in 0..20 {
                pts.push([i as f64 * 0.1 - 1.0, j as f64 * 0.1 - 1.0, 3.0 + 0.05 * ((i + j) % 4) as f64]);
            }
        }
        let c = cloud(&pts);
        let out = make_training_renders(&c, &cam(), &RenderParams::default()).unwrap();
        assert_eq!(out.len(), 120);
        let base = render_depth(&c, &cam(), 3).unwrap();
        for r in &out {
            for (a, b) in r.image.valid_mask().iter().zip(base.valid_mask()) {
                assert!(!a || *b);
            }
        }
        let empty = make_training_renders(&PointCloud::empty(), &cam(), &RenderParams::default()).unwrap();
        assert_eq!(empty.len(), 120);
        assert!(empty.iter().all(|r| r.image.valid_count() == 0));
    }
}
