//! Oriented box fitting: minimum-area bird's-eye rectangle plus z extent.

use nalgebra::{Vector2, Vector3};

use super::Box3D;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Convex hull of `pts` in counter-clockwise order with collinear points
/// dropped (Andrew's monotone chain).
pub fn convex_hull(pts: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut sorted: Vec<Vector2<f64>> = pts.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    sorted.dedup();
    if sorted.len() < 3 {
        return sorted;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * sorted.len());
    for p in &sorted {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    // The upper chain must not pop points of the finished lower chain.
    let lower = hull.len() + 1;
    for p in sorted.iter().rev().skip(1) {
        while hull.len() >= lower && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// Minimum-area enclosing rectangle found by rotating calipers over the hull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinAreaRect {
    pub center: Vector2<f64>,
    /// Extent along `angle` and along `angle + 90°`.
    pub extents: [f64; 2],
    /// Edge direction in radians, in `[0, π/2)`.
    pub angle: f64,
}

pub fn min_area_rect(hull: &[Vector2<f64>]) -> Option<MinAreaRect> {
    if hull.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, MinAreaRect)> = None;
    for i in 0..hull.len() {
        let edge = hull[(i + 1) % hull.len()] - hull[i];
        let len = edge.norm();
        if len == 0.0 {
            continue;
        }
        let dir = edge / len;
        let perp = Vector2::new(-dir.y, dir.x);
        let (mut a0, mut a1, mut b0, mut b1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in hull {
            let a = p.dot(&dir);
            let b = p.dot(&perp);
            a0 = a0.min(a);
            a1 = a1.max(a);
            b0 = b0.min(b);
            b1 = b1.max(b);
        }
        let area = (a1 - a0) * (b1 - b0);
        if best.as_ref().is_some_and(|(best_area, _)| area >= *best_area) {
            continue;
        }
        let center = dir * (0.5 * (a0 + a1)) + perp * (0.5 * (b0 + b1));
        // Fold the edge direction into [0, π/2), swapping extents on odd quarter turns.
        let raw = dir.y.atan2(dir.x);
        let quarter = (raw / std::f64::consts::FRAC_PI_2).floor();
        let mut angle = raw - quarter * std::f64::consts::FRAC_PI_2;
        let mut extents = [a1 - a0, b1 - b0];
        if (quarter as i64).rem_euclid(2) == 1 {
            extents.swap(0, 1);
        }
        if angle >= std::f64::consts::FRAC_PI_2 {
            angle = 0.0;
            extents.swap(0, 1);
        }
        best = Some((area, MinAreaRect { center, extents, angle }));
    }
    best.map(|(_, r)| r)
}

/// Tight yaw-only box around `cloud`; category and score are left empty.
///
/// The long side of the bird's-eye rectangle defines L and the yaw; square
/// footprints keep the rectangle's own edge angle.
pub fn fit_box(cloud: &PointCloud) -> Result<Box3D> {
    let pts = cloud.points();
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "need at least 3 points to fit a box, got {}",
            pts.len()
        )));
    }
    let xy: Vec<Vector2<f64>> = pts.iter().map(|p| p.xy()).collect();
    let hull = convex_hull(&xy);
    let rect = min_area_rect(&hull)
        .ok_or_else(|| Error::DegenerateGeometry("points are collinear in the ground plane".into()))?;
    let (zmin, zmax) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
    let height = zmax - zmin;
    let [e0, e1] = rect.extents;
    if !(e0 > 0.0 && e1 > 0.0 && height > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "fitted box has zero extent ({e0}, {e1}, {height})"
        )));
    }
    let (length, width, yaw) = if e0 >= e1 * (1.0 - 1e-12) {
        (e0, e1, rect.angle)
    } else {
        (e1, e0, rect.angle - std::f64::consts::FRAC_PI_2)
    };
    Box3D::new(
        Vector3::new(rect.center.x, rect.center.y, 0.5 * (zmin + zmax)),
        [length, width, height],
        yaw,
        String::new(),
        0.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn cube_corners() -> Vec<Vector3<f64>> {
        (0..8)
            .map(|m| Vector3::new((m & 1) as f64, ((m >> 1) & 1) as f64, ((m >> 2) & 1) as f64))
            .collect()
    }

    /// Exhaustive search over yaw in 0.01° steps for the smallest enclosing
    /// rectangle; returns (angle in degrees within [0, 90), area).
    fn brute_force_yaw(pts: &[Vector3<f64>]) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for step in 0..9000 {
            let a = (step as f64 * 0.01).to_radians();
            let (c, s) = (a.cos(), a.sin());
            let (mut lo0, mut hi0, mut lo1, mut hi1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for p in pts {
                let u = c * p.x + s * p.y;
                let v = -s * p.x + c * p.y;
                lo0 = lo0.min(u);
                hi0 = hi0.max(u);
                lo1 = lo1.min(v);
                hi1 = hi1.max(v);
            }
            let area = (hi0 - lo0) * (hi1 - lo1);
            if area < best.1 {
                best = (step as f64 * 0.01, area);
            }
        }
        best
    }

    #[test]
    fn axis_aligned_unit_cube() {
        let b = fit_box(&PointCloud::new(cube_corners()).unwrap()).unwrap();
        assert_abs_diff_eq!(b.center(), Vector3::new(0.5, 0.5, 0.5), epsilon = 1e-12);
        assert_abs_diff_eq!(b.dims()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.dims()[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.dims()[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.yaw(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rotated_cube_recovers_thirty_degrees() {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians());
        let pts: Vec<Vector3<f64>> = cube_corners().iter().map(|p| rot * p).collect();
        let (oracle_deg, oracle_area) = brute_force_yaw(&pts);
        assert_abs_diff_eq!(oracle_deg, 30.0, epsilon = 0.01);
        let b = fit_box(&PointCloud::new(pts).unwrap()).unwrap();
        assert_abs_diff_eq!(b.yaw().to_degrees(), 30.0, epsilon = 1e-6);
        for d in b.dims() {
            assert_abs_diff_eq!(d, 1.0, epsilon = 1e-9);
        }
        assert!(b.dims()[0] * b.dims()[1] <= oracle_area + 1e-9);
    }

    #[test]
    fn long_side_defines_yaw() {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 100f64.to_radians());
        let pts: Vec<Vector3<f64>> = cube_corners()
            .iter()
            .map(|p| rot * Vector3::new(p.x * 3.0, p.y, p.z * 0.5))
            .collect();
        let b = fit_box(&PointCloud::new(pts).unwrap()).unwrap();
        assert_abs_diff_eq!(b.dims()[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.dims()[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.dims()[2], 0.5, epsilon = 1e-12);
        // 100° folds to -80° under the 180° box symmetry.
        assert_abs_diff_eq!(b.yaw().to_degrees(), -80.0, epsilon = 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        let two = PointCloud::new(vec![Vector3::zeros(), Vector3::x()]).unwrap();
        assert!(matches!(fit_box(&two), Err(Error::DegenerateGeometry(_))));
        let line = PointCloud::new((0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, i as f64)).collect()).unwrap();
        assert!(matches!(fit_box(&line), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn hull_drops_interior_and_collinear() {
        let pts = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(2.0, 0.0),
            Vector2::new(2.0, 2.0),
            Vector2::new(0.0, 2.0),
            Vector2::new(1.0, 1.0),
        ];
        assert_eq!(convex_hull(&pts).len(), 4);
    }

    proptest! {
        #[test]
        fn encloses_points_and_beats_aabb(
            pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -1.0f64..1.0), 4..60),
        ) {
            let pts: Vec<Vector3<f64>> = pts.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect();
            let cloud = PointCloud::new(pts.clone()).unwrap();
            let Ok(b) = fit_box(&cloud) else { return Ok(()) };
            for p in &pts {
                prop_assert!(b.contains(p, 1e-9));
            }
            let lo = pts.iter().fold(Vector3::repeat(f64::MAX), |a, p| a.inf(p));
            let hi = pts.iter().fold(Vector3::repeat(f64::MIN), |a, p| a.sup(p));
            let aabb = (hi - lo).product();
            prop_assert!(b.volume() <= aabb * (1.0 + 1e-12));
            prop_assert!(b.dims()[0] >= b.dims()[1]);
            prop_assert!(b.yaw() >= -std::f64::consts::FRAC_PI_2 && b.yaw() < std::f64::consts::FRAC_PI_2);
        }
    }
}
