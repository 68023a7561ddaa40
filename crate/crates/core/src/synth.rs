//! Procedural box-furnished rooms with exact depth, exact 2D boxes and known
//! 3D poses. Used for end-to-end benchmarks and fixtures.
//!
//! World frame: floor at z = 0, +Z up, walls at x ∈ {0, W} and y ∈ {0, D}.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotate::{Box2D, Box3D};
use crate::camera::{CameraModel, FovAxis};
use crate::depth::DepthImage;
use crate::error::{Error, Result};
use crate::eval::iou3d;
use crate::priors::SizePriorDB;
use crate::rotation::{rodrigues_alignment, Z_AXIS};

/// Nominal `[L, W, H]` of each generated category. Instances are scaled per
/// dimension by a factor in `[0.9, 1.1]`. All are shorter than the camera so
/// their top faces stay visible.
pub const CATEGORY_TEMPLATES: &[(&str, [f64; 3])] = &[
    ("bed", [2.0, 1.5, 0.55]),
    ("table", [1.2, 0.8, 0.75]),
    ("chair", [0.5, 0.5, 0.9]),
    ("sofa", [1.9, 0.9, 0.8]),
    ("cabinet", [0.9, 0.5, 1.1]),
    ("nightstand", [0.5, 0.45, 0.55]),
    ("desk", [1.4, 0.7, 0.75]),
    ("dresser", [1.1, 0.5, 0.9]),
];

/// The templates as a prior database.
pub fn template_priors() -> SizePriorDB {
    SizePriorDB::from_entries(
        CATEGORY_TEMPLATES.iter().map(|(n, d)| (n.to_string(), *d)),
        Some("synthetic room generator templates".into()),
    )
    .expect("templates are valid priors")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomGenerator {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Largest tolerated fraction of an object's pixels hidden by others.
    pub max_occlusion: f64,
    /// Fewest visible pixels an object may have.
    pub min_visible_px: usize,
    /// Minimum bird's-eye clearance between objects, and from walls.
    pub min_gap: f64,
    pub max_attempts: usize,
}

impl Default for RoomGenerator {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            fov_deg: 55.0,
            min_objects: 3,
            max_objects: 6,
            max_occlusion: 0.3,
            min_visible_px: 200,
            min_gap: 0.3,
            max_attempts: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// Intrinsics only; the depth is expressed in the camera frame.
    pub camera: CameraModel,
    pub depth: DepthImage,
    /// Index into `objects` of the surface seen at each pixel.
    pub object_ids: Vec<Option<usize>>,
    /// World-frame boxes.
    pub objects: Vec<Box3D>,
    /// Tight boxes around each object's visible pixels (half-open bounds).
    pub boxes2d: Vec<Box2D>,
    /// Columns are the camera's right, down and forward axes in the world.
    pub camera_rotation: Matrix3<f64>,
    pub camera_position: Vector3<f64>,
    pub room: [f64; 3],
}

impl SyntheticScene {
    /// World up expressed in the camera frame.
    pub fn floor_normal_camera(&self) -> Vector3<f64> {
        self.camera_rotation.transpose() * Z_AXIS
    }

    /// Rotation about world Z taking world boxes into the gravity-aligned
    /// camera-centred frame (camera frame rotated so the floor normal is +Z).
    fn aligned_yaw(&self) -> Result<f64> {
        let align = rodrigues_alignment(&self.floor_normal_camera(), &Z_AXIS)?;
        let m = align.matrix() * self.camera_rotation.transpose();
        Ok(m[(1, 0)].atan2(m[(0, 0)]))
    }

    /// Ground-truth boxes in the frame produced by lifting the depth with
    /// identity extrinsics and aligning the true floor normal to +Z.
    pub fn ground_truth_aligned(&self) -> Result<Vec<Box3D>> {
        let gamma = self.aligned_yaw()?;
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), gamma);
        let t = -(rz * self.camera_position);
        Ok(self.objects.iter().map(|b| b.rotated_about_z(gamma, &t)).collect())
    }
}

struct Shot {
    depth: Vec<f64>,
    ids: Vec<Option<usize>>,
    floor_px: usize,
    /// Pixels on upward- or downward-facing surfaces: floor, ceiling and
    /// object tops.
    level_px: usize,
    /// Pixels on walls and object sides.
    upright_px: usize,
    alone_px: Vec<usize>,
}

/// Ray/oriented-box intersection; returns the entry parameter.
fn hit_box(b: &Box3D, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let (s, c) = b.yaw().sin_cos();
    let rel = o - b.center();
    let lo = [c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z];
    let ld = [c * d.x + s * d.y, -s * d.x + c * d.y, d.z];
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        let h = 0.5 * b.dims()[k];
        if ld[k].abs() < 1e-15 {
            if lo[k].abs() > h {
                return None;
            }
            continue;
        }
        let a = (-h - lo[k]) / ld[k];
        let e = (h - lo[k]) / ld[k];
        t0 = t0.max(a.min(e));
        t1 = t1.min(a.max(e));
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

impl RoomGenerator {
    pub fn camera(&self) -> Result<CameraModel> {
        CameraModel::from_fov(self.width, self.height, self.fov_deg, FovAxis::Horizontal)
    }

    /// Deterministic scene for `seed`.
    pub fn generate(&self, seed: u64) -> Result<SyntheticScene> {
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::invalid("need 1 <= min_objects <= max_objects"));
        }
        let camera = self.camera()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..self.max_attempts {
            if let Some(scene) = self.attempt(&camera, &mut rng)? {
                return Ok(scene);
            }
        }
        Err(Error::NoData(format!(
            "no valid room after {} attempts for seed {seed}",
            self.max_attempts
        )))
    }

    fn attempt(&self, camera: &CameraModel, rng: &mut ChaCha8Rng) -> Result<Option<SyntheticScene>> {
        let room = [rng.random_range(5.0..8.0), rng.random_range(5.0..8.0), 2.8];
        let cam_pos = Vector3::new(room[0] * rng.random_range(0.4..0.6), 0.3, rng.random_range(1.5..1.7));
        let heading: f64 = rng.random_range(-15f64..15.0).to_radians();
        let pitch: f64 = rng.random_range(20f64..30.0).to_radians();
        let forward = Vector3::new(heading.sin() * pitch.cos(), heading.cos() * pitch.cos(), -pitch.sin());
        let right = forward.cross(&Z_AXIS).normalize();
        let down = forward.cross(&right);
        let r_wc = Matrix3::from_columns(&[right, down, forward]);

        let half_fov = camera.horizontal_fov_deg().to_radians() / 2.0;
        let count = rng.random_range(self.min_objects..=self.max_objects);
        let mut objects: Vec<Box3D> = Vec::with_capacity(count);
        for _ in 0..count {
            let (name, template) = CATEGORY_TEMPLATES[rng.random_range(0..CATEGORY_TEMPLATES.len())];
            let mut placed = false;
            for _ in 0..50 {
                let dims = template.map(|d| d * rng.random_range(0.9..1.1));
                let yaw = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
                let r = rng.random_range(1.6..4.2);
                let a = heading + rng.random_range(-half_fov..half_fov);
                let center = Vector3::new(cam_pos.x + r * a.sin(), cam_pos.y + r * a.cos(), 0.5 * dims[2]);
                let b = Box3D::new(center, dims, yaw, name, 1.0)?;
                if self.fits(&b, room, &objects)? {
                    objects.push(b);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Ok(None);
            }
        }
        if !objects.iter().all(|b| in_frame(b, camera, &r_wc, &cam_pos)) {
            return Ok(None);
        }

        let shot = cast(camera, &r_wc, &cam_pos, room, &objects);
        let mut boxes2d = Vec::with_capacity(objects.len());
        for (k, b) in objects.iter().enumerate() {
            let mut bounds = [usize::MAX, usize::MAX, 0, 0];
            let mut visible = 0;
            for (i, id) in shot.ids.iter().enumerate() {
                if *id == Some(k) {
                    let (u, v) = (i % self.width, i / self.width);
                    bounds = [bounds[0].min(u), bounds[1].min(v), bounds[2].max(u), bounds[3].max(v)];
                    visible += 1;
                }
            }
            let hidden = 1.0 - visible as f64 / shot.alone_px[k].max(1) as f64;
            if visible < self.min_visible_px || hidden > self.max_occlusion {
                return Ok(None);
            }
            let [u0, v0, u1, v1] = bounds.map(|x| x as f64);
            boxes2d.push(Box2D::new([u0, v0, u1 + 1.0, v1 + 1.0], b.category.clone(), 1.0)?);
        }
        let total = self.width * self.height;
        // Gravity alignment assumes the level surfaces form the dominant
        // orientation. They all share one normal, so outnumbering every
        // upright surface combined guarantees that under any binning.
        if shot.floor_px * 10 < total * 3 || shot.level_px <= shot.upright_px {
            return Ok(None);
        }
        Ok(Some(SyntheticScene {
            camera: camera.clone(),
            depth: DepthImage::from_depths(self.width, self.height, shot.depth)?,
            object_ids: shot.ids,
            objects,
            boxes2d,
            camera_rotation: r_wc,
            camera_position: cam_pos,
            room,
        }))
    }

    /// Inside the room with clearance, and clear of every placed object.
    fn fits(&self, b: &Box3D, room: [f64; 3], placed: &[Box3D]) -> Result<bool> {
        let g = self.min_gap;
        let inside = b
            .bev_corners()
            .iter()
            .all(|c| c.x >= g && c.x <= room[0] - g && c.y >= g && c.y <= room[1] - g);
        if !inside {
            return Ok(false);
        }
        // Growing both footprints by g/2 and requiring no overlap keeps the
        // true separation at least g.
        let grow = |x: &Box3D| {
            let [l, w, _] = x.dims();
            Box3D::new(Vector3::new(x.center().x, x.center().y, 0.5), [l + g, w + g, 1.0], x.yaw(), "", 1.0)
        };
        let gb = grow(b)?;
        for p in placed {
            if iou3d(&gb, &grow(p)?) > 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Every corner in front of the camera and at least one pixel inside the border.
fn in_frame(b: &Box3D, camera: &CameraModel, r_wc: &Matrix3<f64>, cam_pos: &Vector3<f64>) -> bool {
    let (z0, z1) = b.z_range();
    b.bev_corners().iter().all(|c| {
        [z0, z1].iter().all(|&z| {
            let p = r_wc.transpose() * (Vector3::new(c.x, c.y, z) - cam_pos);
            if p.z <= 0.1 {
                return false;
            }
            let u = camera.fx() * p.x / p.z + camera.cx();
            let v = camera.fy() * p.y / p.z + camera.cy();
            u >= 1.0 && v >= 1.0 && u <= camera.width() as f64 - 2.0 && v <= camera.height() as f64 - 2.0
        })
    })
}

/// Ray casts every pixel. The ray through pixel (u, v) is scaled so its
/// camera-frame z component is 1, making the hit parameter the z-depth.
fn cast(camera: &CameraModel, r_wc: &Matrix3<f64>, o: &Vector3<f64>, room: [f64; 3], objects: &[Box3D]) -> Shot {
    let (w, h) = (camera.width(), camera.height());
    let mut shot = Shot {
        depth: vec![0.0; w * h],
        ids: vec![None; w * h],
        floor_px: 0,
        level_px: 0,
        upright_px: 0,
        alone_px: vec![0; objects.len()],
    };
    for v in 0..h {
        for u in 0..w {
            let ray_c = Vector3::new((u as f64 - camera.cx()) / camera.fx(), (v as f64 - camera.cy()) / camera.fy(), 1.0);
            let d = r_wc * ray_c;
            // The camera is inside the room, so the ray leaves through the
            // nearest plane it is heading towards.
            let mut best = f64::INFINITY;
            let mut surface = None;
            let planes = [(2, 0.0), (2, room[2]), (0, 0.0), (0, room[0]), (1, 0.0), (1, room[1])];
            for (k, (axis, at)) in planes.into_iter().enumerate() {
                if d[axis].abs() > 1e-15 {
                    let t = (at - o[axis]) / d[axis];
                    if t > 0.0 && t < best {
                        best = t;
                        surface = Some(k);
                    }
                }
            }
            let mut id = None;
            for (k, b) in objects.iter().enumerate() {
                if let Some(t) = hit_box(b, o, &d) {
                    shot.alone_px[k] += 1;
                    if t < best {
                        best = t;
                        id = Some(k);
                    }
                }
            }
            let i = v * w + u;
            shot.depth[i] = best;
            shot.ids[i] = id;
            match id {
                None => match surface {
                    Some(0) => {
                        shot.floor_px += 1;
                        shot.level_px += 1;
                    }
                    Some(1) => shot.level_px += 1,
                    Some(_) => shot.upright_px += 1,
                    None => {}
                },
                Some(k) => {
                    let top = objects[k].z_range().1;
                    if (o.z + best * d.z - top).abs() < 1e-9 {
                        shot.level_px += 1;
                    } else {
                        shot.upright_px += 1;
                    }
                }
            }
        }
    }
    shot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::lift_depth;

    fn small() -> RoomGenerator {
        RoomGenerator {
            width: 160,
            height: 120,
            min_visible_px: 60,
            ..RoomGenerator::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let g = small();
        assert_eq!(g.generate(7).unwrap(), g.generate(7).unwrap());
        assert_ne!(g.generate(7).unwrap().objects, g.generate(8).unwrap().objects);
    }

    #[test]
    fn object_pixels_lie_on_their_boxes() {
        let s = small().generate(3).unwrap();
        assert!((3..=6).contains(&s.objects.len()));
        let cloud = lift_depth(&s.depth, &s.camera).unwrap();
        for (p, [u, v]) in cloud.points().iter().zip(cloud.provenance().unwrap()) {
            let i = *v as usize * s.depth.width() + *u as usize;
            let world = s.camera_rotation * p + s.camera_position;
            if let Some(k) = s.object_ids[i] {
                assert!(s.objects[k].contains(&world, 1e-6));
                assert!(s.boxes2d[k].contains_pixel(*u, *v));
            } else {
                assert!(s.objects.iter().all(|b| !b.contains(&world, -1e-6)));
            }
        }
    }

    #[test]
    fn aligned_ground_truth_matches_aligned_points() {
        let s = small().generate(11).unwrap();
        let align = rodrigues_alignment(&s.floor_normal_camera(), &Z_AXIS).unwrap();
        let cloud = lift_depth(&s.depth, &s.camera).unwrap();
        let gt = s.ground_truth_aligned().unwrap();
        for (p, [u, v]) in cloud.points().iter().zip(cloud.provenance().unwrap()) {
            if let Some(k) = s.object_ids[*v as usize * s.depth.width() + *u as usize] {
                assert!(gt[k].contains(&align.apply(p), 1e-6));
            }
        }
        // Floor points sit at -camera height.
        let n = s.floor_normal_camera();
        let floor_z = (align.matrix() * (-s.camera_position.z * n)).z;
        assert!((floor_z + s.camera_position.z).abs() < 1e-9);
    }
}
