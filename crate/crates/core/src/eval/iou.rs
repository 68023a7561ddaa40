//! Rotated and axis-aligned 3D IoU.

use nalgebra::Vector2;

use crate::annotate::Box3D;

/// Area of a simple polygon (shoelace), positive for counter-clockwise order.
pub fn polygon_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - a.y * b.x
        })
        .sum::<f64>()
}

/// Sutherland–Hodgman clip of `subject` by the convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[Vector2<f64>], clip: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let edge = b - a;
        let side = |p: &Vector2<f64>| edge.x * (p.y - a.y) - edge.y * (p.x - a.x);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(&p), side(&q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push(p + (q - p) * t);
            }
        }
    }
    out
}

fn z_overlap(a: &Box3D, b: &Box3D) -> f64 {
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

fn iou_from(inter: f64, a: &Box3D, b: &Box3D) -> f64 {
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// IoU of two yaw-rotated boxes: bird's-eye polygon intersection times the
/// overlap of their z-intervals.
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    let h = z_overlap(a, b);
    if h <= 0.0 {
        return 0.0;
    }
    let area = polygon_area(&clip_convex(&a.bev_corners(), &b.bev_corners())).max(0.0);
    iou_from(area * h, a, b)
}

/// IoU treating both boxes as axis-aligned (yaw ignored, L along x).
pub fn iou3d_axis_aligned(a: &Box3D, b: &Box3D) -> f64 {
    let mut inter = 1.0;
    for k in 0..3 {
        let (ca, cb) = (a.center()[k], b.center()[k]);
        let (ha, hb) = (0.5 * a.dims()[k], 0.5 * b.dims()[k]);
        let overlap = ((ca + ha).min(cb + hb) - (ca - ha).max(cb - hb)).max(0.0);
        inter *= overlap;
    }
    iou_from(inter, a, b)
}
