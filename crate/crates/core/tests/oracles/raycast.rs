//! Ray intersection by clipping against each face plane, written without the
//! slab formulation used by the generator.

use copg_core::synth::{ObjectSpec, Shape};

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Distance along `dir` from `origin` to the first face of a (yawed) box or
/// vertical cylinder, found by testing every face and keeping the nearest
/// hit point that lies on the solid's boundary.
pub fn first_hit(obj: &ObjectSpec, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
    let [px, py, pz] = obj.position;
    let h = obj.extents[2];
    let tol = 1e-9;
    let mut best: Option<f64> = None;
    let mut keep = |t: f64| {
        if t > 1e-9 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    match obj.shape {
        Shape::Box => {
            let (s, c) = obj.yaw.to_radians().sin_cos();
            let axes = [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]];
            let center = [px, py, pz + 0.5 * h];
            let half = [0.5 * obj.extents[0], 0.5 * obj.extents[1], 0.5 * h];
            for k in 0..3 {
                for sign in [-1.0, 1.0] {
                    let n = axes[k];
                    let plane_pt = [
                        center[0] + sign * half[k] * n[0],
                        center[1] + sign * half[k] * n[1],
                        center[2] + sign * half[k] * n[2],
                    ];
                    let denom = dot(dir, n);
                    if denom == 0.0 {
                        continue;
                    }
                    let t = dot(
                        [
                            plane_pt[0] - origin[0],
                            plane_pt[1] - origin[1],
                            plane_pt[2] - origin[2],
                        ],
                        n,
                    ) / denom;
                    let hit = [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]];
                    let rel = [hit[0] - center[0], hit[1] - center[1], hit[2] - center[2]];
                    let inside = (0..3).all(|j| j == k || dot(rel, axes[j]).abs() <= half[j] + tol);
                    if inside {
                        keep(t);
                    }
                }
            }
        }
        Shape::Cylinder => {
            let r = 0.5 * obj.extents[0];
            // Side: |(o + t d - p)_xy| = r.
            let (ox, oy) = (origin[0] - px, origin[1] - py);
            let a = dir[0] * dir[0] + dir[1] * dir[1];
            if a > 0.0 {
                let b = ox * dir[0] + oy * dir[1];
                let cc = ox * ox + oy * oy - r * r;
                let disc = b * b - a * cc;
                if disc >= 0.0 {
                    for t in [(-b - disc.sqrt()) / a, (-b + disc.sqrt()) / a] {
                        let z = origin[2] + t * dir[2];
                        if z >= pz - tol && z <= pz + h + tol {
                            keep(t);
                        }
                    }
                }
            }
            for cap in [pz, pz + h] {
                if dir[2] != 0.0 {
                    let t = (cap - origin[2]) / dir[2];
                    let (x, y) = (origin[0] + t * dir[0] - px, origin[1] + t * dir[1] - py);
                    if x.hypot(y) <= r + tol {
                        keep(t);
                    }
                }
            }
        }
    }
    best
}

/// Nearest surface along a ray: ground plane or any object.
pub fn nearest(objects: &[ObjectSpec], ground: f64, origin: [f64; 3], dir: [f64; 3]) -> Option<(f64, Option<usize>)> {
    let mut best: Option<(f64, Option<usize>)> = None;
    if dir[2] != 0.0 {
        let t = (ground - origin[2]) / dir[2];
        if t > 1e-9 {
            best = Some((t, None));
        }
    }
    for (i, o) in objects.iter().enumerate() {
        if let Some(t) = first_hit(o, origin, dir) {
            if best.is_none_or(|(b, _)| t < b) {
                best = Some((t, Some(i)));
            }
        }
    }
    best
}
