//! Small geometric helpers shared across the pipeline.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Axis-aligned box given by its min and max corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }
}

/// Returns an orthonormal pair spanning the plane perpendicular to `axis`.
pub fn orthonormal_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let a = axis.normalize();
    let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = (helper - a * helper.dot(&a)).normalize();
    let v = a.cross(&u);
    (u, v)
}

/// Parameter `t >= 0` where the line `origin + t*dir` meets the plane, if any.
pub(crate) fn ray_plane(origin: &Vec3, dir: &Vec3, point: &Vec3, normal: &Vec3) -> Option<f64> {
    let denom = dir.dot(normal);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = (point - origin).dot(normal) / denom;
    if t >= 0.0 {
        Some(t)
    } else {
        None
    }
}
