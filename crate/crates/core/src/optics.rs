//! Sequential optics: exact spherical refraction, mirrors, stops and an
//! ideal thin lens.
//!
//! Signed radius convention: a positive radius puts the centre of curvature
//! downstream of the vertex (along the surface axis). Planar surfaces use an
//! infinite radius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ray_plane, Vec3};
use crate::raygen::{ApertureDisk, Ray};

/// Rejects hits closer than this to the ray origin, so a ray leaving a
/// surface does not re-intersect it.
const SELF_HIT_EPS: f64 = 1e-12;

/// Why a ray stopped before reaching the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    /// Outside a stop's opening or parallel to its plane.
    Aperture,
    /// Missed a lens surface (outside its clear aperture or no forward hit).
    LensMiss,
    TotalInternalReflection,
    MirrorMiss,
    SensorMiss,
}

impl BlockReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            BlockReason::Aperture => "aperture",
            BlockReason::LensMiss => "lens_miss",
            BlockReason::TotalInternalReflection => "tir",
            BlockReason::MirrorMiss => "mirror_miss",
            BlockReason::SensorMiss => "sensor_miss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalSurface {
    pub vertex: Vec3,
    /// Unit optical axis at the vertex, pointing downstream.
    pub axis: Vec3,
    /// Signed radius of curvature, m; infinite for a plane.
    pub radius: f64,
    pub aperture_radius: f64,
    pub n_before: f64,
    pub n_after: f64,
}

impl SphericalSurface {
    pub fn new(vertex: Vec3, axis: Vec3, radius: f64, aperture_radius: f64, n_before: f64, n_after: f64) -> Result<Self> {
        if !(aperture_radius > 0.0) {
            return Err(Error::Invalid("surface aperture radius must be > 0".into()));
        }
        if radius.is_finite() && radius.abs() <= aperture_radius {
            return Err(Error::Invalid(format!(
                "|radius| {} must exceed the aperture radius {aperture_radius}",
                radius.abs()
            )));
        }
        if radius == 0.0 || !(n_before > 0.0 && n_after > 0.0) {
            return Err(Error::Invalid("surface needs non-zero radius and positive indices".into()));
        }
        Ok(Self {
            vertex,
            axis: axis.normalize(),
            radius,
            aperture_radius,
            n_before,
            n_after,
        })
    }

    pub fn is_planar(&self) -> bool {
        !self.radius.is_finite()
    }

    pub fn center(&self) -> Option<Vec3> {
        (!self.is_planar()).then(|| self.vertex + self.axis * self.radius)
    }

    fn lateral_distance(&self, p: &Vec3) -> f64 {
        let rel = p - self.vertex;
        (rel - self.axis * rel.dot(&self.axis)).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub point: Vec3,
    /// Unit normal; equals `-axis` at the vertex.
    pub normal: Vec3,
    pub t: f64,
}

/// Nearest forward intersection with the surface cap that contains the
/// vertex, restricted to the clear aperture.
pub fn intersect_sphere(ray: &Ray, s: &SphericalSurface) -> Option<SurfaceHit> {
    let Some(c) = s.center() else {
        let t = ray_plane(&ray.origin, &ray.direction, &s.vertex, &s.axis)?;
        if t <= SELF_HIT_EPS {
            return None;
        }
        let point = ray.at(t);
        return (s.lateral_distance(&point) <= s.aperture_radius).then_some(SurfaceHit {
            point,
            normal: -s.axis,
            t,
        });
    };
    let oc = ray.origin - c;
    let b = oc.dot(&ray.direction);
    let cc = oc.norm_squared() - s.radius * s.radius;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let mut roots = [-b - sq, -b + sq];
    roots.sort_by(f64::total_cmp);
    roots.into_iter().find_map(|t| {
        if t <= SELF_HIT_EPS {
            return None;
        }
        let point = ray.at(t);
        let on_vertex_cap = (point - c).dot(&s.axis) * s.radius.signum() < 0.0;
        (on_vertex_cap && s.lateral_distance(&point) <= s.aperture_radius).then(|| SurfaceHit {
            point,
            normal: (point - c) / s.radius,
            t,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refraction {
    Transmitted(Vec3),
    TotalInternalReflection,
}

/// Vector Snell's law. `normal` may face either side of the surface.
pub fn refract(dir: &Vec3, normal: &Vec3, n_i: f64, n_f: f64) -> Refraction {
    let n = if dir.dot(normal) > 0.0 { -normal } else { *normal };
    let cos_i = -dir.dot(&n);
    let eta = n_i / n_f;
    let k = 1.0 - eta * eta * (1.0 - cos_i * cos_i);
    if k < 0.0 {
        return Refraction::TotalInternalReflection;
    }
    Refraction::Transmitted(dir * eta + n * (eta * cos_i - k.sqrt()))
}

pub fn reflect(dir: &Vec3, normal: &Vec3) -> Vec3 {
    dir - normal * (2.0 * dir.dot(normal))
}

/// Thick lens bounded by two spherical (or planar) surfaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensElement {
    pub front: SphericalSurface,
    pub back: SphericalSurface,
    pub thickness: f64,
    pub glass_index: f64,
    pub diameter: f64,
}

impl LensElement {
    /// `front_radius`/`back_radius` of `None` mean planar faces.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        front_vertex: Vec3,
        axis: Vec3,
        front_radius: Option<f64>,
        back_radius: Option<f64>,
        thickness: f64,
        glass_index: f64,
        diameter: f64,
        ambient_index: f64,
    ) -> Result<Self> {
        if !(thickness > 0.0) || !(diameter > 0.0) || !(glass_index > 0.0) {
            return Err(Error::Invalid("lens needs thickness, diameter and index > 0".into()));
        }
        let axis = axis.normalize();
        let half = diameter / 2.0;
        let front = SphericalSurface::new(
            front_vertex,
            axis,
            front_radius.unwrap_or(f64::INFINITY),
            half,
            ambient_index,
            glass_index,
        )?;
        let back = SphericalSurface::new(
            front_vertex + axis * thickness,
            axis,
            back_radius.unwrap_or(f64::INFINITY),
            half,
            glass_index,
            ambient_index,
        )?;
        Ok(Self {
            front,
            back,
            thickness,
            glass_index,
            diameter,
        })
    }

    pub fn center(&self) -> Vec3 {
        (self.front.vertex + self.back.vertex) * 0.5
    }
}

fn refract_at(ray: &Ray, surface: &SphericalSurface) -> std::result::Result<Ray, BlockReason> {
    let hit = intersect_sphere(ray, surface).ok_or(BlockReason::LensMiss)?;
    match refract(&ray.direction, &hit.normal, surface.n_before, surface.n_after) {
        Refraction::Transmitted(d) => Ok(ray.with(hit.point, d)),
        Refraction::TotalInternalReflection => Err(BlockReason::TotalInternalReflection),
    }
}

pub fn propagate_through_lens(ray: &Ray, lens: &LensElement) -> std::result::Result<Ray, BlockReason> {
    let inside = refract_at(ray, &lens.front)?;
    refract_at(&inside, &lens.back)
}

/// Circular stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aperture {
    pub point: Vec3,
    pub normal: Vec3,
    pub radius: f64,
}

impl Aperture {
    pub fn new(point: Vec3, normal: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Invalid("aperture radius must be > 0".into()));
        }
        Ok(Self {
            point,
            normal: normal.normalize(),
            radius,
        })
    }

    /// Stop for a lens of focal length `f` at f-number `f_number`.
    pub fn from_f_number(point: Vec3, normal: Vec3, focal_length: f64, f_number: f64) -> Result<Self> {
        if !(f_number > 0.0) {
            return Err(Error::Invalid("f-number must be > 0".into()));
        }
        Self::new(point, normal, focal_length.abs() / (2.0 * f_number))
    }
}

/// Passes the ray unchanged if it crosses the stop plane within the opening.
pub fn apply_aperture(ray: &Ray, ap: &Aperture) -> std::result::Result<Ray, BlockReason> {
    let t = ray_plane(&ray.origin, &ray.direction, &ap.point, &ap.normal).ok_or(BlockReason::Aperture)?;
    let rel = ray.at(t) - ap.point;
    let lateral = (rel - ap.normal * rel.dot(&ap.normal)).norm();
    if lateral <= ap.radius {
        Ok(*ray)
    } else {
        Err(BlockReason::Aperture)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mirror {
    pub surface: SphericalSurface,
}

pub fn reflect_off_mirror(ray: &Ray, m: &Mirror) -> std::result::Result<Ray, BlockReason> {
    let hit = intersect_sphere(ray, &m.surface).ok_or(BlockReason::MirrorMiss)?;
    Ok(ray.with(hit.point, reflect(&ray.direction, &hit.normal)))
}

/// Aberration-free lens: every ray is bent toward the point where the
/// parallel chief ray meets the focal plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinLensIdeal {
    pub point: Vec3,
    pub axis: Vec3,
    pub focal_length: f64,
    pub diameter: f64,
}

impl ThinLensIdeal {
    pub fn new(point: Vec3, axis: Vec3, focal_length: f64, diameter: f64) -> Result<Self> {
        if focal_length == 0.0 || !focal_length.is_finite() || !(diameter > 0.0) {
            return Err(Error::Invalid("thin lens needs finite non-zero focal length and diameter > 0".into()));
        }
        Ok(Self {
            point,
            axis: axis.normalize(),
            focal_length,
            diameter,
        })
    }
}

pub fn propagate_through_thin_lens(ray: &Ray, lens: &ThinLensIdeal) -> std::result::Result<Ray, BlockReason> {
    let t = ray_plane(&ray.origin, &ray.direction, &lens.point, &lens.axis).ok_or(BlockReason::LensMiss)?;
    let p = ray.at(t);
    let rel = p - lens.point;
    if (rel - lens.axis * rel.dot(&lens.axis)).norm() > lens.diameter / 2.0 {
        return Err(BlockReason::LensMiss);
    }
    let along = ray.direction.dot(&lens.axis);
    let axis = if along >= 0.0 { lens.axis } else { -lens.axis };
    let q = lens.point + ray.direction * (lens.focal_length / along.abs());
    let d = (q - p) * lens.focal_length.signum();
    let d = if d.dot(&axis) > 0.0 { d } else { -d };
    Ok(ray.with(p, d.normalize()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpticalElement {
    Lens(LensElement),
    ThinLens(ThinLensIdeal),
    Aperture(Aperture),
    Mirror(Mirror),
}

impl OpticalElement {
    pub fn apply(&self, ray: &Ray) -> std::result::Result<Ray, BlockReason> {
        match self {
            OpticalElement::Lens(l) => propagate_through_lens(ray, l),
            OpticalElement::ThinLens(l) => propagate_through_thin_lens(ray, l),
            OpticalElement::Aperture(a) => apply_aperture(ray, a),
            OpticalElement::Mirror(m) => reflect_off_mirror(ray, m),
        }
    }

    /// Disk that source bundles are aimed at when this element comes first.
    pub fn entrance_disk(&self) -> ApertureDisk {
        match self {
            OpticalElement::Lens(l) => ApertureDisk {
                center: l.front.vertex,
                axis: l.front.axis,
                radius: l.diameter / 2.0,
            },
            OpticalElement::ThinLens(l) => ApertureDisk {
                center: l.point,
                axis: l.axis,
                radius: l.diameter / 2.0,
            },
            OpticalElement::Aperture(a) => ApertureDisk {
                center: a.point,
                axis: a.normal,
                radius: a.radius,
            },
            OpticalElement::Mirror(m) => ApertureDisk {
                center: m.surface.vertex,
                axis: m.surface.axis,
                radius: m.surface.aperture_radius,
            },
        }
    }
}

/// Applies each element in order; the first block ends the ray.
pub fn propagate_chain(ray: &Ray, elements: &[OpticalElement]) -> std::result::Result<Ray, BlockReason> {
    elements.iter().try_fold(*ray, |r, e| e.apply(&r))
}
