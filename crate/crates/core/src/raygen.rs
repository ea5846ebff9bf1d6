//! Ray bundles from source points toward the entrance aperture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{orthonormal_basis, Vec3};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub radiance: f64,
    /// Wavelength, m.
    pub wavelength: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, radiance: f64, wavelength: f64) -> Result<Self> {
        let len = direction.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::Invalid("ray direction must be non-zero".into()));
        }
        if !(radiance >= 0.0) || !(wavelength > 0.0) {
            return Err(Error::Invalid("ray needs radiance >= 0 and wavelength > 0".into()));
        }
        Ok(Self {
            origin,
            direction: direction / len,
            radiance,
            wavelength,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn with(&self, origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Jittered square lattice pushed through the concentric disk map.
    #[default]
    Stratified,
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub rays_per_source: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub seed: u64,
}

impl BundleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rays_per_source == 0 {
            return Err(Error::Invalid("rays_per_source must be >= 1".into()));
        }
        Ok(())
    }
}

/// Circular target the bundle is aimed at (the first element's opening).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApertureDisk {
    pub center: Vec3,
    pub axis: Vec3,
    pub radius: f64,
}

/// Shirley-Chiu concentric map from the unit square to the unit disk.
pub fn concentric_disk(u: f64, v: f64) -> (f64, f64) {
    let a = 2.0 * u - 1.0;
    let b = 2.0 * v - 1.0;
    if a == 0.0 && b == 0.0 {
        return (0.0, 0.0);
    }
    let (r, phi) = if a.abs() > b.abs() {
        (a, std::f64::consts::FRAC_PI_4 * (b / a))
    } else {
        (b, std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_4 * (a / b))
    };
    (r * phi.cos(), r * phi.sin())
}

/// Points on `disk`, deterministic in `(spec.seed, source_index)`.
///
/// Stratified mode spreads the `N` rays evenly over an `m x m` lattice
/// (`m = ceil(sqrt N)`) and jitters each inside its cell; a one-ray bundle
/// aims at the disk centre.
pub fn sample_aperture_points(disk: &ApertureDisk, spec: &BundleSpec, source_index: u64) -> Vec<Vec3> {
    let n = spec.rays_per_source;
    let (eu, ev) = orthonormal_basis(&disk.axis);
    if n == 1 {
        return vec![disk.center];
    }
    let m = (n as f64).sqrt().ceil() as usize;
    let cells = m * m;
    (0..n)
        .map(|j| {
            let mut s = StreamKey::new(spec.seed, source_index, j as u64).stream();
            let (ju, jv) = (s.next_f64(), s.next_f64());
            let (u, v) = match spec.sampling {
                Sampling::Stratified => {
                    let cell = j * cells / n;
                    let (cx, cy) = (cell % m, cell / m);
                    ((cx as f64 + ju) / m as f64, (cy as f64 + jv) / m as f64)
                }
                Sampling::UniformRandom => (ju, jv),
            };
            let (x, y) = concentric_disk(u, v);
            disk.center + (eu * x + ev * y) * disk.radius
        })
        .collect()
}

/// Angular radiance hook. Weights are relative; a bundle of `N` rays gets
/// `weight / N` per ray.
pub trait RadianceModel: Send + Sync {
    /// Weight for light scattered `angle` radians away from the illumination direction.
    fn weight(&self, scattering_angle: f64) -> f64;

    fn illumination(&self) -> Vec3 {
        Vec3::z()
    }
}

/// Isotropic source: every ray carries the same share of a unit bundle.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRadiance;

impl RadianceModel for UniformRadiance {
    fn weight(&self, _scattering_angle: f64) -> f64 {
        1.0
    }
}

pub fn emit_rays(
    source: &Vec3,
    aperture_points: &[Vec3],
    wavelength: f64,
    model: &dyn RadianceModel,
) -> Result<Vec<Ray>> {
    let share = 1.0 / aperture_points.len().max(1) as f64;
    let illum = model.illumination().normalize();
    aperture_points
        .iter()
        .map(|p| {
            let d = p - source;
            if d.norm() == 0.0 {
                return Err(Error::Invalid("source coincides with an aperture point".into()));
            }
            let dir = d.normalize();
            let angle = dir.dot(&illum).clamp(-1.0, 1.0).acos();
            Ray::new(*source, dir, model.weight(angle) * share, wavelength)
        })
        .collect()
}
