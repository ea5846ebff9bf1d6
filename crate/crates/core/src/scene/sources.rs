use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::rng::StreamKey;

/// Stream id reserved for dot placement, kept apart from per-source ray streams.
const DOT_PLACEMENT_STREAM: u64 = u64::MAX;

/// Sensor-pixel area (32 x 32) over which dot density is quoted.
pub const DENSITY_WINDOW_PX: f64 = 32.0 * 32.0;

/// Random dot target in a plane normal to the optical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DotPattern {
    pub target_plane_z: f64,
    pub dot_positions: Vec<[f64; 2]>,
    pub dot_diameter: f64,
    /// Dots per 32x32 sensor-pixel window.
    pub density_spec: f64,
}

impl DotPattern {
    pub fn source_points(&self) -> Vec<Vec3> {
        self.dot_positions
            .iter()
            .map(|p| Vec3::new(p[0], p[1], self.target_plane_z))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DotPatternSpec {
    /// Target width and height, m.
    pub extent: [f64; 2],
    #[serde(default)]
    pub center: [f64; 2],
    /// Dots per 32x32 sensor pixels.
    pub density: f64,
    #[serde(default)]
    pub dot_diameter: f64,
}

/// Uniform i.i.d. dot placement at the requested areal density, measured in
/// sensor pixels through the given magnification.
pub fn generate_dot_pattern(
    spec: &DotPatternSpec,
    magnification: f64,
    pixel_pitch: f64,
    plane_z: f64,
    seed: u64,
) -> Result<DotPattern> {
    let [w, h] = spec.extent;
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::Invalid(format!("dot pattern extent must be positive, got {:?}", spec.extent)));
    }
    if !(spec.density > 0.0) {
        return Err(Error::Invalid(format!("dot density must be > 0, got {}", spec.density)));
    }
    if !(magnification > 0.0 && pixel_pitch > 0.0) {
        return Err(Error::Invalid("magnification and pixel pitch must be > 0".into()));
    }
    let area_px = (w * magnification / pixel_pitch) * (h * magnification / pixel_pitch);
    let count = (spec.density * area_px / DENSITY_WINDOW_PX).round() as usize;
    let dot_positions = (0..count as u64)
        .map(|i| {
            let mut s = StreamKey::new(seed, DOT_PLACEMENT_STREAM, i).stream();
            let u = s.next_f64();
            let v = s.next_f64();
            [spec.center[0] + (u - 0.5) * w, spec.center[1] + (v - 0.5) * h]
        })
        .collect();
    Ok(DotPattern {
        target_plane_z: plane_z,
        dot_positions,
        dot_diameter: spec.dot_diameter,
        density_spec: spec.density,
    })
}

/// Seeded tracer particles inside a declared volume.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleField {
    pub positions: Vec<Vec3>,
    pub diameters: Vec<f64>,
}

impl ParticleField {
    pub fn new(positions: Vec<Vec3>, diameters: Vec<f64>, seeded: &Aabb) -> Result<Self> {
        if positions.len() != diameters.len() {
            return Err(Error::Invalid("one diameter per particle required".into()));
        }
        if let Some(p) = positions.iter().find(|p| !seeded.contains(p)) {
            return Err(Error::Invalid(format!("particle at {p:?} lies outside the seeded volume")));
        }
        Ok(Self { positions, diameters })
    }
}
