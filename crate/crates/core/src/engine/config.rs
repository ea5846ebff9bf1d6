//! JSON experiment description.
//!
//! World frame: the dot pattern lies in `z = 0`, the optical axis is `+z`,
//! the density field is centred on `(0, 0, z_d)` and the lens plane sits at
//! `z = z_d + z_a`. Optical element offsets are measured along the axis from
//! the lens plane.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raygen::BundleSpec;
use crate::scene::{DotPatternSpec, SliceProfile, K_AIR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub geometry: GeometryConfig,
    /// Ordered optical train; empty means a stop of radius `f / (2 f#)`
    /// followed by an ideal thin lens, both in the lens plane.
    #[serde(default)]
    pub optics: Vec<ElementConfig>,
    pub sensor: SensorConfig,
    pub bundle: BundleSpec,
    #[serde(default)]
    pub run: RunConfig,
    /// Free-form description; ignored by the pipeline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub source: SourceConfig,
    #[serde(default)]
    pub medium: MediumConfig,
    /// Gladstone-Dale constant, m^3/kg.
    #[serde(default = "default_k")]
    pub gladstone_dale: f64,
    /// Ambient density used for the BOS reference index, kg/m^3.
    #[serde(default = "default_rho")]
    pub ambient_density: f64,
}

fn default_k() -> f64 {
    K_AIR
}

fn default_rho() -> f64 {
    crate::scene::RHO_AIR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceConfig {
    DotPattern(DotPatternSpec),
    /// Tracer particles in world coordinates, seeded inside `volume`.
    Particles {
        positions: Vec<[f64; 3]>,
        diameters: Vec<f64>,
        volume: [[f64; 3]; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MediumConfig {
    #[default]
    None,
    /// Density volume file, relative paths resolved against the config file.
    Volume { path: PathBuf },
    /// A 2-D profile stacked along z. `dims`/`spacing` set the sampling grid
    /// and the box; `analytic` evaluates the profile exactly instead of
    /// interpolating the grid.
    Slice {
        #[serde(flatten)]
        profile: SliceProfile,
        dims: [usize; 3],
        spacing: [f64; 3],
        #[serde(default)]
        analytic: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Dot pattern to density-field centre, m.
    pub z_d: f64,
    /// Density-field centre to lens plane, m.
    pub z_a: f64,
    pub focal_length: f64,
    pub f_number: f64,
    /// Field depth for the BOS theory; defaults to the medium's z extent.
    #[serde(default)]
    pub l_z: Option<f64>,
}

impl GeometryConfig {
    pub fn object_distance(&self) -> f64 {
        self.z_d + self.z_a
    }

    /// Thin-lens in-focus image distance.
    pub fn image_distance(&self) -> f64 {
        let s_o = self.object_distance();
        1.0 / (1.0 / self.focal_length - 1.0 / s_o)
    }

    pub fn magnification(&self) -> f64 {
        self.image_distance() / self.object_distance()
    }

    pub fn stop_radius(&self) -> f64 {
        self.focal_length / (2.0 * self.f_number)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ElementConfig {
    ThinLens {
        #[serde(default)]
        offset: f64,
        focal_length: f64,
        diameter: f64,
    },
    /// Thick singlet; a missing radius is a planar face.
    Lens {
        #[serde(default)]
        offset: f64,
        front_radius: Option<f64>,
        back_radius: Option<f64>,
        thickness: f64,
        glass_index: f64,
        diameter: f64,
    },
    /// Circular stop; radius defaults to `f / (2 f#)` from the geometry.
    Aperture {
        #[serde(default)]
        offset: f64,
        radius: Option<f64>,
    },
    /// Spherical mirror facing back along the axis.
    Mirror {
        #[serde(default)]
        offset: f64,
        radius: f64,
        diameter: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSetting {
    Fixed(f64),
    Named(GainMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// Reference dot peaks at 0.9 of full scale.
    Auto,
}

impl Default for GainSetting {
    fn default() -> Self {
        GainSetting::Named(GainMode::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Width and height in pixels.
    pub resolution: [usize; 2],
    pub pixel_pitch: f64,
    #[serde(default = "default_bits")]
    pub bit_depth: u32,
    #[serde(default)]
    pub gain: GainSetting,
    /// Lens plane to sensor, m; defaults to the thin-lens focus.
    #[serde(default)]
    pub distance: Option<f64>,
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    /// Use `2.44 pi f# (M+1) lambda` for the spot diameter; `false` drops the pi.
    #[serde(default = "default_true")]
    pub diffraction_pi_factor: bool,
}

fn default_bits() -> u32 {
    16
}

fn default_wavelength() -> f64 {
    500e-9
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_true")]
    pub deterministic: bool,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub delta_xi: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Displacement grid nodes across the sensor.
    #[serde(default = "default_bos_grid")]
    pub bos_grid: [usize; 2],
    /// Dot binning cell for the measured displacement field, pixels.
    #[serde(default = "default_bos_bin")]
    pub bos_bin_px: f64,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_bos_grid() -> [usize; 2] {
    [32, 32]
}

fn default_bos_bin() -> f64 {
    16.0
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threads: 0,
            deterministic: true,
            out_dir: default_out(),
            delta_xi: None,
            max_steps: None,
            bos_grid: default_bos_grid(),
            bos_bin_px: default_bos_bin(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let MediumConfig::Volume { path: p } = &mut cfg.scene.medium {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        for (name, v) in [
            ("z_d", g.z_d),
            ("z_a", g.z_a),
            ("focal_length", g.focal_length),
            ("f_number", g.f_number),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("geometry.{name} must be positive, got {v}")));
            }
        }
        if let Some(l) = g.l_z {
            if !(l > 0.0) {
                return Err(Error::Config(format!("geometry.l_z must be positive, got {l}")));
            }
        }
        if g.object_distance() <= g.focal_length {
            return Err(Error::Config("object distance z_d + z_a must exceed the focal length".into()));
        }
        if !(self.scene.gladstone_dale > 0.0) {
            return Err(Error::Config("scene.gladstone_dale must be positive".into()));
        }
        match &self.scene.medium {
            MediumConfig::None => {}
            MediumConfig::Volume { path } => {
                if !path.is_file() {
                    return Err(Error::Config(format!("density volume {} does not exist", path.display())));
                }
            }
            MediumConfig::Slice {
                profile, dims, spacing, ..
            } => {
                profile.validate()?;
                if dims.iter().any(|d| *d < 2) || spacing.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::Config("slice medium needs dims >= 2 and positive spacing".into()));
                }
            }
        }
        if let Some(d) = self.sensor.distance {
            if !(d > 0.0) {
                return Err(Error::Config("sensor.distance must be positive".into()));
            }
        }
        if let GainSetting::Fixed(v) = self.sensor.gain {
            if !(v > 0.0) {
                return Err(Error::Config("sensor.gain must be positive or \"auto\"".into()));
            }
        }
        if !(self.sensor.wavelength > 0.0) {
            return Err(Error::Config("sensor.wavelength must be positive".into()));
        }
        if self.run.bos_grid.iter().any(|n| *n < 2) || !(self.run.bos_bin_px > 0.0) {
            return Err(Error::Config("run.bos_grid needs >= 2 nodes per axis and a positive bin".into()));
        }
        self.bundle.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialisation, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }
}
