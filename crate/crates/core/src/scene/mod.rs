//! Light sources and the variable-density medium.
//!
//! Densities are converted to refractive index with the Gladstone-Dale
//! relation `n = K*rho + 1`. Gridded volumes store samples at cell centres,
//! so a volume with `N` cells of width `d` spans exactly `N*d`.

mod density;
mod field;
mod gvol;
mod sources;

pub use density::{stack_2d_slice, DensityVolume, Grid2, SliceProfile};
pub use field::{build_refractive_field, AnalyticField, FieldSample, GriddedField, RefractiveField};
pub use gvol::{load_density_volume, read_density_volume, save_density_volume, write_density_volume};
pub use sources::{generate_dot_pattern, DotPattern, DotPatternSpec, ParticleField, DENSITY_WINDOW_PX};

use crate::error::{Error, Result};

/// Gladstone-Dale constant of air, m^3/kg (0.226 cm^3/g).
pub const K_AIR: f64 = 2.26e-4;

/// Sea-level air density used to scale the ambient medium, kg/m^3.
pub const RHO_AIR: f64 = 1.225;

/// Refractive index of the ambient medium surrounding every volume.
pub fn ambient_index() -> f64 {
    K_AIR * RHO_AIR + 1.0
}

pub fn gladstone_dale(rho: f64, k: f64) -> Result<f64> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("density must be finite and >= 0, got {rho}")));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("Gladstone-Dale constant must be > 0, got {k}")));
    }
    Ok(k * rho + 1.0)
}
