use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};

/// Cell-centred 3-D density grid, kg/m^3, stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: Vec3,
    rho: Vec<f64>,
}

impl DensityVolume {
    /// `origin` is the minimum corner of the volume's bounding box.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: Vec3, rho: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Invalid(format!("volume dims must be >= 2 per axis, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Invalid(format!("volume spacing must be > 0, got {spacing:?}")));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::Invalid("volume origin must be finite".into()));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if rho.len() != expected {
            return Err(Error::Invalid(format!(
                "volume has {} samples, dims {dims:?} need {expected}",
                rho.len()
            )));
        }
        if let Some((i, v)) = rho.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::Invalid(format!("density sample {i} is {v}; must be finite and >= 0")));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            rho,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.rho[self.index(i, j, k)]
    }

    /// World position of sample `(i, j, k)`.
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin.x + (i as f64 + 0.5) * self.spacing[0],
            self.origin.y + (j as f64 + 0.5) * self.spacing[1],
            self.origin.z + (k as f64 + 0.5) * self.spacing[2],
        )
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::new(
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        )
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::new(self.origin, self.origin + self.extent())
    }

    /// Same samples, moved so the box centre sits at `center`.
    pub fn centered_at(mut self, center: Vec3) -> Self {
        self.origin = center - self.extent() * 0.5;
        self
    }
}

/// Cell-centred 2-D scalar grid over the (x, y) plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub spacing: [f64; 2],
    /// Minimum corner.
    pub origin: [f64; 2],
    pub values: Vec<f64>,
}

impl Grid2 {
    pub fn from_fn(
        nx: usize,
        ny: usize,
        spacing: [f64; 2],
        origin: [f64; 2],
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = Self::node_xy(origin, spacing, i, j);
                values.push(f(x, y));
            }
        }
        Self {
            nx,
            ny,
            spacing,
            origin,
            values,
        }
    }

    fn node_xy(origin: [f64; 2], spacing: [f64; 2], i: usize, j: usize) -> (f64, f64) {
        (
            origin[0] + (i as f64 + 0.5) * spacing[0],
            origin[1] + (j as f64 + 0.5) * spacing[1],
        )
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        Self::node_xy(self.origin, self.spacing, i, j)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i + self.nx * j]
    }

    /// Central-difference gradient (one-sided at the edges) at every node.
    pub fn gradient(&self) -> (Grid2, Grid2) {
        let mut gx = self.clone();
        let mut gy = self.clone();
        for j in 0..self.ny {
            for i in 0..self.nx {
                gx.values[i + self.nx * j] =
                    central_difference(self.nx, self.spacing[0], i, |ii| self.at(ii, j));
                gy.values[i + self.nx * j] =
                    central_difference(self.ny, self.spacing[1], j, |jj| self.at(i, jj));
            }
        }
        (gx, gy)
    }
}

/// Derivative along one axis: central in the interior, first-order one-sided at the ends.
pub(crate) fn central_difference(n: usize, h: f64, i: usize, f: impl Fn(usize) -> f64) -> f64 {
    if i == 0 {
        (f(1) - f(0)) / h
    } else if i == n - 1 {
        (f(n - 1) - f(n - 2)) / h
    } else {
        (f(i + 1) - f(i - 1)) / (2.0 * h)
    }
}

/// Repeats a 2-D density slice `nz` times along z, so that d(rho)/dz = 0.
/// The resulting volume starts at z = 0; use [`DensityVolume::centered_at`] to place it.
pub fn stack_2d_slice(slice: &Grid2, nz: usize, dz: f64) -> Result<DensityVolume> {
    if nz < 2 {
        return Err(Error::Invalid(format!("stacked volume needs nz >= 2, got {nz}")));
    }
    let mut rho = Vec::with_capacity(slice.values.len() * nz);
    for _ in 0..nz {
        rho.extend_from_slice(&slice.values);
    }
    DensityVolume::new(
        [slice.nx, slice.ny, nz],
        [slice.spacing[0], slice.spacing[1], dz],
        Vec3::new(slice.origin[0], slice.origin[1], 0.0),
        rho,
    )
}

/// Closed-form 2-D density profiles used to build synthetic media.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum SliceProfile {
    /// `rho0 + g . (p - center)`.
    Linear {
        rho0: f64,
        gradient: [f64; 2],
        #[serde(default)]
        center: [f64; 2],
    },
    /// `rho0 + amplitude * exp(-|p - center|^2 / (2 sigma^2))`.
    GaussianBlob {
        rho0: f64,
        amplitude: f64,
        sigma: f64,
        #[serde(default)]
        center: [f64; 2],
    },
}

impl SliceProfile {
    pub fn density(&self, x: f64, y: f64) -> f64 {
        match *self {
            SliceProfile::Linear {
                rho0,
                gradient,
                center,
            } => rho0 + gradient[0] * (x - center[0]) + gradient[1] * (y - center[1]),
            SliceProfile::GaussianBlob {
                rho0,
                amplitude,
                sigma,
                center,
            } => {
                let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                rho0 + amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        match *self {
            SliceProfile::Linear { gradient, .. } => gradient,
            SliceProfile::GaussianBlob {
                amplitude,
                sigma,
                center,
                ..
            } => {
                let dx = x - center[0];
                let dy = y - center[1];
                let s2 = sigma * sigma;
                let g = amplitude * (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
                [-g * dx / s2, -g * dy / s2]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SliceProfile::Linear { rho0, gradient, .. } => {
                if !(rho0 >= 0.0) || !gradient.iter().all(|g| g.is_finite()) {
                    return Err(Error::Invalid("linear profile needs rho0 >= 0 and finite gradient".into()));
                }
            }
            SliceProfile::GaussianBlob {
                rho0,
                amplitude,
                sigma,
                ..
            } => {
                if !(rho0 >= 0.0) || !(sigma > 0.0) || !(rho0 + amplitude.min(0.0) >= 0.0) {
                    return Err(Error::Invalid(
                        "gaussian blob needs rho0 >= 0, sigma > 0 and non-negative density".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, nx: usize, ny: usize, spacing: [f64; 2], origin: [f64; 2]) -> Grid2 {
        Grid2::from_fn(nx, ny, spacing, origin, |x, y| self.density(x, y))
    }
}
