use std::fmt;
use std::sync::Arc;

use super::density::{central_difference, DensityVolume, SliceProfile};
use super::gladstone_dale;
use crate::error::Result;
use crate::math::{Aabb, Vec3};

/// Refractive index and its gradient at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub n: f64,
    pub grad: Vec3,
}

/// Refractive-index field: either a grid with precomputed node gradients,
/// or a closed-form function.
#[derive(Debug, Clone)]
pub enum RefractiveField {
    Gridded(GriddedField),
    Analytic(AnalyticField),
}

impl RefractiveField {
    /// `None` outside the bounding box; callers treat that region as ambient.
    #[inline]
    pub fn sample(&self, p: &Vec3) -> Option<FieldSample> {
        match self {
            RefractiveField::Gridded(g) => g.sample(p),
            RefractiveField::Analytic(a) => a.sample(p),
        }
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            RefractiveField::Gridded(g) => g.bounds,
            RefractiveField::Analytic(a) => a.bounds,
        }
    }

    /// Smallest grid spacing, if the field is gridded.
    pub fn min_spacing(&self) -> Option<f64> {
        match self {
            RefractiveField::Gridded(g) => Some(g.spacing.iter().copied().fold(f64::INFINITY, f64::min)),
            RefractiveField::Analytic(_) => None,
        }
    }

    pub fn gladstone_dale(&self) -> f64 {
        match self {
            RefractiveField::Gridded(g) => g.k,
            RefractiveField::Analytic(a) => a.k,
        }
    }
}

/// Cell-centred refractive-index grid with node gradients, interleaved as
/// `[n, dn/dx, dn/dy, dn/dz]` per node.
#[derive(Debug, Clone)]
pub struct GriddedField {
    dims: [usize; 3],
    spacing: [f64; 3],
    inv_spacing: [f64; 3],
    origin: Vec3,
    bounds: Aabb,
    k: f64,
    nodes: Vec<[f64; 4]>,
}

impl GriddedField {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Node values `[n, dn/dx, dn/dy, dn/dz]`.
    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 4] {
        self.nodes[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin.x + (i as f64 + 0.5) * self.spacing[0],
            self.origin.y + (j as f64 + 0.5) * self.spacing[1],
            self.origin.z + (k as f64 + 0.5) * self.spacing[2],
        )
    }

    pub fn nodes(&self) -> &[[f64; 4]] {
        &self.nodes
    }

    #[inline]
    fn axis_coord(&self, axis: usize, p: f64) -> (usize, f64) {
        let n = self.dims[axis];
        let f = ((p - self.origin[axis]) * self.inv_spacing[axis] - 0.5).clamp(0.0, (n - 1) as f64);
        let i = (f as usize).min(n - 2);
        (i, f - i as f64)
    }

    /// Trilinear interpolation of n and the node gradients. Between the
    /// outermost sample and the box face values are held constant.
    #[inline]
    pub fn sample(&self, p: &Vec3) -> Option<FieldSample> {
        if !self.bounds.contains(p) {
            return None;
        }
        let (i, tx) = self.axis_coord(0, p.x);
        let (j, ty) = self.axis_coord(1, p.y);
        let (k, tz) = self.axis_coord(2, p.z);
        let sx = 1;
        let sy = self.dims[0];
        let sz = self.dims[0] * self.dims[1];
        let base = i + sy * j + sz * k;
        let mut acc = [0.0f64; 4];
        for (dk, wz) in [(0, 1.0 - tz), (sz, tz)] {
            for (dj, wy) in [(0, 1.0 - ty), (sy, ty)] {
                let w0 = wz * wy * (1.0 - tx);
                let w1 = wz * wy * tx;
                let a = &self.nodes[base + dk + dj];
                let b = &self.nodes[base + dk + dj + sx];
                for c in 0..4 {
                    acc[c] += w0 * a[c] + w1 * b[c];
                }
            }
        }
        Some(FieldSample {
            n: acc[0],
            grad: Vec3::new(acc[1], acc[2], acc[3]),
        })
    }
}

/// Converts a density volume to refractive index and precomputes the
/// gradient at every node by central differences (one-sided at the faces).
pub fn build_refractive_field(vol: &DensityVolume, k: f64) -> Result<RefractiveField> {
    let dims = vol.dims();
    let spacing = vol.spacing();
    let n: Vec<f64> = vol
        .rho()
        .iter()
        .map(|&r| gladstone_dale(r, k))
        .collect::<Result<_>>()?;
    let idx = |i: usize, j: usize, kk: usize| i + dims[0] * (j + dims[1] * kk);
    let mut nodes = Vec::with_capacity(n.len());
    for kk in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let gx = central_difference(dims[0], spacing[0], i, |ii| n[idx(ii, j, kk)]);
                let gy = central_difference(dims[1], spacing[1], j, |jj| n[idx(i, jj, kk)]);
                let gz = central_difference(dims[2], spacing[2], kk, |k2| n[idx(i, j, k2)]);
                nodes.push([n[idx(i, j, kk)], gx, gy, gz]);
            }
        }
    }
    Ok(RefractiveField::Gridded(GriddedField {
        dims,
        spacing,
        inv_spacing: spacing.map(|s| 1.0 / s),
        origin: vol.origin(),
        bounds: vol.bounds(),
        k,
        nodes,
    }))
}

type IndexFn = dyn Fn(&Vec3) -> (f64, Vec3) + Send + Sync;

/// Closed-form refractive-index field confined to a box.
#[derive(Clone)]
pub struct AnalyticField {
    eval: Arc<IndexFn>,
    bounds: Aabb,
    k: f64,
}

impl fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticField")
            .field("bounds", &self.bounds)
            .field("k", &self.k)
            .finish_non_exhaustive()
    }
}

impl AnalyticField {
    /// `eval` returns `(n, grad n)` at a point inside `bounds`.
    pub fn new(bounds: Aabb, k: f64, eval: impl Fn(&Vec3) -> (f64, Vec3) + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            bounds,
            k,
        }
    }

    /// A 2-D density profile extruded along z through `bounds`.
    pub fn stacked_profile(profile: SliceProfile, k: f64, bounds: Aabb) -> Self {
        Self::new(bounds, k, move |p| {
            let rho = profile.density(p.x, p.y);
            let g = profile.gradient(p.x, p.y);
            (k * rho + 1.0, Vec3::new(k * g[0], k * g[1], 0.0))
        })
    }

    #[inline]
    pub fn sample(&self, p: &Vec3) -> Option<FieldSample> {
        if !self.bounds.contains(p) {
            return None;
        }
        let (n, grad) = (self.eval)(p);
        Some(FieldSample { n, grad })
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{stack_2d_slice, Grid2, K_AIR};
    use proptest::prelude::*;

    fn volume_from(dims: [usize; 3], h: f64, f: impl Fn(Vec3) -> f64) -> DensityVolume {
        let origin = Vec3::new(-0.5 * dims[0] as f64 * h, -0.3 * dims[1] as f64 * h, 0.1);
        let mut rho = Vec::new();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * h;
                    rho.push(f(p));
                }
            }
        }
        DensityVolume::new(dims, [h; 3], origin, rho).unwrap()
    }

    fn gridded(f: &RefractiveField) -> &GriddedField {
        match f {
            RefractiveField::Gridded(g) => g,
            _ => unreachable!(),
        }
    }

    #[test]
    fn uniform_density_has_zero_gradient() {
        let v = volume_from([4, 5, 3], 1e-3, |_| 1.225);
        let f = build_refractive_field(&v, K_AIR).unwrap();
        assert!(gridded(&f).nodes().iter().all(|n| n[1] == 0.0 && n[2] == 0.0 && n[3] == 0.0));
    }

    #[test]
    fn affine_density_gradient_is_exact() {
        let g = Vec3::new(10.0, -4.0, 2.5);
        let v = volume_from([6, 5, 4], 1e-3, |p| 2.0 + g.dot(&p));
        let f = build_refractive_field(&v, K_AIR).unwrap();
        for node in gridded(&f).nodes() {
            for c in 0..3 {
                // exact up to rounding of n ~ 1 divided by the spacing
                assert!((node[c + 1] - K_AIR * g[c]).abs() < 1e-12, "{node:?}");
            }
        }
    }

    #[test]
    fn blob_gradient_is_second_order() {
        // error at a fixed interior point should drop ~4x when h halves
        let sigma = 2e-3;
        let blob = |p: Vec3| 1.225 + 0.5 * (-(p.x * p.x + p.y * p.y) / (2.0 * sigma * sigma)).exp();
        let dblob_dx = |p: Vec3| -0.5 * p.x / (sigma * sigma) * (-(p.x * p.x + p.y * p.y) / (2.0 * sigma * sigma)).exp();
        let mut errs = Vec::new();
        for &n in &[16usize, 32, 64] {
            let h = 0.016 / n as f64;
            let origin = Vec3::new(-0.008, -0.008, 0.0);
            let slice = Grid2::from_fn(n, n, [h, h], [origin.x, origin.y], |x, y| blob(Vec3::new(x, y, 0.0)));
            let vol = stack_2d_slice(&slice, 2, h).unwrap();
            let f = build_refractive_field(&vol, K_AIR).unwrap();
            let gf = gridded(&f);
            // node nearest to x = +sigma/2 on the y-centre row
            let i = n / 2 + n / 16;
            let j = n / 2;
            let p = gf.node_position(i, j, 0);
            let err = (gf.node(i, j, 0)[1] - K_AIR * dblob_dx(p)).abs();
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn sampling_reproduces_nodes() {
        let v = volume_from([5, 4, 3], 1e-3, |p| 1.0 + (p.x * 300.0).sin() + p.y * p.z * 1e3);
        let f = build_refractive_field(&v, K_AIR).unwrap();
        let g = gridded(&f);
        for k in 0..3 {
            for j in 0..4 {
                for i in 0..5 {
                    let s = f.sample(&g.node_position(i, j, k)).unwrap();
                    let node = g.node(i, j, k);
                    assert!((s.n - node[0]).abs() < 1e-15);
                    assert!((s.grad - Vec3::new(node[1], node[2], node[3])).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn uniform_field_at_cell_centre() {
        let v = volume_from([3, 3, 3], 1e-3, |_| 1.225);
        let f = build_refractive_field(&v, K_AIR).unwrap();
        let g = gridded(&f);
        let p = (g.node_position(0, 0, 0) + g.node_position(1, 1, 1)) * 0.5;
        let s = f.sample(&p).unwrap();
        assert!((s.n - (1.0 + K_AIR * 1.225)).abs() < 1e-15);
        assert_eq!(s.grad, Vec3::zeros());
    }

    #[test]
    fn outside_box_is_none() {
        let v = volume_from([3, 3, 3], 1e-3, |_| 1.0);
        let f = build_refractive_field(&v, K_AIR).unwrap();
        let b = f.bounds();
        assert!(f.sample(&(b.max + Vec3::new(1e-9, 0.0, 0.0))).is_none());
        assert!(f.sample(&b.max).is_some());
    }

    #[test]
    fn linear_field_cell_centre_matches_brute_force() {
        // brute force: evaluate the affine function directly at the query point
        let a = 0.02;
        let v = volume_from([6, 4, 4], 1e-3, |p| 1.0 + a * 1e3 * p.x);
        let f = build_refractive_field(&v, K_AIR).unwrap();
        let g = gridded(&f);
        for i in 0..5 {
            let p = (g.node_position(i, 1, 1) + g.node_position(i + 1, 2, 2)) * 0.5;
            let expect = 1.0 + K_AIR * (1.0 + a * 1e3 * p.x);
            assert!((f.sample(&p).unwrap().n - expect).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn sample_is_continuous_across_faces(fx in 0.6f64..4.4, fy in 0.6f64..3.4, fz in 0.6f64..2.4) {
            let v = volume_from([5, 4, 3], 1e-3, |p| 1.0 + (p.x * 700.0).cos() * (p.y * 500.0).sin() + 1e3 * p.z);
            let f = build_refractive_field(&v, K_AIR).unwrap();
            let g = gridded(&f);
            let o = g.node_position(0, 0, 0) - Vec3::new(0.5e-3, 0.5e-3, 0.5e-3);
            // snap x onto a cell face between two samples
            let face_x = o.x + (fx.round() + 0.5) * 1e-3;
            let p = Vec3::new(face_x, o.y + fy * 1e-3, o.z + fz * 1e-3);
            let eps = 1e-12;
            let a = f.sample(&(p - Vec3::new(eps, 0.0, 0.0))).unwrap();
            let b = f.sample(&(p + Vec3::new(eps, 0.0, 0.0))).unwrap();
            prop_assert!((a.n - b.n).abs() <= 1e-12 * a.n.abs());
            prop_assert!((a.grad - b.grad).norm() <= 1e-12 * (1.0 + a.grad.norm()) * 1e3);
        }
    }

    #[test]
    fn analytic_profile_field() {
        let prof = SliceProfile::Linear {
            rho0: 1.225,
            gradient: [10.0, 0.0],
            center: [0.0, 0.0],
        };
        let b = Aabb::new(Vec3::new(-0.01, -0.01, 0.0), Vec3::new(0.01, 0.01, 0.01));
        let f = RefractiveField::Analytic(AnalyticField::stacked_profile(prof, K_AIR, b));
        let s = f.sample(&Vec3::new(0.001, 0.0, 0.005)).unwrap();
        assert!((s.n - (1.0 + K_AIR * (1.225 + 0.01))).abs() < 1e-15);
        assert!((s.grad.x - K_AIR * 10.0).abs() < 1e-18);
        assert_eq!(s.grad.z, 0.0);
        assert!(f.min_spacing().is_none());
    }
}
