//! Background-oriented schlieren displacements: the small-angle theory,
//! per-dot displacements from ray bookkeeping, gridding, and field metrics.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Grid2;

/// Regular node grid carrying a 2-component displacement and a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub nx: usize,
    pub ny: usize,
    /// Coordinates of node (0, 0).
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub values: Vec<[f64; 2]>,
    pub mask: Vec<bool>,
}

impl DisplacementField {
    pub fn from_fn(spec: &GridSpec, mut f: impl FnMut(f64, f64) -> Option<[f64; 2]>) -> Self {
        let mut values = Vec::with_capacity(spec.nx * spec.ny);
        let mut mask = Vec::with_capacity(spec.nx * spec.ny);
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (x, y) = spec.node(i, j);
                match f(x, y) {
                    Some(v) => {
                        values.push(v);
                        mask.push(true);
                    }
                    None => {
                        values.push([0.0; 2]);
                        mask.push(false);
                    }
                }
            }
        }
        Self {
            nx: spec.nx,
            ny: spec.ny,
            x0: spec.x0,
            y0: spec.y0,
            dx: spec.dx,
            dy: spec.dy,
            values,
            mask,
        }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            nx: self.nx,
            ny: self.ny,
            x0: self.x0,
            y0: self.y0,
            dx: self.dx,
            dy: self.dy,
        }
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + i as f64 * self.dx, self.y0 + j as f64 * self.dy)
    }

    pub fn at(&self, i: usize, j: usize) -> Option<[f64; 2]> {
        let k = i + self.nx * j;
        self.mask[k].then_some(self.values[k])
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Largest displacement magnitude over valid nodes.
    pub fn peak_magnitude(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    /// Bilinear interpolation; `None` outside the grid or next to a masked node.
    pub fn sample(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let fx = (x - self.x0) / self.dx;
        let fy = (y - self.y0) / self.dy;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= (self.nx - 1) as f64 && fy <= (self.ny - 1) as f64) {
            return None;
        }
        let i = (fx as usize).min(self.nx.saturating_sub(2));
        let j = (fy as usize).min(self.ny.saturating_sub(2));
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let i1 = (i + 1).min(self.nx - 1);
        let j1 = (j + 1).min(self.ny - 1);
        let corners = [
            (self.at(i, j)?, (1.0 - tx) * (1.0 - ty)),
            (self.at(i1, j)?, tx * (1.0 - ty)),
            (self.at(i, j1)?, (1.0 - tx) * ty),
            (self.at(i1, j1)?, tx * ty),
        ];
        let mut out = [0.0; 2];
        for (v, w) in corners {
            out[0] += w * v[0];
            out[1] += w * v[1];
        }
        Some(out)
    }

    /// `x,y,dx,dy,mask`, one node per row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,dx,dy,mask")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (x, y) = self.node(i, j);
                let k = i + self.nx * j;
                let v = self.values[k];
                writeln!(w, "{x:e},{y:e},{:e},{:e},{}", v[0], v[1], u8::from(self.mask[k]))?;
            }
        }
        w.flush()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            v[0] *= s;
            v[1] *= s;
        }
        out
    }
}

/// Node layout of a regular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
}

impl GridSpec {
    /// `nx x ny` nodes spanning `[xmin, xmax] x [ymin, ymax]` inclusive.
    pub fn spanning(xmin: f64, xmax: f64, ymin: f64, ymax: f64, nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            x0: xmin,
            y0: ymin,
            dx: (xmax - xmin) / (nx.max(2) - 1) as f64,
            dy: (ymax - ymin) / (ny.max(2) - 1) as f64,
        }
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + i as f64 * self.dx, self.y0 + j as f64 * self.dy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || !(self.dx > 0.0) || !(self.dy > 0.0) {
            return Err(Error::Invalid("grid needs >= 2 nodes per axis and increasing axes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BosParams {
    pub magnification: f64,
    /// Dot pattern to density-field distance, m.
    pub z_d: f64,
    /// Gladstone-Dale constant, m^3/kg.
    pub k: f64,
    /// Ambient refractive index.
    pub n0: f64,
    /// Depth of the density field, m.
    pub l_z: f64,
}

impl BosParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.magnification, self.z_d, self.k, self.n0, self.l_z];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid(format!("BOS parameters must all be positive: {self:?}")));
        }
        Ok(())
    }

    /// Displacement per unit depth-averaged density gradient, m per kg/m^4.
    pub fn sensitivity(&self) -> f64 {
        self.magnification * self.z_d * self.k * self.l_z / self.n0
    }
}

/// Small-angle BOS displacement `M Z_D K / n0 * grad(rho) * L_z` at every node
/// of the slice-gradient grids, in sensor-plane metres along +grad(rho).
pub fn theoretical_displacement(grad_x: &Grid2, grad_y: &Grid2, p: &BosParams) -> Result<DisplacementField> {
    p.validate()?;
    if (grad_x.nx, grad_x.ny) != (grad_y.nx, grad_y.ny) || grad_x.spacing != grad_y.spacing {
        return Err(Error::Invalid("gradient components must share a grid".into()));
    }
    if grad_x.values.iter().chain(&grad_y.values).any(|g| !g.is_finite()) {
        return Err(Error::Invalid("density gradient must be finite".into()));
    }
    let s = p.sensitivity();
    let (cx, cy) = grad_x.node(0, 0);
    let spec = GridSpec {
        nx: grad_x.nx,
        ny: grad_x.ny,
        x0: cx,
        y0: cy,
        dx: grad_x.spacing[0],
        dy: grad_x.spacing[1],
    };
    let mut k = 0;
    Ok(DisplacementField::from_fn(&spec, |_, _| {
        let v = [s * grad_x.values[k], s * grad_y.values[k]];
        k += 1;
        Some(v)
    }))
}

/// Displacement of one dot, attached to its reference image location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotDisplacement {
    pub location: [f64; 2],
    pub displacement: [f64; 2],
    pub valid: bool,
}

fn mean(hits: &[(f64, f64)]) -> Option<[f64; 2]> {
    if hits.is_empty() {
        return None;
    }
    let n = hits.len() as f64;
    let (sx, sy) = hits.iter().fold((0.0, 0.0), |(a, b), h| (a + h.0, b + h.1));
    Some([sx / n, sy / n])
}

/// Per dot: mean of the hits with the density field minus the mean without.
/// Dots with no surviving rays in either trace are returned invalid.
pub fn measure_dot_displacements(
    ref_hits: &[Vec<(f64, f64)>],
    grad_hits: &[Vec<(f64, f64)>],
) -> Result<Vec<DotDisplacement>> {
    if ref_hits.len() != grad_hits.len() {
        return Err(Error::Invalid(format!(
            "trace dot counts differ: {} vs {}",
            ref_hits.len(),
            grad_hits.len()
        )));
    }
    Ok(ref_hits
        .iter()
        .zip(grad_hits)
        .map(|(r, g)| match (mean(r), mean(g)) {
            (Some(a), Some(b)) => DotDisplacement {
                location: a,
                displacement: [b[0] - a[0], b[1] - a[1]],
                valid: true,
            },
            (a, _) => DotDisplacement {
                location: a.unwrap_or([f64::NAN; 2]),
                displacement: [0.0; 2],
                valid: false,
            },
        })
        .collect())
}

/// Bin-averages scattered dots into cells of size `bin` laid out from the
/// grid's first node, then resamples the cell averages bilinearly at every
/// node. A node is masked when its own cell is empty; empty neighbouring
/// cells drop out of the interpolation weights.
pub fn grid_displacements(scattered: &[DotDisplacement], grid: &GridSpec, bin: [f64; 2]) -> Result<DisplacementField> {
    grid.validate()?;
    if !(bin[0] > 0.0 && bin[1] > 0.0) {
        return Err(Error::Invalid("bin size must be > 0".into()));
    }
    let valid: Vec<&DotDisplacement> = scattered.iter().filter(|d| d.valid).collect();
    if valid.len() < 4 {
        return Err(Error::Invalid(format!("need at least 4 valid dots to grid, have {}", valid.len())));
    }
    let (gx0, gy0) = (grid.x0 - 0.5 * grid.dx, grid.y0 - 0.5 * grid.dy);
    let width = grid.dx * grid.nx as f64;
    let height = grid.dy * grid.ny as f64;
    let cx = (width / bin[0]).ceil().max(1.0) as usize;
    let cy = (height / bin[1]).ceil().max(1.0) as usize;
    let cell_of = |x: f64, y: f64| -> Option<(usize, usize)> {
        let fx = (x - gx0) / bin[0];
        let fy = (y - gy0) / bin[1];
        (fx >= 0.0 && fy >= 0.0 && fx < cx as f64 && fy < cy as f64).then_some((fx as usize, fy as usize))
    };
    let mut sums = vec![[0.0f64; 2]; cx * cy];
    let mut counts = vec![0usize; cx * cy];
    for d in &valid {
        if let Some((i, j)) = cell_of(d.location[0], d.location[1]) {
            let k = i + cx * j;
            sums[k][0] += d.displacement[0];
            sums[k][1] += d.displacement[1];
            counts[k] += 1;
        }
    }
    let cell = |i: usize, j: usize| -> Option<[f64; 2]> {
        let k = i + cx * j;
        (counts[k] > 0).then(|| [sums[k][0] / counts[k] as f64, sums[k][1] / counts[k] as f64])
    };

    Ok(DisplacementField::from_fn(grid, |x, y| {
        let (ci, cj) = cell_of(x, y)?;
        cell(ci, cj)?;
        // position in cell-centre coordinates
        let fx = ((x - gx0) / bin[0] - 0.5).clamp(0.0, (cx - 1) as f64);
        let fy = ((y - gy0) / bin[1] - 0.5).clamp(0.0, (cy - 1) as f64);
        let i = (fx as usize).min(cx.saturating_sub(2));
        let j = (fy as usize).min(cy.saturating_sub(2));
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let (i1, j1) = ((i + 1).min(cx - 1), (j + 1).min(cy - 1));
        let mut acc = [0.0; 2];
        let mut wsum = 0.0;
        for (ii, jj, w) in [
            (i, j, (1.0 - tx) * (1.0 - ty)),
            (i1, j, tx * (1.0 - ty)),
            (i, j1, (1.0 - tx) * ty),
            (i1, j1, tx * ty),
        ] {
            if let Some(v) = cell(ii, jj) {
                acc[0] += w * v[0];
                acc[1] += w * v[1];
                wsum += w;
            }
        }
        if wsum > 0.0 {
            Some([acc[0] / wsum, acc[1] / wsum])
        } else {
            cell(ci, cj)
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    pub rms_error: f64,
    pub peak_abs_error: f64,
    /// Pearson correlation over both components, each centred on its own
    /// mean; NaN if either field has no variation.
    pub pearson_correlation: f64,
    pub nodes: usize,
    pub peak_a: f64,
    pub peak_b: f64,
}

impl FieldMetrics {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "rms_error,peak_abs_error,pearson_correlation,nodes,peak_a,peak_b")?;
        writeln!(
            w,
            "{:e},{:e},{},{},{:e},{:e}",
            self.rms_error, self.peak_abs_error, self.pearson_correlation, self.nodes, self.peak_a, self.peak_b
        )?;
        w.flush()
    }
}

pub fn compare_fields(a: &DisplacementField, b: &DisplacementField) -> Result<FieldMetrics> {
    if a.spec() != b.spec() {
        return Err(Error::Invalid("fields must share a grid".into()));
    }
    let joint: Vec<usize> = (0..a.values.len()).filter(|&k| a.mask[k] && b.mask[k]).collect();
    if joint.is_empty() {
        return Err(Error::Invalid("fields have no valid nodes in common".into()));
    }
    let n = joint.len() as f64;
    let mut se = 0.0;
    let mut peak = 0.0f64;
    let mut peak_a = 0.0f64;
    let mut peak_b = 0.0f64;
    let mut mean_a = [0.0; 2];
    let mut mean_b = [0.0; 2];
    for &k in &joint {
        let (va, vb) = (a.values[k], b.values[k]);
        let e = (va[0] - vb[0]).hypot(va[1] - vb[1]);
        se += e * e;
        peak = peak.max(e);
        peak_a = peak_a.max(va[0].hypot(va[1]));
        peak_b = peak_b.max(vb[0].hypot(vb[1]));
        for c in 0..2 {
            mean_a[c] += va[c] / n;
            mean_b[c] += vb[c] / n;
        }
    }
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &k in &joint {
        for c in 0..2 {
            let da = a.values[k][c] - mean_a[c];
            let db = b.values[k][c] - mean_b[c];
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
    }
    let denom = (saa * sbb).sqrt();
    Ok(FieldMetrics {
        rms_error: (se / n).sqrt(),
        peak_abs_error: peak,
        pearson_correlation: if denom > 0.0 { sab / denom } else { f64::NAN },
        nodes: joint.len(),
        peak_a,
        peak_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{SliceProfile, K_AIR};

    fn table_params() -> BosParams {
        BosParams {
            magnification: 0.12,
            z_d: 0.25,
            k: K_AIR,
            n0: 1.000277,
            l_z: 0.01,
        }
    }

    fn const_grad(gx: f64, gy: f64) -> (Grid2, Grid2) {
        let a = Grid2::from_fn(4, 4, [1e-3, 1e-3], [0.0, 0.0], |_, _| gx);
        let b = Grid2::from_fn(4, 4, [1e-3, 1e-3], [0.0, 0.0], |_, _| gy);
        (a, b)
    }

    #[test]
    fn zero_gradient_zero_displacement() {
        let (gx, gy) = const_grad(0.0, 0.0);
        let f = theoretical_displacement(&gx, &gy, &table_params()).unwrap();
        assert!(f.values.iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn table_displacement_value() {
        let (gx, gy) = const_grad(10.0, 0.0);
        let f = theoretical_displacement(&gx, &gy, &table_params()).unwrap();
        let dx = f.values[0][0];
        assert!((dx - 6.778e-7).abs() < 0.001e-7, "{dx}");
        assert!((dx / 10e-6 - 0.0678).abs() < 5e-5);
    }

    #[test]
    fn displacement_is_homogeneous() {
        let (gx, gy) = const_grad(3.0, -2.0);
        let base = theoretical_displacement(&gx, &gy, &table_params()).unwrap().values[5];
        let s = 2.0;
        let p = table_params();
        let variants = [
            BosParams { l_z: p.l_z * s, ..p },
            BosParams { z_d: p.z_d * s, ..p },
            BosParams {
                magnification: p.magnification * s,
                ..p
            },
        ];
        for v in variants {
            let out = theoretical_displacement(&gx, &gy, &v).unwrap().values[5];
            assert!((out[0] - s * base[0]).abs() < 1e-20 && (out[1] - s * base[1]).abs() < 1e-20);
        }
        let (gx2, gy2) = const_grad(6.0, -4.0);
        let out = theoretical_displacement(&gx2, &gy2, &p).unwrap().values[5];
        assert!((out[0] - 2.0 * base[0]).abs() < 1e-20);
    }

    #[test]
    fn invalid_params_rejected() {
        let (gx, gy) = const_grad(1.0, 0.0);
        let p = BosParams { z_d: 0.0, ..table_params() };
        assert!(theoretical_displacement(&gx, &gy, &p).is_err());
    }

    #[test]
    fn identical_hits_give_zero() {
        let hits = vec![vec![(1e-4, 2e-4), (1.1e-4, 2.2e-4)]];
        let d = measure_dot_displacements(&hits, &hits).unwrap();
        assert_eq!(d[0].displacement, [0.0, 0.0]);
        assert!(d[0].valid);
    }

    #[test]
    fn constant_shift_is_recovered() {
        let r = vec![vec![(1e-4, 2e-4), (1.5e-4, 1.0e-4), (0.3e-4, -2e-4)]];
        let g: Vec<Vec<(f64, f64)>> = r.iter().map(|h| h.iter().map(|(u, v)| (u + 3e-7, v - 1e-7)).collect()).collect();
        let d = measure_dot_displacements(&r, &g).unwrap();
        assert!((d[0].displacement[0] - 3e-7).abs() < 1e-18);
        assert!((d[0].displacement[1] + 1e-7).abs() < 1e-18);
    }

    #[test]
    fn empty_dots_are_masked() {
        let r = vec![vec![(0.0, 0.0)], vec![]];
        let g = vec![vec![], vec![(0.0, 0.0)]];
        let d = measure_dot_displacements(&r, &g).unwrap();
        assert!(!d[0].valid && !d[1].valid);
        assert!(measure_dot_displacements(&r, &g[..1]).is_err());
    }

    fn scatter(n: usize, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<DotDisplacement> {
        // deterministic low-discrepancy scatter over [0, 1e-3]^2
        (0..n)
            .map(|i| {
                let x = ((i as f64 + 0.5) / n as f64) * 1e-3;
                let y = ((i as f64 * 0.618_033_988_749_895).fract()) * 1e-3;
                DotDisplacement {
                    location: [x, y],
                    displacement: f(x, y),
                    valid: true,
                }
            })
            .collect()
    }

    fn grid() -> GridSpec {
        GridSpec::spanning(0.05e-3, 0.95e-3, 0.05e-3, 0.95e-3, 10, 10)
    }

    #[test]
    fn constant_scatter_grids_to_constant() {
        let dots = scatter(400, |_, _| [2e-7, -1e-7]);
        let f = grid_displacements(&dots, &grid(), [0.2e-3, 0.2e-3]).unwrap();
        assert!(f.valid_count() > 0);
        for k in 0..f.values.len() {
            if f.mask[k] {
                assert!((f.values[k][0] - 2e-7).abs() < 1e-20 && (f.values[k][1] + 1e-7).abs() < 1e-20);
            }
        }
    }

    #[test]
    fn linear_scatter_reproduces_plane() {
        let plane = |x: f64, y: f64| [1e-4 * x + 2e-4 * y, -3e-4 * x];
        let dots = scatter(20_000, plane);
        let f = grid_displacements(&dots, &grid(), [0.1e-3, 0.1e-3]).unwrap();
        let scale = 3e-4 * 1e-3;
        let mut checked = 0;
        for j in 1..9 {
            for i in 1..9 {
                let (x, y) = f.node(i, j);
                let v = f.at(i, j).unwrap();
                let p = plane(x, y);
                // binning error: the gradient times a small fraction of a bin
                assert!((v[0] - p[0]).abs() < 0.05 * scale && (v[1] - p[1]).abs() < 0.05 * scale);
                checked += 1;
            }
        }
        assert_eq!(checked, 64);
    }

    #[test]
    fn single_dot_support_is_local() {
        let mut dots = scatter(4, |_, _| [1e-7, 0.0]);
        // pile all four dots into one bin
        for d in &mut dots {
            d.location = [0.45e-3, 0.45e-3];
        }
        let f = grid_displacements(&dots, &grid(), [0.2e-3, 0.2e-3]).unwrap();
        let valid: Vec<(f64, f64)> = (0..10)
            .flat_map(|j| (0..10).map(move |i| (i, j)))
            .filter(|&(i, j)| f.at(i, j).is_some())
            .map(|(i, j)| f.node(i, j))
            .collect();
        assert!(!valid.is_empty() && valid.len() < 10);
        for (x, y) in valid {
            assert!((x - 0.45e-3).abs() < 0.2e-3 && (y - 0.45e-3).abs() < 0.2e-3);
        }
    }

    #[test]
    fn too_few_dots() {
        let dots = scatter(3, |_, _| [0.0, 0.0]);
        assert!(grid_displacements(&dots, &grid(), [0.2e-3, 0.2e-3]).is_err());
    }

    fn blob_field() -> DisplacementField {
        let prof = SliceProfile::GaussianBlob {
            rho0: 1.0,
            amplitude: 1.0,
            sigma: 0.2e-3,
            center: [0.5e-3, 0.5e-3],
        };
        DisplacementField::from_fn(&grid(), |x, y| Some(prof.gradient(x, y)))
    }

    #[test]
    fn compare_identical_and_offset() {
        let a = blob_field();
        let m = compare_fields(&a, &a).unwrap();
        assert_eq!(m.rms_error, 0.0);
        assert!((m.pearson_correlation - 1.0).abs() < 1e-12);
        let c = [30.0, -40.0];
        let mut b = a.clone();
        for v in &mut b.values {
            v[0] += c[0];
            v[1] += c[1];
        }
        let m = compare_fields(&a, &b).unwrap();
        assert!((m.rms_error - 50.0).abs() < 1e-9);
        assert!((m.pearson_correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_lowers_correlation_and_peak() {
        let a = blob_field();
        // 3x3 box filter, computed directly
        let mut b = a.clone();
        for j in 1..9 {
            for i in 1..9 {
                let mut acc = [0.0; 2];
                for dj in 0..3 {
                    for di in 0..3 {
                        let v = a.at(i + di - 1, j + dj - 1).unwrap();
                        acc[0] += v[0] / 9.0;
                        acc[1] += v[1] / 9.0;
                    }
                }
                b.values[i + 10 * j] = acc;
            }
        }
        let m = compare_fields(&a, &b).unwrap();
        assert!(m.pearson_correlation < 1.0 && m.pearson_correlation > 0.5);
        assert!(b.peak_magnitude() <= a.peak_magnitude());
    }

    #[test]
    fn compare_requires_overlap() {
        let a = blob_field();
        let mut b = a.clone();
        b.mask.iter_mut().for_each(|m| *m = false);
        assert!(compare_fields(&a, &b).is_err());
        let other = DisplacementField::from_fn(&GridSpec::spanning(0.0, 1.0, 0.0, 1.0, 10, 10), |_, _| Some([0.0; 2]));
        assert!(compare_fields(&a, &other).is_err());
    }

    #[test]
    fn bilinear_sample_of_field() {
        let f = DisplacementField::from_fn(&grid(), |x, y| Some([x + 2.0 * y, -x]));
        let v = f.sample(0.333e-3, 0.777e-3).unwrap();
        assert!((v[0] - (0.333e-3 + 2.0 * 0.777e-3)).abs() < 1e-15);
        assert!(f.sample(2e-3, 0.5e-3).is_none());
    }

    #[test]
    fn csv_layout() {
        let f = DisplacementField::from_fn(&GridSpec::spanning(0.0, 1.0, 0.0, 1.0, 2, 2), |x, _| (x < 0.5).then_some([1.0, 2.0]));
        let mut out = Vec::new();
        f.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x,y,dx,dy,mask");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(",1") && lines[2].ends_with(",0"));
    }
}
