//! Virtual camera sensor: ray-plane intersection, Gaussian diffraction spots
//! integrated per pixel with `erf`, and quantisation.
//!
//! Sensor coordinates `(u, v)` are metres in the sensor plane measured from
//! its centre. Pixel `(i, j)` covers `u` in `[(i - W/2) p, (i + 1 - W/2) p)`
//! and likewise for `v` and rows.

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::raygen::Ray;

/// Spot support half-width, in Gaussian standard deviations.
pub const SUPPORT_SIGMAS: f64 = 6.0;

const SUPPORTED_BIT_DEPTHS: [u32; 4] = [8, 10, 12, 16];

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub center: Vec3,
    pub normal: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f64,
    pub bit_depth: u32,
    /// Counts per unit radiance.
    pub gain: f64,
}

impl SensorModel {
    /// Sensor facing along `normal`, with `u` and `v` completing a right-handed
    /// basis from the given `u_hint`.
    pub fn new(
        center: Vec3,
        normal: Vec3,
        u_hint: Vec3,
        width: usize,
        height: usize,
        pixel_pitch: f64,
        bit_depth: u32,
        gain: f64,
    ) -> Result<Self> {
        if !(pixel_pitch > 0.0) {
            return Err(Error::Invalid("pixel pitch must be > 0".into()));
        }
        if !SUPPORTED_BIT_DEPTHS.contains(&bit_depth) {
            return Err(Error::Invalid(format!("bit depth must be one of {SUPPORTED_BIT_DEPTHS:?}, got {bit_depth}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Invalid("sensor resolution must be non-zero".into()));
        }
        if !(gain > 0.0) {
            return Err(Error::Invalid("gain must be > 0".into()));
        }
        let normal = normal.normalize();
        let u_axis = (u_hint - normal * u_hint.dot(&normal)).normalize();
        if !u_axis.iter().all(|c| c.is_finite()) {
            return Err(Error::Invalid("sensor u axis is parallel to its normal".into()));
        }
        let v_axis = normal.cross(&u_axis);
        Ok(Self {
            center,
            normal,
            u_axis,
            v_axis,
            width,
            height,
            pixel_pitch,
            bit_depth,
            gain,
        })
    }

    pub fn full_scale(&self) -> u32 {
        (1u32 << self.bit_depth) - 1
    }

    /// Continuous pixel coordinates of a sensor-plane point.
    pub fn to_pixels(&self, u: f64, v: f64) -> (f64, f64) {
        (
            u / self.pixel_pitch + self.width as f64 / 2.0,
            v / self.pixel_pitch + self.height as f64 / 2.0,
        )
    }
}

/// Forward intersection of the ray with the sensor plane, as `(u, v)` metres.
pub fn intersect_sensor(ray: &Ray, sensor: &SensorModel) -> Option<(f64, f64)> {
    let denom = ray.direction.dot(&sensor.normal);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = (sensor.center - ray.origin).dot(&sensor.normal) / denom;
    if !(t > 0.0) {
        return None;
    }
    let rel = ray.at(t) - sensor.center;
    Some((rel.dot(&sensor.u_axis), rel.dot(&sensor.v_axis)))
}

/// Diffraction-limited spot diameter `2.44 pi f# (M + 1) lambda`, or the
/// classical `2.44 f# (M + 1) lambda` when `pi_factor` is false.
pub fn diffraction_diameter(f_number: f64, magnification: f64, wavelength: f64, pi_factor: bool) -> f64 {
    let base = 2.44 * f_number * (magnification + 1.0) * wavelength;
    if pi_factor {
        base * std::f64::consts::PI
    } else {
        base
    }
}

/// Floating-point accumulation image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x + self.width * y]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Element-wise sum; sizes must match.
    pub fn add_assign(&mut self, other: &ImageBuffer) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Intensity-weighted centroid in pixel coordinates (pixel centres at `i + 0.5`).
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let w = self.get(x, y);
                sx += w * (x as f64 + 0.5);
                sy += w * (y as f64 + 0.5);
                s += w;
            }
        }
        (s > 0.0).then(|| (sx / s, sy / s))
    }
}

/// Per-pixel integrals of a Gaussian spot over the pixels it touches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Footprint {
    pub x0: usize,
    pub y0: usize,
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
}

impl Footprint {
    /// Fills the footprint of a spot centred at pixel coordinates `(cx, cy)`.
    /// Returns `false` when the support lies entirely off the sensor.
    pub fn compute(&mut self, cx: f64, cy: f64, sigma_px: f64, width: usize, height: usize) -> bool {
        let Some(x0) = axis_weights(&mut self.wx, cx, sigma_px, width) else {
            return false;
        };
        let Some(y0) = axis_weights(&mut self.wy, cy, sigma_px, height) else {
            return false;
        };
        self.x0 = x0;
        self.y0 = y0;
        true
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.y0..self.y0 + self.wy.len()
    }

    /// Adds `energy` times the footprint to one image row.
    #[inline]
    pub fn deposit_row(&self, row: &mut [f64], y: usize, energy: f64) {
        let wy = energy * self.wy[y - self.y0];
        for (px, w) in row[self.x0..self.x0 + self.wx.len()].iter_mut().zip(&self.wx) {
            *px += wy * w;
        }
    }
}

/// One axis of the separable pixel integral. Returns the first pixel index.
fn axis_weights(out: &mut Vec<f64>, c: f64, sigma: f64, n: usize) -> Option<usize> {
    out.clear();
    let reach = SUPPORT_SIGMAS * sigma;
    let lo = (c - reach).floor().max(0.0);
    let hi = (c + reach).ceil().min(n as f64);
    if !(lo < hi) {
        return None;
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let scale = 1.0 / (std::f64::consts::SQRT_2 * sigma);
    let mut prev = libm::erf((lo as f64 - c) * scale);
    for i in lo..hi {
        let next = libm::erf((i as f64 + 1.0 - c) * scale);
        out.push(0.5 * (next - prev));
        prev = next;
    }
    Some(lo)
}

/// Gaussian standard deviation for a spot of diffraction diameter `d_tau`
/// (taken as the e^-2 intensity diameter).
pub fn spot_sigma(d_tau: f64) -> f64 {
    d_tau / 4.0
}

/// Adds a Gaussian spot of total `energy` centred at sensor point `center`.
/// Only the part of the spot that falls on the sensor is deposited.
pub fn accumulate_spot(img: &mut ImageBuffer, center: (f64, f64), d_tau: f64, energy: f64, sensor: &SensorModel) {
    let mut fp = Footprint::default();
    let (cx, cy) = sensor.to_pixels(center.0, center.1);
    let sigma_px = spot_sigma(d_tau) / sensor.pixel_pitch;
    if !fp.compute(cx, cy, sigma_px, img.width, img.height) {
        return;
    }
    let width = img.width;
    for y in fp.rows() {
        let row = &mut img.data[y * width..(y + 1) * width];
        fp.deposit_row(row, y, energy);
    }
}

/// `round(gain * value)` clamped to the bit depth's range.
pub fn quantize(img: &ImageBuffer, bit_depth: u32, gain: f64) -> Vec<u16> {
    let full = ((1u32 << bit_depth.min(16)) - 1) as f64;
    img.data
        .iter()
        .map(|&v| (gain * v).round().clamp(0.0, full) as u16)
        .collect()
}

/// Gain that maps `peak` to `fraction` of full scale.
pub fn gain_for_peak(peak: f64, bit_depth: u32, fraction: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Invalid("reference spot has no intensity; cannot calibrate gain".into()));
    }
    Ok(fraction * ((1u32 << bit_depth) - 1) as f64 / peak)
}
