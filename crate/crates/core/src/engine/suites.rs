//! Built-in validation suites and the canned configurations they run.

use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, GainSetting, GeometryConfig, MediumConfig, RunConfig, SceneConfig, SensorConfig, SourceConfig};
use super::bos_run;
use crate::bos::BosParams;
use crate::error::{Error, Result};
use crate::grin::{rk4_step, RayState};
use crate::math::{Aabb, Vec3};
use crate::optics::{propagate_through_lens, refract, LensElement, Refraction};
use crate::raygen::{BundleSpec, Ray, Sampling};
use crate::rng::StreamKey;
use crate::scene::{AnalyticField, DotPatternSpec, RefractiveField, SliceProfile, DENSITY_WINDOW_PX, K_AIR, RHO_AIR};
use crate::sensor::{accumulate_spot, diffraction_diameter, ImageBuffer, SensorModel};

pub const SUITES: [&str; 6] = ["snell", "rk4-convergence", "lens-focus", "energy", "bos-uniform", "bos-blob"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value < limit,
        }
    }

    fn above(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value > limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub table_header: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<Vec<f64>>,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<Check>) -> Self {
        Self {
            suite: suite.into(),
            passed: checks.iter().all(|c| c.passed),
            checks,
            table_header: vec![],
            table: vec![],
        }
    }
}

/// Runs a named suite; BOS suites write their files under `out_dir`.
pub fn validate(suite: &str, out_dir: &Path) -> Result<SuiteReport> {
    match suite {
        "snell" => Ok(snell()),
        "rk4-convergence" => Ok(rk4_convergence()),
        "lens-focus" => Ok(lens_focus()),
        "energy" => Ok(energy()),
        "bos-uniform" => {
            let mut c = bos_uniform_config(40, 1000);
            c.run.out_dir = out_dir.join("bos-uniform");
            bos_uniform(&c)
        }
        "bos-blob" => {
            let mut c = bos_blob_config(320, 2000, 200);
            c.run.out_dir = out_dir.join("bos-blob");
            bos_blob(&c)
        }
        other => Err(Error::UnknownSuite(other.into())),
    }
}

pub const TABLE1_FOCAL_LENGTH: f64 = 0.105;
pub const TABLE1_F_NUMBER: f64 = 11.0;
pub const TABLE1_Z_D: f64 = 0.25;
/// Field-to-lens distance giving M = 0.12 exactly for f = 105 mm.
pub const TABLE1_Z_A: f64 = 0.73;
pub const TABLE1_PITCH: f64 = 10e-6;
/// Effective green wavelength implied by the quoted 47.22 um spot diameter.
pub const TABLE1_WAVELENGTH: f64 = 500e-9;
pub const TABLE1_DOT_DENSITY: f64 = 20.0;

/// Table 1 camera with `n_dots` dots spread over a square whose image is
/// `sqrt(n_dots * 1024 / 20)` pixels wide, centred on a `resolution`-pixel sensor.
pub fn table1_config(n_dots: usize, resolution: usize, rays_per_source: usize, medium: MediumConfig) -> ExperimentConfig {
    let geometry = GeometryConfig {
        z_d: TABLE1_Z_D,
        z_a: TABLE1_Z_A,
        focal_length: TABLE1_FOCAL_LENGTH,
        f_number: TABLE1_F_NUMBER,
        l_z: None,
    };
    let side_px = (n_dots as f64 * DENSITY_WINDOW_PX / TABLE1_DOT_DENSITY).sqrt();
    let side = side_px * TABLE1_PITCH / geometry.magnification();
    ExperimentConfig {
        scene: SceneConfig {
            source: SourceConfig::DotPattern(DotPatternSpec {
                extent: [side, side],
                center: [0.0, 0.0],
                density: TABLE1_DOT_DENSITY,
                dot_diameter: 0.0,
            }),
            medium,
            gladstone_dale: K_AIR,
            ambient_density: RHO_AIR,
        },
        geometry,
        optics: vec![],
        sensor: SensorConfig {
            resolution: [resolution, resolution],
            pixel_pitch: TABLE1_PITCH,
            bit_depth: 16,
            gain: GainSetting::default(),
            distance: None,
            wavelength: TABLE1_WAVELENGTH,
            diffraction_pi_factor: true,
        },
        bundle: BundleSpec {
            rays_per_source,
            sampling: Sampling::Stratified,
            seed: 1,
        },
        run: RunConfig::default(),
        notes: None,
    }
}

/// Stacked linear slice, 40 mm square and `L_z = 10 mm` deep.
pub fn uniform_gradient_medium(gradient_x: f64) -> MediumConfig {
    MediumConfig::Slice {
        profile: SliceProfile::Linear {
            rho0: RHO_AIR,
            gradient: [gradient_x, 0.0],
            center: [0.0, 0.0],
        },
        dims: [40, 40, 10],
        spacing: [1e-3, 1e-3, 1e-3],
        analytic: false,
    }
}

/// Stacked Gaussian density bump (0.5 kg/m^3, sigma 3 mm) on a 32 mm square,
/// 10 mm deep grid.
pub fn gaussian_blob_medium() -> MediumConfig {
    MediumConfig::Slice {
        profile: SliceProfile::GaussianBlob {
            rho0: RHO_AIR,
            amplitude: 0.5,
            sigma: 3e-3,
            center: [0.0, 0.0],
        },
        dims: [64, 64, 10],
        spacing: [0.5e-3, 0.5e-3, 1e-3],
        analytic: false,
    }
}

pub fn bos_uniform_config(n_dots: usize, rays_per_source: usize) -> ExperimentConfig {
    let side = (n_dots as f64 * DENSITY_WINDOW_PX / TABLE1_DOT_DENSITY).sqrt().ceil() as usize;
    let mut c = table1_config(n_dots, side + 8, rays_per_source, uniform_gradient_medium(10.0));
    c.run.bos_grid = [4, 4];
    c.run.bos_bin_px = (side as f64 / 2.0).max(4.0);
    c
}

pub fn bos_blob_config(resolution: usize, n_dots: usize, rays_per_source: usize) -> ExperimentConfig {
    table1_config(n_dots, resolution, rays_per_source, gaussian_blob_medium())
}

/// Small-angle displacement on the sensor for a gradient along x, pixels.
pub fn eq9_pixels(config: &ExperimentConfig, gradient: f64, l_z: f64) -> f64 {
    let p = BosParams {
        magnification: config.geometry.magnification(),
        z_d: config.geometry.z_d,
        k: config.scene.gladstone_dale,
        n0: config.scene.gladstone_dale * config.scene.ambient_density + 1.0,
        l_z,
    };
    p.sensitivity() * gradient / config.sensor.pixel_pitch
}

fn unit_from(s: &mut crate::rng::RayStream) -> Vec3 {
    let z = 2.0 * s.next_f64() - 1.0;
    let phi = std::f64::consts::TAU * s.next_f64();
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

fn snell() -> SuiteReport {
    let at = |deg: f64| Vec3::new(deg.to_radians().sin(), 0.0, deg.to_radians().cos());
    let theta = match refract(&at(30.0), &-Vec3::z(), 1.0, 1.5) {
        Refraction::Transmitted(d) => d.x.atan2(d.z).to_degrees(),
        Refraction::TotalInternalReflection => f64::NAN,
    };
    let tir = refract(&at(60.0), &-Vec3::z(), 1.5, 1.0) == Refraction::TotalInternalReflection;
    let mut worst = 0.0f64;
    for i in 0..100_000u64 {
        let mut s = StreamKey::new(0x5ee1, 0, i).stream();
        let d = unit_from(&mut s);
        let n = unit_from(&mut s);
        let ni = 1.0 + s.next_f64();
        let nf = 1.0 + s.next_f64();
        if let Refraction::Transmitted(out) = refract(&d, &n, ni, nf) {
            worst = worst.max((ni * d.cross(&n).norm() - nf * out.cross(&n).norm()).abs());
        }
    }
    SuiteReport::new(
        "snell",
        vec![
            Check::below("refraction_angle_error_deg", (theta - 19.4712).abs(), 1e-4),
            Check::above("tir_detected", f64::from(u8::from(tir)), 0.5),
            Check::below("tangential_invariant_max", worst, 1e-12),
        ],
    )
}

/// `n = 1 + 0.01 exp(-r^2 / w^2)` about the z axis, w = 4 mm.
pub fn gaussian_index_field() -> RefractiveField {
    let w = 0.004;
    let b = Aabb::new(Vec3::new(-0.05, -0.05, -0.05), Vec3::new(0.05, 0.05, 0.05));
    RefractiveField::Analytic(AnalyticField::new(b, 1.0, move |p| {
        let e = 0.01 * (-(p.x * p.x + p.y * p.y) / (w * w)).exp();
        (1.0 + e, Vec3::new(-2.0 * p.x / (w * w) * e, -2.0 * p.y / (w * w) * e, 0.0))
    }))
}

fn march(field: &RefractiveField, start: Vec3, dir: Vec3, total: f64, steps: usize) -> RayState {
    let mut s = RayState {
        position: start,
        t: dir.normalize() * field.sample(&start).unwrap().n,
    };
    let h = total / steps as f64;
    for _ in 0..steps {
        s = rk4_step(&s, field, h).expect("finite field");
    }
    s
}

/// Richardson order from three step halvings, the `(delta_xi, error)` table
/// against a fine reference, and the worst eikonal drift over 1000 steps.
pub fn rk4_study() -> (f64, Vec<(f64, f64)>, f64) {
    let f = gaussian_index_field();
    let start = Vec3::new(-0.004, 0.003, -0.02);
    let total = 0.04;
    let reference = march(&f, start, Vec3::z(), total, 6400).position;
    let runs: Vec<(f64, Vec3)> = [20usize, 40, 80]
        .iter()
        .map(|&n| (total / n as f64, march(&f, start, Vec3::z(), total, n).position))
        .collect();
    let order = ((runs[0].1 - runs[1].1).norm() / (runs[1].1 - runs[2].1).norm()).log2();
    let table = runs.iter().map(|(h, p)| (*h, (p - reference).norm())).collect();

    let mut s = RayState {
        position: start,
        t: Vec3::new(0.05, 0.0, 1.0).normalize() * f.sample(&start).unwrap().n,
    };
    let mut drift = 0.0f64;
    for _ in 0..1000 {
        s = rk4_step(&s, &f, 4e-5).expect("finite field");
        drift = drift.max((s.t.norm() / f.sample(&s.position).unwrap().n - 1.0).abs());
    }
    (order, table, drift)
}

fn rk4_convergence() -> SuiteReport {
    let (order, table, drift) = rk4_study();
    let mut r = SuiteReport::new(
        "rk4-convergence",
        vec![
            Check::above("richardson_order", order, 3.5),
            Check::below("eikonal_drift", drift, 1e-6),
        ],
    );
    r.table_header = vec!["delta_xi".into(), "error".into()];
    r.table = table.into_iter().map(|(h, e)| vec![h, e]).collect();
    r
}

/// Axis crossings, measured from the lens centre, of rays entering parallel
/// at heights 0.1 mm and 10 mm, plus the thin-lens lensmaker focal length.
pub fn biconvex_focus() -> (f64, f64, f64) {
    let lens = LensElement::new(Vec3::zeros(), Vec3::z(), Some(0.1), Some(-0.1), 0.002, 1.5, 0.025, 1.0)
        .expect("valid lens");
    let lensmaker = 1.0 / ((1.5 - 1.0) * (1.0 / 0.1 - 1.0 / -0.1));
    let crossing = |h: f64| {
        let r = Ray::new(Vec3::new(h, 0.0, -0.5), Vec3::z(), 1.0, TABLE1_WAVELENGTH).unwrap();
        let out = propagate_through_lens(&r, &lens).expect("ray passes the lens");
        out.origin.z - out.origin.x * out.direction.z / out.direction.x - lens.center().z
    };
    (crossing(1e-4), crossing(0.01), lensmaker)
}

fn lens_focus() -> SuiteReport {
    let (paraxial, marginal, f) = biconvex_focus();
    SuiteReport::new(
        "lens-focus",
        vec![
            Check::below("paraxial_focus_relative_error", ((paraxial - f) / f).abs(), 0.02),
            Check::above("paraxial_minus_marginal_focus", paraxial - marginal, 0.0),
        ],
    )
}

/// Worst relative energy error and centroid error (pixels) for Table 1 spots
/// at pseudo-random sub-pixel positions well inside a 64 x 64 sensor.
pub fn spot_study(trials: u64) -> (f64, f64) {
    let sensor = SensorModel::new(Vec3::zeros(), Vec3::z(), Vec3::x(), 64, 64, TABLE1_PITCH, 16, 1.0).unwrap();
    let d_tau = diffraction_diameter(TABLE1_F_NUMBER, 0.12, TABLE1_WAVELENGTH, true);
    let (mut e_worst, mut c_worst) = (0.0f64, 0.0f64);
    for i in 0..trials {
        let mut s = StreamKey::new(0xe4e4, 0, i).stream();
        let u = (s.next_f64() - 0.5) * 10.0 * TABLE1_PITCH;
        let v = (s.next_f64() - 0.5) * 10.0 * TABLE1_PITCH;
        let energy = 0.5 + s.next_f64();
        let mut img = ImageBuffer::new(64, 64);
        accumulate_spot(&mut img, (u, v), d_tau, energy, &sensor);
        e_worst = e_worst.max(((img.sum() - energy) / energy).abs());
        let (cx, cy) = img.centroid().unwrap();
        let (ex, ey) = sensor.to_pixels(u, v);
        c_worst = c_worst.max((cx - ex).hypot(cy - ey));
    }
    (e_worst, c_worst)
}

fn energy() -> SuiteReport {
    let (e, c) = spot_study(200);
    SuiteReport::new(
        "energy",
        vec![
            Check::below("energy_relative_error", e, 1e-6),
            Check::below("centroid_error_px", c, 1e-3),
        ],
    )
}

/// Mean x displacement within 5% of the small-angle value, one sign for all dots.
pub fn bos_uniform(config: &ExperimentConfig) -> Result<SuiteReport> {
    let out = bos_run(config)?;
    let l_z = config.geometry.l_z.unwrap_or(0.01);
    let expected = eq9_pixels(config, 10.0, l_z);
    let measured = out.summary.mean_displacement_px[0];
    let pitch = config.sensor.pixel_pitch;
    let wrong_sign = out
        .dots
        .iter()
        .filter(|d| d.valid && d.displacement[0] / pitch * expected.signum() <= 0.0)
        .count();
    let mut r = SuiteReport::new(
        "bos-uniform",
        vec![
            Check::below("mean_displacement_relative_error", ((measured - expected) / expected).abs(), 0.05),
            Check::below("dots_with_wrong_sign", wrong_sign as f64, 0.5),
        ],
    );
    r.table_header = vec!["expected_px".into(), "measured_px".into()];
    r.table = vec![vec![expected, measured]];
    Ok(r)
}

/// Correlation with theory above 0.95 and a measured peak no larger than theory's.
pub fn bos_blob(config: &ExperimentConfig) -> Result<SuiteReport> {
    let out = bos_run(config)?;
    let m = out.summary.metrics;
    let pitch = config.sensor.pixel_pitch;
    Ok(SuiteReport::new(
        "bos-blob",
        vec![
            Check::above("pearson_correlation", m.pearson_correlation, 0.95),
            Check::below(
                "measured_minus_theory_peak_px",
                (out.measured.peak_magnitude() - out.theory.peak_magnitude()) / pitch,
                1e-12,
            ),
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_an_error() {
        let e = validate("nope", Path::new("/tmp")).unwrap_err();
        assert!(matches!(e, Error::UnknownSuite(_)));
    }

    #[test]
    fn cheap_suites_pass() {
        for s in ["snell", "lens-focus", "energy", "rk4-convergence"] {
            let r = validate(s, Path::new("/tmp")).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn rk4_table_has_three_rows() {
        let r = validate("rk4-convergence", Path::new("/tmp")).unwrap();
        assert_eq!(r.table.len(), 3);
        assert!(r.table[0][1] > r.table[1][1] && r.table[1][1] > r.table[2][1]);
    }

    #[test]
    fn table1_dot_count() {
        let exp = super::super::Experiment::new(table1_config(100, 80, 4, MediumConfig::None)).unwrap();
        assert_eq!(exp.sources.len(), 100);
    }
}
