//! Pipeline orchestration: config → scene → trace → optics → sensor → files.
//!
//! Sources are traced in parallel and their hit lists collected in source
//! order. In deterministic mode the image is then accumulated by row bands,
//! each band visiting every hit in that same order, so pixel sums do not
//! depend on the worker count.

pub mod config;
pub mod suites;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    ElementConfig, ExperimentConfig, GainMode, GainSetting, GeometryConfig, MediumConfig, RunConfig, SceneConfig,
    SensorConfig, SourceConfig,
};

use crate::bos::{
    compare_fields, grid_displacements, measure_dot_displacements, theoretical_displacement, BosParams,
    DisplacementField, DotDisplacement, FieldMetrics, GridSpec,
};
use crate::error::{Error, Result};
use crate::grin::{trace_through_volume, trace_through_volume_with, LostReason, StepParams, TraceOutcome};
use crate::math::{Aabb, Vec3};
use crate::optics::{
    propagate_chain, Aperture, BlockReason, LensElement, Mirror, OpticalElement, SphericalSurface, ThinLensIdeal,
};
use crate::pgm::GrayImage;
use crate::raygen::{emit_rays, sample_aperture_points, Ray, UniformRadiance};
use crate::scene::{
    build_refractive_field, generate_dot_pattern, load_density_volume, stack_2d_slice, AnalyticField, DensityVolume,
    Grid2, ParticleField, RefractiveField,
};
use crate::sensor::{
    accumulate_spot, diffraction_diameter, gain_for_peak, intersect_sensor, quantize, spot_sigma, Footprint,
    ImageBuffer, SensorModel, SUPPORT_SIGMAS,
};

/// Fraction of full scale the auto-gain reference dot peaks at.
pub const AUTO_GAIN_PEAK: f64 = 0.9;

const BLOCK_REASONS: [BlockReason; 5] = [
    BlockReason::Aperture,
    BlockReason::LensMiss,
    BlockReason::TotalInternalReflection,
    BlockReason::MirrorMiss,
    BlockReason::SensorMiss,
];

const LOST_REASONS: [LostReason; 2] = [LostReason::MaxSteps, LostReason::NonFinite];

/// Ray arrival in the sensor plane, `(u, v)` in metres from the sensor centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub u: f64,
    pub v: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayFate {
    Landed(Hit),
    /// `SensorMiss` keeps the off-sensor plane hit; its spot may still clip the sensor.
    Blocked(BlockReason, Option<Hit>),
    Lost(LostReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RayCounts {
    pub emitted: u64,
    pub landed: u64,
    pub blocked: [u64; 5],
    pub lost: [u64; 2],
}

impl RayCounts {
    fn record(&mut self, fate: &RayFate) {
        self.emitted += 1;
        match fate {
            RayFate::Landed(_) => self.landed += 1,
            RayFate::Blocked(r, _) => self.blocked[BLOCK_REASONS.iter().position(|b| b == r).unwrap()] += 1,
            RayFate::Lost(r) => self.lost[LOST_REASONS.iter().position(|l| l == r).unwrap()] += 1,
        }
    }

    pub fn merge(&mut self, o: &RayCounts) {
        self.emitted += o.emitted;
        self.landed += o.landed;
        for (a, b) in self.blocked.iter_mut().zip(o.blocked) {
            *a += b;
        }
        for (a, b) in self.lost.iter_mut().zip(o.lost) {
            *a += b;
        }
    }
}

/// Everything one source's bundle produced, in ray order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceTrace {
    /// Sensor-plane hits, including those just off the sensor.
    pub hits: Vec<Hit>,
    pub counts: RayCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub emitted: u64,
    pub blocked: BTreeMap<String, u64>,
    pub lost: BTreeMap<String, u64>,
    pub landed: u64,
    pub wall_time_s: f64,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub deterministic: bool,
    pub sources: usize,
    pub gain: f64,
}

impl RunReport {
    pub fn blocked_total(&self) -> u64 {
        self.blocked.values().sum()
    }

    pub fn lost_total(&self) -> u64 {
        self.lost.values().sum()
    }

    /// `emitted == blocked + lost + landed`.
    pub fn is_balanced(&self) -> bool {
        self.emitted == self.blocked_total() + self.lost_total() + self.landed
    }
}

/// A config turned into concrete scene, optics and sensor objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub sources: Vec<Vec3>,
    pub field: Option<RefractiveField>,
    pub step: Option<StepParams>,
    /// Depth-averaged density gradient (d/dx, d/dy) over the field's (x, y) grid.
    pub gradient: Option<(Grid2, Grid2)>,
    pub l_z: Option<f64>,
    pub elements: Vec<OpticalElement>,
    pub sensor: SensorModel,
    pub d_tau: f64,
    pub threads: usize,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let g = config.geometry;
        let s = config.sensor;
        let lens_z = g.object_distance();
        let m = g.magnification();

        let sensor = SensorModel::new(
            Vec3::new(0.0, 0.0, lens_z + s.distance.unwrap_or_else(|| g.image_distance())),
            Vec3::z(),
            Vec3::x(),
            s.resolution[0],
            s.resolution[1],
            s.pixel_pitch,
            s.bit_depth,
            1.0,
        )?;

        let sources = match &config.scene.source {
            SourceConfig::DotPattern(spec) => {
                generate_dot_pattern(spec, m, s.pixel_pitch, 0.0, config.bundle.seed)?.source_points()
            }
            SourceConfig::Particles {
                positions,
                diameters,
                volume,
            } => {
                let pts = positions.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
                let b = Aabb::new(Vec3::from(volume[0]), Vec3::from(volume[1]));
                ParticleField::new(pts, diameters.clone(), &b)?.positions
            }
        };

        let (field, gradient, depth) = build_medium(&config)?;
        let step = field
            .as_ref()
            .map(|f| StepParams::for_field(f, config.run.delta_xi, config.run.max_steps));
        let elements = build_optics(&config)?;
        let threads = match config.run.threads {
            0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            n => n,
        };
        Ok(Self {
            sources,
            field,
            step,
            gradient,
            l_z: g.l_z.or(depth),
            elements,
            sensor,
            d_tau: diffraction_diameter(g.f_number, m, s.wavelength, s.diffraction_pi_factor),
            threads,
            config,
        })
    }

    pub fn lens_z(&self) -> f64 {
        self.config.geometry.object_distance()
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }

    /// Rays of source `index` leaving `origin`, aimed at the first element.
    pub fn bundle(&self, origin: &Vec3, index: u64) -> Result<Vec<Ray>> {
        let disk = self.elements[0].entrance_disk();
        let pts = sample_aperture_points(&disk, &self.config.bundle, index);
        emit_rays(origin, &pts, self.config.sensor.wavelength, &UniformRadiance)
    }

    pub fn trace_ray(&self, ray: &Ray, with_medium: bool) -> RayFate {
        let ray = match (&self.field, &self.step, with_medium) {
            (Some(f), Some(p), true) => match trace_through_volume(ray, f, p) {
                TraceOutcome::Exited(r) => r,
                TraceOutcome::Lost(why) => return RayFate::Lost(why),
            },
            _ => *ray,
        };
        self.finish_ray(&ray)
    }

    fn finish_ray(&self, ray: &Ray) -> RayFate {
        let out = match propagate_chain(ray, &self.elements) {
            Ok(r) => r,
            Err(why) => return RayFate::Blocked(why, None),
        };
        let Some((u, v)) = intersect_sensor(&out, &self.sensor) else {
            return RayFate::Blocked(BlockReason::SensorMiss, None);
        };
        let hit = Hit {
            u,
            v,
            energy: out.radiance,
        };
        let (px, py) = self.sensor.to_pixels(u, v);
        let inside = px >= 0.0 && py >= 0.0 && px < self.sensor.width as f64 && py < self.sensor.height as f64;
        if inside {
            RayFate::Landed(hit)
        } else {
            RayFate::Blocked(BlockReason::SensorMiss, Some(hit))
        }
    }

    pub fn trace_point(&self, origin: &Vec3, index: u64, with_medium: bool) -> Result<SourceTrace> {
        let mut out = SourceTrace::default();
        for ray in self.bundle(origin, index)? {
            let fate = self.trace_ray(&ray, with_medium);
            out.counts.record(&fate);
            match fate {
                RayFate::Landed(h) | RayFate::Blocked(_, Some(h)) => out.hits.push(h),
                _ => {}
            }
        }
        Ok(out)
    }

    fn trace_all(&self, pool: &rayon::ThreadPool, with_medium: bool) -> Result<Vec<SourceTrace>> {
        pool.install(|| {
            self.sources
                .par_iter()
                .enumerate()
                .map(|(i, p)| self.trace_point(p, i as u64, with_medium))
                .collect()
        })
    }

    /// Deposits the spots of every hit, in source then ray order.
    pub fn accumulate(&self, pool: &rayon::ThreadPool, traces: &[SourceTrace]) -> ImageBuffer {
        let (w, h) = (self.sensor.width, self.sensor.height);
        let mut img = ImageBuffer::new(w, h);
        if self.config.run.deterministic {
            let sigma_px = spot_sigma(self.d_tau) / self.sensor.pixel_pitch;
            let reach = SUPPORT_SIGMAS * sigma_px;
            let band_rows = h.div_ceil(self.threads.max(1));
            let sensor = &self.sensor;
            pool.install(|| {
                img.data_mut()
                    .par_chunks_mut(band_rows * w)
                    .enumerate()
                    .for_each(|(b, chunk)| {
                        let y_lo = b * band_rows;
                        let y_hi = y_lo + chunk.len() / w;
                        let mut fp = Footprint::default();
                        for hit in traces.iter().flat_map(|t| &t.hits) {
                            let (cx, cy) = sensor.to_pixels(hit.u, hit.v);
                            if cy + reach < y_lo as f64 || cy - reach > y_hi as f64 {
                                continue;
                            }
                            if !fp.compute(cx, cy, sigma_px, w, h) {
                                continue;
                            }
                            for y in fp.rows().filter(|y| (y_lo..y_hi).contains(y)) {
                                let r = (y - y_lo) * w;
                                fp.deposit_row(&mut chunk[r..r + w], y, hit.energy);
                            }
                        }
                    });
            });
            img
        } else {
            pool.install(|| {
                traces
                    .par_iter()
                    .fold(
                        || ImageBuffer::new(w, h),
                        |mut acc, t| {
                            for hit in &t.hits {
                                accumulate_spot(&mut acc, (hit.u, hit.v), self.d_tau, hit.energy, &self.sensor);
                            }
                            acc
                        },
                    )
                    .reduce(
                        || ImageBuffer::new(w, h),
                        |mut a, b| {
                            a.add_assign(&b);
                            a
                        },
                    )
            })
        }
    }

    /// Configured gain, or the one that puts an on-axis reference dot at
    /// 90% of full scale.
    pub fn gain(&self, pool: &rayon::ThreadPool) -> Result<f64> {
        match self.config.sensor.gain {
            GainSetting::Fixed(g) => Ok(g),
            GainSetting::Named(GainMode::Auto) => {
                let reference = self.trace_point(&Vec3::zeros(), 0, false)?;
                let img = self.accumulate(pool, std::slice::from_ref(&reference));
                gain_for_peak(img.max(), self.sensor.bit_depth, AUTO_GAIN_PEAK)
            }
        }
    }

    fn frame(&self, pool: &rayon::ThreadPool, with_medium: bool) -> Result<Frame> {
        let start = Instant::now();
        let traces = self.trace_all(pool, with_medium)?;
        let image = self.accumulate(pool, &traces);
        let mut counts = RayCounts::default();
        for t in &traces {
            counts.merge(&t.counts);
        }
        Ok(Frame {
            traces,
            image,
            counts,
            elapsed: start.elapsed().as_secs_f64(),
        })
    }

    fn report(&self, counts: &RayCounts, wall_time_s: f64, gain: f64) -> RunReport {
        let named = |names: Vec<&'static str>, vals: &[u64]| -> BTreeMap<String, u64> {
            names.into_iter().map(String::from).zip(vals.iter().copied()).collect()
        };
        RunReport {
            emitted: counts.emitted,
            blocked: named(BLOCK_REASONS.iter().map(|r| r.as_str()).collect(), &counts.blocked),
            lost: named(LOST_REASONS.iter().map(|r| r.as_str()).collect(), &counts.lost),
            landed: counts.landed,
            wall_time_s,
            config_hash: self.config.hash(),
            seed: self.config.bundle.seed,
            threads: self.threads,
            deterministic: self.config.run.deterministic,
            sources: self.sources.len(),
            gain,
        }
    }

    fn gray(&self, img: &ImageBuffer, gain: f64) -> Result<GrayImage> {
        let bits = self.sensor.bit_depth;
        GrayImage::new(
            img.width(),
            img.height(),
            ((1u32 << bits) - 1) as u16,
            quantize(img, bits, gain),
        )
    }
}

struct Frame {
    traces: Vec<SourceTrace>,
    image: ImageBuffer,
    counts: RayCounts,
    elapsed: f64,
}

fn build_medium(config: &ExperimentConfig) -> Result<(Option<RefractiveField>, Option<(Grid2, Grid2)>, Option<f64>)> {
    let k = config.scene.gladstone_dale;
    let center = Vec3::new(0.0, 0.0, config.geometry.z_d);
    match &config.scene.medium {
        MediumConfig::None => Ok((None, None, None)),
        MediumConfig::Volume { path } => {
            let vol = load_density_volume(path)?.centered_at(center);
            let grads = depth_averaged_gradient(&vol);
            let depth = vol.extent().z;
            Ok((Some(build_refractive_field(&vol, k)?), Some(grads), Some(depth)))
        }
        MediumConfig::Slice {
            profile,
            dims,
            spacing,
            analytic,
        } => {
            let origin = [-0.5 * dims[0] as f64 * spacing[0], -0.5 * dims[1] as f64 * spacing[1]];
            let slice = profile.sample(dims[0], dims[1], [spacing[0], spacing[1]], origin);
            let vol = stack_2d_slice(&slice, dims[2], spacing[2])?.centered_at(center);
            let field = if *analytic {
                RefractiveField::Analytic(AnalyticField::stacked_profile(*profile, k, vol.bounds()))
            } else {
                build_refractive_field(&vol, k)?
            };
            let xy = [spacing[0], spacing[1]];
            let gx = Grid2::from_fn(dims[0], dims[1], xy, origin, |x, y| profile.gradient(x, y)[0]);
            let gy = Grid2::from_fn(dims[0], dims[1], xy, origin, |x, y| profile.gradient(x, y)[1]);
            Ok((Some(field), Some((gx, gy)), Some(vol.extent().z)))
        }
    }
}

fn depth_averaged_gradient(vol: &DensityVolume) -> (Grid2, Grid2) {
    let [nx, ny, nz] = vol.dims();
    let sp = vol.spacing();
    let o = vol.origin();
    let mut idx = 0usize;
    let mean = Grid2::from_fn(nx, ny, [sp[0], sp[1]], [o.x, o.y], |_, _| {
        let (i, j) = (idx % nx, idx / nx);
        idx += 1;
        (0..nz).map(|k| vol.at(i, j, k)).sum::<f64>() / nz as f64
    });
    mean.gradient()
}

fn build_optics(config: &ExperimentConfig) -> Result<Vec<OpticalElement>> {
    let g = config.geometry;
    let lens_z = g.object_distance();
    let at = |offset: f64| Vec3::new(0.0, 0.0, lens_z + offset);
    if config.optics.is_empty() {
        return Ok(vec![
            OpticalElement::Aperture(Aperture::from_f_number(at(0.0), Vec3::z(), g.focal_length, g.f_number)?),
            OpticalElement::ThinLens(ThinLensIdeal::new(at(0.0), Vec3::z(), g.focal_length, g.focal_length)?),
        ]);
    }
    config
        .optics
        .iter()
        .map(|e| {
            Ok(match *e {
                ElementConfig::ThinLens {
                    offset,
                    focal_length,
                    diameter,
                } => OpticalElement::ThinLens(ThinLensIdeal::new(at(offset), Vec3::z(), focal_length, diameter)?),
                ElementConfig::Lens {
                    offset,
                    front_radius,
                    back_radius,
                    thickness,
                    glass_index,
                    diameter,
                } => OpticalElement::Lens(LensElement::new(
                    at(offset),
                    Vec3::z(),
                    front_radius,
                    back_radius,
                    thickness,
                    glass_index,
                    diameter,
                    1.0,
                )?),
                ElementConfig::Aperture { offset, radius } => OpticalElement::Aperture(Aperture::new(
                    at(offset),
                    Vec3::z(),
                    radius.unwrap_or_else(|| g.stop_radius()),
                )?),
                ElementConfig::Mirror {
                    offset,
                    radius,
                    diameter,
                } => OpticalElement::Mirror(Mirror {
                    surface: SphericalSurface::new(at(offset), Vec3::z(), radius, diameter / 2.0, 1.0, 1.0)?,
                }),
            })
        })
        .collect()
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_with<T>(path: &Path, f: impl FnOnce(BufWriter<File>) -> std::io::Result<T>) -> Result<T> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    f(BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |mut w| {
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::other)?;
        std::io::Write::write_all(&mut w, b"\n")
    })
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: GrayImage,
    /// Accumulated radiance before quantisation.
    pub radiance: ImageBuffer,
    pub report: RunReport,
    pub image_path: PathBuf,
    pub report_path: PathBuf,
}

/// Traces every source through the medium and optics, writes `image.pgm`
/// and `report.json` into the output directory.
pub fn render(config: &ExperimentConfig) -> Result<RenderOutput> {
    let start = Instant::now();
    let exp = Experiment::new(config.clone())?;
    let pool = exp.pool()?;
    let gain = exp.gain(&pool)?;
    let frame = exp.frame(&pool, true)?;
    let image = exp.gray(&frame.image, gain)?;
    let report = exp.report(&frame.counts, start.elapsed().as_secs_f64(), gain);

    let dir = &config.run.out_dir;
    create_out_dir(dir)?;
    let image_path = dir.join("image.pgm");
    let report_path = dir.join("report.json");
    write_with(&image_path, |w| image.write_binary(w))?;
    write_json(&report_path, &report)?;
    log::info!(
        "rendered {} sources, {} of {} rays landed in {:.2}s",
        exp.sources.len(),
        report.landed,
        report.emitted,
        frame.elapsed
    );
    Ok(RenderOutput {
        image,
        radiance: frame.image,
        report,
        image_path,
        report_path,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BosSummary {
    pub reference: RunReport,
    pub gradient: RunReport,
    pub metrics: FieldMetrics,
    /// Mean per-dot displacement, pixels.
    pub mean_displacement_px: [f64; 2],
    pub valid_dots: usize,
    /// Least-squares sensor/dot-plane scale; negative for an inverted image.
    pub signed_magnification: f64,
}

#[derive(Debug, Clone)]
pub struct BosOutput {
    pub summary: BosSummary,
    pub dots: Vec<DotDisplacement>,
    pub measured: DisplacementField,
    pub theory: DisplacementField,
    pub reference_image: GrayImage,
    pub gradient_image: GrayImage,
}

/// Traces the scene with and without the density field using identical ray
/// streams, measures per-dot displacements and compares them with the
/// small-angle theory on a common sensor grid. Writes `reference.pgm`,
/// `gradient.pgm`, `dots.csv`, `measured.csv`, `theory.csv`, `metrics.csv`
/// and `bos_report.json`. Displacements and coordinates are sensor-plane metres.
pub fn bos_run(config: &ExperimentConfig) -> Result<BosOutput> {
    let exp = Experiment::new(config.clone())?;
    let (Some((gx, gy)), Some(l_z)) = (&exp.gradient, exp.l_z) else {
        return Err(Error::Config("a BOS run needs a density medium".into()));
    };
    let pool = exp.pool()?;
    let gain = exp.gain(&pool)?;
    let reference = exp.frame(&pool, false)?;
    let gradient = exp.frame(&pool, true)?;

    let hits = |f: &Frame| -> Vec<Vec<(f64, f64)>> {
        f.traces.iter().map(|t| t.hits.iter().map(|h| (h.u, h.v)).collect()).collect()
    };
    let dots = measure_dot_displacements(&hits(&reference), &hits(&gradient))?;
    let m_signed = signed_magnification(&exp.sources, &dots).unwrap_or(-exp.config.geometry.magnification());

    let pitch = exp.sensor.pixel_pitch;
    let bin = exp.config.run.bos_bin_px * pitch;
    let half = [
        0.5 * exp.sensor.width as f64 * pitch,
        0.5 * exp.sensor.height as f64 * pitch,
    ];
    let inset = |h: f64| (0.5 * bin).min(0.49 * h);
    let [nx, ny] = exp.config.run.bos_grid;
    let spec = GridSpec::spanning(
        -half[0] + inset(half[0]),
        half[0] - inset(half[0]),
        -half[1] + inset(half[1]),
        half[1] - inset(half[1]),
        nx,
        ny,
    );
    let measured = grid_displacements(&dots, &spec, [bin, bin])?;

    let params = BosParams {
        magnification: m_signed.abs(),
        z_d: exp.config.geometry.z_d,
        k: exp.config.scene.gladstone_dale,
        n0: exp.config.scene.gladstone_dale * exp.config.scene.ambient_density + 1.0,
        l_z,
    };
    let theory_field = theoretical_displacement(gx, gy, &params)?;
    // chief ray from the dot through the lens centre, at the field mid-plane
    let shrink = 1.0 - exp.config.geometry.z_d / exp.lens_z();
    let sign = -m_signed.signum();
    let theory = DisplacementField::from_fn(&spec, |u, v| {
        let (x0, y0) = (u / m_signed, v / m_signed);
        theory_field
            .sample(x0 * shrink, y0 * shrink)
            .map(|d| [sign * d[0], sign * d[1]])
    });
    let metrics = compare_fields(&theory, &measured)?;

    let valid: Vec<&DotDisplacement> = dots.iter().filter(|d| d.valid).collect();
    let mut mean = [0.0; 2];
    for d in &valid {
        mean[0] += d.displacement[0] / pitch / valid.len() as f64;
        mean[1] += d.displacement[1] / pitch / valid.len() as f64;
    }

    let reference_image = exp.gray(&reference.image, gain)?;
    let gradient_image = exp.gray(&gradient.image, gain)?;
    let summary = BosSummary {
        reference: exp.report(&reference.counts, reference.elapsed, gain),
        gradient: exp.report(&gradient.counts, gradient.elapsed, gain),
        metrics,
        mean_displacement_px: mean,
        valid_dots: valid.len(),
        signed_magnification: m_signed,
    };

    let dir = &config.run.out_dir;
    create_out_dir(dir)?;
    write_with(&dir.join("reference.pgm"), |w| reference_image.write_binary(w))?;
    write_with(&dir.join("gradient.pgm"), |w| gradient_image.write_binary(w))?;
    write_with(&dir.join("measured.csv"), |w| measured.write_csv(w))?;
    write_with(&dir.join("theory.csv"), |w| theory.write_csv(w))?;
    write_with(&dir.join("metrics.csv"), |w| metrics.write_csv(w))?;
    write_with(&dir.join("dots.csv"), |mut w| {
        use std::io::Write;
        writeln!(w, "x,y,dx,dy,valid")?;
        for d in &dots {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{}",
                d.location[0],
                d.location[1],
                d.displacement[0],
                d.displacement[1],
                u8::from(d.valid)
            )?;
        }
        w.flush()
    })?;
    write_json(&dir.join("bos_report.json"), &summary)?;
    log::info!(
        "bos: {} dots, mean displacement ({:.4}, {:.4}) px, correlation {:.4}",
        summary.valid_dots,
        mean[0],
        mean[1],
        metrics.pearson_correlation
    );
    Ok(BosOutput {
        summary,
        dots,
        measured,
        theory,
        reference_image,
        gradient_image,
    })
}

/// Least-squares `m` in `image location = m * dot position`.
fn signed_magnification(sources: &[Vec3], dots: &[DotDisplacement]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (s, d) in sources.iter().zip(dots).filter(|(_, d)| d.valid) {
        num += d.location[0] * s.x + d.location[1] * s.y;
        den += s.x * s.x + s.y * s.y;
    }
    (den > 0.0).then(|| num / den)
}

#[derive(Debug, Clone)]
pub struct TraceDebug {
    /// `[xi, x, y, z, tx, ty, tz]` for the entry point and every GRIN step.
    pub steps: Vec<[f64; 7]>,
    pub fate: RayFate,
    pub path: PathBuf,
}

/// Follows ray `ray` of source `dot` and writes its GRIN steps to
/// `trace_dot{dot}_ray{ray}.csv`.
pub fn trace_debug(config: &ExperimentConfig, dot: usize, ray: usize) -> Result<TraceDebug> {
    let exp = Experiment::new(config.clone())?;
    let origin = exp
        .sources
        .get(dot)
        .ok_or_else(|| Error::Invalid(format!("dot {dot} out of range ({} sources)", exp.sources.len())))?;
    let rays = exp.bundle(origin, dot as u64)?;
    let r = rays
        .get(ray)
        .ok_or_else(|| Error::Invalid(format!("ray {ray} out of range ({} per source)", rays.len())))?;
    let mut steps = Vec::new();
    let fate = match (&exp.field, &exp.step) {
        (Some(f), Some(p)) => {
            let out = trace_through_volume_with(r, f, p, |xi, s| {
                steps.push([xi, s.position.x, s.position.y, s.position.z, s.t.x, s.t.y, s.t.z]);
            });
            match out {
                TraceOutcome::Exited(r) => exp.finish_ray(&r),
                TraceOutcome::Lost(why) => RayFate::Lost(why),
            }
        }
        _ => exp.finish_ray(r),
    };
    let dir = &config.run.out_dir;
    create_out_dir(dir)?;
    let path = dir.join(format!("trace_dot{dot}_ray{ray}.csv"));
    write_with(&path, |mut w| {
        use std::io::Write;
        writeln!(w, "xi,x,y,z,tx,ty,tz")?;
        for s in &steps {
            let line: Vec<String> = s.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()
    })?;
    Ok(TraceDebug { steps, fate, path })
}
