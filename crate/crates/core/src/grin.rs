//! Ray integration through a gradient-index medium.
//!
//! The ray equation `d/ds (n dx/ds) = grad n` is rewritten with the parameter
//! `dt = ds / n`, giving `d^2 R / dt^2 = D(R)` with `D = n grad n` and
//! `T = dR/dt = n dx/ds`. The step is the fourth-order Runge-Kutta-Nystrom
//! scheme of Sharma, Kumar and Ghatak; `|T| = n(R)` is preserved to the
//! order of the method.

use crate::math::{Aabb, Vec3};
use crate::raygen::Ray;
use crate::scene::RefractiveField;

/// Position and scaled direction `T = n dx/ds` of a ray inside the medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    pub position: Vec3,
    pub t: Vec3,
}

impl RayState {
    pub fn direction(&self) -> Vec3 {
        self.t.normalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub delta_xi: f64,
    pub max_steps: usize,
}

impl StepParams {
    /// Half the smallest grid spacing, with a step budget of four box diagonals.
    pub fn for_field(field: &RefractiveField, delta_xi: Option<f64>, max_steps: Option<usize>) -> Self {
        let b = field.bounds();
        let delta_xi = delta_xi
            .or_else(|| field.min_spacing().map(|h| h / 2.0))
            .unwrap_or_else(|| b.extent().min() / 50.0);
        let max_steps = max_steps.unwrap_or_else(|| (4.0 * b.diagonal() / delta_xi).ceil() as usize + 16);
        Self { delta_xi, max_steps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LostReason {
    MaxSteps,
    NonFinite,
}

impl LostReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            LostReason::MaxSteps => "max_steps",
            LostReason::NonFinite => "non_finite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceOutcome {
    /// Ray left the volume (or never entered it).
    Exited(Ray),
    Lost(LostReason),
}

/// `n grad n` at `r`; zero outside the field.
#[inline]
pub fn d_function(field: &RefractiveField, r: &Vec3) -> Vec3 {
    match field.sample(r) {
        Some(s) => s.grad * s.n,
        None => Vec3::zeros(),
    }
}

/// One Runge-Kutta-Nystrom step of size `delta_xi`. `None` if the field
/// produced a non-finite value.
#[inline]
pub fn rk4_step(state: &RayState, field: &RefractiveField, delta_xi: f64) -> Option<RayState> {
    let r = state.position;
    let t = state.t;
    let a = d_function(field, &r) * delta_xi;
    let b = d_function(field, &(r + (t * 0.5 + a * 0.125) * delta_xi)) * delta_xi;
    let c = d_function(field, &(r + (t + b * 0.5) * delta_xi)) * delta_xi;
    let next = RayState {
        position: r + (t + (a + b * 2.0) / 6.0) * delta_xi,
        t: t + (a + b * 4.0 + c) / 6.0,
    };
    if next.position.iter().chain(next.t.iter()).all(|v| v.is_finite()) {
        Some(next)
    } else {
        None
    }
}

/// Slab-method entry/exit parameters of the line `origin + t*dir` with `b`.
/// `t_near` is clamped to 0 when the origin lies inside.
pub fn aabb_intersect(ray: &Ray, b: &Aabb) -> Option<(f64, f64)> {
    let (t0, t1) = slab_interval(&ray.origin, &ray.direction, b)?;
    if t1 < 0.0 {
        return None;
    }
    Some((t0.max(0.0), t1))
}

fn slab_interval(origin: &Vec3, dir: &Vec3, b: &Aabb) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if dir[k] == 0.0 {
            if origin[k] < b.min[k] || origin[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[k];
        let mut a = (b.min[k] - origin[k]) * inv;
        let mut c = (b.max[k] - origin[k]) * inv;
        if a > c {
            std::mem::swap(&mut a, &mut c);
        }
        t0 = t0.max(a);
        t1 = t1.min(c);
    }
    if t0 <= t1 {
        Some((t0, t1))
    } else {
        None
    }
}

pub fn trace_through_volume(ray: &Ray, field: &RefractiveField, params: &StepParams) -> TraceOutcome {
    trace_through_volume_with(ray, field, params, |_, _| {})
}

/// As [`trace_through_volume`], calling `record(xi, state)` at the entry
/// point and after every step.
pub fn trace_through_volume_with(
    ray: &Ray,
    field: &RefractiveField,
    params: &StepParams,
    mut record: impl FnMut(f64, &RayState),
) -> TraceOutcome {
    let bounds = field.bounds();
    let Some((t_near, _)) = aabb_intersect(ray, &bounds) else {
        return TraceOutcome::Exited(*ray);
    };
    let entry = clamp_into(&ray.at(t_near), &bounds);
    let n_entry = match field.sample(&entry) {
        Some(s) => s.n,
        None => return TraceOutcome::Exited(*ray),
    };
    let mut state = RayState {
        position: entry,
        t: ray.direction * n_entry,
    };
    let mut xi = 0.0;
    record(xi, &state);

    for _ in 0..params.max_steps {
        let Some(next) = rk4_step(&state, field, params.delta_xi) else {
            return TraceOutcome::Lost(LostReason::NonFinite);
        };
        if bounds.contains(&next.position) {
            state = next;
            xi += params.delta_xi;
            record(xi, &state);
            continue;
        }
        // truncated last step: linear crossing parameter on the chord
        let chord = next.position - state.position;
        let frac = slab_interval(&state.position, &chord, &bounds)
            .map(|(_, t1)| t1.clamp(0.0, 1.0))
            .unwrap_or(0.0);
        let last = if frac > 0.0 {
            match rk4_step(&state, field, frac * params.delta_xi) {
                Some(s) => s,
                None => return TraceOutcome::Lost(LostReason::NonFinite),
            }
        } else {
            state
        };
        xi += frac * params.delta_xi;
        record(xi, &last);
        return TraceOutcome::Exited(ray.with(last.position, last.direction()));
    }
    TraceOutcome::Lost(LostReason::MaxSteps)
}

fn clamp_into(p: &Vec3, b: &Aabb) -> Vec3 {
    Vec3::new(
        p.x.clamp(b.min.x, b.max.x),
        p.y.clamp(b.min.y, b.max.y),
        p.z.clamp(b.min.z, b.max.z),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_refractive_field, stack_2d_slice, AnalyticField, Grid2, SliceProfile, K_AIR};

    fn unit_box() -> Aabb {
        Aabb::new(Vec3::new(-0.016, -0.016, 0.245), Vec3::new(0.016, 0.016, 0.255))
    }

    fn ray(o: Vec3, d: Vec3) -> Ray {
        Ray::new(o, d, 1.0, 5e-7).unwrap()
    }

    fn uniform(n: f64) -> RefractiveField {
        RefractiveField::Analytic(AnalyticField::new(unit_box(), K_AIR, move |_| (n, Vec3::zeros())))
    }

    /// n = 1 + alpha * y over a large box.
    fn linear_y(alpha: f64) -> RefractiveField {
        let b = Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
        RefractiveField::Analytic(AnalyticField::new(b, K_AIR, move |p| (1.0 + alpha * p.y, Vec3::new(0.0, alpha, 0.0))))
    }

    #[test]
    fn d_is_zero_in_uniform_field() {
        assert_eq!(d_function(&uniform(1.0003), &unit_box().center()), Vec3::zeros());
    }

    #[test]
    fn d_for_linear_index() {
        let alpha = 0.3;
        let b = Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
        let f = RefractiveField::Analytic(AnalyticField::new(b, 1.0, move |p| (1.0 + alpha * p.x, Vec3::new(alpha, 0.0, 0.0))));
        let p = Vec3::new(0.4, 0.1, -0.2);
        let d = d_function(&f, &p);
        assert!((d - Vec3::new((1.0 + alpha * 0.4) * alpha, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn d_matches_half_gradient_of_n_squared() {
        // finite-difference oracle on 0.5 * n^2
        let w = 0.004;
        let n_of = move |p: &Vec3| 1.0 + 0.01 * (-(p.x * p.x + p.y * p.y) / (w * w)).exp();
        let f = RefractiveField::Analytic(AnalyticField::new(unit_box(), 1.0, move |p| {
            let e = 0.01 * (-(p.x * p.x + p.y * p.y) / (w * w)).exp();
            (1.0 + e, Vec3::new(-2.0 * p.x / (w * w) * e, -2.0 * p.y / (w * w) * e, 0.0))
        }));
        let p = Vec3::new(0.002, -0.001, 0.25);
        let d = d_function(&f, &p);
        let mut errs = vec![];
        for h in [1e-4, 5e-5] {
            let fd = Vec3::new(
                (n_of(&(p + Vec3::x() * h)).powi(2) - n_of(&(p - Vec3::x() * h)).powi(2)) / (4.0 * h),
                (n_of(&(p + Vec3::y() * h)).powi(2) - n_of(&(p - Vec3::y() * h)).powi(2)) / (4.0 * h),
                0.0,
            );
            errs.push((fd - d).norm());
        }
        assert!(errs[0] < 1e-3 * d.norm());
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn straight_line_without_gradient() {
        let n = 1.000277;
        let f = uniform(n);
        let s = RayState {
            position: unit_box().center(),
            t: Vec3::new(0.1, 0.2, 1.0).normalize() * n,
        };
        let next = rk4_step(&s, &f, 1e-4).unwrap();
        assert_eq!(next.t, s.t);
        assert!((next.position - (s.position + s.t * 1e-4)).norm() < 1e-18);
    }

    fn integrate_slope(alpha: f64, length: f64, steps: usize) -> f64 {
        let f = linear_y(alpha);
        let mut s = RayState {
            position: Vec3::zeros(),
            t: Vec3::x(),
        };
        // dt = ds / n with n = 1 along y = 0
        let dxi = length / steps as f64;
        for _ in 0..steps {
            s = rk4_step(&s, &f, dxi).unwrap();
        }
        s.t.y / s.t.x
    }

    #[test]
    fn linear_gradient_exit_slope() {
        let coarse = integrate_slope(1e-3, 0.01, 10);
        let fine = integrate_slope(1e-3, 0.01, 10_000);
        assert!((fine - 1.0e-5).abs() < 1e-3 * 1.0e-5, "{fine}");
        assert!((coarse - fine).abs() < 1e-3 * fine);
    }

    fn gaussian_field() -> RefractiveField {
        let w = 0.01;
        let b = Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
        RefractiveField::Analytic(AnalyticField::new(b, 1.0, move |p| {
            let e = 0.01 * (-(p.x * p.x + p.y * p.y) / (w * w)).exp();
            (1.0 + e, Vec3::new(-2.0 * p.x / (w * w) * e, -2.0 * p.y / (w * w) * e, 0.0))
        }))
    }

    fn run(field: &RefractiveField, total: f64, steps: usize) -> RayState {
        let start = Vec3::new(-0.004, 0.003, -0.02);
        let n0 = field.sample(&start).unwrap().n;
        let mut s = RayState {
            position: start,
            t: Vec3::new(0.0, 0.0, 1.0) * n0,
        };
        let h = total / steps as f64;
        for _ in 0..steps {
            s = rk4_step(&s, field, h).unwrap();
        }
        s
    }

    #[test]
    fn step_halving_is_fourth_order() {
        let f = gaussian_field();
        let reference = run(&f, 0.04, 3200);
        let errs: Vec<f64> = [20usize, 40]
            .iter()
            .map(|&n| (run(&f, 0.04, n).position - reference.position).norm())
            .collect();
        let ratio = errs[0] / errs[1];
        assert!(ratio > 12.0 && ratio < 20.0, "{errs:?} ratio {ratio}");
    }

    #[test]
    fn slab_cases() {
        let b = unit_box();
        let c = b.center();
        let (t0, t1) = aabb_intersect(&ray(Vec3::new(-1.0, c.y, c.z), Vec3::x()), &b).unwrap();
        assert!((t0 - (1.0 - 0.016)).abs() < 1e-12 && (t1 - (1.0 + 0.016)).abs() < 1e-12);
        // parallel to the x faces but outside the slab
        assert!(aabb_intersect(&ray(Vec3::new(0.02, 0.0, 0.0), Vec3::z()), &b).is_none());
        // starting inside
        let (t0, t1) = aabb_intersect(&ray(c, Vec3::z()), &b).unwrap();
        assert_eq!(t0, 0.0);
        assert!((t1 - 0.005).abs() < 1e-12);
        // box behind the ray
        assert!(aabb_intersect(&ray(Vec3::new(0.0, 0.0, 1.0), Vec3::z()), &b).is_none());
    }

    #[test]
    fn rays_missing_the_volume_pass_unchanged() {
        let r = ray(Vec3::new(0.05, 0.0, 0.0), Vec3::z());
        let p = StepParams {
            delta_xi: 1e-4,
            max_steps: 1000,
        };
        assert_eq!(trace_through_volume(&r, &uniform(1.0003), &p), TraceOutcome::Exited(r));
    }

    #[test]
    fn zero_gradient_exit_is_collinear() {
        let r = ray(Vec3::new(0.001, -0.002, 0.0), Vec3::new(0.003, 0.001, 1.0));
        let p = StepParams {
            delta_xi: 3e-4,
            max_steps: 1000,
        };
        let TraceOutcome::Exited(out) = trace_through_volume(&r, &uniform(1.000277), &p) else {
            panic!("lost");
        };
        assert!(out.direction.cross(&r.direction).norm() < 1e-12);
        // exit point lies on the original line and on the far face
        let off = (out.origin - r.origin).cross(&r.direction).norm();
        assert!(off < 1e-12);
        assert!((out.origin.z - 0.255).abs() < 1e-9);
    }

    #[test]
    fn uniform_gradient_deflection() {
        let g = 10.0;
        let slice = Grid2::from_fn(32, 32, [1e-3, 1e-3], [-0.016, -0.016], |x, _| 1.225 + g * x);
        let vol = stack_2d_slice(&slice, 10, 1e-3).unwrap().centered_at(Vec3::new(0.0, 0.0, 0.25));
        let f = build_refractive_field(&vol, K_AIR).unwrap();
        let p = StepParams::for_field(&f, None, None);
        assert_eq!(p.delta_xi, 5e-4);
        let r = ray(Vec3::new(0.0, 0.0, 0.0), Vec3::z());
        let TraceOutcome::Exited(out) = trace_through_volume(&r, &f, &p) else {
            panic!("lost");
        };
        let eps = out.direction.x / out.direction.z;
        let n0 = 1.0 + K_AIR * 1.225;
        let expect = K_AIR * g * 0.01 / n0;
        assert!((eps - expect).abs() < 1e-3 * expect, "{eps} vs {expect}");
        assert!((expect - 2.26e-5).abs() < 0.01e-5);
    }

    #[test]
    fn blob_deflection_is_antisymmetric() {
        let prof = SliceProfile::GaussianBlob {
            rho0: 1.225,
            amplitude: 0.4,
            sigma: 3e-3,
            center: [0.0, 0.0],
        };
        let slice = prof.sample(64, 64, [0.5e-3, 0.5e-3], [-0.016, -0.016]);
        let vol = stack_2d_slice(&slice, 10, 1e-3).unwrap().centered_at(Vec3::new(0.0, 0.0, 0.25));
        let f = build_refractive_field(&vol, K_AIR).unwrap();
        let p = StepParams::for_field(&f, None, None);
        for x in [1e-3, 2.5e-3, 4e-3] {
            let deflect = |x0: f64| match trace_through_volume(&ray(Vec3::new(x0, 0.0, 0.2), Vec3::z()), &f, &p) {
                TraceOutcome::Exited(o) => o.direction.x,
                _ => panic!(),
            };
            let (a, b) = (deflect(x), deflect(-x));
            assert!(a.abs() > 1e-7);
            assert!((a + b).abs() < 1e-9 * a.abs().max(1e-12) + 1e-15, "{a} {b}");
        }
    }

    #[test]
    fn eikonal_norm_is_conserved() {
        let f = gaussian_field();
        let start = Vec3::new(-0.004, 0.003, -0.02);
        let mut s = RayState {
            position: start,
            t: Vec3::new(0.05, 0.0, 1.0).normalize() * f.sample(&start).unwrap().n,
        };
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            s = rk4_step(&s, &f, 4e-5).unwrap();
            let n = f.sample(&s.position).unwrap().n;
            worst = worst.max((s.t.norm() / n - 1.0).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn reverse_trace_recovers_entry() {
        let w = 0.004;
        let b = Aabb::new(Vec3::new(-0.016, -0.016, 0.24), Vec3::new(0.016, 0.016, 0.26));
        let f = RefractiveField::Analytic(AnalyticField::new(b, 1.0, move |p| {
            let e = 0.001 * (-(p.x * p.x + p.y * p.y) / (w * w)).exp();
            (1.0 + e, Vec3::new(-2.0 * p.x / (w * w) * e, -2.0 * p.y / (w * w) * e, 0.0))
        }));
        let p = StepParams {
            delta_xi: 2e-4,
            max_steps: 10_000,
        };
        let r = ray(Vec3::new(0.002, -0.001, 0.0), Vec3::new(0.001, 0.0, 1.0));
        let entry = r.at(aabb_intersect(&r, &b).unwrap().0);
        let TraceOutcome::Exited(out) = trace_through_volume(&r, &f, &p) else { panic!() };
        let back = out.with(out.origin, -out.direction);
        let TraceOutcome::Exited(home) = trace_through_volume(&back, &f, &p) else { panic!() };
        assert!((home.origin - entry).norm() < 1e-8, "{}", (home.origin - entry).norm());
        assert!((home.direction + r.direction).norm() < 1e-8);
    }

    #[test]
    fn step_budget_marks_ray_lost() {
        let p = StepParams {
            delta_xi: 1e-5,
            max_steps: 10,
        };
        let r = ray(Vec3::new(0.0, 0.0, 0.0), Vec3::z());
        assert_eq!(trace_through_volume(&r, &uniform(1.0), &p), TraceOutcome::Lost(LostReason::MaxSteps));
    }

    #[test]
    fn non_finite_field_marks_ray_lost() {
        let f = RefractiveField::Analytic(AnalyticField::new(unit_box(), 1.0, |_| (1.0, Vec3::new(f64::NAN, 0.0, 0.0))));
        let p = StepParams {
            delta_xi: 1e-4,
            max_steps: 1000,
        };
        let r = ray(Vec3::zeros(), Vec3::z());
        assert_eq!(trace_through_volume(&r, &f, &p), TraceOutcome::Lost(LostReason::NonFinite));
    }
}
