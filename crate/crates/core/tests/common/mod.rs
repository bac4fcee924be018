//! Independent finite-difference and brute-force oracles shared by the
//! integration tests. Nothing here calls the analytic derivative code.

#![allow(dead_code)]

use cbf::kernel::Vec3;
use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `exp(−c‖(x−p) − n((x−p)·n)‖²)` written out directly.
pub fn field(x: &Vec3, center: &Vec3, normal: &Vec3, c: f64) -> f64 {
    let d = x - center;
    let t = d - normal * d.dot(normal);
    (-c * t.norm_squared()).exp()
}

fn central_gradient(x: &Vec3, h: f64, f: &impl Fn(&Vec3) -> f64) -> Vec3 {
    Vec3::from_fn(|k, _| {
        let mut e = Vec3::zeros();
        e[k] = h;
        (f(&(x + e)) - f(&(x - e))) / (2.0 * h)
    })
}

fn seven_point(x: &Vec3, h: f64, f: &impl Fn(&Vec3) -> f64) -> f64 {
    let f0 = f(x);
    (0..3)
        .map(|k| {
            let mut e = Vec3::zeros();
            e[k] = h;
            f(&(x + e)) - 2.0 * f0 + f(&(x - e))
        })
        .sum::<f64>()
        / (h * h)
}

/// Central-difference gradient with one Richardson step (O(h⁴)).
pub fn fd_gradient(x: &Vec3, h: f64, f: impl Fn(&Vec3) -> f64) -> Vec3 {
    let coarse = central_gradient(x, h, &f);
    let fine = central_gradient(x, h / 2.0, &f);
    (fine * 4.0 - coarse) / 3.0
}

/// Seven-point Laplacian with one Richardson step (O(h⁴)).
pub fn fd_laplacian(x: &Vec3, h: f64, f: impl Fn(&Vec3) -> f64) -> f64 {
    let coarse = seven_point(x, h, &f);
    let fine = seven_point(x, h / 2.0, &f);
    (4.0 * fine - coarse) / 3.0
}

/// Central first derivative of a scalar function.
pub fn fd_first(r: f64, h: f64, f: impl Fn(f64) -> f64) -> f64 {
    (f(r + h) - f(r - h)) / (2.0 * h)
}

/// Second difference with one Richardson step.
pub fn fd_second(r: f64, h: f64, f: impl Fn(f64) -> f64) -> f64 {
    let d2 = |h: f64| (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h);
    (4.0 * d2(h / 2.0) - d2(h)) / 3.0
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
    let axis = Unit::new_normalize(unit_vector(rng));
    Rotation3::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::TAU))
}

/// A random kernel configuration: center, unit normal, shape parameter,
/// and an evaluation point whose projected distance lies in
/// `[0.1, 2]/√c` so the field is well above rounding level.
pub struct Config {
    pub x: Vec3,
    pub center: Vec3,
    pub normal: Vec3,
    pub c: f64,
}

pub fn random_config(rng: &mut impl Rng) -> Config {
    let c = 10f64.powf(rng.random_range(-1.0..2.0));
    random_config_with_c(rng, c)
}

pub fn random_config_with_c(rng: &mut impl Rng, c: f64) -> Config {
    let center = Vec3::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    );
    let normal = unit_vector(rng);
    let mut tangent = unit_vector(rng);
    tangent -= normal * tangent.dot(&normal);
    let tangent = tangent.normalize();
    let r = rng.random_range(0.1..2.0) / c.sqrt();
    let along = rng.random_range(-3.0..3.0);
    Config {
        x: center + tangent * r + normal * along,
        center,
        normal,
        c,
    }
}

/// Brute-force `k` nearest neighbors excluding `i`, ties to lower index.
pub fn brute_knn(points: &[Vec3], i: usize, k: usize) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| (j, (p - points[i]).norm_squared()))
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    d.truncate(k);
    d.into_iter().map(|(j, d2)| (j, d2.sqrt())).collect()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}
