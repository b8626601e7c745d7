//! Synthetic test clouds: plane, sphere and cube-surface samplers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cloud::PointCloud;
use crate::math;
use crate::vec3::V3;

/// `n` points uniform on the unit square z = 0.
pub fn plane(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>(), 0.0])
        .collect();
    PointCloud::new(points)
}

/// `n` points uniform on the unit sphere (normalized Gaussians).
pub fn sphere(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| loop {
            let v: V3 = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            let norm = math::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            if norm > 1e-9 {
                break [v[0] / norm, v[1] / norm, v[2] / norm];
            }
        })
        .collect();
    PointCloud::new(points)
}

/// `n` points uniform on the surface of the unit cube `[0,1]³`; the sharp
/// edges make it the piecewise-smooth test shape.
pub fn cube(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let face = rng.random_range(0..6u8);
            let u = rng.random::<f64>();
            let v = rng.random::<f64>();
            match face {
                0 => [0.0, u, v],
                1 => [1.0, u, v],
                2 => [u, 0.0, v],
                3 => [u, 1.0, v],
                4 => [u, v, 0.0],
                _ => [u, v, 1.0],
            }
        })
        .collect();
    PointCloud::new(points)
}

/// Synthetic shape selector used by the CLI and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Plane,
    Sphere,
    Cube,
}

pub fn generate(shape: Shape, n: usize, seed: u64) -> PointCloud {
    match shape {
        Shape::Plane => plane(n, seed),
        Shape::Sphere => sphere(n, seed),
        Shape::Cube => cube(n, seed),
    }
}
