//! Small helpers for 3-vectors stored as `[f64; 3]`.

use crate::math;

pub type V3 = [f64; 3];

#[inline]
pub fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm_sq(a: V3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: V3) -> f64 {
    math::sqrt(norm_sq(a))
}

#[inline]
pub fn dist_sq(a: V3, b: V3) -> f64 {
    norm_sq(sub(a, b))
}

#[inline]
pub fn dist(a: V3, b: V3) -> f64 {
    math::sqrt(dist_sq(a, b))
}

/// Normalizes `a`; returns `None` when the norm is below `tiny`.
#[inline]
pub fn unit(a: V3, tiny: f64) -> Option<V3> {
    let n = norm(a);
    if n <= tiny {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}
