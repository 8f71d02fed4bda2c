//! Forward-mode dual numbers carrying a value and its three first partials.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by `f64` and [`Dual3`], enough to write closed-form maps
/// once and differentiate them exactly.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn sqrt(self) -> Self;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual3 {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual3 {
    /// The coordinate functions `x₀, x₁, x₂` at a point.
    pub fn variables(p: [f64; 3]) -> [Dual3; 3] {
        std::array::from_fn(|k| {
            let mut d = [0.0; 3];
            d[k] = 1.0;
            Dual3 { v: p[k], d }
        })
    }
}

impl Real for Dual3 {
    fn cst(v: f64) -> Self {
        Dual3 { v, d: [0.0; 3] }
    }

    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual3 { v: s, d: self.d.map(|x| 0.5 * x / s) }
    }
}

impl Add for Dual3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual3 { v: self.v + o.v, d: std::array::from_fn(|k| self.d[k] + o.d[k]) }
    }
}

impl Sub for Dual3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual3 { v: self.v - o.v, d: std::array::from_fn(|k| self.d[k] - o.d[k]) }
    }
}

impl Mul for Dual3 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual3 { v: self.v * o.v, d: std::array::from_fn(|k| self.d[k] * o.v + self.v * o.d[k]) }
    }
}

impl Div for Dual3 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        Dual3 {
            v: self.v * inv,
            d: std::array::from_fn(|k| (self.d[k] - self.v * inv * o.d[k]) * inv),
        }
    }
}

impl Neg for Dual3 {
    type Output = Self;
    fn neg(self) -> Self {
        Dual3 { v: -self.v, d: self.d.map(|x| -x) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_a_rational_function() {
        let [x, y, z] = Dual3::variables([0.3, -1.2, 2.0]);
        let f = (x * y + Dual3::cst(1.0)) / (z * z + x).sqrt();
        // f = (xy + 1) / sqrt(z² + x)
        let (xv, yv, zv) = (0.3, -1.2, 2.0f64);
        let s = (zv * zv + xv).sqrt();
        assert!((f.v - (xv * yv + 1.0) / s).abs() < 1e-15);
        let fx = yv / s - 0.5 * (xv * yv + 1.0) / (s * s * s);
        let fy = xv / s;
        let fz = -(xv * yv + 1.0) * zv / (s * s * s);
        for (a, b) in f.d.iter().zip([fx, fy, fz]) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
