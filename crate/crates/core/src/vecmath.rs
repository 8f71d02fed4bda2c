//! Small fixed-size vector helpers shared by the lattice kernels.

#[inline]
pub fn dot<const C: usize>(a: &[f64; C], b: &[f64; C]) -> f64 {
    let mut s = 0.0;
    for c in 0..C {
        s += a[c] * b[c];
    }
    s
}

#[inline]
pub fn norm2<const C: usize>(a: &[f64; C]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn sub<const C: usize>(a: &[f64; C], b: &[f64; C]) -> [f64; C] {
    let mut out = [0.0; C];
    for c in 0..C {
        out[c] = a[c] - b[c];
    }
    out
}

#[inline]
pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn triple(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    dot(a, &cross(b, c))
}

/// |a ∧ b|², equal to |a × b|² for three-vectors.
#[inline]
pub fn wedge2<const C: usize>(a: &[f64; C], b: &[f64; C]) -> f64 {
    let ab = dot(a, b);
    (norm2(a) * norm2(b) - ab * ab).max(0.0)
}

/// Signed solid angle of the spherical triangle with unit vertices a, b, c.
#[inline]
pub fn solid_angle(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let num = triple(a, b, c);
    let den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
    2.0 * num.atan2(den)
}

#[inline]
pub fn to_array<const C: usize>(s: &[f64]) -> [f64; C] {
    let mut out = [0.0; C];
    out.copy_from_slice(&s[..C]);
    out
}

#[inline]
pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    norm2(&sub(a, b)).sqrt()
}
