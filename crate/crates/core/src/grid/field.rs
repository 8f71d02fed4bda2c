use rayon::prelude::*;

use super::{BoundaryTag, GridSpec};
use crate::error::{Error, Result};
use crate::vecmath::{dot, norm2};

/// Norm below which a node cannot be projected back onto the sphere.
pub const DEGENERATE_NORM: f64 = 1e-8;

/// A unit-vector field with values in S² (3 components) or S³ (4 components).
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionField {
    grid: GridSpec,
    components: usize,
    values: Vec<f64>,
    boundary: BoundaryTag,
}

impl DirectionField {
    pub fn new(
        grid: GridSpec,
        components: usize,
        values: Vec<f64>,
        boundary: BoundaryTag,
    ) -> Result<Self> {
        if components != 3 && components != 4 {
            return Err(Error::InvalidArgument(format!(
                "components must be 3 or 4, got {components}"
            )));
        }
        if values.len() != grid.len() * components {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len() * components,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at node {}",
                pos / components
            )));
        }
        Ok(Self { grid, components, values, boundary })
    }

    /// Samples `f` at every node. Values are stored as returned, not normalized.
    pub fn from_fn<const C: usize, F>(grid: GridSpec, boundary: BoundaryTag, f: F) -> Result<Self>
    where
        F: Fn([f64; 3]) -> [f64; C] + Sync,
    {
        let mut values = vec![0.0; grid.len() * C];
        values.par_chunks_mut(C).enumerate().for_each(|(idx, out)| {
            out.copy_from_slice(&f(grid.node_position(idx)));
        });
        Self::new(grid, C, values, boundary)
    }

    pub fn constant(grid: GridSpec, value: &[f64], boundary: BoundaryTag) -> Result<Self> {
        let values = value.iter().copied().cycle().take(grid.len() * value.len()).collect();
        Self::new(grid, value.len(), values, boundary)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Raw mutable access. Callers re-project before relying on unit norm.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn boundary(&self) -> BoundaryTag {
        self.boundary
    }

    pub fn with_boundary(mut self, boundary: BoundaryTag) -> Self {
        self.boundary = boundary;
        self
    }

    #[inline]
    pub fn node(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.components..(idx + 1) * self.components]
    }

    #[inline]
    pub fn node3(&self, idx: usize) -> [f64; 3] {
        let s = &self.values[idx * self.components..];
        [s[0], s[1], s[2]]
    }

    #[inline]
    pub fn node4(&self, idx: usize) -> [f64; 4] {
        let s = &self.values[idx * self.components..];
        [s[0], s[1], s[2], s[3]]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> &[f64] {
        self.node(self.grid.index(i, j, k))
    }

    pub(crate) fn require_components(&self, c: usize) -> Result<()> {
        if self.components != c {
            return Err(Error::InvalidArgument(format!(
                "expected a field with {c} components, got {}",
                self.components
            )));
        }
        Ok(())
    }

    /// Largest deviation of a node norm from 1.
    pub fn max_norm_defect(&self) -> f64 {
        self.values
            .chunks(self.components)
            .map(|v| (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn project_to_sphere(&self) -> Result<Self> {
        let mut out = self.clone();
        out.project_in_place()?;
        Ok(out)
    }

    pub fn project_in_place(&mut self) -> Result<()> {
        let c = self.components;
        if let Some((node, norm)) = self
            .values
            .chunks(c)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .enumerate()
            .find(|(_, n)| *n < DEGENERATE_NORM)
        {
            return Err(Error::DegenerateNode { node, norm });
        }
        self.values.par_chunks_mut(c).for_each(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
        });
        Ok(())
    }

    /// The common value of all boundary-layer nodes, if they agree exactly.
    pub fn boundary_constant(&self) -> Option<Vec<f64>> {
        let first = self.node(0).to_vec();
        let g = &self.grid;
        (0..g.len())
            .filter(|&idx| g.is_boundary_index(idx))
            .all(|idx| self.node(idx) == first.as_slice())
            .then_some(first)
    }

    /// Applies `f` to every node value, e.g. a rotation of the target sphere.
    pub fn map_values<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let mut out = self.clone();
        out.values
            .par_chunks_mut(self.components)
            .zip(self.values.par_chunks(self.components))
            .for_each(|(o, v)| f(v, o));
        out.boundary = self.boundary;
        Ok(out)
    }

    /// The field `x -> u(2c - x)` with `c` the box centre: the domain reflected
    /// through its centre.
    pub fn reflected(&self) -> Self {
        let g = self.grid;
        let [nx, ny, nz] = g.dims();
        let c = self.components;
        let mut values = vec![0.0; self.values.len()];
        values.par_chunks_mut(c).enumerate().for_each(|(idx, out)| {
            let [i, j, k] = g.coords(idx);
            out.copy_from_slice(self.at(nx - 1 - i, ny - 1 - j, nz - 1 - k));
        });
        Self { grid: g, components: c, values, boundary: self.boundary }
    }

    /// Central differences in the interior, first-order one-sided on faces.
    pub fn gradient(&self) -> JacobianField {
        let g = self.grid;
        let c = self.components;
        let h = g.spacing();
        let dims = g.dims();
        let mut values = vec![0.0; g.len() * 3 * c];
        values.par_chunks_mut(3 * c).enumerate().for_each(|(idx, out)| {
            let coords = g.coords(idx);
            for axis in 0..3 {
                let s = g.stride(axis);
                let n = coords[axis];
                let (lo, hi, scale) = if n == 0 {
                    (idx, idx + s, 1.0 / h)
                } else if n + 1 == dims[axis] {
                    (idx - s, idx, 1.0 / h)
                } else {
                    (idx - s, idx + s, 0.5 / h)
                };
                let a = self.node(lo);
                let b = self.node(hi);
                for comp in 0..c {
                    out[axis * c + comp] = (b[comp] - a[comp]) * scale;
                }
            }
        });
        JacobianField { grid: g, components: c, values }
    }

    /// Replaces the field outside `inner_radius` (about the box centre) by a
    /// geodesic blend toward the normalized average of its trace on the
    /// sphere of that radius. The blend ends at `2 * inner_radius`, or at the
    /// inscribed sphere of the box if that is smaller; nodes beyond it, and
    /// the whole boundary layer, are set to the average direction.
    ///
    /// The trace only reads nodes inside the sphere, so the operation is
    /// idempotent bit for bit.
    pub fn flatten_far_field(&self, inner_radius: f64) -> Result<Self> {
        if self.boundary != BoundaryTag::FarFieldConstant {
            return Err(Error::InvalidArgument(format!(
                "flatten_far_field needs a far_field_constant field, got {}",
                self.boundary
            )));
        }
        let g = self.grid;
        let half = g.extent().iter().fold(f64::INFINITY, |m, &e| m.min(0.5 * e));
        if !(inner_radius > 0.0 && inner_radius < half) {
            return Err(Error::InvalidArgument(format!(
                "inner_radius {inner_radius} must lie in (0, {half})"
            )));
        }
        let center = g.center();
        let c = self.components;
        let samples = fibonacci_sphere(FLATTEN_SAMPLES);
        let mut avg = vec![0.0; c];
        for dir in &samples {
            let t = self.sphere_trace(center, inner_radius, dir);
            avg.iter_mut().zip(&t).for_each(|(a, v)| *a += v);
        }
        let n = avg.iter().map(|x| x * x).sum::<f64>().sqrt() / samples.len() as f64;
        if n < 1e-3 {
            return Err(Error::AverageDegenerate { norm: n });
        }
        let scale = 1.0 / (n * samples.len() as f64);
        avg.iter_mut().for_each(|a| *a *= scale);

        let outer = (2.0 * inner_radius).min(half);
        let mut values = self.values.clone();
        values.par_chunks_mut(c).enumerate().for_each(|(idx, out)| {
            let p = g.node_position(idx);
            let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            let r = norm2(&d).sqrt();
            if r <= inner_radius && !g.is_boundary_index(idx) {
                return;
            }
            if r >= outer || g.is_boundary_index(idx) {
                out.copy_from_slice(&avg);
                return;
            }
            let dir = [d[0] / r, d[1] / r, d[2] / r];
            let trace = self.sphere_trace(center, inner_radius, &dir);
            let t = (r - inner_radius) / (outer - inner_radius);
            slerp(&trace, &avg, t, out);
        });
        Self::new(g, c, values, self.boundary)
    }

    /// Trilinear interpolation at `center + radius * dir` restricted to cell
    /// corners no farther than `radius` from `center`, normalized.
    fn sphere_trace(&self, center: [f64; 3], radius: f64, dir: &[f64; 3]) -> Vec<f64> {
        let g = &self.grid;
        let h = g.spacing();
        let dims = g.dims();
        let o = g.origin();
        let c = self.components;
        let mut rad = radius;
        loop {
            let p = [
                center[0] + rad * dir[0],
                center[1] + rad * dir[1],
                center[2] + rad * dir[2],
            ];
            let mut base = [0usize; 3];
            let mut frac = [0.0; 3];
            for a in 0..3 {
                let s = ((p[a] - o[a]) / h).clamp(0.0, (dims[a] - 1) as f64);
                let b = (s.floor() as usize).min(dims[a] - 2);
                base[a] = b;
                frac[a] = s - b as f64;
            }
            let mut acc = vec![0.0; c];
            let mut wsum = 0.0;
            for corner in 0..8 {
                let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
                let (i, j, k) = (base[0] + off[0], base[1] + off[1], base[2] + off[2]);
                let q = g.position(i, j, k);
                let dq = [q[0] - center[0], q[1] - center[1], q[2] - center[2]];
                if norm2(&dq).sqrt() > radius {
                    continue;
                }
                let mut w = 1.0;
                for a in 0..3 {
                    w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
                }
                if w == 0.0 {
                    continue;
                }
                wsum += w;
                acc.iter_mut().zip(self.at(i, j, k)).for_each(|(s, v)| *s += w * v);
            }
            let n = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
            if wsum > 0.0 && n > 1e-12 {
                acc.iter_mut().for_each(|x| *x /= n);
                return acc;
            }
            if rad <= 0.0 {
                return self.node(g.index(
                    ((center[0] - o[0]) / h).round() as usize,
                    ((center[1] - o[1]) / h).round() as usize,
                    ((center[2] - o[2]) / h).round() as usize,
                ))
                .to_vec();
            }
            rad = (rad - 0.25 * h).max(0.0);
        }
    }
}

const FLATTEN_SAMPLES: usize = 4096;

/// Nearly uniform points on the unit sphere.
pub(crate) fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

/// Geodesic interpolation from unit `a` (t = 0) to unit `b` (t = 1).
pub(crate) fn slerp(a: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
    let c = a.len();
    let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
    if cos > 1.0 - 1e-14 {
        out.copy_from_slice(a);
        return;
    }
    // Antipodal pair: pass through a fixed direction orthogonal to a.
    let mut target = b.to_vec();
    let mut t = t;
    if cos < -1.0 + 1e-12 {
        let mut perp = vec![0.0; c];
        let axis = (0..c)
            .min_by(|&i, &j| a[i].abs().partial_cmp(&a[j].abs()).unwrap())
            .unwrap();
        perp[axis] = 1.0;
        let d = a[axis];
        perp.iter_mut().zip(a).for_each(|(p, x)| *p -= d * x);
        let n = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
        perp.iter_mut().for_each(|p| *p /= n);
        if t <= 0.5 {
            target = perp;
            t *= 2.0;
        } else {
            slerp(&perp, b, 2.0 * t - 1.0, out);
            return;
        }
    }
    let cos = a.iter().zip(&target).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
    let theta = cos.acos();
    let s = theta.sin();
    let wa = ((1.0 - t) * theta).sin() / s;
    let wb = (t * theta).sin() / s;
    for i in 0..c {
        out[i] = wa * a[i] + wb * target[i];
    }
    let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    out.iter_mut().for_each(|x| *x /= n);
}

/// Per-node 3 x C matrix of partial derivatives, row `k` holding `∂_k u`.
#[derive(Clone, Debug)]
pub struct JacobianField {
    grid: GridSpec,
    components: usize,
    values: Vec<f64>,
}

impl JacobianField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn partial(&self, idx: usize, axis: usize) -> &[f64] {
        let c = self.components;
        let start = idx * 3 * c + axis * c;
        &self.values[start..start + c]
    }

    #[inline]
    pub fn partial3(&self, idx: usize, axis: usize) -> [f64; 3] {
        let s = self.partial(idx, axis);
        [s[0], s[1], s[2]]
    }

    /// |∇u|² at a node.
    #[inline]
    pub fn norm2_at(&self, idx: usize) -> f64 {
        let c = self.components;
        self.values[idx * 3 * c..(idx + 1) * 3 * c].iter().map(|x| x * x).sum()
    }

    /// |∂_r u|² at a node for the radial direction `dir` (unit).
    #[inline]
    pub fn radial2_at(&self, idx: usize, dir: &[f64; 3]) -> f64 {
        let c = self.components;
        let mut s = 0.0;
        for comp in 0..c {
            let v: f64 = (0..3).map(|a| dir[a] * self.partial(idx, a)[comp]).sum();
            s += v * v;
        }
        s
    }
}

/// An R³-valued lattice field.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField3 {
    grid: GridSpec,
    values: Vec<[f64; 3]>,
}

impl VectorField3 {
    pub fn new(grid: GridSpec, values: Vec<[f64; 3]>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} vectors, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("vector field has non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![[0.0; 3]; grid.len()] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn into_values(self) -> Vec<[f64; 3]> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: usize) -> [f64; 3] {
        self.values[idx]
    }

    /// Unweighted Euclidean norm of all entries.
    pub fn l2(&self) -> f64 {
        crate::reduce::ordered_sum(self.values.par_iter().map(norm2).collect()).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
            .collect();
        Self { grid: self.grid, values }
    }

    pub fn dot_sum(&self, other: &Self) -> f64 {
        crate::reduce::ordered_sum(
            self.values.par_iter().zip(&other.values).map(|(a, b)| dot(a, b)).collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| norm2(v).sqrt()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, hw: f64) -> GridSpec {
        GridSpec::cube(n, hw).unwrap()
    }

    #[test]
    fn projection_examples() {
        let g = grid(3, 1.0);
        let f = DirectionField::constant(g, &[0.0, 0.0, 2.0], BoundaryTag::Free).unwrap();
        assert_eq!(f.project_to_sphere().unwrap().node(5), &[0.0, 0.0, 1.0]);
        let f = DirectionField::constant(g, &[1.0; 4], BoundaryTag::Free).unwrap();
        assert_eq!(f.project_to_sphere().unwrap().node(0), &[0.5; 4]);
        let f = DirectionField::constant(g, &[0.0, 1e-9, 0.0], BoundaryTag::Free).unwrap();
        assert!(matches!(f.project_to_sphere(), Err(Error::DegenerateNode { .. })));
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let f = DirectionField::constant(grid(5, 1.0), &[0.0, 0.0, 1.0], BoundaryTag::Free)
            .unwrap();
        assert!(f.gradient().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_converges_at_second_order() {
        let a = 1.3;
        let err = |n: usize| {
            let g = grid(n, 1.0);
            let f = DirectionField::from_fn(g, BoundaryTag::Free, |p| {
                [(a * p[0]).sin(), 0.0, (a * p[0]).cos()]
            })
            .unwrap();
            let jac = f.gradient();
            let mut e: f64 = 0.0;
            for idx in 0..g.len() {
                let [i, _, _] = g.coords(idx);
                if i < 2 || i + 3 > n {
                    continue;
                }
                let x = g.node_position(idx)[0];
                let d = jac.partial(idx, 0);
                e = e.max((d[0] - a * (a * x).cos()).abs()).max((d[2] + a * (a * x).sin()).abs());
            }
            e
        };
        let order = (err(17) / err(33)).log2();
        assert!((1.8..=2.2).contains(&order), "order {order}");
    }

    #[test]
    fn great_circle_density_is_flat() {
        let a = 0.7;
        let g = grid(21, 1.0);
        let f = DirectionField::from_fn(g, BoundaryTag::Free, |p| {
            [(a * p[2]).cos(), (a * p[2]).sin(), 0.0]
        })
        .unwrap();
        let jac = f.gradient();
        let expected = a * a * (g.spacing() * a).sin().powi(2) / (g.spacing() * a).powi(2);
        for idx in 0..g.len() {
            let [_, _, k] = g.coords(idx);
            if k > 0 && k + 1 < 21 {
                assert!((jac.norm2_at(idx) - expected).abs() < 1e-12);
            }
        }
        assert!((expected - a * a).abs() < a * a * (g.spacing() * a).powi(2));
    }

    #[test]
    fn reflection_is_an_involution() {
        let g = grid(6, 1.0);
        let f = DirectionField::from_fn(g, BoundaryTag::Free, |p| [p[0], p[1] + 2.0, p[2]])
            .unwrap();
        assert_eq!(f.reflected().reflected(), f);
        let idx = g.index(0, 1, 2);
        assert_eq!(f.reflected().node(idx), f.at(5, 4, 3));
    }

    fn bump(p: [f64; 3]) -> [f64; 3] {
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        let t = (-r2).exp();
        let v = [t * p[1], t * (p[2] - 0.3), 1.0 + t];
        let n = norm2(&v).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    #[test]
    fn flatten_is_idempotent_and_constant_far_away() {
        let g = grid(21, 5.0);
        let f = DirectionField::from_fn(g, BoundaryTag::FarFieldConstant, bump).unwrap();
        let once = f.flatten_far_field(2.0).unwrap();
        let twice = once.flatten_far_field(2.0).unwrap();
        assert_eq!(once, twice);
        assert!(once.boundary_constant().is_some());
        assert!(once.max_norm_defect() < 1e-14);
        for idx in 0..g.len() {
            let p = g.node_position(idx);
            if norm2(&p).sqrt() <= 2.0 {
                assert_eq!(once.node(idx), f.node(idx));
            }
        }
    }

    #[test]
    fn flatten_leaves_constant_exterior_alone() {
        let g = grid(17, 4.0);
        let f = DirectionField::constant(g, &[0.0, 0.0, 1.0], BoundaryTag::FarFieldConstant)
            .unwrap();
        assert_eq!(f.flatten_far_field(1.5).unwrap(), f);
    }

    #[test]
    fn flatten_checks_preconditions() {
        let g = grid(9, 2.0);
        let f = DirectionField::constant(g, &[0.0, 0.0, 1.0], BoundaryTag::Free).unwrap();
        assert!(f.flatten_far_field(1.0).is_err());
        let f = f.with_boundary(BoundaryTag::FarFieldConstant);
        assert!(f.flatten_far_field(2.5).is_err());
    }

    #[test]
    fn centred_hedgehog_has_degenerate_average() {
        let g = grid(17, 4.0);
        let f = DirectionField::from_fn(g, BoundaryTag::FarFieldConstant, |p| {
            let r = norm2(&p).sqrt();
            if r == 0.0 {
                [0.0, 0.0, 1.0]
            } else {
                [p[0] / r, p[1] / r, p[2] / r]
            }
        })
        .unwrap();
        assert!(matches!(f.flatten_far_field(2.0), Err(Error::AverageDegenerate { .. })));
    }

    #[test]
    fn slerp_handles_antipodes() {
        let mut out = [0.0; 3];
        slerp(&[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0], 0.5, &mut out);
        assert!(out[2].abs() < 1e-12 && (norm2(&out) - 1.0).abs() < 1e-12);
        slerp(&[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0], 1.0, &mut out);
        assert!((out[2] + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn projection_restores_unit_norm(
            vals in proptest::collection::vec(0.05f64..3.0, 27 * 3),
            signs in proptest::collection::vec(any::<bool>(), 27 * 3),
        ) {
            let v: Vec<f64> = vals.iter().zip(&signs).map(|(x, s)| if *s { *x } else { -*x }).collect();
            let f = DirectionField::new(grid(3, 1.0), 3, v, BoundaryTag::Free).unwrap();
            let p = f.project_to_sphere().unwrap();
            prop_assert!(p.max_norm_defect() <= 1e-12);
            prop_assert!(p.project_to_sphere().unwrap().max_norm_defect() <= 1e-15);
        }

        #[test]
        fn slerp_stays_on_sphere(t in 0.0f64..1.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let u = [a.cos(), a.sin(), 0.0];
            let v = [0.0, b.cos(), b.sin()];
            let mut out = [0.0; 3];
            slerp(&u, &v, t, &mut out);
            prop_assert!((norm2(&out) - 1.0).abs() < 1e-12);
        }
    }
}
