//! Lattice geometry and the sphere-valued fields sampled on it.
//!
//! Nodes are stored x-fastest: `index = i + nx * (j + ny * k)`. Every node
//! owns the part of the cube `[-h/2, h/2]^3` around it that lies inside the
//! box, so node weights are `h^3` in the interior and halve on each face they
//! touch. Sums over nodes with these weights partition the box exactly.

mod field;
mod io;

pub use field::{DirectionField, JacobianField, VectorField3, DEGENERATE_NORM};
pub(crate) use field::slerp as slerp_into;
pub use io::{read_field, write_field, MAGIC};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dims: [usize; 3],
    spacing: f64,
    origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], spacing: f64, origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n < 3) {
            return Err(Error::InvalidArgument(format!(
                "grid dims must all be >= 3, got {dims:?}"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        Ok(Self { dims, spacing, origin })
    }

    /// `n^3` nodes spanning `[-half_width, half_width]^3`.
    pub fn cube(n: usize, half_width: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("grid size {n} < 3")));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        Self::new([n; 3], h, [-half_width; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of nodes in one z-plane.
    pub fn plane_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Index stride for one step along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing;
        [
            self.origin[0] + i as f64 * h,
            self.origin[1] + j as f64 * h,
            self.origin[2] + k as f64 * h,
        ]
    }

    #[inline]
    pub fn node_position(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.coords(idx);
        self.position(i, j, k)
    }

    /// Physical edge lengths `(dims - 1) * h`.
    pub fn extent(&self) -> [f64; 3] {
        let h = self.spacing;
        [
            (self.dims[0] - 1) as f64 * h,
            (self.dims[1] - 1) as f64 * h,
            (self.dims[2] - 1) as f64 * h,
        ]
    }

    pub fn upper(&self) -> [f64; 3] {
        let e = self.extent();
        [self.origin[0] + e[0], self.origin[1] + e[1], self.origin[2] + e[2]]
    }

    pub fn center(&self) -> [f64; 3] {
        let e = self.extent();
        [
            self.origin[0] + 0.5 * e[0],
            self.origin[1] + 0.5 * e[1],
            self.origin[2] + 0.5 * e[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e[0] * e[1] * e[2]
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0
            || j == 0
            || k == 0
            || i + 1 == self.dims[0]
            || j + 1 == self.dims[1]
            || k + 1 == self.dims[2]
    }

    #[inline]
    pub fn is_boundary_index(&self, idx: usize) -> bool {
        let [i, j, k] = self.coords(idx);
        self.is_boundary(i, j, k)
    }

    /// Quadrature weight of a node: volume of its cell clipped to the box.
    #[inline]
    pub fn weight(&self, i: usize, j: usize, k: usize) -> f64 {
        let f = |n: usize, d: usize| if n == 0 || n + 1 == d { 0.5 } else { 1.0 };
        let h = self.spacing;
        h * h * h * f(i, self.dims[0]) * f(j, self.dims[1]) * f(k, self.dims[2])
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let [i, j, k] = self.coords(idx);
                self.weight(i, j, k)
            })
            .collect()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let hi = self.upper();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }

    /// Distance from an interior point to the nearest box face.
    pub fn distance_to_boundary(&self, p: [f64; 3]) -> f64 {
        let hi = self.upper();
        (0..3)
            .map(|a| (p[a] - self.origin[a]).min(hi[a] - p[a]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the node nearest to `p`, clamped into the box.
    pub fn index_of_nearest(&self, p: [f64; 3]) -> usize {
        let c: [usize; 3] = std::array::from_fn(|a| {
            let s = ((p[a] - self.origin[a]) / self.spacing).round();
            s.clamp(0.0, (self.dims[a] - 1) as f64) as usize
        });
        self.index(c[0], c[1], c[2])
    }

    /// Trilinear interpolation stencil `(node, weight)` at `p`, or `None`
    /// outside the box.
    pub fn trilinear(&self, p: [f64; 3]) -> Option<[(usize, f64); 8]> {
        if !self.contains(p) {
            return None;
        }
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let s = (p[a] - self.origin[a]) / self.spacing;
            let i = (s.floor() as usize).min(self.dims[a] - 2);
            base[a] = i;
            t[a] = (s - i as f64).clamp(0.0, 1.0);
        }
        Some(std::array::from_fn(|corner| {
            let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w: f64 = (0..3).map(|a| if off[a] == 1 { t[a] } else { 1.0 - t[a] }).product();
            (self.index(base[0] + off[0], base[1] + off[1], base[2] + off[2]), w)
        }))
    }

    /// Same lattice with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.dims,
            self.spacing * factor,
            [self.origin[0] * factor, self.origin[1] * factor, self.origin[2] * factor],
        )
    }
}

/// How the outermost node layer of a field is treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Boundary nodes carry a fixed trace (Dirichlet data).
    DirichletTrace,
    /// Boundary nodes carry one constant value (truncation of all of space).
    FarFieldConstant,
    Free,
}

impl BoundaryTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryTag::DirichletTrace => "dirichlet_trace",
            BoundaryTag::FarFieldConstant => "far_field_constant",
            BoundaryTag::Free => "free",
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet_trace" => Ok(BoundaryTag::DirichletTrace),
            "far_field_constant" => Ok(BoundaryTag::FarFieldConstant),
            "free" => Ok(BoundaryTag::Free),
            other => Err(Error::Format(format!("unknown boundary tag {other:?}"))),
        }
    }
}
