//! D(u), the Coulomb gauge, Hopf charge, the Hopf map and Hopf lifts.
//!
//! The pulled-back area form lives on lattice faces: the flux through the
//! face at node `n` spanned by axes `(b, c)` is the signed solid angle of the
//! quadrilateral `u(n), u(n+e_b), u(n+e_b+e_c), u(n+e_c)`, split along the
//! diagonal from `n`. Axis pairs are `(y, z)`, `(z, x)`, `(x, y)` for the
//! x, y and z faces. These fluxes are exactly closed away from lattice
//! defects, so the gauge equation `dη = F` can be solved to round-off.
//!
//! The gauge `η` is a 1-form on edges, edge `a` at node `n` running from `n`
//! to `n + e_a`, computed on the periodic box by FFT. Fields must be constant
//! on the boundary layer so that the periodic closure is harmless.

mod lift;
pub(crate) mod spectral;

pub use lift::{hopf_lift, lift_identity_residuals, lift_section, LiftResult};

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{DirectionField, GridSpec, VectorField3};
use crate::reduce::sum_slabs;
use crate::vecmath::{cross, dot, norm2, solid_angle};
use spectral::{mode_angle, wavenumber, Fft3};

/// `16π²`, the normalization of the Hopf charge integral.
pub const HOPF_NORMALIZATION: f64 = 16.0 * PI * PI;

/// Boundary-to-peak ratio of |D(u)| above which the field is not treated as
/// compactly supported.
pub const SUPPORT_RATIO_LIMIT: f64 = 1e-6;

/// `D(u) = (u·u_y×u_z, u·u_z×u_x, u·u_x×u_y)` with central differences.
pub fn pullback_field(u: &DirectionField) -> Result<VectorField3> {
    u.require_components(3)?;
    let jac = u.gradient();
    let g = *u.grid();
    let values = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let v = u.node3(idx);
            let d = [jac.partial3(idx, 0), jac.partial3(idx, 1), jac.partial3(idx, 2)];
            [
                dot(&v, &cross(&d[1], &d[2])),
                dot(&v, &cross(&d[2], &d[0])),
                dot(&v, &cross(&d[0], &d[1])),
            ]
        })
        .collect();
    VectorField3::new(g, values)
}

/// Solid-angle fluxes of `u` through the lattice faces, with periodic
/// closure across the box.
#[derive(Clone, Debug)]
pub struct FaceFluxes {
    pub grid: GridSpec,
    pub values: [Vec<f64>; 3],
}

const FACE_AXES: [(usize, usize); 3] = [(1, 2), (2, 0), (0, 1)];

#[inline]
pub(crate) fn periodic_step(g: &GridSpec, idx: usize, axis: usize, forward: bool) -> usize {
    let coords = g.coords(idx);
    let n = g.dims()[axis];
    let s = g.stride(axis);
    if forward {
        if coords[axis] + 1 == n {
            idx - (n - 1) * s
        } else {
            idx + s
        }
    } else if coords[axis] == 0 {
        idx + (n - 1) * s
    } else {
        idx - s
    }
}

pub fn face_fluxes(u: &DirectionField) -> Result<FaceFluxes> {
    u.require_components(3)?;
    let g = *u.grid();
    let values = FACE_AXES.map(|(b, c)| {
        (0..g.len())
            .into_par_iter()
            .map(|idx| {
                let i1 = periodic_step(&g, idx, b, true);
                let i3 = periodic_step(&g, idx, c, true);
                let i2 = periodic_step(&g, i1, c, true);
                let p0 = u.node3(idx);
                let p1 = u.node3(i1);
                let p2 = u.node3(i2);
                let p3 = u.node3(i3);
                solid_angle(&p0, &p1, &p2) + solid_angle(&p0, &p2, &p3)
            })
            .collect()
    });
    Ok(FaceFluxes { grid: g, values })
}

impl FaceFluxes {
    /// Net outward flux of the cell with lower corner `idx`, divided by 4π:
    /// the lattice degree of `u` on the cell boundary.
    pub fn cell_degree(&self, idx: usize) -> f64 {
        let g = &self.grid;
        let mut s = 0.0;
        for a in 0..3 {
            s += self.values[a][periodic_step(g, idx, a, true)] - self.values[a][idx];
        }
        s / (4.0 * PI)
    }

    /// Cells whose boundary carries nonzero degree.
    pub fn defect_cells(&self) -> Vec<(usize, i64)> {
        (0..self.grid.len())
            .filter_map(|idx| {
                let d = self.cell_degree(idx).round() as i64;
                (d != 0).then_some((idx, d))
            })
            .collect()
    }
}

/// Coulomb gauge of a field: `dη = F`, `δη = 0`.
#[derive(Clone, Debug)]
pub struct CoulombGauge {
    /// Node-averaged physical vector field.
    pub eta: VectorField3,
    /// Edge values `∫ η·dl`, per axis.
    pub edges: [Vec<f64>; 3],
    pub fluxes: FaceFluxes,
    /// `‖δη‖ / ‖η‖` over edges.
    pub div_residual: f64,
    /// `‖dη − F‖ / ‖F‖` over faces.
    pub curl_residual: f64,
    pub tol: f64,
    /// Number of lattice cells carrying a point defect of F.
    pub lattice_defects: usize,
}

fn support_ratio(u: &DirectionField) -> Result<f64> {
    let d = pullback_field(u)?;
    let g = *u.grid();
    let mut peak: f64 = 0.0;
    let mut edge: f64 = 0.0;
    for (idx, v) in d.values().iter().enumerate() {
        let n = norm2(v).sqrt();
        peak = peak.max(n);
        if g.is_boundary_index(idx) {
            edge = edge.max(n);
        }
    }
    Ok(if peak == 0.0 { 0.0 } else { edge / peak })
}

pub fn coulomb_gauge(u: &DirectionField, tol: f64) -> Result<CoulombGauge> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let ratio = support_ratio(u)?;
    if ratio > SUPPORT_RATIO_LIMIT {
        return Err(Error::NonCompactSupport { ratio });
    }
    let fluxes = face_fluxes(u)?;
    let g = fluxes.grid;
    let dims = g.dims();
    let fft = Fft3::new(dims);
    let mut fhat: Vec<Vec<Complex64>> = fluxes
        .values
        .iter()
        .map(|f| {
            let mut c: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            fft.forward(&mut c);
            c
        })
        .collect();
    let one = Complex64::new(1.0, 0.0);
    let mut ehat = vec![vec![Complex64::default(); g.len()]; 3];
    for idx in 0..g.len() {
        let m = g.coords(idx);
        let d: [Complex64; 3] =
            std::array::from_fn(|a| Complex64::from_polar(1.0, mode_angle(m[a], dims[a])) - one);
        let dd: f64 = d.iter().map(|z| z.norm_sqr()).sum();
        if dd == 0.0 {
            continue;
        }
        let dc = d.map(|z| z.conj());
        let f = [fhat[0][idx], fhat[1][idx], fhat[2][idx]];
        // η̂ = −conj(d) × F̂ / |d|²
        ehat[0][idx] = -(dc[1] * f[2] - dc[2] * f[1]) / dd;
        ehat[1][idx] = -(dc[2] * f[0] - dc[0] * f[2]) / dd;
        ehat[2][idx] = -(dc[0] * f[1] - dc[1] * f[0]) / dd;
    }
    fhat.clear();
    let edges: [Vec<f64>; 3] = std::array::from_fn(|a| {
        let mut c = std::mem::take(&mut ehat[a]);
        fft.inverse(&mut c);
        c.into_iter().map(|z| z.re).collect()
    });

    let (div_residual, curl_residual) = gauge_residuals(&g, &edges, &fluxes.values);
    if div_residual > 10.0 * tol {
        return Err(Error::SolverDiverged { residual: div_residual, limit: 10.0 * tol });
    }
    let h = g.spacing();
    let eta = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            std::array::from_fn(|a| {
                let prev = periodic_step(&g, idx, a, false);
                (edges[a][prev] + edges[a][idx]) / (2.0 * h)
            })
        })
        .collect();
    let lattice_defects = fluxes.defect_cells().len();
    Ok(CoulombGauge {
        eta: VectorField3::new(g, eta)?,
        edges,
        fluxes,
        div_residual,
        curl_residual,
        tol,
        lattice_defects,
    })
}

/// `(‖δη‖/‖η‖, ‖dη − F‖/‖F‖)` on the periodic lattice.
pub(crate) fn gauge_residuals(g: &GridSpec, edges: &[Vec<f64>; 3], faces: &[Vec<f64>; 3]) -> (f64, f64) {
    let [nx, ny, nz] = g.dims();
    let sums = sum_slabs(nz, |k| {
        let mut acc = [0.0; 4];
        for j in 0..ny {
            for i in 0..nx {
                let idx = g.index(i, j, k);
                let mut div = 0.0;
                for a in 0..3 {
                    div += edges[a][idx] - edges[a][periodic_step(g, idx, a, false)];
                    acc[1] += edges[a][idx] * edges[a][idx];
                }
                acc[0] += div * div;
                for (a, &(b, c)) in FACE_AXES.iter().enumerate() {
                    let curl = edges[b][idx] + edges[c][periodic_step(g, idx, b, true)]
                        - edges[b][periodic_step(g, idx, c, true)]
                        - edges[c][idx];
                    let r = curl - faces[a][idx];
                    acc[2] += r * r;
                    acc[3] += faces[a][idx] * faces[a][idx];
                }
            }
        }
        acc
    });
    let rel = |num: f64, den: f64| if den == 0.0 { num.sqrt() } else { (num / den).sqrt() };
    (rel(sums[0], sums[1]), rel(sums[2], sums[3]))
}

/// Per-cell Hopf charge density `(16π²)⁻¹ Σ_a η_a(n) F_a(n + e_a)`; sums to Q.
pub fn charge_density(gauge: &CoulombGauge) -> Vec<f64> {
    let g = gauge.fluxes.grid;
    (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let mut s = 0.0;
            for a in 0..3 {
                s += gauge.edges[a][idx] * gauge.fluxes.values[a][periodic_step(&g, idx, a, true)];
            }
            s / HOPF_NORMALIZATION
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct HopfCharge {
    pub value: f64,
    pub rounded: i64,
    /// `|value − rounded|`.
    pub defect: f64,
    /// Set when the defect exceeds 0.25: the lattice does not resolve the
    /// charge.
    pub poorly_resolved: bool,
    pub div_residual: f64,
    pub curl_residual: f64,
    pub lattice_defects: usize,
}

impl HopfCharge {
    pub fn from_gauge(gauge: &CoulombGauge) -> Self {
        let g = gauge.fluxes.grid;
        let dens = charge_density(gauge);
        let [nx, ny, nz] = g.dims();
        let [value] = sum_slabs(nz, |k| {
            let start = g.index(0, 0, k);
            [dens[start..start + nx * ny].iter().sum()]
        });
        let rounded = value.round() as i64;
        let defect = (value - rounded as f64).abs();
        Self {
            value,
            rounded,
            defect,
            poorly_resolved: defect > 0.25,
            div_residual: gauge.div_residual,
            curl_residual: gauge.curl_residual,
            lattice_defects: gauge.lattice_defects,
        }
    }

    pub fn csv_header() -> &'static str {
        "value,rounded,defect,div_residual,curl_residual"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.value, self.rounded, self.defect, self.div_residual, self.curl_residual
        )
    }
}

pub fn hopf_charge(u: &DirectionField, tol: f64) -> Result<HopfCharge> {
    Ok(HopfCharge::from_gauge(&coulomb_gauge(u, tol)?))
}

/// `Π(x) = (2(x₁x₃+x₂x₄), 2(x₂x₃−x₁x₄), x₁²+x₂²−x₃²−x₄²)`.
#[inline]
pub fn hopf_map(p: [f64; 4]) -> [f64; 3] {
    let [x1, x2, x3, x4] = p;
    [
        2.0 * (x1 * x3 + x2 * x4),
        2.0 * (x2 * x3 - x1 * x4),
        x1 * x1 + x2 * x2 - x3 * x3 - x4 * x4,
    ]
}

/// `Π ∘ v` nodewise.
pub fn hopf_project(v: &DirectionField) -> Result<DirectionField> {
    v.require_components(4)?;
    DirectionField::new(
        *v.grid(),
        3,
        v.values().chunks(4).flat_map(|q| hopf_map([q[0], q[1], q[2], q[3]])).collect(),
        v.boundary(),
    )
}

/// Vector field of `v*(2α)`, `α = x₁dx₂ − x₂dx₁ + x₃dx₄ − x₄dx₃`, with
/// central differences.
pub fn alpha_pullback(v: &DirectionField) -> Result<VectorField3> {
    v.require_components(4)?;
    let jac = v.gradient();
    let g = *v.grid();
    let values = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let q = v.node4(idx);
            std::array::from_fn(|k| {
                let d = jac.partial(idx, k);
                2.0 * (q[0] * d[1] - q[1] * d[0] + q[2] * d[3] - q[3] * d[2])
            })
        })
        .collect();
    VectorField3::new(g, values)
}

/// Divergence-free part of a node vector field, by FFT on the periodic box.
pub fn helmholtz_solenoidal(v: &VectorField3) -> VectorField3 {
    let g = *v.grid();
    let dims = g.dims();
    let h = g.spacing();
    let fft = Fft3::new(dims);
    let mut comps: Vec<Vec<Complex64>> = (0..3)
        .map(|a| {
            let mut c: Vec<Complex64> =
                v.values().iter().map(|x| Complex64::new(x[a], 0.0)).collect();
            fft.forward(&mut c);
            c
        })
        .collect();
    for idx in 0..g.len() {
        let m = g.coords(idx);
        let k: [f64; 3] = std::array::from_fn(|a| wavenumber(m[a], dims[a], h));
        let kk = norm2(&k);
        if kk == 0.0 {
            continue;
        }
        let kv = k[0] * comps[0][idx] + k[1] * comps[1][idx] + k[2] * comps[2][idx];
        for a in 0..3 {
            comps[a][idx] -= kv * (k[a] / kk);
        }
    }
    for c in comps.iter_mut() {
        fft.inverse(c);
    }
    let values = (0..g.len())
        .map(|idx| [comps[0][idx].re, comps[1][idx].re, comps[2][idx].re])
        .collect();
    VectorField3::new(g, values).expect("finite spectral projection")
}
