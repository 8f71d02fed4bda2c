//! Cubic decomposition of the Hopf charge.
//!
//! Space is tiled by cubes of side `R₀` centred at `a₀ + R₀·i`. The per-cell
//! charge density of the Coulomb gauge is summed cube by cube, and a shift
//! `a₀` is chosen so that the energy on the cube faces is small.

use rayon::prelude::*;

use crate::energy::{quartic_energy, Stencil};
use crate::error::{Error, Result};
use crate::grid::{DirectionField, GridSpec};
use crate::topology::{charge_density, CoulombGauge};
use crate::vecmath::{dist, norm2};

/// Charge carried by one cube.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeCharge {
    pub index: [i64; 3],
    pub charge: f64,
    pub rounded: i64,
    pub error: f64,
    /// Charge-weighted centre of the cube's cells.
    pub centroid: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CubeDecomposition {
    pub r0: f64,
    pub a0: [f64; 3],
    /// Every cube that contains at least one lattice cell, in index order.
    pub cubes: Vec<CubeCharge>,
    pub surface_integral: f64,
    pub total_error: f64,
    pub total_charge: f64,
}

impl CubeDecomposition {
    /// Cubes with nonzero rounded charge.
    pub fn charged_lumps(&self) -> Vec<&CubeCharge> {
        self.cubes.iter().filter(|c| c.rounded != 0).collect()
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("i,j,k,q,k_i,e_i\n");
        for c in self.charged_lumps() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.index[0], c.index[1], c.index[2], c.charge, c.rounded, c.error
            ));
        }
        s.push_str("r0,a0_x,a0_y,a0_z,surface_integral,total_error\n");
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            self.r0, self.a0[0], self.a0[1], self.a0[2], self.surface_integral, self.total_error
        ));
        s
    }
}

fn check_side(g: &GridSpec, r0: f64) -> Result<()> {
    if !(r0.is_finite() && r0 >= 4.0 * g.spacing()) {
        return Err(Error::InvalidArgument(format!(
            "cube side {r0} must be at least 4h = {}",
            4.0 * g.spacing()
        )));
    }
    Ok(())
}

fn cube_of(p: [f64; 3], r0: f64, a: [f64; 3]) -> [i64; 3] {
    std::array::from_fn(|k| ((p[k] - a[k]) / r0 + 0.5).floor() as i64)
}

/// `|∇u|² + |η|² + |η|⁴ + ε|∇u|⁴` at every node.
fn face_density(u: &DirectionField, gauge: &CoulombGauge, epsilon: f64) -> Vec<f64> {
    let eta = gauge.eta.values();
    (0..u.grid().len())
        .into_par_iter()
        .map(|idx| {
            let (g2, _) = Stencil::at(u, idx).densities();
            let e2 = norm2(&eta[idx]);
            g2 + e2 + e2 * e2 + epsilon * g2 * g2
        })
        .collect()
}

/// Integral of a nodal density over the cube faces inside the box: each
/// face plane is sampled at the in-plane nodes with trapezoid weights, and
/// the density is interpolated linearly between the two node layers that
/// bracket the plane.
fn faces_integral(g: &GridSpec, density: &[f64], r0: f64, a: [f64; 3]) -> f64 {
    let h = g.spacing();
    let o = g.origin();
    let hi = g.upper();
    let dims = g.dims();
    let mut total = 0.0;
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        let m_lo = ((o[axis] - a[axis]) / r0 - 0.5).ceil() as i64;
        let m_hi = ((hi[axis] - a[axis]) / r0 - 0.5).floor() as i64;
        for m in m_lo..=m_hi {
            let x = a[axis] + r0 * (m as f64 + 0.5);
            let s = (x - o[axis]) / h;
            let i0 = (s.floor() as usize).min(dims[axis] - 2);
            let t = (s - i0 as f64).clamp(0.0, 1.0);
            let mut acc = 0.0;
            for jb in 0..dims[b] {
                for jc in 0..dims[c] {
                    let wb = if jb == 0 || jb + 1 == dims[b] { 0.5 } else { 1.0 };
                    let wc = if jc == 0 || jc + 1 == dims[c] { 0.5 } else { 1.0 };
                    let mut p = [0usize; 3];
                    p[b] = jb;
                    p[c] = jc;
                    p[axis] = i0;
                    let n0 = g.index(p[0], p[1], p[2]);
                    p[axis] = i0 + 1;
                    let n1 = g.index(p[0], p[1], p[2]);
                    acc += wb * wc * ((1.0 - t) * density[n0] + t * density[n1]);
                }
            }
            total += acc * h * h;
        }
    }
    total
}

fn check_normalization(u: &DirectionField, epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let value = epsilon * quartic_energy(u);
    if value > 1.0 {
        return Err(Error::NormalizationViolated { value });
    }
    Ok(())
}

/// `∫_{Σ_{R₀}(a)} (|∇u|² + |η|² + |η|⁴) + ε|∇u|⁴ dσ` over the faces in the box.
pub fn surface_integral(
    u: &DirectionField,
    gauge: &CoulombGauge,
    epsilon: f64,
    r0: f64,
    a: [f64; 3],
) -> Result<f64> {
    check_side(u.grid(), r0)?;
    Ok(faces_integral(u.grid(), &face_density(u, gauge, epsilon), r0, a))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftSearch {
    pub shift: [f64; 3],
    pub surface_integral: f64,
    /// Mean over all sampled shifts.
    pub mean: f64,
    pub samples: usize,
}

/// Samples `n³` shifts on a regular grid in `[0, R₀/12]³` and returns the
/// one with the smallest face integral (lexicographically first on ties).
pub fn shift_search(
    u: &DirectionField,
    gauge: &CoulombGauge,
    epsilon: f64,
    r0: f64,
    n_samples: usize,
) -> Result<ShiftSearch> {
    check_side(u.grid(), r0)?;
    check_normalization(u, epsilon)?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let density = face_density(u, gauge, epsilon);
    let coord = |i: usize| {
        if n_samples == 1 {
            0.0
        } else {
            r0 / 12.0 * i as f64 / (n_samples - 1) as f64
        }
    };
    let shifts: Vec<[f64; 3]> = (0..n_samples.pow(3))
        .map(|s| [coord(s / (n_samples * n_samples)), coord((s / n_samples) % n_samples), coord(s % n_samples)])
        .collect();
    let values: Vec<f64> =
        shifts.par_iter().map(|&a| faces_integral(u.grid(), &density, r0, a)).collect();
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    Ok(ShiftSearch {
        shift: shifts[best],
        surface_integral: values[best],
        mean: values.iter().sum::<f64>() / values.len() as f64,
        samples: values.len(),
    })
}

/// Sums the per-cell charge density cube by cube. Cells are attributed by
/// their centre; cubes clipped by the box keep their partial charge.
pub fn cube_charges(
    u: &DirectionField,
    gauge: &CoulombGauge,
    epsilon: f64,
    r0: f64,
    a0: [f64; 3],
) -> Result<CubeDecomposition> {
    let g = *u.grid();
    check_side(&g, r0)?;
    if norm2(&a0).sqrt() > r0 / 4.0 {
        return Err(Error::InvalidArgument(format!("shift {a0:?} exceeds R0/4")));
    }
    if gauge.fluxes.grid != g {
        return Err(Error::InvalidArgument("gauge and field live on different grids".into()));
    }
    let q = charge_density(gauge);
    let h = g.spacing();
    let mut sums: std::collections::BTreeMap<[i64; 3], (f64, [f64; 3], f64)> = Default::default();
    for (idx, &qc) in q.iter().enumerate() {
        let p = g.node_position(idx);
        let c = [p[0] + 0.5 * h, p[1] + 0.5 * h, p[2] + 0.5 * h];
        let e = sums.entry(cube_of(c, r0, a0)).or_insert((0.0, [0.0; 3], 0.0));
        e.0 += qc;
        for k in 0..3 {
            e.1[k] += qc.abs() * c[k];
        }
        e.2 += qc.abs();
    }
    let cubes: Vec<CubeCharge> = sums
        .into_iter()
        .map(|(index, (charge, m, w))| {
            let rounded = charge.round() as i64;
            let centroid = if w > 0.0 {
                m.map(|x| x / w)
            } else {
                std::array::from_fn(|k| a0[k] + r0 * index[k] as f64)
            };
            CubeCharge { index, charge, rounded, error: (charge - rounded as f64).abs(), centroid }
        })
        .collect();
    let total_error = cubes.iter().map(|c| c.error).sum();
    let total_charge = cubes.iter().map(|c| c.charge).sum();
    let surface_integral = surface_integral(u, gauge, epsilon, r0, a0)?;
    Ok(CubeDecomposition { r0, a0, cubes, surface_integral, total_error, total_charge })
}

/// Shift search followed by the charge sums at the chosen shift.
pub fn decompose(
    u: &DirectionField,
    gauge: &CoulombGauge,
    epsilon: f64,
    r0: f64,
    n_samples: usize,
) -> Result<CubeDecomposition> {
    let s = shift_search(u, gauge, epsilon, r0, n_samples)?;
    cube_charges(u, gauge, epsilon, r0, s.shift)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    /// Centroid of every tracked lump in every snapshot.
    pub tracks: Vec<Vec<[f64; 3]>>,
    /// Mean displacement per snapshot of each lump.
    pub drift_rates: Vec<f64>,
    /// `(lump a, lump b, distance per snapshot)`.
    pub pair_distances: Vec<(usize, usize, Vec<f64>)>,
    /// Pairs whose distance increases at every snapshot.
    pub diverging: Vec<(usize, usize)>,
    pub note: Option<String>,
}

/// Follows the charged lumps of successive decompositions, matching each
/// lump to the nearest centroid of the previous snapshot.
pub fn separation_diagnostic(snapshots: &[CubeDecomposition]) -> Result<SeparationReport> {
    if snapshots.len() < 2 {
        return Err(Error::InvalidArgument("need at least two snapshots".into()));
    }
    let first: Vec<[f64; 3]> = snapshots[0].charged_lumps().iter().map(|c| c.centroid).collect();
    let mut tracks: Vec<Vec<[f64; 3]>> = first.iter().map(|&p| vec![p]).collect();
    let mut lost = false;
    for snap in &snapshots[1..] {
        let mut avail: Vec<[f64; 3]> = snap.charged_lumps().iter().map(|c| c.centroid).collect();
        for t in tracks.iter_mut() {
            let last = *t.last().unwrap();
            let nearest = avail
                .iter()
                .enumerate()
                .min_by(|a, b| dist(a.1, &last).total_cmp(&dist(b.1, &last)))
                .map(|(i, _)| i);
            match nearest {
                Some(i) => t.push(avail.swap_remove(i)),
                None => {
                    lost = true;
                    t.push(last);
                }
            }
        }
    }
    let drift_rates = tracks
        .iter()
        .map(|t| t.windows(2).map(|w| dist(&w[0], &w[1])).sum::<f64>() / (t.len() - 1) as f64)
        .collect();
    let mut pair_distances = Vec::new();
    let mut diverging = Vec::new();
    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            let d: Vec<f64> = tracks[i].iter().zip(&tracks[j]).map(|(a, b)| dist(a, b)).collect();
            if d.windows(2).all(|w| w[1] > w[0]) {
                diverging.push((i, j));
            }
            pair_distances.push((i, j, d));
        }
    }
    let note = if tracks.len() < 2 {
        Some("no pair to track".to_string())
    } else if lost {
        Some("lump count changed between snapshots".to_string())
    } else {
        None
    };
    Ok(SeparationReport { tracks, drift_rates, pair_distances, diverging, note })
}
