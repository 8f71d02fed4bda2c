//! Energy functionals on the lattice.
//!
//! Densities use the compact nearest-neighbour stencil: along each axis a
//! node sees up to two one-sided differences `a⁺ = (u(n+e) - u(n))/h` and
//! `a⁻ = (u(n) - u(n-e))/h`, and
//!
//! * `|∇u|²  = Σ_k mean_σ |a_k^σ|²`
//! * `cross  = ½ Σ_{k<l} mean_{σ,τ} (u · a_k^σ × a_l^τ)²`, the wedge norm
//!   `|a_k^σ ∧ a_l^τ|²` for S³ fields
//! * `|∇u|⁴ := (|∇u|²)²`
//!
//! Central differences would decouple the lattice into eight sublattices
//! with zero-energy checkerboard modes; the compact stencil has none.
//! Integrals use the clipped node weights of [`GridSpec::weight`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{DirectionField, GridSpec};
use crate::reduce::sum_slabs;
use crate::vecmath::{dot, norm2, wedge2};

/// Which perturbed functional is meant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// `∫|∇u|² + ε²∫|∇u|⁴`
    Harmonic,
    /// `∫|∇u|² + ½Σ_{k<l}∫|∂_k u × ∂_l u|² + ε∫|∇u|⁴`
    Faddeev,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Harmonic => "harmonic",
            Mode::Faddeev => "faddeev",
        }
    }

    /// Coefficient of the quartic term at a given ε.
    pub fn quartic_weight(&self, epsilon: f64) -> f64 {
        match self {
            Mode::Harmonic => epsilon * epsilon,
            Mode::Faddeev => epsilon,
        }
    }

    pub fn cross_weight(&self) -> f64 {
        match self {
            Mode::Harmonic => 0.0,
            Mode::Faddeev => 1.0,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(Mode::Harmonic),
            "faddeev" => Ok(Mode::Faddeev),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    pub mode: Mode,
    pub epsilon: f64,
    pub dirichlet: f64,
    pub cross: f64,
    pub quartic: f64,
    pub total: f64,
    /// `8π L(u)` when a relaxed energy was assembled.
    pub relax_defect: Option<f64>,
}

impl EnergyReport {
    pub fn assemble(mode: Mode, epsilon: f64, dirichlet: f64, cross: f64, quartic: f64) -> Self {
        let total =
            dirichlet + mode.cross_weight() * cross + mode.quartic_weight(epsilon) * quartic;
        Self { mode, epsilon, dirichlet, cross, quartic, total, relax_defect: None }
    }

    /// The ε-dependent part of the total.
    pub fn perturbation(&self) -> f64 {
        self.mode.quartic_weight(self.epsilon) * self.quartic
    }

    /// Unperturbed Faddeev energy `dirichlet + cross`.
    pub fn faddeev(&self) -> f64 {
        self.dirichlet + self.cross
    }

    pub fn csv_header() -> &'static str {
        "mode,epsilon,dirichlet,cross,quartic,total"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.mode, self.epsilon, self.dirichlet, self.cross, self.quartic, self.total
        )
    }
}

/// One-sided differences around a node; `a[k][0]` forward, `a[k][1]` backward.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub u: [f64; 4],
    pub c: usize,
    pub a: [[[f64; 4]; 2]; 3],
    pub has: [[bool; 2]; 3],
    pub count: [f64; 3],
}

impl Stencil {
    #[inline]
    pub fn at(u: &DirectionField, idx: usize) -> Self {
        let g = u.grid();
        let c = u.components();
        let dims = g.dims();
        let coords = g.coords(idx);
        let inv_h = 1.0 / g.spacing();
        let mut a = [[[0.0; 4]; 2]; 3];
        let mut has = [[false; 2]; 3];
        let mut count = [0.0; 3];
        let here = u.node(idx);
        for k in 0..3 {
            let s = g.stride(k);
            if coords[k] + 1 < dims[k] {
                let nb = u.node(idx + s);
                for i in 0..c {
                    a[k][0][i] = (nb[i] - here[i]) * inv_h;
                }
                has[k][0] = true;
                count[k] += 1.0;
            }
            if coords[k] > 0 {
                let nb = u.node(idx - s);
                for i in 0..c {
                    a[k][1][i] = (here[i] - nb[i]) * inv_h;
                }
                has[k][1] = true;
                count[k] += 1.0;
            }
        }
        let mut uu = [0.0; 4];
        uu[..c].copy_from_slice(here);
        Self { u: uu, c, a, has, count }
    }

    /// `(|∇u|², cross density)`.
    #[inline]
    pub fn densities(&self) -> (f64, f64) {
        let mut g2 = 0.0;
        for k in 0..3 {
            let mut s = 0.0;
            for sg in 0..2 {
                if self.has[k][sg] {
                    s += norm2(&self.a[k][sg]);
                }
            }
            g2 += s / self.count[k];
        }
        let mut cross = 0.0;
        for (k, l) in [(0, 1), (0, 2), (1, 2)] {
            let mut s = 0.0;
            for sk in 0..2 {
                for sl in 0..2 {
                    if self.has[k][sk] && self.has[l][sl] {
                        s += self.pair(&self.a[k][sk], &self.a[l][sl]);
                    }
                }
            }
            cross += 0.5 * s / (self.count[k] * self.count[l]);
        }
        (g2, cross)
    }

    /// `|a ∧ b|²`, taken as `(u · a × b)²` for S² fields so that maps into a
    /// great circle have no cross energy on the lattice either.
    #[inline]
    fn pair(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        if self.c == 3 {
            let t = triple3(&self.u, a, b);
            t * t
        } else {
            wedge2(a, b)
        }
    }

    /// Derivative of `g2 + cw·cross + qw·g2²` with respect to each one-sided
    /// difference, and with respect to the node value itself (through the
    /// S² cross density).
    #[inline]
    pub fn density_gradient(&self, cw: f64, qw: f64) -> ([[[f64; 4]; 2]; 3], [f64; 4]) {
        let (g2, _) = self.densities();
        let lead = 1.0 + 2.0 * qw * g2;
        let mut out = [[[0.0; 4]; 2]; 3];
        let mut du = [0.0; 4];
        for k in 0..3 {
            for sg in 0..2 {
                if !self.has[k][sg] {
                    continue;
                }
                let f = 2.0 * lead / self.count[k];
                for i in 0..4 {
                    out[k][sg][i] = f * self.a[k][sg][i];
                }
            }
        }
        if cw != 0.0 {
            for k in 0..3 {
                for l in 0..3 {
                    if k == l {
                        continue;
                    }
                    let scale = cw * 0.5 / (self.count[k] * self.count[l]);
                    for sk in 0..2 {
                        if !self.has[k][sk] {
                            continue;
                        }
                        let a = &self.a[k][sk];
                        for sl in 0..2 {
                            if !self.has[l][sl] {
                                continue;
                            }
                            let b = &self.a[l][sl];
                            if self.c == 3 {
                                // d/da (u·a×b)² = 2t (b×u); the u-derivative
                                // 2t (a×b) is counted once per unordered pair.
                                let t = triple3(&self.u, a, b);
                                let bu = cross3(b, &self.u);
                                for i in 0..3 {
                                    out[k][sk][i] += scale * 2.0 * t * bu[i];
                                }
                                if k < l {
                                    let ab = cross3(a, b);
                                    for i in 0..3 {
                                        du[i] += scale * 2.0 * t * ab[i];
                                    }
                                }
                            } else {
                                let bb = norm2(b);
                                let ab = dot(a, b);
                                for i in 0..4 {
                                    out[k][sk][i] += scale * 2.0 * (bb * a[i] - ab * b[i]);
                                }
                            }
                        }
                    }
                }
            }
        }
        (out, du)
    }
}

#[inline]
fn cross3(a: &[f64; 4], b: &[f64; 4]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
fn triple3(u: &[f64; 4], a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let c = cross3(a, b);
    u[0] * c[0] + u[1] * c[1] + u[2] * c[2]
}

/// Per-node `(|∇u|², cross density)` on the compact stencil.
pub fn node_densities(u: &DirectionField) -> Vec<(f64, f64)> {
    (0..u.grid().len()).into_par_iter().map(|idx| Stencil::at(u, idx).densities()).collect()
}

/// Weighted sums `[∫|∇u|², ∫cross, ∫|∇u|⁴]`.
fn integrals(u: &DirectionField) -> [f64; 3] {
    let g = *u.grid();
    let [nx, ny, nz] = g.dims();
    sum_slabs(nz, |k| {
        let mut acc = [0.0; 3];
        for j in 0..ny {
            for i in 0..nx {
                let idx = g.index(i, j, k);
                let w = g.weight(i, j, k);
                let (g2, cross) = Stencil::at(u, idx).densities();
                acc[0] += w * g2;
                acc[1] += w * cross;
                acc[2] += w * g2 * g2;
            }
        }
        acc
    })
}

pub fn dirichlet_energy(u: &DirectionField) -> f64 {
    integrals(u)[0]
}

pub fn quartic_energy(u: &DirectionField) -> f64 {
    integrals(u)[2]
}

pub fn cross_energy(u: &DirectionField) -> f64 {
    integrals(u)[1]
}

pub fn perturbed_energy(u: &DirectionField, epsilon: f64, mode: Mode) -> Result<EnergyReport> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let [d, c, q] = integrals(u);
    Ok(EnergyReport::assemble(mode, epsilon, d, c, q))
}

/// Fraction of the node's (box-clipped) cell volume inside a ball, times the
/// cell volume, from 2³ subcell centres.
pub(crate) fn ball_weight(g: &GridSpec, idx: usize, center: [f64; 3], radius: f64) -> f64 {
    let [i, j, k] = g.coords(idx);
    let p = g.position(i, j, k);
    let h = g.spacing();
    let dims = g.dims();
    let coords = [i, j, k];
    let sub = h * h * h / 8.0;
    let r2 = radius * radius;
    let mut w = 0.0;
    for corner in 0..8 {
        let mut q = [0.0; 3];
        let mut inside_box = true;
        for a in 0..3 {
            let s = if (corner >> a) & 1 == 1 { 0.25 } else { -0.25 };
            if (coords[a] == 0 && s < 0.0) || (coords[a] + 1 == dims[a] && s > 0.0) {
                inside_box = false;
            }
            q[a] = p[a] + s * h - center[a];
        }
        if inside_box && norm2(&q) <= r2 {
            w += sub;
        }
    }
    w
}

/// Node indices whose cells may meet the ball.
pub(crate) fn ball_nodes(g: &GridSpec, center: [f64; 3], radius: f64) -> Vec<usize> {
    let o = g.origin();
    let h = g.spacing();
    let dims = g.dims();
    let range = |a: usize| {
        let lo = ((center[a] - radius - o[a]) / h - 1.0).floor().max(0.0) as usize;
        let hi = (((center[a] + radius - o[a]) / h + 1.0).ceil().max(0.0) as usize).min(dims[a] - 1);
        lo..=hi
    };
    let mut out = Vec::new();
    for k in range(2) {
        for j in range(1) {
            for i in range(0) {
                out.push(g.index(i, j, k));
            }
        }
    }
    out
}

fn check_ball(g: &GridSpec, center: [f64; 3], radius: f64) -> Result<()> {
    if !g.contains(center) || g.distance_to_boundary(center) < radius {
        return Err(Error::BallOutsideDomain { center, radius });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotonicityRow {
    pub rho: f64,
    pub radius: f64,
    /// `R⁻¹I(R) − ρ⁻¹I(ρ)` with `I(r) = ∫_{B_r}(|∇u|² + ε²|∇u|⁴)`.
    pub lhs: f64,
    /// `∫_{B_R∖B_ρ} 2(1+2ε²|∇u|²)|∂_r u|² r⁻¹`.
    pub radial_term: f64,
    /// `∫_ρ^R r⁻² ∫_{B_r} 2ε²|∇u|⁴ dr`.
    pub correction: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl MonotonicityRow {
    /// `lhs + correction`, nonnegative for minimizers.
    pub fn weakened(&self) -> f64 {
        self.lhs + self.correction
    }

    /// `|residual| / max(|lhs|, h)`.
    pub fn relative_residual(&self, h: f64) -> f64 {
        self.residual.abs() / self.lhs.abs().max(h)
    }
}

/// Checks the harmonic-mode monotonicity identity between consecutive radii.
///
/// For a critical point of `∫|∇u|² + ε²|∇u|⁴` the identity
/// `lhs = radial_term − correction` holds exactly in the continuum.
pub fn monotonicity_check(
    u: &DirectionField,
    epsilon: f64,
    center: [f64; 3],
    radii: &[f64],
) -> Result<Vec<MonotonicityRow>> {
    let g = *u.grid();
    if radii.len() < 2 {
        return Err(Error::InvalidArgument("need at least two radii".into()));
    }
    if radii.windows(2).any(|w| !(w[0] > 0.0 && w[1] > w[0])) {
        return Err(Error::InvalidArgument("radii must be positive and increasing".into()));
    }
    check_ball(&g, center, *radii.last().unwrap())?;
    let e2 = epsilon * epsilon;
    let jac = u.gradient();
    let nodes = ball_nodes(&g, center, *radii.last().unwrap());
    let dens: Vec<(f64, f64, f64)> = nodes
        .par_iter()
        .map(|&idx| {
            let (g2, _) = Stencil::at(u, idx).densities();
            let p = g.node_position(idx);
            let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            let r = norm2(&d).sqrt();
            let radial = if r > 0.0 {
                jac.radial2_at(idx, &[d[0] / r, d[1] / r, d[2] / r])
            } else {
                0.0
            };
            (g2, radial, r)
        })
        .collect();

    let ball = |radius: f64| -> Vec<f64> {
        nodes.iter().map(|&idx| ball_weight(&g, idx, center, radius)).collect()
    };
    let mut rows = Vec::new();
    for w in radii.windows(2) {
        let (rho, big) = (w[0], w[1]);
        let w_small = ball(rho);
        let w_big = ball(big);
        let mut i_small = 0.0;
        let mut i_big = 0.0;
        let mut radial_term = 0.0;
        let mut correction = 0.0;
        for (n, &(g2, radial, r)) in dens.iter().enumerate() {
            let f = g2 + e2 * g2 * g2;
            i_small += w_small[n] * f;
            i_big += w_big[n] * f;
            let shell = w_big[n] - w_small[n];
            if shell > 0.0 && r > 0.0 {
                radial_term += shell * 2.0 * (1.0 + 2.0 * e2 * g2) * radial / r;
            }
            if w_big[n] > 0.0 {
                correction += w_big[n] * 2.0 * e2 * g2 * g2 * (1.0 / r.max(rho) - 1.0 / big);
            }
        }
        let lhs = i_big / big - i_small / rho;
        let rhs = radial_term - correction;
        rows.push(MonotonicityRow {
            rho,
            radius: big,
            lhs,
            radial_term,
            correction,
            rhs,
            residual: lhs - rhs,
        });
    }
    Ok(rows)
}

/// Scaled ball energies `r⁻¹∫_{B_r}(|∇u|² + ε²|∇u|⁴)` around sample centres.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
    /// Row-major: `ratios[c * radii.len() + r]`.
    pub ratios: Vec<f64>,
    pub threshold: f64,
    /// Centres whose ratio exceeds the threshold at every radius.
    pub flagged: Vec<usize>,
}

impl DensityMap {
    pub fn ratio(&self, center: usize, radius: usize) -> f64 {
        self.ratios[center * self.radii.len() + radius]
    }
}

pub const DEFAULT_DENSITY_THRESHOLD: f64 = 0.05;

/// Evaluates the scaled ball energies at the given node centres (every node
/// whose largest ball fits the box when `centers` is `None`).
pub fn density_map(
    u: &DirectionField,
    epsilon: f64,
    threshold: f64,
    radii: &[f64],
    centers: Option<&[usize]>,
) -> Result<DensityMap> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument("density threshold must be positive".into()));
    }
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::InvalidArgument("radii must be positive and increasing".into()));
    }
    let g = *u.grid();
    let rmax = *radii.last().unwrap();
    let centers: Vec<usize> = match centers {
        Some(c) => c.to_vec(),
        None => (0..g.len())
            .filter(|&idx| g.distance_to_boundary(g.node_position(idx)) >= rmax)
            .collect(),
    };
    let e2 = epsilon * epsilon;
    let dens: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (g2, _) = Stencil::at(u, idx).densities();
            g2 + e2 * g2 * g2
        })
        .collect();
    let ratios: Vec<Vec<f64>> = centers
        .par_iter()
        .map(|&c| {
            let p = g.node_position(c);
            let nodes = ball_nodes(&g, p, rmax);
            radii
                .iter()
                .map(|&r| {
                    let s: f64 = nodes.iter().map(|&n| ball_weight(&g, n, p, r) * dens[n]).sum();
                    s / r
                })
                .collect()
        })
        .collect();
    let flagged = centers
        .iter()
        .zip(&ratios)
        .filter(|(_, row)| row.iter().all(|&x| x > threshold))
        .map(|(&c, _)| c)
        .collect();
    Ok(DensityMap {
        centers,
        radii: radii.to_vec(),
        ratios: ratios.into_iter().flatten().collect(),
        threshold,
        flagged,
    })
}

/// `8π`, the weight of the minimal connection in the relaxed energy.
pub const RELAXATION_WEIGHT: f64 = 8.0 * PI;
