use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::{alpha_pullback, hopf_map, CoulombGauge};
use crate::error::{Error, Result};
use crate::grid::{DirectionField, GridSpec, VectorField3};
use crate::reduce::ordered_sum;

/// A point of S³ over `u`, from whichever of the two standard charts is
/// better conditioned. Coordinates are `(Re z₁, Im z₁, Re z₂, Im z₂)`.
#[inline]
pub fn lift_section(u: [f64; 3]) -> [f64; 4] {
    if u[2] >= 0.0 {
        let a = ((1.0 + u[2]) / 2.0).sqrt();
        [a, 0.0, u[0] / (2.0 * a), -u[1] / (2.0 * a)]
    } else {
        let b = ((1.0 - u[2]) / 2.0).sqrt();
        [u[0] / (2.0 * b), u[1] / (2.0 * b), b, 0.0]
    }
}

/// `arg ⟨p, q⟩` for the Hermitian product of two S³ points.
#[inline]
fn pair_phase(p: &[f64; 4], q: &[f64; 4]) -> f64 {
    let re = p[0] * q[0] + p[1] * q[1] + p[2] * q[2] + p[3] * q[3];
    let im = p[0] * q[1] - p[1] * q[0] + p[2] * q[3] - p[3] * q[2];
    im.atan2(re)
}

#[inline]
fn rotate_phase(p: [f64; 4], theta: f64) -> [f64; 4] {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], c * p[2] - s * p[3], s * p[2] + c * p[3]]
}

#[inline]
fn wrap(x: f64) -> f64 {
    x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor()
}

#[derive(Clone, Debug)]
pub struct LiftResult {
    pub lift: DirectionField,
    /// Relative L² residual of `|∇ū|² = ¼|η|² + ¼|∇u|²`.
    pub identity_residual: f64,
    /// Relative L² residual of the same identity with coefficient 1 on `|∇u|²`.
    pub identity_residual_unit_coefficient: f64,
    /// `‖ū*(2α) + η‖ / ‖η‖`.
    pub pullback_residual: f64,
    /// `max |Π∘ū − u|`.
    pub projection_error: f64,
    pub phase_iterations: usize,
}

/// Builds `ū` with `Π∘ū = u` whose connection matches the Coulomb gauge:
/// along every lattice edge `2 arg⟨ū_n, ū_m⟩ ≈ −∫η`.
///
/// Phases are first propagated along a breadth-first tree from the box
/// centre, then corrected by a least-squares solve over all edges with the
/// phase at the centre held at zero.
pub fn hopf_lift(u: &DirectionField, gauge: &CoulombGauge) -> Result<LiftResult> {
    u.require_components(3)?;
    let g = *u.grid();
    if gauge.fluxes.grid != g {
        return Err(Error::InvalidArgument("gauge and field grids differ".into()));
    }
    let section: Vec<[f64; 4]> = (0..g.len()).map(|idx| lift_section(u.node3(idx))).collect();
    let dims = g.dims();
    // target[a][n]: required phase increment θ(n + e_a) − θ(n).
    let target: [Vec<f64>; 3] = std::array::from_fn(|a| {
        (0..g.len())
            .map(|idx| {
                if g.coords(idx)[a] + 1 == dims[a] {
                    return 0.0;
                }
                let m = idx + g.stride(a);
                -0.5 * gauge.edges[a][idx] - pair_phase(&section[idx], &section[m])
            })
            .collect()
    });

    let center = {
        let c = g.dims().map(|n| n / 2);
        g.index(c[0], c[1], c[2])
    };
    let mut theta = vec![f64::NAN; g.len()];
    theta[center] = 0.0;
    let mut queue = VecDeque::from([center]);
    while let Some(n) = queue.pop_front() {
        let coords = g.coords(n);
        for a in 0..3 {
            let s = g.stride(a);
            if coords[a] + 1 < dims[a] && theta[n + s].is_nan() {
                theta[n + s] = theta[n] + target[a][n];
                queue.push_back(n + s);
            }
            if coords[a] > 0 && theta[n - s].is_nan() {
                theta[n - s] = theta[n] - target[a][n - s];
                queue.push_back(n - s);
            }
        }
    }

    // Wrapped mismatch on every edge, then L φ = b with b = Σ_out r − Σ_in r.
    let mut b = vec![0.0; g.len()];
    for a in 0..3 {
        let s = g.stride(a);
        for n in 0..g.len() {
            if g.coords(n)[a] + 1 == dims[a] {
                continue;
            }
            let r = wrap(theta[n + s] - theta[n] - target[a][n]);
            b[n] += r;
            b[n + s] -= r;
        }
    }
    let (phi, phase_iterations) = solve_graph_laplacian(&g, &b, 1e-12, 20 * g.len().max(100))?;
    let shift = phi[center];
    let values: Vec<f64> = (0..g.len())
        .into_par_iter()
        .flat_map_iter(|n| rotate_phase(section[n], theta[n] + phi[n] - shift))
        .collect();
    let lift = DirectionField::new(g, 4, values, u.boundary())?;

    let projection_error = (0..g.len())
        .map(|n| {
            let p = hopf_map(lift.node4(n));
            let v = u.node3(n);
            (0..3).map(|i| (p[i] - v[i]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let alpha = alpha_pullback(&lift)?;
    let pullback_residual = relative_l2(&alpha.values(), &gauge.eta.values(), 1.0);
    let (identity_residual, identity_residual_unit_coefficient) =
        lift_identity_residuals(&lift, u, &gauge.eta)?;
    Ok(LiftResult {
        lift,
        identity_residual,
        identity_residual_unit_coefficient,
        pullback_residual,
        projection_error,
        phase_iterations,
    })
}

/// `‖a + sign·b‖ / ‖b‖` with `sign = 1`: how far `a` is from `−b`.
fn relative_l2(a: &[[f64; 3]], b: &[[f64; 3]], sign: f64) -> f64 {
    let num = ordered_sum(
        a.iter()
            .zip(b)
            .map(|(x, y)| (0..3).map(|i| (x[i] + sign * y[i]).powi(2)).sum())
            .collect(),
    );
    let den = ordered_sum(b.iter().map(|y| y.iter().map(|v| v * v).sum()).collect());
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Relative L² residuals of `|∇ū|² − ¼|η|² − c|∇u|²` for `c = ¼` and `c = 1`,
/// with central-difference Jacobians.
pub fn lift_identity_residuals(
    lift: &DirectionField,
    u: &DirectionField,
    eta: &VectorField3,
) -> Result<(f64, f64)> {
    lift.require_components(4)?;
    u.require_components(3)?;
    let jl = lift.gradient();
    let ju = u.gradient();
    let n = lift.grid().len();
    let rows: Vec<[f64; 3]> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let e = eta.get(idx);
            let lhs = jl.norm2_at(idx);
            let base = lhs - 0.25 * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
            let du = ju.norm2_at(idx);
            let r1 = base - 0.25 * du;
            let r2 = base - du;
            [r1 * r1, r2 * r2, lhs * lhs]
        })
        .collect();
    let s: [f64; 3] = std::array::from_fn(|i| ordered_sum(rows.iter().map(|r| r[i]).collect()));
    if s[2] == 0.0 {
        return Ok((s[0].sqrt(), s[1].sqrt()));
    }
    Ok(((s[0] / s[2]).sqrt(), (s[1] / s[2]).sqrt()))
}

/// Conjugate gradients for the Neumann graph Laplacian of the node lattice.
/// `b` must sum to zero; the returned solution has zero mean.
fn solve_graph_laplacian(g: &GridSpec, b: &[f64], rtol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let apply = |x: &[f64], out: &mut [f64]| {
        let dims = g.dims();
        out.par_iter_mut().enumerate().for_each(|(n, o)| {
            let c = g.coords(n);
            let mut s = 0.0;
            for a in 0..3 {
                let st = g.stride(a);
                if c[a] + 1 < dims[a] {
                    s += x[n] - x[n + st];
                }
                if c[a] > 0 {
                    s += x[n] - x[n - st];
                }
            }
            *o = s;
        });
    };
    let dotp = |a: &[f64], b: &[f64]| ordered_sum(a.par_iter().zip(b).map(|(x, y)| x * y).collect());
    let n = b.len();
    let mean = b.iter().sum::<f64>() / n as f64;
    let rhs: Vec<f64> = b.iter().map(|v| v - mean).collect();
    let bnorm = dotp(&rhs, &rhs).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dotp(&r, &r);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rr / dotp(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        let rr_new = dotp(&r, &r);
        if rr_new.sqrt() <= rtol * bnorm {
            return Ok((x, it));
        }
        let beta = rr_new / rr;
        p.par_iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    Err(Error::SolverDiverged { residual: rr.sqrt() / bnorm, limit: rtol })
}
