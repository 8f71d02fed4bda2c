//! Minimal connections between point singularities.
//!
//! `L(u, u₀) = (4π)⁻¹ sup { ∫ (D(u) − D(u₀))·∇ξ : |∇ξ| ≤ 1 }` is bracketed
//! from below by a primal-dual ascent over cell-centred potentials and from
//! above by an exact matching of detected unit defects.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::energy::{density_map, perturbed_energy, EnergyReport, Mode, RELAXATION_WEIGHT};
use crate::error::{Error, Result};
use crate::grid::{DirectionField, GridSpec};
use crate::topology::face_fluxes;
use crate::vecmath::{dist, norm2, solid_angle};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Defect {
    pub position: [f64; 3],
    pub degree: i64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DefectSet {
    pub points: Vec<Defect>,
}

impl DefectSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_degree(&self) -> i64 {
        self.points.iter().map(|d| d.degree).sum()
    }

    /// Positions of the unit charges, a defect of degree `k` repeated `|k|`
    /// times: `(positive, negative)`.
    pub fn unit_charges(&self) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for d in &self.points {
            let list = if d.degree > 0 { &mut pos } else { &mut neg };
            for _ in 0..d.degree.unsigned_abs() {
                list.push(d.position);
            }
        }
        (pos, neg)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("x,y,z,degree\n");
        for d in &self.points {
            s.push_str(&format!("{},{},{},{}\n", d.position[0], d.position[1], d.position[2], d.degree));
        }
        s
    }
}

/// Degree of `u` on the sphere of radius `radius` about `center`, from a
/// latitude-longitude triangulation of trilinearly interpolated values.
pub fn sphere_degree(u: &DirectionField, center: [f64; 3], radius: f64) -> Result<f64> {
    u.require_components(3)?;
    const NT: usize = 24;
    const NP: usize = 48;
    let g = u.grid();
    let sample = |theta: f64, phi: f64| -> Result<[f64; 3]> {
        let p = [
            center[0] + radius * theta.sin() * phi.cos(),
            center[1] + radius * theta.sin() * phi.sin(),
            center[2] + radius * theta.cos(),
        ];
        let stencil = g.trilinear(p).ok_or_else(|| {
            Error::BallOutsideDomain { center, radius }
        })?;
        let mut v = [0.0; 3];
        for (n, w) in stencil {
            let x = u.node3(n);
            for c in 0..3 {
                v[c] += w * x[c];
            }
        }
        let m = norm2(&v).sqrt();
        if m < 1e-8 {
            return Err(Error::DegenerateNode { node: g.index_of_nearest(p), norm: m });
        }
        Ok(v.map(|x| x / m))
    };
    let mut verts = Vec::with_capacity((NT + 1) * NP);
    for i in 0..=NT {
        let theta = PI * i as f64 / NT as f64;
        for j in 0..NP {
            verts.push(sample(theta, 2.0 * PI * j as f64 / NP as f64)?);
        }
    }
    let v = |i: usize, j: usize| &verts[i * NP + j % NP];
    let mut s = 0.0;
    for i in 0..NT {
        for j in 0..NP {
            s += solid_angle(v(i, j), v(i + 1, j), v(i + 1, j + 1));
            s += solid_angle(v(i, j), v(i + 1, j + 1), v(i, j + 1));
        }
    }
    Ok(s / (4.0 * PI))
}

/// Isolated point singularities of `u`: cells of nonzero lattice degree
/// that also lie in the high-density set `{r⁻¹∫_{B_r}|∇u|² > ε₀}`, grouped
/// within `3h`, each assigned the degree of `u` on a sphere of radius `3h`.
pub fn detect_defects(u: &DirectionField, eps0: f64) -> Result<DefectSet> {
    let fluxes = face_fluxes(u)?;
    let g = *u.grid();
    let h = g.spacing();
    let dims = g.dims();
    let cells: Vec<usize> = (0..g.len())
        .into_par_iter()
        .filter(|&idx| {
            let c = g.coords(idx);
            (0..3).all(|a| c[a] + 1 < dims[a]) && fluxes.cell_degree(idx).round() != 0.0
        })
        .collect();
    if cells.is_empty() {
        return Ok(DefectSet::default());
    }
    let centre = |idx: usize| {
        let p = g.node_position(idx);
        [p[0] + 0.5 * h, p[1] + 0.5 * h, p[2] + 0.5 * h]
    };
    let nearest: Vec<usize> = cells.iter().map(|&c| g.index_of_nearest(centre(c))).collect();
    let fits: Vec<bool> = nearest
        .iter()
        .map(|&n| g.distance_to_boundary(g.node_position(n)) >= 3.0 * h)
        .collect();
    let probe: Vec<usize> = nearest.iter().zip(&fits).filter(|(_, f)| **f).map(|(n, _)| *n).collect();
    let dm = if probe.is_empty() {
        None
    } else {
        Some(density_map(u, 0.0, eps0, &[2.0 * h, 3.0 * h], Some(&probe))?)
    };
    let mut scored: Vec<(f64, usize)> = Vec::new();
    let mut k = 0;
    for (i, &cell) in cells.iter().enumerate() {
        let score = if fits[i] {
            let dm = dm.as_ref().unwrap();
            let r = dm.ratio(k, 0).min(dm.ratio(k, 1));
            k += 1;
            if r <= eps0 {
                continue;
            }
            r
        } else {
            f64::INFINITY
        };
        scored.push((score, cell));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut points: Vec<Defect> = Vec::new();
    let mut taken: Vec<[f64; 3]> = Vec::new();
    for (_, cell) in scored {
        let p = centre(cell);
        if taken.iter().any(|q| dist(q, &p) < 3.0 * h) {
            continue;
        }
        taken.push(p);
        let degree = if g.distance_to_boundary(p) > 3.0 * h {
            sphere_degree(u, p, 3.0 * h)?.round() as i64
        } else {
            fluxes.cell_degree(cell).round() as i64
        };
        if degree != 0 && g.distance_to_boundary(p) > 0.0 {
            points.push(Defect { position: p, degree });
        }
    }
    Ok(DefectSet { points })
}

/// One segment of a minimal connection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedSegment {
    pub from: [f64; 3],
    pub to: [f64; 3],
    pub length: f64,
    /// True when one end lies on the domain boundary.
    pub to_boundary: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionResult {
    pub value: f64,
    /// Cell-centred potential `ξ`, row-major over the `(n−1)³` cells.
    pub potential: Option<Vec<f64>>,
    /// Largest cell gradient `|∇ξ|` of the returned potential.
    pub max_gradient: f64,
    pub matching: Option<Vec<MatchedSegment>>,
    pub duality_gap: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Cell lattice `(n−1)³` of a node grid.
#[derive(Clone, Copy, Debug)]
struct Cells {
    dims: [usize; 3],
    h: f64,
}

impl Cells {
    fn of(g: &GridSpec) -> Self {
        let d = g.dims();
        Self { dims: [d[0] - 1, d[1] - 1, d[2] - 1], h: g.spacing() }
    }

    fn len(&self) -> usize {
        self.dims.iter().product()
    }

    fn coords(&self, c: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [c % nx, (c / nx) % ny, c / (nx * ny)]
    }

    fn stride(&self, a: usize) -> usize {
        match a {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    fn has_next(&self, c: usize, a: usize) -> bool {
        self.coords(c)[a] + 1 < self.dims[a]
    }

    fn has_prev(&self, c: usize, a: usize) -> bool {
        self.coords(c)[a] > 0
    }

    /// Forward differences `(ξ(c+e_a) − ξ(c))/h`, zero without a neighbour.
    fn grad(&self, xi: &[f64], c: usize) -> [f64; 3] {
        std::array::from_fn(|a| {
            if self.has_next(c, a) {
                (xi[c + self.stride(a)] - xi[c]) / self.h
            } else {
                0.0
            }
        })
    }

    fn grad_adjoint(&self, y: &[[f64; 3]], c: usize) -> f64 {
        let mut s = 0.0;
        for a in 0..3 {
            if self.has_prev(c, a) {
                s += y[c - self.stride(a)][a];
            }
            if self.has_next(c, a) {
                s -= y[c][a];
            }
        }
        s / self.h
    }

    fn max_grad(&self, xi: &[f64]) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|c| norm2(&self.grad(xi, c)).sqrt())
            .reduce(|| 0.0, f64::max)
    }
}

/// Interior face fluxes of `D(u) − D(u₀)` arranged per cell: component `a`
/// is the flux through the face shared with cell `c + e_a`, scaled by
/// `h/4π` so that the connection functional is `Σ_c w(c)·∇ξ(c)`.
fn connection_weights(u: &DirectionField, u0: &DirectionField) -> Result<(Cells, Vec<[f64; 3]>)> {
    if u.grid() != u0.grid() {
        return Err(Error::InvalidArgument("u and u0 live on different grids".into()));
    }
    u0.require_components(3)?;
    let g = *u.grid();
    let mut trace_gap: f64 = 0.0;
    for idx in 0..g.len() {
        if g.is_boundary_index(idx) {
            let (a, b) = (u.node3(idx), u0.node3(idx));
            trace_gap = trace_gap.max(dist(&a, &b));
        }
    }
    if trace_gap > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "u and u0 must share the boundary trace (max difference {trace_gap:e})"
        )));
    }
    let f = face_fluxes(u)?;
    let f0 = face_fluxes(u0)?;
    let cells = Cells::of(&g);
    let scale = cells.h / (4.0 * PI);
    let w = (0..cells.len())
        .into_par_iter()
        .map(|c| {
            let [i, j, k] = cells.coords(c);
            std::array::from_fn(|a| {
                if !cells.has_next(c, a) {
                    return 0.0;
                }
                let mut p = [i, j, k];
                p[a] += 1;
                let node = g.index(p[0], p[1], p[2]);
                scale * (f.values[a][node] - f0.values[a][node])
            })
        })
        .collect();
    Ok((cells, w))
}

fn pairing(cells: &Cells, w: &[[f64; 3]], xi: &[f64]) -> f64 {
    let parts: Vec<f64> = (0..cells.len())
        .into_par_iter()
        .map(|c| {
            let gr = cells.grad(xi, c);
            w[c][0] * gr[0] + w[c][1] * gr[1] + w[c][2] * gr[2]
        })
        .collect();
    crate::reduce::ordered_sum(parts)
}

/// `(4π)⁻¹ Σ (D(u) − D(u₀))·∇ξ h³` for a cell-centred potential.
pub fn connection_pairing(u: &DirectionField, u0: &DirectionField, potential: &[f64]) -> Result<f64> {
    let (cells, w) = connection_weights(u, u0)?;
    if potential.len() != cells.len() {
        return Err(Error::InvalidArgument(format!(
            "potential has {} values, expected {}",
            potential.len(),
            cells.len()
        )));
    }
    Ok(pairing(&cells, &w, potential))
}

const CHECK_EVERY: usize = 50;
const PLATEAU_CHECKS: usize = 10;
/// Primal over dual step size; potentials vary on the scale of the
/// defect separation while the dual variable is bounded by one.
const STEP_RATIO: f64 = 10.0;

/// Lower bound on `L(u, u₀)` by primal-dual ascent (Chambolle–Pock) on
/// `max ⟨w, ∇ξ⟩` subject to `|∇ξ| ≤ 1` per cell. Every `50` steps the
/// iterate is rescaled to feasibility and its value recorded; the best
/// feasible value is returned. `converged` is false when the best value was
/// still rising by more than `tol` (relative) over the last 500 steps.
pub fn minimal_connection_dual(
    u: &DirectionField,
    u0: &DirectionField,
    steps: usize,
    tol: f64,
) -> Result<ConnectionResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let (cells, w) = connection_weights(u, u0)?;
    let n = cells.len();
    let mut best = ConnectionResult {
        value: 0.0,
        potential: Some(vec![0.0; n]),
        max_gradient: 0.0,
        matching: None,
        duality_gap: None,
        converged: true,
        iterations: 0,
    };
    if w.iter().all(|x| x.iter().all(|&v| v == 0.0)) {
        return Ok(best);
    }
    let h = cells.h;
    let sigma = 0.99 * h / (12.0 * STEP_RATIO).sqrt();
    let tau = STEP_RATIO * sigma;
    let mut xi = vec![0.0; n];
    let mut xibar = xi.clone();
    let mut y = vec![[0.0; 3]; n];
    let mut history: Vec<f64> = Vec::new();
    let mut it = 0;
    best.converged = false;
    while it < steps {
        y.par_iter_mut().enumerate().for_each(|(c, yc)| {
            let gr = cells.grad(&xibar, c);
            let mut v = [0.0; 3];
            let mut p = [0.0; 3];
            for a in 0..3 {
                if cells.has_next(c, a) {
                    v[a] = yc[a] + sigma * gr[a];
                    p[a] = (v[a] + w[c][a]) / sigma;
                }
            }
            let m = norm2(&p).sqrt();
            let s = if m > 1.0 { 1.0 / m } else { 1.0 };
            for a in 0..3 {
                yc[a] = v[a] - sigma * s * p[a];
            }
        });
        xi.par_iter_mut().zip(xibar.par_iter_mut()).enumerate().for_each(|(c, (x, b))| {
            let next = *x - tau * cells.grad_adjoint(&y, c);
            *b = 2.0 * next - *x;
            *x = next;
        });
        it += 1;

        if it % CHECK_EVERY == 0 || it == steps {
            let g = cells.max_grad(&xi);
            let s = if g > 1.0 { 1.0 / g } else { 1.0 };
            let value = s * pairing(&cells, &w, &xi);
            if value > best.value {
                best.value = value;
                best.max_gradient = g * s;
                best.potential = Some(xi.iter().map(|x| x * s).collect());
            }
            best.iterations = it;
            history.push(best.value);
            if history.len() > PLATEAU_CHECKS {
                let old = history[history.len() - 1 - PLATEAU_CHECKS];
                if best.value - old <= tol * best.value.abs().max(1e-12) {
                    best.converged = true;
                    break;
                }
            }
        }
    }
    Ok(best)
}

/// Domain against which unit defects may be matched to the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Box(GridSpec),
    Ball { center: [f64; 3], radius: f64 },
}

impl Domain {
    /// Nearest boundary point and its distance.
    pub fn nearest_boundary(&self, p: [f64; 3]) -> ([f64; 3], f64) {
        match *self {
            Domain::Box(g) => {
                let lo = g.origin();
                let hi = g.upper();
                let mut best = (0, lo[0], f64::INFINITY);
                for a in 0..3 {
                    for wall in [lo[a], hi[a]] {
                        let d = (p[a] - wall).abs();
                        if d < best.2 {
                            best = (a, wall, d);
                        }
                    }
                }
                let mut q = p;
                q[best.0] = best.1;
                (q, best.2)
            }
            Domain::Ball { center, radius } => {
                let v = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let r = norm2(&v).sqrt();
                let dir = if r > 0.0 { v.map(|x| x / r) } else { [0.0, 0.0, 1.0] };
                let q = std::array::from_fn(|a| center[a] + radius * dir[a]);
                (q, radius - r)
            }
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Domain::Box(g) => g.contains(p) && g.distance_to_boundary(p) > 0.0,
            Domain::Ball { center, radius } => dist(&p, &center) < radius,
        }
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// algorithm with row and column potentials). Returns the column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Upper bound on `L(u)`: the cheapest pairing of positive with negative
/// unit defects, each defect alternatively connected to its nearest
/// boundary point.
pub fn minimal_connection_matching(defects: &DefectSet, domain: Domain) -> Result<ConnectionResult> {
    let (pos, neg) = defects.unit_charges();
    for p in pos.iter().chain(&neg) {
        if !domain.contains(*p) {
            return Err(Error::GeometryInvalid(format!("defect {p:?} lies outside the domain")));
        }
    }
    let (m, k) = (pos.len(), neg.len());
    let n = m + k;
    // Rows: positives, then one boundary slot per negative.
    // Columns: negatives, then one boundary slot per positive.
    let mut cost = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            cost[i][j] = match (i < m, j < k) {
                (true, true) => dist(&pos[i], &neg[j]),
                (true, false) => domain.nearest_boundary(pos[i]).1,
                (false, true) => domain.nearest_boundary(neg[j]).1,
                (false, false) => 0.0,
            };
        }
    }
    let assignment = hungarian(&cost);
    let mut segments = Vec::new();
    let mut total = 0.0;
    let mut used_neg = vec![false; k];
    for (i, &j) in assignment.iter().enumerate() {
        let seg = match (i < m, j < k) {
            (true, true) => {
                used_neg[j] = true;
                Some(MatchedSegment { from: pos[i], to: neg[j], length: cost[i][j], to_boundary: false })
            }
            (true, false) => {
                let (q, d) = domain.nearest_boundary(pos[i]);
                Some(MatchedSegment { from: pos[i], to: q, length: d, to_boundary: true })
            }
            (false, true) => {
                used_neg[j] = true;
                let (q, d) = domain.nearest_boundary(neg[j]);
                Some(MatchedSegment { from: q, to: neg[j], length: d, to_boundary: true })
            }
            (false, false) => None,
        };
        if let Some(s) = seg {
            total += s.length;
            segments.push(s);
        }
    }
    if used_neg.iter().any(|u| !u) {
        return Err(Error::UnbalancedAfterBoundary);
    }
    Ok(ConnectionResult {
        value: total,
        potential: None,
        max_gradient: 0.0,
        matching: Some(segments),
        duality_gap: None,
        converged: true,
        iterations: 0,
    })
}

/// Both connection estimates and the relaxed energy they certify.
#[derive(Clone, Debug)]
pub struct RelaxedEnergy {
    /// `total = dirichlet + 8π·L` with `L` the dual (lower) estimate.
    pub report: EnergyReport,
    pub dual: ConnectionResult,
    pub matching: ConnectionResult,
    pub defects: DefectSet,
}

/// `F(u) = ∫|∇u|² + 8πL(u, u₀)`, with the matching of the defects of `u`
/// in the box recorded alongside; `duality_gap = matching − dual`.
pub fn relaxed_energy(
    u: &DirectionField,
    u0: &DirectionField,
    eps0: f64,
    steps: usize,
    tol: f64,
) -> Result<RelaxedEnergy> {
    let mut dual = minimal_connection_dual(u, u0, steps, tol)?;
    let defects = detect_defects(u, eps0)?;
    let base = detect_defects(u0, eps0)?;
    let mut all = defects.clone();
    all.points.extend(base.points.iter().map(|d| Defect { position: d.position, degree: -d.degree }));
    let matching = minimal_connection_matching(&all, Domain::Box(*u.grid()))?;
    dual.duality_gap = Some(matching.value - dual.value);
    let mut report = perturbed_energy(u, 0.0, Mode::Harmonic)?;
    let relax = RELAXATION_WEIGHT * dual.value;
    report.relax_defect = Some(relax);
    report.total = report.dirichlet + relax;
    Ok(RelaxedEnergy { report, dual, matching, defects })
}
