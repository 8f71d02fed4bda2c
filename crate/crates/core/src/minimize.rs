//! Projected gradient descent with ε-continuation.
//!
//! Each stage minimizes the perturbed energy at one ε by Armijo
//! backtracking along the tangent L² gradient, retracting onto the sphere
//! by nodewise normalization; the next stage starts from the previous
//! result.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::ansatz::faddeev_lower_bound;
use crate::connection::detect_defects;
use crate::energy::{perturbed_energy, EnergyReport, Mode, Stencil, DEFAULT_DENSITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::grid::{BoundaryTag, DirectionField, GridSpec};
use crate::topology::hopf_charge;

/// Smallest accepted line-search step.
pub const MIN_STEP: f64 = 1e-14;
/// Allowed drift of the Hopf charge from its initial value.
pub const CHARGE_DRIFT_LIMIT: f64 = 0.25;
/// Interval between finite-difference gradient checks in debug builds.
pub const GRADIENT_CHECK_EVERY: usize = 100;

const GAUGE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeConfig {
    pub mode: Mode,
    pub epsilon_schedule: Vec<f64>,
    pub max_iters: usize,
    pub step_init: f64,
    pub armijo_c: f64,
    /// Stopping tolerance relative to the gradient norm at the start of
    /// each stage.
    pub grad_tol: f64,
    pub record_every: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Faddeev,
            epsilon_schedule: vec![0.1, 0.03, 0.01, 0.003, 0.001],
            max_iters: 500,
            step_init: 1e-2,
            armijo_c: 1e-4,
            grad_tol: 1e-4,
            record_every: 10,
        }
    }
}

pub const CONFIG_KEYS: [&str; 7] =
    ["mode", "epsilon_schedule", "max_iters", "step_init", "armijo_c", "grad_tol", "record_every"];

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.epsilon_schedule.is_empty() {
            return bad("epsilon_schedule is empty");
        }
        if self.epsilon_schedule.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad("epsilon_schedule entries must be positive");
        }
        if self.epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilon_schedule must be strictly decreasing");
        }
        if !(self.step_init.is_finite() && self.step_init > 0.0) {
            return bad("step_init must be positive");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.grad_tol.is_finite() && self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {v:?} as a number")))
        };
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {v:?} as an integer")))
        };
        match key {
            "mode" => self.mode = value.parse()?,
            "epsilon_schedule" => {
                self.epsilon_schedule = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(num)
                    .collect::<Result<_>>()?
            }
            "max_iters" => self.max_iters = int(value)?,
            "step_init" => self.step_init = num(value)?,
            "armijo_c" => self.armijo_c = num(value)?,
            "grad_tol" => self.grad_tol = num(value)?,
            "record_every" => self.record_every = int(value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// `key = value` lines, one per field.
    pub fn to_lines(&self) -> Vec<String> {
        let schedule: Vec<String> = self.epsilon_schedule.iter().map(|e| e.to_string()).collect();
        vec![
            format!("mode = {}", self.mode),
            format!("epsilon_schedule = {}", schedule.join(",")),
            format!("max_iters = {}", self.max_iters),
            format!("step_init = {}", self.step_init),
            format!("armijo_c = {}", self.armijo_c),
            format!("grad_tol = {}", self.grad_tol),
            format!("record_every = {}", self.record_every),
        ]
    }
}

/// Parses `key = value` lines over the defaults; `#` starts a comment.
impl FromStr for MinimizeConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("line {}: expected `key = value`", n + 1))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for MinimizeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.to_lines() {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

/// A tangent vector field along a direction field, same layout as its values.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentField {
    pub grid: GridSpec,
    pub components: usize,
    pub values: Vec<f64>,
}

impl TangentField {
    /// `h³ Σ a·b`
    pub fn inner(&self, other: &Self) -> f64 {
        let h = self.grid.spacing();
        let s: f64 = self.values.par_chunks(4096).zip(other.values.par_chunks(4096))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        h * h * h * s
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn frozen(u: &DirectionField, idx: usize) -> bool {
    u.boundary() != BoundaryTag::Free && u.grid().is_boundary_index(idx)
}

/// Tangent L² gradient `P_u(∂E/∂u)/h³` of the perturbed energy. Boundary
/// nodes of fields with a prescribed trace get zero.
pub fn euler_lagrange_gradient(u: &DirectionField, epsilon: f64, mode: Mode) -> Result<TangentField> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let g = *u.grid();
    let c = u.components();
    let qw = mode.quartic_weight(epsilon);
    let cw = mode.cross_weight();
    let per_node: Vec<([[[f64; 4]; 2]; 3], [f64; 4])> = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = g.coords(idx);
            let w = g.weight(i, j, k);
            let (mut out, mut du) = Stencil::at(u, idx).density_gradient(cw, qw);
            out.iter_mut().flatten().flatten().for_each(|x| *x *= w);
            du.iter_mut().for_each(|x| *x *= w);
            (out, du)
        })
        .collect();
    let inv_h = 1.0 / g.spacing();
    let inv_vol = inv_h * inv_h * inv_h;
    let dims = g.dims();
    let mut values = vec![0.0; g.len() * c];
    values.par_chunks_mut(c).enumerate().for_each(|(m, out)| {
        if frozen(u, m) {
            return;
        }
        let coords = g.coords(m);
        let (gm, du) = &per_node[m];
        let mut acc = [0.0; 4];
        for i in 0..c {
            acc[i] = du[i];
        }
        for k in 0..3 {
            let s = g.stride(k);
            for i in 0..c {
                acc[i] += (gm[k][1][i] - gm[k][0][i]) * inv_h;
            }
            if coords[k] > 0 {
                let prev = &per_node[m - s].0;
                for i in 0..c {
                    acc[i] += prev[k][0][i] * inv_h;
                }
            }
            if coords[k] + 1 < dims[k] {
                let next = &per_node[m + s].0;
                for i in 0..c {
                    acc[i] -= next[k][1][i] * inv_h;
                }
            }
        }
        let v = u.node(m);
        let radial: f64 = (0..c).map(|i| acc[i] * v[i]).sum();
        for i in 0..c {
            out[i] = (acc[i] - radial * v[i]) * inv_vol;
        }
    });
    Ok(TangentField { grid: g, components: c, values })
}

/// `u − t·d` normalized at every free node; frozen nodes are copied.
fn retract(u: &DirectionField, d: &TangentField, t: f64) -> Result<DirectionField> {
    let c = u.components();
    let mut values = u.values().to_vec();
    let bad = values
        .par_chunks_mut(c)
        .enumerate()
        .filter_map(|(idx, v)| {
            if frozen(u, idx) {
                return None;
            }
            let dv = &d.values[idx * c..(idx + 1) * c];
            let mut n2 = 0.0;
            for i in 0..c {
                v[i] -= t * dv[i];
                n2 += v[i] * v[i];
            }
            let n = n2.sqrt();
            if n < crate::grid::DEGENERATE_NORM || !n.is_finite() {
                return Some((idx, n));
            }
            v.iter_mut().for_each(|x| *x /= n);
            None
        })
        .min_by_key(|(idx, _)| *idx);
    if let Some((node, norm)) = bad {
        return Err(Error::DegenerateNode { node, norm });
    }
    DirectionField::new(*u.grid(), c, values, u.boundary())
}

/// Central finite-difference check of the gradient along a fixed
/// pseudo-random tangent direction; returns the relative discrepancy.
pub fn gradient_check(u: &DirectionField, epsilon: f64, mode: Mode, h_fd: f64) -> Result<f64> {
    let grad = euler_lagrange_gradient(u, epsilon, mode)?;
    let c = u.components();
    let mut dir = vec![0.0; u.values().len()];
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    for (idx, d) in dir.chunks_mut(c).enumerate() {
        if frozen(u, idx) {
            continue;
        }
        for x in d.iter_mut() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *x = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        let v = u.node(idx);
        let r: f64 = d.iter().zip(v).map(|(a, b)| a * b).sum();
        d.iter_mut().zip(v).for_each(|(a, b)| *a -= r * b);
    }
    let dirf = TangentField { grid: *u.grid(), components: c, values: dir };
    let shifted = |t: f64| -> Result<f64> {
        let vals: Vec<f64> = u.values().iter().zip(&dirf.values).map(|(a, b)| a + t * b).collect();
        let f = DirectionField::new(*u.grid(), c, vals, u.boundary())?;
        Ok(perturbed_energy(&f, epsilon, mode)?.total)
    };
    let fd = (shifted(h_fd)? - shifted(-h_fd)?) / (2.0 * h_fd);
    let an = grad.inner(&dirf);
    let e = perturbed_energy(u, epsilon, mode)?.total;
    Ok((fd - an).abs() / an.abs().max(1e-9 * e.abs()).max(f64::MIN_POSITIVE))
}

/// One row of the descent log.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub epsilon: f64,
    pub iter: usize,
    pub energy_total: f64,
    pub energy_dirichlet: f64,
    pub energy_cross: f64,
    /// `ε²∫|∇u|⁴` or `ε∫|∇u|⁴`, depending on the mode.
    pub energy_quartic_term: f64,
    pub grad_norm: f64,
    /// Accepted step; zero on the row that opens a stage.
    pub step: f64,
    pub hopf_charge: Option<f64>,
}

impl TraceRow {
    pub fn csv_header() -> &'static str {
        "epsilon,iter,energy_total,energy_dirichlet,energy_cross,energy_quartic_term,grad_norm,step,hopf_charge"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epsilon,
            self.iter,
            self.energy_total,
            self.energy_dirichlet,
            self.energy_cross,
            self.energy_quartic_term,
            self.grad_norm,
            self.step,
            self.hopf_charge.map_or(String::new(), |q| q.to_string())
        )
    }
}

/// End-of-stage state.
#[derive(Clone, Debug, PartialEq)]
pub struct StageSummary {
    pub epsilon: f64,
    pub iterations: usize,
    /// Gradient norm fell below `grad_tol` times its value at stage start.
    pub converged: bool,
    pub grad_tol_abs: f64,
    pub report: EnergyReport,
    /// Faddeev mode only.
    pub hopf_charge: Option<f64>,
    /// Harmonic mode only: number of detected point defects.
    pub defects: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub stages: Vec<StageSummary>,
    pub initial_charge: Option<f64>,
    /// Some recorded charge left `initial ± 0.25`.
    pub charge_drift: bool,
    /// Some stage ended with `E_F < 0.95·bound·|Q|^{3/4}`.
    pub below_lower_bound: bool,
    /// `(iteration, relative discrepancy)` of the debug gradient checks.
    pub gradient_checks: Vec<(usize, f64)>,
}

impl RunTrace {
    pub fn csv(&self) -> String {
        let mut s = String::from(TraceRow::csv_header());
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

fn row(report: &EnergyReport, iter: usize, grad_norm: f64, step: f64, q: Option<f64>) -> TraceRow {
    TraceRow {
        epsilon: report.epsilon,
        iter,
        energy_total: report.total,
        energy_dirichlet: report.dirichlet,
        energy_cross: report.cross,
        energy_quartic_term: report.perturbation(),
        grad_norm,
        step,
        hopf_charge: q,
    }
}

/// Runs the whole schedule from `u_init`.
pub fn minimize(u_init: &DirectionField, cfg: &MinimizeConfig) -> Result<(DirectionField, RunTrace)> {
    cfg.validate()?;
    let faddeev = cfg.mode == Mode::Faddeev;
    if faddeev {
        u_init.require_components(3)?;
    }
    let mut u = u_init.clone();
    let mut trace = RunTrace::default();
    let charge = |f: &DirectionField| -> Result<Option<f64>> {
        if faddeev {
            Ok(Some(hopf_charge(f, GAUGE_TOL)?.value))
        } else {
            Ok(None)
        }
    };
    trace.initial_charge = charge(&u)?;
    let mut step = cfg.step_init;

    for &eps in &cfg.epsilon_schedule {
        let mut report = perturbed_energy(&u, eps, cfg.mode)?;
        let mut grad = euler_lagrange_gradient(&u, eps, cfg.mode)?;
        let mut gnorm = grad.l2_norm();
        let tol_abs = cfg.grad_tol * gnorm;
        trace.rows.push(row(&report, 0, gnorm, 0.0, charge(&u)?));
        let mut iter = 0;
        while iter < cfg.max_iters && gnorm > tol_abs && gnorm > 0.0 {
            let g2 = gnorm * gnorm;
            let (next, next_report) = loop {
                let trial = retract(&u, &grad, step)?;
                let r = perturbed_energy(&trial, eps, cfg.mode)?;
                if r.total <= report.total - cfg.armijo_c * step * g2 {
                    break (trial, r);
                }
                step *= 0.5;
                if step < MIN_STEP {
                    return Err(Error::LineSearchStalled { step, epsilon: eps, iter });
                }
            };
            iter += 1;
            let accepted = step;
            u = next;
            report = next_report;
            grad = euler_lagrange_gradient(&u, eps, cfg.mode)?;
            gnorm = grad.l2_norm();
            step *= 2.0;

            if cfg!(debug_assertions) && iter % GRADIENT_CHECK_EVERY == 0 {
                let rel = gradient_check(&u, eps, cfg.mode, 1e-5)?;
                trace.gradient_checks.push((iter, rel));
                debug_assert!(rel <= 1e-3, "gradient check failed at iteration {iter}: {rel:e}");
            }
            let q = if iter % cfg.record_every == 0 { charge(&u)? } else { None };
            trace.rows.push(row(&report, iter, gnorm, accepted, q));
        }
        let q = charge(&u)?;
        let defects = if faddeev {
            None
        } else {
            Some(detect_defects(&u, DEFAULT_DENSITY_THRESHOLD).map(|d| d.len()).unwrap_or(0))
        };
        if let Some(q) = q {
            let rounded = q.round().abs();
            if rounded >= 1.0 && report.faddeev() < 0.95 * faddeev_lower_bound() * rounded.powf(0.75) {
                trace.below_lower_bound = true;
            }
        }
        trace.stages.push(StageSummary {
            epsilon: eps,
            iterations: iter,
            converged: gnorm <= tol_abs,
            grad_tol_abs: tol_abs,
            report,
            hopf_charge: q,
            defects,
        });
    }
    if let Some(q0) = trace.initial_charge {
        trace.charge_drift = trace
            .rows
            .iter()
            .filter_map(|r| r.hopf_charge)
            .chain(trace.stages.iter().filter_map(|s| s.hopf_charge))
            .any(|q| (q - q0).abs() > CHARGE_DRIFT_LIMIT);
    }
    Ok((u, trace))
}

/// One ε-indexed line of the continuation summary.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuationRow {
    pub epsilon: f64,
    pub perturbation: f64,
    pub total: f64,
    pub dirichlet: f64,
    /// Unperturbed Faddeev energy `dirichlet + cross`.
    pub faddeev: f64,
    pub hopf_charge: Option<f64>,
    pub defects: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuationReport {
    pub rows: Vec<ContinuationRow>,
    /// `None` with fewer than two stages.
    pub perturbation_decreasing: Option<bool>,
    pub faddeev_non_increasing: Option<bool>,
    pub dirichlet_non_increasing: Option<bool>,
}

impl ContinuationReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("epsilon,perturbation,total,dirichlet,faddeev,hopf_charge,defects\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epsilon,
                r.perturbation,
                r.total,
                r.dirichlet,
                r.faddeev,
                r.hopf_charge.map_or(String::new(), |q| q.to_string()),
                r.defects.map_or(String::new(), |d| d.to_string())
            ));
        }
        s
    }
}

/// Per-stage series of the perturbation term and energies. Monotonicity is
/// judged with a relative slack of `1e-9` for the non-strict columns.
pub fn continuation_report(trace: &RunTrace) -> ContinuationReport {
    let rows: Vec<ContinuationRow> = trace
        .stages
        .iter()
        .map(|s| ContinuationRow {
            epsilon: s.epsilon,
            perturbation: s.report.perturbation(),
            total: s.report.total,
            dirichlet: s.report.dirichlet,
            faddeev: s.report.faddeev(),
            hopf_charge: s.hopf_charge,
            defects: s.defects,
        })
        .collect();
    let pairs = |f: &dyn Fn(&ContinuationRow, &ContinuationRow) -> bool| {
        (rows.len() >= 2).then(|| rows.windows(2).all(|w| f(&w[0], &w[1])))
    };
    let non_inc = |a: f64, b: f64| b <= a + 1e-9 * a.abs();
    ContinuationReport {
        perturbation_decreasing: pairs(&|a, b| b.perturbation < a.perturbation),
        faddeev_non_increasing: pairs(&|a, b| non_inc(a.faddeev, b.faddeev)),
        dirichlet_non_increasing: pairs(&|a, b| non_inc(a.dirichlet, b.dirichlet)),
        rows,
    }
}
