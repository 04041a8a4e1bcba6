//! Operator-splitting (ADMM) solver for concave QPs.
//!
//! The program is rewritten as `minimize ½xᵀPx + qᵀx s.t. l <= Ax <= u` with
//! `P = −Q`, equality rows as `l = u`, and finite variable bounds as identity
//! rows. Each iteration solves one quasi-definite KKT system with a cached
//! sparse LDLᵀ factor, followed by a projection onto the box `[l, u]`.
//! Data is Ruiz-equilibrated; all reported residuals are in original units.
//! Once the iterates are accurate enough, an active-set polish solves the
//! reduced equality-constrained KKT system and is accepted only if it passes
//! the independent KKT check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::kkt::{check_kkt_with_duals, Duals, KktReport};
use crate::qp::ldl::LdlFactor;
use crate::qp::program::QuadraticProgram;
use crate::qp::sparse::{inf_norm, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Bound on normalized constraint violation for an optimal status.
    pub feas_tol: f64,
    /// Bound on stationarity and complementarity residuals for an optimal status.
    pub opt_tol: f64,
    pub max_iterations: usize,
    /// Ruiz equilibration of the problem data.
    pub scaling: bool,
    pub scaling_iterations: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub polish: bool,
    /// Iterations between residual evaluations.
    pub check_interval: usize,
    /// Keep the per-iteration fixed-point residual in [`QpSolution::trace`].
    pub record_trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            opt_tol: 1e-6,
            max_iterations: 200_000,
            scaling: true,
            scaling_iterations: 10,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            polish: true,
            check_interval: 25,
            record_trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.feas_tol > 0.0 && self.opt_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidArgument("alpha must lie in (0, 2)".into()));
        }
        if !(self.rho > 0.0 && self.sigma > 0.0) || self.check_interval == 0 {
            return Err(Error::InvalidArgument(
                "rho, sigma and check_interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One ADMM iteration's fixed-point residual `‖s⁺ − s‖` in the metric
/// `diag(σ, ρ)`, where `s = (x, z + y/ρ)` in scaled space. It is
/// nonincreasing while `ρ` is held fixed; `epoch` counts `ρ` updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub fixed_point_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub duals: Duals,
    pub objective: f64,
    pub primal_residual: f64,
    pub stationarity_residual: f64,
    pub complementarity_residual: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub polished: bool,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Equality(usize),
    Inequality(usize),
    Bound(usize),
}

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_STEP: f64 = 10.0;
const RHO_EQ_FACTOR: f64 = 1e3;
const INFEASIBILITY_TOL: f64 = 1e-5;
const POLISH_DELTA: f64 = 1e-7;
const POLISH_REFINE: usize = 8;

fn limit_scaling(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

/// Scaled data in OSQP form plus the cached KKT factor.
struct Workspace<'a> {
    program: &'a QuadraticProgram,
    n: usize,
    m: usize,
    p: CsrMatrix,
    q: Vec<f64>,
    a: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    origin: Vec<RowOrigin>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    rho: Vec<f64>,
    sigma: f64,
    kkt: Vec<(usize, usize, f64)>,
    rho_slots: Vec<usize>,
    factor: LdlFactor,
}

impl<'a> Workspace<'a> {
    fn new(program: &'a QuadraticProgram, settings: &SolverSettings) -> Result<Self> {
        let n = program.num_vars();
        let mut p = program.quadratic.clone();
        p.scale_values(-1.0);
        let mut q: Vec<f64> = program.linear.iter().map(|v| -v).collect();

        let mut origin = Vec::new();
        let mut l = Vec::new();
        let mut u = Vec::new();
        for (r, &b) in program.equalities.rhs.iter().enumerate() {
            origin.push(RowOrigin::Equality(r));
            l.push(b);
            u.push(b);
        }
        for (r, &b) in program.inequalities.rhs.iter().enumerate() {
            origin.push(RowOrigin::Inequality(r));
            l.push(f64::NEG_INFINITY);
            u.push(b);
        }
        let mut bound_rows = Vec::new();
        for i in 0..n {
            if program.lower[i].is_finite() || program.upper[i].is_finite() {
                bound_rows.push((bound_rows.len(), i, 1.0));
                origin.push(RowOrigin::Bound(i));
                l.push(program.lower[i]);
                u.push(program.upper[i]);
            }
        }
        let bounds = CsrMatrix::from_triplets(bound_rows.len(), n, &bound_rows);
        let mut a = program
            .equalities
            .matrix
            .vstack(&program.inequalities.matrix)
            .vstack(&bounds);
        let m = a.nrows();

        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut c = 1.0;
        if settings.scaling {
            for _ in 0..settings.scaling_iterations {
                let mut col = vec![0.0; n];
                p.fold_col_inf_norms(&mut col);
                a.fold_col_inf_norms(&mut col);
                let dd: Vec<f64> = col.iter().map(|&v| 1.0 / limit_scaling(v).sqrt()).collect();
                let de: Vec<f64> = (0..m).map(|r| 1.0 / limit_scaling(a.row_inf_norm(r)).sqrt()).collect();
                p.scale(&dd, &dd);
                a.scale(&de, &dd);
                q.iter_mut().zip(&dd).for_each(|(v, s)| *v *= s);
                d.iter_mut().zip(&dd).for_each(|(v, s)| *v *= s);
                e.iter_mut().zip(&de).for_each(|(v, s)| *v *= s);

                let mut pcol = vec![0.0; n];
                p.fold_col_inf_norms(&mut pcol);
                let mean = if n > 0 {
                    pcol.iter().sum::<f64>() / n as f64
                } else {
                    0.0
                };
                let cost = 1.0 / limit_scaling(mean.max(inf_norm(&q)));
                p.scale_values(cost);
                q.iter_mut().for_each(|v| *v *= cost);
                c *= cost;
            }
            for r in 0..m {
                l[r] *= e[r];
                u[r] *= e[r];
            }
        }

        let rho: Vec<f64> = (0..m).map(|r| row_rho(settings.rho, l[r], u[r])).collect();
        let sigma = settings.sigma;
        let mut kkt: Vec<(usize, usize, f64)> = p.triplets().filter(|&(r, c, _)| r <= c).collect();
        kkt.extend((0..n).map(|j| (j, j, sigma)));
        kkt.extend(a.triplets().map(|(r, c, v)| (c, n + r, v)));
        let base = kkt.len();
        kkt.extend((0..m).map(|r| (n + r, n + r, -1.0 / rho[r])));
        let rho_slots = (base..base + m).collect();
        let factor = LdlFactor::new(n + m, &kkt)?;
        Ok(Self {
            program,
            n,
            m,
            p,
            q,
            a,
            l,
            u,
            origin,
            d,
            e,
            c,
            rho,
            sigma,
            kkt,
            rho_slots,
            factor,
        })
    }

    fn set_rho(&mut self, base: f64) -> Result<()> {
        for r in 0..self.m {
            self.rho[r] = row_rho(base, self.l[r], self.u[r]);
            self.kkt[self.rho_slots[r]].2 = -1.0 / self.rho[r];
        }
        self.factor.refactor(&self.kkt)
    }

    fn unscale_x(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().zip(&self.d).map(|(x, d)| x * d).collect()
    }

    fn unscale_duals(&self, ys: &[f64]) -> Duals {
        let mut duals = Duals::zeros(self.program);
        for (r, origin) in self.origin.iter().enumerate() {
            let y = ys[r] * self.e[r] / self.c;
            match *origin {
                RowOrigin::Equality(i) => duals.equalities[i] = y,
                RowOrigin::Inequality(i) => duals.inequalities[i] = y,
                RowOrigin::Bound(i) => duals.bounds[i] = y,
            }
        }
        duals
    }

    /// Unscaled primal and dual residuals with the norms used for relative tests.
    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        let mut ax = vec![0.0; self.m];
        self.a.mul_vec(x, &mut ax);
        let mut prim = 0.0f64;
        let mut ax_norm = 0.0f64;
        let mut z_norm = 0.0f64;
        for r in 0..self.m {
            let inv = 1.0 / self.e[r];
            prim = prim.max(((ax[r] - z[r]) * inv).abs());
            ax_norm = ax_norm.max((ax[r] * inv).abs());
            z_norm = z_norm.max((z[r] * inv).abs());
        }
        let mut px = vec![0.0; self.n];
        self.p.mul_vec(x, &mut px);
        let mut aty = vec![0.0; self.n];
        self.a.mul_t_vec_add(y, &mut aty);
        let mut dual = 0.0f64;
        let mut px_norm = 0.0f64;
        let mut aty_norm = 0.0f64;
        let mut q_norm = 0.0f64;
        for j in 0..self.n {
            let inv = 1.0 / (self.d[j] * self.c);
            dual = dual.max(((px[j] + self.q[j] + aty[j]) * inv).abs());
            px_norm = px_norm.max((px[j] * inv).abs());
            aty_norm = aty_norm.max((aty[j] * inv).abs());
            q_norm = q_norm.max((self.q[j] * inv).abs());
        }
        Residuals {
            prim,
            dual,
            prim_scale: ax_norm.max(z_norm),
            dual_scale: px_norm.max(aty_norm).max(q_norm),
        }
    }

    /// Scaled-space residual ratio driving the penalty update.
    fn rho_estimate(&self, x: &[f64], z: &[f64], y: &[f64], current: f64) -> f64 {
        let mut ax = vec![0.0; self.m];
        self.a.mul_vec(x, &mut ax);
        let prim = ax.iter().zip(z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let prim_scale = inf_norm(&ax).max(inf_norm(z)).max(1e-30);
        let mut px = vec![0.0; self.n];
        self.p.mul_vec(x, &mut px);
        let mut aty = vec![0.0; self.n];
        self.a.mul_t_vec_add(y, &mut aty);
        let dual = (0..self.n).fold(0.0f64, |m, j| m.max((px[j] + self.q[j] + aty[j]).abs()));
        let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&self.q)).max(1e-30);
        let ratio = (prim / prim_scale).max(1e-14) / (dual / dual_scale).max(1e-14);
        // A single step may move the penalty by at most RHO_STEP either way;
        // unbounded jumps make the iteration oscillate between extremes.
        (current * ratio.sqrt().clamp(1.0 / RHO_STEP, RHO_STEP)).clamp(RHO_MIN, RHO_MAX)
    }

    /// Infeasibility certificate test on the dual increment.
    fn certifies_infeasibility(&self, dy: &[f64]) -> bool {
        let norm = dy.iter().zip(&self.e).fold(0.0f64, |m, (v, e)| m.max((v * e).abs()));
        if norm <= 1e-30 {
            return false;
        }
        let mut aty = vec![0.0; self.n];
        self.a.mul_t_vec_add(dy, &mut aty);
        let at_norm = aty.iter().zip(&self.d).fold(0.0f64, |m, (v, d)| m.max((v / d).abs()));
        if at_norm > INFEASIBILITY_TOL * norm {
            return false;
        }
        let mut support = 0.0;
        for r in 0..self.m {
            let v = dy[r];
            if v > 0.0 {
                if !self.u[r].is_finite() {
                    return false;
                }
                support += self.u[r] * v;
            } else if v < 0.0 {
                if !self.l[r].is_finite() {
                    return false;
                }
                support += self.l[r] * v;
            }
        }
        support < -INFEASIBILITY_TOL * norm
    }

    /// Solves the equality-constrained QP on the guessed active set.
    fn polish(&self, z: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let mut active = Vec::new();
        let mut targets = Vec::new();
        for r in 0..self.m {
            if self.l[r] == self.u[r] || z[r] - self.l[r] < -y[r] {
                active.push(r);
                targets.push(self.l[r]);
            } else if self.u[r] - z[r] < y[r] {
                active.push(r);
                targets.push(self.u[r]);
            }
        }
        let k = active.len();
        let reduced = self.a.select_rows(&active);
        let upper_p: Vec<(usize, usize, f64)> = self.p.triplets().filter(|&(r, c, _)| r <= c).collect();
        let mut exact = upper_p.clone();
        exact.extend(reduced.triplets().map(|(r, c, v)| (c, n + r, v)));
        let mut regularized = exact.clone();
        regularized.extend((0..n).map(|j| (j, j, POLISH_DELTA)));
        regularized.extend((0..k).map(|r| (n + r, n + r, -POLISH_DELTA)));
        let factor = LdlFactor::new(n + k, &regularized)?;

        let mut rhs: Vec<f64> = self.q.iter().map(|v| -v).collect();
        rhs.extend_from_slice(&targets);
        let mut sol = rhs.clone();
        factor.solve(&mut sol);
        for _ in 0..POLISH_REFINE {
            let mut resid = rhs.clone();
            for &(r, c, v) in &exact {
                resid[r] -= v * sol[c];
                if r != c {
                    resid[c] -= v * sol[r];
                }
            }
            factor.solve(&mut resid);
            sol.iter_mut().zip(&resid).for_each(|(s, d)| *s += d);
        }
        let x = sol[..n].to_vec();
        let mut yfull = vec![0.0; self.m];
        for (slot, &r) in active.iter().enumerate() {
            yfull[r] = sol[n + slot];
        }
        Ok((x, yfull))
    }
}

fn row_rho(base: f64, l: f64, u: f64) -> f64 {
    if !l.is_finite() && !u.is_finite() {
        RHO_MIN
    } else if (u - l).abs() < 1e-4 * u.abs().max(l.abs()).max(1.0) {
        (base * RHO_EQ_FACTOR).min(RHO_MAX)
    } else {
        base
    }
}

struct Residuals {
    prim: f64,
    dual: f64,
    prim_scale: f64,
    dual_scale: f64,
}

/// Solves the program from a cold start.
pub fn solve_qp(program: &QuadraticProgram, settings: &SolverSettings) -> Result<QpSolution> {
    solve_qp_from(program, settings, None)
}

/// Solves the program, optionally warm-starting the primal iterate at `start`.
pub fn solve_qp_from(
    program: &QuadraticProgram,
    settings: &SolverSettings,
    start: Option<&[f64]>,
) -> Result<QpSolution> {
    program.validate()?;
    settings.validate()?;
    let n = program.num_vars();
    if let Some(s) = start {
        if s.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "start has {} entries, expected {n}",
                s.len()
            )));
        }
    }
    if (0..n).any(|i| program.lower[i] > program.upper[i]) {
        return Ok(infeasible(program, vec![0.0; n], 0));
    }

    let mut ws = Workspace::new(program, settings)?;
    let m = ws.m;
    let mut x: Vec<f64> = match start {
        Some(s) => s.iter().zip(&ws.d).map(|(v, d)| v / d).collect(),
        None => vec![0.0; n],
    };
    let mut z = vec![0.0; m];
    if start.is_some() {
        ws.a.mul_vec(&x, &mut z);
        for r in 0..m {
            z[r] = z[r].clamp(ws.l[r], ws.u[r]);
        }
    }
    let mut y = vec![0.0; m];
    let mut y_prev = vec![0.0; m];
    let mut rhs = vec![0.0; n + m];
    let mut trace = Vec::new();
    let mut epoch = 0;
    let mut base_rho = settings.rho;
    let mut polish_gate = 1e-3;
    let alpha = settings.alpha;
    let mut best: Option<(Vec<f64>, Duals, KktReport)> = None;
    let mut last_polish_failed_at = 0usize;

    for k in 1..=settings.max_iterations {
        y_prev.copy_from_slice(&y);
        let x_prev = if settings.record_trace { Some(x.clone()) } else { None };
        let v_prev: Option<Vec<f64>> = settings
            .record_trace
            .then(|| (0..m).map(|r| z[r] + y[r] / ws.rho[r]).collect());

        for j in 0..n {
            rhs[j] = ws.sigma * x[j] - ws.q[j];
        }
        for r in 0..m {
            rhs[n + r] = z[r] - y[r] / ws.rho[r];
        }
        ws.factor.solve(&mut rhs);
        for j in 0..n {
            x[j] = alpha * rhs[j] + (1.0 - alpha) * x[j];
        }
        for r in 0..m {
            let z_tilde = z[r] + (rhs[n + r] - y[r]) / ws.rho[r];
            let relaxed = alpha * z_tilde + (1.0 - alpha) * z[r];
            let v = relaxed + y[r] / ws.rho[r];
            let projected = v.clamp(ws.l[r], ws.u[r]);
            y[r] = ws.rho[r] * (v - projected);
            z[r] = projected;
        }

        if let (Some(xp), Some(vp)) = (x_prev, v_prev) {
            let mut acc = 0.0;
            for j in 0..n {
                acc += ws.sigma * (x[j] - xp[j]).powi(2);
            }
            for r in 0..m {
                let v = z[r] + y[r] / ws.rho[r];
                acc += ws.rho[r] * (v - vp[r]).powi(2);
            }
            trace.push(TraceRecord {
                iteration: k,
                epoch,
                fixed_point_residual: acc.sqrt(),
            });
        }

        if k % settings.check_interval != 0 && k != settings.max_iterations {
            continue;
        }

        let res = ws.residuals(&x, &z, &y);
        let admm_close = res.prim <= settings.feas_tol && res.dual <= settings.opt_tol;
        if admm_close {
            let xu = ws.unscale_x(&x);
            let duals = ws.unscale_duals(&y);
            let report = check_kkt_with_duals(program, &xu, &duals, 0.0)?;
            if meets(&report, settings) {
                return Ok(finish(
                    program,
                    xu,
                    duals,
                    report,
                    SolveStatus::Optimal,
                    k,
                    false,
                    trace,
                ));
            }
        }

        let gate = |r: &Residuals| {
            r.prim <= polish_gate * (1.0 + r.prim_scale) && r.dual <= polish_gate * (1.0 + r.dual_scale)
        };
        if settings.polish && gate(&res) && k >= last_polish_failed_at + settings.check_interval {
            if let Ok((xp, yp)) = ws.polish(&z, &y) {
                let xu = ws.unscale_x(&xp);
                let duals = ws.unscale_duals(&yp);
                let report = check_kkt_with_duals(program, &xu, &duals, 0.0)?;
                if meets(&report, settings) {
                    return Ok(finish(program, xu, duals, report, SolveStatus::Optimal, k, true, trace));
                }
                let better = best
                    .as_ref()
                    .is_none_or(|(_, _, b)| score(&report, settings) < score(b, settings));
                if better {
                    best = Some((xu, duals, report));
                }
            }
            last_polish_failed_at = k;
            polish_gate = (polish_gate * 0.1).max(1e-12);
        }

        if res.prim > settings.feas_tol {
            let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
            if ws.certifies_infeasibility(&dy) {
                return Ok(infeasible(program, ws.unscale_x(&x), k));
            }
        }

        if settings.adaptive_rho && k % (4 * settings.check_interval) == 0 {
            let proposal = ws.rho_estimate(&x, &z, &y, base_rho);
            if proposal > 5.0 * base_rho || proposal < 0.2 * base_rho {
                base_rho = proposal;
                ws.set_rho(base_rho)?;
                epoch += 1;
            }
        }
    }

    let xu = ws.unscale_x(&x);
    let duals = ws.unscale_duals(&y);
    let report = check_kkt_with_duals(program, &xu, &duals, 0.0)?;
    let (x, duals, report) = match best {
        Some(b) if score(&b.2, settings) < score(&report, settings) => b,
        _ => (xu, duals, report),
    };
    Ok(finish(
        program,
        x,
        duals,
        report,
        SolveStatus::MaxIterations,
        settings.max_iterations,
        false,
        trace,
    ))
}

fn meets(report: &KktReport, settings: &SolverSettings) -> bool {
    report.primal_residual <= settings.feas_tol
        && report.stationarity_residual <= settings.opt_tol
        && report.complementarity_residual <= settings.opt_tol
}

fn score(report: &KktReport, settings: &SolverSettings) -> f64 {
    (report.primal_residual / settings.feas_tol)
        .max(report.stationarity_residual / settings.opt_tol)
        .max(report.complementarity_residual / settings.opt_tol)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    program: &QuadraticProgram,
    x: Vec<f64>,
    duals: Duals,
    report: KktReport,
    status: SolveStatus,
    iterations: usize,
    polished: bool,
    trace: Vec<TraceRecord>,
) -> QpSolution {
    QpSolution {
        objective: program.objective(&x),
        x,
        duals,
        primal_residual: report.primal_residual,
        stationarity_residual: report.stationarity_residual,
        complementarity_residual: report.complementarity_residual,
        status,
        iterations,
        polished,
        trace,
    }
}

fn infeasible(program: &QuadraticProgram, x: Vec<f64>, iterations: usize) -> QpSolution {
    let (primal, _) = crate::qp::kkt::primal_residual(program, &x).unwrap_or((f64::INFINITY, None));
    QpSolution {
        objective: program.objective(&x),
        duals: Duals::zeros(program),
        x,
        primal_residual: primal,
        stationarity_residual: f64::NAN,
        complementarity_residual: f64::NAN,
        status: SolveStatus::Infeasible,
        iterations,
        polished: false,
        trace: Vec::new(),
    }
}
