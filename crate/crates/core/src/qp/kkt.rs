//! First-order optimality checks computed directly from a [`QuadraticProgram`].
//!
//! Nothing here depends on how a point was produced; residuals are rebuilt
//! from the program data, so these checks can audit the solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::program::QuadraticProgram;
use crate::qp::sparse::inf_norm;

/// Lagrange multipliers, signed so that at a maximizer
/// `∇f(x) = A_eqᵀ y_eq + A_inᵀ y_in + y_bounds` with `y_in >= 0`,
/// `y_bounds > 0` on active upper bounds and `< 0` on active lower bounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Duals {
    pub equalities: Vec<f64>,
    pub inequalities: Vec<f64>,
    pub bounds: Vec<f64>,
}

impl Duals {
    pub fn zeros(program: &QuadraticProgram) -> Self {
        Self {
            equalities: vec![0.0; program.equalities.len()],
            inequalities: vec![0.0; program.inequalities.len()],
            bounds: vec![0.0; program.num_vars()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Largest constraint violation; rows are divided by `max(1, ‖row‖∞)`.
    pub primal_residual: f64,
    /// `‖∇f − Aᵀy‖∞`, or the largest multiplier sign violation if larger.
    pub stationarity_residual: f64,
    /// Largest `|multiplier| · slack` over inequalities and bounds.
    pub complementarity_residual: f64,
    /// Tag of the most violated constraint, when any is violated beyond `tol`.
    pub worst_constraint: Option<String>,
    pub passed: bool,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} has length {got}, expected {want}"
        )))
    }
}

/// Constraint violation only.
pub fn primal_residual(program: &QuadraticProgram, x: &[f64]) -> Result<(f64, Option<(f64, String)>)> {
    check_len("x", x.len(), program.num_vars())?;
    let mut worst = 0.0f64;
    let mut worst_tag: Option<(f64, String)> = None;
    let mut note = |v: f64, tag: &str| {
        if v > worst {
            worst = v;
            worst_tag = Some((v, tag.to_string()));
        }
    };
    let eq = &program.equalities;
    for r in 0..eq.len() {
        let scale = eq.matrix.row_inf_norm(r).max(1.0);
        note((eq.matrix.row_dot(r, x) - eq.rhs[r]).abs() / scale, eq.tags[r]);
    }
    let ineq = &program.inequalities;
    for r in 0..ineq.len() {
        let scale = ineq.matrix.row_inf_norm(r).max(1.0);
        note((ineq.matrix.row_dot(r, x) - ineq.rhs[r]).max(0.0) / scale, ineq.tags[r]);
    }
    for (i, &xi) in x.iter().enumerate() {
        note(
            (program.lower[i] - xi).max(xi - program.upper[i]).max(0.0),
            program.bound_tags[i],
        );
    }
    Ok((worst, worst_tag))
}

/// Verifies a primal-dual pair.
pub fn check_kkt_with_duals(program: &QuadraticProgram, x: &[f64], duals: &Duals, tol: f64) -> Result<KktReport> {
    let n = program.num_vars();
    check_len("x", x.len(), n)?;
    check_len("equality duals", duals.equalities.len(), program.equalities.len())?;
    check_len("inequality duals", duals.inequalities.len(), program.inequalities.len())?;
    check_len("bound duals", duals.bounds.len(), n)?;

    let (primal, worst) = primal_residual(program, x)?;

    let mut residual = program.gradient(x);
    let mut aty = vec![0.0; n];
    program.equalities.matrix.mul_t_vec_add(&duals.equalities, &mut aty);
    program.inequalities.matrix.mul_t_vec_add(&duals.inequalities, &mut aty);
    for i in 0..n {
        residual[i] -= aty[i] + duals.bounds[i];
    }
    let mut stationarity = inf_norm(&residual);
    let mut complementarity = 0.0f64;

    let ineq = &program.inequalities;
    for r in 0..ineq.len() {
        let y = duals.inequalities[r];
        let norm = ineq.matrix.row_inf_norm(r);
        stationarity = stationarity.max((-y).max(0.0) * norm);
        let slack = (ineq.rhs[r] - ineq.matrix.row_dot(r, x)).max(0.0) / norm.max(1.0);
        complementarity = complementarity.max(y.abs() * slack);
    }
    for i in 0..n {
        let y = duals.bounds[i];
        if y > 0.0 {
            if program.upper[i].is_finite() {
                complementarity = complementarity.max(y * (program.upper[i] - x[i]).max(0.0));
            } else {
                stationarity = stationarity.max(y);
            }
        } else if y < 0.0 {
            if program.lower[i].is_finite() {
                complementarity = complementarity.max(-y * (x[i] - program.lower[i]).max(0.0));
            } else {
                stationarity = stationarity.max(-y);
            }
        }
    }
    let passed = primal <= tol && stationarity <= tol && complementarity <= tol;
    Ok(KktReport {
        primal_residual: primal,
        stationarity_residual: stationarity,
        complementarity_residual: complementarity,
        worst_constraint: worst.filter(|(v, _)| *v > tol).map(|(_, t)| t),
        passed,
    })
}

enum Generator {
    Equality(usize),
    Inequality(usize),
    Bound { var: usize, sign: BoundSign },
}

#[derive(Clone, Copy)]
enum BoundSign {
    Free,
    NonNegative,
    NonPositive,
}

/// Checks a primal point alone. Multipliers are estimated on the constraints
/// active within `tol` by sign-constrained least squares (cyclic coordinate
/// descent), then the pair is verified with [`check_kkt_with_duals`].
///
/// Intended for small and medium programs; the estimate converges linearly.
pub fn check_kkt(program: &QuadraticProgram, x: &[f64], tol: f64) -> Result<KktReport> {
    let n = program.num_vars();
    check_len("x", x.len(), n)?;
    let mut gens = Vec::new();
    gens.extend((0..program.equalities.len()).map(Generator::Equality));
    let ineq = &program.inequalities;
    for r in 0..ineq.len() {
        let slack = (ineq.rhs[r] - ineq.matrix.row_dot(r, x)) / ineq.matrix.row_inf_norm(r).max(1.0);
        if slack <= tol {
            gens.push(Generator::Inequality(r));
        }
    }
    for (i, &xi) in x.iter().enumerate() {
        let at_lower = xi - program.lower[i] <= tol;
        let at_upper = program.upper[i] - xi <= tol;
        let sign = match (at_lower, at_upper) {
            (true, true) => BoundSign::Free,
            (true, false) => BoundSign::NonPositive,
            (false, true) => BoundSign::NonNegative,
            (false, false) => continue,
        };
        gens.push(Generator::Bound { var: i, sign });
    }

    let mut residual = program.gradient(x);
    let mut lambda = vec![0.0; gens.len()];
    let norms: Vec<f64> = gens
        .iter()
        .map(|g| match *g {
            Generator::Equality(r) => program.equalities.matrix.row(r).1.iter().map(|v| v * v).sum(),
            Generator::Inequality(r) => ineq.matrix.row(r).1.iter().map(|v| v * v).sum(),
            Generator::Bound { .. } => 1.0,
        })
        .collect();
    for _sweep in 0..20_000 {
        let mut biggest = 0.0f64;
        for (k, g) in gens.iter().enumerate() {
            if norms[k] == 0.0 {
                continue;
            }
            let (cols, vals): (&[usize], &[f64]) = match *g {
                Generator::Equality(r) => program.equalities.matrix.row(r),
                Generator::Inequality(r) => ineq.matrix.row(r),
                Generator::Bound { ref var, .. } => (std::slice::from_ref(var), &[1.0]),
            };
            let dot: f64 = cols.iter().zip(vals).map(|(&c, &v)| v * residual[c]).sum();
            let mut next = lambda[k] + dot / norms[k];
            next = match *g {
                Generator::Equality(_) => next,
                Generator::Inequality(_) => next.max(0.0),
                Generator::Bound { sign, .. } => match sign {
                    BoundSign::Free => next,
                    BoundSign::NonNegative => next.max(0.0),
                    BoundSign::NonPositive => next.min(0.0),
                },
            };
            let delta = next - lambda[k];
            if delta != 0.0 {
                for (&c, &v) in cols.iter().zip(vals) {
                    residual[c] -= v * delta;
                }
                lambda[k] = next;
                biggest = biggest.max(delta.abs() * norms[k].sqrt());
            }
        }
        if biggest <= 1e-15 {
            break;
        }
    }

    let mut duals = Duals::zeros(program);
    for (k, g) in gens.iter().enumerate() {
        match *g {
            Generator::Equality(r) => duals.equalities[r] = lambda[k],
            Generator::Inequality(r) => duals.inequalities[r] = lambda[k],
            Generator::Bound { var, .. } => duals.bounds[var] = lambda[k],
        }
    }
    check_kkt_with_duals(program, x, &duals, tol)
}
