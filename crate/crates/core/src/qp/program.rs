use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::qp::ldl::LdlFactor;
use crate::qp::sparse::CsrMatrix;

/// Label attached to every constraint row and variable bound.
pub type RowTag = &'static str;

/// Linear rows `A x (=|<=) b`, each with a tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub tags: Vec<RowTag>,
}

impl ConstraintBlock {
    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }
}

/// Concave quadratic program
///
/// ```text
/// maximize   ½ xᵀQx + cᵀx + c₀
/// subject to A_eq x = b_eq,  A_in x <= b_in,  lower <= x <= upper
/// ```
///
/// with `Q` symmetric negative semidefinite. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub names: Vec<String>,
    pub quadratic: CsrMatrix,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub equalities: ConstraintBlock,
    pub inequalities: ConstraintBlock,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bound_tags: Vec<RowTag>,
}

impl QuadraticProgram {
    pub fn builder() -> QpBuilder {
        QpBuilder::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut qx = vec![0.0; x.len()];
        self.quadratic.mul_vec(x, &mut qx);
        let quad: f64 = qx.iter().zip(x).map(|(a, b)| a * b).sum();
        let lin: f64 = self.linear.iter().zip(x).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.constant
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.quadratic.mul_vec(x, &mut g);
        g.iter_mut().zip(&self.linear).for_each(|(g, c)| *g += c);
        g
    }

    /// Checks dimensions, symmetry, and negative semidefiniteness of `Q`.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let dims = [
            ("linear", self.linear.len()),
            ("lower", self.lower.len()),
            ("upper", self.upper.len()),
            ("bound_tags", self.bound_tags.len()),
            ("quadratic rows", self.quadratic.nrows()),
            ("quadratic cols", self.quadratic.ncols()),
            ("equality cols", self.equalities.matrix.ncols()),
            ("inequality cols", self.inequalities.matrix.ncols()),
        ];
        for (what, len) in dims {
            if len != n {
                return Err(Error::DimensionMismatch(format!("{what} has {len}, expected {n}")));
            }
        }
        for block in [&self.equalities, &self.inequalities] {
            if block.matrix.nrows() != block.rhs.len() || block.tags.len() != block.rhs.len() {
                return Err(Error::DimensionMismatch("constraint rows, rhs and tags differ".into()));
            }
        }
        if !self.quadratic.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("quadratic term is not symmetric".into()));
        }
        if !self.is_negative_semidefinite() {
            return Err(Error::InvalidArgument("objective is not concave".into()));
        }
        Ok(())
    }

    /// Factorizes `-Q + εI`; a negative pivot means `Q` has a positive eigenvalue
    /// larger than `ε`.
    pub fn is_negative_semidefinite(&self) -> bool {
        let n = self.num_vars();
        let scale = self.quadratic.triplets().fold(0.0f64, |m, (_, _, v)| m.max(v.abs()));
        if scale == 0.0 {
            return true;
        }
        let eps = 1e-9 * scale;
        let mut trip: Vec<(usize, usize, f64)> = self
            .quadratic
            .triplets()
            .filter(|&(r, c, _)| r <= c)
            .map(|(r, c, v)| (r, c, -v))
            .collect();
        trip.extend((0..n).map(|i| (i, i, eps)));
        match LdlFactor::new(n, &trip) {
            Ok(f) => f.pivots().iter().all(|&d| d > 0.0),
            Err(_) => false,
        }
    }

    /// Plain-text dump: variables, objective and constraint matrices as COO
    /// triplets, with row tags.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# concave qp: maximize 1/2 x'Qx + c'x + c0\nvars {} eq {} ineq {}",
            self.num_vars(),
            self.equalities.len(),
            self.inequalities.len()
        );
        let _ = writeln!(s, "constant {:e}", self.constant);
        let _ = writeln!(s, "[variables] index name lower upper tag");
        for i in 0..self.num_vars() {
            let _ = writeln!(
                s,
                "{i} {} {:e} {:e} {}",
                self.names[i], self.lower[i], self.upper[i], self.bound_tags[i]
            );
        }
        let _ = writeln!(s, "[linear] index value");
        for (i, &c) in self.linear.iter().enumerate() {
            if c != 0.0 {
                let _ = writeln!(s, "{i} {c:e}");
            }
        }
        let _ = writeln!(s, "[quadratic] row col value");
        for (r, c, v) in self.quadratic.triplets() {
            let _ = writeln!(s, "{r} {c} {v:e}");
        }
        for (title, block) in [("equalities", &self.equalities), ("inequalities", &self.inequalities)] {
            let _ = writeln!(s, "[{title}] row col value");
            for (r, c, v) in block.matrix.triplets() {
                let _ = writeln!(s, "{r} {c} {v:e}");
            }
            let _ = writeln!(s, "[{title}-rhs] row rhs tag");
            for (r, (&b, tag)) in block.rhs.iter().zip(&block.tags).enumerate() {
                let _ = writeln!(s, "{r} {b:e} {tag}");
            }
        }
        s
    }
}

/// Sparse linear expression `Σ coef·x + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(index: usize, coef: f64) -> Self {
        Self {
            terms: vec![(index, coef)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, index: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
        self
    }

    /// `self += factor · other`
    pub fn add_scaled(&mut self, other: &LinearExpr, factor: f64) -> &mut Self {
        for &(i, c) in &other.terms {
            self.add_term(i, c * factor);
        }
        self.constant += other.constant * factor;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Default)]
pub struct QpBuilder {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    bound_tags: Vec<RowTag>,
    quad: Vec<(usize, usize, f64)>,
    linear: Vec<f64>,
    constant: f64,
    eq: Vec<(usize, usize, f64)>,
    eq_rhs: Vec<f64>,
    eq_tags: Vec<RowTag>,
    ineq: Vec<(usize, usize, f64)>,
    ineq_rhs: Vec<f64>,
    ineq_tags: Vec<RowTag>,
}

impl QpBuilder {
    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64, tag: RowTag) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.bound_tags.push(tag);
        self.linear.push(0.0);
        self.names.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add_linear(&mut self, i: usize, coef: f64) {
        self.linear[i] += coef;
    }

    /// Adds `coef · x_i · x_j` to the objective.
    pub fn add_product(&mut self, i: usize, j: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        if i == j {
            self.quad.push((i, i, 2.0 * coef));
        } else {
            self.quad.push((i, j, coef));
            self.quad.push((j, i, coef));
        }
    }

    pub fn add_constant(&mut self, value: f64) {
        self.constant += value;
    }

    /// Adds the affine expression to the objective.
    pub fn add_objective_expr(&mut self, expr: &LinearExpr) {
        for &(i, c) in &expr.terms {
            self.add_linear(i, c);
        }
        self.add_constant(expr.constant);
    }

    /// `expr == 0`
    pub fn add_equality(&mut self, expr: &LinearExpr, tag: RowTag) -> usize {
        let r = self.eq_rhs.len();
        self.eq.extend(expr.terms.iter().map(|&(c, v)| (r, c, v)));
        self.eq_rhs.push(0.0 - expr.constant);
        self.eq_tags.push(tag);
        r
    }

    /// `expr <= 0`
    pub fn add_inequality(&mut self, expr: &LinearExpr, tag: RowTag) -> usize {
        let r = self.ineq_rhs.len();
        self.ineq.extend(expr.terms.iter().map(|&(c, v)| (r, c, v)));
        self.ineq_rhs.push(0.0 - expr.constant);
        self.ineq_tags.push(tag);
        r
    }

    pub fn build(self) -> Result<QuadraticProgram> {
        let n = self.names.len();
        let program = QuadraticProgram {
            quadratic: CsrMatrix::from_triplets(n, n, &self.quad),
            linear: self.linear,
            constant: self.constant,
            equalities: ConstraintBlock {
                matrix: CsrMatrix::from_triplets(self.eq_rhs.len(), n, &self.eq),
                rhs: self.eq_rhs,
                tags: self.eq_tags,
            },
            inequalities: ConstraintBlock {
                matrix: CsrMatrix::from_triplets(self.ineq_rhs.len(), n, &self.ineq),
                rhs: self.ineq_rhs,
                tags: self.ineq_tags,
            },
            lower: self.lower,
            upper: self.upper,
            bound_tags: self.bound_tags,
            names: self.names,
        };
        program.validate()?;
        Ok(program)
    }
}
