//! Small dense convex programs and a log-barrier interior-point solver.
//!
//! Programs have a linear objective, linear / convex-quadratic / second-order
//! cone inequalities, linear equalities and box bounds. Infeasibility is
//! decided by a phase-1 program that minimizes the largest (scaled) violation.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sparse coefficient list `(variable index, coefficient)`; repeated indices add up.
pub type Sparse = Vec<(usize, f64)>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexError {
    #[error("constraint `{label}` references variable {index} but the program has {n} variables")]
    IndexOutOfRange { label: String, index: usize, n: usize },
    #[error("dimension mismatch in `{label}`: {detail}")]
    DimensionMismatch { label: String, detail: String },
    #[error("quadratic constraint `{label}` is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { label: String, min_eig: f64 },
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
    #[error("bounds of variable {0} are empty or NaN")]
    BadBounds(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// `coeffs . x <= rhs`
    Linear { coeffs: Sparse, rhs: f64 },
    /// `x_S' Q x_S + coeffs . x <= rhs`, `Q` PSD over the support `S`.
    Quadratic {
        support: Vec<usize>,
        q: DMatrix<f64>,
        coeffs: Sparse,
        rhs: f64,
    },
    /// `|| (rows_i . x + c_i)_i ||_2 <= d . x + e`
    Soc { rows: Vec<(Sparse, f64)>, d: Sparse, e: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub label: String,
    pub coeffs: Sparse,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    n: usize,
    objective: Vec<f64>,
    objective_constant: f64,
    constraints: Vec<Constraint>,
    equalities: Vec<Equality>,
    bounds: Vec<(f64, f64)>,
}

fn dot(coeffs: &Sparse, x: &[f64]) -> f64 {
    coeffs.iter().map(|&(i, a)| a * x[i]).sum()
}

impl ConvexProgram {
    /// Program over `n` free variables with a zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            objective: vec![0.0; n],
            objective_constant: 0.0,
            constraints: Vec::new(),
            equalities: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        }
    }

    pub fn variable_count(&self) -> usize {
        self.n
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn equalities(&self) -> &[Equality] {
        &self.equalities
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn objective(&self) -> (&[f64], f64) {
        (&self.objective, self.objective_constant)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_constant
    }

    pub fn minimize(&mut self, objective: Vec<f64>, constant: f64) -> Result<&mut Self, ConvexError> {
        if objective.len() != self.n {
            return Err(ConvexError::DimensionMismatch {
                label: "objective".into(),
                detail: format!("{} coefficients for {} variables", objective.len(), self.n),
            });
        }
        if !objective.iter().all(|c| c.is_finite()) || !constant.is_finite() {
            return Err(ConvexError::NonFinite("objective".into()));
        }
        self.objective = objective;
        self.objective_constant = constant;
        Ok(self)
    }

    pub fn set_bounds(&mut self, index: usize, lower: f64, upper: f64) -> Result<&mut Self, ConvexError> {
        if index >= self.n {
            return Err(ConvexError::IndexOutOfRange { label: "bounds".into(), index, n: self.n });
        }
        if !(lower <= upper) {
            return Err(ConvexError::BadBounds(index));
        }
        self.bounds[index] = (lower, upper);
        Ok(self)
    }

    fn check_sparse(&self, label: &str, coeffs: &Sparse) -> Result<(), ConvexError> {
        for &(i, a) in coeffs {
            if i >= self.n {
                return Err(ConvexError::IndexOutOfRange { label: label.into(), index: i, n: self.n });
            }
            if !a.is_finite() {
                return Err(ConvexError::NonFinite(label.into()));
            }
        }
        Ok(())
    }

    pub fn add_equality(&mut self, label: impl Into<String>, coeffs: Sparse, rhs: f64) -> Result<&mut Self, ConvexError> {
        let label = label.into();
        self.check_sparse(&label, &coeffs)?;
        if !rhs.is_finite() {
            return Err(ConvexError::NonFinite(label));
        }
        self.equalities.push(Equality { label, coeffs, rhs });
        Ok(self)
    }

    pub fn add_linear(&mut self, label: impl Into<String>, coeffs: Sparse, rhs: f64) -> Result<&mut Self, ConvexError> {
        let label = label.into();
        self.check_sparse(&label, &coeffs)?;
        if !rhs.is_finite() {
            return Err(ConvexError::NonFinite(label));
        }
        self.constraints.push(Constraint { label, kind: ConstraintKind::Linear { coeffs, rhs } });
        Ok(self)
    }

    pub fn add_quadratic(
        &mut self,
        label: impl Into<String>,
        support: Vec<usize>,
        q: DMatrix<f64>,
        coeffs: Sparse,
        rhs: f64,
    ) -> Result<&mut Self, ConvexError> {
        let label = label.into();
        self.check_sparse(&label, &coeffs)?;
        if q.nrows() != support.len() || q.ncols() != support.len() {
            return Err(ConvexError::DimensionMismatch {
                label,
                detail: format!("{}x{} matrix over a support of {}", q.nrows(), q.ncols(), support.len()),
            });
        }
        if let Some(&i) = support.iter().find(|&&i| i >= self.n) {
            return Err(ConvexError::IndexOutOfRange { label, index: i, n: self.n });
        }
        if !q.iter().all(|v| v.is_finite()) || !rhs.is_finite() {
            return Err(ConvexError::NonFinite(label));
        }
        let q = 0.5 * (&q + q.transpose());
        let norm = q.norm();
        if norm > 0.0 {
            let min_eig = SymmetricEigen::new(q.clone()).eigenvalues.min();
            if min_eig < -1e-9 * norm {
                return Err(ConvexError::NotPsd { label, min_eig });
            }
        }
        self.constraints.push(Constraint {
            label,
            kind: ConstraintKind::Quadratic { support, q, coeffs, rhs },
        });
        Ok(self)
    }

    pub fn add_soc(
        &mut self,
        label: impl Into<String>,
        rows: Vec<(Sparse, f64)>,
        d: Sparse,
        e: f64,
    ) -> Result<&mut Self, ConvexError> {
        let label = label.into();
        for (r, c) in &rows {
            self.check_sparse(&label, r)?;
            if !c.is_finite() {
                return Err(ConvexError::NonFinite(label));
            }
        }
        self.check_sparse(&label, &d)?;
        if !e.is_finite() {
            return Err(ConvexError::NonFinite(label));
        }
        self.constraints.push(Constraint { label, kind: ConstraintKind::Soc { rows, d, e } });
        Ok(self)
    }
}

/// `lhs - rhs` of a constraint (`<= 0` means satisfied); for cones `||u|| - t`.
pub fn constraint_value(kind: &ConstraintKind, x: &[f64]) -> f64 {
    match kind {
        ConstraintKind::Linear { coeffs, rhs } => dot(coeffs, x) - rhs,
        ConstraintKind::Quadratic { support, q, coeffs, rhs } => {
            let xs = DVector::from_iterator(support.len(), support.iter().map(|&i| x[i]));
            (xs.transpose() * q * &xs)[0] + dot(coeffs, x) - rhs
        }
        ConstraintKind::Soc { rows, d, e } => {
            let u: f64 = rows.iter().map(|(r, c)| (dot(r, x) + c).powi(2)).sum();
            u.sqrt() - (dot(d, x) + e)
        }
    }
}

/// Slack of one constraint at a point; positive means strictly satisfied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackEntry {
    pub label: String,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub inequalities: Vec<SlackEntry>,
    /// `|a . x - b|` per equality.
    pub equalities: Vec<SlackEntry>,
    pub bounds: Vec<SlackEntry>,
}

impl ResidualReport {
    /// Largest violation over all constraint families, zero if none.
    pub fn max_violation(&self) -> f64 {
        let ineq = self
            .inequalities
            .iter()
            .chain(&self.bounds)
            .map(|s| -s.slack)
            .fold(0.0, f64::max);
        let eq = self.equalities.iter().map(|s| s.slack).fold(0.0, f64::max);
        ineq.max(eq)
    }
}

pub fn validate_solution(program: &ConvexProgram, x: &[f64]) -> Result<ResidualReport, ConvexError> {
    if x.len() != program.n {
        return Err(ConvexError::DimensionMismatch {
            label: "point".into(),
            detail: format!("{} values for {} variables", x.len(), program.n),
        });
    }
    let inequalities = program
        .constraints
        .iter()
        .map(|c| SlackEntry { label: c.label.clone(), slack: -constraint_value(&c.kind, x) })
        .collect();
    let equalities = program
        .equalities
        .iter()
        .map(|e| SlackEntry { label: e.label.clone(), slack: (dot(&e.coeffs, x) - e.rhs).abs() })
        .collect();
    let mut bounds = Vec::new();
    for (i, &(lo, hi)) in program.bounds.iter().enumerate() {
        if lo.is_finite() {
            bounds.push(SlackEntry { label: format!("x{i} >= lower"), slack: x[i] - lo });
        }
        if hi.is_finite() {
            bounds.push(SlackEntry { label: format!("x{i} <= upper"), slack: hi - x[i] });
        }
    }
    Ok(ResidualReport { inequalities, equalities, bounds })
}

fn fmt_sparse(f: &mut fmt::Formatter<'_>, coeffs: &Sparse) -> fmt::Result {
    if coeffs.is_empty() {
        return write!(f, "0");
    }
    for (k, (i, a)) in coeffs.iter().enumerate() {
        if k > 0 {
            write!(f, " ")?;
        }
        write!(f, "{a:+e}*x{i}")?;
    }
    Ok(())
}

/// Canonical text form, one item per line.
impl fmt::Display for ConvexProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vars {}", self.n)?;
        write!(f, "minimize")?;
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                write!(f, " {c:+e}*x{i}")?;
            }
        }
        writeln!(f, " {:+e}", self.objective_constant)?;
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_finite() || hi.is_finite() {
                writeln!(f, "bound x{i} {lo:e} {hi:e}")?;
            }
        }
        for e in &self.equalities {
            write!(f, "eq {}: ", e.label)?;
            fmt_sparse(f, &e.coeffs)?;
            writeln!(f, " == {:e}", e.rhs)?;
        }
        for c in &self.constraints {
            match &c.kind {
                ConstraintKind::Linear { coeffs, rhs } => {
                    write!(f, "lin {}: ", c.label)?;
                    fmt_sparse(f, coeffs)?;
                    writeln!(f, " <= {rhs:e}")?;
                }
                ConstraintKind::Quadratic { support, q, coeffs, rhs } => {
                    write!(f, "quad {}: support {:?} Q [", c.label, support)?;
                    for r in 0..q.nrows() {
                        let row: Vec<String> = (0..q.ncols()).map(|k| format!("{:e}", q[(r, k)])).collect();
                        write!(f, "{}{}", if r > 0 { "; " } else { "" }, row.join(" "))?;
                    }
                    write!(f, "] + ")?;
                    fmt_sparse(f, coeffs)?;
                    writeln!(f, " <= {rhs:e}")?;
                }
                ConstraintKind::Soc { rows, d, e } => {
                    write!(f, "soc {}: ||", c.label)?;
                    for (k, (r, c0)) in rows.iter().enumerate() {
                        write!(f, "{}", if k > 0 { ", " } else { "(" })?;
                        fmt_sparse(f, r)?;
                        write!(f, " {c0:+e}")?;
                    }
                    write!(f, ")|| <= ")?;
                    fmt_sparse(f, d)?;
                    writeln!(f, " {e:+e}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// Largest constraint violation (unscaled).
    pub primal: f64,
    /// Newton decrement of the last centering step, divided by the barrier weight.
    pub dual: f64,
    /// Certified duality gap bound.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt: KktResiduals,
    /// Constraints active at the phase-1 optimum when infeasible.
    pub infeasible_set: Vec<usize>,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feasibility: f64,
    /// Relative gap: stop when `gap <= gap_rel * max(1, |objective|)`.
    pub gap_rel: f64,
    /// Phase-1 optimum above this means infeasible.
    pub infeasibility: f64,
    pub max_newton_per_centering: usize,
    pub max_outer: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            gap_rel: 1e-7,
            infeasibility: 1e-7,
            max_newton_per_centering: 500,
            max_outer: 80,
        }
    }
}

const MU: f64 = 20.0;

/// Internal row, scaled so that coefficients are O(1).
#[derive(Debug, Clone)]
enum Row {
    Lin { c: Sparse, rhs: f64 },
    Quad { support: Vec<usize>, q: DMatrix<f64>, c: Sparse, rhs: f64 },
    Soc { rows: Vec<(Sparse, f64)>, d: Sparse, e: f64 },
}

impl Row {
    fn compile(kind: &ConstraintKind) -> Row {
        let big = |c: &Sparse| c.iter().map(|(_, a)| a.abs()).fold(0.0, f64::max);
        match kind {
            ConstraintKind::Linear { coeffs, rhs } => {
                let s = 1.0 / big(coeffs).max(1.0);
                Row::Lin { c: coeffs.iter().map(|&(i, a)| (i, a * s)).collect(), rhs: rhs * s }
            }
            ConstraintKind::Quadratic { support, q, coeffs, rhs } => {
                let m = q.iter().map(|v| v.abs()).fold(big(coeffs), f64::max);
                let s = 1.0 / m.max(1.0);
                Row::Quad {
                    support: support.clone(),
                    q: q * s,
                    c: coeffs.iter().map(|&(i, a)| (i, a * s)).collect(),
                    rhs: rhs * s,
                }
            }
            ConstraintKind::Soc { rows, d, e } => {
                let m = rows.iter().map(|(r, _)| big(r)).fold(big(d), f64::max);
                let s = 1.0 / m.max(1.0);
                Row::Soc {
                    rows: rows
                        .iter()
                        .map(|(r, c)| (r.iter().map(|&(i, a)| (i, a * s)).collect(), c * s))
                        .collect(),
                    d: d.iter().map(|&(i, a)| (i, a * s)).collect(),
                    e: e * s,
                }
            }
        }
    }

    /// Barrier weight (self-concordance parameter).
    fn theta(&self) -> f64 {
        match self {
            Row::Soc { .. } => 2.0,
            _ => 1.0,
        }
    }

    /// Scaled violation `g(x)`; `<= s` is the phase-1 relaxed form.
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Row::Lin { c, rhs } => dot(c, x) - rhs,
            Row::Quad { support, q, c, rhs } => quad_form(support, q, x) + dot(c, x) - rhs,
            Row::Soc { rows, d, e } => {
                let u: f64 = rows.iter().map(|(r, c)| (dot(r, x) + c).powi(2)).sum();
                u.sqrt() - (dot(d, x) + e)
            }
        }
    }
}

fn quad_form(support: &[usize], q: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            acc += q[(a, b)] * x[i] * x[j];
        }
    }
    acc
}

/// Barrier problem over `y = (x, s?)`: `t * obj . y + sum phi_i(y)`.
struct Barrier<'a> {
    rows: &'a [Row],
    /// Index of the phase-1 slack, if any.
    slack: Option<usize>,
    dim: usize,
}

enum Eval {
    OutOfDomain,
    Value(f64),
}

impl Barrier<'_> {
    fn slack_of(&self, y: &[f64]) -> f64 {
        self.slack.map_or(0.0, |k| y[k])
    }

    fn phi(&self, y: &[f64]) -> Eval {
        let s = self.slack_of(y);
        let mut acc = 0.0;
        for row in self.rows {
            let v = match row {
                Row::Soc { rows, d, e } => {
                    let tau = dot(d, y) + e + s;
                    let u: f64 = rows.iter().map(|(r, c)| (dot(r, y) + c).powi(2)).sum();
                    if tau <= 0.0 {
                        return Eval::OutOfDomain;
                    }
                    tau * tau - u
                }
                _ => s - row.value(y),
            };
            if !(v > 0.0) {
                return Eval::OutOfDomain;
            }
            acc -= v.ln();
        }
        if let Some(k) = self.slack {
            // s >= -1 keeps phase 1 bounded
            let v = y[k] + 1.0;
            if !(v > 0.0) {
                return Eval::OutOfDomain;
            }
            acc -= v.ln();
        }
        Eval::Value(acc)
    }

    /// Gradient and Hessian of the barrier sum.
    fn derivatives(&self, y: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        let s = self.slack_of(y);
        let mut grad_v: Sparse = Vec::new();
        for row in self.rows {
            grad_v.clear();
            match row {
                Row::Lin { c, rhs } => {
                    let v = s - (dot(c, y) - rhs);
                    grad_v.extend(c.iter().map(|&(i, a)| (i, -a)));
                    if let Some(k) = self.slack {
                        grad_v.push((k, 1.0));
                    }
                    rank_one(&mut g, &mut h, &grad_v, v);
                }
                Row::Quad { support, q, c, rhs } => {
                    let v = s - (quad_form(support, q, y) + dot(c, y) - rhs);
                    grad_v.extend(c.iter().map(|&(i, a)| (i, -a)));
                    for (a, &i) in support.iter().enumerate() {
                        let qa: f64 = support.iter().enumerate().map(|(b, &j)| q[(a, b)] * y[j]).sum();
                        grad_v.push((i, -2.0 * qa));
                    }
                    if let Some(k) = self.slack {
                        grad_v.push((k, 1.0));
                    }
                    rank_one(&mut g, &mut h, &grad_v, v);
                    // -hess(v) / v = 2Q / v
                    for (a, &i) in support.iter().enumerate() {
                        for (b, &j) in support.iter().enumerate() {
                            h[(i, j)] += 2.0 * q[(a, b)] / v;
                        }
                    }
                }
                Row::Soc { rows, d, e } => {
                    let tau = dot(d, y) + e + s;
                    let us: Vec<f64> = rows.iter().map(|(r, c)| dot(r, y) + c).collect();
                    let v = tau * tau - us.iter().map(|u| u * u).sum::<f64>();
                    // grad v = 2 tau grad tau - 2 sum u_i grad u_i
                    grad_v.extend(d.iter().map(|&(i, a)| (i, 2.0 * tau * a)));
                    if let Some(k) = self.slack {
                        grad_v.push((k, 2.0 * tau));
                    }
                    for ((r, _), u) in rows.iter().zip(&us) {
                        grad_v.extend(r.iter().map(|&(i, a)| (i, -2.0 * u * a)));
                    }
                    rank_one(&mut g, &mut h, &grad_v, v);
                    // -hess(v) / v = (-2 grad tau grad tau' + 2 sum grad u grad u') / v
                    let mut dt: Sparse = d.clone();
                    if let Some(k) = self.slack {
                        dt.push((k, 1.0));
                    }
                    outer_add(&mut h, &dt, -2.0 / v);
                    for (r, _) in rows {
                        outer_add(&mut h, r, 2.0 / v);
                    }
                }
            }
        }
        if let Some(k) = self.slack {
            let v = y[k] + 1.0;
            g[k] -= 1.0 / v;
            h[(k, k)] += 1.0 / (v * v);
        }
        (g, h)
    }

    fn theta_total(&self) -> f64 {
        self.rows.iter().map(Row::theta).sum::<f64>() + if self.slack.is_some() { 1.0 } else { 0.0 }
    }
}

/// Adds `-log v` derivatives given `grad v`: gradient `-grad v / v`, Hessian `grad v grad v' / v^2`.
fn rank_one(g: &mut DVector<f64>, h: &mut DMatrix<f64>, grad_v: &Sparse, v: f64) {
    for &(i, a) in grad_v {
        g[i] -= a / v;
    }
    outer_add(h, grad_v, 1.0 / (v * v));
}

fn outer_add(h: &mut DMatrix<f64>, w: &Sparse, scale: f64) {
    for &(i, a) in w {
        for &(j, b) in w {
            h[(i, j)] += scale * a * b;
        }
    }
}

/// Solves the equality-constrained Newton system; `None` on numerical breakdown.
fn newton_step(h: &DMatrix<f64>, g: &DVector<f64>, eq: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let p = eq.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    for ridge in [0.0, 1e-14, 1e-11, 1e-8] {
        let mut k = DMatrix::zeros(n + p, n + p);
        k.view_mut((0, 0), (n, n)).copy_from(h);
        for i in 0..n {
            k[(i, i)] += ridge * scale;
        }
        if p > 0 {
            k.view_mut((n, 0), (p, n)).copy_from(eq);
            k.view_mut((0, n), (n, p)).copy_from(&eq.transpose());
        }
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&(-g));
        let sol = if p == 0 {
            k.clone().cholesky().map(|c| c.solve(&rhs)).or_else(|| k.lu().solve(&rhs))
        } else {
            k.lu().solve(&rhs)
        };
        if let Some(sol) = sol {
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol.rows(0, n).into_owned());
            }
        }
    }
    None
}

enum Centering {
    Done { decrement: f64 },
    Stalled,
}

/// Minimizes `t * c . y + phi(y)` from a strictly feasible `y`, staying on the equality set.
fn center(
    bar: &Barrier<'_>,
    c: &DVector<f64>,
    eq: &DMatrix<f64>,
    t: f64,
    y: &mut Vec<f64>,
    tol: &Tolerances,
    steps: &mut usize,
) -> Centering {
    let f = |y: &[f64]| match bar.phi(y) {
        Eval::Value(v) => Some(t * c.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + v),
        Eval::OutOfDomain => None,
    };
    let Some(mut fy) = f(y) else { return Centering::Stalled };
    for _ in 0..tol.max_newton_per_centering {
        *steps += 1;
        let (gb, h) = bar.derivatives(y);
        let g = gb + c * t;
        let Some(dy) = newton_step(&h, &g, eq) else { return Centering::Stalled };
        let lambda2 = -g.dot(&dy);
        if !lambda2.is_finite() {
            return Centering::Stalled;
        }
        if lambda2 / 2.0 <= 1e-10 {
            return Centering::Done { decrement: lambda2.max(0.0).sqrt() };
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = y.iter().zip(dy.iter()).map(|(a, d)| a + step * d).collect();
            if let Some(fc) = f(&cand) {
                if fc <= fy - 0.01 * step * lambda2 {
                    if fc >= fy {
                        // the decrease is below working precision
                        return Centering::Done { decrement: lambda2.max(0.0).sqrt() };
                    }
                    *y = cand;
                    fy = fc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // no progress possible at working precision
            return Centering::Done { decrement: lambda2.max(0.0).sqrt() };
        }
    }
    Centering::Stalled
}

fn starting_point(program: &ConvexProgram, warm: Option<&[f64]>) -> Vec<f64> {
    if let Some(w) = warm {
        if w.len() == program.n && w.iter().all(|v| v.is_finite()) {
            return w.to_vec();
        }
    }
    program
        .bounds
        .iter()
        .map(|&(lo, hi)| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

fn equality_matrix(program: &ConvexProgram, dim: usize) -> (DMatrix<f64>, DVector<f64>) {
    let p = program.equalities.len();
    let mut a = DMatrix::zeros(p, dim);
    let mut b = DVector::zeros(p);
    for (r, e) in program.equalities.iter().enumerate() {
        for &(i, v) in &e.coeffs {
            a[(r, i)] += v;
        }
        b[r] = e.rhs;
    }
    (a, b)
}

fn failed(program: &ConvexProgram, status: SolveStatus, x: Vec<f64>, infeasible_set: Vec<usize>, steps: usize) -> SolveResult {
    let primal = validate_solution(program, &x).map(|r| r.max_violation()).unwrap_or(f64::INFINITY);
    SolveResult {
        status,
        objective: program.objective_value(&x),
        x,
        kkt: KktResiduals { primal, dual: f64::NAN, gap: f64::INFINITY },
        infeasible_set,
        newton_steps: steps,
    }
}

/// Solves `program`; `warm` is an optional starting guess (need not be feasible).
pub fn solve(program: &ConvexProgram, warm: Option<&[f64]>, tol: &Tolerances) -> SolveResult {
    let n = program.n;
    let mut rows: Vec<Row> = program.constraints.iter().map(|c| Row::compile(&c.kind)).collect();
    let user_rows = rows.len();
    for (i, &(lo, hi)) in program.bounds.iter().enumerate() {
        if lo.is_finite() {
            rows.push(Row::Lin { c: vec![(i, -1.0)], rhs: -lo });
        }
        if hi.is_finite() {
            rows.push(Row::Lin { c: vec![(i, 1.0)], rhs: hi });
        }
    }

    // project the start onto the equality set
    let (a, b) = equality_matrix(program, n);
    let mut x = DVector::from_vec(starting_point(program, warm));
    let mut steps = 0;
    if a.nrows() > 0 {
        let resid = &a * &x - &b;
        let svd = a.clone().svd(true, true);
        let Ok(corr) = svd.solve(&resid, 1e-12) else {
            return failed(program, SolveStatus::MaxIterations, x.as_slice().to_vec(), vec![], 0);
        };
        x -= corr;
        let after = (&a * &x - &b).amax();
        if after > 1e-9 * b.amax().max(1.0) {
            return failed(program, SolveStatus::Infeasible, x.as_slice().to_vec(), vec![], 0);
        }
    }
    let mut x: Vec<f64> = x.as_slice().to_vec();

    // phase 1 unless the start is already strictly feasible
    let worst = rows.iter().map(|r| r.value(&x)).fold(f64::NEG_INFINITY, f64::max);
    if !(worst < 0.0) || rows.iter().any(|r| matches!(r, Row::Soc { d, e, .. } if dot(d, &x) + e <= 0.0)) {
        let dim = n + 1;
        let bar = Barrier { rows: &rows, slack: Some(n), dim };
        let mut y = x.clone();
        let s0 = rows
            .iter()
            .map(|r| match r {
                Row::Soc { d, e, .. } => r.value(&x).max(-(dot(d, &x) + e)),
                _ => r.value(&x),
            })
            .fold(0.0, f64::max)
            + 1.0;
        y.push(s0);
        let mut c = DVector::zeros(dim);
        c[n] = 1.0;
        let mut a1 = DMatrix::zeros(a.nrows(), dim);
        a1.view_mut((0, 0), (a.nrows(), n)).copy_from(&a);
        let theta = bar.theta_total();
        let mut t = 1.0;
        let mut found = false;
        for _ in 0..tol.max_outer {
            if let Centering::Stalled = center(&bar, &c, &a1, t, &mut y, tol, &mut steps) {
                break;
            }
            let xs = &y[..n];
            if y[n] < 0.0 && rows.iter().all(|r| r.value(xs) < 0.0) {
                found = true;
                break;
            }
            // s* >= s - theta/t
            if y[n] - theta / t > tol.infeasibility {
                let set = active_set(&rows[..user_rows], xs, y[n]);
                return failed(program, SolveStatus::Infeasible, xs.to_vec(), set, steps);
            }
            if theta / t < 1e-12 {
                break;
            }
            t *= MU;
        }
        x = y[..n].to_vec();
        if !found {
            let s = y[n];
            let status = if s > tol.infeasibility { SolveStatus::Infeasible } else { SolveStatus::MaxIterations };
            let set = if status == SolveStatus::Infeasible { active_set(&rows[..user_rows], &x, s) } else { vec![] };
            return failed(program, status, x, set, steps);
        }
    }

    // phase 2
    let bar = Barrier { rows: &rows, slack: None, dim: n };
    let c = DVector::from_column_slice(&program.objective);
    let theta = bar.theta_total();
    let f0 = program.objective_value(&x).abs().max(1.0);
    let cn = c.amax().max(1e-300);
    // start with the objective and barrier gradients of comparable size
    let mut t = (theta / (f0 * cn).max(1.0)).max(1e-3);
    let mut decrement;
    for _ in 0..tol.max_outer {
        match center(&bar, &c, &a, t, &mut x, tol, &mut steps) {
            Centering::Stalled => {
                return failed(program, SolveStatus::MaxIterations, x, vec![], steps);
            }
            Centering::Done { decrement: d } => decrement = d,
        }
        let obj = program.objective_value(&x);
        if theta / t <= tol.gap_rel * obj.abs().max(1.0) {
            let primal = validate_solution(program, &x).map(|r| r.max_violation()).unwrap_or(f64::INFINITY);
            let status = if primal <= tol.feasibility { SolveStatus::Optimal } else { SolveStatus::MaxIterations };
            return SolveResult {
                status,
                x,
                objective: obj,
                kkt: KktResiduals { primal, dual: decrement / t, gap: theta / t },
                infeasible_set: vec![],
                newton_steps: steps,
            };
        }
        t *= MU;
    }
    failed(program, SolveStatus::MaxIterations, x, vec![], steps)
}

fn active_set(rows: &[Row], x: &[f64], _s: f64) -> Vec<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, r)| r.value(x) > 0.0)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn one_dimensional_lp() {
        let mut p = ConvexProgram::new(1);
        p.minimize(vec![1.0], 0.0).unwrap();
        p.add_linear("x >= 3", vec![(0, -1.0)], -3.0).unwrap();
        p.set_bounds(0, -10.0, 10.0).unwrap();
        let r = solve(&p, None, &tol());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 3.0).abs() < 1e-6, "{:?}", r.x);
        assert!(r.kkt.gap <= 1e-7 * 3.0);
    }

    #[test]
    fn detects_infeasible_pair() {
        let mut p = ConvexProgram::new(1);
        p.minimize(vec![1.0], 0.0).unwrap();
        p.add_linear("x <= 0", vec![(0, 1.0)], 0.0).unwrap();
        p.add_linear("x >= 1", vec![(0, -1.0)], -1.0).unwrap();
        let r = solve(&p, None, &tol());
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert_eq!(r.infeasible_set, vec![0, 1]);
    }

    #[test]
    fn equality_constrained_quadratic() {
        // min x + y  s.t.  x^2 + y^2 <= 1, x - y = 0
        let mut p = ConvexProgram::new(2);
        p.minimize(vec![1.0, 1.0], 0.0).unwrap();
        p.add_quadratic("disk", vec![0, 1], DMatrix::identity(2, 2), vec![], 1.0).unwrap();
        p.add_equality("diag", vec![(0, 1.0), (1, -1.0)], 0.0).unwrap();
        let r = solve(&p, None, &tol());
        assert_eq!(r.status, SolveStatus::Optimal);
        let v = -std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.x[0] - v).abs() < 1e-6 && (r.x[1] - v).abs() < 1e-6);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = ConvexProgram::new(2);
        p.add_equality("a", vec![(0, 1.0)], 0.0).unwrap();
        p.add_equality("b", vec![(0, 1.0)], 1.0).unwrap();
        assert_eq!(solve(&p, None, &tol()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn soc_over_box() {
        // min -y  s.t.  ||(x - 0.2, y)|| <= 0.5, box [-1, 1]^2
        let mut p = ConvexProgram::new(2);
        p.minimize(vec![0.0, -1.0], 0.0).unwrap();
        p.add_soc("ball", vec![(vec![(0, 1.0)], -0.2), (vec![(1, 1.0)], 0.0)], vec![], 0.5).unwrap();
        p.set_bounds(0, -1.0, 1.0).unwrap().set_bounds(1, -1.0, 1.0).unwrap();
        let r = solve(&p, None, &tol());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[1] - 0.5).abs() < 1e-6 && (r.x[0] - 0.2).abs() < 1e-3);
    }

    #[test]
    fn rejects_indefinite_quadratic() {
        let mut p = ConvexProgram::new(2);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(p.add_quadratic("saddle", vec![0, 1], q, vec![], 1.0), Err(ConvexError::NotPsd { .. })));
        assert!(matches!(p.add_linear("bad", vec![(5, 1.0)], 0.0), Err(ConvexError::IndexOutOfRange { .. })));
        assert!(matches!(p.minimize(vec![1.0], 0.0), Err(ConvexError::DimensionMismatch { .. })));
    }

    #[test]
    fn residual_report_signs() {
        let mut p = ConvexProgram::new(2);
        p.add_quadratic("disk", vec![0, 1], DMatrix::identity(2, 2), vec![], 1.0).unwrap();
        let inside = validate_solution(&p, &[0.1, 0.2]).unwrap();
        assert!(inside.inequalities[0].slack > 0.0);
        let edge = validate_solution(&p, &[0.6, 0.8]).unwrap();
        assert!(edge.inequalities[0].slack.abs() < 1e-12);
        let out = validate_solution(&p, &[0.6 + 1e-3, 0.8]).unwrap();
        assert!(out.inequalities[0].slack < 0.0);
        assert!(out.max_violation() > 0.0);
    }

    #[test]
    fn text_dump_has_one_line_per_item() {
        let mut p = ConvexProgram::new(2);
        p.minimize(vec![1.0, 0.0], 0.5).unwrap();
        p.set_bounds(0, 0.0, 1.0).unwrap();
        p.add_linear("l", vec![(0, 1.0), (1, 1.0)], 1.0).unwrap();
        p.add_equality("e", vec![(1, 1.0)], 0.25).unwrap();
        p.add_soc("c", vec![(vec![(0, 1.0)], 0.0)], vec![(1, 1.0)], 1.0).unwrap();
        let text = p.to_string();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().any(|l| l.starts_with("soc c:")));
    }
}
