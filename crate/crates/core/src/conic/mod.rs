//! Real-valued conic programs with linear, second-order and rotated
//! second-order cone constraints, and the interior-point solver for them.

mod encode;
mod ipm;

use std::path::Path;

use serde::Serialize;

pub use encode::{
    encode_ee_feasibility, encode_ee_subproblem, encode_fractional_terms, encode_see_feasibility,
    encode_see_subproblem, encode_sum_secrecy_subproblem, BeamformerLayout, EncodedProgram,
};
pub use ipm::solve;

use crate::error::Result;

/// Sparse affine scalar expression `Σ coef·x[idx] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(idx: usize, coef: f64) -> Self {
        Self { terms: vec![(idx, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, idx: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((idx, coef));
        }
        self
    }

    pub fn with_term(mut self, idx: usize, coef: f64) -> Self {
        self.add_term(idx, coef);
        self
    }

    pub fn plus(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConeKind {
    /// Every row non-negative.
    Nonneg,
    /// `y₀ ≥ ‖y₁..‖`.
    SecondOrder,
    /// `2 y₀ y₁ ≥ ‖y₂..‖²`, `y₀, y₁ ≥ 0`.
    RotatedSecondOrder,
}

/// What a constraint block encodes, used for bookkeeping and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockRole {
    /// `‖V_j‖² ≤ P_max`.
    Power(usize),
    /// Inner approximation of the secrecy (or rate) QoS constraint of user `j`.
    Qos(usize),
    /// Wiretap cap `Θ_{j,e} ≤ ε`.
    SecrecyLevel(usize),
    /// `ζ Σ ‖V_j‖² + P_c ≤ t`.
    PowerEpigraph,
    /// `𝒜_j(V) ≥ 0`.
    TrustRegion(usize),
    /// Auxiliary epigraph/hypograph cone for an objective term of user `j`.
    Objective(usize),
}

impl BlockRole {
    /// The quadratic constraint groups counted by the complexity estimate:
    /// power budgets, QoS constraints and the power epigraph.
    pub fn is_core_quadratic(self) -> bool {
        matches!(self, BlockRole::Power(_) | BlockRole::Qos(_) | BlockRole::PowerEpigraph)
    }
}

/// `y = M x[cols] + offset ∈ K`, `M` dense row-major over `cols`.
#[derive(Debug, Clone, Serialize)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub role: BlockRole,
    pub cols: Vec<usize>,
    pub rows: usize,
    pub coeffs: Vec<f64>,
    pub offset: Vec<f64>,
}

impl ConeBlock {
    pub fn from_rows(kind: ConeKind, role: BlockRole, rows: &[LinExpr]) -> Self {
        let mut cols: Vec<usize> = rows.iter().flat_map(|r| r.terms.iter().map(|t| t.0)).collect();
        cols.sort_unstable();
        cols.dedup();
        let width = cols.len();
        let mut coeffs = vec![0.0; rows.len() * width];
        for (r, row) in rows.iter().enumerate() {
            for &(idx, a) in &row.terms {
                let k = cols.binary_search(&idx).expect("column collected above");
                coeffs[r * width + k] += a;
            }
        }
        Self { kind, role, cols, rows: rows.len(), coeffs, offset: rows.iter().map(|r| r.constant).collect() }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let width = self.cols.len();
        (0..self.rows)
            .map(|r| {
                let row = &self.coeffs[r * width..(r + 1) * width];
                self.offset[r] + row.iter().zip(&self.cols).map(|(a, &i)| a * x[i]).sum::<f64>()
            })
            .collect()
    }

    /// Amount by which `x` violates the cone membership (0 when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let y = self.eval(x);
        match self.kind {
            ConeKind::Nonneg => y.iter().fold(0.0f64, |m, &v| m.max(-v)),
            ConeKind::SecondOrder => {
                let tail = y[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (tail - y[0]).max(0.0)
            }
            ConeKind::RotatedSecondOrder => {
                let tail = y[2..].iter().map(|v| v * v).sum::<f64>();
                let u = (y[0] + y[1]) / std::f64::consts::SQRT_2;
                let w = (y[0] - y[1]) / std::f64::consts::SQRT_2;
                ((tail + w * w).sqrt() - u).max(0.0)
            }
        }
    }
}

/// Named contiguous range of decision variables.
#[derive(Debug, Clone, Serialize)]
pub struct VarGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
    /// Part of the design variables `(V, t)` rather than an auxiliary.
    pub core: bool,
}

/// `maximize objectiveᵀ x + objective_constant` subject to the cone blocks.
#[derive(Debug, Clone, Serialize)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub groups: Vec<VarGroup>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub blocks: Vec<ConeBlock>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self { n_vars: 0, groups: Vec::new(), objective: Vec::new(), objective_constant: 0.0, blocks: Vec::new() }
    }

    /// Appends `len` variables and returns the index of the first.
    pub fn add_vars(&mut self, name: impl Into<String>, len: usize, core: bool) -> usize {
        let start = self.n_vars;
        self.groups.push(VarGroup { name: name.into(), start, len, core });
        self.n_vars += len;
        self.objective.resize(self.n_vars, 0.0);
        start
    }

    pub fn add_objective(&mut self, e: &LinExpr) {
        for &(i, a) in &e.terms {
            self.objective[i] += a;
        }
        self.objective_constant += e.constant;
    }

    pub fn add_nonneg(&mut self, role: BlockRole, row: LinExpr) {
        self.blocks.push(ConeBlock::from_rows(ConeKind::Nonneg, role, &[row]));
    }

    /// `‖tail‖ ≤ head`.
    pub fn add_soc(&mut self, role: BlockRole, head: LinExpr, tail: Vec<LinExpr>) {
        let mut rows = Vec::with_capacity(tail.len() + 1);
        rows.push(head);
        rows.extend(tail);
        self.blocks.push(ConeBlock::from_rows(ConeKind::SecondOrder, role, &rows));
    }

    /// `‖tail‖² ≤ 2 u v`, `u, v ≥ 0`.
    pub fn add_rotated(&mut self, role: BlockRole, u: LinExpr, v: LinExpr, tail: Vec<LinExpr>) {
        let mut rows = Vec::with_capacity(tail.len() + 2);
        rows.push(u);
        rows.push(v);
        rows.extend(tail);
        self.blocks.push(ConeBlock::from_rows(ConeKind::RotatedSecondOrder, role, &rows));
    }

    /// `‖tail‖² ≤ u` written as `2 (u/s)(s/2) ≥ ‖tail‖²`, where `s = √magnitude`
    /// balances the two heads when `u` is expected to be near `magnitude`.
    pub fn add_rotated_balanced(&mut self, role: BlockRole, u: LinExpr, tail: Vec<LinExpr>, magnitude: f64) {
        let s = magnitude.abs().max(1.0).sqrt();
        self.add_rotated(role, u.scaled(1.0 / s), LinExpr::constant(0.5 * s), tail);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.blocks.iter().fold(0.0f64, |m, b| m.max(b.violation(x)))
    }

    pub fn core_vars(&self) -> usize {
        self.groups.iter().filter(|g| g.core).map(|g| g.len).sum()
    }

    pub fn aux_vars(&self) -> usize {
        self.n_vars - self.core_vars()
    }

    pub fn core_quadratic_groups(&self) -> usize {
        self.blocks.iter().filter(|b| b.role.is_core_quadratic()).count()
    }

    pub fn cone_dimension(&self) -> usize {
        self.blocks.iter().map(|b| b.rows).sum()
    }

    /// Writes the program as self-describing JSON for offline inspection.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// The objective is unbounded (dual infeasible).
    Unbounded,
    MaxIters,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Objective value at `x` (maximization sense, constant included).
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub rel_gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Target tolerances; the solver keeps iterating until these hold.
    pub feas_tol: f64,
    pub rel_gap_tol: f64,
    /// Contract tolerances; an iterate meeting these is reported optimal when
    /// the target cannot be reached.
    pub feas_tol_loose: f64,
    pub rel_gap_tol_loose: f64,
    /// Dual residual accepted alongside the contract tolerances.
    pub dual_tol_loose: f64,
    pub step_fraction: f64,
    pub refine_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            feas_tol: 1e-10,
            rel_gap_tol: 1e-13,
            feas_tol_loose: 1e-8,
            rel_gap_tol_loose: 1e-7,
            dual_tol_loose: 1e-6,
            step_fraction: 0.99,
            refine_steps: 3,
        }
    }
}
