//! Lowering of the surrogate subproblems to real conic programs.
//!
//! Every complex entry of `V_l` becomes two real variables. A quadratic form
//! `Σ_l ‖R_l V_l‖²` lands in a single rotated cone whose tail stacks the real
//! and imaginary parts of every `R_l V_l`.

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::model::{BeamformerSet, SystemConfig};
use crate::surrogate::{ConstantCase, FractionalSurrogate, QuadraticSurrogate, SecrecySurrogate};

use super::{solve, BlockRole, ConicProgram, LinExpr, SolveResult, SolverOptions};

/// Position of the lifted beamformer entries inside the variable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamformerLayout {
    pub users: usize,
    pub tx: usize,
    pub streams: usize,
    pub offset: usize,
}

impl BeamformerLayout {
    pub fn new(cfg: &SystemConfig, offset: usize) -> Self {
        Self { users: cfg.users, tx: cfg.tx_antennas, streams: cfg.streams, offset }
    }

    pub fn per_user(&self) -> usize {
        2 * self.tx * self.streams
    }

    pub fn len(&self) -> usize {
        self.users * self.per_user()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of `Re V_l[r, c]` (`imag = false`) or `Im V_l[r, c]`.
    pub fn index(&self, l: usize, r: usize, col: usize, imag: bool) -> usize {
        self.offset + l * self.per_user() + 2 * (col * self.tx + r) + imag as usize
    }

    pub fn pack(&self, v: &BeamformerSet, x: &mut [f64]) {
        for (l, m) in v.v.iter().enumerate() {
            for col in 0..self.streams {
                for r in 0..self.tx {
                    x[self.index(l, r, col, false)] = m[(r, col)].re;
                    x[self.index(l, r, col, true)] = m[(r, col)].im;
                }
            }
        }
    }

    pub fn unpack(&self, x: &[f64]) -> BeamformerSet {
        let v = (0..self.users)
            .map(|l| {
                CMat::from_fn(self.tx, self.streams, |r, col| {
                    c(x[self.index(l, r, col, false)], x[self.index(l, r, col, true)])
                })
            })
            .collect();
        BeamformerSet { v }
    }

    /// `Σ_l 2 Re⟨L_l, V_l⟩` as a real linear expression.
    pub fn linear_form(&self, lin: &[CMat]) -> LinExpr {
        let mut e = LinExpr::constant(0.0);
        for (l, m) in lin.iter().enumerate() {
            for col in 0..self.streams {
                for r in 0..self.tx {
                    e.add_term(self.index(l, r, col, false), 2.0 * m[(r, col)].re);
                    e.add_term(self.index(l, r, col, true), 2.0 * m[(r, col)].im);
                }
            }
        }
        e
    }

    /// Real rows whose squared norm is `‖F V_l‖²_F`.
    pub fn factor_rows(&self, l: usize, f: &CMat) -> Vec<LinExpr> {
        let mut rows = Vec::with_capacity(2 * f.nrows() * self.streams);
        for col in 0..self.streams {
            for i in 0..f.nrows() {
                let mut re = LinExpr::constant(0.0);
                let mut im = LinExpr::constant(0.0);
                for r in 0..self.tx {
                    let a = f[(i, r)];
                    let (xr, xi) = (self.index(l, r, col, false), self.index(l, r, col, true));
                    re.add_term(xr, a.re).add_term(xi, -a.im);
                    im.add_term(xi, a.re).add_term(xr, a.im);
                }
                rows.push(re);
                rows.push(im);
            }
        }
        rows
    }

    /// Rows of the compressed quadratic form of `q`.
    pub fn quadratic_rows(&self, q: &QuadraticSurrogate) -> Result<Vec<LinExpr>> {
        let factors = q.compressed_factors()?;
        Ok(factors.iter().enumerate().flat_map(|(l, f)| self.factor_rows(l, f)).collect())
    }

    /// Rows of `V_l` itself (entries in layout order).
    pub fn user_rows(&self, l: usize) -> Vec<LinExpr> {
        let start = self.offset + l * self.per_user();
        (start..start + self.per_user()).map(|i| LinExpr::var(i, 1.0)).collect()
    }
}

/// How an auxiliary variable is set to its optimal value given the design
/// variables. `block` is a rotated cone `2 y₀ y₁ ≥ ‖y₂..‖²`.
#[derive(Debug, Clone)]
enum Completion {
    /// Hypograph variable in the tail: `var = √(2 y₀ y₁)`.
    Tail { var: usize, block: usize },
    /// Epigraph variable in row `row ∈ {0, 1}`: smallest value satisfying the cone.
    Head { var: usize, block: usize, row: usize },
}

/// A conic program together with the map back to beamformers.
#[derive(Debug, Clone)]
pub struct EncodedProgram {
    pub program: ConicProgram,
    pub layout: BeamformerLayout,
    pub t_index: Option<usize>,
    pub tau_index: Option<usize>,
    completions: Vec<Completion>,
}

impl EncodedProgram {
    fn new(cfg: &SystemConfig, with_t: bool) -> Self {
        let mut program = ConicProgram::new();
        let layout = BeamformerLayout::new(cfg, program.add_vars("V", 2 * cfg.users * cfg.tx_antennas * cfg.streams, true));
        let t_index = with_t.then(|| program.add_vars("t", 1, true));
        Self { program, layout, t_index, tau_index: None, completions: Vec::new() }
    }

    fn t(&self) -> LinExpr {
        LinExpr::var(self.t_index.expect("program carries t"), 1.0)
    }

    pub fn solve(&self, opts: &SolverOptions) -> SolveResult {
        solve(&self.program, opts)
    }

    pub fn beamformers(&self, x: &[f64]) -> BeamformerSet {
        self.layout.unpack(x)
    }

    pub fn t_value(&self, x: &[f64]) -> Option<f64> {
        self.t_index.map(|i| x[i])
    }

    pub fn tau_value(&self, x: &[f64]) -> Option<f64> {
        self.tau_index.map(|i| x[i])
    }

    /// Fills in the design variables and sets every auxiliary to its optimal
    /// value. `τ` (if any) is left at zero.
    pub fn complete(&self, v: &BeamformerSet, t: Option<f64>) -> Vec<f64> {
        let mut x = vec![0.0; self.program.n_vars];
        self.layout.pack(v, &mut x);
        if let (Some(i), Some(t)) = (self.t_index, t) {
            x[i] = t;
        }
        for comp in &self.completions {
            match *comp {
                Completion::Tail { var, block } => {
                    x[var] = 0.0;
                    let y = self.program.blocks[block].eval(&x);
                    x[var] = (2.0 * y[0] * y[1]).max(0.0).sqrt();
                }
                Completion::Head { var, block, row } => {
                    x[var] = 0.0;
                    let b = &self.program.blocks[block];
                    let y = b.eval(&x);
                    let tail: f64 = y[2..].iter().map(|a| a * a).sum();
                    let partner = y[1 - row];
                    let k = b.coeffs[row * b.cols.len() + b.cols.binary_search(&var).expect("aux var in block")];
                    x[var] = (tail / (2.0 * partner) - y[row]) / k;
                }
            }
        }
        x
    }

    /// Objective of the program at `(V, t)` with the auxiliaries completed.
    pub fn objective_at(&self, v: &BeamformerSet, t: Option<f64>) -> f64 {
        self.program.objective_value(&self.complete(v, t))
    }

    fn add_power_cones(&mut self, cfg: &SystemConfig) {
        for j in 0..cfg.users {
            let rows = self.layout.user_rows(j);
            self.program.add_soc(BlockRole::Power(j), LinExpr::constant(cfg.p_max.sqrt()), rows);
        }
    }

    /// `ζ Σ ‖V_j‖² + P_c ≤ t`.
    fn add_power_epigraph(&mut self, cfg: &SystemConfig) {
        let sz = cfg.zeta.sqrt();
        let tail: Vec<LinExpr> = (0..cfg.users).flat_map(|j| self.layout.user_rows(j)).map(|r| r.scaled(sz)).collect();
        let u = self.t().plus(&LinExpr::constant(-cfg.circuit_power));
        let scale = cfg.zeta * cfg.users as f64 * cfg.p_max;
        self.program.add_rotated_balanced(BlockRole::PowerEpigraph, u, tail, scale);
    }

    /// `q(V) ≥ level` for a concave quadratic `q`, or `q(V) ≤ level` for a convex one.
    fn add_quadratic_level(&mut self, role: BlockRole, q: &QuadraticSurrogate, level: LinExpr) -> Result<()> {
        let lin = self.layout.linear_form(&q.linear);
        let rows = self.layout.quadratic_rows(q)?;
        let u = match q.sense {
            // a + L(V) − level ≥ ‖R v‖²
            crate::surrogate::Sense::Minorant => lin.plus(&LinExpr::constant(q.constant)).plus(&level.scaled(-1.0)),
            // level − a − L(V) ≥ ‖R v‖²
            crate::surrogate::Sense::Majorant => level.plus(&lin.plus(&LinExpr::constant(q.constant)).scaled(-1.0)),
        };
        let scale = u.constant;
        self.program.add_rotated_balanced(role, u, rows, scale);
        Ok(())
    }

    fn add_tau(&mut self) -> usize {
        let tau = self.program.add_vars("tau", 1, false);
        self.program.add_objective(&LinExpr::var(tau, 1.0));
        self.tau_index = Some(tau);
        tau
    }
}

/// Appends the concave fractional terms `Σ_j g_j(V, t)` to the objective
/// together with their trust regions.
pub fn encode_fractional_terms(enc: &mut EncodedProgram, fracs: &[FractionalSurrogate]) -> Result<()> {
    let t = enc.t();
    let users = fracs.len();
    let s = enc.program.add_vars("s", users, false);
    let w = enc.program.add_vars("w", users, false);
    let negatives = fracs.iter().filter(|f| f.case == ConstantCase::Negative).count();
    let q0 = enc.program.add_vars("q", negatives, false);
    let mut q_next = q0;
    for (j, f) in fracs.iter().enumerate() {
        let lin = enc.layout.linear_form(&f.base.linear);
        enc.program.add_nonneg(BlockRole::TrustRegion(j), lin.clone());

        // 2b √𝒜(V) − c t via s_j² ≤ 𝒜(V).
        enc.program.add_rotated(BlockRole::Objective(j), lin, LinExpr::constant(0.5), vec![LinExpr::var(s + j, 1.0)]);
        enc.completions.push(Completion::Tail { var: s + j, block: enc.program.blocks.len() - 1 });
        enc.program.add_objective(&LinExpr::var(s + j, 2.0 * f.b).plus(&t.clone().scaled(-f.c)));

        // −ℬ(V)/t via ℬ(V) ≤ t w_j.
        let rows = enc.layout.quadratic_rows(&f.base)?;
        enc.program.add_rotated(BlockRole::Objective(j), LinExpr::var(w + j, 1.0), t.clone().scaled(0.5), rows);
        enc.completions.push(Completion::Head { var: w + j, block: enc.program.blocks.len() - 1, row: 0 });
        enc.program.add_objective(&LinExpr::var(w + j, -1.0));

        let a = f.constant();
        match f.case {
            ConstantCase::Negative => {
                // a/t = −|a| q with q t ≥ 1.
                let q = q_next;
                q_next += 1;
                enc.program.add_rotated(
                    BlockRole::Objective(j),
                    LinExpr::var(q, 1.0),
                    t.clone().scaled(0.5),
                    vec![LinExpr::constant(1.0)],
                );
                enc.completions.push(Completion::Head { var: q, block: enc.program.blocks.len() - 1, row: 0 });
                enc.program.add_objective(&LinExpr::var(q, a));
            }
            ConstantCase::Positive => {
                let tb = f.anchor_t;
                enc.program.add_objective(&LinExpr::constant(2.0 * a / tb).plus(&t.clone().scaled(-a / (tb * tb))));
            }
            ConstantCase::Zero => {}
        }
    }
    Ok(())
}

/// Convex subproblem of the secrecy-energy-efficiency loop.
pub fn encode_see_subproblem(
    surrogates: &[SecrecySurrogate],
    fracs: &[FractionalSurrogate],
    cfg: &SystemConfig,
) -> Result<EncodedProgram> {
    check_users(surrogates.len(), cfg)?;
    let mut enc = EncodedProgram::new(cfg, true);
    enc.add_power_cones(cfg);
    for (j, s) in surrogates.iter().enumerate() {
        enc.add_quadratic_level(BlockRole::Qos(j), &s.secrecy, LinExpr::constant(cfg.qos_nats[j]))?;
    }
    enc.add_power_epigraph(cfg);
    encode_fractional_terms(&mut enc, fracs)?;
    Ok(enc)
}

/// Convex subproblem of the energy-efficiency loop with a wiretap cap.
pub fn encode_ee_subproblem(
    surrogates: &[SecrecySurrogate],
    fracs: &[FractionalSurrogate],
    cfg: &SystemConfig,
) -> Result<EncodedProgram> {
    check_users(surrogates.len(), cfg)?;
    let mut enc = EncodedProgram::new(cfg, true);
    enc.add_power_cones(cfg);
    for (j, s) in surrogates.iter().enumerate() {
        enc.add_quadratic_level(BlockRole::Qos(j), &s.rate, LinExpr::constant(cfg.qos_nats[j]))?;
        if cfg.eps_secrecy.is_finite() {
            enc.add_quadratic_level(BlockRole::SecrecyLevel(j), &s.wiretap, LinExpr::constant(cfg.eps_secrecy))?;
        }
    }
    enc.add_power_epigraph(cfg);
    encode_fractional_terms(&mut enc, fracs)?;
    Ok(enc)
}

/// Convex subproblem of the sum-secrecy-throughput loop.
pub fn encode_sum_secrecy_subproblem(surrogates: &[SecrecySurrogate], cfg: &SystemConfig) -> Result<EncodedProgram> {
    check_users(surrogates.len(), cfg)?;
    let mut enc = EncodedProgram::new(cfg, false);
    enc.add_power_cones(cfg);
    let w = enc.program.add_vars("w", cfg.users, false);
    for (j, s) in surrogates.iter().enumerate() {
        enc.add_quadratic_level(BlockRole::Qos(j), &s.secrecy, LinExpr::constant(cfg.qos_nats[j]))?;
        let q = &s.secrecy;
        let rows = enc.layout.quadratic_rows(q)?;
        enc.program.add_rotated_balanced(BlockRole::Objective(j), LinExpr::var(w + j, 1.0), rows, q.constant);
        enc.completions.push(Completion::Head { var: w + j, block: enc.program.blocks.len() - 1, row: 0 });
        let lin = enc.layout.linear_form(&q.linear);
        enc.program.add_objective(&lin.plus(&LinExpr::constant(q.constant)).with_term(w + j, -1.0));
    }
    Ok(enc)
}

/// `max τ` s.t. `Θ_{j,s}(V) ≥ τ r_j` and the power budgets.
pub fn encode_see_feasibility(surrogates: &[SecrecySurrogate], cfg: &SystemConfig) -> Result<EncodedProgram> {
    check_users(surrogates.len(), cfg)?;
    let mut enc = EncodedProgram::new(cfg, false);
    enc.add_power_cones(cfg);
    let tau = enc.add_tau();
    for (j, s) in surrogates.iter().enumerate() {
        enc.add_quadratic_level(BlockRole::Qos(j), &s.secrecy, LinExpr::var(tau, cfg.qos_nats[j]))?;
    }
    Ok(enc)
}

/// `max τ` s.t. `Θ_j(V) − r_j ≥ τ`, `ε − Θ_{j,e}(V) ≥ τ` and the power budgets.
pub fn encode_ee_feasibility(surrogates: &[SecrecySurrogate], cfg: &SystemConfig) -> Result<EncodedProgram> {
    check_users(surrogates.len(), cfg)?;
    let mut enc = EncodedProgram::new(cfg, false);
    enc.add_power_cones(cfg);
    let tau = enc.add_tau();
    for (j, s) in surrogates.iter().enumerate() {
        let level = LinExpr::var(tau, 1.0).plus(&LinExpr::constant(cfg.qos_nats[j]));
        enc.add_quadratic_level(BlockRole::Qos(j), &s.rate, level)?;
        if cfg.eps_secrecy.is_finite() {
            let cap = LinExpr::var(tau, -1.0).plus(&LinExpr::constant(cfg.eps_secrecy));
            enc.add_quadratic_level(BlockRole::SecrecyLevel(j), &s.wiretap, cap)?;
        }
    }
    Ok(enc)
}

fn check_users(got: usize, cfg: &SystemConfig) -> Result<()> {
    if got != cfg.users {
        return Err(Error::DimensionMismatch(format!("{got} surrogates for {} users", cfg.users)));
    }
    Ok(())
}
