//! Concave quadratic minorants and convex quadratic majorants of the rate
//! functions, and the concave minorant of the secrecy-rate-over-power ratio.
//!
//! All bounds are built around an anchor `V̄` (and `t̄` for the ratio) and are
//! tight there. Quadratic forms are kept as lists of factors `F` acting on
//! one user's beamformer, so `⟨Fᴴ F, V_l V_lᴴ⟩ = ‖F V_l‖²` is PSD by
//! construction and maps directly onto second-order cones.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{fro_norm_sq, gram, identity, inv_pd, logdet_pd, psd_eigen, psd_eigen_scaled, psd_factor, psd_factor_scaled, re_inner, re_trace, CMat};
use crate::metrics;
use crate::model::{BeamformerSet, ChannelSet, SystemConfig};

/// Smallest admissible value of the linear part at the anchor.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

/// Whether the quadratic part is subtracted (concave minorant) or added
/// (convex majorant).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minorant,
    Majorant,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Minorant => -1.0,
            Sense::Majorant => 1.0,
        }
    }
}

/// `‖F V_user‖²`.
#[derive(Debug, Clone)]
pub struct QuadTerm {
    pub user: usize,
    pub factor: CMat,
}

/// `q(V) = a0 + Σ_l 2 Re⟨L_l, V_l⟩ ± Σ_k ‖F_k V_{l_k}‖²`.
#[derive(Debug, Clone)]
pub struct QuadraticSurrogate {
    pub constant: f64,
    pub linear: Vec<CMat>,
    pub quadratic: Vec<QuadTerm>,
    pub sense: Sense,
    pub anchor: BeamformerSet,
}

impl QuadraticSurrogate {
    /// The linear form `Σ_l 2 Re⟨L_l, V_l⟩`.
    pub fn linear_part(&self, v: &BeamformerSet) -> f64 {
        self.linear.iter().zip(&v.v).map(|(l, vl)| 2.0 * re_inner(l, vl)).sum()
    }

    /// The (non-negative) quadratic form `Σ_k ‖F_k V_{l_k}‖²`.
    pub fn quadratic_part(&self, v: &BeamformerSet) -> f64 {
        self.quadratic.iter().map(|q| fro_norm_sq(&(&q.factor * &v.v[q.user]))).sum()
    }

    pub fn value(&self, v: &BeamformerSet) -> f64 {
        self.constant + self.linear_part(v) + self.sense.sign() * self.quadratic_part(v)
    }

    /// Gradient with respect to the real and imaginary parts of every entry,
    /// packed as complex matrices (`∂/∂Re + i ∂/∂Im`).
    pub fn gradient(&self, v: &BeamformerSet) -> BeamformerSet {
        let mut g: Vec<CMat> = self.linear.iter().map(|l| l.scale(2.0)).collect();
        let sign = self.sense.sign();
        for q in &self.quadratic {
            let fv = &q.factor * &v.v[q.user];
            g[q.user] += (q.factor.adjoint() * fv).scale(2.0 * sign);
        }
        BeamformerSet { v: g }
    }

    /// `self − other` for a minorant `self` and a majorant `other`; the result
    /// is a minorant of the difference of the bounded functions.
    pub fn minus_majorant(&self, other: &QuadraticSurrogate) -> Result<QuadraticSurrogate> {
        if self.sense != Sense::Minorant || other.sense != Sense::Majorant {
            return Err(Error::NumericalFailure("minus_majorant needs a minorant and a majorant".into()));
        }
        let linear = self.linear.iter().zip(&other.linear).map(|(a, b)| a - b).collect();
        let mut quadratic = self.quadratic.clone();
        quadratic.extend(other.quadratic.iter().cloned());
        Ok(QuadraticSurrogate {
            constant: self.constant - other.constant,
            linear,
            quadratic,
            sense: Sense::Minorant,
            anchor: self.anchor.clone(),
        })
    }

    /// Aggregates the quadratic terms per user and refactors each aggregate
    /// `Q_l = Σ Fᴴ F` as `R_lᴴ R_l` with `R_l` of rank at most `N`.
    pub fn compressed_factors(&self) -> Result<Vec<CMat>> {
        let users = self.linear.len();
        let n = self.linear[0].nrows();
        let mut agg = vec![CMat::zeros(n, n); users];
        for q in &self.quadratic {
            agg[q.user] += q.factor.adjoint() * &q.factor;
        }
        agg.iter().map(|q| psd_factor(q, "aggregated quadratic form")).collect()
    }
}

/// Concave minorant `h(X) = a_l + 2 Re⟨X̄, X⟩/σ − ⟨C_l, X Xᴴ⟩` of
/// `f(X) = ln|I + X Xᴴ/σ|`.
#[derive(Debug, Clone)]
pub struct LogDetMinorant {
    pub anchor: CMat,
    pub sigma2: f64,
    pub constant: f64,
    /// `C_l = σ⁻¹ I − (σ I + X̄ X̄ᴴ)⁻¹ ⪰ 0`.
    pub curvature: CMat,
    pub factor: CMat,
}

impl LogDetMinorant {
    pub fn eval(&self, x: &CMat) -> f64 {
        self.constant + 2.0 * re_inner(&self.anchor, x) / self.sigma2 - fro_norm_sq(&(&self.factor * x))
    }
}

/// Convex majorant `g(X) = a_u + ⟨C_u, X Xᴴ⟩` of `f(X) = ln|I + X Xᴴ/σ|`.
#[derive(Debug, Clone)]
pub struct LogDetMajorant {
    pub constant: f64,
    /// `C_u = (I + X̄ X̄ᴴ/σ)⁻¹ / σ ≻ 0`.
    pub curvature: CMat,
    pub factor: CMat,
}

impl LogDetMajorant {
    pub fn eval(&self, x: &CMat) -> f64 {
        self.constant + fro_norm_sq(&(&self.factor * x))
    }
}

/// `ln|I + X Xᴴ/σ|`.
pub fn logdet_gram(x: &CMat, sigma2: f64) -> Result<f64> {
    logdet_pd(&(identity(x.nrows()) + gram(x).unscale(sigma2)), "I + XXᴴ/σ")
}

/// Quadratic bounds of `ln|I + X Xᴴ/σ|` tight at `X̄`.
///
/// The minorant is the first-order expansion of the jointly convex
/// `−ln|I − X Xᴴ (X Xᴴ + σI)⁻¹|`, the majorant the first-order expansion of
/// the concave map `X Xᴴ ↦ ln|I + X Xᴴ/σ|`.
pub fn logdet_bounds(xbar: &CMat, sigma2: f64) -> Result<(LogDetMinorant, LogDetMajorant)> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidValue { key: "sigma2".into(), reason: format!("must be positive, got {sigma2}") });
    }
    let m = xbar.nrows();
    let eye = identity(m);
    let xx = gram(xbar);
    let f_bar = logdet_gram(xbar, sigma2)?;

    let curv_l = eye.unscale(sigma2) - inv_pd(&(eye.scale(sigma2) + &xx), "σI + X̄X̄ᴴ")?;
    psd_eigen_scaled(&curv_l, 1.0 / sigma2, "minorant curvature")?;
    let lower = LogDetMinorant {
        anchor: xbar.clone(),
        sigma2,
        constant: f_bar - re_trace(&xx) / sigma2 - sigma2 * re_trace(&curv_l),
        factor: psd_factor_scaled(&curv_l, 1.0 / sigma2, "minorant curvature")?,
        curvature: curv_l,
    };

    let b_u = inv_pd(&(&eye + xx.unscale(sigma2)), "I + X̄X̄ᴴ/σ")?;
    let curv_u = b_u.unscale(sigma2);
    let upper = LogDetMajorant {
        constant: f_bar + re_trace(&b_u) - m as f64,
        factor: psd_factor(&curv_u, "majorant curvature")?,
        curvature: curv_u,
    };
    Ok((lower, upper))
}

/// Concave quadratic minorant `Θ_j` of user `j`'s rate at the anchor.
pub fn build_user_minorant(ch: &ChannelSet, anchor: &BeamformerSet, cfg: &SystemConfig, j: usize) -> Result<QuadraticSurrogate> {
    ch.check_dims(cfg)?;
    anchor.check_dims(cfg)?;
    let s2 = cfg.noise_var(j);
    let eye = identity(cfg.rx_antennas);
    let signal = &ch.user[j][j] * &anchor.v[j];
    let psi = metrics::user_interference(ch, anchor, j);
    let y = &psi + eye.scale(s2);
    let y_inv = inv_pd(&y, "user interference-plus-noise")?;
    let m_inv = inv_pd(&(&y + gram(&signal)), "user received covariance")?;
    let curvature = &y_inv - m_inv;
    psd_eigen_scaled(&curvature, 1.0 / s2, "user-rate curvature")?;
    let factor = psd_factor_scaled(&curvature, 1.0 / s2, "user-rate curvature")?;

    let f_bar = metrics::user_throughput(ch, anchor, cfg, j)?;
    let a = &y_inv * &signal;
    let constant = f_bar - re_inner(&signal, &a) - s2 * re_trace(&curvature);
    if constant > 1e-8 {
        warn!("user {j}: minorant constant {constant:e} is positive (expected negative)");
    }

    let mut linear = vec![CMat::zeros(cfg.tx_antennas, cfg.streams); cfg.users];
    linear[j] = ch.user[j][j].adjoint() * a;
    let quadratic = (0..cfg.users)
        .map(|l| QuadTerm { user: l, factor: &factor * &ch.user[l][j] })
        .collect();
    Ok(QuadraticSurrogate { constant, linear, quadratic, sense: Sense::Minorant, anchor: anchor.clone() })
}

/// Convex quadratic majorant `Θ_{j,e}` of the wiretap rate for user `j`.
pub fn build_eavesdropper_majorant(
    ch: &ChannelSet,
    anchor: &BeamformerSet,
    cfg: &SystemConfig,
    j: usize,
) -> Result<QuadraticSurrogate> {
    ch.check_dims(cfg)?;
    anchor.check_dims(cfg)?;
    let s2 = cfg.eve_noise_var();
    let eye = identity(cfg.eve_antennas);
    let psi = metrics::eve_interference(ch, anchor, j);
    let total = &psi + gram(&(&ch.eve[j] * &anchor.v[j]));

    // Majorant of ln|I + M/σ²| and minorant of ln|I + Ψ/σ²|.
    let b1 = inv_pd(&(&eye + total.unscale(s2)), "eavesdropper total covariance")?;
    let b2 = eye.unscale(s2) - inv_pd(&(eye.scale(s2) + &psi), "eavesdropper interference covariance")?;
    psd_eigen(&b1, "eavesdropper majorant curvature")?;
    psd_eigen_scaled(&b2, 1.0 / s2, "eavesdropper minorant curvature")?;
    let f1 = psd_factor(&b1.unscale(s2), "eavesdropper majorant curvature")?;
    let f2 = psd_factor_scaled(&b2, 1.0 / s2, "eavesdropper minorant curvature")?;

    let f_bar = metrics::eavesdropper_throughput(ch, anchor, cfg, j)?;
    let constant = f_bar + re_trace(&b1) - cfg.eve_antennas as f64 + re_trace(&psi) / s2 + s2 * re_trace(&b2);

    let mut linear = Vec::with_capacity(cfg.users);
    let mut quadratic = Vec::new();
    for l in 0..cfg.users {
        let h = &ch.eve[l];
        quadratic.push(QuadTerm { user: l, factor: &f1 * h });
        if l == j {
            linear.push(CMat::zeros(cfg.tx_antennas, cfg.streams));
        } else {
            linear.push((h.adjoint() * (h * &anchor.v[l])).unscale(-s2));
            if f2.nrows() > 0 {
                quadratic.push(QuadTerm { user: l, factor: &f2 * h });
            }
        }
    }
    Ok(QuadraticSurrogate { constant, linear, quadratic, sense: Sense::Majorant, anchor: anchor.clone() })
}

/// The three surrogates of one user at one anchor.
#[derive(Debug, Clone)]
pub struct SecrecySurrogate {
    pub user: usize,
    /// `Θ_j`, minorant of the user rate.
    pub rate: QuadraticSurrogate,
    /// `Θ_{j,e}`, majorant of the wiretap rate.
    pub wiretap: QuadraticSurrogate,
    /// `Θ_{j,s} = Θ_j − Θ_{j,e}`, minorant of the secrecy rate.
    pub secrecy: QuadraticSurrogate,
}

pub fn build_secrecy_minorant(ch: &ChannelSet, anchor: &BeamformerSet, cfg: &SystemConfig, j: usize) -> Result<SecrecySurrogate> {
    let rate = build_user_minorant(ch, anchor, cfg, j)?;
    let wiretap = build_eavesdropper_majorant(ch, anchor, cfg, j)?;
    let secrecy = rate.minus_majorant(&wiretap)?;
    Ok(SecrecySurrogate { user: j, rate, wiretap, secrecy })
}

/// How the constant `a/t` of the ratio is bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantCase {
    /// `a < 0`: `a/t` is already concave.
    Negative,
    /// `a > 0`: replaced by its tangent `a (2/t̄ − t/t̄²)`.
    Positive,
    /// `a = 0`: identically zero.
    Zero,
}

/// Concave minorant of `q(V)/t` for a concave quadratic minorant
/// `q = a + 𝒜(V) − ℬ(V)`:
///
/// `g(V, t) = a(t) + 2b √𝒜(V) − c t − ℬ(V)/t`, with `b = √𝒜(V̄)/t̄` and
/// `c = 𝒜(V̄)/t̄²`, from `x/t ≥ 2√x̄ √x / t̄ − x̄ t / t̄²`.
#[derive(Debug, Clone)]
pub struct FractionalSurrogate {
    pub base: QuadraticSurrogate,
    pub anchor_t: f64,
    pub case: ConstantCase,
    pub b: f64,
    pub c: f64,
    /// `𝒜(V̄)`.
    pub anchor_linear: f64,
}

impl FractionalSurrogate {
    pub fn constant(&self) -> f64 {
        self.base.constant
    }

    /// `a(t)`.
    pub fn constant_term(&self, t: f64) -> f64 {
        let a = self.base.constant;
        match self.case {
            ConstantCase::Negative => a / t,
            ConstantCase::Positive => a * (2.0 / self.anchor_t - t / (self.anchor_t * self.anchor_t)),
            ConstantCase::Zero => 0.0,
        }
    }

    fn constant_term_dt(&self, t: f64) -> f64 {
        let a = self.base.constant;
        match self.case {
            ConstantCase::Negative => -a / (t * t),
            ConstantCase::Positive => -a / (self.anchor_t * self.anchor_t),
            ConstantCase::Zero => 0.0,
        }
    }

    /// `φ(V, t) = 2b √𝒜(V) − c t`; `−∞` outside the trust region `𝒜(V) ≥ 0`.
    pub fn phi(&self, v: &BeamformerSet, t: f64) -> f64 {
        let lin = self.base.linear_part(v);
        if lin < 0.0 {
            return f64::NEG_INFINITY;
        }
        2.0 * self.b * lin.sqrt() - self.c * t
    }

    pub fn value(&self, v: &BeamformerSet, t: f64) -> f64 {
        self.constant_term(t) + self.phi(v, t) - self.base.quadratic_part(v) / t
    }

    /// Gradient in `V` (packed as in [`QuadraticSurrogate::gradient`]) and `t`.
    pub fn gradient(&self, v: &BeamformerSet, t: f64) -> (BeamformerSet, f64) {
        let lin = self.base.linear_part(v);
        let quad = self.base.quadratic_part(v);
        let sqrt_coef = self.b / lin.sqrt();
        let mut g: Vec<CMat> = self.base.linear.iter().map(|l| l.scale(2.0 * sqrt_coef)).collect();
        for q in &self.base.quadratic {
            let fv = &q.factor * &v.v[q.user];
            g[q.user] -= (q.factor.adjoint() * fv).scale(2.0 / t);
        }
        let dt = self.constant_term_dt(t) - self.c + quad / (t * t);
        (BeamformerSet { v: g }, dt)
    }
}

/// Builds `g^{(κ)}` around `(V̄, t̄)` from a concave quadratic minorant.
pub fn build_fractional_minorant(base: &QuadraticSurrogate, anchor_t: f64, user: usize) -> Result<FractionalSurrogate> {
    if base.sense != Sense::Minorant {
        return Err(Error::NumericalFailure("fractional minorant needs a concave base".into()));
    }
    if !(anchor_t > 0.0 && anchor_t.is_finite()) {
        return Err(Error::InvalidValue { key: "t".into(), reason: format!("anchor must be positive, got {anchor_t}") });
    }
    let x_bar = base.linear_part(&base.anchor);
    if !(x_bar > DEGENERATE_FLOOR) {
        return Err(Error::DegenerateAnchor { user, value: x_bar });
    }
    let b = x_bar.sqrt() / anchor_t;
    let c = b * b;
    let a = base.constant;
    let case = if a < 0.0 {
        ConstantCase::Negative
    } else if a > 0.0 {
        ConstantCase::Positive
    } else {
        ConstantCase::Zero
    };
    Ok(FractionalSurrogate { base: base.clone(), anchor_t, case, b, c, anchor_linear: x_bar })
}
