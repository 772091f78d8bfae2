//! Adam in normalized coordinates.
//!
//! With `omega = m / x^{k-1}` and `lambda = x^{k-2} / sqrt(v)` the update
//! becomes `x' = (1 - eta*omega*lambda) x`, and `(omega, lambda)` evolve
//! through a map that depends on `x` only via an `x^2` term that vanishes as
//! `x -> 0`. The state carries `log|x|` and a sign instead of `x`, so orbits
//! can be followed far below the smallest representable double.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{ipow, Monomial};
use crate::optimizers::{self, OptimizerParams, OptimizerState, RunConfig, Sample};

/// Below this value of `2 log|x|` the `x^2` term is flushed to zero.
pub const X2_FLUSH_EXPONENT: f64 = -1400.0;

/// Default half-width of the band around each regime boundary, in units of `beta1`.
pub const DEFAULT_BOUNDARY_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedState {
    pub omega: f64,
    pub lambda: f64,
    pub log_abs_x: f64,
    /// +1 or -1.
    pub sign_x: f64,
}

impl NormalizedState {
    /// State on the `x -> 0` limit surface, where the `x^2` term is absent.
    pub fn at_origin_limit(omega: f64, lambda: f64) -> Self {
        Self {
            omega,
            lambda,
            log_abs_x: f64::NEG_INFINITY,
            sign_x: 1.0,
        }
    }

    pub fn x_squared(&self) -> f64 {
        let e = 2.0 * self.log_abs_x;
        if e < X2_FLUSH_EXPONENT {
            0.0
        } else {
            e.exp()
        }
    }

    /// `eta * omega * lambda`, the relative step `1 - x'/x`.
    pub fn relative_step(&self, eta: f64) -> f64 {
        eta * self.omega * self.lambda
    }

    pub fn log_loss(&self, k: u32) -> f64 {
        k as f64 * self.log_abs_x - (k as f64).ln()
    }
}

pub fn to_normalized(state: &OptimizerState, k: u32) -> Result<NormalizedState> {
    from_moments(state.x, state.m, state.v, k)
}

/// Normalizes a recorded sample `(x_t, m_t, v_t)`.
pub fn from_sample(sample: &Sample, k: u32) -> Result<NormalizedState> {
    from_moments(sample.x, sample.m, sample.v, k)
}

pub fn from_moments(x: f64, m: f64, v: f64, k: u32) -> Result<NormalizedState> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::NotNormalizable(format!("x must be finite and nonzero, got {x}")));
    }
    if !(v > 0.0) {
        return Err(Error::NotNormalizable(format!("v must be positive, got {v}")));
    }
    let omega = m / ipow(x, k - 1);
    let lambda = ipow(x, k - 2) / v.sqrt();
    if !omega.is_finite() || !lambda.is_finite() {
        return Err(Error::NotNormalizable("moments out of range for the given x".into()));
    }
    Ok(NormalizedState {
        omega,
        lambda,
        log_abs_x: x.abs().ln(),
        sign_x: x.signum(),
    })
}

/// Inverse of [`from_moments`]: returns `(x, m, v)`.
pub fn to_moments(state: &NormalizedState, k: u32) -> Result<(f64, f64, f64)> {
    let x = state.sign_x * state.log_abs_x.exp();
    if x == 0.0 || !x.is_finite() {
        return Err(Error::NotNormalizable("x not representable".into()));
    }
    if !(state.lambda > 0.0) {
        return Err(Error::NotNormalizable("lambda must be positive to recover v".into()));
    }
    let m = state.omega * ipow(x, k - 1);
    let root_v = ipow(x, k - 2) / state.lambda;
    Ok((x, m, root_v * root_v))
}

pub fn step_normalized(s: &NormalizedState, params: &OptimizerParams, k: u32) -> Result<NormalizedState> {
    let factor = 1.0 - s.relative_step(params.eta);
    if factor == 0.0 {
        return Err(Error::DegenerateStep);
    }
    let (omega, lambda) = sub_map(s.omega, s.lambda, s.x_squared(), params, k);
    let next = NormalizedState {
        omega,
        lambda,
        log_abs_x: s.log_abs_x + factor.abs().ln(),
        sign_x: if factor < 0.0 { -s.sign_x } else { s.sign_x },
    };
    if !next.omega.is_finite() || !next.lambda.is_finite() || next.log_abs_x.is_nan() {
        return Err(Error::Diverged);
    }
    Ok(next)
}

/// The `(omega, lambda)` part of the normalized map with `x^2` given.
pub fn sub_map(omega: f64, lambda: f64, x2: f64, params: &OptimizerParams, k: u32) -> (f64, f64) {
    let f = 1.0 - params.eta * omega * lambda;
    let next_omega = params.beta1 * omega / ipow(f, k - 1) + 1.0 - params.beta1;
    let f2k2 = ipow(f, 2 * k - 2);
    let denom = (params.beta2 + (1.0 - params.beta2) * f2k2 * lambda * lambda * x2).sqrt();
    let next_lambda = ipow(f, k - 2) * lambda / denom;
    (next_omega, next_lambda)
}

/// The full map in `(omega, lambda, x)` coordinates.
pub fn map_3d(state: [f64; 3], params: &OptimizerParams, k: u32) -> [f64; 3] {
    let [omega, lambda, x] = state;
    let (o, l) = sub_map(omega, lambda, x * x, params, k);
    [o, l, (1.0 - params.eta * omega * lambda) * x]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSample {
    pub t: u64,
    pub omega: f64,
    pub lambda: f64,
    pub log_abs_x: f64,
    pub sign_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizedTermination {
    MaxSteps,
    DegenerateStep,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTrajectory {
    pub degree: u32,
    pub params: OptimizerParams,
    pub samples: Vec<NormalizedSample>,
    pub termination: NormalizedTermination,
}

impl NormalizedTrajectory {
    /// `x_{t+1} / x_t` between the last two samples.
    pub fn tail_ratio(&self) -> Option<f64> {
        let n = self.samples.len();
        if n < 2 {
            return None;
        }
        let (a, b) = (&self.samples[n - 2], &self.samples[n - 1]);
        Some(a.sign_x * b.sign_x * (b.log_abs_x - a.log_abs_x).exp())
    }
}

/// Iterates [`step_normalized`] for `steps` steps, recording every state.
pub fn run_normalized(
    start: NormalizedState,
    params: &OptimizerParams,
    k: u32,
    steps: u64,
) -> NormalizedTrajectory {
    let mut samples = Vec::with_capacity(steps as usize + 1);
    let mut s = start;
    let mut termination = NormalizedTermination::MaxSteps;
    samples.push(NormalizedSample {
        t: 0,
        omega: s.omega,
        lambda: s.lambda,
        log_abs_x: s.log_abs_x,
        sign_x: s.sign_x,
    });
    for t in 1..=steps {
        match step_normalized(&s, params, k) {
            Ok(next) => s = next,
            Err(Error::DegenerateStep) => {
                termination = NormalizedTermination::DegenerateStep;
                break;
            }
            Err(_) => {
                termination = NormalizedTermination::Diverged;
                break;
            }
        }
        samples.push(NormalizedSample {
            t,
            omega: s.omega,
            lambda: s.lambda,
            log_abs_x: s.log_abs_x,
            sign_x: s.sign_x,
        });
    }
    NormalizedTrajectory {
        degree: k,
        params: *params,
        samples,
        termination,
    }
}

/// Normalized state at `t = 0` for a raw Adam/RMSProp configuration.
///
/// Requires `epsilon = 0` and no bias correction, the setting in which the
/// normalized map is exact.
pub fn initial_normalized(cfg: &RunConfig) -> Result<NormalizedState> {
    cfg.validate()?;
    if cfg.params.epsilon != 0.0 || cfg.params.bias_correction {
        return Err(Error::InvalidConfig(
            "normalized dynamics need epsilon = 0 and no bias correction".into(),
        ));
    }
    let k = cfg.objective.degree();
    let obj = &cfg.objective;
    let s = cfg.v0.initial_state(cfg.x0, obj);
    let g = obj.gradient(s.x);
    let beta1 = match cfg.method {
        optimizers::Method::Adam => cfg.params.beta1,
        optimizers::Method::RmsProp => 0.0,
        other => {
            return Err(Error::InvalidConfig(format!(
                "normalized dynamics only cover adam and rmsprop, not {other}"
            )))
        }
    };
    let m = beta1 * s.m + (1.0 - beta1) * g;
    let v = cfg.params.beta2 * s.v + (1.0 - cfg.params.beta2) * g * g;
    from_moments(s.x, m, v, k)
}

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedPointKind {
    TrivialLine,
    NonTrivial,
    Nonexistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeLabel {
    #[serde(rename = "RegimeI_Stable")]
    RegimeIStable,
    #[serde(rename = "RegimeII_UnstableFP")]
    RegimeIIUnstableFp,
    #[serde(rename = "RegimeIII_NoFP")]
    RegimeIIINoFp,
    BoundaryBand,
    LowerLeftException,
}

impl RegimeLabel {
    pub fn name(self) -> &'static str {
        match self {
            RegimeLabel::RegimeIStable => "RegimeI_Stable",
            RegimeLabel::RegimeIIUnstableFp => "RegimeII_UnstableFP",
            RegimeLabel::RegimeIIINoFp => "RegimeIII_NoFP",
            RegimeLabel::BoundaryBand => "BoundaryBand",
            RegimeLabel::LowerLeftException => "LowerLeftException",
        }
    }
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of the two analytic stability inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityConditions {
    /// `beta1 < beta2^{k/(2(k-2))}`
    pub primary: bool,
    /// `beta1 > lower_stability_bound(beta2, k)`
    pub lower: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub kind: FixedPointKind,
    pub omega_star: f64,
    pub lambda_star: f64,
    /// `1 - beta2^{1/(2(k-2))}`
    pub gamma: f64,
    pub jacobian: Mat2,
    pub spectral_radius: f64,
    pub x_eigenvalue: f64,
    pub stable: bool,
    pub regime: RegimeLabel,
    pub conditions: StabilityConditions,
    /// Numeric `r(J) < 1` and the analytic conditions disagree.
    pub disagreement: bool,
}

/// `beta2^{1/(2(k-2))}`, the asymptotic per-step contraction of `x`.
pub fn x_eigenvalue(beta2: f64, k: u32) -> f64 {
    beta2.powf(1.0 / (2.0 * (k as f64 - 2.0)))
}

/// `beta2^{(k-1)/(2(k-2))}`: the non-trivial fixed point exists iff `beta1` is below it.
pub fn existence_bound(beta2: f64, k: u32) -> f64 {
    ipow(x_eigenvalue(beta2, k), k - 1)
}

/// `beta2^{k/(2(k-2))}`: the primary stability bound on `beta1`.
pub fn primary_stability_bound(beta2: f64, k: u32) -> f64 {
    ipow(x_eigenvalue(beta2, k), k)
}

/// Lower stability bound on `beta1`; positive only for `beta2` below the
/// critical value `((k-2)/k)^{2(k-2)}`.
pub fn lower_stability_bound(beta2: f64, k: u32) -> f64 {
    let kf = k as f64;
    let b = x_eigenvalue(beta2, k);
    ((kf - 2.0) / b - kf) / ((kf - (kf - 2.0) * b) / ipow(b, k))
}

pub fn stability_conditions(beta1: f64, beta2: f64, k: u32) -> StabilityConditions {
    StabilityConditions {
        primary: beta1 < primary_stability_bound(beta2, k),
        lower: beta1 > lower_stability_bound(beta2, k),
    }
}

/// `(omega*, lambda*)` of the non-trivial fixed point, or `None` when it does
/// not exist (`beta1 >= beta2^{(k-1)/(2(k-2))}`).
pub fn fixed_point_location(params: &OptimizerParams, k: u32) -> Option<(f64, f64)> {
    if k < 4 || !(params.beta2 > 0.0) {
        return None;
    }
    let exist = existence_bound(params.beta2, k);
    if !(params.beta1 < exist) {
        return None;
    }
    let omega = (1.0 - params.beta1) / (1.0 - params.beta1 / exist);
    let lambda = (1.0 - x_eigenvalue(params.beta2, k)) / (params.eta * omega);
    Some((omega, lambda))
}

/// The closed-form Jacobian of the `(omega, lambda)` map at the non-trivial
/// fixed point, evaluated without checking existence.
pub fn jacobian_closed_form(params: &OptimizerParams, k: u32) -> Mat2 {
    let (b1, b2, eta) = (params.beta1, params.beta2, params.eta);
    let kf = k as f64;
    let b = x_eigenvalue(b2, k);
    let gamma = 1.0 - b;
    let sqrt_b2 = b2.sqrt();
    let b_neg_k = 1.0 / ipow(b, k);
    let b_1mk = 1.0 / ipow(b, k - 1);
    let b_km3 = ipow(b, k - 3);
    let coupling = 1.0 - b1 * b_1mk;
    let one_m_b1_sq = (1.0 - b1) * (1.0 - b1);

    let j11 = b1 * gamma * (kf - 1.0) * b_neg_k + b1 * b_1mk;
    let j12 = b1 * eta * one_m_b1_sq * (kf - 1.0) * b_neg_k / (coupling * coupling);
    let j21 = gamma * gamma * (2.0 - kf) * coupling * coupling * b_km3 / (sqrt_b2 * eta * one_m_b1_sq);
    let j22 = (gamma * (2.0 - kf) * b_km3 + sqrt_b2) / sqrt_b2;
    [[j11, j12], [j21, j22]]
}

pub fn jacobian_at_fixed_point(params: &OptimizerParams, k: u32) -> Result<Mat2> {
    if k < 4 {
        return Err(Error::DegreeTooSmall { got: k, min: 4 });
    }
    fixed_point_location(params, k).ok_or(Error::NonexistentFixedPoint)?;
    Ok(jacobian_closed_form(params, k))
}

/// Jacobian of the 3-D map on the trivial line `(1, 0, c)`. Eigenvalues are
/// `beta1`, `1/sqrt(beta2)` and 1, so the line is always unstable.
pub fn trivial_line_jacobian(params: &OptimizerParams, k: u32, c: f64) -> [[f64; 3]; 3] {
    [
        [params.beta1, (k as f64 - 1.0) * params.eta * params.beta1, 0.0],
        [0.0, 1.0 / params.beta2.sqrt(), 0.0],
        [0.0, -params.eta * c, 1.0],
    ]
}

/// Both eigenvalues of a 2x2 matrix from its trace and determinant.
pub fn eigenvalues_2x2(m: &Mat2) -> [Complex64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = if tr >= 0.0 { 0.5 * (tr + r) } else { 0.5 * (tr - r) };
        let small = if big != 0.0 { det / big } else { 0.5 * (tr - r) };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(0.5 * tr, im), Complex64::new(0.5 * tr, -im)]
    }
}

pub fn spectral_radius(m: &Mat2) -> f64 {
    let [a, b] = eigenvalues_2x2(m);
    a.norm().max(b.norm())
}

pub fn determinant(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Existence part: location and kind of the non-trivial fixed point.
pub fn nontrivial_fixed_point(params: &OptimizerParams, k: u32) -> FixedPointReport {
    stability_verdict_with(params, k, DEFAULT_BOUNDARY_DELTA)
}

pub fn stability_verdict(params: &OptimizerParams, k: u32) -> FixedPointReport {
    stability_verdict_with(params, k, DEFAULT_BOUNDARY_DELTA)
}

pub fn stability_verdict_with(params: &OptimizerParams, k: u32, boundary_delta: f64) -> FixedPointReport {
    let regime = classify_regime_theoretical(params, k, boundary_delta);
    if k < 4 {
        let jacobian = [
            [1.0, (k as f64 - 1.0) * params.eta * params.beta1],
            [0.0, 1.0 / params.beta2.sqrt()],
        ];
        return FixedPointReport {
            kind: FixedPointKind::TrivialLine,
            omega_star: 1.0,
            lambda_star: 0.0,
            gamma: f64::NAN,
            jacobian,
            spectral_radius: spectral_radius(&jacobian),
            x_eigenvalue: 1.0,
            stable: false,
            regime,
            conditions: StabilityConditions { primary: false, lower: false },
            disagreement: false,
        };
    }
    let conditions = stability_conditions(params.beta1, params.beta2, k);
    let b = x_eigenvalue(params.beta2, k);
    match fixed_point_location(params, k) {
        Some((omega_star, lambda_star)) => {
            let jacobian = jacobian_closed_form(params, k);
            let radius = spectral_radius(&jacobian);
            let numeric_stable = radius < 1.0;
            let analytic_stable = conditions.primary && conditions.lower;
            FixedPointReport {
                kind: FixedPointKind::NonTrivial,
                omega_star,
                lambda_star,
                gamma: 1.0 - b,
                jacobian,
                spectral_radius: radius,
                x_eigenvalue: b,
                stable: numeric_stable,
                regime,
                conditions,
                disagreement: numeric_stable != analytic_stable,
            }
        }
        None => FixedPointReport {
            kind: FixedPointKind::Nonexistent,
            omega_star: f64::NAN,
            lambda_star: f64::NAN,
            gamma: 1.0 - b,
            jacobian: [[f64::NAN; 2]; 2],
            spectral_radius: f64::NAN,
            x_eigenvalue: b,
            stable: false,
            regime,
            conditions,
            disagreement: conditions.primary && conditions.lower,
        },
    }
}

/// `((k-2)/k)^{2(k-2)}`; below it the lower stability bound is active.
pub fn beta2_critical(k: u32) -> f64 {
    let kf = k as f64;
    ipow((kf - 2.0) / kf, 2 * (k - 2))
}

/// Regime of `(beta1, beta2)` from the fixed-point structure.
///
/// Order of checks: a band around the lower bound, the lower-left exception
/// (`beta2 <= beta2_crit` with the lower bound violated), bands around the
/// primary and existence curves, then the three-way split.
pub fn classify_regime_theoretical(params: &OptimizerParams, k: u32, boundary_delta: f64) -> RegimeLabel {
    let (b1, b2) = (params.beta1, params.beta2);
    if k < 4 || !(b2 > 0.0) {
        return RegimeLabel::RegimeIIINoFp;
    }
    let critical = b2 <= beta2_critical(k);
    let lower = lower_stability_bound(b2, k);
    if critical && (b1 - lower).abs() < boundary_delta {
        return RegimeLabel::BoundaryBand;
    }
    if critical && b1 <= lower {
        return RegimeLabel::LowerLeftException;
    }
    let stab = primary_stability_bound(b2, k);
    let exist = existence_bound(b2, k);
    if (b1 - stab).abs() < boundary_delta || (b1 - exist).abs() < boundary_delta {
        return RegimeLabel::BoundaryBand;
    }
    if b1 >= exist {
        RegimeLabel::RegimeIIINoFp
    } else if b1 >= stab {
        RegimeLabel::RegimeIIUnstableFp
    } else {
        RegimeLabel::RegimeIStable
    }
}

/// Distance in `beta1` units from the nearest regime boundary.
pub fn boundary_distance(beta1: f64, beta2: f64, k: u32) -> f64 {
    let mut d = (beta1 - primary_stability_bound(beta2, k))
        .abs()
        .min((beta1 - existence_bound(beta2, k)).abs());
    if beta2 <= beta2_critical(k) {
        d = d.min((beta1 - lower_stability_bound(beta2, k)).abs());
    }
    d
}

/// Raw Adam state equivalent to a normalized one at step `t`.
pub fn to_optimizer_state(s: &NormalizedState, k: u32, t: u64) -> Result<OptimizerState> {
    let (x, m, v) = to_moments(s, k)?;
    Ok(OptimizerState { x, m, v, t })
}

/// Guard used by the raw runner's callers: the objective must be degenerate.
pub fn require_degenerate(objective: &Monomial) -> Result<()> {
    if objective.degree() < 4 {
        return Err(Error::DegreeTooSmall { got: objective.degree(), min: 4 });
    }
    Ok(())
}
