//! Closed-form predictions: convergence rates, power-law exponents, the
//! one-dimensional sharpness map and its critical constants, and the
//! quadratic-case formulas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalized;
use crate::objectives::ipow;
use crate::optimizers::OptimizerParams;

pub use crate::normalized::beta2_critical;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateKind {
    LinearContraction,
    PowerLaw,
    SuperExponential,
    MomentumLimitedLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub kind: RateKind,
    /// Limit of `x_{t+1} / x_t` for the linear kinds.
    pub contraction: Option<f64>,
    /// Slope of `ln L` per step (linear kinds) or versus `ln t` (power laws).
    pub loss_log_slope: f64,
    /// `p` in `|x_t| ~ t^p` for the power-law kind.
    pub exponent: Option<f64>,
    pub formula: String,
    /// False when the preconditions of the prediction do not hold.
    pub applicable: bool,
}

fn check_degree(k: u32) -> Result<()> {
    if k % 2 != 0 || k < 2 {
        return Err(Error::InvalidDegree(k));
    }
    if k < 4 {
        return Err(Error::DegreeTooSmall { got: k, min: 4 });
    }
    Ok(())
}

/// Asymptotic rate of Adam/RMSProp near the stable non-trivial fixed point.
pub fn adam_contraction(params: &OptimizerParams, k: u32) -> Result<RatePrediction> {
    check_degree(k)?;
    let c = normalized::x_eigenvalue(params.beta2, k);
    let cond = normalized::stability_conditions(params.beta1, params.beta2, k);
    Ok(RatePrediction {
        kind: RateKind::LinearContraction,
        contraction: Some(c),
        loss_log_slope: k as f64 * c.ln(),
        exponent: None,
        formula: "x_rate = beta2^(1/(2(k-2))); loss slope = k ln(beta2)/(2(k-2))".into(),
        applicable: cond.primary && cond.lower,
    })
}

fn power_law(k: u32, formula: &str) -> Result<RatePrediction> {
    check_degree(k)?;
    let p = -1.0 / (k as f64 - 2.0);
    Ok(RatePrediction {
        kind: RateKind::PowerLaw,
        contraction: None,
        loss_log_slope: k as f64 * p,
        exponent: Some(p),
        formula: formula.into(),
        applicable: true,
    })
}

pub fn gd_power_law(k: u32) -> Result<RatePrediction> {
    power_law(k, "|x_t| ~ t^(-1/(k-2))")
}

/// Heavy-ball momentum: same exponent as gradient descent.
pub fn momentum_power_law(k: u32) -> Result<RatePrediction> {
    power_law(k, "|x_t| ~ t^(-1/(k-2)), momentum only rescales the constant")
}

/// Exact solution of the gradient flow `x' = -eta x^{k-1}`.
pub fn gd_flow_solution(x0: f64, eta: f64, k: u32, t: f64) -> f64 {
    let p = k as f64 - 2.0;
    x0.signum() * (x0.abs().powf(-p) + p * eta * t).powf(-1.0 / p)
}

/// Flow under the schedule `eta(t) = eta0 e^{alpha t}`: `x ~ C exp(-alpha t/(k-2))`.
pub fn exponential_schedule_rate(k: u32, alpha: f64) -> Result<RatePrediction> {
    check_degree(k)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("alpha must be positive, got {alpha}")));
    }
    let log_rate = -alpha / (k as f64 - 2.0);
    Ok(RatePrediction {
        kind: RateKind::LinearContraction,
        contraction: Some(log_rate.exp()),
        loss_log_slope: k as f64 * log_rate,
        exponent: None,
        formula: "x ~ C exp(-alpha t/(k-2)), C = ((k-2) eta0/alpha)^(-1/(k-2))".into(),
        applicable: true,
    })
}

/// The constant `C` of the exponential-schedule asymptote.
pub fn exponential_schedule_constant(k: u32, eta0: f64, alpha: f64) -> f64 {
    let p = k as f64 - 2.0;
    (p * eta0 / alpha).powf(-1.0 / p)
}

/// Exact solution of `x' = -eta0 e^{alpha t} x^{k-1}` for `k >= 4`.
pub fn exponential_schedule_solution(x0: f64, eta0: f64, alpha: f64, k: u32, t: f64) -> f64 {
    let p = k as f64 - 2.0;
    let growth = (alpha * t).exp_m1() / alpha;
    x0.signum() * (x0.abs().powf(-p) + p * eta0 * growth).powf(-1.0 / p)
}

/// Parameters of `u -> gamma u (1-u)^{k-2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessMapConfig {
    pub gamma: f64,
    pub k: u32,
    pub u0: f64,
}

impl SharpnessMapConfig {
    pub fn new(gamma: f64, k: u32, u0: f64) -> Result<Self> {
        check_degree(k)?;
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma must exceed 1, got {gamma}")));
        }
        if !u0.is_finite() {
            return Err(Error::InvalidParams("u0 must be finite".into()));
        }
        Ok(Self { gamma, k, u0 })
    }

    /// `1 - gamma^{-1/(k-2)}`
    pub fn fixed_point(&self) -> f64 {
        1.0 - self.gamma.powf(-1.0 / (self.k as f64 - 2.0))
    }

    /// Derivative of the map at its non-zero fixed point.
    pub fn fixed_point_derivative(&self) -> f64 {
        let kf = self.k as f64;
        let mu = self.gamma.powf(-1.0 / (kf - 2.0));
        (2.0 - kf) / mu + kf - 1.0
    }
}

pub fn sharpness_map_step(u: f64, cfg: &SharpnessMapConfig) -> f64 {
    cfg.gamma * u * ipow(1.0 - u, cfg.k - 2)
}

pub fn sharpness_map_derivative(u: f64, cfg: &SharpnessMapConfig) -> f64 {
    let kf = cfg.k as f64;
    cfg.gamma * ipow(1.0 - u, cfg.k - 3) * (1.0 - (kf - 1.0) * u)
}

/// `(k/(k-2))^{k-2}`
pub fn sharpness_critical_gamma(k: u32) -> f64 {
    let kf = k as f64;
    ipow(kf / (kf - 2.0), k - 2)
}

/// A value tagged with whether its preconditions hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tagged {
    pub value: f64,
    pub applicable: bool,
}

/// `(1 - beta2^{1/(2(k-2))}) / eta`, the limit of `lambda_t` for RMSProp.
///
/// Applicable when `beta2 > beta2_crit(k)`. Global convergence additionally
/// needs the initial sharpness `eta * lambda_0` below one.
pub fn rmsprop_lambda_star(params: &OptimizerParams, k: u32) -> Result<Tagged> {
    check_degree(k)?;
    let b = normalized::x_eigenvalue(params.beta2, k);
    Ok(Tagged {
        value: (1.0 - b) / params.eta,
        applicable: params.beta2 > beta2_critical(k),
    })
}

/// Limit of `v_t / v_{t-1}` under RMSProp.
pub fn v_ratio_limit(params: &OptimizerParams) -> f64 {
    params.beta2
}

/// Per-step growth of the effective learning rate for RMSProp, `1/sqrt(beta2)`.
pub fn rmsprop_gamma(beta2: f64) -> f64 {
    1.0 / beta2.sqrt()
}

/// `-ln(beta2)/2`, the continuous-time schedule exponent equivalent to RMSProp.
pub fn rmsprop_alpha(beta2: f64) -> f64 {
    -0.5 * beta2.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCase {
    /// Eigenvalue `1/sqrt(beta2)` of the normalized map along the line of
    /// fixed points `(1, 0, c)`; always above one.
    pub trivial_line_eigenvalue: f64,
    pub alpha: f64,
    /// `((1 - beta1) - alpha/2) / 2`, the decay rate of `ln|x|` per step.
    pub momentum_limited_slope: Option<f64>,
}

impl QuadraticCase {
    /// `x0 e^{eta0/alpha} exp(-(eta0/alpha) e^{alpha t})`
    pub fn super_exp_solution(&self, x0: f64, eta0: f64, t: f64) -> f64 {
        let r = eta0 / self.alpha;
        // exponent written as -r (e^{alpha t} - 1) to stay exact at t = 0
        x0 * (-r * (self.alpha * t).exp_m1()).exp()
    }
}

pub fn quadratic_case(params: &OptimizerParams, alpha: f64) -> Result<QuadraticCase> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("alpha must be positive, got {alpha}")));
    }
    let damping = 1.0 - params.beta1;
    Ok(QuadraticCase {
        trivial_line_eigenvalue: 1.0 / params.beta2.sqrt(),
        alpha,
        momentum_limited_slope: (damping > alpha).then(|| (damping - alpha / 2.0) / 2.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingBoundary {
    pub beta1: f64,
    pub beta2: f64,
    /// `beta2^{(k-1)/(2(k-2))}`; an exponential phase persists for `beta1` below it.
    pub persistence_bound: f64,
}

impl CouplingBoundary {
    pub fn exponential_phase_predicted(&self) -> bool {
        self.beta1 < self.persistence_bound
    }

    /// One step of `R_t = (beta2/rho_t) R_{t-1} + (1 - beta2)`.
    pub fn ratio_step(&self, previous: f64, rho: f64) -> f64 {
        self.beta2 / rho * previous + (1.0 - self.beta2)
    }

    /// Limit of the ratio under a constant gradient decay `rho`; `None` when
    /// `rho <= beta2` and the ratio grows without bound.
    pub fn coupled_limit(&self, rho: f64) -> Option<f64> {
        (rho > self.beta2).then(|| (1.0 - self.beta2) / (1.0 - self.beta2 / rho))
    }
}

pub fn coupling_boundary(params: &OptimizerParams, k: u32) -> Result<CouplingBoundary> {
    check_degree(k)?;
    Ok(CouplingBoundary {
        beta1: params.beta1,
        beta2: params.beta2,
        persistence_bound: normalized::existence_bound(params.beta2, k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn adam(b1: f64, b2: f64) -> OptimizerParams {
        OptimizerParams::adam(0.001, b1, b2)
    }

    #[test]
    fn adam_slopes() {
        let r = adam_contraction(&adam(0.9, 0.93), 4).unwrap();
        assert!(r.applicable);
        assert_relative_eq!(r.loss_log_slope, -0.0726, epsilon = 5e-5);
        assert_relative_eq!(adam_contraction(&adam(0.9, 0.93), 6).unwrap().loss_log_slope, -0.0544, epsilon = 5e-5);
        assert_relative_eq!(
            adam_contraction(&adam(0.9, 0.91), 4).unwrap().loss_log_slope,
            0.91f64.ln(),
            max_relative = 1e-14
        );
        assert!(!adam_contraction(&adam(0.9, 0.8), 4).unwrap().applicable);
    }

    #[test]
    fn power_laws() {
        assert_eq!(gd_power_law(4).unwrap().exponent, Some(-0.5));
        assert_eq!(gd_power_law(6).unwrap().exponent, Some(-0.25));
        assert_relative_eq!(momentum_power_law(8).unwrap().exponent.unwrap(), -1.0 / 6.0);
        assert!(gd_power_law(3).is_err());
        assert!(gd_power_law(2).is_err());
        assert_relative_eq!(gd_flow_solution(1.0, 1.0, 4, 10.0), 21f64.powf(-0.5), max_relative = 1e-15);
        assert_relative_eq!(gd_flow_solution(1.0, 1.0, 4, 10.0), 0.2182, epsilon = 1e-4);
    }

    #[test]
    fn schedule_rate() {
        let alpha = rmsprop_alpha(0.9);
        let r = exponential_schedule_rate(4, alpha).unwrap();
        assert_relative_eq!(-r.contraction.unwrap().ln(), 0.02634, epsilon = 1e-5);
        assert!(exponential_schedule_rate(4, 0.0).is_err());
        let small = exponential_schedule_rate(4, 1e-12).unwrap();
        assert!(1.0 - small.contraction.unwrap() < 1e-11);
        assert_eq!(exponential_schedule_solution(0.7, 0.01, 0.05, 4, 0.0), 0.7);
    }

    #[test]
    fn sharpness_map_values() {
        let cfg = SharpnessMapConfig::new(2.0, 4, 0.1).unwrap();
        assert_eq!(sharpness_map_step(0.0, &cfg), 0.0);
        assert_eq!(sharpness_map_step(1.0, &cfg), 0.0);
        let u = cfg.fixed_point();
        assert_relative_eq!(u, 0.29289, epsilon = 1e-5);
        assert_relative_eq!(sharpness_map_step(u, &cfg), u, max_relative = 1e-14);
        assert_relative_eq!(sharpness_map_derivative(u, &cfg), cfg.fixed_point_derivative(), max_relative = 1e-12);
        assert!(SharpnessMapConfig::new(1.0, 4, 0.1).is_err());
    }

    #[test]
    fn critical_constants() {
        assert_eq!(sharpness_critical_gamma(4), 4.0);
        assert_eq!(beta2_critical(4), 0.0625);
        assert_relative_eq!(sharpness_critical_gamma(6), 5.0625);
        assert_relative_eq!(beta2_critical(6), 0.039018, epsilon = 1e-6);
        for k in [4, 6, 8, 10] {
            assert_relative_eq!(beta2_critical(k), sharpness_critical_gamma(k).powi(-2), max_relative = 1e-14);
            let g = sharpness_critical_gamma(k);
            let at = |gamma| SharpnessMapConfig::new(gamma, k, 0.1).unwrap().fixed_point_derivative();
            assert!((at(g).abs() - 1.0).abs() < 1e-9);
            assert!(at(g * 0.99).abs() < 1.0);
            assert!(at(g * 1.01).abs() > 1.0);
        }
    }

    #[test]
    fn rmsprop_constants() {
        let p = OptimizerParams::rmsprop(0.01, 0.9);
        let l = rmsprop_lambda_star(&p, 4).unwrap();
        assert!(l.applicable);
        assert_relative_eq!(l.value, (1.0 - 0.9f64.powf(0.25)) / 0.01);
        assert_eq!(v_ratio_limit(&p), 0.9);
        assert!(!rmsprop_lambda_star(&OptimizerParams::rmsprop(0.01, 0.05), 4).unwrap().applicable);
    }

    #[test]
    fn quadratic_slope() {
        let p = adam(0.9, 0.99);
        let q = quadratic_case(&p, rmsprop_alpha(0.99)).unwrap();
        assert_relative_eq!(q.alpha, 0.005025, epsilon = 1e-6);
        assert_relative_eq!(q.momentum_limited_slope.unwrap(), 0.04874, epsilon = 1e-5);
        assert_eq!(q.super_exp_solution(1.3, 0.01, 0.0), 1.3);
        assert!(quadratic_case(&adam(0.99, 0.99), 0.05).unwrap().momentum_limited_slope.is_none());
        assert!(q.trivial_line_eigenvalue > 1.0);
    }

    #[test]
    fn coupling_recurrence() {
        let c = coupling_boundary(&adam(0.9, 0.895), 4).unwrap();
        assert_relative_eq!(c.persistence_bound, 0.895f64.powf(0.75), max_relative = 1e-14);
        assert_relative_eq!(c.persistence_bound, 0.9202, epsilon = 1e-4);
        assert!(c.exponential_phase_predicted());
        assert!(c.coupled_limit(0.895).is_none());
        assert_eq!(c.ratio_step(1.0, 0.895), 1.0 + (1.0 - 0.895));
        let rho = 0.95;
        let mut r = 1.0;
        for _ in 0..10_000 {
            r = c.ratio_step(r, rho);
        }
        assert_relative_eq!(r, c.coupled_limit(rho).unwrap(), max_relative = 1e-12);
    }
}
