//! Reference steppers for GD, heavy-ball momentum, RMSProp and Adam, and the
//! trajectory runner that records their raw floating-point state.
//!
//! A state holds `x_t` together with the moments `m_{t-1}`, `v_{t-1}`. One
//! step evaluates `g_t`, forms `m_t`, `v_t` and moves to `x_{t+1}`. The
//! recorded sample for index `t` pairs `x_t` with `g_t`, `m_t`, `v_t`, so that
//! `m_t / x_t^{k-1}` and `x_t^{k-2} / sqrt(v_t)` are the normalized variables
//! at the same index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{Coupled2D, Monomial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Momentum,
    #[serde(rename = "rmsprop")]
    RmsProp,
    Adam,
}

impl Method {
    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::RmsProp | Method::Adam)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Momentum => "momentum",
            Method::RmsProp => "rmsprop",
            Method::Adam => "adam",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Method::Gd),
            "momentum" => Ok(Method::Momentum),
            "rmsprop" => Ok(Method::RmsProp),
            "adam" => Ok(Method::Adam),
            other => Err(Error::InvalidConfig(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Hyperparameters of one optimizer configuration.
///
/// Momentum reads its coefficient from `beta1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub bias_correction: bool,
}

impl OptimizerParams {
    /// Adam with `epsilon = 0` and no bias correction.
    pub fn adam(eta: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            eta,
            beta1,
            beta2,
            epsilon: 0.0,
            bias_correction: false,
        }
    }

    pub fn rmsprop(eta: f64, beta2: f64) -> Self {
        Self::adam(eta, 0.0, beta2)
    }

    pub fn gd(eta: f64) -> Self {
        Self::adam(eta, 0.0, 0.0)
    }

    pub fn momentum(eta: f64, beta: f64) -> Self {
        Self::adam(eta, beta, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParams(format!("eta must be > 0, got {}", self.eta)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParams(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// `x_t` plus the moments accumulated through step `t - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub x: f64,
    pub m: f64,
    pub v: f64,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(x: f64) -> Self {
        Self { x, m: 0.0, v: 0.0, t: 0 }
    }
}

/// How the second moment is initialized before the first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum V0Policy {
    /// `v_{-1} = 0`, hence `v_0 = (1 - beta2) g_0^2`.
    ZeroThenFirstGrad,
    /// `v_0 = g_0^2`, so the coupling ratio starts at exactly 1.
    SeedWithG0Sq,
    /// `v_{-1}` set to the given value.
    Explicit(f64),
}

impl Default for V0Policy {
    fn default() -> Self {
        V0Policy::ZeroThenFirstGrad
    }
}

impl V0Policy {
    /// Prior second moment `v_{-1}` for a start at `x0`.
    pub fn prior_v(&self, x0: f64, objective: &Monomial) -> f64 {
        match *self {
            V0Policy::ZeroThenFirstGrad => 0.0,
            V0Policy::SeedWithG0Sq => {
                let g = objective.gradient(x0);
                g * g
            }
            V0Policy::Explicit(v) => v,
        }
    }

    pub fn initial_state(&self, x0: f64, objective: &Monomial) -> OptimizerState {
        OptimizerState {
            x: x0,
            m: 0.0,
            v: self.prior_v(x0, objective),
            t: 0,
        }
    }
}

impl fmt::Display for V0Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            V0Policy::ZeroThenFirstGrad => f.write_str("zero"),
            V0Policy::SeedWithG0Sq => f.write_str("g0sq"),
            V0Policy::Explicit(v) => write!(f, "{v:e}"),
        }
    }
}

impl FromStr for V0Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(V0Policy::ZeroThenFirstGrad),
            "g0sq" => Ok(V0Policy::SeedWithG0Sq),
            other => {
                let v: f64 = other.parse().map_err(|_| {
                    Error::InvalidConfig(format!("v0 must be zero, g0sq or a number, got `{other}`"))
                })?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidConfig(format!("explicit v0 must be >= 0, got {v}")));
                }
                Ok(V0Policy::Explicit(v))
            }
        }
    }
}

impl Serialize for V0Policy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for V0Policy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Why an adaptive step could not produce a finite iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepHazard {
    /// `sqrt(v_hat) + eps == 0` while the numerator is nonzero.
    DivisionHazard,
    Diverged,
}

pub fn step_gd(state: &OptimizerState, params: &OptimizerParams, objective: &Monomial) -> OptimizerState {
    OptimizerState {
        x: state.x - params.eta * objective.gradient(state.x),
        t: state.t + 1,
        ..*state
    }
}

pub fn step_momentum(
    state: &OptimizerState,
    params: &OptimizerParams,
    objective: &Monomial,
) -> OptimizerState {
    let m = params.beta1 * state.m + objective.gradient(state.x);
    OptimizerState {
        x: state.x - params.eta * m,
        m,
        v: state.v,
        t: state.t + 1,
    }
}

pub fn step_adam(
    state: &OptimizerState,
    params: &OptimizerParams,
    objective: &Monomial,
) -> std::result::Result<OptimizerState, StepHazard> {
    adam_update(state, objective.gradient(state.x), params)
}

/// One Adam step given the gradient `g` at `state.x`.
pub fn adam_update(
    state: &OptimizerState,
    g: f64,
    params: &OptimizerParams,
) -> std::result::Result<OptimizerState, StepHazard> {
    let m = params.beta1 * state.m + (1.0 - params.beta1) * g;
    let v = params.beta2 * state.v + (1.0 - params.beta2) * g * g;
    let (m_hat, v_hat) = if params.bias_correction {
        // step counter is 1-based inside the correction terms
        let n = (state.t + 1).min(i32::MAX as u64) as i32;
        (m / (1.0 - params.beta1.powi(n)), v / (1.0 - params.beta2.powi(n)))
    } else {
        (m, v)
    };
    let denom = v_hat.sqrt() + params.epsilon;
    let x = if denom == 0.0 {
        if m_hat != 0.0 {
            return Err(StepHazard::DivisionHazard);
        }
        state.x
    } else {
        state.x - params.eta * m_hat / denom
    };
    if !x.is_finite() || !m.is_finite() || !v.is_finite() {
        return Err(StepHazard::Diverged);
    }
    Ok(OptimizerState { x, m, v, t: state.t + 1 })
}

/// Adam with `beta1 = 0` and no bias correction, written out directly.
pub fn step_rmsprop(
    state: &OptimizerState,
    params: &OptimizerParams,
    objective: &Monomial,
) -> std::result::Result<OptimizerState, StepHazard> {
    let g = objective.gradient(state.x);
    let v = params.beta2 * state.v + (1.0 - params.beta2) * g * g;
    let denom = v.sqrt() + params.epsilon;
    let x = if denom == 0.0 {
        if g != 0.0 {
            return Err(StepHazard::DivisionHazard);
        }
        state.x
    } else {
        state.x - params.eta * g / denom
    };
    if !x.is_finite() || !v.is_finite() {
        return Err(StepHazard::Diverged);
    }
    Ok(OptimizerState { x, m: g, v, t: state.t + 1 })
}

pub fn step(
    method: Method,
    state: &OptimizerState,
    params: &OptimizerParams,
    objective: &Monomial,
) -> std::result::Result<OptimizerState, StepHazard> {
    let next = match method {
        Method::Gd => step_gd(state, params, objective),
        Method::Momentum => step_momentum(state, params, objective),
        Method::RmsProp => return step_rmsprop(state, params, objective),
        Method::Adam => return step_adam(state, params, objective),
    };
    if next.x.is_finite() && next.m.is_finite() {
        Ok(next)
    } else {
        Err(StepHazard::Diverged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxSteps,
    Converged,
    Underflow,
    Diverged,
    DivisionHazard,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::MaxSteps => "MaxSteps",
            Termination::Converged => "Converged",
            Termination::Underflow => "Underflow",
            Termination::Diverged => "Diverged",
            Termination::DivisionHazard => "DivisionHazard",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "MaxSteps" => Termination::MaxSteps,
            "Converged" => Termination::Converged,
            "Underflow" => Termination::Underflow,
            "Diverged" => Termination::Diverged,
            "DivisionHazard" => Termination::DivisionHazard,
            other => return Err(Error::InvalidConfig(format!("unknown termination `{other}`"))),
        })
    }
}

/// Termination thresholds and the recording policy of [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Loss below this is declared converged.
    pub loss_floor: f64,
    /// `|x|` above this is declared diverged.
    pub divergence_bound: f64,
    /// Runs longer than this are recorded with a stride.
    pub full_record_limit: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            loss_floor: 1e-280,
            divergence_bound: 1e12,
            full_record_limit: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: u64,
    pub x: f64,
    pub loss: f64,
    pub grad: f64,
    pub m: f64,
    pub v: f64,
    pub log_abs_x: f64,
}

impl Sample {
    /// `omega_t * lambda_t = m_t / (x_t sqrt(v_t))`; a step lowers the loss
    /// iff this lies in `[0, 2 / eta]`.
    pub fn stability_metric(&self) -> f64 {
        self.m / (self.x * self.v.sqrt())
    }

    /// `R_t = v_t / g_t^2`, or `None` at a zero gradient.
    pub fn coupling_ratio(&self) -> Option<f64> {
        let g2 = self.grad * self.grad;
        (g2 > 0.0).then(|| self.v / g2)
    }
}

/// Natural log of `|x|`, `-inf` at exactly zero.
#[inline]
pub fn log_abs(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        x.abs().ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub params: OptimizerParams,
    pub objective: Monomial,
    pub x0: f64,
    pub v0: V0Policy,
    pub max_steps: u64,
    pub stop: StopRule,
}

impl RunConfig {
    pub fn new(method: Method, params: OptimizerParams, objective: Monomial, x0: f64, max_steps: u64) -> Self {
        Self {
            method,
            params,
            objective,
            x0,
            v0: V0Policy::default(),
            max_steps,
            stop: StopRule::default(),
        }
    }

    pub fn with_v0(mut self, v0: V0Policy) -> Self {
        self.v0 = v0;
        self
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.max_steps < 1 {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        if !self.x0.is_finite() {
            return Err(Error::InvalidInitialization(format!("x0 must be finite, got {}", self.x0)));
        }
        if self.method.is_adaptive() && self.params.epsilon == 0.0 {
            let prior = self.v0.prior_v(self.x0, &self.objective);
            let g0 = self.objective.gradient(self.x0);
            if prior == 0.0 && g0 == 0.0 {
                return Err(Error::InvalidInitialization(
                    "epsilon = 0 with v0 = 0 and zero initial gradient leaves the step undefined".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: RunConfig,
    pub samples: Vec<Sample>,
    pub termination: Termination,
    /// State after the last executed step.
    pub final_state: OptimizerState,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds at least one sample")
    }

    pub fn min_loss(&self) -> f64 {
        self.samples.iter().map(|s| s.loss).fold(f64::INFINITY, f64::min)
    }

    pub fn final_loss(&self) -> f64 {
        self.last().loss
    }
}

/// Keeps every sample up to a limit; beyond it keeps the first, the lowest
/// and the highest loss of each stride window.
struct Recorder {
    stride: u64,
    samples: Vec<Sample>,
    window: Vec<Sample>,
}

impl Recorder {
    fn new(max_steps: u64, full_limit: u64) -> Self {
        let stride = if max_steps > full_limit {
            max_steps.div_ceil(full_limit.max(1))
        } else {
            1
        };
        let cap = if stride == 1 { max_steps as usize } else { 3 * full_limit as usize + 3 };
        Self {
            stride,
            samples: Vec::with_capacity(cap.min(1 << 22)),
            window: Vec::new(),
        }
    }

    fn push(&mut self, s: Sample) {
        if self.stride == 1 {
            self.samples.push(s);
            return;
        }
        if s.t % self.stride == 0 {
            self.flush();
        }
        self.window.push(s);
    }

    fn flush(&mut self) {
        if self.window.is_empty() {
            return;
        }
        let first = 0;
        let mut lo = 0;
        let mut hi = 0;
        for (i, s) in self.window.iter().enumerate() {
            if s.loss < self.window[lo].loss {
                lo = i;
            }
            if s.loss > self.window[hi].loss {
                hi = i;
            }
        }
        let last = self.window.len() - 1;
        let mut keep = [first, lo, hi, last];
        keep.sort_unstable();
        let mut prev = usize::MAX;
        for i in keep {
            if i != prev {
                self.samples.push(self.window[i]);
                prev = i;
            }
        }
        self.window.clear();
    }

    fn finish(mut self) -> Vec<Sample> {
        self.flush();
        self.samples
    }
}

fn make_sample(t: u64, x: f64, m: f64, v: f64, objective: &Monomial) -> Sample {
    Sample {
        t,
        x,
        loss: objective.value(x),
        grad: objective.gradient(x),
        m,
        v,
        log_abs_x: log_abs(x),
    }
}

/// Iterates the selected stepper from `x0`, recording samples and applying the
/// termination rules of `cfg.stop`.
pub fn run(cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let objective = &cfg.objective;
    let stop = &cfg.stop;
    let hazard_checks = cfg.method.is_adaptive() && cfg.params.epsilon == 0.0;
    let mut recorder = Recorder::new(cfg.max_steps, stop.full_record_limit);
    let mut state = cfg.v0.initial_state(cfg.x0, objective);
    let mut termination = Termination::MaxSteps;

    for _ in 0..cfg.max_steps {
        let next = match step(cfg.method, &state, &cfg.params, objective) {
            Ok(next) => next,
            Err(hazard) => {
                // moments at t are still well defined, record them before stopping
                let g = objective.gradient(state.x);
                let (m, v) = match cfg.method {
                    Method::Adam => (
                        cfg.params.beta1 * state.m + (1.0 - cfg.params.beta1) * g,
                        cfg.params.beta2 * state.v + (1.0 - cfg.params.beta2) * g * g,
                    ),
                    Method::RmsProp => (g, cfg.params.beta2 * state.v + (1.0 - cfg.params.beta2) * g * g),
                    Method::Momentum => (cfg.params.beta1 * state.m + g, state.v),
                    Method::Gd => (state.m, state.v),
                };
                recorder.push(make_sample(state.t, state.x, m, v, objective));
                termination = match hazard {
                    StepHazard::DivisionHazard => Termination::DivisionHazard,
                    StepHazard::Diverged => Termination::Diverged,
                };
                break;
            }
        };
        let sample = make_sample(state.t, state.x, next.m, next.v, objective);
        let loss = sample.loss;
        recorder.push(sample);
        if !loss.is_finite() || !sample.grad.is_finite() {
            termination = Termination::Diverged;
            state = next;
            break;
        }
        if loss < stop.loss_floor {
            termination = Termination::Converged;
            state = next;
            break;
        }
        if next.x.abs() > stop.divergence_bound {
            // the out-of-bounds iterate itself is recorded as the last sample
            recorder.push(make_sample(next.t, next.x, next.m, next.v, objective));
            termination = Termination::Diverged;
            state = next;
            break;
        }
        if hazard_checks && next.v < f64::MIN_POSITIVE {
            termination = if next.v == 0.0 && next.x != 0.0 {
                Termination::DivisionHazard
            } else {
                Termination::Underflow
            };
            state = next;
            break;
        }
        state = next;
    }

    Ok(Trajectory {
        config: *cfg,
        samples: recorder.finish(),
        termination,
        final_state: state,
    })
}

/// One recorded point of a coordinate-wise run on a [`Coupled2D`] objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample2D {
    pub t: u64,
    pub x: f64,
    pub y: f64,
    pub loss: f64,
}

/// Runs `method` coordinate-wise on a 2-D objective with `v_{-1} = m_{-1} = 0`.
///
/// Stops early on a non-finite iterate or when the loss reaches zero.
pub fn run_2d(
    method: Method,
    params: &OptimizerParams,
    objective: &Coupled2D,
    start: [f64; 2],
    steps: u64,
) -> Result<Vec<Sample2D>> {
    params.validate()?;
    let mut p = start;
    let mut m = [0.0f64; 2];
    let mut v = [0.0f64; 2];
    let mut out = Vec::with_capacity(steps as usize + 1);
    for t in 0..=steps {
        let loss = objective.value(p);
        out.push(Sample2D { t, x: p[0], y: p[1], loss });
        if t == steps || !loss.is_finite() || loss == 0.0 {
            break;
        }
        let g = objective.gradient(p);
        for i in 0..2 {
            let delta = match method {
                Method::Gd => g[i],
                Method::Momentum => {
                    m[i] = params.beta1 * m[i] + g[i];
                    m[i]
                }
                Method::RmsProp | Method::Adam => {
                    let b1 = if method == Method::Adam { params.beta1 } else { 0.0 };
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * g[i] * g[i];
                    let denom = v[i].sqrt() + params.epsilon;
                    if denom == 0.0 {
                        0.0
                    } else {
                        m[i] / denom
                    }
                }
            };
            p[i] -= params.eta * delta;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quartic() -> Monomial {
        Monomial::new(4).unwrap()
    }

    #[test]
    fn gd_steps() {
        let p = OptimizerParams::gd(0.1);
        let s = step_gd(&OptimizerState::new(1.0), &p, &quartic());
        assert_relative_eq!(s.x, 0.9);
        assert_eq!(s.t, 1);
        assert_eq!(step_gd(&OptimizerState::new(0.0), &p, &quartic()).x, 0.0);
        let s = step_gd(&OptimizerState::new(1.0), &OptimizerParams::gd(2.5), &quartic());
        assert_relative_eq!(s.x, -1.5);
    }

    #[test]
    fn momentum_two_steps() {
        let p = OptimizerParams::momentum(0.1, 0.9);
        let s1 = step_momentum(&OptimizerState::new(1.0), &p, &quartic());
        assert_relative_eq!(s1.m, 1.0);
        assert_relative_eq!(s1.x, 0.9);
        let s2 = step_momentum(&s1, &p, &quartic());
        assert_relative_eq!(s2.m, 1.629, epsilon = 1e-12);
        assert_relative_eq!(s2.x, 0.7371, epsilon = 1e-12);
        let z = step_momentum(&OptimizerState::new(0.0), &p, &quartic());
        assert_eq!((z.x, z.m), (0.0, 0.0));
    }

    #[test]
    fn adam_first_uncorrected_step() {
        let p = OptimizerParams::adam(0.01, 0.9, 0.99);
        let s = step_adam(&OptimizerState::new(1.0), &p, &quartic()).unwrap();
        assert_relative_eq!(s.m, 0.1, epsilon = 1e-15);
        assert_relative_eq!(s.v, 0.01, epsilon = 1e-15);
        assert_relative_eq!(s.x, 1.0 - 0.01, epsilon = 1e-14);
    }

    #[test]
    fn adam_sign_gd_limit() {
        let p = OptimizerParams::adam(0.05, 0.0, 0.0);
        for x0 in [0.3, -0.7, 1.9, -1e-3] {
            let obj = quartic();
            let s0 = V0Policy::SeedWithG0Sq.initial_state(x0, &obj);
            let s1 = step_adam(&s0, &p, &obj).unwrap();
            assert_eq!(s1.x, x0 - 0.05 * f64::signum(x0));
        }
    }

    #[test]
    fn adam_stationary_at_origin() {
        let p = OptimizerParams::adam(0.01, 0.9, 0.99);
        let s = OptimizerState { x: 0.0, m: 0.0, v: 0.5, t: 3 };
        assert_eq!(step_adam(&s, &p, &quartic()).unwrap().x, 0.0);
        assert_eq!(step_rmsprop(&s, &p, &quartic()).unwrap().x, 0.0);
    }

    #[test]
    fn adam_division_hazard() {
        let p = OptimizerParams::adam(0.01, 0.9, 0.99);
        // m carried from the past but v is exactly zero and gradient is zero
        let s = OptimizerState { x: 0.0, m: 1.0, v: 0.0, t: 3 };
        assert_eq!(step_adam(&s, &p, &quartic()), Err(StepHazard::DivisionHazard));
    }

    #[test]
    fn rmsprop_first_step() {
        let p = OptimizerParams::rmsprop(0.01, 0.9);
        let s = step_rmsprop(&OptimizerState::new(1.0), &p, &quartic()).unwrap();
        assert_relative_eq!(s.v, 0.1, epsilon = 1e-15);
        assert_relative_eq!(s.x, 0.968377223398316, epsilon = 1e-12);
    }

    #[test]
    fn bias_correction_first_step_is_sign_like() {
        let p = OptimizerParams {
            bias_correction: true,
            ..OptimizerParams::adam(0.01, 0.9, 0.999)
        };
        let s = step_adam(&OptimizerState::new(0.5), &p, &quartic()).unwrap();
        assert_relative_eq!(s.x, 0.49, epsilon = 1e-12);
    }

    #[test]
    fn v0_policy_parsing() {
        assert_eq!("zero".parse::<V0Policy>().unwrap(), V0Policy::ZeroThenFirstGrad);
        assert_eq!("g0sq".parse::<V0Policy>().unwrap(), V0Policy::SeedWithG0Sq);
        assert_eq!("0.5".parse::<V0Policy>().unwrap(), V0Policy::Explicit(0.5));
        assert!("-1".parse::<V0Policy>().is_err());
        assert!("bogus".parse::<V0Policy>().is_err());
    }

    #[test]
    fn run_rejects_bad_config() {
        let cfg = RunConfig::new(Method::Adam, OptimizerParams::adam(0.01, 0.9, 0.99), quartic(), 1.0, 0);
        assert!(run(&cfg).is_err());
        let cfg = RunConfig::new(Method::Adam, OptimizerParams::adam(0.01, 0.9, 0.99), quartic(), 0.0, 10);
        assert!(matches!(run(&cfg), Err(Error::InvalidInitialization(_))));
        let bad = OptimizerParams::adam(0.01, 1.0, 0.99);
        let cfg = RunConfig::new(Method::Adam, bad, quartic(), 1.0, 10);
        assert!(matches!(run(&cfg), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn run_detects_divergence() {
        let cfg = RunConfig::new(Method::Gd, OptimizerParams::gd(10.0), quartic(), 2.0, 100);
        let traj = run(&cfg).unwrap();
        assert_eq!(traj.termination, Termination::Diverged);
        let last = traj.last();
        assert!(!last.x.is_finite() || last.x.abs() > 1e12);
    }

    #[test]
    fn strided_recording_keeps_extremes() {
        let cfg = RunConfig::new(Method::Gd, OptimizerParams::gd(1e-3), quartic(), 1.0, 250)
            .with_stop(StopRule { full_record_limit: 100, ..StopRule::default() });
        let traj = run(&cfg).unwrap();
        assert!(traj.samples.len() < 250);
        assert!(traj.samples.windows(2).all(|w| w[0].t < w[1].t));
        assert_eq!(traj.samples[0].t, 0);
        assert_eq!(traj.last().t, 249);
    }

    #[test]
    fn run_2d_origin_is_fixed() {
        let obj = Coupled2D::new(crate::TermExponent::Quartic, crate::TermExponent::Quartic);
        let out = run_2d(Method::Adam, &OptimizerParams::adam(0.01, 0.9, 0.99), &obj, [0.0, 0.0], 10).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].loss, 0.0);
    }
}
