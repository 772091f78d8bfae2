//! Trajectory post-processing: slope fits, spike detection, empirical regime
//! labels, coupling ratios and limit sets of the sharpness map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::Monomial;
use crate::optimizers::{OptimizerParams, Sample, Termination, Trajectory};
use crate::theory::{sharpness_map_step, SharpnessMapConfig};

/// Fewest points accepted by a least-squares fit.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::InsufficientData("x and y lengths differ".into()));
    }
    if n < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!("{n} points, need {MIN_FIT_POINTS}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("degenerate abscissa".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        slope,
        intercept: my - slope * mx,
        r_squared,
        window: (lo, hi),
        n_points: n,
    })
}

/// Trailing mean over up to `w` samples ending at each index.
///
/// Each window is summed directly; a running sum would lose the small
/// values once the series spans hundreds of orders of magnitude.
pub fn sliding_mean(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let win = &values[lo..=i];
            win.iter().sum::<f64>() / win.len() as f64
        })
        .collect()
}

/// Window length, in samples, of the trend filter used to find the exponential phase.
pub const PHASE_TREND_WINDOW: usize = 50;

/// Start index of the longest suffix of `log_values` on which the trailing
/// mean of per-step increments stays negative.
pub fn exponential_phase_start(ts: &[f64], log_values: &[f64]) -> usize {
    let n = log_values.len();
    if n < 2 {
        return 0;
    }
    let rates: Vec<f64> = (1..n)
        .map(|i| (log_values[i] - log_values[i - 1]) / (ts[i] - ts[i - 1]))
        .collect();
    let trend = sliding_mean(&rates, PHASE_TREND_WINDOW);
    let mut start = 0;
    for (i, r) in trend.iter().enumerate().rev() {
        if !(*r < 0.0) {
            // rates[i] spans samples i..i+1; the suffix starts after the window
            start = i + 1;
            break;
        }
    }
    start
}

fn trailing_fraction(range: std::ops::Range<usize>, ts: &[f64], fraction: f64) -> usize {
    if range.is_empty() {
        return range.start;
    }
    let t0 = ts[range.start];
    let t1 = ts[range.end - 1];
    let cut = t1 - fraction.clamp(0.0, 1.0) * (t1 - t0);
    range.start + ts[range.clone()].iter().position(|&t| t >= cut).unwrap_or(0)
}

/// Slope of `ln(loss)` per step over the trailing `window_fraction` of the
/// exponential phase.
pub fn fit_log_linear(samples: &[Sample], window_fraction: f64) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.loss > 0.0 && s.loss.is_finite())
        .map(|s| (s.t as f64, s.loss.ln()))
        .collect();
    fit_log_linear_series(&pts, window_fraction)
}

/// [`fit_log_linear`] on `(t, ln value)` pairs.
pub fn fit_log_linear_series(points: &[(f64, f64)], window_fraction: f64) -> Result<FitResult> {
    if points.len() < 20 {
        return Err(Error::InsufficientData(format!("{} usable samples, need 20", points.len())));
    }
    let ts: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let start = exponential_phase_start(&ts, &ys);
    let from = trailing_fraction(start..ts.len(), &ts, window_fraction);
    ols(&ts[from..], &ys[from..])
}

/// Slope of `ln v` per step, fitted like [`fit_log_linear`].
pub fn fit_v_decay(samples: &[Sample], window_fraction: f64) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.v > 0.0 && s.v.is_finite())
        .map(|s| (s.t as f64, s.v.ln()))
        .collect();
    fit_log_linear_series(&pts, window_fraction)
}

/// Slope of `ln|x|` against `ln t` over the trailing `window_fraction` of
/// the time span; 0.9 keeps the last decade.
pub fn fit_log_log(samples: &[Sample], window_fraction: f64) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.t as f64, s.log_abs_x)).collect();
    fit_log_log_series(&pts, window_fraction)
}

/// [`fit_log_log`] on `(t, ln|x|)` pairs.
pub fn fit_log_log_series(points: &[(f64, f64)], window_fraction: f64) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 >= 1.0 && p.1.is_finite()).collect();
    let Some(&(t_end, _)) = pts.last() else {
        return Err(Error::InsufficientData("no samples with t >= 1".into()));
    };
    let cut = t_end * (1.0 - window_fraction.clamp(0.0, 1.0));
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().filter(|p| p.0 >= cut).map(|p| (p.0.ln(), p.1)).unzip();
    if xs.len() < 20 {
        return Err(Error::InsufficientData(format!("{} samples in window, need 20", xs.len())));
    }
    ols(&xs, &ys)
}

/// Loss level `L(eta/2)` at which sign descent with step `eta` stagnates.
pub fn signgd_floor(params: &OptimizerParams, objective: &Monomial) -> f64 {
    objective.value(params.eta / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    /// First step above the threshold.
    pub t: u64,
    pub t_peak: u64,
    pub peak_loss: f64,
    /// Running minimum when the event began.
    pub running_min: f64,
}

/// Loss excursions above `rise_factor` times the running minimum, counted
/// once the running minimum has dropped below `floor`. A contiguous run of
/// such samples is one event.
pub fn detect_spikes(points: &[(u64, f64)], rise_factor: f64, floor: f64) -> Vec<SpikeEvent> {
    let mut events = Vec::new();
    let mut running_min = f64::INFINITY;
    let mut current: Option<SpikeEvent> = None;
    for &(t, loss) in points {
        if loss.is_nan() {
            continue;
        }
        let armed = running_min < floor;
        if armed && loss > rise_factor * running_min {
            match current.as_mut() {
                Some(ev) if loss > ev.peak_loss => {
                    ev.peak_loss = loss;
                    ev.t_peak = t;
                }
                Some(_) => {}
                None => {
                    current = Some(SpikeEvent { t, t_peak: t, peak_loss: loss, running_min });
                }
            }
        } else if let Some(ev) = current.take() {
            events.push(ev);
        }
        running_min = running_min.min(loss);
    }
    events.extend(current);
    events
}

impl SpikeEvent {
    pub fn rise(&self) -> f64 {
        self.peak_loss / self.running_min
    }
}

/// The event with the largest rise over its running minimum.
pub fn dominant_spike(events: &[SpikeEvent]) -> Option<&SpikeEvent> {
    events.iter().max_by(|a, b| a.rise().total_cmp(&b.rise()))
}

pub fn loss_points(samples: &[Sample]) -> Vec<(u64, f64)> {
    samples.iter().map(|s| (s.t, s.loss)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmpiricalLabel {
    StableConvergence,
    SpikeThenRecoveryOrDivergence,
    SignGDOscillation,
    ChaoticConvergent,
    Diverged,
    Undetermined,
}

impl EmpiricalLabel {
    pub fn name(self) -> &'static str {
        match self {
            EmpiricalLabel::StableConvergence => "StableConvergence",
            EmpiricalLabel::SpikeThenRecoveryOrDivergence => "SpikeThenRecoveryOrDivergence",
            EmpiricalLabel::SignGDOscillation => "SignGDOscillation",
            EmpiricalLabel::ChaoticConvergent => "ChaoticConvergent",
            EmpiricalLabel::Diverged => "Diverged",
            EmpiricalLabel::Undetermined => "Undetermined",
        }
    }
}

impl std::fmt::Display for EmpiricalLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub min_loss: f64,
    pub final_loss: f64,
    pub spike_times: Vec<u64>,
    pub signgd_floor: f64,
    pub max_coupling_ratio: f64,
    pub final_coupling_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRegime {
    pub label: EmpiricalLabel,
    pub evidence: Evidence,
}

/// Thresholds of the empirical classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// A spike is a loss this many times the running minimum.
    pub spike_rise_factor: f64,
    /// Spikes and transient convergence need the minimum below `floor * floor_margin`.
    pub floor_margin: f64,
    /// Upper edge of the sign-descent band as a multiple of the floor;
    /// `None` accepts any bounded oscillation. The lower edge is `floor * floor_margin`.
    pub band_upper: Option<f64>,
    /// Final loss counted as converged.
    pub converged_level: f64,
    /// Fraction of the trajectory inspected for the tail checks.
    pub tail_fraction: f64,
    /// Fraction of loss increases in the tail above which convergence is called chaotic.
    pub sawtooth_fraction: f64,
    /// Sliding-mean window for loss and coupling-ratio summaries.
    pub smoothing_window: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            spike_rise_factor: 1e3,
            floor_margin: 1e-6,
            band_upper: None,
            converged_level: 1e-100,
            tail_fraction: 0.2,
            sawtooth_fraction: 0.1,
            smoothing_window: 10,
        }
    }
}

pub fn classify_empirical(traj: &Trajectory) -> EmpiricalRegime {
    classify_with(
        &traj.samples,
        traj.termination,
        &traj.config.params,
        &traj.config.objective,
        &ClassifierConfig::default(),
    )
}

pub fn classify_with(
    samples: &[Sample],
    termination: Termination,
    params: &OptimizerParams,
    objective: &Monomial,
    cfg: &ClassifierConfig,
) -> EmpiricalRegime {
    let floor = signgd_floor(params, objective);
    let losses: Vec<f64> = samples.iter().map(|s| s.loss).collect();
    let smoothed = sliding_mean(&losses, cfg.smoothing_window);
    let min_loss = smoothed.iter().copied().fold(f64::INFINITY, f64::min);
    let final_loss = smoothed.last().copied().unwrap_or(f64::NAN);
    let spikes = detect_spikes(&loss_points(samples), cfg.spike_rise_factor, floor);
    let coupling = coupling_ratio_series(samples);
    let evidence = Evidence {
        min_loss,
        final_loss,
        spike_times: spikes.iter().map(|s| s.t).collect(),
        signgd_floor: floor,
        max_coupling_ratio: coupling.smoothed_max(cfg.smoothing_window),
        final_coupling_ratio: coupling.smoothed_final(cfg.smoothing_window),
    };

    let tail_start = ((1.0 - cfg.tail_fraction) * samples.len() as f64) as usize;
    let tail = &smoothed[tail_start.min(smoothed.len())..];
    let label = if min_loss < floor * cfg.floor_margin && !spikes.is_empty() {
        EmpiricalLabel::SpikeThenRecoveryOrDivergence
    } else if termination == Termination::Diverged {
        EmpiricalLabel::Diverged
    } else if final_loss < cfg.converged_level {
        if sawtooth_fraction(&losses[tail_start.min(losses.len())..]) > cfg.sawtooth_fraction {
            EmpiricalLabel::ChaoticConvergent
        } else {
            EmpiricalLabel::StableConvergence
        }
    } else if min_loss >= floor * cfg.floor_margin
        && !tail.is_empty()
        && tail
            .iter()
            .all(|&l| l.is_finite() && l >= floor * cfg.floor_margin && cfg.band_upper.map_or(true, |b| l <= floor * b))
    {
        EmpiricalLabel::SignGDOscillation
    } else {
        EmpiricalLabel::Undetermined
    };
    EmpiricalRegime { label, evidence }
}

/// Fraction of consecutive pairs in which the loss increased.
fn sawtooth_fraction(losses: &[f64]) -> f64 {
    if losses.len() < 2 {
        return 0.0;
    }
    let ups = losses.windows(2).filter(|w| w[1] > w[0]).count();
    ups as f64 / (losses.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingPoint {
    pub t: u64,
    /// `v_t / g_t^2`; may overflow to infinity, see `log_v - log_g2`.
    pub ratio: f64,
    /// `g_t^2 / g_{t-1}^2`; absent for the first usable point.
    pub rho: Option<f64>,
    pub log_v: f64,
    pub log_g2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSeries {
    pub points: Vec<CouplingPoint>,
    /// Samples dropped because the gradient or `v` was zero.
    pub skipped: usize,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl CouplingSeries {
    /// Sliding-window ratio `mean(v) / mean(g^2)` over up to `w` points.
    ///
    /// Averaging `v` and `g^2` separately keeps a single near-zero gradient
    /// (a sign change of `x`) from dominating the window. Computed in log
    /// space because both series span hundreds of decades.
    pub fn smoothed(&self, w: usize) -> Vec<f64> {
        let w = w.max(1);
        let lv: Vec<f64> = self.points.iter().map(|p| p.log_v).collect();
        let lg: Vec<f64> = self.points.iter().map(|p| p.log_g2).collect();
        (0..lv.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(w);
                (log_sum_exp(&lv[lo..=i]) - log_sum_exp(&lg[lo..=i])).exp()
            })
            .collect()
    }

    pub fn smoothed_max(&self, w: usize) -> f64 {
        self.smoothed(w).into_iter().fold(f64::NAN, f64::max)
    }

    pub fn smoothed_final(&self, w: usize) -> f64 {
        self.smoothed(w).last().copied().unwrap_or(f64::NAN)
    }
}

pub fn coupling_ratio_series(samples: &[Sample]) -> CouplingSeries {
    let mut points = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    let mut prev_grad: Option<f64> = None;
    for s in samples {
        if s.grad == 0.0 || !(s.v > 0.0) || !s.grad.is_finite() || !s.v.is_finite() {
            skipped += 1;
            prev_grad = None;
            continue;
        }
        let log_v = s.v.ln();
        let log_g2 = 2.0 * s.grad.abs().ln();
        let rho = prev_grad.map(|g| {
            let q = s.grad / g;
            q * q
        });
        points.push(CouplingPoint { t: s.t, ratio: (log_v - log_g2).exp(), rho, log_v, log_g2 });
        prev_grad = Some(s.grad);
    }
    CouplingSeries { points, skipped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitSetKind {
    FixedPoint,
    PeriodN(usize),
    ChaoticBounded,
    Escaped,
}

impl std::fmt::Display for LimitSetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LimitSetKind::FixedPoint => f.write_str("FixedPoint"),
            LimitSetKind::PeriodN(n) => write!(f, "Period{n}"),
            LimitSetKind::ChaoticBounded => f.write_str("ChaoticBounded"),
            LimitSetKind::Escaped => f.write_str("Escaped"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSet {
    pub points: Vec<f64>,
    pub classification: LimitSetKind,
}

pub const DEFAULT_TRANSIENT: usize = 500;
pub const DEFAULT_RECORD: usize = 200;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
/// Longest cycle reported as periodic.
pub const MAX_PERIOD: usize = 64;

fn in_range(u: f64) -> bool {
    u.is_finite() && u > 0.0 && u < 2.0
}

/// Limit set of the sharpness map started at `cfg.u0`.
pub fn limit_set(cfg: &SharpnessMapConfig, transient: usize, record: usize, tol: f64) -> LimitSet {
    limit_set_of(cfg.u0, |u| sharpness_map_step(u, cfg), transient, record, tol)
}

/// Limit set of an arbitrary scalar map; escape means leaving `(0, 2)`.
pub fn limit_set_of(u0: f64, mut map: impl FnMut(f64) -> f64, transient: usize, record: usize, tol: f64) -> LimitSet {
    let escaped = LimitSet { points: Vec::new(), classification: LimitSetKind::Escaped };
    let mut u = u0;
    for _ in 0..transient {
        u = map(u);
        if !u.is_finite() {
            return escaped;
        }
    }
    let mut orbit = Vec::with_capacity(record);
    for _ in 0..record.max(1) {
        if !in_range(u) {
            return escaped;
        }
        orbit.push(u);
        u = map(u);
    }
    let points = dedupe_sorted(&orbit, tol);
    let classification = match points.len() {
        1 => LimitSetKind::FixedPoint,
        n if n <= MAX_PERIOD && is_cycle(&orbit, n, tol) => LimitSetKind::PeriodN(n),
        _ => LimitSetKind::ChaoticBounded,
    };
    LimitSet { points, classification }
}

fn is_cycle(orbit: &[f64], n: usize, tol: f64) -> bool {
    orbit.len() > n && orbit.iter().zip(&orbit[n..]).all(|(a, b)| (a - b).abs() <= tol)
}

/// Sorted copy with points closer than `tol` to the previous kept point removed.
pub fn dedupe_sorted(values: &[f64], tol: f64) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        match out.last() {
            Some(&last) if x - last <= tol => {}
            _ => out.push(x),
        }
    }
    out
}
