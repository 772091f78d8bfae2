//! Grid drivers for phase diagrams and bifurcation diagrams.
//!
//! Every cell is a pure function of the spec and its indices, so results do
//! not depend on how cells are scheduled across threads.

use serde::{Deserialize, Serialize};

use crate::analysis::{self, ClassifierConfig, EmpiricalLabel, LimitSet};
use crate::error::{Error, Result};
use crate::normalized::{self, NormalizedState, RegimeLabel, DEFAULT_BOUNDARY_DELTA};
use crate::objectives::Monomial;
use crate::optimizers::{self, Method, OptimizerParams, RunConfig, StopRule, Termination, V0Policy};
use crate::theory::{sharpness_map_step, SharpnessMapConfig};

/// `count` points starting at `lo`, spaced `(hi - lo) / count`; `hi` is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        Self { lo, hi, count }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + i as f64 * (self.hi - self.lo) / self.count as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub beta1: Axis,
    pub beta2: Axis,
    pub method: Method,
    pub k: u32,
    pub eta: f64,
    pub x0: f64,
    pub max_steps: u64,
    pub v0: V0Policy,
    pub smoothing_window: usize,
    pub boundary_delta: f64,
    pub classifier: ClassifierConfig,
    pub stop: StopRule,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            beta1: Axis::new(0.01, 0.99, 50),
            beta2: Axis::new(0.01, 0.99, 50),
            method: Method::Adam,
            k: 4,
            eta: 0.001,
            x0: 1.0,
            max_steps: 100_000,
            v0: V0Policy::default(),
            smoothing_window: 10,
            boundary_delta: DEFAULT_BOUNDARY_DELTA,
            classifier: ClassifierConfig::default(),
            stop: StopRule::default(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("beta1", &self.beta1), ("beta2", &self.beta2)] {
            if axis.count < 2 {
                return Err(Error::InvalidConfig(format!("{name} count must be at least 2")));
            }
            let ok = |v: f64| (0.0..1.0).contains(&v);
            if !ok(axis.lo) || !(axis.hi > axis.lo && axis.hi <= 1.0) {
                return Err(Error::InvalidConfig(format!("{name} range must lie within [0, 1)")));
            }
        }
        if self.smoothing_window == 0 {
            return Err(Error::InvalidConfig("smoothing window must be positive".into()));
        }
        let cfg = self.run_config(self.beta1.lo, self.beta2.lo)?;
        cfg.validate()
    }

    pub fn objective(&self) -> Result<Monomial> {
        Monomial::new(self.k)
    }

    pub fn params(&self, beta1: f64, beta2: f64) -> OptimizerParams {
        match self.method {
            Method::Gd => OptimizerParams::gd(self.eta),
            Method::Momentum => OptimizerParams::momentum(self.eta, beta1),
            Method::RmsProp => OptimizerParams::rmsprop(self.eta, beta2),
            Method::Adam => OptimizerParams::adam(self.eta, beta1, beta2),
        }
    }

    pub fn run_config(&self, beta1: f64, beta2: f64) -> Result<RunConfig> {
        Ok(RunConfig::new(self.method, self.params(beta1, beta2), self.objective()?, self.x0, self.max_steps)
            .with_v0(self.v0)
            .with_stop(self.stop))
    }

    pub fn cell_count(&self) -> usize {
        self.beta1.count * self.beta2.count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub i: usize,
    pub j: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub min_loss: f64,
    pub final_loss: f64,
    pub max_r: f64,
    pub final_r: f64,
    pub empirical: EmpiricalLabel,
    pub theoretical: RegimeLabel,
    pub termination: Termination,
    /// Set when the cell could not be run; the other numbers are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: GridSpec,
    /// Row-major: `beta1` outer, `beta2` inner.
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn cell(&self, i: usize, j: usize) -> &CellResult {
        &self.cells[i * self.spec.beta2.count + j]
    }

    pub fn agreement(&self) -> Agreement {
        let mut a = Agreement::default();
        for c in &self.cells {
            match expected_label(c.theoretical) {
                Some(label) if c.error.is_none() => {
                    a.compared += 1;
                    if c.empirical == label {
                        a.matched += 1;
                    }
                }
                _ => a.excluded += 1,
            }
        }
        a
    }
}

/// Empirical label a theoretical regime should produce; `None` for the
/// boundary band and the lower-left exception, which are not compared.
pub fn expected_label(regime: RegimeLabel) -> Option<EmpiricalLabel> {
    match regime {
        RegimeLabel::RegimeIStable => Some(EmpiricalLabel::StableConvergence),
        RegimeLabel::RegimeIIUnstableFp => Some(EmpiricalLabel::SpikeThenRecoveryOrDivergence),
        RegimeLabel::RegimeIIINoFp => Some(EmpiricalLabel::SignGDOscillation),
        RegimeLabel::BoundaryBand | RegimeLabel::LowerLeftException => None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    pub matched: usize,
    pub compared: usize,
    pub excluded: usize,
}

impl Agreement {
    pub fn fraction(&self) -> f64 {
        if self.compared == 0 {
            f64::NAN
        } else {
            self.matched as f64 / self.compared as f64
        }
    }
}

/// Runs and classifies the single cell `(i, j)`.
pub fn run_cell(spec: &GridSpec, i: usize, j: usize) -> CellResult {
    let beta1 = spec.beta1.value(i);
    let beta2 = spec.beta2.value(j);
    let params = spec.params(beta1, beta2);
    let theoretical = normalized::classify_regime_theoretical(&params, spec.k, spec.boundary_delta);
    let outcome = spec.run_config(beta1, beta2).and_then(|cfg| optimizers::run(&cfg));
    match outcome {
        Ok(traj) => {
            let mut classifier = spec.classifier;
            classifier.smoothing_window = spec.smoothing_window;
            let regime = analysis::classify_with(
                &traj.samples,
                traj.termination,
                &traj.config.params,
                &traj.config.objective,
                &classifier,
            );
            CellResult {
                i,
                j,
                beta1,
                beta2,
                min_loss: regime.evidence.min_loss,
                final_loss: regime.evidence.final_loss,
                max_r: regime.evidence.max_coupling_ratio,
                final_r: regime.evidence.final_coupling_ratio,
                empirical: regime.label,
                theoretical,
                termination: traj.termination,
                error: None,
            }
        }
        Err(e) => CellResult {
            i,
            j,
            beta1,
            beta2,
            min_loss: f64::NAN,
            final_loss: f64::NAN,
            max_r: f64::NAN,
            final_r: f64::NAN,
            empirical: EmpiricalLabel::Undetermined,
            theoretical,
            termination: Termination::Diverged,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every cell of the grid on up to `jobs` threads; `jobs = 0` uses all cores.
pub fn run_phase_sweep(spec: &GridSpec, jobs: usize) -> Result<SweepResult> {
    spec.validate()?;
    let n2 = spec.beta2.count;
    let cells = map_indices(spec.cell_count(), jobs, |idx| run_cell(spec, idx / n2, idx % n2))?;
    Ok(SweepResult { spec: spec.clone(), cells })
}

/// The quadratic-objective protocol: same schema, `k = 2` required.
pub fn run_quadratic_sweep(spec: &GridSpec, jobs: usize) -> Result<SweepResult> {
    if spec.k != 2 {
        return Err(Error::InvalidConfig(format!("quadratic sweep needs k = 2, got {}", spec.k)));
    }
    run_phase_sweep(spec, jobs)
}

/// Default grid for the quadratic protocol.
pub fn quadratic_grid() -> GridSpec {
    GridSpec {
        k: 2,
        x0: 1.005,
        eta: 0.01,
        ..GridSpec::default()
    }
}

#[cfg(feature = "parallel")]
fn map_indices<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    if jobs == 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    // indexed collect keeps row-major order whatever the schedule
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_indices<T>(n: usize, _jobs: usize, f: impl Fn(usize) -> T) -> Result<Vec<T>> {
    Ok((0..n).map(f).collect())
}

/// Inclusive linear range of `count` values.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| if i + 1 == count { hi } else { lo + i as f64 * (hi - lo) / (count - 1) as f64 })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationSpec {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub count: usize,
    pub k: u32,
    pub u0: f64,
    pub transient: usize,
    pub record: usize,
    pub tol: f64,
}

impl Default for BifurcationSpec {
    fn default() -> Self {
        Self {
            gamma_min: 1.1,
            gamma_max: 12.0,
            count: 400,
            k: 4,
            u0: 0.1,
            transient: analysis::DEFAULT_TRANSIENT,
            record: analysis::DEFAULT_RECORD,
            tol: analysis::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    /// `gamma`, or `beta2` in the Adam variant.
    pub parameter: f64,
    pub limit_set: LimitSet,
}

/// Limit sets of the sharpness map over an inclusive range of `gamma`.
pub fn run_bifurcation_sweep(spec: &BifurcationSpec, jobs: usize) -> Result<Vec<BifurcationPoint>> {
    if spec.transient < 1 || spec.record < 1 || spec.count < 1 {
        return Err(Error::InvalidConfig("transient, record and count must be at least 1".into()));
    }
    let gammas = linspace(spec.gamma_min, spec.gamma_max, spec.count);
    for &g in &gammas {
        SharpnessMapConfig::new(g, spec.k, spec.u0)?;
    }
    map_indices(gammas.len(), jobs, |i| {
        let cfg = SharpnessMapConfig { gamma: gammas[i], k: spec.k, u0: spec.u0 };
        BifurcationPoint {
            parameter: gammas[i],
            limit_set: analysis::limit_set_of(cfg.u0, |u| sharpness_map_step(u, &cfg), spec.transient, spec.record, spec.tol),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamBifurcationSpec {
    pub beta1: f64,
    pub beta2_min: f64,
    pub beta2_max: f64,
    pub count: usize,
    pub k: u32,
    pub eta: f64,
    /// Initial `eta * omega * lambda`, with `omega = 1`.
    pub u0: f64,
    pub transient: usize,
    pub record: usize,
    pub tol: f64,
}

/// Full Adam in the `x -> 0` limit, sweeping `beta2`; the recorded value is
/// the sharpness proxy `eta * omega_t * lambda_t`.
pub fn run_adam_bifurcation_sweep(spec: &AdamBifurcationSpec, jobs: usize) -> Result<Vec<BifurcationPoint>> {
    if spec.transient < 1 || spec.record < 1 || spec.count < 1 {
        return Err(Error::InvalidConfig("transient, record and count must be at least 1".into()));
    }
    Monomial::degenerate(spec.k)?;
    let betas = linspace(spec.beta2_min, spec.beta2_max, spec.count);
    for &b2 in &betas {
        OptimizerParams::adam(spec.eta, spec.beta1, b2).validate()?;
    }
    map_indices(betas.len(), jobs, |i| {
        let params = OptimizerParams::adam(spec.eta, spec.beta1, betas[i]);
        let mut state = NormalizedState::at_origin_limit(1.0, spec.u0 / spec.eta);
        let limit_set = analysis::limit_set_of(
            spec.u0,
            |_| match normalized::step_normalized(&state, &params, spec.k) {
                Ok(next) => {
                    state = next;
                    state.relative_step(spec.eta)
                }
                Err(_) => f64::NAN,
            },
            spec.transient,
            spec.record,
            spec.tol,
        );
        BifurcationPoint { parameter: betas[i], limit_set }
    })
}
