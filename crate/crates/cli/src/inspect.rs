use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use degen_core::analysis::{self, ClassifierConfig};
use degen_core::{io, Method, Monomial, OptimizerParams, Sample, Termination};

use crate::simulate::{method_params, Backend};
use crate::{usage, CliError, CliResult, Meta, Resolved};

/// Optimizer settings of the run that produced an input file: taken from its
/// sidecar when present, with explicit flags taking precedence.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct SourceArgs {
    #[arg(long)]
    pub opt: Option<Method>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub method: Method,
    pub k: u32,
    pub params: OptimizerParams,
    /// Recorded termination, if the sidecar had one.
    pub termination: Option<Termination>,
}

fn sidecar_of(input: &Path) -> CliResult<Option<Meta>> {
    let path = io::sidecar_path(input);
    if path.exists() {
        Meta::read(&path).map(Some)
    } else {
        Ok(None)
    }
}

impl SourceArgs {
    fn resolve(&self, input: &Path) -> CliResult<Source> {
        let recorded = match sidecar_of(input)? {
            Some(Meta { resolved: Resolved::Simulate(cfg), summary, .. }) => {
                let termination = summary
                    .get("termination")
                    .and_then(Value::as_str)
                    .and_then(|s| s.parse::<Termination>().ok());
                Some((cfg.run, termination))
            }
            _ => None,
        };
        let (method, k, eta, beta1, beta2, eps, bc, termination) = match &recorded {
            Some((run, term)) => (
                run.method,
                run.objective.degree(),
                run.params.eta,
                run.params.beta1,
                run.params.beta2,
                run.params.epsilon,
                run.params.bias_correction,
                *term,
            ),
            None => (Method::Adam, 4, 0.001, 0.9, 0.999, 0.0, false, None),
        };
        let method = self.opt.unwrap_or(method);
        let k = self.k.unwrap_or(k);
        Monomial::new(k)?;
        let params = method_params(
            method,
            self.eta.unwrap_or(eta),
            self.beta1.unwrap_or(beta1),
            self.beta2.unwrap_or(beta2),
            eps,
            bc,
        );
        params.validate()?;
        Ok(Source { method, k, params, termination })
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct ClassifyArgs {
    /// Trajectory CSV written by `simulate`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = ClassifierConfig::default().smoothing_window)]
    pub smoothing_window: usize,
    #[arg(long, default_value_t = ClassifierConfig::default().spike_rise_factor)]
    pub spike_rise: f64,
    #[arg(long, default_value_t = ClassifierConfig::default().floor_margin)]
    pub floor_margin: f64,
    /// Write the report here (plus a sidecar) instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub input: PathBuf,
    pub source: Source,
    pub classifier: ClassifierConfig,
}

impl ClassifyArgs {
    pub fn resolve(&self) -> CliResult<ClassifyConfig> {
        if self.smoothing_window == 0 {
            return Err(usage("--smoothing-window must be positive"));
        }
        Ok(ClassifyConfig {
            input: self.input.clone(),
            source: self.source.resolve(&self.input)?,
            classifier: ClassifierConfig {
                smoothing_window: self.smoothing_window,
                spike_rise_factor: self.spike_rise,
                floor_margin: self.floor_margin,
                ..ClassifierConfig::default()
            },
        })
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Termination implied by the last row when no sidecar recorded it.
fn inferred_termination(samples: &[Sample]) -> Termination {
    match samples.last() {
        Some(s) if !s.x.is_finite() || s.x.abs() > degen_core::optimizers::StopRule::default().divergence_bound => {
            Termination::Diverged
        }
        _ => Termination::MaxSteps,
    }
}

pub(crate) fn classify(cfg: &ClassifyConfig) -> CliResult<Value> {
    let samples = io::read_trajectory(open(&cfg.input)?)?;
    if samples.is_empty() {
        return Err(usage(format!("{} holds no samples", cfg.input.display())));
    }
    let termination = cfg.source.termination.unwrap_or_else(|| inferred_termination(&samples));
    let objective = Monomial::new(cfg.source.k)?;
    let regime = analysis::classify_with(&samples, termination, &cfg.source.params, &objective, &cfg.classifier);
    let spikes = analysis::detect_spikes(
        &analysis::loss_points(&samples),
        cfg.classifier.spike_rise_factor,
        regime.evidence.signgd_floor,
    );
    Ok(json!({
        "label": regime.label,
        "evidence": regime.evidence,
        "termination": termination,
        "dominant_spike": analysis::dominant_spike(&spikes),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// `ln L` against `t` over the exponential phase.
    Loglinear,
    /// `ln|x|` against `ln t`.
    Loglog,
    /// `ln v` against `t`; raw trajectories only.
    Vdecay,
}

#[derive(Debug, Clone, clap::Args)]
pub struct FitArgs {
    /// Raw or normalized trajectory CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "loglinear")]
    pub mode: FitMode,
    /// Trailing fraction of the fitted range; defaults to 0.5, or 0.9 for loglog.
    #[arg(long)]
    pub window: Option<f64>,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub input: PathBuf,
    pub mode: FitMode,
    pub window: f64,
    pub backend: Backend,
    pub k: u32,
}

impl FitArgs {
    pub fn resolve(&self) -> CliResult<FitConfig> {
        let window = self.window.unwrap_or(match self.mode {
            FitMode::Loglog => 0.9,
            _ => 0.5,
        });
        if !(window > 0.0 && window <= 1.0) {
            return Err(usage("--window must lie in (0, 1]"));
        }
        let header = io::read_header(&self.input).map_err(CliError::from)?;
        let backend = if header == io::TRAJECTORY_HEADER {
            Backend::Raw
        } else if header == io::NORMALIZED_HEADER {
            Backend::Normalized
        } else {
            return Err(usage(format!("{}: unrecognized header {header:?}", self.input.display())));
        };
        if backend == Backend::Normalized && self.mode == FitMode::Vdecay {
            return Err(usage("vdecay needs a raw trajectory"));
        }
        let k = self.source.resolve(&self.input)?.k;
        Ok(FitConfig { input: self.input.clone(), mode: self.mode, window, backend, k })
    }
}

pub(crate) fn fit(cfg: &FitConfig) -> CliResult<Value> {
    let result = match cfg.backend {
        Backend::Raw => {
            let samples = io::read_trajectory(open(&cfg.input)?)?;
            match cfg.mode {
                FitMode::Loglinear => analysis::fit_log_linear(&samples, cfg.window),
                FitMode::Loglog => analysis::fit_log_log(&samples, cfg.window),
                FitMode::Vdecay => analysis::fit_v_decay(&samples, cfg.window),
            }
        }
        Backend::Normalized => {
            let samples = io::read_normalized(open(&cfg.input)?)?;
            let kf = cfg.k as f64;
            match cfg.mode {
                FitMode::Loglinear => {
                    let pts: Vec<(f64, f64)> = samples
                        .iter()
                        .filter(|s| s.log_abs_x.is_finite())
                        .map(|s| (s.t as f64, kf * s.log_abs_x - kf.ln()))
                        .collect();
                    analysis::fit_log_linear_series(&pts, cfg.window)
                }
                FitMode::Loglog => {
                    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.t as f64, s.log_abs_x)).collect();
                    analysis::fit_log_log_series(&pts, cfg.window)
                }
                FitMode::Vdecay => return Err(usage("vdecay needs a raw trajectory")),
            }
        }
    }?;
    Ok(json!({ "mode": cfg.mode, "fit": result }))
}

pub(crate) fn write_report(report: &Value, out: &Path) -> CliResult<Value> {
    io::write_json_file(out, report)?;
    Ok(report.clone())
}
