use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use degen_core::normalized::{self, NormalizedTermination};
use degen_core::{io, optimizers, Method, Monomial, OptimizerParams, RunConfig, V0Policy};

use crate::{usage, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Floating-point optimizer state.
    Raw,
    /// The (omega, lambda, log|x|) map; adam and rmsprop only.
    Normalized,
}

#[derive(Debug, Clone, clap::Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "adam")]
    pub opt: Method,
    #[arg(long, default_value_t = 4)]
    pub k: u32,
    #[arg(long, default_value_t = 0.001)]
    pub eta: f64,
    /// First-moment decay; the momentum coefficient for `--opt momentum`.
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long)]
    pub bias_correction: bool,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub x0: f64,
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    /// `zero`, `g0sq` or an explicit prior second moment.
    #[arg(long, default_value = "zero")]
    pub v0: V0Policy,
    #[arg(long, value_enum, default_value = "raw")]
    pub backend: Backend,
    /// Steps recorded in full before the raw recorder starts striding.
    #[arg(long, default_value_t = 100_000)]
    pub record_limit: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub run: RunConfig,
    pub backend: Backend,
}

/// Parameters with the coefficients a method ignores set to zero.
pub fn method_params(method: Method, eta: f64, beta1: f64, beta2: f64, eps: f64, bias_correction: bool) -> OptimizerParams {
    let mut p = match method {
        Method::Gd => OptimizerParams::gd(eta),
        Method::Momentum => OptimizerParams::momentum(eta, beta1),
        Method::RmsProp => OptimizerParams::rmsprop(eta, beta2),
        Method::Adam => OptimizerParams::adam(eta, beta1, beta2),
    };
    if method.is_adaptive() {
        p.epsilon = eps;
        p.bias_correction = bias_correction;
    }
    p
}

impl SimulateArgs {
    pub fn resolve(&self) -> CliResult<SimulateConfig> {
        let objective = Monomial::new(self.k)?;
        let params = method_params(self.opt, self.eta, self.beta1, self.beta2, self.eps, self.bias_correction);
        let mut run = RunConfig::new(self.opt, params, objective, self.x0, self.steps).with_v0(self.v0);
        run.stop.full_record_limit = self.record_limit;
        if self.record_limit == 0 {
            return Err(usage("--record-limit must be positive"));
        }
        run.validate()?;
        if self.backend == Backend::Normalized {
            normalized::initial_normalized(&run)?;
        }
        Ok(SimulateConfig { run, backend: self.backend })
    }
}

pub(crate) fn run(cfg: &SimulateConfig, out: &Path) -> CliResult<serde_json::Value> {
    match cfg.backend {
        Backend::Raw => {
            let traj = optimizers::run(&cfg.run)?;
            io::write_trajectory(io::create_file(out)?, &traj.samples)?;
            Ok(json!({
                "termination": traj.termination,
                "steps": traj.final_state.t,
                "rows": traj.samples.len(),
                "min_loss": traj.min_loss(),
                "final_loss": traj.final_loss(),
            }))
        }
        Backend::Normalized => {
            let k = cfg.run.objective.degree();
            let start = normalized::initial_normalized(&cfg.run)?;
            // same rows t = 0..steps-1 as the raw backend
            let traj = normalized::run_normalized(start, &cfg.run.params, k, cfg.run.max_steps - 1);
            io::write_normalized(io::create_file(out)?, &traj.samples)?;
            let last = traj.samples.last().expect("start state is always recorded");
            Ok(json!({
                "termination": match traj.termination {
                    NormalizedTermination::MaxSteps => "MaxSteps",
                    NormalizedTermination::DegenerateStep => "DegenerateStep",
                    NormalizedTermination::Diverged => "Diverged",
                },
                "steps": last.t,
                "rows": traj.samples.len(),
                "tail_ratio": traj.tail_ratio(),
                "final_log_abs_x": last.log_abs_x,
            }))
        }
    }
}
