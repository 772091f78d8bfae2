use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use degen_core::analysis::{self, ClassifierConfig};
use degen_core::normalized::DEFAULT_BOUNDARY_DELTA;
use degen_core::sweeps::{self, AdamBifurcationSpec, Axis, BifurcationSpec, GridSpec};
use degen_core::{io, Method, StopRule, V0Policy};

use crate::{usage, CliResult};

#[derive(Debug, Clone, clap::Args)]
pub struct PhaseArgs {
    #[arg(long, default_value = "adam")]
    pub opt: Method,
    #[arg(long, default_value_t = 4)]
    pub k: u32,
    #[arg(long, default_value_t = 0.001)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub x0: f64,
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    #[arg(long, default_value = "zero")]
    pub v0: V0Policy,
    #[arg(long, default_value_t = 0.01)]
    pub beta1_min: f64,
    /// Exclusive upper end of the beta1 axis.
    #[arg(long, default_value_t = 0.99)]
    pub beta1_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub beta2_min: f64,
    #[arg(long, default_value_t = 0.99)]
    pub beta2_max: f64,
    /// Cells per axis.
    #[arg(long, default_value_t = 50)]
    pub cells: usize,
    #[arg(long, default_value_t = 10)]
    pub smoothing_window: usize,
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_DELTA)]
    pub boundary_delta: f64,
    #[arg(long, default_value_t = ClassifierConfig::default().spike_rise_factor)]
    pub spike_rise: f64,
    #[arg(long, default_value_t = ClassifierConfig::default().floor_margin)]
    pub floor_margin: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl PhaseArgs {
    pub fn resolve(&self) -> CliResult<(GridSpec, PathBuf, usize)> {
        let classifier = ClassifierConfig {
            spike_rise_factor: self.spike_rise,
            floor_margin: self.floor_margin,
            smoothing_window: self.smoothing_window,
            ..ClassifierConfig::default()
        };
        let spec = GridSpec {
            beta1: Axis::new(self.beta1_min, self.beta1_max, self.cells),
            beta2: Axis::new(self.beta2_min, self.beta2_max, self.cells),
            method: self.opt,
            k: self.k,
            eta: self.eta,
            x0: self.x0,
            max_steps: self.steps,
            v0: self.v0,
            smoothing_window: self.smoothing_window,
            boundary_delta: self.boundary_delta,
            classifier,
            stop: StopRule::default(),
        };
        spec.validate()?;
        Ok((spec, self.out.clone(), self.jobs))
    }
}

pub(crate) fn run_phase(spec: &GridSpec, out: &Path, jobs: usize) -> CliResult<serde_json::Value> {
    let result = sweeps::run_phase_sweep(spec, jobs)?;
    io::write_sweep(io::create_file(out)?, &result.cells)?;
    let mut table: BTreeMap<String, usize> = BTreeMap::new();
    for c in &result.cells {
        *table.entry(format!("{} -> {}", c.theoretical, c.empirical)).or_default() += 1;
    }
    let agreement = result.agreement();
    Ok(json!({
        "cells": result.cells.len(),
        "errors": result.cells.iter().filter(|c| c.error.is_some()).count(),
        "agreement": agreement,
        "agreement_fraction": agreement.fraction(),
        "theoretical_to_empirical": table,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BifurcationMode {
    /// `u -> gamma u (1-u)^(k-2)` over gamma.
    Sharpness,
    /// Full Adam at the origin limit over beta2; the first CSV column holds beta2.
    Adam,
}

#[derive(Debug, Clone, clap::Args)]
pub struct BifurcationArgs {
    #[arg(long, value_enum, default_value = "sharpness")]
    pub mode: BifurcationMode,
    #[arg(long, default_value_t = 4)]
    pub k: u32,
    #[arg(long, default_value_t = 1.1)]
    pub gamma_min: f64,
    #[arg(long, default_value_t = 12.0)]
    pub gamma_max: f64,
    #[arg(long, default_value_t = 400)]
    pub cells: usize,
    #[arg(long, default_value_t = 0.1)]
    pub u0: f64,
    #[arg(long, default_value_t = analysis::DEFAULT_TRANSIENT)]
    pub transient: usize,
    #[arg(long, default_value_t = analysis::DEFAULT_RECORD)]
    pub record: usize,
    #[arg(long, default_value_t = analysis::DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta2_min: f64,
    #[arg(long, default_value_t = 0.99)]
    pub beta2_max: f64,
    #[arg(long, default_value_t = 0.001)]
    pub eta: f64,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum BifurcationConfig {
    Sharpness(BifurcationSpec),
    Adam(AdamBifurcationSpec),
}

impl BifurcationArgs {
    pub fn resolve(&self) -> CliResult<(BifurcationConfig, PathBuf, usize)> {
        if self.cells == 0 {
            return Err(usage("--cells must be positive"));
        }
        let cfg = match self.mode {
            BifurcationMode::Sharpness => {
                if !(self.gamma_min > 1.0 && self.gamma_max >= self.gamma_min) {
                    return Err(usage("need 1 < gamma-min <= gamma-max"));
                }
                BifurcationConfig::Sharpness(BifurcationSpec {
                    gamma_min: self.gamma_min,
                    gamma_max: self.gamma_max,
                    count: self.cells,
                    k: self.k,
                    u0: self.u0,
                    transient: self.transient,
                    record: self.record,
                    tol: self.tol,
                })
            }
            BifurcationMode::Adam => {
                if !(self.beta2_min < self.beta2_max) {
                    return Err(usage("need beta2-min < beta2-max"));
                }
                BifurcationConfig::Adam(AdamBifurcationSpec {
                    beta1: self.beta1,
                    beta2_min: self.beta2_min,
                    beta2_max: self.beta2_max,
                    count: self.cells,
                    k: self.k,
                    eta: self.eta,
                    u0: self.u0,
                    transient: self.transient,
                    record: self.record,
                    tol: self.tol,
                })
            }
        };
        Ok((cfg, self.out.clone(), self.jobs))
    }
}

pub(crate) fn run_bifurcation(cfg: &BifurcationConfig, out: &Path, jobs: usize) -> CliResult<serde_json::Value> {
    let points = match cfg {
        BifurcationConfig::Sharpness(spec) => sweeps::run_bifurcation_sweep(spec, jobs)?,
        BifurcationConfig::Adam(spec) => sweeps::run_adam_bifurcation_sweep(spec, jobs)?,
    };
    io::write_bifurcation(io::create_file(out)?, &points)?;
    let classes: Vec<_> = points
        .iter()
        .map(|p| json!({ "parameter": p.parameter, "classification": p.limit_set.classification.to_string() }))
        .collect();
    Ok(json!({ "cells": points.len(), "limit_sets": classes }))
}
