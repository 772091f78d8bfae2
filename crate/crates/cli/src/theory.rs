use serde_json::{json, Value};

use degen_core::normalized::{self, DEFAULT_BOUNDARY_DELTA};
use degen_core::theory;
use degen_core::{Monomial, OptimizerParams};

use crate::{usage, CliResult};

#[derive(Debug, Clone, clap::Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub k: u32,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long, default_value_t = 0.001)]
    pub eta: f64,
    /// Growth exponent of an exponential step-size schedule.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_DELTA)]
    pub boundary_delta: f64,
}

pub(crate) fn report(args: &TheoryArgs) -> CliResult<Value> {
    Monomial::new(args.k)?;
    let k = args.k;
    if args.beta1.is_some() && args.beta2.is_none() {
        return Err(usage("--beta1 needs --beta2"));
    }
    let mut out = json!({
        "config": {
            "k": k,
            "beta1": args.beta1,
            "beta2": args.beta2,
            "eta": args.eta,
            "alpha": args.alpha,
            "boundary_delta": args.boundary_delta,
        },
    });
    if k >= 4 {
        out["gamma_crit"] = json!(theory::sharpness_critical_gamma(k));
        out["beta2_crit"] = json!(theory::beta2_critical(k));
        out["power_laws"] = json!({
            "gd": theory::gd_power_law(k)?,
            "momentum": theory::momentum_power_law(k)?,
        });
        if let Some(alpha) = args.alpha {
            out["exponential_schedule"] = json!({
                "rate": theory::exponential_schedule_rate(k, alpha)?,
                "constant": theory::exponential_schedule_constant(k, args.eta, alpha),
            });
        }
    }
    if let Some(beta2) = args.beta2 {
        let params = OptimizerParams::adam(args.eta, args.beta1.unwrap_or(0.0), beta2);
        params.validate()?;
        let fp = normalized::stability_verdict_with(&params, k, args.boundary_delta);
        out["fixed_point"] = serde_json::to_value(fp).map_err(degen_core::Error::from)?;
        out["regime"] = json!(fp.regime);
        out["stable"] = json!(fp.stable);
        if k >= 4 {
            out["x_rate"] = json!(normalized::x_eigenvalue(beta2, k));
            out["adam_rate"] = json!(theory::adam_contraction(&params, k)?);
            out["coupling"] = json!(theory::coupling_boundary(&params, k)?);
            out["rmsprop"] = json!({
                "lambda_star": theory::rmsprop_lambda_star(&OptimizerParams::rmsprop(args.eta, beta2), k)?,
                "v_ratio": theory::v_ratio_limit(&params),
                "gamma": theory::rmsprop_gamma(beta2),
                "alpha": theory::rmsprop_alpha(beta2),
            });
        } else {
            let alpha = args.alpha.unwrap_or_else(|| theory::rmsprop_alpha(beta2));
            out["quadratic"] = json!(theory::quadratic_case(&params, alpha)?);
        }
    }
    Ok(out)
}
