//! `relaynet gradcheck`: runs the finite-difference suite over every layer
//! backward, every loss gradient, and the whole assembled network, printing
//! one line per component. Exits nonzero if any component exceeds its
//! threshold.

use clap::Args;
use relaynet_core::gradcheck::{run_suite, FaultInjection};
use relaynet_core::{Error, Result};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// RNG seed for the probe tensors (default: RELAYNET_SEED, else 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Negative control: corrupt one analytic gradient so the suite must
    /// report a failure
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

pub fn run(args: GradcheckArgs) -> Result<()> {
    let seed = match args.seed {
        Some(s) => s,
        None => super::env_seed()?.unwrap_or(0),
    };
    let fault = args.inject_fault.then_some(FaultInjection::ConvKernelGradient);
    let results = run_suite(seed, fault);

    let mut failures = 0usize;
    for r in &results {
        let excluded = if r.excluded > 0 {
            format!("  ({} probes excluded at kinks)", r.excluded)
        } else {
            String::new()
        };
        println!(
            "{:<34} max rel err {:>10.3e}  threshold {:>5.0e}  {}{excluded}",
            r.component,
            r.max_rel_err,
            r.threshold,
            if r.pass { "PASS" } else { "FAIL" }
        );
        if !r.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(Error::Numeric(format!(
            "{failures} of {} gradient checks exceeded their threshold",
            results.len()
        )));
    }
    println!("all {} gradient checks passed", results.len());
    Ok(())
}
