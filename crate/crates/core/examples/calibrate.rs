//! Prints calibrated targets for the builtin workloads on the 200-point
//! default sample.

use std::time::Instant;

use hplist::hpspace::{default_space, sample};
use hplist::workbench::{builtin_workloads, calibrate_targets, DEFAULT_QUANTILE};

fn main() -> hplist::error::Result<()> {
    let points = sample(&default_space(), 200, 0)?;
    let start = Instant::now();
    let (_, report) = calibrate_targets(&builtin_workloads(), &points, DEFAULT_QUANTILE)?;
    for row in &report {
        println!(
            "{:<12} target {:?}  successes {:>3}  diverged {:>3} / {}",
            row.workload, row.target, row.successes, row.diverged, row.points
        );
    }
    eprintln!("{:.1?}", start.elapsed());
    Ok(())
}
