//! One terrestrial UE, no propagation delay. Prints the access time and the
//! message trace.

use ntn_rach::{run, CorrectionStrategy, Duration, Scenario};

fn main() -> ntn_rach::Result<()> {
    let report = run(&Scenario::new(CorrectionStrategy::no_correction(), Duration::ZERO))?;
    for r in &report.trace {
        println!("{:>16}  {:<6} {:<10} {}", r.time.to_string(), format!("{:?}", r.side), r.event, r.detail);
    }
    match report.access_time() {
        Some(t) => println!("connected after {:.3} ms", t.as_ms_f64()),
        None => println!("stopped at {}", report.furthest_stage()),
    }
    Ok(())
}
