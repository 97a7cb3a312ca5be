//! UE-side advance versus BS-side delay over a transparent GEO link.

use ntn_rach::{run, CorrectionStrategy, Duration, Scenario};

fn main() -> ntn_rach::Result<()> {
    let rtt = Duration::from_ms_f64(480.0)?;
    for strategy in [CorrectionStrategy::ta(), CorrectionStrategy::td()] {
        let r = run(&Scenario::new(strategy, rtt))?;
        let t = r.access_time().map_or("-".into(), |t| format!("{:.1} ms", t.as_ms_f64()));
        println!("{:<14} {t}", strategy.mode.to_string());
    }
    Ok(())
}
