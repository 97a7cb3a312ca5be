//! Adds the four protocol fixes one at a time and shows how far the
//! procedure gets with each set. Usage: `fix_ladder [rtt_ms] [ta|td]`.

use ntn_rach::{ladder, ladder_holds, CorrectionStrategy, Duration, Scenario};

fn main() -> ntn_rach::Result<()> {
    let mut args = std::env::args().skip(1);
    let rtt_ms: f64 = args.next().map_or(Ok(4.0), |a| a.parse()).expect("rtt in ms");
    let strategy = match args.next().as_deref() {
        Some("td") => CorrectionStrategy::td(),
        _ => CorrectionStrategy::ta(),
    };
    let rtt = Duration::from_ms_f64(rtt_ms)?;
    let steps = ladder(&Scenario::new(strategy, rtt))?;
    for s in &steps {
        println!("{:<20} {}", s.flags.to_string(), s.stage);
    }
    println!("progression holds: {}", ladder_holds(&steps, rtt));
    Ok(())
}
