//! Two UEs forced onto the same preamble: the collision costs retries but
//! both connect after backoff.

use ntn_rach::{multi_ue_run, CorrectionStrategy, Duration, Scenario};

fn main() -> ntn_rach::Result<()> {
    let mut s = Scenario::new(CorrectionStrategy::ta(), Duration::from_ms_f64(4.0)?);
    s.n_ues = 2;
    s.force_same_preamble = true;
    s.seed = 7;
    let r = multi_ue_run(&s)?;
    for u in &r.ues {
        let t = u.access_time.map_or("-".into(), |t| format!("{:.1} ms", t.as_ms_f64()));
        println!("UE {}: {} after {} retries ({t})", u.ue, u.furthest_stage, u.retries);
    }
    println!("collisions seen: {}", r.collision_count);
    Ok(())
}
