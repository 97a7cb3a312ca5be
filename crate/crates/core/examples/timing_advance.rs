//! Splits a round trip into whole frames, subframes and TAC steps.

use ntn_rach::timing::decompose_delay;
use ntn_rach::Duration;

fn main() -> ntn_rach::Result<()> {
    for ms in [0.5, 4.0, 4.3, 25.0, 477.57, 480.0] {
        let d = decompose_delay(Duration::from_ms_f64(ms)?);
        let a = d.advance;
        println!("{ms:>7} ms -> FA {} SFA {} TAC {} residual {} samples", a.fa, a.sfa, a.tac, d.residual.samples());
    }
    Ok(())
}
