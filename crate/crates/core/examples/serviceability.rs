//! Which RTT ranges a fixed BS-side subframe delay can serve, compared with
//! per-UE advance.

use ntn_rach::geometry::{ta_serviceability, td_serviceability};
use ntn_rach::{Duration, PreambleFormat, Standard};

fn main() -> ntn_rach::Result<()> {
    for (lo, hi) in [(4.1, 4.6), (5.6, 5.9), (20.0, 20.05)] {
        let (lo, hi) = (Duration::from_ms_f64(lo)?, Duration::from_ms_f64(hi)?);
        let td = td_serviceability(lo, hi, Standard::Lte, &PreambleFormat::ALL);
        let ta = ta_serviceability(lo, hi, Standard::Lte, &PreambleFormat::ALL);
        println!("{lo} .. {hi}: delay {td:?}, advance {ta:?}");
    }
    Ok(())
}
