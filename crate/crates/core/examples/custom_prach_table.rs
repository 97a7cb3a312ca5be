//! Loads PRACH rows from a CSV file and runs an NB-IoT UE on one of them.
//! Usage: `custom_prach_table [path]`.

use std::path::PathBuf;

use ntn_rach::raconfig::PrachTable;
use ntn_rach::{run, CorrectionStrategy, Duration, Scenario, Standard};

fn main() -> ntn_rach::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/nbiot_prach.csv"), PathBuf::from);
    let table = PrachTable::load(&path)?;
    for row in table.rows() {
        println!("{row:?}");
    }
    let mut s = Scenario::new(CorrectionStrategy::ta(), Duration::from_ms_f64(4.3)?);
    s.standard = Standard::NbIot;
    s.prach_index = 2;
    s.prach_table = Some(table);
    let r = run(&s)?;
    println!("{} in {:?} ms", r.furthest_stage(), r.access_time().map(|t| t.as_ms_f64()));
    Ok(())
}
