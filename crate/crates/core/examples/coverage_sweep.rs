//! Cell radius against centre elevation for the LTE preamble formats at
//! 600 km, as CSV on stdout.

use ntn_rach::geometry::{coverage_csv, coverage_sweep};
use ntn_rach::{NtnGeometry, PreambleFormat, Standard};

fn main() {
    let alphas: Vec<f64> = (10..=85).step_by(5).map(f64::from).collect();
    let points = coverage_sweep(&NtnGeometry::leo(), Standard::Lte, &PreambleFormat::ALL, &alphas);
    print!("{}", coverage_csv(&points));
}
