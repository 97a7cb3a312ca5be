//! Msg3 scrambling and pilot shift depend on the subframe number, so a UE and
//! BS that disagree on it cannot decode each other.

use ntn_rach::sequences::{c_init_for_sf, dmrs_alpha, gold_generate, sequences_match, SequenceParams};

fn main() {
    let params = SequenceParams::default();
    for sf in [1u8, 5] {
        let c = c_init_for_sf(params.scrambling_static, sf);
        let bits: String = gold_generate(c, 32).bits.iter().map(|b| char::from(b'0' + b)).collect();
        println!("SF {sf}: c_init {c:#010x} alpha {:.3} rad  {bits}", dmrs_alpha(&params.dmrs(sf)));
    }
    println!("UE in SF 1, BS assumes SF 5: match = {}", sequences_match(1, 5, &params));
    println!("UE in SF 1, BS corrected to SF 1: match = {}", sequences_match(1, 1, &params));
}
