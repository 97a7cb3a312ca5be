//! Why a whole-subframe round trip breaks RA-RNTI agreement, and how the
//! t_id corrections restore it.

use ntn_rach::identity::{corrected_t_id, ra_rnti_lte, TidCorrection};

fn main() -> ntn_rach::Result<()> {
    // nominal RAO in SF 1, 4 ms round trip
    let (nominal, sfa) = (1u8, 4u8);
    let ue_tx = (nominal + 10 - sfa) % 10;

    let bs = ra_rnti_lte(u32::from(nominal), 0)?;
    let ue_naive = ra_rnti_lte(u32::from(ue_tx), 0)?;
    println!("advanced UE sends in SF {ue_tx}: UE {} vs BS {}", ue_naive.value, bs.value);

    let ue_fixed = corrected_t_id(ue_tx, TidCorrection::UeTa { sfa, fa: 0 });
    println!("UE with correction: {}", ra_rnti_lte(u32::from(ue_fixed), 0)?.value);

    // BS side: RAO delayed to SF 5, UE sent in SF 1
    let bs_fixed = corrected_t_id(5, TidCorrection::BsTd { sfd: 4, fd: 0 });
    println!("BS delaying its RAO by 4 SF computes {}", ra_rnti_lte(u32::from(bs_fixed), 0)?.value);
    Ok(())
}
