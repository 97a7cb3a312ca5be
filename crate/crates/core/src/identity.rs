//! RA-RNTI derivation for LTE, NB-IoT and NR, and the subframe-index
//! corrections that keep the UE and BS computing the same identity when the
//! round trip spans whole subframes.

use crate::error::{Error, Result};
use crate::timing::{Standard, SF_PER_FRAME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RaRnti {
    pub value: u32,
    pub standard: Standard,
}

/// Frequency, carrier and symbol indices. The simulator only models timing,
/// so these stay at their configured (default zero) values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RntiIndices {
    pub f_id: u32,
    pub c_id: u32,
    pub s_id: u32,
}

pub fn ra_rnti_lte(t_id: u32, f_id: u32) -> Result<RaRnti> {
    if t_id > 9 {
        return Err(Error::Range(format!("LTE t_id {t_id} outside 0..=9")));
    }
    Ok(RaRnti { value: 1 + t_id + 10 * f_id, standard: Standard::Lte })
}

pub fn ra_rnti_nbiot(t_id: u32, c_id: u32) -> RaRnti {
    RaRnti { value: 1 + t_id / 4 + 256 * c_id, standard: Standard::NbIot }
}

pub fn ra_rnti_nr(s_id: u32, t_id: u32, f_id: u32, c_id: u32) -> Result<RaRnti> {
    if s_id >= 14 {
        return Err(Error::Range(format!("NR s_id {s_id} outside 0..14")));
    }
    if t_id >= 80 {
        return Err(Error::Range(format!("NR t_id {t_id} outside 0..80")));
    }
    if f_id >= 8 {
        return Err(Error::Range(format!("NR f_id {f_id} outside 0..8")));
    }
    Ok(RaRnti { value: 1 + s_id + 14 * t_id + 14 * 80 * f_id + 14 * 80 * 8 * c_id, standard: Standard::Nr })
}

/// RA-RNTI for an opportunity starting at subframe `sf` (and, for NR, slot
/// `slot` within it).
pub fn ra_rnti(standard: Standard, sf: u8, slot: u8, slots_per_sf: u64, ids: RntiIndices) -> Result<RaRnti> {
    match standard {
        Standard::Lte => ra_rnti_lte(u32::from(sf), ids.f_id),
        Standard::NbIot => Ok(ra_rnti_nbiot(u32::from(sf), ids.c_id)),
        Standard::Nr => {
            let t_id = u32::from(sf) * slots_per_sf as u32 + u32::from(slot);
            ra_rnti_nr(ids.s_id, t_id, ids.f_id, ids.c_id)
        }
    }
}

/// Subframe-level correction applied before computing `t_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TidCorrection {
    #[default]
    None,
    /// UE advanced its transmission; it computes `t_id` of the nominal RAO.
    UeTa { sfa: u8, fa: u64 },
    /// BS delayed its RAO; it computes `t_id` of the UE's transmit subframe.
    BsTd { sfd: u8, fd: u64 },
}

/// Corrected subframe index. Frame parts never change a subframe index; they
/// are carried so callers can pass a full decomposition.
pub fn corrected_t_id(raw_t_id: u8, correction: TidCorrection) -> u8 {
    let sf = i64::from(raw_t_id);
    let n = SF_PER_FRAME as i64;
    let shifted = match correction {
        TidCorrection::None => sf,
        TidCorrection::UeTa { sfa, .. } => sf + i64::from(sfa),
        TidCorrection::BsTd { sfd, .. } => sf - i64::from(sfd),
    };
    shifted.rem_euclid(n) as u8
}
