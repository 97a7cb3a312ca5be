//! Subframe-dependent uplink sequences: Gold scrambling codes and DMRS
//! cyclic-shift pilots.
//!
//! Msg3 decodes only when the BS rebuilds exactly the scrambling code and
//! pilot the UE used. Both depend on the subframe index, so a round trip that
//! spans whole subframes breaks decoding unless one side corrects its index.
//! The mismatch is uplink-only: downlink numbering is anchored to the
//! synchronisation signals and always agrees.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::timing::SF_PER_FRAME;

/// Gold sequence output offset.
pub const NC: usize = 1600;

const MASK31: u32 = (1 << 31) - 1;
/// Seed reserved for deriving the per-subframe pilot shift table.
const PRS_TABLE_SEED: u32 = 0x2A5;
/// Seed offset for DMRS base sequences.
const BASE_SEQ_SEED: u32 = 0x1_0000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldSequence {
    pub c_init: u32,
    pub bits: Vec<u8>,
}

impl GoldSequence {
    pub fn ones_fraction(&self) -> f64 {
        self.bits.iter().map(|&b| f64::from(b)).sum::<f64>() / self.bits.len() as f64
    }
}

/// Length-31 Gold sequence generator (x1 taps {3,0}, x2 taps {3,2,1,0}).
#[derive(Debug, Clone)]
struct GoldRegister {
    x1: u32,
    x2: u32,
}

impl GoldRegister {
    fn new(c_init: u32) -> Self {
        let mut reg = GoldRegister { x1: 1, x2: c_init & MASK31 };
        for _ in 0..NC {
            reg.step();
        }
        reg
    }

    #[inline]
    fn step(&mut self) {
        let n1 = (self.x1 ^ (self.x1 >> 3)) & 1;
        let n2 = (self.x2 ^ (self.x2 >> 1) ^ (self.x2 >> 2) ^ (self.x2 >> 3)) & 1;
        self.x1 = (self.x1 >> 1) | (n1 << 30);
        self.x2 = (self.x2 >> 1) | (n2 << 30);
    }

    #[inline]
    fn next_bit(&mut self) -> u8 {
        let out = ((self.x1 ^ self.x2) & 1) as u8;
        self.step();
        out
    }
}

pub fn gold_generate(c_init: u32, length: usize) -> GoldSequence {
    let mut reg = GoldRegister::new(c_init);
    GoldSequence { c_init: c_init & MASK31, bits: (0..length).map(|_| reg.next_bit()).collect() }
}

/// Scrambling initialisation for subframe `sf`: a static part (identity and
/// cell) plus a subframe-dependent term.
pub fn c_init_for_sf(static_part: u32, sf: u8) -> u32 {
    debug_assert!(u64::from(sf) < SF_PER_FRAME);
    static_part.wrapping_add(x2_init(sf)) & MASK31
}

fn x2_init(sf: u8) -> u32 {
    // Slot-pair index in bits 9..
    u32::from(sf) << 9
}

/// Per-subframe pseudo-random cyclic shift component, injective on 0..=9.
pub fn n_prs(sf: u8) -> u8 {
    static TABLE: OnceLock<[u8; 10]> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let bits = gold_generate(PRS_TABLE_SEED, 4096).bits;
        let mut out = [0u8; 10];
        let mut used = [false; 12];
        let mut filled = 0;
        for chunk in bits.chunks_exact(4) {
            let v = chunk.iter().fold(0u8, |acc, &b| (acc << 1) | b);
            if v < 12 && !used[usize::from(v)] {
                used[usize::from(v)] = true;
                out[filled] = v;
                filled += 1;
                if filled == out.len() {
                    break;
                }
            }
        }
        assert_eq!(filled, out.len(), "pilot shift table underfilled");
        out
    });
    table[usize::from(sf) % table.len()]
}

/// Static DMRS configuration plus the subframe it is generated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmrsParams {
    pub n_dmrs_1: u8,
    pub n_dmrs_2: u8,
    pub sf: u8,
    pub u: u8,
    pub v: u8,
}

impl DmrsParams {
    pub fn valid(&self) -> bool {
        self.n_dmrs_1 <= 10 && self.n_dmrs_2 <= 10 && u64::from(self.sf) < SF_PER_FRAME && self.u < 30 && self.v < 2
    }

    /// Shift index `(n1 + n2 + n_prs(sf)) mod 12`.
    pub fn cyclic_shift(&self) -> u8 {
        (self.n_dmrs_1 + self.n_dmrs_2 + n_prs(self.sf)) % 12
    }
}

pub fn dmrs_alpha(p: &DmrsParams) -> f64 {
    2.0 * PI * f64::from(p.cyclic_shift()) / 12.0
}

/// Unit-modulus QPSK phase sequence standing in for the base sequence of
/// group `u`, sequence `v`.
pub fn base_sequence(u: u8, v: u8, length: usize) -> Vec<Complex64> {
    let c_init = BASE_SEQ_SEED + (u32::from(u) << 1) + u32::from(v);
    let bits = gold_generate(c_init, 2 * length).bits;
    bits.chunks_exact(2)
        .map(|b| {
            let q = f64::from(2 * b[0] + b[1]);
            Complex64::from_polar(1.0, PI / 4.0 * (2.0 * q + 1.0))
        })
        .collect()
}

pub fn dmrs_sequence(p: &DmrsParams, length: usize) -> Vec<Complex64> {
    let alpha = dmrs_alpha(p);
    base_sequence(p.u, p.v, length)
        .into_iter()
        .enumerate()
        .map(|(n, r)| Complex64::from_polar(1.0, alpha * n as f64) * r)
        .collect()
}

/// Subframe-independent uplink sequence configuration shared by UE and BS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceParams {
    /// Identity/cell part of the scrambling initialisation.
    pub scrambling_static: u32,
    pub n_dmrs_1: u8,
    pub n_dmrs_2: u8,
    pub u: u8,
    pub v: u8,
}

impl Default for SequenceParams {
    fn default() -> Self {
        // Temporary C-RNTI 0x003D, cell 1.
        Self { scrambling_static: (0x3D << 14) + 1, n_dmrs_1: 2, n_dmrs_2: 0, u: 5, v: 0 }
    }
}

impl SequenceParams {
    pub fn dmrs(&self, sf: u8) -> DmrsParams {
        DmrsParams { n_dmrs_1: self.n_dmrs_1, n_dmrs_2: self.n_dmrs_2, sf, u: self.u, v: self.v }
    }
}

/// Whether Msg3 scrambled and piloted for `ue_sf` decodes at a BS that
/// assumes `bs_assumed_sf`.
pub fn sequences_match(ue_sf: u8, bs_assumed_sf: u8, params: &SequenceParams) -> bool {
    let n = SF_PER_FRAME as u8;
    let (a, b) = (ue_sf % n, bs_assumed_sf % n);
    c_init_for_sf(params.scrambling_static, a) == c_init_for_sf(params.scrambling_static, b)
        && params.dmrs(a).cyclic_shift() == params.dmrs(b).cyclic_shift()
}
