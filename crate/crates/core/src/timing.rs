//! Time base shared by every node in the simulation.
//!
//! Absolute time is an integer count of LTE base samples (`Ts = 1/(2048 * 15 kHz)`),
//! so one subframe is exactly 30 720 samples and every NR slot length for
//! numerology 0..=4 is an integer number of samples. All scheduling arithmetic
//! stays exact.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base samples per millisecond (30.72 MHz).
pub const SAMPLES_PER_MS: u64 = 30_720;
/// Samples in one 1 ms subframe.
pub const SAMPLES_PER_SF: u64 = SAMPLES_PER_MS;
/// Subframes in one radio frame.
pub const SF_PER_FRAME: u64 = 10;
/// Samples in one 10 ms radio frame.
pub const SAMPLES_PER_FRAME: u64 = SAMPLES_PER_SF * SF_PER_FRAME;
/// Samples per timing advance command step (16 Ts).
pub const TAC_STEP_SAMPLES: u64 = 16;
/// Largest timing advance command carried in a random access response.
pub const DEFAULT_MAX_TAC: u32 = 1282;

/// LTE sample duration in seconds.
pub const TS_SECONDS: f64 = 1.0 / (2048.0 * 15_000.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Standard {
    #[serde(rename = "LTE", alias = "lte")]
    Lte,
    #[serde(rename = "NBIOT", alias = "nbiot", alias = "NB-IoT", alias = "nb-iot")]
    NbIot,
    #[serde(rename = "NR", alias = "nr")]
    Nr,
}

impl fmt::Display for Standard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Standard::Lte => "LTE",
            Standard::NbIot => "NBIOT",
            Standard::Nr => "NR",
        })
    }
}

impl std::str::FromStr for Standard {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "").as_str() {
            "LTE" => Ok(Standard::Lte),
            "NBIOT" => Ok(Standard::NbIot),
            "NR" => Ok(Standard::Nr),
            other => Err(Error::Config(format!("unknown standard `{other}`"))),
        }
    }
}

/// Radio time base for one standard / numerology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeBase {
    pub standard: Standard,
    /// NR numerology, `0..=4`. Always 0 for LTE and NB-IoT.
    pub mu: u8,
}

impl TimeBase {
    pub fn new(standard: Standard, mu: u8) -> Result<Self> {
        match standard {
            Standard::Nr if mu > 4 => Err(Error::Range(format!("NR numerology {mu} outside 0..=4"))),
            Standard::Nr => Ok(Self { standard, mu }),
            _ => Ok(Self { standard, mu: 0 }),
        }
    }

    pub fn lte() -> Self {
        Self { standard: Standard::Lte, mu: 0 }
    }

    /// Sample duration of the standard's reference FFT (2048 points at the
    /// subcarrier spacing).
    pub fn sample_duration_s(&self) -> f64 {
        match self.standard {
            Standard::Nr => TS_SECONDS / f64::from(1u32 << self.mu),
            _ => TS_SECONDS,
        }
    }

    pub fn sf_duration(&self) -> Duration {
        Duration::SF
    }

    pub fn frame_duration(&self) -> Duration {
        Duration::FRAME
    }

    pub fn frame_sf_count(&self) -> u64 {
        SF_PER_FRAME
    }

    /// Slots per subframe: `2^mu` for NR, two 0.5 ms slots for LTE/NB-IoT.
    pub fn slots_per_sf(&self) -> u64 {
        match self.standard {
            Standard::Nr => 1 << self.mu,
            _ => 2,
        }
    }

    pub fn slot_duration(&self) -> Duration {
        Duration(SAMPLES_PER_SF / self.slots_per_sf())
    }
}

/// Non-negative span of base samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Duration(pub u64);

impl Duration {
    pub const ZERO: Duration = Duration(0);
    pub const SF: Duration = Duration(SAMPLES_PER_SF);
    pub const FRAME: Duration = Duration(SAMPLES_PER_FRAME);

    pub const fn from_samples(samples: u64) -> Self {
        Duration(samples)
    }

    pub const fn from_sf(sf: u64) -> Self {
        Duration(sf * SAMPLES_PER_SF)
    }

    /// Rounds to the nearest base sample. Negative or NaN input is an error.
    pub fn from_secs_f64(secs: f64) -> Result<Self> {
        if !secs.is_finite() || secs < 0.0 {
            return Err(Error::Range(format!("duration {secs} s is not a non-negative finite value")));
        }
        Ok(Duration((secs / TS_SECONDS).round() as u64))
    }

    pub fn from_ms_f64(ms: f64) -> Result<Self> {
        Self::from_secs_f64(ms / 1e3)
    }

    pub const fn samples(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * TS_SECONDS
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / SAMPLES_PER_MS as f64
    }

    /// Whole subframes contained in this duration (floor).
    pub const fn whole_sf(self) -> u64 {
        self.0 / SAMPLES_PER_SF
    }

    /// Rounds up to the next subframe boundary.
    pub const fn ceil_sf(self) -> Duration {
        Duration(self.0.div_ceil(SAMPLES_PER_SF) * SAMPLES_PER_SF)
    }

    /// Rounds down to a subframe boundary.
    pub const fn floor_sf(self) -> Duration {
        Duration(self.0 / SAMPLES_PER_SF * SAMPLES_PER_SF)
    }

    pub fn checked_sub(self, rhs: Duration) -> Option<Duration> {
        self.0.checked_sub(rhs.0).map(Duration)
    }

    pub fn saturating_sub(self, rhs: Duration) -> Duration {
        Duration(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl Sub for Duration {
    type Output = Duration;
    fn sub(self, rhs: Duration) -> Duration {
        Duration(self.0 - rhs.0)
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} ms", self.as_ms_f64())
    }
}

/// Position on the shared 10 ms frame grid, stored as absolute base samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TimeStamp(u64);

/// A [`TimeStamp`] broken into its radix digits for a given numerology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPosition {
    pub frame: u64,
    pub sf: u8,
    pub slot: u8,
    pub sample: u64,
}

impl TimeStamp {
    pub const ZERO: TimeStamp = TimeStamp(0);

    pub const fn from_samples(samples: u64) -> Self {
        TimeStamp(samples)
    }

    /// Builds a timestamp from a frame and subframe at slot 0, sample 0.
    pub fn at(frame: u64, sf: u8) -> Self {
        debug_assert!(u64::from(sf) < SF_PER_FRAME);
        TimeStamp(frame * SAMPLES_PER_FRAME + u64::from(sf) * SAMPLES_PER_SF)
    }

    pub fn from_parts(pos: GridPosition, base: &TimeBase) -> Result<Self> {
        let slot_len = base.slot_duration().samples();
        if u64::from(pos.sf) >= SF_PER_FRAME || u64::from(pos.slot) >= base.slots_per_sf() || pos.sample >= slot_len {
            return Err(Error::Range(format!("grid position {pos:?} outside its radix")));
        }
        Ok(TimeStamp(
            pos.frame * SAMPLES_PER_FRAME
                + u64::from(pos.sf) * SAMPLES_PER_SF
                + u64::from(pos.slot) * slot_len
                + pos.sample,
        ))
    }

    pub const fn samples(self) -> u64 {
        self.0
    }

    pub const fn frame(self) -> u64 {
        self.0 / SAMPLES_PER_FRAME
    }

    /// Subframe index within the frame, `0..=9`.
    pub const fn sf(self) -> u8 {
        ((self.0 % SAMPLES_PER_FRAME) / SAMPLES_PER_SF) as u8
    }

    /// Absolute subframe count since time zero.
    pub const fn sf_count(self) -> u64 {
        self.0 / SAMPLES_PER_SF
    }

    pub fn grid(self, base: &TimeBase) -> GridPosition {
        let slot_len = base.slot_duration().samples();
        let in_sf = self.0 % SAMPLES_PER_SF;
        GridPosition { frame: self.frame(), sf: self.sf(), slot: (in_sf / slot_len) as u8, sample: in_sf % slot_len }
    }

    /// Start of the subframe containing this instant.
    pub const fn sf_floor(self) -> TimeStamp {
        TimeStamp(self.0 / SAMPLES_PER_SF * SAMPLES_PER_SF)
    }

    /// Next subframe boundary at or after this instant.
    pub const fn sf_ceil(self) -> TimeStamp {
        TimeStamp(self.0.div_ceil(SAMPLES_PER_SF) * SAMPLES_PER_SF)
    }

    pub fn checked_add(self, d: Duration) -> Result<TimeStamp> {
        self.0.checked_add(d.0).map(TimeStamp).ok_or_else(|| Error::Range("timestamp overflow".into()))
    }

    pub fn checked_sub(self, d: Duration) -> Result<TimeStamp> {
        self.0.checked_sub(d.0).map(TimeStamp).ok_or(Error::Underflow { at: self.0, minus: d.0 })
    }

    /// Signed offset `self - earlier` in samples.
    pub fn offset_from(self, earlier: TimeStamp) -> i64 {
        self.0 as i64 - earlier.0 as i64
    }

    pub fn since(self, earlier: TimeStamp) -> Option<Duration> {
        self.0.checked_sub(earlier.0).map(Duration)
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / SAMPLES_PER_MS as f64
    }
}

impl Add<Duration> for TimeStamp {
    type Output = TimeStamp;
    fn add(self, rhs: Duration) -> TimeStamp {
        TimeStamp(self.0 + rhs.0)
    }
}

impl fmt::Display for TimeStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let in_sf = self.0 % SAMPLES_PER_SF;
        write!(f, "f{}.sf{}+{}", self.frame(), self.sf(), in_sf)
    }
}

/// Frame / subframe / sample-level split of a delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TimingAdvance {
    /// Whole frames.
    pub fa: u64,
    /// Whole subframes, `0..=9`.
    pub sfa: u8,
    /// Timing advance command in 16 Ts steps.
    pub tac: u32,
}

impl TimingAdvance {
    pub fn whole_sf_part(&self) -> Duration {
        Duration(self.fa * SAMPLES_PER_FRAME + u64::from(self.sfa) * SAMPLES_PER_SF)
    }

    pub fn sample_part(&self) -> Duration {
        Duration(u64::from(self.tac) * TAC_STEP_SAMPLES)
    }

    pub fn total(&self) -> Duration {
        self.whole_sf_part() + self.sample_part()
    }
}

/// Result of splitting a delay estimate into a [`TimingAdvance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decomposition {
    pub advance: TimingAdvance,
    /// Part the advance could not represent. Below one TAC step whenever the
    /// sub-subframe remainder fits inside the TAC range.
    pub residual: Duration,
}

impl Decomposition {
    pub fn recompose(&self) -> Duration {
        self.advance.total() + self.residual
    }
}

/// `16 * Ts * tac` in seconds.
pub fn sample_ta_seconds(tac: u32) -> Result<f64> {
    sample_ta_seconds_with_limit(tac, DEFAULT_MAX_TAC)
}

pub fn sample_ta_seconds_with_limit(tac: u32, max_tac: u32) -> Result<f64> {
    if tac > max_tac {
        return Err(Error::Range(format!("TAC {tac} exceeds {max_tac}")));
    }
    Ok(16.0 * TS_SECONDS * f64::from(tac))
}

/// Splits a round-trip estimate into frame, subframe and TAC parts.
pub fn decompose_delay(rtt_est: Duration) -> Decomposition {
    decompose_delay_with_limit(rtt_est, DEFAULT_MAX_TAC)
}

pub fn decompose_delay_with_limit(rtt_est: Duration, max_tac: u32) -> Decomposition {
    let fa = rtt_est.0 / SAMPLES_PER_FRAME;
    let rem = rtt_est.0 % SAMPLES_PER_FRAME;
    let sfa = (rem / SAMPLES_PER_SF) as u8;
    let rem = rem % SAMPLES_PER_SF;
    let tac = (rem / TAC_STEP_SAMPLES).min(u64::from(max_tac)) as u32;
    let residual = rem - u64::from(tac) * TAC_STEP_SAMPLES;
    Decomposition { advance: TimingAdvance { fa, sfa, tac }, residual: Duration(residual) }
}

/// Same as [`decompose_delay`] for a delay given in seconds.
pub fn decompose_delay_secs(rtt_est_s: f64) -> Result<Decomposition> {
    Ok(decompose_delay(Duration::from_secs_f64(rtt_est_s)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn sample_ta_examples() {
        assert_eq!(sample_ta_seconds(0).unwrap(), 0.0);
        let max = sample_ta_seconds(1282).unwrap();
        assert!((max - 0.67e-3).abs() < 0.005e-3, "{max}");
        assert_relative_eq!(sample_ta_seconds(1).unwrap(), 16.0 / (2048.0 * 15000.0));
        assert_relative_eq!(sample_ta_seconds(1).unwrap(), 0.5208e-6, max_relative = 1e-4);
        assert!(sample_ta_seconds(1283).is_err());
    }

    #[test]
    fn decompose_leo_example() {
        let d = decompose_delay_secs(4.3e-3).unwrap();
        assert_eq!(d.advance, TimingAdvance { fa: 0, sfa: 4, tac: 576 });
        assert_eq!(d.residual, Duration::ZERO);
        assert_relative_eq!(d.advance.sample_part().as_ms_f64(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn decompose_zero_and_geo() {
        let d = decompose_delay(Duration::ZERO);
        assert_eq!(d.advance, TimingAdvance::default());
        assert_eq!(d.residual, Duration::ZERO);

        let d = decompose_delay_secs(0.480).unwrap();
        assert_eq!(d.advance, TimingAdvance { fa: 48, sfa: 0, tac: 0 });
    }

    #[test]
    fn decompose_reports_unrepresentable_residual() {
        // 0.9 ms is past the TAC range; the excess over 1282 steps is reported.
        let d = decompose_delay_secs(0.9e-3).unwrap();
        assert_eq!(d.advance.tac, 1282);
        assert_eq!(d.residual.samples(), 27_648 - 1282 * 16);
        assert_eq!(d.recompose(), Duration::from_ms_f64(0.9).unwrap());
    }

    #[test]
    fn timestamp_radix_carry() {
        let t = TimeStamp::at(0, 9) + Duration::from_sf(1);
        assert_eq!((t.frame(), t.sf()), (1, 0));
        let t = TimeStamp::at(0, 1) + Duration::from_sf(4);
        assert_eq!((t.frame(), t.sf()), (0, 5));
        let t = TimeStamp::at(1, 0).checked_sub(Duration::from_sf(10)).unwrap();
        assert_eq!((t.frame(), t.sf()), (0, 0));
        assert!(matches!(TimeStamp::at(0, 0).checked_sub(Duration::from_sf(1)), Err(Error::Underflow { .. })));
    }

    #[test]
    fn grid_position_round_trip_nr() {
        let base = TimeBase::new(Standard::Nr, 2).unwrap();
        assert_eq!(base.slot_duration().samples(), 7680);
        let pos = GridPosition { frame: 3, sf: 7, slot: 2, sample: 11 };
        let t = TimeStamp::from_parts(pos, &base).unwrap();
        assert_eq!(t.grid(&base), pos);
        let bad = GridPosition { slot: 4, ..pos };
        assert!(TimeStamp::from_parts(bad, &base).is_err());
    }

    #[test]
    fn time_base_constants() {
        let lte = TimeBase::lte();
        assert_relative_eq!(lte.sample_duration_s(), 1.0 / (2048.0 * 15000.0));
        assert_eq!(lte.frame_duration().as_ms_f64(), 10.0);
        for mu in 0..=4u8 {
            let nr = TimeBase::new(Standard::Nr, mu).unwrap();
            assert_relative_eq!(nr.slot_duration().as_ms_f64(), 1.0 / f64::from(1u32 << mu));
            assert_eq!(nr.frame_duration().as_ms_f64(), 10.0);
        }
        assert!(TimeBase::new(Standard::Nr, 5).is_err());
    }

    proptest! {
        #[test]
        fn decompose_recomposes_exactly(samples in 0u64..(700 * SAMPLES_PER_MS)) {
            let d = decompose_delay(Duration(samples));
            prop_assert_eq!(d.recompose(), Duration(samples));
            prop_assert!(d.advance.sfa < 10);
            let sub_sf = samples % SAMPLES_PER_SF;
            if sub_sf <= u64::from(DEFAULT_MAX_TAC) * TAC_STEP_SAMPLES {
                prop_assert!(d.residual.samples() < TAC_STEP_SAMPLES);
            }
        }

        #[test]
        fn short_delays_need_no_sf_advance(samples in 0u64..20_582) {
            // 20 582 samples ~ 0.67 ms
            let d = decompose_delay(Duration(samples));
            prop_assert_eq!(d.advance.fa, 0);
            prop_assert_eq!(d.advance.sfa, 0);
        }

        #[test]
        fn add_sub_identity(start in 0u64..1_000_000_000, a in 0u64..50_000_000, b in 0u64..50_000_000) {
            let t = TimeStamp::from_samples(start);
            let (da, db) = (Duration(a), Duration(b));
            prop_assert_eq!((t + da) + db, t + (da + db));
            prop_assert_eq!((t + da).checked_sub(da).unwrap(), t);
        }
    }
}
