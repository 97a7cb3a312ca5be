//! PRACH configuration tables, preamble formats, RAO schedules and the RAR
//! window / contention resolution timer grids.
//!
//! A [`PrachConfig`] is a table row plus a signed subframe shift. The UE-side
//! advanced schedule and the BS-side delayed schedule are the same row with a
//! negative or positive shift, so borrow across frame boundaries falls out of
//! plain integer arithmetic on the absolute subframe count.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::timing::{decompose_delay, Duration, Standard, TimeBase, TimeStamp, TimingAdvance, SF_PER_FRAME};

/// Frames on which a configuration index has random access opportunities.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FrameRule {
    Even,
    Any,
    /// Frames `f` with `f mod period` in `frames`. Entries strictly increasing
    /// and below `period`.
    List {
        frames: Vec<u64>,
        period: u64,
    },
}

impl FrameRule {
    pub fn list(frames: Vec<u64>, period: u64) -> Result<Self> {
        if period == 0 {
            return Err(Error::Config("frame rule period must be positive".into()));
        }
        if frames.is_empty() {
            return Err(Error::Config("frame rule list is empty".into()));
        }
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("frame list {frames:?} is not strictly increasing")));
        }
        if frames.iter().any(|&f| f >= period) {
            return Err(Error::Config(format!("frame list {frames:?} has entries >= period {period}")));
        }
        Ok(FrameRule::List { frames, period })
    }

    pub fn matches(&self, frame: u64) -> bool {
        match self {
            FrameRule::Even => frame.is_multiple_of(2),
            FrameRule::Any => true,
            FrameRule::List { frames, period } => frames.contains(&(frame % period)),
        }
    }

    pub fn period(&self) -> u64 {
        match self {
            FrameRule::Even => 2,
            FrameRule::Any => 1,
            FrameRule::List { period, .. } => *period,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "even" => Ok(FrameRule::Even),
            "any" => Ok(FrameRule::Any),
            other => {
                let (frames, period) = other
                    .split_once('/')
                    .ok_or_else(|| Error::Config(format!("frame rule `{other}` is not even, any or frames/period")))?;
                let period = period
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| Error::Config(format!("frame rule period `{period}`: {e}")))?;
                let frames = parse_list(frames)?;
                FrameRule::list(frames, period)
            }
        }
    }
}

impl fmt::Display for FrameRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameRule::Even => f.write_str("even"),
            FrameRule::Any => f.write_str("any"),
            FrameRule::List { frames, period } => {
                let list: Vec<String> = frames.iter().map(u64::to_string).collect();
                write!(f, "{}/{}", list.join(";"), period)
            }
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<u64>> {
    s.split(';').map(|v| v.trim().parse::<u64>().map_err(|e| Error::Config(format!("list entry `{v}`: {e}")))).collect()
}

/// Preamble format id, `0..=2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PreambleFormat(u8);

impl PreambleFormat {
    pub const ALL: [PreambleFormat; 3] = [PreambleFormat(0), PreambleFormat(1), PreambleFormat(2)];

    pub fn new(id: u8) -> Result<Self> {
        if id > 2 {
            return Err(Error::Range(format!("preamble format {id} outside 0..=2")));
        }
        Ok(PreambleFormat(id))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// Cyclic prefix length in milliseconds.
    pub fn cp_length_ms(self, standard: Standard) -> f64 {
        const NBIOT: [f64; 3] = [0.027, 0.067, 0.8];
        const LTE: [f64; 3] = [0.1, 0.68, 0.2];
        const NR: [f64; 3] = [0.1, 0.68, 0.15];
        let table = match standard {
            Standard::NbIot => &NBIOT,
            Standard::Lte => &LTE,
            Standard::Nr => &NR,
        };
        table[usize::from(self.0)]
    }

    pub fn cp_length(self, standard: Standard) -> Duration {
        Duration::from_ms_f64(self.cp_length_ms(standard)).expect("table CP lengths are positive")
    }
}

impl fmt::Display for PreambleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One PRACH configuration row, optionally shifted along the subframe grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrachConfig {
    pub index: u32,
    pub standard: Standard,
    pub sf_numbers: BTreeSet<u8>,
    pub frame_rule: FrameRule,
    pub preamble_format: PreambleFormat,
    /// Signed shift in subframes applied to the nominal row; negative for a
    /// UE-side advance, positive for a BS-side delay.
    shift_sf: i64,
}

impl PrachConfig {
    pub fn new(
        standard: Standard,
        index: u32,
        sf_numbers: impl IntoIterator<Item = u8>,
        frame_rule: FrameRule,
        preamble_format: PreambleFormat,
    ) -> Result<Self> {
        let sf_numbers: BTreeSet<u8> = sf_numbers.into_iter().collect();
        if sf_numbers.is_empty() {
            return Err(Error::Config(format!("{standard} index {index}: empty subframe list")));
        }
        if let Some(bad) = sf_numbers.iter().find(|&&s| u64::from(s) >= SF_PER_FRAME) {
            return Err(Error::Config(format!("{standard} index {index}: subframe {bad} outside 0..=9")));
        }
        Ok(Self { index, standard, sf_numbers, frame_rule, preamble_format, shift_sf: 0 })
    }

    /// Built-in rows for configuration indices 0..=4.
    pub fn builtin(standard: Standard, index: u32) -> Result<Self> {
        let f0 = PreambleFormat(0);
        let nr_16 = || FrameRule::List { frames: vec![1], period: 16 };
        let (sf, rule) = match (standard, index) {
            (Standard::Lte, 0) => (1, FrameRule::Even),
            (Standard::Lte, 1) => (4, FrameRule::Even),
            (Standard::Lte, 2) => (7, FrameRule::Even),
            (Standard::Lte, 3) => (1, FrameRule::Any),
            (Standard::Lte, 4) => (4, FrameRule::Any),
            (Standard::Nr, 0) => (1, nr_16()),
            (Standard::Nr, 1) => (4, nr_16()),
            (Standard::Nr, 2) => (7, nr_16()),
            (Standard::Nr, 3) => (9, nr_16()),
            (Standard::Nr, 4) => (1, FrameRule::List { frames: vec![1], period: 8 }),
            _ => {
                return Err(Error::Config(format!(
                    "no built-in PRACH configuration {index} for {standard}; load a table file"
                )))
            }
        };
        Self::new(standard, index, [sf], rule, f0)
    }

    pub fn shift_sf(&self) -> i64 {
        self.shift_sf
    }

    /// The unshifted table row.
    pub fn nominal(&self) -> PrachConfig {
        PrachConfig { shift_sf: 0, ..self.clone() }
    }

    pub fn shifted_by(&self, delta_sf: i64) -> PrachConfig {
        PrachConfig { shift_sf: self.shift_sf + delta_sf, ..self.clone() }
    }

    /// Subframe indices after the shift is applied.
    pub fn effective_sf_numbers(&self) -> BTreeSet<u8> {
        self.sf_numbers.iter().map(|&s| (i64::from(s) + self.shift_sf).rem_euclid(SF_PER_FRAME as i64) as u8).collect()
    }

    /// Whether `t` lies on the first sample of a random access opportunity.
    pub fn rao_matches(&self, t: TimeStamp) -> bool {
        t == t.sf_floor() && self.sf_matches(t.sf_count())
    }

    /// Whether the subframe starting at absolute subframe count `sf_count`
    /// carries an opportunity.
    pub fn sf_matches(&self, sf_count: u64) -> bool {
        let nominal = i128::from(sf_count) - i128::from(self.shift_sf);
        let sf = nominal.rem_euclid(SF_PER_FRAME as i128) as u8;
        let frame = nominal.div_euclid(SF_PER_FRAME as i128);
        if frame < 0 {
            // Before time zero on the nominal grid: compare modulo the period.
            let p = self.frame_rule.period() as i128;
            let frame = frame.rem_euclid(p) as u64;
            return self.sf_numbers.contains(&sf) && self.frame_rule.matches(frame);
        }
        self.sf_numbers.contains(&sf) && self.frame_rule.matches(frame as u64)
    }

    /// First opportunity starting at or after `from`.
    pub fn next_rao(&self, from: TimeStamp) -> TimeStamp {
        let start = from.sf_ceil().sf_count();
        let horizon = self.frame_rule.period() * SF_PER_FRAME;
        (start..=start + horizon)
            .find(|&n| self.sf_matches(n))
            .map(|n| TimeStamp::from_samples(n * Duration::SF.samples()))
            .expect("every configuration has an opportunity within one period")
    }

    /// Opportunity whose subframe contains `t`, if any.
    pub fn rao_containing(&self, t: TimeStamp) -> Option<TimeStamp> {
        let floor = t.sf_floor();
        self.rao_matches(floor).then_some(floor)
    }
}

/// UE-side schedule: the nominal row advanced by the whole-frame and
/// whole-subframe part of the UE's delay estimate.
pub fn ue_shifted_rao(config: &PrachConfig, ta: &TimingAdvance) -> PrachConfig {
    config.shifted_by(-(ta.fa as i64 * SF_PER_FRAME as i64 + i64::from(ta.sfa)))
}

/// BS-side schedule: the nominal row delayed by the whole-subframe part of the
/// cell-centre round trip.
pub fn bs_delayed_rao(config: &PrachConfig, cell_rtt: Duration) -> PrachConfig {
    config.shifted_by(cell_rtt.whole_sf() as i64)
}

/// Subframe and frame delay derived from a cell RTT.
pub fn sf_frame_delay(cell_rtt: Duration) -> (u64, u8) {
    let a = decompose_delay(cell_rtt).advance;
    (a.fa, a.sfa)
}

/// PRACH table loaded from text, one row per line:
/// `standard,index,sf_list,frame_rule,format`.
///
/// `sf_list` separates entries with `;`. `frame_rule` is `even`, `any` or
/// `frames/period` (for example `1/16` or `1;9/16`). Blank lines and `#`
/// comments are skipped.
#[derive(Debug, Clone, Default)]
pub struct PrachTable {
    rows: Vec<PrachConfig>,
}

impl PrachTable {
    pub fn builtin() -> Self {
        let mut rows = Vec::new();
        for standard in [Standard::Lte, Standard::Nr] {
            for index in 0..=4 {
                rows.push(PrachConfig::builtin(standard, index).expect("built-in row"));
            }
        }
        Self { rows }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |message: String| Error::Parse { path: origin.to_string(), line: n + 1, message };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let [standard, index, sf_list, rule, format] = cols.as_slice() else {
                return Err(at(format!("expected 5 columns, found {}", cols.len())));
            };
            let standard: Standard = standard.parse().map_err(|e: Error| at(e.to_string()))?;
            let index: u32 = index.parse().map_err(|e| at(format!("index: {e}")))?;
            let sfs = parse_list(sf_list).map_err(|e| at(e.to_string()))?;
            let sfs = sfs
                .into_iter()
                .map(|s| u8::try_from(s).map_err(|_| at(format!("subframe {s} out of range"))))
                .collect::<Result<Vec<u8>>>()?;
            let rule = FrameRule::parse(rule).map_err(|e| at(e.to_string()))?;
            let format: u8 = format.parse().map_err(|e| at(format!("format: {e}")))?;
            let format = PreambleFormat::new(format).map_err(|e| at(e.to_string()))?;
            let row = PrachConfig::new(standard, index, sfs, rule, format).map_err(|e| at(e.to_string()))?;
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, standard: Standard, index: u32) -> Option<&PrachConfig> {
        self.rows.iter().find(|r| r.standard == standard && r.index == index)
    }

    pub fn rows(&self) -> &[PrachConfig] {
        &self.rows
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let sfs: Vec<String> = r.sf_numbers.iter().map(u8::to_string).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.standard,
                r.index,
                sfs.join(";"),
                r.frame_rule,
                r.preamble_format
            ));
        }
        out
    }
}

/// Unit a timer value is counted in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerUnit {
    Subframe,
    Slot(Duration),
    PdcchPeriod(Duration),
}

impl TimerUnit {
    fn duration(self) -> Duration {
        match self {
            TimerUnit::Subframe => Duration::SF,
            TimerUnit::Slot(d) | TimerUnit::PdcchPeriod(d) => d,
        }
    }
}

/// Number of values added to each grid for NTN operation (4 extra bits).
pub const EXTENDED_GRID_VALUES: u64 = 16;
/// Upper end of the extended grid.
pub const EXTENDED_GRID_MAX_MS: f64 = 1000.0;

/// Default NB-IoT PDCCH period.
pub const DEFAULT_PDCCH_PERIOD_MS: f64 = 10.0;

/// RAR window and contention resolution timer choices of one standard.
#[derive(Debug, Clone, PartialEq)]
pub struct TimerSet {
    pub standard: Standard,
    pub rar_choices: Vec<u32>,
    pub rar_unit: TimerUnit,
    pub cr_choices: Vec<u32>,
    pub cr_unit: TimerUnit,
    /// Adds [`EXTENDED_GRID_VALUES`] larger values to both grids.
    pub extended: bool,
}

impl TimerSet {
    pub fn standard(base: &TimeBase) -> Self {
        Self::with_pdcch_period(base, Duration::from_ms_f64(DEFAULT_PDCCH_PERIOD_MS).expect("constant"))
    }

    pub fn with_pdcch_period(base: &TimeBase, pdcch_period: Duration) -> Self {
        match base.standard {
            Standard::Lte => TimerSet {
                standard: Standard::Lte,
                rar_choices: vec![1, 2, 4, 6, 8, 10],
                rar_unit: TimerUnit::Subframe,
                cr_choices: vec![8, 16, 24, 32, 40, 48, 56, 64],
                cr_unit: TimerUnit::Subframe,
                extended: false,
            },
            Standard::NbIot => TimerSet {
                standard: Standard::NbIot,
                rar_choices: vec![2, 3, 4, 5, 6, 7, 8, 10],
                rar_unit: TimerUnit::PdcchPeriod(pdcch_period),
                cr_choices: vec![1, 2, 3, 4, 8, 16, 32, 64],
                cr_unit: TimerUnit::PdcchPeriod(pdcch_period),
                extended: false,
            },
            Standard::Nr => TimerSet {
                standard: Standard::Nr,
                rar_choices: vec![1, 2, 4, 8, 10, 20, 40, 80],
                rar_unit: TimerUnit::Slot(base.slot_duration()),
                cr_choices: vec![8, 16, 24, 32, 40, 48, 56, 64],
                cr_unit: TimerUnit::Subframe,
                extended: false,
            },
        }
    }

    pub fn with_extension(mut self, extended: bool) -> Self {
        self.extended = extended;
        self
    }

    pub fn rar_grid(&self) -> Vec<Duration> {
        grid(&self.rar_choices, self.rar_unit, self.extended)
    }

    pub fn cr_grid(&self) -> Vec<Duration> {
        grid(&self.cr_choices, self.cr_unit, self.extended)
    }

    pub fn max_rar(&self) -> Duration {
        *self.rar_grid().last().expect("non-empty grid")
    }

    pub fn max_cr(&self) -> Duration {
        *self.cr_grid().last().expect("non-empty grid")
    }

    /// Largest standard (non-extended) values, used as the reported defaults.
    pub fn default_reported(&self) -> ReportedTimers {
        ReportedTimers {
            rar_window: self.rar_unit.duration().scaled(*self.rar_choices.last().expect("choices")),
            cr_timer: self.cr_unit.duration().scaled(*self.cr_choices.last().expect("choices")),
        }
    }
}

trait Scale {
    fn scaled(self, k: u32) -> Duration;
}

impl Scale for Duration {
    fn scaled(self, k: u32) -> Duration {
        Duration::from_samples(self.samples() * u64::from(k))
    }
}

fn grid(choices: &[u32], unit: TimerUnit, extended: bool) -> Vec<Duration> {
    let mut values: Vec<Duration> = choices.iter().map(|&c| unit.duration().scaled(c)).collect();
    if extended {
        let max = values.last().expect("choices").samples();
        let cap = Duration::from_ms_f64(EXTENDED_GRID_MAX_MS).expect("constant").samples();
        // Past the cap the standard grid already covers GEO delays; keep the
        // extension strictly increasing by spacing it up to twice the max.
        let top = if max < cap { cap } else { 2 * max };
        let span = top - max;
        for k in 1..=EXTENDED_GRID_VALUES {
            let v = max as u128
                + (span as u128 * k as u128 + EXTENDED_GRID_VALUES as u128 / 2) / EXTENDED_GRID_VALUES as u128;
            values.push(Duration::from_samples(v as u64));
        }
    }
    values
}

/// Timer values the BS reports in system information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportedTimers {
    pub rar_window: Duration,
    pub cr_timer: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimerMode {
    /// Reported values used as-is.
    Standard,
    /// UE adds its own RTT estimate to the reported values.
    UeAdapted,
    /// BS reports the smallest extended-grid value covering the cell RTT.
    BsExtended,
}

impl fmt::Display for TimerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimerMode::Standard => "standard",
            TimerMode::UeAdapted => "ue-adapted",
            TimerMode::BsExtended => "bs-extended",
        })
    }
}

/// Timer values in force for one attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffectiveTimers {
    pub rar_window: Duration,
    pub cr_timer: Duration,
}

pub fn effective_timers(
    ts: &TimerSet,
    reported: ReportedTimers,
    mode: TimerMode,
    rtt: Duration,
) -> Result<EffectiveTimers> {
    match mode {
        TimerMode::Standard => Ok(EffectiveTimers { rar_window: reported.rar_window, cr_timer: reported.cr_timer }),
        TimerMode::UeAdapted => {
            Ok(EffectiveTimers { rar_window: reported.rar_window + rtt, cr_timer: reported.cr_timer + rtt })
        }
        TimerMode::BsExtended => {
            let pick = |grid: Vec<Duration>, need: Duration, what: &str| {
                grid.into_iter()
                    .find(|&v| v >= need)
                    .ok_or_else(|| Error::Config(format!("{what} grid cannot cover {need} (reported value plus RTT)")))
            };
            Ok(EffectiveTimers {
                rar_window: pick(ts.rar_grid(), reported.rar_window + rtt, "RAR window")?,
                cr_timer: pick(ts.cr_grid(), reported.cr_timer + rtt, "contention resolution")?,
            })
        }
    }
}

/// Largest RAR window one standard supports without extension.
pub fn max_rar_window(standard: Standard, mu: u8) -> Result<Duration> {
    max_rar_window_with_pdcch(standard, mu, Duration::from_ms_f64(DEFAULT_PDCCH_PERIOD_MS)?)
}

pub fn max_rar_window_with_pdcch(standard: Standard, mu: u8, pdcch_period: Duration) -> Result<Duration> {
    let base = TimeBase::new(standard, mu)?;
    Ok(TimerSet::with_pdcch_period(&base, pdcch_period).max_rar())
}

/// Msg3 uplink grant carried in the random access response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Msg3Grant {
    pub time_offset_sf: u32,
    pub frequency_resource: u32,
    pub mcs: u8,
}

impl Msg3Grant {
    pub const MIN_OFFSET_SF: u32 = 4;
    pub const NBIOT_MAX_OFFSET_SF: u32 = 64;

    pub fn new(standard: Standard, time_offset_sf: u32) -> Result<Self> {
        if time_offset_sf < Self::MIN_OFFSET_SF {
            return Err(Error::Range(format!("Msg3 time offset {time_offset_sf} below 4 SF")));
        }
        if standard == Standard::NbIot && time_offset_sf > Self::NBIOT_MAX_OFFSET_SF {
            return Err(Error::Range(format!("NB-IoT Msg3 time offset {time_offset_sf} above 64 SF")));
        }
        Ok(Self { time_offset_sf, frequency_resource: 0, mcs: 0 })
    }

    pub fn offset(&self) -> Duration {
        Duration::from_sf(u64::from(self.time_offset_sf))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lte(i: u32) -> PrachConfig {
        PrachConfig::builtin(Standard::Lte, i).unwrap()
    }

    #[test]
    fn table_rows_match() {
        assert!(lte(3).rao_matches(TimeStamp::at(7, 1)));
        assert!(!lte(0).rao_matches(TimeStamp::at(3, 1)));
        assert!(lte(0).rao_matches(TimeStamp::at(4, 1)));
        let nr0 = PrachConfig::builtin(Standard::Nr, 0).unwrap();
        assert!(nr0.rao_matches(TimeStamp::at(17, 1)));
        assert!(nr0.rao_matches(TimeStamp::at(1, 1)));
        assert!(!nr0.rao_matches(TimeStamp::at(2, 1)));
        let nr4 = PrachConfig::builtin(Standard::Nr, 4).unwrap();
        assert!(nr4.rao_matches(TimeStamp::at(9, 1)));
        // mid-subframe instants are never opportunities
        assert!(!lte(3).rao_matches(TimeStamp::at(7, 1) + Duration::from_samples(1)));
    }

    #[test]
    fn ue_shift_borrows_across_frame() {
        let ta = TimingAdvance { fa: 0, sfa: 4, tac: 0 };
        let shifted = ue_shifted_rao(&lte(3), &ta);
        assert_eq!(shifted.effective_sf_numbers(), BTreeSet::from([7]));
        assert!(shifted.rao_matches(TimeStamp::at(6, 7)));
        // Even frames: SF 1 of frame 4 is advanced to SF 7 of frame 3.
        let shifted = ue_shifted_rao(&lte(0), &ta);
        assert!(shifted.rao_matches(TimeStamp::at(3, 7)));
        assert!(!shifted.rao_matches(TimeStamp::at(4, 7)));
    }

    #[test]
    fn ue_shift_identity_and_nr_table() {
        assert_eq!(ue_shifted_rao(&lte(3), &TimingAdvance::default()), lte(3));
        let nr0 = PrachConfig::builtin(Standard::Nr, 0).unwrap();
        let s = ue_shifted_rao(&nr0, &TimingAdvance { fa: 0, sfa: 1, tac: 0 });
        assert_eq!(s.effective_sf_numbers(), BTreeSet::from([0]));
        assert!(s.rao_matches(TimeStamp::at(17, 0)));
        assert!(s.rao_matches(TimeStamp::at(33, 0)));
        assert!(!s.rao_matches(TimeStamp::at(18, 0)));
    }

    #[test]
    fn bs_delay_examples() {
        let d = bs_delayed_rao(&lte(3), Duration::from_ms_f64(4.1).unwrap());
        assert_eq!(d.effective_sf_numbers(), BTreeSet::from([5]));
        assert!(d.rao_matches(TimeStamp::at(11, 5)));
        assert_eq!(bs_delayed_rao(&lte(3), Duration::ZERO), lte(3));
        assert_eq!(sf_frame_delay(Duration::from_ms_f64(480.0).unwrap()), (48, 0));
    }

    #[test]
    fn next_rao_walks_forward() {
        let c = lte(0);
        assert_eq!(c.next_rao(TimeStamp::ZERO), TimeStamp::at(0, 1));
        assert_eq!(c.next_rao(TimeStamp::at(0, 1) + Duration::from_samples(1)), TimeStamp::at(2, 1));
        let nr = PrachConfig::builtin(Standard::Nr, 0).unwrap();
        assert_eq!(nr.next_rao(TimeStamp::at(2, 0)), TimeStamp::at(17, 1));
    }

    #[test]
    fn max_rar_window_table() {
        assert_eq!(max_rar_window(Standard::Nr, 0).unwrap().as_ms_f64(), 80.0);
        assert_eq!(max_rar_window(Standard::Nr, 1).unwrap().as_ms_f64(), 40.0);
        assert_eq!(max_rar_window(Standard::Nr, 3).unwrap().as_ms_f64(), 10.0);
        assert_eq!(max_rar_window(Standard::Nr, 4).unwrap().as_ms_f64(), 5.0);
        assert_eq!(max_rar_window(Standard::Lte, 0).unwrap().as_ms_f64(), 10.0);
        assert_eq!(max_rar_window(Standard::NbIot, 0).unwrap().as_ms_f64(), 100.0);
    }

    #[test]
    fn timer_grids() {
        let lte = TimerSet::standard(&TimeBase::lte());
        let ms: Vec<f64> = lte.rar_grid().iter().map(|d| d.as_ms_f64()).collect();
        assert_eq!(ms, vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(lte.max_cr().as_ms_f64(), 64.0);
        let ext = lte.clone().with_extension(true);
        let g = ext.rar_grid();
        assert_eq!(g.len(), 6 + 16);
        assert_eq!(g.last().unwrap().as_ms_f64(), 1000.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(lte.rar_grid().iter().all(|v| g.contains(v)));
        assert_eq!(ext.cr_grid()[8].as_ms_f64(), 64.0 + 58.5);
    }

    #[test]
    fn effective_timer_modes() {
        let ts = TimerSet::standard(&TimeBase::lte()).with_extension(true);
        let rep = ts.default_reported();
        let rtt = Duration::from_ms_f64(480.0).unwrap();
        let ue = effective_timers(&ts, rep, TimerMode::UeAdapted, rtt).unwrap();
        assert_eq!(ue.rar_window.as_ms_f64(), 490.0);
        let bs0 = effective_timers(&ts, rep, TimerMode::BsExtended, Duration::ZERO).unwrap();
        assert_eq!(bs0.rar_window, rep.rar_window);
        assert_eq!(bs0.cr_timer, rep.cr_timer);
        let bs = effective_timers(&ts, rep, TimerMode::BsExtended, rtt).unwrap();
        assert_eq!(bs.rar_window.as_ms_f64(), 505.0);
        let too_far = Duration::from_ms_f64(995.0).unwrap();
        assert!(matches!(effective_timers(&ts, rep, TimerMode::BsExtended, too_far), Err(Error::Config(_))));
    }

    #[test]
    fn bs_extended_is_step_function() {
        let ts = TimerSet::standard(&TimeBase::lte()).with_extension(true);
        let rep = ts.default_reported();
        let at = |ms: f64| {
            effective_timers(&ts, rep, TimerMode::BsExtended, Duration::from_ms_f64(ms).unwrap()).unwrap().rar_window
        };
        assert_eq!(at(4.0), at(25.0));
        assert_eq!(at(25.0), at(50.0));
        assert!(at(130.0) > at(50.0));
        let mut distinct: Vec<Duration> = (0..=480).map(|ms| at(f64::from(ms))).collect();
        distinct.dedup();
        assert!(distinct.len() <= 9);
    }

    #[test]
    fn cp_lengths() {
        use Standard::*;
        let f = |s, i| PreambleFormat::new(i).unwrap().cp_length_ms(s);
        assert_eq!([f(NbIot, 0), f(NbIot, 1), f(NbIot, 2)], [0.027, 0.067, 0.8]);
        assert_eq!([f(Lte, 0), f(Lte, 1), f(Lte, 2)], [0.1, 0.68, 0.2]);
        assert_eq!([f(Nr, 0), f(Nr, 1), f(Nr, 2)], [0.1, 0.68, 0.15]);
        assert!(PreambleFormat::new(3).is_err());
    }

    #[test]
    fn msg3_grant_bounds() {
        assert!(Msg3Grant::new(Standard::Lte, 3).is_err());
        assert!(Msg3Grant::new(Standard::Lte, 4).is_ok());
        assert!(Msg3Grant::new(Standard::NbIot, 64).is_ok());
        assert!(Msg3Grant::new(Standard::NbIot, 65).is_err());
    }

    #[test]
    fn table_file_round_trip_and_errors() {
        let text = PrachTable::builtin().to_text();
        let parsed = PrachTable::parse(&text, "builtin").unwrap();
        assert_eq!(parsed.rows(), PrachTable::builtin().rows());

        let t = PrachTable::parse("# nb-iot\nNBIOT,0,1;6,0/4,2\n", "t").unwrap();
        let row = t.get(Standard::NbIot, 0).unwrap();
        assert!(row.rao_matches(TimeStamp::at(8, 6)));
        assert!(!row.rao_matches(TimeStamp::at(9, 6)));

        let err = PrachTable::parse("LTE,0,1,even,0\nLTE,1,1,5;3/8,0\n", "bad.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = PrachTable::parse("LTE,0,1,even\n", "bad.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
