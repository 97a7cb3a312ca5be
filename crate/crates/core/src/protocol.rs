//! UE and BS random access state machines with pluggable NTN corrections.
//!
//! Both machines run on the engine's absolute time. The BS clock is the
//! absolute clock. The UE clock is locked to the downlink it receives, so it
//! lags absolute time by the downlink delay; a UE "label" is its local
//! reading of an instant. Every message is broadcast on the downlink and each
//! UE filters on the identities it expects.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity::{corrected_t_id, ra_rnti, RaRnti, RntiIndices, TidCorrection};
use crate::raconfig::{
    bs_delayed_rao, effective_timers, ue_shifted_rao, EffectiveTimers, Msg3Grant, PrachConfig, ReportedTimers,
    TimerMode, TimerSet,
};
use crate::sequences::{sequences_match, SequenceParams};
use crate::timing::{
    decompose_delay_with_limit, Duration, TimeBase, TimeStamp, DEFAULT_MAX_TAC, SAMPLES_PER_SF, SF_PER_FRAME,
    TAC_STEP_SAMPLES,
};

pub type UeId = u32;

/// Size of the contention-based preamble pool.
pub const PREAMBLE_POOL: u8 = 64;
/// First temporary C-RNTI handed out by the BS.
pub const FIRST_TEMP_C_RNTI: u16 = 0x003D;
/// Base of the UE contention identities.
pub const UE_IDENTITY_BASE: u32 = 0x0001_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMode {
    NoCorrection,
    SampleTaOnly,
    #[serde(alias = "ta")]
    SfLevelTa,
    #[serde(alias = "td")]
    SfLevelTd,
}

impl fmt::Display for CorrectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrectionMode::NoCorrection => "no-correction",
            CorrectionMode::SampleTaOnly => "sample-ta-only",
            CorrectionMode::SfLevelTa => "sf-level-ta",
            CorrectionMode::SfLevelTd => "sf-level-td",
        })
    }
}

impl std::str::FromStr for CorrectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "no-correction" | "none" => Ok(CorrectionMode::NoCorrection),
            "sample-ta-only" => Ok(CorrectionMode::SampleTaOnly),
            "sf-level-ta" | "ta" => Ok(CorrectionMode::SfLevelTa),
            "sf-level-td" | "td" => Ok(CorrectionMode::SfLevelTd),
            other => Err(Error::Config(format!("unknown correction mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixFlags {
    pub rao: bool,
    pub rnti: bool,
    pub sched: bool,
    pub seq: bool,
}

impl FixFlags {
    pub const NONE: FixFlags = FixFlags { rao: false, rnti: false, sched: false, seq: false };
    pub const ALL: FixFlags = FixFlags { rao: true, rnti: true, sched: true, seq: true };

    /// Cumulative fix sets, one per ladder step.
    pub const LADDER: [FixFlags; 5] = [
        FixFlags::NONE,
        FixFlags { rao: true, ..FixFlags::NONE },
        FixFlags { rao: true, rnti: true, ..FixFlags::NONE },
        FixFlags { rao: true, rnti: true, sched: true, seq: false },
        FixFlags::ALL,
    ];

    pub fn any(&self) -> bool {
        self.rao || self.rnti || self.sched || self.seq
    }
}

impl fmt::Display for FixFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.rao, "rao"), (self.rnti, "rnti"), (self.sched, "sched"), (self.seq, "seq")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join("+"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CorrectionStrategy {
    pub mode: CorrectionMode,
    pub fix_flags: FixFlags,
    pub timer_mode: TimerMode,
}

impl CorrectionStrategy {
    pub fn no_correction() -> Self {
        Self { mode: CorrectionMode::NoCorrection, fix_flags: FixFlags::NONE, timer_mode: TimerMode::Standard }
    }

    pub fn sample_ta_only() -> Self {
        Self { mode: CorrectionMode::SampleTaOnly, ..Self::no_correction() }
    }

    pub fn ta() -> Self {
        Self { mode: CorrectionMode::SfLevelTa, fix_flags: FixFlags::ALL, timer_mode: TimerMode::UeAdapted }
    }

    pub fn td() -> Self {
        Self { mode: CorrectionMode::SfLevelTd, fix_flags: FixFlags::ALL, timer_mode: TimerMode::BsExtended }
    }

    pub fn for_mode(mode: CorrectionMode) -> Self {
        match mode {
            CorrectionMode::NoCorrection => Self::no_correction(),
            CorrectionMode::SampleTaOnly => Self::sample_ta_only(),
            CorrectionMode::SfLevelTa => Self::ta(),
            CorrectionMode::SfLevelTd => Self::td(),
        }
    }

    pub fn with_flags(self, fix_flags: FixFlags) -> Self {
        Self { fix_flags, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let sf_level = matches!(self.mode, CorrectionMode::SfLevelTa | CorrectionMode::SfLevelTd);
        if !sf_level && self.fix_flags.any() {
            return Err(Error::Config(format!("{} has no subframe-level fixes to enable", self.mode)));
        }
        Ok(())
    }
}

/// Furthest point one attempt reached, in protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Stage {
    #[default]
    Msg1Undetected,
    Msg2Timeout,
    Msg2Withdrawn,
    Msg3SchedMiss,
    Msg3DecodeFail,
    Msg4Timeout,
    Connected,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Msg1Undetected => "Msg1-undetected",
            Stage::Msg2Timeout => "Msg2-timeout",
            Stage::Msg2Withdrawn => "Msg2-withdrawn",
            Stage::Msg3SchedMiss => "Msg3-sched-miss",
            Stage::Msg3DecodeFail => "Msg3-decode-fail",
            Stage::Msg4Timeout => "Msg4-timeout",
            Stage::Connected => "Connected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionModel {
    /// Identical preambles in one opportunity cancel out.
    #[default]
    Undetected,
    /// One response is sent and contention is resolved at Msg3/Msg4.
    Detected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RaMessage {
    Msg1 { preamble_index: u8, tx_timestamp: TimeStamp },
    Msg2 { ra_rnti: RaRnti, preamble_index: u8, tac: u32, grant: Option<Msg3Grant>, temp_c_rnti: u16 },
    Msg3 { c_rnti: u32, temp_c_rnti: u16, ue_sf_used: u8 },
    Msg4 { temp_c_rnti: u16, echoed_c_rnti: u32 },
    Harq { ack: bool, temp_c_rnti: u16 },
}

impl RaMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            RaMessage::Msg1 { .. } => "msg1",
            RaMessage::Msg2 { .. } => "msg2",
            RaMessage::Msg3 { .. } => "msg3",
            RaMessage::Msg4 { .. } => "msg4",
            RaMessage::Harq { ack: true, .. } => "ack",
            RaMessage::Harq { ack: false, .. } => "nack",
        }
    }
}

/// A message plus the UEs it stems from. `origin` only feeds stage
/// bookkeeping; acceptance decisions never look at it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub msg: RaMessage,
    pub origin: Vec<UeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Bs,
    Ue(UeId),
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Bs => f.write_str("bs"),
            Side::Ue(id) => write!(f, "ue{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: TimeStamp,
    pub side: Side,
    pub state_before: String,
    pub event: String,
    pub state_after: String,
    pub detail: String,
}

pub const TRACE_HEADER: &str = "time,side,state_before,event,state_after,detail";

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{},{},{},{},{}",
            self.time.as_ms_f64(),
            self.side,
            self.state_before,
            self.event,
            self.state_after,
            self.detail.replace(',', ";")
        )
    }
}

pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Static parameters shared by both sides of one cell.
#[derive(Debug, Clone)]
pub struct RaSetup {
    pub base: TimeBase,
    pub prach: PrachConfig,
    pub timers: TimerSet,
    pub reported: ReportedTimers,
    /// Round trip at the beam centre, known to the BS.
    pub cell_rtt: Option<Duration>,
    pub processing: Duration,
    pub grant: Msg3Grant,
    pub harq_max: u32,
    pub backoff_max: Duration,
    pub contention_free: bool,
    pub collision_model: CollisionModel,
    pub max_tac: u32,
    pub ids: RntiIndices,
    pub cell_id: u32,
}

impl RaSetup {
    pub fn new(base: TimeBase, prach: PrachConfig) -> Result<Self> {
        let timers = TimerSet::standard(&base).with_extension(true);
        let reported = timers.default_reported();
        Ok(Self {
            base,
            grant: Msg3Grant::new(base.standard, Msg3Grant::MIN_OFFSET_SF)?,
            prach,
            timers,
            reported,
            cell_rtt: None,
            processing: Duration::from_sf(4),
            harq_max: 4,
            backoff_max: Duration::from_sf(20),
            contention_free: false,
            collision_model: CollisionModel::Undetected,
            max_tac: DEFAULT_MAX_TAC,
            ids: RntiIndices::default(),
            cell_id: 1,
        })
    }

    pub fn with_cell_rtt(mut self, cell_rtt: Duration) -> Self {
        self.cell_rtt = Some(cell_rtt);
        self
    }

    fn sequence_params(&self, temp_c_rnti: u16) -> SequenceParams {
        SequenceParams { scrambling_static: (u32::from(temp_c_rnti) << 14) + self.cell_id, ..SequenceParams::default() }
    }

    fn tac_window(&self) -> Duration {
        Duration::from_samples(u64::from(self.max_tac) * TAC_STEP_SAMPLES)
    }
}

/// UE-side behaviour derived from a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct UeHooks {
    pub schedule: PrachConfig,
    pub sample_advance: Duration,
    pub rnti_correction: TidCorrection,
    pub seq_sf_offset: u8,
    pub timers: EffectiveTimers,
}

/// Extra delay the BS adds before its responses so they land where a UE with
/// the reported extended timers expects them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pacing {
    pub rar: Duration,
    pub cr: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsHooks {
    pub schedule: PrachConfig,
    pub rnti_correction: TidCorrection,
    pub sched_shift: Duration,
    pub seq_sfd: u8,
    /// Whole-subframe part of the cell round trip.
    pub cell_shift: Duration,
    pub pacing: Option<Pacing>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookSide {
    Ue { rtt_estimate: Duration },
    Bs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Hooks {
    Ue(UeHooks),
    Bs(BsHooks),
}

pub fn apply_strategy(strategy: &CorrectionStrategy, setup: &RaSetup, side: HookSide) -> Result<Hooks> {
    match side {
        HookSide::Ue { rtt_estimate } => ue_hooks(strategy, setup, rtt_estimate).map(Hooks::Ue),
        HookSide::Bs => bs_hooks(strategy, setup).map(Hooks::Bs),
    }
}

fn require_cell_rtt(setup: &RaSetup, why: &str) -> Result<Duration> {
    setup.cell_rtt.ok_or_else(|| Error::Config(format!("{why} requires the cell RTT")))
}

pub fn ue_hooks(strategy: &CorrectionStrategy, setup: &RaSetup, rtt_estimate: Duration) -> Result<UeHooks> {
    strategy.validate()?;
    let nominal = setup.prach.nominal();
    let d = decompose_delay_with_limit(rtt_estimate, setup.max_tac);
    let flags = strategy.fix_flags;
    let (schedule, sample_advance, rnti_correction, seq_sf_offset) = match strategy.mode {
        CorrectionMode::NoCorrection | CorrectionMode::SfLevelTd => (nominal, Duration::ZERO, TidCorrection::None, 0),
        CorrectionMode::SampleTaOnly => (nominal, rtt_estimate.min(setup.tac_window()), TidCorrection::None, 0),
        CorrectionMode::SfLevelTa => (
            if flags.rao { ue_shifted_rao(&nominal, &d.advance) } else { nominal },
            d.advance.sample_part(),
            if flags.rnti { TidCorrection::UeTa { sfa: d.advance.sfa, fa: d.advance.fa } } else { TidCorrection::None },
            if flags.seq { d.advance.sfa } else { 0 },
        ),
    };
    let timer_rtt = match strategy.timer_mode {
        TimerMode::Standard => Duration::ZERO,
        TimerMode::UeAdapted => rtt_estimate,
        TimerMode::BsExtended => require_cell_rtt(setup, "extended timers")?,
    };
    let timers = effective_timers(&setup.timers, setup.reported, strategy.timer_mode, timer_rtt)?;
    Ok(UeHooks { schedule, sample_advance, rnti_correction, seq_sf_offset, timers })
}

pub fn bs_hooks(strategy: &CorrectionStrategy, setup: &RaSetup) -> Result<BsHooks> {
    strategy.validate()?;
    let flags = strategy.fix_flags;
    let td = strategy.mode == CorrectionMode::SfLevelTd;
    let sf_level = td || strategy.mode == CorrectionMode::SfLevelTa;
    let cell_rtt = if td {
        Some(require_cell_rtt(setup, "SF-level TD")?)
    } else if sf_level && flags.sched {
        Some(require_cell_rtt(setup, "BS-side Msg3 scheduling fix")?)
    } else {
        setup.cell_rtt
    };
    let w = cell_rtt.map_or(0, Duration::whole_sf);
    let sfd = (w % SF_PER_FRAME) as u8;
    let nominal = setup.prach.nominal();
    let pacing = match strategy.timer_mode {
        TimerMode::BsExtended => {
            let cell = require_cell_rtt(setup, "extended timers")?;
            let eff = effective_timers(&setup.timers, setup.reported, TimerMode::BsExtended, cell)?;
            Some(Pacing {
                rar: (eff.rar_window - setup.reported.rar_window).ceil_sf(),
                cr: (eff.cr_timer - setup.reported.cr_timer).ceil_sf(),
            })
        }
        _ => None,
    };
    Ok(BsHooks {
        schedule: match cell_rtt {
            Some(c) if td && flags.rao => bs_delayed_rao(&nominal, c),
            _ => nominal,
        },
        rnti_correction: if td && flags.rnti {
            TidCorrection::BsTd { sfd, fd: w / SF_PER_FRAME }
        } else {
            TidCorrection::None
        },
        sched_shift: if sf_level && flags.sched { Duration::from_sf(w) } else { Duration::ZERO },
        seq_sfd: if td && flags.seq { sfd } else { 0 },
        cell_shift: Duration::from_sf(w),
        pacing,
    })
}

fn nearest_sf(t: TimeStamp) -> TimeStamp {
    (t + Duration::from_samples(SAMPLES_PER_SF / 2)).sf_floor()
}

fn within_half_sf(a: TimeStamp, b: TimeStamp) -> bool {
    a.offset_from(b).unsigned_abs() <= SAMPLES_PER_SF / 2
}

fn rnti_for(setup: &RaSetup, sf: u8) -> Result<RaRnti> {
    ra_rnti(setup.base.standard, sf, 0, setup.base.slots_per_sf(), setup.ids)
}

// ---------------------------------------------------------------------------
// UE

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UeState {
    Idle,
    GenerateMsg1,
    WaitMsg2,
    GenerateMsg3,
    WaitMsg4,
    Connected,
}

impl fmt::Display for UeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UeTimerKind {
    Msg1Tx,
    RarDeadline,
    Msg3Tx,
    CrDeadline,
    HarqAckTx,
    BackoffDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UeTimer {
    pub kind: UeTimerKind,
    pub attempt: u32,
    pub generation: u32,
}

#[derive(Debug, Clone)]
pub enum UeInput {
    Start,
    Timer(UeTimer),
    Delivery(Envelope),
}

#[derive(Debug, Clone, Default)]
pub struct UeOutput {
    pub send: Vec<Envelope>,
    pub timers: Vec<(TimeStamp, UeTimer)>,
    pub stage: Option<Stage>,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct UeContext {
    pub id: UeId,
    pub state: UeState,
    pub preamble_index: u8,
    pub ra_rnti: Option<RaRnti>,
    pub temp_c_rnti: Option<u16>,
    pub c_rnti: u32,
    pub rtt_estimate: Duration,
    pub retry_count: u32,
    pub backoff_deadline: Option<TimeStamp>,
    pub power_ramp_level: u32,
    pub first_msg1_at: Option<TimeStamp>,
    pub connected_at: Option<TimeStamp>,
    /// Preamble used on every attempt instead of a random pick.
    pub fixed_preamble: Option<u8>,
    hooks: UeHooks,
    setup: RaSetup,
    clock_offset: Duration,
    rng: ChaCha8Rng,
    attempt: u32,
    generation: u32,
    rao_label: TimeStamp,
    msg3_label: TimeStamp,
    rar_advance: Duration,
    harq_tx: u32,
    last_event: TimeStamp,
}

impl UeContext {
    /// `clock_offset` is the downlink delay the UE's clock lags by.
    pub fn new(
        id: UeId,
        setup: RaSetup,
        hooks: UeHooks,
        rtt_estimate: Duration,
        clock_offset: Duration,
        seed: u64,
    ) -> Self {
        Self {
            id,
            state: UeState::Idle,
            preamble_index: 0,
            ra_rnti: None,
            temp_c_rnti: None,
            c_rnti: UE_IDENTITY_BASE + id,
            rtt_estimate,
            retry_count: 0,
            backoff_deadline: None,
            power_ramp_level: 0,
            first_msg1_at: None,
            connected_at: None,
            fixed_preamble: setup.contention_free.then_some((id % u32::from(PREAMBLE_POOL)) as u8),
            hooks,
            setup,
            clock_offset,
            rng: ChaCha8Rng::seed_from_u64(seed),
            attempt: 0,
            generation: 0,
            rao_label: TimeStamp::ZERO,
            msg3_label: TimeStamp::ZERO,
            rar_advance: Duration::ZERO,
            harq_tx: 0,
            last_event: TimeStamp::ZERO,
        }
    }

    pub fn hooks(&self) -> &UeHooks {
        &self.hooks
    }

    /// First Msg1 transmission to Msg4 acceptance.
    pub fn access_time(&self) -> Option<Duration> {
        Some(self.connected_at?.since(self.first_msg1_at?).expect("connection follows Msg1"))
    }

    fn label(&self, now: TimeStamp) -> Result<TimeStamp> {
        now.checked_sub(self.clock_offset)
    }

    fn abs(&self, label: TimeStamp) -> TimeStamp {
        label + self.clock_offset
    }

    fn uplink_advance(&self) -> Duration {
        self.hooks.sample_advance + self.rar_advance
    }

    fn timer(&self, kind: UeTimerKind) -> UeTimer {
        UeTimer { kind, attempt: self.attempt, generation: self.generation }
    }

    fn envelope(&self, msg: RaMessage) -> Envelope {
        Envelope { msg, origin: vec![self.id] }
    }
}

struct UeStep<'a> {
    out: UeOutput,
    now: TimeStamp,
    before: UeState,
    ctx: &'a mut UeContext,
}

impl UeStep<'_> {
    fn record(&mut self, event: &str, detail: String) {
        self.out.trace.push(TraceRecord {
            time: self.now,
            side: Side::Ue(self.ctx.id),
            state_before: self.before.to_string(),
            event: event.to_owned(),
            state_after: self.ctx.state.to_string(),
            detail,
        });
    }

    fn stage(&mut self, s: Stage) {
        self.out.stage = Some(self.out.stage.map_or(s, |p| p.max(s)));
    }

    /// Picks the next opportunity on the UE schedule at or after `label`.
    fn plan_msg1(&mut self, label: TimeStamp) {
        let advance = self.ctx.hooks.sample_advance;
        let rao = self.ctx.hooks.schedule.next_rao(label + advance);
        self.ctx.rao_label = rao;
        self.ctx.preamble_index = self.ctx.fixed_preamble.unwrap_or_else(|| self.ctx.rng.gen_range(0..PREAMBLE_POOL));
        self.ctx.state = UeState::GenerateMsg1;
        let tx = self.ctx.abs(TimeStamp::from_samples(rao.samples() - advance.samples()));
        let t = self.ctx.timer(UeTimerKind::Msg1Tx);
        self.out.timers.push((tx, t));
    }

    fn fail(&mut self, why: &str) {
        self.ctx.retry_count += 1;
        self.ctx.power_ramp_level += 1;
        self.ctx.attempt += 1;
        self.ctx.temp_c_rnti = None;
        self.ctx.rar_advance = Duration::ZERO;
        let backoff = Duration::from_samples(self.ctx.rng.gen_range(0..=self.ctx.setup.backoff_max.samples()));
        let deadline = self.now + backoff;
        self.ctx.backoff_deadline = Some(deadline);
        self.ctx.state = UeState::GenerateMsg1;
        let t = self.ctx.timer(UeTimerKind::BackoffDone);
        self.out.timers.push((deadline, t));
        self.record("retry", format!("{why}; backoff {backoff} retry {}", self.ctx.retry_count));
    }

    fn send_msg3(&mut self, label: TimeStamp) {
        self.ctx.msg3_label = label;
        let tx = self.ctx.abs(TimeStamp::from_samples(label.samples() - self.ctx.uplink_advance().samples()));
        let t = self.ctx.timer(UeTimerKind::Msg3Tx);
        self.out.timers.push((tx, t));
    }
}

pub fn ue_step(ctx: &mut UeContext, now: TimeStamp, input: UeInput) -> Result<UeOutput> {
    if now < ctx.last_event {
        return Err(Error::Contract(format!("UE {} event at {now} after {}", ctx.id, ctx.last_event)));
    }
    ctx.last_event = now;
    let before = ctx.state;
    let mut s = UeStep { out: UeOutput::default(), now, before, ctx };
    match input {
        UeInput::Start => {
            if s.ctx.state != UeState::Idle {
                return Err(Error::Contract(format!("UE {} started twice", s.ctx.id)));
            }
            let label = s.ctx.label(now)?;
            s.plan_msg1(label);
            let rao = s.ctx.rao_label;
            s.record("start", format!("rao {rao} preamble {}", s.ctx.preamble_index));
        }
        UeInput::Timer(t) => ue_timer(&mut s, t)?,
        UeInput::Delivery(env) => ue_delivery(&mut s, env)?,
    }
    Ok(s.out)
}

fn ue_timer(s: &mut UeStep<'_>, t: UeTimer) -> Result<()> {
    let stale = t.attempt != s.ctx.attempt || t.generation != s.ctx.generation;
    match t.kind {
        UeTimerKind::HarqAckTx => {
            if let (UeState::Connected, Some(temp)) = (s.ctx.state, s.ctx.temp_c_rnti) {
                let env = s.ctx.envelope(RaMessage::Harq { ack: true, temp_c_rnti: temp });
                s.out.send.push(env);
                s.record("tx-ack", format!("temp {temp:#06x}"));
            }
        }
        _ if stale => {}
        UeTimerKind::BackoffDone if s.ctx.state == UeState::GenerateMsg1 => {
            s.ctx.backoff_deadline = None;
            let label = s.ctx.label(s.now)?;
            s.plan_msg1(label);
            let rao = s.ctx.rao_label;
            s.record("backoff-done", format!("rao {rao} preamble {}", s.ctx.preamble_index));
        }
        UeTimerKind::Msg1Tx if s.ctx.state == UeState::GenerateMsg1 => {
            let rao = s.ctx.rao_label;
            let t_id = corrected_t_id(rao.sf(), s.ctx.hooks.rnti_correction);
            s.ctx.ra_rnti = Some(rnti_for(&s.ctx.setup, t_id)?);
            s.ctx.first_msg1_at.get_or_insert(s.now);
            s.ctx.state = UeState::WaitMsg2;
            let label = s.ctx.label(s.now)?;
            let env = s.ctx.envelope(RaMessage::Msg1 { preamble_index: s.ctx.preamble_index, tx_timestamp: label });
            s.out.send.push(env);
            let deadline = s.now + Duration::from_sf(3) + s.ctx.hooks.timers.rar_window;
            let t = s.ctx.timer(UeTimerKind::RarDeadline);
            s.out.timers.push((deadline, t));
            let rnti = s.ctx.ra_rnti.map_or(0, |r| r.value);
            s.record("tx-msg1", format!("preamble {} ra-rnti {rnti} rao-sf {}", s.ctx.preamble_index, rao.sf()));
        }
        UeTimerKind::RarDeadline if s.ctx.state == UeState::WaitMsg2 => s.fail("rar window expired"),
        UeTimerKind::Msg3Tx if s.ctx.state == UeState::GenerateMsg3 || s.ctx.state == UeState::WaitMsg4 => {
            let temp = s.ctx.temp_c_rnti.expect("granted");
            let ue_sf =
                ((u64::from(s.ctx.msg3_label.sf()) + u64::from(s.ctx.hooks.seq_sf_offset)) % SF_PER_FRAME) as u8;
            s.ctx.state = UeState::WaitMsg4;
            s.ctx.harq_tx += 1;
            s.ctx.generation += 1;
            let env = s.ctx.envelope(RaMessage::Msg3 { c_rnti: s.ctx.c_rnti, temp_c_rnti: temp, ue_sf_used: ue_sf });
            s.out.send.push(env);
            let t = s.ctx.timer(UeTimerKind::CrDeadline);
            s.out.timers.push((s.now + s.ctx.hooks.timers.cr_timer, t));
            s.record("tx-msg3", format!("temp {temp:#06x} sf-used {ue_sf} tx {}", s.ctx.harq_tx));
        }
        UeTimerKind::CrDeadline if s.ctx.state == UeState::WaitMsg4 => s.fail("contention resolution timer expired"),
        _ => {}
    }
    Ok(())
}

fn ue_delivery(s: &mut UeStep<'_>, env: Envelope) -> Result<()> {
    let mine = env.origin.contains(&s.ctx.id);
    match env.msg {
        RaMessage::Msg2 { ra_rnti, preamble_index, tac, grant, temp_c_rnti } if s.ctx.state == UeState::WaitMsg2 => {
            if Some(ra_rnti) != s.ctx.ra_rnti {
                if mine {
                    s.stage(Stage::Msg2Withdrawn);
                    s.record(
                        "rx-msg2-foreign",
                        format!("ra-rnti {} expected {}", ra_rnti.value, s.ctx.ra_rnti.map_or(0, |r| r.value)),
                    );
                }
                return Ok(());
            }
            if preamble_index != s.ctx.preamble_index {
                return Ok(());
            }
            if tac > s.ctx.setup.max_tac || grant.is_some_and(|g| g.time_offset_sf < Msg3Grant::MIN_OFFSET_SF) {
                s.record("protocol-error", format!("malformed msg2 tac {tac}"));
                return Ok(());
            }
            s.ctx.temp_c_rnti = Some(temp_c_rnti);
            s.ctx.rar_advance = Duration::from_samples(u64::from(tac) * TAC_STEP_SAMPLES);
            s.ctx.generation += 1;
            match grant {
                None => {
                    s.ctx.state = UeState::Connected;
                    s.ctx.connected_at = Some(s.now);
                    s.stage(Stage::Connected);
                    s.record("rx-msg2", format!("contention-free tac {tac}"));
                }
                Some(g) => {
                    s.ctx.state = UeState::GenerateMsg3;
                    s.ctx.harq_tx = 0;
                    let label = s.ctx.label(s.now)?.sf_floor() + g.offset();
                    s.send_msg3(label);
                    s.record("rx-msg2", format!("temp {temp_c_rnti:#06x} tac {tac} msg3 at {label}"));
                }
            }
        }
        RaMessage::Harq { ack: false, temp_c_rnti } if s.ctx.state == UeState::WaitMsg4 => {
            if Some(temp_c_rnti) != s.ctx.temp_c_rnti {
                return Ok(());
            }
            if s.ctx.harq_tx >= s.ctx.setup.harq_max {
                s.record("rx-nack", "harq limit reached".into());
                return Ok(());
            }
            s.ctx.generation += 1;
            let label = s.ctx.label(s.now)?.sf_floor() + Duration::from_sf(4);
            s.send_msg3(label);
            s.record("rx-nack", format!("retransmit at {label}"));
        }
        RaMessage::Msg4 { temp_c_rnti, echoed_c_rnti } => {
            if Some(temp_c_rnti) != s.ctx.temp_c_rnti {
                return Ok(());
            }
            match s.ctx.state {
                UeState::WaitMsg4 if echoed_c_rnti == s.ctx.c_rnti => {
                    s.ctx.state = UeState::Connected;
                    s.ctx.connected_at = Some(s.now);
                    s.stage(Stage::Connected);
                    schedule_ack(s)?;
                    s.record("rx-msg4", format!("c-rnti {echoed_c_rnti:#x}"));
                }
                UeState::WaitMsg4 => {
                    s.record("rx-msg4-foreign", format!("echoed {echoed_c_rnti:#x} own {:#x}", s.ctx.c_rnti));
                }
                UeState::Connected => schedule_ack(s)?,
                _ => {}
            }
        }
        _ => {}
    }
    Ok(())
}

fn schedule_ack(s: &mut UeStep<'_>) -> Result<()> {
    let label = s.ctx.label(s.now)?.sf_floor() + Duration::from_sf(4);
    let tx = s.ctx.abs(TimeStamp::from_samples(label.samples() - s.ctx.uplink_advance().samples()));
    let t = s.ctx.timer(UeTimerKind::HarqAckTx);
    s.out.timers.push((tx, t));
    Ok(())
}

// ---------------------------------------------------------------------------
// BS

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BsState {
    WaitMsg1,
    GenerateMsg2,
    WaitMsg3,
    GenerateMsg4,
    Done,
}

impl fmt::Display for BsState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BsTimer {
    RaoClose(TimeStamp),
    SendMsg2 { temp: u16 },
    GrantExpire { temp: u16, expected: TimeStamp },
    SendNack { temp: u16 },
    SendMsg4 { temp: u16 },
    Msg4AckDeadline { temp: u16, tx: u32 },
}

#[derive(Debug, Clone)]
pub enum BsInput {
    Delivery(Envelope),
    Timer(BsTimer),
}

#[derive(Debug, Clone, Default)]
pub struct BsOutput {
    pub send: Vec<Envelope>,
    pub timers: Vec<(TimeStamp, BsTimer)>,
    pub progress: Vec<(UeId, Stage)>,
    /// UEs whose preambles cancelled out, one entry per collision.
    pub collisions: Vec<Vec<UeId>>,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
struct Candidate {
    preamble: u8,
    residual: Duration,
    origin: Vec<UeId>,
}

#[derive(Debug, Clone)]
struct Attempt {
    state: BsState,
    rao: TimeStamp,
    ra_rnti: RaRnti,
    preamble: u8,
    tac: u32,
    label_m: TimeStamp,
    expected: TimeStamp,
    harq_tx: u32,
    nack_pending: bool,
    decoded: Option<(u32, Vec<UeId>)>,
    msg4_tx: u32,
    origin: Vec<UeId>,
}

#[derive(Debug, Clone)]
pub struct BsContext {
    pub cell_rtt: Option<Duration>,
    pub prach_config: PrachConfig,
    pub timer_set: TimerSet,
    hooks: BsHooks,
    setup: RaSetup,
    pending_raos: BTreeMap<TimeStamp, Vec<Candidate>>,
    attempts: BTreeMap<u16, Attempt>,
    next_temp: u16,
    last_event: TimeStamp,
}

impl BsContext {
    pub fn new(setup: RaSetup, hooks: BsHooks) -> Self {
        Self {
            cell_rtt: setup.cell_rtt,
            prach_config: setup.prach.nominal(),
            timer_set: setup.timers.clone(),
            hooks,
            setup,
            pending_raos: BTreeMap::new(),
            attempts: BTreeMap::new(),
            next_temp: FIRST_TEMP_C_RNTI,
            last_event: TimeStamp::ZERO,
        }
    }

    pub fn hooks(&self) -> &BsHooks {
        &self.hooks
    }

    /// State of the attempt that was handed `temp`, if it is still tracked.
    pub fn attempt_state(&self, temp: u16) -> Option<BsState> {
        self.attempts.get(&temp).map(|a| a.state)
    }

    fn allocate_temp(&mut self) -> u16 {
        let t = self.next_temp;
        self.next_temp = if t >= 0xFFEF { FIRST_TEMP_C_RNTI } else { t + 1 };
        t
    }
}

struct BsStep<'a> {
    out: BsOutput,
    now: TimeStamp,
    ctx: &'a mut BsContext,
}

impl BsStep<'_> {
    fn record(&mut self, before: BsState, event: &str, after: BsState, detail: String) {
        self.out.trace.push(TraceRecord {
            time: self.now,
            side: Side::Bs,
            state_before: before.to_string(),
            event: event.to_owned(),
            state_after: after.to_string(),
            detail,
        });
    }

    fn progress(&mut self, origin: &[UeId], stage: Stage) {
        self.out.progress.extend(origin.iter().map(|&u| (u, stage)));
    }

    fn broadcast(&mut self, msg: RaMessage, origin: Vec<UeId>) {
        self.out.send.push(Envelope { msg, origin });
    }
}

pub fn bs_step(ctx: &mut BsContext, now: TimeStamp, input: BsInput) -> Result<BsOutput> {
    if now < ctx.last_event {
        return Err(Error::Contract(format!("BS event at {now} after {}", ctx.last_event)));
    }
    ctx.last_event = now;
    let mut s = BsStep { out: BsOutput::default(), now, ctx };
    match input {
        BsInput::Delivery(env) => bs_delivery(&mut s, env)?,
        BsInput::Timer(t) => bs_timer(&mut s, t)?,
    }
    Ok(s.out)
}

fn bs_delivery(s: &mut BsStep<'_>, env: Envelope) -> Result<()> {
    let now = s.now;
    match env.msg {
        RaMessage::Msg1 { preamble_index, .. } => {
            let floor = now.sf_floor();
            let residual = now.since(floor).expect("floor precedes");
            let cp = s.ctx.setup.prach.preamble_format.cp_length(s.ctx.setup.base.standard);
            let window = cp.min(s.ctx.setup.tac_window());
            if !s.ctx.hooks.schedule.rao_matches(floor) || residual > window {
                s.record(
                    BsState::WaitMsg1,
                    "msg1-miss",
                    BsState::WaitMsg1,
                    format!("arrival sf {} offset {residual}", floor.sf()),
                );
                return Ok(());
            }
            let bucket = s.ctx.pending_raos.entry(floor).or_default();
            if bucket.is_empty() {
                s.out.timers.push((floor + Duration::SF, BsTimer::RaoClose(floor)));
            }
            bucket.push(Candidate { preamble: preamble_index, residual, origin: env.origin });
            s.record(
                BsState::WaitMsg1,
                "rx-msg1",
                BsState::WaitMsg1,
                format!("preamble {preamble_index} rao-sf {} offset {residual}", floor.sf()),
            );
        }
        RaMessage::Msg3 { c_rnti, temp_c_rnti, ue_sf_used } => {
            let arrival_sf = nearest_sf(now);
            let hooks_seq = s.ctx.hooks.seq_sfd;
            let params = s.ctx.setup.sequence_params(temp_c_rnti);
            let processing = s.ctx.setup.processing;
            let pacing = s.ctx.hooks.pacing;
            let harq_max = s.ctx.setup.harq_max;
            let Some(a) = s
                .ctx
                .attempts
                .get_mut(&temp_c_rnti)
                .filter(|a| a.state == BsState::WaitMsg3 && within_half_sf(now, a.expected))
            else {
                s.progress(&env.origin, Stage::Msg3SchedMiss);
                s.record(
                    BsState::WaitMsg3,
                    "sched-miss",
                    BsState::WaitMsg3,
                    format!("temp {temp_c_rnti:#06x} arrival sf {}", arrival_sf.sf()),
                );
                return Ok(());
            };
            if a.decoded.is_some() {
                s.progress(&env.origin, Stage::Msg3DecodeFail);
                s.record(
                    BsState::WaitMsg3,
                    "msg3-collision",
                    BsState::WaitMsg3,
                    format!("second msg3 on temp {temp_c_rnti:#06x}"),
                );
                return Ok(());
            }
            let bs_sf = ((u64::from(arrival_sf.sf()) + SF_PER_FRAME - u64::from(hooks_seq)) % SF_PER_FRAME) as u8;
            if sequences_match(ue_sf_used, bs_sf, &params) {
                a.decoded = Some((c_rnti, env.origin.clone()));
                a.state = BsState::GenerateMsg4;
                let mut tx = arrival_sf + processing;
                if let Some(p) = pacing {
                    tx = tx.max(a.label_m + p.cr + processing);
                }
                s.out.timers.push((tx, BsTimer::SendMsg4 { temp: temp_c_rnti }));
                s.progress(&env.origin, Stage::Msg4Timeout);
                s.record(
                    BsState::WaitMsg3,
                    "rx-msg3",
                    BsState::GenerateMsg4,
                    format!("c-rnti {c_rnti:#x} sf {bs_sf} msg4 at {tx}"),
                );
            } else {
                let detail = format!("ue sf {ue_sf_used} bs sf {bs_sf}");
                let retry = a.harq_tx < harq_max && !a.nack_pending;
                if retry {
                    a.nack_pending = true;
                    s.out.timers.push((arrival_sf + processing, BsTimer::SendNack { temp: temp_c_rnti }));
                }
                s.progress(&env.origin, Stage::Msg3DecodeFail);
                s.record(BsState::WaitMsg3, "decode-fail", BsState::WaitMsg3, detail);
            }
        }
        RaMessage::Harq { ack: true, temp_c_rnti } => {
            if let Some(a) = s.ctx.attempts.get_mut(&temp_c_rnti).filter(|a| a.state == BsState::GenerateMsg4) {
                a.state = BsState::Done;
                s.ctx.attempts.remove(&temp_c_rnti);
                s.record(BsState::GenerateMsg4, "rx-ack", BsState::Done, format!("temp {temp_c_rnti:#06x}"));
            }
        }
        _ => {}
    }
    Ok(())
}

fn bs_timer(s: &mut BsStep<'_>, t: BsTimer) -> Result<()> {
    let now = s.now;
    let setup = s.ctx.setup.clone();
    match t {
        BsTimer::RaoClose(rao) => {
            let Some(cands) = s.ctx.pending_raos.remove(&rao) else { return Ok(()) };
            let mut groups: BTreeMap<u8, Vec<Candidate>> = BTreeMap::new();
            for c in cands {
                groups.entry(c.preamble).or_default().push(c);
            }
            let t_id = corrected_t_id(rao.sf(), s.ctx.hooks.rnti_correction);
            let ra_rnti = rnti_for(&setup, t_id)?;
            for (preamble, group) in groups {
                let origin: Vec<UeId> = group.iter().flat_map(|c| c.origin.iter().copied()).collect();
                if group.len() > 1 {
                    s.out.collisions.push(origin.clone());
                    if setup.collision_model == CollisionModel::Undetected {
                        s.record(
                            BsState::WaitMsg1,
                            "collision",
                            BsState::WaitMsg1,
                            format!("preamble {preamble} x{}", group.len()),
                        );
                        continue;
                    }
                }
                let residual = group.iter().map(|c| c.residual).min().expect("non-empty group");
                let tac = ((residual.samples() + TAC_STEP_SAMPLES / 2) / TAC_STEP_SAMPLES).min(u64::from(setup.max_tac))
                    as u32;
                let temp = s.ctx.allocate_temp();
                let mut tx = (rao + setup.processing).max(rao + Duration::SF);
                if let Some(p) = s.ctx.hooks.pacing {
                    if let Ok(ue_rao) = rao.checked_sub(s.ctx.hooks.cell_shift) {
                        tx = tx.max(ue_rao + p.rar + setup.processing);
                    }
                }
                s.ctx.attempts.insert(
                    temp,
                    Attempt {
                        state: BsState::GenerateMsg2,
                        rao,
                        ra_rnti,
                        preamble,
                        tac,
                        label_m: tx,
                        expected: tx,
                        harq_tx: 0,
                        nack_pending: false,
                        decoded: None,
                        msg4_tx: 0,
                        origin: origin.clone(),
                    },
                );
                s.out.timers.push((tx, BsTimer::SendMsg2 { temp }));
                s.progress(&origin, Stage::Msg2Timeout);
                s.record(
                    BsState::WaitMsg1,
                    "detect",
                    BsState::GenerateMsg2,
                    format!("preamble {preamble} ra-rnti {} tac {tac} msg2 at {tx}", ra_rnti.value),
                );
            }
        }
        BsTimer::SendMsg2 { temp } => {
            let Some(a) = s.ctx.attempts.get_mut(&temp).filter(|a| a.state == BsState::GenerateMsg2) else {
                return Ok(());
            };
            let grant = (!setup.contention_free).then_some(setup.grant);
            let msg = RaMessage::Msg2 {
                ra_rnti: a.ra_rnti,
                preamble_index: a.preamble,
                tac: a.tac,
                grant,
                temp_c_rnti: temp,
            };
            let origin = a.origin.clone();
            let rao = a.rao;
            if setup.contention_free {
                a.state = BsState::Done;
                s.ctx.attempts.remove(&temp);
                s.broadcast(msg, origin);
                s.record(BsState::GenerateMsg2, "tx-msg2", BsState::Done, format!("contention-free rao {rao}"));
                return Ok(());
            }
            a.state = BsState::WaitMsg3;
            a.label_m = now.sf_floor() + setup.grant.offset();
            a.expected = a.label_m + s.ctx.hooks.sched_shift;
            let expected = a.expected;
            s.out.timers.push((
                expected + Duration::from_samples(SAMPLES_PER_SF / 2 + 1),
                BsTimer::GrantExpire { temp, expected },
            ));
            s.broadcast(msg, origin);
            s.record(
                BsState::GenerateMsg2,
                "tx-msg2",
                BsState::WaitMsg3,
                format!("temp {temp:#06x} expect msg3 at {expected}"),
            );
        }
        BsTimer::GrantExpire { temp, expected } => {
            if s.ctx
                .attempts
                .get(&temp)
                .is_some_and(|a| a.state == BsState::WaitMsg3 && a.expected == expected && !a.nack_pending)
            {
                s.ctx.attempts.remove(&temp);
                s.record(BsState::WaitMsg3, "grant-expired", BsState::Done, format!("temp {temp:#06x}"));
            }
        }
        BsTimer::SendNack { temp } => {
            let shift = s.ctx.hooks.sched_shift;
            let Some(a) = s.ctx.attempts.get_mut(&temp).filter(|a| a.state == BsState::WaitMsg3) else {
                return Ok(());
            };
            a.nack_pending = false;
            a.harq_tx += 1;
            a.label_m = now.sf_floor() + Duration::from_sf(4);
            a.expected = a.label_m + shift;
            let expected = a.expected;
            let origin = a.origin.clone();
            s.out.timers.push((
                expected + Duration::from_samples(SAMPLES_PER_SF / 2 + 1),
                BsTimer::GrantExpire { temp, expected },
            ));
            s.broadcast(RaMessage::Harq { ack: false, temp_c_rnti: temp }, origin);
            s.record(
                BsState::WaitMsg3,
                "tx-nack",
                BsState::WaitMsg3,
                format!("temp {temp:#06x} expect msg3 at {expected}"),
            );
        }
        BsTimer::SendMsg4 { temp } => {
            let shift = s.ctx.hooks.sched_shift;
            let Some(a) = s.ctx.attempts.get_mut(&temp).filter(|a| a.state == BsState::GenerateMsg4) else {
                return Ok(());
            };
            let (c_rnti, origin) = a.decoded.clone().expect("decoded before msg4");
            a.msg4_tx += 1;
            let tx = a.msg4_tx;
            let deadline = now.sf_floor() + Duration::from_sf(5) + shift;
            s.out.timers.push((deadline, BsTimer::Msg4AckDeadline { temp, tx }));
            s.broadcast(contention_resolution(temp, c_rnti), origin);
            s.record(
                BsState::GenerateMsg4,
                "tx-msg4",
                BsState::GenerateMsg4,
                format!("temp {temp:#06x} echo {c_rnti:#x} tx {tx}"),
            );
        }
        BsTimer::Msg4AckDeadline { temp, tx } => {
            let Some(a) = s.ctx.attempts.get_mut(&temp).filter(|a| a.state == BsState::GenerateMsg4 && a.msg4_tx == tx)
            else {
                return Ok(());
            };
            if a.msg4_tx < setup.harq_max {
                s.out.timers.push((now, BsTimer::SendMsg4 { temp }));
                s.record(
                    BsState::GenerateMsg4,
                    "msg4-no-ack",
                    BsState::GenerateMsg4,
                    format!("temp {temp:#06x} retransmit"),
                );
            } else {
                s.ctx.attempts.remove(&temp);
                s.record(BsState::GenerateMsg4, "msg4-no-ack", BsState::Done, format!("temp {temp:#06x} harq limit"));
            }
        }
    }
    Ok(())
}

/// Msg4 for an accepted Msg3: echoes the UE identity it carried.
pub fn contention_resolution(temp_c_rnti: u16, msg3_c_rnti: u32) -> RaMessage {
    RaMessage::Msg4 { temp_c_rnti, echoed_c_rnti: msg3_c_rnti }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::Standard;

    fn ms(v: f64) -> Duration {
        Duration::from_ms_f64(v).unwrap()
    }

    fn setup(rtt: f64) -> RaSetup {
        RaSetup::new(TimeBase::lte(), PrachConfig::builtin(Standard::Lte, 3).unwrap()).unwrap().with_cell_rtt(ms(rtt))
    }

    #[test]
    fn strategy_validation() {
        assert!(CorrectionStrategy::no_correction().with_flags(FixFlags::ALL).validate().is_err());
        assert!(CorrectionStrategy::ta().with_flags(FixFlags::NONE).validate().is_ok());
        let mut s = setup(4.0);
        s.cell_rtt = None;
        assert!(matches!(bs_hooks(&CorrectionStrategy::td(), &s), Err(Error::Config(_))));
        assert!(bs_hooks(&CorrectionStrategy::no_correction(), &s).is_ok());
    }

    #[test]
    fn ladder_flags_are_cumulative() {
        let l = FixFlags::LADDER;
        assert_eq!(l[0].to_string(), "none");
        assert_eq!(l[4].to_string(), "rao+rnti+sched+seq");
        for w in l.windows(2) {
            assert!(!w[0].rao || w[1].rao);
            assert!(!w[0].rnti || w[1].rnti);
            assert!(!w[0].sched || w[1].sched);
        }
    }

    #[test]
    fn stage_order() {
        assert!(Stage::Msg1Undetected < Stage::Msg2Withdrawn);
        assert!(Stage::Msg2Withdrawn < Stage::Msg3SchedMiss);
        assert!(Stage::Msg3SchedMiss < Stage::Msg3DecodeFail);
        assert!(Stage::Msg3DecodeFail < Stage::Connected);
        assert_eq!(Stage::Msg3SchedMiss.to_string(), "Msg3-sched-miss");
    }

    #[test]
    fn ta_hooks_at_leo_delay() {
        let s = setup(4.3);
        let h = ue_hooks(&CorrectionStrategy::ta(), &s, ms(4.3)).unwrap();
        assert_eq!(h.schedule.effective_sf_numbers().into_iter().collect::<Vec<_>>(), vec![7]);
        assert_eq!(h.rnti_correction, TidCorrection::UeTa { sfa: 4, fa: 0 });
        assert_eq!(h.seq_sf_offset, 4);
        assert_eq!(h.sample_advance, ms(0.3));
        assert_eq!(h.timers.rar_window, ms(14.3));
        let b = bs_hooks(&CorrectionStrategy::ta(), &s).unwrap();
        assert_eq!(b.sched_shift, Duration::from_sf(4));
        assert_eq!(b.rnti_correction, TidCorrection::None);
        assert_eq!(b.schedule.shift_sf(), 0);
    }

    #[test]
    fn td_hooks_and_pacing() {
        let s = setup(4.0);
        let b = bs_hooks(&CorrectionStrategy::td(), &s).unwrap();
        assert_eq!(b.schedule.effective_sf_numbers().into_iter().collect::<Vec<_>>(), vec![5]);
        assert_eq!(b.rnti_correction, TidCorrection::BsTd { sfd: 4, fd: 0 });
        assert_eq!(b.seq_sfd, 4);
        let p = b.pacing.unwrap();
        // 10 ms window extended to the first grid value above 14 ms.
        let grid = s.timers.rar_grid();
        let g = grid.iter().find(|&&v| v >= ms(14.0)).unwrap();
        assert_eq!(p.rar, (*g - ms(10.0)).ceil_sf());
        let u = ue_hooks(&CorrectionStrategy::td(), &s, ms(4.0)).unwrap();
        assert_eq!(u.timers.rar_window, *g);
        assert_eq!(u.sample_advance, Duration::ZERO);
    }

    #[test]
    fn sample_ta_caps_correction() {
        let s = setup(4.0);
        let h = ue_hooks(&CorrectionStrategy::sample_ta_only(), &s, ms(4.0)).unwrap();
        assert_eq!(h.sample_advance, Duration::from_samples(1282 * 16));
        let h = ue_hooks(&CorrectionStrategy::sample_ta_only(), &s, ms(0.5)).unwrap();
        assert_eq!(h.sample_advance, ms(0.5));
    }

    #[test]
    fn zero_rtt_hooks_are_no_ops() {
        let s = setup(0.0);
        let plain_ue = ue_hooks(&CorrectionStrategy::no_correction(), &s, Duration::ZERO).unwrap();
        let plain_bs = bs_hooks(&CorrectionStrategy::no_correction(), &s).unwrap();
        for strat in [CorrectionStrategy::ta(), CorrectionStrategy::td()] {
            let u = ue_hooks(&strat, &s, Duration::ZERO).unwrap();
            assert_eq!(u.schedule.effective_sf_numbers(), plain_ue.schedule.effective_sf_numbers());
            assert_eq!(u.sample_advance, Duration::ZERO);
            assert_eq!(corrected_t_id(3, u.rnti_correction), 3);
            assert_eq!(u.timers, plain_ue.timers);
            let b = bs_hooks(&strat, &s).unwrap();
            assert_eq!(b.schedule.effective_sf_numbers(), plain_bs.schedule.effective_sf_numbers());
            assert_eq!(b.sched_shift, Duration::ZERO);
            assert_eq!(b.pacing.map_or(Duration::ZERO, |p| p.rar + p.cr), Duration::ZERO);
        }
    }

    fn drive_ue(rtt: f64) -> (UeContext, UeOutput) {
        let s = setup(rtt);
        let h = ue_hooks(&CorrectionStrategy::no_correction(), &s, ms(rtt)).unwrap();
        let mut ue = UeContext::new(0, s, h, ms(rtt), ms(rtt / 2.0), 1);
        let out = ue_step(&mut ue, TimeStamp::from_samples(ms(rtt / 2.0).samples()), UeInput::Start).unwrap();
        (ue, out)
    }

    #[test]
    fn ue_msg2_rnti_filter() {
        let (mut ue, out) = drive_ue(0.0);
        assert_eq!(ue.state, UeState::GenerateMsg1);
        let (at, t) = out.timers[0];
        assert_eq!(at, TimeStamp::at(0, 1));
        ue_step(&mut ue, at, UeInput::Timer(t)).unwrap();
        assert_eq!(ue.state, UeState::WaitMsg2);
        let rnti = ue.ra_rnti.unwrap();
        assert_eq!(rnti.value, 2);

        let foreign = RaRnti { value: 6, standard: Standard::Lte };
        let preamble_index = ue.preamble_index;
        let msg = |ra_rnti| Envelope {
            msg: RaMessage::Msg2 {
                ra_rnti,
                preamble_index,
                tac: 0,
                grant: Some(Msg3Grant::new(Standard::Lte, 4).unwrap()),
                temp_c_rnti: 0x50,
            },
            origin: vec![0],
        };
        let out = ue_step(&mut ue, TimeStamp::at(0, 5), UeInput::Delivery(msg(foreign))).unwrap();
        assert_eq!(ue.state, UeState::WaitMsg2);
        assert_eq!(out.stage, Some(Stage::Msg2Withdrawn));
        ue_step(&mut ue, TimeStamp::at(0, 5), UeInput::Delivery(msg(rnti))).unwrap();
        assert_eq!(ue.state, UeState::GenerateMsg3);
        assert_eq!(ue.temp_c_rnti, Some(0x50));
    }

    #[test]
    fn ue_rar_expiry_retries() {
        let (mut ue, out) = drive_ue(0.0);
        let (at, t) = out.timers[0];
        let out = ue_step(&mut ue, at, UeInput::Timer(t)).unwrap();
        let (deadline, t) = out.timers[0];
        assert_eq!(deadline, at + ms(13.0));
        let out = ue_step(&mut ue, deadline, UeInput::Timer(t)).unwrap();
        assert_eq!(ue.state, UeState::GenerateMsg1);
        assert_eq!(ue.retry_count, 1);
        assert_eq!(ue.power_ramp_level, 1);
        let (backoff_end, _) = out.timers[0];
        assert!(backoff_end.since(deadline).unwrap() <= ms(20.0));
    }

    #[test]
    fn ue_rejects_time_travel() {
        let (mut ue, _) = drive_ue(4.0);
        assert!(matches!(ue_step(&mut ue, TimeStamp::ZERO, UeInput::Start), Err(Error::Contract(_))));
    }

    #[test]
    fn contention_resolution_echoes() {
        assert_eq!(contention_resolution(0x41, 0x10002), RaMessage::Msg4 { temp_c_rnti: 0x41, echoed_c_rnti: 0x10002 });
    }

    fn bs(strategy: CorrectionStrategy, rtt: f64) -> BsContext {
        let s = setup(rtt);
        let h = bs_hooks(&strategy, &s).unwrap();
        BsContext::new(s, h)
    }

    fn msg1(preamble: u8, ue: UeId) -> BsInput {
        BsInput::Delivery(Envelope {
            msg: RaMessage::Msg1 { preamble_index: preamble, tx_timestamp: TimeStamp::ZERO },
            origin: vec![ue],
        })
    }

    #[test]
    fn bs_ignores_unscheduled_msg1() {
        // Sent at SF 1, arrives at SF 5; the BS only listens on SF 1.
        let mut b = bs(CorrectionStrategy::no_correction(), 4.0);
        let out = bs_step(&mut b, TimeStamp::at(0, 5), msg1(7, 0)).unwrap();
        assert!(out.timers.is_empty());
        assert_eq!(out.trace[0].event, "msg1-miss");
    }

    #[test]
    fn bs_detects_at_delayed_rao() {
        let mut b = bs(CorrectionStrategy::td(), 4.0);
        let out = bs_step(&mut b, TimeStamp::at(0, 5), msg1(7, 0)).unwrap();
        let (close, t) = out.timers[0];
        assert_eq!(close, TimeStamp::at(0, 6));
        let out = bs_step(&mut b, close, BsInput::Timer(t)).unwrap();
        assert_eq!(out.progress, vec![(0, Stage::Msg2Timeout)]);
        let (tx, t) = out.timers[0];
        let out = bs_step(&mut b, tx, BsInput::Timer(t)).unwrap();
        match &out.send[0].msg {
            RaMessage::Msg2 { ra_rnti, preamble_index, tac, .. } => {
                assert_eq!(ra_rnti.value, 2);
                assert_eq!(*preamble_index, 7);
                assert_eq!(*tac, 0);
            }
            m => panic!("{m:?}"),
        }
    }

    #[test]
    fn identical_preambles_cancel() {
        let mut b = bs(CorrectionStrategy::no_correction(), 0.0);
        let t0 = TimeStamp::at(0, 1);
        let out = bs_step(&mut b, t0, msg1(9, 0)).unwrap();
        bs_step(&mut b, t0, msg1(9, 1)).unwrap();
        bs_step(&mut b, t0, msg1(3, 2)).unwrap();
        let (close, t) = out.timers[0];
        let out = bs_step(&mut b, close, BsInput::Timer(t)).unwrap();
        assert_eq!(out.collisions, vec![vec![0, 1]]);
        assert_eq!(out.progress, vec![(2, Stage::Msg2Timeout)]);
        assert_eq!(out.timers.len(), 1);
    }
}
