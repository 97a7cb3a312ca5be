//! Deterministic discrete-event core and KPI collection.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{DelayChannel, Direction};
use crate::error::{Error, Result};
use crate::geometry::Payload;
use crate::protocol::{
    bs_hooks, bs_step, ue_hooks, BsContext, BsInput, BsOutput, BsTimer, CollisionModel, CorrectionMode,
    CorrectionStrategy, Envelope, FixFlags, RaSetup, Stage, TraceRecord, UeContext, UeId, UeInput, UeOutput, UeTimer,
    PREAMBLE_POOL,
};
use crate::raconfig::{Msg3Grant, PrachConfig, PrachTable, PreambleFormat};
use crate::timing::{Duration, Standard, TimeBase, TimeStamp};

/// Everything one run needs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub standard: Standard,
    pub mu: u8,
    pub prach_index: u32,
    /// Table to look the index up in; the built-in rows when `None`.
    pub prach_table: Option<PrachTable>,
    pub preamble_format: Option<PreambleFormat>,
    pub strategy: CorrectionStrategy,
    pub rtt: Duration,
    /// Beam-centre RTT known to the BS; defaults to `rtt`.
    pub cell_rtt: Option<Duration>,
    pub payload: Payload,
    /// Additive error on the UE's own RTT estimate, in samples.
    pub gnss_error: i64,
    pub n_ues: u32,
    pub seed: u64,
    pub max_time: Duration,
    pub processing: Duration,
    pub grant_offset_sf: u32,
    pub harq_max: u32,
    pub backoff_max: Duration,
    pub extended_timers: bool,
    pub force_same_preamble: bool,
    pub collision_model: CollisionModel,
    pub contention_free: bool,
}

impl Scenario {
    /// Single LTE UE on PRACH configuration 3 (SF 1 of every frame).
    pub fn new(strategy: CorrectionStrategy, rtt: Duration) -> Self {
        Self {
            standard: Standard::Lte,
            mu: 0,
            prach_index: 3,
            prach_table: None,
            preamble_format: None,
            strategy,
            rtt,
            cell_rtt: None,
            payload: Payload::Regenerative,
            gnss_error: 0,
            n_ues: 1,
            seed: 1,
            max_time: Duration::from_sf(4000),
            processing: Duration::from_sf(4),
            grant_offset_sf: Msg3Grant::MIN_OFFSET_SF,
            harq_max: 4,
            backoff_max: Duration::from_sf(20),
            extended_timers: true,
            force_same_preamble: false,
            collision_model: CollisionModel::Undetected,
            contention_free: false,
        }
    }

    pub fn with_rtt(&self, rtt: Duration) -> Self {
        Self { rtt, cell_rtt: None, ..self.clone() }
    }

    pub fn with_strategy(&self, strategy: CorrectionStrategy) -> Self {
        Self { strategy, ..self.clone() }
    }

    pub fn cell_rtt(&self) -> Duration {
        self.cell_rtt.unwrap_or(self.rtt)
    }

    pub fn prach(&self) -> Result<PrachConfig> {
        let mut row = match &self.prach_table {
            Some(t) => t.get(self.standard, self.prach_index).cloned().ok_or_else(|| {
                Error::Config(format!("PRACH table has no {} index {}", self.standard, self.prach_index))
            })?,
            None => PrachConfig::builtin(self.standard, self.prach_index)?,
        };
        if let Some(f) = self.preamble_format {
            row.preamble_format = f;
        }
        Ok(row)
    }

    pub fn setup(&self) -> Result<RaSetup> {
        let base = TimeBase::new(self.standard, self.mu)?;
        let mut s = RaSetup::new(base, self.prach()?)?.with_cell_rtt(self.cell_rtt());
        s.timers = s.timers.with_extension(self.extended_timers);
        s.processing = self.processing;
        s.grant = Msg3Grant::new(self.standard, self.grant_offset_sf)?;
        s.harq_max = self.harq_max;
        s.backoff_max = self.backoff_max;
        s.contention_free = self.contention_free;
        s.collision_model = self.collision_model;
        Ok(s)
    }

    pub fn rtt_estimate(&self) -> Duration {
        Duration::from_samples(self.rtt.samples().saturating_add_signed(self.gnss_error))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ues == 0 {
            return Err(Error::Config("n_ues must be at least 1".into()));
        }
        if self.max_time == Duration::ZERO {
            return Err(Error::Config("max_time must be positive".into()));
        }
        self.strategy.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UeKpi {
    pub ue: UeId,
    pub access_time: Option<Duration>,
    pub furthest_stage: Stage,
    pub retries: u32,
    pub collisions: u32,
}

#[derive(Debug, Clone)]
pub struct KpiReport {
    pub rtt: Duration,
    pub strategy: CorrectionStrategy,
    pub ues: Vec<UeKpi>,
    pub collision_count: u32,
    pub end_time: TimeStamp,
    pub trace: Vec<TraceRecord>,
}

pub const KPI_HEADER: &str = "rtt_ms,strategy,access_time_ms,retries,furthest_stage";

fn kpi_row(rtt: Duration, mode: CorrectionMode, access: Option<Duration>, retries: u32, stage: Stage) -> String {
    let access = access.map_or(String::new(), |a| format!("{:.4}", a.as_ms_f64()));
    format!("{:.4},{mode},{access},{retries},{stage}", rtt.as_ms_f64())
}

impl KpiReport {
    pub fn all_connected(&self) -> bool {
        self.ues.iter().all(|u| u.access_time.is_some())
    }

    /// Access time of the first UE.
    pub fn access_time(&self) -> Option<Duration> {
        self.ues[0].access_time
    }

    /// Furthest stage of the first UE.
    pub fn furthest_stage(&self) -> Stage {
        self.ues[0].furthest_stage
    }

    pub fn mean_access_time(&self) -> Option<Duration> {
        let times: Option<Vec<u64>> = self.ues.iter().map(|u| u.access_time.map(Duration::samples)).collect();
        let times = times?;
        Some(Duration::from_samples(times.iter().sum::<u64>() / times.len() as u64))
    }

    pub fn kpi_csv(&self) -> String {
        let mut s = format!("{KPI_HEADER}\n");
        for u in &self.ues {
            s.push_str(&kpi_row(self.rtt, self.strategy.mode, u.access_time, u.retries, u.furthest_stage));
            s.push('\n');
        }
        s
    }

    pub fn trace_csv(&self) -> String {
        crate::protocol::trace_csv(&self.trace)
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    UeStart(UeId),
    Ue(UeId, UeTimer),
    Bs(BsTimer),
    Uplink(UeId),
    Downlink(UeId),
}

impl Event {
    /// BS-side work runs before UE-side work at equal time.
    fn rank(&self) -> u8 {
        match self {
            Event::Bs(_) | Event::Uplink(_) => 0,
            Event::UeStart(_) | Event::Ue(..) | Event::Downlink(_) => 1,
        }
    }
}

#[derive(Debug)]
struct Queued {
    time: TimeStamp,
    rank: u8,
    seq: u64,
    event: Event,
}

impl Queued {
    fn key(&self) -> (TimeStamp, u8, u64) {
        (self.time, self.rank, self.seq)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Min-queue on (time, rank, insertion order).
#[derive(Debug, Default)]
struct EventQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    last_popped: Option<TimeStamp>,
}

impl EventQueue {
    fn push(&mut self, time: TimeStamp, event: Event) -> Result<()> {
        if self.last_popped.is_some_and(|t| time < t) {
            return Err(Error::Contract(format!("event scheduled at {time} in the past")));
        }
        self.seq += 1;
        self.heap.push(Reverse(Queued { time, rank: event.rank(), seq: self.seq, event }));
        Ok(())
    }

    fn pop(&mut self) -> Option<Queued> {
        let q = self.heap.pop()?.0;
        self.last_popped = Some(q.time);
        Some(q)
    }
}

struct Sim {
    queue: EventQueue,
    ues: Vec<UeContext>,
    channels: Vec<DelayChannel<Envelope>>,
    bs: BsContext,
    stages: Vec<Stage>,
    collisions: Vec<u32>,
    collision_count: u32,
    trace: Vec<TraceRecord>,
}

impl Sim {
    fn ue_output(&mut self, ue: UeId, now: TimeStamp, out: UeOutput) -> Result<()> {
        let i = ue as usize;
        for env in out.send {
            if let Some(at) = self.channels[i].send(Direction::Uplink, env, now)? {
                self.queue.push(at, Event::Uplink(ue))?;
            }
        }
        for (at, t) in out.timers {
            self.queue.push(at, Event::Ue(ue, t))?;
        }
        if let Some(s) = out.stage {
            self.stages[i] = self.stages[i].max(s);
        }
        self.trace.extend(out.trace);
        Ok(())
    }

    fn bs_output(&mut self, now: TimeStamp, out: BsOutput) -> Result<()> {
        for env in out.send {
            for (i, ch) in self.channels.iter_mut().enumerate() {
                if let Some(at) = ch.send(Direction::Downlink, env.clone(), now)? {
                    self.queue.push(at, Event::Downlink(i as UeId))?;
                }
            }
        }
        for (at, t) in out.timers {
            self.queue.push(at, Event::Bs(t))?;
        }
        for (ue, s) in out.progress {
            let i = ue as usize;
            self.stages[i] = self.stages[i].max(s);
        }
        for group in out.collisions {
            self.collision_count += 1;
            for ue in group {
                self.collisions[ue as usize] += 1;
            }
        }
        self.trace.extend(out.trace);
        Ok(())
    }
}

/// Runs one scenario to completion or `max_time`.
pub fn run(scenario: &Scenario) -> Result<KpiReport> {
    scenario.validate()?;
    let setup = scenario.setup()?;
    let rtt_est = scenario.rtt_estimate();
    let uh = ue_hooks(&scenario.strategy, &setup, rtt_est)?;
    let bh = bs_hooks(&scenario.strategy, &setup)?;

    let mut master = ChaCha8Rng::seed_from_u64(scenario.seed);
    let shared_preamble = master.gen_range(0..PREAMBLE_POOL);
    let mut channels = Vec::new();
    let mut ues = Vec::new();
    for id in 0..scenario.n_ues {
        let ch = DelayChannel::new(scenario.rtt, scenario.payload)?;
        let dl = ch.one_way_delay(Direction::Downlink);
        let mut ue = UeContext::new(id, setup.clone(), uh.clone(), rtt_est, dl, master.gen());
        if scenario.force_same_preamble {
            ue.fixed_preamble = Some(shared_preamble);
        }
        channels.push(ch);
        ues.push(ue);
    }
    let n = ues.len();
    let mut sim = Sim {
        queue: EventQueue::default(),
        ues,
        channels,
        bs: BsContext::new(setup, bh),
        stages: vec![Stage::Msg1Undetected; n],
        collisions: vec![0; n],
        collision_count: 0,
        trace: Vec::new(),
    };
    for (i, ch) in sim.channels.iter().enumerate() {
        // Each UE starts at local time zero.
        let start = TimeStamp::ZERO + ch.one_way_delay(Direction::Downlink);
        sim.queue.push(start, Event::UeStart(i as UeId))?;
    }

    let horizon = TimeStamp::ZERO + scenario.max_time;
    let mut end_time = TimeStamp::ZERO;
    while let Some(q) = sim.queue.pop() {
        if q.time > horizon {
            break;
        }
        let now = q.time;
        end_time = now;
        match q.event {
            Event::UeStart(ue) => {
                let out = crate::protocol::ue_step(&mut sim.ues[ue as usize], now, UeInput::Start)?;
                sim.ue_output(ue, now, out)?;
            }
            Event::Ue(ue, t) => {
                let out = crate::protocol::ue_step(&mut sim.ues[ue as usize], now, UeInput::Timer(t))?;
                sim.ue_output(ue, now, out)?;
            }
            Event::Downlink(ue) => {
                let env = sim.channels[ue as usize]
                    .deliver(Direction::Downlink, now)
                    .ok_or_else(|| Error::Contract(format!("downlink to UE {ue} empty at {now}")))?;
                let out = crate::protocol::ue_step(&mut sim.ues[ue as usize], now, UeInput::Delivery(env))?;
                sim.ue_output(ue, now, out)?;
            }
            Event::Uplink(ue) => {
                let env = sim.channels[ue as usize]
                    .deliver(Direction::Uplink, now)
                    .ok_or_else(|| Error::Contract(format!("uplink from UE {ue} empty at {now}")))?;
                let out = bs_step(&mut sim.bs, now, BsInput::Delivery(env))?;
                sim.bs_output(now, out)?;
            }
            Event::Bs(t) => {
                let out = bs_step(&mut sim.bs, now, BsInput::Timer(t))?;
                sim.bs_output(now, out)?;
            }
        }
        if sim.ues.iter().all(|u| u.connected_at.is_some()) {
            break;
        }
    }

    let ues = sim
        .ues
        .iter()
        .enumerate()
        .map(|(i, u)| UeKpi {
            ue: u.id,
            access_time: u.access_time(),
            furthest_stage: sim.stages[i],
            retries: u.retry_count,
            collisions: sim.collisions[i],
        })
        .collect();
    Ok(KpiReport {
        rtt: scenario.rtt,
        strategy: scenario.strategy,
        ues,
        collision_count: sim.collision_count,
        end_time,
        trace: sim.trace,
    })
}

/// Same as [`run`] but requires contention between at least two UEs.
pub fn multi_ue_run(scenario: &Scenario) -> Result<KpiReport> {
    if scenario.n_ues < 2 {
        return Err(Error::Config(format!("multi-UE run needs n_ues >= 2, got {}", scenario.n_ues)));
    }
    run(scenario)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPoint {
    pub rtt: Duration,
    pub mode: CorrectionMode,
    pub access_time: Option<Duration>,
    pub retries: u32,
    pub furthest_stage: Stage,
}

/// One single-UE run per RTT and strategy, sharing the scenario seed. The BS
/// cell RTT follows each swept value.
pub fn sweep_rtt(scenario: &Scenario, rtts: &[Duration], strategies: &[CorrectionStrategy]) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(rtts.len() * strategies.len());
    for &strategy in strategies {
        for &rtt in rtts {
            let r = run(&scenario.with_strategy(strategy).with_rtt(rtt))?;
            out.push(SweepPoint {
                rtt,
                mode: strategy.mode,
                access_time: r.access_time(),
                retries: r.ues[0].retries,
                furthest_stage: r.furthest_stage(),
            });
        }
    }
    Ok(out)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = format!("{KPI_HEADER}\n");
    for p in points {
        s.push_str(&kpi_row(p.rtt, p.mode, p.access_time, p.retries, p.furthest_stage));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LadderStep {
    pub flags: FixFlags,
    pub stage: Stage,
    pub access_time: Option<Duration>,
}

/// Runs the five cumulative fix sets with the scenario's SF-level strategy.
pub fn ladder(scenario: &Scenario) -> Result<Vec<LadderStep>> {
    if !matches!(scenario.strategy.mode, CorrectionMode::SfLevelTa | CorrectionMode::SfLevelTd) {
        return Err(Error::Config(format!("ladder needs an SF-level strategy, got {}", scenario.strategy.mode)));
    }
    FixFlags::LADDER
        .iter()
        .map(|&flags| {
            let r = run(&scenario.with_strategy(scenario.strategy.with_flags(flags)))?;
            Ok(LadderStep { flags, stage: r.furthest_stage(), access_time: r.access_time() })
        })
        .collect()
}

/// Expected ladder outcome: strictly advancing stages ending in Connected when
/// the round trip spans a subframe, all Connected otherwise.
pub fn ladder_holds(steps: &[LadderStep], rtt: Duration) -> bool {
    if rtt < Duration::SF {
        return steps.iter().all(|s| s.stage == Stage::Connected);
    }
    steps.windows(2).all(|w| w[0].stage < w[1].stage) && steps.last().is_some_and(|s| s.stage == Stage::Connected)
}
