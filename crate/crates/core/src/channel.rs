//! FIFO propagation-delay channel between one UE and the BS.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Payload;
use crate::timing::{Duration, TimeStamp};

/// Largest round trip the channel accepts.
pub const MAX_RTT_MS: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    fn slot(self) -> usize {
        match self {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }
    }
}

/// Random drop hook, off unless configured.
#[derive(Debug, Clone)]
pub struct LossHook {
    probability: f64,
    rng: ChaCha8Rng,
}

impl LossHook {
    pub fn new(probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::Config(format!("loss probability {probability} outside [0, 1]")));
        }
        Ok(Self { probability, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    fn drops(&mut self) -> bool {
        self.probability > 0.0 && self.rng.gen_bool(self.probability)
    }
}

#[derive(Debug, Clone)]
pub struct DelayChannel<M> {
    uplink: Duration,
    downlink: Duration,
    pub payload_mode: Payload,
    queues: [VecDeque<(M, TimeStamp)>; 2],
    last_enqueue: [Option<TimeStamp>; 2],
    loss: Option<LossHook>,
}

impl<M> DelayChannel<M> {
    /// Symmetric channel for `rtt`.
    pub fn new(rtt: Duration, payload_mode: Payload) -> Result<Self> {
        let mut ch = Self::asymmetric(Duration::ZERO, Duration::ZERO, payload_mode);
        ch.set_rtt(rtt)?;
        Ok(ch)
    }

    pub fn asymmetric(uplink: Duration, downlink: Duration, payload_mode: Payload) -> Self {
        Self {
            uplink,
            downlink,
            payload_mode,
            queues: [VecDeque::new(), VecDeque::new()],
            last_enqueue: [None, None],
            loss: None,
        }
    }

    pub fn with_loss(mut self, hook: LossHook) -> Self {
        self.loss = Some(hook);
        self
    }

    /// Splits `rtt` evenly; an odd sample goes to the uplink.
    pub fn set_rtt(&mut self, rtt: Duration) -> Result<()> {
        if rtt.as_ms_f64() > MAX_RTT_MS {
            return Err(Error::Config(format!("RTT {rtt} outside 0..={MAX_RTT_MS} ms")));
        }
        self.downlink = Duration::from_samples(rtt.samples() / 2);
        self.uplink = rtt - self.downlink;
        Ok(())
    }

    pub fn one_way_delay(&self, dir: Direction) -> Duration {
        match dir {
            Direction::Uplink => self.uplink,
            Direction::Downlink => self.downlink,
        }
    }

    pub fn rtt(&self) -> Duration {
        self.uplink + self.downlink
    }

    /// Enqueues `msg` and returns its release time, or `None` if the loss hook
    /// dropped it.
    pub fn send(&mut self, dir: Direction, msg: M, now: TimeStamp) -> Result<Option<TimeStamp>> {
        let i = dir.slot();
        if let Some(last) = self.last_enqueue[i] {
            if now < last {
                return Err(Error::Contract(format!("{dir:?} enqueue at {now} after {last}")));
            }
        }
        self.last_enqueue[i] = Some(now);
        if self.loss.as_mut().is_some_and(LossHook::drops) {
            return Ok(None);
        }
        let release = now + self.one_way_delay(dir);
        self.queues[i].push_back((msg, release));
        Ok(Some(release))
    }

    /// Head of the queue if it is due at `now`.
    pub fn deliver(&mut self, dir: Direction, now: TimeStamp) -> Option<M> {
        let q = &mut self.queues[dir.slot()];
        match q.front() {
            Some((_, release)) if *release <= now => q.pop_front().map(|(m, _)| m),
            _ => None,
        }
    }

    pub fn next_release(&self, dir: Direction) -> Option<TimeStamp> {
        self.queues[dir.slot()].front().map(|(_, t)| *t)
    }

    pub fn in_flight(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }
}
