//! The FIFO delay line on its own: a downlink message sent in SF 1 over a
//! 4 ms round trip shows up at the UE in SF 3.

use ntn_rach::channel::{DelayChannel, Direction};
use ntn_rach::{Duration, Payload, TimeStamp};

fn main() -> ntn_rach::Result<()> {
    let mut ch = DelayChannel::new(Duration::from_ms_f64(4.0)?, Payload::Regenerative)?;
    let sent = TimeStamp::at(0, 1);
    let due = ch.send(Direction::Downlink, "RAR", sent)?.expect("no loss hook");
    println!("sent {sent}, due {due}");
    let mut t = sent;
    while ch.in_flight() > 0 {
        if let Some(m) = ch.deliver(Direction::Downlink, t) {
            println!("{m} delivered at {t}");
        }
        t = t + Duration::SF;
    }
    Ok(())
}
