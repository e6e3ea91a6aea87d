//! The discrete-event core on its own: a two-node ping-pong over a 1000 km
//! link, with ties broken in insertion order.

use matchrdma::engine::{EventQueue, SimTime};
use matchrdma::fabric::long_haul_delay;

#[derive(Debug)]
enum Ev {
    Ping(u32),
    Pong(u32),
    Tick,
}

fn main() {
    let one_way = long_haul_delay(1000.0);
    let mut q = EventQueue::new();
    q.schedule(SimTime::ZERO, Ev::Ping(0)).unwrap();
    q.schedule(SimTime::from_millis(12), Ev::Tick).unwrap();

    let end = q
        .run_until(SimTime::from_millis(25), |q, ev| -> Result<(), String> {
            println!("{:>12} {:?}", ev.fire_at.to_string(), ev.payload);
            match ev.payload {
                Ev::Ping(n) => q.schedule_in(one_way, Ev::Pong(n)),
                Ev::Pong(n) => q.schedule_in(one_way, Ev::Ping(n + 1)),
                Ev::Tick => {}
            }
            Ok(())
        })
        .unwrap();
    println!("stopped at {end}, {} events dispatched, {} pending", q.dispatched_count(), q.pending());
}
