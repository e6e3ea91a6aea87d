//! Budget convergence against a constant 50 Gbps drain, and the occupancy it
//! leaves at the destination OTN.

use matchrdma::engine::SimTime;
use matchrdma::otn::{required_buffer, RateTrace};
use matchrdma::scenarios;
use matchrdma::sim::simulate;

fn main() {
    let c = scenarios::steady_state();
    let o = simulate(&c).unwrap();
    println!("{:>12} {:>6} {:>12}", "installed", "epoch", "rate");
    for &(t, e, r) in o.budget_history.iter().take(12) {
        println!("{:>12} {:>6} {:>10.3}G", t.to_string(), e, r / 1e9);
    }
    if o.budget_history.len() > 12 {
        println!("... {} more", o.budget_history.len() - 12);
    }

    let steps: Vec<(SimTime, f64)> = o.budget_history.iter().map(|b| (b.0, b.2)).collect();
    let r_in = RateTrace::from_steps(&steps, o.end).unwrap();
    let r_out = RateTrace::constant(scenarios::STEADY_DRAIN_GBPS * 1e9, o.end);
    let tau = SimTime::from_nanos(2 * o.one_way_delay.as_nanos() + c.otn.update_every_slots as u64 * c.otn.t_slot_ns);
    let bound = required_buffer(&r_in, &r_out, tau) + c.otn.bucket_burst_bytes as f64;
    println!("peak occupancy {} B, mean {:.0} B, bound {:.0} B", o.peak_buf, o.mean_buf, bound);
}
