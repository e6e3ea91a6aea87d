//! Minimum destination buffer for a rate mismatch, evaluated exactly over
//! piecewise-constant traces.
//!
//! With no arguments, prints the buffer needed when a 380 Gbps budget meets a
//! drain that drops to 100 Gbps, for several uncertainty windows. Otherwise:
//! `buffer_calculator <in_gbps> <out_gbps> <tau_us>`.

use matchrdma::engine::SimTime;
use matchrdma::otn::{required_buffer, RateTrace};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let horizon = SimTime::from_millis(20);
    if let [r_in, r_out, tau_us] = args[..] {
        let b = required_buffer(
            &RateTrace::constant(r_in * 1e9, horizon),
            &RateTrace::constant(r_out * 1e9, horizon),
            SimTime::from_secs_f64(tau_us * 1e-6),
        );
        println!("{b:.0} B");
        return;
    }

    let r_in = RateTrace::constant(380e9, horizon);
    let r_out = RateTrace::new(vec![(0, 400e9), (5_000_000, 100e9)], horizon.as_nanos()).unwrap();
    println!("budget 380 Gbps, drain 400 -> 100 Gbps at 5 ms");
    println!("{:>10} {:>14}", "tau", "buffer (MB)");
    for km in [1.0, 10.0, 100.0, 500.0, 1000.0] {
        let d = matchrdma::fabric::long_haul_delay(km);
        // Two one-way delays plus one budget period of 1 ms.
        let tau = SimTime::from_nanos(2 * d.as_nanos() + 1_000_000);
        let b = required_buffer(&r_in, &r_out, tau);
        println!("{:>10} {:>14.2}   ({km} km)", tau.to_string(), b / 1e6);
    }
}
