//! Destination-side rate estimation from slot observations: stable-window
//! detection over a history with a burst, then the weighted budget at each
//! congestion level.

use matchrdma::otn::slots::{detect_stable_windows, estimate_rate_budget, CongestionLevel, EstimatorWeights, SlotSample};
use matchrdma::otn::OtnParams;

fn main() {
    let p = OtnParams::default();
    let mut history: Vec<SlotSample> = Vec::new();
    let mut push = |gbps: f64, n: usize, level| {
        history.extend(std::iter::repeat_n(SlotSample { rate_bps: gbps * 1e9, level }, n));
    };
    push(80.0, 12, CongestionLevel::Med);
    push(10.0, 1, CongestionLevel::Med);
    push(40.0, 1, CongestionLevel::High);
    push(78.0, 10, CongestionLevel::Med);

    let part = detect_stable_windows(&history, p.min_window_slots, p.cv_eps);
    println!("{} slots: stable windows {:?}, jitter slots {:?}", history.len(), part.windows, part.jitter);

    let w = EstimatorWeights {
        w_stable: p.w_stable,
        w_jitter: p.w_jitter,
        jitter_quantile: p.jitter_quantile,
        beta: p.beta,
        headroom: p.headroom,
        rate_floor_bps: p.rate_floor_bps,
        capacity_bps: 400e9,
    };
    for level in [CongestionLevel::Low, CongestionLevel::Med, CongestionLevel::High] {
        let b = estimate_rate_budget(&history, &part, level, &w);
        println!("level {:<4} -> budget {:.2} Gbps", level.as_str(), b / 1e9);
    }
}
