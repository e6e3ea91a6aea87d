//! Destination-OTN occupancy when the receiving DC's drain falls from 400 to
//! 100 Gbps mid-run. Pass a directory to also write per-scheme buffer,
//! budget and slot traces.

use matchrdma::baselines::SchemeId;
use matchrdma::runner::run_detailed;
use matchrdma::scenarios;

fn main() {
    let trace_dir = std::env::args().nth(1);
    let mut dcqcn_peak = None;
    for s in SchemeId::ALL {
        let mut c = scenarios::congestion(s);
        if let Some(d) = &trace_dir {
            c.trace.enabled = true;
            c.trace.dir = Some(d.into());
        }
        let (r, o) = run_detailed(&c).unwrap();
        let base = *dcqcn_peak.get_or_insert(r.peak_buf_B);
        println!(
            "{:<12} peak {:>10} B ({:>5.1}% of DCQCN-like)  mean {:>10.0} B  drops {:>6}  budget updates {}",
            s.as_str(),
            r.peak_buf_B,
            100.0 * r.peak_buf_B as f64 / base as f64,
            r.mean_buf_B,
            r.drops,
            o.budget_history.len().saturating_sub(1)
        );
    }
}
