//! Inter-DC iterations sharing the receiving DC with intra-DC background
//! traffic: pause time and flow completion time per scheme.
//!
//! `mixed_traffic [msg_size_bytes]`, default 1 MiB.

use matchrdma::baselines::SchemeId;
use matchrdma::metrics::fct_by_class;
use matchrdma::runner::run_detailed;
use matchrdma::scenarios;
use matchrdma::transport::FlowClass;

fn main() {
    let size = std::env::args().nth(1).map_or(1 << 20, |s| s.parse().expect("size in bytes"));
    println!("{:<12} {:>10} {:>8} {:>14} {:>14} {:>14}", "scheme", "pause", "PFC", "inter mean", "inter p99", "intra mean");
    for s in SchemeId::ALL {
        let (r, o) = run_detailed(&scenarios::mixed(s, size)).unwrap();
        let intra = fct_by_class(&o, FlowClass::IntraDc).map_or("-".into(), |f| f.mean.to_string());
        let ns = |v: Option<u64>| v.map_or("-".into(), |x| matchrdma::engine::SimTime::from_nanos(x).to_string());
        println!(
            "{:<12} {:>10.5} {:>8} {:>14} {:>14} {:>14}",
            s.as_str(),
            r.pause_ratio,
            o.pfc_pauses,
            ns(r.fct_mean_ns),
            ns(r.fct_p99_ns),
            intra
        );
    }
}
