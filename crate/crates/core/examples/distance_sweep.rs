//! Goodput versus distance for all four schemes, plus the MatchRDMA vs
//! DCQCN-like comparison.
//!
//! `distance_sweep [msg_size] [concurrency] [out.csv]`, e.g.
//! `distance_sweep 8MB 64 sweep.csv`. Defaults: 8MB, 16.

use matchrdma::baselines::SchemeId;
use matchrdma::metrics::{summarize_comparison, write_csv};
use matchrdma::runner::{run_sweep, SweepGrid};
use matchrdma::scenarios;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let size = args.first().map_or("8MB", String::as_str);
    let conc = args.get(1).map_or("16", String::as_str);
    let grid = SweepGrid::parse(&format!("distance=default;size={size};concurrency={conc};scheme=all")).unwrap();
    let mut base = scenarios::distance_point(SchemeId::MatchRdma, 1.0, 0, 1);
    base.scenario_id = "dist".into();

    let rows = run_sweep(&base, &grid);
    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "km", "DCQCN", "PSEUDO_ACK", "THEMIS", "MATCH_RDMA");
    for chunk in rows.chunks(4) {
        let g: Vec<String> = chunk.iter().map(|r| format!("{:.2}G", r.goodput_active_bps / 1e9)).collect();
        println!("{:>8} {:>12} {:>12} {:>12} {:>12}", chunk[0].distance_km, g[0], g[1], g[2], g[3]);
    }
    let c = summarize_comparison(&rows);
    if let Some(x) = c.max_goodput_ratio {
        println!("MatchRDMA / DCQCN-like goodput: up to {x:.2}x");
    }
    if let Some(path) = args.get(2) {
        write_csv(std::fs::File::create(path).unwrap(), &rows).unwrap();
        println!("wrote {path}");
    }
}
