//! Scenario execution: single runs with optional trace files, and parameter
//! sweeps whose points run in parallel but are reported in grid order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::baselines::SchemeId;
use crate::config::ScenarioConfig;
use crate::error::{Result, SimError};
use crate::metrics::MetricsRecord;
use crate::sim::{simulate, RunOutcome};

/// Runs one scenario. Failures become a record with the error code set.
pub fn run_scenario(cfg: &ScenarioConfig) -> MetricsRecord {
    match run_detailed(cfg) {
        Ok((rec, _)) => rec,
        Err(e) => MetricsRecord::failed(cfg, &e),
    }
}

/// Runs one scenario and keeps the raw outcome. Traces are written when
/// `cfg.trace.enabled` is set.
pub fn run_detailed(cfg: &ScenarioConfig) -> Result<(MetricsRecord, RunOutcome)> {
    let outcome = simulate(cfg)?;
    let rec = MetricsRecord::from_outcome(cfg, &outcome);
    if cfg.trace.enabled {
        let dir = cfg.trace.dir.clone().unwrap_or_else(|| PathBuf::from("."));
        write_traces(&dir, &cfg.scenario_id, &outcome)?;
    }
    Ok((rec, outcome))
}

fn create(dir: &Path, name: String) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `<id>.buffer.csv`, `<id>.budget.csv` and `<id>.slots.csv`.
pub fn write_traces(dir: &Path, id: &str, o: &RunOutcome) -> Result<()> {
    let mut w = create(dir, format!("{id}.buffer.csv"))?;
    writeln!(w, "time_ns,occupancy_B")?;
    for (t, b) in &o.buffer_trace {
        writeln!(w, "{},{}", t.as_nanos(), b)?;
    }
    w.flush()?;

    let mut w = create(dir, format!("{id}.budget.csv"))?;
    writeln!(w, "time_ns,epoch,rate_bps")?;
    for (t, e, r) in &o.budget_history {
        writeln!(w, "{},{},{}", t.as_nanos(), e, r)?;
    }
    w.flush()?;

    let mut w = create(dir, format!("{id}.slots.csv"))?;
    writeln!(w, "index,start_ns,end_ns,delivered_B,spare_B,cnp_count,ack_samples,ack_mean_ns,level,peak_B")?;
    for (k, s) in o.slot_observations.iter().enumerate() {
        let n = s.ack_return_samples.len();
        let mean = if n == 0 {
            String::new()
        } else {
            (s.ack_return_samples.iter().map(|t| t.as_nanos() as u128).sum::<u128>() / n as u128).to_string()
        };
        let peak = o.slot_peaks.get(k).map_or(0, |p| p.1);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            s.index,
            s.start.as_nanos(),
            s.end.as_nanos(),
            s.delivered_bytes,
            s.spare_bytes,
            s.cnp_count,
            n,
            mean,
            s.level.as_str(),
            peak
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Sweep axes. An axis left as `None` takes the base configuration's value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepGrid {
    pub distances_km: Option<Vec<f64>>,
    pub msg_sizes: Option<Vec<u64>>,
    pub concurrency: Option<Vec<u32>>,
    pub schemes: Option<Vec<SchemeId>>,
    pub seeds: Option<Vec<u64>>,
}

pub const DEFAULT_DISTANCES_KM: [f64; 6] = [1.0, 10.0, 50.0, 100.0, 500.0, 1000.0];

fn parse_size(s: &str) -> Result<u64> {
    let t = s.trim().to_ascii_uppercase();
    let (num, mult) = if let Some(n) = t.strip_suffix("KB").or_else(|| t.strip_suffix('K')) {
        (n, 1u64 << 10)
    } else if let Some(n) = t.strip_suffix("MB").or_else(|| t.strip_suffix('M')) {
        (n, 1 << 20)
    } else if let Some(n) = t.strip_suffix('B') {
        (n, 1)
    } else {
        (t.as_str(), 1)
    };
    num.trim()
        .parse::<u64>()
        .map(|v| v * mult)
        .map_err(|_| SimError::config(format!("bad size '{s}'")))
}

fn parse_list<T>(v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let out: Vec<T> = v.split(',').filter(|x| !x.trim().is_empty()).map(|x| f(x.trim())).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(SimError::config("empty grid axis"));
    }
    Ok(out)
}

impl SweepGrid {
    /// Parses `axis=v1,v2;axis=...` with axes `distance` (km, or `default`),
    /// `size` (bytes, `K`/`KB`/`M`/`MB` suffixes), `concurrency`, `scheme`
    /// (names or `all`) and `seed`.
    pub fn parse(spec: &str) -> Result<SweepGrid> {
        let mut g = SweepGrid::default();
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| SimError::config(format!("grid axis '{part}' needs name=values")))?;
            match k.trim().to_ascii_lowercase().as_str() {
                "distance" | "distance_km" | "km" => {
                    g.distances_km = Some(if v.trim() == "default" {
                        DEFAULT_DISTANCES_KM.to_vec()
                    } else {
                        parse_list(v, |x| x.parse::<f64>().map_err(|_| SimError::config(format!("bad distance '{x}'"))))?
                    })
                }
                "size" | "msg_size" => g.msg_sizes = Some(parse_list(v, parse_size)?),
                "concurrency" | "conc" => {
                    g.concurrency = Some(parse_list(v, |x| x.parse::<u32>().map_err(|_| SimError::config(format!("bad concurrency '{x}'"))))?)
                }
                "scheme" | "schemes" => {
                    g.schemes = Some(if v.trim().eq_ignore_ascii_case("all") {
                        SchemeId::ALL.to_vec()
                    } else {
                        parse_list(v, |x| x.parse::<SchemeId>())?
                    })
                }
                "seed" | "seeds" => g.seeds = Some(parse_list(v, |x| x.parse::<u64>().map_err(|_| SimError::config(format!("bad seed '{x}'"))))?),
                other => return Err(SimError::config(format!("unknown grid axis '{other}'"))),
            }
        }
        Ok(g)
    }

    /// Consecutive seeds starting at the base seed, one row per seed.
    pub fn with_seed_count(mut self, base_seed: u64, n: u64) -> Self {
        self.seeds = Some((0..n.max(1)).map(|k| base_seed + k).collect());
        self
    }

    /// Grid points in deterministic order: distance, size, concurrency,
    /// scheme, seed (last varies fastest).
    pub fn points(&self, base: &ScenarioConfig) -> Vec<ScenarioConfig> {
        let ds = self.distances_km.clone().unwrap_or_else(|| vec![base.distance_km]);
        let ms = self.msg_sizes.clone().unwrap_or_else(|| vec![base.workload.msg_size_bytes]);
        let cs = self.concurrency.clone().unwrap_or_else(|| vec![base.workload.concurrency]);
        let ss = self.schemes.clone().unwrap_or_else(|| vec![base.scheme]);
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![base.seed]);
        let mut out = Vec::with_capacity(ds.len() * ms.len() * cs.len() * ss.len() * seeds.len());
        for &d in &ds {
            for &m in &ms {
                for &c in &cs {
                    for &s in &ss {
                        for &seed in &seeds {
                            let mut cfg = base.clone();
                            cfg.distance_km = d;
                            cfg.workload.msg_size_bytes = m;
                            cfg.workload.concurrency = c;
                            cfg.scheme = s;
                            cfg.seed = seed;
                            cfg.scenario_id = format!("{}-{}-{}km-{}B-c{}-s{}", base.scenario_id, s.as_str(), d, m, c, seed);
                            out.push(cfg);
                        }
                    }
                }
            }
        }
        out
    }
}

fn run_point(cfg: &ScenarioConfig) -> (MetricsRecord, Option<SimError>) {
    match cfg.validate().and_then(|()| run_detailed(cfg)) {
        Ok((rec, _)) => (rec, None),
        Err(e) => (MetricsRecord::failed(cfg, &e), Some(e)),
    }
}

/// One record per grid point, in grid order, each with the full error of a
/// failed point. A failure does not stop the sweep.
pub fn run_sweep_reporting(base: &ScenarioConfig, grid: &SweepGrid) -> Vec<(MetricsRecord, Option<SimError>)> {
    grid.points(base).par_iter().map(run_point).collect()
}

/// One record per grid point, in grid order. A point that fails validation
/// or at run time is reported with its error code.
pub fn run_sweep(base: &ScenarioConfig, grid: &SweepGrid) -> Vec<MetricsRecord> {
    run_sweep_reporting(base, grid).into_iter().map(|(r, _)| r).collect()
}
