//! Per-run metrics, the CSV record format and cross-scheme comparison.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::baselines::SchemeId;
use crate::config::ScenarioConfig;
use crate::engine::SimTime;
use crate::error::{Result, SimError};
use crate::sim::{MessageRecord, RunOutcome};
use crate::transport::FlowClass;

pub const CSV_HEADER: [&str; 15] = [
    "scenario_id",
    "scheme",
    "distance_km",
    "msg_size_B",
    "concurrency",
    "goodput_bps",
    "goodput_active_bps",
    "peak_buf_B",
    "mean_buf_B",
    "pause_ratio",
    "fct_mean_ns",
    "fct_p99_ns",
    "drops",
    "control_msgs",
    "error",
];

/// One CSV row. FCT columns cover the inter-DC messages; a run that failed
/// carries its error code and zeroed measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct MetricsRecord {
    pub scenario_id: String,
    pub scheme: SchemeId,
    pub distance_km: f64,
    pub msg_size_B: u64,
    pub concurrency: u32,
    pub goodput_bps: f64,
    pub goodput_active_bps: f64,
    pub peak_buf_B: u64,
    pub mean_buf_B: f64,
    pub pause_ratio: f64,
    pub fct_mean_ns: Option<u64>,
    pub fct_p99_ns: Option<u64>,
    pub drops: u64,
    pub control_msgs: u64,
    pub error: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FctStats {
    pub count: usize,
    pub mean: SimTime,
    /// Nearest-rank 99th percentile.
    pub p99: SimTime,
    pub max: SimTime,
}

impl FctStats {
    pub fn from_samples(samples: &[SimTime]) -> Option<FctStats> {
        if samples.is_empty() {
            return None;
        }
        let mut v = samples.to_vec();
        v.sort_unstable();
        let n = v.len();
        let sum: u128 = v.iter().map(|t| t.as_nanos() as u128).sum();
        let rank = (n * 99).div_ceil(100).max(1);
        Some(FctStats {
            count: n,
            mean: SimTime::from_nanos((sum / n as u128) as u64),
            p99: v[rank - 1],
            max: v[n - 1],
        })
    }

    /// Completed messages matching `keep`.
    pub fn of(messages: &[MessageRecord], keep: impl Fn(&MessageRecord) -> bool) -> Option<FctStats> {
        let samples: Vec<SimTime> = messages.iter().filter(|m| keep(m)).filter_map(|m| m.fct()).collect();
        Self::from_samples(&samples)
    }
}

pub fn fct_by_class(outcome: &RunOutcome, class: FlowClass) -> Option<FctStats> {
    FctStats::of(&outcome.messages, |m| m.class == class)
}

fn bits_per_second(bytes: u64, over: SimTime) -> f64 {
    if over == SimTime::ZERO {
        0.0
    } else {
        bytes as f64 * 8.0 / over.as_secs_f64()
    }
}

impl MetricsRecord {
    pub fn from_outcome(cfg: &ScenarioConfig, o: &RunOutcome) -> Self {
        let fct = fct_by_class(o, FlowClass::InterDc);
        MetricsRecord {
            goodput_bps: bits_per_second(o.inter_delivered_bytes, o.end),
            goodput_active_bps: bits_per_second(o.inter_delivered_bytes, o.active_time),
            peak_buf_B: o.peak_buf,
            mean_buf_B: o.mean_buf,
            pause_ratio: o.pause_ratio,
            fct_mean_ns: fct.map(|f| f.mean.as_nanos()),
            fct_p99_ns: fct.map(|f| f.p99.as_nanos()),
            drops: o.drops,
            control_msgs: o.control_msgs,
            ..Self::empty(cfg)
        }
    }

    pub fn failed(cfg: &ScenarioConfig, err: &SimError) -> Self {
        MetricsRecord {
            error: err.code().to_string(),
            ..Self::empty(cfg)
        }
    }

    fn empty(cfg: &ScenarioConfig) -> Self {
        MetricsRecord {
            scenario_id: cfg.scenario_id.clone(),
            scheme: cfg.scheme,
            distance_km: cfg.distance_km,
            msg_size_B: cfg.workload.msg_size_bytes,
            concurrency: cfg.workload.concurrency,
            goodput_bps: 0.0,
            goodput_active_bps: 0.0,
            peak_buf_B: 0,
            mean_buf_B: 0.0,
            pause_ratio: 0.0,
            fct_mean_ns: None,
            fct_p99_ns: None,
            drops: 0,
            control_msgs: 0,
            error: String::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_empty()
    }
}

pub fn write_csv<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[MetricsRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(SimError::config(format!("unexpected CSV header: {}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(SimError::from)).collect()
}

/// MatchRDMA against DCQCN-like at one grid point. Reductions are percent
/// of the DCQCN-like value; `None` where that value is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ComparisonRow {
    pub point: String,
    pub distance_km: f64,
    pub msg_size_B: u64,
    pub concurrency: u32,
    pub goodput_ratio: Option<f64>,
    pub buffer_reduction_pct: Option<f64>,
    pub pause_reduction_pct: Option<f64>,
    pub fct_reduction_pct: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub max_goodput_ratio: Option<f64>,
    pub max_buffer_reduction_pct: Option<f64>,
    pub max_pause_reduction_pct: Option<f64>,
    pub max_fct_reduction_pct: Option<f64>,
    pub warnings: Vec<String>,
}

/// Grid-point key: the scenario id with its scheme segment removed, so the
/// four schemes of one point share a key.
pub fn point_key(r: &MetricsRecord) -> String {
    let tag = format!("-{}", r.scheme.as_str());
    match r.scenario_id.find(&tag) {
        Some(i) => format!("{}{}", &r.scenario_id[..i], &r.scenario_id[i + tag.len()..]),
        None => r.scenario_id.clone(),
    }
}

pub fn reduction_pct(baseline: f64, ours: f64) -> Option<f64> {
    (baseline > 0.0).then(|| (1.0 - ours / baseline) * 100.0)
}

fn ratio(ours: f64, baseline: f64) -> Option<f64> {
    (baseline > 0.0).then(|| ours / baseline)
}

fn max_of(it: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    it.flatten().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
}

pub fn summarize_comparison(records: &[MetricsRecord]) -> Comparison {
    let mut points: BTreeMap<String, BTreeMap<SchemeId, &MetricsRecord>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in records {
        let k = point_key(r);
        if !points.contains_key(&k) {
            order.push(k.clone());
        }
        points.entry(k).or_default().insert(r.scheme, r);
    }
    let mut out = Comparison::default();
    for k in order {
        let by = &points[&k];
        let missing: Vec<&str> = SchemeId::ALL.iter().filter(|s| !by.contains_key(s)).map(|s| s.as_str()).collect();
        if !missing.is_empty() {
            out.warnings.push(format!("{k}: skipped, missing {}", missing.join(", ")));
            continue;
        }
        let (d, m) = (by[&SchemeId::DcqcnLike], by[&SchemeId::MatchRdma]);
        if !d.is_ok() || !m.is_ok() {
            out.warnings.push(format!("{k}: skipped, a compared run failed"));
            continue;
        }
        let fct = match (d.fct_mean_ns, m.fct_mean_ns) {
            (Some(a), Some(b)) => reduction_pct(a as f64, b as f64),
            _ => None,
        };
        out.rows.push(ComparisonRow {
            point: k,
            distance_km: m.distance_km,
            msg_size_B: m.msg_size_B,
            concurrency: m.concurrency,
            goodput_ratio: ratio(m.goodput_active_bps, d.goodput_active_bps),
            buffer_reduction_pct: reduction_pct(d.peak_buf_B as f64, m.peak_buf_B as f64),
            pause_reduction_pct: reduction_pct(d.pause_ratio, m.pause_ratio),
            fct_reduction_pct: fct,
        });
    }
    out.max_goodput_ratio = max_of(out.rows.iter().map(|r| r.goodput_ratio));
    out.max_buffer_reduction_pct = max_of(out.rows.iter().map(|r| r.buffer_reduction_pct));
    out.max_pause_reduction_pct = max_of(out.rows.iter().map(|r| r.pause_reduction_pct));
    out.max_fct_reduction_pct = max_of(out.rows.iter().map(|r| r.fct_reduction_pct));
    out
}

pub fn write_comparison_csv<W: Write>(out: W, c: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &c.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
