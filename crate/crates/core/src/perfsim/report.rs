use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{hd_latency, HdMode, HdPipeConfig, PerfError, Schedule};

pub const REPORT_COLUMNS: [&str; 5] = ["component", "config", "cycles", "us", "throughput"];

/// One line of the latency table; `throughput` is samples per second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub component: String,
    pub config: String,
    pub cycles: u64,
    pub us: f64,
    pub throughput: f64,
}

/// NN, HD and end-to-end rows. A schedule without layers contributes no
/// NN row. The two modules are pipelined, so end-to-end throughput is the
/// slower of the two.
pub fn report(nn: Option<&Schedule>, hd: Option<&HdPipeConfig>, clock_mhz: f64) -> Result<Vec<ReportRow>, PerfError> {
    if !(clock_mhz.is_finite() && clock_mhz > 0.0) {
        return Err(PerfError::Invalid(format!("clock_mhz must be positive, got {clock_mhz}")));
    }
    let hz = clock_mhz * 1e6;
    let mut rows = Vec::new();
    if let Some(s) = nn.filter(|s| s.shape.layer_count() > 0) {
        let widths: Vec<String> = s.shape.widths.iter().map(ToString::to_string).collect();
        let order = s.orders.first().map_or("none", |o| o.name());
        rows.push(ReportRow {
            component: "nn".into(),
            config: format!("layers={};w={};h={};order={order}", widths.join("-"), s.config.w_sys, s.config.h_sys),
            cycles: s.cycles,
            us: s.cycles as f64 / clock_mhz,
            throughput: hz / s.cycles.max(1) as f64,
        });
    }
    if let Some(cfg) = hd {
        let lat = hd_latency(cfg)?;
        let mode = match cfg.mode {
            HdMode::Parallel => "parallel".to_string(),
            HdMode::Sequential { chunk_width } => format!("sequential/{chunk_width}"),
        };
        let limit = cfg.adder_limit.map_or("none".to_string(), |l| l.to_string());
        rows.push(ReportRow {
            component: "hd".into(),
            config: format!(
                "dh={};dl={};c={};fanin={};adders={limit};mode={mode}",
                cfg.dh, cfg.dl, cfg.classes, cfg.fanin
            ),
            cycles: lat.depth,
            us: lat.depth as f64 / clock_mhz,
            throughput: hz * lat.throughput,
        });
    }
    if !rows.is_empty() {
        let cycles = rows.iter().map(|r| r.cycles).sum();
        rows.push(ReportRow {
            component: "total".into(),
            config: format!("clock_mhz={clock_mhz}"),
            cycles,
            us: cycles as f64 / clock_mhz,
            throughput: rows.iter().map(|r| r.throughput).fold(f64::INFINITY, f64::min),
        });
    }
    Ok(rows)
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.component.clone(),
            r.config.clone(),
            r.cycles.to_string(),
            r.us.to_string(),
            r.throughput.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width table for terminals.
pub fn format_report(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.config.len()).max().unwrap_or(6).max(6);
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:<width$} {:>12} {:>12} {:>14}", "component", "config", "cycles", "us", "samples/s");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:<width$} {:>12} {:>12.3} {:>14.1}",
            r.component, r.config, r.cycles, r.us, r.throughput
        );
    }
    s
}
