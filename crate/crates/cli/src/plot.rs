//! Plot-ready series derived from a report bundle.
//!
//! Every series file is tab-separated with the header `x\ty\tseries`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{CliError, MetricsDocument, Report, METRICS_FILE, REPORT_FILE};

/// Every file `emit_plot_data` may write, with its axes.
pub const PLOT_FILES: &[(&str, &str)] = &[
    ("plot_inverse_trace.tsv", "x = monitors, y = inverse trace per shot, series = formulation"),
    ("plot_max_load.tsv", "x = monitors, y = maximum monitor load, series = formulation"),
    ("plot_loads.tsv", "x = monitor label, y = load, series = plan file stem"),
    ("plot_link_qcrb.tsv", "x = link index, y = per-shot bound, series = formulation and monitors"),
    ("plot_qcrb.tsv", "x = shots per probe, y = bound, series = link"),
    ("plot_mse.tsv", "x = shots per probe, y = empirical MSE, series = link"),
];

struct Series(String);

impl Series {
    fn new() -> Self {
        Series(String::from("x\ty\tseries\n"))
    }

    fn push(&mut self, x: impl std::fmt::Display, y: impl std::fmt::Display, series: &str) {
        let _ = writeln!(self.0, "{x}\t{y}\t{series}");
    }
}

/// Write the plot series for the bundle in `dir`; returns the written file names.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<String>, CliError> {
    let report_path = dir.join(REPORT_FILE);
    if !report_path.is_file() {
        return Err(CliError::MissingReport(crate::file_name(dir)));
    }
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))
    };
    let report: Report = serde_json::from_str(&read(REPORT_FILE)?)
        .map_err(|e| CliError::Config(format!("{REPORT_FILE}: {e}")))?;
    if !report.files.iter().any(|f| f == METRICS_FILE) {
        return Err(CliError::Config(format!("{REPORT_FILE} does not list {METRICS_FILE}")));
    }
    let metrics: MetricsDocument = serde_json::from_str(&read(METRICS_FILE)?)
        .map_err(|e| CliError::Config(format!("{METRICS_FILE}: {e}")))?;

    let mut outputs: Vec<(&str, Series)> = Vec::new();
    if !metrics.plans.is_empty() {
        let mut inverse = Series::new();
        let mut max_load = Series::new();
        let mut loads = Series::new();
        let mut link_qcrb = Series::new();
        for p in &metrics.plans {
            let f = p.formulation.as_str();
            inverse.push(p.monitors, p.inverse_trace, f);
            max_load.push(p.monitors, p.max_load, f);
            let stem = p.file.trim_end_matches(".json");
            for (j, load) in p.loads.iter().enumerate() {
                loads.push(j, load, stem);
            }
            let label = format!("{f}_m{}", p.monitors);
            for b in &p.qcrb {
                link_qcrb.push(b.link.trim_start_matches('e'), b.qcrb, &label);
            }
        }
        outputs.push(("plot_inverse_trace.tsv", inverse));
        outputs.push(("plot_max_load.tsv", max_load));
        outputs.push(("plot_loads.tsv", loads));
        outputs.push(("plot_link_qcrb.tsv", link_qcrb));
    }
    if let Some(rows) = &metrics.study {
        let mut qcrb = Series::new();
        let mut mse = Series::new();
        for r in rows {
            let label = r.link.to_string();
            qcrb.push(r.shots, r.qcrb, &label);
            mse.push(r.shots, r.mse, &label);
        }
        outputs.push(("plot_qcrb.tsv", qcrb));
        outputs.push(("plot_mse.tsv", mse));
    }

    let mut written = Vec::new();
    for (name, series) in outputs {
        let path = dir.join(name);
        fs::write(&path, series.0).map_err(|e| CliError::io(&path, e))?;
        written.push(name.to_string());
    }
    Ok(written)
}
