//! CSV tables and JSON summaries written by the command-line driver.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Result, SpdeError};
use crate::harness::{
    EquilibrationReport, Metadata, MomentReport, RateReport, SmoothingReport, SpectrumCheck, TamingCheck,
};

/// Fixed-column table; floats carry 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(SpdeError::InvalidArgument(format!(
                "row has {} columns, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| SpdeError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()?)?;
        Ok(())
    }
}

macro_rules! row {
    ($($e:expr),* $(,)?) => { vec![$($e.to_string()),*] };
}

pub fn rate_table(report: &RateReport) -> Result<CsvTable> {
    let mut t = CsvTable::new(["resolution_m", "resolution_h", "error", "stderr", "samples"]);
    for r in &report.rows {
        t.push(row![r.m, fmt_f64(r.h), fmt_f64(r.error), fmt_f64(r.stderr), r.samples])?;
    }
    Ok(t)
}

pub fn equilibration_table(report: &EquilibrationReport) -> Result<CsvTable> {
    let mut header = vec!["t".to_string()];
    header.extend(report.series.iter().map(|s| format!("mean[{}]", s.label)));
    header.extend(report.series.iter().map(|s| format!("stderr[{}]", s.label)));
    let mut t = CsvTable::new(header);
    for (k, &time) in report.times.iter().enumerate() {
        let mut r = vec![fmt_f64(time)];
        r.extend(report.series.iter().map(|s| fmt_f64(s.mean[k])));
        r.extend(report.series.iter().map(|s| fmt_f64(s.stderr[k])));
        t.push(r)?;
    }
    Ok(t)
}

pub fn moment_table(report: &MomentReport) -> Result<CsvTable> {
    let mut t = CsvTable::new([
        "resolution_m",
        "resolution_h",
        "t",
        "l2_sq",
        "l4_pow4",
        "seminorm_sq",
        "stderr_l2_sq",
        "stderr_l4_pow4",
        "stderr_seminorm_sq",
    ]);
    for run in &report.runs {
        let h = 1.0 / (1u64 << run.resolution.level) as f64;
        let series = [&run.l2_sq, &run.l4_pow4, &run.seminorm_sq];
        for (k, &time) in run.times.iter().enumerate() {
            let mut r = row![run.resolution.m, fmt_f64(h), fmt_f64(time)];
            r.extend(series.iter().map(|s| fmt_f64(s.mean[k])));
            r.extend(series.iter().map(|s| fmt_f64(s.stderr[k])));
            t.push(r)?;
        }
    }
    Ok(t)
}

pub fn smoothing_table(report: &SmoothingReport) -> Result<CsvTable> {
    let mut t = CsvTable::new(["resolution_m", "resolution_h", "tau", "t", "p", "error"]);
    for r in &report.rows {
        t.push(row![r.m, fmt_f64(r.h), fmt_f64(r.tau), fmt_f64(r.t), fmt_f64(r.p), fmt_f64(r.error)])?;
    }
    Ok(t)
}

pub fn taming_table(check: &TamingCheck) -> Result<CsvTable> {
    let mut t = CsvTable::new([
        "tau",
        "h",
        "sign_violations",
        "domination_margin",
        "approximation_margin",
        "growth_constant",
        "one_sided_c1",
        "monotone_tau_violations",
        "monotone_h_violations",
    ]);
    for r in &check.rows {
        let p = &r.report;
        t.push(row![
            fmt_f64(p.tau),
            fmt_f64(p.h),
            p.sign_violations,
            fmt_f64(p.domination_margin),
            fmt_f64(p.approximation_margin),
            fmt_f64(p.growth_constant),
            fmt_f64(p.one_sided_c1),
            r.monotone_tau_violations,
            r.monotone_h_violations,
        ])?;
    }
    Ok(t)
}

pub fn spectrum_table(check: &SpectrumCheck, length: f64) -> Result<CsvTable> {
    let mut t = CsvTable::new(["level", "h", "dim", "lower_ratio", "upper_ratio", "minmax_ratio", "lambda_1"]);
    for r in &check.rows {
        let h = length / (1u64 << r.level) as f64;
        t.push(row![
            r.level,
            fmt_f64(h),
            r.dim,
            fmt_f64(r.lower_ratio),
            fmt_f64(r.upper_ratio),
            fmt_f64(r.minmax_ratio),
            fmt_f64(r.lambda_1)
        ])?;
    }
    Ok(t)
}

/// Top-level summary document. Wall time and worker count are left out so
/// that reruns are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub study: String,
    pub fitted_order: Option<f64>,
    pub stderr: Option<f64>,
    pub window: Option<(f64, Option<f64>)>,
    pub pass: Option<bool>,
    pub flags: Vec<String>,
    pub provenance: Value,
    pub details: Value,
}

fn provenance(meta: Option<&Metadata>) -> Value {
    match meta {
        Some(m) => serde_json::to_value(m).unwrap_or(Value::Null),
        None => json!({ "version": env!("CARGO_PKG_VERSION") }),
    }
}

pub fn rate_summary(report: &RateReport) -> Summary {
    Summary {
        study: match report.kind {
            crate::harness::StudyKind::StrongRate => "strong-rate".into(),
            crate::harness::StudyKind::WeakRate => "weak-rate".into(),
        },
        fitted_order: report.fit.map(|f| f.slope),
        stderr: report.fit.map(|f| f.stderr),
        window: Some(report.window),
        pass: Some(report.pass),
        flags: report.flags.clone(),
        provenance: provenance(Some(&report.metadata)),
        details: json!({
            "fit_variable": report.fit_variable,
            "mean_square_order": report.mean_square_fit.map(|f| f.slope),
        }),
    }
}

pub fn equilibration_summary(report: &EquilibrationReport) -> Summary {
    Summary {
        study: "equilibrate".into(),
        fitted_order: None,
        stderr: None,
        window: None,
        pass: report.agreement,
        flags: report.flags.clone(),
        provenance: provenance(Some(&report.metadata)),
        details: json!({
            "final_window": report.window,
            "max_pairwise_z": report.max_pairwise_z,
            "window_means": report.series.iter().map(|s| json!({
                "initial": s.label, "mean": s.window_mean, "stderr": s.window_stderr
            })).collect::<Vec<_>>(),
        }),
    }
}

pub fn moment_summary(report: &MomentReport) -> Summary {
    Summary {
        study: "longtime".into(),
        fitted_order: None,
        stderr: None,
        window: None,
        pass: Some(report.pass),
        flags: Vec::new(),
        provenance: provenance(Some(&report.metadata)),
        details: json!({
            "horizon": report.horizon,
            "gamma": report.gamma,
            "runs": report.runs.iter().map(|r| json!({
                "resolution": [r.resolution.m, r.resolution.level],
                "tau": r.tau,
                "bounded": r.bounded,
                "trends": {"l2_sq": r.trends[0], "l4_pow4": r.trends[1], "seminorm_sq": r.trends[2]},
            })).collect::<Vec<_>>(),
        }),
    }
}

pub fn smoothing_summary(report: &SmoothingReport) -> Summary {
    Summary {
        study: "smoothing".into(),
        fitted_order: report.fit.map(|f| f.slope),
        stderr: report.fit.map(|f| f.stderr),
        window: Some(report.window),
        pass: Some(report.pass),
        flags: Vec::new(),
        provenance: provenance(None),
        details: json!({
            "fit_variable": report.fit_variable,
            "decay": report.decay,
            "data_modes": report.data_modes,
            "data_seed": report.data_seed,
        }),
    }
}

pub fn taming_summary(check: &TamingCheck) -> Summary {
    Summary {
        study: "taming-check".into(),
        fitted_order: None,
        stderr: None,
        window: None,
        pass: Some(check.pass),
        flags: Vec::new(),
        provenance: provenance(None),
        details: json!({ "grid_points": check.grid_points }),
    }
}

pub fn spectrum_summary(check: &SpectrumCheck) -> Summary {
    Summary {
        study: "spectrum-check".into(),
        fitted_order: None,
        stderr: None,
        window: None,
        pass: Some(check.pass),
        flags: Vec::new(),
        provenance: provenance(None),
        details: json!({ "slack": check.slack }),
    }
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{RateRow, StudyKind};
    use crate::noise::SAMPLER_ID;

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn column_count_is_enforced() {
        let mut t = CsvTable::new(["a", "b"]);
        assert!(t.push(row![1, 2]).is_ok());
        assert!(t.push(row![1]).is_err());
        assert_eq!(t.to_string().unwrap(), "a,b\n1,2\n");
    }

    #[test]
    fn flat_synthetic_summary() {
        let rows = (4..8)
            .map(|m| RateRow { m, level: 6, tau: 2f64.powi(-(m as i32)), h: 1.0 / 64.0, error: 0.02, stderr: 1e-4, samples: 8 })
            .collect();
        let meta = Metadata {
            seed: 3,
            sampler: SAMPLER_ID.into(),
            k: 63,
            samples: 8,
            s: 0.0,
            gamma: 0.5,
            crn: false,
            version: "x".into(),
            wall_time_secs: 12.0,
        };
        let report = RateReport::from_rows(StudyKind::WeakRate, rows, (0.7, Some(1.3)), meta).unwrap();
        let v = serde_json::to_value(rate_summary(&report)).unwrap();
        assert!(v["fitted_order"].as_f64().unwrap().abs() < 1e-12);
        assert_eq!(v["pass"], Value::Bool(false));
        assert_eq!(v["provenance"]["seed"], 3);
        assert!(v["provenance"].get("wall_time_secs").is_none());
    }
}
