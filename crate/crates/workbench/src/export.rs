//! CSV tables for reports.

use std::io::Write;

use serde::Serialize;
use splatedit_core::metrics::MetricsReport;
use splatedit_core::optimizer::RunReport;

#[derive(Serialize)]
struct IterationRow {
    t: u32,
    l_edit: f64,
    l_kl: f64,
    l_total: f64,
    lambda_3d: f64,
    bias: f64,
    mean_gate: Option<f64>,
}

pub fn write_iterations<W: Write>(report: &RunReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for i in &report.iterations {
        w.serialize(IterationRow {
            t: i.t,
            l_edit: i.l_edit,
            l_kl: i.l_kl,
            l_total: i.l_total,
            lambda_3d: i.lambda_3d,
            bias: i.bias,
            mean_gate: i.mean_gate,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Per-view rows followed by a `mean` row. CDC is only filled in on the
/// summary row.
pub fn write_metrics<W: Write>(report: &MetricsReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["view_id", "clip_similarity", "ctids", "cdc"])?;
    for v in &report.per_view {
        w.write_record([v.view_id.clone(), v.clip_similarity.to_string(), v.ctids.to_string(), String::new()])?;
    }
    w.write_record([
        "mean".to_string(),
        report.clip_similarity.to_string(),
        report.ctids.to_string(),
        report.cdc.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use splatedit_core::metrics::ViewMetrics;

    #[test]
    fn metrics_table_shape() {
        let report = MetricsReport {
            clip_similarity: 0.25,
            ctids: 0.5,
            cdc: 1.0,
            per_view: vec![
                ViewMetrics { view_id: "v00".into(), clip_similarity: 0.25, ctids: 0.5 },
                ViewMetrics { view_id: "v01".into(), clip_similarity: 0.25, ctids: 0.5 },
            ],
            cdc_pairs: vec![1.0],
        };
        let mut buf = Vec::new();
        write_metrics(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "view_id,clip_similarity,ctids,cdc");
        assert_eq!(lines[1], "v00,0.25,0.5,");
        assert_eq!(lines[3], "mean,0.25,0.5,1");
    }
}
