//! CSV tables written by the evaluation commands.

use std::fmt::Write as _;

use crate::basis::BasisSet;
use crate::error::Result;
use crate::evaluation::{influence_curve, FitReport, LogLik};
use crate::model::ModelParams;

/// `quantity,dim,value` rows: likelihood components (dim `all`), then the
/// per-dimension KS statistics.
pub fn format_fit_report(report: &FitReport, events: usize) -> String {
    let mut out = String::from("quantity,dim,value\n");
    let _ = writeln!(
        out,
        "loglik_point_process,all,{}",
        report.loglik_point_process
    );
    let _ = writeln!(out, "loglik_state,all,{}", report.loglik_state);
    let _ = writeln!(out, "loglik_total,all,{}", report.loglik_total);
    let _ = writeln!(out, "per_event_loglik,all,{}", report.per_event_loglik);
    let _ = writeln!(out, "events,all,{events}");
    for (i, ks) in report.ks.iter().enumerate() {
        let _ = writeln!(out, "ks_statistic,{},{}", i + 1, ks.statistic);
        let _ = writeln!(out, "ks_p_value,{},{}", i + 1, ks.p_value);
        let _ = writeln!(out, "ks_events,{},{}", i + 1, ks.n);
    }
    out
}

/// `dim,rank,theoretical,empirical`.
pub fn format_qq(report: &FitReport) -> String {
    let mut out = String::from("dim,rank,theoretical,empirical\n");
    for (i, pts) in report.qq_points.iter().enumerate() {
        for (r, (x, y)) in pts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{x},{y}", i + 1, r + 1);
        }
    }
    out
}

/// `iteration,point_process,state,total,per_event`.
pub fn format_trace(trace: &[LogLik]) -> String {
    let mut out = String::from("iteration,point_process,state,total,per_event\n");
    for (n, ll) in trace.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            n + 1,
            ll.point_process,
            ll.state,
            ll.total,
            ll.per_event()
        );
    }
    out
}

/// `dim,source,state,lag,value` on `points` equally spaced lags in `[0, T_f]`.
pub fn format_influence(params: &ModelParams, basis: &BasisSet, points: usize) -> Result<String> {
    let tf = basis.support_end();
    let grid: Vec<f64> = (0..points.max(2))
        .map(|n| tf * n as f64 / (points.max(2) - 1) as f64)
        .collect();
    let mut out = String::from("dim,source,state,lag,value\n");
    for i in 0..params.dims() {
        for j in 0..params.dims() {
            for k in 0..params.states() {
                let curve = influence_curve(params, basis, i, j, k, &grid)?;
                for (lag, v) in grid.iter().zip(curve) {
                    let _ = writeln!(out, "{},{},{},{lag},{v}", i + 1, j + 1, k + 1);
                }
            }
        }
    }
    Ok(out)
}
