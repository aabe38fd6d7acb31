//! Evaluation report structure and its serialized forms (JSON, CSV tables,
//! SVG accuracy curve).
//!
//! Serialization is fully deterministic: struct field order fixes the JSON
//! layout, and floats render with serde_json's shortest round-trip encoding,
//! so identical runs produce byte-identical files.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dsp::FeatureKind;
use crate::ensemble::{CombinationRule, TraceEntry};
use crate::error::{Error, Result};
use crate::gaussian::PriorMode;
use crate::pipeline::FeatureSource;

/// How the reported F1 score averages over classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Averaging {
    /// Unweighted mean of per-class F1, skipping classes absent from both
    /// predictions and labels.
    #[default]
    Macro,
}

/// Echo of the configuration a report was produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub k_folds: usize,
    pub seed: u64,
    pub shrinkage: f64,
    pub rule: CombinationRule,
    pub priors: PriorMode,
    #[serde(default)]
    pub f1_averaging: F1Averaging,
    pub window_s: f64,
    pub use_erp: bool,
    pub use_hgp: bool,
    pub feature_source: FeatureSource,
    pub max_members: usize,
    pub n_trials: usize,
    pub n_channels: usize,
    pub k_classes: usize,
    pub feature_dim: usize,
}

/// One selected member, identified by channel, kind, and horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub channel_name: String,
    pub feature_kind: FeatureKind,
    pub d_minimal: usize,
}

/// Held-out metrics for one outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub selected: Vec<MemberSummary>,
}

/// One point of the cumulative-horizon accuracy curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    /// Number of leading features used.
    pub horizon: usize,
    /// End of the cumulative window, seconds after onset.
    pub time_s: f64,
    pub accuracy: f64,
    pub mean_members: f64,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub per_fold: Vec<FoldMetrics>,
    pub accuracy_mean: f64,
    /// Sample standard deviation across folds.
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    /// Members chosen when fitting on all trials.
    pub selected: Vec<MemberSummary>,
    pub selection_trace: Vec<TraceEntry>,
    pub accuracy_over_time: Vec<TimePoint>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Data(format!("report encode failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("report parse failed: {e}")))
    }
}

/// Per-fold metrics plus summary rows as CSV.
pub fn write_tables_csv<W: Write>(writer: W, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Data(format!("tables csv write failed: {e}"));
    w.write_record(["fold", "accuracy", "f1_macro", "n_members"])
        .map_err(err)?;
    for f in &report.per_fold {
        w.write_record([
            f.fold.to_string(),
            format!("{}", f.accuracy),
            format!("{}", f.f1_macro),
            f.selected.len().to_string(),
        ])
        .map_err(err)?;
    }
    w.write_record([
        "mean".to_string(),
        format!("{}", report.accuracy_mean),
        format!("{}", report.f1_mean),
        String::new(),
    ])
    .map_err(err)?;
    w.write_record([
        "std".to_string(),
        format!("{}", report.accuracy_std),
        format!("{}", report.f1_std),
        String::new(),
    ])
    .map_err(err)?;
    w.flush()
        .map_err(|e| Error::Data(format!("tables csv flush failed: {e}")))?;
    Ok(())
}

/// Selection trace as CSV: `round,channel,kind,d_minimal,cv_accuracy`.
pub fn write_trace_csv<W: Write>(writer: W, trace: &[TraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Data(format!("trace csv write failed: {e}"));
    w.write_record(["round", "channel", "kind", "d_minimal", "cv_accuracy"])
        .map_err(err)?;
    for t in trace {
        w.write_record([
            t.round.to_string(),
            t.channel_name.clone(),
            t.feature_kind.to_string(),
            t.d_minimal.to_string(),
            format!("{}", t.cv_accuracy),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::Data(format!("trace csv flush failed: {e}")))?;
    Ok(())
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 64.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;

/// Renders the accuracy-over-time curve as a standalone SVG line chart
/// (accuracy on the left axis, ensemble size on the right axis).
pub fn curve_svg(report: &EvalReport) -> String {
    let points = &report.accuracy_over_time;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\">\n"
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">Held-out accuracy by observation horizon</text>\n",
        SVG_W / 2.0
    ));

    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let t_max = points.last().map_or(1.0, |p| p.time_s);
    let members_max = points.iter().map(|p| p.mean_members).fold(1.0f64, f64::max);

    let x = |t: f64| MARGIN_L + t / t_max * plot_w;
    let y_acc = |a: f64| MARGIN_T + (1.0 - a) * plot_h;
    let y_mem = |m: f64| MARGIN_T + (1.0 - m / members_max) * plot_h;

    // axes
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" \
         stroke=\"black\"/>\n",
        MARGIN_T + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    ));
    for tick in 0..=5 {
        let a = tick as f64 / 5.0;
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{a:.1}</text>\n",
            MARGIN_L - 6.0,
            y_acc(a) + 4.0
        ));
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#cccccc\" \
             stroke-dasharray=\"3,3\"/>\n",
            MARGIN_L,
            y_acc(a),
            MARGIN_L + plot_w,
            y_acc(a)
        ));
    }
    for p in points {
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"middle\">{:.2}</text>\n",
            x(p.time_s),
            MARGIN_T + plot_h + 16.0,
            p.time_s
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">seconds after onset</text>\n",
        MARGIN_L + plot_w / 2.0,
        SVG_H - 16.0
    ));

    if !points.is_empty() {
        let acc_path: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.time_s), y_acc(p.accuracy)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n",
            acc_path.join(" ")
        ));
        let mem_path: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.time_s), y_mem(p.mean_members)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"1.5\" \
             stroke-dasharray=\"5,3\" points=\"{}\"/>\n",
            mem_path.join(" ")
        ));
        for p in points {
            svg.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>\n",
                x(p.time_s),
                y_acc(p.accuracy)
            ));
        }
    }

    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         fill=\"#1f77b4\">accuracy</text>\n",
        MARGIN_L + 8.0,
        MARGIN_T + 14.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         fill=\"#ff7f0e\" text-anchor=\"end\">feature vectors used (max {members_max:.0})</text>\n",
        MARGIN_L + plot_w - 8.0,
        MARGIN_T + 14.0
    ));
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> EvalReport {
        EvalReport {
            config: ReportConfig {
                k_folds: 5,
                seed: 7,
                shrinkage: 0.2,
                rule: CombinationRule::Likelihood,
                priors: PriorMode::Empirical,
                f1_averaging: F1Averaging::Macro,
                window_s: 1.0,
                use_erp: true,
                use_hgp: true,
                feature_source: FeatureSource::Dsp,
                max_members: 20,
                n_trials: 100,
                n_channels: 4,
                k_classes: 2,
                feature_dim: 15,
            },
            per_fold: vec![FoldMetrics {
                fold: 0,
                accuracy: 0.8,
                f1_macro: 0.79,
                selected: vec![],
            }],
            accuracy_mean: 0.8,
            accuracy_std: 0.0,
            f1_mean: 0.79,
            f1_std: 0.0,
            selected: vec![MemberSummary {
                channel_name: "c0".into(),
                feature_kind: FeatureKind::Erp,
                d_minimal: 6,
            }],
            selection_trace: vec![],
            accuracy_over_time: vec![
                TimePoint {
                    horizon: 1,
                    time_s: 0.5,
                    accuracy: 0.7,
                    mean_members: 1.0,
                },
                TimePoint {
                    horizon: 2,
                    time_s: 1.0,
                    accuracy: 0.8,
                    mean_members: 2.0,
                },
            ],
        }
    }

    #[test]
    fn json_round_trip() {
        let report = sample_report();
        let json = report.to_json().unwrap();
        let back = EvalReport::from_json(&json).unwrap();
        assert_eq!(back, report);
        // deterministic serialization
        assert_eq!(json, report.to_json().unwrap());
    }

    #[test]
    fn csv_outputs_contain_headers_and_rows() {
        let report = sample_report();
        let mut tables = Vec::new();
        write_tables_csv(&mut tables, &report).unwrap();
        let text = String::from_utf8(tables).unwrap();
        assert!(text.starts_with("fold,accuracy,f1_macro,n_members"));
        assert!(text.contains("mean,0.8"));

        let mut trace = Vec::new();
        write_trace_csv(
            &mut trace,
            &[TraceEntry {
                round: 0,
                channel_name: "c0".into(),
                feature_kind: FeatureKind::Hgp,
                d_minimal: 3,
                cv_accuracy: 0.75,
            }],
        )
        .unwrap();
        let text = String::from_utf8(trace).unwrap();
        assert!(text.contains("0,c0,hgp,3,0.75"));
    }

    #[test]
    fn svg_is_wellformed_enough() {
        let svg = curve_svg(&sample_report());
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg, curve_svg(&sample_report()));
    }
}
