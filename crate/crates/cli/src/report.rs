//! Experiment report and plot-data export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use netid_core::error::{Error, Result};
use netid_core::io::{eigen_pairs_to_csv, singular_values_to_csv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenComparison {
    /// Which graph the pairs belong to ("state" or "input").
    pub graph: String,
    pub truth: Vec<f64>,
    pub estimated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub graph: String,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedResidual {
    pub name: String,
    pub value: f64,
}

/// Everything a run reports; serializable and reloadable losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentReport {
    pub command: String,
    pub seed: Option<u64>,
    pub timings: Vec<StageTiming>,
    #[serde(default)]
    pub singular_values: Vec<f64>,
    #[serde(default)]
    pub chosen_order: Option<usize>,
    #[serde(default)]
    pub order_low_confidence: Option<bool>,
    #[serde(default)]
    pub eigen_comparisons: Vec<EigenComparison>,
    #[serde(default)]
    pub support_metrics: Vec<SupportMetrics>,
    #[serde(default)]
    pub residuals: Vec<NamedResidual>,
    #[serde(default)]
    pub chosen_mu: Option<f64>,
    #[serde(default)]
    pub objective_trace_len: Option<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Paths (relative to the output directory) of every artifact written.
    #[serde(default)]
    pub artifacts: Vec<String>,
}

impl ExperimentReport {
    pub fn new(command: &str) -> Self {
        ExperimentReport {
            command: command.into(),
            ..Default::default()
        }
    }

    /// Every numeric field must be finite before the report is written.
    pub fn validate_finite(&self) -> Result<()> {
        let check = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "report field {name} is not finite: {v}"
                )))
            }
        };
        for t in &self.timings {
            check("timings.millis", t.millis)?;
        }
        for s in &self.singular_values {
            check("singular_values", *s)?;
        }
        for e in &self.eigen_comparisons {
            for v in e.truth.iter().chain(e.estimated.iter()) {
                check("eigen_comparisons", *v)?;
            }
        }
        for m in &self.support_metrics {
            check("support.precision", m.precision)?;
            check("support.recall", m.recall)?;
            check("support.f_score", m.f_score)?;
        }
        for r in &self.residuals {
            check(&r.name, r.value)?;
        }
        if let Some(mu) = self.chosen_mu {
            check("chosen_mu", mu)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("report json", e.to_string()))
    }
}

/// One entry of the plot-data schema sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotFileSchema {
    pub file: String,
    pub columns: Vec<String>,
    pub note: String,
}

/// Writes plot-ready CSV files next to the report and a sidecar schema
/// describing them; omitted files (empty stages) are noted in the sidecar.
pub fn export_plotdata(report: &ExperimentReport, dir: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let mut schema = Vec::new();

    if report.singular_values.is_empty() {
        schema.push(PlotFileSchema {
            file: "singular_values.csv".into(),
            columns: vec![],
            note: "omitted: no singular values in this run".into(),
        });
    } else {
        let path = dir.join("singular_values.csv");
        std::fs::write(&path, singular_values_to_csv(&report.singular_values))?;
        written.push("singular_values.csv".into());
        schema.push(PlotFileSchema {
            file: "singular_values.csv".into(),
            columns: vec!["index (1-based)".into(), "sigma (descending)".into()],
            note: "knee plot data".into(),
        });
    }

    if report.eigen_comparisons.is_empty() {
        schema.push(PlotFileSchema {
            file: "eigen_pairs_<graph>.csv".into(),
            columns: vec![],
            note: "omitted: no recovery stage in this run".into(),
        });
    }
    for cmp in &report.eigen_comparisons {
        let name = format!("eigen_pairs_{}.csv", cmp.graph);
        let path = dir.join(&name);
        std::fs::write(&path, eigen_pairs_to_csv(&cmp.truth, &cmp.estimated))?;
        written.push(name.clone());
        schema.push(PlotFileSchema {
            file: name,
            columns: vec!["true eigenvalue".into(), "estimated eigenvalue".into()],
            note: "sorted ascending, one row per eigenvalue".into(),
        });
    }

    let schema_path = dir.join("plot_schema.json");
    std::fs::write(
        &schema_path,
        serde_json::to_string_pretty(&schema).expect("schema serialization is infallible"),
    )?;
    written.push("plot_schema.json".into());
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_losslessly() {
        let mut report = ExperimentReport::new("identify");
        report.seed = Some(42);
        report.singular_values = vec![1.0 / 3.0, 2.5e-17, f64::MIN_POSITIVE];
        report.residuals.push(NamedResidual {
            name: "s1_max_abs_error".into(),
            value: 1.23456789012345e-9,
        });
        report.timings.push(StageTiming {
            stage: "identify".into(),
            millis: 12.75,
        });
        let json = report.to_json();
        let back = ExperimentReport::from_json(&json).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn non_finite_fields_are_rejected() {
        let mut report = ExperimentReport::new("identify");
        report.residuals.push(NamedResidual {
            name: "bad".into(),
            value: f64::NAN,
        });
        assert!(report.validate_finite().is_err());
    }

    #[test]
    fn plotdata_sidecar_notes_omitted_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = ExperimentReport::new("simulate");
        let written = export_plotdata(&report, dir.path()).unwrap();
        assert_eq!(written, vec!["plot_schema.json".to_string()]);
        let schema = std::fs::read_to_string(dir.path().join("plot_schema.json")).unwrap();
        assert!(schema.contains("omitted"));
    }

    #[test]
    fn plotdata_writes_sv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = ExperimentReport::new("identify");
        report.singular_values = vec![5.0, 3.0, 1.0, 0.1, 0.01];
        export_plotdata(&report, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("singular_values.csv")).unwrap();
        assert_eq!(text.lines().count(), 6); // header + 5 rows
    }
}
