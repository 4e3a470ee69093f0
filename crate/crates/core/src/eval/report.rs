//! Machine-readable evaluation reports and their JSON/CSV writers.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// One metric measurement with enough provenance to be compared safely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    /// Metric identifier, e.g. `position_rmse_mm` or `kid_x100`.
    pub metric: String,
    pub value: f64,
    /// Spread over subsampling folds where the metric defines one.
    #[serde(default)]
    pub std: Option<f64>,
    #[serde(default = "one")]
    pub folds: usize,
    pub sample_count_a: usize,
    /// 0 for single-set metrics.
    #[serde(default)]
    pub sample_count_b: usize,
    /// Content hash of the feature embedding, for feature-space metrics.
    #[serde(default)]
    pub extractor_hash: Option<String>,
    /// Identifiers of the datasets or model variants measured.
    pub datasets: Vec<String>,
}

fn one() -> usize {
    1
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() {
            return Err(Error::Numeric(format!(
                "{}: non-finite value {}",
                self.metric, self.value
            )));
        }
        if let Some(s) = self.std {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Numeric(format!("{}: bad std {s}", self.metric)));
            }
        }
        if self.folds == 0 {
            return Err(Error::Validation(format!("{}: folds must be >= 1", self.metric)));
        }
        if self.sample_count_a == 0 {
            return Err(Error::Validation(format!(
                "{}: empty sample set",
                self.metric
            )));
        }
        Ok(())
    }
}

/// Writes one experiment's reports as a pretty JSON array.
pub fn write_reports_json(reports: &[EvalReport], path: &Path) -> Result<()> {
    for r in reports {
        r.validate()?;
    }
    let json = serde_json::to_string_pretty(reports)
        .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Writes the same reports as a flat CSV table (one row per report).
/// Dataset identifiers are joined with `;` — they are controlled slugs,
/// never free text.
pub fn write_reports_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut out = String::from(
        "metric,value,std,folds,sample_count_a,sample_count_b,extractor_hash,datasets\n",
    );
    for r in reports {
        r.validate()?;
        let std = r.std.map_or(String::new(), |s| format!("{s}"));
        let hash = r.extractor_hash.clone().unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.metric,
            r.value,
            std,
            r.folds,
            r.sample_count_a,
            r.sample_count_b,
            hash,
            r.datasets.join(";")
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads back a JSON report file.
pub fn load_reports_json(path: &Path) -> Result<Vec<EvalReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let reports: Vec<EvalReport> = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("bad report file {}: {e}", path.display())))?;
    for r in &reports {
        r.validate()?;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvalReport {
        EvalReport {
            metric: "position_rmse_mm".into(),
            value: 3.25,
            std: Some(0.125),
            folds: 10,
            sample_count_a: 200,
            sample_count_b: 0,
            extractor_hash: None,
            datasets: vec!["real-test".into(), "sightgan-translated".into()],
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.json");
        let reports = vec![sample()];
        write_reports_json(&reports, &path).unwrap();
        assert_eq!(load_reports_json(&path).unwrap(), reports);
    }

    #[test]
    fn csv_contains_all_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.csv");
        write_reports_csv(&[sample()], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("metric,value"));
        let row = lines.next().unwrap();
        assert_eq!(
            row,
            "position_rmse_mm,3.25,0.125,10,200,0,,real-test;sightgan-translated"
        );
    }

    #[test]
    fn invalid_reports_are_refused() {
        let mut bad = sample();
        bad.value = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        assert!(write_reports_json(&[bad], &dir.path().join("x.json")).is_err());
        let mut zero_folds = sample();
        zero_folds.folds = 0;
        assert!(zero_folds.validate().is_err());
    }
}
