//! Comma-separated curve files for the figure analogues.

use std::fmt::Write;

use andikit::experiments::{mean_and_std_error, ErasureCurve, NoiseCurve};
use andikit::network::{ConfidenceBin, Evaluation};
use andikit::stats::CorrelationReport;
use andikit::trajgen::Mechanism;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Report {
    /// One curve per erasure seed.
    Erasure(Vec<ErasureCurve>),
    Noise(NoiseCurve),
    Correlation(CorrelationReport),
    Confusion(Box<Evaluation>),
    /// Indexed `[class][bin]`.
    Confidence(Vec<Vec<ConfidenceBin>>),
}

pub const REPORT_KINDS: [&str; 5] = ["erasure", "noise", "correlation", "confusion", "confidence"];

impl Report {
    /// Parses the payload of a report of type `kind`.
    pub fn parse(kind: &str, json: &str) -> Result<Self, CliError> {
        let bad = |e: serde_json::Error| CliError::BadInput {
            path: format!("<{kind} report>").into(),
            detail: e.to_string(),
        };
        Ok(match kind {
            "erasure" => Report::Erasure(serde_json::from_str(json).map_err(bad)?),
            "noise" => Report::Noise(serde_json::from_str(json).map_err(bad)?),
            "correlation" => Report::Correlation(serde_json::from_str(json).map_err(bad)?),
            "confusion" => Report::Confusion(Box::new(serde_json::from_str(json).map_err(bad)?)),
            "confidence" => Report::Confidence(serde_json::from_str(json).map_err(bad)?),
            other => return Err(CliError::UnknownReport(other.to_string())),
        })
    }

    pub fn file_name(&self) -> &'static str {
        match self {
            Report::Erasure(_) => "fig3_erasure.csv",
            Report::Noise(_) => "fig5_noise.csv",
            Report::Correlation(_) => "fig7_correlation.csv",
            Report::Confusion(_) => "figS1_confusion.csv",
            Report::Confidence(_) => "figS2_confidence.csv",
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn class_names() -> String {
    Mechanism::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
}

/// Renders the curve file of `report`.
pub fn emit_plotdata(report: &Report) -> Result<String, CliError> {
    let mut s = String::new();
    match report {
        Report::Erasure(curves) => {
            if curves.is_empty() {
                return Err(CliError::EmptyReport("no erasure curves".into()));
            }
            let deciles = curves[0].per_decile.len();
            if deciles == 0 || curves.iter().any(|c| c.per_decile.len() != deciles) {
                return Err(CliError::EmptyReport("erasure curves without matching deciles".into()));
            }
            writeln!(s, "row,mean_accuracy,std_error,seeds").unwrap();
            let row = |s: &mut String, name: &str, v: Vec<f64>| {
                let (m, se) = mean_and_std_error(&v);
                writeln!(s, "{name},{},{},{}", num(m), num(se), v.len()).unwrap();
            };
            for d in 0..deciles {
                row(&mut s, &(d + 1).to_string(), curves.iter().map(|c| c.per_decile[d]).collect());
            }
            row(&mut s, "random", curves.iter().map(|c| c.random_baseline).collect());
        }
        Report::Noise(curve) => {
            let Some(first) = curve.levels.first().filter(|l| !l.schemes.is_empty()) else {
                return Err(CliError::EmptyReport("no noise levels".into()));
            };
            let mut header = String::from("noise");
            for sch in &first.schemes {
                write!(header, ",{0}_mean,{0}_std_error", sch.scheme).unwrap();
            }
            writeln!(s, "{header},gap").unwrap();
            for level in &curve.levels {
                if level.schemes.len() != first.schemes.len() {
                    return Err(CliError::EmptyReport("noise levels with different schemes".into()));
                }
                write!(s, "{}", num(level.noise)).unwrap();
                for sch in &level.schemes {
                    write!(s, ",{},{}", num(sch.mean), num(sch.std_error)).unwrap();
                }
                writeln!(s, ",{}", opt(level.gap)).unwrap();
            }
        }
        Report::Correlation(report) => {
            if report.per_class.is_empty() {
                return Err(CliError::EmptyReport("no class correlations".into()));
            }
            let mut buf = Vec::new();
            report.write_matrix(&mut buf)?;
            s = String::from_utf8(buf).expect("matrix is UTF-8");
        }
        Report::Confusion(eval) => {
            if eval.support.iter().all(|&n| n == 0) {
                return Err(CliError::EmptyReport("confusion matrix without support".into()));
            }
            writeln!(s, "true_class,{},support", class_names()).unwrap();
            for (m, (row, n)) in Mechanism::ALL.iter().zip(eval.confusion.iter().zip(&eval.support)) {
                let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
                writeln!(s, "{},{},{n}", m.name(), cells.join(",")).unwrap();
            }
        }
        Report::Confidence(table) => {
            if table.iter().all(|bins| bins.is_empty()) {
                return Err(CliError::EmptyReport("no confidence bins".into()));
            }
            let probs: Vec<String> = Mechanism::ALL.iter().map(|m| format!("p_{}", m.name())).collect();
            writeln!(s, "true_class,alpha_lo,alpha_hi,count,{}", probs.join(",")).unwrap();
            for (m, bins) in Mechanism::ALL.iter().zip(table) {
                for b in bins {
                    let cells: Vec<String> = match b.mean_probabilities {
                        Some(p) => p.iter().map(|&v| num(v)).collect(),
                        None => vec![String::new(); probs.len()],
                    };
                    writeln!(s, "{},{},{},{},{}", m.name(), num(b.alpha_lo), num(b.alpha_hi), b.count, cells.join(",")).unwrap();
                }
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use andikit::experiments::ErasureConfig;
    use andikit::gradcam::ClassChoice;
    use andikit::stats::ClassCorrelations;

    fn curve(shift: f64) -> ErasureCurve {
        ErasureCurve {
            config: ErasureConfig::default(),
            control: 0.6,
            per_decile: (0..10).map(|d| 0.6 - 0.02 * d as f64 + shift).collect(),
            erased_fraction: vec![0.1; 10],
            random_baseline: 0.5 + shift,
        }
    }

    fn data_rows(csv: &str) -> Vec<&str> {
        csv.lines().skip(1).collect()
    }

    #[test]
    fn erasure_has_ten_deciles_and_a_random_row() {
        let out = emit_plotdata(&Report::Erasure(vec![curve(0.0), curve(0.02)])).unwrap();
        let rows = data_rows(&out);
        assert_eq!(rows.len(), 11);
        assert!(rows[0].starts_with("1,0.61,"));
        assert!(rows[10].starts_with("random,0.51,"));
        assert!(rows.iter().all(|r| r.ends_with(",2")));
    }

    #[test]
    fn correlation_is_eight_by_four() {
        let per_class = Mechanism::ALL
            .iter()
            .map(|&label| ClassCorrelations {
                label,
                windows: 10,
                ac: Some(-0.1),
                cs: None,
                ng: Some(0.0),
                sg: Some(0.2),
                vd: Some(0.3),
            })
            .collect();
        let report = CorrelationReport {
            window: 61,
            stride: 23,
            n_sub: 4,
            class_choice: ClassChoice::TrueClass,
            pooling: "windows".into(),
            per_class,
            windows: Vec::new(),
        };
        let out = emit_plotdata(&Report::Correlation(report)).unwrap();
        assert_eq!(out.lines().next().unwrap(), "class,AC,CS,SG,VD");
        let rows = data_rows(&out);
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.split(',').count() == 5));
        assert_eq!(rows[2], "SubFBM,-0.1,,0.2,0.3");
    }

    #[test]
    fn confusion_and_confidence_shapes() {
        let mut eval = Evaluation {
            accuracy: 1.0,
            confusion: [[0.0; 8]; 8],
            support: [3; 8],
        };
        for i in 0..8 {
            eval.confusion[i][i] = 1.0;
        }
        let out = emit_plotdata(&Report::Confusion(Box::new(eval))).unwrap();
        assert_eq!(data_rows(&out).len(), 8);
        assert!(out.lines().all(|l| l.split(',').count() == 10));

        let bins = |present: bool| {
            vec![ConfidenceBin {
                alpha_lo: 0.0,
                alpha_hi: 2.0,
                count: usize::from(present),
                mean_probabilities: present.then_some([0.125; 8]),
            }]
        };
        let table: Vec<_> = (0..8).map(|i| bins(i % 2 == 0)).collect();
        let out = emit_plotdata(&Report::Confidence(table)).unwrap();
        let rows = data_rows(&out);
        assert_eq!(rows.len(), 8);
        assert!(out.lines().all(|l| l.split(',').count() == 12));
        assert!(rows[1].ends_with(",,,,,,,"));
    }

    #[test]
    fn empty_and_unknown_reports_are_errors() {
        assert!(matches!(emit_plotdata(&Report::Erasure(Vec::new())), Err(CliError::EmptyReport(_))));
        assert!(matches!(emit_plotdata(&Report::Confidence(vec![Vec::new(); 8])), Err(CliError::EmptyReport(_))));
        assert!(matches!(Report::parse("fig9", "{}"), Err(CliError::UnknownReport(_))));
        let json = serde_json::to_string(&vec![curve(0.0)]).unwrap();
        assert_eq!(Report::parse("erasure", &json).unwrap(), Report::Erasure(vec![curve(0.0)]));
    }
}
