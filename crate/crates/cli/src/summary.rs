//! Result tables: optimizer × train/test MSC.

use serde::{Deserialize, Serialize};

use crate::config::OptimizerChoice;
use crate::experiment::Calibration;

/// Coverage of the masters against each model of a combined attack alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerModelMsc {
    pub train_a: f64,
    pub train_b: f64,
    pub test_a: f64,
    pub test_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub optimizer: OptimizerChoice,
    pub masters: usize,
    /// Cumulative MSC in percent on the training identities.
    pub train_msc: f64,
    pub test_msc: f64,
    /// Objective evaluations over every run of this optimizer.
    pub evaluations: usize,
    pub per_model: Option<PerModelMsc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: String,
    pub world_seed: u64,
    pub train_subjects: usize,
    pub test_subjects: usize,
    pub calibration: Calibration,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    fn combined(&self) -> bool {
        self.rows.iter().any(|r| r.per_model.is_some())
    }

    /// Full-precision values; the same numbers recompute from the masters.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("optimizer,mode,masters,train_msc,test_msc,evaluations");
        if self.combined() {
            out.push_str(",train_msc_a,train_msc_b,test_msc_a,test_msc_b");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                r.optimizer, self.mode, r.masters, r.train_msc, r.test_msc, r.evaluations
            ));
            if let Some(m) = r.per_model {
                out.push_str(&format!(
                    ",{},{},{},{}",
                    m.train_a, m.train_b, m.test_a, m.test_b
                ));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned console view.
    pub fn to_table(&self) -> String {
        let thresholds: Vec<String> = self
            .calibration
            .thresholds
            .iter()
            .map(|t| format!("{t:.6}"))
            .collect();
        let mut out = format!(
            "mode {} | world seed {} | train {} / test {} identities\n\
             threshold {} (train FAR {:.5}, FRR {:.5})\n\n",
            self.mode,
            self.world_seed,
            self.train_subjects,
            self.test_subjects,
            thresholds.join(" / "),
            self.calibration.far,
            self.calibration.frr,
        );
        let mut header = vec!["optimizer", "masters", "train MSC %", "test MSC %"];
        if self.combined() {
            header.extend(["train A %", "train B %", "test A %", "test B %"]);
        }
        let mut lines = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        for r in &self.rows {
            let mut cells = vec![
                r.optimizer.to_string(),
                r.masters.to_string(),
                format!("{:.2}", r.train_msc),
                format!("{:.2}", r.test_msc),
            ];
            if let Some(m) = r.per_model {
                cells.extend([m.train_a, m.train_b, m.test_a, m.test_b].map(|v| format!("{v:.2}")));
            }
            lines.push(cells);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        for (i, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == 0 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(per_model: Option<PerModelMsc>) -> Summary {
        Summary {
            mode: "single".into(),
            world_seed: 1,
            train_subjects: 351,
            test_subjects: 149,
            calibration: Calibration {
                thresholds: vec![6.0],
                far: 0.001,
                frr: 0.2,
            },
            rows: vec![SummaryRow {
                optimizer: OptimizerChoice::Assisted,
                masters: 1,
                train_msc: 100.0 / 3.0,
                test_msc: 12.5,
                evaluations: 26400,
                per_model,
            }],
        }
    }

    #[test]
    fn csv_keeps_full_precision() {
        let csv = summary(None).to_csv();
        assert_eq!(
            csv,
            "optimizer,mode,masters,train_msc,test_msc,evaluations\n\
             lmmaes+predictor,single,1,33.333333333333336,12.5,26400\n"
        );
        let value: f64 = csv
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(3)
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(value, 100.0 / 3.0);
    }

    #[test]
    fn combined_tables_carry_per_model_columns() {
        let m = PerModelMsc {
            train_a: 40.0,
            train_b: 35.0,
            test_a: 30.0,
            test_b: 20.0,
        };
        let s = summary(Some(m));
        assert!(s.to_csv().lines().next().unwrap().ends_with("test_msc_b"));
        let table = s.to_table();
        assert!(table.contains("train A %"));
        assert!(table.contains("33.33"));
    }
}
