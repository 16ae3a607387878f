use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FidelityReport, PrivacyRiskReport, UtilityReport};
use crate::error::Result;

/// Results of whichever metric families were run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fidelity: Option<FidelityReport>,
    pub utility: Option<UtilityReport>,
    pub privacy: Option<PrivacyRiskReport>,
}

fn mean_stderr(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

impl EvalReport {
    /// `(metric, value, stderr)` rows.
    pub fn rows(&self) -> Vec<(String, f64, f64)> {
        let mut rows = Vec::new();
        if let Some(f) = &self.fidelity {
            rows.push(("omega_col".into(), f.omega_col, mean_stderr(f.columns.iter().map(|c| c.score))));
            rows.push(("omega_row".into(), f.omega_row, mean_stderr(f.pairs.iter().map(|p| p.score))));
            rows.push(("omega_total".into(), f.omega_total, 0.0));
            for c in &f.columns {
                rows.push((format!("column:{}", c.column), c.score, 0.0));
            }
            for p in &f.pairs {
                rows.push((format!("pair:{}:{}", p.a, p.b), p.score, 0.0));
            }
        }
        if let Some(u) = &self.utility {
            rows.push(("phi".into(), u.phi, mean_stderr(u.classifiers.iter().map(|c| c.auc))));
            for c in &u.classifiers {
                rows.push((format!("auc:{}", c.classifier), c.auc, 0.0));
            }
        }
        if let Some(p) = &self.privacy {
            rows.push(("sor".into(), p.sor, p.singling_out.stderr()));
            rows.push(("lr".into(), p.lr, p.linkability.stderr()));
            rows.push(("ir".into(), p.ir, p.inference.stderr()));
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,stderr\n");
        for (m, v, s) in self.rows() {
            let _ = writeln!(out, "{m},{v},{s}");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(f) = &self.fidelity {
            let _ = writeln!(out, "Fidelity");
            let _ = writeln!(out, "  column   {:.4}", f.omega_col);
            let _ = writeln!(out, "  row      {:.4}", f.omega_row);
            let _ = writeln!(out, "  total    {:.4}", f.omega_total);
            for c in &f.columns {
                let _ = writeln!(out, "    {:<24} {:.4}", c.column, c.score);
            }
            for w in &f.warnings {
                let _ = writeln!(out, "  warning: {w}");
            }
        }
        if let Some(u) = &self.utility {
            let _ = writeln!(out, "Utility");
            let _ = writeln!(out, "  phi      {:.4}", u.phi);
            for c in &u.classifiers {
                let _ = writeln!(out, "    {:<24} {:.4}", c.classifier, c.auc);
            }
        }
        if let Some(p) = &self.privacy {
            let _ = writeln!(out, "Privacy risk");
            for (name, risk, o) in [
                ("singling out", p.sor, &p.singling_out),
                ("linkability", p.lr, &p.linkability),
                ("inference", p.ir, &p.inference),
            ] {
                let _ = writeln!(
                    out,
                    "  {name:<14} {risk:.4}  ({}/{} vs holdout {}/{})",
                    o.successes, o.trials, o.baseline_successes, o.baseline_trials
                );
            }
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        Ok(())
    }
}
