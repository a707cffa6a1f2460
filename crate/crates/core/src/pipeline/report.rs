//! Model comparison table: one row per model, Precision/Recall/F1/AUC.

use crate::error::{Error, Result};
use crate::metrics::EvalReport;

pub const REPORT_HEADER: [&str; 5] = ["Model", "Precision", "Recall", "F1", "AUC"];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub model: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

impl ModelRow {
    pub fn from_report(model: &str, r: &EvalReport) -> Self {
        Self {
            model: model.to_string(),
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            auc: r.auc,
        }
    }

    fn cells(&self) -> [String; 5] {
        [
            self.model.clone(),
            format!("{:.3}", self.precision),
            format!("{:.3}", self.recall),
            format!("{:.3}", self.f1),
            format!("{:.3}", self.auc),
        ]
    }
}

fn nonempty(rows: &[ModelRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Input(
            "report needs at least one evaluated model".into(),
        ));
    }
    Ok(())
}

pub fn report_csv(rows: &[ModelRow]) -> Result<String> {
    nonempty(rows)?;
    let mut out = REPORT_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells().join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Fixed-width text table with a rule under the header.
pub fn report_text(rows: &[ModelRow]) -> Result<String> {
    nonempty(rows)?;
    let cells: Vec<[String; 5]> = rows.iter().map(ModelRow::cells).collect();
    let mut widths = REPORT_HEADER.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cols: [&str; 5]| -> String {
        let mut s = format!("{:<w$}", cols[0], w = widths[0]);
        for (c, w) in cols[1..].iter().zip(&widths[1..]) {
            s.push_str(&format!("  {c:>w$}"));
        }
        s.push('\n');
        s
    };
    let mut out = line(REPORT_HEADER);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in &cells {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4]]));
    }
    Ok(out)
}

/// `(text, csv)` for the given rows.
pub fn format_report(rows: &[ModelRow]) -> Result<(String, String)> {
    Ok((report_text(rows)?, report_csv(rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, v: f64) -> ModelRow {
        ModelRow {
            model: name.into(),
            precision: v,
            recall: 0.5,
            f1: 4.0 / 7.0,
            auc: 0.6,
        }
    }

    #[test]
    fn two_models() {
        let csv = report_csv(&[row("LSTM", 2.0 / 3.0), row("LR", 0.25)]).unwrap();
        assert_eq!(
            csv,
            "Model,Precision,Recall,F1,AUC\nLSTM,0.667,0.500,0.571,0.600\nLR,0.250,0.500,0.571,0.600\n"
        );
        let text = report_text(&[row("LSTM", 2.0 / 3.0), row("LR", 0.25)]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "Model  Precision  Recall     F1    AUC");
        assert_eq!(lines[2], "LSTM       0.667   0.500  0.571  0.600");
    }

    #[test]
    fn one_model_and_empty() {
        assert_eq!(report_csv(&[row("LR", 0.1)]).unwrap().lines().count(), 2);
        assert!(report_csv(&[]).is_err());
        assert!(report_text(&[]).is_err());
    }
}
