use std::fmt::Write as _;

use serde::Serialize;

use super::EvalError;

pub const CSV_HEADER: [&str; 8] = [
    "model",
    "source_building",
    "target_building",
    "horizon",
    "rmse",
    "mae",
    "windows",
    "faults",
];

/// Marker written in the metric columns of a failed cell.
pub const ERROR_MARKER: &str = "error";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub windows: usize,
    pub faults: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CellOutcome {
    Ok(CellMetrics),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub model: String,
    pub source_building: String,
    pub target_building: String,
    pub horizon: usize,
    pub outcome: CellOutcome,
}

impl EvalRow {
    pub fn metrics(&self) -> Option<&CellMetrics> {
        match &self.outcome {
            CellOutcome::Ok(m) => Some(m),
            CellOutcome::Failed(_) => None,
        }
    }

    fn sort_key(&self) -> (&str, &str, &str, usize) {
        (
            &self.model,
            &self.source_building,
            &self.target_building,
            self.horizon,
        )
    }
}

/// Result rows in (model, source, target, horizon) order plus free-form notes
/// describing how they were computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    rows: Vec<EvalRow>,
    notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TextTable,
    Csv,
}

impl EvalReport {
    pub fn new(mut rows: Vec<EvalRow>, notes: Vec<String>) -> Self {
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Self { rows, notes }
    }

    pub fn rows(&self) -> &[EvalRow] {
        &self.rows
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
        self.rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        for note in other.notes {
            if !self.notes.contains(&note) {
                self.notes.push(note);
            }
        }
    }

    pub fn failed_rows(&self) -> impl Iterator<Item = &EvalRow> {
        self.rows.iter().filter(|r| r.metrics().is_none())
    }

    pub fn render(&self, format: ReportFormat) -> Result<String, EvalError> {
        match format {
            ReportFormat::TextTable => self.render_text(),
            ReportFormat::Csv => self.render_csv(),
        }
    }

    pub fn render_csv(&self) -> Result<String, EvalError> {
        if self.rows.is_empty() {
            return Err(EvalError::EmptyReport);
        }
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(CSV_HEADER)?;
        for row in &self.rows {
            let (rmse, mae, windows, faults) = match &row.outcome {
                CellOutcome::Ok(m) => (
                    format!("{:.3}", m.rmse),
                    format!("{:.3}", m.mae),
                    m.windows,
                    m.faults,
                ),
                CellOutcome::Failed(_) => (ERROR_MARKER.into(), ERROR_MARKER.into(), 0, 0),
            };
            writer.write_record([
                row.model.clone(),
                row.source_building.clone(),
                row.target_building.clone(),
                row.horizon.to_string(),
                rmse,
                mae,
                windows.to_string(),
                faults.to_string(),
            ])?;
        }
        let bytes = writer.into_inner().map_err(|e| EvalError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Human-readable table, one block per source building.
    pub fn render_text(&self) -> Result<String, EvalError> {
        if self.rows.is_empty() {
            return Err(EvalError::EmptyReport);
        }
        let mut by_source: Vec<&EvalRow> = self.rows.iter().collect();
        by_source.sort_by(|a, b| {
            (&a.source_building, &a.model, &a.target_building, a.horizon).cmp(&(
                &b.source_building,
                &b.model,
                &b.target_building,
                b.horizon,
            ))
        });

        let width = |f: fn(&EvalRow) -> &str, title: &str| {
            self.rows
                .iter()
                .map(|r| f(r).len())
                .chain([title.len()])
                .max()
                .unwrap_or(0)
        };
        let wm = width(|r| &r.model, "model");
        let wt = width(|r| &r.target_building, "target");

        let mut out = String::new();
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        let mut current: Option<&str> = None;
        for row in by_source {
            if current != Some(row.source_building.as_str()) {
                if current.is_some() {
                    out.push('\n');
                }
                current = Some(&row.source_building);
                let _ = writeln!(out, "source: {}", row.source_building);
                let _ = writeln!(
                    out,
                    "  {:<wm$}  {:<wt$}  {:>7}  {:>10}  {:>10}  {:>7}  {:>6}",
                    "model", "target", "horizon", "RMSE", "MAE", "windows", "faults"
                );
            }
            match &row.outcome {
                CellOutcome::Ok(m) => {
                    let _ = writeln!(
                        out,
                        "  {:<wm$}  {:<wt$}  {:>7}  {:>10.3}  {:>10.3}  {:>7}  {:>6}",
                        row.model, row.target_building, row.horizon, m.rmse, m.mae, m.windows, m.faults
                    );
                }
                CellOutcome::Failed(reason) => {
                    let _ = writeln!(
                        out,
                        "  {:<wm$}  {:<wt$}  {:>7}  {:>10}  {:>10}  {ERROR_MARKER}: {reason}",
                        row.model, row.target_building, row.horizon, ERROR_MARKER, ERROR_MARKER
                    );
                }
            }
        }
        Ok(out)
    }

    /// `horizon,rmse,mae` lines for one (model, building) pair, for plotting.
    pub fn render_plot_csv(&self, model: &str, building: &str) -> String {
        let mut out = String::from("horizon,rmse,mae\n");
        for row in self
            .rows
            .iter()
            .filter(|r| r.model == model && r.target_building == building)
        {
            if let Some(m) = row.metrics() {
                let _ = writeln!(out, "{},{:.3},{:.3}", row.horizon, m.rmse, m.mae);
            }
        }
        out
    }
}

/// Reads a report CSV back. Failed cells come back as [`CellOutcome::Failed`]
/// with an empty reason.
pub fn parse_report_csv(text: &str) -> Result<Vec<EvalRow>, EvalError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(EvalError::BadReport(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        let bad = |what: &str| EvalError::BadReport(format!("bad {what} in {record:?}"));
        let horizon = field(3).parse().map_err(|_| bad("horizon"))?;
        let outcome = if field(4) == ERROR_MARKER {
            CellOutcome::Failed(String::new())
        } else {
            CellOutcome::Ok(CellMetrics {
                rmse: field(4).parse().map_err(|_| bad("rmse"))?,
                mae: field(5).parse().map_err(|_| bad("mae"))?,
                windows: field(6).parse().map_err(|_| bad("windows"))?,
                faults: field(7).parse().map_err(|_| bad("faults"))?,
            })
        };
        rows.push(EvalRow {
            model: field(0).to_string(),
            source_building: field(1).to_string(),
            target_building: field(2).to_string(),
            horizon,
            outcome,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, source: &str, target: &str, horizon: usize, rmse: f64, mae: f64) -> EvalRow {
        EvalRow {
            model: model.into(),
            source_building: source.into(),
            target_building: target.into(),
            horizon,
            outcome: CellOutcome::Ok(CellMetrics {
                rmse,
                mae,
                windows: 29,
                faults: 0,
            }),
        }
    }

    #[test]
    fn single_row_formats_to_three_decimals() {
        let report = EvalReport::new(vec![row("Pegasus", "Building A", "Building A", 24, 20.419, 15.124)], vec![]);
        let csv = report.render_csv().unwrap();
        assert_eq!(
            csv,
            "model,source_building,target_building,horizon,rmse,mae,windows,faults\n\
             Pegasus,Building A,Building A,24,20.419,15.124,29,0\n"
        );
        let text = report.render_text().unwrap();
        assert!(text.contains("20.419"));
        assert!(text.contains("15.124"));
    }

    #[test]
    fn csv_round_trips_numbers() {
        let report = EvalReport::new(
            vec![
                row("m", "A", "B", 24, 5.43219, 1.23456),
                row("m", "A", "C", 24, 0.0005, 0.0004),
                EvalRow {
                    outcome: CellOutcome::Failed("no windows".into()),
                    ..row("m", "B", "A", 24, 0.0, 0.0)
                },
            ],
            vec![],
        );
        let parsed = parse_report_csv(&report.render_csv().unwrap()).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0].metrics().unwrap().rmse, 5.432);
        assert_eq!(parsed[0].metrics().unwrap().mae, 1.235);
        assert_eq!(parsed[1].metrics().unwrap().rmse, 0.001);
        assert!(matches!(parsed[2].outcome, CellOutcome::Failed(_)));
        // Re-rendering the parsed rows reproduces the document.
        let again = EvalReport::new(parsed, vec![]).render_csv().unwrap();
        assert_eq!(again, report.render_csv().unwrap());
    }

    #[test]
    fn rows_are_sorted_and_text_is_grouped_by_source() {
        let buildings = ["A", "B", "C", "D", "E", "F"];
        let mut rows = Vec::new();
        for model in ["pegasus", "bart", "bigbird"] {
            for s in buildings {
                for t in buildings.iter().filter(|t| **t != s) {
                    rows.push(row(model, s, t, 24, 1.0, 0.5));
                }
            }
        }
        rows.reverse();
        let report = EvalReport::new(rows, vec!["aggregation: pooled".into()]);
        assert_eq!(report.rows().len(), 90);
        assert_eq!(report.rows()[0].model, "bart");
        assert_eq!(report.rows()[0].target_building, "B");
        let text = report.render_text().unwrap();
        assert_eq!(text.matches("source: ").count(), 6);
        assert!(text.starts_with("# aggregation: pooled\n"));
    }

    #[test]
    fn empty_report_is_an_error() {
        let report = EvalReport::new(vec![], vec![]);
        assert!(matches!(report.render(ReportFormat::Csv), Err(EvalError::EmptyReport)));
        assert!(matches!(report.render(ReportFormat::TextTable), Err(EvalError::EmptyReport)));
    }

    #[test]
    fn plot_csv_lists_horizons() {
        let report = EvalReport::new(
            vec![row("p", "A", "A", 4, 2.0, 1.0), row("p", "A", "A", 1, 1.0, 0.5)],
            vec![],
        );
        assert_eq!(
            report.render_plot_csv("p", "A"),
            "horizon,rmse,mae\n1,1.000,0.500\n4,2.000,1.000\n"
        );
    }
}
