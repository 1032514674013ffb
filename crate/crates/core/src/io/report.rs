//! CSV and aligned-text rendering of rankings, sampling plans and error reports.
//!
//! Numbers print with one decimal by default; [`Precision::Full`] prints the
//! shortest representation that reads back to the same value.

use std::fmt;
use std::str::FromStr;

use crate::benchmark::RankingTable;
use crate::metrics::{EvalSummary, PartErrorReport};
use crate::sampling::SamplingPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    OneDecimal,
    Full,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "one" | "default" => Ok(Precision::OneDecimal),
            "full" => Ok(Precision::Full),
            _ => Err(format!("unknown precision '{s}' (expected default or full)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    Csv,
    #[default]
    Text,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" | "table" => Ok(ReportFormat::Text),
            _ => Err(format!("unknown format '{s}' (expected csv or text)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Text => "text",
        })
    }
}

pub fn format_number(value: f64, precision: Precision) -> String {
    match precision {
        Precision::OneDecimal => format!("{value:.1}"),
        Precision::Full => format!("{value}"),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Align {
    Left,
    Right,
}

struct Table {
    header: Vec<String>,
    align: Vec<Align>,
    rows: Vec<Vec<String>>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Table {
    fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => {
                let mut out = String::new();
                for row in std::iter::once(&self.header).chain(&self.rows) {
                    let line: Vec<String> = row.iter().map(|c| csv_field(c)).collect();
                    out.push_str(&line.join(","));
                    out.push('\n');
                }
                out
            }
            ReportFormat::Text => {
                let widths: Vec<usize> = (0..self.header.len())
                    .map(|c| {
                        std::iter::once(&self.header)
                            .chain(&self.rows)
                            .map(|r| r[c].chars().count())
                            .max()
                            .unwrap_or(0)
                    })
                    .collect();
                let line = |row: &[String]| {
                    let cells: Vec<String> = row
                        .iter()
                        .zip(&widths)
                        .zip(&self.align)
                        .map(|((cell, &w), a)| match a {
                            Align::Left => format!("{cell:<w$}"),
                            Align::Right => format!("{cell:>w$}"),
                        })
                        .collect();
                    let mut s = cells.join("  ").trim_end().to_string();
                    s.push('\n');
                    s
                };
                let mut out = line(&self.header);
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                out.push_str(&line(&rule));
                for row in &self.rows {
                    out.push_str(&line(row));
                }
                out
            }
        }
    }
}

fn absent(format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => String::new(),
        ReportFormat::Text => "-".to_string(),
    }
}

/// Ranking with each benchmark's cell and its within-column rank.
pub fn render_ranking(table: &RankingTable, format: ReportFormat, precision: Precision) -> String {
    let mut header = vec!["rank".to_string(), "dataset".to_string(), "mpe".to_string()];
    let mut align = vec![Align::Right, Align::Left, Align::Right];
    for c in &table.columns {
        header.push(c.clone());
        header.push(format!("{c}_rank"));
        align.extend([Align::Right, Align::Right]);
    }
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.rank.to_string(), r.dataset.clone(), format_number(r.mpe, precision)];
            for (cell, rank) in r.cells.iter().zip(&r.column_ranks) {
                row.push(cell.map_or_else(|| absent(format), |v| format_number(v, precision)));
                row.push(rank.map_or_else(|| absent(format), |k| k.to_string()));
            }
            row
        })
        .collect();
    Table { header, align, rows }.render(format)
}

pub fn render_plan(plan: &SamplingPlan, format: ReportFormat) -> String {
    let header = ["rank", "dataset", "native_length", "target_length"]
        .map(String::from)
        .to_vec();
    let align = vec![Align::Right, Align::Left, Align::Right, Align::Right];
    let rows = plan
        .entries
        .iter()
        .map(|e| {
            vec![
                e.rank.to_string(),
                e.name.clone(),
                e.native_length.to_string(),
                e.target_length.to_string(),
            ]
        })
        .collect();
    Table { header, align, rows }.render(format)
}

pub fn render_parts(report: &PartErrorReport, format: ReportFormat, precision: Precision) -> String {
    let header = ["part", "raw", "pa"].map(String::from).to_vec();
    let align = vec![Align::Left, Align::Right, Align::Right];
    let rows = report
        .rows()
        .iter()
        .map(|(name, e)| {
            vec![
                name.to_string(),
                format_number(e.raw, precision),
                format_number(e.pa, precision),
            ]
        })
        .collect();
    Table { header, align, rows }.render(format)
}

/// Frame-averaged metrics; metrics that could not be computed are omitted.
pub fn render_summary(summary: &EvalSummary, format: ReportFormat, precision: Precision) -> String {
    let header = ["metric", "value"].map(String::from).to_vec();
    let align = vec![Align::Left, Align::Right];
    let rows = [
        ("pve", summary.pve),
        ("pa_pve", summary.pa_pve),
        ("mpjpe", summary.mpjpe),
        ("pa_mpjpe", summary.pa_mpjpe),
        ("nmve", summary.nmve),
        ("nmje", summary.nmje),
    ]
    .into_iter()
    .filter_map(|(name, v)| v.map(|v| vec![name.to_string(), format_number(v, precision)]))
    .collect();
    Table { header, align, rows }.render(format)
}
