//! Static SVG bar charts from a results CSV, one file per metric family,
//! with every bar normalized to a chosen baseline row.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("results have no {0:?} column")]
    MissingColumn(String),
    #[error("no row labelled {0:?} to normalize against")]
    UnknownBaseline(String),
    #[error("results file has no rows")]
    Empty,
}

pub struct Family {
    pub name: &'static str,
    pub file: &'static str,
    pub metrics: &'static [&'static str],
}

pub const FAMILIES: [Family; 3] = [
    Family {
        name: "Writes per level",
        file: "writes.svg",
        metrics: &["llc_writes", "pcm_writes", "br_writes"],
    },
    Family {
        name: "Energy",
        file: "energy.svg",
        metrics: &["energy_stable_nj", "energy_backup_nj", "energy_restore_nj", "energy_total_nj"],
    },
    Family {
        name: "Execution cycles",
        file: "cycles.svg",
        metrics: &["total_cycles", "stall_cycles", "backup_cycles", "restore_cycles"],
    },
];

/// Rows beyond this many are left out of the charts.
pub const MAX_BARS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub labels: Vec<String>,
    pub columns: Vec<String>,
    /// `rows[i][j]` is column `j` of row `i`, `None` when not numeric.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl ResultTable {
    pub fn read<R: Read>(input: R) -> Result<Self, ReportError> {
        let mut rdr = csv::Reader::from_reader(input);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let label_col = columns
            .iter()
            .position(|c| c == "label")
            .ok_or_else(|| ReportError::MissingColumn("label".into()))?;
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            labels.push(rec.get(label_col).unwrap_or("").to_string());
            rows.push(rec.iter().map(|v| v.parse().ok()).collect());
        }
        if rows.is_empty() {
            return Err(ReportError::Empty);
        }
        Ok(Self { labels, columns, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize, ReportError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| ReportError::MissingColumn(name.to_string()))
    }

    pub fn row_of(&self, label: &str) -> Result<usize, ReportError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| ReportError::UnknownBaseline(label.to_string()))
    }

    /// `value / baseline value`; `None` when the baseline is zero.
    pub fn normalized(&self, row: usize, baseline_row: usize, col: usize) -> Option<f64> {
        let v = self.rows[row][col]?;
        let b = self.rows[baseline_row][col]?;
        (b != 0.0).then(|| v / b)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 8] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f"];

/// Grouped bar chart: one group per metric, one bar per row.
pub fn render(table: &ResultTable, family: &Family, baseline_row: usize) -> Result<String, ReportError> {
    let cols: Vec<usize> = family.metrics.iter().map(|m| table.column(m)).collect::<Result<_, _>>()?;
    let shown = table.rows.len().min(MAX_BARS);
    let values: Vec<Vec<Option<f64>>> = cols
        .iter()
        .map(|&c| (0..shown).map(|r| table.normalized(r, baseline_row, c)).collect())
        .collect();
    let top = values.iter().flatten().flatten().fold(1.0f64, |a, &b| a.max(b)) * 1.1;

    let (bar_w, gap, left, plot_h, top_pad) = (14.0, 30.0, 60.0, 260.0, 50.0);
    let group_w = shown as f64 * bar_w + gap;
    let legend_h = 16.0 * shown as f64 + 20.0;
    let width = left + group_w * cols.len() as f64 + 20.0;
    let height = top_pad + plot_h + 40.0 + legend_h;
    let y = |v: f64| top_pad + plot_h - v / top * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let mut title = format!("{} (normalized to {})", family.name, table.labels[baseline_row]);
    if shown < table.rows.len() {
        let _ = write!(title, ", first {shown} of {} rows", table.rows.len());
    }
    let _ = writeln!(svg, r#"<text x="{left}" y="24" font-size="14">{}</text>"#, escape(&title));
    for tick in 0..=4 {
        let v = top * tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            width - 20.0,
            y(v),
            y(v),
            left - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{left}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#333" stroke-dasharray="4 3"/>"##,
        width - 20.0,
        y(1.0),
        y(1.0)
    );
    for (g, metric) in family.metrics.iter().enumerate() {
        let gx = left + g as f64 * group_w + gap / 2.0;
        for (r, v) in values[g].iter().enumerate() {
            let x = gx + r as f64 * bar_w;
            match v {
                Some(v) => {
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{}: {v:.4}</title></rect>"#,
                        y(*v),
                        bar_w - 2.0,
                        top_pad + plot_h - y(*v),
                        PALETTE[r % PALETTE.len()],
                        escape(&table.labels[r])
                    );
                }
                None => {
                    let _ = writeln!(
                        svg,
                        r#"<text x="{:.1}" y="{:.1}" font-size="8" text-anchor="middle">n/a</text>"#,
                        x + bar_w / 2.0,
                        top_pad + plot_h - 3.0
                    );
                }
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            gx + shown as f64 * bar_w / 2.0,
            top_pad + plot_h + 18.0,
            escape(metric)
        );
    }
    for r in 0..shown {
        let ly = top_pad + plot_h + 44.0 + 16.0 * r as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{left}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ly - 9.0,
            PALETTE[r % PALETTE.len()],
            left + 16.0,
            ly,
            escape(&table.labels[r])
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Write one SVG per family into `out_dir`. `baseline` defaults to the
/// first row.
pub fn write_report(table: &ResultTable, out_dir: &Path, baseline: Option<&str>) -> Result<Vec<PathBuf>, ReportError> {
    let baseline_row = match baseline {
        Some(label) => table.row_of(label)?,
        None => 0,
    };
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for family in &FAMILIES {
        let path = out_dir.join(family.file);
        fs::write(&path, render(table, family, baseline_row)?)?;
        written.push(path);
    }
    Ok(written)
}
