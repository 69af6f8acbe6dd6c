// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tables and plots from a results directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{DataError, SplitName};
use crate::experiment::{io_err, read_json, ExperimentError, ExperimentResults, MeanStd, PredictionExample};

/// Which aggregated number a table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    Nmse,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Nmse => "nmse",
        }
    }
}

/// Rows are (dataset, L-H); columns are cells in config order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub split: SplitName,
    pub metric: Metric,
    pub columns: Vec<String>,
    pub rows: Vec<(String, String)>,
    pub values: Vec<Vec<Option<MeanStd>>>,
}

pub fn build_table(results: &ExperimentResults, split: SplitName, metric: Metric) -> Table {
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for e in &results.entries {
        if !rows.contains(&(e.lookback, e.horizon)) {
            rows.push((e.lookback, e.horizon));
        }
    }
    let values = rows
        .iter()
        .map(|&(l, h)| {
            results
                .cells
                .iter()
                .map(|c| {
                    let m = results.get(l, h, c)?.metrics.get(&split)?;
                    Some(match metric {
                        Metric::Mse => m.mse,
                        Metric::Nmse => m.nmse,
                    })
                })
                .collect()
        })
        .collect();
    Table {
        split,
        metric,
        columns: results.cells.clone(),
        rows: rows
            .iter()
            .map(|(l, h)| (results.dataset.clone(), format!("{l}-{h}")))
            .collect(),
        values,
    }
}

/// Mean over rows of `(b − c)/b` against the first column `b`, in percent.
///
/// Rows where either value is missing or `b = 0` are skipped.
pub fn improvements(table: &Table) -> Vec<Option<f64>> {
    (0..table.columns.len())
        .map(|c| {
            let rel: Vec<f64> = table
                .values
                .iter()
                .filter_map(|row| {
                    let b = row.first()?.as_ref()?.mean;
                    let v = row.get(c)?.as_ref()?.mean;
                    (b != 0.0).then(|| (b - v) / b)
                })
                .collect();
            (!rel.is_empty()).then(|| 100.0 * rel.iter().sum::<f64>() / rel.len() as f64)
        })
        .collect()
}

/// Four significant digits; scientific notation outside `[0.01, 10⁴)`.
fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".to_owned()
    } else if (1e-2..1e4).contains(&a) {
        let decimals = (3 - a.log10().floor() as i32).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.3e}")
    }
}

const MISSING: &str = "—";

impl Table {
    fn best(&self, row: usize) -> Option<f64> {
        self.values[row]
            .iter()
            .flatten()
            .map(|m| m.mean)
            .filter(|m| !m.is_nan())
            .min_by(f64::total_cmp)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| Dataset | L-H | {} |", self.columns.join(" | "));
        let _ = writeln!(s, "|---|---|{}", "---|".repeat(self.columns.len()));
        for (r, (ds, setting)) in self.rows.iter().enumerate() {
            let best = self.best(r);
            let cells: Vec<String> = self.values[r]
                .iter()
                .map(|v| match v {
                    None => MISSING.to_owned(),
                    Some(m) => {
                        let text = format!("{} ({})", fmt_num(m.mean), fmt_num(m.std));
                        if Some(m.mean) == best {
                            format!("**{text}**")
                        } else {
                            text
                        }
                    }
                })
                .collect();
            let _ = writeln!(s, "| {ds} | {setting} | {} |", cells.join(" | "));
        }
        let imp: Vec<String> = improvements(self)
            .iter()
            .map(|v| v.map_or_else(|| MISSING.to_owned(), |v| format!("{v:.2}%")))
            .collect();
        let _ = writeln!(s, "| Improvements | | {} |", imp.join(" | "));
        s
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["dataset".to_owned(), "setting".to_owned()];
        header.extend(self.columns.iter().cloned());
        wtr.write_record(&header)?;
        for (r, (ds, setting)) in self.rows.iter().enumerate() {
            let mut rec = vec![ds.clone(), setting.clone()];
            rec.extend(self.values[r].iter().map(|v| v.map(|m| m.mean.to_string()).unwrap_or_default()));
            wtr.write_record(&rec)?;
        }
        let mut rec = vec!["improvements_pct".to_owned(), String::new()];
        rec.extend(improvements(self).iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()));
        wtr.write_record(&rec)?;
        wtr.flush()?;
        Ok(())
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let lo_hi = |it: &mut dyn Iterator<Item = f64>| {
            it.filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
        };
        let (mut x0, mut x1) = lo_hi(&mut xs.clone());
        let (mut y0, mut y1) = lo_hi(&mut ys.clone());
        if !(x1 > x0) {
            x0 -= 1.0;
            x1 += 1.0;
        }
        if !(y1 > y0) {
            y0 -= 1.0;
            y1 += 1.0;
        }
        let m = 0.05 * (y1 - y0);
        Self { x0, x1, y0: y0 - m, y1: y1 + m }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        );
        let _ = writeln!(
            s,
            "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>",
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>", W / 2.0, escape(title));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 12.0, escape(xlabel));
        let _ = writeln!(
            s,
            "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
        for (v, anchor, x, y) in [
            (self.x0, "start", PAD, H - PAD + 14.0),
            (self.x1, "end", W - PAD, H - PAD + 14.0),
        ] {
            let _ = writeln!(s, "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\">{}</text>", fmt_num(v));
        }
        for (v, y) in [(self.y0, H - PAD), (self.y1, PAD + 10.0)] {
            let _ = writeln!(s, "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\">{}</text>", PAD - 4.0, fmt_num(v));
        }
        s
    }

    fn polyline(&self, pts: &[(f64, f64)], color: &str, dashed: bool) -> String {
        let d: Vec<String> = pts
            .iter()
            .filter(|(_, y)| y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{} points=\"{}\"/>\n",
            if dashed { " stroke-dasharray=\"4 3\"" } else { "" },
            d.join(" ")
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(entries: &[(String, &str)]) -> String {
    let mut s = String::new();
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = PAD + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"3\" fill=\"{color}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            PAD + 8.0,
            y - 4.0,
            PAD + 22.0,
            y,
            escape(name)
        );
    }
    s
}

/// Look-back, ground truth and each cell's prediction.
pub fn prediction_svg(example: &PredictionExample, title: &str) -> String {
    let l = example.x.len();
    let xs = (0..l + example.y.len()).map(|i| i as f64);
    let ys = example
        .x
        .iter()
        .chain(&example.y)
        .chain(example.predictions.values().flatten())
        .copied();
    let f = Frame::fit(xs, ys);
    let mut s = f.open(title, "time step", "value");
    let hist: Vec<(f64, f64)> = example.x.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
    s.push_str(&f.polyline(&hist, "#333", false));
    let truth: Vec<(f64, f64)> = example.y.iter().enumerate().map(|(i, &v)| ((l + i) as f64, v)).collect();
    s.push_str(&f.polyline(&truth, "#333", true));
    let mut leg = vec![("ground truth".to_owned(), "#333")];
    for (k, (name, pred)) in example.predictions.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = pred.iter().enumerate().map(|(i, &v)| ((l + i) as f64, v)).collect();
        s.push_str(&f.polyline(&pts, color, false));
        leg.push((name.clone(), color));
    }
    s.push_str(&legend(&leg));
    s.push_str("</svg>\n");
    s
}

/// Per-user `(mu, sigma)` scatter, coloured by cluster.
pub fn user_stats_svg(points: &[(String, f64, f64)], title: &str) -> String {
    let f = Frame::fit(points.iter().map(|p| p.1), points.iter().map(|p| p.2));
    let mut s = f.open(title, "mean", "standard deviation");
    let mut clusters: Vec<&str> = points.iter().map(|p| p.0.as_str()).collect();
    clusters.sort_unstable();
    clusters.dedup();
    for (c, mu, sigma) in points {
        let k = clusters.iter().position(|x| x == c).unwrap_or(0);
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>",
            f.px(*mu),
            f.py(*sigma),
            PALETTE[k % PALETTE.len()]
        );
    }
    if clusters.len() > 1 {
        let leg: Vec<(String, &str)> = clusters
            .iter()
            .enumerate()
            .map(|(k, c)| (c.to_string(), PALETTE[k % PALETTE.len()]))
            .collect();
        s.push_str(&legend(&leg));
    }
    s.push_str("</svg>\n");
    s
}

fn read_user_stats(path: &Path) -> Result<Vec<(String, f64, f64)>, ExperimentError> {
    let mut rdr = csv::Reader::from_path(path).map_err(DataError::from)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(DataError::from)?;
        let num = |i: usize| -> Result<f64, ExperimentError> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| DataError::Malformed(format!("{}: bad number", path.display())).into())
        };
        out.push((rec.get(1).unwrap_or("").to_owned(), num(2)?, num(3)?));
    }
    Ok(out)
}

/// The tables in `report.md`, one per (split, metric).
pub const TABLES: [(SplitName, Metric); 4] = [
    (SplitName::Test1, Metric::Mse),
    (SplitName::Test2, Metric::Mse),
    (SplitName::Test1, Metric::Nmse),
    (SplitName::Test2, Metric::Nmse),
];

/// Write `report.md`, `tables/*.csv` and `plots/*.svg` into `dir`; returns the files written.
pub fn emit_report(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let results = ExperimentResults::load(dir)?;
    let mut written = Vec::new();
    let tables_dir = dir.join("tables");
    let plots_dir = dir.join("plots");
    fs::create_dir_all(&tables_dir).map_err(io_err(&tables_dir))?;
    fs::create_dir_all(&plots_dir).map_err(io_err(&plots_dir))?;

    let mut md = format!("# Results: {}\n\nMean (std) across seeds; best cell per row in bold.\n", results.dataset);
    for (split, metric) in TABLES {
        let table = build_table(&results, split, metric);
        let _ = write!(md, "\n## {split} {}\n\n{}", metric.as_str().to_uppercase(), table.to_markdown());
        let path = tables_dir.join(format!("{}_{}.csv", split.to_string().to_lowercase(), metric.as_str()));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        table.write_csv(file)?;
        written.push(path);
    }

    let mut settings: Vec<String> = results.entries.iter().map(|e| e.setting()).collect();
    settings.dedup();
    let mut plots = Vec::new();
    for setting in &settings {
        let ex_path = dir.join("settings").join(setting).join("examples.json");
        if ex_path.exists() {
            let ex: PredictionExample = read_json(&ex_path)?;
            let path = plots_dir.join(format!("prediction_{setting}.svg"));
            let title = format!("{} {setting}: user {} (Test2)", results.dataset, ex.user);
            fs::write(&path, prediction_svg(&ex, &title)).map_err(io_err(&path))?;
            plots.push(path);
        }
    }
    let stats_path = dir.join("user_stats.csv");
    if stats_path.exists() {
        let pts = read_user_stats(&stats_path)?;
        let path = plots_dir.join("user_stats.svg");
        fs::write(&path, user_stats_svg(&pts, &format!("{}: per-user statistics", results.dataset)))
            .map_err(io_err(&path))?;
        plots.push(path);
    }
    if !plots.is_empty() {
        md.push_str("\n## Plots\n\n");
        for p in &plots {
            let rel = p.strip_prefix(dir).unwrap_or(p);
            let _ = writeln!(md, "- ![]({})", rel.display());
        }
    }
    written.extend(plots);
    let md_path = dir.join("report.md");
    fs::write(&md_path, md).map_err(io_err(&md_path))?;
    written.push(md_path);
    Ok(written)
}
