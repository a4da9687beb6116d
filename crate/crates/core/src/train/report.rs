use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{mean_std, pearson, Evaluation, FoldReport, TrainConfig, TrainMode};
use crate::model::ModelConfig;

pub const REPORT_SCHEMA: u32 = 1;

/// One row of the method × held-out-cluster accuracy table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub mode: TrainMode,
    /// Evaluation graph, or `None` for the mode's headline (mean over its graphs).
    pub graph: Option<String>,
    pub label: String,
    pub per_fold: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PearsonRow {
    /// `all` pools every non-baseline run; otherwise a mode.
    pub scope: String,
    pub component: String,
    pub n: usize,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub mode: TrainMode,
    pub graph: String,
    /// Summed over folds.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub dataset: String,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub activity_names: Vec<String>,
    pub folds: Vec<String>,
    pub modes: Vec<TrainMode>,
    pub runs: Vec<FoldReport>,
    pub summary: Vec<MethodRow>,
    pub pearson: Vec<PearsonRow>,
    pub confusion: Vec<ConfusionEntry>,
}

impl ExperimentReport {
    /// Builds the aggregate sections from per-run reports.
    pub fn assemble(
        dataset: &str,
        train: TrainConfig,
        model: ModelConfig,
        activity_names: Vec<String>,
        folds: Vec<String>,
        modes: Vec<TrainMode>,
        runs: Vec<FoldReport>,
    ) -> Self {
        let mut r = ExperimentReport {
            schema_version: REPORT_SCHEMA,
            dataset: dataset.to_string(),
            train,
            model,
            activity_names,
            folds,
            modes,
            runs,
            summary: Vec::new(),
            pearson: Vec::new(),
            confusion: Vec::new(),
        };
        r.summary = r.build_summary();
        r.pearson = r.build_pearson();
        r.confusion = r.build_confusion();
        r
    }

    pub fn run(&self, fold: &str, mode: TrainMode) -> Option<&FoldReport> {
        self.runs.iter().find(|r| r.fold == fold && r.mode == mode)
    }

    fn runs_of(&self, mode: TrainMode) -> Vec<&FoldReport> {
        self.folds.iter().filter_map(|f| self.run(f, mode)).collect()
    }

    fn build_summary(&self) -> Vec<MethodRow> {
        let mut rows = Vec::new();
        for &mode in &self.modes {
            let runs = self.runs_of(mode);
            if runs.is_empty() {
                continue;
            }
            let graphs: Vec<String> = runs[0].evaluations.iter().map(|e| e.graph.clone()).collect();
            if graphs.len() > 1 {
                for (gi, g) in graphs.iter().enumerate() {
                    let per_fold: Vec<f64> = runs.iter().map(|r| r.evaluations[gi].accuracy).collect();
                    let (mean, std) = mean_std(&per_fold);
                    rows.push(MethodRow {
                        mode,
                        graph: Some(g.clone()),
                        label: format!("{} ({g})", mode.title()),
                        per_fold,
                        mean,
                        std,
                    });
                }
            }
            let per_fold: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
            let (mean, std) = mean_std(&per_fold);
            let label = if graphs.len() > 1 {
                format!("{} (mean of graphs)", mode.title())
            } else {
                mode.title()
            };
            rows.push(MethodRow {
                mode,
                graph: None,
                label,
                per_fold,
                mean,
                std,
            });
        }
        rows
    }

    fn build_pearson(&self) -> Vec<PearsonRow> {
        let mut scopes: Vec<(String, Vec<&FoldReport>)> = vec![(
            "all".into(),
            self.runs.iter().filter(|r| r.mode != TrainMode::Baseline).collect(),
        )];
        for &m in &self.modes {
            scopes.push((m.to_string(), self.runs_of(m)));
        }
        let mut rows = Vec::new();
        for (scope, runs) in scopes {
            let points: Vec<(f64, f64, f64, f64)> = runs
                .iter()
                .flat_map(|r| r.epochs.iter())
                .filter_map(|e| e.test_acc.map(|acc| (e.loss_activity, e.loss_domain, e.loss_total, acc)))
                .collect();
            let acc: Vec<f64> = points.iter().map(|p| p.3).collect();
            for (component, xs) in [
                ("L_a", points.iter().map(|p| p.0).collect::<Vec<_>>()),
                ("L_d", points.iter().map(|p| p.1).collect()),
                ("L_k", points.iter().map(|p| p.2).collect()),
            ] {
                let (r, p, note) = match pearson(&xs, &acc) {
                    Ok((r, p)) => (Some(r), Some(p), None),
                    Err(e) => (None, None, Some(e.to_string())),
                };
                rows.push(PearsonRow {
                    scope: scope.clone(),
                    component: component.into(),
                    n: xs.len(),
                    r,
                    p,
                    note,
                });
            }
        }
        rows
    }

    fn build_confusion(&self) -> Vec<ConfusionEntry> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            let runs = self.runs_of(mode);
            let Some(first) = runs.first() else { continue };
            for (gi, g) in first.evaluations.iter().enumerate() {
                let mut total: Option<Evaluation> = None;
                for r in &runs {
                    let e = Evaluation {
                        accuracy: r.evaluations[gi].accuracy,
                        confusion: r.evaluations[gi].confusion.clone(),
                    };
                    total = Some(match total {
                        Some(t) => t.merge(&e),
                        None => e,
                    });
                }
                let t = total.expect("at least one run");
                out.push(ConfusionEntry {
                    mode,
                    graph: g.graph.clone(),
                    confusion: t.confusion,
                    accuracy: t.accuracy,
                });
            }
        }
        out
    }

    /// Headline row of `mode`.
    pub fn headline(&self, mode: TrainMode) -> Option<&MethodRow> {
        self.summary.iter().find(|r| r.mode == mode && r.graph.is_none())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let r: ExperimentReport = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if r.schema_version != REPORT_SCHEMA {
            return Err(format!("unsupported report schema {}", r.schema_version));
        }
        Ok(r)
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let cols = header.len();
    let mut w = vec![0; cols];
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (i, c) in row.iter().enumerate() {
            w[i] = w[i].max(c.chars().count());
        }
    }
    let line = |out: &mut String, row: &[String]| {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let pad = w[i] - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        writeln!(out, "| {} |", cells.join(" | ")).unwrap();
    };
    line(out, header);
    let rule: Vec<String> = w.iter().map(|&n| "-".repeat(n + 2)).collect();
    writeln!(out, "|{}|", rule.join("|")).unwrap();
    for row in rows {
        line(out, row);
    }
}

/// Plain-text rendering: accuracy table, per-run rows, correlations and
/// confusion grids.
pub fn render_text(r: &ExperimentReport) -> String {
    let mut out = String::new();
    writeln!(out, "Dataset: {}  (report schema {})", r.dataset, r.schema_version).unwrap();
    writeln!(out, "\nAccuracy (%) per held-out cluster\n").unwrap();
    let mut header = vec!["Method".to_string()];
    header.extend(r.folds.iter().cloned());
    header.extend(["Average".to_string(), "Std".to_string()]);
    let rows: Vec<Vec<String>> = r
        .summary
        .iter()
        .map(|m| {
            let mut row = vec![m.label.clone()];
            row.extend(m.per_fold.iter().map(|&v| pct(v)));
            row.extend([pct(m.mean), pct(m.std)]);
            row
        })
        .collect();
    table(&mut out, &header, &rows);

    writeln!(out, "\nRuns (fold × mode)\n").unwrap();
    let header: Vec<String> = ["Fold", "Mode", "Accuracy", "Per graph", "Final L_a", "Final train acc"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = r
        .folds
        .iter()
        .flat_map(|f| r.modes.iter().filter_map(move |&m| r.run(f, m)))
        .map(|run| {
            let per: Vec<String> = run
                .evaluations
                .iter()
                .map(|e| format!("{}={}", e.graph.chars().next().unwrap_or('?'), pct(e.accuracy)))
                .collect();
            let last = run.epochs.last();
            vec![
                run.fold.clone(),
                run.mode.to_string(),
                pct(run.accuracy),
                per.join(" "),
                last.map_or("-".into(), |e| format!("{:.4}", e.loss_activity)),
                last.map_or("-".into(), |e| pct(e.train_acc)),
            ]
        })
        .collect();
    table(&mut out, &header, &rows);

    writeln!(out, "\nLoss / held-out accuracy correlation (per-epoch points)\n").unwrap();
    let header: Vec<String> = ["Scope", "Loss", "Pearson's r", "p-value", "n"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = r
        .pearson
        .iter()
        .map(|p| {
            vec![
                p.scope.clone(),
                p.component.clone(),
                p.r.map_or_else(|| p.note.clone().unwrap_or_default(), |v| format!("{v:.3}")),
                p.p.map_or("-".into(), |v| format!("{v:.3e}")),
                p.n.to_string(),
            ]
        })
        .collect();
    table(&mut out, &header, &rows);

    for c in &r.confusion {
        writeln!(out, "\nConfusion matrix: {} evaluated with {} (rows = true, accuracy {}%)\n", c.mode.title(), c.graph, pct(c.accuracy)).unwrap();
        out.push_str(&confusion_grid(&c.confusion, &r.activity_names));
    }
    out
}

/// Text grid with row and column indices; the legend maps indices to names.
pub fn confusion_grid(m: &[Vec<usize>], names: &[String]) -> String {
    let w = m.iter().flatten().map(|v| v.to_string().len()).max().unwrap_or(1).max(m.len().to_string().len());
    let mut out = String::new();
    write!(out, "{:>w$} ", "").unwrap();
    for j in 0..m.len() {
        write!(out, " {j:>w$}").unwrap();
    }
    out.push('\n');
    for (i, row) in m.iter().enumerate() {
        write!(out, "{i:>w$} ").unwrap();
        for v in row {
            write!(out, " {v:>w$}").unwrap();
        }
        writeln!(out, "   {}", names.get(i).map_or("", String::as_str)).unwrap();
    }
    out
}

/// Row-normalized heat map of a confusion matrix.
pub fn confusion_svg(m: &[Vec<usize>], names: &[String], title: &str) -> String {
    let n = m.len().max(1);
    let cell = 28;
    let left = 30 + 7 * names.iter().map(|s| s.len()).max().unwrap_or(0).min(40);
    let top = 50;
    let (w, h) = (left + n * cell + 20, top + n * cell + 30);
    let esc = |s: &str| s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<text x="{left}" y="20" font-size="13">{}</text>"#, esc(title)).unwrap();
    for (i, row) in m.iter().enumerate() {
        let total: usize = row.iter().sum();
        let y = top + i * cell;
        let name: String = names.get(i).map_or(String::new(), |s| s.chars().take(40).collect());
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{i}: {}</text>"#, left - 6, y + cell / 2 + 4, esc(&name)).unwrap();
        for (j, &v) in row.iter().enumerate() {
            let frac = if total == 0 { 0.0 } else { v as f64 / total as f64 };
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let x = left + j * cell;
            writeln!(s, r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="#ccc"/>"##).unwrap();
            if v > 0 {
                let color = if frac > 0.5 { "white" } else { "black" };
                writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" fill="{color}">{v}</text>"#, x + cell / 2, y + cell / 2 + 4).unwrap();
            }
        }
    }
    for j in 0..m.len() {
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{j}</text>"#, left + j * cell + cell / 2, top - 6).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}">predicted →</text>"#, left, top + n * cell + 20).unwrap();
    s.push_str("</svg>\n");
    s
}
