//! Text tables, CSV and SVG figures for evaluation reports.
//!
//! SVG cells and bars carry their numeric value in a `data-value` attribute
//! so figures can be checked structurally.

use std::fmt::Write as _;

use crate::metrics::EvalReport;

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

/// Headline metrics and the per-class table.
pub fn metrics_text(title: &str, r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model: {title}");
    let _ = writeln!(s, "balanced_accuracy: {}", r.balanced_accuracy);
    let _ = writeln!(s, "macro_f1: {}", r.macro_f1);
    let _ = writeln!(s, "macro_recall: {}", r.macro_recall);
    let _ = writeln!(s, "recall (micro): {}", r.micro_recall);
    let _ = writeln!(s);
    let width = r.per_class.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(
        s,
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}  {:>9}",
        "class", "recall", "precision", "f1", "support", "predicted"
    );
    for c in &r.per_class {
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>8}  {:>9}",
            c.name, c.recall, c.precision, c.f1, c.support, c.predicted
        );
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

pub fn per_class_csv(r: &EvalReport) -> String {
    let mut s = String::from("class,recall,precision,f1,support,predicted\n");
    for c in &r.per_class {
        let _ = writeln!(s, "{},{},{},{},{},{}", c.name, c.recall, c.precision, c.f1, c.support, c.predicted);
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Row-normalized confusion matrix as a heatmap (rows: true class).
pub fn confusion_svg(r: &EvalReport) -> String {
    let names = &r.confusion.class_names;
    let m = r.confusion.row_normalized();
    let n = names.len();
    let cell = 36.0;
    let margin = 120.0;
    let size = margin + cell * n as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="14" text-anchor="middle">predicted</text>"#, margin + cell * n as f64 / 2.0);
    for (i, row) in m.iter().enumerate() {
        let y = margin + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            margin - 4.0,
            y + cell / 2.0 + 3.0,
            escape(&names[i])
        );
        for (j, &v) in row.iter().enumerate() {
            let x = margin + cell * j as f64;
            // white to dark blue
            let shade = (255.0 * (1.0 - v)).round() as u8;
            let fill = format!("rgb({shade},{shade},255)");
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" data-row="{i}" data-col="{j}" data-value="{v}"/>"#
            );
            let text = if v > 0.6 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{text}">{:.2}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 3.0,
                v
            );
        }
    }
    for (j, name) in names.iter().enumerate() {
        let x = margin + cell * j as f64 + cell / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="start" transform="rotate(-60 {x} {})">{}</text>"#,
            margin - 4.0,
            margin - 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Per-class recall bars.
pub fn per_class_bar_svg(r: &EvalReport) -> String {
    let n = r.per_class.len();
    let bar = 28.0;
    let gap = 8.0;
    let height = 200.0;
    let left = 40.0;
    let top = 20.0;
    let width = left + (bar + gap) * n as f64 + 20.0;
    let total_h = top + height + 90.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" font-family="sans-serif" font-size="10">"#
    );
    let base = top + height;
    let _ = writeln!(s, r#"<line x1="{left}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, width - 10.0);
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = base - v * height;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, left - 4.0, y + 3.0);
    }
    for (i, c) in r.per_class.iter().enumerate() {
        let x = left + gap + (bar + gap) * i as f64;
        let h = c.recall * height;
        let _ = writeln!(
            s,
            r#"<rect class="bar" x="{x}" y="{}" width="{bar}" height="{h}" fill="steelblue" data-class="{}" data-value="{}"/>"#,
            base - h,
            escape(&c.name),
            c.recall
        );
        let cx = x + bar / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{}" text-anchor="end" transform="rotate(-60 {cx} {})">{}</text>"#,
            base + 12.0,
            base + 12.0,
            escape(&c.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One model's result on one dataset.
pub struct ComparisonEntry<'a> {
    pub dataset: &'a str,
    pub model: &'a str,
    pub report: &'a EvalReport,
}

/// Models as rows, datasets as column groups of balanced accuracy, F1 and
/// (micro) recall. Missing cells print as `-`.
pub fn comparison_table(entries: &[ComparisonEntry]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for e in entries {
        if !datasets.contains(&e.dataset) {
            datasets.push(e.dataset);
        }
        if !models.contains(&e.model) {
            models.push(e.model);
        }
    }
    let mw = models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
    let col = 10;
    let mut s = String::new();
    let _ = write!(s, "{:<mw$}", "");
    for d in &datasets {
        let _ = write!(s, " | {:^w$}", d, w = 3 * col + 2);
    }
    s.push('\n');
    let _ = write!(s, "{:<mw$}", "model");
    for _ in &datasets {
        let _ = write!(s, " | {:>col$} {:>col$} {:>col$}", "bal. acc", "F1", "recall");
    }
    s.push('\n');
    for m in &models {
        let _ = write!(s, "{m:<mw$}");
        for d in &datasets {
            match entries.iter().find(|e| e.model == *m && e.dataset == *d) {
                Some(e) => {
                    let r = e.report;
                    let _ = write!(
                        s,
                        " | {:>col$} {:>col$} {:>col$}",
                        pct(r.balanced_accuracy),
                        pct(r.macro_f1),
                        pct(r.micro_recall)
                    );
                }
                None => {
                    let _ = write!(s, " | {:>col$} {:>col$} {:>col$}", "-", "-", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Machine-readable form of [`comparison_table`].
pub fn comparison_csv(entries: &[ComparisonEntry]) -> String {
    let mut s = String::from("dataset,model,balanced_accuracy,macro_f1,recall\n");
    for e in entries {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            e.dataset, e.model, e.report.balanced_accuracy, e.report.macro_f1, e.report.micro_recall
        );
    }
    s
}
