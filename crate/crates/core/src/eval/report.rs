//! CSV tables and SVG plots for a metrics report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::score::{CategoryMetrics, CellKey, MetricsReport, Ratio};
use super::EvalError;
use crate::scenarios::Category;

const BAR_COLORS: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

fn decimal(r: &Ratio) -> String {
    r.value().map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, EvalError> {
    csv::Writer::from_path(path).map_err(|e| EvalError::Report(format!("{}: {e}", path.display())))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<(), EvalError> {
    w.flush().map_err(|e| EvalError::io(path, e))
}

fn row<const N: usize>(w: &mut csv::Writer<std::fs::File>, fields: [&str; N]) -> Result<(), EvalError> {
    w.write_record(fields).map_err(|e| EvalError::Report(e.to_string()))
}

fn probe_str(k: &CellKey) -> &str {
    k.probe.as_deref().unwrap_or("")
}

/// Writes `accuracy.csv`, `distribution.csv`, `breakdown.csv`,
/// `confusion_<category>.csv` and `plots/*.svg` under `out_dir`. Returns the
/// written paths in a fixed order.
pub fn render_report(metrics: &MetricsReport, out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(out_dir.join("plots")).map_err(|e| EvalError::io(out_dir, e))?;
    let mut written = Vec::new();

    // Every category appears per model, with zero counts when absent.
    let path = out_dir.join("accuracy.csv");
    let mut w = csv_writer(&path)?;
    row(&mut w, ["model", "category", "probe", "correct", "total", "accuracy"])?;
    for model in metrics.models() {
        for category in Category::ALL {
            let acc = metrics
                .get(&model, category)
                .map(|m| m.accuracy)
                .unwrap_or(Ratio::new(0, 0));
            row(
                &mut w,
                [&model, category.as_str(), "", &acc.num.to_string(), &acc.den.to_string(), &decimal(&acc)],
            )?;
        }
        for (k, m) in metrics.cells.iter().filter(|(k, _)| k.model == model && k.probe.is_some()) {
            let acc = m.accuracy;
            row(
                &mut w,
                [&model, k.category.as_str(), probe_str(k), &acc.num.to_string(), &acc.den.to_string(), &decimal(&acc)],
            )?;
        }
    }
    finish(w, &path)?;
    written.push(path);

    let path = out_dir.join("distribution.csv");
    let mut w = csv_writer(&path)?;
    row(&mut w, ["model", "category", "probe", "response", "count", "total", "share"])?;
    for (k, m) in &metrics.cells {
        for label in &m.confusion.cols {
            let r = m.distribution[label];
            row(
                &mut w,
                [&k.model, k.category.as_str(), probe_str(k), label, &r.num.to_string(), &r.den.to_string(), &decimal(&r)],
            )?;
        }
    }
    finish(w, &path)?;
    written.push(path);

    let path = out_dir.join("breakdown.csv");
    let mut w = csv_writer(&path)?;
    row(&mut w, ["model", "category", "probe", "level", "frame_count", "correct", "total", "accuracy"])?;
    for (k, m) in &metrics.cells {
        for b in &m.breakdown {
            row(
                &mut w,
                [
                    &k.model,
                    k.category.as_str(),
                    probe_str(k),
                    &b.level,
                    &b.frame_count.to_string(),
                    &b.accuracy.num.to_string(),
                    &b.accuracy.den.to_string(),
                    &decimal(&b.accuracy),
                ],
            )?;
        }
    }
    finish(w, &path)?;
    written.push(path);

    for category in present_categories(metrics) {
        let path = out_dir.join(format!("confusion_{category}.csv"));
        let mut w = csv_writer(&path)?;
        row(&mut w, ["model", "probe", "truth", "response", "count", "truth_total"])?;
        for (k, m) in metrics.cells.iter().filter(|(k, _)| k.category == category) {
            let c = &m.confusion;
            for (i, truth) in c.rows.iter().enumerate() {
                let total = c.row_sum(i).to_string();
                for (j, resp) in c.cols.iter().enumerate() {
                    row(&mut w, [&k.model, probe_str(k), truth, resp, &c.counts[i][j].to_string(), &total])?;
                }
            }
        }
        finish(w, &path)?;
        written.push(path);
    }

    let path = out_dir.join("plots").join("accuracy.svg");
    write_text(&path, &accuracy_svg(metrics))?;
    written.push(path);
    for category in present_categories(metrics) {
        let cells: Vec<(&CellKey, &CategoryMetrics)> =
            metrics.cells.iter().filter(|(k, _)| k.category == category).collect();
        let path = out_dir.join("plots").join(format!("confusion_{category}.svg"));
        write_text(&path, &confusion_svg(category, &cells))?;
        written.push(path);
    }
    Ok(written)
}

fn write_text(path: &Path, text: &str) -> Result<(), EvalError> {
    std::fs::write(path, text).map_err(|e| EvalError::io(path, e))
}

fn present_categories(metrics: &MetricsReport) -> Vec<Category> {
    let mut cats: Vec<Category> = metrics
        .cells
        .iter()
        .filter(|(_, m)| m.accuracy.den > 0)
        .map(|(k, _)| k.category)
        .collect();
    cats.sort();
    cats.dedup();
    cats
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bars: one group per category with data, one bar per model.
fn accuracy_svg(metrics: &MetricsReport) -> String {
    let cats = present_categories(metrics);
    let models = metrics.models();
    let (plot_h, top, left) = (240.0, 40.0, 50.0);
    let bar_w = 18.0;
    let group_w = bar_w * models.len().max(1) as f64 + 20.0;
    let width = left + group_w * cats.len() as f64 + 20.0 + 160.0;
    let height = top + plot_h + 70.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">Accuracy by category</text>"#);
    for tick in 0..=4 {
        let v = tick as f64 * 0.25;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            width - 170.0,
            left - 4.0,
            y + 4.0
        );
    }
    for (ci, cat) in cats.iter().enumerate() {
        let gx = left + 10.0 + group_w * ci as f64;
        for (mi, model) in models.iter().enumerate() {
            let Some(m) = metrics.get(model, *cat) else { continue };
            let Some(v) = m.accuracy.value() else { continue };
            let h = plot_h * v;
            let x = gx + bar_w * mi as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{} {}: {} ({})</title></rect>"#,
                top + plot_h - h,
                bar_w - 2.0,
                BAR_COLORS[mi % BAR_COLORS.len()],
                escape(model),
                cat,
                decimal(&m.accuracy),
                m.accuracy
            );
        }
        let lx = gx + (group_w - 20.0) / 2.0;
        let ly = top + plot_h + 14.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="end" transform="rotate(-30 {lx:.1} {ly:.1})">{cat}</text>"#
        );
    }
    for (mi, model) in models.iter().enumerate() {
        let y = top + 16.0 * mi as f64;
        let x = width - 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{y:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            BAR_COLORS[mi % BAR_COLORS.len()],
            x + 14.0,
            y + 9.0,
            escape(model)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One heatmap panel per (model, probe) cell, shaded by row share.
fn confusion_svg(category: Category, cells: &[(&CellKey, &CategoryMetrics)]) -> String {
    let cell = 44.0;
    let label_w = 130.0;
    let (rows, cols) = cells
        .first()
        .map(|(_, m)| (m.confusion.rows.len(), m.confusion.cols.len()))
        .unwrap_or((0, 0));
    let panel_w = label_w + cell * cols as f64 + 30.0;
    let panel_h = 60.0 + cell * rows as f64 + 90.0;
    let width = panel_w * cells.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{panel_h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (pi, (k, m)) in cells.iter().enumerate() {
        let ox = panel_w * pi as f64;
        let title = match &k.probe {
            Some(p) => format!("{} / {category} / {p}", k.model),
            None => format!("{} / {category}", k.model),
        };
        let _ = writeln!(s, r#"<text x="{:.1}" y="20" font-size="13">{}</text>"#, ox + 10.0, escape(&title));
        let c = &m.confusion;
        let top = 60.0;
        for (i, truth) in c.rows.iter().enumerate() {
            let total = c.row_sum(i);
            let y = top + cell * i as f64;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{truth}</text>"#,
                ox + label_w - 6.0,
                y + cell / 2.0 + 4.0
            );
            for (j, count) in c.counts[i].iter().enumerate() {
                let share = if total > 0 { *count as f64 / total as f64 } else { 0.0 };
                let shade = (255.0 - 200.0 * share).round() as u8;
                let x = ox + label_w + cell * j as f64;
                let text_fill = if share > 0.6 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    r##"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="#888888"/><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{text_fill}">{count}</text>"##,
                    x + cell / 2.0,
                    y + cell / 2.0 + 4.0
                );
            }
        }
        let ly = top + cell * rows as f64 + 12.0;
        for (j, resp) in c.cols.iter().enumerate() {
            let lx = ox + label_w + cell * j as f64 + cell / 2.0;
            let _ = writeln!(
                s,
                r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="end" transform="rotate(-40 {lx:.1} {ly:.1})">{resp}</text>"#
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::parse::parse_answer;
    use crate::eval::score::{score, EvalRecord};

    fn rec(cat: Category, truth: &str, ans: &str) -> EvalRecord {
        let raw = format!("ANSWER: {ans}");
        EvalRecord {
            scenario_id: "s".into(),
            category: cat,
            frame_count: 3,
            model: "m".into(),
            prompt_hash: "h".into(),
            parsed: parse_answer(&raw, cat),
            raw,
            truth: truth.into(),
            level: "high".into(),
            probe: None,
            latency_secs: 0.0,
            timestamp: 0.0,
        }
    }

    #[test]
    fn traffic_only_report() {
        let recs = vec![rec(Category::Traffic, "traffic", "traffic"), rec(Category::Traffic, "no_traffic", "traffic")];
        let m = score(&recs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = render_report(&m, dir.path()).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.strip_prefix(dir.path()).unwrap().display().to_string())
            .collect();
        assert!(names.contains(&"confusion_traffic.csv".to_string()));
        assert!(!names.iter().any(|n| n.contains("plane")));
        let acc = std::fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
        assert!(acc.contains("m,traffic,,1,2,0.500000"));
        assert!(acc.contains("m,plane,,0,0,"));
        let conf = std::fs::read_to_string(dir.path().join("confusion_traffic.csv")).unwrap();
        assert!(conf.contains("m,,no_traffic,traffic,1,1"));
    }

    #[test]
    fn deterministic_output() {
        let recs = vec![rec(Category::Planning, "green", "red"), rec(Category::Planning, "blue", "blue")];
        let m = score(&recs).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = render_report(&m, a.path()).unwrap();
        let fb = render_report(&m, b.path()).unwrap();
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }
}
