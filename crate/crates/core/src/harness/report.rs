use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::{HarnessError, MetricsRecord, MetricsWriter};

/// Files produced by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub table: PathBuf,
    pub plots: Vec<PathBuf>,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the records as CSV to `table` and, when `plot_dir` is given, one
/// SVG line plot per metric.
pub fn emit_report(
    records: &[MetricsRecord],
    table: &Path,
    plot_dir: Option<&Path>,
) -> Result<ReportFiles, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Metric("no metrics to report".into()));
    }
    let file = File::create(table).map_err(io_error(table))?;
    let mut writer = MetricsWriter::new(BufWriter::new(file))?;
    for r in records {
        writer.write(r)?;
    }
    writer.into_inner()?;

    let mut plots = Vec::new();
    if let Some(dir) = plot_dir {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
        let series: [(&str, fn(&MetricsRecord) -> f64); 2] =
            [("train_metric", |r| r.train_metric), ("test_metric", |r| r.test_metric)];
        for (name, get) in series {
            let path = dir.join(format!("{name}.svg"));
            let points: Vec<(f64, f64)> = records.iter().map(|r| (r.epoch as f64, get(r))).collect();
            std::fs::write(&path, line_plot_svg(name, &points)).map_err(io_error(&path))?;
            plots.push(path);
        }
    }
    Ok(ReportFiles {
        table: table.to_path_buf(),
        plots,
    })
}

/// A minimal SVG line plot with labeled axis ranges.
pub fn line_plot_svg(title: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 48.0;
    let range = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x0, x1) = range(&mut points.iter().map(|p| p.0));
    let (y0, y1) = range(&mut points.iter().map(|p| p.1));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {PAD} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(svg, r#"<text x="{PAD}" y="{}" text-anchor="middle">{x0}</text>"#, H - PAD + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x1}</text>"#, W - PAD, H - PAD + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y0:.4}</text>"#, PAD - 4.0, H - PAD);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y1:.4}</text>"#, PAD - 4.0, PAD + 4.0);
    let path: Vec<String> = points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        path.join(" ")
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::read_metrics;

    fn records(n: u64) -> Vec<MetricsRecord> {
        (1..=n)
            .map(|epoch| MetricsRecord {
                epoch,
                train_metric: 0.1 * epoch as f64,
                test_metric: 0.7,
                wall_time: 1.5,
                ensemble_size: 500,
            })
            .collect()
    }

    #[test]
    fn table_rows_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let table = dir.path().join("m.csv");
        let files = emit_report(&records(3), &table, Some(&dir.path().join("plots"))).unwrap();
        let text = std::fs::read_to_string(&table).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_metrics(text.as_bytes()).unwrap(), records(3));
        assert_eq!(files.plots.len(), 2);
        let svg = std::fs::read_to_string(&files.plots[0]).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }

    #[test]
    fn empty_stream_and_bad_path() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], &dir.path().join("m.csv"), None).is_err());
        assert!(emit_report(&records(1), &dir.path().join("missing/m.csv"), None).is_err());
    }

    #[test]
    fn single_point_plot_is_finite() {
        let svg = line_plot_svg("x", &[(1.0, 2.0)]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
