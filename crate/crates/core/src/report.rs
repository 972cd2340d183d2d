//! CSV tables and small SVG line plots of sweep results.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::harness::{ConvergenceRecord, Experiment};

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Header for records carrying `lam_cols` eigenvalue errors.
pub fn csv_header(lam_cols: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "experiment",
        "eps",
        "model",
        "dofs_limit",
        "dofs_sieve",
        "err_l2",
        "err_h1b",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=lam_cols).map(|i| format!("lam_err_{i}")));
    h.extend(
        ["heat_sup_err", "passage_ratio", "cg_iters", "wall_ms", "config_hash"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub fn csv_row(r: &ConvergenceRecord, lam_cols: usize, config_hash: &str) -> Vec<String> {
    let mut row = vec![
        r.experiment.clone(),
        num(r.eps),
        r.model.to_string(),
        r.dofs_limit.to_string(),
        r.dofs_sieve.to_string(),
        opt(r.err_l2),
        opt(r.err_h1b),
    ];
    row.extend((0..lam_cols).map(|i| r.lam_err.get(i).map(|v| num(*v)).unwrap_or_default()));
    row.push(opt(r.heat_sup_err));
    row.push(opt(r.passage_ratio));
    row.push(r.cg_iters.to_string());
    row.push(format!("{:.3}", r.wall_ms));
    row.push(config_hash.to_string());
    row
}

/// One row per record of every experiment, in the given order.
pub fn write_csv(path: &Path, experiments: &[Experiment], lam_cols: usize, config_hash: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(lam_cols))?;
    for e in experiments {
        for r in &e.records {
            w.write_record(csv_row(r, lam_cols, config_hash))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Log-log polyline plot of `(x, y)` series; non-positive points are left out.
pub fn svg_loglog(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 8] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
    ];
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .filter(|&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    if pts.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">no positive data</text>"#,
            W / 2.0,
            H / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }
    let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |a, p| (a.0.min(p.0), a.1.max(p.0), a.2.min(p.1), a.3.max(p.1)),
    );
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let _ = writeln!(
        out,
        r#"<polyline points="{PAD},{PAD} {PAD},{} {},{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    // axis end labels
    for (label, x, y, anchor) in [
        (format!("{:.3e}", 10f64.powf(x0)), sx(x0), H - PAD + 18.0, "start"),
        (format!("{:.3e}", 10f64.powf(x1)), sx(x1), H - PAD + 18.0, "end"),
        (format!("{:.3e}", 10f64.powf(y0)), PAD - 4.0, sy(y0), "end"),
        (format!("{:.3e}", 10f64.powf(y1)), PAD - 4.0, sy(y1) + 10.0, "end"),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{label}</text>"#
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 16.0,
        escape(x_label)
    );
    for (i, (name, data)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let line: Vec<String> = data
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x.log10()), sy(y.log10())))
            .collect();
        if !line.is_empty() {
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
        }
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="12" fill="{color}" text-anchor="end">{}</text>"#,
            W - PAD,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Error-versus-eps series of one experiment.
pub fn experiment_series(e: &Experiment) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out = Vec::new();
    let mut push = |name: String, f: &dyn Fn(&ConvergenceRecord) -> Option<f64>| {
        let data: Vec<(f64, f64)> = e.records.iter().filter_map(|r| f(r).map(|v| (r.eps, v))).collect();
        if !data.is_empty() {
            out.push((name, data));
        }
    };
    push("err_l2".into(), &|r| r.err_l2);
    push("err_h1b".into(), &|r| r.err_h1b);
    let lam = e.records.iter().map(|r| r.lam_err.len()).max().unwrap_or(0);
    for i in 0..lam {
        push(format!("lam_err_{}", i + 1), &move |r: &ConvergenceRecord| {
            r.lam_err.get(i).copied()
        });
    }
    push("heat_sup_err".into(), &|r| r.heat_sup_err);
    push("passage_ratio".into(), &|r| r.passage_ratio);
    out
}

/// Writes `<name>.svg` for every experiment into `dir`.
pub fn write_plots(dir: &Path, experiments: &[Experiment]) -> Result<()> {
    for e in experiments {
        let svg = svg_loglog(&e.name, "eps", &experiment_series(e));
        std::fs::write(dir.join(format!("{}.svg", e.name)), svg)?;
    }
    Ok(())
}

/// Human-readable trend summary, one line per checked quantity.
pub fn trend_summary(experiments: &[Experiment]) -> String {
    let mut s = String::new();
    for e in experiments {
        for t in &e.trends {
            let _ = writeln!(
                s,
                "{} {} {}: {}",
                if t.passed { "PASS" } else { "FAIL" },
                e.name,
                t.quantity,
                t.detail
            );
        }
    }
    s
}
