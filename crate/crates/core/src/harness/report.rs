use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{ChordalRow, ErrorRow, ExperimentReport};
use crate::error::{Error, Result};
use crate::scene::ScenarioTag;

const ERROR_HEADER: [&str; 7] = ["scenario", "scnr_db", "err_namf_m", "err_cnn_m", "err_cnn_fsl_m", "gain", "gain_fsl"];
const CHORDAL_HEADER: [&str; 4] = ["scenario", "distance_raw", "distance_normalized", "gain_at_top_scnr"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(0, format!("{other:?}")),
    }
}

pub fn errors_csv(rows: &[ErrorRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ERROR_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.scnr_db.to_string(),
            r.err_namf_m.to_string(),
            r.err_cnn_m.to_string(),
            r.err_cnn_fsl_m.to_string(),
            r.gain.to_string(),
            r.gain_fsl.to_string(),
        ])
        .map_err(csv_err)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
}

pub fn chordal_csv(rows: &[ChordalRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CHORDAL_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.distance_raw.to_string(),
            r.distance_normalized.to_string(),
            r.gain_at_top_scnr.to_string(),
        ])
        .map_err(csv_err)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
}

fn field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<f64> {
    let s = rec.get(i).ok_or_else(|| Error::format(line, format!("missing column {i}")))?;
    s.parse().map_err(|_| Error::format(line, format!("bad number `{s}`")))
}

/// Parses `errors.csv` content; offsets in errors are line numbers.
pub fn parse_errors_csv(text: &str) -> Result<Vec<ErrorRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(ERROR_HEADER) {
        return Err(Error::format(1, "unexpected errors.csv header"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i as u64 + 2;
        out.push(ErrorRow {
            scenario: rec.get(0).unwrap_or_default().to_string(),
            scnr_db: field(&rec, 1, line)?,
            err_namf_m: field(&rec, 2, line)?,
            err_cnn_m: field(&rec, 3, line)?,
            err_cnn_fsl_m: field(&rec, 4, line)?,
            gain: field(&rec, 5, line)?,
            gain_fsl: field(&rec, 6, line)?,
        });
    }
    Ok(out)
}

pub fn parse_chordal_csv(text: &str) -> Result<Vec<ChordalRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CHORDAL_HEADER) {
        return Err(Error::format(1, "unexpected chordal.csv header"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i as u64 + 2;
        out.push(ChordalRow {
            scenario: rec.get(0).unwrap_or_default().to_string(),
            distance_raw: field(&rec, 1, line)?,
            distance_normalized: field(&rec, 2, line)?,
            gain_at_top_scnr: field(&rec, 3, line)?,
        });
    }
    Ok(out)
}

const SERIES: [(&str, &str); 3] = [("NAMF cell midpoint", "#444444"), ("CNN", "#1f77b4"), ("CNN + FSL", "#d62728")];

/// Line plot of average error versus SCNR for one scenario, log-scaled in
/// error, with one polyline per estimator.
pub fn aed_svg(scenario: &str, rows: &[&ErrorRow]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let mut rows: Vec<&ErrorRow> = rows.to_vec();
    rows.sort_by(|a, b| a.scnr_db.total_cmp(&b.scnr_db));
    let series: Vec<Vec<f64>> = vec![
        rows.iter().map(|r| r.err_namf_m).collect(),
        rows.iter().map(|r| r.err_cnn_m).collect(),
        rows.iter().map(|r| r.err_cnn_fsl_m).collect(),
    ];
    let positive = series.iter().flatten().copied().filter(|v| *v > 0.0 && v.is_finite());
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (1.0, 10.0) };
    let y0 = lo.log10().floor();
    let y1 = hi.log10().ceil().max(y0 + 1.0);
    let x0 = rows.first().map_or(0.0, |r| r.scnr_db);
    let x1 = rows.last().map_or(1.0, |r| r.scnr_db).max(x0 + 1.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |v: f64| top + (1.0 - (v.max(10f64.powf(y0)).log10() - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Scenario {scenario}: average Euclidean error vs SCNR</text>"#,
        w / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for decade in (y0 as i32)..=(y1 as i32) {
        for m in [1.0, 2.0, 5.0] {
            let v = m * 10f64.powi(decade);
            if v < 10f64.powf(y0) || v > 10f64.powf(y1) {
                continue;
            }
            let y = py(v);
            let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, left + pw);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v}</text>"#, left - 6.0, y + 4.0);
        }
    }
    for r in &rows {
        let x = px(r.scnr_db);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#eeeeee"/>"##, top + ph);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 18.0, r.scnr_db);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">SCNR (dB)</text>"#, left + pw / 2.0, h - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">AED (m)</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (k, ((label, color), values)) in SERIES.iter().zip(&series).enumerate() {
        let points: Vec<String> = rows
            .iter()
            .zip(values)
            .map(|(r, &v)| format!("{:.2},{:.2}", px(r.scnr_db), py(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{label}</title></polyline>"#,
            points.join(" ")
        );
        let ly = top + 16.0 + 16.0 * k as f64;
        let lx = left + pw - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{label}</text>"#, lx + 26.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn summary_text(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "top SCNR: {} dB", report.top_scnr_db);
    match report.spearman {
        Some(rho) => {
            let _ = writeln!(s, "spearman(chordal distance, gain at top SCNR): {rho:.6}");
        }
        None => {
            let _ = writeln!(s, "spearman(chordal distance, gain at top SCNR): undefined");
        }
    }
    let (better, total) = report.fsl_improvements();
    let _ = writeln!(s, "fine-tuning improved gain on {better} of {total} displacements at top SCNR");
    if let Some(change) = report.matched_fsl_change() {
        let _ = writeln!(s, "matched-scenario error change after fine-tuning: {:+.2}%", 100.0 * change);
    }
    let _ = writeln!(s, "quantization floor of the central cell: {:.3} m", report.quantization_floor_m);
    if let Some(o) = report.row(ScenarioTag::O.as_str(), report.top_scnr_db) {
        let _ = writeln!(
            s,
            "matched case at top SCNR: namf {:.3} m, cnn {:.3} m, gain {:.4}",
            o.err_namf_m, o.err_cnn_m, o.gain
        );
    }
    let mut fsl_ratio = Vec::new();
    for r in report.errors.iter().filter(|r| r.scnr_db == report.top_scnr_db) {
        if r.scenario != ScenarioTag::O.as_str() && r.gain.is_finite() && r.gain > 0.0 {
            fsl_ratio.push(r.gain_fsl / r.gain);
        }
    }
    if !fsl_ratio.is_empty() {
        let mean = fsl_ratio.iter().sum::<f64>() / fsl_ratio.len() as f64;
        let _ = writeln!(s, "mean gain ratio after/before fine-tuning at top SCNR: {mean:.4}");
    }
    for (scnr, loss) in &report.train_loss {
        let _ = writeln!(s, "final training loss at {scnr} dB: {loss:.6}");
    }
    s
}

/// Writes `errors.csv`, `chordal.csv`, `summary.txt` and one
/// `aed_<scenario>.svg` per displaced scenario into `out_dir`. Files are
/// first written under temporary names and renamed once all succeed.
pub fn emit_report(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut files: Vec<(String, String)> = vec![
        ("errors.csv".into(), errors_csv(&report.errors)?),
        ("chordal.csv".into(), chordal_csv(&report.chordal)?),
        ("summary.txt".into(), summary_text(report)),
    ];
    let mut scenarios: Vec<&str> = Vec::new();
    for r in &report.errors {
        if r.scenario != ScenarioTag::O.as_str() && !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
    }
    for name in scenarios {
        let rows: Vec<&ErrorRow> = report.errors.iter().filter(|r| r.scenario == name).collect();
        files.push((format!("aed_{name}.svg"), aed_svg(name, &rows)));
    }
    let mut staged = Vec::new();
    for (name, body) in &files {
        let tmp = out_dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, body) {
            for t in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(e.into());
        }
        staged.push(tmp);
    }
    let mut written = Vec::new();
    for ((name, _), tmp) in files.iter().zip(staged) {
        let dest = out_dir.join(name);
        fs::rename(&tmp, &dest)?;
        written.push(dest);
    }
    Ok(written)
}
