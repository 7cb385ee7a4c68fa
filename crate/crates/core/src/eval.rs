//! ROC assembly, summary metrics, and score/curve serialization.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One standardized score for one test vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub trial: usize,
    pub method: String,
    pub label_h1: u8,
    pub score_z: f64,
    pub score_raw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub method: String,
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub auc: f64,
    /// `(fpr level, interpolated tpr)` pairs.
    pub power_at: Vec<(f64, f64)>,
}

pub const SUMMARY_LEVELS: [f64; 3] = [1e-1, 1e-2, 1e-4];

fn sorted_desc(scores: &[f64], what: &str) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Input(format!("no {what} scores")));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite {what} score {bad}")));
    }
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// Empirical ROC: one point per distinct pooled score plus the two infinite
/// sentinels. A score equal to the threshold counts as a detection.
pub fn roc(h0_scores: &[f64], h1_scores: &[f64]) -> Result<RocCurve> {
    let h0 = sorted_desc(h0_scores, "H0")?;
    let h1 = sorted_desc(h1_scores, "H1")?;
    let mut pooled: Vec<f64> = h0.iter().chain(&h1).copied().collect();
    pooled.sort_by(|a, b| b.total_cmp(a));
    pooled.dedup();

    let (n0, n1) = (h0.len() as f64, h1.len() as f64);
    let mut points = Vec::with_capacity(pooled.len() + 2);
    points.push(RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    });
    let (mut i0, mut i1) = (0, 0);
    for &t in &pooled {
        while i0 < h0.len() && h0[i0] >= t {
            i0 += 1;
        }
        while i1 < h1.len() && h1[i1] >= t {
            i1 += 1;
        }
        points.push(RocPoint {
            fpr: i0 as f64 / n0,
            tpr: i1 as f64 / n1,
            threshold: t,
        });
    }
    points.push(RocPoint {
        fpr: 1.0,
        tpr: 1.0,
        threshold: f64::NEG_INFINITY,
    });
    Ok(RocCurve {
        method: String::new(),
        points,
    })
}

pub fn roc_for(method: &str, h0_scores: &[f64], h1_scores: &[f64]) -> Result<RocCurve> {
    let mut c = roc(h0_scores, h1_scores)?;
    c.method = method.to_string();
    Ok(c)
}

/// Trapezoid area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum()
}

/// Linearly interpolated detection rate at false-alarm rate `alpha`.
pub fn power_at_fpr(curve: &RocCurve, alpha: f64) -> f64 {
    let pts = &curve.points;
    let k = pts
        .iter()
        .rposition(|pt| pt.fpr <= alpha)
        .unwrap_or(0);
    if k + 1 >= pts.len() {
        return pts[k].tpr;
    }
    let (a, b) = (pts[k], pts[k + 1]);
    if b.fpr <= a.fpr {
        return a.tpr.max(b.tpr);
    }
    a.tpr + (b.tpr - a.tpr) * (alpha - a.fpr) / (b.fpr - a.fpr)
}

pub fn summary(curves: &[RocCurve]) -> Vec<SummaryRow> {
    curves
        .iter()
        .map(|c| SummaryRow {
            method: c.method.clone(),
            auc: auc(c),
            power_at: SUMMARY_LEVELS.iter().map(|&a| (a, power_at_fpr(c, a))).collect(),
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method,auc,power_at_1e-1,power_at_1e-2,power_at_1e-4\n");
    for r in rows {
        let _ = write!(out, "{},{}", r.method, r.auc);
        for (_, v) in &r.power_at {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn roc_csv(curves: &[RocCurve]) -> String {
    let mut out = String::from("method,fpr,tpr,threshold\n");
    for c in curves {
        for pt in &c.points {
            let _ = writeln!(out, "{},{},{},{}", c.method, pt.fpr, pt.tpr, pt.threshold);
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Static SVG plot of the curves. With `log_fpr`, the horizontal axis spans
/// `[1e-4, 1]` on a log scale.
pub fn roc_svg(curves: &[RocCurve], log_fpr: bool) -> String {
    let (w, h, m) = (480.0, 400.0, 50.0);
    let (pw, ph) = (w - 2.0 * m, h - 2.0 * m);
    let x_of = |fpr: f64| {
        let u = if log_fpr {
            (fpr.max(1e-4).log10() + 4.0) / 4.0
        } else {
            fpr
        };
        m + u * pw
    };
    let y_of = |tpr: f64| h - m - tpr * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let ticks: Vec<(f64, String)> = if log_fpr {
        (0..=4).map(|k| (10f64.powi(k - 4), format!("1e-{}", 4 - k))).collect()
    } else {
        (0..=4).map(|k| (k as f64 / 4.0, format!("{}", k as f64 / 4.0))).collect()
    };
    for (v, label) in &ticks {
        let x = x_of(*v);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{label}</text>"#,
            h - m + 16.0
        );
    }
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{v}</text>"#,
            m - 6.0,
            y_of(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">false-alarm rate</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">detection rate</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|pt| format!("{:.2},{:.2}", x_of(pt.fpr), y_of(pt.tpr)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = m + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="11" fill="{color}" text-anchor="end">{}</text>"#,
            w - m - 6.0,
            xml_escape(&c.method)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `roc.csv`, `roc.svg` and `roc_logfpr.svg` into `dir`.
pub fn render(curves: &[RocCurve], dir: &Path) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::Input("no curves to render".into()));
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("roc.csv"), roc_csv(curves))?;
    fs::write(dir.join("roc.svg"), roc_svg(curves, false))?;
    fs::write(dir.join("roc_logfpr.svg"), roc_svg(curves, true))?;
    Ok(())
}

pub fn scores_csv(records: &[ScoreRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_scores(records: &[ScoreRecord], path: &Path) -> Result<()> {
    fs::write(path, scores_csv(records)?)?;
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: ScoreRecord = rec?;
        if rec.label_h1 > 1 {
            return Err(Error::Parse {
                line: out.len() + 2,
                message: format!("label_h1 must be 0 or 1, got {}", rec.label_h1),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// One ROC per method, in order of first appearance.
pub fn rocs_from_scores(records: &[ScoreRecord]) -> Result<Vec<RocCurve>> {
    let mut methods: Vec<&str> = Vec::new();
    for r in records {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let pick = |label: u8| -> Vec<f64> {
                records
                    .iter()
                    .filter(|r| r.method == m && r.label_h1 == label)
                    .map(|r| r.score_z)
                    .collect()
            };
            roc_for(m, &pick(0), &pick(1))
        })
        .collect()
}

/// Writes `roc.csv`, the SVG plots and `summary.csv` for a score table.
pub fn evaluate_to_dir(records: &[ScoreRecord], dir: &Path) -> Result<Vec<SummaryRow>> {
    let curves = rocs_from_scores(records)?;
    render(&curves, dir)?;
    let rows = summary(&curves);
    fs::write(dir.join("summary.csv"), summary_csv(&rows))?;
    Ok(rows)
}
