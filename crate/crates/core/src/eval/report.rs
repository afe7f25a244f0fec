use std::fmt::Write as _;
use std::path::Path;

use super::{ConfusionMatrix, EvalError, Metrics, MtsCdf};
use crate::dataset::QualityLabel;

/// Mask-size cut points that separate the grades of the reference corpus.
pub const CDF_PROBES: [usize; 2] = [1513, 2160];

const CLASS_COLORS: [&str; 3] = ["#2a7f3f", "#d08a1e", "#b3262e"];

fn metrics_csv(m: &Metrics) -> String {
    let mut s = String::from("metric,value\n");
    let mut row = |k: &str, v: f64| writeln!(s, "{k},{v:?}").unwrap();
    row("acc", m.acc);
    row("macro_p", m.macro_p);
    row("macro_r", m.macro_r);
    row("macro_f", m.macro_f);
    for c in QualityLabel::ALL {
        let n = c.name().to_lowercase();
        row(&format!("p_{n}"), m.precision[c.index()]);
        row(&format!("r_{n}"), m.recall[c.index()]);
        row(&format!("f_{n}"), m.f[c.index()]);
    }
    s
}

fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut s = String::from("true,Good,Usable,Reject\n");
    for c in QualityLabel::ALL {
        let r = cm.counts[c.index()];
        writeln!(s, "{},{},{},{}", c.name(), r[0], r[1], r[2]).unwrap();
    }
    s
}

/// Step points of every non-empty class: each observed size `x` contributes
/// `t = x + 1`, where the CDF jumps, plus the fixed probes and `t = 0`.
fn cdf_points(cdf: &MtsCdf) -> Vec<usize> {
    let mut ts: Vec<usize> = vec![0];
    ts.extend(CDF_PROBES);
    for c in QualityLabel::ALL {
        ts.extend(cdf.sizes(c).iter().map(|&x| x + 1));
    }
    ts.sort_unstable();
    ts.dedup();
    ts
}

fn mts_cdf_csv(cdf: &MtsCdf) -> String {
    let ts = cdf_points(cdf);
    let mut s = String::from("t,class,value\n");
    for c in QualityLabel::ALL {
        if cdf.sizes(c).is_empty() {
            continue;
        }
        for &t in &ts {
            let v = cdf.cdf(c, t as f64).expect("non-empty class");
            writeln!(s, "{t},{},{v:?}", c.name()).unwrap();
        }
    }
    s
}

/// Per-class count, quartiles, median and the CDF at the probe sizes.
pub fn mts_stats_csv(cdf: &MtsCdf) -> String {
    let mut s = String::from("class,count,q25,median,q75");
    for p in CDF_PROBES {
        write!(s, ",cdf_{p}").unwrap();
    }
    s.push('\n');
    for c in QualityLabel::ALL {
        let n = cdf.sizes(c).len();
        if n == 0 {
            writeln!(s, "{},0,,,{}", c.name(), ",".repeat(CDF_PROBES.len())).unwrap();
            continue;
        }
        let q = |p| cdf.quantile(c, p).expect("non-empty class");
        write!(s, "{},{n},{},{:?},{}", c.name(), q(0.25), cdf.median(c).unwrap(), q(0.75)).unwrap();
        for p in CDF_PROBES {
            write!(s, ",{:?}", cdf.cdf(c, p as f64).unwrap()).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn confusion_svg(cm: &ConfusionMatrix) -> String {
    let cell = 80;
    let (ox, oy) = (110, 60);
    let side = ox + 3 * cell + 20;
    let max = cm.counts.iter().flatten().copied().max().unwrap_or(0).max(1);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{side}" height="{}" font-family="sans-serif" font-size="13">"#,
        oy + 3 * cell + 50
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">predicted</text>"#, ox + 3 * cell / 2).unwrap();
    for c in QualityLabel::ALL {
        let i = c.index();
        let mid = i * cell + cell / 2;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ox + mid, oy - 8, c.name()).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, ox - 8, oy + mid + 4, c.name()).unwrap();
    }
    for t in 0..3 {
        for p in 0..3 {
            let v = cm.counts[t][p];
            let shade = 255 - (v * 200 / max) as u8;
            let fg = if shade < 140 { "#ffffff" } else { "#000000" };
            let (x, y) = (ox + p * cell, oy + t * cell);
            writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="#444"/>"##
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{fg}">{v}</text>"#,
                x + cell / 2,
                y + cell / 2 + 5
            )
            .unwrap();
        }
    }
    writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">true</text>"#, oy + 3 * cell / 2, oy + 3 * cell / 2).unwrap();
    s.push_str("</svg>\n");
    s
}

pub fn mts_cdf_svg(cdf: &MtsCdf) -> String {
    let (w, h) = (480.0, 300.0);
    let (ml, mr, mt, mb) = (50.0, 110.0, 20.0, 40.0);
    let ts = cdf_points(cdf);
    let tmax = ts.last().copied().unwrap_or(1).max(1) as f64;
    let px = |t: f64| ml + t / tmax * (w - ml - mr);
    let py = |v: f64| mt + (1.0 - v) * (h - mt - mb);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        s,
        r##"<path d="M{ml} {mt} L{ml} {b} L{r} {b}" fill="none" stroke="#000"/>"##,
        b = py(0.0),
        r = px(tmax)
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">|M_TS|</text>"#, px(tmax / 2.0), h - 8.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">1</text>"#, ml - 4.0, py(1.0) + 4.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, ml - 4.0, py(0.0) + 4.0).unwrap();
    for p in CDF_PROBES.iter().map(|&p| p as f64).filter(|&p| p <= tmax) {
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{mt}" x2="{x:.2}" y2="{}" stroke="#999" stroke-dasharray="4 3"/>"##,
            py(0.0),
            x = px(p)
        )
        .unwrap();
    }
    for c in QualityLabel::ALL {
        if cdf.sizes(c).is_empty() {
            continue;
        }
        let mut d = String::new();
        let mut prev = 0.0;
        for (k, &t) in ts.iter().enumerate() {
            let v = cdf.cdf(c, t as f64).expect("non-empty class");
            let x = px(t as f64);
            if k == 0 {
                write!(d, "M{x:.2} {:.2}", py(v)).unwrap();
            } else {
                write!(d, " L{x:.2} {:.2} L{x:.2} {:.2}", py(prev), py(v)).unwrap();
            }
            prev = v;
        }
        let color = CLASS_COLORS[c.index()];
        writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#).unwrap();
        let ly = mt + 18.0 * (c.index() as f64 + 1.0);
        writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{}</text>"#,
            w - mr + 12.0,
            c.name()
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `metrics.csv`, `confusion.csv`, `mts_cdf.csv`, `confusion.svg`
/// and `mts_cdf.svg` into `out_dir`.
pub fn render_report(m: &Metrics, cm: &ConfusionMatrix, cdf: &MtsCdf, out_dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("metrics.csv"), metrics_csv(m))?;
    std::fs::write(out_dir.join("confusion.csv"), confusion_csv(cm))?;
    std::fs::write(out_dir.join("mts_cdf.csv"), mts_cdf_csv(cdf))?;
    std::fs::write(out_dir.join("confusion.svg"), confusion_svg(cm))?;
    std::fs::write(out_dir.join("mts_cdf.svg"), mts_cdf_svg(cdf))?;
    Ok(())
}
