use std::io::Write;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Writes an SVG with one labelled point per row of `coords` and a blue
/// dotted segment for every `(a, b)` in `links` (row indices).
pub fn plot_pairs<W: Write>(
    coords: ArrayView2<'_, f64>,
    labels: &[String],
    links: &[(usize, usize)],
    mut out: W,
) -> Result<()> {
    let n = coords.nrows();
    if coords.ncols() != 2 || labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for a {}x{} coordinate matrix",
            labels.len(),
            n,
            coords.ncols()
        )));
    }
    if let Some(&(a, b)) = links.iter().find(|&&(a, b)| a >= n || b >= n) {
        return Err(Error::Dimension(format!(
            "link ({a}, {b}) outside {n} points"
        )));
    }

    let bounds = |c: usize| {
        coords
            .column(c)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (x_lo, x_hi) = bounds(0);
    let (y_lo, y_hi) = bounds(1);
    let span = |lo: f64, hi: f64| if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let (x_span, y_span) = (span(x_lo, x_hi), span(y_lo, y_hi));
    let px = |i: usize| {
        let x = MARGIN + (coords[[i, 0]] - x_lo) / x_span * (WIDTH - 2.0 * MARGIN);
        // screen y grows downwards
        let y = HEIGHT - MARGIN - (coords[[i, 1]] - y_lo) / y_span * (HEIGHT - 2.0 * MARGIN);
        (x, y)
    };

    writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#
    )?;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(
        out,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )?;
    writeln!(
        out,
        r#"<g id="pairs" stroke="blue" stroke-width="1.2" stroke-dasharray="3 3">"#
    )?;
    for &(a, b) in links {
        let ((x1, y1), (x2, y2)) = (px(a), px(b));
        writeln!(
            out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#
        )?;
    }
    writeln!(out, "</g>")?;
    writeln!(
        out,
        r#"<g id="tokens" font-family="sans-serif" font-size="12">"#
    )?;
    for (i, label) in labels.iter().enumerate() {
        let (x, y) = px(i);
        writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="black"/>"#
        )?;
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 5.0,
            y - 5.0,
            escape(label)
        )?;
    }
    writeln!(out, "</g>")?;
    writeln!(out, "</svg>")?;
    Ok(())
}
