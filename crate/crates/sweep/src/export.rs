//! CSV export and SVG heatmaps of a result store.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;
use crate::store::{read_store, CellRecord, StoreContents};

pub const CSV_HEADER: [&str; 8] = ["p", "delta", "n", "point", "ci_low", "ci_high", "n_samples", "seed"];

fn sorted_cells(store: &StoreContents) -> Vec<&CellRecord> {
    let mut cells: Vec<&CellRecord> = store.cells().collect();
    cells.sort_by(|a, b| a.p.total_cmp(&b.p).then(a.delta.total_cmp(&b.delta)).then(a.n.cmp(&b.n)));
    cells
}

/// Renders one row per cell record, sorted by `(p, delta, n)`. Floats use
/// the shortest representation that parses back to the same value.
pub fn render_csv(store: &StoreContents) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let runtime = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(CSV_HEADER).map_err(runtime)?;
    for c in sorted_cells(store) {
        let e = &c.estimate;
        w.write_record([
            c.p.to_string(),
            c.delta.to_string(),
            c.n.to_string(),
            e.point.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            e.n_samples.to_string(),
            e.seed.to_string(),
        ])
        .map_err(runtime)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn export_csv(store: &Path, out: &Path) -> Result<usize, CliError> {
    let contents = read_store(store)?;
    let text = render_csv(&contents)?;
    std::fs::write(out, &text).map_err(|e| CliError::io(out, e))?;
    Ok(contents.cells().count())
}

pub const PLOT_SIZE: f64 = 800.0;
pub const MARGIN: f64 = 80.0;

/// Three-colour ramp: blue at 0, pale yellow at 1/2, red at 1.
pub fn ramp(v: f64) -> String {
    const STOPS: [(f64, f64, f64); 3] = [(44.0, 123.0, 182.0), (255.0, 255.0, 191.0), (215.0, 25.0, 28.0)];
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let (a, b, t) = if v <= 0.5 { (STOPS[0], STOPS[1], v * 2.0) } else { (STOPS[1], STOPS[2], v * 2.0 - 1.0) };
    let mix = |x: f64, y: f64| (x + (y - x) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Cell edges on `[0, 1]`: midpoints between neighbouring grid values,
/// extended by half a step (clamped) at the ends.
fn edges(values: &[f64]) -> Vec<f64> {
    if values.len() == 1 {
        return vec![0.0, 1.0];
    }
    let mut e = Vec::with_capacity(values.len() + 1);
    e.push((values[0] - (values[1] - values[0]) / 2.0).max(0.0));
    for w in values.windows(2) {
        e.push((w[0] + w[1]) / 2.0);
    }
    let k = values.len();
    e.push((values[k - 1] + (values[k - 1] - values[k - 2]) / 2.0).min(1.0));
    e
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// SVG heatmap of `quantity` over the `(p, delta)` grid at scale `n` (which
/// may be omitted when the store holds a single scale for it).
pub fn render_heatmap(
    store: &StoreContents,
    quantity: &str,
    n: Option<u32>,
    pc: Option<f64>,
) -> Result<String, CliError> {
    let matching: Vec<&CellRecord> = store.cells().filter(|c| c.quantity == quantity).collect();
    if matching.is_empty() {
        return Err(CliError::Validation(format!("store has no records for quantity {quantity:?}")));
    }
    let scales: BTreeSet<u32> = matching.iter().map(|c| c.n).collect();
    let n = match n {
        Some(n) if scales.contains(&n) => n,
        Some(n) => return Err(CliError::Validation(format!("no {quantity} records at n = {n}"))),
        None if scales.len() == 1 => *scales.iter().next().unwrap(),
        None => return Err(CliError::Validation(format!("store holds several scales {scales:?}; pick one with --n"))),
    };
    let cells: Vec<&CellRecord> = matching.into_iter().filter(|c| c.n == n).collect();
    let mut ps: Vec<f64> = cells.iter().map(|c| c.p).collect();
    let mut ds: Vec<f64> = cells.iter().map(|c| c.delta).collect();
    for v in [&mut ps, &mut ds] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let lookup = |p: f64, d: f64| cells.iter().rev().find(|c| c.p == p && c.delta == d);
    let missing: Vec<String> = ps
        .iter()
        .flat_map(|&p| ds.iter().map(move |&d| (p, d)))
        .filter(|&(p, d)| lookup(p, d).is_none())
        .map(|(p, d)| format!("(p={p}, delta={d})"))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Validation(format!("ragged grid, missing cells: {}", missing.join(", "))));
    }

    let (xe, ye) = (edges(&ps), edges(&ds));
    let x = |v: f64| MARGIN + v * PLOT_SIZE;
    let y = |v: f64| MARGIN + (1.0 - v) * PLOT_SIZE;
    let total = PLOT_SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(s, r#"<title>{} at n = {n}</title>"#, escape(quantity));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{total}" height="{total}" fill="white"/>"#);
    for (i, &p) in ps.iter().enumerate() {
        for (j, &d) in ds.iter().enumerate() {
            let v = lookup(p, d).unwrap().estimate.point;
            let _ = writeln!(
                s,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"><title>p={p} delta={d} value={v}</title></rect>"#,
                x(xe[i]),
                y(ye[j + 1]),
                (xe[i + 1] - xe[i]) * PLOT_SIZE,
                (ye[j + 1] - ye[j]) * PLOT_SIZE,
                ramp(v)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{PLOT_SIZE}" height="{PLOT_SIZE}" fill="none" stroke="black"/>"#
    );
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" font-size="14" text-anchor="middle">{}</text>"#, x(v), MARGIN + PLOT_SIZE + 22.0, fmt_num(v));
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" font-size="14" text-anchor="end">{}</text>"#, MARGIN - 8.0, y(v) + 5.0, fmt_num(v));
    }
    let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" font-size="18" text-anchor="middle">p</text>"#, x(0.5), total - 18.0);
    let _ = writeln!(
        s,
        r#"<text x="24" y="{:.3}" font-size="18" text-anchor="middle" transform="rotate(-90 24 {:.3})">delta</text>"#,
        y(0.5),
        y(0.5)
    );
    if let Some(pc) = pc {
        let _ = writeln!(
            s,
            r#"<line x1="{:.3}" y1="{MARGIN}" x2="{:.3}" y2="{}" stroke="black" stroke-width="2" stroke-dasharray="8 4"/>"#,
            x(pc),
            x(pc),
            MARGIN + PLOT_SIZE
        );
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" font-size="14" text-anchor="middle">p_c = {}</text>"#, x(pc), MARGIN - 10.0, fmt_num(pc));
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes the heatmap; the marker comes from `pc` or else the last
/// critical-point record in the store.
pub fn emit_heatmap(
    store: &Path,
    quantity: &str,
    n: Option<u32>,
    pc: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let contents = read_store(store)?;
    let pc = pc.or_else(|| contents.last_pc().map(|r| r.estimate.pc));
    let svg = render_heatmap(&contents, quantity, n, pc)?;
    std::fs::write(out, svg).map_err(|e| CliError::io(out, e))
}
