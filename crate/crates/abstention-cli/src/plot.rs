//! Log-log rate plots as standalone SVG files.

use abstention::risk::fit_rate;
use abstention::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Parsed sweep rows keyed by header name.
fn parse_rows(csv: &str) -> Result<Vec<BTreeMap<String, String>>> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    for required in ["algo", "n", "excess_risk"] {
        if !header.iter().any(|h| h == required) {
            return Err(Error::InvalidConfig(format!("CSV missing column {required}")));
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        let vals: Vec<&str> = line.split(',').collect();
        let row: BTreeMap<String, String> = header
            .iter()
            .cloned()
            .zip(vals.iter().map(|v| v.to_string()))
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

/// Per-algorithm series of `(n, median excess)`.
fn series(rows: &[BTreeMap<String, String>]) -> BTreeMap<String, Vec<(u64, f64)>> {
    let mut grouped: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for row in rows {
        let (Some(algo), Some(n), Some(ex)) =
            (row.get("algo"), row.get("n"), row.get("excess_risk"))
        else {
            continue;
        };
        if row.get("error").map(|e| !e.is_empty()).unwrap_or(false) {
            continue;
        }
        let (Ok(n), Ok(ex)) = (n.parse::<u64>(), ex.parse::<f64>()) else { continue };
        if ex.is_finite() {
            grouped.entry((algo.clone(), n)).or_default().push(ex);
        }
    }
    let mut out: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    for ((algo, n), mut v) in grouped {
        v.sort_by(f64::total_cmp);
        out.entry(algo).or_default().push((n, v[v.len() / 2]));
    }
    out
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Render the log-log excess-risk plot; errors when the CSV carries fewer
/// than two distinct budgets.
pub fn render_svg(csv: &str) -> Result<String> {
    let rows = parse_rows(csv)?;
    let series = series(&rows);
    if series.is_empty() {
        return Err(Error::InvalidConfig("no plottable rows".into()));
    }
    let budgets: std::collections::BTreeSet<u64> =
        series.values().flatten().map(|(n, _)| *n).collect();
    if budgets.len() < 2 {
        return Err(Error::InvalidConfig("need at least two budgets to plot a rate".into()));
    }

    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 30.0, 50.0);
    let xs: Vec<f64> = budgets.iter().map(|n| (*n as f64).ln()).collect();
    let all_pos: Vec<f64> = series
        .values()
        .flatten()
        .map(|(_, e)| *e)
        .filter(|e| *e > 0.0)
        .collect();
    if all_pos.is_empty() {
        return Err(Error::InvalidConfig("no positive excess risks to plot".into()));
    }
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let y0 = all_pos.iter().cloned().fold(f64::INFINITY, f64::min).ln() - 0.2;
    let y1 = all_pos.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ln() + 0.2;
    let px = |lx: f64| ml + (lx - x0) / (x1 - x0).max(1e-12) * (w - ml - mr);
    let py = |ly: f64| h - mb - (ly - y0) / (y1 - y0).max(1e-12) * (h - mt - mb);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-size="14" font-family="sans-serif">median excess risk vs label budget (log-log)</text>"#,
        ml
    );
    // Axes.
    let _ = writeln!(
        svg,
        r#"<line x1="{ml}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        h - mb,
        w - mr
    );
    let _ = writeln!(svg, r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#, h - mb);
    for n in &budgets {
        let x = px((*n as f64).ln());
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{0}" x2="{x}" y2="{1}" stroke="black"/><text x="{x}" y="{2}" font-size="11" text-anchor="middle" font-family="sans-serif">{n}</text>"#,
            h - mb,
            h - mb + 5.0,
            h - mb + 18.0
        );
    }
    // A few y ticks at powers of ten.
    let mut p = 1.0f64;
    while p.ln() > y0 {
        p /= 10.0;
    }
    while p.ln() < y1 {
        if p.ln() >= y0 {
            let y = py(p.ln());
            let _ = writeln!(
                svg,
                r#"<line x1="{0}" y1="{y}" x2="{ml}" y2="{y}" stroke="black"/><text x="{1}" y="{2}" font-size="11" text-anchor="end" font-family="sans-serif">{p:e}</text>"#,
                ml - 5.0,
                ml - 8.0,
                y + 4.0
            );
        }
        p *= 10.0;
    }

    for (idx, (algo, pts)) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let mut pts = pts.clone();
        pts.sort_by_key(|(n, _)| *n);
        let path: Vec<String> = pts
            .iter()
            .filter(|(_, e)| *e > 0.0)
            .map(|(n, e)| format!("{:.2},{:.2}", px((*n as f64).ln()), py(e.ln())))
            .collect();
        if path.len() >= 2 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
        for (n, e) in pts.iter().filter(|(_, e)| *e > 0.0) {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px((*n as f64).ln()),
                py(e.ln())
            );
        }
        // Slope annotation when the series supports a fit.
        let ns: Vec<u64> = pts.iter().map(|(n, _)| *n).collect();
        let es: Vec<f64> = pts.iter().map(|(_, e)| *e).collect();
        let label = match fit_rate(&ns, &es) {
            Ok(fit) if ns.len() >= 2 => format!("{algo} (slope {:.2})", fit.slope),
            _ => algo.to_string(),
        };
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}" font-family="sans-serif">{label}</text>"#,
            w - mr - 200.0,
            mt + 18.0 * (idx as f64 + 1.0)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_two_series() {
        let csv = "\
run_id,algo,model,n,m,seed,excess_risk,abstain_rate,feasible,labels_used,wall_ms,error
a,algo1,membership,128,0,1,0.2,0.1,1,128,3,
b,algo1,membership,256,0,1,0.1,0.1,1,256,3,
c,passive,membership,128,0,1,0.3,0.1,1,128,3,
d,passive,membership,256,0,1,0.2,0.1,1,256,3,
";
        let svg = render_svg(csv).unwrap();
        assert!(svg.contains("polyline"));
        assert!(svg.contains("algo1 (slope"));
        assert!(svg.contains("passive (slope"));
    }

    #[test]
    fn single_point_series_has_no_slope_annotation() {
        let csv = "\
run_id,algo,model,n,m,seed,excess_risk,abstain_rate,feasible,labels_used,wall_ms,error
a,algo1,membership,128,0,1,0.2,0.1,1,128,3,
b,passive,membership,128,0,1,0.3,0.1,1,128,3,
c,passive,membership,256,0,1,0.2,0.1,1,256,3,
";
        let svg = render_svg(csv).unwrap();
        assert!(svg.contains(">algo1</text>"));
        assert!(svg.contains("passive (slope"));
    }

    #[test]
    fn empty_or_degenerate_input_errors() {
        assert!(render_svg("").is_err());
        let one_budget = "\
run_id,algo,model,n,m,seed,excess_risk,abstain_rate,feasible,labels_used,wall_ms,error
a,algo1,membership,128,0,1,0.2,0.1,1,128,3,
";
        assert!(render_svg(one_budget).is_err());
        assert!(render_svg("x,y\n1,2\n").is_err());
    }
}
