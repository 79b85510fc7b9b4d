//! Minimal deterministic SVG line plots from the emitted CSV files.

use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("csv schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// One polyline per `mode` column value (or a single one), x = first
    /// column, y = second.
    Curve,
    /// Family of profiles: x = second column, one polyline per distinct
    /// first-column value and per value column.
    Profile,
}

const W: f64 = 800.0;
const H: f64 = 500.0;
const MARGIN: f64 = 60.0;

pub fn plot_csv(csv: &str, kind: PlotKind) -> Result<String, PlotError> {
    let mut lines = csv.lines();
    let header: Vec<&str> =
        lines.next().ok_or_else(|| PlotError::SchemaMismatch("empty file".into()))?.split(',').collect();
    let rows: Vec<Vec<String>> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    if rows.iter().any(|r| r.len() != header.len()) {
        return Err(PlotError::SchemaMismatch("ragged rows".into()));
    }
    let parse = |s: &str| -> Result<f64, PlotError> {
        s.parse::<f64>().map_err(|_| PlotError::SchemaMismatch(format!("non-numeric cell {s}")))
    };
    // series name -> (x, y) points
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let (x_label, y_label) = match kind {
        PlotKind::Curve => {
            if header.len() < 2 {
                return Err(PlotError::SchemaMismatch("curve needs at least 2 columns".into()));
            }
            let mode_col = header.iter().position(|h| *h == "mode");
            for r in &rows {
                let name = mode_col.map_or("curve".to_string(), |c| r[c].clone());
                series.entry(name).or_default().push((parse(&r[0])?, parse(&r[1])?));
            }
            (header[0].to_string(), header[1].to_string())
        }
        PlotKind::Profile => {
            if header.len() < 3 {
                return Err(PlotError::SchemaMismatch("profile needs at least 3 columns".into()));
            }
            for r in &rows {
                for col in 2..header.len() {
                    let name = format!("{}={} {}", header[0], r[0], header[col]);
                    series.entry(name).or_default().push((parse(&r[1])?, parse(&r[col])?));
                }
            }
            (header[1].to_string(), "value".to_string())
        }
    };
    if series.is_empty() {
        return Err(PlotError::SchemaMismatch("no data rows".into()));
    }
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for pts in series.values() {
        for &(x, y) in pts {
            xs = (xs.0.min(x), xs.1.max(x));
            ys = (ys.0.min(y), ys.1.max(y));
        }
    }
    if xs.1 <= xs.0 {
        xs.1 = xs.0 + 1.0;
    }
    if ys.1 <= ys.0 {
        ys.1 = ys.0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - xs.0) / (xs.1 - xs.0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - ys.0) / (ys.1 - ys.0) * (H - 2.0 * MARGIN);
    const COLORS: [&str; 8] =
        ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    ));
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let xv = xs.0 + frac * (xs.1 - xs.0);
        let yv = ys.0 + frac * (ys.1 - ys.0);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.4}</text>\n",
            sx(xv),
            H - MARGIN + 18.0,
            xv
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.4}</text>\n",
            MARGIN - 6.0,
            sy(yv) + 4.0,
            yv
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        H - 12.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        H / 2.0,
        H / 2.0,
        y_label
    ));
    for (si, (name, pts)) in series.iter().enumerate() {
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path: Vec<String> =
            sorted.iter().map(|&(x, y)| format!("{},{}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            COLORS[si % COLORS.len()],
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            W - MARGIN + 4.0,
            MARGIN + 14.0 * si as f64,
            COLORS[si % COLORS.len()],
            name
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
