use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::dataio::{table, SpatialCoords};
use crate::{Error, Result};

pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78",
];

const MAP_PX: f64 = 600.0;
const LEGEND_PX: f64 = 160.0;

/// Scatter of spots coloured by label, with a per-label count legend.
/// The map's viewBox spans the data with a 5% margin on every side.
pub fn render_domains_svg(coords: &SpatialCoords, labels: &[usize]) -> Result<String> {
    if labels.len() != coords.len() {
        return Err(Error::dim(format!("{} labels for {} spots", labels.len(), coords.len())));
    }
    if labels.is_empty() {
        return Err(Error::invalid("nothing to plot"));
    }
    let pos = coords.positions();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..pos.nrows() {
        x0 = x0.min(pos[(i, 0)]);
        x1 = x1.max(pos[(i, 0)]);
        y0 = y0.min(pos[(i, 1)]);
        y1 = y1.max(pos[(i, 1)]);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (span(x0, x1), span(y0, y1));
    let (mx, my) = (0.05 * w, 0.05 * h);
    let radius = 0.01 * w.max(h);

    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }

    let height = MAP_PX.max(20.0 * counts.len() as f64 + 20.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" viewBox="0 0 {} {height}">"#,
        MAP_PX + LEGEND_PX,
        MAP_PX + LEGEND_PX
    );
    let _ = writeln!(
        s,
        r#"<svg x="0" y="0" width="{MAP_PX}" height="{MAP_PX}" viewBox="{:.6} {:.6} {:.6} {:.6}" preserveAspectRatio="xMidYMid meet">"#,
        x0 - mx,
        y0 - my,
        w + 2.0 * mx,
        h + 2.0 * my
    );
    for (i, &l) in labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.6}" cy="{:.6}" r="{radius:.6}" fill="{}"/>"#,
            pos[(i, 0)],
            pos[(i, 1)],
            PALETTE[l % PALETTE.len()]
        );
    }
    s.push_str("</svg>\n<g font-family=\"sans-serif\" font-size=\"12\">\n");
    for (row, (&l, &count)) in counts.iter().enumerate() {
        let y = 20.0 + 20.0 * row as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{l} ({})</text>"#,
            MAP_PX + 10.0,
            y - 10.0,
            PALETTE[l % PALETTE.len()],
            MAP_PX + 28.0,
            y,
            count
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

pub fn plot_domains(coords: &SpatialCoords, labels: &[usize], path: &Path) -> Result<()> {
    let svg = render_domains_svg(coords, labels)?;
    let mut w = table::create(path)?;
    w.write_all(svg.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;

    fn coords(pts: &[(f64, f64)]) -> SpatialCoords {
        let flat: Vec<f64> = pts.iter().flat_map(|p| [p.0, p.1]).collect();
        SpatialCoords::new(
            Matrix::from_row_slice(pts.len(), 2, &flat),
            (0..pts.len()).map(|i| format!("s{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn three_spots_two_labels() {
        let svg = render_domains_svg(&coords(&[(0.0, 0.0), (10.0, 0.0), (0.0, 20.0)]), &[0, 1, 0]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains(">0 (2)</text>"));
        assert!(svg.contains(">1 (1)</text>"));
        // 5% of a 10 × 20 extent
        assert!(svg.contains(r#"viewBox="-0.500000 -1.000000 11.000000 22.000000""#), "{svg}");
    }

    #[test]
    fn single_cluster() {
        let svg = render_domains_svg(&coords(&[(0.0, 0.0), (1.0, 1.0)]), &[0, 0]).unwrap();
        assert_eq!(svg.matches("<rect").count(), 1);
        assert_eq!(svg.matches(PALETTE[0]).count(), 3);
    }

    #[test]
    fn palette_cycles_and_output_is_stable() {
        let pts: Vec<(f64, f64)> = (0..14).map(|i| (i as f64, (i * i) as f64)).collect();
        let labels: Vec<usize> = (0..14).collect();
        let a = render_domains_svg(&coords(&pts), &labels).unwrap();
        assert_eq!(a, render_domains_svg(&coords(&pts), &labels).unwrap());
        assert!(a.contains(&format!(r#"fill="{}"/><text x="628" y="260">12 (1)"#, PALETTE[0])));
    }

    #[test]
    fn sparse_label_values() {
        let svg = render_domains_svg(&coords(&[(0.0, 0.0), (1.0, 0.0)]), &[7, 1_000_000]).unwrap();
        assert!(svg.contains(">7 (1)</text>") && svg.contains(">1000000 (1)</text>"));
    }

    #[test]
    fn length_mismatch() {
        assert!(render_domains_svg(&coords(&[(0.0, 0.0)]), &[0, 1]).is_err());
    }
}
