//! SVG renderings of coincidence data: the time/delta scatter plot and the
//! 4x4 grid of per-symbol delta histograms. Output bytes depend only on the
//! input, so figures can be compared across runs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::bell::BellReport;
use crate::matcher::{CoincidenceSet, MutualPair};
use crate::types::{Side, SymbolCode};

/// Fill/stroke color per symbol code, then for multiples.
pub const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#000000"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Glyph {
    Square,
    Diamond,
    Cross,
    X,
    Multiple,
}

impl Glyph {
    pub fn for_symbol(code: SymbolCode) -> Glyph {
        [Glyph::Square, Glyph::Diamond, Glyph::Cross, Glyph::X][code.code() as usize]
    }

    fn class(self) -> &'static str {
        match self {
            Glyph::Square => "g0",
            Glyph::Diamond => "g1",
            Glyph::Cross => "g2",
            Glyph::X => "g3",
            Glyph::Multiple => "gm",
        }
    }

    fn color(self) -> &'static str {
        match self {
            Glyph::Square => PALETTE[0],
            Glyph::Diamond => PALETTE[1],
            Glyph::Cross => PALETTE[2],
            Glyph::X => PALETTE[3],
            Glyph::Multiple => PALETTE[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterSpec {
    /// Horizontal range in seconds.
    pub t_range_s: (f64, f64),
    /// Half-height of the vertical range in nanoseconds (the plot spans +/- this).
    pub delta_range_ns: f64,
}

impl Default for ScatterSpec {
    fn default() -> Self {
        ScatterSpec {
            t_range_s: (0.0, 2.0),
            delta_range_ns: 3.0,
        }
    }
}

impl ScatterSpec {
    pub fn is_valid(&self) -> bool {
        self.t_range_s.0.is_finite()
            && self.t_range_s.1.is_finite()
            && self.t_range_s.1 > self.t_range_s.0
            && self.delta_range_ns.is_finite()
            && self.delta_range_ns > 0.0
    }
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 560.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const GLYPH: f64 = 2.5;

fn svg_open(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn glyph(out: &mut String, g: Glyph, x: f64, y: f64) {
    let (c, s, k) = (g.color(), GLYPH, g.class());
    let _ = match g {
        Glyph::Square => writeln!(
            out,
            r#"<rect class="{k}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="{c}"/>"#,
            x - s,
            y - s,
            2.0 * s,
            2.0 * s
        ),
        Glyph::Diamond => writeln!(
            out,
            r#"<path class="{k}" d="M{:.2},{:.2}L{:.2},{:.2}L{:.2},{:.2}L{:.2},{:.2}Z" fill="none" stroke="{c}"/>"#,
            x,
            y - s,
            x + s,
            y,
            x,
            y + s,
            x - s,
            y
        ),
        Glyph::Cross => writeln!(
            out,
            r#"<path class="{k}" d="M{:.2},{:.2}H{:.2}M{:.2},{:.2}V{:.2}" stroke="{c}"/>"#,
            x - s,
            y,
            x + s,
            x,
            y - s,
            y + s
        ),
        Glyph::X => writeln!(
            out,
            r#"<path class="{k}" d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{c}"/>"#,
            x - s,
            y - s,
            x + s,
            y + s,
            x - s,
            y + s,
            x + s,
            y - s
        ),
        Glyph::Multiple => writeln!(
            out,
            r#"<text class="{k}" x="{x:.2}" y="{:.2}" font-size="8" text-anchor="middle" fill="{c}">M</text>"#,
            y + 3.0
        ),
    };
}

/// Pixel position of `(t_s, delta_ns)` in the scatter plot.
pub fn scatter_position(spec: &ScatterSpec, t_s: f64, delta_ns: f64) -> (f64, f64) {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let (t0, t1) = spec.t_range_s;
    let x = LEFT + (t_s - t0) / (t1 - t0) * pw;
    let y = TOP + (1.0 - (delta_ns + spec.delta_range_ns) / (2.0 * spec.delta_range_ns)) * ph;
    (x, y)
}

/// Renders one glyph per record inside the ranges of `spec`: the perspective
/// station's symbol, or "M" for multiples.
pub fn render_scatter(set: &CoincidenceSet, spec: &ScatterSpec) -> String {
    assert!(spec.is_valid(), "degenerate scatter ranges");
    let mut out = String::new();
    svg_open(&mut out, WIDTH, HEIGHT);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let (t0, t1) = spec.t_range_s;
    let r = spec.delta_range_ns;

    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(out, r#"<g font-size="11" fill="black">"#);
    for k in 0..=4 {
        let tv = t0 + (t1 - t0) * k as f64 / 4.0;
        let (x, _) = scatter_position(spec, tv, 0.0);
        let yb = TOP + ph;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            yb + 5.0,
            yb + 18.0,
            tv
        );
        let dv = -r + 2.0 * r * k as f64 / 4.0;
        let (_, y) = scatter_position(spec, t0, dv);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            dv
        );
    }
    let ylabel = match set.perspective {
        Side::Alice => "t_A - t_B (ns)",
        Side::Bob => "t_B - t_A (ns)",
    };
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t (s)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{ylabel}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{LEFT}" y="20">{} perspective, {} records</text>"#,
        set.perspective,
        set.len()
    );
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g stroke-width="0.8">"#);
    for rec in &set.records {
        let t_s = rec.t.seconds();
        let d_ns = rec.delta_ps as f64 / 1_000.0;
        if t_s < t0 || t_s > t1 || d_ns.abs() > r {
            continue;
        }
        let g = if rec.multiple {
            Glyph::Multiple
        } else {
            let own = match set.perspective {
                Side::Alice => rec.symbol_a,
                Side::Bob => rec.symbol_b,
            };
            Glyph::for_symbol(own)
        };
        let (x, y) = scatter_position(spec, t_s, d_ns);
        glyph(&mut out, g, x, y);
    }
    let _ = writeln!(out, "</g>\n</svg>");
    out
}

pub fn scatter_svg(set: &CoincidenceSet, spec: &ScatterSpec, path: &Path) -> io::Result<()> {
    fs::write(path, render_scatter(set, spec))
}

/// Histogram binning: `[-half_width_ps, half_width_ps)` in bins of `bin_ps`,
/// with zero on a bin edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramWindow {
    pub half_width_ps: i64,
    pub bin_ps: i64,
}

impl Default for HistogramWindow {
    /// 3 ns total width in 60 ps bins.
    fn default() -> Self {
        HistogramWindow {
            half_width_ps: 1_500,
            bin_ps: 60,
        }
    }
}

impl HistogramWindow {
    pub fn bins(&self) -> usize {
        (2 * self.half_width_ps / self.bin_ps) as usize
    }

    pub fn bin_of(&self, delta_ps: i64) -> Option<usize> {
        let shifted = delta_ps + self.half_width_ps;
        (shifted >= 0 && shifted < self.bins() as i64 * self.bin_ps).then(|| (shifted / self.bin_ps) as usize)
    }

    pub fn bin_center_ps(&self, bin: usize) -> i64 {
        -self.half_width_ps + bin as i64 * self.bin_ps + self.bin_ps / 2
    }
}

/// Delta histograms for each (symbol_a, symbol_b) class.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    pub window: HistogramWindow,
    pub perspective: Side,
    /// `counts[a][b][bin]`.
    pub counts: [[Vec<u64>; 4]; 4],
    pub chsh: Option<BellReport>,
}

impl HistogramGrid {
    pub fn cell_total(&self, a: usize, b: usize) -> u64 {
        self.counts[a][b].iter().sum()
    }

    pub fn total(&self) -> u64 {
        (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| self.cell_total(a, b)).sum()
    }
}

/// Bins the non-multiple records of `set` by symbol class and attaches the
/// CHSH report of `pairs` (absent if a setting class is empty).
pub fn histogram_grid(set: &CoincidenceSet, pairs: &[MutualPair], window: HistogramWindow) -> HistogramGrid {
    assert!(window.bin_ps > 0 && window.half_width_ps > 0);
    let mut counts: [[Vec<u64>; 4]; 4] = Default::default();
    for row in counts.iter_mut() {
        for cell in row.iter_mut() {
            *cell = vec![0; window.bins()];
        }
    }
    for r in set.records.iter().filter(|r| !r.multiple) {
        if let Some(bin) = window.bin_of(r.delta_ps) {
            counts[r.symbol_a.code() as usize][r.symbol_b.code() as usize][bin] += 1;
        }
    }
    HistogramGrid {
        window,
        perspective: set.perspective,
        counts,
        chsh: BellReport::from_pairs(pairs).ok(),
    }
}

pub fn render_grid_csv(grid: &HistogramGrid) -> String {
    let mut out = String::from("bin_center_ps");
    for a in 0..4 {
        for b in 0..4 {
            let _ = write!(out, ",c_a{a}b{b}");
        }
    }
    out.push('\n');
    for bin in 0..grid.window.bins() {
        let _ = write!(out, "{}", grid.window.bin_center_ps(bin));
        for a in 0..4 {
            for b in 0..4 {
                let _ = write!(out, ",{}", grid.counts[a][b][bin]);
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_grid_svg(grid: &HistogramGrid) -> String {
    const PANEL_W: f64 = 200.0;
    const PANEL_H: f64 = 130.0;
    const GAP: f64 = 20.0;
    const MARGIN_L: f64 = 60.0;
    const MARGIN_T: f64 = 60.0;
    let w = MARGIN_L + 4.0 * (PANEL_W + GAP);
    let h = MARGIN_T + 4.0 * (PANEL_H + GAP) + 30.0;
    let mut out = String::new();
    svg_open(&mut out, w, h);

    let headline = match &grid.chsh {
        Some(r) => format!("S = {:.4} +/- {:.4} ({} pairs)", r.s, r.s_err, r.pairs),
        None => "S unavailable (empty setting class)".to_string(),
    };
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN_L}" y="25" font-size="14">{} perspective, {} ps bins, +/-{} ps: {headline}</text>"#,
        grid.perspective, grid.window.bin_ps, grid.window.half_width_ps
    );
    let peak = grid.counts.iter().flatten().flat_map(|c| c.iter()).copied().max().unwrap_or(0).max(1);
    let nbins = grid.window.bins();
    let bar_w = PANEL_W / nbins as f64;
    for a in 0..4 {
        for b in 0..4 {
            let x0 = MARGIN_L + b as f64 * (PANEL_W + GAP);
            let y0 = MARGIN_T + a as f64 * (PANEL_H + GAP);
            let color = PALETTE[a];
            let _ = writeln!(
                out,
                r#"<g class="cell" data-a="{a}" data-b="{b}"><rect x="{x0:.2}" y="{y0:.2}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="gray"/>"#
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{y0:.2}" x2="{:.2}" y2="{:.2}" stroke="lightgray"/>"#,
                x0 + PANEL_W / 2.0,
                x0 + PANEL_W / 2.0,
                y0 + PANEL_H
            );
            for (bin, &c) in grid.counts[a][b].iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let bh = c as f64 / peak as f64 * (PANEL_H - 15.0);
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                    x0 + bin as f64 * bar_w,
                    y0 + PANEL_H - bh,
                    bar_w,
                    bh
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10">a{a} b{b} n={}</text></g>"#,
                x0 + 4.0,
                y0 + 11.0,
                grid.cell_total(a, b)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN_L}" y="{:.2}" font-size="11">rows: Alice symbol 0-3, columns: Bob symbol 0-3</text>"#,
        h - 10.0
    );
    let _ = writeln!(out, "</svg>");
    out
}

pub fn grid_export(grid: &HistogramGrid, path_svg: &Path, path_csv: &Path) -> io::Result<()> {
    fs::write(path_svg, render_grid_svg(grid))?;
    fs::write(path_csv, render_grid_csv(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::CoincidenceRecord;
    use crate::types::{Timestamp, PS_PER_S};

    fn rec(t: i64, d: i64, a: u8, b: u8, multiple: bool) -> CoincidenceRecord {
        CoincidenceRecord {
            t: Timestamp(t),
            delta_ps: d,
            symbol_a: SymbolCode::new(a).unwrap(),
            symbol_b: SymbolCode::new(b).unwrap(),
            multiple,
            self_index: 0,
            partner_index: 0,
        }
    }

    fn set(records: Vec<CoincidenceRecord>) -> CoincidenceSet {
        CoincidenceSet {
            perspective: Side::Alice,
            window_ps: 4_000,
            records,
        }
    }

    #[test]
    fn empty_scatter_has_axes_only() {
        let svg = render_scatter(&set(vec![]), &ScatterSpec::default());
        assert!(svg.contains("t (s)"));
        assert!(!svg.contains(r#"class="g"#));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn diamond_at_center() {
        let spec = ScatterSpec::default();
        let svg = render_scatter(&set(vec![rec(PS_PER_S, 0, 1, 0, false)]), &spec);
        assert_eq!(svg.matches(r#"class="g1""#).count(), 1);
        let (x, y) = scatter_position(&spec, 1.0, 0.0);
        assert_eq!((x, y), (LEFT + (WIDTH - LEFT - RIGHT) / 2.0, TOP + (HEIGHT - TOP - BOTTOM) / 2.0));
        assert!(svg.contains(&format!("M{:.2},{:.2}", x, y - GLYPH)));
    }

    #[test]
    fn scatter_filters_and_marks_multiples() {
        let recs = vec![
            rec(PS_PER_S, 500, 0, 0, false),
            rec(PS_PER_S, 5_000, 2, 0, false),
            rec(3 * PS_PER_S, 0, 3, 0, false),
            rec(PS_PER_S / 2, -200, 3, 1, true),
        ];
        let svg = render_scatter(&set(recs), &ScatterSpec::default());
        assert_eq!(svg.matches(r#"class="g0""#).count(), 1);
        assert_eq!(svg.matches(r#"class="g2""#).count(), 0);
        assert_eq!(svg.matches(r#"class="g3""#).count(), 0);
        assert_eq!(svg.matches(r#"class="gm""#).count(), 1);
    }

    #[test]
    fn bob_perspective_uses_bob_symbol() {
        let mut s = set(vec![rec(PS_PER_S, 0, 0, 3, false)]);
        s.perspective = Side::Bob;
        let svg = render_scatter(&s, &ScatterSpec::default());
        assert_eq!(svg.matches(r#"class="g3""#).count(), 1);
    }

    #[test]
    fn window_bins() {
        let w = HistogramWindow::default();
        assert_eq!(w.bins(), 50);
        assert_eq!(w.bin_of(-1_500), Some(0));
        assert_eq!(w.bin_of(-1), Some(24));
        assert_eq!(w.bin_of(0), Some(25));
        assert_eq!(w.bin_of(1_499), Some(49));
        assert_eq!(w.bin_of(1_500), None);
        assert_eq!(w.bin_center_ps(0), -1_470);
    }

    #[test]
    fn zero_grid_csv() {
        let g = histogram_grid(&set(vec![]), &[], HistogramWindow::default());
        assert_eq!(g.total(), 0);
        assert!(g.chsh.is_none());
        let csv = render_grid_csv(&g);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 51);
        assert!(lines[0].starts_with("bin_center_ps,c_a0b0,c_a0b1"));
        assert!(lines[0].ends_with("c_a3b3"));
        assert!(lines[1..].iter().all(|l| l.split(',').skip(1).all(|c| c == "0")));
        assert!(render_grid_svg(&g).contains("S unavailable"));
    }

    #[test]
    fn grid_counts_non_multiples_in_window() {
        let recs = vec![
            rec(0, 0, 0, 0, false),
            rec(0, -1_500, 1, 2, false),
            rec(0, 1_500, 1, 2, false),
            rec(0, 10, 3, 3, true),
        ];
        let g = histogram_grid(&set(recs), &[], HistogramWindow::default());
        assert_eq!(g.total(), 2);
        assert_eq!(g.counts[0][0][25], 1);
        assert_eq!(g.counts[1][2][0], 1);
    }
}
