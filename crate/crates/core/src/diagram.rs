//! Condition-residuum diagrams: `(κ, RMSE)` points of endmember sets from
//! reduction traces, direct extractions and brute-force enumeration, with
//! CSV and SVG export. The ideal set sits at `κ = 1, RMSE = 0`.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::fmt_real;
use crate::reduction::ReductionTrace;
use crate::spectral::{EndmemberSet, QualityPoint, KAPPA_CAP};

pub const CSV_HEADER: &str = "label,source,alpha,run_index,set_size,kappa,rmse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PointSource {
    Trace,
    Direct,
    Bruteforce,
    Reference,
}

impl fmt::Display for PointSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointSource::Trace => "trace",
            PointSource::Direct => "direct",
            PointSource::Bruteforce => "bruteforce",
            PointSource::Reference => "reference",
        })
    }
}

impl FromStr for PointSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(PointSource::Trace),
            "direct" => Ok(PointSource::Direct),
            "bruteforce" => Ok(PointSource::Bruteforce),
            "reference" => Ok(PointSource::Reference),
            other => Err(Error::Unsupported {
                what: "diagram point source",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramPoint {
    pub quality: QualityPoint,
    pub label: String,
    pub source: PointSource,
    /// Present exactly for trace points.
    pub alpha: Option<f64>,
    pub run_index: Option<usize>,
}

impl DiagramPoint {
    pub fn new(
        quality: QualityPoint,
        label: impl Into<String>,
        source: PointSource,
        alpha: Option<f64>,
        run_index: Option<usize>,
    ) -> Result<Self> {
        if alpha.is_some() != (source == PointSource::Trace) {
            return Err(Error::Invariant(format!(
                "alpha must be given exactly for trace points ({source})"
            )));
        }
        Ok(Self {
            quality,
            label: sanitize(&label.into()),
            source,
            alpha,
            run_index,
        })
    }
}

fn sanitize(label: &str) -> String {
    label.replace([',', '\n', '\r'], ";")
}

/// Axis-aligned crop rectangle, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropWindow {
    pub kappa: (f64, f64),
    pub rmse: (f64, f64),
}

impl CropWindow {
    pub fn new(kappa: (f64, f64), rmse: (f64, f64)) -> Result<Self> {
        if !(kappa.1 > kappa.0 && rmse.1 > rmse.0) {
            return Err(Error::InvalidConfig(format!(
                "crop window needs positive extent, got κ {kappa:?} × RMSE {rmse:?}"
            )));
        }
        Ok(Self { kappa, rmse })
    }

    pub fn contains(&self, q: &QualityPoint) -> bool {
        q.kappa >= self.kappa.0 && q.kappa <= self.kappa.1 && q.rmse >= self.rmse.0 && q.rmse <= self.rmse.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramOptions {
    pub crop: Option<CropWindow>,
    pub kappa_log_scale: bool,
    pub annotate_sizes: bool,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        Self {
            crop: None,
            kappa_log_scale: true,
            annotate_sizes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramSpec {
    pub points: Vec<DiagramPoint>,
    pub crop: Option<CropWindow>,
    pub kappa_log_scale: bool,
    pub annotate_sizes: bool,
}

impl DiagramSpec {
    pub fn new(points: Vec<DiagramPoint>, options: DiagramOptions) -> Self {
        let mut spec = Self {
            points,
            crop: options.crop,
            kappa_log_scale: options.kappa_log_scale,
            annotate_sizes: options.annotate_sizes,
        };
        spec.apply_crop();
        spec
    }

    /// Drop points outside the crop window. Idempotent.
    pub fn apply_crop(&mut self) {
        if let Some(crop) = self.crop {
            self.points.retain(|p| crop.contains(&p.quality));
        }
    }
}

/// A trace together with its run index, for diagram assembly.
pub struct TraceEntry<'a> {
    pub trace: &'a ReductionTrace,
    pub run_index: Option<usize>,
}

/// A directly extracted set with its quality.
pub struct DirectEntry<'a> {
    pub set: &'a EndmemberSet,
    pub quality: QualityPoint,
    pub run_index: Option<usize>,
}

/// Merge reduction traces, direct extractions and brute-force subsets into
/// one diagram; the crop window, if any, is applied.
pub fn build_diagram(
    traces: &[TraceEntry<'_>],
    direct: &[DirectEntry<'_>],
    brute: &[(u64, QualityPoint)],
    options: DiagramOptions,
) -> Result<DiagramSpec> {
    if traces.is_empty() && direct.is_empty() && brute.is_empty() {
        return Err(Error::EmptyInput("diagram has no inputs".into()));
    }
    let mut points = Vec::new();
    for entry in traces {
        let label = entry.trace.initial.label();
        for q in entry.trace.points() {
            points.push(DiagramPoint::new(
                q,
                format!("{label}_m{}", q.set_size),
                PointSource::Trace,
                Some(entry.trace.alpha),
                entry.run_index,
            )?);
        }
    }
    for entry in direct {
        points.push(DiagramPoint::new(
            entry.quality,
            format!("{}_m{}", entry.set.label(), entry.quality.set_size),
            PointSource::Direct,
            None,
            entry.run_index,
        )?);
    }
    for &(mask, q) in brute {
        points.push(DiagramPoint::new(q, format!("subset_{mask:#x}"), PointSource::Bruteforce, None, None)?);
    }
    Ok(DiagramSpec::new(points, options))
}

fn csv_order(a: &DiagramPoint, b: &DiagramPoint) -> Ordering {
    let alpha = |p: &DiagramPoint| p.alpha.unwrap_or(f64::NEG_INFINITY);
    a.source
        .cmp(&b.source)
        .then(alpha(a).total_cmp(&alpha(b)))
        .then(b.quality.set_size.cmp(&a.quality.set_size))
}

/// CSV rows sorted by `(source, alpha, set_size descending)`; other ties
/// keep their input order.
pub fn to_csv(diagram: &DiagramSpec) -> String {
    let mut rows: Vec<&DiagramPoint> = diagram.points.iter().collect();
    rows.sort_by(|a, b| csv_order(a, b));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in rows {
        let kappa = if p.quality.is_capped() {
            "inf".to_string()
        } else {
            fmt_real(p.quality.kappa)
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.label,
            p.source,
            p.alpha.map(fmt_real).unwrap_or_default(),
            p.run_index.map(|r| r.to_string()).unwrap_or_default(),
            p.quality.set_size,
            kappa,
            fmt_real(p.quality.rmse)
        );
    }
    out
}

pub fn export_csv(diagram: &DiagramSpec, path: &Path) -> Result<()> {
    fs::write(path, to_csv(diagram)).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<DiagramPoint>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(err(format!("{} fields, expected 7", fields.len())));
        }
        let real = |s: &str| s.parse::<f64>().map_err(|_| err(format!("not a number: {s:?}")));
        let alpha = if fields[2].is_empty() { None } else { Some(real(fields[2])?) };
        let run_index = if fields[3].is_empty() {
            None
        } else {
            Some(fields[3].parse().map_err(|_| err(format!("bad run index {:?}", fields[3])))?)
        };
        let set_size = fields[4].parse().map_err(|_| err(format!("bad set size {:?}", fields[4])))?;
        let kappa = if fields[5] == "inf" { KAPPA_CAP } else { real(fields[5])? };
        let quality = QualityPoint {
            kappa,
            rmse: real(fields[6])?,
            set_size,
        };
        points.push(DiagramPoint::new(quality, fields[0], fields[1].parse()?, alpha, run_index)?);
    }
    Ok(points)
}

pub fn load_csv(path: &Path) -> Result<Vec<DiagramPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Axes {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    log: bool,
}

impl Axes {
    fn fit(diagram: &DiagramSpec) -> Self {
        let log = diagram.kappa_log_scale;
        let tx = |k: f64| if log { k.log10() } else { k };
        if let Some(c) = diagram.crop {
            let lo = if log { c.kappa.0.max(1e-300) } else { c.kappa.0 };
            return Self {
                x_lo: tx(lo),
                x_hi: tx(c.kappa.1),
                y_lo: c.rmse.0,
                y_hi: c.rmse.1,
                log,
            };
        }
        // Without a crop the ideal point (1, 0) is always in view.
        let finite: Vec<&QualityPoint> = diagram
            .points
            .iter()
            .map(|p| &p.quality)
            .filter(|q| !q.is_capped())
            .collect();
        let k_max = finite.iter().map(|q| q.kappa).fold(1.0, f64::max);
        let k_min = finite.iter().map(|q| q.kappa).fold(1.0, f64::min);
        let r_max = diagram.points.iter().map(|p| p.quality.rmse).fold(0.0, f64::max);
        let (x_lo, mut x_hi) = (tx(k_min.max(if log { 1e-300 } else { f64::MIN })), tx(k_max));
        if x_hi - x_lo < 1e-9 {
            x_hi = x_lo + 1.0;
        }
        x_hi += 0.05 * (x_hi - x_lo);
        let y_hi = if r_max > 0.0 { r_max * 1.05 } else { 1.0 };
        Self {
            x_lo,
            x_hi,
            y_lo: 0.0,
            y_hi,
            log,
        }
    }

    fn x(&self, kappa: f64) -> f64 {
        if kappa >= KAPPA_CAP {
            return WIDTH - MARGIN;
        }
        let v = if self.log { kappa.log10() } else { kappa };
        MARGIN + (v - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, rmse: f64) -> f64 {
        HEIGHT - MARGIN - (rmse - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - 2.0 * MARGIN)
    }

    fn x_ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let first = self.x_lo.ceil() as i32;
            let last = self.x_hi.floor() as i32;
            if last >= first {
                return (first..=last)
                    .map(|e| (10f64.powi(e), format!("1e{e}")))
                    .collect();
            }
            return [self.x_lo, self.x_hi]
                .iter()
                .map(|&v| (10f64.powf(v), format!("{:.3}", 10f64.powf(v))))
                .collect();
        }
        (0..=4)
            .map(|i| {
                let v = self.x_lo + (self.x_hi - self.x_lo) * i as f64 / 4.0;
                (v, format!("{v:.3}"))
            })
            .collect()
    }

    fn y_ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|i| {
                let v = self.y_lo + (self.y_hi - self.y_lo) * i as f64 / 4.0;
                (v, format!("{v:.4}"))
            })
            .collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

type TraceGroup<'a> = ((f64, Option<usize>), Vec<&'a DiagramPoint>);

/// Trace points grouped by `(alpha, run_index)`, in first-seen order.
fn trace_groups(diagram: &DiagramSpec) -> Vec<TraceGroup<'_>> {
    let mut groups: Vec<TraceGroup<'_>> = Vec::new();
    for p in diagram.points.iter().filter(|p| p.source == PointSource::Trace) {
        let key = (p.alpha.unwrap_or(0.0), p.run_index);
        match groups.iter_mut().find(|(k, _)| k.0.to_bits() == key.0.to_bits() && k.1 == key.1) {
            Some((_, g)) => g.push(p),
            None => groups.push((key, vec![p])),
        }
    }
    for (_, g) in &mut groups {
        g.sort_by_key(|p| std::cmp::Reverse(p.quality.set_size));
    }
    groups
}

/// Render the diagram as a self-contained SVG 1.1 document.
pub fn to_svg(diagram: &DiagramSpec) -> String {
    let axes = Axes::fit(diagram);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // Axes, ticks and labels.
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="ticks" fill="black">"#);
    for (v, text) in axes.x_ticks() {
        let x = axes.x(v);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{text}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    for (v, text) in axes.y_ticks() {
        let y = axes.y(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{text}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(s, "</g>");
    let x_label = if axes.log {
        "condition number κ (log scale)"
    } else {
        "condition number κ"
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">RMSE</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    // Ideal point.
    let ideal = QualityPoint {
        kappa: 1.0,
        rmse: 0.0,
        set_size: 0,
    };
    if diagram.crop.is_none_or(|c| c.contains(&ideal)) {
        let (x, y) = (axes.x(1.0), axes.y(0.0));
        let _ = writeln!(
            s,
            r#"<g class="ideal"><path d="M {:.2} {y:.2} L {x:.2} {:.2} L {:.2} {y:.2} L {x:.2} {:.2} Z" fill="gold" stroke="black"/><text x="{:.2}" y="{:.2}">ideal (1, 0)</text></g>"#,
            x - 6.0,
            y - 6.0,
            x + 6.0,
            y + 6.0,
            x + 8.0,
            y - 8.0
        );
    }

    // Brute-force cloud below everything else.
    let _ = writeln!(s, r##"<g class="bruteforce" fill="#999999">"##);
    for p in diagram.points.iter().filter(|p| p.source == PointSource::Bruteforce) {
        glyph(&mut s, &axes, p, "#999999");
    }
    let _ = writeln!(s, "</g>");

    // Reduction curves.
    let groups = trace_groups(diagram);
    for ((alpha, run), pts) in &groups {
        let colour = PALETTE[alpha_slot(&groups, *alpha) % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", axes.x(p.quality.kappa), axes.y(p.quality.rmse)))
            .collect();
        let run_attr = run.map(|r| format!(r#" data-run="{r}""#)).unwrap_or_default();
        let _ = writeln!(
            s,
            r#"<g class="trace" data-alpha="{}"{run_attr}><polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            fmt_real(*alpha),
            coords.join(" ")
        );
        for p in pts {
            glyph(&mut s, &axes, p, colour);
            // Label sizes on one run only to keep multi-run plots legible.
            if diagram.annotate_sizes && run.unwrap_or(0) == 0 {
                annotate(&mut s, &axes, p);
            }
        }
        let _ = writeln!(s, "</g>");
    }

    for (source, colour) in [(PointSource::Direct, "#000000"), (PointSource::Reference, "#b8860b")] {
        let _ = writeln!(s, r#"<g class="{source}">"#);
        for p in diagram.points.iter().filter(|p| p.source == source) {
            glyph(&mut s, &axes, p, colour);
            if diagram.annotate_sizes {
                annotate(&mut s, &axes, p);
            }
        }
        let _ = writeln!(s, "</g>");
    }

    legend(&mut s, diagram, &groups);
    let _ = writeln!(s, "</svg>");
    s
}

/// Palette slot of an alpha value: its rank among the distinct alphas.
fn alpha_slot(groups: &[TraceGroup], alpha: f64) -> usize {
    let mut alphas: Vec<f64> = groups.iter().map(|((a, _), _)| *a).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    alphas.iter().position(|a| a.to_bits() == alpha.to_bits()).unwrap_or(0)
}

fn glyph(s: &mut String, axes: &Axes, p: &DiagramPoint, colour: &str) {
    let (x, y) = (axes.x(p.quality.kappa), axes.y(p.quality.rmse));
    let title = format!(
        "<title>{} κ={} RMSE={}</title>",
        escape(&p.label),
        if p.quality.is_capped() { "inf".into() } else { fmt_real(p.quality.kappa) },
        fmt_real(p.quality.rmse)
    );
    if p.quality.is_capped() {
        // Rank-deficient sets sit on the right edge as a triangle.
        let _ = writeln!(
            s,
            r#"<path class="capped" d="M {x:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} Z" fill="none" stroke="{colour}">{title}</path>"#,
            y - 5.0,
            x - 5.0,
            y + 4.0,
            x + 5.0,
            y + 4.0
        );
        return;
    }
    match p.source {
        PointSource::Trace => {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{colour}">{title}</circle>"#);
        }
        PointSource::Direct => {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="none" stroke="{colour}">{title}</rect>"#,
                x - 3.0,
                y - 3.0
            );
        }
        PointSource::Bruteforce => {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5">{title}</circle>"#);
        }
        PointSource::Reference => {
            let _ = writeln!(
                s,
                r#"<path d="M {x:.2} {:.2} L {:.2} {y:.2} L {x:.2} {:.2} L {:.2} {y:.2} Z" fill="{colour}">{title}</path>"#,
                y - 5.0,
                x + 5.0,
                y + 5.0,
                x - 5.0
            );
        }
    }
}

fn annotate(s: &mut String, axes: &Axes, p: &DiagramPoint) {
    let _ = writeln!(
        s,
        r#"<text class="size" x="{:.2}" y="{:.2}" font-size="9">{}</text>"#,
        axes.x(p.quality.kappa) + 4.0,
        axes.y(p.quality.rmse) - 4.0,
        p.quality.set_size
    );
}

fn legend(s: &mut String, diagram: &DiagramSpec, groups: &[TraceGroup]) {
    let mut entries: Vec<(String, &str)> = Vec::new();
    let mut alphas: Vec<f64> = groups.iter().map(|((a, _), _)| *a).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    for (slot, a) in alphas.iter().enumerate() {
        entries.push((format!("reduction α={}", fmt_real(*a)), PALETTE[slot % PALETTE.len()]));
    }
    for (source, colour) in [
        (PointSource::Direct, "#000000"),
        (PointSource::Bruteforce, "#999999"),
        (PointSource::Reference, "#b8860b"),
    ] {
        if diagram.points.iter().any(|p| p.source == source) {
            entries.push((source.to_string(), colour));
        }
    }
    let x = WIDTH - MARGIN - 150.0;
    let _ = writeln!(
        s,
        r##"<g class="legend"><rect x="{x}" y="{MARGIN}" width="150" height="{}" fill="white" stroke="#cccccc"/>"##,
        10.0 + 16.0 * entries.len() as f64
    );
    for (i, (text, colour)) in entries.iter().enumerate() {
        let y = MARGIN + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{colour}"/><text x="{:.2}" y="{y:.2}">{}</text>"#,
            x + 8.0,
            y - 9.0,
            x + 24.0,
            escape(text)
        );
    }
    let _ = writeln!(s, "</g>");
}

pub fn export_svg(diagram: &DiagramSpec, path: &Path) -> Result<()> {
    fs::write(path, to_svg(diagram)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(kappa: f64, rmse: f64, set_size: usize) -> QualityPoint {
        QualityPoint { kappa, rmse, set_size }
    }

    fn point(kappa: f64, rmse: f64, size: usize, source: PointSource, alpha: Option<f64>) -> DiagramPoint {
        DiagramPoint::new(q(kappa, rmse, size), format!("p{size}"), source, alpha, None).unwrap()
    }

    #[test]
    fn alpha_only_on_trace_points() {
        assert!(DiagramPoint::new(q(2.0, 0.1, 3), "x", PointSource::Direct, Some(0.5), None).is_err());
        assert!(DiagramPoint::new(q(2.0, 0.1, 3), "x", PointSource::Trace, None, None).is_err());
    }

    #[test]
    fn crop_window_bounds() {
        assert!(CropWindow::new((850.0, 850.0), (0.05, 0.07)).is_err());
        let crop = CropWindow::new((850.0, 2500.0), (0.05, 0.07)).unwrap();
        assert!(crop.contains(&q(1000.0, 0.06, 9)));
        assert!(crop.contains(&q(850.0, 0.07, 9)));
        assert!(!crop.contains(&q(800.0, 0.06, 9)));
        assert!(!crop.contains(&q(1000.0, 0.08, 9)));
        assert!(!crop.contains(&q(KAPPA_CAP, 0.06, 9)));
    }

    #[test]
    fn csv_rows_sorted_and_capped_kappa_is_inf() {
        let points = vec![
            point(5.0, 0.2, 2, PointSource::Direct, None),
            point(3.0, 0.3, 1, PointSource::Trace, Some(1.0)),
            point(KAPPA_CAP, 0.01, 3, PointSource::Trace, Some(0.5)),
            point(4.0, 0.1, 2, PointSource::Trace, Some(0.5)),
            point(9.0, 0.05, 2, PointSource::Bruteforce, None),
        ];
        let csv = to_csv(&DiagramSpec::new(points, DiagramOptions::default()));
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], CSV_HEADER);
        assert_eq!(rows[1], "p3,trace,0.5,,3,inf,0.01");
        assert_eq!(rows[2], "p2,trace,0.5,,2,4,0.1");
        assert_eq!(rows[3], "p1,trace,1,,1,3,0.3");
        assert!(rows[4].starts_with("p2,direct"));
        assert!(rows[5].starts_with("p2,bruteforce"));
    }

    #[test]
    fn empty_diagram_is_header_only() {
        let csv = to_csv(&DiagramSpec::new(Vec::new(), DiagramOptions::default()));
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
        assert!(parse_csv(&csv, Path::new("x")).unwrap().is_empty());
    }

    #[test]
    fn build_requires_input() {
        assert!(matches!(
            build_diagram(&[], &[], &[], DiagramOptions::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn labels_cannot_break_csv() {
        let p = DiagramPoint::new(q(2.0, 0.1, 3), "a,b", PointSource::Direct, None, None).unwrap();
        assert_eq!(p.label, "a;b");
    }
}
