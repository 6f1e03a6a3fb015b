//! Static SVG line charts for training curves and sweep overlays.
//!
//! Hand-rolled rather than pulled from a plotting crate: the charts needed
//! here are plain line plots with a legend, an optional horizontal reference
//! line, and gap handling for evaluation points where no rollout succeeded.
//! Output is a single self-contained SVG string.

/// Default line colors, cycled by series index.
pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One plotted line. A `None` y-value marks an evaluation point with no
/// datum; the line breaks there instead of interpolating across the gap.
#[derive(Debug, Clone)]
pub struct Series {
    /// Legend entry; anonymous lines (individual seeds behind a mean) omit it.
    pub label: Option<String>,
    pub color: String,
    pub width: f64,
    pub opacity: f64,
    pub dashed: bool,
    pub points: Vec<(f64, Option<f64>)>,
}

/// Chart frame: titles, axis labels, an optional labeled horizontal
/// reference line, and an optional creation timestamp embedded as an SVG
/// comment (left out entirely for byte-reproducible output).
#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub h_line: Option<(f64, String)>,
    pub timestamp: Option<u64>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 780.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 440.0;

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Largest of 1, 2, 5 times a power of ten that divides the span into at
/// most `target` intervals.
fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    if !(raw.is_finite() && raw > 0.0) {
        return 1.0;
    }
    let magnitude = 10f64.powf(raw.log10().floor());
    for multiple in [1.0, 2.0, 5.0, 10.0] {
        let step = magnitude * multiple;
        if step >= raw - magnitude * 1e-9 {
            return step;
        }
    }
    magnitude * 10.0
}

fn tick_label(value: f64, step: f64) -> String {
    if step >= 1.0 {
        format!("{value:.0}")
    } else {
        let decimals = (-step.log10().floor()) as usize;
        format!("{value:.*}", decimals)
    }
}

fn data_bounds(series: &[Series], h_line: Option<f64>) -> ((f64, f64), (f64, f64)) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if let Some(y) = y {
                if x.is_finite() && y.is_finite() {
                    x_min = x_min.min(x);
                    x_max = x_max.max(x);
                    y_min = y_min.min(y);
                    y_max = y_max.max(y);
                }
            }
        }
    }
    if let Some(h) = h_line {
        if h.is_finite() {
            y_min = y_min.min(h);
            y_max = y_max.max(h);
        }
    }
    if !x_min.is_finite() {
        (x_min, x_max) = (0.0, 1.0);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    x_min = x_min.min(0.0);
    y_min = y_min.min(0.0);
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    y_max += (y_max - y_min).max(1e-9) * 0.05;
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }
    ((x_min, x_max), (y_min, y_max))
}

/// Renders the chart as a self-contained SVG document.
pub fn line_chart(spec: &ChartSpec, series: &[Series]) -> String {
    let ((x_min, x_max), (y_min, y_max)) = data_bounds(
        series,
        spec.h_line.as_ref().map(|(v, _)| *v),
    );
    let to_px = |x: f64, y: f64| {
        (
            LEFT + (x - x_min) / (x_max - x_min) * (RIGHT - LEFT),
            BOTTOM - (y - y_min) / (y_max - y_min) * (BOTTOM - TOP),
        )
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\">\n"
    ));
    if let Some(ts) = spec.timestamp {
        svg.push_str(&format!("<!-- created {ts} -->\n"));
    }
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">{}</text>\n",
        (LEFT + RIGHT) / 2.0,
        esc(&spec.title)
    ));

    let x_step = nice_step(x_max - x_min, 6);
    let y_step = nice_step(y_max - y_min, 6);
    let mut tick = (x_min / x_step).ceil() as i64;
    while tick as f64 * x_step <= x_max + x_step * 1e-9 {
        let x = tick as f64 * x_step;
        let (px, _) = to_px(x, y_min);
        svg.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{TOP}\" x2=\"{px:.1}\" y2=\"{BOTTOM}\" \
             stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            BOTTOM + 18.0,
            tick_label(x, x_step)
        ));
        tick += 1;
    }
    let mut tick = (y_min / y_step).ceil() as i64;
    while tick as f64 * y_step <= y_max + y_step * 1e-9 {
        let y = tick as f64 * y_step;
        let (_, py) = to_px(x_min, y);
        svg.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{py:.1}\" x2=\"{RIGHT}\" y2=\"{py:.1}\" \
             stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"12\">{}</text>\n",
            LEFT - 8.0,
            py + 4.0,
            tick_label(y, y_step)
        ));
        tick += 1;
    }

    svg.push_str(&format!(
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{}\" height=\"{}\" fill=\"none\" \
         stroke=\"#333333\" stroke-width=\"1\"/>\n",
        RIGHT - LEFT,
        BOTTOM - TOP
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        (LEFT + RIGHT) / 2.0,
        HEIGHT - 14.0,
        esc(&spec.x_label)
    ));
    svg.push_str(&format!(
        "<text transform=\"rotate(-90)\" x=\"{}\" y=\"20\" text-anchor=\"middle\" \
         font-size=\"14\">{}</text>\n",
        -(TOP + BOTTOM) / 2.0,
        esc(&spec.y_label)
    ));

    if let Some((value, _)) = &spec.h_line {
        if value.is_finite() {
            let (_, py) = to_px(x_min, *value);
            svg.push_str(&format!(
                "<line x1=\"{LEFT}\" y1=\"{py:.1}\" x2=\"{RIGHT}\" y2=\"{py:.1}\" \
                 stroke=\"#555555\" stroke-width=\"1.5\" stroke-dasharray=\"8 5\"/>\n"
            ));
        }
    }

    for s in series {
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let mut segment: Vec<(f64, f64)> = Vec::new();
        let flush = |segment: &mut Vec<(f64, f64)>, svg: &mut String| {
            if segment.len() >= 2 {
                let coords: Vec<String> = segment
                    .iter()
                    .map(|&(x, y)| {
                        let (px, py) = to_px(x, y);
                        format!("{px:.1},{py:.1}")
                    })
                    .collect();
                svg.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" \
                     stroke-width=\"{}\" stroke-opacity=\"{}\"{dash}/>\n",
                    coords.join(" "),
                    esc(&s.color),
                    s.width,
                    s.opacity
                ));
            } else if let Some(&(x, y)) = segment.first() {
                let (px, py) = to_px(x, y);
                svg.push_str(&format!(
                    "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"{}\" fill=\"{}\" \
                     fill-opacity=\"{}\"/>\n",
                    s.width.max(1.5),
                    esc(&s.color),
                    s.opacity
                ));
            }
            segment.clear();
        };
        for &(x, y) in &s.points {
            match y {
                Some(y) if y.is_finite() => segment.push((x, y)),
                _ => flush(&mut segment, &mut svg),
            }
        }
        flush(&mut segment, &mut svg);
    }

    let mut legend: Vec<(String, String, bool)> = series
        .iter()
        .filter_map(|s| s.label.clone().map(|l| (l, s.color.clone(), s.dashed)))
        .collect();
    if let Some((_, label)) = &spec.h_line {
        legend.push((label.clone(), "#555555".to_string(), true));
    }
    for (i, (label, color, dashed)) in legend.iter().enumerate() {
        let y = TOP + 16.0 + i as f64 * 18.0;
        let dash = if *dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"{}\" \
             stroke-width=\"2.5\"{dash}/>\n",
            RIGHT - 200.0,
            RIGHT - 172.0,
            esc(color)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            RIGHT - 164.0,
            y + 4.0,
            esc(label)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
