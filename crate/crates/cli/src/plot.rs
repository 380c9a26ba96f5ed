//! Minimal in-process SVG emission: log-y line charts with a shaded
//! ±1 standard deviation band per series.

/// One curve: points plus an optional uncertainty extent per point. For
/// iteration plots the band is vertical (on y); for timing plots it is
/// horizontal (on x).
pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Half-width of the shaded band at each point, in x units (None for
    /// a y band given by `y_band`).
    pub x_band: Option<Vec<f64>>,
    pub y_band: Option<Vec<f64>>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

/// Floor for the logarithmic axis; zero errors are clamped here.
pub const Y_FLOOR: f64 = 1e-16;

struct Frame {
    x_min: f64,
    x_max: f64,
    // log10 range
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-300);
        MARGIN_L + (v - self.x_min) / span * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let lv = v.max(Y_FLOOR).log10();
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN_B - (lv - self.y_min) / span * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn nice_x_ticks(min: f64, max: f64) -> Vec<f64> {
    let span = (max - min).max(1e-300);
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|s| s * mag)
        .find(|&s| span / s <= 7.0)
        .unwrap_or(mag * 10.0);
    let mut ticks = Vec::new();
    let mut t = (min / step).ceil() * step;
    while t <= max + step * 1e-9 {
        ticks.push(t);
        t += step;
    }
    ticks
}

/// Renders the chart. `y` values are errors (log scale); series are drawn
/// in a fixed color order with a legend.
pub fn render(title: &str, x_label: &str, series: &[Series]) -> String {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in series {
        for (i, (&x, &y)) in s.xs.iter().zip(&s.ys).enumerate() {
            let dx = s.x_band.as_ref().map(|b| b[i]).unwrap_or(0.0);
            x_min = x_min.min(x - dx);
            x_max = x_max.max(x + dx);
            let y = y.max(Y_FLOOR);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_lo = Y_FLOOR;
        y_hi = 1.0;
    }
    let frame = Frame {
        x_min,
        x_max,
        y_min: y_lo.log10().floor(),
        y_max: y_hi.log10().ceil().max(y_lo.log10().floor() + 1.0),
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        title
    ));

    // y grid and decade labels
    let mut dec = frame.y_min as i64;
    while dec <= frame.y_max as i64 {
        let y = frame.y(10f64.powi(dec as i32));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n",
            WIDTH - MARGIN_R
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">1e{dec}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0
        ));
        dec += 1;
    }
    // x grid
    for t in nice_x_ticks(frame.x_min, frame.x_max) {
        let x = frame.x(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{MARGIN_T}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            HEIGHT - MARGIN_B
        ));
        let label = if t.abs() >= 1000.0 || (t != 0.0 && t.abs() < 0.01) {
            format!("{t:.1e}")
        } else {
            format!("{t}")
        };
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{label}</text>\n",
            HEIGHT - MARGIN_B + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {})\">gradient norm</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));

    for (idx, s) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        // shaded band
        if s.xs.len() > 1 {
            let band: Vec<(f64, f64, f64, f64)> = s
                .xs
                .iter()
                .zip(&s.ys)
                .enumerate()
                .map(|(i, (&x, &y))| {
                    let dx = s.x_band.as_ref().map(|b| b[i]).unwrap_or(0.0);
                    let dy = s.y_band.as_ref().map(|b| b[i]).unwrap_or(0.0);
                    (x - dx, x + dx, (y - dy).max(Y_FLOOR), y + dy)
                })
                .collect();
            let mut path = String::from("<polygon points=\"");
            for &(xl, _, _, yh) in &band {
                path.push_str(&format!("{:.1},{:.1} ", frame.x(xl), frame.y(yh)));
            }
            for &(_, xr, yl, _) in band.iter().rev() {
                path.push_str(&format!("{:.1},{:.1} ", frame.x(xr), frame.y(yl)));
            }
            path.push_str(&format!("\" fill=\"{color}\" opacity=\"0.15\" stroke=\"none\"/>\n"));
            svg.push_str(&path);
        }
        // mean line
        let mut line = String::from("<polyline points=\"");
        for (&x, &y) in s.xs.iter().zip(&s.ys) {
            line.push_str(&format!("{:.1},{:.1} ", frame.x(x), frame.y(y)));
        }
        line.push_str(&format!(
            "\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n"
        ));
        svg.push_str(&line);
        // legend entry
        let ly = MARGIN_T + 16.0 * idx as f64 + 8.0;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2.5\"/>\n",
            WIDTH - MARGIN_R - 150.0,
            WIDTH - MARGIN_R - 120.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN_R - 112.0,
            ly + 4.0,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
