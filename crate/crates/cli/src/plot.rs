//! Hand-written SVG: learning curves with mean ± SD bands, and top-down
//! episode replays. Output bytes depend only on the input data.

use std::fmt::Write;

use acute::env::{Layout, ObjectKind};
use acute::metrics::{aggregate_trials, AggregatePoint, LearningCurve};

use crate::artifacts::Replay;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One method's trials, already on a shared timestep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodCurves {
    pub method: String,
    pub config_sha256: String,
    pub seed: String,
    pub curves: Vec<LearningCurve>,
}

impl MethodCurves {
    /// Earliest sunk cost among the trials; the band starts here.
    pub fn start(&self) -> usize {
        self.curves
            .iter()
            .map(|c| c.sunk_cost_timesteps)
            .min()
            .unwrap_or(0)
    }

    pub fn end(&self) -> usize {
        self.curves
            .iter()
            .filter_map(|c| c.points.last())
            .map(|p| p.cumulative_timesteps)
            .max()
            .unwrap_or(0)
    }

    /// Mean ± SD on `count` checkpoints from [`start`](Self::start) to `end`.
    /// A single trial has SD 0.
    pub fn band(&self, end: usize, count: usize) -> Vec<AggregatePoint> {
        let start = self.start();
        let count = count.max(2);
        let grid: Vec<usize> = (0..count)
            .map(|i| start + ((end - start) as u128 * i as u128 / (count as u128 - 1)) as usize)
            .collect();
        match self.curves.len() {
            0 => Vec::new(),
            1 => grid
                .iter()
                .map(|&t| AggregatePoint {
                    timesteps: t,
                    mean: self.curves[0].value_at(t),
                    sd: 0.0,
                })
                .collect(),
            _ => aggregate_trials(&self.curves, &grid).expect("at least two curves"),
        }
    }
}

/// Compact tick label: 1500 -> "1.5k", 2000000 -> "2M".
pub fn si(v: f64) -> String {
    let (x, suffix) = match v.abs() {
        a if a >= 1e6 => (v / 1e6, "M"),
        a if a >= 1e3 => (v / 1e3, "k"),
        _ => (v, ""),
    };
    let s = format!("{x:.1}");
    let s = s.strip_suffix(".0").unwrap_or(&s);
    format!("{s}{suffix}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Learning curves of target-task return against cumulative timesteps.
pub fn curves_svg(methods: &[MethodCurves], grid_points: usize) -> String {
    let x_max = methods
        .iter()
        .map(MethodCurves::end)
        .max()
        .unwrap_or(0)
        .max(1);
    let bands: Vec<Vec<AggregatePoint>> =
        methods.iter().map(|m| m.band(x_max, grid_points)).collect();
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in bands.iter().flatten() {
        y_lo = y_lo.min(p.mean - p.sd);
        y_hi = y_hi.max(p.mean + p.sd);
    }
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if y_hi - y_lo < 1e-9 {
        y_hi = y_lo + 1.0;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let sx = |t: f64| MARGIN_LEFT + plot_w * t / x_max as f64;
    let sy = |v: f64| MARGIN_Y + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo));

    let mut s = String::new();
    writeln!(s, r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##).unwrap();
    for m in methods {
        writeln!(
            s,
            "<!-- method={} config_sha256={} seed={} -->",
            escape(&m.method),
            m.config_sha256,
            m.seed
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"##
    )
    .unwrap();
    let (x0, x1, y0, y1) = (sx(0.0), sx(x_max as f64), sy(y_lo), sy(y_hi));
    writeln!(s, r##"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"##).unwrap();
    for i in 0..=5 {
        let t = x_max as f64 * i as f64 / 5.0;
        let x = sx(t);
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"##,
            y0 + 5.0
        )
        .unwrap();
        writeln!(
            s,
            r##"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"##,
            y0 + 18.0,
            si(t)
        )
        .unwrap();
        let v = y_lo + (y_hi - y_lo) * i as f64 / 5.0;
        let y = sy(v);
        writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/>"##,
            x0 - 5.0
        )
        .unwrap();
        writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"##,
            x0 - 8.0,
            y + 4.0,
            si(v)
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">cumulative timesteps (sunk cost included)</text>"##,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 6.0
    )
    .unwrap();
    writeln!(
        s,
        r##"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">target-task return</text>"##,
        MARGIN_Y + plot_h / 2.0,
        MARGIN_Y + plot_h / 2.0
    )
    .unwrap();

    for (i, (m, band)) in methods.iter().zip(&bands).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if band.is_empty() {
            continue;
        }
        let mut poly = String::new();
        for p in band {
            write!(
                poly,
                "{:.2},{:.2} ",
                sx(p.timesteps as f64),
                sy(p.mean + p.sd)
            )
            .unwrap();
        }
        for p in band.iter().rev() {
            write!(
                poly,
                "{:.2},{:.2} ",
                sx(p.timesteps as f64),
                sy(p.mean - p.sd)
            )
            .unwrap();
        }
        writeln!(
            s,
            r##"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"##,
            poly.trim_end()
        )
        .unwrap();
        let line: Vec<String> = band
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.timesteps as f64), sy(p.mean)))
            .collect();
        writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"##,
            line.join(" ")
        )
        .unwrap();
        let ly = MARGIN_Y + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        writeln!(
            s,
            r##"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"##,
            ly
        )
        .unwrap();
        writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"##,
            lx + 18.0,
            ly + 10.0,
            escape(&m.method)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn object_color(kind: ObjectKind) -> &'static str {
    match kind {
        ObjectKind::Tree => "#2ca02c",
        ObjectKind::Rock => "#7f7f7f",
        ObjectKind::CraftingTable => "#8c564b",
        ObjectKind::Fire => "#d62728",
    }
}

/// Top-down view of the arena at reset with the agent's path drawn over it.
pub fn replay_svg(replay: &Replay) -> String {
    let Layout {
        width,
        height,
        agent,
        objects,
        ..
    } = &replay.trajectory.layout;
    let size = 480.0;
    let k = (size - 40.0) / width.max(*height);
    // world y points up; SVG y points down
    let px = |x: f64| 20.0 + k * x;
    let py = |y: f64| 20.0 + k * (height - y);

    let mut s = String::new();
    writeln!(s, r##"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"##).unwrap();
    writeln!(
        s,
        "<!-- config_sha256={} seed={} trial={} success={} return={} -->",
        replay.config_sha256, replay.seed, replay.trial, replay.success, replay.ret
    )
    .unwrap();
    writeln!(
        s,
        r##"<rect width="{size}" height="{size}" fill="white"/>"##
    )
    .unwrap();
    writeln!(
        s,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#f7f7f0" stroke="black"/>"##,
        px(0.0),
        py(*height),
        k * width,
        k * height
    )
    .unwrap();
    for o in objects {
        writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{}" fill-opacity="0.8"/>"##,
            px(o.x),
            py(o.y),
            k * o.radius,
            object_color(o.kind)
        )
        .unwrap();
    }
    let mut path = vec![format!("{:.2},{:.2}", px(agent.x), py(agent.y))];
    path.extend(
        replay
            .trajectory
            .steps
            .iter()
            .map(|st| format!("{:.2},{:.2}", px(st.agent.x), py(st.agent.y))),
    );
    writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
        path.join(" ")
    )
    .unwrap();
    writeln!(
        s,
        r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1f77b4"/>"##,
        px(agent.x),
        py(agent.y)
    )
    .unwrap();
    if let Some(last) = replay.trajectory.steps.last() {
        writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="#1f77b4"/>"##,
            px(last.agent.x),
            py(last.agent.y)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn method(name: &str, sunk: usize, returns: &[f64]) -> MethodCurves {
        let n = returns.len();
        MethodCurves {
            method: name.into(),
            config_sha256: "0".repeat(64),
            seed: "1".into(),
            curves: vec![LearningCurve::from_episodes(
                sunk,
                &vec![10; n],
                returns,
                &vec![false; n],
            )],
        }
    }

    #[test]
    fn tick_labels() {
        assert_eq!(si(1500.0), "1.5k");
        assert_eq!(si(2_000_000.0), "2M");
        assert_eq!(si(0.0), "0");
        assert_eq!(si(-250.0), "-250");
    }

    #[test]
    fn band_starts_at_the_sunk_cost() {
        let m = method("ac", 500, &[1.0, 2.0, 3.0]);
        let band = m.band(530, 4);
        assert_eq!(band[0].timesteps, 500);
        assert_eq!(band.last().unwrap().timesteps, 530);
        assert_eq!(band.last().unwrap().mean, 3.0);
    }

    #[test]
    fn svg_is_deterministic_and_axis_starts_at_zero() {
        let ms = [
            method("ac", 500, &[1.0, 2.0]),
            method("scratch", 0, &[0.0, 5.0]),
        ];
        let a = curves_svg(&ms, 10);
        assert_eq!(a, curves_svg(&ms, 10));
        assert!(a.contains(">0</text>"));
        assert!(a.contains("method=ac"));
        // the AC band's first vertex sits at x = 500 of 520
        let x = MARGIN_LEFT + (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) * 500.0 / 520.0;
        assert!(a.contains(&format!("<polygon points=\"{x:.2},")));
    }
}
