//! Standalone SVG plots of metrics logs and trajectories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gapsac::sim2real::{make_setpoint, scale_action, CommandFeedback, InnerLoopGains};
use gapsac::trainer::{smooth_rewards, METRICS_HEADER};
use gapsac::world::TRAJECTORY_HEADER;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("{path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("{path}: file holds no data rows")]
    Empty { path: PathBuf },
    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}`")]
    Parse { path: PathBuf, row: usize, column: String, value: String },
    #[error("{path}: row {row} has {found} columns, expected {expected}")]
    Width { path: PathBuf, row: usize, found: usize, expected: usize },
    #[error("{path}: header matches neither a metrics log nor a trajectory")]
    UnknownKind { path: PathBuf },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

/// A numeric CSV table.
#[derive(Clone, Debug)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, PlotError> {
        let read_err = |msg: String| PlotError::Read { path: path.to_path_buf(), msg };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(path)
            .map_err(|e| read_err(e.to_string()))?;
        let header: Vec<String> = rdr.headers().map_err(|e| read_err(e.to_string()))?.iter().map(str::to_string).collect();
        if header.iter().all(String::is_empty) {
            return Err(PlotError::Empty { path: path.to_path_buf() });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| read_err(e.to_string()))?;
            let row = i + 2;
            if rec.len() != header.len() {
                return Err(PlotError::Width { path: path.to_path_buf(), row, found: rec.len(), expected: header.len() });
            }
            let vals = rec
                .iter()
                .zip(&header)
                .map(|(v, col)| {
                    v.trim().parse::<f64>().map_err(|_| PlotError::Parse {
                        path: path.to_path_buf(),
                        row,
                        column: col.clone(),
                        value: v.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(PlotError::Empty { path: path.to_path_buf() });
        }
        Ok(Self { path: path.to_path_buf(), header, rows })
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let j = self.header.iter().position(|h| h == name).expect("column checked by kind detection");
        self.rows.iter().map(|r| r[j]).collect()
    }

    fn header_line(&self) -> String {
        self.header.join(",")
    }
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

/// A plain x-y line chart.
#[derive(Clone, Debug)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 55.0); // left, right, top, bottom
const MAX_POINTS: usize = 4000;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Roughly `n` round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= n as f64).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn decimate(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let k = points.len().div_ceil(MAX_POINTS).max(1);
    points.iter().step_by(k).copied().collect()
}

impl LineChart {
    pub fn to_svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self.series.iter().flat_map(|s| s.points.iter().copied()).filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        if pts.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 <= 0.0 {
            let pad = y0.abs().max(1.0) * 0.05;
            y0 -= pad;
            y1 += pad;
        }
        let (ml, mr, mt, mb) = MARGIN;
        let pw = WIDTH - ml - mr;
        let ph = HEIGHT - mt - mb;
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        for t in ticks(x0, x1, 8) {
            let x = sx(t);
            let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{mt}" x2="{x:.1}" y2="{:.1}" stroke="#e5e5e5"/>"##, mt + ph);
            let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, mt + ph + 16.0, fmt_tick(t));
        }
        for t in ticks(y0, y1, 6) {
            let y = sy(t);
            let _ = writeln!(s, r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e5e5e5"/>"##, ml + pw);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 6.0, y + 4.0, fmt_tick(t));
        }
        let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, HEIGHT - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            mt + ph / 2.0,
            mt + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let path: Vec<String> = decimate(&series.points)
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                series.color,
                path.join(" ")
            );
            let ly = mt + 14.0 + 16.0 * k as f64;
            let lx = ml + pw - 150.0;
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/>"#, lx + 24.0, series.color);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&series.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Raw and smoothed episode reward against episode index.
pub fn reward_curve(metrics: &Table) -> LineChart {
    let ep = metrics.column("episode");
    let r = metrics.column("episode_reward");
    let smooth = smooth_rewards(&r);
    LineChart {
        title: "Episode reward".into(),
        x_label: "episode".into(),
        y_label: "reward".into(),
        series: vec![
            Series { name: "raw".into(), color: "#9ecae1", points: ep.iter().copied().zip(r).collect(), dashed: false },
            Series { name: "smoothed".into(), color: "#08519c", points: ep.into_iter().zip(smooth).collect(), dashed: false },
        ],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Roll,
    Pitch,
    Altitude,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Roll, Channel::Pitch, Channel::Altitude];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Roll => "roll",
            Channel::Pitch => "pitch",
            Channel::Altitude => "altitude",
        }
    }
}

/// Setpoint issued at each row (rebuilt from the logged state and action)
/// and the measured response.
pub fn command_response(traj: &Table, channel: Channel) -> LineChart {
    let dt = InnerLoopGains::<f64>::default().outer_period();
    let col = |n: &str| traj.column(n);
    let (t, phi, theta, pz, wx, wy, vz) = (col("t"), col("phi"), col("theta"), col("pz"), col("wx"), col("wy"), col("vz"));
    let (ar, ap, aa) = (col("a_roll"), col("a_pitch"), col("a_alt"));
    let mut cmd = Vec::with_capacity(t.len());
    let mut resp = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let fb = CommandFeedback { roll: phi[i], pitch: theta[i], roll_rate: wx[i], pitch_rate: wy[i], altitude: pz[i], climb_rate: vz[i] };
        let Ok(accel) = scale_action([ar[i], ap[i], aa[i]]) else { continue };
        let sp = make_setpoint(&fb, &accel, dt);
        let (c, r) = match channel {
            Channel::Roll => (sp.roll, phi[i]),
            Channel::Pitch => (sp.pitch, theta[i]),
            Channel::Altitude => (sp.altitude, pz[i]),
        };
        cmd.push((t[i], c));
        resp.push((t[i], r));
    }
    let unit = if channel == Channel::Altitude { "m" } else { "rad" };
    LineChart {
        title: format!("{} command and response", channel.name()),
        x_label: "time (s)".into(),
        y_label: format!("{} ({unit})", channel.name()),
        series: vec![
            Series { name: "command".into(), color: "#d62728", points: cmd, dashed: true },
            Series { name: "response".into(), color: "#1f77b4", points: resp, dashed: false },
        ],
    }
}

/// Oblique projection of the flight path: x to the right, z up, y receding.
pub fn trajectory_projection(traj: &Table) -> LineChart {
    let (px, py, pz) = (traj.column("px"), traj.column("py"), traj.column("pz"));
    let (c, s) = (0.5 * std::f64::consts::FRAC_PI_6.cos(), 0.5 * std::f64::consts::FRAC_PI_6.sin());
    let points = (0..px.len()).map(|i| (px[i] + c * py[i], pz[i] + s * py[i])).collect();
    let ground = (0..px.len()).map(|i| (px[i] + c * py[i], s * py[i])).collect();
    LineChart {
        title: "Flight path (oblique projection)".into(),
        x_label: "x + 0.43 y (m)".into(),
        y_label: "z + 0.25 y (m)".into(),
        series: vec![
            Series { name: "path".into(), color: "#2ca02c", points, dashed: false },
            Series { name: "ground track".into(), color: "#7f7f7f", points: ground, dashed: true },
        ],
    }
}

fn write_svg(path: PathBuf, chart: &LineChart) -> Result<PathBuf, PlotError> {
    std::fs::write(&path, chart.to_svg()).map_err(|source| PlotError::Write { path: path.clone(), source })?;
    Ok(path)
}

/// Renders every input into `out_dir`; returns the files written.
pub fn plot_files(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    std::fs::create_dir_all(out_dir).map_err(|source| PlotError::Write { path: out_dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    for input in inputs {
        let table = Table::read(input)?;
        let stem = input.file_stem().map_or_else(|| "plot".into(), |s| s.to_string_lossy().into_owned());
        let header = table.header_line();
        if header == METRICS_HEADER {
            written.push(write_svg(out_dir.join(format!("{stem}_reward.svg")), &reward_curve(&table))?);
        } else if header == TRAJECTORY_HEADER {
            for ch in Channel::ALL {
                written.push(write_svg(out_dir.join(format!("{stem}_{}.svg", ch.name())), &command_response(&table, ch))?);
            }
            written.push(write_svg(out_dir.join(format!("{stem}_path.svg")), &trajectory_projection(&table))?);
        } else {
            return Err(PlotError::UnknownKind { path: input.clone() });
        }
    }
    Ok(written)
}
