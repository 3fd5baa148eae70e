//! Diagnostic emission: four CSV tables and matching self-rendered SVG
//! plots (offline data scatter, model predictions with ensemble spread,
//! per-sample model error vs sampling weight, and the Q curve at s = 0).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use midl_core::agent::{concat_sa, load_agent};
use midl_core::dataset::OfflineDataset;
use midl_core::ensemble::{rollout, GaussianEnsemble, ModelBuffer};
use midl_core::nn::gaussian_kl;
use midl_core::ratio::sampling_weights;
use midl_core::toy::toy_mean_sigma;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::RunConfig;
use crate::pipeline::{RunPaths, StageError};

const STAGE: &str = "plot";
pub const GRID_POINTS: usize = 401;

fn write_file(path: &Path, contents: &str) -> Result<(), StageError> {
    fs::write(path, contents).map_err(|e| StageError::new(STAGE, e))
}

/// Emits every diagnostic panel into `<run>/diagnostics/`.
pub fn emit_diagnostics(config: &RunConfig, paths: &RunPaths) -> Result<(), StageError> {
    let dataset = OfflineDataset::load(&paths.dataset).map_err(|e| StageError::new(STAGE, e))?;
    let ensemble = GaussianEnsemble::load(&paths.model).map_err(|e| StageError::new(STAGE, e))?;
    let snapshot = load_agent(&paths.agent).map_err(|e| StageError::new(STAGE, e))?;
    fs::create_dir_all(&paths.diagnostics).map_err(|e| StageError::new(STAGE, e))?;

    // (a) offline data scatter
    let mut csv = String::from("s,a,r,s_next\n");
    let mut pts = Vec::new();
    for t in dataset.transitions() {
        let _ = writeln!(csv, "{},{},{},{}", t.state[0], t.action[0], t.reward, t.next_state[0]);
        pts.push((t.action[0], t.next_state[0]));
    }
    write_file(&paths.diagnostics.join("offline_data.csv"), &csv)?;
    let svg = SvgPlot::new("offline data: next state vs action")
        .scatter(&pts, "#3465a4", 1.6)
        .render();
    write_file(&paths.diagnostics.join("offline_data.svg"), &svg)?;

    // (b) model predictions along the action axis at s = 0
    let mut csv = String::from("a,pred_mean,elite_spread,sigma_avg,true_mean,true_sigma\n");
    let mut mean_line = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    let mut truth = Vec::new();
    let mut spread_by_a = Vec::new();
    for k in 0..GRID_POINTS {
        let a = -1.0 + 2.0 * k as f64 / (GRID_POINTS - 1) as f64;
        let g = ensemble
            .elite_gaussians(ndarray::array![0.0].view(), ndarray::array![a].view())
            .map_err(|e| StageError::new(STAGE, e))?;
        let n = g.len() as f64;
        let mean = g.iter().map(|(m, _)| m[0]).sum::<f64>() / n;
        let spread =
            (g.iter().map(|(m, _)| (m[0] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sigma = g.iter().map(|(_, s)| s[0]).sum::<f64>() / n;
        let (tm, ts) = toy_mean_sigma(a).map_err(|e| StageError::new(STAGE, e))?;
        let _ = writeln!(csv, "{a},{mean},{spread},{sigma},{tm},{ts}");
        mean_line.push((a, mean));
        upper.push((a, mean + spread + sigma));
        lower.push((a, mean - spread - sigma));
        truth.push((a, tm));
        spread_by_a.push((a, spread));
    }
    write_file(&paths.diagnostics.join("model_predictions.csv"), &csv)?;
    let svg = SvgPlot::new("model prediction at s = 0 (band: spread + sigma)")
        .line(&upper, "#f5b7b1", 1.0)
        .line(&lower, "#f5b7b1", 1.0)
        .line(&mean_line, "#c0392b", 2.0)
        .line(&truth, "#2e7d32", 1.2)
        .render();
    write_file(&paths.diagnostics.join("model_predictions.svg"), &svg)?;

    // (c) per-sample model error vs omega on a fresh model batch
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x00d1_a600_0000_0004);
    let mut buffer = ModelBuffer::new(10_000);
    let actor = snapshot.actor.clone();
    rollout(
        &ensemble,
        |states, r| actor.sample_batch(states, r).actions,
        &dataset,
        config.agent.horizon,
        1000,
        &mut buffer,
        &mut rng,
    )
    .map_err(|e| StageError::new(STAGE, e))?;
    let n = buffer.len().min(1000);
    let idx = buffer.sample_indices(n, &mut rng);
    let states = Array2::from_shape_fn((n, 1), |(r, _)| buffer.get(idx[r]).transition.state[0]);
    let actions = Array2::from_shape_fn((n, 1), |(r, _)| {
        buffer.get(idx[r]).transition.action[0].clamp(-1.0, 1.0)
    });
    let weights = sampling_weights(
        &snapshot.discriminators,
        &ensemble,
        states.view(),
        actions.view(),
        config.agent.g_samples,
        config.error_mode().expect("validated config"),
        &mut rng,
    )
    .map_err(|e| StageError::new(STAGE, e))?;
    let mut csv = String::from("s,a,g,omega,true_kl\n");
    let mut low_err = Vec::new();
    let mut high_err = Vec::new();
    let mut omega_order: Vec<usize> = (0..n).collect();
    omega_order.sort_by(|&x, &y| weights.omega[y].partial_cmp(&weights.omega[x]).unwrap());
    let top_decile = &omega_order[..n / 10];
    for r in 0..n {
        let (tm, ts) = toy_mean_sigma(actions[[r, 0]]).map_err(|e| StageError::new(STAGE, e))?;
        let g = ensemble
            .elite_gaussians(states.row(r), actions.row(r))
            .map_err(|e| StageError::new(STAGE, e))?;
        let kl = g
            .iter()
            .map(|(m, sd)| gaussian_kl(m[0], sd[0], tm, ts))
            .sum::<f64>()
            / g.len() as f64;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            states[[r, 0]],
            actions[[r, 0]],
            weights.g[r],
            weights.omega[r],
            kl
        );
        if top_decile.contains(&r) {
            high_err.push((actions[[r, 0]], kl.max(1e-6).ln()));
        } else {
            low_err.push((actions[[r, 0]], kl.max(1e-6).ln()));
        }
    }
    write_file(&paths.diagnostics.join("model_error.csv"), &csv)?;
    let svg = SvgPlot::new("log model error vs action (red: top-decile omega)")
        .scatter(&low_err, "#2e7d32", 1.6)
        .scatter(&high_err, "#c0392b", 2.2)
        .render();
    write_file(&paths.diagnostics.join("model_error.svg"), &svg)?;

    // (d) Q(s = 0, a) over the action grid with the argmax marked
    let mut grid = Array2::zeros((GRID_POINTS, 1));
    for k in 0..GRID_POINTS {
        grid[[k, 0]] = -1.0 + 2.0 * k as f64 / (GRID_POINTS - 1) as f64;
    }
    let zeros = Array2::zeros((GRID_POINTS, 1));
    let sa = concat_sa(zeros.view(), grid.view());
    let q1 = midl_core::agent::CriticPair::q_values(&snapshot.critics.q1, sa.view());
    let q2 = midl_core::agent::CriticPair::q_values(&snapshot.critics.q2, sa.view());
    let mut best = 0;
    let mut q_line = Vec::new();
    let mut csv = String::from("a,q_min,q1,q2,is_argmax\n");
    let qmin: Vec<f64> = (0..GRID_POINTS).map(|k| q1[k].min(q2[k])).collect();
    for k in 0..GRID_POINTS {
        if qmin[k] > qmin[best] {
            best = k;
        }
    }
    for k in 0..GRID_POINTS {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            grid[[k, 0]],
            qmin[k],
            q1[k],
            q2[k],
            if k == best { 1 } else { 0 }
        );
        q_line.push((grid[[k, 0]], qmin[k]));
    }
    write_file(&paths.diagnostics.join("q_curve.csv"), &csv)?;
    let svg = SvgPlot::new("Q(s = 0, a) with argmax marker")
        .line(&q_line, "#1a1a1a", 2.0)
        .vline(grid[[best, 0]], "#c0392b")
        .render();
    write_file(&paths.diagnostics.join("q_curve.svg"), &svg)?;
    Ok(())
}

/// Tiny SVG renderer: fixed viewport, auto-scaled axes, lines and dots.
pub struct SvgPlot {
    title: String,
    elements: Vec<String>,
    xr: (f64, f64),
    yr: (f64, f64),
    shapes: Vec<Shape>,
}

enum Shape {
    Line(Vec<(f64, f64)>, String, f64),
    Scatter(Vec<(f64, f64)>, String, f64),
    VLine(f64, String),
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 48.0;

impl SvgPlot {
    pub fn new(title: &str) -> Self {
        SvgPlot {
            title: title.to_string(),
            elements: Vec::new(),
            xr: (f64::INFINITY, f64::NEG_INFINITY),
            yr: (f64::INFINITY, f64::NEG_INFINITY),
            shapes: Vec::new(),
        }
    }

    fn grow(&mut self, pts: &[(f64, f64)]) {
        for &(x, y) in pts {
            self.xr.0 = self.xr.0.min(x);
            self.xr.1 = self.xr.1.max(x);
            self.yr.0 = self.yr.0.min(y);
            self.yr.1 = self.yr.1.max(y);
        }
    }

    pub fn line(mut self, pts: &[(f64, f64)], color: &str, width: f64) -> Self {
        self.grow(pts);
        self.shapes.push(Shape::Line(pts.to_vec(), color.to_string(), width));
        self
    }

    pub fn scatter(mut self, pts: &[(f64, f64)], color: &str, radius: f64) -> Self {
        self.grow(pts);
        self.shapes
            .push(Shape::Scatter(pts.to_vec(), color.to_string(), radius));
        self
    }

    pub fn vline(mut self, x: f64, color: &str) -> Self {
        self.shapes.push(Shape::VLine(x, color.to_string()));
        self
    }

    fn sx(&self, x: f64) -> f64 {
        let span = (self.xr.1 - self.xr.0).max(1e-12);
        MARGIN + (x - self.xr.0) / span * (W - 2.0 * MARGIN)
    }

    fn sy(&self, y: f64) -> f64 {
        let span = (self.yr.1 - self.yr.0).max(1e-12);
        H - MARGIN - (y - self.yr.0) / span * (H - 2.0 * MARGIN)
    }

    pub fn render(mut self) -> String {
        if !self.xr.0.is_finite() {
            self.xr = (0.0, 1.0);
            self.yr = (0.0, 1.0);
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
        );
        let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            W / 2.0,
            self.title
        );
        // axes
        let _ = writeln!(
            out,
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#555\"/>\
             <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"#555\"/>",
            m = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN,
            t = MARGIN
        );
        for (v, x, y, anchor) in [
            (self.xr.0, MARGIN, H - MARGIN + 16.0, "middle"),
            (self.xr.1, W - MARGIN, H - MARGIN + 16.0, "middle"),
            (self.yr.0, MARGIN - 6.0, H - MARGIN, "end"),
            (self.yr.1, MARGIN - 6.0, MARGIN + 4.0, "end"),
        ] {
            let _ = writeln!(
                out,
                "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{v:.2}</text>"
            );
        }
        let shapes = std::mem::take(&mut self.shapes);
        for shape in &shapes {
            match shape {
                Shape::Line(pts, color, width) => {
                    let mut d = String::new();
                    for (i, &(x, y)) in pts.iter().enumerate() {
                        let cmd = if i == 0 { 'M' } else { 'L' };
                        let _ = write!(d, "{cmd}{:.2},{:.2} ", self.sx(x), self.sy(y));
                    }
                    let _ = writeln!(
                        out,
                        "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>"
                    );
                }
                Shape::Scatter(pts, color, radius) => {
                    for &(x, y) in pts {
                        let _ = writeln!(
                            out,
                            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{radius}\" fill=\"{color}\" fill-opacity=\"0.6\"/>",
                            self.sx(x),
                            self.sy(y)
                        );
                    }
                }
                Shape::VLine(x, color) => {
                    let _ = writeln!(
                        out,
                        "<line x1=\"{x0:.2}\" y1=\"{t}\" x2=\"{x0:.2}\" y2=\"{b}\" stroke=\"{color}\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\"/>",
                        x0 = self.sx(*x),
                        t = MARGIN,
                        b = H - MARGIN
                    );
                }
            }
        }
        for e in &self.elements {
            let _ = writeln!(out, "{e}");
        }
        out.push_str("</svg>\n");
        out
    }
}
