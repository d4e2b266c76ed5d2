use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentError, ModelKind, Task};

/// Test accuracy over training for one model, configuration and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub model: ModelKind,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    /// `(step, accuracy)` in increasing step order.
    pub points: Vec<(usize, f64)>,
}

impl Curve {
    pub fn final_accuracy(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub task: Task,
    pub curves: Vec<Curve>,
}

/// Mean and standard deviation across seeds of one model and configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryGroup {
    pub model: ModelKind,
    pub lr: f64,
    pub batch: usize,
    pub seeds: Vec<u64>,
    pub steps: Vec<usize>,
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    pub final_mean: f64,
    pub final_std: f64,
}

impl SummaryGroup {
    /// First step at which the mean accuracy reaches `threshold`.
    pub fn first_step_reaching(&self, threshold: f64) -> Option<usize> {
        self.steps.iter().zip(&self.mean).find(|(_, &m)| m >= threshold).map(|(&s, _)| s)
    }

    /// Mean accuracy at the last recorded step not after `step`.
    pub fn mean_at(&self, step: usize) -> Option<f64> {
        self.steps.iter().zip(&self.mean).take_while(|(&s, _)| s <= step).last().map(|(_, &m)| m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub task: Task,
    pub groups: Vec<SummaryGroup>,
}

impl Summary {
    pub fn group(&self, model: ModelKind, lr: f64, batch: usize) -> Option<&SummaryGroup> {
        self.groups.iter().find(|g| g.model == model && g.lr == lr && g.batch == batch)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricSeries {
    /// Groups curves by `(model, lr, batch)` in order of first appearance.
    /// Steps missing from some seed are dropped from the group.
    pub fn summary(&self) -> Summary {
        let mut keys: Vec<(ModelKind, f64, usize)> = Vec::new();
        for c in &self.curves {
            let k = (c.model, c.lr, c.batch);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let groups = keys
            .into_iter()
            .map(|(model, lr, batch)| {
                let curves: Vec<&Curve> =
                    self.curves.iter().filter(|c| c.model == model && c.lr == lr && c.batch == batch).collect();
                let steps: Vec<usize> = curves[0]
                    .points
                    .iter()
                    .map(|p| p.0)
                    .filter(|s| curves.iter().all(|c| c.points.iter().any(|p| p.0 == *s)))
                    .collect();
                let (mut mean, mut std) = (Vec::new(), Vec::new());
                for s in &steps {
                    let xs: Vec<f64> =
                        curves.iter().map(|c| c.points.iter().find(|p| p.0 == *s).expect("filtered").1).collect();
                    let (m, sd) = mean_std(&xs);
                    mean.push(m);
                    std.push(sd);
                }
                let finals: Vec<f64> = curves.iter().map(|c| c.final_accuracy()).collect();
                let (final_mean, final_std) = mean_std(&finals);
                SummaryGroup {
                    model,
                    lr,
                    batch,
                    seeds: curves.iter().map(|c| c.seed).collect(),
                    steps,
                    mean,
                    std,
                    final_mean,
                    final_std,
                }
            })
            .collect();
        Summary { task: self.task, groups }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    step: usize,
    seed: u64,
    lr: f64,
    batch: usize,
    model: ModelKind,
    accuracy: f64,
}

/// The CSV form: one row per recorded point, `step,seed,lr,batch,model,accuracy`.
pub fn metrics_csv(series: &MetricSeries) -> Result<String, ExperimentError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["step", "seed", "lr", "batch", "model", "accuracy"])?;
    for c in &series.curves {
        for &(step, accuracy) in &c.points {
            w.serialize(Row { step, seed: c.seed, lr: c.lr, batch: c.batch, model: c.model, accuracy })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses [`metrics_csv`] output back into curves, in order of first appearance.
pub fn parse_metrics_csv(task: Task, text: &str) -> Result<MetricSeries, ExperimentError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut curves: Vec<Curve> = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        let existing = curves
            .iter_mut()
            .find(|c| c.model == row.model && c.lr == row.lr && c.batch == row.batch && c.seed == row.seed);
        match existing {
            Some(c) => c.points.push((row.step, row.accuracy)),
            None => curves.push(Curve {
                model: row.model,
                lr: row.lr,
                batch: row.batch,
                seed: row.seed,
                points: vec![(row.step, row.accuracy)],
            }),
        }
    }
    Ok(MetricSeries { task, curves })
}

pub fn read_metrics_csv(task: Task, path: &Path) -> Result<MetricSeries, ExperimentError> {
    parse_metrics_csv(task, &fs::read_to_string(path)?)
}

/// Paths written by [`export_metrics`].
#[derive(Clone, Debug, PartialEq)]
pub struct Exported {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

/// Writes `metrics.csv`, `summary.json` and `accuracy.svg` into `dir`.
pub fn export_metrics(series: &MetricSeries, dir: &Path) -> Result<Exported, ExperimentError> {
    fs::create_dir_all(dir)?;
    let out =
        Exported { csv: dir.join("metrics.csv"), summary: dir.join("summary.json"), plot: dir.join("accuracy.svg") };
    fs::write(&out.csv, metrics_csv(series)?)?;
    let summary = series.summary();
    fs::write(&out.summary, serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(&out.plot, plot_svg(&summary))?;
    Ok(out)
}

fn color(model: ModelKind) -> &'static str {
    match model {
        ModelKind::I => "#d62728",
        ModelKind::D => "#1f77b4",
        ModelKind::C => "#2ca02c",
        ModelKind::T => "#ff7f0e",
    }
}

/// Accuracy against step, one panel per `(lr, batch)` configuration, with
/// the mean across seeds drawn over a band of one standard deviation.
pub fn plot_svg(summary: &Summary) -> String {
    let mut configs: Vec<(f64, usize)> = Vec::new();
    for g in &summary.groups {
        if !configs.contains(&(g.lr, g.batch)) {
            configs.push((g.lr, g.batch));
        }
    }
    let (pw, ph, pad) = (320.0, 220.0, 40.0);
    let cols = configs.len().clamp(1, 4);
    let rows = configs.len().div_ceil(cols).max(1);
    let width = cols as f64 * (pw + pad) + pad;
    let height = rows as f64 * (ph + pad) + pad + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{pad}" y="20">task {}</text>"#, summary.task);
    for (k, &(lr, batch)) in configs.iter().enumerate() {
        let x0 = pad + (k % cols) as f64 * (pw + pad);
        let y0 = pad + (k / cols) as f64 * (ph + pad);
        let groups: Vec<&SummaryGroup> = summary.groups.iter().filter(|g| g.lr == lr && g.batch == batch).collect();
        let max_step = groups.iter().flat_map(|g| g.steps.last()).copied().max().unwrap_or(1).max(1) as f64;
        let px = |step: usize| x0 + pw * step as f64 / max_step;
        let py = |acc: f64| y0 + ph * (1.0 - acc.clamp(0.0, 1.0));
        let _ = writeln!(s, r##"<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>"##);
        let _ = writeln!(s, r#"<text x="{x0}" y="{}">lr {lr} batch {batch}</text>"#, y0 - 6.0);
        for (i, g) in groups.iter().enumerate() {
            let upper: Vec<String> = g
                .steps
                .iter()
                .zip(g.mean.iter().zip(&g.std))
                .map(|(&st, (m, sd))| format!("{:.1},{:.1}", px(st), py(m + sd)))
                .collect();
            let lower: Vec<String> = g
                .steps
                .iter()
                .zip(g.mean.iter().zip(&g.std))
                .rev()
                .map(|(&st, (m, sd))| format!("{:.1},{:.1}", px(st), py(m - sd)))
                .collect();
            let line: Vec<String> =
                g.steps.iter().zip(&g.mean).map(|(&st, m)| format!("{:.1},{:.1}", px(st), py(*m))).collect();
            let c = color(g.model);
            let _ = writeln!(
                s,
                r#"<polygon points="{} {}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#,
                upper.join(" "),
                lower.join(" ")
            );
            let _ =
                writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, line.join(" "));
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{c}">{}</text>"#,
                x0 + pw - 20.0,
                y0 + ph - 8.0 - 14.0 * i as f64,
                g.model
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
