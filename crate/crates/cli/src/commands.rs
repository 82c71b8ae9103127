//! The four harness subcommands.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clib_core::numerics::RngState;
use clib_core::stream::{build_iblurry_split, load_csv_dataset, synth_dataset, Dataset, TaskSchedule};
use clib_core::trainer::{run_train, RunResult};

use crate::config::{DatasetSection, ExperimentConfig, SplitSection};
use crate::error::{CliError, Result};
use crate::report::ResultsFile;
use crate::write_atomic;

pub fn build_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let dataset = match &config.dataset {
        DatasetSection::Synthetic {
            classes,
            dim,
            per_class,
            spread,
            seed,
        } => synth_dataset(*classes, *dim, *per_class, *spread, &mut RngState::new(*seed)),
        DatasetSection::Csv { path } => load_csv_dataset(path)?,
    };
    dataset.validate().map_err(CliError::from_core_validation)?;
    Ok(dataset)
}

pub fn build_schedule(config: &ExperimentConfig, dataset: &Dataset) -> Result<TaskSchedule> {
    match &config.split {
        SplitSection::Inline(spec) => Ok(build_iblurry_split(dataset, spec)?),
        SplitSection::FromFile { path } => Ok(TaskSchedule::load(path)?),
    }
}

/// Build the split and write it as a shareable JSON file. Returns the path.
pub fn cmd_split(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let dataset = build_dataset(config)?;
    let schedule = build_schedule(config, &dataset)?;
    let path = out_dir.join("split.json");
    schedule.save(&path)?;
    Ok(path)
}

/// Run one training job per replicate seed and persist results + curves.
pub fn cmd_run(
    config: &ExperimentConfig,
    out_dir: &Path,
    seeds_override: Option<&[u64]>,
    parallel: usize,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let dataset = build_dataset(config)?;
    let schedule = build_schedule(config, &dataset)?;
    let seeds: Vec<u64> = seeds_override.unwrap_or(&config.seeds).to_vec();
    if seeds.is_empty() {
        return Err(CliError::validation("at least one seed is required".into()));
    }
    let train_configs: Vec<_> = seeds
        .iter()
        .map(|&s| config.resolve_train_config(s))
        .collect::<Result<_>>()?;

    let workers = effective_parallelism(parallel, seeds.len());
    let runs = run_replicates(&train_configs, &schedule, &dataset, workers)?;

    for run in &runs {
        let curve_path = out_dir.join(format!("curve_seed{}.csv", run.config.seed));
        let mut csv = String::from("n,accuracy\n");
        for (i, point) in run.curve.points.iter().enumerate() {
            csv.push_str(&format!("{},{point:.6}\n", (i + 1) * run.curve.delta_n));
        }
        write_atomic(&curve_path, csv.as_bytes())?;
        if run.config.record_lr_trace {
            let trace_path = out_dir.join(format!("lr_trace_seed{}.csv", run.config.seed));
            let mut csv = String::from("update,lr,eta_bar\n");
            for p in &run.lr_trace {
                csv.push_str(&format!("{},{},{}\n", p.update, p.lr, p.eta_bar));
            }
            write_atomic(&trace_path, csv.as_bytes())?;
        }
    }

    let results = ResultsFile::new(config.clone(), runs);
    let path = out_dir.join("results.json");
    results.save(&path)?;
    Ok(path)
}

fn effective_parallelism(requested: usize, jobs: usize) -> usize {
    let cap = std::env::var("CLIB_BENCH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(usize::MAX);
    requested.max(1).min(cap).min(jobs)
}

/// Execute independent replicate runs, optionally in parallel. Results come
/// back in seed order regardless of scheduling, so output files are
/// deterministic for a fixed config.
fn run_replicates(
    configs: &[clib_core::trainer::TrainConfig],
    schedule: &TaskSchedule,
    dataset: &Dataset,
    workers: usize,
) -> Result<Vec<RunResult>> {
    if workers <= 1 {
        return configs
            .iter()
            .map(|c| run_train(c, schedule, dataset).map_err(CliError::from))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunResult>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let outcome = run_train(&configs[i], schedule, dataset).map_err(CliError::from);
                slots.lock().expect("replicate slot lock")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("replicate slot lock")
        .into_iter()
        .map(|r| r.expect("every replicate slot filled"))
        .collect()
}

/// Comparison table over one or more results files. Returns the rendered
/// text table and writes `compare.csv` beside it.
pub fn cmd_compare(files: &[PathBuf], out_dir: &Path) -> Result<String> {
    if files.is_empty() {
        return Err(CliError::validation("compare needs at least one results file".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for path in files {
        let results = ResultsFile::load(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        rows.push((label, results.runs.len(), results.aggregate));
    }

    let mut table = format!(
        "{:<28} {:>6} {:>17} {:>17} {:>17}\n",
        "config", "runs", "A_AUC", "A_avg", "F_last"
    );
    for (label, n, agg) in &rows {
        table.push_str(&format!(
            "{label:<28} {n:>6} {:>8.4}+/-{:.4} {:>8.4}+/-{:.4} {:>8.4}+/-{:.4}\n",
            agg.a_auc.mean,
            agg.a_auc.std,
            agg.a_avg.mean,
            agg.a_avg.std,
            agg.f_last.mean,
            agg.f_last.std,
        ));
    }

    let mut csv = String::from(
        "config,runs,a_auc_mean,a_auc_std,a_avg_mean,a_avg_std,f_last_mean,f_last_std\n",
    );
    for (label, n, agg) in &rows {
        csv.push_str(&format!(
            "{label},{n},{},{},{},{},{},{}\n",
            agg.a_auc.mean,
            agg.a_auc.std,
            agg.a_avg.mean,
            agg.a_avg.std,
            agg.f_last.mean,
            agg.f_last.std,
        ));
    }
    write_atomic(&out_dir.join("compare.csv"), csv.as_bytes())?;
    Ok(table)
}

/// Mean accuracy curve per results file as CSV plus a line-chart SVG.
pub fn cmd_curve(files: &[PathBuf], out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if files.is_empty() {
        return Err(CliError::validation("curve needs at least one results file".into()));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut series = Vec::new();
    for path in files {
        let results = ResultsFile::load(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let first = results
            .runs
            .first()
            .ok_or_else(|| CliError::validation(format!("{}: no runs with curve data", path.display())))?;
        let k = first.curve.points.len();
        if k == 0 || results.runs.iter().any(|r| r.curve.points.len() != k) {
            return Err(CliError::validation(format!(
                "{}: missing or inconsistent curve data",
                path.display()
            )));
        }
        let mut mean = Vec::with_capacity(k);
        let mut std = Vec::with_capacity(k);
        for i in 0..k {
            let column: Vec<f64> = results.runs.iter().map(|r| r.curve.points[i]).collect();
            let stats = crate::report::mean_and_std(&column);
            mean.push(stats.mean);
            std.push(stats.std);
        }
        series.push(CurveSeries {
            label,
            delta_n: first.curve.delta_n,
            mean,
            std,
        });
    }

    let csv_path = out_dir.join("curve.csv");
    let mut csv = if series.len() == 1 {
        String::from("n,mean_acc,std_acc\n")
    } else {
        String::from("config,n,mean_acc,std_acc\n")
    };
    for s in &series {
        for i in 0..s.mean.len() {
            let n = (i + 1) * s.delta_n;
            if series.len() == 1 {
                csv.push_str(&format!("{n},{:.6},{:.6}\n", s.mean[i], s.std[i]));
            } else {
                csv.push_str(&format!("{},{n},{:.6},{:.6}\n", s.label, s.mean[i], s.std[i]));
            }
        }
    }
    write_atomic(&csv_path, csv.as_bytes())?;

    let svg_path = out_dir.join("curve.svg");
    write_atomic(&svg_path, render_svg(&series).as_bytes())?;
    Ok((csv_path, svg_path))
}

struct CurveSeries {
    label: String,
    delta_n: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
}

/// Hand-rolled chart: axes, y gridlines, one polyline per series.
fn render_svg(series: &[CurveSeries]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 20.0;
    const B: f64 = 50.0;
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let max_n = series
        .iter()
        .map(|s| s.mean.len() * s.delta_n)
        .max()
        .unwrap_or(1) as f64;

    let x = |n: f64| L + (W - L - R) * n / max_n;
    let y = |acc: f64| T + (H - T - B) * (1.0 - acc);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    for i in 0..=5 {
        let acc = i as f64 / 5.0;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
            x(0.0),
            y(acc),
            x(max_n),
            y(acc)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{acc:.1}</text>\n",
            x(0.0) - 6.0,
            y(acc) + 4.0
        ));
    }
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000\"/>\n",
        x(0.0),
        y(0.0),
        x(max_n),
        y(0.0)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000\"/>\n",
        x(0.0),
        y(0.0),
        x(0.0),
        y(1.0)
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">samples observed</text>\n",
        (L + W - R) / 2.0,
        H - 12.0
    ));
    for (si, s) in series.iter().enumerate() {
        let color = colors[si % colors.len()];
        let points: Vec<String> = s
            .mean
            .iter()
            .enumerate()
            .map(|(i, &acc)| format!("{:.2},{:.2}", x(((i + 1) * s.delta_n) as f64), y(acc)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            L + 10.0,
            T + 16.0 * (si as f64 + 1.0),
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
