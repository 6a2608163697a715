//! Run artifacts: per-signal CSV, manifest, check table, optional SVG.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use mfmc::scenario::{RunReport, ScenarioConfig};
use mfmc::signal::{to_csv, ConcentrationSignal};
use plotters::prelude::*;
use serde::Serialize;

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: &'a str,
    version: &'a str,
    grid: mfmc::TimeGrid,
    seed: u64,
    config: &'a ScenarioConfig,
    summary: Vec<(&'a str, &'a str)>,
    checks: &'a [mfmc::scenario::Check],
    signals: Vec<String>,
    passed: bool,
}

/// File-system safe name for a signal.
fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

pub fn write_run(dir: &Path, config: &ScenarioConfig, report: &RunReport, plot: bool) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, s) in &report.signals {
        let file = format!("{}.csv", file_stem(name));
        let csv = to_csv(&[(name.as_str(), s)]).map_err(io::Error::other)?;
        fs::write(dir.join(&file), csv)?;
        if plot {
            plot_signal(&dir.join(format!("{}.svg", file_stem(name))), name, s).map_err(|e| io::Error::other(e.to_string()))?;
        }
        files.push(file);
    }
    let grid = config.grid.grid().map_err(io::Error::other)?;
    let manifest = Manifest {
        scenario: report.scenario,
        version: env!("CARGO_PKG_VERSION"),
        grid,
        seed: config.seed,
        config,
        summary: report.summary.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
        checks: &report.checks,
        signals: files,
        passed: report.passed(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    let mut table = Vec::new();
    write_checks(&mut table, report)?;
    fs::write(dir.join("checks.txt"), table)
}

fn write_checks(w: &mut impl Write, report: &RunReport) -> io::Result<()> {
    let width = report.checks.iter().map(|c| c.name.chars().count()).max().unwrap_or(0);
    for c in &report.checks {
        let pad = width - c.name.chars().count();
        writeln!(w, "{}  {}{}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, " ".repeat(pad), c.detail)?;
    }
    let passed = report.checks.iter().filter(|c| c.pass).count();
    writeln!(w, "{passed}/{} checks passed", report.checks.len())
}

pub fn print_table(w: &mut impl Write, dir: &Path, report: &RunReport) -> io::Result<()> {
    writeln!(w, "{} -> {}", report.scenario, dir.display())?;
    for (k, v) in &report.summary {
        writeln!(w, "  {k}: {v}")?;
    }
    write_checks(w, report)
}

fn plot_signal(path: &Path, name: &str, s: &ConcentrationSignal) -> Result<(), Box<dyn std::error::Error>> {
    let root = SVGBackend::new(path, (800, 400)).into_drawing_area();
    root.fill(&WHITE)?;
    let t_end = s.time(s.len().saturating_sub(1)).max(s.t0 + s.dt);
    let top = if s.max() > 0.0 { 1.05 * s.max() } else { 1.0 };
    let bottom = s.min().min(0.0);
    let mut chart = ChartBuilder::on(&root)
        .caption(name, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(s.t0..t_end, bottom..top)?;
    chart.configure_mesh().x_desc("t (s)").y_desc("C (mol/m³)").draw()?;
    chart.draw_series(LineSeries::new(s.times().zip(s.samples.iter().copied()), &BLUE))?;
    root.present()?;
    Ok(())
}
