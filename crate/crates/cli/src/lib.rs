//! Scenario runner behind the `yamabe` binary.

pub mod config;
pub mod expr;
pub mod plots;
pub mod report;
pub mod runner;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use config::{Overrides, ScenarioConfig};
use report::{DumpEntry, RunReport, Status};

/// Exit status and report location of one run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub name: String,
    pub exit_code: i32,
    pub report_path: Option<PathBuf>,
    pub message: Option<String>,
}

fn default_report_path(config: &ScenarioConfig) -> PathBuf {
    match &config.output.report {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(format!("{}.report.json", config.name)),
    }
}

fn dump_dir(report_path: &Path) -> PathBuf {
    let name = report_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.trim_end_matches(".json").trim_end_matches(".report");
    report_path.with_file_name(format!("{stem}_fields"))
}

fn write_report(path: &Path, report: &RunReport) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, report.to_json())
}

/// Loads, runs and reports one config file.
pub fn run_file(config_path: &Path, report_path: Option<&Path>, overrides: &Overrides) -> RunSummary {
    let mut config = match ScenarioConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            let message = format!("{}: {e}", config_path.display());
            let mut written = None;
            if let Some(path) = report_path {
                let mut report = RunReport::new(None);
                report.finish(Status::ConfigError, Some(message.clone()));
                if write_report(path, &report).is_ok() {
                    written = Some(path.to_path_buf());
                }
            }
            return RunSummary {
                name: config_path.display().to_string(),
                exit_code: Status::ConfigError.exit_code(),
                report_path: written,
                message: Some(message),
            };
        }
    };
    config.apply(overrides);
    let path = report_path.map(Path::to_path_buf).unwrap_or_else(|| default_report_path(&config));
    let out = runner::run_config(&config);
    let mut report = out.report;
    let mut message = report.error.clone();
    if config.output.dump_fields && !out.fields.is_empty() {
        let dir = dump_dir(&path);
        let dir_name = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let written = fs::create_dir_all(&dir).map_err(yamabe_core::Error::from).and_then(|()| {
            out.fields
                .iter()
                .map(|(name, field)| {
                    yamabe_core::io::write_field(&dir.join(format!("{name}.json")), name, field).map(|()| DumpEntry {
                        name: name.clone(),
                        path: format!("{dir_name}/{name}.json"),
                    })
                })
                .collect::<yamabe_core::Result<Vec<_>>>()
        });
        match written {
            Ok(entries) => report.dumps = entries,
            Err(e) => {
                let msg = format!("field dump failed: {e}");
                report.finish(Status::NumericalFailure, Some(msg.clone()));
                message = Some(msg);
            }
        }
    }
    let exit_code = report.exit_code;
    let report_path = match write_report(&path, &report) {
        Ok(()) => Some(path),
        Err(e) => {
            message = Some(format!("cannot write report {}: {e}", path.display()));
            None
        }
    };
    RunSummary {
        name: config.name,
        exit_code: if report_path.is_some() { exit_code } else { 4 },
        report_path,
        message,
    }
}

/// Runs every `*.json` config in `dir`, writing reports into `out_dir`.
pub fn run_batch(dir: &Path, out_dir: &Path, overrides: &Overrides, jobs: usize) -> std::io::Result<Vec<RunSummary>> {
    let mut configs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    fs::create_dir_all(out_dir)?;
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; configs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(configs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(i) else { break };
                let stem = cfg.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let report = out_dir.join(format!("{stem}.report.json"));
                let summary = run_file(cfg, Some(&report), overrides);
                results.lock().expect("results lock")[i] = Some(summary);
            });
        }
    });
    Ok(results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|s| s.expect("every config ran"))
        .collect())
}
