//! Scenario execution and artifact persistence.

use std::fs;
use std::path::{Path, PathBuf};

use ovna_core::experiment::{
    self, compare_runs, nonlinearity_study, summarize, validate_rotation_rate, Comparison, RateRow,
    SummaryReport,
};

use crate::config::ExperimentConfig;
use crate::{container, tables, Error};

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "OVNA_OUTPUT_DIR";

pub const CONFIG_FILE: &str = "config.toml";
pub const WAVEFORM_FILE: &str = "waveform.ovna";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TRACKING_FILE: &str = "tracking.csv";
pub const PER_CORE_FILE: &str = "per_core_il.csv";
pub const STUDY_FILE: &str = "nonlinearity_study.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

/// Output directory after applying the environment override.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => cfg.output_dir.clone(),
    }
}

/// Removes the staging directory unless the run completes.
struct Staging {
    dir: PathBuf,
    keep: bool,
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.keep {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    out.with_file_name(format!(".{name}.staging-{}", std::process::id()))
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    pub report: SummaryReport,
}

/// Validates, simulates, processes and writes every artifact to `out`
/// (all or nothing).
pub fn run_scenario_to(cfg: &ExperimentConfig, out: &Path) -> Result<RunResult, Error> {
    let setup = cfg.to_setup()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut staging = Staging {
        dir: staging_dir(out),
        keep: false,
    };
    if staging.dir.exists() {
        fs::remove_dir_all(&staging.dir)?;
    }
    fs::create_dir_all(&staging.dir)?;
    let dir = &staging.dir;

    fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    let result = experiment::run(&setup)?;
    container::write_record(&dir.join(WAVEFORM_FILE), &result.synthesis.record)?;
    let metrics = &result.processed.metrics;
    fs::write(dir.join(METRICS_FILE), tables::metrics_csv(metrics)?)?;
    fs::write(
        dir.join(TRACKING_FILE),
        tables::tracking_csv(result.trace())?,
    )?;
    fs::write(
        dir.join(PER_CORE_FILE),
        tables::per_core_csv(&metrics.wavelength, &result.per_core_il)?,
    )?;
    if let Some(study) = cfg.nonlinearity_study {
        let s = nonlinearity_study(&setup, study.channel)?;
        fs::write(dir.join(STUDY_FILE), tables::study_csv(study.channel, &s)?)?;
    }
    let report = summarize(
        &cfg.scenario,
        cfg.apc_enabled,
        metrics,
        result.trace(),
        &cfg.acceptance,
    );
    fs::write(dir.join(SUMMARY_FILE), toml::to_string(&report)?)?;

    if out.exists() {
        fs::remove_dir_all(out)?;
    }
    fs::rename(dir, out)?;
    staging.keep = true;
    Ok(RunResult {
        dir: out.to_path_buf(),
        report,
    })
}

pub fn run_scenario(cfg: &ExperimentConfig) -> Result<RunResult, Error> {
    run_scenario_to(cfg, &output_dir(cfg))
}

/// Summary recomputed from the persisted CSVs and config of a run directory.
pub fn recompute_summary(dir: &Path) -> Result<SummaryReport, Error> {
    let cfg = ExperimentConfig::from_toml(&tables::read(&dir.join(CONFIG_FILE))?)?;
    let metrics = tables::parse_metrics(&tables::read(&dir.join(METRICS_FILE))?)?;
    let trace = tables::parse_tracking(&tables::read(&dir.join(TRACKING_FILE))?)?;
    Ok(summarize(
        &cfg.scenario,
        cfg.apc_enabled,
        &metrics,
        &trace,
        &cfg.acceptance,
    ))
}

pub fn read_summary(dir: &Path) -> Result<SummaryReport, Error> {
    Ok(toml::from_str(&tables::read(&dir.join(SUMMARY_FILE))?)?)
}

/// Recomputes the summary and reports every field that disagrees with the
/// stored one.
pub fn verify_report(dir: &Path) -> Result<SummaryReport, Error> {
    let stored = read_summary(dir)?;
    let fresh = recompute_summary(dir)?;
    let mut diffs = Vec::new();
    let mut cmp = |name: &str, a: f64, b: f64| {
        if a.to_bits() != b.to_bits() {
            diffs.push(format!("{name}: stored {a}, recomputed {b}"));
        }
    };
    cmp("il_std_db", stored.il_std_db, fresh.il_std_db);
    cmp(
        "max_il_deviation_db",
        stored.max_il_deviation_db,
        fresh.max_il_deviation_db,
    );
    cmp("min_tracking", stored.min_tracking, fresh.min_tracking);
    cmp("min_alignment", stored.min_alignment, fresh.min_alignment);
    if stored.scenario != fresh.scenario || stored.apc_enabled != fresh.apc_enabled {
        diffs.push("scenario label or APC flag differ".into());
    }
    if stored.checks != fresh.checks {
        diffs.push("acceptance checks differ".into());
    }
    if !diffs.is_empty() {
        return Err(Error::Verification(diffs));
    }
    Ok(fresh)
}

pub fn compare_dirs(a: &Path, b: &Path) -> Result<Comparison, Error> {
    let ma = tables::parse_metrics(&tables::read(&a.join(METRICS_FILE))?)?;
    let mb = tables::parse_metrics(&tables::read(&b.join(METRICS_FILE))?)?;
    Ok(compare_runs(&ma, &mb)?)
}

/// DGD values checked by `validate-eq1`, s.
pub const RATE_DGDS: [f64; 3] = [0.2e-12, 0.64e-12, 2.0e-12];
/// Allowed relative deviation of the ensemble mean from `2πγT`.
pub const RATE_TOLERANCE: f64 = 0.15;

pub fn rotation_rate_table(cfg: &ExperimentConfig, seeds: usize) -> Result<Vec<RateRow>, Error> {
    let mut issues = Vec::new();
    for (path, r) in [
        ("sweep", cfg.sweep.validate()),
        ("reference", cfg.reference.validate()),
    ] {
        if let Err(e) = r {
            issues.push(crate::config::Issue {
                path: path.into(),
                message: e.to_string(),
            });
        }
    }
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }
    Ok(validate_rotation_rate(
        &cfg.sweep,
        &cfg.reference,
        &RATE_DGDS,
        seeds,
    )?)
}

pub fn render_summary(r: &SummaryReport) -> String {
    let mut s = format!(
        "scenario: {}\napc: {}\nil std: {:.3} dB\nmax il deviation: {:.3} dB\nmin tracking: {:.4}\nmin alignment: {:.6}\n",
        r.scenario,
        if r.apc_enabled { "on" } else { "off" },
        r.il_std_db,
        r.max_il_deviation_db,
        r.min_tracking,
        r.min_alignment
    );
    for c in &r.checks {
        s.push_str(&format!(
            "check {}: value {:.4}, threshold {} -> {}\n",
            c.name,
            c.value,
            c.threshold,
            if c.pass { "PASS" } else { "FAIL" }
        ));
    }
    s
}

pub fn render_rate_table(rows: &[RateRow]) -> String {
    let mut s = String::from("dgd_ps,predicted_rad_s,measured_rad_s,relative_error\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.3},{:.3},{:.4}\n",
            r.dgd * 1e12,
            r.predicted,
            r.measured,
            r.relative_error
        ));
    }
    s
}
