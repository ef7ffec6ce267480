//! Named scenarios, the end-to-end run, summary statistics, run comparison
//! and the rotation-rate validation table.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::apc::{compute_rotation_rate, ApcSettings, TrackingTrace};
use crate::dsp::{
    aux_phase_resample, delay_spectrum, peak_equivalent_width, per_core_il, process,
    uncorrected_resample, MetricsSeries, Processed, Resampled,
};
use crate::error::{invalid, Result};
use crate::fiber::{
    build_delay_plan, rms_rotation_per_hz, BirefringentFiber, BirefringentFiberSpec, LossSpectrum,
    McfSpec,
};
use crate::sweep::{
    synthesize, synthesize_channels, AdcSpec, InterferometerLayout, Nonlinearity, PowerEnvelope,
    Setup, SweepPlan, Synthesis,
};

/// Group delay of 10 km of standard fiber, s.
const TEN_KM_DELAY: f64 = 48.97e-6;

fn full_band_sweep() -> SweepPlan {
    SweepPlan {
        lambda_start: 1530e-9,
        lambda_stop: 1570e-9,
        sweep_rate: 100e-9,
        nonlinearity: Nonlinearity {
            amplitude: 100e6,
            period: 20e-3,
        },
        envelope: PowerEnvelope::with_rolloff(1560e-9, 1570e-9, 0.2),
        calibration_wavelength: 1550e-9,
    }
}

fn reference_fiber(seed: u64) -> BirefringentFiberSpec {
    BirefringentFiberSpec {
        n_segments: 50,
        rms_dgd_target: 0.64e-12,
        group_delay: TEN_KM_DELAY,
        seed,
    }
}

fn mcf(n: usize, crosstalk_db: f64, skews: Vec<f64>, mismatch: f64, seed: u64) -> McfSpec {
    let base: Vec<f64> = (0..n).map(|c| 1.8 + 0.1 * c as f64).collect();
    McfSpec {
        n_cores: n,
        loss: LossSpectrum::linear(&base, 0.005, 1550e-9, (1530e-9, 1570e-9)),
        crosstalk_db,
        core_skews: skews,
        bulk_delay: TEN_KM_DELAY + mismatch,
        core_birefringence: true,
        seed,
    }
}

fn layout(
    adc: &AdcSpec,
    sweep: &SweepPlan,
    n: usize,
    base: f64,
    guard: f64,
    aux: f64,
) -> Result<InterferometerLayout> {
    let plan = build_delay_plan(n, base, guard, adc.max_delay(sweep))?;
    Ok(InterferometerLayout::new(plan, aux))
}

fn apc(enabled: bool) -> ApcSettings {
    ApcSettings {
        enabled,
        ..ApcSettings::default()
    }
}

/// Single core, full 1530–1570 nm sweep at 100 nm/s, T = 0.64 ps.
pub fn full_band(apc_enabled: bool) -> Result<Setup> {
    let sweep = full_band_sweep();
    let adc = AdcSpec {
        sample_rate: 10e6,
        bits: 16,
        noise_rms: 1e-4,
    };
    Ok(Setup {
        layout: layout(&adc, &sweep, 1, 30e-9, 15e-9, 20e-9)?,
        reference: reference_fiber(7),
        dut: mcf(1, f64::NEG_INFINITY, vec![0.0], 0.2e-9, 11),
        adc,
        apc: apc(apc_enabled),
        sweep,
        seed: 1,
    })
}

/// Seven cores, same sweep, weak crosstalk.
pub fn seven_core(apc_enabled: bool) -> Result<Setup> {
    let sweep = full_band_sweep();
    let adc = AdcSpec {
        sample_rate: 10e6,
        bits: 16,
        noise_rms: 1e-4,
    };
    let skews = vec![0.0, 0.04e-9, -0.03e-9, 0.02e-9, -0.05e-9, 0.01e-9, 0.03e-9];
    Ok(Setup {
        layout: layout(&adc, &sweep, 7, 2e-9, 0.5e-9, 20.25e-9)?,
        reference: reference_fiber(7),
        dut: mcf(7, -45.0, skews, 0.05e-9, 21),
        adc,
        apc: apc(apc_enabled),
        sweep,
        seed: 2,
    })
}

/// Noise-free two-core desk scenario over 5 nm with coupling, APC on.
pub fn desk_recovery() -> Result<Setup> {
    let sweep = SweepPlan {
        lambda_start: 1550e-9,
        lambda_stop: 1555e-9,
        envelope: PowerEnvelope::flat(),
        calibration_wavelength: 1552.5e-9,
        ..full_band_sweep()
    };
    let adc = AdcSpec {
        sample_rate: 10e6,
        bits: 16,
        noise_rms: 0.0,
    };
    Ok(Setup {
        layout: layout(&adc, &sweep, 2, 10e-9, 5e-9, 22.5e-9)?,
        reference: reference_fiber(7),
        dut: mcf(2, -30.0, vec![0.0, 0.3e-9], 0.2e-9, 31),
        adc,
        apc: apc(true),
        sweep,
        seed: 3,
    })
}

/// Scenario by name.
pub fn preset(name: &str) -> Result<Setup> {
    match name {
        "single_core_apc_off" => full_band(false),
        "single_core_apc_on" => full_band(true),
        "seven_core_map" => seven_core(true),
        "seven_core_map_apc_off" => seven_core(false),
        "desk_recovery" => desk_recovery(),
        _ => Err(invalid(format!("unknown scenario '{name}'"))),
    }
}

pub const PRESETS: [&str; 5] = [
    "single_core_apc_off",
    "single_core_apc_on",
    "seven_core_map",
    "seven_core_map_apc_off",
    "desk_recovery",
];

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub synthesis: Synthesis,
    pub processed: Processed,
    /// Rows are cores, columns follow `processed.metrics.wavelength`.
    pub per_core_il: Vec<Vec<f64>>,
}

impl RunOutput {
    pub fn trace(&self) -> &TrackingTrace {
        &self.synthesis.tracking.trace
    }
}

pub fn run(setup: &Setup) -> Result<RunOutput> {
    let synthesis = synthesize(setup)?;
    let processed = process(&synthesis.record, &setup.layout)?;
    let per_core_il = per_core_il(&processed.raw, setup.sweep.calibration_wavelength)?;
    Ok(RunOutput {
        synthesis,
        processed,
        per_core_il,
    })
}

/// Optional pass/fail thresholds attached to a scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceThresholds {
    /// Max |normalized IL| must reach at least this (fading visible).
    pub il_deviation_at_least_db: Option<f64>,
    /// Max |normalized IL| must stay at or below this.
    pub il_deviation_at_most_db: Option<f64>,
    /// Envelope-free tracking alignment must stay at or above this.
    pub min_alignment_at_least: Option<f64>,
    /// Normalized tracking power must dip below this somewhere.
    pub min_tracking_below: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub scenario: String,
    pub apc_enabled: bool,
    pub il_std_db: f64,
    pub max_il_deviation_db: f64,
    pub min_tracking: f64,
    pub min_alignment: f64,
    pub checks: Vec<Check>,
}

impl SummaryReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid(
            "correlation needs two equally long series of at least 2 points",
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(crate::Error::UndefinedMetric(
            "correlation of a constant series".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

pub fn summarize(
    scenario: &str,
    apc_enabled: bool,
    metrics: &MetricsSeries,
    trace: &TrackingTrace,
    thresholds: &AcceptanceThresholds,
) -> SummaryReport {
    let il_std_db = std_dev(&metrics.il_norm);
    let max_il_deviation_db = metrics.il_norm.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let min_tracking = trace.tracking.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_alignment = trace.alignment().into_iter().fold(f64::INFINITY, f64::min);
    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, threshold: f64, pass: bool| {
        checks.push(Check {
            name: name.into(),
            value,
            threshold,
            pass,
        })
    };
    if let Some(t) = thresholds.il_deviation_at_least_db {
        push(
            "il_deviation_at_least_db",
            max_il_deviation_db,
            t,
            max_il_deviation_db >= t,
        );
    }
    if let Some(t) = thresholds.il_deviation_at_most_db {
        push(
            "il_deviation_at_most_db",
            max_il_deviation_db,
            t,
            max_il_deviation_db <= t,
        );
    }
    if let Some(t) = thresholds.min_alignment_at_least {
        push(
            "min_alignment_at_least",
            min_alignment,
            t,
            min_alignment >= t,
        );
    }
    if let Some(t) = thresholds.min_tracking_below {
        push("min_tracking_below", min_tracking, t, min_tracking < t);
    }
    SummaryReport {
        scenario: scenario.into(),
        apc_enabled,
        il_std_db,
        max_il_deviation_db,
        min_tracking,
        min_alignment,
        checks,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub wavelength: Vec<f64>,
    /// `il_norm(B) − il_norm(A)` per wavelength.
    pub delta_il: Vec<f64>,
    pub std_a: f64,
    pub std_b: f64,
    /// `std_a / std_b`; 1 when both are zero.
    pub std_ratio: f64,
}

fn same_wavelength(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

pub fn compare_runs(a: &MetricsSeries, b: &MetricsSeries) -> Result<Comparison> {
    let find = |s: &MetricsSeries, w: f64| s.wavelength.iter().any(|x| same_wavelength(*x, w));
    let mismatch = a.len() != b.len()
        || a.wavelength
            .iter()
            .zip(&b.wavelength)
            .any(|(x, y)| !same_wavelength(*x, *y));
    if mismatch {
        if let Some(w) = a.wavelength.iter().find(|w| !find(b, **w)) {
            return Err(invalid(format!(
                "wavelength {:.6} nm of run A is missing from run B",
                w * 1e9
            )));
        }
        if let Some(w) = b.wavelength.iter().find(|w| !find(a, **w)) {
            return Err(invalid(format!(
                "wavelength {:.6} nm of run B is missing from run A",
                w * 1e9
            )));
        }
        return Err(invalid("runs use differently ordered wavelength grids"));
    }
    let std_a = std_dev(&a.il_norm);
    let std_b = std_dev(&b.il_norm);
    let std_ratio = if std_a == 0.0 && std_b == 0.0 {
        1.0
    } else {
        std_a / std_b
    };
    Ok(Comparison {
        wavelength: a.wavelength.clone(),
        delta_il: a
            .il_norm
            .iter()
            .zip(&b.il_norm)
            .map(|(x, y)| y - x)
            .collect(),
        std_a,
        std_b,
        std_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub dgd: f64,
    pub predicted: f64,
    /// Ensemble mean of the per-seed RMS rotation rate, rad/s.
    pub measured: f64,
    pub relative_error: f64,
}

/// Open-loop SOP rotation rate of the reference, measured on the Poincaré
/// sphere, against `2πγT` for each `T` in `dgds`.
pub fn validate_rotation_rate(
    sweep: &SweepPlan,
    reference: &BirefringentFiberSpec,
    dgds: &[f64],
    seeds: usize,
) -> Result<Vec<RateRow>> {
    sweep.validate()?;
    if seeds < 20 {
        return Err(invalid("rotation-rate validation needs at least 20 seeds"));
    }
    let gamma = sweep.gamma();
    let band = sweep.band();
    let delta = 1e9;
    dgds.iter()
        .map(|&t| {
            let mut acc = 0.0;
            for s in 0..seeds {
                let spec = BirefringentFiberSpec {
                    rms_dgd_target: t,
                    seed: reference.seed.wrapping_add(s as u64),
                    ..reference.clone()
                };
                let fiber = BirefringentFiber::new(&spec)?;
                acc += gamma * rms_rotation_per_hz(|nu| fiber.jones(nu), band, delta)?;
            }
            let measured = acc / seeds as f64;
            let predicted = compute_rotation_rate(gamma, t);
            let relative_error = if predicted == 0.0 {
                measured
            } else {
                (measured - predicted) / predicted
            };
            Ok(RateRow {
                dgd: t,
                predicted,
                measured,
                relative_error,
            })
        })
        .collect()
}

/// Delay-domain peak widths of a single channel with the AUX correction,
/// without it, and for the same setup swept linearly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearityStudy {
    pub corrected: f64,
    pub uncorrected: f64,
    pub linear: f64,
}

fn channel_width(res: &Resampled, delay: f64, guard: f64) -> Result<f64> {
    let spec = delay_spectrum(&res.x)?;
    let bins_per_s = spec.len() as f64 * res.grid.step;
    let center = (delay * bins_per_s).round() as usize;
    let half = (0.5 * guard * bins_per_s) as usize;
    Ok(peak_equivalent_width(&spec, center, half))
}

/// Runs `setup` with only `channel` active (X receiver), with and without
/// its tuning nonlinearity.
pub fn nonlinearity_study(setup: &Setup, channel: usize) -> Result<NonlinearityStudy> {
    let plan = &setup.layout.delay_plan;
    let (id, delay) = plan.channels()[channel];
    if id.rx_pol != 0 {
        return Err(invalid("nonlinearity study uses an X-receiver channel"));
    }
    let guard = plan.guard;
    let aux = (setup.layout.aux_delay, setup.layout.aux_gain);
    let with = synthesize_channels(setup, Some(&[channel]))?.record;
    let corrected = channel_width(&aux_phase_resample(&with, aux.0, aux.1)?, delay, guard)?;
    let uncorrected = channel_width(&uncorrected_resample(&with, aux.1)?, delay, guard)?;
    let mut linear_setup = setup.clone();
    linear_setup.sweep.nonlinearity = Nonlinearity::default();
    let lin = synthesize_channels(&linear_setup, Some(&[channel]))?.record;
    let linear = channel_width(&aux_phase_resample(&lin, aux.0, aux.1)?, delay, guard)?;
    Ok(NonlinearityStudy {
        corrected,
        uncorrected,
        linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(w: &[f64], il: &[f64]) -> MetricsSeries {
        MetricsSeries {
            wavelength: w.to_vec(),
            il: il.to_vec(),
            il_norm: il.to_vec(),
            mdl: vec![0.0; w.len()],
            xt: vec![f64::NEG_INFINITY; w.len()],
        }
    }

    #[test]
    fn compare_with_itself() {
        let a = series(&[1.55e-6, 1.56e-6, 1.57e-6], &[0.1, -0.4, 0.3]);
        let c = compare_runs(&a, &a).unwrap();
        assert!(c.delta_il.iter().all(|d| *d == 0.0));
        assert_eq!(c.std_ratio, 1.0);
    }

    #[test]
    fn compare_names_missing_point() {
        let a = series(&[1.55e-6, 1.56e-6, 1.57e-6], &[0.0; 3]);
        let b = series(&[1.55e-6, 1.57e-6], &[0.0; 2]);
        let err = compare_runs(&a, &b).unwrap_err();
        assert!(format!("{err}").contains("1560.000000 nm"), "{err}");
    }

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &[-1.0, -2.0, -3.0, -4.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&a, &[1.0; 4]).is_err());
    }

    #[test]
    fn zero_dgd_has_zero_rate() {
        let sweep = full_band_sweep();
        let rows = validate_rotation_rate(&sweep, &reference_fiber(0), &[0.0], 20).unwrap();
        assert_eq!(rows[0].measured, 0.0);
        assert_eq!(rows[0].predicted, 0.0);
    }

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("nope").is_err());
    }
}
