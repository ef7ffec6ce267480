//! Experiment configuration: one TOML file per run.

use std::fmt;
use std::path::PathBuf;

use ovna_core::apc::{ApcSettings, ControllerConfig, TransformerState};
use ovna_core::experiment::{self, AcceptanceThresholds};
use ovna_core::fiber::{build_delay_plan, BirefringentFiberSpec, McfSpec};
use ovna_core::sweep::{AdcSpec, InterferometerLayout, Setup, SweepPlan};
use serde::{Deserialize, Serialize};

use crate::Error;

/// Runs above this many samples per channel are flagged as long-running.
pub const LONG_RUN_SAMPLES: usize = 10_000_000;

/// Delay-line parameters; the full plan is derived from these and the core
/// count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    /// Excess delay of the shortest measurement path, s.
    pub base_delay: f64,
    /// Spacing between adjacent channel delays, s.
    pub guard: f64,
    /// Auxiliary interferometer delay, s.
    pub aux_delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Channel index (X receiver) whose delay-domain peak is measured.
    pub channel: usize,
}

fn default_acquisition() -> usize {
    ApcSettings::default().acquisition_iterations
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: u64,
    pub apc_enabled: bool,
    pub output_dir: PathBuf,
    #[serde(default = "default_acquisition")]
    pub acquisition_iterations: usize,
    pub sweep: SweepPlan,
    pub reference: BirefringentFiberSpec,
    pub dut: McfSpec,
    pub delays: DelayConfig,
    pub adc: AdcSpec,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub transformer: TransformerState,
    #[serde(default)]
    pub acceptance: AcceptanceThresholds,
    #[serde(default)]
    pub nonlinearity_study: Option<StudyConfig>,
}

/// One violated constraint, tagged with the config section it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Acceptance checks attached to the named presets.
pub fn preset_thresholds(name: &str) -> AcceptanceThresholds {
    match name {
        "single_core_apc_off" => AcceptanceThresholds {
            il_deviation_at_least_db: Some(3.0),
            min_tracking_below: Some(0.5),
            ..Default::default()
        },
        "single_core_apc_on" | "seven_core_map" => AcceptanceThresholds {
            il_deviation_at_most_db: Some(0.5),
            min_alignment_at_least: Some(0.9),
            ..Default::default()
        },
        _ => AcceptanceThresholds::default(),
    }
}

impl ExperimentConfig {
    /// Config reproducing `setup` exactly.
    pub fn from_setup(scenario: &str, setup: &Setup, output_dir: PathBuf) -> Self {
        let plan = &setup.layout.delay_plan;
        Self {
            scenario: scenario.into(),
            seed: setup.seed,
            apc_enabled: setup.apc.enabled,
            output_dir,
            acquisition_iterations: setup.apc.acquisition_iterations,
            sweep: setup.sweep.clone(),
            reference: setup.reference.clone(),
            dut: setup.dut.clone(),
            delays: DelayConfig {
                base_delay: plan.reference_delay,
                guard: plan.guard,
                aux_delay: setup.layout.aux_delay,
            },
            adc: setup.adc,
            controller: setup.apc.controller.clone(),
            transformer: setup.apc.initial.clone(),
            acceptance: preset_thresholds(scenario),
            nonlinearity_study: None,
        }
    }

    /// Built-in scenario by name, writing to `runs/<name>`.
    pub fn preset(name: &str) -> Result<Self, Error> {
        let setup = experiment::preset(name)?;
        Ok(Self::from_setup(
            name,
            &setup,
            PathBuf::from("runs").join(name),
        ))
    }

    pub fn from_toml(text: &str) -> Result<Self, Error> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        Ok(toml::to_string(self)?)
    }

    /// Every violated constraint, one issue per failing section plus the
    /// cross-section checks once all sections pass.
    pub fn validate_all(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut check = |path: &str, r: ovna_core::Result<()>| {
            if let Err(e) = r {
                issues.push(Issue {
                    path: path.into(),
                    message: e.to_string(),
                });
                false
            } else {
                true
            }
        };
        let mut ok = check(
            "scenario",
            if self.scenario.trim().is_empty() {
                Err(ovna_core::Error::InvalidInput(
                    "scenario name must not be empty".into(),
                ))
            } else {
                Ok(())
            },
        );
        ok &= check(
            "output_dir",
            if self.output_dir.as_os_str().is_empty() {
                Err(ovna_core::Error::InvalidInput(
                    "output directory must not be empty".into(),
                ))
            } else {
                Ok(())
            },
        );
        let sweep_ok = check("sweep", self.sweep.validate());
        let adc_ok = check("adc", self.adc.validate());
        ok &= sweep_ok && adc_ok;
        ok &= check("reference", self.reference.validate());
        ok &= check("dut", self.dut.validate());
        ok &= check("controller", self.controller.validate());
        ok &= check("transformer", self.transformer.validate());
        ok &= check(
            "acquisition_iterations",
            if self.apc_enabled && self.acquisition_iterations == 0 {
                Err(ovna_core::Error::InvalidInput(
                    "acquisition needs at least one iteration".into(),
                ))
            } else {
                Ok(())
            },
        );
        let delays_ok = if sweep_ok && adc_ok {
            let layout = self.layout();
            check("delays", layout.and_then(|l| l.validate()))
        } else {
            false
        };
        ok &= delays_ok;
        if ok {
            if let Ok(setup) = self.to_setup_unchecked() {
                check("setup", setup.validate());
                if let Some(study) = self.nonlinearity_study {
                    let plan = &setup.layout.delay_plan;
                    check(
                        "nonlinearity_study.channel",
                        if study.channel >= plan.n_channels()
                            || plan.channels()[study.channel].0.rx_pol != 0
                        {
                            Err(ovna_core::Error::InvalidInput(format!(
                                "channel {} is not an X-receiver channel of the plan",
                                study.channel
                            )))
                        } else {
                            Ok(())
                        },
                    );
                }
            }
        }
        issues
    }

    fn layout(&self) -> ovna_core::Result<InterferometerLayout> {
        let d = &self.delays;
        let plan = build_delay_plan(
            self.dut.n_cores,
            d.base_delay,
            d.guard,
            self.adc.max_delay(&self.sweep),
        )?;
        Ok(InterferometerLayout::new(plan, d.aux_delay))
    }

    fn to_setup_unchecked(&self) -> ovna_core::Result<Setup> {
        Ok(Setup {
            sweep: self.sweep.clone(),
            layout: self.layout()?,
            reference: self.reference.clone(),
            dut: self.dut.clone(),
            adc: self.adc,
            apc: ApcSettings {
                enabled: self.apc_enabled,
                controller: self.controller.clone(),
                initial: self.transformer.clone(),
                acquisition_iterations: self.acquisition_iterations,
            },
            seed: self.seed,
        })
    }

    /// Validated simulation setup.
    pub fn to_setup(&self) -> Result<Setup, Error> {
        let issues = self.validate_all();
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }
        Ok(self.to_setup_unchecked()?)
    }

    pub fn is_long_running(&self) -> bool {
        (self.sweep.duration() * self.adc.sample_rate) as usize > LONG_RUN_SAMPLES
    }
}

const SCHEMA_HEADER: &str = "\
# ovna experiment config, schema v1
#
# All quantities are SI (meters, seconds, hertz, radians) unless a key
# says otherwise. Complex numbers are [re, im] pairs.
#
# scenario                 label used in reports
# seed                     master seed; the waveform noise stream derives from it
# apc_enabled              closed-loop polarization control on/off
# output_dir               run directory (OVNA_OUTPUT_DIR overrides)
# acquisition_iterations   controller iterations before the sweep starts
#
# [sweep]        lambda_start, lambda_stop (m), sweep_rate (m/s),
#                calibration_wavelength (m)
# [sweep.nonlinearity]  amplitude (Hz), period (s) of the tuning error
# [sweep.envelope]      wavelengths (m) and relative laser power values
# [reference]    n_segments, rms_dgd_target (s), group_delay (s), seed
# [dut]          n_cores, crosstalk_db (-inf = uncoupled), core_skews (s),
#                bulk_delay (s), core_birefringence, seed
# [dut.loss]     wavelengths (m), per_core_db (one list per core)
# [delays]       base_delay, guard, aux_delay (s)
# [adc]          sample_rate (S/s), bits, noise_rms (full scale = 1)
# [controller]   loop_rate (Hz), dither_step (rad), gain, deadband,
#                target = { ex = [re, im], ey = [re, im] }
# [transformer]  max_slew (rad/s), stages = [{ retardance, orientation }]
# [acceptance]   optional: il_deviation_at_least_db, il_deviation_at_most_db,
#                min_alignment_at_least, min_tracking_below
# [nonlinearity_study]  optional: channel (X-receiver channel index)
#
# Example (the single_core_apc_on scenario):

";

/// Documented schema followed by a complete example config.
pub fn schema() -> Result<String, Error> {
    Ok(format!(
        "{SCHEMA_HEADER}{}",
        ExperimentConfig::preset("single_core_apc_on")?.to_toml()?
    ))
}
