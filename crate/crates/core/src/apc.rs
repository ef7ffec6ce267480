//! Automatic polarization controller: a cascade of endless waveplates driven
//! by coordinate-dither descent on the orthogonal tap power.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::fiber::BirefringentFiber;
use crate::linalg::{waveplate, JonesMatrix, JonesVector};
use crate::sweep::SweepPlan;

/// Polarization rotation rate of a reference with RMS DGD `dgd` under a
/// sweep of `gamma` Hz/s: `R = 2πγT`.
pub fn compute_rotation_rate(gamma: f64, dgd: f64) -> f64 {
    2.0 * PI * gamma * dgd
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageState {
    pub retardance: f64,
    pub orientation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerState {
    pub stages: Vec<StageState>,
    /// Slew limit per parameter, rad/s.
    pub max_slew: f64,
}

impl Default for TransformerState {
    fn default() -> Self {
        Self::new(
            &[(0.5 * PI, 0.0), (0.5 * PI, PI / 4.0), (0.5 * PI, 0.0)],
            5000.0,
        )
    }
}

impl TransformerState {
    /// Stages from `(retardance, orientation)` pairs.
    pub fn new(stages: &[(f64, f64)], max_slew: f64) -> Self {
        Self {
            stages: stages
                .iter()
                .map(|&(retardance, orientation)| StageState {
                    retardance,
                    orientation,
                })
                .collect(),
            max_slew,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.len() < 3 {
            return Err(config("polarization transformer needs at least 3 stages"));
        }
        if self
            .stages
            .iter()
            .any(|s| !s.retardance.is_finite() || !s.orientation.is_finite())
        {
            return Err(config("transformer parameters must be finite"));
        }
        if !(self.max_slew > 0.0) || !self.max_slew.is_finite() {
            return Err(config("transformer max_slew must be finite and > 0"));
        }
        Ok(())
    }

    /// Stage 0 acts first.
    pub fn matrix(&self) -> JonesMatrix {
        self.stages.iter().fold(JonesMatrix::identity(), |acc, s| {
            waveplate(s.retardance, s.orientation) * acc
        })
    }

    pub fn n_params(&self) -> usize {
        2 * self.stages.len()
    }

    pub fn param(&self, i: usize) -> f64 {
        let s = &self.stages[i / 2];
        if i.is_multiple_of(2) {
            s.retardance
        } else {
            s.orientation
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let s = &mut self.stages[i / 2];
        if i.is_multiple_of(2) {
            s.retardance = v;
        } else {
            s.orientation = v;
        }
    }

    fn period(i: usize) -> f64 {
        // A 2π retardance step only flips the global sign, so 4π is the exact
        // period; the orientation repeats after 2π (in fact after π).
        if i.is_multiple_of(2) {
            4.0 * PI
        } else {
            2.0 * PI
        }
    }

    /// Endless operation: map every parameter back into its principal range
    /// without changing the matrix.
    pub fn wrap(&mut self) {
        for i in 0..self.n_params() {
            let p = Self::period(i);
            let v = self.param(i);
            let w = v - p * (v / p).round();
            self.set_param(i, w);
        }
    }

    /// Linear ramp from `self` (s = 0) to `next` (s = 1) along the shortest
    /// path of each wrapped parameter.
    pub fn interpolate(&self, next: &TransformerState, s: f64) -> TransformerState {
        let mut out = self.clone();
        for i in 0..self.n_params() {
            let p = Self::period(i);
            let mut d = next.param(i) - self.param(i);
            d -= p * (d / p).round();
            out.set_param(i, self.param(i) + s * d);
        }
        out
    }
}

pub fn apply_transformer(state: &TransformerState, input: &JonesVector) -> JonesVector {
    state.matrix().apply(input)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub loop_rate: f64,
    pub dither_step: f64,
    pub gain: f64,
    /// State the reference is steered to.
    pub target: JonesVector,
    /// Orthogonal power below which the loop holds still.
    pub deadband: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            loop_rate: 10e3,
            dither_step: 0.02,
            gain: 0.5,
            target: JonesVector::diagonal(),
            deadband: 1e-8,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loop_rate > 0.0) || !self.loop_rate.is_finite() {
            return Err(config("controller loop_rate must be > 0"));
        }
        if !(self.dither_step > 0.0 && self.dither_step < 0.5) {
            return Err(config("controller dither_step must lie in (0, 0.5)"));
        }
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(config("controller gain must be > 0"));
        }
        if !self.target.is_finite() || !(self.target.power() > 0.0) {
            return Err(config(
                "controller target must be a nonzero finite Jones vector",
            ));
        }
        if !(self.deadband >= 0.0) {
            return Err(config("controller deadband must be >= 0"));
        }
        Ok(())
    }
}

/// Fraction of `v`'s power that is orthogonal to `target`.
pub fn orthogonal_fraction(target: &JonesVector, v: &JonesVector) -> f64 {
    let p = v.power();
    if p == 0.0 {
        return 0.0;
    }
    let t = target.power();
    let overlap = target.inner(v).norm_sqr() / (t * p);
    (1.0 - overlap).max(0.0)
}

/// One loop iteration. Each parameter in turn is dithered by `±dither_step`,
/// moved down the finite-difference gradient by `gain`, limited by the slew
/// rate and the local curvature, and kept only if the observed orthogonal
/// power did not grow.
pub fn controller_step(
    state: &TransformerState,
    cfg: &ControllerConfig,
    mut observe: impl FnMut(&TransformerState) -> f64,
) -> TransformerState {
    let mut cur = state.clone();
    let mut f0 = observe(&cur);
    if f0 < cfg.deadband {
        return cur;
    }
    let d = cfg.dither_step;
    let max_step = state.max_slew / cfg.loop_rate;
    let mut probe = cur.clone();
    for i in 0..cur.n_params() {
        let x = cur.param(i);
        probe.set_param(i, x + d);
        let fp = observe(&probe);
        probe.set_param(i, x - d);
        let fm = observe(&probe);
        let g = (fp - fm) / (2.0 * d);
        let curv = (fp - 2.0 * f0 + fm) / (d * d);
        let mut step = -cfg.gain * g;
        if curv > 0.0 {
            let newton = (g / curv).abs();
            step = step.clamp(-newton, newton);
        }
        step = step.clamp(-max_step, max_step);
        let mut accepted = false;
        for s in [step, 0.5 * step] {
            probe.set_param(i, x + s);
            let f = observe(&probe);
            if f <= f0 {
                f0 = f;
                accepted = true;
                break;
            }
        }
        if accepted {
            cur.set_param(i, probe.param(i));
        } else {
            probe.set_param(i, x);
        }
    }
    cur.wrap();
    cur
}

/// Reference arm from laser to the controller input: birefringent fiber and
/// the manual polarization controller set once at calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceArm {
    pub fiber: BirefringentFiber,
    pub input: JonesVector,
    pub alignment: JonesMatrix,
    pub target: JonesVector,
}

impl ReferenceArm {
    /// Sets the manual controller so that, with the transformer at
    /// `transformer`, the reference reaches the receiver in `target` at
    /// `nu_cal`.
    pub fn calibrated(
        fiber: BirefringentFiber,
        input: JonesVector,
        target: JonesVector,
        transformer: &TransformerState,
        nu_cal: f64,
    ) -> Result<Self> {
        let at_cal = fiber.propagate(nu_cal, &input);
        let before_apc = transformer.matrix().adjoint().apply(&target);
        let alignment = JonesMatrix::mapping(&at_cal, &before_apc)?;
        Ok(Self {
            fiber,
            input: input.normalized()?,
            alignment,
            target: target.normalized()?,
        })
    }

    /// Unit-power reference state entering the controller.
    pub fn sop(&self, nu: f64) -> JonesVector {
        self.alignment.apply(&self.fiber.propagate(nu, &self.input))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApcSettings {
    pub enabled: bool,
    pub controller: ControllerConfig,
    pub initial: TransformerState,
    /// Loop iterations run at the start wavelength before the sweep begins.
    pub acquisition_iterations: usize,
}

impl Default for ApcSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            controller: ControllerConfig::default(),
            initial: TransformerState::default(),
            acquisition_iterations: 400,
        }
    }
}

impl ApcSettings {
    pub fn validate(&self) -> Result<()> {
        self.controller.validate()?;
        self.initial.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackingTrace {
    pub time: Vec<f64>,
    pub wavelength: Vec<f64>,
    /// Tap power in the target state, relative to the calibration point.
    pub tracking: Vec<f64>,
    pub orthogonal: Vec<f64>,
}

impl TrackingTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Tracking power with the laser envelope divided out.
    pub fn alignment(&self) -> Vec<f64> {
        self.tracking
            .iter()
            .zip(&self.orthogonal)
            .map(|(t, o)| if t + o > 0.0 { t / (t + o) } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub trace: TrackingTrace,
    /// Transformer state at every loop boundary `k / loop_rate`, including
    /// the one after the last block.
    pub schedule: Vec<TransformerState>,
    pub final_state: TransformerState,
}

impl TrackingRun {
    /// Transformer in effect at time `t`; parameters ramp linearly across
    /// each loop period.
    pub fn state_at(&self, t: f64, loop_rate: f64) -> TransformerState {
        let x = (t * loop_rate).max(0.0);
        let k = (x.floor() as usize).min(self.schedule.len() - 1);
        let next = (k + 1).min(self.schedule.len() - 1);
        self.schedule[k].interpolate(&self.schedule[next], x - k as f64)
    }
}

/// Closed (or open, when disabled) loop over the whole sweep, one controller
/// update per loop period.
pub fn run_tracking(
    sweep: &SweepPlan,
    arm: &ReferenceArm,
    settings: &ApcSettings,
) -> Result<TrackingRun> {
    settings.validate()?;
    let cfg = &settings.controller;
    let lambda_cal = sweep.calibration_wavelength;
    let env_cal = sweep.envelope.value(lambda_cal);
    let blocks = (sweep.duration() * cfg.loop_rate).ceil() as usize;
    let observe_at = |nu: f64, env: f64| {
        let sop = arm.sop(nu);
        move |s: &TransformerState| {
            env * orthogonal_fraction(&cfg.target, &apply_transformer(s, &sop))
        }
    };

    let mut state = settings.initial.clone();
    if settings.enabled {
        let nu0 = sweep.frequency_at(0.0);
        let obs = observe_at(nu0, sweep.envelope.value(sweep.wavelength_at(0.0)));
        for _ in 0..settings.acquisition_iterations {
            state = controller_step(&state, cfg, &obs);
        }
    }

    let mut trace = TrackingTrace::default();
    let mut schedule = Vec::with_capacity(blocks + 1);
    for k in 0..=blocks {
        let t = k as f64 / cfg.loop_rate;
        let nu = sweep.frequency_at(t);
        let lambda = crate::SPEED_OF_LIGHT / nu;
        let env = sweep.envelope.value(lambda) / env_cal;
        let obs = observe_at(nu, env);
        let orth = obs(&state);
        trace.time.push(t);
        trace.wavelength.push(lambda);
        trace.tracking.push(env - orth);
        trace.orthogonal.push(orth);
        schedule.push(state.clone());
        if settings.enabled && k < blocks {
            state = controller_step(&state, cfg, &obs);
        }
    }
    Ok(TrackingRun {
        trace,
        schedule,
        final_state: state,
    })
}
