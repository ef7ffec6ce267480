//! Swept-laser interferometer: sweep description, receiver layout, ADC and
//! the beat-level waveform synthesis.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::apc::{run_tracking, ApcSettings, ReferenceArm, TrackingRun};
use crate::error::{config, invalid, Error, Result};
use crate::fiber::{
    interp_linear, BirefringentFiber, BirefringentFiberSpec, ChannelId, DelayPlan,
    GroundTruthResponse, Mcf, McfSpec,
};
use crate::linalg::{cis_cycles, BlockTransferMatrix, CMatrix, JonesVector, C64};
use crate::SPEED_OF_LIGHT;

/// Sinusoidal perturbation of the instantaneous optical frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Nonlinearity {
    /// Peak frequency excursion, Hz.
    pub amplitude: f64,
    /// Seconds.
    pub period: f64,
}

/// Relative laser power against wavelength (meters), linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEnvelope {
    pub wavelengths: Vec<f64>,
    pub values: Vec<f64>,
}

impl PowerEnvelope {
    pub fn flat() -> Self {
        Self {
            wavelengths: vec![1.0e-6],
            values: vec![1.0],
        }
    }

    /// Flat up to `corner`, then falling by `db_per_nm` until `end`.
    pub fn with_rolloff(corner: f64, end: f64, db_per_nm: f64) -> Self {
        let n = 16;
        let mut wavelengths = vec![corner];
        let mut values = vec![1.0];
        for k in 1..=n {
            let l = corner + (end - corner) * k as f64 / n as f64;
            wavelengths.push(l);
            values.push(10f64.powf(-db_per_nm * (l - corner) * 1e9 / 10.0));
        }
        Self {
            wavelengths,
            values,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelengths.is_empty() || self.wavelengths.len() != self.values.len() {
            return Err(config(
                "power envelope needs matching, nonempty wavelength and value lists",
            ));
        }
        if self.wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config(
                "power envelope wavelengths must be strictly increasing",
            ));
        }
        if self.values.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(config("power envelope values must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn value(&self, wavelength: f64) -> f64 {
        interp_linear(&self.wavelengths, &self.values, wavelength)
    }
}

/// Laser sweep. The optical frequency rises linearly from `c/lambda_stop` at
/// the rate `sweep_rate_hz` evaluated at the band center, plus the
/// configured nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub lambda_start: f64,
    pub lambda_stop: f64,
    /// Wavelength tuning speed, m/s.
    pub sweep_rate: f64,
    pub nonlinearity: Nonlinearity,
    pub envelope: PowerEnvelope,
    /// Wavelength of the one-time alignment and of the IL normalization.
    pub calibration_wavelength: f64,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_start > 0.0) || !(self.lambda_stop > self.lambda_start) {
            return Err(config("sweep needs 0 < lambda_start < lambda_stop"));
        }
        if !(self.sweep_rate > 0.0) || !self.sweep_rate.is_finite() {
            return Err(config("sweep_rate must be finite and > 0"));
        }
        let nl = self.nonlinearity;
        if !nl.amplitude.is_finite() || nl.amplitude < 0.0 {
            return Err(config("nonlinearity amplitude must be finite and >= 0"));
        }
        if nl.amplitude > 0.0 {
            if !(nl.period > 0.0) {
                return Err(config("nonlinearity period must be > 0"));
            }
            if 2.0 * PI * nl.amplitude / nl.period >= self.gamma() {
                return Err(config("nonlinearity makes the sweep non-monotonic"));
            }
        }
        if !(self.calibration_wavelength >= self.lambda_start
            && self.calibration_wavelength <= self.lambda_stop)
        {
            return Err(config("calibration wavelength must lie inside the sweep"));
        }
        self.envelope.validate()
    }

    pub fn center_wavelength(&self) -> f64 {
        0.5 * (self.lambda_start + self.lambda_stop)
    }

    /// Linear sweep rate, Hz/s.
    pub fn gamma(&self) -> f64 {
        sweep_rate_hz(self, self.center_wavelength())
    }

    /// Largest instantaneous sweep rate including the nonlinearity.
    pub fn max_gamma(&self) -> f64 {
        let nl = self.nonlinearity;
        if nl.amplitude > 0.0 {
            self.gamma() + 2.0 * PI * nl.amplitude / nl.period
        } else {
            self.gamma()
        }
    }

    pub fn duration(&self) -> f64 {
        (self.lambda_stop - self.lambda_start) / self.sweep_rate
    }

    pub fn start_frequency(&self) -> f64 {
        SPEED_OF_LIGHT / self.lambda_stop
    }

    pub fn nominal_frequency_at(&self, t: f64) -> f64 {
        self.start_frequency() + self.gamma() * t
    }

    pub fn frequency_at(&self, t: f64) -> f64 {
        let nl = self.nonlinearity;
        let wobble = if nl.amplitude > 0.0 {
            nl.amplitude * (2.0 * PI * t / nl.period).sin()
        } else {
            0.0
        };
        self.nominal_frequency_at(t) + wobble
    }

    pub fn wavelength_at(&self, t: f64) -> f64 {
        SPEED_OF_LIGHT / self.frequency_at(t)
    }

    /// Nominal optical band `[ν(0), ν(duration)]`.
    pub fn band(&self) -> (f64, f64) {
        (
            self.start_frequency(),
            self.nominal_frequency_at(self.duration()),
        )
    }
}

/// `γ = (c/λ²)·sweep_rate` in Hz/s.
pub fn sweep_rate_hz(plan: &SweepPlan, lambda: f64) -> f64 {
    SPEED_OF_LIGHT / (lambda * lambda) * plan.sweep_rate
}

/// Beat frequency of two paths `delta_tau` apart: `|γ·Δτ|`.
pub fn fringe_frequency(gamma: f64, delta_tau: f64) -> f64 {
    (gamma * delta_tau).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcSpec {
    pub sample_rate: f64,
    pub bits: u32,
    /// Additive Gaussian noise, relative to full scale (±1).
    pub noise_rms: f64,
}

impl AdcSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(config("ADC sample_rate must be finite and > 0"));
        }
        if !(8..=24).contains(&self.bits) {
            return Err(config("ADC bits must lie in [8, 24]"));
        }
        if !(self.noise_rms >= 0.0) || !self.noise_rms.is_finite() {
            return Err(config("ADC noise_rms must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn lsb(&self) -> f64 {
        2.0 / (1u64 << self.bits) as f64
    }

    pub fn quantize(&self, x: f64) -> f64 {
        let lsb = self.lsb();
        ((x / lsb).round() * lsb).clamp(-1.0, 1.0 - lsb)
    }

    /// Longest path difference whose fringe stays below Nyquist.
    pub fn max_delay(&self, sweep: &SweepPlan) -> f64 {
        0.5 * self.sample_rate / sweep.max_gamma()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferometerLayout {
    pub delay_plan: DelayPlan,
    pub aux_delay: f64,
    pub tap_fraction: f64,
    /// Polarization analyzed by the X and Y detectors.
    pub receiver_basis: [JonesVector; 2],
    /// State launched into the reference fiber.
    pub reference_input: JonesVector,
    /// Full-scale fraction of a unit beat, the AUX fringe and the tap.
    pub beat_gain: f64,
    pub aux_gain: f64,
    pub trk_gain: f64,
}

impl InterferometerLayout {
    pub fn new(delay_plan: DelayPlan, aux_delay: f64) -> Self {
        let n = delay_plan.n_ports() as f64;
        Self {
            delay_plan,
            aux_delay,
            tap_fraction: 0.01,
            receiver_basis: [JonesVector::horizontal(), JonesVector::vertical()],
            reference_input: JonesVector::horizontal(),
            beat_gain: 0.9 / (n * (2.0 * n).sqrt()),
            aux_gain: 0.9,
            trk_gain: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.delay_plan.validate()?;
        if !(self.aux_delay > 0.0) || !self.aux_delay.is_finite() {
            return Err(config("aux_delay must be finite and > 0"));
        }
        if self
            .delay_plan
            .channels()
            .iter()
            .any(|(_, d)| *d == self.aux_delay)
        {
            return Err(config("aux_delay coincides with a channel delay"));
        }
        if !(self.tap_fraction > 0.0 && self.tap_fraction < 1.0) {
            return Err(config("tap_fraction must lie in (0, 1)"));
        }
        let [a, b] = self.receiver_basis;
        if !(a.power() > 0.0 && b.power() > 0.0)
            || a.inner(&b).norm() > 1e-9 * (a.power() * b.power()).sqrt()
        {
            return Err(config(
                "receiver basis must be two orthogonal nonzero states",
            ));
        }
        if !(self.reference_input.power() > 0.0) {
            return Err(config("reference input state must be nonzero"));
        }
        for (name, g) in [
            ("beat_gain", self.beat_gain),
            ("aux_gain", self.aux_gain),
            ("trk_gain", self.trk_gain),
        ] {
            if !(g > 0.0 && g <= 1.0) {
                return Err(config(format!("{name} must lie in (0, 1]")));
            }
        }
        Ok(())
    }

    /// Beat amplitude of a unit transfer coefficient at unit laser power.
    pub fn unit_beat(&self) -> f64 {
        self.beat_gain * (1.0 - self.tap_fraction).sqrt()
    }
}

/// Everything the synthesis needs; one deterministic run per value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub sweep: SweepPlan,
    pub layout: InterferometerLayout,
    pub reference: BirefringentFiberSpec,
    pub dut: McfSpec,
    pub adc: AdcSpec,
    pub apc: ApcSettings,
    pub seed: u64,
}

impl Setup {
    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        self.adc.validate()?;
        self.layout.validate()?;
        self.reference.validate()?;
        self.dut.validate()?;
        self.apc.validate()?;
        let plan = &self.layout.delay_plan;
        if self.dut.n_cores != plan.n_ports() {
            return Err(config(format!(
                "device has {} cores but the delay plan has {} ports",
                self.dut.n_cores,
                plan.n_ports()
            )));
        }
        let spread = self.path_mismatch().abs()
            + self
                .dut
                .core_skews
                .iter()
                .fold(0.0, |m: f64, s| m.max(s.abs()));
        if spread > 0.25 * plan.guard {
            return Err(config(
                "device skew plus reference mismatch exceeds a quarter guard",
            ));
        }
        let longest = plan.max_delay() + spread;
        let max_delay = self.adc.max_delay(&self.sweep);
        if longest >= max_delay {
            return Err(config(format!(
                "fringe of the {longest:.3e} s channel exceeds Nyquist at {:.3e} S/s",
                self.adc.sample_rate
            )));
        }
        let per_fringe =
            self.adc.sample_rate / fringe_frequency(self.sweep.max_gamma(), self.layout.aux_delay);
        if per_fringe < 8.0 {
            return Err(config(format!(
                "AUX fringe has {per_fringe:.2} samples per period, at least 8 are needed"
            )));
        }
        if self.apc.controller.loop_rate > self.adc.sample_rate {
            return Err(config("controller loop_rate exceeds the sample rate"));
        }
        Ok(())
    }

    /// Device bulk delay minus reference group delay.
    pub fn path_mismatch(&self) -> f64 {
        self.dut.bulk_delay - self.reference.group_delay
    }

    pub fn n_samples(&self) -> usize {
        (self.sweep.duration() * self.adc.sample_rate).round() as usize
    }

    pub fn reference_arm(&self) -> Result<ReferenceArm> {
        let fiber = BirefringentFiber::new(&self.reference)?;
        ReferenceArm::calibrated(
            fiber,
            self.layout.reference_input,
            self.apc.controller.target,
            &self.apc.initial,
            SPEED_OF_LIGHT / self.sweep.calibration_wavelength,
        )
    }

    /// Matrix the instrument ideally measures: the device seen through the
    /// launch states (x, y) and the receiver basis.
    pub fn ground_truth(&self, frequencies: &[f64]) -> Result<GroundTruthResponse> {
        let mcf = Mcf::new(&self.dut)?;
        let rx = self.receiver_adjoint(mcf.n_cores());
        let mismatch = self.path_mismatch();
        let matrices = frequencies
            .iter()
            .map(|&nu| {
                let h = mcf.transfer(nu);
                let m = rx.matmul(&h.entries)?.scale(cis_cycles(-nu * mismatch));
                BlockTransferMatrix::new(h.n_channels, nu, m)
            })
            .collect::<Result<Vec<_>>>()?;
        GroundTruthResponse::new(frequencies.to_vec(), matrices)
    }

    fn receiver_adjoint(&self, n: usize) -> CMatrix {
        let [a, b] = self.layout.receiver_basis;
        let (a, b) = (a.normalized().unwrap_or(a), b.normalized().unwrap_or(b));
        let mut rx = CMatrix::zeros(2 * n, 2 * n);
        for c in 0..n {
            rx[(2 * c, 2 * c)] = a.ex.conj();
            rx[(2 * c, 2 * c + 1)] = a.ey.conj();
            rx[(2 * c + 1, 2 * c)] = b.ex.conj();
            rx[(2 * c + 1, 2 * c + 1)] = b.ey.conj();
        }
        rx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    X,
    Y,
    Aux,
    Trk,
}

/// Digitized receiver outputs in full-scale units.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformRecord {
    pub sample_rate: f64,
    pub bits: u32,
    pub x: Vec<f32>,
    pub y: Vec<f32>,
    pub aux: Vec<f32>,
    pub trk: Vec<f32>,
    pub sweep: SweepPlan,
}

impl WaveformRecord {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn channel(&self, c: Channel) -> &[f32] {
        match c {
            Channel::X => &self.x,
            Channel::Y => &self.y,
            Channel::Aux => &self.aux,
            Channel::Trk => &self.trk,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if [self.y.len(), self.aux.len(), self.trk.len()]
            .iter()
            .any(|l| *l != n)
        {
            return Err(invalid("waveform channels differ in length"));
        }
        let all = self
            .x
            .iter()
            .chain(&self.y)
            .chain(&self.aux)
            .chain(&self.trk);
        for v in all {
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(invalid(
                    "waveform samples must be finite and within full scale",
                ));
            }
        }
        if !(self.sample_rate > 0.0) {
            return Err(invalid("waveform sample rate must be > 0"));
        }
        Ok(())
    }

    /// RMS envelope of a channel per window, tagged with the nominal
    /// wavelength at the window center.
    pub fn envelope(
        &self,
        c: Channel,
        window: f64,
        slowest_fringe: f64,
    ) -> Result<Vec<EnvelopePoint>> {
        let samples: Vec<f64> = self.channel(c).iter().map(|v| *v as f64).collect();
        let mut pts = envelope(&samples, self.sample_rate, window, slowest_fringe)?;
        for p in pts.iter_mut() {
            p.wavelength = self.sweep.wavelength_at(p.time);
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub time: f64,
    pub wavelength: f64,
    pub rms: f64,
}

/// RMS over consecutive windows of `window` seconds.
pub fn envelope(
    signal: &[f64],
    sample_rate: f64,
    window: f64,
    slowest_fringe: f64,
) -> Result<Vec<EnvelopePoint>> {
    if !(window * slowest_fringe >= 10.0) {
        return Err(invalid(
            "envelope window must span at least 10 periods of the slowest fringe",
        ));
    }
    let len = (window * sample_rate).round() as usize;
    if len == 0 || len > signal.len() {
        return Err(invalid("envelope window does not fit the record"));
    }
    Ok(signal
        .chunks_exact(len)
        .enumerate()
        .map(|(k, w)| EnvelopePoint {
            time: (k as f64 * len as f64 + 0.5 * len as f64) / sample_rate,
            wavelength: f64::NAN,
            rms: (w.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt(),
        })
        .collect())
}

/// Synthesis result: the record plus the controller history behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub record: WaveformRecord,
    pub tracking: TrackingRun,
}

pub fn synthesize(setup: &Setup) -> Result<Synthesis> {
    synthesize_channels(setup, None)
}

/// Synthesis restricted to the channels whose index (see
/// [`ChannelId::index`]) is listed; `None` keeps all of them.
pub fn synthesize_channels(setup: &Setup, only: Option<&[usize]>) -> Result<Synthesis> {
    setup.validate()?;
    let arm = setup.reference_arm()?;
    let tracking = run_tracking(&setup.sweep, &arm, &setup.apc)?;
    let record = render(setup, &arm, &tracking, only)?;
    Ok(Synthesis { record, tracking })
}

fn render(
    setup: &Setup,
    arm: &ReferenceArm,
    tracking: &TrackingRun,
    only: Option<&[usize]>,
) -> Result<WaveformRecord> {
    let sweep = &setup.sweep;
    let layout = &setup.layout;
    let plan = &layout.delay_plan;
    let adc = &setup.adc;
    let fs = adc.sample_rate;
    let loop_rate = setup.apc.controller.loop_rate;
    let mcf = Mcf::new(&setup.dut)?;
    let n = mcf.n_cores();

    let mut k = setup.receiver_adjoint(n).matmul(mcf.static_part())?;
    if let Some(keep) = only {
        for idx in 0..plan.n_channels() {
            if !keep.contains(&idx) {
                let id = ChannelId::from_index(idx, n);
                k[(id.row(), id.col())] = C64::new(0.0, 0.0);
            }
        }
    }

    let target = setup.apc.controller.target.normalized()?;
    let mismatch = setup.path_mismatch();
    let unit_beat = layout.unit_beat();
    let n_samples = setup.n_samples();
    let noise = if adc.noise_rms > 0.0 {
        Some(Normal::new(0.0, adc.noise_rms).map_err(|e| invalid(format!("{e}")))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);

    let mut out = [
        Vec::with_capacity(n_samples),
        Vec::with_capacity(n_samples),
        Vec::with_capacity(n_samples),
        Vec::with_capacity(n_samples),
    ];
    let mut col = vec![C64::new(0.0, 0.0); 2 * n];
    let mut row = vec![C64::new(0.0, 0.0); n];
    let mut block = usize::MAX;
    let mut apc = tracking.schedule[0].matrix();
    let static_apc = tracking.schedule.windows(2).all(|w| w[0] == w[1]);

    for i in 0..n_samples {
        let t = i as f64 / fs;
        let nu = sweep.frequency_at(t);
        let lambda = SPEED_OF_LIGHT / nu;
        let power = sweep.envelope.value(lambda);

        if !static_apc {
            let b = (t * loop_rate).floor() as usize;
            if b != block
                || tracking.schedule[b.min(tracking.schedule.len() - 1)]
                    != tracking.schedule[(b + 1).min(tracking.schedule.len() - 1)]
            {
                apc = tracking.state_at(t, loop_rate).matrix();
                block = b;
            }
        }
        let r = apc.apply(&arm.sop(nu));
        let overlap = target.inner(&r);

        let e_pol = cis_cycles(nu * plan.input_pol_delay);
        for port in 0..n {
            let base = cis_cycles(nu * (plan.input_port_delays[port] - setup.dut.core_skews[port]));
            col[2 * port] = base;
            col[2 * port + 1] = base * e_pol;
            row[port] =
                cis_cycles(nu * plan.output_port_delays[port]) * mcf.core_amplitude(port, lambda);
        }
        let common = overlap.conj()
            * (power * unit_beat)
            * cis_cycles(nu * (plan.reference_delay - mismatch));

        for q in 0..2 {
            let mut acc = C64::new(0.0, 0.0);
            for (j, rf) in row.iter().enumerate() {
                let r_idx = 2 * j + q;
                let mut s = C64::new(0.0, 0.0);
                for (c, cf) in col.iter().enumerate() {
                    s += k[(r_idx, c)] * cf;
                }
                acc += rf * s;
            }
            out[q].push((common * acc).re);
        }
        out[2].push(layout.aux_gain * power * cis_cycles(nu * layout.aux_delay).re);
        out[3].push(layout.trk_gain * power * overlap.norm_sqr());

        if !out.iter().all(|c| c[i].is_finite()) {
            return Err(Error::Internal(format!(
                "non-finite waveform sample at index {i}"
            )));
        }
    }

    let mut quantized: [Vec<f32>; 4] = Default::default();
    for (c, samples) in out.iter_mut().enumerate() {
        quantized[c] = samples
            .iter()
            .map(|&v| {
                let v = match &noise {
                    Some(d) => v + d.sample(&mut rng),
                    None => v,
                };
                adc.quantize(v) as f32
            })
            .collect();
    }
    let [x, y, aux, trk] = quantized;
    Ok(WaveformRecord {
        sample_rate: fs,
        bits: adc.bits,
        x,
        y,
        aux,
        trk,
        sweep: sweep.clone(),
    })
}
