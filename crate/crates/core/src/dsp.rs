//! Transfer-matrix recovery from a waveform record: AUX-referenced
//! resampling, delay-domain channel separation, assembly, calibration and
//! SVD-based metrics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Error, Result};
use crate::fft::{next_pow2, Fft};
use crate::fiber::{ChannelId, DelayPlan};
use crate::linalg::{
    cis_cycles, svd_singular_values, BlockTransferMatrix, CMatrix, C64, SVD_TOLERANCE,
};
use crate::sweep::{InterferometerLayout, WaveformRecord};
use crate::SPEED_OF_LIGHT;

/// Fraction of the spectrum dropped next to DC and Nyquist when forming the
/// AUX analytic signal.
pub const ANALYTIC_MARGIN: f64 = 0.01;

/// Largest accepted AUX phase advance per sample. A wrapped difference can
/// never exceed π, so a jump is flagged well before that.
pub const MAX_PHASE_STEP: f64 = 0.75 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl FrequencyGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        let g = Self { start, step, count };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.start.is_finite() || !self.step.is_finite() {
            return Err(invalid(
                "frequency grid needs a finite start and a positive step",
            ));
        }
        if self.count < 2 {
            return Err(invalid("frequency grid needs at least two points"));
        }
        Ok(())
    }

    pub fn frequency(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.frequency(i)).collect()
    }

    pub fn stop(&self) -> f64 {
        self.frequency(self.count - 1)
    }

    /// Index of the grid point closest to `nu`, or `None` outside the grid.
    pub fn nearest(&self, nu: f64) -> Option<usize> {
        let x = (nu - self.start) / self.step;
        if !(x >= -0.5 && x <= self.count as f64 - 0.5) {
            return None;
        }
        Some((x.round() as usize).min(self.count - 1))
    }
}

/// Analytic signal `x + i·H{x}` with the spectral margins next to DC and
/// Nyquist removed.
pub fn analytic_signal(x: &[f64]) -> Result<Vec<C64>> {
    if x.is_empty() {
        return Err(invalid("analytic signal of an empty record"));
    }
    let n = x.len();
    let len = next_pow2(n);
    let plan = Fft::new(len)?;
    let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    buf.resize(len, C64::new(0.0, 0.0));
    plan.forward(&mut buf);
    let half = len / 2;
    let lo = ((ANALYTIC_MARGIN * half as f64).ceil() as usize).max(1);
    let hi = half - lo;
    for (k, v) in buf.iter_mut().enumerate() {
        if k >= lo && k <= hi {
            *v *= 2.0;
        } else {
            *v = C64::new(0.0, 0.0);
        }
    }
    plan.inverse(&mut buf);
    let scale = 1.0 / len as f64;
    buf.truncate(n);
    for v in buf.iter_mut() {
        *v *= scale;
    }
    Ok(buf)
}

/// Continuous phase of `z`. Fails at the first sample whose wrapped phase
/// advance exceeds [`MAX_PHASE_STEP`] in magnitude; `offset` is added to the
/// reported index.
pub fn unwrap_phase(z: &[C64], offset: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(z.len());
    let mut acc = 0.0;
    for (i, v) in z.iter().enumerate() {
        if i == 0 {
            acc = v.arg();
        } else {
            let step = (v * z[i - 1].conj()).arg();
            if step.abs() > MAX_PHASE_STEP || !step.is_finite() {
                return Err(Error::PhaseUnwrap {
                    index: i + offset,
                    step,
                });
            }
            acc += step;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Cubic (Catmull-Rom) interpolation of uniformly spaced samples at the
/// fractional index `pos`; the ends are clamped.
pub fn catmull_rom(samples: &[f64], pos: f64) -> f64 {
    let n = samples.len();
    let last = n as isize - 1;
    let i = pos.floor() as isize;
    let t = pos - i as f64;
    let at = |k: isize| samples[k.clamp(0, last) as usize];
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * ((2.0 * p1)
        + (-p0 + p2) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3)
}

/// Receiver outputs on a uniform optical-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub grid: FrequencyGrid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Laser power estimated from the AUX fringe amplitude.
    pub power: Vec<f64>,
}

fn edge_trim(n: usize) -> usize {
    (n / 200).max(64).min(n / 8)
}

/// Recovers the instantaneous optical frequency from the AUX phase and
/// interpolates X/Y (and the laser power) onto a uniform grid.
pub fn aux_phase_resample(
    record: &WaveformRecord,
    aux_delay: f64,
    aux_gain: f64,
) -> Result<Resampled> {
    record.validate()?;
    let n = record.len();
    if n < 1024 {
        return Err(invalid("record too short for resampling"));
    }
    let sweep = &record.sweep;
    let per_fringe = record.sample_rate / (sweep.max_gamma() * aux_delay);
    if !(per_fringe >= 8.0) {
        return Err(config(format!(
            "AUX fringe has {per_fringe:.2} samples per period, at least 8 are needed"
        )));
    }
    let aux: Vec<f64> = record.aux.iter().map(|v| *v as f64).collect();
    let z = analytic_signal(&aux)?;
    let trim = edge_trim(n);
    let inner = &z[trim..n - trim];
    let phase = unwrap_phase(inner, trim)?;

    // The unwrapped phase fixes ν up to whole AUX cycles; pick the cycle
    // count that best matches the nominal sweep.
    let mut cycles_off = 0.0;
    for (k, p) in phase.iter().enumerate() {
        let t = (k + trim) as f64 / record.sample_rate;
        cycles_off += sweep.nominal_frequency_at(t) * aux_delay - p / (2.0 * PI);
    }
    let cycles = (cycles_off / phase.len() as f64).round();
    let nu: Vec<f64> = phase
        .iter()
        .map(|p| (p / (2.0 * PI) + cycles) / aux_delay)
        .collect();
    if let Some(i) = nu.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(invalid(format!(
            "optical frequency is not increasing at sample {}",
            i + trim + 1
        )));
    }

    let count = nu.len();
    let grid = FrequencyGrid::new(nu[0], (nu[count - 1] - nu[0]) / (count - 1) as f64, count)?;
    let x: Vec<f64> = record.x.iter().map(|v| *v as f64).collect();
    let y: Vec<f64> = record.y.iter().map(|v| *v as f64).collect();
    let env: Vec<f64> = z.iter().map(|v| v.norm() / aux_gain).collect();

    let mut out_x = Vec::with_capacity(count);
    let mut out_y = Vec::with_capacity(count);
    let mut out_p = Vec::with_capacity(count);
    let mut i = 0usize;
    for u in 0..count {
        let target = grid.frequency(u);
        while i + 2 < count && nu[i + 1] <= target {
            i += 1;
        }
        let frac = ((target - nu[i]) / (nu[i + 1] - nu[i])).clamp(0.0, 1.0);
        let pos = (i + trim) as f64 + frac;
        out_x.push(catmull_rom(&x, pos));
        out_y.push(catmull_rom(&y, pos));
        out_p.push(catmull_rom(&env, pos));
    }
    Ok(Resampled {
        grid,
        x: out_x,
        y: out_y,
        power: out_p,
    })
}

/// The same interior samples taken as if the sweep were perfectly linear;
/// used to quantify what the AUX correction buys.
pub fn uncorrected_resample(record: &WaveformRecord, aux_gain: f64) -> Result<Resampled> {
    record.validate()?;
    let n = record.len();
    let trim = edge_trim(n);
    let sweep = &record.sweep;
    let count = n - 2 * trim;
    let start = sweep.nominal_frequency_at(trim as f64 / record.sample_rate);
    let grid = FrequencyGrid::new(start, sweep.gamma() / record.sample_rate, count)?;
    let aux: Vec<f64> = record.aux.iter().map(|v| *v as f64).collect();
    let z = analytic_signal(&aux)?;
    Ok(Resampled {
        grid,
        x: record.x[trim..n - trim].iter().map(|v| *v as f64).collect(),
        y: record.y[trim..n - trim].iter().map(|v| *v as f64).collect(),
        power: z[trim..n - trim]
            .iter()
            .map(|v| v.norm() / aux_gain)
            .collect(),
    })
}

/// Delay-domain window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowShape {
    /// Tapered fraction of the full width (0 = rectangular, 1 = Hann).
    pub taper: f64,
}

impl Default for WindowShape {
    fn default() -> Self {
        Self { taper: 0.25 }
    }
}

impl WindowShape {
    /// Window value at `x ∈ [-1, 1]` (normalized to the half-width).
    pub fn value(&self, x: f64) -> f64 {
        let a = x.abs();
        if a > 1.0 {
            return 0.0;
        }
        let flat = 1.0 - self.taper;
        if a <= flat || self.taper <= 0.0 {
            return 1.0;
        }
        0.5 * (1.0 + (PI * (a - flat) / self.taper).cos())
    }
}

/// Zero-padded FFT of a real record; bin `m` corresponds to delay
/// `m / (len·step)` when the samples sit on a grid of spacing `step`.
pub fn delay_spectrum(samples: &[f64]) -> Result<Vec<C64>> {
    let len = next_pow2(samples.len());
    let plan = Fft::new(len)?;
    let mut buf: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
    buf.resize(len, C64::new(0.0, 0.0));
    plan.forward(&mut buf);
    Ok(buf)
}

/// Equivalent width in bins, `Σ|S|² / max|S|²`, of the peak in
/// `[center − half_width, center + half_width]`.
pub fn peak_equivalent_width(spectrum: &[C64], center: usize, half_width: usize) -> f64 {
    let lo = center.saturating_sub(half_width);
    let hi = (center + half_width).min(spectrum.len() - 1);
    let p: Vec<f64> = spectrum[lo..=hi].iter().map(|v| v.norm_sqr()).collect();
    let max = p.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    p.iter().sum::<f64>() / max
}

/// Per-channel complex responses on a common (decimated) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponses {
    pub grid: FrequencyGrid,
    /// Indexed by [`ChannelId::index`].
    pub responses: Vec<Option<Vec<C64>>>,
}

/// Separates every channel of `plan` in the delay domain and returns its
/// response with the nominal delay phase removed, normalized by the beat
/// scale `unit_beat` and the laser power.
pub fn channelize(
    res: &Resampled,
    plan: &DelayPlan,
    window: WindowShape,
    unit_beat: f64,
) -> Result<ChannelResponses> {
    plan.validate()?;
    let count = res.grid.count;
    let step = res.grid.step;
    let len = next_pow2(count);
    let bins_per_s = len as f64 * step;
    let guard_bins = plan.guard * bins_per_s;
    if guard_bins < 4.0 {
        return Err(config(format!(
            "guard spans {guard_bins:.2} delay bins, at least 4 are needed"
        )));
    }
    let half = 0.5 * guard_bins;
    let max_delay = plan.max_delay();
    if max_delay * bins_per_s + half >= 0.5 * len as f64 {
        return Err(config(
            "channel windows reach past the delay-domain Nyquist limit",
        ));
    }
    let reach = half.floor() as i64;
    let len2 = next_pow2(2 * reach as usize + 1).min(len);
    let dec = len / len2;
    let plan_fft = Fft::new(len)?;
    let plan_small = Fft::new(len2)?;
    let out_count = count.div_ceil(dec);
    let edge = ((16.0 / (plan.guard * step * dec as f64)).ceil() as usize + 1).min(out_count / 4);
    let kept = out_count - 2 * edge;
    if kept < 2 {
        return Err(invalid("record too short for the configured guard"));
    }
    let grid = FrequencyGrid::new(res.grid.frequency(edge * dec), step * dec as f64, kept)?;
    let weights: Vec<f64> = (-reach..=reach)
        .map(|m| window.value(m as f64 / half))
        .collect();

    let n_ports = plan.n_ports();
    let mut responses = vec![None; plan.n_channels()];
    for (q, samples) in [&res.x, &res.y].into_iter().enumerate() {
        let mut spec: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
        spec.resize(len, C64::new(0.0, 0.0));
        plan_fft.forward(&mut spec);
        for (id, delay) in plan.channels() {
            if id.rx_pol != q {
                continue;
            }
            let center = (delay * bins_per_s).round() as i64;
            let mut buf = vec![C64::new(0.0, 0.0); len2];
            for (w, m) in weights.iter().zip(-reach..=reach) {
                let src = (center + m).rem_euclid(len as i64) as usize;
                buf[m.rem_euclid(len2 as i64) as usize] = spec[src] * *w;
            }
            plan_small.inverse(&mut buf);
            let mut h = Vec::with_capacity(kept);
            for v in edge..edge + kept {
                let u = v * dec;
                let nu = res.grid.frequency(u);
                let shift = ((center as u64 * u as u64) % len as u64) as f64 / len as f64;
                let scale = 2.0 / (len as f64 * unit_beat * res.power[u]);
                h.push(buf[v] * scale * cis_cycles(shift - nu * delay));
            }
            responses[id.index(n_ports)] = Some(h);
        }
    }
    Ok(ChannelResponses { grid, responses })
}

/// Recovered transfer matrices on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunctionEstimate {
    pub grid: FrequencyGrid,
    pub matrices: Vec<BlockTransferMatrix>,
    pub calibration_wavelength: Option<f64>,
}

impl TransferFunctionEstimate {
    pub fn n_channels(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.n_channels)
    }
}

pub fn assemble_transfer(
    ch: &ChannelResponses,
    plan: &DelayPlan,
) -> Result<TransferFunctionEstimate> {
    let n = plan.n_ports();
    let missing: Vec<usize> = (0..plan.n_channels())
        .filter(|k| ch.responses.get(*k).is_none_or(|r| r.is_none()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingChannels(missing));
    }
    let count = ch.grid.count;
    if ch.responses.iter().flatten().any(|r| r.len() != count) {
        return Err(invalid("channel responses do not match the grid length"));
    }
    let ids: Vec<ChannelId> = (0..plan.n_channels())
        .map(|k| ChannelId::from_index(k, n))
        .collect();
    let mut matrices = Vec::with_capacity(count);
    for u in 0..count {
        let mut m = CMatrix::zeros(2 * n, 2 * n);
        for (k, id) in ids.iter().enumerate() {
            m[(id.row(), id.col())] = ch.responses[k]
                .as_ref()
                .map_or(C64::new(0.0, 0.0), |r| r[u]);
        }
        matrices.push(BlockTransferMatrix::new(n, ch.grid.frequency(u), m)?);
    }
    Ok(TransferFunctionEstimate {
        grid: ch.grid,
        matrices,
        calibration_wavelength: None,
    })
}

/// Scales `estimate` by the single complex factor that brings the
/// `reference` response at `wavelength` to 0 dB insertion loss and zero
/// phase on its largest entry.
pub fn calibrate(
    estimate: &TransferFunctionEstimate,
    reference: &TransferFunctionEstimate,
    wavelength: f64,
) -> Result<TransferFunctionEstimate> {
    let nu = SPEED_OF_LIGHT / wavelength;
    let idx = reference.grid.nearest(nu).ok_or_else(|| {
        Error::Calibration(format!(
            "calibration wavelength {:.4} nm is outside the grid",
            wavelength * 1e9
        ))
    })?;
    let m = &reference.matrices[idx].entries;
    let power = m.frobenius_norm_sqr() / m.rows() as f64;
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Calibration(
            "zero response at the calibration wavelength".into(),
        ));
    }
    let largest =
        m.as_slice().iter().fold(
            C64::new(0.0, 0.0),
            |a, b| if b.norm() > a.norm() { *b } else { a },
        );
    let s = (largest.conj() / largest.norm()) / power.sqrt();
    let matrices = estimate
        .matrices
        .iter()
        .map(|b| BlockTransferMatrix {
            n_channels: b.n_channels,
            frequency: b.frequency,
            entries: b.entries.scale(s),
        })
        .collect();
    Ok(TransferFunctionEstimate {
        grid: estimate.grid,
        matrices,
        calibration_wavelength: Some(wavelength),
    })
}

fn mean_sq_singular(m: &CMatrix) -> Result<f64> {
    let sv = svd_singular_values(m)?;
    Ok(sv.iter().map(|s| s * s).sum::<f64>() / sv.len() as f64)
}

/// `−10·log10(mean σ²)` of any square matrix.
pub fn insertion_loss_of(m: &CMatrix) -> Result<f64> {
    let p = mean_sq_singular(m)?;
    if p == 0.0 {
        return Err(Error::UndefinedMetric(
            "insertion loss of an all-zero matrix".into(),
        ));
    }
    Ok(-10.0 * p.log10())
}

pub fn insertion_loss(m: &BlockTransferMatrix) -> Result<f64> {
    insertion_loss_of(&m.entries)
}

/// `10·log10(σ_max²/σ_min²)`; `+∞` for a singular matrix.
pub fn mdl_of(m: &CMatrix) -> Result<f64> {
    let sv = svd_singular_values(m)?;
    let max = sv[0];
    let min = sv[sv.len() - 1];
    if max == 0.0 {
        return Err(Error::UndefinedMetric("MDL of an all-zero matrix".into()));
    }
    if min <= SVD_TOLERANCE * max {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (max / min).log10())
}

pub fn mdl(m: &BlockTransferMatrix) -> Result<f64> {
    mdl_of(&m.entries)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosstalkEntry {
    pub from: usize,
    pub to: usize,
    pub db: f64,
}

/// `XT(i→j) = 10·log10(‖H_ji‖² / ‖H_jj‖²)` over all core pairs `i ≠ j`,
/// where `H_ji` is the block from input core `i` to output core `j`.
pub fn crosstalk(m: &BlockTransferMatrix) -> Result<Vec<CrosstalkEntry>> {
    let n = m.n_channels;
    if n < 2 {
        return Err(invalid("crosstalk needs at least two cores"));
    }
    let mut out = Vec::with_capacity(n * (n - 1));
    for to in 0..n {
        let direct = m.entries.block_power(2 * to, 2 * to, 2, 2);
        if direct == 0.0 {
            return Err(Error::UndefinedMetric(format!(
                "zero direct block for core {to}"
            )));
        }
        for from in 0..n {
            if from != to {
                let leak = m.entries.block_power(2 * to, 2 * from, 2, 2);
                out.push(CrosstalkEntry {
                    from,
                    to,
                    db: 10.0 * (leak / direct).log10(),
                });
            }
        }
    }
    Ok(out)
}

/// Worst pair; `-∞` when there is no pair or no coupling.
pub fn max_crosstalk(m: &BlockTransferMatrix) -> Result<f64> {
    if m.n_channels < 2 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(crosstalk(m)?
        .iter()
        .map(|e| e.db)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Per-wavelength metrics, ascending in wavelength.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSeries {
    pub wavelength: Vec<f64>,
    pub il: Vec<f64>,
    pub il_norm: Vec<f64>,
    pub mdl: Vec<f64>,
    pub xt: Vec<f64>,
}

impl MetricsSeries {
    pub fn len(&self) -> usize {
        self.wavelength.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelength.is_empty()
    }
}

pub fn compute_metrics(
    raw: &TransferFunctionEstimate,
    calibrated: &TransferFunctionEstimate,
) -> Result<MetricsSeries> {
    if raw.matrices.len() != calibrated.matrices.len() {
        return Err(invalid("raw and calibrated estimates differ in length"));
    }
    let mut s = MetricsSeries::default();
    for (r, c) in raw.matrices.iter().zip(&calibrated.matrices).rev() {
        s.wavelength.push(SPEED_OF_LIGHT / r.frequency);
        s.il.push(insertion_loss(r)?);
        s.il_norm.push(insertion_loss(c)?);
        s.mdl.push(mdl(r)?);
        s.xt.push(max_crosstalk(r)?);
    }
    Ok(s)
}

/// IL of every core's direct block relative to its value at the
/// calibration wavelength; rows are cores, columns ascend in wavelength.
pub fn per_core_il(estimate: &TransferFunctionEstimate, wavelength: f64) -> Result<Vec<Vec<f64>>> {
    let idx = estimate
        .grid
        .nearest(SPEED_OF_LIGHT / wavelength)
        .ok_or_else(|| Error::Calibration("calibration wavelength is outside the grid".into()))?;
    let n = estimate.n_channels();
    let block_il =
        |m: &BlockTransferMatrix, c: usize| insertion_loss_of(&CMatrix::from(m.block(c, c)));
    (0..n)
        .map(|c| {
            let base = block_il(&estimate.matrices[idx], c)?;
            estimate
                .matrices
                .iter()
                .rev()
                .map(|m| Ok(block_il(m, c)? - base))
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Everything the pipeline derives from one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub raw: TransferFunctionEstimate,
    pub calibrated: TransferFunctionEstimate,
    pub metrics: MetricsSeries,
}

pub fn process(record: &WaveformRecord, layout: &InterferometerLayout) -> Result<Processed> {
    let res = aux_phase_resample(record, layout.aux_delay, layout.aux_gain)?;
    let ch = channelize(
        &res,
        &layout.delay_plan,
        WindowShape::default(),
        layout.unit_beat(),
    )?;
    let raw = assemble_transfer(&ch, &layout.delay_plan)?;
    let calibrated = calibrate(&raw, &raw, record.sweep.calibration_wavelength)?;
    let metrics = compute_metrics(&raw, &calibrated)?;
    Ok(Processed {
        raw,
        calibrated,
        metrics,
    })
}
