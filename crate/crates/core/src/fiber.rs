//! Reference-arm birefringence, the multi-core device under test and the
//! delay plan that time-multiplexes its channels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Result};
use crate::linalg::{
    cis_cycles, dgd_element, jones_to_stokes, stokes_angle, BlockTransferMatrix, CMatrix,
    JonesMatrix, JonesVector, C64,
};
use crate::SPEED_OF_LIGHT;

/// Statistical description of a long birefringent reference fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirefringentFiberSpec {
    pub n_segments: usize,
    /// RMS differential group delay of the whole fiber, seconds.
    pub rms_dgd_target: f64,
    /// Bulk propagation delay, seconds. It is length-matched by the device
    /// under test, so only the difference between the two enters the beats.
    pub group_delay: f64,
    pub seed: u64,
}

impl BirefringentFiberSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments == 0 {
            return Err(config("reference fiber needs at least one segment"));
        }
        if !(self.rms_dgd_target >= 0.0) || !self.rms_dgd_target.is_finite() {
            return Err(config("reference fiber RMS DGD must be finite and >= 0"));
        }
        if !(self.group_delay >= 0.0) || !self.group_delay.is_finite() {
            return Err(config(
                "reference fiber group delay must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// One fixed waveplate of the concatenation: a DGD element seen through a
/// frequency-independent frame rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberSegment {
    pub dgd: f64,
    pub frame: JonesMatrix,
    frame_inv: JonesMatrix,
}

impl FiberSegment {
    pub fn new(dgd: f64, frame: JonesMatrix) -> Self {
        Self {
            dgd,
            frame,
            frame_inv: frame.adjoint(),
        }
    }

    pub fn jones(&self, nu: f64) -> JonesMatrix {
        self.frame * dgd_element(self.dgd, nu) * self.frame_inv
    }

    /// Principal state whose polarization is preserved by this segment.
    pub fn eigenstate(&self) -> JonesVector {
        self.frame.apply(&JonesVector::horizontal())
    }
}

/// A realized reference fiber (one draw from its spec).
#[derive(Debug, Clone, PartialEq)]
pub struct BirefringentFiber {
    segments: Vec<FiberSegment>,
}

impl BirefringentFiber {
    /// Concatenation of `n_segments` plates with Haar-random axes and DGD
    /// `T/√n` each, which makes the ensemble mean-square DGD exactly `T²`.
    pub fn new(spec: &BirefringentFiberSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let dgd = spec.rms_dgd_target / (spec.n_segments as f64).sqrt();
        let segments = (0..spec.n_segments)
            .map(|_| FiberSegment::new(dgd, JonesMatrix::random_unitary(&mut rng)))
            .collect();
        Ok(Self { segments })
    }

    pub fn from_segments(segments: Vec<FiberSegment>) -> Self {
        Self { segments }
    }

    pub fn segments(&self) -> &[FiberSegment] {
        &self.segments
    }

    pub fn jones(&self, nu: f64) -> JonesMatrix {
        self.segments
            .iter()
            .fold(JonesMatrix::identity(), |acc, s| s.jones(nu) * acc)
    }

    /// Output field for input `v`; cheaper than forming the matrix.
    pub fn propagate(&self, nu: f64, v: &JonesVector) -> JonesVector {
        let mut out = *v;
        let mut cached = (f64::NAN, C64::new(1.0, 0.0));
        for s in &self.segments {
            let local = s.frame_inv.apply(&out);
            if s.dgd != cached.0 {
                cached = (s.dgd, cis_cycles(0.5 * nu * s.dgd));
            }
            let p = cached.1;
            let local = JonesVector::new(local.ex * p, local.ey * p.conj());
            out = s.frame.apply(&local);
        }
        out
    }
}

pub fn reference_jones(spec: &BirefringentFiberSpec, nu: f64) -> Result<JonesMatrix> {
    Ok(BirefringentFiber::new(spec)?.jones(nu))
}

/// Instantaneous DGD from the eigenvalues of `J(ν+δ)·J(ν)⁻¹`.
pub fn differential_dgd(a: &JonesMatrix, b: &JonesMatrix, delta: f64) -> f64 {
    let m = *b * a.adjoint();
    let tr = m.trace();
    let disc = (tr * tr - m.det() * 4.0).sqrt();
    let l1 = (tr + disc) * 0.5;
    let l2 = (tr - disc) * 0.5;
    (l1 / l2).arg().abs() / (2.0 * PI * delta)
}

/// RMS DGD of an arbitrary frequency response over `[lo, hi]`, probed on a
/// grid of spacing `delta`.
pub fn rms_dgd_of(jones: impl Fn(f64) -> JonesMatrix, band: (f64, f64), delta: f64) -> Result<f64> {
    let (lo, hi) = band;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid("DGD probe spacing must be > 0"));
    }
    if !(hi > lo) {
        return Err(invalid("DGD band must have positive width"));
    }
    let steps = (((hi - lo) / delta).floor() as usize).max(1);
    let mut prev = jones(lo);
    let mut acc = 0.0;
    for k in 1..=steps {
        let next = jones(lo + k as f64 * delta);
        let d = differential_dgd(&prev, &next, delta);
        acc += d * d;
        prev = next;
    }
    Ok((acc / steps as f64).sqrt())
}

pub fn measure_rms_dgd(spec: &BirefringentFiberSpec, band: (f64, f64), delta: f64) -> Result<f64> {
    let fiber = BirefringentFiber::new(spec)?;
    rms_dgd_of(|nu| fiber.jones(nu), band, delta)
}

/// Poincaré-sphere rotation angle of `b·a⁻¹`, found from how far the
/// outputs for three mutually orthogonal probe launches move.
pub fn sop_rotation_angle(a: &JonesMatrix, b: &JonesMatrix) -> Result<f64> {
    let mut acc = 0.0;
    for probe in [
        JonesVector::horizontal(),
        JonesVector::diagonal(),
        JonesVector::circular(),
    ] {
        let sa = jones_to_stokes(&a.apply(&probe));
        let sb = jones_to_stokes(&b.apply(&probe));
        let theta = stokes_angle(&sa, &sb)?;
        acc += (0.5 * theta).sin().powi(2);
    }
    Ok(2.0 * (0.5 * acc).sqrt().min(1.0).asin())
}

/// RMS over `[lo, hi]` of the output-SOP rotation per unit optical
/// frequency, rad/Hz.
pub fn rms_rotation_per_hz(
    jones: impl Fn(f64) -> JonesMatrix,
    band: (f64, f64),
    delta: f64,
) -> Result<f64> {
    let (lo, hi) = band;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid("rotation probe spacing must be > 0"));
    }
    if !(hi > lo) {
        return Err(invalid("rotation band must have positive width"));
    }
    let steps = (((hi - lo) / delta).floor() as usize).max(1);
    let mut prev = jones(lo);
    let mut acc = 0.0;
    for k in 1..=steps {
        let next = jones(lo + k as f64 * delta);
        let rate = sop_rotation_angle(&prev, &next)? / delta;
        acc += rate * rate;
        prev = next;
    }
    Ok((acc / steps as f64).sqrt())
}

/// Per-core loss table, dB against wavelength (meters), linearly interpolated
/// and held constant outside the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpectrum {
    pub wavelengths: Vec<f64>,
    pub per_core_db: Vec<Vec<f64>>,
}

impl LossSpectrum {
    pub fn flat(n_cores: usize, loss_db: f64) -> Self {
        Self {
            wavelengths: vec![1.0e-6, 2.0e-6],
            per_core_db: vec![vec![loss_db, loss_db]; n_cores],
        }
    }

    /// Straight line per core: `base_db[core] + slope_db_per_nm·(λ − λ_ref)`.
    pub fn linear(
        base_db: &[f64],
        slope_db_per_nm: f64,
        lambda_ref: f64,
        span: (f64, f64),
    ) -> Self {
        let at = |l: f64, b: f64| b + slope_db_per_nm * (l - lambda_ref) * 1e9;
        Self {
            wavelengths: vec![span.0, span.1],
            per_core_db: base_db
                .iter()
                .map(|&b| vec![at(span.0, b), at(span.1, b)])
                .collect(),
        }
    }

    pub fn validate(&self, n_cores: usize) -> Result<()> {
        if self.wavelengths.is_empty() {
            return Err(config("loss spectrum needs at least one wavelength"));
        }
        if self.wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config(
                "loss spectrum wavelengths must be strictly increasing",
            ));
        }
        if self.per_core_db.len() != n_cores {
            return Err(config(format!(
                "loss spectrum has {} cores, device has {}",
                self.per_core_db.len(),
                n_cores
            )));
        }
        for (c, row) in self.per_core_db.iter().enumerate() {
            if row.len() != self.wavelengths.len() {
                return Err(config(format!(
                    "loss spectrum row for core {c} has wrong length"
                )));
            }
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(config(format!(
                    "loss of core {c} must be finite and >= 0 dB"
                )));
            }
        }
        Ok(())
    }

    pub fn loss_db(&self, core: usize, wavelength: f64) -> f64 {
        interp_linear(&self.wavelengths, &self.per_core_db[core], wavelength)
    }
}

pub(crate) fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|v| *v <= x).max(1) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Weakly coupled multi-core fiber under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McfSpec {
    pub n_cores: usize,
    pub loss: LossSpectrum,
    /// Per-pair coupled-to-direct power ratio, dB. `-inf` disables coupling.
    pub crosstalk_db: f64,
    /// Group-delay skew of each core relative to the nominal length, seconds.
    pub core_skews: Vec<f64>,
    /// Bulk delay of the fiber, seconds.
    pub bulk_delay: f64,
    /// Random fixed birefringence per core; off makes each core a plain
    /// attenuator.
    #[serde(default = "enabled")]
    pub core_birefringence: bool,
    pub seed: u64,
}

fn enabled() -> bool {
    true
}

impl McfSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cores == 0 {
            return Err(config("device needs at least one core"));
        }
        self.loss.validate(self.n_cores)?;
        if !(self.crosstalk_db <= 0.0) {
            return Err(config("crosstalk level must be <= 0 dB"));
        }
        if self.core_skews.len() != self.n_cores {
            return Err(config("one group-delay skew per core is required"));
        }
        if self.core_skews.iter().any(|s| !s.is_finite()) {
            return Err(config("core skews must be finite"));
        }
        if !(self.bulk_delay >= 0.0) || !self.bulk_delay.is_finite() {
            return Err(config("device bulk delay must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Realized device: `H(ν) = D(λ)·M·E(ν)` with per-core loss `D`, a fixed
/// unitary `M` (core birefringence and pairwise couplers) and per-core
/// delay phases `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mcf {
    spec: McfSpec,
    static_part: CMatrix,
}

impl Mcf {
    pub fn new(spec: &McfSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_cores;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut birefringence = CMatrix::zeros(2 * n, 2 * n);
        for core in 0..n {
            let w = if spec.core_birefringence {
                JonesMatrix::random_unitary(&mut rng)
            } else {
                JonesMatrix::identity()
            };
            birefringence.set_jones_block(2 * core, 2 * core, &w);
        }
        let ratio = 10f64.powf(spec.crosstalk_db / 10.0);
        let mut coupling = CMatrix::identity(2 * n);
        if ratio > 0.0 {
            let kappa = ratio.sqrt().min(1.0).asin();
            let (s, c) = kappa.sin_cos();
            for a in 0..n {
                for b in a + 1..n {
                    let w = JonesMatrix::random_unitary(&mut rng);
                    let mut pair = CMatrix::identity(2 * n);
                    let i_s = C64::new(0.0, s);
                    pair.set_jones_block(2 * a, 2 * a, &JonesMatrix::identity().scale(c.into()));
                    pair.set_jones_block(2 * b, 2 * b, &JonesMatrix::identity().scale(c.into()));
                    pair.set_jones_block(2 * a, 2 * b, &w.scale(i_s));
                    pair.set_jones_block(2 * b, 2 * a, &w.adjoint().scale(i_s));
                    coupling = pair.matmul(&coupling)?;
                }
            }
        }
        let static_part = coupling.matmul(&birefringence)?;
        Ok(Self {
            spec: spec.clone(),
            static_part,
        })
    }

    pub fn spec(&self) -> &McfSpec {
        &self.spec
    }

    pub fn n_cores(&self) -> usize {
        self.spec.n_cores
    }

    /// Frequency-independent unitary core of the response.
    pub fn static_part(&self) -> &CMatrix {
        &self.static_part
    }

    pub fn core_amplitude(&self, core: usize, wavelength: f64) -> f64 {
        10f64.powf(-self.spec.loss.loss_db(core, wavelength) / 20.0)
    }

    pub fn transfer(&self, nu: f64) -> BlockTransferMatrix {
        let n = self.spec.n_cores;
        let wavelength = SPEED_OF_LIGHT / nu;
        let amps: Vec<f64> = (0..n).map(|c| self.core_amplitude(c, wavelength)).collect();
        let phases: Vec<C64> = self
            .spec
            .core_skews
            .iter()
            .map(|s| cis_cycles(-nu * s))
            .collect();
        let entries = CMatrix::from_fn(2 * n, 2 * n, |r, c| {
            self.static_part[(r, c)] * amps[r / 2] * phases[c / 2]
        });
        BlockTransferMatrix {
            n_channels: n,
            frequency: nu,
            entries,
        }
    }
}

pub fn dut_transfer(spec: &McfSpec, nu: f64) -> Result<BlockTransferMatrix> {
    Ok(Mcf::new(spec)?.transfer(nu))
}

/// One time-multiplexed measurement channel: launched polarization and port,
/// output port and receiver polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId {
    pub in_pol: usize,
    pub in_port: usize,
    pub out_port: usize,
    pub rx_pol: usize,
}

impl ChannelId {
    pub fn index(&self, n_ports: usize) -> usize {
        ((self.rx_pol * n_ports + self.out_port) * n_ports + self.in_port) * 2 + self.in_pol
    }

    pub fn from_index(index: usize, n_ports: usize) -> Self {
        let in_pol = index % 2;
        let rest = index / 2;
        let in_port = rest % n_ports;
        let rest = rest / n_ports;
        let out_port = rest % n_ports;
        let rx_pol = rest / n_ports;
        Self {
            in_pol,
            in_port,
            out_port,
            rx_pol,
        }
    }

    /// Row of this channel in the 2N×2N transfer matrix.
    pub fn row(&self) -> usize {
        2 * self.out_port + self.rx_pol
    }

    pub fn col(&self) -> usize {
        2 * self.in_port + self.in_pol
    }
}

/// Path-length offsets of the polarization multiplexer and the input/output
/// fan-out, relative to the reference arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayPlan {
    pub input_pol_delay: f64,
    pub input_port_delays: Vec<f64>,
    pub output_port_delays: Vec<f64>,
    /// Excess delay of the shortest measurement path over the reference arm.
    pub reference_delay: f64,
    pub guard: f64,
}

impl DelayPlan {
    pub fn n_ports(&self) -> usize {
        self.input_port_delays.len()
    }

    pub fn n_channels(&self) -> usize {
        4 * self.n_ports() * self.n_ports()
    }

    pub fn channel_delay(&self, id: &ChannelId) -> f64 {
        self.reference_delay
            + id.in_pol as f64 * self.input_pol_delay
            + self.input_port_delays[id.in_port]
            + self.output_port_delays[id.out_port]
    }

    /// All `4·N²` channels in index order with their beat delays.
    pub fn channels(&self) -> Vec<(ChannelId, f64)> {
        let n = self.n_ports();
        (0..self.n_channels())
            .map(|k| {
                let id = ChannelId::from_index(k, n);
                (id, self.channel_delay(&id))
            })
            .collect()
    }

    pub fn max_delay(&self) -> f64 {
        self.channels().iter().map(|c| c.1).fold(0.0, f64::max)
    }

    /// Checks that the delays seen by each receiver are pairwise separated by
    /// at least `guard` and stay `guard` away from zero delay.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_ports();
        if n == 0 || self.output_port_delays.len() != n {
            return Err(config(
                "delay plan needs matching, nonempty input and output port lists",
            ));
        }
        if !(self.guard > 0.0) {
            return Err(config("delay plan guard must be > 0"));
        }
        let slack = self.guard * 1e-9;
        let mut delays: Vec<f64> = self
            .channels()
            .iter()
            .filter(|(id, _)| id.rx_pol == 0)
            .map(|c| c.1)
            .collect();
        if delays.iter().any(|d| !d.is_finite()) {
            return Err(config("delay plan contains non-finite delays"));
        }
        delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if delays[0] < self.guard - slack {
            return Err(config(format!(
                "shortest channel delay {:.3e} s is closer than the guard to zero delay",
                delays[0]
            )));
        }
        for w in delays.windows(2) {
            if w[1] - w[0] < self.guard - slack {
                return Err(config(format!(
                    "channel delays {:.4e} s and {:.4e} s are closer than the guard {:.3e} s",
                    w[0], w[1], self.guard
                )));
            }
        }
        Ok(())
    }
}

/// Regular plan: port spacing `Δ_in = guard`, polarization offset `N·Δ_in`,
/// output spacing `2N·Δ_in`, so the per-receiver delays form the ladder
/// `base + k·guard`, `k = 0..2N²`.
pub fn build_delay_plan(
    n_ports: usize,
    base_delay: f64,
    guard: f64,
    max_delay: f64,
) -> Result<DelayPlan> {
    if n_ports == 0 {
        return Err(invalid("delay plan needs at least one port"));
    }
    if !(guard > 0.0) || !guard.is_finite() {
        return Err(invalid("delay plan guard must be > 0"));
    }
    if !(base_delay >= guard) {
        return Err(config("base delay must be at least one guard interval"));
    }
    let step_in = guard;
    let plan = DelayPlan {
        input_pol_delay: n_ports as f64 * step_in,
        input_port_delays: (0..n_ports).map(|i| i as f64 * step_in).collect(),
        output_port_delays: (0..n_ports)
            .map(|j| (2 * n_ports * j) as f64 * step_in)
            .collect(),
        reference_delay: base_delay,
        guard,
    };
    let longest = plan.max_delay();
    if longest > max_delay {
        return Err(config(format!(
            "longest channel delay {:.3e} s exceeds the {:.3e} s the ADC bandwidth allows; reduce guard or base delay",
            longest, max_delay
        )));
    }
    plan.validate()?;
    Ok(plan)
}

/// Frequency-sampled true response of the device.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthResponse {
    pub frequencies: Vec<f64>,
    pub matrices: Vec<BlockTransferMatrix>,
}

impl GroundTruthResponse {
    pub fn new(frequencies: Vec<f64>, matrices: Vec<BlockTransferMatrix>) -> Result<Self> {
        if frequencies.len() != matrices.len() {
            return Err(invalid("ground truth needs one matrix per frequency"));
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid(
                "ground-truth frequency grid must be strictly increasing",
            ));
        }
        if matrices.iter().any(|m| !m.entries.is_finite()) {
            return Err(invalid("ground-truth matrices must be finite"));
        }
        Ok(Self {
            frequencies,
            matrices,
        })
    }
}
