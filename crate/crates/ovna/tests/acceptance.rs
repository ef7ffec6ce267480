//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{Complex, DMatrix};
use ovna::runner::{self, RATE_DGDS, RATE_TOLERANCE};
use ovna::{container, tables, ExperimentConfig};
use ovna_core::apc::{
    apply_transformer, controller_step, orthogonal_fraction, run_tracking, ApcSettings,
    ControllerConfig, ReferenceArm, TransformerState,
};
use ovna_core::dsp::{delay_spectrum, insertion_loss, insertion_loss_of, mdl_of};
use ovna_core::experiment::{self, nonlinearity_study, pearson};
use ovna_core::fiber::{
    build_delay_plan, BirefringentFiber, BirefringentFiberSpec, FiberSegment, LossSpectrum, McfSpec,
};
use ovna_core::linalg::{
    phase_aligned_distance, rotator, svd_singular_values, CMatrix, JonesVector, C64,
};
use ovna_core::sweep::{
    synthesize_channels, AdcSpec, Channel, InterferometerLayout, Nonlinearity, PowerEnvelope,
    Setup, SweepPlan,
};
use ovna_core::SPEED_OF_LIGHT;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Shared full-band runs (APC off, APC on) written through the runner.
struct FullBandRuns {
    _tmp: tempfile::TempDir,
    off: std::path::PathBuf,
    on: std::path::PathBuf,
    elapsed: Duration,
}

fn full_band_runs() -> Result<FullBandRuns, String> {
    let tmp = tempfile::tempdir().map_err(err)?;
    let start = Instant::now();
    let off = tmp.path().join("off");
    let on = tmp.path().join("on");
    runner::run_scenario_to(
        &ExperimentConfig::preset("single_core_apc_off").map_err(err)?,
        &off,
    )
    .map_err(err)?;
    runner::run_scenario_to(
        &ExperimentConfig::preset("single_core_apc_on").map_err(err)?,
        &on,
    )
    .map_err(err)?;
    Ok(FullBandRuns {
        _tmp: tmp,
        off,
        on,
        elapsed: start.elapsed(),
    })
}

fn rotation_rate_law() -> Outcome {
    let cfg = ExperimentConfig::preset("single_core_apc_on").map_err(err)?;
    let start = Instant::now();
    let rows = runner::rotation_rate_table(&cfg, 20).map_err(err)?;
    let elapsed = start.elapsed();
    let mut ok = elapsed < Duration::from_secs(60);
    let mut detail = String::new();
    for (r, t) in rows.iter().zip(RATE_DGDS) {
        ok &= r.relative_error.abs() <= RATE_TOLERANCE;
        detail.push_str(&format!(
            "T={:.2}ps: {:.1} vs {:.1} rad/s ({:+.1}%); ",
            t * 1e12,
            r.measured,
            r.predicted,
            100.0 * r.relative_error
        ));
    }
    let mid = rows[1].measured;
    ok &= (mid / 50.0 - 1.0).abs() <= RATE_TOLERANCE;
    detail.push_str(&format!("{:.1} s", elapsed.as_secs_f64()));
    check(ok, detail)
}

fn matrix_recovery() -> Outcome {
    let start = Instant::now();
    let setup = experiment::desk_recovery().map_err(err)?;
    let out = experiment::run(&setup).map_err(err)?;
    let raw = &out.processed.raw;
    let truth = setup.ground_truth(&raw.grid.frequencies()).map_err(err)?;
    let (mut worst_f, mut worst_il) = (0.0f64, 0.0f64);
    for (e, t) in raw.matrices.iter().zip(&truth.matrices) {
        let d = phase_aligned_distance(&e.entries, &t.entries).map_err(err)?
            / t.entries.frobenius_norm();
        worst_f = worst_f.max(d);
        let dil = insertion_loss(e).map_err(err)? - insertion_loss(t).map_err(err)?;
        worst_il = worst_il.max(dil.abs());
    }
    let elapsed = start.elapsed();
    check(
        worst_f < 1e-2 && worst_il <= 0.1 && elapsed < Duration::from_secs(120) && !raw.matrices.is_empty(),
        format!(
            "{} points, max relative Frobenius {worst_f:.2e}, max IL error {worst_il:.4} dB, {:.1} s",
            raw.matrices.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn fading_suppression(runs: &Result<FullBandRuns, String>) -> Outcome {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let off = runner::read_summary(&runs.off).map_err(err)?;
    let on = runner::read_summary(&runs.on).map_err(err)?;
    let c = runner::compare_dirs(&runs.off, &runs.on).map_err(err)?;
    check(
        off.max_il_deviation_db >= 3.0
            && on.max_il_deviation_db <= 0.5
            && c.std_ratio >= 3.0
            && runs.elapsed < Duration::from_secs(300),
        format!(
            "max deviation off {:.2} dB, on {:.3} dB; IL std off {:.3} dB, on {:.3} dB, ratio {:.1}; {:.1} s",
            off.max_il_deviation_db,
            on.max_il_deviation_db,
            c.std_a,
            c.std_b,
            c.std_ratio,
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn tracking_correlation(runs: &Result<FullBandRuns, String>) -> Outcome {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let cfg = ExperimentConfig::from_toml(
        &tables::read(&runs.off.join(runner::CONFIG_FILE)).map_err(err)?,
    )
    .map_err(err)?;
    let setup = cfg.to_setup().map_err(err)?;
    let record = container::read_record(&runs.off.join(runner::WAVEFORM_FILE)).map_err(err)?;
    let trace =
        tables::parse_tracking(&tables::read(&runs.off.join(runner::TRACKING_FILE)).map_err(err)?)
            .map_err(err)?;
    let slowest = setup
        .layout
        .delay_plan
        .channels()
        .iter()
        .map(|(_, d)| d - setup.path_mismatch())
        .fold(f64::INFINITY, f64::min)
        * setup.sweep.gamma();
    let env = record.envelope(Channel::X, 1e-3, slowest).map_err(err)?;
    let mut tracking = Vec::with_capacity(env.len());
    let mut power = Vec::with_capacity(env.len());
    for p in &env {
        let k = trace
            .time
            .partition_point(|t| *t < p.time)
            .min(trace.len() - 1);
        let k = if k > 0 && (p.time - trace.time[k - 1]) < (trace.time[k] - p.time) {
            k - 1
        } else {
            k
        };
        tracking.push(trace.tracking[k]);
        power.push(p.rms * p.rms);
    }
    let r = pearson(&tracking, &power).map_err(err)?;
    check(r >= 0.7, format!("r = {r:.3} over {} windows", env.len()))
}

fn fringe_setup(n: usize, base: f64, guard: f64, seed: u64) -> Result<Setup, String> {
    let sweep = SweepPlan {
        lambda_start: 1550e-9,
        lambda_stop: 1551e-9,
        sweep_rate: 100e-9,
        nonlinearity: Nonlinearity::default(),
        envelope: PowerEnvelope::flat(),
        calibration_wavelength: 1550.5e-9,
    };
    let adc = AdcSpec {
        sample_rate: 10e6,
        bits: 16,
        noise_rms: 0.0,
    };
    let plan = build_delay_plan(n, base, guard, adc.max_delay(&sweep)).map_err(err)?;
    let group_delay = 48.97e-6;
    Ok(Setup {
        layout: InterferometerLayout::new(plan, 0.5 * guard),
        reference: BirefringentFiberSpec {
            n_segments: 50,
            rms_dgd_target: 0.64e-12,
            group_delay,
            seed,
        },
        dut: McfSpec {
            n_cores: n,
            loss: LossSpectrum::flat(n, 1.0),
            crosstalk_db: -10.0,
            core_skews: vec![0.0; n],
            bulk_delay: group_delay,
            core_birefringence: true,
            seed: seed + 1,
        },
        adc,
        apc: ApcSettings::default(),
        sweep,
        seed: seed + 2,
    })
}

fn fringe_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut channels) = (0.0f64, 0usize);
    for p in 0..10u64 {
        let n = rng.random_range(1..=3usize);
        let guard = rng.random_range(1.0e-9..5.0e-9);
        let base = guard * rng.random_range(1.0..4.0);
        let setup = fringe_setup(n, base, guard, 100 + 10 * p)?;
        let gamma = setup.sweep.gamma();
        let fs = setup.adc.sample_rate;
        for (index, (id, delay)) in setup.layout.delay_plan.channels().into_iter().enumerate() {
            let record = synthesize_channels(&setup, Some(&[index]))
                .map_err(err)?
                .record;
            let rx = if id.rx_pol == 0 { &record.x } else { &record.y };
            let samples: Vec<f64> = rx.iter().map(|v| *v as f64).collect();
            let spec = delay_spectrum(&samples).map_err(err)?;
            let len = spec.len();
            let peak = (1..len / 2)
                .max_by(|a, b| spec[*a].norm_sqr().total_cmp(&spec[*b].norm_sqr()))
                .unwrap_or(0);
            let want = gamma * delay / fs * len as f64;
            worst = worst.max((peak as f64 - want).abs());
            channels += 1;
        }
    }
    check(
        worst <= 1.0,
        format!("10 plans, {channels} channels, worst peak offset {worst:.2} bins"),
    )
}

fn gram_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let n = m.cols();
    let a = DMatrix::<Complex<f64>>::from_fn(m.rows(), n, |i, j| m.as_slice()[i * n + j]);
    let g = a.adjoint() * &a;
    let mut e: Vec<f64> = g.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=16usize);
        let m = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let eig = gram_eigenvalues(&m);
        let sv = svd_singular_values(&m).map_err(err)?;
        for (s, e) in sv.iter().rev().zip(&eig) {
            let want = e.max(0.0).sqrt();
            worst = worst.max((s - want).abs() / want);
        }
        let il = -10.0 * (eig.iter().sum::<f64>() / n as f64).log10();
        let mdl = 10.0 * (eig[n - 1] / eig[0]).log10();
        worst = worst.max((insertion_loss_of(&m).map_err(err)? - il).abs() / il.abs().max(1.0));
        worst = worst.max((mdl_of(&m).map_err(err)? - mdl).abs() / mdl.abs().max(1.0));
    }
    let eye = CMatrix::identity(4);
    let half = CMatrix::from_fn(4, 4, |i, j| C64::new(if i == j { 0.5 } else { 0.0 }, 0.0));
    let exact = insertion_loss_of(&eye).map_err(err)?.abs() < 1e-12
        && mdl_of(&eye).map_err(err)?.abs() < 1e-12
        && (insertion_loss_of(&half).map_err(err)? - 20.0 * 2f64.log10()).abs() < 1e-9
        && mdl_of(&half).map_err(err)?.abs() < 1e-12;
    check(
        worst <= 1e-9 && exact,
        format!(
            "1000 matrices, worst relative error {worst:.1e}; identity and 0.5*I exact: {exact}"
        ),
    )
}

fn aux_correction() -> Outcome {
    let start = Instant::now();
    let setup = experiment::full_band(true).map_err(err)?;
    let s = nonlinearity_study(&setup, 0).map_err(err)?;
    check(
        (s.corrected - s.linear).abs() <= 2.0 && s.uncorrected >= 5.0 * s.corrected,
        format!(
            "peak width linear {:.2}, corrected {:.2}, uncorrected {:.1} bins; {:.1} s",
            s.linear,
            s.corrected,
            s.uncorrected,
            start.elapsed().as_secs_f64()
        ),
    )
}

/// Max and mean orthogonal power of a loop tracking a single plate whose
/// output turns at `rate` rad/s, over `iterations` loop periods.
fn rotating_sop(rate: f64, loop_rate: f64, iterations: f64) -> Result<(f64, f64), String> {
    let duration = iterations / loop_rate;
    let sweep = SweepPlan {
        lambda_start: 1550e-9,
        lambda_stop: 1550e-9 + 100e-9 * duration,
        sweep_rate: 100e-9,
        nonlinearity: Nonlinearity::default(),
        envelope: PowerEnvelope::flat(),
        calibration_wavelength: 1550e-9,
    };
    let tau = rate / (2.0 * PI * sweep.gamma());
    let fiber = BirefringentFiber::from_segments(vec![FiberSegment::new(tau, rotator(FRAC_PI_4))]);
    let mut settings = ApcSettings::default();
    settings.controller.loop_rate = loop_rate;
    let arm = ReferenceArm::calibrated(
        fiber,
        JonesVector::horizontal(),
        settings.controller.target,
        &settings.initial,
        SPEED_OF_LIGHT / 1550e-9,
    )
    .map_err(err)?;
    let o = run_tracking(&sweep, &arm, &settings)
        .map_err(err)?
        .trace
        .orthogonal;
    let max = o.iter().cloned().fold(0.0, f64::max);
    Ok((max, o.iter().sum::<f64>() / o.len() as f64))
}

/// Largest rate on a 2^(1/8) grid from 10 rad/s before the first failure.
fn max_tracked_rate(loop_rate: f64) -> Result<f64, String> {
    let limit = 10f64.powf(-1.5);
    let mut rate = 10.0;
    loop {
        let next = rate * 2f64.powf(0.125);
        if rotating_sop(next, loop_rate, 500.0)?.0 > limit {
            return Ok(rate);
        }
        rate = next;
    }
}

fn controller_behavior() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = ControllerConfig::default();
    let mut slowest = 0usize;
    let mut power_err = 0.0f64;
    for _ in 0..50 {
        let v = JonesVector {
            ex: C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            ey: C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        }
        .normalized()
        .map_err(err)?;
        let obs =
            |s: &TransformerState| orthogonal_fraction(&cfg.target, &apply_transformer(s, &v));
        let mut s = TransformerState::default();
        let mut k = 0;
        while obs(&s) >= 1e-3 && k < 10_000 {
            s = controller_step(&s, &cfg, obs);
            k += 1;
        }
        slowest = slowest.max(k);
        power_err = power_err.max((apply_transformer(&s, &v).power() - v.power()).abs());
    }

    let mut design_max = 0.0f64;
    for r in [10.0, 20.0, 30.0, 40.0, 50.0] {
        design_max = design_max.max(rotating_sop(r, cfg.loop_rate, 500.0)?.0);
    }
    let means = (0..7)
        .map(|k| rotating_sop(50.0 * 2f64.powi(k), cfg.loop_rate, 500.0).map(|m| m.1))
        .collect::<Result<Vec<_>, _>>()?;
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);

    let loop_rates = [1e3, 2e3, 5e3, 1e4];
    let rmax = loop_rates
        .iter()
        .map(|l| max_tracked_rate(*l))
        .collect::<Result<Vec<_>, _>>()?;
    let xs: Vec<f64> = loop_rates.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = rmax.iter().map(|v| v.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();

    let db = |p: f64| 10.0 * p.log10();
    check(
        slowest <= 200
            && db(design_max) <= -15.0
            && monotone
            && (slope - 1.0).abs() <= 0.15
            && power_err <= 1e-12,
        format!(
            "static convergence in <= {slowest} iterations; max orthogonal up to 50 rad/s {:.1} dB; \
             mean orthogonal monotone over 50..3200 rad/s: {monotone}; max rate {:?} rad/s at 1k..10k Hz, \
             slope {slope:.2}; power error {power_err:.1e}",
            db(design_max),
            rmax.iter().map(|r| r.round()).collect::<Vec<_>>()
        ),
    )
}

fn artifact_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            fs::read(&p).map(|b| (name, b)).map_err(err)
        })
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let cfg = ExperimentConfig::preset("desk_recovery").map_err(err)?;
    let lib = tmp.path().join("lib");
    runner::run_scenario_to(&cfg, &lib).map_err(err)?;
    let cli = tmp.path().join("cli");
    let status = Command::new(env!("CARGO_BIN_EXE_ovna"))
        .args(["run", "preset:desk_recovery"])
        .env(runner::OUTPUT_DIR_ENV, &cli)
        .output()
        .map_err(err)?;
    if !status.status.success() {
        return Err(format!(
            "CLI run failed: {}",
            String::from_utf8_lossy(&status.stderr)
        ));
    }
    let a = artifact_bytes(&lib)?;
    let b = artifact_bytes(&cli)?;
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        a.len() == b.len() && differing.is_empty() && names.contains(&runner::WAVEFORM_FILE),
        format!(
            "{} files compared ({}); differing: {differing:?}",
            a.len(),
            names.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let runs = full_band_runs();
    let criteria: Vec<Criterion> = vec![
        (
            "1 open-loop SOP rotation rate follows 2*pi*gamma*T",
            Box::new(rotation_rate_law),
        ),
        (
            "2 desk-scale transfer-matrix recovery",
            Box::new(matrix_recovery),
        ),
        (
            "3 APC suppresses polarization fading",
            Box::new(|| fading_suppression(&runs)),
        ),
        (
            "4 tracking signal correlates with beat power",
            Box::new(|| tracking_correlation(&runs)),
        ),
        (
            "5 fringe frequency equals sweep rate times delay",
            Box::new(fringe_law),
        ),
        (
            "6 SVD, IL and MDL match an eigenvalue oracle",
            Box::new(metric_oracles),
        ),
        (
            "7 AUX resampling removes sweep nonlinearity",
            Box::new(aux_correction),
        ),
        (
            "8 controller convergence and tracking limits",
            Box::new(controller_behavior),
        ),
        ("9 runs are bit-reproducible", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        match f() {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
