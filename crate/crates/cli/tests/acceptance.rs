//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Every tolerance and time budget is pinned
//! below.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use antevo_core::array::{ArrayConstraints, ArrayGeometry, DoaSet, HermitianMatrix, Weights};
use antevo_core::channel::{synthesize_csi, Drift};
use antevo_core::doa::{estimate_doas, estimate_from_batch, EstimatorConfig};
use antevo_core::lifecycle::{
    is_valid_sequence, monitoring_check, run_episode, run_episode_with, AgentRole, EpisodeOutcome,
    EventOutcome, TriggerReason,
};
use antevo_core::llm::{ApiKey, ChatCompletionsClient, EndpointConfig, EndpointSettings, LlmRouter};
use antevo_core::optimizer::{
    fixed_baseline, optimal_weights, optimize_movable, position_gradient, project_positions,
    OptimizerConfig,
};
use antevo_core::scenario::{events_to_toml, metrics_to_csv, ScenarioConfig, TrajectorySettings};

use common::{rule_following_reply, MockEndpoint};

const MATCHED_FILTER_TOL_DB: f64 = 1e-6;
const EIGEN_TOL: f64 = 1e-9;
const PROJECTION_ORACLE_TOL: f64 = 1e-6;
const IDEMPOTENCE_TOL: f64 = 1e-12;
const GRADIENT_STEP_WAVELENGTHS: f64 = 1e-6;
const GRADIENT_REL_TOL: f64 = 1e-4;
const DOMINANCE_TOL_DB: f64 = 1e-9;
const DOMINANCE_MARGIN_DB: f64 = 0.5;
const DOMINANCE_FRACTION: f64 = 0.90;
const RECOVERY_TOL_DB: f64 = 1e-9;
const DOA_RMSE_LIMIT_DEG: f64 = 1.0;
const DOA_NOISELESS_LIMIT_DEG: f64 = 0.5;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("matched-filter exactness", Duration::from_secs(1), matched_filter),
        ("eigen-optimality", Duration::from_secs(30), eigen_optimality),
        ("projection oracle", Duration::from_secs(10), projection_oracle),
        ("gradient check", Duration::from_secs(10), gradient_check),
        ("movable dominance", Duration::from_secs(300), movable_dominance),
        ("trigger vector", Duration::from_secs(1), trigger_vector),
        ("recovery episode", Duration::from_secs(60), recovery_episode),
        ("DoA estimation quality", Duration::from_secs(30), doa_quality),
        ("end-to-end determinism", Duration::from_secs(60), determinism),
        ("offline completeness", Duration::from_secs(30), offline_completeness),
    ];

    let mut failures = 0;
    for (index, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > budget => Err(format!(
                "{detail}; took {:.2} s, budget {:.0} s",
                elapsed.as_secs_f64(),
                budget.as_secs_f64()
            )),
            other => other,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!(
            "[{tag}] {:>2}. {name} ({:.2} s): {detail}",
            index + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(payload: &Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// Independent reference implementations.

fn oracle_steering(positions: &[f64], wavelength: f64, angle_deg: f64) -> Vec<Complex64> {
    let c = angle_deg.to_radians().cos();
    positions
        .iter()
        .map(|x| Complex64::from_polar(1.0, 2.0 * PI / wavelength * x * c))
        .collect()
}

fn oracle_gain(positions: &[f64], wavelength: f64, weights: &[Complex64], angles: &[f64]) -> f64 {
    angles
        .iter()
        .map(|&a| {
            let s: Complex64 = oracle_steering(positions, wavelength, a)
                .iter()
                .zip(weights)
                .map(|(an, w)| w.conj() * an)
                .sum();
            s.norm_sqr()
        })
        .sum()
}

fn oracle_gain_matrix(positions: &[f64], wavelength: f64, angles: &[f64]) -> DMatrix<Complex64> {
    let n = positions.len();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for &a in angles {
        let v = DVector::from_vec(oracle_steering(positions, wavelength, a));
        m += &v * v.adjoint();
    }
    m
}

fn random_feasible_positions(rng: &mut ChaCha8Rng, c: &ArrayConstraints) -> Vec<f64> {
    let n = c.num_elements;
    let span = 2.0 * c.position_bound - (n as f64 - 1.0) * c.min_spacing;
    let mut y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * span).collect();
    y.sort_by(f64::total_cmp);
    y.iter()
        .enumerate()
        .map(|(i, v)| (-c.position_bound + v + i as f64 * c.min_spacing).min(c.position_bound))
        .collect()
}

fn random_angles(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64, min_sep: f64) -> Vec<f64> {
    loop {
        let mut a: Vec<f64> = (0..k).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
        a.sort_by(f64::total_cmp);
        if a.windows(2).all(|p| p[1] - p[0] >= min_sep) {
            return a;
        }
    }
}

fn random_unit_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let w: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    w.into_iter().map(|z| z / norm).collect()
}

// Criteria.

fn matched_filter() -> Outcome {
    let constraints = ArrayConstraints::default();
    let doas = DoaSet::new(vec![63.0]).unwrap();
    let expected = 10.0 * 8f64.log10();
    let movable = optimize_movable(&doas, &OptimizerConfig::default(), &constraints).map_err(|e| e.to_string())?;
    let fixed = fixed_baseline(&doas, &constraints).map_err(|e| e.to_string())?;
    for (label, g) in [("movable", movable.gain_db), ("fixed", fixed.gain_db)] {
        ensure((g - expected).abs() <= MATCHED_FILTER_TOL_DB, || {
            format!("{label} gain {g:.9} dB, expected {expected:.9} dB")
        })?;
    }
    Ok(format!(
        "movable {:.6} dB, fixed {:.6} dB, expected {expected:.6} dB (tol {MATCHED_FILTER_TOL_DB:e})",
        movable.gain_db, fixed.gain_db
    ))
}

fn eigen_optimality() -> Outcome {
    let mut worst: f64 = 0.0;
    for instance in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let n = rng.random_range(2..=4);
        let k = rng.random_range(1..=3);
        let c = ArrayConstraints::for_wavelength(0.125, n);
        let positions = random_feasible_positions(&mut rng, &c);
        let angles = random_angles(&mut rng, k, 5.0, 175.0, 0.5);
        let geometry = ArrayGeometry::new(c, positions.clone()).map_err(|e| e.to_string())?;
        let doas = DoaSet::new(angles.clone()).unwrap();

        let w = optimal_weights(&geometry, &doas).map_err(|e| e.to_string())?;
        let gain = oracle_gain(&positions, c.wavelength, w.entries(), &angles);
        let dense = oracle_gain_matrix(&positions, c.wavelength, &angles).symmetric_eigen();
        let lambda_max = dense.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let err = (gain - lambda_max).abs();
        worst = worst.max(err);
        ensure(err <= EIGEN_TOL, || {
            format!("instance {instance}: gain {gain} vs dominant eigenvalue {lambda_max}")
        })?;
        for trial in 0..1000 {
            let r = random_unit_weights(&mut rng, n);
            let rg = oracle_gain(&positions, c.wavelength, &r, &angles);
            ensure(rg <= gain + EIGEN_TOL, || {
                format!("instance {instance}: random weights {trial} reach {rg} > {gain}")
            })?;
        }
    }
    Ok(format!(
        "200 instances, worst |gain - lambda_max| = {worst:.2e} (tol {EIGEN_TOL:e}), 1000 random weights each"
    ))
}

/// Euclidean projection by enumerating active sets of the eight linear
/// constraints on a three-element array.
fn brute_force_projection(z: &[f64; 3], d: f64, b: f64) -> [f64; 3] {
    let rows: Vec<([f64; 3], f64)> = vec![
        ([1.0, 0.0, 0.0], b),
        ([0.0, 1.0, 0.0], b),
        ([0.0, 0.0, 1.0], b),
        ([-1.0, 0.0, 0.0], b),
        ([0.0, -1.0, 0.0], b),
        ([0.0, 0.0, -1.0], b),
        ([1.0, -1.0, 0.0], -d),
        ([0.0, 1.0, -1.0], -d),
    ];
    let feasible = |x: &[f64; 3]| {
        rows.iter()
            .all(|(c, rhs)| c[0] * x[0] + c[1] * x[1] + c[2] * x[2] <= rhs + 1e-12)
    };
    let zv = DVector::from_row_slice(z);
    let mut best: Option<([f64; 3], f64)> = None;
    for mask in 0u32..(1 << rows.len()) {
        let active: Vec<&([f64; 3], f64)> =
            (0..rows.len()).filter(|i| mask & (1 << i) != 0).map(|i| &rows[i]).collect();
        let x: [f64; 3] = if active.is_empty() {
            *z
        } else {
            let cm = DMatrix::from_fn(active.len(), 3, |i, j| active[i].0[j]);
            let bv = DVector::from_fn(active.len(), |i, _| active[i].1);
            let residual = &cm * &zv - &bv;
            let Ok(pinv) = (&cm * cm.transpose()).pseudo_inverse(1e-12) else { continue };
            let xv = &zv - cm.transpose() * (pinv * residual);
            if (&cm * &xv - &bv).amax() > 1e-9 {
                continue;
            }
            [xv[0], xv[1], xv[2]]
        };
        if !feasible(&x) {
            continue;
        }
        let dist = (0..3).map(|i| (x[i] - z[i]).powi(2)).sum::<f64>();
        if best.is_none_or(|(_, bd)| dist < bd) {
            best = Some((x, dist));
        }
    }
    best.expect("feasible set is non-empty").0
}

fn projection_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_idem: f64 = 0.0;
    for instance in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + instance);
        let wavelength = 0.125;
        let d = wavelength / 2.0;
        let b = d + rng.random::<f64>() * (5.0 * wavelength - d);
        let c = ArrayConstraints {
            wavelength,
            num_elements: 3,
            min_spacing: d,
            position_bound: b,
        };
        let z: [f64; 3] = std::array::from_fn(|_| (rng.random::<f64>() * 2.0 - 1.0) * 1.5 * b);
        let x = project_positions(&z, &c).map_err(|e| e.to_string())?;
        let oracle = brute_force_projection(&z, d, b);
        let err = (0..3).map(|i| (x[i] - oracle[i]).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        ensure(err <= PROJECTION_ORACLE_TOL, || {
            format!("instance {instance}: {x:?} vs oracle {oracle:?}")
        })?;
        let again = project_positions(&x, &c).map_err(|e| e.to_string())?;
        let idem = (0..3).map(|i| (again[i] - x[i]).abs()).fold(0.0, f64::max);
        worst_idem = worst_idem.max(idem);
        ensure(idem <= IDEMPOTENCE_TOL, || format!("instance {instance}: reprojection moved {idem:e}"))?;
    }
    Ok(format!(
        "100 instances, worst oracle gap {worst:.2e} (tol {PROJECTION_ORACLE_TOL:e}), worst idempotence gap {worst_idem:.2e} (tol {IDEMPOTENCE_TOL:e})"
    ))
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for instance in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + instance);
        let n = rng.random_range(2..=8);
        let k = rng.random_range(1..=3);
        let c = ArrayConstraints::for_wavelength(0.125, n);
        let positions = random_feasible_positions(&mut rng, &c);
        let angles = random_angles(&mut rng, k, 5.0, 175.0, 1.0);
        let w = random_unit_weights(&mut rng, n);
        let geometry = ArrayGeometry::new(c, positions.clone()).map_err(|e| e.to_string())?;
        let weights = Weights::new(w.clone()).map_err(|e| e.to_string())?;
        let doas = DoaSet::new(angles.clone()).unwrap();
        let analytic = position_gradient(&geometry, &weights, &doas).map_err(|e| e.to_string())?;

        let h = GRADIENT_STEP_WAVELENGTHS * c.wavelength;
        let numeric: Vec<f64> = (0..n)
            .map(|i| {
                let mut plus = positions.clone();
                let mut minus = positions.clone();
                plus[i] += h;
                minus[i] -= h;
                (oracle_gain(&plus, c.wavelength, &w, &angles) - oracle_gain(&minus, c.wavelength, &w, &angles))
                    / (2.0 * h)
            })
            .collect();
        let scale = numeric.iter().map(|v| v.abs()).fold(1e-8, f64::max);
        let gap = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        worst = worst.max(gap);
        ensure(gap <= GRADIENT_REL_TOL, || {
            format!("instance {instance}: analytic {analytic:?} vs numeric {numeric:?}")
        })?;
    }
    Ok(format!(
        "50 instances, worst max|g - fd| / max|fd| = {worst:.2e} (tol {GRADIENT_REL_TOL:e}, h = {GRADIENT_STEP_WAVELENGTHS:e} wavelengths)"
    ))
}

fn movable_dominance() -> Outcome {
    let constraints = ArrayConstraints::default();
    let mut strictly_better = 0;
    let mut min_margin = f64::INFINITY;
    for scenario in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + scenario);
        let doas = DoaSet::new(random_angles(&mut rng, 3, 20.0, 160.0, 10.0)).unwrap();
        let config = OptimizerConfig {
            seed: scenario,
            ..OptimizerConfig::default()
        };
        let movable = optimize_movable(&doas, &config, &constraints).map_err(|e| e.to_string())?;
        let fixed = fixed_baseline(&doas, &constraints).map_err(|e| e.to_string())?;
        let margin = movable.gain_db - fixed.gain_db;
        min_margin = min_margin.min(margin);
        ensure(margin >= -DOMINANCE_TOL_DB, || {
            format!("scenario {scenario} {:?}: movable {} < fixed {}", doas.angles(), movable.gain_db, fixed.gain_db)
        })?;
        if margin >= DOMINANCE_MARGIN_DB {
            strictly_better += 1;
        }
    }
    let fraction = strictly_better as f64 / 100.0;
    ensure(fraction >= DOMINANCE_FRACTION, || {
        format!("only {strictly_better}/100 scenarios improve by {DOMINANCE_MARGIN_DB} dB")
    })?;
    Ok(format!(
        "100/100 dominate (tol {DOMINANCE_TOL_DB:e}), {strictly_better}/100 by >= {DOMINANCE_MARGIN_DB} dB (need {:.0}%), min margin {min_margin:.3} dB",
        DOMINANCE_FRACTION * 100.0
    ))
}

fn trigger_vector() -> Outcome {
    let fired = monitoring_check(3.9847, 7.8169, 11.105, 3.0);
    ensure(fired.trigger && fired.reason == Some(TriggerReason::BelowBaseline), || {
        format!("3.9847 dB vs baseline 7.8169: got {fired:?}")
    })?;
    let quiet = monitoring_check(11.105, 7.8169, 11.105, 3.0);
    ensure(!quiet.trigger && quiet.reason.is_none(), || {
        format!("11.105 dB vs baseline 7.8169: got {quiet:?}")
    })?;
    Ok("(3.9847, 7.8169, 11.105, 3.0) -> below_baseline; (11.105, 7.8169, 11.105, 3.0) -> none".into())
}

/// Three UAVs hold position for ten steps, then all swing by +40 degrees.
fn swing_scenario() -> ScenarioConfig {
    let start = [40.0, 75.0, 105.0];
    let waypoints = (0..20)
        .map(|t| {
            let offset = if t >= 10 { 40.0 } else { 0.0 };
            DoaSet::new(start.iter().map(|a| a + offset).collect()).unwrap()
        })
        .collect();
    ScenarioConfig {
        seed: 7,
        trajectory: TrajectorySettings {
            num_steps: 20,
            initial_angles: DoaSet::new(start.to_vec()).unwrap(),
            drift: Drift::Scripted { waypoints },
            angle_bounds: (5.0, 175.0),
        },
        ..ScenarioConfig::default()
    }
}

fn recovery_episode() -> Outcome {
    let outcome = run_episode(&swing_scenario()).map_err(|e| e.to_string())?;
    let degradation: Vec<_> = outcome
        .events
        .iter()
        .filter(|e| e.reason != TriggerReason::HardwareChange)
        .collect();
    ensure(degradation.len() == 1, || {
        format!("expected one degradation event, got {}", degradation.len())
    })?;
    let event = degradation[0];
    ensure(event.trigger_step == 10, || format!("event fired at step {}", event.trigger_step))?;
    ensure(event.outcome == EventOutcome::Completed, || format!("event outcome {:?}", event.outcome))?;
    let expected = [
        AgentRole::DataCollection,
        AgentRole::ModelSelection,
        AgentRole::Training,
        AgentRole::Evaluation,
        AgentRole::Deployment,
    ];
    ensure(event.agent_sequence == expected && is_valid_sequence(&event.agent_sequence, true), || {
        format!("agent sequence {:?}", event.agent_sequence)
    })?;
    for m in outcome.metrics.iter().filter(|m| m.step >= event.trigger_step) {
        ensure(m.movable_gain_db >= m.fixed_gain_db - RECOVERY_TOL_DB, || {
            format!("step {}: movable {} < fixed {}", m.step, m.movable_gain_db, m.fixed_gain_db)
        })?;
    }
    let before = &outcome.metrics[9];
    let after = &outcome.metrics[10];
    Ok(format!(
        "one {} event at step 10 (pre {:.3} dB -> post {:.3} dB, baseline {:.3} dB); step 9 {:.3} dB, steps 10-19 >= fixed (tol {RECOVERY_TOL_DB:e}), e.g. {:.3} vs {:.3} dB",
        event.reason.as_str(),
        event.pre_gain_db,
        event.post_gain_db,
        event.baseline_gain_db,
        before.movable_gain_db,
        after.movable_gain_db,
        after.fixed_gain_db
    ))
}

fn doa_quality() -> Outcome {
    let geometry = ArrayGeometry::uniform(ArrayConstraints::default()).unwrap();
    let config = EstimatorConfig::default();
    let mut sq = 0.0;
    let mut count = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + trial);
        let first = 20.0 + 120.0 * rng.random::<f64>();
        let second = first + 10.0 + 20.0 * rng.random::<f64>();
        let truth = DoaSet::new(vec![first, second]).unwrap();
        let batch = synthesize_csi(&geometry, &truth, 10.0, 200, 6000 + trial).map_err(|e| e.to_string())?;
        let est = estimate_from_batch(&batch, &geometry, 2, &config).map_err(|e| e.to_string())?;
        for (e, t) in est.angles.angles().iter().zip(truth.angles()) {
            sq += (e - t).powi(2);
            count += 1;
        }
    }
    let rmse = (sq / count as f64).sqrt();
    ensure(rmse <= DOA_RMSE_LIMIT_DEG, || format!("RMSE {rmse:.3} deg over 100 trials"))?;

    let mut worst_noiseless: f64 = 0.0;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + trial);
        let first = 20.0 + 120.0 * rng.random::<f64>();
        let second = first + 10.0 + 20.0 * rng.random::<f64>();
        let truth = [first, second];
        let dense = oracle_gain_matrix(geometry.positions(), geometry.wavelength(), &truth);
        let covariance = HermitianMatrix::new(dense.nrows(), dense.transpose().iter().cloned().collect())
            .map_err(|e| e.to_string())?;
        let est = estimate_doas(&covariance, &geometry, 2, &config).map_err(|e| e.to_string())?;
        for (e, t) in est.angles.angles().iter().zip(&truth) {
            worst_noiseless = worst_noiseless.max((e - t).abs());
        }
    }
    ensure(worst_noiseless <= DOA_NOISELESS_LIMIT_DEG, || {
        format!("noiseless error {worst_noiseless:.3} deg")
    })?;
    Ok(format!(
        "RMSE {rmse:.3} deg over 100 trials at 10 dB, 200 snapshots (limit {DOA_RMSE_LIMIT_DEG}); worst noiseless error {worst_noiseless:.3} deg (limit {DOA_NOISELESS_LIMIT_DEG})"
    ))
}

fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> Result<(), String> {
    let output = Command::new(env!("CARGO_BIN_EXE_antevo"))
        .args(args)
        .envs(envs.iter().copied())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(output.status.success(), || {
        format!("antevo {args:?} failed: {}", String::from_utf8_lossy(&output.stderr))
    })
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("scenario.toml");
    fs::write(&config, ScenarioConfig::default().to_toml_string()).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in 0..2 {
        let metrics = dir.path().join(format!("metrics-{run}.csv"));
        let events = dir.path().join(format!("events-{run}.toml"));
        run_cli(
            &[
                "run",
                "--quiet",
                "--config",
                config.to_str().unwrap(),
                "--seed",
                "42",
                "--metrics-out",
                metrics.to_str().unwrap(),
                "--events-out",
                events.to_str().unwrap(),
            ],
            &[],
        )?;
        files.push((fs::read(&metrics).unwrap(), fs::read(&events).unwrap()));
    }
    ensure(files[0].0 == files[1].0, || "metrics files differ".into())?;
    ensure(files[0].1 == files[1].1, || "event logs differ".into())?;
    let rows = String::from_utf8_lossy(&files[0].0).lines().count() - 1;
    Ok(format!(
        "two seeded runs: metrics ({} bytes, {rows} rows) and events ({} bytes) byte-identical",
        files[0].0.len(),
        files[0].1.len()
    ))
}

fn llm_outcome(scenario: &ScenarioConfig, endpoint: &MockEndpoint) -> Result<EpisodeOutcome, String> {
    let mut settings = EndpointSettings::new(endpoint.base_url.clone(), "mock-model");
    settings.max_retries = 0;
    settings.timeout_secs = 5.0;
    let config = EndpointConfig::new(settings, ApiKey::new("sk-acceptance")).map_err(|e| e.to_string())?;
    let client = ChatCompletionsClient::new(config).map_err(|e| e.to_string())?;
    run_episode_with(scenario, &mut LlmRouter::new(client)).map_err(|e| e.to_string())
}

fn same_outcome(a: &EpisodeOutcome, b: &EpisodeOutcome) -> bool {
    a.metrics == b.metrics
        && a.events == b.events
        && metrics_to_csv(&a.metrics) == metrics_to_csv(&b.metrics)
        && events_to_toml(&a.events) == events_to_toml(&b.events)
}

fn offline_completeness() -> Outcome {
    let mut scenario = swing_scenario();
    scenario.seed = 11;
    let offline = run_episode(&scenario).map_err(|e| e.to_string())?;
    ensure(offline.routing.llm == 0 && offline.routing.fallback == 0, || {
        format!("offline run consulted a model: {:?}", offline.routing)
    })?;

    let legal = MockEndpoint::start(rule_following_reply);
    let with_legal = llm_outcome(&scenario, &legal)?;
    ensure(same_outcome(&offline, &with_legal), || "legal-answer run diverged".into())?;
    ensure(with_legal.routing.llm > 0, || format!("no answer accepted: {:?}", with_legal.routing))?;

    let garbage = MockEndpoint::start(|_| (200, "As an assistant I would rather not route agents today".into()));
    let with_garbage = llm_outcome(&scenario, &garbage)?;
    ensure(same_outcome(&offline, &with_garbage), || "garbage-answer run diverged".into())?;
    ensure(with_garbage.routing.llm == 0 && with_garbage.routing.fallback > 0, || {
        format!("fallback not engaged: {:?}", with_garbage.routing)
    })?;

    // The same check through the binary, with the key in the environment.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cli_scenario = scenario.clone();
    cli_scenario.llm = Some(EndpointSettings::new(legal.base_url.clone(), "mock-model"));
    let config = dir.path().join("scenario.toml");
    fs::write(&config, cli_scenario.to_toml_string()).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (label, llm) in [("offline", false), ("llm", true)] {
        let metrics = dir.path().join(format!("{label}.csv"));
        let events = dir.path().join(format!("{label}.toml"));
        let mut args = vec![
            "run",
            "--quiet",
            "--config",
            config.to_str().unwrap(),
            "--metrics-out",
            metrics.to_str().unwrap(),
            "--events-out",
            events.to_str().unwrap(),
        ];
        if llm {
            args.push("--llm");
        }
        run_cli(&args, &[("ANTEVO_LLM_API_KEY", "sk-acceptance")])?;
        outputs.push((fs::read(metrics).unwrap(), fs::read(events).unwrap()));
    }
    ensure(outputs[0] == outputs[1], || "CLI --llm output differs from offline output".into())?;

    Ok(format!(
        "offline {} transitions; legal mock {} accepted / {} fallback, identical; garbage mock {} fallback, identical; CLI --llm files identical",
        offline.routing.deterministic,
        with_legal.routing.llm,
        with_legal.routing.fallback,
        with_garbage.routing.fallback
    ))
}
