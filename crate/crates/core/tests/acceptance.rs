//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DMatrix;
use ncnum::baselines::{brute_force_nonconvex, centralized_solve, relaxation_gap, CentralConfig};
use ncnum::dpda::{
    auto_step_sizes, q_certificate, run, ExecutionOrder, RunOptions, TraceRow, DEFAULT_MAX_DIM,
};
use ncnum::geometry::{
    project_as, project_hypograph, project_psd, source_violation, DykstraConfig, Matrix,
    SourcePoint,
};
use ncnum::harness::{builtin_fig2_scenario, fit_rate, generate, SyntheticSpec, TraceFile};
use ncnum::moments::{check_moment_feasible, dirac_moments, Feasibility, UtilitySpec};
use ncnum::net::Network;
use ncnum::problem::Instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const FEASIBILITY_TOL: f64 = 1e-9;
const PSD_MATCH_TOL: f64 = 1e-10;
const HYPOGRAPH_GRID: usize = 1_000_000;
const HYPOGRAPH_TOL: f64 = 1e-4;
const AS_FEASIBLE_TOL: f64 = 1e-8;
const UTILITY_REL_TOL: f64 = 0.02;
const RESIDUAL_TOL: f64 = 1e-3;
const RATE_RANGE: (f64, f64) = (-1.3, -0.7);
const BURN_IN: f64 = 0.1;
const WINDOW_TOL: f64 = 1e-6;
const CERT_TOL: f64 = 1e-8;
const INDEFINITE_SHARE: f64 = 0.9;
const UPPER_BOUND_TOL: f64 = 1e-6;
const CONCAVE_GAP_TOL: f64 = 1e-3;
const ORDER_TOL: f64 = 1e-15;

/// Rounds for the convergence run on the toy network.
const TOY_ROUNDS: usize = 15_000;
const TOY_RECORD_EVERY: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Dirac moment vectors are feasible exactly when `y² ≤ β`.
fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut disagreements = 0;
    for _ in 0..1000 {
        let order = [2, 4, 6][rng.gen_range(0..3)];
        let y: f64 = rng.gen_range(-3.0..3.0);
        let beta: f64 = rng.gen_range(0.01..9.0);
        let m = dirac_moments(y, order);
        let got = matches!(
            check_moment_feasible(&m, beta, FEASIBILITY_TOL).unwrap(),
            Feasibility::Feasible
        );
        if got != (y * y <= beta) {
            disagreements += 1;
        }
    }
    outcome(
        disagreements == 0,
        format!("{disagreements}/1000 disagreements"),
    )
}

fn to_nalgebra(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

fn clamp_reference(m: &Matrix) -> DMatrix<f64> {
    let e = to_nalgebra(m).symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0)));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

fn hypograph_grid(mj: f64, r: f64, j: usize, order: usize, zeta: f64) -> f64 {
    let e = j as f64 / order as f64;
    (0..=HYPOGRAPH_GRID)
        .map(|i| {
            let b = zeta * i as f64 / HYPOGRAPH_GRID as f64;
            let a = mj.min(b.powf(e));
            ((a - mj).powi(2) + (b - r).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Random point of `A_s`: Dirac mixture inside `[-r^{1/ℓ}, r^{1/ℓ}]` and a
/// random split of `r` under the caps.
fn sample_feasible(rng: &mut ChaCha8Rng, u: &UtilitySpec, caps: &[f64]) -> Option<SourcePoint> {
    let hi = u.zeta.min(caps.iter().sum());
    let r = rng.gen_range(u.xi..=hi);
    let w: Vec<f64> = caps.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
    let tw: f64 = w.iter().sum();
    let x: Vec<f64> = w.iter().map(|v| v / tw * r).collect();
    if x.iter().zip(caps).any(|(a, c)| a > c) {
        return None;
    }
    let top = r.powf(1.0 / u.order as f64);
    let atoms = rng.gen_range(1..4);
    let weights: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.05..1.0)).collect();
    let t: f64 = weights.iter().sum();
    let mut m = vec![0.0; u.order + 1];
    for wk in weights {
        let y = rng.gen_range(-top..=top);
        for (j, v) in dirac_moments(y, u.order).0.into_iter().enumerate() {
            m[j] += wk / t * v;
        }
    }
    m[0] = 1.0;
    Some(SourcePoint::new(x, m, r))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let mut psd_err: f64 = 0.0;
    for _ in 0..100 {
        let mut a = Matrix::zeros(4, 4);
        for r in 0..4 {
            for c in r..4 {
                let v = rng.gen_range(-5.0..5.0);
                a[(r, c)] = v;
                a[(c, r)] = v;
            }
        }
        let ours = to_nalgebra(&project_psd(&a).unwrap());
        psd_err = psd_err.max((ours - clamp_reference(&a)).norm());
    }

    let mut hyp_err: f64 = 0.0;
    for _ in 0..100 {
        let order = [2, 4, 6][rng.gen_range(0..3)];
        let j = rng.gen_range(1..=order);
        let zeta = rng.gen_range(1.0..10.0);
        let mj = rng.gen_range(-2.0..4.0);
        let r = rng.gen_range(-2.0..12.0);
        let (a, b) = project_hypograph(mj, r, j, order, zeta).unwrap();
        let ours = ((a - mj).powi(2) + (b - r).powi(2)).sqrt();
        hyp_err = hyp_err.max((ours - hypograph_grid(mj, r, j, order, zeta)).abs());
    }

    let mut worst_violation: f64 = 0.0;
    let mut beaten = 0;
    for _ in 0..20 {
        let order = [2, 4, 6][rng.gen_range(0..3)];
        let zeta: f64 = rng.gen_range(2.0..10.0);
        let links = rng.gen_range(1..4);
        let caps: Vec<f64> = (0..links).map(|_| rng.gen_range(1.0..8.0)).collect();
        let total: f64 = caps.iter().sum();
        let xi = rng.gen_range(0.0..(zeta / 2.0).min(total));
        let u = UtilitySpec::new(vec![0.0; order + 1], xi, zeta, None).unwrap();
        let p = SourcePoint::new(
            (0..links).map(|_| rng.gen_range(-2.0..8.0)).collect(),
            (0..=order).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            rng.gen_range(-2.0..12.0),
        );
        let cfg = DykstraConfig {
            tol: 1e-12,
            max_cycles: 20_000,
            ..DykstraConfig::default()
        };
        let proj = project_as(&p, &u, &caps, cfg).unwrap().result;
        worst_violation = worst_violation.max(source_violation(&proj, &u, &caps).unwrap());
        let d = proj.distance(&p);
        let mut sampled = 0;
        while sampled < 10_000 {
            if let Some(q) = sample_feasible(&mut rng, &u, &caps) {
                sampled += 1;
                if q.distance(&p) < d - 1e-9 {
                    beaten += 1;
                    break;
                }
            }
        }
    }

    outcome(
        psd_err <= PSD_MATCH_TOL && hyp_err <= HYPOGRAPH_TOL && worst_violation <= AS_FEASIBLE_TOL && beaten == 0,
        format!(
            "psd max Frobenius error {psd_err:.2e}, hypograph max error {hyp_err:.2e}, A_s max violation {worst_violation:.2e}, beaten on {beaten}/20"
        ),
    )
}

/// Recorded rows after burn-in with some `r̄_s` outside `[ξ_s, ζ_s]`.
fn window_violations(inst: &Instance, rows: &[TraceRow]) -> usize {
    let rows: Vec<&TraceRow> = rows.iter().filter(|r| r.k > 0).collect();
    let skip = (rows.len() as f64 * BURN_IN).ceil() as usize;
    rows.iter()
        .skip(skip)
        .filter(|r| {
            r.rbar
                .iter()
                .zip(&inst.utilities)
                .any(|(&v, u)| v < u.xi - WINDOW_TOL || v > u.zeta + WINDOW_TOL)
        })
        .count()
}

struct Fig2Run {
    nonlocal: usize,
    reads: usize,
    window_violations: usize,
}

fn fig2_run() -> Fig2Run {
    let cfg = builtin_fig2_scenario();
    let inst = cfg.instance().unwrap();
    let ss = cfg.step_sizes(&inst);
    let opts = RunOptions {
        record_messages: true,
        record_every: 10,
        ..RunOptions::default()
    };
    let (trace, log) = run(&inst, &ss, None, 2000, &opts).unwrap();
    Fig2Run {
        nonlocal: log.nonlocal_reads(&inst).len(),
        reads: log.reads.len(),
        window_violations: window_violations(&inst, &trace.rows),
    }
}

fn criterion_3(r: &Fig2Run, took: Duration) -> Outcome {
    outcome(
        r.nonlocal == 0 && took < Duration::from_secs(300),
        format!("{} non-neighbor reads out of {}", r.nonlocal, r.reads),
    )
}

struct ToyRun {
    utility: f64,
    reference: f64,
    conservation: f64,
    capacity: f64,
    slope: Result<f64, String>,
    window_violations: usize,
}

fn toy_run() -> ToyRun {
    let inst = toy_instance();
    let reference = centralized_solve(&inst, &CentralConfig::default()).unwrap();
    let ss = auto_step_sizes(&inst, 0.1, 0.9);
    let opts = RunOptions {
        record_every: TOY_RECORD_EVERY,
        ..RunOptions::default()
    };
    let (trace, _) = run(&inst, &ss, None, TOY_ROUNDS, &opts).unwrap();
    let last = trace.rows.last().unwrap();
    let file = TraceFile::from_rows(&inst, &trace.rows);
    ToyRun {
        utility: last.utility,
        reference: reference.objective,
        conservation: last.conservation,
        capacity: last.capacity,
        slope: fit_rate(&file.ks(), &file.residuals(), BURN_IN).map_err(|e| e.to_string()),
        window_violations: window_violations(&inst, &trace.rows),
    }
}

fn criterion_4(t: &ToyRun, took: Duration) -> Outcome {
    let rel = (t.utility - t.reference).abs() / t.reference.abs();
    outcome(
        rel <= UTILITY_REL_TOL
            && t.conservation <= RESIDUAL_TOL
            && t.capacity <= RESIDUAL_TOL
            && took < Duration::from_secs(600),
        format!(
            "K={TOY_ROUNDS}: utility {:.5} vs centralized {:.5} ({:.3}%), conservation {:.2e}, capacity {:.2e}",
            t.utility,
            t.reference,
            rel * 100.0,
            t.conservation,
            t.capacity
        ),
    )
}

fn criterion_5(t: &ToyRun) -> Outcome {
    match &t.slope {
        Ok(s) => outcome(
            (RATE_RANGE.0..=RATE_RANGE.1).contains(s),
            format!("fitted slope {s:.3}"),
        ),
        Err(e) => outcome(false, format!("no fit: {e}")),
    }
}

/// A run where the lower rate bound is active.
fn windowed_run() -> usize {
    let u = utility(&[0.0, 1.0, -0.4], 1.0, 3.0);
    let inst = instance(&shared_link_network(4.0), &u);
    let ss = auto_step_sizes(&inst, 0.1, 0.9);
    let (trace, _) = run(&inst, &ss, None, 2000, &RunOptions::default()).unwrap();
    window_violations(&inst, &trace.rows)
}

fn criterion_6(fig2: &Fig2Run, toy: &ToyRun, windowed: usize) -> Outcome {
    let total = fig2.window_violations + toy.window_violations + windowed;
    outcome(
        total == 0,
        format!(
            "rows outside [ξ, ζ]: fig2 {}, toy {}, ξ>0 run {windowed}",
            fig2.window_violations, toy.window_violations
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = f64::INFINITY;
    let mut indefinite = 0;
    for trial in 0..50 {
        let spec = SyntheticSpec {
            extra_links: rng.gen_range(0..3),
            ..SyntheticSpec::new(rng.gen_range(1..4), rng.gen_range(1..6))
        };
        let net = Network::build(generate(&spec, trial).unwrap()).unwrap();
        let n = net.sources().len();
        let order = [2, 4][rng.gen_range(0..2)];
        let coeffs: Vec<f64> = (0..=order)
            .map(|j| {
                if j == 0 {
                    0.0
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let inst = Instance::new(net, vec![utility(&coeffs, 0.0, 10.0); n]).unwrap();
        let gamma = rng.gen_range(0.05..1.0);
        let ss = auto_step_sizes(&inst, gamma, 0.9);
        let cert = q_certificate(&inst, &ss, DEFAULT_MAX_DIM).unwrap();
        worst = worst.min(cert.min_eigenvalue);

        let boundary = auto_step_sizes(&inst, gamma, 1.0);
        let mut inflated = ss.clone();
        let total = ss.tau_source.len() + ss.tau.len();
        let i = rng.gen_range(0..total);
        if i < ss.tau_source.len() {
            inflated.tau_source[i] = 100.0 * boundary.tau_source[i];
        } else {
            let k = i - ss.tau_source.len();
            inflated.tau[k] = 100.0 * boundary.tau[k];
        }
        if !q_certificate(&inst, &inflated, DEFAULT_MAX_DIM)
            .unwrap()
            .is_psd(CERT_TOL)
        {
            indefinite += 1;
        }
    }
    let share = indefinite as f64 / 50.0;
    outcome(
        worst >= -CERT_TOL && share >= INDEFINITE_SHARE,
        format!(
            "min eigenvalue over 50 networks {worst:.3e}, inflated τ indefinite in {indefinite}/50"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bound_failures = 0;
    let mut worst_concave: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    for i in 0..20 {
        let concave = i % 2 == 0;
        let shared = rng.gen_bool(0.5);
        let u = if concave {
            utility(
                &[0.0, rng.gen_range(0.5..2.0), -rng.gen_range(0.0..0.3)],
                0.0,
                10.0,
            )
        } else {
            let order = [2, 4][rng.gen_range(0..2)];
            let c: Vec<f64> = (0..=order)
                .map(|j| {
                    if j == 0 {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            utility(&c, 0.0, 10.0)
        };
        // capacities on a 0.1 grid so the oracle grid hits them
        let cap = |rng: &mut ChaCha8Rng| (rng.gen_range(10..80) as f64) / 10.0;
        let (text, h) = if shared {
            (shared_link_network(cap(&mut rng)), 2e-3)
        } else {
            (line_network(cap(&mut rng), cap(&mut rng)), 1e-4)
        };
        let inst = instance(&text, &u);
        let reference = match centralized_solve(&inst, &CentralConfig::default()) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("instance {i}: {e}")),
        };
        let oracle = brute_force_nonconvex(&inst, h).unwrap();
        let report = relaxation_gap(&reference, &oracle, UPPER_BOUND_TOL);
        worst_margin = worst_margin.min(report.gap);
        if !report.upper_bound_holds {
            bound_failures += 1;
        }
        if concave {
            worst_concave = worst_concave.max(report.gap.abs() / oracle.objective.abs());
        }
    }
    outcome(
        bound_failures == 0 && worst_concave <= CONCAVE_GAP_TOL,
        format!(
            "upper bound violated on {bound_failures}/20 (smallest gap {worst_margin:.2e}), worst concave relative gap {worst_concave:.2e}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let inst = toy_instance();
    let ss = auto_step_sizes(&inst, 0.1, 0.9);
    let go = |order| {
        let opts = RunOptions {
            order,
            ..RunOptions::default()
        };
        run(&inst, &ss, None, 200, &opts).unwrap().0
    };
    let base = go(ExecutionOrder::Sequential);
    let csv = |rows: &[TraceRow]| TraceFile::from_rows(&inst, rows).to_csv_string();
    let identical = csv(&base.rows) == csv(&go(ExecutionOrder::Sequential).rows);

    let mut worst: f64 = 0.0;
    for order in [
        ExecutionOrder::Parallel,
        ExecutionOrder::Shuffled(1),
        ExecutionOrder::Shuffled(2),
        ExecutionOrder::Shuffled(3),
    ] {
        for (a, b) in base.rows.iter().zip(&go(order).rows) {
            let fields = [
                (a.utility, b.utility),
                (a.conservation, b.conservation),
                (a.capacity, b.capacity),
            ];
            for (x, y) in fields
                .into_iter()
                .chain(a.avg.iter().copied().zip(b.avg.iter().copied()))
                .chain(a.rbar.iter().copied().zip(b.rbar.iter().copied()))
            {
                worst = worst.max((x - y).abs());
            }
        }
    }
    outcome(
        identical && worst <= ORDER_TOL,
        format!("repeat byte-identical: {identical}, max difference across orders {worst:.1e}"),
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |n: usize, o: Outcome, took: Duration| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {n}: {} [{:.1}s]",
            o.detail,
            took.as_secs_f64()
        );
        all &= o.pass;
    };

    let (o, t) = timed(criterion_1);
    report(1, o, t);
    let (o, t) = timed(criterion_2);
    report(2, o, t);
    let (fig2, t3) = timed(fig2_run);
    report(3, criterion_3(&fig2, t3), t3);
    let (toy, t4) = timed(toy_run);
    report(4, criterion_4(&toy, t4), t4);
    report(5, criterion_5(&toy), Duration::ZERO);
    let (windowed, t6) = timed(windowed_run);
    report(6, criterion_6(&fig2, &toy, windowed), t6);
    let (o, t) = timed(criterion_7);
    report(7, o, t);
    let (o, t) = timed(criterion_8);
    report(8, o, t);
    let (o, t) = timed(criterion_9);
    report(9, o, t);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
