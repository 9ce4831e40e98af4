//! Acceptance suite. Every criterion runs at its stated scale and prints one
//! PASS/FAIL line. A FAIL makes the process exit nonzero only when
//! `ACCEPTANCE_STRICT=1` is set, so `cargo test` still runs later targets.
//!
//! `cargo test --release --test acceptance -- 4 7` runs only criteria 4 and 7.
//! Criteria 3 to 7 train full-length runs and take most of an hour on one
//! core.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use brainpinn::bimt::{try_swaps, LocalityCost};
use brainpinn::cli::median;
use brainpinn::modular::{build_modular, extract_template, train_modular, ModuleTemplate};
use brainpinn::network::GeometricNetwork;
use brainpinn::problems::CollocationCounts;
use brainpinn::trainer::{
    collocation_for, fused_loss_and_gradient, tape_loss_and_gradient, train, Trainer,
};
use brainpinn::{ActivationKind, Architecture, ProblemSpec, RunRecord, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn log(msg: &str) {
    eprintln!("  .. {msg}");
}

fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(got.abs()).max(floor)
}

/// Fourth-order central difference.
fn d1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Fourth-order central second difference.
fn d2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h)
}

fn random_network(rng: &mut ChaCha8Rng) -> GeometricNetwork {
    let depth = rng.gen_range(1..=2);
    let mut sizes = vec![1];
    for _ in 0..depth {
        sizes.push(rng.gen_range(1..=8));
    }
    sizes.push(1);
    let activation = if rng.gen_bool(0.8) {
        ActivationKind::SinLU
    } else {
        ActivationKind::Tanh
    };
    let arch = Architecture::new(sizes, activation, rng.gen_bool(0.3), 2.0).unwrap();
    let mut net = GeometricNetwork::zeros(arch);
    for i in 0..net.param_count() {
        // Keep clear of the L1 kink so finite differences stay smooth.
        let mag = rng.gen_range(0.05..1.0);
        let v = if rng.gen_bool(0.5) { mag } else { -mag };
        net.set_param(i, v);
    }
    if net.param_count() > 3 && rng.gen_bool(0.3) {
        net.mask_off(rng.gen_range(0..net.param_count()));
    }
    net
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_grad: f64 = 0.0;
    let mut worst_fused: f64 = 0.0;
    let mut worst_jet: f64 = 0.0;
    let mut checked = 0usize;
    for n in 0..200 {
        let net = random_network(&mut rng);
        let spec = if n % 3 == 2 {
            ProblemSpec::logistic(1.0, 0.5)
        } else {
            ProblemSpec::four_harmonics()
        };
        let mut config = TrainConfig::with_epochs(1).seed(n);
        config.collocation = CollocationCounts {
            interior: 12,
            boundary: 2,
            test: 10,
        };
        let colloc = collocation_for(&spec, &config).unwrap();
        let nets = vec![net.clone()];
        let costs = vec![LocalityCost::new(&net)];
        let (lambda, bias_on) = (0.01, true);
        let (_, tape_g) = tape_loss_and_gradient(&nets, &costs, &spec, &colloc, lambda, bias_on);
        let (_, fused_g) = fused_loss_and_gradient(&nets, &costs, &spec, &colloc, lambda, bias_on);
        let loss_at = |i: usize, v: f64| {
            let mut p = net.clone();
            p.set_param(i, v);
            let (b, _) = fused_loss_and_gradient(
                std::slice::from_ref(&p),
                &costs,
                &spec,
                &colloc,
                lambda,
                bias_on,
            );
            b.total
        };
        let fd: Vec<f64> = (0..net.param_count())
            .map(|i| {
                if net.mask()[i] {
                    d1(|v| loss_at(i, v), net.params()[i], 1e-4)
                } else {
                    0.0
                }
            })
            .collect();
        // Components far below the gradient's scale are compared against
        // that scale instead of their own size.
        let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let floor = 1e-4 * scale;
        for i in 0..fd.len() {
            if !net.mask()[i] {
                assert_eq!(tape_g[0][i], 0.0);
                continue;
            }
            worst_grad = worst_grad.max(rel_err(tape_g[0][i], fd[i], floor));
            worst_fused = worst_fused.max(rel_err(fused_g[0][i], tape_g[0][i], floor));
            checked += 1;
        }
        for k in 0..5 {
            let t = 0.3 + 1.2 * k as f64 + 0.01 * n as f64;
            let jet = net.forward_jet_f64(t);
            let f = |t: f64| net.forward_value(t);
            worst_jet = worst_jet.max(rel_err(jet[1], d1(f, t, 1e-3), 1e-4));
            worst_jet = worst_jet.max(rel_err(jet[2], d2(f, t, 1e-3), 1e-4));
        }
    }
    outcome(
        worst_grad < 1e-6 && worst_fused < 1e-6 && worst_jet < 1e-5,
        format!(
            "{checked} parameters over 200 networks: tape vs finite differences max rel {worst_grad:.2e} (< 1e-6), \
             fused vs tape max rel {worst_fused:.2e}, jet du/ddu max rel {worst_jet:.2e} (< 1e-5)"
        ),
    )
}

fn criterion_2() -> Outcome {
    let spec = ProblemSpec::four_harmonics();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut closed_form: f64 = 0.0;
    for _ in 0..200 {
        let t = rng.gen_range(0.05..2.0 * PI - 0.05);
        let ddx = d2(|t| spec.analytic_solution(t), t, 1e-3);
        let (r, _) = spec.residual_f64([spec.analytic_solution(t), 0.0, ddx], t);
        worst = worst.max(r.abs());
        let want: f64 = -(1..=4).map(|k| (k as f64 * t).sin()).sum::<f64>();
        closed_form = closed_form.max((spec.analytic_solution(t) - want).abs());
    }
    let bc0 = spec.analytic_solution(0.0);
    let bc1 = spec.analytic_solution(2.0 * PI);
    let pass = worst < 1e-6 && closed_form < 1e-12 && bc0 == 0.0 && bc1 == 0.0;
    outcome(
        pass,
        format!(
            "max |residual| of the closed form {worst:.2e} (< 1e-6) at 200 points; x(0) = {bc0}, x(2π) = {bc1}"
        ),
    )
}

fn timed_train(
    arch: Architecture,
    spec: &ProblemSpec,
    config: &TrainConfig,
    label: &str,
) -> RunRecord {
    let start = Instant::now();
    let rec = train(arch, spec, config).expect("training run");
    let f = &rec.final_report;
    log(&format!(
        "{label}: euclidean {:.4}, mse {:.3e}, active {:?}, nonzero {}/{} ({:.0} s)",
        f.error.euclidean,
        f.error.mse,
        f.prune
            .iter()
            .map(|p| &p.active_units_per_layer)
            .collect::<Vec<_>>(),
        f.nonzero_weights,
        f.total_weights,
        start.elapsed().as_secs_f64()
    ));
    rec
}

fn dense_21(depth: usize) -> Architecture {
    Architecture::mlp(depth, 21, ActivationKind::SinLU, 2.0).unwrap()
}

/// Median final euclidean error of the dense baseline.
fn criterion_3() -> (Outcome, f64) {
    let spec = ProblemSpec::single_harmonic(1);
    let errors: Vec<f64> = SEEDS
        .iter()
        .map(|&s| {
            let config = TrainConfig::with_epochs(20_000).seed(s).plain();
            let rec = timed_train(dense_21(1), &spec, &config, &format!("dense k=1 seed {s}"));
            assert!(rec.metrics.iter().all(|r| r.reg_loss == 0.0));
            rec.final_report.error.euclidean
        })
        .collect();
    let m = median(&errors);
    (
        outcome(
            m < 0.1,
            format!("dense 1x21, k=1, 20k epochs: median euclidean {m:.4} (< 0.1), per seed {errors:.4?}"),
        ),
        m,
    )
}

fn bimt_runs(spec: &ProblemSpec, label: &str) -> Vec<RunRecord> {
    SEEDS
        .iter()
        .map(|&s| {
            let config = TrainConfig::with_epochs(100_000).seed(s);
            timed_train(
                dense_21(1),
                spec,
                &config,
                &format!("BIMT {label} seed {s}"),
            )
        })
        .collect()
}

fn median_active(runs: &[RunRecord]) -> f64 {
    let v: Vec<f64> = runs
        .iter()
        .map(|r| r.final_report.active_hidden_units as f64)
        .collect();
    median(&v)
}

fn criterion_4(k1: &[RunRecord], baseline: Option<f64>) -> Outcome {
    let active = median_active(k1);
    let frac = median(
        &k1.iter()
            .map(|r| r.final_report.nonzero_weight_fraction())
            .collect::<Vec<_>>(),
    );
    let err = median(
        &k1.iter()
            .map(|r| r.final_report.error.euclidean)
            .collect::<Vec<_>>(),
    );
    let (err_ok, err_text) = match baseline {
        Some(b) => (
            err <= 3.0 * b,
            format!("median euclidean {err:.4} vs 3 x baseline {:.4}", 3.0 * b),
        ),
        None => (
            false,
            format!("median euclidean {err:.4}, baseline not run"),
        ),
    };
    let pass = active <= 6.0 && frac < 0.3 && err_ok;
    outcome(
        pass,
        format!(
            "BIMT 1x21, k=1, 100k epochs: median active units {active} (<= 6), nonzero weight fraction {:.1}% (< 30%), {err_text}",
            100.0 * frac
        ),
    )
}

fn criterion_5(medians: &[f64]) -> Outcome {
    let monotone = medians.windows(2).all(|w| w[0] <= w[1]);
    let doubled = medians[3] >= 2.0 * medians[0];
    outcome(
        monotone && doubled,
        format!(
            "median active units for k=1..4: {medians:?}; non-decreasing {monotone}, k=4 >= 2 x k=1 {doubled}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let runs = bimt_runs(&ProblemSpec::logistic(1.0, 0.5), "logistic");
    let m = median_active(&runs);
    outcome(
        m <= 2.0,
        format!("BIMT 1x21 on the logistic problem: median active units {m} (<= 2)"),
    )
}

/// Modular 3x(1,3,1) against dense 1-9-1. The module comes from the
/// matching k=1 BIMT run when that run produced a 3-unit module.
fn criterion_7(k1: Option<&[RunRecord]>) -> Outcome {
    const EPOCHS: usize = 50_000;
    let spec = ProblemSpec::four_harmonics();
    let dense_template =
        ModuleTemplate::dense(vec![1, 3, 1], ActivationKind::SinLU, false).unwrap();
    let (mut mm, mut me, mut dm, mut de) = (vec![], vec![], vec![], vec![]);
    let mut sources = Vec::new();
    for (i, &seed) in SEEDS.iter().enumerate() {
        let derived = k1
            .and_then(|runs| extract_template(&runs[i].instances[0]).ok())
            .map(|(t, _)| t)
            .filter(|t| t.layer_sizes == [1, 3, 1]);
        sources.push(if derived.is_some() { "BIMT" } else { "dense" });
        let template = derived.unwrap_or_else(|| dense_template.clone());
        let config = TrainConfig::with_epochs(EPOCHS).seed(seed).plain();
        let modular = build_modular(&template, 3, seed).unwrap();
        let start = Instant::now();
        let m = train_modular(modular, &spec, &config).expect("modular run");
        log(&format!(
            "modular 3x(1,3,1) seed {seed}: euclidean {:.4}, mse {:.3e} ({:.0} s)",
            m.final_report.error.euclidean,
            m.final_report.error.mse,
            start.elapsed().as_secs_f64()
        ));
        let arch = Architecture::mlp(1, 9, ActivationKind::SinLU, 2.0).unwrap();
        let d = timed_train(arch, &spec, &config, &format!("dense 1-9-1 seed {seed}"));
        mm.push(m.final_report.error.mse);
        me.push(m.final_report.error.euclidean);
        dm.push(d.final_report.error.mse);
        de.push(d.final_report.error.euclidean);
    }
    let (mm, me, dm, de) = (median(&mm), median(&me), median(&dm), median(&de));
    let within = |x: f64, target: f64| x <= 3.0 * target && x >= target / 3.0;
    let ratio_ok = mm <= 0.1 * dm;
    let mod_ok = within(me, 0.083);
    let dense_ok = within(de, 0.57);
    outcome(
        ratio_ok && mod_ok && dense_ok,
        format!(
            "50k epochs, modules from {sources:?}: median mse modular {mm:.3e} vs dense {dm:.3e} (ratio {:.3}, <= 0.1); \
             median euclidean modular {me:.4} (0.083 within 3x: {mod_ok}), dense {de:.4} (0.57 within 3x: {dense_ok})",
            mm / dm
        ),
    )
}

fn small_config(epochs: usize, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::with_epochs(epochs).seed(seed);
    c.collocation = CollocationCounts {
        interior: 60,
        boundary: 10,
        test: 40,
    };
    c.metrics_every = 1;
    c.reg.swap_interval = 10;
    c
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let spec = ProblemSpec::four_harmonics();

    // Swap function preservation and cost monotonicity.
    let mut worst_fn: f64 = 0.0;
    for n in 0..50 {
        let arch = Architecture::mlp(
            rng.gen_range(1..=2),
            rng.gen_range(2..=8),
            ActivationKind::SinLU,
            2.0,
        )
        .unwrap();
        let mut net = GeometricNetwork::init_xavier(arch, n);
        let before = net.clone();
        let cost = LocalityCost::new(&net);
        let w0 = cost.breakdown(&net, 1.0, false).weight_term;
        try_swaps(&mut net, 1.0, |_| {});
        let w1 = cost.breakdown(&net, 1.0, false).weight_term;
        if w1 > w0 {
            failures.push(format!("swap raised weight term {w0} -> {w1}"));
        }
        for _ in 0..100 {
            let t = rng.gen_range(0.0..2.0 * PI);
            worst_fn = worst_fn.max((net.forward_value(t) - before.forward_value(t)).abs());
        }
    }
    if worst_fn >= 1e-12 {
        failures.push(format!("swap changed the function by {worst_fn:.2e}"));
    }

    // Mask permanence through optimizer steps and swaps.
    let arch = Architecture::mlp(2, 6, ActivationKind::SinLU, 2.0).unwrap();
    let mut net = GeometricNetwork::init_xavier(arch, 3);
    for i in [0, 4, 9, 20, 33] {
        net.mask_off(i);
    }
    let config = small_config(400, 3);
    let mut trainer = Trainer::new(vec![net], &spec, &config).unwrap();
    let mut total_swaps = 0;
    while !trainer.is_done() {
        trainer.step().unwrap();
        let n = &trainer.instances()[0];
        if n.mask().iter().filter(|m| !**m).count() != 5
            || n.params()
                .iter()
                .zip(n.mask())
                .any(|(p, m)| !m && *p != 0.0)
        {
            failures.push(format!("mask broken at epoch {}", trainer.epoch()));
            break;
        }
        total_swaps += trainer.metrics().last().map_or(0, |r| r.swaps_made);
    }

    // A = 0 means no swaps; λ = 0 means no penalty.
    let flat = Architecture::mlp(1, 8, ActivationKind::SinLU, 0.0).unwrap();
    let rec = train(flat, &spec, &small_config(300, 1)).unwrap();
    if rec.metrics.iter().any(|r| r.swaps_made != 0) {
        failures.push("swaps with A = 0".into());
    }
    let mut zero = small_config(300, 1);
    zero.schedule.lambda_phase1 = 0.0;
    zero.schedule.lambda_phase2 = 0.0;
    zero.schedule.lambda_phase3 = 0.0;
    let rec = train(dense_21(1), &spec, &zero).unwrap();
    if rec.metrics.iter().any(|r| r.reg_loss != 0.0) {
        failures.push("reg_loss nonzero with λ = 0".into());
    }

    // Schedule jumps exactly at T/4 and 3T/4.
    let mut sched = small_config(400, 2);
    sched.reg.swap_interval = 10_000;
    let rec = train(dense_21(1), &spec, &sched).unwrap();
    let reg: Vec<f64> = rec.metrics.iter().map(|r| r.reg_loss).collect();
    for e in 1..reg.len() {
        let ratio = reg[e] / reg[e - 1];
        let jump = match e {
            100 => ratio > 5.0,
            300 => ratio < 0.5,
            _ => (0.8..1.25).contains(&ratio),
        };
        if !jump {
            failures.push(format!("reg_loss ratio {ratio:.3} at epoch {e}"));
            break;
        }
    }

    // Bit-identical reruns.
    let a = train(dense_21(2), &spec, &small_config(200, 9)).unwrap();
    let b = train(dense_21(2), &spec, &small_config(200, 9)).unwrap();
    if a != b {
        failures.push("rerun differs".into());
    }

    let pass = failures.is_empty();
    outcome(
        pass,
        if pass {
            format!(
                "swap fidelity max {worst_fn:.1e}, swap cost monotone, mask kept through 400 epochs and {total_swaps} swaps, \
                 A=0 no swaps, λ=0 no penalty, jumps at T/4 and 3T/4, reruns bit-identical"
            )
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wants = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        eprintln!("criterion {n}: {name}");
        let start = Instant::now();
        let o = f();
        println!(
            "criterion {n} [{name}] {}: {} ({:.0} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((n, name, o));
    };

    if wants(1) {
        run(1, "autodiff oracle", &mut criterion_1);
    }
    if wants(2) {
        run(2, "analytic oracle", &mut criterion_2);
    }
    let mut baseline = None;
    if wants(3) || wants(4) {
        run(3, "dense baseline", &mut || {
            let (o, b) = criterion_3();
            baseline = Some(b);
            o
        });
    }
    let mut k1 = None;
    if wants(4) || wants(5) || wants(7) {
        k1 = Some(bimt_runs(&ProblemSpec::single_harmonic(1), "k=1"));
    }
    if wants(4) {
        let runs = k1.as_deref().unwrap();
        run(4, "BIMT sparsification", &mut || {
            criterion_4(runs, baseline)
        });
    }
    if wants(5) {
        let runs = k1.as_deref().unwrap();
        run(5, "spectral-bias trend", &mut || {
            let mut medians = vec![median_active(runs)];
            for k in 2..=4 {
                let spec = ProblemSpec::single_harmonic(k);
                medians.push(median_active(&bimt_runs(&spec, &format!("k={k}"))));
            }
            criterion_5(&medians)
        });
    }
    if wants(6) {
        run(6, "logistic bare minimum", &mut criterion_6);
    }
    if wants(7) {
        run(7, "modular vs dense", &mut || criterion_7(k1.as_deref()));
    }
    if wants(8) {
        run(8, "structural invariants", &mut criterion_8);
    }

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria pass{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {failed:?}")
        }
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed.is_empty() || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
