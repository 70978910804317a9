//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use inertia_core::arena::{adjudicate, fit, CostSample, FitOptions, Frame, Model};
use inertia_core::config::{run, ExperimentConfig, ExperimentKind, JCurveConfig};
use inertia_core::dynamics::{
    decompose_action, fisher_approx_work, interpretability_criterion, lorentz_factor, work, CriterionInputs, Regime,
    RuleDensity, TaylorOrder, WorkParams, DEFAULT_CRITICAL_TOLERANCE,
};
use inertia_core::microsim::{run_collision_sim, CollisionConfig};
use inertia_core::trainer::experiments::{
    jcurve_verdict, run_noise_shock, run_noise_sweep, run_task_switch, BenchConfig, ContinualConfig,
    NoiseSweepConfig, ShockConfig, Substrate,
};
use inertia_core::trainer::{gradient_check, PhaseTag, TrainConfig, Trainer};

type Criterion = (&'static str, fn() -> Outcome, Duration);

struct Outcome {
    pass: bool,
    detail: String,
}

fn rho(v: f64) -> RuleDensity {
    RuleDensity::new(v).unwrap()
}

fn closed_form() -> Outcome {
    let p = WorkParams::unit();
    let g08 = lorentz_factor(rho(0.8));
    let ratio = work(rho(0.6), &p) / work(rho(0.0), &p);
    let exact = work(rho(0.1), &p);
    let fisher_err = (fisher_approx_work(rho(0.1), &p, TaylorOrder::Fourth) - exact).abs() / exact;
    let mut invariants = true;
    let mut prev = 0.0;
    for i in 0..1000 {
        let r = rho(i as f64 / 1000.0);
        let g = lorentz_factor(r);
        invariants &= g >= 1.0 && g > prev || i == 0 && g == 1.0;
        invariants &= (work(r, &p) - p.rest_work() * g).abs() <= 1e-12 * g;
        let second = fisher_approx_work(r, &p, TaylorOrder::Second);
        let fourth = fisher_approx_work(r, &p, TaylorOrder::Fourth);
        invariants &= second <= fourth && fourth <= work(r, &p) + 1e-15;
        let a = decompose_action(2.5, r).unwrap();
        invariants &= (a.recombined() - 2.5).abs() < 1e-12;
        prev = g;
    }
    let crit = |ds, dr| {
        interpretability_criterion(&CriterionInputs::new(0.5, ds, dr, 1.0).unwrap(), DEFAULT_CRITICAL_TOLERANCE).regime
    };
    invariants &= crit(1.0, 0.1) == Regime::Interpretable;
    invariants &= crit(1.0, 0.5) == Regime::Critical;
    invariants &= crit(1.0, 0.9) == Regime::Uninterpretable;
    Outcome {
        pass: (g08 - 5.0 / 3.0).abs() < 1e-12 && (ratio - 1.25).abs() < 1e-12 && fisher_err < 1e-5 && invariants,
        detail: format!("gamma(0.8)={g08:.15} ratio(0.6)={ratio:.15} fisher4_rel_err={fisher_err:.2e} invariants={invariants}"),
    }
}

fn microsim_law() -> Outcome {
    let rhos = [0.0, 0.3, 0.6, 0.8, 0.9];
    let mut exact_err: f64 = 0.0;
    let mut noisy_err: f64 = 0.0;
    for (i, &r) in rhos.iter().enumerate() {
        let g = lorentz_factor(rho(r));
        let det = run_collision_sim(&CollisionConfig::new(rho(r), 10_000, i as u64, 0.0)).unwrap();
        exact_err = exact_err.max((det.work_ratio - g).abs());
        let noisy = run_collision_sim(&CollisionConfig::new(rho(r), 100_000, 100 + i as u64, 0.05)).unwrap();
        noisy_err = noisy_err.max((noisy.work_ratio - g).abs() / g);
    }
    Outcome {
        pass: exact_err < 1e-9 && noisy_err < 0.02,
        detail: format!("jitter0 max_abs_err={exact_err:.2e} jitter0.05 max_rel_err={noisy_err:.4}"),
    }
}

fn arena_oracle() -> Outcome {
    let opts = FitOptions::default();
    let vs: Vec<f64> = (0..20).map(|i| 0.05 * i as f64).collect();
    let rel: Vec<CostSample> = vs.iter().map(|&v| CostSample::new(v, 3.0 * (lorentz_factor(rho(v)) - 1.0) + 2.0)).collect();
    let f = fit(Model::Relativistic, &rel, Frame::Absolute, &opts).unwrap();
    let recovered = (f.k - 3.0).abs() < 1e-6 && (f.b - 2.0).abs() < 1e-6 && f.rmse < 1e-8;
    let quad: Vec<CostSample> = vs.iter().map(|&v| CostSample::new(v, 4.0 * v * v + 1.0)).collect();
    let verdict = adjudicate(&quad, &opts);
    let winner = verdict.winner();
    Outcome {
        pass: recovered && winner == Some(Model::Classical),
        detail: format!(
            "k={:.9} b={:.9} rmse={:.2e} reverse_winner={}",
            f.k,
            f.b,
            f.rmse,
            winner.map_or("none", Model::as_str)
        ),
    }
}

fn jcurve() -> Outcome {
    let config = NoiseSweepConfig::default();
    let runs = run_noise_sweep(&config).unwrap();
    let verdict = jcurve_verdict(&runs, &config.seeds, &FitOptions::default());
    let mut pass = true;
    let mut parts = Vec::new();
    for frame in Frame::ALL {
        let rel = verdict.mean(Model::Relativistic, frame).unwrap_or(f64::INFINITY);
        let cls = verdict.mean(Model::Classical, frame).unwrap_or(f64::INFINITY);
        let shf = verdict.mean(Model::ClassicalShifted, frame).unwrap_or(f64::INFINITY);
        pass &= rel < cls && rel < shf;
        parts.push(format!("{frame}: rel={rel:.3} classical={cls:.3} classical_shifted={shf:.3}"));
    }
    let rel_abs = verdict.mean(Model::Relativistic, Frame::Absolute).unwrap_or(f64::INFINITY);
    let gap = verdict.mean_covariance_gap.unwrap_or(f64::INFINITY);
    pass &= gap < 0.1 * rel_abs;
    Outcome { pass, detail: format!("{} gap={gap:.2e}", parts.join(" | ")) }
}

fn shock() -> Outcome {
    let report = run_noise_shock(&ShockConfig::default()).unwrap();
    let (lo, hi) = report.baseline_ratio_range;
    Outcome {
        pass: report.regulated_seeds_braking >= 8 && lo >= 0.8 && hi <= 1.2 && report.all_runs_separated,
        detail: format!(
            "braking {}/{} baseline_range=[{lo:.3}, {hi:.3}] separated={}",
            report.regulated_seeds_braking,
            report.regulated.len(),
            report.all_runs_separated
        ),
    }
}

fn continual() -> Outcome {
    let report = run_task_switch(&ContinualConfig::default()).unwrap();
    let base_mean =
        report.baseline.iter().map(|r| r.instantaneous_ratio).sum::<f64>() / report.baseline.len() as f64;
    Outcome {
        pass: report.regulated_seeds_braking >= 7 && report.mean_deficit_regulated < report.mean_deficit_baseline,
        detail: format!(
            "braking {}/{} baseline_ratio_mean={base_mean:.3} deficit {:.3} vs {:.3}",
            report.regulated_seeds_braking,
            report.regulated.len(),
            report.mean_deficit_regulated,
            report.mean_deficit_baseline
        ),
    }
}

fn gradients() -> Outcome {
    let sub = Substrate::default();
    let task = sub.task(7);
    let data = task.generate(sub.train_size, 0);
    let config = TrainConfig { batch_size: 16, ..TrainConfig::default() };
    let mut trainer = Trainer::new(config, sub.input_dim, sub.n_classes, 7).unwrap();
    let idx: Vec<usize> = (0..64).collect();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut epoch = 0;
    for (state, until) in [0u64, 2, 5].into_iter().enumerate() {
        while epoch < until {
            trainer.run_epoch(epoch, &data, None, PhaseTag::Clean).unwrap();
            epoch += 1;
        }
        let g = gradient_check(trainer.model(), &data, &idx, 20, state as u64);
        worst = worst.max(g.max_relative_error);
        checked += g.checked;
    }
    Outcome { pass: worst < 1e-5, detail: format!("states=3 params_checked={checked} max_rel_err={worst:.2e}") }
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let name = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((name, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let small = |kind: ExperimentKind| {
        let mut c = ExperimentConfig::new(kind);
        c.seed = 11;
        match kind {
            ExperimentKind::Microsim => c.microsim = Some(Default::default()),
            ExperimentKind::Jcurve => {
                let sweep = NoiseSweepConfig {
                    seeds: vec![0, 1],
                    noise_levels: vec![0.0, 0.3, 0.6, 0.9],
                    ..Default::default()
                };
                c.jcurve = Some(JCurveConfig { sweep, ..Default::default() })
            }
            ExperimentKind::Bench => c.bench = Some(BenchConfig { seeds: vec![0], epochs: 4, ..Default::default() }),
            ExperimentKind::Shock => c.shock = Some(ShockConfig { seeds: vec![0, 1], ..Default::default() }),
            ExperimentKind::Continual => {
                c.continual = Some(ContinualConfig { seeds: vec![0, 1], ..Default::default() })
            }
        }
        c
    };
    let kinds = [
        ExperimentKind::Microsim,
        ExperimentKind::Jcurve,
        ExperimentKind::Bench,
        ExperimentKind::Shock,
        ExperimentKind::Continual,
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for kind in kinds {
        let tmp = tempfile::tempdir().unwrap();
        let mut outs = Vec::new();
        for rep in 0..2 {
            let mut c = small(kind);
            c.output_dir = tmp.path().join(format!("run{rep}"));
            let c = c.resolve().unwrap();
            run(&c).unwrap();
            outs.push(csv_files(&c.output_dir));
        }
        files += outs[0].len();
        if outs[0].is_empty() || outs[0] != outs[1] {
            mismatches.push(kind.as_str());
        }
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: format!("experiments=5 csv_files={files} mismatched={mismatches:?}"),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("closed-form values and invariants", closed_form, Duration::from_secs(1)),
        ("micro-simulation work law", microsim_law, Duration::from_secs(30)),
        ("arena oracle recovery", arena_oracle, Duration::from_secs(5)),
        ("noise-sweep cost-model ordering", jcurve, Duration::from_secs(600)),
        ("noise-shock braking direction", shock, Duration::from_secs(600)),
        ("task-switch braking and retention", continual, Duration::from_secs(600)),
        ("gradient check at three states", gradients, Duration::from_secs(600)),
        ("bitwise determinism of CSV outputs", determinism, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {}: {name} ({:.2}s, limit {}s) {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            outcome.detail
        );
    }
    println!("acceptance: {}/8 passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
