//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use oracle::*;
use qagg_cli::{load_config, run_bench, Sweep};
use qagg_core::experiment::{Method, RegretReport};
use qagg_core::smoother::default_tolerance;
use qagg_core::{
    apply_member, build_tikhonov_family, certify_kkt, check_ordered, cp_criterion, degrees_of_freedom,
    deterministic_inequality, pair_distance, q_objective, q_objective_penalized, solve_q_aggregation,
    CandidateSet, DesignProblem, GroundTruth, QObjective, SolverOptions,
};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ac1_exactness() -> Outcome {
    let started = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = r.gen_range(2..=20);
        let p = r.gen_range(1..=10);
        let m = r.gen_range(1..=5);
        let x = gaussian_matrix(&mut r, n, p);
        let k = random_spd(&mut r, p);
        let grid = random_grid(&mut r, m);
        let y = gaussian_vector(&mut r, n);
        let mu = gaussian_vector(&mut r, n);
        let sigma = r.gen_range(0.2..2.0);
        let fam = build_tikhonov_family(&DesignProblem::new(x.clone(), k.clone(), grid.clone()).unwrap()).unwrap();
        let truth = GroundTruth::new(mu.clone(), sigma).unwrap();
        let mats: Vec<DMatrix<f64>> = grid.iter().map(|&l| fit_map(&x, &k, l)).collect();
        for (j, a) in mats.iter().enumerate() {
            worst = worst.max((a * &y - apply_member(&fam, j, &y).unwrap()).amax());
            worst = worst.max((a.trace() - degrees_of_freedom(&fam, j).unwrap()).abs());
            worst = worst.max((cp(a, &y, sigma) - cp_criterion(&fam, j, &y, sigma).unwrap()).abs());
            for (l, b) in mats.iter().enumerate() {
                let diff = a - b;
                let dense = (sigma * sigma * diff.norm_squared() + (&diff * &mu).norm_squared()).sqrt();
                worst = worst.max((dense - pair_distance(&fam, j, l, &truth).unwrap()).abs());
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 10.0,
        format!("50 instances, max abs deviation {worst:.2e} (tol 1e-8), {secs:.2} s (limit 10 s)"),
    )
}

fn q_agg(report: &RegretReport) -> &qagg_core::experiment::MethodSummary {
    report.method(Method::QAgg).expect("q_agg summary")
}

fn ac2_regret_flat_in_m(reports: &[RegretReport], secs: f64) -> Outcome {
    let mut lines = Vec::new();
    let mut below = true;
    let mut scenario = true;
    for r in reports {
        let s = q_agg(r);
        below &= s.regret < 10.0 * r.sigma * r.sigma;
        scenario &= (r.r_star / (r.sigma * r.sigma) - 20.0).abs() < 1.0;
        let soft = r.method(Method::ExpWeights).map_or(f64::NAN, |s| s.regret);
        lines.push(format!(
            "M={}: R* {:.3}, regret {:.3} ± {:.3} (paired {:.3} ± {:.3}, softmax {:.3}, dropped {})",
            r.m, r.r_star, s.regret, s.regret_ci, s.paired_regret, s.paired_ci, soft, r.nonconverged.len()
        ));
    }
    let (first, last) = (q_agg(&reports[0]), q_agg(reports.last().unwrap()));
    let slack = 2.0 * (first.regret_ci.powi(2) + last.regret_ci.powi(2)).sqrt();
    let drift = last.regret - first.regret;
    let flat = drift <= 2.0 + slack;
    let reps = reports.iter().map(|r| r.used_replicates).min().unwrap_or(0);
    outcome(
        scenario && below && flat && reps >= 2000 && secs < 1800.0,
        format!(
            "{}; drift {drift:.3} <= 2 + {slack:.3}; min replicates {reps}; {secs:.1} s",
            lines.join("; ")
        ),
    )
}

fn ac3_log_q(reports: &[RegretReport], secs: f64) -> Outcome {
    let logs: Vec<f64> = reports.iter().map(|r| (r.q as f64).ln()).collect();
    let regrets: Vec<f64> = reports.iter().map(|r| q_agg(r).regret).collect();
    let k = logs.len() as f64;
    let (mx, my) = (logs.iter().sum::<f64>() / k, regrets.iter().sum::<f64>() / k);
    let sxx: f64 = logs.iter().map(|l| (l - mx).powi(2)).sum();
    let b = logs.iter().zip(&regrets).map(|(l, g)| (l - mx) * (g - my)).sum::<f64>() / sxx;
    let a = my - b * mx;

    let (first, last) = (&reports[0], reports.last().unwrap());
    let s2 = first.sigma * first.sigma;
    let slack = (q_agg(first).regret_ci.powi(2) + q_agg(last).regret_ci.powi(2)).sqrt();
    let bound = q_agg(first).regret + 4.0 * s2 * (last.q as f64).ln() + slack;
    let per_q: Vec<String> = reports
        .iter()
        .map(|r| format!("q={} (M={}): {:.3} ± {:.3}", r.q, r.m, q_agg(r).regret, q_agg(r).regret_ci))
        .collect();
    outcome(
        q_agg(last).regret <= bound && first.q == 1 && last.q == 16 && secs < 1800.0,
        format!(
            "{}; fit a={a:.3} b={b:.3}; q=16 regret {:.3} <= {bound:.3}; {secs:.1} s",
            per_q.join("; "),
            q_agg(last).regret
        ),
    )
}

fn ac4_forms_agree() -> Outcome {
    let mut r = rng(104);
    let mut worst_lib: f64 = 0.0;
    let mut worst_dense: f64 = 0.0;
    for _ in 0..10_000 {
        let n = r.gen_range(2..=12);
        let p = r.gen_range(1..=6);
        let m = r.gen_range(1..=6);
        let x = gaussian_matrix(&mut r, n, p);
        let k = random_spd(&mut r, p);
        let grid = random_grid(&mut r, m);
        let y = gaussian_vector(&mut r, n) * r.gen_range(0.5..3.0);
        let sigma = r.gen_range(0.2..2.0);
        let theta = random_simplex_point(&mut r, grid.len());
        let fam = build_tikhonov_family(&DesignProblem::new(x.clone(), k.clone(), grid.clone()).unwrap()).unwrap();
        let convex = q_objective(&fam, &theta, &y, sigma).unwrap();
        let penalized = q_objective_penalized(&fam, &theta, &y, sigma).unwrap();
        worst_lib = worst_lib.max((convex - penalized).abs() / convex.abs().max(penalized.abs()));
        let mats: Vec<DMatrix<f64>> = grid.iter().map(|&l| fit_map(&x, &k, l)).collect();
        let dc = objective_convex(&mats, &theta, &y, sigma);
        let dp = objective_penalized(&mats, &theta, &y, sigma);
        worst_dense = worst_dense.max((dc - dp).abs() / dc.abs().max(dp.abs()));
    }
    outcome(
        worst_lib <= 1e-9 && worst_dense <= 1e-9,
        format!("1e4 pairs, max relative gap {worst_lib:.2e} (library), {worst_dense:.2e} (dense); tol 1e-9"),
    )
}

/// Brute-force minimum of the objective over the simplex grid with step
/// `1/steps`.
fn grid_minimum(fits: &[DVector<f64>], linear: &[f64], y: &DVector<f64>, steps: usize) -> f64 {
    let value = |t: &[f64]| {
        let combined = fits.iter().zip(t).fold(DVector::zeros(y.len()), |acc, (f, w)| acc + f * *w);
        0.5 * (combined - y).norm_squared() + linear.iter().zip(t).map(|(l, w)| l * w).sum::<f64>()
    };
    let h = steps as f64;
    let mut best = f64::INFINITY;
    match fits.len() {
        2 => {
            for i in 0..=steps {
                best = best.min(value(&[i as f64 / h, 1.0 - i as f64 / h]));
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let t = [i as f64 / h, j as f64 / h, (steps - i - j) as f64 / h];
                    best = best.min(value(&t));
                }
            }
        }
        _ => unreachable!("grid search is for two or three members"),
    }
    best
}

fn ac5_solver() -> Outcome {
    let mut r = rng(105);
    let opts = SolverOptions::default();
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    let mut worst_kkt: f64 = f64::INFINITY;
    let mut solves = 0;
    let mut kkt_ok = true;
    let mut record_kkt = |fam: &qagg_core::SpectralFamily, y: &DVector<f64>, sigma: f64, report: &qagg_core::SolveReport| {
        let kkt = certify_kkt(fam, report.weights.theta(), y, sigma).unwrap();
        let scaled = kkt / (1.0 + report.objective.abs());
        worst_kkt = worst_kkt.min(scaled);
        kkt_ok &= kkt >= -1e-7 * (1.0 + report.objective.abs()) && report.converged;
        solves += 1;
    };

    for trial in 0..20 {
        let m = 2 + trial % 2;
        let n = r.gen_range(4..=12);
        let p = r.gen_range(1..=6);
        let x = gaussian_matrix(&mut r, n, p);
        let k = random_spd(&mut r, p);
        let mut grid = random_grid(&mut r, m);
        while grid.len() < m {
            grid = random_grid(&mut r, m);
        }
        let y = gaussian_vector(&mut r, n) * 2.0;
        let sigma = r.gen_range(0.2..1.5);
        let fam = build_tikhonov_family(&DesignProblem::new(x.clone(), k.clone(), grid.clone()).unwrap()).unwrap();
        let mats: Vec<DMatrix<f64>> = grid.iter().map(|&l| fit_map(&x, &k, l)).collect();
        let fits: Vec<DVector<f64>> = mats.iter().map(|a| a * &y).collect();
        let linear: Vec<f64> = mats
            .iter()
            .zip(&fits)
            .map(|(a, f)| 2.0 * sigma * sigma * a.trace() + 0.5 * (f - &y).norm_squared())
            .collect();
        let report = solve_q_aggregation(&fam, &y, sigma, &opts).unwrap();
        let solved = objective_convex(&mats, report.weights.theta(), &y, sigma);
        let brute = grid_minimum(&fits, &linear, &y, 1000);
        worst_gap = worst_gap.max(solved - brute);
        record_kkt(&fam, &y, sigma, &report);
    }
    for _ in 0..200 {
        let m = r.gen_range(1..=40);
        let n = r.gen_range(5..=40);
        let p = r.gen_range(1..=n.min(15));
        let x = gaussian_matrix(&mut r, n, p);
        let k = random_spd(&mut r, p);
        let grid = random_grid(&mut r, m);
        let y = gaussian_vector(&mut r, n) * r.gen_range(0.5..4.0);
        let sigma = r.gen_range(0.2..2.0);
        let fam = build_tikhonov_family(&DesignProblem::new(x, k, grid).unwrap()).unwrap();
        let report = solve_q_aggregation(&fam, &y, sigma, &opts).unwrap();
        record_kkt(&fam, &y, sigma, &report);
    }

    let x = gaussian_matrix(&mut r, 15, 6);
    let fam = build_tikhonov_family(&DesignProblem::ridge(x, random_grid(&mut r, 8)).unwrap()).unwrap();
    let y = gaussian_vector(&mut r, 15) * 2.0;
    let fits = fam.project(&y).unwrap();
    let objective = QObjective::new(&fits, 0.9).unwrap();
    let step = 1e-5;
    let mut worst_fd: f64 = 0.0;
    for _ in 0..100 {
        let theta = DVector::from_vec(random_simplex_point(&mut r, fam.len()));
        let grad = objective.gradient(&theta).unwrap();
        for j in 0..theta.len() {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[j] += step;
            down[j] -= step;
            let fd = (objective.value(&up).unwrap() - objective.value(&down).unwrap()) / (2.0 * step);
            worst_fd = worst_fd.max((fd - grad[j]).abs() / grad[j].abs().max(1.0));
        }
    }
    outcome(
        worst_gap <= 1e-5 && kkt_ok && worst_fd < 1e-5,
        format!(
            "grid gap {worst_gap:.2e} (tol 1e-5) on 20 M∈{{2,3}} solves; min kkt/(1+|H|) {worst_kkt:.2e} over {solves} solves (tol -1e-7); finite-difference error {worst_fd:.2e} (tol 1e-5)"
        ),
    )
}

fn ac6_deterministic_inequality() -> Outcome {
    let mut r = rng(106);
    let (n, p, m) = (50, 20, 25);
    let x = gaussian_matrix(&mut r, n, p);
    let k = random_spd(&mut r, p);
    let grid: Vec<f64> = (0..m).map(|j| 10f64.powf(-2.0 + 5.0 * j as f64 / (m - 1) as f64)).collect();
    let fam = build_tikhonov_family(&DesignProblem::new(x, k, grid).unwrap()).unwrap();
    let mu = gaussian_vector(&mut r, n) * 1.5;
    let sigma = 1.0;
    let opts = SolverOptions::default();
    let tol = 1e-8 * (1.0 + mu.norm_squared());
    let (mut violations, mut checks, mut nonconverged) = (0, 0, 0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let noise = gaussian_vector(&mut r, n) * sigma;
        let y = &mu + &noise;
        let fits = fam.project(&y).unwrap();
        let objective = QObjective::new(&fits, sigma).unwrap();
        let report = solve_q_aggregation(&fam, &y, sigma, &opts).unwrap();
        nonconverged += usize::from(!report.converged);
        let theta = report.weights.theta_vector();
        let noise_coords = fam.fit_basis().tr_mul(&noise);
        let slack = (-report.kkt_residual).max(0.0);
        for vertex in 0..m {
            let check = deterministic_inequality(&objective, &theta, &noise_coords, vertex).unwrap();
            let margin = check.excess - check.bound - slack;
            worst = worst.max(margin);
            violations += usize::from(margin > tol);
            checks += 1;
        }
    }
    outcome(
        violations == 0 && nonconverged == 0,
        format!("1e3 draws × {m} vertices = {checks} checks, {violations} violations, worst excess − bound {worst:.3e}, {nonconverged} uncertified solves"),
    )
}

fn ac7_axioms() -> Outcome {
    let mut r = rng(107);
    let mut passed = 0;
    for _ in 0..20 {
        let n = r.gen_range(2..=10);
        let p = r.gen_range(1..=8);
        let m = r.gen_range(2..=6);
        let x = gaussian_matrix(&mut r, n, p);
        let k = random_spd(&mut r, p);
        let fam = build_tikhonov_family(&DesignProblem::new(x, k, random_grid(&mut r, m)).unwrap()).unwrap();
        let mats = fam.materialize();
        passed += usize::from(check_ordered(&mats, default_tolerance(&mats)).unwrap().all_passed());
    }
    let e1 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
    let e2 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 0.0]));
    let counter = check_ordered(&[e1, e2], 1e-8).unwrap();
    let only_iii = counter.symmetric_contraction.passed && counter.commuting.passed && !counter.ordered.passed;
    outcome(
        passed == 20 && only_iii,
        format!(
            "{passed}/20 random Tikhonov families pass; incomparable projections fail (iii) only: {only_iii}"
        ),
    )
}

fn ac8_tail(reports: &[RegretReport]) -> Outcome {
    let q99: Vec<String> = reports
        .iter()
        .map(|r| format!("M={}: {:.3}", r.m, q_agg(r).excess_quantiles.q99))
        .collect();
    let ok = reports
        .iter()
        .all(|r| q_agg(r).excess_quantiles.q99 <= 40.0 * r.sigma * r.sigma);
    outcome(ok, format!("0.99-quantile of per-draw excess {} (limit 40σ²)", q99.join(", ")))
}

fn ac9_determinism() -> Outcome {
    let run = |dir: &Path, threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_qagg"))
            .args(["--threads", threads, "bench", "--sweep", "m", "--config"])
            .arg(fixture("tiny.toml"))
            .arg("--output")
            .arg(dir)
            .status()
            .expect("spawn qagg")
            .success()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ok = run(a.path(), "1") && run(b.path(), "2");
    let csv_a = std::fs::read(a.path().join("reports.csv")).unwrap_or_default();
    let csv_b = std::fs::read(b.path().join("reports.csv")).unwrap_or_default();
    outcome(
        ok && !csv_a.is_empty() && csv_a == csv_b,
        format!("two `qagg bench` runs, equal seed, 1 vs 2 threads: {} bytes each, identical: {}", csv_a.len(), csv_a == csv_b),
    )
}

fn sweep(config: &str, mode: Sweep) -> (Vec<RegretReport>, f64) {
    let started = Instant::now();
    let config = load_config(&fixture(config)).expect("fixture config");
    let reports = run_bench(&config, Some(mode)).expect("sweep runs");
    (reports, started.elapsed().as_secs_f64())
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let m_sweep = catch_unwind(|| sweep("ac2_sweep.toml", Sweep::M)).ok();
    let q_sweep = catch_unwind(|| sweep("ac3_ladder.toml", Sweep::Q)).ok();
    let missing = || outcome(false, "sweep failed to run".into());

    let results = [
        ("AC-1", "exactness stack", guarded(ac1_exactness)),
        (
            "AC-2",
            "regret bounded and flat in M",
            m_sweep.as_ref().map_or_else(missing, |(r, s)| guarded(|| ac2_regret_flat_in_m(r, *s))),
        ),
        (
            "AC-3",
            "regret grows at most like log q",
            q_sweep.as_ref().map_or_else(missing, |(r, s)| guarded(|| ac3_log_q(r, *s))),
        ),
        ("AC-4", "objective forms agree", guarded(ac4_forms_agree)),
        ("AC-5", "solver correctness", guarded(ac5_solver)),
        ("AC-6", "deterministic inequality", guarded(ac6_deterministic_inequality)),
        ("AC-7", "ordered-smoother axioms", guarded(ac7_axioms)),
        (
            "AC-8",
            "excess tail bounded",
            m_sweep.as_ref().map_or_else(missing, |(r, _)| guarded(|| ac8_tail(r))),
        ),
        ("AC-9", "bench determinism", guarded(ac9_determinism)),
    ];

    let mut failed = 0;
    for (id, title, result) in &results {
        let status = if result.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!result.passed);
        println!("{id} {status} {title}: {}", result.detail);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
