//! End-to-end acceptance criteria. Runs without the libtest harness so each
//! criterion prints exactly one timed PASS/FAIL line; exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use rotlab::experiments::verify::{
    equivalence_points, flow_oracle_deviation, invariant_learners, spindly_case, witness_dataset,
    witness_learners, FLOW_NAMES,
};
use rotlab::experiments::{run_curves, CurvesConfig};
use rotlab::flows::{check_equivalences, gd_flow_at, PreconditionerSpec};
use rotlab::invariance::{
    anisotropic_demo, rotation_invariance_check, trajectory_rotation_deviation, AnisotropicConfig,
};
use rotlab::numerics::{sample_haar_orthogonal, Rng};
use rotlab::optimizers::{
    priming_isotropic, ridge_isotropic, run_on, Algorithm, EgPmState, RecordSchedule,
};
use rotlab::optimizers::eg_pm_step;
use rotlab::problem::{
    build_dataset, evaluate_bounds, excess_risk, least_squares, sparse_bound_min_copies, LeastSquares,
    ProblemConfig,
};
use rotlab::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

/// Least-squares hubs of `seeds` independent datasets, in seed order.
fn hubs(d: usize, m: usize, sigma: f64, seeds: usize, base: u64) -> Result<Vec<(LeastSquares, Vec<f64>)>> {
    (0..seeds)
        .into_par_iter()
        .map(|i| {
            let ds = build_dataset(&ProblemConfig::new(d, m, sigma, base), &Rng::new(base).substream(i as u64))?;
            Ok((least_squares(&ds)?, ds.target))
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn ridge_value() -> Result<Outcome> {
    let (d, m, sigma) = (64, 4, 1.0);
    let risks: Vec<f64> = hubs(d, m, sigma, 2000, 101)?
        .iter()
        .map(|(ls, target)| excess_risk(&ridge_isotropic(&ls.w_ls, ls.n, sigma * sigma * d as f64), target))
        .collect();
    let expected = sigma * sigma / (m as f64 + sigma * sigma);
    let got = mean(&risks);
    let rel = (got - expected).abs() / expected;
    outcome(rel <= 0.05, format!("mean {got:.5} vs {expected:.5}, rel err {rel:.4} <= 0.05"))
}

fn gd_flow_floor() -> Result<Outcome> {
    let (d, m, sigma) = (256, 4, 1.0);
    let data = hubs(d, m, sigma, 100, 202)?;
    let zero = vec![0.0; d];
    let times: Vec<f64> = (0..=2000).map(|i| 1e-3 * 1e4f64.powf(i as f64 / 2000.0)).collect();
    let mut best = f64::INFINITY;
    for &t in &times {
        let risks = data
            .iter()
            .map(|(ls, target)| Ok(excess_risk(&gd_flow_at(&ls.w_ls, &zero, t)?, target)))
            .collect::<Result<Vec<f64>>>()?;
        best = best.min(mean(&risks));
    }
    let floor = evaluate_bounds(d, m, sigma, 1.0, 0.5)?.invariant_lower;
    outcome(best >= 0.9 * floor, format!("min mean {best:.5} >= 0.9 x {floor:.5}"))
}

fn eg_one_step() -> Result<Outcome> {
    let (d, m, sigma, eta) = (64, 32, 1.0, 50.0);
    let bound = evaluate_bounds(d, m, sigma, eta, 0.5)?.eg_pm_one_step_upper;
    let mut worst = 0.0f64;
    let mut ok = true;
    for (ls, target) in hubs(d, m, sigma, 100, 303)? {
        let s = eg_pm_step(&EgPmState::uniform(d, eta), &ls)?;
        let e = excess_risk(&s.weights(), &target);
        worst = worst.max(e);
        ok &= e <= bound;
    }
    outcome(ok, format!("worst error {worst:e} <= {bound:e} in every run"))
}

fn pass_rate(algo: &Algorithm, d: usize, sigma: f64, delta: f64, bound: f64, base: u64) -> Result<f64> {
    let m = sparse_bound_min_copies(d, sigma, delta);
    let steps = (4.0 * (d as f64).sqrt()).round() as usize;
    let data = hubs(d, m, sigma, 200, base)?;
    let hits = data
        .iter()
        .map(|(ls, target)| {
            let tr = run_on(algo, ls, target, steps, &RecordSchedule::Steps(Vec::new()))?;
            Ok((tr.last().excess_risk <= bound) as usize)
        })
        .collect::<Result<Vec<usize>>>()?
        .iter()
        .sum::<usize>();
    Ok(hits as f64 / data.len() as f64)
}

fn approx_egu_bound() -> Result<Outcome> {
    let (d, sigma, delta) = (16, 1.0, 0.01);
    let m = sparse_bound_min_copies(d, sigma, delta);
    let bound = evaluate_bounds(d, m, sigma, 0.25, delta)?.approx_egu_pm_upper;
    let algo = Algorithm::ApproxEguPm {
        eta: 0.25,
        beta: 1.0 / 32.0,
    };
    let rate = pass_rate(&algo, d, sigma, delta, bound, 404)?;
    outcome(rate >= 0.99, format!("m={m}, bound {bound:.5}, pass rate {rate:.3} >= 0.99"))
}

fn spindly_bound() -> Result<Outcome> {
    let (d, sigma, delta) = (16, 1.0, 0.01);
    let m = sparse_bound_min_copies(d, sigma, delta);
    let bound = evaluate_bounds(d, m, sigma, 0.25, delta)?.spindly_upper;
    let rate = pass_rate(&Algorithm::Spindly { eta: 0.25 }, d, sigma, delta, bound, 505)?;
    outcome(rate >= 0.99, format!("m={m}, bound {bound:.5}, pass rate {rate:.3} >= 0.99"))
}

fn priming_bound() -> Result<Outcome> {
    let (d, m, sigma) = (64, 16, 1.0);
    let lambda = sigma * sigma * (d as f64).sqrt();
    let risks: Vec<f64> = hubs(d, m, sigma, 500, 606)?
        .iter()
        .map(|(ls, target)| excess_risk(&priming_isotropic(&ls.w_ls, ls.n, lambda), target))
        .collect();
    let bound = evaluate_bounds(d, m, sigma, 1.0, 0.5)?.priming_upper;
    let got = mean(&risks);
    outcome(got <= bound, format!("mean {got:.5} <= {bound:.5}"))
}

fn flow_oracles() -> Result<Outcome> {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for name in FLOW_NAMES {
        let dev = flow_oracle_deviation(name, 20, 707)?;
        worst = worst.max(dev);
        parts.push(format!("{name} {dev:.1e}"));
    }
    outcome(worst <= 1e-6, format!("max deviation {worst:.2e} <= 1e-6 ({})", parts.join(", ")))
}

fn equivalences() -> Result<Outcome> {
    let points = equivalence_points(50, 3, 808);
    let r = check_equivalences(PreconditionerSpec::Egu, &points, Some(&spindly_case(808)))?;
    let spindly = r.spindly_deviation.unwrap_or(f64::INFINITY);
    outcome(
        r.jacobian_mismatch <= 1e-6 && spindly <= 1e-8,
        format!(
            "jacobian mismatch {:.2e} <= 1e-6 at {} points, spindly vs egu {spindly:.2e} <= 1e-8",
            r.jacobian_mismatch, r.points
        ),
    )
}

fn invariance_dichotomy() -> Result<Outcome> {
    let d = 16;
    let ds = build_dataset(&ProblemConfig::new(d, 4, 1.0, 909), &Rng::new(909))?;
    let mut ok = true;
    let mut parts = Vec::new();
    for learner in invariant_learners(d, 1.0) {
        let r = rotation_invariance_check(&learner, &ds, 20, 1e-8, &Rng::new(910))?;
        ok &= r.invariant;
        parts.push(format!("{} {:.1e}", learner.name(), r.max_deviation));
    }
    let wds = witness_dataset(911)?;
    for learner in witness_learners(8) {
        let r = rotation_invariance_check(&learner, &wds, 5, 1e-2, &Rng::new(912))?;
        ok &= r.max_deviation > 1e-2;
        parts.push(format!("{} {:.2}", learner.name(), r.max_deviation));
    }
    outcome(ok, format!("deviations: {}", parts.join(", ")))
}

fn desk_scale_ordering() -> Result<Outcome> {
    let table = run_curves(&CurvesConfig::desk_scale())?;
    let min = |name: &str| table.min_mean(name).unwrap_or(f64::NAN);
    let (gd, egu, priming, adagrad) = (min("gd"), min("approx-egu-pm"), min("priming"), min("adagrad"));
    let bounds = evaluate_bounds(256, 4, 1.0, 0.05, 0.001)?;
    let ok = egu <= 0.2 * gd
        && priming <= 0.2 * gd
        && adagrad >= gd
        && gd >= 0.9 * bounds.invariant_lower
        && egu <= bounds.approx_egu_pm_upper;
    outcome(
        ok,
        format!(
            "runmin gd {gd:.4}, approx-egu-pm {egu:.4}, priming {priming:.4}, adagrad {adagrad:.4}; \
             lower {:.4}, egu upper {:.4}",
            bounds.invariant_lower, bounds.approx_egu_pm_upper
        ),
    )
}

fn anisotropic_rotation() -> Result<Outcome> {
    let (m, sigma, eta, beta, horizon) = (4, 0.3, 0.05, 1e-6, 4000);
    let ds = build_dataset(
        &ProblemConfig::new(2, m, sigma, 1111).with_column_scale(vec![2.0, 1.0]),
        &Rng::new(1111),
    )?;
    let u = sample_haar_orthogonal(&mut Rng::new(1112), 2)?;
    let identity = trajectory_rotation_deviation(&Algorithm::Gd { eta }, &ds, &u, horizon)?;

    let cfg = AnisotropicConfig {
        scale: [2.0, 1.0],
        m,
        sigma,
        rotate_input: true,
        algorithms: vec![Algorithm::Gd { eta }, Algorithm::ApproxEguPm { eta, beta }],
        horizon,
    };
    let runs = (0..50)
        .into_par_iter()
        .map(|r| {
            let rep = anisotropic_demo(&cfg, &Rng::new(1113).substream(r))?;
            Ok((rep.runs[0].min_distance, rep.runs[1].min_distance))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let gd = median(runs.iter().map(|r| r.0).collect());
    let egu = median(runs.iter().map(|r| r.1).collect());
    outcome(
        identity <= 1e-8 && egu <= 0.5 * gd,
        format!("rotated-trajectory gap {identity:.1e} <= 1e-8; median min distance egu-pm {egu:.4} <= 0.5 x gd {gd:.4}"),
    )
}

type Criterion = (usize, &'static str, fn() -> Result<Outcome>, Duration);

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria: [Criterion; 11] = [
        (1, "ridge expected error", ridge_value, secs(10)),
        (2, "rotation-invariant floor for gd flow", gd_flow_floor, secs(30)),
        (3, "eg-pm one-step bound", eg_one_step, secs(5)),
        (4, "approximated egu-pm high-probability bound", approx_egu_bound, secs(10)),
        (5, "spindly high-probability bound", spindly_bound, secs(10)),
        (6, "priming mean bound", priming_bound, secs(10)),
        (7, "closed-form flows vs rk4", flow_oracles, secs(5)),
        (8, "preconditioner equivalences", equivalences, secs(5)),
        (9, "invariance dichotomy", invariance_dichotomy, secs(10)),
        (10, "desk-scale curve ordering", desk_scale_ordering, secs(60)),
        (11, "anisotropic rotation identity", anisotropic_rotation, secs(10)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (id, name, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {}: {name}: {detail} [{:.2}s / {}s]",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
