//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

mod common;

use std::time::{Duration, Instant};

use common::*;
use nmpc_core::batch::join;
use nmpc_core::chain::{build_scenario, ChainParams};
use nmpc_core::fbe::{fb_step, fbe_at};
use nmpc_core::lbfgs::LbfgsBuffer;
use nmpc_core::linalg::{dist_sq, norm};
use nmpc_core::mpc::{simulate, MpcOptions};
use nmpc_core::problem::{Composite, SmoothComposite};
use nmpc_core::solver::{linesearch_violations, square_summability, IterateRecord, Solution};
use nmpc_core::{fbs_solve, panoc_solve, ProxSpec, SolverOptions, Status};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() <= limit_s
}

fn gradient_exactness() -> Outcome {
    let clock = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let masses = 1 + i % 2;
        let horizon = if (i / 2) % 2 == 0 { 2 } else { 5 };
        let (spec, u) = random_chain_instance(&mut r, masses, horizon);
        let mut g = vec![0.0; u.len()];
        spec.cost_and_gradient(&u, &mut g).unwrap();
        worst = worst.max(rel_err_inf(&g, &fd_gradient(&spec, &u, 1e-6)));
    }
    let t = clock.elapsed();
    outcome(
        worst <= 1e-6 && within(t, 10.0),
        format!("max relative error {worst:.2e}, {:.2} s", t.as_secs_f64()),
    )
}

fn fbe_invariants() -> Outcome {
    let clock = Instant::now();
    let mut r = rng(2);
    let (mut upper, mut decrease, mut exact, mut dual) =
        (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0_f64, 0.0_f64);
    for i in 0..100 {
        let n = 2 + i % 5;
        let (bq, u_star) = box_quadratic_with_solution(&mut r, n);
        let p = bq.problem();
        let gamma = 0.5 / bq.lipschitz;
        let u: Vec<f64> = (0..n).map(|j| r.gen_range(bq.lo[j]..bq.hi[j])).collect();
        let step = fb_step(&p, &u, gamma).unwrap();
        let phi_u = p.cost(&u).unwrap() + p.penalty(&u);
        let phi_bar = p.cost(&step.u_bar).unwrap() + step.g_bar;
        upper = upper.max(step.fbe - phi_u);
        let coef = (1.0 - gamma * bq.lipschitz) / (2.0 * gamma);
        decrease = decrease.max(phi_bar - (step.fbe - coef * dist_sq(&u, &step.u_bar)));
        dual = dual.max((step.fbe - fbe_at(&p, &u, gamma).unwrap()).abs() / (1.0 + step.fbe.abs()));
        let at_star = fb_step(&p, &u_star, gamma).unwrap();
        let phi_star = p.cost(&u_star).unwrap() + p.penalty(&u_star);
        exact = exact.max((at_star.fbe - phi_star).abs());
    }
    let t = clock.elapsed();
    let pass =
        upper <= 1e-10 && decrease <= 1e-10 && exact <= 1e-10 && dual <= 1e-10 && within(t, 5.0);
    outcome(
        pass,
        format!(
            "max φ_γ−φ {upper:.1e}, decrease slack {decrease:.1e}, fixed-point gap {exact:.1e}, dual gap {dual:.1e}, {:.2} s",
            t.as_secs_f64()
        ),
    )
}

struct Benchmark {
    panoc: Solution,
    fbs: Solution,
    panoc_tight: Solution,
    elapsed: Duration,
}

fn benchmark() -> Benchmark {
    let clock = Instant::now();
    let sc = build_scenario(&ChainParams::default(), 0.1, 40).unwrap();
    let u0 = vec![0.0; sc.spec.num_inputs()];
    let opts = SolverOptions {
        max_iter: 50_000,
        ..SolverOptions::default()
    };
    let tight = SolverOptions {
        tol: 1e-6,
        ..opts.clone()
    };
    let panoc = panoc_solve(&sc.spec, &u0, &opts).unwrap();
    let fbs = fbs_solve(&sc.spec, &u0, &opts).unwrap();
    let panoc_tight = panoc_solve(&sc.spec, &u0, &tight).unwrap();
    Benchmark {
        panoc,
        fbs,
        panoc_tight,
        elapsed: clock.elapsed(),
    }
}

fn linesearch_contract(b: &Benchmark) -> Outcome {
    let mut checked = 0;
    let mut bad = 0;
    for sol in [&b.panoc, &b.panoc_tight] {
        checked += sol.trace.len().saturating_sub(1);
        bad += linesearch_violations(&sol.trace, 1e-10).len();
    }
    outcome(
        bad == 0 && checked > 0,
        format!("{bad} violations over {checked} accepted steps"),
    )
}

fn benchmark_convergence(b: &Benchmark) -> Outcome {
    let ratio = b.fbs.iterations as f64 / b.panoc.iterations as f64;
    let pass = b.panoc.status == Status::Converged
        && b.fbs.status == Status::Converged
        && ratio >= 5.0
        && within(b.elapsed, 60.0);
    outcome(
        pass,
        format!(
            "panoc {} ({}), fbs {} ({}), ratio {ratio:.1}, {:.2} s",
            b.panoc.iterations,
            b.panoc.status,
            b.fbs.iterations,
            b.fbs.status,
            b.elapsed.as_secs_f64()
        ),
    )
}

/// Unit steps and residual ratios `‖r^{k+1}‖/‖r^k‖ < 0.1` throughout the
/// final quartile of the run.
fn takeover(trace: &[IterateRecord]) -> (bool, String) {
    let steps = trace.len() - 1;
    let start = (3 * steps) / 4;
    let unit = trace[start..steps].iter().all(|r| r.tau == Some(1.0));
    let ratios: Vec<f64> = trace[start..]
        .windows(2)
        .map(|w| w[1].res_inf / w[0].res_inf)
        .collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let last = trace.last().unwrap();
    let pass = unit && !ratios.is_empty() && worst < 0.1 && last.res_inf <= 1e-10;
    (
        pass,
        format!(
            "{} iterations, unit steps in final quartile {unit}, largest ratio there {worst:.2e}",
            trace.len()
        ),
    )
}

fn unit_step_takeover() -> Outcome {
    let opts = SolverOptions {
        tol: 1e-10,
        ..SolverOptions::default()
    };
    let clipped = nmpc_core::problem::quadratic(
        vec![vec![1.0]],
        vec![-3.0],
        1,
        ProxSpec::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        },
    );
    let a = panoc_solve(&clipped, &[-0.5], &opts).unwrap();
    // ℓ(u) = Σ dᵢuᵢ²/2 + log(1 + e^{uᵢ−1}) + 0.3 uᵢu_{i+1} (cyclic), strongly convex
    let d = [1.0, 2.0, 3.0, 4.0, 5.0];
    let smooth = SmoothComposite::new(
        5,
        5,
        ProxSpec::Zero,
        move |u: &[f64], grad: Option<&mut [f64]>| {
            let mut v = 0.0;
            let mut g = [0.0; 5];
            for i in 0..5 {
                let j = (i + 1) % 5;
                let e = (u[i] - 1.0).exp();
                v += 0.5 * d[i] * u[i] * u[i] + e.ln_1p() + 0.3 * u[i] * u[j];
                g[i] += d[i] * u[i] + e / (1.0 + e) + 0.3 * u[j];
                g[j] += 0.3 * u[i];
            }
            if let Some(grad) = grad {
                grad.copy_from_slice(&g);
            }
            v
        },
    );
    let b = panoc_solve(&smooth, &[3.0, -2.0, 1.0, 4.0, -5.0], &opts).unwrap();
    let (pa, da) = takeover(&a.trace);
    let (pb, db) = takeover(&b.trace);
    outcome(
        pa && pb && a.status == Status::Converged && b.status == Status::Converged,
        format!("clipped quadratic: {da}; smooth: {db}"),
    )
}

fn lbfgs_oracles() -> Outcome {
    let e1 = [1.0, 0.0];
    let mut worst: f64 = 0.0;
    let mut buf = LbfgsBuffer::new(2, 10);
    worst = worst.max(norm(&nmpc_core::linalg::sub(
        &buf.direction(&e1),
        &[-1.0, 0.0],
    )));
    buf.push(&e1, &e1).unwrap();
    worst = worst.max(norm(&nmpc_core::linalg::sub(
        &buf.direction(&e1),
        &[-1.0, 0.0],
    )));
    let mut buf = LbfgsBuffer::new(2, 10);
    buf.push(&[2.0, 0.0], &e1).unwrap();
    worst = worst.max(norm(&nmpc_core::linalg::sub(
        &buf.direction(&e1),
        &[-2.0, 0.0],
    )));

    // r(u) = A(u − u*) with A symmetric positive definite
    let a = [
        [4.0, 1.0, 0.0, 0.5, 0.0],
        [1.0, 3.0, 0.5, 0.0, 0.0],
        [0.0, 0.5, 2.0, 0.3, 0.1],
        [0.5, 0.0, 0.3, 1.5, 0.2],
        [0.0, 0.0, 0.1, 0.2, 1.0],
    ];
    let u_star = [1.0, -2.0, 0.5, 3.0, -1.0];
    let res = |u: &[f64]| -> Vec<f64> {
        (0..5)
            .map(|i| (0..5).map(|j| a[i][j] * (u[j] - u_star[j])).sum())
            .collect()
    };
    let mut buf = LbfgsBuffer::new(5, 10);
    let mut u = vec![0.0; 5];
    let mut r = res(&u);
    let mut reached = None;
    for k in 1..=30 {
        let d = buf.direction(&r);
        let next: Vec<f64> = u.iter().zip(&d).map(|(x, dx)| x + dx).collect();
        let r_next = res(&next);
        buf.push(
            &nmpc_core::linalg::sub(&next, &u),
            &nmpc_core::linalg::sub(&r_next, &r),
        )
        .unwrap();
        u = next;
        r = r_next;
        if dist_sq(&u, &u_star).sqrt() <= 1e-10 {
            reached = Some(k);
            break;
        }
    }
    outcome(
        worst <= 1e-12 && reached.is_some(),
        format!(
            "hand examples max error {worst:.1e}, 5x5 error ≤ 1e-10 after {reached:?} iterations"
        ),
    )
}

fn closed_loop() -> Outcome {
    let clock = Instant::now();
    let soft = ChainParams::default();
    let hard_free = ChainParams {
        mu: vec![0.0; soft.masses + 1],
        ..soft.clone()
    };
    let opts = SolverOptions::default();
    let mpc = MpcOptions::default();
    let run = |p: &ChainParams| {
        let sc = build_scenario(p, 0.1, 40).unwrap();
        simulate(&sc, &opts, &mpc).unwrap()
    };
    let (a, b) = join(|| run(&soft), || run(&hard_free));
    let t = clock.elapsed();
    let cost_ratio = a.records.last().unwrap().stage_cost / a.records[0].stage_cost;
    let pass = a.records.len() == 150
        && a.all_converged
        && b.all_converged
        && cost_ratio <= 0.01
        && a.min_p2() >= -0.15
        && b.min_p2() < a.min_p2()
        && within(t, 600.0);
    outcome(
        pass,
        format!(
            "{} steps, converged {}/{}, final/initial stage cost {:.2}%, min p2 soft {:.4} vs unpenalized {:.4}, {:.1} s",
            a.records.len(),
            a.all_converged,
            b.all_converged,
            100.0 * cost_ratio,
            a.min_p2(),
            b.min_p2(),
            t.as_secs_f64()
        ),
    )
}

fn square_summability_bound(b: &Benchmark) -> Outcome {
    let mut r = rng(8);
    let mut traces: Vec<Solution> = vec![b.panoc.clone(), b.fbs.clone(), b.panoc_tight.clone()];
    for i in 0..20 {
        let bq = random_box_quadratic(&mut r, 2 + i % 5);
        let p = bq.problem();
        let u0: Vec<f64> = (0..bq.dim()).map(|_| r.gen_range(-2.0..2.0)).collect();
        let opts = SolverOptions {
            tol: 1e-9,
            ..SolverOptions::default()
        };
        traces.push(panoc_solve(&p, &u0, &opts).unwrap());
        traces.push(fbs_solve(&p, &u0, &opts).unwrap());
    }
    let converged: Vec<&Solution> = traces
        .iter()
        .filter(|s| s.status == Status::Converged)
        .collect();
    let worst = converged
        .iter()
        .map(|s| {
            let (lhs, rhs) = square_summability(&s.trace);
            (rhs - lhs) / rhs.abs().max(1.0)
        })
        .fold(f64::INFINITY, f64::min);
    outcome(
        converged.len() == traces.len() && worst >= -1e-8,
        format!(
            "{} converged traces, worst relative slack {worst:.2e}",
            converged.len()
        ),
    )
}

#[test]
fn acceptance() {
    let bench = benchmark();
    let results = [
        ("1 gradient exactness", gradient_exactness()),
        ("2 forward-backward envelope invariants", fbe_invariants()),
        ("3 line-search contract", linesearch_contract(&bench)),
        ("4 benchmark convergence", benchmark_convergence(&bench)),
        ("5 unit-step takeover", unit_step_takeover()),
        ("6 L-BFGS oracles", lbfgs_oracles()),
        ("7 closed-loop simulation", closed_loop()),
        (
            "8 square-summability bound",
            square_summability_bound(&bench),
        ),
    ];
    for (name, o) in &results {
        println!(
            "criterion {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
