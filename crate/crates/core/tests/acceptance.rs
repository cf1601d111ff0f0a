//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p hardylab --test acceptance`.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::f64::consts::PI;
use std::time::Instant;

use hardylab::assembly::{mass, stiffness};
use hardylab::closedform::{barrier_sign_scan, residual_order_study, sector_hardy_constant};
use hardylab::problems::{
    concentration_ratio, exterior_transition, improved_hardy_constant, problem_mesh, Discretization,
};
use hardylab::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.5}")).collect();
    format!("[{}]", parts.join(", "))
}

fn non_increasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// Half-space constant on the half-disk, graded meshes, four levels.
fn criterion_1() -> Result<Outcome> {
    let p = QuotientProblem::new(DomainSpec::half_disk(0.5), 0.0, MeshParams::new(0.12, 2.0, 3));
    let mus: Vec<f64> = compute_mu(&p)?.trace.iter().map(|l| l.mu).collect();
    let gaps: Vec<f64> = mus.iter().map(|m| m - 1.0).collect();
    let shrink: Vec<f64> = gaps.windows(2).map(|w| w[0] / w[1]).collect();
    let last = *mus.last().unwrap();
    Ok(ensure(
        non_increasing(&mus, 0.0) && last > 1.0 && last <= 1.15 && shrink.iter().all(|&s| s >= 1.5),
        format!("trace {} gap shrink factors {}", fmt(&mus), fmt(&shrink)),
    ))
}

/// Sector oracles (π/θ)².
fn criterion_2() -> Result<Outcome> {
    let mut ok = true;
    let mut detail = Vec::new();
    for theta in [0.5 * PI, PI, 1.5 * PI] {
        let oracle = sector_hardy_constant(theta)?;
        let p = QuotientProblem::new(DomainSpec::sector(theta, 0.5), 0.0, MeshParams::new(0.12, 2.0, 3));
        let mus: Vec<f64> = compute_mu(&p)?.trace.iter().map(|l| l.mu).collect();
        let last = *mus.last().unwrap();
        let rel = (last - oracle) / oracle;
        ok &= mus.windows(2).all(|w| w[1] < w[0]) && mus.iter().all(|&m| m >= oracle - 1e-6) && rel <= 0.10;
        detail.push(format!("θ={theta:.4}: {} vs {oracle:.5} (gap {:.2}%)", fmt(&mus), 100.0 * rel));
    }
    Ok(ensure(ok, detail.join("; ")))
}

/// Finite-difference order of the barrier identities.
fn criterion_3() -> Result<Outcome> {
    let mut worst = f64::INFINITY;
    for a in [-0.99, -0.9, -0.75, -0.6, -0.51] {
        for k in [0.0, 1.0] {
            worst = worst.min(residual_order_study(a, k, 20, 0.004)?.min_order);
        }
    }
    Ok(ensure(worst >= 1.9, format!("smallest observed order {worst:.4} over 10 (a, K) pairs × 20 points")))
}

/// Barrier sign condition on the interior sphere chart.
fn criterion_4() -> Result<Outcome> {
    let chart = FermiChart::interior2();
    let op = OperatorSpec::plain(1.0);
    let radii = [0.4, 0.2, 0.1, 0.05];
    let mut admissible = Vec::new();
    for r in radii {
        let mut all = true;
        for a in [-0.99, -0.9, -0.75, -0.6, -0.51] {
            all &= barrier_sign_scan(&BarrierParams::new(a, 1.0, 2)?, &op, &chart, r, 64)?.admissible;
        }
        admissible.push(all);
    }
    let from = (0..radii.len()).find(|&i| admissible[i..].iter().all(|&b| b)).map(|i| radii[i]);
    Ok(ensure(from.is_some(), format!("all a admissible per r {radii:?}: {admissible:?}; from r = {from:?}")))
}

/// Improved Hardy remainder constants.
fn criterion_5() -> Result<Outcome> {
    let solver = SolverParams::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for r in [0.1, 0.05] {
        let res = improved_hardy_constant(r, true, ChartKind::SphereExterior, &MeshParams::new(0.2 * r, 2.0, 4), &solver)?;
        let c: Vec<f64> = res.levels.iter().map(|l| l.c_h).collect();
        let n = c.len();
        let change = (c[n - 1] - c[n - 2]).abs() / c[n - 2].abs();
        ok &= c.iter().all(|&v| v > 0.0) && change < 0.10;
        detail.push(format!("r={r}: {} (last change {:.1}%)", fmt(&c), 100.0 * change));
    }
    let plane = improved_hardy_constant(0.1, false, ChartKind::Plane, &MeshParams::new(0.02, 2.0, 4), &solver)?;
    let c: Vec<f64> = plane.levels.iter().map(|l| l.c_h).collect();
    ok &= c.iter().all(|&v| v > 0.0);
    detail.push(format!("half_disk(0.1) without distance term: {}", fmt(&c)));
    Ok(ensure(ok, detail.join("; ")))
}

/// Monotonicity in λ, λ*_h stabilization, vanishing μ at λ₁^h.
fn criterion_6() -> Result<Outcome> {
    let mut ok = true;
    let mut detail = Vec::new();
    for lv in 0..3 {
        let p = QuotientProblem::new(DomainSpec::half_disk(0.5), 0.0, MeshParams::new(0.12, 2.0, lv));
        let s = mu_sweep(&p, &[-10.0, 0.0, 10.0, 20.0, 40.0])?;
        ok &= s.strictly_decreasing();
    }
    detail.push(format!("sweeps strictly decreasing: {ok}"));
    let p = QuotientProblem::new(DomainSpec::half_disk(0.5), 0.0, MeshParams::new(0.12, 2.0, 3));
    let ls = lambda_star(&p, (0.0, 10.0), 0.02, 1e-3)?.estimates();
    let diffs: Vec<f64> = ls.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let shrinking = diffs.windows(2).all(|w| w[1] < w[0]);
    ok &= shrinking;
    detail.push(format!("λ*_h {} differences {}", fmt(&ls), fmt(&diffs)));
    let d = Discretization::new(&p, problem_mesh(&p)?)?;
    let l1 = d.lambda_one(&p.solver)?;
    let mu = d.solve(l1, &p.solver, None)?.value;
    ok &= mu <= 1e-8;
    detail.push(format!("μ^h(λ₁^h = {l1:.4}) = {mu:.2e}"));
    Ok(ensure(ok, detail.join("; ")))
}

/// Transition in the exterior-cap family. Meshes for different r are not
/// nested, so plateau values carry ~1e-4 of mesh noise at two refinements;
/// three keep it below the plateau trend.
fn criterion_7() -> Result<Outcome> {
    let t = exterior_transition(&[0.3, 0.8, 2.0, 5.0, 12.0], 1.0, 0.0, 0.125, 1.0, 3, 0.02, &SolverParams::default())?;
    let mus = t.sweep.mus();
    let ok = non_increasing(&mus, 0.0) && mus[0] >= 0.98 && *mus.last().unwrap() < 0.98 && t.bracket.is_some();
    Ok(ensure(ok, format!("μ {} bracket {:?}", fmt(&mus), t.bracket)))
}

/// Weighted reduction and the weighted plateau.
fn criterion_8() -> Result<Outcome> {
    let p = QuotientProblem::new(DomainSpec::half_disk(0.5), 0.0, MeshParams::new(0.12, 2.0, 1));
    let mesh = problem_mesh(&p)?;
    let pairs = [
        (stiffness(&mesh, &ScalarField::one())?, stiffness(&mesh, &ScalarField::constant(1.0))?),
        (mass(&mesh, &WeightKind::InvR2)?, mass(&mesh, &WeightKind::Field { field: ScalarField::one(), inv_r2: true })?),
        (mass(&mesh, &WeightKind::One)?, mass(&mesh, &WeightKind::Field { field: ScalarField::r2(), inv_r2: true })?),
    ];
    let mut diff: f64 = 0.0;
    for (a, b) in &pairs {
        diff = diff.max(a.add_scaled(b, -1.0)?.max_abs());
    }
    let eps = 0.02;
    let mut w = QuotientProblem::new(DomainSpec::half_disk(0.5), 0.0, MeshParams::new(0.12, 2.0, 3));
    w.p = ScalarField::one_plus_r2();
    let lambdas = [-20.0, -10.0, 0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0];
    let s = mu_sweep(&w, &lambdas)?;
    let mus = s.mus();
    let on: Vec<bool> = mus.iter().map(|&m| m >= 1.0 - eps).collect();
    let k = on.iter().take_while(|&&b| b).count();
    let shape = k > 0 && k < mus.len() && on[k..].iter().all(|&b| !b) && s.strictly_decreasing();
    let level_ok = mus[..k].iter().all(|&m| (m - 1.0).abs() <= eps);
    Ok(ensure(
        diff < 1e-12 && shape && level_ok,
        format!("max entry difference {diff:.1e}; p=1+|x|² sweep over {lambdas:?}: {} ({k} plateau points)", fmt(&mus)),
    ))
}

fn random_pencil(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![vec![0.0; n]; n];
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = rng.random_range(-1.0..1.0);
        }
        for j in 0..=i {
            let v: f64 = rng.random_range(-1.0..1.0);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    let b = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| g[k][i] * g[k][j]).sum::<f64>() / n as f64 + if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    (a, b)
}

/// Iterative solver against the dense oracle.
fn criterion_9() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (a, b) = random_pencil(1000 + seed, 50);
        let dense = dense_gen_eig(&a, &b)?[0];
        let it = min_gen_eig(&SparseSymMatrix::from_dense(&a)?, &SparseSymMatrix::from_dense(&b)?, 1e-11, None)?;
        worst = worst.max((it.value - dense).abs());
    }
    let mut sizes = Vec::new();
    for (h, beta) in [(0.12, 2.0), (0.12, 1.0), (0.1, 1.0)] {
        let mesh = generate(&DomainSpec::half_disk(0.5), h, beta)?;
        let a = stiffness(&mesh, &ScalarField::one())?;
        let b = mass(&mesh, &WeightKind::InvR2)?;
        if a.n() > 400 {
            return Ok(Err(format!("h = {h}, beta = {beta} gives n = {} > 400", a.n())));
        }
        sizes.push(a.n());
        for lambda in [0.0, 40.0] {
            let op = a.add_scaled(&mass(&mesh, &WeightKind::One)?, -lambda)?;
            let dense = dense_gen_eig(&op.to_dense(), &b.to_dense())?[0];
            let it = min_gen_eig(&op, &b, 1e-11, None)?;
            worst = worst.max((it.value - dense).abs());
        }
    }
    Ok(ensure(worst <= 1e-8, format!("max |iterative − dense| = {worst:.2e} (half-disk sizes {sizes:?})")))
}

/// Concentration of the minimizer near the origin.
fn criterion_10() -> Result<Outcome> {
    let p = QuotientProblem::new(DomainSpec::half_disk(0.5), 0.0, MeshParams::new(0.12, 2.0, 0));
    let mut mesh = problem_mesh(&p)?;
    let (mut at0, mut attained, mut mus) = (Vec::new(), Vec::new(), Vec::new());
    for level in 0..4 {
        if level > 0 {
            mesh = refine(&mesh)?;
        }
        let d = Discretization::new(&p, mesh.clone())?;
        let e0 = d.solve(0.0, &p.solver, None)?;
        at0.push(concentration_ratio(&e0.vector, &mesh, &p.q, 0.05)?);
        let l1 = d.lambda_one(&p.solver)?;
        let e1 = d.solve(l1 - 5.0, &p.solver, None)?;
        mus.push(e1.value);
        attained.push(concentration_ratio(&e1.vector, &mesh, &p.q, 0.05)?);
    }
    let increasing = at0.windows(2).all(|w| w[1] > w[0]);
    let (lo, hi) = attained.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let variation = hi / lo - 1.0;
    let regime = mus.iter().all(|&m| m < 1.0 - 0.02);
    Ok(ensure(
        increasing && variation < 0.10 && regime,
        format!(
            "λ=0: {}; λ=λ₁^h−5 (μ^h {}): {} variation {:.1}%",
            fmt(&at0),
            fmt(&mus),
            fmt(&attained),
            100.0 * variation
        ),
    ))
}

fn main() {
    let criteria: [(usize, fn() -> Result<Outcome>); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    // `cargo test -- --list` and filters are not meaningful for this target.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failed = 0;
    for (n, f) in criteria {
        let t = Instant::now();
        let (status, detail) = match f() {
            Ok(Ok(d)) => ("PASS", d),
            Ok(Err(d)) => ("FAIL", d),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {n:>2}: {status} ({:.1} s) {detail}", t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
