//! Self-check suites run by `hardylab verify`.

use std::f64::consts::PI;

use anyhow::Result;
use hardylab::assembly::{element_mass, element_stiffness, mass, stiffness, stiffness_full};
use hardylab::closedform::{residual_order_study, sample_points};
use hardylab::{
    dense_gen_eig, generate, min_gen_eig, ChartKind, DomainSpec, FermiChart, ScalarField, SparseSymMatrix, WeightKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Barriers,
    Charts,
    Assembly,
    Eigensolver,
    All,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(suite: &'static str, name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check { suite, name: name.into(), passed, detail }
}

pub const BARRIER_A: [f64; 5] = [-0.99, -0.9, -0.75, -0.6, -0.51];

pub fn barriers() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for a in BARRIER_A {
        for k in [0.0, 1.0] {
            let s = residual_order_study(a, k, 20, 0.004)?;
            out.push(check(
                "barriers",
                format!("fd residual order a={a} K={k}"),
                s.min_order >= 1.9,
                format!("min order {:.4}, max relative residual {:.3e}", s.min_order, s.max_rel_residual),
            ));
        }
    }
    Ok(out)
}

pub fn charts() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let ys: Vec<[f64; 2]> = sample_points(40).into_iter().map(|y| [0.75 * y[0], 0.75 * y[1]]).collect();
    for kind in [ChartKind::Plane, ChartKind::SphereExterior, ChartKind::SphereInterior] {
        let c = FermiChart::new(kind, 2)?;
        let mut worst: f64 = 0.0;
        let mut curv: f64 = 0.0;
        let mut origin = c.forward2([0.0, 0.0])? == [0.0, 0.0];
        for &y in &ys {
            let x = c.forward2(y)?;
            let back = c.inverse2(x)?;
            let r = y[0].hypot(y[1]);
            worst = worst.max((back[0] - y[0]).hypot(back[1] - y[1]) / (r * f64::EPSILON));
            // Δd against the five-point stencil
            let h = 1e-4;
            let d = |z: [f64; 2]| c.signed_distance(&z);
            let lap = (d([x[0] + h, x[1]]) + d([x[0] - h, x[1]]) + d([x[0], x[1] + h]) + d([x[0], x[1] - h]) - 4.0 * d(x))
                / (h * h);
            curv = curv.max((lap - c.mean_curvature_term(&x)?).abs());
            let fx = c.forward2(y)?;
            origin &= (fx[0].hypot(fx[1]) - r).abs() <= r * r + 1e-15;
        }
        out.push(check(
            "charts",
            format!("{kind:?} round trip"),
            worst <= 10.0,
            format!("max |F⁻¹(F(y)) − y| = {worst:.2} ε|y|"),
        ));
        out.push(check("charts", format!("{kind:?} curvature term"), curv < 1e-5, format!("max |Δd − h_M| = {curv:.2e}")));
        out.push(check("charts", format!("{kind:?} |F(y)| = |y| + O(|y|²)"), origin, "bound |y|² checked".into()));
    }
    Ok(out)
}

fn max_entry_diff(a: &SparseSymMatrix, b: &SparseSymMatrix) -> Result<f64> {
    Ok(a.add_scaled(b, -1.0)?.max_abs())
}

pub fn assembly() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let unit = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let k = element_stiffness(unit, &ScalarField::one())?;
    let kref = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    let m = element_mass(unit, &WeightKind::One, [0.0; 3])?;
    let mut ek: f64 = 0.0;
    let mut em: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            ek = ek.max((k[i][j] - kref[i][j]).abs());
            em = em.max((m[i][j] - if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 }).abs());
        }
    }
    out.push(check("assembly", "unit triangle stiffness", ek < 1e-15, format!("max error {ek:.1e}")));
    out.push(check("assembly", "unit triangle mass", em < 1e-15, format!("max error {em:.1e}")));

    let mesh = generate(&DomainSpec::half_disk(0.5), 0.12, 2.0)?;
    let a = stiffness(&mesh, &ScalarField::one())?;
    let b = mass(&mesh, &WeightKind::InvR2)?;
    let sym = a.symmetry_error().max(b.symmetry_error());
    out.push(check("assembly", "assembled matrices symmetric", sym == 0.0, format!("max asymmetry {sym:.1e}")));
    let full = stiffness_full(&mesh, &ScalarField::one())?;
    let rows = full.matvec(&vec![1.0; full.n()]).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.push(check("assembly", "stiffness annihilates constants", rows < 1e-12, format!("max row sum {rows:.1e}")));

    let plain = [a.clone(), b.clone(), mass(&mesh, &WeightKind::One)?];
    let weighted = [
        stiffness(&mesh, &ScalarField::constant(1.0))?,
        mass(&mesh, &WeightKind::Field { field: ScalarField::one(), inv_r2: true })?,
        mass(&mesh, &WeightKind::Field { field: ScalarField::r2(), inv_r2: true })?,
    ];
    let mut diff: f64 = 0.0;
    for (p, w) in plain.iter().zip(&weighted) {
        diff = diff.max(max_entry_diff(p, w)?);
    }
    out.push(check(
        "assembly",
        "p=q=1, η=|x|² reduces to the plain forms",
        diff < 1e-12,
        format!("max entry difference {diff:.1e}"),
    ));
    // ∫|x|⁻² φ_i φ_j is bounded by a one-dimensional Hardy inequality, so the
    // form is finite and positive on the free vertices.
    let dmin = b.diagonal().into_iter().fold(f64::INFINITY, f64::min);
    out.push(check("assembly", "singular mass positive", dmin > 0.0, format!("min diagonal {dmin:.3e}")));
    Ok(out)
}

/// Random symmetric `A` and SPD `B` of size `n`.
pub fn random_pencil(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![vec![0.0; n]; n];
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = rng.random_range(-1.0..1.0);
        }
        for j in 0..=i {
            let v = rng.random_range(-1.0..1.0);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            b[i][j] = (0..n).map(|k| g[k][i] * g[k][j]).sum::<f64>() / n as f64;
        }
        b[i][i] += 1.0;
    }
    (a, b)
}

pub fn eigensolver() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for seed in 0..10u64 {
        let (a, b) = random_pencil(seed, 50);
        let dense = dense_gen_eig(&a, &b)?[0];
        let it = min_gen_eig(&SparseSymMatrix::from_dense(&a)?, &SparseSymMatrix::from_dense(&b)?, 1e-11, None)?;
        let err = (it.value - dense).abs() / dense.abs().max(1.0);
        out.push(check(
            "eigensolver",
            format!("random pencil seed {seed}"),
            it.converged && err < 1e-8,
            format!("iterative {:.12} dense {dense:.12} ({} iterations)", it.value, it.iterations),
        ));
    }
    for (name, domain) in [("half_disk(0.5)", DomainSpec::half_disk(0.5)), ("sector(π/2, 0.5)", DomainSpec::sector(0.5 * PI, 0.5))] {
        let mesh = generate(&domain, 0.12, 2.0)?;
        let a = stiffness(&mesh, &ScalarField::one())?;
        let b = mass(&mesh, &WeightKind::InvR2)?;
        let dense = dense_gen_eig(&a.to_dense(), &b.to_dense())?[0];
        let it = min_gen_eig(&a, &b, 1e-11, None)?;
        let err = (it.value - dense).abs() / dense.abs().max(1.0);
        out.push(check(
            "eigensolver",
            format!("assembled {name}, n = {}", a.n()),
            it.converged && err < 1e-8 && a.n() <= 400,
            format!("iterative {:.12} dense {dense:.12}", it.value),
        ));
    }
    Ok(out)
}

pub fn run(suite: Suite) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Barriers | Suite::All) {
        out.extend(barriers()?);
    }
    if matches!(suite, Suite::Charts | Suite::All) {
        out.extend(charts()?);
    }
    if matches!(suite, Suite::Assembly | Suite::All) {
        out.extend(assembly()?);
    }
    if matches!(suite, Suite::Eigensolver | Suite::All) {
        out.extend(eigensolver()?);
    }
    Ok(out)
}
