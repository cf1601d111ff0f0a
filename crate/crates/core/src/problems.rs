//! The named quantities: `μ_λ(Ω)`, its λ-sweeps, the threshold `λ*`, the
//! improved Hardy remainder, the exterior-domain transition and the
//! concentration diagnostic.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{element_mass_outside_disk, mass, stiffness, WeightKind};
use crate::error::{invalid, Error, Result};
use crate::field::ScalarField;
use crate::geometry::{ChartKind, DomainSpec, FermiChart};
use crate::linalg::{min_gen_eig_with, Cholesky, EigOptions, EigenResult, EIG_TOL};
use crate::mesh::{generate_with, mesh_quality, refine_with_parents, MeshOptions, TriMesh};
use crate::quadrature::gauss_legendre;
use crate::sparse::{DofMap, SparseSymMatrix};

/// Width of the band `μ ≥ N²/4 − ε` that counts as the plateau.
pub const EPS_DETECT: f64 = 0.02;
/// Slack allowed when checking that refinement does not raise `μ^h`.
pub const MONOTONE_SLACK: f64 = 1e-10;

fn default_beta() -> f64 {
    2.0
}

fn default_dim() -> usize {
    2
}

fn default_tol() -> f64 {
    EIG_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshParams {
    pub h: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub refinements: usize,
    /// Innermost ring radius; defaults to a fixed fraction of the extent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_step: Option<f64>,
}

impl MeshParams {
    pub fn new(h: f64, beta: f64, refinements: usize) -> Self {
        Self { h, beta, refinements, floor: None, core_step: None }
    }

    pub fn options(&self) -> MeshOptions {
        let mut o = MeshOptions::new(self.h, self.beta);
        o.floor = self.floor;
        if let Some(k) = self.core_step {
            o.core_step = k;
        }
        o
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { tol: EIG_TOL, max_iter: None }
    }
}

/// `J_λ(u) = (∫p|∇u|² − λ∫|x|⁻²η u²) / ∫|x|⁻²q u²` on `H¹₀(Ω)`.
///
/// The default `η = |x|²` turns the λ-term into the plain `λ∫u²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotientProblem {
    pub domain: DomainSpec,
    #[serde(default = "default_dim")]
    pub n: usize,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "ScalarField::one")]
    pub p: ScalarField,
    #[serde(default = "ScalarField::one")]
    pub q: ScalarField,
    #[serde(default = "ScalarField::r2")]
    pub eta: ScalarField,
    pub mesh: MeshParams,
    #[serde(default)]
    pub solver: SolverParams,
}

impl QuotientProblem {
    pub fn new(domain: DomainSpec, lambda: f64, mesh: MeshParams) -> Self {
        Self {
            domain,
            n: 2,
            lambda,
            p: ScalarField::one(),
            q: ScalarField::one(),
            eta: ScalarField::r2(),
            mesh,
            solver: SolverParams::default(),
        }
    }

    /// `N²/4`.
    pub fn hardy_level(&self) -> f64 {
        0.25 * (self.n * self.n) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 2 {
            return invalid(format!("meshed problems are planar (N = 2), got N = {}", self.n));
        }
        if !self.lambda.is_finite() {
            return invalid("lambda must be finite");
        }
        self.domain.validate()?;
        if self.eta.eval([0.0, 0.0]).abs() > 1e-8 {
            return invalid(format!("eta must vanish at the origin, eta(0) = {}", self.eta.eval([0.0, 0.0])));
        }
        if !(self.solver.tol > 0.0) {
            return invalid("solver tolerance must be positive");
        }
        Ok(())
    }

    /// The §6 threshold semantics need `p(0) = q(0)`.
    pub fn p_matches_q_at_origin(&self) -> bool {
        (self.p.eval([0.0, 0.0]) - self.q.eval([0.0, 0.0])).abs() <= 1e-12
    }

    fn check_fields_on(&self, mesh: &TriMesh) -> Result<()> {
        for v in &mesh.vertices {
            let (p, q, e) = (self.p.eval(*v), self.q.eval(*v), self.eta.eval(*v));
            if !(p > 0.0) || !(q > 0.0) {
                return Err(Error::NonPositiveWeight { value: p.min(q), x: v[0], y: v[1] });
            }
            if e < 0.0 {
                return Err(Error::NonPositiveWeight { value: e, x: v[0], y: v[1] });
            }
        }
        Ok(())
    }
}

/// Assembled forms of a problem on one mesh.
pub struct Discretization {
    pub mesh: TriMesh,
    pub dofs: DofMap,
    /// `∫p∇u·∇v`
    pub a_p: SparseSymMatrix,
    /// `∫η|x|⁻²uv`
    pub m_eta: SparseSymMatrix,
    /// `∫q|x|⁻²uv`
    pub b_q: SparseSymMatrix,
    factor: Cholesky,
}

impl Discretization {
    pub fn new(problem: &QuotientProblem, mesh: TriMesh) -> Result<Self> {
        problem.check_fields_on(&mesh)?;
        let a_p = stiffness(&mesh, &problem.p)?;
        let m_eta = mass(&mesh, &WeightKind::Field { field: problem.eta, inv_r2: true })?;
        let b_q = mass(&mesh, &WeightKind::Field { field: problem.q, inv_r2: true })?;
        let factor = Cholesky::factor(&a_p.add_scaled(&b_q, 1.0)?)?;
        Ok(Self { dofs: DofMap::new(&mesh), mesh, a_p, m_eta, b_q, factor })
    }

    pub fn operator(&self, lambda: f64) -> Result<SparseSymMatrix> {
        if lambda == 0.0 {
            Ok(self.a_p.clone())
        } else {
            self.a_p.add_scaled(&self.m_eta, -lambda)
        }
    }

    /// Minimal eigenpair of `(A_p − λM_η) u = μ B_q u`.
    pub fn solve(&self, lambda: f64, solver: &SolverParams, x0: Option<&[f64]>) -> Result<EigenResult> {
        let a = self.operator(lambda)?;
        let r = min_gen_eig_with(
            &a,
            &self.b_q,
            &EigOptions { tol: Some(solver.tol), max_iter: solver.max_iter, x0, precond: None, factor: Some(&self.factor) },
        )?;
        if !r.converged {
            return Err(Error::NotConverged { iterations: r.iterations, residual: r.residual });
        }
        Ok(r)
    }

    /// `min ∫p|∇u|² / ∫η|x|⁻²u²`, the λ at which `μ^h` reaches zero.
    pub fn lambda_one(&self, solver: &SolverParams) -> Result<f64> {
        let r = min_gen_eig_with(
            &self.a_p,
            &self.m_eta,
            &EigOptions { tol: Some(solver.tol), max_iter: solver.max_iter, ..Default::default() },
        )?;
        if !r.converged {
            return Err(Error::NotConverged { iterations: r.iterations, residual: r.residual });
        }
        Ok(r.value)
    }
}

/// Level-0 mesh of a problem followed by its refinement chain; each step
/// yields the mesh and, after the first, the parent pairs of new vertices.
fn mesh_chain(domain: &DomainSpec, params: &MeshParams) -> Result<Vec<(TriMesh, Vec<[usize; 2]>)>> {
    let mut out = vec![(generate_with(domain, &params.options())?, Vec::new())];
    for _ in 0..params.refinements {
        let (m, parents) = refine_with_parents(&out.last().unwrap().0)?;
        out.push((m, parents));
    }
    Ok(out)
}

/// Interpolates a reduced vector on `coarse` to the refined mesh.
fn prolong(coarse: &DofMap, fine: &DofMap, n_coarse_vertices: usize, parents: &[[usize; 2]], u: &[f64]) -> Vec<f64> {
    let mut full = coarse.expand(u);
    full.resize(n_coarse_vertices, 0.0);
    for p in parents {
        full.push(0.5 * (full[p[0]] + full[p[1]]));
    }
    fine.restrict(&full)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: usize,
    pub mu: f64,
    pub residual: f64,
    pub iterations: usize,
    pub n_free: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub fingerprint: String,
}

impl LevelResult {
    fn new(level: usize, mesh: &TriMesh, e: &EigenResult) -> Self {
        let q = mesh_quality(mesh);
        Self {
            level,
            mu: e.value,
            residual: e.residual,
            iterations: e.iterations,
            n_free: mesh.n_free(),
            h_min: q.h_min,
            h_max: q.h_max,
            fingerprint: mesh.fingerprint(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MuResult {
    pub mu_h: f64,
    pub eigen: EigenResult,
    pub trace: Vec<LevelResult>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub mesh: Option<TriMesh>,
}

/// `μ^h_λ` along the refinement chain of the problem; each level starts from
/// the interpolated minimizer of the previous one.
pub fn compute_mu(problem: &QuotientProblem) -> Result<MuResult> {
    problem.validate()?;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut prev: Option<(DofMap, usize, Vec<f64>)> = None;
    let mut last = None;
    for (level, (mesh, parents)) in mesh_chain(&problem.domain, &problem.mesh)?.into_iter().enumerate() {
        let disc = Discretization::new(problem, mesh)?;
        let x0 = prev.as_ref().map(|(d, nv, u)| prolong(d, &disc.dofs, *nv, &parents, u));
        let e = disc.solve(problem.lambda, &problem.solver, x0.as_deref())?;
        let row = LevelResult::new(level, &disc.mesh, &e);
        if let Some(p) = trace.last() {
            let p: &LevelResult = p;
            if row.mu > p.mu + MONOTONE_SLACK * p.mu.abs().max(1.0) {
                warnings.push(format!(
                    "mu increased under refinement at level {level}: {} -> {} (quadrature inconsistency?)",
                    p.mu, row.mu
                ));
            }
        }
        trace.push(row);
        prev = Some((disc.dofs.clone(), disc.mesh.n_vertices(), e.vector.clone()));
        last = Some((disc.mesh, e));
    }
    let (mesh, eigen) = last.expect("at least one level");
    Ok(MuResult { mu_h: eigen.value, eigen, trace, warnings, mesh: Some(mesh) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub mu: f64,
    pub residual: f64,
    pub iterations: usize,
    pub level: usize,
    pub n_free: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn mus(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mu).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mu < w[0].mu)
    }

    pub fn non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mu <= w[0].mu + MONOTONE_SLACK * w[0].mu.abs().max(1.0))
    }
}

fn check_ascending(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return invalid(format!("empty {what} list"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return invalid(format!("{what} values must be finite"));
    }
    if let Some(w) = values.windows(2).find(|w| w[1] <= w[0]) {
        return invalid(format!("{what} values must be strictly ascending without duplicates ({} then {})", w[0], w[1]));
    }
    Ok(())
}

/// Builds the finest mesh of the problem's refinement chain.
pub fn problem_mesh(problem: &QuotientProblem) -> Result<TriMesh> {
    let mut m = generate_with(&problem.domain, &problem.mesh.options())?;
    for _ in 0..problem.mesh.refinements {
        m = refine_with_parents(&m)?.0;
    }
    Ok(m)
}

/// `μ^h_λ` for each λ on the finest mesh of the problem.
pub fn mu_sweep(problem: &QuotientProblem, lambdas: &[f64]) -> Result<SweepResult> {
    problem.validate()?;
    check_ascending(lambdas, "lambda")?;
    let disc = Discretization::new(problem, problem_mesh(problem)?)?;
    sweep_on(&disc, problem, lambdas)
}

/// λ-sweep on an already assembled discretization.
pub fn sweep_on(disc: &Discretization, problem: &QuotientProblem, lambdas: &[f64]) -> Result<SweepResult> {
    check_ascending(lambdas, "lambda")?;
    let q = mesh_quality(&disc.mesh);
    let fp = disc.mesh.fingerprint();
    let solved: Vec<Result<EigenResult>> = lambdas.par_iter().map(|&l| disc.solve(l, &problem.solver, None)).collect();
    let mut rows = Vec::with_capacity(lambdas.len());
    for (l, e) in lambdas.iter().zip(solved) {
        let e = e?;
        rows.push(SweepRow {
            value: *l,
            mu: e.value,
            residual: e.residual,
            iterations: e.iterations,
            level: disc.mesh.level,
            n_free: disc.mesh.n_free(),
            h_min: q.h_min,
            h_max: q.h_max,
            fingerprint: fp.clone(),
        });
    }
    let mut res = SweepResult { axis: "lambda".into(), rows, warnings: Vec::new() };
    if !res.strictly_decreasing() {
        res.warnings.push("mu is not strictly decreasing in lambda on a fixed mesh".into());
    }
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaStarLevel {
    pub level: usize,
    pub lambda_star: f64,
    pub lo: f64,
    pub hi: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub lambda_one: f64,
    pub evaluations: usize,
    pub n_free: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaStarResult {
    pub eps_detect: f64,
    pub levels: Vec<LambdaStarLevel>,
}

impl LambdaStarResult {
    pub fn estimates(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.lambda_star).collect()
    }
}

/// `λ*_h = sup{λ : μ^h_λ ≥ N²/4 − ε}` by bisection, at every level of the
/// problem's refinement chain.
pub fn lambda_star(
    problem: &QuotientProblem,
    bracket: (f64, f64),
    eps_detect: f64,
    bisect_tol: f64,
) -> Result<LambdaStarResult> {
    problem.validate()?;
    if !(eps_detect > 0.0) {
        return invalid("eps_detect must be positive: the discrete quotient never sits exactly on N²/4");
    }
    if !(bisect_tol > 0.0) || !(bracket.0 < bracket.1) {
        return invalid("need bisect_tol > 0 and an increasing bracket");
    }
    let target = problem.hardy_level() - eps_detect;
    let mut levels = Vec::new();
    for (level, (mesh, _)) in mesh_chain(&problem.domain, &problem.mesh)?.into_iter().enumerate() {
        let disc = Discretization::new(problem, mesh)?;
        let lambda_one = disc.lambda_one(&problem.solver)?;
        let mut evals = 0usize;
        let mut last_vec: Option<Vec<f64>> = None;
        let mut eval = |l: f64, last: &mut Option<Vec<f64>>| -> Result<f64> {
            evals += 1;
            let e = disc.solve(l, &problem.solver, last.as_deref())?;
            *last = Some(e.vector);
            Ok(e.value)
        };
        let (mut lo, mut hi) = bracket;
        let mut mu_hi = eval(hi, &mut last_vec)?;
        if mu_hi >= target {
            // μ^h vanishes at λ₁^h, so λ₁^h always closes the bracket
            hi = lambda_one.max(lo + bisect_tol);
            mu_hi = eval(hi, &mut last_vec)?;
            let mut k = 0;
            while mu_hi >= target {
                k += 1;
                if k > 60 {
                    return Err(Error::NotConverged { iterations: k, residual: mu_hi - target });
                }
                hi += (hi - lo).abs().max(1.0);
                mu_hi = eval(hi, &mut last_vec)?;
            }
        }
        let mut mu_lo = eval(lo, &mut last_vec)?;
        let mut k = 0;
        while mu_lo < target {
            k += 1;
            if k > 60 {
                return Err(Error::InvalidInput(format!(
                    "no plateau found at level {level}: mu < N²/4 − {eps_detect} everywhere tested (mesh too coarse?)"
                )));
            }
            let step = (hi - lo).abs().max(1.0) * 2f64.powi(k);
            hi = lo;
            mu_hi = mu_lo;
            lo -= step;
            mu_lo = eval(lo, &mut last_vec)?;
        }
        while hi - lo > bisect_tol {
            let mid = 0.5 * (lo + hi);
            let m = eval(mid, &mut last_vec)?;
            if m >= target {
                lo = mid;
                mu_lo = m;
            } else {
                hi = mid;
                mu_hi = m;
            }
        }
        levels.push(LambdaStarLevel {
            level,
            lambda_star: 0.5 * (lo + hi),
            lo,
            hi,
            mu_lo,
            mu_hi,
            lambda_one,
            evaluations: evals,
            n_free: disc.mesh.n_free(),
        });
    }
    Ok(LambdaStarResult { eps_detect, levels })
}

/// Compactly supported test profiles on the half-plane `{z¹ > 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `z¹ (1 − |z − (½,0)|²/0.16)²₊`
    Bubble,
    /// `cosφ · sin²(π(log|z| + W)/W)` on `e^{−W} < |z| < 1`; flat quotient
    /// `1 + (4/3)(π/W)²` in the plane.
    LogBump { width: f64 },
}

impl Profile {
    /// Largest `|z|` of the support.
    pub fn support_radius(&self) -> f64 {
        match self {
            Self::Bubble => 0.9,
            Self::LogBump { .. } => 1.0,
        }
    }

    /// Quadrature nodes `(z, weight, u, ∇u)` covering the support.
    fn nodes(&self) -> Vec<([f64; 2], f64, f64, [f64; 2])> {
        let mut out = Vec::new();
        match *self {
            Self::Bubble => {
                let (c, rad) = ([0.5, 0.0], 0.4);
                let (xs, ws) = gauss_legendre(24);
                let na = 64;
                for (x, w) in xs.iter().zip(&ws) {
                    let t = 0.5 * rad * (x + 1.0);
                    for j in 0..na {
                        let th = 2.0 * PI * j as f64 / na as f64;
                        let z = [c[0] + t * th.cos(), c[1] + t * th.sin()];
                        let s = 1.0 - t * t / (rad * rad);
                        let u = z[0] * s * s;
                        // ∇[(1 − |z−c|²/ρ²)²] = −4s(z−c)/ρ²
                        let gs = [-4.0 * s * (z[0] - c[0]) / (rad * rad), -4.0 * s * (z[1] - c[1]) / (rad * rad)];
                        let g = [s * s + z[0] * gs[0], z[0] * gs[1]];
                        out.push((z, 0.5 * rad * w * t * 2.0 * PI / na as f64, u, g));
                    }
                }
            }
            Self::LogBump { width } => {
                let (xs, ws) = gauss_legendre(16);
                let panels = (width.ceil() as usize).max(1);
                let (xa, wa) = gauss_legendre(24);
                for p in 0..panels {
                    let len = width / panels as f64;
                    for (x, w) in xs.iter().zip(&ws) {
                        let s = -width + len * (p as f64 + 0.5 * (x + 1.0));
                        let rho = s.exp();
                        let arg = PI * (s + width) / width;
                        let f = arg.sin().powi(2);
                        let fp = PI / width * (2.0 * arg).sin();
                        for (y, v) in xa.iter().zip(&wa) {
                            let phi = 0.5 * PI * y;
                            let (sn, cs) = phi.sin_cos();
                            let z = [rho * cs, rho * sn];
                            let u = cs * f;
                            // radial and angular derivatives, converted to Cartesian
                            let ur = cs * fp / rho;
                            let uphi = -sn * f / rho;
                            let g = [ur * cs - uphi * sn, ur * sn + uphi * cs];
                            out.push((z, 0.5 * len * w * 0.5 * PI * v * rho * rho, u, g));
                        }
                    }
                }
            }
        }
        out
    }

    /// Quotient of the profile in the flat half-plane.
    pub fn flat_quotient(&self, lambda: f64) -> f64 {
        let (mut num, mut lam, mut den) = (0.0, 0.0, 0.0);
        for (z, w, u, g) in self.nodes() {
            let r2 = z[0] * z[0] + z[1] * z[1];
            num += w * (g[0] * g[0] + g[1] * g[1]);
            lam += w * u * u;
            den += w * u * u / r2;
        }
        (num - lambda * lam) / den
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub quotient: f64,
    pub flat_quotient: f64,
}

/// Quotient of `v = u(ε⁻¹F⁻¹(x))` for each `ε`, with `F` the chart of the
/// domain (the plane for a half-disk).
pub fn scaling_upper_bound(problem: &QuotientProblem, profile: &Profile, eps_list: &[f64]) -> Result<Vec<ScalingRow>> {
    problem.validate()?;
    let (chart, r) = match problem.domain {
        DomainSpec::HalfDisk { r } => (FermiChart::plane2(), r),
        DomainSpec::FermiHalfBall { chart, r } => (FermiChart::new(chart, 2)?, r),
        _ => return invalid("scaling profiles need a half-disk or a Fermi half-ball domain"),
    };
    if let Profile::LogBump { width } = profile {
        if !(*width > 0.0) {
            return invalid("log-bump width must be positive");
        }
    }
    let nodes = profile.nodes();
    let flat = profile.flat_quotient(problem.lambda);
    eps_list
        .iter()
        .map(|&eps| {
            if !(eps > 0.0) || eps * profile.support_radius() >= r {
                return Err(Error::Domain(format!("profile support of size {eps} escapes the domain of radius {r}")));
            }
            let (mut num, mut lam, mut den) = (0.0, 0.0, 0.0);
            for (z, w, u, g) in &nodes {
                let y = [eps * z[0], eps * z[1]];
                let x = chart.forward2(y)?;
                let j = chart.jacobian2(y);
                let det = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs();
                // ∇ₓv = J⁻ᵀ ∇_y v and ∇_y v = ε⁻¹∇u; ε² from dy = ε²dz cancels it in the numerator
                let inv = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
                let gx = [inv[0][0] * g[0] + inv[0][1] * g[1], inv[1][0] * g[0] + inv[1][1] * g[1]];
                let r2 = x[0] * x[0] + x[1] * x[1];
                num += w * det * problem.p.eval(x) * (gx[0] * gx[0] + gx[1] * gx[1]);
                lam += w * det * eps * eps * problem.eta.eval(x) / r2 * u * u;
                den += w * det * eps * eps * problem.q.eval(x) / r2 * u * u;
            }
            Ok(ScalingRow { eps, quotient: (num - problem.lambda * lam) / den, flat_quotient: flat })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyLevel {
    pub level: usize,
    pub c_h: f64,
    pub residual: f64,
    pub n_free: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyResult {
    pub domain: DomainSpec,
    pub include_distance_term: bool,
    pub levels: Vec<HardyLevel>,
}

impl HardyResult {
    pub fn c_h(&self) -> f64 {
        self.levels.last().map_or(f64::NAN, |l| l.c_h)
    }
}

/// Best constant `c_h` in
/// `∫|∇u|² − (N²/4)∫|x|⁻²u² − [flag](N−1)∫u²/d ≥ c ∫|x|⁻²|log|x||⁻²u²`
/// on `F(B_r⁺)` (or `B_r⁺` for the plane chart), per refinement level.
pub fn improved_hardy_constant(
    r: f64,
    include_distance_term: bool,
    chart: ChartKind,
    mesh: &MeshParams,
    solver: &SolverParams,
) -> Result<HardyResult> {
    let domain = match chart {
        ChartKind::Plane => DomainSpec::half_disk(r),
        c => DomainSpec::fermi_half_ball(c, r),
    };
    domain.validate()?;
    if domain.extent() >= 1.0 {
        return invalid(format!("the log weight needs extent < 1, {} has {}", domain.name(), domain.extent()));
    }
    let fchart = FermiChart::new(chart, 2)?;
    // The log-weighted remainder amplifies the discretization error of the
    // Hardy part by log²|x|, so a shallow floor at h² converges far faster
    // under refinement than the deep default used for plain quotients.
    let mut mesh = mesh.clone();
    mesh.floor.get_or_insert(mesh.h * mesh.h);
    let mut levels = Vec::new();
    let mut prev: Option<(DofMap, usize, Vec<f64>)> = None;
    for (level, (m, parents)) in mesh_chain(&domain, &mesh)?.into_iter().enumerate() {
        let k = stiffness(&m, &ScalarField::one())?;
        let b = mass(&m, &WeightKind::InvR2)?;
        let mut a = k.add_scaled(&b, -1.0)?;
        if include_distance_term {
            a = a.add_scaled(&mass(&m, &WeightKind::InvDist { chart: fchart })?, -1.0)?;
        }
        let mlog = mass(&m, &WeightKind::InvR2Log2)?;
        let pre = k.add_scaled(&b, 1.0)?;
        let dofs = DofMap::new(&m);
        let x0 = prev.as_ref().map(|(d, nv, u)| prolong(d, &dofs, *nv, &parents, u));
        let e = min_gen_eig_with(
            &a,
            &mlog,
            &EigOptions {
                tol: Some(solver.tol),
                max_iter: solver.max_iter,
                x0: x0.as_deref(),
                precond: Some(&pre),
                factor: None,
            },
        )?;
        if !e.converged {
            return Err(Error::NotConverged { iterations: e.iterations, residual: e.residual });
        }
        levels.push(HardyLevel { level, c_h: e.value, residual: e.residual, n_free: m.n_free() });
        prev = Some((dofs, m.n_vertices(), e.vector));
    }
    Ok(HardyResult { domain, include_distance_term, levels })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub sweep: SweepResult,
    pub eps_detect: f64,
    /// Largest tested `r` still on the plateau.
    pub r_hat: Option<f64>,
    /// `[r̂, next r]` when the plateau is left within the list.
    pub bracket: Option<(f64, f64)>,
}

/// `μ₀^h(Ω_r)` of the exterior caps `Ω_r = B_r(0) \ B̄_a(−aE₁)`; the mesh size
/// of each cap is `h_rel·r`.
#[allow(clippy::too_many_arguments)]
pub fn exterior_transition(
    r_list: &[f64],
    hole_radius: f64,
    lambda: f64,
    h_rel: f64,
    beta: f64,
    refinements: usize,
    eps_detect: f64,
    solver: &SolverParams,
) -> Result<TransitionResult> {
    check_ascending(r_list, "radius")?;
    if !(eps_detect > 0.0) {
        return invalid("eps_detect must be positive");
    }
    let solved: Vec<Result<MuResult>> = r_list
        .par_iter()
        .map(|&r| {
            let mut p = QuotientProblem::new(
                DomainSpec::ExteriorCap { r, hole_radius },
                lambda,
                MeshParams::new(h_rel * r, beta, refinements),
            );
            p.solver = solver.clone();
            compute_mu(&p)
        })
        .collect();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (r, res) in r_list.iter().zip(solved) {
        let res = res?;
        let last = res.trace.last().unwrap();
        warnings.extend(res.warnings.iter().map(|w| format!("r = {r}: {w}")));
        rows.push(SweepRow {
            value: *r,
            mu: res.mu_h,
            residual: last.residual,
            iterations: last.iterations,
            level: last.level,
            n_free: last.n_free,
            h_min: last.h_min,
            h_max: last.h_max,
            fingerprint: last.fingerprint.clone(),
        });
    }
    let sweep = SweepResult { axis: "r".into(), rows, warnings };
    let level = 1.0 - eps_detect;
    let mut r_hat = None;
    let mut bracket = None;
    for (i, row) in sweep.rows.iter().enumerate() {
        if row.mu >= level {
            r_hat = Some(row.value);
            bracket = sweep.rows.get(i + 1).map(|n| (row.value, n.value));
        } else {
            break;
        }
    }
    Ok(TransitionResult { sweep, eps_detect, r_hat, bracket })
}

/// Share of the weighted mass `∫q|x|⁻²u²` of `u` inside `|x| < ρ`.
///
/// The part outside the disk carries no singularity, so it is integrated
/// (with the circle resolved inside cut elements) and subtracted from the
/// full form.
pub fn concentration_ratio(u: &[f64], mesh: &TriMesh, q: &ScalarField, rho: f64) -> Result<f64> {
    let ext = mesh.extent();
    if !(rho > 0.0 && rho <= ext) {
        return Err(Error::Domain(format!("rho = {rho} must lie in (0, {ext}]")));
    }
    let dofs = DofMap::new(mesh);
    if u.len() != dofs.len() {
        return invalid(format!("vector has length {}, mesh has {} free vertices", u.len(), dofs.len()));
    }
    let (w, scale) = WeightKind::Field { field: *q, inv_r2: true }.canonical();
    let total = scale * mass(mesh, &w)?.quad_form(u);
    let full = dofs.expand(u);
    let parts: Vec<Result<f64>> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let ids = mesh.triangles[t];
            if ids.iter().all(|&v| full[v] == 0.0) {
                return Ok(0.0);
            }
            let m = element_mass_outside_disk(mesh.corners(t), &w, rho)?;
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    s += full[ids[a]] * m[a][b] * full[ids[b]];
                }
            }
            Ok(s)
        })
        .collect();
    let mut outside = 0.0;
    for p in parts {
        outside += p?;
    }
    Ok(1.0 - scale * outside / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_bump_flat_quotient_matches_closed_form() {
        for w in [6.0, 20.0] {
            let q = Profile::LogBump { width: w }.flat_quotient(0.0);
            let exact = 1.0 + 4.0 / 3.0 * (PI / w).powi(2);
            assert!((q - exact).abs() < 1e-8, "width {w}: {q} vs {exact}");
        }
        assert!(Profile::Bubble.flat_quotient(0.0) > 1.0);
    }

    #[test]
    fn sweep_lists_must_ascend() {
        assert!(check_ascending(&[0.0, 0.0], "lambda").is_err());
        assert!(check_ascending(&[1.0, 0.0], "lambda").is_err());
        assert!(check_ascending(&[-10.0, 0.0, 10.0], "lambda").is_ok());
    }
}
