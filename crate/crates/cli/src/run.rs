//! Dispatch of a [`RunConfig`] to the numerical operations.

use anyhow::Result;
use hardylab::closedform::{barrier_sign_scan, BarrierParams, OperatorSpec};
use hardylab::problems::{
    exterior_transition, improved_hardy_constant, lambda_star, problem_mesh, scaling_upper_bound, SweepResult,
};
use hardylab::{compute_mu, mesh_quality, mu_sweep, refine, FermiChart, MeshParams, ScalarField};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{RunConfig, Task};

/// Tabular output plus the structured result for the manifest.
#[derive(Debug)]
pub struct RunOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub result: Value,
    pub warnings: Vec<String>,
}

impl RunOutput {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), result: Value::Null, warnings: Vec::new() }
    }

    /// Comma-separated, header row, LF line endings.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Shortest round-trip text; exponent form outside `[1e-4, 1e15)`.
fn f(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn sweep_rows(out: &mut RunOutput, s: &SweepResult) {
    for r in &s.rows {
        out.rows.push(vec![
            f(r.value),
            f(r.mu),
            f(r.residual),
            r.iterations.to_string(),
            r.level.to_string(),
            r.n_free.to_string(),
            f(r.h_min),
            f(r.h_max),
            r.fingerprint.clone(),
        ]);
    }
}

const SWEEP_TAIL: [&str; 8] = ["mu", "residual", "iterations", "level", "n_free", "h_min", "h_max", "mesh_fingerprint"];

fn sweep_columns(axis: &str) -> Vec<&str> {
    std::iter::once(axis).chain(SWEEP_TAIL).collect()
}

pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let problem = cfg.problem();
    let o = &cfg.options;
    Ok(match cfg.subcommand {
        Task::Mu => {
            let res = compute_mu(&problem)?;
            let mut out = RunOutput::new(&["level", "mu", "residual", "iterations", "n_free", "h_min", "h_max", "mesh_fingerprint"]);
            for l in &res.trace {
                out.rows.push(vec![
                    l.level.to_string(),
                    f(l.mu),
                    f(l.residual),
                    l.iterations.to_string(),
                    l.n_free.to_string(),
                    f(l.h_min),
                    f(l.h_max),
                    l.fingerprint.clone(),
                ]);
            }
            out.result = json!({ "mu_h": res.mu_h, "trace": res.trace, "converged": res.eigen.converged });
            out.warnings = res.warnings;
            out
        }
        Task::Sweep => {
            let s = mu_sweep(&problem, &cfg.sweep.lambda)?;
            let mut out = RunOutput::new(&sweep_columns("lambda"));
            sweep_rows(&mut out, &s);
            if !s.strictly_decreasing() {
                out.warnings.push("mu is not strictly decreasing in lambda on this mesh".into());
            }
            out.warnings.extend(s.warnings.iter().cloned());
            out.result = serde_json::to_value(&s)?;
            out
        }
        Task::LambdaStar => {
            let res = lambda_star(&problem, (o.bracket[0], o.bracket[1]), o.eps_detect, o.bisect_tol)?;
            let mut out = RunOutput::new(&[
                "level", "lambda_star", "lo", "hi", "mu_lo", "mu_hi", "lambda_one", "evaluations", "n_free",
            ]);
            for l in &res.levels {
                out.rows.push(vec![
                    l.level.to_string(),
                    f(l.lambda_star),
                    f(l.lo),
                    f(l.hi),
                    f(l.mu_lo),
                    f(l.mu_hi),
                    f(l.lambda_one),
                    l.evaluations.to_string(),
                    l.n_free.to_string(),
                ]);
            }
            out.result = serde_json::to_value(&res)?;
            out
        }
        Task::ScalingBound => {
            let rows = scaling_upper_bound(&problem, &o.profile, &cfg.sweep.eps)?;
            let mut out = RunOutput::new(&["eps", "lambda", "quotient", "flat_quotient"]);
            for r in &rows {
                out.rows.push(vec![f(r.eps), f(cfg.lambda), f(r.quotient), f(r.flat_quotient)]);
            }
            out.result = serde_json::to_value(&rows)?;
            out
        }
        Task::ImprovedHardy => {
            let runs = cfg
                .sweep
                .r
                .par_iter()
                .map(|&r| {
                    let mesh = MeshParams { h: o.h_rel * r, ..cfg.mesh.clone() };
                    improved_hardy_constant(r, o.distance_term, o.chart, &mesh, &cfg.solver)
                })
                .collect::<hardylab::Result<Vec<_>>>()?;
            let mut out = RunOutput::new(&["r", "level", "c_h", "residual", "n_free", "distance_term"]);
            for (r, h) in cfg.sweep.r.iter().zip(&runs) {
                for l in &h.levels {
                    out.rows.push(vec![
                        f(*r),
                        l.level.to_string(),
                        f(l.c_h),
                        f(l.residual),
                        l.n_free.to_string(),
                        o.distance_term.to_string(),
                    ]);
                }
                if h.c_h() <= 0.0 {
                    out.warnings.push(format!("c_h = {} is not positive at r = {r}", h.c_h()));
                }
            }
            out.result = serde_json::to_value(&runs)?;
            out
        }
        Task::ExteriorScan => {
            let t = exterior_transition(
                &cfg.sweep.r,
                o.hole_radius,
                cfg.lambda,
                o.h_rel,
                cfg.mesh.beta,
                cfg.mesh.refinements,
                o.eps_detect,
                &cfg.solver,
            )?;
            let mut out = RunOutput::new(&sweep_columns("r"));
            sweep_rows(&mut out, &t.sweep);
            out.warnings.extend(t.sweep.warnings.iter().cloned());
            out.result = serde_json::to_value(&t)?;
            out
        }
        Task::BarrierCheck => {
            let chart = FermiChart::new(o.chart, cfg.n)?;
            let plain = cfg.p == ScalarField::one() && cfg.q == ScalarField::one() && cfg.eta == ScalarField::r2();
            let op = if plain {
                OperatorSpec::plain(cfg.lambda)
            } else {
                OperatorSpec::weighted(cfg.lambda, cfg.p, cfg.q, cfg.eta)
            };
            let mut jobs = Vec::new();
            for &a in &cfg.sweep.a {
                for &k in &cfg.sweep.k {
                    for &r in &cfg.sweep.r {
                        jobs.push((a, k, r));
                    }
                }
            }
            let reports = jobs
                .iter()
                .map(|&(a, k, r)| barrier_sign_scan(&BarrierParams::new(a, k, cfg.n)?, &op, &chart, r, o.grid))
                .collect::<hardylab::Result<Vec<_>>>()?;
            let mut out = RunOutput::new(&[
                "a", "K", "r", "grid", "max_residual_ratio", "admissible", "violations", "points",
            ]);
            let mut detail = Vec::new();
            for (&(a, k, r), s) in jobs.iter().zip(&reports) {
                out.rows.push(vec![
                    f(a),
                    f(k),
                    f(r),
                    o.grid.to_string(),
                    f(s.max_ratio),
                    s.admissible.to_string(),
                    s.violations.to_string(),
                    s.points.to_string(),
                ]);
                detail.push(json!({ "a": a, "k": k, "r": r, "report": s }));
            }
            // Smallest r from which every sampled (a, K) is admissible at that r and below.
            let mut radii = cfg.sweep.r.clone();
            radii.sort_by(|x, y| y.total_cmp(x));
            let ok_at = |r: f64| jobs.iter().zip(&reports).filter(|(j, _)| j.2 == r).all(|(_, s)| s.admissible);
            let mut r_adm = None;
            for (i, &r) in radii.iter().enumerate() {
                if radii[i..].iter().all(|&s| ok_at(s)) {
                    r_adm = Some(r);
                    break;
                }
            }
            out.result = json!({ "admissible_from_r": r_adm, "scans": detail });
            out
        }
        Task::MeshInfo => {
            let mut base = problem.clone();
            base.mesh.refinements = 0;
            let mut m = problem_mesh(&base)?;
            let mut out = RunOutput::new(&[
                "level", "n_vertices", "n_triangles", "n_free", "min_angle_deg", "max_aspect_ratio", "h_min", "h_max",
                "area", "mesh_fingerprint",
            ]);
            let mut qs = Vec::new();
            for level in 0..=cfg.mesh.refinements {
                if level > 0 {
                    m = refine(&m)?;
                }
                let q = mesh_quality(&m);
                out.rows.push(vec![
                    level.to_string(),
                    q.n_vertices.to_string(),
                    q.n_triangles.to_string(),
                    q.n_free.to_string(),
                    f(q.min_angle_deg),
                    f(q.max_aspect_ratio),
                    f(q.h_min),
                    f(q.h_max),
                    f(m.area()),
                    m.fingerprint(),
                ]);
                qs.push(q);
            }
            out.result = json!({ "levels": qs, "domain_area": cfg.domain.area() });
            out
        }
    })
}
