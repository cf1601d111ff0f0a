//! Closed-form barriers `ω̄_a`, `ω_{a,K}`, the operator `L_y`, and the
//! finite-difference checks built on them.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::ScalarField;
use crate::geometry::FermiChart;
use crate::quadrature::gauss_legendre;

/// Barrier exponent `a`, drift `K` and dimension `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub a: f64,
    pub k: f64,
    pub n: usize,
}

impl BarrierParams {
    pub fn new(a: f64, k: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return invalid(format!("dimension must be >= 2, got {n}"));
        }
        if !a.is_finite() || !k.is_finite() {
            return invalid("barrier parameters must be finite");
        }
        Ok(Self { a, k, n })
    }

    /// The barrier lies in `H¹` near the origin.
    pub fn in_h1(&self) -> bool {
        self.a < -0.5
    }
}

/// Zero-order shift and coefficients of the operator whose sign is scanned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub lambda: f64,
    pub p: ScalarField,
    pub q: ScalarField,
    pub eta: ScalarField,
    /// `true`: `−Δ − (N²/4)|x|⁻² + λ`;
    /// `false`: `−div(p∇) − (N²/4)q|x|⁻² + |λ||x|⁻²η`.
    pub plain: bool,
}

impl OperatorSpec {
    pub fn plain(lambda: f64) -> Self {
        Self { lambda, p: ScalarField::one(), q: ScalarField::one(), eta: ScalarField::one(), plain: true }
    }

    pub fn weighted(lambda: f64, p: ScalarField, q: ScalarField, eta: ScalarField) -> Self {
        Self { lambda, p, q, eta, plain: false }
    }
}

/// `X_a(t) = |log t|^a` on `(0, 1)`.
pub fn x_weight(a: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("X_a needs 0 < t < 1, got {t}")));
    }
    Ok((-t.ln()).powf(a))
}

fn check_y(y: &[f64]) -> Result<f64> {
    if y.len() < 2 {
        return Err(Error::Domain("points need at least two components".into()));
    }
    let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(y[0] > 0.0) || !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("y = {y:?} is outside {{y¹ > 0, 0 < |y| < 1}}")));
    }
    Ok(r)
}

/// `ω̄_a(y) = y¹ |y|^{−N/2} X_a(|y|)` with `N = y.len()`.
pub fn omega_bar(a: f64, y: &[f64]) -> Result<f64> {
    let r = check_y(y)?;
    let n = y.len() as f64;
    Ok(y[0] * r.powf(-0.5 * n) * (-r.ln()).powf(a))
}

/// `ω_{a,K}(y) = e^{K y¹} ω̄_a(y)`.
pub fn omega(a: f64, k: f64, y: &[f64]) -> Result<f64> {
    Ok((k * y[0]).exp() * omega_bar(a, y)?)
}

/// Potential part of `L_y`: `−(N²/4)|y|⁻² + a(a−1)|y|⁻²X₋₂(|y|)`.
fn ly_potential(a: f64, n: usize, r: f64) -> f64 {
    let l = -r.ln();
    let nn = n as f64;
    (-0.25 * nn * nn + a * (a - 1.0) / (l * l)) / (r * r)
}

fn check_stencil(y: &[f64], h: f64) -> Result<f64> {
    let r = check_y(y)?;
    if !(h > 0.0) || y[0] <= 2.0 * h || r <= 2.0 * h || r + 2.0 * h >= 1.0 {
        return Err(Error::Domain(format!("stencil of step {h} around {y:?} leaves the domain")));
    }
    Ok(r)
}

/// Centred `(2N+1)`-point approximation of `−Δf(y)`.
fn neg_laplacian_fd(f: &dyn Fn(&[f64]) -> Result<f64>, y: &[f64], h: f64) -> Result<f64> {
    let f0 = f(y)?;
    let mut s = 0.0;
    let mut z = y.to_vec();
    for i in 0..y.len() {
        z[i] = y[i] + h;
        let fp = f(&z)?;
        z[i] = y[i] - h;
        let fm = f(&z)?;
        z[i] = y[i];
        s += fp - 2.0 * f0 + fm;
    }
    Ok(-s / (h * h))
}

/// `L_y ω̄_a (y)` with the Laplacian replaced by the centred stencil of step
/// `h`; the exact value is zero.
pub fn ly_residual_fd(a: f64, y: &[f64], h: f64) -> Result<f64> {
    let r = check_stencil(y, h)?;
    let lap = neg_laplacian_fd(&|z| omega_bar(a, z), y, h)?;
    Ok(lap + ly_potential(a, y.len(), r) * omega_bar(a, y)?)
}

/// Right side of the drift identity for `L_y ω_{a,K}`:
/// `−(2K/y¹)ω + 2K(N/2 + aX₋₁(|y|))(y¹/|y|²)ω − K²ω`.
pub fn lyoak_rhs(a: f64, k: f64, y: &[f64]) -> Result<f64> {
    let r = check_y(y)?;
    let w = omega(a, k, y)?;
    let n = y.len() as f64;
    let xm1 = 1.0 / (-r.ln());
    Ok(-2.0 * k / y[0] * w + 2.0 * k * (0.5 * n + a * xm1) * y[0] / (r * r) * w - k * k * w)
}

/// `FD(L_y ω_{a,K})(y) − lyoak_rhs(a, K, y)`.
pub fn lyoak_residual_fd(a: f64, k: f64, y: &[f64], h: f64) -> Result<f64> {
    let r = check_stencil(y, h)?;
    let lap = neg_laplacian_fd(&|z| omega(a, k, z), y, h)?;
    Ok(lap + ly_potential(a, y.len(), r) * omega(a, k, y)? - lyoak_rhs(a, k, y)?)
}

/// Convergence of the finite-difference residual of the drift identity under
/// stencil halving.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStudy {
    pub a: f64,
    pub k: f64,
    pub points: usize,
    pub h: f64,
    /// `max |res(h/2)| / (ω/|y|²)` over the sample.
    pub max_rel_residual: f64,
    /// Smallest `log₂(|res(h)| / |res(h/2)|)` over the sample.
    pub min_order: f64,
}

/// Deterministic sample of `points` normal-coordinate points in the half ball
/// `{y¹ > 0, 0.1 < |y| < 0.6}` (N = 2).
pub fn sample_points(points: usize) -> Vec<[f64; 2]> {
    const GOLDEN: f64 = 0.618_033_988_749_894_8;
    (0..points)
        .map(|i| {
            let rho = 0.1 + 0.5 * (i as f64 + 0.5) / points as f64;
            let phi = -1.2 + 2.4 * ((i as f64 + 0.5) * GOLDEN).fract();
            [rho * phi.cos(), rho * phi.sin()]
        })
        .collect()
}

/// Runs [`lyoak_residual_fd`] at steps `h` and `h/2` on [`sample_points`];
/// with `K = 0` the identity is `L_y ω̄_a = 0`.
pub fn residual_order_study(a: f64, k: f64, points: usize, h: f64) -> Result<ResidualStudy> {
    if points == 0 {
        return invalid("need at least one sample point");
    }
    let mut max_rel: f64 = 0.0;
    let mut min_order = f64::INFINITY;
    for y in sample_points(points) {
        let coarse = lyoak_residual_fd(a, k, &y, h)?;
        let fine = lyoak_residual_fd(a, k, &y, 0.5 * h)?;
        let scale = omega(a, k, &y)?.abs() / (y[0] * y[0] + y[1] * y[1]);
        max_rel = max_rel.max(fine.abs() / scale);
        min_order = min_order.min((coarse.abs() / fine.abs()).log2());
    }
    Ok(ResidualStudy { a, k, points, h, max_rel_residual: max_rel, min_order })
}

/// Outcome of [`barrier_sign_scan`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    /// `max (L w_a)/w_a` over the sampled points.
    pub max_ratio: f64,
    pub argmax_x: [f64; 2],
    pub argmax_y: [f64; 2],
    pub admissible: bool,
    pub points: usize,
    pub violations: usize,
    /// Bounding box `[ρ_min, ρ_max, φ_min, φ_max]` of the violating points in
    /// normal polar coordinates.
    pub violating_region: Option<[f64; 4]>,
}

/// Tolerance of the sign test.
pub const SCAN_TOL: f64 = 1e-6;

/// `(L w)/w` at `x`, where `w = ω_{a,K} ∘ F⁻¹`, by Richardson-extrapolated
/// centred differences in `x`.
fn operator_ratio(params: &BarrierParams, op: &OperatorSpec, chart: &FermiChart, x: [f64; 2]) -> Result<f64> {
    let w = |z: [f64; 2]| -> Result<f64> {
        let y = chart.inverse2(z)?;
        omega(params.a, params.k, &y)
    };
    let w0 = w(x)?;
    if !(w0 > 0.0) {
        return Err(Error::Domain(format!("barrier is not positive at {x:?} ({w0:e}); is the chart the right one?")));
    }
    let d = chart.distance_to_surface(&x)?;
    let rx = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let base = 0.01 * d.min(rx);
    let stencil = |h: f64| -> Result<(f64, [f64; 2])> {
        let (xp, xm) = (w([x[0] + h, x[1]])?, w([x[0] - h, x[1]])?);
        let (yp, ym) = (w([x[0], x[1] + h])?, w([x[0], x[1] - h])?);
        let lap = (xp + xm + yp + ym - 4.0 * w0) / (h * h);
        Ok((lap, [(xp - xm) / (2.0 * h), (yp - ym) / (2.0 * h)]))
    };
    let (l1, g1) = stencil(base)?;
    let (l2, g2) = stencil(0.5 * base)?;
    let lap = (4.0 * l2 - l1) / 3.0;
    let grad = [(4.0 * g2[0] - g1[0]) / 3.0, (4.0 * g2[1] - g1[1]) / 3.0];
    let r2 = rx * rx;
    let nn = params.n as f64;
    let lw = if op.plain {
        -lap - 0.25 * nn * nn / r2 * w0 + op.lambda * w0
    } else {
        let gp = op.p.grad(x);
        -op.p.eval(x) * lap - (gp[0] * grad[0] + gp[1] * grad[1]) - 0.25 * nn * nn * op.q.eval(x) / r2 * w0
            + op.lambda.abs() * op.eta.eval(x) / r2 * w0
    };
    Ok(lw / w0)
}

/// Samples `(L w_a)/w_a` on `F(B_r⁺)` over a polar grid in normal
/// coordinates (`grid` radii × `grid` angles, cell-centred in angle) and
/// reports its maximum; admissible when the maximum is at most [`SCAN_TOL`].
pub fn barrier_sign_scan(
    params: &BarrierParams,
    op: &OperatorSpec,
    chart: &FermiChart,
    r: f64,
    grid: usize,
) -> Result<ScanReport> {
    if params.n != 2 || chart.dim != 2 {
        return invalid("the sign scan is planar (N = 2)");
    }
    if grid < 2 {
        return invalid("scan grid needs at least 2 points per direction");
    }
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::Domain(format!("scan radius {r} must lie in (0, 0.5)")));
    }
    let pts: Vec<(f64, f64)> = (1..=grid)
        .flat_map(|i| {
            (0..grid).map(move |j| (r * i as f64 / grid as f64, -FRAC_PI_2 + PI * (j as f64 + 0.5) / grid as f64))
        })
        .collect();
    let vals: Vec<Result<(f64, [f64; 2], [f64; 2])>> = pts
        .par_iter()
        .map(|&(rho, phi)| {
            let y = [rho * phi.cos(), rho * phi.sin()];
            let x = chart.forward2(y)?;
            Ok((operator_ratio(params, op, chart, x)?, x, y))
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let (mut bx, mut by) = ([0.0; 2], [0.0; 2]);
    let mut violations = 0;
    let mut region: Option<[f64; 4]> = None;
    for (v, &(rho, phi)) in vals.into_iter().zip(&pts) {
        let (ratio, x, y) = v?;
        if !ratio.is_finite() {
            return Err(Error::Domain(format!("non-finite operator ratio at y = {y:?}")));
        }
        if ratio > best {
            best = ratio;
            bx = x;
            by = y;
        }
        if ratio > SCAN_TOL {
            violations += 1;
            let b = region.get_or_insert([rho, rho, phi, phi]);
            b[0] = b[0].min(rho);
            b[1] = b[1].max(rho);
            b[2] = b[2].min(phi);
            b[3] = b[3].max(phi);
        }
    }
    Ok(ScanReport {
        max_ratio: best,
        argmax_x: bx,
        argmax_y: by,
        admissible: violations == 0,
        points: pts.len(),
        violations,
        violating_region: region,
    })
}

/// Angular factor `∫_{S^{N−1}₊} cos²θ e^{2Kt cosθ} dS − G(0)` and `G(0)`.
fn angular_factor(n: usize, k: f64, t: f64, nodes: &(Vec<f64>, Vec<f64>)) -> (f64, f64) {
    // |S^{N−2}|: 2 for N = 2, then 2π^{m/2}/Γ(m/2) with m = N − 1
    let sphere = if n == 2 {
        2.0
    } else {
        let m = (n - 1) as f64;
        2.0 * PI.powf(0.5 * m) / gamma_half_int(m)
    };
    let (xs, ws) = nodes;
    let (mut g0, mut dg) = (0.0, 0.0);
    for (x, w) in xs.iter().zip(ws) {
        let th = 0.25 * PI * (x + 1.0);
        let (s, c) = th.sin_cos();
        let base = c * c * s.powi(n as i32 - 2) * 0.25 * PI * w;
        g0 += base;
        dg += base * (2.0 * k * t * c).exp_m1();
    }
    (sphere * dg, sphere * g0)
}

/// `Γ(m/2)` for a positive integer `m`.
fn gamma_half_int(m: f64) -> f64 {
    let mut v = if (m as usize).is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut s = if (m as usize).is_multiple_of(2) { 1.0 } else { 0.5 };
    while s < 0.5 * m - 1e-12 {
        v *= s;
        s += 1.0;
    }
    v
}

/// `∫_{B_r⁺} ω_{a,N−1}²/|y|² dy` for each `r`, by the substitution
/// `u = −log|y|` with the constant angular part integrated in closed form and
/// the exponentially decaying remainder by Gauss–Legendre panels.
pub fn barrier_norm_divergence(a: f64, n: usize, rs: &[f64]) -> Result<Vec<f64>> {
    if !(a > -1.0 && a < -0.5) {
        return Err(Error::Domain(format!("a = {a} must lie in (−1, −½)")));
    }
    if n < 2 {
        return invalid(format!("dimension must be >= 2, got {n}"));
    }
    let k = (n - 1) as f64;
    let ang = gauss_legendre(48);
    let (_, g0) = angular_factor(n, k, 0.0, &ang);
    rs.iter()
        .map(|&r| {
            if !(r > 0.0 && r < (-1.0f64).exp()) {
                return Err(Error::Domain(format!("radius {r} must lie in (0, e⁻¹)")));
            }
            let u0 = -r.ln();
            let head = g0 * u0.powf(2.0 * a + 1.0) / (-(2.0 * a + 1.0));
            let (xs, ws) = gauss_legendre(16);
            let tail = |panels: usize| -> f64 {
                // the integrand decays like e^{−u}; 40 e-folds reach round-off
                let len = 40.0 / panels as f64;
                let mut s = 0.0;
                for p in 0..panels {
                    let lo = u0 + len * p as f64;
                    for (x, w) in xs.iter().zip(&ws) {
                        let u = lo + 0.5 * len * (x + 1.0);
                        let (dg, _) = angular_factor(n, k, (-u).exp(), &ang);
                        s += 0.5 * len * w * u.powf(2.0 * a) * dg;
                    }
                }
                s
            };
            let mut panels = 4;
            let mut prev = head + tail(panels);
            loop {
                panels *= 2;
                let cur = head + tail(panels);
                if (cur - prev).abs() <= 1e-6 * cur.abs() {
                    return Ok(cur);
                }
                if panels > 4096 {
                    return Err(Error::Quadrature(format!("norm integral did not settle at r = {r}")));
                }
                prev = cur;
            }
        })
        .collect()
}

/// Sharp Hardy constant `(π/θ)²` of a planar sector with vertex at the origin.
pub fn sector_hardy_constant(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 2.0 * PI) {
        return Err(Error::Domain(format!("sector angle {theta} must lie in (0, 2π]")));
    }
    Ok((PI / theta).powi(2))
}

/// Flat-case infimum `(N−k)²/4` for a singular set of dimension `k` on the boundary.
pub fn halfspace_constant(n: usize, k: usize) -> Result<f64> {
    if n < 2 || k + 1 > n {
        return Err(Error::Domain(format!("need 0 <= k <= N − 1, got N = {n}, k = {k}")));
    }
    let d = (n - k) as f64;
    Ok(0.25 * d * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn direct_values() {
        assert!((x_weight(2.0, 1.0 / E).unwrap() - 1.0).abs() < 1e-15);
        assert!((x_weight(-2.0, (-2.0f64).exp()).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(x_weight(0.0, 0.37).unwrap(), 1.0);
        assert!(x_weight(1.0, 1.0).is_err() && x_weight(1.0, 0.0).is_err());
        assert!((omega_bar(0.3, &[1.0 / E, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((omega_bar(-1.0, &[(-2.0f64).exp(), 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((omega(-0.75, 1.0, &[1.0 / E, 0.0]).unwrap() - 1.444_667_861_009_766).abs() < 1e-14);
        assert!(omega_bar(-0.75, &[0.0, 0.5]).is_err());
    }

    #[test]
    fn drift_rhs_vanishes_without_drift() {
        assert_eq!(lyoak_rhs(-0.6, 0.0, &[0.2, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn oracle_constants() {
        assert_eq!(sector_hardy_constant(PI).unwrap(), 1.0);
        assert!((sector_hardy_constant(FRAC_PI_2).unwrap() - 4.0).abs() < 1e-15);
        assert!((sector_hardy_constant(2.0 * PI).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(halfspace_constant(2, 0).unwrap(), 1.0);
        assert_eq!(halfspace_constant(3, 1).unwrap(), 1.0);
        assert!(halfspace_constant(2, 2).is_err());
        assert!((gamma_half_int(3.0) - 0.5 * PI.sqrt()).abs() < 1e-15);
    }
}
