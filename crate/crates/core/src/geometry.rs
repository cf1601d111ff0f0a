//! Model boundary hypersurfaces, their Fermi (normal) coordinate charts and the
//! planar domains built on top of them.
//!
//! Every chart passes through the origin with inward unit normal `E₁` there.
//! `SphereExterior` models `U = ℝᴺ \ B̄₁(−E₁)`, `SphereInterior` models `U = B₁(E₁)`.
//! Normal coordinates are `y = (y¹, y')` where `y¹` is the distance to the
//! surface and `y'` the geodesic coordinates of the foot point.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Error, Result};
use crate::field::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Plane,
    SphereExterior,
    SphereInterior,
}

/// Fermi coordinate chart of a unit sphere or a hyperplane through the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FermiChart {
    pub kind: ChartKind,
    pub dim: usize,
}

#[inline]
fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl FermiChart {
    pub fn new(kind: ChartKind, dim: usize) -> Result<Self> {
        if dim < 2 {
            return invalid(format!("chart dimension must be >= 2, got {dim}"));
        }
        Ok(Self { kind, dim })
    }

    pub fn plane2() -> Self {
        Self { kind: ChartKind::Plane, dim: 2 }
    }

    pub fn exterior2() -> Self {
        Self { kind: ChartKind::SphereExterior, dim: 2 }
    }

    pub fn interior2() -> Self {
        Self { kind: ChartKind::SphereInterior, dim: 2 }
    }

    /// Sphere radius; the plane has none.
    pub fn radius(&self) -> f64 {
        1.0
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Chart(format!(
                "expected a point of dimension {}, got {}",
                self.dim,
                v.len()
            )));
        }
        Ok(())
    }

    /// Maps normal coordinates `y` (with `y¹ ≥ 0`) to the ambient point
    /// `Exp₀(y') + y¹ N(Exp₀(y'))`.
    ///
    /// Sphere charts are accepted on their injectivity range: tangential
    /// arclength `|y'| < π` and, for the interior chart, `y¹ < 1`.
    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        if y[0] < -1e-14 {
            return Err(Error::Chart(format!("normal coordinate y1 = {} is negative", y[0])));
        }
        let y1 = y[0].max(0.0);
        match self.kind {
            ChartKind::Plane => Ok(y.to_vec()),
            ChartKind::SphereExterior | ChartKind::SphereInterior => {
                let s = norm(&y[1..]);
                if s >= PI {
                    return Err(Error::Chart(format!(
                        "tangential arclength {s} leaves the injectivity range of the sphere chart"
                    )));
                }
                let interior = self.kind == ChartKind::SphereInterior;
                if interior && y1 >= 1.0 {
                    return Err(Error::Chart(format!("y1 = {y1} reaches the centre of the ball")));
                }
                let (sin_s, cos_s) = s.sin_cos();
                let half = (0.5 * s).sin();
                // 1 - cos s without cancellation
                let one_minus_cos = 2.0 * half * half;
                let mut x = vec![0.0; self.dim];
                let (x1, tangential) = if interior {
                    (one_minus_cos + y1 * cos_s, (1.0 - y1) * sin_s)
                } else {
                    (y1 * cos_s - one_minus_cos, (1.0 + y1) * sin_s)
                };
                x[0] = x1;
                if s > 0.0 {
                    for i in 1..self.dim {
                        x[i] = tangential * y[i] / s;
                    }
                }
                Ok(x)
            }
        }
    }

    /// Inverse of [`FermiChart::forward`], in closed form.
    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        match self.kind {
            ChartKind::Plane => Ok(x.to_vec()),
            ChartKind::SphereExterior | ChartKind::SphereInterior => {
                let interior = self.kind == ChartKind::SphereInterior;
                let t = norm(&x[1..]);
                let r2 = x.iter().map(|a| a * a).sum::<f64>();
                // radial coordinate about the centre ∓E₁
                let (axial, d) = if interior {
                    let axial = 1.0 - x[0];
                    let rho = (axial * axial + t * t).sqrt();
                    (axial, (2.0 * x[0] - r2) / (1.0 + rho))
                } else {
                    let axial = 1.0 + x[0];
                    let rho = (axial * axial + t * t).sqrt();
                    (axial, (2.0 * x[0] + r2) / (1.0 + rho))
                };
                if d.abs() >= 0.5 {
                    return Err(Error::Chart(format!(
                        "point at distance {d} from the sphere is outside the tubular neighbourhood"
                    )));
                }
                let s = t.atan2(axial);
                let mut y = vec![0.0; self.dim];
                y[0] = d;
                if t > 0.0 {
                    for i in 1..self.dim {
                        y[i] = s * x[i] / t;
                    }
                }
                Ok(y)
            }
        }
    }

    /// Signed distance to the surface, positive inside `U`.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|a| a * a).sum();
        match self.kind {
            ChartKind::Plane => x[0],
            ChartKind::SphereExterior => {
                let rho = (r2 + 2.0 * x[0] + 1.0).max(0.0).sqrt();
                (2.0 * x[0] + r2) / (1.0 + rho)
            }
            ChartKind::SphereInterior => {
                let rho = (r2 - 2.0 * x[0] + 1.0).max(0.0).sqrt();
                (2.0 * x[0] - r2) / (1.0 + rho)
            }
        }
    }

    /// `d_M(x) = dist(M, x)` for `x ∈ U`.
    pub fn distance_to_surface(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let d = self.signed_distance(x);
        if d < -1e-12 {
            return Err(Error::Chart(format!("point lies outside U (signed distance {d:e})")));
        }
        Ok(d.max(0.0))
    }

    /// Gradient of the distance function (the normal field at the foot point).
    pub fn distance_gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ChartKind::Plane => {
                let mut g = vec![0.0; x.len()];
                g[0] = 1.0;
                g
            }
            ChartKind::SphereExterior | ChartKind::SphereInterior => {
                let sign = if self.kind == ChartKind::SphereExterior { 1.0 } else { -1.0 };
                let mut v = x.to_vec();
                v[0] += sign;
                let n = norm(&v);
                v.iter().map(|a| sign * a / n).collect()
            }
        }
    }

    /// Mean curvature term `h_M = Δd_M`.
    pub fn mean_curvature_term(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let d = self.signed_distance(x);
        let n1 = (self.dim - 1) as f64;
        match self.kind {
            ChartKind::Plane => Ok(0.0),
            ChartKind::SphereExterior => {
                if d <= -1.0 {
                    return Err(Error::Chart("point at the centre of the sphere".into()));
                }
                Ok(n1 / (1.0 + d))
            }
            ChartKind::SphereInterior => {
                if d >= 1.0 {
                    return Err(Error::Chart(format!("distance {d} reaches the radius")));
                }
                Ok(-n1 / (1.0 - d))
            }
        }
    }

    /// Planar convenience wrappers.
    pub fn forward2(&self, y: [f64; 2]) -> Result<[f64; 2]> {
        let x = self.forward(&y)?;
        Ok([x[0], x[1]])
    }

    pub fn inverse2(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let y = self.inverse(&x)?;
        Ok([y[0], y[1]])
    }

    /// Jacobian `∂x/∂y` of the planar chart, rows = ambient components.
    pub fn jacobian2(&self, y: [f64; 2]) -> [[f64; 2]; 2] {
        let (s, c) = y[1].sin_cos();
        match self.kind {
            ChartKind::Plane => [[1.0, 0.0], [0.0, 1.0]],
            ChartKind::SphereExterior => {
                let r = 1.0 + y[0];
                [[c, -r * s], [s, r * c]]
            }
            ChartKind::SphereInterior => {
                let r = 1.0 - y[0];
                [[c, r * s], [-s, r * c]]
            }
        }
    }
}

/// Which extremum [`drift_constant`] reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Min,
    Max,
}

/// `½·(min|max)` of `−∇p·∇d_M − h_M` over the chart half-ball `F(B_r⁺)`.
///
/// The half-ball is sampled on a polar grid in normal coordinates; the grid
/// is doubled until the extremum moves by less than `1e-3`.
pub fn drift_constant(chart: &FermiChart, p: &ScalarField, r: f64, mode: Extremum) -> Result<f64> {
    if chart.dim != 2 {
        return invalid("drift_constant samples planar charts only");
    }
    if !(r > 0.0) || (chart.kind != ChartKind::Plane && r >= 0.5) {
        return Err(Error::Chart(format!("radius {r} exceeds the chart validity range")));
    }
    let sample = |n: usize| -> Result<f64> {
        let mut best = match mode {
            Extremum::Min => f64::INFINITY,
            Extremum::Max => f64::NEG_INFINITY,
        };
        for i in 0..=n {
            let rho = r * i as f64 / n as f64;
            for j in 0..=n {
                let phi = -FRAC_PI_2 + PI * j as f64 / n as f64;
                let y = [rho * phi.cos(), rho * phi.sin()];
                let x = chart.forward2(y)?;
                let gd = chart.distance_gradient(&x);
                let gp = p.grad(x);
                let v = -(gp[0] * gd[0] + gp[1] * gd[1]) - chart.mean_curvature_term(&x)?;
                best = match mode {
                    Extremum::Min => best.min(v),
                    Extremum::Max => best.max(v),
                };
            }
        }
        Ok(0.5 * best)
    };
    let mut n = 16;
    let mut prev = sample(n)?;
    loop {
        n *= 2;
        let cur = sample(n)?;
        if (cur - prev).abs() < 1e-3 || n >= 1024 {
            return Ok(cur);
        }
        prev = cur;
    }
}

/// Planar domain with the origin on its boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// `B_r(0) ∩ {x¹ > 0}`.
    HalfDisk { r: f64 },
    /// `{0 < |x| < r, 0 < arg x < θ}`.
    Sector { theta: f64, r: f64 },
    /// Image of the half-ball `B_r⁺` under a Fermi chart.
    FermiHalfBall { chart: ChartKind, r: f64 },
    /// `B_r(0)` minus the closed disk of radius `hole_radius` centred at `−hole_radius·E₁`.
    ExteriorCap { r: f64, hole_radius: f64 },
    /// Counter-clockwise polygon having the origin among its vertices.
    Polygon { vertices: Vec<[f64; 2]> },
}

/// Boundary-curve tags carried by mesh vertices (bit positions).
pub mod curve {
    /// Straight piece without an analytic parametrization to project onto.
    pub const STRAIGHT: u8 = 1 << 7;
}

impl DomainSpec {
    pub fn half_disk(r: f64) -> Self {
        Self::HalfDisk { r }
    }

    pub fn sector(theta: f64, r: f64) -> Self {
        Self::Sector { theta, r }
    }

    pub fn exterior_cap(r: f64) -> Self {
        Self::ExteriorCap { r, hole_radius: 1.0 }
    }

    pub fn fermi_half_ball(chart: ChartKind, r: f64) -> Self {
        Self::FermiHalfBall { chart, r }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::HalfDisk { .. } => "half_disk",
            Self::Sector { .. } => "sector",
            Self::FermiHalfBall { .. } => "fermi_half_ball",
            Self::ExteriorCap { .. } => "exterior_cap",
            Self::Polygon { .. } => "polygon",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        match self {
            Self::HalfDisk { r } if !(*r > 0.0 && r.is_finite()) => bad(format!("r must be positive, got {r}")),
            Self::Sector { theta, r } => {
                if !(*r > 0.0 && r.is_finite()) {
                    bad(format!("r must be positive, got {r}"))
                } else if !(*theta > 0.0 && *theta <= 2.0 * PI) {
                    bad(format!("theta must lie in (0, 2π], got {theta}"))
                } else {
                    Ok(())
                }
            }
            Self::FermiHalfBall { chart, r } => {
                if !(*r > 0.0) {
                    bad(format!("r must be positive, got {r}"))
                } else if *chart != ChartKind::Plane && *r >= 0.5 {
                    bad(format!("r = {r} exceeds the chart validity radius 0.5"))
                } else {
                    Ok(())
                }
            }
            Self::ExteriorCap { r, hole_radius } => {
                if !(*r > 0.0 && r.is_finite()) {
                    bad(format!("r must be positive, got {r}"))
                } else if !(*hole_radius > 0.0) {
                    bad(format!("hole_radius must be positive, got {hole_radius}"))
                } else {
                    Ok(())
                }
            }
            Self::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return bad("polygon needs at least three vertices".into());
                }
                if !vertices.iter().any(|v| v[0] == 0.0 && v[1] == 0.0) {
                    return bad("polygon must have the origin as a vertex".into());
                }
                if polygon_signed_area(vertices) <= 0.0 {
                    return bad("polygon vertices must be counter-clockwise".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `sup |x|` over the domain.
    pub fn extent(&self) -> f64 {
        match self {
            Self::HalfDisk { r } | Self::Sector { r, .. } | Self::ExteriorCap { r, .. } => *r,
            Self::FermiHalfBall { chart, r } => match chart {
                ChartKind::Plane => *r,
                _ => r * (1.0 + r),
            },
            Self::Polygon { vertices } => vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max),
        }
    }

    pub fn chart(&self) -> Option<FermiChart> {
        match self {
            Self::FermiHalfBall { chart, .. } => Some(FermiChart { kind: *chart, dim: 2 }),
            Self::HalfDisk { .. } => Some(FermiChart::plane2()),
            Self::ExteriorCap { hole_radius, .. } if *hole_radius == 1.0 => Some(FermiChart::exterior2()),
            _ => None,
        }
    }

    /// Exact area where it has a closed form.
    pub fn area(&self) -> Option<f64> {
        match self {
            Self::HalfDisk { r } => Some(0.5 * PI * r * r),
            Self::Sector { theta, r } => Some(0.5 * theta * r * r),
            Self::Polygon { vertices } => Some(polygon_signed_area(vertices)),
            Self::ExteriorCap { r, hole_radius } => {
                let a = *hole_radius;
                let r = *r;
                // area of the lens B_r(0) ∩ B_a(−a E₁)
                let lens = if r >= 2.0 * a {
                    PI * a * a
                } else {
                    let d = a;
                    let t1 = r * r * ((d * d + r * r - a * a) / (2.0 * d * r)).clamp(-1.0, 1.0).acos();
                    let t2 = a * a * ((d * d + a * a - r * r) / (2.0 * d * a)).clamp(-1.0, 1.0).acos();
                    let t3 = 0.5 * ((-d + r + a) * (d + r - a) * (d - r + a) * (d + r + a)).max(0.0).sqrt();
                    t1 + t2 - t3
                };
                Some(PI * r * r - lens)
            }
            Self::FermiHalfBall { chart, r } => match chart {
                ChartKind::Plane => Some(0.5 * PI * r * r),
                // ∫∫ |det DF| dy over B_r⁺ with det = 1 ± y¹
                ChartKind::SphereExterior => Some(0.5 * PI * r * r + 2.0 * r.powi(3) / 3.0),
                ChartKind::SphereInterior => Some(0.5 * PI * r * r - 2.0 * r.powi(3) / 3.0),
            },
        }
    }

    /// Membership test with slack `tol`.
    pub fn contains(&self, x: [f64; 2], tol: f64) -> bool {
        let rad = x[0].hypot(x[1]);
        match self {
            Self::HalfDisk { r } => x[0] >= -tol && rad <= r + tol,
            Self::Sector { theta, r } => {
                if rad <= tol {
                    return true;
                }
                if rad > r + tol {
                    return false;
                }
                let mut phi = x[1].atan2(x[0]);
                if phi < -tol / rad {
                    phi += 2.0 * PI;
                }
                phi >= -tol / rad && phi <= theta + tol / rad
            }
            Self::FermiHalfBall { chart, r } => {
                let ch = FermiChart { kind: *chart, dim: 2 };
                match ch.inverse2(x) {
                    Ok(y) => y[0] >= -tol && y[0].hypot(y[1]) <= r + tol,
                    Err(_) => false,
                }
            }
            Self::ExteriorCap { r, hole_radius } => {
                rad <= r + tol && hole_signed_distance(*hole_radius, x) >= -tol
            }
            Self::Polygon { vertices } => point_in_polygon(vertices, x, tol),
        }
    }

    /// Projects `p` onto boundary curve `curve` (bit index, see the mesh generator).
    pub fn project_to_curve(&self, curve: u8, p: [f64; 2]) -> Result<[f64; 2]> {
        let radial = |r: f64| {
            let n = p[0].hypot(p[1]);
            [r * p[0] / n, r * p[1] / n]
        };
        let onto_ray = |phi: f64| {
            let (s, c) = phi.sin_cos();
            let t = (p[0] * c + p[1] * s).max(0.0);
            [t * c, t * s]
        };
        Ok(match (self, curve) {
            (_, 7) => p,
            (Self::HalfDisk { .. }, 0) => [0.0, p[1]],
            (Self::HalfDisk { r }, 1) => radial(*r),
            (Self::Sector { .. }, 0) => onto_ray(0.0),
            (Self::Sector { theta, .. }, 1) => onto_ray(*theta),
            (Self::Sector { r, .. }, 2) => radial(*r),
            (Self::FermiHalfBall { chart, r }, c) if c <= 1 => {
                let ch = FermiChart { kind: *chart, dim: 2 };
                let y = ch.inverse2(p)?;
                let y = if c == 0 {
                    [0.0, y[1]]
                } else {
                    let n = y[0].hypot(y[1]);
                    [r * y[0] / n, r * y[1] / n]
                };
                ch.forward2(y)?
            }
            (Self::ExteriorCap { hole_radius, .. }, 0) => hole_point(*hole_radius, p[1].atan2(hole_radius + p[0])),
            (Self::ExteriorCap { r, .. }, 1) => radial(*r),
            (Self::Polygon { .. }, _) => p,
            _ => return Err(Error::Mesh(format!("domain {} has no boundary curve {curve}", self.name()))),
        })
    }
}

/// Point of the hole circle `|x + aE₁| = a` at angle `s` about its centre.
pub(crate) fn hole_point(a: f64, s: f64) -> [f64; 2] {
    let half = (0.5 * s).sin();
    [-2.0 * a * half * half, a * s.sin()]
}

/// Signed distance to the hole circle, positive outside the hole.
pub(crate) fn hole_signed_distance(a: f64, x: [f64; 2]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let rho = ((a + x[0]).powi(2) + x[1] * x[1]).sqrt();
    (2.0 * a * x[0] + r2) / (a + rho)
}

pub(crate) fn polygon_signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        * 0.5
}

fn point_in_polygon(v: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    let n = v.len();
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
        let q = [a[0] + t * dx, a[1] + t * dy];
        if (p[0] - q[0]).hypot(p[1] - q[1]) <= tol {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn plane_chart_is_identity() {
        let c = FermiChart::plane2();
        assert_eq!(c.forward2([0.3, -0.2]).unwrap(), [0.3, -0.2]);
        assert_eq!(c.inverse2([0.3, -0.2]).unwrap(), [0.3, -0.2]);
        assert_eq!(c.forward(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn exterior_circle_parametrization() {
        let c = FermiChart::exterior2();
        let x = c.forward2([0.0, FRAC_PI_2]).unwrap();
        assert!(close(x[0], -1.0, 1e-15) && close(x[1], 1.0, 1e-15), "{x:?}");
        assert_eq!(c.forward2([0.1, 0.0]).unwrap(), [0.1, 0.0]);
        let y = c.inverse2([-1.0, 1.0]).unwrap();
        assert!(close(y[0], 0.0, 1e-15) && close(y[1], FRAC_PI_2, 1e-15), "{y:?}");
        assert_eq!(c.forward2([0.0, 0.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn chart_rejects_outside_injectivity() {
        assert!(FermiChart::exterior2().forward2([0.0, 3.2]).is_err());
        assert!(FermiChart::interior2().forward2([1.0, 0.0]).is_err());
        assert!(FermiChart::interior2().inverse2([1.0, 0.0]).is_err());
        assert!(FermiChart::exterior2().forward2([-0.1, 0.0]).is_err());
    }

    #[test]
    fn distances() {
        assert_eq!(FermiChart::plane2().distance_to_surface(&[0.4, 7.0]).unwrap(), 0.4);
        assert!(close(FermiChart::exterior2().distance_to_surface(&[1.0, 0.0]).unwrap(), 1.0, 1e-15));
        assert!(close(FermiChart::interior2().distance_to_surface(&[0.5, 0.0]).unwrap(), 0.5, 1e-15));
        assert!(FermiChart::interior2().distance_to_surface(&[-0.1, 0.0]).is_err());
    }

    #[test]
    fn curvature_terms() {
        let h = FermiChart::exterior2().mean_curvature_term(&[0.0, 0.0]).unwrap();
        assert_eq!(h, 1.0);
        assert_eq!(FermiChart::plane2().mean_curvature_term(&[0.3, 0.1]).unwrap(), 0.0);
        let h = FermiChart::interior2().mean_curvature_term(&[0.5, 0.0]).unwrap();
        assert!(close(h, -2.0, 1e-14));
        let c3 = FermiChart::new(ChartKind::SphereExterior, 3).unwrap();
        assert_eq!(c3.mean_curvature_term(&[0.0, 0.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn three_dimensional_round_trip() {
        let c = FermiChart::new(ChartKind::SphereInterior, 3).unwrap();
        let y = [0.05, 0.1, -0.07];
        let x = c.forward(&y).unwrap();
        let back = c.inverse(&x).unwrap();
        for i in 0..3 {
            assert!(close(back[i], y[i], 1e-15));
        }
        // x is at distance y¹ from the unit sphere about E₁
        let d = 1.0 - ((x[0] - 1.0).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt();
        assert!(close(d, y[0], 1e-15));
    }

    #[test]
    fn drift_constants() {
        let k = drift_constant(&FermiChart::plane2(), &ScalarField::one(), 0.1, Extremum::Max).unwrap();
        assert_eq!(k, 0.0);
        let k = drift_constant(&FermiChart::plane2(), &ScalarField::one_plus_x1(), 0.1, Extremum::Min).unwrap();
        assert!(close(k, -0.5, 1e-15));
        let r = 0.1;
        let k = drift_constant(&FermiChart::interior2(), &ScalarField::one(), r, Extremum::Max).unwrap();
        // max of −h = 1/(1−d) attained at d = r
        assert!(close(k, 0.5 / (1.0 - r), 1e-3), "{k}");
        assert!(drift_constant(&FermiChart::interior2(), &ScalarField::one(), 0.7, Extremum::Max).is_err());
    }

    #[test]
    fn domain_membership_and_area() {
        let d = DomainSpec::exterior_cap(0.3);
        assert!(d.contains([0.1, 0.0], 0.0));
        assert!(!d.contains([-0.1, 0.0], 0.0));
        assert!(d.contains([0.0, 0.0], 1e-12));
        // r ≥ 2: the whole hole is removed
        let a = DomainSpec::exterior_cap(3.0).area().unwrap();
        assert!(close(a, 8.0 * PI, 1e-12));
        let s = DomainSpec::sector(1.5 * PI, 1.0);
        assert!(s.contains([-0.5, -0.1], 0.0));
        assert!(!s.contains([0.5, -0.1], 0.0));
        let json = serde_json::to_string(&DomainSpec::sector(1.0, 0.5)).unwrap();
        assert_eq!(json, r#"{"kind":"sector","theta":1.0,"r":0.5}"#);
        assert!(serde_json::from_str::<DomainSpec>(r#"{"kind":"half_disk","r":0.5,"extra":1}"#).is_err());
        assert!(serde_json::from_str::<DomainSpec>(r#"{"kind":"triangle","r":0.5}"#).is_err());
    }

    #[test]
    fn hole_projection_is_accurate_near_origin() {
        let d = DomainSpec::exterior_cap(0.5);
        let p = d.project_to_curve(0, [-3e-14, 1e-13]).unwrap();
        assert!(hole_signed_distance(1.0, p).abs() < 1e-26);
    }
}
