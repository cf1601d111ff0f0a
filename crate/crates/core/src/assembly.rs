//! P1 stiffness and weighted mass forms.
//!
//! Matrices are assembled over the free vertices only; Dirichlet rows and
//! columns never exist, so the origin (always Dirichlet) is never a quadrature
//! concern beyond the bounded integrands `φ_i φ_j w` of its neighbours.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::FermiChart;
use crate::mesh::TriMesh;
use crate::quadrature::{collapsed_rule, triangle_quadrature, TriangleRule};
use crate::sparse::{DofMap, SparseSymMatrix};

/// Relative tolerance of the adaptive element integration.
pub const ADAPT_TOL: f64 = 1e-8;
/// Maximum subdivision depth of the adaptive element integration.
pub const ADAPT_DEPTH: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    One,
    /// `|x|⁻²`
    InvR2,
    /// `|x|⁻² |log|x||⁻²`
    InvR2Log2,
    /// `1/d_M(x)`, with `d_M` interpolated linearly from the vertex values.
    InvDist { chart: FermiChart },
    /// `f(x)`, optionally times `|x|⁻²`.
    Field { field: ScalarField, inv_r2: bool },
}

impl WeightKind {
    fn eval(&self, x: [f64; 2], bary: [f64; 3], vdist: &[f64; 3]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        match self {
            Self::One => 1.0,
            Self::InvR2 => 1.0 / r2,
            Self::InvR2Log2 => {
                let l = 0.5 * r2.ln();
                1.0 / (r2 * l * l)
            }
            Self::InvDist { .. } => 1.0 / (bary[0] * vdist[0] + bary[1] * vdist[1] + bary[2] * vdist[2]),
            Self::Field { field, inv_r2 } => {
                let f = field.eval(x);
                if *inv_r2 {
                    f / r2
                } else {
                    f
                }
            }
        }
    }

    /// Splits off constant factors so that e.g. `η|x|⁻²` with `η = |x|²`
    /// assembles exactly like the unweighted form.
    pub fn canonical(&self) -> (WeightKind, f64) {
        match self {
            Self::Field { field, inv_r2 } if field.is_constant() => {
                (if *inv_r2 { Self::InvR2 } else { Self::One }, field.c0)
            }
            Self::Field { field, inv_r2: true } if field.c0 == 0.0 && field.c1 == [0.0, 0.0] => (Self::One, field.c2),
            _ => (self.clone(), 1.0),
        }
    }

    /// Vertex of the element at which the weight blows up, if any.
    fn singular_corner(&self, p: &[[f64; 2]; 3], vdist: &[f64; 3]) -> Option<usize> {
        match self {
            Self::One | Self::Field { inv_r2: false, .. } => None,
            Self::InvDist { .. } => (0..3).find(|&k| vdist[k] == 0.0),
            _ => (0..3).find(|&k| p[k] == [0.0, 0.0]),
        }
    }

    fn check_mesh(&self, mesh: &TriMesh) -> Result<Vec<f64>> {
        match self {
            Self::InvR2Log2 => {
                let ext = mesh.extent();
                if ext >= 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "the log weight needs a domain inside the unit disk, extent is {ext}"
                    )));
                }
                Ok(Vec::new())
            }
            Self::InvDist { chart } => mesh
                .vertices
                .iter()
                .map(|v| {
                    let d = chart.signed_distance(v);
                    if d < -1e-12 {
                        Err(Error::InvalidInput(format!("vertex {v:?} lies outside the chart region (d = {d:e})")))
                    } else {
                        Ok(d.max(0.0))
                    }
                })
                .collect(),
            _ => Ok(Vec::new()),
        }
    }
}

#[inline]
fn area2(p: &[[f64; 2]; 3]) -> f64 {
    (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0])
}

/// Gradients of the three barycentric functions.
fn gradients(p: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let d = area2(p);
    [
        [(p[1][1] - p[2][1]) / d, (p[2][0] - p[1][0]) / d],
        [(p[2][1] - p[0][1]) / d, (p[0][0] - p[2][0]) / d],
        [(p[0][1] - p[1][1]) / d, (p[1][0] - p[0][0]) / d],
    ]
}

/// `∫_T p ∇φ_i·∇φ_j` for one triangle.
pub fn element_stiffness(p: [[f64; 2]; 3], coef: &ScalarField) -> Result<[[f64; 3]; 3]> {
    let area = 0.5 * area2(&p);
    if !(area > 0.0) {
        return Err(Error::Mesh(format!("degenerate or inverted triangle {p:?}")));
    }
    let pbar = if coef.is_constant() {
        if !(coef.c0 > 0.0) {
            return Err(Error::NonPositiveWeight { value: coef.c0, x: p[0][0], y: p[0][1] });
        }
        coef.c0
    } else {
        // quadratic coefficient: the order-2 rule is exact
        let rule = rule(2);
        let mut s = 0.0;
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = map(&p, *b);
            let v = coef.eval(x);
            if !(v > 0.0) {
                return Err(Error::NonPositiveWeight { value: v, x: x[0], y: x[1] });
            }
            s += w * v;
        }
        s
    };
    let g = gradients(&p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = pbar * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    Ok(k)
}

#[inline]
fn map(p: &[[f64; 2]; 3], b: [f64; 3]) -> [f64; 2] {
    [
        b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
        b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
    ]
}

fn rule(order: usize) -> &'static TriangleRule {
    use std::sync::OnceLock;
    static R2: OnceLock<TriangleRule> = OnceLock::new();
    static R4: OnceLock<TriangleRule> = OnceLock::new();
    static R7: OnceLock<TriangleRule> = OnceLock::new();
    let cell = match order {
        2 => &R2,
        4 => &R4,
        _ => &R7,
    };
    cell.get_or_init(|| triangle_quadrature(order).expect("supported order"))
}

/// Collapsed rule whose degenerate edge sits at cell corner `k`.
fn corner_rule(k: usize) -> &'static TriangleRule {
    use std::sync::OnceLock;
    static R: [OnceLock<TriangleRule>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    R[k].get_or_init(|| {
        let mut r = collapsed_rule(4, 12, 7);
        for p in &mut r.points {
            p.swap(1, k);
        }
        r
    })
}

fn cell_rule(corner: Option<usize>) -> &'static TriangleRule {
    corner.map_or_else(|| rule(7), corner_rule)
}

/// Packed upper triangle of a 3×3 element matrix.
type Packed = [f64; 6];
const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Integrates `w φ_i φ_j` over the sub-triangle `sub` (barycentric corners
/// relative to the element `p`) with one application of `rule`.
fn integrate_cell(
    p: &[[f64; 2]; 3],
    sub: &[[f64; 3]; 3],
    w: &WeightKind,
    vdist: &[f64; 3],
    rule: &TriangleRule,
    elem_area: f64,
) -> Result<Packed> {
    // sub-triangle area as a fraction of the element
    let sa = {
        let q = [[sub[0][1], sub[0][2]], [sub[1][1], sub[1][2]], [sub[2][1], sub[2][2]]];
        area2(&q).abs()
    };
    let mut out = [0.0; 6];
    for (pt, wt) in rule.points.iter().zip(&rule.weights) {
        let mut b = [0.0; 3];
        for k in 0..3 {
            b[k] = pt[0] * sub[0][k] + pt[1] * sub[1][k] + pt[2] * sub[2][k];
        }
        let x = map(p, b);
        let v = w.eval(x, b, vdist);
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveWeight { value: v, x: x[0], y: x[1] });
        }
        let f = wt * v * sa * elem_area;
        for (k, (i, j)) in PAIRS.iter().enumerate() {
            out[k] += f * b[*i] * b[*j];
        }
    }
    Ok(out)
}

fn split(sub: &[[f64; 3]; 3]) -> [[[f64; 3]; 3]; 4] {
    let mid = |a: [f64; 3], b: [f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
    let (a, b, c) = (sub[0], sub[1], sub[2]);
    let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    p: &[[f64; 2]; 3],
    sub: &[[f64; 3]; 3],
    est: Packed,
    w: &WeightKind,
    vdist: &[f64; 3],
    elem_area: f64,
    active: &[bool; 6],
    corner: Option<usize>,
    tol: f64,
    depth: usize,
) -> Result<(Packed, bool)> {
    let kids = split(sub);
    // child k keeps corner k of its parent
    let kid_corner = |k: usize| corner.filter(|&c| c == k);
    let mut parts = [[0.0; 6]; 4];
    let mut sum = [0.0; 6];
    for (k, kid) in kids.iter().enumerate() {
        parts[k] = integrate_cell(p, kid, w, vdist, cell_rule(kid_corner(k)), elem_area)?;
        for m in 0..6 {
            sum[m] += parts[k][m];
        }
    }
    let err = (0..6).filter(|&m| active[m]).map(|m| (sum[m] - est[m]).abs()).fold(0.0, f64::max);
    if err <= tol {
        return Ok((sum, true));
    }
    if depth >= ADAPT_DEPTH {
        return Ok((sum, false));
    }
    let mut total = [0.0; 6];
    let mut ok = true;
    for (k, kid) in kids.iter().enumerate() {
        // the singular chain keeps its budget: its cells are self-similar, so
        // their relative error does not shrink with depth
        let t = if kid_corner(k).is_some() { tol } else { 0.25 * tol };
        let (v, c) = adapt(p, kid, parts[k], w, vdist, elem_area, active, kid_corner(k), t, depth + 1)?;
        ok &= c;
        for m in 0..6 {
            total[m] += v[m];
        }
    }
    Ok((total, ok))
}

fn unpack(v: Packed) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (k, (i, j)) in PAIRS.iter().enumerate() {
        m[*i][*j] = v[k];
        m[*j][*i] = v[k];
    }
    m
}

const UNIT: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// `∫_T w φ_i φ_j` by adaptive 4-way subdivision with the order-7 rule, to
/// relative accuracy [`ADAPT_TOL`]. `vdist` holds vertex distances for
/// [`WeightKind::InvDist`] and is ignored otherwise.
pub fn element_mass(p: [[f64; 2]; 3], w: &WeightKind, vdist: [f64; 3]) -> Result<[[f64; 3]; 3]> {
    element_mass_masked(p, w, vdist, [true; 3])
}

/// As [`element_mass`], but only entries between vertices flagged in `free`
/// drive the refinement; the others may be non-integrable (a vertex at the
/// singularity) and come back as unreliable values.
pub fn element_mass_masked(p: [[f64; 2]; 3], w: &WeightKind, vdist: [f64; 3], free: [bool; 3]) -> Result<[[f64; 3]; 3]> {
    let mut active = [false; 6];
    for (k, (i, j)) in PAIRS.iter().enumerate() {
        active[k] = free[*i] && free[*j];
    }
    let area = 0.5 * area2(&p);
    if !(area > 0.0) {
        return Err(Error::Mesh(format!("degenerate or inverted triangle {p:?}")));
    }
    let corner = w.singular_corner(&p, &vdist);
    let est = integrate_cell(&p, &UNIT, w, &vdist, cell_rule(corner), area)?;
    let scale = (0..6).filter(|&m| active[m]).fold(0.0f64, |m, k| m.max(est[k].abs()));
    if scale == 0.0 {
        return Ok(unpack(est));
    }
    // accepted cell errors add up over the depth of the singular chain
    let (v, ok) = adapt(&p, &UNIT, est, w, &vdist, area, &active, corner, 0.1 * ADAPT_TOL * scale, 0)?;
    if !ok {
        return Err(Error::Quadrature(format!("element integral did not settle within {ADAPT_DEPTH} levels on {p:?}")));
    }
    Ok(unpack(v))
}

/// Distance from the origin to the closed triangle.
fn origin_distance(p: &[[f64; 2]; 3]) -> f64 {
    let o = [0.0, 0.0];
    let inside = {
        let s = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (o[1] - a[1]) - (b[1] - a[1]) * (o[0] - a[0]);
        let (d0, d1, d2) = (s(p[0], p[1]), s(p[1], p[2]), s(p[2], p[0]));
        (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
    };
    if inside {
        return 0.0;
    }
    (0..3)
        .map(|k| {
            let (a, b) = (p[k], p[(k + 1) % 3]);
            let e = [b[0] - a[0], b[1] - a[1]];
            let t = (-(a[0] * e[0] + a[1] * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
            (a[0] + t * e[0]).hypot(a[1] + t * e[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Subdivision depth used to resolve the circle `|x| = ρ` inside an element.
pub const DISK_DEPTH: usize = 12;

/// `∫_{T ∖ B_ρ} w φ_i φ_j`: the part of the element mass outside the disk
/// `|x| < ρ`. Elements cut by the circle are subdivided [`DISK_DEPTH`] times
/// and the remaining cut cells are classified by their centroid.
pub fn element_mass_outside_disk(p: [[f64; 2]; 3], w: &WeightKind, rho: f64) -> Result<[[f64; 3]; 3]> {
    let area = 0.5 * area2(&p);
    if !(area > 0.0) {
        return Err(Error::Mesh(format!("degenerate or inverted triangle {p:?}")));
    }
    let r = |x: [f64; 2]| x[0].hypot(x[1]);
    if p.iter().all(|&x| r(x) <= rho) {
        return Ok([[0.0; 3]; 3]);
    }
    if origin_distance(&p) >= rho {
        return element_mass(p, w, [0.0; 3]);
    }
    fn walk(p: &[[f64; 2]; 3], sub: &[[f64; 3]; 3], w: &WeightKind, rho: f64, area: f64, depth: usize, acc: &mut Packed) -> Result<()> {
        let q = [map(p, sub[0]), map(p, sub[1]), map(p, sub[2])];
        let r = |x: [f64; 2]| x[0].hypot(x[1]);
        if q.iter().all(|&x| r(x) <= rho) {
            return Ok(());
        }
        let take = if origin_distance(&q) >= rho {
            true
        } else if depth >= DISK_DEPTH {
            let c = [(q[0][0] + q[1][0] + q[2][0]) / 3.0, (q[0][1] + q[1][1] + q[2][1]) / 3.0];
            r(c) >= rho
        } else {
            for kid in split(sub) {
                walk(p, &kid, w, rho, area, depth + 1, acc)?;
            }
            return Ok(());
        };
        if take {
            let v = integrate_cell(p, sub, w, &[0.0; 3], rule(7), area)?;
            for m in 0..6 {
                acc[m] += v[m];
            }
        }
        Ok(())
    }
    let mut acc = [0.0; 6];
    walk(&p, &UNIT, w, rho, area, 0, &mut acc)?;
    Ok(unpack(acc))
}

/// `∫_T w φ_i φ_j` with a single application of a fixed-order rule.
pub fn element_mass_fixed(p: [[f64; 2]; 3], w: &WeightKind, vdist: [f64; 3], order: usize) -> Result<[[f64; 3]; 3]> {
    let r = triangle_quadrature(order)?;
    let area = 0.5 * area2(&p);
    Ok(unpack(integrate_cell(&p, &UNIT, w, &vdist, &r, area)?))
}

/// Assembles over triangles accepted by `keep`, in parallel chunks whose
/// triplet buffers are concatenated in triangle order.
fn assemble<F>(mesh: &TriMesh, dofs: &DofMap, keep: &(dyn Fn(usize) -> bool + Sync), element: F) -> Result<SparseSymMatrix>
where
    F: Fn(usize, [[f64; 2]; 3]) -> Result<[[f64; 3]; 3]> + Sync,
{
    const CHUNK: usize = 256;
    let tris: Vec<usize> = (0..mesh.n_triangles())
        .filter(|&t| keep(t) && mesh.triangles[t].iter().any(|&v| dofs.index[v].is_some()))
        .collect();
    let chunks: Vec<Result<Vec<(usize, usize, f64)>>> = tris
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut out = Vec::with_capacity(9 * chunk.len());
            for &t in chunk {
                let m = element(t, mesh.corners(t))?;
                let ids = mesh.triangles[t].map(|v| dofs.index[v]);
                for a in 0..3 {
                    let Some(i) = ids[a] else { continue };
                    for b in 0..3 {
                        let Some(j) = ids[b] else { continue };
                        out.push((i, j, m[a][b]));
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut trips = Vec::with_capacity(9 * tris.len());
    for c in chunks {
        trips.extend(c?);
    }
    SparseSymMatrix::from_triplets(dofs.len(), trips)
}

/// Stiffness form `∫ p ∇u·∇v` on the free vertices.
pub fn stiffness(mesh: &TriMesh, p: &ScalarField) -> Result<SparseSymMatrix> {
    let dofs = DofMap::new(mesh);
    assemble(mesh, &dofs, &|_| true, |_, c| element_stiffness(c, p))
}

/// Stiffness form over all vertices, before Dirichlet elimination.
pub fn stiffness_full(mesh: &TriMesh, p: &ScalarField) -> Result<SparseSymMatrix> {
    let dofs = DofMap::all(mesh.n_vertices());
    assemble(mesh, &dofs, &|_| true, |_, c| element_stiffness(c, p))
}

/// Weighted mass form `∫ w u v` on the free vertices.
pub fn mass(mesh: &TriMesh, w: &WeightKind) -> Result<SparseSymMatrix> {
    mass_where(mesh, w, &|_| true)
}

/// Weighted mass form restricted to the triangles accepted by `keep`.
pub fn mass_where(mesh: &TriMesh, w: &WeightKind, keep: &(dyn Fn(usize) -> bool + Sync)) -> Result<SparseSymMatrix> {
    let (w, scale) = w.canonical();
    let vd = w.check_mesh(mesh)?;
    let dofs = DofMap::new(mesh);
    let m = assemble(mesh, &dofs, keep, |t, c| {
        let vdist = if vd.is_empty() { [0.0; 3] } else { mesh.triangles[t].map(|v| vd[v]) };
        let free = mesh.triangles[t].map(|v| !mesh.dirichlet_mask[v]);
        element_mass_masked(c, &w, vdist, free)
    })?;
    Ok(if scale == 1.0 { m } else { m.scaled(scale) })
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT_TRI: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    #[test]
    fn unit_triangle_element_matrices() {
        let k = element_stiffness(UNIT_TRI, &ScalarField::one()).unwrap();
        let want = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
        let k2 = element_stiffness(UNIT_TRI, &ScalarField::constant(2.0)).unwrap();
        assert_eq!(k2[0][0], 2.0 * k[0][0]);
        let m = element_mass(UNIT_TRI, &WeightKind::One, [0.0; 3]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 } else { 1.0 } / 24.0;
                assert!((m[i][j] - e).abs() < 1e-15);
            }
        }
        assert!(element_stiffness(UNIT_TRI, &ScalarField::constant(-1.0)).is_err());
    }
}
