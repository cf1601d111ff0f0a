//! Graded conforming triangulations with the singular point at the origin.
//!
//! Curved domains are meshed on rings `|x| = ρ_k` that are spaced according to
//! the local size `h·(ρ/ext)^{β/(1+β)}`. Close to the origin the rings become
//! geometric (uniform in `log ρ`) and continue down to a deep floor, which keeps
//! the discrete quotient from feeling the truncation of the singular layer.
//! Consecutive rings are stitched by a zipper that merges them in angular order, the innermost ring
//! by a fan around the origin.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{curve, hole_point, polygon_signed_area, DomainSpec, FermiChart};

/// Innermost ring radius relative to the domain extent.
pub const DEFAULT_FLOOR_REL: f64 = 1e-24;
/// Log-radial (and angular) step of the geometric core.
pub const DEFAULT_CORE_STEP: f64 = PI / 4.0;
/// Smallest admissible floor relative to the extent; keeps `|x|²` well away
/// from underflow.
const FLOOR_LIMIT: f64 = 1e-60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshOptions {
    /// Target edge length at the outer boundary.
    pub h: f64,
    /// Grading exponent; 0 gives a quasi-uniform mesh.
    pub beta: f64,
    /// Absolute innermost ring radius; `None` means `DEFAULT_FLOOR_REL·extent`.
    #[serde(default)]
    pub floor: Option<f64>,
    #[serde(default = "default_core_step")]
    pub core_step: f64,
}

fn default_core_step() -> f64 {
    DEFAULT_CORE_STEP
}

impl MeshOptions {
    pub fn new(h: f64, beta: f64) -> Self {
        Self { h, beta, floor: None, core_step: DEFAULT_CORE_STEP }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = Some(floor);
        self
    }
}

/// Triangulation together with its boundary bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub dirichlet_mask: Vec<bool>,
    /// Bit set of the boundary curves a vertex lies on (see [`DomainSpec::project_to_curve`]).
    pub boundary_tags: Vec<u8>,
    pub origin_id: usize,
    pub grading_beta: f64,
    pub parent_domain: DomainSpec,
    /// Number of uniform refinements applied after generation.
    #[serde(default)]
    pub level: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshQuality {
    pub min_angle_deg: f64,
    pub max_aspect_ratio: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub n_free: usize,
}

#[inline]
fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Smallest interior angle of a triangle, in radians.
pub(crate) fn min_angle(p: [[f64; 2]; 3]) -> f64 {
    let mut best = PI;
    for k in 0..3 {
        let a = p[k];
        let b = p[(k + 1) % 3];
        let c = p[(k + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cross = (u[0] * v[1] - u[1] * v[0]).abs();
        let dot = u[0] * v[0] + u[1] * v[1];
        best = best.min(cross.atan2(dot));
    }
    best
}

impl TriMesh {
    /// Builds a mesh from raw parts; the Dirichlet mask is derived from topology.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_tags: Option<Vec<u8>>,
        domain: DomainSpec,
        grading_beta: f64,
    ) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::Mesh(format!("triangle references vertex {t} of {n}")));
        }
        let origin_id = vertices
            .iter()
            .position(|v| v[0].hypot(v[1]) < 1e-14)
            .ok_or_else(|| Error::Mesh("no vertex at the origin".into()))?;
        let mut mesh = Self {
            dirichlet_mask: vec![false; n],
            boundary_tags: boundary_tags.unwrap_or_else(|| vec![0; n]),
            vertices,
            triangles,
            origin_id,
            grading_beta,
            parent_domain: domain,
            level: 0,
        };
        if mesh.boundary_tags.len() != n {
            return Err(Error::Mesh("boundary tag count differs from vertex count".into()));
        }
        mesh.update_mask();
        for (i, m) in mesh.dirichlet_mask.iter().enumerate() {
            if *m && mesh.boundary_tags[i] == 0 {
                mesh.boundary_tags[i] = curve::STRAIGHT;
            }
        }
        Ok(mesh)
    }

    fn update_mask(&mut self) {
        let mut mask = vec![false; self.vertices.len()];
        for (a, b) in self.boundary_edges() {
            mask[a] = true;
            mask[b] = true;
        }
        self.dirichlet_mask = mask;
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_free(&self) -> usize {
        self.dirichlet_mask.iter().filter(|m| !**m).count()
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * orient(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// `sup |x|` over the vertices.
    pub fn extent(&self) -> f64 {
        self.vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::with_capacity(3 * self.triangles.len());
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Edges adjacent to exactly one triangle, in triangle order.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let counts = self.edge_counts();
        let mut out = Vec::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if counts[&(a.min(b), a.max(b))] == 1 {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Stable 64-bit FNV-1a digest of the geometry and connectivity.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                hash ^= *b as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for v in &self.vertices {
            eat(&v[0].to_bits().to_le_bytes());
            eat(&v[1].to_bits().to_le_bytes());
        }
        for t in &self.triangles {
            for i in t {
                eat(&(*i as u64).to_le_bytes());
            }
        }
        format!("{hash:016x}")
    }

    /// Verifies the structural invariants; `min_angle_deg` additionally
    /// bounds the triangle angles from below.
    pub fn check_invariants(&self, min_angle_deg: Option<f64>) -> Result<()> {
        let n = self.n_vertices();
        if self.dirichlet_mask.len() != n || self.boundary_tags.len() != n {
            return Err(Error::Mesh("per-vertex arrays have inconsistent lengths".into()));
        }
        let o = self.vertices.get(self.origin_id).ok_or_else(|| Error::Mesh("origin id out of range".into()))?;
        if o[0].hypot(o[1]) >= 1e-14 {
            return Err(Error::Mesh(format!("origin vertex sits at {o:?}")));
        }
        if !self.dirichlet_mask[self.origin_id] {
            return Err(Error::Mesh("origin vertex is not on the Dirichlet boundary".into()));
        }
        for t in 0..self.n_triangles() {
            if self.triangles[t].iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("triangle {t} references a missing vertex")));
            }
            let a = self.signed_area(t);
            if !(a > 0.0) {
                return Err(Error::Mesh(format!("triangle {t} has signed area {a:e}")));
            }
            if let Some(lim) = min_angle_deg {
                let ang = min_angle(self.corners(t)).to_degrees();
                if ang < lim {
                    return Err(Error::Mesh(format!("triangle {t} has a {ang:.2}° angle")));
                }
            }
        }
        for (_, c) in self.edge_counts() {
            if c > 2 {
                return Err(Error::Mesh("edge shared by more than two triangles".into()));
            }
        }
        for (a, b) in self.boundary_edges() {
            if !self.dirichlet_mask[a] || !self.dirichlet_mask[b] {
                return Err(Error::Mesh(format!("boundary edge ({a}, {b}) is not Dirichlet")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a mesh document and re-checks its structure.
    pub fn from_json(s: &str) -> Result<Self> {
        let mut mesh: TriMesh = serde_json::from_str(s)?;
        let mask = mesh.dirichlet_mask.clone();
        mesh.update_mask();
        if mask != mesh.dirichlet_mask {
            return Err(Error::Mesh("stored Dirichlet mask disagrees with the boundary".into()));
        }
        mesh.check_invariants(None)?;
        Ok(mesh)
    }
}

/// Statistics of a mesh.
pub fn mesh_quality(mesh: &TriMesh) -> MeshQuality {
    let mut q = MeshQuality {
        min_angle_deg: 180.0,
        max_aspect_ratio: 1.0,
        h_max: 0.0,
        h_min: f64::INFINITY,
        n_vertices: mesh.n_vertices(),
        n_triangles: mesh.n_triangles(),
        n_free: mesh.n_free(),
    };
    for t in 0..mesh.n_triangles() {
        let p = mesh.corners(t);
        q.min_angle_deg = q.min_angle_deg.min(min_angle(p).to_degrees());
        let e = [dist(p[0], p[1]), dist(p[1], p[2]), dist(p[2], p[0])];
        let area = 0.5 * orient(p[0], p[1], p[2]).abs();
        let s = 0.5 * (e[0] + e[1] + e[2]);
        // circumradius / (2·inradius), equal to 1 for the equilateral triangle
        let aspect = (e[0] * e[1] * e[2] / (4.0 * area)) / (2.0 * area / s);
        q.max_aspect_ratio = q.max_aspect_ratio.max(aspect);
        for l in e {
            q.h_max = q.h_max.max(l);
            q.h_min = q.h_min.min(l);
        }
    }
    q
}

// ---------------------------------------------------------------------------
// sizing

struct Sizing {
    h: f64,
    ext: f64,
    gamma: f64,
    kappa: f64,
    floor: f64,
    rho_core: f64,
}

impl Sizing {
    /// `width` is the opening angle of the wedge; the core step shrinks to its
    /// angular cell so that core cells stay roughly square.
    fn new(opts: &MeshOptions, ext: f64, width: f64) -> Result<Self> {
        let gamma = opts.beta / (1.0 + opts.beta);
        let kappa = width / (width / opts.core_step - 1e-9).ceil().max(1.0);
        // radius where the graded log-step reaches the core step
        let mut rho_core = (opts.h / (kappa * ext.powf(gamma))).powf(1.0 / (1.0 - gamma));
        rho_core = rho_core.min(ext);
        let floor = if opts.beta == 0.0 {
            opts.floor.map_or(rho_core, |f| f.min(rho_core))
        } else {
            let f = opts.floor.unwrap_or(DEFAULT_FLOOR_REL * ext);
            if !(f > 0.0) || f >= ext {
                return Err(Error::Mesh(format!("grading floor {f:e} must lie in (0, {ext})")));
            }
            if f < FLOOR_LIMIT * ext {
                return Err(Error::Mesh(format!(
                    "grading floor {f:e} is too deep for extent {ext} (|x|² would underflow)"
                )));
            }
            f
        };
        let rho_core = rho_core.max(floor);
        Ok(Self { h: opts.h, ext, gamma, kappa, floor, rho_core })
    }

    /// Log-radial step at radius `rho`.
    fn step(&self, rho: f64) -> f64 {
        (self.h * (rho / self.ext).powf(self.gamma) / rho).min(self.kappa)
    }

    /// Physical target size at radius `rho`.
    fn local_h(&self, rho: f64) -> f64 {
        rho * self.step(rho)
    }

    fn c(&self) -> f64 {
        self.ext.powf(self.gamma) / (self.h * (1.0 - self.gamma))
    }

    fn s_core(&self) -> f64 {
        (self.rho_core / self.floor).ln() / self.kappa
    }

    /// Cumulative number of cells between the floor and `rho`.
    fn count(&self, rho: f64) -> f64 {
        let e = 1.0 - self.gamma;
        if rho <= self.rho_core {
            (rho / self.floor).ln() / self.kappa
        } else {
            self.s_core() + self.c() * (rho.powf(e) - self.rho_core.powf(e))
        }
    }

    fn inverse_count(&self, s: f64) -> f64 {
        let e = 1.0 - self.gamma;
        let sc = self.s_core();
        if s <= sc {
            self.floor * (self.kappa * s).exp()
        } else {
            ((s - sc) / self.c() + self.rho_core.powf(e)).powf(1.0 / e)
        }
    }

    /// Ring radii from `hi` down to `lo`, both included.
    fn radii(&self, lo: f64, hi: f64) -> Vec<f64> {
        let (slo, shi) = (self.count(lo), self.count(hi));
        let n = ((shi - slo).round() as usize).max(1);
        let mut out = Vec::with_capacity(n + 1);
        out.push(hi);
        for j in 1..n {
            out.push(self.inverse_count(shi - (shi - slo) * j as f64 / n as f64));
        }
        out.push(lo);
        out
    }

    fn angular_count(&self, width: f64, rho: f64) -> usize {
        ((width / self.step(rho)).round() as usize).max(1)
    }
}

// ---------------------------------------------------------------------------
// construction helpers

#[derive(Default)]
struct Builder {
    verts: Vec<[f64; 2]>,
    tags: Vec<u8>,
    tris: Vec<[usize; 3]>,
}

impl Builder {
    fn add(&mut self, p: [f64; 2], tag: u8) -> usize {
        self.verts.push(p);
        self.tags.push(tag);
        self.verts.len() - 1
    }

    fn quality(&self, t: [usize; 3]) -> f64 {
        let p = [self.verts[t[0]], self.verts[t[1]], self.verts[t[2]]];
        if orient(p[0], p[1], p[2]) > 0.0 {
            min_angle(p)
        } else {
            -1.0
        }
    }

    /// Unwrapped polar angles along a chain (closed chains get the starting
    /// point appended one turn later).
    fn chain_angles(&self, c: &[usize], closed: bool) -> Vec<f64> {
        let mut ang: Vec<f64> = c.iter().map(|&k| self.verts[k][1].atan2(self.verts[k][0])).collect();
        for k in 1..ang.len() {
            while ang[k] < ang[k - 1] - PI {
                ang[k] += TAU;
            }
            while ang[k] > ang[k - 1] + PI {
                ang[k] -= TAU;
            }
        }
        if closed {
            ang.push(ang[0] + TAU);
        }
        ang
    }

    /// Triangulates the band between two angularly ordered chains by merging
    /// them in angular order. Closed chains must start at the same polar angle.
    fn zipper(&mut self, inner: &[usize], outer: &[usize], closed: bool) -> Result<()> {
        let (m, n) = if closed { (inner.len(), outer.len()) } else { (inner.len() - 1, outer.len() - 1) };
        let ti = self.chain_angles(inner, closed);
        let mut to = self.chain_angles(outer, closed);
        let shift = ((ti[0] - to[0]) / TAU).round() * TAU;
        to.iter_mut().for_each(|t| *t += shift);
        let at = |c: &[usize], k: usize| c[k % c.len()];
        let (mut i, mut j) = (0, 0);
        while i < m || j < n {
            let by_outer = (j < n).then(|| [at(inner, i), at(outer, j), at(outer, j + 1)]);
            let by_inner = (i < m).then(|| [at(inner, i), at(outer, j), at(inner, i + 1)]);
            let qo = by_outer.map_or(-2.0, |t| self.quality(t));
            let qi = by_inner.map_or(-2.0, |t| self.quality(t));
            if qo <= 0.0 && qi <= 0.0 {
                return Err(Error::Mesh(format!("band triangulation failed at chain positions ({i}, {j})")));
            }
            let prefer_outer = if i == m {
                true
            } else if j == n {
                false
            } else {
                // advance the chain whose next point comes first
                to[j + 1] - 0.5 * (to[j + 1] - to[j]) <= ti[i + 1] - 0.5 * (ti[i + 1] - ti[i])
            };
            let take_outer = if prefer_outer { qo > 0.0 } else { qi <= 0.0 };
            if take_outer {
                self.tris.push(by_outer.unwrap());
                j += 1;
            } else {
                self.tris.push(by_inner.unwrap());
                i += 1;
            }
        }
        Ok(())
    }

    fn fan(&mut self, centre: usize, ring: &[usize]) {
        for w in ring.windows(2) {
            self.tris.push([centre, w[0], w[1]]);
        }
    }
}

/// Angular layout of one ring of an open polar domain.
struct Wedge {
    lo: f64,
    hi: f64,
    lo_point: Box<dyn Fn(f64) -> [f64; 2]>,
    hi_point: Box<dyn Fn(f64) -> [f64; 2]>,
}

fn ring_points(b: &mut Builder, rho: f64, lo: f64, hi: f64, n: usize, ends: ([f64; 2], [f64; 2]), tags: (u8, u8, u8)) -> Vec<usize> {
    let (tag_lo, tag_mid, tag_hi) = tags;
    (0..=n)
        .map(|j| {
            if j == 0 {
                b.add(ends.0, tag_lo)
            } else if j == n {
                b.add(ends.1, tag_hi)
            } else {
                let phi = lo + (hi - lo) * j as f64 / n as f64;
                b.add([rho * phi.cos(), rho * phi.sin()], tag_mid)
            }
        })
        .collect()
}

/// Meshes `{ρ < r, lo < φ < hi}` with straight side rays.
fn polar_wedge(r: f64, w: &Wedge, tag_lo: u8, tag_hi: u8, tag_outer: u8, sizing: &Sizing) -> Result<Builder> {
    let mut b = Builder::default();
    let origin = b.add([0.0, 0.0], tag_lo | tag_hi);
    let radii = sizing.radii(sizing.floor, r);
    let width = w.hi - w.lo;
    let mut counts: Vec<usize> = radii.iter().map(|&rho| sizing.angular_count(width, rho)).collect();
    for k in (0..counts.len() - 1).rev() {
        counts[k] = counts[k].max(counts[k + 1]);
    }
    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(radii.len());
    for (k, &rho) in radii.iter().enumerate() {
        let outer = if k == 0 { tag_outer } else { 0 };
        let ends = ((w.lo_point)(rho), (w.hi_point)(rho));
        rings.push(ring_points(&mut b, rho, w.lo, w.hi, counts[k], ends, (tag_lo | outer, outer, tag_hi | outer)));
    }
    for k in 0..rings.len() - 1 {
        let (outer, inner) = (rings[k].clone(), rings[k + 1].clone());
        b.zipper(&inner, &outer, false)?;
    }
    let last = rings.last().unwrap().clone();
    b.fan(origin, &last);
    Ok(b)
}

/// Rings below `HOLE_SPLIT·a` are clipped by the hole; there a ring still
/// meets the hole circle at `acos(HOLE_SPLIT/2) ≈ 32°`.
const HOLE_SPLIT: f64 = 1.7;
/// Largest local edge length next to the hole of an exterior cap, relative to
/// the hole radius.
const HOLE_H: f64 = 0.4;

fn exterior_cap(r: f64, a: f64, sizing: &Sizing) -> Result<Builder> {
    const HOLE: u8 = 1;
    const OUTER: u8 = 2;
    let alpha = |rho: f64| 0.5 * PI + (rho / (2.0 * a)).min(1.0).asin();
    // wedge endpoints on the hole, accurate for tiny ρ
    let hole_end = |rho: f64, sign: f64| {
        let t = rho / (2.0 * a);
        [-rho * t, sign * rho * (1.0 - t * t).max(0.0).sqrt()]
    };
    let rho_w = HOLE_SPLIT * a;
    let rho_f = (4.0 - HOLE_SPLIT) * a;

    let mut b = Builder::default();
    let origin = b.add([0.0, 0.0], HOLE);

    // Past ρ_w the domain either wraps around the hole (loop mode) or, for
    // outer radii close to 2a, is cut along the rays ±α(ρ_w) to a subdomain.
    let loop_mode = r >= rho_f + 0.2 * a;
    let cap = (!loop_mode && r > rho_w).then_some(rho_w);
    let wedge_top = if loop_mode { rho_w } else { r };
    let mut radii = match cap {
        Some(c) => {
            let mut v = sizing.radii(c, r);
            v.extend(sizing.radii(sizing.floor, c).into_iter().skip(1));
            v
        }
        None => sizing.radii(sizing.floor, wedge_top),
    };
    radii.dedup();
    let alpha_cap = cap.map(alpha);
    let widths: Vec<f64> = radii
        .iter()
        .map(|&rho| 2.0 * alpha_cap.map_or(alpha(rho), |ac| alpha(rho).min(ac)))
        .collect();
    let mut counts: Vec<usize> = radii.iter().zip(&widths).map(|(&rho, &w)| sizing.angular_count(w, rho)).collect();
    for k in (0..counts.len() - 1).rev() {
        counts[k] = counts[k].max(counts[k + 1]);
    }
    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(radii.len());
    for (k, &rho) in radii.iter().enumerate() {
        let outer = if k == 0 && !loop_mode { OUTER } else { 0 };
        let half = 0.5 * widths[k];
        let (ends, side) = match (cap, alpha_cap) {
            (Some(c), Some(ac)) if rho > c => {
                let (s, co) = ac.sin_cos();
                (([rho * co, -rho * s], [rho * co, rho * s]), curve::STRAIGHT)
            }
            (Some(c), _) if rho == c => ((hole_end(rho, -1.0), hole_end(rho, 1.0)), HOLE | curve::STRAIGHT),
            _ => ((hole_end(rho, -1.0), hole_end(rho, 1.0)), HOLE),
        };
        rings.push(ring_points(&mut b, rho, -half, half, counts[k], ends, (side | outer, outer, side | outer)));
    }
    for k in 0..rings.len() - 1 {
        let (outer, inner) = (rings[k].clone(), rings[k + 1].clone());
        b.zipper(&inner, &outer, false)?;
    }
    b.fan(origin, &rings.last().unwrap().clone());
    if !loop_mode {
        return Ok(b);
    }

    // Closed loop: the ρ_w ring plus the back of the hole, where the hole
    // reads ρ = −2a cos φ. The loop starts at the back point (−2a, 0).
    let alpha_w = alpha(rho_w);
    let h2 = sizing.local_h(2.0 * a);
    let layers = (((rho_f - rho_w) / h2).round() as usize).max(1);
    // layers are thinnest at the back; match the spacing there
    let back_h = h2.min(1.5 * (rho_f - 2.0 * a) / layers as f64);
    let mut mb = (((TAU - 2.0 * alpha_w) * 2.0 * a / back_h).ceil() as usize).max(2);
    mb += mb % 2;
    let half = mb / 2;
    let back: Vec<usize> = (1..mb)
        .map(|j| {
            let phi = if j == half { PI } else { alpha_w + (TAU - 2.0 * alpha_w) * j as f64 / mb as f64 };
            b.add(hole_point(a, 2.0 * phi - PI), HOLE)
        })
        .collect();
    let mut prev = Vec::with_capacity(back.len() + rings[0].len());
    prev.push(back[half - 1]);
    prev.extend_from_slice(&back[half..]);
    prev.extend_from_slice(&rings[0]);
    prev.extend_from_slice(&back[..half - 1]);

    // Layers blend the loop into the circle ρ_f, both in radius and in the
    // angular distribution of their points.
    let loop_angles = b.chain_angles(&prev, true);
    let n_loop = prev.len();
    let loop_angle = |u: f64| {
        let pos = u * n_loop as f64;
        let i = (pos.floor() as usize).min(n_loop - 1);
        let f = pos - i as f64;
        let (a0, a1) = (loop_angles[i], loop_angles[i + 1]);
        let base = loop_angles[0] - PI;
        a0 + f * (a1 - a0) - base
    };
    let r0 = |phi: f64| if phi.cos() >= -rho_w / (2.0 * a) { rho_w } else { -2.0 * a * phi.cos() };
    let n0 = prev.len() as f64;
    let nf = sizing.angular_count(TAU, rho_f).max(3) as f64;
    for k in 1..=layers {
        let t = k as f64 / layers as f64;
        let n = (n0 + (nf - n0) * t).round().max(3.0) as usize;
        let ring: Vec<usize> = (0..n)
            .map(|j| {
                let u = j as f64 / n as f64;
                let phi = (1.0 - t) * loop_angle(u) + t * (PI + TAU * u);
                let rho = if k == layers { rho_f } else { r0(phi) + t * (rho_f - r0(phi)) };
                b.add([rho * phi.cos(), rho * phi.sin()], 0)
            })
            .collect();
        b.zipper(&prev, &ring, true)?;
        prev = ring;
    }
    for (k, &rho) in sizing.radii(rho_f, r).iter().enumerate().rev().skip(1) {
        let tag = if k == 0 { OUTER } else { 0 };
        let n = sizing.angular_count(TAU, rho).max(prev.len());
        let ring: Vec<usize> = (0..n)
            .map(|j| {
                let phi = PI + TAU * j as f64 / n as f64;
                b.add([rho * phi.cos(), rho * phi.sin()], tag)
            })
            .collect();
        b.zipper(&prev, &ring, true)?;
        prev = ring;
    }
    Ok(b)
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
fn ear_clip(v: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let mut tris = Vec::with_capacity(v.len() - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let mut best: Option<(usize, f64)> = None;
        for k in 0..m {
            let (p, c, n) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            if orient(v[p], v[c], v[n]) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&q| {
                q != p
                    && q != c
                    && q != n
                    && orient(v[p], v[c], v[q]) >= 0.0
                    && orient(v[c], v[n], v[q]) >= 0.0
                    && orient(v[n], v[p], v[q]) >= 0.0
            });
            if blocked {
                continue;
            }
            let q = min_angle([v[p], v[c], v[n]]);
            if best.is_none_or(|(_, bq)| q > bq) {
                best = Some((k, q));
            }
        }
        let (k, _) = best.ok_or_else(|| Error::Mesh("polygon is not simple".into()))?;
        tris.push([idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]]);
        idx.remove(k);
    }
    if orient(v[idx[0]], v[idx[1]], v[idx[2]]) <= 0.0 {
        return Err(Error::Mesh("polygon is not simple".into()));
    }
    tris.push([idx[0], idx[1], idx[2]]);
    Ok(tris)
}

// ---------------------------------------------------------------------------
// public entry points

/// Generates a graded mesh with the default floor and core step.
pub fn generate(domain: &DomainSpec, h: f64, beta: f64) -> Result<TriMesh> {
    generate_with(domain, &MeshOptions::new(h, beta))
}

pub fn generate_with(domain: &DomainSpec, opts: &MeshOptions) -> Result<TriMesh> {
    domain.validate()?;
    if !(opts.h > 0.0 && opts.h.is_finite()) {
        return Err(Error::Mesh(format!("h must be positive, got {}", opts.h)));
    }
    if !(opts.beta >= 0.0 && opts.beta.is_finite()) {
        return Err(Error::Mesh(format!("beta must be non-negative, got {}", opts.beta)));
    }
    if !(opts.core_step > 0.0 && opts.core_step <= PI / 2.0) {
        return Err(Error::Mesh(format!("core step must lie in (0, π/2], got {}", opts.core_step)));
    }
    if let DomainSpec::Polygon { vertices } = domain {
        return polygon_mesh(domain, vertices, opts.h);
    }
    let ext = match domain {
        DomainSpec::FermiHalfBall { r, .. } => *r,
        _ => domain.extent(),
    };
    if opts.h >= ext / 4.0 {
        return Err(Error::Mesh(format!("h = {} must be below a quarter of the extent {ext}", opts.h)));
    }
    let width = match domain {
        DomainSpec::Sector { theta, .. } => *theta,
        _ => PI,
    };
    // the hole circle must be resolved whatever the outer radius
    let mut opts = opts.clone();
    if let DomainSpec::ExteriorCap { hole_radius, .. } = domain {
        let gamma = opts.beta / (1.0 + opts.beta);
        let at_hole = (ext / (2.0 * hole_radius)).max(1.0).powf(gamma);
        opts.h = opts.h.min(HOLE_H * hole_radius * at_hole);
        // a uniform core would be clipped hard by the hole; keep a few geometric rings
        if opts.beta == 0.0 && opts.floor.is_none() {
            opts.floor = Some(0.25 * hole_radius);
        }
    }
    let sizing = Sizing::new(&opts, ext, width)?;
    let b = match domain {
        DomainSpec::HalfDisk { r } | DomainSpec::FermiHalfBall { r, .. } => {
            let w = Wedge {
                lo: -PI / 2.0,
                hi: PI / 2.0,
                lo_point: Box::new(|rho| [0.0, -rho]),
                hi_point: Box::new(|rho| [0.0, rho]),
            };
            polar_wedge(*r, &w, 1, 1, 2, &sizing)?
        }
        DomainSpec::Sector { theta, r } => {
            let th = *theta;
            let w = Wedge {
                lo: 0.0,
                hi: th,
                lo_point: Box::new(|rho| [rho, 0.0]),
                hi_point: Box::new(move |rho| [rho * th.cos(), rho * th.sin()]),
            };
            polar_wedge(*r, &w, 1, 2, 4, &sizing)?
        }
        DomainSpec::ExteriorCap { r, hole_radius } => exterior_cap(*r, *hole_radius, &sizing)?,
        DomainSpec::Polygon { .. } => unreachable!(),
    };
    let Builder { mut verts, tags, tris } = b;
    if let DomainSpec::FermiHalfBall { chart, .. } = domain {
        let ch = FermiChart { kind: *chart, dim: 2 };
        for v in verts.iter_mut() {
            // the half-disk lives in normal coordinates; rotate y¹ onto the first axis
            *v = ch.forward2(*v)?;
        }
    }
    let mut mesh = TriMesh::from_parts(verts, tris, Some(tags), domain.clone(), opts.beta)?;
    mesh.origin_id = 0;
    mesh.check_invariants(None)?;
    Ok(mesh)
}

fn polygon_mesh(domain: &DomainSpec, vertices: &[[f64; 2]], h: f64) -> Result<TriMesh> {
    if polygon_signed_area(vertices) <= 0.0 {
        return Err(Error::Domain("polygon vertices must be counter-clockwise".into()));
    }
    let tris = ear_clip(vertices)?;
    let tags = vec![curve::STRAIGHT; vertices.len()];
    let mut mesh = TriMesh::from_parts(vertices.to_vec(), tris, Some(tags), domain.clone(), 0.0)?;
    mesh.check_invariants(None)?;
    for _ in 0..16 {
        let q = mesh_quality(&mesh);
        if q.h_max <= 1.5 * h {
            mesh.level = 0;
            return Ok(mesh);
        }
        mesh = refine(&mesh)?;
    }
    Err(Error::Mesh(format!("h = {h} needs more than 16 refinements of the polygon")))
}

/// Boundary-curve bit shared by both ends of a boundary edge.
fn edge_curve(ta: u8, tb: u8) -> Option<u8> {
    let common = ta & tb & !curve::STRAIGHT;
    (common != 0).then(|| common.trailing_zeros() as u8)
}

fn edge_midpoint(domain: &DomainSpec, a: [f64; 2], b: [f64; 2], on_curve: Option<u8>) -> Result<[f64; 2]> {
    if let DomainSpec::FermiHalfBall { chart, r } = domain {
        let ch = FermiChart { kind: *chart, dim: 2 };
        let ya = ch.inverse2(a)?;
        let yb = ch.inverse2(b)?;
        let mut y = [0.5 * (ya[0] + yb[0]), 0.5 * (ya[1] + yb[1])];
        match on_curve {
            Some(0) => y[0] = 0.0,
            Some(1) => {
                let n = y[0].hypot(y[1]);
                y = [r * y[0] / n, r * y[1] / n];
            }
            _ => {}
        }
        y[0] = y[0].max(0.0);
        return ch.forward2(y);
    }
    let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    match on_curve {
        Some(c) => domain.project_to_curve(c, m),
        None => Ok(m),
    }
}

/// Uniform red refinement; returns the refined mesh and, for every new
/// vertex, the two parent vertices whose edge it splits.
pub fn refine_with_parents(mesh: &TriMesh) -> Result<(TriMesh, Vec<[usize; 2]>)> {
    let counts = mesh.edge_counts();
    let mut verts = mesh.vertices.clone();
    let mut tags = mesh.boundary_tags.clone();
    let mut parents = Vec::new();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::with_capacity(counts.len());
    let mut tris = Vec::with_capacity(4 * mesh.triangles.len());
    for t in &mesh.triangles {
        let mut m = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            m[k] = match mid.get(&key) {
                Some(&id) => id,
                None => {
                    let boundary = counts[&key] == 1;
                    let (c, tag) = if boundary {
                        let c = edge_curve(tags[a], tags[b]);
                        let common = tags[a] & tags[b];
                        (c, if common == 0 { curve::STRAIGHT } else { common })
                    } else {
                        (None, 0)
                    };
                    let p = edge_midpoint(&mesh.parent_domain, verts[key.0], verts[key.1], c)?;
                    verts.push(p);
                    tags.push(tag);
                    parents.push([key.0, key.1]);
                    let id = verts.len() - 1;
                    mid.insert(key, id);
                    id
                }
            };
        }
        let [a, b, c] = *t;
        tris.push([a, m[0], m[2]]);
        tris.push([m[0], b, m[1]]);
        tris.push([m[2], m[1], c]);
        tris.push([m[0], m[1], m[2]]);
    }
    let mut out = TriMesh {
        dirichlet_mask: Vec::new(),
        vertices: verts,
        triangles: tris,
        boundary_tags: tags,
        origin_id: mesh.origin_id,
        grading_beta: mesh.grading_beta,
        parent_domain: mesh.parent_domain.clone(),
        level: mesh.level + 1,
    };
    out.update_mask();
    Ok((out, parents))
}

pub fn refine(mesh: &TriMesh) -> Result<TriMesh> {
    refine_with_parents(mesh).map(|(m, _)| m)
}
