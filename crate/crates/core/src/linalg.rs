//! Sparse symmetric solves and the minimal generalized eigenpair.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::assembly::{mass, stiffness, WeightKind};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::mesh::TriMesh;
use crate::sparse::{dot, norm2, SparseSymMatrix};

/// Default tolerance on the B-relative eigen-residual.
pub const EIG_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖Ax − b‖₂ / ‖b‖₂`
    pub residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients. Hitting `maxit` is reported through
/// `converged`, not as an error.
pub fn cg_solve(a: &SparseSymMatrix, b: &[f64], tol: f64, maxit: usize, pre: Preconditioner) -> Result<CgResult> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::LinAlg(format!("right-hand side has length {}, matrix is {n}×{n}", b.len())));
    }
    let inv_diag: Vec<f64> = match pre {
        Preconditioner::None => vec![1.0; n],
        Preconditioner::Jacobi => a
            .diagonal()
            .iter()
            .map(|&d| if d > 0.0 { Ok(1.0 / d) } else { Err(Error::LinAlg(format!("non-positive diagonal {d}"))) })
            .collect::<Result<_>>()?,
    };
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgResult { x, iterations: 0, residual: 0.0, converged: true });
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut it = 0;
    let mut res = 1.0;
    while it < maxit {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinAlg(format!("matrix is not positive definite (pᵀAp = {pap:e})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        res = norm2(&r) / bnorm;
        if res <= tol {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // report the true residual rather than the recursively updated one
    let ax = a.matvec(&x);
    res = res.max(ax.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt() / bnorm);
    Ok(CgResult { x, iterations: it, residual: res, converged: res <= tol })
}

/// Reverse Cuthill–McKee ordering; `perm[k]` is the original index of the
/// `k`-th unknown.
pub fn rcm_ordering(a: &SparseSymMatrix) -> Vec<usize> {
    let n = a.n();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs = |start: usize, seen: &mut Vec<bool>, out: &mut Vec<usize>| -> usize {
        // returns the last vertex of the final level, used to find peripheral nodes
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        let mut last = start;
        while let Some(v) = q.pop_front() {
            out.push(v);
            last = v;
            let mut nb: Vec<usize> = a.row(v).0.iter().copied().filter(|&j| !seen[j]).collect();
            nb.sort_by_key(|&j| (degree[j], j));
            for j in nb {
                seen[j] = true;
                q.push_back(j);
            }
        }
        last
    };
    for root in 0..n {
        if seen[root] {
            continue;
        }
        // two sweeps to approach a pseudo-peripheral start
        let mut scratch_seen = seen.clone();
        let mut scratch = Vec::new();
        let far = bfs(root, &mut scratch_seen, &mut scratch);
        let mut scratch_seen = seen.clone();
        scratch.clear();
        let far = bfs(far, &mut scratch_seen, &mut scratch);
        bfs(far, &mut seen, &mut order);
    }
    order.reverse();
    order
}

/// Envelope (profile) Cholesky factorization under an RCM ordering.
#[derive(Clone, Debug)]
pub struct Cholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &SparseSymMatrix) -> Result<Self> {
        let n = a.n();
        let perm = rcm_ordering(a);
        let mut inv = vec![0usize; n];
        for (k, &v) in perm.iter().enumerate() {
            inv[v] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for &j in a.row(perm[i]).0 {
                first[i] = first[i].min(inv[j]);
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for i in 0..n {
            let (cols, vals) = a.row(perm[i]);
            for (j, v) in cols.iter().zip(vals) {
                let jj = inv[*j];
                if jj <= i {
                    values[offset[i] + jj - first[i]] = *v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let ri = offset[i] - fi;
                let rj = offset[j] - fj;
                let mut s = values[ri + j];
                for k in k0..j {
                    s -= values[ri + k] * values[rj + k];
                }
                if j < i {
                    values[ri + j] = s / values[rj + j];
                } else {
                    if !(s > 0.0) {
                        return Err(Error::LinAlg(format!("matrix is not positive definite (pivot {s:e} at {i})")));
                    }
                    values[ri + i] = s.sqrt();
                }
            }
        }
        Ok(Self { perm, first, offset, values })
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored factor entries.
    pub fn profile(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y: Vec<f64> = self.perm.iter().map(|&v| b[v]).collect();
        for i in 0..n {
            let ri = self.offset[i] - self.first[i];
            let mut s = y[i];
            for k in self.first[i]..i {
                s -= self.values[ri + k] * y[k];
            }
            y[i] = s / self.values[ri + i];
        }
        for i in (0..n).rev() {
            let ri = self.offset[i] - self.first[i];
            y[i] /= self.values[ri + i];
            let yi = y[i];
            for k in self.first[i]..i {
                y[k] -= self.values[ri + k] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &v) in self.perm.iter().enumerate() {
            x[v] = y[k];
        }
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub value: f64,
    /// B-normalized, largest-magnitude entry positive.
    pub vector: Vec<f64>,
    /// `‖Au − μBu‖₂ / ‖Bu‖₂`
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Rayleigh quotient after each iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct EigOptions<'a> {
    /// Defaults to [`EIG_TOL`].
    pub tol: Option<f64>,
    /// Defaults to `50·√n`.
    pub max_iter: Option<usize>,
    pub x0: Option<&'a [f64]>,
    /// SPD matrix whose inverse preconditions the iteration; defaults to
    /// `A + σB` with the smallest tried `σ ≥ 0` that factors.
    pub precond: Option<&'a SparseSymMatrix>,
    /// Already factored preconditioner; takes precedence over `precond`.
    pub factor: Option<&'a Cholesky>,
}

/// Smallest eigenpair of `Au = μBu` with default options.
pub fn min_gen_eig(a: &SparseSymMatrix, b: &SparseSymMatrix, tol: f64, x0: Option<&[f64]>) -> Result<EigenResult> {
    min_gen_eig_with(a, b, &EigOptions { tol: Some(tol), x0, ..Default::default() })
}

fn default_precond(a: &SparseSymMatrix, b: &SparseSymMatrix) -> Result<Cholesky> {
    if let Ok(c) = Cholesky::factor(a) {
        return Ok(c);
    }
    let da = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let db = b.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut sigma = 1e-2 * da.max(f64::MIN_POSITIVE) / db;
    for _ in 0..80 {
        if let Ok(c) = Cholesky::factor(&a.add_scaled(b, sigma)?) {
            return Ok(c);
        }
        sigma *= 2.0;
    }
    Err(Error::LinAlg("could not build a positive definite preconditioner A + σB".into()))
}

/// Smallest eigenpair of a small symmetric pencil given as Gram matrices,
/// after dropping the numerically dependent directions of `gb`.
fn small_pencil_min(ga: &DMatrix<f64>, gb: &DMatrix<f64>) -> Result<(f64, Vec<f64>, usize)> {
    let e = SymmetricEigen::new(gb.clone());
    let dmax = e.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    if !(dmax > 0.0) || e.eigenvalues.iter().any(|&d| d < -1e-8 * dmax) {
        return Err(Error::LinAlg("B is not positive definite on the search space".into()));
    }
    let keep: Vec<usize> = (0..gb.nrows()).filter(|&k| e.eigenvalues[k] > 1e-12 * dmax).collect();
    let m = gb.nrows();
    let mut t = DMatrix::zeros(m, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let s = 1.0 / e.eigenvalues[k].sqrt();
        for r in 0..m {
            t[(r, c)] = e.eigenvectors[(r, k)] * s;
        }
    }
    let red = t.transpose() * ga * &t;
    let red = 0.5 * (&red + red.transpose());
    let re = SymmetricEigen::new(red);
    let (imin, vmin) = re
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    let c = &t * re.eigenvectors.column(imin);
    Ok((vmin, c.iter().copied().collect(), keep.len()))
}

fn fix_sign(x: &mut [f64]) {
    let mut best = 0;
    for i in 0..x.len() {
        if x[i].abs() > x[best].abs() {
            best = i;
        }
    }
    if x.get(best).is_some_and(|v| *v < 0.0) {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Locally optimal preconditioned conjugate-gradient minimization of the
/// Rayleigh quotient `uᵀAu / uᵀBu` (single vector).
pub fn min_gen_eig_with(a: &SparseSymMatrix, b: &SparseSymMatrix, opts: &EigOptions) -> Result<EigenResult> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::LinAlg(format!("dimension mismatch {n} vs {}", b.n())));
    }
    if n == 0 {
        return Err(Error::LinAlg("empty system".into()));
    }
    if let Some(d) = b.diagonal().into_iter().find(|d| !(*d > 0.0)) {
        return Err(Error::LinAlg(format!("B is not positive definite (diagonal entry {d:e})")));
    }
    let tol = opts.tol.unwrap_or(EIG_TOL);
    let max_iter = opts.max_iter.unwrap_or_else(|| ((50.0 * (n as f64).sqrt()).ceil() as usize).max(50));
    let owned;
    let pre = match (opts.factor, opts.precond) {
        (Some(f), _) => f,
        (None, Some(p)) => {
            owned = Cholesky::factor(p)?;
            &owned
        }
        (None, None) => {
            owned = default_precond(a, b)?;
            &owned
        }
    };
    if pre.n() != n {
        return Err(Error::LinAlg(format!("preconditioner has size {}, expected {n}", pre.n())));
    }

    let abs_diag: Vec<f64> = a.diagonal().iter().map(|d| d.abs()).collect();
    let mut x: Vec<f64> = match opts.x0 {
        Some(x0) if x0.len() == n && x0.iter().any(|v| *v != 0.0) => x0.to_vec(),
        Some(x0) if x0.len() != n => return Err(Error::LinAlg(format!("start vector has length {}, expected {n}", x0.len()))),
        _ => vec![1.0; n],
    };
    let bnorm = |v: &[f64], bv: &[f64]| -> Result<f64> {
        let q = dot(v, bv);
        if !(q > 1e-300) {
            return Err(Error::LinAlg(format!("breakdown: B-norm² of iterate is {q:e}")));
        }
        Ok(q.sqrt())
    };
    let mut bx = b.matvec(&x);
    let s = bnorm(&x, &bx)?;
    x.iter_mut().for_each(|v| *v /= s);
    let mut ax = a.matvec(&x);
    bx = b.matvec(&x);
    let mut mu = dot(&x, &ax);
    let mut p: Option<Vec<f64>> = None;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut residual;
    let mut converged = false;
    loop {
        let r: Vec<f64> = ax.iter().zip(&bx).map(|(u, v)| u - mu * v).collect();
        residual = norm2(&r) / norm2(&bx);
        if residual <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut basis = vec![x.clone(), pre.solve(&r)];
        if let Some(p) = &p {
            basis.push(p.clone());
        }
        let mut abasis = Vec::with_capacity(3);
        let mut bbasis = Vec::with_capacity(3);
        abasis.push(ax.clone());
        bbasis.push(bx.clone());
        for v in basis.iter_mut().skip(1) {
            let bv = b.matvec(v);
            let q = dot(v, &bv);
            let s = if q > 1e-300 { 1.0 / q.sqrt() } else { 0.0 };
            v.iter_mut().for_each(|e| *e *= s);
            abasis.push(a.matvec(v));
            bbasis.push(bv.iter().map(|e| e * s).collect());
        }
        let m = basis.len();
        let mut ga = DMatrix::zeros(m, m);
        let mut gb = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let va = 0.5 * (dot(&basis[i], &abasis[j]) + dot(&basis[j], &abasis[i]));
                let vb = 0.5 * (dot(&basis[i], &bbasis[j]) + dot(&basis[j], &bbasis[i]));
                ga[(i, j)] = va;
                ga[(j, i)] = va;
                gb[(i, j)] = vb;
                gb[(j, i)] = vb;
            }
        }
        let (_, c, rank) = small_pencil_min(&ga, &gb)?;
        let mut xn = vec![0.0; n];
        let mut pn = vec![0.0; n];
        for (k, ck) in c.iter().enumerate() {
            for i in 0..n {
                xn[i] += ck * basis[k][i];
            }
            if k > 0 {
                for i in 0..n {
                    pn[i] += ck * basis[k][i];
                }
            }
        }
        let bxn = b.matvec(&xn);
        let s = bnorm(&xn, &bxn)?;
        xn.iter_mut().for_each(|v| *v /= s);
        ax = a.matvec(&xn);
        bx = b.matvec(&xn);
        let mu_new = dot(&xn, &ax) / dot(&xn, &bx);
        // Rayleigh–Ritz over a space containing x cannot raise the quotient;
        // round-off is measured against Σ|A_ii|x_i², the size of the terms
        // that cancel in xᵀAx
        let scale: f64 = abs_diag.iter().zip(&xn).map(|(d, v)| d * v * v).sum::<f64>() / dot(&xn, &bx);
        if mu_new > mu + 1e-10 * scale.max(mu.abs()) {
            return Err(Error::LinAlg(format!("Rayleigh quotient increased from {mu} to {mu_new}")));
        }
        let stalled = rank == 1;
        mu = mu_new;
        history.push(mu);
        x = xn;
        p = Some(pn);
        if stalled {
            let r: Vec<f64> = ax.iter().zip(&bx).map(|(u, v)| u - mu * v).collect();
            residual = norm2(&r) / norm2(&bx);
            converged = residual <= tol;
            break;
        }
    }
    fix_sign(&mut x);
    let bx = b.matvec(&x);
    let s = dot(&x, &bx).sqrt();
    x.iter_mut().for_each(|v| *v /= s);
    let value = a.quad_form(&x) / b.quad_form(&x);
    Ok(EigenResult { value, vector: x, residual, iterations, converged, history })
}

/// All eigenvalues of the dense pencil `(A, B)`, ascending.
pub fn dense_gen_eig(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.len();
    if n > 2000 {
        return Err(Error::LinAlg(format!("dense oracle limited to n ≤ 2000, got {n}")));
    }
    if b.len() != n || a.iter().chain(b).any(|r| r.len() != n) {
        return Err(Error::LinAlg("dense inputs must be square and of equal size".into()));
    }
    let am = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let bm = DMatrix::from_fn(n, n, |i, j| b[i][j]);
    let chol = bm.cholesky().ok_or_else(|| Error::LinAlg("B is not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::LinAlg("singular Cholesky factor".into()))?;
    let c = &linv * am * linv.transpose();
    let c = 0.5 * (&c + c.transpose());
    let mut vals: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Smallest Dirichlet eigenvalue of `−Δ` on the mesh.
pub fn smallest_dirichlet_eigenvalue(mesh: &TriMesh) -> Result<EigenResult> {
    let a = stiffness(mesh, &ScalarField::one())?;
    let b = mass(mesh, &WeightKind::One)?;
    let r = min_gen_eig(&a, &b, EIG_TOL, None)?;
    if !r.converged {
        return Err(Error::NotConverged { iterations: r.iterations, residual: r.residual });
    }
    Ok(r)
}
