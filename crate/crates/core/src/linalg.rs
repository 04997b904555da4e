//! Sparse matrices and the direct/iterative solvers behind every assembly and
//! basis computation.
//!
//! Direct factorizations (sparse Cholesky/LU, dense Cholesky) come from
//! `faer`, pinned to sequential mode so repeated runs are bit-identical. The
//! preconditioned conjugate-gradient path is written here and takes over past
//! the direct-size thresholds.

use std::sync::Once;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

fn faer_sequential() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Tolerances and size thresholds for the solver stack.
#[derive(Clone, Copy, Debug)]
pub struct SolverOpts {
    /// Relative 2-norm residual target for linear solves.
    pub rtol: f64,
    /// Iteration cap = `iter_cap_factor`·√ndof for conjugate gradients.
    pub iter_cap_factor: usize,
    /// Coarse systems below this use a dense Cholesky factorization.
    pub max_dense_dofs: usize,
    /// Fine systems below this use a sparse Cholesky factorization.
    pub max_sparse_direct_dofs: usize,
    /// Max |B·x − g| allowed for saddle-point constraints.
    pub tol_constraint: f64,
    /// Relative stationarity residual allowed for saddle-point solves.
    pub tol_stationarity: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            rtol: 1e-9,
            iter_cap_factor: 50,
            max_dense_dofs: 10_000,
            max_sparse_direct_dofs: 200_000,
            tol_constraint: 1e-9,
            tol_stationarity: 1e-9,
        }
    }
}

/// What a solve cost and what it achieved.
#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    /// CG iterations, or refinement passes for direct solves.
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Accumulates (row, col, value) triplets; duplicates sum on build.
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> CooBuilder {
        CooBuilder {
            nrows,
            ncols,
            triplets: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> CooBuilder {
        CooBuilder {
            nrows,
            ncols,
            triplets: Vec::with_capacity(cap),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.triplets.push((row, col, value));
    }

    pub fn build(mut self) -> CsrMatrix {
        // stable sort keeps duplicate summation in insertion order
        self.triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(self.triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            cols,
            vals,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Diagonal matrix from its entries.
    pub fn from_diagonal(diag: &[f64]) -> CsrMatrix {
        let n = diag.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: diag.to_vec(),
        }
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.indptr[r]..self.indptr[r + 1];
        (&self.cols[range.clone()], &self.vals[range])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// yᵀ ← xᵀ·A, i.e. Aᵀx for symmetric-free use.
    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * x[r];
            }
        }
        y
    }

    /// xᵀ·A·y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        let mut acc = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut row_acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                row_acc += v * y[c];
            }
            acc += x[r] * row_acc;
        }
        acc
    }

    /// xᵀ·A·x.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.nrows.min(self.ncols);
        (0..n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs_diag(&self) -> f64 {
        self.diagonal().iter().fold(0.0, |m, v| v.abs().max(m))
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = CooBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                b.add(c, r, v);
            }
        }
        b.build()
    }

    /// max |A − Aᵀ| over all entries.
    pub fn symmetry_defect(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let t = self.transpose();
        let mut defect = 0.0f64;
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = t.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                match (ca.get(i), cb.get(j)) {
                    (Some(&c1), Some(&c2)) if c1 == c2 => {
                        defect = defect.max((va[i] - vb[j]).abs());
                        i += 1;
                        j += 1;
                    }
                    (Some(&c1), Some(&c2)) if c1 < c2 => {
                        defect = defect.max(va[i].abs());
                        i += 1;
                    }
                    (Some(_), Some(_)) => {
                        defect = defect.max(vb[j].abs());
                        j += 1;
                    }
                    (Some(_), None) => {
                        defect = defect.max(va[i].abs());
                        i += 1;
                    }
                    (None, Some(_)) => {
                        defect = defect.max(vb[j].abs());
                        j += 1;
                    }
                    (None, None) => break,
                }
            }
        }
        defect
    }

    /// (A + Aᵀ)/2, for killing round-off asymmetry after Galerkin assembly.
    pub fn symmetrized(&self) -> CsrMatrix {
        let t = self.transpose();
        CsrMatrix::linear_combination(0.5, self, 0.5, &t)
    }

    /// α·A + β·B with matching shapes.
    pub fn linear_combination(alpha: f64, a: &CsrMatrix, beta: f64, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!((a.nrows, a.ncols), (b.nrows, b.ncols));
        let mut indptr = vec![0usize; a.nrows + 1];
        let mut cols = Vec::with_capacity(a.nnz() + b.nnz());
        let mut vals = Vec::with_capacity(a.nnz() + b.nnz());
        for r in 0..a.nrows {
            let (ca, va) = a.row(r);
            let (cb, vb) = b.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                match (ca.get(i), cb.get(j)) {
                    (Some(&c1), Some(&c2)) if c1 == c2 => {
                        cols.push(c1);
                        vals.push(alpha * va[i] + beta * vb[j]);
                        i += 1;
                        j += 1;
                    }
                    (Some(&c1), c2) if c2.is_none() || c1 < *c2.unwrap() => {
                        cols.push(c1);
                        vals.push(alpha * va[i]);
                        i += 1;
                    }
                    _ => {
                        cols.push(cb[j]);
                        vals.push(beta * vb[j]);
                        j += 1;
                    }
                }
            }
            indptr[r + 1] = cols.len();
        }
        CsrMatrix {
            nrows: a.nrows,
            ncols: a.ncols,
            indptr,
            cols,
            vals,
        }
    }

    /// Dense row-major copy; test/inspection use only.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows * self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[r * self.ncols + c] = v;
            }
        }
        out
    }

    fn to_faer(&self) -> SparseColMat<usize, f64> {
        let mut trips = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                trips.push(Triplet::new(r, c, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .expect("csr indices are in range")
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| x.abs().max(m))
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.matvec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

/// Jacobi-preconditioned conjugate gradients.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    rtol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = match x0 {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = residual(a, &x, b);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(ri, zi)| ri * zi).sum();
    let mut q = vec![0.0; n];
    for iter in 0..max_iter {
        if norm2(&r) <= rtol * bnorm {
            // recursion residual passed; confirm with the true residual
            let true_r = residual(a, &x, b);
            let rel = norm2(&true_r) / bnorm;
            if rel <= rtol {
                return Ok((
                    x,
                    SolveStats {
                        iterations: iter,
                        relative_residual: rel,
                    },
                ));
            }
            r = true_r;
            z = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
            p = z.clone();
            rz = r.iter().zip(&z).map(|(ri, zi)| ri * zi).sum();
        }
        a.matvec_into(&p, &mut q);
        let pq: f64 = p.iter().zip(&q).map(|(pi, qi)| pi * qi).sum();
        if pq <= 0.0 {
            return Err(Error::Singular(format!(
                "conjugate gradients hit a nonpositive curvature {pq:.3e}; operator not SPD"
            )));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(ri, zi)| ri * zi).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let achieved = norm2(&residual(a, &x, b)) / bnorm;
    if achieved <= rtol {
        return Ok((
            x,
            SolveStats {
                iterations: max_iter,
                relative_residual: achieved,
            },
        ));
    }
    Err(Error::Solver {
        msg: format!("conjugate gradients exceeded {max_iter} iterations"),
        residual: achieved,
        iterations: max_iter,
    })
}

enum SpdBackend {
    DenseLlt(faer::linalg::solvers::Llt<f64>),
    SparseLlt(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Iterative,
}

/// Symmetric positive definite solver with a verified residual.
///
/// Direct backends re-check the true residual and apply iterative refinement
/// until the relative 2-norm residual meets `rtol`; failure to converge is an
/// error carrying the achieved residual.
pub struct SpdSolver {
    a: CsrMatrix,
    backend: SpdBackend,
    rtol: f64,
    max_iter: usize,
}

fn iter_cap(n: usize, factor: usize) -> usize {
    (factor * (n as f64).sqrt().ceil() as usize).max(100)
}

impl SpdSolver {
    /// Backend choice for fine-grid operators: sparse direct up to the
    /// threshold, conjugate gradients beyond.
    pub fn fine(a: &CsrMatrix, opts: &SolverOpts) -> Result<SpdSolver> {
        faer_sequential();
        let n = a.nrows();
        let backend = if n <= opts.max_sparse_direct_dofs {
            SpdBackend::SparseLlt(a.to_faer().sp_cholesky(faer::Side::Lower).map_err(|e| {
                Error::Singular(format!("sparse Cholesky failed, operator not SPD: {e:?}"))
            })?)
        } else {
            SpdBackend::Iterative
        };
        Ok(SpdSolver {
            a: a.clone(),
            backend,
            rtol: opts.rtol,
            max_iter: iter_cap(n, opts.iter_cap_factor),
        })
    }

    /// Backend choice for coarse systems: dense Cholesky below the dense
    /// threshold, conjugate gradients above.
    pub fn coarse(a: &CsrMatrix, opts: &SolverOpts) -> Result<SpdSolver> {
        faer_sequential();
        let n = a.nrows();
        let backend = if n < opts.max_dense_dofs {
            let dense = Mat::from_fn(n, n, |i, j| a.get(i, j));
            SpdBackend::DenseLlt(dense.llt(faer::Side::Lower).map_err(|e| {
                Error::Singular(format!("dense Cholesky failed, matrix not SPD: {e:?}"))
            })?)
        } else {
            SpdBackend::Iterative
        };
        Ok(SpdSolver {
            a: a.clone(),
            backend,
            rtol: opts.rtol,
            max_iter: iter_cap(n, opts.iter_cap_factor),
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        self.solve_with_guess(b, None)
    }

    pub fn solve_with_guess(&self, b: &[f64], x0: Option<&[f64]>) -> Result<(Vec<f64>, SolveStats)> {
        let n = self.a.nrows();
        assert_eq!(b.len(), n);
        let factor_apply: Box<dyn Fn(&[f64]) -> Vec<f64>> = match &self.backend {
            SpdBackend::DenseLlt(llt) => Box::new(move |rhs: &[f64]| {
                let m = Mat::from_fn(n, 1, |i, _| rhs[i]);
                let sol = llt.solve(&m);
                (0..n).map(|i| sol[(i, 0)]).collect()
            }),
            SpdBackend::SparseLlt(llt) => Box::new(move |rhs: &[f64]| {
                let m = Mat::from_fn(n, 1, |i, _| rhs[i]);
                let sol = llt.solve(&m);
                (0..n).map(|i| sol[(i, 0)]).collect()
            }),
            SpdBackend::Iterative => {
                let (x, stats) = pcg(&self.a, b, x0, self.rtol, self.max_iter)?;
                return Ok((x, stats));
            }
        };
        let bnorm = norm2(b).max(f64::MIN_POSITIVE);
        let mut x = factor_apply(b);
        let mut passes = 0;
        loop {
            let r = residual(&self.a, &x, b);
            let rel = norm2(&r) / bnorm;
            if rel <= self.rtol {
                return Ok((
                    x,
                    SolveStats {
                        iterations: passes,
                        relative_residual: rel,
                    },
                ));
            }
            if passes >= 3 {
                return Err(Error::Solver {
                    msg: "direct solve failed to reach tolerance after refinement".into(),
                    residual: rel,
                    iterations: passes,
                });
            }
            let dx = factor_apply(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            passes += 1;
        }
    }
}

/// Solution of the constrained-minimization KKT system.
#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub primal: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// max |B·x − g|.
    pub constraint_residual: f64,
    /// ‖A·x + Bᵀλ − f‖ relative to the term magnitudes.
    pub stationarity_residual: f64,
}

/// Solve [A Bᵀ; B 0]·[x; λ] = [f; g] by a sparse LU factorization of the
/// equilibrated KKT matrix, with iterative refinement.
///
/// The constraint rows are scaled by max|diag A| so the factorization does not
/// see the raw h²-sized constraint entries; multipliers are rescaled back.
/// Residual tolerances come from `opts` and violations are hard errors.
pub fn solve_saddle(
    a: &CsrMatrix,
    b: &CsrMatrix,
    f: &[f64],
    g: &[f64],
    opts: &SolverOpts,
) -> Result<SaddleSolution> {
    faer_sequential();
    let n = a.nrows();
    let k = b.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.ncols(), n);
    assert_eq!(f.len(), n);
    assert_eq!(g.len(), k);
    let scale = a.max_abs_diag().max(f64::MIN_POSITIVE);

    let mut kkt = CooBuilder::with_capacity(n + k, n + k, a.nnz() + 2 * b.nnz());
    for r in 0..n {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            kkt.add(r, c, v);
        }
    }
    for r in 0..k {
        let (cols, vals) = b.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            kkt.add(n + r, c, scale * v);
            kkt.add(c, n + r, scale * v);
        }
    }
    let kkt = kkt.build();
    let lu = kkt
        .to_faer()
        .sp_lu()
        .map_err(|e| Error::Singular(format!("saddle-point factorization failed: {e:?}")))?;
    let total = n + k;
    let mut rhs = vec![0.0; total];
    rhs[..n].copy_from_slice(f);
    for (slot, &gi) in rhs[n..].iter_mut().zip(g) {
        *slot = scale * gi;
    }
    let apply = |v: &[f64]| -> Vec<f64> {
        let m = Mat::from_fn(total, 1, |i, _| v[i]);
        let sol = lu.solve(&m);
        (0..total).map(|i| sol[(i, 0)]).collect()
    };
    let mut sol = apply(&rhs);
    let rhs_norm = norm2(&rhs).max(f64::MIN_POSITIVE);
    for _ in 0..2 {
        let r = residual(&kkt, &sol, &rhs);
        if norm2(&r) <= 1e-14 * rhs_norm {
            break;
        }
        let d = apply(&r);
        for (si, di) in sol.iter_mut().zip(&d) {
            *si += di;
        }
    }

    let primal = sol[..n].to_vec();
    let multipliers: Vec<f64> = sol[n..].iter().map(|&m| scale * m).collect();

    let mut cres = residual(b, &primal, g);
    for v in &mut cres {
        *v = -*v;
    }
    let constraint_residual = norm_inf(&cres);
    let ax = a.matvec(&primal);
    let btl = b.transpose_matvec(&multipliers);
    let mut stat = vec![0.0; n];
    for i in 0..n {
        stat[i] = ax[i] + btl[i] - f[i];
    }
    let denom = (norm2(f) + norm2(&ax) + norm2(&btl)).max(f64::MIN_POSITIVE);
    let stationarity_residual = norm2(&stat) / denom;

    if constraint_residual > opts.tol_constraint || stationarity_residual > opts.tol_stationarity {
        return Err(Error::Solver {
            msg: format!(
                "saddle-point residuals above tolerance (constraint {constraint_residual:.3e}, \
                 stationarity {stationarity_residual:.3e})"
            ),
            residual: constraint_residual.max(stationarity_residual),
            iterations: 1,
        });
    }
    Ok(SaddleSolution {
        primal,
        multipliers,
        constraint_residual,
        stationarity_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut b = CooBuilder::new(n, n);
        for i in 0..n {
            b.add(i, i, 2.0);
            if i > 0 {
                b.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn builder_sums_duplicates_and_sorts() {
        let mut b = CooBuilder::new(3, 3);
        b.add(2, 1, 1.0);
        b.add(0, 0, 1.5);
        b.add(2, 1, 2.0);
        b.add(1, 2, -1.0);
        b.add(0, 0, 0.5);
        let m = b.build();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(2, 1), 3.0);
        assert_eq!(m.get(1, 2), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        let (cols, _) = m.row(2);
        assert_eq!(cols, &[1]);
    }

    #[test]
    fn empty_rows_are_fine() {
        let mut b = CooBuilder::new(4, 4);
        b.add(3, 0, 1.0);
        let m = b.build();
        assert_eq!(m.row(0).0.len(), 0);
        assert_eq!(m.row(1).0.len(), 0);
        assert_eq!(m.row(3).0, &[0]);
        assert_eq!(m.matvec(&[2.0, 0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = laplace_1d(5);
        let dense = m.to_dense();
        let x: Vec<f64> = (0..5).map(|i| (i as f64 + 1.0) * 0.7).collect();
        let y = m.matvec(&x);
        for r in 0..5 {
            let want: f64 = (0..5).map(|c| dense[r * 5 + c] * x[c]).sum();
            assert!((y[r] - want).abs() < 1e-14);
        }
        let q = m.quadratic(&x);
        let want: f64 = (0..5).map(|r| x[r] * y[r]).sum();
        assert!((q - want).abs() < 1e-12);
    }

    #[test]
    fn transpose_and_symmetry_defect() {
        let mut b = CooBuilder::new(2, 2);
        b.add(0, 1, 3.0);
        b.add(1, 0, 1.0);
        let m = b.build();
        assert_eq!(m.symmetry_defect(), 2.0);
        let t = m.transpose();
        assert_eq!(t.get(1, 0), 3.0);
        let s = m.symmetrized();
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.symmetry_defect(), 0.0);
        assert_eq!(laplace_1d(7).symmetry_defect(), 0.0);
    }

    #[test]
    fn linear_combination_merges_patterns() {
        let a = laplace_1d(4);
        let d = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0]);
        let s = CsrMatrix::linear_combination(1.0, &a, 0.5, &d);
        assert_eq!(s.get(0, 0), 2.5);
        assert_eq!(s.get(2, 2), 3.5);
        assert_eq!(s.get(2, 1), -1.0);
        let z = CsrMatrix::linear_combination(1.0, &a, -1.0, &a);
        assert!(z.vals.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pcg_solves_spd_system() {
        let a = laplace_1d(50);
        let xt: Vec<f64> = (0..50).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let b = a.matvec(&xt);
        let (x, stats) = pcg(&a, &b, None, 1e-12, 10_000).unwrap();
        for (xi, ti) in x.iter().zip(&xt) {
            assert!((xi - ti).abs() < 1e-8);
        }
        assert!(stats.relative_residual <= 1e-12);
    }

    #[test]
    fn pcg_zero_rhs_returns_zero() {
        let a = laplace_1d(10);
        let (x, stats) = pcg(&a, &vec![0.0; 10], None, 1e-10, 100).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn pcg_reports_cap_with_achieved_residual() {
        let a = laplace_1d(80);
        let b: Vec<f64> = (0..80).map(|i| (i as f64).sin()).collect();
        let err = pcg(&a, &b, None, 1e-14, 3).unwrap_err();
        match err {
            Error::Solver {
                residual,
                iterations,
                ..
            } => {
                assert!(residual > 1e-14);
                assert_eq!(iterations, 3);
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn direct_backends_match_pcg() {
        let a = laplace_1d(40);
        let b: Vec<f64> = (0..40).map(|i| ((i % 5) as f64) - 2.0).collect();
        let opts = SolverOpts::default();
        let fine = SpdSolver::fine(&a, &opts).unwrap();
        let coarse = SpdSolver::coarse(&a, &opts).unwrap();
        let (x1, _) = fine.solve(&b).unwrap();
        let (x2, _) = coarse.solve(&b).unwrap();
        let (x3, _) = pcg(&a, &b, None, 1e-12, 10_000).unwrap();
        for i in 0..40 {
            assert!((x1[i] - x3[i]).abs() < 1e-8);
            assert!((x2[i] - x3[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn iterative_backend_kicks_in_above_threshold() {
        let a = laplace_1d(30);
        let opts = SolverOpts {
            max_sparse_direct_dofs: 10,
            ..SolverOpts::default()
        };
        let s = SpdSolver::fine(&a, &opts).unwrap();
        assert!(matches!(s.backend, SpdBackend::Iterative));
        let b = a.matvec(&vec![1.0; 30]);
        let (x, _) = s.solve(&b).unwrap();
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn non_spd_is_rejected() {
        let mut b = CooBuilder::new(2, 2);
        b.add(0, 0, 1.0);
        b.add(1, 1, -1.0);
        let m = b.build();
        assert!(SpdSolver::fine(&m, &SolverOpts::default()).is_err());
        assert!(SpdSolver::coarse(&m, &SolverOpts::default()).is_err());
    }

    #[test]
    fn saddle_matches_hand_solution() {
        // minimize ½xᵀAx subject to x₀ + x₁ = 1, with A = diag(2, 4):
        // x = (2/3, 1/3), λ = −4/3
        let a = CsrMatrix::from_diagonal(&[2.0, 4.0]);
        let mut bb = CooBuilder::new(1, 2);
        bb.add(0, 0, 1.0);
        bb.add(0, 1, 1.0);
        let b = bb.build();
        let sol = solve_saddle(&a, &b, &[0.0, 0.0], &[1.0], &SolverOpts::default()).unwrap();
        assert!((sol.primal[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((sol.primal[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((sol.multipliers[0] + 4.0 / 3.0).abs() < 1e-12);
        assert!(sol.constraint_residual <= 1e-12);
        assert!(sol.stationarity_residual <= 1e-12);
    }

    #[test]
    fn saddle_scaling_invariance() {
        // same system with B rows scaled like h²-sized pairings
        let a = laplace_1d(6);
        let mut bb = CooBuilder::new(2, 6);
        for c in 0..3 {
            bb.add(0, c, 1e-4);
        }
        for c in 3..6 {
            bb.add(1, c, 1e-4);
        }
        let b = bb.build();
        let g = [1.0, 0.0];
        let sol = solve_saddle(&a, &b, &[0.0; 6], &g, &SolverOpts::default()).unwrap();
        let bx = b.matvec(&sol.primal);
        assert!((bx[0] - 1.0).abs() < 1e-10);
        assert!(bx[1].abs() < 1e-10);
    }

    #[test]
    fn saddle_rejects_rank_deficient_constraints() {
        let a = CsrMatrix::from_diagonal(&[1.0, 1.0]);
        let mut bb = CooBuilder::new(2, 2);
        bb.add(0, 0, 1.0);
        bb.add(1, 0, 1.0); // duplicate constraint row
        let b = bb.build();
        let got = solve_saddle(&a, &b, &[0.0, 0.0], &[1.0, 2.0], &SolverOpts::default());
        assert!(got.is_err());
    }
}
