//! Floating-point linear algebra: a compressed sparse row matrix type plus
//! factorizations, eigensolvers and rank computations built on `faer`.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{FeecError, Result};

pub use faer::Mat as DenseMatrix;

/// Tolerances shared by the numerical decisions in the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Singular values below `rank * σ_max` count as zero.
    pub rank: f64,
    /// Relative residual above which a solve is reported as singular.
    pub residual: f64,
    /// Eigenvalues below `zero_eigenvalue * max|λ|` count as zero.
    pub zero_eigenvalue: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: 1e-9,
            residual: 1e-6,
            zero_eigenvalue: 1e-9,
        }
    }
}

/// Largest size for which dense factorizations are used as a fallback or oracle.
pub const DENSE_LIMIT: usize = 2500;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of {nrows}x{ncols}");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            row.sort_unstable_by_key(|e| e.0);
            let mut p = 0;
            while p < row.len() {
                let j = row[p].0;
                let mut s = 0.0;
                while p < row.len() && row[p].0 == j {
                    s += row[p].1;
                    p += 1;
                }
                indices.push(j);
                values.push(s);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[])
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &t)
    }

    pub fn from_dense(a: &Mat<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * xi;
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= alpha);
        s
    }

    /// `self + alpha · other`.
    pub fn add_scaled(&self, other: &Self, alpha: f64) -> Result<Self> {
        if (self.nrows, self.ncols) != (other.nrows, other.ncols) {
            return Err(FeecError::DimensionMismatch(format!(
                "{}x{} + {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, alpha * v)));
        Ok(Self::from_triplets(self.nrows, self.ncols, &t))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(FeecError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut t = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut touched = Vec::new();
        let mut mark = vec![false; other.ncols];
        for i in 0..self.nrows {
            for (l, a) in self.row(i) {
                for (j, b) in other.row(l) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                t.push((i, j, acc[j]));
                acc[j] = 0.0;
                mark[j] = false;
            }
            touched.clear();
        }
        Ok(Self::from_triplets(self.nrows, other.ncols, &t))
    }

    /// `selfᵀ · m · self`.
    pub fn congruence(&self, m: &Self) -> Result<Self> {
        self.transpose().mul(&m.mul(self)?)
    }

    /// Submatrix with the given rows and columns (in that order).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &c) in cols.iter().enumerate() {
            col_map[c] = new;
        }
        let mut t = Vec::new();
        for (ni, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if col_map[j] != usize::MAX {
                    t.push((ni, col_map[j], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &t)
    }

    /// Assembles a block matrix; `None` blocks are zero. Block sizes are taken
    /// from `row_sizes` and `col_sizes`.
    pub fn block(row_sizes: &[usize], col_sizes: &[usize], blocks: &[Vec<Option<&SparseMatrix>>]) -> Result<Self> {
        let mut t = Vec::new();
        let mut r0 = 0;
        for (bi, &rs) in row_sizes.iter().enumerate() {
            let mut c0 = 0;
            for (bj, &cs) in col_sizes.iter().enumerate() {
                if let Some(b) = blocks[bi][bj] {
                    if (b.nrows, b.ncols) != (rs, cs) {
                        return Err(FeecError::DimensionMismatch(format!(
                            "block ({bi}, {bj}) is {}x{}, expected {rs}x{cs}",
                            b.nrows, b.ncols
                        )));
                    }
                    t.extend(b.triplets().into_iter().map(|(i, j, v)| (r0 + i, c0 + j, v)));
                }
                c0 += cs;
            }
            r0 += rs;
        }
        Ok(Self::from_triplets(r0, col_sizes.iter().sum(), &t))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let t = self.transpose();
        match self.add_scaled(&t, -1.0) {
            Ok(d) => d.max_abs() <= rel_tol * scale,
            Err(_) => false,
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> =
            self.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| FeecError::Solver(format!("sparse matrix creation: {e:?}")))
    }

    /// Coordinate text format: header `rows cols nnz`, then `i j value` lines (0-based).
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{i} {j} {v}");
        }
        s
    }

    pub fn from_coordinate_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let bad = |l: &str| FeecError::Parse(format!("bad coordinate line {l:?}"));
        let header = lines.next().ok_or_else(|| FeecError::Parse("empty matrix file".into()))?;
        let h: Vec<usize> = header.split_whitespace().map(|t| t.parse().map_err(|_| bad(header))).collect::<Result<_>>()?;
        if h.len() != 3 {
            return Err(bad(header));
        }
        let mut t = Vec::with_capacity(h[2]);
        for l in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(l));
            }
            let i: usize = f[0].parse().map_err(|_| bad(l))?;
            let j: usize = f[1].parse().map_err(|_| bad(l))?;
            let v: f64 = f[2].parse().map_err(|_| bad(l))?;
            if i >= h[0] || j >= h[1] {
                return Err(bad(l));
            }
            t.push((i, j, v));
        }
        if t.len() != h[2] {
            return Err(FeecError::Parse(format!("expected {} entries, found {}", h[2], t.len())));
        }
        Ok(Self::from_triplets(h[0], h[1], &t))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `sqrt(xᵀ M x)`.
pub fn m_norm(m: &SparseMatrix, x: &[f64]) -> f64 {
    dot(x, &m.matvec(x)).max(0.0).sqrt()
}

fn col_to_vec(m: &Mat<f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

fn vec_to_mat(x: &[f64]) -> Mat<f64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

fn check_square(a: &SparseMatrix) -> Result<()> {
    if a.nrows != a.ncols {
        return Err(FeecError::DimensionMismatch(format!("{}x{} is not square", a.nrows, a.ncols)));
    }
    Ok(())
}

/// Sparse LU factorization of a general square matrix with singularity checks.
pub struct LuSolver {
    matrix: SparseMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    tol: Tolerances,
}

impl LuSolver {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        Self::with_tolerances(a, Tolerances::default())
    }

    pub fn with_tolerances(a: &SparseMatrix, tol: Tolerances) -> Result<Self> {
        check_square(a)?;
        let lu = a.to_faer()?.sp_lu().map_err(|_| singular(a, tol))?;
        Ok(Self {
            matrix: a.clone(),
            lu,
            tol,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.matrix.nrows {
            return Err(FeecError::DimensionMismatch(format!("rhs length {}", b.len())));
        }
        let mut x = vec_to_mat(b);
        self.lu.solve_in_place(x.as_mut());
        let mut x = col_to_vec(&x, 0);
        // one step of iterative refinement
        let r: Vec<f64> = self.matrix.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let mut dx = vec_to_mat(&r);
        self.lu.solve_in_place(dx.as_mut());
        for (xi, d) in x.iter_mut().zip(col_to_vec(&dx, 0)) {
            *xi += d;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(singular(&self.matrix, self.tol));
        }
        let r: Vec<f64> = self.matrix.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let scale = norm(b).max(self.matrix.max_abs() * norm(&x)).max(f64::MIN_POSITIVE);
        if norm(&r) > self.tol.residual * scale {
            return Err(singular(&self.matrix, self.tol));
        }
        Ok(x)
    }
}

fn singular(a: &SparseMatrix, tol: Tolerances) -> FeecError {
    let nullity = if a.nrows <= DENSE_LIMIT {
        rank_and_nullspace(&a.to_dense(), tol.rank).map(|r| a.ncols - r.rank).unwrap_or(0)
    } else {
        0
    };
    FeecError::Singular { nullity }
}

/// Solves `A x = b`, reporting singular systems as [`FeecError::Singular`].
pub fn solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    LuSolver::new(a)?.solve(b)
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct CholeskySolver {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl CholeskySolver {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        check_square(a)?;
        if !a.is_symmetric(1e-10) {
            return Err(FeecError::NotSpd("matrix is not symmetric".into()));
        }
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| FeecError::NotSpd(format!("{e:?}")))?;
        Ok(Self { llt, n: a.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(FeecError::DimensionMismatch(format!("rhs length {}", b.len())));
        }
        let mut x = vec_to_mat(b);
        self.llt.solve_in_place(x.as_mut());
        Ok(col_to_vec(&x, 0))
    }
}

/// Counts of positive, negative and zero eigenvalues of a symmetric matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

pub fn inertia(a: &SparseMatrix, tol: Tolerances) -> Result<Inertia> {
    check_square(a)?;
    let ev = symmetric_eigenvalues(&a.to_dense())?;
    let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let z = tol.zero_eigenvalue * scale;
    Ok(Inertia {
        positive: ev.iter().filter(|&&v| v > z).count(),
        negative: ev.iter().filter(|&&v| v < -z).count(),
        zero: ev.iter().filter(|&&v| v.abs() <= z).count(),
    })
}

pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| FeecError::NonConvergence(format!("symmetric eigenvalues: {e:?}")))
}

/// Eigenpairs of a symmetric matrix in nondecreasing order.
pub fn symmetric_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FeecError::NonConvergence(format!("symmetric eigen: {e:?}")))?;
    let s = evd.S().column_vector();
    let vals = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Dense generalized symmetric-definite eigenproblem `A x = λ B x` with `B`
/// positive definite. Eigenvectors are `B`-orthonormal columns.
pub fn generalized_eigen_dense(a: &Mat<f64>, b: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(FeecError::DimensionMismatch("generalized eigenproblem shapes".into()));
    }
    let llt = b.llt(Side::Lower).map_err(|e| FeecError::NotSpd(format!("{e:?}")))?;
    let l = llt.L().to_owned();
    // C = L⁻¹ A L⁻ᵀ
    let mut c = a.to_owned();
    l.as_ref().solve_lower_triangular_in_place(c.as_mut());
    let mut ct = c.transpose().to_owned();
    l.as_ref().solve_lower_triangular_in_place(ct.as_mut());
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (ct[(i, j)] + ct[(j, i)]));
    let (vals, y) = symmetric_eigen(&c)?;
    // x = L⁻ᵀ y
    let mut x = y;
    l.transpose().solve_upper_triangular_in_place(x.as_mut());
    Ok((vals, x))
}

/// Result of [`shift_invert_lanczos`].
#[derive(Clone, Debug)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Eigenvalues of the symmetric pencil `(A, B)` nearest to `shift`, with `B`
/// positive semidefinite, by Lanczos on `T = (A − shift·B)⁻¹ B` in the `B`
/// inner product with full reorthogonalization.
///
/// `solve_shifted(y)` must return `(A − shift·B)⁻¹ y` and `apply_b(x)` must
/// return `B x`. Directions in the kernel of `B` are invisible to the
/// iteration, so infinite eigenvalues of a singular `B` never appear.
pub fn shift_invert_lanczos(
    n: usize,
    nev: usize,
    shift: f64,
    solve_shifted: impl Fn(&[f64]) -> Result<Vec<f64>>,
    apply_b: impl Fn(&[f64]) -> Vec<f64>,
    seed: u64,
) -> Result<EigenResult> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut q0 = solve_shifted(&apply_b(&start))?;
    let mut bq0 = apply_b(&q0);
    let nrm = dot(&q0, &bq0).max(0.0).sqrt();
    if nrm == 0.0 {
        return Err(FeecError::NonConvergence("starting vector lies in the kernel of B".into()));
    }
    q0.iter_mut().for_each(|v| *v /= nrm);
    bq0.iter_mut().for_each(|v| *v /= nrm);
    let mut basis = vec![q0];
    let mut bbasis = vec![bq0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let max_steps = n.min(nev * 6 + 60).max(nev + 2);
    let mut steps_checked = (nev * 2 + 20).min(max_steps);
    loop {
        while basis.len() <= steps_checked && alpha.len() < max_steps {
            let j = basis.len() - 1;
            let mut w = solve_shifted(&bbasis[j])?;
            let a = dot(&w, &bbasis[j]);
            // full reorthogonalization in the B inner product, twice
            for _ in 0..2 {
                for (q, bq) in basis.iter().zip(&bbasis) {
                    let c = dot(&w, bq);
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            alpha.push(a);
            let mut bw = apply_b(&w);
            let b = dot(&w, &bw).max(0.0).sqrt();
            if b <= 1e-13 * a.abs().max(1e-300) || basis.len() >= n {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|v| *v /= b);
            bw.iter_mut().for_each(|v| *v /= b);
            basis.push(w);
            bbasis.push(bw);
        }
        let m = alpha.len();
        let t = Mat::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j || j + 1 == i {
                beta[i.min(j)]
            } else {
                0.0
            }
        });
        let (theta, s) = symmetric_eigen(&t)?;
        // largest |θ| ↔ eigenvalues nearest the shift
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| theta[b].abs().partial_cmp(&theta[a].abs()).unwrap());
        let last_beta = if beta.len() >= m { beta[m - 1] } else { 0.0 };
        let take = nev.min(m);
        let converged = order[..take]
            .iter()
            .all(|&i| (last_beta * s[(m - 1, i)]).abs() <= 1e-10 * theta[i].abs());
        if converged || m >= max_steps || beta.len() < m {
            let mut pairs: Vec<(f64, Vec<f64>, f64)> = order[..take]
                .iter()
                .map(|&i| {
                    let mut x = vec![0.0; n];
                    for (k, q) in basis.iter().take(m).enumerate() {
                        let c = s[(k, i)];
                        x.iter_mut().zip(q).for_each(|(xi, qi)| *xi += c * qi);
                    }
                    let res = (last_beta * s[(m - 1, i)]).abs() / theta[i].abs().max(1e-300);
                    (shift + 1.0 / theta[i], x, res)
                })
                .collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            if !converged && beta.len() >= m {
                return Err(FeecError::NonConvergence(format!(
                    "Lanczos did not converge in {m} steps"
                )));
            }
            return Ok(EigenResult {
                values: pairs.iter().map(|p| p.0).collect(),
                vectors: pairs.iter().map(|p| p.1.clone()).collect(),
                residuals: pairs.iter().map(|p| p.2).collect(),
            });
        }
        steps_checked = (steps_checked * 2).min(max_steps);
    }
}

/// Numerical rank with a null space basis.
#[derive(Clone, Debug)]
pub struct RankInfo {
    pub rank: usize,
    /// Orthonormal basis of the right null space.
    pub nullspace: Vec<Vec<f64>>,
    /// Whether the rank is unchanged when the tolerance moves by a factor 10 either way.
    pub stable: bool,
    pub singular_values: Vec<f64>,
}

pub fn rank_and_nullspace(a: &Mat<f64>, rel_tol: f64) -> Result<RankInfo> {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return Ok(RankInfo {
            rank: 0,
            nullspace: (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            stable: true,
            singular_values: Vec::new(),
        });
    }
    let svd = a.svd().map_err(|e| FeecError::NonConvergence(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector();
    let sv: Vec<f64> = (0..m.min(n)).map(|i| s[i]).collect();
    let smax = sv.iter().fold(0.0f64, |x, &y| x.max(y));
    let count = |t: f64| sv.iter().filter(|&&v| v > t * smax).count();
    let rank = if smax == 0.0 { 0 } else { count(rel_tol) };
    let stable = smax == 0.0 || (count(rel_tol * 0.1) == rank && count(rel_tol * 10.0) == rank);
    let v = svd.V();
    let nullspace = (rank..n).map(|j| (0..n).map(|i| v[(i, j)]).collect()).collect();
    Ok(RankInfo {
        rank,
        nullspace,
        stable,
        singular_values: sv,
    })
}

/// Orthonormalizes `vectors` in the inner product of `m`, dropping vectors
/// that are dependent on earlier ones (relative tolerance `tol`).
pub fn m_gram_schmidt(vectors: &[Vec<f64>], m: &SparseMatrix, tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut mout: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let n0 = m_norm(m, v);
        if n0 == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for (q, mq) in out.iter().zip(&mout) {
                let c = dot(&w, mq);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let nw = m_norm(m, &w);
        if nw <= tol * n0 {
            continue;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        mout.push(m.matvec(&w));
        out.push(w);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn csr_basics() {
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 0, 2.0), (1, 2, 4.0), (0, 1, -1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![2.0, 4.0]);
        assert_eq!(a.matvec_transpose(&[1.0, 1.0]), vec![3.0, -1.0, 4.0]);
        let ata = a.transpose().mul(&a).unwrap();
        assert_eq!(ata.get(0, 0), 9.0);
        assert!(ata.is_symmetric(0.0));
        let back = SparseMatrix::from_coordinate_text(&a.to_coordinate_text()).unwrap();
        assert_eq!(back, a);
        let b = SparseMatrix::block(&[2, 1], &[3, 1], &[vec![Some(&a), None], vec![None, Some(&SparseMatrix::identity(1))]]).unwrap();
        assert_eq!((b.nrows(), b.ncols(), b.get(2, 3)), (3, 4, 1.0));
    }

    #[test]
    fn solvers_and_singularity() {
        let a = laplacian_1d(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let y = solve(&a, &b).unwrap();
        assert!(y.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-10));
        let y = CholeskySolver::new(&a).unwrap().solve(&b).unwrap();
        assert!(y.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-10));
        // pure Neumann Laplacian has constants in its kernel
        let mut t = a.triplets();
        t.push((0, 0, -1.0));
        t.push((49, 49, -1.0));
        let s = SparseMatrix::from_triplets(50, 50, &t);
        let rhs: Vec<f64> = (0..50).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(solve(&s, &rhs), Err(FeecError::Singular { nullity: 1 })));
        assert!(CholeskySolver::new(&s.scale(-1.0)).is_err());
    }

    #[test]
    fn saddle_inertia() {
        // [[I, Bᵀ], [B, 0]] with B of full row rank 1 has inertia (2, 1, 0)
        let k = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (0, 2, 1.0), (2, 0, 1.0), (1, 2, 2.0), (2, 1, 2.0)]);
        let i = inertia(&k, Tolerances::default()).unwrap();
        assert_eq!((i.positive, i.negative, i.zero), (2, 1, 0));
    }

    #[test]
    fn eigensolvers_agree() {
        let n = 80;
        let a = laplacian_1d(n);
        let h = 1.0 / (n as f64 + 1.0);
        let m = SparseMatrix::from_triplets(
            n,
            n,
            &a.triplets().into_iter().map(|(i, j, v)| (i, j, if i == j { 4.0 * h / 6.0 } else { -v * h / 6.0 })).collect::<Vec<_>>(),
        );
        let a = a.scale(1.0 / h);
        let (dense, vecs) = generalized_eigen_dense(&a.to_dense(), &m.to_dense()).unwrap();
        // B-orthonormality
        let x0 = col_to_vec(&vecs, 0);
        assert!((m_norm(&m, &x0) - 1.0).abs() < 1e-10);
        // first eigenvalue ≈ π² on (0, 1)
        assert!((dense[0] - std::f64::consts::PI.powi(2)).abs() < 1e-2);
        let shifted = a.add_scaled(&m, -1.0).unwrap();
        let lu = LuSolver::new(&shifted).unwrap();
        let r = shift_invert_lanczos(n, 5, 1.0, |y| lu.solve(y), |x| m.matvec(x), 1).unwrap();
        for (l, d) in r.values.iter().zip(&dense) {
            assert!((l - d).abs() < 1e-8 * d, "{l} vs {d}");
        }
    }

    #[test]
    fn rank_and_gram_schmidt() {
        let a = Mat::from_fn(3, 3, |i, j| ((i + 1) * (j + 1)) as f64);
        let r = rank_and_nullspace(&a, 1e-9).unwrap();
        assert_eq!(r.rank, 1);
        assert_eq!(r.nullspace.len(), 2);
        assert!(r.stable);
        let m = SparseMatrix::diagonal(&[1.0, 2.0, 3.0]);
        let q = m_gram_schmidt(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 1.0, 1.0]], &m, 1e-12);
        assert_eq!(q.len(), 2);
        assert!(dot(&q[0], &m.matvec(&q[1])).abs() < 1e-14);
    }
}
