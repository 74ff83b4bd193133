//! Discrete de Rham complexes: `D_k`, `M_k`, cohomology, harmonic forms,
//! the discrete Hodge decomposition and Poincaré constants.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::error::{FeecError, Result};
use crate::fem::{BoundaryCondition, FESpace};
use crate::linalg::{
    dot, generalized_eigen_dense, m_gram_schmidt, rank_and_nullspace, shift_invert_lanczos, DenseMatrix, LuSolver,
    SparseMatrix, Tolerances, DENSE_LIMIT,
};
use crate::mesh::SimplicialComplex;
use crate::polyform::{build_sequence, Family, PolySpaceSpec};
use crate::ratmat::QMatrix;
use crate::rational_from_i64;

/// Matrix-valued coefficient `a^k(x)` for each form degree, row-major
/// `C(n,k) × C(n,k)`.
pub type ComplexCoefficients<'a> = &'a (dyn Fn(usize, &[f64]) -> Vec<f64> + Sync);

/// A discrete subcomplex `Λ^0_h → … → Λ^n_h`.
#[derive(Debug)]
pub struct DiscreteComplex {
    mesh: Arc<SimplicialComplex>,
    specs: Vec<PolySpaceSpec>,
    bc: BoundaryCondition,
    spaces: Vec<FESpace>,
    derivatives: Vec<SparseMatrix>,
    masses: Vec<SparseMatrix>,
    tol: Tolerances,
    harmonic: Vec<OnceLock<Vec<Vec<f64>>>>,
}

/// Assembles the complex of pattern `pattern` starting at `P_rΛ^0`.
pub fn assemble_complex(
    mesh: &Arc<SimplicialComplex>,
    n: usize,
    r: u32,
    pattern: &[Family],
    bc: BoundaryCondition,
    coeffs: Option<ComplexCoefficients<'_>>,
) -> Result<DiscreteComplex> {
    if mesh.dim() != n {
        return Err(FeecError::DimensionMismatch(format!("{n}-dimensional complex on a {}-dimensional mesh", mesh.dim())));
    }
    let specs = build_sequence(n, r, pattern)?;
    DiscreteComplex::from_specs(mesh, specs, bc, coeffs)
}

impl DiscreteComplex {
    /// Builds the complex from an explicit list of spaces `k = 0..=n`.
    pub fn from_specs(
        mesh: &Arc<SimplicialComplex>,
        specs: Vec<PolySpaceSpec>,
        bc: BoundaryCondition,
        coeffs: Option<ComplexCoefficients<'_>>,
    ) -> Result<Self> {
        let n = mesh.dim();
        if specs.len() != n + 1 || specs.iter().enumerate().any(|(k, s)| s.k != k || s.n != n) {
            return Err(FeecError::InvalidPattern(format!("need one space per form degree 0..={n}")));
        }
        let spaces: Vec<FESpace> = specs
            .iter()
            .map(|s| FESpace::new(mesh.clone(), crate::fem::ElementType::Form(*s), bc))
            .collect::<Result<_>>()?;
        let derivatives = spaces
            .windows(2)
            .map(|w| w[0].derivative_matrix(&w[1]))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                FeecError::UnsupportedSpace(m) => FeecError::InvalidPattern(m),
                other => other,
            })?;
        let masses = spaces
            .iter()
            .enumerate()
            .map(|(k, s)| match coeffs {
                Some(a) => {
                    let ak = move |x: &[f64]| a(k, x);
                    s.mass_matrix(Some(&ak))
                }
                None => s.mass_matrix(None),
            })
            .collect();
        Ok(Self {
            mesh: mesh.clone(),
            specs,
            bc,
            spaces,
            derivatives,
            masses,
            tol: Tolerances::default(),
            harmonic: (0..=n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self.harmonic = (0..=self.n()).map(|_| OnceLock::new()).collect();
        self
    }

    pub fn mesh(&self) -> &Arc<SimplicialComplex> {
        &self.mesh
    }

    pub fn n(&self) -> usize {
        self.mesh.dim()
    }

    pub fn specs(&self) -> &[PolySpaceSpec] {
        &self.specs
    }

    pub fn boundary_condition(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    pub fn space(&self, k: usize) -> &FESpace {
        &self.spaces[k]
    }

    pub fn dim(&self, k: usize) -> usize {
        self.spaces[k].dim()
    }

    /// `D_k : Λ^k_h → Λ^{k+1}_h`, for `k < n`.
    pub fn derivative(&self, k: usize) -> &SparseMatrix {
        &self.derivatives[k]
    }

    pub fn mass(&self, k: usize) -> &SparseMatrix {
        &self.masses[k]
    }

    /// `D_kᵀ M_{k+1} D_k`, or the zero matrix for `k = n`.
    pub fn stiffness(&self, k: usize) -> SparseMatrix {
        if k == self.n() {
            return SparseMatrix::zeros(self.dim(k), self.dim(k));
        }
        self.derivatives[k].congruence(&self.masses[k + 1]).expect("conforming sizes")
    }

    fn derivative_rank(&self, k: usize) -> Result<(usize, bool)> {
        if k >= self.n() || self.dim(k) == 0 || self.dim(k + 1) == 0 {
            return Ok((0, true));
        }
        let d = &self.derivatives[k];
        if d.nrows().max(d.ncols()) > 2 * DENSE_LIMIT {
            return Err(FeecError::InvalidArgument(format!(
                "rank of a {}×{} matrix exceeds the dense limit",
                d.nrows(),
                d.ncols()
            )));
        }
        let info = rank_and_nullspace(&d.to_dense(), self.tol.rank)?;
        Ok((info.rank, info.stable))
    }

    /// `b_k = dim Λ^k_h − rank D_k − rank D_{k−1}`. Fails when a rank moves
    /// under a decade change of the threshold.
    pub fn betti_numbers(&self) -> Result<Vec<usize>> {
        let n = self.n();
        let ranks: Vec<(usize, bool)> = (0..n).map(|k| self.derivative_rank(k)).collect::<Result<_>>()?;
        if let Some(k) = ranks.iter().position(|r| !r.1) {
            return Err(FeecError::Solver(format!("rank of D_{k} is ambiguous at the configured threshold")));
        }
        Ok((0..=n)
            .map(|k| {
                let out = if k < n { ranks[k].0 } else { 0 };
                let inc = if k > 0 { ranks[k - 1].0 } else { 0 };
                self.dim(k) - out - inc
            })
            .collect())
    }

    /// `M_k`-orthonormal basis of the discrete harmonic forms
    /// `{u : D_k u = 0, D_{k−1}ᵀ M_k u = 0}`.
    pub fn harmonic_forms(&self, k: usize) -> Result<&[Vec<f64>]> {
        if let Some(h) = self.harmonic[k].get() {
            return Ok(h);
        }
        let h = if self.dim(k) <= DENSE_LIMIT {
            self.harmonic_dense(k)?
        } else {
            self.harmonic_sparse(k)?
        };
        Ok(self.harmonic[k].get_or_init(|| h))
    }

    /// Dense Hodge Laplacian `D_kᵀM D_k + M_k D_{k−1} M_{k−1}^{-1} D_{k−1}ᵀ M_k`.
    fn hodge_laplacian_dense(&self, k: usize) -> Result<DenseMatrix<f64>> {
        let m = self.dim(k);
        let mut l = self.stiffness(k).to_dense();
        if k > 0 && self.dim(k - 1) > 0 {
            let mk = &self.masses[k];
            let b = self.derivatives[k - 1].transpose().mul(mk)?;
            let bd = b.to_dense();
            let chol = self.masses[k - 1].to_dense();
            let llt = chol.llt(faer::Side::Lower).map_err(|e| FeecError::NotSpd(format!("{e:?}")))?;
            let x = faer::linalg::solvers::Solve::solve(&llt, &bd);
            let corr = bd.transpose() * &x;
            for i in 0..m {
                for j in 0..m {
                    l[(i, j)] += corr[(i, j)];
                }
            }
        }
        Ok(l)
    }

    fn harmonic_dense(&self, k: usize) -> Result<Vec<Vec<f64>>> {
        let m = self.dim(k);
        if m == 0 {
            return Ok(Vec::new());
        }
        let l = self.hodge_laplacian_dense(k)?;
        let (vals, vecs) = generalized_eigen_dense(&l, &self.masses[k].to_dense())?;
        let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
        let cols: Vec<Vec<f64>> = vals
            .iter()
            .enumerate()
            .filter(|(_, &v)| v.abs() <= self.tol.zero_eigenvalue * top)
            .map(|(j, _)| (0..m).map(|i| vecs[(i, j)]).collect())
            .collect();
        Ok(m_gram_schmidt(&cols, &self.masses[k], 1e-8))
    }

    /// Harmonic forms by deflated shift-invert Lanczos on the mixed pencil.
    fn harmonic_sparse(&self, k: usize) -> Result<Vec<Vec<f64>>> {
        let (sys, offset) = self.mixed_pencil(k, -1.0)?;
        let lu = LuSolver::new(&sys)?;
        let nk = self.dim(k);
        let total = sys.nrows();
        let mk = &self.masses[k];
        let mut found: Vec<Vec<f64>> = Vec::new();
        let mut found_m: Vec<Vec<f64>> = Vec::new();
        let deflate = |x: &mut [f64], found: &[Vec<f64>], found_m: &[Vec<f64>]| {
            for (q, mq) in found.iter().zip(found_m) {
                let c = dot(&x[offset..], mq);
                x[offset..].iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        };
        for attempt in 0..16u64 {
            let res = shift_invert_lanczos(
                total,
                1,
                -1.0,
                |y| {
                    let mut x = lu.solve(y)?;
                    deflate(&mut x, &found, &found_m);
                    Ok(x)
                },
                |x| {
                    let mut out = vec![0.0; total];
                    out[offset..].copy_from_slice(&mk.matvec(&x[offset..]));
                    out
                },
                17 + attempt,
            )?;
            if res.values.is_empty() || res.values[0].abs() > 1e-6 {
                break;
            }
            let u = res.vectors[0][offset..offset + nk].to_vec();
            let mut all = found.clone();
            all.push(u);
            found = m_gram_schmidt(&all, mk, 1e-8);
            found_m = found.iter().map(|q| mk.matvec(q)).collect();
        }
        Ok(found)
    }

    /// Symmetric mixed pencil `[[−M_{k−1}, D ᵀM_k], [M_k D, K_k − s M_k]]`
    /// and the offset of the `u` block.
    pub fn mixed_pencil(&self, k: usize, shift: f64) -> Result<(SparseMatrix, usize)> {
        let kk = self.stiffness(k).add_scaled(&self.masses[k], -shift)?;
        if k == 0 || self.dim(k - 1) == 0 {
            return Ok((kk, 0));
        }
        let mdk = self.masses[k].mul(&self.derivatives[k - 1])?;
        let mdt = mdk.transpose();
        let neg = self.masses[k - 1].scale(-1.0);
        let sys = SparseMatrix::block(
            &[self.dim(k - 1), self.dim(k)],
            &[self.dim(k - 1), self.dim(k)],
            &[vec![Some(&neg), Some(&mdt)], vec![Some(&mdk), Some(&kk)]],
        )?;
        Ok((sys, self.dim(k - 1)))
    }

    /// Matrix of the discrete mixed Hodge-Laplacian source problem with the
    /// harmonic constraint, unknowns `(σ, u, p)`.
    pub fn saddle_matrix(&self, k: usize) -> Result<SparseMatrix> {
        let h = self.harmonic_forms(k)?;
        let (base, offset) = self.mixed_pencil(k, 0.0)?;
        let mk = &self.masses[k];
        let mut t = base.triplets();
        let size = base.nrows();
        for (c, hc) in h.iter().enumerate() {
            let mh = mk.matvec(hc);
            for (i, v) in mh.into_iter().enumerate() {
                if v != 0.0 {
                    t.push((offset + i, size + c, v));
                    t.push((size + c, offset + i, v));
                }
            }
        }
        Ok(SparseMatrix::from_triplets(size + h.len(), size + h.len(), &t))
    }

    /// Solves the mixed source problem with right-hand side vector `rhs`
    /// (already tested against the `Λ^k_h` basis). Returns `(σ, u, p)` with
    /// `p` given by its coefficients in the harmonic basis.
    pub fn solve_mixed(&self, k: usize, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let sys = self.saddle_matrix(k)?;
        let offset = if k == 0 { 0 } else { self.dim(k - 1) };
        let mut b = vec![0.0; sys.nrows()];
        b[offset..offset + self.dim(k)].copy_from_slice(rhs);
        let x = LuSolver::new(&sys)?.solve(&b)?;
        let sigma = x[..offset].to_vec();
        let u = x[offset..offset + self.dim(k)].to_vec();
        let p = x[offset + self.dim(k)..].to_vec();
        Ok((sigma, u, p))
    }

    /// Splits `v ∈ Λ^k_h` into `M_k`-orthogonal parts in `B^k_h`, `H^k_h`
    /// and the orthogonal complement of the cocycles.
    pub fn hodge_decompose(&self, k: usize, v: &[f64]) -> Result<HodgeParts> {
        let mk = &self.masses[k];
        let rhs = mk.matvec(v);
        let (sigma, _, p) = self.solve_mixed(k, &rhs)?;
        let exact = if k > 0 { self.derivatives[k - 1].matvec(&sigma) } else { vec![0.0; v.len()] };
        let mut harmonic = vec![0.0; v.len()];
        for (c, hc) in self.harmonic_forms(k)?.iter().enumerate() {
            harmonic.iter_mut().zip(hc).for_each(|(a, b)| *a += p[c] * b);
        }
        let coexact = (0..v.len()).map(|i| v[i] - exact[i] - harmonic[i]).collect();
        Ok(HodgeParts { exact, harmonic, coexact })
    }

    fn smallest_nonzero_mode(&self, k: usize) -> Result<f64> {
        if k >= self.n() {
            return Err(FeecError::InvalidArgument("the top degree has no exterior derivative".into()));
        }
        if self.dim(k) > DENSE_LIMIT {
            return Err(FeecError::InvalidArgument(format!(
                "Poincaré constant needs a dense eigensolve; dim Λ^{k}_h = {} exceeds {DENSE_LIMIT}",
                self.dim(k)
            )));
        }
        let (vals, _) = generalized_eigen_dense(&self.stiffness(k).to_dense(), &self.masses[k].to_dense())?;
        let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        vals.into_iter()
            .find(|&v| v > self.tol.zero_eigenvalue * top.max(1.0))
            .ok_or_else(|| FeecError::InvalidArgument(format!("D_{k} vanishes")))
    }

    /// Smallest `μ` with `‖D_k v‖ ≥ μ ‖v‖` on the complement of the cocycles,
    /// both norms `L²` (the `W`-norm Poincaré constant is `1/μ`).
    pub fn poincare_mu(&self, k: usize) -> Result<f64> {
        Ok(self.smallest_nonzero_mode(k)?.sqrt())
    }

    /// Poincaré constant in the `V`-norm convention, `sqrt(1 + μ²)/μ`.
    pub fn poincare_constant_v(&self, k: usize) -> Result<f64> {
        let mu = self.poincare_mu(k)?;
        Ok((1.0 + mu * mu).sqrt() / mu)
    }

    /// Poincaré constant in the `W` (`L²`) norm, `1/μ`.
    pub fn poincare_constant_w(&self, k: usize) -> Result<f64> {
        Ok(1.0 / self.poincare_mu(k)?)
    }

    /// Gap between the discrete harmonic `k`-forms and the span of `other`,
    /// given as samplers `(cell, x) ↦ value`.
    pub fn gap_harmonic(&self, k: usize, other: &[CellSampler<'_>]) -> Result<f64> {
        let h = self.harmonic_forms(k)?;
        let space = &self.spaces[k];
        let own: Vec<Box<dyn Fn(usize, &[f64]) -> Vec<f64> + Sync + '_>> = h
            .iter()
            .map(|c| Box::new(move |cell: usize, x: &[f64]| space.evaluate(c, cell, x).0) as Box<_>)
            .collect();
        let own_refs: Vec<CellSampler<'_>> = own.iter().map(|b| b.as_ref() as CellSampler<'_>).collect();
        subspace_gap(&self.mesh, &own_refs, other, 2 * space.element().degree() + 4)
    }

    /// Writes every `D_k` and `M_k` in coordinate text form.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (k, d) in self.derivatives.iter().enumerate() {
            std::fs::write(dir.join(format!("D{k}.txt")), d.to_coordinate_text())?;
        }
        for (k, m) in self.masses.iter().enumerate() {
            std::fs::write(dir.join(format!("M{k}.txt")), m.to_coordinate_text())?;
        }
        Ok(())
    }
}

/// Result of [`DiscreteComplex::hodge_decompose`].
#[derive(Clone, Debug)]
pub struct HodgeParts {
    pub exact: Vec<f64>,
    pub harmonic: Vec<f64>,
    pub coexact: Vec<f64>,
}

/// A field evaluated at a physical point inside the given cell.
pub type CellSampler<'a> = &'a (dyn Fn(usize, &[f64]) -> Vec<f64> + Sync);

/// Symmetric gap `max(sup_{e∈E} dist(e, F), sup_{f∈F} dist(f, E))` between
/// two finite-dimensional spaces of fields in `L²`, computed from principal
/// angles with quadrature of the given degree on `mesh`.
pub fn subspace_gap(mesh: &SimplicialComplex, e: &[CellSampler<'_>], f: &[CellSampler<'_>], degree: u32) -> Result<f64> {
    if e.len() != f.len() {
        return Err(FeecError::DimensionMismatch(format!(
            "spaces of dimension {} and {} (cohomology not captured)",
            e.len(),
            f.len()
        )));
    }
    let m = e.len();
    if m == 0 {
        return Ok(0.0);
    }
    let all: Vec<CellSampler<'_>> = e.iter().chain(f).copied().collect();
    let mut gram = vec![0.0; 4 * m * m];
    let rule = crate::quadrature::simplex_rule(mesh.dim(), degree);
    for c in 0..mesh.num_cells() {
        let (v0, j, det) = mesh.cell_map(c);
        let n = mesh.dim();
        for (q, p) in rule.points.iter().enumerate() {
            let x: Vec<f64> = (0..n).map(|i| v0[i] + (0..n).map(|l| j[i * n + l] * p[l]).sum::<f64>()).collect();
            let w = rule.weights[q] * det.abs();
            let vals: Vec<Vec<f64>> = all.iter().map(|s| s(c, &x)).collect();
            for a in 0..2 * m {
                for b in 0..=a {
                    gram[a * 2 * m + b] += w * dot(&vals[a], &vals[b]);
                }
            }
        }
    }
    let g = |a: usize, b: usize| if a >= b { gram[a * 2 * m + b] } else { gram[b * 2 * m + a] };
    let orth = |off: usize| -> Result<DenseMatrix<f64>> {
        let block = DenseMatrix::from_fn(m, m, |a, b| g(off + a, off + b));
        let llt = block
            .llt(faer::Side::Lower)
            .map_err(|e| FeecError::NotSpd(format!("basis Gram matrix: {e:?}")))?;
        let mut inv = DenseMatrix::<f64>::identity(m, m);
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(llt.L(), inv.as_mut(), faer::Par::Seq);
        Ok(inv)
    };
    let le = orth(0)?;
    let lf = orth(m)?;
    let cross = DenseMatrix::from_fn(m, m, |a, b| g(a, m + b));
    let c = &le * cross * lf.transpose();
    let svd = c.svd().map_err(|err| FeecError::NonConvergence(format!("{err:?}")))?;
    let s = svd.S().column_vector();
    let smin = (0..m).map(|i| s[i]).fold(f64::INFINITY, f64::min).min(1.0);
    Ok((1.0 - smin * smin).max(0.0).sqrt())
}

/// Betti numbers of the mesh from integer incidence matrices (exact rank
/// over the rationals). With `relative`, cochains vanish on boundary faces.
pub fn simplicial_betti(mesh: &SimplicialComplex, relative: bool) -> Vec<usize> {
    let n = mesh.dim();
    let keep = |d: usize| -> Vec<Option<usize>> {
        let mut next = 0;
        (0..mesh.num_faces(d))
            .map(|f| {
                if relative && mesh.is_boundary(d, f) {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    };
    let maps: Vec<Vec<Option<usize>>> = (0..=n).map(keep).collect();
    let counts: Vec<usize> = maps.iter().map(|m| m.iter().flatten().count()).collect();
    let ranks: Vec<usize> = (0..n)
        .map(|d| {
            let mut q = QMatrix::zeros(counts[d + 1], counts[d]);
            for (row, col, s) in mesh.coboundary_triplets(d) {
                if let (Some(i), Some(j)) = (maps[d + 1][row], maps[d][col]) {
                    q[(i, j)] = rational_from_i64(s);
                }
            }
            q.rank()
        })
        .collect();
    (0..=n)
        .map(|d| counts[d] - if d < n { ranks[d] } else { 0 } - if d > 0 { ranks[d - 1] } else { 0 })
        .collect()
}

/// Whether `D_{k+1} D_k` vanishes to `tol` in max norm for every `k`.
pub fn check_complex(c: &DiscreteComplex, tol: f64) -> Result<bool> {
    for k in 0..c.n().saturating_sub(1) {
        if c.derivative(k + 1).mul(c.derivative(k))?.max_abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::m_norm;
    use crate::mesh::{generate, MeshKind};
    use crate::polyform::all_patterns;
    use rand::{Rng, SeedableRng};

    fn mesh(kind: MeshKind) -> Arc<SimplicialComplex> {
        Arc::new(generate(&kind).unwrap())
    }

    fn whitney(m: &Arc<SimplicialComplex>, bc: BoundaryCondition) -> DiscreteComplex {
        let n = m.dim();
        assemble_complex(m, n, 1, &vec![Family::PMinus; n - 1], bc, None).unwrap()
    }

    #[test]
    fn whitney_derivative_is_coboundary() {
        let m = mesh(MeshKind::unit_square(1));
        let c = whitney(&m, BoundaryCondition::Natural);
        let d0 = c.derivative(0);
        assert_eq!((d0.nrows(), d0.ncols()), (5, 4));
        for (row, col, s) in m.coboundary_triplets(0) {
            assert!((d0.get(row, col) - s as f64).abs() < 1e-12);
        }
        assert_eq!(d0.nnz(), 10);
        assert!(check_complex(&c, 1e-12).unwrap());
        let d1 = c.derivative(1);
        for (row, col, s) in m.coboundary_triplets(1) {
            assert!((d1.get(row, col) - s as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn top_degree_mass_on_reference_triangle() {
        let m = Arc::new(SimplicialComplex::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![vec![0, 1, 2]]).unwrap());
        let c = whitney(&m, BoundaryCondition::Natural);
        // the dual basis function has unit integral, so its squared norm is 1/area
        assert!((c.mass(2).get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn betti_numbers_match_oracle() {
        for (kind, expected) in [
            (MeshKind::interval(3), vec![1, 0]),
            (MeshKind::unit_square(2), vec![1, 0, 0]),
            (MeshKind::annulus(1), vec![1, 1, 0]),
            (MeshKind::unit_cube(1), vec![1, 0, 0, 0]),
        ] {
            let m = mesh(kind);
            let n = m.dim();
            assert_eq!(simplicial_betti(&m, false), expected);
            let rel: Vec<usize> = expected.iter().rev().copied().collect();
            assert_eq!(simplicial_betti(&m, true), rel);
            for r in 1..=2u32 {
                for p in all_patterns(n) {
                    let Ok(c) = assemble_complex(&m, n, r, &p, BoundaryCondition::Natural, None) else {
                        continue;
                    };
                    assert_eq!(c.betti_numbers().unwrap(), expected, "r={r} {p:?}");
                    assert!(check_complex(&c, 1e-10).unwrap());
                }
            }
            let e = whitney(&m, BoundaryCondition::Essential);
            assert_eq!(e.betti_numbers().unwrap(), rel);
        }
    }

    #[test]
    fn harmonic_forms_and_decomposition() {
        let sq = whitney(&mesh(MeshKind::unit_square(3)), BoundaryCondition::Natural);
        let h0 = sq.harmonic_forms(0).unwrap();
        assert_eq!(h0.len(), 1);
        let c0 = h0[0][0];
        assert!(h0[0].iter().all(|v| (v - c0).abs() < 1e-10));
        assert!(sq.harmonic_forms(1).unwrap().is_empty());

        let an = whitney(&mesh(MeshKind::annulus(1)), BoundaryCondition::Natural);
        let h1 = an.harmonic_forms(1).unwrap();
        assert_eq!(h1.len(), 1);
        assert!(an.derivative(1).matvec(&h1[0]).iter().all(|v| v.abs() < 1e-9));
        let co = an.derivative(0).matvec_transpose(&an.mass(1).matvec(&h1[0]));
        assert!(co.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(an.harmonic_sparse(1).unwrap().len(), 1);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..an.dim(1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let parts = an.hodge_decompose(1, &v).unwrap();
        let m = an.mass(1);
        let ip = |a: &[f64], b: &[f64]| dot(a, &m.matvec(b));
        assert!(ip(&parts.exact, &parts.harmonic).abs() < 1e-10);
        assert!(ip(&parts.exact, &parts.coexact).abs() < 1e-10);
        assert!(ip(&parts.harmonic, &parts.coexact).abs() < 1e-10);
        let total = m_norm(m, &v).powi(2);
        let sum = m_norm(m, &parts.exact).powi(2) + m_norm(m, &parts.harmonic).powi(2) + m_norm(m, &parts.coexact).powi(2);
        assert!((total - sum).abs() < 1e-10 * total);
        let grad = an.derivative(0).matvec(&(0..an.dim(0)).map(|i| (i as f64).sin()).collect::<Vec<_>>());
        let p = an.hodge_decompose(1, &grad).unwrap();
        assert!(m_norm(m, &p.harmonic) < 1e-10 && m_norm(m, &p.coexact) < 1e-10);
        let p = an.hodge_decompose(1, &h1[0]).unwrap();
        assert!(m_norm(m, &p.exact) < 1e-10 && (m_norm(m, &p.harmonic) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn poincare_and_gap() {
        let one = Arc::new(SimplicialComplex::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![vec![0, 1, 2]]).unwrap());
        let c = whitney(&one, BoundaryCondition::Natural);
        let cp = c.poincare_constant_v(1).unwrap();
        assert!(cp.is_finite() && cp > 0.0);
        let vals: Vec<f64> = [2, 4, 8]
            .iter()
            .map(|&n| whitney(&mesh(MeshKind::unit_square(n)), BoundaryCondition::Natural).poincare_constant_w(0).unwrap())
            .collect();
        // 1/π is the continuous value for the Neumann problem on the unit square
        assert!(vals.iter().all(|v| (v - 1.0 / std::f64::consts::PI).abs() < 0.1));

        let m = mesh(MeshKind::unit_square(2));
        let ex = |_: usize, _: &[f64]| vec![1.0, 0.0];
        let ey = |_: usize, _: &[f64]| vec![0.0, 1.0];
        assert!(subspace_gap(&m, &[&ex], &[&ex], 2).unwrap() < 1e-7);
        assert!((subspace_gap(&m, &[&ex], &[&ey], 2).unwrap() - 1.0).abs() < 1e-12);
        assert!(subspace_gap(&m, &[&ex], &[], 2).is_err());
    }

    #[test]
    fn weighted_mass_keeps_cohomology() {
        let m = mesh(MeshKind::annulus(1));
        let a = |k: usize, x: &[f64]| -> Vec<f64> {
            let s = 1.0 + 0.5 * (3.0 * x[0]).sin().powi(2);
            match k {
                1 => vec![s, 0.3, 0.3, 1.0],
                _ => vec![s],
            }
        };
        let c = assemble_complex(&m, 2, 1, &[Family::PMinus], BoundaryCondition::Natural, Some(&a)).unwrap();
        let h = c.harmonic_forms(1).unwrap();
        assert_eq!(h.len(), 1);
        let plain = whitney(&m, BoundaryCondition::Natural);
        let hp = &plain.harmonic_forms(1).unwrap()[0];
        let cos = dot(&h[0], &c.mass(1).matvec(hp)) / m_norm(c.mass(1), hp);
        assert!(cos.abs() < 0.9999);
    }
}
