//! Mixed Hodge-Laplacian source and eigenvalue problems, inf-sup
//! measurements, convergence rates, and the nodal (continuous vector field)
//! discretizations used as counterexamples.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::derham::{CellSampler, DiscreteComplex};
use crate::error::{FeecError, Result};
use crate::fem::{BoundaryCondition, ElementType, FESpace, FormSampler};
use crate::linalg::{
    dot, generalized_eigen_dense, m_norm, norm, rank_and_nullspace, shift_invert_lanczos, Tolerances, CholeskySolver, LuSolver,
    SparseMatrix, DENSE_LIMIT,
};
use crate::mesh::SimplicialComplex;
use crate::polyform::PolySpaceSpec;

/// Solution of the mixed source problem.
#[derive(Clone, Debug)]
pub struct SourceSolution {
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    /// Coefficients of `p_h` in the `Λ^k_h` basis.
    pub p: Vec<f64>,
    /// Coefficients of `p_h` in the orthonormal harmonic basis.
    pub p_harmonic: Vec<f64>,
    /// Load vector `⟨f, ψ_i⟩`.
    pub rhs: Vec<f64>,
}

/// Solves `⟨σ,τ⟩ − ⟨dτ,u⟩ = 0`, `⟨dσ,v⟩ + ⟨du,dv⟩ + ⟨p,v⟩ = ⟨f,v⟩`,
/// `⟨u,q⟩ = 0` on the discrete complex.
pub fn solve_source(c: &DiscreteComplex, k: usize, f: FormSampler<'_>) -> Result<SourceSolution> {
    let space = c.space(k);
    let rhs = space.load_vector(f, 2 * space.element().degree() + 3);
    solve_source_rhs(c, k, rhs)
}

/// [`solve_source`] with a precomputed load vector.
pub fn solve_source_rhs(c: &DiscreteComplex, k: usize, rhs: Vec<f64>) -> Result<SourceSolution> {
    let (sigma, u, ph) = c.solve_mixed(k, &rhs)?;
    let mut p = vec![0.0; u.len()];
    for (coef, h) in ph.iter().zip(c.harmonic_forms(k)?) {
        p.iter_mut().zip(h).for_each(|(a, b)| *a += coef * b);
    }
    Ok(SourceSolution {
        sigma,
        u,
        p,
        p_harmonic: ph,
        rhs,
    })
}

/// Relative residuals of the three equations of the mixed system.
pub fn source_residuals(c: &DiscreteComplex, k: usize, s: &SourceSolution) -> Result<[f64; 3]> {
    let mk = c.mass(k);
    let scale = norm(&s.rhs).max(1e-300);
    let mu = mk.matvec(&s.u);
    let r1 = if k > 0 {
        let a = c.mass(k - 1).matvec(&s.sigma);
        let b = c.derivative(k - 1).matvec_transpose(&mu);
        norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>()) / scale
    } else {
        0.0
    };
    let mut r2 = c.stiffness(k).matvec(&s.u);
    if k > 0 {
        let ds = mk.matvec(&c.derivative(k - 1).matvec(&s.sigma));
        r2.iter_mut().zip(&ds).for_each(|(a, b)| *a += b);
    }
    let mp = mk.matvec(&s.p);
    r2.iter_mut().zip(&mp).zip(&s.rhs).for_each(|((a, b), f)| *a += b - f);
    let r3 = c.harmonic_forms(k)?.iter().map(|h| dot(h, &mu).abs()).fold(0.0, f64::max) / m_norm(mk, &s.u).max(1e-300);
    Ok([r1, norm(&r2) / scale, r3])
}

/// Solution of the `B*` problem `⟨du,dv⟩ = ⟨f,v⟩` on the orthogonal
/// complement of the cocycles.
#[derive(Clone, Debug)]
pub struct BStarSolution {
    pub u: Vec<f64>,
    /// `M_k`-norm of the part of the projected data lying in `B ⊕ H`.
    pub discarded_norm: f64,
}

pub fn solve_b_star(c: &DiscreteComplex, k: usize, f: FormSampler<'_>) -> Result<BStarSolution> {
    let s = solve_source(c, k, f)?;
    let u = c.hodge_decompose(k, &s.u)?.coexact;
    let fh = CholeskySolver::new(c.mass(k))?.solve(&s.rhs)?;
    let parts = c.hodge_decompose(k, &fh)?;
    let kept: Vec<f64> = parts.exact.iter().zip(&parts.harmonic).map(|(a, b)| a + b).collect();
    Ok(BStarSolution {
        u,
        discarded_norm: m_norm(c.mass(k), &kept),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    /// `σ_h ≠ 0`, `u_h` in the coboundaries.
    B,
    /// `σ_h = 0`.
    BStar,
}

/// Eigenpairs of the mixed Hodge-Laplacian, harmonic modes excluded.
#[derive(Clone, Debug)]
pub struct EigResult {
    pub values: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub kinds: Vec<ModeKind>,
}

impl EigResult {
    pub fn of_kind(&self, kind: ModeKind) -> Vec<f64> {
        self.values.iter().zip(&self.kinds).filter(|(_, k)| **k == kind).map(|(v, _)| *v).collect()
    }
}

/// Smallest `count` nonzero eigenvalues of the mixed Hodge Laplacian for
/// `k`-forms. The dense path eliminates `σ` through the Schur complement on
/// `M_{k−1}`; above the dense limit shift-invert Lanczos is run on the mixed
/// pencil (a single Krylov sequence, which may under-resolve multiplicities).
pub fn solve_eigen(c: &DiscreteComplex, k: usize, count: usize) -> Result<EigResult> {
    let nh = c.harmonic_forms(k)?.len();
    if count + nh > c.dim(k) {
        return Err(FeecError::InvalidArgument(format!(
            "{count} eigenvalues requested from a space of dimension {} with {nh} harmonic forms",
            c.dim(k)
        )));
    }
    let mk = c.mass(k);
    let (values, us) = if c.dim(k) <= DENSE_LIMIT {
        eigen_dense(c, k, count, nh)?
    } else {
        eigen_sparse(c, k, count)?
    };
    let m_prev = if k > 0 && c.dim(k - 1) > 0 { Some(CholeskySolver::new(c.mass(k - 1))?) } else { None };
    let mut sigma = Vec::with_capacity(values.len());
    let mut kinds = Vec::with_capacity(values.len());
    for (lam, u) in values.iter().zip(&us) {
        let s = match &m_prev {
            Some(chol) => chol.solve(&c.derivative(k - 1).matvec_transpose(&mk.matvec(u)))?,
            None => Vec::new(),
        };
        let ratio = if s.is_empty() { 0.0 } else { m_norm(c.mass(k - 1), &s).powi(2) / (lam * m_norm(mk, u).powi(2)) };
        kinds.push(if ratio > 0.5 { ModeKind::B } else { ModeKind::BStar });
        sigma.push(s);
    }
    Ok(EigResult { values, sigma, u: us, kinds })
}

fn eigen_dense(c: &DiscreteComplex, k: usize, count: usize, nh: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = c.dim(k);
    let mut l = c.stiffness(k).to_dense();
    if k > 0 && c.dim(k - 1) > 0 {
        let bd = c.derivative(k - 1).transpose().mul(c.mass(k))?.to_dense();
        let llt = c
            .mass(k - 1)
            .to_dense()
            .llt(faer::Side::Lower)
            .map_err(|e| FeecError::NotSpd(format!("{e:?}")))?;
        let x = faer::linalg::solvers::Solve::solve(&llt, &bd);
        let corr = bd.transpose() * &x;
        for i in 0..m {
            for j in 0..m {
                l[(i, j)] += corr[(i, j)];
            }
        }
    }
    let (vals, vecs) = generalized_eigen_dense(&l, &c.mass(k).to_dense())?;
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let zero = c.tolerances().zero_eigenvalue * top;
    let zeros = vals.iter().filter(|v| v.abs() <= zero).count();
    if zeros != nh {
        return Err(FeecError::NonConvergence(format!(
            "{zeros} numerically zero eigenvalues but {nh} harmonic forms"
        )));
    }
    let out: Vec<usize> = (0..m).filter(|&j| vals[j] > zero).take(count).collect();
    Ok((
        out.iter().map(|&j| vals[j]).collect(),
        out.iter().map(|&j| (0..m).map(|i| vecs[(i, j)]).collect()).collect(),
    ))
}

fn eigen_sparse(c: &DiscreteComplex, k: usize, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let shift = -0.05;
    let (sys, offset) = c.mixed_pencil(k, shift)?;
    let lu = LuSolver::new(&sys)?;
    let total = sys.nrows();
    let nk = c.dim(k);
    let mk = c.mass(k);
    let h = c.harmonic_forms(k)?;
    let mh: Vec<Vec<f64>> = h.iter().map(|v| mk.matvec(v)).collect();
    let res = shift_invert_lanczos(
        total,
        count,
        shift,
        |y| {
            let mut x = lu.solve(y)?;
            for (q, mq) in h.iter().zip(&mh) {
                let a = dot(&x[offset..], mq);
                x[offset..].iter_mut().zip(q).for_each(|(xi, qi)| *xi -= a * qi);
            }
            Ok(x)
        },
        |x| {
            let mut out = vec![0.0; total];
            out[offset..].copy_from_slice(&mk.matvec(&x[offset..]));
            out
        },
        7,
    )?;
    let vecs = res
        .vectors
        .iter()
        .map(|v| {
            let u = v[offset..offset + nk].to_vec();
            let s = m_norm(mk, &u);
            u.into_iter().map(|x| x / s).collect()
        })
        .collect();
    Ok((res.values, vecs))
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn fit_rate(h: &[f64], errors: &[f64]) -> Result<f64> {
    if h.len() != errors.len() || h.len() < 3 {
        return Err(FeecError::InvalidArgument(format!(
            "a rate needs at least 3 levels, got {}",
            h.len().min(errors.len())
        )));
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|v| v.max(1e-300).ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// Errors per refinement level and their fitted rates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateTable {
    pub quantities: Vec<String>,
    pub levels: Vec<RateRow>,
    pub rates: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateRow {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub errors: Vec<f64>,
}

impl RateTable {
    pub fn new(quantities: &[&str], levels: Vec<RateRow>) -> Result<Self> {
        let h: Vec<f64> = levels.iter().map(|r| r.h).collect();
        let rates = (0..quantities.len())
            .map(|q| fit_rate(&h, &levels.iter().map(|r| r.errors[q]).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        Ok(Self {
            quantities: quantities.iter().map(|s| s.to_string()).collect(),
            levels,
            rates,
        })
    }

    pub fn rate(&self, quantity: &str) -> Option<f64> {
        self.quantities.iter().position(|q| q == quantity).map(|i| self.rates[i])
    }

    /// `level,h,dofs,<quantity>...` followed by a `rate` row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("level,h,dofs,{}\n", self.quantities.join(","));
        for r in &self.levels {
            let errs: Vec<String> = r.errors.iter().map(|e| format!("{e:.6e}")).collect();
            s.push_str(&format!("{},{:.6e},{},{}\n", r.level, r.h, r.dofs, errs.join(",")));
        }
        let rates: Vec<String> = self.rates.iter().map(|e| format!("{e:.4}")).collect();
        s.push_str(&format!("rate,,,{}\n", rates.join(",")));
        s
    }
}

/// Exact fields of a manufactured Hodge-Laplacian solution.
pub struct ManufacturedSolution<'a> {
    pub f: FormSampler<'a>,
    pub sigma: FormSampler<'a>,
    pub d_sigma: FormSampler<'a>,
    pub u: FormSampler<'a>,
    /// `None` for `k = n`.
    pub d_u: Option<FormSampler<'a>>,
}

/// `[‖σ−σ_h‖, ‖d(σ−σ_h)‖, ‖u−u_h‖, ‖d(u−u_h)‖]`; the last entry is NaN for `k = n`.
pub fn source_errors(c: &DiscreteComplex, k: usize, exact: &ManufacturedSolution<'_>) -> Result<(SourceSolution, [f64; 4])> {
    let s = solve_source(c, k, exact.f)?;
    let (es, eds) = if k > 0 {
        let sp = c.space(k - 1);
        (sp.l2_error(&s.sigma, exact.sigma), sp.d_l2_error(&s.sigma, exact.d_sigma))
    } else {
        (0.0, 0.0)
    };
    let sp = c.space(k);
    let eu = sp.l2_error(&s.u, exact.u);
    let edu = match exact.d_u {
        Some(du) if k < c.n() => sp.d_l2_error(&s.u, du),
        _ => f64::NAN,
    };
    Ok((s, [es, eds, eu, edu]))
}

/// A pair `Σ_h × V_h` of spaces of degrees `k−1` and `k` for the mixed
/// problem, not necessarily forming a subcomplex. `d` is applied by
/// quadrature, so any conforming pair can be tested.
pub struct MixedPair {
    pub sigma: FESpace,
    pub u: FESpace,
    mass_sigma: SparseMatrix,
    stiff_sigma: SparseMatrix,
    mass_u: SparseMatrix,
    stiff_u: SparseMatrix,
    coupling: SparseMatrix,
}

impl MixedPair {
    pub fn new(mesh: &Arc<SimplicialComplex>, sigma: ElementType, u: ElementType) -> Result<Self> {
        let sigma = FESpace::new(mesh.clone(), sigma, BoundaryCondition::Natural)?;
        let u = FESpace::new(mesh.clone(), u, BoundaryCondition::Natural)?;
        let coupling = u.coupling_matrix(&sigma)?;
        Ok(Self {
            mass_sigma: sigma.mass_matrix(None),
            stiff_sigma: sigma.stiffness_matrix(),
            mass_u: u.mass_matrix(None),
            stiff_u: u.stiffness_matrix(),
            coupling,
            sigma,
            u,
        })
    }

    /// Symmetric system `[[−M_Σ, Cᵀ], [C, K_V]]`.
    pub fn system_matrix(&self) -> Result<SparseMatrix> {
        let neg = self.mass_sigma.scale(-1.0);
        let ct = self.coupling.transpose();
        SparseMatrix::block(
            &[self.sigma.dim(), self.u.dim()],
            &[self.sigma.dim(), self.u.dim()],
            &[vec![Some(&neg), Some(&ct)], vec![Some(&self.coupling), Some(&self.stiff_u)]],
        )
    }

    /// Solves the mixed problem with load `f`; fails with
    /// [`FeecError::Singular`] for a singular pair.
    pub fn solve(&self, f: FormSampler<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
        let sys = self.system_matrix()?;
        let mut b = vec![0.0; sys.nrows()];
        let load = self.u.load_vector(f, 2 * self.u.element().degree() + 6);
        b[self.sigma.dim()..].copy_from_slice(&load);
        if sys.nrows() <= DENSE_LIMIT {
            let info = rank_and_nullspace(&sys.to_dense(), Tolerances::default().rank)?;
            if info.rank < sys.nrows() {
                return Err(FeecError::Singular { nullity: sys.nrows() - info.rank });
            }
        }
        let x = LuSolver::new(&sys)?.solve(&b)?;
        Ok((x[..self.sigma.dim()].to_vec(), x[self.sigma.dim()..].to_vec()))
    }

    /// Inf-sup constant of the mixed form in the `H Λ` norms.
    pub fn infsup(&self) -> Result<f64> {
        infsup_from_blocks(&self.mass_sigma, &self.stiff_sigma, &self.coupling, &self.mass_u, &self.stiff_u, &[])
    }
}

/// Smallest `|μ|` of `S x = μ N x`, with `S` the symmetric saddle operator
/// `[[M_Σ, −Cᵀ, 0], [−C, −K_V, −MH], [0, −(MH)ᵀ, 0]]` and `N` the block
/// diagonal `H Λ` Gram matrix (identity on the harmonic block). Dense up
/// to the dense limit, shift-invert Lanczos about zero beyond it.
pub fn infsup_from_blocks(
    m_sigma: &SparseMatrix,
    k_sigma: &SparseMatrix,
    coupling: &SparseMatrix,
    m_u: &SparseMatrix,
    k_u: &SparseMatrix,
    mh: &[Vec<f64>],
) -> Result<f64> {
    let (ns, nu, np) = (m_sigma.nrows(), m_u.nrows(), mh.len());
    let total = ns + nu + np;
    let mut s = Vec::new();
    let mut nmat = Vec::new();
    for (i, j, v) in m_sigma.triplets() {
        s.push((i, j, v));
        nmat.push((i, j, v));
    }
    nmat.extend(k_sigma.triplets());
    for (i, j, v) in coupling.triplets() {
        s.push((ns + i, j, -v));
        s.push((j, ns + i, -v));
    }
    nmat.extend(m_u.triplets().into_iter().map(|(i, j, v)| (ns + i, ns + j, v)));
    for (i, j, v) in k_u.triplets() {
        s.push((ns + i, ns + j, -v));
        nmat.push((ns + i, ns + j, v));
    }
    for (c, col) in mh.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            s.push((ns + i, ns + nu + c, -v));
            s.push((ns + nu + c, ns + i, -v));
        }
        nmat.push((ns + nu + c, ns + nu + c, 1.0));
    }
    let s = SparseMatrix::from_triplets(total, total, &s);
    let nmat = SparseMatrix::from_triplets(total, total, &nmat);
    if total <= DENSE_LIMIT {
        let (vals, _) = generalized_eigen_dense(&s.to_dense(), &nmat.to_dense())?;
        return Ok(vals.iter().fold(f64::INFINITY, |a, v| a.min(v.abs())));
    }
    let lu = match LuSolver::new(&s) {
        Ok(lu) => lu,
        Err(FeecError::Singular { .. }) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let res = shift_invert_lanczos(total, 1, 0.0, |y| lu.solve(y), |x| nmat.matvec(x), 11)?;
    Ok(res.values[0].abs())
}

/// Inf-sup constant of the mixed Hodge-Laplacian for `k`-forms on a complex.
pub fn measure_infsup(c: &DiscreteComplex, k: usize) -> Result<f64> {
    let mk = c.mass(k);
    let mh: Vec<Vec<f64>> = c.harmonic_forms(k)?.iter().map(|h| mk.matvec(h)).collect();
    let (ms, ks, coupling) = if k > 0 {
        (c.mass(k - 1).clone(), c.stiffness(k - 1), mk.mul(c.derivative(k - 1))?)
    } else {
        (SparseMatrix::zeros(0, 0), SparseMatrix::zeros(0, 0), SparseMatrix::zeros(c.dim(0), 0))
    };
    infsup_from_blocks(&ms, &ks, &coupling, mk, &c.stiffness(k), &mh)
}

/// `‖a − b‖_{L²}` for two fields given by cell samplers on the same mesh.
pub fn l2_distance(mesh: &SimplicialComplex, a: CellSampler<'_>, b: CellSampler<'_>, degree: u32) -> f64 {
    let rule = crate::quadrature::simplex_rule(mesh.dim(), degree);
    let n = mesh.dim();
    let mut acc = 0.0;
    for c in 0..mesh.num_cells() {
        let (v0, j, det) = mesh.cell_map(c);
        for (q, p) in rule.points.iter().enumerate() {
            let x: Vec<f64> = (0..n).map(|i| v0[i] + (0..n).map(|l| j[i * n + l] * p[l]).sum::<f64>()).collect();
            let (va, vb) = (a(c, &x), b(c, &x));
            acc += rule.weights[q] * det.abs() * va.iter().zip(&vb).map(|(s, t)| (s - t) * (s - t)).sum::<f64>();
        }
    }
    acc.sqrt()
}

/// Constraint on continuous vector fields at boundary vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodalBoundary {
    Free,
    /// `u · n = 0`.
    NormalZero,
    /// `u × n = 0`.
    TangentialZero,
}

/// Continuous piecewise-linear vector fields on a 2D mesh (identified with
/// 1-forms), with an optional boundary constraint imposed through nodal
/// normals. At vertices where the boundary turns by more than 60° both
/// components vanish.
pub struct NodalVectorSpace {
    pub space: FESpace,
    scalar: FESpace,
    /// Full coefficients = `transform · reduced`.
    transform: SparseMatrix,
}

impl NodalVectorSpace {
    pub fn new(mesh: &Arc<SimplicialComplex>, boundary: NodalBoundary) -> Result<Self> {
        if mesh.dim() != 2 {
            return Err(FeecError::InvalidArgument("nodal vector fields are implemented in 2D".into()));
        }
        let space = FESpace::new(mesh.clone(), ElementType::ContinuousComponents { r: 1, k: 1, n: 2 }, BoundaryCondition::Natural)?;
        let scalar = FESpace::new(mesh.clone(), ElementType::Form(PolySpaceSpec::full(1, 0, 2)), BoundaryCondition::Natural)?;
        let nv = mesh.num_vertices();
        let mut normals: Vec<Vec<[f64; 2]>> = vec![Vec::new(); nv];
        for e in 0..mesh.num_faces(1) {
            if !mesh.is_boundary(1, e) {
                continue;
            }
            let f = mesh.face(1, e);
            let (a, b) = (mesh.vertex(f[0]), mesh.vertex(f[1]));
            let cell = mesh.facet_cells(e)[0];
            let other = *mesh.cell(cell).iter().find(|v| !f.contains(v)).expect("triangle");
            let o = mesh.vertex(other);
            let t = [b[0] - a[0], b[1] - a[1]];
            let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
            let mut nrm = [t[1] / len, -t[0] / len];
            if nrm[0] * (o[0] - a[0]) + nrm[1] * (o[1] - a[1]) > 0.0 {
                nrm = [-nrm[0], -nrm[1]];
            }
            normals[f[0]].push(nrm);
            normals[f[1]].push(nrm);
        }
        let mut t = Vec::new();
        let mut cols = 0;
        for (v, ns) in normals.iter().enumerate() {
            let constrained = boundary != NodalBoundary::Free && !ns.is_empty();
            if !constrained {
                t.push((2 * v, cols, 1.0));
                t.push((2 * v + 1, cols + 1, 1.0));
                cols += 2;
                continue;
            }
            let corner = ns.iter().any(|a| ns.iter().any(|b| a[0] * b[0] + a[1] * b[1] < 0.5));
            if corner {
                continue;
            }
            let mut avg = [0.0, 0.0];
            for n in ns {
                avg[0] += n[0];
                avg[1] += n[1];
            }
            let l = (avg[0] * avg[0] + avg[1] * avg[1]).sqrt();
            let nn = [avg[0] / l, avg[1] / l];
            let dir = match boundary {
                NodalBoundary::NormalZero => [-nn[1], nn[0]],
                _ => nn,
            };
            t.push((2 * v, cols, dir[0]));
            t.push((2 * v + 1, cols, dir[1]));
            cols += 1;
        }
        let transform = SparseMatrix::from_triplets(2 * nv, cols, &t);
        Ok(Self { space, scalar, transform })
    }

    pub fn dim(&self) -> usize {
        self.transform.ncols()
    }

    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        self.transform.matvec(reduced)
    }

    fn reduce(&self, a: &SparseMatrix) -> SparseMatrix {
        self.transform.congruence(a).expect("sizes")
    }

    pub fn mass(&self) -> SparseMatrix {
        self.reduce(&self.space.mass_matrix(None))
    }

    /// `∫ curl u curl v`.
    pub fn curl_curl(&self) -> SparseMatrix {
        self.reduce(&self.space.stiffness_matrix())
    }

    /// `∫ div u div v`.
    pub fn div_div(&self) -> SparseMatrix {
        let mesh = self.space.mesh();
        let mut t = Vec::new();
        for c in 0..mesh.num_cells() {
            let cv = self.scalar.cell_values(c, 2);
            let local = self.space.cell_dofs(c);
            for q in 0..cv.weights.len() {
                let divs: Vec<f64> = (0..local.len()).map(|j| cv.dvalue(q, j / 2)[j % 2]).collect();
                for (i, gi) in local.iter().enumerate() {
                    for (j, gj) in local.iter().enumerate() {
                        t.push((gi.unwrap(), gj.unwrap(), cv.weights[q] * divs[i] * divs[j]));
                    }
                }
            }
        }
        let n = self.space.dim();
        self.reduce(&SparseMatrix::from_triplets(n, n, &t))
    }

    pub fn load(&self, f: FormSampler<'_>) -> Vec<f64> {
        self.transform.matvec_transpose(&self.space.load_vector(f, 4))
    }

    /// Value of the field with full coefficients `full` in cell `c`.
    pub fn evaluate(&self, full: &[f64], c: usize, x: &[f64]) -> Vec<f64> {
        self.space.evaluate(full, c, x).0
    }
}

/// Minimizes `½∫(div u)² + (curl u)² − ∫ f·u` over continuous piecewise
/// linear fields with `u · n = 0`. Returns full nodal coefficients.
pub fn nodal_vector_laplacian(nodal: &NodalVectorSpace, f: FormSampler<'_>) -> Result<Vec<f64>> {
    let a = nodal.div_div().add_scaled(&nodal.curl_curl(), 1.0)?;
    let b = nodal.load(f);
    let x = LuSolver::new(&a)?.solve(&b)?;
    Ok(nodal.expand(&x))
}

/// Nonzero eigenvalues of `∫ curl u curl v = λ ∫ u·v` over the nodal space,
/// ascending (dense).
pub fn nodal_curl_curl_eigenvalues(nodal: &NodalVectorSpace, count: usize) -> Result<Vec<f64>> {
    let (vals, _) = generalized_eigen_dense(&nodal.curl_curl().to_dense(), &nodal.mass().to_dense())?;
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    Ok(vals.into_iter().filter(|v| *v > 1e-8 * top).take(count).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derham::assemble_complex;
    use crate::mesh::{generate, MeshKind};
    use crate::polyform::Family;
    use std::f64::consts::PI;

    fn mesh(kind: MeshKind) -> Arc<SimplicialComplex> {
        Arc::new(generate(&kind).unwrap())
    }

    #[test]
    fn rates_need_three_levels() {
        assert!(fit_rate(&[1.0, 0.5], &[1.0, 0.25]).is_err());
        let r = fit_rate(&[1.0, 0.5, 0.25], &[1.0, 0.25, 0.0625]).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_pairs() {
        let p = |r: u32, k: usize| ElementType::Form(PolySpaceSpec::full(r, k, 1));
        let u_exact = |x: &[f64]| vec![(PI * x[0] / 2.0).cos()];
        let f = |x: &[f64]| vec![(PI / 2.0).powi(2) * (PI * x[0] / 2.0).cos()];
        let m = mesh(MeshKind::interval(8));
        let stable = MixedPair::new(&m, p(1, 0), p(0, 1)).unwrap();
        let (_, u) = stable.solve(&f).unwrap();
        let e = stable.u.l2_error(&u, &u_exact);
        assert!(e < 0.15, "{e}");
        let singular = MixedPair::new(&m, p(1, 0), ElementType::ContinuousComponents { r: 1, k: 1, n: 1 }).unwrap();
        assert!(matches!(singular.solve(&f), Err(FeecError::Singular { .. })));
        let g: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| MixedPair::new(&mesh(MeshKind::interval(n)), p(2, 0), p(0, 1)).unwrap().infsup().unwrap())
            .collect();
        assert!(g[2] < 0.6 * g[0], "{g:?}");
        let s: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| MixedPair::new(&mesh(MeshKind::interval(n)), p(2, 0), p(1, 1)).unwrap().infsup().unwrap())
            .collect();
        assert!(s[2] > 0.8 * s[0], "{s:?}");
    }

    #[test]
    fn source_problem_on_annulus() {
        let m = mesh(MeshKind::annulus(2));
        let c = assemble_complex(&m, 2, 1, &[Family::PMinus], BoundaryCondition::Natural, None).unwrap();
        let f = |x: &[f64]| vec![0.0, x[0]];
        let s = solve_source(&c, 1, &f).unwrap();
        let r = source_residuals(&c, 1, &s).unwrap();
        assert!(r.iter().all(|v| *v < 1e-10), "{r:?}");
        // f = harmonic gives u = 0, σ = 0, p = f
        let h = c.harmonic_forms(1).unwrap()[0].clone();
        let s = solve_source_rhs(&c, 1, c.mass(1).matvec(&h)).unwrap();
        assert!(norm(&s.u) < 1e-10 && norm(&s.sigma) < 1e-10);
        assert!(s.p.iter().zip(&h).all(|(a, b)| (a - b).abs() < 1e-10));
        let b = solve_b_star(&c, 1, &f).unwrap();
        assert!(b.discarded_norm > 0.0);
        assert!(dot(&h, &c.mass(1).matvec(&b.u)).abs() < 1e-10);
    }

    #[test]
    fn maxwell_spectrum_and_classification() {
        let m = mesh(MeshKind::Square { n: 6, side: PI });
        let c = assemble_complex(&m, 2, 1, &[Family::PMinus], BoundaryCondition::Essential, None).unwrap();
        let e1 = solve_eigen(&c, 1, 20).unwrap();
        let bstar = e1.of_kind(ModeKind::BStar);
        for (got, want) in bstar.iter().zip([1.0, 1.0, 2.0, 4.0, 4.0]) {
            assert!((got - want).abs() < 0.1 * want, "{bstar:?}");
        }
        // B-type eigenvalues of degree 1 are the B*-type eigenvalues of degree 0
        let e0 = solve_eigen(&c, 0, 10).unwrap();
        let b1 = e1.of_kind(ModeKind::B);
        let b0 = e0.of_kind(ModeKind::BStar);
        for (a, b) in b1.iter().zip(&b0) {
            assert!((a - b).abs() < 1e-8 * b, "{a} vs {b}");
        }
        assert!((b0[0] - 2.0).abs() < 0.2);
        // the sparse path agrees on the lowest values
        let (sv, _) = eigen_sparse(&c, 1, 4).unwrap();
        assert!((sv[0] - e1.values[0]).abs() < 1e-8);
        let nodal = NodalVectorSpace::new(&m, NodalBoundary::TangentialZero).unwrap();
        let ev = nodal_curl_curl_eigenvalues(&nodal, 8).unwrap();
        assert_eq!(ev.len(), 8);
    }

    #[test]
    fn complex_infsup_is_positive() {
        let m = mesh(MeshKind::unit_square(3));
        let c = assemble_complex(&m, 2, 1, &[Family::PMinus], BoundaryCondition::Natural, None).unwrap();
        for k in 0..=2 {
            let g = measure_infsup(&c, k).unwrap();
            assert!(g > 0.05 && g <= 1.0 + 1e-12, "k={k}: {g}");
        }
    }
}
