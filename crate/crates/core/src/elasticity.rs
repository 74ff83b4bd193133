//! Two-dimensional mixed elasticity with the 24-DOF symmetric stress
//! element (continuous cubic stresses at vertices, piecewise linear
//! divergence) and discontinuous piecewise-linear displacements.

use std::sync::{Arc, OnceLock};

use num_traits::{One, Signed, Zero};

use crate::error::{FeecError, Result};
use crate::hodge::infsup_from_blocks;
use crate::linalg::{rank_and_nullspace, LuSolver, SparseMatrix};
use crate::mesh::SimplicialComplex;
use crate::polyform::{exponents_upto, homogeneous_exponents, monomial_simplex_integral, FloatPolyForm, PolyForm, TermKey};
use crate::quadrature::{gauss_legendre, simplex_rule};
use crate::ratmat::QMatrix;
use crate::Rational;

/// Symmetric 2×2 matrix of scalar polynomials on the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrixField {
    pub xx: PolyForm,
    pub xy: PolyForm,
    pub yy: PolyForm,
}

impl SymMatrixField {
    pub fn zero() -> Self {
        Self {
            xx: PolyForm::zero(2, 0),
            xy: PolyForm::zero(2, 0),
            yy: PolyForm::zero(2, 0),
        }
    }

    pub fn components(&self) -> [&PolyForm; 3] {
        [&self.xx, &self.xy, &self.yy]
    }

    pub fn from_components([xx, xy, yy]: [PolyForm; 3]) -> Self {
        Self { xx, xy, yy }
    }

    pub fn degree(&self) -> Option<u32> {
        self.components().iter().filter_map(|p| p.degree()).max()
    }

    pub fn is_zero(&self) -> bool {
        self.components().iter().all(|p| p.is_zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            xx: self.xx.add(&other.xx),
            xy: self.xy.add(&other.xy),
            yy: self.yy.add(&other.yy),
        }
    }

    pub fn scale(&self, s: &Rational) -> Self {
        Self {
            xx: self.xx.scale(s),
            xy: self.xy.scale(s),
            yy: self.yy.scale(s),
        }
    }

    /// Row-wise divergence.
    pub fn divergence(&self) -> [PolyForm; 2] {
        [
            self.xx.partial_derivative(0).add(&self.xy.partial_derivative(1)),
            self.xy.partial_derivative(0).add(&self.yy.partial_derivative(1)),
        ]
    }

    /// `[xx, xy, yy]` at `x`.
    pub fn evaluate(&self, x: &[f64]) -> [f64; 3] {
        let v = self.components().map(|p| p.evaluate(x)[0]);
        [v[0], v[1], v[2]]
    }
}

/// Rotated Hessian `[[∂yy q, −∂xy q], [−∂xy q, ∂xx q]]`.
pub fn airy_j(q: &PolyForm) -> SymMatrixField {
    let dx = q.partial_derivative(0);
    let dy = q.partial_derivative(1);
    SymMatrixField {
        xx: dy.partial_derivative(1),
        xy: dx.partial_derivative(1).scale(&-Rational::one()),
        yy: dx.partial_derivative(0),
    }
}

/// Dimension of `J(P_r)` by exact rank.
pub fn airy_image_dimension(r: u32) -> usize {
    let fields: Vec<SymMatrixField> = exponents_upto(2, r).into_iter().map(|e| airy_j(&monomial(e))).collect();
    field_rank(&fields, r.saturating_sub(2))
}

fn monomial(exps: Vec<u32>) -> PolyForm {
    PolyForm::monomial(2, exps, 0, Rational::one())
}

fn field_rank(fields: &[SymMatrixField], degree: u32) -> usize {
    let keys = exponents_upto(2, degree);
    let rows = 3 * keys.len();
    let cols: Vec<Vec<Rational>> = fields
        .iter()
        .map(|f| {
            f.components()
                .iter()
                .flat_map(|p| keys.iter().map(|e| p.coeff(&TermKey::new(e.clone(), 0))))
                .collect()
        })
        .collect();
    QMatrix::from_columns(rows, &cols).rank()
}

/// The local shape space `{τ ∈ P₃(Sym) : div τ ∈ P₁}` as an exact basis,
/// built as the null space of the map to the quadratic part of `div τ`.
#[derive(Clone, Debug)]
pub struct StressShapeSpace {
    pub full_dim: usize,
    pub constraint_rank: usize,
    pub basis: Vec<SymMatrixField>,
}

impl StressShapeSpace {
    pub fn get() -> &'static StressShapeSpace {
        static SPACE: OnceLock<StressShapeSpace> = OnceLock::new();
        SPACE.get_or_init(Self::build)
    }

    fn build() -> Self {
        let mut full = Vec::new();
        for comp in 0..3 {
            for e in exponents_upto(2, 3) {
                let mut parts = [PolyForm::zero(2, 0), PolyForm::zero(2, 0), PolyForm::zero(2, 0)];
                parts[comp] = monomial(e);
                full.push(SymMatrixField::from_components(parts));
            }
        }
        let quad = homogeneous_exponents(2, 2);
        let cols: Vec<Vec<Rational>> = full
            .iter()
            .map(|f| {
                f.divergence()
                    .iter()
                    .flat_map(|d| quad.iter().map(|e| d.coeff(&TermKey::new(e.clone(), 0))))
                    .collect()
            })
            .collect();
        let constraint = QMatrix::from_columns(2 * quad.len(), &cols);
        let basis = constraint
            .nullspace()
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&full)
                    .filter(|(c, _)| !c.is_zero())
                    .fold(SymMatrixField::zero(), |acc, (c, f)| acc.add(&f.scale(c)))
            })
            .collect();
        Self {
            full_dim: full.len(),
            constraint_rank: constraint.rank(),
            basis,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Dimension of the divergence-free subspace, by exact rank of `div`.
    pub fn divergence_free_dimension(&self) -> usize {
        let keys = exponents_upto(2, 1);
        let cols: Vec<Vec<Rational>> = self
            .basis
            .iter()
            .map(|f| {
                f.divergence()
                    .iter()
                    .flat_map(|d| keys.iter().map(|e| d.coeff(&TermKey::new(e.clone(), 0))))
                    .collect()
            })
            .collect();
        self.dim() - QMatrix::from_columns(2 * keys.len(), &cols).rank()
    }
}

/// Local edges as pairs of local vertex indices, oriented as given.
pub type LocalEdges = [[usize; 2]; 3];

/// The 24 degrees of freedom of a field on the triangle `verts`, in exact
/// arithmetic: vertex values `[xx,xy,yy]` (9), per edge the moments of
/// `τν` against `1` and `s` with `ν` the unnormalized rotated tangent and
/// `s ∈ [0,1]` the edge parameter (12), and the cell integrals (3).
pub fn stress_dofs_exact(field: &SymMatrixField, verts: &[[Rational; 2]; 3], edges: &LocalEdges) -> Vec<Rational> {
    let mut out = Vec::with_capacity(24);
    for v in verts {
        for p in field.components() {
            out.push(eval_exact(p, v));
        }
    }
    for [a, b] in edges {
        let (pa, pb) = (&verts[*a], &verts[*b]);
        let d = [&pb[0] - &pa[0], &pb[1] - &pa[1]];
        let nu = [d[1].clone(), -d[0].clone()];
        let map = vec![vec![d[0].clone()], vec![d[1].clone()]];
        let shift = vec![pa[0].clone(), pa[1].clone()];
        let c = field.components().map(|p| p.pullback(&map, &shift));
        let normal = [
            c[0].scale(&nu[0]).add(&c[1].scale(&nu[1])),
            c[1].scale(&nu[0]).add(&c[2].scale(&nu[1])),
        ];
        for q in 0..2u32 {
            for n in &normal {
                let weighted = if q == 0 { n.clone() } else { n.wedge(&PolyForm::coordinate(1, 0)) };
                out.push(integrate_scalar_reference(&weighted));
            }
        }
    }
    let map = vec![
        vec![&verts[1][0] - &verts[0][0], &verts[2][0] - &verts[0][0]],
        vec![&verts[1][1] - &verts[0][1], &verts[2][1] - &verts[0][1]],
    ];
    let det = (&map[0][0] * &map[1][1] - &map[0][1] * &map[1][0]).abs();
    let shift = vec![verts[0][0].clone(), verts[0][1].clone()];
    for p in field.components() {
        out.push(integrate_scalar_reference(&p.pullback(&map, &shift)) * &det);
    }
    out
}

fn eval_exact(p: &PolyForm, x: &[Rational; 2]) -> Rational {
    let mut acc = Rational::zero();
    for (key, c) in p.terms() {
        let mut t = c.clone();
        for (xi, &e) in x.iter().zip(&key.exps) {
            for _ in 0..e {
                t *= xi;
            }
        }
        acc += t;
    }
    acc
}

fn integrate_scalar_reference(p: &PolyForm) -> Rational {
    p.terms().map(|(k, c)| c * monomial_simplex_integral(&k.exps)).fold(Rational::zero(), |a, b| a + b)
}

/// Exact 24×24 DOF matrix of the shape space on a triangle.
pub fn stress_dof_matrix_exact(verts: &[[Rational; 2]; 3]) -> QMatrix {
    let edges = [[0, 1], [0, 2], [1, 2]];
    let cols: Vec<Vec<Rational>> =
        StressShapeSpace::get().basis.iter().map(|f| stress_dofs_exact(f, verts, &edges)).collect();
    QMatrix::from_columns(24, &cols)
}

/// Checks that the 24 degrees of freedom determine the shape space on the
/// given triangle.
pub fn check_unisolvence(verts: &[[Rational; 2]; 3]) -> Result<()> {
    let rank = stress_dof_matrix_exact(verts).rank();
    if rank == 24 {
        Ok(())
    } else {
        Err(FeecError::Singular { nullity: 24 - rank })
    }
}

struct ShapeTables {
    values: Vec<FloatPolyForm>,
    divs: Vec<FloatPolyForm>,
}

fn shape_tables() -> &'static ShapeTables {
    static TABLES: OnceLock<ShapeTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let basis = &StressShapeSpace::get().basis;
        ShapeTables {
            values: basis.iter().flat_map(|f| f.components().map(FloatPolyForm::from_exact)).collect(),
            divs: basis.iter().flat_map(|f| f.divergence().map(|d| FloatPolyForm::from_exact(&d))).collect(),
        }
    })
}

struct StressCell {
    center: [f64; 2],
    h: f64,
    /// Row-major 24×24 map from shape coefficients to the nodal basis.
    coeffs: Vec<f64>,
    global: [usize; 24],
}

/// Global stress space on a triangulation.
pub struct StressSpace {
    mesh: Arc<SimplicialComplex>,
    cells: Vec<StressCell>,
    dim: usize,
}

impl StressSpace {
    pub fn new(mesh: Arc<SimplicialComplex>) -> Result<Self> {
        if mesh.dim() != 2 {
            return Err(FeecError::InvalidArgument("the stress element is two-dimensional".into()));
        }
        let (nv, ne) = (mesh.num_vertices(), mesh.num_faces(1));
        let dim = 3 * nv + 4 * ne + 3 * mesh.num_cells();
        let mut cells = Vec::with_capacity(mesh.num_cells());
        for c in 0..mesh.num_cells() {
            let cell = mesh.cell(c);
            let verts: Vec<[f64; 2]> = cell.iter().map(|&v| [mesh.vertex(v)[0], mesh.vertex(v)[1]]).collect();
            let mut edges = [[0usize; 2]; 3];
            let mut global = [0usize; 24];
            for (i, &v) in cell.iter().enumerate() {
                for comp in 0..3 {
                    global[3 * i + comp] = 3 * v + comp;
                }
            }
            for (j, &e) in mesh.cell_faces(1, c).iter().enumerate() {
                let f = mesh.face(1, e);
                let local = |g: usize| cell.iter().position(|&v| v == g).expect("edge of cell");
                edges[j] = [local(f[0]), local(f[1])];
                for l in 0..4 {
                    global[9 + 4 * j + l] = 3 * nv + 4 * e + l;
                }
            }
            for comp in 0..3 {
                global[21 + comp] = 3 * nv + 4 * ne + 3 * c + comp;
            }
            let center = [
                (verts[0][0] + verts[1][0] + verts[2][0]) / 3.0,
                (verts[0][1] + verts[1][1] + verts[2][1]) / 3.0,
            ];
            let h = mesh.cell_diameter(c);
            let mut dmat = faer::Mat::<f64>::zeros(24, 24);
            for j in 0..24 {
                let dofs = stress_dofs(
                    |x| {
                        let xi = [(x[0] - center[0]) / h, (x[1] - center[1]) / h];
                        let t = &shape_tables().values[3 * j..3 * j + 3];
                        [t[0].evaluate(&xi)[0], t[1].evaluate(&xi)[0], t[2].evaluate(&xi)[0]]
                    },
                    &verts,
                    &edges,
                );
                for (i, d) in dofs.iter().enumerate() {
                    dmat[(i, j)] = *d;
                }
            }
            let info = rank_and_nullspace(&dmat, 1e-12)?;
            if info.rank < 24 {
                return Err(FeecError::Singular { nullity: 24 - info.rank });
            }
            let lu = dmat.partial_piv_lu();
            let inv = faer::linalg::solvers::Solve::solve(&lu, faer::Mat::<f64>::identity(24, 24));
            let coeffs = (0..24).flat_map(|i| (0..24).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect();
            cells.push(StressCell { center, h, coeffs, global });
        }
        Ok(Self { mesh, cells, dim })
    }

    pub fn mesh(&self) -> &Arc<SimplicialComplex> {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize; 24] {
        &self.cells[c].global
    }

    /// Values `[xx,xy,yy]` and divergences of the 24 local basis functions.
    pub fn basis_at(&self, c: usize, x: &[f64]) -> (Vec<[f64; 3]>, Vec<[f64; 2]>) {
        let cell = &self.cells[c];
        let xi = [(x[0] - cell.center[0]) / cell.h, (x[1] - cell.center[1]) / cell.h];
        let t = shape_tables();
        let sv: Vec<f64> = t.values.iter().map(|p| p.evaluate(&xi)[0]).collect();
        let sd: Vec<f64> = t.divs.iter().map(|p| p.evaluate(&xi)[0] / cell.h).collect();
        let mut vals = vec![[0.0; 3]; 24];
        let mut divs = vec![[0.0; 2]; 24];
        for k in 0..24 {
            for j in 0..24 {
                let a = cell.coeffs[j * 24 + k];
                for comp in 0..3 {
                    vals[k][comp] += a * sv[3 * j + comp];
                }
                for comp in 0..2 {
                    divs[k][comp] += a * sd[2 * j + comp];
                }
            }
        }
        (vals, divs)
    }

    /// `(σ_h(x), div σ_h(x))` in cell `c`.
    pub fn evaluate(&self, coeffs: &[f64], c: usize, x: &[f64]) -> ([f64; 3], [f64; 2]) {
        let (vals, divs) = self.basis_at(c, x);
        let mut v = [0.0; 3];
        let mut d = [0.0; 2];
        for (k, &g) in self.cells[c].global.iter().enumerate() {
            for comp in 0..3 {
                v[comp] += coeffs[g] * vals[k][comp];
            }
            for comp in 0..2 {
                d[comp] += coeffs[g] * divs[k][comp];
            }
        }
        (v, d)
    }

    /// Global degrees of freedom of a field, by the same functionals.
    pub fn interpolate(&self, f: &(dyn Fn(&[f64]) -> [f64; 3] + Sync)) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for c in 0..self.mesh.num_cells() {
            let cell = self.mesh.cell(c);
            let verts: Vec<[f64; 2]> = cell.iter().map(|&v| [self.mesh.vertex(v)[0], self.mesh.vertex(v)[1]]).collect();
            let mut edges = [[0usize; 2]; 3];
            for (j, &e) in self.mesh.cell_faces(1, c).iter().enumerate() {
                let fv = self.mesh.face(1, e);
                let local = |g: usize| cell.iter().position(|&v| v == g).expect("edge of cell");
                edges[j] = [local(fv[0]), local(fv[1])];
            }
            for (i, d) in stress_dofs(f, &verts, &edges).into_iter().enumerate() {
                out[self.cells[c].global[i]] = d;
            }
        }
        out
    }
}

/// Floating-point version of [`stress_dofs_exact`] by quadrature.
pub fn stress_dofs(f: impl Fn(&[f64]) -> [f64; 3], verts: &[[f64; 2]], edges: &LocalEdges) -> Vec<f64> {
    let mut out = Vec::with_capacity(24);
    for v in verts {
        out.extend_from_slice(&f(v));
    }
    let (gx, gw) = gauss_legendre(4);
    for [a, b] in edges {
        let (pa, pb) = (verts[*a], verts[*b]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let nu = [d[1], -d[0]];
        let mut m = [0.0; 4];
        for (x, w) in gx.iter().zip(&gw) {
            let s = 0.5 * (x + 1.0);
            let w = 0.5 * w;
            let t = f(&[pa[0] + s * d[0], pa[1] + s * d[1]]);
            let n = [t[0] * nu[0] + t[1] * nu[1], t[1] * nu[0] + t[2] * nu[1]];
            m[0] += w * n[0];
            m[1] += w * n[1];
            m[2] += w * s * n[0];
            m[3] += w * s * n[1];
        }
        out.extend_from_slice(&m);
    }
    let rule = simplex_rule(2, 6);
    let j = [verts[1][0] - verts[0][0], verts[2][0] - verts[0][0], verts[1][1] - verts[0][1], verts[2][1] - verts[0][1]];
    let det = (j[0] * j[3] - j[1] * j[2]).abs();
    let mut m = [0.0; 3];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let x = [verts[0][0] + j[0] * p[0] + j[1] * p[1], verts[0][1] + j[2] * p[0] + j[3] * p[1]];
        let t = f(&x);
        for comp in 0..3 {
            m[comp] += w * det * t[comp];
        }
    }
    out.extend_from_slice(&m);
    out
}

/// Compliance tensor acting on symmetric matrices stored as `[xx,xy,yy]`.
pub enum Compliance {
    /// `Aσ = (σ − λ/(2μ+2λ) tr(σ) I) / (2μ)`.
    Isotropic { lambda: f64, mu: f64 },
    Field(Box<dyn Fn(&[f64], [f64; 3]) -> [f64; 3] + Sync + Send>),
}

impl Compliance {
    pub fn apply(&self, x: &[f64], s: [f64; 3]) -> [f64; 3] {
        match self {
            Compliance::Isotropic { lambda, mu } => {
                let t = lambda / (2.0 * mu + 2.0 * lambda) * (s[0] + s[2]);
                [(s[0] - t) / (2.0 * mu), s[1] / (2.0 * mu), (s[2] - t) / (2.0 * mu)]
            }
            Compliance::Field(f) => f(x, s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Compliance::Isotropic { lambda, mu } = self {
            if !(*mu > 0.0 && mu + lambda > 0.0) {
                return Err(FeecError::InvalidArgument(format!("compliance with λ={lambda}, μ={mu} is not positive definite")));
            }
        }
        Ok(())
    }
}

/// Frobenius product of symmetric matrices stored as `[xx,xy,yy]`.
pub fn frobenius(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + 2.0 * a[1] * b[1] + a[2] * b[2]
}

/// Discontinuous piecewise-linear vector fields: index `6c + 2i + comp`
/// for barycentric coordinate `i` of cell `c`.
pub fn displacement_dim(mesh: &SimplicialComplex) -> usize {
    6 * mesh.num_cells()
}

pub fn evaluate_displacement(mesh: &SimplicialComplex, u: &[f64], c: usize, x: &[f64]) -> [f64; 2] {
    let lam = mesh.barycentric(c, x);
    let mut out = [0.0; 2];
    for (i, l) in lam.iter().enumerate() {
        for comp in 0..2 {
            out[comp] += u[6 * c + 2 * i + comp] * l;
        }
    }
    out
}

/// Assembled blocks of the mixed elasticity system.
pub struct ElasticitySystem {
    /// `∫ Aσ:τ`.
    pub compliance_mass: SparseMatrix,
    /// `∫ σ:τ`.
    pub stress_mass: SparseMatrix,
    /// `∫ div σ · div τ`.
    pub div_div: SparseMatrix,
    /// `∫ div τ · v` (displacement rows).
    pub coupling: SparseMatrix,
    pub displacement_mass: SparseMatrix,
}

pub fn assemble_elasticity(space: &StressSpace, compliance: &Compliance) -> Result<ElasticitySystem> {
    compliance.validate()?;
    let mesh = space.mesh();
    let rule = simplex_rule(2, 6);
    let (ns, nu) = (space.dim(), displacement_dim(mesh));
    let (mut ta, mut tm, mut td, mut tc, mut tu) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for c in 0..mesh.num_cells() {
        let (v0, j, det) = mesh.cell_map(c);
        let g = space.cell_dofs(c);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = [v0[0] + j[0] * p[0] + j[1] * p[1], v0[1] + j[2] * p[0] + j[3] * p[1]];
            let w = w * det.abs();
            let (vals, divs) = space.basis_at(c, &x);
            let avals: Vec<[f64; 3]> = vals.iter().map(|v| compliance.apply(&x, *v)).collect();
            for a in 0..24 {
                for b in 0..24 {
                    ta.push((g[a], g[b], w * frobenius(avals[b], vals[a])));
                    tm.push((g[a], g[b], w * frobenius(vals[b], vals[a])));
                    td.push((g[a], g[b], w * (divs[a][0] * divs[b][0] + divs[a][1] * divs[b][1])));
                }
            }
            let lam = [1.0 - p[0] - p[1], p[0], p[1]];
            for i in 0..3 {
                for comp in 0..2 {
                    let row = 6 * c + 2 * i + comp;
                    for b in 0..24 {
                        tc.push((row, g[b], w * lam[i] * divs[b][comp]));
                    }
                    for l in 0..3 {
                        tu.push((row, 6 * c + 2 * l + comp, w * lam[i] * lam[l]));
                    }
                }
            }
        }
    }
    Ok(ElasticitySystem {
        compliance_mass: SparseMatrix::from_triplets(ns, ns, &ta),
        stress_mass: SparseMatrix::from_triplets(ns, ns, &tm),
        div_div: SparseMatrix::from_triplets(ns, ns, &td),
        coupling: SparseMatrix::from_triplets(nu, ns, &tc),
        displacement_mass: SparseMatrix::from_triplets(nu, nu, &tu),
    })
}

pub fn load_displacement(mesh: &SimplicialComplex, f: &(dyn Fn(&[f64]) -> [f64; 2] + Sync)) -> Vec<f64> {
    let rule = simplex_rule(2, 8);
    let mut b = vec![0.0; displacement_dim(mesh)];
    for c in 0..mesh.num_cells() {
        let (v0, j, det) = mesh.cell_map(c);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = [v0[0] + j[0] * p[0] + j[1] * p[1], v0[1] + j[2] * p[0] + j[3] * p[1]];
            let fv = f(&x);
            let lam = [1.0 - p[0] - p[1], p[0], p[1]];
            for i in 0..3 {
                for comp in 0..2 {
                    b[6 * c + 2 * i + comp] += w * det.abs() * lam[i] * fv[comp];
                }
            }
        }
    }
    b
}

#[derive(Clone, Debug)]
pub struct ElasticitySolution {
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    /// Relative residual of the assembled saddle system.
    pub residual: f64,
}

/// Solves `∫Aσ:τ + ∫div τ·u = 0`, `∫div σ·v = ∫f·v`.
pub fn solve_elasticity(
    space: &StressSpace,
    compliance: &Compliance,
    f: &(dyn Fn(&[f64]) -> [f64; 2] + Sync),
) -> Result<ElasticitySolution> {
    let sys = assemble_elasticity(space, compliance)?;
    let (ns, nu) = (space.dim(), displacement_dim(space.mesh()));
    let ct = sys.coupling.transpose();
    let matrix = SparseMatrix::block(
        &[ns, nu],
        &[ns, nu],
        &[vec![Some(&sys.compliance_mass), Some(&ct)], vec![Some(&sys.coupling), None]],
    )?;
    let mut rhs = vec![0.0; ns + nu];
    rhs[ns..].copy_from_slice(&load_displacement(space.mesh(), f));
    let x = LuSolver::new(&matrix)?.solve(&rhs)?;
    let r: Vec<f64> = matrix.matvec(&x).iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let scale = crate::linalg::norm(&rhs).max(f64::MIN_POSITIVE);
    Ok(ElasticitySolution {
        sigma: x[..ns].to_vec(),
        u: x[ns..].to_vec(),
        residual: crate::linalg::norm(&r) / scale,
    })
}

fn cell_points(mesh: &SimplicialComplex, c: usize, degree: u32) -> Vec<([f64; 2], f64)> {
    let rule = simplex_rule(2, degree);
    let (v0, j, det) = mesh.cell_map(c);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| ([v0[0] + j[0] * p[0] + j[1] * p[1], v0[1] + j[2] * p[0] + j[3] * p[1]], w * det.abs()))
        .collect()
}

/// `‖σ − σ_h‖_{L²}` in the Frobenius norm.
pub fn stress_error(space: &StressSpace, sigma: &[f64], exact: &(dyn Fn(&[f64]) -> [f64; 3] + Sync)) -> f64 {
    let mut acc = 0.0;
    for c in 0..space.mesh().num_cells() {
        for (x, w) in cell_points(space.mesh(), c, 9) {
            let (v, _) = space.evaluate(sigma, c, &x);
            let e = exact(&x);
            let d = [v[0] - e[0], v[1] - e[1], v[2] - e[2]];
            acc += w * frobenius(d, d);
        }
    }
    acc.sqrt()
}

/// `‖u − u_h‖_{L²}`.
pub fn displacement_error(mesh: &SimplicialComplex, u: &[f64], exact: &(dyn Fn(&[f64]) -> [f64; 2] + Sync)) -> f64 {
    let mut acc = 0.0;
    for c in 0..mesh.num_cells() {
        for (x, w) in cell_points(mesh, c, 8) {
            let v = evaluate_displacement(mesh, u, c, &x);
            let e = exact(&x);
            acc += w * ((v[0] - e[0]).powi(2) + (v[1] - e[1]).powi(2));
        }
    }
    acc.sqrt()
}

/// `‖div σ_h − Π f‖_{L²}` with `Π` the L² projection onto the displacement space.
pub fn div_projection_defect(space: &StressSpace, sigma: &[f64], f: &(dyn Fn(&[f64]) -> [f64; 2] + Sync)) -> Result<f64> {
    let mesh = space.mesh();
    let b = load_displacement(mesh, f);
    let mut acc = 0.0;
    for c in 0..mesh.num_cells() {
        // local P1 mass on the reference triangle: (1 + δ_il)/24 · |det|
        let det = mesh.cell_map(c).2.abs();
        let mut m = faer::Mat::<f64>::zeros(3, 3);
        for i in 0..3 {
            for l in 0..3 {
                m[(i, l)] = det * if i == l { 2.0 } else { 1.0 } / 24.0;
            }
        }
        let lu = m.partial_piv_lu();
        let mut proj = [[0.0; 3]; 2];
        for comp in 0..2 {
            let rhs = faer::Mat::<f64>::from_fn(3, 1, |i, _| b[6 * c + 2 * i + comp]);
            let sol = faer::linalg::solvers::Solve::solve(&lu, &rhs);
            for i in 0..3 {
                proj[comp][i] = sol[(i, 0)];
            }
        }
        for (x, w) in cell_points(mesh, c, 6) {
            let (_, d) = space.evaluate(sigma, c, &x);
            let lam = mesh.barycentric(c, &x);
            for comp in 0..2 {
                let p: f64 = (0..3).map(|i| proj[comp][i] * lam[i]).sum();
                acc += w * (d[comp] - p).powi(2);
            }
        }
    }
    Ok(acc.sqrt())
}

/// Inf-sup constant of the stress/displacement pair in the
/// `H(div) × L²` norms.
pub fn elasticity_infsup(space: &StressSpace) -> Result<f64> {
    let sys = assemble_elasticity(space, &Compliance::Isotropic { lambda: 0.0, mu: 0.5 })?;
    let nu = displacement_dim(space.mesh());
    infsup_from_blocks(
        &sys.stress_mass,
        &sys.div_div,
        &sys.coupling,
        &sys.displacement_mass,
        &SparseMatrix::zeros(nu, nu),
        &[],
    )
}

/// Closed-form fields for the displacement `u = sin πx sin πy (1, 1)` with
/// isotropic Lamé parameters: `(σ = 2με(u) + λ tr ε(u) I, f = div σ)`.
#[allow(clippy::type_complexity)]
pub fn manufactured_fields(lambda: f64, mu: f64) -> (impl Fn(&[f64]) -> [f64; 3] + Sync, impl Fn(&[f64]) -> [f64; 2] + Sync) {
    use std::f64::consts::PI;
    let sigma = move |x: &[f64]| {
        let (sa, ca, sb, cb) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
        let e11 = PI * ca * sb;
        let e22 = PI * sa * cb;
        let e12 = 0.5 * PI * (sa * cb + ca * sb);
        let tr = e11 + e22;
        [2.0 * mu * e11 + lambda * tr, 2.0 * mu * e12, 2.0 * mu * e22 + lambda * tr]
    };
    let f = move |x: &[f64]| {
        let (sa, ca, sb, cb) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
        let p2 = PI * PI;
        let dx_e11 = -p2 * sa * sb;
        let dy_e11 = p2 * ca * cb;
        let dx_e22 = p2 * ca * cb;
        let dy_e22 = -p2 * sa * sb;
        let dx_e12 = 0.5 * p2 * (ca * cb - sa * sb);
        let dy_e12 = 0.5 * p2 * (ca * cb - sa * sb);
        [
            2.0 * mu * dx_e11 + lambda * (dx_e11 + dx_e22) + 2.0 * mu * dy_e12,
            2.0 * mu * dx_e12 + 2.0 * mu * dy_e22 + lambda * (dy_e11 + dy_e22),
        ]
    };
    (sigma, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, MeshKind};

    fn q(v: i64) -> Rational {
        crate::rational_from_i64(v)
    }

    #[test]
    fn airy_operator() {
        let x2 = monomial(vec![2, 0]);
        let j = airy_j(&x2);
        assert!(j.xx.is_zero() && j.xy.is_zero());
        assert_eq!(j.yy, PolyForm::constant(2, q(2)));
        for e in exponents_upto(2, 1) {
            assert!(airy_j(&monomial(e)).is_zero());
        }
        for e in exponents_upto(2, 5) {
            let d = airy_j(&monomial(e)).divergence();
            assert!(d[0].is_zero() && d[1].is_zero());
        }
        assert_eq!(airy_image_dimension(5), 18);
    }

    #[test]
    fn shape_space_dimensions() {
        let s = StressShapeSpace::get();
        assert_eq!((s.full_dim, s.constraint_rank, s.dim()), (30, 6, 24));
        assert_eq!(s.divergence_free_dimension(), airy_image_dimension(5));
        for f in &s.basis {
            assert!(f.divergence().iter().all(|d| d.degree().is_none_or(|g| g <= 1)));
        }
        let tri = [[q(0), q(0)], [q(1), q(0)], [q(0), q(1)]];
        check_unisolvence(&tri).unwrap();
    }

    #[test]
    fn global_dimension_and_interpolation() {
        let m = Arc::new(generate(&MeshKind::unit_square(2)).unwrap());
        let s = StressSpace::new(m.clone()).unwrap();
        assert_eq!(s.dim(), 3 * m.num_vertices() + 4 * m.num_faces(1) + 3 * m.num_cells());
        // cubic symmetric fields with linear divergence are reproduced
        let f = |x: &[f64]| [x[1].powi(3), x[0].powi(3) + 1.0, -3.0 * x[0] * x[0] * x[1] + x[0] - 2.0];
        let c = s.interpolate(&f);
        for cell in 0..m.num_cells() {
            let x = [0.3, 0.4];
            if m.contains_point(cell, &x, 0.0) {
                let (v, _) = s.evaluate(&c, cell, &x);
                let e = f(&x);
                assert!((0..3).all(|i| (v[i] - e[i]).abs() < 1e-10), "{v:?} {e:?}");
            }
        }
    }

    #[test]
    fn homogeneous_problem_and_projection() {
        let m = Arc::new(generate(&MeshKind::unit_square(2)).unwrap());
        let s = StressSpace::new(m).unwrap();
        let a = Compliance::Isotropic { lambda: 1.0, mu: 1.0 };
        let zero = solve_elasticity(&s, &a, &|_| [0.0, 0.0]).unwrap();
        assert!(zero.sigma.iter().chain(&zero.u).all(|v| *v == 0.0));
        let (_, f) = manufactured_fields(1.0, 1.0);
        let sol = solve_elasticity(&s, &a, &f).unwrap();
        assert!(sol.residual < 1e-10);
        assert!(div_projection_defect(&s, &sol.sigma, &f).unwrap() < 1e-10);
        assert!(Compliance::Isotropic { lambda: -1.0, mu: 0.5 }.validate().is_err());
    }

    #[test]
    fn manufactured_forcing_matches_divergence() {
        let (sigma, f) = manufactured_fields(2.0, 0.7);
        let x = [0.31, 0.62];
        let h = 1e-5;
        let d = |i: usize, comp: usize| {
            let mut p = x;
            let mut m = x;
            p[i] += h;
            m[i] -= h;
            (sigma(&p)[comp] - sigma(&m)[comp]) / (2.0 * h)
        };
        let fx = f(&x);
        assert!((fx[0] - (d(0, 0) + d(1, 1))).abs() < 1e-5);
        assert!((fx[1] - (d(0, 1) + d(1, 2))).abs() < 1e-5);
    }
}
