//! Finite element spaces of differential forms on simplicial meshes.
//!
//! Every element is built once on the reference simplex `{ξ ≥ 0, Σξ ≤ 1}`:
//! its degrees of freedom are trace moments `ω ↦ ∫_f tr_f ω ∧ η` over the
//! faces `f`, with weights `η` expressed in the face's own affine
//! parametrization `t ↦ x_{a_0} + Σ t_i (x_{a_i} − x_{a_0})` by its sorted
//! vertices. Because cells and faces are stored as sorted vertex tuples, the
//! same parametrization is seen from every cell, the moments are invariant
//! under affine pullback, and the reference dual basis pushed forward to any
//! cell is the physical dual basis. Global continuity then needs no sign
//! bookkeeping.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{FeecError, Result};
use crate::exterior::{binomial, indices, subsets, wedge_sign, AltIndex};
use crate::linalg::{CholeskySolver, SparseMatrix};
use crate::mesh::{det_small, local_faces, solve_small, SimplicialComplex};
use crate::polyform::{Family, FloatPolyForm, PolyForm, PolySpaceSpec};
use crate::quadrature::{simplex_rule, SimplexRule};
use crate::ratmat::QMatrix;
use crate::{rational_from_i64, Rational};

/// A differential form field sampled at a physical point; components are
/// ordered as [`subsets`]`(n, k)`.
pub type FormSampler<'a> = &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync);

/// A symmetric positive definite operator on `Alt^k` sampled at a point,
/// returned row-major as a `C(n,k) × C(n,k)` matrix.
pub type CoefficientField<'a> = &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync);

/// One degree of freedom of a reference element.
#[derive(Clone, Debug)]
pub struct DofFunctional {
    /// Dimension of the face carrying the moment.
    pub face_dim: usize,
    /// Index of the face among the local faces of that dimension.
    pub local_face: usize,
    /// Index of the weight within the face block.
    pub index: usize,
    /// Weight `η`, a `(face_dim − k)`-form on `R^{face_dim}`.
    pub weight: PolyForm,
}

/// Degree-of-freedom weights on a `d`-face for the element `spec`.
pub fn weight_space(spec: &PolySpaceSpec, d: usize) -> Vec<PolyForm> {
    let k = spec.k;
    if d < k {
        return Vec::new();
    }
    let (r, k_i, d_i) = (spec.r as i64, k as i64, d as i64);
    match spec.family {
        Family::P => {
            let s = r + k_i - d_i;
            if s < 0 {
                return Vec::new();
            }
            PolySpaceSpec::trimmed(s as u32, d - k, d).basis()
        }
        Family::PMinus => {
            let s = r + k_i - d_i - 1;
            if s < 0 {
                return Vec::new();
            }
            PolySpaceSpec::full(s as u32, d - k, d).basis()
        }
    }
}

/// Affine parametrization `(rows of A, b)` of a local face of the reference
/// `n`-simplex, mapping `R^d` onto the face.
fn reference_face_map(n: usize, face: &[usize]) -> (Vec<Vec<Rational>>, Vec<Rational>) {
    let vertex = |a: usize| -> Vec<Rational> {
        (0..n).map(|i| if a > 0 && i == a - 1 { Rational::one() } else { Rational::zero() }).collect()
    };
    let b = vertex(face[0]);
    let cols: Vec<Vec<Rational>> = face[1..]
        .iter()
        .map(|&a| vertex(a).iter().zip(&b).map(|(x, y)| x - y).collect())
        .collect();
    let rows = (0..n).map(|i| cols.iter().map(|c| c[i].clone()).collect()).collect();
    (rows, b)
}

/// The degrees of freedom of `spec` on the reference simplex, grouped by face
/// dimension, then local face, then weight.
pub fn dof_functionals(spec: &PolySpaceSpec) -> Result<Vec<DofFunctional>> {
    check_supported(spec)?;
    let spec = spec.canonical();
    let mut out = Vec::new();
    for d in spec.k..=spec.n {
        let weights = weight_space(&spec, d);
        for lf in 0..local_faces(spec.n, d).len() {
            for (index, w) in weights.iter().enumerate() {
                out.push(DofFunctional {
                    face_dim: d,
                    local_face: lf,
                    index,
                    weight: w.clone(),
                });
            }
        }
    }
    Ok(out)
}

fn check_supported(spec: &PolySpaceSpec) -> Result<()> {
    if spec.n == 0 || spec.n > 3 || spec.k > spec.n {
        return Err(FeecError::UnsupportedSpace(format!("{spec:?}")));
    }
    let c = spec.canonical();
    let ok = match c.family {
        Family::P => c.r >= 1 || c.k == c.n,
        Family::PMinus => c.r >= 1,
    };
    if !ok {
        return Err(FeecError::UnsupportedSpace(format!(
            "{}: degree 0 spaces exist only for k = n (use P0 on n-forms, or P1- for Whitney forms)",
            spec.label()
        )));
    }
    Ok(())
}

/// Values of the basis and of its exterior derivative at the points of a
/// reference quadrature rule.
#[derive(Debug)]
pub struct Tabulation {
    pub rule: Arc<SimplexRule>,
    /// `[q][j][component]`, flattened.
    pub values: Vec<f64>,
    /// `[q][j][component of dψ]`, flattened.
    pub dvalues: Vec<f64>,
}

/// A reference element: shape space, degrees of freedom and dual basis.
#[derive(Debug)]
pub struct ReferenceElement {
    spec: PolySpaceSpec,
    shape: Vec<PolyForm>,
    dofs: Vec<DofFunctional>,
    dual: Vec<PolyForm>,
    dual_float: Vec<FloatPolyForm>,
    ddual_float: Vec<FloatPolyForm>,
    face_maps: Vec<Vec<(Vec<Vec<Rational>>, Vec<Rational>)>>,
    block_sizes: Vec<usize>,
    tabulations: Mutex<HashMap<u32, Arc<Tabulation>>>,
}

impl ReferenceElement {
    /// Shared element for `spec` (canonicalized); built on first use.
    pub fn get(spec: &PolySpaceSpec) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<PolySpaceSpec, Arc<ReferenceElement>>>> = OnceLock::new();
        check_supported(spec)?;
        let key = spec.canonical();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(e) = cache.lock().expect("element cache poisoned").get(&key) {
            return Ok(e.clone());
        }
        let e = Arc::new(Self::build(&key)?);
        cache.lock().expect("element cache poisoned").insert(key, e.clone());
        Ok(e)
    }

    fn build(spec: &PolySpaceSpec) -> Result<Self> {
        let n = spec.n;
        let shape = spec.basis();
        let dofs = dof_functionals(spec)?;
        if dofs.len() != shape.len() || shape.len() != spec.dimension() {
            return Err(FeecError::UnsupportedSpace(format!(
                "{}: {} functionals for a {}-dimensional shape space",
                spec.label(),
                dofs.len(),
                shape.len()
            )));
        }
        let face_maps = (0..=n)
            .map(|d| local_faces(n, d).iter().map(|f| reference_face_map(n, f)).collect())
            .collect();
        let block_sizes = (0..=n).map(|d| weight_space(spec, d).len()).collect();
        let mut el = Self {
            spec: *spec,
            shape,
            dofs,
            dual: Vec::new(),
            dual_float: Vec::new(),
            ddual_float: Vec::new(),
            face_maps,
            block_sizes,
            tabulations: Mutex::new(HashMap::new()),
        };
        let f = el.dof_matrix(&el.shape)?;
        let c = f.inverse()?;
        let m = el.shape.len();
        el.dual = (0..m)
            .map(|j| {
                let parts: Vec<(Rational, &PolyForm)> = (0..m).map(|l| (c[(l, j)].clone(), &el.shape[l])).collect();
                PolyForm::linear_combination(n, spec.k, &parts)
            })
            .collect();
        el.dual_float = el.dual.iter().map(|p| p.to_float()).collect();
        el.ddual_float = el
            .dual
            .iter()
            .map(|p| {
                if spec.k < n {
                    p.exterior_derivative().to_float()
                } else {
                    PolyForm::zero(n, n).to_float()
                }
            })
            .collect();
        Ok(el)
    }

    pub fn spec(&self) -> PolySpaceSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape_basis(&self) -> &[PolyForm] {
        &self.shape
    }

    pub fn dual_basis(&self) -> &[PolyForm] {
        &self.dual
    }

    pub fn dofs(&self) -> &[DofFunctional] {
        &self.dofs
    }

    /// Number of degrees of freedom carried by each face of dimension `d`.
    pub fn block_size(&self, d: usize) -> usize {
        self.block_sizes[d]
    }

    /// Exact values of all degrees of freedom on a form on the reference simplex.
    pub fn apply_dofs(&self, f: &PolyForm) -> Result<Vec<Rational>> {
        if f.n() != self.spec.n || f.form_degree() != self.spec.k {
            return Err(FeecError::DimensionMismatch(format!(
                "{}-form on R^{} for element {}",
                f.form_degree(),
                f.n(),
                self.spec.label()
            )));
        }
        let mut traces: HashMap<(usize, usize), PolyForm> = HashMap::new();
        self.dofs
            .iter()
            .map(|dof| {
                let tr = traces.entry((dof.face_dim, dof.local_face)).or_insert_with(|| {
                    let (a, b) = &self.face_maps[dof.face_dim][dof.local_face];
                    f.pullback(a, b)
                });
                tr.wedge(&dof.weight).integrate_reference()
            })
            .collect()
    }

    /// Matrix `[φ_i(s_j)]` of the degrees of freedom on a family of forms.
    pub fn dof_matrix(&self, forms: &[PolyForm]) -> Result<QMatrix> {
        let cols: Vec<Vec<Rational>> = forms.iter().map(|f| self.apply_dofs(f)).collect::<Result<_>>()?;
        Ok(QMatrix::from_columns(self.dofs.len(), &cols))
    }

    /// Whether `f` lies in the shape space (exact reconstruction from its DOFs).
    pub fn contains(&self, f: &PolyForm) -> Result<bool> {
        let v = self.apply_dofs(f)?;
        let parts: Vec<(Rational, &PolyForm)> = v.into_iter().zip(&self.dual).collect();
        Ok(PolyForm::linear_combination(self.spec.n, self.spec.k, &parts) == *f)
    }

    /// Exact matrix of `d` from this element into `target`, in the two dual
    /// bases. Fails when `d` of the shape space does not lie in the target.
    pub fn derivative_matrix(&self, target: &ReferenceElement) -> Result<QMatrix> {
        let (n, k) = (self.spec.n, self.spec.k);
        if target.spec.n != n || target.spec.k != k + 1 {
            return Err(FeecError::DimensionMismatch(format!(
                "d maps {} into degree {}, not {}",
                self.spec.label(),
                k + 1,
                target.spec.label()
            )));
        }
        let mut cols = Vec::with_capacity(self.dim());
        for psi in &self.dual {
            let dpsi = psi.exterior_derivative();
            let v = target.apply_dofs(&dpsi)?;
            let parts: Vec<(Rational, &PolyForm)> = v.iter().cloned().zip(&target.dual).collect();
            if PolyForm::linear_combination(n, k + 1, &parts) != dpsi {
                return Err(FeecError::UnsupportedSpace(format!(
                    "d({}) is not contained in {}",
                    self.spec.label(),
                    target.spec.label()
                )));
            }
            cols.push(v);
        }
        Ok(QMatrix::from_columns(target.dim(), &cols))
    }

    /// Basis values at the points of the reference rule of the given degree.
    pub fn tabulate(&self, degree: u32) -> Arc<Tabulation> {
        let mut guard = self.tabulations.lock().expect("tabulation cache poisoned");
        if let Some(t) = guard.get(&degree) {
            return t.clone();
        }
        let rule = simplex_rule(self.spec.n, degree);
        let nc = binomial(self.spec.n, self.spec.k);
        let ndc = binomial(self.spec.n, self.spec.k + 1);
        let m = self.dim();
        let mut values = vec![0.0; rule.len() * m * nc];
        let mut dvalues = vec![0.0; rule.len() * m * ndc];
        for (q, p) in rule.points.iter().enumerate() {
            for j in 0..m {
                let off = (q * m + j) * nc;
                self.dual_float[j].evaluate_into(p, &mut values[off..off + nc]);
                if ndc > 0 {
                    let off = (q * m + j) * ndc;
                    self.ddual_float[j].evaluate_into(p, &mut dvalues[off..off + ndc]);
                }
            }
        }
        let t = Arc::new(Tabulation { rule, values, dvalues });
        guard.insert(degree, t.clone());
        t
    }

    fn evaluate_reference(&self, xi: &[f64], out: &mut [f64], dout: &mut [f64]) {
        let nc = binomial(self.spec.n, self.spec.k);
        let ndc = binomial(self.spec.n, self.spec.k + 1);
        for j in 0..self.dim() {
            self.dual_float[j].evaluate_into(xi, &mut out[j * nc..(j + 1) * nc]);
            if ndc > 0 {
                self.ddual_float[j].evaluate_into(xi, &mut dout[j * ndc..(j + 1) * ndc]);
            }
        }
    }
}

/// Whitney form of the face with the given (increasing) local vertices of the
/// reference `n`-simplex: `Σ_i (−1)^i λ_{σ_i} dλ_{σ_0} ∧ … ∧ dλ_{σ_i}^ ∧ … ∧ dλ_{σ_k}`.
pub fn whitney_form(n: usize, vertices: &[usize]) -> PolyForm {
    let k = vertices.len() - 1;
    let lam: Vec<PolyForm> = vertices.iter().map(|&v| PolyForm::barycentric(n, v)).collect();
    let dlam: Vec<PolyForm> = lam.iter().map(|l| l.exterior_derivative()).collect();
    let mut out = PolyForm::zero(n, k);
    for i in 0..=k {
        let mut term = lam[i].clone();
        for (j, dl) in dlam.iter().enumerate() {
            if j != i {
                term = term.wedge(dl);
            }
        }
        out = if i % 2 == 0 { out.add(&term) } else { out.sub(&term) };
    }
    out
}

/// Whitney forms of all local `k`-faces of the reference `n`-simplex.
pub fn whitney_basis(n: usize, k: usize) -> Vec<PolyForm> {
    local_faces(n, k).iter().map(|f| whitney_form(n, f)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// Dual to the degrees of freedom.
    Dual,
    /// Written explicitly in barycentric coordinates.
    ExplicitBarycentric,
}

#[derive(Clone, Debug)]
pub struct LocalBasis {
    pub spec: PolySpaceSpec,
    pub forms: Vec<PolyForm>,
    pub kind: BasisKind,
}

/// Explicit barycentric bases of `P_r^-Λ^1` and `P_rΛ^2` on the tetrahedron
/// (`r ≤ 3`) and Whitney forms for `P_1^-Λ^k`; other spaces fall back to the
/// dual basis.
pub fn table_basis(spec: &PolySpaceSpec) -> Result<LocalBasis> {
    let c = spec.canonical();
    let explicit = match (c.family, c.r, c.k, c.n) {
        (Family::PMinus, 1, k, n) => Some(whitney_basis(n, k)),
        (Family::PMinus, r @ 2..=3, 1, 3) => Some(tet_trimmed_one_forms(r)),
        (Family::P, r @ 1..=3, 2, 3) => Some(tet_full_two_forms(r)),
        _ => None,
    };
    match explicit {
        Some(forms) => Ok(LocalBasis {
            spec: c,
            forms,
            kind: BasisKind::ExplicitBarycentric,
        }),
        None => Ok(LocalBasis {
            spec: c,
            forms: ReferenceElement::get(&c)?.dual_basis().to_vec(),
            kind: BasisKind::Dual,
        }),
    }
}

struct Bary {
    lam: Vec<PolyForm>,
    dlam: Vec<PolyForm>,
}

impl Bary {
    fn new(n: usize) -> Self {
        let lam: Vec<PolyForm> = (0..=n).map(|i| PolyForm::barycentric(n, i)).collect();
        let dlam = lam.iter().map(|l| l.exterior_derivative()).collect();
        Self { lam, dlam }
    }

    fn prod(&self, idx: &[usize]) -> PolyForm {
        idx.iter().fold(PolyForm::one(self.lam[0].n()), |acc, &i| acc.wedge(&self.lam[i]))
    }

    fn whitney(&self, i: usize, j: usize) -> PolyForm {
        self.lam[i].wedge(&self.dlam[j]).sub(&self.lam[j].wedge(&self.dlam[i]))
    }

    /// `d(Σ c_m λ_m)` for integer combinations.
    fn dcomb(&self, c: &[(i64, usize)]) -> PolyForm {
        let n = self.lam[0].n();
        c.iter()
            .fold(PolyForm::zero(n, 1), |acc, &(s, m)| acc.add(&self.dlam[m].scale(&rational_from_i64(s))))
    }
}

fn tet_trimmed_one_forms(r: u32) -> Vec<PolyForm> {
    let b = Bary::new(3);
    let mut out = Vec::new();
    for e in local_faces(3, 1) {
        let (i, j) = (e[0], e[1]);
        let phi = b.whitney(i, j);
        let mults: Vec<Vec<usize>> = match r {
            2 => vec![vec![i], vec![j]],
            _ => vec![vec![i, i], vec![j, j], vec![i, j]],
        };
        out.extend(mults.iter().map(|m| b.prod(m).wedge(&phi)));
    }
    for f in local_faces(3, 2) {
        let (i, j, k) = (f[0], f[1], f[2]);
        let (pij, pik) = (b.whitney(i, j), b.whitney(i, k));
        match r {
            2 => {
                out.push(b.lam[k].wedge(&pij));
                out.push(b.lam[j].wedge(&pik));
            }
            _ => {
                for m in [i, j, k] {
                    out.push(b.prod(&[m, k]).wedge(&pij));
                }
                for m in [i, j, k] {
                    out.push(b.prod(&[m, j]).wedge(&pik));
                }
            }
        }
    }
    if r == 3 {
        let (i, j, k, l) = (0, 1, 2, 3);
        out.push(b.prod(&[k, l]).wedge(&b.whitney(i, j)));
        out.push(b.prod(&[j, l]).wedge(&b.whitney(i, k)));
        out.push(b.prod(&[j, k]).wedge(&b.whitney(i, l)));
    }
    out
}

fn tet_full_two_forms(r: u32) -> Vec<PolyForm> {
    let b = Bary::new(3);
    let dd = |p: usize, q: usize| b.dlam[p].wedge(&b.dlam[q]);
    let mut out = Vec::new();
    for f in local_faces(3, 2) {
        let (i, j, k) = (f[0], f[1], f[2]);
        match r {
            1 => {
                out.push(b.lam[k].wedge(&dd(i, j)));
                out.push(b.lam[j].wedge(&dd(i, k)));
                out.push(b.lam[i].wedge(&dd(j, k)));
            }
            2 => {
                out.push(b.prod(&[k, k]).wedge(&dd(i, j)));
                out.push(b.prod(&[j, k]).wedge(&b.dlam[i].wedge(&b.dcomb(&[(1, k), (-1, j)]))));
                out.push(b.prod(&[j, j]).wedge(&dd(i, k)));
                out.push(b.prod(&[i, j]).wedge(&b.dcomb(&[(1, j), (-1, i)]).wedge(&b.dlam[k])));
                out.push(b.prod(&[i, i]).wedge(&dd(j, k)));
                out.push(b.prod(&[i, k]).wedge(&b.dlam[j].wedge(&b.dcomb(&[(1, k), (-1, i)]))));
            }
            _ => {
                out.push(b.prod(&[k, k, k]).wedge(&dd(i, j)));
                out.push(b.prod(&[j, j, j]).wedge(&dd(i, k)));
                out.push(b.prod(&[i, i, i]).wedge(&dd(j, k)));
                out.push(b.prod(&[j, j, k]).wedge(&b.dlam[i].wedge(&b.dcomb(&[(2, k), (-1, j)]))));
                out.push(b.prod(&[j, k, k]).wedge(&b.dlam[i].wedge(&b.dcomb(&[(1, k), (-2, j)]))));
                out.push(b.prod(&[i, i, j]).wedge(&b.dcomb(&[(2, j), (-1, i)]).wedge(&b.dlam[k])));
                out.push(b.prod(&[i, i, k]).wedge(&b.dlam[j].wedge(&b.dcomb(&[(2, k), (-1, i)]))));
                out.push(b.prod(&[i, j, j]).wedge(&b.dcomb(&[(1, j), (-2, i)]).wedge(&b.dlam[k])));
                out.push(b.prod(&[i, k, k]).wedge(&b.dlam[j].wedge(&b.dcomb(&[(1, k), (-2, i)]))));
                out.push(
                    b.prod(&[i, j, k])
                        .wedge(&b.dcomb(&[(2, j), (-1, i), (-1, k)]).wedge(&b.dcomb(&[(2, k), (-1, i), (-1, j)]))),
                );
            }
        }
    }
    let (i, j, k, l) = (0, 1, 2, 3);
    match r {
        2 => {
            out.push(b.prod(&[k, l]).wedge(&dd(i, j)));
            out.push(b.prod(&[j, l]).wedge(&dd(i, k)));
            out.push(b.prod(&[j, k]).wedge(&dd(i, l)));
            out.push(b.prod(&[i, l]).wedge(&dd(j, k)));
            out.push(b.prod(&[i, k]).wedge(&dd(j, l)));
            out.push(b.prod(&[i, j]).wedge(&dd(k, l)));
        }
        3 => {
            for m in [k, l] {
                out.push(b.prod(&[m, k, l]).wedge(&dd(i, j)));
            }
            for m in [j, k, l] {
                out.push(b.prod(&[m, j, l]).wedge(&dd(i, k)));
            }
            for m in [j, k, l] {
                out.push(b.prod(&[m, j, k]).wedge(&dd(i, l)));
            }
            for m in [i, j, k, l] {
                out.push(b.prod(&[m, i, l]).wedge(&dd(j, k)));
            }
            for m in [i, j, k, l] {
                out.push(b.prod(&[m, i, k]).wedge(&dd(j, l)));
            }
            for m in [i, j, k, l] {
                out.push(b.prod(&[m, i, j]).wedge(&dd(k, l)));
            }
        }
        _ => {}
    }
    out
}

/// Dimension of the subspace of the shape space with vanishing trace on the
/// boundary of the simplex, computed as a null space dimension.
pub fn trace_free_dimension(spec: &PolySpaceSpec) -> Result<usize> {
    let el = ReferenceElement::get(spec)?;
    let (n, k) = (spec.n, spec.k);
    if k == n {
        return Ok(el.dim());
    }
    let facets: Vec<_> = local_faces(n, n - 1).iter().map(|f| reference_face_map(n, f)).collect();
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    let index = crate::polyform::MonomialIndex::new(n - 1, spec.r, k);
    let traces: Vec<Vec<Vec<Rational>>> = el
        .shape_basis()
        .iter()
        .map(|s| {
            facets
                .iter()
                .map(|(a, b)| s.pullback(a, b).coordinates(&index).expect("trace degree"))
                .collect()
        })
        .collect();
    for fi in 0..facets.len() {
        for ci in 0..index.len() {
            rows.push(traces.iter().map(|t| t[fi][ci].clone()).collect());
        }
    }
    let mut m = QMatrix::zeros(rows.len(), el.dim());
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = v.clone();
        }
    }
    Ok(el.dim() - m.rank())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// No constraint on the boundary trace.
    Natural,
    /// Vanishing trace on the boundary.
    Essential,
}

/// Which shape functions a space uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementType {
    /// A `P_rΛ^k` or `P_r^-Λ^k` element.
    Form(PolySpaceSpec),
    /// Every Cartesian component of a `k`-form is a continuous Lagrange
    /// function of degree `r` (nodal vector fields and similar).
    ContinuousComponents { r: u32, k: usize, n: usize },
}

impl ElementType {
    pub fn form_degree(&self) -> usize {
        match *self {
            Self::Form(s) => s.k,
            Self::ContinuousComponents { k, .. } => k,
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            Self::Form(s) => s.n,
            Self::ContinuousComponents { n, .. } => n,
        }
    }

    /// Polynomial degree of the shape functions.
    pub fn degree(&self) -> u32 {
        match *self {
            Self::Form(s) => s.r,
            Self::ContinuousComponents { r, .. } => r,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Form(s) => s.label(),
            Self::ContinuousComponents { r, k, n } => format!("(P{r})^{}Λ{k}(R{n})", binomial(n, k)),
        }
    }
}

/// A global degree of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlobalDof {
    pub face_dim: usize,
    pub face: usize,
    /// Index within the face block (component-major for component elements).
    pub functional: usize,
}

/// Basis values on one cell at quadrature points, in physical coordinates.
#[derive(Clone, Debug)]
pub struct CellValues {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub ndof: usize,
    pub ncomp: usize,
    pub ndcomp: usize,
    /// `[q][j][component]`, flattened.
    pub values: Vec<f64>,
    /// `[q][j][component of dψ]`, flattened.
    pub dvalues: Vec<f64>,
}

impl CellValues {
    pub fn value(&self, q: usize, j: usize) -> &[f64] {
        let o = (q * self.ndof + j) * self.ncomp;
        &self.values[o..o + self.ncomp]
    }

    pub fn dvalue(&self, q: usize, j: usize) -> &[f64] {
        let o = (q * self.ndof + j) * self.ndcomp;
        &self.dvalues[o..o + self.ndcomp]
    }
}

/// Geometry of one cell: `x = v0 + J ξ`.
#[derive(Clone, Debug)]
struct CellGeometry {
    v0: Vec<f64>,
    j: Vec<f64>,
    jinv: Vec<f64>,
    det: f64,
}

fn invert_small(a: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let e: Vec<f64> = (0..n).map(|i| if i == col { 1.0 } else { 0.0 }).collect();
        let x = solve_small(a, &e, n);
        for row in 0..n {
            inv[row * n + col] = x[row];
        }
    }
    inv
}

/// `k`-th compound matrix of an `rows × cols` row-major matrix: entry
/// `(σ, τ)` is the minor on rows σ and columns τ.
pub fn compound_matrix(a: &[f64], rows: usize, cols: usize, k: usize) -> Vec<f64> {
    let rs = subsets(rows, k);
    let cs = subsets(cols, k);
    let mut out = vec![0.0; rs.len() * cs.len()];
    let mut sub = vec![0.0; k * k];
    for (p, &r) in rs.iter().enumerate() {
        let ri: Vec<usize> = indices(r).collect();
        for (q, &c) in cs.iter().enumerate() {
            let ci: Vec<usize> = indices(c).collect();
            for (x, &i) in ri.iter().enumerate() {
                for (y, &j) in ci.iter().enumerate() {
                    sub[x * k + y] = a[i * cols + j];
                }
            }
            out[p * cs.len() + q] = det_small(&sub, k);
        }
    }
    out
}

/// Transformation of form components under pushforward by a cell map:
/// physical components `b = C_k(J^{-1})ᵀ a`. Returned row-major (`b = T a`).
fn pushforward_matrix(jinv: &[f64], n: usize, k: usize) -> Vec<f64> {
    let c = compound_matrix(jinv, n, n, k);
    let m = binomial(n, k);
    let mut t = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            t[i * m + j] = c[j * m + i];
        }
    }
    t
}

fn apply_small(t: &[f64], a: &[f64], out: &mut [f64]) {
    let m = a.len();
    for i in 0..m {
        out[i] = (0..m).map(|j| t[i * m + j] * a[j]).sum();
    }
}

/// An assembled global finite element space.
#[derive(Clone, Debug)]
pub struct FESpace {
    mesh: Arc<SimplicialComplex>,
    element: ElementType,
    bc: BoundaryCondition,
    reference: Arc<ReferenceElement>,
    ncomp: usize,
    dofs: Vec<GlobalDof>,
    cell_dofs: Vec<Vec<Option<usize>>>,
}

/// Assembles the global space of `spec` on `mesh`.
pub fn assemble_space(mesh: &Arc<SimplicialComplex>, spec: PolySpaceSpec, bc: BoundaryCondition) -> Result<FESpace> {
    FESpace::new(mesh.clone(), ElementType::Form(spec), bc)
}

impl FESpace {
    pub fn new(mesh: Arc<SimplicialComplex>, element: ElementType, bc: BoundaryCondition) -> Result<Self> {
        let n = mesh.dim();
        if element.n() != n {
            return Err(FeecError::DimensionMismatch(format!(
                "element {} on a {n}-dimensional mesh",
                element.label()
            )));
        }
        let (reference, ncomp) = match element {
            ElementType::Form(spec) => (ReferenceElement::get(&spec)?, 1),
            ElementType::ContinuousComponents { r, k, n } => {
                if k > n || r < 1 {
                    return Err(FeecError::UnsupportedSpace(element.label()));
                }
                (ReferenceElement::get(&PolySpaceSpec::full(r, 0, n))?, binomial(n, k))
            }
        };
        let mut dofs = Vec::new();
        let mut index: Vec<Vec<usize>> = Vec::with_capacity(n + 1);
        for d in 0..=n {
            let block = reference.block_size(d) * ncomp;
            let mut first = vec![usize::MAX; mesh.num_faces(d)];
            if block > 0 {
                for (f, slot) in first.iter_mut().enumerate() {
                    if bc == BoundaryCondition::Essential && mesh.is_boundary(d, f) {
                        continue;
                    }
                    *slot = dofs.len();
                    for functional in 0..block {
                        dofs.push(GlobalDof {
                            face_dim: d,
                            face: f,
                            functional,
                        });
                    }
                }
            }
            index.push(first);
        }
        let cell_dofs = (0..mesh.num_cells())
            .map(|c| {
                let mut local = Vec::with_capacity(reference.dim() * ncomp);
                for dof in reference.dofs() {
                    let face = mesh.cell_faces(dof.face_dim, c)[dof.local_face];
                    let first = index[dof.face_dim][face];
                    for comp in 0..ncomp {
                        local.push((first != usize::MAX).then(|| first + dof.index * ncomp + comp));
                    }
                }
                local
            })
            .collect();
        Ok(Self {
            mesh,
            element,
            bc,
            reference,
            ncomp,
            dofs,
            cell_dofs,
        })
    }

    pub fn mesh(&self) -> &Arc<SimplicialComplex> {
        &self.mesh
    }

    pub fn element(&self) -> ElementType {
        self.element
    }

    pub fn boundary_condition(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn reference(&self) -> &Arc<ReferenceElement> {
        &self.reference
    }

    pub fn form_degree(&self) -> usize {
        self.element.form_degree()
    }

    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    pub fn local_dim(&self) -> usize {
        self.reference.dim() * self.ncomp
    }

    pub fn dofs(&self) -> &[GlobalDof] {
        &self.dofs
    }

    /// Local-to-global map of a cell; `None` for removed boundary DOFs.
    pub fn cell_dofs(&self, c: usize) -> &[Option<usize>] {
        &self.cell_dofs[c]
    }

    /// One line `dim face_id functional_index` per global DOF.
    pub fn dof_table_text(&self) -> String {
        let mut s = String::new();
        for d in &self.dofs {
            let _ = writeln!(s, "{} {} {}", d.face_dim, d.face, d.functional);
        }
        s
    }

    fn geometry(&self, c: usize) -> CellGeometry {
        let n = self.mesh.dim();
        let (v0, j, det) = self.mesh.cell_map(c);
        let jinv = invert_small(&j, n);
        CellGeometry { v0, j, jinv, det }
    }

    fn map_point(&self, g: &CellGeometry, xi: &[f64]) -> Vec<f64> {
        let n = self.mesh.dim();
        (0..n).map(|i| g.v0[i] + (0..n).map(|l| g.j[i * n + l] * xi[l]).sum::<f64>()).collect()
    }

    /// Basis values and derivatives on cell `c` at the points of the
    /// reference rule of the given degree.
    pub fn cell_values(&self, c: usize, degree: u32) -> CellValues {
        let n = self.mesh.dim();
        let k = self.form_degree();
        let g = self.geometry(c);
        let tab = self.reference.tabulate(degree);
        let rule = &tab.rule;
        let nq = rule.len();
        let nc = binomial(n, k);
        let ndc = binomial(n, k + 1);
        let nref = self.reference.dim();
        let ndof = self.local_dim();
        let mut values = vec![0.0; nq * ndof * nc];
        let mut dvalues = vec![0.0; nq * ndof * ndc];
        match self.element {
            ElementType::Form(_) => {
                let t = pushforward_matrix(&g.jinv, n, k);
                let td = if ndc > 0 { pushforward_matrix(&g.jinv, n, k + 1) } else { Vec::new() };
                for q in 0..nq {
                    for j in 0..nref {
                        let o = (q * nref + j) * nc;
                        apply_small(&t, &tab.values[o..o + nc], &mut values[o..o + nc]);
                        if ndc > 0 {
                            let o = (q * nref + j) * ndc;
                            apply_small(&td, &tab.dvalues[o..o + ndc], &mut dvalues[o..o + ndc]);
                        }
                    }
                }
            }
            ElementType::ContinuousComponents { .. } => {
                let tg = pushforward_matrix(&g.jinv, n, 1);
                let comps = subsets(n, k);
                let mut grad = vec![0.0; n];
                for q in 0..nq {
                    for s in 0..nref {
                        let phi = tab.values[q * nref + s];
                        let o = (q * nref + s) * n;
                        apply_small(&tg, &tab.dvalues[o..o + n], &mut grad);
                        for (ci, &sigma) in comps.iter().enumerate() {
                            let j = s * nc + ci;
                            values[(q * ndof + j) * nc + ci] = phi;
                            for (i, gi) in grad.iter().enumerate() {
                                let sign = wedge_sign(1 << i, sigma);
                                if sign != 0 {
                                    let target = crate::exterior::subset_position(n, sigma | (1 << i));
                                    dvalues[(q * ndof + j) * ndc + target] += sign as f64 * gi;
                                }
                            }
                        }
                    }
                }
            }
        }
        let scale = g.det.abs();
        CellValues {
            points: rule.points.iter().map(|p| self.map_point(&g, p)).collect(),
            weights: rule.weights.iter().map(|w| w * scale).collect(),
            ndof,
            ncomp: nc,
            ndcomp: ndc,
            values,
            dvalues,
        }
    }

    /// Values of all local basis functions of cell `c` and of their exterior
    /// derivatives at a physical point (which may lie outside the cell).
    pub fn basis_at(&self, c: usize, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.mesh.dim();
        let k = self.form_degree();
        let g = self.geometry(c);
        let xi: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|l| g.jinv[i * n + l] * (x[l] - g.v0[l])).sum())
            .collect();
        let nref = self.reference.dim();
        let refk = self.reference.spec.k;
        let rnc = binomial(n, refk);
        let rndc = binomial(n, refk + 1);
        let mut rv = vec![0.0; nref * rnc];
        let mut rdv = vec![0.0; nref * rndc];
        self.reference.evaluate_reference(&xi, &mut rv, &mut rdv);
        let nc = binomial(n, k);
        let ndc = binomial(n, k + 1);
        let ndof = self.local_dim();
        let mut v = vec![0.0; ndof * nc];
        let mut dv = vec![0.0; ndof * ndc];
        match self.element {
            ElementType::Form(_) => {
                let t = pushforward_matrix(&g.jinv, n, k);
                for j in 0..nref {
                    apply_small(&t, &rv[j * nc..(j + 1) * nc], &mut v[j * nc..(j + 1) * nc]);
                }
                if ndc > 0 {
                    let td = pushforward_matrix(&g.jinv, n, k + 1);
                    for j in 0..nref {
                        apply_small(&td, &rdv[j * ndc..(j + 1) * ndc], &mut dv[j * ndc..(j + 1) * ndc]);
                    }
                }
            }
            ElementType::ContinuousComponents { .. } => {
                let tg = pushforward_matrix(&g.jinv, n, 1);
                let comps = subsets(n, k);
                let mut grad = vec![0.0; n];
                for s in 0..nref {
                    apply_small(&tg, &rdv[s * n..(s + 1) * n], &mut grad);
                    for (ci, &sigma) in comps.iter().enumerate() {
                        let j = s * nc + ci;
                        v[j * nc + ci] = rv[s];
                        for (i, gi) in grad.iter().enumerate() {
                            let sign = wedge_sign(1 << i, sigma);
                            if sign != 0 {
                                let target = crate::exterior::subset_position(n, sigma | (1 << i));
                                dv[j * ndc + target] += sign as f64 * gi;
                            }
                        }
                    }
                }
            }
        }
        (v, dv)
    }

    /// Value and exterior derivative of the finite element function with
    /// coefficients `coeffs`, restricted to cell `c`, at a physical point.
    pub fn evaluate(&self, coeffs: &[f64], c: usize, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (v, dv) = self.basis_at(c, x);
        let n = self.mesh.dim();
        let k = self.form_degree();
        let nc = binomial(n, k);
        let ndc = binomial(n, k + 1);
        let mut out = vec![0.0; nc];
        let mut dout = vec![0.0; ndc];
        for (j, g) in self.cell_dofs[c].iter().enumerate() {
            if let Some(g) = g {
                for i in 0..nc {
                    out[i] += coeffs[*g] * v[j * nc + i];
                }
                for i in 0..ndc {
                    dout[i] += coeffs[*g] * dv[j * ndc + i];
                }
            }
        }
        (out, dout)
    }

    /// Default quadrature degree for products of two basis functions.
    pub fn quadrature_degree(&self) -> u32 {
        2 * self.element.degree() + 2
    }

    /// Mass matrix `∫ ⟨a ψ_i, ψ_j⟩`, with `a = I` when no coefficient is given.
    pub fn mass_matrix(&self, coefficient: Option<CoefficientField<'_>>) -> SparseMatrix {
        let degree = self.quadrature_degree();
        let mut t = Vec::new();
        let mut aval = Vec::new();
        for c in 0..self.mesh.num_cells() {
            let cv = self.cell_values(c, degree);
            let nc = cv.ncomp;
            let local = &self.cell_dofs[c];
            let mut m = vec![0.0; cv.ndof * cv.ndof];
            for q in 0..cv.weights.len() {
                let w = cv.weights[q];
                if let Some(a) = coefficient {
                    aval = a(&cv.points[q]);
                }
                for i in 0..cv.ndof {
                    let vi = cv.value(q, i);
                    let avi: Vec<f64> = if coefficient.is_some() {
                        (0..nc).map(|r| (0..nc).map(|s| aval[r * nc + s] * vi[s]).sum()).collect()
                    } else {
                        vi.to_vec()
                    };
                    for j in 0..=i {
                        let vj = cv.value(q, j);
                        m[i * cv.ndof + j] += w * avi.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            for i in 0..cv.ndof {
                for j in 0..=i {
                    if let (Some(gi), Some(gj)) = (local[i], local[j]) {
                        let v = m[i * cv.ndof + j];
                        t.push((gi, gj, v));
                        if i != j {
                            t.push((gj, gi, v));
                        }
                    }
                }
            }
        }
        SparseMatrix::from_triplets(self.dim(), self.dim(), &t)
    }

    /// Stiffness matrix `∫ ⟨dψ_i, dψ_j⟩` (the `DᵀMD` product assembled directly).
    pub fn stiffness_matrix(&self) -> SparseMatrix {
        let degree = self.quadrature_degree();
        let mut t = Vec::new();
        for c in 0..self.mesh.num_cells() {
            let cv = self.cell_values(c, degree);
            let local = &self.cell_dofs[c];
            for i in 0..cv.ndof {
                let Some(gi) = local[i] else { continue };
                for j in 0..cv.ndof {
                    let Some(gj) = local[j] else { continue };
                    let v: f64 = (0..cv.weights.len())
                        .map(|q| cv.weights[q] * cv.dvalue(q, i).iter().zip(cv.dvalue(q, j)).map(|(a, b)| a * b).sum::<f64>())
                        .sum();
                    t.push((gi, gj, v));
                }
            }
        }
        SparseMatrix::from_triplets(self.dim(), self.dim(), &t)
    }

    /// Coupling `B[i, j] = ∫ ⟨dτ_j, v_i⟩` with `v_i` from `self` and `τ_j`
    /// from `sigma`, a space of one lower form degree on the same mesh.
    pub fn coupling_matrix(&self, sigma: &FESpace) -> Result<SparseMatrix> {
        if !Arc::ptr_eq(&self.mesh, &sigma.mesh) || sigma.form_degree() + 1 != self.form_degree() {
            return Err(FeecError::DimensionMismatch(format!(
                "coupling {} with {}",
                sigma.element.label(),
                self.element.label()
            )));
        }
        let degree = self.element.degree() + sigma.element.degree() + 2;
        let mut t = Vec::new();
        for c in 0..self.mesh.num_cells() {
            let cv = self.cell_values(c, degree);
            let cs = sigma.cell_values(c, degree);
            for i in 0..cv.ndof {
                let Some(gi) = self.cell_dofs[c][i] else { continue };
                for j in 0..cs.ndof {
                    let Some(gj) = sigma.cell_dofs[c][j] else { continue };
                    let v: f64 = (0..cv.weights.len())
                        .map(|q| cv.weights[q] * cv.value(q, i).iter().zip(cs.dvalue(q, j)).map(|(a, b)| a * b).sum::<f64>())
                        .sum();
                    if v != 0.0 {
                        t.push((gi, gj, v));
                    }
                }
            }
        }
        Ok(SparseMatrix::from_triplets(self.dim(), sigma.dim(), &t))
    }

    /// Exact matrix of `d` into `target` in the two dual bases.
    pub fn derivative_matrix(&self, target: &FESpace) -> Result<SparseMatrix> {
        let (ElementType::Form(_), ElementType::Form(_)) = (self.element, target.element) else {
            return Err(FeecError::UnsupportedSpace("exact d needs form elements".into()));
        };
        if !Arc::ptr_eq(&self.mesh, &target.mesh) {
            return Err(FeecError::DimensionMismatch("spaces live on different meshes".into()));
        }
        let local = self.reference.derivative_matrix(&target.reference)?.to_f64();
        let mut entries: HashMap<(usize, usize), f64> = HashMap::new();
        for c in 0..self.mesh.num_cells() {
            for (i, gi) in target.cell_dofs[c].iter().enumerate() {
                let Some(gi) = gi else { continue };
                for (j, gj) in self.cell_dofs[c].iter().enumerate() {
                    let Some(gj) = gj else { continue };
                    if local[i][j] != 0.0 {
                        entries.insert((*gi, *gj), local[i][j]);
                    }
                }
            }
        }
        let t: Vec<_> = entries.into_iter().map(|((i, j), v)| (i, j, v)).collect();
        Ok(SparseMatrix::from_triplets(target.dim(), self.dim(), &t))
    }

    /// Load vector `∫ ⟨f, ψ_i⟩`.
    pub fn load_vector(&self, f: FormSampler<'_>, degree: u32) -> Vec<f64> {
        let mut b = vec![0.0; self.dim()];
        for c in 0..self.mesh.num_cells() {
            let cv = self.cell_values(c, degree);
            for q in 0..cv.weights.len() {
                let fv = f(&cv.points[q]);
                for (j, g) in self.cell_dofs[c].iter().enumerate() {
                    if let Some(g) = g {
                        b[*g] += cv.weights[q] * fv.iter().zip(cv.value(q, j)).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
        b
    }

    /// L² projection of `f` onto the space.
    pub fn project_l2(&self, f: FormSampler<'_>) -> Result<Vec<f64>> {
        let m = self.mass_matrix(None);
        let b = self.load_vector(f, self.quadrature_degree() + 2);
        CholeskySolver::new(&m)?.solve(&b)
    }

    /// Canonical interpolant: the global DOFs of `f` computed by face quadrature.
    pub fn interpolate(&self, f: FormSampler<'_>) -> Vec<f64> {
        let n = self.mesh.dim();
        let mut out = vec![0.0; self.dim()];
        let mut done = vec![false; self.dim()];
        let refk = self.reference.spec.k;
        let degree = 2 * self.element.degree() + 4;
        for c in 0..self.mesh.num_cells() {
            let cell = self.mesh.cell(c);
            let mut cache: HashMap<(usize, usize), FaceSamples> = HashMap::new();
            for (li, dof) in self.reference.dofs().iter().enumerate() {
                let globals: Vec<Option<usize>> =
                    (0..self.ncomp).map(|comp| self.cell_dofs[c][li * self.ncomp + comp]).collect();
                if globals.iter().all(|g| g.is_none_or(|g| done[g])) {
                    continue;
                }
                let samples = cache.entry((dof.face_dim, dof.local_face)).or_insert_with(|| {
                    let lf = &local_faces(n, dof.face_dim)[dof.local_face];
                    let verts: Vec<usize> = lf.iter().map(|&a| cell[a]).collect();
                    FaceSamples::new(&self.mesh, &verts, f, degree)
                });
                let wf = dof.weight.to_float();
                for (comp, g) in globals.iter().enumerate() {
                    let Some(g) = *g else { continue };
                    out[g] = if self.ncomp == 1 {
                        samples.moment(refk, &wf, None)
                    } else {
                        samples.moment(0, &wf, Some(comp))
                    };
                    done[g] = true;
                }
            }
        }
        out
    }

    /// Clément-type interpolant: each face block is read off from the local
    /// L² projection onto the shape space over the patch of cells containing
    /// the face.
    pub fn clement_interpolate(&self, f: FormSampler<'_>) -> Result<Vec<f64>> {
        let n = self.mesh.dim();
        let mut patches: Vec<Vec<Vec<usize>>> = (0..=n).map(|d| vec![Vec::new(); self.mesh.num_faces(d)]).collect();
        for c in 0..self.mesh.num_cells() {
            for (d, patch) in patches.iter_mut().enumerate() {
                for &face in self.mesh.cell_faces(d, c) {
                    patch[face].push(c);
                }
            }
        }
        let degree = self.quadrature_degree() + 2;
        let nloc = self.local_dim();
        let mut out = vec![0.0; self.dim()];
        let mut done = vec![false; self.dim()];
        for (g, dof) in self.dofs.iter().enumerate() {
            if done[g] {
                continue;
            }
            let patch = &patches[dof.face_dim][dof.face];
            let anchor = patch[0];
            let mut gram = vec![0.0; nloc * nloc];
            let mut rhs = vec![0.0; nloc];
            for &c in patch {
                let cv = self.cell_values(c, degree);
                for q in 0..cv.weights.len() {
                    let x = &cv.points[q];
                    let (v, _) = self.basis_at(anchor, x);
                    let fv = f(x);
                    let nc = cv.ncomp;
                    for i in 0..nloc {
                        let vi = &v[i * nc..(i + 1) * nc];
                        rhs[i] += cv.weights[q] * vi.iter().zip(&fv).map(|(a, b)| a * b).sum::<f64>();
                        for j in 0..=i {
                            let vj = &v[j * nc..(j + 1) * nc];
                            gram[i * nloc + j] += cv.weights[q] * vi.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
            for i in 0..nloc {
                for j in 0..i {
                    gram[j * nloc + i] = gram[i * nloc + j];
                }
            }
            let a = solve_small(&gram, &rhs, nloc);
            if a.iter().any(|v| !v.is_finite()) {
                return Err(FeecError::Singular { nullity: 0 });
            }
            for (li, gl) in self.cell_dofs[anchor].iter().enumerate() {
                if let Some(gl) = gl {
                    let d = self.dofs[*gl];
                    if d.face_dim == dof.face_dim && d.face == dof.face {
                        out[*gl] = a[li];
                        done[*gl] = true;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `‖u_h − u‖_{L²}` for the finite element function `coeffs`.
    pub fn l2_error(&self, coeffs: &[f64], exact: FormSampler<'_>) -> f64 {
        self.error_impl(coeffs, exact, false)
    }

    /// `‖du_h − du‖_{L²}` given a sampler of the exact derivative.
    pub fn d_l2_error(&self, coeffs: &[f64], exact_d: FormSampler<'_>) -> f64 {
        self.error_impl(coeffs, exact_d, true)
    }

    fn error_impl(&self, coeffs: &[f64], exact: FormSampler<'_>, derivative: bool) -> f64 {
        let degree = 2 * self.element.degree() + 3;
        let mut acc = 0.0;
        for c in 0..self.mesh.num_cells() {
            let cv = self.cell_values(c, degree);
            let nc = if derivative { cv.ndcomp } else { cv.ncomp };
            for q in 0..cv.weights.len() {
                let mut uh = vec![0.0; nc];
                for (j, g) in self.cell_dofs[c].iter().enumerate() {
                    if let Some(g) = g {
                        let v = if derivative { cv.dvalue(q, j) } else { cv.value(q, j) };
                        for i in 0..nc {
                            uh[i] += coeffs[*g] * v[i];
                        }
                    }
                }
                let u = exact(&cv.points[q]);
                acc += cv.weights[q] * uh.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        acc.sqrt()
    }

    /// `‖f‖_{L²}` of a sampled form, with this space's error quadrature.
    pub fn l2_norm_of(&self, f: FormSampler<'_>) -> f64 {
        let zero = vec![0.0; self.dim()];
        self.l2_error(&zero, f)
    }

    /// Trace moments `∫_f tr ω ∧ η` of the finite element function on the
    /// face block `(d, face)`, computed from inside cell `c`.
    pub fn face_moments_from_cell(&self, coeffs: &[f64], c: usize, d: usize, face: usize) -> Result<Vec<f64>> {
        let Some(lf) = self.mesh.cell_faces(d, c).iter().position(|&f| f == face) else {
            return Err(FeecError::InvalidArgument(format!("face {face} is not in cell {c}")));
        };
        let n = self.mesh.dim();
        let verts: Vec<usize> = local_faces(n, d)[lf].iter().map(|&a| self.mesh.cell(c)[a]).collect();
        let sampler = |x: &[f64]| self.evaluate(coeffs, c, x).0;
        let degree = 2 * self.element.degree() + 4;
        let samples = FaceSamples::new(&self.mesh, &verts, &sampler, degree);
        let refk = self.reference.spec.k;
        let mut out = Vec::new();
        for w in weight_space(&self.reference.spec, d) {
            let wf = w.to_float();
            if self.ncomp == 1 {
                out.push(samples.moment(refk, &wf, None));
            } else {
                for comp in 0..self.ncomp {
                    out.push(samples.moment(0, &wf, Some(comp)));
                }
            }
        }
        Ok(out)
    }
}

/// Samples of a form on a face, ready for trace moments.
struct FaceSamples {
    d: usize,
    n: usize,
    /// Reference face points `t`.
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// Physical form components at each point.
    values: Vec<Vec<f64>>,
    /// Face edge vectors as an `n × d` row-major matrix.
    a: Vec<f64>,
}

impl FaceSamples {
    fn new(mesh: &SimplicialComplex, verts: &[usize], f: FormSampler<'_>, degree: u32) -> Self {
        let n = mesh.dim();
        let d = verts.len() - 1;
        let (b, a, _) = mesh.simplex_map(verts);
        let rule = simplex_rule(d, degree);
        let values = rule
            .points
            .iter()
            .map(|t| {
                let x: Vec<f64> = (0..n).map(|i| b[i] + (0..d).map(|l| a[i * d + l] * t[l]).sum::<f64>()).collect();
                f(&x)
            })
            .collect();
        Self {
            d,
            n,
            points: rule.points.clone(),
            weights: rule.weights.clone(),
            values,
            a,
        }
    }

    /// `∫ tr ω ∧ η` over the reference face. With `component = Some(c)` the
    /// sampled form is treated as a vector of scalars and only component `c`
    /// (a 0-form, `k = 0`) enters.
    fn moment(&self, k: usize, weight: &FloatPolyForm, component: Option<usize>) -> f64 {
        let (n, d) = (self.n, self.d);
        let taus = subsets(d, k);
        let full: AltIndex = if d == 0 { 0 } else { (1 << d) - 1 };
        let compound = if component.is_none() { compound_matrix(&self.a, n, d, k) } else { Vec::new() };
        let sigmas = binomial(n, k);
        let mut eta = vec![0.0; weight.components()];
        let mut acc = 0.0;
        for (q, t) in self.points.iter().enumerate() {
            weight.evaluate_into(t, &mut eta);
            let w = &self.values[q];
            let mut s = 0.0;
            for (ti, &tau) in taus.iter().enumerate() {
                let pulled = match component {
                    Some(c) => w[c],
                    None => (0..sigmas).map(|si| w[si] * compound[si * taus.len() + ti]).sum(),
                };
                let rho = full & !tau;
                let sign = wedge_sign(tau, rho) as f64;
                let ri = crate::exterior::subset_position(d, rho);
                s += pulled * eta[ri] * sign;
            }
            acc += self.weights[q] * s;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, MeshKind};

    fn q(v: i64) -> Rational {
        rational_from_i64(v)
    }

    #[test]
    fn whitney_examples() {
        // λ0 dλ1 − λ1 dλ0 = (1 − y) dx + x dy on the reference triangle
        let phi = whitney_form(2, &[0, 1]);
        let mut expected = PolyForm::monomial(2, vec![0, 0], 0b01, q(1));
        expected.add_term(crate::polyform::TermKey::new(vec![0, 1], 0b01), q(-1));
        expected.add_term(crate::polyform::TermKey::new(vec![1, 0], 0b10), q(1));
        assert_eq!(phi, expected);
        assert_eq!(whitney_form(2, &[1]), PolyForm::barycentric(2, 1));
        let top = whitney_form(2, &[0, 1, 2]);
        assert_eq!(top, PolyForm::monomial(2, vec![0, 0], 0b11, q(1)));
        assert_eq!(top.integrate_reference().unwrap(), Rational::new(1.into(), 2.into()));
    }

    #[test]
    fn whitney_forms_are_dual_up_to_factorial() {
        for n in 1..=3 {
            for k in 0..=n {
                let el = ReferenceElement::get(&PolySpaceSpec::trimmed(1, k, n)).unwrap();
                let m = el.dof_matrix(&whitney_basis(n, k)).unwrap();
                let fact: i64 = (1..=k as i64).product();
                let expected = QMatrix::identity(el.dim());
                for i in 0..el.dim() {
                    for j in 0..el.dim() {
                        assert_eq!(&m[(i, j)] * q(fact), expected[(i, j)]);
                    }
                }
            }
        }
    }

    #[test]
    fn dof_counts_and_dual_basis() {
        let count = |s: PolySpaceSpec| dof_functionals(&s).unwrap().len();
        assert_eq!(count(PolySpaceSpec::trimmed(1, 1, 3)), 6);
        assert_eq!(count(PolySpaceSpec::full(1, 2, 3)), 12);
        assert_eq!(count(PolySpaceSpec::trimmed(2, 1, 3)), 20);
        let el = ReferenceElement::get(&PolySpaceSpec::trimmed(2, 1, 3)).unwrap();
        assert_eq!((el.block_size(1), el.block_size(2), el.block_size(3)), (2, 2, 0));
        let m = el.dof_matrix(el.dual_basis()).unwrap();
        assert!(m.is_identity());
        assert!(matches!(
            ReferenceElement::get(&PolySpaceSpec::full(0, 1, 2)),
            Err(FeecError::UnsupportedSpace(_))
        ));
        assert_eq!(ReferenceElement::get(&PolySpaceSpec::full(0, 2, 2)).unwrap().dim(), 1);
    }

    #[test]
    fn table_bases_span_the_spaces() {
        for (spec, count) in [
            (PolySpaceSpec::trimmed(1, 1, 3), 6),
            (PolySpaceSpec::trimmed(2, 1, 3), 20),
            (PolySpaceSpec::trimmed(3, 1, 3), 45),
            (PolySpaceSpec::full(1, 2, 3), 12),
            (PolySpaceSpec::full(2, 2, 3), 30),
            (PolySpaceSpec::full(3, 2, 3), 60),
        ] {
            let b = table_basis(&spec).unwrap();
            assert_eq!(b.kind, BasisKind::ExplicitBarycentric);
            assert_eq!(b.forms.len(), count);
            let el = ReferenceElement::get(&spec).unwrap();
            for f in &b.forms {
                assert!(el.contains(f).unwrap(), "{spec:?}");
            }
            // change of basis to the dual basis is invertible
            assert!(el.dof_matrix(&b.forms).unwrap().inverse().is_ok(), "{spec:?}");
        }
        let fallback = table_basis(&PolySpaceSpec::full(2, 1, 2)).unwrap();
        assert_eq!(fallback.kind, BasisKind::Dual);
    }

    #[test]
    fn trace_free_dimensions() {
        for n in 1..=3 {
            for k in 0..=n {
                for r in 1..=3u32 {
                    let full = trace_free_dimension(&PolySpaceSpec::full(r, k, n)).unwrap();
                    let s = r as i64 + k as i64 - n as i64;
                    let expected = if s < 0 { 0 } else { PolySpaceSpec::trimmed(s as u32, n - k, n).dimension() };
                    assert_eq!(full, expected, "P{r}Λ{k} n={n}");
                    let trimmed = trace_free_dimension(&PolySpaceSpec::trimmed(r, k, n)).unwrap();
                    let s = s - 1;
                    let expected = if s < 0 { 0 } else { PolySpaceSpec::full(s as u32, n - k, n).dimension() };
                    assert_eq!(trimmed, expected, "P{r}-Λ{k} n={n}");
                }
            }
        }
    }

    #[test]
    fn global_dimensions() {
        let sq = Arc::new(generate(&MeshKind::unit_square(1)).unwrap());
        let s = assemble_space(&sq, PolySpaceSpec::trimmed(1, 1, 2), BoundaryCondition::Natural).unwrap();
        assert_eq!(s.dim(), 5);
        let m4 = Arc::new(generate(&MeshKind::unit_square(4)).unwrap());
        let p1 = assemble_space(&m4, PolySpaceSpec::full(1, 0, 2), BoundaryCondition::Natural).unwrap();
        assert_eq!(p1.dim(), 25);
        let p0 = assemble_space(&m4, PolySpaceSpec::full(0, 2, 2), BoundaryCondition::Natural).unwrap();
        assert_eq!(p0.dim(), 32);
        let p1e = assemble_space(&m4, PolySpaceSpec::full(1, 0, 2), BoundaryCondition::Essential).unwrap();
        assert_eq!(p1e.dim(), 9);
        let m = p0.mass_matrix(None);
        assert!((m.get(0, 0) - 32.0).abs() < 1e-10);
    }

    #[test]
    fn interpolation_reproduces_and_commutes() {
        let mesh = Arc::new(generate(&MeshKind::SquareUnstructured { n: 2, side: 1.0, seed: 5 }).unwrap());
        let v0 = assemble_space(&mesh, PolySpaceSpec::trimmed(1, 0, 2), BoundaryCondition::Natural).unwrap();
        let v1 = assemble_space(&mesh, PolySpaceSpec::trimmed(1, 1, 2), BoundaryCondition::Natural).unwrap();
        let g = |x: &[f64]| vec![x[0].powi(3) * x[1] - 2.0 * x[1] * x[1] + x[0]];
        let dg = |x: &[f64]| vec![3.0 * x[0] * x[0] * x[1] + 1.0, x[0].powi(3) - 4.0 * x[1]];
        let i0 = v0.interpolate(&g);
        let i1 = v1.interpolate(&dg);
        let d = v0.derivative_matrix(&v1).unwrap();
        let di0 = d.matvec(&i0);
        for (a, b) in di0.iter().zip(&i1) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        // an element of the space is reproduced
        let coeffs: Vec<f64> = (0..v1.dim()).map(|i| (i as f64 * 0.7).cos()).collect();
        let sampler = |x: &[f64]| {
            let c = (0..mesh.num_cells()).find(|&c| mesh.contains_point(c, x, 1e-12)).unwrap();
            v1.evaluate(&coeffs, c, x).0
        };
        let back = v1.interpolate(&sampler);
        for (a, b) in back.iter().zip(&coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn traces_single_valued() {
        let mesh = Arc::new(generate(&MeshKind::unit_cube(1)).unwrap());
        for spec in [PolySpaceSpec::trimmed(2, 1, 3), PolySpaceSpec::full(1, 2, 3), PolySpaceSpec::full(2, 1, 3)] {
            let s = assemble_space(&mesh, spec, BoundaryCondition::Natural).unwrap();
            let coeffs: Vec<f64> = (0..s.dim()).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            for f in 0..mesh.num_faces(2) {
                let cells = mesh.facet_cells(f);
                if cells.len() == 2 {
                    for d in spec.k..=2 {
                        let sub: Vec<usize> = if d == 2 {
                            vec![f]
                        } else {
                            mesh.cell_faces(d, cells[0])
                                .iter()
                                .copied()
                                .filter(|&g| mesh.face(d, g).iter().all(|v| mesh.face(2, f).contains(v)))
                                .collect()
                        };
                        for g in sub {
                            let a = s.face_moments_from_cell(&coeffs, cells[0], d, g).unwrap();
                            let b = s.face_moments_from_cell(&coeffs, cells[1], d, g).unwrap();
                            for (x, y) in a.iter().zip(&b) {
                                assert!((x - y).abs() < 1e-12, "{spec:?} d={d}: {x} vs {y}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn clement_reproduces_constants_but_is_not_a_projection() {
        let mesh = Arc::new(generate(&MeshKind::unit_square(3)).unwrap());
        let s = assemble_space(&mesh, PolySpaceSpec::full(1, 0, 2), BoundaryCondition::Natural).unwrap();
        let c = s.clement_interpolate(&|_x: &[f64]| vec![3.0]).unwrap();
        assert!(c.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let coeffs: Vec<f64> = (0..s.dim()).map(|i| (i % 3) as f64).collect();
        let sampler = |x: &[f64]| {
            let c = (0..mesh.num_cells()).find(|&c| mesh.contains_point(c, x, 1e-12)).unwrap();
            s.evaluate(&coeffs, c, x).0
        };
        let back = s.clement_interpolate(&sampler).unwrap();
        let diff: f64 = back.iter().zip(&coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff > 1e-3);
    }
}
