//! Polynomial differential forms on R^n in Cartesian monomials.
//!
//! A [`PolyForm`] is a finite sum of terms `c · x^α dx_σ`. Terms are stored
//! keyed by `(|α|, α, σ)` so homogeneous parts occupy contiguous key ranges.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{FeecError, Result};
use crate::exterior::{binomial, indices, subset_position, subsets, wedge_sign, AltForm, AltIndex};
use crate::ratmat::QMatrix;
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermKey {
    pub degree: u32,
    pub exps: Vec<u32>,
    pub alt: AltIndex,
}

impl TermKey {
    pub fn new(exps: Vec<u32>, alt: AltIndex) -> Self {
        Self {
            degree: exps.iter().sum(),
            exps,
            alt,
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PolyForm {
    n: usize,
    k: usize,
    terms: BTreeMap<TermKey, Rational>,
}

fn int(v: i64) -> Rational {
    Rational::from_integer(v.into())
}

impl PolyForm {
    pub fn zero(n: usize, k: usize) -> Self {
        assert!(k <= n, "form degree {k} exceeds dimension {n}");
        Self {
            n,
            k,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: Rational) -> Self {
        Self::monomial(n, vec![0; n], 0, c)
    }

    pub fn one(n: usize) -> Self {
        Self::constant(n, Rational::one())
    }

    pub fn monomial(n: usize, exps: Vec<u32>, alt: AltIndex, c: Rational) -> Self {
        assert_eq!(exps.len(), n);
        let mut f = Self::zero(n, alt.count_ones() as usize);
        f.add_term(TermKey::new(exps, alt), c);
        f
    }

    /// The coordinate function `x_i` (zero-based) as a 0-form.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Self::monomial(n, e, 0, Rational::one())
    }

    /// Barycentric coordinate `λ_i` of the reference simplex with vertices
    /// `0, e_1, …, e_n`.
    pub fn barycentric(n: usize, i: usize) -> Self {
        if i == 0 {
            let mut f = Self::one(n);
            for j in 0..n {
                f = f.sub(&Self::coordinate(n, j));
            }
            f
        } else {
            Self::coordinate(n, i - 1)
        }
    }

    pub fn from_alt(a: &AltForm) -> Self {
        let mut f = Self::zero(a.n(), a.degree());
        for (m, c) in a.terms() {
            f.add_term(TermKey::new(vec![0; a.n()], m), c.clone());
        }
        f
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn form_degree(&self) -> usize {
        self.k
    }

    /// Maximal total polynomial degree; `None` for the zero form.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(|t| t.degree)
    }

    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().next().map(|t| t.degree)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &Rational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, key: &TermKey) -> Rational {
        self.terms.get(key).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn add_term(&mut self, key: TermKey, c: Rational) {
        debug_assert_eq!(key.exps.len(), self.n);
        debug_assert_eq!(key.alt.count_ones() as usize, self.k);
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(key.clone()).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    fn assert_compatible(&self, other: &Self) {
        assert_eq!(self.n, other.n, "ambient dimension mismatch");
        assert_eq!(self.k, other.k, "form degree mismatch");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.assert_compatible(other);
        let mut out = self.clone();
        for (key, c) in &other.terms {
            out.add_term(key.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-Rational::one()))
    }

    pub fn scale(&self, s: &Rational) -> Self {
        let mut out = Self::zero(self.n, self.k);
        if s.is_zero() {
            return out;
        }
        for (key, c) in &self.terms {
            out.terms.insert(key.clone(), c * s);
        }
        out
    }

    pub fn linear_combination(n: usize, k: usize, parts: &[(Rational, &PolyForm)]) -> Self {
        let mut out = Self::zero(n, k);
        for (c, f) in parts {
            for (key, v) in &f.terms {
                out.add_term(key.clone(), c * v);
            }
        }
        out
    }

    /// Exterior product of polynomial forms.
    pub fn wedge(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        assert!(self.k + other.k <= self.n, "wedge degree exceeds dimension");
        let mut out = Self::zero(self.n, self.k + other.k);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let s = wedge_sign(ka.alt, kb.alt);
                if s == 0 {
                    continue;
                }
                let exps: Vec<u32> = ka.exps.iter().zip(&kb.exps).map(|(a, b)| a + b).collect();
                let c = ca * cb;
                out.add_term(TermKey::new(exps, ka.alt | kb.alt), if s > 0 { c } else { -c });
            }
        }
        out
    }

    pub fn homogeneous_part(&self, degree: u32) -> Self {
        let mut out = Self::zero(self.n, self.k);
        for (key, c) in &self.terms {
            if key.degree == degree {
                out.terms.insert(key.clone(), c.clone());
            }
        }
        out
    }

    /// The common degree when every term has the same polynomial degree.
    pub fn homogeneous_degree(&self) -> Option<u32> {
        match (self.min_degree(), self.degree()) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        }
    }

    pub fn partial_derivative(&self, j: usize) -> Self {
        let mut out = Self::zero(self.n, self.k);
        for (key, c) in &self.terms {
            let e = key.exps[j];
            if e == 0 {
                continue;
            }
            let mut exps = key.exps.clone();
            exps[j] -= 1;
            out.add_term(TermKey::new(exps, key.alt), c * int(e as i64));
        }
        out
    }

    pub fn exterior_derivative(&self) -> Self {
        if self.k == self.n {
            return Self::zero(self.n, self.k);
        }
        let mut out = Self::zero(self.n, self.k + 1);
        for (key, c) in &self.terms {
            for j in 0..self.n {
                let e = key.exps[j];
                if e == 0 {
                    continue;
                }
                let s = wedge_sign(1 << j, key.alt);
                if s == 0 {
                    continue;
                }
                let mut exps = key.exps.clone();
                exps[j] -= 1;
                let v = c * int(e as i64 * s as i64);
                out.add_term(TermKey::new(exps, key.alt | (1 << j)), v);
            }
        }
        out
    }

    /// Koszul operator: contraction with the vector field `x − y`, where `y`
    /// is the base point (origin when `None`).
    pub fn koszul(&self, base_point: Option<&[Rational]>) -> Self {
        if self.k == 0 {
            return Self::zero(self.n, 0);
        }
        let mut out = Self::zero(self.n, self.k - 1);
        for (key, c) in &self.terms {
            for (pos, idx) in indices(key.alt).enumerate() {
                let sign = if pos % 2 == 0 { c.clone() } else { -c.clone() };
                let alt = key.alt & !(1 << idx);
                let mut exps = key.exps.clone();
                exps[idx] += 1;
                out.add_term(TermKey::new(exps, alt), sign.clone());
                if let Some(y) = base_point {
                    if !y[idx].is_zero() {
                        out.add_term(TermKey::new(key.exps.clone(), alt), -(sign * &y[idx]));
                    }
                }
            }
        }
        out
    }

    /// Termwise Hodge star (Euclidean metric, standard orientation).
    pub fn hodge_star(&self) -> Self {
        let full: AltIndex = (1 << self.n) - 1;
        let mut out = Self::zero(self.n, self.n - self.k);
        for (key, c) in &self.terms {
            let comp = full & !key.alt;
            let s = wedge_sign(key.alt, comp);
            out.add_term(
                TermKey::new(key.exps.clone(), comp),
                if s > 0 { c.clone() } else { -c.clone() },
            );
        }
        out
    }

    /// Codifferential `δ = (−1)^{n(k+1)+1} ⋆ d ⋆`, the formal adjoint of `d`.
    pub fn codifferential(&self) -> Self {
        if self.k == 0 {
            return Self::zero(self.n, 0);
        }
        let v = self.hodge_star().exterior_derivative().hodge_star();
        if (self.n * (self.k + 1) + 1) % 2 == 0 {
            v
        } else {
            v.scale(&-Rational::one())
        }
    }

    /// Pullback under the affine map `x = A y + b`, with `A` given row-wise
    /// (`self.n` rows of length `m`). The result lives on R^m.
    pub fn pullback(&self, a: &[Vec<Rational>], b: &[Rational]) -> Self {
        assert_eq!(a.len(), self.n);
        assert_eq!(b.len(), self.n);
        let m = a.first().map(|r| r.len()).unwrap_or(0);
        assert!(self.k <= m, "cannot pull a {}-form back to R^{m}", self.k);
        let mut out = PolyForm::zero(m, self.k);
        // x_j as polynomials in y
        let lin: Vec<PolyForm> = (0..self.n)
            .map(|j| {
                let mut p = PolyForm::constant(m, b[j].clone());
                for (l, coef) in a[j].iter().enumerate() {
                    p = p.add(&PolyForm::coordinate(m, l).scale(coef));
                }
                p
            })
            .collect();
        let mut powers: HashMap<(usize, u32), PolyForm> = HashMap::new();
        let mut power = |j: usize, e: u32| -> PolyForm {
            if let Some(p) = powers.get(&(j, e)) {
                return p.clone();
            }
            let mut p = PolyForm::one(m);
            for _ in 0..e {
                p = p.wedge(&lin[j]);
            }
            powers.insert((j, e), p.clone());
            p
        };
        let targets = subsets(m, self.k);
        let mut alt_cache: HashMap<AltIndex, Vec<(AltIndex, Rational)>> = HashMap::new();
        for (key, c) in &self.terms {
            let alt_image = alt_cache.entry(key.alt).or_insert_with(|| {
                let rows: Vec<usize> = indices(key.alt).collect();
                targets
                    .iter()
                    .filter_map(|t| {
                        let cols: Vec<usize> = indices(*t).collect();
                        let sub: Vec<Vec<Rational>> = rows
                            .iter()
                            .map(|&r| cols.iter().map(|&cc| a[r][cc].clone()).collect())
                            .collect();
                        let d = det(&sub);
                        (!d.is_zero()).then_some((*t, d))
                    })
                    .collect()
            });
            let alt_image = alt_image.clone();
            let mut coeff_poly = PolyForm::constant(m, c.clone());
            for (j, &e) in key.exps.iter().enumerate() {
                if e > 0 {
                    coeff_poly = coeff_poly.wedge(&power(j, e));
                }
            }
            for (t, d) in &alt_image {
                for (pk, pc) in &coeff_poly.terms {
                    out.add_term(TermKey::new(pk.exps.clone(), *t), pc * d);
                }
            }
        }
        out
    }

    /// Integral of a top-degree form over the reference simplex
    /// `{x ≥ 0, Σx ≤ 1}` with its standard orientation. For `n = 0` this is
    /// evaluation at the single point.
    pub fn integrate_reference(&self) -> Result<Rational> {
        if self.k != self.n {
            return Err(FeecError::InvalidArgument(format!(
                "only {}-forms can be integrated over an {}-simplex",
                self.n, self.n
            )));
        }
        let mut acc = Rational::zero();
        for (key, c) in &self.terms {
            acc += c * monomial_simplex_integral(&key.exps);
        }
        Ok(acc)
    }

    /// Coefficients in the order of [`subsets`]`(n, k)` at a point.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.to_float().evaluate(x)
    }

    pub fn to_float(&self) -> FloatPolyForm {
        FloatPolyForm::from_exact(self)
    }

    /// Coordinates with respect to an indexed monomial basis.
    pub fn coordinates(&self, index: &MonomialIndex) -> Option<Vec<Rational>> {
        let mut v = vec![Rational::zero(); index.len()];
        for (key, c) in &self.terms {
            let pos = index.position(key)?;
            v[pos] = c.clone();
        }
        Some(v)
    }

    pub fn from_coordinates(index: &MonomialIndex, coords: &[Rational]) -> Self {
        let mut f = Self::zero(index.n, index.k);
        for (key, c) in index.keys.iter().zip(coords) {
            f.add_term(key.clone(), c.clone());
        }
        f
    }
}

impl fmt::Debug for PolyForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (key, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if c.is_negative() {
                write!(f, "({c})")?;
            } else {
                write!(f, "{c}")?;
            }
            for (i, e) in key.exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "·x{}", i + 1)?,
                    _ => write!(f, "·x{}^{}", i + 1, e)?,
                }
            }
            for i in indices(key.alt) {
                write!(f, " dx{}", i + 1)?;
            }
        }
        Ok(())
    }
}

/// Determinant of a small square rational matrix.
pub fn det(m: &[Vec<Rational>]) -> Rational {
    let n = m.len();
    if n == 0 {
        return Rational::one();
    }
    let mut q = QMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] = m[i][j].clone();
        }
    }
    // elimination with sign tracking
    let mut sign = Rational::one();
    let mut acc = Rational::one();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !q[(r, col)].is_zero()) else {
            return Rational::zero();
        };
        if p != col {
            for j in 0..n {
                let tmp = q[(p, j)].clone();
                q[(p, j)] = q[(col, j)].clone();
                q[(col, j)] = tmp;
            }
            sign = -sign;
        }
        let piv = q[(col, col)].clone();
        acc *= &piv;
        for r in col + 1..n {
            if q[(r, col)].is_zero() {
                continue;
            }
            let f = &q[(r, col)] / &piv;
            for j in col..n {
                let v = &q[(col, j)] * &f;
                q[(r, j)] -= v;
            }
        }
    }
    acc * sign
}

/// `∫_{reference n-simplex} x^α dx = α! / (|α| + n)!`.
pub fn monomial_simplex_integral(exps: &[u32]) -> Rational {
    let n = exps.len();
    let mut num = num_bigint::BigInt::one();
    let mut total = 0u32;
    for &e in exps {
        for i in 2..=e {
            num *= i;
        }
        total += e;
    }
    let mut den = num_bigint::BigInt::one();
    for i in 2..=(total + n as u32) {
        den *= i;
    }
    Rational::new(num, den)
}

/// Floating-point copy of a polynomial form for fast evaluation.
#[derive(Clone, Debug)]
pub struct FloatPolyForm {
    n: usize,
    ncomp: usize,
    max_exp: u32,
    terms: Vec<(Vec<u32>, usize, f64)>,
}

impl FloatPolyForm {
    pub fn from_exact(p: &PolyForm) -> Self {
        let terms: Vec<(Vec<u32>, usize, f64)> = p
            .terms
            .iter()
            .map(|(k, c)| (k.exps.clone(), subset_position(p.n, k.alt), crate::rational_to_f64(c)))
            .collect();
        let max_exp = terms.iter().flat_map(|t| t.0.iter().copied()).max().unwrap_or(0);
        Self {
            n: p.n,
            ncomp: binomial(p.n, p.k),
            max_exp,
            terms,
        }
    }

    pub fn components(&self) -> usize {
        self.ncomp
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncomp];
        self.evaluate_into(x, &mut out);
        out
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        let stride = self.max_exp as usize + 1;
        let mut pw = vec![1.0; self.n * stride];
        for i in 0..self.n {
            for e in 1..stride {
                pw[i * stride + e] = pw[i * stride + e - 1] * x[i];
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (exps, comp, c) in &self.terms {
            let mut v = *c;
            for (i, &e) in exps.iter().enumerate() {
                v *= pw[i * stride + e as usize];
            }
            out[*comp] += v;
        }
    }
}

/// All exponent vectors in `n` variables of total degree exactly `degree`,
/// in graded-lexicographic-descending order.
pub fn homogeneous_exponents(n: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(i: usize, n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == n - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(i + 1, n, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        if degree == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(0, n, degree, &mut Vec::new(), &mut out);
    out
}

pub fn exponents_upto(n: usize, r: u32) -> Vec<Vec<u32>> {
    (0..=r).flat_map(|d| homogeneous_exponents(n, d)).collect()
}

/// Ordered monomial basis of `P_rΛ^k(R^n)` with reverse lookup.
#[derive(Clone, Debug)]
pub struct MonomialIndex {
    n: usize,
    k: usize,
    keys: Vec<TermKey>,
    lookup: HashMap<TermKey, usize>,
}

impl MonomialIndex {
    pub fn new(n: usize, r: u32, k: usize) -> Self {
        let mut keys = Vec::new();
        for exps in exponents_upto(n, r) {
            for alt in subsets(n, k) {
                keys.push(TermKey::new(exps.clone(), alt));
            }
        }
        let lookup = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        Self { n, k, keys, lookup }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn position(&self, key: &TermKey) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    pub fn keys(&self) -> &[TermKey] {
        &self.keys
    }
}

/// `H_rΛ^k(R^n)` monomial basis.
pub fn homogeneous_basis(n: usize, r: u32, k: usize) -> Vec<PolyForm> {
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    for exps in homogeneous_exponents(n, r) {
        for alt in subsets(n, k) {
            out.push(PolyForm::monomial(n, exps.clone(), alt, Rational::one()));
        }
    }
    out
}

/// `P_rΛ^k(R^n)` monomial basis.
pub fn full_basis(n: usize, r: u32, k: usize) -> Vec<PolyForm> {
    (0..=r).flat_map(|d| homogeneous_basis(n, d, k)).collect()
}

/// Extracts a linearly independent subset (greedy, order preserving).
pub fn independent_subset(forms: Vec<PolyForm>, n: usize, r: u32, k: usize) -> Vec<PolyForm> {
    if forms.is_empty() {
        return forms;
    }
    let index = MonomialIndex::new(n, r, k);
    let cols: Vec<Vec<Rational>> = forms
        .iter()
        .map(|f| f.coordinates(&index).expect("form within declared degree"))
        .collect();
    let m = QMatrix::from_columns(index.len(), &cols);
    m.independent_columns().into_iter().map(|j| forms[j].clone()).collect()
}

/// Rank of a family of forms of degree at most `r`.
pub fn span_rank(forms: &[PolyForm], n: usize, r: u32, k: usize) -> usize {
    if forms.is_empty() {
        return 0;
    }
    let index = MonomialIndex::new(n, r, k);
    let cols: Vec<Vec<Rational>> = forms
        .iter()
        .map(|f| f.coordinates(&index).expect("form within declared degree"))
        .collect();
    QMatrix::from_columns(index.len(), &cols).rank()
}

/// `P_r^-Λ^k(R^n) = P_{r−1}Λ^k + κ H_{r−1}Λ^{k+1}` basis.
pub fn trimmed_basis(n: usize, r: u32, k: usize) -> Vec<PolyForm> {
    if k == 0 {
        return full_basis(n, r, 0);
    }
    if r == 0 {
        return Vec::new();
    }
    let mut gens = full_basis(n, r - 1, k);
    if k < n {
        gens.extend(homogeneous_basis(n, r - 1, k + 1).iter().map(|f| f.koszul(None)));
    }
    independent_subset(gens, n, r, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Full polynomial family `P_rΛ^k`.
    P,
    /// Trimmed family `P_r^-Λ^k`.
    PMinus,
}

/// Identifies a polynomial form space `P_rΛ^k(R^n)` or `P_r^-Λ^k(R^n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolySpaceSpec {
    pub family: Family,
    pub r: u32,
    pub k: usize,
    pub n: usize,
}

fn binom_signed(n: i64, k: i64) -> usize {
    if k < 0 || n < 0 || k > n {
        return 0;
    }
    binomial(n as usize, k as usize)
}

impl PolySpaceSpec {
    pub fn new(family: Family, r: u32, k: usize, n: usize) -> Self {
        Self { family, r, k, n }
    }

    pub fn full(r: u32, k: usize, n: usize) -> Self {
        Self::new(Family::P, r, k, n)
    }

    pub fn trimmed(r: u32, k: usize, n: usize) -> Self {
        Self::new(Family::PMinus, r, k, n)
    }

    /// Closed-form dimension.
    pub fn dimension(&self) -> usize {
        let (n, k, r) = (self.n as i64, self.k as i64, self.r as i64);
        if k > n {
            return 0;
        }
        match self.family {
            Family::P => binom_signed(n + r, n) * binom_signed(n, k),
            Family::PMinus => {
                if k == 0 {
                    binom_signed(n + r, n)
                } else if r <= 0 {
                    0
                } else {
                    binom_signed(r + k - 1, k) * binom_signed(n + r, n - k)
                }
            }
        }
    }

    /// Maximal polynomial degree of members.
    pub fn max_degree(&self) -> u32 {
        self.r
    }

    /// Canonical form: `P_r^-Λ^0 = P_rΛ^0` and `P_r^-Λ^n = P_{r−1}Λ^n`.
    pub fn canonical(&self) -> Self {
        match self.family {
            Family::PMinus if self.k == 0 => Self::full(self.r, 0, self.n),
            Family::PMinus if self.k == self.n && self.r >= 1 => Self::full(self.r - 1, self.n, self.n),
            _ => *self,
        }
    }

    pub fn basis(&self) -> Vec<PolyForm> {
        match self.family {
            Family::P => full_basis(self.n, self.r, self.k),
            Family::PMinus => trimmed_basis(self.n, self.r, self.k),
        }
    }

    pub fn contains(&self, f: &PolyForm) -> bool {
        if f.n() != self.n || f.form_degree() != self.k {
            return false;
        }
        match self.family {
            Family::P => f.degree().is_none_or(|d| d <= self.r),
            Family::PMinus => membership_trimmed(f, self.r, None),
        }
    }

    pub fn label(&self) -> String {
        match self.family {
            Family::P => format!("P{}Λ{}", self.r, self.k),
            Family::PMinus => format!("P{}-Λ{}", self.r, self.k),
        }
    }
}

/// `dim κH_rΛ^k(R^n) = C(n+r, n−k) · C(r+k−1, k−1)`.
pub fn koszul_range_dimension(r: u32, k: usize, n: usize) -> Result<usize> {
    if k < 1 || k > n {
        return Err(FeecError::InvalidArgument(format!(
            "koszul range needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let (n, k, r) = (n as i64, k as i64, r as i64);
    Ok(binom_signed(n + r, n - k) * binom_signed(r + k - 1, k - 1))
}

/// `ω ∈ P_r^-Λ^k` iff `deg ω ≤ r` and `κ_y ω ∈ P_rΛ^{k−1}`.
pub fn membership_trimmed(f: &PolyForm, r: u32, base_point: Option<&[Rational]>) -> bool {
    match f.degree() {
        None => true,
        Some(d) if d > r => false,
        Some(_) => {
            if f.form_degree() == 0 {
                return true;
            }
            f.koszul(base_point).degree().is_none_or(|d| d <= r)
        }
    }
}

/// `(dκ + κd)ω − (r + k)ω` for homogeneous `ω` of polynomial degree `r`.
pub fn homotopy_residual(f: &PolyForm) -> Result<PolyForm> {
    if f.is_zero() {
        return Ok(f.clone());
    }
    let r = f
        .homogeneous_degree()
        .ok_or_else(|| FeecError::InvalidArgument("homotopy identity needs a homogeneous form".into()))?;
    let k = f.form_degree() as i64;
    let dk = f.koszul(None).exterior_derivative();
    let kd = if f.form_degree() < f.n() {
        f.exterior_derivative().koszul(None)
    } else {
        PolyForm::zero(f.n(), f.form_degree())
    };
    let lhs = if f.form_degree() == 0 { kd } else { dk.add(&kd) };
    Ok(lhs.sub(&f.scale(&int(r as i64 + k))))
}

/// Builds one of the `2^{n−1}` polynomial de Rham sequences starting at
/// `P_rΛ^0`. `pattern[j]` chooses the space in degree `j + 1` for
/// `j < n − 1`; the top degree is forced to `P_{s−1}Λ^n`.
pub fn build_sequence(n: usize, r: u32, pattern: &[Family]) -> Result<Vec<PolySpaceSpec>> {
    if n == 0 {
        return Err(FeecError::InvalidArgument("dimension must be positive".into()));
    }
    if pattern.len() != n - 1 {
        return Err(FeecError::InvalidPattern(format!(
            "expected {} choices for n = {n}, got {}",
            n - 1,
            pattern.len()
        )));
    }
    if r < 1 {
        return Err(FeecError::InvalidPattern("sequences start at r >= 1".into()));
    }
    let mut out = vec![PolySpaceSpec::full(r, 0, n)];
    let mut s = r;
    for (j, fam) in pattern.iter().enumerate() {
        let k = j + 1;
        let spec = match fam {
            Family::PMinus => PolySpaceSpec::trimmed(s, k, n),
            Family::P => {
                if s < 2 {
                    return Err(FeecError::InvalidPattern(format!(
                        "degree drops below 1 at form degree {k} (use r >= {})",
                        r + 2 - s
                    )));
                }
                s -= 1;
                PolySpaceSpec::full(s, k, n)
            }
        };
        out.push(spec);
    }
    out.push(PolySpaceSpec::full(s - 1, n, n));
    Ok(out)
}

/// All `2^{n−1}` patterns, ordered as binary numbers with `P^-` as bit 1.
pub fn all_patterns(n: usize) -> Vec<Vec<Family>> {
    let len = n.saturating_sub(1);
    (0..(1usize << len))
        .map(|bits| {
            (0..len)
                .map(|j| if bits & (1 << j) != 0 { Family::PMinus } else { Family::P })
                .collect()
        })
        .collect()
}

/// Parses a pattern such as `"10"`: `1` selects `P^-`, `0` selects `P`.
pub fn parse_pattern(bits: &str) -> Result<Vec<Family>> {
    bits.chars()
        .map(|c| match c {
            '1' | '-' | 'm' | 'M' => Ok(Family::PMinus),
            '0' | 'p' | 'P' => Ok(Family::P),
            other => Err(FeecError::InvalidPattern(format!("unexpected character {other:?}"))),
        })
        .collect()
}

/// Checks that `d` maps every basis element of each space into the next.
pub fn sequence_is_complex(seq: &[PolySpaceSpec]) -> bool {
    seq.windows(2).all(|w| w[0].basis().iter().all(|f| w[1].contains(&f.exterior_derivative())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: i64) -> Rational {
        int(v)
    }

    fn x(n: usize, i: usize) -> PolyForm {
        PolyForm::coordinate(n, i)
    }

    fn dx(n: usize, i: usize) -> PolyForm {
        PolyForm::from_alt(&AltForm::dx(n, i))
    }

    #[test]
    fn derivative_examples() {
        let n = 2;
        assert_eq!(x(n, 0).wedge(&dx(n, 1)).exterior_derivative(), dx(n, 0).wedge(&dx(n, 1)));
        let xy = x(n, 0).wedge(&x(n, 1));
        assert_eq!(
            xy.exterior_derivative(),
            x(n, 1).wedge(&dx(n, 0)).add(&x(n, 0).wedge(&dx(n, 1)))
        );
        assert!(dx(n, 0).wedge(&dx(n, 1)).exterior_derivative().is_zero());
    }

    #[test]
    fn koszul_examples() {
        let n = 2;
        assert_eq!(dx(n, 0).koszul(None), x(n, 0));
        assert_eq!(
            dx(n, 0).wedge(&dx(n, 1)).koszul(None),
            x(n, 0).wedge(&dx(n, 1)).sub(&x(n, 1).wedge(&dx(n, 0)))
        );
        assert_eq!(x(n, 0).wedge(&dx(n, 1)).koszul(None), x(n, 0).wedge(&x(n, 1)));
    }

    #[test]
    fn homotopy_examples() {
        let n = 2;
        let w = x(n, 0).wedge(&dx(n, 1));
        let dk = w.koszul(None).exterior_derivative().add(&w.exterior_derivative().koszul(None));
        assert_eq!(dk, w.scale(&q(2)));
        assert!(homotopy_residual(&w).unwrap().is_zero());
        let c = x(n, 0).wedge(&x(n, 0)).wedge(&x(n, 1));
        assert!(c.koszul(None).is_zero());
        assert!(homotopy_residual(&c).unwrap().is_zero());
        assert!(homotopy_residual(&dx(n, 0).wedge(&dx(n, 1))).unwrap().is_zero());
        assert!(homotopy_residual(&x(n, 0).add(&PolyForm::one(n))).is_err());
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(PolySpaceSpec::full(2, 1, 3).dimension(), 30);
        assert_eq!(PolySpaceSpec::trimmed(1, 1, 3).dimension(), 6);
        assert_eq!(PolySpaceSpec::full(0, 0, 3).dimension(), 1);
        assert_eq!(PolySpaceSpec::trimmed(0, 0, 2).dimension(), 1);
        assert_eq!(PolySpaceSpec::trimmed(0, 1, 2).dimension(), 0);
        assert_eq!(koszul_range_dimension(1, 2, 3).unwrap(), 8);
        assert_eq!(koszul_range_dimension(0, 1, 3).unwrap(), 3);
        assert!(koszul_range_dimension(0, 4, 3).is_err());
    }

    #[test]
    fn koszul_range_matches_rank() {
        for n in 1..=3 {
            for k in 1..=n {
                for r in 0..=3 {
                    let imgs: Vec<PolyForm> =
                        homogeneous_basis(n, r, k).iter().map(|f| f.koszul(None)).collect();
                    assert_eq!(
                        span_rank(&imgs, n, r + 1, k - 1),
                        koszul_range_dimension(r, k, n).unwrap(),
                        "n={n} k={k} r={r}"
                    );
                }
            }
        }
        assert_eq!(homogeneous_basis(3, 1, 2).len(), 9);
    }

    #[test]
    fn basis_ranks_match_formulas() {
        for n in 1..=3 {
            for k in 0..=n {
                for r in 0..=3u32 {
                    for fam in [Family::P, Family::PMinus] {
                        let spec = PolySpaceSpec::new(fam, r, k, n);
                        let b = spec.basis();
                        assert_eq!(b.len(), spec.dimension(), "{spec:?}");
                        assert_eq!(span_rank(&b, n, r, k), b.len());
                    }
                    if r >= 1 && k > 0 && k < n {
                        let lo = PolySpaceSpec::full(r - 1, k, n).dimension();
                        let mid = PolySpaceSpec::trimmed(r, k, n).dimension();
                        let hi = PolySpaceSpec::full(r, k, n).dimension();
                        assert!(lo < mid && mid < hi, "n={n} k={k} r={r}");
                    }
                }
            }
        }
    }

    #[test]
    fn trimmed_membership() {
        let n = 2;
        let l0 = PolyForm::barycentric(n, 0);
        let l1 = PolyForm::barycentric(n, 1);
        let whitney = l0.wedge(&l1.exterior_derivative()).sub(&l1.wedge(&l0.exterior_derivative()));
        assert!(membership_trimmed(&whitney, 1, None));
        let bad = x(n, 0).wedge(&dx(n, 1));
        assert!(!membership_trimmed(&bad, 1, None));
        // brute-force oracle: x1 dx2 is not in P_0Λ^1 + κP_0Λ^2
        let gens = PolySpaceSpec::trimmed(1, 1, 2).basis();
        let index = MonomialIndex::new(2, 1, 1);
        let cols: Vec<Vec<Rational>> = gens.iter().map(|g| g.coordinates(&index).unwrap()).collect();
        let m = QMatrix::from_columns(index.len(), &cols);
        assert!(m.solve_consistent(&bad.coordinates(&index).unwrap()).is_none());
        assert!(m.solve_consistent(&whitney.coordinates(&index).unwrap()).is_some());
        // lower degree forms always belong
        assert!(membership_trimmed(&dx(n, 0), 1, None));
        // base point independence
        let y = vec![q(3), Rational::new(1.into(), 2.into())];
        assert!(membership_trimmed(&whitney, 1, Some(&y)));
        assert!(!membership_trimmed(&bad, 1, Some(&y)));
    }

    #[test]
    fn sequence_examples() {
        use Family::*;
        let seq = build_sequence(3, 3, &[PMinus, PMinus]).unwrap();
        assert_eq!(
            seq,
            vec![
                PolySpaceSpec::full(3, 0, 3),
                PolySpaceSpec::trimmed(3, 1, 3),
                PolySpaceSpec::trimmed(3, 2, 3),
                PolySpaceSpec::full(2, 3, 3)
            ]
        );
        let seq = build_sequence(3, 3, &[P, P]).unwrap();
        assert_eq!(
            seq,
            vec![
                PolySpaceSpec::full(3, 0, 3),
                PolySpaceSpec::full(2, 1, 3),
                PolySpaceSpec::full(1, 2, 3),
                PolySpaceSpec::full(0, 3, 3)
            ]
        );
        assert_eq!(all_patterns(2).len(), 2);
        let chains: std::collections::HashSet<_> =
            all_patterns(2).iter().map(|p| build_sequence(2, 2, p).unwrap()).collect();
        assert_eq!(chains.len(), 2);
        assert!(build_sequence(3, 3, &[P]).is_err());
        assert!(build_sequence(2, 1, &[P]).is_err());
        for n in 1..=3 {
            for p in all_patterns(n) {
                let seq = build_sequence(n, 3, &p).unwrap();
                assert!(sequence_is_complex(&seq), "{seq:?}");
            }
        }
    }

    #[test]
    fn pullback_and_integration() {
        // ∫ over the reference triangle of dx∧dy is 1/2
        let vol = dx(2, 0).wedge(&dx(2, 1));
        assert_eq!(vol.integrate_reference().unwrap(), Rational::new(1.into(), 2.into()));
        // pull x dy back to the edge from (1,0) to (0,1): x = 1 − t, y = t
        let a = vec![vec![q(-1)], vec![q(1)]];
        let b = vec![q(1), q(0)];
        let f = x(2, 0).wedge(&dx(2, 1)).pullback(&a, &b);
        // (1 − t) dt integrates to 1/2
        assert_eq!(f.integrate_reference().unwrap(), Rational::new(1.into(), 2.into()));
        assert!(f.exterior_derivative().is_zero());
    }

    #[test]
    fn codifferential_matches_proxies() {
        // 2-form u dx∧dy in 2D: δ gives u_y dx − u_x dy
        let n = 2;
        let u = x(n, 0).wedge(&x(n, 0)).wedge(&x(n, 1));
        let form = u.wedge(&dx(n, 0)).wedge(&dx(n, 1));
        let expected = u.partial_derivative(1).wedge(&dx(n, 0)).sub(&u.partial_derivative(0).wedge(&dx(n, 1)));
        assert_eq!(form.codifferential(), expected);
    }
}
