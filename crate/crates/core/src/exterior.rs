//! Exact alternating algebra on R^n.
//!
//! A basis k-form `dx_σ` is identified by a bitmask of the increasing index
//! tuple σ. Bit `i` set means `dx_{i+1}` participates. Coefficients are exact
//! rationals so identities can be tested to equality.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::error::{FeecError, Result};
use crate::Rational;

/// Bitmask of an increasing index tuple.
pub type AltIndex = u32;

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// All k-subsets of {0..n-1} as bitmasks, in lexicographic order of the
/// increasing tuples: (0,1) < (0,2) < (1,2) for n = 3, k = 2.
pub fn subsets(n: usize, k: usize) -> Vec<AltIndex> {
    fn rec(start: usize, n: usize, left: usize, acc: AltIndex, out: &mut Vec<AltIndex>) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for i in start..n {
            if n - i < left {
                break;
            }
            rec(i + 1, n, left - 1, acc | (1 << i), out);
        }
    }
    let mut out = Vec::with_capacity(binomial(n, k));
    if k <= n {
        rec(0, n, k, 0, &mut out);
    }
    out
}

/// Position of `mask` inside [`subsets`]`(n, popcount(mask))`.
pub fn subset_position(n: usize, mask: AltIndex) -> usize {
    // combinatorial number system over lexicographic order
    let k = mask.count_ones() as usize;
    let mut pos = 0;
    let mut prev: isize = -1;
    let mut remaining = k;
    for idx in indices(mask) {
        for skipped in (prev + 1) as usize..idx {
            pos += binomial(n - skipped - 1, remaining - 1);
        }
        prev = idx as isize;
        remaining -= 1;
    }
    pos
}

/// Increasing indices contained in the mask.
pub fn indices(mask: AltIndex) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| mask & (1 << i) != 0)
}

/// Sign of `dx_a ∧ dx_b` relative to `dx_{a|b}`; zero when the tuples overlap.
pub fn wedge_sign(a: AltIndex, b: AltIndex) -> i32 {
    if a & b != 0 {
        return 0;
    }
    // count inversions: pairs (i in a, j in b) with i > j
    let mut inversions = 0u32;
    for j in indices(b) {
        inversions += (a >> (j + 1)).count_ones();
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// An alternating k-linear form on R^n with exact coefficients.
#[derive(Clone, PartialEq, Eq)]
pub struct AltForm {
    n: usize,
    k: usize,
    coeffs: BTreeMap<AltIndex, Rational>,
}

impl AltForm {
    pub fn zero(n: usize, k: usize) -> Self {
        assert!(k <= n, "form degree {k} exceeds dimension {n}");
        Self {
            n,
            k,
            coeffs: BTreeMap::new(),
        }
    }

    /// `dx_{i}` with zero-based `i`.
    pub fn dx(n: usize, i: usize) -> Self {
        Self::basis(n, 1 << i)
    }

    pub fn basis(n: usize, mask: AltIndex) -> Self {
        let mut f = Self::zero(n, mask.count_ones() as usize);
        f.coeffs.insert(mask, Rational::one());
        f
    }

    /// Builds a form from an unordered index tuple, normalizing the sign.
    pub fn from_tuple(n: usize, tuple: &[usize], coeff: Rational) -> Self {
        let mut f = Self::zero(n, tuple.len());
        let mut acc = Self::basis(n, 0).scale(&coeff);
        for &i in tuple {
            acc = acc.wedge(&Self::dx(n, i)).expect("valid degrees");
        }
        f.coeffs = acc.coeffs;
        f
    }

    pub fn volume(n: usize) -> Self {
        Self::basis(n, (1 << n) - 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn coeff(&self, mask: AltIndex) -> Rational {
        self.coeffs.get(&mask).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (AltIndex, &Rational)> {
        self.coeffs.iter().map(|(m, c)| (*m, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add_term(&mut self, mask: AltIndex, c: Rational) {
        debug_assert_eq!(mask.count_ones() as usize, self.k);
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(mask).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.coeffs.remove(&mask);
        }
    }

    pub fn scale(&self, s: &Rational) -> Self {
        let mut out = Self::zero(self.n, self.k);
        for (m, c) in &self.coeffs {
            out.add_term(*m, c * s);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (m, c) in &other.coeffs {
            out.add_term(*m, c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-Rational::one()))
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.k != other.k {
            return Err(FeecError::DimensionMismatch(format!(
                "Alt^{}(R^{}) vs Alt^{}(R^{})",
                self.k, self.n, other.k, other.n
            )));
        }
        Ok(())
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(FeecError::DimensionMismatch(format!(
                "wedge of forms on R^{} and R^{}",
                self.n, other.n
            )));
        }
        if self.k + other.k > self.n {
            return Err(FeecError::DimensionMismatch(format!(
                "wedge degree {} + {} exceeds {}",
                self.k, other.k, self.n
            )));
        }
        let mut out = Self::zero(self.n, self.k + other.k);
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                match wedge_sign(*a, *b) {
                    0 => {}
                    1 => out.add_term(a | b, ca * cb),
                    _ => out.add_term(a | b, -(ca * cb)),
                }
            }
        }
        Ok(out)
    }

    /// Euclidean inner product: the basis `dx_σ` is orthonormal.
    pub fn inner(&self, other: &Self) -> Result<Rational> {
        self.check_same(other)?;
        let mut acc = Rational::zero();
        for (m, c) in &self.coeffs {
            if let Some(d) = other.coeffs.get(m) {
                acc += c * d;
            }
        }
        Ok(acc)
    }

    /// Hodge star for the standard orientation `vol = dx_1 ∧ … ∧ dx_n`.
    pub fn hodge_star(&self) -> Self {
        let full: AltIndex = (1 << self.n) - 1;
        let mut out = Self::zero(self.n, self.n - self.k);
        for (m, c) in &self.coeffs {
            let comp = full & !m;
            match wedge_sign(*m, comp) {
                1 => out.add_term(comp, c.clone()),
                _ => out.add_term(comp, -c.clone()),
            }
        }
        out
    }

    /// Coefficients in the order of [`subsets`]`(n, k)`, as floats.
    pub fn to_f64(&self) -> Vec<f64> {
        subsets(self.n, self.k)
            .iter()
            .map(|m| crate::rational_to_f64(&self.coeff(*m)))
            .collect()
    }
}

impl fmt::Debug for AltForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if c.is_negative() {
                write!(f, "({c})")?;
            } else {
                write!(f, "{c}")?;
            }
            for i in indices(*m) {
                write!(f, " dx{}", i + 1)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(v: i64) -> Rational {
        Rational::from_integer(v.into())
    }

    #[test]
    fn wedge_examples() {
        let n = 2;
        let w = AltForm::dx(n, 0).wedge(&AltForm::dx(n, 1)).unwrap();
        assert_eq!(w, AltForm::basis(n, 0b11));
        assert!(AltForm::dx(n, 0).wedge(&AltForm::dx(n, 0)).unwrap().is_zero());
        let a = AltForm::dx(n, 0).add(&AltForm::dx(n, 1)).unwrap();
        assert_eq!(a.wedge(&AltForm::dx(n, 1)).unwrap(), AltForm::volume(2));
        assert!(AltForm::dx(3, 0)
            .wedge(&AltForm::volume(3))
            .is_err());
        assert!(AltForm::dx(2, 0).wedge(&AltForm::dx(3, 0)).is_err());
    }

    #[test]
    fn inner_examples() {
        let a = AltForm::basis(3, 0b011);
        let b = AltForm::basis(3, 0b101);
        assert_eq!(a.inner(&a).unwrap(), q(1));
        assert_eq!(a.inner(&b).unwrap(), q(0));
        let c = AltForm::dx(3, 0).scale(&q(2));
        let d = AltForm::dx(3, 0).scale(&q(3));
        assert_eq!(c.inner(&d).unwrap(), q(6));
        assert!(a.inner(&AltForm::dx(3, 0)).is_err());
    }

    #[test]
    fn hodge_examples() {
        assert_eq!(AltForm::dx(2, 0).hodge_star(), AltForm::dx(2, 1));
        assert_eq!(AltForm::dx(2, 1).hodge_star(), AltForm::dx(2, 0).scale(&q(-1)));
        assert_eq!(AltForm::basis(3, 0b011).hodge_star(), AltForm::dx(3, 2));
    }

    #[test]
    fn subset_order_and_position() {
        assert_eq!(subsets(3, 2), vec![0b011, 0b101, 0b110]);
        for n in 0..=4 {
            for k in 0..=n {
                let s = subsets(n, k);
                assert_eq!(s.len(), binomial(n, k));
                for (i, m) in s.iter().enumerate() {
                    assert_eq!(subset_position(n, *m), i);
                }
            }
        }
    }

    #[test]
    fn from_tuple_normalizes_sign() {
        let f = AltForm::from_tuple(3, &[2, 0], q(1));
        assert_eq!(f, AltForm::basis(3, 0b101).scale(&q(-1)));
    }

    fn arb_form(n: usize, k: usize) -> impl Strategy<Value = AltForm> {
        let masks = subsets(n, k);
        proptest::collection::vec(-5i64..=5, masks.len()).prop_map(move |cs| {
            let mut f = AltForm::zero(n, k);
            for (m, c) in masks.iter().zip(cs) {
                f.add_term(*m, q(c));
            }
            f
        })
    }

    fn arb_pair() -> impl Strategy<Value = (AltForm, AltForm)> {
        (1usize..=3)
            .prop_flat_map(|n| (Just(n), 0..=n))
            .prop_flat_map(|(n, j)| (Just(n), Just(j), 0..=(n - j)))
            .prop_flat_map(|(n, j, k)| (arb_form(n, j), arb_form(n, k)))
    }

    fn arb_complementary() -> impl Strategy<Value = (AltForm, AltForm, AltForm)> {
        (1usize..=3)
            .prop_flat_map(|n| (Just(n), 0..=n))
            .prop_flat_map(|(n, k)| (arb_form(n, k), arb_form(n, n - k), arb_form(n, k)))
    }

    proptest! {
        #[test]
        fn wedge_anticommutes((a, b) in arb_pair()) {
            let sign = if (a.degree() * b.degree()) % 2 == 0 { 1 } else { -1 };
            let ab = a.wedge(&b).unwrap();
            let ba = b.wedge(&a).unwrap().scale(&q(sign));
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn star_defining_relation((w, mu, eta) in arb_complementary()) {
            let n = w.n();
            let lhs = w.wedge(&mu).unwrap();
            let rhs = AltForm::volume(n).scale(&w.hodge_star().inner(&mu).unwrap());
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(w.hodge_star().inner(&eta.hodge_star()).unwrap(), w.inner(&eta).unwrap());
            let k = w.degree();
            let sign = if (k * (n - k)) % 2 == 0 { 1 } else { -1 };
            prop_assert_eq!(w.hodge_star().hodge_star(), w.scale(&q(sign)));
        }
    }
}
