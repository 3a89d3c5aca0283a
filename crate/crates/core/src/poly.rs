//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Terms live in a `BTreeMap` keyed by exponent vectors, so iteration order
//! (and therefore every serialized form) is deterministic. Zero coefficients
//! are never stored.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// `n / d` as an exact rational. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or_else(|| {
        // numerator/denominator too large for a direct conversion
        let n = q.numer().to_f64().unwrap_or(f64::NAN);
        let d = q.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Exact rational value of a finite float.
pub fn from_f64(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| Error::Parse(format!("non-finite value {x}")))
}

/// Parses `"3"`, `"-2/5"` or a decimal literal such as `"0.25"` exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((ip, fp)) = s.split_once('.') {
        let neg = ip.starts_with('-');
        let digits = format!("{}{}", ip.trim_start_matches(['-', '+']), fp);
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let d = num_traits::pow(BigInt::from(10), fp.len());
        let q = Rational::new(n, d);
        return Ok(if neg { -q } else { q });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

/// Weighted degree `<alpha, w>` of an exponent vector.
pub fn weighted_degree(exp: &[u32], w: &[u32]) -> i64 {
    exp.iter().zip(w).map(|(&a, &wi)| (a * wi) as i64).sum()
}

pub fn total_degree(exp: &[u32]) -> i64 {
    exp.iter().map(|&a| a as i64).sum()
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiPoly {
    dim: usize,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl MultiPoly {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Rational) -> Self {
        Self::monomial(dim, vec![0; dim], c)
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, Rational::one())
    }

    /// The coordinate function `x_i`.
    pub fn var(dim: usize, i: usize) -> Self {
        let mut exp = vec![0; dim];
        exp[i] = 1;
        Self::monomial(dim, exp, Rational::one())
    }

    pub fn monomial(dim: usize, exp: Vec<u32>, c: Rational) -> Self {
        assert_eq!(exp.len(), dim, "exponent length must equal dim");
        let mut p = Self::zero(dim);
        if !c.is_zero() {
            p.terms.insert(exp, c);
        }
        p
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, Rational)>,
    {
        let mut p = Self::zero(dim);
        for (exp, c) in terms {
            if exp.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: exp.len(),
                });
            }
            p.add_term(exp, c);
        }
        Ok(p)
    }

    /// Adds `c * x^exp` in place, dropping the term if it cancels.
    pub fn add_term(&mut self, exp: Vec<u32>, c: Rational) {
        debug_assert_eq!(exp.len(), self.dim);
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exp) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Rational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exp: &[u32]) -> Rational {
        self.terms.get(exp).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn constant_term(&self) -> Rational {
        self.coeff(&vec![0; self.dim])
    }

    /// Largest total degree, `None` for the zero polynomial.
    pub fn total_degree(&self) -> Option<i64> {
        self.terms.keys().map(|e| total_degree(e)).max()
    }

    pub fn max_weighted_degree(&self, w: &[u32]) -> Option<i64> {
        self.terms.keys().map(|e| weighted_degree(e, w)).max()
    }

    pub fn min_weighted_degree(&self, w: &[u32]) -> Option<i64> {
        self.terms.keys().map(|e| weighted_degree(e, w)).min()
    }

    /// Keeps only the terms whose exponent satisfies `keep`.
    pub fn filter<F: Fn(&[u32]) -> bool>(&self, keep: F) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| keep(e))
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn truncate_weighted(&self, w: &[u32], max_deg: i64) -> Self {
        self.filter(|e| weighted_degree(e, w) <= max_deg)
    }

    pub fn truncate_total(&self, max_deg: i64) -> Self {
        self.filter(|e| total_degree(e) <= max_deg)
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero(self.dim);
        }
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(e, a)| (e.clone(), a * c))
                .collect(),
        }
    }

    /// Product, keeping only result monomials accepted by `keep`.
    pub fn mul_truncated<F: Fn(&[u32]) -> bool>(&self, other: &Self, keep: F) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in product");
        let mut out = Self::zero(self.dim);
        let mut exp = vec![0u32; self.dim];
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                for k in 0..self.dim {
                    exp[k] = ea[k] + eb[k];
                }
                if keep(&exp) {
                    out.add_term(exp.clone(), ca * cb);
                }
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.dim);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Partial derivative with respect to `x_i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut ne = e.clone();
            ne[i] -= 1;
            out.add_term(ne, c * int(e[i] as i64));
        }
        out
    }

    pub fn eval(&self, x: &[Rational]) -> Rational {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        let mut acc = Rational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &a) in x.iter().zip(e) {
                if a > 0 {
                    t *= num_traits::pow(xi.clone(), a as usize);
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = to_f64(c);
                for (xi, &a) in x.iter().zip(e) {
                    if a > 0 {
                        t *= xi.powi(a as i32);
                    }
                }
                t
            })
            .sum()
    }

    /// `p(delta_eps x)` with `delta_eps x = (eps^{w_1} x_1, ..., eps^{w_n} x_n)`.
    pub fn dilate(&self, w: &[u32], eps: &Rational) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            let d = weighted_degree(e, w);
            out.add_term(e.clone(), c * rational_powi(eps, d));
        }
        out
    }

    /// Substitutes `x_i -> subs[i]`. All substitutes must share a dimension,
    /// which becomes the dimension of the result. Intermediate products are
    /// filtered with `keep`, which must be closed under taking divisors
    /// (degree truncations are).
    pub fn compose_truncated<F: Fn(&[u32]) -> bool>(&self, subs: &[MultiPoly], keep: F) -> Self {
        assert_eq!(subs.len(), self.dim, "one substitute per variable");
        let out_dim = subs.first().map(|s| s.dim).unwrap_or(0);
        let mut powers: Vec<Vec<MultiPoly>> = Vec::with_capacity(self.dim);
        for (i, s) in subs.iter().enumerate() {
            assert_eq!(s.dim, out_dim, "substitutes must share a dimension");
            let max_e = self.terms.keys().map(|e| e[i]).max().unwrap_or(0);
            let mut pw = vec![MultiPoly::one(out_dim).filter(&keep)];
            for k in 1..=max_e as usize {
                let next = pw[k - 1].mul_truncated(s, &keep);
                pw.push(next);
            }
            powers.push(pw);
        }
        let mut out = MultiPoly::zero(out_dim);
        for (e, c) in &self.terms {
            let mut t = MultiPoly::constant(out_dim, c.clone()).filter(&keep);
            for (i, &a) in e.iter().enumerate() {
                if a > 0 {
                    t = t.mul_truncated(&powers[i][a as usize], &keep);
                }
                if t.is_zero() {
                    break;
                }
            }
            out = &out + &t;
        }
        out
    }

    pub fn compose(&self, subs: &[MultiPoly]) -> Self {
        self.compose_truncated(subs, |_| true)
    }

    /// Reinterprets the polynomial in `new_dim` variables, sending `x_i` to
    /// `x_{map[i]}`.
    pub fn embed(&self, new_dim: usize, map: &[usize]) -> Self {
        assert_eq!(map.len(), self.dim);
        let mut out = Self::zero(new_dim);
        for (e, c) in &self.terms {
            let mut ne = vec![0u32; new_dim];
            for (i, &a) in e.iter().enumerate() {
                ne[map[i]] += a;
            }
            out.add_term(ne, c.clone());
        }
        out
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (to_f64(c), e.clone()))
                .collect(),
        }
    }
}

/// `q^k` for a possibly negative integer exponent.
pub fn rational_powi(q: &Rational, k: i64) -> Rational {
    if k >= 0 {
        num_traits::pow(q.clone(), k as usize)
    } else {
        num_traits::pow(q.recip(), (-k) as usize)
    }
}

impl fmt::Debug for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let a = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            first = false;
            let is_const = e.iter().all(|&k| k == 0);
            if !a.is_one() || is_const {
                write!(f, "{a}")?;
            }
            let mut star = !a.is_one() && !is_const;
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                if star {
                    write!(f, "*")?;
                }
                star = true;
                write!(f, "x{}", i + 1)?;
                if k > 1 {
                    write!(f, "^{k}")?;
                }
            }
        }
        Ok(())
    }
}

impl<'a> Add<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn add(self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sum");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl<'a> Sub<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in difference");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl<'a> Mul<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn mul(self, rhs: &MultiPoly) -> MultiPoly {
        self.mul_truncated(rhs, |_| true)
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        self.scale(&-Rational::one())
    }
}

/// Floating-point evaluation form of a [`MultiPoly`].
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    dim: usize,
    terms: Vec<(f64, Vec<u32>)>,
}

impl CompiledPoly {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, e) in &self.terms {
            let mut t = *c;
            for (xi, &a) in x.iter().zip(e) {
                match a {
                    0 => {}
                    1 => t *= xi,
                    2 => t *= xi * xi,
                    _ => t *= xi.powi(a as i32),
                }
            }
            acc += t;
        }
        acc
    }
}

// ---- JSON ----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum IntJson {
    Small(i64),
    Big(String),
}

impl IntJson {
    fn from_bigint(n: &BigInt) -> Self {
        match n.to_i64() {
            Some(v) => IntJson::Small(v),
            None => IntJson::Big(n.to_string()),
        }
    }

    fn to_bigint(&self) -> Result<BigInt> {
        match self {
            IntJson::Small(v) => Ok(BigInt::from(*v)),
            IntJson::Big(s) => s
                .parse()
                .map_err(|_| Error::Parse(format!("bad integer {s:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct TermJson {
    exp: Vec<u32>,
    num: IntJson,
    #[serde(default = "default_den")]
    den: IntJson,
}

fn default_den() -> IntJson {
    IntJson::Small(1)
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    dim: usize,
    terms: Vec<TermJson>,
}

impl MultiPoly {
    pub(crate) fn to_term_json(&self) -> Vec<TermJson> {
        self.terms
            .iter()
            .map(|(e, c)| TermJson {
                exp: e.clone(),
                num: IntJson::from_bigint(c.numer()),
                den: IntJson::from_bigint(c.denom()),
            })
            .collect()
    }

    pub(crate) fn from_term_json(dim: usize, terms: &[TermJson]) -> Result<Self> {
        let mut out = Vec::with_capacity(terms.len());
        for t in terms {
            let den = t.den.to_bigint()?;
            if den.is_zero() {
                return Err(Error::Parse("zero denominator".into()));
            }
            out.push((t.exp.clone(), Rational::new(t.num.to_bigint()?, den)));
        }
        Self::from_terms(dim, out)
    }
}

impl Serialize for MultiPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyJson {
            dim: self.dim,
            terms: self.to_term_json(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PolyJson::deserialize(d)?;
        MultiPoly::from_term_json(raw.dim, &raw.terms).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for rational vectors written as strings (`"1/3"`) or
/// plain JSON numbers.
pub mod rational_vec {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Int(i64),
        Float(f64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(|q| q.to_string()).collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Rational>, D::Error> {
        let raw = Vec::<Entry>::deserialize(d)?;
        raw.into_iter()
            .map(|e| match e {
                Entry::Int(i) => Ok(int(i)),
                Entry::Float(x) => from_f64(x),
                Entry::Str(s) => parse_rational(&s),
            })
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(dim: usize, i: usize) -> MultiPoly {
        MultiPoly::var(dim, i)
    }

    #[test]
    fn arithmetic_cancels_to_zero() {
        let p = &x(2, 0) + &x(2, 1);
        let q = &p - &p;
        assert!(q.is_zero());
        let sq = &p * &p;
        assert_eq!(sq.len(), 3);
        assert_eq!(sq.coeff(&[1, 1]), int(2));
    }

    #[test]
    fn derivative_and_eval() {
        // 3 x1^2 x2 - x2
        let p = MultiPoly::from_terms(2, [(vec![2, 1], int(3)), (vec![0, 1], int(-1))]).unwrap();
        let d = p.derivative(0);
        assert_eq!(d, MultiPoly::monomial(2, vec![1, 1], int(6)));
        assert_eq!(p.eval(&[int(2), rat(1, 2)]), rat(11, 2));
        assert!((p.eval_f64(&[2.0, 0.5]) - 5.5).abs() < 1e-15);
        assert!((p.compile().eval(&[2.0, 0.5]) - 5.5).abs() < 1e-15);
    }

    #[test]
    fn dilation_scales_by_weighted_degree() {
        let p = &x(2, 0) + &x(2, 1);
        let d = p.dilate(&[1, 2], &int(3));
        assert_eq!(d.coeff(&[1, 0]), int(3));
        assert_eq!(d.coeff(&[0, 1]), int(9));
        let dn = p.dilate(&[1, 2], &int(-1));
        assert_eq!(dn.coeff(&[1, 0]), int(-1));
        assert_eq!(dn.coeff(&[0, 1]), int(1));
    }

    #[test]
    fn composition_matches_direct_expansion() {
        // p(u, v) = u v  with u = x1 + x2, v = x1 - x2  -> x1^2 - x2^2
        let p = MultiPoly::monomial(2, vec![1, 1], int(1));
        let u = &x(2, 0) + &x(2, 1);
        let v = &x(2, 0) - &x(2, 1);
        let c = p.compose(&[u, v]);
        let expect = &x(2, 0).pow(2) - &x(2, 1).pow(2);
        assert_eq!(c, expect);
        let t = p.compose_truncated(&[&x(2, 0) + &x(2, 0).pow(2), x(2, 1)], |e| total_degree(e) <= 2);
        assert_eq!(t, MultiPoly::monomial(2, vec![1, 1], int(1)));
    }

    #[test]
    fn parse_rationals() {
        assert_eq!(parse_rational("-2/6").unwrap(), rat(-1, 3));
        assert_eq!(parse_rational("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_rational("-1.5").unwrap(), rat(-3, 2));
        assert_eq!(parse_rational("7").unwrap(), int(7));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn json_round_trip_keeps_big_coefficients() {
        let big = Rational::new(BigInt::from(10).pow(30), BigInt::from(7));
        let p = MultiPoly::from_terms(2, [(vec![1, 0], big.clone()), (vec![0, 3], rat(-1, 2))]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: MultiPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.coeff(&[1, 0]), big);
    }

    #[test]
    fn json_rejects_wrong_exponent_length() {
        let s = r#"{"dim":2,"terms":[{"exp":[1],"num":1,"den":1}]}"#;
        assert!(serde_json::from_str::<MultiPoly>(s).is_err());
    }

    #[test]
    fn display_is_readable() {
        let p = MultiPoly::from_terms(2, [(vec![1, 0], rat(-1, 2)), (vec![0, 2], int(1))]).unwrap();
        assert_eq!(p.to_string(), "-1/2*x1 + x2^2");
    }
}
