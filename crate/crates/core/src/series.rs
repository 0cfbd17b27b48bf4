//! Truncated multivariate power series and map germs.
//!
//! A [`Series`] stores its nonzero coefficients in a `BTreeMap` keyed by
//! [`MultiIndex`], whose order is degree first and then lexicographic, so
//! iteration is deterministic. Every stored index has degree at most the
//! truncation `N`. A [`Germ`] is a tuple of constant-free series.
//!
//! Composition works one homogeneous degree at a time through
//! [`SliceComposer`]: the degree-`d` slice of `inner^Q` with `|Q| >= 2` only
//! reads slices of `inner` of degree below `d`, which is what the
//! degree-by-degree solvers (inversion, implicit equations, linearization)
//! rely on.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::coeff::{Coeff, DEFAULT_FLOAT_TOL};
use crate::error::{GermError, Result};
use crate::linalg::Mat;

/// Exponent vector `Q = (q_1, ..., q_n)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exps: Box<[u32]>,
}

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        MultiIndex {
            exps: exps.into_boxed_slice(),
        }
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex::new(vec![0; n])
    }

    /// `e_k` in `n` variables.
    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = vec![0; n];
        v[k] = 1;
        MultiIndex::new(v)
    }

    pub fn exps(&self) -> &[u32] {
        &self.exps
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    /// `|Q|`, recomputed on each call.
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn get(&self, k: usize) -> u32 {
        self.exps[k]
    }

    pub fn add(&self, o: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.nvars(), o.nvars());
        MultiIndex::new(
            self.exps
                .iter()
                .zip(o.exps.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn checked_sub(&self, o: &MultiIndex) -> Option<MultiIndex> {
        let mut v = Vec::with_capacity(self.nvars());
        for (a, b) in self.exps.iter().zip(o.exps.iter()) {
            if a < b {
                return None;
            }
            v.push(a - b);
        }
        Some(MultiIndex::new(v))
    }

    /// Componentwise `self <= o`, i.e. `x^self` divides `x^o`.
    pub fn divides(&self, o: &MultiIndex) -> bool {
        self.exps.iter().zip(o.exps.iter()).all(|(a, b)| a <= b)
    }

    pub fn with(&self, k: usize, v: u32) -> MultiIndex {
        let mut e = self.exps.to_vec();
        e[k] = v;
        MultiIndex::new(e)
    }

    pub fn bump(&self, k: usize, by: i64) -> Option<MultiIndex> {
        let v = self.exps[k] as i64 + by;
        if v < 0 {
            None
        } else {
            Some(self.with(k, v as u32))
        }
    }

    /// Indices of the variables with positive exponent.
    pub fn support(&self) -> Vec<usize> {
        (0..self.nvars()).filter(|&k| self.exps[k] > 0).collect()
    }

    pub fn first_nonzero(&self) -> Option<usize> {
        self.exps.iter().position(|&e| e > 0)
    }

    /// All indices of degree `d` in `n` variables, ascending lexicographic.
    pub fn of_degree(n: usize, d: u32) -> Vec<MultiIndex> {
        fn rec(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if prefix.len() + 1 == n {
                prefix.push(d);
                out.push(MultiIndex::new(prefix.clone()));
                prefix.pop();
                return;
            }
            for a in 0..=d {
                prefix.push(a);
                rec(n, d - a, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if n == 0 {
            if d == 0 {
                out.push(MultiIndex::new(vec![]));
            }
            return out;
        }
        rec(n, d, &mut Vec::with_capacity(n), &mut out);
        out
    }

    /// All indices with `lo <= |Q| <= hi`, in canonical order.
    pub fn up_to_degree(n: usize, lo: u32, hi: u32) -> Vec<MultiIndex> {
        (lo..=hi)
            .flat_map(|d| MultiIndex::of_degree(n, d))
            .collect()
    }

    /// Monomial text such as `x1^2*x2`, with variables numbered from 1.
    pub fn monomial(&self, names: Option<&[String]>) -> String {
        let mut parts = Vec::new();
        for (k, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let name = match names {
                Some(ns) => ns[k].clone(),
                None => format!("x{}", k + 1),
            };
            if e == 1 {
                parts.push(name);
            } else {
                parts.push(format!("{name}^{e}"));
            }
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, o: &Self) -> Ordering {
        self.degree()
            .cmp(&o.degree())
            .then_with(|| self.exps.cmp(&o.exps))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.exps.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex::new(v)
    }
}

impl From<&[u32]> for MultiIndex {
    fn from(v: &[u32]) -> Self {
        MultiIndex::new(v.to_vec())
    }
}

// ---------------------------------------------------------------------------

/// Truncated formal power series in `nvars` variables.
#[derive(Clone)]
pub struct Series<K: Coeff> {
    nvars: usize,
    trunc: u32,
    tol: f64,
    terms: BTreeMap<MultiIndex, K>,
}

impl<K: Coeff> PartialEq for Series<K> {
    fn eq(&self, o: &Self) -> bool {
        self.nvars == o.nvars && self.trunc == o.trunc && self.terms == o.terms
    }
}

impl<K: Coeff> fmt::Debug for Series<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Series[n={}, N={}]{{ {} }}",
            self.nvars, self.trunc, self
        )
    }
}

impl<K: Coeff> fmt::Display for Series<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (q, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if q.degree() == 0 {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*{}", q.monomial(None))?;
            }
        }
        Ok(())
    }
}

impl<K: Coeff> Series<K> {
    pub fn zero(nvars: usize, trunc: u32) -> Self {
        Series {
            nvars,
            trunc,
            tol: DEFAULT_FLOAT_TOL,
            terms: BTreeMap::new(),
        }
    }

    /// Sets the float zero threshold and drops terms below it.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self.prune();
        self
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn var(nvars: usize, trunc: u32, k: usize) -> Self {
        Self::monomial(nvars, trunc, MultiIndex::unit(nvars, k), K::one())
    }

    pub fn constant(nvars: usize, trunc: u32, c: K) -> Self {
        Self::monomial(nvars, trunc, MultiIndex::zero(nvars), c)
    }

    pub fn monomial(nvars: usize, trunc: u32, q: MultiIndex, c: K) -> Self {
        let mut s = Self::zero(nvars, trunc);
        s.add_term(q, c);
        s
    }

    /// Builds a series, summing repeated indices and dropping terms of
    /// degree above `trunc`.
    pub fn from_terms<I: IntoIterator<Item = (MultiIndex, K)>>(
        nvars: usize,
        trunc: u32,
        it: I,
    ) -> Result<Self> {
        let mut s = Self::zero(nvars, trunc);
        for (q, c) in it {
            if q.nvars() != nvars {
                return Err(GermError::ArityMismatch {
                    what: "term exponent".into(),
                    left: nvars,
                    right: q.nvars(),
                });
            }
            s.add_term(q, c);
        }
        Ok(s)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }
    pub fn trunc(&self) -> u32 {
        self.trunc
    }
    pub fn len(&self) -> usize {
        self.terms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &K)> {
        self.terms.iter()
    }
    pub fn into_terms(self) -> BTreeMap<MultiIndex, K> {
        self.terms
    }

    /// Stored coefficient or zero; indices beyond `N` read as zero.
    pub fn coeff(&self, q: &MultiIndex) -> K {
        self.terms.get(q).cloned().unwrap_or_else(K::zero)
    }

    pub fn coeff_ref(&self, q: &MultiIndex) -> Option<&K> {
        self.terms.get(q)
    }

    /// `{f}_Q`, with an error for indices beyond the truncation.
    pub fn extract(&self, q: &MultiIndex) -> Result<K> {
        if q.nvars() != self.nvars {
            return Err(GermError::ArityMismatch {
                what: "extract".into(),
                left: self.nvars,
                right: q.nvars(),
            });
        }
        if q.degree() > self.trunc {
            return Err(GermError::OutOfTruncation {
                degree: q.degree(),
                trunc: self.trunc,
            });
        }
        Ok(self.coeff(q))
    }

    /// Overwrites one coefficient (removing it if zero).
    pub fn set(&mut self, q: MultiIndex, c: K) {
        debug_assert_eq!(q.nvars(), self.nvars);
        if q.degree() > self.trunc {
            return;
        }
        if c.is_negligible(self.tol) {
            self.terms.remove(&q);
        } else {
            self.terms.insert(q, c);
        }
    }

    /// Adds `c` to the coefficient of `x^q`.
    pub fn add_term(&mut self, q: MultiIndex, c: K) {
        debug_assert_eq!(q.nvars(), self.nvars);
        if q.degree() > self.trunc || c.is_zero() {
            return;
        }
        match self.terms.get_mut(&q) {
            Some(v) => {
                v.add_assign(&c);
                if v.is_negligible(self.tol) {
                    self.terms.remove(&q);
                }
            }
            None => {
                if !c.is_negligible(self.tol) {
                    self.terms.insert(q, c);
                }
            }
        }
    }

    fn prune(&mut self) {
        let tol = self.tol;
        self.terms.retain(|_, v| !v.is_negligible(tol));
    }

    fn check_compatible(&self, o: &Self) -> Result<()> {
        if self.nvars != o.nvars {
            return Err(GermError::ArityMismatch {
                what: "series variables".into(),
                left: self.nvars,
                right: o.nvars,
            });
        }
        if self.trunc != o.trunc {
            return Err(GermError::TruncationMismatch {
                left: self.trunc,
                right: o.trunc,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, o: &Self) -> Result<Self> {
        self.check_compatible(o)?;
        let mut r = self.clone();
        for (q, c) in &o.terms {
            r.add_term(q.clone(), c.clone());
        }
        Ok(r)
    }

    pub fn try_sub(&self, o: &Self) -> Result<Self> {
        self.check_compatible(o)?;
        let mut r = self.clone();
        for (q, c) in &o.terms {
            r.add_term(q.clone(), c.neg());
        }
        Ok(r)
    }

    /// Product truncated at `N`.
    pub fn try_mul(&self, o: &Self) -> Result<Self> {
        self.check_compatible(o)?;
        Ok(self.mul_trunc(o, self.trunc))
    }

    /// Panicking variant of [`Series::try_add`] for internal use on data
    /// already known to be compatible.
    pub fn add(&self, o: &Self) -> Self {
        self.try_add(o).expect("series add: incompatible operands")
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.try_sub(o).expect("series sub: incompatible operands")
    }
    pub fn mul(&self, o: &Self) -> Self {
        self.try_mul(o).expect("series mul: incompatible operands")
    }

    /// Product keeping terms of degree `<= cap`; the result has the
    /// truncation of `self`.
    pub(crate) fn mul_trunc(&self, o: &Self, cap: u32) -> Self {
        let mut acc: BTreeMap<MultiIndex, K> = BTreeMap::new();
        let bterms: Vec<(&MultiIndex, &K, u32)> =
            o.terms.iter().map(|(q, c)| (q, c, q.degree())).collect();
        for (qa, ca) in &self.terms {
            let da = qa.degree();
            if da > cap {
                break;
            }
            for (qb, cb, db) in &bterms {
                if da + db > cap {
                    break;
                }
                let q = qa.add(qb);
                match acc.get_mut(&q) {
                    Some(v) => v.mul_add_assign(ca, cb),
                    None => {
                        acc.insert(q, ca.mul(cb));
                    }
                }
            }
        }
        let tol = self.tol;
        acc.retain(|_, v| !v.is_negligible(tol));
        Series {
            nvars: self.nvars,
            trunc: self.trunc,
            tol: self.tol,
            terms: acc,
        }
    }

    pub fn scale(&self, c: &K) -> Self {
        let mut r = Self::zero(self.nvars, self.trunc).with_tol(self.tol);
        if c.is_zero() {
            return r;
        }
        for (q, v) in &self.terms {
            r.set(q.clone(), v.mul(c));
        }
        r
    }

    pub fn neg(&self) -> Self {
        let mut r = self.clone();
        for v in r.terms.values_mut() {
            *v = v.neg();
        }
        r
    }

    /// Complex conjugate of every coefficient.
    pub fn conj(&self) -> Self {
        let mut r = self.clone();
        for v in r.terms.values_mut() {
            *v = v.conj();
        }
        r
    }

    /// Keeps exactly the terms whose index satisfies `pred`.
    pub fn project(&self, pred: impl Fn(&MultiIndex) -> bool) -> Self {
        let mut r = Self::zero(self.nvars, self.trunc).with_tol(self.tol);
        for (q, v) in &self.terms {
            if pred(q) {
                r.terms.insert(q.clone(), v.clone());
            }
        }
        r
    }

    /// Homogeneous part of degree `d`.
    pub fn homogeneous(&self, d: u32) -> Self {
        self.project(|q| q.degree() == d)
    }

    /// Terms with `lo <= |Q| <= hi`.
    pub fn degree_range(&self, lo: u32, hi: u32) -> Self {
        self.project(|q| q.degree() >= lo && q.degree() <= hi)
    }

    /// Lowers the truncation, discarding higher terms.
    pub fn truncate(&self, n: u32) -> Self {
        let mut r = self.degree_range(0, n.min(self.trunc));
        r.trunc = n.min(self.trunc);
        r
    }

    /// Declares a new truncation. Raising it is only meaningful when the
    /// caller knows the higher coefficients vanish.
    pub fn retruncate(&self, n: u32) -> Self {
        let mut r = self.degree_range(0, n);
        r.trunc = n;
        r
    }

    /// Smallest degree present.
    pub fn order(&self) -> Option<u32> {
        self.terms.keys().next().map(|q| q.degree())
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(|q| q.degree())
    }

    pub fn max_modulus(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.modulus_f64())
            .fold(0.0, f64::max)
    }

    /// `∂/∂x_k`; the truncation drops by one.
    pub fn derivative(&self, k: usize) -> Self {
        let mut r = Self::zero(self.nvars, self.trunc.saturating_sub(1)).with_tol(self.tol);
        for (q, c) in &self.terms {
            let e = q.get(k);
            if e == 0 {
                continue;
            }
            r.add_term(q.with(k, e - 1), c.scale_i64(e as i64));
        }
        r
    }

    /// Exact division by `x_k`; the truncation drops by one.
    pub fn divide_by_var(&self, k: usize) -> Result<Self> {
        let mut r = Self::zero(self.nvars, self.trunc.saturating_sub(1)).with_tol(self.tol);
        for (q, c) in &self.terms {
            let e = q.get(k);
            if e == 0 {
                return Err(GermError::NotDivisible { var: k });
            }
            r.terms.insert(q.with(k, e - 1), c.clone());
        }
        Ok(r)
    }

    /// Moves variable `i` to position `map[i]` in a ring of `new_nvars`
    /// variables.
    pub fn embed(&self, new_nvars: usize, map: &[usize]) -> Self {
        assert_eq!(map.len(), self.nvars);
        let mut r = Self::zero(new_nvars, self.trunc).with_tol(self.tol);
        for (q, c) in &self.terms {
            let mut e = vec![0u32; new_nvars];
            for (i, &t) in map.iter().enumerate() {
                e[t] += q.get(i);
            }
            r.add_term(MultiIndex::new(e), c.clone());
        }
        r
    }

    /// Largest coefficient modulus of `self - o`.
    pub fn max_diff(&self, o: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for (q, c) in &self.terms {
            m = m.max(c.sub(&o.coeff(q)).modulus_f64());
        }
        for (q, c) in &o.terms {
            if !self.terms.contains_key(q) {
                m = m.max(c.modulus_f64());
            }
        }
        m
    }

    /// First index (canonical order) where the two series differ.
    pub fn first_difference(&self, o: &Self, tol: f64) -> Option<MultiIndex> {
        let mut keys: Vec<&MultiIndex> = self.terms.keys().chain(o.terms.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .find(|q| !self.coeff(q).sub(&o.coeff(q)).is_negligible(tol))
            .cloned()
    }

    /// Evaluation at a point (finite sum).
    pub fn eval(&self, x: &[K]) -> K {
        let mut acc = K::zero();
        for (q, c) in &self.terms {
            let mut t = c.clone();
            for (k, &e) in q.exps().iter().enumerate() {
                if e > 0 {
                    t = t.mul(&x[k].powi(e as i64).expect("nonnegative power"));
                }
            }
            acc.add_assign(&t);
        }
        acc
    }

    /// Substitutes `x_k -> c_k x_k`, i.e. computes `f(diag(c) x)`.
    pub fn scale_vars(&self, c: &[K]) -> Self {
        let mut r = Self::zero(self.nvars, self.trunc).with_tol(self.tol);
        for (q, v) in &self.terms {
            let mut t = v.clone();
            for (k, &e) in q.exps().iter().enumerate() {
                if e > 0 {
                    t = t.mul(&c[k].powi(e as i64).expect("nonnegative power"));
                }
            }
            r.set(q.clone(), t);
        }
        r
    }

    /// Converts coefficients to another backend.
    pub fn map_coeffs<L: Coeff>(&self, f: impl Fn(&K) -> L) -> Series<L> {
        let mut r = Series::<L>::zero(self.nvars, self.trunc);
        for (q, c) in &self.terms {
            r.set(q.clone(), f(c));
        }
        r
    }
}

// ---------------------------------------------------------------------------

/// Degree-by-degree evaluator of `outer(inner)`.
///
/// `inner` is given by homogeneous slices per component. The slice of
/// `inner^Q` of degree `d` is cached once computed, so callers must only
/// request it after every inner slice of degree `<= d - |Q| + 1` is final.
pub struct SliceComposer<K: Coeff> {
    nvars: usize,
    trunc: u32,
    tol: f64,
    slices: Vec<Vec<Series<K>>>,
    cache: HashMap<(MultiIndex, u32), Arc<Series<K>>>,
}

impl<K: Coeff> SliceComposer<K> {
    /// `ncomp` inner components in `nvars` variables, all slices zero.
    pub fn new(nvars: usize, ncomp: usize, trunc: u32, tol: f64) -> Self {
        let zero = Series::zero(nvars, trunc).with_tol(tol);
        SliceComposer {
            nvars,
            trunc,
            tol,
            slices: vec![vec![zero; trunc as usize + 1]; ncomp],
            cache: HashMap::new(),
        }
    }

    /// Composer with all slices of a constant-free germ loaded.
    pub fn from_germ(g: &Germ<K>) -> Self {
        let mut sc = SliceComposer::new(g.nin(), g.nout(), g.trunc(), g.tol());
        for (k, c) in g.comps().iter().enumerate() {
            for d in 1..=g.trunc() {
                sc.set_slice(k, d, c.homogeneous(d));
            }
        }
        sc
    }

    pub fn set_slice(&mut self, k: usize, d: u32, s: Series<K>) {
        debug_assert!(s.terms().all(|(q, _)| q.degree() == d));
        self.slices[k][d as usize] = s;
    }

    pub fn slice(&self, k: usize, d: u32) -> &Series<K> {
        &self.slices[k][d as usize]
    }

    /// Full series of inner component `k` assembled from its slices.
    pub fn component(&self, k: usize) -> Series<K> {
        let mut s = Series::zero(self.nvars, self.trunc).with_tol(self.tol);
        for sl in &self.slices[k] {
            for (q, c) in sl.terms() {
                s.terms.insert(q.clone(), c.clone());
            }
        }
        s
    }

    /// Degree-`d` slice of `inner^q`.
    pub fn power_slice(&mut self, q: &MultiIndex, d: u32) -> Arc<Series<K>> {
        let deg = q.degree();
        if d < deg || d > self.trunc {
            return Arc::new(Series::zero(self.nvars, self.trunc).with_tol(self.tol));
        }
        if deg == 0 {
            let mut s = Series::zero(self.nvars, self.trunc).with_tol(self.tol);
            if d == 0 {
                s.set(MultiIndex::zero(self.nvars), K::one());
            }
            return Arc::new(s);
        }
        if deg == 1 {
            let k = q.first_nonzero().expect("degree one");
            return Arc::new(self.slices[k][d as usize].clone());
        }
        let key = (q.clone(), d);
        if let Some(s) = self.cache.get(&key) {
            return s.clone();
        }
        let k = q.first_nonzero().expect("positive degree");
        let rest = q.with(k, q.get(k) - 1);
        let rdeg = deg - 1;
        let mut acc = Series::zero(self.nvars, self.trunc).with_tol(self.tol);
        for b in 1..=(d - rdeg) {
            let a = d - b;
            if self.slices[k][b as usize].is_zero() {
                continue;
            }
            let sa = self.power_slice(&rest, a);
            if sa.is_zero() {
                continue;
            }
            let p = sa.mul_trunc(&self.slices[k][b as usize], d);
            for (m, c) in p.terms {
                acc.add_term(m, c);
            }
        }
        let arc = Arc::new(acc);
        self.cache.insert(key, arc.clone());
        arc
    }

    /// Degree-`d` slice of `outer(inner)`. `outer` may have a constant term.
    pub fn apply_slice(&mut self, outer: &Series<K>, d: u32) -> Series<K> {
        let mut acc: Series<K> = Series::zero(self.nvars, self.trunc).with_tol(self.tol);
        for (q, c) in outer.terms() {
            if q.degree() > d {
                break;
            }
            let p = self.power_slice(q, d);
            for (m, v) in p.terms() {
                match acc.terms.get_mut(m) {
                    Some(x) => x.mul_add_assign(c, v),
                    None => {
                        acc.terms.insert(m.clone(), c.mul(v));
                    }
                }
            }
        }
        acc.prune();
        acc
    }
}

/// `outer(inner)` for a single series (constant term allowed).
pub fn compose_series<K: Coeff>(outer: &Series<K>, inner: &Germ<K>) -> Result<Series<K>> {
    if outer.nvars() != inner.nout() {
        return Err(GermError::ArityMismatch {
            what: "compose".into(),
            left: outer.nvars(),
            right: inner.nout(),
        });
    }
    if outer.trunc() != inner.trunc() {
        return Err(GermError::TruncationMismatch {
            left: outer.trunc(),
            right: inner.trunc(),
        });
    }
    let mut sc = SliceComposer::from_germ(inner);
    let mut r = Series::zero(inner.nin(), inner.trunc()).with_tol(inner.tol());
    for d in 0..=inner.trunc() {
        for (q, c) in sc.apply_slice(outer, d).terms {
            r.terms.insert(q, c);
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------

/// Map germ `(C^nin, 0) -> (C^nout, 0)`: a tuple of constant-free series.
#[derive(Clone, PartialEq, Debug)]
pub struct Germ<K: Coeff> {
    nin: usize,
    comps: Vec<Series<K>>,
}

impl<K: Coeff> Germ<K> {
    /// Validates equal arity and truncation, and zero constant terms.
    pub fn new(comps: Vec<Series<K>>) -> Result<Self> {
        let first = comps
            .first()
            .ok_or_else(|| GermError::InvalidInput("germ with no components".into()))?;
        let (nin, trunc) = (first.nvars(), first.trunc());
        for (i, c) in comps.iter().enumerate() {
            if c.nvars() != nin {
                return Err(GermError::ArityMismatch {
                    what: format!("germ component {i}"),
                    left: nin,
                    right: c.nvars(),
                });
            }
            if c.trunc() != trunc {
                return Err(GermError::TruncationMismatch {
                    left: trunc,
                    right: c.trunc(),
                });
            }
            if c.coeff_ref(&MultiIndex::zero(nin)).is_some() {
                return Err(GermError::NotConstantFree { component: i });
            }
        }
        Ok(Germ { nin, comps })
    }

    pub fn identity(n: usize, trunc: u32) -> Self {
        Germ {
            nin: n,
            comps: (0..n).map(|k| Series::var(n, trunc, k)).collect(),
        }
    }

    /// `y = M x`.
    pub fn from_linear(m: &Mat<K>, trunc: u32) -> Self {
        let comps = (0..m.rows())
            .map(|i| {
                let mut s = Series::zero(m.cols(), trunc);
                for j in 0..m.cols() {
                    s.set(MultiIndex::unit(m.cols(), j), m.get(i, j).clone());
                }
                s
            })
            .collect();
        Germ {
            nin: m.cols(),
            comps,
        }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Germ {
            nin: self.nin,
            comps: self.comps.into_iter().map(|c| c.with_tol(tol)).collect(),
        }
    }

    pub fn nin(&self) -> usize {
        self.nin
    }
    pub fn nout(&self) -> usize {
        self.comps.len()
    }
    pub fn trunc(&self) -> u32 {
        self.comps[0].trunc()
    }
    pub fn tol(&self) -> f64 {
        self.comps[0].tol()
    }
    pub fn comps(&self) -> &[Series<K>] {
        &self.comps
    }
    pub fn comp(&self, i: usize) -> &Series<K> {
        &self.comps[i]
    }
    pub fn into_comps(self) -> Vec<Series<K>> {
        self.comps
    }

    /// Degree-one coefficients as an `nout x nin` matrix.
    pub fn linear_part(&self) -> Mat<K> {
        let mut m = Mat::zeros(self.nout(), self.nin);
        for (i, c) in self.comps.iter().enumerate() {
            for j in 0..self.nin {
                m.set(i, j, c.coeff(&MultiIndex::unit(self.nin, j)));
            }
        }
        m
    }

    /// Terms of degree `>= 2`.
    pub fn nonlinear_part(&self) -> Germ<K> {
        Germ {
            nin: self.nin,
            comps: self
                .comps
                .iter()
                .map(|c| c.project(|q| q.degree() >= 2))
                .collect(),
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Germ<K>) -> Result<Germ<K>> {
        if self.nin != inner.nout() {
            return Err(GermError::ArityMismatch {
                what: "compose".into(),
                left: self.nin,
                right: inner.nout(),
            });
        }
        if self.trunc() != inner.trunc() {
            return Err(GermError::TruncationMismatch {
                left: self.trunc(),
                right: inner.trunc(),
            });
        }
        let mut sc = SliceComposer::from_germ(inner);
        let mut comps = Vec::with_capacity(self.nout());
        for c in &self.comps {
            let mut r = Series::zero(inner.nin(), inner.trunc()).with_tol(inner.tol());
            for d in 1..=inner.trunc() {
                for (q, v) in sc.apply_slice(c, d).terms {
                    r.terms.insert(q, v);
                }
            }
            comps.push(r);
        }
        Ok(Germ {
            nin: inner.nin(),
            comps,
        })
    }

    /// Formal inverse, computed degree by degree with the inverse of the
    /// linear part.
    pub fn invert(&self) -> Result<Germ<K>> {
        let n = self.nin;
        if self.nout() != n {
            return Err(GermError::ArityMismatch {
                what: "invert (square map)".into(),
                left: self.nout(),
                right: n,
            });
        }
        let lin = self.linear_part();
        let linv = lin
            .inverse_tol(self.tol().max(1e-14))
            .ok_or(GermError::NonInvertibleLinearPart)?;
        let h = self.nonlinear_part();
        let trunc = self.trunc();
        let mut sc = SliceComposer::new(n, n, trunc, self.tol());
        for i in 0..n {
            let mut s = Series::zero(n, trunc).with_tol(self.tol());
            for j in 0..n {
                s.set(MultiIndex::unit(n, j), linv.get(i, j).clone());
            }
            sc.set_slice(i, 1, s);
        }
        for d in 2..=trunc {
            let r: Vec<Series<K>> = h.comps.iter().map(|c| sc.apply_slice(c, d)).collect();
            for i in 0..n {
                let mut s = Series::zero(n, trunc).with_tol(self.tol());
                for j in 0..n {
                    let a = linv.get(i, j);
                    if a.is_zero() {
                        continue;
                    }
                    for (q, v) in r[j].terms() {
                        s.add_term(q.clone(), a.mul(v).neg());
                    }
                }
                sc.set_slice(i, d, s);
            }
        }
        Ok(Germ {
            nin: n,
            comps: (0..n).map(|i| sc.component(i)).collect(),
        })
    }

    pub fn try_add(&self, o: &Germ<K>) -> Result<Germ<K>> {
        if self.nout() != o.nout() {
            return Err(GermError::ArityMismatch {
                what: "germ add".into(),
                left: self.nout(),
                right: o.nout(),
            });
        }
        let comps = self
            .comps
            .iter()
            .zip(&o.comps)
            .map(|(a, b)| a.try_add(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Germ {
            nin: self.nin,
            comps,
        })
    }

    pub fn try_sub(&self, o: &Germ<K>) -> Result<Germ<K>> {
        if self.nout() != o.nout() {
            return Err(GermError::ArityMismatch {
                what: "germ sub".into(),
                left: self.nout(),
                right: o.nout(),
            });
        }
        let comps = self
            .comps
            .iter()
            .zip(&o.comps)
            .map(|(a, b)| a.try_sub(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Germ {
            nin: self.nin,
            comps,
        })
    }

    pub fn scale(&self, c: &K) -> Germ<K> {
        Germ {
            nin: self.nin,
            comps: self.comps.iter().map(|s| s.scale(c)).collect(),
        }
    }

    pub fn conj(&self) -> Germ<K> {
        Germ {
            nin: self.nin,
            comps: self.comps.iter().map(|c| c.conj()).collect(),
        }
    }

    /// Applies a constant matrix on the left: `M · self`.
    pub fn left_mul(&self, m: &Mat<K>) -> Germ<K> {
        assert_eq!(m.cols(), self.nout());
        let comps = (0..m.rows())
            .map(|i| {
                let mut s = Series::zero(self.nin, self.trunc()).with_tol(self.tol());
                for j in 0..m.cols() {
                    let a = m.get(i, j);
                    if a.is_zero() {
                        continue;
                    }
                    for (q, v) in self.comps[j].terms() {
                        s.add_term(q.clone(), a.mul(v));
                    }
                }
                s
            })
            .collect();
        Germ {
            nin: self.nin,
            comps,
        }
    }

    pub fn truncate(&self, n: u32) -> Germ<K> {
        Germ {
            nin: self.nin,
            comps: self.comps.iter().map(|c| c.truncate(n)).collect(),
        }
    }

    pub fn retruncate(&self, n: u32) -> Germ<K> {
        Germ {
            nin: self.nin,
            comps: self.comps.iter().map(|c| c.retruncate(n)).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.nin == self.nout()
            && *self == Germ::identity(self.nin, self.trunc()).with_tol(self.tol())
    }

    pub fn max_diff(&self, o: &Germ<K>) -> f64 {
        self.comps
            .iter()
            .zip(&o.comps)
            .map(|(a, b)| a.max_diff(b))
            .fold(0.0, f64::max)
    }

    /// First `(component, index)` where the germs differ.
    pub fn first_difference(&self, o: &Germ<K>, tol: f64) -> Option<(usize, MultiIndex)> {
        for (i, (a, b)) in self.comps.iter().zip(&o.comps).enumerate() {
            if let Some(q) = a.first_difference(b, tol) {
                return Some((i, q));
            }
        }
        None
    }

    pub fn map_coeffs<L: Coeff>(&self, f: impl Fn(&K) -> L + Copy) -> Germ<L> {
        Germ {
            nin: self.nin,
            comps: self.comps.iter().map(|c| c.map_coeffs(f)).collect(),
        }
    }

    /// Drops the components outside `range`.
    pub fn select(&self, idx: &[usize]) -> Germ<K> {
        Germ {
            nin: self.nin,
            comps: idx.iter().map(|&i| self.comps[i].clone()).collect(),
        }
    }
}

/// Solves `equation(x, y(x)) = 0` for the unknown variables `unknown`
/// (positions in the equation's variable list), seeded with the linear
/// branch `y = branch · x`. The result is a germ in the remaining
/// variables, in their original order.
pub fn solve_implicit<K: Coeff>(
    equation: &Germ<K>,
    unknown: &[usize],
    branch: &Mat<K>,
) -> Result<Germ<K>> {
    let total = equation.nin();
    let m = unknown.len();
    if equation.nout() != m {
        return Err(GermError::ArityMismatch {
            what: "implicit equations vs unknowns".into(),
            left: equation.nout(),
            right: m,
        });
    }
    let known: Vec<usize> = (0..total).filter(|v| !unknown.contains(v)).collect();
    let r = known.len();
    if branch.rows() != m || branch.cols() != r {
        return Err(GermError::ArityMismatch {
            what: "branch matrix".into(),
            left: branch.rows() * 1000 + branch.cols(),
            right: m * 1000 + r,
        });
    }
    let trunc = equation.trunc();
    let tol = equation.tol();
    let lin = equation.linear_part();
    let mut jac = Mat::zeros(m, m);
    let mut a = Mat::zeros(m, r);
    for c in 0..m {
        for (t, &v) in unknown.iter().enumerate() {
            jac.set(c, t, lin.get(c, v).clone());
        }
        for (t, &v) in known.iter().enumerate() {
            a.set(c, t, lin.get(c, v).clone());
        }
    }
    let resid = a.add(&jac.mul(branch));
    let scale = 1.0 + lin.max_modulus() * (1.0 + branch.max_modulus());
    for c in 0..m {
        if !(0..r).all(|t| resid.get(c, t).is_negligible(tol * scale)) {
            return Err(GermError::BranchMismatch { component: c });
        }
    }
    let jinv = jac
        .inverse_tol(tol.max(1e-14))
        .ok_or(GermError::ImplicitSolveSingular)?;

    let mut sc = SliceComposer::new(r, total, trunc, tol);
    for (t, &v) in known.iter().enumerate() {
        sc.set_slice(v, 1, Series::var(r, trunc, t).with_tol(tol));
    }
    for (t, &v) in unknown.iter().enumerate() {
        let mut s = Series::zero(r, trunc).with_tol(tol);
        for j in 0..r {
            s.set(MultiIndex::unit(r, j), branch.get(t, j).clone());
        }
        sc.set_slice(v, 1, s);
    }
    for d in 2..=trunc {
        let res: Vec<Series<K>> = equation
            .comps()
            .iter()
            .map(|e| sc.apply_slice(e, d))
            .collect();
        for (t, &v) in unknown.iter().enumerate() {
            let mut s = Series::zero(r, trunc).with_tol(tol);
            for (c, rc) in res.iter().enumerate() {
                let w = jinv.get(t, c);
                if w.is_zero() {
                    continue;
                }
                for (q, val) in rc.terms() {
                    s.add_term(q.clone(), w.mul(val).neg());
                }
            }
            sc.set_slice(v, d, s);
        }
    }
    Ok(Germ {
        nin: r,
        comps: unknown.iter().map(|&v| sc.component(v)).collect(),
    })
}
