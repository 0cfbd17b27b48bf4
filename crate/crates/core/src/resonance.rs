//! Arithmetic of diagonal families `D_i = diag(mu_{i,1}, ..., mu_{i,n})`:
//! resonance queries, invariant and centralizer monomials, the resonant
//! ideal, monomial ideals and the small-divisor sequence `omega_k`.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::coeff::{Backend, Coeff};
use crate::error::{GermError, Result};
use crate::linalg::Mat;
use crate::series::MultiIndex;

/// Default cap on `2^k` and on `|Q|` for enumerations.
pub const DEFAULT_DEGREE_BUDGET: u32 = 16;

/// The eigenvalues `mu[i][j]` of `l` commuting diagonal matrices in
/// dimension `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalFamily<K: Coeff> {
    mu: Vec<Vec<K>>,
}

impl<K: Coeff> DiagonalFamily<K> {
    pub fn new(mu: Vec<Vec<K>>) -> Result<Self> {
        let n = mu.first().map_or(0, |r| r.len());
        if mu.is_empty() || n == 0 {
            return Err(GermError::InvalidInput("empty spectrum".into()));
        }
        for (i, row) in mu.iter().enumerate() {
            if row.len() != n {
                return Err(GermError::ArityMismatch {
                    what: format!("spectrum row {i}"),
                    left: n,
                    right: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                if v.is_zero() {
                    return Err(GermError::ZeroEigenvalue { i, j });
                }
            }
        }
        Ok(DiagonalFamily { mu })
    }

    /// Reads the diagonals of a list of matrices, which must be diagonal.
    pub fn from_matrices(ms: &[Mat<K>], tol: f64) -> Result<Self> {
        let mut rows = Vec::new();
        for m in ms {
            if !m.is_square() || !m.is_diagonal(tol) {
                return Err(GermError::NonDiagonalLinearParts);
            }
            rows.push(m.diagonal());
        }
        Self::new(rows)
    }

    pub fn l(&self) -> usize {
        self.mu.len()
    }
    pub fn n(&self) -> usize {
        self.mu[0].len()
    }
    pub fn mu(&self, i: usize, j: usize) -> &K {
        &self.mu[i][j]
    }
    pub fn rows(&self) -> &[Vec<K>] {
        &self.mu
    }
    pub fn matrix(&self, i: usize) -> Mat<K> {
        Mat::diag(&self.mu[i])
    }

    /// `mu_i^Q`.
    pub fn monomial(&self, i: usize, q: &MultiIndex) -> K {
        let mut acc = K::one();
        for (k, &e) in q.exps().iter().enumerate() {
            if e > 0 {
                acc = acc.mul(&self.mu[i][k].powi(e as i64).expect("nonzero eigenvalue"));
            }
        }
        acc
    }

    /// `prod_k mu_{i,k}^{e_k}` for a signed exponent vector.
    pub fn signed_monomial(&self, i: usize, e: &[i64]) -> K {
        let mut acc = K::one();
        for (k, &x) in e.iter().enumerate() {
            if x != 0 {
                acc = acc.mul(&self.mu[i][k].powi(x).expect("nonzero eigenvalue"));
            }
        }
        acc
    }

    /// Divisors `delta^i_{Q,j} = mu_i^Q - mu_{i,j}` for every `i`.
    pub fn divisors(&self, q: &MultiIndex, j: usize) -> Vec<K> {
        (0..self.l())
            .map(|i| self.monomial(i, q).sub(&self.mu[i][j]))
            .collect()
    }
}

/// A modulus, exact when the backend allows it.
#[derive(Clone, Debug, PartialEq)]
pub struct Magnitude {
    /// Exact `|z|^2` (exact backend).
    pub norm_sqr: Option<BigRational>,
    /// Exact `|z|` when it is rational.
    pub exact: Option<BigRational>,
    pub approx: f64,
}

impl Magnitude {
    pub fn of<K: Coeff>(z: &K) -> Self {
        let norm_sqr = z.norm_sqr_exact();
        let exact = norm_sqr.as_ref().and_then(crate::coeff::rational_sqrt);
        Magnitude {
            norm_sqr,
            exact,
            approx: z.modulus_f64(),
        }
    }

    pub fn cmp(&self, o: &Magnitude) -> Ordering {
        match (&self.norm_sqr, &o.norm_sqr) {
            (Some(a), Some(b)) => a.cmp(b),
            _ => self
                .approx
                .partial_cmp(&o.approx)
                .unwrap_or(Ordering::Equal),
        }
    }

    /// `"p/q"` when exact, else a float rendering.
    pub fn render(&self) -> String {
        match &self.exact {
            Some(q) => crate::coeff::render_rational(q),
            None => format!("{}", self.approx),
        }
    }

    pub fn ln(&self) -> f64 {
        match &self.exact {
            Some(q) => ratio_ln(q),
            None => self.approx.ln(),
        }
    }
}

/// Natural log of a positive rational without overflowing f64.
fn ratio_ln(q: &BigRational) -> f64 {
    fn big_ln(b: &BigInt) -> f64 {
        let bits = b.bits();
        if bits < 1000 {
            b.to_f64().unwrap().ln()
        } else {
            let shift = bits - 900;
            (b >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
        }
    }
    big_ln(q.numer()) - big_ln(q.denom())
}

// ---------------------------------------------------------------------------

/// Integer lattice in echelon form, used to answer multiplicative-relation
/// membership queries.
#[derive(Clone, Debug, PartialEq)]
pub struct IntLattice {
    dim: usize,
    rows: Vec<Vec<BigInt>>,
    pivots: Vec<usize>,
}

impl IntLattice {
    pub fn new(dim: usize, gens: &[Vec<i64>]) -> Self {
        let mut rows: Vec<Vec<BigInt>> = gens
            .iter()
            .map(|g| g.iter().map(|&x| BigInt::from(x)).collect())
            .filter(|r: &Vec<BigInt>| r.iter().any(|x| !x.is_zero()))
            .collect();
        let mut out = Vec::new();
        let mut pivots = Vec::new();
        for col in 0..dim {
            loop {
                let mut best: Option<usize> = None;
                for (r, row) in rows.iter().enumerate() {
                    if row[col].is_zero() {
                        continue;
                    }
                    if best.is_none_or(|b| row[col].abs() < rows[b][col].abs()) {
                        best = Some(r);
                    }
                }
                let Some(b) = best else { break };
                let mut changed = false;
                let piv = rows[b].clone();
                for (r, row) in rows.iter_mut().enumerate() {
                    if r == b || row[col].is_zero() {
                        continue;
                    }
                    let f = row[col].div_floor(&piv[col]);
                    for c in 0..dim {
                        row[c] -= &f * &piv[c];
                    }
                    changed = true;
                }
                if !changed
                    || rows
                        .iter()
                        .enumerate()
                        .all(|(r, row)| r == b || row[col].is_zero())
                {
                    let mut p = rows.remove(b);
                    if p[col].is_negative() {
                        for x in p.iter_mut() {
                            *x = -x.clone();
                        }
                    }
                    out.push(p);
                    pivots.push(col);
                    break;
                }
            }
            rows.retain(|r| r.iter().any(|x| !x.is_zero()));
        }
        IntLattice {
            dim,
            rows: out,
            pivots,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        assert_eq!(v.len(), self.dim);
        let mut w: Vec<BigInt> = v.iter().map(|&x| BigInt::from(x)).collect();
        for (row, &c) in self.rows.iter().zip(&self.pivots) {
            if w[c].is_zero() {
                continue;
            }
            let (f, r) = w[c].div_rem(&row[c]);
            if !r.is_zero() {
                return false;
            }
            for k in 0..self.dim {
                w[k] -= &f * &row[k];
            }
        }
        w.iter().all(|x| x.is_zero())
    }
}

// ---------------------------------------------------------------------------

/// How resonance questions are decided.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum OracleMode {
    /// Exact arithmetic on exact eigenvalues.
    Exact,
    /// Declared multiplicative relations `prod mu_{i,j}^{r_{i,j}} = 1`,
    /// each an integer vector of length `l*n` (block `i` holds the
    /// exponents of row `i`).
    Lattice { relations: Vec<Vec<i64>> },
    /// `|mu_i^Q - mu_{i,j}| <= epsilon` counts as resonant.
    Numeric { epsilon: f64 },
}

/// Outcome of one resonance query.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceAnswer<K: Coeff> {
    pub resonant: bool,
    /// `delta^i_{Q,j}` for every `i`.
    pub divisors: Vec<K>,
    /// Index of the largest divisor modulus (smallest index on ties);
    /// `None` when resonant.
    pub i0: Option<usize>,
    /// `max_i |delta^i|`.
    pub margin: Magnitude,
    /// Numeric mode only: margin within a factor 10 of the tolerance.
    pub ambiguous: bool,
}

#[derive(Clone, Debug)]
pub struct ResonanceOracle<K: Coeff> {
    family: DiagonalFamily<K>,
    mode: OracleMode,
    lattice: Option<IntLattice>,
}

impl<K: Coeff> ResonanceOracle<K> {
    pub fn new(family: DiagonalFamily<K>, mode: OracleMode) -> Result<Self> {
        let mut lattice = None;
        match &mode {
            OracleMode::Exact => {
                if K::BACKEND != Backend::Exact {
                    return Err(GermError::ExactModeNeedsExactBackend);
                }
            }
            OracleMode::Lattice { relations } => {
                let dim = family.l() * family.n();
                for (r, rel) in relations.iter().enumerate() {
                    if rel.len() != dim {
                        return Err(GermError::ArityMismatch {
                            what: format!("relation {r}"),
                            left: dim,
                            right: rel.len(),
                        });
                    }
                    let mut prod = K::one();
                    for i in 0..family.l() {
                        let block = &rel[i * family.n()..(i + 1) * family.n()];
                        prod = prod.mul(&family.signed_monomial(i, block));
                    }
                    if !prod.sub(&K::one()).is_negligible(1e-9) {
                        return Err(GermError::InvalidInput(format!(
                            "declared relation {r} does not hold for the spectrum"
                        )));
                    }
                }
                lattice = Some(IntLattice::new(dim, relations));
            }
            OracleMode::Numeric { epsilon } => {
                if !(*epsilon > 0.0) {
                    return Err(GermError::InvalidInput(
                        "numeric oracle needs a positive epsilon".into(),
                    ));
                }
            }
        }
        Ok(ResonanceOracle {
            family,
            mode,
            lattice,
        })
    }

    /// Exact oracle on the exact backend, numeric otherwise.
    pub fn default_for(family: DiagonalFamily<K>) -> Result<Self> {
        match K::BACKEND {
            Backend::Exact => Self::new(family, OracleMode::Exact),
            Backend::Float => Self::new(family, OracleMode::Numeric { epsilon: 1e-9 }),
        }
    }

    pub fn family(&self) -> &DiagonalFamily<K> {
        &self.family
    }
    pub fn mode(&self) -> &OracleMode {
        &self.mode
    }

    /// Whether `prod_k mu_{i,k}^{e_k} = 1` for every `i`, by the oracle's rule.
    pub fn is_unit(&self, e: &[i64]) -> bool {
        let fam = &self.family;
        match &self.mode {
            OracleMode::Exact => (0..fam.l()).all(|i| fam.signed_monomial(i, e) == K::one()),
            OracleMode::Lattice { .. } => {
                let lat = self.lattice.as_ref().expect("lattice built");
                let n = fam.n();
                (0..fam.l()).all(|i| {
                    let mut v = vec![0i64; fam.l() * n];
                    v[i * n..(i + 1) * n].copy_from_slice(e);
                    lat.contains(&v)
                })
            }
            OracleMode::Numeric { epsilon } => (0..fam.l())
                .all(|i| fam.signed_monomial(i, e).sub(&K::one()).modulus_f64() <= *epsilon),
        }
    }

    /// Whether `prod_k mu_{row,k}^{e_k} = 1` for the single row `row`.
    pub fn is_unit_row(&self, row: usize, e: &[i64]) -> bool {
        let fam = &self.family;
        match &self.mode {
            OracleMode::Exact => fam.signed_monomial(row, e) == K::one(),
            OracleMode::Lattice { .. } => {
                let n = fam.n();
                let mut v = vec![0i64; fam.l() * n];
                v[row * n..(row + 1) * n].copy_from_slice(e);
                self.lattice.as_ref().expect("lattice built").contains(&v)
            }
            OracleMode::Numeric { epsilon } => {
                fam.signed_monomial(row, e).sub(&K::one()).modulus_f64() <= *epsilon
            }
        }
    }

    /// `mu_i^Q = 1` for all `i`.
    pub fn is_invariant(&self, q: &MultiIndex) -> bool {
        let e: Vec<i64> = q.exps().iter().map(|&x| x as i64).collect();
        self.is_unit(&e)
    }

    /// Decides `mu_i^Q = mu_{i,j}` for all `i` (0-based `j`).
    pub fn is_resonant(&self, q: &MultiIndex, j: usize) -> Result<ResonanceAnswer<K>> {
        let fam = &self.family;
        if q.nvars() != fam.n() {
            return Err(GermError::ArityMismatch {
                what: "resonance query".into(),
                left: fam.n(),
                right: q.nvars(),
            });
        }
        if j >= fam.n() {
            return Err(GermError::InvalidInput(format!(
                "component index {} out of range",
                j + 1
            )));
        }
        let divisors = fam.divisors(q, j);
        let mut i0 = 0;
        let mut best = Magnitude::of(&divisors[0]);
        for (i, d) in divisors.iter().enumerate().skip(1) {
            let m = Magnitude::of(d);
            if m.cmp(&best) == Ordering::Greater {
                best = m;
                i0 = i;
            }
        }
        let mut ambiguous = false;
        let resonant = match &self.mode {
            OracleMode::Exact => divisors.iter().all(|d| d.is_zero()),
            OracleMode::Lattice { .. } => {
                let mut e: Vec<i64> = q.exps().iter().map(|&x| x as i64).collect();
                e[j] -= 1;
                let r = self.is_unit(&e);
                if K::BACKEND == Backend::Exact && !r && divisors.iter().all(|d| d.is_zero()) {
                    return Err(GermError::OracleInconsistent {
                        q: q.exps().to_vec(),
                        j,
                    });
                }
                r
            }
            OracleMode::Numeric { epsilon } => {
                let m = best.approx;
                ambiguous = m > epsilon / 10.0 && m <= epsilon * 10.0;
                m <= *epsilon
            }
        };
        Ok(ResonanceAnswer {
            resonant,
            divisors,
            i0: if resonant { None } else { Some(i0) },
            margin: best,
            ambiguous,
        })
    }

    /// All `Q` with `1 <= |Q| <= bound` and `mu_i^Q = 1` for every `i`,
    /// in canonical order.
    pub fn invariant_monomials(&self, bound: u32) -> Vec<MultiIndex> {
        MultiIndex::up_to_degree(self.family.n(), 1, bound)
            .into_iter()
            .filter(|q| self.is_invariant(q))
            .collect()
    }

    /// All `(Q, j)` with `2 <= |Q| <= bound` that are resonant.
    pub fn centralizer_monomials(&self, bound: u32) -> Result<Vec<(MultiIndex, usize)>> {
        let mut out = Vec::new();
        for q in MultiIndex::up_to_degree(self.family.n(), 2, bound) {
            for j in 0..self.family.n() {
                if self.is_resonant(&q, j)?.resonant {
                    out.push((q.clone(), j));
                }
            }
        }
        Ok(out)
    }

    /// Ideal generated by the invariant monomials of degree `<= bound`.
    pub fn res_ideal(&self, bound: u32) -> Result<ResIdeal> {
        if bound < 2 {
            return Err(GermError::InvalidInput(
                "degree bound must be at least 2".into(),
            ));
        }
        let invariants = self.invariant_monomials(bound);
        let generators = monoid_irreducibles(&invariants);
        let generated = monoid_closure(self.family.n(), &generators, bound);
        let complete = invariants.iter().all(|q| generated.contains(q));
        let stable = generators.iter().all(|g| 2 * g.degree() <= bound);
        for g in &generators {
            if !self.is_invariant(g) {
                return Err(GermError::InvalidInput(format!(
                    "generator {g:?} failed the invariance re-check"
                )));
            }
        }
        let ideal = MonomialIdeal::new(self.family.n(), generators.clone())?;
        Ok(ResIdeal {
            ideal,
            invariants,
            monoid_generators: generators,
            bound,
            complete,
            stable,
        })
    }

    /// `holds` iff every centralizer monomial of degree `<= bound` lies in
    /// the ideal; otherwise the first violation in canonical order.
    pub fn centralizer_condition(
        &self,
        ideal: &MonomialIdeal,
        bound: u32,
    ) -> Result<Option<(MultiIndex, usize)>> {
        for (q, j) in self.centralizer_monomials(bound)? {
            if !ideal.contains(&q) {
                return Ok(Some((q, j)));
            }
        }
        Ok(None)
    }

    /// `omega_k` for `k = 1..=k_max` over `Q` outside `ideal` (all `Q` when
    /// `ideal` is `None`).
    pub fn omega_sequence(
        &self,
        ideal: Option<&MonomialIdeal>,
        k_max: u32,
        budget: u32,
    ) -> Result<OmegaSequence> {
        if k_max == 0 {
            return Err(GermError::InvalidInput("k_max must be at least 1".into()));
        }
        let mut largest = 0;
        while largest < k_max && (1u64 << (largest + 1)) <= budget as u64 {
            largest += 1;
        }
        if largest < k_max {
            return Err(GermError::BudgetExceeded {
                largest_completed: largest,
            });
        }
        let n = self.family.n();
        let mut best: Option<(Magnitude, OmegaWitness)> = None;
        let mut entries = Vec::new();
        let mut lo = 2u32;
        for k in 1..=k_max {
            let hi = 1u32 << k;
            for q in MultiIndex::up_to_degree(n, lo, hi) {
                if ideal.is_some_and(|id| id.contains(&q)) {
                    continue;
                }
                for j in 0..n {
                    let ans = self.is_resonant(&q, j)?;
                    if ans.resonant {
                        continue;
                    }
                    let better = best
                        .as_ref()
                        .is_none_or(|(m, _)| ans.margin.cmp(m) == Ordering::Less);
                    if better {
                        best = Some((
                            ans.margin.clone(),
                            OmegaWitness {
                                q: q.clone(),
                                j,
                                i: ans.i0.unwrap(),
                            },
                        ));
                    }
                }
            }
            lo = hi + 1;
            match &best {
                Some((m, w)) => entries.push(OmegaEntry {
                    k,
                    omega: m.clone(),
                    witness: w.clone(),
                }),
                None => return Err(GermError::VacuousInf),
            }
        }
        let mut partial_sums = Vec::new();
        let mut acc = 0.0;
        for e in &entries {
            acc -= e.omega.ln() / (1u64 << e.k) as f64;
            partial_sums.push(acc);
        }
        let verdict = trend_verdict(&entries);
        Ok(OmegaSequence {
            entries,
            partial_sums,
            verdict,
        })
    }
}

fn trend_verdict(entries: &[OmegaEntry]) -> String {
    let inc: Vec<f64> = entries
        .iter()
        .map(|e| -e.omega.ln() / (1u64 << e.k) as f64)
        .collect();
    let last = *inc.last().unwrap();
    if inc.len() < 2 || last.abs() < 1e-12 {
        return "flat".into();
    }
    let prev = inc[inc.len() - 2];
    if last <= 0.75 * prev.abs() {
        "converging-trend".into()
    } else {
        "diverging-trend".into()
    }
}

/// Elements of a set of nonzero exponent vectors that are not the sum of
/// two nonzero elements of the set.
pub fn monoid_irreducibles(set: &[MultiIndex]) -> Vec<MultiIndex> {
    let mut sorted = set.to_vec();
    sorted.sort();
    let members: std::collections::BTreeSet<MultiIndex> = sorted.iter().cloned().collect();
    sorted
        .iter()
        .filter(|q| {
            !sorted.iter().any(|p| {
                p != *q
                    && p.divides(q)
                    && q.checked_sub(p)
                        .is_some_and(|r| r.degree() > 0 && members.contains(&r))
            })
        })
        .cloned()
        .collect()
}

/// Every element of degree `1..=bound` of the monoid generated by `gens`.
pub fn monoid_closure(
    n: usize,
    gens: &[MultiIndex],
    bound: u32,
) -> std::collections::BTreeSet<MultiIndex> {
    let mut set = std::collections::BTreeSet::new();
    let zero = MultiIndex::zero(n);
    for q in MultiIndex::up_to_degree(n, 1, bound) {
        let inside = gens.iter().any(|g| {
            q.checked_sub(g)
                .is_some_and(|r| r == zero || set.contains(&r))
        });
        if inside {
            set.insert(q);
        }
    }
    set
}

/// Resonant ideal computed up to a degree bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ResIdeal {
    pub ideal: MonomialIdeal,
    /// All invariant monomials of degree `<= bound`.
    pub invariants: Vec<MultiIndex>,
    /// Irreducible elements of the invariant monoid up to the bound.
    pub monoid_generators: Vec<MultiIndex>,
    pub bound: u32,
    /// Every invariant up to the bound lies in the generated monoid.
    pub complete: bool,
    /// No generator appears in the upper half of the degree range.
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmegaWitness {
    pub q: MultiIndex,
    pub j: usize,
    pub i: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmegaEntry {
    pub k: u32,
    pub omega: Magnitude,
    pub witness: OmegaWitness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmegaSequence {
    pub entries: Vec<OmegaEntry>,
    /// `-sum_{kappa <= k} ln(omega_kappa) / 2^kappa`.
    pub partial_sums: Vec<f64>,
    pub verdict: String,
}

// ---------------------------------------------------------------------------

/// Ideal of the power series ring generated by monomials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialIdeal {
    nvars: usize,
    gens: Vec<MultiIndex>,
}

impl MonomialIdeal {
    /// Keeps the minimal generators under divisibility, sorted canonically.
    pub fn new(nvars: usize, gens: Vec<MultiIndex>) -> Result<Self> {
        for g in &gens {
            if g.nvars() != nvars {
                return Err(GermError::ArityMismatch {
                    what: "ideal generator".into(),
                    left: nvars,
                    right: g.nvars(),
                });
            }
        }
        let mut sorted = gens;
        sorted.sort();
        sorted.dedup();
        let mut minimal: Vec<MultiIndex> = Vec::new();
        for g in sorted {
            if !minimal.iter().any(|m| m.divides(&g)) {
                minimal.push(g);
            }
        }
        Ok(MonomialIdeal {
            nvars,
            gens: minimal,
        })
    }

    pub fn zero(nvars: usize) -> Self {
        MonomialIdeal {
            nvars,
            gens: Vec::new(),
        }
    }

    /// `m^d`, generated by all monomials of degree `d`.
    pub fn max_power(nvars: usize, d: u32) -> Self {
        MonomialIdeal {
            nvars,
            gens: MultiIndex::of_degree(nvars, d),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }
    pub fn gens(&self) -> &[MultiIndex] {
        &self.gens
    }
    pub fn is_zero(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn contains(&self, q: &MultiIndex) -> bool {
        self.gens.iter().any(|g| g.divides(q))
    }

    /// No generator divides another.
    pub fn is_minimal(&self) -> bool {
        self.gens.iter().enumerate().all(|(a, g)| {
            self.gens
                .iter()
                .enumerate()
                .all(|(b, h)| a == b || !g.divides(h))
        })
    }

    /// Variables not involved in any generator; `None` when empty.
    pub fn properly_embedded(&self) -> Option<Vec<usize>> {
        let s: Vec<usize> = (0..self.nvars)
            .filter(|&k| self.gens.iter().all(|g| g.get(k) == 0))
            .collect();
        if s.is_empty() {
            None
        } else {
            Some(s)
        }
    }

    /// Irreducible components of `V(I)`, each given by the set of
    /// coordinates that vanish on it (minimal vertex covers of the
    /// generator supports). The zero ideal gives one component, the whole
    /// space; the unit ideal gives none.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let supports: Vec<Vec<usize>> = self.gens.iter().map(|g| g.support()).collect();
        if supports.iter().any(|s| s.is_empty()) {
            return Vec::new();
        }
        let mut covers: Vec<Vec<usize>> = Vec::new();
        fn rec(supports: &[Vec<usize>], chosen: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            match supports
                .iter()
                .find(|s| !s.iter().any(|v| chosen.contains(v)))
            {
                None => {
                    let mut c = chosen.clone();
                    c.sort();
                    out.push(c);
                }
                Some(s) => {
                    for &v in s {
                        chosen.push(v);
                        rec(supports, chosen, out);
                        chosen.pop();
                    }
                }
            }
        }
        rec(&supports, &mut Vec::new(), &mut covers);
        covers.sort();
        covers.dedup();
        let all = covers.clone();
        covers.retain(|c| {
            !all.iter()
                .any(|d| d != c && d.iter().all(|v| c.contains(v)))
        });
        covers.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        covers
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::GaussQ;

    fn q(n: i64, d: i64) -> GaussQ {
        GaussQ::from_ratio(n, d)
    }
    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::from(v)
    }

    #[test]
    fn lattice_membership() {
        let l = IntLattice::new(2, &[vec![3, 0], vec![1, 1]]);
        assert!(l.contains(&[3, 0]));
        assert!(l.contains(&[2, -1]));
        assert!(l.contains(&[0, 3]));
        assert!(!l.contains(&[1, 0]));
        assert!(!l.contains(&[2, 0]));
        assert_eq!(l.rank(), 2);
    }

    #[test]
    fn resonance_examples() {
        let fam = DiagonalFamily::new(vec![vec![q(2, 1), q(1, 2)]]).unwrap();
        let o = ResonanceOracle::new(fam, OracleMode::Exact).unwrap();
        assert!(o.is_resonant(&mi(&[2, 1]), 0).unwrap().resonant);
        let a = o.is_resonant(&mi(&[0, 2]), 0).unwrap();
        assert!(!a.resonant);
        assert_eq!(a.divisors[0], q(-7, 4));
    }

    #[test]
    fn components_of_mixed_ideal() {
        let i = MonomialIdeal::new(3, vec![mi(&[1, 0, 0]), mi(&[0, 1, 1])]).unwrap();
        assert_eq!(i.components(), vec![vec![0, 1], vec![0, 2]]);
        assert_eq!(
            MonomialIdeal::zero(2).components(),
            vec![Vec::<usize>::new()]
        );
    }
}
