//! Simultaneous linearization of a commuting family `F_i = D_i x + f_i` on a
//! monomial ideal.
//!
//! `Phi = Id + phi` and `G_i = D_i y + g_i` are built degree by degree from
//!
//! ```text
//! delta^i_{Q,j} phi_{j,Q} + g_{i,j,Q} = { f_{i,j}(Phi) - (phi_j(G_i) - phi_j(D_i y)) }_Q
//! ```
//!
//! with `delta^i_{Q,j} = mu_i^Q - mu_{i,j}`. Outside the ideal the divisor of
//! largest modulus is used; resonant coefficients must vanish; inside the
//! ideal everything goes into `g`.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::coeff::{
    f64_to_rat, modulus_bounds, modulus_rational, sqrt_bounds, Backend, Coeff, GaussQ,
};
use crate::error::{GermError, Result};
use crate::linalg::Mat;
use crate::resonance::{DiagonalFamily, Magnitude, MonomialIdeal, OracleMode, ResonanceOracle};
use crate::series::{Germ, MultiIndex, Series, SliceComposer};

/// Largest degree accepted by [`majorant_diagnostics`].
pub const MAX_DIAGNOSTICS_DEGREE: u32 = 8;

/// First coefficient where `F_i ∘ F_j` and `F_j ∘ F_i` differ.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutationViolation {
    pub i: usize,
    pub j: usize,
    pub component: usize,
    pub q: MultiIndex,
}

/// Compares `F_i ∘ F_j` with `F_j ∘ F_i` for every pair.
pub fn check_commutativity<K: Coeff>(maps: &[Germ<K>]) -> Result<Option<CommutationViolation>> {
    for i in 0..maps.len() {
        for j in (i + 1)..maps.len() {
            let a = maps[i].compose(&maps[j])?;
            let b = maps[j].compose(&maps[i])?;
            if let Some((component, q)) = a.first_difference(&b, verify_tol::<K>(a.tol())) {
                return Ok(Some(CommutationViolation { i, j, component, q }));
            }
        }
    }
    Ok(None)
}

/// Tolerance used by verifiers: zero on the exact backend.
pub fn verify_tol<K: Coeff>(tol: f64) -> f64 {
    match K::BACKEND {
        Backend::Exact => 0.0,
        Backend::Float => (tol * 1e3).max(1e-9),
    }
}

/// Commuting maps with diagonal linear parts and a resonance oracle for
/// their spectrum.
#[derive(Clone, Debug)]
pub struct CommutingFamily<K: Coeff> {
    maps: Vec<Germ<K>>,
    oracle: ResonanceOracle<K>,
}

impl<K: Coeff> CommutingFamily<K> {
    /// Reads the spectrum from the linear parts and checks commutation.
    pub fn new(maps: Vec<Germ<K>>, mode: OracleMode) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, m) in maps.iter().enumerate() {
            let lin = m.linear_part();
            if !lin.is_square() || !lin.is_diagonal(0.0) {
                return Err(GermError::LinearPartMismatch { i });
            }
            rows.push(lin.diagonal());
        }
        let oracle = ResonanceOracle::new(DiagonalFamily::new(rows)?, mode)?;
        Self::with_oracle(maps, oracle)
    }

    /// Uses a prebuilt oracle; the linear parts must equal its spectrum.
    pub fn with_oracle(maps: Vec<Germ<K>>, oracle: ResonanceOracle<K>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| GermError::InvalidInput("empty family".into()))?;
        let (n, trunc) = (first.nin(), first.trunc());
        if maps.len() != oracle.family().l() {
            return Err(GermError::ArityMismatch {
                what: "maps vs spectrum rows".into(),
                left: maps.len(),
                right: oracle.family().l(),
            });
        }
        for (i, m) in maps.iter().enumerate() {
            if m.nin() != n || m.nout() != n {
                return Err(GermError::ArityMismatch {
                    what: format!("map {i}"),
                    left: n,
                    right: m.nout(),
                });
            }
            if m.trunc() != trunc {
                return Err(GermError::TruncationMismatch {
                    left: trunc,
                    right: m.trunc(),
                });
            }
            if oracle.family().n() != n || m.linear_part() != oracle.family().matrix(i) {
                return Err(GermError::LinearPartMismatch { i });
            }
        }
        if let Some(v) = check_commutativity(&maps)? {
            return Err(GermError::NotAbelian {
                i: v.i,
                j: v.j,
                component: v.component,
                q: v.q.exps().to_vec(),
            });
        }
        Ok(CommutingFamily { maps, oracle })
    }

    pub fn maps(&self) -> &[Germ<K>] {
        &self.maps
    }
    pub fn oracle(&self) -> &ResonanceOracle<K> {
        &self.oracle
    }
    pub fn spectrum(&self) -> &DiagonalFamily<K> {
        self.oracle.family()
    }
    pub fn n(&self) -> usize {
        self.maps[0].nin()
    }
    pub fn l(&self) -> usize {
        self.maps.len()
    }
    pub fn trunc(&self) -> u32 {
        self.maps[0].trunc()
    }
    pub fn tol(&self) -> f64 {
        self.maps[0].tol()
    }
}

/// Which case rule fixed the pair `(Q, j)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    /// Outside the ideal, non-resonant: divide by `delta^{i0}`.
    Divide { i0: usize },
    /// Outside the ideal, resonant: the bracket vanished.
    Resonant,
    /// Inside the ideal: the bracket goes to the residual.
    InIdeal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleEvent {
    pub q: MultiIndex,
    pub j: usize,
    pub rule: Rule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearizationResult<K: Coeff> {
    /// Conjugating germ, tangent to the identity.
    pub phi: Germ<K>,
    /// Nonlinear parts `g_i` of the conjugated maps.
    pub residuals: Vec<Germ<K>>,
    /// Every `(Q, j)` with `2 <= |Q| <= N` and the rule applied.
    pub trace: Vec<RuleEvent>,
    pub normalized: bool,
}

/// Runs the degree-by-degree recursion.
pub fn linearize_on_ideal<K: Coeff>(
    fam: &CommutingFamily<K>,
    ideal: &MonomialIdeal,
) -> Result<LinearizationResult<K>> {
    let (n, l, trunc, tol) = (fam.n(), fam.l(), fam.trunc(), fam.tol());
    if ideal.nvars() != n {
        return Err(GermError::ArityMismatch {
            what: "ideal variables".into(),
            left: n,
            right: ideal.nvars(),
        });
    }
    let oracle = fam.oracle();
    let f: Vec<Vec<Series<K>>> = fam
        .maps
        .iter()
        .map(|m| m.nonlinear_part().into_comps())
        .collect();
    let zero = Series::zero(n, trunc).with_tol(tol);

    let mut phi_sc = SliceComposer::new(n, n, trunc, tol);
    for k in 0..n {
        phi_sc.set_slice(k, 1, Series::var(n, trunc, k).with_tol(tol));
    }
    let mut g_sc: Vec<SliceComposer<K>> = (0..l)
        .map(|i| {
            let mut sc = SliceComposer::new(n, n, trunc, tol);
            for k in 0..n {
                sc.set_slice(
                    k,
                    1,
                    Series::monomial(
                        n,
                        trunc,
                        MultiIndex::unit(n, k),
                        oracle.family().mu(i, k).clone(),
                    )
                    .with_tol(tol),
                );
            }
            sc
        })
        .collect();
    let mut phi_nl: Vec<Series<K>> = vec![zero.clone(); n];
    let mut g_nl: Vec<Vec<Series<K>>> = vec![vec![zero.clone(); n]; l];
    let mut trace = Vec::new();

    for d in 2..=trunc {
        let mut rhs: Vec<Vec<Series<K>>> = Vec::with_capacity(l);
        for i in 0..l {
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                let a = phi_sc.apply_slice(&f[i][j], d);
                let b = g_sc[i].apply_slice(&phi_nl[j], d);
                row.push(a.sub(&b));
            }
            rhs.push(row);
        }
        // Components are independent at a fixed degree; collected in order.
        let solved: Vec<Result<(Series<K>, Vec<Series<K>>, Vec<RuleEvent>)>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut phi_j = zero.clone();
                let mut g_j = vec![zero.clone(); l];
                let mut events = Vec::new();
                for q in MultiIndex::of_degree(n, d) {
                    if ideal.contains(&q) {
                        for i in 0..l {
                            g_j[i].set(q.clone(), rhs[i][j].coeff(&q));
                        }
                        events.push(RuleEvent {
                            q,
                            j,
                            rule: Rule::InIdeal,
                        });
                        continue;
                    }
                    let ans = oracle.is_resonant(&q, j)?;
                    if ans.ambiguous {
                        let eps = match oracle.mode() {
                            OracleMode::Numeric { epsilon } => *epsilon,
                            _ => 0.0,
                        };
                        return Err(GermError::AmbiguousResonance {
                            q: q.exps().to_vec(),
                            j,
                            margin: ans.margin.approx,
                            eps,
                        });
                    }
                    if ans.resonant {
                        for r in rhs.iter() {
                            let v = r[j].coeff(&q);
                            if !v.is_negligible(tol) {
                                return Err(GermError::FormalObstruction {
                                    q: q.exps().to_vec(),
                                    j,
                                    value: v.to_string(),
                                });
                            }
                        }
                        events.push(RuleEvent {
                            q,
                            j,
                            rule: Rule::Resonant,
                        });
                    } else {
                        let i0 = ans.i0.expect("non-resonant answer carries i0");
                        let v = rhs[i0][j].coeff(&q);
                        if !v.is_zero() {
                            let c = v
                                .div(&ans.divisors[i0])
                                .ok_or_else(|| GermError::InvalidInput("zero divisor".into()))?;
                            phi_j.set(q.clone(), c);
                        }
                        events.push(RuleEvent {
                            q,
                            j,
                            rule: Rule::Divide { i0 },
                        });
                    }
                }
                Ok((phi_j, g_j, events))
            })
            .collect();
        let mut phi_d: Vec<Series<K>> = Vec::with_capacity(n);
        let mut g_d: Vec<Vec<Series<K>>> = vec![Vec::with_capacity(n); l];
        for r in solved {
            let (phi_j, g_j, events) = r?;
            phi_d.push(phi_j);
            for (i, g) in g_j.into_iter().enumerate() {
                g_d[i].push(g);
            }
            trace.extend(events);
        }
        for j in 0..n {
            phi_sc.set_slice(j, d, phi_d[j].clone());
            phi_nl[j] = phi_nl[j].add(&phi_d[j]);
            for i in 0..l {
                g_sc[i].set_slice(j, d, g_d[i][j].clone());
                g_nl[i][j] = g_nl[i][j].add(&g_d[i][j]);
            }
        }
    }

    let phi = Germ::new((0..n).map(|j| phi_sc.component(j)).collect())?;
    let residuals = g_nl
        .into_iter()
        .map(Germ::new)
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearizationResult {
        phi,
        residuals,
        trace,
        normalized: true,
    })
}

/// A coefficient where `Phi^{-1} ∘ F_i ∘ Phi` differs from `D_i y + g_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugacyFailure {
    pub i: usize,
    pub j: usize,
    pub q: MultiIndex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConjugacyReport {
    pub passed: bool,
    pub failures: Vec<ConjugacyFailure>,
    /// `(j, Q)` where `phi_{j,Q} != 0` with `Q` in the ideal or `(Q, j)` resonant.
    pub normalization_failures: Vec<(usize, MultiIndex)>,
    /// `(i, j, Q)` where a residual term lies outside the ideal.
    pub residuals_outside_ideal: Vec<(usize, usize, MultiIndex)>,
}

/// Recomputes `Phi^{-1} ∘ F_i ∘ Phi` and compares with `D_i y + g_i`.
pub fn verify_conjugacy<K: Coeff>(
    fam: &CommutingFamily<K>,
    res: &LinearizationResult<K>,
    ideal: &MonomialIdeal,
) -> Result<ConjugacyReport> {
    let tol = verify_tol::<K>(fam.tol());
    let inv = res.phi.invert()?;
    let mut failures = Vec::new();
    for (i, f) in fam.maps.iter().enumerate() {
        let conj = inv.compose(&f.compose(&res.phi)?)?;
        let target = Germ::from_linear(&fam.spectrum().matrix(i), fam.trunc())
            .with_tol(fam.tol())
            .try_add(&res.residuals[i])?;
        for j in 0..fam.n() {
            let (a, b) = (conj.comp(j), target.comp(j));
            let mut keys: Vec<&MultiIndex> = a
                .terms()
                .map(|t| t.0)
                .chain(b.terms().map(|t| t.0))
                .collect();
            keys.sort();
            keys.dedup();
            for q in keys {
                if !a.coeff(q).sub(&b.coeff(q)).is_negligible(tol) {
                    failures.push(ConjugacyFailure { i, j, q: q.clone() });
                }
            }
        }
    }
    let mut normalization_failures = Vec::new();
    for j in 0..fam.n() {
        for (q, _) in res.phi.comp(j).terms() {
            if q.degree() < 2 {
                continue;
            }
            if ideal.contains(q) || fam.oracle().is_resonant(q, j)?.resonant {
                normalization_failures.push((j, q.clone()));
            }
        }
    }
    let mut residuals_outside_ideal = Vec::new();
    for (i, g) in res.residuals.iter().enumerate() {
        for j in 0..fam.n() {
            for (q, _) in g.comp(j).terms() {
                if !ideal.contains(q) {
                    residuals_outside_ideal.push((i, j, q.clone()));
                }
            }
        }
    }
    let passed = failures.is_empty()
        && normalization_failures.is_empty()
        && residuals_outside_ideal.is_empty();
    Ok(ConjugacyReport {
        passed,
        failures,
        normalization_failures,
        residuals_outside_ideal,
    })
}

/// `z -> P conj(g(conj(P)^{-1}...))`: the conjugate `rho ∘ g ∘ rho` of a
/// germ by `rho(z) = P z̄` with `P P̄ = Id`.
pub fn rho_conjugate<K: Coeff>(g: &Germ<K>, p: &Mat<K>) -> Result<Germ<K>> {
    let lin = Germ::from_linear(&p.conj(), g.trunc()).with_tol(g.tol());
    Ok(g.conj().compose(&lin)?.left_mul(p))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoReport {
    /// `rho ∘ Phi ∘ rho = Phi` up to the truncation.
    pub commutes: bool,
    pub first_difference: Option<(usize, MultiIndex)>,
    /// Whether the declared words were checked (none given means skipped).
    pub words_checked: bool,
}

/// Applies a word of signed 1-based map indices (negative for inverses),
/// leftmost factor outermost.
pub fn apply_word<K: Coeff>(maps: &[Germ<K>], word: &[i64]) -> Result<Germ<K>> {
    let n = maps[0].nin();
    let mut acc = Germ::identity(n, maps[0].trunc()).with_tol(maps[0].tol());
    for &w in word.iter().rev() {
        let idx = w.unsigned_abs() as usize;
        if idx == 0 || idx > maps.len() {
            return Err(GermError::InvalidInput(format!(
                "word letter {w} out of range"
            )));
        }
        let m = if w > 0 {
            maps[idx - 1].clone()
        } else {
            maps[idx - 1].invert()?
        };
        acc = m.compose(&acc)?;
    }
    Ok(acc)
}

/// Checks the hypotheses on `rho(z) = P z̄` and then `rho ∘ Phi ∘ rho = Phi`.
pub fn check_rho_equivariance<K: Coeff>(
    fam: &CommutingFamily<K>,
    res: &LinearizationResult<K>,
    ideal: &MonomialIdeal,
    p: &Mat<K>,
    words: Option<&[Vec<i64>]>,
) -> Result<RhoReport> {
    let n = fam.n();
    let tol = verify_tol::<K>(fam.tol());
    let trunc = fam.trunc();
    if p.rows() != n || p.cols() != n {
        return Err(GermError::ArityMismatch {
            what: "rho matrix".into(),
            left: n,
            right: p.rows(),
        });
    }
    if !p.mul(&p.conj()).approx_eq(&Mat::identity(n), tol) {
        return Err(GermError::HypothesisViolated("P * conj(P) != Id".into()));
    }
    let pbar = Germ::from_linear(&p.conj(), trunc).with_tol(fam.tol());
    // Image of a monomial under y -> conj(P) y.
    let image = |q: &MultiIndex| -> Result<Series<K>> {
        let mono = Series::monomial(n, trunc, q.clone(), K::one()).with_tol(fam.tol());
        crate::series::compose_series(&mono, &pbar)
    };
    for g in ideal.gens() {
        if g.degree() > trunc {
            continue;
        }
        if let Some((m, _)) = image(g)?.terms().find(|(m, _)| !ideal.contains(m)) {
            return Err(GermError::HypothesisViolated(format!(
                "rho does not preserve the ideal: generator {g:?} maps onto {m:?}"
            )));
        }
    }
    let centralizer = fam.oracle().centralizer_monomials(trunc)?;
    let cset: std::collections::BTreeSet<(MultiIndex, usize)> =
        centralizer.iter().cloned().collect();
    for (q, j) in &centralizer {
        let img = image(q)?;
        for r in 0..n {
            let c = p.get(r, *j);
            if c.is_negligible(tol) {
                continue;
            }
            for (m, _) in img.terms() {
                if !cset.contains(&(m.clone(), r)) {
                    return Err(GermError::HypothesisViolated(format!(
                        "rho does not preserve the centralizer: ({q:?}, {}) maps onto ({m:?}, {})",
                        j + 1,
                        r + 1
                    )));
                }
            }
        }
    }
    let mut words_checked = false;
    if let Some(ws) = words {
        if ws.len() != fam.l() {
            return Err(GermError::ArityMismatch {
                what: "rho words".into(),
                left: fam.l(),
                right: ws.len(),
            });
        }
        for (i, w) in ws.iter().enumerate() {
            let lhs = rho_conjugate(&fam.maps[i], p)?;
            let rhs = apply_word(&fam.maps, w)?;
            if let Some((c, q)) = lhs.first_difference(&rhs, tol) {
                return Err(GermError::HypothesisViolated(format!(
                    "rho F_{} rho differs from the declared word at component {}, monomial {q:?}",
                    i + 1,
                    c + 1
                )));
            }
        }
        words_checked = true;
    }
    let conj = rho_conjugate(&res.phi, p)?;
    let first_difference = conj.first_difference(&res.phi, tol);
    Ok(RhoReport {
        commutes: first_difference.is_none(),
        first_difference,
        words_checked,
    })
}

// ---------------------------------------------------------------------------

/// Majorant quantities at truncation scale, all exact rationals.
#[derive(Clone, Debug, PartialEq)]
pub struct MajorantDiagnostics {
    pub degree: u32,
    pub a: BigRational,
    pub b: BigRational,
    pub theta: BigRational,
    /// `omega_k(D, I)` for `k = 1..`; `None` when the index set is empty.
    pub omega: Vec<(u32, Option<BigRational>)>,
    pub delta: BTreeMap<MultiIndex, BigRational>,
    pub eta: BTreeMap<MultiIndex, BigRational>,
    pub sigma: BTreeMap<MultiIndex, BigRational>,
    pub phi_tilde: BTreeMap<MultiIndex, BigRational>,
    /// `phi^(k)(Q) = sum_j phi_j^(k)(Q)`.
    pub phi_counts: BTreeMap<(u32, MultiIndex), u64>,
    pub violations: Vec<String>,
}

fn mag_rat(m: &Magnitude) -> BigRational {
    m.exact.clone().unwrap_or_else(|| f64_to_rat(m.approx))
}

/// A rational lower bound on the modulus.
fn mag_lower(m: &Magnitude) -> BigRational {
    match (&m.exact, &m.norm_sqr) {
        (Some(e), _) => e.clone(),
        (None, Some(n)) => sqrt_bounds(n, 64).0,
        (None, None) => f64_to_rat((m.approx * (1.0 - 4.0 * f64::EPSILON)).max(0.0)),
    }
}

/// Decides `sum |z| <= bound`, refining the square roots until the answer
/// is certain. Returns the decision and the upper bound on the sum used.
fn sum_moduli_le<K: Coeff>(zs: &[&K], bound: &BigRational) -> (bool, BigRational) {
    let mut hi = BigRational::zero();
    for bits in [64, 128, 256, 512, 1024] {
        let mut lo = BigRational::zero();
        hi = BigRational::zero();
        for z in zs {
            let (l, h) = modulus_bounds(*z, bits);
            lo += l;
            hi += h;
        }
        if hi <= *bound {
            return (true, hi);
        }
        if lo > *bound {
            return (false, hi);
        }
    }
    (false, hi)
}

fn factorial(k: u32) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, x| acc * BigInt::from(x))
}

fn multinomial(q: &MultiIndex) -> BigInt {
    let mut r = factorial(q.degree());
    for &e in q.exps() {
        r /= factorial(e);
    }
    r
}

/// Proper nonzero sub-indices `0 < P < Q`.
fn proper_parts(q: &MultiIndex) -> Vec<MultiIndex> {
    let mut out = vec![Vec::new()];
    for &e in q.exps() {
        let mut next = Vec::new();
        for p in &out {
            for x in 0..=e {
                let mut v: Vec<u32> = p.clone();
                v.push(x);
                next.push(v);
            }
        }
        out = next;
    }
    out.into_iter()
        .map(MultiIndex::new)
        .filter(|p| p.degree() > 0 && p != q)
        .collect()
}

/// Computes the majorant objects up to degree `cap` and checks
/// `phi~_Q <= sigma_Q eta_Q` and the counting bounds on `phi^(k)`.
pub fn majorant_diagnostics<K: Coeff>(
    fam: &CommutingFamily<K>,
    ideal: &MonomialIdeal,
    res: &LinearizationResult<K>,
    cap: u32,
) -> Result<MajorantDiagnostics> {
    if cap > MAX_DIAGNOSTICS_DEGREE {
        return Err(GermError::DiagnosticsBudgetExceeded {
            requested: cap,
            cap: MAX_DIAGNOSTICS_DEGREE,
        });
    }
    let cap = cap.min(fam.trunc());
    let n = fam.n();
    let oracle = fam.oracle();
    let spec = fam.spectrum();
    let outside: Vec<MultiIndex> = MultiIndex::up_to_degree(n, 2, cap)
        .into_iter()
        .filter(|q| !ideal.contains(q))
        .collect();

    // Majorant fit for sum_{i,j} f_{i,j}.
    let mut r_d: Vec<BigRational> = vec![BigRational::zero(); cap as usize + 1];
    for q in MultiIndex::up_to_degree(n, 2, cap) {
        let mut c = BigRational::zero();
        for m in fam.maps() {
            for comp in m.comps() {
                if let Some(v) = comp.coeff_ref(&q) {
                    c += modulus_bounds(v, 64).1;
                }
            }
        }
        let ratio = c / BigRational::from_integer(multinomial(&q));
        let d = q.degree() as usize;
        if ratio > r_d[d] {
            r_d[d] = ratio;
        }
    }
    let ceiling = if r_d.len() > 2 && r_d[2] > BigRational::one() {
        r_d[2].clone()
    } else {
        BigRational::one()
    };
    let mut b = BigRational::one();
    let pow = |b: &BigRational, e: u32| -> BigRational {
        (0..e).fold(BigRational::one(), |acc, _| acc * b)
    };
    loop {
        let ok = (3..=cap).all(|d| &r_d[d as usize] / pow(&b, d - 2) <= ceiling);
        if ok {
            break;
        }
        b *= BigRational::from_integer(BigInt::from(2));
    }
    let mut a = (2..=cap)
        .map(|d| &r_d[d as usize] / pow(&b, d - 2))
        .max()
        .unwrap_or_else(BigRational::zero);
    if a.is_zero() {
        a = BigRational::one();
    }

    // theta from the moduli of the eigenvalues (restricted to S if any).
    let vars: Vec<usize> = ideal
        .properly_embedded()
        .unwrap_or_else(|| (0..n).collect());
    let mut min_mu: Option<BigRational> = None;
    for i in 0..spec.l() {
        for &j in &vars {
            let m = modulus_rational(spec.mu(i, j));
            if min_mu.as_ref().is_none_or(|x| m < *x) {
                min_mu = Some(m);
            }
        }
    }
    let mm = min_mu.unwrap_or_else(BigRational::one);
    let theta = if mm < BigRational::one() {
        mm
    } else {
        BigRational::one()
    } / BigRational::from_integer(BigInt::from(4));

    // Divisors.
    let mut delta: BTreeMap<MultiIndex, BigRational> = BTreeMap::new();
    let mut delta_mag: HashMap<MultiIndex, Option<Magnitude>> = HashMap::new();
    let mut delta_j: HashMap<(MultiIndex, usize), Option<Magnitude>> = HashMap::new();
    for q in &outside {
        let mut best: Option<Magnitude> = None;
        for j in 0..n {
            let ans = oracle.is_resonant(q, j)?;
            if ans.resonant {
                delta_j.insert((q.clone(), j), None);
                continue;
            }
            if best
                .as_ref()
                .is_none_or(|b| ans.margin.cmp(b) == std::cmp::Ordering::Less)
            {
                best = Some(ans.margin.clone());
            }
            delta_j.insert((q.clone(), j), Some(ans.margin));
        }
        delta.insert(
            q.clone(),
            best.as_ref().map_or_else(BigRational::zero, mag_lower),
        );
        delta_mag.insert(q.clone(), best);
    }

    // sigma by fixed-point iteration on Q outside the ideal.
    let rq = |x: &BigRational| GaussQ::real(x.clone());
    let mut sigma_s: Series<GaussQ> = Series::zero(n, cap);
    let mut lin: Series<GaussQ> = Series::zero(n, cap);
    for k in 0..n {
        lin.add_term(MultiIndex::unit(n, k), GaussQ::one());
    }
    for _ in 0..cap.saturating_sub(1) {
        let u = lin.add(&sigma_s);
        let bu = u.scale(&rq(&b));
        let mut geo = Series::constant(n, cap, GaussQ::one());
        let mut p = Series::constant(n, cap, GaussQ::one());
        for _ in 1..=cap.saturating_sub(2) {
            p = p.mul(&bu);
            geo = geo.add(&p);
        }
        let h = u.mul(&u).mul(&geo).scale(&rq(&a));
        sigma_s = h.project(|q| q.degree() >= 2 && !ideal.contains(q));
    }
    let sigma: BTreeMap<MultiIndex, BigRational> = outside
        .iter()
        .map(|q| (q.clone(), sigma_s.coeff(q).re.clone()))
        .collect();

    // eta by dynamic programming over decompositions.
    let mut eta: BTreeMap<MultiIndex, BigRational> = BTreeMap::new();
    let mut mval: BTreeMap<MultiIndex, BigRational> = BTreeMap::new();
    for q in MultiIndex::up_to_degree(n, 1, cap) {
        if ideal.contains(&q) {
            continue;
        }
        if q.degree() == 1 {
            eta.insert(q.clone(), BigRational::one());
            mval.insert(q, BigRational::one());
            continue;
        }
        let mut m = BigRational::one();
        for p in proper_parts(&q) {
            let rest = q.checked_sub(&p).unwrap();
            let c = std::cmp::max(mval[&rest].clone(), eta[&rest].clone());
            let v = &eta[&p] * c;
            if v > m {
                m = v;
            }
        }
        let d = &delta[&q];
        let e = if d.is_zero() {
            BigRational::zero()
        } else {
            &m / d
        };
        eta.insert(q.clone(), e);
        mval.insert(q, m);
    }

    let mut violations = Vec::new();
    let mut phi_tilde = BTreeMap::new();
    for q in &outside {
        let terms: Vec<&K> = if delta[q].is_zero() {
            Vec::new()
        } else {
            (0..n)
                .filter_map(|j| res.phi.comp(j).coeff_ref(q))
                .collect()
        };
        let (ok, s) = sum_moduli_le(&terms, &(&sigma[q] * &eta[q]));
        if !ok {
            violations.push(format!("phi~ exceeds sigma*eta at Q={q:?}"));
        }
        phi_tilde.insert(q.clone(), s);
    }

    // phi^(k) counts.
    let kmax = (cap as f64).log2().ceil().max(1.0) as u32;
    let mut omega = Vec::new();
    let mut phi_counts = BTreeMap::new();
    for k in 1..=kmax {
        let om = match oracle.omega_sequence(Some(ideal), k, 1 << k) {
            Ok(seq) => Some(mag_rat(&seq.entries.last().unwrap().omega)),
            Err(GermError::VacuousInf) => None,
            Err(e) => return Err(e),
        };
        let thr = om.as_ref().map(|w| &theta * w);
        omega.push((k, om));
        let mut total: BTreeMap<MultiIndex, u64> = BTreeMap::new();
        for j in 0..n {
            let mut phik: BTreeMap<MultiIndex, u64> = BTreeMap::new();
            let mut mk: BTreeMap<MultiIndex, u64> = BTreeMap::new();
            for q in MultiIndex::up_to_degree(n, 1, cap) {
                if ideal.contains(&q) {
                    continue;
                }
                if q.degree() == 1 {
                    phik.insert(q.clone(), 0);
                    mk.insert(q, 0);
                    continue;
                }
                let psi = match (&delta_mag[&q], &delta_j[&(q.clone(), j)]) {
                    (Some(dq), Some(dj)) if dq.cmp(dj) == std::cmp::Ordering::Equal => match &thr {
                        Some(t) => u64::from(mag_rat(dj) < *t),
                        None => 1,
                    },
                    _ => 0,
                };
                let mut m = 0u64;
                for p in proper_parts(&q) {
                    let rest = q.checked_sub(&p).unwrap();
                    let c = mk[&rest].max(phik[&rest]);
                    m = m.max(phik[&p] + c);
                }
                phik.insert(q.clone(), psi + m);
                mk.insert(q.clone(), m);
                *total.entry(q).or_insert(0) += psi + m;
            }
        }
        for (q, v) in total {
            let deg = q.degree() as u64;
            if deg <= 1u64 << k {
                if v != 0 {
                    violations.push(format!("phi^({k}) nonzero at Q={q:?} with |Q| <= 2^{k}"));
                }
            } else if (v as u128) * (1u128 << k) > 2 * n as u128 * deg as u128 {
                violations.push(format!("phi^({k})(Q={q:?}) = {v} exceeds 2n|Q|/2^{k}"));
            }
            phi_counts.insert((k, q), v);
        }
    }

    Ok(MajorantDiagnostics {
        degree: cap,
        a,
        b,
        theta,
        omega,
        delta,
        eta,
        sigma,
        phi_tilde,
        phi_counts,
        violations,
    })
}
